"""Scenario files: strict YAML schema, validation and the experiment runner."""

from __future__ import annotations

import json
import time
from pathlib import Path
from typing import Any, Literal, Optional, Union, get_args, get_origin

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, ValidationInfo, model_validator

from . import energy as en
from . import geometry as geo
from .errors import CoefficientError, GridError, ScenarioError
from .evolution import IntegratorConfig, run
from .fields import (COEFFICIENT_PRESETS, State, build_grid, coefficient_preset, load_coefficient_table,
                     sample_coefficients, side_mask)
from .operators import assemble_operators

EXPERIMENTS = ("simulate", "decay-fit", "observability", "gcc-check", "hessian-cert", "geodesic-trace")
INITIAL_PRESETS = ("zero", "standing-wave", "gaussian-bump", "random-seeded")
DAMPING_PROFILES = ("none", "collar", "one-edge", "custom")
PHI_KINDS = ("euclidean-distance", "hyperbolic-distance")


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="before")
    @classmethod
    def _drop_unknown(cls, data: Any, info: ValidationInfo):
        # lenient mode: silently ignore keys the schema does not know
        if isinstance(data, dict) and info.context and not info.context.get("strict", True):
            return {k: v for k, v in data.items() if k in cls.model_fields}
        return data


class GridSpec(_Model):
    dim: Literal[1, 2]
    extents: list[float] = Field(default_factory=lambda: [1.0])
    n: list[int] = Field(default_factory=lambda: [64])


class CoefficientSpec(_Model):
    preset: str = "constant"
    params: dict[str, float] = Field(default_factory=dict)
    table: Optional[str] = None


class DampingSpec(_Model):
    profile: Literal["none", "collar", "one-edge", "custom"] = "collar"
    width: float = 0.1
    a: float = 1.0
    b: float = 1.0
    side: Literal["left", "right", "bottom", "top"] = "left"
    mask_file: Optional[str] = None


class FieldSpec(_Model):
    preset: Literal["zero", "standing-wave", "gaussian-bump", "random-seeded"] = "zero"
    amplitude: float = 1.0
    modes: list[int] = Field(default_factory=lambda: [1])
    center: list[float] = Field(default_factory=lambda: [0.5])
    width: float = 0.1


class InitialSpec(_Model):
    u0: FieldSpec = Field(default_factory=FieldSpec)
    v0: FieldSpec = Field(default_factory=FieldSpec)
    u1: FieldSpec = Field(default_factory=FieldSpec)
    v1: FieldSpec = Field(default_factory=FieldSpec)


class IntegratorSpec(_Model):
    dt: float = 1e-3
    T: float = 1.0
    scheme: Literal["crank-nicolson", "backward-euler"] = "crank-nicolson"
    picard_tol: float = 1e-10
    picard_max: int = 50
    coupling: bool = True
    retry_halving: bool = False


class ProbeSpec(_Model):
    nodes: Union[list[int], Literal["energy-only"]] = "energy-only"
    every: int = 1


class DecaySpec(_Model):
    window: list[float] = Field(default_factory=lambda: [0.2, 0.8])


class ObservabilitySpec(_Model):
    samples: int = 32
    T: float = 4.0
    compare: Optional[DampingSpec] = None


class MetricSpec(_Model):
    source: Literal["from-coefficients", "analytic"] = "from-coefficients"
    name: str = "euclidean"
    params: dict[str, float] = Field(default_factory=dict)
    interpolation: Literal["linear", "cubic"] = "linear"


class GCCSpec(_Model):
    metric: MetricSpec = Field(default_factory=MetricSpec)
    # sample counts have no defaults: a GCC verdict depends on them
    directions: int = Field(ge=4)
    stride: int = Field(ge=1)
    t_cap: float = 5.0
    dt: float = 1e-3


class PhiSpec(_Model):
    kind: Literal["euclidean-distance", "hyperbolic-distance"] = "euclidean-distance"
    center: list[float] = Field(default_factory=lambda: [0.0, 0.0])


class RegionSpec(_Model):
    center: list[float]
    radius: float
    samples: int = 9


class HessianSpec(_Model):
    metric: MetricSpec = Field(default_factory=lambda: MetricSpec(source="analytic"))
    phi: PhiSpec = Field(default_factory=PhiSpec)
    regions: list[RegionSpec]
    directions: int = 16
    dt: float = 1e-3
    # distance-based phi is only smooth inside the injectivity radius; this is
    # not checkable numerically, so the scenario has to vouch for it
    injectivity_declared: bool = False

    @model_validator(mode="after")
    def _declared(self):
        if self.phi.kind == "hyperbolic-distance" and not self.injectivity_declared:
            raise ValueError("hessian.phi uses a geodesic distance; set injectivity_declared: true to state "
                             "that every region lies inside the injectivity radius about phi.center")
        return self


class LaunchSpec(_Model):
    x0: list[float]
    v0: list[float]


class GeodesicSpec(_Model):
    metric: MetricSpec = Field(default_factory=lambda: MetricSpec(source="analytic"))
    launches: list[LaunchSpec]
    dt: float = 1e-3
    t_max: float = 1.0
    flow: Literal["geodesic", "hamiltonian"] = "geodesic"
    oracle: Literal["none", "hyperbolic"] = "none"


class Scenario(_Model):
    name: str
    experiment: Literal["simulate", "decay-fit", "observability", "gcc-check", "hessian-cert",
                        "geodesic-trace"]
    seed: int = 0
    grid: GridSpec = Field(default_factory=lambda: GridSpec(dim=1))
    coefficients: CoefficientSpec = Field(default_factory=CoefficientSpec)
    damping: DampingSpec = Field(default_factory=DampingSpec)
    initial: InitialSpec = Field(default_factory=InitialSpec)
    integrator: IntegratorSpec = Field(default_factory=IntegratorSpec)
    probes: ProbeSpec = Field(default_factory=ProbeSpec)
    decay: DecaySpec = Field(default_factory=DecaySpec)
    observability: Optional[ObservabilitySpec] = None
    gcc: Optional[GCCSpec] = None
    hessian: Optional[HessianSpec] = None
    geodesic: Optional[GeodesicSpec] = None
    output_dir: str = "output"

    @model_validator(mode="after")
    def _required_sections(self):
        need = {"observability": self.observability, "gcc-check": self.gcc,
                "hessian-cert": self.hessian, "geodesic-trace": self.geodesic}
        if self.experiment in need and need[self.experiment] is None:
            key = {"gcc-check": "gcc", "hessian-cert": "hessian", "geodesic-trace": "geodesic"}.get(
                self.experiment, self.experiment)
            raise ValueError(f"experiment {self.experiment!r} requires a {key!r} section")
        d = self.grid.dim
        for name in ("extents", "n"):
            val = getattr(self.grid, name)
            if len(val) == 1 and d == 2:
                setattr(self.grid, name, val * 2)
            elif len(val) != d:
                raise ValueError(f"grid.{name} needs {d} entries, got {len(val)}")
        return self


# --------------------------------------------------------------------------
# parsing


def _load_yaml(path):
    try:
        with open(path) as fh:
            return yaml.safe_load(fh)
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc


def parse_scenario(path_or_data, strict=True):
    """Validate a scenario file (or already-loaded mapping).

    Beyond the schema, the grid and coefficients are built once so that
    coefficient-bound violations and an empty or undamped omega are reported
    here rather than mid-run.
    """
    data = path_or_data if isinstance(path_or_data, dict) else _load_yaml(path_or_data)
    if not isinstance(data, dict):
        raise ScenarioError("scenario file must hold a mapping at top level")
    base = None if isinstance(path_or_data, dict) else Path(path_or_data).parent
    try:
        sc = Scenario.model_validate(data, context={"strict": strict})
    except ValidationError as exc:
        raise ScenarioError(f"invalid scenario: {exc}") from exc
    if base is not None:
        sc._base_dir = base
    build_problem(sc)
    return sc


def serialize(sc):
    """Canonical YAML text of a scenario (all defaults filled in)."""
    return yaml.safe_dump(sc.model_dump(mode="json"), sort_keys=True)


def normalize(data, strict=True):
    """Canonical YAML text of raw scenario data (schema defaults filled in, keys sorted)."""
    if not isinstance(data, dict):
        data = _load_yaml(data)
    canon = Scenario.model_validate(data, context={"strict": strict}).model_dump(mode="json")
    return yaml.safe_dump(canon, sort_keys=True)


def _resolve(sc, path):
    base = getattr(sc, "_base_dir", None)
    p = Path(path)
    if not p.is_absolute() and base is not None:
        p = base / p
    return p


DAMPED_EXPERIMENTS = ("decay-fit", "observability")


def build_grid_for(sc, damping=None):
    dmp = damping or sc.damping
    g = sc.grid
    needs_omega = sc.experiment in DAMPED_EXPERIMENTS + ("gcc-check",)
    if dmp.profile == "none":
        if needs_omega:
            raise ScenarioError(f"experiment {sc.experiment!r} needs a damping region (profile is 'none')")
        return build_grid(g.dim, g.extents, g.n, 0.0, damping=False)
    if dmp.profile == "collar":
        return build_grid(g.dim, g.extents, g.n, dmp.width, damping=True)
    if dmp.profile == "one-edge":
        mask = side_mask(g.dim, g.extents, g.n, dmp.width, dmp.side)
        return build_grid(g.dim, g.extents, g.n, 0.0, damping=True, omega_mask=mask)
    if dmp.mask_file is None:
        raise ScenarioError("damping profile 'custom' needs mask_file")
    with open(_resolve(sc, dmp.mask_file)) as fh:
        mask = np.asarray(json.load(fh), dtype=bool)
    return build_grid(g.dim, g.extents, g.n, 0.0, damping=True, omega_mask=mask.reshape(g.n))


def build_coefficients(sc, grid, damping=None):
    dmp = damping or sc.damping
    cs = sc.coefficients
    strict_damping = sc.experiment in DAMPED_EXPERIMENTS
    if cs.table is not None:
        tab = load_coefficient_table(_resolve(sc, cs.table), grid)
        return sample_coefficients(grid, tab["rho"], tab["K"], tab["a"], tab["b"],
                                   require_damping=strict_damping)
    rho_fn, K_fn = coefficient_preset(cs.preset, grid.dim, **cs.params)
    om = grid.omega_mask
    a = np.where(om, dmp.a, 0.0) if dmp.profile != "none" else 0.0
    b = np.where(om, dmp.b, 0.0) if dmp.profile != "none" else 0.0
    return sample_coefficients(grid, rho_fn, K_fn, a, b, require_damping=strict_damping)


def build_problem(sc, damping=None):
    """Grid and coefficients of a scenario; raises :class:`ScenarioError`."""
    if sc.coefficients.preset not in COEFFICIENT_PRESETS and sc.coefficients.table is None:
        raise ScenarioError(f"unknown coefficient preset {sc.coefficients.preset!r}")
    try:
        grid = build_grid_for(sc, damping)
        coeffs = build_coefficients(sc, grid, damping)
    except (GridError, CoefficientError) as exc:
        raise ScenarioError(str(exc)) from exc
    except TypeError as exc:
        raise ScenarioError(f"bad coefficient parameters: {exc}") from exc
    b = coeffs.bounds
    if min(b.alpha0, b.alpha) <= 0:
        raise ScenarioError(f"coefficient bounds must be positive, got {b.as_tuple()}")
    return grid, coeffs


def _field(spec, grid, rng):
    x = grid.node_coords()
    L = np.asarray(grid.extents)
    if spec.preset == "zero":
        out = np.zeros(grid.num_nodes)
    elif spec.preset == "standing-wave":
        modes = list(spec.modes) + [1] * (grid.dim - len(spec.modes))
        out = spec.amplitude * np.prod([np.sin(modes[i] * np.pi * x[:, i] / L[i]) for i in range(grid.dim)],
                                       axis=0)
    elif spec.preset == "gaussian-bump":
        c = np.broadcast_to(np.asarray(spec.center, dtype=float), (grid.dim,))
        out = spec.amplitude * np.exp(-np.sum((x - c) ** 2, axis=1) / (2 * spec.width ** 2))
    else:
        out = spec.amplitude * rng.uniform(-1.0, 1.0, grid.num_nodes)
    out[grid.boundary_mask] = 0.0
    return out


def initial_state(sc, grid):
    """Initial data; random fields draw from child streams of the scenario seed."""
    seq = np.random.SeedSequence(sc.seed)
    rngs = [np.random.default_rng(s) for s in seq.spawn(4)]
    ini = sc.initial
    return State(_field(ini.u0, grid, rngs[0]), _field(ini.v0, grid, rngs[1]),
                 _field(ini.u1, grid, rngs[2]), _field(ini.v1, grid, rngs[3]))


def integrator_config(sc, T=None):
    it = sc.integrator
    return IntegratorConfig(it.dt, it.T if T is None else T, it.scheme, it.picard_tol, it.picard_max,
                            it.coupling)


def metric_for(spec, grid=None, coeffs=None):
    if spec.source == "analytic":
        dim = grid.dim if grid is not None else 2
        return geo.analytic_metric(spec.name, dim=dim, **spec.params)
    return geo.metric_from_coefficients(grid, coeffs, method=spec.interpolation)


def hyperbolic_deviation(path, x0, v0, shift=0.0):
    """Distance of a traced path from the exact half-plane geodesic through ``(x0, v0)``."""
    x = path.x.copy()
    x[:, 1] += shift
    y0 = np.array([x0[0], x0[1] + shift])
    if v0[0] == 0.0:
        return float(np.max(np.abs(x[:, 0] - y0[0])))
    c = y0[0] + y0[1] * v0[1] / v0[0]
    R = np.hypot(y0[0] - c, y0[1])
    return float(np.max(np.abs(np.hypot(x[:, 0] - c, x[:, 1]) - R)))


# --------------------------------------------------------------------------
# running


class Result:
    def __init__(self, status, summary, artifacts=None, values=None):
        self.status = status
        self.summary = summary
        self.artifacts = artifacts or {}
        self.values = values or {}


def _write_json(path, rec):
    with open(path, "w") as fh:
        json.dump(rec, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")


def run_scenario(sc, output_dir=None, seed=None, threads=1, plots=True):
    """Run a validated scenario and write its artifacts.

    Returns a :class:`Result` whose ``summary`` is the one-line report.
    """
    if seed is not None:
        sc = sc.model_copy(update={"seed": int(seed)})
        sc._base_dir = getattr(sc, "_base_dir", None)
    out = Path(output_dir or sc.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = out / sc.name
    handler = {
        "simulate": _run_simulate, "decay-fit": _run_simulate, "observability": _run_observability,
        "gcc-check": _run_gcc, "hessian-cert": _run_hessian, "geodesic-trace": _run_geodesic,
    }[sc.experiment]
    t0 = time.perf_counter()
    res = handler(sc, stem, threads, plots)
    res.values["runtime_s"] = time.perf_counter() - t0
    return res


def _run_simulate(sc, stem, threads, plots):
    grid, coeffs = build_problem(sc)
    ops = assemble_operators(grid, coeffs)
    cfg = integrator_config(sc)
    init = initial_state(sc, grid)
    probes = None if sc.probes.nodes == "energy-only" else {"nodes": sc.probes.nodes, "every": sc.probes.every}
    trace, final = run(init, coeffs, grid, cfg, probes=probes, operators=ops,
                       retry_halving=sc.integrator.retry_halving)
    arts = {"trace": f"{stem}_trace.csv"}
    en.write_trace(trace, arts["trace"], seed=sc.seed)
    if probes is not None:
        arts["probes"] = f"{stem}_probes.csv"
        pr = trace.probes
        cols = [pr["times"][:, None], pr["u"], pr["v"]]
        hdr = ["t"] + [f"u{n}" for n in pr["nodes"]] + [f"v{n}" for n in pr["nodes"]]
        np.savetxt(arts["probes"], np.hstack(cols), delimiter=",",
                   header=f"seed={sc.seed}\n" + ",".join(hdr), fmt="%.17g")
    resid = en.check_identity(trace)
    e0, eT = trace.energy[0], trace.energy[-1]
    values = {"E0": e0, "ET": eT, "identity_residual": resid}
    fit = None
    if sc.experiment == "decay-fit":
        T = trace.times[-1]
        fa, fb = sc.decay.window
        fit = en.fit_decay(trace, (fa * T, fb * T))
        arts["fit"] = f"{stem}_fit.json"
        en.write_fit(fit, arts["fit"], seed=sc.seed,
                     extra={"identity_residual": resid, "E0": e0, "ET": eT})
        values.update(gamma=fit.gamma, C=fit.C, r_squared=fit.r_squared)
        summary = (f"{sc.name}: gamma={fit.gamma:.6g} C={fit.C:.4g} r2={fit.r_squared:.4f} "
                   f"identity_residual={resid:.3e}")
    else:
        rel = abs(eT - e0) / e0 if e0 > 0 else 0.0
        values["relative_energy_change"] = rel
        summary = f"{sc.name}: E(0)={e0:.6g} E(T)={eT:.6g} |dE|/E0={rel:.3e} identity_residual={resid:.3e}"
    if plots:
        arts["plot"] = f"{stem}_energy.svg"
        en.plot_decay(trace, fit, arts["plot"], title=sc.name)
    return Result(0, summary, arts, values)


def _run_observability(sc, stem, threads, plots):
    ob = sc.observability
    cfg = integrator_config(sc, T=ob.T)
    rows = {}
    dampings = [("primary", sc.damping)]
    if ob.compare is not None:
        dampings.append(("compare", ob.compare))
    for label, dmp in dampings:
        grid, coeffs = build_problem(sc, dmp)
        samples = en.random_initial_states(grid, ob.samples, sc.seed)
        res = en.observability_ratio(samples, ob.T, coeffs, grid, cfg, threads=threads)
        rows[label] = {"profile": dmp.profile, "max_ratio": res.max_ratio,
                       "ratios": [float(r) for r in res.ratios], "violations": res.violations}
    arts = {"report": f"{stem}_observability.json"}
    _write_json(arts["report"], {"seed": sc.seed, "T": ob.T, "samples": ob.samples, **rows})
    summary = f"{sc.name}: observability constant {rows['primary']['max_ratio']:.6g}"
    values = {"observability_constant": rows["primary"]["max_ratio"]}
    if "compare" in rows:
        c = rows["compare"]["max_ratio"]
        summary += f" (compare {ob.compare.profile}: {c:.6g})"
        values["compare_constant"] = c
    return Result(0, summary, arts, values)


def _run_gcc(sc, stem, threads, plots):
    grid, coeffs = build_problem(sc)
    gs = sc.gcc
    metric = metric_for(gs.metric, grid, coeffs)
    rep = geo.check_gcc(metric, grid, samples_dir=gs.directions, t_cap=gs.t_cap, dt=gs.dt, stride=gs.stride)
    arts = {"report": f"{stem}_gcc.json"}
    geo.write_gcc_report(rep, arts["report"], seed=sc.seed)
    if plots and grid.dim == 2:
        arts["plot"] = f"{stem}_rays.svg"
        geo.plot_ray_fan(grid, metric, rep, arts["plot"])
    verdict = "satisfied" if rep.satisfied else "NOT satisfied"
    summary = f"{sc.name}: GCC {verdict}; T0_estimate={rep.T0_estimate:.6g} rays={len(rep.hit_times)}"
    return Result(0, summary, arts, {"satisfied": rep.satisfied, "T0_estimate": rep.T0_estimate})


def _phi_bundle(spec, metric_spec):
    if spec.kind == "euclidean-distance":
        return geo.squared_distance(spec.center)
    return geo.hyperbolic_distance_sq(spec.center, shift=metric_spec.params.get("shift", 0.0))


def _run_hessian(sc, stem, threads, plots):
    hs = sc.hessian
    metric = metric_for(hs.metric, *(build_problem(sc) if hs.metric.source != "analytic" else (None, None)))
    bundle = _phi_bundle(hs.phi, hs.metric)
    certs, regions, recs = [], [], []
    for rs in hs.regions:
        reg = geo.disk_region(rs.center, rs.radius, rs.samples)
        cert = geo.escape_certificate(metric, bundle, reg, directions=hs.directions, dt=hs.dt)
        regions.append(reg)
        certs.append(cert)
        recs.append({"center": rs.center, "radius": rs.radius, "certified": cert.certified, "c": cert.c,
                     "bound": cert.bound, "max_exit_time": cert.max_exit_time, "rays": cert.rays,
                     "reason": cert.reason})
    union = geo.union_certificate(certs, regions)
    arts = {"report": f"{stem}_hessian.json"}
    _write_json(arts["report"], {"seed": sc.seed, "regions": recs, "union_certified": union})
    cmin = min(c.c for c in certs)
    summary = f"{sc.name}: escape certificate {'granted' if union else 'refused'}; min Hessian margin {cmin:.6g}"
    return Result(0, summary, arts, {"certified": union, "min_c": cmin})


def _shift(sc):
    # vertical offset of the half-plane model, wherever the medium is defined
    if sc.geodesic.metric.source == "analytic":
        return sc.geodesic.metric.params.get("shift", 0.0)
    return sc.coefficients.params.get("shift", 1.0)


def _run_geodesic(sc, stem, threads, plots):
    gs = sc.geodesic
    grid = coeffs = None
    if gs.metric.source != "analytic":
        grid, coeffs = build_problem(sc)
    metric = metric_for(gs.metric, grid, coeffs)
    arts, devs, drifts = {}, [], []
    for i, ln in enumerate(gs.launches):
        x0 = np.asarray(ln.x0, float)
        v0 = np.asarray(ln.v0, float)
        if gs.flow == "geodesic":
            path = geo.geodesic_flow(metric, x0, v0, gs.dt, gs.t_max, grid=grid, normalize=True)
        else:
            # launch velocities are given in x-space; scale to unit speed and lower the index
            G0 = metric.G(x0[None])[0]
            v = v0 / np.sqrt(v0 @ G0 @ v0)
            path = geo.hamiltonian_flow(metric, x0, G0 @ v, gs.dt, gs.t_max, grid=grid)
        arts[f"path{i}"] = f"{stem}_path{i}.csv"
        geo.write_path(path, arts[f"path{i}"], seed=sc.seed)
        drifts.append(path.speed_drift())
        if gs.oracle == "hyperbolic":
            devs.append(hyperbolic_deviation(path, x0, path.xdot[0], _shift(sc)))
    values = {"max_speed_drift": max(drifts)}
    summary = f"{sc.name}: {len(gs.launches)} paths, max speed drift {max(drifts):.3e}"
    if devs:
        values["max_semicircle_deviation"] = max(devs)
        summary += f", max semicircle deviation {max(devs):.3e}"
    arts["report"] = f"{stem}_geodesics.json"
    _write_json(arts["report"], {"seed": sc.seed, **values})
    return Result(0, summary, arts, values)


# --------------------------------------------------------------------------
# bundled scenarios and reference


def bundled_dir():
    return Path(__file__).parent / "scenarios"


def bundled_scenarios():
    return sorted(p.stem for p in bundled_dir().glob("*.yaml"))


def bundled_path(name):
    p = bundled_dir() / f"{name}.yaml"
    if not p.exists():
        raise ScenarioError(f"no bundled scenario {name!r}; available: {bundled_scenarios()}")
    return p


def _type_name(ann):
    origin, args = get_origin(ann), get_args(ann)
    if origin is Literal:
        return " / ".join(f"`{a}`" for a in args)
    if origin is Union:
        return " or ".join(_type_name(a) for a in args if a is not type(None)) + \
            (" (optional)" if type(None) in args else "")
    if origin is not None:
        return f"{origin.__name__}[{', '.join(_type_name(a) for a in args)}]"
    return getattr(ann, "__name__", str(ann))


def reference_markdown():
    """Markdown table of every scenario key with its type and default."""
    lines = ["# Scenario reference", "",
             "Generated from the schema (`kvwave reference`). Unknown keys are rejected in strict mode.", ""]

    def walk(model, prefix):
        for name, f in model.model_fields.items():
            key = f"{prefix}{name}"
            ann = f.annotation
            sub = None
            for cand in getattr(ann, "__args__", ()) + (ann,):
                if isinstance(cand, type) and issubclass(cand, BaseModel):
                    sub = cand
            if f.is_required():
                default = "required"
            elif f.default_factory is not None:
                try:
                    val = f.default_factory()
                except TypeError:
                    val = None
                default = val.model_dump(mode="json") if isinstance(val, BaseModel) else val
                default = f"`{json.dumps(default)}`" if not isinstance(val, BaseModel) else "(section)"
            else:
                default = f"`{json.dumps(f.default)}`"
            tname = _type_name(ann)
            lines.append(f"| `{key}` | {tname} | {default} |")
            if sub is not None:
                walk(sub, key + ".")

    lines += ["| key | type | default |", "|---|---|---|"]
    walk(Scenario, "")
    lines += ["", "Experiments: " + ", ".join(EXPERIMENTS),
              "", "Coefficient presets: " + ", ".join(sorted(COEFFICIENT_PRESETS)),
              "", "Initial-data presets: " + ", ".join(INITIAL_PRESETS),
              "", "Damping profiles: " + ", ".join(DAMPING_PROFILES),
              "", "Analytic metrics: " + ", ".join(sorted(geo.ANALYTIC_METRICS)), ""]
    return "\n".join(lines)
