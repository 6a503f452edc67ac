"""Command-line entry point: simulate / forward / gradient / check / study.

Runs are described by a JSON config (documented in the README).  Exit
codes: 0 success, 2 config/validation error, 3 numerical-check failure.
Outputs are deterministic for a fixed config and seed: fixed float
formatting, sorted keys, no timestamps.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import experiments, fields, forward, physics, sensitivity
from .errors import ConfigError, RoughwaveError
from .evolution import (
    IntegratorConfig,
    energy_identity_residual,
    export_energy_csv,
    export_snapshots,
    solve_causal,
)
from .fields import PronyKernel, SourceTerm, build_grid
from .operators import DiscreteSystem

COMMANDS = ("simulate", "forward", "gradient", "check", "study")


@dataclass
class RunConfig:
    command: str
    model: dict
    source: dict | None = None
    sources: list[dict] = field(default_factory=list)
    sampler: dict | None = None
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    observed: str | None = None
    study: dict | None = None
    output: str = "out"
    seed: int = 0
    leak_tolerance: float = 1e-6
    snapshot_every: int = 10
    jobs: int = 1
    raw: dict = field(default_factory=dict)


def _need(cfg: dict, key: str, kind, where: str):
    if key not in cfg:
        raise ConfigError("required field is missing", field=f"{where}.{key}")
    value = cfg[key]
    if kind is float and isinstance(value, int):
        value = float(value)
    if not isinstance(value, kind):
        raise ConfigError(f"expected {getattr(kind, '__name__', kind)}, got {type(value).__name__}",
                          field=f"{where}.{key}")
    return value


def parse_config(path: str) -> RunConfig:
    """Load and validate a run configuration, filling defaults."""
    if not os.path.exists(path):
        raise ConfigError(f"config file {path!r} does not exist", field="config")
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"not valid JSON: {exc}", field="config") from exc
    command = _need(raw, "command", str, "config")
    if command not in COMMANDS:
        raise ConfigError(
            f"unknown command {command!r}; valid commands are {', '.join(COMMANDS)}",
            field="config.command",
        )
    model = _need(raw, "model", dict, "config")
    if "path" not in model:
        _need(model, "type", str, "config.model")
        if model["type"] not in ("acoustic", "viscoelastic"):
            raise ConfigError("model type must be 'acoustic' or 'viscoelastic'",
                              field="config.model.type")
        _need(model, "grid", dict, "config.model")
    integ_raw = raw.get("integrator", {})
    integrator = IntegratorConfig(
        scheme=integ_raw.get("scheme", "implicit_midpoint"),
        tolerance=float(integ_raw.get("tolerance", 1e-9)),
        max_iterations=int(integ_raw.get("max_iterations", 200)),
        cfl_safety=float(integ_raw.get("cfl_safety", 0.5)),
        store_stride=int(integ_raw.get("store_stride", 1)),
    )
    sources = raw.get("sources", [])
    source = raw.get("source")
    if command in ("simulate", "forward", "gradient") and source is None and not sources:
        raise ConfigError("required field is missing", field="config.source")
    if command == "gradient" and "observed" not in raw:
        raise ConfigError("gradient runs need observed data", field="config.observed")
    if command == "study":
        study = _need(raw, "study", dict, "config")
        _need(study, "kind", str, "config.study")
    if command in ("forward", "gradient") and raw.get("sampler") is None:
        raise ConfigError("required field is missing", field="config.sampler")
    return RunConfig(
        command=command,
        model=model,
        source=source,
        sources=sources,
        sampler=raw.get("sampler"),
        integrator=integrator,
        observed=raw.get("observed"),
        study=raw.get("study"),
        output=raw.get("output", "out"),
        seed=int(raw.get("seed", 0)),
        leak_tolerance=float(raw.get("leak_tolerance", 1e-6)),
        snapshot_every=int(raw.get("snapshot_every", 10)),
        jobs=int(raw.get("jobs", 1)),
        raw=raw,
    )


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------


def _build_grid(spec: dict) -> fields.Grid:
    return build_grid(
        dim=_need(spec, "dim", int, "config.model.grid"),
        cells_per_axis=_need(spec, "cells", list, "config.model.grid"),
        extent=spec.get("extent", 1.0),
        dt=_need(spec, "dt", (int, float), "config.model.grid"),
        t_end=_need(spec, "t_end", (int, float), "config.model.grid"),
        origin=spec.get("origin", 0.0),
    )


def _per_cell(spec, grid: fields.Grid, what: str) -> np.ndarray:
    if isinstance(spec, (int, float)):
        return np.full(grid.n_cells, float(spec))
    if isinstance(spec, list):
        arr = np.asarray(spec, dtype=float)
        if arr.size != grid.n_cells:
            raise ConfigError(f"array length {arr.size} != cell count {grid.n_cells}", field=what)
        return arr
    if isinstance(spec, dict) and "two_layer" in spec:
        tl = spec["two_layer"]
        coord = grid.centers()[:, int(tl.get("axis", 0))]
        return np.where(coord >= float(tl.get("interface", 0.5)),
                        float(_need(tl, "right", (int, float), what)),
                        float(_need(tl, "left", (int, float), what)))
    raise ConfigError("expected a number, array, or {'two_layer': ...}", field=what)


def _build_kernel(spec: dict | None, grid: fields.Grid, k: int):
    if not spec or spec.get("type", "zero") == "zero":
        return None
    if spec["type"] == "prony":
        weights, taus = [], []
        for term in _need(spec, "terms", list, "config.model.kernel"):
            scale = float(_need(term, "scale", (int, float), "config.model.kernel.terms"))
            taus.append(float(_need(term, "tau", (int, float), "config.model.kernel.terms")))
            weights.append(np.tile(scale * np.eye(k), (grid.n_cells, 1, 1)))
        return PronyKernel(weights=tuple(weights), taus=tuple(taus))
    raise ConfigError("kernel type must be 'zero' or 'prony'", field="config.model.kernel.type")


def build_model(spec: dict):
    if "path" in spec:
        return physics.load_model(spec["path"])
    grid = _build_grid(spec["grid"])
    if spec["type"] == "acoustic":
        return physics.AcousticModel(
            grid=grid,
            kappa=_per_cell(_need(spec, "kappa", object, "config.model"), grid, "config.model.kappa"),
            rho=_per_cell(_need(spec, "rho", object, "config.model"), grid, "config.model.rho"),
        )
    m = physics.kelvin_dim(grid.dim)
    lam = float(_need(spec, "lam", (int, float), "config.model"))
    mu = float(spec.get("mu", 0.0))
    gamma_e = np.tile(physics.isotropic_inverse_hooke(lam, mu, grid.dim), (grid.n_cells, 1, 1))
    kern_spec = spec.get("kernel")
    kernel = None
    if kern_spec and kern_spec.get("type") == "prony":
        weights, taus = [], []
        for term in kern_spec["terms"]:
            weights.append(np.tile(float(term["scale"]) * np.eye(m), (grid.n_cells, 1, 1)))
            taus.append(float(term["tau"]))
        kernel = PronyKernel(weights=tuple(weights), taus=tuple(taus))
    return physics.ViscoelasticModel(
        grid=grid, rho=_per_cell(spec.get("rho", 1.0), grid, "config.model.rho"),
        gamma_elastic=gamma_e, gamma_kernel=kernel,
    )


def build_system(cfg: RunConfig):
    model = build_model(cfg.model)
    boundary = cfg.model.get("boundary", "periodic")
    if isinstance(model, physics.AcousticModel):
        kernel = _build_kernel(cfg.model.get("kernel"), model.grid, model.k)
        return model, physics.acoustics_system(model, boundary=boundary, kernel=kernel)
    return model, physics.viscoelastic_system(model, boundary=boundary)


def build_source(spec: dict, system: DiscreteSystem) -> SourceTerm:
    kind = spec.get("type", "ricker")
    grid, k = system.grid, system.k
    center = _need(spec, "center", list, "config.source")
    common = dict(
        grid=grid, k=k, center=center,
        onset=float(spec.get("onset", 0.0)),
        amplitude=float(spec.get("amplitude", 1.0)),
        component=int(spec.get("component", 0)),
        footprint_width=spec.get("footprint_width"),
    )
    if kind == "ricker":
        return fields.make_ricker_source(
            peak_frequency=float(_need(spec, "frequency", (int, float), "config.source")),
            delay=spec.get("delay"), **common,
        )
    if kind == "burst":
        return fields.make_burst_source(
            frequency=float(_need(spec, "frequency", (int, float), "config.source")),
            smoothness=int(spec.get("smoothness", 2)), **common,
        )
    raise ConfigError("source type must be 'ricker' or 'burst'", field="config.source.type")


def build_sampler_from_spec(spec: dict, system: DiscreteSystem) -> forward.Sampler:
    return forward.build_sampler(
        receivers=_need(spec, "receivers", list, "config.sampler"),
        tag=spec.get("tag", "pressure"),
        grid=system.grid,
        k=system.k,
        normal=spec.get("normal"),
    )


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _cmd_simulate(cfg: RunConfig) -> int:
    model, system = build_system(cfg)
    source = build_source(cfg.source or cfg.sources[0], system)
    traj = solve_causal(system, source, cfg.integrator)
    os.makedirs(cfg.output, exist_ok=True)
    export_energy_csv(traj, os.path.join(cfg.output, "energy.csv"))
    export_snapshots(traj, os.path.join(cfg.output, "snapshots"), system.k, every=cfg.snapshot_every)
    res = energy_identity_residual(traj, system, source)
    print(f"simulate: {traj.n_steps} steps, final energy {traj.energies[-1]:.6e}, "
          f"max energy-identity residual {np.abs(res).max():.3e}")
    return 0


def _cmd_forward(cfg: RunConfig) -> int:
    model, system = build_system(cfg)
    sampler = build_sampler_from_spec(cfg.sampler, system)
    specs = cfg.sources if cfg.sources else [cfg.source]
    sources = [build_source(s, system) for s in specs]
    shots = forward.forward_map_shots(system, sources, sampler, cfg.integrator, jobs=cfg.jobs)
    os.makedirs(cfg.output, exist_ok=True)
    for i, seis in enumerate(shots):
        forward.save_seismogram_csv(seis, os.path.join(cfg.output, f"seismogram_{i:03d}.csv"))
    print(f"forward: wrote {len(shots)} seismogram(s) with {sampler.n_channels} channel(s)")
    return 0


def _cmd_gradient(cfg: RunConfig) -> int:
    model, system = build_system(cfg)
    sampler = build_sampler_from_spec(cfg.sampler, system)
    specs = cfg.sources if cfg.sources else [cfg.source]
    observed = forward.load_observed_data(cfg.observed)
    os.makedirs(cfg.output, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    total = None
    j_total = 0.0
    worst_dot = 0.0
    # deterministic accumulation in fixed source order
    for spec in specs:
        source = build_source(spec, system)
        report = sensitivity.misfit_gradient(
            system, source, sampler, observed, cfg.integrator, dot_test_rng=rng
        )
        j_total += report.objective
        worst_dot = max(worst_dot, report.diagnostics.get("dot_product_residual", 0.0))
        if total is None:
            total = report
        else:
            total.g_a += report.g_a
            total.g_b += report.g_b
            total.g_q = tuple(g + r for g, r in zip(total.g_q, report.g_q))
    total.objective = j_total
    total.diagnostics["dot_product_residual"] = worst_dot
    sensitivity.save_gradient_report(total, system, os.path.join(cfg.output, "gradient"))
    print(f"gradient: J = {j_total:.10e}, dot-product diagnostic = {worst_dot:.3e}")
    return 0 if worst_dot < 1e-8 else 3


def _cmd_study(cfg: RunConfig) -> int:
    model, system = build_system(cfg)
    kind = cfg.study["kind"]
    os.makedirs(cfg.output, exist_ok=True)
    if kind == "measure_convergence":
        source = build_source(cfg.source or cfg.sources[0], system)
        rough = (model.coefficient_field() if isinstance(model, physics.AcousticModel)
                 else None)
        if rough is None:
            raise ConfigError("measure_convergence studies need an acoustic model",
                              field="config.study.kind")
        report = experiments.measure_convergence_study(
            rough, source, cfg.study.get("schedule", [4, 8, 16, 32]), cfg.integrator,
        )
    elif kind == "trace_regularity":
        receivers = cfg.study.get("receivers") or cfg.sampler["receivers"]
        center = cfg.study.get("center", [0.5] * model.grid.dim)
        freq = float(cfg.study.get("frequency", 4.0))

        def factory(grid, s):
            return fields.make_burst_source(grid, model.k, center, frequency=freq, smoothness=s)

        report = experiments.trace_regularity_probe(
            model, receivers, factory,
            smoothness_schedule=cfg.study.get("smoothness", [1, 2, 3]),
            refinements=int(cfg.study.get("refinements", 2)),
            config=cfg.integrator,
        )
    else:
        raise ConfigError("study kind must be 'measure_convergence' or 'trace_regularity'",
                          field="config.study.kind")
    report.save(os.path.join(cfg.output, f"study_{kind}"))
    print(f"study {kind}: passed = {report.passed}")
    return 0 if report.passed else 3


# ---------------------------------------------------------------------------
# the `check` invariant suite
# ---------------------------------------------------------------------------


def _fsum_dot(x: np.ndarray, y: np.ndarray) -> float:
    import math

    return math.fsum((x * y).tolist())


def run_checks(cfg: RunConfig) -> list[tuple[str, bool, str]]:
    """Exercise every module invariant at desk scale on the configured system."""
    from dataclasses import replace as dc_replace

    from .evolution import step_residuals
    from .fields import make_ricker_source, mollify_field

    rng = np.random.default_rng(cfg.seed)
    model, system = build_system(cfg)
    grid, k = system.grid, system.k
    results: list[tuple[str, bool, str]] = []

    def record(name: str, ok: bool, detail: str):
        results.append((name, bool(ok), detail))

    # operators: skew-symmetry, mass bounds
    worst = 0.0
    for _ in range(20):
        u = rng.standard_normal(system.n_state)
        v = rng.standard_normal(system.n_state)
        s = abs(_fsum_dot(system.skew.apply(u), v) + _fsum_dot(u, system.skew.apply(v)))
        worst = max(worst, s / (np.linalg.norm(u) * np.linalg.norm(v)))
    record("skew_symmetry", worst <= 1e-12, f"max |<Pu,v>+<u,Pv>|/(|u||v|) = {worst:.2e}")

    rq = []
    for _ in range(20):
        u = rng.standard_normal(system.n_state)
        rq.append(float(u @ system.mass.apply(u)) / float(u @ u))
    lo, hi = system.mass.eig_lo, system.mass.eig_hi
    ok = min(rq) >= lo - 1e-10 and max(rq) <= hi + 1e-10
    record("mass_rayleigh_bounds", ok, f"quotients in [{min(rq):.4g}, {max(rq):.4g}] vs [{lo:.4g}, {hi:.4g}]")

    # fields: mollifier preservation + measure pseudo-metric
    if isinstance(model, physics.AcousticModel):
        f0 = model.coefficient_field()
        sm = mollify_field(f0, 4)
        eig0 = np.linalg.eigvalsh(f0.a)
        eig1 = np.linalg.eigvalsh(sm.a)
        ok = eig1.min() >= eig0.min() - 1e-12 and eig1.max() <= eig0.max() + 1e-12
        record("mollify_preserves_bounds", ok,
               f"[{eig1.min():.4g}, {eig1.max():.4g}] within [{eig0.min():.4g}, {eig0.max():.4g}]")
        eps = 0.1 * max(float(f0.a.max() - f0.a.min()), 1e-3)
        d13 = fields.measure_distance(f0, sm, 2 * eps)
        d12 = fields.measure_distance(f0, f0, eps)
        d23 = fields.measure_distance(f0, sm, eps)
        record("measure_pseudo_metric", d13 <= d12 + d23 + 1e-15 and d12 == 0.0,
               f"d(f,g;2e)={d13:.4g} <= {d12 + d23:.4g}")

    # evolution: causality, determinism, conservation, identity residual
    center = [grid.origin[a] + 0.5 * grid.extent[a] for a in range(grid.dim)]
    speed = physics.max_wavespeed(system)
    duration = grid.dt * grid.n_steps
    peak_frequency = max(4.0 / max(grid.extent), 3.0 / duration)
    src = make_ricker_source(grid, k, center, peak_frequency=peak_frequency,
                             onset=0.05 * duration, amplitude=1.0)
    traj = solve_causal(system, src, cfg.integrator)
    pre_onset = traj.times < src.onset
    quiet = float(np.abs(traj.states[pre_onset]).max()) if pre_onset.any() else 0.0
    record("solve_causality", quiet == 0.0, f"max |u| before onset = {quiet:.1e}")

    traj2 = solve_causal(system, src, cfg.integrator)
    gap = float(np.abs(traj.states - traj2.states).max())
    record("solve_determinism", gap <= 1e-14, f"repeat-solve gap = {gap:.1e}")

    res = np.abs(step_residuals(traj, system, src)).max()
    record("step_residuals", res <= 1e-8 * max(1.0, float(np.abs(traj.states).max())),
           f"max half-step equation residual = {res:.2e}")

    eres = np.abs(energy_identity_residual(traj, system, src)).max()
    scale = max(traj.energies.max(), 1e-30)
    record("energy_identity", eres <= 2e-2 * scale, f"max residual {eres:.2e} vs energy {scale:.2e}")

    # forward: sampler adjoint identity and forward linearity
    receivers = [center]
    try:
        sampler = (build_sampler_from_spec(cfg.sampler, system) if cfg.sampler
                   else forward.build_sampler(receivers, "pressure", grid, k))
    except RoughwaveError:
        sampler = None
    if sampler is not None:
        u = rng.standard_normal(system.n_state)
        r = rng.standard_normal(sampler.n_channels)
        lhs = float(sampler.matrix @ u @ r)
        rhs = float(u @ (sampler.matrix.T @ r))
        rel = abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300)
        record("sampler_adjoint_identity", rel <= 1e-12, f"relative gap = {rel:.1e}")

        seis1 = forward.sample_trajectory(sampler, traj)
        src3 = dc_replace(src, footprint=3.0 * src.footprint)
        seis3 = forward.sample_trajectory(sampler, solve_causal(system, src3, cfg.integrator))
        lin = float(np.abs(seis3.data - 3.0 * seis1.data).max())
        record("forward_linearity", lin <= 1e-10 * max(1.0, float(np.abs(seis3.data).max())),
               f"|F(3f) - 3F(f)| = {lin:.1e}")

        # sensitivity: linearity, dot product, gradient symmetry
        if system.memory.is_zero or isinstance(system.memory.kernel, PronyKernel):
            pert = sensitivity.random_perturbation(system, rng)
            du1 = sensitivity.directional_derivative(system, traj, pert, cfg.integrator)
            pert2 = sensitivity.CoefficientPerturbation(
                delta_a=2 * pert.delta_a, delta_b=2 * pert.delta_b,
                delta_weights=None if pert.delta_weights is None
                else tuple(2 * w for w in pert.delta_weights),
            )
            du2 = sensitivity.directional_derivative(system, traj, pert2, cfg.integrator)
            lin = float(np.abs(du2.states - 2 * du1.states).max())
            record("derivative_linearity", lin <= 1e-10 * max(1.0, float(np.abs(du2.states).max())),
                   f"|du(2m) - 2 du(m)| = {lin:.1e}")

            rel = sensitivity.dot_product_test(system, traj, sampler, rng, config=cfg.integrator)
            record("adjoint_dot_product", rel <= 1e-8, f"relative error = {rel:.2e}")

            obs = forward.sample_trajectory(sampler, traj)
            report = sensitivity.misfit_gradient(system, src, sampler, obs, cfg.integrator)
            sym = float(np.abs(report.g_a - np.swapaxes(report.g_a, 1, 2)).max())
            zero = float(np.abs(report.g_a).max() + np.abs(report.g_b).max()
                         + sum(np.abs(g).max() for g in report.g_q))
            record("gradient_symmetry", sym == 0.0, f"asymmetry = {sym:.1e}")
            record("zero_residual_zero_gradient",
                   report.objective == 0.0 and zero == 0.0,
                   f"J = {report.objective:.1e}, |g| = {zero:.1e}")

    # experiments: two-sided cone check (the intruding cone is anchored at the
    # emission peak so the pulse delay cannot mask the overlap)
    if speed > 0 and grid.dim == 1:
        onset = src.onset
        quiet_cone = experiments.cone_from_speed(center, onset, speed, margin=0.1)
        leak_quiet = experiments.cone_leak(traj, quiet_cone, system)
        t_peak = onset + 1.5 / peak_frequency
        fast = experiments.ConeSpec(apex_x=tuple(center), apex_t=t_peak,
                                    slowness=(1.1 / speed))
        leak_fast = experiments.cone_leak(traj, fast, system)
        record("cone_two_sided", leak_quiet <= cfg.leak_tolerance and leak_fast > 1e-3,
               f"quiet leak {leak_quiet:.2e} vs intruding leak {leak_fast:.2e}")

        tau0 = 1.0 / speed
        neg = physics.slowness_pencil_min_eig(system, 0.95 * tau0)
        pos = physics.slowness_pencil_min_eig(system, 1.05 * tau0)
        record("slowness_pencil_two_sided", neg < 0 <= pos + 1e-12,
               f"min eig at 0.95/c: {neg:.2e}, at 1.05/c: {pos:.2e}")

    # physics: viscoelastic split and Christoffel speed
    ve_grid = build_grid(1, [8], 1.0, 1e-3, 1e-2)
    m = physics.kelvin_dim(1)
    gamma_e = np.tile(physics.isotropic_inverse_hooke(1.2, 0.0, 1), (ve_grid.n_cells, 1, 1))
    kern = PronyKernel(weights=(np.tile(0.3 * np.eye(m), (ve_grid.n_cells, 1, 1)),), taus=(0.5,))
    ve = physics.ViscoelasticModel(grid=ve_grid, rho=1.0, gamma_elastic=gamma_e, gamma_kernel=kern)
    err = physics.kernel_split_reconstruction_error(ve)
    record("ve_kernel_split", err <= 1e-8, f"reconstruction error = {err:.2e}")

    grid2 = build_grid(2, [4, 4], 1.0, 1e-3, 1e-2)
    lam_mu_rho = (2.0, 1.0, 1.25)
    gamma_e2 = np.tile(physics.isotropic_inverse_hooke(lam_mu_rho[0], lam_mu_rho[1], 2),
                       (grid2.n_cells, 1, 1))
    ve2 = physics.ViscoelasticModel(grid=grid2, rho=lam_mu_rho[2], gamma_elastic=gamma_e2)
    cp = physics.max_wavespeed(ve2)
    cp_ref = np.sqrt((lam_mu_rho[0] + 2 * lam_mu_rho[1]) / lam_mu_rho[2])
    record("christoffel_quasi_p", abs(cp - cp_ref) / cp_ref <= 5e-3,
           f"sampled {cp:.6g} vs closed form {cp_ref:.6g}")

    return results


def _cmd_check(cfg: RunConfig) -> int:
    results = run_checks(cfg)
    failed = 0
    for name, ok, detail in results:
        print(f"{name}: {'PASS' if ok else 'FAIL'} ({detail})")
        failed += 0 if ok else 1
    print(f"check: {len(results) - failed}/{len(results)} properties passed")
    return 0 if failed == 0 else 3


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def run(cfg: RunConfig) -> int:
    handlers = {
        "simulate": _cmd_simulate,
        "forward": _cmd_forward,
        "gradient": _cmd_gradient,
        "check": _cmd_check,
        "study": _cmd_study,
    }
    return handlers[cfg.command](cfg)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="roughwave",
        description="Wave solver and inverse-problem sensitivity toolkit for rough media",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="path to a JSON run configuration")
    parser.add_argument("--jobs", type=int, default=None, help="parallel shots for forward runs")
    parser.add_argument("--out", default=None, help="output directory (overrides config)")
    parser.add_argument("--seed", type=int, default=None, help="seed for randomized checks")
    args = parser.parse_args(argv)
    try:
        cfg = parse_config(args.config)
        if cfg.command != args.command:
            raise ConfigError(
                f"config declares command {cfg.command!r} but {args.command!r} was requested",
                field="config.command",
            )
        if args.out is not None:
            cfg.output = args.out
        if args.seed is not None:
            cfg.seed = args.seed
        if args.jobs is not None:
            cfg.jobs = args.jobs
        return run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except RoughwaveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
