"""Experiment orchestration: config schema, validation, and artifact output.

A config is one JSON object with the experiment name, a grid block, an
optional noise block, the experiment-specific block (keyed by the
experiment name), a 64-bit seed and an output directory.  Running an
experiment writes CSV/JSON artifacts plus a manifest; the CSV bodies are a
deterministic function of (config, seed).
"""

from __future__ import annotations

import time
from pathlib import Path

import numpy as np

from kdvb import __version__
from kdvb.spectral import EigenBasis, Field, TorusGrid, sobolev_norm_coeffs
from kdvb.dynamics import BlowUpError, SolverConfig, solve_trajectory
from kdvb.forcing import LocalisedNoiseSpec, MultiplicativeNoiseSpec
from kdvb.sync import (
    NudgingConfig,
    run_nudged_stopped,
    run_sync,
    suggested_K,
)
from kdvb.carleman import (
    ObservabilityProblem,
    build_weights,
    carleman_sides,
    lemma_cl2_sides,
    observability_constant,
    solve_linear_system,
    truncated_observability,
)
from kdvb.control import (
    ControlProblemSpec,
    check_27,
    contraction_test,
    find_threshold_d,
    solve_P,
)
from kdvb.ergodicity import (
    ChainConfig,
    admissible_p_range,
    dual_lipschitz_estimate,
    mixing_rate_fit,
    moment_diagnostics,
    run_chain,
    run_ensemble,
    two_chain_coupling,
)
from kdvb import io as kio
from kdvb import rng as rng_mod

EXPERIMENTS = (
    "simulate", "nudge", "nudged-stopped", "couple", "chain-mix",
    "carleman", "cl2", "observability", "truncated-obs", "control",
    "contraction", "moments",
)


class ConfigError(ValueError):
    """Schema violation; the message names the offending key."""


def _get(block: dict, key: str, kind, path: str, default=...):
    if key not in block:
        if default is not ...:
            return default
        raise ConfigError(f"missing key '{path}.{key}'")
    val = block[key]
    if kind is float and isinstance(val, (int, float)) and not isinstance(
            val, bool):
        return float(val)
    if kind is int and isinstance(val, int) and not isinstance(val, bool):
        return val
    if kind is not None and not isinstance(val, kind):
        raise ConfigError(
            f"key '{path}.{key}' has type {type(val).__name__}, expected "
            f"{getattr(kind, '__name__', kind)}")
    return val


def parse_grid(cfg: dict):
    block = _get(cfg, "grid", dict, "", default={})
    n_points = _get(block, "n_points", int, "grid", default=64)
    dt = _get(block, "dt", float, "grid", default=2e-3)
    try:
        return TorusGrid(n_points), SolverConfig(dt, n_points)
    except ValueError as exc:
        raise ConfigError(f"invalid 'grid' block: {exc}") from exc


def parse_field(block, grid: TorusGrid, path: str) -> Field:
    if block is None:
        return Field.zero(grid)
    kind = _get(block, "kind", str, path)
    if kind == "zero":
        return Field.zero(grid)
    if kind in ("sine", "cosine"):
        amp = _get(block, "amplitude", float, path, default=1.0)
        mode = _get(block, "mode", int, path, default=1)
        fn = np.sin if kind == "sine" else np.cos
        return Field.from_function(grid, lambda x: amp * fn(mode * x))
    if kind == "eigen":
        coords = np.asarray(_get(block, "coords", list, path), dtype=float)
        basis = EigenBasis(grid, len(coords))
        return Field(grid, basis.field_from_vector(coords))
    raise ConfigError(f"key '{path}.kind' must be one of "
                      "zero/sine/cosine/eigen, got " + repr(kind))


def parse_noise(cfg: dict, grid: TorusGrid):
    block = cfg.get("noise")
    if block is None:
        return None
    kind = _get(block, "kind", str, "noise")
    try:
        if kind == "localised":
            return LocalisedNoiseSpec(
                x1=_get(block, "x1", float, "noise"),
                x2=_get(block, "x2", float, "noise"),
                t1=_get(block, "t1", float, "noise"),
                t2=_get(block, "t2", float, "noise"),
                period=_get(block, "period", float, "noise"),
                n_modes=_get(block, "n_modes", int, "noise", default=16),
                b_scale=_get(block, "b_scale", float, "noise", default=1.0))
        if kind == "multiplicative":
            n_modes = _get(block, "n_modes", int, "noise", default=16)
            basis = EigenBasis(grid, n_modes)
            return MultiplicativeNoiseSpec(
                basis,
                _get(block, "mode", str, "noise", default="bounded"),
                beta0=_get(block, "beta0", float, "noise", default=1.0),
                M=_get(block, "M", int, "noise", default=4),
                rho=_get(block, "rho", float, "noise", default=0.5),
                L=_get(block, "L", float, "noise", default=0.1))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"invalid 'noise' block: {exc}") from exc
    raise ConfigError("key 'noise.kind' must be 'localised' or "
                      "'multiplicative', got " + repr(kind))


def _block(cfg: dict, name: str) -> dict:
    return _get(cfg, name, dict, "", default={})


def _eigen_coords(states, grid, K=8):
    basis = EigenBasis(grid, K)
    return basis.vector_from_field(states, K)


# ---------------------------------------------------------------------------
# experiment bodies; each returns a list of artifact file names
# ---------------------------------------------------------------------------


def _run_simulate(cfg, out, grid, scfg, noise, seed):
    blk = _block(cfg, "simulate")
    T = _get(blk, "T", float, "simulate", default=1.0)
    u0 = parse_field(blk.get("u0"), grid, "simulate.u0")
    h = parse_field(blk.get("h"), grid, "simulate.h") if blk.get("h") else None
    if noise is None:
        traj = solve_trajectory(u0, h, T, scfg)
        times, states = traj.times, traj.coeffs
    else:
        period = _get(blk, "window", float, "simulate", default=None) or (
            noise.period if isinstance(noise, LocalisedNoiseSpec) else 1.0)
        n_steps = max(int(round(T / period)), 1)
        chain = run_chain(u0, ChainConfig(period, h, noise, n_steps,
                                          n_points=grid.n_points,
                                          dt=scfg.dt), seed=seed)
        times = np.arange(n_steps + 1) * period
        states = chain.states
    k = grid.wavenumbers
    coords = _eigen_coords(states, grid)
    rows = [[t,
             sobolev_norm_coeffs(states[i], k, 0.0),
             sobolev_norm_coeffs(states[i], k, 1.0),
             *coords[i]] for i, t in enumerate(times)]
    header = ["t", "l2_norm", "h1_norm"] + [f"c{j + 1}" for j in range(8)]
    kio.write_csv(out / "trajectory.csv", header, rows)
    kio.write_snapshot(out / "final_state.bin", states[-1])
    return ["trajectory.csv", "final_state.bin"]


def _run_nudge(cfg, out, grid, scfg, noise, seed):
    blk = _block(cfg, "nudge")
    if noise is not None and not isinstance(noise, MultiplicativeNoiseSpec):
        raise ConfigError("'nudge' needs multiplicative noise or none")
    T = _get(blk, "T", float, "nudge", default=10.0)
    ncfg = NudgingConfig(N=_get(blk, "N", int, "nudge", default=8),
                         lam=_get(blk, "lam", float, "nudge", default=None))
    u0 = parse_field(blk.get("u0"), grid, "nudge.u0")
    v0 = parse_field(blk.get("v0"), grid, "nudge.v0")
    h = parse_field(blk.get("h"), grid, "nudge.h") if blk.get("h") else None
    n_paths = _get(blk, "n_paths", int, "nudge", default=16)
    rep = run_sync(u0, v0, ncfg, noise, h, T, scfg.dt, n_paths=n_paths,
                   seed=seed)
    rows = zip(rep.times, rep.mean_sq_error, rep.gamma.mean(axis=1),
               np.exp(rep.gamma).mean(axis=1) * rep.mean_sq_error)
    kio.write_csv(out / "sync.csv",
                  ["t", "mean_sq_error", "mean_gamma", "mean_lyapunov"],
                  rows)
    kio.write_json(out / "fit.json", {
        "fit": rep.fit, "lambda_N": rep.lambda_N, "lam": ncfg.lam,
        "L_g": rep.L_g, "C0": rep.C0, "n_paths": rep.n_paths})
    return ["sync.csv", "fit.json"]


def _run_nudged_stopped(cfg, out, grid, scfg, noise, seed):
    blk = _block(cfg, "nudged-stopped")
    if not isinstance(noise, MultiplicativeNoiseSpec):
        raise ConfigError("'nudged-stopped' needs a multiplicative noise block")
    T = _get(blk, "T", float, "nudged-stopped", default=10.0)
    N = _get(blk, "N", int, "nudged-stopped", default=4)
    K = blk.get("K", "auto")
    if K == "auto":
        K = suggested_K(_get(blk, "R_star", float, "nudged-stopped",
                             default=10.0))
    elif not isinstance(K, (int, float)) or isinstance(K, bool):
        raise ConfigError("key 'nudged-stopped.K' must be a number or 'auto'")
    ncfg = NudgingConfig(N=N)
    u0 = parse_field(blk.get("u0"), grid, "nudged-stopped.u0")
    v0 = parse_field(blk.get("v0"), grid, "nudged-stopped.v0")
    h = parse_field(blk.get("h"), grid, "nudged-stopped.h") \
        if blk.get("h") else None
    rep = run_nudged_stopped(
        u0, v0, ncfg, noise, float(K), T, scfg.dt, h=h,
        n_paths=_get(blk, "n_paths", int, "nudged-stopped", default=32),
        seed=seed)
    rows = zip(rep.times, rep.w_sq.mean(axis=1),
               rep.obs_integral.mean(axis=1))
    kio.write_csv(out / "nudged.csv",
                  ["t", "mean_sq_error", "mean_obs_integral"], rows)
    kio.write_json(out / "summary.json", {
        "K": float(K), "sync_fraction": rep.sync_fraction,
        "stopped_fraction": float(np.mean(np.isfinite(rep.sigma_K))),
        "mean_shift_sq": float(rep.shift_sq_integral.mean())})
    return ["nudged.csv", "summary.json"]


def _run_couple(cfg, out, grid, scfg, noise, seed):
    blk = _block(cfg, "couple")
    chain = ChainConfig(
        _get(blk, "T", float, "couple", default=0.5),
        parse_field(blk.get("h"), grid, "couple.h") if blk.get("h") else None,
        noise,
        _get(blk, "n_steps", int, "couple", default=8),
        n_points=grid.n_points, dt=scfg.dt)
    mode = _get(blk, "mode", str, "couple", default="shared")
    ncfg = None
    if blk.get("N") is not None:
        ncfg = NudgingConfig(N=_get(blk, "N", int, "couple"))
    res = two_chain_coupling(
        parse_field(blk.get("u0"), grid, "couple.u0"),
        parse_field(blk.get("v0"), grid, "couple.v0"),
        chain, mode=mode,
        n_paths=_get(blk, "n_paths", int, "couple", default=16),
        eps=_get(blk, "eps", float, "couple", default=0.01),
        seed=seed, nudge=ncfg)
    n_paths = res["per_path"].shape[1]
    rows = [[k, d, f, n_paths] for k, (d, f) in enumerate(
        zip(res["distances"], res["fraction_within"]))]
    kio.write_csv(out / "couple.csv",
                  ["k", "distance", "fraction_within", "n_samples"], rows)
    kio.write_json(out / "summary.json", {
        "mode": mode, "eps": res["eps"],
        "final_fraction": float(res["fraction_within"][-1]),
        "final_distance": float(res["distances"][-1])})
    return ["couple.csv", "summary.json"]


def _run_chain_mix(cfg, out, grid, scfg, noise, seed):
    blk = _block(cfg, "chain-mix")
    if not isinstance(noise, LocalisedNoiseSpec):
        raise ConfigError("'chain-mix' needs a localised noise block")
    T = _get(blk, "T", float, "chain-mix", default=noise.period)
    h = parse_field(blk.get("h"), grid, "chain-mix.h") if blk.get("h") else None
    N = _get(blk, "paper_regime_N", int, "chain-mix", default=4)
    n_ref = _get(blk, "n_ref_steps", int, "chain-mix", default=40)
    burn = _get(blk, "burn_in", int, "chain-mix", default=10)
    n_steps = _get(blk, "n_steps", int, "chain-mix", default=4)
    n_paths = _get(blk, "n_paths", int, "chain-mix", default=24)
    K = _get(blk, "K", int, "chain-mix", default=8)
    ref_cfg = ChainConfig(T, h, noise, n_ref, burn, grid.n_points, scfg.dt,
                          paper_regime_N=N)
    ref = run_chain(Field.zero(grid), ref_cfg, seed=seed + 1)
    mu_ref = ref.empirical(K=K, burn_in=burn)
    u0 = parse_field(blk.get("u0"), grid, "chain-mix.u0")
    ens = run_ensemble(u0, ChainConfig(T, h, noise, n_steps,
                                       n_points=grid.n_points, dt=scfg.dt),
                       seed=seed, n_paths=n_paths)
    dists = [dual_lipschitz_estimate(mu_ref,
                                     ens.empirical(K=K, window=(k, k + 1)),
                                     seed=seed)
             for k in range(n_steps + 1)]
    rows = [[k, d, n_paths] for k, d in enumerate(dists)]
    kio.write_csv(out / "distances.csv", ["k", "distance", "n_samples"], rows)
    sigma, C, r2 = mixing_rate_fit(np.array(dists))
    kio.write_json(out / "fit.json",
                   {"sigma": sigma, "C": C, "r2": r2, "K": K, "N": N})
    kio.write_snapshot(out / "reference_cloud.bin",
                       ref.states[burn + 1:])
    return ["distances.csv", "fit.json", "reference_cloud.bin"]


def _random_trig(grid, gen, n_modes=4, amp=1.0):
    c = np.zeros(grid.n_points, dtype=complex)
    for kmode in range(1, n_modes + 1):
        z = amp * (gen.standard_normal() + 1j * gen.standard_normal())
        c[kmode] = z / kmode ** 2
        c[-kmode] = np.conj(c[kmode])
    c[0] = amp * gen.standard_normal()
    return Field(grid, c)


def _run_carleman(cfg, out, grid, scfg, noise, seed):
    blk = _block(cfg, "carleman")
    T = _get(blk, "T", float, "carleman", default=1.0)
    l1 = _get(blk, "l1", float, "carleman", default=1.0)
    l2 = _get(blk, "l2", float, "carleman", default=2.0)
    n_s = _get(blk, "n_s", int, "carleman", default=8)
    w = build_weights(l1, l2, T)
    s0 = w.C0_shift
    gen = rng_mod.stream(seed)
    v0 = (_random_trig(grid, gen) if blk.get("v0") is None
          else parse_field(blk["v0"], grid, "carleman.v0"))
    g = _random_trig(grid, gen, amp=0.5)
    traj = solve_linear_system(v0, None, None, g, T, scfg)
    rows = []
    for s in np.geomspace(s0, 4 * s0, n_s):
        rep = carleman_sides(traj, g, w, s)
        rows.append([s, rep.lhs, rep.rhs, rep.ratio, rep.log_ratio])
    kio.write_csv(out / "carleman.csv",
                  ["s", "lhs", "rhs", "ratio", "log_ratio"], rows)
    kio.write_json(out / "summary.json", {
        "s_min": s0, "max_ratio": max(r[3] for r in rows),
        "max_log_ratio": max(r[4] for r in rows),
        "window": [l1, l2], "T": T})
    return ["carleman.csv", "summary.json"]


def _run_cl2(cfg, out, grid, scfg, noise, seed):
    blk = _block(cfg, "cl2")
    T = _get(blk, "T", float, "cl2", default=1.0)
    l1 = _get(blk, "l1", float, "cl2", default=1.0)
    l2 = _get(blk, "l2", float, "cl2", default=2.0)
    n_q = _get(blk, "n_q", int, "cl2", default=8)
    w = build_weights(l1, l2, T)
    s = _get(blk, "s", float, "cl2", default=w.C0_shift)
    gen = rng_mod.stream(seed)
    rows = []
    for i in range(n_q):
        a = gen.uniform(0.5, 2.0, size=3)
        km = gen.integers(1, 4)

        def q(x, t, a=a, km=km):
            return (a[0] + a[1] * np.sin(km * x)) * np.exp(-a[2] * t)

        rep = lemma_cl2_sides(q, w, s, grid)
        rows.append([i, s, rep.lhs, rep.rhs, rep.ratio])
    kio.write_csv(out / "cl2.csv", ["sample", "s", "lhs", "rhs", "ratio"],
                  rows)
    kio.write_json(out / "summary.json",
                   {"max_ratio": max(r[4] for r in rows), "s": s})
    return ["cl2.csv", "summary.json"]


def _run_observability(cfg, out, grid, scfg, noise, seed):
    blk = _block(cfg, "observability")
    prob = ObservabilityProblem(
        N=_get(blk, "N", int, "observability", default=4),
        T=_get(blk, "T", float, "observability", default=1.0),
        window=tuple(_get(blk, "window", list, "observability",
                          default=[1.0, 2.0])),
        n_points=grid.n_points, dt=scfg.dt)
    res = observability_constant(prob)
    kio.write_json(out / "observability.json", {
        "constant": res["C"], "K": res["K"],
        "refinement_capped": res["refinement_capped"],
        "last_move": res["last_move"],
        "N": prob.N, "T": prob.T, "window": list(prob.window)})
    return ["observability.json"]


def _run_truncated_obs(cfg, out, grid, scfg, noise, seed):
    blk = _block(cfg, "truncated-obs")
    if not isinstance(noise, LocalisedNoiseSpec):
        raise ConfigError("'truncated-obs' needs a localised noise block")
    prob = ObservabilityProblem(
        N=_get(blk, "N", int, "truncated-obs", default=1),
        T=_get(blk, "T", float, "truncated-obs", default=noise.period),
        chi_spec=noise, n_points=grid.n_points, dt=scfg.dt)
    res = truncated_observability(prob)
    hist = res.pop("history", {})
    rows = [[int(m), c] for m, c in sorted(hist.items())]
    kio.write_csv(out / "truncated.csv", ["M", "constant"], rows)
    kio.write_json(out / "summary.json", res)
    return ["truncated.csv", "summary.json"]


def _control_spec(blk, grid, scfg, noise, name):
    if not isinstance(noise, LocalisedNoiseSpec):
        raise ConfigError(f"'{name}' needs a localised noise block")
    return ControlProblemSpec(
        delta=_get(blk, "delta", float, name, default=1e-3),
        N=_get(blk, "N", int, name, default=4),
        m=_get(blk, "m", int, name, default=8),
        chi_spec=noise,
        T=_get(blk, "T", float, name, default=max(1.0, noise.period)),
        n_points=grid.n_points, dt=scfg.dt)


def _run_control(cfg, out, grid, scfg, noise, seed):
    blk = _block(cfg, "control")
    spec = _control_spec(blk, grid, scfg, noise, "control")
    uhat0 = parse_field(blk.get("uhat0"), grid, "control.uhat0")
    h = parse_field(blk.get("h"), grid, "control.h") if blk.get("h") else None
    spec.uhat = solve_trajectory(uhat0, h, spec.T, spec.solver_config)
    v0 = parse_field(blk.get("v0"), grid, "control.v0")
    sol = solve_P(spec, v0)
    w_traj, zeta, J = sol
    rep = check_27(spec, v0, sol)
    coords = _eigen_coords(w_traj.coeffs, grid)
    k = grid.wavenumbers
    rows = [[t, sobolev_norm_coeffs(w_traj.coeffs[i], k, 0.0), *coords[i]]
            for i, t in enumerate(w_traj.times)]
    kio.write_csv(out / "controlled.csv",
                  ["t", "l2_norm"] + [f"c{j + 1}" for j in range(8)], rows)
    kio.write_json(out / "control.json", {
        "zeta": zeta, "J": J, **rep,
        "delta": spec.delta, "N": spec.N, "m": spec.m})
    return ["controlled.csv", "control.json"]


def _run_contraction(cfg, out, grid, scfg, noise, seed):
    blk = _block(cfg, "contraction")
    spec = _control_spec(blk, grid, scfg, noise, "contraction")
    uhat0 = parse_field(blk.get("uhat0"), grid, "contraction.uhat0")
    h = parse_field(blk.get("h"), grid, "contraction.h") \
        if blk.get("h") else None
    direction = parse_field(blk.get("direction"), grid,
                            "contraction.direction")
    if float(direction.sobolev_norm(0.0)) == 0.0:
        gen = rng_mod.stream(seed)
        direction = _random_trig(grid, gen)
    res = find_threshold_d(direction, uhat0, h, spec,
                           d_max=_get(blk, "d_max", float, "contraction",
                                      default=1e-3))
    kio.write_json(out / "contraction.json",
                   {k: v for k, v in res.items() if k != "zeta"})
    return ["contraction.json"]


def _run_moments(cfg, out, grid, scfg, noise, seed):
    blk = _block(cfg, "moments")
    if noise is not None and not isinstance(noise, MultiplicativeNoiseSpec):
        raise ConfigError("'moments' needs multiplicative noise or none")
    chain = ChainConfig(
        _get(blk, "T", float, "moments", default=0.25),
        parse_field(blk.get("h"), grid, "moments.h") if blk.get("h") else None,
        noise,
        _get(blk, "n_steps", int, "moments", default=2),
        n_points=grid.n_points, dt=scfg.dt)
    p = blk.get("p", "mid")
    if p == "mid":
        lo, hi = admissible_p_range(noise)
        p = 0.5 * (lo + hi) if np.isfinite(hi) else lo + 1.0
    elif not isinstance(p, (int, float)) or isinstance(p, bool):
        raise ConfigError("key 'moments.p' must be a number or 'mid'")
    rep = moment_diagnostics(
        parse_field(blk.get("u0"), grid, "moments.u0"), chain, float(p),
        n_paths=_get(blk, "n_paths", int, "moments", default=64), seed=seed)
    rows = zip(rep["times"], rep["moment"], rep["mean_sq"],
               rep["dissipation_lhs"], rep["dissipation_rhs"])
    kio.write_csv(out / "moments.csv",
                  ["t", "moment", "mean_sq", "dissipation_lhs",
                   "dissipation_rhs"], rows)
    kio.write_json(out / "summary.json", {
        "p": float(p), "b": rep["b"],
        "dissipation_ok": rep["dissipation_ok"],
        "bounded_after_burn_in": rep["bounded_after_burn_in"],
        "admissible_range": list(rep["admissible_range"])})
    return ["moments.csv", "summary.json"]


_RUNNERS = {
    "simulate": _run_simulate,
    "nudge": _run_nudge,
    "nudged-stopped": _run_nudged_stopped,
    "couple": _run_couple,
    "chain-mix": _run_chain_mix,
    "carleman": _run_carleman,
    "cl2": _run_cl2,
    "observability": _run_observability,
    "truncated-obs": _run_truncated_obs,
    "control": _run_control,
    "contraction": _run_contraction,
    "moments": _run_moments,
}


def parse_config(cfg: dict):
    """Validates the common blocks; returns (name, grid, scfg, noise, seed, out)."""
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    name = _get(cfg, "experiment", str, "")
    if name not in EXPERIMENTS:
        raise ConfigError(
            f"key '.experiment' must be one of {', '.join(EXPERIMENTS)}")
    seed = _get(cfg, "seed", int, "", default=0)
    if not 0 <= seed < 2 ** 64:
        raise ConfigError("key '.seed' must be a 64-bit nonnegative integer")
    out_dir = _get(cfg, "output_dir", str, "")
    grid, scfg = parse_grid(cfg)
    noise = parse_noise(cfg, grid)
    return name, grid, scfg, noise, seed, Path(out_dir)


def run_experiment(cfg: dict) -> dict:
    """Runs one experiment and writes its artifacts plus a manifest."""
    name, grid, scfg, noise, seed, out = parse_config(cfg)
    out.mkdir(parents=True, exist_ok=True)
    start = time.monotonic()
    artifacts = _RUNNERS[name](cfg, out, grid, scfg, noise, seed)
    manifest = {
        "experiment": name,
        "config": cfg,
        "seed": seed,
        "version": __version__,
        "wall_time_s": time.monotonic() - start,
        "artifacts": sorted(artifacts),
    }
    kio.write_json(out / "manifest.json", manifest)
    return manifest


def validate_config(cfg: dict) -> dict:
    """Dry-run validation and regime checks; returns the active constants."""
    name, grid, scfg, noise, seed, _ = parse_config(cfg)
    report = {"experiment": name, "seed": seed,
              "n_points": grid.n_points, "dt": scfg.dt, "constants": {}}
    if isinstance(noise, MultiplicativeNoiseSpec):
        report["constants"].update(
            {k: v for k, v in noise.constants.items()
             if isinstance(v, (int, float, bool, np.floating))})
    blk = _block(cfg, name)
    for key in ("N",):
        if isinstance(blk.get(key), int):
            ncfg = NudgingConfig(N=blk[key])
            report["constants"]["lambda_N"] = ncfg.lambda_N
            report["constants"]["lam"] = ncfg.lam
    regime = cfg.get("regime")
    if regime is not None:
        target = _get(regime, "target", str, "regime", default=None)
        if target is not None and target not in ("MT", "MT2", "MT3"):
            raise ConfigError("key 'regime.target' must be MT, MT2 or MT3")
        if target == "MT" or name == "chain-mix":
            if not isinstance(noise, LocalisedNoiseSpec):
                raise ConfigError(
                    "mixing regime needs a localised noise block")
            N = _get(regime, "N", int, "regime", default=4)
            if np.any(noise.b[:N] == 0.0):
                raise ConfigError(
                    f"mixing regime needs b_i != 0 for i <= {N}")
        if target in ("MT2", "MT3"):
            if not (isinstance(noise, MultiplicativeNoiseSpec)
                    and noise.mode == "linear"):
                if not isinstance(noise, MultiplicativeNoiseSpec):
                    raise ConfigError(
                        "regime targets MT2/MT3 need multiplicative noise")
            else:
                L3 = noise.constants["L3"]
                cap = 1.0 if target == "MT2" else 1.0 / np.sqrt(5.0)
                if L3 >= cap:
                    raise ConfigError(
                        f"linear noise slope {L3:g} violates the {target} "
                        f"requirement L3 < {cap:g}")
        p = regime.get("p")
        if p is not None:
            lo, hi = admissible_p_range(
                noise if isinstance(noise, MultiplicativeNoiseSpec) else None)
            if not (lo <= float(p) < hi):
                raise ConfigError(
                    f"key 'regime.p' = {p} outside the admissible interval "
                    f"[{lo:g}, {hi:g})")
            report["constants"]["p_interval"] = [lo, hi]
    return report
