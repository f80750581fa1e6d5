"""Command-line entry point: scenario orchestration with reproducible runs.

Subcommands: simulate, tomo, fit-baths, budget, calibrate-gain, sweep.
Every output file embeds the config hash and the seed; identical
(config, seed) pairs produce byte-identical numeric outputs.  Exit codes:
0 success, 2 config error, 3 convergence error, 4 data error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bathfit import (
    BathFitter,
    emission_trace_from_csv,
    emission_trace_to_csv,
    forward_emission,
)
from .config import (
    build_envelope,
    build_gate,
    build_params,
    build_pulse,
    config_hash,
    merged_config,
    resolve_baths,
)
from .engine import BathSchedule
from .errors import ConfigError, ConvergenceError, InvalidDataError, MopairError
from .sampling import NumberDistribution, binomial_dilute, simulate_experiment
from .temporal import envelope_to_csv, simulate_traces, trace_to_csv
from .tomography import (
    HeraldBudget,
    SampleSet,
    bootstrap,
    calibrate_gain,
    chunked_inversion,
    g2_cc,
    herald_budget,
    noise_occupancy_from_reference,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CONVERGENCE = 3
EXIT_DATA = 4


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="mopair",
        description="Microwave-optical photon pair simulation and heterodyne tomography",
    )
    ap.add_argument("--version", action="version", version=f"mopair {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, default=None, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="master RNG seed")
        p.add_argument("--out", type=Path, default=None, help="output directory")
        p.add_argument("--fock-dim", type=int, default=None, help="per-mode Fock truncation")
        p.add_argument("--nondeterministic", action="store_true",
                       help="allow running without an explicit seed")

    p = sub.add_parser("simulate", help="heralded-emission simulation with trace outputs")
    common(p)
    p.add_argument("--power-sweep", type=str, default=None,
                   help="comma-separated peak intracavity occupations")

    p = sub.add_parser("sweep", help="pump power sweep of the cross-correlation")
    common(p)
    p.add_argument("--power-sweep", type=str, default="0.8,2,5,12")

    p = sub.add_parser("tomo", help="moment inversion and correlation report")
    common(p)
    p.add_argument("--synthesize", action="store_true",
                   help="generate samples from the configured distributions")
    p.add_argument("--samples", type=Path, default=None,
                   help="CSV of recorded samples (re_v, im_v, kind, chunk_id)")
    p.add_argument("--source-summary", type=Path, default=None,
                   help="summary.json of a simulate run to take distributions from")
    p.add_argument("--trials", type=int, default=None, help="conditional trial count")
    p.add_argument("--bootstrap", type=int, default=None, help="bootstrap resamples")

    p = sub.add_parser("fit-baths", help="invert bath schedules from emission traces")
    common(p)
    p.add_argument("--traces", type=Path, default=None,
                   help="CSV with delay_s, quanta, condition rows for both conditions")
    p.add_argument("--synthesize", action="store_true",
                   help="round-trip demo: forward-model traces from config knots, then fit")

    p = sub.add_parser("budget", help="optical heralding click budget")
    common(p)

    p = sub.add_parser("calibrate-gain", help="amplification chain gain calibration")
    common(p)
    return ap


def _setup(args, need_seed: bool = True):
    overrides = {}
    if args.fock_dim is not None:
        overrides.setdefault("engine", {})["fock_dim"] = args.fock_dim
    cfg = merged_config(args.config, overrides)
    seed = args.seed if args.seed is not None else cfg["run"]["seed"]
    if seed is None:
        if args.nondeterministic:
            seed = int(time.time_ns() % 2**31)
        elif need_seed:
            raise ConfigError("no seed given: pass --seed N or --nondeterministic")
        else:
            seed = 0  # command draws no randomness; keep outputs byte-stable
    out = args.out if args.out is not None else Path(cfg["run"]["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return cfg, int(seed), out


def _stamp(path: Path, chash: str, seed: int) -> None:
    """Prepend the provenance comment line to a CSV file."""
    body = path.read_text(encoding="utf-8")
    path.write_text(f"# config_hash={chash} seed={seed}\n{body}", encoding="utf-8")


def _write_json(path: Path, payload: dict, chash: str, seed: int) -> None:
    payload = dict(payload)
    payload["config_hash"] = chash
    payload["seed"] = seed
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _run_simulation(cfg, dims, conditional=True, baths=None, tau_grid=None,
                    grid_nt=None, grid_ntau=None, compute_extraction=True):
    params = build_params(cfg)
    pulse = build_pulse(cfg)
    env = build_envelope(cfg)
    gate = build_gate(cfg)
    if baths is None:
        baths = resolve_baths(cfg, params, pulse)
    budget = _budget_from_config(cfg)
    eng = cfg["engine"]
    if tau_grid is None:
        tau_grid = np.arange(eng["trace_start_s"], eng["trace_stop_s"] + 1e-15,
                             eng["trace_step_s"])
    sim = simulate_traces(
        params, pulse, baths, env, gate=gate,
        dcr_fraction=budget.fractions["dcr"], leak_fraction=budget.fractions["leakage"],
        tau_grid=tau_grid, dims=dims, dt=eng["dt_s"],
        n_jumps=eng["jump_samples"],
        grid_nt=grid_nt or eng["grid_nt"], grid_ntau=grid_ntau or eng["grid_ntau"],
        compute_extraction=compute_extraction, conditional=conditional,
    )
    return sim, params, pulse, env, gate, baths, budget


def _budget_from_config(cfg) -> HeraldBudget:
    b = cfg["budget"]
    return herald_budget(b["signal_rate_hz"], b["thermal_rate_hz"], b["dcr_hz"],
                         b["leak_rate_hz"], cfg["gate"]["duration_s"],
                         1.0 / cfg["pulse"]["rep_period_s"])


def _simulation_summary(sim, budget) -> dict:
    from .reporting import summarize_simulation

    report = summarize_simulation(sim)
    out = report.to_dict()
    out["budget"] = {k: float(v) for k, v in budget.fractions.items()}
    out["p_click"] = budget.p_click
    out["r_click_hz"] = budget.r_click
    return out


def cmd_simulate(args) -> int:
    cfg, seed, out = _setup(args, need_seed=False)
    chash = config_hash(cfg)
    dims = (cfg["engine"]["fock_dim"], cfg["engine"]["fock_dim"])

    powers = None
    if getattr(args, "power_sweep", None):
        powers = [float(x) for x in args.power_sweep.split(",") if x.strip()]
    if powers:
        return _sweep(cfg, seed, out, chash, dims, powers)

    if cfg["pulse"]["n_a_peak"] == 0.0 and _budget_from_config(cfg).noise_fraction == 0.0:
        print("warning: zero pump and zero noise clicks: no conditional data possible",
              file=sys.stderr)
        sim, params, pulse, env, gate, baths, budget = _run_simulation(
            cfg, dims, conditional=False, compute_extraction=False)
        eta = None
    else:
        sim, params, pulse, env, gate, baths, budget = _run_simulation(cfg, dims)
        eta = sim.extraction
        if sim.kernels.jump_weights.sum() == 0.0:
            print("warning: zero pair-scattering weight: conditional trace carries "
                  "no information (noise clicks only)", file=sys.stderr)

    trace_to_csv(out / "traces.csv", [sim.unconditional, sim.conditional])
    _stamp(out / "traces.csv", chash, seed)
    envelope_to_csv(out / "envelope.csv", env)
    _stamp(out / "envelope.csv", chash, seed)

    k = sim.kernels
    with open(out / "occupancy.csv", "w", encoding="utf-8") as fh:
        fh.write("time_s,n_acoustic,n_microwave\n")
        for t, nb, nc in zip(k.grid_uncond.t_starts, k.occ_b, k.occ_c):
            fh.write(f"{t:.12e},{nb:.12e},{nc:.12e}\n")
    _stamp(out / "occupancy.csv", chash, seed)

    summary = _simulation_summary(sim, budget)
    summary["bath_knots_b"] = [list(map(float, kn)) for kn in baths.knots_b]
    summary["bath_knots_c"] = [list(map(float, kn)) for kn in baths.knots_c]
    _write_json(out / "summary.json", summary, chash, seed)
    print(f"g2_AC(tau_o) = {summary['g2_ac_tau_o']:.4f} at tau_o = {summary['tau_o_s']*1e9:.0f} ns")
    print(f"wrote {out}/traces.csv, occupancy.csv, envelope.csv, summary.json")
    return EXIT_OK


def _sweep(cfg, seed, out, chash, dims, powers) -> int:
    base_power = cfg["baths"]["reference_peak_occupation"]
    exponent = cfg["baths"]["power_law_exponent"]
    params = build_params(cfg)
    pulse0 = build_pulse(cfg)
    env = build_envelope(cfg)
    base_baths = resolve_baths(cfg, params, pulse0)
    rows = []
    for na in powers:
        cfg_p = json.loads(json.dumps(cfg))
        cfg_p["pulse"]["n_a_peak"] = na
        scale = (na / base_power) ** exponent
        baths = base_baths.scaled(scale)
        sim, *_ , budget = _run_simulation(
            cfg_p, dims, baths=baths,
            tau_grid=np.arange(-0.3e-6, 1.2e-6 + 1e-15, 2.5e-8),
            grid_nt=min(cfg["engine"]["grid_nt"], 100),
            grid_ntau=min(cfg["engine"]["grid_ntau"], 120),
            compute_extraction=False,
        )
        i = int(np.argmax(sim.conditional.values))
        g2 = float(sim.conditional.values[i] / sim.unconditional.values[i])
        rows.append((na, scale, sim.tau_o, g2))
        print(f"n_a = {na:g}: bath scale {scale:.3f}, g2_AC(tau_o) = {g2:.4f}")
    with open(out / "power_sweep.csv", "w", encoding="utf-8") as fh:
        fh.write("n_a_peak,bath_scale,tau_o_s,g2_ac\n")
        for r in rows:
            fh.write(f"{r[0]:.6g},{r[1]:.12e},{r[2]:.12e},{r[3]:.12e}\n")
    _stamp(out / "power_sweep.csv", chash, seed)
    g2s = [r[3] for r in rows]
    _write_json(out / "sweep_summary.json", {
        "powers": powers, "g2_ac": g2s,
        "monotone_decreasing": bool(all(a > b for a, b in zip(g2s, g2s[1:]))),
    }, chash, seed)
    return EXIT_OK


def _distributions_from_config(cfg, args):
    """(pair distribution, unconditional distribution) for synthesis."""
    src = getattr(args, "source_summary", None)
    if src is not None:
        data = json.loads(Path(src).read_text(encoding="utf-8"))
        p = np.asarray(data["click_total_number_distribution"], dtype=float)
        eta = data.get("extraction_efficiency")
        if eta is None:
            raise InvalidDataError("source summary lacks extraction_efficiency")
        pair = binomial_dilute(NumberDistribution(p / p.sum()), min(float(eta), 1.0))
        unc = NumberDistribution.thermal(max(data["n_unconditional_tau_o"], 1e-12), 32)
        return pair, unc
    # default synthetic target: a heralded one-quantum mixture over a weak
    # thermal background, matched to nothing in particular (smoke scale)
    pair = NumberDistribution.thermal(0.097, 24)
    pair = NumberDistribution(np.concatenate([[0.0], pair.p[:-1]]))  # one added quantum
    unc = NumberDistribution.thermal(0.14, 24)
    return pair, unc


def cmd_tomo(args) -> int:
    cfg, seed, out = _setup(args)
    chash = config_hash(cfg)
    tomo = cfg["tomography"]
    n_boot = args.bootstrap if args.bootstrap is not None else cfg["run"]["bootstrap"]
    gain = 10.0 ** (tomo["gain_db"] / 10.0)

    if args.samples is not None:
        chunks = _read_sample_chunks(args.samples, gain)
        click_sources = None
    elif args.synthesize:
        budget = _budget_from_config(cfg)
        pair, unc = _distributions_from_config(cfg, args)
        n_cond = args.trials if args.trials is not None else tomo["n_conditional"]
        data = simulate_experiment(
            pair, unc, budget, tomo["n_add"], gain,
            n_conditional=n_cond, n_unconditional=tomo["n_unconditional"],
            n_noise=tomo["n_noise"], seed=seed, n_chunks=tomo["n_chunks"],
        )
        chunks = data.chunks()
        click_sources = data.click_sources
        _write_sample_chunks(out / "samples.csv", chunks, chash, seed, tomo["n_add"])
    else:
        raise InvalidDataError("tomo needs --samples FILE or --synthesize")

    C_cond, C_unc = chunked_inversion(chunks)
    all_cond = np.concatenate([c[0].samples for c in chunks])
    all_unc = np.concatenate([c[1].samples for c in chunks])
    all_noise = np.concatenate([c[2].samples for c in chunks])
    n_th_H = noise_occupancy_from_reference(
        SampleSet(all_noise, "noise_only", gain))

    from .tomography import invert_moments, noise_moments, raw_moments

    def stat_g2(s):
        C = invert_moments(raw_moments(s), gain, noise_moments(max(n_th_H, 0.0)))
        d = float(np.real(C[1, 1]))
        if d <= 0:
            raise ZeroDivisionError
        return float(np.real(C[2, 2])) / d**2

    boot_cond = bootstrap(all_cond, stat_g2, n_boot=n_boot, seed=seed + 1)
    boot_unc = bootstrap(all_unc, stat_g2, n_boot=max(1000, n_boot // 10), seed=seed + 2)

    report = {
        "n_th_H": n_th_H,
        "gain_db": tomo["gain_db"],
        "moments_conditional": _matrix_json(C_cond.values),
        "moments_unconditional": _matrix_json(C_unc.values),
        "g2_cc": {"value": boot_unc.result.value, "ci_low": boot_unc.result.ci_low,
                  "ci_high": boot_unc.result.ci_high, "n_bootstrap": boot_unc.result.n_bootstrap},
        "g2_cc_click": {"value": boot_cond.result.value, "ci_low": boot_cond.result.ci_low,
                        "ci_high": boot_cond.result.ci_high,
                        "n_bootstrap": boot_cond.result.n_bootstrap},
        "g2_ac": float(np.real(C_cond[1, 1]) / np.real(C_unc[1, 1])),
        "counts": {"conditional": int(all_cond.size), "unconditional": int(all_unc.size),
                   "noise": int(all_noise.size)},
        "warnings": C_cond.warnings + C_unc.warnings,
    }
    if click_sources is not None:
        report["noise_click_fraction_realized"] = float(np.mean(click_sources))
    _write_json(out / "correlations.json", report, chash, seed)

    with open(out / "bootstrap_hist.csv", "w", encoding="utf-8") as fh:
        fh.write("bin_low,bin_high,count\n")
        for lo, hi, c in zip(boot_cond.hist_edges[:-1], boot_cond.hist_edges[1:],
                             boot_cond.hist_counts):
            fh.write(f"{lo:.12e},{hi:.12e},{int(c)}\n")
    _stamp(out / "bootstrap_hist.csv", chash, seed)
    with open(out / "bootstrap_convergence.csv", "w", encoding="utf-8") as fh:
        fh.write("n_resamples,ci_low,ci_high\n")
        for n, lo, hi in zip(boot_cond.convergence_n, boot_cond.convergence_low,
                             boot_cond.convergence_high):
            fh.write(f"{int(n)},{lo:.12e},{hi:.12e}\n")
    _stamp(out / "bootstrap_convergence.csv", chash, seed)

    print(f"g2_CC = {report['g2_cc']['value']:.4f} "
          f"[{report['g2_cc']['ci_low']:.4f}, {report['g2_cc']['ci_high']:.4f}]")
    print(f"g2_CC|click = {report['g2_cc_click']['value']:.4f} "
          f"[{report['g2_cc_click']['ci_low']:.4f}, {report['g2_cc_click']['ci_high']:.4f}]")
    return EXIT_OK


def _matrix_json(m: np.ndarray):
    return [[[float(x.real), float(x.imag)] for x in row] for row in m]


def _write_sample_chunks(path: Path, chunks, chash, seed, n_add) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("re_v,im_v,kind,chunk_id\n")
        for cond, unc, noise in chunks:
            for ss in (cond, unc, noise):
                for v in ss.samples:
                    fh.write(f"{v.real:.12e},{v.imag:.12e},{ss.kind},{ss.chunk_id}\n")
    _stamp(path, chash, seed)
    sidecar = {"gain": chunks[0][0].gain, "n_add": n_add,
               "config_hash": chash, "seed": seed}
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n",
                                         encoding="utf-8")


def _read_sample_chunks(path: Path, default_gain: float):
    sidecar = Path(str(path) + ".json")
    gain = default_gain
    if sidecar.exists():
        gain = float(json.loads(sidecar.read_text(encoding="utf-8"))["gain"])
    per: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = None
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if header is None:
                header = line.split(",")
                if header != ["re_v", "im_v", "kind", "chunk_id"]:
                    raise InvalidDataError(f"unexpected samples CSV header {header}")
                continue
            re_v, im_v, kind, cid = line.split(",")
            per.setdefault(cid, {}).setdefault(kind, []).append(
                float(re_v) + 1j * float(im_v))
    chunks = []
    for cid in sorted(per):
        kinds = per[cid]
        for needed in ("conditional", "unconditional", "noise_only"):
            if needed not in kinds:
                raise InvalidDataError(f"chunk {cid}: missing {needed} samples")
        chunks.append(tuple(
            SampleSet(np.asarray(kinds[k]), k, gain, chunk_id=cid)
            for k in ("conditional", "unconditional", "noise_only")
        ))
    return chunks


def cmd_fit_baths(args) -> int:
    cfg, seed, out = _setup(args, need_seed=False)
    chash = config_hash(cfg)
    params = build_params(cfg)
    pulse = build_pulse(cfg)
    env = build_envelope(cfg)
    fit_cfg = cfg["fit"]
    knots = np.asarray(fit_cfg["knot_times_s"], dtype=float)
    dims = (fit_cfg["fock_dim"], fit_cfg["fock_dim"])

    if args.synthesize:
        truth = resolve_baths(cfg, params, pulse)
        kw = dict(detuning=fit_cfg["detuning_hz"], dims=dims,
                  grid_nt=fit_cfg["grid_nt"], grid_ntau=fit_cfg["grid_ntau"])
        tr_det = forward_emission(truth, params, pulse, env, "detuned", **kw)
        tr_res = forward_emission(truth, params, pulse, env, "resonant", **kw)
        emission_trace_to_csv(out / "synthetic_traces.csv", [tr_det, tr_res])
        _stamp(out / "synthetic_traces.csv", chash, seed)
    elif args.traces is not None:
        traces = {t.condition: t for t in emission_trace_from_csv(args.traces)}
        if "detuned" not in traces or "resonant" not in traces:
            raise InvalidDataError("trace file must contain both conditions")
        tr_det, tr_res = traces["detuned"], traces["resonant"]
    else:
        raise InvalidDataError("fit-baths needs --traces FILE or --synthesize")

    fitter = BathFitter(params, pulse, env, knots, n_th_w=cfg["baths"]["n_th_w"],
                        detuning=fit_cfg["detuning_hz"], dims=dims,
                        grid_nt=fit_cfg["grid_nt"], grid_ntau=fit_cfg["grid_ntau"])
    fitter.fit(tr_det, tr_res)
    rep = fitter.report_
    _write_json(out / "bath_fit.json", rep.to_dict(), chash, seed)
    with open(out / "fitted_schedule.csv", "w", encoding="utf-8") as fh:
        fh.write("time_s,n_th_b,n_th_c\n")
        for (t, nb), (_, nc) in zip(rep.baths.knots_b, rep.baths.knots_c):
            fh.write(f"{t:.12e},{nb:.12e},{nc:.12e}\n")
    _stamp(out / "fitted_schedule.csv", chash, seed)
    print(f"fit converged: {rep.converged}, rms residual {rep.residual:.3e} quanta, "
          f"{rep.iterations} sweeps")
    return EXIT_OK


def cmd_budget(args) -> int:
    cfg, seed, out = _setup(args, need_seed=False)
    chash = config_hash(cfg)
    b = _budget_from_config(cfg)
    payload = {"fractions": {k: float(v) for k, v in b.fractions.items()},
               "p_click": b.p_click, "r_click_hz": b.r_click}
    _write_json(out / "budget.json", payload, chash, seed)
    print(f"{'source':<12}{'fraction':>10}")
    for k, v in b.fractions.items():
        print(f"{k:<12}{v:>10.3f}")
    print(f"p_click = {b.p_click:.3e}, R_click = {b.r_click:.3f} Hz")
    return EXIT_OK


def cmd_calibrate_gain(args) -> int:
    cfg, seed, out = _setup(args, need_seed=False)
    chash = config_hash(cfg)
    c = cfg["calibration"]
    rep = calibrate_gain(
        R=c["optical_rate_hz"], R_o=c["single_phonon_rate_hz"],
        P_det=c["detected_power_w"], kappa_e_b=c["kappa_e_b_hz"],
        kappa_i_b=c["kappa_i_b_hz"], omega_b=c["omega_b_hz"],
        P_in=c["input_power_w"],
    )
    payload = {"gain": rep.gain, "gain_db": rep.gain_db, "n_b_signal": rep.n_b_signal,
               "p_in_derived_w": rep.p_in_derived}
    if rep.p_in_consistency is not None:
        payload["p_in_consistency"] = rep.p_in_consistency
    _write_json(out / "gain.json", payload, chash, seed)
    print(f"G = {rep.gain_db:.2f} dB (linear {rep.gain:.4e})")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    handlers = {
        "simulate": cmd_simulate,
        "sweep": cmd_simulate,
        "tomo": cmd_tomo,
        "fit-baths": cmd_fit_baths,
        "budget": cmd_budget,
        "calibrate-gain": cmd_calibrate_gain,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"convergence error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (InvalidDataError, MopairError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
