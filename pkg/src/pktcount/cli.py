"""``pktcount`` command line: fit, simulate, localize, evaluate, reproduce.

Exit codes: 0 success, 2 input error, 3 quality warning (R-hat >= 1.1).
Settings may also come from ``--config file.json`` whose keys are flag names
(``iters`` or ``--iters``); flags given on the command line win.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .evaluation import (
    compare_report,
    evaluate_estimate,
    timeseries_export,
    write_compare,
    write_report_json,
)
from .inference.diagnostics import rhat
from .inference.fit import RHAT_LIMIT, PriorSpec, TrainingDataset, fit_reception_bayes, write_posterior
from .inference.mcmc import McmcConfig
from .io import InputError
from .layout import LayoutSpec, demo_layout
from .localizer import LocalizerConfig, TrajectoryEstimate, mcl_localize, pcmcl_localize
from .model import RadioConfig, ReceptionModel, reference_model
from .rng import derive_seed
from .simulator import GroundTruth, MovementScript, demo_script, gen_trajectory, simulate_trace, simulate_training
from .trace import PacketTrace

log = logging.getLogger("pktcount")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_QUALITY = 3


class UsageError(ValueError):
    """Bad or missing command-line input."""


def _add_mcmc(p, iters=20000, burn_in=5000):
    p.add_argument("--chains", type=int, default=4)
    p.add_argument("--iters", type=int, default=iters)
    p.add_argument("--burn-in", type=int, default=burn_in)


def _add_radio(p, required=True):
    p.add_argument("--freq-hz", type=float, default=None, help="advertising frequency" + (" (required)" if required else ""))
    p.add_argument("--power-dbm", type=float, default=None, help="transmit power" + (" (required)" if required else ""))
    p.add_argument("--delta-s", type=float, default=10.0, help="window length in seconds")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pktcount", description="Packet-count BLE reception modelling and localization.")
    ap.add_argument("--config", type=Path, default=None, help="JSON file of flag defaults")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit per-stack reception coefficients to a training dataset")
    p.add_argument("dataset", type=Path)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--prior-mu", type=float, default=0.0)
    p.add_argument("--prior-sigma", type=float, default=10.0)
    p.add_argument("--full", action="store_true", help="fit all ten quadratic terms instead of the reduced five")
    _add_mcmc(p)

    p = sub.add_parser("simulate-training", help="simulate stationary listening spots into a training dataset")
    p.add_argument("--layout", type=Path, default=None, help="layout JSON (default: built-in demo)")
    p.add_argument("--model", type=Path, default=None, help="model JSON (default: reference coefficients)")
    p.add_argument("--freq-hz", type=float, nargs="+", default=[1.0, 2.0, 10.0])
    p.add_argument("--power-dbm", type=float, nargs="+", default=[-20.0, -15.0, -12.0])
    p.add_argument("--spots-per-aisle", type=int, default=5)
    p.add_argument("--duration-s", type=float, default=60.0)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", type=Path, required=True, help="dataset CSV")

    p = sub.add_parser("simulate", help="simulate a walk and its packet trace")
    p.add_argument("--layout", type=Path, default=None)
    p.add_argument("--model", type=Path, default=None)
    p.add_argument("--script", type=Path, default=None, help="movement script JSON (default: demo walk)")
    _add_radio(p)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", type=Path, required=True, help="directory for trace.csv and truth.csv")

    p = sub.add_parser("localize", help="estimate the trajectory behind a packet trace")
    p.add_argument("--trace", type=Path, required=True)
    p.add_argument("--layout", type=Path, default=None)
    p.add_argument("--model", type=Path, default=None)
    p.add_argument("--algorithm", choices=["pcmcl", "mcl"], default="pcmcl")
    _add_radio(p)
    p.add_argument("--s-max", type=float, default=2.0)
    p.add_argument("--stack-mode", choices=["thresholds", "dirichlet"], default="thresholds")
    p.add_argument("--dirichlet-alpha", type=float, default=1.0)
    p.add_argument("--d0-m", type=float, default=None, help="baseline radio range (required for mcl)")
    p.add_argument("--particles", type=int, default=1000)
    p.add_argument("--seed", type=int, default=None)
    _add_mcmc(p)
    p.add_argument("--out", type=Path, required=True, help="estimate CSV")

    p = sub.add_parser("evaluate", help="score estimates against ground truth")
    p.add_argument("--estimate", action="append", required=True, metavar="ALG=PATH",
                   help="estimate CSV, optionally prefixed by its algorithm name; repeatable")
    p.add_argument("--truth", type=Path, required=True)
    _add_radio(p, required=False)
    p.add_argument("--out", type=Path, required=True, help="directory for report.json, table.csv, timeseries.csv")

    p = sub.add_parser("reproduce", help="simulate, fit, localize and evaluate over the 9-setting grid")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("out"))
    p.add_argument("--particles", type=int, default=1000)
    p.add_argument("--s-max", type=float, default=2.0)
    p.add_argument("--delta-s", type=float, default=10.0)
    p.add_argument("--fit-iters", type=int, default=4000)
    p.add_argument("--fit-burn-in", type=int, default=1000)
    _add_mcmc(p)
    return ap


def _apply_config(ap: argparse.ArgumentParser, argv) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", type=Path, default=None)
    head, _ = pre.parse_known_args(argv)
    subparsers = next(a for a in ap._actions if isinstance(a, argparse._SubParsersAction))
    command = next((t for t in argv if t in subparsers.choices), None)
    if head.config is None or command is None:
        return ap.parse_args(argv)
    try:
        cfg = json.loads(head.config.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f"cannot read config {head.config}: {e}") from None
    if not isinstance(cfg, dict):
        raise UsageError("config file must hold a JSON object")
    cfg = {k.lstrip("-").replace("-", "_"): v for k, v in cfg.items()}
    sp = subparsers.choices[command]
    known = {a.dest for a in sp._actions if a.option_strings}
    unknown = sorted(set(cfg) - known)
    if unknown:
        raise UsageError(f"config keys not valid for {command}: {', '.join(unknown)}")
    for a in sp._actions:
        if a.dest in cfg:
            a.required = False
            v = cfg[a.dest]
            if a.type is not None and v is not None:
                try:
                    cfg[a.dest] = [a.type(x) for x in v] if isinstance(v, list) else a.type(v)
                except (TypeError, ValueError):
                    raise UsageError(f"config value for {a.dest!r} is invalid: {v!r}") from None
    sp.set_defaults(**cfg)
    return ap.parse_args(argv)


def _need(args, *names):
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + n.replace("_", "-") for n in missing))


def _layout(args) -> LayoutSpec:
    return demo_layout() if args.layout is None else LayoutSpec.load(args.layout)


def _model(args) -> ReceptionModel:
    return reference_model() if args.model is None else ReceptionModel.load(args.model)


def _radio(args) -> RadioConfig:
    _need(args, "freq_hz", "power_dbm")
    return RadioConfig.from_dbm(args.freq_hz, args.power_dbm, args.delta_s)


def _mcmc(args, seed: int) -> McmcConfig:
    return McmcConfig(chains=args.chains, iterations=args.iters, burn_in=args.burn_in, seed=seed)


def _fit(data: TrainingDataset, out: Path, prior: PriorSpec, mcmc: McmcConfig, reduced: bool) -> tuple[int, ReceptionModel]:
    samples, model = fit_reception_bayes(data, prior, mcmc, reduced=reduced)
    out.mkdir(parents=True, exist_ok=True)
    model.save(out / "model.json")
    summary = write_posterior(out, samples)
    if not summary["converged"]:
        log.warning("R-hat >= %g for %s", RHAT_LIMIT, ", ".join(summary["rhat_flags"]))
        return EXIT_QUALITY, model
    return EXIT_OK, model


def cmd_fit(args) -> int:
    data = TrainingDataset.load(args.dataset)
    code, _ = _fit(data, args.out, PriorSpec(args.prior_mu, args.prior_sigma), _mcmc(args, args.seed), not args.full)
    return code


def cmd_simulate_training(args) -> int:
    from .experiments import training_spots

    _need(args, "seed")
    layout, model = _layout(args), _model(args)
    configs = [RadioConfig.from_dbm(f, p) for p in args.power_dbm for f in args.freq_hz]
    data = simulate_training(layout, model, configs, training_spots(layout, args.spots_per_aisle),
                             args.duration_s, args.seed)
    data.save(args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    _need(args, "seed")
    layout, model, radio = _layout(args), _model(args), _radio(args)
    script = demo_script(layout) if args.script is None else MovementScript.load(args.script)
    truth = gen_trajectory(script, layout, derive_seed(args.seed, "walk"))
    trace = simulate_trace(truth, layout, model, radio, derive_seed(args.seed, "trace"))
    args.out.mkdir(parents=True, exist_ok=True)
    truth.save(args.out / "truth.csv")
    trace.save(args.out / "trace.csv")
    log.info("%d events over %.1f s", len(trace), truth.duration_s)
    return EXIT_OK


def _localize_pcmcl(trace, layout, model, radio, loc: LocalizerConfig) -> tuple[TrajectoryEstimate, float]:
    if loc.stack_mode == "thresholds" and layout.num_aisles != 3:
        raise UsageError(f"thresholds mode needs exactly 3 aisles, layout has {layout.num_aisles}; "
                         "use --stack-mode dirichlet")
    est = pcmcl_localize(trace, layout, model, loc, radio, keep_samples=True)
    return est, float(np.max(rhat(est.samples)))


def cmd_localize(args) -> int:
    _need(args, "seed")
    layout, radio = _layout(args), _radio(args)
    trace = PacketTrace.load(args.trace)
    code = EXIT_OK
    if args.algorithm == "mcl":
        _need(args, "d0_m")
        est = mcl_localize(trace, layout, radio, args.d0_m, n_particles=args.particles, v_max=args.s_max,
                           seed=derive_seed(args.seed, "mcl"), delta_s=args.delta_s)
    else:
        loc = LocalizerConfig(delta_s=args.delta_s, s_max=args.s_max, mcmc=_mcmc(args, derive_seed(args.seed, "pcmcl")),
                              stack_mode=args.stack_mode, dirichlet_alpha=args.dirichlet_alpha)
        est, worst = _localize_pcmcl(trace, layout, _model(args), radio, loc)
        if not worst < RHAT_LIMIT:
            log.warning("PC-MCL max R-hat %.3g >= %g", worst, RHAT_LIMIT)
            code = EXIT_QUALITY
    est.save(args.out)
    return code


def _parse_estimate_arg(spec: str, i: int) -> tuple[str, Path]:
    if "=" in spec:
        alg, path = spec.split("=", 1)
        return alg, Path(path)
    return f"est{i}", Path(spec)


def cmd_evaluate(args) -> int:
    truth = GroundTruth.load(args.truth)
    parsed = [_parse_estimate_arg(s, i) for i, s in enumerate(args.estimate)]
    algs = [a for a, _ in parsed]
    if len(set(algs)) != len(algs):
        raise UsageError("each estimate needs a distinct algorithm name")
    freq = np.nan if args.freq_hz is None else args.freq_hz
    power = np.nan if args.power_dbm is None else args.power_dbm
    reports, centers = {}, None
    for alg, path in parsed:
        est = TrajectoryEstimate.load(path)
        if centers is None:
            centers = est.t_center_s
        elif est.t_center_s.shape != centers.shape or not np.allclose(est.t_center_s, centers, atol=1e-6):
            raise UsageError(f"{path}: windows do not match the first estimate")
        reports[alg] = evaluate_estimate(est, truth, args.delta_s, algorithm=alg, freq_hz=freq, power_dbm=power)
    _write_evaluation(args.out, list(reports.values()),
                      [((power, freq), reports["pcmcl"], reports["mcl"])] if {"pcmcl", "mcl"} <= set(reports) else [])
    return EXIT_OK


def _write_evaluation(out: Path, reports, runs) -> None:
    out.mkdir(parents=True, exist_ok=True)
    write_report_json(out / "report.json", reports)
    write_compare(out / "table.csv", compare_report(runs))
    timeseries_export(reports, out / "timeseries.csv")


def cmd_reproduce(args) -> int:
    from .experiments import grid_configs, radio_range_m, training_spots

    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    layout, truth_model = demo_layout(), reference_model()
    layout.save(out / "layout.json")
    truth_model.save(out / "truth_model.json")
    script = demo_script(layout)
    script.save(out / "script.json")

    log.info("simulating training data")
    data = simulate_training(layout, truth_model, grid_configs(), training_spots(layout), 60.0,
                             derive_seed(args.seed, "training"))
    data.save(out / "training.csv")
    log.info("fitting reception model on %d rows", len(data))
    fit_cfg = McmcConfig(chains=args.chains, iterations=args.fit_iters, burn_in=args.fit_burn_in,
                         seed=derive_seed(args.seed, "fit"))
    code, model = _fit(data, out / "fit", PriorSpec(), fit_cfg, reduced=True)

    truth = gen_trajectory(script, layout, derive_seed(args.seed, "walk"))
    truth.save(out / "truth.csv")
    runs, reports = [], []
    for radio in grid_configs(args.delta_s):
        tag = f"p{radio.power_dbm:g}_f{radio.freq_hz:g}"
        run_dir = out / "runs" / tag
        run_dir.mkdir(parents=True, exist_ok=True)
        seeds = [round(radio.power_dbm * 10), round(radio.freq_hz * 10)]
        trace = simulate_trace(truth, layout, truth_model, radio, derive_seed(args.seed, "trace", *seeds))
        trace.save(run_dir / "trace.csv")
        loc = LocalizerConfig(delta_s=args.delta_s, s_max=args.s_max,
                              mcmc=_mcmc(args, derive_seed(args.seed, "pcmcl", *seeds)))
        pc, worst = _localize_pcmcl(trace, layout, model, radio, loc)
        if not worst < RHAT_LIMIT:
            log.warning("%s: PC-MCL max R-hat %.3g", tag, worst)
            code = EXIT_QUALITY
        d0 = radio_range_m(radio.power_dbm)
        mc = mcl_localize(trace, layout, radio, d0, n_particles=args.particles, v_max=args.s_max,
                          seed=derive_seed(args.seed, "mcl", *seeds), delta_s=args.delta_s)
        pc.save(run_dir / "estimate_pcmcl.csv")
        mc.save(run_dir / "estimate_mcl.csv")
        kw = dict(freq_hz=radio.freq_hz, power_dbm=radio.power_dbm)
        rp = evaluate_estimate(pc, truth, args.delta_s, algorithm="pcmcl", **kw)
        rm = evaluate_estimate(mc, truth, args.delta_s, algorithm="mcl", **kw)
        runs.append((radio, rp, rm))
        reports += [rp, rm]
        log.info("%s: pcmcl %.2f m, mcl %.2f m (d0 %g m)", tag, rp.mean, rm.mean, d0)
    _write_evaluation(out, reports, runs)
    return code


COMMANDS = {
    "fit": cmd_fit,
    "simulate-training": cmd_simulate_training,
    "simulate": cmd_simulate,
    "localize": cmd_localize,
    "evaluate": cmd_evaluate,
    "reproduce": cmd_reproduce,
}


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = _apply_config(ap, argv)
    except UsageError as e:
        print(f"pktcount: error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except SystemExit as e:  # argparse usage errors
        return int(e.code) if e.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except InputError as e:
        print(f"pktcount: input error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (ValueError, OSError, KeyError) as e:
        print(f"pktcount: error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
