"""Command-line front end.

Subcommands: run (execute a scenario, write waveform + report), calibrate
(fit the gap fringing factor), tune-pi (Ziegler-Nichols gains for the bias
loop), analyze (recompute metrics from an existing waveform file), sweep
(find the smallest saturating dc bias). Every failure class maps to its own
exit code so scripts can branch on what went wrong; no failure exits 0.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

from .analysis import analyze
from .config import ENV_OUT_DIR, RunConfig, parse_config, render_config
from .errors import (CalibrationError, ConfigError, CvsrSimError,
                     NetworkError, NumericalError, ReportingError,
                     SolverError, TuningError, UsageError)
from .io import (PLOT_PRESETS, RunReport, Stopwatch, emit_timeseries,
                 ensure_dir, read_timeseries, run_checks, with_power_channel,
                 write_report)
from .scenario import (REFERENCE_DELAY, calibrate_fringing, find_critical_dc,
                       run_scenario, tune_bias_loop)

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_CALIBRATION = 4
EXIT_IO = 5

_EXIT_BY_ERROR = (
    ((ConfigError, UsageError, NetworkError), EXIT_CONFIG),
    ((SolverError, NumericalError), EXIT_SOLVER),
    ((CalibrationError, TuningError), EXIT_CALIBRATION),
    ((ReportingError, OSError), EXIT_IO),
)


def _load_config(path: str | None) -> RunConfig:
    if path is None:
        return parse_config("")
    if path == "-":
        return parse_config(sys.stdin.read())
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    fields = {}
    if args.source is not None:
        fields["source"] = args.source
        # per-source defaults only hold when the file did not pin them
        if args.duration is None and cfg.duration in (0.1, 0.2):
            fields["duration"] = 0.2 if args.source == "ideal" else 0.1
        if cfg.dt in (1.0 / 60_000.0, 1.0 / 3_000_000.0):
            fields["dt"] = (1.0 / 60_000.0 if args.source == "ideal"
                            else 1.0 / 3_000_000.0)
    if args.dc is not None:
        fields["dc_setpoint"] = args.dc
    if args.duration is not None:
        fields["duration"] = args.duration
    if args.out_dir is not None:
        fields["out_dir"] = args.out_dir
    if args.decimation is not None:
        fields["decimation"] = args.decimation
    if args.channels is not None:
        fields["channels"] = (None if args.channels.strip().lower() == "all"
                              else tuple(s.strip() for s in
                                         args.channels.split(",") if s.strip()))
    if args.calibrate:
        fields["calibrate"] = True
    return replace(cfg, **fields) if fields else cfg


def _cmd_run(args) -> int:
    watch = Stopwatch()
    cfg = _apply_overrides(_load_config(args.config), args)
    plot_tags = []
    for raw in args.plot_data or []:
        plot_tags += [s.strip() for s in raw.split(",") if s.strip()]
    unknown = [t for t in plot_tags if t not in PLOT_PRESETS]
    if unknown:
        raise ConfigError(f"unknown plot-data tags {unknown}; "
                          f"available: {', '.join(sorted(PLOT_PRESETS))}")

    if cfg.calibrate:
        result = calibrate_fringing(cfg.params)
        cfg = replace(cfg, params=replace(
            cfg.params, fringing_factor=result.fringing_factor))
        print(f"calibrated fringing_factor = {result.fringing_factor:.6g} "
              f"(achieved {result.achieved_rms:.4f} A in "
              f"{result.evaluations} runs)")

    scenario = cfg.scenario()
    series = run_scenario(scenario)

    dft = {"v_bias": [cfg.params.frequency, 2.0 * cfg.params.frequency]}
    if cfg.source == "converter":
        dft["v_bias"].append(cfg.converter.carrier_frequency)
    metrics = analyze(
        series, frequency=cfg.params.frequency, b_sat=cfg.params.b_sat,
        n_cycles=cfg.metric_cycles, startup=cfg.startup,
        dc_target=(cfg.dc_setpoint if cfg.source == "converter" else None),
        # step metrics follow the ripple-averaged dc current: one period of
        # the double-frequency bias ripple nulls it and its harmonics, which
        # would otherwise dwarf the settling band
        ripple_smooth_s=(0.5 / cfg.params.frequency
                         if cfg.source == "converter" else None),
        dft_channels=dft)

    step_time = REFERENCE_DELAY
    if cfg.profile:
        nonzero = [t for t, level in cfg.profile if level != 0.0]
        step_time = nonzero[0] if nonzero else 0.0
    checks = run_checks(series, metrics, source=cfg.source,
                        dc_setpoint=cfg.dc_setpoint,
                        newton_max_iter=cfg.newton_max_iter,
                        step_time=step_time)

    out_dir = ensure_dir(cfg.out_dir)
    wave_path = os.path.join(out_dir, cfg.waveform_file)
    rows = emit_timeseries(series, wave_path, channels=cfg.channels,
                           decimation=cfg.decimation)
    extras = {}
    if plot_tags:
        plotted = with_power_channel(series) if any(
            "p_dc" in PLOT_PRESETS[t] for t in plot_tags) else series
        written = {}
        for tag in plot_tags:
            chans = [c for c in PLOT_PRESETS[tag] if c in plotted]
            if not chans:
                raise ReportingError(
                    f"plot-data tag {tag} needs channels "
                    f"{PLOT_PRESETS[tag]}, none recorded in this run")
            p = os.path.join(out_dir, f"{tag}.csv")
            emit_timeseries(plotted, p, channels=chans,
                            decimation=cfg.decimation)
            written[tag] = p
        extras["plot_data"] = written

    report = RunReport(config_text=render_config(cfg),
                       metrics=metrics.to_dict(), checks=checks,
                       wall_clock_s=watch.elapsed(),
                       waveform_path=wave_path, rows_written=rows,
                       extras=extras)
    report_path = os.path.join(out_dir, cfg.report_file)
    write_report(report, report_path)

    print(f"wrote {rows} rows to {wave_path}")
    print(f"report: {report_path}")
    for name, c in checks.items():
        print(f"  [{'PASS' if c['passed'] else 'FAIL'}] {name}: "
              f"{c['value']} (limit {c['limit']})")
    if not report.passed():
        print("one or more run checks failed", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def _cmd_calibrate(args) -> int:
    cfg = _load_config(args.config)
    result = calibrate_fringing(cfg.params, target_rms=args.target,
                                rtol=args.rtol)
    if args.json:
        print(json.dumps({"fringing_factor": result.fringing_factor,
                          "achieved_rms": result.achieved_rms,
                          "target_rms": result.target_rms,
                          "evaluations": result.evaluations}))
    else:
        print(f"fringing_factor = {result.fringing_factor:.10g}")
        print(f"achieved ac RMS = {result.achieved_rms:.6f} A "
              f"(target {result.target_rms:g} A, "
              f"{result.evaluations} evaluations)")
    return EXIT_OK


def _cmd_tune_pi(args) -> int:
    cfg = _load_config(args.config)
    result = tune_bias_loop(cfg.params, cfg.converter,
                            setpoint=args.setpoint, kp_start=args.kp_start,
                            window=args.window)
    if args.json:
        print(json.dumps({"kp": result.kp, "ki": result.ki,
                          "ultimate_gain": result.ultimate_gain,
                          "ultimate_period": result.ultimate_period,
                          "evaluations": result.evaluations}))
    else:
        print(f"kp = {result.kp:.6g}")
        print(f"ki = {result.ki:.6g}")
        print(f"ultimate gain = {result.ultimate_gain:.6g}, "
              f"period = {result.ultimate_period:.6g} s "
              f"({result.evaluations} loop evaluations)")
    return EXIT_OK


def _cmd_analyze(args) -> int:
    series = read_timeseries(args.waveform)
    metrics = analyze(series, frequency=args.frequency, b_sat=args.b_sat,
                      n_cycles=args.cycles, startup=args.startup,
                      dc_target=args.dc_target,
                      ripple_smooth_s=args.ripple_smooth)
    print(json.dumps(metrics.to_dict(), indent=2))
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = _load_config(args.config)
    critical = find_critical_dc(cfg.params, grid=args.grid,
                                max_bias=args.max_bias,
                                duration=args.duration)
    if args.json:
        print(json.dumps({"critical_dc_a": critical}))
    else:
        print(f"critical dc bias = {critical:g} A "
              f"(first grid point saturating an outer leg)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cvsr-sim",
        description="Transient simulator for a magnetically biased series "
                    "reactor with an ideal or switched-mode bias supply.",
        epilog=f"Default output directory comes from ${ENV_OUT_DIR} when the "
               "config file does not set one.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config(p):
        p.add_argument("-c", "--config", metavar="FILE",
                       help="INI scenario file ('-' for stdin); "
                            "omitted keys use built-in defaults")

    p_run = sub.add_parser("run", help="execute a scenario, write waveform "
                                       "and report files")
    add_config(p_run)
    p_run.add_argument("--source", choices=("ideal", "converter"),
                       help="override the bias source kind")
    p_run.add_argument("--dc", type=float, help="override the dc setpoint (A)")
    p_run.add_argument("--duration", type=float, help="override run length (s)")
    p_run.add_argument("--out-dir", help="override the output directory")
    p_run.add_argument("--channels",
                       help="comma list of channels to write, or 'all'")
    p_run.add_argument("--decimation", type=int,
                       help="write every Nth sample (first always kept)")
    p_run.add_argument("--plot-data", action="append", metavar="TAGS",
                       help="also write plot-ready extracts; comma list of "
                            f"tags from: {', '.join(sorted(PLOT_PRESETS))}")
    p_run.add_argument("--calibrate", action="store_true",
                       help="run the fringing calibration before simulating")
    p_run.set_defaults(func=_cmd_run)

    p_cal = sub.add_parser("calibrate",
                           help="fit the gap fringing factor to the rated "
                                "0 A ac current")
    add_config(p_cal)
    p_cal.add_argument("--target", type=float, default=21.2,
                       help="target ac RMS in A (default 21.2)")
    p_cal.add_argument("--rtol", type=float, default=0.005,
                       help="relative tolerance on the target (default 0.005)")
    p_cal.add_argument("--json", action="store_true",
                       help="machine-readable output")
    p_cal.set_defaults(func=_cmd_calibrate)

    p_tune = sub.add_parser("tune-pi",
                            help="Ziegler-Nichols PI gains for the bias "
                                 "current loop")
    add_config(p_tune)
    p_tune.add_argument("--setpoint", type=float, default=2.0,
                        help="probe step in A (default 2)")
    p_tune.add_argument("--kp-start", type=float, default=0.05,
                        help="first proportional gain probed (default 0.05)")
    p_tune.add_argument("--window", type=float, default=0.02,
                        help="post-step observation window in s (default 0.02)")
    p_tune.add_argument("--json", action="store_true",
                        help="machine-readable output")
    p_tune.set_defaults(func=_cmd_tune_pi)

    p_an = sub.add_parser("analyze",
                          help="recompute steady-window metrics from a "
                               "waveform file")
    p_an.add_argument("waveform", help="file written by `run`")
    p_an.add_argument("--frequency", type=float, default=60.0)
    p_an.add_argument("--b-sat", type=float, default=1.34)
    p_an.add_argument("--cycles", type=int, default=5,
                      help="whole cycles in the metric window (default 5)")
    p_an.add_argument("--startup", type=float, default=0.05,
                      help="seconds discarded before the window (default 0.05)")
    p_an.add_argument("--dc-target", type=float, default=None,
                      help="expected dc current for overshoot/settling")
    p_an.add_argument("--ripple-smooth", type=float, default=None,
                      metavar="SECONDS",
                      help="boxcar width applied to i_dc before the step "
                           "metrics (use one period of the slowest steady "
                           "ripple for switched-source runs)")
    p_an.set_defaults(func=_cmd_analyze)

    p_sw = sub.add_parser("sweep",
                          help="find the smallest dc bias that saturates "
                               "an outer leg")
    add_config(p_sw)
    p_sw.add_argument("--grid", type=float, default=0.25,
                      help="bias resolution in A (default 0.25)")
    p_sw.add_argument("--max-bias", type=float, default=30.0,
                      help="largest bias tried (default 30)")
    p_sw.add_argument("--duration", type=float, default=0.1,
                      help="run length per probe in s (default 0.1)")
    p_sw.add_argument("--json", action="store_true",
                      help="machine-readable output")
    p_sw.set_defaults(func=_cmd_sweep)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CvsrSimError as exc:
        for classes, code in _EXIT_BY_ERROR:
            if isinstance(exc, classes):
                print(f"error: {exc}", file=sys.stderr)
                return code
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNEXPECTED
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
