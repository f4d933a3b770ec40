"""Command-line entry point.

Examples
--------
::

    fieldreuse ber-sweep --preset fig7 --out out/fig7.csv
    fieldreuse divergence --preset table2 --seed 3 --out out/table2.json
    fieldreuse learn --config my.json
    fieldreuse playback --preset fig14-15-analog --out out/pb.csv
    fieldreuse wotan --in noise.csv --fs 100000 --freq 8 --beta 0
    fieldreuse constellation --k 4
"""

import argparse
import json
import sys

import numpy as np

from .environment import WotanParams, average_ssl, wotan_u10
from .errors import ConfigError, NumericError, ParamError, ValidationError
from .harness.config import ScenarioConfig, load_config, preset
from .harness.reports import csv_text, scenario_reports, sibling, write_text
from .harness.scenarios import (run_ber_sweep, run_divergence_table, run_learning_curves,
                                run_playback_demo, substream)
from .modem import build_qam, get_dither_map

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3

RUNNERS = {
    "ber-sweep": run_ber_sweep,
    "divergence": run_divergence_table,
    "learn": run_learning_curves,
    "playback": run_playback_demo,
}


def resolve_config(scenario, config_path=None, preset_name=None, seed=None):
    """Build the run configuration from a file and/or preset plus overrides."""
    if config_path:
        cfg = load_config(config_path, base=preset_name, defaults={"scenario": scenario})
    elif preset_name:
        cfg = preset(preset_name)
    else:
        cfg = ScenarioConfig(scenario=scenario)
    if cfg.scenario != scenario:
        raise ConfigError(f"configuration is for {cfg.scenario!r}, not {scenario!r}")
    if seed is not None:
        cfg.seed = int(seed)
    return cfg.validate()


def _emit(reports, out):
    if out is None:
        sys.stdout.write(reports[0][2])
        return
    for suffix, ext, text in reports:
        write_text(out if suffix is None else sibling(out, suffix, ext), text)


def cmd_scenario(args):
    cfg = resolve_config(args.command, args.config, args.preset, args.seed)
    out = args.out if args.out is not None else cfg.out
    if out is not None:
        cfg.out = out
    result = RUNNERS[args.command](cfg)
    _emit(scenario_reports(cfg, result), out)
    return EXIT_OK


def read_samples(path):
    """One column of real samples or two columns (re, im); a header is allowed."""
    try:
        data = np.genfromtxt(path, delimiter=",", dtype=float)
    except OSError as exc:
        raise ParamError(str(exc)) from None
    data = np.atleast_1d(data)
    if data.ndim == 2:
        data = data[~np.isnan(data).any(axis=1)]
        if data.shape[1] == 1:
            return data[:, 0]
        if data.shape[1] == 2:
            return data[:, 0] + 1j * data[:, 1]
        raise ParamError(f"expected 1 or 2 columns, got {data.shape[1]}")
    return data[~np.isnan(data)]


def cmd_wotan(args):
    x = read_samples(args.input)
    obs = average_ssl(x, args.fs, args.freq, window=args.window,
                      calibration_db=args.calibration, nperseg=args.nperseg)
    res = wotan_u10(obs, WotanParams(Q=args.Q, beta=args.beta, f0=args.f0))
    text = json.dumps(res.to_dict(), indent=2, sort_keys=True) + "\n"
    if args.out:
        write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_constellation(args):
    if args.dither:
        dmap = get_dither_map(args.dither, k=args.k)
        f_idx, g_idx = dmap.sample(args.n_symbols, substream(args.seed or 0, 0, 0))
        pts = dmap.c_g.points[g_idx]
        rows = [{"n": i, "re": float(p.real), "im": float(p.imag), "label": int(lab)}
                for i, (p, lab) in enumerate(zip(pts, f_idx))]
    else:
        c = build_qam(args.k)
        rows = [{"n": i, "re": float(p.real), "im": float(p.imag), "label": i}
                for i, p in enumerate(c.points)]
    text = csv_text(rows, ["n", "re", "im", "label"])
    if args.out:
        write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="fieldreuse",
                                description="Dither replay, DFE and channel playback simulator.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("ber-sweep", "BER of reference and dithered arms versus SNR"),
                        ("divergence", "closed-form and empirical MSD/KL table"),
                        ("learn", "adaptive equalizer learning curves"),
                        ("playback", "channel playback with and without RPE")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", help="JSON configuration file")
        s.add_argument("--preset", help="named preset used as the base configuration")
        s.add_argument("--seed", type=int, help="override the configured seed")
        s.add_argument("--out", help="report path (default: stdout)")
        s.set_defaults(func=cmd_scenario)

    w = sub.add_parser("wotan", help="wind speed from an ambient-noise recording")
    w.add_argument("--in", dest="input", required=True, help="CSV of samples")
    w.add_argument("--fs", type=float, required=True, help="sample rate in Hz")
    w.add_argument("--freq", type=float, required=True, help="analysis frequency in kHz")
    w.add_argument("--beta", type=float, default=0.0)
    w.add_argument("--Q", type=float, default=-19.0)
    w.add_argument("--f0", type=float, default=8.0)
    w.add_argument("--window", type=float, default=None, help="seconds to average")
    w.add_argument("--calibration", type=float, default=0.0, help="dB offset")
    w.add_argument("--nperseg", type=int, default=1024)
    w.add_argument("--out")
    w.set_defaults(func=cmd_wotan)

    c = sub.add_parser("constellation", help="dump constellation or dither scatter points")
    c.add_argument("--k", type=int, default=4, help="bits per symbol")
    c.add_argument("--dither", help="sample transmitted points from this dither map")
    c.add_argument("--n-symbols", type=int, default=1000)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out")
    c.set_defaults(func=cmd_constellation)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
