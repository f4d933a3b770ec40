"""Deterministic CSV and JSON report writers.

Every report carries the fully resolved configuration. CSV files start with
one comment line ``# config {...}`` holding it as compact JSON (skip it with
``comment="#"`` in most readers); JSON reports hold it under ``"config"``.
Floats are written with ``repr`` so a rerun with the same configuration
produces identical bytes.
"""

import csv
import io
import json
import os

import numpy as np

__all__ = ["format_value", "to_jsonable", "csv_text", "json_text", "write_text",
           "scenario_reports", "sibling"]


def format_value(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def to_jsonable(obj):
    """Recursively convert numpy scalars/arrays and complex numbers."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def _config_dict(config):
    # where a report is written does not change its content
    d = config.to_dict() if hasattr(config, "to_dict") else dict(config)
    d.pop("out", None)
    return d


def csv_text(rows, columns=None, config=None):
    """Render dict rows as CSV text, optionally preceded by the config line."""
    rows = list(rows)
    if columns is None:
        columns = []
        for r in rows:
            columns.extend(k for k in r if k not in columns)
    buf = io.StringIO()
    if config is not None:
        cfg = json.dumps(to_jsonable(_config_dict(config)), sort_keys=True,
                         separators=(",", ":"))
        buf.write(f"# config {cfg}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([format_value(r.get(c)) for c in columns])
    return buf.getvalue()


def json_text(payload, config=None):
    body = dict(payload)
    if config is not None:
        body = {"config": _config_dict(config), **body}
    return json.dumps(to_jsonable(body), indent=2, sort_keys=True) + "\n"


def write_text(path, text):
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def sibling(path, suffix, ext):
    """``out/run.csv`` -> ``out/run_<suffix>.<ext>``."""
    stem, _ = os.path.splitext(path)
    return f"{stem}_{suffix}.{ext}"


BER_COLUMNS = ["snr_db", "arm", "equalizer", "dither", "ber", "errors", "n_bits", "seed"]
LEARN_COLUMNS = ["n", "arm", "param", "mse_db"]


def scenario_reports(cfg, result):
    """Map a runner result to ``[(suffix, ext, text), ...]``.

    The first entry is the primary report (suffix ``None``); the others are
    written next to it.
    """
    sc = cfg.scenario
    if sc == "ber-sweep":
        return [(None, "csv", csv_text(result, BER_COLUMNS, cfg))]
    if sc == "learn":
        return [(None, "csv", csv_text(result, LEARN_COLUMNS, cfg))]
    if sc == "divergence":
        return [(None, "json", json_text({"rows": result}, cfg))]
    if sc == "playback":
        power, snr, summary = result
        return [(None, "csv", csv_text(power, None, cfg)),
                ("snr", "csv", csv_text(snr, None, cfg)),
                ("summary", "json", json_text({"summary": summary}, cfg))]
    raise ValueError(f"no report layout for {sc!r}")
