"""Seeded experiment runners.

Random streams are derived as ``default_rng([seed, point, stream, trial])``
so that every (operating point, stream, trial) job is reproducible on its
own. The reference and dithered arms of one job read the same noise stream,
so their difference isolates the effect of the dither.
"""

import hashlib

import numpy as np

from ..bitlayer import BitStream, CodecSpec, count_errors, decode, encode
from ..channel import (AmplifierModel, NoiseModel,
                       amplifier_apply, channel_matrix, propagate, snr_to_variance,
                       synth_channel)
from ..divergence import (conditional_moments, empirical_divergence, kl_objective,
                          msd_closed_form, msd_nonlinear)
from ..equalize import (AdaptiveConfig, design_mmse, design_zf, run_dfe,
                        run_lms_dfe, run_rls_dfe, soft_decision_snr, windowed_mse_db)
from ..errors import ConfigError
from ..modem import SymbolSequence, demap_symbols, get_dither_map, map_symbols
from ..playback import (PlaybackConfig, compute_rpe, estimate_tvir, fit_rpe_model,
                        gen_rpe_noise, power_trace, replay)

__all__ = [
    "STREAM_SYMBOLS",
    "STREAM_NOISE",
    "substream",
    "build_channel",
    "design_equalizer",
    "sample_pair",
    "simulate_pair",
    "run_ber_sweep",
    "run_divergence_table",
    "run_learning_curves",
    "run_playback_demo",
    "binomial_sigma",
]

STREAM_SYMBOLS = 0
STREAM_NOISE = 1
STREAM_PROBE = 2
STREAM_TEST = 3
STREAM_REPLAY = 4
STREAM_PLAYBACK_NOISE = 5


def substream(seed, point, stream, trial=0):
    return np.random.default_rng([int(seed), int(point), int(stream), int(trial)])


def build_channel(cfg, length):
    return synth_channel(cfg.channel, length, cfg.n_receivers)


def design_equalizer(kind, ch, cfg, noise_variance, signal_variance=1.0):
    """Closed-form DFE for a static channel."""
    if not ch.is_static:
        raise ConfigError(f"{kind} design needs a static channel")
    H = channel_matrix(ch, cfg.L_f + ch.L, cfg.L_f)
    if kind == "zf":
        return design_zf(H, cfg.L_b, cfg.n0), H
    if kind == "mmse":
        return design_mmse(H, noise_variance, signal_variance, cfg.L_b, cfg.n0), H
    raise ConfigError(f"no closed-form design for {kind!r}")


def sample_pair(dmap, n, rng, f_index=None):
    """Virtual and transmitted labels drawn from ``dmap``.

    When ``f_index`` is given, only the transmitted label is drawn, from its
    conditional law given ``f``.
    """
    if f_index is None:
        return dmap.sample(n, rng)
    f_index = np.asarray(f_index)
    cond = dmap.joint / dmap.prior[:, None]
    cdf = np.cumsum(cond, axis=1)
    u = rng.random(f_index.size)
    g_index = np.minimum((u[:, None] > cdf[f_index]).sum(axis=1), dmap.c_g.size - 1)
    return f_index, g_index


def simulate_pair(ch, w, dmap, noise_variance, f_index, g_index, noise_rng,
                  amplifier=None, genie=False):
    """Run the direct and dithered arms through the same channel and noise.

    Returns ``(trace_ref, trace_dither)``. The reference arm transmits ``f``
    and slices on the virtual constellation; the dithered arm transmits
    ``g`` (optionally through ``amplifier``) and removes ``m = g - f``. With
    ``genie=True`` the true symbols are fed back instead of decisions.
    """
    n = f_index.size
    f = dmap.c_f.points[f_index]
    g = dmap.c_g.points[g_index]
    m = g - f
    n_out = n + w.n0
    w_noise = NoiseModel(noise_variance).sample((ch.K, n_out), noise_rng)
    tx = g if amplifier is None else amplifier_apply(g, amplifier)
    y_ref = propagate(f, ch, n_out=n_out) + w_noise
    y_dit = propagate(tx, ch, n_out=n_out) + w_noise
    train = f if genie else None
    ref = run_dfe(y_ref, w, dmap.c_f, training=train, c_f=dmap.c_f, n_symbols=n)
    dit = run_dfe(y_dit, w, dmap.c_g, dither=m, training=train, c_f=dmap.c_f, n_symbols=n)
    return ref, dit


def binomial_sigma(p, n):
    return float(np.sqrt(max(p * (1 - p), 0.0) / n))


def _codec(cfg):
    return CodecSpec("uncoded") if cfg.codec == "uncoded" else CodecSpec()


def run_ber_sweep(cfg):
    """BER of direct and dithered transmission versus SNR.

    Returns a list of row dicts with keys ``snr_db, arm, equalizer, dither,
    ber, errors, n_bits, seed``.
    """
    dmap = get_dither_map(cfg.dither)
    codec = _codec(cfg)
    k_f = dmap.c_f.k
    ch = build_channel(cfg, 1)
    skip = cfg.L_b
    rows = []
    for p, snr in enumerate(cfg.snr_list):
        sym_rng = substream(cfg.seed, p, STREAM_SYMBOLS)
        # payload -> coded bits -> virtual symbols
        n_info = cfg.n_bits
        payload = BitStream.random(n_info, sym_rng)
        coded = encode(payload, codec)
        pad = (-len(coded)) % k_f
        coded_bits = np.concatenate([coded.bits, np.zeros(pad, dtype=np.uint8)])
        # leading symbols are excluded from metrics; prepend random fillers
        filler = sym_rng.integers(0, dmap.c_f.size, skip)
        f_idx = np.concatenate([filler, map_symbols(coded_bits, dmap.c_f).index])
        f_idx, g_idx = sample_pair(dmap, f_idx.size, sym_rng, f_index=f_idx)
        var = snr_to_variance(snr)
        for eq in cfg.equalizers:
            w, _ = design_equalizer(eq, ch, cfg, var)
            ref, dit = simulate_pair(ch, w, dmap, var, f_idx, g_idx,
                                     substream(cfg.seed, p, STREAM_NOISE))
            for arm, tr in (("reference", ref), ("dither", dit)):
                dec = SymbolSequence(tr.decisions[skip:], dmap.c_f)
                bits = demap_symbols(dec).bits[:len(coded)]
                est = decode(BitStream(bits), codec)
                rep = count_errors(payload, est)
                rows.append({"snr_db": float(snr), "arm": arm, "equalizer": eq,
                             "dither": cfg.dither, "ber": rep.ber, "errors": rep.errors,
                             "n_bits": rep.n_bits, "seed": cfg.seed})
    return rows


def _digest(w):
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(w.q_f).tobytes())
    h.update(np.ascontiguousarray(w.q_b).tobytes())
    h.update(str(w.n0).encode())
    return h.hexdigest()[:16]


def run_divergence_table(cfg, genie=False):
    """Closed-form and empirical MSD/KL for each dither map and DFE design."""
    snr = cfg.snr_list[0]
    var = snr_to_variance(snr)
    ch = build_channel(cfg, 1)
    rows = []
    maps = list(cfg.dithers) + ["none"]
    for mi, name in enumerate(maps):
        dmap = get_dither_map(name, k=2)
        f_idx, g_idx = sample_pair(dmap, cfg.n_symbols, substream(cfg.seed, mi, STREAM_SYMBOLS))
        for eq in cfg.equalizers:
            w, H = design_equalizer(eq, ch, cfg, var)
            amp = (AmplifierModel(cfg.amplifier_alpha) if cfg.amplifier_alpha else None)
            ref, dit = simulate_pair(ch, w, dmap, var, f_idx, g_idx,
                                     substream(cfg.seed, mi, STREAM_NOISE),
                                     amplifier=amp, genie=genie)
            emp = empirical_divergence(ref, dit, f_idx, skip=cfg.L_b)
            power = dmap.power
            moms = conditional_moments(w, H, var, dmap)
            row = {
                "channel": cfg.channel,
                "equalizer": eq,
                "weights_digest": _digest(w),
                "dither": name,
                "dither_power": power,
                "msd_closed": msd_closed_form(w, H, power),
                "msd_empirical": emp["msd"],
                "kl_closed": kl_objective(moms),
                "kl_empirical": emp["kl"],
                "n_symbols": cfg.n_symbols,
                "snr_db": float(snr),
                "seed": cfg.seed,
            }
            if cfg.amplifier_alpha:
                row["alpha"] = cfg.amplifier_alpha
                row["msd_nonlinear"] = msd_nonlinear(w, H, power, cfg.amplifier_alpha)
            rows.append(row)
    return rows


def _ensemble_curve(err_sets, window):
    p = np.mean([np.abs(e) ** 2 for e in err_sets], axis=0)
    return windowed_mse_db(p, window)


def run_learning_curves(cfg):
    """Learning curves for the adaptive DFE.

    For ``lms`` the arms are ``reference`` (direct transmission of ``f``) and
    ``dither`` (transmission of ``g`` with the dither removed), one curve per
    step size. For ``rls`` a third arm, ``playback``, replays ``f`` through a
    channel tracked from the dithered transmission, without RPE noise.
    The MSE is ``|f - f_hat|^2`` against the true virtual symbols, averaged
    over trials and a trailing window. Rows: ``n, arm, param, mse_db``.
    """
    algo = cfg.equalizers[0]
    if algo not in ("lms", "rls"):
        raise ConfigError("learning curves need an adaptive equalizer ('lms' or 'rls')")
    dmap = get_dither_map(cfg.dither if cfg.dither != "none" else "m1_down")
    snr = cfg.snr_list[0]
    var = snr_to_variance(snr)
    n = cfg.n_symbols
    params = cfg.mu_list if algo == "lms" else [cfg.lam]
    curves = {}
    diverged = {}
    for pi, par in enumerate(params):
        acfg = AdaptiveConfig(algorithm=algo, mu=par if algo == "lms" else 0.0,
                              lam=par if algo == "rls" else cfg.lam, delta=cfg.delta,
                              training_length=cfg.training_length, L_f=cfg.L_f,
                              L_b=cfg.L_b, n0=cfg.n0, pll=cfg.pll,
                              pll_gains=tuple(cfg.pll_gains))
        errs = {}
        for t in range(cfg.n_trials):
            arms = _learning_trial(cfg, acfg, dmap, var, n, t, algo)
            for arm, (soft, f, div) in arms.items():
                errs.setdefault(arm, []).append(f - soft)
                if div is not None:
                    diverged[(arm, par)] = min(div, diverged.get((arm, par), div))
        for arm, es in errs.items():
            curves[(arm, par)] = _ensemble_curve(es, cfg.window)
    rows = []
    for (arm, par), c in curves.items():
        cut = diverged.get((arm, par))
        for i in range(c.size):
            if cut is not None and i >= cut:
                rows.append({"n": i, "arm": arm, "param": par, "mse_db": "diverged"})
                break
            rows.append({"n": i, "arm": arm, "param": par, "mse_db": float(c[i])})
    return rows


def _learning_trial(cfg, acfg, dmap, var, n, trial, algo):
    sym_rng = substream(cfg.seed, 0, STREAM_SYMBOLS, trial)
    f_idx, g_idx = sample_pair(dmap, n, sym_rng)
    f = dmap.c_f.points[f_idx]
    g = dmap.c_g.points[g_idx]
    n_out = n + acfg.n0
    ch = build_channel(cfg, n_out)
    noise = NoiseModel(var).sample((ch.K, n_out), substream(cfg.seed, 0, STREAM_NOISE, trial))
    y_ref = propagate(f, ch, n_out=n_out) + noise
    y_dit = propagate(g, ch, n_out=n_out) + noise
    runner = run_lms_dfe if algo == "lms" else run_rls_dfe
    kw = dict(training=f, c_f=dmap.c_f, n_symbols=n, window=cfg.window)
    ref = runner(y_ref, acfg, c_g=dmap.c_f, **kw)
    dit = runner(y_dit, acfg, c_g=dmap.c_g, dither=g - f, **kw)
    out = {"reference": (ref.soft, f, ref.diverged_at), "dither": (dit.soft, f, dit.diverged_at)}
    if algo == "rls":
        tvir = estimate_tvir(y_dit, np.concatenate([g, np.zeros(acfg.n0)]),
                             ch.L, ("exponential", cfg.estimator_lambda))
        pb_noise = NoiseModel(var).sample((ch.K, n_out),
                                          substream(cfg.seed, 0, STREAM_PLAYBACK_NOISE, trial))
        y_pb = replay(np.concatenate([f, np.zeros(acfg.n0)]), tvir,
                      ambient=pb_noise, cfg=PlaybackConfig(rpe=False))
        pb = runner(y_pb, acfg, c_g=dmap.c_f, **kw)
        out["playback"] = (pb.soft, f, pb.diverged_at)
    return out


def run_playback_demo(cfg):
    """Probe, estimate, model the RPE and replay a fresh test signal.

    A known probe is received over a time-varying channel and tracked. The
    same channel span is then used three ways for a new test signal: its
    true reception (what would have been received had the test signal been
    sent instead of the probe), conventional replay through the tracked
    taps, and replay with synthetic RPE noise added.

    Returns ``(power_rows, snr_rows, summary)``. ``power_rows`` hold trailing
    window power traces in dB per arm plus the synthetic RPE alone;
    ``snr_rows`` hold the RLS-DFE slicer SNR per window for each arm.
    """
    snr = cfg.snr_list[0]
    var = snr_to_variance(snr)
    n_test = cfg.n_symbols
    n_out = n_test + cfg.n0
    ch = build_channel(cfg, n_out)
    c = get_dither_map("none", k=2).c_f
    probe = c.points[substream(cfg.seed, 0, STREAM_PROBE).integers(0, c.size, n_out)]
    y_probe = propagate(probe, ch, n_out=n_out)
    y_probe = y_probe + NoiseModel(var).sample(y_probe.shape, substream(cfg.seed, 0, STREAM_NOISE))
    tvir = estimate_tvir(y_probe, probe, ch.L, ("exponential", cfg.estimator_lambda))
    rpe = compute_rpe(y_probe, probe, tvir)
    warm = min(n_out // 10, 500)
    model = fit_rpe_model(rpe[:, warm:], cfg.max_lag, sigma_g2=1.0)

    t_idx = substream(cfg.seed, 0, STREAM_TEST).integers(0, c.size, n_test)
    truth = c.points[t_idx]
    g_t = np.concatenate([truth, np.zeros(cfg.n0)])
    amb = NoiseModel(var).sample((ch.K, n_out), substream(cfg.seed, 0, STREAM_PLAYBACK_NOISE))
    y_true = propagate(g_t, ch, n_out=n_out) + amb
    y_off = replay(g_t, tvir, ambient=amb, cfg=PlaybackConfig(rpe=False))
    e_syn = gen_rpe_noise(model, n_out, 1.0, substream(cfg.seed, 0, STREAM_REPLAY))
    y_on = y_off + e_syn

    acfg = AdaptiveConfig(algorithm="rls", lam=cfg.lam, delta=cfg.delta,
                          training_length=cfg.training_length, L_f=cfg.L_f,
                          L_b=cfg.L_b, n0=cfg.n0, pll=cfg.pll,
                          pll_gains=tuple(cfg.pll_gains))
    arms = {"true": y_true, "rpe_on": y_on, "rpe_off": y_off}
    traces = {a: run_rls_dfe(y, acfg, c_g=c, training=truth, c_f=c, n_symbols=n_test,
                             window=cfg.window)
              for a, y in arms.items()}

    ptr = {a: power_trace(y[:, :n_test], cfg.window) for a, y in arms.items()}
    ptr["rpe_alone"] = power_trace(e_syn[:, :n_test], cfg.window)
    power_rows = [{"n": i, **{a: float(v[i]) for a, v in ptr.items()}} for i in range(n_test)]
    sdsnr = {a: soft_decision_snr(tr, cfg.window) for a, tr in traces.items()}
    snr_rows = [{"window": j, **{a: float(v[j]) for a, v in sdsnr.items()}}
                for j in range(len(sdsnr["true"]))]
    span = slice(warm, n_test)
    summary = {
        "mean_power_db": {a: float(10 * np.log10(np.mean(np.abs(y[:, span]) ** 2)))
                          for a, y in arms.items()},
        "soft_snr_mean_db": {a: float(np.mean(v)) for a, v in sdsnr.items()},
        "rpe_to_noise_ratio_db": float(10 * np.log10(
            np.real(np.trace(model.R[0])) / ch.K / var)),
        "mse_db": {a: float(10 * np.log10(np.mean(np.abs(truth - tr.soft)[warm:] ** 2)))
                   for a, tr in traces.items()},
        "warmup": warm,
    }
    return power_rows, snr_rows, summary
