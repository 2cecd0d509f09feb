"""Acceptance suite: one PASS/FAIL line per criterion.

Each test records its line through :func:`record`; the lines are echoed in the
pytest terminal summary (see ``conftest.py``) so they appear in a plain
``pytest -v`` log.  Run this file directly to print them without pytest.
"""

from __future__ import annotations

import math
import time
from dataclasses import replace
from fractions import Fraction

import numpy as np

from oracles import central_difference, nearest_codeword, q_function, viterbi_rsc
from tokenlink import fec, modem, zeroout
from tokenlink.dct_tokenizer import decode_image, encode_image
from tokenlink.framing import FrameConfig, compute_detail_budget, pack_tokens, select_tokens, unpack_tokens
from tokenlink.pipeline import PipelineConfig, bundled_images, default_codebook, sweep, transmit
from tokenlink.vq import quantize, zero_pad

RESULTS: list[str] = []

# Turbo BER at the waterfall point, first measurement (0 errors in 1,000,448
# bits, seed 2024); the x3 tolerance is applied to max(frozen, 1 / bits).
FROZEN_TURBO_BER = 0.0


def record(n: int, ok: bool, text: str) -> None:
    line = f"ACCEPTANCE {n}: {'PASS' if ok else 'FAIL'} - {text}"
    RESULTS.append(line)
    print(line)


def test_1_clean_channel_identity():
    cb = default_codebook()
    cfg = PipelineConfig(snr_db=math.inf, target_cbr=0.05)
    ok, worst, notes = True, 0.0, []
    for name, img in bundled_images().items():
        start = time.perf_counter()
        recon, report = transmit(img, cfg, cb)
        elapsed = time.perf_counter() - start
        seq = encode_image(img, cfg.tokenizer, cb)
        expected = decode_image(zero_pad(select_tokens(seq, report.tokens_sent - 16), 16, 256), cfg.tokenizer, cb)
        same = np.array_equal(recon, expected) and np.array_equal(recon, decode_image(seq, cfg.tokenizer, cb))
        ok &= same and report.post_fec_ber == 0.0 and report.tokens_sent == 256 and elapsed < 5.0
        worst = max(worst, elapsed)
        notes.append(f"{name}:{'identical' if same else 'DIFFERS'}")
    record(1, ok, f"noiseless run == tokenizer round trip, post-FEC BER 0, max {worst:.2f} s/image ({', '.join(notes)})")
    assert ok


def test_2_budget_arithmetic():
    cfg = FrameConfig(key_count=32, target_cbr=1 / 256, b_token=12, height=256, width=256)
    b = compute_detail_budget(cfg, Fraction(1, 2), 4)
    img = bundled_images()["chelsea"]
    pcfg = PipelineConfig(snr_db=6.0, target_cbr=1 / 256, mcs_override=(4, Fraction(1, 2)))
    pcfg = replace(pcfg, tokenizer=replace(pcfg.tokenizer, key_count=32))
    _, report = transmit(img, pcfg)
    ok = (b.n_symbols, b.tokens, b.n_t) == (768, 128, 96) and (
        report.symbols, report.tokens_sent, report.tokens_budget, report.cbr_actual
    ) == (768, 128, 96, 1 / 256)
    record(2, ok, f"N_s={b.n_symbols} tokens_sent={report.tokens_sent} n_t={b.n_t} "
                  f"(pipeline: {report.symbols} symbols, cbr {report.cbr_actual})")
    assert ok


def test_3_turbo_waterfall():
    L, blocks = 1024, 977
    rng = np.random.default_rng(2024)
    spec = modem.constellation(1)
    rate = L / fec.mother_length(L)  # termination overhead counted against Eb
    params = modem.ChannelParams(2.0 + 10 * math.log10(rate))
    start = time.perf_counter()
    errors = 0
    for lo in range(0, blocks, 64):
        info = rng.integers(0, 2, (min(64, blocks - lo), L)).astype(np.int8)
        coded = fec.turbo_encode(info)
        rx = modem.awgn_channel(modem.modulate(coded.ravel(), spec), params, rng)
        llr = modem.demodulate_soft(rx, spec, 1.0, params.noise_variance).reshape(coded.shape)
        errors += int((fec.turbo_decode(llr) != info).sum())
    elapsed = time.perf_counter() - start
    n = blocks * L
    ber = errors / n
    ok = n >= 10**6 and ber <= 1e-3 and ber <= 3 * max(FROZEN_TURBO_BER, 1 / n) and elapsed < 300
    record(3, ok, f"rate 1/3, L=1024, BPSK, Eb/N0=2 dB: {errors} errors / {n} bits, BER={ber:.2e}, {elapsed:.1f} s")
    assert ok


def test_4_uncoded_bpsk():
    spec = modem.constellation(1)
    rng = np.random.default_rng(99)
    n = 2_000_000
    parts, ok = [], True
    for snr in (0.0, 2.0, 4.0):
        bits = rng.integers(0, 2, n)
        rx = modem.awgn_channel(modem.modulate(bits, spec), modem.ChannelParams(snr), rng)
        llr = modem.demodulate_soft(rx, spec, 1.0, modem.ChannelParams(snr).noise_variance)
        ber = float(np.mean((llr < 0) != bits))
        theory = q_function(math.sqrt(2 * 10 ** (snr / 10)))
        rel = ber / theory - 1
        ok &= abs(rel) <= 0.10
        parts.append(f"{snr:g} dB: {ber:.3e} vs {theory:.3e} ({rel:+.2%})")
    record(4, ok, f"uncoded BPSK vs Q(sqrt(2 Es/N0)) over {n} bits: " + "; ".join(parts))
    assert ok


def test_5_graceful_degradation():
    cb = default_codebook()
    images = bundled_images()
    ok_cbr, cbr_notes = True, []
    for name, img in images.items():
        rows = sweep(img, PipelineConfig(snr_db=6.0), "cbr", [0.001, 0.003, 0.006], trials=1, cb=cb)
        p = [r["psnr_db"] for r in rows]
        ok_cbr &= all(r["status"] == "ok" for r in rows) and p[0] < p[1] < p[2]
        cbr_notes.append(f"{name} " + "<".join(f"{v:.2f}" for v in p))
    ok_snr, snr_notes = True, []
    for name, img in images.items():
        rows = sweep(img, PipelineConfig(target_cbr=1 / 256), "snr_db", [1.0, 6.0, 11.0], trials=20, cb=cb, workers=4)
        p = [r["psnr_db"] for r in rows]
        ok_snr &= all(r["status"] == "ok" for r in rows) and p[0] <= p[1] <= p[2]
        snr_notes.append(f"{name} " + "<=".join(f"{v:.2f}" for v in p))
    ok = ok_cbr and ok_snr
    record(5, ok, "PSNR strictly up in CBR {0.001,0.003,0.006} @6 dB: " + ", ".join(cbr_notes)
           + " | mean PSNR (20 trials) non-decreasing in SNR {1,6,11} @CBR 1/256: " + ", ".join(snr_notes))
    assert ok


def test_6_zero_out_information_gradient():
    start = time.perf_counter()
    model, untrained = zeroout.reference_run()
    elapsed = time.perf_counter() - start
    data = zeroout.load_patches()
    curve = zeroout.evaluate_information_gradient(model, data, [4, 8, 12, 16])
    mses = [m for _, m in curve]
    monotone = all(b <= a + 1e-6 for a, b in zip(mses, mses[1:]))
    ok = monotone and mses[-1] < 0.25 * untrained and elapsed < 120
    record(6, ok, "MSE(t) " + ", ".join(f"t={t}:{m:.4f}" for t, m in curve)
           + f"; MSE(16)/untrained = {mses[-1] / untrained:.3f}; trained in {elapsed:.1f} s")
    assert ok


def test_7_gradient_check():
    rng = np.random.default_rng(7)
    worst = 0.0
    for trial in range(10):
        hidden = int(rng.integers(4, 24))
        n_tokens = int(rng.integers(2, 9))
        d = int(rng.integers(1, 5))
        p = int(rng.integers(4, 33))
        model = zeroout.TinyAutoencoder.init(p=p, n_tokens=n_tokens, token_dim=d, hidden=hidden, seed=trial)
        x = rng.normal(size=(int(rng.integers(1, 6)), p))
        t = int(rng.integers(0, n_tokens + 1))
        _, grads = zeroout.loss_and_grads(model, x, t)
        for name, arr in model.params().items():
            for idx in np.ndindex(arr.shape):
                num = central_difference(lambda: zeroout.loss_and_grads(model, x, t)[0], arr, idx)
                ana = grads[name][idx]
                # denominator floor keeps exactly-zero gradients (zeroed latents) well defined
                worst = max(worst, abs(num - ana) / max(abs(num), abs(ana), 1e-6))
    ok = worst <= 1e-4
    record(7, ok, f"analytic vs central-difference gradients, 10 random configs, every parameter (denominator floor 1e-6): max rel err {worst:.2e}")
    assert ok


def test_8_oracle_suites():
    rng = np.random.default_rng(8)
    cb = default_codebook()
    checks = {}

    v = rng.normal(scale=0.3, size=(1000, 4)) + cb.codewords[rng.integers(0, cb.K, 1000)]
    d2 = ((v[:, None, :] - cb.codewords[None]) ** 2).sum(axis=2)
    oracle = d2.argmin(axis=1)
    spot = all(nearest_codeword(v[i], cb.codewords) == oracle[i] for i in range(0, 1000, 100))
    checks["quantize==NN(1000)"] = spot and np.array_equal(quantize(v, cb), oracle)

    ok = True
    for b in range(1, 9):
        vals = np.arange(1 << b)
        streams = {pack_tokens([x], b).data for x in vals}
        ok &= len(streams) == vals.size and np.array_equal(unpack_tokens(pack_tokens(vals, b), b, vals.size), vals)
    for _ in range(1000):
        t = rng.integers(0, 4096, int(rng.integers(0, 200)))
        ok &= np.array_equal(unpack_tokens(pack_tokens(t, 12), 12, t.size), t)
    checks["pack/unpack bijection"] = bool(ok)

    checks["QPP bijective (188 lengths)"] = len(fec.qpp_table()) == 188 and all(
        np.array_equal(np.sort(fec.qpp_interleave(n, f1, f2)), np.arange(n)) for n, (f1, f2) in fec.qpp_table().items()
    )

    trellis = fec.Trellis()
    ok = True
    for _ in range(100):
        u = rng.integers(0, 2, int(rng.integers(4, 25))).astype(np.int8)
        par, tail = fec.rsc_encode(u, trellis)
        x = np.concatenate([u, tail[0::2]])
        z = np.concatenate([par, tail[1::2]])
        ls = 2 * ((1 - 2.0 * x) + rng.normal(0, 0.9, x.size)) / 0.81
        lp = 2 * ((1 - 2.0 * z) + rng.normal(0, 0.9, z.size)) / 0.81
        hard = (fec.constituent_decode(ls, lp, trellis) < 0).astype(int).tolist()
        ok &= hard == viterbi_rsc(ls.tolist(), lp.tolist(), trellis.next_state.tolist(), trellis.parity.tolist())
    checks["BCJR==Viterbi(100)"] = bool(ok)

    ok = True
    for m in (1, 2, 4, 6):
        spec = modem.constellation(m)
        ok &= int((spec.levels.astype(np.int64) ** 2).sum()) == spec.order * spec.energy_scale
        ok &= abs(np.mean(np.abs(spec.points) ** 2) - 1) <= 1e-12
        where = {tuple(p): k for k, p in enumerate(spec.levels.tolist())}
        for (i, q), k in where.items():
            for nb in (where.get((i + 2, q)), where.get((i, q + 2))):
                if nb is not None:
                    ok &= bin(k ^ nb).count("1") == 1
    checks["Gray+unit energy m=1,2,4,6"] = bool(ok)

    passed = all(checks.values())
    record(8, passed, "; ".join(f"{k}: {'ok' if v else 'FAILED'}" for k, v in checks.items()))
    assert passed


if __name__ == "__main__":
    for fn in [v for k, v in sorted(globals().items()) if k.startswith("test_")]:
        try:
            fn()
        except AssertionError:
            pass
