import math
from fractions import Fraction

import numpy as np
import pytest

from tokenlink import amc, fec, modem
from tokenlink.errors import ConfigError
from tokenlink.framing import FrameConfig, compute_detail_budget
from tokenlink.pipeline import PipelineConfig, plan_link, symbols_for


def test_default_table_shape():
    t = amc.default_table()
    assert [e.label for e in t] == ["QPSK-1/3", "QPSK-1/2", "16QAM-1/3", "16QAM-1/2", "16QAM-3/4", "64QAM-2/3"]
    assert t.entries[0].min_snr_db == -math.inf


def test_fallback_below_every_threshold():
    e = amc.select_mcs(-20.0)
    assert (e.bits_per_symbol, e.code_rate) == (2, Fraction(1, 3))


def test_threshold_is_inclusive():
    for e in amc.default_table().entries[1:]:
        assert amc.select_mcs(e.min_snr_db) == e
        assert amc.select_mcs(np.nextafter(e.min_snr_db, -np.inf)) != e


def test_reference_operating_points():
    # thresholds are calibrated, so 6 dB lands on 16-QAM at rate 1/3
    assert amc.select_mcs(1.0).label == "QPSK-1/3"
    assert amc.select_mcs(6.0).label == "16QAM-1/3"
    assert amc.select_mcs(11.0).label == "16QAM-3/4"
    assert amc.select_mcs(math.inf).label == "64QAM-2/3"


def test_selection_monotone():
    snrs = np.linspace(-10, 30, 401)
    eff = [amc.select_mcs(s).efficiency for s in snrs]
    assert all(b >= a for a, b in zip(eff, eff[1:]))


def test_entries_supported_by_fec_and_modem():
    for e in amc.default_table():
        assert e.code_rate in fec.supported_rates()
        assert e.bits_per_symbol in modem.SUPPORTED_BITS


@pytest.mark.parametrize(
    "text",
    [
        "",
        "1.0 2 1/3 A",
        "-inf 2 1/3 A\n3 2 1/2 B\n3 4 1/2 C",
        "-inf 2 1/2 A\n3 2 1/3 B",
        "-inf 2 1/3 A\n3 3 1/2 B",
        "-inf 2 1/3 A\n3 2 2/5 B",
        "-inf 2 1/3",
        "-inf two 1/3 A",
    ],
)
def test_invalid_tables(text):
    with pytest.raises(ConfigError):
        amc.McsTable.parse(text)


def test_table_round_trip(tmp_path):
    t = amc.default_table()
    (tmp_path / "t.txt").write_text(t.dumps())
    assert amc.McsTable.load(tmp_path / "t.txt").entries == t.entries


def test_compute_cbr():
    assert amc.compute_cbr(256 * 256 * 3, 256, 256) == 1.0
    assert amc.compute_cbr(768, 256, 256) == 1 / 256 == 0.00390625
    assert amc.compute_cbr(0, 256, 256) == 0.0
    with pytest.raises(ValueError):
        amc.compute_cbr(1, 0, 5)


def test_cbr_never_exceeds_target():
    for cbr in (0.001, 0.002, 0.003, 1 / 256, 0.006, 0.01):
        for e in amc.default_table():
            b = compute_detail_budget(FrameConfig(target_cbr=cbr), e.code_rate, e.bits_per_symbol)
            if not b.feasible:
                continue
            assert b.tokens * 12 <= b.n_symbols * e.efficiency
            # the link planner also counts block padding and termination bits
            plan = plan_link(PipelineConfig(target_cbr=cbr, mcs_override=(e.bits_per_symbol, e.code_rate)))
            assert amc.compute_cbr(symbols_for(plan.tokens, 12, e), 256, 256) <= cbr


def test_block_error_rate_extremes():
    assert amc.block_error_rate(2, Fraction(1, 3), 10.0, blocks=5, info_len=40) == 0.0
    assert amc.block_error_rate(6, Fraction(3, 4), -5.0, blocks=5, info_len=40) == 1.0


def test_calibrate_threshold_bisection():
    thr = amc.calibrate_threshold(2, Fraction(1, 2), blocks=20, info_len=256, lo=-4, hi=8, resolution=0.5)
    assert -4 <= thr <= 8
    assert amc.block_error_rate(2, Fraction(1, 2), thr, blocks=20, info_len=256) <= 0.1
    assert amc.block_error_rate(2, Fraction(1, 2), thr - 0.5, blocks=20, info_len=256) > 0.1


def test_table_from_calibration_drops_dominated_rows():
    rows = [
        (2, Fraction(1, 3), "A", -2.0),
        (2, Fraction(1, 2), "B", 1.0),
        (4, Fraction(1, 3), "C", 0.5),   # more efficient than B at a lower SNR: B dropped
        (4, Fraction(1, 2), "D", 6.0),
    ]
    t = amc.table_from_calibration(rows)
    assert [e.label for e in t] == ["A", "C", "D"]
    assert t.entries[0].min_snr_db == -math.inf
