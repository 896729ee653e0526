import json

import numpy as np
import pytest

from rodessa.calibration import (
    CalibrationError,
    CalibrationTable,
    _bisect_c,
    _reference,
    _standardized,
    calibrate_cs_tuning,
    calibrate_tuning,
    calibration_table,
    default_window,
    flagging_quantiles,
    rank_curve,
    reference_weights,
)
from rodessa.fit import RodessaConfig
from rodessa.series import EmbeddingSpec, MultivariateSeries
from rodessa.sim import SCENARIOS, generate


class TestTuning:
    def test_mean_weight_increases_with_c(self):
        ref = _reference(70, 4, 50, 0)
        grid = np.linspace(1.0, 20.0, 40)
        means = [np.mean(_standardized(ref.t_cell, c)) for c in grid]
        assert np.all(np.diff(means) > 0)
        assert means[-1] > 0.99

    def test_delta_close_to_one_gives_large_c(self):
        c_lo, _ = calibrate_tuning(40, 2, 20, 0.9, 0.9, 50, 0)
        c_hi, _ = calibrate_tuning(40, 2, 20, 0.99, 0.9, 50, 0)
        assert c_hi > c_lo

    def test_deterministic(self):
        a = calibrate_tuning.__wrapped__(40, 3, 20, 0.9, 0.9, 60, 11)
        b = calibrate_tuning.__wrapped__(40, 3, 20, 0.9, 0.9, 60, 11)
        assert a == b

    def test_self_consistency(self):
        c1, c2 = calibrate_tuning(70, 4, 35, 0.9, 0.9, 200, 0)
        w_cell, w_case = reference_weights(70, 4, c1, c2, 200, 987654)
        assert abs(w_cell.mean() - 0.9) < 0.01
        assert abs(w_case.mean() - 0.9) < 0.01

    def test_validation(self):
        with pytest.raises(ValueError):
            calibrate_tuning(70, 4, 35, 1.0, 0.9)
        with pytest.raises(ValueError):
            calibrate_tuning(70, 4, 70, 0.9, 0.9)

    def test_unbracketed_root(self):
        with pytest.raises(CalibrationError, match="not bracketed"):
            _bisect_c(lambda c: 0.5, 0.9, "c1")


class TestQuantiles:
    def test_extremes_and_monotone(self):
        c1, c2 = calibrate_tuning(40, 2, 20, 0.9, 0.9, 50, 0)
        w_cell, w_case = reference_weights(40, 2, c1, c2, 50, 0)
        q0 = flagging_quantiles(40, 2, 20, c1, c2, 0.0, 50, 0)
        q1 = flagging_quantiles(40, 2, 20, c1, c2, 1.0, 50, 0)
        assert q0 == (w_cell.min(), w_case.min())
        assert q1 == (w_cell.max(), w_case.max())
        qs = [flagging_quantiles(40, 2, 20, c1, c2, a, 50, 0) for a in (0.001, 0.01, 0.05, 0.2)]
        assert all(x[0] <= y[0] and x[1] <= y[1] for x, y in zip(qs, qs[1:]))

    def test_hold_out_flag_rate(self):
        t = calibration_table(70, 4, 35, alpha=0.01, replications=200, seed=0)
        w_cell, w_case = reference_weights(70, 4, t.c1, t.c2, 200, 4242)
        assert abs(np.mean(w_cell < t.q_cell) - 0.01) < 0.005
        assert abs(np.mean(w_case < t.q_case) - 0.01) < 0.005

    def test_alpha_validation(self):
        with pytest.raises(ValueError):
            flagging_quantiles(40, 2, 20, 4.0, 3.0, 1.5)


class TestCache:
    def test_json_round_trip_and_cache(self, tmp_path):
        t = calibration_table(30, 2, 15, replications=40, seed=3, cache_dir=tmp_path)
        files = list(tmp_path.glob("calibration_*.json"))
        assert len(files) == 1
        doc = json.loads(files[0].read_text())
        assert list(doc) == ["c1", "c2", "q_cell", "q_case", "N", "p", "L", "delta_c",
                             "delta_r", "alpha", "replications", "seed"]
        assert CalibrationTable.from_json(files[0].read_text()) == t
        again = calibration_table(30, 2, 15, replications=40, seed=3, cache_dir=tmp_path)
        assert again == t


class TestWindow:
    def test_examples(self):
        assert default_window(70, 4) == 56
        assert default_window(70, 4, "half") == 35
        assert default_window(176, 6) == 151

    def test_large_p_uses_half(self):
        assert default_window(100, 12) == 50

    def test_clamped(self):
        assert 1 < default_window(3, 1) < 3
        with pytest.raises(ValueError):
            default_window(70, 4, "golden")


class TestCs:
    def test_cs_tuning_positive_and_deterministic(self):
        a = calibrate_cs_tuning.__wrapped__(40, 2, 20, 0.9, 40, 1)
        b = calibrate_cs_tuning.__wrapped__(40, 2, 20, 0.9, 40, 1)
        assert a == b and 1.0 < a < 20.0


class TestRankCurve:
    def test_scenario_elbow_and_monotone(self):
        s, _ = generate(SCENARIOS[3], 21)
        curve = rank_curve(s, EmbeddingSpec(70, 35), RodessaConfig(1, seed=0), 5)
        v = np.array([x for _, x in curve])
        assert [r for r, _ in curve] == [1, 2, 3, 4, 5]
        assert np.all(np.diff(v) <= 1e-8 * v[0])
        drops = -np.diff(v)
        assert drops[0] == drops.max()

    def test_full_rank_noiseless_zero(self):
        i = np.arange(1, 13)
        s = MultivariateSeries(np.column_stack([np.cos(i), np.sin(0.5 * i) + 0.1 * i]))
        spec = EmbeddingSpec(12, 4)
        curve = rank_curve(s, spec, RodessaConfig(1, seed=0), 4)
        assert curve[-1][1] < 1e-10 * max(curve[0][1], 1.0)

    def test_r_max_validation(self):
        s, _ = generate(SCENARIOS[3], 1)
        with pytest.raises(ValueError):
            rank_curve(s, EmbeddingSpec(70, 35), RodessaConfig(1), 0)
