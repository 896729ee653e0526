import numpy as np
import pytest
from hypothesis import given, strategies as st

from rodessa.forecast import VerticalityError, forecast, left_singular_vectors, recurrence_coefficients
from rodessa.lowrank import LowRankFit, svd_lowrank
from rodessa.series import EmbeddingSpec, MultivariateSeries, diagonal_average, embed
from rodessa.sim import SCENARIOS, generate, metrics, run_method


def _harmonic(N, phases=(0.0, 0.7, 1.9), amps=(1.0, 2.0, 0.5), start=1):
    i = np.arange(start, start + N)[:, None]
    return np.asarray(amps) * np.cos(2 * np.pi * i / 10 + np.asarray(phases))


def _model(values, L, q):
    s = MultivariateSeries(values)
    spec = EmbeddingSpec(s.N, L)
    fit = svd_lowrank(embed(s, spec), q)
    rec = diagonal_average(fit.product, spec, s.p)
    return fit, rec


class TestCoefficients:
    def test_constant_series(self):
        fit, rec = _model(np.full((30, 2), 3.0), 8, 1)
        m = recurrence_coefficients(fit)
        np.testing.assert_allclose(forecast(m, rec, 10), 3.0, atol=1e-10)

    def test_gauge_invariance(self, rng):
        fit, _ = _model(_harmonic(50), 12, 2)
        A = rng.normal(size=(2, 2)) + 2 * np.eye(2)
        a1 = recurrence_coefficients(fit).coef
        a2 = recurrence_coefficients((fit.U @ A, fit.V @ np.linalg.inv(A).T)).coef
        np.testing.assert_allclose(a1, a2, atol=1e-10)

    def test_reproduces_harmonic(self):
        L = 20
        x = _harmonic(60)
        fit, _ = _model(x, L, 2)
        a = recurrence_coefficients(fit).coef
        assert a.size == L - 1
        for i in range(L - 1, 60):
            np.testing.assert_allclose(a @ x[i - L + 1:i], x[i], atol=1e-8)

    def test_verticality_error(self):
        U = np.zeros((5, 1))
        U[-1, 0] = 1.0
        with pytest.raises(VerticalityError):
            recurrence_coefficients(LowRankFit(U, np.ones((4, 1))))

    def test_singular_vectors_orthonormal(self, rng):
        Ut, s = left_singular_vectors(rng.normal(size=(9, 3)), rng.normal(size=(12, 3)))
        np.testing.assert_allclose(Ut.T @ Ut, np.eye(3), atol=1e-12)
        assert np.all(np.diff(s) <= 0)


class TestForecast:
    def test_zero_horizon(self):
        fit, rec = _model(_harmonic(40), 10, 2)
        out = forecast(recurrence_coefficients(fit), rec, 0)
        assert out.shape == (0, 3)

    @pytest.mark.parametrize("h", [-1, 2.5])
    def test_bad_horizon(self, h):
        fit, rec = _model(_harmonic(40), 10, 2)
        with pytest.raises(ValueError):
            forecast(recurrence_coefficients(fit), rec, h)

    def test_zero_reconstruction(self):
        fit, _ = _model(_harmonic(40), 10, 2)
        out = forecast(recurrence_coefficients(fit), np.zeros((40, 3)), 7)
        assert np.all(out == 0)

    def test_analytic_continuation(self):
        N, h = 70, 20
        fit, rec = _model(_harmonic(N), 35, 2)
        out = forecast(recurrence_coefficients(fit), rec, h)
        np.testing.assert_allclose(out, _harmonic(h, start=N + 1), atol=1e-6)

    @given(st.floats(-50, 50).filter(lambda v: abs(v) > 1e-3))
    def test_linearity(self, lam):
        fit, rec = _model(_harmonic(40), 10, 2)
        m = recurrence_coefficients(fit)
        np.testing.assert_allclose(forecast(m, lam * rec.values, 9),
                                   lam * forecast(m, rec.values, 9), rtol=1e-9, atol=1e-12)

    def test_short_reconstruction(self):
        fit, _ = _model(_harmonic(40), 10, 2)
        with pytest.raises(ValueError):
            forecast(recurrence_coefficients(fit), np.zeros((5, 3)), 3)

    def test_scenario_clean_forecast_error_below_noise(self):
        sc = SCENARIOS[3]
        s, clean = generate(sc, 77)
        spec = EmbeddingSpec(70, 35)
        ext = sc.signal(np.arange(71, 91))
        for method in ("CMSSA", "RODESSA"):
            rec, fc = run_method(method, s, spec, 2, h=20)
            _, fe = metrics(rec, fc, clean, ext)
            assert fe < sc.sigma ** 2
