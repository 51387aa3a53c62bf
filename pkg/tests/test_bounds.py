import math

import mpmath
import numpy as np
import pytest

from bsqtok.bounds import MC_CHUNK, McReport, adaptive_simpson, bound_loose, bound_tight, mc_quant_error
from bsqtok.errors import Unsupported


def mp_tight(L):
    """Integral bound evaluated with mpmath at 30 digits."""
    with mpmath.workdps(30):
        L = mpmath.mpf(L)
        pref = 2 * mpmath.gamma(L / 2) / (mpmath.sqrt(mpmath.pi) * mpmath.gamma((L - 1) / 2))
        f = lambda phi: mpmath.sqrt(2 - 2 / mpmath.sqrt(L) * mpmath.cos(phi)) * mpmath.sin(phi) ** (L - 2)
        return float(pref * mpmath.quad(f, [0, mpmath.pi / 4, mpmath.pi / 2]))


class TestLooseBound:
    def test_examples(self):
        assert bound_loose(1) == 0.0
        assert bound_loose(4) == 1.0
        assert bound_loose(2) == pytest.approx(math.sqrt(2 - math.sqrt(2)), abs=1e-15)
        assert bound_loose(2) == pytest.approx(0.765367, abs=1e-6)

    def test_monotone_below_sqrt2(self):
        values = [bound_loose(L) for L in range(1, 300)]
        assert all(b > a for a, b in zip(values, values[1:]))
        assert values[-1] < math.sqrt(2)


class TestTightBound:
    def test_two_dims_against_closed_integral(self):
        with mpmath.workdps(30):
            ref = float(2 / mpmath.pi * mpmath.quad(lambda p: mpmath.sqrt(2 - mpmath.sqrt(2) * mpmath.cos(p)), [0, mpmath.pi / 2]))
        assert bound_tight(2) == pytest.approx(ref, abs=1e-9)

    @pytest.mark.parametrize("L", [2, 3, 4, 9, 16, 18, 36, 100, 1024])
    def test_matches_mpmath(self, L):
        assert abs(bound_tight(L) - mp_tight(L)) <= 1e-8

    def test_one_dim_unsupported(self):
        with pytest.raises(Unsupported):
            bound_tight(1)

    def test_ordering(self):
        # the integral keeps only part of the radial term and comes out above the closed form
        for L in (2, 4, 9, 16, 36, 200):
            assert bound_loose(L) <= bound_tight(L) < math.sqrt(2)

    def test_large_L_approaches_sqrt2_from_below(self):
        t = bound_tight(1024)
        assert t < math.sqrt(2)
        assert math.sqrt(2) - t < 1e-3


class TestSimpson:
    def test_polynomial_exact(self):
        assert adaptive_simpson(lambda x: 3 * x**2 + 1, 0.0, 2.0) == pytest.approx(10.0, abs=1e-12)

    def test_oscillatory(self):
        assert adaptive_simpson(math.sin, 0.0, math.pi, tol=1e-12) == pytest.approx(2.0, abs=1e-11)

    def test_peaked_with_knot(self):
        # a peak narrower than the initial sampling is only found when a knot sits on it
        f = lambda x: math.exp(-1e4 * (x - 0.3) ** 2)
        val = adaptive_simpson(f, 0.0, 0.3, tol=1e-13) + adaptive_simpson(f, 0.3, 1.0, tol=1e-13)
        assert val == pytest.approx(math.sqrt(math.pi / 1e4), rel=1e-9)


class TestMonteCarlo:
    def test_one_dim_exact_zero(self):
        r = mc_quant_error(1, 5000, seed=0)
        assert r.mean == 0.0 and r.stderr == 0.0

    def test_deterministic(self):
        assert mc_quant_error(9, 20000, seed=5) == mc_quant_error(9, 20000, seed=5)
        assert mc_quant_error(9, 20000, seed=5) != mc_quant_error(9, 20000, seed=6)

    def test_chunking_is_invisible_to_the_sample_count(self):
        r = mc_quant_error(3, MC_CHUNK + 17, seed=1)
        assert r.n_samples == MC_CHUNK + 17

    def test_report_fields(self):
        r = mc_quant_error(4, 1000, seed=2)
        assert isinstance(r, McReport)
        assert r.mean >= 0 and r.stderr >= 0 and r.seed == 2

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            mc_quant_error(4, 999, seed=0)

    def test_two_dim_closed_form(self):
        # for L=2 the error is 2 sin(|theta - pi/4| / 2) with theta uniform on [0, pi/2]
        with mpmath.workdps(20):
            ref = float(4 / mpmath.pi * mpmath.quad(lambda t: 2 * mpmath.sin(t / 2), [0, mpmath.pi / 4]))
        r = mc_quant_error(2, 200_000, seed=3)
        assert abs(r.mean - ref) <= 4 * r.stderr

    @pytest.mark.parametrize("L", [2, 4, 9, 16, 36])
    def test_below_bounds(self, L):
        r = mc_quant_error(L, 100_000, seed=L)
        assert r.mean < bound_loose(L) < math.sqrt(2)
        assert r.mean <= bound_tight(L) + 3 * r.stderr

    def test_uses_bsq_quantizer(self):
        from bsqtok.quantizer import bsq_quantize, project_to_sphere

        rng = np.random.default_rng(7)
        u = project_to_sphere(rng.standard_normal((MC_CHUNK, 5)))
        direct = np.linalg.norm(u - bsq_quantize(u), axis=-1).mean()
        assert mc_quant_error(5, MC_CHUNK, seed=7).mean == pytest.approx(direct, rel=1e-12)
