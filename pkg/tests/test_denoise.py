import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import norm

from sublinear_gamp.denoise import (
    InnerDenoiserParams,
    f_A,
    f_U_moment,
    f_X,
    f_X2,
    f_X_prime,
    inner_denoise,
    inverse_mills,
    inverse_mills_excess,
    log_evidence,
    log_pG,
    outer_denoise,
    outer_linear,
    outer_onebit,
    posterior_variance,
    slab_moments,
)
from sublinear_gamp.model import Channel, DomainError, Prior, ProblemDims

# reference values: 50-digit mpmath evaluation of the defining formulas
FA_N2_K1_CONST = 0.40615451504869061868
FX_Y025 = 0.0015655285384545797969
FX_Y03 = 0.013296170710859775686
FX_Y05 = 0.45446707741323707601
FX_Y1 = 0.90909090909090909091
MILLS_0 = 0.79788456080286535588
MILLS_40 = 40.024968847207263723
MILLS_EXCESS = {10.0: 0.098093233962511962844, 1e3: 0.000999998000009999926, 1e6: 9.99999999998e-7}

PRIORS = [
    Prior.gaussian(1.0),
    Prior.gaussian(0.3),
    Prior.constant(1.0),
    Prior.discrete([1.0, -3.0], [0.5, 0.5]),
    Prior.discrete([0.5, 2.0, -1.0], [0.2, 0.3, 0.5]),
]
prior_st = st.sampled_from(PRIORS)


def params_for(prior, k=16, N=2**16, v=0.1):
    return InnerDenoiserParams(prior, k, N, v)


class TestLogEvidence:
    def test_gaussian_closed_form(self):
        assert math.isclose(float(log_evidence(Prior.gaussian(1.0), 0.0, 1.0)), -0.5 * math.log(4 * math.pi), rel_tol=1e-14)

    def test_constant_symmetric(self):
        assert math.isclose(float(log_evidence(Prior.constant(1.0), 0.0, 1.0)), float(log_pG(1.0, 1.0)), rel_tol=1e-14)

    @given(yt=st.floats(-6, 6), v=st.floats(0.05, 5.0))
    def test_discrete_linear_domain(self, yt, v):
        prior = Prior.discrete([0.5, 2.0, -1.0], [0.2, 0.3, 0.5])
        direct = sum(p * norm.pdf(yt - u, scale=math.sqrt(v)) for u, p in zip(prior.points, prior.probs))
        assert math.isclose(float(log_evidence(prior, yt, v)), math.log(direct), rel_tol=1e-12, abs_tol=1e-12)

    def test_far_tail_finite(self):
        val = log_evidence(Prior.constant(1.0), 1e4, 1e-3)
        assert np.isfinite(val)

    @pytest.mark.parametrize("v", [0.0, -1.0])
    def test_bad_variance(self, v):
        with pytest.raises(DomainError):
            log_evidence(Prior.gaussian(), 0.0, v)


class TestActivity:
    def test_saturates(self):
        p = InnerDenoiserParams(Prior.gaussian(1.0), 1, 4096, 0.1)
        assert float(f_A(p, 100.0)) >= 1 - 1e-6

    def test_n2_k1_constant(self):
        p = InnerDenoiserParams(Prior.constant(1.0), 1, 2, 1.0)
        assert math.isclose(float(f_A(p, 0.5)), FA_N2_K1_CONST, rel_tol=1e-13)

    @given(prior=prior_st, yt=st.floats(-1e6, 1e6), v=st.floats(1e-8, 1e3), log2N=st.integers(1, 1000))
    def test_probability_bounds(self, prior, yt, v, log2N):
        N = 2**log2N
        k = max(1, N // 7)
        if k >= N:
            k = N - 1
        if k < 1:
            return
        a = float(f_A(InnerDenoiserParams(prior, k, N, v), yt))
        assert 0.0 <= a <= 1.0

    def test_huge_N(self):
        p = InnerDenoiserParams(Prior.gaussian(1.0), 2**250, 2**1000, 0.5)
        vals = f_A(p, np.linspace(-30, 30, 61))
        assert np.all((vals >= 0) & (vals <= 1)) and np.all(np.isfinite(vals))


class TestSlabMoments:
    def test_gaussian_closed_form(self):
        assert f_U_moment(Prior.gaussian(1.0), 2.0, 1.0, 1) == 1.0

    @pytest.mark.parametrize("prior", [p for p in PRIORS if p.is_symmetric()])
    def test_symmetric_zero(self, prior):
        assert f_U_moment(prior, 0.0, 0.7, 1) == 0.0

    @given(yt=st.floats(-50, 50), v=st.floats(1e-4, 10))
    def test_constant_second_moment(self, yt, v):
        assert math.isclose(float(f_U_moment(Prior.constant(1.0), yt, v, 2)), 1.0, rel_tol=1e-14)

    def test_bad_order(self):
        with pytest.raises(DomainError):
            f_U_moment(Prior.gaussian(), 0.0, 1.0, 3)

    @given(prior=prior_st, yt=st.floats(-20, 20), v=st.floats(1e-3, 10))
    def test_variance_nonnegative(self, prior, yt, v):
        m1, m2 = slab_moments(prior, yt, v)
        assert m2 - m1 * m1 >= -1e-12 * max(1.0, m2)


class TestInnerScalar:
    @pytest.mark.parametrize("y, want", [(0.25, FX_Y025), (0.3, FX_Y03), (0.5, FX_Y05), (1.0, FX_Y1)])
    def test_recomposition_oracle(self, y, want):
        assert math.isclose(float(f_X(params_for(Prior.gaussian(1.0)), y)), want, rel_tol=1e-12)

    @given(prior=prior_st, y=st.floats(-5, 5))
    def test_bounded_by_slab_mean(self, prior, y):
        p = params_for(prior)
        m1 = f_U_moment(prior, math.sqrt(p.k) * y, p.v_tilde, 1)
        assert abs(float(f_X(p, y))) <= abs(float(m1)) / math.sqrt(p.k) * (1 + 1e-15)

    @pytest.mark.parametrize("prior", [p for p in PRIORS if p.is_symmetric()])
    def test_odd(self, prior):
        p = params_for(prior)
        y = np.linspace(-3, 3, 301)
        np.testing.assert_array_equal(f_X(p, -y), -f_X(p, y))
        assert f_X(p, 0.0) == 0.0

    @given(prior=prior_st, y=st.floats(-10, 10), v=st.floats(1e-3, 10))
    def test_variance_and_slope_nonnegative(self, prior, y, v):
        p = params_for(prior, v=v)
        assert float(posterior_variance(p, y)) >= 0.0
        assert float(f_X_prime(p, y)) >= 0.0

    @given(prior=prior_st, y=st.floats(-3, 3))
    def test_variance_identity(self, prior, y):
        p = params_for(prior)
        v_post = float(posterior_variance(p, y))
        direct = float(f_X2(p, y)) - float(f_X(p, y)) ** 2
        assert math.isclose(v_post, direct, rel_tol=1e-8, abs_tol=1e-14)

    @pytest.mark.parametrize("prior", PRIORS)
    @pytest.mark.parametrize("v", [0.01, 0.1, 1.0])
    def test_derivative_finite_difference(self, prior, v):
        p = params_for(prior, v=v)
        P = prior.second_moment()
        span = 10 * math.sqrt(P / p.k) + 10 * math.sqrt(p.v_kN)
        for y in np.linspace(-span, span, 241):
            h = 1e-6 * max(1.0, abs(y))
            fd = (float(f_X(p, y + h)) - float(f_X(p, y - h))) / (2 * h)
            an = float(f_X_prime(p, y))
            # relative agreement, with an absolute floor where both are ~0
            assert abs(fd - an) <= 1e-5 * max(abs(an), 1e-3), (y, fd, an)

    def test_saturated_constant_variance(self):
        p = InnerDenoiserParams(Prior.constant(1.0), 16, 2**16, 0.01)
        y = 10.0 / math.sqrt(16)
        assert float(posterior_variance(p, y)) < 1e-12

    def test_params_validation(self):
        with pytest.raises(DomainError):
            InnerDenoiserParams(Prior.gaussian(), 4, 4, 1.0)
        with pytest.raises(DomainError):
            InnerDenoiserParams(Prior.gaussian(), 1, 4, 0.0)


class TestInnerDenoise:
    def test_zero_input(self):
        dims = ProblemDims(256, 4, 1.0)
        x_hat, xi = inner_denoise(Prior.gaussian(), dims, np.zeros(dims.N), 0.5)
        np.testing.assert_array_equal(x_hat, 0.0)
        assert xi >= 0

    def test_separable(self, rng):
        dims = ProblemDims(300, 6, 1.3)
        x_t = rng.standard_normal(dims.N) * 0.3
        v_out = 0.4
        x_hat, xi = inner_denoise(Prior.constant(1.0), dims, x_t, v_out)
        p = InnerDenoiserParams(Prior.constant(1.0), dims.k, dims.N, dims.k * v_out / dims.M)
        np.testing.assert_array_equal(x_hat, np.array([float(f_X(p, t)) for t in x_t]))
        v_post = np.array([float(posterior_variance(p, t)) for t in x_t])
        assert math.isclose(xi, math.fsum(v_post) / v_out, rel_tol=1e-12)

    def test_uses_delta_eff(self):
        # v_tilde = v_out / (delta_eff ln(N/k)) = k v_out / M
        dims = ProblemDims(1000, 5, 0.77)
        assert math.isclose(dims.k * 0.3 / dims.M, 0.3 / (dims.delta_eff * dims.log_ratio), rel_tol=1e-14)

    def test_bad_v(self):
        dims = ProblemDims(64, 2, 1.0)
        with pytest.raises(DomainError):
            inner_denoise(Prior.gaussian(), dims, np.zeros(64), 0.0)

    def test_permutation_equivariant(self, rng):
        dims = ProblemDims(128, 4, 2.0)
        x_t = rng.standard_normal(dims.N)
        perm = rng.permutation(dims.N)
        a, xa = inner_denoise(Prior.gaussian(), dims, x_t, 0.2)
        b, xb = inner_denoise(Prior.gaussian(), dims, x_t[perm], 0.2)
        np.testing.assert_array_equal(a[perm], b)
        assert xa == xb


class TestOuterLinear:
    def test_examples(self):
        assert outer_linear(1.0, 0.0, 0.5, 0.0).value == 2.0
        assert outer_linear(3.0, 3.0, 0.5, 0.1).value == 0.0

    def test_constant_derivative(self):
        ev = outer_linear(np.linspace(-5, 5, 11), np.zeros(11), 0.3, 0.2)
        np.testing.assert_allclose(ev.dz, 1 / 0.5, rtol=0, atol=0)

    def test_bad(self):
        with pytest.raises(DomainError):
            outer_linear(0.0, 0.0, 0.0, 0.0)


class TestOuterOnebit:
    def test_mills_at_zero(self):
        assert math.isclose(float(outer_onebit(0.0, -1.0, 1.0, 0.0).value), MILLS_0, rel_tol=1e-14)

    def test_mills_far(self):
        assert math.isclose(float(outer_onebit(40.0, -1.0, 1.0, 0.0).value), MILLS_40, rel_tol=1e-13)

    @pytest.mark.parametrize("w", sorted(MILLS_EXCESS))
    def test_excess_oracle(self, w):
        assert math.isclose(float(inverse_mills_excess(w)), MILLS_EXCESS[w], rel_tol=1e-9)

    def test_symmetry(self):
        z = np.linspace(-30, 30, 1201)
        for s_in, sigma2 in ((1.0, 0.0), (0.3, 0.2)):
            a = outer_onebit(z, 1.0, s_in, sigma2)
            b = outer_onebit(-z, -1.0, s_in, sigma2)
            np.testing.assert_array_equal(a.value, -b.value)
            np.testing.assert_array_equal(a.dz, b.dz)

    def test_asymptotic_sandwich(self):
        z = np.geomspace(10, 1e6, 200)
        f = outer_onebit(z, -1.0, 1.0, 0.0).value
        assert np.all(np.abs(f - z) <= 2 / z)

    def test_no_overflow(self):
        z = np.concatenate([-np.geomspace(1e-3, 1e6, 300), np.geomspace(1e-3, 1e6, 300)])
        for y in (-1.0, 1.0):
            ev = outer_onebit(z, y, 1.0, 0.0)
            assert np.all(np.isfinite(ev.value)) and np.all(np.isfinite(ev.dz))
            assert np.all(ev.dz >= 0)

    @pytest.mark.parametrize("v_in, sigma2", [(1.0, 0.0), (0.2, 0.05), (2.0, 1.0)])
    def test_derivative_finite_difference(self, v_in, sigma2):
        s = v_in + sigma2
        for y in (-1.0, 1.0):
            for z in np.linspace(-8 * math.sqrt(s), 8 * math.sqrt(s), 161):
                h = 1e-6 * max(1.0, abs(z))
                fd = (float(outer_onebit(z + h, y, v_in, sigma2).value) - float(outer_onebit(z - h, y, v_in, sigma2).value)) / (2 * h)
                an = float(outer_onebit(z, y, v_in, sigma2).dz)
                assert abs(fd - an) <= 1e-5 * abs(an), (z, y, fd, an)

    def test_mills_matches_scipy_moderate(self):
        w = np.linspace(-8, 8, 161)
        np.testing.assert_allclose(inverse_mills(w), norm.pdf(w) / norm.sf(w), rtol=1e-12)

    def test_dispatch(self):
        z, y = np.array([0.3]), np.array([1.0])
        assert outer_denoise(Channel.linear(0.1), z, y, 0.5).value == outer_linear(z, y, 0.5, 0.1).value
        assert outer_denoise(Channel.onebit(0.1), z, y, 0.5).value == outer_onebit(z, y, 0.5, 0.1).value

    def test_bad(self):
        with pytest.raises(DomainError):
            outer_onebit(0.0, 1.0, 0.0, 0.0)
