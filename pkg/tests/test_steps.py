"""Step rules: hand-checked values, limits, and floating-point contracts.

The AdaBayes one-step value is checked two ways: against a frozen
correctly-rounded constant (computed offline with exact rational
arithmetic) and against an independent scalar reference implementation
written in plain Python floats.  The limit equivalences asserted here
are short versions of the full acceptance runs in test_acceptance.py.
"""

import numpy as np
import pytest

from adabayes import (
    HyperParams,
    adabayes_ss_step,
    adabayes_step,
    adam_step,
    adamw_step,
    init_filter_state,
    init_moment_state,
    sgd_step,
)


# ---------------------------------------------------------------------------
# SGD
# ---------------------------------------------------------------------------


def test_sgd_direct_substitution():
    hp = HyperParams(eta_sgd=0.1, minibatch_size=100)
    w = np.zeros(4)
    rep = sgd_step(w, init_moment_state(4), np.full(4, 2.0), hp)
    # first step debias makes gbar == 2 exactly, so dw = (0.1/100) * 2
    np.testing.assert_allclose(w, 2e-3, rtol=1e-15)
    assert rep.s_post_mean == hp.eta_sgd / hp.minibatch_size


def test_sgd_zero_gradient_is_noop():
    hp = HyperParams()
    w = np.array([1.0, -2.0])
    before = w.copy()
    rep = sgd_step(w, init_moment_state(2), np.zeros(2), hp)
    assert (w == before).all()
    assert rep.delta_norm == 0.0


def test_sgd_negative_gradient():
    hp = HyperParams(eta_sgd=0.1, minibatch_size=1)
    w = np.zeros(1)
    sgd_step(w, init_moment_state(1), np.array([-1.0]), hp)
    assert w[0] == -0.1


# ---------------------------------------------------------------------------
# Adam / AdamW
# ---------------------------------------------------------------------------


def test_adam_constant_gradient_update_is_eta():
    # gbar / sqrt(g2bar) = 1 for a constant stream, so |dw| -> eta.
    hp = HyperParams(eta=0.001)
    w = np.zeros(1)
    ms = init_moment_state(1)
    for _ in range(5):
        before = w.copy()
        adam_step(w, ms, np.array([3.0]), hp)
        np.testing.assert_allclose(abs(w - before), hp.eta, rtol=1e-8)


def test_adam_zero_gradient_is_noop():
    hp = HyperParams()
    w = np.array([0.5])
    for _ in range(3):
        adam_step(w, init_moment_state(1), np.zeros(1), hp)
    assert w[0] == 0.5


def test_adam_alternating_gradient_scale_free():
    # beta1=0 makes gbar follow the sign exactly; the magnitude divides out.
    for c in (0.01, 2.0, 1e3):
        hp = HyperParams(eta=0.001, beta1=0.0)
        w = np.zeros(1)
        ms = init_moment_state(1)
        for t in range(6):
            before = w.copy()
            g = np.array([c if t % 2 == 0 else -c])
            adam_step(w, ms, g, hp)
            np.testing.assert_allclose(abs(w - before), hp.eta, rtol=1e-5)


def test_adamw_zero_decay_equals_adam():
    hp = HyperParams(lam=0.0)
    w1 = np.array([0.3, -0.7])
    w2 = w1.copy()
    ms1, ms2 = init_moment_state(2), init_moment_state(2)
    rng = np.random.default_rng(3)
    for _ in range(50):
        g = rng.standard_normal(2)
        adam_step(w1, ms1, g, hp)
        adamw_step(w2, ms2, g, hp)
    assert w1.tobytes() == w2.tobytes()


def test_adamw_pure_decay_recursion():
    # g = 0 throughout: w_t = (1 - lam)^t * w_0, the decay applied as a
    # standalone multiplier each step.
    hp = HyperParams(lam=5e-5)
    w = np.array([1.0])
    ms = init_moment_state(1)
    expected = 1.0
    for t in range(1, 200):
        adamw_step(w, ms, np.zeros(1), hp)
        expected *= 1.0 - hp.lam
        assert w[0] == expected
    np.testing.assert_allclose(w[0], (1.0 - 5e-5) ** 199, rtol=1e-13)


def test_adamw_update_magnitude_independent_of_gradient_scale():
    hp = HyperParams(eta=0.001, lam=5e-5, eps=0.0)
    deltas = []
    for c in (1.0, 1e3):
        w = np.zeros(1)
        ms = init_moment_state(1)
        before = w.copy()
        adamw_step(w, ms, np.array([c]), hp)
        deltas.append(float(w[0] - before[0]))
    np.testing.assert_allclose(deltas[0], deltas[1], rtol=1e-12)


def test_adam_adamw_scale_covariance_bitwise():
    # Scaling the whole gradient stream by a power of two commutes with
    # every EMA and normalization operation exactly, so eps=0 runs are
    # bit-identical under g -> 4g.
    for step in (adam_step, adamw_step):
        hp = HyperParams(eta=0.001, lam=5e-5, eps=0.0)
        w1, w2 = np.zeros(3), np.zeros(3)
        ms1, ms2 = init_moment_state(3), init_moment_state(3)
        rng = np.random.default_rng(11)
        for _ in range(100):
            g = rng.standard_normal(3)
            step(w1, ms1, g, hp)
            step(w2, ms2, 4.0 * g, hp)
        assert w1.tobytes() == w2.tobytes()


# ---------------------------------------------------------------------------
# AdaBayes
# ---------------------------------------------------------------------------

# One hand-computed step: sigma2=0.01, eta=0.001, lambda=0, mu0=0,
# s0=sigma2, g=2.  Exact rational evaluation gives
#   s_prior = (1 - 5e-5)^2 * 0.01 + 1e-6 = 0.010000000025
#   s_post  = 1 / (1/s_prior + 4)
#   mu      = s_post * 2
# rounded to the nearest float64:
ONE_STEP_S_POST = 0.00961538463849852
ONE_STEP_MU = 0.01923076927699704


def _one_adabayes_step(g, hp):
    w = np.zeros(1)
    fs = init_filter_state((1,), hp, mu=w)
    ms = init_moment_state((1,))
    adabayes_step(w, fs, ms, np.array([g]), hp)
    return w, fs


def test_adabayes_one_step_frozen_value():
    hp = HyperParams(eta=0.001, sigma2=0.01, lam=0.0, beta1=0.9)
    w, fs = _one_adabayes_step(2.0, hp)
    assert fs.s_post[0] == ONE_STEP_S_POST
    assert w[0] == ONE_STEP_MU
    # coarse sanity against the rounded-off values
    np.testing.assert_allclose(fs.s_post[0], 9.6154e-3, rtol=1e-4)
    np.testing.assert_allclose(w[0], 1.9231e-2, rtol=1e-4)


def test_adabayes_matches_scalar_reference():
    """Independent variance-space reference, plain Python floats.

    The library carries the recursion in precision space; the reference
    carries it in variance space.  They are algebraically identical and
    must agree to a few ulp over a long random stream.
    """
    hp = HyperParams(eta=0.001, sigma2=0.01, lam=0.0, beta1=0.9)
    w = np.zeros(1)
    fs = init_filter_state((1,), hp, mu=w)
    ms = init_moment_state((1,))

    c = 1.0 - hp.eta ** 2 / (2.0 * hp.sigma2)
    s = hp.sigma2
    mu = 0.0
    m = 0.0
    rng = np.random.default_rng(123)
    for t in range(1, 500):
        g = float(rng.standard_normal()) * 10.0 ** rng.integers(-3, 3)
        adabayes_step(w, fs, ms, np.array([g]), hp)

        s_prior = c * c * s + hp.eta ** 2
        s = 1.0 / (1.0 / s_prior + g * g)
        m = hp.beta1 * m + (1.0 - hp.beta1) * g
        mu = mu + s * (m / (1.0 - hp.beta1 ** t))
        np.testing.assert_allclose(fs.s_post[0], s, rtol=1e-12)
        np.testing.assert_allclose(w[0], mu, rtol=1e-9, atol=1e-300)


def test_adabayes_zero_gradient_grows_to_fixed_point():
    # g=0 leaves only diffusion: s converges to eta^2 / (1 - c^2) and
    # the mean never moves.
    hp = HyperParams(eta=0.01, sigma2=0.01, lam=0.0)
    w = np.full(2, 0.25)
    fs = init_filter_state((2,), hp, mu=w)
    ms = init_moment_state((2,))
    for _ in range(3000):
        adabayes_step(w, fs, ms, np.zeros(2), hp)
    c = hp.drift
    s_star = hp.eta ** 2 / (1.0 - c * c)
    np.testing.assert_allclose(fs.s_post, s_star, rtol=1e-10)
    assert (w == 0.25).all()
    # the fixed point sits below the documented bound sigma2 * (1 + eta^2/sigma2)
    assert s_star <= hp.sigma2 * (1.0 + hp.eta ** 2 / hp.sigma2)


def test_adabayes_no_dynamics_matches_inline_accumulator():
    # eta=0 degenerates the precision recursion to lam += g^2; an inline
    # accumulator applying the same operations in the same order must
    # agree bit for bit even for arbitrary float gradients.
    hp = HyperParams(eta=0.0, sigma2=0.01, lam=0.0)
    w = np.zeros(1)
    fs = init_filter_state((1,), hp, mu=w)
    ms = init_moment_state((1,))
    rng = np.random.default_rng(5)
    acc = 1.0 / hp.sigma2
    for _ in range(500):
        g = float(rng.standard_normal() * 3.0)
        adabayes_step(w, fs, ms, np.array([g]), hp)
        acc = acc / (1.0 * 1.0 + 0.0 * acc) + g * g
        assert fs.lam[0] == acc
        assert fs.s_post[0] == 1.0 / acc


def test_adabayes_s_post_positive_and_bounded():
    hp = HyperParams(eta=0.001, sigma2=0.01)
    bound = hp.sigma2 * (1.0 + hp.eta ** 2 / hp.sigma2)
    w = np.zeros(8)
    fs = init_filter_state((8,), hp, mu=w)
    ms = init_moment_state((8,))
    rng = np.random.default_rng(17)
    for _ in range(2000):
        g = rng.standard_normal(8) * 10.0 ** rng.integers(-8, 8)
        adabayes_step(w, fs, ms, g, hp)
        assert (fs.s_post > 0.0).all()
        assert (fs.s_post <= bound).all()


def test_adabayes_requires_param_mu_aliasing():
    hp = HyperParams()
    w = np.zeros(2)
    fs = init_filter_state((2,), hp)  # fs.mu is its own buffer
    with pytest.raises(ValueError, match="same buffer"):
        adabayes_step(w, fs, init_moment_state(2), np.zeros(2), hp)


def test_adabayes_rejects_nonfinite_gradient():
    hp = HyperParams()
    w = np.zeros(2)
    fs = init_filter_state((2,), hp, mu=w)
    with pytest.raises(ValueError, match="flat index 0"):
        adabayes_step(w, fs, init_moment_state(2), np.array([np.inf, 0.0]), hp)


# ---------------------------------------------------------------------------
# init_filter_state
# ---------------------------------------------------------------------------


def test_init_filter_state_variance_is_sigma2():
    fs = init_filter_state((5,), HyperParams(sigma2=1e-3))
    assert (fs.s_post == 1e-3).all()


def test_init_filter_state_calibrated_from_sgd():
    fs = init_filter_state((3,), HyperParams(eta_sgd=0.1, minibatch_size=100))
    assert (fs.s_post == 1e-3).all()


def test_init_filter_state_adopts_mu_by_reference():
    w = np.array([1.0, 2.0])
    fs = init_filter_state((2,), HyperParams(), mu=w)
    assert fs.mu is w


def test_empty_buffers_are_noops():
    hp = HyperParams()
    w = np.zeros(0)
    fs = init_filter_state((0,), hp, mu=w)
    rep = adabayes_step(w, fs, init_moment_state((0,)), np.zeros(0), hp)
    assert rep == type(rep)(0.0, 0.0, 0.0, 0.0)
    rep = sgd_step(np.zeros(0), init_moment_state((0,)), np.zeros(0), hp)
    assert rep.delta_norm == 0.0


# ---------------------------------------------------------------------------
# AdaBayes-SS
# ---------------------------------------------------------------------------


def test_ss_zero_gradient_gives_prior_variance():
    # dyadic sigma2: every operation is exact, so s_post == sigma2
    hp = HyperParams(eta=0.001, sigma2=0.015625)
    w = np.zeros(1)
    ms = init_moment_state(1)
    rep = adabayes_ss_step(w, ms, np.zeros(1), hp)
    assert rep.s_post_mean == hp.sigma2
    # generic sigma2: within an ulp or two
    hp = HyperParams(eta=0.001, sigma2=0.01)
    rep = adabayes_ss_step(np.zeros(1), init_moment_state(1), np.zeros(1), hp)
    np.testing.assert_allclose(rep.s_post_mean, hp.sigma2, rtol=5e-16)


def test_ss_one_step_frozen_value():
    # sigma2 = eta = 1e-3, g2bar = 1 after the first debiased step:
    # 1/s = 500 + sqrt(2.5e5 + 1e6), frozen from an offline
    # quadratic-formula evaluation.
    hp = HyperParams(eta=1e-3, sigma2=1e-3, lam=0.0, beta1=0.9)
    w = np.zeros(1)
    ms = init_moment_state(1)
    adabayes_ss_step(w, ms, np.ones(1), hp)
    # mu1 = s_post * gbar with gbar == 1 exactly at t=1
    assert w[0] == 0.0006180339887498948
    np.testing.assert_allclose(w[0], 6.1803e-4, rtol=1e-4)


def test_ss_huge_prior_matches_gradient_normalizer():
    # sigma2 so large the prior term vanishes: s_post -> eta/sqrt(g2bar)
    hp = HyperParams(eta=1e-3, sigma2=1e12, lam=0.0)
    w = np.zeros(1)
    ms = init_moment_state(1)
    rep = adabayes_ss_step(w, ms, np.full(1, 2.0), hp)  # g2bar == 4 at t=1
    np.testing.assert_allclose(rep.s_post_mean, 5e-4, rtol=1e-6)


def test_ss_rejects_eta_zero():
    hp = HyperParams(eta=0.0, sigma2=0.01)
    with pytest.raises(ValueError, match="eta > 0"):
        adabayes_ss_step(np.zeros(1), init_moment_state(1), np.zeros(1), hp)


def test_ss_tracks_adamw_on_random_streams():
    # short version of the acceptance AdamW-limit run: same gradient
    # stream, huge prior variance vs eps=0 AdamW
    hp_ss = HyperParams(eta=0.001, sigma2=1e12, lam=5e-5)
    hp_aw = HyperParams(eta=0.001, lam=5e-5, eps=0.0)
    w1, w2 = np.zeros(4), np.zeros(4)
    ms1, ms2 = init_moment_state(4), init_moment_state(4)
    rng = np.random.default_rng(29)
    for _ in range(300):
        g = rng.standard_normal(4)
        adabayes_ss_step(w1, ms1, g, hp_ss)
        adamw_step(w2, ms2, g, hp_aw)
        rel = np.abs(w1 - w2) / np.maximum(np.maximum(np.abs(w1), np.abs(w2)), 1e-12)
        assert rel.max() <= 1e-6


def test_ss_weak_gradient_update_is_sgd_scaled():
    # tiny constant gradients pin s_post at sigma2, the weak-data limit
    hp = HyperParams(eta=1e-3, eta_sgd=1e-3, minibatch_size=1, lam=0.0)
    assert hp.sigma2 == 1e-3
    w = np.zeros(1)
    ms = init_moment_state(1)
    rep = adabayes_ss_step(w, ms, np.full(1, 1e-8), hp)
    np.testing.assert_allclose(rep.s_post_mean, hp.sigma2, rtol=1e-9)


# ---------------------------------------------------------------------------
# StepReport invariants
# ---------------------------------------------------------------------------


def test_report_ordering_invariants():
    rng = np.random.default_rng(31)
    hp = HyperParams(lam=5e-5)
    w = rng.standard_normal(8)
    fs = init_filter_state((8,), hp, mu=w)
    states = {
        "sgd": (sgd_step, init_moment_state(8)),
        "adam": (adam_step, init_moment_state(8)),
        "adamw": (adamw_step, init_moment_state(8)),
        "adabayes_ss": (adabayes_ss_step, init_moment_state(8)),
    }
    for name, (step, ms) in states.items():
        for _ in range(20):
            rep = step(w if name != "adabayes_ss" else fs.mu, ms, rng.standard_normal(8), hp)
            assert rep.delta_norm >= 0.0
            assert rep.s_post_min <= rep.s_post_mean <= rep.s_post_max
    ms = init_moment_state(8)
    for _ in range(20):
        rep = adabayes_step(fs.mu, fs, ms, rng.standard_normal(8), hp)
        assert rep.delta_norm >= 0.0
        assert rep.s_post_min <= rep.s_post_mean <= rep.s_post_max


# ---------------------------------------------------------------------------
# HyperParams validation
# ---------------------------------------------------------------------------


def test_hyperparams_defaults_and_sigma2_resolution():
    hp = HyperParams()
    assert hp.sigma2 == 0.1  # eta_sgd / minibatch_size
    hp = HyperParams(eta_sgd=0.1, minibatch_size=100)
    assert hp.sigma2 == 1e-3


@pytest.mark.parametrize(
    "kwargs",
    [
        {"eta": -1.0},
        {"eta_sgd": 0.0},
        {"minibatch_size": 0},
        {"sigma2": -0.1},
        {"sigma2": float("nan")},
        {"lam": 1.0},
        {"lam": -0.1},
        {"beta1": 1.0},
        {"beta2": -0.5},
        {"eps": -1e-9},
        {"eta": 1.0, "sigma2": 0.25},  # eta^2/(2 sigma2) = 2 >= 1
    ],
)
def test_hyperparams_rejects_bad_values(kwargs):
    with pytest.raises(ValueError):
        HyperParams(**kwargs)


def test_hyperparams_allows_eta_zero_and_eps_zero():
    assert HyperParams(eta=0.0).drift == 1.0
    assert HyperParams(eps=0.0).eps == 0.0
