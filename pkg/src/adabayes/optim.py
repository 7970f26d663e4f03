"""Per-parameter optimizer state and the five element-wise step rules.

All step rules operate on flat float64 buffers and share one sign
convention: the gradient argument ``g`` is a *descent direction* on the
loss (equivalently, the gradient of a log-likelihood), and every rule
ADDS its update.  Callers that hold gradients of a loss must negate them
first; the trajectory runner does this at the problem boundary.

Gradients are understood as gradients of the loss SUMMED over the
minibatch, not averaged.  That is why the SGD rule divides by the
minibatch size B, and why the prior variance is calibrated as
sigma2 = eta_sgd / B.

The AdaBayes rule is a per-parameter Kalman-style filter.  Its posterior
variance s_post doubles as the effective learning rate:

    s_prior = (1 - eta^2/(2 sigma2))^2 * s_post + eta^2     (diffusion)
    s_post  = 1 / (1/s_prior + g^2)                         (observation)
    mu      = (1 - lambda) * mu + s_post * gbar             (mean update)

Internally the variance recursion is carried in precision space
(lam = 1/s_post):

    lam_prior = lam / (c^2 + eta^2 * lam),   c = 1 - eta^2/(2 sigma2)
    lam_post  = lam_prior + g^2

which is algebraically identical to the two lines above but lets the
eta=0 ("no dynamics") mode accumulate 1/sigma2 + sum(g^2) exactly: with
eta=0 the denominator is exactly 1.0, so the recursion degenerates to
lam += g^2 with no intermediate reciprocals.  Reciprocal round-trips
1/(1/x) are NOT identities in float64, so an s-space implementation
cannot honor the exact no-dynamics contract (measured: ~95% of steps
drift by at least one ulp).

AdaBayes-SS replaces the variance recursion with its closed-form steady
state (see :mod:`adabayes.analysis`), computed from the debiased second
moment each step, so it keeps no variance state at all.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from adabayes.analysis import steady_state_precision

OPTIMIZER_KINDS = ("sgd", "adam", "adamw", "adabayes", "adabayes_ss")


@dataclass(frozen=True)
class HyperParams:
    """Constants shared by all step rules.

    Attributes:
        eta: Adam-scale learning rate (>= 0; zero selects the AdaBayes
            no-dynamics mode where the variance only shrinks).
        eta_sgd: SGD learning rate used to calibrate sigma2 (> 0).
        minibatch_size: B, the number of summed examples per gradient.
        sigma2: prior variance; defaults to eta_sgd / minibatch_size.
        lam: decoupled weight-decay coefficient, applied as a (1 - lam)
            multiplier on the parameters (0 <= lam < 1).
        beta1: first-moment EMA rate in [0, 1).
        beta2: second-moment EMA rate in [0, 1).
        eps: denominator guard for the Adam/AdamW baselines only; the
            filtering rules never read it (their precision is provably
            positive).  May be 0 to make AdamW an exact normalizer.

    Raises:
        ValueError: on any out-of-range field, or when
            eta**2 / (2 * sigma2) >= 1 (the variance drift factor would
            stop being a contraction).
    """

    eta: float = 0.001
    eta_sgd: float = 0.1
    minibatch_size: int = 1
    sigma2: float | None = None
    lam: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.eta >= 0.0:
            raise ValueError(f"eta must be >= 0, got {self.eta}")
        if not self.eta_sgd > 0.0:
            raise ValueError(f"eta_sgd must be > 0, got {self.eta_sgd}")
        if not (isinstance(self.minibatch_size, (int, np.integer)) and self.minibatch_size >= 1):
            raise ValueError(f"minibatch_size must be an integer >= 1, got {self.minibatch_size}")
        if self.sigma2 is None:
            object.__setattr__(self, "sigma2", self.eta_sgd / self.minibatch_size)
        if not (np.isfinite(self.sigma2) and self.sigma2 > 0.0):
            raise ValueError(f"sigma2 must be a positive finite real, got {self.sigma2}")
        if not 0.0 <= self.lam < 1.0:
            raise ValueError(f"lambda must be in [0, 1), got {self.lam}")
        if not 0.0 <= self.beta1 < 1.0:
            raise ValueError(f"beta1 must be in [0, 1), got {self.beta1}")
        if not 0.0 <= self.beta2 < 1.0:
            raise ValueError(f"beta2 must be in [0, 1), got {self.beta2}")
        if not self.eps >= 0.0:
            raise ValueError(f"eps must be >= 0, got {self.eps}")
        if not self.eta * self.eta / (2.0 * self.sigma2) < 1.0:
            raise ValueError(
                "eta^2 / (2 sigma2) must be < 1 for the variance drift to contract; "
                f"got eta={self.eta}, sigma2={self.sigma2}"
            )

    @property
    def drift(self) -> float:
        """The prior-mean contraction factor c = 1 - eta^2 / (2 sigma2)."""
        return 1.0 - self.eta * self.eta / (2.0 * self.sigma2)


@dataclass
class MomentState:
    """Raw EMA accumulators m (first moment) and v (second moment).

    ``t`` starts at 0 and is incremented by the step rules once per
    optimizer step, before the moments are used; debiased estimates are
    only ever formed with t >= 1 so the 1 - beta**t denominators are
    positive.  One optimizer step shares a single t across all of its
    parameter buffers.
    """

    m: np.ndarray
    v: np.ndarray
    t: int = 0


@dataclass
class FilterState:
    """Per-parameter posterior mean and variance for AdaBayes.

    ``mu`` aliases the caller's parameter buffer (the parameters ARE the
    posterior mean).  ``lam`` is the posterior precision 1/s_post, the
    quantity the recursion actually accumulates; ``s_post`` is the
    derived view.  Serialization must persist ``lam``, not ``s_post``,
    to keep resumed runs bit-identical.
    """

    mu: np.ndarray
    lam: np.ndarray

    @property
    def s_post(self) -> np.ndarray:
        """Posterior variance, the effective per-parameter learning rate."""
        return 1.0 / self.lam


@dataclass(frozen=True)
class StepReport:
    """Summary of one applied step.

    ``delta_norm`` is the L2 norm of the parameter change actually
    applied (weight decay included).  The s_post fields summarize the
    effective per-parameter learning rate of this step, whatever the
    rule: eta_sgd/B for SGD, eta/(sqrt(g2bar)+eps) for Adam/AdamW, and
    the posterior variance for the filtering rules.  Empty buffers
    report all zeros.
    """

    delta_norm: float
    s_post_mean: float
    s_post_min: float
    s_post_max: float


def init_moment_state(shape) -> MomentState:
    """Zero-initialized EMA accumulators for a parameter buffer."""
    return MomentState(m=np.zeros(shape, dtype=np.float64), v=np.zeros(shape, dtype=np.float64))


def init_filter_state(shape, hp: HyperParams, mu: np.ndarray | None = None) -> FilterState:
    """Fresh filter state: s_post = sigma2 everywhere, mean adopted from the caller.

    ``mu`` is adopted BY REFERENCE (params and posterior mean are one
    buffer); when omitted a zero buffer is created.  Zero-sized shapes
    are allowed and make every step a no-op.
    """
    shape = tuple(np.atleast_1d(np.asarray(shape, dtype=np.intp))) if not isinstance(shape, tuple) else shape
    if mu is None:
        mu = np.zeros(shape, dtype=np.float64)
    if mu.shape != shape:
        raise ValueError(f"mu shape {mu.shape} does not match requested shape {shape}")
    lam = np.full(shape, 1.0 / hp.sigma2, dtype=np.float64)
    return FilterState(mu=mu, lam=lam)


def _check_finite(g: np.ndarray) -> None:
    # Reject non-finite gradients with the offending index in the message.
    finite = np.isfinite(g)
    if not finite.all():
        idx = int(np.argmin(finite))
        raise ValueError(f"non-finite gradient at flat index {idx}: {g.reshape(-1)[idx]!r}")


def _report(delta: np.ndarray, eff_lr: np.ndarray) -> StepReport:
    if delta.size == 0:
        return StepReport(0.0, 0.0, 0.0, 0.0)
    return StepReport(
        delta_norm=float(np.linalg.norm(delta)),
        s_post_mean=float(np.mean(eff_lr)),
        s_post_min=float(np.min(eff_lr)),
        s_post_max=float(np.max(eff_lr)),
    )


def update_moments(state: MomentState, g: np.ndarray, hp: HyperParams):
    """EMA update plus debiasing; returns (gbar, g2bar).

        m <- beta1 * m + (1 - beta1) * g
        v <- beta2 * v + (1 - beta2) * g^2
        gbar = m / (1 - beta1^t),  g2bar = v / (1 - beta2^t)

    The caller must have incremented ``state.t`` to >= 1 already (the
    step rules do this once per step).  Raises ValueError on non-finite
    gradients, naming the offending index.
    """
    if state.t < 1:
        raise ValueError(f"MomentState.t must be incremented to >= 1 before use, got {state.t}")
    _check_finite(g)
    b1, b2 = hp.beta1, hp.beta2
    state.m *= b1
    state.m += (1.0 - b1) * g
    state.v *= b2
    state.v += (1.0 - b2) * (g * g)
    gbar = state.m / (1.0 - b1 ** state.t)
    g2bar = state.v / (1.0 - b2 ** state.t)
    return gbar, g2bar


def sgd_step(params: np.ndarray, state: MomentState, g: np.ndarray, hp: HyperParams) -> StepReport:
    """SGD with EMA momentum on the summed-loss gradient.

        params += (eta_sgd / B) * gbar

    Any L2 penalty must already be folded into ``g`` by the caller.  The
    learning rate is computed as the single quotient eta_sgd / B so it
    is bit-identical to the sigma2 = eta_sgd / B calibration.
    """
    state.t += 1
    gbar, _ = update_moments(state, g, hp)
    lr = hp.eta_sgd / hp.minibatch_size
    delta = lr * gbar
    params += delta
    return _report(delta, np.full_like(delta, lr))


def adam_step(params: np.ndarray, state: MomentState, g: np.ndarray, hp: HyperParams) -> StepReport:
    """Adam: normalize the debiased first moment by the debiased RMS gradient.

        params += eta * gbar / (sqrt(g2bar) + eps)

    L2 weight decay, if any, is folded into ``g`` by the caller (the
    standard coupled form).
    """
    state.t += 1
    gbar, g2bar = update_moments(state, g, hp)
    denom = np.sqrt(g2bar) + hp.eps
    delta = hp.eta * gbar / denom
    params += delta
    return _report(delta, hp.eta / denom)


def adamw_step(params: np.ndarray, state: MomentState, g: np.ndarray, hp: HyperParams) -> StepReport:
    """Adam with decoupled weight decay.

        params <- (1 - lambda) * params + eta * gbar / (sqrt(g2bar) + eps)

    ``g`` must exclude any weight-decay contribution.  The decay
    multiplies the parameters outside the normalization path, so every
    parameter decays at the same rate regardless of gradient scale.
    """
    state.t += 1
    gbar, g2bar = update_moments(state, g, hp)
    denom = np.sqrt(g2bar) + hp.eps
    new = (1.0 - hp.lam) * params + hp.eta * gbar / denom
    delta = new - params
    params[...] = new
    return _report(delta, hp.eta / denom)


def adabayes_step(
    params: np.ndarray,
    fstate: FilterState,
    mstate: MomentState,
    g: np.ndarray,
    hp: HyperParams,
) -> StepReport:
    """One AdaBayes filtering step (params must alias fstate.mu).

    In order: (1) moment update (only the debiased first moment is
    consumed; the raw squared gradient drives the variance), (2) prior
    diffusion of the variance, (3) posterior contraction by g^2,
    (4) mean update with decoupled decay:

        s_prior = (1 - eta^2/(2 sigma2))^2 * s_post + eta^2
        s_post  = 1 / (1/s_prior + g^2)
        mu     <- (1 - lambda) * mu + s_post * gbar

    carried in precision space as documented in the module docstring.
    """
    if params is not fstate.mu:
        raise ValueError("params must be the same buffer as fstate.mu (params are the posterior mean)")
    mstate.t += 1
    gbar, _ = update_moments(mstate, g, hp)

    c = hp.drift
    eta2 = hp.eta * hp.eta
    lam_prior = fstate.lam / (c * c + eta2 * fstate.lam)
    lam_post = lam_prior + g * g
    if lam_post.size and not (np.isfinite(lam_post).all() and (lam_post > 0.0).all()):
        raise FloatingPointError("posterior precision left (0, inf); gradient magnitude out of range")
    fstate.lam = lam_post
    s_post = 1.0 / lam_post

    new_mu = (1.0 - hp.lam) * fstate.mu + s_post * gbar
    delta = new_mu - fstate.mu
    fstate.mu[...] = new_mu
    return _report(delta, s_post)


def adabayes_ss_step(params: np.ndarray, mstate: MomentState, g: np.ndarray, hp: HyperParams) -> StepReport:
    """One AdaBayes-SS step: steady-state variance, no variance state.

        1/s_post = 1/(2 sigma2) + sqrt(1/(4 sigma2^2) + g2bar / eta^2)
        params  <- (1 - lambda) * params + s_post * gbar

    Uses the DEBIASED second moment (unlike AdaBayes, which consumes the
    raw squared gradient).  The precision is strictly positive even at
    g2bar = 0, where s_post collapses to sigma2.
    """
    if hp.eta == 0.0:
        raise ValueError("adabayes_ss_step requires eta > 0 (steady state undefined at eta = 0)")
    mstate.t += 1
    gbar, g2bar = update_moments(mstate, g, hp)

    s_post = 1.0 / steady_state_precision(hp.sigma2, hp.eta, g2bar)
    new = (1.0 - hp.lam) * params + s_post * gbar
    delta = new - params
    params[...] = new
    return _report(delta, s_post)
