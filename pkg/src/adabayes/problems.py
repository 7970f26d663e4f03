"""Desk-scale differentiable benchmark problems with analytic gradients.

Every problem reports the loss SUMMED over the evaluated batch and its
gradient with respect to a flat float64 parameter vector.  Deterministic
problems carry ``dataset_size = 0`` and ignore the batch selector;
stochastic ones take an index array (None means the full dataset).

A central finite-difference oracle (:func:`finite_diff_grad`) is the
universal gradient check used by the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np


@dataclass
class SyntheticDataset:
    """Generated classification data plus the weights that generated it.

    Regenerating with the same seed is bit-identical (single generator,
    fixed draw order: features, true weights, label uniforms).
    """

    features: np.ndarray
    labels: np.ndarray
    seed: int
    true_weights: np.ndarray


@dataclass
class Problem:
    """A differentiable objective over a flat parameter vector.

    ``eval(params, batch)`` returns ``(loss, grad)`` where loss is
    summed over the batch and grad has length ``dim``.  ``segments``
    names contiguous slices of the parameter vector (weight matrices,
    bias vectors, ...) so optimizers can be exercised with per-buffer
    state; single-buffer problems expose one segment covering
    everything.
    """

    name: str
    dim: int
    dataset_size: int
    eval: Callable[[np.ndarray, Optional[np.ndarray]], tuple[float, np.ndarray]]
    init_params: Callable[[], np.ndarray]
    segments: tuple = ()
    dataset: object = None

    def __post_init__(self):
        if not self.segments:
            self.segments = (("params", slice(0, self.dim)),)


def make_quadratic(dim: int, condition_number: float, seed: int) -> Problem:
    """Convex quadratic 0.5 (w - w*)^T A (w - w*) with diagonal A.

    Eigenvalues are log-spaced in [1, condition_number]; the minimizer
    w* is standard normal from the seed; optimization starts at zero.
    """
    if not condition_number >= 1.0:
        raise ValueError(f"condition_number must be >= 1, got {condition_number}")
    if not dim >= 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    rng = np.random.default_rng(seed)
    eig = np.geomspace(1.0, float(condition_number), dim)
    w_star = rng.standard_normal(dim)

    def _eval(params, batch=None):
        r = params - w_star
        ar = eig * r
        return 0.5 * float(np.dot(r, ar)), ar

    return Problem(
        name="quadratic",
        dim=dim,
        dataset_size=0,
        eval=_eval,
        init_params=lambda: np.zeros(dim, dtype=np.float64),
    )


def make_rosenbrock() -> Problem:
    """The 2-D Rosenbrock valley, started at the classic (-1.2, 1.0).

    f(x, y) = (1 - x)^2 + 100 (y - x^2)^2, minimum 0 at (1, 1).
    """

    def _eval(params, batch=None):
        x, y = params
        d = y - x * x
        loss = (1.0 - x) ** 2 + 100.0 * d * d
        grad = np.array([-2.0 * (1.0 - x) - 400.0 * x * d, 200.0 * d])
        return float(loss), grad

    return Problem(
        name="rosenbrock",
        dim=2,
        dataset_size=0,
        eval=_eval,
        init_params=lambda: np.array([-1.2, 1.0]),
    )


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # Stable on both tails; desk problems stay far from overflow anyway.
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def make_logreg(n: int, d: int, seed: int) -> tuple[Problem, SyntheticDataset]:
    """Binary logistic regression with summed negative log-likelihood.

    Features are standard normal; labels are Bernoulli draws from the
    logistic model at a standard-normal true weight vector.  Starts at
    zero weights, where the loss is n*ln(2) (every example at p = 1/2).

    The gradient is accumulated per example with a pairwise reduction,
    so a batch gradient equals the (identically reduced) sum of its
    single-example gradients.
    """
    if not (n >= d >= 1):
        raise ValueError(f"need n >= d >= 1, got n={n}, d={d}")
    rng = np.random.default_rng(seed)
    features = rng.standard_normal((n, d))
    true_w = rng.standard_normal(d)
    p = _sigmoid(features @ true_w)
    labels = (rng.random(n) < p).astype(np.float64)
    dataset = SyntheticDataset(features=features, labels=labels, seed=seed, true_weights=true_w)

    def _eval(params, batch=None):
        if batch is None:
            xb, yb = features, labels
        else:
            xb, yb = features[batch], labels[batch]
        z = xb @ params
        # summed NLL: sum log(1 + e^z) - y z
        loss = float(np.sum(np.logaddexp(0.0, z) - yb * z))
        resid = _sigmoid(z) - yb
        grad = np.sum(xb * resid[:, None], axis=0)
        return loss, grad

    problem = Problem(
        name="logreg",
        dim=d,
        dataset_size=n,
        eval=_eval,
        init_params=lambda: np.zeros(d, dtype=np.float64),
        dataset=dataset,
    )
    return problem, dataset


def make_mlp(layer_sizes, n: int, seed: int, targets: np.ndarray | None = None) -> Problem:
    """Tanh MLP regression with summed squared error and manual backprop.

    ``layer_sizes`` is [d_in, hidden..., d_out] with at least one hidden
    layer; hidden activations are tanh, the output layer is linear, and
    the loss is sum((out - y)^2) over the batch.  Weights start at
    N(0, 1/fan_in), biases at zero.  Parameters are exposed as one flat
    vector segmented per weight matrix / bias vector, exercising
    multi-buffer optimizer state.
    """
    layer_sizes = [int(s) for s in layer_sizes]
    if len(layer_sizes) < 3:
        raise ValueError(f"need at least one hidden layer, got layer_sizes={layer_sizes}")
    if any(s < 1 for s in layer_sizes):
        raise ValueError(f"layer sizes must be >= 1, got {layer_sizes}")
    if not n >= 1:
        raise ValueError(f"n must be >= 1, got {n}")

    rng = np.random.default_rng(seed)
    d_in, d_out = layer_sizes[0], layer_sizes[-1]
    features = rng.standard_normal((n, d_in))
    if targets is None:
        targets = rng.standard_normal((n, d_out))
    else:
        targets = np.asarray(targets, dtype=np.float64)
        if targets.shape != (n, d_out):
            raise ValueError(f"targets must have shape {(n, d_out)}, got {targets.shape}")

    # Flat layout: [W1, b1, W2, b2, ...], W_l stored row-major (out, in).
    segments = []
    init_chunks = []
    offset = 0
    n_layers = len(layer_sizes) - 1
    for layer in range(1, len(layer_sizes)):
        fan_in, fan_out = layer_sizes[layer - 1], layer_sizes[layer]
        w = rng.standard_normal((fan_out, fan_in)) / np.sqrt(fan_in)
        b = np.zeros(fan_out)
        segments.append((f"w{layer}", slice(offset, offset + w.size)))
        offset += w.size
        segments.append((f"b{layer}", slice(offset, offset + b.size)))
        offset += b.size
        init_chunks.extend([w.reshape(-1), b])
    dim = offset
    init_flat = np.concatenate(init_chunks)

    def _unpack(params):
        ws, bs = [], []
        for layer in range(n_layers):
            w_sl = segments[2 * layer][1]
            b_sl = segments[2 * layer + 1][1]
            fan_in, fan_out = layer_sizes[layer], layer_sizes[layer + 1]
            ws.append(params[w_sl].reshape(fan_out, fan_in))
            bs.append(params[b_sl])
        return ws, bs

    def _eval(params, batch=None):
        if batch is None:
            xb, yb = features, targets
        else:
            xb, yb = features[batch], targets[batch]
        ws, bs = _unpack(params)

        acts = [xb]
        for layer in range(n_layers):
            z = acts[-1] @ ws[layer].T + bs[layer]
            acts.append(np.tanh(z) if layer < n_layers - 1 else z)
        err = acts[-1] - yb
        loss = float(np.sum(err * err))

        grad = np.empty(dim, dtype=np.float64)
        dz = 2.0 * err
        for layer in range(n_layers - 1, -1, -1):
            grad[segments[2 * layer][1]] = (dz.T @ acts[layer]).reshape(-1)
            grad[segments[2 * layer + 1][1]] = dz.sum(axis=0)
            if layer > 0:
                da = dz @ ws[layer]
                dz = da * (1.0 - acts[layer] * acts[layer])
        return loss, grad

    return Problem(
        name="mlp",
        dim=dim,
        dataset_size=n,
        eval=_eval,
        init_params=lambda: init_flat.copy(),
        segments=tuple(segments),
        dataset={"features": features, "targets": targets, "seed": seed},
    )


def finite_diff_grad(problem: Problem, params: np.ndarray, h: float | None = None) -> np.ndarray:
    """Central finite differences of the full-batch loss, per coordinate.

    With ``h=None`` the step is 1e-5 * max(1, |w_i|) per coordinate;
    a scalar ``h`` applies uniformly.  Exact for linear objectives and
    exact up to rounding for quadratics (the cubic error term vanishes).
    """
    params = np.asarray(params, dtype=np.float64)
    if h is None:
        hs = 1e-5 * np.maximum(1.0, np.abs(params))
    else:
        if not h > 0.0:
            raise ValueError(f"h must be > 0, got {h}")
        hs = np.full(params.shape, float(h))
    grad = np.empty_like(params)
    for i in range(params.size):
        wp = params.copy()
        wm = params.copy()
        wp[i] += hs[i]
        wm[i] -= hs[i]
        lp, _ = problem.eval(wp, None)
        lm, _ = problem.eval(wm, None)
        grad[i] = (lp - lm) / (2.0 * hs[i])
    return grad
