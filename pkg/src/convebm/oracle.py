"""Brute-force and analytic oracles for the model's structural claims.

Everything here is a reference implementation: the convolution, scoring
and gradient accumulation are coded independently of the vectorized
paths in :mod:`convebm.net` and :mod:`convebm.learner` (plain nested
loops over filters, positions and taps), so agreement between the two
is evidence, not tautology.  Exact normalizing constants and model
expectations are computed by enumerating small discretized image
spaces; the discrete results certify the identities for the
grid-normalized measure, which is stated explicitly in every report.

The ``check_*`` functions run the invariant suites for the structural
results (piecewise-Gaussian energy, auto-encoding local modes,
contrastive divergence as reconstruction) and return report dicts with
``name``, ``max_abs_deviation``, ``tolerance`` and ``pass`` keys.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .learner import ParamGrad, grad_params
from .linearize import energy, top_down
from .net import (
    CATEGORY_HEADS,
    CONV_SUM,
    ActivationPattern,
    Network,
    conv_output_extent,
    forward,
    softmax_posterior,
    score_category,
)
from .sampler import descend, langevin_step
from .tensor import SeededRng, Tensor3, sq_norm

__all__ = [
    "DiscreteImageSpace",
    "CategoryModel",
    "score_ref",
    "category_scores_ref",
    "param_grad_ref",
    "partition_brute",
    "log_partition_brute",
    "check_prop1",
    "loglik_grad_exact",
    "dense_grad_expectation_1layer",
    "perturb_in_piece",
    "patterns_equal",
    "check_theorem1",
    "check_prop3",
    "check_prop4",
]

MAX_SPACE_STATES = 1_000_000


@dataclass
class DiscreteImageSpace:
    """Finite grid of images: every pixel takes one of ``levels``.

    Enumeration order is fixed: pixels vary in flat (channel-major,
    row-major) order with the first pixel slowest, levels in the order
    given.
    """

    shape: tuple
    levels: tuple

    def __post_init__(self):
        self.shape = tuple(int(s) for s in self.shape)
        self.levels = tuple(float(v) for v in self.levels)
        if len(self.shape) != 3 or any(s < 1 for s in self.shape):
            raise ValueError("shape must be a positive (c, h, w) triple")
        if not self.levels:
            raise ValueError("levels must be non-empty")
        if self.count > MAX_SPACE_STATES:
            raise ValueError(
                f"{self.count} states exceeds the {MAX_SPACE_STATES} enumeration cap"
            )

    @property
    def num_pixels(self) -> int:
        c, h, w = self.shape
        return c * h * w

    @property
    def count(self) -> int:
        return len(self.levels) ** self.num_pixels

    def images(self):
        for values in itertools.product(self.levels, repeat=self.num_pixels):
            yield np.array(values, dtype=np.float64).reshape(self.shape)


@dataclass
class CategoryModel:
    """Shared trunk with category heads plus a prior over categories."""

    net: Network
    priors: np.ndarray

    def __post_init__(self):
        self.priors = np.asarray(self.priors, dtype=np.float64)
        if self.net.top_mode != CATEGORY_HEADS:
            raise ValueError("CategoryModel requires a category_heads network")
        if self.priors.ndim != 1 or self.priors.shape[0] != self.net.head_weights.shape[0]:
            raise ValueError("priors length must match the number of categories")
        if np.any(self.priors <= 0) or abs(self.priors.sum() - 1.0) > 1e-12:
            raise ValueError("priors must be positive and sum to 1")


# ---------------------------------------------------------------------------
# Reference forward / gradient paths (independent nested-loop implementations)
# ---------------------------------------------------------------------------


def _feature_maps_ref(net: Network, image: Tensor3):
    """Naive layer-by-layer convolution; returns (fmaps, gates)."""
    maps = [image]
    gates = []
    x = image
    for layer in net.layers:
        cin, h, w = x.shape
        oh = conv_output_extent(h, layer.kernel_h, layer.stride)
        ow = conv_output_extent(w, layer.kernel_w, layer.stride)
        if oh < 1 or ow < 1:
            raise ValueError("image too small for this network")
        out = np.zeros((layer.num_filters, oh, ow))
        gate = np.zeros((layer.num_filters, oh, ow))
        for k in range(layer.num_filters):
            for oy in range(oh):
                for ox in range(ow):
                    acc = float(layer.biases[k])
                    for i in range(cin):
                        for u in range(layer.kernel_h):
                            for v in range(layer.kernel_w):
                                acc += layer.weights[k, i, u, v] * x[
                                    i, layer.stride * oy + u, layer.stride * ox + v
                                ]
                    if acc > 0:
                        out[k, oy, ox] = acc
                        gate[k, oy, ox] = 1.0
        maps.append(out)
        gates.append(gate)
        x = out
    return maps, gates


def score_ref(net: Network, image: Tensor3) -> float:
    """Reference conv_sum score by direct summation."""
    if net.top_mode != CONV_SUM:
        raise ValueError("score_ref requires conv_sum top mode")
    maps, _ = _feature_maps_ref(net, image)
    total = 0.0
    for value in maps[-1].ravel():
        total += float(value)
    return total


def category_scores_ref(net: Network, image: Tensor3) -> np.ndarray:
    """Reference per-category scores from 1x1 top maps."""
    if net.top_mode != CATEGORY_HEADS:
        raise ValueError("category_scores_ref requires category_heads top mode")
    maps, _ = _feature_maps_ref(net, image)
    top = maps[-1]
    if top.shape[1:] != (1, 1):
        raise ValueError("top-layer maps must be 1x1 for category scoring")
    num_categories = net.head_weights.shape[0]
    scores = np.zeros(num_categories)
    for c in range(num_categories):
        acc = 0.0
        for k in range(top.shape[0]):
            acc += net.head_weights[c, k] * top[k, 0, 0]
        scores[c] = acc
    return scores


def param_grad_ref(net: Network, image: Tensor3) -> ParamGrad:
    """Reference score gradient in the parameters, accumulated by loops."""
    if net.top_mode != CONV_SUM:
        raise ValueError("param_grad_ref requires conv_sum top mode")
    maps, gates = _feature_maps_ref(net, image)
    g = ParamGrad.zeros(net)
    adj = np.ones_like(maps[-1])
    for l in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[l]
        prev = maps[l]
        adj_prev = np.zeros_like(prev)
        oh, ow = adj.shape[1:]
        for k in range(layer.num_filters):
            for oy in range(oh):
                for ox in range(ow):
                    c = adj[k, oy, ox] * gates[l][k, oy, ox]
                    if c == 0.0:
                        continue
                    g.biases[l][k] += c
                    for i in range(prev.shape[0]):
                        for u in range(layer.kernel_h):
                            for v in range(layer.kernel_w):
                                py = layer.stride * oy + u
                                px = layer.stride * ox + v
                                g.weights[l][k, i, u, v] += c * prev[i, py, px]
                                adj_prev[i, py, px] += c * layer.weights[k, i, u, v]
        adj = adj_prev
    return g


# ---------------------------------------------------------------------------
# Exact partition function and log-likelihood gradient on discrete spaces
# ---------------------------------------------------------------------------


def _log_sum_exp(values: np.ndarray) -> float:
    m = float(np.max(values))
    return m + math.log(float(np.sum(np.exp(values - m))))


def _log_ref_weights(space: DiscreteImageSpace, sigma_sq: float) -> np.ndarray:
    return np.array(
        [-sq_norm(im) / (2.0 * sigma_sq) for im in space.images()], dtype=np.float64
    )


def log_partition_brute(
    net: Network, space: DiscreteImageSpace, category: Optional[int] = None
) -> float:
    """log of the tilt's normalizing constant under the grid-normalized
    reference measure: log sum_I exp(f(I)) q(I) with q normalized over
    the grid.  Stabilized through log-sum-exp."""
    if category is None:
        f = np.array([score_ref(net, im) for im in space.images()])
    else:
        f = np.array(
            [category_scores_ref(net, im)[category] for im in space.images()]
        )
    lref = _log_ref_weights(space, net.sigma_sq)
    return _log_sum_exp(f + lref) - _log_sum_exp(lref)


def partition_brute(
    net: Network, space: DiscreteImageSpace, category: Optional[int] = None
) -> float:
    return math.exp(log_partition_brute(net, space, category))


def loglik_grad_exact(
    net: Network, images: Sequence[Tensor3], space: DiscreteImageSpace
) -> ParamGrad:
    """Exact log-likelihood gradient on the grid measure.

    (1/M) sum_m grad f(I_m) minus the expectation of grad f under the
    grid-normalized tilted density, both via the reference paths.
    """
    grid = list(space.images())
    f = np.array([score_ref(net, im) for im in grid])
    logw = f + _log_ref_weights(space, net.sigma_sq)
    logw -= _log_sum_exp(logw)
    p = np.exp(logw)
    expectation = ParamGrad.zeros(net)
    for prob, im in zip(p, grid):
        expectation.add_(param_grad_ref(net, im), scale=float(prob))
    result = ParamGrad.zeros(net)
    for im in images:
        result.add_(param_grad_ref(net, im), scale=1.0 / len(images))
    result.add_(expectation, scale=-1.0)
    return result


def dense_grad_expectation_1layer(
    net: Network, half_width: float = 5.0, n_levels: int = 31
) -> ParamGrad:
    """Model expectation of the score gradient for a one-layer,
    whole-patch network, by midpoint quadrature on a fine lattice.

    For such a network the score is ``sum_k ReLU(<I, w_k> + b_k)``, so
    the whole lattice can be evaluated with one flat matrix product
    that shares nothing with the convolution code.  Serves as the
    continuous-expectation oracle for the Monte-Carlo estimator.
    """
    if len(net.layers) != 1 or net.top_mode != CONV_SUM:
        raise ValueError("dense expectation supports single-layer conv_sum nets")
    layer = net.layers[0]
    c = net.input_channels
    npix = c * layer.kernel_h * layer.kernel_w
    if n_levels**npix > 4 * MAX_SPACE_STATES:
        raise ValueError("lattice too large")
    axes = np.linspace(-half_width, half_width, n_levels)
    mesh = np.meshgrid(*([axes] * npix), indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=1)
    wflat = layer.weights.reshape(layer.num_filters, npix)
    pre = points @ wflat.T + layer.biases
    delta = pre > 0
    f = np.where(delta, pre, 0.0).sum(axis=1)
    logw = f - (points * points).sum(axis=1) / (2.0 * net.sigma_sq)
    logw -= logw.max()
    p = np.exp(logw)
    p /= p.sum()
    weighted_delta = delta * p[:, np.newaxis]
    grad_w = weighted_delta.T @ points
    grad_b = weighted_delta.sum(axis=0)
    out = ParamGrad.zeros(net)
    out.weights[0][:] = grad_w.reshape(layer.weights.shape)
    out.biases[0][:] = grad_b
    return out


# ---------------------------------------------------------------------------
# Category-model equivalence (generative <-> discriminative)
# ---------------------------------------------------------------------------


def check_prop1(model: CategoryModel, space: DiscreteImageSpace) -> dict:
    """Both directions of the generative/discriminative equivalence.

    (a) With bias_c = log prior_c - log Z_c, the softmax posterior
    equals the posterior assembled from the per-category tilted
    densities, for every grid image.  (b) Fixing category 1 as the
    reference (zero score, zero bias) and bias_c = log prior_c -
    log prior_1 - log Z_c, the class-conditional implied by the softmax
    posterior and the induced marginal equals the tilted density, and
    the implied category marginals equal the priors.  All densities use
    the grid-normalized reference measure.
    """
    net = model.net
    priors = model.priors
    num_categories = priors.shape[0]
    grid = list(space.images())
    fc_ref = np.stack([category_scores_ref(net, im) for im in grid])
    lref = _log_ref_weights(space, net.sigma_sq)
    lref_norm = lref - _log_sum_exp(lref)
    log_z = np.array(
        [
            _log_sum_exp(fc_ref[:, c] + lref_norm)
            for c in range(num_categories)
        ]
    )

    # (a) posterior from densities vs softmax with bias = log prior - log Z.
    dev_a = 0.0
    biases_a = np.log(priors) - log_z
    for idx, im in enumerate(grid):
        log_joint = lref_norm[idx] + fc_ref[idx] - log_z + np.log(priors)
        joint = np.exp(log_joint)
        posterior_gen = joint / joint.sum()
        scores = np.array(
            [score_category(net, im, c) for c in range(num_categories)]
        )
        posterior_soft = softmax_posterior(scores, biases_a)
        dev_a = max(dev_a, float(np.abs(posterior_gen - posterior_soft).max()))

    # (b) start from the discriminative model with category 0 as base.
    base_weights_zero = bool(np.all(net.head_weights[0] == 0.0))
    dev_b = 0.0
    if base_weights_zero:
        biases_b = np.log(priors) - np.log(priors[0]) - log_z
        q_norm = np.exp(lref_norm)
        for idx, im in enumerate(grid):
            posterior = softmax_posterior(fc_ref[idx], biases_b)
            marginal = priors[0] * q_norm[idx] / posterior[0]
            conditional = posterior * marginal / priors
            density = np.exp(fc_ref[idx] + lref_norm[idx] - log_z)
            dev_b = max(dev_b, float(np.abs(conditional - density).max()))
        # implied category marginals must reproduce the priors
        implied = np.zeros(num_categories)
        for idx in range(len(grid)):
            posterior = softmax_posterior(fc_ref[idx], biases_b)
            implied += posterior * (priors[0] * q_norm[idx] / posterior[0])
        dev_b = max(dev_b, float(np.abs(implied - priors).max()))

    tolerance = 1e-10
    dev = max(dev_a, dev_b)
    return {
        "name": "prop1_equivalence",
        "max_abs_deviation": dev,
        "tolerance": tolerance,
        "pass": dev < tolerance and base_weights_zero,
        "deviation_a": dev_a,
        "deviation_b": dev_b,
        "base_category_zero": base_weights_zero,
        "note": "densities use the grid-normalized reference measure",
    }


# ---------------------------------------------------------------------------
# Piece-preserving probes and the three structural checks
# ---------------------------------------------------------------------------


def patterns_equal(a: ActivationPattern, b: ActivationPattern) -> bool:
    if len(a.maps) != len(b.maps):
        return False
    return all(np.array_equal(x, y) for x, y in zip(a.maps, b.maps))


def perturb_in_piece(
    net: Network,
    image: Tensor3,
    rng: SeededRng,
    radius: float = 0.05,
    max_shrink: int = 40,
) -> Optional[Tensor3]:
    """Random perturbation of ``image`` with the same activation pattern.

    Draws a Gaussian perturbation at the given radius and halves the
    radius on rejection; returns ``None`` after ``max_shrink`` failures
    (the image sits on a piece boundary).
    """
    _, base = forward(net, image)
    r = radius
    for _ in range(max_shrink):
        candidate = image + rng.normal(image.shape, 1.0) * r
        _, pattern = forward(net, candidate)
        if patterns_equal(pattern, base):
            return candidate
        r *= 0.5
    return None


def check_theorem1(
    net: Network,
    input_hw: tuple,
    trials: int = 20,
    directions: int = 5,
    rng: Optional[SeededRng] = None,
    spread_tol: float = 1e-8,
    curvature_tol: float = 1e-4,
) -> dict:
    """Piecewise-Gaussian energy check on one network.

    Samples a base image, probes its piece with pattern-preserving
    perturbations, and verifies (1) ``U(I) - ||I - sigma^2 B||^2 /
    (2 sigma^2)`` is constant across the probes and (2) second
    differences of U along random in-piece directions equal
    ``1 / sigma^2``.
    """
    rng = rng if rng is not None else SeededRng(0)
    shape = (net.input_channels,) + tuple(input_hw)
    spread_max = 0.0
    curvature_dev = 0.0
    boundary_stuck = 0
    sig = net.sigma_sq
    base = rng.normal(shape)
    _, base_pattern = forward(net, base)
    piece = top_down(net, base_pattern)
    center = sig * piece.B

    values = []
    probes = [base]
    for _ in range(trials - 1):
        p = perturb_in_piece(net, base, rng)
        if p is None:
            boundary_stuck += 1
            continue
        probes.append(p)
    for probe in probes:
        values.append(energy(net, probe) - sq_norm(probe - center) / (2.0 * sig))
    if len(values) > 1:
        spread_max = float(np.max(values) - np.min(values))

    for _ in range(directions):
        direction = rng.normal(shape)
        direction /= math.sqrt(sq_norm(direction))
        h = 1e-2
        ok = False
        for _ in range(40):
            plus, minus = base + h * direction, base - h * direction
            if patterns_equal(forward(net, plus)[1], base_pattern) and patterns_equal(
                forward(net, minus)[1], base_pattern
            ):
                ok = True
                break
            h *= 0.5
        if not ok:
            boundary_stuck += 1
            continue
        second = (energy(net, plus) - 2.0 * energy(net, base) + energy(net, minus)) / (
            h * h
        )
        curvature_dev = max(curvature_dev, abs(second - 1.0 / sig))

    passed = spread_max < spread_tol and curvature_dev < curvature_tol
    return {
        "name": "theorem1_piecewise_gaussian",
        "max_abs_deviation": max(spread_max, curvature_dev),
        "tolerance": max(spread_tol, curvature_tol),
        "pass": passed,
        "spread": spread_max,
        "spread_tol": spread_tol,
        "curvature_deviation": curvature_dev,
        "curvature_tol": curvature_tol,
        "boundary_stuck": boundary_stuck,
    }


def check_prop3(
    net: Network,
    input_hw: tuple,
    starts: int = 10,
    rng: Optional[SeededRng] = None,
    epsilon: float = 0.3,
    tol: float = 1e-8,
    residual_tol: float = 1e-6,
) -> dict:
    """Local modes found by descent are exactly auto-encoding.

    Descends from random starts and measures the sup-norm residual
    between each limit and its own top-down reconstruction.
    """
    rng = rng if rng is not None else SeededRng(0)
    shape = (net.input_channels,) + tuple(input_hw)
    worst = 0.0
    all_converged = True
    for _ in range(starts):
        start = rng.normal(shape)
        limit, converged = descend(net, start, epsilon=epsilon, tol=tol)
        all_converged &= converged
        _, pattern = forward(net, limit)
        recon = net.sigma_sq * top_down(net, pattern).B
        worst = max(worst, float(np.abs(limit - recon).max()))
    return {
        "name": "prop3_modes_auto_encode",
        "max_abs_deviation": worst,
        "tolerance": residual_tol,
        "pass": all_converged and worst <= residual_tol,
        "all_converged": all_converged,
    }


def check_prop4(
    net: Network,
    image: Tensor3,
    draws: int = 10_000,
    rng: Optional[SeededRng] = None,
    epsilon: float = 0.2,
    se_floor: float = 1e-12,
) -> dict:
    """One-step contrastive divergence is the reconstruction gradient.

    Holds the net and the observed image fixed, shrinks the step size
    until every one-step synthesis keeps the activation pattern, and
    compares the empirical mean of grad f(I_obs) - grad f(I_syn) per
    parameter against -(eps^2/2) * d/dw ||I_obs - B||^2 / 2 computed by
    central differences of the frozen-pattern top-down pass.  The
    tolerance is three standard errors of the empirical mean.
    """
    rng = rng if rng is not None else SeededRng(0)
    _, pattern = forward(net, image)
    g_obs = grad_params(net, image).as_vector()

    samples = None
    eps = epsilon
    for attempt in range(40):
        stream = rng.spawn(1000 + attempt)
        batch = np.zeros((draws, g_obs.size))
        preserved = True
        for d in range(draws):
            syn = langevin_step(net, image, eps, stream)
            _, syn_pattern = forward(net, syn)
            if not patterns_equal(syn_pattern, pattern):
                preserved = False
                break
            batch[d] = g_obs - grad_params(net, syn).as_vector()
        if preserved:
            samples = batch
            break
        eps *= 0.5
    if samples is None:
        return {
            "name": "prop4_cd_reconstruction",
            "max_abs_deviation": float("inf"),
            "tolerance": 0.0,
            "pass": False,
            "note": "could not find a piece-preserving step size",
        }

    mean = samples.mean(axis=0)
    se = samples.std(axis=0, ddof=1) / math.sqrt(draws)

    target = -0.5 * eps * eps * _recon_error_param_grad_fd(net, image, pattern)
    gap = np.abs(mean - target)
    limit = 3.0 * se + se_floor
    ratio = float((gap / limit).max())
    return {
        "name": "prop4_cd_reconstruction",
        "max_abs_deviation": float(gap.max()),
        "tolerance": float(limit.max()),
        "pass": bool(np.all(gap <= limit)),
        "epsilon_used": eps,
        "worst_se_ratio": ratio,
        "draws": draws,
    }


def _recon_error_param_grad_fd(
    net: Network, image: Tensor3, pattern: ActivationPattern, h: float = 1e-5
) -> np.ndarray:
    """d/dw ||image - B_{w, pattern}||^2 / 2 by central differences.

    The pattern stays frozen while each parameter is perturbed, so the
    derivative sees only B's dependence on the weights (bias entries
    come out exactly zero).
    """

    def objective() -> float:
        b = top_down(net, pattern).B
        diff = image - b
        return 0.5 * sq_norm(diff)

    parts = []
    for layer in net.layers:
        gw = np.zeros_like(layer.weights)
        flat = layer.weights.ravel()
        gflat = gw.ravel()
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            fp = objective()
            flat[j] = orig - h
            fm = objective()
            flat[j] = orig
            gflat[j] = (fp - fm) / (2.0 * h)
        parts.append(gw)
    vec = [p.ravel() for p in parts] + [np.zeros_like(l.biases) for l in net.layers]
    return np.concatenate(vec)
