"""Parameter estimation: persistent-chain maximum likelihood and one-step CD.

The log-likelihood gradient is the difference between the mean score
gradient over observed images (H_obs) and its expectation under the
model (H_syn), estimated from persistent Langevin chains that start at
zero images and are advanced a fixed number of steps between parameter
updates.  Contrastive divergence instead starts the dynamics at the
observed images and uses few (typically one) steps, which makes the
update direction track the gradient of the auto-encoder reconstruction
error.

Layers can be grown sequentially: each growth stage trains a prefix of
the layer stack (score taken at the current top layer) while the chains
persist across stages.  Training aborts with :class:`DivergenceError`
on any non-finite parameter or chain value instead of clipping.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .linearize import energy, top_down
from .net import CONV_SUM, Network, forward, _windows
from .sampler import ChainState, LangevinConfig, langevin_run
from .tensor import SeededRng, Tensor3

__all__ = [
    "TrainConfig",
    "ParamGrad",
    "StepStats",
    "TrainRecord",
    "DivergenceError",
    "grad_params",
    "mle_step",
    "cd_step",
    "train",
    "reconstruct",
    "history_csv",
]

MLE = "mle"
CD = "cd"


class DivergenceError(RuntimeError):
    """Raised when parameters or chains become non-finite during training."""


@dataclass
class TrainConfig:
    """Knobs for both training modes.

    ``growth_schedule`` is a list of ``(active_layers, iterations)``
    stages; ``None`` trains all layers at once for ``iterations``
    steps.  ``iterations`` is ignored when a schedule is given.

    ``lr_layer_scale`` multiplies the learning rate per layer.  The
    score sums over every map position, so raw layer gradients grow
    with map area; scaling layer l by 1 / |D_l| keeps the update's
    feedback through the sampler small enough to be stable at the
    default base rate.
    """

    num_chains: int = 8
    langevin_steps: int = 10
    iterations: int = 100
    epsilon: float = 0.3
    learning_rate: float = 0.01
    init_std: float = 0.01
    mode: str = MLE
    growth_schedule: Optional[List[tuple]] = None
    seed: int = 0
    lr_layer_scale: Optional[List[float]] = None

    def __post_init__(self):
        if self.num_chains < 1:
            raise ValueError("num_chains must be >= 1")
        if self.langevin_steps < 0:
            raise ValueError("langevin_steps must be >= 0")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.mode not in (MLE, CD):
            raise ValueError(f"mode must be '{MLE}' or '{CD}'")
        if self.growth_schedule is not None:
            for stage in self.growth_schedule:
                n, iters = stage
                if n < 1 or iters < 0:
                    raise ValueError(f"bad growth stage {stage}")
        if self.lr_layer_scale is not None and any(s <= 0 for s in self.lr_layer_scale):
            raise ValueError("lr_layer_scale entries must be positive")


@dataclass
class ParamGrad:
    """Per-layer weight and bias gradients mirroring a network's layout."""

    weights: List[np.ndarray]
    biases: List[np.ndarray]

    @classmethod
    def zeros(cls, net: Network) -> "ParamGrad":
        return cls(
            weights=[np.zeros_like(l.weights) for l in net.layers],
            biases=[np.zeros_like(l.biases) for l in net.layers],
        )

    def add_(self, other: "ParamGrad", scale: float = 1.0) -> "ParamGrad":
        for a, b in zip(self.weights, other.weights):
            a += scale * b
        for a, b in zip(self.biases, other.biases):
            a += scale * b
        return self

    def scale_(self, c: float) -> "ParamGrad":
        for a in self.weights:
            a *= c
        for a in self.biases:
            a *= c
        return self

    def as_vector(self) -> np.ndarray:
        parts = [w.ravel() for w in self.weights] + [b.ravel() for b in self.biases]
        return np.concatenate(parts)

    def mean_abs(self) -> float:
        return float(np.abs(self.as_vector()).mean())


def grad_params(net: Network, image: Tensor3) -> ParamGrad:
    """Reverse-mode gradient of the conv_sum score in every weight and bias.

    ReLU gates are held at their forward values; a gate of zero blocks
    both the bias and the weight contribution at that position.
    """
    if net.top_mode != CONV_SUM:
        raise ValueError("grad_params requires conv_sum top mode")
    fmaps, pattern = forward(net, image)
    g = ParamGrad.zeros(net)
    adj = np.ones_like(fmaps[-1])
    for l in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[l]
        coef = adj * pattern.maps[l]
        g.biases[l][:] = coef.sum(axis=(1, 2))
        win = _windows(fmaps[l], layer.kernel_h, layer.kernel_w, layer.stride)
        g.weights[l][:] = np.einsum("khw,ihwuv->kiuv", coef, win)
        if l > 0:
            oh, ow = coef.shape[1:]
            s = layer.stride
            adj_prev = np.zeros(fmaps[l].shape, dtype=np.float64)
            for u in range(layer.kernel_h):
                for v in range(layer.kernel_w):
                    contrib = np.einsum("khw,ki->ihw", coef, layer.weights[:, :, u, v])
                    adj_prev[
                        :, u : u + s * (oh - 1) + 1 : s, v : v + s * (ow - 1) + 1 : s
                    ] += contrib
            adj = adj_prev
    return g


def _mean_grad(net: Network, images: Sequence[Tensor3]) -> ParamGrad:
    acc = ParamGrad.zeros(net)
    for im in images:
        acc.add_(grad_params(net, im))
    return acc.scale_(1.0 / len(images))


def _apply_update(
    net: Network, update: ParamGrad, eta: float, layer_scale: Optional[List[float]]
) -> Network:
    out = net.copy()
    for l, (layer, gw, gb) in enumerate(zip(out.layers, update.weights, update.biases)):
        step = eta if layer_scale is None else eta * layer_scale[l]
        layer.weights += step * gw
        layer.biases += step * gb
    return out


def _check_finite(net: Network, images: Sequence[Tensor3], where: str) -> None:
    for l, layer in enumerate(net.layers):
        if not (np.all(np.isfinite(layer.weights)) and np.all(np.isfinite(layer.biases))):
            raise DivergenceError(f"non-finite parameters in layer {l + 1} {where}")
    for i, im in enumerate(images):
        if not np.all(np.isfinite(im)):
            raise DivergenceError(f"non-finite image {i} {where}")


@dataclass
class StepStats:
    """Diagnostics of one parameter update."""

    update: ParamGrad
    grad_mean_abs: float
    mean_energy: float
    synthesized: List[Tensor3] = field(default_factory=list)
    recon_rmse: Optional[float] = None


@dataclass
class TrainRecord:
    """One history row; ``recon_rmse`` is populated in CD mode only."""

    iteration: int
    grad_norm: float
    mean_energy: float
    recon_rmse: Optional[float] = None


def history_csv(records: Sequence[TrainRecord]) -> str:
    lines = ["iter,grad_norm,mean_energy"]
    for r in records:
        lines.append(f"{r.iteration},{r.grad_norm!r},{r.mean_energy!r}")
    return "\n".join(lines) + "\n"


def mle_step(
    net: Network,
    observed: Sequence[Tensor3],
    chains: Sequence[ChainState],
    config: TrainConfig,
):
    """One iteration of the persistent-chain likelihood ascent.

    Advances every chain ``langevin_steps`` steps under the current
    parameters, then moves the parameters along
    ``learning_rate * (H_obs - H_syn)``.  Returns the updated network,
    the advanced chains, and step diagnostics.
    """
    lcfg = LangevinConfig(epsilon=config.epsilon, steps=config.langevin_steps)
    chains = [langevin_run(net, c, lcfg) for c in chains]
    h_obs = _mean_grad(net, observed)
    h_syn = _mean_grad(net, [c.image for c in chains])
    update = h_obs.add_(h_syn, scale=-1.0)
    net2 = _apply_update(net, update, config.learning_rate, config.lr_layer_scale)
    mean_energy = float(np.mean([energy(net, c.image) for c in chains]))
    stats = StepStats(
        update=update,
        grad_mean_abs=update.mean_abs(),
        mean_energy=mean_energy,
        synthesized=[c.image for c in chains],
    )
    return net2, chains, stats


def cd_step(
    net: Network,
    observed: Sequence[Tensor3],
    config: TrainConfig,
    rngs: Sequence[SeededRng],
):
    """One contrastive-divergence update.

    Each observed image seeds its own short chain (``langevin_steps``
    steps, one by default); the update is the mean difference between
    the score gradients at the observed and the synthesized images.
    """
    if config.mode != CD:
        raise ValueError("cd_step requires mode='cd'")
    lcfg = LangevinConfig(epsilon=config.epsilon, steps=config.langevin_steps)
    update = ParamGrad.zeros(net)
    synthesized = []
    for im, rng in zip(observed, rngs):
        chain = langevin_run(net, ChainState(image=im, step_count=0, rng=rng), lcfg)
        synthesized.append(chain.image)
        update.add_(grad_params(net, im))
        update.add_(grad_params(net, chain.image), scale=-1.0)
    update.scale_(1.0 / len(observed))
    net2 = _apply_update(net, update, config.learning_rate, config.lr_layer_scale)
    mean_energy = float(np.mean([energy(net, s) for s in synthesized]))
    stats = StepStats(
        update=update,
        grad_mean_abs=update.mean_abs(),
        mean_energy=mean_energy,
        synthesized=synthesized,
    )
    return net2, stats


def reconstruct(net: Network, image: Tensor3) -> Tensor3:
    """Encode to the activation pattern, decode to the piece mean sigma^2 B."""
    _, delta = forward(net, image)
    return net.sigma_sq * top_down(net, delta).B


def _recon_rmse(net: Network, images: Sequence[Tensor3]) -> float:
    total = 0.0
    for im in images:
        r = im - reconstruct(net, im)
        total += float(np.sqrt(np.mean(r * r)))
    return total / len(images)


def _resolve_schedule(config: TrainConfig, num_layers: int) -> List[tuple]:
    if config.growth_schedule is None:
        return [(num_layers, config.iterations)]
    for n, _ in config.growth_schedule:
        if n > num_layers:
            raise ValueError(f"growth stage wants layer {n}, network has {num_layers}")
    return list(config.growth_schedule)


def train(net0: Network, images: Sequence[Tensor3], config: TrainConfig):
    """Run the full learning loop; returns (net, synthesized, history).

    MLE mode: chains start at zero images (one private noise stream per
    chain, seeded ``config.seed XOR chain_index`` with 1-based indices)
    and persist across parameter updates and growth stages.  CD mode:
    every layer is trained simultaneously and the growth schedule is
    ignored; the per-image chains restart at the observed images each
    iteration but keep their noise streams.
    """
    if not images:
        raise ValueError("need at least one training image")
    shape = images[0].shape
    for im in images:
        if im.shape != shape:
            raise ValueError("training images must share one shape")
    if net0.top_mode != CONV_SUM:
        raise ValueError("training requires conv_sum top mode")
    net0.validate(shape[1:])

    master = SeededRng(config.seed)
    net = net0.copy()
    history: List[TrainRecord] = []

    if config.mode == CD:
        rngs = [master.spawn(i + 1) for i in range(len(images))]
        stats = None
        for t in range(1, config.iterations + 1):
            net, stats = cd_step(net, images, config, rngs)
            _check_finite(net, stats.synthesized, f"after CD iteration {t}")
            history.append(
                TrainRecord(
                    iteration=t,
                    grad_norm=stats.grad_mean_abs,
                    mean_energy=stats.mean_energy,
                    recon_rmse=_recon_rmse(net, images),
                )
            )
        synthesized = stats.synthesized if stats is not None else []
        return net, synthesized, history

    chains = [
        ChainState(
            image=np.zeros(shape, dtype=np.float64),
            step_count=0,
            rng=master.spawn(i + 1),
        )
        for i in range(config.num_chains)
    ]
    t = 0
    for n_active, iters in _resolve_schedule(config, len(net.layers)):
        sub = Network(
            input_channels=net.input_channels,
            layers=net.layers[:n_active],
            top_mode=CONV_SUM,
            sigma_sq=net.sigma_sq,
        )
        for _ in range(iters):
            t += 1
            sub, chains, stats = mle_step(sub, images, chains, config)
            _check_finite(sub, [c.image for c in chains], f"after iteration {t}")
            history.append(
                TrainRecord(
                    iteration=t,
                    grad_norm=stats.grad_mean_abs,
                    mean_energy=stats.mean_energy,
                )
            )
        net.layers[:n_active] = sub.layers
    return net, [c.image for c in chains], history
