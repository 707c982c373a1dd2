"""Command-line front end: data ingestion, checkpoints, and workflows.

Subcommands: ``train`` (fit a model and write checkpoint, synthesized
images, history CSV), ``sample`` (run fresh chains from a checkpoint),
``reconstruct`` (write the auto-encoding reconstruction of each input
image), ``verify`` (run the numerical check battery, one JSON report
per line, nonzero exit on failure), and ``info`` (print architecture
and parameter counts).

Images are 8-bit binary PGM (P5) or PPM (P6).  Preprocessing maps raw
[0, 255] intensities to model units: optional nearest-neighbor resize,
optional grayscale conversion, mean subtraction (per-pixel dataset
mean, per-channel scalar mean, or off), then multiplication by
``intensity_scale``.  The mean image and scale are stored in the
checkpoint so emitted images can be mapped back to display range
(values are un-scaled, the mean is added back, and the result is
clamped to [0, 255] and rounded half away from zero).

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 divergence during training.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import List, Optional

import numpy as np

from .learner import (
    CD,
    MLE,
    DivergenceError,
    TrainConfig,
    history_csv,
    reconstruct,
    train,
)
from .net import CONV_SUM, LayerSpec, Network, conv_output_extent, init_network
from .oracle import run_check_battery
from .sampler import ChainState, LangevinConfig, langevin_run
from .tensor import SeededRng, Tensor3

__all__ = [
    "ConfigError",
    "RunConfig",
    "PRESETS",
    "load_image",
    "save_image",
    "load_dataset",
    "save_checkpoint",
    "load_checkpoint",
    "run_train",
    "run_sample",
    "run_reconstruct",
    "run_verify",
    "main",
]


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending field."""


# ---------------------------------------------------------------------------
# PGM / PPM
# ---------------------------------------------------------------------------


def _read_pnm_header(data: bytes, path):
    """Parse magic, width, height, maxval; returns (magic, w, h, maxval, offset)."""
    pos = 0

    def token():
        nonlocal pos
        while pos < len(data):
            if data[pos : pos + 1].isspace():
                pos += 1
            elif data[pos : pos + 1] == b"#":
                while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                    pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"{path}: truncated header")
        return data[start:pos]

    magic = token()
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"{path}: unsupported magic {magic!r} (want P5 or P6)")
    try:
        width, height, maxval = int(token()), int(token()), int(token())
    except ValueError as exc:
        raise ValueError(f"{path}: malformed header: {exc}") from None
    if width < 1 or height < 1:
        raise ValueError(f"{path}: bad dimensions {width}x{height}")
    if not 0 < maxval <= 255:
        raise ValueError(f"{path}: unsupported depth maxval={maxval} (want 8-bit)")
    pos += 1  # single whitespace byte separating header from payload
    return magic, width, height, maxval, pos


def load_image(path) -> Tensor3:
    """Read an 8-bit P5/P6 file into a float tensor with [0, 255] values."""
    data = Path(path).read_bytes()
    magic, width, height, maxval, offset = _read_pnm_header(data, path)
    channels = 1 if magic == b"P5" else 3
    need = width * height * channels
    payload = data[offset : offset + need]
    if len(payload) != need:
        raise ValueError(f"{path}: truncated payload ({len(payload)} of {need} bytes)")
    arr = np.frombuffer(payload, dtype=np.uint8).astype(np.float64)
    arr = arr.reshape(height, width, channels)
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def save_image(
    tensor: Tensor3,
    path,
    mean_image: Optional[Tensor3] = None,
    intensity_scale: float = 1.0,
) -> None:
    """Map model units back to [0, 255] bytes and write P5/P6.

    Values are divided by ``intensity_scale``, the stored mean is added
    back, and the result is clamped to [0, 255] and rounded half away
    from zero.
    """
    raw = tensor / intensity_scale
    if mean_image is not None:
        raw = raw + mean_image
    raw = np.clip(raw, 0.0, 255.0)
    raw = np.floor(raw + 0.5)  # after the clamp all values are >= 0
    c, h, w = raw.shape
    if c == 1:
        header = f"P5\n{w} {h}\n255\n".encode()
        payload = raw[0].astype(np.uint8).tobytes()
    elif c == 3:
        header = f"P6\n{w} {h}\n255\n".encode()
        payload = raw.transpose(1, 2, 0).astype(np.uint8).tobytes()
    else:
        raise ValueError(f"cannot write {c}-channel image (want 1 or 3)")
    Path(path).write_bytes(header + payload)


def _resize_nearest(image: Tensor3, out_h: int, out_w: int) -> Tensor3:
    c, h, w = image.shape
    if (h, w) == (out_h, out_w):
        return image
    rows = np.minimum((np.arange(out_h) + 0.5) * h / out_h, h - 1).astype(int)
    cols = np.minimum((np.arange(out_w) + 0.5) * w / out_w, w - 1).astype(int)
    return np.ascontiguousarray(image[:, rows][:, :, cols])


def _to_grayscale(image: Tensor3) -> Tensor3:
    if image.shape[0] == 1:
        return image
    luma = 0.299 * image[0] + 0.587 * image[1] + 0.114 * image[2]
    return luma[np.newaxis]


def load_dataset(paths, config: "RunConfig"):
    """Load, resize, convert, and normalize a set of training images.

    Returns ``(images, mean_image)`` where images are in model units
    and ``mean_image`` is in raw [0, 255] units (None when mean
    subtraction is off).
    """
    if not paths:
        raise ConfigError("field 'data': no .pgm/.ppm images found")
    raws = []
    for p in paths:
        im = load_image(p)
        if config.grayscale:
            im = _to_grayscale(im)
        im = _resize_nearest(im, config.image_size, config.image_size)
        raws.append(im)
    shape = raws[0].shape
    for p, im in zip(paths, raws):
        if im.shape != shape:
            raise ConfigError(f"field 'data': image {p} has shape {im.shape} != {shape}")
    if config.mean_mode == "image":
        mean_image = np.mean(raws, axis=0)
    elif config.mean_mode == "scalar":
        per_channel = np.mean(raws, axis=(0, 2, 3))
        mean_image = np.broadcast_to(
            per_channel[:, np.newaxis, np.newaxis], shape
        ).copy()
    elif config.mean_mode == "off":
        mean_image = None
    else:
        raise ConfigError(f"field 'mean_mode': unknown value {config.mean_mode!r}")
    images = []
    for im in raws:
        shifted = im - mean_image if mean_image is not None else im
        images.append(shifted * config.intensity_scale)
    return images, mean_image


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

CHECKPOINT_VERSION = 1


def save_checkpoint(
    path,
    net: Network,
    iteration: int = 0,
    seed: int = 0,
    mean_image: Optional[Tensor3] = None,
    intensity_scale: float = 1.0,
    rng_state: Optional[dict] = None,
) -> None:
    """Serialize the network and preprocessing state to JSON.

    Weight arrays are stored flat in their native (filter, channel,
    row, column) C order; float round-tripping through JSON is exact.
    """
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "input_channels": net.input_channels,
        "sigma_sq": net.sigma_sq,
        "top_mode": net.top_mode,
        "layers": [
            {
                "num_filters": l.num_filters,
                "kernel_h": l.kernel_h,
                "kernel_w": l.kernel_w,
                "stride": l.stride,
                "weights": l.weights.ravel().tolist(),
                "biases": l.biases.tolist(),
            }
            for l in net.layers
        ],
        "head_weights": None if net.head_weights is None else net.head_weights.ravel().tolist(),
        "head_biases": None if net.head_biases is None else net.head_biases.tolist(),
        "iteration": iteration,
        "seed": seed,
        "rng_state": rng_state,
        "mean_image": None
        if mean_image is None
        else {"shape": list(mean_image.shape), "data": mean_image.ravel().tolist()},
        "intensity_scale": intensity_scale,
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`; returns (net, meta dict)."""
    doc = json.loads(Path(path).read_text())
    if doc.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version")
    layers = []
    in_ch = doc["input_channels"]
    prev = in_ch
    for spec in doc["layers"]:
        shape = (spec["num_filters"], prev, spec["kernel_h"], spec["kernel_w"])
        layers.append(
            LayerSpec(
                num_filters=spec["num_filters"],
                kernel_h=spec["kernel_h"],
                kernel_w=spec["kernel_w"],
                stride=spec["stride"],
                weights=np.array(spec["weights"], dtype=np.float64).reshape(shape),
                biases=np.array(spec["biases"], dtype=np.float64),
            )
        )
        prev = spec["num_filters"]
    head_w = doc.get("head_weights")
    head_b = doc.get("head_biases")
    if head_w is not None:
        head_b = np.array(head_b, dtype=np.float64)
        head_w = np.array(head_w, dtype=np.float64).reshape(head_b.size, prev)
    net = Network(
        input_channels=in_ch,
        layers=layers,
        top_mode=doc["top_mode"],
        head_weights=head_w,
        head_biases=head_b,
        sigma_sq=doc["sigma_sq"],
    )
    net.validate()
    mean_image = None
    if doc.get("mean_image") is not None:
        m = doc["mean_image"]
        mean_image = np.array(m["data"], dtype=np.float64).reshape(m["shape"])
    meta = {
        "iteration": doc["iteration"],
        "seed": doc["seed"],
        "rng_state": doc.get("rng_state"),
        "mean_image": mean_image,
        "intensity_scale": doc["intensity_scale"],
    }
    return net, meta


# ---------------------------------------------------------------------------
# Run configuration and presets
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    """Fully resolved run configuration (file values overridden by flags)."""

    layers: List[list]
    image_size: int = 64
    grayscale: bool = True
    mean_mode: str = "image"
    intensity_scale: float = 1.0
    num_chains: int = 8
    langevin_steps: int = 10
    iterations: int = 100
    epsilon: float = 0.3
    learning_rate: float = 0.01
    init_std: float = 0.01
    mode: str = MLE
    growth: str = "sequential"
    seed: int = 0
    data: Optional[str] = None
    out: Optional[str] = None

    def validate(self) -> None:
        if not self.layers:
            raise ConfigError("field 'layers': at least one layer is required")
        for i, ldef in enumerate(self.layers):
            if len(ldef) != 4:
                raise ConfigError(
                    f"field 'layers[{i}]': want [filters, kernel_h, kernel_w, stride]"
                )
            nf, kh, kw, stride = ldef
            if not (isinstance(nf, int) and nf >= 1):
                raise ConfigError(f"field 'layers[{i}]': filters must be a positive int")
            for name, v in (("kernel_h", kh), ("kernel_w", kw)):
                if v != "full" and not (isinstance(v, int) and v >= 1):
                    raise ConfigError(
                        f"field 'layers[{i}]': {name} must be a positive int or 'full'"
                    )
            if not (isinstance(stride, int) and stride >= 1):
                raise ConfigError(f"field 'layers[{i}]': stride must be a positive int")
        if self.image_size < 1:
            raise ConfigError("field 'image_size': must be >= 1")
        if self.mean_mode not in ("image", "scalar", "off"):
            raise ConfigError("field 'mean_mode': want 'image', 'scalar', or 'off'")
        if self.intensity_scale <= 0:
            raise ConfigError("field 'intensity_scale': must be > 0")
        if self.num_chains < 1:
            raise ConfigError("field 'num_chains': must be >= 1")
        if self.langevin_steps < 0:
            raise ConfigError("field 'langevin_steps': must be >= 0")
        if self.iterations < 0:
            raise ConfigError("field 'iterations': must be >= 0")
        if self.epsilon <= 0:
            raise ConfigError("field 'epsilon': must be > 0")
        if self.learning_rate <= 0:
            raise ConfigError("field 'learning_rate': must be > 0")
        if self.init_std < 0:
            raise ConfigError("field 'init_std': must be >= 0")
        if self.mode not in (MLE, CD):
            raise ConfigError(f"field 'mode': want '{MLE}' or '{CD}'")
        if self.growth not in ("sequential", "all_at_once"):
            raise ConfigError("field 'growth': want 'sequential' or 'all_at_once'")

    def resolved_layers(self) -> List[tuple]:
        """Layer tuples with 'full' kernels replaced by the running extent."""
        out = []
        h = w = self.image_size
        for nf, kh, kw, stride in self.layers:
            kh = h if kh == "full" else kh
            kw = w if kw == "full" else kw
            if kh > h or kw > w:
                raise ConfigError(
                    f"field 'layers': kernel {kh}x{kw} exceeds map extent {h}x{w}"
                )
            out.append((nf, kh, kw, stride))
            h = conv_output_extent(h, kh, stride)
            w = conv_output_extent(w, kw, stride)
            if h < 1 or w < 1:
                raise ConfigError("field 'layers': spatial extent shrank below 1")
        return out

    def train_config(self) -> TrainConfig:
        if self.growth == "sequential" and self.mode == MLE:
            num_layers = len(self.layers)
            base, extra = divmod(self.iterations, num_layers)
            schedule = [
                (n + 1, base + (1 if n < extra else 0)) for n in range(num_layers)
            ]
        else:
            schedule = None
        return TrainConfig(
            num_chains=self.num_chains,
            langevin_steps=self.langevin_steps,
            iterations=self.iterations,
            epsilon=self.epsilon,
            learning_rate=self.learning_rate,
            init_std=self.init_std,
            mode=self.mode,
            growth_schedule=schedule,
            seed=self.seed,
        )


_EXP1_ARCH = [[100, 15, 15, 3], [64, 5, 5, 1], [30, 3, 3, 1]]
_EXP2_ARCH = [[100, 7, 7, 2], [64, 5, 5, 1], [20, 3, 3, 1], [1, "full", "full", 1]]

PRESETS = {
    # Paper-scale operating points: 16 chains, 10 Langevin steps between
    # updates, 700 iterations per grown layer, 224x224 inputs, and
    # one-step dynamics with 1200 iterations for the reconstruction run.
    "exp1-paper": dict(
        layers=_EXP1_ARCH,
        image_size=224,
        num_chains=16,
        langevin_steps=10,
        iterations=2100,
        mode=MLE,
        growth="sequential",
        mean_mode="scalar",
        intensity_scale=1.0 / 64.0,
        epsilon=0.01,
    ),
    "exp2-paper": dict(
        layers=_EXP2_ARCH,
        image_size=224,
        num_chains=16,
        langevin_steps=10,
        iterations=2800,
        mode=MLE,
        growth="all_at_once",
        mean_mode="image",
        intensity_scale=1.0 / 64.0,
        epsilon=0.01,
    ),
    "exp3-paper": dict(
        layers=_EXP1_ARCH,
        image_size=224,
        num_chains=16,
        langevin_steps=1,
        iterations=1200,
        mode=CD,
        growth="all_at_once",
        mean_mode="image",
        intensity_scale=1.0 / 64.0,
        epsilon=0.01,
    ),
    # Desk-scale presets keep the paper's L and sigma^2 and shrink
    # everything else to minutes on one core.
    "exp1-desk": dict(
        layers=[[8, 7, 7, 3], [6, 3, 3, 1], [4, 3, 3, 1]],
        image_size=64,
        num_chains=8,
        langevin_steps=10,
        iterations=200,
        mode=MLE,
        growth="sequential",
        mean_mode="scalar",
        intensity_scale=1.0 / 48.0,
        epsilon=0.1,
        learning_rate=0.01,
        init_std=0.01,
    ),
    "exp2-desk": dict(
        layers=[[8, 7, 7, 2], [6, 3, 3, 1], [4, 3, 3, 1], [1, "full", "full", 1]],
        image_size=48,
        num_chains=8,
        langevin_steps=10,
        iterations=150,
        mode=MLE,
        growth="all_at_once",
        mean_mode="image",
        intensity_scale=1.0 / 48.0,
        epsilon=0.1,
    ),
    "exp3-desk": dict(
        layers=[[8, 7, 7, 3], [6, 3, 3, 1], [4, 3, 3, 1]],
        image_size=32,
        num_chains=8,
        langevin_steps=1,
        iterations=300,
        mode=CD,
        growth="all_at_once",
        mean_mode="image",
        intensity_scale=1.0 / 48.0,
        epsilon=0.3,
        learning_rate=0.02,
        init_std=0.05,
    ),
}

_FLAG_FIELDS = (
    "image_size",
    "mean_mode",
    "intensity_scale",
    "num_chains",
    "langevin_steps",
    "iterations",
    "epsilon",
    "learning_rate",
    "init_std",
    "mode",
    "growth",
    "seed",
    "data",
    "out",
)


def build_run_config(args) -> RunConfig:
    """Merge preset, config file, and command-line flags (flags win)."""
    values: dict = {}
    preset = getattr(args, "preset", None)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(
                f"field 'preset': unknown preset {preset!r}; "
                f"choices: {', '.join(sorted(PRESETS))}"
            )
        values.update(PRESETS[preset])
    config_path = getattr(args, "config", None)
    if config_path is not None:
        try:
            file_values = json.loads(Path(config_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"field 'config': cannot read {config_path}: {exc}")
        if not isinstance(file_values, dict):
            raise ConfigError("field 'config': top level must be a JSON object")
        known = {f.name for f in fields(RunConfig)}
        for key in file_values:
            if key not in known:
                raise ConfigError(f"field '{key}': unknown configuration key")
        values.update(file_values)
    for name in _FLAG_FIELDS:
        v = getattr(args, name.replace("-", "_"), None)
        if v is not None:
            values[name] = v
    if "layers" not in values:
        raise ConfigError("field 'layers': required (via --preset or config file)")
    try:
        config = RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(f"field 'config': {exc}")
    config.validate()
    return config


# ---------------------------------------------------------------------------
# Workflows
# ---------------------------------------------------------------------------


def _find_images(data_dir) -> List[Path]:
    root = Path(data_dir)
    if not root.is_dir():
        raise ConfigError(f"field 'data': {data_dir} is not a directory")
    return sorted(p for p in root.iterdir() if p.suffix.lower() in (".pgm", ".ppm"))


def run_train(config: RunConfig):
    """Train per config; writes checkpoint, synthesized images, history CSV.

    Returns ``(net, synthesized, history)`` for callers that want the
    in-memory results as well.
    """
    if config.data is None:
        raise ConfigError("field 'data': required for train")
    if config.out is None:
        raise ConfigError("field 'out': required for train")
    images, mean_image = load_dataset(_find_images(config.data), config)
    in_channels = images[0].shape[0]
    rng = SeededRng(config.seed)
    net0 = init_network(
        in_channels,
        config.resolved_layers(),
        config.init_std,
        rng,
        input_hw=(config.image_size, config.image_size),
    )
    tc = config.train_config()
    net, synthesized, history = train(net0, images, tc)

    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(
        out / "checkpoint.json",
        net,
        iteration=config.iterations,
        seed=config.seed,
        mean_image=mean_image,
        intensity_scale=config.intensity_scale,
    )
    for i, im in enumerate(synthesized):
        save_image(im, out / f"synth_{i:03d}.pgm", mean_image, config.intensity_scale)
    (out / "history.csv").write_text(history_csv(history))
    return net, synthesized, history


def run_sample(checkpoint_path, out_dir, steps: int, chains: int, seed: int, epsilon: float):
    """Fresh zero-initialized chains from a checkpoint; writes one image each."""
    net, meta = load_checkpoint(checkpoint_path)
    if net.top_mode != CONV_SUM:
        raise ConfigError("field 'checkpoint': sampling needs a conv_sum network")
    if meta["mean_image"] is None:
        raise ConfigError("field 'checkpoint': no stored image geometry to sample at")
    shape = meta["mean_image"].shape
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    master = SeededRng(seed)
    cfg = LangevinConfig(epsilon=epsilon, steps=steps)
    results = []
    for i in range(chains):
        chain = ChainState(
            image=np.zeros(shape, dtype=np.float64),
            step_count=0,
            rng=master.spawn(i + 1),
        )
        chain = langevin_run(net, chain, cfg)
        results.append(chain.image)
        save_image(
            chain.image,
            out / f"sample_{i:03d}.pgm",
            meta["mean_image"],
            meta["intensity_scale"],
        )
    return results


def run_reconstruct(checkpoint_path, data_dir, out_dir):
    """Auto-encoding reconstruction of each input image under a checkpoint."""
    net, meta = load_checkpoint(checkpoint_path)
    mean_image = meta["mean_image"]
    scale = meta["intensity_scale"]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = _find_images(data_dir)
    if not paths:
        raise ConfigError(f"field 'data': no images in {data_dir}")
    results = []
    for p in paths:
        raw = load_image(p)
        if mean_image is not None:
            if raw.shape[0] != mean_image.shape[0] and mean_image.shape[0] == 1:
                raw = _to_grayscale(raw)
            raw = _resize_nearest(raw, mean_image.shape[1], mean_image.shape[2])
            im = (raw - mean_image) * scale
        else:
            im = raw * scale
        recon = reconstruct(net, im)
        results.append(recon)
        save_image(recon, out / f"recon_{p.stem}.pgm", mean_image, scale)
    return results


def run_verify(seed: int = 0, stream=None) -> bool:
    """Run the oracle battery; prints one JSON report per line."""
    stream = stream if stream is not None else sys.stdout
    all_pass = True
    for report in run_check_battery(seed):
        stream.write(json.dumps(report, sort_keys=True) + "\n")
        all_pass &= bool(report["pass"])
    return all_pass


def _cmd_train(args) -> int:
    config = build_run_config(args)
    net, synthesized, history = run_train(config)
    last = history[-1] if history else None
    print(
        f"trained {len(net.layers)} layers, {net.num_params()} parameters; "
        f"wrote {len(synthesized)} synthesized images to {config.out}"
    )
    if last is not None:
        print(f"final grad_norm {last.grad_norm:.6g}, mean energy {last.mean_energy:.6g}")
    return 0


def _cmd_sample(args) -> int:
    run_sample(args.checkpoint, args.out, args.steps, args.chains, args.seed, args.epsilon)
    print(f"wrote {args.chains} samples to {args.out}")
    return 0


def _cmd_reconstruct(args) -> int:
    results = run_reconstruct(args.checkpoint, args.data, args.out)
    print(f"wrote {len(results)} reconstructions to {args.out}")
    return 0


def _cmd_verify(args) -> int:
    return 0 if run_verify(args.seed) else 1


def _cmd_info(args) -> int:
    if args.checkpoint is not None:
        net, meta = load_checkpoint(args.checkpoint)
        size = None if meta["mean_image"] is None else meta["mean_image"].shape[1]
        print(f"checkpoint: {args.checkpoint} (iteration {meta['iteration']})")
    else:
        config = build_run_config(args)
        rng = SeededRng(0)
        net = init_network(
            1 if config.grayscale else 3,
            config.resolved_layers(),
            0.0,
            rng,
            input_hw=(config.image_size, config.image_size),
        )
        size = config.image_size
    print(f"input channels: {net.input_channels}")
    for i, l in enumerate(net.layers):
        print(
            f"layer {i + 1}: {l.num_filters} filters {l.kernel_h}x{l.kernel_w} "
            f"stride {l.stride}"
        )
    if size is not None:
        shapes = net.output_shapes((size, size))
        print(f"map extents at {size}x{size}: {shapes}")
    print(f"top mode: {net.top_mode}")
    print(f"parameters: {net.num_params()}")
    print(f"sigma_sq: {net.sigma_sq}")
    return 0


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--preset", help=f"one of: {', '.join(sorted(PRESETS))}")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", help="output directory")
    p.add_argument("--data", help="directory of .pgm/.ppm images")
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--chains", dest="num_chains", type=int, default=None)
    p.add_argument("--langevin-steps", type=int, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--init-std", type=float, default=None)
    p.add_argument("--image-size", type=int, default=None)
    p.add_argument("--mean-mode", choices=("image", "scalar", "off"), default=None)
    p.add_argument("--intensity-scale", type=float, default=None)
    p.add_argument("--mode", choices=(MLE, CD), default=None)
    p.add_argument("--growth", choices=("sequential", "all_at_once"), default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="convebm",
        description="Energy-based ConvNet image model: train, sample, verify.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a model and write outputs")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("sample", help="run fresh Langevin chains from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--chains", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epsilon", type=float, default=0.3)
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("reconstruct", help="auto-encode input images")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_reconstruct)

    p = sub.add_parser("verify", help="run the numerical check battery")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("info", help="print architecture and parameter counts")
    p.add_argument("--checkpoint")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_info)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
