"""Network definitions, patch sampling, training schedule and inference.

Two networks share the CNN engine:

  denoiser    bottleneck autoencoder [16-8-pool-8-up-16-2], all ReLU, MSE
              against its own (noisy) input
  classifier  stack of 16-map separable 3x3 layers with a single-channel
              sigmoid head, BCE against {0,1} label patches

Both consume the preprocessed interferogram as two channels (real,
imaginary) shifted into [0, 2].
"""

from dataclasses import dataclass, replace

import numpy as np

from . import coherence, mrf, raster
from .errors import ParameterError, ShapeError, TrainingDivergedError
from .nn import (
    LayerSpec,
    NetworkParams,
    adam_step,
    backward,
    forward,
    loss,
    loss_grad,
    predict,
    validate_spec,
    xavier_init,
)

DENOISER_PATCH_SIZE = 60
CLASSIFIER_PATCH_SIZE = 64
DENOISER_EPOCHS = 50
CLASSIFIER_EPOCHS = 100


@dataclass(frozen=True)
class TrainingConfig:
    patches_per_image: int = 500
    patch_size: int = 64
    batch_size: int = 100
    initial_lr: float = 1e-3
    lr_halving_period: int = 10
    epochs: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.patches_per_image < 1 or self.patch_size < 1 or self.batch_size < 1:
            raise ParameterError("counts and sizes must be positive")
        if self.lr_halving_period < 1:
            raise ParameterError("lr_halving_period must be >= 1")
        if self.epochs < 0:
            raise ParameterError("epochs must be >= 0")

    def learning_rate_at(self, epoch: int) -> float:
        return self.initial_lr * 0.5 ** (epoch // self.lr_halving_period)


def denoiser_config(**overrides) -> TrainingConfig:
    base = dict(patch_size=DENOISER_PATCH_SIZE, epochs=DENOISER_EPOCHS)
    base.update(overrides)
    return TrainingConfig(**base)


def classifier_config(**overrides) -> TrainingConfig:
    base = dict(patch_size=CLASSIFIER_PATCH_SIZE, epochs=CLASSIFIER_EPOCHS)
    base.update(overrides)
    return TrainingConfig(**base)


@dataclass(frozen=True)
class NetworkRole:
    role: str  # "denoiser" | "classifier"
    layers: tuple


def denoiser_role() -> NetworkRole:
    layers = (
        LayerSpec("conv", 2, 16, "relu"),
        LayerSpec("conv", 16, 8, "relu"),
        LayerSpec("maxpool3", 8, 8),
        LayerSpec("conv", 8, 8, "relu"),
        LayerSpec("upsample3", 8, 8),
        LayerSpec("conv", 8, 16, "relu"),
        LayerSpec("conv", 16, 2, "relu"),
    )
    return NetworkRole("denoiser", validate_spec(layers))


def classifier_role(depth: int = 4, maps: int = 16) -> NetworkRole:
    """Separable 3x3 stack (ReLU) feeding a single-map sigmoid conv head."""
    if depth < 1:
        raise ParameterError("classifier needs at least one separable layer")
    layers = [LayerSpec("separable_conv", 2, maps, "relu")]
    layers += [LayerSpec("separable_conv", maps, maps, "relu") for _ in range(depth - 1)]
    layers.append(LayerSpec("conv", maps, 1, "sigmoid"))
    return NetworkRole("classifier", validate_spec(layers))


def to_channels(shifted) -> np.ndarray:
    """Stack a preprocessed complex raster into a float32 (2, h, w) tensor."""
    z = np.asarray(shifted)
    return np.stack([z.real, z.imag]).astype(np.float32)


def preprocess_image(z):
    """saturate_and_normalize + channel stacking; returns (channels, ceiling)."""
    shifted, _, ceiling = raster.saturate_and_normalize(z)
    return to_channels(shifted), ceiling


def sample_patches(images, cfg: TrainingConfig, labels=None):
    """Cut random aligned patches and shuffle them into batches.

    images are complex interferograms; each is preprocessed with its own
    amplitude ceiling before cutting. Optional labels are {0,1} rasters cut
    at identical coordinates. Returns a list of (x, target) pairs where x
    is (b, 2, p, p) float32 and target is (b, 1, p, p) float32 or None.
    """
    if labels is not None and len(labels) != len(images):
        raise ParameterError("need one label raster per image")
    rng = np.random.default_rng(cfg.seed)
    ps = cfg.patch_size
    xs = []
    ys = []
    for i, img in enumerate(images):
        chans = img if (np.asarray(img).ndim == 3) else preprocess_image(img)[0]
        _, h, w = chans.shape
        if h < ps or w < ps:
            raise ParameterError(f"image {i} is {h}x{w}, smaller than patch size {ps}")
        rows = rng.integers(0, h - ps + 1, size=cfg.patches_per_image)
        cols = rng.integers(0, w - ps + 1, size=cfg.patches_per_image)
        lab = None
        if labels is not None:
            lab = np.asarray(labels[i])
            if lab.shape != (h, w):
                raise ShapeError(f"label raster {i} shape {lab.shape} vs image {h}x{w}")
        for r, c in zip(rows, cols):
            xs.append(chans[:, r : r + ps, c : c + ps])
            if lab is not None:
                ys.append(lab[None, r : r + ps, c : c + ps].astype(np.float32))
    x_all = np.stack(xs)
    y_all = np.stack(ys) if ys else None
    order = rng.permutation(len(x_all))
    batches = []
    for start in range(0, len(order), cfg.batch_size):
        pick = order[start : start + cfg.batch_size]
        batches.append((x_all[pick], None if y_all is None else y_all[pick]))
    return batches


def train_network(role: NetworkRole, images, cfg: TrainingConfig, labels=None, progress=None):
    """Train a network with the halving learning-rate schedule.

    The denoiser reconstructs its own input under MSE; the classifier needs
    labels and trains under BCE. Batch composition is fixed after the
    initial shuffle, so a fixed seed reproduces the loss history exactly.
    Returns (params, per-epoch mean loss history).
    """
    if role.role == "classifier" and labels is None:
        raise ParameterError("classifier training needs label rasters")
    loss_kind = "mse" if role.role == "denoiser" else "bce"
    init_seed, patch_seed = (
        int(s) for s in np.random.SeedSequence(cfg.seed).generate_state(2, dtype=np.uint64)
    )
    batches = sample_patches(images, replace(cfg, seed=patch_seed), labels)
    params = xavier_init(role.layers, init_seed, learning_rate=cfg.initial_lr)
    history = []
    for epoch in range(cfg.epochs):
        lr = cfg.learning_rate_at(epoch)
        epoch_losses = []
        for batch_index, (x, target) in enumerate(batches):
            if target is None:
                target = x
            y, caches = forward(params, x)
            value = loss(loss_kind, y, target)
            if not np.isfinite(value):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {batch_index}, lr {lr:.3e}"
                )
            grads, _ = backward(params, caches, loss_grad(loss_kind, y, target))
            adam_step(params, grads, lr)
            epoch_losses.append(value)
        history.append(float(np.mean(epoch_losses)))
        if progress is not None:
            progress(epoch, lr, history[-1])
    return params, history


def _check_network(params: NetworkParams, in_channels: int, out_channels: int, role: str):
    layers = params.layers
    if layers[0].in_channels != in_channels or layers[-1].out_channels != out_channels:
        raise ParameterError(
            f"parameters do not describe a {role} network "
            f"({layers[0].in_channels} in, {layers[-1].out_channels} out)"
        )


def denoise_image(params: NetworkParams, z) -> np.ndarray:
    """Filter a whole interferogram; output size equals input size.

    The image is preprocessed, reflect-padded on the right/bottom to the
    next multiple of 3 (the pooling stride), run through the autoencoder,
    cropped, and mapped back to complex samples with the same amplitude
    ceiling the preprocessing used.
    """
    _check_network(params, 2, 2, "denoiser")
    chans, ceiling = preprocess_image(z)
    _, h, w = chans.shape
    ph = (3 - h % 3) % 3
    pw = (3 - w % 3) % 3
    if ph or pw:
        chans = np.pad(chans, ((0, 0), (0, ph), (0, pw)), mode="reflect")
    y = predict(params, chans[None])
    out = y[0, :, :h, :w]
    shifted = out[0].astype(np.float64) + 1j * out[1].astype(np.float64)
    return raster.denormalize(shifted, ceiling)


def classify_image(params: NetworkParams, z) -> np.ndarray:
    """Per-pixel coherent-class score in (0, 1) for a whole interferogram."""
    _check_network(params, 2, 1, "classifier")
    chans, _ = preprocess_image(z)
    y = predict(params, chans[None])
    return y[0, 0].astype(np.float64)


def prepare_labels(noisy, denoised, cfg: mrf.MrfConfig = mrf.MrfConfig()) -> np.ndarray:
    """Training labels: 7x7 coherence, fixed threshold, MRF cleanup."""
    coh = coherence.raw_coherence_map(noisy, denoised)
    initial = mrf.initialize_labels(coh, cfg.init_threshold)
    return mrf.minimize_mrf(initial, cfg.alpha)
