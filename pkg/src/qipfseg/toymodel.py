"""Synthetic segmentation task and a small dropout pixel classifier.

Stands in for a real segmentation network at desk scale: scenes are a
background plus colored circle/rectangle/stripe regions with Gaussian
pixel noise, and the classifier is a one-hidden-layer MLP over a 3x3
color neighborhood plus normalized coordinates.  The pre-softmax layer
(width C) is the feature space the uncertainty decomposition models.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidConfig,
    NonFiniteLoss,
    OutOfBounds,
)

# default class color means; rows are RGB in [0,1]
DEFAULT_COLORS = np.array(
    [
        [0.15, 0.25, 0.70],  # background: blue-ish
        [0.80, 0.20, 0.20],  # red-ish
        [0.20, 0.75, 0.25],  # green-ish
        [0.85, 0.80, 0.20],  # yellow-ish
    ]
)

# hue far from every training color mean, used for OOD regions
OOD_COLOR = np.array([0.85, 0.15, 0.85])  # magenta


@dataclass(frozen=True)
class SceneConfig:
    height: int = 32
    width: int = 32
    n_classes: int = 3
    noise: float = 0.05
    ood: bool = False
    n_shapes: int = 4
    colors: np.ndarray = field(default_factory=lambda: DEFAULT_COLORS)

    def __post_init__(self):
        if self.height < 16 or self.width < 16:
            raise InvalidConfig("scene must be at least 16x16")
        if self.n_classes not in (3, 4):
            raise InvalidConfig("n_classes must be 3 or 4")
        if self.noise < 0 or not np.isfinite(self.noise):
            raise InvalidConfig("noise must be a finite nonnegative real")
        if np.asarray(self.colors).shape[0] < self.n_classes:
            raise InvalidConfig("need one color mean per class")
        if self.n_shapes < 1:
            raise InvalidConfig("need at least one shape")


@dataclass(frozen=True)
class SceneSample:
    image: np.ndarray  # H x W x 3 in [0,1]
    labels: np.ndarray  # H x W ints in {0..C-1}
    ood_mask: np.ndarray  # H x W bools


class PixelClassifier:
    """One-hidden-layer MLP: 29 -> hidden (relu, dropout) -> C logits."""

    def __init__(self, w1, b1, w2, b2, dropout_rate):
        for a in (w1, b1, w2, b2):
            if not np.all(np.isfinite(a)):
                raise NonFiniteLoss("non-finite parameters")
        if not 0.0 <= dropout_rate < 1.0:
            raise InvalidConfig("dropout_rate must be in [0, 1)")
        self.w1 = w1
        self.b1 = b1
        self.w2 = w2
        self.b2 = b2
        self.dropout_rate = dropout_rate
        self.final_train_accuracy = None
        self.forward_count = 0  # incremented per forward() call

    @property
    def n_classes(self):
        return self.w2.shape[1]

    def arch(self):
        return (self.w1.shape[0], self.w1.shape[1], self.w2.shape[1])


@dataclass(frozen=True)
class FeatureTensor:
    features: np.ndarray  # H x W x F pre-softmax activations
    probs: np.ndarray  # H x W x C softmax outputs
    preds: np.ndarray  # H x W predicted labels


@dataclass(frozen=True)
class TrainConfig:
    hidden: int = 32
    lr: float = 0.05
    epochs: int = 6
    batch: int = 64
    dropout_rate: float = 0.1


def generate_scene(seed, config):
    """Background plus randomly placed shapes; deterministic per seed.

    With config.ood set, one extra region gets the out-of-palette hue and
    is marked in ood_mask (its label is the class the region would have
    had, so the classifier is judged against an answerable ground truth).
    """
    rng = np.random.default_rng(seed)
    h, w, c = config.height, config.width, config.n_classes
    labels = np.zeros((h, w), dtype=np.int64)
    ood_mask = np.zeros((h, w), dtype=bool)

    rr, cc = np.mgrid[0:h, 0:w]
    regions = []  # boolean masks, painted in order
    for _ in range(config.n_shapes):
        kind = rng.integers(0, 3)
        cls = int(rng.integers(1, c))
        if kind == 0:  # circle
            cy, cx = rng.integers(4, h - 4), rng.integers(4, w - 4)
            rad = rng.integers(3, max(4, min(h, w) // 4))
            mask = (rr - cy) ** 2 + (cc - cx) ** 2 <= rad**2
        elif kind == 1:  # rectangle
            r0, c0 = rng.integers(0, h - 6), rng.integers(0, w - 6)
            rh, rw = rng.integers(4, h // 2), rng.integers(4, w // 2)
            mask = (rr >= r0) & (rr < r0 + rh) & (cc >= c0) & (cc < c0 + rw)
        else:  # stripe
            pos = rng.integers(2, w - 5)
            thick = rng.integers(2, 5)
            if rng.integers(0, 2):
                mask = (cc >= pos) & (cc < pos + thick)
            else:
                mask = (rr >= pos) & (rr < pos + thick)
        labels[mask] = cls
        regions.append((mask, cls))

    colors = np.asarray(config.colors, dtype=np.float64)
    image = colors[labels]

    if config.ood:
        # shift the hue of one placed region out of the training palette;
        # only its still-visible pixels (not overpainted by later shapes)
        pick = int(rng.integers(0, len(regions)))
        for mask, cls in regions[pick:] + regions[:pick]:
            visible = mask & (labels == cls)
            if visible.any():
                image[visible] = OOD_COLOR
                ood_mask |= visible
                break

    if config.noise > 0:
        image = image + rng.normal(0.0, config.noise, size=image.shape)
    image = np.clip(image, 0.0, 1.0)
    return SceneSample(image, labels, ood_mask)


def frame_features(sample):
    """Per-pixel feature matrix for a whole frame, shape (H*W, 29).

    Layout: the 3x3 color neighborhood row-major (27 values,
    edge-replicated), then row/H and col/W.
    """
    img = sample.image
    h, w, _ = img.shape
    padded = np.pad(img, ((1, 1), (1, 1), (0, 0)), mode="edge")
    patches = [
        padded[dy : dy + h, dx : dx + w, :] for dy in range(3) for dx in range(3)
    ]
    feats = np.concatenate(patches, axis=2).reshape(h * w, 27)
    rr, cc = np.mgrid[0:h, 0:w]
    coords = np.stack([rr.ravel() / h, cc.ravel() / w], axis=1)
    return np.concatenate([feats, coords], axis=1)


def pixel_features(sample, pixel):
    """Feature vector (length 29) of one pixel."""
    row, col = pixel
    h, w, _ = sample.image.shape
    if not (0 <= row < h and 0 <= col < w):
        raise OutOfBounds(f"pixel {pixel} outside {h}x{w} image")
    padded = np.pad(sample.image, ((1, 1), (1, 1), (0, 0)), mode="edge")
    patch = padded[row : row + 3, col : col + 3, :]
    return np.concatenate([patch.reshape(27), [row / h, col / w]])


def _softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _init_params(f_in, hidden, c, rng):
    w1 = rng.normal(0.0, np.sqrt(2.0 / f_in), (f_in, hidden))
    b1 = np.zeros(hidden)
    w2 = rng.normal(0.0, np.sqrt(2.0 / hidden), (hidden, c))
    b2 = np.zeros(c)
    return w1, b1, w2, b2


def _forward_pass(params, x, dropout_rate, rng):
    """Returns (logits, hidden activations, dropout mask or None)."""
    w1, b1, w2, b2 = params
    hidden = np.maximum(x @ w1 + b1, 0.0)
    mask = None
    if rng is not None and dropout_rate > 0.0:
        mask = (rng.random(hidden.shape) >= dropout_rate) / (1.0 - dropout_rate)
        hidden = hidden * mask
    return hidden @ w2 + b2, hidden, mask


def loss_and_gradients(params, x, y, dropout_rate=0.0, rng=None):
    """Softmax cross-entropy and backprop gradients for one minibatch."""
    w1, b1, w2, b2 = params
    logits, hidden, _ = _forward_pass(params, x, dropout_rate, rng)
    probs = _softmax(logits)
    n = x.shape[0]
    loss = -np.mean(np.log(probs[np.arange(n), y] + 1e-300))

    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    delta /= n
    dw2 = hidden.T @ delta
    db2 = delta.sum(axis=0)
    dhidden = delta @ w2.T
    dhidden[hidden <= 0.0] = 0.0
    dw1 = x.T @ dhidden
    db1 = dhidden.sum(axis=0)
    return loss, (dw1, db1, dw2, db2)


def train(scenes, hyper, seed):
    """Minibatch SGD over all pixels of all scenes; deterministic per seed."""
    if not scenes:
        raise InvalidConfig("need at least one training scene")
    x = np.concatenate([frame_features(s) for s in scenes])
    y = np.concatenate([s.labels.ravel() for s in scenes])
    c = int(y.max()) + 1

    rng = np.random.default_rng(seed)
    params = list(_init_params(x.shape[1], hyper.hidden, c, rng))
    first_loss = None
    for _ in range(hyper.epochs):
        order = rng.permutation(len(x))
        for start in range(0, len(x), hyper.batch):
            idx = order[start : start + hyper.batch]
            loss, grads = loss_and_gradients(
                params, x[idx], y[idx], hyper.dropout_rate, rng
            )
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"training loss diverged: {loss}")
            if first_loss is None:
                first_loss = loss
            for p, g in zip(params, grads):
                p -= hyper.lr * g

    model = PixelClassifier(*params, dropout_rate=hyper.dropout_rate)
    logits, _, _ = _forward_pass(params, x, 0.0, None)
    model.final_train_accuracy = float(np.mean(np.argmax(logits, axis=1) == y))
    return model


def forward(model, sample, dropout_on=False, seed=0):
    """One forward pass over every pixel of a frame.

    dropout_on applies seeded inverted dropout to the hidden layer
    (test-time dropout); dropout_off is deterministic.  Each call
    increments model.forward_count.
    """
    x = frame_features(sample)
    if x.shape[1] != model.w1.shape[0]:
        raise DimensionMismatch(
            f"feature width {x.shape[1]} != model input {model.w1.shape[0]}"
        )
    rng = np.random.default_rng(seed) if dropout_on else None
    params = (model.w1, model.b1, model.w2, model.b2)
    logits, _, _ = _forward_pass(params, x, model.dropout_rate if dropout_on else 0.0, rng)
    h, w, _ = sample.image.shape
    features = logits.reshape(h, w, -1)
    probs = _softmax(logits).reshape(h, w, -1)
    preds = np.argmax(probs, axis=2)
    model.forward_count += 1
    return FeatureTensor(features, probs, preds)


def train_ensemble(scenes, hyper, seeds):
    """Independently seeded classifiers with one architecture."""
    return [train(scenes, hyper, s) for s in seeds]

