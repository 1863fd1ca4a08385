"""Compact neural models trained with plain SGD: a feed-forward network
(classifier or autoencoder head) and a binary RBM trained by contrastive
divergence.

Training is bit-deterministic given (config seed, data, thread count 1):
all randomness flows through one counter-based stream and batches are
visited in the stream's shuffle order.

Checkpoint file layout (all little-endian, documented so files are
portable across machines):

    bytes 0..3   magic b"CRCP"
    u32          format version (currently 1)
    u32          model kind: 0 classifier, 1 autoencoder, 2 rbm
    u32          hidden activation: 0 sigmoid, 1 relu
    u32          number of layer dims d, then d u32 dims
    payload      float64 arrays, row-major:
                   mlp: (W, b) per adjacent layer pair
                   rbm: W (nv x nh), visible bias (nv), hidden bias (nh)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .linalg import Rng, check_finite, matmul, relu, sigmoid, softmax_rows, \
    log_softmax_rows
from .datasets import LabeledDataset

CHECKPOINT_MAGIC = b"CRCP"
CHECKPOINT_VERSION = 1
_KINDS = ("classifier", "autoencoder", "rbm")
_ACTIVATIONS = ("sigmoid", "relu")


class TrainingDivergenceError(FloatingPointError):
    """Loss or parameters went non-finite; message pins epoch and batch."""


@dataclass
class TrainConfig:
    epochs: int
    batch_size: int = 64
    learning_rate: float = 0.1
    seed: int = 0
    cd_steps: int = 1
    snapshot_epochs: tuple[int, ...] = ()

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.cd_steps < 1:
            raise ValueError("cd_steps must be >= 1")


@dataclass
class MlpModel:
    """Fully connected net. kind 'classifier' ends in softmax over logits,
    kind 'autoencoder' ends in a sigmoid reconstruction of the input."""

    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "sigmoid"
    kind: str = "classifier"

    def __post_init__(self):
        if len(self.layer_dims) < 2:
            raise ValueError("need at least input and output layers")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.kind not in ("classifier", "autoencoder"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if len(self.weights) != len(self.layer_dims) - 1:
            raise ValueError("one weight matrix per adjacent layer pair")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            want = (self.layer_dims[i], self.layer_dims[i + 1])
            if w.shape != want or b.shape != (want[1],):
                raise ValueError(f"layer {i} shape mismatch: {w.shape} vs {want}")

    @property
    def n_hidden_layers(self) -> int:
        return len(self.layer_dims) - 2


@dataclass
class RbmModel:
    """Binary-binary restricted Boltzmann machine.

    Energy of a joint state: E(v, h) = -v.b - h.c - v W h, so
    p(h_j = 1 | v) = sigmoid(c_j + (v W)_j) and
    p(v_i = 1 | h) = sigmoid(b_i + (W h)_i).
    """

    n_visible: int
    n_hidden: int
    weights: np.ndarray
    visible_bias: np.ndarray
    hidden_bias: np.ndarray

    def __post_init__(self):
        if self.weights.shape != (self.n_visible, self.n_hidden):
            raise ValueError("weights must be (n_visible, n_hidden)")
        if self.visible_bias.shape != (self.n_visible,):
            raise ValueError("visible_bias shape mismatch")
        if self.hidden_bias.shape != (self.n_hidden,):
            raise ValueError("hidden_bias shape mismatch")


def init_mlp(layer_dims, rng: Rng, activation: str = "sigmoid",
             kind: str = "classifier") -> MlpModel:
    """Xavier-uniform weights, +-sqrt(6/(fan_in+fan_out)); zero biases."""
    weights, biases = [], []
    for d_in, d_out in zip(layer_dims[:-1], layer_dims[1:]):
        bound = np.sqrt(6.0 / (d_in + d_out))
        u = rng.uniforms(d_in * d_out).reshape(d_in, d_out)
        weights.append((2.0 * u - 1.0) * bound)
        biases.append(np.zeros(d_out))
    return MlpModel(layer_dims=list(layer_dims), weights=weights, biases=biases,
                    activation=activation, kind=kind)


def init_rbm(n_visible: int, n_hidden: int, rng: Rng) -> RbmModel:
    """Gaussian(0, 0.01) weights, zero biases."""
    w = 0.01 * rng.normals(n_visible * n_hidden).reshape(n_visible, n_hidden)
    return RbmModel(n_visible=n_visible, n_hidden=n_hidden, weights=w,
                    visible_bias=np.zeros(n_visible),
                    hidden_bias=np.zeros(n_hidden))


# ---------------------------------------------------------------------------
# Feed-forward net
# ---------------------------------------------------------------------------

def _act(m: MlpModel, s: np.ndarray) -> np.ndarray:
    return sigmoid(s) if m.activation == "sigmoid" else relu(s)


def _act_grad(m: MlpModel, s: np.ndarray, a: np.ndarray) -> np.ndarray:
    if m.activation == "sigmoid":
        return a * (1.0 - a)
    return (s > 0).astype(np.float64)


def _forward_full(m: MlpModel, x: np.ndarray):
    """All layer activations plus preactivations (needed for gradients)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != m.layer_dims[0]:
        raise ValueError(
            f"input must be (n, {m.layer_dims[0]}), got {x.shape}"
        )
    acts, pre = [x], []
    n_layers = len(m.weights)
    for i, (w, b) in enumerate(zip(m.weights, m.biases)):
        s = matmul(acts[-1], w) + b
        pre.append(s)
        if i < n_layers - 1:
            acts.append(_act(m, s))
        elif m.kind == "classifier":
            acts.append(softmax_rows(s))
        else:
            acts.append(sigmoid(s))
    return acts, pre


def mlp_forward(m: MlpModel, x: np.ndarray) -> list[np.ndarray]:
    """Activations of every layer, input first, output head last."""
    acts, _ = _forward_full(m, x)
    return acts


def mlp_predict(m: MlpModel, x: np.ndarray) -> np.ndarray:
    return np.argmax(mlp_forward(m, x)[-1], axis=1)


def mlp_accuracy(m: MlpModel, ds: LabeledDataset) -> float:
    if ds.labels is None:
        raise ValueError("accuracy needs labels")
    return float(np.mean(mlp_predict(m, ds.samples) == ds.labels))


def cross_entropy_loss(m: MlpModel, x: np.ndarray, y: np.ndarray) -> float:
    """Mean negative log-likelihood of the correct class (one-hot targets)."""
    _, pre = _forward_full(m, x)
    logp = log_softmax_rows(pre[-1])
    return float(-logp[np.arange(len(y)), np.asarray(y, dtype=np.int64)].mean())


def mse_loss(m: MlpModel, x: np.ndarray, target: np.ndarray) -> float:
    """Mean squared error over every output entry."""
    out = mlp_forward(m, x)[-1]
    return float(np.mean((out - target) ** 2))


def mlp_gradients(m: MlpModel, x: np.ndarray, y: np.ndarray):
    """Backprop gradients of the model's loss on one batch.

    classifier: softmax cross-entropy against integer labels y.
    autoencoder: mean squared error against target matrix y.
    Returns (dW list, db list) matching the parameter shapes.
    """
    acts, pre = _forward_full(m, x)
    n = x.shape[0]
    if m.kind == "classifier":
        y = np.asarray(y, dtype=np.int64)
        delta = acts[-1].copy()
        delta[np.arange(n), y] -= 1.0
        delta /= n
    else:
        out = acts[-1]
        d_out = 2.0 * (out - y) / out.size
        delta = d_out * out * (1.0 - out)
    d_ws = [np.empty(0)] * len(m.weights)
    d_bs = [np.empty(0)] * len(m.biases)
    for i in range(len(m.weights) - 1, -1, -1):
        d_ws[i] = matmul(acts[i].T, delta)
        d_bs[i] = delta.sum(axis=0)
        if i > 0:
            delta = matmul(delta, m.weights[i].T) * _act_grad(m, pre[i - 1], acts[i])
    return d_ws, d_bs


def _sgd_step(m: MlpModel, d_ws, d_bs, lr: float) -> None:
    for w, b, dw, db in zip(m.weights, m.biases, d_ws, d_bs):
        w -= lr * dw
        b -= lr * db


def _check_divergence(value: float, epoch: int, batch: int, what: str) -> None:
    if not np.isfinite(value):
        raise TrainingDivergenceError(
            f"{what} went non-finite at epoch {epoch}, batch {batch}"
        )


def train_classifier(m: MlpModel, train: LabeledDataset, cfg: TrainConfig,
                     test: LabeledDataset | None = None,
                     snapshot=None) -> list[dict]:
    """Minibatch SGD on softmax cross-entropy. Mutates m in place.

    Returns one metrics dict per epoch: epoch, loss, train_accuracy,
    and test_accuracy when a test set is given. `snapshot(epoch, m)` is
    called before training (epoch 0) and after each listed epoch.
    """
    if m.kind != "classifier":
        raise ValueError("model kind must be 'classifier'")
    if train.labels is None:
        raise ValueError("supervised training needs labels")
    rng = Rng(cfg.seed)
    history = []
    if snapshot is not None and 0 in cfg.snapshot_epochs:
        snapshot(0, m)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(train))
        x_all, y_all = train.samples[order], train.labels[order]
        losses = []
        for bi, lo in enumerate(range(0, len(train), cfg.batch_size)):
            x = x_all[lo:lo + cfg.batch_size]
            y = y_all[lo:lo + cfg.batch_size]
            d_ws, d_bs = mlp_gradients(m, x, y)
            _sgd_step(m, d_ws, d_bs, cfg.learning_rate)
            loss = cross_entropy_loss(m, x, y)
            _check_divergence(loss, epoch, bi, "cross-entropy loss")
            losses.append(loss)
        row = {"epoch": epoch, "loss": float(np.mean(losses)),
               "train_accuracy": mlp_accuracy(m, train)}
        if test is not None:
            row["test_accuracy"] = mlp_accuracy(m, test)
        history.append(row)
        if snapshot is not None and epoch in cfg.snapshot_epochs:
            snapshot(epoch, m)
    return history


def train_autoencoder(m: MlpModel, train: LabeledDataset, cfg: TrainConfig,
                      snapshot=None) -> list[dict]:
    """Minibatch SGD on mean squared reconstruction error (targets are the
    inputs). Mutates m in place; returns per-epoch loss rows."""
    if m.kind != "autoencoder":
        raise ValueError("model kind must be 'autoencoder'")
    if m.layer_dims[0] != m.layer_dims[-1]:
        raise ValueError("autoencoder output dim must equal input dim")
    rng = Rng(cfg.seed)
    history = []
    if snapshot is not None and 0 in cfg.snapshot_epochs:
        snapshot(0, m)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(train))
        x_all = train.samples[order]
        losses = []
        for bi, lo in enumerate(range(0, len(train), cfg.batch_size)):
            x = x_all[lo:lo + cfg.batch_size]
            d_ws, d_bs = mlp_gradients(m, x, x)
            _sgd_step(m, d_ws, d_bs, cfg.learning_rate)
            loss = mse_loss(m, x, x)
            _check_divergence(loss, epoch, bi, "reconstruction loss")
            losses.append(loss)
        history.append({"epoch": epoch, "loss": float(np.mean(losses))})
        if snapshot is not None and epoch in cfg.snapshot_epochs:
            snapshot(epoch, m)
    return history


# ---------------------------------------------------------------------------
# RBM and contrastive divergence
# ---------------------------------------------------------------------------

def rbm_hidden_probs(r: RbmModel, v: np.ndarray) -> np.ndarray:
    return sigmoid(matmul(np.asarray(v, dtype=np.float64), r.weights)
                   + r.hidden_bias)


def rbm_visible_probs(r: RbmModel, h: np.ndarray) -> np.ndarray:
    return sigmoid(matmul(np.asarray(h, dtype=np.float64), r.weights.T)
                   + r.visible_bias)


def rbm_sample_hidden(r: RbmModel, v: np.ndarray, rng: Rng):
    """(probabilities, bernoulli samples) of the hidden layer given v."""
    p = rbm_hidden_probs(r, v)
    return p, rng.bernoulli(p)


def rbm_free_energy(r: RbmModel, v: np.ndarray) -> np.ndarray:
    """F(v) = -v.b - sum_j softplus(c_j + (v W)_j), one value per row.

    Lower free energy means higher model probability; exact
    probabilities need the (intractable) partition function.
    """
    v = np.asarray(v, dtype=np.float64)
    pre = matmul(v, r.weights) + r.hidden_bias
    return -matmul(v, r.visible_bias[:, None])[:, 0] - np.logaddexp(0.0, pre).sum(axis=1)


def rbm_reconstruction_probs(r: RbmModel, v: np.ndarray) -> np.ndarray:
    """Mean-field one-step reconstruction p(v' | p(h|v))."""
    return rbm_visible_probs(r, rbm_hidden_probs(r, v))


def rbm_cd_gradients(r: RbmModel, v0: np.ndarray, rng: Rng, k: int = 1):
    """Contrastive-divergence statistics for one batch.

    Recipe (the standard practical one):
      positive term uses p(h|v0) probabilities;
      the chain advances with sampled hidden states and mean-field
      visible probabilities;
      the negative term uses the final visible probabilities and the
      final hidden probabilities (never sampled on the last step).
    Returns (dW, db, dc, reconstruction_mse) where the gradients are
    ascent directions on the log-likelihood surrogate.
    """
    v0 = np.asarray(v0, dtype=np.float64)
    n = v0.shape[0]
    ph0 = rbm_hidden_probs(r, v0)
    h = rng.bernoulli(ph0)
    pv = v0
    for step in range(k):
        pv = rbm_visible_probs(r, h)
        ph = rbm_hidden_probs(r, pv)
        if step < k - 1:
            h = rng.bernoulli(ph)
    d_w = (matmul(v0.T, ph0) - matmul(pv.T, ph)) / n
    d_b = (v0 - pv).mean(axis=0)
    d_c = (ph0 - ph).mean(axis=0)
    recon = float(np.mean((v0 - pv) ** 2))
    return d_w, d_b, d_c, recon


def train_rbm(r: RbmModel, train: LabeledDataset, cfg: TrainConfig,
              snapshot=None) -> list[dict]:
    """CD-k minibatch training. Mutates r in place; returns per-epoch rows
    with the mean one-step reconstruction error."""
    rng = Rng(cfg.seed)
    history = []
    if snapshot is not None and 0 in cfg.snapshot_epochs:
        snapshot(0, r)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(train))
        x_all = train.samples[order]
        errs = []
        for bi, lo in enumerate(range(0, len(train), cfg.batch_size)):
            v0 = x_all[lo:lo + cfg.batch_size]
            d_w, d_b, d_c, recon = rbm_cd_gradients(r, v0, rng, cfg.cd_steps)
            r.weights += cfg.learning_rate * d_w
            r.visible_bias += cfg.learning_rate * d_b
            r.hidden_bias += cfg.learning_rate * d_c
            _check_divergence(recon, epoch, bi, "reconstruction error")
            errs.append(recon)
        check_finite(r.weights, f"rbm weights after epoch {epoch}")
        history.append({"epoch": epoch, "reconstruction_error": float(np.mean(errs))})
        if snapshot is not None and epoch in cfg.snapshot_epochs:
            snapshot(epoch, r)
    return history


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_model(model, path) -> None:
    if isinstance(model, RbmModel):
        kind_code, act_code = 2, 0
        dims = [model.n_visible, model.n_hidden]
        payload = [model.weights, model.visible_bias, model.hidden_bias]
    elif isinstance(model, MlpModel):
        kind_code = _KINDS.index(model.kind)
        act_code = _ACTIVATIONS.index(model.activation)
        dims = model.layer_dims
        payload = []
        for w, b in zip(model.weights, model.biases):
            payload.extend([w, b])
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<III", CHECKPOINT_VERSION, kind_code, act_code))
        fh.write(struct.pack("<I", len(dims)))
        fh.write(struct.pack(f"<{len(dims)}I", *dims))
        for arr in payload:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_model(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"not a checkpoint file: bad magic {magic!r}")
        version, kind_code, act_code = struct.unpack("<III", fh.read(12))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        (n_dims,) = struct.unpack("<I", fh.read(4))
        dims = list(struct.unpack(f"<{n_dims}I", fh.read(4 * n_dims)))
        blob = fh.read()

    if kind_code == 2:
        expected = dims[0] * dims[1] + dims[0] + dims[1]
    else:
        expected = sum(d_in * d_out + d_out for d_in, d_out in zip(dims, dims[1:]))
    if len(blob) != expected * 8:
        raise ValueError(
            f"checkpoint payload size mismatch: {len(blob)} bytes, "
            f"expected {expected * 8}"
        )

    def take(offset, shape):
        count = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype="<f8", count=count,
                            offset=offset).astype(np.float64).reshape(shape)
        return arr, offset + count * 8

    off = 0
    if kind_code == 2:
        nv, nh = dims
        w, off = take(off, (nv, nh))
        b, off = take(off, (nv,))
        c, off = take(off, (nh,))
        if off != len(blob):
            raise ValueError("checkpoint payload size mismatch")
        return RbmModel(n_visible=nv, n_hidden=nh, weights=w,
                        visible_bias=b, hidden_bias=c)
    weights, biases = [], []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        w, off = take(off, (d_in, d_out))
        b, off = take(off, (d_out,))
        weights.append(w)
        biases.append(b)
    if off != len(blob):
        raise ValueError("checkpoint payload size mismatch")
    return MlpModel(layer_dims=dims, weights=weights, biases=biases,
                    activation=_ACTIVATIONS[act_code], kind=_KINDS[kind_code])


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------

@dataclass
class Preset:
    """A ready-to-run model + training recipe. Hidden widths narrow
    monotonically so deeper layers are forced to compress."""

    name: str
    model_kind: str  # classifier | autoencoder | rbm
    layer_dims: list[int]
    activation: str
    threshold: float
    config: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=10))


PRESETS = {
    "rbm-digits": Preset(
        name="rbm-digits", model_kind="rbm", layer_dims=[784, 64],
        activation="sigmoid", threshold=0.5,
        config=TrainConfig(epochs=20, batch_size=64, learning_rate=0.05, seed=7),
    ),
    "mlp-digits": Preset(
        name="mlp-digits", model_kind="classifier",
        layer_dims=[784, 70, 50, 35, 10], activation="sigmoid", threshold=0.5,
        config=TrainConfig(epochs=60, batch_size=32, learning_rate=1.0, seed=11,
                           snapshot_epochs=(0, 1, 10)),
    ),
    "ae-glyphs": Preset(
        name="ae-glyphs", model_kind="autoencoder",
        layer_dims=[784, 128, 32, 128, 784], activation="sigmoid", threshold=0.5,
        config=TrainConfig(epochs=40, batch_size=32, learning_rate=0.5, seed=13,
                           snapshot_epochs=(0, 1, 10)),
    ),
    "ae-ising": Preset(
        name="ae-ising", model_kind="autoencoder",
        layer_dims=[100, 24, 100], activation="sigmoid", threshold=0.4,
        config=TrainConfig(epochs=10, batch_size=32, learning_rate=0.1, seed=17,
                           snapshot_epochs=(0, 1, 10)),
    ),
}


def build_preset_model(preset: Preset, rng: Rng):
    if preset.model_kind == "rbm":
        return init_rbm(preset.layer_dims[0], preset.layer_dims[1], rng)
    return init_mlp(preset.layer_dims, rng, activation=preset.activation,
                    kind=preset.model_kind)
