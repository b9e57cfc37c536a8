"""From-scratch feedforward classifier.

Fixed architecture: input → 64 → 32 → 32 → 32 → output, elu hidden
activations (α = 1) and a softmax output, trained with minibatch Adam
on categorical cross-entropy.  Everything (forward, backprop, Adam,
splitting, evaluation) is implemented directly on numpy arrays; no
autograd or ML framework is involved.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import DataError, NumericError

__all__ = [
    "AdamState",
    "ConfusionMatrix",
    "HIDDEN_DIMS",
    "LabeledDataset",
    "MlpModel",
    "TrainConfig",
    "adam_step",
    "early_late_control",
    "evaluate",
    "forward",
    "grad",
    "init_model",
    "load_model",
    "loss",
    "save_model",
    "split",
    "train",
]

HIDDEN_DIMS = (64, 32, 32, 32)
_PROB_CLAMP = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    """Optimization hyperparameters; the Adam moment constants are part
    of the config so checkpoints record them."""

    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 200
    batch_size: int = 32
    split_fraction: float = 0.85
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.split_fraction < 1.0:
            raise ValueError(
                f"split_fraction must be in (0, 1), got {self.split_fraction}"
            )
        if self.learning_rate <= 0 or self.epochs < 0 or self.batch_size < 1:
            raise ValueError("invalid training hyperparameters")


@dataclass(frozen=True)
class MlpModel:
    """Per-layer weight matrices (fan_in x fan_out) and bias vectors."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(
            w.shape[1] for w in self.weights
        )

    @property
    def activations(self) -> tuple[str, ...]:
        return ("elu",) * (len(self.weights) - 1) + ("softmax",)

    @property
    def n_classes(self) -> int:
        return self.weights[-1].shape[1]


@dataclass(frozen=True)
class LabeledDataset:
    """Input rows with one-hot label rows and provenance ids."""

    inputs: np.ndarray  # (N, u)
    labels: np.ndarray  # (N, v) one-hot
    ids: np.ndarray  # (N,)

    def __post_init__(self):
        if self.inputs.ndim != 2 or self.labels.ndim != 2:
            raise ValueError("inputs and labels must be matrices")
        n = self.inputs.shape[0]
        if self.labels.shape[0] != n or self.ids.shape != (n,):
            raise ValueError("inputs, labels, and ids disagree on N")
        ok = (self.labels.sum(axis=1) == 1.0) & np.all(
            (self.labels == 0.0) | (self.labels == 1.0), axis=1
        )
        if not ok.all():
            raise ValueError("labels must be one-hot rows")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def class_indices(self) -> np.ndarray:
        return np.argmax(self.labels, axis=1)

    def take(self, idx) -> "LabeledDataset":
        return LabeledDataset(
            inputs=self.inputs[idx], labels=self.labels[idx], ids=self.ids[idx]
        )


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows = true class, columns = predicted class."""

    counts: np.ndarray

    @property
    def accuracy(self) -> float:
        total = self.counts.sum()
        return float(np.trace(self.counts) / total) if total else 0.0

    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)


@dataclass(frozen=True)
class AdamState:
    step: int
    m_w: tuple[np.ndarray, ...]
    v_w: tuple[np.ndarray, ...]
    m_b: tuple[np.ndarray, ...]
    v_b: tuple[np.ndarray, ...]


def init_model(n_inputs: int, n_outputs: int, seed: int = 0) -> MlpModel:
    """Seeded uniform init in ±sqrt(6/(fan_in+fan_out)), zero biases."""
    if n_inputs < 1 or n_outputs < 1:
        raise ValueError("layer sizes must be positive")
    rng = np.random.default_rng(seed)
    dims = (n_inputs,) + HIDDEN_DIMS + (n_outputs,)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(weights=tuple(weights), biases=tuple(biases))


def init_state(model: MlpModel) -> AdamState:
    return AdamState(
        step=0,
        m_w=tuple(np.zeros_like(w) for w in model.weights),
        v_w=tuple(np.zeros_like(w) for w in model.weights),
        m_b=tuple(np.zeros_like(b) for b in model.biases),
        v_b=tuple(np.zeros_like(b) for b in model.biases),
    )


def _elu(z: np.ndarray) -> np.ndarray:
    return np.where(z > 0.0, z, np.expm1(np.minimum(z, 0.0)))


def _elu_deriv(z: np.ndarray) -> np.ndarray:
    return np.where(z > 0.0, 1.0, np.exp(np.minimum(z, 0.0)))


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _forward_pass(model: MlpModel, x: np.ndarray):
    """Returns (pre-activations per layer, post-activations per layer);
    the last post-activation holds the class probabilities."""
    zs, acts = [], [x]
    h = x
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w + b
        zs.append(z)
        h = _softmax(z) if i == last else _elu(z)
        acts.append(h)
    return zs, acts


def forward(model: MlpModel, x) -> np.ndarray:
    """Class probabilities for one input vector (or a batch of rows)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    batch = x[None, :] if single else x
    if batch.shape[1] != model.layer_dims[0]:
        raise ValueError(
            f"input width {batch.shape[1]} != model input {model.layer_dims[0]}"
        )
    probs = _forward_pass(model, batch)[1][-1]
    return probs[0] if single else probs


def loss(model: MlpModel, x, c) -> float:
    """Categorical cross-entropy −log p[true class], probability clamped
    at 1e-12."""
    c = np.asarray(c, dtype=float)
    p = forward(model, x)
    true_p = float(p[int(np.argmax(c))])
    return -float(np.log(max(true_p, _PROB_CLAMP)))


def _batch_loss(probs: np.ndarray, labels: np.ndarray) -> float:
    picked = np.clip((probs * labels).sum(axis=1), _PROB_CLAMP, None)
    return float(-np.log(picked).mean())


def grad(model: MlpModel, batch: tuple[np.ndarray, np.ndarray]):
    """Mean parameter gradients over (inputs, one-hot labels) via
    reverse-mode differentiation; softmax + cross-entropy collapse to
    (p − c) at the output pre-activation."""
    x, c = (np.asarray(a, dtype=float) for a in batch)
    if x.ndim == 1:
        x, c = x[None, :], c[None, :]
    if x.shape[0] == 0:
        raise ValueError("empty batch")
    n = x.shape[0]
    zs, acts = _forward_pass(model, x)
    delta = (acts[-1] - c) / n
    d_ws, d_bs = [], []
    for layer in range(len(model.weights) - 1, -1, -1):
        d_ws.append(acts[layer].T @ delta)
        d_bs.append(delta.sum(axis=0))
        if layer > 0:
            delta = (delta @ model.weights[layer].T) * _elu_deriv(zs[layer - 1])
    return tuple(reversed(d_ws)), tuple(reversed(d_bs))


def adam_step(
    model: MlpModel, grads, state: AdamState, cfg: TrainConfig
) -> tuple[MlpModel, AdamState]:
    """One bias-corrected Adam update; pure (returns new model/state)."""
    d_ws, d_bs = grads
    t = state.step + 1
    corr1 = 1.0 - cfg.beta1**t
    corr2 = 1.0 - cfg.beta2**t

    def update(param, g, m, v):
        m_new = cfg.beta1 * m + (1.0 - cfg.beta1) * g
        v_new = cfg.beta2 * v + (1.0 - cfg.beta2) * (g * g)
        step = cfg.learning_rate * (m_new / corr1) / (
            np.sqrt(v_new / corr2) + cfg.eps
        )
        return param - step, m_new, v_new

    new_w, new_mw, new_vw = [], [], []
    for w, g, m, v in zip(model.weights, d_ws, state.m_w, state.v_w):
        p, mn, vn = update(w, g, m, v)
        new_w.append(p)
        new_mw.append(mn)
        new_vw.append(vn)
    new_b, new_mb, new_vb = [], [], []
    for b, g, m, v in zip(model.biases, d_bs, state.m_b, state.v_b):
        p, mn, vn = update(b, g, m, v)
        new_b.append(p)
        new_mb.append(mn)
        new_vb.append(vn)
    return (
        MlpModel(weights=tuple(new_w), biases=tuple(new_b)),
        AdamState(
            step=t,
            m_w=tuple(new_mw),
            v_w=tuple(new_vw),
            m_b=tuple(new_mb),
            v_b=tuple(new_vb),
        ),
    )


def split(
    ds: LabeledDataset, cfg: TrainConfig
) -> tuple[LabeledDataset, LabeledDataset]:
    """Seeded shuffle, first ceil(split_fraction·N) rows to train; the
    shuffle is redrawn (≤ 100 times) until every class present in the
    dataset appears in the training part."""
    n = len(ds)
    v = ds.labels.shape[1]
    if n < v:
        raise ValueError(f"dataset of {n} rows cannot cover {v} classes")
    n_train = int(np.ceil(cfg.split_fraction * n))
    classes = set(np.unique(ds.class_indices()))
    rng = np.random.default_rng(cfg.seed)
    for _ in range(100):
        perm = rng.permutation(n)
        train_idx = perm[:n_train]
        if set(np.unique(ds.class_indices()[train_idx])) == classes:
            return ds.take(train_idx), ds.take(perm[n_train:])
    raise DataError(
        "could not produce a train split covering every class in 100 shuffles"
    )


def train(
    ds: LabeledDataset, cfg: TrainConfig, n_outputs: int | None = None
) -> tuple[MlpModel, list[float]]:
    """Minibatch Adam on cross-entropy; returns the final model and the
    per-epoch mean training loss."""
    v = n_outputs if n_outputs is not None else ds.labels.shape[1]
    if ds.labels.shape[1] != v:
        raise ValueError("label width disagrees with requested output size")
    model = init_model(ds.inputs.shape[1], v, seed=cfg.seed)
    state = init_state(model)
    rng = np.random.default_rng([cfg.seed, 1])
    history: list[float] = []
    n = len(ds)
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            x, c = ds.inputs[idx], ds.labels[idx]
            probs = _forward_pass(model, x)[1][-1]
            batch_loss = _batch_loss(probs, c)
            if not np.isfinite(batch_loss):
                raise NumericError(
                    f"training loss became non-finite at step {state.step}"
                )
            epoch_loss += batch_loss * len(idx)
            model, state = adam_step(model, grad(model, (x, c)), state, cfg)
        history.append(epoch_loss / n)
    return model, history


def evaluate(model: MlpModel, test: LabeledDataset) -> tuple[ConfusionMatrix, float]:
    """Argmax prediction per row (ties go to the lowest class index)."""
    if len(test) == 0:
        raise ValueError("empty test set")
    probs = forward(model, test.inputs)
    pred = np.argmax(probs, axis=1)
    true = test.class_indices()
    v = test.labels.shape[1]
    counts = np.zeros((v, v), dtype=np.int64)
    np.add.at(counts, (true, pred), 1)
    cm = ConfusionMatrix(counts=counts)
    return cm, cm.accuracy


def early_late_control(
    inputs: np.ndarray,
    window_ids: np.ndarray,
    windows_per_record: int,
    cfg: TrainConfig,
) -> float:
    """Leakage check for one activity: label each window early/late by
    its position within its record (id mod windows_per_record), train a
    2-class model on an 80/20 split, and return test accuracy (≈ 0.5
    when features carry no slow drift).

    The split holds out whole records (id div windows_per_record), never
    loose windows. A window-level split lets the model pair each test
    window with its train-set siblings and vote the record's majority
    label — which is anti-correlated with the held-out window's own
    label, driving a leak-free control far below chance. Held-out
    records carry no such fingerprint, and each contributes equally many
    early and late windows, so a model that learned nothing scores 0.5
    exactly; a drift that repeats across records still transfers, so the
    control keeps its power.
    """
    inputs = np.asarray(inputs, dtype=float)
    window_ids = np.asarray(window_ids)
    if len(inputs) < 4:
        raise ValueError("early/late control needs at least 4 windows")
    if windows_per_record < 2:
        raise ValueError("early/late control needs >= 2 windows per record")
    records = window_ids // windows_per_record
    unique_records = np.unique(records)
    if len(unique_records) < 2:
        raise ValueError(
            "early/late control needs at least 2 records to hold one out"
        )
    n_train = min(
        len(unique_records) - 1, int(np.ceil(0.8 * len(unique_records)))
    )
    order = np.random.default_rng(cfg.seed).permutation(unique_records)
    train_records = set(order[:n_train].tolist())
    in_train = np.array([r in train_records for r in records])

    late = (window_ids % windows_per_record) >= windows_per_record / 2.0
    labels = np.zeros((len(inputs), 2))
    labels[np.arange(len(inputs)), late.astype(int)] = 1.0
    control_cfg = replace(cfg, split_fraction=0.8)
    tr = LabeledDataset(
        inputs=inputs[in_train],
        labels=labels[in_train],
        ids=window_ids[in_train],
    )
    te = LabeledDataset(
        inputs=inputs[~in_train],
        labels=labels[~in_train],
        ids=window_ids[~in_train],
    )
    model, _ = train(tr, control_cfg)
    return evaluate(model, te)[1]


# ------------------------------------------------------------ checkpoints

_CKPT_MAGIC = b"MMNN"


def save_model(path, model: MlpModel, train_cfg: TrainConfig | None = None) -> None:
    """JSON header (architecture + training config) followed by the raw
    little-endian float64 parameter blob, weights then bias per layer."""
    header = {
        "layer_dims": list(model.layer_dims),
        "activations": list(model.activations),
        "train_config": None if train_cfg is None else vars(train_cfg),
    }
    blob = b"".join(
        np.ascontiguousarray(p, dtype="<f8").tobytes()
        for w, b in zip(model.weights, model.biases)
        for p in (w, b)
    )
    head = json.dumps(header).encode()
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<I", len(head)))
        fh.write(head)
        fh.write(blob)


def load_model(path) -> tuple[MlpModel, dict]:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"{path}: cannot read checkpoint ({exc})") from exc
    if len(raw) < 8 or raw[:4] != _CKPT_MAGIC:
        raise DataError(f"{path}: not a model checkpoint")
    (head_len,) = struct.unpack_from("<I", raw, 4)
    try:
        header = json.loads(raw[8 : 8 + head_len].decode())
        dims = [int(d) for d in header["layer_dims"]]
    except (ValueError, KeyError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: corrupt checkpoint header ({exc})") from exc
    blob = np.frombuffer(raw[8 + head_len :], dtype="<f8")
    expected = sum(
        dims[i] * dims[i + 1] + dims[i + 1] for i in range(len(dims) - 1)
    )
    if blob.shape[0] != expected:
        raise DataError(
            f"{path}: parameter blob holds {blob.shape[0]} values, "
            f"expected {expected}"
        )
    weights, biases = [], []
    pos = 0
    for i in range(len(dims) - 1):
        n_w = dims[i] * dims[i + 1]
        weights.append(blob[pos : pos + n_w].reshape(dims[i], dims[i + 1]).copy())
        pos += n_w
        biases.append(blob[pos : pos + dims[i + 1]].copy())
        pos += dims[i + 1]
    return MlpModel(weights=tuple(weights), biases=tuple(biases)), header
