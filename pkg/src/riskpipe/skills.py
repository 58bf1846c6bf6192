"""Skill detection: window features, a small tanh MLP trained by SGD, label smoothing."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import FormatError, TrainingError, ValidationError
from .labels import N_SKILLS, SkillLabel
from .trajectory import PhaseDurations, ScenarioConfig, generate_episode

CHECKPOINT_VERSION = 1
LABELS_VERSION = 1
STD_FLOOR = 1e-8


def n_features(n_joints):
    return 4 * n_joints + 4


def n_windows(n_samples, window, stride):
    return (n_samples - window) // stride + 1


def _check_window(n, window, stride):
    if window < 1 or stride < 1:
        raise ValidationError(f"window and stride must be >= 1, got {window}, {stride}")
    if window > n:
        raise ValidationError(f"window {window} exceeds log length {n}")


def extract_features(log, window, stride):
    """Per-window feature matrix of shape ``(n_windows, 4*n_joints + 4)``.

    Per joint: mean |velocity|, velocity std, mean effort, net position change.
    Gripper: mean aperture, net aperture change, mean force. Last column is
    the RMS velocity over all joints in the window.
    """
    _check_window(log.n_samples, window, stride)
    w = lambda a: sliding_window_view(a, window, axis=0)[::stride]  # noqa: E731
    vel, eff, pos = w(log.velocity), w(log.effort), w(log.position)  # (n, J, W)
    per_joint = np.stack(
        [
            np.abs(vel).mean(axis=-1),
            vel.std(axis=-1),
            eff.mean(axis=-1),
            pos[..., -1] - pos[..., 0],
        ],
        axis=-1,
    )
    ap, fo = w(log.aperture), w(log.force)
    rms = np.sqrt((vel**2).mean(axis=(1, 2)))
    gripper = np.stack([ap.mean(axis=-1), ap[:, -1] - ap[:, 0], fo.mean(axis=-1), rms], axis=-1)
    return np.hstack([per_joint.reshape(len(per_joint), -1), gripper])


def window_labels(truth, window, stride):
    """Majority ground-truth label per window; ties go to the lowest ordinal."""
    _check_window(len(truth), window, stride)
    wins = sliding_window_view(np.asarray(truth), window)[::stride]
    counts = np.stack([(wins == c).sum(axis=1) for c in range(N_SKILLS)], axis=1)
    return counts.argmax(axis=1)


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    window: int
    stride: int

    def __len__(self):
        return len(self.labels)


def build_dataset(scenarios, window, stride):
    if not scenarios:
        raise ValidationError("build_dataset needs at least one scenario")
    xs, ys = [], []
    for cfg in scenarios:
        log, truth = generate_episode(cfg)
        xs.append(extract_features(log, window, stride))
        ys.append(window_labels(truth, window, stride))
    return Dataset(np.vstack(xs), np.concatenate(ys), window, stride)


def random_scenarios(n, seed, base=None, v_max_range=(0.2, 2.0), jitter=0.5):
    """``n`` scenario variants with uniform v_max and per-phase durations scaled by 1 +/- jitter."""
    base = base or ScenarioConfig()
    rng = np.random.Generator(np.random.Philox(seed))
    names = list(PhaseDurations.__dataclass_fields__)
    out = []
    for _ in range(n):
        v = float(rng.uniform(*v_max_range))
        scale = rng.uniform(1 - jitter, 1 + jitter, size=len(names))
        durs = PhaseDurations(**{k: float(getattr(base.durations, k) * s) for k, s in zip(names, scale)})
        ep_seed = int(rng.integers(0, 2**63))
        out.append(replace(base, v_max=v, durations=durs, seed=ep_seed))
    return out


# ---------------------------------------------------------------------------
# model


@dataclass(frozen=True)
class TrainConfig:
    hidden: tuple[int, int] = (32, 16)
    epochs: int = 50
    batch: int = 32
    learning_rate: float = 0.01
    seed: int = 0


@dataclass(frozen=True, eq=False)
class MlpModel:
    """Weights are stored (fan_in, fan_out) so a batch row vector multiplies from the left."""

    weights: tuple
    biases: tuple
    mean: np.ndarray
    std: np.ndarray
    window: int
    stride: int

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValidationError("weights and biases must pair up")
        prev = self.mean.shape[0]
        if self.std.shape != (prev,) or np.any(self.std <= 0):
            raise ValidationError("normalization std must be positive and match the input size")
        for W, b in zip(self.weights, self.biases):
            if W.ndim != 2 or W.shape[0] != prev or b.shape != (W.shape[1],):
                raise ValidationError("layer shapes do not chain")
            prev = W.shape[1]
        if prev != N_SKILLS:
            raise ValidationError(f"output layer must have {N_SKILLS} units")

    @property
    def sizes(self):
        return [self.weights[0].shape[0]] + [W.shape[1] for W in self.weights]

    def params(self):
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def with_params(self, params):
        return replace(self, weights=tuple(params[0::2]), biases=tuple(params[1::2]))

    def normalize(self, X):
        return (X - self.mean) / self.std

    def __eq__(self, other):
        if not isinstance(other, MlpModel):
            return NotImplemented
        return (
            self.window == other.window
            and self.stride == other.stride
            and np.array_equal(self.mean, other.mean)
            and np.array_equal(self.std, other.std)
            and len(self.weights) == len(other.weights)
            and all(np.array_equal(a, b) for a, b in zip(self.params(), other.params()))
        )

    __hash__ = None


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def forward(params, X):
    """Return (activations, probabilities); activations[0] is the input."""
    acts = [X]
    a = X
    n_layers = len(params) // 2
    for i in range(n_layers):
        z = a @ params[2 * i] + params[2 * i + 1]
        a = np.tanh(z) if i < n_layers - 1 else z
        acts.append(a)
    return acts, softmax(acts[-1])


def cross_entropy(probs, y):
    return float(-np.mean(np.log(np.maximum(probs[np.arange(len(y)), y], 1e-300))))


def loss_and_grad(params, X, y):
    """Mean cross-entropy of normalized inputs ``X`` and its gradient w.r.t. every parameter."""
    acts, probs = forward(params, X)
    loss = cross_entropy(probs, y)
    delta = probs.copy()
    delta[np.arange(len(y)), y] -= 1.0
    delta /= len(y)
    grads = [None] * len(params)
    for i in reversed(range(len(params) // 2)):
        grads[2 * i] = acts[i].T @ delta
        grads[2 * i + 1] = delta.sum(axis=0)
        if i:
            delta = (delta @ params[2 * i].T) * (1.0 - acts[i] ** 2)
    return loss, grads


def normalization_stats(X):
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    # constant features get unit scale, so unseen values stay on a sane scale
    std = np.where(std < STD_FLOOR, 1.0, std)
    return mean, std


def _validate_dataset(dataset):
    if len(dataset) == 0:
        raise TrainingError("dataset is empty")
    if len(np.unique(dataset.labels)) < 2:
        raise TrainingError("dataset contains a single class; training is degenerate")


def init_model(dataset, hyper=TrainConfig()):
    """Model at initialization: uniform(+-1/sqrt(fan_in)) weights and biases, dataset normalization."""
    _validate_dataset(dataset)
    rng = np.random.Generator(np.random.Philox(hyper.seed))
    return _init(dataset, hyper, rng)


def _init(dataset, hyper, rng):
    mean, std = normalization_stats(dataset.features)
    sizes = [dataset.features.shape[1], *hyper.hidden, N_SKILLS]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return MlpModel(tuple(weights), tuple(biases), mean, std, dataset.window, dataset.stride)


def train(dataset, hyper=TrainConfig()):
    """Mini-batch SGD on mean cross-entropy. Deterministic given ``hyper.seed``."""
    _validate_dataset(dataset)
    if hyper.epochs < 0 or hyper.batch < 1 or hyper.learning_rate < 0:
        raise ValidationError("epochs >= 0, batch >= 1 and learning_rate >= 0 required")
    rng = np.random.Generator(np.random.Philox(hyper.seed))
    model = _init(dataset, hyper, rng)
    X = model.normalize(dataset.features)
    y = np.asarray(dataset.labels)
    params = [p.copy() for p in model.params()]
    lr = hyper.learning_rate
    for _ in range(hyper.epochs):
        order = rng.permutation(len(y))
        for start in range(0, len(y), hyper.batch):
            idx = order[start : start + hyper.batch]
            _, grads = loss_and_grad(params, X[idx], y[idx])
            for p, g in zip(params, grads):
                p -= lr * g
    return model.with_params(params)


def mean_loss(model, features, labels):
    _, probs = forward(model.params(), model.normalize(features))
    return cross_entropy(probs, np.asarray(labels))


# ---------------------------------------------------------------------------
# prediction


@dataclass(frozen=True, eq=False)
class LabeledSeries:
    starts: np.ndarray
    labels: np.ndarray
    probs: np.ndarray
    window: int
    stride: int

    def __len__(self):
        return len(self.labels)

    def __eq__(self, other):
        if not isinstance(other, LabeledSeries):
            return NotImplemented
        return (
            self.window == other.window
            and self.stride == other.stride
            and np.array_equal(self.starts, other.starts)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.probs, other.probs)
        )

    __hash__ = None

    def to_dict(self):
        return {
            "version": LABELS_VERSION,
            "window": self.window,
            "stride": self.stride,
            "starts": [int(s) for s in self.starts],
            "labels": [str(SkillLabel(int(l))) for l in self.labels],
            "probs": [[float(p) for p in row] for row in self.probs],
        }

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict) or d.get("version") != LABELS_VERSION:
            raise FormatError(f"unsupported labels version {d.get('version')!r}")
        extra = set(d) - {"version", "window", "stride", "starts", "labels", "probs"}
        if extra:
            raise FormatError(f"unknown fields {sorted(extra)}")
        try:
            labels = np.array([int(SkillLabel.parse(s)) for s in d["labels"]], dtype=np.int64)
            probs = np.array(d["probs"], dtype=np.float64).reshape(len(labels), N_SKILLS)
            starts = np.array(d["starts"], dtype=np.int64)
            return cls(starts, labels, probs, int(d["window"]), int(d["stride"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed labels document: {exc}") from None


def dumps_labels(series):
    return (json.dumps(series.to_dict(), indent=1) + "\n").encode("utf-8")


def loads_labels(data):
    try:
        return LabeledSeries.from_dict(json.loads(data))
    except json.JSONDecodeError as exc:
        raise FormatError(f"labels document is not JSON: {exc.msg}") from None


def series_from_labels(labels, window, stride, probs=None):
    labels = np.asarray(labels, dtype=np.int64)
    if probs is None:
        probs = np.eye(N_SKILLS)[labels]
    return LabeledSeries(np.arange(len(labels)) * stride, labels, probs, window, stride)


def predict(model, features):
    features = np.atleast_2d(features)
    if features.shape[1] != model.sizes[0]:
        raise ValidationError(f"feature dimension {features.shape[1]} != model input {model.sizes[0]}")
    _, probs = forward(model.params(), model.normalize(features))
    return series_from_labels(probs.argmax(axis=1), model.window, model.stride, probs)


def detect(model, log):
    return predict(model, extract_features(log, model.window, model.stride))


def smooth_labels(series, k):
    """Sliding majority vote over ``k`` windows (truncated at the ends); ties keep the centre label."""
    if k < 1 or k % 2 == 0:
        raise ValidationError(f"smoothing width must be odd and >= 1, got {k}")
    labels = np.asarray(series.labels)
    half = k // 2
    out = labels.copy()
    for i in range(len(labels)):
        counts = np.bincount(labels[max(0, i - half) : i + half + 1], minlength=N_SKILLS)
        top = counts.max()
        if np.count_nonzero(counts == top) == 1:
            out[i] = counts.argmax()
    return replace(series, labels=out)


@dataclass(frozen=True)
class Evaluation:
    accuracy: float
    confusion: np.ndarray  # rows: true label, cols: predicted

    def to_dict(self):
        return {"accuracy": self.accuracy, "confusion": self.confusion.tolist()}


def evaluate(pred, truth):
    pred = np.asarray(getattr(pred, "labels", pred))
    truth = np.asarray(getattr(truth, "labels", truth))
    if pred.shape != truth.shape:
        raise ValidationError("prediction and truth lengths differ")
    confusion = np.zeros((N_SKILLS, N_SKILLS), dtype=np.int64)
    np.add.at(confusion, (truth, pred), 1)
    acc = float(np.mean(pred == truth)) if len(pred) else 0.0
    return Evaluation(acc, confusion)


# ---------------------------------------------------------------------------
# checkpoint


def save_model(model):
    doc = {
        "version": CHECKPOINT_VERSION,
        "layers": [{"weights": W.tolist(), "bias": b.tolist()} for W, b in zip(model.weights, model.biases)],
        "norm": {"mean": model.mean.tolist(), "std": model.std.tolist()},
        "window": model.window,
        "stride": model.stride,
    }
    return json.dumps(doc).encode("utf-8")


def load_model(data):
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise FormatError(f"checkpoint is not JSON: {exc.msg}") from None
    if not isinstance(doc, dict) or doc.get("version") != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {doc.get('version') if isinstance(doc, dict) else None!r}")
    if set(doc) != {"version", "layers", "norm", "window", "stride"}:
        raise FormatError("checkpoint fields must be version, layers, norm, window, stride")
    try:
        weights = tuple(np.array(l["weights"], dtype=np.float64) for l in doc["layers"])
        biases = tuple(np.array(l["bias"], dtype=np.float64) for l in doc["layers"])
        mean = np.array(doc["norm"]["mean"], dtype=np.float64)
        std = np.array(doc["norm"]["std"], dtype=np.float64)
        return MlpModel(weights, biases, mean, std, int(doc["window"]), int(doc["stride"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed checkpoint: {exc}") from None
