"""Single-hidden-layer perceptron with logistic units, trained by full-batch BFGS.

Defaults follow the reference setup: 15 hidden units, weight decay 1e-4,
initial weights uniform on [-0.1, 0.1], logistic output units with one-hot
targets and a sum-of-squares loss.
"""
from __future__ import annotations

import enum
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy.special import expit, log_expit

from contingency.optim import NonFiniteError, Termination, minimize_bfgs
from contingency.rng import SeedLike, as_generator


class Loss(str, enum.Enum):
    SSE = "sse"
    XENT = "xent"


class TrainingError(RuntimeError):
    """Training aborted, e.g. on a non-finite objective."""


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class MlpConfig:
    n_inputs: int
    n_outputs: int
    n_hidden: int = 15
    weight_decay: float = 1e-4
    init_range: float = 0.1
    max_iterations: int = 1_000_000
    ftol: float = 1e-8
    gtol: float = 1e-6
    stall_iterations: int = 20
    loss: Loss = Loss.SSE

    def __post_init__(self):
        if min(self.n_inputs, self.n_hidden, self.n_outputs, self.max_iterations, self.stall_iterations) < 1:
            raise ValueError("layer sizes, max_iterations and stall_iterations must be >= 1")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if not self.init_range > 0:
            raise ValueError("init_range must be > 0")
        object.__setattr__(self, "loss", Loss(self.loss))

    @property
    def n_parameters(self) -> int:
        return (self.n_inputs + 1) * self.n_hidden + (self.n_hidden + 1) * self.n_outputs


@dataclass(frozen=True)
class MlpParameters:
    """Weights with the bias as the last row of each block."""

    hidden_weights: np.ndarray  # (n_inputs + 1, n_hidden)
    output_weights: np.ndarray  # (n_hidden + 1, n_outputs)

    @property
    def n_inputs(self) -> int:
        return self.hidden_weights.shape[0] - 1

    @property
    def n_hidden(self) -> int:
        return self.hidden_weights.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.output_weights.shape[1]

    def flat(self) -> np.ndarray:
        return np.concatenate([self.hidden_weights.ravel(), self.output_weights.ravel()])

    @classmethod
    def from_flat(cls, w: np.ndarray, n_inputs: int, n_hidden: int, n_outputs: int) -> "MlpParameters":
        k = (n_inputs + 1) * n_hidden
        if w.size != k + (n_hidden + 1) * n_outputs:
            raise ValueError("flat parameter vector has the wrong length")
        return cls(
            w[:k].reshape(n_inputs + 1, n_hidden).copy(),
            w[k:].reshape(n_hidden + 1, n_outputs).copy(),
        )


@dataclass
class TrainingOutcome:
    parameters: MlpParameters
    final_objective: float
    initial_objective: float
    iterations: int
    termination: Termination
    history: list[float] = field(default_factory=list, repr=False)

    @property
    def converged(self) -> bool:
        return self.termination in (Termination.GRADIENT, Termination.RELATIVE_DECREASE)


def init_weights(cfg: MlpConfig, rng: SeedLike) -> MlpParameters:
    r = cfg.init_range
    w = as_generator(rng).uniform(-r, r, size=cfg.n_parameters)
    return MlpParameters.from_flat(w, cfg.n_inputs, cfg.n_hidden, cfg.n_outputs)


def _check_width(p: MlpParameters, x: np.ndarray) -> None:
    if x.shape[-1] != p.n_inputs:
        raise ValueError(f"input width {x.shape[-1]} does not match model ({p.n_inputs} inputs)")


def _affine(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    return x @ w[:-1] + w[-1]


def forward(p: MlpParameters, x: np.ndarray) -> np.ndarray:
    """Logistic outputs for one input vector or a batch of rows."""
    x = np.asarray(x, dtype=np.float64)
    _check_width(p, x)
    hidden = expit(_affine(x, p.hidden_weights))
    return expit(_affine(hidden, p.output_weights))


def one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    t = np.zeros((len(labels), n_classes))
    t[np.arange(len(labels)), labels] = 1.0
    return t


# non-finite results are detected below and reported as NonFiniteError
@np.errstate(invalid="ignore", over="ignore")
def objective_and_gradient(
    w: Union[np.ndarray, MlpParameters],
    x: np.ndarray,
    targets: np.ndarray,
    n_hidden: Optional[int],
    decay: float,
    loss: Loss = Loss.SSE,
) -> tuple[float, np.ndarray]:
    """Training loss plus ``decay * sum(w**2)`` and its backpropagated gradient.

    ``w`` is either an :class:`MlpParameters` or the flat vector from
    :meth:`MlpParameters.flat`; ``n_hidden`` is only needed for the latter.
    The gradient is always returned flat.
    """
    n_in, n_out = x.shape[1], targets.shape[1]
    if isinstance(w, MlpParameters):
        p, w = w, w.flat()
    else:
        p = MlpParameters.from_flat(w, n_in, n_hidden, n_out)
    W1, W2 = p.hidden_weights, p.output_weights

    h = expit(_affine(x, W1))
    z = _affine(h, W2)
    o = expit(z)
    if loss == Loss.SSE:
        err = o - targets
        value = float(np.sum(err * err))
        dz = 2.0 * err * o * (1.0 - o)
    else:
        value = float(-np.sum(targets * log_expit(z) + (1.0 - targets) * log_expit(-z)))
        dz = o - targets
    value += decay * float(w @ w)

    dh = (dz @ W2[:-1].T) * h * (1.0 - h)
    g2 = np.vstack([h.T @ dz, dz.sum(axis=0)])
    g1 = np.vstack([x.T @ dh, dh.sum(axis=0)])
    grad = np.concatenate([g1.ravel(), g2.ravel()]) + 2.0 * decay * w
    if not np.isfinite(value) or not np.all(np.isfinite(grad)):
        raise NonFiniteError("non-finite objective or gradient in backpropagation")
    return value, grad


def train_bfgs(
    cfg: MlpConfig,
    x: np.ndarray,
    labels: np.ndarray,
    rng: SeedLike,
    init: Optional[MlpParameters] = None,
) -> TrainingOutcome:
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("need at least one training row")
    if x.shape[1] != cfg.n_inputs:
        raise ValueError(f"input width {x.shape[1]} does not match n_inputs={cfg.n_inputs}")
    targets = one_hot(labels, cfg.n_outputs)
    p0 = init if init is not None else init_weights(cfg, rng)

    def fun(w):
        try:
            return objective_and_gradient(w, x, targets, cfg.n_hidden, cfg.weight_decay, cfg.loss)
        except NonFiniteError:
            return np.inf, np.full_like(w, np.nan)

    try:
        res = minimize_bfgs(
            fun,
            p0.flat(),
            max_iter=cfg.max_iterations,
            ftol=cfg.ftol,
            gtol=cfg.gtol,
            stall_iterations=cfg.stall_iterations,
        )
    except NonFiniteError as exc:
        raise TrainingError(str(exc)) from exc
    params = MlpParameters.from_flat(res.x, cfg.n_inputs, cfg.n_hidden, cfg.n_outputs)
    return TrainingOutcome(params, res.fun, res.initial_fun, res.iterations, res.termination, res.history)


def predict(p: MlpParameters, x: np.ndarray) -> Union[int, np.ndarray]:
    """Arg-max class; ties go to the lowest index (``np.argmax`` semantics)."""
    out = forward(p, x)
    return int(np.argmax(out)) if out.ndim == 1 else np.argmax(out, axis=1)


def accuracy(p: MlpParameters, x: np.ndarray, labels: np.ndarray) -> float:
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise ValueError("accuracy of an empty test set is undefined")
    return float(np.mean(predict(p, np.atleast_2d(x)) == labels))


# Model files: magic, format version, then little-endian header and float64 blocks.
MAGIC = b"CTMLP"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<5sHIII B B")


@dataclass(frozen=True)
class SavedModel:
    parameters: MlpParameters
    loss: Loss = Loss.SSE
    masked: bool = False
    class_names: Optional[tuple[str, ...]] = None
    scaling: Optional[tuple[np.ndarray, np.ndarray]] = None


def dumps_model(m: SavedModel) -> bytes:
    p = m.parameters
    loss_code = list(Loss).index(Loss(m.loss))
    flags = (1 if m.masked else 0) | (2 if m.scaling is not None else 0)
    parts = [
        _HEADER.pack(MAGIC, FORMAT_VERSION, p.n_inputs, p.n_hidden, p.n_outputs, loss_code, flags),
        p.hidden_weights.astype("<f8").tobytes(order="C"),
        p.output_weights.astype("<f8").tobytes(order="C"),
    ]
    if m.scaling is not None:
        lo, span = m.scaling
        parts += [np.asarray(lo, "<f8").tobytes(), np.asarray(span, "<f8").tobytes()]
    meta = json.dumps({"class_names": list(m.class_names) if m.class_names else None}).encode()
    parts += [struct.pack("<I", len(meta)), meta]
    return b"".join(parts)


def loads_model(blob: bytes) -> SavedModel:
    if len(blob) < _HEADER.size or blob[:5] != MAGIC:
        raise ModelFormatError("not a model file")
    magic, version, n_in, n_h, n_out, loss_code, flags = _HEADER.unpack_from(blob)
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"model format version {version} unsupported (expected {FORMAT_VERSION})")
    pos = _HEADER.size

    def take(count):
        nonlocal pos
        arr = np.frombuffer(blob, "<f8", count=count, offset=pos).astype(np.float64)
        pos += 8 * count
        return arr

    try:
        W1 = take((n_in + 1) * n_h).reshape(n_in + 1, n_h)
        W2 = take((n_h + 1) * n_out).reshape(n_h + 1, n_out)
        scaling = None
        nv = n_in // 2 if flags & 1 else n_in
        if flags & 2:
            scaling = (take(nv), take(nv))
        (meta_len,) = struct.unpack_from("<I", blob, pos)
        meta = json.loads(blob[pos + 4 : pos + 4 + meta_len])
    except (ValueError, struct.error) as exc:
        raise ModelFormatError(f"truncated or corrupt model file: {exc}") from exc
    names = tuple(meta["class_names"]) if meta.get("class_names") else None
    return SavedModel(MlpParameters(W1, W2), list(Loss)[loss_code], bool(flags & 1), names, scaling)


def save_model(m: SavedModel, path: Union[str, Path]) -> None:
    Path(path).write_bytes(dumps_model(m))


def load_model(path: Union[str, Path]) -> SavedModel:
    return loads_model(Path(path).read_bytes())
