"""Second-order flow refinement of fragmented heatmaps.

Training samples live on two linear interpolants: the state path
x_t = (1-t) x0 + t x1 and the velocity path
v_tau = (1-tau) v0 + tau (x1 - x0), whose tau-derivative
a = (x1 - x0) - v0 is the regression target for a small per-pixel MLP.
Inference runs an explicit Euler double loop: the inner loop integrates
the learned acceleration into a corrected velocity, the outer loop
advances the heatmap with that velocity. The net effect is that scattered
responses collapse onto compact manipulation regions, from which weighted
centroids are extracted as manipulation points.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    AllZeroField,
    DimensionMismatch,
    MalformedHeader,
    NonFiniteLoss,
    NonFiniteState,
    TimeOutOfRange,
)
from .fields import BinaryMask, ScalarField, connected_components
from .rng import substream

__all__ = [
    "FlowSample",
    "interpolate_state",
    "interpolate_velocity",
    "acceleration_target",
    "AccelerationModel",
    "model_forward",
    "model_backward",
    "flow_loss",
    "TrainConfig",
    "train",
    "RefineConfig",
    "refine",
    "extract_points",
    "save_model",
    "load_model",
]


def _check_unit_time(value: float, name: str) -> float:
    if not 0.0 <= value <= 1.0:
        raise TimeOutOfRange(f"{name} must lie in [0, 1], got {value}")
    return float(value)


def _check_same(*fields_: ScalarField) -> None:
    w, h = fields_[0].width, fields_[0].height
    for f in fields_[1:]:
        if (f.width, f.height) != (w, h):
            raise DimensionMismatch("all fields must share dimensions")


def interpolate_state(x0: ScalarField, x1: ScalarField, t: float) -> ScalarField:
    """Convex combination (1-t) x0 + t x1."""
    _check_same(x0, x1)
    t = _check_unit_time(t, "t")
    return ScalarField.from_array((1.0 - t) * x0.data + t * x1.data)


def interpolate_velocity(
    v0: ScalarField, x0: ScalarField, x1: ScalarField, tau: float
) -> ScalarField:
    """Convex combination of v0 toward the guided velocity x1 - x0."""
    _check_same(v0, x0, x1)
    tau = _check_unit_time(tau, "tau")
    return ScalarField.from_array((1.0 - tau) * v0.data + tau * (x1.data - x0.data))


def acceleration_target(x0: ScalarField, x1: ScalarField, v0: ScalarField) -> ScalarField:
    """Constant tau-derivative of the velocity path: (x1 - x0) - v0."""
    _check_same(x0, x1, v0)
    return ScalarField.from_array((x1.data - x0.data) - v0.data)


@dataclass(frozen=True, eq=False)
class FlowSample:
    """One training tuple on the coupled interpolants."""

    x0: ScalarField
    x1: ScalarField
    t: float
    tau: float
    v0: ScalarField
    x_t: ScalarField
    v_tau: ScalarField
    a_gt: ScalarField

    @classmethod
    def build(
        cls, x0: ScalarField, x1: ScalarField, t: float, tau: float, v0: ScalarField
    ) -> "FlowSample":
        return cls(
            x0=x0,
            x1=x1,
            t=_check_unit_time(t, "t"),
            tau=_check_unit_time(tau, "tau"),
            v0=v0,
            x_t=interpolate_state(x0, x1, t),
            v_tau=interpolate_velocity(v0, x0, x1, tau),
            a_gt=acceleration_target(x0, x1, v0),
        )


# ---------------------------------------------------------------------------
# per-pixel acceleration model

_ACTIVATIONS = {"tanh": np.tanh}


def _patch_columns(a: np.ndarray, r: int) -> np.ndarray:
    """Stack the (2r+1)^2 replicate-padded neighborhood of each pixel."""
    h, w = a.shape
    if r == 0:
        return a.reshape(h * w, 1)
    pad = np.pad(a, r, mode="edge")
    k = 2 * r + 1
    cols = [pad[du : du + h, dv : dv + w] for du in range(k) for dv in range(k)]
    return np.stack(cols, axis=-1).reshape(h * w, k * k)


def _features(v_tau: np.ndarray, x_t: np.ndarray, t: float, tau: float, r: int) -> np.ndarray:
    """Per-pixel feature rows: x_t patch, v_tau patch, normalized (cx, cy), t, tau."""
    h, w = x_t.shape
    n = h * w
    cx = np.tile((np.arange(w) + 0.5) / w, h)
    cy = np.repeat((np.arange(h) + 0.5) / h, w)
    return np.hstack(
        [
            _patch_columns(x_t, r),
            _patch_columns(v_tau, r),
            cx[:, None],
            cy[:, None],
            np.full((n, 1), t),
            np.full((n, 1), tau),
        ]
    )


@dataclass(eq=False)
class AccelerationModel:
    """Per-pixel MLP mapping local flow features to an acceleration value.

    Hidden layers carry biases and the configured activation; the output
    layer is linear with no bias, so an all-zero parameter vector yields an
    all-zero acceleration field. Parameters live in one flat float64 vector
    ordered layer by layer as (weights, bias).
    """

    hidden: tuple[int, ...] = (64, 64)
    activation: str = "tanh"
    patch_radius: int = 1
    seed: int = 0
    params: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.patch_radius < 0:
            raise ValueError("patch_radius must be non-negative")
        if not self.hidden:
            raise ValueError("at least one hidden layer is required")
        if self.params is None:
            self.params = self._init_params()
        expected = self.param_count()
        if self.params.shape != (expected,):
            raise ValueError(f"expected {expected} parameters, got {self.params.shape}")

    @property
    def n_features(self) -> int:
        k = (2 * self.patch_radius + 1) ** 2
        return 2 * k + 4

    def layer_dims(self) -> list[int]:
        return [self.n_features, *self.hidden, 1]

    def param_count(self) -> int:
        dims = self.layer_dims()
        total = 0
        for i in range(len(dims) - 1):
            total += dims[i] * dims[i + 1]
            if i < len(dims) - 2:  # no bias on the output layer
                total += dims[i + 1]
        return total

    def _init_params(self) -> np.ndarray:
        rng = substream(self.seed, 0)
        dims = self.layer_dims()
        chunks = []
        for i in range(len(dims) - 1):
            scale = 1.0 / np.sqrt(dims[i])
            chunks.append(rng.normal(0.0, scale, dims[i] * dims[i + 1]))
            if i < len(dims) - 2:
                chunks.append(np.zeros(dims[i + 1]))
        return np.concatenate(chunks)

    def _unpack(self) -> list[tuple[np.ndarray, np.ndarray | None]]:
        dims = self.layer_dims()
        layers: list[tuple[np.ndarray, np.ndarray | None]] = []
        pos = 0
        for i in range(len(dims) - 1):
            n_in, n_out = dims[i], dims[i + 1]
            w = self.params[pos : pos + n_in * n_out].reshape(n_out, n_in)
            pos += n_in * n_out
            b = None
            if i < len(dims) - 2:
                b = self.params[pos : pos + n_out]
                pos += n_out
            layers.append((w, b))
        return layers

    def _forward_arrays(
        self, v_tau: np.ndarray, x_t: np.ndarray, t: float, tau: float
    ) -> tuple[np.ndarray, list[np.ndarray]]:
        """Returns (per-pixel outputs, activations per layer incl. features)."""
        act = _ACTIVATIONS[self.activation]
        phi = _features(v_tau, x_t, t, tau, self.patch_radius)
        layers = self._unpack()
        activations = [phi]
        h = phi
        for w, b in layers[:-1]:
            h = act(h @ w.T + b)
            activations.append(h)
        w_out, _ = layers[-1]
        out = h @ w_out.T
        return out[:, 0], activations

    def forward(self, v_tau: ScalarField, x_t: ScalarField, t: float, tau: float) -> ScalarField:
        """Acceleration field predicted for the given flow state."""
        _check_same(v_tau, x_t)
        _check_unit_time(t, "t")
        _check_unit_time(tau, "tau")
        out, _ = self._forward_arrays(v_tau.data, x_t.data, t, tau)
        return ScalarField.from_array(out.reshape(x_t.height, x_t.width))


def model_forward(
    m: AccelerationModel, v_tau: ScalarField, x_t: ScalarField, t: float, tau: float
) -> ScalarField:
    return m.forward(v_tau, x_t, t, tau)


def _loss_and_grad(m: AccelerationModel, batch: list[FlowSample]) -> tuple[float, np.ndarray]:
    """Mean squared error over all batch pixels and its parameter gradient."""
    if not batch:
        raise ValueError("batch must be non-empty")
    grad = np.zeros_like(m.params)
    layers = m._unpack()
    dims = m.layer_dims()
    total_sq = 0.0
    total_px = sum(s.x_t.data.size for s in batch)
    for sample in batch:
        out, activations = m._forward_arrays(
            sample.v_tau.data, sample.x_t.data, sample.t, sample.tau
        )
        residual = out - sample.a_gt.data.ravel()
        total_sq += float(np.dot(residual, residual))
        # reverse pass; d(loss)/d(out) for loss = sum(residual^2)/total_px
        delta = (2.0 / total_px) * residual[:, None]
        grads_rev: list[np.ndarray] = []
        # output layer (no bias)
        w_out, _ = layers[-1]
        grads_rev.append((delta.T @ activations[-1]).ravel())
        upstream = delta @ w_out
        # hidden layers, last to first
        for i in range(len(layers) - 2, -1, -1):
            w, _b = layers[i]
            h = activations[i + 1]
            dz = upstream * (1.0 - h * h)  # tanh'
            grads_rev.append(dz.sum(axis=0))  # bias
            grads_rev.append((dz.T @ activations[i]).ravel())  # weights
            if i > 0:
                upstream = dz @ w
        flat = np.concatenate(list(reversed(grads_rev)))
        grad += flat
    loss = total_sq / total_px
    return loss, grad


def flow_loss(m: AccelerationModel, batch: list[FlowSample]) -> float:
    """Mean squared error between predicted and target accelerations."""
    loss, _ = _loss_and_grad(m, batch)
    return loss


def model_backward(m: AccelerationModel, batch: list[FlowSample]) -> np.ndarray:
    """Parameter gradient of the mean squared flow-matching error."""
    _, grad = _loss_and_grad(m, batch)
    return grad


# ---------------------------------------------------------------------------
# training

@dataclass(frozen=True)
class TrainConfig:
    """Adam training with linear warmup followed by cosine annealing."""

    steps: int = 4000
    learning_rate: float = 1e-3
    lr_min: float = 1e-5
    warmup_frac: float = 0.05
    v0_policy: str = "gaussian"  # "zero" | "gaussian"
    v0_sigma: float = 0.5
    hidden: tuple[int, ...] = (64, 64)
    patch_radius: int = 1
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be at least 1")
        if self.v0_policy not in ("zero", "gaussian"):
            raise ValueError(f"unknown v0 policy {self.v0_policy!r}")
        if not 0.0 <= self.warmup_frac < 1.0:
            raise ValueError("warmup_frac must lie in [0, 1)")


def _lr_at(step: int, cfg: TrainConfig) -> float:
    warmup = max(int(cfg.steps * cfg.warmup_frac), 1)
    if step < warmup:
        return cfg.learning_rate * (step + 1) / warmup
    progress = (step - warmup) / max(cfg.steps - warmup, 1)
    return cfg.lr_min + 0.5 * (cfg.learning_rate - cfg.lr_min) * (1.0 + np.cos(np.pi * progress))


def _sample_v0(rng: np.random.Generator, shape: tuple[int, int], policy: str, sigma: float) -> np.ndarray:
    if policy == "zero":
        return np.zeros(shape)
    return rng.normal(0.0, sigma, shape)


def train(
    pairs: list[tuple[ScalarField, ScalarField]], cfg: TrainConfig
) -> tuple[AccelerationModel, list[float]]:
    """Fit the acceleration model on (x0, x1) pairs.

    Each step draws one pair, t and tau uniform in [0, 1], and a v0 field per
    the configured policy, then takes one Adam step on the mean squared
    acceleration error. Fully deterministic given cfg.seed.
    """
    if not pairs:
        raise ValueError("at least one training pair is required")
    for x0, x1 in pairs:
        _check_same(x0, x1)
    model = AccelerationModel(
        hidden=tuple(cfg.hidden), patch_radius=cfg.patch_radius, seed=cfg.seed
    )
    rng = substream(cfg.seed, 1)
    m1 = np.zeros_like(model.params)
    m2 = np.zeros_like(model.params)
    losses: list[float] = []
    for step in range(cfg.steps):
        x0, x1 = pairs[int(rng.integers(len(pairs)))]
        t = float(rng.random())
        tau = float(rng.random())
        v0 = ScalarField.from_array(
            _sample_v0(rng, (x0.height, x0.width), cfg.v0_policy, cfg.v0_sigma)
        )
        sample = FlowSample.build(x0, x1, t, tau, v0)
        loss, grad = _loss_and_grad(model, [sample])
        if not np.isfinite(loss):
            raise NonFiniteLoss(step)
        losses.append(loss)
        lr = _lr_at(step, cfg)
        m1 = cfg.adam_beta1 * m1 + (1.0 - cfg.adam_beta1) * grad
        m2 = cfg.adam_beta2 * m2 + (1.0 - cfg.adam_beta2) * grad * grad
        c1 = m1 / (1.0 - cfg.adam_beta1 ** (step + 1))
        c2 = m2 / (1.0 - cfg.adam_beta2 ** (step + 1))
        model.params = model.params - lr * c1 / (np.sqrt(c2) + cfg.adam_eps)
    return model, losses


# ---------------------------------------------------------------------------
# inference

@dataclass(frozen=True)
class RefineConfig:
    """Discretization of the double integration."""

    n_t: int = 10
    n_tau: int = 10
    v0_policy: str = "zero"  # "zero" | "gaussian"
    v0_sigma: float = 0.5

    def __post_init__(self):
        if self.n_t < 1 or self.n_tau < 1:
            raise ValueError("n_t and n_tau must be at least 1")
        if self.v0_policy not in ("zero", "gaussian"):
            raise ValueError(f"unknown v0 policy {self.v0_policy!r}")


def refine(
    model,
    x0: ScalarField,
    cfg: RefineConfig = RefineConfig(),
    seed: int = 0,
    clamp: bool = True,
) -> ScalarField:
    """Explicit Euler double integration of the acceleration field.

    Outer loop over t in {0, 1/n_t, ...}: reset v from the v0 policy, run
    the inner loop over tau in {0, 1/n_tau, ...} with
    v += a(v, tau, x, t) / n_tau, then advance x += v / n_t. The result is
    clamped into [0, 1] unless clamp is False; integration itself never
    clamps, so constant accelerations integrate exactly.

    `model` is an AccelerationModel or any callable (v, tau, x, t) -> array
    over arrays, which makes frozen test oracles easy to plug in.
    """
    if isinstance(model, AccelerationModel):
        accel = lambda v, tau, x, t: model._forward_arrays(v, x, t, tau)[0].reshape(x.shape)
    elif callable(model):
        accel = model
    else:
        raise TypeError("model must be an AccelerationModel or a callable")
    x = x0.data.copy()
    shape = x.shape
    for ti in range(cfg.n_t):
        t = ti / cfg.n_t
        rng = substream(seed, ti)
        v = _sample_v0(rng, shape, cfg.v0_policy, cfg.v0_sigma)
        for taui in range(cfg.n_tau):
            tau = taui / cfg.n_tau
            v = v + np.asarray(accel(v, tau, x, t)) / cfg.n_tau
            if not np.isfinite(v).all():
                raise NonFiniteState(ti, taui)
        x = x + v / cfg.n_t
        if not np.isfinite(x).all():
            raise NonFiniteState(ti)
    if clamp:
        x = np.clip(x, 0.0, 1.0)
    return ScalarField.from_array(x)


def extract_points(
    f: ScalarField, k: int = 1, quantile: float = 0.8
) -> list[tuple[float, float, float]]:
    """Manipulation points as intensity-weighted component centroids.

    The field is thresholded at the given quantile of its positive values,
    8-connected components are ranked by total mass, and up to k centroids
    (x, y, mass) are returned in descending mass order. Ties break by the
    raster position of each component's first pixel.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if not 0.0 < quantile < 1.0:
        raise ValueError("quantile must lie strictly between 0 and 1")
    d = f.data
    positive = d[d > 0]
    if positive.size == 0:
        raise AllZeroField("field has no positive values")
    threshold = float(np.quantile(positive, quantile))
    mask = BinaryMask.from_array((d >= threshold).astype(np.uint8))
    labels = connected_components(mask, connectivity=8)
    entries = []
    for label in range(1, int(labels.max()) + 1):
        ys, xs = np.nonzero(labels == label)
        weights = d[ys, xs]
        mass = float(weights.sum())
        cx = float((weights * xs).sum() / mass)
        cy = float((weights * ys).sum() / mass)
        first = int(ys[0]) * f.width + int(xs[0])
        entries.append((-mass, first, (cx, cy, mass)))
    entries.sort(key=lambda e: (e[0], e[1]))
    return [point for _, _, point in entries[:k]]


# ---------------------------------------------------------------------------
# model serialization ("ICRF1" format)

_MODEL_MAGIC = "ICRF1"


def save_model(m: AccelerationModel, path) -> None:
    """Write a model file: magic line, architecture line, parameter floats.

    The architecture line is `patch_radius n_hidden w1 w2 ... activation seed`.
    Parameters use shortest round-trip decimals, one chunk of 8 per line.
    """
    arch = [str(m.patch_radius), str(len(m.hidden)), *map(str, m.hidden), m.activation, str(m.seed)]
    lines = [_MODEL_MAGIC, " ".join(arch)]
    flat = m.params
    for i in range(0, flat.size, 8):
        lines.append(" ".join(repr(float(v)) for v in flat[i : i + 8]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def load_model(path) -> AccelerationModel:
    """Read a model file written by save_model."""
    lines = Path(path).read_text(encoding="ascii").splitlines()
    if not lines or lines[0].strip() != _MODEL_MAGIC:
        raise MalformedHeader(f"missing {_MODEL_MAGIC} magic in {path}")
    if len(lines) < 2:
        raise MalformedHeader(f"missing architecture line in {path}")
    parts = lines[1].split()
    try:
        patch_radius = int(parts[0])
        n_hidden = int(parts[1])
        hidden = tuple(int(p) for p in parts[2 : 2 + n_hidden])
        activation = parts[2 + n_hidden]
        seed = int(parts[3 + n_hidden])
    except (IndexError, ValueError) as exc:
        raise MalformedHeader(f"bad architecture line in {path}") from exc
    tokens = " ".join(lines[2:]).split()
    try:
        params = np.array([float(tok) for tok in tokens])
    except ValueError as exc:
        raise MalformedHeader(f"unparseable parameter in {path}") from exc
    return AccelerationModel(
        hidden=hidden, activation=activation, patch_radius=patch_radius, seed=seed, params=params
    )
