"""Reference training loop with per-layer delayed gradient application.

Gradients can be applied ``D`` batches late: each weighted layer owns a
FIFO of ``D`` pending gradients, primed with zeros.  Every step pushes the
fresh gradient and applies the one that falls out, so the update at step
``t`` uses the gradient computed from the weights of step ``t - D``.  With
``delays=None`` the queue machinery is bypassed entirely, which serves as
the undelayed reference path.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import layers as L
from . import lif
from .errors import NumericDomainError, StructuralError, TrainingError
from .network import LayerSpec, NetworkSpec

__all__ = [
    "OptimizerConfig",
    "OptimizerState",
    "SnnNetwork",
    "TrainingHistory",
    "train",
    "load_dataset",
    "save_dataset",
    "synthetic_spike_task",
    "toy_network_spec",
]


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "adam"
    eta: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise StructuralError(f"unknown optimizer kind {self.kind!r}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise TrainingError("momentum decay rates must lie in [0, 1)")
        if self.epsilon <= 0:
            raise TrainingError("epsilon must be positive")


class OptimizerState:
    """Update state for one layer's parameter group.

    ``delay=None`` applies gradients immediately with no queue; an integer
    delay (0 allowed) routes every gradient through a FIFO of that length.
    """

    def __init__(self, config: OptimizerConfig, params: dict[str, np.ndarray],
                 delay: int | None = None):
        self.config = config
        self.delay = delay
        self.step = 0
        if config.kind == "adam":
            self.m = {k: np.zeros_like(v) for k, v in params.items()}
            self.v = {k: np.zeros_like(v) for k, v in params.items()}
        if delay is not None:
            if delay < 0 or delay % 2:
                raise TrainingError(
                    f"gradient delay must be an even nonnegative batch count, got {delay}"
                )
            self.queue = deque(
                {k: np.zeros_like(v) for k, v in params.items()} for _ in range(delay)
            )

    def apply(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        if self.delay is not None:
            self.queue.append(grads)
            grads = self.queue.popleft()
        cfg = self.config
        self.step += 1
        if cfg.kind == "sgd":
            for key, p in params.items():
                p -= cfg.eta * grads[key]
            return
        lr = cfg.eta * np.sqrt(1.0 - cfg.beta2 ** self.step) / (1.0 - cfg.beta1 ** self.step)
        for key, p in params.items():
            g = grads[key]
            m = self.m[key]
            v = self.v[key]
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            p -= lr * m / (np.sqrt(v) + cfg.epsilon)


def _glorot(rng: np.random.Generator, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class SnnNetwork:
    """Trainable instantiation of a NetworkSpec.

    Holds one parameter dict per weighted layer ({"w": ..., "b": ...}) and
    runs the full forward/backward over (T, B, ...) tensors.  The backward
    pass mirrors the array task split: adjoint currents per layer, weight
    gradients against stored activations, input gradients chained upstream
    (skipped for the first layer).
    """

    def __init__(self, spec: NetworkSpec, rng: np.random.Generator):
        self.spec = spec
        self.lif = lif.LifParams(
            c=spec.lif.c, lam=spec.lif.lam, v_th=spec.lif.v_th, alpha=spec.lif.alpha
        )
        self.params: list[dict[str, np.ndarray]] = []
        self.weighted: list[LayerSpec] = []
        for layer in spec.layers:
            if layer.kind == "conv":
                fan_in = layer.kernel * layer.kernel * layer.in_c
                fan_out = layer.kernel * layer.kernel * layer.out_c
                w = _glorot(rng, (layer.out_c, layer.in_c, layer.kernel, layer.kernel),
                            fan_in, fan_out)
                self.params.append({"w": w, "b": np.zeros(layer.out_c)})
                self.weighted.append(layer)
            elif layer.kind in ("fc", "output"):
                w = _glorot(rng, (layer.out_features, layer.in_features),
                            layer.in_features, layer.out_features)
                self.params.append({"w": w, "b": np.zeros(layer.out_features)})
                self.weighted.append(layer)

    def forward(self, x: np.ndarray):
        """Returns (final potentials (B, N), caches for backward)."""
        caches = []
        value = x
        widx = 0
        for layer in self.spec.layers:
            if layer.kind == "maxpool":
                value, argmax = L.maxpool_forward(value, layer.window)
                caches.append(("pool", argmax))
                continue
            flattened = False
            if layer.kind in ("fc", "output") and value.ndim == 5:
                t, b = value.shape[:2]
                value = value.reshape(t, b, -1)
                flattened = True
            p = self.params[widx]
            if layer.kind == "conv":
                i_in = L.conv_forward(value, p["w"], p["b"], layer.pad)
            else:
                i_in = L.fc_forward(value, p["w"], p["b"])
            if layer.kind == "output":
                v_m = lif.accumulator_forward(i_in)
                caches.append(("output", value, flattened))
                return v_m[-1], caches
            v_m, v_sp, _d = lif.lif_forward(i_in, self.lif)
            caches.append((layer.kind, value, v_m, v_sp, flattened))
            value = v_sp
            widx += 1
        raise StructuralError("network has no output layer")  # guarded by NetworkSpec

    def loss_and_grads(self, x: np.ndarray, y_onehot: np.ndarray):
        """Summed batch loss, predictions, and per-layer parameter grads."""
        logits, caches = self.forward(x)
        t = self.spec.timesteps
        loss, g_iin = lif.output_layer_grad(logits, y_onehot, t)

        grads: list[dict[str, np.ndarray] | None] = [None] * len(self.params)
        widx = len(self.params) - 1
        g = None
        for cache in reversed(caches):
            kind = cache[0]
            if kind == "pool":
                g = L.maxpool_backward(g, cache[1])
                continue
            if kind == "output":
                _, act, flattened = cache
                g_w, g_b = L.fc_backward_weights(g_iin, act)
                grads[widx] = {"w": g_w, "b": g_b}
                g = L.fc_backward_inputs(g_iin, self.params[widx]["w"])
            else:
                _, act, v_m, v_sp, flattened = cache
                layer = self.weighted[widx]
                g_cur = lif.lif_backward(g, v_sp, v_m, self.lif)
                if kind == "conv":
                    g_w, g_b = L.conv_backward_weights(g_cur, act, layer.kernel, layer.pad)
                    grads[widx] = {"w": g_w, "b": g_b}
                    # input gradient of the first layer is never needed
                    g = (L.conv_backward_inputs(g_cur, self.params[widx]["w"], layer.pad)
                         if widx > 0 else None)
                else:
                    g_w, g_b = L.fc_backward_weights(g_cur, act)
                    grads[widx] = {"w": g_w, "b": g_b}
                    g = (L.fc_backward_inputs(g_cur, self.params[widx]["w"])
                         if widx > 0 else None)
            if flattened and widx > 0 and g is not None:
                ts, bs = g.shape[:2]
                prev = _spatial_shape_before(self.spec, widx)
                g = g.reshape(ts, bs, *prev)
            widx -= 1
        preds = logits.argmax(axis=-1)
        return loss, preds, grads

    def predict(self, x: np.ndarray) -> np.ndarray:
        logits, _ = self.forward(x)
        return logits.argmax(axis=-1)


def _spatial_shape_before(spec: NetworkSpec, widx: int):
    """(C, H, W) feeding weighted layer ``widx`` when it flattened its input."""
    count = -1
    prev_shape = spec.input_shape
    for layer in spec.layers:
        if layer.kind == "maxpool":
            prev_shape = (layer.out_h, layer.out_w, layer.out_c)
            continue
        count += 1
        if count == widx:
            h, w, c = prev_shape
            return (c, h, w)
        if layer.kind == "conv":
            prev_shape = (layer.out_h, layer.out_w, layer.out_c)
        else:
            prev_shape = (1, 1, layer.out_features)
    raise StructuralError("weighted layer index out of range")


# ---------------------------------------------------------------------------
# training loop


@dataclass
class TrainingHistory:
    epochs: list[int] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)
    accuracies: list[float] = field(default_factory=list)

    @property
    def final_accuracy(self) -> float:
        return self.accuracies[-1]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "loss", "accuracy"])
            for e, l, a in zip(self.epochs, self.losses, self.accuracies):
                writer.writerow([e, f"{l:.10g}", f"{a:.10g}"])


def _standardize_inputs(spec: NetworkSpec, inputs: np.ndarray) -> np.ndarray:
    """Coerce dataset tensors to (N, T, ...) matching the network input."""
    inputs = np.asarray(inputs, dtype=np.float64)
    h, w, c = spec.input_shape
    conv_first = spec.layers[0].kind in ("conv", "maxpool")
    per_step = (c, h, w) if conv_first else (h * w * c,)
    flat = int(np.prod(per_step))

    n = inputs.shape[0]
    rest = inputs.shape[1:]
    if rest and rest[0] == spec.timesteps and int(np.prod(rest[1:])) == flat:
        return inputs.reshape(n, spec.timesteps, *per_step)
    if int(np.prod(rest)) == flat:
        static = inputs.reshape(n, *per_step)
        return np.repeat(static[:, None], spec.timesteps, axis=1)
    raise StructuralError(
        f"dataset sample shape {rest} does not match network input {per_step} "
        f"(optionally with a leading {spec.timesteps}-timestep axis)"
    )


def _one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() >= n_classes:
        raise StructuralError(f"labels out of range for {n_classes} classes")
    out = np.zeros((labels.shape[0], n_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def train(spec: NetworkSpec, inputs, labels, epochs: int,
          optimizer: OptimizerConfig | None = None,
          delays: list[int] | None = None,
          batch_size: int | None = None,
          seed: int = 0) -> TrainingHistory:
    """Train on the given samples; deterministic for a fixed seed.

    ``delays`` gives the gradient delay in batches per weighted layer (a
    valid schedule assigns twice the number of processors downstream of the
    layer's weight-gradient host).  ``None`` runs the plain undelayed path.
    """
    optimizer = optimizer or OptimizerConfig()
    inputs = _standardize_inputs(spec, inputs)
    labels = np.asarray(labels)
    n = inputs.shape[0]
    if n == 0:
        raise TrainingError("empty dataset")
    if labels.shape[0] != n:
        raise StructuralError("inputs and labels disagree on sample count")
    batch_size = batch_size or spec.batch_default

    rng = np.random.default_rng(seed)
    net = SnnNetwork(spec, rng)
    n_weighted = len(net.params)
    if delays is not None and len(delays) != n_weighted:
        raise TrainingError(
            f"got {len(delays)} delays for {n_weighted} weighted layers"
        )
    states = [
        OptimizerState(optimizer, net.params[i],
                       None if delays is None else delays[i])
        for i in range(n_weighted)
    ]

    n_classes = spec.layers[-1].out_features
    y_all = _one_hot(labels, n_classes)
    # (T, N, ...) once, so batches are cheap views along axis 1
    x_all = np.moveaxis(inputs, 1, 0)

    history = TrainingHistory()
    for epoch in range(epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, batch_size):
            sel = order[start:start + batch_size]
            try:
                loss, _preds, grads = net.loss_and_grads(x_all[:, sel], y_all[sel])
            except NumericDomainError as exc:
                raise TrainingError(
                    f"training diverged at epoch {epoch}, batch {start // batch_size}: {exc}"
                ) from exc
            if not np.isfinite(loss):
                raise TrainingError(
                    f"loss diverged to {loss} at epoch {epoch}, batch {start // batch_size}"
                )
            epoch_loss += loss
            for state, params, g in zip(states, net.params, grads):
                state.apply(params, g)
        preds = net.predict(x_all)
        history.epochs.append(epoch)
        history.losses.append(epoch_loss / n)
        history.accuracies.append(float((preds == labels).mean()))
    return history


# ---------------------------------------------------------------------------
# datasets


def save_dataset(path, inputs, labels) -> None:
    """Binary tensor container: arrays ``inputs`` and ``labels`` in an npz."""
    np.savez(path, inputs=np.asarray(inputs), labels=np.asarray(labels))


def load_dataset(path):
    """Load the npz or csv tensor container documented in the README.

    npz holds ``inputs`` of shape (N, ...) or (N, T, ...) and integer
    ``labels`` (N,).  csv rows are ``label, f0, f1, ...`` with one static
    sample per row.
    """
    path = str(path)
    if path.endswith(".npz"):
        with np.load(path) as data:
            if "inputs" not in data or "labels" not in data:
                raise StructuralError("dataset npz must contain 'inputs' and 'labels'")
            return data["inputs"].astype(np.float64), data["labels"].astype(np.int64)
    if path.endswith(".csv"):
        rows = []
        labels = []
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.reader(fh):
                if not row or row[0].lstrip().startswith("#"):
                    continue
                labels.append(int(float(row[0])))
                rows.append([float(v) for v in row[1:]])
        if not rows:
            raise StructuralError("dataset csv contains no samples")
        return np.asarray(rows, dtype=np.float64), np.asarray(labels, dtype=np.int64)
    raise StructuralError(f"unknown dataset container {path!r} (want .npz or .csv)")


# ---------------------------------------------------------------------------
# toy experiment


def synthetic_spike_task(n_samples: int = 200, n_inputs: int = 24,
                         timesteps: int = 8, flip_prob: float = 0.05,
                         seed: int = 7):
    """Two-class spike patterns: noisy copies of two random prototypes."""
    rng = np.random.default_rng(seed)
    prototypes = (rng.random((2, timesteps, n_inputs)) < 0.5).astype(np.float64)
    labels = np.arange(n_samples) % 2
    rng.shuffle(labels)
    flips = rng.random((n_samples, timesteps, n_inputs)) < flip_prob
    inputs = np.abs(prototypes[labels] - flips.astype(np.float64))
    return inputs, labels


def toy_network_spec(n_inputs: int = 24, hidden: int = 16, n_classes: int = 2,
                     timesteps: int = 8, batch: int = 32) -> NetworkSpec:
    return NetworkSpec(
        name="toy",
        timesteps=timesteps,
        input_shape=(1, 1, n_inputs),
        batch_default=batch,
        layers=(
            LayerSpec(name="hidden", kind="fc", in_features=n_inputs, out_features=hidden),
            LayerSpec(name="out", kind="output", in_features=hidden, out_features=n_classes),
        ),
    )
