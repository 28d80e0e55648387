"""Dense feed-forward network with hand-rolled reverse-mode gradients.

The model family is fixed: fully connected layers, ReLU hidden activations,
linear output. Everything operates on a single flat float64 parameter
vector so optimizer state, Hessian-vector products and checkpoints share
one indexing scheme.

Parameter layout (frozen contract)
----------------------------------
Layers are stored in order from input to output. For a layer with weight
matrix ``W`` of shape ``(fan_in, fan_out)`` and bias ``b`` of shape
``(fan_out,)``, the flat vector holds ``W`` first (C order, i.e. flat
index ``i * fan_out + j`` for ``W[i, j]``) followed by ``b``. The next
layer starts immediately after.

Subgradient conventions: ``d|u|/du = sign(u)`` with ``sign(0) = 0`` and
``relu'(0) = 0``. Both the gradient and the Hessian-vector product use
these conventions, so they agree with finite differences away from kinks.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"METACAL1"

_HIDDEN_ACTIVATIONS = ("relu",)
_OUTPUT_ACTIVATIONS = ("linear",)


@dataclass(frozen=True)
class MlpSpec:
    """Architecture descriptor shared by the base model and the meta learner."""

    input_dim: int = 4
    hidden_widths: tuple[int, ...] = (128, 128)
    hidden_activation: str = "relu"
    output_dim: int = 1
    output_activation: str = "linear"

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError(f"input_dim and output_dim must be >= 1, got {self.input_dim}, {self.output_dim}")
        if not self.hidden_widths:
            raise ValueError("need at least one hidden layer")
        if any(w < 1 for w in self.hidden_widths):
            raise ValueError(f"every hidden width must be >= 1, got {self.hidden_widths}")
        if self.hidden_activation not in _HIDDEN_ACTIVATIONS:
            raise ValueError(f"unsupported hidden activation {self.hidden_activation!r}")
        if self.output_activation not in _OUTPUT_ACTIVATIONS:
            raise ValueError(f"unsupported output activation {self.output_activation!r}")

    def layer_shapes(self) -> list[tuple[int, int]]:
        """(fan_in, fan_out) per layer, input to output."""
        dims = [self.input_dim, *self.hidden_widths, self.output_dim]
        return list(zip(dims[:-1], dims[1:]))


def param_count(spec: MlpSpec) -> int:
    return sum(fi * fo + fo for fi, fo in spec.layer_shapes())


@dataclass(frozen=True)
class ParamVector:
    """Flat, read-only float64 vector of all weights and biases for one spec."""

    values: np.ndarray
    spec: MlpSpec

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).ravel()
        expected = param_count(self.spec)
        if values.size != expected:
            raise ValueError(f"expected {expected} parameters for {self.spec}, got {values.size}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class Batch:
    """Feature matrix plus targets, both already normalized and finite."""

    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        inputs = np.array(self.inputs, dtype=np.float64)
        targets = np.array(self.targets, dtype=np.float64).ravel()
        if inputs.ndim != 2:
            raise ValueError(f"inputs must be 2-D, got shape {inputs.shape}")
        if inputs.shape[0] < 1:
            raise ValueError("batch must contain at least one sample")
        if inputs.shape[0] != targets.size:
            raise ValueError(f"{inputs.shape[0]} input rows but {targets.size} targets")
        if not (np.isfinite(inputs).all() and np.isfinite(targets).all()):
            raise ValueError("batch contains NaN or Inf entries")
        inputs.setflags(write=False)
        targets.setflags(write=False)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "targets", targets)

    def __len__(self) -> int:
        return self.inputs.shape[0]


def _unpack(values: np.ndarray, spec: MlpSpec) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split a flat vector into (W, b) views per layer."""
    layers = []
    pos = 0
    for fi, fo in spec.layer_shapes():
        w = values[pos:pos + fi * fo].reshape(fi, fo)
        pos += fi * fo
        b = values[pos:pos + fo]
        pos += fo
        layers.append((w, b))
    return layers


def _pack(parts: list[tuple[np.ndarray, np.ndarray]], spec: MlpSpec) -> ParamVector:
    flat = np.concatenate([np.concatenate([w.ravel(), b]) for w, b in parts])
    return ParamVector(flat, spec)


def _check_inputs(spec: MlpSpec, inputs: np.ndarray) -> np.ndarray:
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != spec.input_dim:
        raise ValueError(
            f"expected inputs of shape (n, {spec.input_dim}), got {inputs.shape}"
        )
    return inputs


def _forward_cached(layers, inputs):
    """Forward pass keeping pre-activations and activations for backprop."""
    acts = [inputs]
    preacts = []
    a = inputs
    n_layers = len(layers)
    for li, (w, b) in enumerate(layers):
        z = a @ w + b
        preacts.append(z)
        a = np.maximum(z, 0.0) if li < n_layers - 1 else z
        acts.append(a)
    return preacts, acts


def forward(params: ParamVector, inputs: np.ndarray) -> np.ndarray:
    """Predictions for each input row; shape (n,) when output_dim == 1."""
    inputs = _check_inputs(params.spec, inputs)
    layers = _unpack(params.values, params.spec)
    _, acts = _forward_cached(layers, inputs)
    out = acts[-1]
    return out[:, 0] if params.spec.output_dim == 1 else out


def loss_mae(params: ParamVector, batch: Batch) -> float:
    """Mean absolute error of the network over the batch."""
    if params.spec.output_dim != 1:
        raise ValueError("loss_mae requires output_dim == 1")
    preds = forward(params, batch.inputs)
    return float(np.mean(np.abs(preds - batch.targets)))


def grad(params: ParamVector, batch: Batch) -> ParamVector:
    """Exact reverse-mode gradient of loss_mae w.r.t. every parameter."""
    if params.spec.output_dim != 1:
        raise ValueError("grad requires output_dim == 1")
    spec = params.spec
    inputs = _check_inputs(spec, batch.inputs)
    layers = _unpack(params.values, spec)
    preacts, acts = _forward_cached(layers, inputs)

    n = inputs.shape[0]
    residual = acts[-1][:, 0] - batch.targets
    dz = (np.sign(residual) / n)[:, None]

    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(layers)
    for li in range(len(layers) - 1, -1, -1):
        w, _ = layers[li]
        grads[li] = (acts[li].T @ dz, dz.sum(axis=0))
        if li > 0:
            da = dz @ w.T
            dz = da * (preacts[li - 1] > 0.0)
    return _pack(grads, spec)


def hvp(params: ParamVector, batch: Batch, vector: ParamVector) -> ParamVector:
    """Hessian-vector product H @ v at ``params``, forward-over-reverse.

    Propagates the directional derivative along ``vector`` through both
    the forward pass and the backward recursion of :func:`grad`; the
    indicator and sign factors are locally constant, so their tangents
    are zero almost everywhere.
    """
    if params.spec != vector.spec:
        raise ValueError("params and vector must share one spec")
    if params.spec.output_dim != 1:
        raise ValueError("hvp requires output_dim == 1")
    spec = params.spec
    inputs = _check_inputs(spec, batch.inputs)
    layers = _unpack(params.values, spec)
    tangents = _unpack(vector.values, spec)

    # Forward with (primal, tangent) pairs.
    n_layers = len(layers)
    acts, acts_t = [inputs], [np.zeros_like(inputs)]
    masks = []
    a, at = inputs, np.zeros_like(inputs)
    for li, ((w, b), (vw, vb)) in enumerate(zip(layers, tangents)):
        z = a @ w + b
        zt = at @ w + a @ vw + vb
        if li < n_layers - 1:
            mask = z > 0.0
            a, at = z * mask, zt * mask
            masks.append(mask)
        else:
            a, at = z, zt
        acts.append(a)
        acts_t.append(at)

    n = inputs.shape[0]
    residual = acts[-1][:, 0] - batch.targets
    dz = (np.sign(residual) / n)[:, None]
    dzt = np.zeros_like(dz)

    out: list[tuple[np.ndarray, np.ndarray]] = [None] * n_layers
    for li in range(n_layers - 1, -1, -1):
        w, _ = layers[li]
        vw, _ = tangents[li]
        dwt = acts_t[li].T @ dz + acts[li].T @ dzt
        dbt = dzt.sum(axis=0)
        out[li] = (dwt, dbt)
        if li > 0:
            dat = dzt @ w.T + dz @ vw.T
            dzt = dat * masks[li - 1]
            dz = (dz @ w.T) * masks[li - 1]
    return _pack(out, spec)


def init_params(spec: MlpSpec, seed: int) -> ParamVector:
    """Scaled-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases."""
    rng = np.random.default_rng(seed)
    parts = []
    for fi, fo in spec.layer_shapes():
        bound = np.sqrt(6.0 / (fi + fo))
        parts.append((rng.uniform(-bound, bound, size=(fi, fo)), np.zeros(fo)))
    return _pack(parts, spec)


def to_bytes(params: ParamVector) -> bytes:
    """Checkpoint encoding: magic, spec fields as uint32 LE, float64 LE values."""
    spec = params.spec
    header = struct.pack(
        "<8s3I", MAGIC, spec.input_dim, spec.output_dim, len(spec.hidden_widths)
    )
    widths = struct.pack(f"<{len(spec.hidden_widths)}I", *spec.hidden_widths)
    return header + widths + params.values.astype("<f8").tobytes()


def from_bytes(buf: bytes) -> ParamVector:
    magic, input_dim, output_dim, n_hidden = struct.unpack_from("<8s3I", buf, 0)
    if magic != MAGIC:
        raise ValueError(f"bad checkpoint magic {magic!r}")
    offset = struct.calcsize("<8s3I")
    widths = struct.unpack_from(f"<{n_hidden}I", buf, offset)
    offset += struct.calcsize(f"<{n_hidden}I")
    spec = MlpSpec(input_dim=input_dim, hidden_widths=widths, output_dim=output_dim)
    values = np.frombuffer(buf, dtype="<f8", count=param_count(spec), offset=offset)
    if offset + values.size * 8 != len(buf):
        raise ValueError("checkpoint length does not match its header")
    return ParamVector(values, spec)


def save_params(path, params: ParamVector) -> None:
    with open(path, "wb") as fh:
        fh.write(to_bytes(params))


def load_params(path) -> ParamVector:
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
