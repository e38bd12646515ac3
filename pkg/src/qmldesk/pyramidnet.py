"""Orthogonal neural-network layers built from planar-rotation pyramids.

A layer is a fixed schedule of two-wire rotations; its weight matrix is the
product of the scheduled Givens rotations and is therefore orthogonal by
construction, with one free angle per matrix degree of freedom.  Training
updates the angles directly, so no projection or regularization step is ever
needed to stay on the orthogonal group.  The same schedule read as a quantum
circuit acts on amplitudes, which grounds the shot-based inference path.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from qmldesk.linbasis import loader_angles
from qmldesk.tomography import linf_shots, signed_layer_estimate

__all__ = [
    "PyramidLayer",
    "TimestepTrace",
    "OrthoNet",
    "angle_count",
    "forward",
    "matrix_of",
    "angles_from_orthogonal",
    "backward",
    "sigmoid",
    "cap_relu",
    "cap_relu_grad",
    "net_forward",
    "train",
    "predict",
    "quantum_forward",
]

_ORTHO_TOL = 1e-8


def angle_count(n_in: int, n_out: int) -> int:
    """Number of rotation parameters for an n_in -> n_out layer."""
    if not 1 <= n_out <= n_in:
        raise ValueError("need 1 <= n_out <= n_in")
    return (2 * n_in - 1 - n_out) * n_out // 2


def _square_schedule(n: int) -> tuple:
    """Full pyramid with its apex on the top wire pair.

    Gates are numbered along up-right diagonals: diagonal k holds gates
    t = 0..k-1 on wire pair (k-1-t, k-t) at timestep k-1+t, stored at
    k(k-1)/2 + t.  Timesteps 0..2n-4 tile the diamond so that adjacent
    gates never share a timestep.
    """
    steps = [[] for _ in range(max(0, 2 * n - 3))]
    for k in range(1, n):
        for t in range(k):
            steps[k - 1 + t].append((k - 1 - t, k * (k - 1) // 2 + t))
    return tuple(tuple(sorted(step)) for step in steps)


def _rect_schedule(n_in: int, n_out: int) -> tuple:
    """Truncated pyramid producing its outputs on the first n_out wires.

    Start from the wire-mirrored diamond, where pair (i, i+1) is active at
    timesteps n_in-2-i .. n_in-2+i in steps of two, then drop every gate
    from which the first n_out wires can no longer be reached: for
    i+1 > n_out that removes the last i+1-n_out firings of the pair.
    Angles are numbered timestep-major, top wire first.
    """
    n, d = n_in, n_out
    steps = [[] for _ in range(n + d - 2)]
    for i in range(n - 1):
        last = n - 2 + i - 2 * max(0, i + 1 - d)
        for lam in range(n - 2 - i, last + 1, 2):
            steps[lam].append(i)
    schedule = []
    idx = 0
    for wires in steps:
        row = []
        for i in sorted(wires):
            row.append((i, idx))
            idx += 1
        schedule.append(tuple(row))
    assert idx == angle_count(n, d)
    return tuple(schedule)


@dataclass
class PyramidLayer:
    """One orthogonal layer: dimensions, angles, and the gate schedule.

    ``schedule`` maps each timestep to (upper_wire, angle_index) pairs;
    wires within a timestep are disjoint, so the per-timestep matrix is a
    commuting product of rotations.
    """

    n_in: int
    n_out: int
    angles: np.ndarray
    schedule: tuple = field(repr=False)

    def __post_init__(self):
        self.angles = np.asarray(self.angles, dtype=float)
        if self.angles.shape != (angle_count(self.n_in, self.n_out),):
            raise ValueError("angle array does not match the layer dimensions")
        seen = [idx for step in self.schedule for _, idx in step]
        if sorted(seen) != list(range(self.angles.size)):
            raise ValueError("schedule must cover each angle exactly once")
        for step in self.schedule:
            wires = [w for i, _ in step for w in (i, i + 1)]
            if len(wires) != len(set(wires)):
                raise ValueError("gates within a timestep must not share wires")

    @classmethod
    def create(cls, n_in: int, n_out: int | None = None, angles=None,
               rng: np.random.Generator | None = None) -> "PyramidLayer":
        """Build a layer; angles default to zero, or uniform with an rng."""
        n_out = n_in if n_out is None else n_out
        count = angle_count(n_in, n_out)
        if angles is None:
            if rng is None:
                angles = np.zeros(count)
            else:
                angles = rng.uniform(-math.pi, math.pi, count)
        schedule = (_square_schedule(n_in) if n_out == n_in
                    else _rect_schedule(n_in, n_out))
        return cls(n_in, n_out, angles, schedule)

    @property
    def timesteps(self) -> int:
        return len(self.schedule)


@dataclass(frozen=True)
class TimestepTrace:
    """Wire values before and after every timestep of one forward pass.

    Row lam is the state entering timestep lam; the last row is the full
    n_in-dimensional output before any truncation.  Every row has the same
    norm because each timestep is orthogonal.
    """

    inner: np.ndarray

    @property
    def output(self) -> np.ndarray:
        return self.inner[-1]


def forward(layer: PyramidLayer, x) -> tuple[np.ndarray, TimestepTrace]:
    """Run the schedule on x; returns the (possibly truncated) output."""
    x = np.asarray(x, dtype=float)
    if x.shape != (layer.n_in,):
        raise ValueError(f"input must have dimension {layer.n_in}")
    inner = np.empty((layer.timesteps + 1, layer.n_in))
    inner[0] = x
    v = x.copy()
    for lam, step in enumerate(layer.schedule):
        for i, idx in step:
            c = math.cos(layer.angles[idx])
            s = math.sin(layer.angles[idx])
            vi, vj = v[i], v[i + 1]
            v[i] = c * vi - s * vj
            v[i + 1] = s * vi + c * vj
        inner[lam + 1] = v
    return v[: layer.n_out].copy(), TimestepTrace(inner)


def matrix_of(layer: PyramidLayer) -> np.ndarray:
    """Weight matrix of the layer: n_out x n_in with orthonormal rows."""
    W = np.eye(layer.n_in)
    for step in layer.schedule:
        for i, idx in step:
            c = math.cos(layer.angles[idx])
            s = math.sin(layer.angles[idx])
            ri = W[i].copy()
            rj = W[i + 1].copy()
            W[i] = c * ri - s * rj
            W[i + 1] = s * ri + c * rj
    return W[: layer.n_out]


def angles_from_orthogonal(W) -> np.ndarray:
    """Recover square-pyramid angles reproducing an orientation-preserving
    orthogonal matrix.

    The schedule factors into diagonal blocks, and the last diagonal alone
    determines the last column; reading that column as a loader amplitude
    pattern yields its angles, after which the diagonal is unwound and the
    problem recurses on the leading block.  Matrices with determinant -1
    are rejected: a rotation pyramid cannot produce a reflection.
    """
    W = np.asarray(W, dtype=float)
    n = W.shape[0]
    if W.ndim != 2 or W.shape != (n, n):
        raise ValueError("need a square matrix")
    if np.abs(W.T @ W - np.eye(n)).max() > _ORTHO_TOL:
        raise ValueError("matrix is not orthogonal")
    if np.linalg.det(W) < 0:
        raise ValueError("determinant -1: not reachable by rotations")

    angles = np.zeros(n * (n - 1) // 2)
    R = W.copy()
    for k in range(n - 1, 0, -1):
        signs = np.where(np.arange(k + 1) % 2 == 0, 1.0, -1.0)
        b = signs * R[k::-1, k]
        phi = loader_angles(b / np.linalg.norm(b)).angles
        angles[k * (k - 1) // 2: k * (k + 1) // 2] = phi
        # unwind this diagonal: transposed gates in reverse order
        for t in range(k - 1, -1, -1):
            i = k - 1 - t
            c, s = math.cos(phi[t]), math.sin(phi[t])
            ri = R[i].copy()
            rj = R[i + 1].copy()
            R[i] = c * ri + s * rj
            R[i + 1] = -s * ri + c * rj
    if np.abs(R - np.eye(n)).max() > 1e-6:
        raise ValueError("diagonal peeling failed to reduce the matrix")
    return angles


def backward(layer: PyramidLayer, trace: TimestepTrace,
             out_error) -> tuple[np.ndarray, np.ndarray]:
    """Angle gradients and the error on the layer input.

    The error vector is pulled back timestep by timestep through the
    transposed rotations; each gate's gradient couples the backward error
    after the gate with the forward values before it.  For rectangular
    layers the output error is padded with zeros on the discarded wires.
    """
    out_error = np.asarray(out_error, dtype=float)
    if out_error.shape != (layer.n_out,):
        raise ValueError(f"output error must have dimension {layer.n_out}")
    if trace.inner.shape != (layer.timesteps + 1, layer.n_in):
        raise ValueError("trace does not belong to this layer")
    d = np.zeros(layer.n_in)
    d[: layer.n_out] = out_error
    grads = np.zeros(layer.angles.size)
    for lam in range(layer.timesteps - 1, -1, -1):
        z = trace.inner[lam]
        for i, idx in layer.schedule[lam]:
            c = math.cos(layer.angles[idx])
            s = math.sin(layer.angles[idx])
            zi, zj = z[i], z[i + 1]
            di, dj = d[i], d[i + 1]
            grads[idx] = di * (-s * zi - c * zj) + dj * (c * zi - s * zj)
            d[i] = c * di + s * dj
            d[i + 1] = -s * di + c * dj
    return grads, d


# ---------------------------------------------------------------------------
# Nonlinearities
# ---------------------------------------------------------------------------

def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.asarray(z, dtype=float)))


def cap_relu(z, cap: float):
    """Rectifier clipped at cap, keeping activations inside a known range."""
    if cap <= 0:
        raise ValueError("cap must be positive")
    return np.clip(np.asarray(z, dtype=float), 0.0, cap)


def cap_relu_grad(z, cap: float):
    z = np.asarray(z, dtype=float)
    return ((z >= 0.0) & (z <= cap)).astype(float)


def _activation(net: "OrthoNet", z):
    if net.nonlinearity == "sigmoid":
        return sigmoid(z)
    if net.nonlinearity == "caprelu":
        return cap_relu(z, net.cap)
    return np.asarray(z, dtype=float)


def _activation_grad(net: "OrthoNet", z, h):
    if net.nonlinearity == "sigmoid":
        return h * (1.0 - h)
    if net.nonlinearity == "caprelu":
        return cap_relu_grad(z, net.cap)
    return np.ones_like(z)


# ---------------------------------------------------------------------------
# Multi-layer networks
# ---------------------------------------------------------------------------

@dataclass
class OrthoNet:
    """Stack of pyramid layers joined by a classical nonlinearity.

    Between hidden layers the activation is optionally rescaled to unit
    norm; orthogonal layers preserve norms anyway, and the quantum path
    needs unit vectors for its loaders, so the flag defaults to on.
    """

    layers: list
    nonlinearity: str = "sigmoid"
    cap: float = 1.0
    renormalize: bool = True

    def __post_init__(self):
        if not self.layers:
            raise ValueError("need at least one layer")
        if self.nonlinearity not in ("sigmoid", "caprelu", "none"):
            raise ValueError(f"unknown nonlinearity {self.nonlinearity!r}")
        if self.cap <= 0:
            raise ValueError("cap must be positive")
        for first, second in zip(self.layers, self.layers[1:]):
            if first.n_out != second.n_in:
                raise ValueError("adjacent layer dimensions do not match")

    @classmethod
    def create(cls, dims, rng: np.random.Generator | None = None,
               **kwargs) -> "OrthoNet":
        """Net from a dimension chain like [8, 8, 4, 4]."""
        layers = [PyramidLayer.create(a, b, rng=rng)
                  for a, b in zip(dims, dims[1:])]
        return cls(layers, **kwargs)

    @property
    def n_in(self) -> int:
        return self.layers[0].n_in

    @property
    def n_out(self) -> int:
        return self.layers[-1].n_out

    def orthogonality_defect(self) -> float:
        worst = 0.0
        for layer in self.layers:
            W = matrix_of(layer)
            gram = W @ W.T
            worst = max(worst, float(np.abs(gram - np.eye(layer.n_out)).max()))
        return worst

    def to_json(self) -> str:
        payload = {
            "layers": [
                {
                    "n_in": layer.n_in,
                    "n_out": layer.n_out,
                    "angles": [float(f"{a:.17g}") for a in layer.angles],
                }
                for layer in self.layers
            ],
            "nonlinearity": self.nonlinearity,
            "cap": self.cap,
            "renormalize": self.renormalize,
        }
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "OrthoNet":
        payload = json.loads(text)
        layers = [
            PyramidLayer.create(entry["n_in"], entry["n_out"],
                                angles=np.array(entry["angles"]))
            for entry in payload["layers"]
        ]
        return cls(layers, nonlinearity=payload["nonlinearity"],
                   cap=payload["cap"], renormalize=payload["renormalize"])


def net_forward(net: OrthoNet, x, keep: bool = False):
    """Logits of the net on one input; keep=True also returns what the
    backward pass needs (traces, pre- and post-activation values)."""
    a = np.asarray(x, dtype=float)
    cache = []
    for li, layer in enumerate(net.layers):
        y, trace = forward(layer, a)
        if li == len(net.layers) - 1:
            cache.append((trace, None, None, None))
            a = y
        else:
            h = _activation(net, y)
            norm = float(np.linalg.norm(h))
            if net.renormalize:
                if norm == 0.0:
                    raise ValueError("activation collapsed to zero; cannot renormalize")
                nxt = h / norm
            else:
                nxt = h
            cache.append((trace, y, h, norm))
            a = nxt
    return (a, cache) if keep else a


def _net_backward(net: OrthoNet, cache, dlogits):
    """Per-layer angle gradients for one sample, chaining the error through
    renormalization and the activation at each junction."""
    grads = [None] * len(net.layers)
    delta = np.asarray(dlogits, dtype=float)
    for li in range(len(net.layers) - 1, -1, -1):
        trace = cache[li][0]
        grads[li], din = backward(net.layers[li], trace, delta)
        if li == 0:
            break
        _, y_prev, h_prev, norm_prev = cache[li - 1]
        if net.renormalize:
            unit = h_prev / norm_prev
            din = (din - unit * float(unit @ din)) / norm_prev
        delta = din * _activation_grad(net, y_prev, h_prev)
    return grads


def _softmax(logits):
    shifted = logits - logits.max()
    e = np.exp(shifted)
    return e / e.sum()


def train(net: OrthoNet, inputs, labels, epochs: int, lr: float,
          rng: np.random.Generator, batch_size: int = 32) -> dict:
    """Minibatch gradient descent on the angles with a softmax head.

    Inputs are normalized to unit rows up front.  The per-epoch history
    records mean loss, training accuracy, and the worst orthogonality
    defect over all layers, which stays at rounding level no matter how
    long training runs because orthogonality is built into the
    parametrization rather than enforced.
    """
    X = np.asarray(inputs, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if X.ndim != 2 or X.shape[1] != net.n_in:
        raise ValueError(f"inputs must be rows of dimension {net.n_in}")
    if labels.shape != (len(X),):
        raise ValueError("one integer label per input row required")
    if labels.min() < 0 or labels.max() >= net.n_out:
        raise ValueError("labels must index output coordinates")
    norms = np.linalg.norm(X, axis=1)
    if np.any(norms == 0):
        raise ValueError("zero input row cannot be normalized")
    X = X / norms[:, None]

    history = {"loss": [], "accuracy": [], "orthogonality_defect": []}
    for _ in range(epochs):
        order = rng.permutation(len(X))
        losses = []
        hits = 0
        for start in range(0, len(X), batch_size):
            batch = order[start: start + batch_size]
            totals = [np.zeros_like(layer.angles) for layer in net.layers]
            for row in batch:
                logits, cache = net_forward(net, X[row], keep=True)
                p = _softmax(logits)
                losses.append(-math.log(max(p[labels[row]], 1e-300)))
                hits += int(np.argmax(logits) == labels[row])
                dlogits = p.copy()
                dlogits[labels[row]] -= 1.0
                for li, g in enumerate(_net_backward(net, cache, dlogits)):
                    totals[li] += g
            for layer, total in zip(net.layers, totals):
                layer.angles -= lr * total / len(batch)
        defect = net.orthogonality_defect()
        if defect > _ORTHO_TOL:
            raise RuntimeError("orthogonality lost; angles are corrupted")
        history["loss"].append(float(np.mean(losses)))
        history["accuracy"].append(hits / len(X))
        history["orthogonality_defect"].append(defect)
    return history


def predict(net: OrthoNet, inputs) -> np.ndarray:
    X = np.asarray(inputs, dtype=float)
    X = X / np.linalg.norm(X, axis=1, keepdims=True)
    return np.array([int(np.argmax(net_forward(net, row))) for row in X])


def quantum_forward(net: OrthoNet, x, shots: float | None = None,
                    delta: float | None = None,
                    rng: np.random.Generator | None = None) -> np.ndarray:
    """Shot-based inference: each layer output is read back through the
    joint sign-and-magnitude sampling before the classical nonlinearity.

    Pass shots directly, or a precision delta from which the per-layer
    shot count is derived.  Infinite shots short-circuit to the exact
    amplitudes, recovering the classical forward pass.  Activations are
    always rescaled to unit norm between layers here: every layer of the
    shot-based path starts by loading a unit vector.
    """
    if shots is None:
        if delta is None:
            raise ValueError("give either shots or delta")
        shots = None  # derived per layer below
    a = np.asarray(x, dtype=float)
    a = a / np.linalg.norm(a)
    for li, layer in enumerate(net.layers):
        _, trace = forward(layer, a)
        full = trace.output
        layer_shots = shots if shots is not None else linf_shots(full.size, delta)
        if math.isinf(layer_shots):
            estimate = full
        else:
            if rng is None:
                raise ValueError("finite shots require an rng")
            estimate = signed_layer_estimate(full, int(layer_shots), rng)
        y = estimate[: layer.n_out]
        if li == len(net.layers) - 1:
            return y
        h = _activation(net, y)
        norm = float(np.linalg.norm(h))
        if norm == 0.0:
            raise ValueError("activation collapsed to zero; cannot renormalize")
        a = h / norm
    raise AssertionError("unreachable")
