"""Convolution layers with amplitude-estimation noise and sampled readout.

The layer is expressed as one matrix product: every kernel-sized region of
the input becomes a row of an expanded matrix, every output channel a column
of the flattened kernel, and the convolution is their product.  On top of
that exact core sit the three effects of estimating the result instead of
computing it: per-entry noise scaled by the row and column norms, a capped
rectifier keeping values in a known range, and an importance-sampling pass
that only retains entries a square-amplitude measurement would reveal.
Backpropagation threads the matching masks through the exact gradients.

Index conventions are column-first throughout: output position p on an
H_out-tall grid means column j = p // H_out, row i = p % H_out, and region
vectors list each channel's patch column by column.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from qmldesk.pyramidnet import cap_relu, cap_relu_grad
from qmldesk.tomography import ImportanceConfig, importance_sample

__all__ = [
    "ConvLayerConfig",
    "ConvTrace",
    "expand_im2col",
    "kernel_matrix",
    "conv_forward",
    "y_to_x",
    "cap_relu",
    "cap_relu_grad",
    "pool",
    "noisy_layer_forward",
    "backprop",
    "save_tensor",
    "load_tensor",
    "create_toy_classifier",
    "toy_forward",
    "train_toy_classifier",
    "toy_predict",
]


def _check_tensor3(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 3 or min(X.shape) < 1:
        raise ValueError("expected an H x W x D tensor with positive dimensions")
    if not np.all(np.isfinite(X)):
        raise ValueError("tensor entries must be finite")
    return X


def _check_tensor4(K) -> np.ndarray:
    K = np.asarray(K, dtype=float)
    if K.ndim != 4 or min(K.shape) < 1:
        raise ValueError("expected an H x W x D_in x D_out kernel tensor")
    if not np.all(np.isfinite(K)):
        raise ValueError("kernel entries must be finite")
    return K


@dataclass(frozen=True)
class ConvLayerConfig:
    """Noise, cap, sampling, and pooling knobs for one layer pass.

    sigma_ratio fixes the sampling threshold as nu = 1/sqrt(sigma * size);
    alternatively nu can be given directly; with neither, every entry is
    kept.  mode "exact" ignores eps entirely; noise_kind picks the Gaussian
    surrogate or the bounded uniform used for the hard error bound.
    """

    eps: float = 0.0
    cap: float = 1.0
    sigma_ratio: float | None = None
    nu: float | None = None
    pool: int = 1
    pool_kind: str = "none"
    delta: float = 0.0
    mode: str = "noisy"
    noise_kind: str = "gaussian"

    def __post_init__(self):
        if self.cap <= 0:
            raise ValueError("cap must be positive")
        if self.pool < 1:
            raise ValueError("pool must be at least 1")
        if self.eps < 0 or self.delta < 0:
            raise ValueError("noise scales must be nonnegative")
        if self.sigma_ratio is not None and self.nu is not None:
            raise ValueError("give sigma_ratio or nu, not both")
        if self.sigma_ratio is not None and not 0 < self.sigma_ratio <= 1:
            raise ValueError("sigma_ratio must lie in (0, 1]")
        if self.nu is not None and self.nu <= 0:
            raise ValueError("nu must be positive")
        if self.pool_kind not in ("max", "avg", "none"):
            raise ValueError(f"unknown pool kind {self.pool_kind!r}")
        if self.mode not in ("exact", "noisy"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.noise_kind not in ("gaussian", "uniform"):
            raise ValueError(f"unknown noise kind {self.noise_kind!r}")


def expand_im2col(X, kernel_hw) -> np.ndarray:
    """Region matrix of the input: one row per output position.

    Row p holds the kernel-sized patch at that position, one channel after
    another, each patch column-first, so the convolution collapses to a
    plain matrix product with the flattened kernel.
    """
    X = _check_tensor3(X)
    kh, kw = kernel_hw
    h_in, w_in, depth = X.shape
    if kh < 1 or kw < 1 or kh > h_in or kw > w_in:
        raise ValueError("kernel must fit inside the input")
    h_out, w_out = h_in - kh + 1, w_in - kw + 1
    view = np.lib.stride_tricks.sliding_window_view(X, (kh, kw), axis=(0, 1))
    # view[i, j, d, h, w] -> row j*h_out + i, column d*(kw*kh) + w*kh + h
    return view.transpose(1, 0, 2, 4, 3).reshape(h_out * w_out, depth * kw * kh)


def kernel_matrix(K) -> np.ndarray:
    """Kernel flattened to match expand_im2col's column order."""
    K = _check_tensor4(K)
    kh, kw, d_in, d_out = K.shape
    return K.transpose(2, 1, 0, 3).reshape(d_in * kw * kh, d_out)


def _rows_to_tensor(Y, h_out, w_out) -> np.ndarray:
    d_out = Y.shape[1]
    return Y.reshape(w_out, h_out, d_out).transpose(1, 0, 2)


def conv_forward(X, K) -> tuple[np.ndarray, np.ndarray]:
    """Exact convolution as a matrix product, plus the tensor view of it."""
    X = _check_tensor3(X)
    K = _check_tensor4(K)
    if K.shape[2] != X.shape[2]:
        raise ValueError("kernel input depth does not match the tensor")
    A = expand_im2col(X, K.shape[:2])
    Y = A @ kernel_matrix(K)
    h_out = X.shape[0] - K.shape[0] + 1
    w_out = X.shape[1] - K.shape[1] + 1
    return Y, _rows_to_tensor(Y, h_out, w_out)


def y_to_x(p: int, q: int, h_out: int) -> tuple[int, int, int]:
    """Map a matrix entry of the output back to tensor coordinates."""
    if h_out < 1:
        raise ValueError("h_out must be positive")
    if p < 0 or q < 0:
        raise ValueError("indices must be nonnegative")
    j = p // h_out
    return p - h_out * j, j, q


def pool(X, P: int, kind: str) -> tuple[np.ndarray, np.ndarray]:
    """Blockwise pooling plus the mask of positions the blocks selected.

    Max pooling marks one winner per P x P block (ties resolved toward the
    lowest column-first index); average pooling marks the whole block.  The
    mask is what backpropagation later uses to route gradients.
    """
    X = _check_tensor3(X)
    if kind == "none" or P == 1:
        return X.copy(), np.ones(X.shape, dtype=bool)
    h, w, depth = X.shape
    if h % P or w % P:
        raise ValueError("pooling needs dimensions divisible by the window")
    if kind == "avg":
        pooled = X.reshape(h // P, P, w // P, P, depth).mean(axis=(1, 3))
        return pooled, np.ones(X.shape, dtype=bool)
    if kind != "max":
        raise ValueError(f"unknown pool kind {kind!r}")
    pooled = np.empty((h // P, w // P, depth))
    selected = np.zeros(X.shape, dtype=bool)
    for d in range(depth):
        for bi in range(h // P):
            for bj in range(w // P):
                block = X[bi * P:(bi + 1) * P, bj * P:(bj + 1) * P, d]
                flat = np.argmax(block.flatten(order="F"))
                a, b = flat % P, flat // P
                pooled[bi, bj, d] = block[a, b]
                selected[bi * P + a, bj * P + b, d] = True
    return pooled, selected


@dataclass
class ConvTrace:
    """Everything one noisy pass produced, kept for the backward pass."""

    output: np.ndarray
    M: float
    error_bound: float
    A: np.ndarray = field(repr=False)
    kernel: np.ndarray = field(repr=False)
    pre_activation: np.ndarray = field(repr=False)
    activated: np.ndarray = field(repr=False)
    sampled: np.ndarray = field(repr=False)
    selected: np.ndarray = field(repr=False)
    input_shape: tuple = ()
    out_hw: tuple = ()


def noisy_layer_forward(X, K, cfg: ConvLayerConfig,
                        rng: np.random.Generator | None = None) -> ConvTrace:
    """One layer pass: exact product, estimation noise, cap, sampling, pool.

    The noise on entry (p, q) scales with the norms of region row p and
    kernel column q; M is the largest such product, which turns the
    per-entry scale into the layer-wide error bound.  Zero eps draws
    nothing from the rng, so exact and noisy configurations with eps=0
    consume identical random streams.
    """
    X = _check_tensor3(X)
    K = _check_tensor4(K)
    A = expand_im2col(X, K.shape[:2])
    F = kernel_matrix(K)
    Y = A @ F
    h_out = X.shape[0] - K.shape[0] + 1
    w_out = X.shape[1] - K.shape[1] + 1

    row_norms = np.linalg.norm(A, axis=1)
    col_norms = np.linalg.norm(F, axis=0)
    M = float(row_norms.max() * col_norms.max()) if Y.size else 0.0

    noisy = Y
    error_bound = 0.0
    if cfg.mode == "noisy" and cfg.eps > 0:
        if rng is None:
            raise ValueError("noisy mode with eps > 0 requires an rng")
        scale = 2.0 * cfg.eps * np.outer(row_norms, col_norms)
        if cfg.noise_kind == "gaussian":
            noisy = Y + scale * rng.standard_normal(Y.shape)
            # the cap is 1-Lipschitz, so the surrogate stays within the
            # hard bound plus a six-sigma tail allowance
            error_bound = 2.0 * M * cfg.eps + 6.0 * 2.0 * M * cfg.eps
        else:
            noisy = Y + scale * rng.uniform(-1.0, 1.0, Y.shape)
            error_bound = 2.0 * M * cfg.eps

    activated = cap_relu(noisy, cfg.cap)
    if cfg.sigma_ratio is not None or cfg.nu is not None:
        if rng is None:
            raise ValueError("importance sampling requires an rng")
        imp = (ImportanceConfig(threshold=cfg.nu) if cfg.nu is not None
               else ImportanceConfig(sigma_ratio=cfg.sigma_ratio))
        kept = importance_sample(activated.ravel(), imp, rng)
        kept = kept.reshape(activated.shape)
    else:
        kept = activated
    sampled = kept != 0.0

    tensor = _rows_to_tensor(kept, h_out, w_out)
    pooled, selected = pool(tensor, cfg.pool, cfg.pool_kind)
    return ConvTrace(
        output=pooled,
        M=M,
        error_bound=error_bound,
        A=A,
        kernel=K.copy(),
        pre_activation=noisy,
        activated=kept,
        sampled=sampled,
        selected=selected,
        input_shape=X.shape,
        out_hw=(h_out, w_out),
    )


def _tensor_to_rows(T) -> np.ndarray:
    h, w, d = T.shape
    return T.transpose(1, 0, 2).reshape(h * w, d)


def backprop(trace: ConvTrace, grad_output, cfg: ConvLayerConfig,
             rng: np.random.Generator | None = None,
             lr: float = 1.0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of the loss for the kernel and the input, plus the updated
    kernel.

    The upstream gradient is first routed through the pooling mask, then
    zeroed wherever the forward pass never sampled a value, then masked by
    the rectifier's active band.  What remains flows through the two exact
    matrix products.  The kernel step adds Gaussian noise scaled by delta
    times the gradient norm, modeling an update computed from estimated
    quantities.
    """
    if trace.A is None:
        raise ValueError("trace is missing its forward state")
    grad_output = np.asarray(grad_output, dtype=float)
    if grad_output.shape != trace.output.shape:
        raise ValueError("gradient shape does not match the layer output")

    h_out, w_out = trace.out_hw
    depth = trace.output.shape[2]
    if cfg.pool_kind == "none" or cfg.pool == 1:
        grad_tensor = grad_output.copy()
    elif cfg.pool_kind == "max":
        grad_tensor = np.repeat(np.repeat(grad_output, cfg.pool, axis=0),
                                cfg.pool, axis=1)
        grad_tensor = np.where(trace.selected, grad_tensor, 0.0)
    else:
        grad_tensor = np.repeat(np.repeat(grad_output, cfg.pool, axis=0),
                                cfg.pool, axis=1) / float(cfg.pool ** 2)

    grad_Y = _tensor_to_rows(grad_tensor)
    grad_Y = np.where(trace.sampled, grad_Y, 0.0)
    grad_Y = grad_Y * cap_relu_grad(trace.pre_activation, cfg.cap)

    F = kernel_matrix(trace.kernel)
    grad_F = trace.A.T @ grad_Y
    kh, kw, d_in, d_out = trace.kernel.shape
    grad_kernel = grad_F.reshape(d_in, kw, kh, d_out).transpose(2, 1, 0, 3)

    grad_rows = grad_Y @ F.T
    grad_input = np.zeros(trace.input_shape)
    for p in range(grad_rows.shape[0]):
        i, j = p % h_out, p // h_out
        block = grad_rows[p].reshape(d_in, kw, kh).transpose(2, 1, 0)
        grad_input[i:i + kh, j:j + kw, :] += block

    step = grad_kernel
    if cfg.delta > 0:
        if rng is None:
            raise ValueError("delta > 0 requires an rng")
        norm = float(np.linalg.norm(grad_kernel))
        step = grad_kernel + cfg.delta * norm * rng.standard_normal(grad_kernel.shape)
    new_kernel = trace.kernel - lr * step
    return grad_kernel, grad_input, new_kernel


# ---------------------------------------------------------------------------
# Tensor files
# ---------------------------------------------------------------------------

def save_tensor(path, T) -> None:
    """Shape in a JSON sidecar, entries as row-major float64 binary."""
    T = np.asarray(T, dtype=float)
    base = Path(path)
    base.with_suffix(".json").write_text(
        json.dumps({"shape": list(T.shape), "dtype": "float64"}))
    base.with_suffix(".bin").write_bytes(np.ascontiguousarray(T).tobytes())


def load_tensor(path) -> np.ndarray:
    base = Path(path)
    meta = json.loads(base.with_suffix(".json").read_text())
    if meta.get("dtype") != "float64":
        raise ValueError(f"unsupported tensor dtype {meta.get('dtype')!r}")
    flat = np.frombuffer(base.with_suffix(".bin").read_bytes(), dtype=np.float64)
    return flat.reshape(meta["shape"]).copy()


# ---------------------------------------------------------------------------
# Toy two-layer classifier
# ---------------------------------------------------------------------------
# Small enough to train in seconds, deep enough to exercise every part of
# the layer: two convolutions with cap and sampling, one max pool, and a
# global average turning the last feature map into class scores.

def create_toy_classifier(rng: np.random.Generator, channels: int = 4,
                          n_classes: int = 2) -> dict:
    scale = 0.5
    return {
        "k1": scale * rng.standard_normal((3, 3, 1, channels)),
        "k2": scale * rng.standard_normal((2, 2, channels, n_classes)),
        "logit_gain": 8.0,
    }


def _toy_configs(cfg: ConvLayerConfig) -> tuple[ConvLayerConfig, ConvLayerConfig]:
    first = ConvLayerConfig(eps=cfg.eps, cap=cfg.cap, sigma_ratio=cfg.sigma_ratio,
                            nu=cfg.nu, pool=2, pool_kind="max", delta=cfg.delta,
                            mode=cfg.mode, noise_kind=cfg.noise_kind)
    second = ConvLayerConfig(eps=cfg.eps, cap=cfg.cap, sigma_ratio=cfg.sigma_ratio,
                             nu=cfg.nu, pool=1, pool_kind="none", delta=cfg.delta,
                             mode=cfg.mode, noise_kind=cfg.noise_kind)
    return first, second


def toy_forward(params: dict, image, cfg: ConvLayerConfig,
                rng: np.random.Generator | None = None):
    """Logits for one image plus the traces needed to train."""
    image = np.asarray(image, dtype=float)
    if image.ndim == 2:
        image = image[:, :, None]
    cfg1, cfg2 = _toy_configs(cfg)
    t1 = noisy_layer_forward(image, params["k1"], cfg1, rng)
    t2 = noisy_layer_forward(t1.output, params["k2"], cfg2, rng)
    logits = params["logit_gain"] * t2.output.mean(axis=(0, 1))
    return logits, (t1, t2)


def _toy_softmax(logits):
    e = np.exp(logits - logits.max())
    return e / e.sum()


def train_toy_classifier(params: dict, images, labels, cfg: ConvLayerConfig,
                         rng: np.random.Generator, epochs: int = 10,
                         lr: float = 0.5) -> dict:
    """Plain SGD on both kernels through the noisy layers."""
    images = np.asarray(images, dtype=float)
    labels = np.asarray(labels, dtype=int)
    cfg1, cfg2 = _toy_configs(cfg)
    history = {"loss": [], "accuracy": []}
    for _ in range(epochs):
        order = rng.permutation(len(images))
        losses = []
        hits = 0
        for row in order:
            logits, (t1, t2) = toy_forward(params, images[row], cfg, rng)
            p = _toy_softmax(logits)
            losses.append(-math.log(max(p[labels[row]], 1e-300)))
            hits += int(np.argmax(logits) == labels[row])
            dlogits = p.copy()
            dlogits[labels[row]] -= 1.0
            h2, w2 = t2.output.shape[:2]
            grad2 = np.broadcast_to(
                params["logit_gain"] * dlogits / (h2 * w2),
                t2.output.shape).copy()
            _, grad_mid, params["k2"] = backprop(t2, grad2, cfg2, rng, lr)
            _, _, params["k1"] = backprop(t1, grad_mid, cfg1, rng, lr)
        history["loss"].append(float(np.mean(losses)))
        history["accuracy"].append(hits / len(images))
    return history


def toy_predict(params: dict, images, cfg: ConvLayerConfig,
                rng: np.random.Generator | None = None) -> np.ndarray:
    return np.array([
        int(np.argmax(toy_forward(params, img, cfg, rng)[0]))
        for img in np.asarray(images, dtype=float)
    ])
