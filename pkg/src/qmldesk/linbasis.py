"""Unary-basis circuit simulation.

An n-wire register restricted to the span of the weight-1 basis states
e_0 .. e_{n-1} ("one-hot" states) behaves like an n-dimensional real
vector of amplitudes. Two-wire beam-splitter rotations (RBS gates) act as
Givens rotations on that vector, which makes the restricted simulation
linear in n instead of exponential.

Main pieces:

* ``UnaryState`` / ``RBSGate`` / ``rbs_apply``: the restricted simulator.
* ``loader_angles`` / ``load_vector``: turn a unit vector into a gate
  cascade (sequential "diagonal" layout or log-depth "parallel" tree)
  that prepares its unary encoding from the ground state e_0.
* ``measure_mitigated``: shot sampling with a discard bucket for
  non-unary outcomes, mirroring post-selection on hardware runs.
* ``unary_inner_product``: the loader/adjoint-loader circuit whose first
  amplitude is the normalized inner product.
* ``dense_unitary`` / ``dense_apply``: a full 2^n oracle used by tests to
  check that the restricted simulator is exact.

Conventions: wire i is "above" wire j when i < j. A rotation by theta on
(i, j) sends amps[i] -> cos(theta)*amps[i] - sin(theta)*amps[j] and
amps[j] -> sin(theta)*amps[i] + cos(theta)*amps[j]; equivalently e_i
gains +sin(theta) toward e_j. Swapping the wire order negates the angle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "UnaryState",
    "RBSGate",
    "LoaderPlan",
    "MeasureResult",
    "rbs_apply",
    "loader_angles",
    "loader_gates",
    "load_vector",
    "measure_mitigated",
    "unary_inner_product",
    "dense_unitary",
    "dense_apply",
    "unary_index",
]

_NORM_ATOL = 1e-9
_NORM_ERROR_TOL = 1e-6
_TAIL_EPS = 1e-12
DENSE_MAX_WIRES = 12


@dataclass(frozen=True)
class UnaryState:
    """Amplitudes over the n unary basis states, plus discarded mass.

    ``discarded`` is the probability weight sitting on non-unary
    outcomes; the restricted gates never touch it, measurement routes it
    to a reject bucket.
    """

    amps: np.ndarray
    discarded: float = 0.0

    def __post_init__(self):
        amps = np.asarray(self.amps, dtype=float)
        object.__setattr__(self, "amps", amps)
        if amps.ndim != 1 or amps.size < 1:
            raise ValueError("amps must be a nonempty 1-d array")
        if self.discarded < -_NORM_ATOL:
            raise ValueError("discarded mass must be nonnegative")
        total = float(amps @ amps) + self.discarded
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"state not normalized: |amps|^2 + discarded = {total}")

    @property
    def n(self) -> int:
        return self.amps.size

    @staticmethod
    def ground(n: int) -> "UnaryState":
        amps = np.zeros(n)
        amps[0] = 1.0
        return UnaryState(amps)


@dataclass(frozen=True)
class RBSGate:
    """Planar rotation between wires i and j (i taken as the upper wire)."""

    theta: float
    i: int
    j: int

    def __post_init__(self):
        if self.i == self.j:
            raise ValueError("RBS gate needs two distinct wires")
        if self.i < 0 or self.j < 0:
            raise ValueError("negative wire index")


def rbs_apply(state: UnaryState, gate: RBSGate) -> UnaryState:
    """Apply one rotation; all other amplitudes and the discard mass stay."""
    n = state.n
    if gate.i >= n or gate.j >= n:
        raise IndexError(f"gate wires ({gate.i},{gate.j}) out of range for n={n}")
    c, s = math.cos(gate.theta), math.sin(gate.theta)
    amps = state.amps.copy()
    ai, aj = amps[gate.i], amps[gate.j]
    amps[gate.i] = c * ai - s * aj
    amps[gate.j] = s * ai + c * aj
    return UnaryState(amps, state.discarded)


def _apply_gates(state: UnaryState, gates) -> UnaryState:
    for g in gates:
        state = rbs_apply(state, g)
    return state


# ---------------------------------------------------------------------------
# Data loaders
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LoaderPlan:
    """Angles preparing a unit vector from e_0 under a fixed layout."""

    layout: str  # "diagonal" | "parallel"
    angles: np.ndarray  # d-1 radians
    source_norm: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "angles", np.asarray(self.angles, dtype=float))
        if self.layout not in ("diagonal", "parallel"):
            raise ValueError(f"unknown loader layout {self.layout!r}")
        if self.source_norm <= 0:
            raise ValueError("source_norm must be positive")

    @property
    def dim(self) -> int:
        return self.angles.size + 1


def _check_unit(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 1:
        raise ValueError("loader input must be a nonempty 1-d vector")
    norm = float(np.linalg.norm(x))
    if abs(norm - 1.0) > _NORM_ERROR_TOL:
        raise ValueError(f"loader input must be unit norm, got {norm}")
    return x


def _parallel_splits(d: int) -> list[tuple[int, int, int]]:
    """Breadth-first (lo, mid, hi) splits of the balanced loader tree."""
    splits = []
    queue = [(0, d)]
    while queue:
        lo, hi = queue.pop(0)
        if hi - lo < 2:
            continue
        mid = lo + (hi - lo) // 2
        splits.append((lo, mid, hi))
        queue.append((lo, mid))
        queue.append((mid, hi))
    return splits


def loader_angles(x, layout: str = "diagonal") -> LoaderPlan:
    """Angles whose cascade maps e_0 to the unary encoding of unit x.

    Diagonal layout: theta_0 = arccos(x_0), then
    theta_k = arccos(x_k / prod_{m<k} sin(theta_m)); once the running
    product of sines drops below 1e-12 the remaining mass is exhausted
    and all later angles are 0. The last angle comes from atan2 of the
    final coordinate pair, which is the same recursion extended to carry
    the sign of x_{d-1} (a plain arccos can only produce a nonnegative
    trailing amplitude).

    Parallel layout: a balanced binary tree over wire ranges; each node
    splits its range's mass between the two halves, so the circuit has
    log depth. Both layouts prepare identical amplitudes.
    """
    x = _check_unit(x)
    d = x.size
    if d == 1:
        if x[0] < 0:
            raise ValueError("cannot load (-1,): the ground state fixes the global sign")
        return LoaderPlan(layout, np.zeros(0))

    angles = np.zeros(d - 1)
    if layout == "diagonal":
        sin_prod = 1.0
        for k in range(d - 2):
            if sin_prod < _TAIL_EPS:
                break  # remaining angles stay 0
            angles[k] = math.acos(max(-1.0, min(1.0, x[k] / sin_prod)))
            sin_prod *= math.sin(angles[k])
        if sin_prod >= _TAIL_EPS:
            angles[d - 2] = math.atan2(x[d - 1], x[d - 2])
    elif layout == "parallel":
        splits = _parallel_splits(d)
        sq = x * x
        for idx, (lo, mid, hi) in enumerate(splits):
            # A singleton side contributes its signed value, an inner side
            # its nonnegative mass; signs therefore enter exactly once.
            left = x[lo] if mid - lo == 1 else math.sqrt(float(np.sum(sq[lo:mid])))
            right = x[mid] if hi - mid == 1 else math.sqrt(float(np.sum(sq[mid:hi])))
            if abs(left) < _TAIL_EPS and abs(right) < _TAIL_EPS:
                continue
            angles[idx] = math.atan2(right, left)
    else:
        raise ValueError(f"unknown loader layout {layout!r}")
    return LoaderPlan(layout, angles)


def loader_gates(plan: LoaderPlan) -> list[RBSGate]:
    """Gate sequence realizing the plan, in application order."""
    d = plan.dim
    if plan.layout == "diagonal":
        return [RBSGate(plan.angles[k], k, k + 1) for k in range(d - 1)]
    splits = _parallel_splits(d)
    return [RBSGate(plan.angles[idx], lo, mid) for idx, (lo, mid, _) in enumerate(splits)]


def load_vector(x, layout: str = "diagonal") -> UnaryState:
    """Run the loader circuit; the resulting amplitudes equal x."""
    plan = loader_angles(x, layout)
    return _apply_gates(UnaryState.ground(plan.dim), loader_gates(plan))


# ---------------------------------------------------------------------------
# Measurement
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MeasureResult:
    counts: np.ndarray  # per unary outcome, retained shots only
    discarded_count: int
    shots: int

    @property
    def retained(self) -> int:
        return self.shots - self.discarded_count

    @property
    def frequencies(self) -> np.ndarray:
        if self.retained == 0:
            return np.zeros_like(self.counts, dtype=float)
        return self.counts / self.retained


def measure_mitigated(state: UnaryState, shots: int, rng: np.random.Generator) -> MeasureResult:
    """Sample outcomes; shots landing outside the unary sector are dropped.

    Reported frequencies are over retained shots only, the mitigation
    used on hardware: throw away every readout whose bit pattern is not
    one-hot.
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    p = np.append(state.amps ** 2, max(state.discarded, 0.0))
    p = np.clip(p, 0.0, None)
    p /= p.sum()
    raw = rng.multinomial(shots, p)
    return MeasureResult(counts=raw[:-1], discarded_count=int(raw[-1]), shots=shots)


def unary_inner_product(v, w, shots: int, rng: np.random.Generator,
                        signed: bool = False) -> float:
    """Estimate <v, w> / (|v| |w|) from the loader / adjoint-loader circuit.

    Unsigned mode measures the first unary outcome, whose probability is
    the squared normalized inner product, and returns its square root
    (sign lost). Signed mode runs the ancilla-controlled variant whose
    success amplitude squares to a = (1 + <v,w>)/2 and returns 2a_hat - 1.
    """
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    nv, nw = np.linalg.norm(v), np.linalg.norm(w)
    if nv == 0 or nw == 0:
        raise ValueError("inner-product circuit needs nonzero vectors")
    if shots < 1:
        raise ValueError("shots must be >= 1")

    # Loader of v, then the adjoint loader of w: the amplitude left on
    # e_0 is exactly the normalized inner product.
    state = load_vector(v / nv)
    undo = [RBSGate(-g.theta, g.i, g.j) for g in reversed(loader_gates(loader_angles(w / nw)))]
    ip = float(_apply_gates(state, undo).amps[0])
    if abs(ip) > 1.0 - 1e-12:
        ip = math.copysign(1.0, ip)  # exact overlap: certainty, not a coin flip

    if signed:
        a = 0.5 * (1.0 + ip)  # success probability of the controlled variant
        a_hat = rng.binomial(shots, min(max(a, 0.0), 1.0)) / shots
        return 2.0 * a_hat - 1.0
    p0 = min(ip * ip, 1.0)
    freq = rng.binomial(shots, p0) / shots
    return math.sqrt(freq)


# ---------------------------------------------------------------------------
# Dense oracle (full Hilbert space, small n only)
# ---------------------------------------------------------------------------

def unary_index(i: int, n: int) -> int:
    """Basis index of e_i with wire 0 as the most significant bit."""
    return 1 << (n - 1 - i)


def dense_apply(gates, n: int, psi: np.ndarray) -> np.ndarray:
    """Exact 2^n-dimensional application of a gate list."""
    if n > DENSE_MAX_WIRES:
        raise ValueError(f"dense oracle capped at n={DENSE_MAX_WIRES} wires")
    psi = np.array(psi, dtype=float)
    if psi.size != 1 << n:
        raise ValueError("state dimension mismatch")
    for g in gates:
        if g.i >= n or g.j >= n:
            raise IndexError("gate wire out of range")
        bi, bj = unary_index(g.i, n), unary_index(g.j, n)
        idx = np.arange(1 << n)
        # Index pairs differing only on the two wires: i carries the 1.
        sel10 = (idx & bi > 0) & (idx & bj == 0)
        idx10 = idx[sel10]
        idx01 = idx10 ^ (bi | bj)
        c, s = math.cos(g.theta), math.sin(g.theta)
        a10 = psi[idx10].copy()
        a01 = psi[idx01].copy()
        psi[idx10] = c * a10 - s * a01
        psi[idx01] = s * a10 + c * a01
    return psi


def dense_unitary(gates, n: int) -> np.ndarray:
    """Full 2^n x 2^n matrix of the circuit (columns are basis images)."""
    dim = 1 << n
    U = np.zeros((dim, dim))
    for col in range(dim):
        e = np.zeros(dim)
        e[col] = 1.0
        U[:, col] = dense_apply(gates, n, e)
    return U
