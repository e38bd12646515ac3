"""Noisy estimators for inner products and squared distances.

Two noise models are provided.  The "distribution" mode runs the full
phase-estimation pipeline: encode the target as an amplitude, convert to a
phase, draw a readout from the exact phase-estimation outcome distribution
on a 2^n grid, and invert the chain to get back an estimate.  The
"gaussian" mode shortcuts all of that with additive Gaussian noise whose
scale tracks the product of the input norms, which is how the estimator
error actually behaves and is far cheaper when only the error statistics
matter.

Median boosting draws L independent estimates and returns their median;
L depends only on the failure budget and the per-copy success rate.
"""

import math
from dataclasses import dataclass

import numpy as np

# Per-copy success amplitude of the underlying estimation circuit.  Any
# alpha in (1/2, 1] works; this is the natural one for amplitude estimation.
ALPHA_DEFAULT = math.sqrt(8.0 / math.pi ** 2)

_MAX_QUBITS = 24


@dataclass(frozen=True)
class PhaseModel:
    """Precision register for phase readout: outcomes live on a 2^n grid."""

    n_qubits: int = 8

    def __post_init__(self):
        if not 1 <= self.n_qubits <= _MAX_QUBITS:
            raise ValueError(f"n_qubits must be in 1..{_MAX_QUBITS}, got {self.n_qubits}")

    @property
    def grid(self) -> int:
        return 1 << self.n_qubits


@dataclass(frozen=True)
class IPEConfig:
    """Knobs for the estimator pipeline.

    mode       -- "distribution" (phase-estimation readout) or "gaussian"
                  (additive noise of std epsilon * |v| * |w|)
    n_qubits   -- precision register size, distribution mode only
    epsilon    -- noise scale, gaussian mode only; 0 turns noise off and
                  consumes no randomness
    delta_prob -- failure budget for median boosting
    boost      -- "none" or "median"
    alpha      -- per-copy success amplitude used to size the median
    """

    mode: str = "distribution"
    n_qubits: int = 8
    epsilon: float = 0.01
    delta_prob: float = 0.01
    boost: str = "none"
    alpha: float = ALPHA_DEFAULT

    def __post_init__(self):
        if self.mode not in ("distribution", "gaussian"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.boost not in ("none", "median"):
            raise ValueError(f"unknown boost {self.boost!r}")
        if not 0.0 < self.delta_prob < 0.5:
            raise ValueError("delta_prob must lie in (0, 0.5)")
        if self.mode == "gaussian" and self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.mode == "distribution":
            PhaseModel(self.n_qubits)  # reuse the range check


def pe_distribution(omega: float, model: PhaseModel) -> np.ndarray:
    """Exact readout distribution over grid indices 0..2^n-1 for a phase.

    p(l) = sin^2(pi (2^n omega - l)) / (2^{2n} sin^2(pi (omega - l/2^n))).
    On the grid the formula is 0/0 and its continuous limit is a point
    mass; a phase within 1e-9 grid units of a grid point is snapped there,
    since the off-grid mass is O(1e-18) and below float resolution anyway.
    """
    if not 0.0 <= omega < 1.0:
        raise ValueError("omega must lie in [0, 1)")
    grid = model.grid
    scaled = omega * grid
    nearest = round(scaled)
    if abs(scaled - nearest) < 1e-9:
        p = np.zeros(grid)
        p[int(nearest) % grid] = 1.0
        return p
    u = scaled - np.arange(grid)
    # dividing before squaring keeps tiny sines from underflowing
    ratio = np.sin(np.pi * u) / (grid * np.sin(np.pi * u / grid))
    return ratio ** 2


def sample_phase(omega, model: PhaseModel, rng, size=None):
    """Draw grid-phase readouts l/2^n from the outcome distribution.

    Returns a scalar when size is None, else an ndarray of that shape.
    """
    p = pe_distribution(omega, model)
    ell = rng.choice(model.grid, size=size, p=p)
    out = ell / model.grid
    return float(out) if size is None else out


def median_copies(delta_prob: float, alpha: float = ALPHA_DEFAULT) -> int:
    """Number of independent copies a median needs to push the failure
    probability below delta_prob, given per-copy success amplitude alpha."""
    if not 0.0 < delta_prob < 1.0:
        raise ValueError("delta_prob must lie in (0, 1)")
    if not 0.5 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0.5, 1]")
    return math.ceil(math.log(1.0 / delta_prob) / (2.0 * (alpha - 0.5) ** 2))


def _norms(v, w):
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    nv = np.linalg.norm(v)
    nw = np.linalg.norm(w)
    if nv == 0.0 or nw == 0.0:
        raise ValueError("estimators need nonzero input vectors")
    return v, w, nv, nw


def _readout(amp: float, cfg: IPEConfig, rng, copies: int) -> np.ndarray:
    """Push an amplitude through the phase chain: amp -> omega -> sampled
    omega-bar -> recovered amplitude(s).  amp must lie in [0, 1]."""
    omega = math.asin(amp) / math.pi
    model = PhaseModel(cfg.n_qubits)
    p = pe_distribution(omega, model)
    ell = rng.choice(model.grid, size=copies, p=p)
    return np.sin(np.pi * ell / model.grid)


def estimate_inner_product(v, w, cfg: IPEConfig, rng) -> float:
    """Estimate (v, w).

    Distribution mode maps the normalized overlap to an amplitude
    a = (1 + <v^,w^>)/2, reads out the corresponding phase and returns
    |v| |w| (2 sin(pi omega-bar) - 1).  Gaussian mode adds
    N(0, (epsilon |v| |w|)^2) to the exact value.
    """
    v, w, nv, nw = _norms(v, w)
    exact = float(v @ w)
    copies = median_copies(cfg.delta_prob, cfg.alpha) if cfg.boost == "median" else 1
    if cfg.mode == "gaussian":
        if cfg.epsilon == 0.0:
            return exact  # noiseless: do not touch the rng
        draws = exact + cfg.epsilon * nv * nw * rng.standard_normal(copies)
        return float(np.median(draws))
    unit_dot = min(1.0, max(-1.0, exact / (nv * nw)))
    a_bar = _readout(0.5 * (1.0 + unit_dot), cfg, rng, copies)
    return float(np.median(nv * nw * (2.0 * a_bar - 1.0)))


def estimate_sq_distance(v, w, cfg: IPEConfig, rng) -> float:
    """Estimate |v - w|^2.

    Distribution mode reads out the amplitude p = (1 - <v^,w^>)/2 and
    returns |v|^2 + |w|^2 - 2 x-bar with x-bar the inner product recovered
    from the readout; a coinciding pair has p = 0, which sits on the grid
    and therefore returns 0 with certainty.  Gaussian mode adds
    N(0, (epsilon |v| |w|)^2) to the exact squared distance.
    """
    v, w, nv, nw = _norms(v, w)
    exact_dot = float(v @ w)
    copies = median_copies(cfg.delta_prob, cfg.alpha) if cfg.boost == "median" else 1
    if cfg.mode == "gaussian":
        d2 = nv * nv + nw * nw - 2.0 * exact_dot
        if cfg.epsilon == 0.0:
            return d2
        draws = d2 + cfg.epsilon * nv * nw * rng.standard_normal(copies)
        return float(np.median(draws))
    unit_dot = min(1.0, max(-1.0, exact_dot / (nv * nw)))
    p_bar = _readout(0.5 * (1.0 - unit_dot), cfg, rng, copies)
    x_bar = nv * nw * (1.0 - 2.0 * p_bar)
    return float(np.median(nv * nv + nw * nw - 2.0 * x_bar))
