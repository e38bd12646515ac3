"""Measurement-based recovery of classical vectors from state amplitudes.

Readout of a unit vector proceeds in two passes: a standard-basis pass that
estimates squared magnitudes from counts, and an interference pass against
the known candidate that votes on each entry's sign.  Both the max-norm and
the 2-norm variants share that machinery and differ only in shot budget.

importance_sample keeps the entries a sampling pass would actually see
(large ones surely, small ones by luck) and zeroes the rest.
signed_layer_estimate reads a whole layer output through one joint
distribution with an ancilla bit carrying the sign.
"""

import math
from dataclasses import dataclass

import numpy as np

_SHOT_CONSTANT = 36.0
_SIGN_VOTE_FACTOR = 0.4


@dataclass(frozen=True)
class TomographyConfig:
    delta: float = 0.1
    norm_mode: str = "linf"
    shots_override: float | None = None

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.norm_mode not in ("linf", "l2"):
            raise ValueError(f"unknown norm_mode {self.norm_mode!r}")


@dataclass(frozen=True)
class ImportanceConfig:
    """Keep-threshold nu, either given directly or derived from the
    sampling ratio sigma via nu = 1/sqrt(sigma * output_size)."""

    sigma_ratio: float | None = None
    threshold: float | None = None

    def __post_init__(self):
        if (self.sigma_ratio is None) == (self.threshold is None):
            raise ValueError("set exactly one of sigma_ratio, threshold")
        if self.sigma_ratio is not None and not 0.0 < self.sigma_ratio <= 1.0:
            raise ValueError("sigma_ratio must lie in (0, 1]")
        if self.threshold is not None and self.threshold <= 0.0:
            raise ValueError("threshold must be positive")

    def nu(self, output_size: int) -> float:
        if self.threshold is not None:
            return self.threshold
        return 1.0 / math.sqrt(self.sigma_ratio * output_size)


def linf_shots(d: int, delta: float) -> int:
    return math.ceil(_SHOT_CONSTANT * math.log(d) / delta ** 2)


def l2_shots(d: int, delta: float) -> int:
    return math.ceil(_SHOT_CONSTANT * d * math.log(d) / delta ** 2)


def _check_unit(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 1:
        raise ValueError("expected a nonempty 1-d vector")
    norm = np.linalg.norm(x)
    if abs(norm - 1.0) > 1e-6:
        raise ValueError("input must be a unit vector")
    return x / norm


def _two_pass_readout(x: np.ndarray, shots, rng) -> np.ndarray:
    """Magnitudes from standard-basis counts, signs from an interference
    pass; returns the renormalized signed estimate."""
    d = x.size
    if shots == math.inf:
        # infinite-shot limit: counts equal expectations exactly
        p = x * x
        q0 = 0.25 * (x + np.abs(x)) ** 2
        signs = np.where(q0 > _SIGN_VOTE_FACTOR * p, 1.0, -1.0)
        out = signs * np.abs(x)
    else:
        counts = rng.multinomial(shots, x * x / np.sum(x * x))
        p = counts / shots
        root = np.sqrt(p)
        q0 = 0.25 * (x + root) ** 2
        q1 = 0.25 * (x - root) ** 2
        # the two branches plus a sink form one joint distribution
        sink = max(0.0, 1.0 - q0.sum() - q1.sum())
        joint = np.concatenate([q0, q1, [sink]])
        votes = rng.multinomial(shots, joint / joint.sum())
        signs = np.where(votes[:d] > _SIGN_VOTE_FACTOR * shots * p, 1.0, -1.0)
        out = signs * root
    norm = np.linalg.norm(out)
    if norm > 0:
        out = out / norm
    if out[0] < 0:  # fix the global sign by the leading entry
        out = -out
    return out


def linf_tomography(x, delta: float, rng, shots_override=None) -> np.ndarray:
    """Recover a unit vector entrywise to about delta in max norm,
    using ceil(36 ln d / delta^2) readout shots per pass."""
    x = _check_unit(x)
    shots = linf_shots(x.size, delta) if shots_override is None else shots_override
    return _two_pass_readout(x, shots, rng)


def l2_tomography(x, delta: float, rng, shots_override=None) -> np.ndarray:
    """Recover a unit vector to about delta in 2-norm, using
    ceil(36 d ln d / delta^2) readout shots per pass."""
    x = _check_unit(x)
    shots = l2_shots(x.size, delta) if shots_override is None else shots_override
    return _two_pass_readout(x, shots, rng)


def tomography(x, cfg: TomographyConfig, rng) -> np.ndarray:
    run = linf_tomography if cfg.norm_mode == "linf" else l2_tomography
    return run(x, cfg.delta, rng, shots_override=cfg.shots_override)


def importance_sample(values, cfg: ImportanceConfig, rng) -> np.ndarray:
    """Zero out entries a square-amplitude sampling pass would miss.

    Entries whose normalized amplitude clears the threshold are always
    kept; the rest survive only if at least one of the ceil(1/nu^2)
    samples lands on them.  Kept entries keep their exact value.
    """
    values = np.asarray(values, dtype=float)
    if np.any(values < 0):
        raise ValueError("values must be nonnegative")
    norm = np.linalg.norm(values)
    if norm == 0.0:
        return np.zeros_like(values)
    amps = values / norm
    nu = cfg.nu(values.size)
    shots = math.ceil(1.0 / nu ** 2)
    hits = rng.multinomial(shots, amps * amps)
    keep = (amps >= nu) | (hits > 0)
    return np.where(keep, values, 0.0)


def layer_outcome_distribution(y) -> tuple[np.ndarray, np.ndarray, float]:
    """Joint readout distribution for a layer output y with an ancilla
    sign bit: Pr[b, j] = (y_j +- 1/sqrt(n))^2 / 4, plus a sink."""
    y = np.asarray(y, dtype=float)
    n = y.size
    sq = float(y @ y)
    if sq > 1.0 + 1e-9:
        raise ValueError("layer output must have norm at most 1")
    inv = 1.0 / math.sqrt(n)
    q0 = 0.25 * (y + inv) ** 2
    q1 = 0.25 * (y - inv) ** 2
    sink = max(0.0, 1.0 - q0.sum() - q1.sum())
    return q0, q1, sink


def signed_layer_estimate(y, shots: int, rng) -> np.ndarray:
    """Estimate every entry of a layer output, signs included, from one
    joint sampling pass.  Majority ancilla bit per entry gives the sign;
    the winning branch's frequency gives the magnitude.  Entries never
    observed come back 0.
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    q0, q1, sink = layer_outcome_distribution(y)
    joint = np.concatenate([q0, q1, [sink]])
    counts = rng.multinomial(shots, joint / joint.sum())
    c0 = counts[:n]
    c1 = counts[n:2 * n]
    inv = 1.0 / math.sqrt(n)
    out = np.zeros(n)
    seen = (c0 + c1) > 0
    pos = seen & (c0 >= c1)
    neg = seen & (c0 < c1)
    out[pos] = 2.0 * np.sqrt(c0[pos] / shots) - inv
    out[neg] = -(2.0 * np.sqrt(c1[neg] / shots) - inv)
    return out
