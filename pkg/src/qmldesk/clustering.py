"""Lloyd's k-means, its noise-tolerant delta variant, and the simulated
quantum pipeline built on noisy distance estimation plus noisy centroid
readout.

Conventions shared by every routine here:
  tie-breaks     -- always the lowest index, so zero-noise runs are
                    reproducible bit for bit
  empty cluster  -- its centroid is reseeded to a uniformly random data
                    point (clusters are assumed large, but runs disagree)
  zero noise     -- noise draws are skipped entirely, not just scaled by
                    zero, so the rng stream stays aligned with the exact
                    algorithm
"""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .estimators import IPEConfig, estimate_sq_distance
from .seeding import stream


# --- data containers ------------------------------------------------------

@dataclass(frozen=True)
class Dataset:
    """Row-major sample matrix with cached norms.

    normalized_min_norm records that rows were rescaled so the smallest
    row norm is 1; the quantum pipeline requires that convention because
    its error bounds are stated relative to the largest squared norm.
    """

    V: np.ndarray
    row_norms: np.ndarray
    normalized_min_norm: bool = False

    def __post_init__(self):
        if self.V.ndim != 2 or self.V.shape[0] < 1:
            raise ValueError("V must be a nonempty N x d matrix")
        norms = np.linalg.norm(self.V, axis=1)
        if not np.allclose(norms, self.row_norms, atol=1e-12):
            raise ValueError("row_norms disagree with V")
        if self.normalized_min_norm and abs(norms.min() - 1.0) > 1e-9:
            raise ValueError("normalized_min_norm set but min row norm != 1")

    @classmethod
    def from_rows(cls, V, min_norm_normalize: bool = False) -> "Dataset":
        V = np.asarray(V, dtype=float)
        if min_norm_normalize:
            norms = np.linalg.norm(V, axis=1)
            smallest = norms.min()
            if smallest == 0.0:
                raise ValueError("cannot min-norm normalize data with a zero row")
            V = V / smallest
        return cls(V, np.linalg.norm(V, axis=1), min_norm_normalize)

    @property
    def n_samples(self) -> int:
        return self.V.shape[0]

    @property
    def n_features(self) -> int:
        return self.V.shape[1]

    @property
    def eta(self) -> float:
        """Largest squared row norm over smallest squared row norm."""
        top = float(self.row_norms.max()) ** 2
        bottom = float(self.row_norms.min()) ** 2
        return math.inf if bottom == 0.0 else top / bottom


@dataclass
class ClusterModel:
    centroids: np.ndarray
    labels: np.ndarray
    iteration: int
    rss_history: list = field(default_factory=list)

    def __post_init__(self):
        if not np.all(np.isfinite(self.centroids)):
            raise ValueError("centroids must be finite")
        if self.labels.size and self.labels.max() >= self.centroids.shape[0]:
            raise ValueError("label id out of range")

    @property
    def k(self) -> int:
        return self.centroids.shape[0]


@dataclass(frozen=True)
class KMeansConfig:
    k: int
    tau: float = 1e-4
    max_iter: int = 100
    init: str = "kpp"
    seed: int | None = None

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.tau < 0:
            raise ValueError("tau must be nonnegative")
        if self.init not in ("random", "kpp"):
            raise ValueError(f"unknown init {self.init!r}")


@dataclass(frozen=True)
class QMeansConfig:
    """Noise knobs for the simulated quantum pipeline: eps1 scales the
    distance estimates, eps3 the centroid norm readout, eps4 the centroid
    direction readout; delta widens the convergence threshold."""

    delta: float = 0.0
    eps1: float = 0.0
    eps3: float = 0.0
    eps4: float = 0.0
    eta_override: float | None = None
    noise_mode: str = "gaussian"
    n_qubits: int = 8

    def __post_init__(self):
        if min(self.delta, self.eps1, self.eps3, self.eps4) < 0:
            raise ValueError("noise parameters must be nonnegative")
        if self.noise_mode not in ("gaussian", "distribution"):
            raise ValueError(f"unknown noise_mode {self.noise_mode!r}")


# --- shared helpers -------------------------------------------------------

def _sq_distances(V: np.ndarray, C: np.ndarray) -> np.ndarray:
    d2 = (np.sum(V * V, axis=1)[:, None] + np.sum(C * C, axis=1)[None, :]
          - 2.0 * V @ C.T)
    return np.maximum(d2, 0.0)


def _init_centroids(data: Dataset, cfg: KMeansConfig, rng) -> np.ndarray:
    if cfg.init == "random":
        idx = rng.choice(data.n_samples, size=cfg.k, replace=False)
    else:
        idx = kmeanspp_init(data, cfg.k, rng)
    return data.V[np.asarray(idx)].copy()


def _update_means(data: Dataset, labels: np.ndarray, k: int, rng) -> np.ndarray:
    centroids = np.empty((k, data.n_features))
    for j in range(k):
        members = labels == j
        if members.any():
            centroids[j] = data.V[members].mean(axis=0)
        else:
            centroids[j] = data.V[int(rng.integers(data.n_samples))]
    return centroids


def _mean_movement(old: np.ndarray, new: np.ndarray) -> float:
    return float(np.mean(np.linalg.norm(new - old, axis=1)))


def rss(data: Dataset, model: ClusterModel) -> float:
    """Sum of squared distances from each point to its assigned centroid."""
    diffs = data.V - model.centroids[model.labels]
    return float(np.sum(diffs * diffs))


# --- classical k-means ----------------------------------------------------

def lloyd_kmeans(data: Dataset, cfg: KMeansConfig, rng=None) -> ClusterModel:
    """Plain alternating assignment / mean update.  Stops when the average
    centroid movement drops to tau or max_iter is hit."""
    if cfg.k > data.n_samples:
        raise ValueError("more clusters than samples")
    if rng is None:
        rng = stream(0 if cfg.seed is None else cfg.seed, "clustering", "lloyd")
    centroids = _init_centroids(data, cfg, rng)
    history = []
    iteration = 0
    for iteration in range(1, cfg.max_iter + 1):
        labels = np.argmin(_sq_distances(data.V, centroids), axis=1)
        new_centroids = _update_means(data, labels, cfg.k, rng)
        moved = _mean_movement(centroids, new_centroids)
        centroids = new_centroids
        history.append(float(np.sum((data.V - centroids[labels]) ** 2)))
        if moved <= cfg.tau:
            break
    labels = np.argmin(_sq_distances(data.V, centroids), axis=1)
    return ClusterModel(centroids, labels, iteration, history)


# --- delta k-means --------------------------------------------------------

def _pick_within_slack(d2: np.ndarray, delta: float, rng) -> np.ndarray:
    """Per row, pick uniformly among columns whose squared distance is
    within delta of the row minimum."""
    best = d2.min(axis=1, keepdims=True)
    eligible = np.abs(d2 - best) <= delta
    counts = eligible.sum(axis=1)
    ranks = (rng.random(d2.shape[0]) * counts).astype(int)
    # index of the (rank+1)-th eligible column in each row
    running = np.cumsum(eligible, axis=1)
    return np.argmax((running == ranks[:, None] + 1) & eligible, axis=1)


def _noisy_mean_shift(center: np.ndarray, delta: float, rng) -> np.ndarray:
    # isotropic Gaussian, rejected until it lands strictly inside the
    # delta/2 ball, so the advertised bound can never be violated
    scale = delta / (4.0 * math.sqrt(center.size))
    while True:
        g = scale * rng.standard_normal(center.size)
        if np.linalg.norm(g) < delta / 2.0:
            return center + g


def delta_kmeans(data: Dataset, cfg: KMeansConfig, delta: float, rng=None) -> ClusterModel:
    """Noise-tolerant k-means: any centroid whose squared distance is
    within delta of the best is an acceptable assignment, and updated
    centroids wobble inside a delta/2 ball around the true mean.  At
    delta=0 this collapses to lloyd_kmeans, draw for draw."""
    if cfg.k > data.n_samples:
        raise ValueError("more clusters than samples")
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if rng is None:
        rng = stream(0 if cfg.seed is None else cfg.seed, "clustering", "delta")
    centroids = _init_centroids(data, cfg, rng)
    history = []
    iteration = 0
    threshold = cfg.tau + delta / 2.0
    for iteration in range(1, cfg.max_iter + 1):
        d2 = _sq_distances(data.V, centroids)
        if delta > 0:
            labels = _pick_within_slack(d2, delta, rng)
        else:
            labels = np.argmin(d2, axis=1)
        new_centroids = _update_means(data, labels, cfg.k, rng)
        if delta > 0:
            for j in range(cfg.k):
                new_centroids[j] = _noisy_mean_shift(new_centroids[j], delta, rng)
        moved = _mean_movement(centroids, new_centroids)
        centroids = new_centroids
        history.append(float(np.sum((data.V - centroids[labels]) ** 2)))
        if moved <= threshold:
            break
    d2 = _sq_distances(data.V, centroids)
    if delta > 0:
        labels = _pick_within_slack(d2, delta, rng)
    else:
        labels = np.argmin(d2, axis=1)
    return ClusterModel(centroids, labels, iteration, history)


# --- simulated q-means ----------------------------------------------------

def _noisy_sq_distances(data: Dataset, centroids: np.ndarray,
                        qcfg: QMeansConfig, rng) -> np.ndarray:
    d2 = _sq_distances(data.V, centroids)
    if qcfg.eps1 == 0.0:
        return d2
    if qcfg.noise_mode == "gaussian":
        scale = qcfg.eps1 * np.outer(data.row_norms,
                                     np.linalg.norm(centroids, axis=1))
        return d2 + scale * rng.standard_normal(d2.shape)
    cfg = IPEConfig(mode="distribution", n_qubits=qcfg.n_qubits)
    out = np.empty_like(d2)
    for i in range(d2.shape[0]):
        for j in range(centroids.shape[0]):
            c = centroids[j]
            if np.linalg.norm(c) == 0.0:
                out[i, j] = d2[i, j]  # no state to interfere against
            else:
                out[i, j] = estimate_sq_distance(data.V[i], c, cfg, rng)
    return out


def _read_out_centroid(center: np.ndarray, eta: float,
                       qcfg: QMeansConfig, rng) -> np.ndarray:
    """Simulate reading a centroid back from its state: a relative norm
    error of scale eps3 and a direction error of scale eps4, with the
    total displacement clamped to the advertised sqrt(eta)(eps3+eps4)."""
    bound = math.sqrt(eta) * (qcfg.eps3 + qcfg.eps4)
    norm = np.linalg.norm(center)
    if norm == 0.0:
        return center
    unit = center / norm
    noisy_norm = norm * (1.0 + qcfg.eps3 * rng.uniform(-1.0, 1.0))
    kick = rng.standard_normal(center.size)
    kick /= np.linalg.norm(kick)
    direction = unit + qcfg.eps4 * rng.random() * kick
    read = noisy_norm * direction
    shift = read - center
    size = np.linalg.norm(shift)
    if size > bound:
        read = center + shift * (bound / size)
        size = bound
    assert size <= bound + 1e-9
    return read


def qmeans(data: Dataset, cfg: KMeansConfig, qcfg: QMeansConfig, rng=None) -> ClusterModel:
    """k-means with every quantum readout replaced by its noise model:
    distances through the estimator chain (eps1), assignment by argmin,
    exact mean update, then a noisy centroid readout (eps3, eps4).  With
    all noise at zero this reproduces lloyd_kmeans exactly."""
    if cfg.k > data.n_samples:
        raise ValueError("more clusters than samples")
    if not data.normalized_min_norm:
        raise ValueError("qmeans expects min-norm normalized data")
    if rng is None:
        rng = stream(0 if cfg.seed is None else cfg.seed, "clustering", "qmeans")
    eta = data.eta if qcfg.eta_override is None else qcfg.eta_override
    centroids = _init_centroids(data, cfg, rng)
    history = []
    iteration = 0
    threshold = cfg.tau + qcfg.delta / 2.0
    readout_on = qcfg.eps3 > 0 or qcfg.eps4 > 0
    for iteration in range(1, cfg.max_iter + 1):
        labels = np.argmin(_noisy_sq_distances(data, centroids, qcfg, rng), axis=1)
        new_centroids = _update_means(data, labels, cfg.k, rng)
        if readout_on:
            for j in range(cfg.k):
                new_centroids[j] = _read_out_centroid(new_centroids[j], eta, qcfg, rng)
        moved = _mean_movement(centroids, new_centroids)
        centroids = new_centroids
        history.append(float(np.sum((data.V - centroids[labels]) ** 2)))
        if moved <= threshold:
            break
    labels = np.argmin(_noisy_sq_distances(data, centroids, qcfg, rng), axis=1)
    return ClusterModel(centroids, labels, iteration, history)


def best_of_restarts(data: Dataset, runner, restarts: int, rng) -> ClusterModel:
    """Run a clustering routine several times and keep the lowest-RSS
    model.  The widened stop rule of the noisy algorithms freezes bad
    initializations in place instead of grinding past them, so restart
    selection is how those runs reach their good optimum in practice.

    runner: callable (data, rng) -> ClusterModel.  Restarts consume the
    given stream sequentially, so results are reproducible.
    """
    if restarts < 1:
        raise ValueError("restarts must be at least 1")
    best = None
    best_score = math.inf
    for _ in range(restarts):
        model = runner(data, rng)
        score = rss(data, model)
        if score < best_score:
            best, best_score = model, score
    return best


# --- seeding --------------------------------------------------------------

def kmeanspp_init(data: Dataset, k: int, rng, quantum: bool = False,
                  eps1: float = 0.0, noise_mode: str = "gaussian",
                  n_qubits: int = 8) -> np.ndarray:
    """Careful seeding: each new seed is drawn with probability
    proportional to its squared distance to the seeds chosen so far.  The
    quantum variant sees those squared distances through the eps1 noise
    model first."""
    n = data.n_samples
    if k > n:
        raise ValueError("more seeds than samples")
    chosen = [int(rng.integers(n))]
    qcfg = QMeansConfig(eps1=eps1, noise_mode=noise_mode, n_qubits=n_qubits)
    while len(chosen) < k:
        if quantum and eps1 > 0:
            d2 = _noisy_sq_distances(data, data.V[chosen], qcfg, rng)
        else:
            d2 = _sq_distances(data.V, data.V[chosen])
        weights = np.maximum(d2.min(axis=1), 0.0)
        total = weights.sum()
        if total == 0.0:
            remaining = np.setdiff1d(np.arange(n), chosen)
            chosen.append(int(rng.choice(remaining)))
            continue
        chosen.append(int(rng.choice(n, p=weights / total)))
    return np.array(chosen)


# --- data-dependent parameters --------------------------------------------

@dataclass(frozen=True)
class DataParams:
    eta: float
    mu: float
    frobenius: float
    spectral_norm: float
    kappa: float
    kappa_tau: float | None = None
    tail_frobenius: float | None = None


def _sparsity_functional(A: np.ndarray, p: float) -> float:
    """max over rows of the p-th power of the entrywise p-norm; at p=0
    this counts the nonzeros of the densest row."""
    if p == 0.0:
        return float(np.max(np.count_nonzero(A, axis=1)))
    return float(np.max(np.sum(np.abs(A) ** p, axis=1)))


def matrix_mu(A: np.ndarray, grid: int = 101) -> float:
    """Scaling factor for block-encoded matrix arithmetic: the best of the
    Frobenius norm and a family of sparsity-weighted row/column norms
    swept over an interpolation parameter."""
    best = np.linalg.norm(A)
    for p in np.linspace(0.0, 1.0, grid):
        s_row = _sparsity_functional(A, 2.0 * p)
        s_col = _sparsity_functional(A.T, 2.0 * (1.0 - p))
        best = min(best, math.sqrt(s_row * s_col))
    return float(best)


def data_params(V, eps_tau: float | None = None, rank: int | None = None) -> DataParams:
    """Everything the cost model wants to know about a matrix.

    eta compares extreme squared row norms; mu is the block-encoding
    scale; kappa the condition number (inf when rank-deficient).  With
    eps_tau set, singular values below eps_tau * frobenius / sqrt(rank)
    are discarded: kappa_tau is the condition number of what survives and
    tail_frobenius the mass thrown away.
    """
    V = np.asarray(V, dtype=float)
    if not np.any(V):
        raise ValueError("parameters are undefined for the zero matrix")
    norms = np.linalg.norm(V, axis=1)
    eta = math.inf if norms.min() == 0.0 else float((norms.max() / norms.min()) ** 2)
    fro = float(np.linalg.norm(V))
    sing = np.linalg.svd(V, compute_uv=False)
    cutoff = max(V.shape) * np.finfo(float).eps * sing[0]
    kappa = math.inf if sing[-1] <= cutoff else float(sing[0] / sing[-1])
    kappa_tau = None
    tail = None
    if eps_tau is not None:
        if rank is None or rank < 1:
            raise ValueError("eps_tau needs a positive target rank")
        tau = eps_tau * fro / math.sqrt(rank)
        kept = sing[sing >= tau]
        kappa_tau = float(sing[0] / kept[-1]) if kept.size else math.inf
        tail = float(np.linalg.norm(sing[sing < tau]))
    return DataParams(eta=eta, mu=matrix_mu(V), frobenius=fro,
                      spectral_norm=float(sing[0]), kappa=kappa,
                      kappa_tau=kappa_tau, tail_frobenius=tail)


# --- clusterability diagnostics -------------------------------------------

def well_clusterable_check(V, centroids, xi: float, beta: float,
                           lambda_frac: float) -> dict:
    """Three-part structural check: centroids pairwise at least xi apart,
    at least a lambda fraction of points within beta of their centroid,
    and the inequality tying those to the norm spread eta.  Margins are
    positive where the condition holds."""
    if min(xi, beta, lambda_frac) <= 0:
        raise ValueError("parameters must be positive")
    V = np.asarray(V, dtype=float)
    centroids = np.asarray(centroids, dtype=float)
    norms = np.linalg.norm(V, axis=1)
    eta = float((norms.max() / norms.min()) ** 2)
    k = centroids.shape[0]
    pair_d = [float(np.linalg.norm(centroids[a] - centroids[b]))
              for a, b in itertools.combinations(range(k), 2)]
    sep_margin = (min(pair_d) if pair_d else math.inf) - xi
    nearest = np.sqrt(_sq_distances(V, centroids).min(axis=1))
    frac = float(np.mean(nearest <= beta))
    conc_margin = frac - lambda_frac
    lhs = 4.0 * math.sqrt(eta) * math.sqrt(lambda_frac * beta ** 2
                                           + (1.0 - lambda_frac) * 4.0 * eta)
    rhs = xi ** 2 - 2.0 * math.sqrt(eta) * beta
    window_margin = rhs - lhs
    margins = {"separation": sep_margin, "concentration": conc_margin,
               "window": window_margin}
    return {"holds": all(m >= 0 for m in margins.values()), "margins": margins,
            "eta": eta}


# --- evaluation -----------------------------------------------------------

def _best_label_matching(confusion: np.ndarray) -> float:
    k = confusion.shape[0]
    total = confusion.sum()
    if k <= 8:
        best = max(sum(confusion[j, perm[j]] for j in range(k))
                   for perm in itertools.permutations(range(k)))
    else:
        # greedy: repeatedly take the largest remaining cell
        work = confusion.astype(float).copy()
        best = 0
        for _ in range(k):
            j, t = np.unravel_index(np.argmax(work), work.shape)
            best += work[j, t]
            work[j, :] = -1
            work[:, t] = -1
    return float(best) / float(total)


def _match_centroids(centroids: np.ndarray, reference: np.ndarray) -> float:
    k = centroids.shape[0]
    cost = _sq_distances(centroids, reference)
    if k <= 8:
        best = min(sum(cost[j, perm[j]] for j in range(k))
                   for perm in itertools.permutations(range(k)))
    else:
        work = cost.copy()
        best = 0.0
        for _ in range(k):
            j, t = np.unravel_index(np.argmin(work), work.shape)
            best += work[j, t]
            work[j, :] = np.inf
            work[:, t] = np.inf
    return math.sqrt(best / k)


def evaluate(model: ClusterModel, truth_labels, data: Dataset | None = None,
             reference_centroids=None) -> dict:
    """Label-permutation-invariant accuracy, plus RSS when the data is
    supplied and centroid RMS error when reference centroids are."""
    truth = np.asarray(truth_labels)
    if truth.size != model.labels.size:
        raise ValueError("label arrays differ in length")
    width = int(max(model.k, truth.max() + 1))
    confusion = np.zeros((width, width), dtype=np.int64)
    np.add.at(confusion, (model.labels, truth), 1)
    out = {"accuracy": _best_label_matching(confusion)}
    if data is not None:
        out["rss"] = rss(data, model)
    if reference_centroids is not None:
        out["rmsec"] = _match_centroids(model.centroids,
                                        np.asarray(reference_centroids, dtype=float))
    return out
