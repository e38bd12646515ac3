"""Graph-based clustering through the spectrum of a noisy normalized Laplacian.

The pipeline mirrors the standard construction: threshold pairwise distances
into an adjacency graph, form the signed edge-incidence matrix, normalize its
rows, take the Gram matrix as the Laplacian, then cluster the rows of the
low-eigenvalue projection.  Three noise channels can be switched on
independently: distance estimation error on the edges, a floor value replacing
zeros of the incidence matrix, and additive error on the singular values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from qmldesk.clustering import Dataset, KMeansConfig, best_of_restarts, delta_kmeans

__all__ = [
    "GraphBundle",
    "SpectralConfig",
    "SpectralProjection",
    "percentile_distance",
    "build_adjacency",
    "build_incidence",
    "incidence_gram",
    "laplacian",
    "project_laplacian",
    "spectral_cluster",
]

# Above this many nodes the dense incidence matrix (N(N-1)/2 columns) is not
# materialized; the Gram identity below gives the same Laplacian in O(N^2).
INCIDENCE_NODE_CAP = 2000


@dataclass(frozen=True)
class GraphBundle:
    """Adjacency, incidence (dense forms optional), and normalized Laplacian."""

    A: np.ndarray
    B: np.ndarray | None
    Bn: np.ndarray | None
    L: np.ndarray


@dataclass(frozen=True)
class SpectralConfig:
    k: int
    d_min: float | None = None
    d_min_percentile: float = 10.0
    eps_dist: float = 0.0
    eps_B: float = 0.0
    eps_lambda: float = 0.0
    nu: float | None = None
    delta: float = 0.0
    seed: int | None = None
    select_on: str = "exact"
    restarts: int = 1

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.restarts < 1:
            raise ValueError("restarts must be at least 1")
        for name in ("eps_dist", "eps_B", "eps_lambda", "delta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.d_min is not None and self.d_min <= 0:
            raise ValueError("d_min must be positive")
        if not 0 < self.d_min_percentile <= 100:
            raise ValueError("d_min_percentile must lie in (0, 100]")
        if self.select_on not in ("exact", "noisy"):
            raise ValueError("select_on must be 'exact' or 'noisy'")


@dataclass(frozen=True)
class SpectralProjection:
    """Low-eigenvalue slice of the Laplacian plus readout bookkeeping.

    ``embedding`` holds the selected eigenvectors as columns; its rows are the
    points handed to the clustering stage.  ``row_norms`` are row norms of the
    reconstructed rank-limited Laplacian, and satisfy
    row_norms[i] = nu_eff * sqrt(p_zero[i]).
    """

    embedding: np.ndarray
    eigenvalues: np.ndarray
    noisy_eigenvalues: np.ndarray
    selected: np.ndarray
    nu_eff: float
    p_zero: np.ndarray
    row_norms: np.ndarray


def _pairwise_sq_distances(points: np.ndarray) -> np.ndarray:
    sq = np.sum(points * points, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * points @ points.T
    return np.maximum(d2, 0.0)


def percentile_distance(points: np.ndarray, q: float = 10.0) -> float:
    """The q-th percentile of pairwise distances, the default edge threshold."""
    points = np.asarray(points, dtype=float)
    if len(points) < 2:
        raise ValueError("need at least two points")
    iu = np.triu_indices(len(points), k=1)
    dists = np.sqrt(_pairwise_sq_distances(points)[iu])
    return float(np.percentile(dists, q))


def build_adjacency(
    points: np.ndarray,
    d_min: float,
    eps_dist: float = 0.0,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """0/1 adjacency: an edge wherever the estimated squared distance fits.

    With eps_dist > 0, each unordered pair's squared distance receives one
    Gaussian perturbation scaled by eps_dist times the product of the two
    point norms, so borderline edges flip stochastically.
    """
    points = np.asarray(points, dtype=float)
    if d_min <= 0:
        raise ValueError("d_min must be positive")
    n = len(points)
    d2 = _pairwise_sq_distances(points)
    if eps_dist > 0:
        if rng is None:
            raise ValueError("eps_dist > 0 requires an rng")
        norms = np.linalg.norm(points, axis=1)
        iu = np.triu_indices(n, k=1)
        scale = eps_dist * norms[iu[0]] * norms[iu[1]]
        upper = d2[iu] + scale * rng.standard_normal(len(scale))
        d2 = np.zeros_like(d2)
        d2[iu] = upper
        d2 = d2 + d2.T
    adjacency = (d2 <= d_min * d_min).astype(float)
    np.fill_diagonal(adjacency, 0.0)
    return adjacency


def build_incidence(
    adjacency: np.ndarray,
    eps_B: float = 0.0,
    strict: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Signed edge-incidence matrix and its row-normalized form.

    Column (p, q) with p < q carries +a_pq at row p and -a_pq at row q; every
    other entry holds eps_B.  One column exists per unordered pair whether or
    not the edge is present.
    """
    A = np.asarray(adjacency, dtype=float)
    n = A.shape[0]
    if n > INCIDENCE_NODE_CAP:
        raise ValueError(
            f"incidence matrix materialization is capped at {INCIDENCE_NODE_CAP} nodes; "
            "use incidence_gram instead"
        )
    pairs = np.transpose(np.triu_indices(n, k=1))
    B = np.full((n, len(pairs)), eps_B)
    for col, (p, q) in enumerate(pairs):
        B[p, col] = A[p, q]
        B[q, col] = -A[p, q]
    norms = np.linalg.norm(B, axis=1)
    if np.any(norms == 0):
        if strict:
            raise ValueError("isolated node: zero incidence row cannot be normalized")
        safe = np.where(norms == 0, 1.0, norms)
        return B, B / safe[:, None]
    return B, B / norms[:, None]


def incidence_gram(adjacency: np.ndarray, eps_B: float = 0.0) -> np.ndarray:
    """Gram matrix B B^T of the signed incidence, without materializing B.

    For rows i != j the shared column contributes -a_ij^2, the eps_B floor
    pairs with the signed entries of each row, and the remaining
    M - 2N + 3 columns touch neither node; the same count per row gives the
    diagonal.  Matches build_incidence exactly for every eps_B.
    """
    A = np.asarray(adjacency, dtype=float)
    n = A.shape[0]
    pair_count = n * (n - 1) // 2
    upper = np.triu(A, k=1)
    signed_sum = upper.sum(axis=1) - upper.sum(axis=0)
    gram = -(A * A) + eps_B * (signed_sum[:, None] + signed_sum[None, :])
    gram += (pair_count - 2 * n + 3) * eps_B * eps_B
    np.fill_diagonal(gram, (A * A).sum(axis=1) + (pair_count - n + 1) * eps_B * eps_B)
    return gram


def laplacian(normalized_incidence: np.ndarray) -> np.ndarray:
    """Normalized Laplacian as the Gram matrix of unit incidence rows."""
    Bn = np.asarray(normalized_incidence, dtype=float)
    L = Bn @ Bn.T
    L = 0.5 * (L + L.T)
    np.fill_diagonal(L, 1.0)
    return L


def _laplacian_from_gram(gram: np.ndarray, strict: bool = True) -> np.ndarray:
    diag = np.diag(gram).copy()
    if np.any(diag <= 0):
        if strict:
            raise ValueError("isolated node: zero incidence row cannot be normalized")
        diag = np.where(diag <= 0, 1.0, diag)
    r = np.sqrt(diag)
    L = gram / np.outer(r, r)
    L = 0.5 * (L + L.T)
    np.fill_diagonal(L, np.where(np.diag(gram) > 0, 1.0, 0.0))
    return L


def project_laplacian(
    L: np.ndarray,
    k: int,
    eps_lambda: float = 0.0,
    nu: float | None = None,
    rng: np.random.Generator | None = None,
    select_on: str = "exact",
) -> SpectralProjection:
    """Slice the Laplacian down to its low-eigenvalue eigenvectors.

    Eigenvalues are reported both exactly and after perturbing their square
    roots with additive Gaussian noise of scale eps_lambda (clipped at zero).
    Selection keeps the k lowest, or everything at most nu when nu is given.
    By default the selection reads the exact spectrum, so eigenvalue noise
    distorts the reported magnitudes without silently swapping subspaces;
    select_on="noisy" applies the literal noisy ordering instead.
    """
    L = np.asarray(L, dtype=float)
    n = L.shape[0]
    if k > n:
        raise ValueError("k cannot exceed the number of nodes")
    lam, vecs = np.linalg.eigh(L)
    sigma = np.sqrt(np.clip(lam, 0.0, None))
    if eps_lambda > 0:
        if rng is None:
            raise ValueError("eps_lambda > 0 requires an rng")
        sigma_noisy = np.clip(sigma + eps_lambda * rng.standard_normal(n), 0.0, None)
    else:
        sigma_noisy = sigma
    lam_noisy = sigma_noisy * sigma_noisy

    ranking = lam if select_on == "exact" else lam_noisy
    if nu is None:
        selected = np.argsort(ranking, kind="stable")[:k]
        selected = np.sort(selected)
    else:
        selected = np.flatnonzero(ranking <= nu)
        if len(selected) == 0:
            raise ValueError("eigenvalue threshold nu selected nothing")
    embedding = vecs[:, selected]
    lam_sel = lam_noisy[selected]

    nu_eff = float(nu) if nu is not None else max(float(lam_sel.max()), 1e-12)
    p_zero = (embedding * embedding) @ (lam_sel * lam_sel) / (nu_eff * nu_eff)
    reconstructed = (embedding * lam_sel) @ embedding.T
    row_norms = np.linalg.norm(reconstructed, axis=1)
    return SpectralProjection(
        embedding=embedding,
        eigenvalues=lam,
        noisy_eigenvalues=lam_noisy,
        selected=selected,
        nu_eff=nu_eff,
        p_zero=p_zero,
        row_norms=row_norms,
    )


def build_graph(
    points: np.ndarray,
    d_min: float | None = None,
    d_min_percentile: float = 10.0,
    eps_dist: float = 0.0,
    eps_B: float = 0.0,
    rng: np.random.Generator | None = None,
    strict: bool = True,
) -> GraphBundle:
    """Run the graph-construction stages, materializing B only when small."""
    points = np.asarray(points, dtype=float)
    if d_min is None:
        d_min = percentile_distance(points, d_min_percentile)
    A = build_adjacency(points, d_min, eps_dist, rng)
    gram = incidence_gram(A, eps_B)
    L = _laplacian_from_gram(gram, strict=strict)
    B = Bn = None
    if len(points) <= INCIDENCE_NODE_CAP:
        B, Bn = build_incidence(A, eps_B, strict=strict)
    return GraphBundle(A=A, B=B, Bn=Bn, L=L)


def spectral_cluster(
    points: np.ndarray,
    cfg: SpectralConfig,
    rng: np.random.Generator | None = None,
) -> tuple:
    """Full pipeline: graph, Laplacian spectrum, then slack clustering.

    A single code path serves both regimes: with every noise parameter at
    zero the stages are exact and the clustering degenerates to plain Lloyd
    iteration, so the classical algorithm is the noiseless special case.
    """
    points = np.asarray(points, dtype=float)
    n = len(points)
    if n < cfg.k:
        raise ValueError("need at least k points")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)

    d_min = cfg.d_min if cfg.d_min is not None else percentile_distance(points, cfg.d_min_percentile)
    A = build_adjacency(points, d_min, cfg.eps_dist, rng)
    L = _laplacian_from_gram(incidence_gram(A, cfg.eps_B))
    projection = project_laplacian(L, cfg.k, cfg.eps_lambda, cfg.nu, rng, cfg.select_on)

    # Each embedding row is the readout of one projected state, so rescaling
    # every row to unit length matches what the register actually holds and
    # keeps the clustering stage focused on direction rather than leverage.
    rows = projection.embedding.copy()
    norms = np.linalg.norm(rows, axis=1)
    normalized = bool(norms.min() > 1e-12)
    if normalized:
        rows = rows / norms[:, None]
    data = Dataset.from_rows(rows, min_norm_normalize=False)

    def run(dataset, gen):
        return delta_kmeans(dataset, KMeansConfig(k=cfg.k), delta=cfg.delta, rng=gen)

    if cfg.restarts > 1:
        model = best_of_restarts(data, run, cfg.restarts, rng)
    else:
        model = run(data, rng)
    report = {
        "n_points": n,
        "d_min": float(d_min),
        "n_edges": int(A.sum()) // 2,
        "eigenvalues_exact": [float(v) for v in projection.eigenvalues[: max(8, cfg.k)]],
        "eigenvalues_noisy": [float(v) for v in projection.noisy_eigenvalues[: max(8, cfg.k)]],
        "selected": [int(i) for i in projection.selected],
        "nu_eff": projection.nu_eff,
        "embedding_normalized": normalized,
        "embedding_eta": data.eta,
        "iterations": model.iteration,
        "rss": model.rss_history[-1] if model.rss_history else None,
    }
    return model, report
