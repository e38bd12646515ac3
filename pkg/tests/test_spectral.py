import numpy as np
import pytest

from qmldesk import clustering as clu
from qmldesk import spectral as sp
from qmldesk.datasets import concentric_circles
from qmldesk.seeding import stream


def random_adjacency(rng, n, p=0.4):
    upper = (rng.random((n, n)) < p).astype(float)
    A = np.triu(upper, k=1)
    A = A + A.T
    return A


def path_graph(n):
    A = np.zeros((n, n))
    for i in range(n - 1):
        A[i, i + 1] = A[i + 1, i] = 1.0
    return A


# --- adjacency ------------------------------------------------------------

def test_adjacency_thresholds_at_d_min():
    pts = np.array([[0.0, 0.0], [0.5, 0.0], [3.0, 0.0]])
    A = sp.build_adjacency(pts, d_min=1.0)
    assert A[0, 1] == 1.0 and A[1, 0] == 1.0
    assert A[0, 2] == 0.0 and A[1, 2] == 0.0
    assert np.all(np.diag(A) == 0.0)


def test_adjacency_diagonal_stays_zero_despite_zero_self_distance():
    pts = np.array([[1.0, 1.0], [1.0, 1.0]])
    A = sp.build_adjacency(pts, d_min=0.5)
    assert np.all(np.diag(A) == 0.0)
    # coincident points are joined
    assert A[0, 1] == 1.0


def test_adjacency_noise_requires_rng():
    pts = np.eye(3)
    with pytest.raises(ValueError):
        sp.build_adjacency(pts, d_min=1.0, eps_dist=0.1)


def test_adjacency_borderline_edge_flips_with_noise():
    # two unit vectors whose exact squared distance equals d_min^2: the
    # estimated distance lands on either side with roughly even odds
    d_min = 1.0
    cos_a = 1.0 - d_min**2 / 2.0
    sin_a = np.sqrt(1.0 - cos_a**2)
    pts = np.array([[1.0, 0.0], [cos_a, sin_a]])
    rng = stream(314, "spectral", "flip")
    hits = sum(
        sp.build_adjacency(pts, d_min, eps_dist=0.1, rng=rng)[0, 1] == 1.0
        for _ in range(1000)
    )
    assert 0.05 < hits / 1000 < 0.95


def test_adjacency_symmetric_under_noise():
    rng = stream(7, "spectral", "sym")
    pts = rng.standard_normal((12, 3))
    A = sp.build_adjacency(pts, d_min=1.5, eps_dist=0.2, rng=rng)
    assert np.array_equal(A, A.T)
    assert set(np.unique(A)) <= {0.0, 1.0}


def test_percentile_distance_two_points():
    pts = np.array([[0.0, 0.0], [3.0, 4.0]])
    for q in (1.0, 50.0, 100.0):
        assert sp.percentile_distance(pts, q) == pytest.approx(5.0)
    with pytest.raises(ValueError):
        sp.percentile_distance(pts[:1])


# --- incidence ------------------------------------------------------------

def test_incidence_columns_on_three_node_path():
    A = path_graph(3)
    B, Bn = sp.build_incidence(A, eps_B=0.0, strict=False)
    # columns ordered (0,1), (0,2), (1,2)
    assert B.shape == (3, 3)
    np.testing.assert_array_equal(B[:, 0], [1.0, -1.0, 0.0])
    np.testing.assert_array_equal(B[:, 1], [0.0, 0.0, 0.0])
    np.testing.assert_array_equal(B[:, 2], [0.0, 1.0, -1.0])


def test_incidence_gram_equals_degree_minus_adjacency():
    for trial in range(20):
        rng = stream(11, "spectral", "gram", trial)
        n = int(rng.integers(3, 21))
        A = random_adjacency(rng, n)
        if np.any(A.sum(axis=1) == 0):
            continue
        B, _ = sp.build_incidence(A)
        D = np.diag(A.sum(axis=1))
        np.testing.assert_allclose(B @ B.T, D - A, atol=1e-12)


def test_incidence_rows_unit_after_normalization():
    rng = stream(3, "spectral", "rows")
    A = random_adjacency(rng, 10)
    _, Bn = sp.build_incidence(A, eps_B=0.1, strict=False)
    np.testing.assert_allclose(np.linalg.norm(Bn, axis=1), 1.0, atol=1e-12)


def test_incidence_gram_matches_materialized_product():
    for trial in range(10):
        rng = stream(5, "spectral", "dual", trial)
        n = int(rng.integers(2, 15))
        A = random_adjacency(rng, n)
        eps_B = float(rng.uniform(0.0, 0.5))
        B, _ = sp.build_incidence(A, eps_B, strict=False)
        np.testing.assert_allclose(sp.incidence_gram(A, eps_B), B @ B.T,
                                   rtol=0.0, atol=1e-10)


def test_incidence_isolated_node_strict_raises():
    A = np.zeros((3, 3))
    A[0, 1] = A[1, 0] = 1.0
    with pytest.raises(ValueError):
        sp.build_incidence(A)
    B, Bn = sp.build_incidence(A, strict=False)
    np.testing.assert_array_equal(Bn[2], np.zeros(3))


def test_incidence_cap_enforced():
    n = sp.INCIDENCE_NODE_CAP + 1
    with pytest.raises(ValueError, match="incidence_gram"):
        sp.build_incidence(np.zeros((n, n)))


# --- laplacian ------------------------------------------------------------

def test_laplacian_two_node_edge():
    A = path_graph(2)
    _, Bn = sp.build_incidence(A)
    np.testing.assert_allclose(sp.laplacian(Bn), [[1.0, -1.0], [-1.0, 1.0]],
                               atol=1e-15)


def test_laplacian_matches_classical_normalization():
    # at eps_B = 0 the construction reduces to D^{-1/2} (D - A) D^{-1/2}
    for trial in range(10):
        rng = stream(23, "spectral", "classical", trial)
        A = random_adjacency(rng, 12)
        if np.any(A.sum(axis=1) == 0):
            continue
        _, Bn = sp.build_incidence(A)
        d = A.sum(axis=1)
        expected = (np.diag(d) - A) / np.sqrt(np.outer(d, d))
        np.testing.assert_allclose(sp.laplacian(Bn), expected, atol=1e-12)


def test_laplacian_routes_agree():
    rng = stream(29, "spectral", "routes")
    A = random_adjacency(rng, 15)
    for eps_B in (0.0, 0.05, 0.3):
        _, Bn = sp.build_incidence(A, eps_B, strict=False)
        via_B = sp.laplacian(Bn)
        via_gram = sp._laplacian_from_gram(sp.incidence_gram(A, eps_B),
                                           strict=False)
        np.testing.assert_allclose(via_B, via_gram, atol=1e-10)


def test_laplacian_positive_semidefinite():
    for trial in range(10):
        rng = stream(31, "spectral", "psd", trial)
        A = random_adjacency(rng, 14)
        L = sp._laplacian_from_gram(sp.incidence_gram(A, 0.2), strict=False)
        lam = np.linalg.eigvalsh(L)
        assert lam.min() >= -1e-9


def test_laplacian_disjoint_triangles_have_double_zero():
    A = np.zeros((6, 6))
    for block in (range(3), range(3, 6)):
        for i in block:
            for j in block:
                if i != j:
                    A[i, j] = 1.0
    _, Bn = sp.build_incidence(A)
    lam = np.linalg.eigvalsh(sp.laplacian(Bn))
    assert np.sum(np.abs(lam) < 1e-10) == 2


def test_normalized_incidence_mu_bounded_by_node_count():
    rng = stream(37, "spectral", "mu")
    A = random_adjacency(rng, 12)
    _, Bn = sp.build_incidence(A, eps_B=0.1, strict=False)
    mu = clu.matrix_mu(Bn)
    n = A.shape[0]
    assert mu <= np.sqrt(n * (n - 1) / 2) + 1e-9
    assert mu <= n


# --- projection -----------------------------------------------------------

def laplacian_for(rng, n=12, eps_B=0.0):
    A = random_adjacency(rng, n)
    return sp._laplacian_from_gram(sp.incidence_gram(A, eps_B), strict=False)


def test_projection_matches_dense_eigensolver_subspace():
    rng = stream(41, "spectral", "proj")
    L = laplacian_for(rng)
    k = 3
    proj = sp.project_laplacian(L, k)
    lam, vecs = np.linalg.eigh(L)
    reference = vecs[:, np.argsort(lam)[:k]]
    P_ours = proj.embedding @ proj.embedding.T
    P_ref = reference @ reference.T
    assert np.abs(P_ours - P_ref).max() < 1e-8


def test_projection_is_idempotent():
    rng = stream(43, "spectral", "idem")
    L = laplacian_for(rng, n=16)
    proj = sp.project_laplacian(L, 4)
    P = proj.embedding @ proj.embedding.T
    assert np.abs(P @ P - P).max() < 1e-10
    np.testing.assert_allclose(P @ proj.embedding, proj.embedding, atol=1e-10)


def test_projection_row_norm_identity():
    # the norm of each reconstructed row equals nu_eff times the square root
    # of that node's zero-outcome probability, the quantity the register
    # exposes without any eigenvector readout
    rng = stream(47, "spectral", "identity")
    L = laplacian_for(rng, n=14, eps_B=0.1)
    proj = sp.project_laplacian(L, 4, eps_lambda=0.3,
                                rng=stream(47, "spectral", "identity", "noise"))
    np.testing.assert_allclose(proj.row_norms,
                               proj.nu_eff * np.sqrt(proj.p_zero), atol=1e-12)


def test_projection_noise_requires_rng_and_zero_noise_is_exact():
    rng = stream(53, "spectral", "exact")
    L = laplacian_for(rng)
    with pytest.raises(ValueError):
        sp.project_laplacian(L, 2, eps_lambda=0.5)
    proj = sp.project_laplacian(L, 2)
    # modulo clipping of eigenvalues that are negative only by rounding
    np.testing.assert_allclose(proj.noisy_eigenvalues,
                               np.clip(proj.eigenvalues, 0.0, None),
                               atol=1e-14)


def test_projection_selection_modes():
    rng = stream(59, "spectral", "modes")
    L = laplacian_for(rng)
    exact = sp.project_laplacian(L, 3, select_on="exact")
    lam = np.sort(np.linalg.eigvalsh(L))
    np.testing.assert_allclose(np.sort(exact.eigenvalues[exact.selected]),
                               lam[:3], atol=1e-12)
    # huge eigenvalue noise with noisy ranking still returns k indices
    noisy = sp.project_laplacian(L, 3, eps_lambda=5.0,
                                 rng=stream(59, "x"), select_on="noisy")
    assert len(noisy.selected) == 3


def test_projection_nu_threshold():
    rng = stream(61, "spectral", "nu")
    L = laplacian_for(rng)
    proj = sp.project_laplacian(L, 2, nu=10.0)
    assert len(proj.selected) == L.shape[0]
    assert proj.nu_eff == 10.0
    with pytest.raises(ValueError):
        sp.project_laplacian(L, 2, nu=-1.0)
    with pytest.raises(ValueError):
        sp.project_laplacian(L, L.shape[0] + 1)


# --- end-to-end -----------------------------------------------------------

def test_build_graph_bundle_consistency():
    rng = stream(67, "spectral", "bundle")
    pts = rng.standard_normal((20, 2))
    bundle = sp.build_graph(pts, d_min=1.0, eps_B=0.1, strict=False)
    assert bundle.B is not None and bundle.Bn is not None
    np.testing.assert_allclose(bundle.L, sp.laplacian(bundle.Bn), atol=1e-10)


def test_spectral_cluster_circles_noiseless():
    pts, labels = concentric_circles(stream(71, "spectral", "circles"),
                                     n_samples=300)
    model, report = sp.spectral_cluster(pts, sp.SpectralConfig(k=2),
                                        stream(71, "spectral", "run"))
    assert clu.evaluate(model, labels)["accuracy"] == 1.0
    assert report["n_points"] == 300
    assert report["embedding_normalized"]


def test_spectral_cluster_small_eps_B_matches_noiseless():
    pts, labels = concentric_circles(stream(73, "spectral", "eps"),
                                     n_samples=300)
    base = sp.SpectralConfig(k=2)
    perturbed = sp.SpectralConfig(k=2, eps_B=1e-4)
    acc = []
    for cfg in (base, perturbed):
        model, _ = sp.spectral_cluster(pts, cfg, stream(73, "spectral", "cmp"))
        acc.append(clu.evaluate(model, labels)["accuracy"])
    assert abs(acc[0] - acc[1]) < 0.01


def test_spectral_cluster_separated_blobs_both_regimes():
    rng = stream(79, "spectral", "blobs")
    centers = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]]) + 5.0
    pts = np.vstack([c + 0.3 * rng.standard_normal((30, 2)) for c in centers])
    labels = np.repeat(np.arange(3), 30)
    exact_cfg = sp.SpectralConfig(k=3)
    noisy_cfg = sp.SpectralConfig(k=3, eps_dist=0.01, eps_B=0.05,
                                  eps_lambda=0.1, delta=0.1, restarts=3)
    for cfg in (exact_cfg, noisy_cfg):
        model, _ = sp.spectral_cluster(pts, cfg, stream(79, "spectral", "fit"))
        assert clu.evaluate(model, labels)["accuracy"] == 1.0


def test_spectral_config_validation():
    with pytest.raises(ValueError):
        sp.SpectralConfig(k=0)
    with pytest.raises(ValueError):
        sp.SpectralConfig(k=2, eps_B=-0.1)
    with pytest.raises(ValueError):
        sp.SpectralConfig(k=2, d_min=0.0)
    with pytest.raises(ValueError):
        sp.SpectralConfig(k=2, d_min_percentile=0.0)
    with pytest.raises(ValueError):
        sp.SpectralConfig(k=2, select_on="both")
    with pytest.raises(ValueError):
        sp.SpectralConfig(k=2, restarts=0)
