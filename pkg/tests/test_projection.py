import numpy as np
import pytest

from mdcontour import dataset as D
from mdcontour import projection as P


def _dataset(data, names=None):
    data = np.asarray(data, dtype=float)
    names = names or [f"c{i}" for i in range(data.shape[1])]
    return D.Dataset(names=names, data=data)


def eig3_characteristic(cov):
    """Eigen-decomposition of a symmetric 3x3 via its characteristic cubic.

    Independent oracle: trigonometric root formula for the cubic, then
    eigenvectors from cross products of (A - lambda I) rows.
    """
    a = np.asarray(cov, dtype=float)
    q = np.trace(a) / 3.0
    b = a - q * np.eye(3)
    p2 = np.trace(b @ b) / 6.0
    p = np.sqrt(max(p2, 0.0))
    if p < 1e-14:
        vals = np.array([q, q, q])
    else:
        detb = np.linalg.det(b / p)
        phi = np.arccos(np.clip(detb / 2.0, -1.0, 1.0)) / 3.0
        vals = q + 2.0 * p * np.cos(phi + np.array([0.0, -2.0, 2.0]) * np.pi / 3.0)
    vals = np.sort(vals)[::-1]
    vecs = []
    for lam in vals:
        m = a - lam * np.eye(3)
        candidates = [np.cross(m[i], m[j]) for i, j in ((0, 1), (0, 2), (1, 2))]
        v = max(candidates, key=lambda c: float(c @ c))
        n = np.linalg.norm(v)
        if n < 1e-12:
            # Repeated eigenvalue: any vector orthogonal to the others works.
            v = np.cross(vecs[0], [1.0, 0.0, 0.0])
            if np.linalg.norm(v) < 1e-6:
                v = np.cross(vecs[0], [0.0, 1.0, 0.0])
            n = np.linalg.norm(v)
        vecs.append(v / n)
    return vals, np.array(vecs)


def test_diagonal_covariance_axes():
    ds = _dataset([[2, 0], [-2, 0], [0, 1], [0, -1]])
    model, cloud = P.pca_project(ds)
    np.testing.assert_allclose(np.abs(model.axes[0]), [1, 0], atol=1e-12)
    np.testing.assert_allclose(np.abs(model.axes[1]), [0, 1], atol=1e-12)
    assert sorted(np.round(cloud.positions[:, 0], 9).tolist()) == [-2.0, 0.0, 0.0, 2.0]


def test_all_rows_identical_raises():
    ds = D.normalize(_dataset(np.ones((5, 3))))
    with pytest.raises(P.VarianceZero):
        P.pca_project(ds)


def test_planar_3d_matches_characteristic_polynomial_oracle():
    rng = np.random.default_rng(8)
    xy = rng.normal(size=(60, 2))
    data = np.column_stack([xy[:, 0], xy[:, 1], xy[:, 0] + xy[:, 1]])
    ds = D.normalize(_dataset(data))
    model, cloud = P.pca_project(ds)

    centered = ds.data - ds.data.mean(axis=0)
    cov = centered.T @ centered / (len(centered) - 1)
    vals, vecs = eig3_characteristic(cov)
    assert abs(vals[2]) < 1e-9  # points lie on a plane
    np.testing.assert_allclose(np.sort(model.eigenvalues), np.sort(vals[:2]), atol=1e-9)

    oracle_pos = centered @ vecs[:2].T
    ours = cloud.positions
    idx = rng.choice(len(ours), size=(40, 2))
    d_ours = np.hypot(*(ours[idx[:, 0]] - ours[idx[:, 1]]).T)
    d_oracle = np.hypot(*(oracle_pos[idx[:, 0]] - oracle_pos[idx[:, 1]]).T)
    np.testing.assert_allclose(d_ours, d_oracle, atol=1e-6)


def test_projected_variance_equals_eigenvalues(cars_dataset):
    model, cloud = P.pca_project(cars_dataset)
    var = cloud.positions.var(axis=0, ddof=1)
    np.testing.assert_allclose(var, model.eigenvalues, rtol=1e-6)


def test_axes_orthonormal(cars_dataset):
    model, _ = P.pca_project(cars_dataset)
    gram = model.axes @ model.axes.T
    np.testing.assert_allclose(gram, np.eye(2), atol=1e-9)
    assert model.eigenvalues[0] >= model.eigenvalues[1] >= 0


def test_row_permutation_invariance(cars_dataset):
    model, cloud = P.pca_project(cars_dataset)
    rng = np.random.default_rng(3)
    perm = rng.permutation(cars_dataset.row_count)
    shuffled = D.Dataset(
        names=cars_dataset.names,
        data=cars_dataset.data[perm],
        stats=cars_dataset.stats,
        constant=cars_dataset.constant,
        normalized=True,
    )
    model2, cloud2 = P.pca_project(shuffled)
    # Same sign convention, so positions agree up to the permutation.
    np.testing.assert_allclose(cloud2.positions, cloud.positions[perm], atol=1e-9)


def test_positions_inside_viewport(cars_dataset):
    _, cloud = P.pca_project(cars_dataset)
    x0, y0, x1, y1 = cloud.viewport
    assert np.all(cloud.positions[:, 0] >= x0) and np.all(cloud.positions[:, 0] <= x1)
    assert np.all(cloud.positions[:, 1] >= y0) and np.all(cloud.positions[:, 1] <= y1)
    assert len(cloud.positions) == cars_dataset.row_count
