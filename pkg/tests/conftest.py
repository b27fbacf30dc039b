import numpy as np
import pytest

from mdcontour import dataset as ds_mod
from mdcontour import mesh as mesh_mod


def make_cars_like(rows: int = 300, seed: int = 11) -> tuple[list[str], np.ndarray]:
    """Synthetic 7-dimension dataset shaped like the classic car table:
    a few correlated continuous columns plus two discrete ones (heavy
    overplot in the projection, like the real thing)."""
    rng = np.random.default_rng(seed)
    cyl = rng.choice([3, 4, 5, 6, 8], size=rows, p=[0.02, 0.5, 0.02, 0.26, 0.2])
    disp = cyl * 40 + rng.normal(0, 25, rows)
    hp = disp * 0.55 + rng.normal(0, 12, rows)
    weight = 1600 + disp * 4.5 + rng.normal(0, 180, rows)
    accel = 28 - hp * 0.08 + rng.normal(0, 1.6, rows)
    mpg = 48 - weight * 0.008 + rng.normal(0, 2.5, rows)
    year = rng.integers(70, 83, rows)
    names = ["mpg", "cylinders", "horsepower", "weight", "acceleration", "year", "origin"]
    origin = rng.choice([1, 2, 3], size=rows, p=[0.62, 0.18, 0.2])
    data = np.column_stack([mpg, cyl, hp, weight, accel, year, origin]).astype(float)
    return names, data


def write_csv(path, names, data):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(names) + "\n")
        for row in data:
            fh.write(",".join(f"{v:.6g}" for v in row) + "\n")
    return path


@pytest.fixture(scope="session")
def cars_csv(tmp_path_factory):
    names, data = make_cars_like()
    return write_csv(tmp_path_factory.mktemp("data") / "cars.csv", names, data)


@pytest.fixture(scope="session")
def cars_dataset(cars_csv):
    return ds_mod.normalize(ds_mod.load_csv(cars_csv, skip_non_numeric=True))


@pytest.fixture(scope="session")
def small_mesh():
    rng = np.random.default_rng(42)
    pts = rng.uniform(0.0, 10.0, size=(40, 2))
    return mesh_mod.delaunay(pts, seed=0)


def brute_force_delaunay_check(points: np.ndarray, triangles: np.ndarray) -> int:
    """Count strict empty-circumcircle violations, the O(T*n) way."""
    viol = 0
    for a, b, c in triangles:
        pa, pb, pc = points[a], points[b], points[c]
        for d in range(len(points)):
            if d in (int(a), int(b), int(c)):
                continue
            pd = points[d]
            if (
                mesh_mod.incircle(
                    pa[0], pa[1], pb[0], pb[1], pc[0], pc[1], pd[0], pd[1]
                )
                > 0
            ):
                viol += 1
    return viol
