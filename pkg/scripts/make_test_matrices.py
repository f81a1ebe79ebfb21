"""Write the small Matrix Market files bundled under tests/data/.

Run from the repository root: python scripts/make_test_matrices.py
"""
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "tests" / "data"


def write_coord(name, a, field="real", lower=True, symmetry="symmetric"):
    n = a.shape[0]
    entries = []
    for j in range(n):
        for i in range(n):
            if a[i, j] == 0 and i != j:
                continue
            if symmetry == "symmetric" and (i < j if lower else i > j):
                continue
            entries.append((i, j, a[i, j]))
    with open(OUT / name, "w") as fh:
        fh.write(f"%%MatrixMarket matrix coordinate {field} {symmetry}\n")
        fh.write(f"% {name}\n")
        fh.write(f"{n} {n} {len(entries)}\n")
        for i, j, v in entries:
            val = str(int(v)) if field == "integer" else repr(float(v))
            fh.write(f"{i + 1} {j + 1} {val}\n")


def write_array(name, a):
    n = a.shape[0]
    with open(OUT / name, "w") as fh:
        fh.write("%%MatrixMarket matrix array real symmetric\n")
        fh.write(f"{n} {n}\n")
        for j in range(n):
            for i in range(j, n):
                fh.write(f"{float(a[i, j])!r}\n")


def laplace1d(n):
    return 2 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)


def laplace2d(m):
    t = laplace1d(m)
    return np.kron(np.eye(m), t) + np.kron(t, np.eye(m))


def random_sparse_spd(n, density, seed):
    rng = np.random.default_rng(seed)
    b = rng.standard_normal((n, n)) * (rng.random((n, n)) < density)
    a = np.triu(b, 1)
    a = a + a.T
    a += np.diag(np.abs(a).sum(axis=1) + rng.uniform(0.5, 2.0, n))
    return a


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    write_coord("diag12.mtx", np.diag([1.0, 2.0]))
    write_coord("laplace1d_50.mtx", laplace1d(50))
    write_coord("laplace2d_100.mtx", laplace2d(10))
    write_coord("randspd_200.mtx", random_sparse_spd(200, 0.03, 11))
    write_coord("upper_30.mtx", random_sparse_spd(30, 0.2, 5), lower=False)
    write_coord("int_laplace_40.mtx", 4 * laplace1d(40), field="integer")
    write_coord("general_12.mtx", random_sparse_spd(12, 0.3, 2), symmetry="general")
    write_array("array_8.mtx", random_sparse_spd(8, 1.0, 3))


if __name__ == "__main__":
    main()
