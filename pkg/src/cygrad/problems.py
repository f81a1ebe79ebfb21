"""Test problems: canonical diagonal instances, random 2x2 SPD systems and
Matrix Market ingestion."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .linalg import CsrOperator, DiagonalOperator, SpdOperator, SpectrumInfo, as_vector

DISTRIBUTIONS = ("uniform", "loguniform", "clustered", "explicit")


class ConfigError(ValueError):
    pass


class FormatError(ValueError):
    pass


@dataclass
class ProblemInstance:
    operator: SpdOperator
    rhs: np.ndarray
    x0: np.ndarray
    spectrum: SpectrumInfo | None = None
    label: str = ""
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        n = self.operator.n
        if self.rhs.shape != (n,) or self.x0.shape != (n,):
            raise ConfigError(
                f"dimension mismatch: operator {n}, rhs {self.rhs.shape}, x0 {self.x0.shape}"
            )
        if isinstance(self.operator, DiagonalOperator) and self.spectrum is None:
            self.spectrum = self.operator.spectrum()

    @property
    def n(self) -> int:
        return self.operator.n


@dataclass(frozen=True)
class SpectrumSpec:
    """Eigenvalue layout for a diagonal problem, normalized so lambda_1 = 1.

    ``clustered`` puts half the interior eigenvalues in ``[1, 2]`` and the
    rest in ``[lambda_max / 2, lambda_max]``.
    """

    n: int
    distribution: str = "loguniform"
    lambda_max: float = 1e4
    seed: int = 0
    values: tuple[float, ...] | None = None


def spectrum_values(spec: SpectrumSpec) -> np.ndarray:
    n, lmax, dist = spec.n, float(spec.lambda_max), spec.distribution
    if dist not in DISTRIBUTIONS:
        raise ConfigError(f"unknown distribution {dist!r}")
    if dist == "explicit":
        if spec.values is None or len(spec.values) != n:
            raise ConfigError(f"explicit spectrum needs exactly n={n} values")
        lam = np.sort(np.asarray(spec.values, dtype=np.float64))
        if lam[0] != 1.0:
            raise ConfigError(f"explicit spectrum must have smallest value 1, got {lam[0]:g}")
        return lam
    if n < 2:
        raise ConfigError(f"need n >= 2, got {n}")
    if not (math.isfinite(lmax) and lmax >= 1.0):
        raise ConfigError(f"lambda_max must be >= 1, got {lmax}")
    rng = np.random.default_rng(spec.seed)
    m = n - 2
    if dist == "uniform":
        inner = rng.uniform(1.0, lmax, m)
    elif dist == "loguniform":
        inner = 10.0 ** rng.uniform(0.0, math.log10(lmax), m)
    else:
        lo = m // 2
        inner = np.concatenate([rng.uniform(1.0, min(2.0, lmax), lo),
                                rng.uniform(max(1.0, lmax / 2.0), lmax, m - lo)])
    return np.sort(np.concatenate([[1.0], inner, [lmax]]))


def generate_diagonal(spec: SpectrumSpec, rhs=None, x0=None, label=None) -> ProblemInstance:
    """Diagonal problem with sorted spectrum; ``b = 0`` and ``x0 = 1`` by default."""
    lam = spectrum_values(spec)
    op = DiagonalOperator(lam)
    n = lam.shape[0]
    b = as_vector(np.zeros(n) if rhs is None else rhs)
    x = as_vector(np.ones(n) if x0 is None else x0)
    if label is None:
        label = f"diag:n={n},{spec.distribution},kmax={spec.lambda_max:g},seed={spec.seed}"
    return ProblemInstance(op, b, x, op.spectrum(), label)


def generate_spd_2d(seed: int, cond_max: float) -> ProblemInstance:
    """Random 2x2 SPD system ``lam_s I + (lam_b - lam_s) v v'`` with condition <= cond_max."""
    if not cond_max >= 1:
        raise ConfigError(f"cond_max must be >= 1, got {cond_max}")
    rng = np.random.default_rng(seed)
    lam_s = rng.uniform(0.5, 2.0)
    cond = math.exp(rng.uniform(0.0, math.log(cond_max)))
    theta = rng.uniform(0.0, math.pi)
    v = np.array([math.cos(theta), math.sin(theta)])
    a = lam_s * np.eye(2) + (lam_s * cond - lam_s) * np.outer(v, v)
    a[1, 0] = a[0, 1]
    op = CsrOperator.from_dense(a)
    b = as_vector(rng.standard_normal(2))
    x0 = as_vector(rng.standard_normal(2))
    return ProblemInstance(op, b, x0, None, f"spd2d:seed={seed},cond={cond_max:g}")


# -- Matrix Market -----------------------------------------------------------

def _header(line: str, path) -> tuple[str, str, str]:
    parts = line.strip().lower().split()
    if len(parts) != 5 or parts[0] != "%%matrixmarket":
        raise FormatError(f"{path}: missing or malformed %%MatrixMarket banner")
    _, obj, fmt, fld, sym = parts
    if obj != "matrix":
        raise FormatError(f"{path}: object field {obj!r} unsupported (need 'matrix')")
    if fmt not in ("coordinate", "array"):
        raise FormatError(f"{path}: format field {fmt!r} unsupported")
    if fld not in ("real", "integer", "double"):
        raise FormatError(f"{path}: value field {fld!r} unsupported (need real or integer)")
    if sym not in ("symmetric", "general"):
        raise FormatError(f"{path}: symmetry field {sym!r} unsupported")
    return fmt, fld, sym


def read_matrix_market(path) -> CsrOperator:
    path = Path(path)
    with open(path) as fh:
        fmt, _, sym = _header(fh.readline(), path)
        lines = [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("%")]
    if not lines:
        raise FormatError(f"{path}: missing size line")
    size = lines[0].split()
    try:
        dims = [int(t) for t in size]
    except ValueError:
        raise FormatError(f"{path}: bad size line {lines[0].strip()!r}") from None
    try:
        body = np.array(" ".join(lines[1:]).split(), dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"{path}: non-numeric entry ({exc})") from None
    if dims[0] != dims[1]:
        raise FormatError(f"{path}: matrix is {dims[0]}x{dims[1]}, not square")
    n = dims[0]

    if fmt == "coordinate":
        if len(dims) != 3:
            raise FormatError(f"{path}: coordinate size line needs rows, cols, nnz")
        nnz = dims[2]
        if body.size != 3 * nnz:
            raise FormatError(f"{path}: expected {nnz} entries of (row, col, value)")
        trip = body.reshape(nnz, 3)
        rows = trip[:, 0].astype(np.int64) - 1
        cols = trip[:, 1].astype(np.int64) - 1
        vals = trip[:, 2]
        if nnz and (rows.min() < 0 or cols.min() < 0 or max(rows.max(), cols.max()) >= n):
            raise FormatError(f"{path}: entry index out of range")
    else:
        if len(dims) != 2:
            raise FormatError(f"{path}: array size line needs rows, cols")
        jj, ii = (np.triu_indices(n) if sym == "symmetric" else
                  np.divmod(np.arange(n * n), n))
        if body.size != ii.size:
            raise FormatError(f"{path}: expected {ii.size} array values, got {body.size}")
        rows, cols, vals = ii.astype(np.int64), jj.astype(np.int64), body
        keep = (vals != 0) | (rows == cols)
        rows, cols, vals = rows[keep], cols[keep], vals[keep]

    if sym == "symmetric":
        lo, hi = np.maximum(rows, cols), np.minimum(rows, cols)
        key = lo * n + hi
        if np.unique(key).size != key.size:
            raise FormatError(f"{path}: duplicate entry in symmetric storage")
        off = lo != hi
        rows = np.concatenate([lo, hi[off]])
        cols = np.concatenate([hi, lo[off]])
        vals = np.concatenate([vals, vals[off]])
    elif np.unique(rows * n + cols).size != rows.size:
        raise FormatError(f"{path}: duplicate entry")
    try:
        return CsrOperator.from_coo(n, rows, cols, vals, strict_diagonal=False)
    except ValueError as exc:
        raise FormatError(f"{path}: symmetry field: {exc}") from None


def write_matrix_market(path, op: SpdOperator, comment: str = "") -> None:
    """Coordinate real symmetric file holding the lower triangle."""
    if isinstance(op, DiagonalOperator):
        idx = np.arange(op.n)
        rows, cols, vals = idx, idx, op.values
    else:
        rows = np.repeat(np.arange(op.n), np.diff(op.indptr))
        low = op.indices <= rows
        rows, cols, vals = rows[low], op.indices[low], op.data[low]
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real symmetric\n")
        for c in comment.splitlines():
            fh.write(f"% {c}\n")
        fh.write(f"{op.n} {op.n} {rows.size}\n")
        for i, j, v in zip(rows, cols, vals):
            fh.write(f"{i + 1} {j + 1} {float(v)!r}\n")


def read_vector(path) -> np.ndarray:
    return as_vector(np.loadtxt(path, dtype=np.float64, ndmin=1))


def write_vector(path, v) -> None:
    with open(path, "w") as fh:
        for x in np.asarray(v, dtype=np.float64):
            fh.write(f"{float(x)!r}\n")


def make_rhs(policy: str, n: int) -> np.ndarray:
    """``zero``, ``ones``, ``random:SEED`` or a path to a vector file."""
    if policy == "zero":
        return as_vector(np.zeros(n))
    if policy == "ones":
        return as_vector(np.ones(n))
    if policy.startswith("random"):
        _, _, seed = policy.partition(":")
        try:
            s = int(seed or 0)
        except ValueError:
            raise ConfigError(f"bad rhs seed in {policy!r}") from None
        return as_vector(np.random.default_rng(s).standard_normal(n))
    v = read_vector(policy)
    if v.shape != (n,):
        raise ConfigError(f"rhs file {policy} has {v.size} values, operator has n={n}")
    return v


def load_matrix_market(path, rhs_policy: str = "zero", x0=None) -> ProblemInstance:
    op = read_matrix_market(path)
    b = make_rhs(rhs_policy, op.n)
    x = as_vector(np.zeros(op.n) if x0 is None else x0)
    return ProblemInstance(op, b, x, None, Path(path).name, list(op.warnings))


# -- problem reference grammar ----------------------------------------------

def _num(val, token):
    try:
        return float(val)
    except ValueError:
        raise ConfigError(f"bad number in token {token!r}") from None


def parse_generator(text: str) -> tuple[str, dict]:
    """Split ``diag:n=2,explicit=1,2`` into ``('diag', {...})``.

    Bare numeric tokens after ``explicit=`` extend the explicit value list;
    a bare distribution name selects the distribution.
    """
    head, _, tail = text.strip().partition(":")
    kind = head.lower()
    if kind not in ("diag", "spd2d"):
        raise ConfigError(f"unknown generator {head!r}")
    params: dict = {}
    last = None
    for token in filter(None, (t.strip() for t in tail.split(","))):
        key, eq, val = token.partition("=")
        key = key.lower()
        if not eq:
            if kind == "diag" and key in DISTRIBUTIONS:
                params["distribution"] = key
                last = None
            elif last == "explicit":
                params["values"].append(_num(token, token))
            else:
                raise ConfigError(f"unexpected token {token!r}")
            continue
        last = key
        if kind == "diag" and key == "n":
            params["n"] = int(_num(val, token))
        elif kind == "diag" and key in ("kmax", "lmax", "lambda_max"):
            params["lambda_max"] = _num(val, token)
        elif key == "seed":
            params["seed"] = int(_num(val, token))
        elif kind == "diag" and key == "explicit":
            params["distribution"] = "explicit"
            params["values"] = [_num(val, token)]
        elif kind == "diag" and key in ("rhs", "x0"):
            params[key] = val
        elif kind == "spd2d" and key == "cond":
            params["cond"] = _num(val, token)
        else:
            raise ConfigError(f"unexpected token {token!r}")
    if kind == "diag":
        if "values" in params:
            params["values"] = tuple(params["values"])
            params.setdefault("n", len(params["values"]))
        if "n" not in params:
            raise ConfigError("diag generator needs n=...")
    return kind, params


def build_problem(ref: str, rep: int = 0, rhs_policy: str | None = None) -> ProblemInstance:
    """Problem from a generator string or a Matrix Market path.

    Diagonal generators also take ``rhs=`` and ``x0=`` with the policies of
    :func:`make_rhs`. Repetition ``rep`` offsets every seed so repeated runs
    differ.
    """
    if ref.startswith("mm:") or ref.endswith(".mtx"):
        path = ref[3:] if ref.startswith("mm:") else ref
        return load_matrix_market(path, _offset(rhs_policy or "zero", rep))
    kind, p = parse_generator(ref)
    if kind == "spd2d":
        return generate_spd_2d(p.get("seed", 0) + rep, p.get("cond", 1e3))
    spec = SpectrumSpec(p["n"], p.get("distribution", "loguniform"), p.get("lambda_max", 1e4),
                        p.get("seed", 0) + rep, p.get("values"))
    n = p["n"]
    rhs = make_rhs(_offset(rhs_policy or p.get("rhs", "zero"), rep), n)
    x0 = make_rhs(_offset(p["x0"], rep), n) if "x0" in p else None
    return generate_diagonal(spec, rhs=rhs, x0=x0, label=ref.strip())


def _offset(policy: str, rep: int) -> str:
    if rep and policy.startswith("random"):
        _, _, s = policy.partition(":")
        return f"random:{int(s or 0) + rep}"
    return policy
