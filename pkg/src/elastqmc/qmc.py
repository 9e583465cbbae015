"""Interlaced polynomial lattice point sets.

A polynomial lattice rule over ``Z_b`` with modulus ``p`` (degree ``m``) and
generating polynomials ``q_1, ..., q_t`` has ``N = b**m`` points.  Point ``n``
has coordinate ``j`` equal to the first ``m`` fractional base-``b`` digits of
the Laurent expansion of ``n(x) q_j(x) / p(x)``, where ``n(x)`` is the digit
polynomial of ``n``.  Interlacing ``d`` consecutive coordinates digit by digit
gives the higher order rules used for the parametric integrals.

Rules are not constructed here; they are read from generating-vector files
(see :func:`load_genvec` and :func:`bundled_rule`).
"""
from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

__all__ = [
    "GenvecFormatError",
    "QmcRule",
    "PointSet",
    "is_prime",
    "generating_matrix",
    "base_lattice_digits",
    "base_lattice_points",
    "interlace",
    "interlace_digits",
    "rule_points",
    "shift_center",
    "tensor_nodes",
    "combined_nodes",
    "alternating_columns",
    "monte_carlo_points",
    "load_genvec",
    "write_genvec",
    "bundled_rule",
    "bundled_rule_path",
]

#: Maximum number of output digits kept when interlacing in base 2.
DEFAULT_DEPTH = 53


class GenvecFormatError(ValueError):
    """Raised when a generating-vector file cannot be parsed or validated."""


def is_prime(b: int) -> bool:
    if b < 2:
        return False
    i = 2
    while i * i <= b:
        if b % i == 0:
            return False
        i += 1
    return True


def _degree(poly) -> int:
    nz = [i for i, c in enumerate(poly) if c != 0]
    return nz[-1] if nz else -1


@dataclass(frozen=True)
class QmcRule:
    """An interlaced polynomial lattice rule.

    ``genvec`` holds ``interlace * s`` polynomials, each as a tuple of
    coefficients in ascending degree.  ``modulus`` is a degree-``m``
    polynomial in the same representation.
    """

    b: int
    m: int
    s: int
    interlace: int
    modulus: tuple[int, ...]
    genvec: tuple[tuple[int, ...], ...]
    name: str = ""

    def __post_init__(self):
        if not is_prime(self.b):
            raise ValueError(f"base {self.b} is not prime")
        if self.m < 1 or self.s < 1 or self.interlace < 1:
            raise ValueError("m, s and interlace must be positive")
        if _degree(self.modulus) != self.m:
            raise ValueError(
                f"modulus has degree {_degree(self.modulus)}, expected {self.m}")
        if len(self.genvec) != self.interlace * self.s:
            raise ValueError(
                f"genvec has {len(self.genvec)} polynomials, "
                f"expected interlace*s = {self.interlace * self.s}")
        for i, q in enumerate(self.genvec):
            if _degree(q) >= self.m:
                raise ValueError(f"generating polynomial {i} has degree >= m")
            if any(not 0 <= c < self.b for c in q):
                raise ValueError(f"generating polynomial {i} has digits outside Z_{self.b}")

    @property
    def n_points(self) -> int:
        return self.b ** self.m

    def truncate(self, s: int) -> "QmcRule":
        """Projection onto the first ``s`` coordinates."""
        if s > self.s:
            raise ValueError(f"rule has dimension {self.s} < {s}")
        return QmcRule(self.b, self.m, s, self.interlace, self.modulus,
                       self.genvec[: self.interlace * s], self.name)

    def select(self, columns) -> "QmcRule":
        """Rule whose coordinate ``i`` is coordinate ``columns[i]`` of this one."""
        columns = [int(c) for c in columns]
        if not columns or min(columns) < 0 or max(columns) >= self.s:
            raise ValueError(f"columns must lie in [0, {self.s})")
        d = self.interlace
        genvec = tuple(q for c in columns for q in self.genvec[d * c:d * c + d])
        return QmcRule(self.b, self.m, len(columns), d, self.modulus, genvec, self.name)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(repr((self.b, self.m, self.s, self.interlace,
                       self.modulus, self.genvec)).encode())
        return h.hexdigest()


@dataclass(frozen=True)
class PointSet:
    points: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __len__(self):
        return self.points.shape[0]


def _laurent_digits(q, p, b: int, count: int) -> np.ndarray:
    """First ``count`` coefficients u_1, u_2, ... of q(x)/p(x) = sum u_i x^-i."""
    m = _degree(p)
    p = np.array(p[: m + 1], dtype=np.int64)
    inv_lead = pow(int(p[m]), b - 2, b) if b > 2 else 1
    rem = np.zeros(m + 1, dtype=np.int64)
    qq = np.array(q, dtype=np.int64)[:m]
    rem[: len(qq)] = qq
    out = np.empty(count, dtype=np.int64)
    for i in range(count):
        rem = np.roll(rem, 1)  # multiply by x; deg(rem) < m so nothing wraps
        u = (rem[m] * inv_lead) % b
        out[i] = u
        rem = (rem - u * p) % b
    return out


def generating_matrix(q, p, b: int) -> np.ndarray:
    """The m x m Hankel matrix C with C[i, k] = u_{i+k+1} of q/p."""
    m = _degree(p)
    u = _laurent_digits(q, p, b, 2 * m)
    i, k = np.indices((m, m))
    return u[i + k]


def _index_digits(n_points: int, b: int, m: int) -> np.ndarray:
    n = np.arange(n_points, dtype=np.int64)
    return np.stack([(n // b**k) % b for k in range(m)], axis=1)


def base_lattice_digits(rule: QmcRule) -> np.ndarray:
    """Digit array of shape (N, interlace*s, m) of the non-interlaced lattice."""
    nd = _index_digits(rule.n_points, rule.b, rule.m)
    out = np.empty((rule.n_points, len(rule.genvec), rule.m), dtype=np.int64)
    for j, q in enumerate(rule.genvec):
        C = generating_matrix(q, rule.modulus, rule.b)
        out[:, j, :] = (nd @ C.T) % rule.b
    return out


def _digits_to_float(digits: np.ndarray, b: int) -> np.ndarray:
    # Horner from the least significant digit keeps the result exact for b=2.
    val = np.zeros(digits.shape[:-1])
    for i in range(digits.shape[-1] - 1, -1, -1):
        val = (val + digits[..., i]) / b
    return val


def base_lattice_points(rule: QmcRule) -> np.ndarray:
    """Points of the base (non-interlaced) lattice, shape (N, interlace*s)."""
    return _digits_to_float(base_lattice_digits(rule), rule.b)


def interlace_digits(digits: np.ndarray, d: int, depth: int | None = None):
    """Digit interlacing of groups of ``d`` consecutive columns.

    ``digits`` has shape (N, d*s, m).  Digit ``i`` (1-based) of input column
    ``d*j + t`` becomes digit ``(i-1)*d + t + 1`` of output column ``j``.
    Returns the (N, s, min(d*m, depth)) digit array and a flag telling
    whether digits were dropped.
    """
    n, cols, m = digits.shape
    if cols % d:
        raise ValueError(f"column count {cols} not divisible by interlace order {d}")
    s = cols // d
    # (N, s, d, m) -> (N, s, m, d) -> (N, s, m*d): index i*d + t
    out = digits.reshape(n, s, d, m).transpose(0, 1, 3, 2).reshape(n, s, m * d)
    truncated = False
    if depth is not None and out.shape[-1] > depth:
        out = out[..., :depth]
        truncated = True
    return out, truncated


def interlace(base_points: np.ndarray, d: int, b: int = 2, n_digits: int | None = None,
              depth: int | None = None) -> np.ndarray:
    """Interlace real-valued points given as base-``b`` fractions.

    Inputs must be exact multiples of ``b**-n_digits`` (default: 53 // d digits
    in base 2).  Output digits beyond ``depth`` are dropped.
    """
    base_points = np.asarray(base_points, dtype=float)
    if n_digits is None:
        if b != 2:
            raise ValueError("n_digits is required for b != 2")
        n_digits = DEFAULT_DEPTH // d
    if depth is None:
        depth = DEFAULT_DEPTH if b == 2 else n_digits * d
    scaled = np.rint(base_points * float(b) ** n_digits).astype(np.int64)
    digs = np.stack([(scaled // b ** (n_digits - 1 - i)) % b for i in range(n_digits)],
                    axis=-1)
    out, truncated = interlace_digits(digs, d, depth)
    if truncated:
        warnings.warn(f"interlacing dropped digits beyond depth {depth}", stacklevel=2)
    return _digits_to_float(out, b)


def rule_points(rule: QmcRule, depth: int = DEFAULT_DEPTH) -> PointSet:
    """Interlaced point set of ``rule`` in [0, 1)^s (unshifted)."""
    digs, truncated = interlace_digits(base_lattice_digits(rule), rule.interlace, depth)
    pts = _digits_to_float(digs, rule.b)
    prov = {
        "rule": rule.name or f"b{rule.b}_m{rule.m}_d{rule.interlace}_s{rule.s}",
        "genvec_sha256": rule.digest(),
        "digits": int(digs.shape[-1]),
        "truncated": truncated,
    }
    return PointSet(pts, prov)


def shift_center(points) -> np.ndarray:
    """Translate nodes from [0,1)^s to [-1/2, 1/2)^s."""
    pts = points.points if isinstance(points, PointSet) else np.asarray(points)
    return pts - 0.5


def tensor_nodes(rule_y: QmcRule, rule_z: QmcRule, p: float | None = None,
                 q: float | None = None) -> np.ndarray:
    """Cartesian product of two rules, ordered with the z-index outermost.

    Row ``k * N1 + j`` is ``(y_j, z_k)``.  With summability exponents ``p``
    and ``q`` given, warns when the point counts are unbalanced
    (``|m1 q - m2 p| >= 1``).
    """
    if p is not None and q is not None and abs(rule_y.m * q - rule_z.m * p) >= 1:
        warnings.warn(
            f"unbalanced tensor rule: |m1*q - m2*p| = {abs(rule_y.m * q - rule_z.m * p):.3g} >= 1",
            stacklevel=2)
    y = rule_points(rule_y).points
    z = rule_points(rule_z).points
    n1, n2 = len(y), len(z)
    return np.hstack([np.tile(y, (n2, 1)), np.repeat(z, n1, axis=0)])


def combined_nodes(rule: QmcRule, s1: int, s2: int) -> np.ndarray:
    """Single rule over both parameter blocks: columns [:s1] feed y, [s1:] feed z."""
    if rule.s < s1 + s2:
        raise ValueError(f"rule dimension {rule.s} < s1 + s2 = {s1 + s2}")
    return rule_points(rule.truncate(s1 + s2)).points


def alternating_columns(s1: int, s2: int) -> list[int]:
    """Source columns that give y_j and z_j neighbouring positions in the base rule.

    ``rule.select(alternating_columns(s1, s2))`` used with :func:`combined_nodes`
    feeds base coordinates 0, 2, 4, ... to y and 1, 3, 5, ... to z (the longer
    block continues sequentially), so one decaying weight sequence serves both.
    """
    k = min(s1, s2)
    ys = [2 * i for i in range(k)] + list(range(2 * k, 2 * k + s1 - k))
    zs = [2 * i + 1 for i in range(k)] + list(range(2 * k, 2 * k + s2 - k))
    return ys + zs


def monte_carlo_points(n: int, s: int, seed: int) -> np.ndarray:
    """Seeded pseudo-random points in [0,1)^s (baseline for rate comparisons)."""
    return np.random.default_rng(seed).random((n, s))


# --- generating-vector files -------------------------------------------------

def _parse_ints(line: str, lineno: int, path) -> list[int]:
    try:
        return [int(tok) for tok in line.split()]
    except ValueError as exc:
        raise GenvecFormatError(f"{path}:{lineno}: cannot parse integers: {line.strip()!r}") from exc


def load_genvec(path, b: int | None = None, m: int | None = None, s: int | None = None,
                interlace: int | None = None) -> QmcRule:
    """Read a generating-vector file.

    Format: ``b m s d`` on the first line, the modulus coefficients (ascending
    degree) on the second, then ``d*s`` lines of generating polynomials.
    A requested ``s`` smaller than the file's dimension keeps the leading
    coordinates.
    """
    path = Path(path)
    lines = [(i + 1, ln) for i, ln in enumerate(path.read_text().splitlines())
             if ln.strip() and not ln.lstrip().startswith("#")]
    if len(lines) < 2:
        raise GenvecFormatError(f"{path}: file too short")
    lineno, header = lines[0]
    hdr = _parse_ints(header, lineno, path)
    if len(hdr) != 4:
        raise GenvecFormatError(f"{path}:{lineno}: header must be 'b m s d'")
    fb, fm, fs, fd = hdr
    if not is_prime(fb):
        raise GenvecFormatError(f"{path}:{lineno}: base {fb} is not prime")
    for name, want, got in (("b", b, fb), ("m", m, fm), ("interlace", interlace, fd)):
        if want is not None and want != got:
            raise GenvecFormatError(f"{path}: expected {name}={want}, file has {got}")
    if s is not None and s > fs:
        raise GenvecFormatError(f"{path}: requested s={s} exceeds file dimension {fs}")
    lineno, mod_line = lines[1]
    modulus = _parse_ints(mod_line, lineno, path)
    if _degree(modulus) != fm:
        raise GenvecFormatError(f"{path}:{lineno}: modulus degree {_degree(modulus)} != m={fm}")
    body = lines[2:]
    if len(body) != fd * fs:
        raise GenvecFormatError(f"{path}: expected {fd * fs} polynomial lines, found {len(body)}")
    genvec = []
    for lineno, ln in body:
        poly = _parse_ints(ln, lineno, path)
        if _degree(poly) >= fm:
            raise GenvecFormatError(f"{path}:{lineno}: polynomial degree >= m={fm}")
        if any(not 0 <= c < fb for c in poly):
            raise GenvecFormatError(f"{path}:{lineno}: coefficient outside Z_{fb}")
        genvec.append(tuple(poly[:fm]) + (0,) * max(0, fm - len(poly)))
    rule = QmcRule(fb, fm, fs, fd, tuple(modulus), tuple(genvec), name=path.stem)
    return rule.truncate(s) if s is not None else rule


def write_genvec(rule: QmcRule, path, comment: str | None = None) -> None:
    out = []
    if comment:
        out.extend(f"# {c}" for c in comment.splitlines())
    out.append(f"{rule.b} {rule.m} {rule.s} {rule.interlace}")
    out.append(" ".join(map(str, rule.modulus)))
    out.extend(" ".join(map(str, q)) for q in rule.genvec)
    Path(path).write_text("\n".join(out) + "\n")


def bundled_rule_path(m: int, interlace: int = 2, kind: str = "decay") -> Path:
    name = f"b2_m{m}_d{interlace}_{kind}.txt"
    path = resources.files("elastqmc") / "data" / "genvec" / name
    path = Path(str(path))
    if not path.exists():
        raise FileNotFoundError(f"no bundled generating vector {name}")
    return path


def bundled_rule(m: int, s: int, interlace: int = 2, kind: str = "decay") -> QmcRule:
    """Load a bundled base-2 rule and project it onto ``s`` coordinates."""
    return load_genvec(bundled_rule_path(m, interlace, kind), b=2, m=m, s=s,
                       interlace=interlace)
