"""Sum-of-power multiset encoding and its constructive decoder.

A multiset ``X`` of ``d``-dimensional vectors with ``|X| <= M`` is encoded as
``sum(phi(x) for x in X)`` where ``phi(x)`` has ``d*M + 1`` entries:

    [1, x1, x1^2, ..., x1^M,                 # first-coordinate power block
     x2, x1*x2, ..., x1^(M-1)*x2,            # one block per further coordinate
     ...,
     xd, x1*xd, ..., x1^(M-1)*xd]

Decoding reads the cardinality from entry 0, recovers the first coordinates
from the power sums (Newton-Girard identities, then polynomial roots) and the
remaining coordinates from Vandermonde systems built on those roots.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np

from .core import as_multiset, canonical_order


class CodecError(ValueError):
    """Base class for encoding/decoding failures."""


class CapacityError(CodecError):
    pass


class NonRealRootsError(CodecError):
    pass


class DegenerateNodesError(CodecError):
    pass


class InconsistentSystemError(CodecError):
    pass


CLUSTER_RTOL = 1e-5
RESCALE_ABOVE_M = 8
# residual accepted for merging eigenvalue clusters into one repeated value
EXACT_RTOL = 1e-11


def encoding_width(d: int, M: int) -> int:
    return d * M + 1


def phi_fixed(x, M: int) -> np.ndarray:
    """Monomial vector of a single element (or of each row of a 2-D array)."""
    x = np.asarray(x, dtype=np.float64)
    if M < 1:
        raise ValueError("M must be >= 1")
    if x.ndim == 1:
        return phi_fixed(x[None, :], M)[0]
    if x.shape[1] < 1:
        raise ValueError("element dimension must be >= 1")
    if not np.all(np.isfinite(x)):
        raise ValueError("phi_fixed input must be finite")
    n, d = x.shape
    powers = np.empty((n, M + 1))
    powers[:, 0] = 1.0
    for q in range(1, M + 1):
        powers[:, q] = powers[:, q - 1] * x[:, 0]
    out = np.empty((n, encoding_width(d, M)))
    out[:, : M + 1] = powers
    for j in range(1, d):
        start = M + 1 + (j - 1) * M
        out[:, start : start + M] = powers[:, :M] * x[:, j : j + 1]
    return out


def signed_root(t, M: int):
    t = np.asarray(t, dtype=np.float64)
    return np.sign(t) * np.abs(t) ** (1.0 / M)


def signed_power(t, M: int):
    t = np.asarray(t, dtype=np.float64)
    return np.sign(t) * np.abs(t) ** M


def normalize_g(x, M: int) -> np.ndarray:
    """Replace the first coordinate by its sign-preserving M-th root."""
    x = np.array(x, dtype=np.float64)
    x[..., 0] = signed_root(x[..., 0], M)
    return x


def denormalize_g(y, M: int) -> np.ndarray:
    y = np.array(y, dtype=np.float64)
    y[..., 0] = signed_power(y[..., 0], M)
    return y


def random_premix(d: int, rng: np.random.Generator) -> np.ndarray:
    """Orthogonalized Gaussian matrix; a random first row breaks first-coordinate ties a.s."""
    G = rng.standard_normal((d, d))
    Q, R = np.linalg.qr(G)
    # sign fix makes the draw Haar-distributed and keeps it deterministic
    return Q * np.sign(np.diag(R))


@dataclass
class PowerEncoding:
    """Summed encoding plus whatever is needed to invert the input transforms."""

    values: np.ndarray
    d: int
    M: int
    normalize: bool = False
    premix: Optional[np.ndarray] = None
    shift: Optional[np.ndarray] = None
    scale: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (encoding_width(self.d, self.M),):
            raise ValueError(
                f"encoding of d={self.d}, M={self.M} needs {encoding_width(self.d, self.M)} values, "
                f"got {self.values.shape}"
            )

    def block(self, j: int) -> np.ndarray:
        """Power block of coordinate ``j`` (0-based). Block 0 has M+1 entries, the rest M."""
        if j == 0:
            return self.values[: self.M + 1]
        start = self.M + 1 + (j - 1) * self.M
        return self.values[start : start + self.M]

    def to_row(self) -> List[str]:
        return [str(self.d), str(self.M)] + [repr(float(v)) for v in self.values]


def transform_elements(X: np.ndarray, M: int, normalize=False, premix=None, shift=None, scale=None) -> np.ndarray:
    """Apply the optional input maps in encode order: rescale, premix, normalize."""
    Y = X
    if shift is not None:
        Y = (Y - shift) / scale
    if premix is not None:
        Y = Y @ np.asarray(premix).T
    if normalize:
        Y = normalize_g(Y, M)
    return Y


def untransform_elements(Y: np.ndarray, M: int, normalize=False, premix=None, shift=None, scale=None) -> np.ndarray:
    X = Y
    if normalize:
        X = denormalize_g(X, M)
    if premix is not None:
        X = np.linalg.solve(np.asarray(premix), X.T).T
    if shift is not None:
        X = X * scale + shift
    return X


def _sum_canonical(rows: np.ndarray, width: int) -> np.ndarray:
    out = np.zeros(width)
    for r in rows:
        out = out + r
    return out


def encode_multiset(X, M: int, normalize: bool = False, premix=None, d: Optional[int] = None,
                    rescale: Optional[bool] = None) -> PowerEncoding:
    """Encode a multiset of vectors; the empty multiset maps to all zeros.

    Elements are summed in lexicographic order of their transformed values, so
    any reordering of ``X`` gives a bit-identical encoding. With ``M > 8`` the
    coordinates are first mapped affinely onto [-1, 1] (override with ``rescale``).
    """
    X = as_multiset(X, d)
    n, d = X.shape
    if n > M:
        raise CapacityError(f"multiset has {n} elements but capacity M={M}")
    if premix is not None:
        premix = np.asarray(premix, dtype=np.float64)
        if premix.shape != (d, d):
            raise ValueError(f"premix must be {d}x{d}")
        if np.linalg.cond(premix) >= 1e8:
            raise ValueError("premix matrix is (numerically) singular")
    if rescale is None:
        rescale = M > RESCALE_ABOVE_M
    shift = scale = None
    if rescale and n:
        lo, hi = X.min(axis=0), X.max(axis=0)
        shift = (lo + hi) / 2
        scale = np.where(hi > lo, (hi - lo) / 2, 1.0)
    Y = transform_elements(X, M, normalize, premix, shift, scale)
    rows = phi_fixed(Y, M) if n else np.zeros((0, encoding_width(d, M)))
    rows = rows[canonical_order(Y)]
    return PowerEncoding(_sum_canonical(rows, encoding_width(d, M)), d, M, normalize, premix, shift, scale)


def newton_girard(power_sums, n: Optional[int] = None) -> np.ndarray:
    """Elementary symmetric polynomials e_1..e_n from power sums p_1..p_n."""
    p = np.asarray(power_sums, dtype=np.float64)
    if n is None:
        n = len(p)
    if n < 1 or len(p) < n:
        raise ValueError(f"need at least n={n} power sums, got {len(p)}")
    e = np.zeros(n + 1)
    e[0] = 1.0
    for k in range(1, n + 1):
        acc = 0.0
        for i in range(1, k + 1):
            acc += (-1) ** (i - 1) * e[k - i] * p[i - 1]
        e[k] = acc / k
    return e[1:]


def poly_roots_real(e, tol_imag: Optional[float] = None) -> np.ndarray:
    """Real roots of t^n - e1 t^(n-1) + e2 t^(n-2) - ... via companion-matrix eigenvalues.

    Multiplicities are kept (a double root comes back twice); result is sorted.
    Raises :class:`NonRealRootsError` if any root has ``|imag| > tol_imag``.
    """
    e = np.asarray(e, dtype=np.float64)
    n = len(e)
    if n < 1:
        raise ValueError("need at least one coefficient")
    if tol_imag is None:
        tol_imag = 1e-6 * max(1.0, float(np.abs(e).max()))
    signs = (-1.0) ** np.arange(1, n + 1)
    coeffs = signs * e  # t^n + c1 t^(n-1) + ... + cn
    C = np.zeros((n, n))
    C[0, :] = -coeffs
    if n > 1:
        C[np.arange(1, n), np.arange(n - 1)] = 1.0
    roots = np.linalg.eigvals(C)
    bad = np.abs(roots.imag) > tol_imag
    if np.any(bad):
        raise NonRealRootsError(
            f"{int(bad.sum())} of {n} roots are non-real (max |imag| = {np.abs(roots.imag).max():.3g})"
        )
    return np.sort(roots.real)


def vandermonde_solve(nodes, rhs, min_gap: float = 0.0, rtol: float = 1e-6) -> Tuple[np.ndarray, float]:
    """Solve ``sum_i nodes[i]**q * y[i] = rhs[q]`` for q < n; check the rest.

    Uses the Bjorck-Pereyra O(n^2) recurrence on the leading n x n block.
    Returns ``(y, residual)``, the residual being the largest violation over the
    unused equations ``q = n .. len(rhs)-1``.
    """
    x = np.asarray(nodes, dtype=np.float64)
    b_all = np.asarray(rhs, dtype=np.float64)
    n = len(x)
    if n == 0:
        resid = float(np.abs(b_all).max()) if len(b_all) else 0.0
        if resid > rtol * (1.0 + resid):
            raise InconsistentSystemError(f"empty node set but rhs has magnitude {resid:.3g}")
        return np.zeros(0), resid
    if len(b_all) < n:
        raise ValueError(f"rhs has {len(b_all)} entries, need at least {n}")
    if n > 1:
        xs = np.sort(x)
        gaps = np.diff(xs)
        if np.any(gaps <= min_gap):
            raise DegenerateNodesError(f"nodes not distinct (min gap {gaps.min():.3g})")
    b = b_all[:n].copy()
    N = n - 1
    for k in range(N):
        for i in range(N, k, -1):
            b[i] -= x[k] * b[i - 1]
    for k in range(N - 1, -1, -1):
        for i in range(k + 1, N + 1):
            b[i] /= x[i] - x[i - k - 1]
        for i in range(k, N):
            b[i] -= b[i + 1]
    resid = 0.0
    if len(b_all) > n:
        q = np.arange(n, len(b_all))[:, None]
        pred = (x[None, :] ** q) @ b
        resid = float(np.abs(pred - b_all[n:]).max())
        if resid > rtol * (1.0 + float(np.abs(b_all).max())):
            raise InconsistentSystemError(f"unused equations violated by {resid:.3g}")
    return b, resid


class DecodeStatus(str, Enum):
    FULL = "Full"
    PARTIAL_GROUPS = "PartialGroups"
    FAILED = "Failed"


@dataclass
class GroupSum:
    value: float
    multiplicity: int
    sums: np.ndarray  # per-coordinate sums over the group, coordinates 2..d


@dataclass
class DecodeResult:
    status: DecodeStatus
    elements: Optional[np.ndarray] = None
    group_sums: List[GroupSum] = field(default_factory=list)
    residual: float = 0.0
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status is not DecodeStatus.FAILED


def cluster_roots(roots: np.ndarray, rtol: float = CLUSTER_RTOL) -> List[Tuple[float, int]]:
    """Group sorted roots closer than ``rtol*(1+|r|)``; returns (mean, count) pairs."""
    groups: List[List[float]] = []
    for r in np.sort(roots):
        if groups and abs(r - groups[-1][-1]) <= rtol * (1.0 + abs(r)):
            groups[-1].append(r)
        else:
            groups.append([r])
    return [(float(np.mean(g)), len(g)) for g in groups]


def polish_values(values, mult, power_sums, iters: int = 8) -> np.ndarray:
    """Newton refinement of distinct values with known multiplicities.

    Solves ``sum_g mult[g] * v[g]**q = power_sums[q-1]`` for q = 1..len(power_sums)
    in the least-squares sense; well conditioned once multiplicities are fixed.
    """
    v = np.array(values, dtype=np.float64)
    m = np.asarray(mult, dtype=np.float64)
    p = np.asarray(power_sums, dtype=np.float64)
    Q = np.arange(1, len(p) + 1)[:, None]
    for _ in range(iters):
        F = (v[None, :] ** Q) @ m - p
        J = Q * v[None, :] ** (Q - 1) * m[None, :]
        step, *_ = np.linalg.lstsq(J, F, rcond=None)
        v_new = v - step
        if not np.all(np.isfinite(v_new)):
            break
        done = np.max(np.abs(step)) <= 1e-15 * (1 + np.max(np.abs(v)))
        v = v_new
        if done:
            break
    return v


def _recover_first_coordinates(first: np.ndarray, n: int, M: int, atol: float):
    """Distinct first-coordinate values and multiplicities from the first block.

    Multiple roots come out of the eigensolver split by ~eps^(1/k). Wide
    clusterings are tried first but only kept when they fit to round-off;
    otherwise the tightest clustering whose power sums all check out wins.
    """
    e = newton_girard(first[1 : n + 1], n)
    try:
        roots = poly_roots_real(e)
    except NonRealRootsError:
        # split multiple roots can carry imaginary parts up to ~eps^(1/n); accept
        # them provisionally and let the power-sum residual decide
        roots = poly_roots_real(e, tol_imag=max(1e-6, 10 * np.finfo(float).eps ** (1.0 / n)) * max(1.0, np.abs(e).max()))
    Q = np.arange(1, M + 1)[:, None]

    def attempt(rtol):
        groups = cluster_roots(roots, rtol)
        vals = np.array([g[0] for g in groups])
        mult = np.array([g[1] for g in groups])
        if len(vals) > 1 and np.min(np.diff(np.sort(vals))) <= 0:
            return None
        vals = polish_values(vals, mult, first[1:])
        return vals, mult, float(np.abs((vals[None, :] ** Q) @ mult - first[1:]).max())

    # coarse to fine: a merged group is only kept if it reproduces every power
    # sum to round-off, so genuinely distinct values never collapse (merging two
    # values a gap g apart leaves a residual of order g^2)
    exact = EXACT_RTOL * max(1.0, float(np.abs(first).max()))
    for rtol in (1e-2, 1e-3, 1e-4):
        got = attempt(rtol)
        if got is not None and got[2] <= exact:
            return got
    best = None
    for rtol in (CLUSTER_RTOL, 1e-4, 1e-3):
        got = attempt(rtol)
        if got is None:
            continue
        if best is None or got[2] < best[2]:
            best = got
        if got[2] <= atol:
            return got
    if best is None:
        raise DegenerateNodesError("root clusters could not be separated")
    raise InconsistentSystemError(f"first-coordinate power sums violated by {best[2]:.3g}")


def decode_multiset(enc: PowerEncoding, tol: float = 1e-6) -> DecodeResult:
    """Invert :func:`encode_multiset`.

    Returns ``Full`` with the recovered elements when the recovered first
    coordinates are pairwise distinct. When some coincide, only per-group sums
    of the other coordinates are determined and ``PartialGroups`` is returned.
    Numerical failures come back as ``Failed`` with a diagnostic message.
    """
    try:
        return _decode(enc, tol)
    except CodecError as exc:
        return DecodeResult(DecodeStatus.FAILED, message=f"{type(exc).__name__}: {exc}")


def _decode(enc: PowerEncoding, tol: float) -> DecodeResult:
    if tol <= 0:
        raise ValueError("tol must be positive")
    V, d, M = enc.values, enc.d, enc.M
    if not np.all(np.isfinite(V)):
        raise InconsistentSystemError("encoding contains non-finite values")
    n = int(np.rint(V[0]))
    if abs(V[0] - n) > tol or n < 0:
        raise InconsistentSystemError(f"entry 0 = {float(V[0])!r} is not an element count")
    if n > M:
        raise CapacityError(f"element count {n} exceeds capacity M={M}")
    scale_v = max(1.0, float(np.abs(V).max()))
    if n == 0:
        resid = float(np.abs(V).max())
        if resid > tol:
            raise InconsistentSystemError(f"empty multiset but encoding has magnitude {resid:.3g}")
        return DecodeResult(DecodeStatus.FULL, elements=np.zeros((0, d)), residual=resid)

    first = enc.block(0)
    vals, mult, first_resid = _recover_first_coordinates(first, n, M, tol * scale_v)

    order = np.argsort(vals)
    vals, mult = vals[order], mult[order]
    coord_sums = np.zeros((len(vals), d - 1))
    for j in range(1, d):
        y, _ = vandermonde_solve(vals, enc.block(j), rtol=tol)
        coord_sums[:, j - 1] = y

    # with no other coordinates, repeated values are already the whole answer
    if d == 1 or np.all(mult == 1):
        Y = np.column_stack([np.repeat(vals, mult), np.repeat(coord_sums, mult, axis=0)])
        recon = encode_multiset(Y, M, d=d, rescale=False).values
        resid = float(np.abs(recon - V).max())
        if resid > tol * scale_v:
            raise InconsistentSystemError(f"re-encoding residual {resid:.3g} exceeds tolerance")
        X = untransform_elements(Y, M, enc.normalize, enc.premix, enc.shift, enc.scale)
        return DecodeResult(DecodeStatus.FULL, elements=X, residual=resid)

    group_sums = [GroupSum(float(v), int(k), coord_sums[i].copy()) for i, (v, k) in enumerate(zip(vals, mult))]
    resid = 0.0
    for j in range(1, d):
        rhs = enc.block(j)
        q = np.arange(M)[:, None]
        resid = max(resid, float(np.abs((vals[None, :] ** q) @ coord_sums[:, j - 1] - rhs).max()))
    return DecodeResult(
        DecodeStatus.PARTIAL_GROUPS,
        group_sums=group_sums,
        residual=max(resid, first_resid),
        message="first coordinates repeat; only per-group coordinate sums are determined",
    )


def encodings_to_csv(encodings) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for enc in encodings:
        w.writerow(enc.to_row())
    return buf.getvalue()


def encodings_from_csv(text: str) -> List[PowerEncoding]:
    """Parse rows of ``d, M, v_0, ..., v_{dM}``."""
    out = []
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or not "".join(row).strip():
            continue
        try:
            d, M = int(row[0]), int(row[1])
            vals = [float(t) for t in row[2:]]
        except (ValueError, IndexError) as exc:
            raise ValueError(f"line {lineno}: malformed encoding row ({exc})") from None
        out.append(PowerEncoding(np.array(vals), d, M))
    return out
