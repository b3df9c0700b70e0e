"""Special functions, finite parts of Dirichlet-type series, and w_Q.

Everything zeta-related is evaluated by Euler-Maclaurin summation in the
right half of the documented range and by the functional equation on the
far left.  The finite-part machinery reads diagonal sequences d(k) off
dense truncations, fits an expansion d(k) ~ sum_j c_j k^{-j} to the tail,
and assembles the constant term of sum_k d(k) k^z at z = 0.
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import special

from .circle_ops import OperatorProduct, ZollRegularizer, _OperatorBase

__all__ = [
    "PoleError",
    "MatrixLogDomainError",
    "TailFitError",
    "bernoulli",
    "bernoulli_modern",
    "riemann_zeta",
    "c_function",
    "euler_gamma",
    "hardy_partial_sum",
    "DiagonalSequence",
    "TailModel",
    "FinitePartResult",
    "ZetaParams",
    "diagonal_pairs",
    "fit_tail",
    "finite_part_dirichlet",
    "matrix_log",
    "matrix_log_dense",
    "w_q",
    "finite_part_of_matrix",
    "zeta_trace_function",
    "truncated_qz_trace",
]

ZETA_RANGE_IM = 50.0
ZETA_RANGE_RE = (-20.0, 30.0)
LOG_SERIES_MARGIN = 0.05


class PoleError(ZeroDivisionError):
    pass


class MatrixLogDomainError(ValueError):
    pass


class TailFitError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Bernoulli numbers
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _bernoulli_table(nmax: int) -> tuple[Fraction, ...]:
    # Akiyama-Tanigawa; yields B_1 = +1/2, only even indices are used here
    a = [Fraction(0)] * (nmax + 1)
    out = []
    for m in range(nmax + 1):
        a[m] = Fraction(1, m + 1)
        for j in range(m, 0, -1):
            a[j - 1] = j * (a[j - 1] - a[j])
        out.append(a[0])
    return tuple(out)


def bernoulli_modern(n: int) -> Fraction:
    """B_n in the modern convention (B_2 = 1/6, B_4 = -1/30, ...)."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    return _bernoulli_table(max(n, 64))[n]


def bernoulli(p: int) -> Fraction:
    """Hardy's B_p = |B_{2p}|: 1/6, 1/30, 1/42, 1/30, ..."""
    if p < 1:
        raise ValueError("p must be >= 1")
    return abs(bernoulli_modern(2 * p))


@lru_cache(maxsize=None)
def _em_coeffs(pmax: int) -> np.ndarray:
    # B_{2p} / (2p)! as floats
    return np.array([float(bernoulli_modern(2 * p) / math.factorial(2 * p)) for p in range(1, pmax + 1)])


# ---------------------------------------------------------------------------
# Riemann zeta and C(s)
# ---------------------------------------------------------------------------


def _exprel(x: complex) -> complex:
    """(e^x - 1) / x, continuous at 0."""
    if abs(x) < 1e-4:
        return 1 + x / 2 + x * x / 6 + x**3 / 24 + x**4 / 120
    return complex(np.expm1(complex(x))) / x


def _em_core(s: complex) -> tuple[complex, int]:
    """Euler-Maclaurin pieces sum_{k<M} k^-s + M^-s/2 + corrections, without the M^{1-s}/(s-1) term."""
    M = max(16, int(abs(s)) + 8)
    k = np.arange(1, M, dtype=float)
    head = complex(np.sum(np.exp(-s * np.log(k))))
    logM = math.log(M)
    total = head + cmath.exp(-s * logM) / 2
    coeffs = _em_coeffs(40)
    rising = complex(s)  # s (s+1) ... (s+2p-2)
    scale = abs(total) + 1.0
    for p in range(1, 41):
        term = coeffs[p - 1] * rising * cmath.exp((-s - 2 * p + 1) * logM)
        total += term
        if abs(term) < 1e-18 * scale:
            break
        rising *= (s + 2 * p - 1) * (s + 2 * p)
    return total, M


def _check_range(s: complex) -> None:
    if abs(s.imag) > ZETA_RANGE_IM or not (ZETA_RANGE_RE[0] <= s.real <= ZETA_RANGE_RE[1]):
        raise ValueError(f"s = {s} outside the supported range |Im s| <= 50, -20 <= Re s <= 30")


def riemann_zeta(s: complex) -> complex:
    """zeta(s) for s != 1 in |Im s| <= 50, -20 <= Re s <= 30."""
    s = complex(s)
    if s == 1:
        raise PoleError("zeta has a pole at s = 1")
    _check_range(s)
    if s.real < -1.0:
        if s.imag == 0 and s.real == round(s.real) and round(s.real) % 2 == 0:
            return 0j
        # zeta(s) = 2^s pi^(s-1) sin(pi s / 2) Gamma(1 - s) zeta(1 - s)
        return (2**s * math.pi ** (s - 1) * cmath.sin(math.pi * s / 2)
                * complex(special.gamma(1 - s)) * riemann_zeta(1 - s))
    core, M = _em_core(s)
    return core + cmath.exp((1 - s) * math.log(M)) / (s - 1)


def c_function(s: complex) -> complex:
    """C(s) = zeta(s) - 1/(s-1), analytic at s = 1 where it equals Euler's constant."""
    s = complex(s)
    if s.real < -1.0:
        return riemann_zeta(s) - 1 / (s - 1)
    _check_range(s)
    core, M = _em_core(s)
    logM = math.log(M)
    # (M^{1-s} - 1)/(s - 1) = -log M * exprel((1 - s) log M)
    return core - logM * _exprel((1 - s) * logM)


def euler_gamma() -> float:
    return c_function(1.0).real


def hardy_partial_sum(s: complex, m: int, depth: int) -> complex:
    """Asymptotic form of sum_{k=1}^m k^s.

    zeta(-s) + m^{s+1}/(s+1) + m^s/2 + sum_{p<=depth} B_{2p}/(2p)! s(s-1)...(s-2p+2) m^{s-2p+1}
    (signed Bernoulli numbers),
    with zeta(-s) + m^{s+1}/(s+1) written as C(-s) + (m^{s+1} - 1)/(s+1) so s = -1 is regular.
    """
    if not 0 <= depth <= 6:
        raise ValueError("depth must be in 0..6")
    if m < 1:
        raise ValueError("m must be positive")
    s = complex(s)
    logm = math.log(m)
    total = c_function(-s) + logm * _exprel((s + 1) * logm) + cmath.exp(s * logm) / 2
    falling = s
    for p in range(1, depth + 1):
        total += float(bernoulli_modern(2 * p) / math.factorial(2 * p)) * falling * cmath.exp((s - 2 * p + 1) * logm)
        falling *= (s - 2 * p + 1) * (s - 2 * p)
    return total


# ---------------------------------------------------------------------------
# Diagonal sequences and tail models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiagonalSequence:
    """d(k) for k = 1..N, stored as an array with values[k-1] = d(k)."""

    values: np.ndarray
    source: str = ""

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=complex)
        if arr.ndim != 1 or not np.all(np.isfinite(arr)):
            raise ValueError("diagonal sequence must be a finite 1-d array")
        object.__setattr__(self, "values", arr)

    @property
    def N(self) -> int:
        return len(self.values)

    def __call__(self, k):
        return self.values[np.asarray(k) - 1]

    @classmethod
    def from_function(cls, fn, N: int, source: str = "") -> "DiagonalSequence":
        k = np.arange(1, N + 1, dtype=float)
        return cls(np.asarray(fn(k), dtype=complex) * np.ones(N), source)

    def __add__(self, other: "DiagonalSequence") -> "DiagonalSequence":
        n = min(self.N, other.N)
        return DiagonalSequence(self.values[:n] + other.values[:n], f"({self.source})+({other.source})")

    def scaled(self, c: complex) -> "DiagonalSequence":
        return DiagonalSequence(c * self.values, self.source)


def diagonal_pairs(M: np.ndarray, n_inner: int) -> DiagonalSequence:
    """d(k) = M[k,k] + M[-k,-k] for k = 1..n_inner, modes centred in M."""
    n = (M.shape[0] - 1) // 2
    if n_inner > n:
        raise ValueError("inner window exceeds the matrix")
    k = np.arange(1, n_inner + 1)
    diag = np.diagonal(M)
    return DiagonalSequence(diag[n + k] + diag[n - k])


@dataclass(frozen=True)
class TailModel:
    """d(k) ~ sum_j c[j] k^{-j} fitted on the window [K0, K1]."""

    c: np.ndarray
    fit_window: tuple[int, int]
    residual: float
    powers: tuple[int, ...] = ()

    def __post_init__(self):
        c = np.asarray(self.c, dtype=complex)
        object.__setattr__(self, "c", c)
        if not self.powers:
            object.__setattr__(self, "powers", tuple(range(len(c))))

    def coefficient(self, j: int) -> complex:
        return complex(self.c[j]) if j < len(self.c) else 0j

    def __call__(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=float)
        out = np.zeros(k.shape, dtype=complex)
        for j, cj in enumerate(self.c):
            if cj != 0:
                out += cj * k ** (-j)
        return out


def fit_tail(d: DiagonalSequence, J: int, window: tuple[int, int],
             powers: Sequence[int] | None = None) -> TailModel:
    """Least-squares fit of d(k) by sum_{j in powers} c_j k^{-j} over the window (default powers 0..J)."""
    K0, K1 = (int(w) for w in window)
    powers = tuple(range(J + 1)) if powers is None else tuple(sorted(powers))
    if K1 - K0 < len(powers) + 2:
        raise TailFitError(f"window [{K0}, {K1}] too short for {len(powers)} tail coefficients")
    if K0 < 1 or K1 > d.N:
        raise TailFitError(f"window [{K0}, {K1}] not inside 1..{d.N}")
    k = np.arange(K0, K1 + 1, dtype=float)
    x = K1 / k  # in [1, K1/K0]; keeps the monomial basis well scaled
    design = np.stack([x**j for j in powers], axis=1)
    cond = np.linalg.cond(design)
    if cond > 1e12:
        raise TailFitError(f"tail basis ill-conditioned (cond {cond:.2e}); use fewer terms")
    y = d(np.arange(K0, K1 + 1))
    sol, *_ = np.linalg.lstsq(design, y, rcond=None)
    c = np.zeros(max(powers) + 1, dtype=complex)
    for j, a in zip(powers, sol):
        c[j] = a * float(K1) ** j
    model = TailModel(c, (K0, K1), 0.0, powers)
    resid = float(np.max(np.abs(y - model(k)))) if len(k) else 0.0
    return TailModel(c, (K0, K1), resid, powers)


@dataclass(frozen=True)
class FinitePartResult:
    """Constant term and residue of sum_k d(k) (c k)^z at z = 0.

    ``pole_residue`` is the Laurent residue; with d(k) ~ c_1/k it equals -c_1.
    """

    finite_part: complex
    pole_residue: complex
    diagnostics: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "finite_part": [self.finite_part.real, self.finite_part.imag],
            "pole_residue": [self.pole_residue.real, self.pole_residue.imag],
            "tail_residual": float(self.diagnostics.get("tail_residual", 0.0)),
            "split_K": int(self.diagnostics.get("split_K", 0)),
        }


def _zeta_channel(j: int) -> complex:
    # finite part of zeta(j - z) at z = 0
    if j == 1:
        return euler_gamma()
    return riemann_zeta(j)


def finite_part_dirichlet(d: DiagonalSequence, model: TailModel, K: int | None = None,
                          scale: float = 1.0) -> FinitePartResult:
    """f.p. at z=0 of sum_{k>=1} d(k) (scale*k)^z, assuming d = model beyond K."""
    K = model.fit_window[1] if K is None else int(K)
    if K > d.N:
        raise ValueError("split point beyond the available diagonal")
    if K < model.fit_window[1] and model.fit_window[1] > d.N:
        raise ValueError("model window must end at or beyond K")
    k = np.arange(1, K + 1)
    head = complex(np.sum(d(k) - model(k)))
    tail = sum(model.coefficient(j) * _zeta_channel(j) for j in range(len(model.c)))
    residue = -model.coefficient(1)
    fp = head + tail + residue * math.log(scale)
    beyond = np.arange(K + 1, d.N + 1)
    dropped = float(np.sum(np.abs(d(beyond) - model(beyond)))) if len(beyond) else 0.0
    diag = {
        "tail_residual": model.residual,
        "truncation_bound": dropped,
        "split_K": K,
        "tail_coefficients": [[complex(c).real, complex(c).imag] for c in model.c],
    }
    return FinitePartResult(complex(fp), complex(residue), diag)


# ---------------------------------------------------------------------------
# Operator logarithm and w_Q
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ZetaParams:
    n_outer: int = 300
    inner_ratio: float = 0.5
    tail_terms: int = 4
    window: tuple[int, int] | None = None
    log_tol: float = 1e-15
    tail_warn: float = 1e-8

    @property
    def n_inner(self) -> int:
        return int(self.n_outer * self.inner_ratio)

    @property
    def fit_window(self) -> tuple[int, int]:
        if self.window is not None:
            return self.window
        return (self.n_inner // 2, self.n_inner)

    def doubled(self) -> "ZetaParams":
        win = None if self.window is None else (2 * self.window[0], 2 * self.window[1])
        return ZetaParams(2 * self.n_outer, self.inner_ratio, self.tail_terms, win,
                          self.log_tol, self.tail_warn)


def matrix_log_dense(M: np.ndarray, tol: float = 1e-15) -> np.ndarray:
    """log M by the series -sum_r (I - M/lam)^r / r plus log(lam) I.

    lam = 1 when ||I - M|| <= 0.95; otherwise the midpoint of the extreme
    singular values of M, which is optimal for Hermitian positive M.
    """
    size = M.shape[0]
    eye = np.eye(size)
    lam = 1.0
    X = eye - M
    norm = np.linalg.norm(X, 2)
    if norm > 1 - LOG_SERIES_MARGIN:
        sv = np.linalg.svd(M, compute_uv=False)
        lam = 0.5 * (sv[0] + sv[-1])
        X = eye - M / lam
        norm = np.linalg.norm(X, 2)
    if norm > 1 - LOG_SERIES_MARGIN:
        raise MatrixLogDomainError(
            f"||I - B/lam|| = {norm:.3f} exceeds {1 - LOG_SERIES_MARGIN}; rescale B or use a smaller perturbation")
    dtype = float if np.isrealobj(X) or not np.any(X.imag) else complex
    X = np.ascontiguousarray(X.real if dtype is float else X)
    out = np.zeros(M.shape, dtype=dtype)
    power = eye.astype(dtype)
    r = 0
    while True:
        r += 1
        power = power @ X
        # flush entries that would turn subnormal; they stall BLAS
        power[np.abs(power) < 1e-250] = 0.0
        out -= power / r
        # remainder bound sum_{s>r} norm^s / s
        if norm ** (r + 1) / ((r + 1) * (1 - norm)) < tol:
            break
        if r > 5000:
            raise MatrixLogDomainError("log series failed to converge")
    if lam != 1.0:
        out += math.log(lam) * eye
    return out.astype(complex)


def matrix_log(B: _OperatorBase, N_outer: int, tol: float = 1e-15) -> np.ndarray:
    """log of the N_outer truncation of B (modes -N_outer..N_outer)."""
    return matrix_log_dense(B.truncate(N_outer), tol)


def _assemble(M: np.ndarray, Q: ZollRegularizer, params: ZetaParams, source: str) -> FinitePartResult:
    n = (M.shape[0] - 1) // 2
    d = diagonal_pairs(M, params.n_inner)
    d = DiagonalSequence(d.values, source)
    model = fit_tail(d, params.tail_terms, params.fit_window)
    res = finite_part_dirichlet(d, model, params.fit_window[1], Q.scale)
    diag = dict(res.diagnostics)
    diag["n_outer"] = n
    diag["n_inner"] = params.n_inner
    fp = res.finite_part
    if Q.positive:
        fp += complex(M[n, n])
        diag["kernel_term"] = [M[n, n].real, M[n, n].imag]
    if model.residual > params.tail_warn:
        diag["warning"] = f"tail residual {model.residual:.2e} above {params.tail_warn:.0e}"
        warnings.warn(diag["warning"], RuntimeWarning, stacklevel=3)
    return FinitePartResult(complex(fp), res.pole_residue, diag)


def w_q(B: _OperatorBase, Q: ZollRegularizer | None = None, params: ZetaParams | None = None,
        log_matrix: np.ndarray | None = None) -> FinitePartResult:
    """Zeta-regularized log det: f.p. at z=0 of tr (log B) Q^z."""
    Q = Q or ZollRegularizer()
    params = params or ZetaParams()
    L = matrix_log(B, params.n_outer, params.log_tol) if log_matrix is None else log_matrix
    return _assemble(L, Q, params, "log B")


def finite_part_of_matrix(M: np.ndarray, Q: ZollRegularizer | None = None,
                          params: ZetaParams | None = None) -> FinitePartResult:
    """f.p. at z=0 of tr M Q^z for an explicit outer truncation M."""
    Q = Q or ZollRegularizer()
    params = params or ZetaParams(n_outer=(M.shape[0] - 1) // 2)
    return _assemble(M, Q, params, "matrix")


def _power_truncation(A: _OperatorBase, r: int, n: int) -> np.ndarray:
    return OperatorProduct((A,) * r).truncate(n) if r > 1 else A.truncate(n)


def zeta_trace_function(A: _OperatorBase, r: int, z: complex, params: ZetaParams | None = None,
                        Q: ZollRegularizer | None = None) -> complex:
    """Continuation of tr A^r Q^z: sum_{k<=K} (d_r - model) k^z + sum_j c_j zeta(j - z).

    Exactly at a pole z = j - 1 the finite part of the Laurent expansion is returned.
    """
    Q = Q or ZollRegularizer()
    params = params or ZetaParams()
    z = complex(z)
    M = _power_truncation(A, r, params.n_outer)
    d = diagonal_pairs(M, params.n_inner)
    model = fit_tail(d, params.tail_terms, params.fit_window)
    K = params.fit_window[1]
    k = np.arange(1, K + 1, dtype=float)
    head = complex(np.sum((d(np.arange(1, K + 1)) - model(k)) * np.exp(z * np.log(k))))
    tail = 0j
    at_pole = 0j
    for j in range(len(model.c)):
        cj = model.coefficient(j)
        if cj == 0:
            continue
        if j - z == 1:
            # on the pole itself: Laurent constant of c_j zeta(1 - (z - z0)) scale^z
            at_pole += cj * (euler_gamma() - math.log(Q.scale))
        else:
            tail += cj * riemann_zeta(j - z)
    total = (head + tail + at_pole) * Q.scale**z
    if Q.positive:
        n = params.n_outer
        total += M[n, n] * Q.scale**z
    return complex(total)


def truncated_qz_trace(A: _OperatorBase, r: int, n: int, z: complex, Q: ZollRegularizer | None = None) -> complex:
    """tr (P_n A P_n)^r Q^z computed exactly on the (2n+1)-dimensional truncation."""
    Q = Q or ZollRegularizer()
    M = A.truncate(n)
    P = np.linalg.matrix_power(M, r) if r > 1 else M
    w = Q.power_weights(np.arange(-n, n + 1), z)
    return complex(np.sum(np.diagonal(P) * w))
