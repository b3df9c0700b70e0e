"""Truncated determinants, traces, and asymptotic fits in the truncation size."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import linalg

from .circle_ops import FourierSeries, _OperatorBase, mk_multiplication

__all__ = [
    "SingularTruncationError",
    "RankDeficientFitError",
    "AsymptoticFit",
    "logdet",
    "trace_power",
    "fit_asymptotics",
    "logdet_samples",
    "szego_fit",
    "szego_constant",
    "szego_residual",
    "szego_limit",
    "samples_to_csv",
]


class SingularTruncationError(np.linalg.LinAlgError):
    pass


class RankDeficientFitError(ValueError):
    pass


def logdet(M: np.ndarray) -> complex:
    """log det M from the pivots of a row-pivoted LU factorization.

    The imaginary part is the sum of the principal arguments of the pivots;
    an odd permutation adds +-pi, whichever keeps the total closer to zero.
    Meant for matrices continuously connected to the identity.
    """
    M = np.asarray(M)
    if M.size == 0:
        return 0j
    lu, piv = linalg.lu_factor(M, check_finite=True)
    u = np.diagonal(lu)
    mag = np.abs(u)
    if mag.min() <= M.shape[0] * np.finfo(float).eps * max(mag.max(), 1.0):
        raise SingularTruncationError("truncation is not invertible to working precision")
    re = float(np.sum(np.log(mag)))
    im = float(np.sum(np.angle(u)))
    swaps = int(np.count_nonzero(piv != np.arange(len(piv))))
    if swaps % 2:
        im += -math.pi if im > 0 else math.pi
    return complex(re, im)


def trace_power(M: np.ndarray, r: int) -> complex:
    """tr M^r by repeated multiplication."""
    if r < 1:
        raise ValueError("r must be >= 1")
    P = M
    for _ in range(r - 1):
        P = P @ M
    return complex(np.trace(P))


@dataclass(frozen=True)
class AsymptoticFit:
    """v(n) ~ sum_e coefficients[e] n^e + log_coefficient log n."""

    exponents: tuple[int, ...]
    has_log: bool
    coefficients: dict
    log_coefficient: complex
    residual_norm: float
    condition_estimate: float
    window: tuple[int, int]

    @property
    def constant(self) -> complex:
        return self.coefficients.get(0, 0j)

    def __call__(self, n) -> np.ndarray:
        n = np.asarray(n, dtype=float)
        out = np.zeros(n.shape, dtype=complex)
        for e, c in self.coefficients.items():
            out += c * n**e
        if self.has_log:
            out += self.log_coefficient * np.log(n)
        return out

    def to_json(self) -> dict:
        return {
            "coefficients": {str(e): [c.real, c.imag] for e, c in sorted(self.coefficients.items(), reverse=True)},
            "log_coefficient": [self.log_coefficient.real, self.log_coefficient.imag],
            "residual": self.residual_norm,
            "condition_estimate": self.condition_estimate,
            "window": list(self.window),
        }


def fit_asymptotics(samples: Sequence[tuple[int, complex]], exponents: Iterable[int],
                    has_log: bool = False) -> AsymptoticFit:
    """Least-squares fit of b + sum_k b_k n^k (+ b_0 log n) to (n, value) samples."""
    exps = tuple(sorted({int(e) for e in exponents}, reverse=True))
    if any(e > 1 for e in exps):
        raise ValueError("exponents must be <= 1")
    ns = np.array([s[0] for s in samples], dtype=float)
    ys = np.array([s[1] for s in samples], dtype=complex)
    ncoef = len(exps) + int(has_log)
    if len(ns) < ncoef + 2:
        raise ValueError(f"need at least {ncoef + 2} samples for {ncoef} coefficients")
    if np.any(np.diff(ns) <= 0):
        raise ValueError("samples must be strictly increasing in n")
    nmax = ns[-1]
    x = ns / nmax
    cols = [x**e for e in exps]
    if has_log:
        cols.append(np.log(x))
    design = np.stack(cols, axis=1)
    colnorm = np.linalg.norm(design, axis=0)
    colnorm[colnorm == 0] = 1.0
    scaled = design / colnorm
    if np.linalg.matrix_rank(scaled) < ncoef:
        raise RankDeficientFitError("design matrix is rank deficient; use fewer exponents or a wider window")
    cond = float(np.linalg.cond(scaled))
    sol, *_ = np.linalg.lstsq(scaled, ys, rcond=None)
    sol = sol / colnorm
    resid = float(np.linalg.norm(design @ sol - ys))
    coeffs = {e: complex(a) / nmax**e for e, a in zip(exps, sol)}
    logc = complex(sol[-1]) if has_log else 0j
    if has_log:
        # log x = log n - log nmax folds into the constant
        coeffs[0] = coeffs.get(0, 0j) - logc * math.log(nmax)
    return AsymptoticFit(exps, has_log, coeffs, logc, resid, cond, (int(ns[0]), int(ns[-1])))


def logdet_samples(B: _OperatorBase, ns: Iterable[int], executor=None) -> list[tuple[int, complex]]:
    """(n, logdet P_n B P_n) for each n; ``executor`` (a concurrent.futures pool) is optional."""
    ns = list(ns)
    work = lambda n: logdet(B.truncate(n))  # noqa: E731
    vals = list(executor.map(work, ns)) if executor is not None else [work(n) for n in ns]
    return list(zip(ns, vals))


def szego_fit(B: _OperatorBase, n_min: int | None = None, n_max: int = 200, depth: int = 3,
              samples: Sequence[tuple[int, complex]] | None = None, executor=None) -> AsymptoticFit:
    if depth < 1:
        raise ValueError("depth must be >= 1")
    n_min = n_max // 2 if n_min is None else n_min
    if samples is None:
        samples = logdet_samples(B, range(n_min, n_max + 1), executor)
    return fit_asymptotics(samples, [1, 0, *range(-1, -depth - 1, -1)], has_log=True)


def szego_constant(B: _OperatorBase, n_min: int | None = None, n_max: int = 200, depth: int = 3,
                   samples: Sequence[tuple[int, complex]] | None = None, executor=None) -> complex:
    """Constant term b of log det P_n B P_n with the linear term counted per dimension 2n+1.

    The fitted b_1 n + b is rewritten as (b_1/2)(2n+1) + (b - b_1/2), so for
    a multiplication operator the result is sum_{k>=1} k l(k) l(-k).
    """
    fit = szego_fit(B, n_min, n_max, depth, samples, executor)
    return fit.constant - fit.coefficients[1] / 2


def szego_limit(fhat_logf: FourierSeries) -> complex:
    """sum_{k>=1} k l(k) l(-k) for the Fourier coefficients l of log f."""
    return complex(sum(k * fhat_logf[k] * fhat_logf[-k] for k in fhat_logf.support if k > 0))


def szego_residual(fhat_logf: FourierSeries, n: int) -> float:
    """|log det P_n M_f P_n - (2n+1) l(0) - sum_{k>=1} k l(k) l(-k)| with f = exp(log f)."""
    if not fhat_logf.real:
        raise ValueError("log f must be real-valued so that f is positive")
    B = mk_multiplication(fhat_logf.exp())
    val = logdet(B.truncate(n))
    return abs(val - (2 * n + 1) * fhat_logf[0] - szego_limit(fhat_logf))


def samples_to_csv(samples: Sequence[tuple[int, complex]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "re", "im"])
    for n, v in samples:
        w.writerow([n, repr(complex(v).real), repr(complex(v).imag)])
    return buf.getvalue()


def fit_to_json(fit: AsymptoticFit) -> str:
    return json.dumps(fit.to_json(), sort_keys=True)
