"""Homogeneous symbols on the cosphere bundle of the 2-torus.

A symbol of degree r is stored through its restriction to |xi| = 1,

    f(x, xi) = |xi|^r F(x, omega) + mu log|xi|,   xi = |xi| (cos omega, sin omega),

sampled on a uniform N x N x N_omega grid.  Derivatives in x and omega are
spectral; fiber derivatives come from the polar formulas

    d/dxi_1 = cos(omega) (r F + mu) - sin(omega) dF/domega
    d/dxi_2 = sin(omega) (r F + mu) + cos(omega) dF/domega

evaluated at |xi| = 1.  Poisson bracket sign:
{f, g} = sum_i df/dxi_i dg/dx_i - df/dx_i dg/dxi_i.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

__all__ = [
    "Symbol2D",
    "GridMismatchError",
    "from_trig",
    "from_function",
    "constant",
    "poisson",
    "product",
    "residue2d",
    "identity_suite",
    "sigma_formula_d2",
    "sym_anomaly_d2",
    "vanishing_checks",
    "random_trig_spec",
    "exp_symbol",
]


class GridMismatchError(ValueError):
    pass


def _is_pow2(n: int) -> bool:
    return n >= 16 and n & (n - 1) == 0


@dataclass(frozen=True, eq=False)
class Symbol2D:
    values: np.ndarray
    degree: int = 0
    log_coeff: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 3 or v.shape[0] != v.shape[1]:
            raise ValueError("values must have shape (N, N, N_omega)")
        if not all(_is_pow2(s) for s in v.shape):
            raise ValueError(f"grid sizes must be powers of two >= 16, got {v.shape}")
        if self.log_coeff != 0 and self.degree != 0:
            raise ValueError("a log|xi| term is only allowed at degree 0")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    def _check(self, other: "Symbol2D") -> None:
        if self.shape != other.shape:
            raise GridMismatchError(f"grid {self.shape} vs {other.shape}")

    def __add__(self, other: "Symbol2D") -> "Symbol2D":
        self._check(other)
        if self.degree != other.degree:
            raise ValueError("cannot add symbols of different degree")
        return Symbol2D(self.values + other.values, self.degree, self.log_coeff + other.log_coeff)

    def __neg__(self) -> "Symbol2D":
        return Symbol2D(-self.values, self.degree, -self.log_coeff)

    def __sub__(self, other: "Symbol2D") -> "Symbol2D":
        return self + (-other)

    def scaled(self, c: float) -> "Symbol2D":
        return Symbol2D(c * self.values, self.degree, c * self.log_coeff)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))


def _grid(N: int, Nw: int):
    x = 2 * np.pi * np.arange(N) / N
    w = 2 * np.pi * np.arange(Nw) / Nw
    return np.meshgrid(x, x, w, indexing="ij")


def from_trig(spec: Mapping, N: int = 64, Nw: int = 64) -> Symbol2D:
    """Symbol from {"modes": [{kx1, kx2, kw, cos, sin}, ...], "degree", "log_coeff"}."""
    X1, X2, W = _grid(N, Nw)
    vals = np.zeros((N, N, Nw))
    for m in spec.get("modes", []):
        phase = m.get("kx1", 0) * X1 + m.get("kx2", 0) * X2 + m.get("kw", 0) * W
        vals += float(m.get("cos", 0.0)) * np.cos(phase) + float(m.get("sin", 0.0)) * np.sin(phase)
    return Symbol2D(vals, int(spec.get("degree", 0)), float(spec.get("log_coeff", 0.0)))


def from_function(fn, N: int = 64, Nw: int = 64, degree: int = 0, log_coeff: float = 0.0) -> Symbol2D:
    """Sample fn(x1, x2, omega) on the grid."""
    X1, X2, W = _grid(N, Nw)
    return Symbol2D(np.asarray(fn(X1, X2, W)) * np.ones((N, N, Nw)), degree, log_coeff)


def constant(c: float, N: int = 64, Nw: int = 64, degree: int = 0) -> Symbol2D:
    return Symbol2D(np.full((N, N, Nw), c), degree)


def _dspec(v: np.ndarray, axis: int) -> np.ndarray:
    n = v.shape[axis]
    shape = [1, 1, 1]
    if np.isrealobj(v):
        k = np.fft.rfftfreq(n, 1.0 / n)
        k[-1] = 0.0  # drop the unpaired Nyquist mode
        shape[axis] = k.size
        return np.fft.irfft((1j * k).reshape(shape) * np.fft.rfft(v, axis=axis), n=n, axis=axis)
    k = np.fft.fftfreq(n, 1.0 / n)
    k[n // 2] = 0.0
    shape[axis] = n
    return np.fft.ifft((1j * k).reshape(shape) * np.fft.fft(v, axis=axis), axis=axis)


def _fiber_derivatives(f: Symbol2D) -> tuple[np.ndarray, np.ndarray]:
    Nw = f.shape[2]
    w = 2 * np.pi * np.arange(Nw) / Nw
    c, s = np.cos(w), np.sin(w)
    radial = f.degree * f.values + f.log_coeff
    dw = _dspec(f.values, 2)
    return c * radial - s * dw, s * radial + c * dw


def poisson(f: Symbol2D, g: Symbol2D) -> Symbol2D:
    """{f, g}; degree deg f + deg g - 1, no log term."""
    f._check(g)
    f1, f2 = _fiber_derivatives(f)
    g1, g2 = _fiber_derivatives(g)
    fx1, fx2 = _dspec(f.values, 0), _dspec(f.values, 1)
    gx1, gx2 = _dspec(g.values, 0), _dspec(g.values, 1)
    out = (f1 * gx1 - fx1 * g1) + (f2 * gx2 - fx2 * g2)
    return Symbol2D(out, f.degree + g.degree - 1)


def product(f: Symbol2D, g: Symbol2D) -> Symbol2D:
    f._check(g)
    if f.log_coeff != 0 and g.log_coeff != 0:
        raise ValueError("product of two log-type symbols is outside the supported calculus")
    if f.log_coeff != 0 or g.log_coeff != 0:
        # the log term survives only as mu * (other factor); representable at degree 0 only
        lg, other = (f, g) if f.log_coeff != 0 else (g, f)
        if other.degree != 0 or np.ptp(other.values) > 0:
            raise ValueError("log-type factor times a non-constant symbol is not homogeneous")
        c = float(other.values.flat[0])
        return Symbol2D(lg.values * c, 0, lg.log_coeff * c)
    return Symbol2D(f.values * g.values, f.degree + g.degree)


def residue2d(f: Symbol2D) -> complex | float:
    """(2 pi)^-2 times the integral of f over T^2 x S^1 (trapezoidal rule)."""
    if f.degree != -2:
        raise ValueError(f"residue density must have degree -2, got {f.degree}")
    if f.log_coeff != 0:
        raise ValueError("residue of a log-type symbol is undefined")
    val = 2 * np.pi * np.mean(f.values)
    return complex(val) if np.iscomplexobj(val) else float(val)


def _log_positive(a: Symbol2D, name: str) -> Symbol2D:
    if a.degree != 0 or a.log_coeff != 0:
        raise ValueError(f"{name} must be a degree-0 symbol without log term")
    if np.iscomplexobj(a.values) or np.min(a.values) <= 0:
        raise ValueError(f"{name} must be strictly positive on the grid")
    return Symbol2D(np.log(a.values), 0)


def identity_suite(b: Symbol2D, a: Symbol2D, q: Symbol2D) -> dict:
    """Max-norm residuals of the two bracket identities used for the d=2 anomaly.

    (i)  {{b, L}, log b} = {b, {L, log b}}
    (ii) b^-1 {{b, L}, log a} = -{log a, {log b, L}} + {log b, L}{log b, log a}
    with L = log q.
    """
    lb = _log_positive(b, "b")
    la = _log_positive(a, "a")
    L = q
    bL = poisson(b, L)
    r1 = poisson(bL, lb) - poisson(b, poisson(L, lb))
    lbL = poisson(lb, L)
    lhs2 = Symbol2D(poisson(bL, la).values / b.values, -2)
    rhs2 = -poisson(la, lbL) + product(lbL, poisson(lb, la))
    r2 = lhs2 - rhs2
    scale = max(bL.max_abs(), 1.0)
    return {
        "grid": list(b.shape),
        "jacobi_log_b": r1.max_abs(),
        "leibniz_log_a": r2.max_abs(),
        "max_residual": max(r1.max_abs(), r2.max_abs()),
        "scale": scale,
    }


def sigma_formula_d2(log_a: Symbol2D, dlog_a: Symbol2D, log_q: Symbol2D) -> float:
    """(1/6) res(delta log a {log a, {log a, log q}})."""
    inner = poisson(log_a, poisson(log_a, log_q))
    return residue2d(product(dlog_a, inner)) / 6


def sym_anomaly_d2(log_a: Symbol2D, log_b: Symbol2D, log_q: Symbol2D) -> float:
    """(1/12) res({log a, log b}{log a - log b, log q})."""
    return residue2d(product(poisson(log_a, log_b), poisson(log_a - log_b, log_q))) / 12


def vanishing_checks(log_a: Symbol2D, log_b: Symbol2D, log_q: Symbol2D) -> dict:
    X = poisson(log_b, log_q)
    la2 = product(log_a, log_a)
    leib = residue2d(product(log_a, poisson(log_a, X))) - 0.5 * residue2d(poisson(la2, X))
    bracket = residue2d(poisson(la2, X))
    # g'' integrand: the same double bracket taken in both argument orders
    dd = poisson(log_b, poisson(log_b, log_q))
    dd_alt = -poisson(poisson(log_b, log_q), log_b)
    g2 = residue2d(product(log_a, dd - dd_alt))
    return {
        "grid": list(log_a.shape),
        "leibniz_residue": float(abs(leib)),
        "bracket_residue": float(abs(bracket)),
        "g2_integrand_residue": float(abs(g2)),
    }


def random_trig_spec(seed: int, n_modes: int = 6, kmax: int = 2, amplitude: float = 0.3,
                     degree: int = 0, log_coeff: float = 0.0, x_dependent: bool = True) -> dict:
    """Seeded smooth trigonometric polynomial in the config format."""
    rng = np.random.default_rng(seed)
    modes = []
    for _ in range(n_modes):
        kx = rng.integers(-kmax, kmax + 1, 2) if x_dependent else (0, 0)
        modes.append({
            "kx1": int(kx[0]), "kx2": int(kx[1]), "kw": int(rng.integers(0, kmax + 1)),
            "cos": float(rng.uniform(-1, 1) * amplitude), "sin": float(rng.uniform(-1, 1) * amplitude),
        })
    return {"modes": modes, "degree": degree, "log_coeff": log_coeff}


def exp_symbol(f: Symbol2D) -> Symbol2D:
    """Pointwise exponential of a degree-0 symbol (a positive symbol with log = f)."""
    if f.degree != 0 or f.log_coeff != 0:
        raise ValueError("exp is defined for plain degree-0 symbols")
    return Symbol2D(np.exp(f.values), 0)

