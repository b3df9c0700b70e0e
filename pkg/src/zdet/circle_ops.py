"""Zeroth-order operators on the circle in the Fourier basis e^{ik theta}.

Operators are kept in banded form: a finite list of (shift, multiplier)
terms plus an explicit smoothing part confined to a box of low modes.
Matrix entries are indexed by modes (m, n) with

    A[m, n] = sum over terms with shift == m - n of mult(n) + smoothing(m, n).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "FourierSeries",
    "MultiplierExpansion",
    "SmoothingSpec",
    "CircleOperator",
    "OperatorProduct",
    "ZollRegularizer",
    "mk_multiplication",
    "mk_multiplier",
    "mk_shift",
    "mk_reciprocal_multiplier",
    "mk_smoothing",
    "mk_random_operator",
    "identity",
    "entry",
    "truncate",
    "fourier_component",
    "sigma_of_j",
    "zoll_blocks",
    "decomposition_trace",
    "op_norm_estimate",
    "log_q_diagonal",
]


# ---------------------------------------------------------------------------
# Fourier series
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FourierSeries:
    """Finitely supported Fourier coefficients {k: c_k} of a function on S^1."""

    coeffs: Mapping[int, complex]
    real: bool = False

    def __post_init__(self):
        clean = {int(k): complex(v) for k, v in self.coeffs.items() if v != 0}
        object.__setattr__(self, "coeffs", dict(sorted(clean.items())))
        if self.real:
            for k, v in self.coeffs.items():
                if not np.isclose(self.coeffs.get(-k, 0.0), np.conj(v), rtol=0, atol=1e-15):
                    raise ValueError(f"coefficient at {-k} is not the conjugate of the one at {k}")

    def __getitem__(self, k: int) -> complex:
        return self.coeffs.get(int(k), 0j)

    @property
    def support(self) -> list[int]:
        return list(self.coeffs)

    @classmethod
    def from_trig(cls, const: float = 0.0, cos: Mapping[int, float] | None = None,
                  sin: Mapping[int, float] | None = None) -> "FourierSeries":
        """const + sum a_k cos(k theta) + sum b_k sin(k theta), real coefficients."""
        c: dict[int, complex] = {0: complex(const)}
        for k, a in (cos or {}).items():
            c[k] = c.get(k, 0) + a / 2
            c[-k] = c.get(-k, 0) + a / 2
        for k, b in (sin or {}).items():
            c[k] = c.get(k, 0) + b / 2j
            c[-k] = c.get(-k, 0) - b / 2j
        return cls(c, real=True)

    def evaluate(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        out = np.zeros(theta.shape, dtype=complex)
        for k, v in self.coeffs.items():
            out += v * np.exp(1j * k * theta)
        return out

    def exp(self, cutoff: float = 1e-16, grid: int = 256) -> "FourierSeries":
        """Fourier coefficients of exp(self), dropped below ``cutoff`` relative to the largest."""
        theta = 2 * np.pi * np.arange(grid) / grid
        vals = np.exp(self.evaluate(theta))
        hat = np.fft.fft(vals) / grid
        freqs = np.fft.fftfreq(grid, d=1.0 / grid).astype(int)
        scale = np.abs(hat).max()
        coeffs = {int(k): complex(v) for k, v in zip(freqs, hat) if abs(v) > cutoff * scale}
        if max(abs(k) for k in coeffs) >= grid // 2 - 1:
            raise ValueError("grid too coarse to resolve exp of this series")
        if self.real:
            # enforce exact conjugate symmetry lost to FFT rounding
            sym = {}
            for k, v in coeffs.items():
                partner = coeffs.get(-k, 0j)
                sym[k] = complex((v + np.conj(partner)) / 2)
                if k == 0:
                    sym[k] = complex(sym[k].real)
            coeffs = sym
        return FourierSeries(coeffs, real=self.real)


# ---------------------------------------------------------------------------
# Multipliers and operators
# ---------------------------------------------------------------------------


def _as_complex_tuple(values: Iterable) -> tuple[complex, ...]:
    return tuple(complex(v) for v in values)


@dataclass(frozen=True)
class MultiplierExpansion:
    """Sequence k -> mult(k) given by sum_j c_j^{+-} |k|^{-j} away from a finite exceptional set."""

    plus: tuple[complex, ...]
    minus: tuple[complex, ...]
    exceptional: Mapping[int, complex] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "plus", _as_complex_tuple(self.plus))
        object.__setattr__(self, "minus", _as_complex_tuple(self.minus))
        exc = {int(k): complex(v) for k, v in self.exceptional.items()}
        if 0 not in exc:
            raise ValueError("exceptional set must contain k=0")
        object.__setattr__(self, "exceptional", dict(sorted(exc.items())))

    @classmethod
    def constant(cls, c: complex) -> "MultiplierExpansion":
        return cls((c,), (c,), {0: c})

    def __call__(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=np.int64)
        out = np.zeros(k.shape, dtype=complex)
        absk = np.abs(k).astype(float)
        safe = np.where(absk == 0, 1.0, absk)
        for coeffs, mask in ((self.plus, k > 0), (self.minus, k < 0)):
            acc = np.zeros(k.shape, dtype=complex)
            for j, c in enumerate(coeffs):
                if c != 0:
                    acc += c * safe ** (-j)
            out = np.where(mask, acc, out)
        for kk, v in self.exceptional.items():
            out = np.where(k == kk, v, out)
        return out

    def scaled(self, c: complex) -> "MultiplierExpansion":
        return MultiplierExpansion(
            tuple(c * v for v in self.plus),
            tuple(c * v for v in self.minus),
            {k: c * v for k, v in self.exceptional.items()},
        )

    @property
    def is_zero(self) -> bool:
        return not any(self.plus) and not any(self.minus) and not any(self.exceptional.values())


@dataclass(frozen=True)
class SmoothingSpec:
    """Seeded pseudo-random smoothing block with Gaussian envelope.

    Entries live on |m|, |n| <= support with magnitude bounded by
    amplitude * exp(-(m^2 + n^2) / width^2); ``coeff`` scales the whole block.
    """

    seed: int
    amplitude: float
    width: float
    support: int
    coeff: complex = 1.0
    diagonal: int | None = None

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("amplitude must be nonnegative")
        if self.width <= 0:
            raise ValueError("width must be positive")
        if self.support < 0:
            raise ValueError("support must be nonnegative")
        object.__setattr__(self, "coeff", complex(self.coeff))

    @cached_property
    def block(self) -> np.ndarray:
        s = self.support
        rng = np.random.default_rng(self.seed)
        raw = rng.uniform(-1.0, 1.0, size=(2 * s + 1, 2 * s + 1))
        modes = np.arange(-s, s + 1)
        env = np.exp(-(modes[:, None] ** 2 + modes[None, :] ** 2) / self.width**2)
        out = self.coeff * self.amplitude * env * raw
        if self.diagonal is not None:
            out = np.diag(np.diag(out, -self.diagonal), -self.diagonal)
        out.setflags(write=False)
        return out

    def scaled(self, c: complex) -> "SmoothingSpec":
        return replace(self, coeff=self.coeff * c)

    def on_diagonal(self, k: int) -> "SmoothingSpec":
        return replace(self, diagonal=int(k))


class _OperatorBase:
    """Shared surface for anything that can be truncated to modes -n..n."""

    bandwidth: int
    support: int

    def truncate(self, n: int) -> np.ndarray:
        raise NotImplementedError

    def __matmul__(self, other: "_OperatorBase") -> "OperatorProduct":
        return OperatorProduct((self, other))


@dataclass(frozen=True, eq=False)
class CircleOperator(_OperatorBase):
    """factor * (finite sum of shift x multiplier terms plus smoothing blocks).

    The overall ``factor`` is applied after evaluation, so scaling an
    operator scales its truncations bit for bit.
    """

    terms: tuple[tuple[int, MultiplierExpansion], ...] = ()
    smoothing: tuple[SmoothingSpec, ...] = ()
    factor: complex = 1.0

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple((int(s), m) for s, m in self.terms))
        object.__setattr__(self, "smoothing", tuple(self.smoothing))
        object.__setattr__(self, "factor", complex(self.factor))

    def __eq__(self, other):
        if not isinstance(other, CircleOperator):
            return NotImplemented
        return (self.terms, self.smoothing, self.factor) == (other.terms, other.smoothing, other.factor)

    def __hash__(self):
        return hash((self.terms, self.smoothing, self.factor))

    @property
    def bandwidth(self) -> int:
        return max((abs(s) for s, _ in self.terms), default=0)

    @property
    def support(self) -> int:
        return max((sp.support for sp in self.smoothing), default=-1)

    def materialized(self) -> "CircleOperator":
        """Same operator with the factor pushed into the terms."""
        if self.factor == 1:
            return self
        return CircleOperator(
            tuple((s, m.scaled(self.factor)) for s, m in self.terms),
            tuple(sp.scaled(self.factor) for sp in self.smoothing),
        )

    def __add__(self, other: "CircleOperator") -> "CircleOperator":
        if not isinstance(other, CircleOperator):
            return NotImplemented
        if self.factor == other.factor:
            return CircleOperator(self.terms + other.terms, self.smoothing + other.smoothing, self.factor)
        a, b = self.materialized(), other.materialized()
        return CircleOperator(a.terms + b.terms, a.smoothing + b.smoothing)

    def __neg__(self) -> "CircleOperator":
        return self.scaled(-1)

    def __sub__(self, other: "CircleOperator") -> "CircleOperator":
        return self + (-other)

    def __mul__(self, c) -> "CircleOperator":
        if isinstance(c, _OperatorBase):
            return NotImplemented
        return self.scaled(c)

    __rmul__ = __mul__

    def scaled(self, c: complex) -> "CircleOperator":
        return CircleOperator(self.terms, self.smoothing, self.factor * complex(c))

    def entry(self, m: int, n: int) -> complex:
        val = 0j
        for s, mult in self.terms:
            if s == m - n:
                val += complex(mult(n))
        for sp in self.smoothing:
            if abs(m) <= sp.support and abs(n) <= sp.support:
                val += sp.block[m + sp.support, n + sp.support]
        return self.factor * val if self.factor != 1 else val

    def truncate(self, n: int) -> np.ndarray:
        if n < 0:
            raise ValueError("truncation size must be nonnegative")
        size = 2 * n + 1
        out = np.zeros((size, size), dtype=complex)
        modes = np.arange(-n, n + 1)
        for s, mult in self.terms:
            if abs(s) > 2 * n:
                continue
            cols = modes[max(0, -s): size - max(0, s)]
            vals = mult(cols)
            rows_idx = cols + s + n
            out[rows_idx, cols + n] += vals
        for sp in self.smoothing:
            w = min(sp.support, n)
            blk = sp.block[sp.support - w: sp.support + w + 1, sp.support - w: sp.support + w + 1]
            out[n - w: n + w + 1, n - w: n + w + 1] += blk
        if self.factor != 1:
            out = self.factor * out
        return out


@dataclass(frozen=True, eq=False)
class OperatorProduct(_OperatorBase):
    """Composition F_1 F_2 ... F_k, truncated exactly by padding the inner index."""

    factors: tuple[_OperatorBase, ...]

    def __post_init__(self):
        flat: list[_OperatorBase] = []
        for f in self.factors:
            flat.extend(f.factors if isinstance(f, OperatorProduct) else (f,))
        if not flat:
            raise ValueError("empty product")
        object.__setattr__(self, "factors", tuple(flat))

    @property
    def bandwidth(self) -> int:
        return sum(f.bandwidth for f in self.factors)

    @property
    def support(self) -> int:
        return max(f.support for f in self.factors)

    def truncate(self, n: int) -> np.ndarray:
        # every intermediate index of a nonzero path stays within
        # max(n + total bandwidth, largest smoothing box)
        m = max(n + self.bandwidth, self.support)
        out = self.factors[0].truncate(m)
        for f in self.factors[1:]:
            out = out @ f.truncate(m)
        return out[m - n: m + n + 1, m - n: m + n + 1]


# ---------------------------------------------------------------------------
# Regularizer
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ZollRegularizer:
    """Q e^{ik theta} = scale * |k| e^{ik theta} on nonzero modes.

    With ``positive=False`` the constants are annihilated by every Q^z
    (the circle model of the introduction).  With ``positive=True`` the
    constant mode carries eigenvalue ``scale`` instead, which makes Q an
    invertible positive first-order operator and Q^0 = I.
    """

    scale: float = 1.0
    positive: bool = False

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    def power_weights(self, modes, z: complex) -> np.ndarray:
        modes = np.asarray(modes)
        absk = np.abs(modes).astype(float)
        w = (self.scale * np.where(absk == 0, 1.0, absk)) ** complex(z)
        if not self.positive:
            w = np.where(absk == 0, 0.0, w)
        return w

    def with_scale(self, c: float) -> "ZollRegularizer":
        return ZollRegularizer(self.scale * c, self.positive)


def log_q_diagonal(n: int, Q: ZollRegularizer | None = None) -> np.ndarray:
    """Diagonal of log Q on modes -n..n; the constant mode gets log(scale) or 0."""
    Q = Q or ZollRegularizer(positive=True)
    modes = np.abs(np.arange(-n, n + 1)).astype(float)
    out = np.log(Q.scale * np.where(modes == 0, 1.0, modes))
    if not Q.positive:
        out[n] = 0.0
    return out


# ---------------------------------------------------------------------------
# Constructors
# ---------------------------------------------------------------------------


def identity() -> CircleOperator:
    return mk_multiplication(FourierSeries({0: 1.0}, real=True))


def mk_multiplication(fhat: FourierSeries) -> CircleOperator:
    """M_f with (M_f)_{m,n} = fhat(m - n)."""
    return CircleOperator(tuple((k, MultiplierExpansion.constant(v)) for k, v in fhat.coeffs.items()))


def mk_multiplier(plus: Sequence[complex], minus: Sequence[complex] | None = None,
                  exceptional: Mapping[int, complex] | None = None, shift: int = 0) -> CircleOperator:
    """Single-term operator; ``exceptional`` defaults to {0: 0}."""
    exc = dict(exceptional) if exceptional is not None else {}
    exc.setdefault(0, 0.0)
    mult = MultiplierExpansion(tuple(plus), tuple(plus if minus is None else minus), exc)
    return CircleOperator(((shift, mult),))


def mk_reciprocal_multiplier(a: float = 1.0, c: complex = 1.0, shift: int = 0,
                             terms: int = 60) -> CircleOperator:
    """c / (a + |k|) on the given shift, expanded as c * sum_j (-a)^{j-1} |k|^{-j}.

    Modes where the truncated expansion is not exact to ~1e-17 go to the
    exceptional set with their exact values.
    """
    if a < 0:
        raise ValueError("a must be nonnegative")
    coeffs = [0.0] + [c * (-a) ** (j - 1) for j in range(1, terms + 1)]
    radius = 0
    while a > 0 and (a / (radius + 1)) ** terms * 1e17 > 1:
        radius += 1
    exc = {k: c / (a + abs(k)) for k in range(-radius, radius + 1)}
    if a == 0:
        exc[0] = 0.0
    return CircleOperator(((shift, MultiplierExpansion(tuple(coeffs), tuple(coeffs), exc)),))


def mk_shift(shift: int, c: complex = 1.0) -> CircleOperator:
    return CircleOperator(((shift, MultiplierExpansion.constant(c)),))


def mk_smoothing(seed: int, amplitude: float, width: float, support: int) -> CircleOperator:
    if amplitude == 0:
        return CircleOperator()
    return CircleOperator((), (SmoothingSpec(seed, amplitude, width, support),))


def mk_random_operator(seed: int, bandwidth: int = 2, scale: float = 0.1, depth: int = 2,
                       complex_coeffs: bool = False) -> CircleOperator:
    """Seeded banded operator with independent expansions on the two rays.

    One term per shift in [-bandwidth, bandwidth]; the coefficient of
    |k|^{-j} is drawn from scale * U(-1, 1) / (j + 1).
    """
    rng = np.random.default_rng(seed)
    terms = []
    for shift in range(-bandwidth, bandwidth + 1):
        def draw():
            v = rng.uniform(-1, 1, depth + 1) * scale / np.arange(1, depth + 2)
            if complex_coeffs:
                v = v + 1j * rng.uniform(-1, 1, depth + 1) * scale / np.arange(1, depth + 2)
            return tuple(complex(x) for x in v)
        plus, minus = draw(), draw()
        terms.append((shift, MultiplierExpansion(plus, minus, {0: complex(rng.uniform(-1, 1) * scale)})))
    return CircleOperator(tuple(terms))


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def entry(A: CircleOperator, m: int, n: int) -> complex:
    return A.entry(m, n)


def truncate(A: _OperatorBase, n: int) -> np.ndarray:
    """P_n A P_n as a dense (2n+1) x (2n+1) matrix indexed by modes -n..n."""
    return A.truncate(n)


def fourier_component(A: CircleOperator, k: int) -> CircleOperator:
    """k-th matrix diagonal of A (entries with m - n == k)."""
    terms = tuple((s, m) for s, m in A.terms if s == k)
    smoothing = []
    for sp in A.smoothing:
        if sp.diagonal is None and abs(k) <= 2 * sp.support:
            smoothing.append(sp.on_diagonal(k))
        elif sp.diagonal == k:
            smoothing.append(sp)
    return CircleOperator(terms, tuple(smoothing), A.factor)


def sigma_of_j(j: Sequence[int]) -> int:
    """max(0, j_1, j_1 + j_2, ..., j_1 + ... + j_r)."""
    return int(max(0, *itertools.accumulate(j))) if len(j) else 0


def zoll_blocks(A: _OperatorBase, n: int) -> dict[tuple[int, int], np.ndarray]:
    """Blocks pi_{k'} A pi_k of P_n A P_n for the eigenspaces of |D|.

    pi_0 is spanned by the constant, pi_k (k >= 1) by e^{+-ik theta}
    (ordered +k, -k).  Only nonzero blocks are returned.
    """
    M = A.truncate(n)

    def idx(k):
        return [n] if k == 0 else [n + k, n - k]

    blocks = {}
    for kp in range(n + 1):
        for k in range(n + 1):
            blk = M[np.ix_(idx(kp), idx(k))]
            if np.any(blk != 0):
                blocks[(kp, k)] = blk
    return blocks


def decomposition_trace(A: _OperatorBase, r: int, n: int) -> complex:
    """Right-hand side of the Fourier decomposition of tr (P_n A P_n)^r.

    A is split into components A_j = sum_k pi_{k+j} A pi_k with respect to
    the eigenspaces pi_k of |D|; the trace becomes a sum over index vectors
    j with j_1 + ... + j_r = 0 of sum_{k + sigma(j) <= n} tr pi_k A_{j_r}...A_{j_1} pi_k.
    """
    if r < 1:
        raise ValueError("r must be positive")
    bw = A.bandwidth
    if A.support > n:
        raise ValueError("smoothing support exceeds the truncation")
    if bw * r > n:
        raise ValueError(f"bandwidth*r = {bw * r} exceeds n = {n}; identity not exact at the edge")
    # |D|-components of a band of width bw shift |m| by at most bw; smoothing
    # blocks can connect any two eigenspaces inside their support box
    reach = max(bw, A.support)
    blocks = zoll_blocks(A, n)

    def comp(j, k):
        return blocks.get((k + j, k))

    total = 0j
    for j in itertools.product(range(-reach, reach + 1), repeat=r):
        if sum(j) != 0:
            continue
        top = n - sigma_of_j(j)
        for k in range(0, top + 1):
            cur = None
            level = k
            ok = True
            for step in j:
                blk = comp(step, level)
                if blk is None:
                    ok = False
                    break
                cur = blk if cur is None else blk @ cur
                level += step
            if ok:
                total += np.trace(cur)
    return complex(total)


def op_norm_estimate(A: _OperatorBase, n: int) -> float:
    """Largest singular value of the truncation P_n A P_n."""
    return float(np.linalg.norm(A.truncate(n), 2))
