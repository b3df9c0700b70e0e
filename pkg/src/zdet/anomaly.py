"""Residues, multiplicative anomalies and locality experiments on the circle.

Conventions
-----------
For an operator C whose eigenspace traces d(k) = C[k,k] + C[-k,-k] decay
like c_1/k, ``res(C)`` is the Laurent residue at z = 0 of tr C Q^z, i.e.
-c_1.  With this choice the regularizer-shift and cocycle identities hold
without extra constants.

Unless told otherwise the experiments use the positive regularizer
(constant mode kept, with eigenvalue equal to the scale), so that Q^0 = I.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .circle_ops import CircleOperator, ZollRegularizer, _OperatorBase, log_q_diagonal
from .detfit import szego_constant
from .specio import operator_fingerprint
from .zetalib import (
    TailFitError,
    ZetaParams,
    diagonal_pairs,
    finite_part_of_matrix,
    fit_tail,
    matrix_log,
    w_q,
)

__all__ = [
    "ExperimentReport",
    "residue_from_tails",
    "commutator_with_log_q",
    "cocycle_rhs_matrix",
    "cocycle_compare",
    "kappa",
    "locality_probe",
    "regularizer_shift",
    "sigma_variation",
    "with_doubling",
    "FUNCTIONALS",
    "Evaluators",
    "POSITIVE_Q",
]

POSITIVE_Q = ZollRegularizer(positive=True)


@dataclass
class ExperimentReport:
    lhs: complex
    rhs: complex
    diagnostics: dict = field(default_factory=dict)
    experiment: str = ""
    inputs: dict = field(default_factory=dict)

    @property
    def abs_error(self) -> float:
        return abs(self.lhs - self.rhs)

    @property
    def rel_error(self) -> float:
        return self.abs_error / max(abs(self.lhs), abs(self.rhs), 1e-12)

    @property
    def inputs_hash(self) -> str:
        blob = json.dumps(self.inputs, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def to_json(self) -> dict:
        return {
            "experiment": self.experiment,
            "inputs_hash": self.inputs_hash,
            "lhs": [self.lhs.real, self.lhs.imag],
            "rhs": [self.rhs.real, self.rhs.imag],
            "abs_error": self.abs_error,
            "rel_error": self.rel_error,
            "diagnostics": _jsonable(self.diagnostics),
        }


def _inputs(params: ZetaParams, Q: ZollRegularizer, **ops) -> dict:
    out = {k: operator_fingerprint(v) for k, v in ops.items() if isinstance(v, _OperatorBase)}
    out.update({k: v for k, v in ops.items() if not isinstance(v, _OperatorBase)})
    out["n_outer"] = params.n_outer
    out["tail_terms"] = params.tail_terms
    out["Q"] = [Q.scale, Q.positive]
    return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.complexfloating):
        return [float(obj.real), float(obj.imag)]
    return obj


# ---------------------------------------------------------------------------
# Residues
# ---------------------------------------------------------------------------


def residue_from_tails(C, params: ZetaParams | None = None, return_model: bool = False):
    """res(C) = -c_1 from the tail fit d(k) ~ sum_{j>=1} c_j k^{-j}.

    ``C`` is an operator (truncated at params.n_outer) or an explicit outer
    truncation.  A diagonal that does not decay is rejected.
    """
    params = params or ZetaParams()
    M = C.truncate(params.n_outer) if isinstance(C, _OperatorBase) else np.asarray(C)
    d = diagonal_pairs(M, params.n_inner)
    win = params.fit_window
    J = params.tail_terms
    full = fit_tail(d, J, win)
    scale = float(np.max(np.abs(d.values[win[0] - 1: win[1]]))) + 1e-300
    if abs(full.coefficient(0)) > max(1e-9, 1e-6 * scale * win[1]):
        raise TailFitError(f"diagonal does not decay (c_0 = {full.coefficient(0):.3e}); operator is not of order <= -1")
    model = fit_tail(d, J, win, powers=range(1, J + 1))
    res = -model.coefficient(1)
    return (res, model) if return_model else res


def commutator_with_log_q(L: np.ndarray, Q: ZollRegularizer | None = None) -> np.ndarray:
    """[L, log Q] for a centred truncation L."""
    n = (L.shape[0] - 1) // 2
    lq = log_q_diagonal(n, Q or POSITIVE_Q)
    return L * lq[None, :] - lq[:, None] * L


def cocycle_rhs_matrix(LA: np.ndarray, LB: np.ndarray, Q: ZollRegularizer | None = None) -> np.ndarray:
    """log A [log B, log Q] on the outer truncation."""
    return LA @ commutator_with_log_q(LB, Q)


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


def cocycle_compare(A: _OperatorBase, B: _OperatorBase, Q: ZollRegularizer | None = None,
                    params: ZetaParams | None = None, wq: Callable = w_q) -> ExperimentReport:
    """w_Q(AB) - w_Q(BA) against res(log A [log B, log Q])."""
    Q = Q or POSITIVE_Q
    params = params or ZetaParams()
    wab = wq(A @ B, Q, params)
    wba = wq(B @ A, Q, params)
    LA = matrix_log(A, params.n_outer, params.log_tol)
    LB = matrix_log(B, params.n_outer, params.log_tol)
    rhs, model = residue_from_tails(cocycle_rhs_matrix(LA, LB, Q), params, return_model=True)
    diag = {
        "n_outer": params.n_outer,
        "tail_residual_lhs": max(wab.diagnostics["tail_residual"], wba.diagnostics["tail_residual"]),
        "tail_residual_rhs": model.residual,
    }
    return ExperimentReport(wab.finite_part - wba.finite_part, complex(rhs), diag, "cocycle",
                            _inputs(params, Q, A=A, B=B))


def kappa(A: _OperatorBase, B: _OperatorBase, Q: ZollRegularizer | None = None,
          params: ZetaParams | None = None, wq: Callable = w_q) -> complex:
    """Multiplicative anomaly w_Q(AB) - w_Q(A) - w_Q(B)."""
    Q = Q or POSITIVE_Q
    params = params or ZetaParams()
    return (wq(A @ B, Q, params).finite_part - wq(A, Q, params).finite_part
            - wq(B, Q, params).finite_part)


def regularizer_shift(B: _OperatorBase, c: float, Q: ZollRegularizer | None = None,
                      params: ZetaParams | None = None, wq: Callable = w_q) -> ExperimentReport:
    """w_{cQ}(B) - w_Q(B) against log(c) res(log B)."""
    Q = Q or POSITIVE_Q
    params = params or ZetaParams()
    L = matrix_log(B, params.n_outer, params.log_tol)
    w1 = wq(B, Q, params, log_matrix=L)
    wc = wq(B, Q.with_scale(c), params, log_matrix=L)
    res, model = residue_from_tails(L - np.diag(np.full(L.shape[0], _constant_diagonal(L, params))),
                                    params, return_model=True)
    diag = {"n_outer": params.n_outer, "res_log_B": complex(res), "tail_residual_rhs": model.residual}
    return ExperimentReport(wc.finite_part - w1.finite_part, math.log(c) * complex(res), diag, "regshift",
                            _inputs(params, Q, B=B, c=c))


def _constant_diagonal(L: np.ndarray, params: ZetaParams) -> complex:
    # order-zero part of the diagonal: half the fitted c_0 of the pair sums
    d = diagonal_pairs(L, params.n_inner)
    return fit_tail(d, params.tail_terms, params.fit_window).coefficient(0) / 2


def sigma_variation(A: _OperatorBase, dA: CircleOperator, Q: ZollRegularizer | None = None,
                    h: float = 1e-3, params: ZetaParams | None = None, wq: Callable = w_q) -> ExperimentReport:
    """sigma_Q(A, dA) = delta w_Q(A) - (1/2) f.p. tr (dA A^-1 + A^-1 dA) Q^z.

    delta w_Q is a central difference at steps h, h/2, h/4 combined by
    Richardson extrapolation.  Reported as lhs = sigma, rhs = 0.
    """
    Q = Q or POSITIVE_Q
    params = params or ZetaParams()
    if not isinstance(A, CircleOperator):
        raise TypeError("A must be a CircleOperator so that A + h dA is exact")
    steps = (h, h / 2, h / 4)
    derivs = []
    for step in steps:
        wp = wq(A + dA * step, Q, params).finite_part
        wm = wq(A + dA * (-step), Q, params).finite_part
        derivs.append((wp - wm) / (2 * step))
    rich = (4 * derivs[2] - derivs[1]) / 3
    n = params.n_outer
    Ainv = np.linalg.solve(A.truncate(n), np.eye(2 * n + 1))
    D = dA.truncate(n)
    second = finite_part_of_matrix(D @ Ainv + Ainv @ D, Q, params)
    sigma = rich - 0.5 * second.finite_part
    d1, d2 = abs(derivs[0] - derivs[1]), abs(derivs[1] - derivs[2])
    ratio = d1 / d2 if d2 > 0 else math.inf
    noise = 1e-9
    quadratic = (2.0 <= ratio <= 8.0) or d1 < noise
    diag = {
        "steps": list(steps),
        "derivatives": derivs,
        "richardson_ratio": ratio,
        "quadratic_convergence": bool(quadratic),
        "n_outer": n,
    }
    if not quadratic:
        diag["flag"] = "finite-difference derivative not converging quadratically"
    return ExperimentReport(complex(sigma), 0j, diag, "sigma", _inputs(params, Q, A=A, dA=dA, h=h))


# locality ------------------------------------------------------------------


def _szego_minus_zeta(A, B, Q, params, ev):
    b = ev.szego(A)
    w = ev.wq(A, Q, params).finite_part
    return b - w, {"b": b, "w_Q": w}


def _cocycle_value(A, B, Q, params, ev):
    v = ev.wq(A @ B, Q, params).finite_part - ev.wq(B @ A, Q, params).finite_part
    return v, {}


def _kappa_value(A, B, Q, params, ev):
    wab = ev.wq(A @ B, Q, params).finite_part
    wa = ev.wq(A, Q, params).finite_part
    wb = ev.wq(B, Q, params).finite_part
    return wab - wa - wb, {"w_Q(AB)": wab, "w_Q(A)": wa, "w_Q(B)": wb}


@dataclass(frozen=True)
class Evaluators:
    """Hooks for the expensive evaluations (e.g. cached versions)."""

    wq: Callable = w_q
    szego: Callable = szego_constant


FUNCTIONALS: dict[str, Callable] = {
    "szego_minus_zeta": _szego_minus_zeta,
    "cocycle": _cocycle_value,
    "kappa": _kappa_value,
}


def locality_probe(functional: str, A: CircleOperator, B: _OperatorBase | None, S: CircleOperator,
                   Q: ZollRegularizer | None = None, params: ZetaParams | None = None,
                   evaluators: Evaluators | None = None) -> ExperimentReport:
    """Evaluate a functional at (A, B) and (A + S, B); lhs/rhs are the two values.

    S must be pure smoothing, so A and A + S share every symbol term and a
    local functional takes the same value on both.
    """
    if functional not in FUNCTIONALS:
        raise ValueError(f"unknown functional {functional!r}; expected one of {sorted(FUNCTIONALS)}")
    if S.terms:
        raise ValueError("perturbation must be pure smoothing (empty terms list)")
    if functional != "szego_minus_zeta" and B is None:
        raise ValueError(f"{functional} needs a second operator")
    Q = Q or POSITIVE_Q
    params = params or ZetaParams()
    ev = evaluators or Evaluators()
    fn = FUNCTIONALS[functional]
    v0, parts0 = fn(A, B, Q, params, ev)
    v1, parts1 = fn(A + S, B, Q, params, ev)
    moves = {k: abs(parts1[k] - parts0[k]) for k in parts0}
    diag = {"n_outer": params.n_outer, "individual_moves": moves, "values_unperturbed": parts0}
    return ExperimentReport(complex(v0), complex(v1), diag, f"locality:{functional}",
                            _inputs(params, Q, A=A, B=B, S=S))


# stability -------------------------------------------------------------------


def with_doubling(run: Callable[[ZetaParams], ExperimentReport], params: ZetaParams | None = None,
                  factor: float = 2.0) -> ExperimentReport:
    """Run at params and at doubled truncation; attach drift and a stability verdict.

    Stable means both sides move by at most ``factor`` times the error
    scale of the base run (its lhs/rhs gap, floored at 1e-12).
    """
    params = params or ZetaParams()
    base = run(params)
    fine = run(params.doubled())
    drift_l = abs(fine.lhs - base.lhs)
    drift_r = abs(fine.rhs - base.rhs)
    scale = max(base.abs_error, 1e-12)
    base.diagnostics.update({
        "doubled": {"lhs": fine.lhs, "rhs": fine.rhs, "abs_error": fine.abs_error,
                    "rel_error": fine.rel_error, "n_outer": params.doubled().n_outer},
        "drift_lhs": drift_l,
        "drift_rhs": drift_r,
        "stable": bool(max(drift_l, drift_r) <= factor * scale),
    })
    return base
