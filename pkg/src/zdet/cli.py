"""Batch driver: ``zdet --config run.json --out reports/``.

A config is a JSON object with an ``experiment`` key and experiment-specific
fields.  Every run writes a versioned JSON report (and CSV tables where
relevant); nothing is ever overwritten.  Exit status: 0 success, 2 config
error (no outputs), 3 numerical failure (an error report is written).
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import math
import os
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np

from . import __version__
from .anomaly import (
    Evaluators,
    _jsonable,
    cocycle_compare,
    kappa,
    locality_probe,
    regularizer_shift,
    sigma_variation,
    with_doubling,
)
from .cache import Cache, cache_key
from .circle_ops import (
    CircleOperator,
    FourierSeries,
    ZollRegularizer,
    _OperatorBase,
    decomposition_trace,
    identity,
    mk_random_operator,
    mk_smoothing,
)
from .detfit import (
    RankDeficientFitError,
    SingularTruncationError,
    fit_asymptotics,
    logdet,
    samples_to_csv,
    szego_limit,
    trace_power,
)
from . import symb2d
from .specio import SpecError, build_operator, content_hash, operator_fingerprint
from .zetalib import (
    FinitePartResult,
    MatrixLogDomainError,
    PoleError,
    TailFitError,
    ZetaParams,
    hardy_partial_sum,
    truncated_qz_trace,
    w_q,
    zeta_trace_function,
)

SCHEMA = "zdet/1"
EXPERIMENTS = ("szego", "zeta", "compare", "anomaly", "cocycle", "regshift",
               "hardy-selftest", "symb2d-verify", "decomp-check")
NUMERIC_ERRORS = (MatrixLogDomainError, SingularTruncationError, TailFitError, RankDeficientFitError,
                  PoleError, np.linalg.LinAlgError, FloatingPointError)


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Context: cache-aware evaluators
# ---------------------------------------------------------------------------


@dataclass
class Context:
    cache: Cache
    seed: int
    threads: int
    base_dir: Path
    executor: ThreadPoolExecutor | None = None

    def map(self, fn: Callable, items):
        items = list(items)
        if self.executor is None or len(items) < 2:
            return [fn(x) for x in items]
        return list(self.executor.map(fn, items))

    def logdet_at(self, B: _OperatorBase, n: int, fp: str | None = None) -> complex:
        key = cache_key(fp or operator_fingerprint(B), n, "logdet")
        hit = self.cache.get_complex(key)
        if hit is not None:
            return hit
        v = logdet(B.truncate(n))
        self.cache.put_complex(key, v)
        return v

    def samples(self, B: _OperatorBase, ns) -> list[tuple[int, complex]]:
        fp = operator_fingerprint(B)
        ns = list(ns)
        return list(zip(ns, self.map(lambda n: self.logdet_at(B, n, fp), ns)))

    def szego(self, B: _OperatorBase, n_min: int = 100, n_max: int = 200, depth: int = 3) -> complex:
        fit = fit_asymptotics(self.samples(B, range(n_min, n_max + 1)), [1, 0, *range(-1, -depth - 1, -1)],
                              has_log=True)
        return fit.constant - fit.coefficients[1] / 2

    def wq(self, B: _OperatorBase, Q: ZollRegularizer | None = None, params: ZetaParams | None = None,
           log_matrix: np.ndarray | None = None) -> FinitePartResult:
        Q = Q or ZollRegularizer()
        params = params or ZetaParams()
        key = cache_key(operator_fingerprint(B), _params_json(params), [Q.scale, Q.positive], "w_q")
        hit = self.cache.get_json(key)
        if hit is None:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                res = w_q(B, Q, params, log_matrix)
            hit = {"fp": [res.finite_part.real, res.finite_part.imag],
                   "res": [res.pole_residue.real, res.pole_residue.imag],
                   "diag": _jsonable(res.diagnostics)}
            self.cache.put_json(key, hit)
        # cold and warm paths both go through the serialized form
        hit = json.loads(json.dumps(hit))
        return FinitePartResult(complex(*hit["fp"]), complex(*hit["res"]), hit["diag"])

    def evaluators(self, szego_cfg: Mapping) -> Evaluators:
        return Evaluators(wq=self.wq, szego=lambda B: self.szego(B, **szego_cfg))


def _params_json(p: ZetaParams) -> dict:
    return {"n_outer": p.n_outer, "inner_ratio": p.inner_ratio, "tail_terms": p.tail_terms,
            "window": None if p.window is None else list(p.window), "log_tol": p.log_tol}


# ---------------------------------------------------------------------------
# Config helpers
# ---------------------------------------------------------------------------


def _get(cfg: Mapping, key: str, kind, default=..., where: str = "config"):
    if key not in cfg:
        if default is ...:
            raise ConfigError(f"{where}.{key}: required field missing")
        return default
    v = cfg[key]
    ok = {
        "int": isinstance(v, int) and not isinstance(v, bool),
        "num": isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v),
        "bool": isinstance(v, bool),
        "list": isinstance(v, list),
        "dict": isinstance(v, dict),
        "str": isinstance(v, str),
    }[kind]
    if not ok:
        raise ConfigError(f"{where}.{key}: expected {kind}, got {v!r}")
    return v


def _op(cfg: Mapping, key: str, ctx: Context, where: str = "config") -> _OperatorBase:
    if key not in cfg:
        raise ConfigError(f"{where}.{key}: required operator spec missing")
    try:
        return build_operator(cfg[key], ctx.base_dir, f"{where}.{key}")
    except SpecError as e:
        raise ConfigError(str(e)) from None
    except (TypeError, ValueError, AttributeError) as e:
        raise ConfigError(f"{where}.{key}: {e}") from None


def _n_range(cfg: Mapping, default=(100, 200)) -> tuple[int, int]:
    r = _get(cfg, "n_range", "list", list(default))
    if len(r) != 2 or not all(isinstance(x, int) and not isinstance(x, bool) for x in r):
        raise ConfigError("config.n_range: expected [n_min, n_max] integers")
    if r[0] < 1 or r[1] <= r[0]:
        raise ConfigError(f"config.n_range: empty or decreasing range {r}")
    return int(r[0]), int(r[1])


def _zeta_params(cfg: Mapping) -> ZetaParams:
    z = _get(cfg, "zeta", "dict", {})
    unknown = set(z) - {"n_outer", "inner_ratio", "tail_terms", "window", "log_tol"}
    if unknown:
        raise ConfigError(f"config.zeta: unknown keys {sorted(unknown)}")
    win = _get(z, "window", "list", None, "config.zeta")
    p = ZetaParams(
        n_outer=_get(z, "n_outer", "int", 200, "config.zeta"),
        inner_ratio=float(_get(z, "inner_ratio", "num", 0.5, "config.zeta")),
        tail_terms=_get(z, "tail_terms", "int", 4, "config.zeta"),
        window=None if win is None else (int(win[0]), int(win[1])),
        log_tol=float(_get(z, "log_tol", "num", 1e-15, "config.zeta")),
    )
    if p.n_outer < 20 or not 0 < p.inner_ratio <= 1:
        raise ConfigError("config.zeta: n_outer must be >= 20 and inner_ratio in (0, 1]")
    w0, w1 = p.fit_window
    if w1 - w0 < p.tail_terms + 3 or w1 > p.n_inner or w0 < 1:
        raise ConfigError(f"config.zeta.window: {list(p.fit_window)} too short or beyond n_inner={p.n_inner}")
    return p


def _regularizer(cfg: Mapping, positive_default: bool) -> ZollRegularizer:
    r = _get(cfg, "regularizer", "dict", {})
    scale = float(_get(r, "scale", "num", 1.0, "config.regularizer"))
    if scale <= 0:
        raise ConfigError("config.regularizer.scale: must be positive")
    return ZollRegularizer(scale, _get(r, "positive", "bool", positive_default, "config.regularizer"))


def _szego_cfg(cfg: Mapping) -> dict:
    n_min, n_max = _n_range(cfg)
    depth = _get(cfg, "depth", "int", 3)
    if depth < 1:
        raise ConfigError("config.depth: must be >= 1")
    if n_max - n_min + 1 < depth + 3 + 2:
        raise ConfigError("config.n_range: too few samples for the requested depth")
    return {"n_min": n_min, "n_max": n_max, "depth": depth}


def _series(cfg: Mapping, key: str) -> FourierSeries | None:
    s = _get(cfg, key, "dict", None)
    if s is None:
        return None
    try:
        return FourierSeries.from_trig(float(s.get("const", 0.0)),
                                       {int(k): float(v) for k, v in s.get("cos", {}).items()},
                                       {int(k): float(v) for k, v in s.get("sin", {}).items()})
    except (TypeError, ValueError) as e:
        raise ConfigError(f"config.{key}: {e}") from None


def _c(v: complex) -> list[float]:
    v = complex(v)
    return [v.real, v.imag]


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(x) if isinstance(x, float) else x for x in r])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Experiments: each returns (payload, {table_name: csv_text})
# ---------------------------------------------------------------------------


def exp_szego(cfg: Mapping, ctx: Context):
    sz = _szego_cfg(cfg)
    logf = _series(cfg, "log_symbol")
    if "operator" in cfg:
        B = _op(cfg, "operator", ctx)
    elif logf is not None:
        B = build_operator({"exp_multiplication": cfg["log_symbol"]})
    else:
        raise ConfigError("config: need 'operator' or 'log_symbol'")
    samples = ctx.samples(B, range(sz["n_min"], sz["n_max"] + 1))
    fit = fit_asymptotics(samples, [1, 0, *range(-1, -sz["depth"] - 1, -1)], has_log=True)
    payload = {"fit": fit.to_json(), "b": _c(fit.constant - fit.coefficients[1] / 2)}
    tables = {"samples": samples_to_csv(samples)}
    if logf is not None:
        limit = szego_limit(logf)
        resid = [(n, abs(v - (2 * n + 1) * logf[0] - limit)) for n, v in samples]
        payload["analytic_constant"] = _c(limit)
        payload["max_residual"] = max(r for _, r in resid)
        tables["residuals"] = _csv(["n", "residual"], resid)
    return payload, tables


def exp_zeta(cfg: Mapping, ctx: Context):
    B = _op(cfg, "operator", ctx)
    params = _zeta_params(cfg)
    Q = _regularizer(cfg, positive_default=False)
    tr = _get(cfg, "trace", "dict", None)
    payload = {"regularizer": {"scale": Q.scale, "positive": Q.positive}}
    try:
        res = ctx.wq(B, Q, params)
        payload.update({"w_Q": res.to_json(), "diagnostics": res.diagnostics})
    except MatrixLogDomainError as e:
        # trace-only runs may use operators with no series log (e.g. a pure multiplier)
        if tr is None:
            raise
        payload.update({"w_Q": None, "w_Q_error": str(e)})
    tables = {}
    if tr is not None:
        r = _get(tr, "r", "int", 1, "config.trace")
        z = complex(_get(tr, "z", "num", -2.5, "config.trace"))
        ns = _get(tr, "n", "list", [50, 100, 200, 400], "config.trace")
        cont = zeta_trace_function(B, r, z, params, Q)
        rows = [(n, *_c(truncated_qz_trace(B, r, n, z, Q))) for n in ns]
        payload["trace"] = {"r": r, "z": _c(z), "continuation": _c(cont),
                            "last_abs_error": abs(complex(rows[-1][1], rows[-1][2]) - cont)}
        tables["trace"] = _csv(["n", "re", "im"], rows)
    return payload, tables


def exp_compare(cfg: Mapping, ctx: Context):
    B = _op(cfg, "operator", ctx)
    params = _zeta_params(cfg)
    Q = _regularizer(cfg, positive_default=True)
    sz = _szego_cfg(cfg)
    b = ctx.szego(B, **sz)
    w = ctx.wq(B, Q, params).finite_part
    payload = {"b": _c(b), "w_Q": _c(w), "b_minus_w": _c(b - w), "locality": []}
    for i, p in enumerate(_get(cfg, "perturbations", "list", [])):
        S = _op({"p": {"smoothing": p}}, "p", ctx, f"config.perturbations[{i}]")
        rep = locality_probe("szego_minus_zeta", B, None, S, Q, params, ctx.evaluators(sz))
        payload["locality"].append(rep.to_json())
    return payload, {}


def exp_anomaly(cfg: Mapping, ctx: Context):
    A, B = _op(cfg, "A", ctx), _op(cfg, "B", ctx)
    params = _zeta_params(cfg)
    Q = _regularizer(cfg, positive_default=True)
    kab = kappa(A, B, Q, params, ctx.wq)
    kba = kappa(B, A, Q, params, ctx.wq)
    coc = ctx.wq(A @ B, Q, params).finite_part - ctx.wq(B @ A, Q, params).finite_part
    payload = {"kappa_AB": _c(kab), "kappa_BA": _c(kba), "w_AB_minus_w_BA": _c(coc),
               "swap_identity_residual": abs(kab - kba - coc)}
    if "perturbation" in cfg:
        S = _op({"p": {"smoothing": cfg["perturbation"]}}, "p", ctx, "config.perturbation")
        payload["locality"] = locality_probe("kappa", A, B, S, Q, params, ctx.evaluators({})).to_json()
    if "dA" in cfg:
        if not isinstance(A, CircleOperator):
            raise ConfigError("config.A: sigma variation needs A to be a sum, not a product")
        dA = _op(cfg, "dA", ctx)
        h = float(_get(cfg, "h", "num", 1e-3))
        payload["sigma"] = sigma_variation(A, dA, Q, h, params, ctx.wq).to_json()
    return payload, {}


def _random_pair(seed: int) -> tuple[CircleOperator, CircleOperator]:
    I = identity()
    return I + mk_random_operator(2 * seed, 1, 0.15), I + mk_random_operator(2 * seed + 1, 2, 0.1)


def exp_cocycle(cfg: Mapping, ctx: Context):
    params = _zeta_params(cfg)
    Q = _regularizer(cfg, positive_default=True)
    tol = float(_get(cfg, "rel_tol", "num", 1e-3))
    pairs = []
    for i, p in enumerate(_get(cfg, "pairs", "list", [])):
        pairs.append((f"pairs[{i}]", _op(p, "A", ctx, f"config.pairs[{i}]"), _op(p, "B", ctx, f"config.pairs[{i}]")))
    rnd = _get(cfg, "random_pairs", "int", 0 if pairs else 2)
    base = _get(cfg, "seed", "int", ctx.seed)
    for j in range(rnd):
        A, B = _random_pair(base + j)
        pairs.append((f"random[{base + j}]", A, B))
    if not pairs:
        raise ConfigError("config: no operator pairs (give 'pairs' or 'random_pairs' > 0)")
    doubling = _get(cfg, "doubling", "bool", True)
    reports = []
    rows = []
    for label, A, B in pairs:
        run = lambda p, A=A, B=B: cocycle_compare(A, B, Q, p, ctx.wq)  # noqa: E731
        rep = with_doubling(run, params) if doubling else run(params)
        js = rep.to_json()
        js["label"] = label
        js["pass"] = bool(rep.rel_error <= tol and rep.diagnostics.get("stable", True))
        reports.append(js)
        rows.append((label, rep.lhs.real, rep.rhs.real, rep.abs_error, rep.rel_error, js["pass"]))
    return {"reports": reports, "rel_tol": tol}, {"summary": _csv(
        ["label", "lhs", "rhs", "abs_error", "rel_error", "pass"], rows)}


def exp_regshift(cfg: Mapping, ctx: Context):
    params = _zeta_params(cfg)
    Q = _regularizer(cfg, positive_default=True)
    c = float(_get(cfg, "c", "num", 2.0))
    if c <= 0:
        raise ConfigError("config.c: must be positive")
    specs = _get(cfg, "operators", "list", None)
    ops = [_op({"o": s}, "o", ctx, f"config.operators[{i}]") for i, s in enumerate(specs)] if specs else \
        [_op(cfg, "operator", ctx)]
    return {"c": c, "reports": [regularizer_shift(B, c, Q, params, ctx.wq).to_json() for B in ops]}, {}


def _faulhaber_prefix(s: int, m_max: int) -> list[int]:
    out, acc = [0], 0
    for k in range(1, m_max + 1):
        acc += k**s
        out.append(acc)
    return out


def exp_hardy(cfg: Mapping, ctx: Context):
    s_vals = _get(cfg, "s_values", "list", list(range(7)))
    m_vals = _get(cfg, "m_values", "list", None)
    m_max = _get(cfg, "m_max", "int", 10_000)
    if m_vals is None:
        m_vals = sorted(set(range(1, 101)) | {int(round(10 ** (2 + 2 * i / 40))) for i in range(41)})
    if any(not isinstance(m, int) or m < 1 or m > m_max for m in m_vals):
        raise ConfigError("config.m_values: positive integers up to m_max required")
    rows, worst = [], 0.0
    for s in s_vals:
        if not isinstance(s, int) or s < 0:
            raise ConfigError("config.s_values: nonnegative integers required")
        prefix = _faulhaber_prefix(s, max(m_vals))
        depth = min(6, max(1, (s + 2) // 2))
        for m in m_vals:
            exact = prefix[m]
            approx = hardy_partial_sum(s, m, depth).real
            err = abs(approx - float(exact)) / float(exact)
            worst = max(worst, err)
            rows.append((s, m, depth, float(exact), approx, err))
    brute_rows = []
    for b in _get(cfg, "brute", "list", [{"s": -0.5, "m": 10_000}, {"s": -1.5, "m": 10_000}]):
        s, m = float(b["s"]), int(b["m"])
        depth = int(b.get("depth", 3))
        exact = math.fsum(k**s for k in range(1, m + 1))
        approx = hardy_partial_sum(s, m, depth).real
        brute_rows.append((s, m, depth, exact, approx, abs(approx - exact)))
    payload = {"max_faulhaber_rel_error": worst,
               "max_brute_abs_error": max((r[-1] for r in brute_rows), default=0.0),
               "brute": [list(r) for r in brute_rows]}
    header = ["s", "m", "depth", "exact", "formula", "error"]
    return payload, {"faulhaber": _csv(header, rows), "brute": _csv(header, brute_rows)}


def _symbol_spec(cfg: Mapping, key: str, seed: int, rnd: Mapping, **kw) -> dict:
    v = cfg.get(key)
    if v is None:
        return symb2d.random_trig_spec(seed, **rnd, **kw)
    if not isinstance(v, dict) or "modes" not in v:
        raise ConfigError(f"config.symbols.{key}: expected a trigonometric-polynomial spec with 'modes'")
    return v


# rich enough that the N = 64 discretization error is still above roundoff
RANDOM_SYMBOLS = {"n_modes": 8, "kmax": 3, "amplitude": 0.2}


def exp_symb2d(cfg: Mapping, ctx: Context):
    syms = _get(cfg, "symbols", "dict", {})
    base = _get(cfg, "seed", "int", ctx.seed)
    rnd = dict(RANDOM_SYMBOLS)
    rnd.update(_get(cfg, "random_symbols", "dict", {}))
    if set(rnd) != set(RANDOM_SYMBOLS):
        raise ConfigError(f"config.random_symbols: keys must be {sorted(RANDOM_SYMBOLS)}")
    spec_a = _symbol_spec(syms, "log_a", 3 * base + 1, rnd)
    spec_b = _symbol_spec(syms, "log_b", 3 * base + 2, rnd)
    spec_q = _symbol_spec(syms, "log_q", 3 * base + 3, rnd, log_coeff=1.0)
    spec_da = _symbol_spec(syms, "dlog_a", 3 * base + 4, rnd)
    if float(spec_q.get("log_coeff", 0.0)) != 1.0:
        raise ConfigError("config.symbols.log_q: log_coeff must be 1 (first-order regularizer)")
    grids = _get(cfg, "grids", "list", [32, 64, 128])
    out = []
    for N in grids:
        if not isinstance(N, int) or N < 16 or N & (N - 1):
            raise ConfigError(f"config.grids: {N!r} is not a power of two >= 16")
        la, lb = symb2d.from_trig(spec_a, N, N), symb2d.from_trig(spec_b, N, N)
        lq, da = symb2d.from_trig(spec_q, N, N), symb2d.from_trig(spec_da, N, N)
        ident = symb2d.identity_suite(symb2d.exp_symbol(lb), symb2d.exp_symbol(la), lq)
        van = symb2d.vanishing_checks(la, lb, lq)
        sab = symb2d.sym_anomaly_d2(la, lb, lq)
        sba = symb2d.sym_anomaly_d2(lb, la, lq)
        out.append({
            "N": N,
            "identities": ident,
            "vanishing": van,
            "sym_anomaly": sab,
            "swap_difference": abs(sab - sba),
            "equal_case": abs(symb2d.sym_anomaly_d2(la, la, lq)),
            "sigma_formula": symb2d.sigma_formula_d2(la, da, lq),
        })
    rows = [(r["N"], r["identities"]["max_residual"], r["vanishing"]["bracket_residue"],
             r["vanishing"]["leibniz_residue"], r["swap_difference"]) for r in out]
    return {"grids": out, "symbols": {"log_a": spec_a, "log_b": spec_b, "log_q": spec_q, "dlog_a": spec_da}}, \
        {"convergence": _csv(["N", "identity_residual", "bracket_residue", "leibniz_residue", "swap"], rows)}


def decomp_operator(seed: int, bandwidth: int = 3) -> CircleOperator:
    """Seeded banded test operator with a small smoothing block inside the band reach."""
    return mk_random_operator(seed, bandwidth, 0.3, 2, complex_coeffs=True) + mk_smoothing(seed, 0.05, 2.0, bandwidth)


def exp_decomp(cfg: Mapping, ctx: Context):
    count = _get(cfg, "count", "int", 10)
    bw = _get(cfg, "bandwidth", "int", 3)
    r_max = _get(cfg, "r_max", "int", 3)
    n = _get(cfg, "n", "int", 30)
    base = _get(cfg, "seed", "int", ctx.seed)
    if count < 1 or r_max < 1 or bw < 0:
        raise ConfigError("config: count, r_max must be >= 1 and bandwidth >= 0")
    if bw * r_max > n:
        raise ConfigError(f"config: bandwidth*r_max = {bw * r_max} exceeds n = {n}")

    def one(seed):
        A = decomp_operator(seed, bw)
        M = A.truncate(n)
        return [(seed, r, trace_power(M, r), decomposition_trace(A, r, n)) for r in range(1, r_max + 1)]

    rows = [row for chunk in ctx.map(one, range(base, base + count)) for row in chunk]
    table = [(s, r, d.real, d.imag, x.real, x.imag, abs(d - x)) for s, r, d, x in rows]
    return {"max_abs_error": max(t[-1] for t in table), "n": n, "bandwidth": bw, "count": count}, \
        {"traces": _csv(["seed", "r", "dense_re", "dense_im", "decomp_re", "decomp_im", "abs_error"], table)}


RUNNERS: dict[str, Callable] = {
    "szego": exp_szego,
    "zeta": exp_zeta,
    "compare": exp_compare,
    "anomaly": exp_anomaly,
    "cocycle": exp_cocycle,
    "regshift": exp_regshift,
    "hardy-selftest": exp_hardy,
    "symb2d-verify": exp_symb2d,
    "decomp-check": exp_decomp,
}


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------


def load_config(path: Path) -> dict:
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"{path}: cannot read config ({e.strerror})") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be an object")
    exp = cfg.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"config.experiment: {exp!r} is not one of {list(EXPERIMENTS)}")
    return cfg


def _next_stem(out: Path, experiment: str, chash: str) -> tuple[Path, Any]:
    out.mkdir(parents=True, exist_ok=True)
    v = 1
    while True:
        stem = out / f"{experiment}-{chash[:12]}-v{v:03d}"
        try:
            fh = open(f"{stem}.json", "x")
            return stem, fh
        except FileExistsError:
            v += 1


def _canonical_payload(payload) -> Any:
    # floats survive JSON round trips exactly; this also normalizes tuples/complex
    return json.loads(json.dumps(_jsonable(payload), allow_nan=True))


def run(config_path: str | Path, out_dir: str | Path, cache_dir: str | None = None, threads: int = 1,
        seed: int = 0) -> tuple[int, Path | None]:
    """Run one experiment; returns (exit status, report path or None)."""
    config_path = Path(config_path)
    try:
        cfg = load_config(config_path)
    except ConfigError as e:
        print(f"zdet: config error: {e}", file=sys.stderr)
        return 2, None
    chash = content_hash({"config": cfg, "seed": seed})
    cache = Cache(cache_dir)
    ctx = Context(cache, seed, max(1, threads), config_path.parent)
    t0 = time.perf_counter()
    status, tables = "ok", {}
    try:
        if ctx.threads > 1:
            ctx.executor = ThreadPoolExecutor(max_workers=ctx.threads)
        payload, tables = RUNNERS[cfg["experiment"]](cfg, ctx)
    except ConfigError as e:
        print(f"zdet: config error: {e}", file=sys.stderr)
        return 2, None
    except NUMERIC_ERRORS + (ValueError,) as e:
        status = "error"
        payload = {"error": type(e).__name__, "message": str(e)}
    finally:
        if ctx.executor is not None:
            ctx.executor.shutdown()
    report = {
        "schema": SCHEMA,
        "experiment": cfg["experiment"],
        "version": __version__,
        "config_hash": chash,
        "status": status,
        "payload": _canonical_payload(payload),
        "metadata": {
            "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "elapsed_s": time.perf_counter() - t0,
            "threads": ctx.threads,
            "cache": {"enabled": cache.enabled, "hits": cache.hits, "misses": cache.misses},
            "config_path": str(config_path),
        },
    }
    stem, fh = _next_stem(Path(out_dir), cfg["experiment"], chash)
    with fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for name, text in tables.items():
        with open(f"{stem}.{name}.csv", "x") as t:
            t.write(text)
    path = Path(f"{stem}.json")
    print(path)
    return (0 if status == "ok" else 3), path


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="zdet", description="Regularized determinant experiments.")
    ap.add_argument("--config", required=True, help="experiment config (JSON)")
    ap.add_argument("--out", default="zdet-reports", help="report directory (append-only)")
    ap.add_argument("--cache", default=os.environ.get("ZDET_CACHE"), help="cache directory [$ZDET_CACHE]")
    ap.add_argument("--threads", type=int, default=1, help="worker threads for independent evaluations")
    ap.add_argument("--seed", type=int, default=0, help="base seed for generated inputs")
    args = ap.parse_args(argv)
    if args.threads < 1:
        ap.error("--threads must be >= 1")
    status, _ = run(args.config, args.out, args.cache, args.threads, args.seed)
    return status


if __name__ == "__main__":
    sys.exit(main())
