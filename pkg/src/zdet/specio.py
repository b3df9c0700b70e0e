"""JSON operator specifications.

Canonical operator schema::

    {"terms": [{"shift": int, "plus": [[re, im], ...], "minus": [[re, im], ...],
                "exceptional": {"k": [re, im], ...}}, ...],
     "smoothing": [{"seed": int, "amplitude": x, "width": x, "support": int,
                    "coeff": [re, im], "diagonal": int | null}, ...],
     "factor": [re, im]}                      (optional overall scalar, default 1)

On input, coefficients may also be plain numbers, "minus" defaults to
"plus", "exceptional" defaults to {"0": 0}, and "smoothing" may be a single
object.  ``dumps_operator`` always writes the canonical form, and
``loads_operator(dumps_operator(A))`` reproduces A bit for bit.

Config files may additionally describe operators by recipe (see
``build_operator``).
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Any, Mapping

from .circle_ops import (
    CircleOperator,
    FourierSeries,
    MultiplierExpansion,
    OperatorProduct,
    SmoothingSpec,
    _OperatorBase,
    identity,
    mk_multiplication,
    mk_random_operator,
    mk_reciprocal_multiplier,
    mk_shift,
    mk_smoothing,
)

__all__ = [
    "SpecError",
    "operator_to_dict",
    "operator_from_dict",
    "dumps_operator",
    "loads_operator",
    "load_operator_file",
    "build_operator",
    "operator_fingerprint",
    "canonical_json",
    "content_hash",
]


class SpecError(ValueError):
    """Malformed specification; ``field`` names the offending path."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def content_hash(obj: Any) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


def _c2j(v: complex) -> list[float]:
    v = complex(v)
    return [v.real, v.imag]


def _j2c(v, field: str) -> complex:
    if isinstance(v, bool):
        raise SpecError(field, "expected a number or [re, im]")
    if isinstance(v, (int, float)):
        return complex(float(v), 0.0)
    if isinstance(v, (list, tuple)) and len(v) == 2 and all(
            isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
        return complex(float(v[0]), float(v[1]))
    raise SpecError(field, f"expected a number or [re, im], got {v!r}")


def _int(v, field: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise SpecError(field, f"expected an integer, got {v!r}")
    return v


def _num(v, field: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise SpecError(field, f"expected a finite number, got {v!r}")
    return float(v)


# ---------------------------------------------------------------------------
# Canonical operator schema
# ---------------------------------------------------------------------------


def operator_to_dict(A: CircleOperator) -> dict:
    if not isinstance(A, CircleOperator):
        raise TypeError("only CircleOperator has a canonical spec; products are config recipes")
    terms = []
    for s, m in A.terms:
        terms.append({
            "shift": s,
            "plus": [_c2j(v) for v in m.plus],
            "minus": [_c2j(v) for v in m.minus],
            "exceptional": {str(k): _c2j(v) for k, v in m.exceptional.items()},
        })
    smoothing = [{
        "seed": sp.seed, "amplitude": sp.amplitude, "width": sp.width, "support": sp.support,
        "coeff": _c2j(sp.coeff), "diagonal": sp.diagonal,
    } for sp in A.smoothing]
    out = {"terms": terms, "smoothing": smoothing}
    if A.factor != 1:
        out["factor"] = _c2j(A.factor)
    return out


def operator_from_dict(d: Mapping, where: str = "operator") -> CircleOperator:
    if not isinstance(d, Mapping):
        raise SpecError(where, "expected an object")
    unknown = set(d) - {"terms", "smoothing", "factor"}
    if unknown:
        raise SpecError(where, f"unknown keys {sorted(unknown)}")
    terms = []
    raw_terms = d.get("terms", [])
    if not isinstance(raw_terms, list):
        raise SpecError(f"{where}.terms", "expected a list")
    for i, t in enumerate(raw_terms):
        f = f"{where}.terms[{i}]"
        if not isinstance(t, Mapping):
            raise SpecError(f, "expected an object")
        if "shift" not in t or "plus" not in t:
            raise SpecError(f, "'shift' and 'plus' are required")
        plus = [_j2c(v, f"{f}.plus[{j}]") for j, v in enumerate(t["plus"])]
        minus = [_j2c(v, f"{f}.minus[{j}]") for j, v in enumerate(t.get("minus", t["plus"]))]
        if not plus or not minus:
            raise SpecError(f, "expansions must be nonempty")
        exc_raw = t.get("exceptional", {"0": 0})
        if not isinstance(exc_raw, Mapping):
            raise SpecError(f"{f}.exceptional", "expected an object keyed by mode")
        exc = {}
        for k, v in exc_raw.items():
            try:
                kk = int(k)
            except ValueError:
                raise SpecError(f"{f}.exceptional", f"mode key {k!r} is not an integer") from None
            exc[kk] = _j2c(v, f"{f}.exceptional[{k}]")
        if 0 not in exc:
            raise SpecError(f"{f}.exceptional", "must contain mode 0")
        terms.append((_int(t["shift"], f"{f}.shift"), MultiplierExpansion(tuple(plus), tuple(minus), exc)))
    sm = d.get("smoothing", [])
    if isinstance(sm, Mapping):
        sm = [sm]
    specs = []
    for i, s in enumerate(sm):
        f = f"{where}.smoothing[{i}]"
        try:
            sp = SmoothingSpec(
                _int(s["seed"], f"{f}.seed"), _num(s["amplitude"], f"{f}.amplitude"),
                _num(s["width"], f"{f}.width"), _int(s["support"], f"{f}.support"),
                _j2c(s.get("coeff", 1.0), f"{f}.coeff"),
                None if s.get("diagonal") is None else _int(s["diagonal"], f"{f}.diagonal"),
            )
        except KeyError as e:
            raise SpecError(f, f"missing field {e.args[0]!r}") from None
        except (TypeError, ValueError) as e:
            if isinstance(e, SpecError):
                raise
            raise SpecError(f, str(e)) from None
        if sp.amplitude > 0:
            specs.append(sp)
    return CircleOperator(tuple(terms), tuple(specs), _j2c(d.get("factor", 1.0), f"{where}.factor"))


def dumps_operator(A: CircleOperator) -> str:
    return canonical_json(operator_to_dict(A))


def loads_operator(text: str) -> CircleOperator:
    return operator_from_dict(json.loads(text))


def load_operator_file(path: str | Path) -> CircleOperator:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise SpecError(str(path), "file not found") from None
    except json.JSONDecodeError as e:
        raise SpecError(f"{path}:{e.lineno}:{e.colno}", e.msg) from None
    return operator_from_dict(data, where=str(path))


# ---------------------------------------------------------------------------
# Recipes
# ---------------------------------------------------------------------------


def _series(d: Mapping, where: str) -> FourierSeries:
    def modes(key):
        raw = d.get(key, {})
        if not isinstance(raw, Mapping):
            raise SpecError(f"{where}.{key}", "expected an object {frequency: amplitude}")
        out = {}
        for k, v in raw.items():
            try:
                kk = int(k)
            except ValueError:
                raise SpecError(f"{where}.{key}", f"frequency {k!r} is not an integer") from None
            if kk <= 0:
                raise SpecError(f"{where}.{key}", "frequencies must be positive")
            out[kk] = _num(v, f"{where}.{key}[{k}]")
        return out
    return FourierSeries.from_trig(_num(d.get("const", 0.0), f"{where}.const"), modes("cos"), modes("sin"))


RECIPES = ("file", "terms", "identity", "exp_multiplication", "multiplication", "reciprocal",
           "shift", "random", "smoothing", "sum", "product", "scaled")


def build_operator(spec: Any, base_dir: Path | None = None, where: str = "operator") -> _OperatorBase:
    """Operator from a config recipe.

    Recipes (exactly one key, except inline canonical specs):
      {"file": path}                       canonical spec file
      {"terms": [...], "smoothing": ...}   inline canonical spec
      {"identity": true}
      {"exp_multiplication": {"const", "cos", "sin"}}  M_f with log f given
      {"multiplication": {"const", "cos", "sin"}}      M_f with f given
      {"reciprocal": {"a", "c", "shift"}}  c / (a + |k|)
      {"shift": {"shift", "c"}}
      {"random": {"seed", "bandwidth", "scale", "depth"}}
      {"smoothing": {"seed", "amplitude", "width", "support"}}
      {"sum": [op, ...]}, {"product": [op, ...]}, {"scaled": {"c", "op"}}
    """
    if not isinstance(spec, Mapping) or not spec:
        raise SpecError(where, "expected a non-empty object")
    if "terms" in spec:
        return operator_from_dict(spec, where)
    if len(spec) != 1:
        raise SpecError(where, f"expected exactly one recipe key, got {sorted(spec)}")
    (kind, arg), = spec.items()
    w = f"{where}.{kind}"
    if kind == "file":
        p = Path(arg)
        if base_dir is not None and not p.is_absolute():
            p = base_dir / p
        return load_operator_file(p)
    if kind == "identity":
        return identity()
    if kind in ("exp_multiplication", "multiplication"):
        if not isinstance(arg, Mapping):
            raise SpecError(w, "expected an object")
        fs = _series(arg, w)
        return mk_multiplication(fs.exp() if kind == "exp_multiplication" else fs)
    if kind == "reciprocal":
        return mk_reciprocal_multiplier(_num(arg.get("a", 1.0), f"{w}.a"), _j2c(arg.get("c", 1.0), f"{w}.c"),
                                        _int(arg.get("shift", 0), f"{w}.shift"))
    if kind == "shift":
        return mk_shift(_int(arg.get("shift", 1), f"{w}.shift"), _j2c(arg.get("c", 1.0), f"{w}.c"))
    if kind == "random":
        return mk_random_operator(_int(arg.get("seed", 0), f"{w}.seed"), _int(arg.get("bandwidth", 2), f"{w}.bandwidth"),
                                  _num(arg.get("scale", 0.1), f"{w}.scale"), _int(arg.get("depth", 2), f"{w}.depth"))
    if kind == "smoothing":
        try:
            return mk_smoothing(_int(arg["seed"], f"{w}.seed"), _num(arg["amplitude"], f"{w}.amplitude"),
                                _num(arg["width"], f"{w}.width"), _int(arg["support"], f"{w}.support"))
        except KeyError as e:
            raise SpecError(w, f"missing field {e.args[0]!r}") from None
    if kind in ("sum", "product"):
        if not isinstance(arg, list) or not arg:
            raise SpecError(w, "expected a non-empty list of operators")
        ops = [build_operator(a, base_dir, f"{w}[{i}]") for i, a in enumerate(arg)]
        if kind == "product":
            return OperatorProduct(tuple(ops)) if len(ops) > 1 else ops[0]
        if not all(isinstance(o, CircleOperator) for o in ops):
            raise SpecError(w, "sums of products are not supported")
        out = ops[0]
        for o in ops[1:]:
            out = out + o
        return out
    if kind == "scaled":
        op = build_operator(arg.get("op"), base_dir, f"{w}.op")
        if not isinstance(op, CircleOperator):
            raise SpecError(w, "only CircleOperators can be scaled")
        return op * _j2c(arg.get("c", 1.0), f"{w}.c")
    raise SpecError(where, f"unknown recipe {kind!r}; expected one of {list(RECIPES)}")


def operator_fingerprint(A: _OperatorBase) -> str:
    """Content hash of the canonical form (products hash their factor list)."""
    if isinstance(A, OperatorProduct):
        return content_hash({"product": [operator_fingerprint(f) for f in A.factors]})
    return content_hash(operator_to_dict(A))
