from __future__ import annotations

import json
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from zdet.cache import Cache, cache_key
from zdet.circle_ops import (
    CircleOperator,
    OperatorProduct,
    identity,
    mk_random_operator,
    mk_reciprocal_multiplier,
    mk_smoothing,
    truncate,
)
from zdet.specio import (
    SpecError,
    build_operator,
    content_hash,
    dumps_operator,
    load_operator_file,
    loads_operator,
    operator_fingerprint,
    operator_from_dict,
    operator_to_dict,
)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), bw=st.integers(0, 3), depth=st.integers(1, 4),
       cplx=st.booleans(), smooth=st.booleans(),
       c=st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False))
def test_round_trip_bit_exact(seed, bw, depth, cplx, smooth, c):
    A = mk_random_operator(seed, bw, 0.37, depth, complex_coeffs=cplx)
    if smooth:
        A = A + mk_smoothing(seed % 1000, 0.01, 3.3, 7)
    A = A * c
    B = loads_operator(dumps_operator(A))
    assert B == A
    assert dumps_operator(B) == dumps_operator(A)
    assert np.array_equal(truncate(B, 9), truncate(A, 9))


def test_shorthand_forms_accepted():
    A = operator_from_dict({"terms": [{"shift": 1, "plus": [0.5, 0.1]}], "smoothing": {
        "seed": 3, "amplitude": 0.01, "width": 2.0, "support": 5}})
    s, m = A.terms[0]
    assert s == 1 and m.minus == m.plus and m.exceptional == {0: 0}
    assert len(A.smoothing) == 1 and A.smoothing[0].coeff == 1
    d = operator_to_dict(A)
    assert d["terms"][0]["plus"] == [[0.5, 0.0], [0.1, 0.0]]
    assert "factor" not in d


@pytest.mark.parametrize("spec, field", [
    ({"terms": [{"shift": 1}]}, "operator.terms[0]"),
    ({"terms": [{"shift": 1.5, "plus": [1]}]}, "operator.terms[0].shift"),
    ({"terms": [{"shift": 0, "plus": [1, "x"]}]}, "operator.terms[0].plus[1]"),
    ({"terms": [{"shift": 0, "plus": [1], "exceptional": {"a": 1}}]}, "operator.terms[0].exceptional"),
    ({"terms": [{"shift": 0, "plus": [1], "exceptional": {"1": 1}}]}, "operator.terms[0].exceptional"),
    ({"terms": [], "smoothing": [{"seed": 1, "amplitude": 0.1, "width": 2}]}, "operator.smoothing[0]"),
    ({"terms": [], "bogus": 1}, "operator"),
    ({"terms": [{"shift": 0, "plus": [True]}]}, "operator.terms[0].plus[0]"),
])
def test_spec_error_field_paths(spec, field):
    with pytest.raises(SpecError) as ei:
        operator_from_dict(spec)
    assert ei.value.field == field


def test_load_operator_file(tmp_path):
    A = mk_random_operator(2, 1, 0.2)
    p = tmp_path / "a.json"
    p.write_text(dumps_operator(A))
    assert load_operator_file(p) == A
    bad = tmp_path / "bad.json"
    bad.write_text('{"terms": [\n  {"shift": 1,,}]}')
    with pytest.raises(SpecError) as ei:
        load_operator_file(bad)
    assert ei.value.field.endswith("bad.json:2:15")
    with pytest.raises(SpecError, match="not found"):
        load_operator_file(tmp_path / "missing.json")


def test_build_operator_recipes(tmp_path):
    (tmp_path / "op.json").write_text(dumps_operator(identity()))
    assert build_operator({"file": "op.json"}, tmp_path) == identity()
    assert build_operator({"identity": True}) == identity()
    R = build_operator({"reciprocal": {"a": 1.0, "c": 0.3}})
    assert R == mk_reciprocal_multiplier(1.0, 0.3)
    P = build_operator({"product": [{"identity": True}, {"random": {"seed": 1}}]})
    assert isinstance(P, OperatorProduct)
    S = build_operator({"sum": [{"identity": True}, {"shift": {"shift": 1, "c": 0.2}}]})
    assert isinstance(S, CircleOperator) and len(S.terms) == 2
    M = build_operator({"exp_multiplication": {"const": 0.2, "cos": {"1": 0.6}}})
    # hat f(0) = e^0.2 I_0(0.6)
    assert abs(truncate(M, 0)[0, 0] - np.exp(0.2) * special.i0(0.6)) <= 1e-14
    with pytest.raises(SpecError, match="unknown recipe"):
        build_operator({"nope": 1})
    with pytest.raises(SpecError, match="exactly one"):
        build_operator({"identity": True, "shift": {}})
    with pytest.raises(SpecError) as ei:
        build_operator({"sum": [{"identity": True}, {"shift": {"shift": "x"}}]})
    assert ei.value.field == "operator.sum[1].shift.shift"
    with pytest.raises(SpecError, match="positive"):
        build_operator({"multiplication": {"cos": {"0": 1.0}}})


def test_fingerprints():
    A = mk_random_operator(1, 2, 0.1)
    B = mk_random_operator(2, 2, 0.1)
    assert operator_fingerprint(A) == operator_fingerprint(loads_operator(dumps_operator(A)))
    assert operator_fingerprint(A) != operator_fingerprint(B)
    assert operator_fingerprint(A @ B) != operator_fingerprint(B @ A)
    assert content_hash({"a": 1, "b": 2}) == content_hash({"b": 2, "a": 1})


def test_cache_round_trip(tmp_path):
    c = Cache(tmp_path)
    k = cache_key("op", 10, "logdet")
    assert c.get(k) is None and c.misses == 1
    c.put(k, b"hello")
    assert c.get(k) == b"hello" and c.hits == 1
    arr = np.arange(6, dtype=complex).reshape(2, 3) * (1 + 0.5j)
    c.put_array("a" * 64, arr)
    assert np.array_equal(c.get_array("a" * 64), arr)
    c.put_complex("b" * 64, 1.5 - 2j)
    assert c.get_complex("b" * 64) == 1.5 - 2j
    c.put_json("c" * 64, {"x": [1, 2]})
    assert c.get_json("c" * 64) == {"x": [1, 2]}


def test_cache_key_order_sensitive():
    assert cache_key("a", 1) != cache_key(1, "a")
    assert cache_key("a", 1) == cache_key("a", 1)


@pytest.mark.parametrize("damage", ["flip", "truncate", "header"])
def test_corrupt_entry_is_a_miss(tmp_path, damage):
    c = Cache(tmp_path)
    k = cache_key("x")
    c.put(k, b"payload-bytes")
    path = tmp_path / k[:2] / f"{k}.bin"
    raw = bytearray(path.read_bytes())
    if damage == "flip":
        raw[-1] ^= 0xFF
    elif damage == "truncate":
        raw = raw[:-3]
    else:
        raw[:4] = b"XXXX"
    path.write_bytes(bytes(raw))
    assert c.get(k) is None
    assert not path.exists()
    c.put(k, b"payload-bytes")
    assert c.get(k) == b"payload-bytes"


def test_concurrent_writers_and_readers(tmp_path):
    c = Cache(tmp_path)
    k = cache_key("shared")
    payloads = [bytes([i]) * 50_000 for i in range(4)]
    bad = []

    def writer(p):
        for _ in range(25):
            c.put(k, p)

    def reader():
        for _ in range(100):
            got = c.get(k)
            if got is not None and got not in payloads:
                bad.append(got[:8])

    threads = [threading.Thread(target=writer, args=(p,)) for p in payloads]
    threads += [threading.Thread(target=reader) for _ in range(2)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not bad
    assert c.get(k) in payloads
    assert not [p for p in (tmp_path / k[:2]).iterdir() if p.name.startswith(".")]


def test_unwritable_directory_warns(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.warns(RuntimeWarning, match="not writable"):
        c = Cache(blocker / "cache")
    assert not c.enabled
    c.put("k" * 64, b"x")
    assert c.get("k" * 64) is None


def test_disabled_cache():
    c = Cache(None)
    assert not c.enabled
    c.put("k", b"x")
    assert c.get("k") is None and c.misses == 0


def test_spec_json_is_canonical():
    A = mk_random_operator(9, 1, 0.2, complex_coeffs=True) * 2.0
    text = dumps_operator(A)
    assert text == json.dumps(json.loads(text), sort_keys=True, separators=(",", ":"))
    assert json.loads(text)["factor"] == [2.0, 0.0]
