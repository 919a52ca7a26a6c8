import hashlib
import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gpmatch import barrington as bt
from gpmatch.barrington import (
    DUMMY,
    NotACycle,
    SinkError,
    eval_aop,
    eval_aop_batch,
    eval_gp,
    eval_gp_batch,
    eval_gp_stream,
    read_program,
    stream_transform,
    transform,
    transform_alpha_one,
    write_program,
)
from gpmatch.circuit import MissingInput, all_assignments, evaluate_batch, parse_sexp, to_sexp
from gpmatch.s5 import ALPHA, BETA, ELEMENTS, GAMMA, IDENTITY, Perm, find_conjugator, inv, is_five_cycle

from conftest import random_circuit

CYCLES = [g for g in ELEMENTS if is_five_cycle(g)]


def expected_codes(c, target, xs):
    return np.where(evaluate_batch(c, xs) == 1, target.code, 0)


def test_single_input():
    c = parse_sexp("x0")
    p = transform(c, ALPHA)
    assert len(p) == 1
    assert eval_gp(p, {"x0": 1}) == ALPHA
    assert eval_gp(p, {"x0": 0}) == IDENTITY
    a = transform_alpha_one(c, ALPHA)
    assert a.index_seq == ["x0"]
    assert [int(g) for g in a.interstitials] == [IDENTITY.code, IDENTITY.code]
    assert eval_aop(a, {"x0": 1}) == ALPHA
    assert eval_aop(a, {"x0": 0}) == IDENTITY


def test_and_gate():
    c = parse_sexp("(and x0 x1)")
    for target in (ALPHA, BETA, Perm((5, 3, 4, 1, 2))):
        p = transform(c, target)
        assert len(p) == 4
        assert eval_gp(p, {"x0": 1, "x1": 1}) == target
        for x in ({"x0": 0, "x1": 1}, {"x0": 1, "x1": 0}, {"x0": 0, "x1": 0}):
            assert eval_gp(p, x) == IDENTITY
    # against alpha the raw commutator gamma is conjugated onto alpha
    rho = find_conjugator(ALPHA, GAMMA)
    assert inv(rho) * GAMMA * rho == ALPHA


def test_and_gate_aop():
    a = transform_alpha_one(parse_sexp("(and x0 x1)"), ALPHA)
    assert len(a) == 4 and set(a.index_seq) == {"x0", "x1"}
    assert len(a.interstitials) == 5
    xs = all_assignments(2)
    assert (eval_aop_batch(a, xs) == np.array([0, 0, 0, ALPHA.code])).all()


def test_empty_program_is_identity():
    p = bt.GroupProgram(np.zeros(0, np.uint8), np.zeros(0, np.uint8), np.zeros(0, np.int32), (), ALPHA)
    assert eval_gp(p, {}) == IDENTITY


def test_target_must_be_cycle():
    with pytest.raises(NotACycle):
        transform(parse_sexp("x0"), IDENTITY)
    with pytest.raises(NotACycle):
        transform_alpha_one(parse_sexp("x0"), Perm((2, 1, 3, 4, 5)))


def test_missing_input():
    p = transform(parse_sexp("(and x0 x1)"), ALPHA)
    with pytest.raises(MissingInput):
        eval_gp(p, {"x0": 1})


def test_constants_use_dummy_slot():
    c = parse_sexp("(and 1 x0)")
    p = transform(c, ALPHA)
    assert len(p) == 4
    assert (p.k == DUMMY).sum() == 2
    assert [eval_gp(p, {"x0": v}) for v in (0, 1)] == [IDENTITY, ALPHA]
    a = transform_alpha_one(c, ALPHA)
    assert a.index_seq.count(None) == 2
    assert [eval_aop(a, {"x0": v}) for v in (0, 1)] == [IDENTITY, ALPHA]


@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(0, 4), st.sampled_from(CYCLES))
def test_semantics_random(seed, n, depth, target):
    c = random_circuit(np.random.default_rng(seed), n, depth)
    xs = all_assignments(len(c.inputs))
    want = expected_codes(c, target, xs)
    p = transform(c, target)
    a = transform_alpha_one(c, target)
    assert len(p) == len(a) == 4**c.depth
    assert (eval_gp_batch(p, xs) == want).all()
    assert (eval_aop_batch(a, xs) == want).all()


@given(st.integers(0, 2**32 - 1), st.sampled_from(CYCLES), st.sampled_from(CYCLES))
def test_cycle_independence(seed, t1, t2):
    c = random_circuit(np.random.default_rng(seed), 3, 3)
    p1, p2 = transform(c, t1), transform(c, t2)
    assert len(p1) == len(p2)
    rho = find_conjugator(t2, t1)
    xs = all_assignments(len(c.inputs))
    v1 = eval_gp_batch(p1, xs)
    v2 = eval_gp_batch(p2, xs)
    for a, b in zip(v1, v2):
        assert inv(rho) * ELEMENTS[a] * rho == ELEMENTS[b]


@given(st.integers(0, 2**32 - 1))
def test_negation_is_free(seed):
    c = random_circuit(np.random.default_rng(seed), 3, 3)
    neg = parse_sexp(f"(not {to_sexp(c)})")
    assert len(transform(neg, ALPHA)) == len(transform(c, ALPHA))
    xs = all_assignments(len(c.inputs))
    assert (eval_gp_batch(transform(neg, ALPHA), xs) == expected_codes(neg, ALPHA, xs)).all()


def test_lifting_to_higher_level():
    c = parse_sexp("(or x0 (and x1 x2))")
    xs = all_assignments(3)
    for level in (2, 3, 4):
        p = transform(c, ALPHA, level=level)
        a = transform_alpha_one(c, ALPHA, level=level)
        assert len(p) == len(a) == 4**level
        assert (eval_gp_batch(p, xs) == expected_codes(c, ALPHA, xs)).all()
        assert (eval_aop_batch(a, xs) == expected_codes(c, ALPHA, xs)).all()
    with pytest.raises(ValueError):
        transform(c, ALPHA, level=1)


def test_stream_counter():
    seen = []
    stats = stream_transform(parse_sexp("(and x0 x1)"), ALPHA, lambda ch: seen.append(len(ch[2])))
    assert sum(seen) == stats["length"] == 4
    assert stats["publisher"] == 4 and stats["subscriber"] == 0


def test_stream_ownership_counts():
    stats = stream_transform(parse_sexp("(and x0 b0)"), ALPHA, lambda ch: None)
    assert stats["publisher"] == stats["subscriber"] == 2


def test_stream_hash_matches_materialized():
    rng = np.random.default_rng(11)
    for _ in range(50):
        c = random_circuit(rng, int(rng.integers(1, 6)), int(rng.integers(0, 9)))
        streamed = [hashlib.sha256() for _ in range(3)]

        def sink(chunk):
            for h, arr in zip(streamed, chunk):
                h.update(arr.tobytes())

        stream_transform(c, ALPHA, sink, chunk=64)
        p = transform(c, ALPHA)
        whole = [hashlib.sha256(arr.tobytes()).digest() for arr in (p.g0, p.g1, p.k)]
        assert [h.digest() for h in streamed] == whole


def test_stream_value_accumulator():
    c = random_circuit(np.random.default_rng(4), 4, 8)
    assert len(c.inputs) > 0
    p = transform(c, BETA)
    rng = np.random.default_rng(0)
    for _ in range(5):
        x = {name: int(v) for name, v in zip(c.inputs, rng.integers(0, 2, len(c.inputs)))}
        assert eval_gp_stream(c, BETA, x) == eval_gp(p, x)


def test_sink_errors_propagate():
    def sink(chunk):
        raise OSError("disk full")

    with pytest.raises(SinkError):
        stream_transform(parse_sexp("(and x0 x1)"), ALPHA, sink)


def test_program_file_round_trip():
    c = parse_sexp("(or (and x0 1) (not x1))")
    p = transform(c, ALPHA)
    buf = io.BytesIO()
    size = write_program(p, buf)
    assert size == 14 + 6 * len(p)
    raw = buf.getvalue()
    assert raw[:4] == b"GPS5" and raw[4] == 1 and raw[5] == 0
    assert int.from_bytes(raw[6:14], "big") == len(p)
    back = read_program(io.BytesIO(raw), inputs=c.inputs)
    assert (back.g0 == p.g0).all() and (back.g1 == p.g1).all() and (back.k == p.k).all()

    a = transform_alpha_one(c, ALPHA)
    buf = io.BytesIO()
    assert write_program(a, buf) == 14 + len(a) + 1 + 4 * len(a)
    back = read_program(io.BytesIO(buf.getvalue()), inputs=c.inputs)
    assert (back.interstitials == a.interstitials).all() and back.index_seq == a.index_seq


def test_program_file_rejects_garbage():
    with pytest.raises(bt.ProgramFormatError):
        read_program(io.BytesIO(b"GPS4" + bytes(10)))
    with pytest.raises(bt.ProgramFormatError):
        read_program(io.BytesIO(b"GPS5\x01\x00" + (5).to_bytes(8, "big") + bytes(3)))
