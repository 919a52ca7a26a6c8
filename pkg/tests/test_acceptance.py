"""Acceptance criteria 1 to 9.

Every test is named ``test_criterion_N_...``; the terminal summary prints one
PASS/FAIL line per criterion together with the measured numbers.
"""
import hashlib
import itertools
import os
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from scipy.stats import chisquare

from gpmatch import bench
from gpmatch import protocols as pr
from gpmatch.barrington import eval_aop_batch, eval_gp_batch, transform, transform_alpha_one
from gpmatch.blinding import RandomTape, apply_blinders, blind, simulate_batch
from gpmatch.circuit import all_assignments, evaluate_batch, parse_sexp
from gpmatch.net import frames as fr
from gpmatch.net.client import publish, subscribe
from gpmatch.s5 import (
    ALPHA,
    BETA,
    ELEMENTS,
    IDENTITY,
    INV_TABLE,
    MUL_TABLE,
    Perm,
    inv,
    is_five_cycle,
    product_codes,
    seq_value,
)

from conftest import random_circuit

SEED = bytes(range(32))
CYCLES = [g for g in ELEMENTS if is_five_cycle(g)]


# ----------------------------------------------------------------------- 1

def test_criterion_1_group_laws(report):
    start = time.perf_counter()
    codes = np.arange(120)
    e = IDENTITY.code
    assert (MUL_TABLE[e, codes] == codes).all() and (MUL_TABLE[codes, e] == codes).all()
    assert (MUL_TABLE[codes, INV_TABLE[codes]] == e).all()
    assert (MUL_TABLE[INV_TABLE[codes], codes] == e).all()
    # associativity over all 120^3 triples
    left = MUL_TABLE[MUL_TABLE[:, :, None], codes[None, None, :]]
    right = MUL_TABLE[codes[:, None, None], MUL_TABLE[None, :, :]]
    assert (left == right).all()
    # the table agrees with composing functions right to left
    for g, h in itertools.product(ELEMENTS[::7], ELEMENTS[::11]):
        assert (g * h).images == tuple(g(h(x)) for x in range(1, 6))
    gamma = seq_value([ALPHA, BETA, inv(ALPHA), inv(BETA)])
    assert gamma == Perm((3, 5, 2, 1, 4))
    assert ALPHA * BETA * inv(ALPHA) * inv(BETA) == gamma
    elapsed = time.perf_counter() - start
    report(f"120 elements exhaustive, fold = {gamma.images}, {elapsed:.3f} s")
    assert elapsed < 1.0


# ----------------------------------------------------------------------- 2

def test_criterion_2_length_law(corpus, report):
    assert len(corpus) >= 200
    assert max(len(c.inputs) for c in corpus) <= 6 and max(c.depth for c in corpus) <= 6
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    for c in corpus:
        target = CYCLES[int(rng.integers(len(CYCLES)))]
        assert len(transform(c, target)) == 4**c.depth
        assert len(transform_alpha_one(c, target)) == 4**c.depth
    elapsed = time.perf_counter() - start
    depths = np.bincount([c.depth for c in corpus])
    report(f"{len(corpus)} circuits (per-depth counts {depths.tolist()}), both forms, {elapsed:.2f} s")
    assert elapsed < 30


# ----------------------------------------------------------------------- 3

def test_criterion_3_transform_semantics(corpus, report):
    start = time.perf_counter()
    rng = np.random.default_rng(1)
    checked = failures = 0
    for c in corpus:
        target = CYCLES[int(rng.integers(len(CYCLES)))]
        xs = all_assignments(len(c.inputs))
        want = np.where(evaluate_batch(c, xs) == 1, target.code, IDENTITY.code)
        failures += int((eval_gp_batch(transform(c, target), xs) != want).sum())
        failures += int((eval_aop_batch(transform_alpha_one(c, target), xs) != want).sum())
        checked += 2 * len(xs)
    elapsed = time.perf_counter() - start
    report(f"{checked} evaluations, {failures} failures, {elapsed:.1f} s")
    assert failures == 0
    assert elapsed < 120


# ----------------------------------------------------------------------- 4

def test_criterion_4_value_preservation(report):
    rng = np.random.default_rng(2)
    tape = RandomTape.from_seed(SEED)
    for _ in range(10_000):
        seq = rng.integers(0, 120, int(rng.integers(1, 40))).astype(np.uint8)
        assert blind(seq, tape).value == seq_value(seq)
    report("1e4 sequences value-preserved")


def test_criterion_4_uniform_at_length_two(report):
    count = 1_000_000
    seq = np.array([ALPHA.code, BETA.code], np.uint8)
    blinders = RandomTape.from_seed(SEED).draw(count)[:, None]
    out = apply_blinders(np.broadcast_to(seq, (count, 2)), blinders)
    assert (product_codes(out) == seq_value(seq).code).all()
    p = chisquare(np.bincount(out[:, 0], minlength=120)).pvalue
    report(f"L=2 chi-square p = {p:.3f}")
    assert p > 0.001


def test_criterion_4_uniform_at_length_three(report):
    count = 2_000_000
    seq = np.array([ALPHA.code, 57, BETA.code], np.uint8)
    blinders = RandomTape.from_seed(bytes(31) + b"\x01").draw(2 * count).reshape(count, 2)
    out = apply_blinders(np.broadcast_to(seq, (count, 3)), blinders)
    assert (product_codes(out) == seq_value(seq).code).all()
    cells = out[:, 0].astype(np.int64) * 120 + out[:, 1]
    p = chisquare(np.bincount(cells, minlength=14_400)).pvalue
    report(f"L=3 chi-square p = {p:.3f}")
    assert p > 0.001


# ----------------------------------------------------------------------- 5

def test_criterion_5_selector_contracts(report):
    start = time.perf_counter()
    checked = 0
    for n in (2, 4, 8):
        xs = all_assignments(n)
        fs, ofs = pr.build_fs_selector_block(n), pr.build_ofs_selector_block(n)
        # the FS program has 4n^2 slots, half of them subscriber-side b-slots
        assert len(fs.program) == 4 * n * n and fs.slots == 2 * n * n
        assert ofs.slots == 2 * n
        for block, inst in ((fs, pr.instantiate_fs), (ofs, pr.instantiate_ofs)):
            for k in [pr.PADDING, *range(n)]:
                inter = inst(block, k)
                for x in xs:
                    want = IDENTITY if k == pr.PADDING else ALPHA ** int(x[k])
                    assert pr.block_value(block, inter, x) == want
                    checked += 1
    elapsed = time.perf_counter() - start
    report(f"{checked} block evaluations, {elapsed:.1f} s")
    assert elapsed < 60


# ----------------------------------------------------------------------- 6

@pytest.mark.parametrize("variant", [pr.FSGP, pr.OFSGP])
def test_criterion_6_end_to_end(variant, report):
    failures = sessions = 0
    for n, depth in itertools.product((2, 4), (1, 2)):
        rng = np.random.default_rng(n * 100 + depth)
        xs = all_assignments(n)
        for i in range(50):
            pred = random_circuit(rng, n, int(rng.integers(0, depth + 1)))
            # evaluate over the full metadata width even if some bits are unused
            width = np.zeros((len(xs), len(pred.inputs)), np.uint8)
            for j, name in enumerate(pred.inputs):
                width[:, j] = xs[:, int(name[1:])]
            want = evaluate_batch(pred, width)
            for m, w in zip(xs, want):
                seed = rng.bytes(32)
                r = pr.run_session(variant, n, pred, m.tolist(), seed, depth_bound=depth)
                failures += int(r.matched != w or r.broker_value != ALPHA ** int(w))
                sessions += 1
    report(f"{variant}: {sessions} sessions, {failures} failures")
    assert failures == 0


def test_criterion_6_ugp(report):
    start = time.perf_counter()
    preds = [parse_sexp(t) for t in ("(and x0 x1)", "(or x0 x1)", "(not x0)")]
    structure = pr.negotiate_structure(pr.UGP, 2, 1)
    assert structure.length <= 4**13
    failures = 0
    for pred, m in itertools.product(preds, itertools.product((0, 1), repeat=2)):
        r = pr.run_session(pr.UGP, 2, pred, list(m), SEED, depth_bound=1)
        failures += int(r.matched != evaluate_batch(pred, np.array([m[: len(pred.inputs)]]))[0])
    elapsed = time.perf_counter() - start
    report(f"ugp: length {structure.length} = 4^{int(np.log(structure.length) / np.log(4))}, "
           f"12 sessions, {failures} failures, {elapsed:.0f} s")
    assert failures == 0
    assert elapsed < 600


# ----------------------------------------------------------------------- 7

def test_criterion_7_structure_sizes(report):
    for n, depth in itertools.product((2, 4, 8), (0, 1, 2)):
        ofs = pr.negotiate_structure(pr.OFSGP, n, depth)
        fs = pr.negotiate_structure(pr.FSGP, n, depth)
        assert ofs.publisher_slots == 2 * n * 4**depth
        assert fs.length == 4 * n * n * 4**depth
        assert bench.bench_lengths(pr.OFSGP, n, depth)["ok"]
        assert bench.bench_lengths(pr.FSGP, n, depth)["ok"]
    report("9 (n, D) pairs exact for both variants")


def test_criterion_7_table_two(report):
    rows = bench.bench_hamming(16, use_table_depths=True, execute=False)
    assert len(rows) == 15
    for row, (n, d, printed) in zip(rows, bench.TABLE2):
        assert (row.n, row.d) == (n, d)
        assert row.L == 2 * n * 4**d
        assert bench.matches_printed(row.L, printed)
    report("15/15 rows reproduced")


def test_criterion_7_timing_linear(report):
    rows = bench.bench_hamming(16, use_table_depths=True)
    rows += bench.bench_hamming(16, use_table_depths=False)
    timed = [r for r in rows if r.measured_ms is not None and r.L >= 1 << 16]
    assert len(timed) >= 3 and all(r.L <= bench.DEFAULT_BUDGET for r in timed)
    ns, deviation = bench.linear_fit(rows)
    extrapolated = ns * 1e-9 * bench.ofsgp_length(16, 16)
    sizes = ", ".join(f"{r.L}" for r in timed)
    report(f"{ns:.1f} ns/element over L in [{sizes}], max deviation {deviation:.1%}, "
           f"n=16 extrapolates to {extrapolated:,.0f} s")
    assert deviation <= 0.20
    assert extrapolated > 1.0


# ----------------------------------------------------------------------- 8

SAMPLES = 1_000_000


def honest_batch(structure, predicate, metadata, count, seed):
    """Blinded sessions drawn from one continuous tape, vectorized."""
    seq = pr.subscriber_sequence(structure, predicate)
    seq[structure.publisher_positions] = pr.publisher_sequence(structure, metadata)[structure.publisher_positions]
    width = structure.total_slots - 1
    blinders = RandomTape.from_seed(seed).draw(count * width).reshape(count, width)
    return apply_blinders(np.broadcast_to(seq, (count, len(seq))), blinders), seq


def merged_real_session(structure, predicate, metadata, seed):
    sid = bytes(16)
    sub = pr.subscriber_share(structure, predicate, RandomTape.from_seed(seed), sid)
    pub = pr.publisher_share(structure, metadata, RandomTape.from_seed(seed), sid)
    out = np.zeros(structure.total_slots, np.uint8)
    out[sub.positions] = sub.elems
    out[pub.positions] = pub.elems
    return out


def tv(a, b, cells):
    p = np.bincount(a, minlength=cells) / len(a)
    q = np.bincount(b, minlength=cells) / len(b)
    return 0.5 * float(np.abs(p - q).sum())


def distances(honest, simulated):
    """Marginal, pairwise (coarsened mod 9) and hashed-tuple statistical distances."""
    width = honest.shape[1]
    marg = max(tv(honest[:, i], simulated[:, i], 120) for i in range(width))
    pair = max(
        tv((honest[:, i] % 9) * 9 + honest[:, j] % 9, (simulated[:, i] % 9) * 9 + simulated[:, j] % 9, 81)
        for i, j in itertools.combinations(range(width), 2)
    )
    tables = np.random.default_rng(99).integers(0, 1 << 30, (width, 120))

    def bucket(x):
        h = np.zeros(len(x), np.int64)
        for i in range(width):
            h ^= tables[i][x[:, i]]
        return h % 64

    joint = tv(bucket(honest), bucket(simulated), 64)
    return marg, pair, joint


@pytest.mark.parametrize(
    "pred_text, metadata, bit",
    [("x0", 1, 1), ("(not x0)", 0, 1), ("x0", 0, 0), ("(not x0)", 1, 0)],
)
def test_criterion_8_simulator_equivalence(pred_text, metadata, bit, report):
    structure = pr.negotiate_structure(pr.OFSGP, 1, 0)
    assert structure.total_slots <= 7
    pred = parse_sexp(pred_text)
    seed = hashlib.sha256(f"{pred_text}/{metadata}".encode()).digest()
    honest, seq = honest_batch(structure, pred, [metadata], SAMPLES, seed)
    assert seq_value(seq) == ALPHA**bit
    assert (product_codes(honest) == (ALPHA**bit).code).all()
    # the vectorized sampler reproduces the real share path
    for i in range(100):
        s = hashlib.sha256(seed + i.to_bytes(4, "big")).digest()
        real = merged_real_session(structure, pred, [metadata], s)
        assert (real == honest_batch(structure, pred, [metadata], 1, s)[0][0]).all()
    simulated = simulate_batch(ALPHA**bit, structure.total_slots, SAMPLES, np.random.default_rng(int.from_bytes(seed[:8], "big")))
    marg, pair, joint = distances(honest, simulated)
    report(f"{pred_text} m={metadata}: TV marginal {marg:.4f}, pairs {pair:.4f}, hashed tuple {joint:.4f}")
    assert max(marg, pair, joint) < 0.01


def test_criterion_8_publisher_share_ignores_predicate(report):
    structure = pr.negotiate_structure(pr.OFSGP, 4, 2)
    preds = ["(and x0 x1)", "(or (not x2) x3)", "(and (or x0 x3) (not x1))", "1"]
    for m in itertools.product((0, 1), repeat=4):
        shares = set()
        for text in preds:
            pred = parse_sexp(text)
            tape = RandomTape.from_seed(SEED)
            pub = pr.publisher_share(structure, list(m), tape)
            sub = pr.subscriber_share(structure, pred, RandomTape.from_seed(SEED))
            assert len(sub) + len(pub) == structure.total_slots
            shares.add(pub.positions.tobytes() + pub.elems.tobytes())
        assert len(shares) == 1
    report("publisher bytes identical across 4 predicates for all 16 metadata values")


# ----------------------------------------------------------------------- 9

def test_criterion_9_frame_round_trip(report):
    rng = np.random.default_rng(9)
    for _ in range(2000):
        kind = fr.MsgType(int(rng.integers(1, 8)))
        f = fr.Frame(kind, rng.bytes(16), rng.bytes(int(rng.integers(0, 300))),
                     continued=kind == fr.MsgType.SHARE and bool(rng.integers(2)))
        assert fr.decode_frame(fr.encode_frame(f)) == f
    report("2000 random frames round-trip")


def test_criterion_9_loopback_sessions(broker, report):
    rng = np.random.default_rng(10)
    matches = 0
    with ThreadPoolExecutor(2) as pool:
        for i in range(100):
            variant = (pr.OFSGP, pr.FSGP)[i % 2]
            n = (2, 4)[(i // 2) % 2]
            pred = random_circuit(rng, n, int(rng.integers(0, 3)))
            m = rng.integers(0, 2, n).tolist()
            seed, sid = rng.bytes(32), os.urandom(16)
            body = f"payload {i}".encode()
            pub = pool.submit(publish, broker.endpoint, m, body, RandomTape.from_seed(seed), sid, 30)
            sub = pool.submit(subscribe, broker.endpoint, pred, RandomTape.from_seed(seed), sid,
                              variant, pred.depth, 30)
            got_pub, got_sub = pub.result(), sub.result()
            local = pr.run_session(variant, n, pred, m, seed)
            assert got_pub == got_sub.result == local
            assert got_sub.payload == (body if local.matched else None)
            matches += local.matched
    assert broker.broker.forwarded == matches
    report(f"100 sessions agree ({matches} matches); PAYLOAD frames sent = {broker.broker.forwarded}")
    assert 0 < matches < 100
