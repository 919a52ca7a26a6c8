import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gpmatch import s5
from gpmatch.s5 import (
    ALPHA,
    ALPHA_INV,
    BETA,
    BETA_INV,
    ELEMENTS,
    GAMMA,
    IDENTITY,
    RHO_STAR,
    NotConjugate,
    OutOfRange,
    Perm,
    decode,
    encode,
    find_conjugator,
    from_unary_bits,
    inv,
    is_five_cycle,
    mul,
    product_codes,
    seq_value,
    unary_bits,
)

LEX = list(itertools.permutations(range(1, 6)))


def compose(g, h):
    """Oracle: apply h first, then g."""
    return tuple(g[h[i] - 1] for i in range(5))


elements = st.sampled_from(ELEMENTS)


def test_table_matches_first_principles():
    for g in LEX:
        for h in LEX:
            assert mul(Perm(g), Perm(h)).images == compose(g, h)


def test_identity_and_inverse_exhaustive():
    for g in ELEMENTS:
        assert mul(IDENTITY, g) == g == mul(g, IDENTITY)
        assert mul(g, inv(g)) == IDENTITY == mul(inv(g), g)


@given(elements, elements, elements)
def test_associative(a, b, c):
    assert (a * b) * c == a * (b * c)


def test_named_constants():
    assert ALPHA * ALPHA_INV == IDENTITY
    assert ALPHA_INV == Perm((5, 1, 2, 3, 4))
    assert BETA_INV == Perm((5, 4, 1, 3, 2))
    assert inv(IDENTITY) == IDENTITY
    assert mul(mul(ALPHA, BETA), mul(ALPHA_INV, BETA_INV)) == Perm((3, 5, 2, 1, 4))
    assert GAMMA == Perm((3, 5, 2, 1, 4))


def test_five_cycles():
    assert is_five_cycle(Perm((5, 3, 4, 1, 2)))
    assert not is_five_cycle(IDENTITY)
    assert sum(is_five_cycle(g) for g in ELEMENTS) == 24


def test_conjugator_example():
    rho = Perm((1, 3, 4, 2, 5))
    assert inv(rho) * BETA * rho == ALPHA
    assert find_conjugator(ALPHA, ALPHA) == IDENTITY


def test_conjugator_is_lex_smallest_valid():
    cycles = [g for g in ELEMENTS if is_five_cycle(g)]
    for t in cycles[:6]:
        for src in cycles:
            valid = [r for r in ELEMENTS if inv(r) * src * r == t]
            assert len(valid) == 5  # the centralizer of a 5-cycle has order 5
            assert find_conjugator(t, src) == min(valid, key=lambda p: p.images)


def test_conjugator_rejects_other_cycle_types():
    with pytest.raises(NotConjugate):
        find_conjugator(ALPHA, IDENTITY)


def test_rho_star():
    assert RHO_STAR == Perm((1, 5, 4, 3, 2))
    assert inv(RHO_STAR) * ALPHA * RHO_STAR == ALPHA_INV


def test_encoding_is_lex_rank():
    assert encode(IDENTITY) == 0
    assert encode(ALPHA) == LEX.index((2, 3, 4, 5, 1))
    for i, g in enumerate(LEX):
        assert decode(i).images == g
        assert decode(encode(Perm(g))) == Perm(g)
    with pytest.raises(OutOfRange):
        decode(120)


def test_seq_value():
    assert seq_value([]) == IDENTITY
    assert seq_value([ALPHA, ALPHA_INV]) == IDENTITY
    assert seq_value([ALPHA, BETA, ALPHA_INV, BETA_INV]) == Perm((3, 5, 2, 1, 4))


@given(st.lists(elements, max_size=40))
def test_tree_product_matches_left_fold(seq):
    acc = IDENTITY
    for g in seq:
        acc = acc * g
    assert seq_value(seq) == acc


def test_batched_product_axis():
    rng = np.random.default_rng(3)
    codes = rng.integers(0, 120, size=(7, 33), dtype=np.uint8)
    batch = product_codes(codes, axis=1)
    for row, got in zip(codes, batch):
        assert seq_value(row) == decode(got)
    assert (product_codes(codes.T, axis=0) == batch).all()


def test_text_and_byte_forms():
    assert str(ALPHA) == "(2 3 4 5 1)"
    assert Perm.parse("(2 3 4 5 1)") == ALPHA
    assert bytes(ALPHA) == bytes([ALPHA.code])
    assert ALPHA(5) == 1
    with pytest.raises(ValueError):
        Perm((1, 1, 2, 3, 4))
    with pytest.raises(ValueError):
        Perm.parse("(1 2 3)")


def test_powers():
    assert ALPHA**5 == IDENTITY
    assert ALPHA**-1 == ALPHA_INV
    assert ALPHA**0 == IDENTITY


def test_unary_bits():
    bits = "".join(map(str, unary_bits(ALPHA)))
    assert bits == "00010" "00100" "01000" "10000" "00001"
    for g in ELEMENTS:
        assert from_unary_bits(unary_bits(g)) == g
    with pytest.raises(ValueError):
        from_unary_bits([0] * 25)
