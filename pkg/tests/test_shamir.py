import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from ordervote.field import PrimeField
from ordervote.shamir import (DuplicateIndex, InsufficientShares,
                              InvalidThreshold, MixedIndices, Polynomial,
                              Share, degree_at_most, interpolate_full,
                              local_lincomb, reconstruct, reconstruct_batch,
                              share, share_batch, share_polynomial)


def test_known_polynomial_shares(f31):
    # g(x) = 5 + 4x at x = 1, 2, 3
    vec = share_polynomial(f31, Polynomial((5, 4)), 3)
    assert vec.shares == (9, 13, 17)
    assert vec.threshold == 2
    assert reconstruct(f31, [(1, 9), (2, 13)], 2) == 5


def test_threshold_one_gives_constant_shares(f31):
    rng = np.random.default_rng(0)
    vec = share(f31, 17, 1, 5, rng)
    assert vec.shares == (17,) * 5


def test_round_trip_every_subset(f31):
    rng = np.random.default_rng(1)
    for parties in range(1, 10):
        for threshold in range(1, parties + 1):
            secret = int(rng.integers(0, 31))
            vec = share(f31, secret, threshold, parties, rng)
            for subset in itertools.combinations(vec.points(), threshold):
                assert reconstruct(f31, list(subset), threshold) == secret


def test_reconstruct_errors(f31):
    with pytest.raises(InsufficientShares):
        reconstruct(f31, [(1, 9)], 2)
    with pytest.raises(DuplicateIndex):
        reconstruct(f31, [(1, 9), (1, 13)], 2)
    with pytest.raises(InvalidThreshold):
        share(f31, 5, 4, 3, np.random.default_rng(0))
    with pytest.raises(InvalidThreshold):
        share(f31, 5, 2, 31, np.random.default_rng(0))  # D >= p


def test_interpolate_full_degrees(f31):
    assert interpolate_full(f31, [(1, 1), (2, 2), (3, 4)]).degree == 2
    assert interpolate_full(f31, [(1, 5), (2, 5), (3, 5)]).degree == 0
    assert interpolate_full(f31, [(1, 0), (2, 0), (3, 0)]).degree == -1  # zero poly
    line = share_polynomial(f31, Polynomial((7, 3)), 3)
    poly = interpolate_full(f31, line.points())
    assert poly.degree == 1
    assert poly.coefficients[:2] == (7, 3)
    with pytest.raises(DuplicateIndex):
        interpolate_full(f31, [(1, 1), (1, 2)])


def test_interpolate_recovers_generator(f31):
    rng = np.random.default_rng(2)
    for _ in range(50):
        coeffs = tuple(int(v) for v in rng.integers(0, 31, size=4))
        poly = Polynomial(coeffs)
        pts = [(x, poly.evaluate(f31, x)) for x in range(1, 8)]
        got = interpolate_full(f31, pts)
        assert got.degree == poly.degree
        for x in range(1, 8):
            assert got.evaluate(f31, x) == poly.evaluate(f31, x)


def test_share_batch_matches_scalar_reconstruct(f31):
    rng = np.random.default_rng(3)
    secrets = rng.integers(0, 31, size=64, dtype=np.uint64)
    matrix = share_batch(f31, secrets, 3, 5, rng)
    assert matrix.shape == (5, 64)
    got = reconstruct_batch(f31, [1, 2, 3], matrix[:3])
    assert np.array_equal(got, secrets)
    # any 3-subset agrees
    rows = [4, 2, 0]
    got = reconstruct_batch(f31, [5, 3, 1], matrix[rows])
    assert np.array_equal(got, secrets)


def test_degree_at_most_flags_high_degree(f31):
    rng = np.random.default_rng(4)
    honest = share_batch(f31, np.arange(10, dtype=np.uint64), 2, 5, rng)
    assert degree_at_most(f31, honest, 2).all()
    tampered = honest.copy()
    tampered[4, 3] = (tampered[4, 3] + 1) % 31
    flags = degree_at_most(f31, tampered, 2)
    assert not flags[3] and flags[[0, 1, 2, 4, 5, 6, 7, 8, 9]].all()
    # degree exactly D'(=2) polynomials must be rejected
    bad = share_batch(f31, np.arange(10, dtype=np.uint64), 3, 5, rng)
    keep = ~degree_at_most(f31, bad, 2)
    assert keep.sum() >= 8  # a random quadratic is almost never a line


def test_secrecy_single_share_uniform(f31):
    # For a fixed secret, any D'-1 = 1 share is uniform over Z_31.
    rng = np.random.default_rng(5)
    samples = share_batch(f31, np.full(31 * 400, 12, dtype=np.uint64), 2, 3, rng)[0]
    counts = np.bincount(samples.astype(int), minlength=31)
    assert stats.chisquare(counts).pvalue > 1e-4


def test_secrecy_joint_pair_uniform(f31):
    # D' = 3: two shares jointly uniform over Z_31^2 (chi-squared on 961 cells).
    rng = np.random.default_rng(6)
    n = 961 * 40
    mat = share_batch(f31, np.full(n, 7, dtype=np.uint64), 3, 5, rng)
    cells = mat[0].astype(int) * 31 + mat[1].astype(int)
    counts = np.bincount(cells, minlength=961)
    assert stats.chisquare(counts).pvalue > 1e-4


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 30), st.integers(0, 30), st.integers(0, 30), st.integers(0, 30),
       st.integers(0, 30))
def test_lincomb_commutes_with_reconstruct(a, b, u, v, offset):
    f = PrimeField(31)
    rng = np.random.default_rng(a * 31 + b)
    vec_u = share(f, u, 2, 3, rng)
    vec_v = share(f, v, 2, 3, rng)
    combined = [local_lincomb(f, [a, b], [vec_u.share_for(d), vec_v.share_for(d)],
                              offset) for d in range(1, 4)]
    got = reconstruct(f, [(s.index, s.value) for s in combined], 2)
    assert got == (a * u + b * v + offset) % 31


def test_lincomb_mixed_indices(f31):
    with pytest.raises(MixedIndices):
        local_lincomb(f31, [1, 1], [Share(1, 5), Share(2, 6)])


def test_lincomb_offset_embeds_public_shift(f31):
    # adding a public N to every share shifts the secret by N
    rng = np.random.default_rng(7)
    vec = share(f31, 9, 2, 3, rng)
    shifted = [local_lincomb(f31, [1], [vec.share_for(d)], offset=10)
               for d in range(1, 4)]
    got = reconstruct(f31, [(s.index, s.value) for s in shifted], 2)
    assert got == 19
