"""Monomial catalogue: frozen index arithmetic, masks, weight evaluation."""

import numpy as np
import pytest

from drportfolio.encoding import (
    MultiIndex,
    build_encoding,
    flat_index,
    monomial_vector,
    predictability_mask,
    strategy_weights,
    unflatten,
)
from drportfolio.errors import HistoryTooShort


def test_dimensions_frozen():
    assert build_encoding(1, 1, 1).dim == 2
    assert build_encoding(1, 2, 1).dim == 2 + 4
    assert build_encoding(2, 2, 1).dim == 4 + 16
    assert build_encoding(2, 2, 2).dim == 4 + 16 + 64
    assert build_encoding(3, 2, 2).dim == 6 + 36 + 216
    assert build_encoding(10, 2, 1).dim == 20 + 400


def test_build_encoding_validation():
    with pytest.raises(ValueError):
        build_encoding(0, 2, 1)
    with pytest.raises(ValueError):
        build_encoding(2, 0, 1)
    with pytest.raises(ValueError):
        build_encoding(2, 2, 3)


def test_flat_index_frozen_values():
    enc = build_encoding(2, 2, 2)
    # degree 3, all legs at 1 -> first slot of the cubic block
    all_ones = MultiIndex(3, 1, 1, first_asset=1, first_period=1,
                          second_asset=1, second_period=1)
    assert flat_index(enc, all_ones) == 1
    # bumping the fastest leg (second_asset) moves one slot
    assert flat_index(enc, MultiIndex(3, 1, 1, 1, 1, 2, 1)) == 2
    # bumping the slowest leg (target_period) jumps n^3 T^2 = 32 slots
    assert flat_index(enc, MultiIndex(3, 1, 2, 1, 1, 1, 1)) == 33

    enc12 = build_encoding(1, 2, 1)
    assert flat_index(enc12, MultiIndex(2, 1, 2, first_asset=1, first_period=1)) == 3
    assert flat_index(enc12, MultiIndex(1, 1, 2)) == 2
    enc22 = build_encoding(2, 2, 1)
    assert flat_index(enc22, MultiIndex(1, 1, 2)) == 3


def test_flat_index_unflatten_bijection():
    enc = build_encoding(2, 3, 2)
    for degree in (1, 2, 3):
        seen = set()
        for pos in range(1, enc.block_size(degree) + 1):
            idx = unflatten(enc, degree, pos)
            assert flat_index(enc, idx) == pos
            seen.add(pos)
        assert len(seen) == enc.block_size(degree)


def test_unflatten_range_checks():
    enc = build_encoding(2, 2, 1)
    with pytest.raises(ValueError):
        unflatten(enc, 2, 0)
    with pytest.raises(ValueError):
        unflatten(enc, 2, enc.quad_size + 1)
    with pytest.raises(ValueError):
        unflatten(enc, 3, 1)  # cubic block absent at order 1


def test_monomial_vector_frozen_example():
    enc = build_encoding(1, 2, 1)
    m = monomial_vector(enc, [0.1, 0.2])
    np.testing.assert_allclose(m, [0.1, 0.2, 0.01, 0.02, 0.02, 0.04], atol=1e-15)


def test_monomial_vector_matches_index_products():
    # every slot equals the product of the path entries its index names
    rng = np.random.default_rng(7)
    enc = build_encoding(2, 2, 2)
    path = rng.normal(size=(2, 2))
    m = monomial_vector(enc, path)

    def entry(idx):
        val = path[idx.target_period - 1, idx.target_asset - 1]
        if idx.degree >= 2:
            val *= path[idx.first_period - 1, idx.first_asset - 1]
        if idx.degree == 3:
            val *= path[idx.second_period - 1, idx.second_asset - 1]
        return val

    for degree in (1, 2, 3):
        off = enc.block_offset(degree)
        for pos in range(1, enc.block_size(degree) + 1):
            idx = unflatten(enc, degree, pos)
            assert m[off + pos - 1] == pytest.approx(entry(idx), abs=1e-15)


def test_predictability_mask_frozen_small():
    enc = build_encoding(1, 2, 1)
    mask = predictability_mask(enc)
    # linear block free; only the (first_period=1, target_period=2) quad slot open
    assert mask.tolist() == [False, False, True, True, False, True]


def test_predictability_mask_counts():
    for n, T, order in [(2, 3, 1), (3, 2, 2), (2, 4, 2)]:
        enc = build_encoding(n, T, order)
        mask = predictability_mask(enc)
        assert mask.shape == (enc.dim,)
        assert not mask[: enc.linear_size].any()
        open_quad = n * n * sum(t - 1 for t in range(1, T + 1))
        assert (~mask[enc.linear_size : enc.linear_size + enc.quad_size]).sum() == open_quad
        if order == 2:
            open_cubic = n**3 * sum((t - 1) ** 2 for t in range(1, T + 1))
            assert (~mask[enc.linear_size + enc.quad_size :]).sum() == open_cubic


def test_mask_positions_match_index_rule():
    enc = build_encoding(2, 3, 2)
    mask = predictability_mask(enc)
    for degree in (2, 3):
        off = enc.block_offset(degree)
        for pos in range(1, enc.block_size(degree) + 1):
            idx = unflatten(enc, degree, pos)
            expected = idx.first_period >= idx.target_period
            if degree == 3:
                expected = expected or idx.second_period >= idx.target_period
            assert mask[off + pos - 1] == expected


def test_strategy_weights_frozen_example():
    enc = build_encoding(1, 2, 1)
    coeffs = np.zeros(enc.dim)
    coeffs[flat_index(enc, MultiIndex(1, 1, 2)) - 1] = 0.5
    quad_pos = flat_index(enc, MultiIndex(2, 1, 2, first_asset=1, first_period=1))
    coeffs[enc.linear_size + quad_pos - 1] = 2.0
    w = strategy_weights(enc, coeffs, [[0.1]], 2)
    np.testing.assert_allclose(w, [0.7], atol=1e-15)


def test_strategy_weights_history_too_short():
    enc = build_encoding(2, 3, 1)
    with pytest.raises(HistoryTooShort):
        strategy_weights(enc, np.zeros(enc.dim), np.zeros((1, 2)), 3)


def _random_masked_coeffs(rng, enc):
    coeffs = rng.normal(size=enc.dim)
    coeffs[predictability_mask(enc)] = 0.0
    return coeffs


def test_linearity_identity():
    # masked coefficients: total inner product == sum of per-period
    # weight . return, for both encoding orders
    rng = np.random.default_rng(11)
    for n, T, order in [(2, 3, 1), (3, 2, 2), (1, 4, 1), (2, 2, 2)]:
        enc = build_encoding(n, T, order)
        for _ in range(20):
            coeffs = _random_masked_coeffs(rng, enc)
            path = rng.normal(scale=0.3, size=(T, n))
            total = coeffs @ monomial_vector(enc, path)
            by_period = sum(
                strategy_weights(enc, coeffs, path[: t - 1], t) @ path[t - 1]
                for t in range(1, T + 1)
            )
            assert total == pytest.approx(by_period, abs=1e-12)


def test_adaptedness_under_future_perturbation():
    # weights of period t ignore returns at periods >= t, exactly
    rng = np.random.default_rng(13)
    enc = build_encoding(2, 4, 2)
    for _ in range(25):
        coeffs = _random_masked_coeffs(rng, enc)
        path = rng.normal(scale=0.3, size=(4, 2))
        for t in range(1, 5):
            tampered = path.copy()
            tampered[t - 1 :] = rng.normal(scale=5.0, size=(4 - t + 1, 2))
            w0 = strategy_weights(enc, coeffs, path, t)
            w1 = strategy_weights(enc, coeffs, tampered, t)
            np.testing.assert_array_equal(w0, w1)


def test_unmasked_coeffs_still_adapted():
    # the evaluator zero-pads future slots, so adaptedness holds even for
    # coefficient vectors that violate the mask
    rng = np.random.default_rng(17)
    enc = build_encoding(2, 3, 1)
    coeffs = rng.normal(size=enc.dim)
    path = rng.normal(scale=0.3, size=(3, 2))
    tampered = path.copy()
    tampered[1:] = 9.9
    np.testing.assert_array_equal(
        strategy_weights(enc, coeffs, path, 2),
        strategy_weights(enc, coeffs, tampered, 2),
    )
