import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssle.masking import (
    Mask, MaskingModule, apply_dm, compose_estimate, masking_forward, oracle_dm, oracle_erm,
    oracle_estimate,
)
from ssle.nn import grad_check
from ssle.tensor import Tensor, track_kinks


def positive(rng, shape=(6, 5)):
    return rng.uniform(0.01, 3.0, shape)


# --- oracle masks ------------------------------------------------------------

def test_dm_ones_when_mixture_is_dry_sum():
    rng = np.random.default_rng(0)
    S, I = positive(rng), positive(rng)
    np.testing.assert_allclose(oracle_dm(S, I, S + I).values, 1.0, rtol=1e-15)


def test_dm_half_when_no_interference():
    S = positive(np.random.default_rng(1))
    np.testing.assert_allclose(oracle_dm(S, np.zeros_like(S), 2 * S).values, 0.5, rtol=1e-15)


def test_dm_matches_elementwise_loop():
    rng = np.random.default_rng(2)
    S, I, Y = positive(rng), positive(rng), positive(rng)
    dm = oracle_dm(S, I, Y).values
    for idx in np.ndindex(S.shape):
        assert dm[idx] == pytest.approx((S[idx] + I[idx]) / max(Y[idx], 1e-7), rel=1e-12)


def test_dm_floors_denominator():
    dm = oracle_dm(np.ones((1, 2)), np.zeros((1, 2)), np.zeros((1, 2))).values
    np.testing.assert_array_equal(dm, 1e7)


def test_apply_dm_cases():
    rng = np.random.default_rng(3)
    S, I, Y = positive(rng), positive(rng), positive(rng)
    np.testing.assert_array_equal(apply_dm(Y, np.ones_like(Y)), Y)
    np.testing.assert_array_equal(apply_dm(Y, np.zeros_like(Y)), 0.0)
    np.testing.assert_allclose(apply_dm(Y, oracle_dm(S, I, Y)), S + I, rtol=1e-9)


def test_erm_cases():
    rng = np.random.default_rng(4)
    S, Yd = positive(rng), positive(rng)
    np.testing.assert_allclose(oracle_erm(S, S).values, 1.0, rtol=1e-15)
    np.testing.assert_array_equal(oracle_erm(np.zeros_like(S), Yd).values, 0.0)
    erm = oracle_erm(S, Yd).values
    for idx in np.ndindex(S.shape):
        assert erm[idx] == pytest.approx(abs(S[idx]) / abs(Yd[idx]), rel=1e-12)


def test_compose_cases():
    rng = np.random.default_rng(5)
    Y = positive(rng)
    ones = np.ones_like(Y)
    np.testing.assert_array_equal(compose_estimate(Y, ones, ones), Y)
    np.testing.assert_array_equal(compose_estimate(Y, ones, np.zeros_like(Y)), 0.0)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), rows=st.integers(1, 8), cols=st.integers(1, 8))
def test_oracle_composition_recovers_speech(seed, rows, cols):
    rng = np.random.default_rng(seed)
    S, I = positive(rng, (rows, cols)), positive(rng, (rows, cols))
    est = oracle_estimate(S, I, S + I)
    assert np.max(np.abs(est - S) / S) < 1e-9


def test_oracle_composition_reverberant_mixture():
    # with Y != S + I the chain still cancels to |S| (erm * dm * Y = |S| / |S+I| * (S+I))
    rng = np.random.default_rng(6)
    S, I, Y = positive(rng), positive(rng), positive(rng) + 1.0
    np.testing.assert_allclose(oracle_estimate(S, I, Y), S, rtol=1e-9)


@pytest.mark.parametrize("c", [1e-3, 0.5, 7.0, 1e4])
def test_masks_scale_invariant(c):
    rng = np.random.default_rng(7)
    S, I, Y = positive(rng), positive(rng), positive(rng)
    dm = oracle_dm(S, I, Y).values
    np.testing.assert_allclose(oracle_dm(c * S, c * I, c * Y).values, dm, rtol=1e-12)
    Yd = apply_dm(Y, dm)
    np.testing.assert_allclose(oracle_erm(c * S, c * Yd).values, oracle_erm(S, Yd).values, rtol=1e-12)


@pytest.mark.parametrize("fn", [
    lambda a, b: oracle_dm(a, a, b),
    lambda a, b: apply_dm(a, b),
    lambda a, b: oracle_erm(a, b),
    lambda a, b: compose_estimate(a, a, b),
])
def test_shape_mismatch(fn):
    with pytest.raises(ValueError, match="shape"):
        fn(np.ones((2, 3)), np.ones((3, 2)))


def test_mask_type_invariants():
    with pytest.raises(ValueError):
        Mask(np.array([-0.1]), "dm")
    with pytest.raises(ValueError):
        Mask(np.array([0.1]), "irm")


# --- learned module ----------------------------------------------------------

def test_zero_heads_trace_residual():
    mod = MaskingModule(dim=8, rng=np.random.default_rng(0))
    for p in mod.parameters():
        if p is not mod.prelu.alpha:
            p.data = np.zeros_like(p.data)
    Y = np.random.default_rng(1).standard_normal((2, 8, 5))
    s_hat, dm, erm = mod(Tensor(Y))
    np.testing.assert_array_equal(dm.data, 0.0)
    np.testing.assert_array_equal(s_hat.data, np.where(Y > 0, Y, 0.25 * Y))


def test_masks_nonnegative_and_deterministic():
    mod = MaskingModule(dim=64, rng=np.random.default_rng(2))
    Y = Tensor(np.random.default_rng(3).standard_normal((1, 64, 9)))
    a = masking_forward(Y, mod)
    b = masking_forward(Y, mod)
    for x, y in zip(a, b):
        assert x.data.tobytes() == y.data.tobytes()
    assert np.all(a[1].data >= 0) and np.all(a[2].data >= 0)
    assert a[0].shape == (1, 64, 9)


def test_structure():
    mod = MaskingModule(dim=64, rng=np.random.default_rng(0))
    assert mod.dm_head.channels == [64, 64, 64]
    assert mod.erm_head.channels == [64, 64, 64]
    assert all(layer.kernel == 7 for layer in mod.dm_head.layers + mod.erm_head.layers)
    names = [n for n, _ in mod.named_parameters()]
    assert len(names) == len(set(names)) == 9


def test_rejects_wrong_channels():
    mod = MaskingModule(dim=8, rng=np.random.default_rng(0))
    with pytest.raises(ValueError, match="8 channels"):
        mod(Tensor(np.zeros((1, 7, 3))))


def test_head_gradients():
    rng = np.random.default_rng(9)
    for _ in range(5):
        mod = MaskingModule(dim=3, kernel=3, rng=rng)
        Y = Tensor(rng.standard_normal((1, 3, 4)))
        w = rng.standard_normal((1, 3, 4))
        loss = lambda: (mod(Y)[0] * Tensor(w)).sum()
        with track_kinks() as probe:
            loss()
        if probe[0] < 2e-3:
            continue
        report = grad_check(loss, mod.parameters())
        assert max(report.values()) < 1e-4
