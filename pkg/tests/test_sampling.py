import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from duplex_forge.neural import StepLogits, sample_logits, sample_step


def test_top_k_one_is_argmax(rng):
    for _ in range(200):
        z = rng.normal(size=50) * rng.uniform(0.1, 10)
        t = rng.uniform(0.05, 5)
        assert sample_logits(z, t, 1, 1.0, rng) == int(np.argmax(z))


def test_low_temperature_goes_to_argmax(rng):
    z = rng.normal(size=100)
    draws = [sample_logits(z, 1e-4, 40, 1.0, np.random.default_rng(i)) for i in range(50)]
    assert set(draws) == {int(np.argmax(z))}


def test_seeded_draws_repeat():
    z = np.linspace(-1, 1, 30)
    a = [sample_logits(z, 0.9, 40, 1.0, np.random.default_rng(5)) for _ in range(3)]
    assert len(set(a)) == 1


def test_one_uniform_per_draw():
    z = np.zeros(10)
    r1, r2 = np.random.default_rng(0), np.random.default_rng(0)
    sample_logits(z, 1.0, 1, 1.0, r1)  # even the argmax shortcut consumes one
    r2.random()
    assert r1.random() == r2.random()


def test_top_k_restricts_support():
    z = np.array([5.0, 4.0, 3.0, -100.0, 2.0])
    seen = {sample_logits(z, 10.0, 2, 1.0, np.random.default_rng(i)) for i in range(300)}
    assert seen == {0, 1}


def test_top_p_restricts_support():
    z = np.log(np.array([0.5, 0.3, 0.15, 0.05]))
    seen = {sample_logits(z, 1.0, 4, 0.6, np.random.default_rng(i)) for i in range(300)}
    assert seen == {0, 1}


def test_distribution_matches_softmax():
    z = np.log(np.array([0.6, 0.3, 0.1]))
    rng = np.random.default_rng(0)
    counts = np.bincount([sample_logits(z, 1.0, 3, 1.0, rng) for _ in range(20000)], minlength=3) / 20000
    np.testing.assert_allclose(counts, [0.6, 0.3, 0.1], atol=0.015)


def test_argument_checks(rng):
    with pytest.raises(ValueError):
        sample_logits(np.zeros(3), 0.0, 1, 1.0, rng)
    with pytest.raises(ValueError):
        sample_logits(np.zeros(3), 1.0, 0, 1.0, rng)
    with pytest.raises(ValueError):
        sample_logits(np.zeros(3), 1.0, 1, 0.0, rng)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.05, 3.0), st.integers(1, 60), st.floats(0.01, 1.0))
def test_index_in_range(seed, temp, k, p):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=4032) * 3
    assert 0 <= sample_logits(z, temp, k, p, rng) < 4032


def test_sample_step_skips_user_heads():
    heads = [np.full(4032, -1e9) for _ in range(9)]
    for i in range(4):
        heads[i][7] = 0.0   # user heads would say 7
    for i in range(4, 8):
        heads[i][i] = 0.0
    heads[8] = np.zeros(16)
    heads[8][3] = 50.0
    frame, text = sample_step(StepLogits(heads, 4), rng=np.random.default_rng(0))
    assert frame == (4, 5, 6, 7) and text == 3


def test_sample_step_defaults():
    import inspect
    sig = inspect.signature(sample_step)
    assert sig.parameters["temperature"].default == 0.9
    assert sig.parameters["top_k"].default == 40
    assert sig.parameters["top_p"].default == 1.0
