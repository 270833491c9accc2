import math
from fractions import Fraction

import numpy as np
import pytest

from chaoskit import hermite
from chaoskit.hermite import GaussianSample, basis_matrix, hep_alpha, hermite_h, xi_alpha
from chaoskit.multiindex import MultiIndex, UnsupportedIndex, enumerate_box

E = MultiIndex.unit

# probabilists' Hermite polynomials, expanded by hand (lowest power first)
EXPLICIT = {
    0: [1],
    1: [0, 1],
    2: [-1, 0, 1],
    3: [0, -3, 0, 1],
    4: [3, 0, -6, 0, 1],
    5: [0, 15, 0, -10, 0, 1],
    6: [-15, 0, 45, 0, -15, 0, 1],
}


def test_hermite_examples():
    assert hermite_h(2, 1) == 0
    assert hermite_h(0, 123.4) == 1
    assert hermite_h(3, 2) == 2


@pytest.mark.parametrize("n", range(7))
@pytest.mark.parametrize("t", [Fraction(0), Fraction(1, 3), Fraction(-5, 2), Fraction(7)])
def test_recursion_matches_explicit_polynomials_exactly(n, t):
    want = sum(c * t**i for i, c in enumerate(EXPLICIT[n]))
    assert hermite_h(n, t) == want


def test_negative_order_rejected():
    with pytest.raises(ValueError):
        hermite_h(-1, 0.0)


def test_table_matches_scalar_recursion():
    t = np.linspace(-3, 3, 13)
    tab = hermite.hermite_table(6, t)
    for n in range(7):
        assert np.array_equal(tab[n], np.array([hermite_h(n, float(x)) for x in t]))


def test_xi_alpha_examples():
    s = GaussianSample((1.0, 2.0))
    assert xi_alpha(MultiIndex(), s) == 1.0
    assert xi_alpha(E(1, 2), GaussianSample((1.0,))) == 0.0
    assert xi_alpha(E(1) + E(2), s) == 2.0


def test_hep_alpha_examples():
    t = 0.37
    assert hep_alpha(E(1, 2), GaussianSample((t,))) == pytest.approx(t * t - 1, rel=1e-15)
    assert hep_alpha(MultiIndex(), GaussianSample((t,))) == 1.0
    assert hep_alpha(E(1) + E(2), GaussianSample((1.0, 2.0))) == 2.0


def test_hep_is_scaled_xi():
    s = GaussianSample((0.3, -1.2, 2.0))
    for a in enumerate_box(3, 4):
        assert hep_alpha(a, s) == pytest.approx(math.sqrt(math.prod(math.factorial(v) for _, v in a.entries)) * xi_alpha(a, s), rel=1e-13, abs=1e-15)


def test_support_beyond_sample_rejected():
    with pytest.raises(UnsupportedIndex):
        xi_alpha(E(3), GaussianSample((0.1, 0.2)))


def test_sample_rejects_nonfinite():
    with pytest.raises(ValueError):
        GaussianSample((float("nan"),))


def test_basis_matrix_matches_pointwise():
    xs = np.array([[0.5, -1.0], [2.0, 0.25], [-0.3, 1.7]])
    alphas = enumerate_box(2, 3)
    B = basis_matrix(alphas, xs)
    for i, a in enumerate(alphas):
        for j, row in enumerate(xs):
            assert B[i, j] == pytest.approx(xi_alpha(a, GaussianSample(tuple(row))), rel=1e-14, abs=1e-15)


def test_sampling_is_reproducible():
    a = list(hermite.sample(2, 3, seed=42))
    b = list(hermite.sample(2, 3, seed=42))
    assert a == b
    assert all(len(s) == 2 and s.rng_seed == 42 for s in a)
    assert not np.array_equal(hermite.sample_array(2, 3, 42, stream=0), hermite.sample_array(2, 3, 42, stream=1))


def test_chunks_equal_single_draw():
    whole = hermite.sample_array(3, 1000, seed=9)
    parts = np.concatenate(list(hermite.sample_chunks(3, 1000, seed=9, chunk=128)))
    assert np.array_equal(whole, parts)


def test_sample_moments_at_one_million():
    n = 1_000_000
    x = hermite.sample_array(1, n, seed=2024)[:, 0]
    assert abs(x.mean()) < 4 / math.sqrt(n)
    assert abs(x.var() - 1) < 0.01


def test_generator_id_names_bit_generator():
    assert "PCG64" in hermite.GENERATOR_ID and np.__version__ in hermite.GENERATOR_ID
