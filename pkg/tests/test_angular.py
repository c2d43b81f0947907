import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import racah_3j, real_ylm, sphere_grid, ylm
from ringscft.angular import (
    build_real_gaunt_table,
    gaunt,
    real_gaunt,
    real_selection_allowed,
    real_unitary_elem,
    wigner3j,
    wigner3j_zero_m,
)
from ringscft.basis import real_sph_harm

INV_SQRT_4PI = 1 / math.sqrt(4 * math.pi)


def _all_3j_args(l_max):
    for l1, l2, l3 in itertools.product(range(l_max + 1), repeat=3):
        for m1 in range(-l1, l1 + 1):
            for m2 in range(-l2, l2 + 1):
                m3 = -m1 - m2
                if abs(m3) <= l3:
                    yield l1, l2, l3, m1, m2, m3


def test_3j_against_racah_up_to_l6():
    worst = 0.0
    for args in _all_3j_args(6):
        worst = max(worst, abs(wigner3j(*args) - racah_3j(*args)))
    assert worst < 1e-12


def test_zero_m_branch_is_the_general_value():
    assert wigner3j_zero_m(2, 2, 2) == wigner3j(2, 2, 2, 0, 0, 0)
    for l1, l2, l3 in itertools.product(range(5), repeat=3):
        assert wigner3j_zero_m(l1, l2, l3) == pytest.approx(racah_3j(l1, l2, l3, 0, 0, 0), abs=1e-14)


def test_3j_selection_rules_exact_zero():
    assert wigner3j(1, 1, 1, 1, 1, 0) == 0.0
    assert wigner3j(1, 1, 3, 0, 0, 0) == 0.0
    assert wigner3j(1, 1, 1, 0, 0, 0) == 0.0
    assert wigner3j_zero_m(2, 1, 2) == 0.0


def test_3j_rejects_bad_arguments():
    with pytest.raises(ValueError):
        wigner3j(1, 1, 1, 2, -2, 0)
    with pytest.raises(ValueError):
        wigner3j(-1, 1, 1, 0, 0, 0)


def test_complex_gaunt_values():
    assert gaunt(0, 0, 0, 0, 0, 0) == pytest.approx(INV_SQRT_4PI, rel=1e-14)
    assert gaunt(1, 1, 2, 1, 1, 0) == 0.0
    t, p, w = sphere_grid(30, 60)
    quad = np.sum(w * ylm(1, 1, t, p) * ylm(1, -1, t, p) * ylm(2, 0, t, p)).real
    assert gaunt(1, 1, 2, 1, -1, 0) == pytest.approx(quad, abs=1e-12)


def test_unitary_elements():
    assert real_unitary_elem(0, 0) == 1
    assert real_unitary_elem(1, 1) == pytest.approx(1 / math.sqrt(2))
    assert real_unitary_elem(-1, -1) == pytest.approx(1j / math.sqrt(2))
    assert real_unitary_elem(2, 1) == 0


@pytest.mark.parametrize("l", [1, 2, 3, 4])
def test_unitary_reproduces_real_harmonics(l):
    rng = np.random.default_rng(l)
    th, ph = np.arccos(rng.uniform(-1, 1, 20)), rng.uniform(0, 2 * np.pi, 20)
    for m in range(-l, l + 1):
        z = sum(real_unitary_elem(m, mp) * ylm(l, mp, th, ph) for mp in range(-l, l + 1))
        np.testing.assert_allclose(z.imag, 0.0, atol=1e-13)
        np.testing.assert_allclose(z.real, real_sph_harm(l, m, th, ph), atol=1e-13)


@pytest.mark.parametrize("l", [1, 2, 3, 4])
def test_unitary_is_unitary(l):
    ms = range(-l, l + 1)
    U = np.array([[real_unitary_elem(m, mp) for mp in ms] for m in ms])
    assert np.abs(U @ U.conj().T - np.eye(2 * l + 1)).max() < 1e-14
    for m in ms:
        for mp in ms:
            assert np.conj(real_unitary_elem(m, mp)) == pytest.approx((-1) ** mp * real_unitary_elem(m, -mp))


def test_real_gaunt_worked_values():
    assert real_gaunt(1, 1, 1, 1, 0, 0) == pytest.approx(INV_SQRT_4PI, rel=1e-14)
    t, p, w = sphere_grid(30, 60)
    quad = np.sum(w * real_ylm(1, 1, t, p) * real_ylm(1, -1, t, p) * real_ylm(2, 2, t, p))
    assert real_gaunt(1, 1, 1, -1, 2, 2) == pytest.approx(quad, abs=1e-12)
    for l1, l2, l3 in itertools.product(range(4), repeat=3):
        assert real_gaunt(l1, 0, l2, 0, l3, 0) == pytest.approx(gaunt(l1, l2, l3, 0, 0, 0), abs=1e-15)


def test_real_gaunt_against_sphere_quadrature_l4():
    t, p, w = sphere_grid(30, 60)
    lms = [(l, m) for l in range(5) for m in range(-l, l + 1)]
    Z = {lm: real_ylm(*lm, t, p) for lm in lms}
    table = build_real_gaunt_table(4)
    worst = 0.0
    for a, b, c in itertools.combinations_with_replacement(lms, 3):
        quad = float(np.sum(w * Z[a] * Z[b] * Z[c]))
        worst = max(worst, abs(table.get(a, b, c) - quad))
        if not real_selection_allowed(*a, *b, *c):
            assert abs(quad) < 1e-12
    assert worst < 1e-10


def test_table_small_cases():
    t0 = build_real_gaunt_table(0)
    assert len(t0) == 1
    assert t0.get((0, 0), (0, 0), (0, 0)) == pytest.approx(INV_SQRT_4PI)
    t2 = build_real_gaunt_table(2)
    for key, val in t2.items():
        assert val == real_gaunt(*key[0], *key[1], *key[2])
    with pytest.raises(ValueError):
        build_real_gaunt_table(-1)


_lm = st.integers(0, 4).flatmap(lambda l: st.tuples(st.just(l), st.integers(-l, l)))


@settings(max_examples=200, deadline=None)
@given(_lm, _lm, _lm)
def test_real_gaunt_permutation_symmetry(a, b, c):
    ref = real_gaunt(*a, *b, *c)
    for x, y, z in itertools.permutations((a, b, c)):
        assert real_gaunt(*x, *y, *z) == pytest.approx(ref, abs=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 6), st.integers(0, 6), st.integers(0, 6), st.integers(-6, 6), st.integers(-6, 6))
def test_3j_selection_property(l1, l2, l3, m1, m2):
    m3 = -m1 - m2
    if abs(m1) > l1 or abs(m2) > l2 or abs(m3) > l3:
        return
    val = wigner3j(l1, l2, l3, m1, m2, m3)
    if not abs(l1 - l2) <= l3 <= l1 + l2:
        assert val == 0.0
    assert val == pytest.approx(racah_3j(l1, l2, l3, m1, m2, m3), abs=1e-12)
