import math

import numpy as np
import pytest

from oracles import gamma_oracle, laplace_fd_oracle, laplace_oracle, norm_const, overlap_oracle
from ringscft.basis import ChannelSpec, build_basis
from ringscft.tensors import (
    CACHE_TAG,
    assemble_gamma,
    assemble_laplace,
    assemble_overlap,
    assemble_tensors,
    load_gamma_cache,
    save_gamma_cache,
)

# 4 s + 1 p (x3) + 1 d (x5) = 12 functions
MIXED = [ChannelSpec(0, 4, 0.3, 8.0), ChannelSpec(1, 1, 0.7, 0.7), ChannelSpec(2, 1, 1.3, 1.3)]


@pytest.fixture(scope="module")
def mixed():
    b = build_basis(MIXED)
    assert b.size == 12
    return assemble_tensors(b)


def _same_block(b, i, j):
    return b.l[i] == b.l[j] and b.m[i] == b.m[j]


def test_overlap_against_quadrature(mixed):
    b = mixed.basis
    for i in range(b.size):
        for j in range(b.size):
            if _same_block(b, i, j):
                ref = overlap_oracle(int(b.l[i]), b.c[i], b.c[j])
                assert mixed.S[i, j] == pytest.approx(ref, rel=1e-8)
            else:
                assert mixed.S[i, j] == 0.0


def test_laplace_against_quadrature(mixed):
    b = mixed.basis
    for i in range(b.size):
        for j in range(b.size):
            if _same_block(b, i, j):
                ref = laplace_oracle(int(b.l[i]), b.c[j], b.c[i])
                assert mixed.L[i, j] == pytest.approx(ref, rel=1e-8)
            else:
                assert mixed.L[i, j] == 0.0


def test_gamma_against_quadrature(mixed):
    b = mixed.basis
    G = mixed.gamma.to_dense()
    for i in range(b.size):
        for j in range(i, b.size):
            for k in range(j, b.size):
                fns = [(int(b.l[x]), int(b.m[x]), b.c[x]) for x in (i, j, k)]
                ref = gamma_oracle(fns)
                if abs(ref) < 1e-12:
                    assert abs(G[i, j, k]) < 1e-12
                else:
                    assert G[i, j, k] == pytest.approx(ref, rel=1e-8)


def test_overlap_worked_values():
    S = assemble_overlap(build_basis([ChannelSpec(0, 2, 1.0, 2.0)]))
    assert S[0, 0] == 1.0 and S[1, 1] == 1.0
    assert S[0, 1] == pytest.approx((2 * math.sqrt(2) / 3) ** 1.5, rel=1e-14)
    assert S[0, 1] == pytest.approx(overlap_oracle(0, 1.0, 2.0), rel=1e-12)


@pytest.mark.parametrize("c", [0.01, 1.0, 37.0])
def test_laplace_diagonal_is_minus_3c(c):
    L = assemble_laplace(build_basis([ChannelSpec(0, 1, c, c)]))
    assert L[0, 0] == pytest.approx(-3 * c, rel=1e-14)
    assert laplace_fd_oracle(0, c, c, h=1e-4 / math.sqrt(c)) == pytest.approx(-3 * c, rel=1e-6)


def test_laplace_symmetric_and_negative_definite(mixed):
    L = mixed.L
    assert np.array_equal(L, L.T)
    assert np.linalg.eigvalsh(L).max() < 0


def test_overlap_positive_definite_unit_diagonal(mixed):
    assert np.all(np.diag(mixed.S) == 1.0)
    assert np.linalg.eigvalsh(mixed.S).min() > 0


def test_gamma_three_identical_s():
    b = build_basis([ChannelSpec(0, 1, 1.0, 1.0)])
    G = assemble_gamma(b).to_dense()
    n = norm_const(0, 1.0)
    expect = n**3 * math.gamma(1.5) / (2 * 3**1.5) / math.sqrt(4 * math.pi)
    assert G[0, 0, 0] == pytest.approx(expect, rel=1e-14)


def test_gamma_total_symmetry_and_selection(mixed):
    G = mixed.gamma.to_dense()
    for perm in [(0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]:
        np.testing.assert_allclose(G, G.transpose(perm), rtol=1e-14, atol=1e-15)
    b = mixed.basis
    # s, p_{+1}, p_{-1}: sine-type parity forbids it
    s, px = 0, int(np.nonzero((b.l == 1) & (b.m == 1))[0][0])
    py = int(np.nonzero((b.l == 1) & (b.m == -1))[0][0])
    assert G[s, px, py] == 0.0
    assert mixed.gamma.entry(s, px, py) == 0.0
    assert mixed.gamma.entry(s, px, px) == G[s, px, px] != 0.0


def test_contractions_match_dense(mixed):
    G = mixed.gamma.to_dense()
    rng = np.random.default_rng(0)
    w = rng.standard_normal(mixed.size)
    M = mixed.gamma.contract_field(w)
    np.testing.assert_allclose(M, np.einsum("ijk,k->ij", G, w), rtol=1e-13, atol=1e-13)
    np.testing.assert_allclose(M, M.T, atol=1e-14)
    q = rng.standard_normal((mixed.size, mixed.size))
    q = q + q.T
    np.testing.assert_allclose(mixed.gamma.contract_matrix(q), np.einsum("ijk,jk->i", G, q), rtol=1e-12, atol=1e-13)
    with pytest.raises(ValueError):
        mixed.gamma.contract_field(np.zeros(3))


def test_origin_values(mixed):
    b = mixed.basis
    assert np.all(mixed.f0[b.l > 0] == 0)
    np.testing.assert_allclose(mixed.f0[b.l == 0], b.norm[b.l == 0] / math.sqrt(4 * math.pi))


def test_gamma_cache_round_trip(mixed, tmp_path):
    path = tmp_path / "gamma.bin"
    count = save_gamma_cache(mixed.gamma, path)
    i, j, k, v = load_gamma_cache(path, mixed.basis)
    assert len(v) == count
    G = mixed.gamma.to_dense()
    np.testing.assert_array_equal(G[i, j, k], v)
    assert np.all((i <= j) & (j <= k))
    # every canonical non-zero is present
    nz = np.argwhere(G != 0)
    assert len({tuple(x) for x in nz if x[0] <= x[1] <= x[2]}) == count


def test_gamma_cache_errors(mixed, tmp_path):
    path = tmp_path / "gamma.bin"
    save_gamma_cache(mixed.gamma, path)
    raw = path.read_bytes()
    other = build_basis([ChannelSpec(0, 3, 0.1, 1.0)])
    with pytest.raises(ValueError, match="different basis"):
        load_gamma_cache(path, other)
    (tmp_path / "bad.bin").write_bytes(b"NOTACACHE" + raw[9:])
    with pytest.raises(ValueError, match="not a Gamma"):
        load_gamma_cache(tmp_path / "bad.bin")
    (tmp_path / "short.bin").write_bytes(raw[:-5])
    with pytest.raises(ValueError, match="truncated"):
        load_gamma_cache(tmp_path / "short.bin")
    assert raw.startswith(CACHE_TAG)
