"""Overlap, Laplace and three-function (Gamma) integrals in the angular Gaussian basis.

Gamma factorises into a real Gaunt coefficient times a radial integral that
depends only on the three l values and exponents, so it is stored as one
dense radial tensor per ordered l-triple plus the list of allowed (l, m)
block triples. Nothing of size N_b^3 is ever materialised.
"""

from __future__ import annotations

import hashlib
import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from ringscft.angular import RealGauntTable, build_real_gaunt_table
from ringscft.basis import BasisSet, basis_at_origin, log_norm

LAPLACE_ASYMMETRY_TOL = 1e-10


def _block_pairs(basis: BasisSet):
    for b in basis.blocks:
        yield b, basis.c[b.slice], basis.log_n[b.slice]


def assemble_overlap(basis: BasisSet) -> np.ndarray:
    """S_ij; non-zero only inside (l, m) blocks, unit diagonal."""
    S = np.zeros((basis.size, basis.size))
    for b, c, ln in _block_pairs(basis):
        k = b.l + 1.5
        cs = c[:, None] + c[None, :]
        S[b.slice, b.slice] = np.exp(ln[:, None] + ln[None, :] + gammaln(k) - math.log(2.0) - k * np.log(cs))
        np.fill_diagonal(S[b.slice, b.slice], 1.0)
    return S


def assemble_laplace(basis: BasisSet, S: np.ndarray | None = None) -> np.ndarray:
    """L_ij = integral of f_j lap f_i.

    Closed form: 2 c_i / (c_i + c_j) [c_i (l - l') - c_j (2l + 3)] S_ji.
    The result is checked for symmetry and then averaged with its transpose.
    """
    if S is None:
        S = assemble_overlap(basis)
    L = np.zeros_like(S)
    for b, c, _ in _block_pairs(basis):
        ci, cj = c[:, None], c[None, :]
        l = lp = b.l
        blk = S[b.slice, b.slice]
        L[b.slice, b.slice] = 2.0 * ci / (ci + cj) * (ci * (l - lp) - cj * (2 * l + 3)) * blk.T
    d = np.sqrt(np.abs(np.diag(L)))
    rel = np.abs(L - L.T) / np.outer(d, d)
    if rel.size and rel.max() > LAPLACE_ASYMMETRY_TOL:
        raise ArithmeticError(f"Laplace matrix asymmetry {rel.max():.3e} exceeds tolerance")
    return 0.5 * (L + L.T)


def radial_gamma(basis: BasisSet, la: int, lb: int, lc: int) -> np.ndarray:
    """Radial factor N N' N'' Gamma((L+3)/2) / (2 (c+c'+c'')^((L+3)/2)), L = la+lb+lc."""
    ca, cb, cc = (basis.channel_exponents[l] for l in (la, lb, lc))
    na, nb, nc = (log_norm(l, basis.channel_exponents[l]) for l in (la, lb, lc))
    k = 0.5 * (la + lb + lc + 3)
    csum = ca[:, None, None] + cb[None, :, None] + cc[None, None, :]
    logv = na[:, None, None] + nb[None, :, None] + nc[None, None, :] + gammaln(k) - math.log(2.0) - k * np.log(csum)
    return np.exp(logv)


class GammaTensor:
    """Sparse, totally symmetric Gamma_ijk = alpha(lm, l'm', l''m'') R_{pp'p''}^{ll'l''}."""

    def __init__(self, basis: BasisSet, gaunt_table: RealGauntTable):
        if gaunt_table.l_max < basis.l_max:
            raise ValueError("Gaunt table does not cover the basis l_max")
        self.basis = basis
        self.blocks = basis.blocks
        lms = [(b.l, b.m) for b in self.blocks]
        self.triples = gaunt_table.ordered_triples(lms)
        l_of = [b.l for b in self.blocks]
        self.radial = {}
        for a, b, c, _ in self.triples:
            key = (l_of[a], l_of[b], l_of[c])
            if key not in self.radial:
                self.radial[key] = radial_gamma(basis, *key)
        # grouping for the two contractions
        by_ab = defaultdict(list)
        by_a = defaultdict(list)
        for a, b, c, alpha in self.triples:
            by_ab[(a, b, l_of[c])].append((c, alpha))
            by_a[(a, l_of[b], l_of[c])].append((b, c, alpha))
        self._by_ab = dict(by_ab)
        self._by_a = dict(by_a)
        self._l_of = l_of

    @property
    def size(self) -> int:
        return self.basis.size

    @property
    def nnz(self) -> int:
        """Number of stored (ordered) non-zero index triples."""
        sizes = [b.size for b in self.blocks]
        return sum(sizes[a] * sizes[b] * sizes[c] for a, b, c, _ in self.triples)

    def contract_field(self, w: np.ndarray) -> np.ndarray:
        """M_ij = sum_k w_k Gamma_ijk."""
        w = np.asarray(w, dtype=float)
        if w.shape != (self.size,):
            raise ValueError(f"field has shape {w.shape}, expected ({self.size},)")
        M = np.zeros((self.size, self.size))
        blocks, l_of = self.blocks, self._l_of
        for (a, b, lc), terms in self._by_ab.items():
            vec = sum(alpha * w[blocks[c].slice] for c, alpha in terms)
            R = self.radial[(l_of[a], l_of[b], lc)]
            M[blocks[a].slice, blocks[b].slice] += R @ vec
        return M

    def contract_matrix(self, q: np.ndarray) -> np.ndarray:
        """(Gamma q)_i = sum_jk Gamma_ijk q_jk."""
        q = np.asarray(q, dtype=float)
        out = np.zeros(self.size)
        blocks, l_of = self.blocks, self._l_of
        for (a, lb, lc), terms in self._by_a.items():
            mat = sum(alpha * q[blocks[b].slice, blocks[c].slice] for b, c, alpha in terms)
            R = self.radial[(l_of[a], lb, lc)]
            out[blocks[a].slice] += np.tensordot(R, mat, axes=([1, 2], [0, 1]))
        return out

    def to_dense(self) -> np.ndarray:
        """Full N_b^3 array; only sensible for small test bases."""
        G = np.zeros((self.size,) * 3)
        blocks, l_of = self.blocks, self._l_of
        for a, b, c, alpha in self.triples:
            R = self.radial[(l_of[a], l_of[b], l_of[c])]
            G[blocks[a].slice, blocks[b].slice, blocks[c].slice] = alpha * R
        return G

    def entry(self, i: int, j: int, k: int) -> float:
        lm = [(int(self.basis.l[x]), int(self.basis.m[x])) for x in (i, j, k)]
        bl = {(b.l, b.m): n for n, b in enumerate(self.blocks)}
        a, b, c = (bl[x] for x in lm)
        for ta, tb, tc, alpha in self.triples:
            if (ta, tb, tc) == (a, b, c):
                R = self.radial[(lm[0][0], lm[1][0], lm[2][0])]
                pi, pj, pk = (i - self.blocks[a].start, j - self.blocks[b].start, k - self.blocks[c].start)
                return alpha * R[pi, pj, pk]
        return 0.0

    def canonical_entries(self):
        """Arrays (i, j, k, value) over stored entries with i <= j <= k."""
        ii, jj, kk, vv = [], [], [], []
        blocks, l_of = self.blocks, self._l_of
        for a, b, c, alpha in self.triples:
            if not (a <= b <= c):
                continue
            R = alpha * self.radial[(l_of[a], l_of[b], l_of[c])]
            ia = np.arange(blocks[a].start, blocks[a].stop)
            ib = np.arange(blocks[b].start, blocks[b].stop)
            ic = np.arange(blocks[c].start, blocks[c].stop)
            I, J, K = np.meshgrid(ia, ib, ic, indexing="ij")
            mask = (I <= J) & (J <= K)
            ii.append(I[mask])
            jj.append(J[mask])
            kk.append(K[mask])
            vv.append(R[mask])
        if not vv:
            e = np.zeros(0, dtype=int)
            return e, e, e, np.zeros(0)
        return np.concatenate(ii), np.concatenate(jj), np.concatenate(kk), np.concatenate(vv)


def assemble_gamma(basis: BasisSet, gaunt_table: RealGauntTable | None = None) -> GammaTensor:
    if gaunt_table is None:
        gaunt_table = build_real_gaunt_table(basis.l_max)
    return GammaTensor(basis, gaunt_table)


def contract_field(w: np.ndarray, gamma: GammaTensor) -> np.ndarray:
    return gamma.contract_field(w)


@dataclass(frozen=True, eq=False)
class TensorSet:
    basis: BasisSet
    S: np.ndarray
    L: np.ndarray
    gamma: GammaTensor
    f0: np.ndarray

    @property
    def size(self) -> int:
        return self.basis.size


def assemble_tensors(basis: BasisSet, gaunt_table: RealGauntTable | None = None) -> TensorSet:
    S = assemble_overlap(basis)
    L = assemble_laplace(basis, S)
    return TensorSet(basis=basis, S=S, L=L, gamma=assemble_gamma(basis, gaunt_table), f0=basis_at_origin(basis))


# ---------------------------------------------------------------------------
# Gamma cache file
#
# layout (little-endian): 8-byte tag b"RSGAMMA1", 32-byte sha256 of the basis
# fingerprint, uint64 entry count, then packed records (uint32 i, j, k,
# float64 value) for the canonical i <= j <= k entries.

CACHE_TAG = b"RSGAMMA1"
_RECORD = np.dtype([("i", "<u4"), ("j", "<u4"), ("k", "<u4"), ("value", "<f8")])


def basis_hash(basis: BasisSet) -> bytes:
    return hashlib.sha256(basis.fingerprint().encode()).digest()


def save_gamma_cache(gamma: GammaTensor, path) -> int:
    i, j, k, v = gamma.canonical_entries()
    rec = np.empty(len(v), dtype=_RECORD)
    rec["i"], rec["j"], rec["k"], rec["value"] = i, j, k, v
    with open(path, "wb") as fh:
        fh.write(CACHE_TAG)
        fh.write(basis_hash(gamma.basis))
        fh.write(np.uint64(len(v)).astype("<u8").tobytes())
        fh.write(rec.tobytes())
    return len(v)


def load_gamma_cache(path, basis: BasisSet | None = None):
    """Read a cache file; returns (i, j, k, value) arrays.

    Raises ValueError on a bad tag, truncated payload, or (when ``basis`` is
    given) a basis hash mismatch.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != CACHE_TAG:
        raise ValueError("not a Gamma cache file")
    digest = raw[8:40]
    if basis is not None and digest != basis_hash(basis):
        raise ValueError("Gamma cache was written for a different basis")
    count = int(np.frombuffer(raw[40:48], dtype="<u8")[0])
    body = raw[48:]
    if len(body) != count * _RECORD.itemsize:
        raise ValueError("Gamma cache is truncated or corrupt")
    rec = np.frombuffer(body, dtype=_RECORD)
    return rec["i"].astype(int), rec["j"].astype(int), rec["k"].astype(int), rec["value"].copy()
