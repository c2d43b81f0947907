"""Spectral solution of the single-pair diffusion equation.

With A = L/2 - (w . Gamma) the propagator obeys dq/ds = S^-1 A q with
q(0) = S^-1. Writing A U = S U diag(D) with U^T S U = I gives
q(s) = U exp(D s) U^T. Everything beta-dependent is carried with the
largest eigenvalue shifted out so that exp(D beta) never overflows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ringscft.basis import BasisSet, eval_basis

DEFAULT_EIG_THRESHOLD = 1e-8
WEIGHT_CUTOFF = 1e-16


class OrthogonalizationError(ArithmeticError):
    pass


@dataclass(frozen=True, eq=False)
class Orthogonalizer:
    """X = V s^-1/2 over the retained eigenvectors of S, so X^T S X = I."""

    X: np.ndarray
    kept: int
    dropped: int
    s_min: float
    s_max: float

    @property
    def pinv(self) -> np.ndarray:
        """S^+ restricted to the retained subspace (X X^T)."""
        return self.X @ self.X.T

    @classmethod
    def from_overlap(cls, S: np.ndarray, threshold: float = DEFAULT_EIG_THRESHOLD) -> "Orthogonalizer":
        S = np.asarray(S, dtype=float)
        s, V = np.linalg.eigh(S)
        s_max = s.max()
        if s_max <= 0:
            raise OrthogonalizationError("overlap matrix has no positive eigenvalues")
        if s.min() < -1e-10 * s_max:
            raise OrthogonalizationError(f"overlap matrix is indefinite (min eigenvalue {s.min():.3e})")
        keep = s > threshold * s_max
        if not keep.any():
            raise OrthogonalizationError("all overlap eigenvalues fall below the threshold")
        X = V[:, keep] / np.sqrt(s[keep])
        return cls(X=X, kept=int(keep.sum()), dropped=int((~keep).sum()), s_min=float(s.min()), s_max=float(s_max))


@dataclass(frozen=True, eq=False)
class PairEig:
    U: np.ndarray
    D: np.ndarray

    @property
    def d_max(self) -> float:
        return float(self.D[-1])


def generalized_eig(A: np.ndarray, S: np.ndarray | None = None, threshold: float = DEFAULT_EIG_THRESHOLD,
                    ortho: Orthogonalizer | None = None) -> PairEig:
    """Solve A U = S U diag(D) by canonical orthogonalisation.

    Eigenvalues are returned in ascending order. Pass a prebuilt
    ``ortho`` to reuse the S decomposition across calls.
    """
    if ortho is None:
        if S is None:
            raise ValueError("either S or ortho is required")
        ortho = Orthogonalizer.from_overlap(S, threshold)
    X = ortho.X
    H = X.T @ A @ X
    H = 0.5 * (H + H.T)
    D, Y = np.linalg.eigh(H)
    return PairEig(U=X @ Y, D=D)


@dataclass(frozen=True)
class PartitionFunction:
    """Q = exp(shift) * scaled, with shift = d_max beta."""

    shift: float
    scaled: float
    weights: np.ndarray

    @property
    def log_q(self) -> float:
        return self.shift + math.log(self.scaled)

    @property
    def value(self) -> float:
        try:
            return math.exp(self.log_q)
        except OverflowError:
            return math.inf


def partition_function(D: np.ndarray | PairEig, beta: float) -> PartitionFunction:
    """Q = Tr exp(D beta) evaluated with the largest eigenvalue factored out."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    if isinstance(D, PairEig):
        D = D.D
    D = np.asarray(D, dtype=float)
    d_max = D.max()
    weights = np.exp((D - d_max) * beta)
    return PartitionFunction(shift=float(d_max * beta), scaled=float(weights.sum()), weights=weights)


def occupations(eig: PairEig, beta: float, n_mu: float, cutoff: float = WEIGHT_CUTOFF):
    """Return (indices, occupation numbers) of eigenpairs carrying weight.

    Occupation i is N_mu exp(d_i beta) / Q; pairs with relative weight
    below ``cutoff`` are dropped.
    """
    pf = partition_function(eig.D, beta)
    keep = np.nonzero(pf.weights >= cutoff)[0]
    return keep, n_mu * pf.weights[keep] / pf.scaled


def density_matrix(eig: PairEig, beta: float, n_mu: float, cutoff: float = WEIGHT_CUTOFF) -> np.ndarray:
    """(N_mu / Q) q(beta), built from rank-1 terms of the retained eigenpairs."""
    keep, occ = occupations(eig, beta, n_mu, cutoff)
    Uk = eig.U[:, keep]
    return (Uk * occ) @ Uk.T


def pair_density(eig: PairEig, beta: float, n_mu: float, gamma, S_pinv: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Density coefficients n = (N_mu/Q) S^-1 Gamma q(beta).

    Returns ``(n, g)`` where g = (N_mu/Q) Gamma q is the vector of projections
    of the density onto the basis functions.
    """
    P = density_matrix(eig, beta, n_mu)
    g = gamma.contract_matrix(P)
    n = S_pinv @ g
    if not (np.all(np.isfinite(n)) and np.all(np.isfinite(g))):
        raise FloatingPointError("non-finite pair density coefficients")
    return n, g


def trace_sq(eig: PairEig, S: np.ndarray, beta: float) -> float:
    """Tr(S q(beta)) / exp(d_max beta); equals the scaled partition function."""
    pf = partition_function(eig.D, beta)
    U = eig.U
    return float(np.einsum("ij,ik,jk,k->", S, U, U, pf.weights))


class DensityEvaluator:
    """Real-space pair density through the factored propagator.

    n(r) = sum_i occ_i phi_i(r)^2 with phi_i = sum_j U_ji f_j(r), which is the
    same quantity as (N/Q) sum_jk q_jk f_j(r) f_k(r).
    """

    def __init__(self, basis: BasisSet, eig: PairEig, beta: float, n_mu: float, cutoff: float = WEIGHT_CUTOFF):
        keep, occ = occupations(eig, beta, n_mu, cutoff)
        self.basis = basis
        self.vectors = eig.U[:, keep]
        self.occ = occ
        self.eigenvalues = eig.D[keep]
        self.beta = beta
        self.n_mu = n_mu

    def orbitals(self, fvals: np.ndarray) -> np.ndarray:
        return fvals @ self.vectors

    def from_basis_values(self, fvals: np.ndarray) -> np.ndarray:
        phi = fvals @ self.vectors
        return (phi * phi) @ self.occ

    def via_propagator(self, fvals: np.ndarray) -> np.ndarray:
        P = (self.vectors * self.occ) @ self.vectors.T
        return np.einsum("...j,jk,...k->...", fvals, P, fvals)

    def __call__(self, r, theta, phi) -> np.ndarray:
        return self.from_basis_values(eval_basis(self.basis, r, theta, phi))


def ks_consistency(basis: BasisSet, eig: PairEig, beta: float, n_mu: float, points) -> float:
    """Max |propagator-route density - occupation-weighted orbital density| at ``points``.

    ``points`` is an (n, 3) array of (r, theta, phi).
    """
    pts = np.asarray(points, dtype=float)
    fvals = eval_basis(basis, pts[:, 0], pts[:, 1], pts[:, 2])
    ev = DensityEvaluator(basis, eig, beta, n_mu, cutoff=0.0)
    a = ev.via_propagator(fvals)
    # orbital route: phi_i(r) = sum_j U_ji f_j(r), all eigenpairs, explicit Boltzmann weights
    pf = partition_function(eig.D, beta)
    phi = fvals @ eig.U
    b = (phi * phi) @ (n_mu * pf.weights / pf.scaled)
    return float(np.max(np.abs(a - b)))
