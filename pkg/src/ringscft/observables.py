"""Energies, entropies, density constraints and sampled densities of a converged state."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ringscft.basis import eval_basis
from ringscft.propagator import WEIGHT_CUTOFF, density_matrix, occupations
from ringscft.quadrature import GridBasis, QuadGrid
from ringscft.scf import ScfResult

TINY = 1e-300
COLUMNS = ("U_en", "U_ee", "U_sic", "U_P", "U", "minus_Sc_over_beta", "minus_St_over_beta", "F", "K")


def _beta(result: ScfResult) -> float:
    return result.config.beta


def potential_components(result: ScfResult) -> dict:
    """Per-pair U_en, U_ee, U_sic, U_P as arrays (pairs in result order)."""
    S, f = result.tensors.S, result.fields
    out = {k: [] for k in ("U_en", "U_ee", "U_sic", "U_P")}
    for mu, p in enumerate(result.pairs):
        Sn = S @ p.n
        out["U_en"].append(Sn @ f.w_en)
        out["U_ee"].append(0.5 * Sn @ f.w_ee)
        out["U_sic"].append(0.5 * Sn @ f.w_sic[mu])
        out["U_P"].append(0.5 * Sn @ f.w_P[mu])
    return {k: np.array(v) for k, v in out.items()}


def pair_free_energies(result: ScfResult) -> np.ndarray:
    """F_mu = -(N_mu/beta) ln Q_mu - 1/2 (S n_mu).(w_P + w_sic + w_ee)."""
    S, f, beta = result.tensors.S, result.fields, _beta(result)
    return np.array([
        -p.n_mu / beta * p.log_q - 0.5 * (S @ p.n) @ (f.w_P[mu] + f.w_sic[mu] + f.w_ee)
        for mu, p in enumerate(result.pairs)
    ])


def free_energy(result: ScfResult) -> float:
    return float(pair_free_energies(result).sum())


def kinetic_energies(result: ScfResult) -> np.ndarray:
    """K_mu = -(N_mu / 2 Q_mu) Tr(L q_mu(beta)) for each pair."""
    L, beta = result.tensors.L, _beta(result)
    out = []
    for p in result.pairs:
        P = density_matrix(p.eig, beta, p.n_mu)
        out.append(-0.5 * float(np.sum(L * P)))
    return np.array(out)


def kinetic_energy(result: ScfResult) -> float:
    return float(kinetic_energies(result).sum())


# ---------------------------------------------------------------------------
# real-space quantities


@dataclass(eq=False)
class PairGridData:
    """One pair sampled on a QuadGrid."""

    density: np.ndarray
    log_q: np.ndarray
    field: np.ndarray
    floored: int
    grad: tuple | None = None


def _pair_on_grid(result: ScfResult, mu: int, gb: GridBasis, with_gradient: bool) -> PairGridData:
    p = result.pairs[mu]
    beta = _beta(result)
    keep, occ = occupations(p.eig, beta, p.n_mu)
    shape = (gb.grid.n_radial, gb.grid.n_angular)
    n = np.zeros(shape)
    grad = [np.zeros(shape) for _ in range(3)] if with_gradient else None
    for i, o in zip(keep, occ):
        v = p.eig.U[:, i]
        phi = gb.orbital(v)
        n += o * phi * phi
        if with_gradient:
            for g, d in zip(grad, gb.gradient(v)):
                g += 2.0 * o * phi * d
    # ln q(r, r) = ln(n Q / N)
    floored = int(np.count_nonzero(n < TINY))
    with np.errstate(divide="ignore"):
        log_q = np.log(np.maximum(n, TINY)) + p.log_q - math.log(p.n_mu)
    w = gb.orbital(p.w)
    return PairGridData(density=n, log_q=log_q, field=w, floored=floored, grad=tuple(grad) if grad else None)


def sample_pairs(result: ScfResult, grid: QuadGrid, with_gradient: bool = False) -> list:
    gb = GridBasis(result.tensors.basis, grid, derivatives=with_gradient)
    return [_pair_on_grid(result, mu, gb, with_gradient) for mu in range(len(result.pairs))]


def entropies(result: ScfResult, grid: QuadGrid, samples: list | None = None):
    """Per-pair (S_c, S_t) by quadrature.

    S_t = -int n ln(n / N_mu) and S_c = int n [ln q(r, r, beta) + beta w_mu],
    with q(r, r) from the factored propagator. These signs make
    F_mu = U_mu - S_c/beta - S_t/beta hold pair by pair.
    """
    samples = samples or sample_pairs(result, grid)
    beta = _beta(result)
    W = grid.weights
    S_c, S_t = [], []
    for p, d in zip(result.pairs, samples):
        n = d.density
        total = float(np.sum(W * n))
        bad = (n <= TINY) & (W * n > 1e-12 * total)
        if np.any(bad):
            raise ArithmeticError("propagator diagonal vanishes at a node carrying density")
        with np.errstate(divide="ignore", invalid="ignore"):
            nlogn = np.where(n > TINY, n * np.log(np.maximum(n, TINY) / p.n_mu), 0.0)
        S_t.append(-float(np.sum(W * nlogn)))
        S_c.append(float(np.sum(W * np.where(n > TINY, n * (d.log_q + beta * d.field), 0.0))))
    return np.array(S_c), np.array(S_t)


def check_constraints(result: ScfResult, grid: QuadGrid, K: float | None = None, samples: list | None = None):
    """Return (ratio1, ratio2) for the total density.

    ratio1 = (3 pi / 4K) [(pi/2) int n^3]^(1/3)
    ratio2 = (1/2K) int |grad sqrt(n)|^2 = (1/8K) int |grad n|^2 / n
    """
    if samples is None or any(s.grad is None for s in samples):
        samples = sample_pairs(result, grid, with_gradient=True)
    K = kinetic_energy(result) if K is None else K
    n = sum(s.density for s in samples)
    g = [sum(s.grad[k] for s in samples) for k in range(3)]
    g2 = g[0] ** 2 + g[1] ** 2 + g[2] ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        vw = np.where(n > TINY, g2 / n, 0.0)
    ratio1 = 3.0 * math.pi / (4.0 * K) * (0.5 * math.pi * grid.integrate(n**3)) ** (1.0 / 3.0)
    ratio2 = grid.integrate(vw) / (8.0 * K)
    return ratio1, ratio2


def density_on_grid(result: ScfResult, r, theta, phi, route: str = "propagator", chunk: int = 20000):
    """Pair densities and their sum at the points (r, theta, phi).

    ``route="propagator"`` uses the occupation-weighted eigenvectors (always
    non-negative); ``route="coefficients"`` uses sum_i n_i f_i directly.
    Returns (per_pair array of shape (n_pairs, n_points), total).
    """
    if route not in ("propagator", "coefficients"):
        raise ValueError(f"unknown density route {route!r}")
    r, theta, phi = (np.ravel(a) for a in np.broadcast_arrays(np.asarray(r, float), np.asarray(theta, float),
                                                               np.asarray(phi, float)))
    basis, beta = result.tensors.basis, _beta(result)
    out = np.zeros((len(result.pairs), r.size))
    occs = [occupations(p.eig, beta, p.n_mu) for p in result.pairs]
    for s in range(0, r.size, chunk):
        sl = slice(s, s + chunk)
        f = eval_basis(basis, r[sl], theta[sl], phi[sl])
        for mu, p in enumerate(result.pairs):
            if route == "coefficients":
                out[mu, sl] = f @ p.n
            else:
                keep, occ = occs[mu]
                orb = f @ p.eig.U[:, keep]
                out[mu, sl] = (orb * orb) @ occ
    return out, out.sum(axis=0)


# ---------------------------------------------------------------------------
# report


@dataclass(eq=False)
class EnergyReport:
    """Per-pair energy decomposition (Hartree); totals are sums over pairs."""

    beta: float
    pair_sizes: list
    columns: dict
    F_spectral: float
    ratio1: float
    ratio2: float
    pair_norms: list = field(default_factory=list)
    floored_nodes: int = 0

    def total(self, name: str) -> float:
        return float(np.sum(self.columns[name]))

    @property
    def F(self) -> float:
        return self.total("F")

    @property
    def binding(self) -> float:
        return -self.F

    @property
    def decomposition_residual(self) -> float:
        """|F_spectral - (U - S_c/beta - S_t/beta)| / |F_spectral|."""
        dec = self.total("U") + self.total("minus_Sc_over_beta") + self.total("minus_St_over_beta")
        return abs(self.F_spectral - dec) / abs(self.F_spectral)

    def rows(self):
        """(label, {column: value}) for each pair and the total."""
        for mu in range(len(self.pair_sizes)):
            yield f"pair {mu + 1}", {c: float(self.columns[c][mu]) for c in COLUMNS}
        yield "total", {c: self.total(c) for c in COLUMNS}

    def to_dict(self) -> dict:
        return {
            "beta": self.beta,
            "pair_sizes": list(self.pair_sizes),
            "pairs": [
                {"pair": mu + 1, "electrons": int(nm), "norm": float(self.pair_norms[mu]) if self.pair_norms else None,
                 **{c: float(self.columns[c][mu]) for c in COLUMNS}}
                for mu, nm in enumerate(self.pair_sizes)
            ],
            "total": {c: self.total(c) for c in COLUMNS},
            "F_spectral": self.F_spectral,
            "binding": -self.F_spectral,
            "decomposition_residual": self.decomposition_residual,
            "constraints": {"ratio1": self.ratio1, "ratio2": self.ratio2},
            "floored_nodes": self.floored_nodes,
        }


def energy_report(result: ScfResult, grid: QuadGrid | None = None) -> EnergyReport:
    """Assemble the full decomposition.

    F per pair comes from the spectral formula; the entropy columns come
    from quadrature, so ``decomposition_residual`` compares two routes.
    """
    basis = result.tensors.basis
    grid = grid or QuadGrid.for_basis(basis)
    beta = _beta(result)
    pot = potential_components(result)
    U = pot["U_en"] + pot["U_ee"] + pot["U_sic"] + pot["U_P"]
    samples = sample_pairs(result, grid, with_gradient=True)
    S_c, S_t = entropies(result, grid, samples)
    Kp = kinetic_energies(result)
    Fp = pair_free_energies(result)
    r1, r2 = check_constraints(result, grid, float(Kp.sum()), samples)
    columns = dict(pot, U=U, minus_Sc_over_beta=-S_c / beta, minus_St_over_beta=-S_t / beta, F=Fp, K=Kp)
    norms = [grid.integrate(s.density) for s in samples]
    return EnergyReport(
        beta=beta,
        pair_sizes=[p.n_mu for p in result.pairs],
        columns=columns,
        F_spectral=float(Fp.sum()),
        ratio1=r1,
        ratio2=r2,
        pair_norms=norms,
        floored_nodes=sum(s.floored for s in samples),
    )
