"""Self-consistent iteration of the pair fields and densities.

Each pair mu (one or two electrons) feels

    w_mu = w_en + w_ee + w_sic_mu + w_P_mu

where w_en and w_ee are the nuclear and Hartree potentials, w_sic_mu is a
Fermi-Amaldi correction of the pair's own Hartree potential, and w_P_mu is
the contact (excluded-volume) repulsion from every other pair. Coulomb
potentials are obtained by solving Poisson's equation in the basis through
the Laplace matrix.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ringscft.propagator import (
    DEFAULT_EIG_THRESHOLD,
    Orthogonalizer,
    PairEig,
    PartitionFunction,
    density_matrix,
    generalized_eig,
    pair_density,
    partition_function,
    trace_sq,
)
from ringscft.basis import eval_basis
from ringscft.tensors import TensorSet

log = logging.getLogger(__name__)

FOUR_PI = 4.0 * math.pi
MAX_Z = 10
INIT_SCHEMES = ("auto", "staggered", "hybrid", "uniform")
# sp3 directions used to seed outer pairs in the hybrid start
TETRAHEDRAL = np.array([(1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1)], dtype=float) / math.sqrt(3.0)
HYBRID_P_FRACTION = 0.75


class ScfDivergence(ArithmeticError):
    pass


@dataclass(frozen=True)
class ScfConfig:
    Z: int
    beta: float = 100.0
    g0: float = 0.1
    g0_per_pair: tuple[float, ...] | None = None
    mixing_alpha: float = 0.1
    tol: float = 1e-6
    max_iter: int = 3000
    perturb_amplitude: float = 1e-3
    perturb_seed: int = 0
    spherical_only: bool = False
    eig_threshold: float = DEFAULT_EIG_THRESHOLD
    anderson_depth: int = 5
    anderson_start: float = 1e-2
    init: str = "auto"
    check_invariants: bool = False

    def __post_init__(self):
        if not (1 <= self.Z <= MAX_Z):
            raise ValueError(f"Z must lie in 1..{MAX_Z}, got {self.Z}")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.g0 <= 0:
            raise ValueError("g0 must be positive")
        if self.g0_per_pair is not None and any(g <= 0 for g in self.g0_per_pair):
            raise ValueError("per-pair g0 values must be positive")
        if not (0 < self.mixing_alpha <= 1):
            raise ValueError("mixing_alpha must lie in (0, 1]")
        if self.init not in INIT_SCHEMES:
            raise ValueError(f"unknown init scheme {self.init!r}")

    def g0_list(self, n_pairs: int) -> list[float]:
        if self.g0_per_pair is None:
            return [self.g0] * n_pairs
        if len(self.g0_per_pair) != n_pairs:
            raise ValueError(f"g0_per_pair has {len(self.g0_per_pair)} entries for {n_pairs} pairs")
        return list(self.g0_per_pair)


def assign_pairs(n_electrons: int) -> list[int]:
    """Fill pairs with two electrons each; an odd electron gets its own pair."""
    if n_electrons < 1:
        raise ValueError("need at least one electron")
    pairs = [2] * (n_electrons // 2)
    if n_electrons % 2:
        pairs.append(1)
    return pairs


# ---------------------------------------------------------------------------
# Poisson solves


class PoissonSolver:
    """Solves L x = b block by block (L is block diagonal in (l, m)).

    Each l block of -L is symmetrically rescaled to unit diagonal and
    eigendecomposed once.
    """

    def __init__(self, tensors: TensorSet):
        self.basis = tensors.basis
        self._fact = {}
        for b in self.basis.blocks:
            if b.l in self._fact:
                continue
            Lb = tensors.L[b.slice, b.slice]
            d = np.sqrt(-np.diag(Lb))
            if not np.all(np.isfinite(d)) or np.any(d == 0):
                raise np.linalg.LinAlgError(f"Laplace block l={b.l} has a non-negative diagonal")
            ev, V = np.linalg.eigh(-Lb / np.outer(d, d))
            if ev.min() <= 0:
                raise np.linalg.LinAlgError(f"Laplace block l={b.l} is singular")
            self._fact[b.l] = (d, ev, V)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        out = np.zeros_like(rhs)
        for b in self.basis.blocks:
            r = rhs[b.slice]
            if not np.any(r):
                continue
            d, ev, V = self._fact[b.l]
            out[b.slice] = -(V @ ((V.T @ (r / d)) / ev)) / d
        return out


def build_w_en(tensors: TensorSet, Z: float, poisson: PoissonSolver | None = None) -> np.ndarray:
    """Nuclear potential -Z/r: solves L w = 4 pi Z f(0)."""
    poisson = poisson or PoissonSolver(tensors)
    return poisson.solve(FOUR_PI * Z * tensors.f0)


def build_w_ee(tensors: TensorSet, total_density: np.ndarray, poisson: PoissonSolver | None = None) -> np.ndarray:
    """Hartree potential of the total density: w = -4 pi L^-1 S n."""
    poisson = poisson or PoissonSolver(tensors)
    return -FOUR_PI * poisson.solve(tensors.S @ total_density)


def build_w_sic(tensors: TensorSet, pair_density: np.ndarray, n_mu: int,
                poisson: PoissonSolver | None = None) -> np.ndarray:
    """Fermi-Amaldi correction: +(4 pi / N_mu) L^-1 S n_mu."""
    poisson = poisson or PoissonSolver(tensors)
    return FOUR_PI / n_mu * poisson.solve(tensors.S @ pair_density)


def build_w_pauli(pair_densities, g0, mu: int) -> np.ndarray:
    """(1/g0_mu) times the summed densities of every other pair."""
    if np.ndim(g0) == 0:
        g = float(g0)
    else:
        g = float(g0[mu])
    out = np.zeros_like(pair_densities[mu])
    for gamma, n in enumerate(pair_densities):
        if gamma != mu:
            out = out + n
    return out / g


@dataclass(eq=False)
class FieldSet:
    w_en: np.ndarray
    w_ee: np.ndarray
    w_sic: list
    w_P: list

    @property
    def w_total(self) -> list:
        return [self.w_en + self.w_ee + s + p for s, p in zip(self.w_sic, self.w_P)]


@dataclass(eq=False)
class PairState:
    n_mu: int
    g0: float
    n: np.ndarray
    w: np.ndarray | None = None
    eig: PairEig | None = None
    pf: PartitionFunction | None = None

    @property
    def log_q(self) -> float:
        return self.pf.log_q


@dataclass(eq=False)
class ScfResult:
    config: ScfConfig
    tensors: TensorSet
    pairs: list
    fields: FieldSet
    converged: bool
    iterations: int
    residual: float
    trace: list = field(default_factory=list)
    invariant_log: list = field(default_factory=list)
    start: str = ""
    alternatives: list = field(default_factory=list)

    @property
    def free_energy(self) -> float:
        return self.trace[-1][2] if self.trace else float("nan")


class ScfEngine:
    """Holds the per-basis precomputation shared by every iteration."""

    def __init__(self, config: ScfConfig, tensors: TensorSet):
        self.config = config
        self.tensors = tensors
        self.basis = tensors.basis
        if config.spherical_only and np.any(self.basis.l > 0):
            raise ValueError("spherical_only requires an l = 0 basis; build it with spherical channels only")
        self.ortho = Orthogonalizer.from_overlap(tensors.S, config.eig_threshold)
        self.S_pinv = self.ortho.pinv
        self.poisson = PoissonSolver(tensors)
        self.w_en = build_w_en(tensors, config.Z, self.poisson)
        self.pair_sizes = assign_pairs(config.Z)
        self.g0 = config.g0_list(len(self.pair_sizes))

    # -- fields -----------------------------------------------------------

    def fields(self, densities) -> FieldSet:
        total = np.sum(densities, axis=0)
        w_ee = build_w_ee(self.tensors, total, self.poisson)
        w_sic = [build_w_sic(self.tensors, n, nm, self.poisson) for n, nm in zip(densities, self.pair_sizes)]
        w_P = [build_w_pauli(densities, self.g0, mu) for mu in range(len(densities))]
        return FieldSet(w_en=self.w_en, w_ee=w_ee, w_sic=w_sic, w_P=w_P)

    def solve_pair(self, w: np.ndarray) -> PairEig:
        A = 0.5 * self.tensors.L - self.tensors.gamma.contract_field(w)
        return generalized_eig(A, ortho=self.ortho)

    def new_density(self, eig: PairEig, n_mu: int) -> np.ndarray:
        n, _ = pair_density(eig, self.config.beta, n_mu, self.tensors.gamma, self.S_pinv)
        return n

    # -- initial state ----------------------------------------------------

    def _s_states(self, eig: PairEig, l: int = 0, m: int = 0) -> list:
        """Indices of eigenvectors living mostly in the (l, m) block, most bound first."""
        mask = (self.basis.l == l) & (self.basis.m == m)
        Sv = self.tensors.S @ eig.U
        weight = np.einsum("ij,ij->j", eig.U[mask], Sv[mask])
        return [i for i in np.argsort(-eig.D) if weight[i] > 0.5]

    def _density_of(self, vec: np.ndarray, n_mu: int) -> np.ndarray:
        return self.S_pinv @ self.tensors.gamma.contract_matrix(n_mu * np.outer(vec, vec))

    def can_hybridize(self) -> bool:
        has_p = all(np.any((self.basis.l == 1) & (self.basis.m == m)) for m in (-1, 0, 1))
        return has_p and len(self.pair_sizes) > 1 and not self.config.spherical_only

    def initial_densities(self, scheme: str | None = None) -> list:
        """Starting pair densities from the bare-nucleus problem (fields = w_en).

        ``staggered``: pair k takes the k-th most bound s-type eigenstate.
        ``hybrid``: pair 1 takes 1s; later pairs take 2s/2p hybrids pointing
        along successive tetrahedral directions.
        ``uniform``: every pair takes the thermal density of the bare problem.
        A seeded perturbation of the l > 0 coefficients is added in all cases.
        """
        scheme = scheme or self.config.init
        if scheme == "auto":
            scheme = "staggered"
        eig = self.solve_pair(self.w_en)
        if scheme == "uniform":
            dens = [self.new_density(eig, nm) for nm in self.pair_sizes]
        elif scheme == "hybrid":
            if not self.can_hybridize():
                raise ValueError("hybrid start needs p functions, more than one pair and an angular run")
            s = self._s_states(eig)
            p = {m: eig.U[:, self._s_states(eig, 1, m)[0]] for m in (-1, 0, 1)}
            two_s = eig.U[:, s[1]]
            dens = [self._density_of(eig.U[:, s[0]], self.pair_sizes[0])]
            for k, nm in enumerate(self.pair_sizes[1:]):
                x, y, z = TETRAHEDRAL[k % 4]
                pdir = x * p[1] + y * p[-1] + z * p[0]
                vec = math.sqrt(1 - HYBRID_P_FRACTION) * two_s + math.sqrt(HYBRID_P_FRACTION) * pdir
                dens.append(self._density_of(vec, nm))
        else:
            s = self._s_states(eig)
            dens = [self._density_of(eig.U[:, s[min(k, len(s) - 1)]], nm) for k, nm in enumerate(self.pair_sizes)]
        return [self._perturb(n, mu) for mu, n in enumerate(dens)]

    def _perturb(self, n: np.ndarray, mu: int) -> np.ndarray:
        amp = self.config.perturb_amplitude
        mask = self.basis.l > 0
        if amp == 0 or not mask.any():
            return n
        rng = np.random.default_rng([self.config.perturb_seed, mu])
        out = n.copy()
        out[mask] += amp * np.abs(n).max() * rng.standard_normal(int(mask.sum()))
        return out

    # -- energies ---------------------------------------------------------

    def pair_free_energies(self, densities, fields: FieldSet, pfs) -> np.ndarray:
        S, beta = self.tensors.S, self.config.beta
        out = []
        for mu, (n, nm, pf) in enumerate(zip(densities, self.pair_sizes, pfs)):
            Sn = S @ n
            inter = Sn @ (fields.w_P[mu] + fields.w_sic[mu] + fields.w_ee)
            out.append(-nm / beta * pf.log_q - 0.5 * inter)
        return np.array(out)

    # -- invariants (test mode) ------------------------------------------

    def check(self, eigs) -> dict:
        """Assert the per-iteration invariants and return the worst deviations.

        Tr(S q) = Q to 1e-10 (relative), the propagator-route density
        integrates to N_mu within 1e-6, and it is non-negative at a fixed
        set of sample points.
        """
        beta = self.config.beta
        worst = {"trace": 0.0, "norm": 0.0, "min_density": math.inf}
        fvals = self._sample_values()
        for eig, nm in zip(eigs, self.pair_sizes):
            pf = partition_function(eig.D, beta)
            tr = trace_sq(eig, self.tensors.S, beta)
            worst["trace"] = max(worst["trace"], abs(tr - pf.scaled) / pf.scaled)
            P = density_matrix(eig, beta, nm, cutoff=0.0)
            worst["norm"] = max(worst["norm"], abs(float(np.sum(P * self.tensors.S)) - nm))
            dens = np.einsum("ij,jk,ik->i", fvals, P, fvals)
            worst["min_density"] = min(worst["min_density"], float(dens.min()))
        if worst["trace"] > 1e-10:
            raise InvariantViolation(f"Tr(S q) differs from Q by {worst['trace']:.3e}")
        if worst["norm"] > 1e-6:
            raise InvariantViolation(f"pair density integrates to N_mu off by {worst['norm']:.3e}")
        if worst["min_density"] < -1e-12:
            raise InvariantViolation(f"negative density {worst['min_density']:.3e}")
        return worst

    def _sample_values(self) -> np.ndarray:
        if getattr(self, "_samples", None) is None:
            rng = np.random.default_rng(12345)
            n = 256
            r = np.exp(rng.uniform(np.log(1e-4), np.log(20.0), n))
            theta = np.arccos(rng.uniform(-1, 1, n))
            phi = rng.uniform(0, 2 * np.pi, n)
            self._samples = eval_basis(self.basis, r, theta, phi)
        return self._samples


class _Anderson:
    """Anderson mixing on the stacked density vector."""

    def __init__(self, depth: int, alpha: float):
        self.depth = depth
        self.alpha = alpha
        self.xs, self.fs = [], []

    def reset(self):
        self.xs, self.fs = [], []

    def step(self, x: np.ndarray, f: np.ndarray) -> np.ndarray:
        self.xs.append(x)
        self.fs.append(f)
        if len(self.xs) > self.depth + 1:
            self.xs.pop(0)
            self.fs.pop(0)
        if len(self.xs) == 1:
            return x + self.alpha * f
        dF = np.array([self.fs[-1] - fk for fk in self.fs[:-1]]).T
        dX = np.array([self.xs[-1] - xk for xk in self.xs[:-1]]).T
        coef, *_ = np.linalg.lstsq(dF, self.fs[-1], rcond=1e-12)
        xbar = self.xs[-1] - dX @ coef
        fbar = self.fs[-1] - dF @ coef
        return xbar + self.alpha * fbar


class InvariantViolation(AssertionError):
    pass


def _iterate(eng: ScfEngine, dens: list, callback=None, label: str = "") -> ScfResult:
    config, beta = eng.config, eng.config.beta
    if len(dens) != len(eng.pair_sizes):
        raise ValueError("initial densities do not match the pair count")
    split = np.cumsum([len(n) for n in dens])[:-1]
    alpha = config.mixing_alpha
    anderson = _Anderson(config.anderson_depth, alpha) if config.anderson_depth > 0 else None
    trace, inv_log = [], []
    residual = math.inf
    prev_res = math.inf
    converged = False
    it = 0
    fields = eigs = pfs = None
    for it in range(1, config.max_iter + 1):
        fields = eng.fields(dens)
        eigs = [eng.solve_pair(w) for w in fields.w_total]
        pfs = [partition_function(e.D, beta) for e in eigs]
        new = [eng.new_density(e, nm) for e, nm in zip(eigs, eng.pair_sizes)]
        F = float(np.sum(eng.pair_free_energies(dens, fields, pfs)))
        if not math.isfinite(F):
            raise ScfDivergence(
                f"free energy became non-finite at iteration {it}; last residuals {[t[1] for t in trace[-5:]]}"
            )
        diffs = [nn - n for nn, n in zip(new, dens)]
        residual = max(float(np.abs(d).max()) for d in diffs)
        trace.append((it, residual, F))
        if config.check_invariants:
            inv_log.append(eng.check(eigs))
        if callback is not None:
            callback(it, residual, F)
        log.debug("%s iter %d residual %.3e F %.10f", label, it, residual, F)
        if residual < config.tol:
            converged = True
            break
        x = np.concatenate(dens)
        f = np.concatenate(diffs)
        if anderson is not None and residual < config.anderson_start:
            x_next = anderson.step(x, f)
        else:
            if anderson is not None:
                anderson.reset()
            if residual > 2.0 * prev_res and alpha > 1e-3:
                alpha *= 0.5
            x_next = x + alpha * f
        prev_res = residual
        dens = np.split(x_next, split)
    # fields and eigenpairs below belong to ``dens`` (the last input state)
    pairs = [
        PairState(n_mu=nm, g0=g, n=n, w=w, eig=e, pf=pf)
        for nm, g, n, w, e, pf in zip(eng.pair_sizes, eng.g0, dens, fields.w_total, eigs, pfs)
    ]
    Fp = eng.pair_free_energies(dens, fields, pfs)
    order = list(np.argsort(Fp, kind="stable"))
    fields = FieldSet(
        w_en=fields.w_en,
        w_ee=fields.w_ee,
        w_sic=[fields.w_sic[i] for i in order],
        w_P=[fields.w_P[i] for i in order],
    )
    return ScfResult(
        config=config,
        tensors=eng.tensors,
        pairs=[pairs[i] for i in order],
        fields=fields,
        converged=converged,
        iterations=it,
        residual=residual,
        trace=trace,
        invariant_log=inv_log,
        start=label,
    )


def scf_iterate(config: ScfConfig, tensors: TensorSet, callback=None, initial=None) -> ScfResult:
    """Iterate fields and densities until the density update falls below ``tol``.

    ``callback(iteration, residual, free_energy)`` is called every iteration.
    ``initial`` may supply starting density coefficients (one array per pair).
    With ``config.init == "auto"`` the staggered and hybrid starts are both
    run (when a hybrid start is possible) and the converged state with the
    lower free energy is returned; the other is kept in ``alternatives``.
    """
    eng = ScfEngine(config, tensors)
    if initial is not None:
        return _iterate(eng, [np.array(n, dtype=float) for n in initial], callback, "given")
    if config.init != "auto":
        return _iterate(eng, eng.initial_densities(config.init), callback, config.init)
    schemes = ["staggered"] + (["hybrid"] if eng.can_hybridize() else [])
    runs = [_iterate(eng, eng.initial_densities(sch), callback, sch) for sch in schemes]
    ok = [r for r in runs if r.converged] or runs
    best = min(ok, key=lambda r: r.free_energy)
    best.alternatives = [(r.start, r.free_energy, r.converged, r.iterations) for r in runs]
    return best
