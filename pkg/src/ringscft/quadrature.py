"""Product quadrature in spherical coordinates.

Radial nodes are uniform in x = ln r (trapezoid rule, weight r^3 dx), the
polar angle uses Gauss-Legendre nodes in cos(theta) and the azimuth uses
uniform nodes. Quantities built from the basis are evaluated separably:
radial tables per basis function and angular tables per (l, m) block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ringscft.basis import BasisSet, radial_derivatives, radial_values, real_sph_harm_all

DEFAULT_RADIAL = (400, 1e-6, 50.0)
DEFAULT_ANGULAR = (32, 64)


@dataclass(frozen=True, eq=False)
class QuadGrid:
    """Radial nodes ``r`` with weights ``w_r`` (r^2 dr included) and
    angular nodes ``theta``/``phi`` (flattened) with weights ``w_ang``."""

    r: np.ndarray
    w_r: np.ndarray
    theta: np.ndarray
    phi: np.ndarray
    w_ang: np.ndarray

    @property
    def n_radial(self) -> int:
        return len(self.r)

    @property
    def n_angular(self) -> int:
        return len(self.theta)

    @property
    def size(self) -> int:
        return self.n_radial * self.n_angular

    @property
    def weights(self) -> np.ndarray:
        """Full (n_radial, n_angular) weight array."""
        return np.outer(self.w_r, self.w_ang)

    def integrate(self, values: np.ndarray) -> float:
        """Integrate samples of shape (n_radial, n_angular)."""
        return float(self.w_r @ values @ self.w_ang)

    def points(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Flattened (r, theta, phi) arrays in (radial, angular) order."""
        r = np.repeat(self.r, self.n_angular)
        return r, np.tile(self.theta, self.n_radial), np.tile(self.phi, self.n_radial)

    @classmethod
    def build(cls, n_r: int = DEFAULT_RADIAL[0], r_min: float = DEFAULT_RADIAL[1], r_max: float = DEFAULT_RADIAL[2],
              n_theta: int = DEFAULT_ANGULAR[0], n_phi: int = DEFAULT_ANGULAR[1], spherical: bool = False) -> "QuadGrid":
        if n_r < 2 or not (0 < r_min < r_max):
            raise ValueError("need n_r >= 2 and 0 < r_min < r_max")
        x = np.linspace(math.log(r_min), math.log(r_max), n_r)
        dx = x[1] - x[0]
        r = np.exp(x)
        wx = np.full(n_r, dx)
        wx[0] = wx[-1] = 0.5 * dx
        if spherical:
            theta, phi, w_ang = np.array([0.5 * math.pi]), np.array([0.0]), np.array([4.0 * math.pi])
        else:
            if n_theta < 1 or n_phi < 1:
                raise ValueError("angular node counts must be positive")
            u, wu = np.polynomial.legendre.leggauss(n_theta)
            ph = 2.0 * math.pi * np.arange(n_phi) / n_phi
            theta = np.repeat(np.arccos(u), n_phi)
            phi = np.tile(ph, n_theta)
            w_ang = np.repeat(wu, n_phi) * (2.0 * math.pi / n_phi)
        return cls(r=r, w_r=wx * r**3, theta=theta, phi=phi, w_ang=w_ang)

    @classmethod
    def for_basis(cls, basis: BasisSet, spherical: bool | None = None, **kw) -> "QuadGrid":
        """Default grid stretched to the extent of the basis.

        r_min is pulled in for the tightest exponent and r_max pushed out to
        cover the most diffuse one, since thermally populated diffuse states
        carry weight there. Unless ``n_r`` is given, the node count keeps the
        default density per unit of ln r.
        """
        if spherical is None:
            spherical = basis.l_max == 0
        r_min = min(kw.pop("r_min", DEFAULT_RADIAL[1]), 1e-2 / math.sqrt(float(basis.c.max())))
        r_max = max(kw.pop("r_max", DEFAULT_RADIAL[2]), 8.0 / math.sqrt(float(basis.c.min())))
        if "n_r" not in kw:
            per_unit = DEFAULT_RADIAL[0] / math.log(DEFAULT_RADIAL[2] / DEFAULT_RADIAL[1])
            kw["n_r"] = max(DEFAULT_RADIAL[0], math.ceil(per_unit * math.log(r_max / r_min)))
        return cls.build(r_min=r_min, r_max=r_max, spherical=spherical, **kw)


class GridBasis:
    """Separable tables of the basis on a QuadGrid.

    ``orbital(v)`` returns sum_j v_j f_j at every node as an
    (n_radial, n_angular) array; ``gradient(v)`` returns its spherical
    components (d/dr, (1/r) d/dtheta, (1/(r sin theta)) d/dphi).
    """

    def __init__(self, basis: BasisSet, grid: QuadGrid, derivatives: bool = False):
        self.basis = basis
        self.grid = grid
        self.R = radial_values(basis, grid.r)
        z = real_sph_harm_all(basis.l_max, grid.theta, grid.phi, derivatives=derivatives)
        if derivatives:
            z, dz_t, dz_p = z
            self.dR, self.R_over_r = radial_derivatives(basis, grid.r)
            sin_t = np.sin(grid.theta)
            self.dZt = np.stack([dz_t[(b.l, b.m)] for b in basis.blocks], axis=1)
            self.dZp = np.stack([dz_p[(b.l, b.m)] / sin_t for b in basis.blocks], axis=1)
        self.Z = np.stack([np.broadcast_to(z[(b.l, b.m)], grid.theta.shape) for b in basis.blocks], axis=1)
        self.derivatives = derivatives

    def _radial_blocks(self, table: np.ndarray, v: np.ndarray) -> np.ndarray:
        return np.stack([table[:, b.slice] @ v[b.slice] for b in self.basis.blocks], axis=1)

    def orbital(self, v: np.ndarray) -> np.ndarray:
        return self._radial_blocks(self.R, v) @ self.Z.T

    def gradient(self, v: np.ndarray):
        if not self.derivatives:
            raise RuntimeError("GridBasis was built without derivative tables")
        ar = self._radial_blocks(self.dR, v) @ self.Z.T
        ro = self._radial_blocks(self.R_over_r, v)
        return ar, ro @ self.dZt.T, ro @ self.dZp.T
