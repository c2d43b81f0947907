"""Wigner 3-j symbols and Gaunt coefficients for real spherical harmonics.

3-j symbols come from the Schulten-Gordon downward recursion in l3,
seeded with the closed form at l3 = l1 + l2. The all-zero-m case uses the
two-step variant, since the odd-l3 members vanish there.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

SQRT_HALF = math.sqrt(0.5)


def _check_args(ls, ms):
    for l in ls:
        if l < 0:
            raise ValueError(f"angular momentum must be non-negative, got {l}")
    for l, m in zip(ls, ms):
        if abs(m) > l:
            raise ValueError(f"|m|={abs(m)} exceeds l={l}")


def _triangle(l1, l2, l3) -> bool:
    return abs(l1 - l2) <= l3 <= l1 + l2


def _top_value(l1, l2, m1, m2, m3) -> float:
    """3-j symbol at l3 = l1 + l2 in closed form."""
    L = l1 + l2
    f = math.factorial
    num = f(2 * l1) * f(2 * l2) * f(L + m3) * f(L - m3)
    den = f(2 * L + 1) * f(l1 + m1) * f(l1 - m1) * f(l2 + m2) * f(l2 - m2)
    sign = -1.0 if (l1 - l2 - m3) % 2 else 1.0
    return sign * math.sqrt(num / den)


def wigner3j_zero_m(l1: int, l2: int, l3: int) -> float:
    """(l1 l2 l3; 0 0 0) by the two-step downward recursion.

    Stepping l3 -> l3 - 2 multiplies by -K(l3)/K(l3-1) with
    K(x) = sqrt(x^2 - (l1-l2)^2) sqrt((l1+l2+1)^2 - x^2).
    """
    _check_args((l1, l2, l3), (0, 0, 0))
    if not _triangle(l1, l2, l3) or (l1 + l2 + l3) % 2:
        return 0.0

    def K(x):
        return math.sqrt(x * x - (l1 - l2) ** 2) * math.sqrt((l1 + l2 + 1) ** 2 - x * x)

    val = _top_value(l1, l2, 0, 0, 0)
    x = l1 + l2
    while x > l3:
        val = -K(x) / K(x - 1) * val
        x -= 2
    return val


def wigner3j(l1: int, l2: int, l3: int, m1: int, m2: int, m3: int) -> float:
    """Wigner 3-j symbol; exactly 0.0 whenever a selection rule fails."""
    _check_args((l1, l2, l3), (m1, m2, m3))
    if m1 + m2 + m3 != 0 or not _triangle(l1, l2, l3) or l3 < abs(m3):
        return 0.0
    if m1 == 0 and m2 == 0 and m3 == 0:
        return wigner3j_zero_m(l1, l2, l3)

    def A(x):
        a = x * x - (l1 - l2) ** 2
        b = (l1 + l2 + 1) ** 2 - x * x
        c = x * x - m3 * m3
        if a <= 0 or b <= 0 or c <= 0:
            return 0.0
        return math.sqrt(a) * math.sqrt(b) * math.sqrt(c)

    def B(x):
        return -(2 * x + 1) * (l1 * (l1 + 1) * m3 - l2 * (l2 + 1) * m3 - x * (x + 1) * (m2 - m1))

    upper = 0.0
    val = _top_value(l1, l2, m1, m2, m3)
    x = l1 + l2
    while x > l3:
        lower = -(x * A(x + 1) * upper + B(x) * val) / ((x + 1) * A(x))
        upper, val = val, lower
        x -= 1
    return val


def gaunt(l1: int, l2: int, l3: int, m1: int, m2: int, m3: int) -> float:
    """Integral of Y_l1^m1 Y_l2^m2 Y_l3^m3 over the unit sphere."""
    if m1 + m2 + m3 != 0:
        _check_args((l1, l2, l3), (m1, m2, m3))
        return 0.0
    w0 = wigner3j_zero_m(l1, l2, l3) if _triangle(l1, l2, l3) else 0.0
    if w0 == 0.0:
        _check_args((l1, l2, l3), (m1, m2, m3))
        return 0.0
    pref = math.sqrt((2 * l1 + 1) * (2 * l2 + 1) * (2 * l3 + 1) / (4.0 * math.pi))
    return pref * w0 * wigner3j(l1, l2, l3, m1, m2, m3)


def real_unitary_elem(m: int, mp: int) -> complex:
    """U^m_{m'} with Z_l^m = sum_{m'} U^m_{m'} Y_l^{m'}."""
    if abs(m) != abs(mp):
        return 0j
    if m == 0:
        return 1 + 0j
    if m > 0:
        if mp == m:
            return complex(SQRT_HALF, 0.0)
        return complex(SQRT_HALF * (-1) ** mp, 0.0)
    if mp == m:
        return complex(0.0, SQRT_HALF * (-1) ** ((mp - m) % 2))
    return complex(0.0, -SQRT_HALF * (-1) ** (m % 2))


def _partners(m: int):
    return (0,) if m == 0 else (abs(m), -abs(m))


def real_gaunt(l: int, m: int, lp: int, mp: int, lpp: int, mpp: int) -> float:
    """Integral of Z_l^m Z_lp^mp Z_lpp^mpp over the unit sphere."""
    _check_args((l, lp, lpp), (m, mp, mpp))
    total = 0.0
    for m1 in _partners(m):
        u1 = real_unitary_elem(m, m1)
        for m2 in _partners(mp):
            u2 = real_unitary_elem(mp, m2)
            for m3 in _partners(mpp):
                if m1 + m2 + m3 != 0:
                    continue
                g = gaunt(l, lp, lpp, m1, m2, m3)
                if g:
                    total += (u1 * u2 * real_unitary_elem(mpp, m3)).real * g
    return total


def real_selection_allowed(l1, m1, l2, m2, l3, m3) -> bool:
    """Selection rules for the real Gaunt coefficient.

    Triangle and even l-sum from the 3-j symbols; an even number of
    sine-type (m < 0) factors; and one |m| equal to the sum of the others.
    """
    if not _triangle(l1, l2, l3) or (l1 + l2 + l3) % 2:
        return False
    if sum(1 for m in (m1, m2, m3) if m < 0) % 2:
        return False
    a, b, c = sorted((abs(m1), abs(m2), abs(m3)))
    return c == a + b


Key = tuple[tuple[int, int], tuple[int, int], tuple[int, int]]


def _canonical(a, b, c) -> Key:
    return tuple(sorted((a, b, c)))


@dataclass(frozen=True)
class RealGauntTable:
    """Sparse map from sorted ((l,m),(l',m'),(l'',m'')) to the real Gaunt value."""

    l_max: int
    values: dict = field(default_factory=dict)

    def get(self, lm1, lm2, lm3) -> float:
        return self.values.get(_canonical(tuple(lm1), tuple(lm2), tuple(lm3)), 0.0)

    def __len__(self) -> int:
        return len(self.values)

    def items(self):
        return self.values.items()

    def ordered_triples(self, lms):
        """Every ordered triple over ``lms`` with a stored value, as (i, j, k, alpha)."""
        pos = {lm: i for i, lm in enumerate(lms)}
        out = []
        for key, val in self.values.items():
            if any(lm not in pos for lm in key):
                continue
            for perm in set(itertools.permutations(key)):
                out.append((pos[perm[0]], pos[perm[1]], pos[perm[2]], val))
        out.sort()
        return out


def build_real_gaunt_table(l_max: int, tol: float = 1e-14) -> RealGauntTable:
    """Tabulate all non-zero real Gaunt coefficients with every l <= l_max."""
    if l_max < 0:
        raise ValueError("l_max must be non-negative")
    lms = [(l, m) for l in range(l_max + 1) for m in range(-l, l + 1)]
    values = {}
    for a, b, c in itertools.combinations_with_replacement(lms, 3):
        if not real_selection_allowed(*a, *b, *c):
            continue
        val = real_gaunt(*a, *b, *c)
        if abs(val) > tol:
            values[(a, b, c)] = val
    return RealGauntTable(l_max=l_max, values=values)
