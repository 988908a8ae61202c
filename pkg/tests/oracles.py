"""Independent reference computations used by several test modules."""
from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np


def taboo_enumeration(K, x: int, y: int, n: int, exact: bool = True):
    """phi^(n)_xy by summing over every path x -> x_1 .. x_{n-1} -> y avoiding y."""
    size = len(K)
    conv = (lambda v: Fraction(float(v))) if exact else float
    W = [[conv(K[i][j]) for j in range(size)] for i in range(size)]
    others = [v for v in range(size) if v != y]
    total = Fraction(0) if exact else 0.0
    for mid in itertools.product(others, repeat=n - 1):
        path = (x,) + mid + (y,)
        prod = Fraction(1) if exact else 1.0
        for a, b in zip(path, path[1:]):
            w = W[a][b]
            if not w:
                prod = 0
                break
            prod *= w
        total += prod
    return total


def random_digraph(rng: np.random.Generator, n: int, p: float = 0.6, loops: bool = True):
    K = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if (i != j or loops) and rng.random() < p:
                K[i, j] = 2.0 * (1.0 - rng.random())  # in (0, 2]
    return K


def random_irreducible(rng: np.random.Generator, n: int):
    while True:
        K = random_digraph(rng, n, p=0.5)
        # add a random Hamiltonian cycle to force strong connectivity
        perm = rng.permutation(n)
        for a, b in zip(perm, np.roll(perm, -1)):
            if a != b:
                K[a, b] = max(K[a, b], 2.0 * (1.0 - rng.random()))
        return K


def homloops_phi_via_first_passage(d, e, c, lam):
    """Phi(o,o|lam) on T_d with edge moment e and loop moment c everywhere,
    from the first-passage equation F = lam e + lam c F + (d-1) lam e F^2
    solved with numpy.roots (smallest non-negative real root)."""
    if lam == 0:
        return 0.0
    a2, a1, a0 = (d - 1) * lam * e, lam * c - 1.0, lam * e
    disc = a1 * a1 - 4 * a2 * a0
    if disc < 0:
        return None
    roots = np.roots([a2, a1, a0])
    real = sorted(r.real for r in roots if abs(r.imag) < 1e-12 and r.real >= 0)
    if not real:
        return None
    F = real[0]
    return lam * c + d * lam * e * F


def max_admissible(f, hi, tol=1e-13):
    """Largest lam in [0, hi] where f is defined and <= 1, increasing f."""
    lo = 0.0
    def ok(v):
        r = f(v)
        return r is not None and r <= 1.0
    if ok(hi):
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo
