"""Polynomial functionals on measures and the generator consistency gap.

For Phi = R_phi^l, R(f) = prod_j <f, phi_j>, the projected functional
V -> R(mu_V^N) has gradient (1/N) grad psi(v_i) with psi = DR[mu_V^N] and
Hessian blocks

    (1/N) delta_{ii'} hess psi(v_i) + (1/N^2) sum_{j != k} c_jk grad phi_j(v_i) (x) grad phi_k(v_i'),

c_jk = prod_{l != j,k} <mu_V^N, phi_l>.  The first-order part reproduces the
limit generator <Q_L(mu, mu), psi> exactly; the 1/N^2 cross terms are the
whole consistency gap, which is therefore O(1/N).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._rng import numpy_rng
from .core import (BRACKET4, BRACKET6, EmpiricalMeasure, ModelError, ModelParams, ParticleState,
                   WeightFunction, coeff_a, coeff_b, empirical, weight_MN)
from .limit import collision_bracket
from .observables import (Constant, Coordinate, GaussianBump, LinearCombination, Observable, Speed2,
                          TestFunction)
from .sphere import BoltzmannSphereSpec, sample_uniform_sphere


@dataclass
class PolynomialFunctional:
    factors: list

    def __post_init__(self):
        if not self.factors:
            raise ModelError("a polynomial functional needs at least one factor")
        self.factors = list(self.factors)

    @property
    def order(self) -> int:
        return len(self.factors)

    @classmethod
    def gaussian_bumps(cls, centers, width=1.0):
        return cls([GaussianBump(c, width) for c in centers])


DEFAULT_BUMP_CENTERS = ((0.5, 0.0, 0.0), (0.0, -0.5, 0.5))


def _means(Phi: PolynomialFunctional, f: EmpiricalMeasure) -> np.ndarray:
    return np.array([f.integrate(ob.value) for ob in Phi.factors])


def _prod_except(m, skip):
    keep = [k for k in range(len(m)) if k not in skip]
    return float(np.prod(m[keep])) if keep else 1.0


def eval_R(Phi: PolynomialFunctional, f: EmpiricalMeasure) -> float:
    return float(np.prod(_means(Phi, f)))


def dR(Phi: PolynomialFunctional, f: EmpiricalMeasure) -> Observable:
    """v -> sum_j (prod_{k != j} <f, phi_k>) phi_j(v)."""
    m = _means(Phi, f)
    return LinearCombination([_prod_except(m, {j}) for j in range(len(m))], Phi.factors)


class ProjectedPolynomial(TestFunction):
    """V -> R_phi^l(mu_V^N) as an N-particle test function with analytic derivatives."""

    def __init__(self, Phi: PolynomialFunctional):
        self.Phi = Phi

    def _vals(self, V):
        return [ob.value(V) for ob in self.Phi.factors]

    def value(self, V):
        V = np.asarray(V, float)
        out = 1.0
        for v in self._vals(V):
            out = out * v.mean(axis=-1)
        return out

    def grad(self, V):
        V = np.asarray(V, float)
        f = EmpiricalMeasure(V)
        return dR(self.Phi, f).grad(V) / V.shape[0]

    def hess(self, V):
        V = np.asarray(V, float)
        n, d = V.shape
        f = EmpiricalMeasure(V)
        m = _means(self.Phi, f)
        psi = dR(self.Phi, f)
        H = np.zeros((n, d, n, d))
        idx = np.arange(n)
        H[idx, :, idx, :] = psi.hess(V) / n
        grads = [ob.grad(V) for ob in self.Phi.factors]
        ell = len(grads)
        for j in range(ell):
            for k in range(ell):
                if j != k:
                    H += _prod_except(m, {j, k}) * np.einsum("ia,jb->iajb", grads[j], grads[k]) / n**2
        return H


def _cross_term(Phi: PolynomialFunctional, V, params: ModelParams) -> float:
    """(1/2N^3) sum_{j != k} c_jk sum_{i,i'} dg_j . a(v_i - v_i') dg_k with dg = g(v_i) - g(v_i')."""
    n = V.shape[0]
    m = np.array([ob.value(V).mean() for ob in Phi.factors])
    grads = [ob.grad(V) for ob in Phi.factors]
    Z = V[:, None, :] - V[None, :, :]
    r2 = np.einsum("ija,ija->ij", Z, Z)
    dg = [g[:, None, :] - g[None, :, :] for g in grads]
    zdg = [np.einsum("ija,ija->ij", Z, x) for x in dg]
    total = 0.0
    ell = len(grads)
    for j in range(ell):
        for k in range(ell):
            if j == k:
                continue
            s = params.lam * np.sum(r2 * np.einsum("ija,ija->ij", dg[j], dg[k]) - zdg[j] * zdg[k])
            total += _prod_except(m, {j, k}) * s
    return total / (2 * n**3)


def _first_order_pairs(psi: Observable, V, params: ModelParams) -> float:
    """Pair-sum form of the diagonal part: (1/N^2) sum b.(g_i - g_i') + (1/2N^2) sum a:(H_i + H_i')."""
    n = V.shape[0]
    g = psi.grad(V)
    H = psi.hess(V)
    Z = V[:, None, :] - V[None, :, :]
    B = coeff_b(Z, params)
    drift = np.einsum("ija,ija->", B, g[:, None, :] - g[None, :, :])
    # sum_{i,i'} a(z_ii'):(H_i + H_i') = 2 sum_i abar_i : H_i with abar_i = sum_i' a(v_i - v_i')
    r2 = np.einsum("ija,ija->ij", Z, Z)
    abar = params.lam * (r2.sum(1)[:, None, None] * np.eye(V.shape[1]) - np.einsum("ija,ijb->iab", Z, Z))
    diff = np.einsum("iab,iab->", abar, H)
    return float((drift + diff) / n**2)


def apply_GN_projected(Phi: PolynomialFunctional, state, params: ModelParams) -> float:
    """G_L^N (Phi o pi^N)(V) from the product-rule expansion of the derivatives."""
    V = state.velocities if isinstance(state, ParticleState) else np.asarray(state, float)
    psi = dR(Phi, EmpiricalMeasure(V))
    return _first_order_pairs(psi, V, params) + _cross_term(Phi, V, params)


def apply_Ginf(Phi: PolynomialFunctional, f: EmpiricalMeasure, params: ModelParams) -> float:
    """<DR[f], Q_L(f, f)>."""
    return collision_bracket(f, dR(Phi, f), params)


def consistency_gap(Phi: PolynomialFunctional, state, params: ModelParams,
                    weight: WeightFunction = BRACKET6) -> float:
    """|G^N(Phi o pi^N)(V) - (G^inf Phi)(mu_V^N)| / M_m^N(V)."""
    st = state if isinstance(state, ParticleState) else ParticleState(state)
    raw = abs(apply_GN_projected(Phi, st, params) - apply_Ginf(Phi, empirical(st), params))
    return raw / weight_MN(st, weight)


@dataclass
class ConsistencySweep:
    N_list: list
    E0: float
    gaps: dict  # N -> normalised gaps (<v>^6)
    gaps_w4: dict  # N -> normalised gaps (<v>^4)
    median: np.ndarray
    max: np.ndarray
    slope: float
    slope_running: np.ndarray
    exact_zero: bool
    slope_w4: float = float("nan")

    def rows(self):
        return [(n, float(self.median[k]), float(self.max[k]), float(self.slope_running[k]))
                for k, n in enumerate(self.N_list)]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["N", "gap_median", "gap_max", "slope_running"])
            for row in self.rows():
                w.writerow([row[0]] + [repr(x) for x in row[1:]])


def _slope(ns, ys):
    ns, ys = np.asarray(ns, float), np.asarray(ys, float)
    if len(ns) < 2 or np.any(ys <= 0):
        return float("nan")
    return float(np.polyfit(np.log(ns), np.log(ys), 1)[0])


def consistency_sweep(Phi: PolynomialFunctional, N_list: Sequence[int], E0: float, samples_per_N: int,
                      seed: int, params: ModelParams = None, zero_tol: float = 1e-12) -> ConsistencySweep:
    """Gap statistics over states drawn uniformly on S^N(E0) (so M_2^N(V) = E0)."""
    N_list = [int(n) for n in N_list]
    if len(N_list) < 2 or any(b <= a for a, b in zip(N_list, N_list[1:])):
        raise ModelError("N_list must be increasing with at least two entries")
    base = ModelParams() if params is None else params
    params = ModelParams(d=base.d, lam=base.lam, energy=E0)
    gaps, gaps4 = {}, {}
    for n in N_list:
        spec = BoltzmannSphereSpec(n, params)
        g6, g4 = [], []
        for s in range(samples_per_N):
            st = sample_uniform_sphere(spec, seed, n * 1_000_003 + s)
            raw = abs(apply_GN_projected(Phi, st, params) - apply_Ginf(Phi, empirical(st), params))
            g6.append(raw / weight_MN(st, BRACKET6))
            g4.append(raw / weight_MN(st, BRACKET4))
        gaps[n], gaps4[n] = np.array(g6), np.array(g4)
    med = np.array([np.median(gaps[n]) for n in N_list])
    mx = np.array([np.max(gaps[n]) for n in N_list])
    exact_zero = bool(np.all(mx <= zero_tol))
    running = np.array([np.nan] + [_slope(N_list[:k + 1], med[:k + 1]) for k in range(1, len(N_list))])
    slope = float("nan") if exact_zero else _slope(N_list, med)
    slope4 = float("nan") if exact_zero else _slope(N_list, [np.median(gaps4[n]) for n in N_list])
    return ConsistencySweep(N_list, E0, gaps, gaps4, med, mx, slope, running, exact_zero, slope4)


def generator_nonconservative(phi: TestFunction, state, params: ModelParams) -> float:
    """G_2^N: the Landau generator without the cross Hessian terms a : (H_ij + H_ji).

    It is the master generator of the particle system driven by independent
    (not antisymmetric) pair noises; it conserves sum |v_i|^2 in mean but
    not every psi(|V|^2).
    """
    V = state.velocities if isinstance(state, ParticleState) else np.asarray(state, float)
    n = V.shape[0]
    g = phi.grad(V)
    H = phi.hess(V)
    Z = V[:, None, :] - V[None, :, :]
    A = coeff_a(Z, params)
    B = coeff_b(Z, params)
    drift = np.einsum("ija,ija->", B, g[:, None, :] - g[None, :, :]) / n
    idx = np.arange(n)
    Hd = H[idx, :, idx, :]
    diff = np.einsum("ijab,ijab->", A, Hd[:, None] + Hd[None, :]) / (2 * n)
    return float(drift + diff)
