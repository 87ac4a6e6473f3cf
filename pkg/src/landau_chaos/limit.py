"""Reference dynamics for the limit Landau equation without a PDE solver.

For Maxwellian molecules the coefficients are quadratic in the relative
velocity, so the collision bracket of a discrete measure reduces to moments
and the second-moment flow closes:

    dP/dt = 4 lam (E I - d P),   P(t) = (E/d) I + (P0 - (E/d) I) exp(-4 lam d t).

Entropies use the convention H(f) = int f log f.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import EmpiricalMeasure, ModelError, ModelParams, coeff_a, coeff_b
from .observables import Observable


@dataclass(frozen=True)
class MomentState:
    mean: np.ndarray
    pressure: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.pressure, float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise ModelError("pressure must be a square matrix")
        if not np.allclose(P, P.T, atol=1e-12 * max(1.0, np.abs(P).max())):
            raise ModelError("pressure must be symmetric")
        object.__setattr__(self, "pressure", P)
        object.__setattr__(self, "mean", np.zeros(P.shape[0]) if self.mean is None else np.asarray(self.mean, float))

    @property
    def energy(self) -> float:
        return float(np.trace(self.pressure))

    @classmethod
    def of(cls, f: EmpiricalMeasure) -> "MomentState":
        return cls(f.weights @ f.atoms, f.moment_matrix())


@dataclass(frozen=True)
class GaussianState:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        S = np.atleast_2d(np.asarray(self.covariance, float))
        m = np.atleast_1d(np.asarray(self.mean, float))
        if S.shape != (m.size, m.size):
            raise ModelError("covariance shape does not match the mean")
        if not np.allclose(S, S.T):
            raise ModelError("covariance must be symmetric")
        if np.linalg.eigvalsh(S).min() <= 0:
            raise ModelError("covariance must be positive definite")
        object.__setattr__(self, "covariance", S)
        object.__setattr__(self, "mean", m)

    @property
    def d(self):
        return self.mean.size

    def log_density(self, x):
        x = np.asarray(x, float) - self.mean
        L = np.linalg.cholesky(self.covariance)
        y = np.linalg.solve(L, x.reshape(-1, self.d).T).T.reshape(x.shape)
        logdet = 2 * np.log(np.diag(L)).sum()
        return -0.5 * np.einsum("...a,...a->...", y, y) - 0.5 * (self.d * np.log(2 * np.pi) + logdet)


def _mean_field(f: EmpiricalMeasure, params: ModelParams):
    """a_bar(v) = sum_q w_q a(v - v_q) and b_bar(v) = sum_q w_q b(v - v_q) at the atoms."""
    x, w = f.atoms, f.weights
    m = w @ x
    P = np.einsum("p,pa,pb->ab", w, x, x)
    r2 = np.einsum("pa,pa->p", x, x)
    d = x.shape[1]
    s = r2 - 2 * x @ m + np.trace(P)
    outer = x[:, :, None] * x[:, None, :] - x[:, :, None] * m[None, None, :] - m[None, :, None] * x[:, None, :] + P
    abar = params.lam * (s[:, None, None] * np.eye(d) - outer)
    bbar = -params.lam * (d - 1) * (x - m)
    return abar, bbar


def collision_bracket(f: EmpiricalMeasure, phi: Observable, params: ModelParams) -> float:
    """<Q_L(f, f), phi> for a discrete measure f.

    Uses sum_q w_q a(v_p - v_q) in closed form, so the cost is linear in the
    number of atoms; ``collision_bracket_pairs`` is the literal double sum.
    """
    abar, bbar = _mean_field(f, params)
    H = phi.hess(f.atoms)
    g = phi.grad(f.atoms)
    per_atom = np.einsum("pab,pab->p", abar, H) + 2 * np.einsum("pa,pa->p", bbar, g)
    return float(f.weights @ per_atom)


def collision_bracket_pairs(f: EmpiricalMeasure, phi: Observable, params: ModelParams) -> float:
    x, w = f.atoms, f.weights
    Z = x[:, None, :] - x[None, :, :]
    A = coeff_a(Z, params)
    B = coeff_b(Z, params)
    H = phi.hess(x)
    g = phi.grad(x)
    ww = w[:, None] * w[None, :]
    t1 = 0.5 * np.einsum("pq,pqab,pqab->", ww, A, H[:, None] + H[None, :])
    t2 = np.einsum("pq,pqa,pqa->", ww, B, g[:, None] - g[None, :])
    return float(t1 + t2)


def _pressure(P):
    if isinstance(P, MomentState):
        if np.any(np.abs(P.mean) > 1e-12 * max(1.0, np.sqrt(P.energy))):
            raise ModelError("pressure flow assumes zero mean; translate the input")
        return P.pressure
    return np.asarray(P, float)


def pressure_rhs(P, params: ModelParams) -> np.ndarray:
    P = _pressure(P)
    d = P.shape[0]
    return 4 * params.lam * (np.trace(P) * np.eye(d) - d * P)


def evolve_pressure(P0, t, params: ModelParams) -> MomentState:
    P0 = _pressure(P0)
    d = P0.shape[0]
    eq = np.trace(P0) / d * np.eye(d)
    P = eq + (P0 - eq) * np.exp(-4 * params.lam * d * t)
    P = 0.5 * (P + P.T)
    return MomentState(np.zeros(d), P)


def relaxation_rate(params: ModelParams) -> float:
    return 4 * params.lam * params.d


def equilibrium_gaussian(params: ModelParams) -> GaussianState:
    if not params.energy > 0:
        raise ModelError("equilibrium needs E > 0")
    d = params.d
    return GaussianState(np.zeros(d), params.energy / d * np.eye(d))


def gaussian_relative_entropy(f: GaussianState, gamma: GaussianState) -> float:
    """H(f | gamma) = int f log(f / gamma) for two Gaussians."""
    Sg_inv = np.linalg.inv(gamma.covariance)
    m = f.mean - gamma.mean
    M = Sg_inv @ f.covariance
    _, logdet = np.linalg.slogdet(M)
    return float(0.5 * (np.trace(M) - f.d + m @ Sg_inv @ m - logdet))


def gaussian_entropy(f: GaussianState) -> float:
    """int f log f = -1/2 log((2 pi e)^d det Sigma)."""
    _, logdet = np.linalg.slogdet(f.covariance)
    return float(-0.5 * (f.d * np.log(2 * np.pi * np.e) + logdet))
