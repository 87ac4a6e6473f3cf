"""One-particle observables and N-particle test functions with closed-form
derivatives.

One-particle observables act on arrays of velocities of shape (..., d) and
return values (...), gradients (..., d) and Hessians (..., d, d).

N-particle test functions act on a configuration V of shape (N, d).  Their
``value`` also accepts a batch (..., N, d), which the quadrature of the
Boltzmann generator relies on; ``grad`` returns (N, d) and ``hess`` the full
Hessian reshaped to (N, d, N, d).
"""
from __future__ import annotations

import numpy as np


def _sq(v):
    return np.einsum("...a,...a->...", v, v)


class Observable:
    """Smooth one-particle function v -> R."""

    def value(self, v):
        raise NotImplementedError

    def grad(self, v):
        raise NotImplementedError

    def hess(self, v):
        raise NotImplementedError

    def __call__(self, v):
        return self.value(v)


class Constant(Observable):
    def __init__(self, c=1.0):
        self.c = float(c)

    def value(self, v):
        return np.full(np.shape(v)[:-1], self.c)

    def grad(self, v):
        return np.zeros(np.shape(v))

    def hess(self, v):
        s = np.shape(v)
        return np.zeros(s + (s[-1],))


class Coordinate(Observable):
    """v -> v_alpha."""

    def __init__(self, alpha):
        self.alpha = alpha

    def value(self, v):
        return np.asarray(v, float)[..., self.alpha]

    def grad(self, v):
        g = np.zeros(np.shape(v))
        g[..., self.alpha] = 1.0
        return g

    def hess(self, v):
        s = np.shape(v)
        return np.zeros(s + (s[-1],))


class Speed2(Observable):
    """v -> |v|^2."""

    def value(self, v):
        return _sq(np.asarray(v, float))

    def grad(self, v):
        return 2.0 * np.asarray(v, float)

    def hess(self, v):
        s = np.shape(v)
        return np.broadcast_to(2.0 * np.eye(s[-1]), s + (s[-1],)).copy()


class CoordProduct(Observable):
    """v -> v_alpha v_beta."""

    def __init__(self, alpha, beta):
        self.alpha, self.beta = alpha, beta

    def value(self, v):
        v = np.asarray(v, float)
        return v[..., self.alpha] * v[..., self.beta]

    def grad(self, v):
        v = np.asarray(v, float)
        g = np.zeros(v.shape)
        g[..., self.alpha] += v[..., self.beta]
        g[..., self.beta] += v[..., self.alpha]
        return g

    def hess(self, v):
        s = np.shape(v)
        h = np.zeros((s[-1], s[-1]))
        h[self.alpha, self.beta] += 1.0
        h[self.beta, self.alpha] += 1.0
        return np.broadcast_to(h, s + (s[-1],)).copy()


class GaussianBump(Observable):
    """v -> exp(-|v - center|^2 / (2 width^2))."""

    def __init__(self, center, width=1.0):
        self.center = np.asarray(center, dtype=float)
        self.width = float(width)

    def value(self, v):
        y = np.asarray(v, float) - self.center
        return np.exp(-_sq(y) / (2 * self.width**2))

    def grad(self, v):
        y = np.asarray(v, float) - self.center
        return -(y / self.width**2) * self.value(v)[..., None]

    def hess(self, v):
        y = np.asarray(v, float) - self.center
        w2 = self.width**2
        eye = np.eye(y.shape[-1])
        outer = y[..., :, None] * y[..., None, :]
        return (outer / w2**2 - eye / w2) * self.value(v)[..., None, None]


class DampedPoly(Observable):
    """v -> v_alpha v_beta exp(-|v|^2 / scale)."""

    def __init__(self, alpha, beta, scale=4.0):
        self.alpha, self.beta, self.scale = alpha, beta, float(scale)
        self._p = CoordProduct(alpha, beta)

    def _e(self, v):
        return np.exp(-_sq(np.asarray(v, float)) / self.scale)

    def value(self, v):
        return self._p.value(v) * self._e(v)

    def grad(self, v):
        v = np.asarray(v, float)
        e = self._e(v)[..., None]
        return (self._p.grad(v) - (2.0 / self.scale) * v * self._p.value(v)[..., None]) * e

    def hess(self, v):
        v = np.asarray(v, float)
        c = 2.0 / self.scale
        p, gp, hp = self._p.value(v), self._p.grad(v), self._p.hess(v)
        e = self._e(v)[..., None, None]
        ge = -c * v  # grad of the exponent
        eye = np.eye(v.shape[-1])
        outer = lambda a, b: a[..., :, None] * b[..., None, :]
        h = hp + outer(gp, ge) + outer(ge, gp) + p[..., None, None] * (outer(ge, ge) - c * eye)
        return h * e


class LinearCombination(Observable):
    """sum_k c_k obs_k."""

    def __init__(self, coeffs, observables):
        self.coeffs = [float(c) for c in coeffs]
        self.observables = list(observables)

    def _sum(self, method, v):
        out = None
        for c, ob in zip(self.coeffs, self.observables):
            term = c * getattr(ob, method)(v)
            out = term if out is None else out + term
        return out

    def value(self, v):
        return self._sum("value", v)

    def grad(self, v):
        return self._sum("grad", v)

    def hess(self, v):
        return self._sum("hess", v)


OBSERVABLES = {
    "speed2": lambda d: Speed2(),
    "v1": lambda d: Coordinate(0),
    "v1sq": lambda d: CoordProduct(0, 0),
    "bump": lambda d: GaussianBump(np.zeros(d)),
    "bump_offset": lambda d: GaussianBump(np.r_[0.5, np.zeros(d - 1)]),
    "damped12": lambda d: DampedPoly(0, 1),
}


def make_observable(name: str, d: int = 3) -> Observable:
    try:
        return OBSERVABLES[name](d)
    except KeyError:
        raise ValueError(f"unknown observable {name!r}; choose from {sorted(OBSERVABLES)}") from None


# ---------------------------------------------------------------------------
# N-particle test functions


class TestFunction:
    """phi: R^{dN} -> R with gradient blocks grad_i and Hessian blocks hess_ij."""

    __test__ = False  # not a pytest class
    smooth_order = 3

    def value(self, V):
        raise NotImplementedError

    def grad(self, V):
        raise NotImplementedError

    def hess(self, V):
        raise NotImplementedError

    def grad_i(self, V, i):
        return self.grad(V)[i]

    def hess_ij(self, V, i, j):
        return self.hess(V)[i, :, j, :]

    def __call__(self, V):
        return self.value(V)


class Additive(TestFunction):
    """phi(V) = sum_i psi(v_i)."""

    def __init__(self, obs: Observable):
        self.obs = obs

    def value(self, V):
        return self.obs.value(np.asarray(V, float)).sum(axis=-1)

    def grad(self, V):
        return self.obs.grad(np.asarray(V, float))

    def hess(self, V):
        V = np.asarray(V, float)
        n, d = V.shape
        h = np.zeros((n, d, n, d))
        blocks = self.obs.hess(V)
        idx = np.arange(n)
        h[idx, :, idx, :] = blocks
        return h


def momentum_fn(alpha: int) -> Additive:
    return Additive(Coordinate(alpha))


def energy_fn() -> Additive:
    return Additive(Speed2())


class RadialOfEnergy(TestFunction):
    """phi(V) = psi(|V|^2) for a scalar psi with derivatives dpsi, ddpsi."""

    smooth_order = 2

    def __init__(self, psi, dpsi, ddpsi):
        self.psi, self.dpsi, self.ddpsi = psi, dpsi, ddpsi

    def _x(self, V):
        return np.einsum("...ia,...ia->...", V, V)

    def value(self, V):
        return self.psi(self._x(np.asarray(V, float)))

    def grad(self, V):
        V = np.asarray(V, float)
        return 2.0 * self.dpsi(self._x(V)) * V

    def hess(self, V):
        V = np.asarray(V, float)
        n, d = V.shape
        x = self._x(V)
        h = 4.0 * self.ddpsi(x) * np.einsum("ia,jb->iajb", V, V)
        h += 2.0 * self.dpsi(x) * np.eye(n * d).reshape(n, d, n, d)
        return h


def sine_of_energy(scale=1.0) -> RadialOfEnergy:
    """psi(x) = sin(x / scale)."""
    return RadialOfEnergy(
        lambda x: np.sin(x / scale),
        lambda x: np.cos(x / scale) / scale,
        lambda x: -np.sin(x / scale) / scale**2,
    )


def square_of_energy(scale=1.0) -> RadialOfEnergy:
    """psi(x) = (x / scale)^2."""
    return RadialOfEnergy(
        lambda x: (x / scale) ** 2,
        lambda x: 2.0 * x / scale**2,
        lambda x: np.full(np.shape(x), 2.0 / scale**2),
    )


class PairProduct(TestFunction):
    """phi(V) = v_{i,alpha} v_{j,beta} for particles i != j."""

    def __init__(self, i, j, alpha=0, beta=0):
        if i == j:
            raise ValueError("PairProduct needs distinct particles")
        self.i, self.j, self.alpha, self.beta = i, j, alpha, beta

    def value(self, V):
        V = np.asarray(V, float)
        return V[..., self.i, self.alpha] * V[..., self.j, self.beta]

    def grad(self, V):
        V = np.asarray(V, float)
        g = np.zeros(V.shape)
        g[self.i, self.alpha] = V[self.j, self.beta]
        g[self.j, self.beta] = V[self.i, self.alpha]
        return g

    def hess(self, V):
        n, d = np.shape(V)
        h = np.zeros((n, d, n, d))
        h[self.i, self.alpha, self.j, self.beta] = 1.0
        h[self.j, self.beta, self.i, self.alpha] = 1.0
        return h


class ProductOfSums(TestFunction):
    """phi(V) = (sum_i psi1(v_i)) (sum_j psi2(v_j)); quartic for quadratic psi."""

    def __init__(self, obs1: Observable, obs2: Observable):
        self.a, self.b = Additive(obs1), Additive(obs2)

    def value(self, V):
        return self.a.value(V) * self.b.value(V)

    def grad(self, V):
        return self.a.grad(V) * self.b.value(V) + self.b.grad(V) * self.a.value(V)

    def hess(self, V):
        ga, gb = self.a.grad(V), self.b.grad(V)
        cross = np.einsum("ia,jb->iajb", ga, gb)
        return self.a.hess(V) * self.b.value(V) + self.b.hess(V) * self.a.value(V) + cross + cross.transpose(2, 3, 0, 1)


def hessian_symmetry_defect(phi: TestFunction, V) -> float:
    """max |H[i,a,j,b] - H[j,b,i,a]|."""
    h = phi.hess(V)
    return float(np.max(np.abs(h - h.transpose(2, 3, 0, 1))))


def fd_grad(phi: TestFunction, V, h=1e-5):
    """Central finite-difference gradient, used as a test oracle."""
    V = np.array(V, dtype=float)
    g = np.zeros_like(V)
    for idx in np.ndindex(V.shape):
        e = np.zeros_like(V)
        e[idx] = h
        g[idx] = (phi.value(V + e) - phi.value(V - e)) / (2 * h)
    return g


def fd_hess(phi: TestFunction, V, h=1e-4):
    """Central finite-difference Hessian (N, d, N, d) from exact values."""
    V = np.array(V, dtype=float)
    n, d = V.shape
    m = n * d
    flat = V.ravel()
    f = lambda x: phi.value(x.reshape(n, d))
    H = np.zeros((m, m))
    f0 = f(flat)
    for p in range(m):
        ep = np.zeros(m)
        ep[p] = h
        H[p, p] = (f(flat + ep) - 2 * f0 + f(flat - ep)) / h**2
        for q in range(p + 1, m):
            eq = np.zeros(m)
            eq[q] = h
            val = (f(flat + ep + eq) - f(flat + ep - eq) - f(flat - ep + eq) + f(flat - ep - eq)) / (4 * h * h)
            H[p, q] = H[q, p] = val
    return H.reshape(n, d, n, d)
