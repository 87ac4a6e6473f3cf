"""Model parameters, Landau coefficients for Maxwellian molecules, particle
states, empirical measures and weight functions."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ModelError(ValueError):
    """Invalid model parameters or particle configuration."""


@dataclass(frozen=True)
class ModelParams:
    """Dimension ``d``, Landau constant ``lam``, energy and momentum.

    ``energy`` is the per-particle centred energy (1/N) sum |v_i - M|^2 and
    ``momentum`` the mean velocity M.
    """

    d: int = 3
    lam: float = 1.0
    energy: float = 3.0
    momentum: tuple = None

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 2:
            raise ModelError(f"d must be an integer >= 2, got {self.d}")
        if not self.lam > 0:
            raise ModelError(f"lam must be > 0, got {self.lam}")
        if self.energy < 0:
            raise ModelError(f"energy must be >= 0, got {self.energy}")
        m = (0.0,) * self.d if self.momentum is None else tuple(float(x) for x in self.momentum)
        if len(m) != self.d:
            raise ModelError(f"momentum has {len(m)} components, expected d={self.d}")
        object.__setattr__(self, "momentum", m)
        if self.energy < float(np.dot(m, m)):
            raise ModelError("energy must be >= |momentum|^2")

    @property
    def momentum_vec(self) -> np.ndarray:
        return np.asarray(self.momentum, dtype=float)

    def with_lam(self, lam: float) -> "ModelParams":
        return ModelParams(d=self.d, lam=lam, energy=self.energy, momentum=self.momentum)


@dataclass(frozen=True)
class ParticleState:
    """N velocities in R^d stored as an (N, d) float64 array, plus the clock."""

    velocities: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        v = np.array(self.velocities, dtype=np.float64)
        if v.ndim != 2:
            raise ModelError("velocities must be an (N, d) array")
        if v.shape[0] < 2:
            raise ModelError("need at least two particles")
        if not np.all(np.isfinite(v)):
            raise ModelError("velocities must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "velocities", v)

    @property
    def n(self) -> int:
        return self.velocities.shape[0]

    @property
    def d(self) -> int:
        return self.velocities.shape[1]

    def momentum(self) -> np.ndarray:
        return self.velocities.mean(axis=0)

    def energy(self) -> float:
        """Centred per-particle energy (1/N) sum |v_i - mean|^2."""
        c = self.velocities - self.velocities.mean(axis=0)
        return float(np.einsum("ij,ij->", c, c) / self.n)

    def second_moment(self) -> float:
        return float(np.einsum("ij,ij->", self.velocities, self.velocities) / self.n)


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Weighted atoms; uniform weights when ``weights`` is omitted."""

    atoms: np.ndarray
    weights: np.ndarray = None

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.atoms, dtype=float))
        if x.shape[0] < 1:
            raise ModelError("a measure needs at least one atom")
        w = np.full(x.shape[0], 1.0 / x.shape[0]) if self.weights is None else np.asarray(self.weights, float)
        if w.shape != (x.shape[0],) or np.any(w < 0):
            raise ModelError("weights must be nonnegative, one per atom")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ModelError(f"weights sum to {w.sum()!r}, not 1")
        object.__setattr__(self, "atoms", x)
        object.__setattr__(self, "weights", w)

    def integrate(self, fn) -> float:
        """<mu, fn> for a vectorised fn: (n, d) -> (n,)."""
        return float(self.weights @ np.asarray(fn(self.atoms), dtype=float))

    def moment_matrix(self) -> np.ndarray:
        return np.einsum("p,pa,pb->ab", self.weights, self.atoms, self.atoms)


@dataclass(frozen=True)
class WeightFunction:
    """Weight m(v): ``bracket`` gives <v>^power = (1+|v|^2)^(power/2), ``abs`` gives |v|^power."""

    kind: str = "bracket"
    power: float = 6.0

    def __post_init__(self):
        if self.kind not in ("bracket", "abs"):
            raise ModelError(f"unknown weight kind {self.kind!r}")

    def __call__(self, v):
        r2 = np.einsum("...a,...a->...", v, v)
        if self.kind == "bracket":
            return (1.0 + r2) ** (self.power / 2.0)
        return r2 ** (self.power / 2.0)


BRACKET6 = WeightFunction("bracket", 6)
BRACKET4 = WeightFunction("bracket", 4)
SPEED2 = WeightFunction("abs", 2)


def coeff_a(z, params: ModelParams) -> np.ndarray:
    """a(z) = lam (|z|^2 I - z z^T); broadcasts over leading axes of z."""
    z = np.asarray(z, dtype=float)
    r2 = np.einsum("...a,...a->...", z, z)
    eye = np.eye(z.shape[-1])
    return params.lam * (r2[..., None, None] * eye - z[..., :, None] * z[..., None, :])


def coeff_b(z, params: ModelParams) -> np.ndarray:
    """b(z) = div a(z) = -lam (d-1) z."""
    z = np.asarray(z, dtype=float)
    return -params.lam * (z.shape[-1] - 1) * z


def coeff_c(params: ModelParams) -> float:
    # general-d double divergence of a; equals -3 lam (d-1) only at d = 3
    return -params.lam * params.d * (params.d - 1)


def coeff_sigma(z, params: ModelParams) -> np.ndarray:
    """Symmetric square root of a(z): sqrt(lam) |z| Pi(z); zero at z = 0."""
    z = np.asarray(z, dtype=float)
    r2 = np.einsum("...a,...a->...", z, z)
    r = np.sqrt(r2)
    safe = np.where(r2 > 0, r2, 1.0)
    eye = np.eye(z.shape[-1])
    proj = eye - z[..., :, None] * z[..., None, :] / safe[..., None, None]
    return np.sqrt(params.lam) * r[..., None, None] * proj


def empirical(state: ParticleState) -> EmpiricalMeasure:
    return EmpiricalMeasure(np.array(state.velocities))


def weight_MN(state: ParticleState, m: WeightFunction) -> float:
    """N-particle weight (1/N) sum m(v_i)."""
    return float(np.mean(m(state.velocities)))
