"""Initial data on Boltzmann spheres S^N(E, M).

Exact conditioning of f0^{(x)N} onto the sphere is replaced by the
shift-and-rescale map applied to i.i.d. draws; the result lies exactly on
the sphere and is f0-chaotic.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ._rng import numpy_rng
from .core import ModelError, ModelParams, ParticleState

DEGENERATE_ENERGY = 1e-300


class DegenerateConfiguration(ModelError):
    """Centred energy too small to rescale onto the sphere."""


@dataclass(frozen=True)
class BoltzmannSphereSpec:
    n: int
    params: ModelParams

    def __post_init__(self):
        if self.n < 2:
            raise ModelError("sphere needs N >= 2")
        if not self.params.energy > 0:
            raise ModelError("sphere needs E > 0")

    @property
    def d(self):
        return self.params.d


@dataclass(frozen=True)
class DensitySpec:
    """One-particle law f0.

    kind ``gaussian``: a single component; ``mixture``: weighted Gaussian
    components given as (weight, mean, covariance) triples; ``custom``: a
    ``sampler(n, rng) -> (n, d)`` with optional ``log_density``.
    """

    kind: str
    components: tuple = ()
    sampler: Optional[Callable] = None
    log_density: Optional[Callable] = None
    d: int = 3

    def __post_init__(self):
        if self.kind not in ("gaussian", "mixture", "custom"):
            raise ModelError(f"unknown density kind {self.kind!r}")
        if self.kind == "custom" and self.sampler is None:
            raise ModelError("custom density needs a sampler")
        if self.kind != "custom":
            comps = []
            for w, m, c in self.components:
                m = np.asarray(m, float)
                c = np.asarray(c, float)
                if c.ndim < 2:
                    c = np.diag(np.broadcast_to(c, m.shape))
                comps.append((float(w), m, c))
            if not comps:
                raise ModelError("gaussian/mixture densities need components")
            total = sum(w for w, _, _ in comps)
            comps = tuple((w / total, m, c) for w, m, c in comps)
            object.__setattr__(self, "components", comps)
            object.__setattr__(self, "d", comps[0][1].shape[0])

    @classmethod
    def gaussian(cls, mean, covariance):
        return cls("gaussian", ((1.0, mean, covariance),))

    @classmethod
    def mixture(cls, components: Sequence):
        return cls("mixture", tuple(components))

    @classmethod
    def from_config(cls, cfg: dict, params: ModelParams) -> "DensitySpec":
        kind = cfg.get("kind", "gaussian")
        d = params.d
        if kind == "gaussian":
            cov = cfg.get("covariance")
            cov = np.eye(d) * params.energy / d if cov is None else np.asarray(cov, float)
            if cov.ndim == 1:
                cov = np.diag(cov)
            return cls.gaussian(cfg.get("mean", np.zeros(d)), cov)
        if kind == "bimodal":
            return bimodal(d, params.energy, cfg.get("separation", 0.8))
        if kind == "mixture":
            return cls.mixture([(c["weight"], c["mean"], c["covariance"]) for c in cfg["components"]])
        raise ModelError(f"density kind {kind!r} is not expressible in a config file")

    def mean(self) -> np.ndarray:
        if self.kind == "custom":
            raise ModelError("moments of a custom density are not known")
        return sum(w * m for w, m, _ in self.components)

    def covariance(self) -> np.ndarray:
        """Second moment matrix about the origin, int v v^T f."""
        if self.kind == "custom":
            raise ModelError("moments of a custom density are not known")
        return sum(w * (c + np.outer(m, m)) for w, m, c in self.components)

    def energy(self) -> float:
        return float(np.trace(self.covariance()))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "custom":
            return np.asarray(self.sampler(n, rng), float)
        weights = np.array([w for w, _, _ in self.components])
        labels = rng.choice(len(weights), size=n, p=weights) if len(weights) > 1 else np.zeros(n, int)
        out = np.empty((n, self.d))
        for k, (_, m, c) in enumerate(self.components):
            sel = labels == k
            out[sel] = rng.multivariate_normal(m, c, size=int(sel.sum()), method="cholesky")
        return out


def bimodal(d: int, energy: float, separation: float = 0.8) -> DensitySpec:
    """Symmetric two-bump mixture at +-m e1 with zero mean and total energy E.

    ``separation`` is the fraction of the energy carried by the bump offsets,
    m^2 = separation * E; the rest is isotropic spread.
    """
    if not 0 <= separation < 1:
        raise ModelError("separation must lie in [0, 1)")
    m = np.zeros(d)
    m[0] = np.sqrt(separation * energy)
    s2 = (1 - separation) * energy / d
    cov = s2 * np.eye(d)
    return DensitySpec.mixture([(0.5, m, cov), (0.5, -m, cov)])


def _project(v: np.ndarray, energy: float, momentum: np.ndarray) -> np.ndarray:
    """Shift-then-scale onto S^N(E, M) along the particle axis (-2)."""
    c = v - v.mean(axis=-2, keepdims=True)
    e = np.einsum("...ia,...ia->...", c, c) / v.shape[-2]
    if np.any(e < DEGENERATE_ENERGY):
        raise DegenerateConfiguration("centred energy is zero; all velocities coincide")
    return momentum + np.sqrt(energy / e)[..., None, None] * c


def project_to_sphere(state: ParticleState, spec: BoltzmannSphereSpec) -> ParticleState:
    v = _project(state.velocities, spec.params.energy, spec.params.momentum_vec)
    return ParticleState(v, state.time)


def project_array(V: np.ndarray, params: ModelParams) -> np.ndarray:
    """Projection of one configuration (N, d) or a batch (R, N, d)."""
    return _project(np.asarray(V, float), params.energy, params.momentum_vec)


def sample_uniform_sphere(spec: BoltzmannSphereSpec, seed: int, realization: int = 0) -> ParticleState:
    """Uniform law gamma^N on S^N(E, M): Gaussian draw followed by projection."""
    rng = numpy_rng(seed, realization)
    while True:
        try:
            return ParticleState(project_array(rng.standard_normal((spec.n, spec.d)), spec.params))
        except DegenerateConfiguration:  # probability zero
            continue


def sample_conditioned_tensor(f0: DensitySpec, spec: BoltzmannSphereSpec, seed: int,
                              realization: int = 0) -> ParticleState:
    """Surrogate for [f0^{(x)N}] restricted to S^N(E): i.i.d. draws, then projection."""
    if f0.d != spec.d:
        raise ModelError(f"density lives in R^{f0.d}, sphere in R^{spec.d}")
    rng = numpy_rng(seed, realization)
    return ParticleState(project_array(f0.sample(spec.n, rng), spec.params))


def sample_ensemble(spec: BoltzmannSphereSpec, seed: int, realizations, f0: DensitySpec = None) -> np.ndarray:
    """Stack of independent initial configurations, realization r using stream (seed, r)."""
    out = []
    for r in realizations:
        if f0 is None:
            out.append(sample_uniform_sphere(spec, seed, int(r)).velocities)
        else:
            out.append(sample_conditioned_tensor(f0, spec, seed, int(r)).velocities)
    return np.stack(out)
