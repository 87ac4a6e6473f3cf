"""N-particle Landau diffusion with antisymmetric pairwise Brownian coupling.

For every unordered pair i < k an increment dZ ~ N(0, dt I) is drawn; particle
i receives sqrt(2/N) sigma(v_i - v_k) dZ and particle k the negation.  The
drift on particle i is (2/N) sum_k b(v_i - v_k) dt.  The generator of this
SDE is the Landau master generator G_L^N.

Pair noise is a pure function of (stream key, step, pair labels), so the pair
loop never stores an N x N array and trajectories are reproducible
realization by realization.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numba import njit

from . import _rng
from .core import ModelError, ModelParams, ParticleState, coeff_a, coeff_b
from .observables import TestFunction

BLOWUP = 1e100


class BlowUpError(RuntimeError):
    """Velocities left the representable range; dt is too large."""


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    t_end: float
    enforce_sphere: bool = True
    record_stride: int = 1

    def __post_init__(self):
        if not (self.dt > 0 and self.t_end >= self.dt):
            raise ModelError(f"need 0 < dt <= t_end, got dt={self.dt}, t_end={self.t_end}")
        if int(self.record_stride) != self.record_stride or self.record_stride < 1:
            raise ModelError("record_stride must be an integer >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass(frozen=True)
class NoiseStream:
    """Counter-based pair-noise stream of one realization."""

    key: int

    @classmethod
    def from_seed(cls, seed: int, realization: int = 0) -> "NoiseStream":
        return cls(_rng.stream_key(seed, realization))


@dataclass
class TrajectoryRecord:
    snapshots: list
    log_times: np.ndarray
    log_momentum: np.ndarray
    log_energy: np.ndarray

    @property
    def times(self):
        return np.array([t for t, _ in self.snapshots])

    def max_energy_drift(self, energy):
        return float(np.max(np.abs(self.log_energy - energy)))

    def max_momentum(self, momentum=None):
        m = 0.0 if momentum is None else np.asarray(momentum)
        return float(np.max(np.linalg.norm(self.log_momentum - m, axis=1)))

    def to_csv(self, path):
        write_snapshots_csv(path, self.snapshots)


def _velocity_header(d):
    return ["vx", "vy", "vz"] if d == 3 else [f"v{a + 1}" for a in range(d)]


def write_snapshots_csv(path, snapshots):
    """Header ``t,particle,vx,vy,vz`` (``v1..vd`` when d != 3)."""
    d = snapshots[0][1].d
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "particle"] + _velocity_header(d))
        for t, st in snapshots:
            for i, v in enumerate(st.velocities):
                w.writerow([repr(float(t)), i] + [repr(float(x)) for x in v])


# ---------------------------------------------------------------------------
# jitted kernel


@njit(cache=True)
def _em_batch(V, keys, labels, step0, n_steps, dt, lam, noise_scale, project,
              energy, momentum, log):
    """Advance every realization V[r] by ``n_steps`` Euler-Maruyama steps in place.

    ``log`` has shape (R, n_steps, d + 1) holding (momentum, centred energy)
    after each step, or a zero-length second axis to disable logging.
    Returns the index of the first realization that blew up, or -1.
    """
    R, N, d = V.shape
    inc = np.zeros((N, d))
    g = np.zeros(d)
    z = np.zeros(d)
    cdrift = -2.0 * dt / N * lam * (d - 1)
    cnoise = noise_scale * np.sqrt(2.0 / N) * np.sqrt(lam) * np.sqrt(dt)
    use_noise = noise_scale != 0.0
    do_log = log.shape[1] > 0
    for r in range(R):
        for s in range(n_steps):
            skey = _rng.step_key(keys[r], step0 + s)
            inc[:, :] = 0.0
            for i in range(N - 1):
                for k in range(i + 1, N):
                    r2 = 0.0
                    for a in range(d):
                        z[a] = V[r, i, a] - V[r, k, a]
                        r2 += z[a] * z[a]
                    if r2 == 0.0:
                        continue
                    for a in range(d):
                        inc[i, a] += cdrift * z[a]
                        inc[k, a] -= cdrift * z[a]
                    if use_noise:
                        li = labels[i]
                        lk = labels[k]
                        if li < lk:
                            h = _rng.pair_key(skey, li, lk)
                            sgn = 1.0
                        else:
                            h = _rng.pair_key(skey, lk, li)
                            sgn = -1.0
                        _rng.fill_normals(h, g)
                        zg = 0.0
                        for a in range(d):
                            zg += z[a] * g[a]
                        rz = np.sqrt(r2)
                        # sigma(z) g = sqrt(lam) |z| (g - z (z.g)/|z|^2)
                        c = sgn * cnoise * rz
                        q = zg / r2
                        for a in range(d):
                            w = c * (g[a] - z[a] * q)
                            inc[i, a] += w
                            inc[k, a] -= w
            vmax = 0.0
            for i in range(N):
                for a in range(d):
                    V[r, i, a] += inc[i, a]
                    av = abs(V[r, i, a])
                    if not av < BLOWUP:  # also catches NaN
                        vmax = np.inf
            if vmax == np.inf:
                return r
            if project or do_log:
                mean = np.zeros(d)
                for i in range(N):
                    for a in range(d):
                        mean[a] += V[r, i, a]
                for a in range(d):
                    mean[a] /= N
                e = 0.0
                for i in range(N):
                    for a in range(d):
                        c0 = V[r, i, a] - mean[a]
                        e += c0 * c0
                e /= N
                if project and e > 1e-300:
                    scale = np.sqrt(energy / e)
                    for i in range(N):
                        for a in range(d):
                            V[r, i, a] = momentum[a] + scale * (V[r, i, a] - mean[a])
                    if do_log:
                        for a in range(d):
                            mean[a] = 0.0
                        for i in range(N):
                            for a in range(d):
                                mean[a] += V[r, i, a]
                        for a in range(d):
                            mean[a] /= N
                        e = 0.0
                        for i in range(N):
                            for a in range(d):
                                c0 = V[r, i, a] - mean[a]
                                e += c0 * c0
                        e /= N
                if do_log:
                    for a in range(d):
                        log[r, s, a] = mean[a]
                    log[r, s, d] = e
    return -1


_NO_LOG = np.zeros((0, 0, 0))


def advance(V, keys, params: ModelParams, dt, n_steps, step0=0, project=False,
            energy=None, momentum=None, labels=None, noise_scale=1.0, log=None):
    """Advance a batch V (R, N, d) in place; raises BlowUpError on overflow.

    ``energy``/``momentum`` are the projection targets (per batch); by default
    the first realization's current values.
    """
    if V.ndim != 3 or V.dtype != np.float64 or not V.flags.c_contiguous:
        raise ModelError("V must be a C-contiguous float64 array of shape (R, N, d)")
    R, N, d = V.shape
    keys = np.ascontiguousarray(keys, dtype=np.uint64)
    if keys.shape != (R,):
        raise ModelError("need one stream key per realization")
    labels = np.arange(N, dtype=np.int64) if labels is None else np.asarray(labels, np.int64)
    if momentum is None:
        momentum = V[0].mean(axis=0)
    if energy is None:
        c = V[0] - V[0].mean(axis=0)
        energy = float(np.einsum("ia,ia->", c, c) / N)
    momentum = np.asarray(momentum, dtype=np.float64)
    log = _NO_LOG if log is None else log
    bad = _em_batch(V, keys, labels, int(step0), int(n_steps), float(dt), float(params.lam),
                    float(noise_scale), bool(project), float(energy), momentum, log)
    if bad >= 0:
        raise BlowUpError(f"|v| exceeded {BLOWUP:g} in realization {bad}; reduce dt (currently {dt})")
    return V


def em_step(state: ParticleState, dt: float, params: ModelParams,
            noise: Optional[NoiseStream] = None, step: int = 0,
            labels=None) -> ParticleState:
    """One Euler-Maruyama step; ``noise=None`` gives the pure drift step."""
    if not dt > 0:
        raise ModelError("dt must be > 0")
    V = np.array(state.velocities, dtype=np.float64)[None].copy()
    key = np.array([0 if noise is None else noise.key], dtype=np.uint64)
    advance(V, key, params, dt, 1, step0=step, labels=labels,
            noise_scale=0.0 if noise is None else 1.0)
    return ParticleState(V[0], state.time + dt)


def simulate(v0: ParticleState, cfg: IntegratorConfig, params: ModelParams, seed: int,
             realization: int = 0, projection_target: Optional[tuple] = None,
             labels=None) -> TrajectoryRecord:
    """Single trajectory with per-step conserved-quantity log.

    With ``cfg.enforce_sphere`` the state is projected after each step onto
    the sphere of the initial centred energy and momentum (or onto
    ``projection_target = (E, M)``).
    """
    if not np.all(np.isfinite(v0.velocities)):
        raise ModelError("v0 must be finite")
    V = np.array(v0.velocities)[None].copy()
    keys = _rng.stream_keys(seed, [realization])
    if projection_target is None:
        energy, momentum = v0.energy(), v0.momentum()
    else:
        energy, momentum = projection_target[0], np.asarray(projection_target[1], float)
    n = cfg.n_steps
    stride = cfg.record_stride
    d = v0.d
    log = np.zeros((1, n, d + 1))
    snaps = [(v0.time, v0)]
    done = 0
    while done < n:
        k = min(stride, n - done)
        chunk = np.zeros((1, k, d + 1))
        advance(V, keys, params, cfg.dt, k, step0=done, project=cfg.enforce_sphere,
                energy=energy, momentum=momentum, labels=labels, log=chunk)
        log[:, done:done + k] = chunk
        done += k
        snaps.append((v0.time + done * cfg.dt, ParticleState(V[0].copy(), v0.time + done * cfg.dt)))
    times = v0.time + cfg.dt * np.arange(1, n + 1)
    return TrajectoryRecord(snaps, times, log[0, :, :d], log[0, :, d])


def run_ensemble(V0, params: ModelParams, cfg: IntegratorConfig, seed: int, realizations=None,
                 observe: Optional[Callable] = None, record_times=None, energy=None,
                 momentum=None, keys=None):
    """Run R realizations from V0 (R, N, d), calling ``observe(t, V)`` at record times.

    Realization r uses stream (seed, realizations[r]).  Returns (times,
    observations, final V).  ``record_times`` overrides ``cfg.record_stride``
    and must be multiples of dt.
    """
    V = np.array(V0, dtype=np.float64, order="C")
    if V.ndim == 2:
        V = V[None].copy()
    R = V.shape[0]
    if keys is None:
        realizations = range(R) if realizations is None else realizations
        keys = _rng.stream_keys(seed, realizations)
    if cfg.enforce_sphere and energy is None:
        c = V - V.mean(axis=1, keepdims=True)
        energies = np.einsum("ria,ria->r", c, c) / V.shape[1]
        moms = V.mean(axis=1)
    n = cfg.n_steps
    if record_times is None:
        steps = sorted(set(list(range(0, n, cfg.record_stride)) + [n]))
    else:
        steps = sorted(set(int(round(t / cfg.dt)) for t in record_times))
        if steps and steps[-1] > n:
            raise ModelError("record time beyond t_end")
    times, obs = [], []
    done = 0
    for target in steps:
        if target > done:
            if cfg.enforce_sphere and energy is None:
                # per-realization targets: each stays on its own initial sphere
                for r in range(R):
                    sub = V[r:r + 1]
                    advance(sub, keys[r:r + 1], params, cfg.dt, target - done, step0=done, project=True,
                            energy=energies[r], momentum=moms[r])
            else:
                advance(V, keys, params, cfg.dt, target - done, step0=done, project=cfg.enforce_sphere,
                        energy=energy, momentum=momentum)
            done = target
        t = round(done * cfg.dt, 12)
        times.append(t)
        if observe is not None:
            obs.append(observe(t, V))
    return np.array(times), obs, V


# ---------------------------------------------------------------------------
# generator


def generator_landau(phi: TestFunction, state, params: ModelParams) -> float:
    """(G_L^N phi)(V) by the exact double sum over ordered pairs."""
    V = state.velocities if isinstance(state, ParticleState) else np.asarray(state, float)
    n = V.shape[0]
    g = phi.grad(V)
    H = phi.hess(V)
    Z = V[:, None, :] - V[None, :, :]
    A = coeff_a(Z, params)
    B = coeff_b(Z, params)
    idx = np.arange(n)
    Hd = H[idx, :, idx, :]  # (N, d, d) diagonal blocks
    Hij = np.einsum("iajb->ijab", H)
    Hji = np.einsum("jaib->ijab", H)
    M = Hd[:, None] + Hd[None, :] - Hij - Hji
    # exactly rounded sum: conserved functions cancel between large terms
    terms = np.concatenate([(B * (g[:, None, :] - g[None, :, :])).ravel() / n, (A * M).ravel() / (2 * n)])
    return math.fsum(terms)


def weak_generator_check(phi: TestFunction, state: ParticleState, dt: float, n_samples: int,
                         params: ModelParams, seed: int, antithetic: bool = True):
    """One-step Dynkin estimate of (G_L^N phi)(V): mean and standard error of
    (phi(V_dt) - phi(V)) / dt over independent steps.

    With ``antithetic`` each sample averages the steps driven by +dZ and -dZ,
    which removes the O(dt^{-1/2}) first-order noise term.
    """
    V0 = np.array(state.velocities)
    keys = _rng.stream_keys(seed, range(n_samples))
    base = np.broadcast_to(V0, (n_samples,) + V0.shape).copy()
    Vp = advance(base.copy(), keys, params, dt, 1)
    f0 = float(phi.value(V0))
    vals = (phi.value(Vp) - f0) / dt
    if antithetic:
        Vm = advance(base, keys, params, dt, 1, noise_scale=-1.0)
        vals = 0.5 * (vals + (phi.value(Vm) - f0) / dt)
    vals = np.asarray(vals, float)
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(n_samples))
