"""Kac-type Boltzmann jump process in d = 3 with grazing kernels.

A collision of the pair (i, j) replaces (v_i, v_j) by

    v_i' = (v_i + v_j)/2 + |v_i - v_j|/2 sigma,   v_j' = (v_i + v_j)/2 - |v_i - v_j|/2 sigma,

with sigma at polar angle theta from (v_i - v_j)/|v_i - v_j|.  Each
unordered pair collides at rate total_mass / N where total_mass is
2 pi int zeta(theta) dtheta, which makes the process generator

    (G_B^N phi)(V) = 1/(2N) sum_{i != j} int dphi int dtheta zeta(theta) (phi(V'_ij) - phi(V)).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numba import njit
from scipy import integrate

from . import _rng
from .core import ModelError, ModelParams, ParticleState
from .landau import TrajectoryRecord, generator_landau
from .observables import TestFunction

MAX_EXPECTED_EVENTS = 1e9
_THETA_MAX = np.pi / 2


@dataclass(frozen=True)
class GrazingKernel:
    """Angular kernel zeta_eps.

    The default family is zeta_eps = 24 lam / (pi eps^3) on (0, eps].  A
    custom ``zeta`` (vectorised callable on (0, pi/2]) replaces it; then
    ``eps`` is only the upper end of its support.
    """

    eps: float
    lam: float = 1.0
    zeta: Optional[Callable] = None

    def __post_init__(self):
        if not 0 < self.eps <= _THETA_MAX:
            raise ModelError(f"eps must lie in (0, pi/2], got {self.eps}")
        if self.lam < 0:
            raise ModelError("lam must be >= 0")

    @property
    def is_default(self) -> bool:
        return self.zeta is None

    def density(self, theta):
        theta = np.asarray(theta, float)
        if self.zeta is not None:
            return np.where((theta > 0) & (theta <= self.eps), self.zeta(theta), 0.0)
        return np.where((theta > 0) & (theta <= self.eps), 24 * self.lam / (np.pi * self.eps**3), 0.0)

    @property
    def angular_mass(self) -> float:
        """int_0^{pi/2} zeta(theta) dtheta."""
        if self.zeta is None:
            return 24 * self.lam / (np.pi * self.eps**2)
        return float(integrate.quad(self.density, 0, self.eps, limit=200)[0])

    @property
    def total_mass(self) -> float:
        return 2 * np.pi * self.angular_mass

    def theta_table(self, n=4097):
        """Grid and CDF of the normalised theta-law (inverse-CDF sampling of custom kernels)."""
        th = np.linspace(0, self.eps, n)
        dens = self.density(th)
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(th))])
        if cdf[-1] <= 0:
            return th, np.linspace(0, 1, n)
        return th, cdf / cdf[-1]

    def sample_theta(self, u):
        """Map uniforms u in (0, 1] to theta with density zeta / int zeta."""
        u = np.asarray(u, float)
        if self.zeta is None:
            return self.eps * u
        th, cdf = self.theta_table()
        return np.interp(u, cdf, th)

    @classmethod
    def from_params(cls, eps: float, params: ModelParams) -> "GrazingKernel":
        return cls(eps, params.lam)


def lambda_eps(kernel: GrazingKernel) -> float:
    """(pi/2) int_0^{pi/2} sin^2(theta/2) zeta(theta) dtheta by adaptive quadrature."""
    f = lambda th: np.sin(th / 2) ** 2 * kernel.density(th)
    return float(np.pi / 2 * integrate.quad(f, 0, kernel.eps, limit=200, epsabs=1e-14, epsrel=1e-12)[0])


def lambda_eps_closed_form(kernel: GrazingKernel) -> float:
    """Default family only: (6 lam / eps^3)(eps - sin eps)."""
    if not kernel.is_default:
        raise ModelError("closed form exists for the default family only")
    e = kernel.eps
    return 6 * kernel.lam / e**3 * (e - np.sin(e))


@dataclass(frozen=True)
class CollisionEvent:
    time: float
    i: int
    j: int
    theta: float
    phi: float
    sigma: np.ndarray


def collide(v_i, v_j, sigma):
    v_i = np.asarray(v_i, float)
    v_j = np.asarray(v_j, float)
    sigma = np.asarray(sigma, float)
    if abs(np.linalg.norm(sigma) - 1.0) > 1e-12:
        raise ModelError(f"sigma must be a unit vector, |sigma| = {np.linalg.norm(sigma)!r}")
    mid = 0.5 * (v_i + v_j)
    half = 0.5 * np.linalg.norm(v_i - v_j)
    return mid + half * sigma, mid - half * sigma


def collision_frame(u):
    """Orthonormal (h, i) completing the unit vector u; Gram-Schmidt from the
    coordinate axis where |u| has its smallest component."""
    u = np.asarray(u, float)
    e = np.zeros(3)
    e[np.argmin(np.abs(u))] = 1.0
    h = e - (e @ u) * u
    h /= np.linalg.norm(h)
    return h, np.cross(u, h)


def sigma_from_angles(u, theta, phi):
    h, i = collision_frame(u)
    theta = np.asarray(theta, float)[..., None]
    phi = np.asarray(phi, float)[..., None]
    return u * np.cos(theta) + (np.cos(phi) * h + np.sin(phi) * i) * np.sin(theta)


def sample_post_collision(v_i, v_j, kernel: GrazingKernel, rng: np.random.Generator, time=0.0, pair=(0, 1)):
    v_i = np.asarray(v_i, float)
    v_j = np.asarray(v_j, float)
    z = v_i - v_j
    r = np.linalg.norm(z)
    if r == 0.0:
        raise ModelError("coincident velocities: the collision frame is undefined")
    theta = float(kernel.sample_theta(1.0 - rng.random()))
    phi = float(2 * np.pi * rng.random())
    sigma = sigma_from_angles(z / r, theta, phi)
    sigma /= np.linalg.norm(sigma)
    vi2, vj2 = collide(v_i, v_j, sigma)
    return vi2, vj2, CollisionEvent(time, pair[0], pair[1], theta, phi, sigma)


# ---------------------------------------------------------------------------
# jump process


@njit(cache=True)
def _kac_run(V, key, ev0, t_last, t_stop, max_events, rate, eps, default_theta,
             th_tab, cdf_tab, log_stride, ev_log, cons_log):
    """Run events from index ev0 until the next event time exceeds t_stop or
    ``max_events`` events have happened.  Returns (events done, time of the
    last event, conservation-log rows written)."""
    N = V.shape[0]
    n_done = 0
    n_cons = 0
    if rate <= 0.0:
        return 0, t_last, 0
    u = np.zeros(3)
    hf = np.zeros(3)
    ii = np.zeros(3)
    sig = np.zeros(3)
    while n_done < max_events:
        ev = ev0 + n_done
        hkey = _rng.step_key(key, ev)
        t_next = t_last - np.log(_rng.uniform(hkey, 0)) / rate
        if t_next > t_stop:
            break
        i = min(int(_rng.uniform(hkey, 1) * N - 1e-12), N - 1)
        i = max(i, 0)
        j = min(int(_rng.uniform(hkey, 2) * (N - 1) - 1e-12), N - 2)
        j = max(j, 0)
        if j >= i:
            j += 1
        ut = _rng.uniform(hkey, 3)
        if default_theta:
            theta = eps * ut
        else:
            theta = np.interp(ut, cdf_tab, th_tab)
        ph = 2.0 * np.pi * (1.0 - _rng.uniform(hkey, 4))
        r2 = 0.0
        for a in range(3):
            u[a] = V[i, a] - V[j, a]
            r2 += u[a] * u[a]
        rr = np.sqrt(r2)
        if rr > 0.0:
            for a in range(3):
                u[a] /= rr
        else:
            u[0] = 1.0
            u[1] = 0.0
            u[2] = 0.0
        m = 0
        for a in range(1, 3):
            if abs(u[a]) < abs(u[m]):
                m = a
        for a in range(3):
            hf[a] = -u[m] * u[a]
        hf[m] += 1.0
        hn = np.sqrt(hf[0] ** 2 + hf[1] ** 2 + hf[2] ** 2)
        for a in range(3):
            hf[a] /= hn
        ii[0] = u[1] * hf[2] - u[2] * hf[1]
        ii[1] = u[2] * hf[0] - u[0] * hf[2]
        ii[2] = u[0] * hf[1] - u[1] * hf[0]
        ct = np.cos(theta)
        st = np.sin(theta)
        cp = np.cos(ph)
        sp = np.sin(ph)
        for a in range(3):
            sig[a] = u[a] * ct + (cp * hf[a] + sp * ii[a]) * st
        half = 0.5 * rr
        for a in range(3):
            mid = 0.5 * (V[i, a] + V[j, a])
            V[i, a] = mid + half * sig[a]
            V[j, a] = mid - half * sig[a]
        if ev_log.shape[0] > 0:
            ev_log[n_done, 0] = t_next
            ev_log[n_done, 1] = i
            ev_log[n_done, 2] = j
            ev_log[n_done, 3] = theta
            ev_log[n_done, 4] = ph
        t_last = t_next
        n_done += 1
        if cons_log.shape[0] > 0 and (ev % log_stride) == 0:
            for a in range(3):
                s = 0.0
                for p in range(N):
                    s += V[p, a]
                cons_log[n_cons, a] = s / N
            e = 0.0
            for p in range(N):
                for a in range(3):
                    c0 = V[p, a] - cons_log[n_cons, a]
                    e += c0 * c0
            cons_log[n_cons, 3] = e / N
            cons_log[n_cons, 4] = t_next
            n_cons += 1
    return n_done, t_last, n_cons


@dataclass
class KacResult:
    record: TrajectoryRecord
    n_events: int
    events: Optional[np.ndarray] = None  # rows (t, i, j, theta, phi)

    def events_to_csv(self, path):
        write_events_csv(path, self.events)


def write_events_csv(path, events):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "i", "j", "theta", "phi"])
        for t, i, j, th, ph in events:
            w.writerow([repr(float(t)), int(i), int(j), repr(float(th)), repr(float(ph))])


def expected_events(n: int, t_end: float, kernel: GrazingKernel) -> float:
    """Mean event count on [0, t_end]: global rate (N - 1)/2 * total_mass."""
    return t_end * (n - 1) / 2 * kernel.total_mass


def simulate_kac(v0: ParticleState, t_end: float, kernel: GrazingKernel, seed: int, realization: int = 0,
                 record_times=None, max_events: Optional[int] = None, log_events: bool = False,
                 log_stride: int = 1, chunk: int = 100_000) -> KacResult:
    """Event-driven simulation on [0, t_end] (stopping early after ``max_events``).

    Snapshots are taken at ``record_times`` (default: start and end).  The
    conservation log holds (momentum, centred energy) after every
    ``log_stride``-th event.
    """
    if v0.d != 3:
        raise ModelError("the Kac process is implemented in d = 3 only")
    n = v0.n
    rate = (n - 1) / 2 * kernel.total_mass
    if max_events is None and rate * t_end > MAX_EXPECTED_EVENTS:
        raise ModelError(f"expected {rate * t_end:.3g} events exceeds {MAX_EXPECTED_EVENTS:g}; increase eps")
    key = np.uint64(_rng.stream_key(seed, realization))
    th, cdf = kernel.theta_table() if not kernel.is_default else (np.zeros(2), np.array([0.0, 1.0]))
    V = np.array(v0.velocities, dtype=np.float64, order="C")
    targets = sorted(set([float(t) for t in (record_times or [])] + [float(t_end)]))
    snaps = [(v0.time, v0)]
    ev_done = 0
    t_last = 0.0
    events, cons = [], []
    budget = np.inf if max_events is None else int(max_events)
    for target in targets:
        while ev_done < budget:
            k = int(min(chunk, budget - ev_done))
            ev_log = np.zeros((k if log_events else 0, 5))
            cons_log = np.zeros((k // log_stride + 1, 5))
            done, t_last, nc = _kac_run(V, key, ev_done, t_last, target, k, rate, kernel.eps,
                                        kernel.is_default, th, cdf, log_stride, ev_log, cons_log)
            if log_events:
                events.append(ev_log[:done])
            cons.append(cons_log[:nc])
            ev_done += done
            if done < k:
                break
        t_snap = target if ev_done < budget else t_last
        snaps.append((v0.time + t_snap, ParticleState(V.copy(), v0.time + t_snap)))
        if ev_done >= budget:
            break
    cons = np.concatenate(cons) if cons else np.zeros((0, 5))
    record = TrajectoryRecord(snaps, v0.time + cons[:, 4], cons[:, :3], cons[:, 3])
    return KacResult(record, ev_done, np.concatenate(events) if log_events and events else None)


def kac_ensemble(V0, t_end: float, kernel: GrazingKernel, seed: int, realizations=None) -> np.ndarray:
    """Final states (R, N, 3) of independent runs; run r uses stream (seed, realizations[r])."""
    V0 = np.asarray(V0, float)
    realizations = range(V0.shape[0]) if realizations is None else realizations
    out = np.empty_like(V0)
    for k, r in enumerate(realizations):
        res = simulate_kac(ParticleState(V0[k]), t_end, kernel, seed, int(r), log_stride=1 << 40)
        out[k] = res.record.snapshots[-1][1].velocities
    return out


# ---------------------------------------------------------------------------
# generator by quadrature


def _quadrature(kernel: GrazingKernel, n_theta: int, n_phi: int):
    x, w = np.polynomial.legendre.leggauss(n_theta)
    theta = 0.5 * kernel.eps * (x + 1)
    wt = 0.5 * kernel.eps * w * kernel.density(theta)
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    wp = np.full(n_phi, 2 * np.pi / n_phi)
    T, P = np.meshgrid(theta, phi, indexing="ij")
    W = wt[:, None] * wp[None, :]
    return T.ravel(), P.ravel(), W.ravel()


def generator_boltzmann(phi: TestFunction, state, kernel: GrazingKernel, n_theta: int = 64,
                        n_phi: int = 64) -> float:
    """(G_B^N phi)(V) by Gauss-Legendre (theta) x trapezoid (phi) quadrature.

    The ordered pairs (i, j) and (j, i) contribute equally, so the sum runs
    over unordered pairs with weight 1/N.
    """
    V = state.velocities if isinstance(state, ParticleState) else np.asarray(state, float)
    n = V.shape[0]
    if V.shape[1] != 3:
        raise ModelError("generator_boltzmann is implemented in d = 3 only")
    T, P, W = _quadrature(kernel, n_theta, n_phi)
    base = float(phi.value(V))
    total = 0.0
    for i in range(n - 1):
        for j in range(i + 1, n):
            z = V[i] - V[j]
            r = np.linalg.norm(z)
            if r == 0.0:
                continue
            sig = sigma_from_angles(z / r, T, P)
            mid = 0.5 * (V[i] + V[j])
            batch = np.broadcast_to(V, (T.size, n, 3)).copy()
            batch[:, i] = mid + 0.5 * r * sig
            batch[:, j] = mid - 0.5 * r * sig
            total += float(W @ (phi.value(batch) - base))
    return total / n


@dataclass
class GrazingGap:
    eps: np.ndarray
    gap: np.ndarray
    landau_value: float
    boltzmann_values: np.ndarray
    slope: float
    exact_zero: bool

    def rows(self):
        return list(zip(self.eps.tolist(), self.gap.tolist()))


def grazing_gap(phi: TestFunction, state, eps_list, lam: float = 1.0, n_theta: int = 64,
                n_phi: int = 64, zero_tol: float = 1e-8) -> GrazingGap:
    """|G_B^{N,eps} phi - G_L^N phi| along ``eps_list`` with its log-log slope."""
    V = state.velocities if isinstance(state, ParticleState) else np.asarray(state, float)
    params = ModelParams(d=3, lam=lam, energy=0.0)
    gl = generator_landau(phi, V, params)
    eps = np.asarray(sorted(eps_list, reverse=True), float)
    gb = np.array([generator_boltzmann(phi, V, GrazingKernel(e, lam), n_theta, n_phi) for e in eps])
    gap = np.abs(gb - gl)
    scale = max(1.0, abs(gl), float(np.abs(gb).max()))
    exact_zero = bool(np.all(gap <= zero_tol * scale))
    slope = np.nan if exact_zero else float(np.polyfit(np.log(eps), np.log(gap), 1)[0])
    return GrazingGap(eps, gap, gl, gb, slope, exact_zero)
