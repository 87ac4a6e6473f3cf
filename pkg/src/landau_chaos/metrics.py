"""Distances between laws estimated from point clouds.

Characteristic functions use the convention f_hat(xi) = int exp(-i xi.v) f(dv);
moduli of differences do not depend on the sign choice.  Entropies follow
H(f) = int f log f.
"""
from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import optimize, spatial, special, stats
from scipy.special import logsumexp

from ._rng import numpy_rng
from .core import ModelError
from .limit import GaussianState

REPORT_HEADER = ["name", "value", "stderr", "n_x", "n_y", "params"]


class ConvergenceError(RuntimeError):
    pass


@dataclass
class MetricReport:
    name: str
    value: float
    stderr: float = float("nan")
    n_x: int = 0
    n_y: int = 0
    params: dict = field(default_factory=dict)

    def row(self):
        return [self.name, repr(float(self.value)), repr(float(self.stderr)), self.n_x, self.n_y,
                json.dumps(self.params, sort_keys=True, default=float)]

    def __float__(self):
        return float(self.value)


@dataclass(frozen=True)
class MetricConfig:
    xi_min: float = 0.25
    xi_max: float = 8.0
    n_xi: int = 2000
    s: int = 2
    k_nn: int = 1
    ot_mode: str = "exact"
    reg: Optional[float] = None
    n_boot: int = 200
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.xi_min < self.xi_max:
            raise ModelError("need 0 < xi_min < xi_max")
        if self.ot_mode not in ("exact", "entropic"):
            raise ModelError(f"unknown ot_mode {self.ot_mode!r}")
        if self.ot_mode == "entropic" and not (self.reg and self.reg > 0):
            raise ModelError("entropic transport needs reg > 0")

    def xi_grid(self, d: int) -> np.ndarray:
        return xi_grid(d, self.n_xi, self.xi_min, self.xi_max, self.seed)

    def echo(self):
        return {k: v for k, v in asdict(self).items()}


def xi_grid(d: int, n: int = 2000, xi_min: float = 0.25, xi_max: float = 8.0, seed: int = 0) -> np.ndarray:
    """Quasi-random frequencies: Halton directions (Gaussian-mapped) and
    log-uniform radii in [xi_min, xi_max]."""
    h = stats.qmc.Halton(d + 1, scramble=True, seed=seed).random(n)
    h = np.clip(h, 1e-12, 1 - 1e-12)
    dirs = stats.norm.ppf(h[:, :d])
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    r = xi_min * (xi_max / xi_min) ** h[:, d]
    return dirs * r[:, None]


# ---------------------------------------------------------------------------
# optimal transport


def _cost(X, Y, p):
    D = spatial.distance.cdist(X, Y)
    return D**p


def _check_clouds(X, Y):
    X = np.atleast_2d(np.asarray(X, float))
    Y = np.atleast_2d(np.asarray(Y, float))
    if X.shape != Y.shape:
        raise ModelError(f"point clouds must have equal size and dimension, got {X.shape} and {Y.shape}")
    return X, Y


def wasserstein_exact(X, Y, p: int = 2) -> float:
    """W_p between equal-size uniform clouds by exact assignment."""
    if p not in (1, 2):
        raise ModelError("p must be 1 or 2")
    X, Y = _check_clouds(X, Y)
    C = _cost(X, Y, p)
    r, c = optimize.linear_sum_assignment(C)
    return float(C[r, c].mean() ** (1.0 / p))


def wasserstein_bruteforce(X, Y, p: int = 2) -> float:
    """Exhaustive minimum over permutations; only for tiny clouds (tests)."""
    X, Y = _check_clouds(X, Y)
    C = _cost(X, Y, p)
    n = len(X)
    best = min(C[np.arange(n), list(perm)].mean() for perm in itertools.permutations(range(n)))
    return float(best ** (1.0 / p))


def wasserstein_entropic(X, Y, p: int = 2, reg: float = 0.05, max_iter: int = 20000, tol: float = 1e-5) -> float:
    """Transport cost <P, C>^(1/p) of the Sinkhorn plan.

    Log-domain iterations with geometric annealing of the regularisation
    from max(C) down to ``reg``, warm-starting the dual potentials.
    """
    if not reg > 0:
        raise ModelError("reg must be > 0")
    X, Y = _check_clouds(X, Y)
    C = _cost(X, Y, p)
    n = len(X)
    loga = np.full(n, -np.log(n))
    f = np.zeros(n)
    g = np.zeros(n)
    start = max(float(C.max()), reg)
    n_stages = max(1, int(np.ceil(np.log(start / reg) / np.log(2.0))))
    schedule = np.geomspace(start, reg, n_stages + 1)[1:] if start > reg else np.array([reg])
    for stage, eps in enumerate(schedule):
        final = stage == len(schedule) - 1
        K = -C / eps
        for it in range(max_iter if final else 50):
            f = eps * (loga - logsumexp(K + g[None, :] / eps, axis=1))
            g = eps * (loga - logsumexp(K + f[:, None] / eps, axis=0))
            if final:
                row = np.exp(logsumexp(K + (f[:, None] + g[None, :]) / eps, axis=1))
                if np.abs(row - 1.0 / n).sum() < tol:
                    break
        else:
            if final:
                raise ConvergenceError(f"Sinkhorn did not converge in {max_iter} iterations (reg={reg})")
    P = np.exp(-C / reg + (f[:, None] + g[None, :]) / reg)
    return float((P * C).sum() ** (1.0 / p))


def wasserstein(X, Y, p: int = 2, config: MetricConfig = MetricConfig()) -> float:
    if config.ot_mode == "entropic":
        return wasserstein_entropic(X, Y, p, config.reg)
    return wasserstein_exact(X, Y, p)


# ---------------------------------------------------------------------------
# Fourier distances


def _phase_sums(X, xi, weights=None, chunk=4096):
    """sum_p w_p exp(-i xi.x_p) for each xi; weights may be (B, n) for bootstrap."""
    X = np.asarray(X, float)
    n = len(X)
    w = np.full(n, 1.0 / n) if weights is None else weights
    out = np.zeros(w.shape[:-1] + (len(xi),), complex)
    for s in range(0, n, chunk):
        ph = X[s:s + chunk] @ xi.T
        out += w[..., s:s + chunk] @ np.cos(ph) - 1j * (w[..., s:s + chunk] @ np.sin(ph))
    return out


def ecf(X, xi) -> np.ndarray:
    """Empirical characteristic function (1/n) sum exp(-i xi.x) on the rows of xi."""
    return _phase_sums(X, np.atleast_2d(np.asarray(xi, float)))


def _boot_weights(rng, n, n_boot):
    return rng.multinomial(n, np.full(n, 1.0 / n), size=n_boot) / n


def _moment_warning(X, Y, s):
    if s < 2:
        return
    n = min(len(X), len(Y))
    diff = np.abs(X.mean(0) - Y.mean(0))
    tol = 4 * np.sqrt((X.var(0) + Y.var(0)) / n) + 1e-12
    if np.any(diff > tol):
        warnings.warn("first moments differ beyond sampling noise; |.|_s is then dominated by small |xi|",
                      RuntimeWarning, stacklevel=3)


def fourier_distance(X, Y, s: int = None, config: MetricConfig = MetricConfig(), bootstrap: bool = True) -> MetricReport:
    """max over the grid of |phi_X(xi) - phi_Y(xi)| / |xi|^s, with bootstrap standard error."""
    X = np.atleast_2d(np.asarray(X, float))
    Y = np.atleast_2d(np.asarray(Y, float))
    s = config.s if s is None else s
    _moment_warning(X, Y, s)
    xi = config.xi_grid(X.shape[1])
    norm = np.linalg.norm(xi, axis=1) ** s
    diff = ecf(X, xi) - ecf(Y, xi)
    value = float(np.max(np.abs(diff) / norm))
    se = float("nan")
    if bootstrap and config.n_boot > 1:
        rng = numpy_rng(config.seed, 1)
        bx = _phase_sums(X, xi, _boot_weights(rng, len(X), config.n_boot))
        by = _phase_sums(Y, xi, _boot_weights(rng, len(Y), config.n_boot))
        se = float(np.std(np.max(np.abs(bx - by) / norm, axis=1), ddof=1))
    return MetricReport(f"fourier_s{s}", value, se, len(X), len(Y), {"s": s, "n_xi": len(xi),
                        "xi_min": config.xi_min, "xi_max": config.xi_max})


def bump_chi(r):
    """Smooth bump in |xi|: 1 on [0, 1], exp(1 - 1/(1 - (r-1)^2)) on (1, 2), 0 beyond."""
    r = np.asarray(r, float)
    out = np.where(r <= 1, 1.0, 0.0)
    mid = (r > 1) & (r < 2)
    t = np.where(mid, r - 1, 0.0)
    out = np.where(mid, np.exp(1 - 1 / np.where(mid, 1 - t**2, 1.0)), out)
    return out


def multi_indices(d: int, max_order: int):
    out = []
    for order in range(max_order + 1):
        for c in itertools.combinations_with_replacement(range(d), order):
            a = np.zeros(d, int)
            for k in c:
                a[k] += 1
            out.append(tuple(a))
    return out


def empirical_moments(X, max_order: int) -> dict:
    X = np.atleast_2d(np.asarray(X, float))
    return {a: float(np.mean(np.prod(X ** np.array(a), axis=1))) for a in multi_indices(X.shape[1], max_order)}


def moment_polynomial(moments: dict, xi) -> np.ndarray:
    """sum_alpha M_alpha xi^alpha (-i)^|alpha| / alpha! (Taylor polynomial of f_hat)."""
    xi = np.atleast_2d(xi)
    out = np.zeros(len(xi), complex)
    for a, m in moments.items():
        order = sum(a)
        fact = np.prod([math.factorial(k) for k in a])
        out += m * np.prod(xi ** np.array(a), axis=1) * (-1j) ** order / fact
    return out


def fourier_norm_moment_corrected(X, k: int, config: MetricConfig = MetricConfig(), Y=None) -> MetricReport:
    """|f - M_k[f]|_k + sum_{|alpha| <= k-1} |M_alpha[f]| for f = mu_X (or mu_X - mu_Y).

    M_k[f] has Fourier transform chi(xi) times the Taylor polynomial of f_hat
    of order k - 1, with f's (empirical) moments.
    """
    if not 2 <= k <= 6:
        raise ModelError("k must lie in 2..6")
    X = np.atleast_2d(np.asarray(X, float))
    xi = config.xi_grid(X.shape[1])
    mom = empirical_moments(X, k - 1)
    fh = ecf(X, xi)
    if Y is not None:
        Y = np.atleast_2d(np.asarray(Y, float))
        my = empirical_moments(Y, k - 1)
        mom = {a: mom[a] - my[a] for a in mom}
        fh = fh - ecf(Y, xi)
    r = np.linalg.norm(xi, axis=1)
    corr = bump_chi(r) * moment_polynomial(mom, xi)
    sup = float(np.max(np.abs(fh - corr) / r**k))
    total = sup + float(sum(abs(m) for m in mom.values()))
    return MetricReport(f"fourier_norm_k{k}", total, float("nan"), len(X), 0 if Y is None else len(Y),
                        {"k": k, "sup_term": sup})


def gaussian_cf(xi, cov=None) -> np.ndarray:
    xi = np.atleast_2d(xi)
    cov = np.eye(xi.shape[1]) if cov is None else np.asarray(cov)
    return np.exp(-0.5 * np.einsum("pa,ab,pb->p", xi, cov, xi))


# ---------------------------------------------------------------------------
# entropy


def _knn_terms(X, k, seed):
    X = np.atleast_2d(np.asarray(X, float))
    n, d = X.shape
    if n < 50:
        raise ModelError("entropy estimation needs at least 50 points")
    scale = float(np.max(np.ptp(X, axis=0)))
    if scale == 0:
        raise ModelError("degenerate cloud: all points coincide")
    tree = spatial.cKDTree(X)
    dist, _ = tree.query(X, k=k + 1)
    eps = dist[:, k]
    if np.any(eps == 0):
        X = X + 1e-12 * scale * numpy_rng(seed, 2).standard_normal(X.shape)
        dist, _ = spatial.cKDTree(X).query(X, k=k + 1)
        eps = dist[:, k]
    log_vd = (d / 2) * np.log(np.pi) - special.gammaln(d / 2 + 1)
    # differential entropy h = psi(n) - psi(k) + log V_d + (d/n) sum log eps_i
    terms = d * np.log(eps)
    const = special.digamma(n) - special.digamma(k) + log_vd
    return X, terms, const


def knn_entropy(X, k: int = 1, seed: int = 0) -> MetricReport:
    """Kozachenko-Leonenko estimate of H(f) = int f log f (negative differential entropy).

    The standard error treats the per-point log-distance terms as
    independent.
    """
    X, terms, const = _knn_terms(X, k, seed)
    value = -(const + terms.mean())
    se = float(terms.std(ddof=1) / np.sqrt(len(terms)))
    return MetricReport("knn_entropy", float(value), se, len(terms), 0, {"k": k})


def relative_entropy_vs_gaussian(X, gamma: GaussianState, k: int = 1, seed: int = 0) -> MetricReport:
    """H(f | gamma) = int f log f - int f log gamma, the first term by knn_entropy."""
    X, terms, const = _knn_terms(X, k, seed)
    neg_log_gamma = -gamma.log_density(X)
    per_point = -terms + neg_log_gamma
    value = -const + per_point.mean()
    se = float(per_point.std(ddof=1) / np.sqrt(len(per_point)))
    return MetricReport("relative_entropy", float(value), se, len(X), 0, {"k": k})


# ---------------------------------------------------------------------------
# chaos


def marginal_observable_gap(ensemble, observables: Sequence, reference: Sequence, n_tuples: int = 20000,
                            seed: int = 0, reference_stderr: Sequence = None) -> MetricReport:
    """|<F_l^N, phi_1 x ... x phi_l> - prod_j <f, phi_j>| with standard error.

    The l-marginal is estimated per realization by the U-statistic over
    distinct index tuples (exact for l <= 2, subsampled beyond) and then
    averaged over realizations.  ``reference_stderr`` (optional) is folded
    into the error of the product by first-order propagation.
    """
    ens = np.asarray(ensemble, float)
    if ens.ndim == 2:
        ens = ens[None]
    R, N, _ = ens.shape
    ell = len(observables)
    if ell > N:
        raise ModelError(f"l = {ell} exceeds N = {N}")
    if R < 2:
        raise ModelError("need at least two realizations")
    vals = np.stack([np.asarray(ob(ens), float) for ob in observables], axis=-1)  # (R, N, l)
    if ell == 1:
        per = vals[..., 0].mean(axis=1)
    elif ell == 2:
        a, b = vals[..., 0], vals[..., 1]
        per = (a.sum(1) * b.sum(1) - (a * b).sum(1)) / (N * (N - 1))
    else:
        rng = numpy_rng(seed, 3)
        per = np.empty(R)
        for r in range(R):
            idx = np.array([rng.choice(N, ell, replace=False) for _ in range(n_tuples)])
            per[r] = np.mean(np.prod(vals[r][idx, np.arange(ell)], axis=1))
    est = per.mean()
    se = per.std(ddof=1) / np.sqrt(R)
    ref = np.asarray(reference, float)
    target = float(np.prod(ref))
    if reference_stderr is not None:
        rse = np.asarray(reference_stderr, float)
        grad = np.array([np.prod(np.delete(ref, j)) for j in range(ell)])
        se = float(np.sqrt(se**2 + np.sum((grad * rse) ** 2)))
    return MetricReport(f"marginal_gap_l{ell}", float(abs(est - target)), float(se), R * N, 0,
                        {"l": ell, "estimate": float(est), "reference": target})


def bootstrap_stderr(values_fn, data, n_boot: int = 200, seed: int = 0) -> float:
    """Standard deviation of values_fn over resamples (rows) of data."""
    data = np.asarray(data)
    rng = numpy_rng(seed, 4)
    n = len(data)
    reps = [values_fn(data[rng.integers(0, n, n)]) for _ in range(n_boot)]
    return float(np.std(reps, axis=0, ddof=1).max()) if np.ndim(reps[0]) else float(np.std(reps, ddof=1))
