"""Experiment definitions shared by the command line and the acceptance suite.

Each experiment takes an ExperimentConfig and returns an ExperimentResult
holding the results table, plot series (x, y, yerr) and named pass/fail
checks.  Realization r of any ensemble draws its initial data and its pair
noise from stream (seed, r), and results are aggregated in realization
order, so the output does not depend on how realizations are distributed
over workers.
"""
from __future__ import annotations

import dataclasses
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import optimize, stats

from . import _rng
from .boltzmann import GrazingKernel, grazing_gap, simulate_kac
from .consistency import DEFAULT_BUMP_CENTERS, PolynomialFunctional, consistency_sweep
from .core import ModelError, ModelParams, ParticleState
from .landau import IntegratorConfig, run_ensemble, simulate
from .limit import GaussianState, equilibrium_gaussian, evolve_pressure, relaxation_rate
from .metrics import (MetricConfig, fourier_distance, knn_entropy, marginal_observable_gap,
                      relative_entropy_vs_gaussian, wasserstein_exact)
from .observables import (Additive, DampedPoly, GaussianBump, PairProduct, ProductOfSums, Speed2,
                          energy_fn, make_observable, momentum_fn)
from .sphere import BoltzmannSphereSpec, DensitySpec, project_array, sample_conditioned_tensor, sample_uniform_sphere

EXPERIMENT_NAMES = ("conserve", "grazing", "consistency", "chaos-sweep", "contraction-w2",
                    "contraction-fourier", "equilibrate", "entropy", "moments")

_FIELDS = ("experiment", "d", "lam", "energy", "momentum", "N", "N_list", "realizations", "dt",
           "t_end", "eps", "eps_list", "metric", "seed", "output")

# experiment-specific keys (stored in ExperimentConfig.options) and their defaults
OPTION_DEFAULTS = {
    "conserve": {"n_steps": 10_000, "n_events": 100_000, "kac_N": None, "tol": 1e-12},
    "grazing": {"n_theta": 64, "n_phi": 64, "min_slope": 0.9, "max_rel_gap": 0.1},
    "consistency": {"samples_per_N": 50, "E0": None, "slope_window": [-1.2, -0.85]},
    "chaos-sweep": {"N_ref": 4096, "observables": ["speed2", "speed2"],
                    "extra_observables": [["bump", "bump"]],
                    "density": {"kind": "bimodal", "separation": 0.8}, "min_ratio": 3.0},
    "contraction-w2": {"record_every": 0.1, "density_f": {"kind": "gaussian"},
                       "density_g": {"kind": "bimodal", "separation": 0.8}, "n_sigma": 3.0},
    "contraction-fourier": {"record_every": 0.1, "density_f": {"kind": "gaussian"},
                            "density_g": {"kind": "gaussian", "covariance": [2.0, 0.5, 0.5]},
                            "n_sigma": 3.0},
    "equilibrate": {"record_every": 0.25, "density": {"kind": "bimodal", "separation": 0.8},
                    "p_value": 0.01},
    "entropy": {"record_every": 0.25, "density": {"kind": "bimodal", "separation": 0.8},
                "final_max": 0.05, "jitter_sigma": 2.0},
    "moments": {"record_every": 0.05, "density": {"kind": "gaussian", "covariance": [2.0, 0.5, 0.5]},
                "n_sigma": 3.0, "rate_tol": 0.1, "n_boot": 200},
}

REQUIRED = {
    "conserve": ("N", "dt"),
    "grazing": ("N", "eps_list"),
    "consistency": ("N_list",),
    "chaos-sweep": ("N_list", "realizations", "dt", "t_end"),
    "contraction-w2": ("N", "dt", "t_end"),
    "contraction-fourier": ("N", "dt", "t_end"),
    "equilibrate": ("N", "dt", "t_end"),
    "entropy": ("N", "dt", "t_end"),
    "moments": ("N", "realizations", "dt", "t_end"),
}


@dataclass
class ExperimentConfig:
    experiment: str
    d: int = 3
    lam: float = 1.0
    energy: float = 3.0
    momentum: Optional[list] = None
    N: Optional[int] = None
    N_list: Optional[list] = None
    realizations: Optional[int] = None
    dt: Optional[float] = None
    t_end: Optional[float] = None
    eps: Optional[float] = None
    eps_list: Optional[list] = None
    metric: dict = field(default_factory=dict)
    seed: int = 0
    output: Optional[str] = None
    options: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        raw = dict(raw)
        if "lambda" in raw:
            raw["lam"] = raw.pop("lambda")
        opts = dict(raw.pop("options", {}) or {})
        kw = {}
        for k, v in raw.items():
            if k in _FIELDS:
                kw[k] = v
            else:
                opts[k] = v
        if "experiment" not in kw:
            raise ModelError("config has no 'experiment' field")
        return cls(options=opts, **kw)

    def opt(self, key):
        if key in self.options:
            return self.options[key]
        return OPTION_DEFAULTS.get(self.experiment, {}).get(key)

    @property
    def params(self) -> ModelParams:
        return ModelParams(d=int(self.d), lam=float(self.lam), energy=float(self.energy), momentum=self.momentum)

    @property
    def metric_config(self) -> MetricConfig:
        m = dict(self.metric or {})
        m.setdefault("seed", self.seed)
        return MetricConfig(**m)

    def to_dict(self):
        out = dataclasses.asdict(self)
        out["lambda"] = out.pop("lam")
        return out


def validate(config) -> list:
    """Diagnostics for a config (dict or ExperimentConfig); empty means runnable."""
    diags = []
    if isinstance(config, dict):
        try:
            config = ExperimentConfig.from_dict(config)
        except (ModelError, TypeError) as exc:
            return [str(exc)]
    exp = config.experiment
    if exp not in EXPERIMENT_NAMES:
        return [f"experiment: unknown experiment {exp!r}; choose from {', '.join(EXPERIMENT_NAMES)}"]
    for key in REQUIRED[exp]:
        if getattr(config, key) is None:
            diags.append(f"{key}: required for experiment {exp!r}")
    for key in config.options:
        if key not in OPTION_DEFAULTS.get(exp, {}):
            diags.append(f"{key}: unknown option for experiment {exp!r}")

    def positive(name, value, integer=False):
        if value is None:
            return
        ok = isinstance(value, (int, float)) and not isinstance(value, bool) and value > 0
        if integer:
            ok = ok and float(value).is_integer()
        if not ok:
            diags.append(f"{name}: must be a positive {'integer' if integer else 'number'}, got {value!r}")

    positive("dt", config.dt)
    positive("t_end", config.t_end)
    positive("lam", config.lam)
    positive("N", config.N, integer=True)
    positive("realizations", config.realizations, integer=True)
    positive("eps", config.eps)
    if config.N is not None and isinstance(config.N, (int, float)) and config.N < 2:
        diags.append("N: need at least 2 particles")
    if config.dt is not None and config.t_end is not None and all(
            isinstance(x, (int, float)) for x in (config.dt, config.t_end)) and config.dt > config.t_end:
        diags.append("dt: must not exceed t_end")
    for name in ("N_list", "eps_list"):
        vals = getattr(config, name)
        if vals is None:
            continue
        if not isinstance(vals, (list, tuple)) or len(vals) < 2:
            diags.append(f"{name}: need a list with at least two entries")
            continue
        for v in vals:
            positive(name, v, integer=(name == "N_list"))
    if config.eps_list and all(isinstance(e, (int, float)) for e in config.eps_list):
        if any(e > math.pi / 2 for e in config.eps_list):
            diags.append("eps_list: entries must lie in (0, pi/2]")
    if config.N_list and all(isinstance(n, (int, float)) for n in config.N_list):
        if any(b <= a for a, b in zip(config.N_list, config.N_list[1:])):
            diags.append("N_list: must be strictly increasing")
    if config.energy is None or not isinstance(config.energy, (int, float)) or config.energy <= 0:
        diags.append(f"energy: must be > 0, got {config.energy!r}")
    try:
        config.params
    except (ModelError, TypeError, ValueError) as exc:
        diags.append(f"params: {exc}")
    try:
        config.metric_config
    except (ModelError, TypeError) as exc:
        diags.append(f"metric: {exc}")
    if exp in ("grazing",) and config.d != 3:
        diags.append("d: the Boltzmann process is implemented for d = 3 only")
    if exp == "conserve" and config.d != 3:
        diags.append("d: the Kac half of 'conserve' needs d = 3")
    return diags


@dataclass
class ExperimentResult:
    name: str
    header: list
    rows: list
    plotdata: dict = field(default_factory=dict)  # name -> (x, y, yerr)
    checks: dict = field(default_factory=dict)  # name -> (passed, detail)
    summary: dict = field(default_factory=dict)
    seeds: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(ok for ok, _ in self.checks.values())


# ---------------------------------------------------------------------------
# worker pool


def n_workers() -> int:
    cap = os.environ.get("LANDAU_CHAOS_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap))) if int(cap) > 0 else n
        except ValueError:
            raise ModelError(f"LANDAU_CHAOS_THREADS must be an integer, got {cap!r}")
    return n


def pool_map(fn: Callable, tasks: list, workers: Optional[int] = None) -> list:
    """Ordered map, in worker processes when more than one worker is allowed."""
    workers = n_workers() if workers is None else workers
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as ex:
        return list(ex.map(fn, tasks))


def _chunks(realizations, workers):
    realizations = list(realizations)
    k = max(1, min(len(realizations), workers))
    size = math.ceil(len(realizations) / k)
    return [realizations[i:i + size] for i in range(0, len(realizations), size)]


def _density(cfg_density: dict, params: ModelParams) -> DensitySpec:
    return DensitySpec.from_config(dict(cfg_density or {"kind": "gaussian"}), params)


def _initial(spec: BoltzmannSphereSpec, density: Optional[DensitySpec], seed: int, r: int) -> np.ndarray:
    if density is None:
        return sample_uniform_sphere(spec, seed, r).velocities
    return sample_conditioned_tensor(density, spec, seed, r).velocities


def _pressure_obs(t, V):
    return np.einsum("ria,rib->rab", V, V) / V.shape[1]


def _state_obs(t, V):
    return V.copy()


_OBSERVERS = {"pressure": _pressure_obs, "state": _state_obs}


def _landau_task(task: dict):
    """Run a chunk of realizations; returns (times, observations) with
    observations[k] of leading dimension len(task['realizations'])."""
    params = task["params"]
    spec = BoltzmannSphereSpec(task["N"], params)
    dens = None if task.get("density") is None else _density(task["density"], params)
    reals = task["realizations"]
    V0 = np.stack([_initial(spec, dens, task["init_seed"], r) for r in reals])
    cfg = IntegratorConfig(task["dt"], task["t_end"], task.get("enforce_sphere", True))
    keys = _rng.stream_keys(task["seed"], reals)
    times, obs, _ = run_ensemble(V0, params, cfg, task["seed"], keys=keys, record_times=task["record_times"],
                                 observe=_OBSERVERS[task["observer"]], energy=params.energy,
                                 momentum=params.momentum_vec)
    return times, obs


def landau_ensemble(params: ModelParams, N: int, realizations, seed: int, dt: float, t_end: float,
                    record_times, observer: str = "state", density: Optional[dict] = None,
                    init_seed: Optional[int] = None, workers: Optional[int] = None):
    """Observations (one array per record time, realizations stacked in order)."""
    workers = n_workers() if workers is None else workers
    base = dict(params=params, N=N, seed=seed, init_seed=seed if init_seed is None else init_seed,
                dt=dt, t_end=t_end, record_times=list(record_times), observer=observer, density=density)
    tasks = [dict(base, realizations=c) for c in _chunks(realizations, workers)]
    outs = pool_map(_landau_task, tasks, workers)
    times = outs[0][0]
    obs = [np.concatenate([o[1][k] for o in outs]) for k in range(len(times))]
    return times, obs


def _record_times(t_end, every, dt):
    n = int(round(t_end / every))
    ts = [round(k * every, 12) for k in range(n + 1)]
    if abs(ts[-1] - t_end) > 1e-12:
        ts.append(t_end)
    steps = [round(t / dt) for t in ts]
    if any(abs(s * dt - t) > 1e-9 for s, t in zip(steps, ts)):
        raise ModelError(f"record times must be multiples of dt={dt}")
    return ts


# ---------------------------------------------------------------------------
# experiments


def run_conserve(cfg: ExperimentConfig) -> ExperimentResult:
    """Conservation of momentum and energy: Landau (projected) and Kac."""
    params = cfg.params
    N = int(cfg.N)
    tol = float(cfg.opt("tol"))
    E = params.energy
    spec = BoltzmannSphereSpec(N, params)
    v0 = sample_uniform_sphere(spec, cfg.seed, 0)
    n_steps = int(cfg.opt("n_steps"))
    t0 = time.perf_counter()
    rec = simulate(v0, IntegratorConfig(cfg.dt, n_steps * cfg.dt, True, record_stride=max(1, n_steps // 100)),
                   params, cfg.seed, projection_target=(E, params.momentum_vec))
    t_landau = time.perf_counter() - t0
    e_l = float(np.max(np.abs(rec.log_energy - E)) / E)
    m_l = rec.max_momentum(params.momentum_vec) / np.sqrt(E)

    kac_n = int(cfg.opt("kac_N") or N)
    kspec = BoltzmannSphereSpec(kac_n, params)
    kernel = GrazingKernel(cfg.eps if cfg.eps else 0.3, params.lam)
    n_events = int(cfg.opt("n_events"))
    t0 = time.perf_counter()
    kres = simulate_kac(sample_uniform_sphere(kspec, cfg.seed, 1), np.inf, kernel, cfg.seed, 1,
                        max_events=n_events)
    t_kac = time.perf_counter() - t0
    e_k = float(np.max(np.abs(kres.record.log_energy - E)) / E)
    m_k = kres.record.max_momentum(params.momentum_vec) / np.sqrt(E)

    header = ["process", "n_particles", "steps_or_events", "max_rel_energy_drift", "max_rel_momentum", "runtime_s"]
    rows = [["landau", N, n_steps, e_l, m_l, t_landau], ["kac", kac_n, kres.n_events, e_k, m_k, t_kac]]
    stride = max(1, n_steps // 500)
    plot = {"landau_energy_drift": (rec.log_times[::stride], np.abs(rec.log_energy[::stride] - E) / E,
                                    np.zeros(len(rec.log_times[::stride])))}
    kstride = max(1, len(kres.record.log_energy) // 500)
    plot["kac_energy_drift"] = (np.arange(len(kres.record.log_energy))[::kstride],
                                np.abs(kres.record.log_energy[::kstride] - E) / E,
                                np.zeros(len(kres.record.log_energy[::kstride])))
    checks = {
        "landau_energy": (e_l <= tol, f"max |E(t)-E|/E = {e_l:.3g} (tol {tol:g})"),
        "landau_momentum": (m_l <= tol, f"max |M(t)|/sqrt(E) = {m_l:.3g} (tol {tol:g})"),
        "kac_energy": (e_k <= tol, f"max |E-E0|/E = {e_k:.3g} over {kres.n_events} events"),
        "kac_momentum": (m_k <= tol, f"max |M|/sqrt(E) = {m_k:.3g} over {kres.n_events} events"),
        "kac_event_count": (kres.n_events == n_events, f"{kres.n_events} events"),
    }
    return ExperimentResult("conserve", header, rows, plot, checks,
                            {"landau_runtime_s": t_landau, "kac_runtime_s": t_kac}, [cfg.seed])


def grazing_library():
    """Smooth test functions for the grazing limit: (name, phi, conserved)."""
    return [
        ("bump_sum", Additive(GaussianBump(np.zeros(3))), False),
        ("damped_v1v2_sum", Additive(DampedPoly(0, 1)), False),
        ("bump_offset_sum", Additive(GaussianBump(np.array([0.5, 0.0, 0.0]))), False),
        ("pair_v11_v21", PairProduct(0, 1, 0, 0), False),
        ("energy", energy_fn(), True),
        ("momentum_x", momentum_fn(0), True),
    ]


def run_grazing(cfg: ExperimentConfig) -> ExperimentResult:
    params = cfg.params
    N = int(cfg.N)
    st = sample_uniform_sphere(BoltzmannSphereSpec(N, params), cfg.seed, 0)
    header = ["test_function", "eps", "gap", "G_landau", "G_boltzmann", "slope"]
    rows, plot, checks = [], {}, {}
    min_slope = float(cfg.opt("min_slope"))
    max_rel = float(cfg.opt("max_rel_gap"))
    eps_small = min(cfg.eps_list)
    for name, phi, conserved in grazing_library():
        g = grazing_gap(phi, st, cfg.eps_list, params.lam, int(cfg.opt("n_theta")), int(cfg.opt("n_phi")))
        for e, gap, gb in zip(g.eps, g.gap, g.boltzmann_values):
            rows.append([name, float(e), float(gap), g.landau_value, float(gb), g.slope])
        plot[f"gap_{name}"] = (g.eps, g.gap, np.zeros(len(g.eps)))
        if conserved:
            checks[f"{name}_exact_zero"] = (g.exact_zero, f"max gap {g.gap.max():.3g}")
        else:
            rel = float(g.gap[np.argmin(g.eps)] / abs(g.landau_value))
            checks[f"{name}_slope"] = (g.slope >= min_slope, f"slope {g.slope:.3f} (>= {min_slope})")
            checks[f"{name}_small_gap"] = (rel <= max_rel, f"gap/|G_L| at eps={eps_small} is {rel:.3g} (<= {max_rel})")
    return ExperimentResult("grazing", header, rows, plot, checks, {}, [cfg.seed])


def run_consistency(cfg: ExperimentConfig) -> ExperimentResult:
    params = cfg.params
    E0 = float(cfg.opt("E0") or params.energy)
    spn = int(cfg.opt("samples_per_N"))
    Phi = PolynomialFunctional.gaussian_bumps(DEFAULT_BUMP_CENTERS)
    sw = consistency_sweep(Phi, cfg.N_list, E0, spn, cfg.seed, params)
    cons = consistency_sweep(PolynomialFunctional([Speed2()]), cfg.N_list, E0, min(spn, 5), cfg.seed, params)
    cons2 = consistency_sweep(PolynomialFunctional([Speed2(), Speed2()]), cfg.N_list, E0, min(spn, 5), cfg.seed, params)
    lo, hi = cfg.opt("slope_window")
    header = ["N", "gap_median", "gap_max", "slope_running"]
    rows = [list(r) for r in sw.rows()]
    med4 = np.array([np.median(sw.gaps_w4[n]) for n in sw.N_list])
    plot = {"gap_median": (np.array(sw.N_list), sw.median, np.zeros(len(sw.N_list))),
            "gap_max": (np.array(sw.N_list), sw.max, np.zeros(len(sw.N_list))),
            "gap_median_bracket4": (np.array(sw.N_list), med4, np.zeros(len(sw.N_list)))}
    checks = {
        "slope": (lo <= sw.slope <= hi, f"fitted slope {sw.slope:.4f} in [{lo}, {hi}]"),
        "conserved_zero": (cons.exact_zero and cons2.exact_zero,
                           f"max gap {max(cons.max.max(), cons2.max.max()):.3g} for R(|v|^2), R(|v|^2)^2"),
    }
    return ExperimentResult("consistency", header, rows, plot, checks,
                            {"slope": sw.slope, "slope_bracket4": sw.slope_w4}, [cfg.seed])


def run_chaos_sweep(cfg: ExperimentConfig) -> ExperimentResult:
    """l = 2 marginal gap at t_end against a large-N reference run."""
    params = cfg.params
    R = int(cfg.realizations)
    dens = cfg.opt("density")
    t = float(cfg.t_end)
    pairs = [list(cfg.opt("observables"))] + [list(p) for p in (cfg.opt("extra_observables") or [])]
    # reference: one large system, particle averages of each observable
    N_ref = int(cfg.opt("N_ref"))
    _, ref_obs = landau_ensemble(params, N_ref, [0], cfg.seed + 1, cfg.dt, t, [t], "state", dens)
    Vref = ref_obs[-1][0]
    refs, ref_se = {}, {}
    for name in {n for p in pairs for n in p}:
        vals = make_observable(name, params.d)(Vref)
        refs[name] = float(vals.mean())
        ref_se[name] = float(vals.std(ddof=1) / np.sqrt(N_ref))
    header = ["observables", "N", "gap", "stderr", "estimate", "reference"]
    rows, plot, gaps = [], {}, {}
    for N in cfg.N_list:
        _, obs = landau_ensemble(params, int(N), range(R), cfg.seed, cfg.dt, t, [t], "state", dens)
        ens = obs[-1]
        for pair in pairs:
            key = "x".join(pair)
            rep = marginal_observable_gap(ens, [make_observable(n, params.d) for n in pair],
                                          [refs[n] for n in pair], seed=cfg.seed,
                                          reference_stderr=[ref_se[n] for n in pair])
            rows.append([key, int(N), rep.value, rep.stderr, rep.params["estimate"], rep.params["reference"]])
            gaps.setdefault(key, []).append((int(N), rep.value, rep.stderr))
    for key, g in gaps.items():
        arr = np.array(g)
        plot[f"gap_{key}"] = (arr[:, 0], arr[:, 1], arr[:, 2])
    main = np.array(gaps["x".join(pairs[0])])
    ratio = float(cfg.opt("min_ratio"))
    dec = bool(np.all(np.diff(main[:, 1]) < 0))
    checks = {
        "strictly_decreasing": (dec, "gaps " + ", ".join(f"N={int(n)}: {v:.4g}" for n, v, _ in main)),
        "ratio": (main[-1, 1] <= main[0, 1] / ratio,
                  f"gap(N={int(main[-1, 0])}) = {main[-1, 1]:.4g} vs gap(N={int(main[0, 0])})/{ratio:g} = {main[0, 1] / ratio:.4g}"),
    }
    return ExperimentResult("chaos-sweep", header, rows, plot, checks, {"reference": refs}, [cfg.seed, cfg.seed + 1])


def _coupled_task(task):
    """Two systems driven by the same pair-noise stream, labels matched optimally at t = 0."""
    from scipy.optimize import linear_sum_assignment

    params = task["params"]
    N = task["N"]
    spec = BoltzmannSphereSpec(N, params)
    df, dg = _density(task["density_f"], params), _density(task["density_g"], params)
    out = []
    for r in task["realizations"]:
        F = sample_conditioned_tensor(df, spec, task["seed"], 2 * r).velocities
        G = sample_conditioned_tensor(dg, spec, task["seed"], 2 * r + 1).velocities
        C = ((F[:, None, :] - G[None, :, :]) ** 2).sum(-1)
        _, perm = linear_sum_assignment(C)
        G = G[perm]
        V = np.ascontiguousarray(np.stack([F, G]))
        cfg = IntegratorConfig(task["dt"], task["t_end"], True)
        key = _rng.stream_keys(task["seed"], [r])
        keys = np.array([key[0], key[0]], dtype=np.uint64)
        w2 = []

        def observe(t, X):
            w2.append((wasserstein_exact(X[0], X[1]), float(np.sqrt(((X[0] - X[1]) ** 2).sum(-1).mean()))))

        times, _, _ = run_ensemble(V, params, cfg, task["seed"], keys=keys, record_times=task["record_times"],
                                   observe=observe, energy=params.energy, momentum=params.momentum_vec)
        out.append(np.array(w2))
    return times, out


def run_contraction_w2(cfg: ExperimentConfig) -> ExperimentResult:
    params = cfg.params
    R = int(cfg.realizations or 4)
    ts = _record_times(cfg.t_end, cfg.opt("record_every"), cfg.dt)
    base = dict(params=params, N=int(cfg.N), seed=cfg.seed, dt=cfg.dt, t_end=cfg.t_end, record_times=ts,
                density_f=cfg.opt("density_f"), density_g=cfg.opt("density_g"))
    outs = pool_map(_coupled_task, [dict(base, realizations=c) for c in _chunks(range(R), n_workers())])
    times = outs[0][0]
    arr = np.stack([a for o in outs for a in o[1]])  # (R, T, 2)
    w2 = arr[:, :, 0]
    mean = w2.mean(0)
    se = w2.std(0, ddof=1) / np.sqrt(R) if R > 1 else np.zeros(len(times))
    coup = arr[:, :, 1].mean(0)
    k = float(cfg.opt("n_sigma"))
    bound = mean[0] + k * np.sqrt(se**2 + se[0] ** 2)
    ok = bool(np.all(mean <= bound))
    logm = np.log(mean)
    logse = se / mean
    rises = np.diff(logm) - k * np.sqrt(logse[1:] ** 2 + logse[:-1] ** 2)
    slope = float(np.polyfit(times, logm, 1)[0])
    header = ["t", "w2_mean", "w2_stderr", "coupling_distance"]
    rows = [[float(t), float(m), float(s), float(c)] for t, m, s, c in zip(times, mean, se, coup)]
    checks = {
        "bounded_by_initial": (ok, f"max_t W2(t) - W2(0) = {float(np.max(mean - mean[0])):.4g}, 3 sigma = {k * se[0] * np.sqrt(2):.3g}"),
        "log_nonincreasing": (bool(np.all(rises <= 0)) and slope <= 0,
                              f"largest rise of log W2 beyond {k:g} sigma: {float(rises.max()):.3g}; log-slope {slope:.3f}"),
    }
    plot = {"w2": (times, mean, se), "coupling": (times, coup, np.zeros(len(times)))}
    return ExperimentResult("contraction-w2", header, rows, plot, checks, {"log_slope": slope},
                            [cfg.seed])


def run_contraction_fourier(cfg: ExperimentConfig) -> ExperimentResult:
    params = cfg.params
    N = int(cfg.N)
    ts = _record_times(cfg.t_end, cfg.opt("record_every"), cfg.dt)
    mc = cfg.metric_config
    # two independent systems: stream (seed, 0) for f, (seed, 1) for g
    _, of = landau_ensemble(params, N, [0], cfg.seed, cfg.dt, cfg.t_end, ts, "state", cfg.opt("density_f"))
    _, og = landau_ensemble(params, N, [1], cfg.seed, cfg.dt, cfg.t_end, ts, "state", cfg.opt("density_g"))
    vals, ses = [], []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for X, Y in zip(of, og):
            rep = fourier_distance(X[0], Y[0], mc.s, mc)
            vals.append(rep.value)
            ses.append(rep.stderr)
    vals, ses = np.array(vals), np.array(ses)
    k = float(cfg.opt("n_sigma"))
    bound = vals[0] + k * np.sqrt(ses[0] ** 2 + ses**2)
    ok = bool(np.all(vals <= bound))
    slope = float(np.polyfit(ts, np.log(vals), 1)[0])
    header = ["t", "fourier_distance", "stderr"]
    rows = [[float(t), float(v), float(s)] for t, v, s in zip(ts, vals, ses)]
    checks = {"bounded_by_initial": (ok, f"sup_t d(t) = {vals.max():.4g}, d(0) = {vals[0]:.4g} +- {ses[0]:.3g}"),
              "log_slope_negative": (slope < 0, f"log-linear slope {slope:.3f}")}
    return ExperimentResult("contraction-fourier", header, rows, {"fourier": (np.array(ts), vals, ses)}, checks,
                            {"log_slope": slope, "s": mc.s}, [cfg.seed])


def _relaxation(cfg: ExperimentConfig):
    """Ensemble from the configured f0; first-marginal statistics at each record time."""
    params = cfg.params
    N = int(cfg.N)
    R = int(cfg.realizations or 4)
    ts = _record_times(cfg.t_end, cfg.opt("record_every"), cfg.dt)
    times, obs = landau_ensemble(params, N, range(R), cfg.seed, cfg.dt, cfg.t_end, ts, "state", cfg.opt("density"))
    gamma = equilibrium_gaussian(params)
    grng = _rng.numpy_rng(cfg.seed, 10_000_019)
    ref = grng.multivariate_normal(gamma.mean, gamma.covariance, size=(R, N))
    w2 = np.array([[wasserstein_exact(V[r], ref[r]) for r in range(R)] for V in obs])  # (T, R)
    pooled = [V.reshape(-1, params.d) for V in obs]
    rel = [relative_entropy_vs_gaussian(X, gamma, seed=cfg.seed) for X in pooled]
    ent = [knn_entropy(X, seed=cfg.seed) for X in pooled]
    return np.array(times), w2, rel, ent, gamma


def _relaxation_result(name, cfg, times, w2, rel, ent, gamma):
    R = w2.shape[1]
    w2m = w2.mean(1)
    w2se = w2.std(1, ddof=1) / np.sqrt(R) if R > 1 else np.zeros(len(times))
    header = ["t", "w2_to_gamma", "w2_stderr", "relative_entropy", "relative_entropy_stderr", "knn_entropy",
              "knn_entropy_stderr"]
    rows = [[float(t), float(a), float(b), r.value, r.stderr, e.value, e.stderr]
            for t, a, b, r, e in zip(times, w2m, w2se, rel, ent)]
    plot = {"w2_to_gamma": (times, w2m, w2se),
            "relative_entropy": (times, np.array([r.value for r in rel]), np.array([r.stderr for r in rel])),
            "knn_entropy": (times, np.array([e.value for e in ent]), np.array([e.stderr for e in ent]))}
    return header, rows, plot


def _w2_checks(cfg, times, w2):
    fit = stats.linregress(times, np.log(w2.mean(1)))
    p_one_sided = fit.pvalue / 2 if fit.slope < 0 else 1 - fit.pvalue / 2
    pmax = float(cfg.opt("p_value") or 0.01)
    m = w2.mean(1)
    se = w2.std(1, ddof=1) / np.sqrt(w2.shape[1]) if w2.shape[1] > 1 else np.zeros(len(m))
    dec = bool(m[-1] + 3 * se[-1] < m[0])
    return {"w2_log_slope": (fit.slope < 0 and p_one_sided < pmax,
                             f"slope {fit.slope:.3f}, one-sided p = {p_one_sided:.2e} (< {pmax:g})"),
            "w2_decreasing": (dec, "mean W2 to gamma at checkpoints: " + ", ".join(f"{x:.3f}" for x in m))}


def _entropy_checks(cfg, times, rel, ent):
    fmax = float(cfg.opt("final_max") if cfg.opt("final_max") is not None else 0.05)
    js = float(cfg.opt("jitter_sigma") if cfg.opt("jitter_sigma") is not None else 2.0)
    ev = np.array([e.value for e in ent])
    es = np.array([e.stderr for e in ent])
    rises = np.diff(ev) - js * np.sqrt(es[1:] ** 2 + es[:-1] ** 2)
    rv = np.array([r.value for r in rel])
    return {"relative_entropy_final": (rv[-1] <= fmax, f"H(f|gamma) at t={times[-1]:g}: {rv[-1]:.4f} +- {rel[-1].stderr:.3f} (<= {fmax})"),
            "relative_entropy_decreasing": (rv[-1] < rv[0], f"{rv[0]:.4f} -> {rv[-1]:.4f}"),
            "entropy_nonincreasing": (bool(np.all(rises <= 0)),
                                      f"largest rise beyond {js:g} sigma: {float(rises.max()):.4f}")}


def run_equilibrate(cfg: ExperimentConfig) -> ExperimentResult:
    times, w2, rel, ent, gamma = _relaxation(cfg)
    header, rows, plot = _relaxation_result("equilibrate", cfg, times, w2, rel, ent, gamma)
    return ExperimentResult("equilibrate", header, rows, plot, _w2_checks(cfg, times, w2), {}, [cfg.seed])


def run_entropy(cfg: ExperimentConfig) -> ExperimentResult:
    times, w2, rel, ent, gamma = _relaxation(cfg)
    header, rows, plot = _relaxation_result("entropy", cfg, times, w2, rel, ent, gamma)
    return ExperimentResult("entropy", header, rows, plot, _entropy_checks(cfg, times, rel, ent), {}, [cfg.seed])


def run_relaxation_both(cfg: ExperimentConfig) -> ExperimentResult:
    """W2 and entropy checks from a single run."""
    times, w2, rel, ent, gamma = _relaxation(cfg)
    header, rows, plot = _relaxation_result("equilibrate", cfg, times, w2, rel, ent, gamma)
    checks = _w2_checks(cfg, times, w2)
    checks.update(_entropy_checks(cfg, times, rel, ent))
    return ExperimentResult("equilibrate+entropy", header, rows, plot, checks, {}, [cfg.seed])


def run_moments(cfg: ExperimentConfig) -> ExperimentResult:
    """Ensemble pressure tensor against the closed second-moment flow."""
    params = cfg.params
    d = params.d
    R = int(cfg.realizations)
    ts = _record_times(cfg.t_end, cfg.opt("record_every"), cfg.dt)
    times, obs = landau_ensemble(params, int(cfg.N), range(R), cfg.seed, cfg.dt, cfg.t_end, ts, "pressure",
                                 cfg.opt("density"))
    P = np.stack(obs, axis=1)  # (R, T, d, d)
    mean = P.mean(0)
    rng = _rng.numpy_rng(cfg.seed, 7)
    nb = int(cfg.opt("n_boot"))
    boots = np.stack([P[rng.integers(0, R, R)].mean(0) for _ in range(nb)])
    se = boots.std(0, ddof=1)
    P0 = mean[0]
    ref = np.stack([evolve_pressure(P0, t, params).pressure for t in times])
    k = float(cfg.opt("n_sigma"))
    iu = np.triu_indices(d)
    dev = np.abs(mean - ref)[:, iu[0], iu[1]]
    sev = se[:, iu[0], iu[1]]
    # t = 0 is the reference's own initial value
    within = bool(np.all(dev[1:] <= k * sev[1:]))
    worst = float(np.max(dev[1:] / sev[1:]))
    E = params.energy
    y = mean[:, 0, 0] - E / d
    sy = np.maximum(se[:, 0, 0], 1e-12)
    popt, pcov = optimize.curve_fit(lambda t, A, kk: A * np.exp(-kk * t), times, y, p0=(y[0], relaxation_rate(params)),
                                    sigma=sy, absolute_sigma=True)
    rate = float(popt[1])
    target = relaxation_rate(params)
    rel_err = abs(rate - target) / target
    header = ["t"] + [f"P{a + 1}{b + 1}" for a, b in zip(*iu)] + [f"P{a + 1}{b + 1}_stderr" for a, b in zip(*iu)] + \
             [f"P{a + 1}{b + 1}_ode" for a, b in zip(*iu)]
    rows = [[float(t)] + list(mean[i][iu]) + list(se[i][iu]) + list(ref[i][iu]) for i, t in enumerate(times)]
    plot = {f"P{a + 1}{b + 1}": (times, mean[:, a, b], se[:, a, b]) for a, b in zip(*iu)}
    plot.update({f"P{a + 1}{b + 1}_ode": (times, ref[:, a, b], np.zeros(len(times))) for a, b in zip(*iu)})
    checks = {"within_bands": (within, f"max |P - P_ode| / stderr = {worst:.2f} (<= {k:g})"),
              "relaxation_rate": (rel_err <= float(cfg.opt("rate_tol")),
                                  f"fitted rate {rate:.3f} +- {float(np.sqrt(pcov[1, 1])):.3f} vs {target:g} (rel. err {rel_err:.3f})")}
    return ExperimentResult("moments", header, rows, plot, checks, {"fitted_rate": rate, "target_rate": target},
                            [cfg.seed])


RUNNERS = {
    "conserve": run_conserve,
    "grazing": run_grazing,
    "consistency": run_consistency,
    "chaos-sweep": run_chaos_sweep,
    "contraction-w2": run_contraction_w2,
    "contraction-fourier": run_contraction_fourier,
    "equilibrate": run_equilibrate,
    "entropy": run_entropy,
    "moments": run_moments,
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    diags = validate(cfg)
    if diags:
        raise ModelError("invalid config: " + "; ".join(diags))
    return RUNNERS[cfg.experiment](cfg)
