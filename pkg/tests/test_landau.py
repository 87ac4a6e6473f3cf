import numpy as np
import pytest

from landau_chaos import _rng
from landau_chaos.core import ModelError, ModelParams, ParticleState
from landau_chaos.landau import (BlowUpError, IntegratorConfig, NoiseStream, advance, em_step, generator_landau,
                                 run_ensemble, simulate, weak_generator_check)
from landau_chaos.observables import (Additive, GaussianBump, PairProduct, energy_fn, momentum_fn, sine_of_energy,
                                      square_of_energy)
from landau_chaos.sphere import BoltzmannSphereSpec, sample_uniform_sphere

P = ModelParams()


def _state(N=6, seed=0, r=0):
    return sample_uniform_sphere(BoltzmannSphereSpec(N, P), seed, r)


def test_drift_step_is_linear_relaxation_to_mean():
    s = _state(5)
    out = em_step(s, 0.01, P)
    V = s.velocities
    expected = V - 2 * 0.01 * P.lam * (P.d - 1) * (V - V.mean(0))
    assert np.allclose(out.velocities, expected, atol=1e-14)
    assert out.time == pytest.approx(0.01)


def test_noise_step_conserves_momentum_exactly():
    s = _state(7)
    out = em_step(s, 0.01, P, NoiseStream.from_seed(3))
    assert np.allclose(out.momentum(), s.momentum(), atol=1e-14)


def test_exchangeability_under_relabelling():
    # permuting particles together with their labels permutes the trajectory
    V = _state(3, seed=4).velocities
    key = _rng.stream_keys(11, [0])
    A = np.ascontiguousarray(V[None].copy())
    advance(A, key, P, 0.01, 50, labels=np.arange(3))
    for perm in ([1, 2, 0], [2, 1, 0], [0, 2, 1]):
        B = np.ascontiguousarray(V[perm][None].copy())
        advance(B, key, P, 0.01, 50, labels=np.arange(3)[perm])
        assert np.allclose(B[0], A[0][perm], atol=1e-12, rtol=0)


def test_chunked_advance_matches_single_call():
    V = _state(8).velocities
    keys = _rng.stream_keys(2, [5])
    A = np.ascontiguousarray(V[None].copy())
    B = A.copy()
    advance(A, keys, P, 0.005, 10, project=True, energy=3.0, momentum=np.zeros(3))
    advance(B, keys, P, 0.005, 4, step0=0, project=True, energy=3.0, momentum=np.zeros(3))
    advance(B, keys, P, 0.005, 6, step0=4, project=True, energy=3.0, momentum=np.zeros(3))
    assert np.array_equal(A, B)


def test_simulate_conserves_and_is_reproducible():
    s = _state(16)
    cfg = IntegratorConfig(1e-3, 0.5, True, record_stride=100)
    rec = simulate(s, cfg, P, seed=1)
    assert rec.max_energy_drift(3.0) <= 1e-12 * 3.0
    assert rec.max_momentum() <= 1e-12
    rec2 = simulate(s, cfg, P, seed=1)
    assert np.array_equal(rec.snapshots[-1][1].velocities, rec2.snapshots[-1][1].velocities)
    assert len(rec.snapshots) == 6


def test_run_ensemble_keeps_each_realization_on_its_sphere():
    V0 = np.stack([_state(10, r=r).velocities * (1 + r) for r in range(3)])
    e0 = [ParticleState(v).energy() for v in V0]
    times, obs, V = run_ensemble(V0, P, IntegratorConfig(0.01, 0.2), seed=0, record_times=[0.1, 0.2],
                                 observe=lambda t, X: X.copy())
    assert np.allclose(times, [0.1, 0.2])
    for r in range(3):
        assert ParticleState(V[r]).energy() == pytest.approx(e0[r], rel=1e-13)


def test_trajectory_csv(tmp_path):
    rec = simulate(_state(4), IntegratorConfig(0.01, 0.02), P, seed=0)
    path = tmp_path / "traj.csv"
    rec.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,particle,vx,vy,vz"
    assert len(lines) == 1 + 3 * 4


def test_blowup_is_reported():
    V = np.ascontiguousarray(_state(4).velocities[None] * 10)
    with pytest.raises(BlowUpError):
        advance(V, _rng.stream_keys(0, [0]), P, 10.0, 200)


def test_advance_rejects_bad_input():
    with pytest.raises(ModelError):
        advance(np.zeros((3, 3)), np.zeros(1, np.uint64), P, 0.1, 1)
    with pytest.raises(ModelError):
        em_step(_state(3), 0.0, P)


@pytest.mark.parametrize("phi", [momentum_fn(0), momentum_fn(2), energy_fn(), sine_of_energy(), square_of_energy(0.3)],
                         ids=["mom0", "mom2", "energy", "sin_energy", "square_energy"])
def test_generator_annihilates_conserved_functions(phi):
    for r in range(5):
        assert abs(generator_landau(phi, _state(7, r=r), P)) <= 1e-10


def test_generator_nonzero_on_generic_function():
    assert abs(generator_landau(Additive(GaussianBump(np.zeros(3))), _state(6), P)) > 1e-2


@pytest.mark.slow
@pytest.mark.parametrize("phi", [Additive(GaussianBump(np.zeros(3))), PairProduct(0, 1, 0, 0)], ids=["bump", "pair"])
def test_weak_generator_matches_dynkin_estimate(phi):
    s = _state(6, seed=2)
    G = generator_landau(phi, s, P)
    mean, se = weak_generator_check(phi, s, 0.005, 200_000, P, seed=0)
    assert abs(mean - G) <= 0.1 * abs(G) + 4 * se


def test_two_particle_generator_matches_hand_expansion():
    # phi = v_{1,1} v_{2,1}, N = 2:  G = lam (d-1) (x-y)^2 - lam (|z|^2 - z_1^2)
    V = np.array([[0.7, -0.2, 0.4], [-0.1, 0.5, 1.1]])
    z = V[0] - V[1]
    x, y = V[0, 0], V[1, 0]
    p = ModelParams(lam=1.7)
    expected = p.lam * 2 * (x - y) ** 2 - p.lam * (z @ z - z[0] ** 2)
    assert generator_landau(PairProduct(0, 1, 0, 0), ParticleState(V), p) == pytest.approx(expected, rel=1e-13)


def test_two_particle_drift_example():
    s = ParticleState(np.array([[1.0, 0, 0], [-1.0, 0, 0]]))
    out = em_step(s, 0.01, P)
    assert np.allclose(out.velocities[0], [1 - 4 * 0.01, 0, 0])


def test_coincident_particles_are_fixed():
    s = ParticleState(np.array([[0.3, 0.1, -0.2], [0.3, 0.1, -0.2]]))
    out = em_step(s, 0.1, P, NoiseStream.from_seed(0))
    assert np.array_equal(out.velocities, s.velocities)


def test_vanishing_lambda_freezes_velocities():
    # lam must be positive; at lam = 1e-200 every increment underflows against O(1) velocities
    p = ModelParams(lam=1e-200)
    s = _state(5)
    rec = simulate(s, IntegratorConfig(0.01, 0.1, enforce_sphere=False), p, seed=0)
    assert np.array_equal(rec.snapshots[-1][1].velocities, s.velocities)
    mean, se = weak_generator_check(energy_fn(), s, 0.01, 100, p, seed=0)
    assert mean == 0.0


def test_weak_check_energy_is_zero_in_law_up_to_the_euler_term():
    # G energy = 0; one Euler step adds exactly |drift|^2 / dt = (2 lam (d-1))^2 dt sum |v_i - m|^2
    s = _state(4)
    for dt in (0.01, 0.001):
        mean, se = weak_generator_check(energy_fn(), s, dt, 20_000, P, seed=1)
        c = s.velocities - s.momentum()
        bias = (2 * P.lam * (P.d - 1)) ** 2 * dt * np.sum(c * c)
        assert abs(mean - bias) <= 3 * se


def test_weak_error_is_first_order_in_dt():
    # halving dt roughly halves the Dynkin discrepancy
    s = _state(6, seed=2)
    phi = Additive(GaussianBump(np.zeros(3)))
    G = generator_landau(phi, s, P)
    err = []
    for dt in (0.02, 0.01):
        mean, se = weak_generator_check(phi, s, dt, 400_000, P, seed=3)
        err.append(mean - G)
    assert 1.3 < err[0] / err[1] < 3.0
