import numpy as np
import pytest
from scipy import stats

from landau_chaos.core import ModelError, ModelParams, ParticleState
from landau_chaos.sphere import (BoltzmannSphereSpec, DegenerateConfiguration, DensitySpec, bimodal, project_array,
                                 project_to_sphere, sample_conditioned_tensor, sample_ensemble, sample_uniform_sphere)


def test_spec_validation():
    with pytest.raises(ModelError):
        BoltzmannSphereSpec(1, ModelParams())
    with pytest.raises(ModelError):
        BoltzmannSphereSpec(4, ModelParams(energy=0.0))


@pytest.mark.parametrize("N", [2, 3, 50])
def test_uniform_sample_lies_on_sphere(N):
    p = ModelParams(energy=2.0, momentum=(0.5, -0.2, 0.1))
    s = sample_uniform_sphere(BoltzmannSphereSpec(N, p), 7, 3)
    assert s.energy() == pytest.approx(2.0, rel=1e-13)
    assert np.allclose(s.momentum(), p.momentum_vec, atol=1e-14)


def test_uniform_sphere_marginal_is_nearly_gaussian():
    # one coordinate of a uniform point on a high-dimensional sphere is close to N(0, E/d)
    p = ModelParams(energy=3.0)
    V = sample_ensemble(BoltzmannSphereSpec(400, p), 1, range(10))
    x = V[:, :, 0].ravel()
    assert stats.kstest(x, "norm").pvalue > 1e-3


def test_uniform_sphere_is_rotation_invariant_across_realizations():
    p = ModelParams(energy=3.0)
    V = sample_ensemble(BoltzmannSphereSpec(3, p), 2, range(3000))
    # first particle, first vs second coordinate: same law
    assert stats.ks_2samp(V[:, 0, 0], V[:, 0, 1]).pvalue > 1e-3


def test_sampling_is_reproducible():
    spec = BoltzmannSphereSpec(20, ModelParams())
    a = sample_uniform_sphere(spec, 5, 9).velocities
    b = sample_uniform_sphere(spec, 5, 9).velocities
    c = sample_uniform_sphere(spec, 5, 10).velocities
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_projection_and_degenerate_state():
    p = ModelParams(energy=1.5)
    spec = BoltzmannSphereSpec(3, p)
    V = np.array([[1.0, 2, 3], [0, 1, 0], [2, 2, 2]])
    s = project_to_sphere(ParticleState(V), spec)
    assert s.energy() == pytest.approx(1.5)
    W = project_array(np.stack([V, 2 * V]), p)
    assert np.allclose(W[0], W[1])
    with pytest.raises(DegenerateConfiguration):
        project_to_sphere(ParticleState(np.ones((3, 3))), spec)


def test_density_spec_moments_and_conditioning():
    p = ModelParams(energy=3.0)
    f = DensitySpec.from_config({"kind": "gaussian", "covariance": [2.0, 0.5, 0.5]}, p)
    assert np.allclose(f.covariance(), np.diag([2.0, 0.5, 0.5]))
    assert f.energy() == pytest.approx(3.0)
    b = bimodal(3, 3.0)
    assert b.energy() == pytest.approx(3.0)
    assert np.allclose(b.mean(), 0)
    s = sample_conditioned_tensor(f, BoltzmannSphereSpec(2000, p), 0, 0)
    assert s.energy() == pytest.approx(3.0)
    P = s.velocities.T @ s.velocities / 2000
    assert np.allclose(P, np.diag([2.0, 0.5, 0.5]), atol=0.2)
    with pytest.raises(ModelError):
        DensitySpec.from_config({"kind": "nonsense"}, p)
