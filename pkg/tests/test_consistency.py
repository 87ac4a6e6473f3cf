import numpy as np
import pytest

from landau_chaos.consistency import (DEFAULT_BUMP_CENTERS, PolynomialFunctional, ProjectedPolynomial, apply_Ginf,
                                      apply_GN_projected, consistency_gap, consistency_sweep, dR, eval_R,
                                      generator_nonconservative)
from landau_chaos.core import EmpiricalMeasure, ModelError, ModelParams, empirical
from landau_chaos.landau import generator_landau
from landau_chaos.observables import (DampedPoly, GaussianBump, Speed2, energy_fn, fd_grad, fd_hess, momentum_fn,
                                      sine_of_energy)
from landau_chaos.sphere import BoltzmannSphereSpec, sample_uniform_sphere

P = ModelParams()
PHI = PolynomialFunctional.gaussian_bumps(DEFAULT_BUMP_CENTERS)


def _state(N, r=0):
    return sample_uniform_sphere(BoltzmannSphereSpec(N, P), 0, r)


def test_projected_polynomial_derivatives():
    V = _state(4).velocities
    phi = ProjectedPolynomial(PolynomialFunctional([GaussianBump(np.zeros(3)), DampedPoly(0, 1), Speed2()]))
    assert np.allclose(phi.grad(V), fd_grad(phi, V), atol=1e-8)
    assert np.allclose(phi.hess(V), fd_hess(phi, V), atol=1e-5)


def test_eval_and_first_variation():
    f = empirical(_state(10))
    m = [f.integrate(ob.value) for ob in PHI.factors]
    assert eval_R(PHI, f) == pytest.approx(m[0] * m[1])
    psi = dR(PHI, f)
    v = np.array([[0.1, 0.2, 0.3]])
    assert psi.value(v)[0] == pytest.approx(m[1] * PHI.factors[0].value(v)[0] + m[0] * PHI.factors[1].value(v)[0])
    with pytest.raises(ModelError):
        PolynomialFunctional([])


@pytest.mark.parametrize("N", [3, 6])
def test_product_rule_generator_matches_double_sum(N):
    s = _state(N, 1)
    assert apply_GN_projected(PHI, s, P) == pytest.approx(generator_landau(ProjectedPolynomial(PHI), s, P), rel=1e-12)


def test_single_factor_functional_has_no_gap():
    # l = 1: the projected generator equals the limit bracket exactly
    s = _state(8)
    one = PolynomialFunctional([GaussianBump(np.array([0.5, 0, 0]))])
    assert consistency_gap(one, s, P) == pytest.approx(0.0, abs=1e-13)


def test_gap_positive_for_bump_product():
    s = _state(8)
    assert consistency_gap(PHI, s, P) > 1e-6
    assert abs(apply_Ginf(PHI, empirical(s), P)) > 0


def test_small_sweep_slope_and_conserved_zero(tmp_path):
    sw = consistency_sweep(PHI, [8, 16, 32, 64], 3.0, 10, seed=1)
    assert -1.3 < sw.slope < -0.7
    path = tmp_path / "sweep.csv"
    sw.to_csv(path)
    assert path.read_text().splitlines()[0] == "N,gap_median,gap_max,slope_running"
    cons = consistency_sweep(PolynomialFunctional([Speed2(), Speed2()]), [8, 16], 3.0, 3, seed=1)
    assert cons.exact_zero
    with pytest.raises(ModelError):
        consistency_sweep(PHI, [16, 8], 3.0, 2, seed=0)


def test_nonconservative_generator():
    s = _state(6)
    assert abs(generator_nonconservative(energy_fn(), s, P)) < 1e-10
    assert abs(generator_nonconservative(momentum_fn(0), s, P)) < 1e-10
    assert abs(generator_nonconservative(sine_of_energy(1 / 3), s, P)) >= 1e-3
    assert abs(generator_landau(sine_of_energy(1 / 3), s, P)) < 1e-10


def test_polynomial_examples():
    from landau_chaos.observables import Constant
    a, b = np.array([0.2, 0.1, 0.0]), np.array([-0.4, 0.3, 1.0])
    f = EmpiricalMeasure(np.stack([a, b]))
    p1, p2 = GaussianBump(np.zeros(3)), DampedPoly(0, 1)
    two = PolynomialFunctional([p1, p2])
    oracle = 0.25 * (p1.value(a) + p1.value(b)) * (p2.value(a) + p2.value(b))
    assert eval_R(two, f) == pytest.approx(float(oracle))
    ones = PolynomialFunctional([Constant(), Constant()])
    assert eval_R(ones, f) == 1.0
    s = _state(5)
    assert apply_GN_projected(ones, s, P) == pytest.approx(0.0, abs=1e-15)
    assert apply_Ginf(ones, empirical(s), P) == pytest.approx(0.0, abs=1e-15)
    one = PolynomialFunctional([p1])
    v = np.array([[0.1, 0.2, 0.3]])
    assert dR(one, f).value(v)[0] == pytest.approx(p1.value(v)[0])


def test_first_variation_directional_derivative():
    f = empirical(_state(6))
    u, w = np.array([0.1, 0.2, -0.3]), np.array([-0.5, 0.0, 0.4])
    h = 1e-6
    atoms = np.concatenate([f.atoms, [u], [w]])
    weights = np.concatenate([f.weights * 1.0, [h], [0.0]])
    weights_minus = np.concatenate([f.weights * 1.0, [0.0], [h]])
    # f + h delta_u - h delta_w as a signed combination of two probability measures
    fp = EmpiricalMeasure(atoms, weights / weights.sum())
    fm = EmpiricalMeasure(atoms, weights_minus / weights_minus.sum())
    fd = (eval_R(PHI, fp) - eval_R(PHI, fm)) / h * (1 + h)
    psi = dR(PHI, f)
    assert fd == pytest.approx(psi.value(u[None])[0] - psi.value(w[None])[0], rel=1e-4, abs=1e-8)


def test_projected_generator_matches_finite_differences_at_N8():
    s = _state(8, 2)
    phi = ProjectedPolynomial(PHI)
    V = s.velocities

    class FD(ProjectedPolynomial):
        def grad(self, V):
            return fd_grad(phi, V)

        def hess(self, V):
            return fd_hess(phi, V)

    assert generator_landau(FD(PHI), s, P) == pytest.approx(apply_GN_projected(PHI, s, P), abs=1e-6)


def test_gap_is_linear_in_lambda():
    s = _state(8, 3)
    assert consistency_gap(PHI, s, ModelParams(lam=2.0)) == pytest.approx(2 * consistency_gap(PHI, s, P), rel=1e-10)


def test_conserved_functional_gap_is_zero_at_every_N():
    for N in (4, 16, 64):
        assert consistency_gap(PolynomialFunctional([Speed2()]), _state(N), P) < 1e-12
