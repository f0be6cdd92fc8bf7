import math

import numpy as np
import pytest

from qhmc.errors import InvalidParameterError
from qhmc.integrator import IntegratorConfig, PhasePoint, integrate
from qhmc.inverse.gravity import (PAPER_SENSORS, GravityModel, gravity_forward, gravity_hamiltonian,
                                  gravity_potential, make_gravity_problem, posterior_mode)
from qhmc.qcalc import DeformationParameter, force_field


def test_forward_directly_above():
    assert gravity_forward(0.2, 0.3, 0.3) == pytest.approx(25.0, rel=1e-14)


def test_forward_offset():
    assert gravity_forward(0.2, 0.5, 0.3) == pytest.approx(8.83883, abs=1e-4)


@pytest.mark.parametrize("delta", [0.05, 0.3, 1.0])
def test_forward_symmetric_in_offset(delta):
    assert gravity_forward(0.2, 0.3 + delta, 0.3) == pytest.approx(gravity_forward(0.2, 0.3 - delta, 0.3),
                                                                   rel=1e-14)


def test_forward_vectorized_over_sensors():
    g = gravity_forward(0.2, np.array(PAPER_SENSORS), 0.3)
    assert g.shape == (5,)
    assert g[0] == pytest.approx(0.2 / (0.09 + 0.04) ** 1.5)


@pytest.mark.parametrize("h", [0.0, -0.1])
def test_forward_rejects_nonpositive_depth(h):
    with pytest.raises(InvalidParameterError):
        gravity_forward(h, 0.0, 0.3)


@pytest.mark.parametrize("h", [0.0, -0.2, -1e-12])
def test_potential_infinite_above_surface(h):
    model, _ = make_gravity_problem()
    assert gravity_potential(h, model) == math.inf
    assert np.all(model.potential_batch(np.full(20, h)) == math.inf)


def test_potential_formula():
    model = GravityModel(0.3, [0.0, 0.5], 0.1, [1.0, 2.0], 0.3, 0.05)
    h = 0.25
    g = gravity_forward(h, np.array([0.0, 0.5]), 0.3)
    expected = np.sum((g - [1.0, 2.0]) ** 2) / (2 * 0.01) + (h - 0.3) ** 2 / (2 * 0.0025)
    assert gravity_potential(h, model) == pytest.approx(expected, rel=1e-13)


def test_scalar_and_vector_paths_agree():
    model, _ = make_gravity_problem(seed=4)
    h = np.linspace(0.05, 0.6, 40)
    small = np.concatenate([model.potential_batch(h[i:i + 4]) for i in range(0, 40, 4)])
    np.testing.assert_allclose(model.potential_batch(h), small, rtol=1e-13)


def test_noise_free_flat_prior_minimizer():
    model, _ = make_gravity_problem(prior_mean=0.2, prior_std=1e6, noise=False)
    assert posterior_mode(model) == pytest.approx(0.2, abs=1e-3)


@pytest.mark.parametrize("seed", range(8))
def test_posterior_mode_bracket_across_noise(seed):
    model, _ = make_gravity_problem(seed=seed)
    assert 0.15 <= posterior_mode(model) <= 0.3


def test_problem_is_seeded_and_serializable():
    a, rec_a = make_gravity_problem(seed=3)
    b, rec_b = make_gravity_problem(seed=3)
    np.testing.assert_array_equal(a.data, b.data)
    assert rec_a == rec_b
    c = GravityModel.from_dict(rec_a)
    np.testing.assert_array_equal(c.data, a.data)
    assert rec_a["true_h"] == 0.2 and len(rec_a["noise"]) == 5


@pytest.mark.parametrize("kw", [dict(sensors=[]), dict(data=[1.0]), dict(sigma=0.0), dict(prior_std=-1.0)])
def test_model_validation(kw):
    base = dict(x_f=0.3, sensors=[0.0, 0.5], sigma=0.1, data=[1.0, 2.0], prior_mean=0.3, prior_std=0.05)
    base.update(kw)
    if "sensors" in kw and not kw["sensors"]:
        base["data"] = []
    with pytest.raises(InvalidParameterError):
        GravityModel(**base)


def test_forward_difference_force_at_q1():
    model, _ = make_gravity_problem()
    H = gravity_hamiltonian(model, forward_difference_step=1e-8)
    x = np.array([0.22])
    f = force_field(H, x, np.zeros(1), DeformationParameter(1.0))
    step = 1e-8
    fd = (gravity_potential(0.22 + step, model) - gravity_potential(0.22, model)) / step
    assert f[0] == pytest.approx(fd, rel=1e-12)


def test_jackson_force_is_default():
    model, _ = make_gravity_problem()
    H = gravity_hamiltonian(model)
    assert H.potential_qgrad is None
    dp = DeformationParameter(0.9999)
    x = 0.22
    jd = (gravity_potential(dp.q ** 2 * x, model) - gravity_potential(x, model)) / ((dp.q ** 2 - 1) * x)
    f = force_field(H, np.array([x]), np.zeros(1), dp)
    assert f[0] == pytest.approx(math.sqrt(dp.q) * jd, rel=1e-10)


def test_trajectory_stays_positive_or_diverges():
    model, _ = make_gravity_problem()
    H = gravity_hamiltonian(model)
    r = integrate(PhasePoint([0.02], [-5.0]), H, IntegratorConfig(0.05, 20, DeformationParameter(0.9999)))
    assert r.diverged or r.end.x[0] > 0
