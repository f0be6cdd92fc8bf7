import math

import numpy as np
import pytest

from qhmc.errors import InvalidParameterError
from qhmc.inverse.diffusion import (DiffusionModel, KLBasis, adjoint_solve, diffusion_hamiltonian,
                                    diffusion_posterior_potential, diffusion_solve, direct_jackson_perturbation,
                                    functional_gradient_field, grid_nodes, kl_expand, make_diffusion_problem,
                                    misfit, reconstruction_metrics, stiffness_matrix, true_log_coefficient)
from qhmc.integrator import IntegratorConfig
from qhmc.qcalc import DeformationParameter
from qhmc.sampler import AdaptConfig, SamplerConfig, run_chain


def manufactured(n, alpha_value=1.0, source=None):
    src = source or (lambda x: np.pi ** 2 * np.sin(np.pi * x))
    return DiffusionModel(n, src, [0.5], 0.1, [0.0], KLBasis(3))


def max_error(n):
    m = manufactured(n)
    u = diffusion_solve(np.ones(n + 2), m)
    return np.max(np.abs(u - np.sin(np.pi * m.grid)))


@pytest.fixture(scope="module")
def problem():
    return make_diffusion_problem()


@pytest.fixture(scope="module")
def random_state(problem):
    model, _ = problem
    theta = np.random.default_rng(8).normal(size=model.kl.n_modes)
    alpha = kl_expand(theta, model.kl, model.grid)
    return model, theta, alpha


class TestForwardSolver:
    def test_manufactured_second_order(self):
        for n in (20, 40, 80, 160):
            h = 1.0 / (n + 1)
            assert max_error(n) <= 2 * h * h

    def test_convergence_ratio(self):
        ratio = max_error(80) / max_error(160)
        assert 3.5 <= ratio <= 4.5

    def test_boundary_values(self):
        u = diffusion_solve(np.ones(82), manufactured(80))
        assert u[0] == 0.0 and u[-1] == 0.0 and u.size == 82

    def test_zero_source(self):
        m = manufactured(30, source=lambda x: np.zeros_like(x))
        alpha = np.exp(np.random.default_rng(0).normal(size=32))
        assert np.all(diffusion_solve(alpha, m) == 0.0)

    def test_coefficient_scaling(self):
        m = manufactured(50)
        u1 = diffusion_solve(np.ones(52), m)
        u2 = diffusion_solve(np.full(52, 2.0), m)
        np.testing.assert_allclose(u2, 0.5 * u1, rtol=1e-13, atol=1e-16)

    def test_matches_dense_solve(self, random_state):
        model, _, alpha = random_state
        u = diffusion_solve(alpha, model)
        dense = np.linalg.solve(stiffness_matrix(alpha, model.h), model.load)
        np.testing.assert_allclose(u[1:-1], dense, rtol=1e-11)

    def test_residual_of_three_point_scheme(self, random_state):
        model, _, alpha = random_state
        u = diffusion_solve(alpha, model)
        a = 0.5 * (alpha[:-1] + alpha[1:])
        flux = a * np.diff(u) / model.h
        np.testing.assert_allclose(-np.diff(flux) / model.h, model.load, rtol=1e-9)

    @pytest.mark.parametrize("alpha", [np.zeros(12), -np.ones(12), np.ones(11)])
    def test_bad_alpha(self, alpha):
        with pytest.raises(InvalidParameterError):
            diffusion_solve(alpha, manufactured(10))

    def test_self_adjoint(self, random_state):
        model, _, alpha = random_state
        A = stiffness_matrix(alpha, model.h)
        rng = np.random.default_rng(1)
        lam, v = rng.normal(size=(2, model.grid_n))
        lhs = lam @ (A @ v)
        assert lhs == pytest.approx((A @ lam) @ v, rel=1e-10)
        np.testing.assert_array_equal(A, A.T)


class TestAdjoint:
    def test_zero_residual(self, random_state):
        model, _, alpha = random_state
        u = diffusion_solve(alpha, model)
        exact = model.with_data(u[model.obs_nodes])
        assert np.all(adjoint_solve(alpha, u, exact) == 0.0)

    def test_single_observation_green_function(self):
        n, sigma = 40, 0.1
        m = DiffusionModel(n, lambda x: np.ones_like(x), [0.3], sigma, [0.0], KLBasis(3))
        alpha = np.ones(n + 2)
        u = diffusion_solve(alpha, m)
        m = m.with_data([u[m.obs_nodes[0]] - 1.0])
        lam = adjoint_solve(alpha, u, m)
        e = np.zeros(n)
        e[m.obs_nodes[0] - 1] = 1.0
        green = np.linalg.solve(stiffness_matrix(alpha, m.h), e)
        np.testing.assert_allclose(lam[1:-1], green / (sigma ** 2 * m.h), rtol=1e-11)
        assert lam[0] == 0.0 and lam[-1] == 0.0

    def test_observation_nodes(self, problem):
        model, rec = problem
        assert model.obs_nodes.size == 70
        assert model.obs_nodes.min() >= 1 and model.obs_nodes.max() <= 80
        np.testing.assert_allclose(model.grid[model.obs_nodes], model.obs_points, atol=model.h / 2 + 1e-15)
        assert rec["obs_nodes"] == model.obs_nodes.tolist()


class TestGradientField:
    def test_zero_adjoint(self, random_state):
        model, _, alpha = random_state
        u = diffusion_solve(alpha, model)
        assert np.all(functional_gradient_field(alpha, u, np.zeros_like(u)) == 0.0)

    def test_manufactured_product(self):
        errs = []
        for n in (40, 80):
            x = grid_nodes(n)
            u, lam = np.sin(np.pi * x), np.sin(2 * np.pi * x)
            g = functional_gradient_field(np.ones_like(x), u, lam)
            exact = -np.pi * np.cos(np.pi * x) * 2 * np.pi * np.cos(2 * np.pi * x)
            errs.append(np.max(np.abs(g - exact)[1:-1]))
        assert 3.5 <= errs[0] / errs[1] <= 4.5

    @pytest.mark.parametrize("q", [0.9999, 1.0001])
    def test_matches_direct_jackson_perturbation(self, random_state, q):
        model, _, alpha = random_state
        u = diffusion_solve(alpha, model)
        g = functional_gradient_field(alpha, u, adjoint_solve(alpha, u, model))
        tol = max(0.05, 10 * abs(q * q - 1))
        checked = 0
        for node in range(1, model.grid_n + 1):
            if abs(g[node]) <= 1e-8:
                continue
            d = direct_jackson_perturbation(alpha, node, q, model, density=True)
            assert d == pytest.approx(g[node], rel=tol)
            checked += 1
        assert checked > 60

    def test_sign_agreement(self, random_state):
        model, _, alpha = random_state
        u = diffusion_solve(alpha, model)
        g = functional_gradient_field(alpha, u, adjoint_solve(alpha, u, model))
        for node in np.random.default_rng(2).choice(np.arange(1, model.grid_n + 1), 10, replace=False):
            d = direct_jackson_perturbation(alpha, int(node), 0.9999, model)
            assert np.sign(d) == np.sign(g[node])

    def test_jackson_zero_residual(self, random_state):
        model, _, alpha = random_state
        u = diffusion_solve(alpha, model)
        exact = model.with_data(u[model.obs_nodes])
        q = 1.001
        for node in (1, 20, 41, 80):
            assert abs(direct_jackson_perturbation(alpha, node, q, exact)) <= 10 * abs(q * q - 1)

    def test_jackson_linear_in_q2_minus_1(self, random_state):
        model, _, alpha = random_state
        q = 1 + 1e-4
        q2 = math.sqrt(1 + 2 * (q * q - 1))
        for node in (5, 30, 60):
            a = direct_jackson_perturbation(alpha, node, q, model)
            b = direct_jackson_perturbation(alpha, node, q2, model)
            assert a == pytest.approx(b, rel=0.05)

    def test_jackson_needs_q_not_one(self, random_state):
        model, _, alpha = random_state
        with pytest.raises(InvalidParameterError):
            direct_jackson_perturbation(alpha, 3, 1.0, model)


class TestKL:
    def test_eigenvalues(self):
        kl = KLBasis(9, 1.0)
        assert math.sqrt(kl.eigenvalues[0]) == pytest.approx(0.31831, abs=1e-5)
        assert np.all(np.diff(kl.eigenvalues) < 0) and np.all(kl.eigenvalues > 0)

    def test_zero_theta(self):
        kl = KLBasis(9)
        assert np.all(kl_expand(np.zeros(9), kl, grid_nodes(20)) == 1.0)

    def test_single_mode_value(self):
        kl = KLBasis(3, 1.0)
        alpha = kl_expand([1.0, 0.0, 0.0], kl, np.array([0.5]))
        assert math.log(alpha[0]) == pytest.approx(0.450158, abs=1e-5)

    def test_wrong_length(self):
        with pytest.raises(InvalidParameterError):
            kl_expand(np.zeros(4), KLBasis(3), grid_nodes(5))

    @pytest.mark.parametrize("kw", [dict(n_modes=0), dict(n_modes=3, smoothness=0.0)])
    def test_bad_basis(self, kw):
        with pytest.raises(InvalidParameterError):
            KLBasis(**kw)


class TestPosteriorPotential:
    def test_value(self, random_state):
        model, theta, alpha = random_state
        U, _ = diffusion_posterior_potential(theta, model)
        J = misfit(diffusion_solve(alpha, model), model)
        assert U == pytest.approx(J / model.sigma ** 2 + 0.5 * theta @ theta, rel=1e-12)

    def test_zero_residual(self, problem):
        model, _ = problem
        u = diffusion_solve(np.ones(model.grid_n + 2), model)
        exact = model.with_data(u[model.obs_nodes])
        U, g = diffusion_posterior_potential(np.zeros(model.kl.n_modes), exact)
        assert U == 0.0
        np.testing.assert_allclose(g, 0.0, atol=1e-9)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_gradient_matches_finite_differences(self, problem, seed):
        model, _ = problem
        theta = 0.5 * np.random.default_rng(seed).normal(size=model.kl.n_modes)
        _, g = diffusion_posterior_potential(theta, model)
        step = 1e-5
        for k in range(theta.size):
            e = np.zeros_like(theta)
            e[k] = step
            fd = (diffusion_posterior_potential(theta + e, model)[0]
                  - diffusion_posterior_potential(theta - e, model)[0]) / (2 * step)
            assert g[k] == pytest.approx(fd, rel=1e-3)

    def test_hamiltonian_caches_without_changing_values(self, problem):
        model, _ = problem
        H = diffusion_hamiltonian(model)
        theta = np.random.default_rng(5).normal(size=model.kl.n_modes)
        U, g = diffusion_posterior_potential(theta, model)
        assert H.potential(theta) == U
        np.testing.assert_array_equal(H.potential_qgrad(theta, DeformationParameter(0.9999)), g)
        assert H.potential(theta * 0.5) == diffusion_posterior_potential(theta * 0.5, model)[0]


class TestProblem:
    def test_truth_and_record(self, problem):
        model, rec = problem
        np.testing.assert_allclose(np.log(rec["alpha_true"]), true_log_coefficient(model.grid), atol=1e-15)
        assert len(rec["noise"]) == 70 and rec["sigma"] == 0.02
        again, rec2 = make_diffusion_problem()
        assert rec == rec2

    def test_noise_free_data(self):
        model, rec = make_diffusion_problem(noise=False)
        np.testing.assert_array_equal(model.data, np.asarray(rec["u_true"])[model.obs_nodes])

    def test_metrics(self):
        m = reconstruction_metrics([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert m["rmse"] == 0.0 and m["correlation"] == pytest.approx(1.0)
        m = reconstruction_metrics([1.0, 2.0, 3.0], [1.0, 2.0, 4.0])
        assert m["rmse"] == pytest.approx(math.sqrt(1 / 3))

    @pytest.mark.parametrize("kw", [dict(obs_points=[0.0]), dict(obs_points=[1.0]), dict(sigma=0.0),
                                    dict(data=[1.0, 2.0]), dict(grid_n=0)])
    def test_model_validation(self, kw):
        base = dict(grid_n=10, source=lambda x: x, obs_points=[0.5], sigma=0.1, data=[0.0], kl=KLBasis(2))
        base.update(kw)
        with pytest.raises(InvalidParameterError):
            DiffusionModel(**base)


def test_step_size_adaptation_on_the_reconstruction(problem):
    model, _ = problem
    H = diffusion_hamiltonian(model)
    cfg = SamplerConfig(IntegratorConfig(0.15, 20, DeformationParameter(0.9999)), 1_600, 0, 0,
                        AdaptConfig(0.5, 1_000, 0.05))
    chain = run_chain(np.zeros(model.kl.n_modes), H, cfg)
    assert math.isfinite(chain.final_dt) and chain.final_dt > 0
    assert np.all(chain.dt_trace[1_001:] == chain.final_dt)
    post = chain.accepted[1_000:].mean()
    assert 0.4 <= post <= 0.8
