import math

import numpy as np
import pytest

from arbilomod import estimator
from arbilomod.assembly import stiffness_matrix, triangle_centroids
from arbilomod.estimator import (EstimatorConstants, alpha_lb_analytic,
                                 estimate_global, estimate_localized,
                                 estimate_relative, gamma_ub_analytic,
                                 patch_indicators, residual, residual_dual_norm)

from conftest import random_free_field

CONSTS = EstimatorConstants()


class TestResidual:
    def test_full_solve_has_zero_residual(self, small):
        system = small["system"]
        mu = 1e3
        u = system.solve(mu)
        r = residual(system, u, mu)
        fnorm = np.linalg.norm(system.rhs(mu))
        assert np.abs(r).max() <= 1e-9 * fnorm

    def test_shift_state_gives_rhs(self, small):
        system = small["system"]
        mu = 10.0
        r = residual(system, system.shift, mu)
        free = system.dofs.free_dofs
        assert np.allclose(r[free], system.rhs(mu)[free], atol=1e-14)

    def test_matches_dense_recomputation(self, small):
        system = small["system"]
        rng = np.random.default_rng(0)
        mu = 42.0
        u = system.shift + random_free_field(system.dofs, system.mesh.num_nodes, rng)
        r = residual(system, u, mu)
        A = system.matrix(mu).toarray()
        dense = system.rhs(mu) - A @ (u - system.shift)
        free = system.dofs.free_dofs
        assert np.allclose(r[free], dense[free], atol=1e-10)


@pytest.fixture(scope="module")
def oracle_states(small_model):
    """Reduced states of varying quality with their full-solve references."""
    model = small_model
    system = model.system
    rng = np.random.default_rng(12)
    states = []
    for mu in model.parameters:
        exact = model.full_solve(mu)
        coef, approx = model.solve_reduced(mu)
        states.append((mu, approx, exact))
        for scale in (1e-3, 1e-1, 1.0):
            noisy = approx + scale * random_free_field(system.dofs,
                                                       system.mesh.num_nodes, rng)
            states.append((mu, noisy, exact))
    return model, states


class TestGlobalEstimator:
    def test_exact_solution_estimates_zero(self, small):
        system = small["system"]
        mu = 1.0
        u = system.solve(mu)
        r = residual(system, u, mu)
        scale = system.v_norm(u)
        assert estimate_global(system, r, mu, CONSTS) <= 1e-9 * scale

    def test_bound_validity(self, oracle_states):
        model, states = oracle_states
        system = model.system
        for mu, utilde, exact in states:
            r = residual(system, utilde, mu)
            delta = estimate_global(system, r, mu, CONSTS)
            err = system.v_norm(utilde - exact)
            assert delta >= err * (1 - 1e-9)

    def test_efficiency(self, oracle_states):
        model, states = oracle_states
        system = model.system
        for mu, utilde, exact in states:
            r = residual(system, utilde, mu)
            delta = estimate_global(system, r, mu, CONSTS)
            err = system.v_norm(utilde - exact)
            bound = gamma_ub_analytic(mu) / alpha_lb_analytic(mu) * err
            assert delta <= bound * (1 + 1e-9)


class TestLocalizedEstimator:
    def test_zero_residual_zero_indicators(self, small):
        system, decomp = small["system"], small["decomp"]
        ind = patch_indicators(system, decomp, np.zeros(system.mesh.num_nodes))
        assert np.abs(ind).max() == 0.0

    def test_indicator_zero_where_residual_vanishes(self, small):
        system, decomp = small["system"], small["decomp"]
        rng = np.random.default_rng(1)
        r = np.zeros(system.mesh.num_nodes)
        target = decomp.classes[decomp.vertices[0]]
        far = decomp.classes[decomp.vertices[-1]]
        r[target.footprint] = rng.standard_normal(len(target.footprint))
        r[np.intersect1d(target.footprint, far.footprint)] = 0.0
        ind = patch_indicators(system, decomp, r)
        assert ind[len(decomp.vertices) - 1] == 0.0

    def test_grouping_inequality(self, small):
        """sum_xi ||f||^2_{O'_xi} <= J ||f||^2_{V'} with J = 4."""
        system, decomp, dofs = small["system"], small["decomp"], small["dofs"]
        rng = np.random.default_rng(2)
        for _ in range(20):
            f = random_free_field(dofs, system.mesh.num_nodes, rng)
            ind = patch_indicators(system, decomp, f)
            total = residual_dual_norm(system, f)
            assert (ind ** 2).sum() <= 4.0 * total ** 2 * (1 + 1e-8)

    def test_localized_dominates_global_with_cpu_one(self, oracle_states):
        model, states = oracle_states
        system, decomp = model.system, model.decomp
        for mu, utilde, exact in states:
            r = residual(system, utilde, mu)
            delta = estimate_global(system, r, mu, CONSTS)
            delta_loc, _ = estimate_localized(system, decomp, r, mu, CONSTS)
            err = system.v_norm(utilde - exact)
            assert delta_loc >= err * (1 - 1e-9)
            assert delta_loc <= 2.0 * delta * (1 + 1e-9)      # sqrt(J) = 2

    def test_local_efficiency(self, oracle_states):
        """||R||_{O'_xi} <= gamma_mu |u - u~|_{Omega_xi,1} patch by patch."""
        model, states = oracle_states
        system, decomp = model.system, model.decomp
        mesh = system.mesh
        cent = triangle_centroids(mesh)
        K_by_patch = {}
        for k, vcid in enumerate(decomp.vertices):
            px, py = decomp.classes[vcid].position
            H = 1.0 / decomp.domains_per_side
            inside = ((np.abs(cent[:, 0] - px) < H) & (np.abs(cent[:, 1] - py) < H))
            K_by_patch[k] = stiffness_matrix(mesh, np.flatnonzero(inside))
        for mu, utilde, exact in states[:8]:
            r = residual(system, utilde, mu)
            ind = patch_indicators(system, decomp, r)
            e = utilde - exact
            for k in K_by_patch:
                semi = math.sqrt(max(e @ (K_by_patch[k] @ e), 0.0))
                assert ind[k] <= gamma_ub_analytic(mu) * semi * (1 + 1e-9)


class TestRelativeEstimator:
    def test_zero(self):
        assert estimate_relative(0.0, 5.0) == 0.0

    def test_half_norm_gives_one(self):
        assert estimate_relative(2.5, 5.0) == pytest.approx(1.0)

    def test_not_applicable_signal(self):
        assert estimate_relative(5.0, 5.0) == math.inf
        assert estimate_relative(7.0, 5.0) == math.inf

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            estimate_relative(-1.0, 5.0)

    def test_validity_on_oracle_states(self, oracle_states):
        model, states = oracle_states
        system, decomp = model.system, model.decomp
        for mu, utilde, exact in states:
            r = residual(system, utilde, mu)
            delta = estimate_global(system, r, mu, CONSTS)
            delta_loc, _ = estimate_localized(system, decomp, r, mu, CONSTS)
            rel_err = system.v_norm(utilde - exact) / system.v_norm(exact)
            norm_u = system.v_norm(utilde)
            assert estimate_relative(delta, norm_u) >= rel_err * (1 - 1e-9)
            assert estimate_relative(delta_loc, norm_u) >= rel_err * (1 - 1e-9)
