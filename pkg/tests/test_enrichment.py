import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as npst

from arbilomod import enrichment, estimator
from arbilomod.enrichment import ConvergenceLog, EnrichmentConfig, mark
from arbilomod.geometry import GeometryModel
from arbilomod.greedy import CellGreedyConfig
from arbilomod.pipeline import Model
from arbilomod.training import TrainingConfig

from conftest import toy_geometry


class TestMark:
    def test_single_nonzero(self):
        ind = np.zeros((3, 5))
        ind[1, 2] = 4.0
        assert mark(ind, 0.5) == [(1, 2)]

    def test_all_zero_empty(self):
        assert mark(np.zeros((2, 4)), 0.9) == []

    @pytest.mark.parametrize("count,expected", [(4, 2), (5, 3), (7, 4), (1, 1)])
    def test_equal_indicators_half(self, count, expected):
        ind = np.ones((1, count))
        assert len(mark(ind, 0.5)) == expected

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            mark(np.array([[-1.0, 2.0]]), 0.5)

    @given(npst.arrays(np.float64, (4, 7), elements=st.floats(0, 1e3)),
           st.floats(0.05, 1.0))
    def test_matches_sort_and_prefix_oracle(self, ind, d):
        marked = mark(ind, d)
        total = ind.sum()
        if total == 0:
            assert marked == []
            return
        chosen = sum(ind[m] for m in marked)
        assert chosen >= d * total * (1 - 1e-9)
        # minimal by prefix: removing the last (smallest) marked pair breaks it
        if len(marked) > 1:
            assert chosen - ind[marked[-1]] < d * total * (1 + 1e-9)
        # descending indicator order
        vals = [ind[m] for m in marked]
        assert all(vals[i] >= vals[i + 1] - 1e-12 for i in range(len(vals) - 1))

    def test_tie_break_lexicographic(self):
        ind = np.full((2, 3), 2.0)
        assert mark(ind, 0.34)[:2] == [(0, 0), (0, 1)]


@pytest.fixture()
def fresh_model():
    model = Model(toy_geometry(), n=16, domains=4,
                  training=TrainingConfig(samples=10, eps_train=1e-3, seed=5),
                  greedy=CellGreedyConfig(eps_greedy=1e-3))
    model.build_initial(training_enabled=False)
    return model


class TestEnrichOnce:
    def test_zero_residual_changes_nothing(self, fresh_model):
        model = fresh_model
        mus = (1e2,)
        dims_before = model.basis_dims()
        fields = [np.zeros(model.system.mesh.num_nodes)]
        stats = enrichment.enrich_once(model, [(0, 3)], mus, fields)
        assert stats["enriched"] == ()
        assert model.basis_dims() == dims_before

    def test_added_vectors_orthonormal(self, fresh_model):
        model = fresh_model
        mus = model.parameters
        _, u = model.solve_reduced(mus[-1])
        resid = estimator.residual(model.system, u, mus[-1])
        ind = estimator.patch_indicators(model.system, model.decomp, resid)
        marked = mark(ind[None, :], 0.5)
        marked = [(len(mus) - 1, p) for _, p in marked]
        fields = [None] * (len(mus) - 1) + [resid]
        stats = enrichment.enrich_once(model, marked, mus, fields)
        assert stats["enriched"]
        for cid in stats["enriched"]:
            b = model.bases[cid]
            G = model.gram_fp(cid)
            gram = b.vectors.T @ (G @ b.vectors)
            assert np.abs(gram - np.eye(b.dim)).max() <= 1e-8

    def test_double_enrichment_guard(self, fresh_model):
        model = fresh_model
        mus = model.parameters
        _, u = model.solve_reduced(mus[-1])
        resid = estimator.residual(model.system, u, mus[-1])
        # mark every patch at one mu: guard must keep enrichments unique
        marked = [(len(mus) - 1, p) for p in range(len(model.decomp.vertices))]
        fields = [None] * (len(mus) - 1) + [resid]
        stats = enrichment.enrich_once(model, marked, mus, fields)
        assert len(stats["enriched"]) == len(set(stats["enriched"]))
        assert stats["guard_skips"] >= 0

    def test_cells_not_enriched_directly(self, fresh_model):
        model = fresh_model
        mus = model.parameters
        _, u = model.solve_reduced(mus[0])
        resid = estimator.residual(model.system, u, mus[0])
        fields = [resid] + [None] * (len(mus) - 1)
        stats = enrichment.enrich_once(model, [(0, p) for p in range(9)], mus, fields)
        for cid in stats["enriched"]:
            assert model.decomp.classes[cid].codim != 0


class TestRunToConvergence:
    def test_already_converged(self, small_model):
        log = enrichment.run_to_convergence(small_model,
                                            EnrichmentConfig(tol=1e2))
        assert log.converged
        assert log.iterations == 0
        assert len(log.records) == 1

    def test_empty_bases_converge(self, fresh_model):
        cfg = EnrichmentConfig(tol=1e-4, max_iter=60)
        log = enrichment.run_to_convergence(fresh_model, cfg)
        assert log.converged
        assert max(log.records[-1].residual_norms) <= cfg.tol
        dims = [r.reduced_dim for r in log.records]
        assert all(b >= a for a, b in zip(dims, dims[1:]))     # nondecreasing
        assert dims[-1] > dims[0]

    def test_error_bound_at_convergence(self, fresh_model):
        cfg = EnrichmentConfig(tol=1e-5, max_iter=60)
        log = enrichment.run_to_convergence(fresh_model, cfg, oracle=True)
        assert log.converged
        last = log.records[-1]
        alpha = fresh_model.consts.alpha_lb(1.0)
        for i, mu in enumerate(log.mus):
            exact = fresh_model.full_solve(mu)
            _, approx = fresh_model.solve_reduced(mu)
            err = fresh_model.system.v_norm(approx - exact)
            assert err <= cfg.tol / alpha * (1 + 1e-6)

    def test_estimators_dominate_error_through_run(self, fresh_model):
        cfg = EnrichmentConfig(tol=1e-5, max_iter=60)
        log = enrichment.run_to_convergence(fresh_model, cfg, oracle=True)
        for rec in log.records:
            assert rec.delta_rel >= rec.true_rel_error * (1 - 1e-9)
            assert rec.delta_rel_loc >= rec.true_rel_error * (1 - 1e-9)

    def test_max_iter_reports_nonconvergence(self, fresh_model):
        cfg = EnrichmentConfig(tol=1e-12, max_iter=2)
        log = enrichment.run_to_convergence(fresh_model, cfg)
        assert not log.converged
        assert log.iterations <= 2


def test_config_validation():
    with pytest.raises(ValueError):
        EnrichmentConfig(fraction=0.0)
    with pytest.raises(ValueError):
        EnrichmentConfig(fraction=1.5)
    with pytest.raises(ValueError):
        EnrichmentConfig(tol=-1.0)


def test_log_csv_roundtrip(tmp_path, small_model):
    log = enrichment.run_to_convergence(small_model, EnrichmentConfig(tol=1e2))
    path = tmp_path / "log.csv"
    log.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# arbilomod convergence-log v1")
    header = lines[1].split(",")
    assert header[0] == "iteration"
    assert "reduced_dim" in header
    assert len(lines) == 2 + len(log.records)
