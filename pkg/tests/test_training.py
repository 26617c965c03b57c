import numpy as np
import pytest
import scipy.linalg as sla

from arbilomod.assembly import assemble_affine
from arbilomod.decomposition import Extender, classify
from arbilomod.geometry import GeometryModel
from arbilomod.mesh import build_dof_handler, build_mesh
from arbilomod.solvers import submatrix
from arbilomod.training import (TrainingConfig, default_parameter_set,
                                random_coupling_sample, snapshot_greedy, train_face)

from conftest import toy_geometry


def test_default_parameter_set():
    mus = default_parameter_set()
    assert len(mus) == 6
    assert mus[0] == 1.0 and mus[-1] == 1e5
    assert np.allclose(np.diff(np.log10(mus)), 1.0)


class TestRandomCouplingSample:
    def test_bounds(self):
        v = random_coupling_sample(0, (3, 4), 0, 1000)
        assert np.all(v >= -1.0) and np.all(v <= 1.0)

    def test_deterministic(self):
        a = random_coupling_sample(42, (7, 8), 3, 50)
        b = random_coupling_sample(42, (7, 8), 3, 50)
        assert np.array_equal(a, b)

    def test_distinct_keys_differ(self):
        base = random_coupling_sample(42, (7, 8), 3, 50)
        assert not np.array_equal(base, random_coupling_sample(43, (7, 8), 3, 50))
        assert not np.array_equal(base, random_coupling_sample(42, (7, 9), 3, 50))
        assert not np.array_equal(base, random_coupling_sample(42, (7, 8), 4, 50))

    def test_empirical_mean(self):
        draws = np.stack([random_coupling_sample(1, (0, 1), i, 16)
                          for i in range(10_000)])
        assert np.abs(draws.mean(axis=0)).max() < 0.05


class TestSnapshotGreedy:
    def gram(self, n):
        rng = np.random.default_rng(0)
        A = rng.standard_normal((n, n))
        return np.eye(n) + 0.1 * (A @ A.T) / n

    def test_all_small_gives_empty(self):
        G = np.eye(4)
        Z = 1e-6 * np.eye(4)[:, :2]
        assert snapshot_greedy(Z, G, 1e-3).shape == (4, 0)

    def test_single_vector_normalized(self):
        G = self.gram(5)
        v = np.arange(1.0, 6.0)
        B = snapshot_greedy(v[:, None], G, 1e-8)
        assert B.shape == (5, 1)
        nv = np.sqrt(v @ G @ v)
        assert np.allclose(B[:, 0], v / nv)

    def test_span_matches_pivoted_orthogonalization_oracle(self, small):
        """Oracle: pivoted Cholesky of the snapshot Gram selects the same span."""
        mesh, dofs = small["mesh"], small["dofs"]
        system = small["system"]
        free = dofs.free_dofs
        G = system.gram[free, :][:, free].toarray()
        rng = np.random.default_rng(4)
        Z = rng.standard_normal((len(free), 10))
        Z[:, 7] = Z[:, 0] * 2.0 + Z[:, 1]       # dependent column
        eps = 1e-6
        B = snapshot_greedy(Z, G, eps)

        # oracle: greedy pivoted Gram-Schmidt run directly on the Gram matrix
        W = Z.copy()
        picked = []
        while True:
            norms = np.sqrt(np.maximum(np.einsum("ij,ij->j", W, G @ W), 0))
            if norms.max() <= eps:
                break
            j = int(np.argmax(norms))
            q = W[:, j] / norms[j]
            picked.append(q)
            W = W - np.outer(q, q @ G @ W)
        Q = np.column_stack(picked)
        assert B.shape == Q.shape
        # principal angles between spans in the G inner product
        L = sla.cholesky(G, lower=True)
        s = sla.svdvals((L.T @ B).T @ (L.T @ Q))
        assert np.abs(s - 1.0).max() < 1e-8

    def test_residual_guarantee_and_orthonormality(self):
        G = self.gram(40)
        rng = np.random.default_rng(5)
        Z = rng.standard_normal((40, 15))
        eps = 1e-2
        B = snapshot_greedy(Z, G, eps)
        assert np.abs(B.T @ G @ B - np.eye(B.shape[1])).max() < 1e-10
        resid = Z - B @ (B.T @ (G @ Z))
        norms = np.sqrt(np.einsum("ij,ij->j", resid, G @ resid))
        assert norms.max() <= eps * (1 + 1e-9)


@pytest.fixture(scope="module")
def trainable():
    mesh = build_mesh(16)
    dofs = build_dof_handler(mesh, 4)
    decomp = classify(mesh, dofs)
    geom = toy_geometry()
    system = assemble_affine(mesh, geom, dofs)
    extender = Extender(system, decomp, mu_bar=1e5)
    return mesh, dofs, decomp, geom, system, extender


class TestTrainFace:
    def test_zero_sources_give_empty_basis(self):
        mesh = build_mesh(8)
        dofs = build_dof_handler(mesh, 4)
        decomp = classify(mesh, dofs)
        system = assemble_affine(mesh, GeometryModel(rectangles=[]), dofs)
        extender = Extender(system, decomp, mu_bar=1e5)
        cfg = TrainingConfig(samples=0, eps_train=1e-10, seed=0)
        basis = train_face(decomp.faces[9], cfg, system, decomp, extender)
        assert basis.dim == 0

    def test_dimension_bound_and_orthonormality(self, trainable):
        mesh, dofs, decomp, geom, system, extender = trainable
        cfg = TrainingConfig(samples=5, eps_train=1e-8, seed=2)
        fcid = decomp.faces[6]
        basis = train_face(fcid, cfg, system, decomp, extender)
        assert 0 < basis.dim <= len(cfg.parameters) * (cfg.samples + 1)
        G = submatrix(system.gram, basis.footprint)
        gram = basis.vectors.T @ (G @ basis.vectors)
        assert np.abs(gram - np.eye(basis.dim)).max() <= 1e-8

    def test_snapshots_live_in_face_space(self, trainable):
        """Trained vectors are fixed points of the projection onto their space."""
        from arbilomod.decomposition import project
        mesh, dofs, decomp, geom, system, extender = trainable
        cfg = TrainingConfig(samples=3, eps_train=1e-6, seed=2)
        fcid = decomp.faces[10]
        basis = train_face(fcid, cfg, system, decomp, extender)
        sc = decomp.classes[fcid]
        for k in range(basis.dim):
            full = np.zeros(mesh.num_nodes)
            full[sc.footprint] = basis.vectors[:, k]
            parts = project(full, decomp, extender)
            assert np.abs(parts[fcid] - basis.vectors[:, k]).max() <= 1e-9
            rest = max(np.abs(v).max() for c, v in parts.items() if c != fcid and v.size)
            assert rest <= 1e-9

    def test_determinism(self, trainable):
        mesh, dofs, decomp, geom, system, extender = trainable
        cfg = TrainingConfig(samples=4, eps_train=1e-4, seed=11)
        fcid = decomp.faces[3]
        a = train_face(fcid, cfg, system, decomp, extender)
        b = train_face(fcid, cfg, system, decomp, extender)
        assert np.array_equal(a.vectors, b.vectors)

    def test_locality_under_far_change(self, trainable):
        """Bit-identical result when the geometry changes outside the patch."""
        mesh, dofs, decomp, geom, system, extender = trainable
        cfg = TrainingConfig(samples=4, eps_train=1e-4, seed=11)
        fcid = decomp.by_xi[(0, 1)]              # bottom-left vertical face
        before = train_face(fcid, cfg, system, decomp, extender)
        # add a rectangle in the far top-right corner, outside N_xi
        far = GeometryModel(rectangles=geom.rectangles + ((0.75, 0.875, 1.0, 1.0),))
        system2 = assemble_affine(mesh, far, dofs)
        extender2 = Extender(system2, decomp, mu_bar=1e5)
        after = train_face(fcid, cfg, system2, decomp, extender2)
        assert np.array_equal(before.vectors, after.vectors)
