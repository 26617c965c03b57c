"""End-to-end reduced simulation: system, local bases, reduced solves.

``Model`` owns the mesh-static structures (decomposition, caches, block maps)
and the geometry-dependent state (affine system, extension operator, bases,
reduced system).  Geometry-change bookkeeping and persistence live in the
session module on top of this class.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .assembly import assemble_affine, assemble_domain_components
from .decomposition import Extender, classify
from .estimator import EstimatorConstants
from .greedy import CellGreedyConfig, local_greedy
from .mesh import build_dof_handler, build_mesh
from .reduced import ReducedAssembly
from .solvers import FactorCache, submatrix
from .training import TrainingConfig, empty_basis, train_face, vertex_basis

MU_BAR_DEFAULT = 1e5


def parallel_map(fn, items, threads):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


class DomainMatrixCache(dict):
    """Per-domain operator entries, optionally persisted under ARBILOMOD_CACHE.

    Keys are (domain_id, restriction_hash); values the per-component COO
    triples from assembly.  The disk layer makes repeated runs over the same
    geometries skip reassembly of unchanged domains entirely.
    """

    def __init__(self, mesh_n, domains_per_side, directory=None):
        super().__init__()
        if directory is None:
            directory = os.environ.get("ARBILOMOD_CACHE")
        self.directory = Path(directory) if directory else None
        self.prefix = f"dom_n{mesh_n}_D{domains_per_side}"
        if self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, key):
        dom, h = key
        return self.directory / f"{self.prefix}_{dom}_{h}.npz"

    def __contains__(self, key):
        if super().__contains__(key):
            return True
        return self.directory is not None and self._path(key).exists()

    def __getitem__(self, key):
        if super().__contains__(key):
            return super().__getitem__(key)
        if self.directory is not None:
            path = self._path(key)
            if path.exists():
                with np.load(path) as z:
                    value = tuple((z[f"r{b}"], z[f"c{b}"], z[f"d{b}"]) for b in range(2))
                super().__setitem__(key, value)
                return value
        raise KeyError(key)

    def __setitem__(self, key, value):
        super().__setitem__(key, value)
        if self.directory is not None:
            path = self._path(key)
            if not path.exists():
                arrays = {}
                for b in range(2):
                    arrays[f"r{b}"], arrays[f"c{b}"], arrays[f"d{b}"] = value[b]
                np.savez(path, **arrays)


class Model:
    def __init__(self, geometry, n=200, domains=8, training=None, greedy=None,
                 consts=None, mu_bar=MU_BAR_DEFAULT, threads=1):
        self.training = training if training is not None else TrainingConfig()
        self.greedy = greedy if greedy is not None else CellGreedyConfig()
        self.consts = consts if consts is not None else EstimatorConstants()
        self.mu_bar = float(mu_bar)
        self.threads = int(threads)
        self.mesh = build_mesh(n)
        self.dofs = build_dof_handler(self.mesh, domains)
        self.decomp = classify(self.mesh, self.dofs)
        self.factor_cache = FactorCache(maxsize=1536)
        self.domain_cache = DomainMatrixCache(self.mesh.n, self.dofs.domains_per_side)
        self.revision = 0
        self.geometry = None
        self.system = None
        self.extender = None
        self.assembly = None
        self.bases = {}
        self.reduced = None
        self.set_geometry(geometry)

    # --- geometry-dependent state -----------------------------------------------
    @property
    def parameters(self):
        return self.training.parameters

    def set_geometry(self, geometry):
        """(Re)assemble the operator; unaffected domains come from the cache."""
        geometry.check_resolved_by(self.mesh.n)
        per_domain = assemble_domain_components(self.mesh, geometry,
                                                self.dofs.domains_per_side,
                                                cache=self.domain_cache)
        self.system = assemble_affine(self.mesh, geometry, self.dofs,
                                      per_domain=per_domain)
        self.geometry = geometry
        self.extender = Extender(self.system, self.decomp, self.mu_bar,
                                 cache=self.factor_cache)
        if self.assembly is None:
            self.assembly = ReducedAssembly(self.system, self.decomp)
        else:
            self.assembly.rebind(self.system)

    def domain_hash(self, dom):
        return self.geometry.domain_restriction_hash(self.dofs.domains_per_side, dom)

    def patch_hash(self, vertex_cid):
        return tuple(self.domain_hash(d) for d in self.decomp.classes[vertex_cid].xi)

    # --- local basis generation ---------------------------------------------------
    def build_vertex_bases(self, cids=None):
        cids = self.decomp.vertices if cids is None else cids
        for vcid in cids:
            self.bases[vcid] = vertex_basis(self.decomp, self.extender, self.system,
                                            vcid, revision=self.revision)
        return list(cids)

    def train_faces(self, cids=None, enabled=True):
        cids = self.decomp.faces if cids is None else list(cids)
        if not enabled:
            for fcid in cids:
                self.bases[fcid] = empty_basis(self.decomp, fcid, self.revision)
            return []
        results = parallel_map(
            lambda fcid: train_face(fcid, self.training, self.system, self.decomp,
                                    self.extender, revision=self.revision),
            cids, self.threads)
        for fcid, basis in zip(cids, results):
            self.bases[fcid] = basis
        return list(cids)

    def regenerate_cells(self, cids=None):
        cids = self.decomp.cells if cids is None else list(cids)
        results = parallel_map(
            lambda ccid: local_greedy(self.system, self.decomp, ccid, self.bases,
                                      self.greedy, self.parameters,
                                      cache=self.factor_cache, revision=self.revision),
            cids, self.threads)
        for ccid, basis in zip(cids, results):
            self.bases[ccid] = basis
        return list(cids)

    def build_initial(self, training_enabled=True):
        self.build_vertex_bases()
        self.train_faces(enabled=training_enabled)
        self.regenerate_cells()
        self.refresh_reduced(None)

    # --- reduced system -----------------------------------------------------------
    def refresh_reduced(self, changed=None):
        self.reduced = self.assembly.update(self.bases, changed=changed,
                                            revision=self.revision)
        return self.reduced

    def solve_reduced(self, mu):
        return self.reduced.solve(mu)

    def full_solve(self, mu):
        return self.system.solve(mu)

    def gram_fp(self, cid):
        """Gram block on a class footprint (mesh-static, cached)."""
        fp = self.decomp.classes[cid].footprint
        return self.factor_cache.get(("gram_fp", cid),
                                     lambda: submatrix(self.system.gram, fp))

    # --- diagnostics ---------------------------------------------------------------
    def basis_dims(self):
        return {cid: b.dim for cid, b in self.bases.items()}

    def reduced_dim(self):
        return self.reduced.dim if self.reduced is not None else 0

    def max_relative_error(self, mus=None):
        """Max relative H^1 error of reduced vs full solves (oracle quantity)."""
        mus = self.parameters if mus is None else mus
        worst = 0.0
        for mu in mus:
            exact = self.full_solve(mu)
            _, approx = self.solve_reduced(mu)
            err = self.system.v_norm(approx - exact) / self.system.v_norm(exact)
            worst = max(worst, err)
        return worst
