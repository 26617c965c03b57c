"""Workflow orchestration across geometry changes, with reuse and persistence.

A session owns one model and a monotone geometry revision counter.  On a
change, exactly the local data whose support region was touched is discarded
and rebuilt: faces and vertices whose own domains are affected, and cells
whose domain or coupling spaces changed.  Everything else, including basis
vectors gained by earlier online enrichment, is reused.
"""

import io
import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from . import enrichment, estimator
from .errors import SessionLoadError
from .geometry import GeometryModel, diff, geometry_from_document
from .greedy import CellGreedyConfig
from .pipeline import MU_BAR_DEFAULT, Model
from .training import TrainingConfig

SESSION_MAGIC = b"ALMS"
SESSION_VERSION = 1
FIELD_MAGIC = b"ALF1"


def field_payload(mesh, field_values):
    """Binary lattice download: 16-byte header (magic, n, min, max), f64 grid."""
    lattice = mesh.lattice_values(field_values)
    lo, hi = float(lattice.min()), float(lattice.max())
    header = FIELD_MAGIC + struct.pack("<Iff", mesh.n, lo, hi)
    return header + np.ascontiguousarray(lattice, dtype="<f8").tobytes()


@dataclass
class SessionStats:
    trainings_run: int = 0
    trainings_skipped: int = 0
    greedys_run: int = 0
    greedys_skipped: int = 0
    vertex_rebuilds: int = 0
    domains_reassembled: int = 0
    enrichment_iterations: int = 0
    last_change: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


@dataclass(frozen=True)
class SessionConfig:
    n: int = 200
    domains: int = 8
    mu_bar: float = MU_BAR_DEFAULT
    training: TrainingConfig = field(default_factory=TrainingConfig)
    greedy: CellGreedyConfig = field(default_factory=CellGreedyConfig)
    training_enabled: bool = True
    reuse_enabled: bool = True
    threads: int = 1


class Session:
    def __init__(self, geometry, config=None, build=True):
        self.config = config if config is not None else SessionConfig()
        self.stats = SessionStats()
        self.revision = 0
        self.model = Model(geometry, n=self.config.n, domains=self.config.domains,
                           training=self.config.training, greedy=self.config.greedy,
                           mu_bar=self.config.mu_bar, threads=self.config.threads)
        if build:
            self._build_all()

    # --- initial build -----------------------------------------------------------
    def _build_all(self):
        model = self.model
        model.revision = self.revision
        model.build_vertex_bases()
        self.stats.vertex_rebuilds += len(model.decomp.vertices)
        trained = model.train_faces(enabled=self.config.training_enabled)
        self.stats.trainings_run += len(trained)
        model.regenerate_cells()
        self.stats.greedys_run += len(model.decomp.cells)
        self.stats.domains_reassembled += model.decomp.domains_per_side ** 2
        model.refresh_reduced(None)

    @property
    def geometry(self):
        return self.model.geometry

    @property
    def parameters(self):
        return self.model.parameters

    # --- change handling ----------------------------------------------------------
    def apply_change(self, new_geometry):
        """Diff against the current geometry, invalidate, rebuild selectively."""
        model = self.model
        change = diff(self.geometry, new_geometry, model.decomp.domains_per_side)
        if not change:
            self.stats.last_change = {"affected_domains": [], "trainings": 0,
                                      "greedys": 0, "vertices": 0}
            return change
        self.revision += 1
        model.revision = self.revision
        affected = set(change.affected_domains)
        decomp = model.decomp

        if self.config.reuse_enabled:
            faces = [cid for cid in decomp.faces
                     if set(decomp.classes[cid].xi) & affected]
            vertices = [cid for cid in decomp.vertices
                        if set(decomp.classes[cid].xi) & affected]
            invalidated = set(faces) | set(vertices)
            cells = [cid for cid in decomp.cells
                     if decomp.classes[cid].xi[0] in affected
                     or set(decomp.classes[cid].coupling_cids) & invalidated]
        else:
            faces = list(decomp.faces)
            vertices = list(decomp.vertices)
            cells = list(decomp.cells)

        model.set_geometry(new_geometry)
        model.build_vertex_bases(vertices)
        model.train_faces(faces, enabled=self.config.training_enabled)
        model.regenerate_cells(cells)
        for basis in model.bases.values():
            basis.revision = self.revision
        changed = None if not self.config.reuse_enabled else sorted(
            set(faces) | set(vertices) | set(cells))
        model.refresh_reduced(changed)

        n_faces = len(decomp.faces)
        n_cells = len(decomp.cells)
        self.stats.trainings_run += len(faces) if self.config.training_enabled else 0
        self.stats.trainings_skipped += (n_faces - len(faces)) if self.config.training_enabled else 0
        self.stats.greedys_run += len(cells)
        self.stats.greedys_skipped += n_cells - len(cells)
        self.stats.vertex_rebuilds += len(vertices)
        self.stats.domains_reassembled += len(affected) if self.config.reuse_enabled \
            else decomp.domains_per_side ** 2
        self.stats.last_change = {
            "affected_domains": sorted(affected),
            "trainings": len(faces) if self.config.training_enabled else 0,
            "faces_invalidated": len(faces),
            "greedys": len(cells),
            "vertices": len(vertices),
        }
        return change

    # --- solving and enrichment -----------------------------------------------------
    def enrich(self, tol=1e-2, mus=None, fraction=0.5, max_iter=100, oracle=False):
        cfg = enrichment.EnrichmentConfig(fraction=fraction, tol=tol, max_iter=max_iter)
        log = enrichment.run_to_convergence(self.model, cfg, mus=mus, oracle=oracle)
        self.stats.enrichment_iterations += log.iterations
        return log

    def solve(self, mu, tol=None, fraction=0.5, max_iter=100):
        """Reduced solve at one parameter, optionally enriching to tolerance.

        Enrichment, when requested, controls the residual norm at this mu only.
        """
        mu = float(mu)
        geom = self.geometry
        if not (geom.mu_min <= mu <= geom.mu_max):
            raise ValueError(f"mu={mu} outside parameter range "
                             f"[{geom.mu_min}, {geom.mu_max}]")
        log = None
        if tol is not None:
            log = self.enrich(tol=tol, mus=(mu,), fraction=fraction, max_iter=max_iter)
        coef, field_full = self.model.solve_reduced(mu)
        resid = estimator.residual(self.model.system, field_full, mu)
        consts = self.model.consts
        delta = estimator.estimate_global(self.model.system, resid, mu, consts)
        delta_loc, indicators = estimator.estimate_localized(
            self.model.system, self.model.decomp, resid, mu, consts)
        norm_u = self.model.system.v_norm(field_full)
        return {
            "mu": mu,
            "coefficients": coef,
            "field": field_full,
            "residual_norm": delta * consts.alpha_lb(mu),
            "estimate": delta,
            "estimate_rel": estimator.estimate_relative(delta, norm_u),
            "estimate_loc": delta_loc,
            "estimate_rel_loc": estimator.estimate_relative(delta_loc, norm_u),
            "indicators": indicators,
            "reduced_dim": self.model.reduced_dim(),
            "iterations": log.iterations if log is not None else 0,
            "converged": log.converged if log is not None else None,
        }

    # --- persistence -------------------------------------------------------------------
    def save(self, path):
        model = self.model
        order = sorted(model.bases)
        manifest = {
            "format": SESSION_VERSION,
            "revision": self.revision,
            "config": {
                "n": self.config.n,
                "domains": self.config.domains,
                "mu_bar": self.config.mu_bar,
                "training_enabled": self.config.training_enabled,
                "reuse_enabled": self.config.reuse_enabled,
                "threads": self.config.threads,
                "training": {
                    "samples": self.config.training.samples,
                    "eps_train": self.config.training.eps_train,
                    "parameters": list(self.config.training.parameters),
                    "seed": self.config.training.seed,
                },
                "greedy": {
                    "eps_greedy": self.config.greedy.eps_greedy,
                    "max_iter": self.config.greedy.max_iter,
                    "stagnation_tol": self.config.greedy.stagnation_tol,
                },
            },
            "geometry": {
                "version": 1,
                "rectangles": [list(r) for r in self.geometry.rectangles],
                "mu_min": self.geometry.mu_min,
                "mu_max": self.geometry.mu_max,
            },
            "stats": self.stats.to_dict(),
            "bases": [{"cid": cid, "dim": model.bases[cid].dim,
                       "fp": len(model.bases[cid].footprint),
                       "revision": model.bases[cid].revision}
                      for cid in order],
        }
        blob = io.BytesIO()
        blob.write(SESSION_MAGIC)
        blob.write(struct.pack("<I", SESSION_VERSION))
        payload = json.dumps(manifest, sort_keys=True).encode("utf-8")
        blob.write(struct.pack("<Q", len(payload)))
        blob.write(payload)
        for cid in order:
            vec = np.ascontiguousarray(model.bases[cid].vectors, dtype="<f8")
            blob.write(vec.tobytes())
        with open(path, "wb") as f:
            f.write(blob.getvalue())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as f:
            raw = f.read()
        if raw[:4] != SESSION_MAGIC:
            raise SessionLoadError(f"not a session file: bad magic {raw[:4]!r}")
        (version,) = struct.unpack_from("<I", raw, 4)
        if version != SESSION_VERSION:
            raise SessionLoadError(f"unsupported session version {version}")
        (mlen,) = struct.unpack_from("<Q", raw, 8)
        try:
            manifest = json.loads(raw[16:16 + mlen].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise SessionLoadError(f"corrupt session manifest: {exc}") from exc
        cfg_doc = manifest["config"]
        config = SessionConfig(
            n=cfg_doc["n"], domains=cfg_doc["domains"], mu_bar=cfg_doc["mu_bar"],
            training=TrainingConfig(samples=cfg_doc["training"]["samples"],
                                    eps_train=cfg_doc["training"]["eps_train"],
                                    parameters=tuple(cfg_doc["training"]["parameters"]),
                                    seed=cfg_doc["training"]["seed"]),
            greedy=CellGreedyConfig(eps_greedy=cfg_doc["greedy"]["eps_greedy"],
                                    max_iter=cfg_doc["greedy"]["max_iter"],
                                    stagnation_tol=cfg_doc["greedy"]["stagnation_tol"]),
            training_enabled=cfg_doc["training_enabled"],
            reuse_enabled=cfg_doc["reuse_enabled"], threads=cfg_doc["threads"])
        geometry = geometry_from_document(manifest["geometry"])
        session = cls(geometry, config, build=False)
        session.revision = manifest["revision"]
        session.model.revision = session.revision
        session.stats = SessionStats.from_dict(manifest["stats"])
        offset = 16 + mlen
        from .training import LocalBasis
        for entry in manifest["bases"]:
            cid, dim, fplen = entry["cid"], entry["dim"], entry["fp"]
            sc = session.model.decomp.classes[cid]
            if len(sc.footprint) != fplen:
                raise SessionLoadError(f"footprint mismatch for class {sc.xi}")
            nbytes = fplen * dim * 8
            try:
                vec = np.frombuffer(raw, dtype="<f8", count=fplen * dim,
                                    offset=offset).reshape(fplen, dim).copy()
            except ValueError as exc:
                raise SessionLoadError(f"truncated basis payload: {exc}") from exc
            offset += nbytes
            session.model.bases[cid] = LocalBasis(
                cid=cid, xi=sc.xi, codim=sc.codim, footprint=sc.footprint,
                vectors=vec, revision=entry["revision"])
        if offset != len(raw):
            raise SessionLoadError("session file has trailing or missing data")
        session.model.refresh_reduced(None)
        return session


def run_sequence(geometries, config=None, tol=1e-2, fraction=0.5, max_iter=100,
                 oracle=False, log_dir=None):
    """The full benchmark workflow over a geometry sequence.

    Returns per-geometry dicts with the convergence log and reuse statistics.
    """
    config = config if config is not None else SessionConfig()
    session = None
    results = []
    for k, geom in enumerate(geometries):
        if session is None:
            session = Session(geom, config)
            change_stats = {"affected_domains": [], "trainings": 0, "greedys": 0,
                            "vertices": 0}
        else:
            session.apply_change(geom)
            change_stats = dict(session.stats.last_change)
        log = session.enrich(tol=tol, fraction=fraction, max_iter=max_iter,
                             oracle=oracle)
        if log_dir is not None:
            log.to_csv(f"{log_dir}/convergence_geometry{k + 1}.csv")
        results.append({
            "geometry": k + 1,
            "iterations": log.iterations,
            "converged": log.converged,
            "reduced_dim": session.model.reduced_dim(),
            "change": change_stats,
            "log": log,
            "final_residual": max(log.records[-1].residual_norms),
        })
    return session, results
