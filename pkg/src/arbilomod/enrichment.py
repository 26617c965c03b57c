"""Online enrichment: marking, localized solves, selective basis growth.

Patch indicators are reduced residual dual norms on the overlapping spaces.
Marked (parameter, patch) pairs get a local solve with the residual as right
hand side; the solution is decomposed into its local parts and the worst
approximated non-cell part enriches its space (at most once per space and
iteration).  Cell spaces are then regenerated by their greedy.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from . import estimator
from .decomposition import project
from .solvers import factorize, submatrix

COMPLEMENT_DROP_TOL = 1e-12
CSV_SCHEMA = "arbilomod convergence-log v1"


@dataclass(frozen=True)
class EnrichmentConfig:
    fraction: float = 0.5        # Doerfler marking fraction d
    tol: float = 1e-2            # threshold on max_mu ||R_mu||_{V'}
    max_iter: int = 100

    def __post_init__(self):
        if not 0 < self.fraction <= 1:
            raise ValueError("marking fraction must be in (0, 1]")
        if self.tol <= 0:
            raise ValueError("tolerance must be positive")


def mark(indicators, fraction):
    """Largest indicators until their sum reaches ``fraction`` of the total.

    ``indicators`` is an (n_mu, n_patch) array; returns (mu_idx, patch_idx)
    pairs in descending indicator order, ties broken lexicographically.
    """
    ind = np.asarray(indicators, dtype=float)
    if np.any(ind < 0):
        raise ValueError("indicators must be nonnegative")
    total = float(ind.sum())
    if total <= 0.0:
        return []
    flat = ind.ravel()
    order = np.argsort(-flat, kind="stable")
    csum = np.cumsum(flat[order])
    target = fraction * total
    k = int(np.searchsorted(csum, target * (1.0 - 1e-12))) + 1
    return [tuple(divmod(int(f), ind.shape[1])) for f in order[:k]]


@dataclass
class IterationRecord:
    iteration: int
    residual_norms: tuple
    delta_rel: float
    delta_rel_loc: float
    reduced_dim: int
    true_rel_error: float = None
    marked: int = 0
    enriched: tuple = ()


@dataclass
class ConvergenceLog:
    mus: tuple
    records: list = field(default_factory=list)
    converged: bool = False
    stalled: bool = False        # an iteration changed no basis; state cannot improve

    @property
    def iterations(self):
        """Number of enrichment steps performed."""
        return max(len(self.records) - 1, 0)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as f:
            f.write(f"# {CSV_SCHEMA}\n")
            writer = csv.writer(f)
            header = (["iteration"]
                      + [f"res_norm_mu{i}" for i in range(len(self.mus))]
                      + ["max_delta_rel", "max_delta_rel_loc", "true_rel_error",
                         "reduced_dim", "marked", "enriched"])
            writer.writerow(header)
            for r in self.records:
                row = ([r.iteration] + [f"{v:.9e}" for v in r.residual_norms]
                       + [f"{r.delta_rel:.9e}", f"{r.delta_rel_loc:.9e}",
                          "" if r.true_rel_error is None else f"{r.true_rel_error:.9e}",
                          r.reduced_dim, r.marked, len(r.enriched)])
                writer.writerow(row)


def enrich_once(model, marked, mus, residual_fields):
    """One enrichment sweep over the marked (parameter, patch) pairs."""
    decomp = model.decomp
    system = model.system
    already = set()                  # double enrichment protection
    enriched = []
    stats = {"marked": len(marked), "guard_skips": 0, "small_skips": 0}
    n_total = system.mesh.num_nodes
    for mi, pi in marked:
        mu = float(mus[mi])
        vcid = decomp.vertices[pi]
        vsc = decomp.classes[vcid]
        pdofs = vsc.footprint
        lu = model.factor_cache.get(
            ("patch_op", vcid, mu, model.patch_hash(vcid)),
            lambda: factorize(submatrix(system.matrix(mu), pdofs),
                              context=f"patch {vsc.xi} at mu={mu}"))
        local = lu.solve(residual_fields[mi][pdofs])
        fld = np.zeros(n_total)
        fld[pdofs] = local
        subset = ([vcid] + [f for f, _ in vsc.member_faces] + list(vsc.member_cells))
        parts = project(fld, decomp, model.extender, subset=subset)

        best = None
        for cid in sorted([vcid] + [f for f, _ in vsc.member_faces]):
            sc = decomp.classes[cid]
            if sc.ndofs == 0:
                continue
            part = parts[cid]
            gram_fp = model.gram_fp(cid)
            basis = model.bases[cid]
            comp = part - basis.vectors @ (basis.vectors.T @ (gram_fp @ part)) \
                if basis.dim else part
            nrm = float(np.sqrt(max(comp @ (gram_fp @ comp), 0.0)))
            if best is None or nrm > best[0]:
                best = (nrm, cid, comp)
        if best is None or best[0] < COMPLEMENT_DROP_TOL:
            stats["small_skips"] += 1
            continue
        nrm, cid, comp = best
        if cid in already:
            stats["guard_skips"] += 1
            continue
        basis = model.bases[cid]
        gram_fp = model.gram_fp(cid)
        if basis.dim:                # one re-orthogonalization pass for stability
            comp = comp - basis.vectors @ (basis.vectors.T @ (gram_fp @ comp))
            nrm = float(np.sqrt(max(comp @ (gram_fp @ comp), 0.0)))
            if nrm < COMPLEMENT_DROP_TOL:
                stats["small_skips"] += 1
                continue
        basis.vectors = np.column_stack([basis.vectors, comp / nrm])
        already.add(cid)
        enriched.append(cid)

    affected = [ccid for ccid in decomp.cells
                if set(decomp.classes[ccid].coupling_cids) & set(enriched)]
    model.regenerate_cells(affected)
    model.refresh_reduced(sorted(set(enriched) | set(affected)))
    stats["enriched"] = tuple(enriched)
    stats["cells_regenerated"] = len(affected)
    return stats


def run_to_convergence(model, cfg, mus=None, oracle=False):
    """Enrich until max_mu ||R_mu||_{V'} falls below tolerance (or max_iter)."""
    mus = tuple(float(m) for m in (mus if mus is not None else model.parameters))
    consts = model.consts
    log = ConvergenceLog(mus=mus)
    exact = {mu: model.full_solve(mu) for mu in mus} if oracle else None
    iteration = 0
    while True:
        fields = [model.solve_reduced(mu)[1] for mu in mus]
        resids = [estimator.residual(model.system, fields[i], mu)
                  for i, mu in enumerate(mus)]
        res_norms = tuple(estimator.residual_dual_norm(model.system, r) for r in resids)
        indicators = np.empty((len(mus), len(model.decomp.vertices)))
        deltas_rel = []
        deltas_rel_loc = []
        for i, mu in enumerate(mus):
            delta = res_norms[i] / consts.alpha_lb(mu)
            delta_loc, ind = estimator.estimate_localized(model.system, model.decomp,
                                                          resids[i], mu, consts)
            indicators[i] = ind
            norm_u = model.system.v_norm(fields[i])
            deltas_rel.append(estimator.estimate_relative(delta, norm_u))
            deltas_rel_loc.append(estimator.estimate_relative(delta_loc, norm_u))
        true_err = None
        if oracle:
            true_err = max(
                model.system.v_norm(fields[i] - exact[mu]) / model.system.v_norm(exact[mu])
                for i, mu in enumerate(mus))
        record = IterationRecord(iteration=iteration, residual_norms=res_norms,
                                 delta_rel=max(deltas_rel),
                                 delta_rel_loc=max(deltas_rel_loc),
                                 reduced_dim=model.reduced.dim,
                                 true_rel_error=true_err)
        log.records.append(record)
        if max(res_norms) <= cfg.tol:
            log.converged = True
            break
        if iteration >= cfg.max_iter:
            log.converged = False
            break
        marked = mark(indicators, cfg.fraction)
        if not marked:
            log.converged = True
            break
        stats = enrich_once(model, marked, mus, resids)
        record.marked = stats["marked"]
        record.enriched = stats["enriched"]
        if not stats["enriched"] and not stats["cells_regenerated"]:
            # nothing changed: every further iteration would repeat verbatim
            log.stalled = True
            break
        iteration += 1
    return log
