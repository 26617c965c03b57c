"""Certified greedy construction of reduced cell spaces.

Each cell space must approximate local solutions for every training parameter
and every right hand side induced by one coupling basis vector (plus the
source term).  The greedy inserts the worst-approximated local solution until
the residual estimator Delta_cell is below tolerance for the whole extended
training set.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConditioningError
from .estimator import alpha_lb_analytic
from .solvers import factorize, spd_factor, spd_solve, submatrix
from .training import LocalBasis, empty_basis


@dataclass(frozen=True)
class CellGreedyConfig:
    eps_greedy: float = 1e-3
    alpha_lb: object = alpha_lb_analytic
    max_iter: int = 400
    stagnation_tol: float = 1e-12


class CellProblem:
    """Local problems of one cell: rhs family, solves, and Delta_cell.

    Right hand sides are indexed j = 0..N_B-1 for the coupling basis vectors
    (in canonical class order) and j = N_B for the source term.
    """

    def __init__(self, system, decomp, cell_cid, coupling_bases, mus, cache=None):
        self.system = system
        self.decomp = decomp
        self.cell = decomp.classes[cell_cid]
        self.mus = tuple(float(m) for m in mus)
        dofs = self.cell.dofs
        self.dofs = dofs
        dom = self.cell.xi[0]
        domhash = system.geometry.domain_restriction_hash(decomp.domains_per_side, dom)
        self._cache = cache

        self.couplers = []      # (cid, column offset) in rhs ordering
        blocks = [[], []]
        rows = [system.components[b][dofs, :].tocsc() for b in range(2)]
        offset = 0
        for cid in self.cell.coupling_cids:
            basis = coupling_bases.get(cid)
            if basis is None or basis.dim == 0:
                continue
            self.couplers.append((cid, offset))
            offset += basis.dim
            for b in range(2):
                blocks[b].append(-np.asarray((rows[b][:, basis.footprint] @ basis.vectors)))
        self.n_coupling = offset
        self.rhs_comps = []
        for b in range(2):
            cols = blocks[b] + [system.rhs_components[b][dofs][:, None]]
            self.rhs_comps.append(np.hstack(cols) if cols else np.zeros((len(dofs), 1)))
        self.n_rhs = self.rhs_comps[0].shape[1]

        self.A_cell = [submatrix(system.components[b], dofs) for b in range(2)]
        self.gram_cell = self._cached(("cell_gram_matrix", cell_cid),
                                      lambda: submatrix(system.gram, dofs))
        self.gram_lu = self._cached(("cell_gram_lu", cell_cid),
                                    lambda: factorize(self.gram_cell, context=f"cell gram {self.cell.xi}"))
        self.lus = {mu: self._cached(("cell_op", cell_cid, mu, domhash),
                                     lambda mu=mu: factorize(self._op(mu), context=f"cell {self.cell.xi}"))
                    for mu in self.mus}

    def _cached(self, key, builder):
        if self._cache is None:
            return builder()
        return self._cache.get(key, builder)

    def _op(self, mu):
        return (mu * self.A_cell[0] + self.A_cell[1]).tocsc()

    def rhs(self, mu):
        return mu * self.rhs_comps[0] + self.rhs_comps[1]

    def solve_local(self, mu, j):
        """High fidelity local solution for training pair (mu, j)."""
        return self.lus[float(mu)].solve(self.rhs(mu)[:, j])

    def dual_norms(self, values):
        """Batched V'_cell dual norms of residual columns."""
        if values.ndim == 1:
            values = values[:, None]
        rep = self.gram_lu.solve(values)
        return np.sqrt(np.maximum(np.einsum("ij,ij->j", values, rep), 0.0))

    def delta_cell(self, utilde, mu, j, alpha_lb=alpha_lb_analytic):
        """Residual error bound for an arbitrary reduced state of pair (mu, j)."""
        resid = self.rhs(mu)[:, j] - (mu * (self.A_cell[0] @ utilde) + self.A_cell[1] @ utilde)
        return float(self.dual_norms(resid)[0]) / alpha_lb(mu)

    def all_deltas(self, Q, AQ, alpha_lb):
        """Delta_cell for every (mu, j) with the current reduced basis columns Q."""
        m = Q.shape[1]
        out = np.empty((len(self.mus), self.n_rhs))
        for mi, mu in enumerate(self.mus):
            rhs = self.rhs(mu)
            if m == 0:
                resid = rhs
            else:
                AmuQ = mu * AQ[0] + AQ[1]
                red = Q.T @ AmuQ
                red = 0.5 * (red + red.T)
                chol = spd_factor(red)
                coef = spd_solve(chol, Q.T @ rhs)
                resid = rhs - AmuQ @ coef
            out[mi] = self.dual_norms(resid) / alpha_lb(mu)
        return out


def local_greedy(system, decomp, cell_cid, coupling_bases, cfg, mus,
                 cache=None, revision=0, history=None):
    """Classical certified greedy over parameters x coupling right hand sides.

    ``history``, when given, collects the selected max estimator per iteration.
    """
    sc = decomp.classes[cell_cid]
    if sc.ndofs == 0:
        return empty_basis(decomp, cell_cid, revision)
    prob = CellProblem(system, decomp, cell_cid, coupling_bases, mus, cache=cache)
    n = len(prob.dofs)
    Q = np.zeros((n, 0))
    AQ = [np.zeros((n, 0)), np.zeros((n, 0))]
    gram = prob.gram_cell
    prev_max = None
    prev_pick = None
    for _ in range(cfg.max_iter):
        deltas = prob.all_deltas(Q, AQ, cfg.alpha_lb)
        flat = int(np.argmax(deltas))          # first max: lexicographic (mu, j)
        mi, j = divmod(flat, prob.n_rhs)
        worst = float(deltas[mi, j])
        if history is not None:
            history.append(worst)
        if worst <= cfg.eps_greedy:
            break
        if prev_pick == (mi, j) and prev_max is not None:
            if prev_max - worst <= cfg.stagnation_tol * max(1.0, prev_max):
                raise ConditioningError(
                    f"cell greedy stagnated on pair (mu={prob.mus[mi]}, j={j}) "
                    f"at estimator {worst:.3e} for cell {sc.xi}")
        prev_max, prev_pick = worst, (mi, j)
        w = prob.solve_local(prob.mus[mi], j)
        for _pass in range(2):
            if Q.shape[1]:
                w = w - Q @ (Q.T @ (gram @ w))
        nw = float(np.sqrt(max(w @ (gram @ w), 0.0)))
        if nw <= 1e-14:
            raise ConditioningError(
                f"cell greedy produced a dependent snapshot for cell {sc.xi} "
                f"(estimator {worst:.3e})")
        w /= nw
        Q = np.column_stack([Q, w])
        for b in range(2):
            AQ[b] = np.column_stack([AQ[b], prob.A_cell[b] @ w])
    else:
        raise ConditioningError(f"cell greedy for {sc.xi} exceeded {cfg.max_iter} iterations")
    return LocalBasis(cid=cell_cid, xi=sc.xi, codim=0, footprint=sc.dofs,
                      vectors=Q, revision=revision)
