"""Global reduced problem over the direct sum of all local reduced spaces.

The reduced operator components B^T a^b B are assembled block-wise from the
per-class bases.  Footprints and their one-layer matrix dilations are static,
so after an enrichment or a localized geometry change only blocks touching a
changed basis are recomputed.
"""

from dataclasses import dataclass

import numpy as np

from .errors import StalenessError
from .solvers import spd_factor, spd_solve


def _domain_neighbors(dom, D):
    c, r = dom % D, dom // D
    out = set()
    for dc in (-1, 0, 1):
        for dr in (-1, 0, 1):
            cc, rr = c + dc, r + dr
            if 0 <= cc < D and 0 <= rr < D:
                out.add(rr * D + cc)
    return out


class ReducedAssembly:
    """Block cache for the reduced system; owns no parameter values."""

    def __init__(self, system, decomp):
        self.system = system
        self.decomp = decomp
        self.bases = {}
        self._Acsc = [system.components[b].tocsc() for b in range(2)]
        self._W = {}             # cid -> [dense (support, dim)] * 2
        self._rhs = {}           # cid -> [(dim,)] * 2
        self._blocks = {}        # (i, j), i <= j -> [dense] * 2
        self._build_static()

    def rebind(self, system):
        """Point at a reassembled operator; block maps are mesh-static.

        Callers must pass every class whose domains were touched as changed
        to the next ``update`` (retained classes' blocks only involve matrix
        rows inside their own unaffected domains).
        """
        self.system = system
        self._Acsc = [system.components[b].tocsc() for b in range(2)]

    # --- static structure ------------------------------------------------------
    def _build_static(self):
        A2 = self._Acsc[1]
        indptr, indices = A2.indptr, A2.indices
        classes = self.decomp.classes
        self.supports = {}
        for sc in classes:
            fp = sc.footprint
            if len(fp) == 0:
                self.supports[sc.cid] = fp
                continue
            cols = [indices[indptr[c]:indptr[c + 1]] for c in fp]
            self.supports[sc.cid] = np.unique(np.concatenate(cols))
        D = self.decomp.domains_per_side
        touch = {sc.cid: set(sc.xi) for sc in classes}
        reach = {cid: set().union(*(_domain_neighbors(d, D) for d in doms)) if doms else set()
                 for cid, doms in touch.items()}
        self.pair_maps = {}
        self.pairs_of = {cid: [] for cid in range(len(classes))}
        for i in range(len(classes)):
            for j in range(i, len(classes)):
                if not (touch[j] & reach[i]):
                    continue
                fp_i = classes[i].footprint
                sup_j = self.supports[j]
                if len(fp_i) == 0 or len(sup_j) == 0:
                    continue
                common, pos_i, pos_j = np.intersect1d(fp_i, sup_j,
                                                      assume_unique=True, return_indices=True)
                if len(common) == 0:
                    continue
                self.pair_maps[(i, j)] = (pos_i, pos_j)
                self.pairs_of[i].append((i, j))
                if i != j:
                    self.pairs_of[j].append((i, j))

    # --- incremental updates -----------------------------------------------------
    def _recompute_class(self, cid):
        basis = self.bases.get(cid)
        sc = self.decomp.classes[cid]
        if basis is None or basis.dim == 0:
            self._W[cid] = None
            self._rhs[cid] = [np.zeros(0), np.zeros(0)]
            return
        support = self.supports[cid]
        per_comp = []
        for b in range(2):
            full = self._Acsc[b][:, basis.footprint] @ basis.vectors
            per_comp.append(np.asarray(full)[support])
        self._W[cid] = per_comp
        self._rhs[cid] = [basis.vectors.T @ self.system.rhs_components[b][basis.footprint]
                          for b in range(2)]

    def _recompute_block(self, i, j):
        bi = self.bases.get(i)
        bj = self.bases.get(j)
        if bi is None or bj is None or bi.dim == 0 or bj.dim == 0 or self._W[j] is None:
            self._blocks.pop((i, j), None)
            return
        pos_i, pos_j = self.pair_maps[(i, j)]
        left = bi.vectors[pos_i]
        self._blocks[(i, j)] = [left.T @ self._W[j][b][pos_j] for b in range(2)]

    def update(self, bases, changed=None, revision=0):
        """Refresh blocks for changed classes and snapshot a ReducedModel."""
        if changed is None:
            changed = set(bases)
            self._W.clear()
            self._rhs.clear()
            self._blocks.clear()
        else:
            changed = set(changed)
        for basis in bases.values():
            if basis.dim > 0 and basis.revision != revision:
                raise StalenessError(
                    f"basis for class {basis.xi} is tagged revision {basis.revision}, "
                    f"expected {revision}")
        self.bases = dict(bases)
        for cid in sorted(changed):
            self._recompute_class(cid)
        pairs = set()
        for cid in changed:
            pairs.update(self.pairs_of[cid])
        for i, j in sorted(pairs):
            self._recompute_block(i, j)
        return self.materialize(revision)

    # --- snapshot -----------------------------------------------------------------
    def materialize(self, revision):
        order = [cid for cid in range(len(self.decomp.classes))
                 if self.bases.get(cid) is not None and self.bases[cid].dim > 0]
        offsets = {}
        pos = 0
        for cid in order:
            offsets[cid] = slice(pos, pos + self.bases[cid].dim)
            pos += self.bases[cid].dim
        dim = pos
        comps = [np.zeros((dim, dim)), np.zeros((dim, dim))]
        for (i, j), blocks in self._blocks.items():
            if i not in offsets or j not in offsets:
                continue
            for b in range(2):
                comps[b][offsets[i], offsets[j]] = blocks[b]
                if i != j:
                    comps[b][offsets[j], offsets[i]] = blocks[b].T
        rhs = [np.zeros(dim), np.zeros(dim)]
        for cid in order:
            for b in range(2):
                rhs[b][offsets[cid]] = self._rhs[cid][b]
        return ReducedModel(system=self.system, decomp=self.decomp,
                            bases=dict(self.bases), components=comps,
                            rhs_components=rhs, offsets=offsets, dim=dim,
                            revision=revision)


@dataclass
class ReducedModel:
    """Immutable snapshot of the assembled reduced system."""

    system: object
    decomp: object
    bases: dict
    components: list
    rhs_components: list
    offsets: dict
    dim: int
    revision: int

    def operator(self, mu):
        mu = float(mu)
        return mu * self.components[0] + self.components[1]

    def rhs(self, mu):
        mu = float(mu)
        return mu * self.rhs_components[0] + self.rhs_components[1]

    def solve(self, mu):
        """Reduced coefficients and the reconstructed full field (with shift)."""
        if self.dim == 0:
            return np.zeros(0), self.system.shift.copy()
        A = self.operator(mu)
        A = 0.5 * (A + A.T)
        chol = spd_factor(A)
        coef = spd_solve(chol, self.rhs(mu))
        return coef, self.reconstruct(coef)

    def reconstruct(self, coef):
        u = self.system.shift.copy()
        for cid, sl in self.offsets.items():
            basis = self.bases[cid]
            u[basis.footprint] += basis.vectors @ coef[sl]
        return u

    def galerkin_residual(self, coef, mu):
        """Residual of the reduced equations themselves (orthogonality check)."""
        return self.rhs(mu) - self.operator(mu) @ coef
