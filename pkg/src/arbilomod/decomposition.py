"""Dof classification, local subspaces, extension operators and projections.

Every free dof belongs to exactly one class xi: the sorted tuple of domains
whose closure meets its basis function's support.  Cells (|xi| = 1), faces
(|xi| = 2) and vertices (|xi| = 4) are enumerated structurally for the whole
decomposition, so empty classes (possible on very coarse meshes) still exist
as objects and are skipped where appropriate.
"""

from dataclasses import dataclass, field

import numpy as np

from .solvers import FactorCache, factorize, submatrix

MU_BAR_DEFAULT = 1e5


@dataclass
class SpaceClass:
    cid: int
    xi: tuple                   # sorted domain ids
    codim: int                  # 0 cell, 1 face, 2 vertex
    dofs: np.ndarray            # own dofs, sorted node indices
    footprint: np.ndarray = None
    fp_pos: dict = field(default_factory=dict)   # member cid -> positions in footprint
    # cells
    coupling_cids: tuple = ()   # faces/vertices touching this cell
    ring_slices: dict = field(default_factory=dict)  # member cid -> slice into ring dofs
    ring_dofs: np.ndarray = None
    extension_keep: np.ndarray = None   # positions of dofs used as extension unknowns
    # faces
    orientation: str = ""       # "v" or "h"
    neighborhood: tuple = ()    # N_xi
    training_dofs: np.ndarray = None
    coupling_dofs: np.ndarray = None
    endpoint_vertices: tuple = ()         # (vertex cid, weights aligned to face dofs)
    # vertices
    member_faces: tuple = ()    # ((face cid, weights), ...)
    member_cells: tuple = ()
    color: int = -1
    position: tuple = ()

    @property
    def ndofs(self):
        return len(self.dofs)


@dataclass
class SpaceDecomposition:
    mesh: object
    dofs: object
    domains_per_side: int
    classes: list
    cells: list                 # cids by domain id order
    faces: list
    vertices: list
    by_xi: dict

    @property
    def num_cells(self):
        return len(self.cells)

    @property
    def num_faces(self):
        return len(self.faces)

    @property
    def num_vertices(self):
        return len(self.vertices)

    def cell_of_domain(self, dom):
        return self.cells[dom]

    def classes_by_codim(self, codim):
        return [c for c in self.classes if c.codim == codim]

    def nonempty(self, cids):
        return [cid for cid in cids if self.classes[cid].ndofs > 0]


def _face_neighborhood(orientation, c, r, D):
    if orientation == "v":                      # between (c,r) and (c+1,r)
        cols = [c, c + 1]
        rows = [rr for rr in (r - 1, r, r + 1) if 0 <= rr < D]
    else:                                       # between (c,r) and (c,r+1)
        cols = [cc for cc in (c - 1, c, c + 1) if 0 <= cc < D]
        rows = [r, r + 1]
    return tuple(sorted(rr * D + cc for rr in rows for cc in cols))


def classify(mesh, dofs):
    """Build the full space decomposition for the handler's D x D grid."""
    D = dofs.domains_per_side
    classes = []
    by_xi = {}

    def add(xi, codim, **kw):
        sc = SpaceClass(cid=len(classes), xi=xi, codim=codim,
                        dofs=np.empty(0, dtype=np.int64), **kw)
        classes.append(sc)
        by_xi[xi] = sc.cid
        return sc

    cells = []
    for dom in range(D * D):
        cells.append(add((dom,), 0).cid)

    faces = []
    for r in range(D):
        for c in range(D - 1):
            xi = tuple(sorted((r * D + c, r * D + c + 1)))
            sc = add(xi, 1, orientation="v", neighborhood=_face_neighborhood("v", c, r, D))
            faces.append(sc.cid)
    for r in range(D - 1):
        for c in range(D):
            xi = tuple(sorted((r * D + c, (r + 1) * D + c)))
            sc = add(xi, 1, orientation="h", neighborhood=_face_neighborhood("h", c, r, D))
            faces.append(sc.cid)

    vertices = []
    for j in range(1, D):
        for i in range(1, D):
            doms = tuple(sorted(((j - 1) * D + i - 1, (j - 1) * D + i,
                                 j * D + i - 1, j * D + i)))
            up = by_xi[tuple(sorted((j * D + i - 1, j * D + i)))]
            down = by_xi[tuple(sorted(((j - 1) * D + i - 1, (j - 1) * D + i)))]
            right = by_xi[tuple(sorted(((j - 1) * D + i, j * D + i)))]
            left = by_xi[tuple(sorted(((j - 1) * D + i - 1, j * D + i - 1)))]
            sc = add(doms, 2,
                     member_cells=tuple(sorted(doms)),
                     color=(i % 2) * 2 + (j % 2),
                     position=(i / D, j / D))
            sc.member_faces = tuple((f, None) for f in (up, down, left, right))
            vertices.append(sc.cid)

    # assign free dofs to classes via their (col range, row range) signature
    free = dofs.free_dofs
    sig = np.column_stack([dofs.domain_cols[free], dofs.domain_rows[free]])
    uniq, inverse = np.unique(sig, axis=0, return_inverse=True)
    order = np.argsort(inverse, kind="stable")
    bounds = np.searchsorted(inverse[order], np.arange(len(uniq) + 1))
    for u in range(len(uniq)):
        c0, c1, r0, r1 = (int(v) for v in uniq[u])
        xi = tuple(sorted(r * D + c for r in range(r0, r1 + 1) for c in range(c0, c1 + 1)))
        nodes = np.sort(free[order[bounds[u]:bounds[u + 1]]])
        classes[by_xi[xi]].dofs = nodes.astype(np.int64)

    decomp = SpaceDecomposition(mesh=mesh, dofs=dofs, domains_per_side=D,
                                classes=classes, cells=cells, faces=faces,
                                vertices=vertices, by_xi=by_xi)
    _build_structure(decomp)
    return decomp


def _build_structure(decomp):
    mesh = decomp.mesh
    D = decomp.domains_per_side
    classes = decomp.classes
    H = 1.0 / D

    for cid in decomp.cells:
        sc = classes[cid]
        dom = sc.xi[0]
        coupling = tuple(c.cid for c in classes
                         if c.codim > 0 and dom in c.xi)
        sc.coupling_cids = coupling
        sc.ring_dofs = (np.concatenate([classes[c].dofs for c in coupling])
                        if coupling else np.empty(0, dtype=np.int64))
        off = 0
        for c in coupling:
            nd = classes[c].ndofs
            sc.ring_slices[c] = slice(off, off + nd)
            off += nd
        sc.footprint = sc.dofs
        sc.fp_pos = {cid: np.arange(sc.ndofs)}
        # extension unknowns exclude nodes on the outer boundary, so that at
        # sigma == 1 vertex extensions reproduce coarse hats exactly
        xy = mesh.nodes[sc.dofs]
        interior = (xy[:, 0] > 0) & (xy[:, 0] < 1) & (xy[:, 1] > 0) & (xy[:, 1] < 1)
        sc.extension_keep = np.flatnonzero(interior)

    for cid in decomp.faces:
        sc = classes[cid]
        members = [cid] + [decomp.cells[d] for d in sc.xi]
        fp = np.sort(np.concatenate([classes[m].dofs for m in members]))
        sc.footprint = fp
        sc.fp_pos = {m: np.searchsorted(fp, classes[m].dofs) for m in members}
        nset = set(sc.neighborhood)
        t_parts, c_parts = [], []
        for other in classes:
            xiset = set(other.xi)
            if xiset <= nset:
                t_parts.append(other.dofs)
            elif xiset & nset:
                c_parts.append(other.dofs)
        sc.training_dofs = np.sort(np.concatenate(t_parts)) if t_parts else np.empty(0, np.int64)
        sc.coupling_dofs = np.sort(np.concatenate(c_parts)) if c_parts else np.empty(0, np.int64)

    for cid in decomp.vertices:
        sc = classes[cid]
        px, py = sc.position
        member_faces = []
        for fcid, _ in sc.member_faces:
            f = classes[fcid]
            axis = 1 if f.orientation == "v" else 0
            coords = mesh.nodes[f.dofs, axis]
            ref = py if axis == 1 else px
            weights = 1.0 - np.abs(coords - ref) / H
            member_faces.append((fcid, weights))
            f.endpoint_vertices = f.endpoint_vertices + ((cid, weights),)
        sc.member_faces = tuple(member_faces)
        sc.member_cells = tuple(decomp.cells[d] for d in sc.xi)
        members = [cid] + [f for f, _ in sc.member_faces] + list(sc.member_cells)
        fp = np.sort(np.concatenate([classes[m].dofs for m in members]))
        sc.footprint = fp
        sc.fp_pos = {m: np.searchsorted(fp, classes[m].dofs) for m in members}


def overlapping_patches(decomp):
    """The vertex-centered overlapping spaces used by estimator and enrichment.

    Patch dofs equal the vertex footprint (direct sum of all contained basic
    spaces); the returned list is ordered like ``decomp.vertices``.
    """
    return [(cid, decomp.classes[cid].footprint, decomp.classes[cid].color)
            for cid in decomp.vertices]


def patch_color_classes(decomp):
    """Group patches into 4 classes with pairwise disjoint open supports."""
    groups = {0: [], 1: [], 2: [], 3: []}
    for cid in decomp.vertices:
        groups[decomp.classes[cid].color].append(cid)
    return groups


class Extender:
    """Harmonic-type continuation of basic-space functions at fixed mu_bar.

    Faces extend into their two cells by a local homogeneous solve; vertices
    first decay linearly to zero along their four faces and then solve in the
    four cells.  Cell factorizations are keyed by the geometry content of the
    owning domain, so unchanged domains reuse factors across revisions.
    """

    def __init__(self, system, decomp, mu_bar=MU_BAR_DEFAULT, cache=None):
        self.system = system
        self.decomp = decomp
        self.mu_bar = float(mu_bar)
        self._cache = cache if cache is not None else FactorCache(maxsize=1024)
        self._matrix = system.matrix(self.mu_bar)

    def _cell_context(self, cell_cid):
        sc = self.decomp.classes[cell_cid]
        dom = sc.xi[0]
        key = ("extend", cell_cid,
               self.system.geometry.domain_restriction_hash(self.decomp.domains_per_side, dom))

        def build():
            A = self._matrix
            unknowns = sc.dofs[sc.extension_keep]
            lu = factorize(submatrix(A, unknowns), context=f"extension cell {sc.xi}")
            ring_block = A[unknowns, :][:, sc.ring_dofs] if len(sc.ring_dofs) else None
            return lu, ring_block

        return self._cache.get(key, build)

    def extend_face(self, face_cid, coeffs):
        """Extend face coefficients (ndofs or ndofs x k) onto the footprint."""
        sc = self.decomp.classes[face_cid]
        coeffs = np.asarray(coeffs, dtype=float)
        single = coeffs.ndim == 1
        if single:
            coeffs = coeffs[:, None]
        out = np.zeros((len(sc.footprint), coeffs.shape[1]))
        out[sc.fp_pos[face_cid]] = coeffs
        for dom in sc.xi:
            cell_cid = self.decomp.cells[dom]
            cell = self.decomp.classes[cell_cid]
            if len(cell.extension_keep) == 0:
                continue
            lu, ring_block = self._cell_context(cell_cid)
            rhs = -(ring_block[:, cell.ring_slices[face_cid]] @ coeffs)
            out[sc.fp_pos[cell_cid][cell.extension_keep]] = lu.solve(rhs)
        return out[:, 0] if single else out

    def extend_vertex(self, vertex_cid, coeffs):
        """Extend the single vertex coefficient (scalar or length-k) onto the footprint."""
        sc = self.decomp.classes[vertex_cid]
        coeffs = np.asarray(coeffs, dtype=float)
        single = coeffs.ndim <= 1 and coeffs.size == 1 and coeffs.ndim != 2
        mat = coeffs.reshape(1, -1)
        k = mat.shape[1]
        out = np.zeros((len(sc.footprint), k))
        out[sc.fp_pos[vertex_cid]] = mat
        face_vals = {}
        for fcid, weights in sc.member_faces:
            vals = weights[:, None] * mat
            face_vals[fcid] = vals
            out[sc.fp_pos[fcid]] = vals
        for cell_cid in sc.member_cells:
            cell = self.decomp.classes[cell_cid]
            if len(cell.extension_keep) == 0:
                continue
            lu, ring_block = self._cell_context(cell_cid)
            rhs = -(ring_block[:, cell.ring_slices[vertex_cid]] @ mat)
            for fcid, vals in face_vals.items():
                if fcid in cell.ring_slices:
                    rhs -= ring_block[:, cell.ring_slices[fcid]] @ vals
            out[sc.fp_pos[cell_cid][cell.extension_keep]] = lu.solve(rhs)
        return out[:, 0] if single else out

    def extend(self, cid, coeffs):
        sc = self.decomp.classes[cid]
        if sc.codim == 0:
            return np.array(coeffs, dtype=float, copy=True)
        if sc.codim == 1:
            return self.extend_face(cid, coeffs)
        return self.extend_vertex(cid, coeffs)


def project(field, decomp, extender, subset=None):
    """Decompose a field into its local parts (descending codimension).

    Returns {cid: values aligned with the class footprint}.  The parts sum to
    the input exactly (up to roundoff); with ``subset`` only the listed
    classes are processed, which is exact whenever the field's support
    touches no other class.
    """
    work = np.array(field, dtype=float, copy=True)
    single = work.ndim == 1
    if single:
        work = work[:, None]
    cids = range(len(decomp.classes)) if subset is None else subset
    by_codim = {2: [], 1: [], 0: []}
    for cid in cids:
        by_codim[decomp.classes[cid].codim].append(cid)
    parts = {}
    for codim in (2, 1):
        for cid in by_codim[codim]:
            sc = decomp.classes[cid]
            if sc.ndofs == 0:
                parts[cid] = np.zeros((len(sc.footprint), work.shape[1]))
                continue
            coeffs = work[sc.dofs]
            vals = extender.extend(cid, coeffs)
            vals = vals if vals.ndim == 2 else vals[:, None]
            parts[cid] = vals
            work[sc.footprint] -= vals
    for cid in by_codim[0]:
        sc = decomp.classes[cid]
        parts[cid] = work[sc.dofs].copy()
    if single:
        parts = {cid: v[:, 0] for cid, v in parts.items()}
    return parts


def part_to_full(decomp, cid, values, n_total):
    out_shape = (n_total,) if values.ndim == 1 else (n_total, values.shape[1])
    out = np.zeros(out_shape)
    out[decomp.classes[cid].footprint] = values
    return out
