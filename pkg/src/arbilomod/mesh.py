"""Structured crossed-triangle mesh on the unit square and dof bookkeeping.

The mesh is the "crossed" refinement: every one of the n x n squares carries
one extra node at its center and is split into four triangles.  This is the
only standard structured triangulation with (n+1)^2 + n^2 nodes, which is the
node count all size formulas in this package rely on.

Node ordering: the (n+1)^2 lattice nodes come first (row major, y-index
outer), followed by the n^2 center nodes (row major as well).
"""

from dataclasses import dataclass

import numpy as np

LATTICE = 0
CENTER = 1


@dataclass(frozen=True)
class Mesh:
    n: int                      # squares per side, h = 1/n
    nodes: np.ndarray           # (N, 2) float64 coordinates
    triangles: np.ndarray       # (4*n^2, 3) int32 node indices, CCW
    node_kind: np.ndarray       # (N,) uint8, LATTICE or CENTER

    @property
    def h(self):
        return 1.0 / self.n

    @property
    def num_nodes(self):
        return self.nodes.shape[0]

    @property
    def num_lattice(self):
        return (self.n + 1) ** 2

    def lattice_index(self, i, j):
        """Node index of lattice point (i*h, j*h)."""
        return j * (self.n + 1) + i

    def lattice_values(self, field):
        """Restrict a nodal field to the (n+1)x(n+1) lattice, row major in y."""
        return np.asarray(field)[: self.num_lattice].reshape(self.n + 1, self.n + 1)


def build_mesh(n):
    """Build the crossed triangulation of [0,1]^2 with n squares per side."""
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError(f"cells per side must be a positive integer, got {n!r}")
    n = int(n)
    ij = np.arange(n + 1)
    X, Y = np.meshgrid(ij, ij)                      # Y is the outer (row) index
    lattice = np.column_stack([X.ravel(), Y.ravel()]) / n
    ic = np.arange(n)
    Xc, Yc = np.meshgrid(ic, ic)
    centers = (np.column_stack([Xc.ravel(), Yc.ravel()]) + 0.5) / n
    nodes = np.vstack([lattice, centers])

    # square (i, j): corners a,b,c,d counter-clockwise, m the center node
    a = (Yc * (n + 1) + Xc).ravel()
    b = a + 1
    c = b + (n + 1)
    d = a + (n + 1)
    m = (n + 1) ** 2 + np.arange(n * n)
    triangles = np.empty((4 * n * n, 3), dtype=np.int32)
    triangles[0::4] = np.column_stack([a, b, m])
    triangles[1::4] = np.column_stack([b, c, m])
    triangles[2::4] = np.column_stack([c, d, m])
    triangles[3::4] = np.column_stack([d, a, m])

    kind = np.zeros(nodes.shape[0], dtype=np.uint8)
    kind[(n + 1) ** 2:] = CENTER
    return Mesh(n=n, nodes=nodes, triangles=triangles, node_kind=kind)


@dataclass(frozen=True)
class DofHandler:
    """Dirichlet/free split and per-node subdomain incidence.

    ``domain_cols``/``domain_rows`` hold, per node, the (lo, hi) range of
    domain columns/rows whose closure meets the node's basis function support;
    hi == lo for nodes interior to a domain strip.  The incidence set I of a
    node is the product of both ranges, so 1 <= |I| <= 4.
    """

    total_dofs: int
    domains_per_side: int
    dirichlet_dofs: np.ndarray   # sorted node indices with x in {0, 1}
    free_dofs: np.ndarray        # sorted complement
    free_mask: np.ndarray        # (N,) bool
    domain_cols: np.ndarray      # (N, 2) int16
    domain_rows: np.ndarray      # (N, 2) int16

    def domain_tags(self, node):
        """Set of subdomain ids (row * D + col) incident to a node."""
        D = self.domains_per_side
        c0, c1 = self.domain_cols[node]
        r0, r1 = self.domain_rows[node]
        return frozenset(int(r) * D + int(c)
                         for r in range(r0, r1 + 1) for c in range(c0, c1 + 1))


def _strip_ranges(idx, w, nstrips, on_line):
    """Domain strip range (lo, hi) for 1D node index ``idx`` with strip width w."""
    lo = np.minimum(idx // w, nstrips - 1).astype(np.int16)
    hi = lo.copy()
    interior_line = on_line & (idx > 0) & (idx < w * nstrips)
    lo[interior_line] -= 1
    return lo, hi


def build_dof_handler(mesh, domains_per_side):
    """Classify nodes against an equidistant D x D domain decomposition.

    Dirichlet dofs are the lattice nodes on x = 0 and x = 1.
    """
    D = int(domains_per_side)
    if D < 1:
        raise ValueError("domains_per_side must be >= 1")
    if mesh.n % D != 0:
        raise ValueError(f"mesh with n={mesh.n} does not resolve a {D}x{D} decomposition")
    w = mesh.n // D
    n = mesh.n
    N = mesh.num_nodes

    nl = mesh.num_lattice
    li = np.arange(nl)
    ix = li % (n + 1)
    iy = li // (n + 1)

    dirichlet = li[(ix == 0) | (ix == n)]
    mask = np.ones(N, dtype=bool)
    mask[dirichlet] = False
    free = np.flatnonzero(mask)

    cols = np.empty((N, 2), dtype=np.int16)
    rows = np.empty((N, 2), dtype=np.int16)
    clo, chi = _strip_ranges(ix, w, D, ix % w == 0)
    rlo, rhi = _strip_ranges(iy, w, D, iy % w == 0)
    cols[:nl, 0], cols[:nl, 1] = clo, chi
    rows[:nl, 0], rows[:nl, 1] = rlo, rhi

    ci = np.arange(N - nl)
    cx = (ci % n) // w
    cy = (ci // n) // w
    cols[nl:, 0] = cols[nl:, 1] = cx.astype(np.int16)
    rows[nl:, 0] = rows[nl:, 1] = cy.astype(np.int16)

    return DofHandler(total_dofs=N, domains_per_side=D,
                      dirichlet_dofs=dirichlet, free_dofs=free, free_mask=mask,
                      domain_cols=cols, domain_rows=rows)
