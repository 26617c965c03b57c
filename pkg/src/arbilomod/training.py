"""Initial reduced face spaces by local solves with random coupling data.

For every face, source-term and random-coupling problems are solved on the
six-domain training patch for each training parameter, the face part of each
solution is extracted with the space decomposition, and a snapshot greedy
compresses the set to the training tolerance.  Vertex spaces are one
dimensional and taken whole.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import TrainingError
from .solvers import factorize, submatrix


def default_parameter_set(mu_min=1.0, mu_max=1e5, count=6):
    """Log-equispaced training parameters covering the contrast sweep."""
    return tuple(float(v) for v in np.power(10.0, np.linspace(np.log10(mu_min),
                                                              np.log10(mu_max), count)))


@dataclass(frozen=True)
class TrainingConfig:
    samples: int = 60                        # M random coupling samples per parameter
    eps_train: float = 1e-4
    parameters: tuple = field(default_factory=default_parameter_set)
    seed: int = 0


@dataclass
class LocalBasis:
    """V-orthonormal vectors of one reduced local subspace.

    Vectors are stored on the class footprint; conceptually they are
    full-length coefficient vectors supported there.
    """

    cid: int
    xi: tuple
    codim: int
    footprint: np.ndarray
    vectors: np.ndarray          # (len(footprint), dim)
    revision: int = 0

    @property
    def dim(self):
        return self.vectors.shape[1]

    def to_full(self, n_total):
        out = np.zeros((n_total, self.dim))
        out[self.footprint] = self.vectors
        return out


def empty_basis(decomp, cid, revision=0):
    sc = decomp.classes[cid]
    return LocalBasis(cid=cid, xi=sc.xi, codim=sc.codim, footprint=sc.footprint,
                      vectors=np.zeros((len(sc.footprint), 0)), revision=revision)


def random_coupling_sample(seed, xi, i, size):
    """Uniform [-1, 1] coefficients, reproducible from (seed, xi, i) alone."""
    key = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(v) for v in xi) + (int(i),))
    return np.random.Generator(np.random.PCG64(key)).uniform(-1.0, 1.0, size)


def snapshot_greedy(snapshots, gram, eps, reorthogonalize=True):
    """Greedy orthonormalization of snapshot columns in the norm induced by ``gram``.

    Selects the largest remaining snapshot, normalizes it, deflates the set,
    and repeats until every residual norm is at most ``eps``.  Residual norms
    are recomputed exactly each round.  Returns the orthonormal basis columns.
    """
    Z = np.array(snapshots, dtype=float, copy=True)
    n = Z.shape[0]
    basis = []
    if Z.size == 0:
        return np.zeros((n, 0))
    while True:
        norms = np.sqrt(np.maximum(np.einsum("ij,ij->j", Z, gram @ Z), 0.0))
        if norms.size == 0 or norms.max() <= eps:
            break
        j = int(np.argmax(norms))
        v = Z[:, j] / norms[j]
        if basis and reorthogonalize:
            Q = np.column_stack(basis)
            v = v - Q @ (Q.T @ (gram @ v))
            nv = float(np.sqrt(max(v @ (gram @ v), 0.0)))
            if nv <= 1e-14:
                Z[:, j] = 0.0          # numerically dependent snapshot, drop it
                continue
            v /= nv
        basis.append(v)
        Z -= np.outer(v, v @ (gram @ Z))
    return np.column_stack(basis) if basis else np.zeros((n, 0))


def vertex_basis(decomp, extender, system, vertex_cid, revision=0):
    """The whole (one dimensional) vertex space, V-normalized."""
    sc = decomp.classes[vertex_cid]
    if sc.ndofs == 0:
        return empty_basis(decomp, vertex_cid, revision)
    vec = extender.extend_vertex(vertex_cid, np.ones(1))
    gram_fp = submatrix(system.gram, sc.footprint)
    nv = float(np.sqrt(max(vec @ (gram_fp @ vec), 0.0)))
    return LocalBasis(cid=vertex_cid, xi=sc.xi, codim=2, footprint=sc.footprint,
                      vectors=(vec / nv)[:, None], revision=revision)


def train_face(face_cid, cfg, system, decomp, extender, revision=0):
    """Training of one reduced face space (source + random coupling snapshots)."""
    sc = decomp.classes[face_cid]
    if sc.ndofs == 0 or len(sc.training_dofs) == 0:
        return empty_basis(decomp, face_cid, revision)
    T = sc.training_dofs
    C = sc.coupling_dofs
    M = cfg.samples
    if M > 0 and len(C) > 0:
        G = np.column_stack([random_coupling_sample(cfg.seed, sc.xi, i, len(C))
                             for i in range(M)])
    else:
        G = np.zeros((len(C), 0))

    t_face = np.searchsorted(T, sc.dofs)
    endpoints = [(decomp.classes[vcid], weights, int(np.searchsorted(T, decomp.classes[vcid].dofs[0])))
                 for vcid, weights in sc.endpoint_vertices]

    snapshots = []
    for mu in cfg.parameters:
        A = system.matrix(mu)
        try:
            lu = factorize(submatrix(A, T), context=f"training patch {sc.xi}")
        except Exception as exc:
            raise TrainingError(f"training solve failed for face {sc.xi}: {exc}", xi=sc.xi) from exc
        rhs = np.empty((len(T), 1 + G.shape[1]))
        rhs[:, 0] = system.rhs(mu)[T]
        if G.shape[1]:
            rhs[:, 1:] = -(A[T, :][:, C] @ G)
        sols = lu.solve(rhs)
        coeffs = sols[t_face]
        for vsc, weights, pos in endpoints:
            coeffs = coeffs - weights[:, None] * sols[pos][None, :]
        snapshots.append(extender.extend_face(face_cid, coeffs))

    Z = np.hstack(snapshots)
    gram_fp = submatrix(system.gram, sc.footprint)
    vectors = snapshot_greedy(Z, gram_fp, cfg.eps_train)
    return LocalBasis(cid=face_cid, xi=sc.xi, codim=1, footprint=sc.footprint,
                      vectors=vectors, revision=revision)
