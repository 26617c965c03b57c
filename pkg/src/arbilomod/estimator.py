"""Residual based a posteriori error control, global and localized.

The localized variant sums squared dual norms of the residual over the
vertex-centered overlapping patches; a parity 4-coloring of the patches gives
the grouping constant J = 4 for rectangular decompositions.
"""

import math
from dataclasses import dataclass

import numpy as np

C_FRIEDRICHS = 1.0 / (math.sqrt(2.0) * math.pi)
SIGMA_MIN = 1.0


def alpha_lb_analytic(mu):
    """Coercivity lower bound sigma_min / (c_F^2 + 1) of the H^1-coercive form."""
    return SIGMA_MIN / (C_FRIEDRICHS ** 2 + 1.0)


def gamma_ub_analytic(mu):
    """Continuity upper bound; the natural choice is the maximal conductivity."""
    return 1.0 + float(mu)


@dataclass(frozen=True)
class EstimatorConstants:
    alpha_lb: object = alpha_lb_analytic
    gamma_ub: object = gamma_ub_analytic
    c_pu: float = 1.0            # partition stability constant, 1 unless certified
    j_group: int = 4             # grouping constant 2^d for rectangular grids


def residual(system, u_full, mu):
    """Residual functional of a field that includes the Dirichlet shift.

    Entries at Dirichlet nodes are zeroed; the functional acts on the test
    space of free dofs.
    """
    u0 = u_full - system.shift
    r = system.rhs(mu) - system.matrix(mu) @ u0
    r[system.dofs.dirichlet_dofs] = 0.0
    return r


def residual_dual_norm(system, resid):
    free = system.dofs.free_dofs
    return float(system.gram_solver.dual_norm("free", free, resid[free]))


def estimate_global(system, resid, mu, consts):
    """Delta = ||R||_{V'} / alpha_lb(mu)."""
    return residual_dual_norm(system, resid) / consts.alpha_lb(mu)


def patch_indicators(system, decomp, resid):
    """Dual norms of the residual on all overlapping patches."""
    out = np.empty(len(decomp.vertices))
    for k, cid in enumerate(decomp.vertices):
        dofs = decomp.classes[cid].footprint
        out[k] = system.gram_solver.dual_norm(("patch", cid), dofs, resid[dofs])
    return out


def estimate_localized(system, decomp, resid, mu, consts):
    """Localized estimator and the per-patch indicators it is built from."""
    ind = patch_indicators(system, decomp, resid)
    delta_loc = consts.c_pu * float(np.sqrt((ind ** 2).sum())) / consts.alpha_lb(mu)
    return delta_loc, ind


def estimate_relative(delta, norm_u):
    """Relative bound delta / (||u~|| - delta); inf when uninformative."""
    if delta < 0:
        raise ValueError("estimator value must be nonnegative")
    denom = norm_u - delta
    if denom <= 0:
        return math.inf
    return delta / denom
