"""High-conductivity structure as a union of axis-aligned rectangles.

All coordinates live on a 1/1000 grid, which keeps set operations between
geometries exact: geometries are compared and diffed through their raster
on that grid, not through their (non-unique) rectangle decompositions.
"""

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryResolutionError

GRID = 1000                     # coordinate resolution, 1/1000
MU_RANGE = (1e0, 1e5)
GEOMETRY_FORMAT_VERSION = 1
_RASTER_CACHE = {}


def _snap(value):
    scaled = value * GRID
    snapped = round(scaled)
    if abs(scaled - snapped) > 1e-9 * GRID:
        raise ValueError(f"coordinate {value} is not representable on the 1/{GRID} grid")
    return int(snapped)


def _check_rect(rect):
    x0, y0, x1, y1 = (float(v) for v in rect)
    if not (0.0 <= x0 < x1 <= 1.0 and 0.0 <= y0 < y1 <= 1.0):
        raise ValueError(f"rectangle {rect} is degenerate or outside the unit square")
    for v in (x0, y0, x1, y1):
        _snap(v)
    return (x0, y0, x1, y1)


@dataclass(frozen=True)
class GeometryModel:
    """Parameterized conductivity field: sigma = 1 + mu inside, 1 outside."""

    rectangles: tuple = ()
    mu_min: float = MU_RANGE[0]
    mu_max: float = MU_RANGE[1]
    sigma_background: float = field(default=1.0, init=False)

    def __post_init__(self):
        rects = tuple(sorted(_check_rect(r) for r in self.rectangles))
        object.__setattr__(self, "rectangles", rects)
        if not (0 < self.mu_min <= self.mu_max):
            raise ValueError("parameter range must satisfy 0 < mu_min <= mu_max")

    def raster(self):
        """Boolean occupancy on the 1/GRID grid, indexed [iy, ix]."""
        mask = np.zeros((GRID, GRID), dtype=bool)
        for x0, y0, x1, y1 in self.rectangles:
            mask[_snap(y0):_snap(y1), _snap(x0):_snap(x1)] = True
        return mask

    def area(self):
        return float(self.raster().sum()) / (GRID * GRID)

    def contains(self, x, y):
        """Vectorized membership test for points strictly inside rectangles."""
        x = np.asarray(x)
        y = np.asarray(y)
        inside = np.zeros(x.shape, dtype=bool)
        for x0, y0, x1, y1 in self.rectangles:
            inside |= (x > x0) & (x < x1) & (y > y0) & (y < y1)
        return inside

    def check_resolved_by(self, n):
        """Raise unless every rectangle edge lies on the 1/n mesh grid."""
        for rect in self.rectangles:
            for v in rect:
                if abs(v * n - round(v * n)) > 1e-9 * n:
                    raise GeometryResolutionError(
                        f"rectangle edge {v} not resolved by mesh with n={n}")

    def domain_restriction_hash(self, domains_per_side, domain_id):
        """Stable key for the geometry content of one subdomain."""
        D = int(domains_per_side)
        w = GRID // D
        if w * D != GRID:
            raise ValueError(f"{D}x{D} decomposition does not align with the 1/{GRID} grid")
        c, r = domain_id % D, domain_id // D
        patch = self._raster_cached()[r * w:(r + 1) * w, c * w:(c + 1) * w]
        return hashlib.sha1(np.packbits(patch).tobytes()).hexdigest()[:16]

    def _raster_cached(self):
        cached = _RASTER_CACHE.get(self.rectangles)
        if cached is None:
            cached = self.raster()
            if len(_RASTER_CACHE) > 16:
                _RASTER_CACHE.clear()
            _RASTER_CACHE[self.rectangles] = cached
        return cached


@dataclass(frozen=True)
class ChangeSet:
    added: tuple = ()
    removed: tuple = ()
    affected_domains: frozenset = frozenset()

    def __bool__(self):
        return bool(self.added or self.removed)


def _mask_to_rectangles(mask):
    """Greedy exact rectangle cover of a boolean raster (row-run merging)."""
    rects = []
    open_runs = {}              # (ix0, ix1) -> iy0 of a run of identical rows
    for iy in range(GRID + 1):
        row_runs = set()
        if iy < GRID and mask[iy].any():
            d = np.diff(mask[iy].astype(np.int8))
            starts = list(np.flatnonzero(d == 1) + 1)
            ends = list(np.flatnonzero(d == -1) + 1)
            if mask[iy, 0]:
                starts.insert(0, 0)
            if mask[iy, -1]:
                ends.append(GRID)
            row_runs = set(zip(starts, ends))
        for run in list(open_runs):
            if run not in row_runs:
                iy0 = open_runs.pop(run)
                rects.append((float(run[0]) / GRID, iy0 / GRID,
                              float(run[1]) / GRID, iy / GRID))
        for run in row_runs:
            open_runs.setdefault(run, iy)
    return tuple(sorted(rects))


def _strip_candidates(idx, w, nstrips):
    """Per-pixel strip sets: the covering strip plus boundary-touch neighbours."""
    base = np.minimum(idx // w, nstrips - 1)
    lo = np.where((idx % w == 0) & (idx > 0), base - 1, base)
    hi = np.where(((idx + 1) % w == 0) & (idx + 1 < w * nstrips), base + 1, base)
    return lo, hi


def _affected_domains(diff_mask, domains_per_side):
    """Domains whose closure intersects any changed raster pixel."""
    D = int(domains_per_side)
    w = GRID // D
    ys, xs = np.nonzero(diff_mask)
    clo, chi = _strip_candidates(xs, w, D)
    rlo, rhi = _strip_candidates(ys, w, D)
    affected = set()
    for cols, rows in ((clo, rlo), (clo, rhi), (chi, rlo), (chi, rhi)):
        affected.update(np.unique(rows * D + cols).tolist())
    return frozenset(int(d) for d in affected)


def diff(old, new, domains_per_side=8):
    """Exact region difference of two geometries and the induced affected set."""
    old_mask = old.raster()
    new_mask = new.raster()
    added_mask = new_mask & ~old_mask
    removed_mask = old_mask & ~new_mask
    if not added_mask.any() and not removed_mask.any():
        return ChangeSet()
    return ChangeSet(added=_mask_to_rectangles(added_mask),
                     removed=_mask_to_rectangles(removed_mask),
                     affected_domains=_affected_domains(added_mask | removed_mask,
                                                        domains_per_side))


# Benchmark structure: two vertical bars bridged by three thin channels; the
# sequence of five variants opens/closes the channel tips at the bars.
_BARS = ((0.0, 0.0, 0.1, 1.0), (0.9, 0.0, 1.0, 1.0))
_OUTER_CHANNELS = ((0.11, 0.475, 0.89, 0.485), (0.11, 0.515, 0.89, 0.525))
_MID_FULL = (0.1, 0.495, 0.9, 0.505)
_MID_NO_LEFT = (0.11, 0.495, 0.9, 0.505)
_MID_NO_BOTH = (0.11, 0.495, 0.89, 0.505)
_TIP_UPPER_LEFT = (0.1, 0.515, 0.11, 0.525)
_TIP_MID_RIGHT = (0.89, 0.495, 0.9, 0.505)


def benchmark_geometry(k):
    """The k-th structure (k in 1..5) of the benchmark modification sequence."""
    if k not in (1, 2, 3, 4, 5):
        raise ValueError(f"benchmark geometry index must be in 1..5, got {k!r}")
    base = _BARS + _OUTER_CHANNELS
    variants = {
        1: base + (_MID_FULL,),
        2: base + (_MID_NO_LEFT,),
        3: base + (_MID_NO_BOTH,),
        4: base + (_MID_NO_BOTH, _TIP_UPPER_LEFT),
        5: base + (_MID_NO_BOTH, _TIP_UPPER_LEFT, _TIP_MID_RIGHT),
    }
    return GeometryModel(rectangles=variants[k], mu_min=MU_RANGE[0], mu_max=MU_RANGE[1])


def save_geometry(geom, path):
    doc = {
        "version": GEOMETRY_FORMAT_VERSION,
        "rectangles": [list(r) for r in geom.rectangles],
        "mu_min": geom.mu_min,
        "mu_max": geom.mu_max,
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


def geometry_from_document(doc):
    if not isinstance(doc, dict):
        raise ValueError("geometry document must be a key-value tree")
    if doc.get("version") != GEOMETRY_FORMAT_VERSION:
        raise ValueError(f"unsupported geometry format version {doc.get('version')!r}")
    rects = [tuple(r) for r in doc["rectangles"]]
    return GeometryModel(rectangles=rects,
                         mu_min=float(doc.get("mu_min", MU_RANGE[0])),
                         mu_max=float(doc.get("mu_max", MU_RANGE[1])))


def load_geometry(path):
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    return geometry_from_document(doc)
