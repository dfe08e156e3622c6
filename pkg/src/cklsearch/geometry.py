"""Region algebra for the nested-hypercube search graph.

A search region is an axis-aligned hypercube; zooming in replaces it by
one of 5^d half-edge children whose centers sit on a quarter-edge grid,
and backtracking replaces it by the 4x-edge hypercube that contains every
possible direct ancestor.  The enlarged hypercube S (edge 3/2 of the
region) bounds all children; its tilings drive the per-cell hypothesis
tests of the decision criterion.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

# Per-axis child center offsets in units of the region edge.  Children
# have half the edge and are built from quarter-edge tiles of S, so they
# protrude beyond the region itself (out to the boundary of S): that is
# what makes recovery transitions from a slightly-off region possible.
CHILD_OFFSETS = (-0.5, -0.25, 0.0, 0.25, 0.5)


@dataclass(frozen=True)
class Region:
    """Axis-aligned hypercube: center, edge length, net zoom depth."""

    center: np.ndarray
    edge: float
    depth: int = 0

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if self.edge <= 0 or not np.isfinite(self.edge):
            raise InvalidInputError(f"edge must be positive, got {self.edge}")
        if not np.all(np.isfinite(self.center)):
            raise InvalidInputError("region center must be finite")

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def contains(self, point, tol: float = 0.0) -> bool:
        """Border-inclusive membership test."""
        point = np.asarray(point, dtype=float)
        return bool(np.all(np.abs(point - self.center) <= self.edge / 2 + tol))

    def lower(self) -> np.ndarray:
        return self.center - self.edge / 2

    def upper(self) -> np.ndarray:
        return self.center + self.edge / 2


@dataclass(frozen=True)
class Tiling:
    """Partition of the enlarged hypercube S into equal cells."""

    origin_region: Region
    cell_edge: float
    cells: tuple

    @property
    def centers(self) -> np.ndarray:
        return np.array([c.center for c in self.cells])


@dataclass(frozen=True)
class CellClass:
    """Classification of a tiling cell relative to the target."""

    label: str  # "A", "B" or "C"

    def __post_init__(self):
        if self.label not in ("A", "B", "C"):
            raise InvalidInputError(f"unknown cell class {self.label!r}")


@dataclass(frozen=True)
class QuerySet:
    """A finite collection of query point pairs sharing one dimension."""

    queries: tuple

    def __post_init__(self):
        qs = tuple((np.asarray(a, dtype=float), np.asarray(b, dtype=float)) for a, b in self.queries)
        dims = {a.shape for a, b in qs} | {b.shape for a, b in qs}
        if len(dims) > 1:
            raise InvalidInputError("all query points must share one dimension")
        object.__setattr__(self, "queries", qs)


def children(x: Region) -> list[Region]:
    """All 5^d half-edge children, lexicographic in per-axis offsets."""
    d = x.dim
    out = []
    for combo in itertools.product(range(len(CHILD_OFFSETS)), repeat=d):
        offset = np.array([CHILD_OFFSETS[i] for i in combo]) * x.edge
        out.append(Region(center=x.center + offset, edge=x.edge / 2, depth=x.depth + 1))
    return out


def enclosing_hypercube(x: Region) -> Region:
    """The edge-(3/2) hypercube S that bounds every child of ``x``."""
    return Region(center=x.center, edge=1.5 * x.edge, depth=x.depth)


def parent(x: Region) -> Region:
    """Backtracking target: the 4x-edge hypercube holding all direct ancestors.

    Each backtrack costs two levels of depth.
    """
    return Region(center=x.center, edge=4.0 * x.edge, depth=x.depth - 2)


def tile(s: Region, cell_edge: float) -> Tiling:
    """Tile ``s`` with hypercubes of the given edge, lexicographic order.

    ``s.edge`` must be an integer multiple of ``cell_edge``; use
    ``fit_cell_edge`` first to round a bound down to a divisor.
    """
    if cell_edge <= 0:
        raise InvalidInputError("cell_edge must be positive")
    ratio = s.edge / cell_edge
    k = round(ratio)
    if k < 1 or abs(ratio - k) > 1e-9 * max(1.0, ratio):
        raise InvalidInputError(
            f"cell_edge {cell_edge} does not evenly divide region edge {s.edge}"
        )
    d = s.dim
    lo = s.lower()
    cells = []
    for combo in itertools.product(range(k), repeat=d):
        center = lo + (np.array(combo) + 0.5) * cell_edge
        cells.append(Region(center=center, edge=cell_edge, depth=s.depth))
    return Tiling(origin_region=s, cell_edge=cell_edge, cells=tuple(cells))


def fit_cell_edge(region_edge: float, upper_bound: float) -> float:
    """Largest region_edge/k (integer k) strictly below ``upper_bound``."""
    if upper_bound <= 0:
        raise InvalidInputError("upper_bound must be positive")
    k = math.floor(region_edge / upper_bound) + 1
    while region_edge / k >= upper_bound:
        k += 1
    return region_edge / k


def classify_cell(cell: Region, xt, unit_scale: float) -> CellClass:
    """Classify a tiling cell as A (contains target), B (too close to
    tell, strictly inside the 1/16-of-region shell) or C (rejectable).

    ``unit_scale`` is the edge of the current search region; the 1/16
    threshold scales with it.  A cell's border counts as inside, and the
    exact-threshold boundary belongs to C.
    """
    xt = np.asarray(xt, dtype=float)
    if cell.contains(xt):
        return CellClass("A")
    if np.linalg.norm(xt - cell.center) < unit_scale / 16.0:
        return CellClass("B")
    return CellClass("C")


def uncertainty_radius(d: int) -> float:
    """Radius of the shell around a canonical edge-2 region where the
    single-query hypothesis test cannot tell inside from outside:
    1 + (d + sqrt(d^3 + d^2 - d)) / (d - 1), defined for d >= 2."""
    if d <= 1:
        raise InvalidInputError("uncertainty radius requires d >= 2")
    return 1.0 + (d + math.sqrt(d**3 + d**2 - d)) / (d - 1)


def cell_edge_bound(d: int) -> float:
    """Largest admissible tiling cell edge (3/2)/k strictly below
    1/(8 * uncertainty_radius), in units of a unit current region."""
    if d <= 1:
        raise InvalidInputError("cell edge bound requires d >= 2")
    return fit_cell_edge(1.5, 1.0 / (8.0 * uncertainty_radius(d)))


DEGENERATE = "degenerate"


def sphere_center(query, xt, form: str = "apollonius"):
    """Center of the equal-answer-probability sphere of a query.

    Every point with the same ratio of distances to the two query points
    as the target lies on a sphere (the Apollonius sphere of that ratio);
    its center is (xa - c^2 * xb) / (1 - c^2) with c the distance ratio.
    ``form="paper"`` evaluates the uncorrected (c*xb - xa)/(1 - c)
    expression instead, which fails the brute-force locus check and is
    kept only for comparison.  Returns ``"degenerate"`` when the ratio is
    1 (the locus is a hyperplane, not a sphere).
    """
    xa = np.asarray(query[0], dtype=float)
    xb = np.asarray(query[1], dtype=float)
    xt = np.asarray(xt, dtype=float)
    da = float(np.linalg.norm(xa - xt))
    db = float(np.linalg.norm(xb - xt))
    if da == 0.0 or db == 0.0:
        raise InvalidInputError("target coincides with a query point")
    c = da / db
    if c == 1.0:
        return DEGENERATE
    if form == "apollonius":
        c2 = c * c
        return (xa - c2 * xb) / (1.0 - c2)
    if form == "paper":
        return (c * xb - xa) / (1.0 - c)
    raise InvalidInputError(f"unknown sphere_center form {form!r}")


def identifiability_rank(qs: QuerySet, xt, tol_factor: float = 1e-8) -> int:
    """Numerical rank of the matrix of sphere-center differences.

    The target is identifiable from infinitely repeated queries exactly
    when the sphere centers span the full space, i.e. the rank equals d.
    Raises on degenerate queries (equidistant target).
    """
    if len(qs.queries) < 2:
        raise InvalidInputError("need at least 2 queries")
    centers = []
    for q in qs.queries:
        z = sphere_center(q, xt)
        if isinstance(z, str):
            raise InvalidInputError("degenerate query in set")
        centers.append(z)
    z_last = centers[-1]
    mat = np.stack([z - z_last for z in centers[:-1]], axis=1)
    svals = np.linalg.svd(mat, compute_uv=False)
    if svals.size == 0 or svals[0] == 0.0:
        return 0
    return int(np.sum(svals > tol_factor * svals[0]))
