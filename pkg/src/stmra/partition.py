"""Recursive regular space-time partitioning and knot placement."""

from __future__ import annotations

import dataclasses
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from scipy.spatial import cKDTree

from .data import PointDataset, SpaceTimeExtent, as_locations
from .errors import ConfigurationError, OutOfDomainError

DEDUPE_TOL = 1e-9


@dataclass(frozen=True)
class PartitionConfig:
    """``M`` levels, ``r`` knots per non-leaf region, minimum region sizes ``LB``."""

    M: int
    r: int
    LB: tuple = (0.0, 0.0, 0.0)
    seed: int = 0

    def __post_init__(self):
        lb = tuple(float(v) for v in np.broadcast_to(np.asarray(self.LB, float), (3,)))
        if int(self.M) != self.M or self.M < 0:
            raise ConfigurationError(f"M must be a non-negative integer, got {self.M}")
        if int(self.r) != self.r or self.r < 1:
            raise ConfigurationError(f"r must be a positive integer, got {self.r}")
        if any(v < 0 or not math.isfinite(v) for v in lb):
            raise ConfigurationError(f"LB components must be finite and >= 0, got {lb}")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ConfigurationError("seed must be a non-negative integer")
        object.__setattr__(self, "M", int(self.M))
        object.__setattr__(self, "r", int(self.r))
        object.__setattr__(self, "LB", lb)
        object.__setattr__(self, "seed", int(self.seed))


@dataclass(frozen=True, eq=False)
class Region:
    """One node of the partition tree.

    ``planes`` lists the ``(axis, coordinate)`` split planes of a non-leaf
    region; child ``j`` lies on the upper side of plane ``b`` iff bit ``b``
    of ``j`` is set. Leaves carry indices into the tree's observation and
    prediction arrays; their knots are the observation locations.
    """

    level: int
    path: tuple
    extent: SpaceTimeExtent
    knots: np.ndarray
    children: tuple = ()
    planes: tuple = ()
    obs_index: np.ndarray = None
    pred_index: np.ndarray = None

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass(frozen=True, eq=False)
class PartitionTree:
    root: Region
    config: PartitionConfig
    M_eff: int
    obs: PointDataset
    pred: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    offset: tuple = (0.0, 0.0, 0.0)

    def regions(self) -> Iterator[Region]:
        """Pre-order traversal."""
        stack = [self.root]
        while stack:
            reg = stack.pop()
            yield reg
            stack.extend(reversed(reg.children))

    def levels(self) -> list:
        """Regions grouped by level, breadth-first (children in order)."""
        out = [[self.root]]
        while out[-1][0].children:
            out.append([c for reg in out[-1] for c in reg.children])
        return out

    def leaves(self) -> list:
        return [reg for reg in self.regions() if reg.is_leaf]

    def __len__(self):
        return sum(1 for _ in self.regions())

    def leaf_data(self, leaf: Region):
        """(observations, prediction locations) attached to ``leaf``."""
        return self.obs.subset(leaf.obs_index), self.pred[leaf.pred_index]

    def locate(self, points) -> list:
        """Leaf region containing each point (half-open rule)."""
        pts = as_locations(points)
        out = [None] * len(pts)

        def walk(reg, idx):
            if reg.is_leaf:
                for i in idx:
                    out[i] = reg
                return
            for j, sub in _split_index(reg.planes, pts, idx):
                walk(reg.children[j], sub)

        walk(self.root, np.arange(len(pts)))
        return out

    def ancestors(self, region: Region) -> list:
        """Chain of regions from the root down to (excluding) ``region``."""
        chain, reg = [], self.root
        for j in region.path:
            chain.append(reg)
            reg = reg.children[j]
        return chain

    def summary(self) -> dict:
        levels = self.levels()
        return {
            "M": self.config.M,
            "M_eff": self.M_eff,
            "r": self.config.r,
            "LB": list(self.config.LB),
            "seed": self.config.seed,
            "n_regions": len(self),
            "n_obs": len(self.obs),
            "n_pred": len(self.pred),
            "levels": [
                {
                    "level": m,
                    "n_regions": len(regs),
                    "children_per_region": len(regs[0].children),
                    "regions": [
                        {
                            "path": list(reg.path),
                            "lo": list(reg.extent.lo),
                            "hi": list(reg.extent.hi),
                            "n_knots": len(reg.knots),
                            **({"n_pred": len(reg.pred_index)} if reg.is_leaf else {}),
                        }
                        for reg in regs
                    ],
                }
                for m, regs in enumerate(levels)
            ],
        }


def _split_index(planes, pts, idx):
    code = np.zeros(len(idx), dtype=int)
    for b, (axis, value) in enumerate(planes):
        code += (pts[idx, axis] >= value).astype(int) << b
    for j in range(1 << len(planes)):
        yield j, idx[code == j]


def _grid_side(r: int, k: int) -> int:
    g = 1
    while g**k < r:
        g += 1
    return g


def region_rng(seed: int, path: tuple) -> np.random.Generator:
    """Generator keyed by (seed, region path); independent of build order."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(path)))


def place_knots(extent: SpaceTimeExtent, r: int, seed: int = 0, path: tuple = ()) -> np.ndarray:
    """Sample ``r`` knots from a jittered regular grid inside ``extent``.

    The grid has ``ceil(r ** (1/3))`` cell-centered points per axis (axes of
    zero width collapse to a single coordinate and the remaining axes get
    enough points to hold ``r``). One sub-cell shift, uniform in
    ``(0, cell / 4)`` per axis, is applied to the whole grid.
    """
    if r < 1:
        raise ConfigurationError("r must be >= 1")
    lo, size = extent.lo_array, extent.size
    active = size > 0
    k = int(active.sum())
    if k == 0:
        if r > 1:
            raise ConfigurationError(f"cannot place {r} distinct knots in a zero-volume extent")
        return lo.reshape(1, 3).copy()
    g = _grid_side(r, k)
    rng = region_rng(seed, path)
    shift = rng.uniform(0.0, 0.25, size=3)
    axes = []
    for a in range(3):
        if active[a]:
            h = size[a] / g
            axes.append(lo[a] + (np.arange(g) + 0.5 + shift[a]) * h)
        else:
            axes.append(np.array([lo[a]]))
    grid = np.array(list(itertools.product(*axes)))
    keep = np.sort(rng.choice(len(grid), size=r, replace=False))
    return grid[keep]


def _split_schedule(config: PartitionConfig, domain: SpaceTimeExtent):
    """Per-level boolean split masks; its length is the achieved depth."""
    size = domain.size.copy()
    lb = np.asarray(config.LB)
    schedule = []
    for _ in range(config.M):
        split = (size > 0) & (size >= 2 * lb)
        if not split.any():
            break
        schedule.append(split)
        size = np.where(split, size / 2, size)
    return schedule


def _offset_coincident(pred: np.ndarray, obs: np.ndarray, domain: SpaceTimeExtent, tol: float) -> np.ndarray:
    if len(pred) == 0 or len(obs) == 0:
        return pred
    dist, _ = cKDTree(obs).query(pred, distance_upper_bound=tol)
    hit = np.isfinite(dist)
    if not hit.any():
        return pred
    pred = pred.copy()
    for i in np.flatnonzero(hit):
        for axis in range(3):
            if domain.size[axis] <= 0:
                continue
            step = 2 * tol if pred[i, axis] + 2 * tol <= domain.hi[axis] else -2 * tol
            pred[i, axis] += step
            break
    return pred


def partition(
    config: PartitionConfig,
    domain: SpaceTimeExtent,
    obs: PointDataset,
    pred=None,
    offset=(0.0, 0.0, 0.0),
) -> PartitionTree:
    """Build the region tree for ``obs`` (missing values are dropped).

    ``offset`` moves every split plane by a constant per axis; split
    decisions always use the nominal (unshifted) region sizes, so shifted
    trees share topology with the unshifted one.
    """
    obs = obs.observed()
    pred = np.zeros((0, 3)) if pred is None or len(pred) == 0 else as_locations(pred)
    if not np.all(domain.contains(obs.locations)):
        raise OutOfDomainError("observation outside the partition domain")
    if not np.all(domain.contains(pred)):
        raise OutOfDomainError("prediction location outside the partition domain")
    pred = _offset_coincident(pred, obs.locations, domain, DEDUPE_TOL)

    schedule = _split_schedule(config, domain)
    m_eff = len(schedule)
    lo, hi, size = domain.lo_array, domain.hi_array, domain.size
    offset = np.asarray(offset, dtype=float)
    pts_obs, pts_pred = obs.locations, pred

    def coord(axis, nsplit, i):
        # boundary i of 2**nsplit nominal cells along axis, shifted
        if i == 0:
            return lo[axis]
        if i == 1 << nsplit:
            return hi[axis]
        return lo[axis] + i * size[axis] / (1 << nsplit) + offset[axis]

    def build(level, path, cell, nsplit, oidx, pidx):
        ext = SpaceTimeExtent.from_arrays(
            [coord(a, nsplit[a], cell[a]) for a in range(3)],
            [coord(a, nsplit[a], cell[a] + 1) for a in range(3)],
        )
        if level == m_eff:
            return Region(level, path, ext, pts_obs[oidx], obs_index=oidx, pred_index=pidx)
        knots = place_knots(ext, config.r, config.seed, path)
        split = schedule[level]
        axes = [a for a in range(3) if split[a]]
        child_split = [n + 1 if split[a] else n for a, n in enumerate(nsplit)]
        planes = tuple((a, coord(a, child_split[a], 2 * cell[a] + 1)) for a in axes)
        oparts = dict(_split_index(planes, pts_obs, oidx))
        pparts = dict(_split_index(planes, pts_pred, pidx))
        children = []
        for j in range(1 << len(axes)):
            child_cell = list(cell)
            for b, a in enumerate(axes):
                child_cell[a] = 2 * cell[a] + ((j >> b) & 1)
            children.append(build(level + 1, path + (j,), child_cell, child_split, oparts[j], pparts[j]))
        return Region(level, path, ext, knots, tuple(children), planes)

    root = build(0, (), [0, 0, 0], [0, 0, 0], np.arange(len(obs)), np.arange(len(pred)))
    return dedupe_knots(PartitionTree(root, config, m_eff, obs, pred, tuple(offset.tolist())))


def _replace_knots(region: Region, drop: dict) -> Region:
    children = tuple(_replace_knots(c, drop) for c in region.children)
    knots = region.knots
    if region.path in drop and not region.is_leaf:
        knots = np.delete(knots, sorted(drop[region.path]), axis=0)
    if children == region.children and knots is region.knots:
        return region
    return dataclasses.replace(region, knots=knots, children=children)


def dedupe_knots(tree: PartitionTree, tol: float = DEDUPE_TOL) -> PartitionTree:
    """Drop non-leaf knots closer than ``tol`` to any other knot or data point.

    Observations and prediction locations are never removed; among two
    clashing non-leaf knots the one in the deeper region goes.
    """
    owners, points = [], []
    for reg in tree.regions():
        if not reg.is_leaf:
            for i, q in enumerate(reg.knots):
                owners.append((reg.level, reg.path, i))
                points.append(q)
    n_knots = len(points)
    fixed = [tree.obs.locations, tree.pred]
    allpts = np.vstack([np.asarray(points).reshape(-1, 3)] + fixed)
    pairs = cKDTree(allpts).query_pairs(tol, output_type="ndarray") if len(allpts) > 1 else np.zeros((0, 2), int)
    removed = set()
    for a, b in sorted(map(tuple, pairs)):
        if a in removed or b in removed:
            continue
        cand = [p for p in (a, b) if p < n_knots]
        if not cand:
            continue
        victim = max(cand, key=lambda p: (owners[p][0], p))
        removed.add(victim)
    if not removed:
        return tree
    drop = {}
    for p in removed:
        _, path, i = owners[p]
        drop.setdefault(path, set()).add(i)
    return dataclasses.replace(tree, root=_replace_knots(tree.root, drop))


def leaf_size(config: PartitionConfig, domain: SpaceTimeExtent) -> np.ndarray:
    """Nominal leaf extent per axis."""
    size = domain.size.copy()
    for split in _split_schedule(config, domain):
        size = np.where(split, size / 2, size)
    return size


def shifted_partitions(config, domain, obs, pred=None, shift_fraction: float = 0.25) -> list:
    """Nine partitions with split planes moved by a fraction of the leaf size.

    x and y move jointly by one of ``-d, 0, +d`` and t independently by one
    of ``-d_t, 0, +d_t``; the fifth tree (zero offset) is the plain
    partition. Axes that are never split stay put.
    """
    schedule = _split_schedule(config, domain)
    ever = np.any(schedule, axis=0) if schedule else np.zeros(3, bool)
    delta = shift_fraction * leaf_size(config, domain) * ever
    trees = []
    for sx in (-1, 0, 1):
        for st in (-1, 0, 1):
            off = (sx * delta[0], sx * delta[1], st * delta[2])
            trees.append(partition(config, domain, obs, pred, offset=off))
    return trees
