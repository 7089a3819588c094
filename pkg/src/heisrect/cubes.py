"""Multiscale cube decompositions of weighted point clouds.

Cubes at level j partition the samples, nest across levels, and have
diameter below 2^j.  The construction runs greedy farthest-point nets
at radius 2^(j-2) per level, nested so coarser net points are a subset
of finer ones; each sample attaches to its nearest finest net point and
inherits the center's ancestor chain, which makes nesting exact by
construction.  On top of the tree live Carleson packing sums, the
integral formulation of the packing condition, the pre-dyadic ball
refinement, and stopping-time (corona) partitions.
"""

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import beta as beta_mod
from . import core


@dataclass
class Cube:
    id: int
    level: int
    center_index: int
    sample_indices: np.ndarray
    mass: float
    parent: int = None
    children: list = field(default_factory=list)


class CubeTree:
    def __init__(self, points, masses, cubes, by_level, j_min, j_max):
        self.points = points
        self.masses = masses
        self.cubes = cubes          # id -> Cube
        self.by_level = by_level    # level -> [ids]
        self.j_min = j_min
        self.j_max = j_max

    def center(self, cube_id):
        return self.points[self.cubes[cube_id].center_index]

    def side(self, cube_id):
        return 2.0 ** self.cubes[cube_id].level

    def roots(self):
        return self.by_level[self.j_max]

    def descendants(self, cube_id):
        """cube_id and everything below it."""
        out = [cube_id]
        stack = list(self.cubes[cube_id].children)
        while stack:
            cid = stack.pop()
            out.append(cid)
            stack.extend(self.cubes[cid].children)
        return out


def farthest_point_net(points, radius, candidates=None):
    """Greedy farthest-point net seeded at the lowest index.

    Returns indices (into `points`) with pairwise distance >= radius
    and covering radius < radius; ties pick the lowest index.
    """
    idx = np.arange(len(points)) if candidates is None else np.asarray(candidates)
    pts = points[idx]
    chosen = [0]
    d = core.dist(pts, pts[0])
    while True:
        far = int(np.argmax(d))
        if d[far] < radius:
            break
        chosen.append(far)
        d = np.minimum(d, core.dist(pts, pts[far]))
    return idx[np.array(sorted(chosen))]


def median_nn_distance(points, block=512):
    """Median nearest-neighbour distance in the group metric."""
    pts = np.asarray(points, float)
    n = len(pts)
    if n < 2:
        return 0.0
    nn = np.full(n, np.inf)
    for s in range(0, n, block):
        chunk = pts[s:s + block]
        d = core.dist(chunk[:, None, :], pts[None, :, :])
        d[np.arange(len(chunk)), np.arange(s, s + len(chunk))] = np.inf
        nn[s:s + len(chunk)] = d.min(axis=1)
    return float(np.median(nn))


def build_cubes(points, masses, j_min=None, j_max=None) -> CubeTree:
    """Deterministic nested-net cube hierarchy over weighted samples.

    j_max defaults two levels above the diameter scale so the whole
    cloud sits under a single root; j_min defaults to log2 of 4x the
    median nearest-neighbour distance (below that scale cubes only
    resolve sampling noise).  A single sample degenerates to one cube
    per level.
    """
    points = np.asarray(points, float).reshape(-1, 3)
    masses = np.asarray(masses, float).reshape(-1)
    if len(points) == 0:
        raise ValueError("empty sample set")
    if len(points) != len(masses):
        raise ValueError("one mass per point required")
    diam = 0.0
    if len(points) > 1:
        for s in range(0, len(points), 512):
            d = core.dist(points[s:s + 512, None, :], points[None, :, :])
            diam = max(diam, float(d.max()))
    if j_max is None:
        j_max = max(0, math.ceil(math.log2(diam)) + 2) if diam > 0 else 0
    elif 2.0 ** j_max < diam:
        raise ValueError("2^j_max must dominate the sample diameter")
    if j_min is None:
        nn = median_nn_distance(points)
        j_min = math.floor(math.log2(4 * nn)) if nn > 0 else j_max - 4
    j_min = min(j_min, j_max)

    # nested nets, finest first; each coarser net refines the previous
    nets = {j_min: farthest_point_net(points, 2.0 ** (j_min - 2))}
    for j in range(j_min + 1, j_max + 1):
        nets[j] = farthest_point_net(points, 2.0 ** (j - 2),
                                     candidates=nets[j - 1])

    # nearest finest center per sample (ties: lowest center index)
    finest = nets[j_min]
    d = core.dist(points[:, None, :], points[finest][None, :, :])
    assign = finest[np.argmin(d, axis=1)]

    # center ancestry: nearest coarser net point, lowest index on ties
    parent_center = {}
    for j in range(j_min, j_max):
        up = nets[j + 1]
        d = core.dist(points[nets[j]][:, None, :], points[up][None, :, :])
        parent_center[j] = dict(zip(nets[j].tolist(),
                                    up[np.argmin(d, axis=1)].tolist()))

    # chain each finest center upward through the net hierarchy
    chain = {j_min: {int(c): int(c) for c in nets[j_min]}}
    for j in range(j_min + 1, j_max + 1):
        chain[j] = {c: parent_center[j - 1][chain[j - 1][c]]
                    for c in chain[j_min]}

    cubes = {}
    by_level = {}
    next_id = 0
    key_to_id = {}
    for j in range(j_max, j_min - 1, -1):
        groups = {}
        for s, c in enumerate(assign):
            groups.setdefault(chain[j][int(c)], []).append(s)
        by_level[j] = []
        for center in sorted(groups):
            sample_idx = np.array(groups[center], dtype=int)
            cube = Cube(next_id, j, int(center), sample_idx,
                        float(masses[sample_idx].sum()))
            if j < j_max:
                pid = key_to_id[(j + 1, chain[j + 1][int(center)])]
                cube.parent = pid
                cubes[pid].children.append(cube.id)
            cubes[cube.id] = cube
            key_to_id[(j, int(center))] = cube.id
            by_level[j].append(cube.id)
            next_id += 1
    return CubeTree(points, masses, cubes, by_level, j_min, j_max)


def check_tree_invariants(tree: CubeTree):
    """Exact nesting, partition, diameter and inner-ball checks.

    Returns the measured inner-ball constant c (distance from each
    center to the nearest outside sample, in units of 2^j, minimized
    over cubes).
    """
    n = len(tree.points)
    inner_c = np.inf
    for j in range(tree.j_min, tree.j_max + 1):
        seen = np.zeros(n, dtype=int)
        for cid in tree.by_level[j]:
            cube = tree.cubes[cid]
            seen[cube.sample_indices] += 1
            pts = tree.points[cube.sample_indices]
            if len(pts) > 1:
                d = core.dist(pts[:, None, :], pts[None, :, :])
                if d.max() > 2.0 ** j:
                    raise AssertionError(f"diameter bound violated at level {j}")
            if cube.parent is not None:
                parent = tree.cubes[cube.parent]
                if not set(cube.sample_indices.tolist()) <= set(
                        parent.sample_indices.tolist()):
                    raise AssertionError("nesting violated")
            outside = np.setdiff1d(np.arange(n), cube.sample_indices)
            if len(outside) > 0:
                gap = core.dist(tree.points[outside], tree.center(cid)).min()
                inner_c = min(inner_c, gap / 2.0 ** j)
        if not np.all(seen == 1):
            raise AssertionError(f"level {j} is not an exact partition")
    return float(inner_c)


def containing_cube(tree: CubeTree, sample, level):
    """The level-j cube holding a sample, walking down from the roots."""
    cid = None
    for root in tree.roots():
        if sample in tree.cubes[root].sample_indices:
            cid = root
            break
    if cid is None:
        raise KeyError("sample not covered by any root")
    while tree.cubes[cid].level > level:
        for ch in tree.cubes[cid].children:
            if sample in tree.cubes[ch].sample_indices:
                cid = ch
                break
        else:
            raise KeyError("children do not cover the sample")
    return cid


def sibling_pair(tree: CubeTree, i1, i2):
    """Disjoint same-level cubes around two samples at their mutual scale.

    Returns (j, cube_1, cube_2) for the largest j with 2^j <= d(x, y),
    clamped to the available levels.
    """
    d = float(core.dist(tree.points[i1], tree.points[i2]))
    if d == 0:
        raise ValueError("samples coincide")
    j = min(max(math.floor(math.log2(d)), tree.j_min), tree.j_max)
    return j, containing_cube(tree, i1, j), containing_cube(tree, i2, j)


def cube_beta_cache(tree: CubeTree, multiplier=4.0, threads=1):
    """Flatness number of B(z_Q, multiplier * 2^j) for every cube.

    Per-cube evaluations are independent; results are keyed by cube id
    so the reduction is identical for any thread count.
    """
    ids = sorted(tree.cubes)

    def one(cid):
        cube = tree.cubes[cid]
        ball = beta_mod.Ball(tree.center(cid), multiplier * 2.0 ** cube.level)
        return beta_mod.beta_vertical(tree.points, ball)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(one, ids))
    else:
        records = [one(cid) for cid in ids]
    return dict(zip(ids, records))


def corona_ball_multiplier(b_inclusion):
    """Ball multiplier for stopping-time runs: at least 2, with
    b_inclusion * multiplier >= 8 for the calibrated sandwich constant."""
    if not 0 < b_inclusion <= 1:
        raise ValueError("sandwich constant must lie in (0, 1]")
    return max(2.0, 8.0 / b_inclusion)


@dataclass
class CarlesonReport:
    epsilons: list
    per_root: dict          # root id -> list of K values, one per epsilon
    sup_k: list             # per epsilon, sup over roots
    ball_multiplier: float
    integral_estimate: float = None


def carleson_sum(tree: CubeTree, beta_of, epsilons,
                 ball_multiplier=4.0) -> CarlesonReport:
    """Packing sums K(eps, root) = sum of mu(Q)/mu(root) over high-beta cubes.

    beta_of maps cube id to its cached flatness number (dict of floats
    or of BetaRecord); missing entries raise.
    """
    epsilons = sorted(float(e) for e in epsilons)

    def get(cid):
        val = beta_of[cid]
        return val.beta if hasattr(val, "beta") else float(val)

    per_root = {}
    for root in tree.roots():
        ids = tree.descendants(root)
        root_mass = tree.cubes[root].mass
        ks = []
        for eps in epsilons:
            total = sum(tree.cubes[cid].mass for cid in ids if get(cid) >= eps)
            ks.append(total / root_mass if root_mass > 0 else 0.0)
        per_root[root] = ks
    sup_k = [max(per_root[r][i] for r in per_root)
             for i in range(len(epsilons))]
    return CarlesonReport(epsilons, per_root, sup_k, ball_multiplier)


def carleson_with_integral(tree: CubeTree, beta_of, epsilons,
                           ball_multiplier=4.0, sample_stride=4):
    """Packing sums plus the shell estimate of the packing integral.

    The integral is evaluated at the heaviest root for the smallest
    threshold and stored on the report for cross-checking the two
    formulations on identical data.
    """
    report = carleson_sum(tree, beta_of, epsilons, ball_multiplier)
    root = max(tree.roots(), key=lambda c: tree.cubes[c].mass)
    radius = ball_multiplier * 2.0 ** tree.cubes[root].level
    report.integral_estimate = wgl_integral_estimate(
        tree.points, tree.masses, report.epsilons[0], tree.center(root),
        radius, sample_stride=sample_stride)
    return report


def wgl_integral_estimate(points, masses, eps, x, R, n_shells=None,
                          sample_stride=1):
    """Dyadic-shell estimate of the packing integral.

    Sums ln(2) * mass(y) over samples y in B(x, R) and shell radii
    s_k = R 2^(-k+1/2) whose ball B(y, s_k) has flatness above eps.
    The shell count defaults to the range between R and 4x the median
    sample spacing.
    """
    points = np.asarray(points, float).reshape(-1, 3)
    masses = np.asarray(masses, float).reshape(-1)
    x = core.as_point(x)
    inside = np.nonzero(core.dist(points, x) <= R)[0]
    if len(inside) == 0:
        raise ValueError("no samples in the ball")
    if n_shells is None:
        nn = median_nn_distance(points)
        n_shells = max(1, int(math.floor(math.log2(R / (4 * nn))))) if nn > 0 else 3
    total = 0.0
    for k in range(1, n_shells + 1):
        s = R * 2.0 ** (-k + 0.5)
        for i in inside[::sample_stride]:
            ball = beta_mod.Ball(points[i], s)
            rec = beta_mod.beta_vertical(points, ball)
            if rec.beta > eps:
                total += math.log(2.0) * masses[i] * sample_stride
    return total


# ---------------------------------------------------------------------------
# pre-dyadic refinement

@dataclass
class PredyadicEntry:
    ball: beta_mod.Ball
    thinness: float
    sub_balls: list


def _ball_relation(b1: beta_mod.Ball, b2: beta_mod.Ball):
    """'inside' (b1 in b2), 'disjoint', or 'boundary' by the metric test."""
    d = float(core.dist(b1.center, b2.center))
    if d + b1.radius <= b2.radius:
        return "inside"
    if d - b1.radius > b2.radius:
        return "disjoint"
    return "boundary"


def _mutually_disjoint(b1, b2):
    return (_ball_relation(b1, b2) == "disjoint"
            and _ball_relation(b2, b1) == "disjoint")


def refine_predyadic(entries, points, masses, delta=None):
    """Extract a dyadic sub-collection retaining a mass fraction.

    Follows the band/parity/boundary-pruning scheme: split by diameter
    into N-adic bands, thin each band to disjoint balls (5r-covering
    step), keep the heavier parity class of bands, then walk bands
    top-down discarding balls that meet the boundary of an accepted
    ball or of one of its designated sub-balls.  Returns (survivor
    entries, report).
    """
    if not entries:
        raise ValueError("no balls to refine")
    entries = [e if isinstance(e, PredyadicEntry) else PredyadicEntry(*e)
               for e in entries]
    points = np.asarray(points, float).reshape(-1, 3)
    masses = np.asarray(masses, float).reshape(-1)

    def mu(ball):
        return float(masses[core.dist(points, ball.center) <= ball.radius].sum())

    if delta is None:
        ratios = [sb.radius / e.ball.radius
                  for e in entries for sb in e.sub_balls]
        delta = min(ratios) if ratios else 0.5
    if delta <= 0:
        raise ValueError("sub-ball diameters must be positive fractions")
    n_band = max(2, math.ceil(2.0 / delta))
    if not all(np.isfinite(2 * e.ball.radius) for e in entries):
        raise ValueError("diameters must be bounded")
    total_mass = sum(mu(e.ball) for e in entries)

    bands = {}
    for e in entries:
        j = math.floor(math.log(2 * e.ball.radius, n_band))
        bands.setdefault(j, []).append(e)

    # 5r-covering step per band: radius-descending greedy disjoint family
    order = {id(e): k for k, e in enumerate(entries)}
    for j, group in bands.items():
        group.sort(key=lambda e: (-e.ball.radius, order[id(e)]))
        picked = []
        for e in group:
            if all(_mutually_disjoint(e.ball, p.ball) for p in picked):
                picked.append(e)
        bands[j] = picked

    even_mass = sum(mu(e.ball) for j, g in bands.items() if j % 2 == 0 for e in g)
    odd_mass = sum(mu(e.ball) for j, g in bands.items() if j % 2 != 0 for e in g)
    parity = 0 if even_mass >= odd_mass else 1
    bands = {j: g for j, g in bands.items() if j % 2 == parity}

    # top-down boundary pruning
    accepted = []
    guard_balls = []
    for j in sorted(bands, reverse=True):
        survivors = [e for e in bands[j]
                     if all(_ball_relation(e.ball, gb) != "boundary"
                            for gb in guard_balls)]
        for e in survivors:
            accepted.append(e)
            guard_balls.append(e.ball)
            guard_balls.extend(e.sub_balls)
    kept_mass = sum(mu(e.ball) for e in accepted)
    report = {
        "delta": delta, "band_base": n_band,
        "parity": "even" if parity == 0 else "odd",
        "kept_fraction": kept_mass / total_mass if total_mass else 0.0,
        "dyadic": _is_dyadic([e.ball for e in accepted]),
        "nesting_condition": _check_nesting_condition(accepted),
    }
    return accepted, report


def _is_dyadic(balls):
    for i, b1 in enumerate(balls):
        for b2 in balls[i + 1:]:
            if (_ball_relation(b1, b2) == "boundary"
                    and _ball_relation(b2, b1) == "boundary"
                    and not _mutually_disjoint(b1, b2)):
                return False
    return True


def _check_nesting_condition(accepted):
    """Nested survivors avoid or absorb each other's sub-balls."""
    for e1 in accepted:
        for e2 in accepted:
            if e1 is e2:
                continue
            if _ball_relation(e1.ball, e2.ball) == "inside":
                for sb in e2.sub_balls:
                    if _ball_relation(e1.ball, sb) == "boundary":
                        return False
    return True


# ---------------------------------------------------------------------------
# stopping-time trees

@dataclass
class CoronaTree:
    root: int
    members: list
    stop: list
    root_alias: int  # the cube charged for this tree in the packing sum


def corona_partition(tree: CubeTree, root_id, membership):
    """Partition member cubes below a root into stopping-time trees.

    membership maps cube id to bool.  Roots of successive trees are the
    maximal unassigned member cubes; a tree absorbs all children of a
    cube when every child is a member, otherwise the cube stops.  Each
    tree is charged to itself (when rooted at root_id) or to its parent
    or a lowest-id non-member sibling.
    """
    scope = tree.descendants(root_id)
    member = {cid: bool(membership(cid)) if callable(membership)
              else bool(membership[cid]) for cid in scope}
    assigned = set()
    trees = []
    by_depth = sorted(scope, key=lambda c: (-tree.cubes[c].level, c))
    while True:
        maximal = []
        for cid in by_depth:
            if not member[cid] or cid in assigned:
                continue
            p = tree.cubes[cid].parent
            covered = False
            while p is not None and p in member:
                if member[p] and p not in assigned:
                    covered = True
                    break
                p = tree.cubes[p].parent
            if not covered:
                maximal.append(cid)
        if not maximal:
            break
        for root in maximal:
            if root in assigned:
                continue
            members, stop = [], []
            queue = [root]
            while queue:
                cid = queue.pop(0)
                members.append(cid)
                assigned.add(cid)
                children = tree.cubes[cid].children
                if children and all(member.get(ch, False) for ch in children):
                    queue.extend(sorted(children))
                else:
                    stop.append(cid)
            alias = root
            if root != root_id:
                parent = tree.cubes[root].parent
                if parent is not None and not member.get(parent, True):
                    alias = parent
                else:
                    sibs = [s for s in tree.cubes[parent].children
                            if s != root and not member.get(s, True)]
                    alias = min(sibs) if sibs else parent
            trees.append(CoronaTree(root, members, stop, alias))
    return trees


def check_corona_axioms(tree: CubeTree, coronas, membership):
    """The four stopping-time tree axioms plus exact-partition check."""
    is_member = membership if callable(membership) else membership.__getitem__
    claimed = [cid for ct in coronas for cid in ct.members]
    if len(claimed) != len(set(claimed)):
        raise AssertionError("corona trees overlap")
    for ct in coronas:
        mset = set(ct.members)
        for cid in ct.members:
            if not is_member(cid):
                raise AssertionError("non-member cube in a tree")
            # convexity: everything between a member and the root is in
            walker = cid
            while walker != ct.root:
                walker = tree.cubes[walker].parent
                if walker is None:
                    raise AssertionError("member not below its root")
                if walker not in mset:
                    raise AssertionError("tree not convex")
            # all-or-none children
            children = tree.cubes[cid].children
            inside = [ch for ch in children if ch in mset]
            if inside and len(inside) != len(children):
                raise AssertionError("children split across the tree boundary")
            if not inside and cid not in ct.stop:
                raise AssertionError("childless-in-tree cube missing from Stop")
    return True


def alias_multiplicity(coronas):
    counts = {}
    for ct in coronas:
        counts[ct.root_alias] = counts.get(ct.root_alias, 0) + 1
    return max(counts.values()) if counts else 0


def corona_root_packing(tree: CubeTree, coronas):
    """Total root mass charged by the stopping-time trees."""
    return sum(tree.cubes[ct.root].mass for ct in coronas)


# ---------------------------------------------------------------------------
# serialization

def save_tree(tree: CubeTree, path):
    nodes = []
    for cid in sorted(tree.cubes):
        cube = tree.cubes[cid]
        nodes.append({"id": cube.id, "level": cube.level,
                      "center_index": cube.center_index,
                      "parent": cube.parent,
                      "mass": cube.mass,
                      "samples": cube.sample_indices.tolist()})
    with open(path, "w") as fh:
        json.dump({"j_min": tree.j_min, "j_max": tree.j_max, "nodes": nodes},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")


def save_carleson(report: CarlesonReport, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["root_id", "epsilon", "K"])
        for root in sorted(report.per_root):
            for eps, k in zip(report.epsilons, report.per_root[root]):
                wr.writerow([root, repr(float(eps)), repr(float(k))])
