"""Splitting a cloud into intrinsic graph pieces.

Given a cube hierarchy with cached flatness numbers, the pipeline
removes the cubes with thin vertical projections and the samples buried
under too many high-flatness balls, then codes the remaining samples
with finite 0/1 strings so that nearby samples straddling a
high-flatness cube always land in different pieces.  Each piece then
satisfies the cone condition with a measured positive aperture, i.e. is
a graph over the chosen vertical subgroup.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import core, graphs, planes
from .cubes import CubeTree


@dataclass
class GoodnessConfig:
    """Thresholds for the good-cube predicate.

    b: required projected-area fraction of cube mass, eps: flatness
    threshold, cover_cutoff: number of high-flatness balls a sample may
    meet before removal, subgroup: the projection direction.
    """

    b: float
    eps: float
    cover_cutoff: int
    subgroup: planes.VerticalSubgroup

    def __post_init__(self):
        if self.b <= 0 or self.eps <= 0:
            raise ValueError("b and eps must be positive")
        if self.cover_cutoff < 1:
            raise ValueError("cover cutoff must be at least 1")


def project_chart(points, subgroup: planes.VerticalSubgroup):
    """Vertical-projection coordinates (v, t) of points, v along V."""
    p = np.asarray(points, float).reshape(-1, 3)
    u = subgroup.direction
    n = subgroup.normal
    a = p[:, 0] * u[0] + p[:, 1] * u[1]
    b = p[:, 0] * n[0] + p[:, 1] * n[1]
    return np.column_stack([a, p[:, 2] - 0.5 * a * b])


def median_projected_spacing(points, subgroup):
    """Median nearest-neighbour gap of the distinct projected samples.

    Coincident projections (distinct samples in one fiber, plus float
    dust) are skipped so the raster cell reflects actual structure.
    """
    proj = project_chart(points, subgroup)
    if len(proj) < 2:
        return 1.0
    scale = max(np.ptp(proj, axis=0).max(), 1e-30)
    dust = 1e-9 * scale
    tree = cKDTree(proj)
    k = min(len(proj), 16)
    d, _ = tree.query(proj, k=k)
    gaps = []
    for row in d:
        positive = row[row > dust]
        if len(positive):
            gaps.append(positive[0])
    if not gaps:
        return 1.0
    return float(np.median(gaps))


def projection_area(points, subgroup, mask=None, cell=None):
    """Raster area of the projected samples.

    Projects the selected samples, bins them on a grid of size `cell`
    (default twice the median projected nearest-neighbour spacing of
    the full cloud) and returns covered-cell count times cell area.
    """
    pts = np.asarray(points, float).reshape(-1, 3)
    if mask is not None:
        pts = pts[mask]
    if len(pts) == 0:
        raise ValueError("empty region")
    if cell is None:
        cell = 2.0 * median_projected_spacing(points, subgroup)
    proj = project_chart(pts, subgroup)
    cells = {(int(math.floor(v / cell)), int(math.floor(t / cell)))
             for v, t in proj}
    return len(cells) * cell * cell


@dataclass
class Classification:
    area_violators: list       # maximal cubes with thin projections
    flat_violators: list       # every cube above the flatness threshold
    removed_area: np.ndarray   # sample indices under area violators
    removed_cover: np.ndarray  # samples met by >= cutoff bad balls
    cover_counts: np.ndarray
    cell: float


def classify_cubes(tree: CubeTree, root_id, cfg: GoodnessConfig, beta_of,
                   ball_multiplier=4.0, cell=None) -> Classification:
    """Split the cubes below a root into good and bad families.

    Area violators are the maximal cubes whose projected area falls
    below (b/2) times their mass; flatness violators are all cubes with
    cached flatness above eps.  Samples are removed when they lie in an
    area violator or meet at least cover_cutoff violator balls.
    """
    def beta_val(cid):
        val = beta_of[cid]
        return val.beta if hasattr(val, "beta") else float(val)

    if cell is None:
        cell = 2.0 * median_projected_spacing(tree.points, cfg.subgroup)
    area_violators = []
    stack = [root_id]
    while stack:
        cid = stack.pop()
        cube = tree.cubes[cid]
        area = projection_area(tree.points, cfg.subgroup,
                               mask=cube.sample_indices, cell=cell)
        if area < 0.5 * cfg.b * cube.mass:
            area_violators.append(cid)
        else:
            stack.extend(cube.children)
    flat_violators = [cid for cid in tree.descendants(root_id)
                      if beta_val(cid) > cfg.eps]

    removed_area = np.unique(np.concatenate(
        [tree.cubes[cid].sample_indices for cid in area_violators]
        or [np.array([], dtype=int)]))
    counts = np.zeros(len(tree.points), dtype=int)
    for cid in flat_violators:
        cube = tree.cubes[cid]
        ball_r = ball_multiplier * 2.0 ** cube.level
        counts[core.dist(tree.points, tree.center(cid)) <= ball_r] += 1
    removed_cover = np.nonzero(counts >= cfg.cover_cutoff)[0]
    return Classification(sorted(area_violators), sorted(flat_violators),
                          removed_area, removed_cover, counts, cell)


def cover_counts(tree: CubeTree, flat_violators, ball_multiplier=4.0):
    """Per sample, how many violator balls B_Q contain it."""
    counts = np.zeros(len(tree.points), dtype=int)
    for cid in flat_violators:
        cube = tree.cubes[cid]
        ball_r = ball_multiplier * 2.0 ** cube.level
        counts[core.dist(tree.points, tree.center(cid)) <= ball_r] += 1
    return counts


def choose_cover_cutoff(tree: CubeTree, root_id, flat_violators, area_to_mass,
                        b, ball_multiplier=4.0):
    """Smallest cutoff N whose removals project to area below (b/2) mass.

    Removing the samples under >= N violator balls must cost at most
    b/(2C) of the root mass (C the calibrated area-per-mass constant);
    the minimal such N is read off the cover-count histogram.
    """
    root_mass = tree.cubes[root_id].mass
    if root_mass <= 0:
        return 1
    counts = cover_counts(tree, flat_violators, ball_multiplier)
    target = b / (2.0 * max(area_to_mass, 1e-12)) * root_mass
    idx = tree.cubes[root_id].sample_indices
    c_root = counts[idx]
    m_root = tree.masses[idx]
    for n in range(1, int(c_root.max()) + 2):
        if m_root[c_root >= n].sum() <= target:
            return n
    return int(c_root.max()) + 1


@dataclass
class CodingResult:
    sigma: dict             # sample index -> code string (kept samples)
    pieces: dict            # code string -> sorted sample indices
    cube_sigma: dict        # cube id -> final code string
    bits_per_generation: int
    max_changes: int
    kept: np.ndarray


def coding_partition(tree: CubeTree, root_id, flat_violators, removed,
                     ball_multiplier=4.0) -> CodingResult:
    """Generation-by-generation 0/1 coding of the cubes below a root.

    Every cube starts from its parent's string.  At each generation,
    every flatness violator Q is paired with each same-generation cube
    inside its ball B_Q (processing order: level descending, violator
    id ascending, partner id ascending):

    * equal lengths and equal strings: Q gains "0", the partner "1";
    * unequal lengths with the shorter a prefix of the longer: the
      shorter gains the bit that breaks the prefix relation.

    Pairs whose strings are already mutually non-prefix are left alone:
    a mismatch below both lengths survives every later extension, so
    the separation property is unaffected while the piece count stays
    proportional to the violator geometry.  Kept samples inherit the
    string of their finest cube; pieces are the level sets of the
    string map.
    """
    violators = set(flat_violators)
    sigma = {root_id: ""}
    bits_added = {}
    changes = {root_id: 0}
    root_level = tree.cubes[root_id].level
    scope = set(tree.descendants(root_id))
    for level in range(root_level - 1, tree.j_min - 1, -1):
        gen = sorted(cid for cid in tree.by_level[level] if cid in scope)
        for cid in gen:
            sigma[cid] = sigma[tree.cubes[cid].parent]
            bits_added[cid] = 0
        gen_points = {cid: tree.points[tree.cubes[cid].sample_indices]
                      for cid in gen}
        for q in gen:
            if q not in violators:
                continue
            ball_r = ball_multiplier * 2.0 ** level
            zq = tree.center(q)
            for q1 in gen:
                if q1 == q:
                    continue
                if core.dist(gen_points[q1], zq).max() > ball_r:
                    continue
                s_q, s_q1 = sigma[q], sigma[q1]
                if len(s_q) == len(s_q1):
                    if s_q == s_q1:
                        sigma[q] = s_q + "0"
                        sigma[q1] = s_q1 + "1"
                        bits_added[q] += 1
                        bits_added[q1] += 1
                elif len(s_q) > len(s_q1):
                    if s_q.startswith(s_q1):
                        bit = "1" if s_q[len(s_q1)] == "0" else "0"
                        sigma[q1] = s_q1 + bit
                        bits_added[q1] += 1
                else:
                    if s_q1.startswith(s_q):
                        bit = "1" if s_q1[len(s_q)] == "0" else "0"
                        sigma[q] = s_q + bit
                        bits_added[q] += 1
        for cid in gen:
            parent = tree.cubes[cid].parent
            changes[cid] = changes[parent] + (sigma[cid] != sigma[parent])
    removed = set(np.asarray(removed, dtype=int).tolist())
    sample_sigma = {}
    sample_changes = {}
    for cid in tree.by_level[tree.j_min]:
        if cid not in scope:
            continue
        for s in tree.cubes[cid].sample_indices:
            if int(s) in removed:
                continue
            sample_sigma[int(s)] = sigma[cid]
            sample_changes[int(s)] = changes.get(cid, 0)
    pieces = {}
    for s, code in sample_sigma.items():
        pieces.setdefault(code, []).append(s)
    pieces = {code: np.array(sorted(idx), dtype=int)
              for code, idx in pieces.items()}
    kept = np.array(sorted(sample_sigma), dtype=int)
    max_bits = max(bits_added.values(), default=0)
    max_changes = max(sample_changes.values(), default=0)
    return CodingResult(sample_sigma, pieces, sigma, max_bits, max_changes,
                        kept)


@dataclass
class PieceReport:
    code: str
    indices: np.ndarray
    aperture: float
    graph_ok: bool


def verify_pieces(points, pieces, max_pairs=4_000_000):
    """Cone aperture and projection-injectivity check per piece.

    aperture is the exact infimum over ordered pairs of the cone
    quotient (see graphs.cone_aperture); a positive value certifies
    that every translated cone of that aperture meets the piece only at
    its vertex.  graph_ok fails exactly when two samples share a
    vertical projection.
    """
    points = np.asarray(points, float).reshape(-1, 3)
    out = []
    for code in sorted(pieces):
        idx = pieces[code]
        alpha = graphs.cone_aperture(points[idx], max_pairs=max_pairs)
        out.append(PieceReport(code, idx, alpha, bool(alpha > 0)))
    return out


@dataclass
class PipelineResult:
    classification: Classification
    coding: CodingResult
    piece_reports: list
    uncovered_area: float
    root_mass: float
    root_area: float
    cover_cutoff: int


def graph_piece_partition(tree: CubeTree, root_id, beta_of, b, eps,
                          subgroup=None, cover_cutoff=None, area_to_mass=None,
                          ball_multiplier=4.0) -> PipelineResult:
    """End-to-end pipeline from a cube tree to verified graph pieces.

    When cover_cutoff is None it is chosen from the calibrated
    area-to-mass constant so the removed samples project to area at
    most b times the root mass.
    """
    subgroup = subgroup or planes.subgroup_y_t()
    flat = [cid for cid in tree.descendants(root_id)
            if (beta_of[cid].beta if hasattr(beta_of[cid], "beta")
                else float(beta_of[cid])) > eps]
    if cover_cutoff is None:
        if area_to_mass is None:
            root = tree.cubes[root_id]
            root_area = projection_area(tree.points, subgroup,
                                        mask=root.sample_indices)
            area_to_mass = max(root_area / root.mass, 1e-12)
        cover_cutoff = choose_cover_cutoff(tree, root_id, flat, area_to_mass,
                                           b, ball_multiplier)
    cfg = GoodnessConfig(b, eps, cover_cutoff, subgroup)
    cls = classify_cubes(tree, root_id, cfg, beta_of, ball_multiplier)
    removed = np.union1d(cls.removed_area, cls.removed_cover)
    coding = coding_partition(tree, root_id, cls.flat_violators, removed,
                              ball_multiplier)
    reports = verify_pieces(tree.points, coding.pieces)
    root = tree.cubes[root_id]
    root_area = projection_area(tree.points, cfg.subgroup,
                                mask=root.sample_indices, cell=cls.cell)
    covered = np.concatenate([r.indices for r in reports]
                             or [np.array([], dtype=int)])
    uncovered = np.setdiff1d(root.sample_indices, covered)
    uncovered_area = 0.0
    if len(uncovered) > 0:
        uncovered_area = projection_area(tree.points, cfg.subgroup,
                                         mask=uncovered, cell=cls.cell)
    return PipelineResult(cls, coding, reports, uncovered_area, root.mass,
                          root_area, cover_cutoff)
