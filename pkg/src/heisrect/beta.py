"""Flatness numbers of point clouds against vertical planes.

The distance from a point to a vertical plane is the Euclidean offset
of its horizontal part from the plane's horizontal line, so the best
vertical plane for a cloud in a ball is read off the minimum-width
direction of the convex hull of the horizontal coordinates; rotating
calipers make that exact.  The constant-gradient variant is an upper
bound obtained by derivative-free fitting over a parametric candidate
family.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from . import burgers, core, graphs, planes


@dataclass(frozen=True)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", core.as_point(self.center))
        if self.radius <= 0:
            raise ValueError("ball radius must be positive")


@dataclass
class BetaRecord:
    ball: Ball
    beta: float
    best_plane: planes.VerticalPlane
    method: str


def _extreme_prefilter(pts):
    """Drop points strictly inside the octagon of directional extremes.

    Interior points never touch the hull, so this only shrinks the
    input of the chain scan; degenerate (flat) octagons keep everything.
    """
    if len(pts) < 32:
        return pts
    x, y = pts[:, 0], pts[:, 1]
    scores = [x, -x, y, -y, x + y, -x - y, x - y, y - x]
    corners = pts[np.unique([int(np.argmax(s)) for s in scores])]
    if len(corners) < 3:
        return pts
    center = corners.mean(axis=0)
    order = np.argsort(np.arctan2(corners[:, 1] - center[1],
                                  corners[:, 0] - center[0]))
    poly = corners[order]
    edges = np.roll(poly, -1, axis=0) - poly
    rel = pts[:, None, :] - poly[None, :, :]
    cross = edges[None, :, 0] * rel[:, :, 1] - edges[None, :, 1] * rel[:, :, 0]
    inside = np.all(cross > 0, axis=1)
    return pts[~inside]


def convex_hull(points):
    """Andrew's monotone chain; returns hull vertices in ccw order."""
    pts = np.asarray(points, float).reshape(-1, 2)
    pts = np.unique(_extreme_prefilter(pts), axis=0)
    if len(pts) <= 2:
        return pts

    def half(iterable):
        out = []
        for p in iterable:
            while len(out) > 1:
                a = out[-1] - out[-2]
                b = p - out[-2]
                if a[0] * b[1] - a[1] * b[0] > 0:
                    break
                out.pop()
            out.append(p)
        return out

    lower = half(pts)
    upper = half(pts[::-1])
    return np.array(lower[:-1] + upper[:-1])


def min_width_direction(points):
    """Minimum directional width of a planar cloud.

    Returns (width, theta, offset) where theta is the angle of the line
    direction achieving the width and offset the midline position along
    the unit normal.  The optimal normal is perpendicular to some hull
    edge, so scanning edges is exact.
    """
    pts = np.asarray(points, float).reshape(-1, 2)
    hull = convex_hull(pts)
    if len(hull) == 1:
        return 0.0, 0.0, float(hull[0] @ np.array([0.0, 1.0]))
    edges = np.diff(np.vstack([hull, hull[:1]]), axis=0)
    lengths = np.hypot(edges[:, 0], edges[:, 1])
    keep = lengths > 0
    edges = edges[keep] / lengths[keep][:, None]
    if len(edges) == 0:
        return 0.0, 0.0, float(hull[0, 1])
    normals = np.stack([-edges[:, 1], edges[:, 0]], axis=-1)
    proj = hull @ normals.T  # (n_hull, n_edges)
    widths = proj.max(axis=0) - proj.min(axis=0)
    k = int(np.argmin(widths))
    theta = core.normalize_angle(np.arctan2(edges[k, 1], edges[k, 0]))
    sub = planes.VerticalSubgroup(theta)
    along = pts @ sub.normal
    return float(widths[k]), theta, float(0.5 * (along.max() + along.min()))


def brute_min_width(points, n_dirs=720):
    """Direction-grid oracle for min_width_direction."""
    pts = np.asarray(points, float).reshape(-1, 2)
    thetas = np.linspace(0.0, np.pi, n_dirs, endpoint=False)
    normals = np.stack([-np.sin(thetas), np.cos(thetas)], axis=-1)
    proj = pts @ normals.T
    widths = proj.max(axis=0) - proj.min(axis=0)
    k = int(np.argmin(widths))
    along = proj[:, k]
    return float(widths[k]), float(thetas[k]), float(0.5 * (along.max() + along.min()))


def points_in_ball(points, ball: Ball):
    pts = np.asarray(points, float).reshape(-1, 3)
    return core.dist(pts, ball.center) <= ball.radius


def beta_vertical(points, ball: Ball, method="calipers", n_dirs=720) -> BetaRecord:
    """Exact vertical flatness number of the samples inside a ball.

    Minimizes sup_y dist(y, z . W) / r over all vertical planes; for a
    fixed plane direction the optimal offset is the midrange of the
    horizontal projections, so the infimum is half the minimum hull
    width divided by r.  method='brute' runs the direction grid instead
    of calipers.  Raises ValueError on an empty intersection.
    """
    pts = np.asarray(points, float).reshape(-1, 3)
    inside = pts[points_in_ball(pts, ball)]
    if len(inside) == 0:
        raise ValueError("no samples in the ball")
    horiz = inside[:, :2]
    if method == "calipers":
        width, theta, offset = min_width_direction(horiz)
    elif method == "brute":
        width, theta, offset = brute_min_width(horiz, n_dirs)
    else:
        raise ValueError(f"unknown method {method!r}")
    plane = planes.VerticalPlane(planes.VerticalSubgroup(theta), offset)
    return BetaRecord(ball, 0.5 * width / ball.radius, plane, method)


def save_beta_records(records, path):
    """Record batch as CSV columns cx,cy,ct,r,beta,theta,offset,method."""
    import csv

    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["cx", "cy", "ct", "r", "beta", "theta", "offset",
                     "method"])
        for rec in records:
            c = rec.ball.center
            wr.writerow([repr(float(c[0])), repr(float(c[1])),
                         repr(float(c[2])), repr(float(rec.ball.radius)),
                         repr(float(rec.beta)),
                         repr(float(rec.best_plane.subgroup.theta)),
                         repr(float(rec.best_plane.offset)), rec.method])


def load_beta_records(path):
    import csv

    out = []
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        next(rd)
        for cx, cy, ct, r, b, theta, offset, method in rd:
            plane = planes.VerticalPlane(
                planes.VerticalSubgroup(float(theta)), float(offset))
            out.append(BetaRecord(Ball(np.array([float(cx), float(cy),
                                                 float(ct)]), float(r)),
                                  float(b), plane, method))
    return out


def projected_ball_nodes(g: graphs.GridGraph, ball: Ball):
    """Grid indices whose graph point lies inside the ball.

    This is the graph-distance ball around the projected center: the
    projection of B cap Gamma equals the d_Gamma-ball on the chart.
    """
    pts = graphs.all_graph_points(g).reshape(-1, 3)
    mask = core.dist(pts, ball.center) <= ball.radius
    return np.nonzero(mask.reshape(g.ny, g.nt))


def beta_against_candidate(g: graphs.GridGraph, ball: Ball,
                           psi: graphs.GridGraph) -> float:
    """sup |phi - psi| / r over the projected samples of the ball.

    psi must cover every projected node; uncovered nodes raise.
    """
    ii, jj = projected_ball_nodes(g, ball)
    if len(ii) == 0:
        raise ValueError("no graph samples in the ball")
    ys = g.y0 + g.dy * ii
    ts = g.t0 + g.dt * jj
    vals = graphs.interp_phi(psi, ys, ts)
    if np.any(~np.isfinite(vals)):
        raise ValueError("candidate does not cover the projected ball")
    return float(np.max(np.abs(g.phi[ii, jj] - vals)) / ball.radius)


def beta_cg_estimate(g: graphs.GridGraph, ball: Ball, lipschitz: float,
                     knots=5, starts=8, maxiter=500, seed=0, target=None,
                     cand_grid=33):
    """Upper bound on the constant-gradient flatness number.

    Nelder-Mead over (c, knot values of g) for candidates produced by
    the characteristic solver, warm-started through increasing knot
    counts so enlarging the family never worsens the bound.  A soft
    penalty keeps candidates near the Lipschitz cap during the search;
    the returned candidate carries the exact sampled estimate.  The
    true infimum runs over an infinite-dimensional class, so the result
    is an upper bound only.  Setting `target` stops the multi-start
    early once the bound falls below it.  Returns (value, report).
    """
    ii, jj = projected_ball_nodes(g, ball)
    if len(ii) == 0:
        raise ValueError("no graph samples in the ball")
    grad = graphs.intrinsic_gradient(g)[ii, jj]
    node_ys = g.y0 + g.dy * ii
    node_ts = g.t0 + g.dt * jj
    node_phi = g.phi[ii, jj]
    x0, y0c, t0c = ball.center
    pc_t = t0c + 0.5 * x0 * y0c
    reach = ball.radius ** 2 + abs(x0) * ball.radius + 0.5 * ball.radius ** 2
    # wide knot span so every characteristic source stays covered
    span = reach + (1.0 + lipschitz) * (abs(pc_t) + reach + ball.radius) + 1.0

    def build(params, knot_ts):
        spec = burgers.CGSpec(params[0], knot_ts, params[1:],
                              (float(y0c) - ball.radius,
                               float(y0c) + ball.radius),
                              (pc_t - reach, pc_t + reach))
        return burgers.make_admissible(spec, (ball.center, ball.radius),
                                       ny=cand_grid, nt=cand_grid)

    def objective(params, knot_ts):
        if abs(params[0]) > lipschitz:
            return 1e6 + abs(params[0])
        try:
            cand = build(params, knot_ts)
        except (burgers.CrossingDetected, ValueError):
            return 1e6
        vals = graphs.interp_phi(cand, node_ys, node_ts)
        if np.any(~np.isfinite(vals)):
            return 1e6
        val = float(np.max(np.abs(node_phi - vals)) / ball.radius)
        # cheap Lipschitz proxy on a thin subsample keeps the search fast
        proxy = cand.lipschitz_estimate
        return val + 10.0 * max(0.0, proxy - lipschitz)

    rng = np.random.default_rng(seed)
    n_evals = 0
    best_val, best_params, best_knots = np.inf, None, None
    warm = None
    for k in sorted({2, max(2, (knots + 1) // 2), max(2, knots)}):
        knot_ts = np.linspace(pc_t - span, pc_t + span, k)
        # heuristic start: mean gradient and the graph's own trace
        c_start = float(grad.mean())
        row = min(max(int(round((y0c - g.y0) / g.dy)), 0), g.ny - 1)
        trace = np.interp(knot_ts, g.ts, g.phi[row])
        starts_list = [np.concatenate([[c_start], trace])]
        if warm is not None:
            starts_list.append(np.concatenate(
                [[warm[0]], np.interp(knot_ts, warm[1], warm[2])]))
        while len(starts_list) < starts:
            starts_list.append(np.concatenate(
                [[c_start + rng.normal(0, 0.5)],
                 trace + rng.normal(0, 0.2 * ball.radius, len(knot_ts))]))
        for p0 in starts_list:
            res = minimize(objective, p0, args=(knot_ts,), method="Nelder-Mead",
                           options={"maxiter": maxiter, "xatol": 1e-9,
                                    "fatol": 1e-12})
            n_evals += res.nfev
            if res.fun < best_val:
                best_val = float(res.fun)
                best_params = res.x.copy()
                best_knots = knot_ts.copy()
            if target is not None and best_val <= target:
                break
        if best_params is not None:
            warm = (best_params[0], best_knots, best_params[1:])
        if target is not None and best_val <= target:
            break
    final = build(best_params, best_knots)
    report = {"value": best_val, "c": float(best_params[0]),
              "knot_ts": best_knots.tolist(),
              "knot_vs": np.asarray(best_params[1:]).tolist(),
              "candidate_lipschitz": final.lipschitz_estimate,
              "evaluations": n_evals, "knots": knots, "starts": starts}
    return best_val, report


def thin_boundary_radius(points, masses, center, r, delta,
                         n_radii=64, n_lambda=24):
    """Radius in [r, (1+delta) r] whose boundary annuli carry least mass.

    For each candidate s the thinness constant is
    A(s) = sup_lambda mass(annulus((1-lambda) s, (1+lambda) s)) /
    (lambda mass(B(x, 2r))) over a lambda grid; the s minimizing A is
    returned with its constant.
    """
    if not 0 < delta < 0.25:
        raise ValueError("delta must be in (0, 1/4)")
    pts = np.asarray(points, float).reshape(-1, 3)
    masses = np.asarray(masses, float).reshape(-1)
    d = core.dist(pts, core.as_point(center))
    total = masses[d <= 2 * r].sum()
    if total == 0:
        raise ValueError("no samples in the double ball")
    lambdas = np.linspace(1.0 / n_lambda, 0.5, n_lambda)
    best_s, best_a = None, np.inf
    for s in np.linspace(r, (1 + delta) * r, n_radii):
        a_val = 0.0
        for lam in lambdas:
            m = masses[(d >= (1 - lam) * s) & (d <= (1 + lam) * s)].sum()
            a_val = max(a_val, m / (lam * total))
        if a_val < best_a:
            best_a, best_s = a_val, float(s)
    return best_s, float(best_a)


def annulus_average_gap_bound(points, masses, grad_values, center, s1, s2):
    """Both sides of the annulus-control inequality on samples.

    Returns (gap, bound) for the averages of grad_values over the
    projected small/large balls, with bound = 2 mass(annulus)/mass(B2)
    times the sup norm; the inequality is a counting identity and holds
    exactly on weighted samples.
    """
    pts = np.asarray(points, float).reshape(-1, 3)
    masses = np.asarray(masses, float).reshape(-1)
    vals = np.asarray(grad_values, float).reshape(-1)
    d = core.dist(pts, core.as_point(center))
    in1 = d <= s1
    in2 = d <= s2
    if masses[in1].sum() == 0 or masses[in2].sum() == 0:
        raise ValueError("empty ball")
    e1 = np.average(vals[in1], weights=masses[in1])
    e2 = np.average(vals[in2], weights=masses[in2])
    annulus = masses[in2 & ~in1].sum()
    bound = 2.0 * annulus / masses[in2].sum() * np.abs(vals[in2]).max()
    return float(abs(e1 - e2)), float(bound)


def gradient_fluctuation_probe(g: graphs.GridGraph, ball: Ball,
                               delta_scale=0.1, n_side=5):
    """Largest average-gradient gap between the ball and a sub-ball.

    Sub-ball centers run over a deterministic n_side^3 lattice in the
    ball snapped to the nearest graph sample (so centers stay within
    s/10 of the graph); radii shrink geometrically from r/2 down to
    delta_scale * r.  Averages are cell-area weighted over projected
    nodes.  Returns (best Ball or None, gap).
    """
    grad = graphs.intrinsic_gradient(g)
    ii, jj = projected_ball_nodes(g, ball)
    if len(ii) == 0:
        raise ValueError("no graph samples in the ball")
    whole = grad[ii, jj].mean()
    pts = graphs.all_graph_points(g).reshape(-1, 3)
    r = ball.radius
    offs = np.linspace(-0.5, 0.5, n_side)
    best_gap, best_ball = 0.0, None
    centers = []
    for ox in offs:
        for oy in offs:
            for ot in offs:
                u = np.array([ox * r, oy * r, ot * r * r])
                if core.norm(u) > r:
                    continue
                cand = core.mul(ball.center, u)
                k = int(np.argmin(core.dist(pts, cand)))
                centers.append(pts[k])
    if centers:
        centers = np.unique(np.array(centers), axis=0)
    for c in centers:
        gap_c = core.dist(c, ball.center)
        s = r / 2
        while s >= delta_scale * r - 1e-15:
            if gap_c + s <= r:  # keep the sub-ball inside B
                sub = Ball(c, s)
                si, sj = projected_ball_nodes(g, sub)
                if len(si) > 0:
                    gap = abs(grad[si, sj].mean() - whole)
                    if gap > best_gap:
                        best_gap, best_ball = float(gap), sub
            s /= 2
    return best_ball, best_gap
