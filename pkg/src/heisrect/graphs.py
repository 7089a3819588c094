"""Intrinsic graphs over the (y, t)-plane: sampling, calculus, transforms.

A GridGraph stores phi on a rectangular (y, t) grid together with a
surface-mass surrogate per node.  The graph itself is the point set
{w . (phi(w), 0, 0)}, i.e. (phi, y, t - phi*y/2) in coordinates; all
other vertical subgroups are handled by pre-rotating data, so this is
the only chart in the package.
"""

import csv
import json
from dataclasses import dataclass

import numpy as np

from . import core, planes


@dataclass
class GridGraph:
    """phi sampled on the grid (y0 + i dy, t0 + j dt), i < ny, j < nt.

    mass[i, j] is the surface measure surrogate dy*dt*sqrt(1 + grad^2)
    of the cell at node (i, j); it is filled in automatically when not
    supplied.
    """

    y0: float
    t0: float
    dy: float
    dt: float
    phi: np.ndarray
    mass: np.ndarray = None

    def __post_init__(self):
        self.phi = np.asarray(self.phi, float)
        if self.dy <= 0 or self.dt <= 0:
            raise ValueError("grid steps must be positive")
        if not np.all(np.isfinite(self.phi)):
            raise ValueError("phi must be finite")
        if self.mass is None:
            grad = intrinsic_gradient(self)
            self.mass = self.dy * self.dt * np.sqrt(1.0 + grad ** 2)
        else:
            self.mass = np.asarray(self.mass, float)
            if np.any(self.mass < 0):
                raise ValueError("mass must be nonnegative")

    @property
    def ny(self):
        return self.phi.shape[0]

    @property
    def nt(self):
        return self.phi.shape[1]

    @property
    def ys(self):
        return self.y0 + self.dy * np.arange(self.ny)

    @property
    def ts(self):
        return self.t0 + self.dt * np.arange(self.nt)

    def nodes(self):
        """All (y, t) chart coordinates, shape (ny*nt, 2)."""
        yy, tt = np.meshgrid(self.ys, self.ts, indexing="ij")
        return np.stack([yy.ravel(), tt.ravel()], axis=-1)


@dataclass
class GraphPointSet:
    """Weighted point cloud on (or near) a graph; provenance is free text."""

    points: np.ndarray
    masses: np.ndarray
    provenance: str = ""

    def __post_init__(self):
        self.points = np.asarray(self.points, float).reshape(-1, 3)
        self.masses = np.asarray(self.masses, float).reshape(-1)
        if len(self.masses) != len(self.points):
            raise ValueError("one mass per point required")
        if np.any(self.masses < 0) or not np.all(np.isfinite(self.points)):
            raise ValueError("masses must be >= 0 and points finite")


def graph_points(p):
    """Lift chart nodes (y, t) and values phi to points of the graph."""
    yt = np.asarray(p[0], float)
    phi = np.asarray(p[1], float)
    out = np.empty(phi.shape + (3,))
    out[..., 0] = phi
    out[..., 1] = yt[..., 0]
    out[..., 2] = yt[..., 1] - 0.5 * phi * yt[..., 0]
    return out


def graph_map(g: GridGraph, i: int, j: int):
    """Graph point w . phi(w) over the node (i, j)."""
    if not (0 <= i < g.ny and 0 <= j < g.nt):
        raise IndexError("grid index out of range")
    y = g.y0 + i * g.dy
    t = g.t0 + j * g.dt
    return graph_points((np.array([y, t]), g.phi[i, j]))


def all_graph_points(g: GridGraph):
    return graph_points((g.nodes(), g.phi.ravel()))


def point_set(g: GridGraph, provenance="grid graph"):
    return GraphPointSet(all_graph_points(g), g.mass.ravel(), provenance)


def chart_projection(points):
    """pi_W in chart coordinates: (x, y, t) -> (y, t + x y / 2)."""
    p = np.asarray(points, float)
    return np.stack([p[..., 1], p[..., 2] + 0.5 * p[..., 0] * p[..., 1]], axis=-1)


def intrinsic_gradient(g: GridGraph):
    """The nonlinear gradient d_y phi + phi d_t phi on the grid.

    Central differences inside, second-order one-sided at the edges.
    """
    if g.ny < 3 or g.nt < 3:
        raise ValueError("need at least a 3x3 grid for the gradient")
    py = np.gradient(g.phi, g.dy, axis=0, edge_order=2)
    pt = np.gradient(g.phi, g.dt, axis=1, edge_order=2)
    return py + g.phi * pt


def quotient_gradient(g: GridGraph, h=None):
    """Difference-quotient gradient (phi(y+h, t+phi h) - phi) / h.

    Follows the graph for one horizontal step of length h (default one
    grid step) and interpolates; nodes whose stepped position leaves
    the grid return nan.  Cross-validates intrinsic_gradient.
    """
    if h is None:
        h = g.dy
    yy, tt = np.meshgrid(g.ys, g.ts, indexing="ij")
    return (interp_phi(g, yy + h, tt + g.phi * h) - g.phi) / h


def interp_phi(g: GridGraph, y, t):
    """Bilinear interpolation of phi; nan outside the grid."""
    y = np.asarray(y, float)
    t = np.asarray(t, float)
    fi = (y - g.y0) / g.dy
    fj = (t - g.t0) / g.dt
    ok = (fi >= 0) & (fi <= g.ny - 1) & (fj >= 0) & (fj <= g.nt - 1)
    fi = np.clip(fi, 0, g.ny - 1)
    fj = np.clip(fj, 0, g.nt - 1)
    i0 = np.minimum(fi.astype(int), g.ny - 2)
    j0 = np.minimum(fj.astype(int), g.nt - 2)
    wi = fi - i0
    wj = fj - j0
    v = ((1 - wi) * (1 - wj) * g.phi[i0, j0]
         + wi * (1 - wj) * g.phi[i0 + 1, j0]
         + (1 - wi) * wj * g.phi[i0, j0 + 1]
         + wi * wj * g.phi[i0 + 1, j0 + 1])
    return np.where(ok, v, np.nan)


def curvature_interp_error(g: GridGraph):
    """Worst-case bilinear interpolation error from second differences."""
    err = 0.0
    if g.ny >= 3:
        err += 0.125 * np.abs(np.diff(g.phi, 2, axis=0)).max()
    if g.nt >= 3:
        err += 0.125 * np.abs(np.diff(g.phi, 2, axis=1)).max()
    return float(err)


def _pair_norms(points, max_pairs, block=256):
    """Yield (||d_W||, ||d_V||) for ordered pair differences, blocked.

    The diagonal carries (inf, 0) so zero pairs never win a quotient.
    Pairs are subsampled deterministically above max_pairs.
    """
    pts = np.asarray(points, float).reshape(-1, 3)
    if len(pts) ** 2 > max_pairs:
        stride = int(np.ceil(len(pts) / np.sqrt(max_pairs)))
        pts = pts[::stride]
    W = planes.subgroup_y_t()
    n = len(pts)
    for start in range(0, n, block):
        chunk = pts[start:start + block]
        d = core.mul(core.inv(chunk[:, None, :]), pts[None, :, :])
        dw, dv = planes.split(d.reshape(-1, 3), W)
        wn = core.norm(dw).reshape(len(chunk), n)
        vn = core.norm(dv).reshape(len(chunk), n)
        idx = np.arange(start, min(start + block, n))
        wn[np.arange(len(chunk)), idx] = np.inf
        vn[np.arange(len(chunk)), idx] = 0.0
        yield wn, vn


def lipschitz_constant(points, max_pairs=4_000_000):
    """Sampled intrinsic Lipschitz estimate of a point cloud.

    Largest quotient ||(x^-1 y)_V|| / ||(x^-1 y)_W|| over ordered pairs;
    the cloud then satisfies the cone condition for every aperture
    alpha < 1 / L.  Returns inf when two points share a vertical
    projection (the cloud is not a graph over W).  Pairs are subsampled
    deterministically above max_pairs.
    """
    pts = np.asarray(points, float).reshape(-1, 3)
    if len(pts) < 2:
        raise ValueError("need at least two points")
    best = 0.0
    for wn, vn in _pair_norms(pts, max_pairs):
        if np.any((wn == 0) & (vn > 0)):
            return np.inf
        with np.errstate(divide="ignore", invalid="ignore"):
            best = max(best, float(np.max(np.where(wn > 0, vn / wn, 0.0))))
    return best


def cone_aperture(points, max_pairs=4_000_000):
    """Largest alpha such that every translated cone misses the rest.

    Exact infimum of ||(x^-1 y)_W|| / ||(x^-1 y)_V|| over ordered pairs;
    0 when two points share a vertical projection, inf when the cloud
    lies in a single coset of W.
    """
    pts = np.asarray(points, float).reshape(-1, 3)
    if len(pts) < 2:
        return np.inf
    best = np.inf
    for wn, vn in _pair_norms(pts, max_pairs):
        if np.any((wn == 0) & (vn > 0)):
            return 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = np.where(vn > 0, wn / np.where(vn > 0, vn, 1.0), np.inf)
        best = min(best, float(np.min(vals)))
    return best


def shear_chart(p, yt):
    """P_p in chart coordinates: (y, t) -> (y + y_p, t + x_p y + const)."""
    x0, y0, t0 = np.asarray(p, float)
    yt = np.asarray(yt, float)
    out = np.empty(yt.shape)
    out[..., 0] = yt[..., 0] + y0
    out[..., 1] = yt[..., 1] + x0 * yt[..., 0] + t0 + 0.5 * x0 * y0
    return out


def translate_graph(g: GridGraph, q, target=None):
    """Reparametrize the left-translated graph q . Gamma.

    phi_q(w) = x_q + phi(P_{q^-1}(w)) on the sheared domain; values are
    resampled by bilinear interpolation onto `target` (a GridGraph-like
    grid spec; defaults to the source grid shifted to cover the sheared
    domain), and rows/columns without full coverage are cropped.  The
    returned graph carries interp_error, a worst-case bound from second
    differences.
    """
    q = core.as_point(q)
    if target is None:
        corners = np.array([[g.ys[0], g.ts[0]], [g.ys[0], g.ts[-1]],
                            [g.ys[-1], g.ts[0]], [g.ys[-1], g.ts[-1]]])
        sheared = shear_chart(q, corners)
        target = GridGraph(sheared[:, 0].min(), sheared[:, 1].min(), g.dy, g.dt,
                           np.zeros((g.ny, int(np.ceil((sheared[:, 1].max() - sheared[:, 1].min()) / g.dt)) + 1)))
    yy, tt = np.meshgrid(target.ys, target.ts, indexing="ij")
    src = shear_chart(core.inv(q), np.stack([yy, tt], axis=-1))
    vals = q[0] + interp_phi(g, src[..., 0], src[..., 1])
    finite = np.isfinite(vals)
    rows = np.nonzero(finite.any(axis=1))[0]
    if len(rows) == 0:
        raise ValueError("translated graph does not overlap the target grid")
    i0, i1 = rows[0], rows[-1]
    cols = np.nonzero(finite[i0:i1 + 1].all(axis=0))[0]
    if len(cols) == 0:
        raise ValueError("translated graph does not overlap the target grid")
    j0, j1 = cols[0], cols[-1]
    out = GridGraph(target.y0 + i0 * target.dy, target.t0 + j0 * target.dt,
                    target.dy, target.dt, vals[i0:i1 + 1, j0:j1 + 1])
    out.interp_error = curvature_interp_error(g)
    return out


def dilate_graph(g: GridGraph, r: float):
    """Graph of the dilated set delta_r(Gamma); exact on the scaled grid."""
    if r <= 0:
        raise ValueError("dilation factor must be positive")
    return GridGraph(r * g.y0, r * r * g.t0, r * g.dy, r * r * g.dt, r * g.phi)


def graph_distance(g: GridGraph, node_a, node_b):
    """d(w . phi(w), w' . phi(w')) between two grid nodes."""
    return float(core.dist(graph_map(g, *node_a), graph_map(g, *node_b)))


def calibrate_ball_inclusion(g: GridGraph, center, r):
    """Largest b with pi_W(B(x, b r)) inside pi_W(B(x, r) on the graph).

    Empirical sandwich constant: over grid nodes w, any w reachable from
    the ball B(x, b r) along its fiber must carry a graph point within r
    of x.  Returns min(1, min over violating nodes of fiber dist / r).
    """
    center = core.as_point(center)
    nodes = planes.from_plane_coords(g.nodes(), planes.subgroup_y_t())
    fiber = planes.dist_to_fiber(center, nodes, planes.subgroup_y_t())
    on_graph = core.dist(all_graph_points(g).reshape(-1, 3), center)
    outside = on_graph > r
    if not outside.any():
        return 1.0
    return float(min(1.0, fiber[outside].min() / r))


# ---------------------------------------------------------------------------
# serialization: grid graphs as JSON header + CSV body, point sets as CSV

def save_grid_graph(g: GridGraph, prefix):
    meta = {"y0": g.y0, "t0": g.t0, "dy": g.dy, "dt": g.dt,
            "ny": g.ny, "nt": g.nt}
    with open(str(prefix) + ".json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(str(prefix) + ".csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["y", "t", "phi", "mass"])
        ys, ts = g.ys, g.ts
        for i in range(g.ny):
            for j in range(g.nt):
                wr.writerow([repr(float(ys[i])), repr(float(ts[j])),
                             repr(float(g.phi[i, j])), repr(float(g.mass[i, j]))])


def load_grid_graph(prefix):
    with open(str(prefix) + ".json") as fh:
        meta = json.load(fh)
    phi = np.zeros((meta["ny"], meta["nt"]))
    mass = np.zeros_like(phi)
    with open(str(prefix) + ".csv", newline="") as fh:
        rd = csv.reader(fh)
        next(rd)
        rows = [(float(a), float(b), float(c), float(d)) for a, b, c, d in rd]
    for k, (_, _, p, m) in enumerate(rows):
        phi[k // meta["nt"], k % meta["nt"]] = p
        mass[k // meta["nt"], k % meta["nt"]] = m
    return GridGraph(meta["y0"], meta["t0"], meta["dy"], meta["dt"], phi, mass)


def save_point_set(ps: GraphPointSet, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["x", "y", "t", "mass"])
        for p, m in zip(ps.points, ps.masses):
            wr.writerow([repr(float(p[0])), repr(float(p[1])),
                         repr(float(p[2])), repr(float(m))])


def load_point_set(path, provenance=""):
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        next(rd)
        rows = np.array([[float(v) for v in row] for row in rd])
    return GraphPointSet(rows[:, :3], rows[:, 3], provenance or str(path))
