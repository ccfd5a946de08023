"""Probabilistic roadmap planning in the 2-D output space.

Obstacles are axis-aligned rectangles ``(xmin, ymin, xmax, ymax)``. Clearance
tests are exact: the distance between a segment and a rectangle is computed
in closed form, never by sampling points along the segment.
"""

from __future__ import annotations

import bisect
import csv
import heapq
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegeneratePath, NoPath, SamplingExhausted

Rect = tuple[float, float, float, float]


@dataclass(frozen=True)
class Workspace:
    bounds: Rect
    obstacles: tuple[Rect, ...]
    start: tuple[float, float]
    goal: tuple[float, float]
    goal_radius: float = 0.5
    eps: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "bounds", tuple(float(v) for v in self.bounds))
        object.__setattr__(self, "obstacles", tuple(tuple(float(v) for v in r) for r in self.obstacles))
        object.__setattr__(self, "start", tuple(float(v) for v in self.start))
        object.__setattr__(self, "goal", tuple(float(v) for v in self.goal))
        x0, y0, x1, y1 = self.bounds
        if not (x1 > x0 and y1 > y0):
            raise ValueError("bounding box must have positive extent")
        for r in self.obstacles:
            if not (r[2] >= r[0] and r[3] >= r[1]):
                raise ValueError(f"obstacle {r} is not (xmin, ymin, xmax, ymax)")
        if not self.eps >= 0:
            raise ValueError("clearance eps must be non-negative")

    def with_clearance(self, eps: float) -> "Workspace":
        return replace(self, eps=float(eps))

    def validate(self) -> None:
        """Raise NoPath if the start or goal is within ``eps`` of an obstacle or the boundary."""
        for name, pt in (("start", self.start), ("goal", self.goal)):
            if not inflate_and_test(pt, self):
                raise NoPath(f"{name} {pt} is not clear of obstacles at clearance eps={self.eps:.4g}")


# ---------------------------------------------------------------- geometry

def point_rect_distance(p, rect: Rect) -> float:
    x, y = float(p[0]), float(p[1])
    dx = max(rect[0] - x, 0.0, x - rect[2])
    dy = max(rect[1] - y, 0.0, y - rect[3])
    return math.hypot(dx, dy)


def _points_rect_distance(pts: np.ndarray, rect: Rect) -> np.ndarray:
    dx = np.maximum(np.maximum(rect[0] - pts[:, 0], 0.0), pts[:, 0] - rect[2])
    dy = np.maximum(np.maximum(rect[1] - pts[:, 1], 0.0), pts[:, 1] - rect[3])
    return np.hypot(dx, dy)


def _segments_rect_distance(p0: np.ndarray, p1: np.ndarray, rect: Rect) -> np.ndarray:
    """Exact distance from each segment ``p0[i] -> p1[i]`` to a closed rectangle."""
    d = p1 - p0
    # Liang-Barsky: the segment meets the rectangle iff the clipped interval is non-empty.
    t_lo = np.zeros(len(p0))
    t_hi = np.ones(len(p0))
    hit = np.ones(len(p0), dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        for axis in (0, 1):
            for p, q in ((-d[:, axis], p0[:, axis] - rect[axis]), (d[:, axis], rect[axis + 2] - p0[:, axis])):
                parallel = p == 0.0
                hit &= ~(parallel & (q < 0.0))
                r = q / p
                t_lo = np.where(p < 0.0, np.maximum(t_lo, r), t_lo)
                t_hi = np.where(p > 0.0, np.minimum(t_hi, r), t_hi)
    hit &= t_lo <= t_hi

    dist = np.minimum(_points_rect_distance(p0, rect), _points_rect_distance(p1, rect))
    dd = np.einsum("ij,ij->i", d, d)
    safe_dd = np.where(dd > 0.0, dd, 1.0)
    for cx, cy in ((rect[0], rect[1]), (rect[0], rect[3]), (rect[2], rect[1]), (rect[2], rect[3])):
        w = np.array([cx, cy]) - p0
        t = np.clip(np.einsum("ij,ij->i", w, d) / safe_dd, 0.0, 1.0)
        t = np.where(dd > 0.0, t, 0.0)
        dist = np.minimum(dist, np.hypot(w[:, 0] - t * d[:, 0], w[:, 1] - t * d[:, 1]))
    return np.where(hit, 0.0, dist)


def segment_rect_distance(a, b, rect: Rect) -> float:
    p0 = np.asarray(a, dtype=float).reshape(1, 2)
    p1 = np.asarray(b, dtype=float).reshape(1, 2)
    return float(_segments_rect_distance(p0, p1, rect)[0])


def _inside_deflated(pts: np.ndarray, ws: Workspace) -> np.ndarray:
    x0, y0, x1, y1 = ws.bounds
    e = ws.eps
    return (pts[:, 0] >= x0 + e) & (pts[:, 0] <= x1 - e) & (pts[:, 1] >= y0 + e) & (pts[:, 1] <= y1 - e)


def _segments_clear(p0: np.ndarray, p1: np.ndarray, ws: Workspace) -> np.ndarray:
    # The deflated box is convex, so both endpoints inside means the whole segment is.
    ok = _inside_deflated(p0, ws) & _inside_deflated(p1, ws)
    for rect in ws.obstacles:
        # Obstacles are closed, so touching one is a collision even at eps = 0.
        dist = _segments_rect_distance(p0, p1, rect)
        ok &= (dist >= ws.eps) & (dist > 0.0)
    return ok


def inflate_and_test(geometry, workspace: Workspace) -> bool:
    """True iff a point ``(x, y)`` or segment ``((x0, y0), (x1, y1))`` keeps clearance ``eps``."""
    g = np.asarray(geometry, dtype=float)
    if g.shape == (2,):
        p0 = p1 = g.reshape(1, 2)
    elif g.shape == (2, 2):
        p0, p1 = g[0:1], g[1:2]
    else:
        raise ValueError(f"expected a point or a segment, got shape {g.shape}")
    return bool(_segments_clear(p0, p1, workspace)[0])


# ---------------------------------------------------------------- roadmap

@dataclass(frozen=True)
class Roadmap:
    nodes: np.ndarray
    edges: tuple[tuple[int, int, float], ...]
    seed: int | None
    start_index: int = 0
    goal_index: int = 1
    adjacency: tuple[tuple[tuple[int, float], ...], ...] = field(default=(), repr=False)

    @classmethod
    def from_edges(cls, nodes, edges, seed=None, start_index=0, goal_index=1) -> "Roadmap":
        nodes = np.asarray(nodes, dtype=float)
        adj: list[list[tuple[int, float]]] = [[] for _ in range(len(nodes))]
        for i, j, w in edges:
            adj[i].append((j, w))
            adj[j].append((i, w))
        return cls(nodes, tuple(edges), seed, start_index, goal_index, tuple(tuple(sorted(a)) for a in adj))

    def has_edge(self, i: int, j: int) -> bool:
        return any(k == j for k, _ in self.adjacency[i])


def build_prm(workspace: Workspace, n_samples: int, k_neighbors: int, rng_seed: int | None = 0) -> Roadmap:
    """Roadmap of ``n_samples`` clear nodes (start and goal included).

    Each node is joined to its ``k_neighbors`` nearest nodes whose connecting
    segment is clear; distance ties are broken by node index.
    """
    if n_samples < 2 or k_neighbors < 1:
        raise ValueError("need n_samples >= 2 and k_neighbors >= 1")
    workspace.validate()
    rng = np.random.default_rng(rng_seed)
    x0, y0, x1, y1 = workspace.bounds
    nodes = [np.array(workspace.start), np.array(workspace.goal)]
    rejections = 0
    need = n_samples - 2
    while len(nodes) - 2 < need:
        batch = rng.uniform((x0, y0), (x1, y1), size=(max(16, 2 * (need - len(nodes) + 2)), 2))
        ok = _segments_clear(batch, batch, workspace)
        for pt, good in zip(batch, ok):
            if len(nodes) - 2 >= need:
                break
            if good:
                nodes.append(pt)
            else:
                rejections += 1
                if rejections > 100 * n_samples:
                    raise SamplingExhausted(
                        f"{rejections} rejected samples before {n_samples} clear nodes were found"
                    )
    pts = np.array(nodes)

    edges: dict[tuple[int, int], float] = {}
    for i in range(len(pts)):
        dist = np.hypot(pts[:, 0] - pts[i, 0], pts[:, 1] - pts[i, 1])
        order = np.argsort(dist, kind="stable")
        order = order[order != i]
        clear = _segments_clear(np.repeat(pts[i:i + 1], len(order), axis=0), pts[order], workspace)
        for j in order[clear][:k_neighbors]:
            key = (min(i, int(j)), max(i, int(j)))
            edges[key] = float(dist[j])
    edge_list = tuple((i, j, w) for (i, j), w in sorted(edges.items()))
    return Roadmap.from_edges(pts, edge_list, rng_seed)


def shortest_path(roadmap: Roadmap, start: int | None = None, goal: int | None = None) -> np.ndarray:
    """Dijkstra over edge lengths; returns the waypoints as a ``(k, 2)`` array."""
    start = roadmap.start_index if start is None else start
    goal = roadmap.goal_index if goal is None else goal
    best = {start: 0.0}
    prev: dict[int, int] = {}
    heap = [(0.0, start)]
    done = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        if u == goal:
            break
        for v, w in roadmap.adjacency[u]:
            nd = d + w
            if nd < best.get(v, math.inf):
                best[v] = nd
                prev[v] = u
                heapq.heappush(heap, (nd, v))
    if goal not in done:
        raise NoPath("start and goal are not connected in the roadmap")
    route = [goal]
    while route[-1] != start:
        route.append(prev[route[-1]])
    return roadmap.nodes[route[::-1]].copy()


def path_length(waypoints) -> float:
    w = np.asarray(waypoints, dtype=float)
    return float(np.sum(np.hypot(*np.diff(w, axis=0).T)))


def shortcut_path(waypoints, workspace: Workspace) -> np.ndarray:
    """Greedy shortcutting: from each kept waypoint jump to the furthest visible later one."""
    w = np.asarray(waypoints, dtype=float)
    kept = [0]
    while kept[-1] < len(w) - 1:
        i = kept[-1]
        for j in range(len(w) - 1, i, -1):
            if j == i + 1 or inflate_and_test((w[i], w[j]), workspace):
                kept.append(j)
                break
    return w[kept].copy()


def tighten_path(waypoints, workspace: Workspace, iterations: int = 100, bisections: int = 30) -> np.ndarray:
    """Pull interior waypoints toward their neighbours' midpoint while both adjacent segments stay clear.

    Each move is the largest clear fraction of the step found by bisection, so
    the path stays clear and its length never increases. Repeated sweeps make
    the path wrap the inflated obstacle corners.
    """
    w = np.asarray(waypoints, dtype=float).copy()
    for _ in range(iterations):
        moved = 0.0
        for i in range(1, len(w) - 1):
            target = 0.5 * (w[i - 1] + w[i + 1])
            step = target - w[i]
            if not np.any(step):
                continue

            def ok(s):
                p = w[i] + s * step
                return inflate_and_test((w[i - 1], p), workspace) and inflate_and_test((p, w[i + 1]), workspace)

            if ok(1.0):
                s = 1.0
            else:
                lo, hi = 0.0, 1.0
                for _ in range(bisections):
                    mid = 0.5 * (lo + hi)
                    lo, hi = (mid, hi) if ok(mid) else (lo, mid)
                s = lo
            w[i] = w[i] + s * step
            moved = max(moved, s * float(np.hypot(*step)))
        if moved < 1e-9:
            break
    return shortcut_path(w, workspace)


def path_is_clear(waypoints, workspace: Workspace) -> bool:
    w = np.asarray(waypoints, dtype=float)
    if len(w) == 1:
        return inflate_and_test(w[0], workspace)
    return bool(np.all(_segments_clear(w[:-1], w[1:], workspace)))


def save_waypoints_csv(waypoints, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "y"])
        for x, y in np.asarray(waypoints, dtype=float):
            writer.writerow([f"{x:.17g}", f"{y:.17g}"])


# ---------------------------------------------------------------- velocity profile

class VelocityProfile:
    """Stop-and-go velocity command along a polyline.

    Every segment is traversed with a trapezoidal speed profile: linear ramp
    from rest to ``u_max`` over ``ramp_time``, cruise, and a linear ramp back
    to rest, so the integrated position stays on the polyline and reaches each
    waypoint exactly. Segments too short to reach ``u_max`` use a triangular
    profile with the same acceleration. Calling the profile returns ``u2(t)``.
    """

    def __init__(self, waypoints, u_max: float, ramp_time: float = 0.1):
        w = np.asarray(waypoints, dtype=float)
        if w.ndim != 2 or w.shape[1] != 2 or len(w) < 1:
            raise ValueError("waypoints must be a (k, 2) array")
        if not u_max > 0:
            raise ValueError("u_max must be positive")
        if not ramp_time >= 0:
            raise ValueError("ramp_time must be non-negative")
        self.waypoints = w
        self.u_max = float(u_max)
        self.ramp_time = float(ramp_time)
        self._dirs = []
        self._lengths = []
        self._knots: list[tuple[tuple[float, ...], tuple[float, ...]]] = []
        starts = [0.0]
        for a, b in zip(w[:-1], w[1:]):
            L = float(np.hypot(*(b - a)))
            if L <= 1e-12:
                raise DegeneratePath(f"consecutive waypoints {a} and {b} coincide")
            self._dirs.append((b - a) / L)
            self._lengths.append(L)
            knots = self._segment_knots(L)
            self._knots.append(knots)
            starts.append(starts[-1] + knots[0][-1])
        self._starts = starts
        self.duration = starts[-1]

    def _segment_knots(self, L: float):
        u, tau = self.u_max, self.ramp_time
        if tau == 0.0:
            T = L / u
            return (0.0, T), (u, u)
        if L >= u * tau:
            cruise = L / u - tau
            return (0.0, tau, tau + cruise, 2 * tau + cruise), (0.0, u, u, 0.0)
        accel = u / tau
        half = math.sqrt(L / accel)
        return (0.0, half, 2 * half), (0.0, accel * half, 0.0)

    def _locate(self, t: float) -> int:
        return min(max(bisect.bisect_right(self._starts, t) - 1, 0), len(self._knots) - 1)

    def speed(self, t: float) -> float:
        if not self._knots or t < 0.0 or t > self.duration:
            return 0.0
        i = self._locate(t)
        ts, vs = self._knots[i]
        return float(np.interp(t - self._starts[i], ts, vs))

    def __call__(self, t: float) -> np.ndarray:
        if not self._knots or t < 0.0 or t > self.duration:
            return np.zeros(2)
        i = self._locate(t)
        ts, vs = self._knots[i]
        return self._dirs[i] * float(np.interp(t - self._starts[i], ts, vs))

    def position(self, t: float) -> np.ndarray:
        """Exact integral of the profile from the first waypoint."""
        if not self._knots or t <= 0.0:
            return self.waypoints[0].copy()
        if t >= self.duration:
            return self.waypoints[-1].copy()
        i = self._locate(t)
        ts, vs = self._knots[i]
        s = t - self._starts[i]
        dist = 0.0
        for k in range(len(ts) - 1):
            a, b = ts[k], ts[k + 1]
            if s <= a:
                break
            hi = min(s, b)
            v_hi = vs[k] + (vs[k + 1] - vs[k]) * (hi - a) / (b - a) if b > a else vs[k]
            dist += 0.5 * (vs[k] + v_hi) * (hi - a)
        return self.waypoints[i] + self._dirs[i] * dist

    def segment_end_times(self) -> list[float]:
        return list(self._starts[1:])

    def describe(self) -> dict:
        return {
            "type": "stop_and_go",
            "u_max": self.u_max,
            "ramp_time": self.ramp_time,
            "duration": self.duration,
            "segment_start_times": list(self._starts[:-1]),
        }


def path_to_control(waypoints, u_max: float, ramp_time: float = 0.1) -> VelocityProfile:
    return VelocityProfile(waypoints, u_max, ramp_time)
