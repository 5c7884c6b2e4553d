"""Procedural navigation worlds.

An environment is a connected graph of viewpoints laid out in a 20 m box.
Objects from a closed 27-class vocabulary sit near viewpoints; each viewpoint
sees a 36-view panorama (12 headings x 3 elevations) whose per-view feature is

    sum of class base vectors in the view + alpha * signature + noise

The class base vectors are shared by every environment; the signature is a
per-environment offset drawn from a low-rank appearance subspace, standing in
for low-level appearance statistics that differ between houses.
"""
from __future__ import annotations

import heapq
import zlib
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

OBJECT_CLASSES = (
    "drawer", "faucet", "cabinet", "hinge", "cushion", "sofa", "chair", "pillow",
    "armchair", "lamp", "vase", "knob", "curtain", "statue(sculpture)", "doorknob",
    "vent", "lightbulb", "flowerpot", "book", "pipe", "painting", "wall socket",
    "bed", "mirror", "television set", "flower arrangement", "chandelier",
)
NUM_CLASSES = len(OBJECT_CLASSES)
NUM_HEADINGS = 12
ELEVATIONS = (-np.pi / 6, 0.0, np.pi / 6)
NUM_VIEWS = NUM_HEADINGS * len(ELEVATIONS)
SPLITS = ("train-seen", "val-seen", "val-unseen")
ACTIONS = ("left", "right", "forward", "stop")
EYE_HEIGHT = 1.5
HALF_FOV = np.pi / 6


class WorldGenError(RuntimeError):
    pass


@dataclass(frozen=True)
class WorldSpec:
    num_nodes: int = 20
    degree: int = 3
    object_density: float = 1.0   # mean objects anchored per viewpoint
    feature_dim: int = 64
    box: float = 20.0
    min_separation: float = 2.5
    view_range: float = 6.0
    signature_strength: float = 1.0   # alpha
    signature_rank: int = 4
    signature_scale: float = 1.0      # std of each appearance-subspace coordinate
    noise_std: float = 0.1
    basis_seed: int = 0               # shared class vectors and appearance subspace

    def validate(self) -> None:
        if self.num_nodes < 4:
            raise ValueError("num_nodes must be >= 4")
        if self.degree < 1:
            raise ValueError("degree must be >= 1")
        if self.feature_dim < 8:
            raise ValueError("feature_dim must be >= 8")
        if not 1 <= self.signature_rank <= self.feature_dim:
            raise ValueError("signature_rank must lie in [1, feature_dim]")


def stable_hash(*parts) -> int:
    return zlib.crc32("\x1f".join(str(p) for p in parts).encode())


@lru_cache(maxsize=16)
def object_basis(feature_dim: int, basis_seed: int = 0) -> np.ndarray:
    """Fixed unit vectors, one row per object class."""
    rng = np.random.default_rng([basis_seed, 27, feature_dim])
    b = rng.standard_normal((NUM_CLASSES, feature_dim))
    b /= np.linalg.norm(b, axis=1, keepdims=True)
    b.setflags(write=False)
    return b


@lru_cache(maxsize=16)
def appearance_subspace(feature_dim: int, rank: int, basis_seed: int = 0) -> np.ndarray:
    """Orthonormal (feature_dim, rank) basis spanning all environment signatures."""
    rng = np.random.default_rng([basis_seed, 101, feature_dim, rank])
    q, _ = np.linalg.qr(rng.standard_normal((feature_dim, rank)))
    q.setflags(write=False)
    return q


def view_heading(m: int) -> float:
    return (m % NUM_HEADINGS) * (2 * np.pi / NUM_HEADINGS)


def view_elevation(m: int) -> float:
    return ELEVATIONS[m // NUM_HEADINGS]


def view_index(heading: float, elevation: float) -> int:
    h = int(np.round((heading % (2 * np.pi)) / (2 * np.pi / NUM_HEADINGS))) % NUM_HEADINGS
    if elevation < -np.pi / 12:
        e = 0
    elif elevation > np.pi / 12:
        e = 2
    else:
        e = 1
    return e * NUM_HEADINGS + h


def wrap_angle(a: float) -> float:
    """Map to (-pi, pi]."""
    a = (a + np.pi) % (2 * np.pi) - np.pi
    return np.pi if a == -np.pi else a


@dataclass
class Panorama:
    viewpoint: int
    features: np.ndarray        # (36, D)
    headings: np.ndarray        # (36,)
    elevations: np.ndarray      # (36,)
    objects: list[frozenset]    # per view, class indices

    def object_union(self) -> frozenset:
        return frozenset().union(*self.objects)


@dataclass
class EnvGraph:
    env_id: str
    split: str
    positions: np.ndarray                  # (N, 3) metres
    edges: list[tuple[int, int]]
    inventories: np.ndarray                # (N, 36, 27) bool
    signature: np.ndarray                  # (D,)
    spec: WorldSpec
    noise_seed: int
    _geo: np.ndarray | None = field(default=None, repr=False, compare=False)
    _feat: np.ndarray | None = field(default=None, repr=False, compare=False)
    _adj: list | None = field(default=None, repr=False, compare=False)
    _nbr: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def num_nodes(self) -> int:
        return len(self.positions)

    def edge_length(self, a: int, b: int) -> float:
        return float(np.linalg.norm(self.positions[a] - self.positions[b]))

    @property
    def adjacency(self) -> list[list[int]]:
        if self._adj is None:
            adj: list[list[int]] = [[] for _ in range(self.num_nodes)]
            for a, b in self.edges:
                adj[a].append(b)
                adj[b].append(a)
            self._adj = [sorted(n) for n in adj]
        return self._adj

    def neighbors(self, v: int) -> list[int]:
        return self.adjacency[v]

    def heading_to(self, a: int, b: int) -> tuple[float, float]:
        """Absolute (heading, elevation) from viewpoint a toward b."""
        d = self.positions[b] - self.positions[a]
        heading = float(np.arctan2(d[1], d[0]) % (2 * np.pi))
        elevation = float(np.arctan2(d[2], np.hypot(d[0], d[1])))
        return heading, elevation

    def neighbor_geometry(self, v: int) -> list[tuple[int, float, float, int]]:
        """Cached (neighbor, heading, elevation, view index) for each neighbor of ``v``."""
        if v not in self._nbr:
            out = []
            for w in self.neighbors(v):
                h, e = self.heading_to(v, w)
                out.append((w, h, e, view_index(h, e)))
            self._nbr[v] = out
        return self._nbr[v]

    def geodesic_matrix(self) -> np.ndarray:
        if self._geo is None:
            geo = np.stack([_dijkstra(self, s) for s in range(self.num_nodes)])
            # summation order can differ by an ulp between directions
            self._geo = np.minimum(geo, geo.T)
        return self._geo

    def view_objects(self, v: int, m: int) -> frozenset:
        return frozenset(np.flatnonzero(self.inventories[v, m]).tolist())

    def panorama_objects(self, v: int) -> frozenset:
        return frozenset(np.flatnonzero(self.inventories[v].any(axis=0)).tolist())

    def all_features(self) -> np.ndarray:
        """(N, 36, D) raw view features for every viewpoint, cached."""
        if self._feat is None:
            self._feat = np.stack([render_panorama(self, v).features for v in range(self.num_nodes)])
            self._feat.setflags(write=False)
        return self._feat

    def with_split(self, split: str) -> "EnvGraph":
        return EnvGraph(self.env_id, split, self.positions, self.edges, self.inventories,
                        self.signature, self.spec, self.noise_seed)


def _dijkstra(env: EnvGraph, src: int) -> np.ndarray:
    adj = env.adjacency
    dist = np.full(env.num_nodes, np.inf)
    dist[src] = 0.0
    heap = [(0.0, src)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        for w in adj[u]:
            nd = d + env.edge_length(u, w)
            if nd < dist[w]:
                dist[w] = nd
                heapq.heappush(heap, (nd, w))
    return dist


def geodesic(env: EnvGraph, a: int, b: int) -> float:
    n = env.num_nodes
    if not (0 <= a < n and 0 <= b < n):
        raise KeyError(f"viewpoint not in {env.env_id}: {a}, {b}")
    d = env.geodesic_matrix()[a, b]
    assert np.isfinite(d), "graph is disconnected"
    return float(d)


def _connected(n: int, edges) -> bool:
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in edges:
        parent[find(a)] = find(b)
    return len({find(i) for i in range(n)}) == 1


def _layout(rng: np.random.Generator, spec: WorldSpec) -> np.ndarray:
    pts: list[np.ndarray] = []
    tries = 0
    while len(pts) < spec.num_nodes:
        tries += 1
        if tries > 200 * spec.num_nodes:
            raise WorldGenError("could not place viewpoints with the requested separation")
        p = np.array([rng.uniform(0, spec.box), rng.uniform(0, spec.box), rng.uniform(0, 0.5)])
        if all(np.linalg.norm(p[:2] - q[:2]) >= spec.min_separation for q in pts):
            pts.append(p)
    return np.array(pts)


def _edges(pos: np.ndarray, degree: int) -> list[tuple[int, int]]:
    n = len(pos)
    d = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
    edges = set()
    for i in range(n):
        for j in np.argsort(d[i])[1:degree + 1]:
            edges.add((min(i, j), max(i, j)))
    # Prim's MST guarantees connectivity
    in_tree = {0}
    while len(in_tree) < n:
        best = None
        for i in in_tree:
            for j in range(n):
                if j not in in_tree and (best is None or d[i, j] < best[0]):
                    best = (d[i, j], i, j)
        _, i, j = best
        edges.add((min(i, j), max(i, j)))
        in_tree.add(j)
    return sorted((int(a), int(b)) for a, b in edges)


def _place_objects(rng: np.random.Generator, pos: np.ndarray, spec: WorldSpec) -> np.ndarray:
    n = len(pos)
    freq = rng.dirichlet(np.full(NUM_CLASSES, 0.7))
    counts = rng.poisson(spec.object_density, size=n)
    inv = np.zeros((n, NUM_VIEWS, NUM_CLASSES), dtype=bool)
    objs = []
    for v in range(n):
        for _ in range(counts[v]):
            r = rng.uniform(0.4, 1.5)
            ang = rng.uniform(0, 2 * np.pi)
            loc = pos[v] + np.array([r * np.cos(ang), r * np.sin(ang), rng.uniform(0.2, 2.6)])
            objs.append((int(rng.choice(NUM_CLASSES, p=freq)), loc))
    for v in range(n):
        eye = pos[v] + np.array([0, 0, EYE_HEIGHT])
        for cls, loc in objs:
            d = loc - eye
            horiz = float(np.hypot(d[0], d[1]))
            if horiz > spec.view_range or horiz < 1e-6:
                continue
            head = float(np.arctan2(d[1], d[0]))
            elev = float(np.arctan2(d[2], horiz))
            for m in range(NUM_VIEWS):
                # 60 degree field of view at 30 degree spacing: neighbouring views overlap
                if (abs(wrap_angle(head - view_heading(m))) < HALF_FOV
                        and abs(elev - view_elevation(m)) < HALF_FOV):
                    inv[v, m, cls] = True
    # prune classes seen in fewer than 1% of panoramas
    seen = inv.any(axis=1).mean(axis=0)
    inv[:, :, seen < 0.01] = False
    return inv


def generate_environment(seed: int, spec: WorldSpec | None = None, env_id: str = "env000",
                         split: str = "train-seen", max_retries: int = 10) -> EnvGraph:
    """Deterministic in (seed, env_id, spec)."""
    spec = spec or WorldSpec()
    spec.validate()
    if split not in SPLITS:
        raise ValueError(f"unknown split {split!r}")
    rng = np.random.default_rng([int(seed), stable_hash(env_id)])
    for _ in range(max_retries):
        pos = _layout(rng, spec)
        edges = _edges(pos, spec.degree)
        if _connected(len(pos), edges) and all(np.linalg.norm(pos[a] - pos[b]) > 0 for a, b in edges):
            break
    else:
        raise WorldGenError("generated graph is disconnected after retries")
    inv = _place_objects(rng, pos, spec)
    sub = appearance_subspace(spec.feature_dim, spec.signature_rank, spec.basis_seed)
    signature = sub @ (spec.signature_scale * rng.standard_normal(spec.signature_rank))
    noise_seed = int(rng.integers(2 ** 31))
    return EnvGraph(env_id, split, pos, edges, inv, signature, spec, noise_seed)


def render_panorama(env: EnvGraph, viewpoint: int, alpha: float | None = None,
                    noise_std: float | None = None) -> Panorama:
    if not 0 <= viewpoint < env.num_nodes:
        raise KeyError(f"unknown viewpoint {viewpoint} in {env.env_id}")
    spec = env.spec
    alpha = spec.signature_strength if alpha is None else alpha
    noise_std = spec.noise_std if noise_std is None else noise_std
    basis = object_basis(spec.feature_dim, spec.basis_seed)
    inv = env.inventories[viewpoint]
    feats = inv.astype(np.float64) @ basis + alpha * env.signature
    if noise_std > 0:
        rng = np.random.default_rng([env.noise_seed, viewpoint])
        feats = feats + noise_std * rng.standard_normal(feats.shape)
    return Panorama(
        viewpoint,
        feats,
        np.array([view_heading(m) for m in range(NUM_VIEWS)]),
        np.array([view_elevation(m) for m in range(NUM_VIEWS)]),
        [frozenset(np.flatnonzero(inv[m]).tolist()) for m in range(NUM_VIEWS)],
    )


@dataclass(frozen=True)
class FrameStep:
    action: str
    landmark: int | None     # object class index, None when nothing is visible


@dataclass
class Path:
    path_id: str
    env_id: str
    nodes: list[int]
    start_heading: float
    frame: tuple[FrameStep, ...]

    def __len__(self) -> int:
        return len(self.nodes)


def relative_action(rel: float) -> str:
    if rel > np.pi / 4:
        return "left"
    if rel < -np.pi / 4:
        return "right"
    return "forward"


def semantic_frame(env: EnvGraph, nodes: list[int], start_heading: float,
                   rng: np.random.Generator) -> tuple[FrameStep, ...]:
    steps = []
    heading = start_heading
    for a, b in zip(nodes[:-1], nodes[1:]):
        h, e = env.heading_to(a, b)
        action = relative_action(wrap_angle(h - heading))
        visible = sorted(env.view_objects(a, view_index(h, e)))
        landmark = int(rng.choice(visible)) if visible else None
        steps.append(FrameStep(action, landmark))
        heading = h
    at_goal = sorted(env.panorama_objects(nodes[-1]))
    steps.append(FrameStep("stop", int(rng.choice(at_goal)) if at_goal else None))
    return tuple(steps)


def sample_path(env: EnvGraph, length: int, seed: int, path_id: str | None = None,
                max_retries: int = 200) -> Path:
    """Random simple walk of ``length`` viewpoints without backtracking."""
    if length < 2:
        raise ValueError("path length must be >= 2")
    rng = np.random.default_rng([int(seed), stable_hash(env.env_id, length)])
    adj = env.adjacency
    for _ in range(max_retries):
        nodes = [int(rng.integers(env.num_nodes))]
        while len(nodes) < length:
            options = [w for w in adj[nodes[-1]] if w not in nodes]
            if not options:
                break
            nodes.append(int(rng.choice(options)))
        if len(nodes) == length:
            start_heading = float(rng.integers(NUM_HEADINGS)) * (2 * np.pi / NUM_HEADINGS)
            frame = semantic_frame(env, nodes, start_heading, rng)
            return Path(path_id or f"{env.env_id}_p", env.env_id, nodes, start_heading, frame)
    raise WorldGenError(f"could not sample a simple path of length {length} in {env.env_id}")
