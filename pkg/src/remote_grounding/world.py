"""Synthetic topological houses and the region proposals an agent observes in them.

A house is a set of rooms, each a jittered grid of viewpoints joined by door
edges. Ground-truth objects live in rooms; every viewpoint carries a fixed
panel of ``regions_per_viewpoint`` proposals: one candidate per visible object,
candidate clutter up to ``candidates_per_viewpoint`` and context-only clutter
filling the rest.

All coordinates are snapped to a 2**-20 m lattice so that translating a house by
an integer offset leaves every relative coordinate bit-identical.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import kernels, lexicon

SCHEMA_VERSION = 1
LATTICE = 2.0**-20


def quantize(x):
    return np.round(np.asarray(x, dtype=np.float64) / LATTICE) * LATTICE


@dataclass(frozen=True)
class WorldParams:
    n_viewpoints: int = 60
    n_rooms: int = 4
    spacing: float = 2.0
    position_jitter: float = 0.25
    objects_per_room: int = 9
    regions_per_viewpoint: int = 32
    candidates_per_viewpoint: int = 16
    feature_noise: float = 0.15
    depth_noise: float = 0.05
    box_scale_noise: float = 0.05
    los_radius: float = 3.0
    fixture_fraction: float = 1.0
    extra_door_prob: float = 0.25
    max_retries: int = 20

    def validate(self):
        checks = [
            ("n_viewpoints >= 1", self.n_viewpoints >= 1),
            ("n_rooms >= 1", self.n_rooms >= 1),
            ("n_rooms <= n_viewpoints", self.n_rooms <= self.n_viewpoints),
            ("objects_per_room >= 1", self.objects_per_room >= 1),
            ("regions_per_viewpoint >= 1", self.regions_per_viewpoint >= 1),
            ("1 <= candidates_per_viewpoint <= regions_per_viewpoint",
             1 <= self.candidates_per_viewpoint <= self.regions_per_viewpoint),
            ("spacing > 0", self.spacing > 0),
            ("los_radius > 0", self.los_radius > 0),
            ("feature_noise >= 0", self.feature_noise >= 0),
            ("depth_noise >= 0", self.depth_noise >= 0),
            ("box_scale_noise >= 0", self.box_scale_noise >= 0),
            ("0 <= fixture_fraction <= 1", 0 <= self.fixture_fraction <= 1),
            ("max_retries >= 1", self.max_retries >= 1),
        ]
        failed = [name for name, ok in checks if not ok]
        if failed:
            raise ValueError(f"invalid WorldParams: {', '.join(failed)}")

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown WorldParams fields: {sorted(unknown)}")
        return cls(**d)


@dataclass
class Viewpoint:
    id: int
    position: np.ndarray
    room_id: int
    neighbor_ids: set = field(default_factory=set)


class NavGraph:
    """Undirected navigation graph with Euclidean edge lengths."""

    def __init__(self, viewpoints, edges):
        self.viewpoints = list(viewpoints)
        for i, vp in enumerate(self.viewpoints):
            if vp.id != i:
                raise ValueError("viewpoint ids must be 0..n-1 in order")
        self.edge_length = {}
        for a, b in edges:
            if a == b:
                raise ValueError(f"self-edge at viewpoint {a}")
            d = float(np.linalg.norm(self.viewpoints[a].position - self.viewpoints[b].position))
            self.edge_length[(a, b)] = d
            self.edge_length[(b, a)] = d
            self.viewpoints[a].neighbor_ids.add(b)
            self.viewpoints[b].neighbor_ids.add(a)

    def __len__(self):
        return len(self.viewpoints)

    @cached_property
    def positions(self):
        return np.array([vp.position for vp in self.viewpoints]).reshape(-1, 3)

    @cached_property
    def csr(self):
        """``(indptr, indices, weights)`` with neighbours sorted by id."""
        indptr = [0]
        indices, weights = [], []
        for vp in self.viewpoints:
            for nb in sorted(vp.neighbor_ids):
                indices.append(nb)
                weights.append(self.edge_length[(vp.id, nb)])
            indptr.append(len(indices))
        return (np.array(indptr, dtype=np.int64), np.array(indices, dtype=np.int64),
                np.array(weights, dtype=np.float64))

    def edges(self):
        return sorted((a, b) for (a, b) in self.edge_length if a < b)

    def hops_from(self, sources, max_depth=-1):
        indptr, indices, _ = self.csr
        return kernels.bfs_hops(indptr, indices, sources, max_depth)

    def distances_from(self, source):
        indptr, indices, weights = self.csr
        return kernels.dijkstra(indptr, indices, weights, source)


def shortest_path(graph, a, b):
    """Minimum-length path from ``a`` to ``b`` as ``(ids, meters)``."""
    n = len(graph)
    if not (0 <= a < n and 0 <= b < n):
        raise KeyError(f"viewpoint not in graph: {a if not 0 <= a < n else b}")
    if a == b:
        return [a], 0.0
    dist, pred = graph.distances_from(a)
    if not np.isfinite(dist[b]):
        raise ValueError(f"viewpoint {b} unreachable from {a}")
    path = [b]
    while path[-1] != a:
        path.append(int(pred[path[-1]]))
    path.reverse()
    length = 0.0
    for u, v in zip(path, path[1:]):
        length += graph.edge_length[(u, v)]
    return path, length


def path_length(graph, ids):
    total = 0.0
    for u, v in zip(ids, ids[1:]):
        total += graph.edge_length[(u, v)]
    return total


@dataclass
class GroundTruthObject:
    id: int
    category_id: int
    attribute_ids: list
    center: np.ndarray
    box_min: np.ndarray
    box_max: np.ndarray
    room_id: int
    valid_viewpoint_ids: set


@dataclass
class RegionProposal:
    viewpoint_id: int
    feature: np.ndarray
    center: np.ndarray
    radius: float
    box_min: np.ndarray
    box_max: np.ndarray
    source_object_id: int | None
    candidate: bool


@dataclass
class ViewpointRegions:
    """Column-wise storage of one viewpoint's proposals."""

    features: np.ndarray  # (n, d_v)
    centers: np.ndarray  # (n, 3)
    radii: np.ndarray  # (n,)
    box_min: np.ndarray
    box_max: np.ndarray
    source: np.ndarray  # (n,) object id or -1
    candidate: np.ndarray  # (n,) bool

    def __len__(self):
        return len(self.radii)

    def subset(self, idx):
        return ViewpointRegions(*(getattr(self, f.name)[idx] for f in dataclasses.fields(self)))


@dataclass
class Environment:
    id: int
    graph: NavGraph
    objects: list
    regions: dict
    seed: int
    room_types: list
    params: WorldParams
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def object(self, object_id):
        obj = self.objects[object_id] if 0 <= object_id < len(self.objects) else None
        if obj is None or obj.id != object_id:
            raise KeyError(f"unknown object id {object_id}")
        return obj

    def room_name(self, room_id):
        return lexicon.ROOM_TYPES[self.room_types[room_id]]


def attribute_feature(category_id, color_id, material_id):
    """Unit-norm concatenation of the category / colour / material one-hot blocks."""
    f = np.zeros(lexicon.FEATURE_DIM)
    f[category_id] = 1.0
    f[len(lexicon.CATEGORIES) + color_id] = 1.0
    f[len(lexicon.CATEGORIES) + len(lexicon.COLORS) + material_id] = 1.0
    return f / math.sqrt(3.0)


def visible_viewpoints(graph, center, room_id, radius):
    """Viewpoints in ``room_id`` within Euclidean ``radius`` of ``center``."""
    d = np.linalg.norm(graph.positions - np.asarray(center), axis=1)
    return {vp.id for vp in graph.viewpoints if vp.room_id == room_id and d[vp.id] <= radius}


def valid_viewpoints(env, object_id):
    obj = env.object(object_id)
    return set(obj.valid_viewpoint_ids)


def extract_regions(env, viewpoint_id):
    """The proposals observed at ``viewpoint_id`` as a list of ``RegionProposal``."""
    if viewpoint_id not in env.regions:
        raise KeyError(f"unknown viewpoint {viewpoint_id}")
    r = env.regions[viewpoint_id]
    return [
        RegionProposal(
            viewpoint_id=viewpoint_id,
            feature=r.features[i].copy(),
            center=r.centers[i].copy(),
            radius=float(r.radii[i]),
            box_min=r.box_min[i].copy(),
            box_max=r.box_max[i].copy(),
            source_object_id=None if r.source[i] < 0 else int(r.source[i]),
            candidate=bool(r.candidate[i]),
        )
        for i in range(len(r))
    ]


# ---------------------------------------------------------------- generation


def _layout(rng, params):
    counts = [params.n_viewpoints // params.n_rooms] * params.n_rooms
    for r in range(params.n_viewpoints % params.n_rooms):
        counts[r] += 1
    shapes = []
    for c in counts:
        cols = math.ceil(math.sqrt(c))
        shapes.append((cols, math.ceil(c / cols)))
    max_cols = max(s[0] for s in shapes)
    max_rows = max(s[1] for s in shapes)
    cell_w = (max_cols - 1) * params.spacing + 1.5 * params.spacing
    cell_h = (max_rows - 1) * params.spacing + 1.5 * params.spacing
    macro_cols = math.ceil(math.sqrt(params.n_rooms))

    viewpoints, edges, room_members = [], [], []
    for room, (count, (cols, _rows)) in enumerate(zip(counts, shapes)):
        ox = (room % macro_cols) * cell_w
        oy = (room // macro_cols) * cell_h
        members = []
        for k in range(count):
            col, row = k % cols, k // cols
            jitter = rng.uniform(-params.position_jitter, params.position_jitter, size=2)
            pos = quantize([ox + col * params.spacing + jitter[0], oy + row * params.spacing + jitter[1], 0.0])
            vid = len(viewpoints)
            viewpoints.append(Viewpoint(vid, pos, room))
            if col > 0:
                edges.append((vid - 1, vid))
            if row > 0:
                edges.append((vid - cols, vid))
            members.append(vid)
        room_members.append(members)

    # doors: random spanning tree over the macro grid plus a few extra doors
    macro = {}
    for room in range(params.n_rooms):
        macro[(room % macro_cols, room // macro_cols)] = room
    pairs = []
    for (mx, my), room in sorted(macro.items(), key=lambda kv: kv[1]):
        for nb in ((mx + 1, my), (mx, my + 1)):
            if nb in macro:
                pairs.append((room, macro[nb]))
    order = rng.permutation(len(pairs))
    parent = list(range(params.n_rooms))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    doors = []
    for i in order:
        a, b = pairs[i]
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
            doors.append((a, b))
        elif rng.random() < params.extra_door_prob:
            doors.append((a, b))
    for a, b in sorted(doors):
        best = None
        for u in room_members[a]:
            for v in room_members[b]:
                d = float(np.linalg.norm(viewpoints[u].position - viewpoints[v].position))
                if best is None or d < best[0]:
                    best = (d, u, v)
        edges.append((best[1], best[2]))
    return viewpoints, edges, room_members


def _room_bounds(graph, members):
    pos = graph.positions[members]
    return pos[:, :2].min(axis=0) - 0.5, pos[:, :2].max(axis=0) + 0.5


def _random_placement(rng, graph, members, bounds, radius_xy):
    anchor = graph.positions[members[rng.integers(len(members))]]
    ang = rng.uniform(0.0, 2 * math.pi)
    rad = radius_xy * math.sqrt(rng.random())
    xy = anchor[:2] + rad * np.array([math.cos(ang), math.sin(ang)])
    return np.clip(xy, bounds[0], bounds[1])


def _place_objects(rng, graph, room_members, params):
    objects = []
    for room, members in enumerate(room_members):
        bounds = _room_bounds(graph, members)
        for _ in range(params.objects_per_room):
            category = int(rng.integers(lexicon.N_PORTABLE))
            color = int(rng.integers(len(lexicon.COLORS)))
            size = int(rng.integers(len(lexicon.SIZES)))
            material = int(rng.integers(len(lexicon.MATERIALS)))
            half = quantize(lexicon.SIZE_HALF_EXTENT[size] * rng.uniform(0.8, 1.2, size=3))
            xy = _random_placement(rng, graph, members, bounds, 2.0)
            center = quantize([xy[0], xy[1], half[2] + rng.uniform(0.0, 0.8)])
            valid = visible_viewpoints(graph, center, room, params.los_radius)
            objects.append(GroundTruthObject(
                id=len(objects), category_id=category, attribute_ids=[color, size, material, -1],
                center=center, box_min=center - half, box_max=center + half,
                room_id=room, valid_viewpoint_ids=valid,
            ))
    for obj in objects:
        best = None
        for other in objects:
            if other.room_id != obj.room_id or other.category_id == obj.category_id:
                continue
            d = float(np.linalg.norm(other.center - obj.center))
            if best is None or d < best[0]:
                best = (d, other.category_id)
        if best is not None:
            obj.attribute_ids[lexicon.ATTR_ANCHOR] = best[1]
    return objects


def _clutter(rng, graph, vp, bounds, room_type, params, n, candidate):
    rows = []
    fixtures = lexicon.fixture_ids(room_type)
    for _ in range(n):
        if rng.random() < params.fixture_fraction:
            category = fixtures[rng.integers(len(fixtures))]
        else:
            category = int(rng.integers(lexicon.N_PORTABLE))
        color = int(rng.integers(len(lexicon.COLORS)))
        material = int(rng.integers(len(lexicon.MATERIALS)))
        size = int(rng.integers(len(lexicon.SIZES)))
        half = quantize(lexicon.SIZE_HALF_EXTENT[size] * rng.uniform(0.8, 1.2, size=3))
        xy = _random_placement(rng, graph, [vp.id], bounds, 2.5)
        center = quantize([xy[0], xy[1], half[2] + rng.uniform(0.0, 0.8)])
        feat = attribute_feature(category, color, material) + rng.normal(0.0, params.feature_noise, lexicon.FEATURE_DIM) \
            if params.feature_noise > 0 else attribute_feature(category, color, material)
        rows.append((feat, center, center - half, center + half, -1, candidate))
    return rows


def _observe(rng, graph, vp, objects, bounds, room_type, params):
    visible = [o for o in objects if vp.id in o.valid_viewpoint_ids]
    visible.sort(key=lambda o: (float(np.linalg.norm(o.center - vp.position)), o.id))
    visible = visible[: params.candidates_per_viewpoint]
    rows = []
    for obj in visible:
        ray = obj.center - vp.position
        norm = float(np.linalg.norm(ray))
        ray = ray / norm if norm > 0 else np.array([1.0, 0.0, 0.0])
        shift = rng.normal(0.0, params.depth_noise) * ray if params.depth_noise > 0 else np.zeros(3)
        scale = float(np.clip(1.0 + rng.normal(0.0, params.box_scale_noise), 0.5, 1.5)) \
            if params.box_scale_noise > 0 else 1.0
        center = quantize(obj.center + shift)
        half = quantize((obj.box_max - obj.box_min) / 2.0 * scale)
        feat = attribute_feature(obj.category_id, obj.attribute_ids[lexicon.ATTR_COLOR],
                                 obj.attribute_ids[lexicon.ATTR_MATERIAL])
        if params.feature_noise > 0:
            feat = feat + rng.normal(0.0, params.feature_noise, lexicon.FEATURE_DIM)
        rows.append((feat, center, center - half, center + half, obj.id, True))
    n_fill = params.candidates_per_viewpoint - len(rows)
    rows += _clutter(rng, graph, vp, bounds, room_type, params, n_fill, True)
    rows += _clutter(rng, graph, vp, bounds, room_type, params, params.regions_per_viewpoint - len(rows), False)
    order = rng.permutation(len(rows))
    rows = [rows[i] for i in order]
    lo = np.array([r[2] for r in rows])
    hi = np.array([r[3] for r in rows])
    return ViewpointRegions(
        features=np.array([r[0] for r in rows]),
        centers=np.array([r[1] for r in rows]),
        radii=np.linalg.norm(hi - lo, axis=1) / 2.0,
        box_min=lo,
        box_max=hi,
        source=np.array([r[4] for r in rows], dtype=np.int64),
        candidate=np.array([r[5] for r in rows], dtype=bool),
    )


def _unsolvable_objects(objects, regions):
    bad = []
    for obj in objects:
        ok = False
        for vid in sorted(obj.valid_viewpoint_ids):
            r = regions[vid]
            idx = np.flatnonzero((r.source == obj.id) & r.candidate)
            if len(idx) and kernels.box_iou(r.box_min[idx], r.box_max[idx], obj.box_min, obj.box_max).max() >= 0.5:
                ok = True
                break
        if not ok:
            bad.append(obj.id)
    return bad


def generate_environment(seed, params=None, env_id=None):
    """Build a house deterministically from ``(seed, params)``."""
    params = params or WorldParams()
    params.validate()
    failure = None
    for attempt in range(params.max_retries):
        rng = np.random.default_rng([seed, attempt])
        viewpoints, edges, room_members = _layout(rng, params)
        graph = NavGraph(viewpoints, edges)
        n_types = len(lexicon.ROOM_TYPES)
        room_types = [int(t) for t in rng.permutation(n_types)[: params.n_rooms]]
        room_types += [int(t) for t in rng.integers(n_types, size=params.n_rooms - len(room_types))]
        objects = _place_objects(rng, graph, room_members, params)
        empty = [o.id for o in objects if not o.valid_viewpoint_ids]
        if empty:
            failure = f"objects {empty} visible from no viewpoint (los_radius={params.los_radius})"
            continue
        bounds = [_room_bounds(graph, m) for m in room_members]
        regions = {
            vp.id: _observe(rng, graph, vp, objects, bounds[vp.room_id], room_types[vp.room_id], params)
            for vp in graph.viewpoints
        }
        bad = _unsolvable_objects(objects, regions)
        if bad:
            failure = (f"solvability: objects {bad} have no candidate region with IoU >= 0.5 "
                       f"at any valid viewpoint (candidates_per_viewpoint={params.candidates_per_viewpoint}, "
                       f"depth_noise={params.depth_noise}, box_scale_noise={params.box_scale_noise})")
            continue
        return Environment(id=seed if env_id is None else env_id, graph=graph, objects=objects,
                           regions=regions, seed=seed, room_types=room_types, params=params)
    raise ValueError(f"could not generate environment after {params.max_retries} attempts: {failure}")


def translate_environment(env, offset):
    """Copy of ``env`` with every coordinate shifted by ``offset``."""
    offset = np.asarray(offset, dtype=np.float64)
    vps = [Viewpoint(vp.id, vp.position + offset, vp.room_id) for vp in env.graph.viewpoints]
    graph = NavGraph(vps, env.graph.edges())
    objects = [dataclasses.replace(o, center=o.center + offset, box_min=o.box_min + offset,
                                   box_max=o.box_max + offset, attribute_ids=list(o.attribute_ids),
                                   valid_viewpoint_ids=set(o.valid_viewpoint_ids)) for o in env.objects]
    regions = {
        vid: dataclasses.replace(r, centers=r.centers + offset, box_min=r.box_min + offset, box_max=r.box_max + offset)
        for vid, r in env.regions.items()
    }
    return Environment(env.id, graph, objects, regions, env.seed, list(env.room_types), env.params)


# ---------------------------------------------------------------- episodes


@dataclass
class Episode:
    id: int
    environment_id: int
    start_viewpoint_id: int
    instruction: object  # language.Instruction
    target_object_id: int
    gold_path_length: float
    gold_steps: int


def make_episodes(env, n, seed, d_min, d_max, template_set=None, first_id=0):
    """Sample ``n`` episodes whose hop distance to the target's nearest valid viewpoint is in ``[d_min, d_max]``."""
    from . import language

    if d_min > d_max:
        raise ValueError(f"d_min ({d_min}) > d_max ({d_max})")
    if n == 0:
        return []
    hops = {o.id: env.graph.hops_from(sorted(o.valid_viewpoint_ids)) for o in env.objects}
    feasible = {oid: np.flatnonzero((h >= d_min) & (h <= d_max)) for oid, h in hops.items()}
    targets = [oid for oid, f in feasible.items() if len(f)]
    if not targets:
        lo = min(int(h.min()) for h in hops.values())
        hi = max(int(h.max()) for h in hops.values())
        raise ValueError(f"no episode with gold_steps in [{d_min}, {d_max}]; achievable range is [{lo}, {hi}]")
    rng = np.random.default_rng([seed, env.id, 7919])
    episodes = []
    for i in range(n):
        target = targets[rng.integers(len(targets))]
        start = int(feasible[target][rng.integers(len(feasible[target]))])
        dist, _ = env.graph.distances_from(start)
        valid = sorted(env.objects[target].valid_viewpoint_ids)
        instr = language.generate_instruction(env, target, seed=int(rng.integers(2**31)), template_set=template_set)
        episodes.append(Episode(
            id=first_id + i, environment_id=env.id, start_viewpoint_id=start, instruction=instr,
            target_object_id=target, gold_path_length=float(dist[valid].min()), gold_steps=int(hops[target][start]),
        ))
    return episodes


# ---------------------------------------------------------------- serialization


def environment_to_dict(env):
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "environment",
        "id": env.id,
        "seed": env.seed,
        "params": dataclasses.asdict(env.params),
        "room_types": list(env.room_types),
        "viewpoints": [
            {"id": vp.id, "position": vp.position.tolist(), "room_id": vp.room_id,
             "neighbor_ids": sorted(vp.neighbor_ids)}
            for vp in env.graph.viewpoints
        ],
        "edges": [[a, b] for a, b in env.graph.edges()],
        "objects": [
            {"id": o.id, "category_id": o.category_id, "attribute_ids": list(o.attribute_ids),
             "center": o.center.tolist(), "box_min": o.box_min.tolist(), "box_max": o.box_max.tolist(),
             "room_id": o.room_id, "valid_viewpoint_ids": sorted(o.valid_viewpoint_ids)}
            for o in env.objects
        ],
        "regions": {
            str(vid): {
                "features": r.features.tolist(), "centers": r.centers.tolist(), "radii": r.radii.tolist(),
                "box_min": r.box_min.tolist(), "box_max": r.box_max.tolist(),
                "source_object_ids": r.source.tolist(), "candidate": r.candidate.tolist(),
            }
            for vid, r in sorted(env.regions.items())
        },
    }


def check_schema(d, kind):
    version = d.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValueError(f"schema_version mismatch for {kind}: expected {SCHEMA_VERSION}, got {version!r}")
    if d.get("kind") != kind:
        raise ValueError(f"expected a {kind!r} document, got {d.get('kind')!r}")


def environment_from_dict(d):
    check_schema(d, "environment")
    vps = [Viewpoint(v["id"], np.array(v["position"], dtype=np.float64), v["room_id"]) for v in d["viewpoints"]]
    graph = NavGraph(vps, [tuple(e) for e in d["edges"]])
    objects = [
        GroundTruthObject(o["id"], o["category_id"], list(o["attribute_ids"]), np.array(o["center"]),
                          np.array(o["box_min"]), np.array(o["box_max"]), o["room_id"], set(o["valid_viewpoint_ids"]))
        for o in d["objects"]
    ]
    regions = {}
    for vid, r in d["regions"].items():
        regions[int(vid)] = ViewpointRegions(
            features=np.array(r["features"], dtype=np.float64).reshape(-1, lexicon.FEATURE_DIM),
            centers=np.array(r["centers"], dtype=np.float64).reshape(-1, 3),
            radii=np.array(r["radii"], dtype=np.float64),
            box_min=np.array(r["box_min"], dtype=np.float64).reshape(-1, 3),
            box_max=np.array(r["box_max"], dtype=np.float64).reshape(-1, 3),
            source=np.array(r["source_object_ids"], dtype=np.int64),
            candidate=np.array(r["candidate"], dtype=bool),
        )
    return Environment(d["id"], graph, objects, regions, d["seed"], list(d["room_types"]),
                       WorldParams.from_dict(d["params"]))


def episode_to_dict(ep):
    from .language import instruction_to_dict

    return {
        "id": ep.id, "environment_id": ep.environment_id, "start_viewpoint_id": ep.start_viewpoint_id,
        "instruction": instruction_to_dict(ep.instruction), "target_object_id": ep.target_object_id,
        "gold_path_length": ep.gold_path_length, "gold_steps": ep.gold_steps,
    }


def episode_from_dict(d):
    from .language import instruction_from_dict

    return Episode(d["id"], d["environment_id"], d["start_viewpoint_id"], instruction_from_dict(d["instruction"]),
                   d["target_object_id"], d["gold_path_length"], d["gold_steps"])


def episodes_to_dict(episodes):
    return {"schema_version": SCHEMA_VERSION, "kind": "episodes", "episodes": [episode_to_dict(e) for e in episodes]}


def episodes_from_dict(d):
    check_schema(d, "episodes")
    return [episode_from_dict(e) for e in d["episodes"]]
