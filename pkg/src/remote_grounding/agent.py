"""Frontier exploration inside an L-step ball, viewpoint-grouped inference and episode rollout."""
from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, replace

import numpy as np

from . import lexicon
from .language import TextMode, mask_instruction
from .scorer import CoordFrame, ViewpointBatch, assemble_batch, encode_text, forward, region_rows
from .world import path_length, shortest_path


class Mode(enum.Enum):
    EXPLORE = "explore"
    PRE_EXPLORED = "pre_explored"

    @classmethod
    def parse(cls, value):
        return value if isinstance(value, cls) else cls(value)


class Variant(enum.Enum):
    GROUPED = "grouped"  # one batch per viewpoint, global argmax over viewpoint maxima
    RANDOM_BATCHES = "random_batches"  # fixed-size batches mixing regions across viewpoints
    TWO_STEP = "two_step"  # pick a viewpoint from averaged features, then its best region

    @classmethod
    def parse(cls, value):
        return value if isinstance(value, cls) else cls(value)


@dataclass(frozen=True)
class InferenceConfig:
    k_context: int = 8
    include_context_regions: bool = True
    coord_frame: str = CoordFrame.VIEWPOINT_RELATIVE.value
    variant: str = Variant.GROUPED.value
    text_mode: str = TextMode.FULL_TEXT.value
    random_batch_size: int = 0  # 0: use the environment's regions_per_viewpoint
    restrict_to_valid: bool = False  # score only valid goal viewpoints (oracle analysis)
    seed: int = 0


@dataclass
class Trajectory:
    viewpoint_ids: list
    length_m: float


@dataclass(frozen=True)
class Prediction:
    viewpoint_id: int
    region_index: int
    score: float


@dataclass
class EpisodeResult:
    episode_id: int
    environment_id: int
    trajectory: Trajectory
    prediction: Prediction
    visited: set
    mode: Mode = Mode.EXPLORE
    scored_candidates: int = 0


class NoCandidates(ValueError):
    pass


def ball(env, start, L):
    """Viewpoints within ``L`` hops of ``start`` (all of them when ``L`` is None)."""
    depth = -1 if L is None or (isinstance(L, float) and math.isinf(L)) else int(L)
    hops = env.graph.hops_from([start], depth)
    return {int(v) for v in np.flatnonzero(hops >= 0)}


def frontier_explore(env, start, L):
    """Visit every viewpoint within ``L`` hops, always heading to the nearest unvisited one.

    Nearest is by hop count through the explorable ball, ties to the lowest id;
    travel follows a BFS path whose neighbours are expanded in id order.
    """
    if L is not None and L < 0:
        raise ValueError("L must be >= 0")
    region = ball(env, start, L)
    visited = {start}
    traj = [start]
    current = start
    vps = env.graph.viewpoints
    while len(visited) < len(region):
        parent = {current: None}
        hop = {current: 0}
        queue = deque([current])
        best = None
        while queue:
            u = queue.popleft()
            if best is not None and hop[u] >= best[0]:
                break
            for v in sorted(vps[u].neighbor_ids):
                if v in region and v not in parent:
                    parent[v] = u
                    hop[v] = hop[u] + 1
                    queue.append(v)
                    if v not in visited and (best is None or (hop[v], v) < best):
                        best = (hop[v], v)
        target = best[1]
        path = [target]
        while parent[path[-1]] is not None:
            path.append(parent[path[-1]])
        path.reverse()
        traj.extend(path[1:])
        visited.update(path)
        current = target
    return Trajectory(traj, path_length(env.graph, traj)), visited


def _argmax_table(table):
    """Per-viewpoint argmax, then global argmax over viewpoint maxima; ties to lowest ids."""
    per_vp = {}
    for (vid, ridx), s in table.items():
        cur = per_vp.get(vid)
        if cur is None or s > cur[1] or (s == cur[1] and ridx < cur[0]):
            per_vp[vid] = (ridx, s)
    best = None
    for vid, (ridx, s) in per_vp.items():
        if best is None or s > best[2] or (s == best[2] and vid < best[0]):
            best = (vid, ridx, s)
    return Prediction(int(best[0]), int(best[1]), float(best[2]))


def infer_target(params, instr, env, visited, k_context, include_context_regions=True,
                 coord_frame=CoordFrame.VIEWPOINT_RELATIVE, start_viewpoint_id=None):
    """Score each visited viewpoint as its own batch; returns ``(Prediction, ScoreTable)``.

    The ScoreTable maps ``(viewpoint_id, region_index)`` to the score of every
    scored candidate proposal.
    """
    table = {}
    for vid in visited:
        batch = assemble_batch(instr, vid, env, k_context, include_context_regions, coord_frame, start_viewpoint_id)
        if not batch.candidate_mask.any():
            continue
        scores = forward(params, batch)
        for row in np.flatnonzero(batch.candidate_mask):
            table[(int(vid), int(batch.region_index[row]))] = float(scores[row])
    if not table:
        raise NoCandidates("no candidate region in any visited viewpoint")
    return _argmax_table(table), table


def random_batch_infer(params, instr, env, visited, batch_size, seed=0, include_context_regions=True,
                       coord_frame=CoordFrame.VIEWPOINT_RELATIVE, start_viewpoint_id=None):
    """Score regions in shuffled fixed-size batches that ignore viewpoint boundaries.

    Each row keeps its own positional encoding; batches carry no neighbourhood
    context rows because they belong to no single viewpoint.
    """
    vids, ridx, feats, pes, cands = [], [], [], [], []
    for vid in sorted(visited):
        sel, f, pe, cand = region_rows(env, vid, include_context_regions, coord_frame, start_viewpoint_id)
        vids.append(np.full(len(sel), vid))
        ridx.append(sel)
        feats.append(f)
        pes.append(pe)
        cands.append(cand)
    vids, ridx = np.concatenate(vids), np.concatenate(ridx)
    feats, pes, cands = np.vstack(feats), np.vstack(pes), np.concatenate(cands)
    order = np.random.default_rng([seed, 31337]).permutation(len(vids))
    text = encode_text(instr)
    ctx = np.zeros((0, lexicon.FEATURE_DIM))
    table = {}
    for s in range(0, len(order), batch_size):
        idx = order[s:s + batch_size]
        batch = ViewpointBatch(text, feats[idx], pes[idx], ctx, cands[idx], int(vids[idx[0]]), ridx[idx], vids[idx])
        if not batch.candidate_mask.any():
            continue
        scores = forward(params, batch)
        for row in np.flatnonzero(batch.candidate_mask):
            table[(int(batch.region_viewpoint_ids[row]), int(batch.region_index[row]))] = float(scores[row])
    if not table:
        raise NoCandidates("no candidate region in any visited viewpoint")
    return _argmax_table(table), table


def two_step_infer(params, instr, env, visited, k_context, include_context_regions=True,
                   coord_frame=CoordFrame.VIEWPOINT_RELATIVE, start_viewpoint_id=None):
    """Choose a viewpoint from one batch of per-viewpoint average features, then its best region."""
    vids = sorted(v for v in visited
                  if region_rows(env, v, include_context_regions, coord_frame, start_viewpoint_id)[3].any())
    if not vids:
        raise NoCandidates("no candidate region in any visited viewpoint")
    feats, pes = [], []
    for vid in vids:
        _, f, pe, _ = region_rows(env, vid, include_context_regions, coord_frame, start_viewpoint_id)
        feats.append(f.mean(axis=0))
        pes.append(pe.mean(axis=0))
    batch = ViewpointBatch(encode_text(instr), np.array(feats), np.array(pes), np.zeros((0, lexicon.FEATURE_DIM)),
                           np.ones(len(vids), dtype=bool), vids[0], np.zeros(len(vids), dtype=np.int64),
                           np.array(vids, dtype=np.int64))
    scores = forward(params, batch)
    best = vids[int(np.argmax(scores))]  # argmax returns the first (lowest id) maximum
    pred, _ = infer_target(params, instr, env, [best], k_context, include_context_regions, coord_frame,
                           start_viewpoint_id)
    return pred


def predict(params, instr, env, visited, start_viewpoint_id, cfg):
    """Dispatch on ``cfg.variant``; returns ``(Prediction, number of scored candidates)``."""
    variant = Variant.parse(cfg.variant)
    frame = CoordFrame.parse(cfg.coord_frame)
    if variant is Variant.GROUPED:
        pred, table = infer_target(params, instr, env, sorted(visited), cfg.k_context, cfg.include_context_regions,
                                   frame, start_viewpoint_id)
        return pred, len(table)
    if variant is Variant.RANDOM_BATCHES:
        size = cfg.random_batch_size or env.params.regions_per_viewpoint
        pred, table = random_batch_infer(params, instr, env, visited, size, cfg.seed, cfg.include_context_regions,
                                         frame, start_viewpoint_id)
        return pred, len(table)
    pred = two_step_infer(params, instr, env, visited, cfg.k_context, cfg.include_context_regions, frame,
                          start_viewpoint_id)
    return pred, 0


def run_episode(env, episode, params, mode=Mode.EXPLORE, L=None, k_context=None, cfg=None):
    """Explore, infer and walk to the predicted viewpoint.

    Explore mode charges the whole frontier walk plus the shortest path from its
    end to the prediction; pre-explored mode only charges start -> prediction.
    """
    cfg = cfg or InferenceConfig()
    if k_context is not None:
        cfg = replace(cfg, k_context=k_context)
    mode = Mode.parse(mode)
    start = episode.start_viewpoint_id
    explore_traj, visited = frontier_explore(env, start, L)
    scored = visited
    if cfg.restrict_to_valid:
        valid = env.object(episode.target_object_id).valid_viewpoint_ids
        scored = (visited & valid) or set(valid)
    instr = mask_instruction(episode.instruction, cfg.text_mode)
    pred, n_scored = predict(params, instr, env, scored, start, cfg)
    if mode is Mode.EXPLORE:
        tail, _ = shortest_path(env.graph, explore_traj.viewpoint_ids[-1], pred.viewpoint_id)
        ids = explore_traj.viewpoint_ids + tail[1:]
    else:
        ids, _ = shortest_path(env.graph, start, pred.viewpoint_id)
    return EpisodeResult(episode.id, env.id, Trajectory(ids, path_length(env.graph, ids)), pred,
                         set(visited) | set(scored), mode, n_scored)


# ---------------------------------------------------------------- serialization

RESULTS_SCHEMA_VERSION = 1


def result_to_dict(res):
    return {
        "episode_id": res.episode_id,
        "environment_id": res.environment_id,
        "trajectory": list(res.trajectory.viewpoint_ids),
        "tl": res.trajectory.length_m,
        "prediction": {"viewpoint_id": res.prediction.viewpoint_id, "region_index": res.prediction.region_index,
                       "score": res.prediction.score},
        "visited": sorted(res.visited),
        "mode": res.mode.value,
        "scored_candidates": res.scored_candidates,
    }


def result_from_dict(d):
    p = d["prediction"]
    return EpisodeResult(d["episode_id"], d["environment_id"], Trajectory(list(d["trajectory"]), d["tl"]),
                         Prediction(p["viewpoint_id"], p["region_index"], p["score"]), set(d["visited"]),
                         Mode(d["mode"]), d.get("scored_candidates", 0))


def results_to_dict(results, meta=None):
    return {"schema_version": RESULTS_SCHEMA_VERSION, "kind": "episode_results", "meta": meta or {},
            "results": [result_to_dict(r) for r in results]}


def results_from_dict(d):
    from .world import check_schema

    check_schema(d, "episode_results")
    return [result_from_dict(r) for r in d["results"]]
