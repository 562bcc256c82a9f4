import itertools
from collections import deque
from dataclasses import replace
from types import SimpleNamespace

import numpy as np
import pytest

from remote_grounding import agent
from remote_grounding.agent import (
    InferenceConfig, Mode, NoCandidates, ball, frontier_explore, infer_target, random_batch_infer, results_from_dict,
    results_to_dict, run_episode, two_step_infer,
)
from remote_grounding.language import generate_instruction
from remote_grounding.scorer import ScorerParams, assemble_batch, forward
from remote_grounding.world import NavGraph, Viewpoint, make_episodes


def random_graph_env(seed, n=None):
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(2, 25))
    pos = rng.uniform(0, 20, size=(n, 3))
    perm = rng.permutation(n)
    edges = {tuple(sorted((int(perm[i]), int(perm[rng.integers(i)])))) for i in range(1, n)}
    for a, b in itertools.combinations(range(n), 2):
        if rng.random() < 1.5 / n:
            edges.add((a, b))
    return SimpleNamespace(graph=NavGraph([Viewpoint(i, pos[i], 0) for i in range(n)], sorted(edges)))


def bfs_ball(graph, start, L):
    hops = {start: 0}
    q = deque([start])
    while q:
        u = q.popleft()
        for v in graph.viewpoints[u].neighbor_ids:
            if v not in hops:
                hops[v] = hops[u] + 1
                q.append(v)
    return {v for v, h in hops.items() if L is None or h <= L}, max(hops.values())


def assert_valid_walk(graph, traj):
    for a, b in zip(traj.viewpoint_ids, traj.viewpoint_ids[1:]):
        assert b in graph.viewpoints[a].neighbor_ids
    total = sum(graph.edge_length[(a, b)] for a, b in zip(traj.viewpoint_ids, traj.viewpoint_ids[1:]))
    assert traj.length_m == pytest.approx(total, abs=1e-12)


def test_explore_zero_radius(env):
    traj, visited = frontier_explore(env, 5, 0)
    assert visited == {5} and traj.viewpoint_ids == [5] and traj.length_m == 0.0


def test_explore_rejects_negative_radius(env):
    with pytest.raises(ValueError):
        frontier_explore(env, 0, -1)


@pytest.mark.parametrize("seed", range(20))
def test_explore_matches_bfs_ball(seed):
    e = random_graph_env(seed)
    _, diameter = bfs_ball(e.graph, 0, None)
    for L in (0, 1, 3, diameter):
        traj, visited = frontier_explore(e, 0, L)
        expected, _ = bfs_ball(e.graph, 0, L)
        assert visited == expected == set(traj.viewpoint_ids)
        assert traj.viewpoint_ids[0] == 0
        assert_valid_walk(e.graph, traj)


def test_explore_saturates_and_is_monotone(env):
    _, diameter = bfs_ball(env.graph, 0, None)
    assert frontier_explore(env, 0, diameter)[1] == set(range(len(env.graph)))
    assert frontier_explore(env, 0, None)[1] == set(range(len(env.graph)))
    prev = set()
    for L in range(diameter + 1):
        cur = ball(env, 0, L)
        assert prev <= cur
        prev = cur


def test_explore_visits_nearest_first():
    # path graph 0-1-2 with a branch 0-3: from 1, nearest unvisited are 0 and 2 (tie -> 0), then 3, then 2
    pos = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0], [-1, 0, 0]], dtype=float)
    g = NavGraph([Viewpoint(i, pos[i], 0) for i in range(4)], [(0, 1), (1, 2), (0, 3)])
    traj, _ = frontier_explore(SimpleNamespace(graph=g), 1, None)
    assert traj.viewpoint_ids == [1, 0, 3, 0, 1, 2]


def test_explore_is_deterministic(env):
    assert frontier_explore(env, 3, 4) == frontier_explore(env, 3, 4)


def _scores_table(params, instr, env, visited):
    table = {}
    for vid in visited:
        b = assemble_batch(instr, vid, env, 8)
        s = forward(params, b)
        for row in np.flatnonzero(b.candidate_mask):
            table[(vid, int(b.region_index[row]))] = float(s[row])
    return table


def test_infer_matches_flat_scan(env, episodes):
    p = ScorerParams.init(4)
    for ep in episodes[:5]:
        visited = ball(env, ep.start_viewpoint_id, 3)
        pred, table = infer_target(p, ep.instruction, env, sorted(visited), 8)
        flat = _scores_table(p, ep.instruction, env, visited)
        assert table == flat
        best = max(flat.items(), key=lambda kv: (kv[1], -kv[0][0], -kv[0][1]))
        assert (pred.viewpoint_id, pred.region_index) == best[0]
        assert pred.viewpoint_id in visited


def test_infer_is_order_invariant(env, episodes):
    p = ScorerParams.init(4)
    ep = episodes[0]
    visited = sorted(ball(env, ep.start_viewpoint_id, 4))
    a, _ = infer_target(p, ep.instruction, env, visited, 8)
    for seed in range(3):
        order = list(np.random.default_rng(seed).permutation(visited))
        b, _ = infer_target(p, ep.instruction, env, order, 8)
        assert a == b


def test_ties_break_to_lowest_ids(env, episodes):
    ep = episodes[0]
    pred, table = infer_target(ScorerParams.zeros(), ep.instruction, env, [9, 4, 7], 8)
    assert set(table.values()) == {0.5}
    first = min(i for i in np.flatnonzero(env.regions[4].candidate))
    assert (pred.viewpoint_id, pred.region_index) == (4, first)


def test_single_candidate_is_predicted(small_env):
    env = small_env
    vid = 2
    saved = env.regions[vid].candidate.copy()
    try:
        env.regions[vid].candidate[:] = False
        env.regions[vid].candidate[5] = True
        env._cache.clear()
        instr = generate_instruction(env, 0, seed=0)
        pred, table = infer_target(ScorerParams.init(0), instr, env, [vid], 4)
        assert (pred.viewpoint_id, pred.region_index) == (vid, 5) and len(table) == 1
        env.regions[vid].candidate[:] = False
        env._cache.clear()
        with pytest.raises(NoCandidates):
            infer_target(ScorerParams.init(0), instr, env, [vid], 4)
    finally:
        env.regions[vid].candidate[:] = saved
        env._cache.clear()


def test_two_step_single_viewpoint_equals_grouped(env, episodes):
    p = ScorerParams.init(1)
    ep = episodes[3]
    a = two_step_infer(p, ep.instruction, env, {6}, 8)
    b, _ = infer_target(p, ep.instruction, env, [6], 8)
    assert a == b


def test_two_step_second_stage_is_region_argmax(env, episodes):
    p = ScorerParams.init(1)
    ep = episodes[3]
    visited = ball(env, ep.start_viewpoint_id, 3)
    pred = two_step_infer(p, ep.instruction, env, visited, 8)
    again, _ = infer_target(p, ep.instruction, env, [pred.viewpoint_id], 8)
    assert pred == again


def test_random_batches_score_every_candidate(env, episodes):
    p = ScorerParams.init(1)
    ep = episodes[4]
    visited = ball(env, ep.start_viewpoint_id, 2)
    _, table = random_batch_infer(p, ep.instruction, env, visited, 32, seed=0)
    expected = {(v, int(i)) for v in visited for i in np.flatnonzero(env.regions[v].candidate)}
    assert set(table) == expected


def test_pre_explored_prediction_at_start_has_zero_length(small_env):
    eps = make_episodes(small_env, 5, seed=0, d_min=0, d_max=0)
    for ep in eps:
        res = run_episode(small_env, ep, ScorerParams.init(0), Mode.PRE_EXPLORED, L=0)
        assert res.trajectory.viewpoint_ids == [ep.start_viewpoint_id]
        assert res.trajectory.length_m == 0.0


def test_explore_tl_at_least_pre_explored(env, episodes):
    p = ScorerParams.init(2)
    for ep in episodes[:10]:
        a = run_episode(env, ep, p, Mode.EXPLORE, L=3)
        b = run_episode(env, ep, p, Mode.PRE_EXPLORED, L=3)
        assert a.prediction == b.prediction
        assert a.trajectory.length_m >= b.trajectory.length_m


def test_episode_trajectories_are_valid(env):
    eps = make_episodes(env, 100, seed=9, d_min=0, d_max=5)
    p = ScorerParams.init(3)
    for i, ep in enumerate(eps):
        mode = Mode.EXPLORE if i % 2 else Mode.PRE_EXPLORED
        res = run_episode(env, ep, p, mode, L=2)
        assert res.trajectory.viewpoint_ids[0] == ep.start_viewpoint_id
        assert res.trajectory.viewpoint_ids[-1] == res.prediction.viewpoint_id
        assert res.prediction.viewpoint_id in res.visited
        assert_valid_walk(env.graph, res.trajectory)


def test_restricted_scoring_uses_valid_viewpoints(env, episodes):
    cfg = InferenceConfig(restrict_to_valid=True)
    for ep in episodes[:10]:
        res = run_episode(env, ep, ScorerParams.init(0), Mode.PRE_EXPLORED, L=None, cfg=cfg)
        assert res.prediction.viewpoint_id in env.object(ep.target_object_id).valid_viewpoint_ids


def test_variants_and_text_modes_run(env, episodes):
    ep = episodes[0]
    for variant in agent.Variant:
        for mode in ("Full Text", "No Nouns"):
            cfg = InferenceConfig(variant=variant.value, text_mode=mode)
            res = run_episode(env, ep, ScorerParams.init(0), Mode.EXPLORE, L=2, cfg=cfg)
            assert res.prediction.viewpoint_id in res.visited


def test_results_round_trip(env, episodes):
    res = [run_episode(env, ep, ScorerParams.init(0), Mode.EXPLORE, L=2) for ep in episodes[:3]]
    back = results_from_dict(results_to_dict(res, {"L": 2}))
    assert back == res


def test_run_episode_is_deterministic(env, episodes):
    cfg = replace(InferenceConfig(), variant="random_batches", seed=3)
    a = run_episode(env, episodes[0], ScorerParams.init(0), Mode.EXPLORE, L=3, cfg=cfg)
    b = run_episode(env, episodes[0], ScorerParams.init(0), Mode.EXPLORE, L=3, cfg=cfg)
    assert a == b
