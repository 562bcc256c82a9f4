import numpy as np

from remote_grounding import lexicon
from remote_grounding.agent import EpisodeResult, Mode, Prediction, Trajectory
from remote_grounding.language import default_vocabulary
from remote_grounding.scorer import PARAM_NAMES, ScorerParams, ViewpointBatch, loss_and_grad
from remote_grounding.world import path_length, shortest_path


def synthetic_results(env, episodes, n, seed):
    """Random walks ending at a random or target-covering prediction, for metric checks."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n):
        ep = episodes[k % len(episodes)]
        ids = [ep.start_viewpoint_id]
        for _ in range(int(rng.integers(0, 6))):
            ids.append(int(rng.choice(sorted(env.graph.viewpoints[ids[-1]].neighbor_ids))))
        obj = env.object(ep.target_object_id)
        if rng.random() < 0.5:
            goal = int(rng.choice(sorted(obj.valid_viewpoint_ids)))
            ids += shortest_path(env.graph, ids[-1], goal)[0][1:]
        end = ids[-1]
        r = env.regions[end]
        own = np.flatnonzero((r.source == obj.id) & r.candidate)
        cands = np.flatnonzero(r.candidate)
        idx = int(own[0]) if len(own) and rng.random() < 0.7 else int(rng.choice(cands))
        out.append(EpisodeResult(ep.id, env.id, Trajectory(ids, path_length(env.graph, ids)),
                                 Prediction(end, idx, float(rng.random())), set(ids), Mode.EXPLORE))
    return out


def random_batch(rng, n_regions=5, n_ctx=3, n_tok=6, d_v=lexicon.FEATURE_DIM):
    vocab = len(default_vocabulary())
    text = np.zeros(24, dtype=np.int64)
    text[:n_tok] = rng.integers(2, vocab, size=n_tok)
    cand = rng.random(n_regions) < 0.7
    cand[0] = True
    return ViewpointBatch(text, rng.normal(size=(n_regions, d_v)), rng.normal(size=(n_regions, 4)),
                          rng.normal(size=(n_ctx, d_v)), cand, 0, np.arange(n_regions))


def fd_max_rel_error(seed):
    """Worst relative error between analytic and central-difference gradients at h=1e-5."""
    rng = np.random.default_rng(seed)
    p = ScorerParams.init(seed, d_model=8)
    for k in p.arrays:
        p.arrays[k] += rng.normal(0, 0.3, size=p.arrays[k].shape)
    b = random_batch(rng, n_regions=int(rng.integers(2, 6)), n_ctx=int(rng.integers(0, 3)))
    y = rng.random(b.n_regions) < 0.5
    _, grads = loss_and_grad(p, b, y)
    h = 1e-5
    worst = 0.0
    for name in PARAM_NAMES:
        w = p.arrays[name]
        for idx in np.ndindex(w.shape):
            if name == "E" and idx[0] not in set(b.text_ids[b.text_ids != 0].tolist()):
                continue  # rows of unused tokens have zero gradient and zero FD
            orig = w[idx]
            w[idx] = orig + h
            lp, _ = loss_and_grad(p, b, y)
            w[idx] = orig - h
            lm, _ = loss_and_grad(p, b, y)
            w[idx] = orig
            fd = (lp - lm) / (2 * h)
            an = grads[name][idx]
            # central differences at h=1e-5 carry ~1e-11 roundoff, so tiny entries get an absolute floor
            worst = max(worst, abs(an - fd) / max(abs(an), abs(fd), 1e-6))
    return worst
