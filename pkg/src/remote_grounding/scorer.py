"""Region-vs-language scorer: 3D positional encodings, one attention block over a
viewpoint's regions plus neighbourhood context rows, text-conditioned sigmoid head.

Every parameter gradient is written out by hand (``loss_and_grad``); the test
suite checks them against central finite differences.
"""
from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import kernels, lexicon
from .language import MAX_INSTRUCTION_LENGTH, PAD, TextMode, default_vocabulary, mask_instruction

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
LOGIT_CLAMP = 30.0
IOU_THRESHOLD = 0.5


class CoordFrame(enum.Enum):
    VIEWPOINT_RELATIVE = "viewpoint_relative"
    START_RELATIVE = "start_relative"
    ABSOLUTE = "absolute"
    NONE = "none"

    @classmethod
    def parse(cls, value):
        return value if isinstance(value, cls) else cls(value)


@dataclass(frozen=True)
class PosEnc4:
    dx: float
    dy: float
    dz: float
    r: float

    def as_array(self):
        return np.array([self.dx, self.dy, self.dz, self.r])


def positional_encoding(region, viewpoint_pos):
    d = np.asarray(region.center, dtype=np.float64) - np.asarray(viewpoint_pos, dtype=np.float64)
    return PosEnc4(float(d[0]), float(d[1]), float(d[2]), float(region.radius))


def _posenc_rows(centers, radii, origin):
    out = np.empty((len(radii), 4))
    out[:, :3] = centers - origin
    out[:, 3] = radii
    return out


@dataclass
class ViewpointBatch:
    text_ids: np.ndarray  # (T_w,) padded with PAD
    region_features: np.ndarray  # (T_v, d_v)
    region_posenc: np.ndarray  # (T_v, 4)
    context_features: np.ndarray  # (K, d_v)
    candidate_mask: np.ndarray  # (T_v,) bool
    origin_viewpoint_id: int
    region_index: np.ndarray  # (T_v,) row -> index into that viewpoint's proposals
    region_viewpoint_ids: np.ndarray = None  # (T_v,) viewpoint each row came from

    def __post_init__(self):
        n = len(self.region_features)
        if self.region_viewpoint_ids is None:
            self.region_viewpoint_ids = np.full(n, self.origin_viewpoint_id, dtype=np.int64)
        for name in ("region_posenc", "candidate_mask", "region_index", "region_viewpoint_ids"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} has {len(getattr(self, name))} rows, expected {n}")

    @property
    def n_regions(self):
        return len(self.region_features)


def encode_text(instr, max_len=MAX_INSTRUCTION_LENGTH):
    ids = np.full(max_len, PAD, dtype=np.int64)
    toks = list(instr.tokens)[:max_len]
    ids[: len(toks)] = toks
    return ids


def _region_selection(env, viewpoint_id, include_context_regions):
    key = ("sel", viewpoint_id, include_context_regions)
    sel = env._cache.get(key)
    if sel is None:
        r = env.regions[viewpoint_id]
        sel = np.arange(len(r)) if include_context_regions else np.flatnonzero(r.candidate)
        env._cache[key] = sel
    return sel


def neighborhood_features(env, k_context, include_context_regions=True):
    """Per-viewpoint ``(neighbour_ids (n, k), mean_features (n, d_v))``, cached on the environment."""
    key = ("nbhd", k_context, include_context_regions)
    hit = env._cache.get(key)
    if hit is not None:
        return hit
    n = len(env.graph)
    means = np.zeros((n, lexicon.FEATURE_DIM))
    for vid in range(n):
        sel = _region_selection(env, vid, include_context_regions)
        if len(sel):
            means[vid] = env.regions[vid].features[sel].mean(axis=0)
    k = min(k_context, n)
    pos = env.graph.positions
    nbrs = np.zeros((n, k), dtype=np.int64)
    for vid in range(n):
        d = np.linalg.norm(pos - pos[vid], axis=1)
        nbrs[vid] = np.lexsort((np.arange(n), d))[:k]
    env._cache[key] = (nbrs, means)
    return nbrs, means


def _frame_origin(env, viewpoint_id, coord_frame, start_viewpoint_id):
    if coord_frame is CoordFrame.VIEWPOINT_RELATIVE:
        return env.graph.positions[viewpoint_id]
    if coord_frame is CoordFrame.START_RELATIVE:
        if start_viewpoint_id is None:
            raise ValueError("start-relative coordinates need start_viewpoint_id")
        return env.graph.positions[start_viewpoint_id]
    return np.zeros(3)


def region_rows(env, viewpoint_id, include_context_regions=True, coord_frame=CoordFrame.VIEWPOINT_RELATIVE,
                start_viewpoint_id=None):
    """``(region_index, features, posenc, candidate)`` for one viewpoint's proposals."""
    coord_frame = CoordFrame.parse(coord_frame)
    r = env.regions[viewpoint_id]
    sel = _region_selection(env, viewpoint_id, include_context_regions)
    if coord_frame is CoordFrame.NONE:
        pe = np.zeros((len(sel), 4))
    else:
        pe = _posenc_rows(r.centers[sel], r.radii[sel], _frame_origin(env, viewpoint_id, coord_frame, start_viewpoint_id))
    return sel, r.features[sel], pe, r.candidate[sel]


def assemble_batch(instr, viewpoint_id, env, k_context, include_context_regions=True,
                   coord_frame=CoordFrame.VIEWPOINT_RELATIVE, start_viewpoint_id=None):
    if viewpoint_id not in env.regions:
        raise KeyError(f"unknown viewpoint {viewpoint_id}")
    sel, feats, pe, cand = region_rows(env, viewpoint_id, include_context_regions, coord_frame, start_viewpoint_id)
    if k_context > 0:
        nbrs, means = neighborhood_features(env, k_context, include_context_regions)
        ctx = means[nbrs[viewpoint_id]]
    else:
        ctx = np.zeros((0, lexicon.FEATURE_DIM))
    return ViewpointBatch(encode_text(instr), feats, pe, ctx, cand.copy(), viewpoint_id, sel)


# ---------------------------------------------------------------- parameters

PARAM_NAMES = ("E", "Wr", "br", "Wp", "Wc", "bc", "Wq", "Wk", "Wv", "Wo", "Wt", "bt", "ws", "bs")


@dataclass
class ScorerParams:
    """All learned weights. ``arrays`` maps each name in ``PARAM_NAMES`` to a float64 array."""

    arrays: dict
    vocab_size: int
    d_model: int
    d_feature: int

    @classmethod
    def shapes(cls, vocab_size, d_model, d_feature):
        d, dv = d_model, d_feature
        return {"E": (vocab_size, d), "Wr": (dv, d), "br": (d,), "Wp": (4, d), "Wc": (dv, d), "bc": (d,),
                "Wq": (d, d), "Wk": (d, d), "Wv": (d, d), "Wo": (d, d), "Wt": (d, d), "bt": (d,),
                "ws": (d,), "bs": (1,)}

    @classmethod
    def zeros(cls, vocab_size=None, d_model=32, d_feature=lexicon.FEATURE_DIM):
        vocab_size = vocab_size or len(default_vocabulary())
        arrays = {k: np.zeros(s) for k, s in cls.shapes(vocab_size, d_model, d_feature).items()}
        return cls(arrays, vocab_size, d_model, d_feature)

    @classmethod
    def init(cls, seed, vocab_size=None, d_model=32, d_feature=lexicon.FEATURE_DIM, scale=1.0):
        vocab_size = vocab_size or len(default_vocabulary())
        rng = np.random.default_rng([seed, 104729])
        arrays = {}
        for name, shape in cls.shapes(vocab_size, d_model, d_feature).items():
            if name.startswith("b"):
                arrays[name] = np.zeros(shape)
            elif name == "E":
                arrays[name] = rng.normal(0.0, scale, shape)
            elif name == "Wp":
                # positions are in meters; a small start keeps the tanh out of saturation
                arrays[name] = rng.normal(0.0, 0.02 * scale, shape)
            elif name == "ws":
                arrays[name] = rng.normal(0.0, scale / math.sqrt(d_model), shape)
            else:
                arrays[name] = rng.normal(0.0, scale / math.sqrt(shape[0]), shape)
        return cls(arrays, vocab_size, d_model, d_feature)

    def copy(self):
        return ScorerParams({k: v.copy() for k, v in self.arrays.items()}, self.vocab_size, self.d_model,
                            self.d_feature)

    def __getitem__(self, name):
        return self.arrays[name]

    def flat(self):
        return np.concatenate([self.arrays[k].ravel() for k in PARAM_NAMES])

    def to_dict(self, config=None):
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "scorer_params",
            "vocab_size": self.vocab_size,
            "d_model": self.d_model,
            "d_feature": self.d_feature,
            "config": config or {},
            "shapes": {k: list(self.arrays[k].shape) for k in PARAM_NAMES},
            "arrays": {k: self.arrays[k].ravel().tolist() for k in PARAM_NAMES},
        }

    @classmethod
    def from_dict(cls, d):
        from .world import check_schema

        check_schema(d, "scorer_params")
        expected = cls.shapes(d["vocab_size"], d["d_model"], d["d_feature"])
        arrays = {}
        for k in PARAM_NAMES:
            shape = tuple(d["shapes"][k])
            if shape != expected[k]:
                raise ValueError(f"parameter {k} has shape {shape}, expected {expected[k]}")
            arrays[k] = np.array(d["arrays"][k], dtype=np.float64).reshape(shape)
        return cls(arrays, d["vocab_size"], d["d_model"], d["d_feature"])

    def save(self, path, config=None):
        with open(path, "w") as fh:
            json.dump(self.to_dict(config), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


# ---------------------------------------------------------------- model


def _check_shapes(params, batch):
    if batch.region_features.ndim != 2 or batch.region_features.shape[1] != params.d_feature:
        raise ValueError(f"region_features must be (T_v, d_v={params.d_feature}), got {batch.region_features.shape}")
    if batch.context_features.ndim != 2 or batch.context_features.shape[1] != params.d_feature:
        raise ValueError(f"context_features must be (K, d_v={params.d_feature}), got {batch.context_features.shape}")
    if batch.region_posenc.shape != (batch.n_regions, 4):
        raise ValueError(f"region_posenc must be (T_v={batch.n_regions}, 4), got {batch.region_posenc.shape}")
    if batch.text_ids.max(initial=0) >= params.vocab_size:
        raise ValueError(f"text id {batch.text_ids.max()} >= vocab_size {params.vocab_size}")


def _forward(params, batch):
    _check_shapes(params, batch)
    p = params.arrays
    d = params.d_model
    nr = batch.n_regions
    X, P, C = batch.region_features, batch.region_posenc, batch.context_features
    H0 = np.vstack([X @ p["Wr"] + p["br"] + P @ p["Wp"], C @ p["Wc"] + p["bc"]])
    Q = H0 @ p["Wq"]
    K = H0 @ p["Wk"]
    V = H0 @ p["Wv"]
    S = (Q @ K.T) * (1.0 / math.sqrt(d))
    S = S - S.max(axis=1, keepdims=True)
    alpha = np.exp(S)
    alpha /= alpha.sum(axis=1, keepdims=True)
    A = alpha @ V
    Hh = np.tanh(H0 + A @ p["Wo"])
    tok = batch.text_ids[batch.text_ids != PAD]
    u = p["E"][tok].mean(axis=0) if len(tok) else np.zeros(d)
    g = u @ p["Wt"] + p["bt"]
    raw = (Hh[:nr] * g) @ p["ws"] + p["bs"][0]
    logits = np.clip(raw, -LOGIT_CLAMP, LOGIT_CLAMP)
    cache = dict(H0=H0, Q=Q, K=K, V=V, alpha=alpha, A=A, Hh=Hh, tok=tok, u=u, g=g, raw=raw)
    return logits, cache


def _sigmoid(z):
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))


def forward(params, batch):
    """Per-region match scores in (0, 1); non-candidate rows are scored too."""
    logits, _ = _forward(params, batch)
    return _sigmoid(logits)


def loss_and_grad(params, batch, labels):
    """Mean binary cross-entropy over candidate rows and its exact gradient."""
    labels = np.asarray(labels, dtype=np.float64)
    if labels.shape != (batch.n_regions,):
        raise ValueError(f"labels must have length T_v={batch.n_regions}, got {labels.shape}")
    cand = batch.candidate_mask
    n_c = int(cand.sum())
    if n_c == 0:
        return 0.0, {k: np.zeros_like(v) for k, v in params.arrays.items()}
    logits, c = _forward(params, batch)
    z, y = logits[cand], labels[cand]
    # softplus(z) - y*z, stable for either sign
    loss = float(np.mean(np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z))) - y * z))

    p = params.arrays
    d = params.d_model
    nr = batch.n_regions
    dl = np.zeros(nr)
    dl[cand] = (_sigmoid(z) - y) / n_c
    dl *= np.abs(c["raw"]) < LOGIT_CLAMP
    Hh, g, H0, alpha, V = c["Hh"], c["g"], c["H0"], c["alpha"], c["V"]

    grads = {"bs": np.array([dl.sum()])}
    Hr = Hh[:nr]
    grads["ws"] = (dl[:, None] * Hr * g).sum(axis=0)
    dg = (dl[:, None] * Hr * p["ws"]).sum(axis=0)
    grads["Wt"] = np.outer(c["u"], dg)
    grads["bt"] = dg
    du = p["Wt"] @ dg
    dE = np.zeros_like(p["E"])
    if len(c["tok"]):
        np.add.at(dE, c["tok"], du / len(c["tok"]))
    grads["E"] = dE

    dHh = np.zeros_like(Hh)
    dHh[:nr] = dl[:, None] * (g * p["ws"])
    dZ = dHh * (1.0 - Hh * Hh)
    grads["Wo"] = c["A"].T @ dZ
    dA = dZ @ p["Wo"].T
    dalpha = dA @ V.T
    dV = alpha.T @ dA
    dS = alpha * (dalpha - (dalpha * alpha).sum(axis=1, keepdims=True))
    dS *= 1.0 / math.sqrt(d)
    dQ = dS @ c["K"]
    dK = dS.T @ c["Q"]
    grads["Wq"] = H0.T @ dQ
    grads["Wk"] = H0.T @ dK
    grads["Wv"] = H0.T @ dV
    dH0 = dZ + dQ @ p["Wq"].T + dK @ p["Wk"].T + dV @ p["Wv"].T
    dR, dC = dH0[:nr], dH0[nr:]
    grads["Wr"] = batch.region_features.T @ dR
    grads["br"] = dR.sum(axis=0)
    grads["Wp"] = batch.region_posenc.T @ dR
    grads["Wc"] = batch.context_features.T @ dC
    grads["bc"] = dC.sum(axis=0)
    return loss, grads


# ---------------------------------------------------------------- labels and sampling


def region_labels(env, viewpoint_id, target_object_id):
    """IoU >= 0.5 against the target box, for candidate proposals at a viewpoint."""
    r = env.regions[viewpoint_id]
    obj = env.object(target_object_id)
    iou = kernels.box_iou(r.box_min, r.box_max, obj.box_min, obj.box_max)
    return (iou >= IOU_THRESHOLD) & r.candidate


def sample_training_viewpoint(episode, env, R, rng, stats=None):
    """A negative viewpoint with probability ``R`` (all-false labels), else a random valid one."""
    if not 0.0 <= R <= 1.0:
        raise ValueError(f"R must be in [0, 1], got {R}")
    valid = sorted(env.object(episode.target_object_id).valid_viewpoint_ids)
    if rng.random() < R:
        valid_set = set(valid)
        negatives = [v for v in range(len(env.graph)) if v not in valid_set]
        if negatives:
            vid = negatives[rng.integers(len(negatives))]
            if stats is not None:
                stats["negative"] = stats.get("negative", 0) + 1
            return vid, np.zeros(len(env.regions[vid]), dtype=bool)
        if stats is not None:
            stats["fallback"] = stats.get("fallback", 0) + 1
    vid = valid[rng.integers(len(valid))]
    if stats is not None:
        stats["positive"] = stats.get("positive", 0) + 1
    return vid, region_labels(env, vid, episode.target_object_id)


# ---------------------------------------------------------------- training


@dataclass
class TrainConfig:
    epochs: int = 250
    batch_episodes: int = 20
    optimizer: str = "adam"  # "adam" or "sgd" (momentum SGD)
    lr: float = 1e-2
    momentum: float = 0.9  # first-moment decay for adam
    beta2: float = 0.999
    weight_decay: float = 1e-4
    warmup_frac: float = 0.1
    R: float = 0.8
    seed: int = 0
    d_model: int = 32
    init_scale: float = 1.0
    grad_clip: float = 0.0
    k_context: int = 8
    include_context_regions: bool = True
    coord_frame: str = CoordFrame.VIEWPOINT_RELATIVE.value
    env_dropout: float = 0.0
    bootstrap: bool = False
    text_mode: str = TextMode.FULL_TEXT.value

    def to_dict(self):
        return asdict(self)

    def validate(self):
        bad = []
        if self.optimizer not in OPTIMIZERS:
            bad.append(f"optimizer must be one of {OPTIMIZERS}")
        if not 0.0 <= self.R <= 1.0:
            bad.append("R must be in [0, 1]")
        if self.epochs < 0 or self.batch_episodes < 1:
            bad.append("epochs must be >= 0 and batch_episodes >= 1")
        if not 0.0 <= self.env_dropout < 1.0:
            bad.append("env_dropout must be in [0, 1)")
        if self.lr <= 0:
            bad.append("lr must be > 0")
        if bad:
            raise ValueError("invalid training config: " + "; ".join(bad))
        CoordFrame.parse(self.coord_frame)
        TextMode.parse(self.text_mode)
        return self


OPTIMIZERS = ("adam", "sgd")


class TrainingDiverged(RuntimeError):
    pass


def lr_at(step, total_steps, base_lr, warmup_frac):
    """Linear warmup over ``warmup_frac`` of the steps, then linear decay to zero."""
    warm = max(1, int(round(warmup_frac * total_steps)))
    if step < warm:
        return base_lr * (step + 1) / warm
    return base_lr * max(0.0, (total_steps - step) / max(1, total_steps - warm))


def _dropout_rows(rng, batch, envs, rate, coord_frame):
    """Replace rows with random proposals from other training viewpoints (labels become false).

    Foreign rows are encoded relative to their own viewpoint unless the frame is
    absolute or disabled.
    """
    n = batch.n_regions
    replace = rng.random(n) < rate
    if not replace.any():
        return batch, replace
    feats = batch.region_features.copy()
    pe = batch.region_posenc.copy()
    env_ids = sorted(envs)
    for i in np.flatnonzero(replace):
        env = envs[env_ids[rng.integers(len(env_ids))]]
        vid = int(rng.integers(len(env.graph)))
        r = env.regions[vid]
        j = int(rng.integers(len(r)))
        feats[i] = r.features[j]
        if coord_frame is CoordFrame.NONE:
            pe[i] = 0.0
        else:
            origin = np.zeros(3) if coord_frame is CoordFrame.ABSOLUTE else env.graph.positions[vid]
            pe[i, :3] = r.centers[j] - origin
            pe[i, 3] = r.radii[j]
    out = ViewpointBatch(batch.text_ids, feats, pe, batch.context_features, batch.candidate_mask,
                         batch.origin_viewpoint_id, batch.region_index, batch.region_viewpoint_ids)
    return out, replace


def training_batch(episode, env, envs, cfg, rng, stats=None):
    """Sample a viewpoint for ``episode`` and build its (batch, labels) with the configured tricks."""
    frame = CoordFrame.parse(cfg.coord_frame)
    instr = mask_instruction(episode.instruction, cfg.text_mode)
    vid, labels = sample_training_viewpoint(episode, env, cfg.R, rng, stats)
    batch = assemble_batch(instr, vid, env, cfg.k_context, cfg.include_context_regions, frame,
                           episode.start_viewpoint_id)
    y = labels[batch.region_index]
    if cfg.bootstrap:
        idx = rng.integers(batch.n_regions, size=batch.n_regions)
        batch = ViewpointBatch(batch.text_ids, batch.region_features[idx], batch.region_posenc[idx],
                               batch.context_features, batch.candidate_mask[idx], batch.origin_viewpoint_id,
                               batch.region_index[idx], batch.region_viewpoint_ids[idx])
        y = y[idx]
    if cfg.env_dropout > 0:
        batch, replaced = _dropout_rows(rng, batch, envs, cfg.env_dropout, frame)
        y = y & ~replaced
    return batch, y


def train(train_episodes, envs, hyper=None, params=None, progress=None):
    """Fit the scorer; returns ``(params, per-epoch mean loss list)``.

    ``envs`` maps environment id to Environment. Training is a deterministic
    function of ``hyper.seed`` and the inputs.
    """
    cfg = (hyper or TrainConfig()).validate()
    if not train_episodes:
        raise ValueError("no training episodes")
    params = params.copy() if params is not None else ScorerParams.init(cfg.seed, d_model=cfg.d_model,
                                                                        scale=cfg.init_scale)
    rng = np.random.default_rng([cfg.seed, 15485863])
    n = len(train_episodes)
    steps_per_epoch = math.ceil(n / cfg.batch_episodes)
    total = steps_per_epoch * cfg.epochs
    velocity = {k: np.zeros_like(v) for k, v in params.arrays.items()}
    second = {k: np.zeros_like(v) for k, v in params.arrays.items()}
    trace = []
    stats = {}
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for s in range(steps_per_epoch):
            chunk = order[s * cfg.batch_episodes:(s + 1) * cfg.batch_episodes]
            acc = {k: np.zeros_like(v) for k, v in params.arrays.items()}
            batch_loss = 0.0
            for i in chunk:
                ep = train_episodes[i]
                env = envs[ep.environment_id]
                batch, y = training_batch(ep, env, envs, cfg, rng, stats)
                loss, grads = loss_and_grad(params, batch, y)
                batch_loss += loss
                for k in acc:
                    acc[k] += grads[k]
            if not math.isfinite(batch_loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, step {step}")
            scale = 1.0 / len(chunk)
            norm = math.sqrt(sum(float(np.sum(g * g)) for g in acc.values())) * scale
            if cfg.grad_clip > 0 and norm > cfg.grad_clip:
                scale *= cfg.grad_clip / norm
            lr = lr_at(step, total, cfg.lr, cfg.warmup_frac)
            if cfg.optimizer == "sgd":
                for k, w in params.arrays.items():
                    g = acc[k] * scale + cfg.weight_decay * w
                    velocity[k] = cfg.momentum * velocity[k] + g
                    w -= lr * velocity[k]
            else:
                # bias-corrected adam with decoupled weight decay
                b1, b2, t = cfg.momentum, cfg.beta2, step + 1
                for k, w in params.arrays.items():
                    g = acc[k] * scale
                    velocity[k] = b1 * velocity[k] + (1.0 - b1) * g
                    second[k] = b2 * second[k] + (1.0 - b2) * g * g
                    m_hat = velocity[k] / (1.0 - b1 ** t)
                    v_hat = second[k] / (1.0 - b2 ** t)
                    w -= lr * (m_hat / (np.sqrt(v_hat) + 1e-8) + cfg.weight_decay * w)
            epoch_loss += batch_loss
            step += 1
        trace.append(epoch_loss / n)
        if progress is not None:
            progress(epoch, trace[-1])
        log.debug("epoch %d loss %.5f", epoch, trace[-1])
    for k, w in params.arrays.items():
        if not np.all(np.isfinite(w)):
            raise TrainingDiverged(f"non-finite parameter {k} after training")
    return params, trace
