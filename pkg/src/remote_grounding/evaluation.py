"""Navigation / grounding metrics, benchmark datasets and the ablation runner."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import kernels
from .agent import InferenceConfig, Mode, run_episode
from .language import TextMode
from .scorer import ScorerParams, TrainConfig, train
from .world import WorldParams, generate_environment, make_episodes

log = logging.getLogger(__name__)

METRICS = ("TL", "OSR", "SR", "SPL", "RGS", "RGSPL")


# ---------------------------------------------------------------- per-episode judgments


def prediction_iou(result, env, episode):
    r = env.regions[result.prediction.viewpoint_id]
    i = result.prediction.region_index
    obj = env.object(episode.target_object_id)
    return float(kernels.box_iou(r.box_min[i:i + 1], r.box_max[i:i + 1], obj.box_min, obj.box_max)[0])


def _at_goal(env, episode, vid, success_radius):
    obj = env.object(episode.target_object_id)
    if success_radius is None:
        return vid in obj.valid_viewpoint_ids
    return float(np.linalg.norm(env.graph.positions[vid] - obj.center)) <= success_radius


def navigation_success(result, env, episode, success_radius=None):
    """Trajectory ends at a valid goal viewpoint (or within ``success_radius`` meters of the target)."""
    return _at_goal(env, episode, result.trajectory.viewpoint_ids[-1], success_radius)


def oracle_success(result, env, episode, success_radius=None):
    return any(_at_goal(env, episode, v, success_radius) for v in result.trajectory.viewpoint_ids)


def grounding_success(result, env, episode, success_radius=None):
    """IoU >= 0.5 with the target box, chosen from a valid goal viewpoint that ends the trajectory."""
    if result.prediction.viewpoint_id not in env.object(episode.target_object_id).valid_viewpoint_ids:
        return False
    if not navigation_success(result, env, episode, success_radius):
        return False
    return prediction_iou(result, env, episode) >= 0.5


# ---------------------------------------------------------------- aggregate report


@dataclass
class MetricsReport:
    n_episodes: int
    TL: float
    OSR: float
    SR: float
    SPL: float
    RGS: float
    RGSPL: float
    ci: dict = field(default_factory=dict)  # metric -> (lo, hi) bootstrap interval

    def as_dict(self):
        return asdict(self)


def _path_weight(l, p):
    if l == 0.0:
        return 1.0
    return l / max(p, l)


def episode_judgments(results, envs, episodes, success_radius=None):
    """Per-episode ``{TL, OSR, SR, SPL, RGS, RGSPL}`` values, in result order."""
    by_key = {(e.environment_id, e.id): e for e in episodes}
    rows = []
    for res in results:
        ep = by_key[(res.environment_id, res.episode_id)]
        env = envs[res.environment_id]
        sr = navigation_success(res, env, ep, success_radius)
        rgs = grounding_success(res, env, ep, success_radius)
        w = _path_weight(ep.gold_path_length, res.trajectory.length_m)
        rows.append({"TL": res.trajectory.length_m, "OSR": float(oracle_success(res, env, ep, success_radius)),
                     "SR": float(sr), "SPL": float(sr) * w, "RGS": float(rgs), "RGSPL": float(rgs) * w})
    return rows


def bootstrap_ci(values, n_resamples=1000, seed=0, level=0.95):
    values = np.asarray(values, dtype=np.float64)
    rng = np.random.default_rng(seed)
    idx = rng.integers(len(values), size=(n_resamples, len(values)))
    means = values[idx].mean(axis=1)
    a = (1.0 - level) / 2.0
    return float(np.quantile(means, a)), float(np.quantile(means, 1.0 - a))


def compute_metrics(results, envs, episodes, success_radius=None, bootstrap=0):
    """Average the per-episode judgments; ``bootstrap`` > 0 adds percentile intervals."""
    if not results:
        raise ValueError("no episode results to aggregate")
    rows = episode_judgments(results, envs, episodes, success_radius)
    # math.fsum keeps the mean independent of episode order
    means = {m: math.fsum(r[m] for r in rows) / len(rows) for m in METRICS}
    ci = {}
    if bootstrap:
        for m in METRICS:
            ci[m] = bootstrap_ci([r[m] for r in rows], bootstrap)
    return MetricsReport(len(rows), ci=ci, **means)


def format_table(rows, columns, title=None):
    """Aligned text table from a list of dicts."""
    cells = [[str(c) for c in columns]]
    for r in rows:
        cells.append([_fmt(r.get(c, "")) for c in columns])
    widths = [max(len(row[i]) for row in cells) for i in range(len(columns))]
    lines = [title] if title else []
    for k, row in enumerate(cells):
        lines.append("  ".join(v.ljust(w) if i == 0 else v.rjust(w) for i, (v, w) in enumerate(zip(row, widths))))
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


def to_csv(rows, columns):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def report_row(name, report):
    row = {"name": name, "n": report.n_episodes}
    for m in METRICS:
        row[m] = getattr(report, m) if m == "TL" else 100.0 * getattr(report, m)
    return row


# ---------------------------------------------------------------- benchmark datasets


@dataclass(frozen=True)
class BenchmarkSpec:
    train_world: WorldParams = WorldParams()
    unseen_world: WorldParams = None  # defaults to train_world
    n_train_envs: int = 20
    train_episodes: int = 400
    val_seen_episodes: int = 100
    n_unseen_envs: int = 5
    unseen_episodes: int = 100
    d_min: int = 1
    d_max: int = 5

    def to_dict(self):
        d = asdict(self)
        d["unseen_world"] = None if self.unseen_world is None else asdict(self.unseen_world)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown benchmark fields: {sorted(unknown)}")
        if "train_world" in d:
            d["train_world"] = WorldParams.from_dict(d["train_world"])
        if d.get("unseen_world") is not None:
            d["unseen_world"] = WorldParams.from_dict(d["unseen_world"])
        return cls(**d)


@dataclass
class Dataset:
    envs: dict
    train: list
    val_seen: list
    val_unseen: list
    train_env_ids: list
    unseen_env_ids: list

    def split(self, name):
        return {"train": self.train, "val_seen": self.val_seen, "val_unseen": self.val_unseen}[name]

    @property
    def max_train_steps(self):
        return max(e.gold_steps for e in self.train)


def _spread(total, n):
    return [total // n + (1 if i < total % n else 0) for i in range(n)]


def build_dataset(spec, seed):
    """Deterministic train / val-seen (train houses) / val-unseen (held-out houses) split."""
    envs = {}
    train_ids = list(range(spec.n_train_envs))
    unseen_ids = list(range(spec.n_train_envs, spec.n_train_envs + spec.n_unseen_envs))
    for i in train_ids:
        envs[i] = generate_environment(seed * 100003 + i, spec.train_world, env_id=i)
    for i in unseen_ids:
        envs[i] = generate_environment(seed * 100003 + i, spec.unseen_world or spec.train_world, env_id=i)
    train_eps, seen_eps, unseen_eps = [], [], []
    for i, n in zip(train_ids, _spread(spec.train_episodes, len(train_ids))):
        train_eps += make_episodes(envs[i], n, seed, spec.d_min, spec.d_max, first_id=len(train_eps))
    for i, n in zip(train_ids, _spread(spec.val_seen_episodes, len(train_ids))):
        seen_eps += make_episodes(envs[i], n, seed + 7, spec.d_min, spec.d_max, first_id=100000 + len(seen_eps))
    for i, n in zip(unseen_ids, _spread(spec.unseen_episodes, len(unseen_ids))):
        unseen_eps += make_episodes(envs[i], n, seed + 11, spec.d_min, spec.d_max, first_id=200000 + len(unseen_eps))
    return Dataset(envs, train_eps, seen_eps, unseen_eps, train_ids, unseen_ids)


def candidates_in_ball(env, episode, L, include_context_regions=True):
    from .agent import ball

    return sum(int(env.regions[v].candidate.sum()) for v in ball(env, episode.start_viewpoint_id, L))


def random_baseline(envs, episodes, L):
    """Mean of 1 / |candidate proposals within the L-ball| over episodes."""
    return float(np.mean([1.0 / candidates_in_ball(envs[e.environment_id], e, L) for e in episodes]))


def random_choice_rgs(envs, episodes, L):
    """Expected RGS of a uniform pick among candidates in the L-ball (counts every correct proposal)."""
    from .agent import ball

    vals = []
    for e in episodes:
        env = envs[e.environment_id]
        obj = env.object(e.target_object_id)
        total = good = 0
        for v in ball(env, e.start_viewpoint_id, L):
            r = env.regions[v]
            total += int(r.candidate.sum())
            if v in obj.valid_viewpoint_ids:
                iou = kernels.box_iou(r.box_min, r.box_max, obj.box_min, obj.box_max)
                good += int(((iou >= 0.5) & r.candidate).sum())
        vals.append(good / total)
    return float(np.mean(vals))


def evaluate(params, dataset, split, inference=None, L=None, mode=Mode.EXPLORE, success_radius=None):
    """Run every episode of ``split``; returns ``(results, MetricsReport)``."""
    inference = inference or InferenceConfig()
    episodes = dataset.split(split) if isinstance(split, str) else split
    results = [run_episode(dataset.envs[e.environment_id], e, params, mode, L, cfg=inference) for e in episodes]
    return results, compute_metrics(results, dataset.envs, episodes, success_radius)


# ---------------------------------------------------------------- ablations

# name -> toggles; keys are TrainConfig / InferenceConfig fields plus "L" and "untrained"
ABLATIONS = {
    "Full": {},
    "-- Region Positional Enc.": {"coord_frame": "none"},
    "-- Context Proposals": {"include_context_regions": False},
    "-- Distance Limit": {"L": None},
    "-- Augmentation": {"R": 0.0},
    "-- Viewpoint Grouping": {"variant": "random_batches"},
    "-- Fine-Tuning": {"untrained": True},
    "-- Viewpoint Nbhd. Feat.": {"k_context": 0},
    "+ Two-Step Inference": {"variant": "two_step"},
    "50% Negative Viewpoints": {"R": 0.5},
    "90% Negative Viewpoints": {"R": 0.9},
    "+ Bootstrapping": {"bootstrap": True},
    "+ Env. Dropout 50%": {"env_dropout": 0.5},
    "+ Env. Dropout 80%": {"env_dropout": 0.8},
    "Start Relative Coord.": {"coord_frame": "start_relative"},
    "Absolute Coord.": {"coord_frame": "absolute"},
}
for _mode in TextMode:
    ABLATIONS[_mode.value] = {"text_mode": _mode.value}

_TRAIN_KEYS = {f.name for f in fields(TrainConfig)}
_INFER_KEYS = {f.name for f in fields(InferenceConfig)}
_SHARED_KEYS = {"k_context", "include_context_regions", "coord_frame", "text_mode"}


@dataclass
class AblationConfig:
    rows: list
    seeds: list = field(default_factory=lambda: [0, 1, 2])
    benchmark: BenchmarkSpec = BenchmarkSpec()
    train: TrainConfig = TrainConfig()
    inference: InferenceConfig = InferenceConfig()
    L: int = None  # default: max gold_steps over the training split
    mode: str = Mode.PRE_EXPLORED.value
    splits: tuple = ("val_unseen",)
    custom_rows: dict = field(default_factory=dict)  # extra name -> toggles


@dataclass
class AblationRow:
    name: str
    toggles: dict
    report: dict  # split -> {"mean": {...}, "std": {...}}
    per_seed: dict  # split -> list of MetricsReport dicts
    raw: dict = field(default_factory=dict)  # split -> list (per seed) of per-episode judgments


def resolve_toggles(name, custom=None):
    table = dict(ABLATIONS)
    table.update(custom or {})
    if name not in table:
        raise ValueError(f"unknown ablation row {name!r}")
    toggles = table[name]
    for k in toggles:
        if k not in _TRAIN_KEYS | _INFER_KEYS | {"L", "untrained"}:
            raise ValueError(f"unknown toggle {k!r} in ablation row {name!r}")
    return dict(toggles)


def apply_toggles(train_cfg, infer_cfg, toggles):
    t = {k: v for k, v in toggles.items() if k in _TRAIN_KEYS}
    i = {k: v for k, v in toggles.items() if k in _INFER_KEYS}
    return replace(train_cfg, **t), replace(infer_cfg, **i)


def _mean_std(reports):
    out = {"mean": {}, "std": {}}
    for m in METRICS:
        vals = np.array([getattr(r, m) for r in reports])
        out["mean"][m] = float(vals.mean())
        out["std"][m] = float(vals.std())
    return out


def run_ablation_suite(config, progress=None, models_out=None):
    """Train and evaluate every row on every seed; returns a list of ``AblationRow``.

    Rows whose training configuration coincides (inference-only toggles) share
    one trained model per seed. When ``models_out`` is a dict it receives
    ``(seed, row name) -> ScorerParams`` for every row.
    """
    toggles = {name: resolve_toggles(name, config.custom_rows) for name in config.rows}
    if not config.rows:
        return []
    per_row = {name: {s: [] for s in config.splits} for name in config.rows}
    raw = {name: {s: [] for s in config.splits} for name in config.rows}
    for seed in config.seeds:
        data = build_dataset(config.benchmark, seed)
        base_L = data.max_train_steps if config.L is None else config.L
        models = {}
        for name in config.rows:
            tcfg, icfg = apply_toggles(replace(config.train, seed=seed), replace(config.inference, seed=seed),
                                       toggles[name])
            for k in _SHARED_KEYS:
                if k in toggles[name]:
                    icfg = replace(icfg, **{k: toggles[name][k]})
                    tcfg = replace(tcfg, **{k: toggles[name][k]})
            key = "untrained" if toggles[name].get("untrained") else json.dumps(tcfg.to_dict(), sort_keys=True)
            if key not in models:
                if key == "untrained":
                    models[key] = ScorerParams.init(seed, d_model=tcfg.d_model, scale=tcfg.init_scale)
                else:
                    models[key], _ = train(data.train, data.envs, tcfg)
            params = models[key]
            if models_out is not None:
                models_out[(seed, name)] = params
            L = toggles[name].get("L", base_L)
            for split in config.splits:
                eps = data.split(split)
                results = [run_episode(data.envs[e.environment_id], e, params, config.mode, L, cfg=icfg) for e in eps]
                rep = compute_metrics(results, data.envs, eps)
                per_row[name][split].append(rep)
                raw[name][split].append(episode_judgments(results, data.envs, eps))
                if progress:
                    progress(seed, name, split, rep)
    rows = []
    for name in config.rows:
        rows.append(AblationRow(
            name=name, toggles=toggles[name],
            report={s: _mean_std(per_row[name][s]) for s in config.splits},
            per_seed={s: [r.as_dict() for r in per_row[name][s]] for s in config.splits},
            raw=raw[name],
        ))
    return rows


def ablation_table(rows, split="val_unseen"):
    out = []
    for r in rows:
        rep = r.report[split]
        row = {"name": r.name, "seeds": len(r.per_seed[split])}
        for m in METRICS:
            scale = 1.0 if m == "TL" else 100.0
            row[m] = rep["mean"][m] * scale
            row[m + "_std"] = rep["std"][m] * scale
        out.append(row)
    return out
