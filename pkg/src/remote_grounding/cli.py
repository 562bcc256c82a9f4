"""Command-line driver: ``gen``, ``train``, ``eval``, ``ablate`` and ``report``.

Every command reads one JSON run config (``--config``); missing fields take
their defaults. Precedence, lowest first: built-in defaults, the config file,
then ``--world-params`` and ``--seed``. The resolved config is written as
``config.json`` next to every output.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from dataclasses import dataclass, field, fields


from . import agent, evaluation, world
from .agent import InferenceConfig, Mode
from .evaluation import BenchmarkSpec, Dataset
from .scorer import ScorerParams, TrainConfig, train
from .world import WorldParams

log = logging.getLogger(__name__)

CONFIG_SCHEMA_VERSION = 1
SPLITS = ("train", "val_seen", "val_unseen")


class CliError(Exception):
    """Anything that should end the process with a one-line diagnostic."""


# ---------------------------------------------------------------- run config


@dataclass
class AblationSettings:
    rows: list = field(default_factory=lambda: [
        "Full", "-- Region Positional Enc.", "-- Distance Limit", "-- Augmentation",
        "-- Viewpoint Grouping", "-- Fine-Tuning"])
    seeds: list = field(default_factory=lambda: [0, 1, 2])
    splits: list = field(default_factory=lambda: ["val_unseen"])
    custom_rows: dict = field(default_factory=dict)


@dataclass
class RunConfig:
    seed: int = 0
    benchmark: BenchmarkSpec = field(default_factory=BenchmarkSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    inference: InferenceConfig = field(default_factory=InferenceConfig)
    L: int = None  # None: max gold_steps of the training split
    mode: str = Mode.PRE_EXPLORED.value
    eval_split: str = "val_unseen"
    success_radius: float = None  # meters; None judges success by goal-viewpoint membership
    bootstrap: int = 0  # resamples for metric confidence intervals (0 = off)
    ablation: AblationSettings = field(default_factory=AblationSettings)

    def to_dict(self):
        return {
            "schema_version": CONFIG_SCHEMA_VERSION,
            "kind": "run_config",
            "seed": self.seed,
            "benchmark": self.benchmark.to_dict(),
            "train": self.train.to_dict(),
            "inference": dataclasses.asdict(self.inference),
            "L": self.L,
            "mode": self.mode,
            "eval_split": self.eval_split,
            "success_radius": self.success_radius,
            "bootstrap": self.bootstrap,
            "ablation": dataclasses.asdict(self.ablation),
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        version = d.pop("schema_version", CONFIG_SCHEMA_VERSION)
        if version != CONFIG_SCHEMA_VERSION:
            raise CliError(f"schema_version mismatch in run config: expected {CONFIG_SCHEMA_VERSION}, got {version!r}")
        kind = d.pop("kind", "run_config")
        if kind != "run_config":
            raise CliError(f"expected a 'run_config' document, got {kind!r}")
        _reject_unknown(d, cls, "run config")
        kw = dict(d)
        if "benchmark" in d:
            _reject_unknown(d["benchmark"], BenchmarkSpec, "benchmark")
            kw["benchmark"] = BenchmarkSpec.from_dict(d["benchmark"])
        if "train" in d:
            _reject_unknown(d["train"], TrainConfig, "train")
            kw["train"] = TrainConfig(**d["train"])
        if "inference" in d:
            _reject_unknown(d["inference"], InferenceConfig, "inference")
            kw["inference"] = InferenceConfig(**d["inference"])
        if "ablation" in d:
            _reject_unknown(d["ablation"], AblationSettings, "ablation")
            kw["ablation"] = AblationSettings(**d["ablation"])
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    def validate(self):
        try:
            self.benchmark.train_world.validate()
            if self.benchmark.unseen_world is not None:
                self.benchmark.unseen_world.validate()
            self.train.validate()
            Mode.parse(self.mode)
            agent.Variant.parse(self.inference.variant)
        except ValueError as exc:
            raise CliError(str(exc)) from exc
        if self.eval_split not in SPLITS:
            raise CliError(f"eval_split must be one of {SPLITS}, got {self.eval_split!r}")
        if self.L is not None and self.L < 0:
            raise CliError("L must be >= 0 or null")
        for name in self.ablation.rows:
            try:
                evaluation.resolve_toggles(name, self.ablation.custom_rows)
            except ValueError as exc:
                raise CliError(f"unknown toggle: {exc}") from exc

    def resolved(self):
        """Copy with the top-level seed pushed into the training and inference sections."""
        return dataclasses.replace(self, train=dataclasses.replace(self.train, seed=self.seed),
                                   inference=dataclasses.replace(self.inference, seed=self.seed))


def _reject_unknown(d, cls, where):
    if not isinstance(d, dict):
        raise CliError(f"{where} section must be a JSON object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(d) - known - {"schema_version", "kind"})
    if unknown:
        raise CliError(f"unknown field(s) in {where}: {', '.join(unknown)}")


def dump_config(cfg):
    """Canonical serialization; loading and re-dumping reproduces it byte for byte."""
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"


def load_config(path):
    if path is None:
        return RunConfig()
    return RunConfig.from_dict(_read_json(path, "config"))


def _read_json(path, what):
    if not os.path.exists(path):
        raise CliError(f"{what} file not found: {path}")
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise CliError(f"{what} file is not valid JSON: {path}: {exc}") from exc


def _write_json(path, obj, indent=None):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=indent, sort_keys=True)
        fh.write("\n")


def _write_text(path, text):
    with open(path, "w") as fh:
        fh.write(text)


# ---------------------------------------------------------------- dataset files


def save_dataset(dataset, spec, seed, out_dir):
    env_dir = os.path.join(out_dir, "environments")
    os.makedirs(env_dir, exist_ok=True)
    names = {}
    for eid, env in sorted(dataset.envs.items()):
        names[str(eid)] = f"environments/env_{eid:04d}.json"
        _write_json(os.path.join(out_dir, names[str(eid)]), world.environment_to_dict(env))
    for split in SPLITS:
        _write_json(os.path.join(out_dir, f"episodes_{split}.json"), world.episodes_to_dict(dataset.split(split)))
    _write_json(os.path.join(out_dir, "dataset.json"), {
        "schema_version": world.SCHEMA_VERSION, "kind": "dataset", "seed": seed, "benchmark": spec.to_dict(),
        "train_env_ids": dataset.train_env_ids, "unseen_env_ids": dataset.unseen_env_ids, "environments": names,
    }, indent=2)


def load_dataset(data_dir):
    index = _read_json(os.path.join(data_dir, "dataset.json"), "dataset index")
    _check(index, "dataset")
    envs = {}
    for eid, rel in index["environments"].items():
        env = world.environment_from_dict(_checked(_read_json(os.path.join(data_dir, rel), "environment"),
                                                   "environment"))
        envs[int(eid)] = env
    splits = {}
    for split in SPLITS:
        d = _read_json(os.path.join(data_dir, f"episodes_{split}.json"), "episodes")
        splits[split] = world.episodes_from_dict(_checked(d, "episodes"))
    return Dataset(envs, splits["train"], splits["val_seen"], splits["val_unseen"],
                   list(index["train_env_ids"]), list(index["unseen_env_ids"]))


def _check(d, kind):
    try:
        world.check_schema(d, kind)
    except ValueError as exc:
        raise CliError(str(exc)) from exc


def _checked(d, kind):
    _check(d, kind)
    return d


def _load_params(path):
    d = _read_json(path, "weights")
    _check(d, "scorer_params")
    try:
        return ScorerParams.from_dict(d)
    except ValueError as exc:
        raise CliError(str(exc)) from exc


def _load_results(path):
    d = _read_json(path, "results")
    _check(d, "episode_results")
    return agent.results_from_dict(d), d.get("meta", {})


# ---------------------------------------------------------------- commands


def _data_dir(args):
    return args.data or args.out


def cmd_gen(cfg, args):
    dataset = evaluation.build_dataset(cfg.benchmark, cfg.seed)
    save_dataset(dataset, cfg.benchmark, cfg.seed, args.out)
    log.info("wrote %d environments and %d/%d/%d episodes to %s", len(dataset.envs), len(dataset.train),
             len(dataset.val_seen), len(dataset.val_unseen), args.out)


def cmd_train(cfg, args):
    dataset = load_dataset(_data_dir(args))
    params, trace = train(dataset.train, dataset.envs, cfg.train,
                          progress=lambda e, l: log.info("epoch %d loss %.5f", e, l))
    params.save(os.path.join(args.out, "weights.json"), config=cfg.train.to_dict())
    rows = [{"epoch": i, "loss": repr(float(l))} for i, l in enumerate(trace)]
    _write_text(os.path.join(args.out, "loss_trace.csv"), evaluation.to_csv(rows, ["epoch", "loss"]))


def _evaluate(cfg, dataset, params, split):
    L = dataset.max_train_steps if cfg.L is None else cfg.L
    episodes = dataset.split(split)
    results = [agent.run_episode(dataset.envs[e.environment_id], e, params, cfg.mode, L, cfg=cfg.inference)
               for e in episodes]
    report = evaluation.compute_metrics(results, dataset.envs, episodes, cfg.success_radius, cfg.bootstrap)
    return results, report, L


def cmd_eval(cfg, args):
    dataset = load_dataset(_data_dir(args))
    weights = args.weights or os.path.join(args.out, "weights.json")
    params = _load_params(weights)
    split = args.split or cfg.eval_split
    results, report, L = _evaluate(cfg, dataset, params, split)
    meta = {"split": split, "L": L, "mode": Mode.parse(cfg.mode).value, "weights": os.path.basename(weights)}
    _write_json(os.path.join(args.out, f"results_{split}.json"), agent.results_to_dict(results, meta))
    row = evaluation.report_row(split, report)
    cols = ["name", "n"] + list(evaluation.METRICS)
    _write_text(os.path.join(args.out, f"metrics_{split}.txt"), evaluation.format_table([row], cols))
    _write_text(os.path.join(args.out, f"metrics_{split}.csv"), evaluation.to_csv([row], cols))
    _write_json(os.path.join(args.out, f"metrics_{split}.json"), report.as_dict(), indent=2)
    print(evaluation.format_table([row], cols), end="")


def cmd_ablate(cfg, args):
    rows = list(args.rows) if args.rows else list(cfg.ablation.rows)
    acfg = evaluation.AblationConfig(
        rows=rows, seeds=list(cfg.ablation.seeds), benchmark=cfg.benchmark, train=cfg.train,
        inference=cfg.inference, L=cfg.L, mode=cfg.mode, splits=tuple(cfg.ablation.splits),
        custom_rows=dict(cfg.ablation.custom_rows))
    try:
        out = evaluation.run_ablation_suite(
            acfg, progress=lambda s, n, sp, r: log.info("seed %d %s %s RGS %.4f", s, n, sp, r.RGS))
    except ValueError as exc:
        if "unknown" in str(exc):
            raise CliError(f"unknown toggle: {exc}") from exc
        raise
    cols = ["name", "seeds"] + [c for m in evaluation.METRICS for c in (m, m + "_std")]
    text = ""
    csv_rows = []
    for split in acfg.splits:
        table = evaluation.ablation_table(out, split)
        text += evaluation.format_table(table, ["name", "seeds"] + list(evaluation.METRICS), title=split) + "\n"
        csv_rows += [dict(r, split=split) for r in table]
    _write_text(os.path.join(args.out, "ablation.txt"), text)
    _write_text(os.path.join(args.out, "ablation.csv"), evaluation.to_csv(csv_rows, ["split"] + cols))
    _write_json(os.path.join(args.out, "ablation_raw.json"), {
        "schema_version": CONFIG_SCHEMA_VERSION, "kind": "ablation_raw",
        "rows": [{"name": r.name, "toggles": r.toggles, "report": r.report, "per_seed": r.per_seed,
                  "episodes": r.raw} for r in out]})
    print(text, end="")


PLOT_COLUMNS = ("source", "episode_id", "environment_id", "instruction_length", "distance",
                "viewpoints_in_range", "SR", "RGS")


def plot_rows(tag, results, dataset, L):
    """Per-episode rows for the instruction-length / distance / viewpoints-in-range plots."""
    by_key = {(e.environment_id, e.id): e for s in SPLITS for e in dataset.split(s)}
    episodes = [by_key[(r.environment_id, r.episode_id)] for r in results]
    judged = evaluation.episode_judgments(results, dataset.envs, episodes)
    rows = []
    for res, ep, j in zip(results, episodes, judged):
        env = dataset.envs[res.environment_id]
        rows.append({"source": tag, "episode_id": ep.id, "environment_id": ep.environment_id,
                     "instruction_length": len(ep.instruction), "distance": ep.gold_path_length,
                     "viewpoints_in_range": len(agent.ball(env, ep.start_viewpoint_id, L)),
                     "SR": j["SR"], "RGS": j["RGS"]})
    return rows


def cmd_report(cfg, args):
    if not args.results:
        raise CliError("report needs at least one results file")
    dataset = load_dataset(_data_dir(args))
    table, plot = [], []
    for path in args.results:
        results, meta = _load_results(path)
        tag = os.path.splitext(os.path.basename(path))[0]
        by_key = {(e.environment_id, e.id): e for s in SPLITS for e in dataset.split(s)}
        try:
            episodes = [by_key[(r.environment_id, r.episode_id)] for r in results]
        except KeyError as exc:
            raise CliError(f"results file {path} refers to an episode missing from the dataset: {exc}") from exc
        report = evaluation.compute_metrics(results, dataset.envs, episodes, cfg.success_radius, cfg.bootstrap)
        table.append(evaluation.report_row(tag, report))
        L = meta.get("L", dataset.max_train_steps if cfg.L is None else cfg.L)
        plot += plot_rows(tag, results, dataset, L)
    cols = ["name", "n"] + list(evaluation.METRICS)
    text = evaluation.format_table(table, cols)
    _write_text(os.path.join(args.out, "report.txt"), text)
    _write_text(os.path.join(args.out, "report.csv"), evaluation.to_csv(table, cols))
    _write_text(os.path.join(args.out, "plot_data.csv"), evaluation.to_csv(plot, PLOT_COLUMNS))
    print(text, end="")


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval, "ablate": cmd_ablate, "report": cmd_report}


def build_parser():
    parser = argparse.ArgumentParser(prog="remote-grounding", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="run config JSON (defaults are used for missing fields)")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--world-params", help="JSON file with WorldParams fields for the training world")
        p.add_argument("-v", "--verbose", action="store_true")
        if name in ("train", "eval", "report"):
            p.add_argument("--data", help="dataset directory written by gen (default: --out)")
        if name == "eval":
            p.add_argument("--weights", help="weights file (default: <out>/weights.json)")
            p.add_argument("--split", choices=SPLITS)
        if name == "ablate":
            p.add_argument("--rows", nargs="+", help="ablation row names (default: from the config)")
        if name == "report":
            p.add_argument("results", nargs="*", help="results JSON files written by eval")
    return parser


def resolve(args):
    cfg = load_config(args.config)
    if args.world_params:
        d = _read_json(args.world_params, "world params")
        try:
            wp = WorldParams.from_dict(d)
            wp.validate()
        except (TypeError, ValueError) as exc:
            raise CliError(f"bad world params: {exc}") from exc
        cfg = dataclasses.replace(cfg, benchmark=dataclasses.replace(cfg.benchmark, train_world=wp))
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg.resolved()


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args)
        os.makedirs(args.out, exist_ok=True)
        _write_text(os.path.join(args.out, "config.json"), dump_config(cfg))
        COMMANDS[args.command](cfg, args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
