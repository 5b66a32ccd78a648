"""Command-line pipeline: simulate -> train-surrogate -> eval -> train-agent -> generate -> optimize -> report."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import artifacts, ppo, surrogate
from .bayesopt import contour_grid, run_study
from .config import ConfigError, RunConfig, load_config
from .data import Dataset, load_dataset, load_space, split_dataset
from .env import GenEnvironment, RewardConfig
from .generator import (GeneratedDataset, filter_valid, generate_batch, histogram_outcomes,
                        normalize_outcomes, summarize_ranges)
from .metrics import evaluate
from .oracle import OUTCOME_COLUMN, SPACES, TASK, synth_dataset

log = logging.getLogger("simgen")

DATASET = "dataset.csv"
SPLIT = "split.csv"
MODEL = "surrogate.model"
METRICS = "metrics.json"
POLICY = "agent.policy"
CURVE = "curve.csv"
GENERATED = "generated.csv"
SUMMARY = "summary.json"
STUDY = "study.json"
GRID = "grid.csv"
REPORT_DIR = "report"

SUBCOMMANDS = ("simulate", "train-surrogate", "eval", "train-agent", "generate", "optimize",
               "report", "pipeline")


class MissingArtifact(FileNotFoundError):
    pass


class Workspace:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.root = Path(cfg.workspace)
        self.validate()
        self.root.mkdir(parents=True, exist_ok=True)

    def validate(self):
        """Fail on bad values or missing referenced files before any stage runs."""
        d = self.cfg.data
        for key in ("csv", "space"):
            value = getattr(d, key)
            if value is not None and not Path(value).exists():
                raise MissingArtifact(f"data.{key} refers to missing file {value}")
        space = self.space()
        self.task()
        for name in self.cfg.surrogate.monotone:
            space.index(name)
        self.reward()
        self.pairs(self.cfg.bayesopt.contour_pairs)
        self.pairs(self.cfg.output.scatter_pairs)

    def path(self, name: str) -> Path:
        return self.root / name

    def need(self, *names) -> list:
        paths = [self.dataset_path() if n == DATASET else self.path(n) for n in names]
        missing = [str(p) for p in paths if not p.exists()]
        if missing:
            raise MissingArtifact("missing artifact(s): " + ", ".join(missing))
        return paths

    def dataset_path(self) -> Path:
        return Path(self.cfg.data.csv) if self.cfg.data.csv else self.path(DATASET)

    # -- shared loaders --

    def space(self):
        d = self.cfg.data
        if d.space:
            return load_space(d.space)
        if d.kind not in SPACES:
            raise ConfigError(f"data.kind {d.kind!r} has no built-in space; set data.space")
        return SPACES[d.kind]

    def outcome_column(self) -> str:
        return self.cfg.data.outcome_column or OUTCOME_COLUMN.get(self.cfg.data.kind, "outcome")

    def task(self) -> str:
        task = self.cfg.data.task or TASK.get(self.cfg.data.kind)
        if task is None:
            raise ConfigError("data.task must be set for custom datasets")
        return task

    def dataset(self) -> Dataset:
        (path,) = self.need(DATASET)
        return load_dataset(path, self.space(), self.outcome_column(), self.task())

    def split_dataset(self) -> Dataset:
        ds = self.dataset()
        (path,) = self.need(SPLIT)
        _, rows = artifacts.read_csv(path)
        tags = np.array([r[1] for r in rows], dtype=object)
        if len(tags) != len(ds):
            raise ValueError(f"{path} does not match the dataset row count")
        return Dataset(ds.space, ds.rows, ds.outcomes, split=tags, task=ds.task)

    def model(self):
        (path,) = self.need(MODEL)
        return surrogate.loads(path.read_text(encoding="utf-8"))

    def bundle(self):
        (path,) = self.need(POLICY)
        return ppo.loads(path.read_text(encoding="utf-8"))

    def reward(self) -> RewardConfig:
        e = self.cfg.environment
        return RewardConfig(e.direction, float(e.invalid_penalty), float(e.range_margin))

    def generated(self, model) -> GeneratedDataset:
        (path,) = self.need(GENERATED)
        header, rows = artifacts.read_csv(path)
        names = model.space.names
        if header != names + ["predicted", "valid"]:
            raise ValueError(f"{path}: unexpected header {header}")
        arr = np.array([[float(v) for v in r] for r in rows]).reshape(-1, len(header))
        return GeneratedDataset(model.space, arr[:, :len(names)], arr[:, -2], arr[:, -1] == 1)

    def pairs(self, configured) -> list:
        names = self.space().names
        pairs = configured or [names[:2]]
        out = []
        for pair in pairs:
            if len(pair) != 2:
                raise ConfigError(f"parameter pair {pair!r} must have two entries")
            out.append(tuple(self.space().index(p) for p in pair))
        return out


# -- stages -------------------------------------------------------------------

def cmd_simulate(ws: Workspace, kind=None, n=None):
    kind = kind or ws.cfg.data.kind
    n = int(n or ws.cfg.data.n)
    ds = synth_dataset(kind, n, ws.cfg.module_seed("simulate"))
    header = ds.space.names + [OUTCOME_COLUMN[kind]]
    rows = [list(r) + [o if kind == "material" else int(o)] for r, o in zip(ds.rows, ds.outcomes)]
    path = artifacts.write_csv(ws.path(DATASET), header, rows)
    log.info("simulate: %d %s rows -> %s", n, kind, path)


def cmd_train_surrogate(ws: Workspace):
    cfg = ws.cfg
    ds = split_dataset(ws.dataset(), cfg.data.fractions, cfg.module_seed("split"))
    s = cfg.surrogate
    gcfg = surrogate.GbdtConfig(
        n_trees=s.n_trees, max_depth=s.max_depth, learning_rate=s.learning_rate,
        min_samples_leaf=s.min_samples_leaf, subsample=s.subsample,
        seed=cfg.module_seed("surrogate"), monotone=s.monotone,
    )
    model = surrogate.fit(ds.subset("train"), gcfg, ws.task())
    artifacts.write_text(ws.path(MODEL), surrogate.dumps(model))
    artifacts.write_csv(ws.path(SPLIT), ["row", "split"], enumerate(ds.split))
    log.info("train-surrogate: %d trees on %d rows", len(model.trees), int(np.sum(ds.split == "train")))


def cmd_eval(ws: Workspace, split="test"):
    model = ws.model()
    ds = ws.split_dataset().subset(split)
    if len(ds) == 0:
        raise ValueError(f"split {split!r} is empty")
    metrics = evaluate(model, ds)
    report = {"split": split, "rows": len(ds), "task": model.task, **metrics.to_dict()}
    artifacts.write_json(ws.path(METRICS), report)
    log.info("eval[%s]: %s", split, metrics.to_dict())
    return metrics


def cmd_train_agent(ws: Workspace):
    cfg = ws.cfg
    model = ws.model()
    env = GenEnvironment(model, ws.reward(), seed=cfg.module_seed("environment"))
    p = cfg.ppo
    pcfg = ppo.PpoConfig(
        clip_eps=p.clip_eps, gamma=p.gamma, gae_lambda=p.gae_lambda, learning_rate=p.learning_rate,
        rollout_size=p.rollout_size, minibatch=p.minibatch, epochs_per_update=p.epochs_per_update,
        total_steps=p.total_steps, entropy_coef=p.entropy_coef, value_coef=p.value_coef,
        hidden=tuple(p.hidden), seed=cfg.module_seed("agent"),
    )
    bundle, curve = ppo.train_agent(
        env, pcfg, progress=lambda step, r: log.debug("train-agent: step %d reward %.4f", step, r))
    artifacts.write_text(ws.path(POLICY), ppo.dumps(bundle))
    artifacts.write_csv(ws.path(CURVE), ["step", "mean_reward", "policy_loss", "value_loss"],
                        curve.rows())
    log.info("train-agent: %d steps, final mean reward %.4f", curve.step[-1], curve.mean_reward[-1])


def cmd_generate(ws: Workspace, n=None):
    cfg = ws.cfg
    n = int(n or cfg.generation.n)
    model, bundle = ws.model(), ws.bundle()
    prov = {"policy": artifacts.file_id(ws.path(POLICY)), "surrogate": artifacts.file_id(ws.path(MODEL))}
    gd = generate_batch(bundle, model, n, cfg.module_seed("generate"), ws.reward(), prov)
    header = model.space.names + ["predicted", "valid"]
    artifacts.write_csv(ws.path(GENERATED), header,
                        (list(r) + [p, v] for r, p, v in zip(gd.rows_raw, gd.predicted, gd.valid)))
    kept, frac = filter_valid(gd)
    summary = {"n": n, "retained": len(kept), "retained_fraction": frac,
               "provenance": gd.provenance}
    if len(kept):
        summary["ranges"] = summarize_ranges(kept).to_dict()
        counts = histogram_outcomes(_unit_outcomes(model, kept.predicted), cfg.generation.bins)
        summary["histogram"] = {"bins": cfg.generation.bins, "counts": counts.tolist()}
    artifacts.write_json(ws.path(SUMMARY), summary)
    log.info("generate: %d rows, %.1f%% valid", n, 100 * frac)
    return gd


def _unit_outcomes(model, values):
    if model.task == "binary":
        return np.asarray(values, dtype=float)
    return normalize_outcomes(values, model.outcome_range)


def cmd_optimize(ws: Workspace, trials=None):
    cfg = ws.cfg
    b = cfg.bayesopt
    model = ws.model()
    gd = ws.generated(model)
    ranges = summarize_ranges(gd).as_array()
    sign = 1.0 if cfg.environment.direction == "maximize" else -1.0

    def objective(x):
        return sign * float(model.predict_rows(x[None, :])[0])

    n_trials = int(trials or b.n_trials)
    study = run_study(objective, ranges, n_trials, min(b.n_init, n_trials),
                      cfg.module_seed("optimize"), model.space.names, b.refit_every)
    out = study.to_dict()
    out["direction"] = cfg.environment.direction
    artifacts.write_json(ws.path(STUDY), out)
    rows = []
    for i, j in ws.pairs(b.contour_pairs):
        grid = contour_grid(model, (i, j), ranges, b.resolution, study.best[0])
        for a, vi in enumerate(grid.axis_i):
            for c, vj in enumerate(grid.axis_j):
                rows.append([grid.names[0], grid.names[1], vi, vj, grid.values[a, c]])
    artifacts.write_csv(ws.path(GRID), ["param_i", "param_j", "value_i", "value_j", "prediction"], rows)
    log.info("optimize: %d trials, best %.6g", n_trials, sign * study.best[1])
    return study


def cmd_report(ws: Workspace):
    cfg = ws.cfg
    ws.need(DATASET, SPLIT, MODEL, METRICS, POLICY, CURVE, GENERATED, SUMMARY, STUDY, GRID)
    model = ws.model()
    train = ws.split_dataset().subset("train")
    gd, _ = filter_valid(ws.generated(model))
    bins = cfg.generation.bins
    edges = np.linspace(0.0, 1.0, bins + 1)
    train_counts = histogram_outcomes(_unit_outcomes(model, train.outcomes), bins)
    gen_counts = histogram_outcomes(_unit_outcomes(model, gd.predicted), bins)
    out_dir = ws.path(REPORT_DIR)
    artifacts.write_csv(out_dir / "histogram.csv", ["bin_lo", "bin_hi", "train", "generated"],
                        zip(edges[:-1], edges[1:], train_counts, gen_counts))
    names = model.space.names
    scatter_files = []
    for i, j in ws.pairs(cfg.output.scatter_pairs):
        rows = [[r[i], r[j], "train"] for r in train.rows]
        rows += [[r[i], r[j], "generated"] for r in gd.rows_raw]
        fname = f"scatter_{names[i]}__{names[j]}.csv"
        artifacts.write_csv(out_dir / fname, [names[i], names[j], "source"], rows)
        scatter_files.append(fname)
    gen_lo = gd.rows_raw.min(axis=0) if len(gd) else np.full(len(names), np.nan)
    gen_hi = gd.rows_raw.max(axis=0) if len(gd) else np.full(len(names), np.nan)
    artifacts.write_csv(out_dir / "ranges.csv",
                        ["parameter", "train_min", "train_max", "generated_min", "generated_max"],
                        ([n, *model.train_ranges[k], gen_lo[k], gen_hi[k]] for k, n in enumerate(names)))
    study = artifacts.read_json(ws.path(STUDY))
    _, curve = artifacts.read_csv(ws.path(CURVE))
    report = {
        "metrics": artifacts.read_json(ws.path(METRICS)),
        "generation": artifacts.read_json(ws.path(SUMMARY)),
        "histogram": {"edges": edges.tolist(), "train": train_counts.tolist(),
                      "generated": gen_counts.tolist()},
        "agent": {"first_mean_reward": float(curve[0][1]), "last_mean_reward": float(curve[-1][1]),
                  "steps": int(curve[-1][0])},
        "study_best": study["best"],
        "files": {"histogram": "histogram.csv", "ranges": "ranges.csv", "scatter": scatter_files,
                  "contours": f"../{GRID}"},
    }
    artifacts.write_json(out_dir / "report.json", report)
    log.info("report: written to %s", out_dir)
    return report


def cmd_pipeline(ws: Workspace):
    if not ws.cfg.data.csv:
        cmd_simulate(ws)
    cmd_train_surrogate(ws)
    cmd_eval(ws)
    cmd_train_agent(ws)
    cmd_generate(ws)
    cmd_optimize(ws)
    cmd_report(ws)


# -- argument parsing -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="run-config YAML file")
    common.add_argument("--seed", type=int, default=None, help="override the global seed")
    common.add_argument("--workspace", default=None, help="override the workspace directory")
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="SECTION.KEY=VALUE", help="override one config value")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="simgen", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("simulate", parents=[common], help="write an oracle dataset")
    p.add_argument("--kind", choices=sorted(SPACES))
    p.add_argument("--n", type=int)
    sub.add_parser("train-surrogate", parents=[common], help="split data and fit the GBDT surrogate")
    p = sub.add_parser("eval", parents=[common], help="surrogate metrics on one split")
    p.add_argument("--split", default="test", choices=["train", "validation", "test"])
    sub.add_parser("train-agent", parents=[common], help="train the PPO generator")
    p = sub.add_parser("generate", parents=[common], help="sample parameter rows from the policy")
    p.add_argument("--n", type=int)
    p = sub.add_parser("optimize", parents=[common], help="Bayesian optimization over generated ranges")
    p.add_argument("--trials", type=int)
    sub.add_parser("report", parents=[common], help="plot-ready summary files")
    sub.add_parser("pipeline", parents=[common], help="run every stage in order")
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config, args.overrides, args.seed, args.workspace)
        ws = Workspace(cfg)
        if args.command == "simulate":
            cmd_simulate(ws, args.kind, args.n)
        elif args.command == "train-surrogate":
            cmd_train_surrogate(ws)
        elif args.command == "eval":
            cmd_eval(ws, args.split)
        elif args.command == "train-agent":
            cmd_train_agent(ws)
        elif args.command == "generate":
            cmd_generate(ws, args.n)
        elif args.command == "optimize":
            cmd_optimize(ws, args.trials)
        elif args.command == "report":
            cmd_report(ws)
        else:
            cmd_pipeline(ws)
    except (ConfigError, MissingArtifact, ValueError, OSError, KeyError) as exc:
        print(f"simgen {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run())
