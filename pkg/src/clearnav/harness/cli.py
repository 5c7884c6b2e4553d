"""Command-line entry point for the staged pipeline.

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 training divergence.
"""
from __future__ import annotations

import argparse
import itertools
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path as FsPath

from ..agent import TrainingDivergence
from ..agent.train import build_navigator
from ..instrgen import generate_instructions
from ..metrics import MetricError, score_episode, EvalReport
from ..numerics import CheckpointError, NonFiniteError, ParamStore, load_params, save_params
from ..worldgen import WorldGenError
from .config import ConfigError, ExperimentConfig, load_config, save_config, tiny_config
from .data import (
    Corpus,
    DataError,
    build_corpus,
    load_corpus,
    load_envs,
    load_pairs,
    load_paths,
    load_trajectories,
    read_json,
    save_instructions,
    save_pairs,
    save_trajectories,
    save_vocab,
    save_world,
    stream_seed,
    trajectory_rows,
    write_json,
    write_jsonl,
)
from .diagnostics import dump_attention
from .pipeline import (
    EVAL_SPLITS,
    RunLog,
    evaluate_items,
    mine,
    pretrain_lang,
    pretrain_vis,
    run_nav,
    run_pipeline,
    split_reports,
    state_digest,
)
from .report import plot_history, write_tables

log = logging.getLogger("clearnav")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED = 0, 2, 3, 4


def _config(args) -> ExperimentConfig:
    if args.config:
        cfg = load_config(args.config)
    elif args.preset == "tiny":
        cfg = tiny_config()
    else:
        cfg = ExperimentConfig().validate()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _require(path, what: str) -> FsPath:
    p = FsPath(path)
    if not p.exists():
        raise DataError(f"missing {what}: {p}")
    return p


def _load_ckpt(path, what: str) -> dict:
    state, _ = load_params(_require(path, what))
    return state


# -- subcommands ------------------------------------------------------------------
def cmd_gen_world(args, cfg):
    corpus = build_corpus(cfg)
    save_world(args.out, corpus, cfg.world)
    save_config(cfg, FsPath(args.out) / "config.json")
    print(f"wrote {len(corpus.envs)} environments and {len(corpus.paths)} paths to {args.out}")


def cmd_gen_instr(args, cfg):
    d = _require(args.data, "world directory")
    paths, _ = load_paths(_require(d / "paths.jsonl", "paths file"))
    seed = stream_seed(cfg.seed, "instrgen")
    instructions = [i for pid in sorted(paths) for i in generate_instructions(paths[pid], seed)]
    save_instructions(d / "instructions.jsonl", instructions)
    save_vocab(d / "vocab.json")
    print(f"wrote {len(instructions)} instructions to {d / 'instructions.jsonl'}")


def cmd_pretrain_lang(args, cfg):
    corpus = load_corpus(_require(args.data, "data directory"))
    state, hist = pretrain_lang(corpus, cfg.lang, cfg.seed)
    save_params(state, args.out, "lang", {"strategy": cfg.lang.strategy, "final_loss": hist[-1]["lang_loss"] if hist else None})
    if args.log:
        write_jsonl(args.log, "lang-log", hist)
    print(f"saved language encoder to {args.out}")


def cmd_mine_pairs(args, cfg):
    corpus = load_corpus(_require(args.data, "data directory"))
    pairs = mine(corpus, _load_ckpt(args.lang, "language checkpoint"), cfg.lang.dim, cfg.lang.layers)
    save_pairs(args.out, pairs)
    print(f"mined {len(pairs)} path pairs into {args.out}")


def cmd_pretrain_vis(args, cfg):
    corpus = load_corpus(_require(args.data, "data directory"))
    pairs = load_pairs(_require(args.pairs, "pairs file"), corpus.paths)
    state, hist = pretrain_vis(corpus, pairs, cfg.vis, cfg.seed)
    save_params(state, args.out, "vis", {"constraint": cfg.vis.constraint})
    if args.log:
        write_jsonl(args.log, "vis-log", hist)
    print(f"saved visual encoder to {args.out}")


def cmd_train_nav(args, cfg):
    corpus = load_corpus(_require(args.data, "data directory"))
    init = {}
    if args.lang:
        init.update(_load_ckpt(args.lang, "language checkpoint"))
    elif cfg.lang.enabled and not args.scratch:
        raise DataError("train-nav needs --lang (or --scratch to train encoders from scratch)")
    if args.vis:
        init.update(_load_ckpt(args.vis, "visual checkpoint"))
    elif cfg.vis.enabled and not args.scratch:
        raise DataError("train-nav needs --vis (or --scratch to train encoders from scratch)")
    nav, hist = run_nav(corpus, cfg, init or None, log_path=args.log)
    state = nav.decoder.store.state_dict()
    save_params(state, args.out, "nav", {"digest": state_digest(state)})
    if args.log:
        plot_history(FsPath(args.log).with_suffix(".png"), hist)
    print(f"saved navigator to {args.out}")


def _score_rows(rows: list[dict], corpus: Corpus, checkpoint: str) -> dict[str, EvalReport]:
    results = []
    for r in rows:
        try:
            path = corpus.paths[r["path_id"]]
            env = corpus.envs[r["env_id"]]
        except KeyError as exc:
            raise DataError(f"trajectory references unknown id {exc.args[0]}") from exc
        if path.env_id != env.env_id:
            raise DataError(f"trajectory {r['path_id']} is in the wrong environment")
        results.append(score_episode(env, path.nodes, r["nodes"], path_id=path.path_id,
                                     language=r["language"], split=r["split"]))
    return split_reports(results, checkpoint)


def cmd_eval(args, cfg):
    corpus = load_corpus(_require(args.data, "data directory"))
    out = FsPath(args.out)
    out.mkdir(parents=True, exist_ok=True)
    splits = args.split or list(EVAL_SPLITS)
    if args.trajectories:
        rows = load_trajectories(_require(args.trajectories, "trajectory file"))
        reports = _score_rows(rows, corpus, args.checkpoint_tag or "")
    else:
        state, meta = load_params(_require(args.nav, "navigator checkpoint"))
        nav = build_navigator(cfg.nav, cfg.world.feature_dim, ParamStore(0))
        nav.decoder.store.load_state_dict(state)
        items = [it for s in splits for it in corpus.items(s)]
        results, episodes = evaluate_items(nav, items, corpus, cfg.eval_batch, args.workers,
                                           record=args.attention)
        reports = split_reports(results, state_digest(state))
        save_trajectories(out / "trajectories.jsonl", trajectory_rows(episodes))
        if args.attention:
            write_jsonl(out / "attention.jsonl", "attention", (dump_attention(e) for e in episodes))
    write_json(out / "eval.json", "eval", {"reports": {k: v.to_dict() for k, v in sorted(reports.items())}})
    for split, rep in sorted(reports.items()):
        print(split, json.dumps(rep.aggregate))


def _load_eval(path) -> dict[str, EvalReport]:
    d = read_json(_require(path, "eval report"), "eval")
    return {k: EvalReport.from_dict(v) for k, v in d["reports"].items()}


def cmd_report(args, cfg):
    runs = {}
    for spec in args.inputs:
        name, _, path = spec.rpartition("=")
        runs[name or FsPath(path).parent.name or path] = _load_eval(path)
    files = write_tables(args.out, runs)
    for k, v in files.items():
        print(f"{k}: {v}")


def _parse_axis(text: str):
    key, _, values = text.partition("=")
    if not values:
        raise ConfigError(key or "axis", "expected KEY=v1,v2,...")
    return key, [json.loads(v) if v[:1] in "-0123456789tfn[{\"" else v for v in values.split(",")]


def _set(cfg_dict: dict, key: str, value) -> None:
    node = cfg_dict
    parts = key.split(".")
    for p in parts[:-1]:
        if p not in node or not isinstance(node[p], dict):
            raise ConfigError(key, "unknown field")
        node = node[p]
    if parts[-1] not in node:
        raise ConfigError(key, "unknown field")
    node[parts[-1]] = value


def cmd_ablate(args, cfg):
    axes = [_parse_axis(a) for a in args.axis]
    out = FsPath(args.out)
    out.mkdir(parents=True, exist_ok=True)
    runs = {}
    shared: dict = {}
    combos = list(itertools.product(*[vals for _, vals in axes])) or [()]
    for combo in combos:
        d = cfg.to_dict()
        for (key, _), value in zip(axes, combo):
            _set(d, key, value)
        run_cfg = ExperimentConfig.from_dict(d)
        name = ",".join(f"{k}={v}" for (k, _), v in zip(axes, combo)) or "base"
        world_key = json.dumps([d["seed"], d["world"], d["corpus"]], sort_keys=True)
        corpus = shared.setdefault(world_key, build_corpus(run_cfg))
        runlog = RunLog(out / f"runlog_{len(runs)}.jsonl", run_cfg)
        res = run_pipeline(run_cfg, corpus=corpus, workers=args.workers, runlog=runlog)
        runs[name] = res.reports
        write_json(out / f"eval_{len(runs) - 1}.json", "eval",
                   {"name": name, "reports": {k: v.to_dict() for k, v in sorted(res.reports.items())}})
        print(name, {s: r.aggregate for s, r in res.reports.items()}, flush=True)
    files = write_tables(out, runs)
    print(f"table: {files['table']}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="clearnav", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--preset", choices=("default", "tiny"), default="default")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--workers", type=int, default=1, help="evaluation threads")
        p.set_defaults(func=fn)
        return p

    p = add("gen-world", cmd_gen_world, "generate environments and paths")
    p.add_argument("--out", required=True)
    p = add("gen-instr", cmd_gen_instr, "generate instructions for a world directory")
    p.add_argument("--data", required=True)
    p = add("pretrain-lang", cmd_pretrain_lang, "contrastive language pretraining")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log")
    p = add("mine-pairs", cmd_mine_pairs, "mine path pairs with the language encoder")
    p.add_argument("--data", required=True)
    p.add_argument("--lang", required=True)
    p.add_argument("--out", required=True)
    p = add("pretrain-vis", cmd_pretrain_vis, "contrastive visual pretraining")
    p.add_argument("--data", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log")
    p = add("train-nav", cmd_train_nav, "train the navigation agent")
    p.add_argument("--data", required=True)
    p.add_argument("--lang")
    p.add_argument("--vis")
    p.add_argument("--scratch", action="store_true", help="allow encoders without checkpoints")
    p.add_argument("--out", required=True)
    p.add_argument("--log")
    p = add("eval", cmd_eval, "evaluate a navigator or score trajectories")
    p.add_argument("--data", required=True)
    p.add_argument("--nav")
    p.add_argument("--trajectories")
    p.add_argument("--checkpoint-tag")
    p.add_argument("--split", action="append", choices=EVAL_SPLITS)
    p.add_argument("--attention", action="store_true", help="also dump text attention")
    p.add_argument("--out", required=True)
    p = add("report", cmd_report, "tables and figures from eval reports")
    p.add_argument("inputs", nargs="+", help="NAME=eval.json")
    p.add_argument("--out", required=True)
    p = add("ablate", cmd_ablate, "run the pipeline over a config matrix")
    p.add_argument("--axis", action="append", default=[], help="KEY=v1,v2 (dotted config key)")
    p.add_argument("--out", required=True)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        if args.command == "eval" and not (args.nav or args.trajectories):
            raise DataError("eval needs --nav or --trajectories")
        args.func(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, CheckpointError, WorldGenError, MetricError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingDivergence, NonFiniteError) as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
