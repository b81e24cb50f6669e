"""Command-line entry points: ``train``, ``evaluate``, ``verify`` and ``tv-diagnose``."""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .config import load_config
from .data import load_dataset, read_split_manifest, split_per_user, write_split_manifest
from .exceptions import NotEnoughNegatives, SFCMLError
from .laplacian import UserGraph
from .model import EmbeddingModel, load_checkpoint, save_checkpoint
from .samplers import SAMPLER_KINDS, SamplerKind, user_total_variation
from .trainer import evaluate, fit

CONFIG_ENV = "SFCML_CONFIG"

EXIT_OK, EXIT_INVALID, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _add_config_args(p, required=False):
    p.add_argument("--config", help=f"key = value config file or run-manifest.tsv (default: ${CONFIG_ENV})")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key; may be repeated")


def _config(args):
    path = args.config or os.environ.get(CONFIG_ENV)
    if path is None and not args.overrides:
        raise UsageError(f"no config given; pass --config or set ${CONFIG_ENV}")
    return load_config(path, args.overrides)


def _dataset_and_split(cfg):
    m = load_dataset(
        cfg["dataset.path"], cfg.delimiter, cfg["dataset.threshold"], cfg["dataset.min_interactions"]
    )
    return m, split_per_user(m, cfg["split.ratios"], cfg["split.seed"])


def _write(path: Path, text: str):
    path.write_text(text, encoding="utf-8")


def cmd_train(args) -> int:
    cfg = _config(args)
    out = Path(args.out or cfg["output.dir"])
    configs = cfg.train_configs()
    _, split = _dataset_and_split(cfg)
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "run-manifest.tsv", cfg.manifest_tsv())
    write_split_manifest(split, out / "split.tsv")

    best, rows = None, ["learning_rate\tmargin\tn_negatives\tbest_epoch\tepochs_run\tbest_val_auc"]
    for tc in configs:
        def progress(rec, tc=tc):
            print(
                f"lr={tc.learning_rate:g} margin={tc.margin:g} epoch={rec.epoch} "
                f"loss={rec.train_loss:.6f} val_auc={rec.val_auc:.6f} ({rec.seconds:.2f}s)",
                file=sys.stderr,
            )

        res = fit(split, tc, callback=None if args.quiet else progress)
        rows.append(
            f"{tc.learning_rate!r}\t{tc.margin!r}\t{tc.sampler.n_negatives}\t"
            f"{res.best_epoch}\t{len(res.history)}\t{res.best_val_auc:.17g}"
        )
        # ties keep the earlier grid point
        if best is None or res.best_val_auc > best.best_val_auc:
            best = res
    if len(configs) > 1:
        _write(out / "grid.tsv", "\n".join(rows) + "\n")

    _write(out / "train-log.tsv", best.log_tsv(timing=cfg["log.timing"]))
    save_checkpoint(best.best_model, out / "checkpoint-best.txt")
    save_checkpoint(best.final_model, out / "checkpoint-final.txt")
    report = evaluate(best.best_model, split, "test", cfg["eval.ks"], cfg["eval.mask_mode"])
    report.write_tsv(out / "test-report.tsv")
    sys.stdout.write(report.to_tsv())
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    out = Path(cfg["output.dir"])
    ckpt = Path(args.checkpoint) if args.checkpoint else out / "checkpoint-best.txt"
    model = load_checkpoint(ckpt)
    split_path = Path(args.split) if args.split else out / "split.tsv"
    if split_path.exists():
        split = read_split_manifest(split_path, model.num_users, model.num_items)
    else:
        _, split = _dataset_and_split(cfg)
    if (split.num_users, split.num_items) != (model.num_users, model.num_items):
        raise SFCMLError(
            f"checkpoint is {model.num_users}x{model.num_items} but the split is "
            f"{split.num_users}x{split.num_items}"
        )
    ks = cfg["eval.ks"]
    mode = args.mask_mode or cfg["eval.mask_mode"]
    report = evaluate(model, split, args.part, ks, mode)
    if args.out:
        report.write_tsv(args.out)
    sys.stdout.write(report.to_tsv())
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import run_oracle_suite

    if args.trials < 1 or args.max_n < 3:
        raise UsageError("--trials must be >= 1 and --max-n >= 3")
    rep = run_oracle_suite(args.trials, args.max_n, args.seed, args.max_d, args.grad_trials)
    print("check\ttrials\tmax_error\ttolerance\tstatus")
    for line in rep.lines():
        print(line)
    return EXIT_OK if rep.passed() else EXIT_INVALID


def _tv_interactions(args):
    if args.ratings:
        m = load_dataset(args.ratings, args.delimiter, args.threshold, args.min_interactions)
        return m, args.seed
    cfg = _config(args)
    m, split = _dataset_and_split(cfg)
    seed = args.seed if args.seed is not None else cfg["train.seed"]
    return (split.train if args.part == "train" else m), seed


def cmd_tv_diagnose(args) -> int:
    if args.ratings is None and args.config is None and not args.overrides and CONFIG_ENV not in os.environ:
        raise UsageError("pass --ratings or --config")
    m, seed = _tv_interactions(args)
    seed = 0 if seed is None else seed
    kind = SamplerKind(args.sampler, args.u, args.candidate_multiplier, args.replace)
    if args.checkpoint:
        model = load_checkpoint(args.checkpoint)
        if (model.num_users, model.num_items) != (m.num_users, m.num_items):
            raise SFCMLError("checkpoint shape does not match the interactions")
    else:
        model = EmbeddingModel.initialize(
            m.num_users, m.num_items, args.dim, 1.0, np.random.default_rng([seed, 0])
        )
    popularity = m.item_counts()
    tokens = m.user_tokens
    lines = ["user_index\tuser\tn_pos\tn_neg\td_tv"]
    values = []
    for u in range(m.num_users):
        g = UserGraph.from_positives(m.positives[u], m.num_items, user=u)
        rng = np.random.default_rng([seed, 2, 0, u])
        try:
            tv = user_total_variation(kind, model, u, g, popularity, rng)
        except NotEnoughNegatives:
            lines.append(f"{u}\t{tokens[u]}\t{g.n_pos}\t{g.n_neg}\tNA")
            continue
        values.append(tv)
        lines.append(f"{u}\t{tokens[u]}\t{g.n_pos}\t{g.n_neg}\t{tv:.17g}")
    if not values:
        raise NotEnoughNegatives(0, args.u)
    lines.append(f"mean\t-\t-\t-\t{np.mean(values):.17g}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def _bool_flag(text):
    t = text.lower()
    if t in ("true", "yes", "1"):
        return True
    if t in ("false", "no", "0"):
        return False
    raise argparse.ArgumentTypeError("expected true or false")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sfcml", description="Sampling-free collaborative metric learning.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train with early stopping and write checkpoints, log and test report")
    _add_config_args(p)
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.add_argument("--quiet", action="store_true", help="no per-epoch progress on stderr")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on a held-out part")
    _add_config_args(p)
    p.add_argument("--checkpoint", help="default: <output.dir>/checkpoint-best.txt")
    p.add_argument("--split", help="split manifest; default <output.dir>/split.tsv, else recomputed")
    p.add_argument("--part", choices=("test", "validation"), default="test")
    p.add_argument("--mask-mode", choices=("masked", "unmasked"))
    p.add_argument("--out", help="also write the report here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("verify", help="cross-check the fast loss and gradients against oracles")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--max-n", type=int, default=200)
    p.add_argument("--max-d", type=int, default=32)
    p.add_argument("--grad-trials", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("tv-diagnose", help="per-user total variation of a negative sampler")
    _add_config_args(p)
    p.add_argument("--ratings", help="ratings file; bypasses the config")
    p.add_argument("--delimiter", default="\t")
    p.add_argument("--threshold", type=float, default=4.0)
    p.add_argument("--min-interactions", type=int, default=5)
    p.add_argument("--part", choices=("all", "train"), default="all",
                   help="with --config: diagnose all positives or the training part")
    p.add_argument("--sampler", choices=SAMPLER_KINDS, default="uniform")
    p.add_argument("--u", type=int, default=1)
    p.add_argument("--candidate-multiplier", type=int, default=None)
    p.add_argument("--replace", type=_bool_flag, default=None)
    p.add_argument("--checkpoint", help="model for two_stage and hard; default a random init")
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_tv_diagnose)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"sfcml {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SFCMLError, ValueError, OSError) as exc:
        print(f"sfcml {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
