"""Command-line entry point: ``dualcvae {ingest,train,eval,sample,classify}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import COMMANDS, DATA_ROOT_ENV, RunConfig, read_config_file, resolve
from .data import SCENES, ConfigError, DatasetSplit, leave_one_out_split, load_scenes
from .evaluation import (evaluate, evaluate_linear, pattern_census, sample_k_predictions,
                         write_sample_dump)
from .rng import substream
from .trainer import Trainer, load_model, train

log = logging.getLogger("dualcvae")

EPILOG = f"""\
Precedence: command-line flags > ${DATA_ROOT_ENV} (data_root only) > --config file > defaults.
Defaults follow the training setup: batch 128, 60 epochs, lr 0.001 then 0.0001 from epoch 30,
weight decay 0.1, dropout 0.2, temperature 0.1, loss weights 0.005, 4 patterns, K = 20.
"""

FLAG_KEYS = ("data_root", "held_out", "output_dir", "checkpoint", "seed", "k", "epochs", "num_patterns")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dualcvae", epilog=EPILOG,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="TOML file of key = value settings")
    parser.add_argument("--data-root", dest="data_root")
    parser.add_argument("--held-out", dest="held_out", choices=SCENES)
    parser.add_argument("--output-dir", dest="output_dir")
    parser.add_argument("--checkpoint", help="checkpoint for eval/sample/classify (default: output_dir/best or last)")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--k", type=int, help="samples per window for best-of-K metrics")
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--num-patterns", dest="num_patterns", type=int)
    parser.add_argument("--set", dest="sets", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key; repeatable")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    file_values = read_config_file(args.config) if args.config else {}
    overrides: dict = {"command": args.command}
    for item in args.sets:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    for flag in FLAG_KEYS:
        value = getattr(args, flag)
        if value is not None:
            overrides["held_out_scene" if flag == "held_out" else flag] = value
    return resolve(file_values, overrides)


def _load_split(cfg: RunConfig) -> tuple[dict, DatasetSplit]:
    scenes = load_scenes(cfg.data_root, cfg.t_obs, cfg.t_pred, cfg.stride)
    split = leave_one_out_split(scenes, cfg.held_out_scene, cfg.validation_fraction,
                                rng=substream(cfg.seed, "data-shuffle"))
    if cfg.train_fraction < 1.0:
        keep = max(1, int(round(cfg.train_fraction * len(split.train))))
        split.train = split.train[:keep]
    return scenes, split


def _checkpoint_path(cfg: RunConfig) -> Path:
    if cfg.checkpoint:
        path = Path(cfg.checkpoint)
    else:
        out = Path(cfg.output_dir)
        path = out / "best.ckpt" if (out / "best.ckpt").exists() else out / "last.ckpt"
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    return path


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def cmd_ingest(cfg: RunConfig, out: Path) -> None:
    scenes = load_scenes(cfg.data_root, cfg.t_obs, cfg.t_pred, cfg.stride)
    summary = {name: {"windows": len(w), "pedestrian_slots": int(sum(x.num_peds for x in w)),
                      "ordered_pairs": int(sum(x.num_peds * (x.num_peds - 1) for x in w))}
               for name, w in scenes.items()}
    _write_json(out / "ingest.json", summary)
    for name, s in summary.items():
        print(f"{name}: {s['windows']} windows")


def cmd_train(cfg: RunConfig, out: Path) -> None:
    _, split = _load_split(cfg)
    log.info("train %d / validation %d / test %d windows (held out %s)", len(split.train),
             len(split.validation), len(split.test), split.held_out_scene)
    trainer, history = train(split, cfg.train_config(), out, model_cfg=cfg.model_config(),
                             trainer=Trainer(cfg.train_config(), cfg.model_config()))
    if trainer.dead_parameters:
        log.warning("parameters that never received a gradient: %s", trainer.dead_parameters)
    print(f"trained {len(history)} epochs; final loss {history[-1]['total']:.4f}")


def _eval_windows(cfg: RunConfig, scenes: dict, split: DatasetSplit) -> list:
    if cfg.eval_scenes == "all":
        return [w for name in SCENES for w in scenes[name]]
    return split.test


def cmd_eval(cfg: RunConfig, out: Path) -> None:
    scenes, split = _load_split(cfg)
    model = load_model(_checkpoint_path(cfg))
    windows = _eval_windows(cfg, scenes, split)
    report = evaluate(windows, model, cfg.k, cfg.seed, cfg.per_pedestrian_min)
    linear = evaluate_linear(windows)
    payload = {f"min_ade_{cfg.k}": report.min_ade, f"min_fde_{cfg.k}": report.min_fde,
               "K": cfg.k, "t_obs": cfg.t_obs, "t_pred": cfg.t_pred,
               "per_scene": {s: {f"min_ade_{cfg.k}": v["min_ade"], f"min_fde_{cfg.k}": v["min_fde"],
                                 "windows": v["windows"]} for s, v in report.per_scene.items()},
               "average": {f"min_ade_{cfg.k}": report.min_ade, f"min_fde_{cfg.k}": report.min_fde},
               "linear_baseline": linear.to_dict()}
    _write_json(out / "report.json", payload)
    print(f"minADE_{cfg.k} {report.min_ade:.4f}  minFDE_{cfg.k} {report.min_fde:.4f}")


def cmd_sample(cfg: RunConfig, out: Path) -> None:
    scenes, split = _load_split(cfg)
    model = load_model(_checkpoint_path(cfg))
    windows = _eval_windows(cfg, scenes, split)[:cfg.sample_windows]
    preds = [sample_k_predictions(w, cfg.k, model, cfg.seed, i) for i, w in enumerate(windows)]
    write_sample_dump(out / "samples.csv", preds, windows)
    with open(out / "observed.csv", "w") as fh:
        fh.write("window_id,pedestrian_id,t,x,y,part\n")
        for w in windows:
            for part, arr in (("observed", w.observed), ("future", w.future)):
                for n, ped in enumerate(w.pedestrian_ids):
                    for t, (x, y) in enumerate(arr[n]):
                        fh.write(f"{w.window_id},{ped},{t},{float(x)!r},{float(y)!r},{part}\n")
    print(f"wrote samples for {len(windows)} windows")


def cmd_classify(cfg: RunConfig, out: Path) -> None:
    scenes, split = _load_split(cfg)
    model = load_model(_checkpoint_path(cfg))
    census = pattern_census(_eval_windows(cfg, scenes, split), model, cfg.census_exemplars)
    _write_json(out / "census.json", census)
    print("class counts:", census["counts"])


COMMAND_FUNCS = {"ingest": cmd_ingest, "train": cmd_train, "eval": cmd_eval,
                 "sample": cmd_sample, "classify": cmd_classify}


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse: 2 on usage errors, 0 for --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
    except ConfigError as exc:
        print(f"dualcvae: error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"dualcvae: {exc}", file=sys.stderr)
        return 1
    if not Path(cfg.data_root).is_dir():
        print(f"dualcvae: data root not found: {cfg.data_root}", file=sys.stderr)
        return 1
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"config.{cfg.command}.toml").write_text(cfg.to_toml())
    try:
        COMMAND_FUNCS[cfg.command](cfg, out)
    except (FileNotFoundError, ConfigError) as exc:
        print(f"dualcvae: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
