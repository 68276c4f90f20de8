"""Command-line surface: corpus generation, training, runs, sweeps, ablations.

Every flag has a config-file equivalent (INI sections named after the
subcommand, plus [common]); explicit CLI flags win over file values. All
commands are reproducible from (config, seed): outputs are byte-identical
across re-runs except for wall-clock timing columns.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, EvgateError
from .metrics import (
    ConfusionMatrix,
    ReportRow,
    accumulate_confusion,
    build_report,
    miou,
    render_table,
    report_to_csv,
)
from .pipeline import GateConfig, load_corpus, run_sequence
from .regions import LabelMap, parse_grid_shape, write_label_map
from .snn.layers import ForwardContext
from .snn.network import (
    BUILTIN_SPECS,
    NetworkSpec,
    SegSNNnet,
    load_checkpoint,
    save_checkpoint,
)
from .snn.train import train_network
from .synth import PRESETS, load_scene_spec, render_sequence, write_corpus


def _load_config(path, command: str) -> dict:
    parser = configparser.ConfigParser()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"bad config {path}: {exc}") from None
    values: dict[str, str] = {}
    for section in ("common", command):
        if section in parser:
            values.update(dict(parser[section]))
    return values


def _apply_config(args: argparse.Namespace, parser: argparse.ArgumentParser) -> None:
    if not getattr(args, "config", None):
        return
    file_values = _load_config(args.config, args.command)
    defaults = {a.dest: a.default for a in parser._actions}
    for key, raw in file_values.items():
        dest = key.replace("-", "_")
        if not hasattr(args, dest):
            raise ConfigError(f"unknown config key {key!r} for command {args.command}")
        # CLI flags override config values; config overrides defaults.
        if getattr(args, dest) == defaults.get(dest):
            setattr(args, dest, raw)


def _resolve_spec(name: str) -> NetworkSpec:
    if name in BUILTIN_SPECS:
        return BUILTIN_SPECS[name]
    path = Path(name)
    if not path.exists():
        raise ConfigError(f"--net must be one of {sorted(BUILTIN_SPECS)} or a spec file, got {name!r}")
    try:
        return NetworkSpec.from_dict(json.loads(path.read_text(encoding="utf-8")))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad network spec file {name}: {exc}") from None


def _parse_theta_list(text: str) -> list[float]:
    values = []
    for token in str(text).split(","):
        token = token.strip()
        if not token:
            continue
        values.append(float("inf") if token in ("inf", "never") else float(token))
    if not values:
        raise ConfigError("empty theta list")
    return values


def _corpus_frames_labels(corpus):
    frames, labels = [], []
    for i in range(len(corpus)):
        frames.append(corpus.load_frame(i).astype(float) / 255.0)
        gt = corpus.load_gt(i)
        if gt is None:
            raise ConfigError(f"frame {i} lacks ground truth; training needs labels")
        labels.append(gt.labels)
    return np.stack(frames)[:, None], np.stack(labels)


def _eval_miou(net, frames, labels) -> float:
    cm = ConfusionMatrix.zeros(net.spec.num_classes)
    for x, y in zip(frames, labels):
        ctx = ForwardContext(train=False)
        scores = net.forward(x[None], ctx)[0]
        accumulate_confusion(LabelMap(y, net.spec.num_classes),
                             LabelMap(np.argmax(scores, axis=0), net.spec.num_classes), cm)
    return miou(cm)


# --- subcommands ----------------------------------------------------------------


def cmd_gen(args) -> int:
    if args.scene:
        spec = load_scene_spec(args.scene)
    elif args.preset:
        factory = PRESETS.get(args.preset)
        if factory is None:
            raise ConfigError(f"unknown preset {args.preset!r}; have {sorted(PRESETS)}")
        kwargs = {"seed": int(args.seed)}
        if args.frames:
            kwargs["frames"] = int(args.frames)
        spec = factory(**kwargs)
    else:
        raise ConfigError("gen needs --preset or --scene")
    sequence = render_sequence(spec)
    manifest = write_corpus(sequence, args.out, with_flows=not args.no_flows)
    print(manifest)
    return 0


def cmd_train(args) -> int:
    corpus = load_corpus(args.corpus)
    spec = _resolve_spec(args.net)
    frames, labels = _corpus_frames_labels(corpus)
    if labels.max() >= spec.num_classes:
        raise ConfigError(f"corpus has {labels.max() + 1}+ classes, network expects {spec.num_classes}")
    val_idx = np.arange(len(frames)) % 5 == 4  # fixed held-out split
    train_x, train_y = frames[~val_idx], labels[~val_idx]
    val_x, val_y = frames[val_idx], labels[val_idx]
    spec = NetworkSpec.from_dict({**spec.to_dict(),
                                  "train_height": train_x.shape[2],
                                  "train_width": train_x.shape[3]})
    net = SegSNNnet(spec, seed=int(args.seed))

    def val_hook(net, epoch):
        if len(val_x) and (epoch + 1) % max(1, int(args.eval_every)) == 0:
            score = _eval_miou(net, val_x, val_y)
            print(f"epoch {epoch:3d}  val_miou {score:.4f}")
            return score
        return None

    history = train_network(net, train_x, train_y, epochs=int(args.epochs),
                            batch_size=int(args.batch), lr=float(args.lr),
                            seed=int(args.seed), val_hook=val_hook,
                            log=lambda e, l: print(f"epoch {e:3d}  loss {l:.4f}"))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(net, out, extra={"seed": int(args.seed), "epochs": int(args.epochs),
                                     "lr": float(args.lr), "batch": int(args.batch)})
    if history.val_miou:
        print(f"final val_miou {history.val_miou[-1][1]:.4f}")
    print(out)
    return 0


def _gate_config(args, rows: int, cols: int, threshold: float) -> GateConfig:
    return GateConfig(threshold=threshold, reset_period=int(args.reset_period),
                      rows=rows, cols=cols, overlap=int(args.overlap),
                      interval_mode=args.interval_mode)


def _report_row(label: str, rep, extra: dict | None = None) -> ReportRow:
    return ReportRow(
        theta=label,
        miou=rep.miou,
        fps_wall=rep.fps,
        acc_flops=rep.acc_flops,
        mac_flops=rep.mac_flops,
        processed=list(rep.processed_per_region),
        reused=list(rep.reused_per_region),
        extra=extra or {},
    )


def _write_labels(report, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, lm in enumerate(report.label_maps):
        write_label_map(out_dir / f"pred_{i:04d}.pgm", lm)


def cmd_run(args) -> int:
    corpus = load_corpus(args.corpus)
    net = load_checkpoint(args.checkpoint)
    rows, cols = parse_grid_shape(args.grid)
    cfg = _gate_config(args, rows, cols, float(args.theta))
    rep = run_sequence(corpus, cfg, net, threads=int(args.threads))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.save_labels:
        _write_labels(rep, out / "labels")
    row = _report_row(f"{cfg.threshold:g}", rep)
    report = build_report([row])
    csv_text = report_to_csv(report, out / "run.csv")
    print(render_table(report))
    miou_txt = "n/a" if rep.miou is None else f"{rep.miou:.4f}"
    print(f"frames={rep.n_frames} miou={miou_txt} fps={rep.fps:.2f} "
          f"activation_rate={rep.activation_rate:.4f}")
    return 0


def cmd_sweep(args) -> int:
    corpus = load_corpus(args.corpus)
    net = load_checkpoint(args.checkpoint)
    thetas = _parse_theta_list(args.theta)
    grids = [parse_grid_shape(g) for g in str(args.grid).split(",") if g.strip()]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train_dims = (net.spec.train_height, net.spec.train_width)

    all_rows: list[ReportRow] = []
    for rows_, cols_ in grids:
        label_prefix = f"{rows_}x{cols_}:" if len(grids) > 1 else ""
        baseline = run_sequence(corpus, _gate_config(args, 1, 1, 0.0), net,
                                collect_labels=False, threads=int(args.threads))
        split = run_sequence(corpus, _gate_config(args, rows_, cols_, 0.0), net,
                             collect_labels=False, threads=int(args.threads))
        dims_differ = any(dims != train_dims for dims in split.region_dims)
        flag = {"grid": f"{rows_}x{cols_}",
                "dims_match_training": "no" if dims_differ else "yes"}
        rows = [
            _report_row(label_prefix + "baseline", baseline,
                        {"grid": "1x1",
                         "dims_match_training": "yes" if (baseline.region_dims[0] == train_dims) else "no"}),
            _report_row(label_prefix + "0_split", split, flag),
        ]
        for theta in thetas:
            if theta == 0.0:
                continue
            rep = run_sequence(corpus, _gate_config(args, rows_, cols_, theta), net,
                               collect_labels=False, threads=int(args.threads))
            rows.append(_report_row(label_prefix + f"{theta:g}", rep, flag))
        all_rows.extend(rows)

    report = build_report(all_rows, extra_columns=["grid", "dims_match_training"])
    csv_path = out / "sweep.csv"
    report_to_csv(report, csv_path)
    print(render_table(report))
    print(csv_path)
    return 0


def cmd_ablate_warp(args) -> int:
    corpus = load_corpus(args.corpus)
    net = load_checkpoint(args.checkpoint)
    thetas = _parse_theta_list(args.theta)
    rows_, cols_ = parse_grid_shape(args.grid)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    rows: list[ReportRow] = []
    baseline = run_sequence(corpus, _gate_config(args, 1, 1, 0.0), net,
                            collect_labels=False, threads=int(args.threads))
    rows.append(_report_row("baseline", baseline,
                            {"miou_up": "", "fps_up": "", "miou_of": "", "fps_of": ""}))
    for theta in thetas:
        cfg = _gate_config(args, rows_, cols_, theta)
        copy_rep = run_sequence(corpus, cfg, net, collect_labels=False,
                                threads=int(args.threads))
        warp_rep = run_sequence(corpus, cfg, net, reuse_mode="warp",
                                collect_labels=False, threads=int(args.threads))
        extra = {
            "miou_up": "" if copy_rep.miou is None else f"{copy_rep.miou:.6f}",
            "fps_up": f"{copy_rep.fps:.3f}",
            "miou_of": "" if warp_rep.miou is None else f"{warp_rep.miou:.6f}",
            "fps_of": f"{warp_rep.fps:.3f}",
        }
        rows.append(_report_row(f"{theta:g}", copy_rep, extra))
    report = build_report(rows, extra_columns=["miou_of", "fps_of", "miou_up", "fps_up"])
    csv_path = out / "ablate_warp.csv"
    report_to_csv(report, csv_path)
    print(render_table(report))
    print(csv_path)
    return 0


def cmd_report(args) -> int:
    from .metrics import read_report_csv

    rows = read_report_csv(args.csv)
    if not rows:
        print("empty report")
        return 0
    headers = list(rows[0].keys())
    table = [headers, ["-" * len(h) for h in headers]]
    table += [[row[h] for h in headers] for row in rows]
    widths = [max(len(r[i]) for r in table) for i in range(len(headers))]
    for row in table:
        print("  ".join(cell.rjust(w) for cell, w in zip(row, widths)))
    return 0


# --- argument wiring ------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="INI config file; CLI flags override it")
    p.add_argument("--seed", default=0, help="deterministic RNG seed")
    p.add_argument("--threads", default=1, help="worker cap for per-region processing")


def _add_gate(p: argparse.ArgumentParser) -> None:
    p.add_argument("--grid", default="1x3", help="region grid RxC (sweep: comma list)")
    p.add_argument("--overlap", default=20, help="pixels shared between adjacent regions")
    p.add_argument("--reset-period", default=5, dest="reset_period",
                   help="force full processing every Nth frame")
    p.add_argument("--interval-mode", default="per_region", dest="interval_mode",
                   choices=("per_region", "global"),
                   help="measure densities since each region's keyframe or since the previous frame")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evgate",
        description="Event-density-gated semantic segmentation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic corpus")
    p.add_argument("--preset", default=None, help=f"bundled scene: {sorted(PRESETS)}")
    p.add_argument("--scene", default=None, help="scene spec INI file")
    p.add_argument("--frames", default=None, help="override preset frame count")
    p.add_argument("--no-flows", action="store_true", dest="no_flows",
                   help="skip writing ground-truth flow fields")
    p.add_argument("--out", required=True, help="corpus output directory")
    _add_common(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a network on a corpus")
    p.add_argument("--corpus", required=True, help="corpus manifest path")
    p.add_argument("--net", default="desk", help="reference | desk | spec JSON path")
    p.add_argument("--epochs", default=30)
    p.add_argument("--lr", default=0.02)
    p.add_argument("--batch", default=4)
    p.add_argument("--eval-every", default=5, dest="eval_every")
    p.add_argument("--out", required=True, help="checkpoint output path")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("run", help="single gated run at one threshold")
    p.add_argument("--corpus", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--theta", default="0", help="event-density threshold")
    p.add_argument("--save-labels", action="store_true", dest="save_labels")
    p.add_argument("--out", required=True)
    _add_gate(p)
    _add_common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="threshold sweep with baselines")
    p.add_argument("--corpus", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--theta", required=True, help="comma list of thresholds")
    p.add_argument("--out", required=True)
    _add_gate(p)
    _add_common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ablate-warp", help="copy-reuse vs flow-warp reuse")
    p.add_argument("--corpus", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--theta", required=True, help="comma list of thresholds")
    p.add_argument("--out", required=True)
    _add_gate(p)
    _add_common(p)
    p.set_defaults(func=cmd_ablate_warp)

    p = sub.add_parser("report", help="pretty-print a report CSV")
    p.add_argument("--csv", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config(args, parser)
        return args.func(args)
    except EvgateError as exc:
        print(f"error [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
