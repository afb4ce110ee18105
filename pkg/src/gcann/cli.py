"""Command-line front end.

Exit codes: 0 success, 1 usage or data error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .data_pipeline import (DEV, MIRRORED, TRAIN, DataError, Experiment, Protocol, load_csv, standard_split,
                   synthesize, write_csv)
from .kinematics import DeformationState, Orientation
from .modeldoc import ModelFormatError, load_model, save_model, summary
from .objective import VAR_FLOOR, curve_nll, extra_nll, ideal_nll, nll, pointwise
from .stress_model import predict
from .trainer import TrainConfig, TrainingDivergence, fit, select, sweep

EXIT_OK, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _epochs(text: str) -> tuple[int, int]:
    parts = [int(p) for p in text.split(",")]
    if len(parts) == 1:
        parts = parts * 2
    if len(parts) != 2 or min(parts) < 0:
        raise argparse.ArgumentTypeError("expected N or N,M with non-negative integers")
    return parts[0], parts[1]


def _alphas(text: str) -> list[float]:
    try:
        values = [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad alpha list {text!r}") from None
    if not values or min(values) < 0:
        raise argparse.ArgumentTypeError("alphas must be a non-empty list of non-negative numbers")
    return values


def _config(args, alpha: float) -> TrainConfig:
    pre, reg = args.epochs
    return TrainConfig(learning_rate=args.lr, epochs_pretrain=pre, epochs_regularized=reg,
                       batch_size=args.batch_size, alpha=alpha, mode=args.mode, seed=args.seed,
                       log_every=args.log_every)


def _floor_fraction(model, data) -> float:
    _, var, _ = pointwise(model, data.observations(TRAIN))
    return float(np.mean(var < VAR_FLOOR))


def _provenance(result, data, mode) -> dict:
    return {"alpha": result.alpha, "seed": result.seed, "mode": str(mode.value),
            "data_hash": data.content_hash(), "train_nll": result.train_nll,
            "dev_nll": result.dev_nll, "lambda_max": result.lambda_max}


ROW_HEADER = ("mode", "alpha", "terms", "train_nll", "dev_nll", "floor_frac")


def _row(result, mode, data) -> list:
    return [mode.value, result.alpha, result.n_active_terms, f"{result.train_nll:.4f}",
            f"{result.dev_nll:.4f}", f"{_floor_fraction(result.model, data):.3f}"]


def cmd_fit(args) -> int:
    data = standard_split(load_csv(args.data))
    config = _config(args, args.alpha)
    result = fit(config, data)
    if args.out:
        save_model(result.model, args.out, _provenance(result, data, config.mode))
    print("\t".join(ROW_HEADER))
    print("\t".join(str(x) for x in _row(result, config.mode, data)))
    if args.verbose:
        for line in summary(result.model):
            print(line)
    return EXIT_OK


def cmd_sweep(args) -> int:
    data = standard_split(load_csv(args.data))
    base = _config(args, 0.0)
    results = sweep(args.alphas, base, data)
    chosen = select(results)
    rows = [_row(r, base.mode, data) + [int(r is chosen)] for r in results]
    header = ROW_HEADER + ("selected",)
    print("\t".join(header))
    for row in rows:
        print("\t".join(str(x) for x in row))
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
    if args.model_out:
        save_model(chosen.model, args.model_out, _provenance(chosen, data, base.mode))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    model, _ = load_model(args.model)
    data = load_csv(args.data)
    split = not args.no_split
    if split:
        data = standard_split(data)
        print(f"train_nll\t{nll(model, data, TRAIN):.6f}")
        print(f"dev_nll\t{nll(model, data, DEV):.6f}")
    else:
        print(f"nll\t{nll(model, data, None):.6f}")
    print("curve\tnll\tideal_nll\textra_nll")
    for cid in data.curve_ids:
        print(f"{cid}\t{curve_nll(model, data, cid):.6f}\t{ideal_nll(data, cid):.6f}\t"
              f"{extra_nll(model, data, cid):.6f}")
    return EXIT_OK


REPORT_COLUMNS = ("direction", "label", "stretch", "lambda1", "lambda2",
                  "data_mean", "data_std", "model_mean", "model_std")


def panel_rows(model, data, experiment: Experiment):
    """Rows of one panel and the extra NLL of each of its curves.

    Mirror-image curves of the +-45 mount are served from their partner when
    the dataset stores only one of the pair.
    """
    rows, extra = [], {}
    for direction in (1, 2):
        cid = experiment.curve_id(direction)
        source = cid if cid in data.curve_ids else MIRRORED.get(cid)
        if source not in data.curve_ids:
            continue
        curve = data.curve(source)
        if curve.orientation is not experiment.orientation:
            raise DataError(f"{cid}: data orientation {curve.orientation.value} does not match panel")
        groups = curve.point_groups()
        _, mean, var, _ = curve.empirical()
        l1 = np.array([curve.lambda1[g].mean() for g in groups])
        l2 = np.array([curve.lambda2[g].mean() for g in groups])
        if source != cid:
            l1, l2 = l2, l1  # mirror image swaps the loading axes
        driven = l1 if experiment.driven_axis == 1 else l2
        dist = predict(model, DeformationState(l1, l2, experiment.orientation))
        mu, v = (dist.mu11, dist.var11) if direction == 1 else (dist.mu22, dist.var22)
        for k in range(len(groups)):
            rows.append([direction, experiment.direction_label(direction), driven[k], l1[k], l2[k],
                         mean[k], np.sqrt(var[k]), mu[k], np.sqrt(v[k])])
        extra[cid] = extra_nll(model, data, source)
    return rows, extra


def _svg(path: Path, experiment: Experiment, rows) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    arr = np.array([r[2:] for r in rows], dtype=float)
    dirs = np.array([r[0] for r in rows])
    fig, ax = plt.subplots(figsize=(4, 3))
    for direction, color in ((1, "tab:red"), (2, "tab:blue")):
        sel = dirs == direction
        if not sel.any():
            continue
        x, dm, ds, mm, ms = arr[sel, 0], arr[sel, 3], arr[sel, 4], arr[sel, 5], arr[sel, 6]
        label = experiment.direction_label(direction)
        ax.plot(x, dm, color=color, lw=1, ls="--", label=f"data {label}")
        ax.fill_between(x, dm - ds, dm + ds, color=color, alpha=0.15)
        ax.plot(x, mm, color=color, lw=1.5, label=f"model {label}")
        ax.fill_between(x, mm - ms, mm + ms, color=color, alpha=0.25)
    ax.set_xlabel("stretch [-]")
    ax.set_ylabel("stress [kPa]")
    ax.set_title(experiment.value)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def cmd_report(args) -> int:
    model, _ = load_model(args.model)
    data = load_csv(args.data)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = {}
    for experiment in Experiment:
        rows, extra = panel_rows(model, data, experiment)
        if not rows:
            continue
        with open(out / f"{experiment.value}.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(REPORT_COLUMNS)
            writer.writerows([r[:2] + [repr(float(x)) for x in r[2:]] for r in rows])
        meta[experiment.value] = {"extra_nll": extra}
        if args.svg:
            _svg(out / f"{experiment.value}.svg", experiment, rows)
    (out / "metadata.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    for panel, info in meta.items():
        for cid, value in info["extra_nll"].items():
            print(f"{panel}\t{cid}\textra_nll={value:.4f}")
    return EXIT_OK


def cmd_predict(args) -> int:
    model, _ = load_model(args.model)
    state = DeformationState(args.lambda1, args.lambda2, Orientation.parse(args.orientation))
    dist = predict(model, state)
    for name, value in (("mu11", dist.mu11), ("mu22", dist.mu22),
                        ("std11", dist.std11), ("std22", dist.std22)):
        print(f"{name}\t{float(value)!r}")
    return EXIT_OK


def cmd_synth(args) -> int:
    model, _ = load_model(args.model)
    if args.samples < 1:
        raise DataError("need at least one sample")
    protocols = [Protocol(e, args.lambda_max) for e in Experiment]
    data = synthesize(model, protocols, n_samples=args.samples, n_points=args.points,
                      seed=args.seed, unique=not args.all_curves)
    write_csv(data, args.out)
    print(f"wrote {data.n_observations()} observations in {len(data.curves)} curves to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gcann", description="Gaussian constitutive model discovery for biaxial data")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def training(p):
        p.add_argument("--data", required=True)
        p.add_argument("--mode", choices=["det", "indep", "corr"], default="corr")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--epochs", type=_epochs, default=(2000, 2000), help="pretrain,regularized")
        p.add_argument("--lr", type=float, default=0.001)
        p.add_argument("--batch-size", type=int, default=1000)
        p.add_argument("--log-every", type=int, default=0)

    p = sub.add_parser("fit", help="train one model")
    training(p)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--out", help="model JSON to write")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("sweep", help="train across regularization strengths and select")
    training(p)
    p.add_argument("--alphas", type=_alphas, default=[0, 0.01, 0.03, 0.1, 0.3, 1.0])
    p.add_argument("--out", help="CSV table to write")
    p.add_argument("--model-out", help="JSON for the selected model")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("evaluate", help="NLL of a saved model on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--no-split", action="store_true", help="score all curves together")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="per-panel prediction bands as CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--svg", action="store_true", help="also render one SVG per panel")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("predict", help="stress distribution at one state")
    p.add_argument("--model", required=True)
    p.add_argument("--lambda1", type=float, required=True)
    p.add_argument("--lambda2", type=float, required=True)
    p.add_argument("--orientation", default="0-90")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("synth", help="synthesize a dataset from a model")
    p.add_argument("--model", required=True)
    p.add_argument("--samples", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--points", type=int, default=100)
    p.add_argument("--lambda-max", type=float, default=1.2)
    p.add_argument("--all-curves", action="store_true", help="keep mirror-image +-45 curves")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_DATA
    except TrainingDivergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OverflowError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, ModelFormatError, FileNotFoundError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
