"""Command-line surface.

Subcommands: train, eval, noise-sweep, expressibility, entangle, gates.
Every subcommand accepts --config FILE with flat key=value lines whose keys
mirror the long flag names (L_q=4, batch_size=500, ...); explicit flags win
over the file. Outputs carry no timestamps, so identical config and seed
reproduce identical files byte for byte.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import analysis
from .checkpoint import load_checkpoint, save_checkpoint
from .data import load_idx, split_train_val, take_subset
from .model import ModelConfig, init_params
from .training import TrainConfig, evaluate, train, write_metrics_csv

CHANNELS = ("AD", "DP", "BF", "PF")


def parse_config_file(path: str | Path) -> dict[str, str]:
    """Flat key=value file; blank lines and # comments are skipped."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def _resolve(args: argparse.Namespace, file_cfg: dict[str, str], key: str, default, cast):
    """Precedence: explicit CLI flag > config file entry > default."""
    cli_value = getattr(args, key, None)
    if cli_value is not None:
        return cli_value
    if key in file_cfg:
        raw = file_cfg[key]
        if cast is bool:
            return raw.lower() in ("1", "true", "yes")
        return cast(raw)
    return default


def _parse_milestones(text: str) -> tuple[int, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(int(part) for part in text.split(","))


def _model_config(args, file_cfg) -> ModelConfig:
    return ModelConfig(
        n_features=_resolve(args, file_cfg, "d", 16, int),
        n_memberships=_resolve(args, file_cfg, "m", 3, int),
        n_reuploads=_resolve(args, file_cfg, "L_q", 4, int),
        n_qd_qubits=_resolve(args, file_cfg, "q", 6, int),
        head_split=_resolve(args, file_cfg, "p", None, int),
        hidden_dim=_resolve(args, file_cfg, "hidden", 64, int),
        n_classes=_resolve(args, file_cfg, "n_classes", 10, int),
        image_size=_resolve(args, file_cfg, "image_size", 28, int),
    )


def _add_model_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--d", type=int, help="feature count")
    sub.add_argument("--m", type=int, help="membership functions per feature")
    sub.add_argument("--L_q", type=int, help="membership circuit layers")
    sub.add_argument("--q", type=int, help="defuzzifier qubits")
    sub.add_argument("--p", type=int, help="first head size (default q//2)")
    sub.add_argument("--hidden", type=int, help="classifier hidden width")
    sub.add_argument("--n-classes", dest="n_classes", type=int)
    sub.add_argument("--image-size", dest="image_size", type=int)


def _load_file_cfg(args) -> dict[str, str]:
    return parse_config_file(args.config) if getattr(args, "config", None) else {}


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_train(args) -> int:
    file_cfg = _load_file_cfg(args)
    model_cfg = _model_config(args, file_cfg)
    train_cfg = TrainConfig(
        batch_size=_resolve(args, file_cfg, "batch_size", 500, int),
        lr0=_resolve(args, file_cfg, "lr", 0.001, float),
        epochs=_resolve(args, file_cfg, "epochs", 200, int),
        milestones=_parse_milestones(_resolve(args, file_cfg, "milestones", "100,150", str)),
        seed=_resolve(args, file_cfg, "seed", 0, int),
    )
    train_images = _resolve(args, file_cfg, "train_images", None, str)
    train_labels = _resolve(args, file_cfg, "train_labels", None, str)
    if not train_images or not train_labels:
        raise ValueError("train needs --train-images and --train-labels")
    out_dir = Path(_resolve(args, file_cfg, "out_dir", "runs", str))
    seed = train_cfg.seed
    dataset = load_idx(train_images, train_labels, name="train")
    dataset = take_subset(dataset, _resolve(args, file_cfg, "train_n", len(dataset), int), seed)
    val_frac = _resolve(args, file_cfg, "val_frac", 0.1, float)
    (tr_x, tr_y), (va_x, va_y) = split_train_val(dataset.images, dataset.labels, val_frac, seed)

    params = init_params(model_cfg, seed=seed)
    result = train(tr_x, tr_y, va_x, va_y, params, model_cfg, train_cfg, log=print)

    out_dir.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(out_dir / "metrics.csv", result.history)
    save_checkpoint(out_dir / "checkpoint.bin", result.best_params, model_cfg)
    print(f"best epoch {result.best_epoch} val acc {result.best_val_accuracy:.4f}")

    test_images = _resolve(args, file_cfg, "test_images", None, str)
    test_labels = _resolve(args, file_cfg, "test_labels", None, str)
    if test_images and test_labels:
        test = load_idx(test_images, test_labels, name="test")
        test = take_subset(test, _resolve(args, file_cfg, "test_n", len(test), int), seed)
        rec = evaluate(result.best_params, model_cfg, test.images, test.labels,
                       batch_size=train_cfg.batch_size)
        print(f"test: acc {rec.accuracy:.4f} precision {rec.precision:.4f} "
              f"recall {rec.recall:.4f} f1 {rec.f1:.4f} loss {rec.loss:.4f}")
    print(f"wrote {out_dir / 'metrics.csv'} and {out_dir / 'checkpoint.bin'}")
    return 0


def cmd_eval(args) -> int:
    file_cfg = _load_file_cfg(args)
    ckpt = _resolve(args, file_cfg, "checkpoint", None, str)
    images = _resolve(args, file_cfg, "images", None, str)
    labels = _resolve(args, file_cfg, "labels", None, str)
    if not ckpt or not images or not labels:
        raise ValueError("eval needs --checkpoint, --images and --labels")
    params, model_cfg = load_checkpoint(ckpt)
    dataset = load_idx(images, labels, name="eval")
    n = _resolve(args, file_cfg, "test_n", len(dataset), int)
    dataset = take_subset(dataset, n, _resolve(args, file_cfg, "seed", 0, int))
    rec = evaluate(params, model_cfg, dataset.images, dataset.labels,
                   batch_size=_resolve(args, file_cfg, "batch_size", 500, int))
    print(f"samples {len(dataset)}")
    print(f"loss {rec.loss:.6f}")
    print(f"accuracy {rec.accuracy:.6f}")
    print(f"precision {rec.precision:.6f}")
    print(f"recall {rec.recall:.6f}")
    print(f"f1 {rec.f1:.6f}")
    return 0


def _parse_p_list(text: str) -> list[float]:
    return [float(part) for part in text.split(",") if part.strip()]


def cmd_noise_sweep(args) -> int:
    file_cfg = _load_file_cfg(args)
    channel = _resolve(args, file_cfg, "channel", "all", str)
    kinds = CHANNELS if channel == "all" else (channel,)
    p_list = _parse_p_list(_resolve(args, file_cfg, "p_list", "0.01,0.05,0.10", str))
    n_inputs = _resolve(args, file_cfg, "n_inputs", analysis.DEFAULT_N_INPUTS, int)
    n_layers = _resolve(args, file_cfg, "L_q", 4, int)
    seed = _resolve(args, file_cfg, "seed", 0, int)

    rows = ["channel,P,input,fidelity"]
    summary: dict = {"n_inputs": n_inputs, "L_q": n_layers, "seed": seed, "mean_fidelity": {}}
    for kind in kinds:
        results = analysis.noise_sweep(kind, p_list, n_inputs=n_inputs,
                                       n_layers=n_layers, seed=seed)
        summary["mean_fidelity"][kind] = {}
        for res in results:
            print(f"{kind}  P={res.probability:.4g}  mean fidelity {res.mean_fidelity:.4f}")
            summary["mean_fidelity"][kind][f"{res.probability:.4g}"] = res.mean_fidelity
            for x, f in zip(res.inputs, res.fidelities):
                rows.append(f"{kind},{res.probability!r},{x!r},{f!r}")

    out_dir = _resolve(args, file_cfg, "out_dir", None, str)
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "noise_sweep.csv").write_text("\n".join(rows) + "\n")
        (out / "noise_sweep.json").write_text(json.dumps(summary, indent=2) + "\n")
        print(f"wrote {out / 'noise_sweep.csv'} and {out / 'noise_sweep.json'}")
    return 0


def cmd_expressibility(args) -> int:
    file_cfg = _load_file_cfg(args)
    result = analysis.expressibility_score(
        n_qubits=_resolve(args, file_cfg, "q", 6, int),
        n_layers=_resolve(args, file_cfg, "L_q", 4, int),
        n_pairs=_resolve(args, file_cfg, "n_pairs", analysis.DEFAULT_N_PAIRS, int),
        n_bins=_resolve(args, file_cfg, "n_bins", analysis.DEFAULT_N_BINS, int),
        seed=_resolve(args, file_cfg, "seed", 0, int),
    )
    print(f"expressibility (KL vs Haar): {result.expressibility:.5f}  "
          f"[q={result.n_qubits} L_q={result.n_reuploads} pairs={result.n_pairs} "
          f"bins={result.n_bins} seed={result.seed}]")
    _write_json(args, file_cfg, "expressibility.json", result)
    return 0


def cmd_entangle(args) -> int:
    file_cfg = _load_file_cfg(args)
    result = analysis.entangling_score(
        n_qubits=_resolve(args, file_cfg, "q", 6, int),
        n_layers=_resolve(args, file_cfg, "L_q", 4, int),
        n_samples=_resolve(args, file_cfg, "n_samples", analysis.DEFAULT_N_ENT_SAMPLES, int),
        seed=_resolve(args, file_cfg, "seed", 0, int),
    )
    print(f"entangling capability (mean Meyer-Wallach): {result.entanglement:.5f}  "
          f"[q={result.n_qubits} L_q={result.n_reuploads} samples={result.n_samples} "
          f"seed={result.seed}]")
    _write_json(args, file_cfg, "entangle.json", result)
    return 0


def _write_json(args, file_cfg, filename: str, result) -> None:
    out_dir = _resolve(args, file_cfg, "out_dir", None, str)
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        payload = {k: v for k, v in vars(result).items() if v is not None}
        (out / filename).write_text(json.dumps(payload, indent=2) + "\n")
        print(f"wrote {out / filename}")


def cmd_gates(args) -> int:
    file_cfg = _load_file_cfg(args)
    report = analysis.gate_count_report(_model_config(args, file_cfg))
    print(f"QMF single-qubit gates per sample: {report.qmf_gates_per_sample}")
    print(f"QD Rx gates: {report.qd_rx_gates}")
    print(f"QD cluster CNOTs: {report.qd_cluster_cnots}")
    print(f"QD wrap-around CNOTs: {report.qd_wraparound_cnots}")
    for group, count in report.parameters.items():
        print(f"parameters[{group}]: {count}")
    print(f"total parameters: {report.total_parameters}")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hqfnn",
                                     description="Hybrid quantum-fuzzy classifier toolkit")
    subs = parser.add_subparsers(dest="command")

    sub = subs.add_parser("train", help="train a model and write metrics + checkpoint")
    sub.add_argument("--config", help="key=value config file")
    sub.add_argument("--train-images", dest="train_images")
    sub.add_argument("--train-labels", dest="train_labels")
    sub.add_argument("--test-images", dest="test_images")
    sub.add_argument("--test-labels", dest="test_labels")
    sub.add_argument("--train-n", dest="train_n", type=int, help="seeded training subset size")
    sub.add_argument("--test-n", dest="test_n", type=int, help="seeded test subset size")
    sub.add_argument("--val-frac", dest="val_frac", type=float, help="validation holdout fraction")
    sub.add_argument("--epochs", type=int)
    sub.add_argument("--batch-size", dest="batch_size", type=int)
    sub.add_argument("--lr", type=float)
    sub.add_argument("--milestones", help="comma-separated decay epochs")
    sub.add_argument("--seed", type=int)
    sub.add_argument("--out-dir", dest="out_dir")
    _add_model_flags(sub)
    sub.set_defaults(func=cmd_train)

    sub = subs.add_parser("eval", help="evaluate a checkpoint on a dataset")
    sub.add_argument("--config", help="key=value config file")
    sub.add_argument("--checkpoint")
    sub.add_argument("--images")
    sub.add_argument("--labels")
    sub.add_argument("--test-n", dest="test_n", type=int)
    sub.add_argument("--batch-size", dest="batch_size", type=int)
    sub.add_argument("--seed", type=int)
    sub.set_defaults(func=cmd_eval)

    sub = subs.add_parser("noise-sweep", help="fidelity of the noisy membership circuit")
    sub.add_argument("--config", help="key=value config file")
    sub.add_argument("--channel", choices=CHANNELS + ("all",))
    sub.add_argument("--p-list", dest="p_list", help="comma-separated channel strengths")
    sub.add_argument("--n-inputs", dest="n_inputs", type=int)
    sub.add_argument("--L_q", type=int)
    sub.add_argument("--seed", type=int)
    sub.add_argument("--out-dir", dest="out_dir")
    sub.set_defaults(func=cmd_noise_sweep)

    sub = subs.add_parser("expressibility", help="KL divergence of the block vs Haar")
    sub.add_argument("--config", help="key=value config file")
    sub.add_argument("--q", type=int)
    sub.add_argument("--L_q", type=int)
    sub.add_argument("--n-pairs", dest="n_pairs", type=int)
    sub.add_argument("--n-bins", dest="n_bins", type=int)
    sub.add_argument("--seed", type=int)
    sub.add_argument("--out-dir", dest="out_dir")
    sub.set_defaults(func=cmd_expressibility)

    sub = subs.add_parser("entangle", help="mean Meyer-Wallach of the block")
    sub.add_argument("--config", help="key=value config file")
    sub.add_argument("--q", type=int)
    sub.add_argument("--L_q", type=int)
    sub.add_argument("--n-samples", dest="n_samples", type=int)
    sub.add_argument("--seed", type=int)
    sub.add_argument("--out-dir", dest="out_dir")
    sub.set_defaults(func=cmd_entangle)

    sub = subs.add_parser("gates", help="gate and parameter counts")
    sub.add_argument("--config", help="key=value config file")
    _add_model_flags(sub)
    sub.set_defaults(func=cmd_gates)

    return parser


def run_cli(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "command", None) is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        return args.func(args)
    except BrokenPipeError:
        return 1
    except Exception as exc:  # surface a message, not a traceback
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
