"""Batch command-line front end.

Configuration is a flat ``key = value`` file with dotted section prefixes
(``loss.kind``, ``train.lr_max``, ...).  Command-line flags override the file.
Every random stream derives from the single top-level ``seed``.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 numeric abort.
"""

from __future__ import annotations

import argparse
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import _backend
from .analysis import (
    BoundInput,
    generalization_bound,
    histogram,
    separability,
)
from .data_io import (
    Dataset,
    SynthConfig,
    load_csv,
    load_dataset,
    save_csv,
    save_dataset,
    split,
    synth_generate,
    write_csv,
    write_curve,
    write_json,
)
from .errors import ConfigError, DataError, NumericAbort, TrustpredError
from .losses import LossKind, LossSpec, Wrapper, loss_range_max
from .metrics import ThresholdPolicy, full_report, pr_points, risk_coverage, roc_points
from .oracle import (
    HeadMode,
    OracleHead,
    Schedule,
    SweepPhase,
    TrainConfig,
    confidences,
    load_head,
    save_head,
    sweep_alpha,
    train,
)

_LOSS_NAMES = {
    "ce": LossKind.CE,
    "cross_entropy": LossKind.CE,
    "focal": LossKind.FOCAL,
    "tcp": LossKind.TCP,
    "ss": LossKind.STEEP_SLOPE,
    "steep_slope": LossKind.STEEP_SLOPE,
}
_WRAPPER_NAMES = {
    "none": Wrapper.NONE,
    "cb": Wrapper.CLASS_BALANCED,
    "class_balanced": Wrapper.CLASS_BALANCED,
    "fixed": Wrapper.FIXED,
}

# key -> parser for the value string
_KEYS = {
    "seed": int,
    "out": str,
    "data.path": str,
    "data.eval_path": str,
    "data.split": float,
    "data.k": int,
    "synth.d": int,
    "synth.n": int,
    "synth.imbalance": float,
    "synth.mean_separation": float,
    "synth.sigma": float,
    "synth.k": int,
    "synth.p_star_noise": float,
    "loss.kind": str,
    "loss.gamma": float,
    "loss.alpha_pos": float,
    "loss.alpha_neg": float,
    "loss.wrapper": str,
    "loss.beta": float,
    "loss.w_pos": float,
    "loss.w_neg": float,
    "train.lr_max": float,
    "train.momentum": float,
    "train.weight_decay": float,
    "train.batch_size": int,
    "train.epochs": int,
    "train.schedule": str,
    "head.mode": str,
    "policy.threshold_pos": float,
    "policy.threshold_neg": float,
    "report.bins": int,
}


def parse_config_text(text: str, source: str = "<config>") -> dict:
    values = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{line_no}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"{source}:{line_no}: unknown key {key!r}")
        values[key] = _coerce(key, value, f"{source}:{line_no}")
    return values


def _coerce(key: str, value, where: str):
    try:
        return _KEYS[key](value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: bad value {value!r} for {key}: {exc}") from exc


def read_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, str(path))


@dataclass
class ExperimentConfig:
    seed: int = 0
    out: Path = Path("out")
    data_path: str | None = None
    eval_path: str | None = None
    split_fraction: float = 0.8
    csv_k: int = 2
    synth: SynthConfig | None = field(default_factory=SynthConfig)
    loss: LossSpec = field(default_factory=LossSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    head_mode: HeadMode = HeadMode.SIGNED_DISTANCE
    policy: ThresholdPolicy = field(default_factory=ThresholdPolicy)
    bins: int = 50

    @classmethod
    def from_values(cls, values: dict) -> ExperimentConfig:
        v = dict(values)
        try:
            seed = int(v.get("seed", 0))
            if not 0 <= seed < 2**64:
                raise ConfigError("seed must be an unsigned 64-bit integer")
            synth_keys = {k for k in v if k.startswith("synth.")}
            data_path = v.get("data.path")
            if data_path and synth_keys:
                raise ConfigError("give either data.path or synth.* settings, not both")
            synth = None
            if not data_path:
                synth = SynthConfig(
                    d=v.get("synth.d", 16),
                    n=v.get("synth.n", 10_000),
                    imbalance=v.get("synth.imbalance", 0.839),
                    mean_separation=v.get("synth.mean_separation", 1.5),
                    sigma=v.get("synth.sigma", 1.0),
                    seed=seed,
                    k=v.get("synth.k", 1000),
                    p_star_noise=v.get("synth.p_star_noise", 0.05),
                )
            kind_name = str(v.get("loss.kind", "ce")).lower()
            if kind_name not in _LOSS_NAMES:
                raise ConfigError(f"unknown loss kind {kind_name!r}")
            wrapper_name = str(v.get("loss.wrapper", "none")).lower()
            if wrapper_name not in _WRAPPER_NAMES:
                raise ConfigError(f"unknown loss wrapper {wrapper_name!r}")
            loss = LossSpec(
                kind=_LOSS_NAMES[kind_name],
                gamma=v.get("loss.gamma", 2.0),
                alpha_pos=v.get("loss.alpha_pos", 1.0),
                alpha_neg=v.get("loss.alpha_neg", 3.0),
                wrapper=_WRAPPER_NAMES[wrapper_name],
                beta=v.get("loss.beta", 0.999),
                w_pos=v.get("loss.w_pos", 1.0),
                w_neg=v.get("loss.w_neg", 1.0),
            )
            train_cfg = TrainConfig(
                lr_max=v.get("train.lr_max", 1e-5),
                momentum=v.get("train.momentum", 0.05),
                weight_decay=v.get("train.weight_decay", 0.0),
                batch_size=v.get("train.batch_size", 40),
                epochs=v.get("train.epochs", 1),
                seed=seed,
                schedule=Schedule(str(v.get("train.schedule", "one_cycle")).lower()),
            )
            mode = HeadMode(str(v.get("head.mode", "signed_distance")).lower())
            pos_thr = v.get("policy.threshold_pos", 0.5)
            if "policy.threshold_neg" in v:
                neg_thr = v["policy.threshold_neg"]
            elif loss.kind is LossKind.TCP:
                neg_thr = None  # 1/K, resolved once K is known
            else:
                neg_thr = 0.5
            split_fraction = v.get("data.split", 0.8)
            if not 0 < split_fraction < 1:
                raise ConfigError("data.split must lie in (0, 1)")
            cfg = cls(
                seed=seed,
                out=Path(v.get("out", "out")),
                data_path=data_path,
                eval_path=v.get("data.eval_path"),
                split_fraction=split_fraction,
                csv_k=v.get("data.k", 2),
                synth=synth,
                loss=loss,
                train=train_cfg,
                head_mode=mode,
                policy=ThresholdPolicy(pos_thr, pos_thr if neg_thr is None else neg_thr),
                bins=v.get("report.bins", 50),
            )
            cfg._tcp_default_neg = neg_thr is None
            return cfg
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def resolve_policy(self, k: int) -> ThresholdPolicy:
        if getattr(self, "_tcp_default_neg", False):
            return ThresholdPolicy(self.policy.positive_threshold, 1.0 / k)
        return self.policy


def _load_any(path: str, k: int) -> Dataset:
    try:
        if path.lower().endswith(".csv"):
            return load_csv(path, k=k)
        return load_dataset(path)
    except OSError as exc:
        raise DataError(f"cannot read dataset {path}: {exc}") from exc


def load_data(cfg: ExperimentConfig) -> tuple[Dataset, Dataset]:
    """(train, eval) datasets for an experiment."""
    if cfg.data_path:
        data = _load_any(cfg.data_path, cfg.csv_k)
    else:
        data = synth_generate(cfg.synth)
    if cfg.eval_path:
        return data, _load_any(cfg.eval_path, cfg.csv_k)
    return split(data, cfg.split_fraction, cfg.seed)


def write_evaluation(out: Path, conf: np.ndarray, o: np.ndarray,
                     policy: ThresholdPolicy, bins: int) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    curves = out / "curves"
    curves.mkdir(exist_ok=True)
    report = full_report(conf, o, policy).to_dict()
    write_json(out / "report.json", report)
    write_json(out / "separability.json", separability(conf, o))
    write_curve(curves / "roc.csv", roc_points(conf, o))
    write_curve(curves / "pr_success.csv", pr_points(conf, o, positive_is_error=False))
    write_curve(curves / "pr_error.csv", pr_points(conf, o, positive_is_error=True))
    write_curve(curves / "risk_coverage.csv",
                [(p.coverage, p.selective_risk) for p in risk_coverage(conf, o)])
    hist = histogram(conf, o, policy, bins)
    write_csv(out / "histogram.csv",
              ["bin_lo", "bin_hi", "tp", "fp", "tn", "fn", "abstain"], hist.rows())
    return report


def run_experiment(cfg: ExperimentConfig, out: Path) -> dict:
    train_set, eval_set = load_data(cfg)
    hist = train(train_set, cfg.loss, cfg.train, mode=cfg.head_mode)
    out.mkdir(parents=True, exist_ok=True)
    save_head(hist.head, out / "head.json")
    hist.write_jsonl(out / "history.jsonl")
    conf = confidences(hist.head, eval_set)
    return write_evaluation(out, conf, eval_set.o, cfg.resolve_policy(eval_set.k), cfg.bins)


def _summary(report: dict) -> str:
    return " ".join(f"{k}={report[k]:.4f}" for k in
                    ("acc", "fpr_at_95tpr", "aupr_error", "aupr_success", "auc", "tpr", "tnr"))


# --- commands -------------------------------------------------------------

def cmd_synth(cfg: ExperimentConfig, args) -> int:
    if cfg.synth is None:
        raise ConfigError("synth needs synth.* settings, not data.path")
    data = synth_generate(cfg.synth)
    cfg.out.mkdir(parents=True, exist_ok=True)
    path = cfg.out / ("dataset.csv" if args.csv else "dataset.twf")
    (save_csv if args.csv else save_dataset)(data, path)
    print(f"wrote {path}: n={data.n} d={data.d} n_pos={data.n_pos} n_neg={data.n_neg}")
    return 0


def cmd_train(cfg: ExperimentConfig, args) -> int:
    report = run_experiment(cfg, cfg.out)
    print(f"[{cfg.loss.label}] {_summary(report)}")
    return 0


def cmd_eval(cfg: ExperimentConfig, args) -> int:
    if not args.head:
        raise ConfigError("eval needs --head")
    try:
        head = load_head(args.head)
    except (OSError, KeyError, ValueError) as exc:
        raise DataError(f"cannot read head {args.head}: {exc}") from exc
    _, eval_set = load_data(cfg)
    conf = confidences(head, eval_set)
    report = write_evaluation(cfg.out, conf, eval_set.o, cfg.resolve_policy(eval_set.k), cfg.bins)
    print(_summary(report))
    return 0


def cmd_report(cfg: ExperimentConfig, args) -> int:
    if not args.records:
        raise ConfigError("report needs --records (CSV with columns confidence,o)")
    try:
        raw = np.genfromtxt(args.records, delimiter=",", names=True)
        conf, o = np.atleast_1d(raw["confidence"]), np.atleast_1d(raw["o"]).astype(int)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read records {args.records}: {exc}") from exc
    report = write_evaluation(cfg.out, conf, o, cfg.policy, cfg.bins)
    print(_summary(report))
    return 0


def _parse_grid(text: str) -> list[float]:
    try:
        grid = [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --grid {text!r}: {exc}") from exc
    if not grid:
        raise ConfigError("--grid is empty")
    return grid


def cmd_sweep(cfg: ExperimentConfig, args) -> int:
    if not args.grid:
        raise ConfigError("sweep needs --grid, e.g. --grid 1,3,5")
    grid = _parse_grid(args.grid)
    train_set, eval_set = load_data(cfg)
    rows = sweep_alpha(train_set, eval_set, cfg.loss, grid, SweepPhase(args.phase),
                       cfg.train, None, cfg.head_mode, cfg.resolve_policy(eval_set.k),
                       workers=args.workers)
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_csv(cfg.out / "sweep.csv",
              ["alpha", "alpha_pos", "alpha_neg", "loss", "tpr", "tnr", "status"],
              [(r.alpha, r.alpha_pos, r.alpha_neg, r.loss, r.tpr, r.tnr,
                "ok" if r.ok else r.error) for r in rows])
    for r in rows:
        state = "" if r.ok else f"  FAILED: {r.error}"
        print(f"alpha={r.alpha:g} loss={r.loss:.5f} tpr={r.tpr:.4f} tnr={r.tnr:.4f}{state}")
    failed = [r for r in rows if not r.ok]
    if failed:
        print(f"partial results: {len(failed)} of {len(rows)} grid points failed", file=sys.stderr)
        kinds = {r.error.split(":", 1)[0] for r in failed}
        if "NumericAbort" in kinds:
            return 3
        return 2 if kinds & {"DataError", "MissingPStarError", "DatasetFormatError"} else 1
    return 0


def cmd_bound(cfg: ExperimentConfig, args) -> int:
    try:
        if args.loss_max is not None:
            if args.alpha_pos is not None or args.alpha_neg is not None:
                raise ConfigError("give --loss-max or --alpha-pos/--alpha-neg, not both")
            loss_max = args.loss_max
        elif args.alpha_pos is not None and args.alpha_neg is not None:
            loss_max = loss_range_max(args.alpha_pos, args.alpha_neg)
        else:
            raise ConfigError("bound needs --loss-max or both --alpha-pos and --alpha-neg")
        if args.hypotheses is None or args.delta is None or args.samples is None:
            raise ConfigError("bound needs --hypotheses, --delta and --samples")
        value = generalization_bound(
            BoundInput(loss_max, args.hypotheses, args.delta, args.samples))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    print(f"{value:.9g}")
    return 0


def _compare_run(job):
    label, cfg, out = job
    try:
        return label, run_experiment(cfg, out), None
    except TrustpredError as exc:
        return label, None, exc


def cmd_compare(cfg: ExperimentConfig, args, base_values: dict, flag_values: dict) -> int:
    runs: list[tuple[str, ExperimentConfig]] = []
    if args.losses:
        for name in (t.strip() for t in args.losses.split(",") if t.strip()):
            values = {**base_values, **flag_values, "loss.kind": name}
            runs.append((name, ExperimentConfig.from_values(values)))
    for path in args.run or []:
        values = {**base_values, **read_config(path), **flag_values}
        runs.append((Path(path).stem, ExperimentConfig.from_values(values)))
    if len(runs) < 2:
        raise ConfigError("compare needs at least two losses (--losses a,b or --run files)")
    ref = runs[0][1]
    for label, run in runs[1:]:
        if run.train != ref.train or run.head_mode != ref.head_mode:
            raise ConfigError(
                f"run {label!r} does not share the training configuration of {runs[0][0]!r}: "
                f"{asdict(run.train)} vs {asdict(ref.train)}")
        if (run.data_path, run.eval_path, run.synth, run.split_fraction) != (
                ref.data_path, ref.eval_path, ref.synth, ref.split_fraction):
            raise ConfigError(f"run {label!r} uses different data than {runs[0][0]!r}")
    seen: dict[str, int] = {}
    jobs = []
    for label, run in runs:
        seen[label] = seen.get(label, 0) + 1
        name = label if seen[label] == 1 else f"{label}_{seen[label]}"
        jobs.append((name, run, cfg.out / name))
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=min(args.workers, len(jobs))) as pool:
            results = list(pool.map(_compare_run, jobs))
    else:
        results = [_compare_run(j) for j in jobs]
    table = []
    worst = 0
    for (name, run, out), (_, report, exc) in zip(jobs, results):
        if exc is not None:
            print(f"[{name}] FAILED: {exc}", file=sys.stderr)
            worst = max(worst, _exit_code(exc))
            continue
        sep = _read_json(out / "separability.json")
        table.append([name, run.loss.label, report["acc"],
                      *(report[k] for k in ("fpr_at_95tpr", "aupr_error", "aupr_success",
                                             "auc", "tpr", "tnr")),
                      sep["avg_kl"], sep["bhattacharyya"]])
        print(f"[{name}] {_summary(report)} avg_kl={sep['avg_kl']:.4f}")
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_csv(cfg.out / "compare.csv",
              ["run", "loss", "acc", "fpr_at_95tpr", "aupr_error", "aupr_success", "auc",
               "tpr", "tnr", "avg_kl", "bhattacharyya"], table)
    return worst


def _read_json(path):
    import json

    return json.loads(Path(path).read_text())


# --- argument parsing -----------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


_FLAG_KEYS = {
    "seed": "seed",
    "out": "out",
    "data": "data.path",
    "eval_data": "data.eval_path",
    "split": "data.split",
    "loss": "loss.kind",
    "alpha_pos": "loss.alpha_pos",
    "alpha_neg": "loss.alpha_neg",
    "gamma": "loss.gamma",
    "wrapper": "loss.wrapper",
    "beta": "loss.beta",
    "w_pos": "loss.w_pos",
    "w_neg": "loss.w_neg",
    "head_mode": "head.mode",
    "threshold_pos": "policy.threshold_pos",
    "threshold_neg": "policy.threshold_neg",
    "lr_max": "train.lr_max",
    "momentum": "train.momentum",
    "weight_decay": "train.weight_decay",
    "batch_size": "train.batch_size",
    "epochs": "train.epochs",
    "schedule": "train.schedule",
    "synth_n": "synth.n",
    "synth_d": "synth.d",
    "imbalance": "synth.imbalance",
    "mean_separation": "synth.mean_separation",
    "bins": "report.bins",
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    g = common.add_argument_group("experiment")
    g.add_argument("--config", help="key=value config file")
    g.add_argument("--seed", type=int)
    g.add_argument("--out", help="output directory")
    g.add_argument("--data", help="dataset file (.twf binary or .csv)")
    g.add_argument("--eval-data", help="separate evaluation dataset")
    g.add_argument("--split", type=float, help="train fraction when no --eval-data")
    g.add_argument("--loss", help="ce | focal | tcp | ss")
    g.add_argument("--alpha-pos", type=float)
    g.add_argument("--alpha-neg", type=float)
    g.add_argument("--gamma", type=float)
    g.add_argument("--wrapper", help="none | class_balanced | fixed")
    g.add_argument("--beta", type=float)
    g.add_argument("--w-pos", type=float)
    g.add_argument("--w-neg", type=float)
    g.add_argument("--head-mode", help="signed_distance | raw_linear")
    g.add_argument("--threshold-pos", type=float)
    g.add_argument("--threshold-neg", type=float)
    g.add_argument("--lr-max", type=float)
    g.add_argument("--momentum", type=float)
    g.add_argument("--weight-decay", type=float)
    g.add_argument("--batch-size", type=int)
    g.add_argument("--epochs", type=int)
    g.add_argument("--schedule", help="one_cycle | constant")
    g.add_argument("--synth-n", type=int)
    g.add_argument("--synth-d", type=int)
    g.add_argument("--imbalance", type=float)
    g.add_argument("--mean-separation", type=float)
    g.add_argument("--bins", type=int)
    g.add_argument("--workers", type=int, default=1)

    parser = _Parser(prog="trustpred", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s 0.1.0 (kernels: {_backend.NAME})")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("train", parents=[common], help="train a head and evaluate it")
    p = sub.add_parser("eval", parents=[common], help="evaluate a saved head")
    p.add_argument("--head", help="head.json written by train")
    p = sub.add_parser("sweep", parents=[common], help="steep slope alpha sweep")
    p.add_argument("--grid", help="comma-separated alpha values")
    p.add_argument("--phase", choices=["neg", "pos"], default="neg",
                   help="neg: vary alpha_neg (alpha_pos frozen); pos: the reverse")
    p = sub.add_parser("synth", parents=[common], help="write a synthetic dataset")
    p.add_argument("--csv", action="store_true", help="write CSV instead of binary")
    p = sub.add_parser("bound", parents=[common], help="generalization bound calculator")
    p.add_argument("--loss-max", type=float)
    p.add_argument("--hypotheses", "--F", dest="hypotheses", type=float, help="|F|")
    p.add_argument("--delta", type=float)
    p.add_argument("--samples", "--D", dest="samples", type=int, help="|D|")
    p = sub.add_parser("compare", parents=[common], help="train several losses under one config")
    p.add_argument("--losses", help="comma-separated loss kinds sharing the base config")
    p.add_argument("--run", action="append", help="per-loss config file (repeatable)")
    p = sub.add_parser("report", parents=[common], help="metrics for external confidences")
    p.add_argument("--records", help="CSV with header confidence,o")
    return parser


def _flag_values(args) -> dict:
    values = {}
    for attr, key in _FLAG_KEYS.items():
        v = getattr(args, attr, None)
        if v is not None:
            values[key] = _coerce(key, v, f"--{attr.replace('_', '-')}")
    return values


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, NumericAbort):
        return 3
    if isinstance(exc, DataError):
        return 2
    return 1


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        base = read_config(args.config) if args.config else {}
        flags = _flag_values(args)
        if args.command == "bound":
            return cmd_bound(None, args)
        cfg = ExperimentConfig.from_values({**base, **flags})
        if args.command == "compare":
            return cmd_compare(cfg, args, base, flags)
        return {
            "train": cmd_train,
            "eval": cmd_eval,
            "sweep": cmd_sweep,
            "synth": cmd_synth,
            "report": cmd_report,
        }[args.command](cfg, args)
    except TrustpredError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
