"""Command-line entry point: ``sigfair {train,sweep,downstream,verify,synth,report}``.

Settings come from an optional TOML file (``--config``) with flat keys that
match the long flag names with dashes turned into underscores; flags given
on the command line win.  Every run writes into its own directory named by a
hash of the resolved settings, and existing outputs are only replaced with
``--force``.

Exit codes: 0 success, 1 a verification or run failure, 2 a usage error.
"""

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from . import __version__
from .data import (ADULT_INSTRUCTIONS, BUILTIN, COMPAS_INSTRUCTIONS, PreprocessError,
                   SplitError, SynthSpec, file_sha256, generate_synthetic, load_adult,
                   load_compas, load_csv, load_dataset, load_spec, preprocess, save_dataset,
                   split, standardize)
from .lfr import (ARCHS, CheckpointError, TrainConfig, encode, head_logits, load_checkpoint, restore,
                  save_checkpoint, select_checkpoint, train_downstream, train_supervised,
                  train_unsupervised)
from .metrics import REPORT_COLUMNS, FairnessReport, ScoredBatch, fairness_report, pareto_front
from .theory import all_passed, verify_suite

log = logging.getLogger("sigfair")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
SELECTIONS = ("auto", "acc_minus_dp", "min_val_loss", "final")


class UsageError(Exception):
    """Bad configuration or paths; maps to exit code 2."""


@dataclass(frozen=True)
class RunConfig:
    # training
    mode: str = "sup"
    lam: float = 0.0
    epochs: int = None
    t_adv: int = 2
    batch_size: int = 512
    lr: float = 2.0
    lr_adv: float = None
    optimizer: str = "adadelta"
    fairness_target: str = "DP"
    include_s: bool = True
    seed: int = 0
    m: int = 8
    head_arch: str = "linear"
    downstream_epochs: int = 100
    selection: str = "auto"
    # data
    data: str = None
    csv: str = None
    test_csv: str = None
    preprocess: str = None
    standardize: str = "auto"
    split_seed: int = 0
    test_fraction: float = 0.3
    val_fraction: float = 0.2
    # sweep / downstream
    lambdas: tuple = ()
    archs: tuple = ARCHS
    pareto_metric: str = "dp"

    def train_config(self):
        return TrainConfig(mode=self.mode, lam=self.lam, epochs=self.epochs, t_adv=self.t_adv,
                           batch_size=self.batch_size, lr=self.lr, lr_adv=self.lr_adv,
                           optimizer=self.optimizer, fairness_target=self.fairness_target,
                           include_s=self.include_s, seed=self.seed, m=self.m,
                           head_arch=self.head_arch, downstream_epochs=self.downstream_epochs)

    def digest(self):
        blob = json.dumps(asdict(self), sort_keys=True, default=list).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:12]


_FIELD_NAMES = {f.name for f in fields(RunConfig)}
# config-file / flag spelling that differs from the attribute name
_ALIASES = {"lambda": "lam"}


def _coerce(name, value):
    if name in ("lambdas",):
        if isinstance(value, str):
            value = [v for v in value.split(",") if v.strip()]
        try:
            return tuple(float(v) for v in value)
        except (TypeError, ValueError):
            raise UsageError(f"lambdas must be numbers, got {value!r}") from None
    if name == "archs":
        if isinstance(value, str):
            value = [v.strip() for v in value.split(",") if v.strip()]
        return tuple(value)
    return value


def load_config_file(path):
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    if not os.path.exists(path):
        raise UsageError(f"config file not found: {path}")
    with open(path, "rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise UsageError(f"{path}: {exc}") from None
    out = {}
    for key, value in raw.items():
        name = _ALIASES.get(key, key.replace("-", "_"))
        if name not in _FIELD_NAMES:
            raise UsageError(f"{path}: unknown setting {key!r}")
        out[name] = _coerce(name, value)
    base = os.path.dirname(os.path.abspath(path))
    for key in ("data", "csv", "test_csv"):
        if out.get(key) and not os.path.isabs(out[key]):
            out[key] = os.path.join(base, out[key])
    if out.get("preprocess") and out["preprocess"] not in BUILTIN \
            and not os.path.isabs(out["preprocess"]):
        out["preprocess"] = os.path.join(base, out["preprocess"])
    return out


def resolve_config(args):
    settings = load_config_file(args.config) if getattr(args, "config", None) else {}
    for name in _FIELD_NAMES:
        value = getattr(args, name, None)
        if value is not None:
            settings[name] = _coerce(name, value)
    try:
        cfg = RunConfig(**settings)
        cfg.train_config()
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    if cfg.selection not in SELECTIONS:
        raise UsageError(f"unknown selection {cfg.selection!r}; choose from {SELECTIONS}")
    if cfg.standardize not in ("auto", "on", "off"):
        raise UsageError("standardize must be auto, on or off")
    bad = [a for a in cfg.archs if a not in ARCHS]
    if bad:
        raise UsageError(f"unknown head architecture {bad[0]!r}; valid names: {', '.join(ARCHS)}")
    return cfg


# --- data ----------------------------------------------------------------------

def _need_file(path, hint=None):
    if not os.path.isfile(path):
        msg = f"dataset file not found: {path}"
        if hint:
            msg += "\n" + hint
        raise UsageError(msg)


def load_run_data(cfg):
    """Load, split and optionally standardize the dataset a config points at."""
    if cfg.data:
        _need_file(cfg.data)
        data = load_dataset(cfg.data)
    elif cfg.csv:
        name = cfg.preprocess
        if name == "adult":
            _need_file(cfg.csv, ADULT_INSTRUCTIONS)
            if not cfg.test_csv:
                raise UsageError("the adult preprocessing needs test_csv as well\n"
                                 + ADULT_INSTRUCTIONS)
            _need_file(cfg.test_csv, ADULT_INSTRUCTIONS)
            data = load_adult(cfg.csv, cfg.test_csv)
        elif name == "compas":
            _need_file(cfg.csv, COMPAS_INSTRUCTIONS)
            data = load_compas(cfg.csv)
        elif name:
            _need_file(cfg.csv)
            if not os.path.isfile(name):
                raise UsageError(f"preprocessing spec not found: {name}")
            data = preprocess(load_csv(cfg.csv), load_spec(name))
        else:
            raise UsageError("csv input needs a preprocess setting (adult, compas or a TOML path)")
    else:
        raise UsageError("no dataset given; pass --data CACHE or --csv FILE --preprocess SPEC")
    for note in data.notes:
        log.warning("%s", note)
    if np.any(data.split == ""):
        scheme = "fixed_test" if np.any(data.split == "test") else "random"
        data = split(data, scheme=scheme, test_fraction=cfg.test_fraction,
                     val_fraction=cfg.val_fraction, seed=cfg.split_seed)
    if cfg.standardize == "on" or (cfg.standardize == "auto" and cfg.mode == "unsup"):
        data = standardize(data)
    return data


def _input_hashes(cfg):
    out = {}
    for key in ("data", "csv", "test_csv"):
        path = getattr(cfg, key)
        if path:
            out[key] = file_sha256(path)
    return out


# --- output ------------------------------------------------------------------------

def _prepare_dir(path, force):
    if os.path.exists(path) and os.listdir(path) and not force:
        raise UsageError(f"output directory {path} already exists; pass --force to replace it")
    os.makedirs(path, exist_ok=True)
    return path


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _dump_json(obj):
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _evaluate(logits_fn, data, tag):
    X, s, y = data.part(tag)
    return fairness_report(ScoredBatch(logits_fn(X, s), s, y))


def _report_dict(rep):
    d = dict(zip(REPORT_COLUMNS, rep.row()))
    d["mdp_raw"] = rep.delta_mdp_raw
    return d


def execute_train(cfg, run_dir):
    """Train one model into ``run_dir`` and return its report dictionary."""
    data = load_run_data(cfg)
    tc = cfg.train_config()
    if tc.mode == "sup":
        enc, other, history = train_supervised(data, tc)
    else:
        enc, other, history = train_unsupervised(data, tc)
    selection = cfg.selection
    if selection == "auto":
        selection = "acc_minus_dp" if tc.mode == "sup" else "min_val_loss"
    if selection == "final":
        epoch = history.records[-1]["epoch"]
    else:
        epoch, snap = select_checkpoint(history, selection)
        restore(snap, enc, other)
    save_checkpoint(os.path.join(run_dir, "checkpoint.json"), tc, enc, other, epoch)
    _write(os.path.join(run_dir, "history.csv"), history.to_csv())
    if tc.mode == "sup":
        head = other
        head_arch = tc.head_arch
    else:
        head, _ = train_downstream(enc, data, tc.head_arch, tc)
        head_arch = tc.head_arch

    def logits(X, s):
        return head_logits(head, encode(enc, X, s))

    report = {
        "run": {"mode": tc.mode, "lambda": tc.lam, "seed": tc.seed, "epoch": epoch,
                "selection": selection, "head_arch": head_arch,
                "fairness_target": tc.fairness_target, "config_hash": cfg.digest(),
                "empty_batches": int(sum(r["empty_batches"] for r in history.records)),
                "sizes": data.sizes(), "d": data.d, "notes": list(data.notes)},
        "val": _report_dict(_evaluate(logits, data, "val")),
        "test": _report_dict(_evaluate(logits, data, "test")),
    }
    _write(os.path.join(run_dir, "report.json"), _dump_json(report))
    _write(os.path.join(run_dir, "config.json"),
           _dump_json({"config": asdict(cfg), "inputs": _input_hashes(cfg),
                       "version": __version__}))
    return report


def cmd_train(args):
    cfg = resolve_config(args)
    run_dir = _prepare_dir(os.path.join(args.out, f"run-{cfg.digest()}"), args.force)
    report = execute_train(cfg, run_dir)
    print(run_dir)
    print(_dump_json(report["test"]), end="")
    return EXIT_OK


def _sweep_job(job):
    cfg, run_dir = job
    try:
        os.makedirs(run_dir, exist_ok=True)
        return run_dir, execute_train(cfg, run_dir), None
    except UsageError:
        raise
    except Exception as exc:  # a failed run is recorded and the sweep goes on
        return run_dir, None, f"{type(exc).__name__}: {exc}"


def _pareto_csv(rows, metric):
    pts = [(r[metric], r["acc"], r["lambda"], r["seed"], r["run"]) for r in rows
           if np.isfinite(r[metric]) and np.isfinite(r["acc"])]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([metric, "acc", "lambda", "seed", "run"])
    for p in pareto_front(pts):
        w.writerow([repr(float(p[0])), repr(float(p[1])), repr(float(p[2])), p[3], p[4]])
    return buf.getvalue()


def _summary_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["run", "lambda", "seed", "status", *REPORT_COLUMNS])
    for r in rows:
        w.writerow([r["run"], repr(float(r["lambda"])), r["seed"], r["status"],
                    *(repr(float(r.get(c, float("nan")))) for c in REPORT_COLUMNS)])
    return buf.getvalue()


def cmd_sweep(args):
    cfg = resolve_config(args)
    if not cfg.lambdas:
        raise UsageError("sweep needs at least one lambda (--lambdas or lambdas = [...])")
    if cfg.pareto_metric not in REPORT_COLUMNS[1:]:
        raise UsageError(f"pareto metric must be one of {REPORT_COLUMNS[1:]}")
    lams = sorted(set(cfg.lambdas))
    sweep_dir = _prepare_dir(os.path.join(args.out, f"sweep-{cfg.digest()}"), args.force)
    jobs = []
    for i, lam in enumerate(lams):
        run_cfg = replace(cfg, lam=lam, seed=cfg.seed + i, lambdas=())
        jobs.append((run_cfg, os.path.join(sweep_dir, f"run-{run_cfg.digest()}")))
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_sweep_job, jobs))
    else:
        results = [_sweep_job(j) for j in jobs]
    rows = []
    for (run_cfg, _), (run_dir, report, err) in zip(jobs, results):
        row = {"run": os.path.basename(run_dir), "lambda": run_cfg.lam, "seed": run_cfg.seed,
               "status": "ok" if err is None else f"failed: {err}"}
        if report is not None:
            row.update(report["test"])
        else:
            log.error("run lambda=%s failed: %s", run_cfg.lam, err)
        rows.append(row)
    _write(os.path.join(sweep_dir, "summary.csv"), _summary_csv(rows))
    _write(os.path.join(sweep_dir, "pareto.csv"),
           _pareto_csv([r for r in rows if r["status"] == "ok"], cfg.pareto_metric))
    print(sweep_dir)
    return EXIT_OK if all(r["status"] == "ok" for r in rows) else EXIT_FAIL


def cmd_downstream(args):
    if not os.path.isfile(args.checkpoint):
        raise UsageError(f"checkpoint not found: {args.checkpoint}")
    train_cfg, enc, _, epoch = load_checkpoint(args.checkpoint)
    side = os.path.join(os.path.dirname(os.path.abspath(args.checkpoint)), "config.json")
    settings = {}
    if os.path.isfile(side):
        with open(side, encoding="utf-8") as fh:
            settings = json.load(fh)["config"]
        settings = {k: _coerce(k, v) for k, v in settings.items() if k in _FIELD_NAMES}
    if args.config:
        settings.update(load_config_file(args.config))
    for name in _FIELD_NAMES:
        value = getattr(args, name, None)
        if value is not None:
            settings[name] = _coerce(name, value)
    try:
        cfg = RunConfig(**settings)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    bad = [a for a in cfg.archs if a not in ARCHS]
    if bad:
        raise UsageError(f"unknown head architecture {bad[0]!r}; valid names: {', '.join(ARCHS)}")
    if enc.include_s != cfg.include_s:
        cfg = replace(cfg, include_s=enc.include_s)
    data = load_run_data(cfg)
    tc = replace(train_cfg, seed=cfg.seed, downstream_epochs=cfg.downstream_epochs,
                 batch_size=cfg.batch_size, lr=cfg.lr, optimizer=cfg.optimizer)
    tag = hashlib.sha256((file_sha256(args.checkpoint) + cfg.digest()).encode()).hexdigest()[:12]
    out_dir = _prepare_dir(os.path.join(args.out, f"downstream-{tag}"), args.force)
    for arch in cfg.archs:
        head, history = train_downstream(enc, data, arch, tc)

        def logits(X, s, head=head):
            return head_logits(head, encode(enc, X, s))

        report = {"run": {"arch": arch, "encoder_epoch": epoch, "seed": tc.seed,
                          "lambda": train_cfg.lam},
                  "val": _report_dict(_evaluate(logits, data, "val")),
                  "test": _report_dict(_evaluate(logits, data, "test"))}
        _write(os.path.join(out_dir, f"report-{arch}.json"), _dump_json(report))
        _write(os.path.join(out_dir, f"history-{arch}.csv"), history.to_csv())
    print(out_dir)
    return EXIT_OK


def cmd_verify(args):
    report = verify_suite(seed=args.seed, inject_failure=args.inject_failure)
    text = json.dumps(report, indent=2) + "\n"
    if args.out:
        if os.path.exists(args.out) and not args.force:
            raise UsageError(f"{args.out} already exists; pass --force to replace it")
        _write(args.out, text)
    for e in report:
        print(f"{e['status']:4}  {e['check_id']}  measured={e['measured']:.6g}  "
              f"threshold={e['threshold']:.6g}")
    return EXIT_OK if all_passed(report) else EXIT_FAIL


def cmd_synth(args):
    w = None
    if args.w:
        try:
            w = tuple(float(v) for v in args.w.split(","))
        except ValueError:
            raise UsageError(f"--w must be comma-separated numbers, got {args.w!r}") from None
    try:
        spec = SynthSpec(n=args.n, d=args.d, delta=args.delta, w=w, b_s=args.b_s,
                         seed=args.seed, mc_draws=args.mc_draws)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = _prepare_dir(args.out, args.force)
    data, truth = generate_synthetic(spec)
    save_dataset(os.path.join(out, "synth.bin"), data)
    truth["spec"] = {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(spec).items()}
    _write(os.path.join(out, "truth.json"), _dump_json(truth))
    print(os.path.join(out, "synth.bin"))
    return EXIT_OK


def cmd_report(args):
    found = []
    for root in args.runs:
        if not os.path.isdir(root):
            raise UsageError(f"not a directory: {root}")
        for dirpath, _, files in os.walk(root):
            if "report.json" in files:
                found.append(os.path.join(dirpath, "report.json"))
    if not found:
        raise UsageError("no report.json files found")
    rows = []
    for path in sorted(found):
        with open(path, encoding="utf-8") as fh:
            rep = json.load(fh)
        FairnessReport.from_dict(rep["test"])  # validates the columns
        row = {"run": os.path.relpath(os.path.dirname(path)), "lambda": rep["run"]["lambda"],
               "seed": rep["run"]["seed"], "status": "ok"}
        row.update(rep["test"])
        rows.append(row)
    os.makedirs(args.out, exist_ok=True)
    targets = [os.path.join(args.out, n) for n in ("summary.csv", "pareto.csv")]
    for t in targets:
        if os.path.exists(t) and not args.force:
            raise UsageError(f"{t} already exists; pass --force to replace it")
    metric = args.pareto_metric
    if metric not in REPORT_COLUMNS[1:]:
        raise UsageError(f"pareto metric must be one of {REPORT_COLUMNS[1:]}")
    _write(targets[0], _summary_csv(rows))
    _write(targets[1], _pareto_csv(rows, metric))
    print(targets[0])
    print(targets[1])
    return EXIT_OK


# --- parser ---------------------------------------------------------------------------

def _bool(text):
    t = str(text).lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _add_run_flags(p, sweep=False):
    p.add_argument("--config", help="TOML settings file; flags override it")
    g = p.add_argument_group("training")
    g.add_argument("--mode", choices=("sup", "unsup"), default=None)
    g.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="weight of the fairness term")
    g.add_argument("--epochs", type=int, default=None)
    g.add_argument("--t-adv", type=int, default=None, help="discriminator steps per minibatch")
    g.add_argument("--batch-size", type=int, default=None)
    g.add_argument("--lr", type=float, default=None)
    g.add_argument("--lr-adv", type=float, default=None)
    g.add_argument("--optimizer", choices=("adadelta", "adam", "sgd"), default=None)
    g.add_argument("--fairness-target", choices=("DP", "EOpp", "EO"), default=None)
    g.add_argument("--include-s", type=_bool, default=None, metavar="BOOL")
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--m", type=int, default=None, help="representation width")
    g.add_argument("--head-arch", default=None, help=f"one of {', '.join(ARCHS)}")
    g.add_argument("--downstream-epochs", type=int, default=None)
    g.add_argument("--selection", choices=SELECTIONS, default=None)
    d = p.add_argument_group("data")
    d.add_argument("--data", default=None, help="dataset cache written by `synth`")
    d.add_argument("--csv", default=None)
    d.add_argument("--test-csv", default=None)
    d.add_argument("--preprocess", default=None, help="adult, compas or a TOML spec path")
    d.add_argument("--standardize", choices=("auto", "on", "off"), default=None)
    d.add_argument("--split-seed", type=int, default=None)
    d.add_argument("--test-fraction", type=float, default=None)
    d.add_argument("--val-fraction", type=float, default=None)
    if sweep:
        p.add_argument("--lambdas", default=None, help="comma-separated, e.g. 0,0.1,1,10")
        p.add_argument("--pareto-metric", default=None)
        p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="runs")
    p.add_argument("--force", action="store_true", help="replace existing outputs")


def build_parser():
    parser = argparse.ArgumentParser(prog="sigfair", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model and write checkpoint, history, report")
    _add_run_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="train over a list of lambdas and write pareto.csv")
    _add_run_flags(p, sweep=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("downstream", help="fit prediction heads on a frozen encoder")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--archs", default=None, help=f"comma-separated subset of {', '.join(ARCHS)}")
    _add_run_flags(p)
    p.set_defaults(func=cmd_downstream)

    p = sub.add_parser("verify", help="run the numerical verification suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="also write the JSON report here")
    p.add_argument("--force", action="store_true")
    p.add_argument("--inject-failure", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("synth", help="write a synthetic dataset and its ground truth")
    p.add_argument("--n", type=int, default=8000)
    p.add_argument("--d", type=int, default=4)
    p.add_argument("--delta", type=float, default=1.0, help="group mean shift")
    p.add_argument("--w", default=None, help="comma-separated label weights (default all ones)")
    p.add_argument("--b-s", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mc-draws", type=int, default=10 ** 6)
    p.add_argument("--out", default="synth")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("report", help="collect report.json files into summary and pareto CSVs")
    p.add_argument("runs", nargs="+", help="directories searched for report.json")
    p.add_argument("--out", default="summary")
    p.add_argument("--pareto-metric", default="dp")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (UsageError, PreprocessError, SplitError, CheckpointError) as exc:
        print(f"sigfair {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
