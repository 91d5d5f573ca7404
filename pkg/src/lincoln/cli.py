"""Command-line entry point: ingest, train, analyze, gradcheck.

Exit codes: 0 ok, 1 verification failure, 2 input error.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import os
import sys
import tempfile
import time
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from . import diffcore as dc
from .analysis import (OVERLAP_MODES, WindowEmpty, overlap_vs_time_gap, reappearance_rate,
                       write_overlap_csv, write_reappearance_csv)
from .hypercore import FormatError, load_dataset, partition_into_snapshots, read_simplex_files, save_dataset
from .synthetic import toy
from .trainer import DatasetTooSmall, Lincoln, TrainConfig, live_update_run, report_curves, report_rows

OK, FAILED, BAD_INPUT = 0, 1, 2
GRADCHECK_TOL = 1e-4


class InputError(Exception):
    pass


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def config_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def write_manifest(out: Path, cfg: dict, dataset: Optional[str], seed: Optional[int],
                   outputs: List[Path], started: float) -> None:
    manifest = {
        "config_hash": config_hash(cfg),
        "dataset": dataset,
        "seed": seed,
        "tool_version": __version__,
        "started": _dt.datetime.fromtimestamp(started, _dt.timezone.utc).isoformat(),
        "wall_clock_s": round(time.time() - started, 3),
        "outputs": sorted(str(p) for p in outputs),
    }
    atomic_write(out / "manifest.json", dumps(manifest))


def load_config(path: Optional[str]) -> TrainConfig:
    raw = {}
    if path:
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"config {path}: {exc}") from None
        if not isinstance(raw, dict):
            raise InputError(f"config {path}: expected a JSON object")
    env = os.environ.get("LINCOLN_SEED")
    if env is not None:
        try:
            raw["seed"] = int(env)
        except ValueError:
            raise InputError(f"LINCOLN_SEED={env!r} is not an integer") from None
    try:
        return TrainConfig.from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise InputError(f"config: {exc}") from None


def _open_dataset(path: str):
    try:
        return load_dataset(path)
    except (OSError, ValueError, KeyError) as exc:
        raise InputError(f"dataset {path}: {exc}") from None


def write_csv(path: Path, header: List[str], rows: List[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(r[h]) if isinstance(r[h], float) else r[h] for h in header])


# ---------------------------------------------------------------------------

def cmd_ingest(args) -> int:
    try:
        edges, id_map = read_simplex_files(args.nverts, args.simplices, args.times)
        ds = partition_into_snapshots(edges, args.policy, args.snapshots,
                                      node_count=len(id_map), id_map=id_map)
    except OSError as exc:
        raise InputError(str(exc)) from None
    except FormatError as exc:
        raise InputError(f"{type(exc).__name__}: {exc}") from None
    save_dataset(ds, args.out)
    extra = f", dropped_empty={ds.dropped_empty}" if ds.dropped_empty else ""
    print(f"nodes={ds.node_count}, edges={ds.n_edges}, snapshots={len(ds.snapshots)}{extra}")
    return OK


def cmd_train(args) -> int:
    started = time.time()
    cfg = load_config(args.config)
    over = {}
    for name in args.ablate or []:
        over["disable_" + name] = True
    if args.runs is not None:
        over["runs"] = args.runs
    if over:
        cfg = TrainConfig.from_dict({**cfg.to_dict(), **over})
    ds = _open_dataset(args.dataset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        report = live_update_run(ds, cfg, parallel=args.parallel, keep_models=True)
    except DatasetTooSmall as exc:
        raise InputError(str(exc)) from None
    models, states = report.pop("models"), report.pop("states")
    paths = [out / "report.json", out / "report.csv", out / "curves.csv"]
    atomic_write(paths[0], dumps(report))
    write_csv(paths[1], ["run", "snapshot", "auroc", "ap", "n_test"], report_rows(report))
    write_csv(paths[2], ["snapshot", "auroc", "ap", "runs"], report_curves(report))
    for r, (model, state) in enumerate(zip(models, states)):
        ck = out / f"checkpoint_run{r}.lnck"
        extra = {f"hidden.layer{l}": a for l, a in enumerate(state.layers)}
        extra["hidden.seen"] = state.seen.astype(np.float64)
        dc.save_checkpoint(ck, model.store, extra, {"config": cfg.to_dict(), "run": r})
        paths.append(ck)
    write_manifest(out, cfg.to_dict(), args.dataset, cfg.seed, paths, started)
    print(f"mean_auroc={report['mean_auroc']:.4f} mean_ap={report['mean_ap']:.4f}")
    for p in paths:
        print(p)
    return OK


def cmd_analyze(args) -> int:
    started = time.time()
    ds = _open_dataset(args.dataset)
    seed = int(os.environ.get("LINCOLN_SEED", args.seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    try:
        if args.mode in ("o1", "both"):
            rows = overlap_vs_time_gap(ds, args.sample_size, np.random.default_rng(seed),
                                       mode=args.overlap_mode)
            paths.append(out / "overlap.csv")
            write_overlap_csv(rows, paths[-1])
        if args.mode in ("o2", "both"):
            rows = reappearance_rate(ds, args.sample_size, np.random.default_rng(seed))
            paths.append(out / "reappearance.csv")
            write_reappearance_csv(rows, paths[-1])
    except (WindowEmpty, ValueError) as exc:
        raise InputError(str(exc)) from None
    cfg = {"mode": args.mode, "overlap_mode": args.overlap_mode, "sample_size": args.sample_size}
    write_manifest(out, cfg, args.dataset, seed, paths, started)
    for p in paths:
        print(p)
    return OK


def toy_batch():
    """Fixed labeled candidates over the toy instance."""
    return [(0, 1, 2), (1, 3, 5), (2, 4, 5), (0, 3)], [1, 0, 1, 0]


def gradcheck_loss(cfg: TrainConfig):
    """(model, loss closure) encoding both toy snapshots in one BPTT window."""
    ds = toy()
    model = Lincoln.for_dataset(cfg, ds, np.random.default_rng(cfg.seed))
    h0 = model.zero_state()
    cands, labels = toy_batch()

    def f():
        return model.loss(model.forward(ds.snapshots, h0), cands, labels)[0]
    return model, f


def cmd_gradcheck(args) -> int:
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = TrainConfig(d=4, k=2, bptt_window=2, seed=int(os.environ.get("LINCOLN_SEED", 0)))
    if not 0 < args.epsilon <= 1e-3:
        raise InputError("--epsilon must lie in (0, 1e-3]")
    t0 = time.time()
    model, f = gradcheck_loss(cfg)
    analytic = dc.backward(f(), model.store)
    if args.corrupt_gradient:
        name = model.store.names()[0]
        analytic[name] = analytic[name] + 1.0
    err = dc.grad_check(f, model.store, args.epsilon, analytic=analytic)
    ok = err <= GRADCHECK_TOL
    print(f"epsilon={args.epsilon:g} params={model.store.count()} max_rel_error={err:.3e} "
          f"tol={GRADCHECK_TOL:g} runtime_s={time.time() - t0:.2f} {'PASS' if ok else 'FAIL'}")
    return OK if ok else FAILED


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lincoln", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="simplex text files -> dataset JSON")
    s.add_argument("--nverts", required=True)
    s.add_argument("--simplices", required=True)
    s.add_argument("--times", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--policy", choices=["equal_count", "equal_duration"], default="equal_count")
    s.add_argument("--snapshots", type=int, default=10)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("train", help="live-update training and evaluation")
    s.add_argument("--dataset", required=True)
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.add_argument("--ablate", action="append", choices=["pin", "bihe"])
    s.add_argument("--runs", type=int)
    s.add_argument("--parallel", action="store_true")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("analyze", help="observation CSVs (o1: overlap vs gap, o2: re-appearance)")
    s.add_argument("--dataset", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--mode", choices=["o1", "o2", "both"], default="both")
    s.add_argument("--overlap-mode", choices=OVERLAP_MODES, default="count")
    s.add_argument("--sample-size", type=int, default=50)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("gradcheck", help="finite-difference check of the full loss on the toy instance")
    s.add_argument("--config")
    s.add_argument("--epsilon", type=float, default=1e-5)
    s.add_argument("--corrupt-gradient", action="store_true", help=argparse.SUPPRESS)
    s.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
