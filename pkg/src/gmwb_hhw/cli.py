"""Command-line front end: pricing, fee solving, dataset generation,
surrogate training, prediction, evaluation and Monte Carlo checks.

All commands are deterministic for fixed inputs and seeds; dataset rows are
assembled in index order whatever the worker count, and every output file
is either complete and schema-valid or absent.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import gpr, mc, qmc
from .contract import ContractParams, MortalityTable
from .hpde import (GridConfig, NoRoot, fee_value_fn, no_arbitrage_fee,
                   price_gmwb)
from .model import (ParameterBox, PREDICTOR_NAMES, load_model_document,
                    params_from_vector)

CSV_HEADER = list(PREDICTOR_NAMES) + ["value"]


def data_path(name: str) -> Path:
    """Path of a bundled data file (mortality tables, demo documents)."""
    return Path(resources.files("gmwb_hhw.data") / name)


def _load_contract(args, alpha: float, kappa: float) -> ContractParams:
    doc = json.loads(Path(args.contract).read_text())
    mort = None
    if args.mortality is not None:
        mort = MortalityTable.from_csv(args.mortality)
    return ContractParams(
        P=float(doc["P"]), T=int(doc["T"]), alpha=alpha, kappa=kappa,
        G=doc.get("G"), mortality=mort,
    )


def _grid(args) -> GridConfig:
    return GridConfig(n_time=args.steps, n_space=args.space_steps,
                      n_b=args.b_steps)


def _fmt(x: float) -> str:
    return repr(float(x))


def cmd_price(args) -> int:
    model, alpha, kappa = load_model_document(args.model)
    contract = _load_contract(args, alpha, kappa)
    res = price_gmwb(model, contract, _grid(args), mode=args.mode)
    print(f"price {res.price:.6f}")
    print(f"delta {res.delta:.6f}")
    print(f"runtime_seconds {res.runtime:.3f}")
    return 0


def cmd_fee(args) -> int:
    model, _, kappa = load_model_document(args.model)
    contract = _load_contract(args, 0.0, kappa)
    t0 = time.perf_counter()
    if args.engine == "hpde":
        value_fn = fee_value_fn(model, contract, _grid(args), mode=args.mode)
    else:
        surrogate = gpr.load_model(args.engine)
        vec = np.array([getattr(model, n) for n in PREDICTOR_NAMES[:9]]
                       + [0.0, kappa])

        def value_fn(alpha: float) -> float:
            v = vec.copy()
            v[9] = alpha
            return contract.P * float(gpr.predict(surrogate, v[None, :])[0])

    fee, evals = no_arbitrage_fee(value_fn, contract.P, tol=args.tol)
    print(f"fee_bps {fee * 1e4:.4f}")
    print(f"evaluations {evals}")
    print(f"runtime_seconds {time.perf_counter() - t0:.3f}")
    return 0


def _init_worker():
    # pool workers run single-threaded kernels; parallelism comes from the pool
    os.environ["GMWB_WORKER_THREADS"] = "1"


def _price_row(task):
    """Worker entry for dataset generation; one priced parameter row."""
    idx, vec, n_time, n_space, n_b, target, pdoc, tol = task
    threads = os.environ.get("GMWB_WORKER_THREADS")
    if threads is not None:
        import numba

        numba.set_num_threads(max(int(threads), 1))
    model, alpha, kappa = params_from_vector(vec)
    contract = ContractParams(P=float(pdoc["P"]), T=int(pdoc["T"]),
                              alpha=alpha, kappa=kappa, G=pdoc.get("G"))
    grid = GridConfig(n_time=n_time, n_space=n_space, n_b=n_b)
    t0 = time.perf_counter()
    if target == "fee":
        value_fn = fee_value_fn(model, replace(contract, alpha=0.0), grid)
        value, _ = no_arbitrage_fee(value_fn, contract.P, tol=tol)
    else:
        res = price_gmwb(model, contract, grid)
        value = res.price / contract.P if target == "price" else res.delta
    return idx, value, time.perf_counter() - t0


def cmd_gen_data(args) -> int:
    box = ParameterBox.load(args.model)
    pdoc = json.loads(Path(args.contract).read_text())
    rows = qmc.sample_box(box, args.n, start_index=args.start_index)
    tasks = [
        (i, rows[i], args.steps, args.space_steps, args.b_steps, args.target,
         pdoc, None)
        for i in range(args.n)
    ]
    values = np.empty(args.n)
    seconds = np.empty(args.n)
    if args.workers > 1:
        import multiprocessing

        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=args.workers, mp_context=ctx,
                                 initializer=_init_worker) as pool:
            for idx, value, secs in pool.map(_price_row, tasks, chunksize=1):
                values[idx] = value
                seconds[idx] = secs
    else:
        for task in tasks:
            idx, value, secs = _price_row(task)
            values[idx] = value
            seconds[idx] = secs

    out = Path(args.out)
    tmp = out.with_name(out.name + ".tmp")
    try:
        with open(tmp, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            for i in range(args.n):
                writer.writerow([_fmt(v) for v in rows[i]] + [_fmt(values[i])])
        tmp.replace(out)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise
    meta = {
        "rows": args.n,
        "target": args.target,
        "grid": [args.steps, args.space_steps, args.b_steps],
        "mean_seconds_per_row": float(np.mean(seconds)),
    }
    Path(str(out) + ".meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    print(f"wrote {out} ({args.n} rows, "
          f"{float(np.mean(seconds)):.3f} s/row direct pricing)")
    return 0


def _read_data_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CSV_HEADER:
            raise ValueError(f"{path}: expected header {CSV_HEADER}, got {header}")
        body = [[float(v) for v in rec] for rec in reader if rec]
    arr = np.asarray(body, dtype=float)
    if arr.size == 0:
        raise ValueError(f"{path}: no data rows")
    return arr[:, :-1], arr[:, -1]


def cmd_train(args) -> int:
    box = ParameterBox.load(args.model)
    x, y = _read_data_csv(args.data)
    model = gpr.train(gpr.TrainingSet(x, y), box, restarts=args.restarts,
                      seed=args.seed)
    gpr.save_model(model, args.out)
    print(f"wrote {args.out} (n = {model.n_train}, "
          f"log evidence {model.log_likelihood:.3f})")
    return 0


def cmd_predict(args) -> int:
    model = gpr.load_model(args.engine)
    x, _ = _read_data_csv(args.data)
    t0 = time.perf_counter()
    yh = gpr.predict(model, x)
    per_row = (time.perf_counter() - t0) / x.shape[0]
    out = Path(args.out)
    tmp = out.with_name(out.name + ".tmp")
    try:
        with open(tmp, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            for row, val in zip(x, yh):
                writer.writerow([_fmt(v) for v in row] + [_fmt(val)])
        tmp.replace(out)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise
    meta = {"rows": int(x.shape[0]), "mean_seconds_per_row": per_row}
    Path(str(out) + ".meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    print(f"wrote {out} ({x.shape[0]} predictions, {per_row:.2e} s/row)")
    return 0


def cmd_evaluate(args) -> int:
    xp, yp = _read_data_csv(args.predictions)
    xt, yt = _read_data_csv(args.truths)
    if xp.shape != xt.shape or not np.allclose(xp, xt, rtol=0, atol=0):
        raise ValueError("prediction and truth files cover different points")
    metrics = gpr.evaluate(yp, yt)
    for key in ("rmse", "rmsre", "maxae", "maxre"):
        print(f"{key} {metrics[key]:.6e}")
    t_truth = _sidecar_seconds(args.truths)
    t_pred = _sidecar_seconds(args.predictions)
    if t_truth and t_pred:
        print(f"speedup {t_truth / t_pred:.3e}")
    return 0


def _sidecar_seconds(path) -> float | None:
    meta = Path(str(path) + ".meta.json")
    if not meta.exists():
        return None
    return float(json.loads(meta.read_text()).get("mean_seconds_per_row", 0.0)) or None


def cmd_mc_check(args) -> int:
    model, alpha, kappa = load_model_document(args.model)
    contract = _load_contract(args, alpha, kappa)
    config = mc.McConfig(paths=args.n, steps_per_year=args.steps, seed=args.seed)
    failures = 0

    for horizon in (1.0, 5.0, 10.0):
        est = mc.bond_price(model, horizon, config)
        target = math.exp(-model.r0 * horizon)
        ok = abs(est.value - target) <= 3.0 * est.std_error
        failures += 0 if ok else 1
        print(f"bond t={horizon:g} estimate {est.value!r} se {est.std_error!r} "
              f"target {target!r} {'PASS' if ok else 'FAIL'}")

    est = mc.static_gmwb_price(model, contract, config)
    res = price_gmwb(model, contract,
                     GridConfig(n_time=args.price_steps,
                                n_space=args.price_steps,
                                n_b=args.b_steps),
                     mode="static")
    tol = max(3.0 * est.std_error, 1e-3 * contract.P)
    ok = abs(res.price - est.value) <= tol
    failures += 0 if ok else 1
    print(f"static mc {est.value!r} se {est.std_error!r}")
    print(f"static hpde {res.price!r}")
    print(f"static agreement tol {tol!r} {'PASS' if ok else 'FAIL'}")
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gmwb",
        description="GMWB pricing, surrogate training and validation tools",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_grid(p, steps=250, space=250, nb=100):
        p.add_argument("--steps", type=int, default=steps,
                       help="time steps over the contract life")
        p.add_argument("--space-steps", dest="space_steps", type=int,
                       default=space, help="z-grid steps")
        p.add_argument("--b-steps", dest="b_steps", type=int, default=nb,
                       help="base-benefit grid steps")

    p = sub.add_parser("price", help="price one contract directly")
    p.add_argument("--model", required=True, help="model parameter document")
    p.add_argument("--contract", required=True, help="contract document")
    p.add_argument("--mortality", help="mortality CSV (default: no mortality)")
    p.add_argument("--mode", choices=("optimal", "static"), default="optimal")
    add_grid(p)
    p.set_defaults(func=cmd_price)

    p = sub.add_parser("fee", help="solve for the no-arbitrage fee")
    p.add_argument("--model", required=True)
    p.add_argument("--contract", required=True)
    p.add_argument("--mortality")
    p.add_argument("--mode", choices=("optimal", "static"), default="optimal")
    p.add_argument("--engine", default="hpde",
                   help="'hpde' or the path of a trained price model")
    p.add_argument("--tol", type=float, default=None,
                   help="absolute tolerance on |V - P| (default 1e-3 P)")
    add_grid(p)
    p.set_defaults(func=cmd_fee)

    p = sub.add_parser("gen-data", help="price sampled parameter combinations")
    p.add_argument("--model", required=True, help="parameter box document")
    p.add_argument("--contract", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--start-index", dest="start_index", type=int, default=1,
                   help="first low-discrepancy point index (rows extend "
                        "earlier samples)")
    p.add_argument("--target", choices=("price", "delta", "fee"),
                   default="price",
                   help="price per unit premium, delta, or fee rate")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    add_grid(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a surrogate on a dataset")
    p.add_argument("data", help="training CSV from gen-data")
    p.add_argument("--model", required=True, help="parameter box document")
    p.add_argument("--out", required=True)
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict values with a trained model")
    p.add_argument("data", help="CSV of predictor rows (value column ignored)")
    p.add_argument("--engine", required=True, help="trained model file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="error metrics of predictions vs truths")
    p.add_argument("predictions")
    p.add_argument("truths")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("mc-check", help="Monte Carlo cross-checks")
    p.add_argument("--model", required=True)
    p.add_argument("--contract", required=True)
    p.add_argument("--mortality")
    p.add_argument("--n", type=int, default=100_000, help="simulation paths")
    p.add_argument("--steps", type=int, default=100, help="steps per year")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--price-steps", dest="price_steps", type=int, default=250,
                   help="grid for the reference direct price")
    p.add_argument("--b-steps", dest="b_steps", type=int, default=1)
    p.set_defaults(func=cmd_mc_check)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (NoRoot, ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
