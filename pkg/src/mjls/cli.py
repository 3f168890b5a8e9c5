"""Command-line front end.

Subcommands:

* ``check``    — spectral + Lyapunov stability tests for a model under a
  policy (uniform over defined actions when none is given).
* ``synth``    — synthesize a stabilizing policy (coordinate descent or
  the diagonal SDP relaxation) and write a result document.
* ``simulate`` — Monte-Carlo moment traces under a fixed policy.
* ``gen``      — write model files for the benchmark families.
* ``bench``    — batch synthesis over generated instances with a
  per-instance timeout, fanned out to worker processes.

Exit codes: 0 success / stabilized-and-verified; 1 honest failure (no
stabilizing policy found, or the checked chain is unstable); 2 invalid
input; 3 solver or numerical failure.  Human-facing mode labels are
1-based; file contents are 0-based.
"""

from __future__ import annotations

import argparse
import csv as _csv
import json
import multiprocessing
import queue as _queue
import sys as _sys
import time

import numpy as np

from . import casegen, modelio
from .errors import MjlsError, SimulationDivergedError, SolverFailureError
from .model import NoiseSpec, Policy, induce_dtmc
from .simulate import mss_empirical_diagnostic, simulate_trajectories, trace_to_csv
from .stability import (
    check_mss_diagonal,
    check_mss_lyapunov,
    check_mss_spectral,
    verify_policy_certificate,
)
from .synthesis import (
    INIT_DETERMINISTIC,
    INIT_UNIFORM,
    STABILIZED,
    CdParams,
    synth_coordinate_descent,
    synth_sdp_relaxation,
)

EXIT_OK = 0
EXIT_NO_POLICY = 1
EXIT_BAD_INPUT = 2
EXIT_SOLVER = 3


def _cmd_check(args) -> int:
    system, mdp = modelio.load_model(args.model)
    doc = None
    if args.policy:
        with open(args.policy, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        policy = modelio.policy_from_dict(doc)
    else:
        print("no policy supplied; analyzing the uniform policy over defined actions")
        policy = Policy.uniform(mdp)
    dtmc = induce_dtmc(mdp, policy)
    spectral = check_mss_spectral(dtmc, system)
    print(f"spectral test: rho = {spectral.rho:.6f} -> "
          f"{'stable' if spectral.stable else 'unstable'}")
    lyap = check_mss_lyapunov(dtmc, system, eps=args.eps, tol=args.tol)
    if lyap.stable is None:
        print("lyapunov test: inconclusive (solver failure)")
    else:
        print(f"lyapunov test: {'feasible -> stable' if lyap.stable else 'infeasible -> unstable'}")
    alpha = check_mss_diagonal(dtmc, system, tol=args.tol)
    if alpha is None:
        print("diagonal test: no certificate (proves nothing)")
    else:
        weights = ", ".join(f"{a:.4g}" for a in alpha)
        print(f"diagonal test: certificate with weights ({weights})")
    cert_ok = True
    if isinstance(doc, dict) and doc.get("certificate") is not None:
        cert = modelio.certificate_from_dict(doc)
        cert_ok = verify_policy_certificate(mdp, system, policy, cert)
        print(f"stored certificate: {'verified' if cert_ok else 'REJECTED'}")
    return EXIT_OK if (spectral.stable and cert_ok) else EXIT_NO_POLICY


def _cd_params(args) -> CdParams:
    init = INIT_DETERMINISTIC if args.init == "det" else INIT_UNIFORM
    return CdParams(
        prox_weight=args.L,
        max_iters=args.max_iters,
        init=init,
        seed=args.seed,
    )


def _cmd_synth(args) -> int:
    system, mdp = modelio.load_model(args.model)
    if args.method == "cd":
        result = synth_coordinate_descent(mdp, system, _cd_params(args))
    else:
        result = synth_sdp_relaxation(mdp, system)
    rho = None
    if result.policy is not None:
        rho = check_mss_spectral(induce_dtmc(mdp, result.policy), system).rho
    doc = modelio.result_to_dict(args.method, result, rho=rho, seed=args.seed)
    if args.out:
        modelio.save_result(args.out, doc)
        print(f"result written to {args.out}", file=_sys.stderr)
    else:
        print(json.dumps(doc, indent=2))
    summary = f"method={args.method} status={result.status} iterations={result.iterations} " \
              f"wall_time={result.wall_time:.2f}s"
    if rho is not None:
        summary += f" rho={rho:.6f}"
    print(summary, file=_sys.stderr)
    if result.status == STABILIZED:
        verified, _ = modelio.reverify_result(system, mdp, doc)
        return EXIT_OK if verified else EXIT_SOLVER
    if result.status == "solver_failure":
        return EXIT_SOLVER
    return EXIT_NO_POLICY


def _cmd_simulate(args) -> int:
    system, mdp = modelio.load_model(args.model)
    policy = modelio.load_policy(args.policy)
    dtmc = induce_dtmc(mdp, policy)
    x0 = np.ones(system.n) if not args.x0 else np.array(
        [float(v) for v in args.x0.split(",")])
    noise = None
    if args.noise_scale > 0.0:
        if system.m is None:
            raise ValueError("model has no noise input maps; --noise-scale needs B matrices")
        noise = NoiseSpec(mean=np.zeros(system.m),
                          covariance=args.noise_scale * np.eye(system.m))
    try:
        trace = simulate_trajectories(
            system, dtmc, noise, x0,
            horizon=args.horizon, trials=args.trials, seed=args.seed,
            window=args.window,
        )
    except SimulationDivergedError as exc:
        print(f"simulation diverged: state norm exceeded guard at step {exc.step}")
        return EXIT_OK
    tail_mean = float(np.max(np.abs(trace.limit_mean)))
    tail_m2 = float(np.max(np.abs(trace.limit_second_moment)))
    print(f"tail mean sup-norm: {tail_mean:.6g}")
    print(f"tail second-moment sup-norm: {tail_m2:.6g}")
    if args.horizon >= 2 * args.window:
        report = mss_empirical_diagnostic(trace, rel_tol=args.rel_tol)
        print(f"diagnostic: {report.verdict} "
              f"(relative change {report.rel_change:.3g}, growth {report.growth:.3g})")
    else:
        print("diagnostic: horizon too short for a verdict")
    if args.csv:
        with open(args.csv, "w", encoding="utf-8", newline="") as fh:
            trace_to_csv(trace, fh)
        print(f"trace written to {args.csv}")
    return EXIT_OK


def _cmd_gen(args) -> int:
    if args.family == "random":
        system, mdp = casegen.gen_random_instance(
            args.n, args.modes, args.num_actions,
            entry_range=(args.low, args.high), seed=args.seed,
        )
    elif args.family == "wireless":
        spec = casegen.random_wireless_spec(nodes=args.nodes, modes=args.modes, seed=args.seed)
        system, mdp = casegen.build_wireless_model(spec)
    elif args.family == "transport":
        if args.random_rates:
            spec = casegen.random_transport_spec(seed=args.seed, sampling_time=args.ts)
        else:
            spec = casegen.default_transport_spec(active_rate=args.rate, sampling_time=args.ts)
        system, mdp = casegen.build_transportation_model(spec)
    else:  # gap
        system, mdp = casegen.deterministic_gap_instance()
    modelio.save_model(args.out, system, mdp)
    print(f"model written to {args.out}")
    return EXIT_OK


def _bench_worker(result_queue, model_doc: dict, method: str, cd_kwargs: dict) -> None:
    """Child-process entry: run one synthesis and ship the result doc."""
    try:
        system, mdp = modelio.model_from_dict(model_doc)
        if method == "cd":
            result = synth_coordinate_descent(mdp, system, CdParams(**cd_kwargs))
        else:
            result = synth_sdp_relaxation(mdp, system)
        rho = None
        if result.policy is not None:
            rho = check_mss_spectral(induce_dtmc(mdp, result.policy), system).rho
        result_queue.put(modelio.result_to_dict(method, result, rho=rho))
    except Exception as exc:  # never hang the parent on a worker bug
        result_queue.put({"status": "crashed", "error": f"{type(exc).__name__}: {exc}"})


def _run_batch(tasks: dict, jobs: int, timeout: float) -> dict:
    """Run ``{key: (model_doc, method, cd_kwargs)}`` tasks in worker
    processes, at most ``jobs`` at a time, killing any that outlive
    ``timeout`` seconds."""
    ctx = multiprocessing.get_context("fork")
    pending = list(tasks.items())
    running: list[tuple] = []
    results: dict = {}
    while pending or running:
        while pending and len(running) < jobs:
            key, payload = pending.pop(0)
            q = ctx.Queue()
            proc = ctx.Process(target=_bench_worker, args=(q, *payload))
            proc.start()
            running.append((key, proc, q, time.monotonic() + timeout))
        time.sleep(0.02)
        still = []
        for key, proc, q, deadline in running:
            if not proc.is_alive():
                proc.join()
                try:
                    results[key] = q.get(timeout=1.0)
                except _queue.Empty:
                    results[key] = {"status": "crashed", "error": "worker died silently"}
            elif time.monotonic() > deadline:
                proc.terminate()
                proc.join()
                results[key] = {"status": "timeout"}
            else:
                still.append((key, proc, q, deadline))
        running = still
    return results


def _bench_instance(suite: str, seed: int, args):
    if suite == "random":
        return casegen.gen_random_instance(
            args.n, args.modes, args.num_actions, seed=seed)
    if suite == "wireless":
        spec = casegen.random_wireless_spec(nodes=args.nodes, modes=args.modes, seed=seed)
        return casegen.build_wireless_model(spec)
    spec = casegen.random_transport_spec(seed=seed)
    return casegen.build_transportation_model(spec)


def _cmd_bench(args) -> int:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    for m in methods:
        if m not in ("cd", "sdp"):
            raise ValueError(f"unknown method {m!r}")
    cd_kwargs = {"max_iters": args.max_iters, "prox_weight": args.L}
    docs = {}
    tasks = {}
    for i in range(args.count):
        seed = args.seed + i
        system, mdp = _bench_instance(args.suite, seed, args)
        doc = modelio.model_to_dict(system, mdp)
        docs[i] = (doc, seed)
        for method in methods:
            tasks[(i, method)] = (doc, method, cd_kwargs)
    print(f"bench suite={args.suite} count={args.count} seed={args.seed} "
          f"timeout={args.timeout:g}s jobs={args.jobs}")
    outcomes = _run_batch(tasks, jobs=args.jobs, timeout=args.timeout)

    rows = []
    for (i, method), result in sorted(outcomes.items()):
        status = result.get("status", "crashed")
        verified = False
        rho = result.get("rho")
        if status == STABILIZED:
            system, mdp = modelio.model_from_dict(docs[i][0])
            verified, rho = modelio.reverify_result(system, mdp, result)
        rows.append({
            "instance": i,
            "seed": docs[i][1],
            "method": method,
            "status": status,
            "rho": rho,
            "wall_time_s": result.get("wall_time_s"),
            "verified": verified,
        })

    print(f"{'method':<8} {'successes':<12} {'avg_time_s':<10}")
    for method in methods:
        mine = [r for r in rows if r["method"] == method]
        good = [r for r in mine if r["status"] == STABILIZED and r["verified"]]
        avg = f"{np.mean([r['wall_time_s'] for r in good]):.2f}" if good else "-"
        print(f"{method:<8} {len(good)}/{len(mine):<10} {avg:<10}")
    unsound = [r for r in rows if r["status"] == STABILIZED and not r["verified"]]
    if unsound:
        print(f"WARNING: {len(unsound)} claimed successes failed re-verification",
              file=_sys.stderr)
    if args.csv:
        with open(args.csv, "w", encoding="utf-8", newline="") as fh:
            writer = _csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
            writer.writeheader()
            writer.writerows(rows)
        print(f"per-run rows written to {args.csv}")
    return EXIT_OK if not unsound else EXIT_SOLVER


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mjls",
        description="Mean-square stability analysis and stabilizing-policy "
                    "synthesis for switched linear systems driven by an MDP.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", help="stability tests for a model (+ optional policy)")
    c.add_argument("model", help="model JSON file")
    c.add_argument("--policy", help="policy or result JSON file")
    c.add_argument("--eps", type=float, default=1e-6, help="strictness margin")
    c.add_argument("--tol", type=float, default=1e-7, help="solver tolerance")
    c.set_defaults(func=_cmd_check)

    s = sub.add_parser("synth", help="synthesize a stabilizing policy")
    s.add_argument("model")
    s.add_argument("--method", choices=("cd", "sdp"), required=True)
    s.add_argument("--L", type=float, default=1e-3, help="proximal weight (cd)")
    s.add_argument("--max-iters", type=int, default=50)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--init", choices=("uniform", "det"), default="uniform",
                   help="cd start: uniform policy or best deterministic")
    s.add_argument("-o", "--out", help="result JSON path (stdout when omitted)")
    s.set_defaults(func=_cmd_synth)

    m = sub.add_parser("simulate", help="Monte-Carlo moment traces under a policy")
    m.add_argument("model")
    m.add_argument("--policy", required=True)
    m.add_argument("--trials", type=int, default=1000)
    m.add_argument("--horizon", type=int, default=100)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--x0", help="comma-separated initial state (default all ones)")
    m.add_argument("--noise-scale", type=float, default=0.0,
                   help="isotropic noise covariance scale (0 = no noise)")
    m.add_argument("--window", type=int, default=25)
    m.add_argument("--rel-tol", type=float, default=0.1)
    m.add_argument("--csv", help="write the moment trace as CSV")
    m.set_defaults(func=_cmd_simulate)

    g = sub.add_parser("gen", help="write a model file")
    gsub = g.add_subparsers(dest="family", required=True)
    gr = gsub.add_parser("random", help="dense random instance")
    gr.add_argument("--n", type=int, default=15)
    gr.add_argument("--modes", type=int, default=2)
    gr.add_argument("--num-actions", type=int, default=2)
    gr.add_argument("--low", type=float, default=-0.5)
    gr.add_argument("--high", type=float, default=0.5)
    gw = gsub.add_parser("wireless", help="wireless power-control instance")
    gw.add_argument("--nodes", type=int, default=4)
    gw.add_argument("--modes", type=int, default=2)
    gt = gsub.add_parser("transport", help="four-buffer transportation network")
    gt.add_argument("--rate", type=float, default=1.0, help="rate on active links")
    gt.add_argument("--ts", type=float, default=0.1, help="sampling time")
    gt.add_argument("--random-rates", action="store_true")
    gg = gsub.add_parser("gap", help="fixed instance where only randomized policies stabilize")
    for sp in (gr, gw, gt, gg):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("-o", "--out", required=True)
        sp.set_defaults(func=_cmd_gen)

    b = sub.add_parser("bench", help="batch synthesis over generated instances")
    b.add_argument("--suite", choices=("random", "wireless", "transport"), required=True)
    b.add_argument("--count", type=int, default=10)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--timeout", type=float, default=300.0, help="seconds per instance run")
    b.add_argument("--methods", default="cd,sdp")
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--max-iters", type=int, default=50)
    b.add_argument("--L", type=float, default=1e-3)
    b.add_argument("--n", type=int, default=15)
    b.add_argument("--modes", type=int, default=2)
    b.add_argument("--num-actions", type=int, default=2)
    b.add_argument("--nodes", type=int, default=4)
    b.add_argument("--csv", help="write per-run rows as CSV")
    b.set_defaults(func=_cmd_bench)
    return parser


def run_cli(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SolverFailureError as exc:
        print(f"solver failure: {exc}", file=_sys.stderr)
        return EXIT_SOLVER
    except np.linalg.LinAlgError as exc:
        print(f"numerical failure: {exc}", file=_sys.stderr)
        return EXIT_SOLVER
    except MjlsError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_BAD_INPUT
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_BAD_INPUT


def main() -> None:
    raise SystemExit(run_cli())
