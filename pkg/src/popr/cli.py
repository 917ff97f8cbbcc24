"""Command-line entry point: ``popr <command> ...``.

Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, analysis, experiments, io, kernels, metrics, sampler, toyenv
from .config import RunConfig, load_run_config
from .core import ConstantPolicy
from .errors import PoprError, ValidationError

log = logging.getLogger("popr")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(ValidationError):
    pass


def _plain(value):
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def _provenance(args: argparse.Namespace, run: RunConfig | None = None, **extra) -> dict:
    prov = {
        "popr_version": __version__,
        "backend": kernels.BACKEND,
        "command": args.command,
        "args": {k: _plain(v) for k, v in vars(args).items() if k != "func"},
    }
    if run is not None:
        prov["config"] = run.to_dict()
    prov.update(extra)
    return prov


def _stage_outputs(out_dir: Path, files: dict[str, str]) -> None:
    """Write all files to a staging directory first, then move them into ``out_dir``."""
    out_dir.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=".popr-stage-", dir=out_dir))
    try:
        for name, text in files.items():
            (stage / name).write_text(text, encoding="utf-8")
        for name in files:
            os.replace(stage / name, out_dir / name)
    finally:
        shutil.rmtree(stage, ignore_errors=True)


def _resolve_run(args) -> RunConfig:
    run = load_run_config(getattr(args, "config", None))
    if getattr(args, "seed", None) is not None:
        run = replace(run, sampler=replace(run.sampler, seed=args.seed))
    return run


# --------------------------------------------------------------------------
# gen-toy


def _parse_policy_flag(text: str, n_states: int, seed: int):
    if text == "expert":
        return toyenv.expert_policy(n_states)
    if text.startswith("mixture:"):
        try:
            eps = float(text.split(":", 1)[1])
        except ValueError:
            raise UsageError(f"bad --policy {text!r}; expected mixture:<epsilon>") from None
        return toyenv.mixture_policy(toyenv.MixturePolicySpec(eps, seed), n_states)
    if text.startswith("constant:"):
        try:
            return ConstantPolicy(int(text.split(":", 1)[1]), toyenv.ACTION_SPACE, state_dim=1)
        except ValueError:
            raise UsageError(f"bad --policy {text!r}; expected constant:<action>") from None
    raise UsageError(f"unknown --policy {text!r}; use expert, mixture:<eps> or constant:<action>")


def cmd_gen_toy(args) -> int:
    cfg = toyenv.ToyEnvConfig(args.states, args.slip, args.len, args.seed)
    policy = _parse_policy_flag(args.policy, args.states, args.seed)
    data = toyenv.generate_dataset(cfg, policy, args.episodes)
    io.write_dataset(data, args.out)
    print(f"wrote {len(data)} trajectories x {cfg.episode_length} steps to {args.out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# rank / multi-expert


def _rank_files(outcome_report, samples, matrix, burnin: int, prov: dict) -> dict[str, str]:
    return {
        "report.json": io.report_json(outcome_report, prov),
        "report.csv": io.report_csv(outcome_report),
        "samples.json": io.report_json(samples, prov),
        "samples.csv": io.report_csv(samples),
        "pairwise.json": io.report_json(matrix, prov),
        "pairwise.csv": io.report_csv(matrix),
        "pairwise_matrix.csv": io.pairwise_matrix_csv(matrix),
        "trace.csv": io.chain_trace_csv(samples, burnin),
        "config.json": json.dumps(prov, indent=2) + "\n",
    }


def _summarise(report: analysis.RankingReport) -> None:
    width = max(len(p) for p in report.ordering)
    print(f"mode={report.mode}" + (f" tail={report.fraction:g}" if report.mode != analysis.MEAN else ""))
    for i, pid in enumerate(report.ordering, 1):
        spread = report.spread.get(pid)
        extra = f"  std={spread:.4f}" if spread is not None else ""
        print(f"{i:>3}  {pid:<{width}}  score={report.scores[pid]:.4f}{extra}")


def cmd_rank(args) -> int:
    run = _resolve_run(args)
    data = io.read_dataset(args.data)
    entries = io.read_manifest(args.policies)
    policies = io.build_policies(entries, data)
    try:
        outcome = experiments.rank_policies(data, policies, run.sampler, args.mode, args.tail)
    finally:
        for p in policies:
            p.close()
    prov = _provenance(args, run, seed=run.sampler.seed)
    _stage_outputs(Path(args.out), _rank_files(outcome.report, outcome.samples, outcome.pairwise,
                                               run.sampler.burnin, prov))
    _summarise(outcome.report)
    return EXIT_OK


def cmd_multi_expert(args) -> int:
    run = _resolve_run(args)
    datasets = [io.read_dataset(p) for p in args.datasets]
    top_r = args.top_r if args.top_r is not None else min(run.experiment.top_r, len(datasets))
    if not 1 <= top_r <= len(datasets):
        raise UsageError(f"--top-r must lie in [1, {len(datasets)}], got {top_r}")
    entries = io.read_manifest(args.policies)
    per_expert = []
    for data in datasets:
        policies = io.build_policies(entries, data)
        try:
            per_expert.append(sampler.run_all(data, policies, run.sampler))
        finally:
            for p in policies:
                p.close()
    pooled = analysis.multi_expert_aggregate(per_expert, top_r)
    if args.mode == analysis.MEAN:
        report = analysis.rank_mean(pooled)
    else:
        report = analysis.rank_tail(pooled, args.mode, args.tail)
    matrix = analysis.pairwise(pooled)
    prov = _provenance(args, run, seed=run.sampler.seed, top_r=top_r)
    files = _rank_files(report, pooled, matrix, run.sampler.burnin, prov)
    files.pop("trace.csv")
    _stage_outputs(Path(args.out), files)
    _summarise(report)
    return EXIT_OK


# --------------------------------------------------------------------------
# mix-data


def _parse_fractions(text: str) -> list[float]:
    try:
        parts = [float(x) for x in text.split(":" if ":" in text else ",")]
    except ValueError:
        raise UsageError(f"bad --fraction {text!r}; use a number, a comma list or start:stop:step") from None
    if ":" not in text:
        return parts
    if len(parts) != 3:
        raise UsageError(f"bad --fraction range {text!r}; expected start:stop:step")
    start, stop, step = parts
    if step <= 0 or stop < start:
        raise UsageError(f"bad --fraction range {text!r}; need start <= stop and step > 0")
    n = int(round((stop - start) / step)) + 1
    return [round(start + i * step, 10) for i in range(n)]


def _noise_dataset(args, expert) -> "io.ExpertDataset":
    spec = args.noise or "mixture:1.0"
    if Path(spec).exists():
        return io.read_dataset(spec)
    meta = expert.meta
    if meta.get("env") != "toy-ring":
        raise UsageError("--noise must be a dataset file unless the expert data comes from gen-toy")
    cfg = toyenv.ToyEnvConfig(int(meta["n_states"]), float(meta["slip_prob"]), int(meta["episode_length"]),
                              experiments.derived_seed(args.seed, "noise-data"))
    policy = _parse_policy_flag(spec, cfg.n_states, args.seed)
    return toyenv.generate_dataset(cfg, policy, len(expert))


def cmd_mix_data(args) -> int:
    expert = io.read_dataset(args.expert)
    fractions = _parse_fractions(args.fraction)
    for f in fractions:
        if not 0.0 <= f <= 1.0:
            raise UsageError(f"--fraction values must lie in [0, 1], got {f}")
    noise = _noise_dataset(args, expert)
    mixed = {f: experiments.mix_datasets(expert, noise, f, args.seed) for f in fractions}
    out = Path(args.out)
    if len(fractions) == 1:
        io.write_dataset(mixed[fractions[0]], out)
        print(f"wrote {out}")
    else:
        files = {f"mix_{f:.2f}.jsonl": io.dumps_dataset(d) for f, d in mixed.items()}
        _stage_outputs(out, files)
        print(f"wrote {len(files)} datasets to {out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# sweep


def cmd_sweep(args) -> int:
    run = _resolve_run(args)
    if args.reps is not None:
        run = replace(run, experiment=replace(run.experiment, repetitions=args.reps))
    values = experiments.sweep_values(run, args.axis)
    rows = []
    for value in values:
        for rep in range(run.experiment.repetitions):
            cell = experiments.sweep_cell(run, args.axis, value, rep)
            rows.append((value, rep, cell["ndcg"], cell["srcc"]))
            log.info("axis=%s value=%s rep=%d ndcg=%.4f srcc=%.4f", args.axis, value, rep, cell["ndcg"], cell["srcc"])
    run_lines = ["axis_value,rep,ndcg,srcc"] + [f"{v},{r},{float(n)!r},{float(s)!r}" for v, r, n, s in rows]
    summary = ["axis_value,n,ndcg_mean,ndcg_std,srcc_mean,srcc_std"]
    for value in values:
        nd = np.array([r[2] for r in rows if r[0] == value])
        sr = np.array([r[3] for r in rows if r[0] == value])
        summary.append(",".join([str(value), str(nd.size)] + [repr(float(x)) for x in (nd.mean(), nd.std(), sr.mean(), sr.std())]))
        print(f"{args.axis}={value}: ndcg={nd.mean():.4f}+-{nd.std():.4f} srcc={sr.mean():.4f}+-{sr.std():.4f}")
    prov = _provenance(args, run, axis=args.axis, values=values, truth=experiments.ground_truth(run))
    _stage_outputs(Path(args.out_dir), {
        f"sweep_{args.axis}.csv": "\n".join(run_lines) + "\n",
        f"sweep_{args.axis}_summary.csv": "\n".join(summary) + "\n",
        "config.json": json.dumps(prov, indent=2) + "\n",
    })
    return EXIT_OK


# --------------------------------------------------------------------------
# metrics


def cmd_metrics(args) -> int:
    pred = io.read_ordering(args.predicted)
    truth = io.read_ordering(args.truth)
    nd = metrics.ndcg(pred, truth)
    sr = metrics.srcc(pred, truth)
    print(f"ndcg={round(nd, 6)!r} srcc={round(sr, 6)!r}")
    return EXIT_OK


# --------------------------------------------------------------------------


def _fraction(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="popr", description="Probabilistic offline policy ranking.")
    p.add_argument("--version", action="version", version=f"popr {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-toy", help="generate a ring-environment dataset")
    g.add_argument("--states", type=int, default=10)
    g.add_argument("--episodes", type=int, default=20)
    g.add_argument("--len", type=int, default=100)
    g.add_argument("--slip", type=float, default=0.1)
    g.add_argument("--policy", default="expert", help="expert | mixture:<eps> | constant:<action>")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, type=Path)
    g.set_defaults(func=cmd_gen_toy)

    r = sub.add_parser("rank", help="sample posteriors and rank candidate policies")
    r.add_argument("--data", required=True, type=Path)
    r.add_argument("--policies", required=True, type=Path, help="policy manifest (JSON)")
    r.add_argument("--config", type=Path)
    r.add_argument("--mode", choices=[analysis.MEAN, analysis.WORST, analysis.BEST], default=analysis.MEAN)
    r.add_argument("--tail", type=_fraction, default=0.05)
    r.add_argument("--seed", type=int)
    r.add_argument("--out", required=True, type=Path, help="output directory")
    r.set_defaults(func=cmd_rank)

    m = sub.add_parser("mix-data", help="mix expert and non-expert trajectories")
    m.add_argument("--expert", required=True, type=Path)
    m.add_argument("--noise", help="dataset file or policy (default mixture:1.0)")
    m.add_argument("--fraction", required=True, help="expert fraction: x, a,b,c or start:stop:step")
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--out", required=True, type=Path, help="file (one fraction) or directory (several)")
    m.set_defaults(func=cmd_mix_data)

    s = sub.add_parser("sweep", help="repeat the ring experiment along one axis")
    s.add_argument("--axis", required=True, choices=experiments.SWEEP_AXES)
    s.add_argument("--config", type=Path)
    s.add_argument("--reps", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--out-dir", required=True, type=Path)
    s.set_defaults(func=cmd_sweep)

    t = sub.add_parser("metrics", help="NDCG and SRCC between two ordering files")
    t.add_argument("--predicted", required=True, type=Path)
    t.add_argument("--truth", required=True, type=Path)
    t.set_defaults(func=cmd_metrics)

    x = sub.add_parser("multi-expert", help="rank with several expert datasets and top-r pooling")
    x.add_argument("--datasets", required=True, nargs="+", type=Path)
    x.add_argument("--policies", required=True, type=Path)
    x.add_argument("--top-r", type=int)
    x.add_argument("--config", type=Path)
    x.add_argument("--mode", choices=[analysis.MEAN, analysis.WORST, analysis.BEST], default=analysis.MEAN)
    x.add_argument("--tail", type=_fraction, default=0.05)
    x.add_argument("--seed", type=int)
    x.add_argument("--out", required=True, type=Path)
    x.set_defaults(func=cmd_multi_expert)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"popr {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PoprError, OSError) as exc:
        print(f"popr {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - last-resort guard so the exit code contract holds
        log.debug("unexpected failure", exc_info=True)
        print(f"popr {args.command}: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
