"""Command line entry point: `gen`, `run`, `stats`, `replay`.

Exit codes: 0 = harness completed (scores do not affect it), 1 = usage or
config error, 2 = dataset/input error, 3 = internal error. All randomness is
seeded; two invocations with equal arguments and scripted backends produce
byte-identical outputs.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import traceback
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .agents import Engine, MemoryPool, RunConfig
from .backend import BackendConfig, BackendError, ChatBackend, ReplayScript
from .benchgen import (
    DatasetInstance,
    GenerationError,
    gen_np_instance,
    gen_schedule_instance,
    load_instance_dir,
    write_instance,
)
from .corpus import CorpusError, anonymize, anonymize_tasks, graph_stats, load_network
from .memory import HashEmbedder
from .metrics import (
    MetricResult,
    aggregate_report,
    infonav_stats_from_logs,
    memory_behavior_stats,
)
from .trajectory import TrajectoryWriter, read_log, read_log_partial, render_replay

logger = logging.getLogger(__name__)

GEN_KINDS = ("schedule-easy", "schedule-medium", "schedule-hard", "np")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); usage errors are exit 1
        raise UsageError(message)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file (flags override it)")
    parser.add_argument("--seed", type=int, default=None, help="seed for anything random")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--verbose", action="store_true")


def build_parser() -> _Parser:
    parser = _Parser(prog="asymagents", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="generate a benchmark instance")
    p_gen.add_argument("kind", choices=GEN_KINDS)
    p_gen.add_argument("--count", type=int, default=1, help="number of instances")
    p_gen.add_argument("--participants", type=int, default=None,
                       help="schedule world size (4..6)")
    p_gen.add_argument("--variant", choices=("shared", "opposite"), default="shared",
                       help="needle variant for np")
    _add_common(p_gen)
    p_gen.set_defaults(func=cmd_gen)

    p_run = sub.add_parser("run", help="run tasks and write a report")
    p_run.add_argument("--data", required=True, help="instance directory (or parent of several)")
    p_run.add_argument("--backend", choices=("scripted", "remote", "fallback"), default=None)
    p_run.add_argument("--script", help="replay script for the scripted backend")
    p_run.add_argument("--model", default=None)
    p_run.add_argument("--endpoint", default=None)
    p_run.add_argument("--max-turns", type=int, default=None)
    p_run.add_argument("--depth-limit", type=int, default=None)
    p_run.add_argument("--no-infonav", action="store_true")
    p_run.add_argument("--no-clear-memory", action="store_true")
    p_run.add_argument("--no-fuzzy-memory", action="store_true")
    p_run.add_argument("--no-recursion", action="store_true")
    p_run.add_argument("--privacy-prompt", action="store_true")
    p_run.add_argument("--anonymize", help="rename map file: one 'old new' pair per line")
    p_run.add_argument("--parallel", type=int, default=None)
    p_run.add_argument("--judge", action="store_true",
                       help="score accuracy tasks with the backend as judge")
    _add_common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_stats = sub.add_parser("stats", help="analytics over networks or trajectory logs")
    p_stats.add_argument("what", choices=("graph", "infonav", "memory"))
    p_stats.add_argument("--network", help="network file (for graph stats)")
    p_stats.add_argument("--logs", help="directory of trajectory .jsonl files")
    _add_common(p_stats)
    p_stats.set_defaults(func=cmd_stats)

    p_replay = sub.add_parser("replay", help="render a trajectory log as a transcript")
    p_replay.add_argument("log", help="trajectory .jsonl file")
    _add_common(p_replay)
    p_replay.set_defaults(func=cmd_replay)
    return parser


# ---------------------------------------------------------------------------
# gen
# ---------------------------------------------------------------------------


def cmd_gen(args) -> int:
    seed = args.seed if args.seed is not None else 0
    out = Path(args.out)
    for i in range(args.count):
        instance_seed = seed + i
        if args.kind == "np":
            instance = gen_np_instance(instance_seed, variant=args.variant)
        else:
            difficulty = args.kind.removeprefix("schedule-")
            participants = None
            if args.participants is not None:
                from .benchgen import DEFAULT_PARTICIPANT_NAMES

                if not 4 <= args.participants <= len(DEFAULT_PARTICIPANT_NAMES):
                    raise UsageError("--participants must be between 4 and 6")
                participants = list(DEFAULT_PARTICIPANT_NAMES[: args.participants])
            instance = gen_schedule_instance(instance_seed, difficulty, participants)
        target = out if args.count == 1 else out / f"instance_{i:03d}"
        write_instance(instance, target)
        print(f"wrote {args.kind} instance (seed {instance_seed}) to {target}")
    return 0


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None


def _build_configs(args) -> tuple[RunConfig, BackendConfig]:
    file_cfg = _load_config_file(args.config)
    run_kw = dict(file_cfg.get("run", {}))
    backend_kw = dict(file_cfg.get("backend", {}))
    if args.max_turns is not None:
        run_kw["max_turns"] = args.max_turns
    if args.depth_limit is not None:
        run_kw["depth_limit"] = args.depth_limit
    if args.no_infonav:
        run_kw["infonav"] = False
    if args.no_clear_memory:
        run_kw["clear_memory"] = False
    if args.no_fuzzy_memory:
        run_kw["fuzzy_memory"] = False
    if args.no_recursion:
        run_kw["recursion"] = False
    if args.privacy_prompt:
        run_kw["privacy_prompt"] = True
    if args.seed is not None:
        run_kw["seed"] = args.seed
    if args.parallel is not None:
        run_kw["parallel"] = args.parallel
    if args.backend is not None:
        backend_kw["kind"] = args.backend
    if args.model is not None:
        backend_kw["model"] = args.model
    if args.endpoint is not None:
        backend_kw["endpoint"] = args.endpoint
    try:
        return RunConfig(**run_kw), BackendConfig(**backend_kw)
    except (TypeError, Exception) as exc:
        raise UsageError(f"bad configuration: {exc}") from None


def _load_rename_map(path: str) -> dict[str, str]:
    rename = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise CorpusError(f"{path}:{lineno}: expected 'old new'")
        rename[parts[0]] = parts[1]
    return rename


def _find_instances(data_dir: Path) -> list[Path]:
    if (data_dir / "network.txt").exists():
        return [data_dir]
    found = sorted(p.parent for p in data_dir.glob("*/network.txt"))
    if not found:
        raise CorpusError(f"{data_dir}: no dataset instances (no network.txt found)")
    return found


def _resolve_script(args, instance_dir: Path, task_id: str) -> Path:
    if args.script:
        return Path(args.script)
    per_task = instance_dir / f"replay_{task_id}.jsonl"
    if per_task.exists():
        return per_task
    default = instance_dir / "replay.jsonl"
    if default.exists():
        return default
    raise CorpusError(f"{instance_dir}: no replay script for scripted backend")


def _run_one_task(task, instance: DatasetInstance, instance_dir: Path, args,
                  run_cfg: RunConfig, backend_cfg: BackendConfig, pool: MemoryPool,
                  log_path: Path):
    script = None
    if backend_cfg.kind == "scripted":
        script = ReplayScript.from_path(_resolve_script(args, instance_dir, task.id))
    backend = ChatBackend(backend_cfg, script=script, embedder=pool.embedder)
    judge = backend.chat_text if args.judge else None
    with TrajectoryWriter(log_path) as writer:
        engine = Engine(instance.network, instance.corpus, backend,
                        config=run_cfg, writer=writer, pool=pool, judge=judge)
        return engine.run(task)


def cmd_run(args) -> int:
    run_cfg, backend_cfg = _build_configs(args)
    data_dir = Path(args.data)
    instance_dirs = _find_instances(data_dir)
    rename = _load_rename_map(args.anonymize) if args.anonymize else {}
    if rename:
        run_cfg.anonymize = rename

    loaded: list[tuple[Path, DatasetInstance]] = []
    for inst_dir in instance_dirs:
        instance = load_instance_dir(inst_dir)
        if rename:
            net, corp = anonymize(instance.network, instance.corpus, rename)
            instance = DatasetInstance(net, corp, anonymize_tasks(instance.tasks, rename),
                                       instance.provenance)
        loaded.append((inst_dir, instance))

    out = Path(args.out)
    (out / "trajectories").mkdir(parents=True, exist_ok=True)
    jobs = []
    for inst_dir, instance in loaded:
        pool = MemoryPool(instance.network, instance.corpus, HashEmbedder(),
                          use_clear=run_cfg.clear_memory, use_fuzzy=run_cfg.fuzzy_memory)
        for task in instance.tasks:
            log_path = out / "trajectories" / f"{task.id}.jsonl"
            jobs.append((task, instance, inst_dir, pool, log_path))

    results: list[MetricResult] = []
    errors: list[str] = []

    def execute(job):
        task, instance, inst_dir, pool, log_path = job
        try:
            outcome = _run_one_task(task, instance, inst_dir, args, run_cfg, backend_cfg,
                                    pool, log_path)
        except Exception as exc:  # per-task failures never stop the harness
            logger.error("task %s failed: %s", task.id, exc)
            return task, None, f"{task.id}: {exc}"
        return task, outcome, None

    if run_cfg.parallel > 1:
        with ThreadPoolExecutor(max_workers=run_cfg.parallel) as pool_exec:
            finished = list(pool_exec.map(execute, jobs))
    else:
        finished = [execute(job) for job in jobs]

    for task, outcome, error in finished:
        if error is not None or outcome is None or outcome.termination == "error":
            errors.append(error or f"{task.id}: {outcome.error if outcome else 'unknown error'}")
            results.append(MetricResult(task_id=task.id, metric=task.metric, score=0.0,
                                        prediction="", normalized_prediction="(run error)",
                                        dataset_tag=task.dataset_tag))
        else:
            from .metrics import score_task

            results.append(score_task(task, outcome.answer))

    report = aggregate_report(results, metadata={
        "backend": backend_cfg.digest_fields(),
        "ablations": run_cfg.ablation_flags(),
        "max_turns": run_cfg.max_turns,
        "depth_limit": run_cfg.depth_limit,
        "seed": run_cfg.seed,
        "tasks": len(results),
        "errors": len(errors),
    })
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (out / "report.txt").write_text(report.render_text(), encoding="utf-8")
    print(report.render_text(), end="")
    if errors:
        print(f"{len(errors)} task(s) errored:", file=sys.stderr)
        for line in errors:
            print(f"  {line}", file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# stats
# ---------------------------------------------------------------------------


def _table(rows: list[tuple[str, ...]]) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)) for row in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _load_log_dir(path: str | None) -> list[list[dict]]:
    if not path:
        raise UsageError("--logs is required")
    files = sorted(Path(path).glob("*.jsonl"))
    if not files:
        raise CorpusError(f"{path}: no trajectory logs found")
    return [read_log(f) for f in files]


def cmd_stats(args) -> int:
    if args.what == "graph":
        if not args.network:
            raise UsageError("--network is required for graph stats")
        stats = graph_stats(load_network(args.network))
        rows = [("statistic", "value"),
                ("nodes", str(stats.node_count)),
                ("edges", str(stats.edge_count)),
                ("density", f"{stats.density:.4f}"),
                ("avg degree", f"{stats.avg_degree:.4f}"),
                ("diameter", str(stats.diameter)),
                ("avg path length", f"{stats.avg_path_length:.4f}"),
                ("components", str(stats.component_count))]
        print(_table(rows))
        return 0
    runs = _load_log_dir(args.logs)
    if args.what == "infonav":
        buckets = infonav_stats_from_logs(runs)
        rows = [("sample", "#rationales", "solved/update", "solved%", "fake%", "consensus%")]
        for name in ("right", "wrong", "all"):
            st = buckets[name]
            if st is None:
                rows.append((name, "-", "-", "-", "-", "-"))
            else:
                rows.append((name, f"{st.rationale_count:.2f}", f"{st.solved_per_update:.2f}",
                             f"{100 * st.solved_ratio:.2f}", f"{100 * st.fake_solved_ratio:.2f}",
                             f"{100 * st.consensus_ratio:.2f}"))
        print(_table(rows))
        return 0
    stats = memory_behavior_stats(runs)
    rows = [("parameter", "increase", "decrease", "unchanged", "replaced")]
    for param, counts in stats.overall.items():
        rows.append((param, str(counts["increase"]), str(counts["decrease"]),
                     str(counts["unchanged"]), str(counts["replaced"])))
    print(_table(rows))
    for success in (True, False):
        label = "successful runs" if success else "failed runs"
        rows = [(f"{label}: parameter", "increase", "decrease", "unchanged", "replaced")]
        for param, counts in stats.by_success[success].items():
            rows.append((param, str(counts["increase"]), str(counts["decrease"]),
                         str(counts["unchanged"]), str(counts["replaced"])))
        print()
        print(_table(rows))
    return 0


# ---------------------------------------------------------------------------
# replay
# ---------------------------------------------------------------------------


def cmd_replay(args) -> int:
    records, error = read_log_partial(args.log)
    print(render_replay(records), end="")
    if error is not None:
        print(f"log truncated: {error}", file=sys.stderr)
        return 2
    return 0


# ---------------------------------------------------------------------------
# main
# ---------------------------------------------------------------------------


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (CorpusError, GenerationError, FileNotFoundError) as exc:
        print(f"dataset error: {exc}", file=sys.stderr)
        return 2
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # pragma: no cover - safety net
        traceback.print_exc()
        print(f"internal error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
