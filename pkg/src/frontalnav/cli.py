"""Command-line entry point: ``frontalnav run | report | inspect``."""

from __future__ import annotations

import argparse
import json
import logging
import random
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from . import metrics
from .backend import RemoteProvider, ScriptedProvider, ScriptKeyError
from .config import ConfigError, RunConfig
from .navigator import PROVIDER_FAILURE, run_episode
from .semantics import make_tagger
from .simworld import WorldLoadError, load_episode, load_world

logger = logging.getLogger("frontalnav")

TRACE_SUFFIX = ".trace.jsonl"


class TraceFormatError(ValueError):
    pass


# --------------------------------------------------------------------------
# run


def _load_suite(cfg: RunConfig):
    worlds: dict = {}
    episodes = []
    for path in cfg.episode_files:
        head = json.loads(path.read_text(encoding="utf-8"))
        name = head.get("world") if isinstance(head, dict) else None
        if not isinstance(name, str):
            raise WorldLoadError(f"{path}: missing world name", "world")
        if name not in worlds:
            wpath = cfg.worlds_dir / f"{name}.json"
            if not wpath.exists():
                raise ConfigError(f"{path}: world file {wpath} not found")
            worlds[name] = load_world(wpath)
        episodes.append(load_episode(path, worlds[name]))
    ids = [e.id for e in episodes]
    dupes = sorted({i for i in ids if ids.count(i) > 1})
    if dupes:
        raise ConfigError(f"duplicate episode ids: {dupes}")
    return worlds, episodes


def _make_provider(cfg: RunConfig):
    prov = cfg.raw["provider"]
    if prov["kind"] == "scripted":
        return ScriptedProvider.from_file(prov["script"])
    return RemoteProvider(cfg.provider_config())


def _run_one(spec, world, provider, nav, tagger, out_dir: Path) -> dict:
    trace_path = out_dir / f"{spec.id}{TRACE_SUFFIX}"
    trace_path.unlink(missing_ok=True)
    with trace_path.open("a", encoding="utf-8") as fh:

        def sink(rec: dict) -> None:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
            fh.flush()

        try:
            outcome, _ = run_episode(spec, world, provider, nav, tagger, sink=sink)
        except ScriptKeyError as exc:
            return {"id": spec.id, "trace": trace_path.name, "stop_reason": None, "error": str(exc)}
        except Exception as exc:  # noqa: BLE001 - one bad episode must not sink the batch
            logger.exception("episode %s crashed", spec.id)
            return {"id": spec.id, "trace": trace_path.name, "stop_reason": None, "error": repr(exc)}
    return {"id": spec.id, "trace": trace_path.name, "stop_reason": outcome.stop_reason, "error": None}


def cmd_run(cfg: RunConfig) -> int:
    random.seed(cfg.raw["seed"])
    worlds, episodes = _load_suite(cfg)
    provider = _make_provider(cfg)
    nav = cfg.nav_config()
    tagger = make_tagger(cfg.raw["tagger"], max_range=nav.tagger_range)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)

    with ThreadPoolExecutor(max_workers=cfg.parallel) as pool:
        futures = [
            pool.submit(_run_one, spec, worlds[spec.world], provider, nav, tagger, out) for spec in episodes
        ]
        results = [f.result() for f in futures]

    failed = [r for r in results if r["error"] or r["stop_reason"] == PROVIDER_FAILURE]
    for r in failed:
        print(f"episode {r['id']}: {r['error'] or r['stop_reason']}", file=sys.stderr)
    status = 1 if failed else 0
    manifest = {"config": cfg.effective(), "episodes": results, "exit_status": status}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    print(f"{len(results)} episodes, {len(failed)} failed; traces in {out}")
    return status


# --------------------------------------------------------------------------
# traces


def read_trace(path) -> list[dict]:
    path = Path(path)
    records = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TraceFormatError(f"{path}:{lineno}: malformed trace line ({exc.msg})") from None
            if not isinstance(rec, dict) or "type" not in rec:
                raise TraceFormatError(f"{path}:{lineno}: trace record without a 'type'")
            records.append(rec)
    if not records or records[0]["type"] != "Episode":
        raise TraceFormatError(f"{path}:1: trace must start with an Episode header")
    return records


def trace_path_positions(records: Sequence[dict]) -> list[tuple[float, float]]:
    head = records[0]
    path = [(head["start"]["x"], head["start"]["z"])]
    for r in records:
        if r["type"] in ("ActionExecuted", "StuckShift"):
            path.append((r["post"]["x"], r["post"]["z"]))
    return path


def trace_report(records: Sequence[dict]) -> metrics.MetricReport:
    head = records[0]
    return metrics.episode_report(
        head["episode"],
        trace_path_positions(records),
        head["goal"],
        head["success_radius"],
        head["shortest_path"],
        [tuple(p) for p in head["reference_path"]],
    )


def _fmt(v: Optional[float], digits: int) -> str:
    return "-" if v is None else f"{v:.{digits}f}"


def format_table(reports: Sequence[metrics.MetricReport], agg: dict) -> str:
    header = ("episode", "TL", "NE", "nDTW", "SR", "SPL")
    rows = [
        (r.episode, _fmt(r.TL, 2), _fmt(r.NE, 2), _fmt(r.nDTW, 4), f"{100 * r.success:.0f}", _fmt(r.SPL, 4))
        for r in reports
    ]
    rows.append(
        ("mean", _fmt(agg["TL"], 2), _fmt(agg["NE"], 2), _fmt(agg["nDTW"], 4), f"{agg['SR']:.2f}", _fmt(agg["SPL"], 4))
    )
    widths = [max(len(str(row[i])) for row in [header, *rows]) for i in range(len(header))]

    def line(row):
        return "  ".join(str(c).ljust(widths[0]) if i == 0 else str(c).rjust(widths[i]) for i, c in enumerate(row))

    sep = "  ".join("-" * w for w in widths)
    return "\n".join([line(header), sep, *map(line, rows[:-1]), sep, line(rows[-1])])


def build_report(trace_dir) -> dict:
    trace_dir = Path(trace_dir)
    files = sorted(trace_dir.glob(f"*{TRACE_SUFFIX}")) if trace_dir.is_dir() else []
    if not files:
        raise TraceFormatError(f"no trace files in {trace_dir}")
    reports = [trace_report(read_trace(f)) for f in files]
    return {"episodes": [r.to_json() for r in reports], "aggregate": metrics.aggregate(reports), "_reports": reports}


def cmd_report(trace_dir, json_out: Optional[Path] = None, as_json: bool = False) -> int:
    rep = build_report(trace_dir)
    reports = rep.pop("_reports")
    text = json.dumps(rep, indent=2)
    if json_out is not None:
        Path(json_out).write_text(text + "\n", encoding="utf-8")
    print(text if as_json else format_table(reports, rep["aggregate"]))
    return 0


def _pose(p: dict) -> str:
    return f"({p['x']:.2f}, {p['z']:.2f}, {p['heading']:.0f}°)"


def format_timeline(records: Sequence[dict]) -> str:
    head = records[0]
    lines = [
        f"episode {head['episode']}  world={head['world']}",
        f"instruction: {head['instruction']}",
        f"start {_pose(head['start'])}  goal ({head['goal'][0]:.2f}, {head['goal'][1]:.2f})",
    ]
    for n, r in enumerate(records[1:], start=1):
        t = r["type"]
        if t in ("InitialScan", "ConfuseRescan"):
            lines.append(f"{n:3d} {t} at {_pose(r['pose'])}, {r['depth_renders']} depth renders")
            for v in r["views"]:
                objs = ", ".join(v["objects"]) or "-"
                lines.append(f"      [{v['index']:2d}] {v['text']} | objects: {objs}")
        elif t == "StepObservation":
            lines.append(f"{n:3d} StepObservation step {r['step']} at {_pose(r['pose'])}")
            for s in r["spatial"]:
                lines.append(f"      - {s}")
        elif t == "Decision":
            p = r["parsed"]
            parts = [f"image {p['Selected Image']}"]
            if "Action Options" in p:
                parts.append(f"option {p['Action Options']}")
                if p["Degree"] is not None:
                    parts.append(f"{p['Degree']}°")
            parts.append(f"safe {p['Safe Distance']:.2f} m")
            if p.get("Confuse"):
                parts.append("CONFUSED")
            tries = f"{r['attempts']} attempt" + ("s" if r["attempts"] != 1 else "")
            lines.append(f"{n:3d} Decision {r['kind']} #{r['ordinal']} ({tries}): " + ", ".join(parts))
            if p.get("Thought"):
                lines.append(f"      thought: {p['Thought']}")
        elif t in ("ActionExecuted", "StuckShift"):
            c = r["command"]
            flag = " [clamped]" if r["clamped"] else ""
            lines.append(
                f"{n:3d} {t}: turn {c['turn']:+.0f}°, forward {c['forward']:.2f} m "
                f"{_pose(r['pre'])} -> {_pose(r['post'])}{flag}"
            )
        elif t == "Stop":
            detail = f" ({r['detail']})" if r.get("detail") else ""
            lines.append(f"{n:3d} Stop: {r['reason']}{detail}")
        elif t == "BudgetExhausted":
            lines.append(f"{n:3d} BudgetExhausted after {r['decisions']} decisions")
        elif t == "Metrics":
            lines.append(
                f"metrics: TL {_fmt(r['TL'], 2)}  NE {_fmt(r['NE'], 2)}  nDTW {_fmt(r['nDTW'], 4)}  "
                f"SR {100 * r['success']:.0f}  SPL {_fmt(r['SPL'], 4)}"
            )
        else:
            lines.append(f"{n:3d} {t}")
    return "\n".join(lines)


def cmd_inspect(trace_file) -> int:
    print(format_timeline(read_trace(trace_file)))
    return 0


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="frontalnav", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a batch of episodes")
    run.add_argument("--config", type=Path)
    run.add_argument("--episodes", nargs="+", help="episode files or directories")
    run.add_argument("--worlds-dir", dest="worlds_dir")
    run.add_argument("--provider", choices=("scripted", "remote"), dest="provider_kind")
    run.add_argument("--script", help="script file for the scripted provider")
    run.add_argument("--out")
    run.add_argument("--parallel", type=int)
    run.add_argument("--max-steps", type=int, dest="max_steps")
    run.add_argument("--seed", type=int)

    rep = sub.add_parser("report", help="metrics table from a trace directory")
    rep.add_argument("trace_dir", type=Path)
    rep.add_argument("--json", dest="json_out", type=Path, help="also write the report as JSON")
    rep.add_argument("--format", choices=("text", "json"), default="text")

    ins = sub.add_parser("inspect", help="print a trace as a timeline")
    ins.add_argument("trace_file", type=Path)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            overrides = {
                k: getattr(args, k)
                for k in ("episodes", "worlds_dir", "provider_kind", "script", "out", "parallel", "max_steps", "seed")
            }
            return cmd_run(RunConfig.load(args.config, overrides))
        if args.command == "report":
            return cmd_report(args.trace_dir, args.json_out, args.format == "json")
        return cmd_inspect(args.trace_file)
    except (ConfigError, WorldLoadError, TraceFormatError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
