"""Benchmark harness and command-line interface.

Subcommands: ``gen`` writes scene files, ``run`` writes one JSON log per
episode, ``bench`` runs the agent matrix into a CSV, ``ablate`` runs the
reinvigoration and detector-noise grid, ``render`` replays a log as ASCII.

CSV schema: agent, scene, seed, success, steps, shortest, spl_term, dts,
wall_per_step. Each agent also gets one aggregate row whose scene and seed
columns read ``ALL``; in it success holds SR, steps APL, shortest the mean
ASPPL, spl_term SPL, dts the mean DTS and wall_per_step the mean plan time.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

from .agent import (
    EpisodeConfig,
    EpisodeResult,
    Reinvigoration,
    log_to_json,
    run_episode,
    run_greedy_frontier,
    run_random_walk,
)
from .grid_map import CellState, map_update
from .metrics import MetricSummary, dts_term, summarize
from .motion import Pose
from .simulator import DetectorModel, Scene, SceneParams, generate_scene, load_scene, parse_scene, save_scene, sense

WORKERS_ENV = "POMPP_WORKERS"
CSV_FIELDS = ["agent", "scene", "seed", "success", "steps", "shortest", "spl_term", "dts", "wall_per_step"]
AGGREGATE = "ALL"
SPREAD = "STD"


def _pomp_original(scene: Scene, cfg: EpisodeConfig) -> EpisodeResult:
    return run_episode(scene, replace(cfg, reinvigoration=Reinvigoration.ORIGINAL))


BENCH_AGENTS: dict[str, Callable[[Scene, EpisodeConfig], EpisodeResult]] = {
    "pomp++": run_episode,
    "pomp-original-reinvig": _pomp_original,
    "random": run_random_walk,
    "frontier": run_greedy_frontier,
}


@dataclass(frozen=True)
class Job:
    agent: str
    scene_name: str
    scene: Scene
    seed: int
    cfg: EpisodeConfig


@dataclass
class Row:
    agent: str
    scene: str
    seed: int
    result: EpisodeResult
    dts: float

    def as_csv(self) -> dict:
        r = self.result
        spl = 0.0
        if r.success and r.shortest_path_len is not None:
            spl = r.shortest_path_len / max(r.steps_taken, r.shortest_path_len, 1)
        return {
            "agent": self.agent,
            "scene": self.scene,
            "seed": self.seed,
            "success": int(r.success),
            "steps": r.steps_taken,
            "shortest": "" if r.shortest_path_len is None else r.shortest_path_len,
            "spl_term": spl,
            "dts": self.dts,
            "wall_per_step": r.wall_time_per_step,
        }


def workers_from_env(default: int = 1) -> int:
    raw = os.environ.get(WORKERS_ENV)
    if not raw:
        return default
    try:
        n = int(raw)
    except ValueError as exc:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from exc
    return max(1, n)


def _execute(job: Job) -> Row:
    runner = BENCH_AGENTS[job.agent] if job.agent in BENCH_AGENTS else _variant_runner(job.agent)
    cfg = replace(job.cfg, seed=job.seed)
    res = runner(job.scene, cfg)
    return Row(job.agent, job.scene_name, job.seed, res, dts_term(res, job.scene, cfg.success_distance))


def run_jobs(jobs: Sequence[Job], workers: Optional[int] = None) -> list[Row]:
    """Run episodes, in a process pool when ``workers`` > 1. Output order
    follows ``jobs``."""
    workers = workers_from_env() if workers is None else workers
    if workers <= 1 or len(jobs) <= 1:
        return [_execute(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_execute, jobs, chunksize=1))


def make_jobs(
    agents: Sequence[str],
    scenes: Sequence[tuple[str, Scene]],
    seeds: Sequence[int],
    cfg: EpisodeConfig,
) -> list[Job]:
    return [Job(a, name, sc, seed, cfg) for a in agents for name, sc in scenes for seed in seeds]


def summarize_rows(rows: Sequence[Row], scenes: dict[str, Scene], d_s: float) -> dict[str, MetricSummary]:
    out: dict[str, MetricSummary] = {}
    for agent in dict.fromkeys(r.agent for r in rows):
        mine = [r for r in rows if r.agent == agent]
        out[agent] = summarize([r.result for r in mine], [scenes[r.scene] for r in mine], d_s)
    return out


def _aggregate_row(agent: str, m: MetricSummary) -> dict:
    return {
        "agent": agent,
        "scene": AGGREGATE,
        "seed": AGGREGATE,
        "success": m.sr,
        "steps": "" if m.apl is None else m.apl,
        "shortest": "" if m.asppl_mean is None else m.asppl_mean,
        "spl_term": m.spl,
        "dts": m.dts_mean,
        "wall_per_step": m.runtime_per_step_mean,
    }


def write_csv(path: Path, rows: Sequence[Row], summary: dict[str, MetricSummary]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        w.writeheader()
        for r in rows:
            w.writerow(r.as_csv())
        for agent, m in summary.items():
            w.writerow(_aggregate_row(agent, m))
            spread = dict.fromkeys(CSV_FIELDS, "")
            spread.update(agent=agent, scene=AGGREGATE, seed=SPREAD)
            if m.asppl_std is not None:
                spread["shortest"] = m.asppl_std
            w.writerow(spread)


def read_aggregates(path: Path) -> dict[str, dict[str, Optional[float]]]:
    """Aggregate rows of a bench CSV, keyed by agent."""
    out: dict[str, dict[str, Optional[float]]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["scene"] != AGGREGATE:
                continue
            num = {k: (float(row[k]) if row[k] != "" else None) for k in CSV_FIELDS[3:]}
            if row["seed"] == SPREAD:
                out.setdefault(row["agent"], {})["asppl_std"] = num["shortest"]
                continue
            out.setdefault(row["agent"], {}).update({
                "sr": num["success"],
                "apl": num["steps"],
                "asppl_mean": num["shortest"],
                "spl": num["spl_term"],
                "dts_mean": num["dts"],
                "runtime_per_step_mean": num["wall_per_step"],
            })
    return out


def format_table(summary: dict[str, MetricSummary]) -> str:
    def f(v, spec=".3f"):
        return "-" if v is None else format(v, spec)

    lines = [f"{'agent':<34} {'n':>4} {'SR':>6} {'APL':>7} {'ASPPL':>15} {'SPL':>6} {'DTS(m)':>7} {'s/step':>8}"]
    for agent, m in summary.items():
        asppl = "-" if m.asppl_mean is None else f"{m.asppl_mean:.3f} ({m.asppl_std:.3f})"
        lines.append(
            f"{agent:<34} {m.n:>4} {m.sr:>6.3f} {f(m.apl, '.1f'):>7} {asppl:>15} {m.spl:>6.3f} "
            f"{f(m.dts_mean, '.2f'):>7} {m.runtime_per_step_mean:>8.4f}"
        )
    return "\n".join(lines)


# ---------------------------------------------------------------- ablation


def _variant_name(reinvig: Reinvigoration, det: DetectorModel) -> str:
    noise = "perfect" if det.perfect else f"tpr{det.true_positive_rate:g}-fpr{det.false_positive_rate:g}"
    return f"pomp[{reinvig.value},{noise}]"


def _variant_runner(name: str) -> Callable[[Scene, EpisodeConfig], EpisodeResult]:
    # pomp[<reinvigoration>,<perfect|tprX-fprY>]
    body = name[len("pomp[") : -1]
    reinvig, noise = body.split(",")
    if noise == "perfect":
        det = DetectorModel()
    else:
        tpr, fpr = noise.split("-")
        det = DetectorModel(float(tpr[3:]), float(fpr[3:]))

    def run(scene: Scene, cfg: EpisodeConfig) -> EpisodeResult:
        return run_episode(scene, replace(cfg, reinvigoration=Reinvigoration(reinvig), detector=det))

    return run


def ablation_agents(tpr: float, fpr: float) -> list[str]:
    dets = [DetectorModel(), DetectorModel(tpr, fpr)]
    return [_variant_name(r, d) for r in Reinvigoration for d in dets]


# ---------------------------------------------------------------- rendering

_HEADING_GLYPH = ">^<v"
_STATE_GLYPH = {CellState.UNKNOWN: " ", CellState.SEEN: ".", CellState.CANDIDATE: "F", CellState.OCCLUDER: "#"}


def render_frames(log: dict) -> list[str]:
    """One frame per pose: ground truth on the left, the knowledge map
    rebuilt by replaying sensing on the right. The last frame overlays the
    whole path with ``*``."""
    hdr = log["header"]
    sc = hdr["scene"]
    cfg = EpisodeConfig.from_dict(hdr["config"])
    w, h = sc["width"], sc["height"]
    ox, oy = sc["object"]
    text = f"{w} {h} {sc['resolution']!r}\nstart {' '.join(map(str, sc['start']))}\nobject {ox} {oy}\n"
    scene = parse_scene(text + "\n".join(sc["occupancy"]) + "\n")
    poses = [Pose(*sc["start"])] + [Pose(*s["pose"]) for s in log["steps"]]
    known = scene.blank_map()
    frames = []
    for i, pose in enumerate(poses):
        known = map_update(known, pose, sense(scene, pose, cfg.frustum), cfg.frustum)
        overlay = {(p.x, p.y) for p in poses[: i + 1]} if i == len(poses) - 1 else set()
        glyph = _HEADING_GLYPH[pose.theta] if cfg.motion.num_headings == 4 else "R"
        frames.append(_frame(scene, known, pose, glyph, overlay, i, log["steps"][i - 1] if i else None))
    return frames


def _frame(scene: Scene, known, pose: Pose, glyph: str, overlay: set, index: int, step: Optional[dict]) -> str:
    ox, oy = scene.object_xy
    rows = []
    for y in range(scene.height):
        left, right = [], []
        for x in range(scene.width):
            if (x, y) == (pose.x, pose.y):
                left.append(glyph)
                right.append(glyph)
                continue
            base = "#" if scene.occupancy[y, x] else "."
            if (x, y) == (ox, oy):
                base = "O"
            elif (x, y) in overlay:
                base = "*"
            left.append(base)
            k = _STATE_GLYPH[CellState(int(known.cells[y, x]))]
            right.append("*" if (x, y) in overlay and k == "." else k)
        rows.append("".join(left) + "   " + "".join(right))
    title = f"step {index}"
    if step is not None:
        title += f"  action={step['action']}  phase={step['phase']}  detected={step['real_observation']}"
    return title + "\n" + "\n".join(rows)


# ---------------------------------------------------------------- CLI


def _load_scene_dir(path: Path) -> list[tuple[str, Scene]]:
    files = sorted(Path(path).glob("*.txt"))
    if not files:
        raise FileNotFoundError(f"no scene files (*.txt) in {path}")
    return [(f.stem, load_scene(f)) for f in files]


def _base_config(args: argparse.Namespace) -> EpisodeConfig:
    cfg = EpisodeConfig(record_timing=not getattr(args, "no_timing", False))
    if getattr(args, "max_steps", None):
        cfg = replace(cfg, max_episode_steps=args.max_steps)
    if getattr(args, "simulations", None):
        cfg = replace(cfg, planner=replace(cfg.planner, num_simulations=args.simulations))
    return cfg


def _cmd_gen(args: argparse.Namespace) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.n):
        params = SceneParams(width=args.size, height=args.size, seed=args.seed * 100_003 + i, num_rooms=args.rooms)
        save_scene(generate_scene(params), out / f"scene_{i:03d}.txt")
    print(f"wrote {args.n} scenes to {out}")
    return 0


def _cmd_run(args: argparse.Namespace) -> int:
    scenes = _load_scene_dir(args.scenes)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = make_jobs([args.agent], scenes, range(args.seeds), _base_config(args))
    rows = run_jobs(jobs, args.workers)
    for r in rows:
        (out / f"{r.agent}_{r.scene}_seed{r.seed}.json").write_text(log_to_json(r.result))
    print(format_table(summarize_rows(rows, dict(scenes), _base_config(args).success_distance)))
    return 0


def _run_matrix(args: argparse.Namespace, agents: Sequence[str]) -> int:
    scenes = _load_scene_dir(args.scenes)
    cfg = _base_config(args)
    rows = run_jobs(make_jobs(agents, scenes, range(args.seeds), cfg), args.workers)
    summary = summarize_rows(rows, dict(scenes), cfg.success_distance)
    write_csv(Path(args.out), rows, summary)
    print(format_table(summary))
    print(f"wrote {args.out}")
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    agents = args.agents.split(",") if args.agents else list(BENCH_AGENTS)
    bad = [a for a in agents if a not in BENCH_AGENTS]
    if bad:
        print(f"unknown agent(s): {', '.join(bad)}", file=sys.stderr)
        return 2
    return _run_matrix(args, agents)


def _cmd_ablate(args: argparse.Namespace) -> int:
    return _run_matrix(args, ablation_agents(args.tpr, args.fpr))


def _cmd_render(args: argparse.Namespace) -> int:
    log = json.loads(Path(args.log).read_text())
    frames = render_frames(log)
    if args.final_only:
        frames = frames[-1:]
    print("\n\n".join(frames))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pompp", description="Active visual search with POMCP planning.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate scene files")
    g.add_argument("--n", type=int, default=20)
    g.add_argument("--size", type=int, default=40)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--rooms", type=int, default=8)
    g.add_argument("--out", default="scenes")
    g.set_defaults(func=_cmd_gen)

    def common(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--scenes", required=True, help="directory of scene files")
        sp.add_argument("--seeds", type=int, default=5)
        sp.add_argument("--max-steps", type=int, default=None)
        sp.add_argument("--simulations", type=int, default=None)
        sp.add_argument("--workers", type=int, default=None, help=f"process count (default: ${WORKERS_ENV} or 1)")
        sp.add_argument("--no-timing", action="store_true", help="zero wall-clock fields for reproducible logs")

    r = sub.add_parser("run", help="one agent over a scene set, one JSON log per episode")
    common(r)
    r.add_argument("--agent", choices=list(BENCH_AGENTS), default="pomp++")
    r.add_argument("--out", default="logs")
    r.set_defaults(func=_cmd_run)

    b = sub.add_parser("bench", help="agent matrix to CSV")
    common(b)
    b.add_argument("--agents", default=None, help="comma-separated subset of " + ",".join(BENCH_AGENTS))
    b.add_argument("--out", default="results.csv")
    b.set_defaults(func=_cmd_bench)

    a = sub.add_parser("ablate", help="reinvigoration x detector-noise grid to CSV")
    common(a)
    a.add_argument("--tpr", type=float, default=0.7)
    a.add_argument("--fpr", type=float, default=0.05)
    a.add_argument("--out", default="ablation.csv")
    a.set_defaults(func=_cmd_ablate)

    v = sub.add_parser("render", help="ASCII replay of an episode log")
    v.add_argument("--log", required=True)
    v.add_argument("--final-only", action="store_true")
    v.set_defaults(func=_cmd_render)
    return p


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
