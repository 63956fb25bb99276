"""Command-line interface.

Exit codes: 0 on success, 1 for usage errors, 2 for data or validation
problems, 3 when the numerics give up.
"""

import argparse
import csv
import json
import sys
from pathlib import Path

from . import (
    assessment_engine,
    benchmark,
    gp_core,
    heatmap,
    metrics,
    subject_sim,
    treatment,
)
from .domain import SessionConfig
from .errors import NeglectMapperError, NumericalError, ValidationError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _parse_budgets(spec: str) -> list[int]:
    """Budget list: comma-separated values and/or a..b or a..b..step ranges."""
    out = []
    try:
        for part in spec.split(","):
            part = part.strip()
            if ".." in part:
                pieces = part.split("..")
                if len(pieces) == 2:
                    lo, hi, step = int(pieces[0]), int(pieces[1]), 10
                elif len(pieces) == 3:
                    lo, hi, step = int(pieces[0]), int(pieces[1]), int(pieces[2])
                else:
                    raise ValidationError(f"bad budget range {part!r}")
                if step < 1 or hi < lo:
                    raise ValidationError(f"bad budget range {part!r}")
                out.extend(range(lo, hi + 1, step))
            elif part:
                out.append(int(part))
    except ValueError:
        raise ValidationError(f"bad budget spec {spec!r}") from None
    if not out:
        raise ValidationError("no budgets given")
    return out


def _cmd_simulate(args) -> int:
    field_ = subject_sim.load_field(args.profile)
    with open(args.config) as fh:
        config_dict = json.load(fh)
    if args.seed is not None:
        config_dict["seed"] = args.seed
    config = SessionConfig.from_dict(config_dict)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    events_path = out_dir / "events.jsonl"
    events_fh = open(events_path, "w")

    def sink(event):
        payload = dict(event)
        if args.deterministic:
            payload.pop("t_wall", None)
        events_fh.write(json.dumps(payload) + "\n")
        events_fh.flush()

    responder = subject_sim.SimulatedResponder(
        field_, t_max_s=config.t_max_s, difficulty=config.difficulty, seed=config.seed
    )
    try:
        state = assessment_engine.run_assessment(config, responder, event_sink=sink)
    finally:
        events_fh.close()

    assessment_engine.save_session(
        state, out_dir / "session.json", deterministic=args.deterministic
    )
    if state.model is not None:
        gp_core.save_model(state.model, out_dir / "model.json")
        h = heatmap.evaluate_grid(state.model)
        heatmap.write_ppm(h, "mean", out_dir / "heatmap_mean.ppm")
        heatmap.write_ppm(h, "two_sigma", out_dir / "heatmap_two_sigma.ppm")
        heatmap.write_csv(h, out_dir / "heatmap.csv")
    print(
        f"session {state.session_id}: {state.n_measured} measurements, "
        f"phase {state.phase.kind}"
    )
    return EXIT_OK


def _cmd_benchmark(args) -> int:
    profiles_dir = Path(args.profiles)
    profile_paths = sorted(profiles_dir.glob("*.json"))
    if not profile_paths:
        raise ValidationError(f"no profile JSON files under {profiles_dir}")
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    known = benchmark.ACTIVE_STRATEGIES + benchmark.STATIC_STRATEGIES
    for s in strategies:
        if s not in known:
            raise ValidationError(f"unknown strategy {s!r}, expected one of {known}")
    budgets = _parse_budgets(args.budgets)
    points = benchmark.evaluation_points()
    rows = []
    for path in profile_paths:
        field_ = subject_sim.load_field(path)
        for strategy in strategies:
            for budget in budgets:
                for seed in range(args.seeds):
                    rmse, wall_ms = benchmark.run_arm(
                        field_, strategy, budget, seed, points=points
                    )
                    rows.append(
                        {
                            "profile": path.stem,
                            "strategy": strategy,
                            "budget": budget,
                            "seed": seed,
                            "rmse": f"{rmse:.6f}",
                            "wall_ms": f"{wall_ms:.3f}",
                        }
                    )
    with open(args.out, "w", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["profile", "strategy", "budget", "seed", "rmse", "wall_ms"]
        )
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {len(rows)} rows to {args.out}")
    return EXIT_OK


def _cmd_heatmap(args) -> int:
    model = gp_core.load_model(args.model)
    h = heatmap.evaluate_grid(
        model, nx=args.nx, ny=args.ny, mask_threshold=args.mask_threshold
    )
    if args.format == "csv":
        heatmap.write_csv(h, args.out)
    elif args.format == "ppm":
        heatmap.write_ppm(h, args.which, args.out)
    else:
        heatmap.write_png(h, args.which, args.out)
    print(f"wrote {args.format} heatmap to {args.out}")
    return EXIT_OK


def _cmd_metrics_sam(args) -> int:
    samples = metrics.load_trace(args.trace)
    if args.decompose:
        samples = metrics.decompose_gaze(samples)
    report = metrics.compute_sam(samples)
    json.dump(report.to_dict(), sys.stdout, indent=2)
    print()
    return EXIT_OK


def _load_scores(path: str):
    scores, labels = [], []
    try:
        if path.endswith(".json"):
            with open(path) as fh:
                for row in json.load(fh):
                    scores.append(float(row["score"]))
                    labels.append(int(row["label"]))
            return scores, labels
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if not reader.fieldnames or "score" not in reader.fieldnames or "label" not in reader.fieldnames:
                raise ValidationError("scores file needs score and label columns")
            for row in reader:
                scores.append(float(row["score"]))
                labels.append(int(row["label"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed scores file {path}: {exc}") from None
    return scores, labels


def _cmd_metrics_roc(args) -> int:
    scores, labels = _load_scores(args.scores)
    curve = metrics.roc_curve(scores, labels)
    json.dump(curve.to_dict(), sys.stdout, indent=2)
    print()
    return EXIT_OK


def _cmd_border(args) -> int:
    model = gp_core.load_model(args.model)
    border = treatment.extract_border(model, threshold=args.threshold)
    json.dump(border.to_dict(), sys.stdout, indent=2)
    print()
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    from .service_api import create_app

    uvicorn.run(create_app(args.data_dir), host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="neglect-mapper")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one simulated assessment session")
    p.add_argument("--profile", required=True, help="subject field JSON")
    p.add_argument("--config", required=True, help="session config JSON")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument(
        "--deterministic",
        action="store_true",
        help="omit wall-clock timestamps so reruns are byte-identical",
    )
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("benchmark", help="compare sampling strategies on simulated subjects")
    p.add_argument("--profiles", required=True, help="directory of subject field JSONs")
    p.add_argument("--strategies", default="us,ivr,random,grid")
    p.add_argument(
        "--budgets",
        default="10..80",
        help="comma list and/or a..b or a..b..step ranges (default step 10)",
    )
    p.add_argument("--seeds", type=int, default=50, help="seeds 0..n-1 per cell")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_benchmark)

    p = sub.add_parser("heatmap", help="render a saved model as an image or CSV")
    p.add_argument("--model", required=True, help="model JSON path")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["csv", "ppm", "png"], default="ppm")
    p.add_argument("--which", choices=["mean", "two_sigma"], default="mean")
    p.add_argument("--nx", type=int, default=heatmap.DEFAULT_NX)
    p.add_argument("--ny", type=int, default=heatmap.DEFAULT_NY)
    p.add_argument("--mask-threshold", type=float, default=None)
    p.set_defaults(func=_cmd_heatmap)

    p = sub.add_parser("metrics", help="gaze-trace metrics")
    msub = p.add_subparsers(dest="metrics_command", required=True)
    ps = msub.add_parser("sam", help="spontaneous-activity measure of a trace")
    ps.add_argument("--trace", required=True, help="trace CSV or JSONL")
    ps.add_argument(
        "--decompose",
        action="store_true",
        help="derive the eye channel from gaze minus head first",
    )
    ps.set_defaults(func=_cmd_metrics_sam)
    pr = msub.add_parser("roc", help="ROC curve for scored binary labels")
    pr.add_argument("--scores", required=True, help="CSV (score,label) or JSON")
    pr.set_defaults(func=_cmd_metrics_roc)

    p = sub.add_parser("border", help="extract the neglect border from a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--threshold", type=float, default=treatment.DEFAULT_BORDER_THRESHOLD)
    p.set_defaults(func=_cmd_border)

    p = sub.add_parser("serve", help="run the HTTP API")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--data-dir", default=None)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (NeglectMapperError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
