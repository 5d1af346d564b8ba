"""Command-line entry point: ``python -m snipmotion <command> ...``.

Commands: synth, segment, train, eval, predict. Errors are printed to stderr
as one JSON line ``{"code": ..., "message": ...}`` with a nonzero exit code.
"""
from __future__ import annotations

import argparse
import csv
import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from .autodiff import NonFiniteError
from .io import (SUFFIX, _corpus_files, corpus_checksum, generate_synthetic, load_corpus, random_synthetic_spec,
                 read_motion, write_motion)
from .model import ModelConfig, SnippetToMotion, load_checkpoint, save_checkpoint
from .segment import segment_history, shared_transitions, split_order
from .skeleton import MotionSequence
from .train import TrainConfig, evaluate_by_tag, fit


class CliError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code
        self.message = message


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", f"{message}; {self.format_usage().strip()}")


def _write_json(obj, path):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


# -- synth ----------------------------------------------------------------

def cmd_synth(args) -> None:
    if args.knots < 2:
        raise CliError("invalid_flag", "--knots must be at least 2 (the two endpoints)")
    if args.frames < 2:
        raise CliError("invalid_flag", "--frames must be at least 2")
    if args.frames < args.knots:
        raise CliError("invalid_flag", f"--frames {args.frames} cannot hold {args.knots} distinct knots")
    rng = np.random.default_rng(args.seed)
    try:
        spec = random_synthetic_spec(rng, args.joints, args.frames, args.knots - 2, args.noise, args.scale,
                                     seed=args.seed, min_gap=args.min_gap)
    except ValueError as e:
        raise CliError("invalid_flag", str(e)) from e
    seq, trans = generate_synthetic(spec)
    seq = MotionSequence(seq.data, args.fps)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_motion(seq, args.out)
    _write_json({"transitions": [int(t) for t in trans], "knot_frames": [int(t) for t in spec.knot_frames]},
                str(args.out) + ".transitions.json")


# -- segment --------------------------------------------------------------

def segment_report(paths, snippets: int, scheme: str) -> dict:
    samples, segs = [], []
    for p in paths:
        x = read_motion(p).data
        if x.shape[0] < snippets + 1:
            raise CliError("too_many_snippets",
                           f"{p}: {x.shape[0]} frames allow at most {x.shape[0] - 1} snippets, got {snippets}")
        seg = segment_history(x, snippets)
        segs.append(seg)
        trail = [{"span": list(span), "frame": int(f)} for span, f in split_order(x, snippets)]
        samples.append({"file": str(p), "transitions": list(seg.transitions), "trail": trail})
    report = {"scheme": scheme, "snippets": snippets, "samples": samples}
    if scheme == "shared":
        if len({s.span for s in segs}) > 1:
            raise CliError("span_mismatch", "shared scheme needs every file to have the same frame count")
        report["transitions"] = list(shared_transitions(segs).transitions)
    else:
        report["transitions"] = samples[0]["transitions"]
    report["trail"] = samples[0]["trail"]
    return report


def cmd_segment(args) -> None:
    paths = [p for p, _ in _corpus_files(args.input)]
    _write_json(segment_report(paths, args.snippets, args.scheme), args.out)


# -- train ----------------------------------------------------------------

def _git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True, text=True,
                             cwd=Path(__file__).parent, timeout=10)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def load_run_config(path, seed: int | None = None) -> tuple[dict, dict]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    unknown = set(raw) - {"model", "train"}
    if unknown:
        raise CliError("invalid_config", f"unknown config sections: {sorted(unknown)}")
    model, train = dict(raw.get("model", {})), dict(raw.get("train", {}))
    if seed is not None:
        model["seed"] = train["seed"] = seed
    return model, train


def cmd_train(args) -> None:
    model_d, train_d = load_run_config(args.config, args.seed)
    for key in ("history", "horizon"):
        if key not in model_d:
            raise CliError("invalid_config", f"model.{key} is required")
    corpus = load_corpus(args.corpus, model_d["history"], model_d["horizon"])
    model_d.setdefault("joints", corpus.joints)
    model_d.setdefault("dims", corpus.dims)
    try:
        mcfg = ModelConfig.from_dict(model_d)
        tcfg = TrainConfig.from_dict(train_d)
    except (TypeError, ValueError) as e:
        raise CliError("invalid_config", str(e)) from e
    if (mcfg.joints, mcfg.dims) != (corpus.joints, corpus.dims):
        raise CliError("shape_mismatch", f"config joints/dims {(mcfg.joints, mcfg.dims)} "
                                         f"!= corpus {(corpus.joints, corpus.dims)}")
    model = SnippetToMotion(mcfg)
    start = time.time()
    fit(model, corpus, tcfg, log_path=args.log_out)
    save_checkpoint(model, args.ckpt_out)
    manifest = {
        "config": {"model": mcfg.to_dict(), "train": tcfg.to_dict()},
        "corpus_checksum": corpus_checksum(args.corpus),
        "seed": tcfg.seed,
        "git_describe": _git_describe(),
        "wall_clock_s": round(time.time() - start, 3),
        "parameter_count": model.parameter_count(),
    }
    _write_json(manifest, str(args.ckpt_out) + ".manifest.json")


# -- eval -----------------------------------------------------------------

def _parse_timestamps(text: str) -> list[float]:
    try:
        out = [float(t) for t in text.split(",") if t.strip()]
    except ValueError as e:
        raise CliError("invalid_flag", f"--timestamps must be comma-separated numbers, got {text!r}") from e
    if not out:
        raise CliError("invalid_flag", "--timestamps is empty")
    return [int(t) if t == int(t) else t for t in out]


def check_compatible(model: SnippetToMotion, corpus) -> None:
    c = model.config
    want = {"joints": c.joints, "dims": c.dims, "history": c.history, "horizon": c.horizon}
    have = {"joints": corpus.joints, "dims": corpus.dims, "history": corpus.history, "horizon": corpus.horizon}
    if want != have:
        raise CliError("shape_mismatch", f"checkpoint {want} vs corpus {have}")


def write_table_csv(table: dict, timestamps, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["tag"] + [f"{t}ms" for t in timestamps])
        for tag, row in table.items():
            w.writerow([tag] + [repr(float(row[t])) for t in timestamps])


def write_svg(table: dict, timestamps, path, width=480, height=320) -> None:
    """Minimal line chart of MPJPE against prediction time, one polyline per tag."""
    pad = 48
    xs, ys = [float(t) for t in timestamps], [v for row in table.values() for v in row.values()]
    x0, x1 = min(xs), max(xs)
    y1 = max(max(ys), 1e-9)
    span_x = (x1 - x0) or 1.0

    def px(x):
        return pad + (x - x0) / span_x * (width - 2 * pad)

    def py(y):
        return height - pad - y / y1 * (height - 2 * pad)

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
             f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
             f'<text x="{width / 2}" y="{height - 12}" text-anchor="middle">ms</text>',
             f'<text x="12" y="{pad - 12}">MPJPE (max {y1:.1f})</text>']
    for t in xs:
        parts.append(f'<text x="{px(t):.1f}" y="{height - pad + 16}" text-anchor="middle" '
                     f'font-size="10">{t:g}</text>')
    for k, (tag, row) in enumerate(table.items()):
        color = colors[k % len(colors)]
        pts = " ".join(f"{px(float(t)):.1f},{py(row[t]):.1f}" for t in timestamps)
        parts.append(f'<polyline fill="none" stroke="{color}" points="{pts}"/>')
        parts.append(f'<text x="{width - pad + 4}" y="{pad + 14 * k}" fill="{color}" font-size="10">{tag}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")


def cmd_eval(args) -> None:
    model = load_checkpoint(args.ckpt)
    c = model.config
    corpus = load_corpus(args.corpus, c.history, c.horizon)
    check_compatible(model, corpus)
    timestamps = _parse_timestamps(args.timestamps)
    try:
        table = evaluate_by_tag(model, corpus, timestamps)
    except ValueError as e:
        raise CliError("invalid_flag", str(e)) from e
    write_table_csv(table, timestamps, args.out)
    if args.svg:
        write_svg(table, timestamps, args.svg)


# -- predict --------------------------------------------------------------

def cmd_predict(args) -> None:
    model = load_checkpoint(args.ckpt)
    c = model.config
    seq = read_motion(args.input)
    if seq.data.shape[1:] != (c.joints, c.dims):
        raise CliError("shape_mismatch", f"input joints/dims {seq.data.shape[1:]} vs checkpoint "
                                         f"{(c.joints, c.dims)}")
    if seq.frames < c.history:
        raise CliError("short_input", f"input has {seq.frames} frames, need at least {c.history}")
    past = seq.data[-c.history:][None]
    last = model.forward(past)[-1]
    write_motion(MotionSequence(last.refined.data[0], seq.fps), args.out)
    if args.dump_transitionals:
        _write_json({"targets": [int(t) for t in last.targets[0]],
                     "transitionals": last.transitionals.data[0].tolist(),
                     "approx_at_targets": last.approx.data[0, last.targets[0]].tolist()},
                    args.dump_transitionals)


# -- entry point ----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="snipmotion", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="write a piecewise-linear synthetic motion")
    s.add_argument("--joints", type=int, required=True)
    s.add_argument("--knots", type=int, required=True, help="knot count including both endpoints")
    s.add_argument("--frames", type=int, required=True)
    s.add_argument("--noise", type=float, default=0.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--scale", type=float, default=100.0)
    s.add_argument("--min-gap", type=int, default=1)
    s.add_argument("--fps", type=float, default=25.0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("segment", help="find transitional frames")
    s.add_argument("--in", dest="input", required=True, help=f"{SUFFIX} file or directory")
    s.add_argument("--snippets", type=int, required=True)
    s.add_argument("--scheme", choices=["shared", "non_shared"], default="non_shared")
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_segment)

    s = sub.add_parser("train", help="train a model on a corpus")
    s.add_argument("--corpus", required=True)
    s.add_argument("--config", required=True, help='JSON {"model": {...}, "train": {...}}')
    s.add_argument("--ckpt-out", required=True)
    s.add_argument("--log-out", required=True)
    s.add_argument("--seed", type=int, default=None, help="overrides model and train seeds")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="per-timestamp MPJPE table")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--corpus", required=True)
    s.add_argument("--timestamps", default="80,400,560,1000")
    s.add_argument("--out", required=True)
    s.add_argument("--svg", default=None)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("predict", help="predict the future of one motion file")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--dump-transitionals", default=None)
    s.set_defaults(func=cmd_predict)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        args.func(args)
    except CliError as e:
        print(json.dumps({"code": e.code, "message": e.message}), file=sys.stderr)
        return 2 if e.code == "usage" else 1
    except (OSError, ValueError, IndexError, NonFiniteError) as e:
        print(json.dumps({"code": type(e).__name__, "message": str(e)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
