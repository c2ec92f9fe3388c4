"""Command-line entry point: ``softbound <subcommand> [options]``.

Subcommands: expand, supervise, eval, perturb, fixture, report. Data goes to
files (and summaries to stdout); diagnostics go to stderr. Exit status is 0
only when no fatal error occurred.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .config import ConfigError, load_config
from .data import (FormatError, RecordError, load_annotations, load_expansions, save_annotations,
                   save_embeddings, save_expansions, save_supervision)
from .expansion import (ChatClient, ExpansionCache, ExpansionError, ExpansionRequest, QueryExpander,
                        cache_key, inject_query_noise)
from .fixture import make_fixture
from .fusion import enhance
from .metrics import evaluate, group_ground_truth, load_predictions
from .perturbation import mean_abs_shift, perturb_dataset
from .store import FeatureStore
from .supervision import generate_supervision

logger = logging.getLogger("softbound")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write_report(cfg, name, body: dict) -> Path:
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    path = cfg.output_dir / f"{name}_report.json"
    path.write_text(_dump({"toolkit": "softbound", "version": __version__, "config": cfg.to_json(), **body}))
    return path


def _require(*paths):
    missing = [str(p) for p in paths if not Path(p).exists()]
    if missing:
        raise ConfigError(f"missing input(s): {', '.join(missing)}")


def _unique_queries(records):
    return list(dict.fromkeys(r.query_text for r in records))


def _expander(cfg, client=None):
    if client is None and not cfg.llm.offline:
        client = ChatClient()
    return QueryExpander(ExpansionCache(cfg.cache), client, offline=cfg.llm.offline,
                         prompt_version=cfg.llm.prompt_version)


def cmd_expand(cfg, args, client=None) -> int:
    _require(cfg.annotations)
    records = load_annotations(cfg.annotations, strict=cfg.strict_for(True))
    expander = _expander(cfg, client)
    queries = _unique_queries(records)
    hits = sum(cache_key(q, cfg.llm.model_id, cfg.llm.prompt_version) in expander.cache for q in queries)

    def run(q):
        try:
            req = ExpansionRequest(q, cfg.llm.model_id, cfg.llm.temperature, cfg.llm.max_tokens)
            return expander.expand(req), None
        except (ExpansionError, ValueError) as exc:
            return None, f"{q}: {exc}"

    with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
        results = list(pool.map(run, queries))
    expansions = [r for r, _ in results if r is not None]
    failures = [err for _, err in results if err is not None]
    if cfg.llm.noise_fraction > 0:
        expansions = inject_query_noise(expansions, cfg.llm.noise_fraction, cfg.seed)

    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    out = cfg.output_dir / "expansions.jsonl"
    save_expansions(expansions, out)
    summary = {"queries": len(queries), "cache_hits": hits, "cache_misses": len(queries) - hits,
               "failures": len(failures), "swapped": sum(e.swapped for e in expansions)}
    _write_report(cfg, "expand", {"summary": summary, "failed_queries": failures, "output": str(out)})
    sys.stdout.write(_dump(summary))
    for err in failures:
        logger.error("expansion failed: %s", err)
    return 1 if failures else 0


def _resolve_expansions(cfg, args, records):
    path = Path(args.expansions) if getattr(args, "expansions", None) else cfg.output_dir / "expansions.jsonl"
    if path.is_file():
        return {e.original: e for e in load_expansions(path)}
    expander = _expander(cfg)
    out = {}
    for q in _unique_queries(records):
        try:
            out[q] = expander.expand(ExpansionRequest(q, cfg.llm.model_id, cfg.llm.temperature, cfg.llm.max_tokens))
        except ExpansionError as exc:
            logger.error("%s", exc)
    return out


def cmd_supervise(cfg, args) -> int:
    _require(cfg.annotations, cfg.embeddings_dir)
    strict = cfg.strict_for(True)
    records = load_annotations(cfg.annotations, strict=strict)
    expansions = _resolve_expansions(cfg, args, records)
    store = FeatureStore(cfg.embeddings_dir, cfg.annotations.parent)
    fused_dir = cfg.output_dir / "fused"
    if args.emit_fused:
        fused_dir.mkdir(parents=True, exist_ok=True)

    def run(item):
        i, rec = item
        try:
            if rec.query_text not in expansions:
                raise LookupError(f"no expansion for query {rec.query_text!r}")
            F_v = store.load_video(rec)
            q = store.load_query(expansions[rec.query_text])
            target = generate_supervision(rec, F_v, q, cfg.supervision)
            fused = enhance(F_v, q.start, q.original, q.end, cfg.fusion) if args.emit_fused else None
            return target, fused, None
        except (LookupError, OSError, ValueError) as exc:
            return None, None, f"{rec.video_id}: {exc}"

    with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
        results = list(pool.map(run, enumerate(records)))

    errors = [err for _, _, err in results if err is not None]
    if errors and strict:
        for err in errors:
            logger.error("%s", err)
        logger.error("aborting: %d record(s) failed in strict mode", len(errors))
        return 1
    targets = []
    for i, (target, fused, err) in enumerate(results):
        if err is not None:
            logger.warning("skipping record %d: %s", i, err)
            continue
        targets.append(target)
        if fused is not None:
            save_embeddings(fused, fused_dir / f"{i:05d}_{target.video_id}.emb")

    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    out = cfg.output_dir / "supervision.jsonl"
    save_supervision(targets, out)
    summary = {"records": len(records), "targets": len(targets), "errors": len(errors)}
    _write_report(cfg, "supervise", {"summary": summary, "record_errors": errors, "output": str(out)})
    sys.stdout.write(_dump(summary))
    return 0


def cmd_eval(cfg, args) -> int:
    preds_path = Path(args.predictions) if args.predictions else cfg.predictions
    _require(cfg.annotations, preds_path)
    strict = cfg.strict_for(False)
    records = load_annotations(cfg.annotations, strict=strict)
    preds = load_predictions(preds_path, strict=strict)
    report = evaluate(preds, group_ground_truth(records), cfg.r1_thresholds, cfg.map_thresholds)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    (cfg.output_dir / "metrics.json").write_text(_dump(report.to_json()))
    report.write_csv(cfg.output_dir / "metrics.csv")
    _write_report(cfg, "eval", {"metrics": report.to_json(), "predictions": str(preds_path)})
    sys.stdout.write(_dump(report.to_json()))
    return 0


def cmd_perturb(cfg, args) -> int:
    _require(cfg.annotations)
    records = load_annotations(cfg.annotations, strict=cfg.strict_for(True))
    perturbed = perturb_dataset(records, cfg.noise)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    out = Path(args.output) if args.output else cfg.output_dir / "annotations_perturbed.jsonl"
    provenance = {"noise": cfg.noise.describe(), "source": str(cfg.annotations), "version": __version__}
    save_annotations(perturbed, out, provenance=provenance)
    summary = {"records": len(records), **mean_abs_shift(records, perturbed)}
    _write_report(cfg, "perturb", {"summary": summary, "output": str(out)})
    sys.stdout.write(_dump(summary))
    return 0


def cmd_fixture(cfg, args) -> int:
    planted = make_fixture(args.out, args.n_videos, args.frames, args.dim, cfg.seed)
    sys.stdout.write(_dump({"out": str(Path(args.out).resolve()), "planted": planted}))
    return 0


def cmd_report(cfg, args) -> int:
    files = {}
    if cfg.output_dir.is_dir():
        for path in sorted(cfg.output_dir.rglob("*")):
            if path.is_file() and path.name != "report.json":
                files[str(path.relative_to(cfg.output_dir))] = hashlib.sha256(path.read_bytes()).hexdigest()
    body = {"toolkit": "softbound", "version": __version__, "config": cfg.to_json(), "files": files}
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    (cfg.output_dir / "report.json").write_text(_dump(body))
    sys.stdout.write(_dump(body))
    return 0


COMMANDS = {
    "expand": cmd_expand,
    "supervise": cmd_supervise,
    "eval": cmd_eval,
    "perturb": cmd_perturb,
    "fixture": cmd_fixture,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration file")
    common.add_argument("--seed", type=int)
    common.add_argument("--offline", action="store_true", default=None, help="never call the LLM endpoint")
    common.add_argument("--jobs", type=int, help="worker threads")
    strictness = common.add_mutually_exclusive_group()
    strictness.add_argument("--strict", dest="strict", action="store_const", const="true")
    strictness.add_argument("--lenient", dest="strict", action="store_const", const="false")
    common.add_argument("--output-dir", help="override [paths] output_dir")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="softbound", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"softbound {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("expand", parents=[common], help="expand queries into boundary descriptions")
    p.add_argument("--noise-fraction", type=float, help="swap start/end on this fraction of expansions")

    p = sub.add_parser("supervise", parents=[common], help="generate soft boundary supervision")
    p.add_argument("--strategy", help="paper, gauss, distance_only, similarity_only or original_query")
    p.add_argument("--tau", type=float)
    p.add_argument("--expansions", help="expansions JSONL (default: <output_dir>/expansions.jsonl, else cache)")
    p.add_argument("--emit-fused", action="store_true", help="also write enhanced frame features")

    p = sub.add_parser("eval", parents=[common], help="R1@mu and mAP of predictions")
    p.add_argument("predictions", nargs="?", help="predictions JSONL (default: [paths] predictions)")

    p = sub.add_parser("perturb", parents=[common], help="add seeded noise to boundary annotations")
    p.add_argument("--kind", choices=["none", "gaussian", "uniform"])
    p.add_argument("--sigma", type=float)
    p.add_argument("--lo", type=float)
    p.add_argument("--hi", type=float)
    p.add_argument("--output", help="output annotations JSONL")

    p = sub.add_parser("fixture", parents=[common], help="write a synthetic offline dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n-videos", type=int, default=4)
    p.add_argument("--frames", type=int, default=16)
    p.add_argument("--dim", type=int, default=8)

    sub.add_parser("report", parents=[common], help="summarise an output directory")
    return parser


def _overrides(args) -> dict:
    get = lambda name: getattr(args, name, None)  # noqa: E731
    return {
        "paths": {"output_dir": get("output_dir")},
        "run": {"seed": get("seed"), "jobs": get("jobs"), "strict": get("strict")},
        "llm": {"offline": "true" if get("offline") else None, "noise_fraction": get("noise_fraction")},
        "supervision": {"strategy": get("strategy"), "tau": get("tau")},
        "noise": {"kind": get("kind"), "sigma": get("sigma"), "lo": get("lo"), "hi": get("hi")},
    }


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s", force=True)
    try:
        cfg = load_config(args.config, _overrides(args))
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, FormatError, RecordError, FileNotFoundError) as exc:
        logger.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
