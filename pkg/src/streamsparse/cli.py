"""Command-line entry point: stats, classify, plan, synthesize, richness."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .config import ConfigError, PipelineConfig, build_config
from .ingest import IngestError, ReviewStream, load_dataset, write_dataset
from .interpolation import InterpolationPlan, check_plan, plan_interpolation, slot_timestamp
from .lexical_stats import richness_report
from .llm_gateway import CachedBackend, GenerationBackend, MockBackend, RemoteBackend, get_templates
from .sparsity import Category, SparsityAssignment, category_counts, classify_users
from .synthesis import run_synthesis
from .temporal_graph import BipartiteGraph, EmptyStream, build_temporal_graph, mean_second_order_degree

log = logging.getLogger("streamsparse")


@dataclass
class DatasetStatistics:
    total_reviews: int
    users: int
    products: int
    avg_reviews_per_user: float
    avg_reviews_per_product: float
    avg_second_order_per_user: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def dataset_statistics(stream: ReviewStream) -> DatasetStatistics:
    g = BipartiteGraph()
    for idx, rec in enumerate(stream):
        g.add_edge(rec.user_id, rec.product_id, idx)
    n = len(stream)
    users, products = len(g.user_adj), len(g.product_adj)
    return DatasetStatistics(
        total_reviews=n,
        users=users,
        products=products,
        avg_reviews_per_user=n / users if users else 0.0,
        avg_reviews_per_product=n / products if products else 0.0,
        avg_second_order_per_user=mean_second_order_degree(g),
    )


# ---------------------------------------------------------------- artifacts


def file_sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_text(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8", newline="\n")


def _write_json(path: Path, obj) -> None:
    _write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_manifest(out_dir: Path, command: str, cfg: PipelineConfig, input_path: Path) -> dict:
    manifest = {
        "command": command,
        "version": __version__,
        "input": input_path.name,
        "input_sha256": file_sha256(input_path),
        "seed": cfg.seed,
        "config": cfg.as_dict(),
    }
    _write_json(out_dir / f"manifest-{command}.json", manifest)
    return manifest


CLASSIFY_KEYS = ("n_spans", "dense_threshold", "so_threshold", "seed")


def write_classification(path: Path, assignments: list[SparsityAssignment]) -> None:
    lines = [
        f"{a.user_id}\t{a.category}\t{a.stats.review_count}\t{a.stats.second_order_degree}"
        for a in assignments
    ]
    _write_text(path, "".join(line + "\n" for line in lines))


def read_classification(path: Path) -> dict[str, Category]:
    out = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            user, cat, *_ = line.split("\t")
            out[user] = Category(cat)
    return out


def write_plan(path: Path, plan: InterpolationPlan, seed: int) -> None:
    lines = [
        f"{s.user_id}\t{s.category}\t{s.span_index}\t{s.slot_ordinal}\t{slot_timestamp(s, seed)}"
        for s in plan.slots
    ]
    _write_text(path, "".join(line + "\n" for line in lines))


def _reusable_classification(out_dir: Path, cfg: PipelineConfig, input_path: Path) -> Path | None:
    tsv = out_dir / "classification.tsv"
    man = out_dir / "manifest-classify.json"
    if not (tsv.exists() and man.exists()):
        return None
    try:
        prior = json.loads(man.read_text(encoding="utf-8"))
    except ValueError:
        return None
    if prior.get("input_sha256") != file_sha256(input_path):
        return None
    if any(prior.get("config", {}).get(k) != getattr(cfg, k) for k in CLASSIFY_KEYS):
        return None
    return tsv


# ---------------------------------------------------------------- pipeline helpers


def _classified(stream, cfg, out_dir=None, input_path=None):
    tg = build_temporal_graph(stream, cfg.n_spans)
    assignments = classify_users(stream, tg, cfg.sparsity())
    prior = _reusable_classification(out_dir, cfg, input_path) if out_dir else None
    if prior is not None:
        log.info("reusing %s", prior)
        cats = read_classification(prior)
        assignments = [SparsityAssignment(a.user_id, cats.get(a.user_id, a.category), a.stats) for a in assignments]
    return tg, assignments


def make_backend(cfg: PipelineConfig, out_dir: Path | None = None) -> GenerationBackend:
    if cfg.backend == "mock":
        return MockBackend(seed=cfg.seed)
    backend = RemoteBackend(
        base_url=cfg.base_url,
        model=cfg.model,
        api_key_env=cfg.api_key_env,
        max_in_flight=cfg.max_in_flight,
    )
    if out_dir is not None:
        return CachedBackend(backend, out_dir / "cache")
    return backend


# ---------------------------------------------------------------- commands


def cmd_stats(args, cfg: PipelineConfig) -> int:
    stream = load_dataset(args.input)
    st = dataset_statistics(stream)
    table = "\n".join([
        f"dataset                 {stream.dataset_name}",
        f"total reviews           {st.total_reviews}",
        f"users                   {st.users}",
        f"products                {st.products}",
        f"avg reviews/user        {st.avg_reviews_per_user:.2f}",
        f"avg reviews/product     {st.avg_reviews_per_product:.2f}",
        f"avg second-order/user   {st.avg_second_order_per_user:.2f}",
    ])
    print(table)
    if args.out_dir:
        _write_text(args.out_dir / "stats.txt", table + "\n")
        _write_json(args.out_dir / "stats.json", st.as_dict())
        write_manifest(args.out_dir, "stats", cfg, args.input)
    return 0


def cmd_classify(args, cfg: PipelineConfig) -> int:
    stream = load_dataset(args.input)
    tg = build_temporal_graph(stream, cfg.n_spans)
    assignments = classify_users(stream, tg, cfg.sparsity())
    write_classification(args.out_dir / "classification.tsv", assignments)
    write_manifest(args.out_dir, "classify", cfg, args.input)
    for cat, n in category_counts(assignments).items():
        print(f"{cat}\t{n}")
    return 0


def cmd_plan(args, cfg: PipelineConfig) -> int:
    stream = load_dataset(args.input)
    tg, assignments = _classified(stream, cfg, args.out_dir, args.input)
    plan = plan_interpolation(stream, tg, assignments, cfg.plan())
    problems = check_plan(plan, stream, tg, cfg.floor)
    if problems:
        for p in problems:
            log.error("plan invariant violated: %s", p)
        return 1
    write_plan(args.out_dir / "plan.tsv", plan, cfg.seed)
    write_manifest(args.out_dir, "plan", cfg, args.input)
    for cat, n in plan.counts.items():
        print(f"{cat}\t{n}")
    return 0


def cmd_synthesize(args, cfg: PipelineConfig) -> int:
    stream = load_dataset(args.input)
    tg, assignments = _classified(stream, cfg, args.out_dir, args.input)
    plan = plan_interpolation(stream, tg, assignments, cfg.plan())
    templates = get_templates(cfg.template_dir or None)
    backend = make_backend(cfg, args.out_dir)
    augmented, report, produced = run_synthesis(plan, tg, assignments, backend, cfg.synthesis(), stream, templates)
    write_dataset(augmented, args.out_dir / "augmented.jsonl")
    _write_text(args.out_dir / "provenance.jsonl", "".join(
        json.dumps({
            "user_id": r.user_id, "product_id": r.product_id, "timestamp": r.timestamp,
            "span_index": r.span_index, "category": str(r.category), **r.provenance,
        }, sort_keys=True) + "\n"
        for r in produced
    ))
    _write_json(args.out_dir / "synthesis_report.json", report.to_dict())
    write_manifest(args.out_dir, "synthesize", cfg, args.input)
    produced = sum(report.produced.values())
    print(f"synthesized {produced} of {len(plan.slots)} slots; {len(report.failures)} failed")
    for failure in report.failures[:10]:
        log.error("slot failed: %s", failure)
    return 0 if report.ok else 1


def cmd_richness(args, cfg: PipelineConfig) -> int:
    stream = load_dataset(args.input)
    report = richness_report(stream)
    table = report.table()
    print(table)
    _write_json(args.out_dir / "richness.json", report.to_dict())
    _write_text(args.out_dir / "richness.txt", table + "\n")
    write_manifest(args.out_dir, "richness", cfg, args.input)
    return 0


COMMANDS = {
    "stats": cmd_stats,
    "classify": cmd_classify,
    "plan": cmd_plan,
    "synthesize": cmd_synthesize,
    "richness": cmd_richness,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="streamsparse", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--input", required=True, type=Path, help="JSON-lines review file")
        p.add_argument("--config", type=Path, help="key = value config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--backend", choices=("mock", "remote"))
        p.add_argument("--out-dir", type=Path, default=None if name == "stats" else Path("out"))
        p.add_argument("--n-spans", dest="n_spans", type=int)
        p.add_argument("--so-threshold", dest="so_threshold", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = build_config(args.config, {
            "seed": args.seed, "backend": args.backend, "n_spans": args.n_spans,
            "so_threshold": args.so_threshold, "workers": args.workers,
        })
        if args.out_dir is not None:
            args.out_dir.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, IngestError, EmptyStream, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
