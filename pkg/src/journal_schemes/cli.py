"""``journal-schemes`` command line.

Exit codes: 0 success, 2 invalid configuration or arguments, 1 stage failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .pipeline import ConfigError, PipelineConfig, StageError, run_pipeline

log = logging.getLogger("journal_schemes")

# subcommand -> pipeline stage it runs up to
STAGE_COMMANDS = {
    "ingest": "graph",
    "walks": "walks",
    "embed": "embed",
    "matrices": "matrices",
    "cluster": "cluster",
    "classify": "classify",
    "topics": "topics",
    "agreement": "agreement",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser, config_required: bool = True) -> None:
    p.add_argument("--config", required=config_required, help="pipeline config (JSON or YAML)")
    p.add_argument("--seed", type=int, help="global seed; overrides every stage seed")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="journal-schemes", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="run the whole pipeline (or up to --stage)")
    _common(p)
    p.add_argument("--stage", help="stop after this stage (with its dependencies)")

    for name, stage in STAGE_COMMANDS.items():
        p = sub.add_parser(name, help=f"run the pipeline up to the {stage} stage")
        _common(p)

    p = sub.add_parser("export", help="Sankey flow tables or similarity maps")
    p.add_argument("kind", choices=["sankey", "map"])
    _common(p, config_required=False)
    p.add_argument("--labels", nargs=2, metavar=("A", "B"),
                   help="two labeling files; without them the configured exports are produced")
    p.add_argument("--coords", help="map: periodical id \\t x \\t y file")
    p.add_argument("--embedding", help="map: embedding file for PCA coordinates")
    p.add_argument("--power", type=float, default=2.0, help="map: IDW power")
    p.add_argument("--grid-size", type=int, default=100)

    p = sub.add_parser("synth", help="write a planted-partition test corpus and a matching config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--communities", type=int, default=4)
    p.add_argument("--papers-per-community", type=int, default=500)
    p.add_argument("--periodicals-per-community", type=int, default=5)
    p.add_argument("--vocab-per-community", type=int, default=50)
    p.add_argument("--refs-per-paper", type=int, default=8)
    p.add_argument("--inter-rate", type=float, default=0.1)
    p.add_argument("--noise-rate", type=float, default=0.0)
    p.add_argument("--shared-vocab", type=int, default=0)
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _load_config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out:
        cfg = replace(cfg, out=args.out)
    return cfg


def _run(args, stage) -> int:
    cfg = _load_config(args)
    res = run_pipeline(cfg, stage=stage)
    print(f"out\t{res.out}")
    for name in res.ran:
        print(f"ran\t{name}")
    for name in res.cached:
        print(f"cached\t{name}")
    for name in res.pruned:
        print(f"pruned\t{name}")
    return 0


def _export_files(args) -> int:
    from .clustering import SchemeLabeling
    from .exports import (export_sankey, export_similarity_map, load_coordinates, pca_coordinates,
                          write_sankey, write_similarity_map)
    from .sgns import EmbeddingMatrix

    if not args.out:
        raise UsageError("--out is required with --labels")
    a, b = (SchemeLabeling.load(p) for p in args.labels)
    out = Path(args.out)
    if args.kind == "sankey":
        table = export_sankey(a, b)
        for kind, path in write_sankey(table, out).items():
            print(f"{kind}\t{path}")
        return 0
    if args.coords:
        coords = load_coordinates(args.coords)
    elif args.embedding:
        coords = pca_coordinates(EmbeddingMatrix.load(args.embedding))
    else:
        raise UsageError("map export needs --coords or --embedding")
    sm = export_similarity_map(a, b, coords, power=args.power, grid_size=args.grid_size)
    for kind, path in write_similarity_map(sm, out).items():
        print(f"{kind}\t{path}")
    print(f"missing_coordinates\t{len(sm.missing)}")
    return 0


def _synth(args) -> int:
    from .synth import SynthSpec, generate_synthetic_corpus

    spec = SynthSpec(communities=args.communities, papers_per_community=args.papers_per_community,
                     periodicals_per_community=args.periodicals_per_community,
                     vocab_per_community=args.vocab_per_community, refs_per_paper=args.refs_per_paper,
                     inter_rate=args.inter_rate, noise_rate=args.noise_rate, shared_vocab=args.shared_vocab,
                     seed=args.seed)
    try:
        spec.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    paths = generate_synthetic_corpus(args.out, spec)
    config = {
        "papers": "papers.tsv", "citations": "citations.tsv", "abstracts": "abstracts.jsonl",
        "scopus": "scopus.tsv", "out": "out", "seed": args.seed,
        "kmeans": {"k": args.communities},
        "monolabel_neighbors": max(1, min(50, args.periodicals_per_community - 1)),
        "topics": {"grid": [args.communities], "lda": {"iterations": 200, "burn_in": 50}},
    }
    cfg_path = Path(args.out) / "config.json"
    cfg_path.write_text(json.dumps(config, indent=1) + "\n", encoding="utf-8")
    for kind, path in paths.items():
        print(f"{kind}\t{path}")
    print(f"config\t{cfg_path}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return _run(args, args.stage)
        if args.command in STAGE_COMMANDS:
            return _run(args, STAGE_COMMANDS[args.command])
        if args.command == "export":
            if args.labels:
                return _export_files(args)
            if not args.config:
                raise UsageError("export needs --config or --labels")
            return _run(args, "exports")
        if args.command == "synth":
            return _synth(args)
    except (ConfigError, UsageError) as exc:
        print(f"journal-schemes: invalid configuration: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"journal-schemes: {exc}", file=sys.stderr)
        print("journal-schemes: completed stages are cached; rerun to resume", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"journal-schemes: {exc}", file=sys.stderr)
        return 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
