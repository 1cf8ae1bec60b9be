"""Command-line entry point (``relgraph``).

Exit codes: 0 success, 1 usage error, 2 data/parse/query error.
"""

from __future__ import annotations

import argparse
import sys

from . import lang
from .config import LearnerConfig, load_graph
from .errors import RelGraphError
from .pipeline import run_family, test_config, train_config
from .synth import generate_synthetic_bio


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _graph_args(p):
    p.add_argument("--schema", required=True, help="schema YAML document")
    p.add_argument("--data", required=True, help="directory with one table per node type")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="relgraph", description="Query and learn over heterogeneous graphs.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("load", help="populate a graph and print the population report")
    p.add_argument("schema")
    p.add_argument("data")

    p = sub.add_parser("query", help="evaluate one query")
    p.add_argument("text")
    _graph_args(p)

    p = sub.add_parser("repl", help="read queries line by line (:quit exits)")
    _graph_args(p)

    for name, help_text in (("train", "train a learner and save its model"),
                            ("test", "evaluate a saved model"),
                            ("family", "train, test and rank a parameterized learner family")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config")

    p = sub.add_parser("synth", help="write a synthetic patient/gene/drug dataset")
    p.add_argument("out")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--patients", type=int, default=50)
    p.add_argument("--genes", type=int, default=200)
    p.add_argument("--pathways", type=int, default=10)
    p.add_argument("--planted", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.1)
    return parser


def _repl(graph, stdin, stdout):
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        if line in (":quit", ":q"):
            break
        try:
            out = lang.format_result(lang.query(graph, line))
        except RelGraphError as exc:
            print(f"error: {exc}", file=stdout)
            continue
        if out:
            print(out, file=stdout)


def main(argv=None, stdin=None, stdout=None, stderr=None) -> int:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage().strip())
    except UsageError as exc:
        print(exc, file=stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)

    try:
        if args.command == "load":
            graph, report = load_graph(args.schema, args.data)
            print(f"added: {report.added}", file=stdout)
            print(f"generated: {report.generated}", file=stdout)
            print(f"edges: {report.edges}", file=stdout)
            for node in graph.schema.nodes:
                print(f"{node}: {graph.count(node)}", file=stdout)
        elif args.command == "query":
            graph, _ = load_graph(args.schema, args.data)
            out = lang.format_result(lang.query(graph, args.text))
            if out:
                print(out, file=stdout)
        elif args.command == "repl":
            graph, _ = load_graph(args.schema, args.data)
            _repl(graph, stdin, stdout)
        elif args.command == "train":
            cfg = LearnerConfig.load(args.config)
            learner, model = train_config(cfg)
            print(f"trained {learner.name}: {len(model.lexicon)} features -> {cfg.model}", file=stdout)
        elif args.command == "test":
            report = test_config(LearnerConfig.load(args.config))
            for line in report.lines():
                print(line, file=stdout)
        elif args.command == "family":
            run = run_family(LearnerConfig.load(args.config))
            for rank, (learner, report) in enumerate(run.ranking, 1):
                score = (f"pearson={report.pearson:.4f}" if report.ssr is not None and report.pearson_defined
                         else "pearson=undefined" if report.ssr is not None
                         else f"accuracy={report.accuracy:.4f}")
                print(f"{rank}\t{learner.parameter}\t{score}", file=stdout)
            print(f"best: {run.best.parameter}", file=stdout)
        elif args.command == "synth":
            out = generate_synthetic_bio(args.out, seed=args.seed, n_patients=args.patients,
                                         n_genes=args.genes, n_pathways=args.pathways,
                                         planted_pathway=args.planted, noise_sd=args.noise)
            print(str(out), file=stdout)
    except RelGraphError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=stderr)
        return 2
    return 0


def main_entry():
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
