"""Command-line front end.

Exit codes: 0 success / separated / identified / all checks pass,
1 negative answer or failed check, 2 input error, 3 not identifiable.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .expr import ExprError, JointTable, TableError, ZeroDenominator, to_latex
from .graph import EdgeKind, GraphError, latent_project, parse_graph
from .ident import evaluate_effect, identify
from .repro import DEFAULT_SEED, Settings, _round, build_report, run_all
from .scm import ScmError, build_example, sample, write_metadata
from .sep import d_separated, enumerate_adjustment_sets, is_valid_backdoor, open_path

EXIT_OK, EXIT_NEGATIVE, EXIT_INPUT, EXIT_NOT_IDENTIFIED = 0, 1, 2, 3


class InputError(Exception):
    pass


def _names(text: str | None) -> list[str]:
    if not text:
        return []
    return [t.strip() for t in text.split(",") if t.strip()]


def _assignment(text: str | None) -> dict:
    out = {}
    for part in _names(text):
        if "=" not in part:
            raise InputError(f"expected NAME=VALUE, got {part!r}")
        k, v = part.split("=", 1)
        try:
            out[k.strip()] = int(v)
        except ValueError:
            out[k.strip()] = v.strip()
    return out


def _load_graph(path: str, strict: bool = False):
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise InputError(f"cannot read {path}: {e.strerror}") from None
    return parse_graph(text, strict=strict)


def cmd_dsep(args) -> int:
    g = _load_graph(args.graph, args.strict)
    x, y, z = _names(args.x), _names(args.y), _names(args.given)
    if d_separated(g, x, y, z):
        print("separated")
        return EXIT_OK
    print("connected")
    print(open_path(g, x, y, z))
    return EXIT_NEGATIVE


def cmd_adjust(args) -> int:
    g = latent_project(_load_graph(args.graph, args.strict))
    if args.enumerate:
        cands = _names(args.candidates) if args.candidates else [v for v in g.names if v not in (args.treatment, args.outcome)]
        sets = enumerate_adjustment_sets(g, args.treatment, args.outcome, cands)
        for s in sets:
            print("{" + ", ".join(g.sort(s)) + "}")
        return EXIT_OK if sets else EXIT_NEGATIVE
    z = _names(args.set)
    verdict = is_valid_backdoor(g, args.treatment, args.outcome, z)
    if verdict.valid:
        print("valid")
        return EXIT_OK
    print(f"invalid: {verdict.reason}")
    if verdict.witness is not None:
        print(verdict.witness)
    return EXIT_NEGATIVE


def cmd_identify(args) -> int:
    g = _load_graph(args.graph, args.strict)
    if g.edges_of(EdgeKind.UNDIRECTED):
        raise InputError("identification needs directed and bidirected edges only")
    res = identify(latent_project(g), _names(args.treatment), _names(args.outcome))
    if args.explain:
        for line in res.trace:
            print(f"# {line}")
    if not res.identified:
        print(f"NOT IDENTIFIABLE: {res.witness}")
        return EXIT_NOT_IDENTIFIED
    print(to_latex(res.expr) if args.format == "latex" else res.text())
    if res.context:
        print(f"context: {', '.join(res.context)}")
    if args.table:
        try:
            table = JointTable.from_csv(args.table)
        except OSError as e:
            raise InputError(f"cannot read {args.table}: {e.strerror}") from None
        value = evaluate_effect(res, table, _assignment(args.at), _assignment(args.context))
        print(f"value: {value:.12g}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    print(f"seed: {args.seed}", file=sys.stderr)
    ex = build_example(args.example, rho=args.rho, param_seed=args.param_seed)
    d = sample(ex.scm, args.n, args.seed)
    meta = {**ex.meta, "columns": [c for c in d.names if args.include_po or c not in d.po_columns]}
    if args.out:
        out = Path(args.out)
        d.to_csv(out, include_po=args.include_po)
        write_metadata(out.with_suffix(".json"), d, _round(meta))
    else:
        sys.stdout.write(d.to_csv(include_po=args.include_po))
    return EXIT_OK


def cmd_reproduce(args) -> int:
    print(f"seed: {args.seed}", file=sys.stderr)
    settings = Settings(seed=args.seed, quick=args.quick)

    def progress(r):
        mark = "PASS" if r.passed else "FAIL"
        print(f"[{mark}] criterion {r.number}: {r.title}")
        for c in r.failures():
            print(f"       failed: {c.name} (computed {c.computed!r}, tolerance {c.tolerance!r})")

    results = run_all(settings, progress)
    report = build_report(results, settings, timings=args.timings)
    text = json.dumps(report, indent=2, ensure_ascii=False) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    passed = report["passed"]
    print("all criteria passed" if passed else "some criteria failed")
    return EXIT_OK if passed else EXIT_NEGATIVE


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="causalcheck", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    graph_opts = argparse.ArgumentParser(add_help=False)
    graph_opts.add_argument("--strict", action="store_true", help="require every node to be declared")

    s = sub.add_parser("dsep", parents=[graph_opts], help="test d-/m-separation")
    s.add_argument("graph")
    s.add_argument("--x", required=True, help="comma-separated node list")
    s.add_argument("--y", required=True)
    s.add_argument("--given", default="")
    s.set_defaults(func=cmd_dsep)

    s = sub.add_parser("adjust", parents=[graph_opts], help="check or enumerate back-door adjustment sets")
    s.add_argument("graph")
    s.add_argument("--treatment", required=True)
    s.add_argument("--outcome", required=True)
    s.add_argument("--set", default="", help="adjustment set to check")
    s.add_argument("--enumerate", action="store_true", help="list every valid set")
    s.add_argument("--candidates", default="", help="candidate nodes for --enumerate")
    s.set_defaults(func=cmd_adjust)

    s = sub.add_parser("identify", parents=[graph_opts], help="run the ID algorithm")
    s.add_argument("graph")
    s.add_argument("--treatment", required=True)
    s.add_argument("--outcome", required=True)
    s.add_argument("--format", choices=("text", "latex"), default="text")
    s.add_argument("--explain", action="store_true", help="print the recursion trace")
    s.add_argument("--table", help="joint-table CSV to evaluate the formula on")
    s.add_argument("--at", default="", help="values, e.g. Y=1,A=0")
    s.add_argument("--context", default="", help="values for context variables, e.g. C2=1")
    s.set_defaults(func=cmd_identify)

    s = sub.add_parser("simulate", help="sample a worked example")
    s.add_argument("--example", type=int, required=True, choices=range(1, 7), metavar="{1..6}")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, default=DEFAULT_SEED)
    s.add_argument("--out", help="CSV path; metadata goes next to it with a .json suffix")
    s.add_argument("--include-po", action="store_true", help="add the potential-outcome columns")
    s.add_argument("--rho", type=float, default=0.3)
    s.add_argument("--param-seed", type=int, default=0, help="CPD seed for examples 5 and 6")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("reproduce", help="run every acceptance check")
    s.add_argument("--out", help="write the JSON report here")
    s.add_argument("--quick", action="store_true", help="smaller samples and looser tolerances")
    s.add_argument("--seed", type=int, default=DEFAULT_SEED)
    s.add_argument("--timings", action="store_true", help="include runtimes in the report")
    s.set_defaults(func=cmd_reproduce)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, GraphError, ExprError, TableError, ScmError, ZeroDenominator) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
