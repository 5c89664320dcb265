"""Command-line front end.

Commands: ``synth`` runs the refinement loop on a problem document and
writes a report, ``verify`` checks a given coefficient file rigorously,
``bench`` runs every problem in a directory, ``gen`` emits bundled
benchmark documents.  Exit codes: 0 for a found/verified certificate,
1 for no certificate / refuted / unknown, 2 for usage or document errors.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, benchmarks, engine, model
from . import verify as rigor
from .expr import ParseError
from .model import Problem, ProblemFormatError, Template

PROBLEM_SCHEMA = "problem/1"
BARRIER_SCHEMA = "barrier/1"
REPORT_SCHEMA = "report/1"


class UserError(Exception):
    """Bad input; reported without a stack trace, exit code 2."""


def _load_json(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise UserError(f"{path}: {err.strerror or err}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as err:
        raise UserError(
            f"{path}: invalid JSON at line {err.lineno}, column {err.colno}: "
            f"{err.msg}") from None


def _load_problem_doc(path: str) -> tuple[Problem, Template, dict]:
    doc = _load_json(path)
    if doc.get("schema", PROBLEM_SCHEMA) != PROBLEM_SCHEMA:
        raise UserError(f"{path}: unsupported schema {doc.get('schema')!r}")
    try:
        prob = model.load_problem(doc)
        tmpl = model.make_template(doc.get("template", "linear"),
                                   prob.dim, len(prob.modes))
    except (ProblemFormatError, ParseError) as err:
        raise UserError(f"{path}: {err}") from None
    return prob, tmpl, doc


def _run_config(doc: dict, args) -> engine.RunConfig:
    run = doc.get("run", {})

    def pick(flag, key, default):
        if flag is not None:
            return flag
        return run.get(key, default)

    return engine.RunConfig(
        sigma=float(pick(args.sigma, "sigma", 0.5)),
        bloat_factor=float(pick(args.bloat, "bloat", 1.1)),
        starts=int(pick(args.starts, "starts", 16)),
        max_iterations=int(pick(args.max_iter, "max_iter", 50)),
        seed=int(pick(args.seed, "seed", 0)),
        delta_min=float(pick(args.delta_min, "delta_min", 1e-6)),
        min_width_frac=float(pick(args.min_box_width, "min_box_width", 1e-4)),
        vertex_cap=int(run.get("vertex_cap", 256)),
        verify=not args.no_verify,
    )


def _barrier_json(prob: Problem, tmpl: Template, p: np.ndarray) -> dict:
    modes = {}
    for m, mdef in enumerate(prob.modes):
        block = p[tmpl.block_slice(m)]
        modes[mdef.name] = {
            model.monomial_name(mono, prob.state_vars): float(c)
            for mono, c in zip(tmpl.monomials[m], block)
        }
    return modes


def _barrier_from_doc(doc: dict, prob: Problem) -> tuple[Template, np.ndarray]:
    if doc.get("schema", BARRIER_SCHEMA) != BARRIER_SCHEMA:
        raise UserError(f"unsupported barrier schema {doc.get('schema')!r}")
    raw_modes = doc.get("modes")
    if not isinstance(raw_modes, dict) or not raw_modes:
        raise UserError("barrier document: 'modes' section missing or empty")
    blocks = []
    coeffs: list[float] = []
    for mdef in prob.modes:
        entries = raw_modes.get(mdef.name)
        if entries is None:
            raise UserError(f"barrier document: no coefficients for mode "
                            f"{mdef.name!r}")
        monos = []
        for name, value in entries.items():
            try:
                monos.append(model.monomial_from_name(name, prob.state_vars))
            except ValueError as err:
                raise UserError(f"barrier document: {err}") from None
            coeffs.append(float(value))
        if all(any(e for e in m) for m in monos):
            monos.append(tuple(0 for _ in prob.state_vars))
            coeffs.append(0.0)
        blocks.append(tuple(monos))
    return Template(tuple(blocks)), np.asarray(coeffs)


def _verdict_name(verdict: rigor.Verdict | None) -> str | None:
    return verdict.status.value if verdict is not None else None


def _report_json(name: str, report: engine.RunReport, prob: Problem,
                 tmpl: Template, seed: int) -> dict:
    doc = {
        "schema": REPORT_SCHEMA,
        "problem": name,
        "status": report.status.value,
        "barrier": (_barrier_json(prob, tmpl, report.p)
                    if report.p is not None else None),
        "delta": report.delta,
        "iterations": report.iterations,
        "segments": report.segment_count,
        "timings": {k: round(v, 6) for k, v in report.timings.items()},
        "verdict": _verdict_name(report.verdict),
        "tool": f"simbarrier {__version__}",
        "seed": seed,
        "notes": list(report.notes),
    }
    return doc


def _write_report(doc: dict, path: str | None):
    text = json.dumps(doc, indent=2)
    if path:
        Path(path).write_text(text + "\n")
    else:
        print(text)


def _cmd_synth(args) -> int:
    prob, tmpl, doc = _load_problem_doc(args.problem)
    cfg = _run_config(doc, args)
    report = engine.run(prob, tmpl, cfg)
    out = _report_json(doc.get("name", Path(args.problem).stem), report,
                       prob, tmpl, cfg.seed)
    _write_report(out, args.report)
    if report.status is engine.RunStatus.BARRIER_FOUND:
        if report.verdict is None or \
                report.verdict.status is rigor.VerdictStatus.VERIFIED:
            return 0
        return 1
    return 1


def _cmd_verify(args) -> int:
    prob, _tmpl, doc = _load_problem_doc(args.problem)
    barrier_doc = _load_json(args.barrier)
    tmpl, p = _barrier_from_doc(barrier_doc, prob)
    frac = args.min_box_width if args.min_box_width is not None else 1e-4
    t0 = time.perf_counter()
    verdict = rigor.verify(prob, tmpl, p,
                           rigor.VerifyConfig(min_width_frac=float(frac)))
    elapsed = time.perf_counter() - t0
    out = {
        "schema": REPORT_SCHEMA,
        "problem": doc.get("name", Path(args.problem).stem),
        "status": verdict.status.value,
        "verdict": verdict.status.value,
        "condition": verdict.condition,
        "witness": (list(verdict.witness[1]) if verdict.witness else None),
        "wall_time": round(elapsed, 6),
        "boxes": {
            str(i): {"verified": r.boxes_verified, "split": r.boxes_split,
                     "unresolved": r.boxes_unresolved}
            for i, r in verdict.reports.items()
        },
        "tool": f"simbarrier {__version__}",
    }
    _write_report(out, args.report)
    return 0 if verdict.status is rigor.VerdictStatus.VERIFIED else 1


def _cmd_bench(args) -> int:
    directory = Path(args.corpus)
    if not directory.is_dir():
        raise UserError(f"{args.corpus}: not a directory")
    paths = sorted(directory.glob("*.json"))
    if not paths:
        raise UserError(f"{args.corpus}: no problem documents found")
    rows = []
    all_ok = True
    for path in paths:
        prob, tmpl, doc = _load_problem_doc(str(path))
        cfg = _run_config(doc, args)
        report = engine.run(prob, tmpl, cfg)
        ok = (report.status is engine.RunStatus.BARRIER_FOUND
              and (report.verdict is None or
                   report.verdict.status is rigor.VerdictStatus.VERIFIED))
        all_ok = all_ok and ok
        rows.append((doc.get("name", path.stem), prob.dim, report))
        if args.report_dir:
            out = _report_json(doc.get("name", path.stem), report, prob,
                               tmpl, cfg.seed)
            Path(args.report_dir).mkdir(parents=True, exist_ok=True)
            _write_report(out, str(Path(args.report_dir) / f"{path.stem}-report.json"))
    header = (f"{'problem':<16} {'dim':>3} {'iter':>4} {'simulation':>10} "
              f"{'candidate':>10} {'counterex':>10} {'verif':>8}  status")
    print(header)
    for name, dim, report in rows:
        t = report.timings
        verdict = _verdict_name(report.verdict) or "-"
        print(f"{name:<16} {dim:>3} {report.iterations:>4} "
              f"{t['simulation']:>10.2f} {t['candidate']:>10.2f} "
              f"{t['counterexample']:>10.2f} {t['verification']:>8.2f}  "
              f"{report.status.value}/{verdict}")
    return 0 if all_ok else 1


def _cmd_gen(args) -> int:
    if args.corpus_dir:
        written = benchmarks.write_corpus(args.corpus_dir)
        for path in written:
            print(path)
        return 0
    if args.scalable is None:
        raise UserError("gen: pass --scalable L or --corpus DIR")
    doc = benchmarks.scalable(args.scalable)
    text = json.dumps(doc, indent=2)
    if args.output:
        Path(args.output).write_text(text + "\n")
    else:
        print(text)
    return 0


def _add_run_flags(sp):
    sp.add_argument("--sigma", type=float, default=None,
                    help="simulation length for bootstrap segments")
    sp.add_argument("--bloat", type=float, default=None,
                    help="state-space bloating factor (default 1.1)")
    sp.add_argument("--starts", type=int, default=None,
                    help="multi-start count for the falsifier")
    sp.add_argument("--max-iter", type=int, default=None,
                    help="refinement iteration budget")
    sp.add_argument("--seed", type=int, default=None, help="random seed")
    sp.add_argument("--delta-min", type=float, default=None,
                    help="smallest margin accepted as a candidate")
    sp.add_argument("--min-box-width", type=float, default=None,
                    help="verifier minimum box width as a fraction of the "
                         "state-space width")
    sp.add_argument("--no-verify", action="store_true",
                    help="skip the rigorous verification step")
    sp.add_argument("--report", default=None, help="write the report here")


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="simbarrier",
        description="Synthesize and verify barrier certificates from "
                    "simulations")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="synthesize a certificate")
    sp.add_argument("problem", help="problem document (JSON)")
    _add_run_flags(sp)
    sp.set_defaults(func=_cmd_synth)

    sp = sub.add_parser("verify", help="verify given certificate coefficients")
    sp.add_argument("problem", help="problem document (JSON)")
    sp.add_argument("--barrier", required=True,
                    help="coefficient document (JSON)")
    sp.add_argument("--min-box-width", type=float, default=None)
    sp.add_argument("--report", default=None)
    sp.set_defaults(func=_cmd_verify)

    sp = sub.add_parser("bench", help="run every problem in a directory")
    sp.add_argument("corpus", help="directory of problem documents")
    sp.add_argument("--report-dir", default=None,
                    help="write per-problem reports into this directory")
    _add_run_flags(sp)
    sp.set_defaults(func=_cmd_bench)

    sp = sub.add_parser("gen", help="emit bundled benchmark documents")
    sp.add_argument("--scalable", type=int, default=None, metavar="L",
                    help="emit the scalable family instance with L pairs")
    sp.add_argument("--corpus", dest="corpus_dir", default=None, metavar="DIR",
                    help="write the whole bundled corpus into DIR")
    sp.add_argument("--output", default=None, help="output path")
    sp.set_defaults(func=_cmd_gen)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = _build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as err:
        return 2 if err.code not in (0, None) else 0
    try:
        return args.func(args)
    except UserError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
