"""Command-line front end: simulate, fit, extract, synth, survey.

Exit codes: 0 success, 1 usage or I/O error, 2 fit did not converge.
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import math
import sys
from pathlib import Path

import numpy as np

from . import datasets, io, metrics
from .bvd import ToneTarget, UnreachableCouplingError, add_noise, mbvd_admittance, synthesize
from .fit import FitOptions, IllConditionedFitError, InsufficientDataError, fit_mbvd
from .stack_model import (PoleError, StackConfigError, bundled_config, bundled_file, input_admittance, label_mode, load_stack,
                          mode_stress_profile)
from .trace import FrequencyGrid

EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED = 0, 1, 2
SURVEY_HEADER = ["label", "freq_hz", "q", "k2"]


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


class _Out:
    def __init__(self, quiet: bool):
        self.quiet = quiet

    def __call__(self, *parts):
        if not self.quiet:
            print(*parts)


def _write(path, text: str):
    Path(path).write_text(text, encoding="ascii", newline="\n")


def _resolve_config(arg: str) -> Path:
    if arg.startswith("@"):
        return bundled_config(arg[1:])
    return Path(arg)


def _refined(freqs: np.ndarray, factor: int = 4) -> np.ndarray:
    idx = np.linspace(0, len(freqs) - 1, factor * (len(freqs) - 1) + 1)
    return np.interp(idx, np.arange(len(freqs)), freqs)


def _fmt(v, spec="%.6g"):
    return "-" if v is None else spec % v


def _report_table(report, out: _Out):
    out(f"{'fs [GHz]':>12} {'fp [GHz]':>12} {'Q_3dB':>9} {'k2 [%]':>9} {'FoM':>9} {'order':>6}")
    for m in report:
        out(f"{m.fs / 1e9:12.5f} {_fmt(m.fp and m.fp / 1e9, '%.5f'):>12} {_fmt(m.q_3db, '%.1f'):>9} "
            f"{_fmt(m.k2 and m.k2 * 100, '%.2f'):>9} {_fmt(m.fom, '%.2f'):>9} {_fmt(m.mode_label, '%d'):>6}")


def _write_report(path, report):
    if str(path).lower().endswith(".csv"):
        _write(path, metrics.report_to_csv(report))
    else:
        _write(path, io.dumps_json([m.to_dict() for m in report]))


def _read_input(path, topology):
    p = bundled_file(path[1:]) if path.startswith("@") else Path(path)
    if not p.is_file():
        raise CliError(f"input file not found: {p}")
    return io.read_trace(p, topology)


# --- subcommands -------------------------------------------------------------

def cmd_simulate(args, out: _Out) -> int:
    path = _resolve_config(args.config)
    if not path.is_file():
        raise CliError(f"stack config not found: {path}")
    stack = load_stack(path)
    grid = FrequencyGrid(args.f_start, args.f_stop, args.points, args.spacing)
    trace = input_admittance(stack, grid)
    _write(args.out or "trace.csv", io.write_trace_csv(trace))
    report = metrics.extract_report(trace, args.convention, stack=stack, prominence_db=args.prominence)
    out(f"stack: {path} ({len(stack.layers)} layers, {stack.thickness * 1e9:.1f} nm)")
    if trace.poles:
        out(f"lossless poles skipped: {len(trace.poles)}")
    if not report:
        out("no resonances found")
    else:
        _report_table(report, out)
    if args.profile_at is not None:
        prof = mode_stress_profile(stack, args.profile_at)
        rows = ["depth_m,re_stress_pa,im_stress_pa"]
        rows += ["%.12e,%.12e,%.12e" % (z, s.real, s.imag) for z, s in zip(prof.depths, prof.stress)]
        _write(args.profile_out, "\n".join(rows) + "\n")
        out(f"mode order at {args.profile_at / 1e9:.5f} GHz: {label_mode(prof)}")
    return EXIT_OK


def cmd_fit(args, out: _Out) -> int:
    trace = _read_input(args.input, args.topology)
    topo = trace.meta.get("topology")
    if topo is not None:
        note = " (default)" if args.topology is None else ""
        out(f"topology: {topo}{note}")
    opts = FitOptions(n_branches=args.branches, max_iterations=args.max_iterations, weighting=args.weighting)
    result = fit_mbvd(trace, opts)
    _write(args.out or "fit.json", io.dumps_json(result.to_dict()))
    model = mbvd_admittance(result.params, _refined(trace.freqs))
    report = metrics.extract_report(model, args.convention)
    if args.report:
        _write_report(args.report, report)
    out(f"branches: {args.branches}  residual: {result.residual:.4e}  iterations: {result.iterations}  "
        f"converged: {'yes' if result.converged else 'no'}")
    out(f"k2 convention: {args.convention}")
    _report_table(report, out)
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def cmd_extract(args, out: _Out) -> int:
    trace = _read_input(args.input, args.topology)
    stack = load_stack(_resolve_config(args.stack)) if args.stack else None
    report = metrics.extract_report(trace, args.convention, stack=stack, prominence_db=args.prominence)
    if args.out:
        _write_report(args.out, report)
    out(f"k2 convention: {args.convention}")
    if not report:
        out("no resonances found")
    else:
        _report_table(report, out)
    return EXIT_OK


def cmd_synth(args, out: _Out) -> int:
    if args.paper:
        tones = list(datasets.PAPER_TONES + datasets.PAPER_SPURS)
        c0, rs, r0 = datasets.PAPER_C0, datasets.PAPER_RS, datasets.PAPER_R0
    else:
        n = len(args.fs or [])
        if n == 0 or len(args.k2 or []) != n or len(args.q or []) != n:
            raise CliError("give --fs, --k2 and --q once per tone (or --paper)")
        if args.c0 is None:
            raise CliError("--c0 is required")
        tones = [ToneTarget(f, k, q) for f, k, q in zip(args.fs, args.k2, args.q)]
        c0, rs, r0 = args.c0, args.rs, args.r0
    c0 = args.c0 if args.c0 is not None else c0
    grid = FrequencyGrid(args.f_start, args.f_stop, args.points, args.spacing)
    if args.branch_q:
        params = synthesize(tones, c0, rs, r0, args.convention)
    else:
        params = datasets.calibrate(tones, c0, rs, r0, args.convention, grid)
    trace = mbvd_admittance(params, grid)
    if args.noise > 0:
        trace = add_noise(trace, args.noise, args.seed)

    prefix = args.out or "synth"
    meta = {
        "generator": "p3fres synth",
        "k2_convention": args.convention,
        "q_meaning": "branch" if args.branch_q else "extracted_3db",
        "targets": [{"fs_hz": t.fs, "k2": t.k2, "q": t.q} for t in tones],
        "noise_rel_sigma": float(args.noise),
        "seed": int(args.seed),
        "topology": "series",
        "z0_ohm": float(args.z0),
    }
    doc = dict(params.to_dict(), metadata=meta)
    _write(f"{prefix}.params.json", io.dumps_json(doc))
    _write(f"{prefix}.csv", io.write_trace_csv(trace))
    _write(f"{prefix}.s2p", io.serialize_touchstone(io.embed_admittance(trace, "series", args.z0)))
    out(f"wrote {prefix}.params.json, {prefix}.csv, {prefix}.s2p ({len(params.branches)} branches)")
    report = metrics.extract_report(mbvd_admittance(params, grid), args.convention)
    if report:
        _report_table(report, out)
    else:
        out("static branch only: no resonances")
    return EXIT_OK


def cmd_survey(args, out: _Out) -> int:
    path = Path(args.input)
    if not path.is_file():
        raise CliError(f"input file not found: {path}")
    rows = list(csv.reader(_io.StringIO(path.read_text())))
    points = []
    if rows:
        header = [h.strip() for h in rows[0]]
        if header != SURVEY_HEADER:
            raise CliError(f"{path}: line 1: expected header {','.join(SURVEY_HEADER)}")
        for lineno, row in enumerate(rows[1:], start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                if len(row) != 4:
                    raise ValueError(f"expected 4 fields, got {len(row)}")
                label = row[0].strip()
                f, q, k2 = (float(c) for c in row[1:])
                if not (f > 0 and q >= 0 and k2 >= 0 and all(map(math.isfinite, (f, q, k2)))):
                    raise ValueError("need freq_hz > 0, q >= 0, k2 >= 0")
            except ValueError as exc:
                print(f"warning: {path}: line {lineno}: {exc}", file=sys.stderr)
                continue
            points.append((f, metrics.fom(q, k2), label))
    points.sort(key=lambda p: p[0])
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["freq_hz", "fom", "label"])
    for f, v, label in points:
        w.writerow(["%.12e" % f, "%.12e" % v, label])
    _write(args.out or "survey.csv", buf.getvalue())
    out(f"{len(points)} survey points written")
    return EXIT_OK


# --- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output path (prefix for synth)")
    common.add_argument("--quiet", action="store_true", help="suppress console summaries")

    conv = argparse.ArgumentParser(add_help=False)
    conv.add_argument("--convention", choices=metrics.CONVENTIONS, default=metrics.DEFAULT_CONVENTION,
                      help="k2 definition (default %(default)s)")

    grid = argparse.ArgumentParser(add_help=False)
    grid.add_argument("--f-start", type=float, default=5e9)
    grid.add_argument("--f-stop", type=float, default=60e9)
    grid.add_argument("--points", type=int, default=5501)
    grid.add_argument("--spacing", choices=("linear", "log"), default="linear")

    topo = argparse.ArgumentParser(add_help=False)
    topo.add_argument("--topology", choices=io.TOPOLOGIES, default=None,
                      help="DUT reduction for Touchstone input (2-port default: series)")

    p = _Parser(prog="p3fres", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[common, conv, grid], help="transfer-matrix admittance of a stack")
    s.add_argument("config", help="stack JSON (or @name for a bundled config)")
    s.add_argument("--profile-at", type=float, help="also write the stress profile at this frequency (Hz)")
    s.add_argument("--profile-out", default="profile.csv")
    s.add_argument("--prominence", type=float, default=3.0, help="peak prominence threshold in dB")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("fit", parents=[common, conv, topo], help="fit an mBVD model to a measurement")
    s.add_argument("input", help="trace CSV or Touchstone .s1p/.s2p (@paper_p3f.s2p for the bundled dataset)")
    s.add_argument("--branches", type=int, default=5)
    s.add_argument("--weighting", choices=("inverse_magnitude", "uniform"), default="inverse_magnitude")
    s.add_argument("--max-iterations", type=int, default=500)
    s.add_argument("--report", help="also write the metrics report (.json or .csv)")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("extract", parents=[common, conv, topo], help="metrics straight from a trace")
    s.add_argument("input", help="trace CSV or Touchstone .s1p/.s2p")
    s.add_argument("--stack", help="stack JSON used to label mode orders")
    s.add_argument("--prominence", type=float, default=3.0)
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("synth", parents=[common, conv], help="synthetic mBVD dataset from target metrics")
    s.add_argument("--fs", type=float, action="append", help="series resonance (Hz), once per tone")
    s.add_argument("--k2", type=float, action="append", help="coupling, once per tone")
    s.add_argument("--q", type=float, action="append", help="quality factor, once per tone")
    s.add_argument("--c0", type=float)
    s.add_argument("--rs", type=float, default=0.0)
    s.add_argument("--r0", type=float, default=0.0)
    s.add_argument("--paper", action="store_true", help="the measured device's two tones plus three spurs")
    s.add_argument("--branch-q", action="store_true",
                   help="treat --q/--k2 as branch values instead of matching the extracted metrics")
    s.add_argument("--noise", type=float, default=0.0, help="relative complex Gaussian noise")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--z0", type=float, default=50.0)
    s.add_argument("--f-start", type=float, default=10e9)
    s.add_argument("--f-stop", type=float, default=60e9)
    s.add_argument("--points", type=int, default=5001)
    s.add_argument("--spacing", choices=("linear", "log"), default="linear")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("survey", parents=[common], help="FoM plot data from label,freq_hz,q,k2 rows")
    s.add_argument("input")
    s.set_defaults(func=cmd_survey)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = _Out(args.quiet)
    try:
        return args.func(args, out)
    except (CliError, StackConfigError, io.TouchstoneError, io.TraceCsvError, io.SingularConversionError,
            UnreachableCouplingError, InsufficientDataError, IllConditionedFitError, PoleError,
            datasets.CalibrationError, OSError, ValueError) as exc:
        print(f"p3fres {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
