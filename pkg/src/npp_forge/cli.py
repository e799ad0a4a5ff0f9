"""Command-line front end: ``npp-forge <verb> ...``.

Exit codes: 0 success, 1 semantic rejection (a check fails), 2 input error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction
from itertools import product

from . import __version__
from .construction import build_instance, instance_from_json, instance_to_json
from .exact_geometry import GeometryInputError, format_rational, parse_rational
from .inv_array import ArrayError, array_from_json, matrix_from_json, matrix_to_json
from .nmf import (
    NestedRejection, NmfInstance, bridge_from_json, bridge_to_json, check_simplex_nested,
    factorization_to_npp_solution, matrix_from_json as nmf_matrix_from_json, matrix_to_json as nmf_matrix_to_json,
    nmf_to_npp, npp_solution_to_factorization, points_from_json, points_to_json,
)
from .pipeline import PipelineError, roundtrip_check, run_pipeline, write_bundle
from .polynomial import ParseError, parse_system
from .solvers import SolveConfig, nonneg_rank_search, solve_array, solve_poly_box
from .verifier import (
    ExtractionError, candidate_from_json, candidate_to_json, check_nested, extract_assignment,
    gadget_linear_predicate, gadget_quadratic_predicate, lift_assignment, linear_gadget_plot,
    quadratic_gadget_plot,
)

EXAMPLES = {
    # torus with radii 10 and 1 around the z axis
    "torus": "bound 12\n(x^2+y^2+z^2+99)^2 - 400*(x^2+y^2) = 0\n",
    "hyperbola": "bound 2\nx*y = 1\n",
    "identity": json.dumps({"rows": 3, "cols": 3, "k": 3,
                            "entries": [["1", "0", "0"], ["0", "1", "0"], ["0", "0", "1"]]},
                           sort_keys=True, indent=1) + "\n",
}


class InputError(Exception):
    """Bad input file or argument; exit code 2."""


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def _read(path) -> str:
    if path in (None, "-"):
        return sys.stdin.read()
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None


def _read_json(path):
    try:
        return json.loads(_read(path))
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None


def _emit(text, out=None):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _jobs_default():
    try:
        return max(1, int(os.environ.get("NPP_FORGE_JOBS", "1")))
    except ValueError:
        return 1


def _parse_sample(text):
    sample = {}
    for part in text.split(","):
        if "=" not in part:
            raise InputError(f"sample {text!r}: expected name=value pairs")
        name, val = part.split("=", 1)
        val = val.strip()
        try:
            sample[name.strip()] = float(val) if ("." in val or "e" in val.lower()) else parse_rational(val)
        except (ValueError, ZeroDivisionError):
            raise InputError(f"sample {text!r}: bad value {val!r}") from None
    return sample


def _number(x):
    return format_rational(x) if isinstance(x, Fraction) else float(x)


# --- verbs -----------------------------------------------------------------------

def cmd_reduce(args):
    system = parse_system(_read(args.input))
    result = run_pipeline(system)
    samples = [_parse_sample(s) for s in args.sample or []]
    rt = roundtrip_check(result, samples, tol=args.tol, jobs=args.jobs) if samples else None
    write_bundle(result, args.output, rt)
    if samples:
        from .inv_array import assignment_to_matrix
        from .polynomial import apply_map

        cells = apply_map(result.forward, samples[0])
        alpha = assignment_to_matrix(result.array, cells)
        _emit(_dump([[_number(v) for v in row] for row in alpha]), os.path.join(args.output, "alpha.json"))
        try:
            X = lift_assignment(result.instance, alpha)
            _emit(_dump(candidate_to_json(X)), os.path.join(args.output, "candidate.json"))
        except GeometryInputError as exc:
            print(f"sample 0 cannot be lifted: {exc}", file=sys.stderr)
    print(_dump({"bundle": args.output, "sizes": result.sizes(), "roundtrip_ok": None if rt is None else rt["ok"]}), end="")
    return 0 if rt is None or rt["ok"] else 1


def cmd_build(args):
    array, _ = array_from_json(_read_json(args.input))
    _emit(_dump(instance_to_json(build_instance(array))), args.output)
    return 0


def cmd_verify(args):
    instance = instance_from_json(_read_json(args.instance))
    X = candidate_from_json(_read_json(args.candidate))
    verdict = check_nested(instance, X, tol=args.tol)
    print(_dump(verdict.to_json()), end="")
    return 0 if verdict.ok else 1


def cmd_lift(args):
    instance = instance_from_json(_read_json(args.instance))
    alpha = matrix_from_json(_read_json(args.alpha))
    _emit(_dump(candidate_to_json(lift_assignment(instance, alpha))), args.output)
    return 0


def cmd_extract(args):
    instance = instance_from_json(_read_json(args.instance))
    X = candidate_from_json(_read_json(args.candidate))
    try:
        alpha = extract_assignment(instance, X)
    except ExtractionError as exc:
        print(_dump({"ok": False, "label": exc.label, "error": str(exc)}), end="")
        return 1
    _emit(_dump(matrix_to_json(alpha)), args.output)
    return 0


def cmd_solve(args):
    config = SolveConfig(tolerance=args.tol, max_depth=args.depth, seed=args.seed,
                         sample_budget=args.budget, jobs=args.jobs)
    text = _read(args.input)
    if text.lstrip().startswith("{"):
        array, _ = array_from_json(text)
        res = solve_array(array, config)
        sols = [[[float(v) for v in row] for row in s] for s in res.solutions]
    else:
        res = solve_poly_box(parse_system(text), config)
        sols = [{k: float(v) for k, v in sorted(s.items())} for s in res.solutions]
    out = {"solutions": sols, "residuals": [float(r) for r in res.residuals], "empty": res.empty,
           "incomplete": res.incomplete, "continuum": res.continuum, "boxes": res.boxes, "notes": res.notes}
    _emit(_dump(out), args.output)
    return 0


def cmd_nmf2npp(args):
    data = _read_json(args.input)
    M = nmf_matrix_from_json(data)
    k = args.k if args.k is not None else data.get("k")
    if k is None:
        raise InputError("no k given (use -k)")
    bridge = nmf_to_npp(NmfInstance(M, int(k)))
    out = {"bridge": bridge_to_json(bridge)}
    code = 0
    if args.search:
        res = nonneg_rank_search(M, int(k), SolveConfig(seed=args.seed))
        out["search"] = {"status": res.status, "reason": res.reason}
        if res.status == "found":
            out["candidate"] = points_to_json(factorization_to_npp_solution(bridge, res.V, res.W))
            out["search"]["V"] = nmf_matrix_to_json(res.V)
            out["search"]["W"] = nmf_matrix_to_json(res.W)
        elif res.status == "impossible":
            code = 1
    _emit(_dump(out), args.output)
    return code


def cmd_npp2nmf(args):
    data = _read_json(args.bridge)
    bridge = bridge_from_json(data.get("bridge", data))
    cdata = _read_json(args.candidate)
    X = points_from_json(cdata.get("candidate", cdata))
    certs, why = check_simplex_nested(bridge, X)
    if certs is None:
        print(_dump({"ok": False, "reason": why}), end="")
        return 1
    V, W = npp_solution_to_factorization(bridge, X)
    _emit(_dump({"ok": True, "V": nmf_matrix_to_json(V), "W": nmf_matrix_to_json(W)}), args.output)
    return 0


def _grid(den, lo, hi):
    return [Fraction(i, den) for i in range(int(lo * den), int(hi * den) + 1)]


def selftest_linear(ks=(2, 3)):
    """Exhaustive check of the linear gadget on the eighths grid; returns (agree, total)."""
    agree = total = 0
    grid = _grid(8, 0, 1)
    for k in ks:
        for lams in product(grid, repeat=k):
            s = sum(lams)
            for t in grid:
                total += 1
                agree += gadget_linear_predicate(lams, t) == (s == t * k)
    return agree, total


def selftest_quadratic(den=16):
    agree = total = 0
    grid = _grid(den, Fraction(1, 2), 2)
    for a1 in grid:
        for a2 in grid:
            total += 1
            agree += gadget_quadratic_predicate(a1, a2) == (a1 * a2 == 1)
    return agree, total


def cmd_gadgets(args):
    if args.selftest:
        la, lt = selftest_linear()
        qa, qt = selftest_quadratic()
        print(_dump({"linear": {"agree": la, "total": lt}, "quadratic": {"agree": qa, "total": qt}}), end="")
        return 0 if la == lt and qa == qt else 1
    if args.kind == "linear":
        if not args.values or len(args.values) < 2:
            raise InputError("gadgets linear needs lambda values followed by t")
        lams = [parse_rational(v) for v in args.values[:-1]]
        t = parse_rational(args.values[-1])
        data = linear_gadget_plot(lams, t)
    elif args.kind == "quadratic":
        if not args.values or len(args.values) != 2:
            raise InputError("gadgets quadratic needs two values a1 a2")
        data = quadratic_gadget_plot(parse_rational(args.values[0]), parse_rational(args.values[1]))
    else:
        raise InputError("gadgets needs --selftest, 'linear' or 'quadratic'")
    if args.emit_plot:
        _emit(_dump(data), args.emit_plot)
    print(_dump({"inside": data["inside"]}), end="")
    return 0


def cmd_example(args):
    _emit(EXAMPLES[args.name], args.output)
    return 0


# --- dispatch --------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="npp-forge", description="Nested polytope constructions and checks.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="verb", metavar="verb")
    sub.required = True
    jobs = _jobs_default()

    s = sub.add_parser("reduce", help="polynomial system -> bundle directory")
    s.add_argument("input", nargs="?", default="-")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--sample", action="append", help="solution to round-trip, e.g. x=1,y=1 (repeatable)")
    s.add_argument("--tol", type=float, default=1e-8)
    s.add_argument("--jobs", type=int, default=jobs)
    s.set_defaults(fn=cmd_reduce)

    s = sub.add_parser("build", help="array JSON -> instance JSON")
    s.add_argument("input")
    s.add_argument("-o", "--output")
    s.set_defaults(fn=cmd_build)

    s = sub.add_parser("verify", help="check A in conv(X) in B")
    s.add_argument("instance")
    s.add_argument("candidate")
    s.add_argument("--tol", type=float, default=None)
    s.set_defaults(fn=cmd_verify)

    s = sub.add_parser("lift", help="array assignment -> candidate point set")
    s.add_argument("instance")
    s.add_argument("--alpha", required=True)
    s.add_argument("-o", "--output")
    s.set_defaults(fn=cmd_lift)

    s = sub.add_parser("extract", help="candidate point set -> array assignment")
    s.add_argument("instance")
    s.add_argument("candidate")
    s.add_argument("-o", "--output")
    s.set_defaults(fn=cmd_extract)

    s = sub.add_parser("solve", help="solve an array JSON or polynomial system")
    s.add_argument("input")
    s.add_argument("--tol", type=float, default=1e-9)
    s.add_argument("--depth", type=int, default=200)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--budget", type=int, default=64)
    s.add_argument("--jobs", type=int, default=jobs)
    s.add_argument("-o", "--output")
    s.set_defaults(fn=cmd_solve)

    s = sub.add_parser("nmf2npp", help="matrix JSON -> simplex nested instance")
    s.add_argument("input")
    s.add_argument("-k", type=int)
    s.add_argument("--search", action="store_true", help="also search for a factorization")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("-o", "--output")
    s.set_defaults(fn=cmd_nmf2npp)

    s = sub.add_parser("npp2nmf", help="nested solution -> factorization")
    s.add_argument("bridge")
    s.add_argument("candidate")
    s.add_argument("-o", "--output")
    s.set_defaults(fn=cmd_npp2nmf)

    s = sub.add_parser("gadgets", help="gadget self-test or single query")
    s.add_argument("kind", nargs="?", choices=["linear", "quadratic"])
    s.add_argument("values", nargs="*")
    s.add_argument("--selftest", action="store_true")
    s.add_argument("--emit-plot", metavar="PATH")
    s.set_defaults(fn=cmd_gadgets)

    s = sub.add_parser("example", help="print a sample input")
    s.add_argument("name", choices=sorted(EXAMPLES))
    s.add_argument("-o", "--output")
    s.set_defaults(fn=cmd_example)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except NestedRejection as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1 if exc.stage in ("validate", "sizes") else 2
    except (InputError, ParseError, ArrayError, GeometryInputError, KeyError, ValueError, ZeroDivisionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
