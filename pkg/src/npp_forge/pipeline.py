"""The full chain polynomial system -> ETR-INV system -> array -> nested instance.

Each stage hands over a pair of rational maps; the pipeline composes them into
one forward map (source variables -> array cells) and one backward map.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

from .construction import NestedInstance, build_instance, instance_from_json, instance_to_json, validate_outer
from .etr_inv import EtrInvSystem, format_inv_system, parse_inv_system, reduce_poly_to_inv
from .exact_geometry import GeometryInputError, format_rational
from .inv_array import (
    EtrInvArray, array_from_json, array_to_json, assignment_to_matrix, check_array_assignment,
    normalize_inv_system, system_to_array,
)
from .polynomial import (
    EvaluationError, PolySystem, RationalMap, apply_map, compose_maps, format_system, map_from_json,
    map_to_json, parse_system,
)
from .verifier import check_nested, lift_assignment

BUNDLE_FILES = ("system.txt", "inv.txt", "array.json", "instance.json", "witness.json", "report.json")


class PipelineError(RuntimeError):
    def __init__(self, stage, error):
        super().__init__(f"[{stage}] {error}")
        self.stage = stage
        self.error = error


@dataclass
class PipelineResult:
    system: PolySystem
    inv: EtrInvSystem  # normalized; the array is built from this system
    array: EtrInvArray
    instance: NestedInstance
    forward: RationalMap  # source variables -> array cells
    backward: RationalMap  # array cells -> source variables
    legend: dict = field(default_factory=dict)
    stage_maps: list = field(default_factory=list)  # [(name, forward, backward)] per reduction
    outer_report: dict = field(default_factory=dict)
    log: list = field(default_factory=list)  # per stage: sizes and seconds

    @property
    def stages(self):
        return (self.system, self.inv, self.array, self.instance)

    def sizes(self) -> list:
        return [{k: v for k, v in entry.items() if k != "seconds"} for entry in self.log]


def _system_size(system: PolySystem) -> int:
    return sum(max(1, len(p.terms)) * (p.degree() + 1) for p in system.polynomials) + len(system.variables)


def run_pipeline(system: PolySystem, validate: bool = True) -> PipelineResult:
    log = []

    def stage(name, fn, *args):
        t0 = time.perf_counter()
        try:
            out = fn(*args)
        except Exception as exc:
            raise PipelineError(name, exc) from exc
        log.append({"stage": name, "seconds": time.perf_counter() - t0})
        return out

    raw, red = stage("reduce", reduce_poly_to_inv, system)
    log[-1].update(variables=len(raw.variables), add=raw.n_add, inv=raw.n_inv)
    norm, n_fwd, n_bwd = stage("normalize", lambda s: normalize_inv_system(s, with_backward=True), raw)
    log[-1].update(variables=len(norm.variables), add=norm.n_add, inv=norm.n_inv)
    array, aw = stage("array", system_to_array, norm)
    log[-1].update(rows=array.m, cols=array.n, constraints=len(array.constraints))
    instance = stage("instance", build_instance, array)
    log[-1].update(dim=instance.dim, outer_vertices=len(instance.outer_vertices),
                   inner_vertices=len(instance.inner_vertices), k=instance.k)

    def compose():
        fwd = compose_maps(aw.forward, compose_maps(n_fwd, red.forward))
        bwd = compose_maps(red.backward, compose_maps(n_bwd, aw.backward))
        return fwd, bwd

    forward, backward = stage("compose", compose)

    # size bounds
    size = _system_size(system)
    bits = max(1, system.bound.numerator.bit_length()) + system.bound.denominator.bit_length()
    limit = 256 * (size + 1) ** 2 * (bits + 4)
    checks = [
        (len(raw.constraints) <= limit, f"{len(raw.constraints)} reduction constraints exceed {limit}"),
        (len(norm.constraints) <= 3 * len(raw.constraints) + 4, "normalization grew more than linearly"),
        (array.m == 3 and array.n == 2 * len(norm.variables), f"array is {array.m}x{array.n}"),
        (len(instance.outer_vertices) == (array.n + 2) * (array.m + 1), "outer vertex count"),
    ]
    for ok, why in checks:
        if not ok:
            raise PipelineError("sizes", why)

    report = {}
    if validate:
        report = stage("validate", validate_outer, instance)
        if not report["ok"]:
            bad = [k for k, v in report.items() if k != "ok" and not v["ok"]]
            raise PipelineError("validate", f"outer polytope checks failed: {', '.join(bad)}")
    stage_maps = [("reduce", red.forward, red.backward), ("normalize", n_fwd, n_bwd),
                  ("array", aw.forward, aw.backward)]
    return PipelineResult(system, norm, array, instance, forward, backward, dict(aw.legend),
                          stage_maps, report, log)


# --- round trip ------------------------------------------------------------------

def _value(v):
    return v if isinstance(v, float) else format_rational(Fraction(v))


def _check_sample(result: PipelineResult, index: int, sample: dict, tol: float) -> dict:
    numeric = any(isinstance(v, float) for v in sample.values())
    t = tol if numeric else None
    entry = {"index": index, "point": {k: _value(v) for k, v in sorted(sample.items())},
             "array_ok": False, "nested_ok": False, "roundtrip_ok": False}
    try:
        cells = apply_map(result.forward, sample)
    except EvaluationError as exc:
        entry["error"] = f"forward: {exc}"
        return entry
    except KeyError as exc:
        entry["error"] = f"forward: missing variable {exc}"
        return entry
    matrix = assignment_to_matrix(result.array, cells)
    ok, idx = check_array_assignment(result.array, matrix, tol=t)
    entry["array_ok"] = bool(ok)
    if not ok:
        entry["array_violation"] = "range" if idx == -1 else repr(result.array.constraints[idx])
    else:
        try:
            X = lift_assignment(result.instance, matrix)
            verdict = check_nested(result.instance, X, tol=t, first_only=True)
            entry["nested_ok"] = verdict.ok
            if not verdict.ok:
                entry["nested_failure"] = verdict.failures[0]
        except GeometryInputError as exc:
            entry["nested_failure"] = {"kind": "lift", "detail": str(exc)}
    try:
        back = apply_map(result.backward, cells)
    except EvaluationError as exc:
        entry["error"] = f"backward: {exc}"
        return entry
    if t is None:
        same = all(Fraction(back[v]) == Fraction(sample[v]) for v in result.backward.target)
    else:
        same = all(abs(float(back[v]) - float(sample[v])) <= t for v in result.backward.target)
    entry["roundtrip_ok"] = same
    if not same:
        entry["recovered"] = {k: _value(v) for k, v in sorted(back.items())}
    return entry


def roundtrip_check(result: PipelineResult, samples, tol: float = 1e-8, jobs: int = 1) -> dict:
    """Check forward images against the array and the instance, then invert.

    Exact for rational samples; float samples use ``tol``. Entries are ordered
    by sample index whatever the number of worker processes.
    """
    samples = [dict(s) for s in samples]
    if jobs > 1 and len(samples) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_check_sample, result, i, s, tol) for i, s in enumerate(samples)]
            entries = [f.result() for f in futures]
    else:
        entries = [_check_sample(result, i, s, tol) for i, s in enumerate(samples)]
    entries.sort(key=lambda e: e["index"])
    for e in entries:
        e["ok"] = e["array_ok"] and e["nested_ok"] and e["roundtrip_ok"] and "error" not in e
    return {"samples": entries, "ok": all(e["ok"] for e in entries)}


# --- bundles ---------------------------------------------------------------------

def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def bundle_report(result: PipelineResult, roundtrip: dict | None = None) -> dict:
    report = {"sizes": result.sizes(), "outer": result.outer_report, "notes": list(result.inv.notes)}
    if roundtrip is not None:
        report["roundtrip"] = roundtrip
    return report


def write_bundle(result: PipelineResult, directory, roundtrip: dict | None = None) -> list:
    """Write the six bundle files; contents are deterministic (no timings)."""
    os.makedirs(directory, exist_ok=True)
    files = {
        "system.txt": format_system(result.system) + "\n",
        "inv.txt": format_inv_system(result.inv),
        "array.json": _dump(array_to_json(result.array, result.legend)),
        "instance.json": _dump(instance_to_json(result.instance)),
        "witness.json": _dump({"forward": map_to_json(result.forward), "backward": map_to_json(result.backward)}),
        "report.json": _dump(bundle_report(result, roundtrip)),
    }
    paths = []
    for name in BUNDLE_FILES:
        path = os.path.join(directory, name)
        with open(path, "w") as fh:
            fh.write(files[name])
        paths.append(path)
    return paths


def read_bundle(directory) -> PipelineResult:
    def read(name):
        with open(os.path.join(directory, name)) as fh:
            return fh.read()

    system = parse_system(read("system.txt"))
    inv = parse_inv_system(read("inv.txt"))
    array, legend = array_from_json(read("array.json"))
    instance = instance_from_json(read("instance.json"))
    wit = json.loads(read("witness.json"))
    report = json.loads(read("report.json"))
    return PipelineResult(system, inv, array, instance, map_from_json(wit["forward"]),
                          map_from_json(wit["backward"]), legend or {}, [], report.get("outer", {}),
                          report.get("sizes", []))
