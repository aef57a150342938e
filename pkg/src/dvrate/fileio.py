"""JSON file formats for chains, measures, and flows.

Structural problems (bad JSON, wrong shape, unknown keys or state names,
duplicates) raise InputFormatError; well-formed files whose values violate
domain preconditions (nonpositive rate, reducible chain, unnormalized
measure, weight on a non-edge) raise the ordinary validation errors. The
CLI maps the two to different exit codes.
"""

from __future__ import annotations

import json
import numbers

from .chain import ChainSpec, Flow, ProbabilityMeasure, VertexFunction
from .config import DEFAULT_TOLERANCES, Tolerances
from .errors import InputFormatError, UnknownStateError
from .functionals import ExtendedReal


def _load_json(path: str):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputFormatError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputFormatError(f"{path} is not valid JSON: {exc}") from exc


def _require_keys(obj: dict, required: set, what: str, path: str):
    if not isinstance(obj, dict):
        raise InputFormatError(f"{what} in {path} must be a JSON object")
    missing = required - obj.keys()
    extra = obj.keys() - required
    if missing:
        raise InputFormatError(
            f"{what} in {path} is missing key(s) {sorted(missing)}"
        )
    if extra:
        raise InputFormatError(
            f"{what} in {path} has unknown key(s) {sorted(extra)}"
        )


def _require_number(x, what: str, path: str) -> float:
    if isinstance(x, bool) or not isinstance(x, numbers.Real):
        raise InputFormatError(f"{what} in {path} must be a number, got {x!r}")
    return float(x)


def load_chain(path: str, tolerances: Tolerances = DEFAULT_TOLERANCES) -> ChainSpec:
    """{"states": [...], "edges": [{"from":..,"to":..,"rate":..}, ...]}"""
    data = _load_json(path)
    _require_keys(data, {"states", "edges"}, "chain", path)
    states = data["states"]
    if not isinstance(states, list) or not all(isinstance(s, str) for s in states):
        raise InputFormatError(f"states in {path} must be a list of strings")
    if len(set(states)) != len(states):
        raise InputFormatError(f"duplicate state names in {path}")
    edges = data["edges"]
    if not isinstance(edges, list):
        raise InputFormatError(f"edges in {path} must be a list")
    known = set(states)
    rates = {}
    for e in edges:
        _require_keys(e, {"from", "to", "rate"}, "edge", path)
        y, z = e["from"], e["to"]
        for s in (y, z):
            if s not in known:
                raise InputFormatError(f"edge in {path} names unknown state {s!r}")
        if (y, z) in rates:
            raise InputFormatError(f"duplicate edge ({y!r}, {z!r}) in {path}")
        rates[(y, z)] = _require_number(e["rate"], "rate", path)
    return ChainSpec(states, rates, tolerances)


def load_measure(
    path: str,
    chain: ChainSpec,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> ProbabilityMeasure:
    """Object mapping state name to weight; omitted states get 0."""
    data = _load_json(path)
    if not isinstance(data, dict):
        raise InputFormatError(f"measure in {path} must be a JSON object")
    weights = {}
    for x, w in data.items():
        try:
            chain.state_index(x)
        except UnknownStateError:
            raise InputFormatError(
                f"measure in {path} names unknown state {x!r}"
            ) from None
        weights[x] = _require_number(w, f"weight of {x!r}", path)
    return ProbabilityMeasure.from_dict(chain, weights, tolerances)


def load_flow(path: str, chain: ChainSpec) -> Flow:
    """[{"from":..,"to":..,"weight":..}, ...], optionally under an "edges" key.

    Weight on a pair that is not a chain edge is a domain error, not a
    format error: the file is well-formed, the flow is not supported."""
    data = _load_json(path)
    if isinstance(data, dict):
        _require_keys(data, {"edges"}, "flow", path)
        data = data["edges"]
    if not isinstance(data, list):
        raise InputFormatError(f"flow in {path} must be a list of edge objects")
    weights = {}
    for e in data:
        _require_keys(e, {"from", "to", "weight"}, "flow edge", path)
        y, z = e["from"], e["to"]
        for s in (y, z):
            try:
                chain.state_index(s)
            except UnknownStateError:
                raise InputFormatError(
                    f"flow in {path} names unknown state {s!r}"
                ) from None
        if (y, z) in weights:
            raise InputFormatError(f"duplicate flow edge ({y!r}, {z!r}) in {path}")
        weights[(y, z)] = _require_number(e["weight"], "weight", path)
    return Flow.from_dict(chain, weights)


# ---------------------------------------------------------------------------
# serialization helpers shared by the CLI


def measure_to_jsonable(mu: ProbabilityMeasure) -> dict:
    return {s: float(w) for s, w in zip(mu.chain.states, mu.values)}


def vertex_function_to_jsonable(g: VertexFunction) -> dict:
    return {s: float(w) for s, w in zip(g.chain.states, g.values)}


def flow_to_jsonable(q: Flow, include_zero: bool = False) -> list:
    out = []
    for s, d, w in zip(q.chain.edge_src, q.chain.edge_dst, q.values):
        if include_zero or w != 0.0:
            out.append(
                {
                    "from": q.chain.states[int(s)],
                    "to": q.chain.states[int(d)],
                    "weight": float(w),
                }
            )
    return out


def rate_to_jsonable(x) -> dict:
    """{"value": number or "inf", "infinite": bool} for floats and
    extended reals alike."""
    if isinstance(x, ExtendedReal):
        return x.jsonable()
    return {"value": float(x), "infinite": False}
