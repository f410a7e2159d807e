"""Transform pipeline engine: composition, seeded draws, history, inversion.

A pipeline is a tree of three node kinds, with a canonical JSON form:

* ``{"type": "compose", "children": [...]}``
* ``{"type": "one_of", "p": 0.5, "children": [{"weight": 0.8, "node": {...}}]}``
* ``{"type": "leaf", "name": "RandomAffine", "params": {...}}``

Unknown transform names and unknown/invalid parameters are errors. Every
executed leaf appends one :class:`AppliedTransform` to the subject history,
recording fully resolved parameters (every random draw as a concrete value),
so the history itself is a deterministic pipeline that replays bit-exactly.

OneOf draws exactly two uniforms per visit (apply?, which?) in that order,
regardless of the outcome, so downstream draws stay aligned. When OneOf does
not fire (probability 1-p) a "NoOp" marker entry is recorded for audit.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Union

import numpy as np

from .errors import BadPipeline, UnknownTransform
from .image import Subject, require_consistent
from .rng import Rng


@dataclass(frozen=True)
class Leaf:
    name: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Compose:
    children: tuple = ()


@dataclass(frozen=True)
class OneOf:
    # children hold (node, normalized weight); p = probability of firing at all
    children: tuple = ()
    p: float = 1.0


PipelineSpec = Union[Leaf, Compose, OneOf]


@dataclass(frozen=True)
class AppliedTransform:
    """Resolved record of one executed leaf."""

    name: str
    params: dict
    invertible: bool


def leaf(name: str, **params) -> Leaf:
    return Leaf(name, params)


def pipeline(*nodes) -> Compose:
    return Compose(tuple(nodes))


def one_of(weighted, p: float = 1.0) -> OneOf:
    """Build a OneOf from (node, weight) pairs (or a dict); weights are
    normalized here."""
    items = list(weighted.items()) if isinstance(weighted, dict) else list(weighted)
    if not items:
        raise BadPipeline("one_of needs at least one child")
    total = float(sum(w for _, w in items))
    if total <= 0 or any(w <= 0 for _, w in items):
        raise BadPipeline("one_of weights must be positive")
    if not 0.0 <= p <= 1.0:
        raise BadPipeline(f"one_of p must be in [0, 1], got {p}")
    return OneOf(tuple((node, float(w) / total) for node, w in items), p=float(p))


# --------------------------------------------------------------------------
# parameter schemas and the transform registry
# --------------------------------------------------------------------------


@dataclass
class Param:
    """Schema for one transform parameter (drives validation and the UI)."""

    name: str
    type: str  # float,int,bool,str,float_pair,int_pair,float_triple,int_triple,axes,enum,array,dict,callable
    default: Any = None
    min: Optional[float] = None
    max: Optional[float] = None
    choices: Optional[tuple] = None
    required: bool = False


@dataclass
class TransformDef:
    name: str
    category: str  # spatial | intensity | mri | meta
    params: list
    apply: Callable  # (subject, params) -> (new_images: dict, recorded: dict)
    draw: Optional[Callable] = None  # (params, subject, rng) -> (leaf name, params)
    invertible: bool = False
    invert: Optional[Callable] = None  # (recorded params) -> (name, params)
    ui: bool = True
    # spatial transforms require a consistent subject, except the ones whose
    # purpose is to normalize geometry (Resample, ToCanonical)
    requires_consistent: Optional[bool] = None

    def needs_consistency(self) -> bool:
        if self.requires_consistent is not None:
            return self.requires_consistent
        return self.category == "spatial"


_REGISTRY: dict[str, TransformDef] = {}


def register(tdef: TransformDef) -> TransformDef:
    if tdef.name in _REGISTRY:
        raise ValueError(f"duplicate transform {tdef.name}")
    _REGISTRY[tdef.name] = tdef
    return tdef


def get_transform(name: str) -> TransformDef:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise UnknownTransform(f"unknown transform {name!r}") from None


def transform_names() -> list[str]:
    return sorted(_REGISTRY)


def _check_number(p: Param, v, kind) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float, np.integer, np.floating)):
        raise BadPipeline(f"{p.name}: expected {kind}, got {v!r}")
    v = float(v)
    if p.min is not None and v < p.min:
        raise BadPipeline(f"{p.name}: {v} below minimum {p.min}")
    if p.max is not None and v > p.max:
        raise BadPipeline(f"{p.name}: {v} above maximum {p.max}")
    return v


def _validate_value(p: Param, value):
    t = p.type
    if t == "float":
        return _check_number(p, value, "a number")
    if t == "int":
        v = _check_number(p, value, "an integer")
        if v != int(v):
            raise BadPipeline(f"{p.name}: expected integer, got {value!r}")
        return int(v)
    if t == "bool":
        if not isinstance(value, bool):
            raise BadPipeline(f"{p.name}: expected bool, got {value!r}")
        return value
    if t == "str":
        if not isinstance(value, str):
            raise BadPipeline(f"{p.name}: expected string, got {value!r}")
        return value
    if t in ("float_pair", "int_pair", "float_triple", "int_triple"):
        n = 2 if "pair" in t else 3
        if np.isscalar(value) and t in ("float_pair",):
            # scalar v means the symmetric/degenerate range (v, v)
            value = (value, value)
        try:
            seq = list(value)
        except TypeError:
            raise BadPipeline(f"{p.name}: expected {n} values, got {value!r}") from None
        if len(seq) != n:
            raise BadPipeline(f"{p.name}: expected {n} values, got {len(seq)}")
        items = [_check_number(p, v, "a number") for v in seq]
        if t.startswith("int"):
            if any(v != int(v) for v in items):
                raise BadPipeline(f"{p.name}: expected integers, got {seq!r}")
            items = [int(v) for v in items]
        if "pair" in t and items[0] > items[1]:
            raise BadPipeline(f"{p.name}: range low {items[0]} > high {items[1]}")
        return tuple(items)
    if t in ("axes", "axes_empty_ok"):
        try:
            axes = sorted({int(a) for a in value})
        except (TypeError, ValueError):
            raise BadPipeline(f"{p.name}: expected a list of axes, got {value!r}") from None
        if any(a not in (0, 1, 2) for a in axes):
            raise BadPipeline(f"{p.name}: axes must be a subset of {{0,1,2}}")
        if not axes and t == "axes":
            raise BadPipeline(f"{p.name}: axes must be non-empty")
        return axes
    if t == "enum":
        if value not in p.choices:
            raise BadPipeline(f"{p.name}: {value!r} not one of {p.choices}")
        return value
    if t == "array":
        try:
            arr = np.asarray(value, dtype=np.float64)
        except (TypeError, ValueError):
            raise BadPipeline(f"{p.name}: expected a numeric array") from None
        if arr.size == 0:
            raise BadPipeline(f"{p.name}: empty array")
        return arr.tolist()
    if t == "str_list":
        if not isinstance(value, (list, tuple)) or not all(isinstance(v, str) for v in value):
            raise BadPipeline(f"{p.name}: expected a list of strings, got {value!r}")
        return list(value)
    if t == "dict":
        if not isinstance(value, dict):
            raise BadPipeline(f"{p.name}: expected an object, got {value!r}")
        return value
    if t == "callable":
        if not callable(value):
            raise BadPipeline(f"{p.name}: expected a callable")
        return value
    raise BadPipeline(f"{p.name}: unhandled schema type {t}")


def validate_params(tdef: TransformDef, params: dict) -> dict:
    known = {p.name: p for p in tdef.params}
    unknown = set(params) - set(known)
    if unknown:
        raise BadPipeline(f"{tdef.name}: unknown parameters {sorted(unknown)}")
    out = {}
    for p in tdef.params:
        if p.name in params and params[p.name] is not None:
            out[p.name] = _validate_value(p, params[p.name])
        elif p.required:
            raise BadPipeline(f"{tdef.name}: missing required parameter {p.name!r}")
        else:
            out[p.name] = copy.deepcopy(p.default)
    return out


def schema() -> list[dict]:
    """Serializable description of all registered transforms (drives the UI)."""
    out = []
    for name in transform_names():
        t = _REGISTRY[name]
        params = []
        for p in t.params:
            entry: dict = {"name": p.name, "type": p.type, "default": p.default}
            if p.min is not None:
                entry["min"] = p.min
            if p.max is not None:
                entry["max"] = p.max
            if p.choices is not None:
                entry["choices"] = list(p.choices)
            if p.required:
                entry["required"] = True
            params.append(entry)
        out.append(
            {
                "name": name,
                "category": t.category,
                "random": t.draw is not None,
                "invertible": t.invertible,
                "ui": t.ui,
                "params": params,
            }
        )
    return out


# --------------------------------------------------------------------------
# JSON form
# --------------------------------------------------------------------------


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if callable(value):
        raise BadPipeline("pipeline contains a callable (Lambda) and cannot be serialized")
    return value


def pipeline_to_json(node: PipelineSpec) -> dict:
    if isinstance(node, Compose):
        return {"type": "compose", "children": [pipeline_to_json(c) for c in node.children]}
    if isinstance(node, OneOf):
        return {
            "type": "one_of",
            "p": node.p,
            "children": [
                {"weight": w, "node": pipeline_to_json(c)} for c, w in node.children
            ],
        }
    if isinstance(node, Leaf):
        return {"type": "leaf", "name": node.name, "params": _jsonable(node.params)}
    raise BadPipeline(f"not a pipeline node: {node!r}")


def parse_pipeline(obj) -> PipelineSpec:
    """Parse (and validate) the canonical JSON form."""
    if isinstance(obj, (str, bytes)):
        try:
            obj = json.loads(obj)
        except json.JSONDecodeError as e:
            raise BadPipeline(f"invalid JSON: {e}") from e
    if not isinstance(obj, dict) or "type" not in obj:
        raise BadPipeline("pipeline node must be an object with a 'type' field")
    kind = obj["type"]
    if kind == "compose":
        children = obj.get("children", [])
        if not isinstance(children, list):
            raise BadPipeline("compose children must be a list")
        return Compose(tuple(parse_pipeline(c) for c in children))
    if kind == "one_of":
        children = obj.get("children", [])
        if not isinstance(children, list) or not children:
            raise BadPipeline("one_of needs a non-empty children list")
        pairs = []
        for c in children:
            if not isinstance(c, dict) or "node" not in c:
                raise BadPipeline("one_of children are objects {weight, node}")
            w = c.get("weight", 1.0)
            if not isinstance(w, (int, float)) or w <= 0:
                raise BadPipeline(f"one_of weight must be positive, got {w!r}")
            pairs.append((parse_pipeline(c["node"]), float(w)))
        return one_of(pairs, p=obj.get("p", 1.0))
    if kind == "leaf":
        name = obj.get("name")
        if not isinstance(name, str):
            raise BadPipeline("leaf needs a transform name")
        tdef = get_transform(name)
        params = obj.get("params", {})
        if not isinstance(params, dict):
            raise BadPipeline("leaf params must be an object")
        return Leaf(name, validate_params(tdef, params))
    raise BadPipeline(f"unknown node type {kind!r}")


def load_pipeline(path) -> PipelineSpec:
    try:
        with open(path) as f:
            text = f.read()
    except OSError as e:
        raise BadPipeline(f"cannot read pipeline file {path}: {e}") from e
    return parse_pipeline(text)


# --------------------------------------------------------------------------
# execution
# --------------------------------------------------------------------------


def one_of_select(weights, u: float) -> int:
    """Index of the cumulative-sum interval containing u (weights normalized)."""
    cum = np.cumsum(np.asarray(weights, dtype=np.float64))
    idx = int(np.searchsorted(cum, u, side="right"))
    return min(idx, len(cum) - 1)


def apply(spec: PipelineSpec, subject: Subject, rng: Rng) -> Subject:
    """Run a pipeline on a subject, appending one history entry per executed leaf."""
    return _apply_node(spec, subject.load(), rng)


def _apply_node(node: PipelineSpec, subject: Subject, rng: Rng) -> Subject:
    if isinstance(node, Compose):
        for child in node.children:
            subject = _apply_node(child, subject, rng)
        return subject
    if isinstance(node, OneOf):
        u_apply = rng.uniform()
        u_select = rng.uniform()
        if u_apply < node.p:
            idx = one_of_select([w for _, w in node.children], u_select)
            return _apply_node(node.children[idx][0], subject, rng)
        marker = AppliedTransform("NoOp", {}, invertible=False)
        return subject.with_images(subject.images, [marker])
    if isinstance(node, Leaf):
        return run_leaf(node.name, node.params, subject, rng)
    raise BadPipeline(f"not a pipeline node: {node!r}")


def run_leaf(name: str, params: dict, subject: Subject, rng: Optional[Rng]) -> Subject:
    tdef = get_transform(name)
    params = validate_params(tdef, params)
    if tdef.needs_consistency():
        require_consistent(subject)
    if tdef.draw is not None:
        if rng is None:
            raise BadPipeline(f"{name} is random and needs an rng")
        resolved_name, resolved = tdef.draw(params, subject, rng)
        tdef = get_transform(resolved_name)
        resolved = validate_params(tdef, resolved)
    else:
        resolved_name, resolved = name, params
    new_images, recorded = tdef.apply(subject, resolved)
    entry = AppliedTransform(resolved_name, recorded, tdef.invertible)
    return subject.with_images(new_images, [entry])


def lambda_transform(fn: Callable, kinds=("scalar", "label")) -> Leaf:
    """Leaf applying an arbitrary array function to images of the given kinds."""
    return Leaf("Lambda", {"fn": fn, "kinds": list(kinds)})


# --------------------------------------------------------------------------
# history
# --------------------------------------------------------------------------


def history_as_pipeline(subject: Subject) -> Compose:
    """Deterministic pipeline replaying this subject's history bit-exactly."""
    return Compose(tuple(Leaf(e.name, dict(e.params)) for e in subject.history))


def invert_history(subject: Subject) -> tuple[Compose, int]:
    """Reversed composition of the inverses of invertible entries.

    Returns (pipeline, number of discarded non-invertible entries).
    """
    leaves = []
    discarded = 0
    for entry in reversed(subject.history):
        tdef = get_transform(entry.name)
        if entry.invertible and tdef.invert is not None:
            inv_name, inv_params = tdef.invert(entry.params)
            leaves.append(Leaf(inv_name, inv_params))
        else:
            discarded += 1
    return Compose(tuple(leaves)), discarded
