"""Tree-structured task planner with accept/reject/dormant/feedback gating.

A planning episode walks a four-layer semantic decision tree (type,
structure, attribute, finalization) over a pluggable attribute oracle and
emits an ordered sequence of sub-actions. Single-step object categories
resolve at the type layer; multi-step garments route through hood
canonicalization or a pick/place flatten, per-part attribute folds that
fire only when the part has not reached its target, and a closing
shoulder-to-hem fold for upper-body garments and dresses.

Branch bookkeeping uses gate states: the accepted category opens its
subtree, rejected siblings turn their descendants dormant, and attribute
nodes whose part is already in place stay feedback-pending so a later
replan can re-verify them.
"""

from __future__ import annotations

import json
import socket
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

from .errors import (
    AlreadyDecided,
    InconsistentAttributes,
    OracleUnavailable,
    UnknownCategory,
)

__all__ = [
    "SubAction",
    "ObjectCategory",
    "CategoryRegistry",
    "default_registry",
    "StructuralAttributes",
    "GateState",
    "GateNode",
    "GateTrace",
    "apply_gate",
    "Plan",
    "ScriptedOracle",
    "RemoteOracle",
    "parse_oracle_script",
    "classify_root",
    "plan",
    "replan_after_feedback",
    "RoutingCase",
    "RoutingReport",
    "evaluate_routing",
]

LAYER_TYPE = "type"
LAYER_STRUCTURE = "structure"
LAYER_ATTRIBUTE = "attribute"
LAYER_FINALIZATION = "finalization"
_LAYERS = (LAYER_TYPE, LAYER_STRUCTURE, LAYER_ATTRIBUTE, LAYER_FINALIZATION)

VERB_VOCABULARY = frozenset(
    {
        "pull_out",
        "pull",
        "hang",
        "pick",
        "place",
        "grasp_hat",
        "put_back",
        "grasp_sleeve",
        "put_center",
        "put_hem",
        "grasp_shoulder",
        "fold_legs_secondary",
        "fold_half",
    }
)

SLEEVE_VALUES = ("sleeveless", "short", "long", "not_applicable")
LEG_VALUES = ("short", "long", "not_applicable")
BODY_CLASSES = ("upper", "dress", "lower", "flat")

KIND_SINGLE = "single"
KIND_MULTI = "multi_step"


@dataclass(frozen=True)
class SubAction:
    verb: str
    target_part: str
    layer: str

    def __post_init__(self):
        if self.verb not in VERB_VOCABULARY:
            raise ValueError(f"verb {self.verb!r} is not in the primitive vocabulary")
        if self.layer not in _LAYERS:
            raise ValueError(f"unknown layer {self.layer!r}")


@dataclass(frozen=True)
class ObjectCategory:
    """A registered object class: single-step or multi-step garment."""

    name: str
    kind: str
    single_action: SubAction | None = None
    body: str | None = None

    def __post_init__(self):
        if self.kind not in (KIND_SINGLE, KIND_MULTI):
            raise ValueError(f"unknown kind {self.kind!r}")
        if (self.kind == KIND_SINGLE) != (self.single_action is not None):
            raise ValueError("single categories require single_action; multi-step ones forbid it")
        if self.kind == KIND_MULTI and self.body not in BODY_CLASSES:
            raise ValueError(f"multi-step category needs a body class, got {self.body!r}")


class CategoryRegistry:
    """Ordered name -> ObjectCategory mapping."""

    def __init__(self, categories=()):
        self._by_name: dict[str, ObjectCategory] = {}
        for cat in categories:
            self.register(cat)

    def register(self, cat: ObjectCategory) -> None:
        if cat.name in self._by_name:
            raise ValueError(f"category {cat.name!r} already registered")
        self._by_name[cat.name] = cat

    def get(self, name: str) -> ObjectCategory:
        try:
            return self._by_name[name]
        except KeyError:
            raise UnknownCategory(name) from None

    def names(self) -> list[str]:
        return list(self._by_name)

    def __iter__(self):
        return iter(self._by_name.values())

    def __len__(self):
        return len(self._by_name)


def _single(name: str, verb: str) -> ObjectCategory:
    return ObjectCategory(
        name=name,
        kind=KIND_SINGLE,
        single_action=SubAction(verb=verb, target_part=name, layer=LAYER_TYPE),
    )


def default_registry() -> CategoryRegistry:
    """Bundled categories; extend by registering more."""
    return CategoryRegistry(
        [
            _single("tissue", "pull_out"),
            _single("curtain", "pull"),
            _single("mask", "hang"),
            _single("hat", "hang"),
            _single("rope", "pick"),
            ObjectCategory(name="hooded_top", kind=KIND_MULTI, body="upper"),
            ObjectCategory(name="shirt", kind=KIND_MULTI, body="upper"),
            ObjectCategory(name="t_shirt", kind=KIND_MULTI, body="upper"),
            ObjectCategory(name="dress", kind=KIND_MULTI, body="dress"),
            ObjectCategory(name="pants", kind=KIND_MULTI, body="lower"),
            ObjectCategory(name="towel", kind=KIND_MULTI, body="flat"),
        ]
    )


@dataclass(frozen=True)
class StructuralAttributes:
    has_hood: bool
    sleeve: str
    leg: str

    def __post_init__(self):
        if self.sleeve not in SLEEVE_VALUES:
            raise ValueError(f"unknown sleeve value {self.sleeve!r}")
        if self.leg not in LEG_VALUES:
            raise ValueError(f"unknown leg value {self.leg!r}")


def _validate_attributes(cat: ObjectCategory, attrs: StructuralAttributes) -> None:
    body = cat.body
    if body in ("upper", "dress"):
        if attrs.sleeve == "not_applicable":
            raise InconsistentAttributes(f"{cat.name}: sleeve attribute required for {body} garments")
        if attrs.leg != "not_applicable":
            raise InconsistentAttributes(f"{cat.name}: leg attribute does not apply to {body} garments")
    elif body == "lower":
        if attrs.sleeve != "not_applicable":
            raise InconsistentAttributes(f"{cat.name}: sleeve attribute does not apply to pants-like objects")
        if attrs.leg == "not_applicable":
            raise InconsistentAttributes(f"{cat.name}: leg attribute required for pants-like objects")
        if attrs.has_hood:
            raise InconsistentAttributes(f"{cat.name}: hood does not apply to pants-like objects")
    elif body == "flat":
        if attrs.sleeve != "not_applicable" or attrs.leg != "not_applicable":
            raise InconsistentAttributes(f"{cat.name}: flat objects have no sleeves or legs")
        if attrs.has_hood:
            raise InconsistentAttributes(f"{cat.name}: flat objects have no hood")


# ---------------------------------------------------------------------------
# gate trace

class GateState:
    ACCEPT = "accept"
    REJECT = "reject"
    DORMANT = "dormant"
    FEEDBACK_PENDING = "feedback_pending"
    UNDECIDED = "undecided"

    FINAL = (ACCEPT, REJECT, DORMANT, FEEDBACK_PENDING)


@dataclass
class GateNode:
    name: str
    layer: str
    parent: str | None
    children: list[str] = field(default_factory=list)
    state: str = GateState.UNDECIDED


class GateTrace:
    """Per-episode record of every tree node's gate state."""

    def __init__(self):
        self.nodes: dict[str, GateNode] = {}

    def add(self, name: str, layer: str, parent: str | None) -> GateNode:
        if name in self.nodes:
            raise ValueError(f"duplicate node {name!r}")
        node = GateNode(name=name, layer=layer, parent=parent)
        self.nodes[name] = node
        if parent is not None:
            self.nodes[parent].children.append(name)
        return node

    def descendants(self, name: str):
        stack = list(self.nodes[name].children)
        while stack:
            child = stack.pop()
            yield child
            stack.extend(self.nodes[child].children)

    def set_state(self, name: str, state: str) -> None:
        self.nodes[name].state = state

    def states(self) -> dict[str, str]:
        return {name: node.state for name, node in self.nodes.items()}

    def to_dict(self) -> dict:
        return {
            name: {"layer": n.layer, "parent": n.parent, "state": n.state}
            for name, n in self.nodes.items()
        }


def apply_gate(trace: GateTrace, node: str, decision: str) -> GateTrace:
    """Decide an undecided node: accept opens its subtree for evaluation,
    reject turns the whole subtree dormant."""
    if decision not in (GateState.ACCEPT, GateState.REJECT):
        raise ValueError(f"decision must be accept or reject, got {decision!r}")
    gate = trace.nodes[node]
    if gate.state != GateState.UNDECIDED:
        raise AlreadyDecided(f"node {node!r} already {gate.state}")
    gate.state = decision
    if decision == GateState.REJECT:
        for name in trace.descendants(node):
            trace.set_state(name, GateState.DORMANT)
    return trace


def _build_tree(registry: CategoryRegistry) -> GateTrace:
    trace = GateTrace()
    trace.add("root", "root", None)
    for cat in registry:
        cat_node = trace.add(cat.name, LAYER_TYPE, "root")
        if cat.kind == KIND_SINGLE:
            continue
        branches = ["hood", "flatten"] if cat.body in ("upper", "dress") else ["flatten"]
        for branch in branches:
            bnode = trace.add(f"{cat.name}/{branch}", LAYER_STRUCTURE, cat.name)
            if cat.body in ("upper", "dress"):
                trace.add(f"{bnode.name}/left_sleeve", LAYER_ATTRIBUTE, bnode.name)
                trace.add(f"{bnode.name}/right_sleeve", LAYER_ATTRIBUTE, bnode.name)
                trace.add(f"{bnode.name}/finalize", LAYER_FINALIZATION, bnode.name)
            elif cat.body == "lower":
                trace.add(f"{bnode.name}/legs", LAYER_ATTRIBUTE, bnode.name)
            else:  # flat
                trace.add(f"{bnode.name}/finalize", LAYER_FINALIZATION, bnode.name)
    return trace


# ---------------------------------------------------------------------------
# oracles

class AttributeOracle(Protocol):
    """What a planning episode asks about the scene.

    Answers must stay stable within one episode; replanning may consult an
    oracle reflecting the post-action state.
    """

    def category(self) -> str: ...

    def has_hood(self) -> bool: ...

    def sleeve(self) -> str: ...

    def leg(self) -> str: ...

    def part_at_target(self, part: str) -> bool: ...


def _parse_bool(raw: str, key: str) -> bool:
    value = raw.strip().lower()
    if value in ("true", "yes", "1"):
        return True
    if value in ("false", "no", "0"):
        return False
    raise OracleUnavailable(f"non-boolean answer {raw!r} for {key}")


class ScriptedOracle:
    """Oracle backed by a static key -> answer mapping.

    Keys: category, has_hood, sleeve, leg, and part_at_target.<part>.
    """

    def __init__(self, answers: dict[str, str]):
        self.answers = {k.strip(): str(v).strip() for k, v in answers.items()}

    @classmethod
    def from_file(cls, path) -> "ScriptedOracle":
        return cls(parse_oracle_script(Path(path).read_text(encoding="utf-8")))

    def _get(self, key: str) -> str:
        try:
            return self.answers[key]
        except KeyError:
            raise OracleUnavailable(f"oracle script has no answer for {key!r}") from None

    def category(self) -> str:
        return self._get("category")

    def has_hood(self) -> bool:
        return _parse_bool(self._get("has_hood"), "has_hood")

    def sleeve(self) -> str:
        return self._get("sleeve")

    def leg(self) -> str:
        return self._get("leg")

    def part_at_target(self, part: str) -> bool:
        return _parse_bool(self._get(f"part_at_target.{part}"), f"part_at_target.{part}")


def parse_oracle_script(text: str) -> dict[str, str]:
    """Parse `key = value` lines; `#` starts a comment."""
    answers: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        answers[key.strip()] = value.strip()
    return answers


class RemoteOracle:
    """Oracle speaking line-delimited JSON over a TCP connection.

    Each query sends {"query": ..., "part": ...} and expects one line
    {"answer": ...} back. Timeouts, disconnects, and malformed replies all
    surface as OracleUnavailable. Answers are cached so repeated queries
    stay stable within one planning episode.
    """

    def __init__(self, host: str, port: int, timeout: float = 10.0):
        self.timeout = timeout
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise OracleUnavailable(f"cannot reach oracle at {host}:{port}: {exc}") from exc
        self._reader = self._sock.makefile("r", encoding="utf-8")
        self._writer = self._sock.makefile("w", encoding="utf-8")
        self._cache: dict[tuple[str, str | None], str] = {}

    def close(self) -> None:
        for stream in (self._reader, self._writer):
            try:
                stream.close()
            except OSError:
                pass
        self._sock.close()

    def _query(self, query: str, part: str | None = None) -> str:
        key = (query, part)
        if key in self._cache:
            return self._cache[key]
        request: dict[str, str] = {"query": query}
        if part is not None:
            request["part"] = part
        try:
            self._writer.write(json.dumps(request) + "\n")
            self._writer.flush()
            line = self._reader.readline()
        except OSError as exc:
            raise OracleUnavailable(f"oracle transport failure: {exc}") from exc
        if not line:
            raise OracleUnavailable("oracle closed the connection")
        try:
            answer = json.loads(line)["answer"]
        except (json.JSONDecodeError, KeyError) as exc:
            raise OracleUnavailable(f"malformed oracle reply {line!r}") from exc
        self._cache[key] = str(answer)
        return self._cache[key]

    def category(self) -> str:
        return self._query("category")

    def has_hood(self) -> bool:
        return _parse_bool(self._query("has_hood"), "has_hood")

    def sleeve(self) -> str:
        return self._query("sleeve")

    def leg(self) -> str:
        return self._query("leg")

    def part_at_target(self, part: str) -> bool:
        return _parse_bool(self._query("part_at_target", part), f"part_at_target.{part}")


# ---------------------------------------------------------------------------
# planning

@dataclass(frozen=True)
class Plan:
    category: str
    actions: tuple[SubAction, ...]

    def pairs(self) -> list[tuple[str, str]]:
        return [(a.verb, a.target_part) for a in self.actions]

    def to_dict(self) -> dict:
        return {
            "category": self.category,
            "actions": [
                {"verb": a.verb, "target_part": a.target_part, "layer": a.layer}
                for a in self.actions
            ],
        }


def classify_root(cat: ObjectCategory) -> str:
    """Type-layer decision: single-step or multi-step manipulation."""
    return cat.kind


def _sleeve_fold_verb(sleeve: str) -> str:
    # sleeveless straps and short cuffs converge to the center, long cuffs to the hem
    return "put_hem" if sleeve == "long" else "put_center"


def plan(oracle, registry: CategoryRegistry) -> tuple[Plan, GateTrace]:
    """Run one planning episode against the oracle.

    Returns the ordered sub-action plan and the gate trace recording every
    node's final state.
    """
    trace = _build_tree(registry)
    name = oracle.category()
    cat = registry.get(name)
    for other in registry:
        if other.name == name:
            apply_gate(trace, other.name, GateState.ACCEPT)
        else:
            apply_gate(trace, other.name, GateState.REJECT)

    if cat.kind == KIND_SINGLE:
        return Plan(category=name, actions=(cat.single_action,)), trace

    has_hood = oracle.has_hood() if cat.body in ("upper", "dress") else False
    attrs = StructuralAttributes(has_hood=has_hood, sleeve=oracle.sleeve(), leg=oracle.leg())
    _validate_attributes(cat, attrs)

    actions: list[SubAction] = []
    if cat.body in ("upper", "dress"):
        if attrs.has_hood:
            apply_gate(trace, f"{name}/hood", GateState.ACCEPT)
            apply_gate(trace, f"{name}/flatten", GateState.REJECT)
            branch = f"{name}/hood"
            actions.append(SubAction("grasp_hat", "hood", LAYER_STRUCTURE))
            actions.append(SubAction("put_back", "hood", LAYER_STRUCTURE))
        else:
            apply_gate(trace, f"{name}/flatten", GateState.ACCEPT)
            apply_gate(trace, f"{name}/hood", GateState.REJECT)
            branch = f"{name}/flatten"
            actions.append(SubAction("pick", "body", LAYER_STRUCTURE))
            actions.append(SubAction("place", "body", LAYER_STRUCTURE))
        fold_verb = _sleeve_fold_verb(attrs.sleeve)
        for side in ("left", "right"):
            part = f"{side}_sleeve"
            node = f"{branch}/{part}"
            if oracle.part_at_target(part):
                trace.set_state(node, GateState.FEEDBACK_PENDING)
            else:
                apply_gate(trace, node, GateState.ACCEPT)
                actions.append(SubAction("grasp_sleeve", part, LAYER_ATTRIBUTE))
                actions.append(SubAction(fold_verb, part, LAYER_ATTRIBUTE))
        apply_gate(trace, f"{branch}/finalize", GateState.ACCEPT)
        actions.append(SubAction("grasp_shoulder", "body", LAYER_FINALIZATION))
        actions.append(SubAction("put_hem", "body", LAYER_FINALIZATION))
    elif cat.body == "lower":
        branch = f"{name}/flatten"
        apply_gate(trace, branch, GateState.ACCEPT)
        actions.append(SubAction("pick", "body", LAYER_STRUCTURE))
        actions.append(SubAction("place", "body", LAYER_STRUCTURE))
        node = f"{branch}/legs"
        if attrs.leg == "long":
            if oracle.part_at_target("legs"):
                trace.set_state(node, GateState.FEEDBACK_PENDING)
            else:
                apply_gate(trace, node, GateState.ACCEPT)
                actions.append(SubAction("fold_legs_secondary", "legs", LAYER_ATTRIBUTE))
        else:
            apply_gate(trace, node, GateState.REJECT)
    else:  # flat
        branch = f"{name}/flatten"
        apply_gate(trace, branch, GateState.ACCEPT)
        actions.append(SubAction("pick", "body", LAYER_STRUCTURE))
        actions.append(SubAction("place", "body", LAYER_STRUCTURE))
        apply_gate(trace, f"{branch}/finalize", GateState.ACCEPT)
        actions.append(SubAction("fold_half", "body", LAYER_FINALIZATION))

    return Plan(category=name, actions=tuple(actions)), trace


def replan_after_feedback(previous: Plan, oracle) -> Plan:
    """Drop attribute-layer actions whose part has since reached its target.

    Surviving actions keep their original order; nothing is ever added.
    """
    kept: list[SubAction] = []
    satisfied: dict[str, bool] = {}
    for action in previous.actions:
        if action.layer != LAYER_ATTRIBUTE:
            kept.append(action)
            continue
        part = action.target_part
        if part not in satisfied:
            satisfied[part] = oracle.part_at_target(part)
        if not satisfied[part]:
            kept.append(action)
    return Plan(category=previous.category, actions=tuple(kept))


# ---------------------------------------------------------------------------
# routing evaluation

@dataclass(frozen=True)
class RoutingCase:
    name: str
    answers: dict[str, str]
    expected: tuple[tuple[str, str], ...]


@dataclass
class CaseResult:
    name: str
    passed: bool
    expected: list[tuple[str, str]]
    actual: list[tuple[str, str]]
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "expected": [list(p) for p in self.expected],
            "actual": [list(p) for p in self.actual],
            "error": self.error,
        }


@dataclass
class RoutingReport:
    accuracy: float
    n_cases: int
    results: list[CaseResult]
    warning: str | None = None

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "n_cases": self.n_cases,
            "results": [r.to_dict() for r in self.results],
            "warning": self.warning,
        }


def evaluate_routing(registry: CategoryRegistry, cases) -> RoutingReport:
    """Compare planner output against expected sequences for scripted cases."""
    results: list[CaseResult] = []
    for case in cases:
        expected = list(case.expected)
        try:
            produced, _trace = plan(ScriptedOracle(case.answers), registry)
            actual = produced.pairs()
            results.append(
                CaseResult(case.name, passed=actual == expected, expected=expected, actual=actual)
            )
        except Exception as exc:  # a failing case must not sink the report
            results.append(
                CaseResult(case.name, passed=False, expected=expected, actual=[], error=str(exc))
            )
    if not results:
        return RoutingReport(accuracy=1.0, n_cases=0, results=[], warning="no cases supplied")
    accuracy = sum(r.passed for r in results) / len(results)
    return RoutingReport(accuracy=accuracy, n_cases=len(results), results=results)
