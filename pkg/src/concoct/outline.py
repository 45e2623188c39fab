"""Hierarchical outline data model.

An outline is a premise plus a forest of plot points.  Node ids are dotted
paths: top-level points are "1", "2", ...; the k-th child of node "3.2" is
"3.2.k".  The premise acts as a pseudo-leaf with id "" until the first
expansion attaches top-level points.  Outline values are immutable; every
mutation returns a new value.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field
from typing import Any, Iterator, Sequence

from .errors import FormatError, ValidationError

PREMISE_ID = ""

_ID_PATTERN = re.compile(r"^[1-9]\d*(\.[1-9]\d*)*$")


@dataclass(frozen=True)
class OutlineNode:
    """One plot point: a dotted-path id, its text, and its characters."""

    id: str
    main_plot: str
    characters: tuple[str, ...] = ()
    children: tuple["OutlineNode", ...] = ()


@dataclass(frozen=True)
class Outline:
    """A premise with a forest of plot points and run metadata."""

    premise: str
    roots: tuple[OutlineNode, ...] = ()
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def premise_node(self) -> OutlineNode:
        """The premise viewed as a pseudo-leaf, used before any expansion."""
        return OutlineNode(id=PREMISE_ID, main_plot=self.premise)


def node_depth(node_id: str) -> int:
    """Depth of a node id: "" is 0, "3" is 1, "3.2" is 2."""
    if node_id == PREMISE_ID:
        return 0
    return node_id.count(".") + 1


def child_id(parent_id: str, position: int) -> str:
    """Id of the child at 1-based ``position`` under ``parent_id``."""
    if position < 1:
        raise ValidationError(f"child position must be >= 1, got {position}")
    if parent_id == PREMISE_ID:
        return str(position)
    return f"{parent_id}.{position}"


def iter_nodes(outline: Outline) -> Iterator[OutlineNode]:
    """All nodes in depth-first, left-to-right order."""
    stack = list(reversed(outline.roots))
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(node.children))


def leaves(outline: Outline) -> tuple[OutlineNode, ...]:
    """Current leaves in depth-first order.

    An outline with no points yet has a single pseudo-leaf carrying the
    premise, so expansion always has a target.
    """
    if not outline.roots:
        return (outline.premise_node,)
    return tuple(node for node in iter_nodes(outline) if not node.children)


def find_node(outline: Outline, node_id: str) -> OutlineNode | None:
    """The node with ``node_id``, or the premise pseudo-leaf for id ""."""
    if node_id == PREMISE_ID:
        return outline.premise_node
    for node in iter_nodes(outline):
        if node.id == node_id:
            return node
    return None


def _replace_node(node: OutlineNode, target_id: str, children: tuple[OutlineNode, ...]) -> OutlineNode:
    if node.id == target_id:
        return OutlineNode(node.id, node.main_plot, node.characters, children)
    if not target_id.startswith(node.id + "."):
        return node
    new_children = tuple(_replace_node(c, target_id, children) for c in node.children)
    return OutlineNode(node.id, node.main_plot, node.characters, new_children)


def attach_children(
    outline: Outline,
    parent_id: str,
    children: Sequence[tuple[str, Sequence[str]]],
) -> Outline:
    """Return a new outline with ``children`` attached under ``parent_id``.

    Parameters
    ----------
    children:
        (main_plot, characters) pairs in order; ids are assigned as
        consecutive positions under the parent.
    """
    if not children:
        raise ValidationError("attach_children requires at least one child")
    parent = find_node(outline, parent_id)
    if parent is None:
        raise ValidationError(f"no node with id {parent_id!r}")
    if parent.children:
        raise ValidationError(f"node {parent_id!r} already has children")
    nodes = tuple(
        OutlineNode(child_id(parent_id, k), plot, tuple(chars))
        for k, (plot, chars) in enumerate(children, start=1)
    )
    if parent_id == PREMISE_ID:
        return Outline(outline.premise, nodes, outline.metadata)
    new_roots = tuple(_replace_node(r, parent_id, nodes) for r in outline.roots)
    return Outline(outline.premise, new_roots, outline.metadata)


def with_metadata(outline: Outline, metadata: dict[str, Any]) -> Outline:
    """Return a copy of ``outline`` with ``metadata`` replaced."""
    return Outline(outline.premise, outline.roots, dict(metadata))


def flatten_leaves(
    outline: Outline, max_items: int | None = None, rng: random.Random | None = None
) -> list[str]:
    """Leaf texts in depth-first order, optionally truncated.

    When the outline has more than ``max_items`` leaves, a contiguous run of
    ``max_items`` leaves starting at a seeded random offset is returned, so
    downstream consumers see a representative slice rather than a prefix.
    """
    texts = [leaf.main_plot for leaf in leaves(outline)]
    if max_items is None or len(texts) <= max_items:
        return texts
    if max_items < 1:
        raise ValidationError(f"max_items must be >= 1, got {max_items}")
    if rng is None:
        raise ValidationError("rng is required when truncating leaves")
    start = rng.randrange(len(texts) - max_items + 1)
    return texts[start : start + max_items]


def _node_to_json(node: OutlineNode) -> dict[str, Any]:
    return {
        "id": node.id,
        "main_plot": node.main_plot,
        "characters": list(node.characters),
        "children": [_node_to_json(c) for c in node.children],
    }


def serialize(outline: Outline) -> str:
    """Canonical JSON for an outline: premise, roots, metadata; 2-space indent."""
    doc = {
        "premise": outline.premise,
        "roots": [_node_to_json(r) for r in outline.roots],
        "metadata": outline.metadata,
    }
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def _node_from_json(obj: Any, path: str, expected_id: str) -> OutlineNode:
    if not isinstance(obj, dict):
        raise FormatError(f"{path}: expected an object, got {type(obj).__name__}")
    for key in ("id", "main_plot", "characters", "children"):
        if key not in obj:
            raise FormatError(f"{path}: missing {key}")
    node_id = obj["id"]
    if not isinstance(node_id, str) or not _ID_PATTERN.match(node_id):
        raise FormatError(f"{path}: malformed id {node_id!r}")
    if node_id != expected_id:
        raise FormatError(f"{path}: id {node_id!r} does not match position {expected_id!r}")
    if not isinstance(obj["main_plot"], str) or not obj["main_plot"]:
        raise FormatError(f"{path}: main_plot must be a non-empty string")
    chars = obj["characters"]
    if not isinstance(chars, list) or any(not isinstance(c, str) for c in chars):
        raise FormatError(f"{path}: characters must be a list of strings")
    kids = obj["children"]
    if not isinstance(kids, list):
        raise FormatError(f"{path}: children must be a list")
    children = tuple(
        _node_from_json(kid, f"{path}.children[{i}]", child_id(node_id, i + 1))
        for i, kid in enumerate(kids)
    )
    return OutlineNode(node_id, obj["main_plot"], tuple(chars), children)


def deserialize(text: str) -> Outline:
    """Parse outline JSON, naming the offending path on any format error."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"outline is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise FormatError("outline document must be a JSON object")
    for key in ("premise", "roots", "metadata"):
        if key not in doc:
            raise FormatError(f"outline document missing {key}")
    if not isinstance(doc["premise"], str):
        raise FormatError("premise must be a string")
    if not isinstance(doc["roots"], list):
        raise FormatError("roots must be a list")
    if not isinstance(doc["metadata"], dict):
        raise FormatError("metadata must be an object")
    roots = tuple(
        _node_from_json(obj, f"roots[{i}]", str(i + 1)) for i, obj in enumerate(doc["roots"])
    )
    return Outline(doc["premise"], roots, doc["metadata"])
