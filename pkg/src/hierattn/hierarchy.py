"""Label taxonomy modeled as a rooted tree with a level function.

The tree hangs under an implicit virtual root named ``root`` which is never a
classification target. A label's level is its distance from that root, so top
labels sit at level 1. Label sets attached to documents must be closed under
the ancestor rule: carrying a label implies carrying all of its ancestors.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from .errors import (
    CycleError,
    LevelOutOfRange,
    MultiParentError,
    OrphanError,
    ParseError,
    UnknownLabelError,
)

ROOT = "root"


@dataclass(frozen=True)
class LabelHierarchy:
    """Validated label tree.

    ``labels`` and each ``per_level`` list are ordered by first appearance in
    the edge list; this ordering fixes tensor row indices everywhere
    downstream and must never be perturbed.
    """

    labels: tuple[str, ...]
    parent: dict[str, str]
    levels: dict[str, int]
    per_level: tuple[tuple[str, ...], ...]
    edges: tuple[tuple[str, str], ...] = field(repr=False)

    @property
    def depth(self) -> int:
        return len(self.per_level)

    @property
    def num_labels(self) -> int:
        return len(self.labels)

    def labels_at_level(self, level: int) -> tuple[str, ...]:
        if not 1 <= level <= self.depth:
            raise LevelOutOfRange(
                f"level {level} outside 1..{self.depth}"
            )
        return self.per_level[level - 1]

    def level_sizes(self) -> tuple[int, ...]:
        return tuple(len(ls) for ls in self.per_level)

    def global_label_order(self) -> tuple[str, ...]:
        """All labels, levels ascending, within-level order preserved."""
        return tuple(label for level in self.per_level for label in level)

    def ancestors(self, label: str) -> tuple[str, ...]:
        """Proper ancestors of ``label``, nearest first, root excluded."""
        if label not in self.parent:
            raise UnknownLabelError(f"unknown label: {label!r}")
        out = []
        node = self.parent[label]
        while node != ROOT:
            out.append(node)
            node = self.parent[node]
        return tuple(out)

    def fingerprint(self) -> str:
        """Stable hash of the edge list, for checkpoint compatibility checks."""
        digest = hashlib.sha256()
        for parent, child in self.edges:
            digest.update(parent.encode("utf-8"))
            digest.update(b"\t")
            digest.update(child.encode("utf-8"))
            digest.update(b"\n")
        return digest.hexdigest()


def _check_names(edges):
    for parent, child in edges:
        for name in (parent, child):
            if not isinstance(name, str) or not name:
                raise ParseError(f"empty or non-string label in edge {(parent, child)!r}")
            if "\t" in name:
                raise ParseError(f"label contains a tab character: {name!r}")
        if child == ROOT:
            raise ParseError(f"{ROOT!r} is reserved for the virtual root")


def _check_acyclic(children: dict[str, list[str]]) -> None:
    # Iterative three-color DFS over the directed parent->child edges.
    WHITE, GRAY, BLACK = 0, 1, 2
    color: dict[str, int] = {}
    for start in children:
        if color.get(start, WHITE) != WHITE:
            continue
        stack = [(start, iter(children.get(start, ())))]
        color[start] = GRAY
        while stack:
            node, it = stack[-1]
            advanced = False
            for nxt in it:
                state = color.get(nxt, WHITE)
                if state == GRAY:
                    raise CycleError(f"cycle through label {nxt!r}")
                if state == WHITE:
                    color[nxt] = GRAY
                    stack.append((nxt, iter(children.get(nxt, ()))))
                    advanced = True
                    break
            if not advanced:
                color[node] = BLACK
                stack.pop()


def build_hierarchy(edges) -> LabelHierarchy:
    """Build and validate a :class:`LabelHierarchy` from (parent, child) pairs.

    Levels are assigned by breadth-first traversal from the virtual root and
    per-level label order follows first appearance in ``edges``.

    Raises:
        CycleError: the edge set contains a directed cycle.
        MultiParentError: a child is given two distinct parents.
        OrphanError: a label is unreachable from the root.
        ParseError: reserved or malformed label names.
    """
    edges = [(str(p), str(c)) for p, c in edges]
    _check_names(edges)

    first_seen: dict[str, int] = {}
    children: dict[str, list[str]] = {}
    parent: dict[str, str] = {}
    counter = 0
    for p, c in edges:
        for name in (p, c):
            if name != ROOT and name not in first_seen:
                first_seen[name] = counter
                counter += 1
        if c in parent:
            if parent[c] == p:
                continue  # exact duplicate edge, harmless
            # A repeated child may mean a cycle rather than a diamond; decide
            # after walking the full graph so the cycle diagnosis wins.
            children.setdefault(p, []).append(c)
            _check_acyclic(children)
            raise MultiParentError(
                f"label {c!r} has parents {parent[c]!r} and {p!r}"
            )
        parent[c] = p
        children.setdefault(p, []).append(c)

    _check_acyclic(children)

    if not parent:
        raise ParseError("hierarchy has no edges")

    # BFS from the virtual root assigns levels.
    levels: dict[str, int] = {}
    frontier = [ROOT]
    depth = 0
    while frontier:
        depth += 1
        nxt: list[str] = []
        for node in frontier:
            for child in children.get(node, ()):
                levels[child] = depth
                nxt.append(child)
        frontier = nxt
    depth -= 1  # last iteration found nothing

    unreachable = [l for l in first_seen if l not in levels]
    if unreachable:
        unreachable.sort(key=first_seen.__getitem__)
        raise OrphanError(f"labels unreachable from {ROOT!r}: {unreachable}")

    ordered = sorted(first_seen, key=first_seen.__getitem__)
    per_level = tuple(
        tuple(l for l in ordered if levels[l] == h) for h in range(1, depth + 1)
    )
    return LabelHierarchy(
        labels=tuple(ordered),
        parent=parent,
        levels=levels,
        per_level=per_level,
        edges=tuple(edges),
    )


def ancestor_closure(members, hier: LabelHierarchy) -> frozenset[str]:
    """Smallest superset of ``members`` closed under the ancestor rule.

    The virtual root is never included. Raises UnknownLabelError for members
    absent from ``hier``.
    """
    closed: set[str] = set()
    for label in members:
        if label not in hier.parent:
            raise UnknownLabelError(f"unknown label: {label!r}")
        closed.add(label)
        closed.update(hier.ancestors(label))
    return frozenset(closed)


def labels_at_level(hier: LabelHierarchy, level: int) -> tuple[str, ...]:
    """Labels at ``level`` in their fixed per-level order."""
    return hier.labels_at_level(level)


def parse_hierarchy_file(path) -> list[tuple[str, str]]:
    """Read ``parent<TAB>child`` edges; ``#`` comments and blank lines skipped."""
    edges: list[tuple[str, str]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise ParseError(f"{path}:{lineno}: expected 'parent<TAB>child', got {line!r}")
            edges.append((parts[0], parts[1]))
    if not edges:
        raise ParseError(f"{path}: no edges found")
    return edges


def load_hierarchy(path) -> LabelHierarchy:
    return build_hierarchy(parse_hierarchy_file(path))
