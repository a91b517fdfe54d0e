"""Group overlays: the ranked complete DAG and rooted trees.

Groups are plain ints. In a C-DAG the int is the group's rank; in a tree it is
an index into the region list the tree was built over.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

GroupId = int


class OverlayError(ValueError):
    pass


def _check_dst(dst: Iterable[GroupId]) -> frozenset[GroupId]:
    dst = frozenset(dst)
    if not dst:
        raise OverlayError("empty destination set")
    return dst


@dataclass(frozen=True)
class CDagOverlay:
    """Complete DAG over ``n`` ranked groups; edge i -> j for every i < j."""

    n: int
    region_name: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.region_name:
            object.__setattr__(self, "region_name", tuple(f"g{i}" for i in range(self.n)))

    @property
    def groups(self) -> range:
        return range(self.n)

    def edges(self) -> Iterable[tuple[GroupId, GroupId]]:
        return ((i, j) for i in range(self.n) for j in range(i + 1, self.n))

    def _check(self, g: GroupId) -> None:
        if not 0 <= g < self.n:
            raise OverlayError(f"group {g} outside 0..{self.n - 1}")

    def lca(self, dst: Iterable[GroupId]) -> GroupId:
        dst = _check_dst(dst)
        for g in dst:
            self._check(g)
        return min(dst)

    def ancestors(self, g: GroupId) -> frozenset[GroupId]:
        self._check(g)
        return frozenset(range(g))

    def descendants(self, g: GroupId) -> frozenset[GroupId]:
        self._check(g)
        return frozenset(range(g + 1, self.n))

    def validate(self) -> None:
        if self.n < 1:
            raise OverlayError("overlay needs at least one group")
        if len(self.region_name) != self.n:
            raise OverlayError("region_name length differs from group count")
        if len(set(self.region_name)) != self.n:
            raise OverlayError("duplicate region names")


def dag_lca(dst: Iterable[GroupId]) -> GroupId:
    """Lowest-ranked destination."""
    return min(_check_dst(dst))


@dataclass(frozen=True)
class TreeOverlay:
    """Rooted tree given by parent links (``None`` marks the root)."""

    parent: tuple[GroupId | None, ...]
    region_name: tuple[str, ...] = ()
    _depth: tuple[int, ...] = field(default=(), repr=False, compare=False)
    _children: tuple[tuple[GroupId, ...], ...] = field(default=(), repr=False, compare=False)

    def __post_init__(self) -> None:
        n = len(self.parent)
        if not self.region_name:
            object.__setattr__(self, "region_name", tuple(f"g{i}" for i in range(n)))
        self.validate()
        children: list[list[GroupId]] = [[] for _ in range(n)]
        for c, p in enumerate(self.parent):
            if p is not None:
                children[p].append(c)
        depth = [0] * n
        order = [self.root]
        for g in order:
            for c in children[g]:
                depth[c] = depth[g] + 1
                order.append(c)
        object.__setattr__(self, "_children", tuple(tuple(c) for c in children))
        object.__setattr__(self, "_depth", tuple(depth))

    @property
    def n(self) -> int:
        return len(self.parent)

    @property
    def groups(self) -> range:
        return range(self.n)

    @property
    def root(self) -> GroupId:
        return next(g for g, p in enumerate(self.parent) if p is None)

    def children(self, g: GroupId) -> tuple[GroupId, ...]:
        return self._children[g]

    def depth(self, g: GroupId) -> int:
        return self._depth[g]

    def is_leaf(self, g: GroupId) -> bool:
        return not self._children[g]

    def path_to_root(self, g: GroupId) -> list[GroupId]:
        path = [g]
        while self.parent[path[-1]] is not None:
            path.append(self.parent[path[-1]])
        return path

    def subtree(self, g: GroupId) -> frozenset[GroupId]:
        out, stack = set(), [g]
        while stack:
            x = stack.pop()
            out.add(x)
            stack.extend(self._children[x])
        return frozenset(out)

    def lca(self, dst: Iterable[GroupId]) -> GroupId:
        return tree_lca(self, dst)

    def validate(self) -> None:
        n = len(self.parent)
        if n < 1:
            raise OverlayError("overlay needs at least one group")
        if len(self.region_name) != n:
            raise OverlayError("region_name length differs from group count")
        roots = [g for g, p in enumerate(self.parent) if p is None]
        if not roots:
            raise OverlayError("no root (every group has a parent): cycle")
        if len(roots) > 1:
            raise OverlayError(f"multiple roots: {roots}")
        for g, p in enumerate(self.parent):
            if p is not None and not 0 <= p < n:
                raise OverlayError(f"group {g} has unknown parent {p}")
        for g in range(n):
            seen = {g}
            x = self.parent[g]
            while x is not None:
                if x in seen:
                    raise OverlayError(f"cycle through group {x}")
                seen.add(x)
                x = self.parent[x]


def tree_lca(tree: TreeOverlay, dst: Iterable[GroupId]) -> GroupId:
    """Deepest node that is an ancestor-or-self of every destination."""
    dst = _check_dst(dst)
    it = iter(dst)
    common = set(tree.path_to_root(next(it)))
    for g in it:
        common.intersection_update(tree.path_to_root(g))
    return max(common, key=tree.depth)


def validate(overlay: CDagOverlay | TreeOverlay) -> None:
    overlay.validate()


def tree_from_pairs(regions: Sequence[str], pairs: Mapping[str, str | None]) -> TreeOverlay:
    """Build a tree over ``regions`` from a child -> parent name mapping."""
    index = {r: i for i, r in enumerate(regions)}
    missing = set(regions) - set(pairs)
    if missing:
        raise OverlayError(f"regions without a tree entry: {sorted(missing)}")
    parent: list[GroupId | None] = [None] * len(regions)
    for child, par in pairs.items():
        if child not in index:
            raise OverlayError(f"unknown region {child!r}")
        if par is not None:
            if par not in index:
                raise OverlayError(f"unknown parent region {par!r}")
            parent[index[child]] = index[par]
    return TreeOverlay(tuple(parent), tuple(regions))


# --- files -----------------------------------------------------------------
#
# [cdag]               [tree]
# eu-central-1         eu-central-1
# eu-west-1            eu-west-1 eu-central-1
# ...                  us-east-1 eu-central-1
#
# A C-DAG section lists regions lowest rank first. A tree section lists
# ``child parent`` pairs; a line holding a single name is the root.


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(allow_no_value=True, delimiters=("=",), comment_prefixes=("#", ";"))
    cp.optionxform = str  # keep region-name case
    return cp


def parse_overlay(text: str, regions: Sequence[str] | None = None) -> CDagOverlay | TreeOverlay:
    cp = _parser()
    cp.read_string(text)
    if cp.has_section("cdag"):
        names = tuple(cp.options("cdag"))
        ov = CDagOverlay(len(names), names)
        ov.validate()
        return ov
    if cp.has_section("tree"):
        pairs: dict[str, str | None] = {}
        order: list[str] = []
        for line in cp.options("tree"):
            parts = line.split()
            if len(parts) == 1:
                pairs[parts[0]] = None
            elif len(parts) == 2:
                pairs[parts[0]] = parts[1]
            else:
                raise OverlayError(f"bad tree line {line!r}")
            order.append(parts[0])
        return tree_from_pairs(list(regions) if regions is not None else order, pairs)
    raise OverlayError("overlay file needs a [cdag] or [tree] section")


def format_overlay(overlay: CDagOverlay | TreeOverlay) -> str:
    if isinstance(overlay, CDagOverlay):
        return "[cdag]\n" + "".join(f"{r}\n" for r in overlay.region_name)
    lines = ["[tree]"]
    for g, p in enumerate(overlay.parent):
        name = overlay.region_name[g]
        lines.append(name if p is None else f"{name} {overlay.region_name[p]}")
    return "\n".join(lines) + "\n"


def load_overlay(path: str | Path, regions: Sequence[str] | None = None) -> CDagOverlay | TreeOverlay:
    return parse_overlay(Path(path).read_text(), regions)


# --- presets ---------------------------------------------------------------
#
# Transcribed by hand from published overlay drawings; approximate. Region numbering
# 1..12 follows the drawn labels, mapped onto AWS regions west to east.

AWS12 = (
    "us-west-2",       # 1
    "us-west-1",       # 2
    "ca-central-1",    # 3
    "us-east-2",       # 4
    "us-east-1",       # 5
    "sa-east-1",       # 6
    "eu-west-1",       # 7
    "eu-central-1",    # 8
    "ap-south-1",      # 9
    "ap-southeast-1",  # 10
    "ap-northeast-1",  # 11
    "ap-southeast-2",  # 12
)

def _by_label(pairs: dict[int, int | None]) -> dict[str, str | None]:
    return {AWS12[c - 1]: (None if p is None else AWS12[p - 1]) for c, p in pairs.items()}


# T1: Europe root with America (5) and Asia (9) subtree roots.
TREE_PRESETS: dict[str, dict[str, str | None]] = {
    "t1": _by_label({8: None, 7: 8, 5: 8, 9: 8, 4: 5, 3: 5, 6: 5, 2: 5, 1: 2, 10: 9, 11: 9, 12: 9}),
    # T2: two disjoint subtrees under 5 and 7, root 8.
    "t2": _by_label({8: None, 5: 8, 7: 8, 1: 5, 2: 5, 3: 5, 4: 5, 6: 5, 9: 7, 10: 7, 11: 7, 12: 7}),
    # T3: star rooted at 6.
    "t3": _by_label({6: None, **{i: 6 for i in range(1, 13) if i != 6}}),
}

# C-DAG presets are greedy nearest-neighbour chains over the latency matrix
# starting at the given region label.
CDAG_START = {"o1": 8, "o2": 1}


def nearest_neighbour_chain(regions: Sequence[str], latency, start: str) -> tuple[str, ...]:
    """Start at ``start``; repeatedly append the closest unused region to the last one."""
    index = {r: i for i, r in enumerate(regions)}
    chain = [start]
    left = set(regions) - {start}
    while left:
        last = index[chain[-1]]
        nxt = min(left, key=lambda r: (latency[last][index[r]], index[r]))
        chain.append(nxt)
        left.remove(nxt)
    return tuple(chain)


def preset(name: str, regions: Sequence[str], latency) -> CDagOverlay | TreeOverlay:
    """Named overlay (o1, o2, t1, t2, t3) over the given matrix regions."""
    name = name.lower()
    if name in CDAG_START:
        start = AWS12[CDAG_START[name] - 1]
        if start not in regions:
            raise OverlayError(f"preset {name} needs region {start}")
        chain = nearest_neighbour_chain(regions, latency, start)
        return CDagOverlay(len(chain), chain)
    if name in TREE_PRESETS:
        return tree_from_pairs(regions, TREE_PRESETS[name])
    raise OverlayError(f"unknown overlay preset {name!r}")


PRESET_NAMES = tuple(CDAG_START) + tuple(TREE_PRESETS)
