"""Prompt parsing, graph-based prompt similarity and greedy user grouping."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import networkx as nx

from .diffusion import Condition
from .tomlio import TomlError, load_toml, loads_toml

GRAPH_SCHEMA_VERSION = 1
POLICIES = ("leader", "union")
_WORD = re.compile(r"[a-z0-9]+")


class GraphError(ValueError):
    pass


class UnschedulablePrompt(ValueError):
    pass


@dataclass(frozen=True)
class ConceptGraph:
    """Undirected unit-weight concept graph plus a word -> concept lexicon."""

    nodes: Mapping[str, str]
    edges: frozenset
    lexicon: Mapping[str, str]

    def __post_init__(self):
        object.__setattr__(self, "nodes", MappingProxyType(dict(self.nodes)))
        object.__setattr__(self, "lexicon", MappingProxyType({k.lower(): v for k, v in self.lexicon.items()}))
        edges = set()
        for e in self.edges:
            pair = tuple(e)
            if len(pair) != 2 or pair[0] == pair[1]:
                raise GraphError(f"self-loop or malformed edge {pair}")
            a, b = pair
            for end in (a, b):
                if end not in self.nodes:
                    raise GraphError(f"edge {a}-{b} references missing node {end!r}")
            edges.add(frozenset((a, b)))
        object.__setattr__(self, "edges", frozenset(edges))
        for word, cid in self.lexicon.items():
            if cid not in self.nodes:
                raise GraphError(f"lexicon word {word!r} maps to missing node {cid!r}")

    @cached_property
    def _distances(self) -> dict:
        g = nx.Graph()
        g.add_nodes_from(self.nodes)
        g.add_edges_from(tuple(e) for e in self.edges)
        return dict(nx.all_pairs_shortest_path_length(g))

    def distance(self, a: str, b: str) -> float:
        """Hop count between two concepts, ``inf`` when disconnected."""
        return self._distances.get(a, {}).get(b, math.inf)

    def neighbors(self, node: str) -> list[str]:
        return sorted(n for e in self.edges if node in e for n in e if n != node)


def _graph_from_mapping(doc: Mapping, origin: str) -> ConceptGraph:
    version = doc.get("schema_version")
    if version != GRAPH_SCHEMA_VERSION:
        raise GraphError(f"{origin}: unsupported graph schema_version {version!r}")
    extra = set(doc) - {"schema_version", "nodes", "edges", "lexicon"}
    if extra:
        raise GraphError(f"{origin}: unknown keys {sorted(extra)}")
    nodes = doc.get("nodes", {})
    if isinstance(nodes, list):
        nodes = {n: n for n in nodes}
    edges = [tuple(e) for e in doc.get("edges", [])]
    return ConceptGraph(nodes, edges, doc.get("lexicon", {}))


def load_graph(path: str | Path) -> ConceptGraph:
    try:
        doc = load_toml(path)
    except TomlError as exc:
        raise GraphError(str(exc)) from None
    return _graph_from_mapping(doc, str(path))


def default_graph() -> ConceptGraph:
    text = resources.files("codiff").joinpath("data/default_graph.toml").read_text()
    return _graph_from_mapping(loads_toml(text), "default graph")


def dump_graph(graph: ConceptGraph) -> str:
    """Serialize in the same schema :func:`load_graph` reads."""
    lines = [f"schema_version = {GRAPH_SCHEMA_VERSION}", "", "edges = ["]
    for a, b in sorted(tuple(sorted(e)) for e in graph.edges):
        lines.append(f'    ["{a}", "{b}"],')
    lines += ["]", "", "[nodes]"]
    lines += [f'{n} = "{label}"' for n, label in graph.nodes.items()]
    lines += ["", "[lexicon]"]
    lines += [f'{w} = "{c}"' for w, c in sorted(graph.lexicon.items())]
    return "\n".join(lines) + "\n"


def add_concept(graph: ConceptGraph, node: str, edges: Iterable[str], label: str | None = None,
                words: Iterable[str] = ()) -> ConceptGraph:
    """Return a new graph with ``node`` linked to each of ``edges``."""
    if node in graph.nodes:
        raise GraphError(f"concept {node!r} already exists")
    targets = list(edges)
    for t in targets:
        if t not in graph.nodes:
            raise GraphError(f"edge to missing concept {t!r}")
    nodes = dict(graph.nodes)
    nodes[node] = label or node
    lexicon = dict(graph.lexicon)
    for w in words:
        lexicon[w.lower()] = node
    return ConceptGraph(nodes, graph.edges | {frozenset((node, t)) for t in targets}, lexicon)


@dataclass(frozen=True)
class PromptSpec:
    text: str
    concepts: tuple[str, ...]
    owner: str = ""


def parse_prompt(text: str, graph: ConceptGraph, owner: str = "") -> PromptSpec:
    if not text or not text.strip():
        raise UnschedulablePrompt("empty prompt")
    found = []
    for word in _WORD.findall(text.lower()):
        cid = graph.lexicon.get(word)
        if cid is not None and cid not in found:
            found.append(cid)
    if not found:
        raise UnschedulablePrompt(f"no known concept in prompt {text!r}")
    return PromptSpec(text, tuple(found), owner)


def _best_match_mean(a: Sequence[str], b: Sequence[str], graph: ConceptGraph) -> float:
    total = 0.0
    for ca in a:
        total += max(1.0 / (1.0 + graph.distance(ca, cb)) for cb in b)
    return total / len(a)


def similarity(a: PromptSpec, b: PromptSpec, graph: ConceptGraph) -> float:
    """Symmetrised mean of best-match inverse hop distances, in [0, 1]."""
    return 0.5 * (_best_match_mean(a.concepts, b.concepts, graph)
                  + _best_match_mean(b.concepts, a.concepts, graph))


def shared_condition(group: Sequence[PromptSpec], policy: str = "leader", background: float = 0.0) -> Condition:
    if not group:
        raise ValueError("cannot build a shared condition for an empty group")
    if policy == "leader":
        return Condition(group[0].concepts, background=background)
    if policy == "union":
        merged = []
        for p in group:
            merged += [c for c in p.concepts if c not in merged]
        return Condition(tuple(merged), background=background)
    raise ValueError(f"unknown shared-condition policy {policy!r}; expected one of {POLICIES}")


def prompt_condition(prompt: PromptSpec, background: float = 0.0) -> Condition:
    return Condition(prompt.concepts, background=background)


@dataclass(frozen=True)
class ClusterAssignment:
    groups: tuple[tuple[str, ...], ...]
    leaders: tuple[str, ...]
    conditions: tuple[Condition, ...]
    prompts: Mapping[str, PromptSpec] = field(default_factory=dict)

    def __post_init__(self):
        seen = [u for g in self.groups for u in g]
        if len(seen) != len(set(seen)):
            raise ValueError("groups overlap")
        for g, leader in zip(self.groups, self.leaders):
            if leader not in g:
                raise ValueError(f"leader {leader!r} not in its group")

    @property
    def users(self) -> tuple[str, ...]:
        return tuple(u for g in self.groups for u in g)


def _assignment(groups: list[list[PromptSpec]], policy: str, background: float) -> ClusterAssignment:
    return ClusterAssignment(
        tuple(tuple(p.owner for p in g) for g in groups),
        tuple(g[0].owner for g in groups),
        tuple(shared_condition(g, policy, background) for g in groups),
        MappingProxyType({p.owner: p for g in groups for p in g}),
    )


def cluster(prompts: Sequence[PromptSpec], threshold: float, graph: ConceptGraph,
            policy: str = "leader", background: float = 0.0) -> ClusterAssignment:
    """Greedy leader clustering in input order.

    A prompt joins the first open group whose leader it resembles at least
    ``threshold``; otherwise it starts a new group.
    """
    if not 0.0 <= threshold or math.isnan(threshold):
        raise ValueError("threshold must be a non-negative number")
    owners = [p.owner for p in prompts]
    if len(set(owners)) != len(owners):
        raise ValueError("prompt owners must be unique")
    remaining = list(prompts)
    groups = []
    while remaining:
        leader = remaining.pop(0)
        members = [leader]
        for p in list(remaining):
            if similarity(p, leader, graph) >= threshold:
                members.append(p)
                remaining.remove(p)
        groups.append(members)
    return _assignment(groups, policy, background)


def single_group(prompts: Sequence[PromptSpec], policy: str = "leader", background: float = 0.0) -> ClusterAssignment:
    """Force every prompt into one group, bypassing similarity."""
    return _assignment([list(prompts)], policy, background)
