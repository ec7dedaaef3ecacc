"""Water distribution network topology, sensor placement, and protected groups."""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .configio import ConfigError, parse_int_list, read_key_values

log = logging.getLogger(__name__)

_KNOWN_SECTIONS = {"JUNCTIONS", "RESERVOIRS", "PIPES", "COORDINATES"}


class NetworkError(ValueError):
    """Raised when a network definition is inconsistent."""


class ParseError(NetworkError):
    """Raised for malformed network file content."""


@dataclass(frozen=True)
class Node:
    """A demand junction (SI units: meters, cubic meters per second)."""

    id: int
    elevation: float
    base_demand: float

    def __post_init__(self) -> None:
        if self.id <= 0:
            raise NetworkError(f"junction id must be positive, got {self.id}")
        if self.base_demand < 0:
            raise NetworkError(f"junction {self.id}: base demand must be nonnegative")


@dataclass(frozen=True)
class Reservoir:
    """A fixed-head source node."""

    id: int
    head: float

    def __post_init__(self) -> None:
        if self.id <= 0:
            raise NetworkError(f"reservoir id must be positive, got {self.id}")


@dataclass(frozen=True)
class Pipe:
    """A pipe with Hazen-Williams roughness C."""

    id: int
    from_node: int
    to_node: int
    length: float
    diameter: float
    roughness: float

    def __post_init__(self) -> None:
        if self.id <= 0:
            raise NetworkError(f"pipe id must be positive, got {self.id}")
        if self.length <= 0 or self.diameter <= 0 or self.roughness <= 0:
            raise NetworkError(
                f"pipe {self.id}: length, diameter and roughness must be positive"
            )


@dataclass(frozen=True)
class Network:
    """An immutable junction/pipe/reservoir graph."""

    name: str
    nodes: tuple[Node, ...]
    pipes: tuple[Pipe, ...]
    reservoirs: tuple[Reservoir, ...]

    def __post_init__(self) -> None:
        self._validate()

    def _validate(self) -> None:
        if not self.reservoirs:
            raise NetworkError(f"network {self.name!r}: at least one reservoir required")
        seen: set[int] = set()
        for nid in [n.id for n in self.nodes] + [r.id for r in self.reservoirs]:
            if nid in seen:
                raise NetworkError(f"network {self.name!r}: duplicate node id {nid}")
            seen.add(nid)
        pipe_ids: set[int] = set()
        for pipe in self.pipes:
            if pipe.id in pipe_ids:
                raise NetworkError(f"network {self.name!r}: duplicate pipe id {pipe.id}")
            pipe_ids.add(pipe.id)
            for endpoint in (pipe.from_node, pipe.to_node):
                if endpoint not in seen:
                    raise NetworkError(
                        f"pipe {pipe.id} references unknown node {endpoint}"
                    )
        self._check_connected(seen)

    def _check_connected(self, all_ids: set[int]) -> None:
        adjacency: dict[int, list[int]] = {nid: [] for nid in all_ids}
        for pipe in self.pipes:
            adjacency[pipe.from_node].append(pipe.to_node)
            adjacency[pipe.to_node].append(pipe.from_node)
        start = self.reservoirs[0].id
        seen = {start}
        queue = deque([start])
        while queue:
            current = queue.popleft()
            for neighbor in adjacency[current]:
                if neighbor not in seen:
                    seen.add(neighbor)
                    queue.append(neighbor)
        unreachable = sorted(all_ids - seen)
        if unreachable:
            raise NetworkError(
                f"network {self.name!r} is disconnected; unreachable nodes {unreachable}"
            )

    @property
    def junction_ids(self) -> tuple[int, ...]:
        return tuple(n.id for n in self.nodes)

    @property
    def node_count(self) -> int:
        """Junctions plus reservoirs."""
        return len(self.nodes) + len(self.reservoirs)

    def junction(self, node_id: int) -> Node:
        for node in self.nodes:
            if node.id == node_id:
                return node
        raise NetworkError(f"no junction with id {node_id}")


def _tokens(line: str) -> list[str]:
    return line.split(";", 1)[0].split()


def parse_inp(text: str, name: str = "network") -> Network:
    """Parse the supported INP subset into a :class:`Network`.

    Recognized sections: [JUNCTIONS] (id, elevation, demand), [RESERVOIRS]
    (id, head), [PIPES] (id, from, to, length, diameter, roughness) and
    [COORDINATES] (read and discarded). Extra trailing columns are ignored,
    ``;`` starts a comment, unknown sections are skipped with a warning.
    """
    nodes: list[Node] = []
    reservoirs: list[Reservoir] = []
    pipes: list[Pipe] = []
    section: str | None = None
    warned: set[str] = set()

    for lineno, raw in enumerate(text.splitlines(), start=1):
        tokens = _tokens(raw)
        if not tokens:
            continue
        if tokens[0].startswith("["):
            header = " ".join(tokens)
            if not header.endswith("]"):
                raise ParseError(f"line {lineno}: malformed section header {raw.strip()!r}")
            section = header[1:-1].strip().upper()
            if section not in _KNOWN_SECTIONS and section not in warned:
                log.warning("ignoring unknown INP section [%s]", section)
                warned.add(section)
            continue
        if section is None:
            raise ParseError(f"line {lineno}: data before any section header")
        if section not in _KNOWN_SECTIONS:
            continue
        try:
            if section == "JUNCTIONS":
                if len(tokens) < 3:
                    raise ValueError("expected: id elevation demand")
                nodes.append(Node(int(tokens[0]), float(tokens[1]), float(tokens[2])))
            elif section == "RESERVOIRS":
                if len(tokens) < 2:
                    raise ValueError("expected: id head")
                reservoirs.append(Reservoir(int(tokens[0]), float(tokens[1])))
            elif section == "PIPES":
                if len(tokens) < 6:
                    raise ValueError("expected: id from to length diameter roughness")
                pipes.append(
                    Pipe(
                        int(tokens[0]),
                        int(tokens[1]),
                        int(tokens[2]),
                        float(tokens[3]),
                        float(tokens[4]),
                        float(tokens[5]),
                    )
                )
            else:  # COORDINATES: presence checked, values unused
                if len(tokens) < 3:
                    raise ValueError("expected: id x y")
                float(tokens[1]), float(tokens[2])
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc} in {raw.strip()!r}") from exc

    return Network(name=name, nodes=tuple(nodes), pipes=tuple(pipes), reservoirs=tuple(reservoirs))


def parse_inp_file(path: str | Path) -> Network:
    path = Path(path)
    return parse_inp(path.read_text(), name=path.stem)


def serialize_inp(net: Network) -> str:
    """Render a network back to the INP subset. Round-trips exactly."""
    lines = ["[RESERVOIRS]"]
    lines += [f"{r.id} {r.head!r}" for r in net.reservoirs]
    lines.append("")
    lines.append("[JUNCTIONS]")
    lines += [f"{n.id} {n.elevation!r} {n.base_demand!r}" for n in net.nodes]
    lines.append("")
    lines.append("[PIPES]")
    lines += [
        f"{p.id} {p.from_node} {p.to_node} {p.length!r} {p.diameter!r} {p.roughness!r}"
        for p in net.pipes
    ]
    lines.append("")
    return "\n".join(lines)


@dataclass(frozen=True)
class SensorSet:
    """Ordered pressure-sensor node ids; the residual regression needs >= 2."""

    node_ids: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.node_ids) < 2:
            raise NetworkError("at least two sensor nodes required")
        if len(set(self.node_ids)) != len(self.node_ids):
            raise NetworkError(f"sensor ids must be distinct, got {self.node_ids}")

    def __len__(self) -> int:
        return len(self.node_ids)

    def validate_against(self, net: Network) -> None:
        junctions = set(net.junction_ids)
        for nid in self.node_ids:
            if nid not in junctions:
                raise NetworkError(f"sensor node {nid} is not a junction of {net.name!r}")


@dataclass(frozen=True)
class GroupAssignment:
    """Partition of all junctions into protected groups 1..K."""

    group_count: int
    node_to_group: Mapping[int, int]

    def group_of(self, node_id: int) -> int:
        return self.node_to_group[node_id]

    def members(self, group: int) -> tuple[int, ...]:
        return tuple(sorted(n for n, g in self.node_to_group.items() if g == group))


def assign_groups(net: Network, groups: Mapping[int, Sequence[int]]) -> GroupAssignment:
    """Validate a group map {k: node ids} against the network's junctions.

    Groups must be numbered 1..K, be non-empty and disjoint, and cover every
    junction exactly once.
    """
    keys = sorted(groups)
    if keys != list(range(1, len(keys) + 1)):
        raise NetworkError(f"group indices must be 1..K, got {keys}")
    junctions = set(net.junction_ids)
    node_to_group: dict[int, int] = {}
    for k in keys:
        members = list(groups[k])
        if not members:
            raise NetworkError(f"group {k} is empty")
        for nid in members:
            if nid not in junctions:
                raise NetworkError(f"group {k} lists node {nid}, not a junction")
            if nid in node_to_group:
                raise NetworkError(
                    f"node {nid} assigned to both group {node_to_group[nid]} and group {k}"
                )
            node_to_group[nid] = k
    missing = sorted(junctions - set(node_to_group))
    if missing:
        raise NetworkError(f"junctions not assigned to any group: {missing}")
    return GroupAssignment(group_count=len(keys), node_to_group=dict(sorted(node_to_group.items())))


def load_group_config(path: str | Path) -> tuple[dict[int, tuple[int, ...]], SensorSet]:
    """Read a group/sensor config: ``group.<k> = ids`` and ``sensors = ids``."""
    values = read_key_values(path)
    if "sensors" not in values:
        raise ConfigError(f"{path}: missing 'sensors' key")
    sensors = SensorSet(parse_int_list(values["sensors"]))
    groups: dict[int, tuple[int, ...]] = {}
    for key, value in values.items():
        if not key.startswith("group."):
            continue
        suffix = key[len("group."):]
        try:
            index = int(suffix)
        except ValueError as exc:
            raise ConfigError(f"{path}: bad group key {key!r}") from exc
        groups[index] = parse_int_list(value)
    if not groups:
        raise ConfigError(f"{path}: no 'group.<k>' keys found")
    return groups, sensors
