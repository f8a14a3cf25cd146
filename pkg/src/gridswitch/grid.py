"""Grid data model, validation, and incidence/Laplacian builders.

Buses are kept in file order on the :class:`Grid`, but every matrix in the
package is indexed by the *canonical* order held in :class:`IndexMaps`: the
reference bus (first synchronous/inverter bus in the file), then the other
synchronous/inverter buses, then the load buses, each block in file order.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import jsonschema
import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import DisconnectedGraphError, GridValidationError

DEFAULT_EPSILON = 1e-3


class BusKind(str, enum.Enum):
    LOAD = "load"
    SYNC = "sync"
    INVERTER = "inverter"

    @property
    def is_sf(self) -> bool:
        return self is not BusKind.LOAD


@dataclass(frozen=True)
class Bus:
    id: str
    kind: BusKind
    voltage: float
    damping: float
    p_in: float = 0.0
    disturbance: float = 0.0
    inertia: float | None = None


@dataclass(frozen=True)
class Branch:
    from_bus: str
    to_bus: str
    susceptance: float
    switchable: bool = False
    initially_on: bool = True

    @property
    def id(self) -> str:
        return f"{self.from_bus}-{self.to_bus}"


@dataclass(frozen=True)
class IndexMaps:
    """Bus and edge orderings shared by every matrix builder."""

    order: tuple[str, ...]
    n_sf: int
    edges: tuple[str, ...]
    src: tuple[int, ...]
    dst: tuple[int, ...]
    sf_edges: tuple[int, ...]
    load_edges: tuple[int, ...]
    pos: Mapping[str, int] = field(repr=False)
    edge_pos: Mapping[str, int] = field(repr=False)

    @property
    def ref(self) -> str:
        return self.order[0]

    @property
    def sf(self) -> tuple[str, ...]:
        return self.order[: self.n_sf]

    @property
    def sf_reduced(self) -> tuple[str, ...]:
        return self.order[1 : self.n_sf]

    @property
    def loads(self) -> tuple[str, ...]:
        return self.order[self.n_sf :]

    @property
    def reduced(self) -> tuple[str, ...]:
        return self.order[1:]

    @property
    def n_bus(self) -> int:
        return len(self.order)

    @property
    def n_edges(self) -> int:
        return len(self.edges)


def _finite(x: float) -> bool:
    return isinstance(x, (int, float)) and math.isfinite(x)


@dataclass(frozen=True)
class Grid:
    """Validated structure-preserved grid. Immutable after construction.

    ``w1`` holds one weight per branch (branch order); ``w2`` one weight per
    non-reference synchronous/inverter bus (canonical order).
    """

    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    epsilon: float = DEFAULT_EPSILON
    w1: tuple[float, ...] = ()
    w2: tuple[float, ...] = ()
    index: IndexMaps = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "branches", tuple(self.branches))
        index = _validate(self)
        object.__setattr__(self, "index", index)
        if not self.w1:
            object.__setattr__(self, "w1", (1.0,) * len(self.branches))
        if not self.w2:
            object.__setattr__(self, "w2", (1.0,) * (index.n_sf - 1))
        _validate_weights(self)
        check_connected(self, np.ones(len(self.branches), dtype=bool), "grid graph")

    @classmethod
    def build(
        cls,
        buses: Sequence[Bus],
        branches: Sequence[Branch],
        epsilon: float = DEFAULT_EPSILON,
        w1: Mapping[str, float] | None = None,
        w2: Mapping[str, float] | None = None,
        w1_default: float = 1.0,
        w2_default: float = 1.0,
    ) -> "Grid":
        """Resolve weight defaults and singularly perturb zero-injection loads."""
        if not (_finite(epsilon) and epsilon > 0):
            raise GridValidationError("epsilon must be positive")
        buses = [
            Bus(b.id, b.kind, b.voltage, epsilon, b.p_in, b.disturbance, b.inertia)
            if b.kind is BusKind.LOAD and b.p_in == 0 and b.damping == 0
            else b
            for b in buses
        ]
        w1 = dict(w1 or {})
        w2 = dict(w2 or {})
        w1_vals = []
        for br in branches:
            key = br.id if br.id in w1 else f"{br.to_bus}-{br.from_bus}"
            w1_vals.append(float(w1.pop(key, w1_default)))
        if w1:
            raise GridValidationError(f"w1 refers to unknown branches: {sorted(w1)}")
        sf_ids = [b.id for b in buses if b.kind.is_sf]
        w2_vals = [float(w2.pop(i, w2_default)) for i in sf_ids[1:]]
        if sf_ids and sf_ids[0] in w2:
            raise GridValidationError("w2 must not weight the reference bus")
        if w2:
            raise GridValidationError(f"w2 refers to unknown SF buses: {sorted(w2)}")
        return cls(tuple(buses), tuple(branches), epsilon, tuple(w1_vals), tuple(w2_vals))

    # -- lookup -----------------------------------------------------------

    def bus(self, bus_id: str) -> Bus:
        return self._bus_by_id[bus_id]

    @cached_property
    def _bus_by_id(self) -> dict[str, Bus]:
        return {b.id: b for b in self.buses}

    def edge_index(self, edge_id: str) -> int:
        pos = self.index.edge_pos
        if edge_id in pos:
            return pos[edge_id]
        # ids may contain '-', so also try every split point in reverse
        for k in range(len(edge_id)):
            if edge_id[k] == "-":
                rev = f"{edge_id[k + 1:]}-{edge_id[:k]}"
                if rev in pos:
                    return pos[rev]
        raise KeyError(f"unknown edge {edge_id!r}")

    def edge_mask(self, edges: Iterable[str] | None = None) -> np.ndarray:
        """Boolean mask over branches; ``None`` selects the initially-on set."""
        if edges is None:
            return self.initially_on.copy()
        mask = np.zeros(len(self.branches), dtype=bool)
        for e in edges:
            mask[self.edge_index(e)] = True
        return mask

    def edge_ids(self, mask: np.ndarray) -> list[str]:
        return [e for e, on in zip(self.index.edges, mask) if on]

    # -- canonical-order arrays -------------------------------------------

    def _bus_array(self, attr: str) -> np.ndarray:
        by_id = self._bus_by_id
        vals = [getattr(by_id[i], attr) for i in self.index.order]
        return np.array([np.nan if v is None else v for v in vals], dtype=float)

    @cached_property
    def voltage(self) -> np.ndarray:
        return self._bus_array("voltage")

    @cached_property
    def damping(self) -> np.ndarray:
        return self._bus_array("damping")

    @cached_property
    def inertia(self) -> np.ndarray:
        return self._bus_array("inertia")

    @cached_property
    def p_in(self) -> np.ndarray:
        return self._bus_array("p_in")

    @cached_property
    def disturbance(self) -> np.ndarray:
        return self._bus_array("disturbance")

    @cached_property
    def susceptance(self) -> np.ndarray:
        return np.array([br.susceptance for br in self.branches], dtype=float)

    @cached_property
    def switchable(self) -> np.ndarray:
        return np.array([br.switchable for br in self.branches], dtype=bool)

    @cached_property
    def initially_on(self) -> np.ndarray:
        return np.array([br.initially_on for br in self.branches], dtype=bool)

    @cached_property
    def src(self) -> np.ndarray:
        return np.array(self.index.src, dtype=int)

    @cached_property
    def dst(self) -> np.ndarray:
        return np.array(self.index.dst, dtype=int)

    @cached_property
    def w1_array(self) -> np.ndarray:
        return np.array(self.w1, dtype=float)

    @cached_property
    def w2_array(self) -> np.ndarray:
        return np.array(self.w2, dtype=float)

    @cached_property
    def is_load_edge(self) -> np.ndarray:
        mask = np.zeros(len(self.branches), dtype=bool)
        mask[list(self.index.load_edges)] = True
        return mask


def _validate(grid: Grid) -> IndexMaps:
    ids = [b.id for b in grid.buses]
    if len(set(ids)) != len(ids):
        raise GridValidationError("bus ids must be unique")
    for b in grid.buses:
        if not isinstance(b.kind, BusKind):
            raise GridValidationError(f"bus {b.id}: unknown kind {b.kind!r}")
        for name in ("voltage", "damping", "p_in", "disturbance"):
            if not _finite(getattr(b, name)):
                raise GridValidationError(f"bus {b.id}: {name} must be a finite number")
        if b.voltage <= 0:
            raise GridValidationError(f"bus {b.id}: voltage must be positive")
        if b.damping < 0:
            raise GridValidationError(f"bus {b.id}: damping must be nonnegative")
        if b.disturbance < 0:
            raise GridValidationError(f"bus {b.id}: disturbance must be nonnegative")
        if b.kind.is_sf:
            if b.inertia is None or not _finite(b.inertia) or b.inertia <= 0:
                raise GridValidationError(f"bus {b.id}: SF bus needs positive inertia")
            if b.damping <= 0:
                raise GridValidationError(f"bus {b.id}: SF bus needs positive damping")
        elif b.inertia is not None:
            raise GridValidationError(f"bus {b.id}: load bus must not carry inertia")

    sf = [b.id for b in grid.buses if b.kind.is_sf]
    loads = [b.id for b in grid.buses if not b.kind.is_sf]
    if not sf:
        raise GridValidationError("at least one SF bus is required as the angle reference")
    order = tuple(sf + loads)
    pos = {bus_id: k for k, bus_id in enumerate(order)}
    kinds = {b.id: b.kind for b in grid.buses}

    seen: set[frozenset[str]] = set()
    src, dst, sf_edges, load_edges = [], [], [], []
    for k, br in enumerate(grid.branches):
        for end in (br.from_bus, br.to_bus):
            if end not in pos:
                raise GridValidationError(f"branch {br.id}: unknown bus {end!r}")
        if br.from_bus == br.to_bus:
            raise GridValidationError(f"branch {br.id}: from and to must differ")
        if not (_finite(br.susceptance) and br.susceptance > 0):
            raise GridValidationError(f"branch {br.id}: susceptance must be positive")
        pair = frozenset((br.from_bus, br.to_bus))
        if pair in seen:
            raise GridValidationError(f"branch {br.id}: duplicate branch between the same buses")
        seen.add(pair)
        sf_from, sf_to = kinds[br.from_bus].is_sf, kinds[br.to_bus].is_sf
        if sf_from and sf_to:
            raise GridValidationError(f"branch {br.id}: E_SF must connect SF to load")
        if br.switchable and (sf_from or sf_to):
            raise GridValidationError(f"branch {br.id}: switchable lines must join two load buses")
        (sf_edges if (sf_from or sf_to) else load_edges).append(k)
        src.append(pos[br.from_bus])
        dst.append(pos[br.to_bus])

    edges = tuple(br.id for br in grid.branches)
    if len(set(edges)) != len(edges):
        raise GridValidationError("branch ids (from-to) must be unique")
    return IndexMaps(
        order=order,
        n_sf=len(sf),
        edges=edges,
        src=tuple(src),
        dst=tuple(dst),
        sf_edges=tuple(sf_edges),
        load_edges=tuple(load_edges),
        pos=pos,
        edge_pos={e: k for k, e in enumerate(edges)},
    )


def _validate_weights(grid: Grid) -> None:
    if not (_finite(grid.epsilon) and grid.epsilon > 0):
        raise GridValidationError("epsilon must be positive")
    if len(grid.w1) != len(grid.branches):
        raise GridValidationError("w1 needs one weight per branch")
    if len(grid.w2) != grid.index.n_sf - 1:
        raise GridValidationError("w2 needs one weight per non-reference SF bus")
    if not all(_finite(w) and w > 0 for w in grid.w1):
        raise GridValidationError("all w1 weights must be positive")
    if not all(_finite(w) and w > 0 for w in grid.w2):
        raise GridValidationError("all w2 weights must be positive")


def is_connected(n: int, src: np.ndarray, dst: np.ndarray) -> bool:
    if n <= 1:
        return True
    adj = coo_matrix((np.ones(len(src)), (src, dst)), shape=(n, n))
    n_comp, _ = connected_components(adj, directed=False)
    return n_comp == 1


def check_connected(grid: Grid, mask: np.ndarray, what: str) -> None:
    if not is_connected(grid.index.n_bus, grid.src[mask], grid.dst[mask]):
        raise DisconnectedGraphError(f"{what} is disconnected")


# -- matrices ---------------------------------------------------------------


def incidence(n: int, src: Sequence[int], dst: Sequence[int]) -> np.ndarray:
    """Oriented incidence matrix: +1 at the source row, -1 at the sink row."""
    src = np.asarray(src, dtype=int)
    dst = np.asarray(dst, dtype=int)
    E = np.zeros((n, len(src)))
    cols = np.arange(len(src))
    E[src, cols] = 1.0
    E[dst, cols] = -1.0
    return E


def incidence_reduced(grid: Grid, edges: Iterable[str] | np.ndarray | None = None) -> np.ndarray:
    """Incidence over ``edges`` (all branches by default) with the reference row deleted."""
    if edges is None:
        cols = np.arange(len(grid.branches))
    elif isinstance(edges, np.ndarray) and edges.dtype == bool:
        cols = np.flatnonzero(edges)
    else:
        cols = np.array([grid.edge_index(e) for e in edges], dtype=int)
    E = incidence(grid.index.n_bus, grid.src[cols], grid.dst[cols])
    return E[1:, :]


def _edge_arrays(edges) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(edges, dtype=int).reshape(-1, 2)
    return arr[:, 0], arr[:, 1]


def weighted_laplacian(n: int, src: np.ndarray, dst: np.ndarray, w: np.ndarray) -> np.ndarray:
    """L = E diag(w) E^T without checks on ``w`` (used for perturbed weights)."""
    L = np.zeros((n, n))
    np.add.at(L, (src, src), w)
    np.add.at(L, (dst, dst), w)
    np.add.at(L, (src, dst), -w)
    np.add.at(L, (dst, src), -w)
    return L


def laplacian(n: int, edges: Sequence[tuple[int, int]], weights: Sequence[float]) -> np.ndarray:
    """Weighted Laplacian of the graph on nodes ``0..n-1``.

    Parameters
    ----------
    n:
        Number of vertices.
    edges:
        Sequence of ``(i, j)`` vertex pairs.
    weights:
        One strictly positive weight per edge.
    """
    src, dst = _edge_arrays(edges)
    w = np.asarray(weights, dtype=float).ravel()
    if w.shape[0] != src.shape[0]:
        raise ValueError(f"expected {src.shape[0]} weights, got {w.shape[0]}")
    if np.any(~np.isfinite(w)) or np.any(w <= 0):
        raise ValueError("Laplacian weights must be positive")
    if src.size and (src.min() < 0 or max(src.max(), dst.max()) >= n):
        raise ValueError("edge endpoint out of range")
    return weighted_laplacian(n, src, dst, w)


def reduced_laplacian(n: int, edges: Sequence[tuple[int, int]], weights: Sequence[float]) -> np.ndarray:
    """Laplacian with the first (reference) row and column deleted."""
    return laplacian(n, edges, weights)[1:, 1:]


def grid_laplacian(grid: Grid, weights: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Reduced Laplacian of the grid graph restricted to ``mask`` with per-branch ``weights``."""
    if mask is None:
        mask = np.ones(len(grid.branches), dtype=bool)
    L = weighted_laplacian(grid.index.n_bus, grid.src[mask], grid.dst[mask], np.asarray(weights)[mask])
    return L[1:, 1:]


# -- file I/O ----------------------------------------------------------------

GRID_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["buses", "branches"],
    "additionalProperties": False,
    "properties": {
        "epsilon": {"type": "number", "exclusiveMinimum": 0},
        "buses": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["id", "kind", "voltage", "damping", "p_in", "disturbance"],
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "kind": {"enum": ["load", "sync", "inverter"]},
                    "voltage": {"type": "number"},
                    "damping": {"type": "number"},
                    "inertia": {"type": "number"},
                    "p_in": {"type": "number"},
                    "disturbance": {"type": "number"},
                },
            },
        },
        "branches": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["from", "to", "susceptance"],
                "additionalProperties": False,
                "properties": {
                    "from": {"type": "string"},
                    "to": {"type": "string"},
                    "susceptance": {"type": "number"},
                    "switchable": {"type": "boolean"},
                    "initially_on": {"type": "boolean"},
                },
            },
        },
        "weights": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "w1_default": {"type": "number"},
                "w2_default": {"type": "number"},
                "w1": {"type": "object", "additionalProperties": {"type": "number"}},
                "w2": {"type": "object", "additionalProperties": {"type": "number"}},
            },
        },
    },
}


def grid_from_dict(data: Mapping[str, Any]) -> Grid:
    try:
        jsonschema.validate(data, GRID_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise GridValidationError(f"schema violation at {where}: {exc.message}") from None
    buses = [
        Bus(
            id=b["id"],
            kind=BusKind(b["kind"]),
            voltage=float(b["voltage"]),
            damping=float(b["damping"]),
            p_in=float(b["p_in"]),
            disturbance=float(b["disturbance"]),
            inertia=float(b["inertia"]) if "inertia" in b else None,
        )
        for b in data["buses"]
    ]
    branches = [
        Branch(
            from_bus=br["from"],
            to_bus=br["to"],
            susceptance=float(br["susceptance"]),
            switchable=bool(br.get("switchable", False)),
            initially_on=bool(br.get("initially_on", True)),
        )
        for br in data["branches"]
    ]
    weights = data.get("weights", {})
    return Grid.build(
        buses,
        branches,
        epsilon=float(data.get("epsilon", DEFAULT_EPSILON)),
        w1=weights.get("w1"),
        w2=weights.get("w2"),
        w1_default=float(weights.get("w1_default", 1.0)),
        w2_default=float(weights.get("w2_default", 1.0)),
    )


def load_grid(path: str | Path) -> Grid:
    """Read and validate a grid JSON file."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise GridValidationError(f"{path}: invalid JSON ({exc})") from None
    return grid_from_dict(data)


def grid_to_dict(grid: Grid) -> dict[str, Any]:
    buses = []
    for b in grid.buses:
        d = {
            "id": b.id,
            "kind": b.kind.value,
            "voltage": b.voltage,
            "damping": b.damping,
            "p_in": b.p_in,
            "disturbance": b.disturbance,
        }
        if b.inertia is not None:
            d["inertia"] = b.inertia
        buses.append(d)
    branches = [
        {
            "from": br.from_bus,
            "to": br.to_bus,
            "susceptance": br.susceptance,
            "switchable": br.switchable,
            "initially_on": br.initially_on,
        }
        for br in grid.branches
    ]
    return {
        "epsilon": grid.epsilon,
        "buses": buses,
        "branches": branches,
        "weights": {
            "w1": {br.id: w for br, w in zip(grid.branches, grid.w1)},
            "w2": dict(zip(grid.index.sf_reduced, grid.w2)),
        },
    }


def save_grid(grid: Grid, path: str | Path) -> None:
    Path(path).write_text(json.dumps(grid_to_dict(grid), indent=2) + "\n")
