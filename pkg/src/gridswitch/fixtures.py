"""Built-in grids: hand-checkable fixtures and seeded random generators.

Every generated grid is in augmented form: each synchronous/inverter bus is an
internal bus attached to exactly one load bus.
"""

from __future__ import annotations

import numpy as np
from scipy.sparse.csgraph import minimum_spanning_tree

from .errors import GridSwitchError
from .grid import Branch, Bus, BusKind, Grid
from .powerflow import solve_equilibrium

SYNC, INV, LOAD = BusKind.SYNC, BusKind.INVERTER, BusKind.LOAD


def two_bus(p_load: float = 0.0) -> Grid:
    """Reference generator feeding one load over a unit line."""
    return Grid.build(
        [Bus("g", SYNC, 1.0, 1.0, 0.0, 1.0, 1.0), Bus("l", LOAD, 1.0, 1.0, p_load, 1.0)],
        [Branch("g", "l", 1.0)],
    )


def t3() -> Grid:
    """Two generators, two loads, unit everything; squared H2 norm 1.75.

    g1 (reference) - l1 - l2 - g2, with g2 of inertia 2 and all injections zero.
    """
    buses = [
        Bus("g1", SYNC, 1.0, 1.0, 0.0, 1.0, 1.0),
        Bus("g2", SYNC, 1.0, 1.0, 0.0, 1.0, 2.0),
        Bus("l1", LOAD, 1.0, 1.0, 0.0, 1.0),
        Bus("l2", LOAD, 1.0, 1.0, 0.0, 1.0),
    ]
    branches = [
        Branch("g1", "l1", 1.0),
        Branch("g2", "l2", 1.0),
        Branch("l1", "l2", 1.0, switchable=True),
    ]
    return Grid.build(buses, branches)


def t3x() -> Grid:
    """T3-style grid with two mirror-image candidate lines of susceptance 1 and 2.

    l1 is a hub joined to l2, l3 and l4; generators g2 and g3 hang off l2 and
    l3. Swapping (l2, g2) with (l3, g3) maps candidate l2-l4 (b=1) onto
    l3-l4 (b=2), so the two candidates differ only in susceptance.
    """
    buses = [
        Bus("g1", SYNC, 1.0, 1.0, 0.0, 1.0, 1.0),
        Bus("g2", SYNC, 1.0, 1.0, 0.0, 1.0, 2.0),
        Bus("g3", INV, 1.0, 1.0, 0.0, 1.0, 2.0),
        Bus("l1", LOAD, 1.0, 1.0, 0.0, 1.0),
        Bus("l2", LOAD, 1.0, 1.0, 0.0, 1.0),
        Bus("l3", LOAD, 1.0, 1.0, 0.0, 1.0),
        Bus("l4", LOAD, 1.0, 1.0, 0.0, 1.0),
    ]
    branches = [
        Branch("g1", "l1", 1.0),
        Branch("g2", "l2", 1.0),
        Branch("g3", "l3", 1.0),
        Branch("l1", "l2", 1.0),
        Branch("l1", "l3", 1.0),
        Branch("l1", "l4", 1.0),
        Branch("l2", "l4", 1.0, switchable=True, initially_on=False),
        Branch("l3", "l4", 2.0, switchable=True, initially_on=False),
    ]
    return Grid.build(buses, branches)


def random_grid(
    rng: np.random.Generator,
    n_buses: int,
    uniform: bool = True,
    zero_injection: float = 0.0,
    epsilon: float = 0.05,
    n_switchable: int = 0,
) -> Grid:
    """Random connected augmented grid with small injections.

    ``uniform`` gives every non-reference bus the same disturbance/damping
    ratio. ``zero_injection`` is the fraction of loads left with zero
    injection and zero damping, which the loader perturbs to ``epsilon``.
    The first ``n_switchable`` redundant load lines are made switchable.
    """
    n_sf = max(2, n_buses // 4)
    n_l = n_buses - n_sf
    if n_l < 2:
        raise ValueError("need at least two load buses")
    lam = rng.uniform(0.5, 2.0)

    def disturbance(d):
        return lam * d if uniform else d * rng.uniform(0.2, 3.0)

    buses = []
    for i in range(n_sf):
        d, m = rng.uniform(0.5, 2.0), rng.uniform(0.5, 5.0)
        p = 0.0 if i == 0 else rng.uniform(0.0, 0.15)
        kind = SYNC if rng.random() < 0.5 else INV
        buses.append(Bus(f"g{i}", kind, rng.uniform(0.95, 1.05), d, p, disturbance(d), m))
    n_zero = int(round(zero_injection * n_l))
    for i in range(n_l):
        if i < n_zero:
            buses.append(Bus(f"l{i}", LOAD, rng.uniform(0.95, 1.05), 0.0, 0.0, disturbance(epsilon)))
        else:
            d = rng.uniform(0.5, 2.0)
            buses.append(Bus(f"l{i}", LOAD, rng.uniform(0.95, 1.05), d, rng.uniform(-0.08, 0.02), disturbance(d)))

    branches = []
    pairs = set()
    for i in range(1, n_l):
        j = int(rng.integers(0, i))
        branches.append(Branch(f"l{j}", f"l{i}", rng.uniform(1.0, 4.0)))
        pairs.add(frozenset((i, j)))
    n_extra = max(1, n_l // 2)
    switchable_left = n_switchable
    for _ in range(4 * n_extra):
        if n_extra == 0:
            break
        i, j = (int(x) for x in rng.choice(n_l, 2, replace=False))
        if frozenset((i, j)) in pairs:
            continue
        pairs.add(frozenset((i, j)))
        sw = switchable_left > 0
        switchable_left -= sw
        on = bool(rng.random() < 0.5) if sw else True
        branches.append(Branch(f"l{i}", f"l{j}", rng.uniform(1.0, 4.0), switchable=sw, initially_on=on))
        n_extra -= 1
    for i in range(n_sf):
        j = int(rng.integers(0, n_l))
        branches.append(Branch(f"g{i}", f"l{j}", rng.uniform(2.0, 6.0)))

    w1 = {br.id: rng.uniform(0.5, 2.0) for br in branches}
    w2 = {f"g{i}": rng.uniform(0.5, 2.0) for i in range(1, n_sf)}
    return Grid.build(buses, branches, epsilon=epsilon, w1=w1, w2=w2)


def random_secure_grid(rng: np.random.Generator, n_buses: int, **kwargs) -> Grid:
    """:func:`random_grid` redrawn until its initial power flow is secure."""
    for _ in range(100):
        grid = random_grid(rng, n_buses, **kwargs)
        try:
            solve_equilibrium(grid)
        except GridSwitchError:
            continue
        return grid
    raise RuntimeError("could not draw a secure random grid")


def synthetic_network(
    seed: int = 1,
    n_loads: int = 32,
    n_sf: int = 8,
    n_dispatchable: int = 10,
    lambda_d: float = 1.0,
) -> Grid:
    """Geographic test network for switching studies.

    Load buses are scattered in the unit square and joined by their Euclidean
    minimum spanning tree plus a few short redundant lines; susceptance is
    inversely proportional to length. The ``n_dispatchable`` candidate lines
    are drawn from the shortest missing links and start switched off.
    Disturbance/damping ratios are uniform (``lambda_d``).
    """
    rng = np.random.default_rng(seed)
    xy = rng.uniform(0.0, 1.0, (n_loads, 2))
    dist = np.linalg.norm(xy[:, None, :] - xy[None, :, :], axis=-1)
    mst = minimum_spanning_tree(dist).tocoo()
    edges = {frozenset((int(i), int(j))) for i, j in zip(mst.row, mst.col)}

    iu, ju = np.triu_indices(n_loads, 1)
    order = np.argsort(dist[iu, ju])
    missing = [(int(iu[k]), int(ju[k])) for k in order if frozenset((int(iu[k]), int(ju[k]))) not in edges]
    n_redundant = n_loads // 6
    redundant = missing[:n_redundant]
    pool = missing[n_redundant : n_redundant + 3 * n_dispatchable]
    picks = sorted(rng.choice(len(pool), n_dispatchable, replace=False))
    candidates = [pool[k] for k in picks]

    def b_of(i, j):
        return float(np.clip(0.25 / dist[i, j], 1.0, 20.0))

    buses = []
    gen_sites = rng.choice(n_loads, n_sf, replace=False)
    total_load = 0.0
    load_buses = []
    for i in range(n_loads):
        d = rng.uniform(0.5, 1.5)
        p = -rng.uniform(0.02, 0.12)
        total_load += -p
        load_buses.append(Bus(f"n{i}", LOAD, 1.0, d, p, lambda_d * d))
    for k, site in enumerate(gen_sites):
        d, m = rng.uniform(0.5, 1.5), rng.uniform(1.0, 6.0)
        p = 0.0 if k == 0 else total_load / n_sf * rng.uniform(0.6, 1.4)
        kind = SYNC if k % 2 == 0 else INV
        buses.append(Bus(f"G{k}", kind, 1.0, d, p, lambda_d * d, m))
    buses.extend(load_buses)

    branches = [Branch(f"n{i}", f"n{j}", b_of(i, j)) for i, j in sorted(tuple(sorted(e)) for e in edges)]
    branches += [Branch(f"n{i}", f"n{j}", b_of(i, j)) for i, j in redundant]
    branches += [
        Branch(f"n{i}", f"n{j}", b_of(i, j), switchable=True, initially_on=False) for i, j in candidates
    ]
    branches += [Branch(f"G{k}", f"n{site}", 10.0) for k, site in enumerate(gen_sites)]
    return Grid.build(buses, branches)
