"""Min-plus Lax-Oleinik step on the symmetrized grid state space.

States are multisets of ``n`` points of the grid ``{0, 1/m, ..., (m-1)/m}``,
i.e. canonical configurations whose coordinates are grid points.  One step
of length ``dt`` is the Hopf-Lax update

    (T v)(M) = min_{M'} [ v(M') + dist(M, M')**2 / (2 dt) ] - dt * W(M)

with the potential frozen at the arrival state.  With that choice the update
is monotone and commutes with constants exactly, and the argmin is the
backward step of a calibrated chain.
"""

from __future__ import annotations

import itertools
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .geometry import ParticleConfig
from .potentials import Potential

DEFAULT_STATE_CAP = 250_000
# entries of the S x S cost table kept in memory before switching to rows on demand
DEFAULT_TABLE_CAP = 16_000_000
_CHUNK = 256


class StateSpaceTooLarge(ValueError):
    pass


class UnsafePruneRadius(ValueError):
    pass


class GridStateSpace:
    """All multisets of ``n`` grid points on a circle of ``m`` cells.

    States are listed in lexicographic order of their sorted cell indices,
    so state 0 is every particle at cell 0.  Ids are stable across runs.
    """

    def __init__(self, n: int, m: int, cap: int = DEFAULT_STATE_CAP):
        if n < 1:
            raise ValueError("n must be at least 1")
        if m < 2:
            raise ValueError("m must be at least 2")
        size = math.comb(m + n - 1, n)
        if size > cap:
            raise StateSpaceTooLarge(
                f"C({m + n - 1}, {n}) = {size} states exceeds the cap of {cap} "
                f"(value table alone needs {size * 8 / 2**20:.1f} MiB)"
            )
        self.n = n
        self.m = m
        self.cells = np.array(list(itertools.combinations_with_replacement(range(m), n)), dtype=np.int64)
        self.coords = self.cells / m
        self._index = {tuple(row): i for i, row in enumerate(self.cells.tolist())}
        self._ops: dict = {}

    def __len__(self) -> int:
        return self.cells.shape[0]

    @property
    def size(self) -> int:
        return len(self)

    @property
    def reference(self) -> int:
        """Id of the state with every particle at cell 0."""
        return self._index[(0,) * self.n]

    def relabeled(self, perm) -> "GridStateSpace":
        """Same states listed in the order ``perm`` (new id ``i`` is old id ``perm[i]``)."""
        perm = np.asarray(perm)
        if sorted(perm.tolist()) != list(range(len(self))):
            raise ValueError("not a permutation of the state ids")
        other = object.__new__(GridStateSpace)
        other.n, other.m = self.n, self.m
        other.cells = self.cells[perm]
        other.coords = self.coords[perm]
        other._index = {tuple(row): i for i, row in enumerate(other.cells.tolist())}
        other._ops = {}
        return other

    def id_of_cells(self, cells) -> int:
        return self._index[tuple(sorted(int(c) % self.m for c in cells))]

    def snap(self, C: ParticleConfig) -> int:
        """Id of the grid state nearest to ``C`` particle by particle."""
        if C.n != self.n:
            raise ValueError(f"config has {C.n} particles, space has {self.n}")
        return self.id_of_cells(np.floor(C.array * self.m + 0.5).astype(int))

    def config(self, i: int) -> ParticleConfig:
        return ParticleConfig(tuple(float(x) for x in self.coords[i]))

    def dist_sq_rows(self, rows) -> np.ndarray:
        """Squared distances from ``rows`` to every state, by exact cell arithmetic."""
        m, n = self.m, self.n
        a = self.cells[np.asarray(rows)][:, None, :]
        best = None
        for k in range(n):
            diff = np.abs(a - np.roll(self.cells, -k, axis=1)[None, :, :]) % m
            t = np.minimum(diff, m - diff)
            s = np.sum(t * t, axis=-1)
            best = s if best is None else np.minimum(best, s)
        return best / (n * m * m)

    def neighbors(self) -> np.ndarray:
        """Pairs (i, j), i < j, of states that differ by one particle moving one cell."""
        pairs = set()
        for p in range(self.n):
            for step in (1, -1):
                moved = self.cells.copy()
                moved[:, p] = (moved[:, p] + step) % self.m
                for i, row in enumerate(moved.tolist()):
                    j = self._index[tuple(sorted(row))]
                    if i != j:
                        pairs.add((min(i, j), max(i, j)))
        return np.array(sorted(pairs), dtype=np.int64).reshape(-1, 2)


def build_space(n: int, m: int, cap: int = DEFAULT_STATE_CAP) -> GridStateSpace:
    return GridStateSpace(n, m, cap)


@dataclass
class GridValueFunction:
    space: GridStateSpace
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.space),):
            raise ValueError(f"expected {len(self.space)} values, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("value function must be finite")

    @classmethod
    def constant(cls, space: GridStateSpace, c: float = 0.0) -> "GridValueFunction":
        return cls(space, np.full(len(space), float(c)))

    def __getitem__(self, i):
        return self.values[i]

    def to_csv(self, header: list[str] | None = None) -> str:
        lines = [f"# {h}" for h in header or ()]
        lines.append(",".join(["id"] + [f"x{i + 1}" for i in range(self.space.n)] + ["value"]))
        for i, (row, v) in enumerate(zip(self.space.coords, self.values)):
            lines.append(",".join([str(i)] + [repr(float(x)) for x in row] + [repr(float(v))]))
        return "\n".join(lines) + "\n"

    def to_binary(self) -> bytes:
        head = struct.pack("<QQQ", self.space.n, self.space.m, len(self.space))
        return head + self.values.astype("<f8").tobytes()

    @classmethod
    def from_binary(cls, data: bytes, space: GridStateSpace | None = None) -> "GridValueFunction":
        n, m, count = struct.unpack_from("<QQQ", data)
        if space is None:
            space = GridStateSpace(int(n), int(m))
        if (space.n, space.m, len(space)) != (n, m, count):
            raise ValueError("binary table does not match the state space")
        values = np.frombuffer(data, dtype="<f8", count=count, offset=24).astype(float)
        return cls(space, values)


@dataclass(frozen=True)
class StepPlan:
    dt: float
    distance_table_policy: Literal["precomputed", "on_the_fly"] = "precomputed"
    prune_radius: float | None = None
    # when the prune radius cannot be certified, take the global min instead of raising
    fallback_to_global: bool = False

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if self.distance_table_policy not in ("precomputed", "on_the_fly"):
            raise ValueError(f"unknown distance table policy {self.distance_table_policy!r}")
        if self.prune_radius is not None and not self.prune_radius > 0:
            raise ValueError("prune_radius must be positive")


@dataclass
class LaxOleinik:
    """One-step operator for a fixed space, potential and step plan."""

    space: GridStateSpace
    potential: Potential
    plan: StepPlan
    threads: int = 1
    table_cap: int = DEFAULT_TABLE_CAP
    # test hook for the determinism self-check: multi-threaded runs break ties
    # toward the largest id instead of the smallest
    flip_tiebreak_when_threaded: bool = False
    _cost: np.ndarray | None = field(default=None, init=False, repr=False)
    _d2: np.ndarray | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        dt = self.plan.dt
        self.penalty = dt * np.asarray(self.potential(self.space.coords), dtype=float).reshape(-1)
        S = len(self.space)
        if self.plan.distance_table_policy == "precomputed" and S * S <= self.table_cap:
            self._d2 = self.space.dist_sq_rows(np.arange(S))
            self._cost = self._d2 / (2.0 * dt)

    def d2_rows(self, rows: np.ndarray) -> np.ndarray:
        if self._d2 is not None:
            return self._d2[rows]
        return self.space.dist_sq_rows(rows)

    def cost_rows(self, rows: np.ndarray) -> np.ndarray:
        if self._cost is not None:
            return self._cost[rows]
        return self.space.dist_sq_rows(rows) / (2.0 * self.plan.dt)

    def step_cost(self, to_id: int, from_id: int) -> float:
        """Cost of the one-step move ``from_id -> to_id`` (kinetic minus potential)."""
        return float(self.cost_rows(np.array([to_id]))[0, from_id]) - float(self.penalty[to_id])

    def lipschitz(self, v: np.ndarray) -> float:
        """``max |v(A) - v(B)| / dist(A, B)`` over all pairs of distinct states."""
        S = len(self.space)
        best = 0.0
        for start in range(0, S, _CHUNK):
            rows = np.arange(start, min(start + _CHUNK, S))
            d = np.sqrt(self.d2_rows(rows))
            dv = np.abs(v[rows][:, None] - v[None, :])
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(d > 0, dv / d, 0.0)
            best = max(best, float(np.max(ratio)))
        return best

    def _radius(self, v: np.ndarray) -> float | None:
        r = self.plan.prune_radius
        if r is None:
            return None
        # a predecessor farther than 2 dt Lip(v) loses to staying put
        needed = 2.0 * self.plan.dt * self.lipschitz(v)
        if r >= needed:
            return r
        if self.plan.fallback_to_global:
            return None
        raise UnsafePruneRadius(f"prune radius {r} below the certified minimum {needed}")

    def _rows(self, v: np.ndarray, rows: np.ndarray, radius: float | None, last: bool):
        block = v[None, :] + self.cost_rows(rows)
        if radius is not None:
            block = np.where(self.d2_rows(rows) <= radius * radius, block, np.inf)
        if last:
            idx = block.shape[1] - 1 - np.argmin(block[:, ::-1], axis=1)
        else:
            idx = np.argmin(block, axis=1)
        best = block[np.arange(len(rows)), idx]
        return idx, best - self.penalty[rows]

    def argmin_all(self, v) -> tuple[np.ndarray, np.ndarray]:
        """Predecessor ids and updated values for every state."""
        v = np.asarray(v, dtype=float)
        S = len(self.space)
        radius = self._radius(v)
        chunks = [np.arange(s, min(s + _CHUNK, S)) for s in range(0, S, _CHUNK)]
        threads = max(1, int(self.threads))
        last = self.flip_tiebreak_when_threaded and threads > 1
        if threads == 1:
            parts = [self._rows(v, rows, radius, last) for rows in chunks]
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                parts = list(pool.map(lambda rows: self._rows(v, rows, radius, last), chunks))
        pred = np.concatenate([p[0] for p in parts])
        out = np.concatenate([p[1] for p in parts])
        return pred, out

    def __call__(self, v) -> np.ndarray:
        return self.argmin_all(v)[1]

    def argmin(self, v, state: int) -> tuple[int, float]:
        v = np.asarray(v, dtype=float)
        idx, val = self._rows(v, np.array([state]), self._radius(v), False)
        return int(idx[0]), float(val[0])


def operator(space: GridStateSpace, W: Potential, plan: StepPlan, threads: int = 1) -> LaxOleinik:
    """Cached operator for ``(W, plan)`` on ``space``."""
    key = (W, plan)
    op = space._ops.get(key)
    if op is None:
        op = LaxOleinik(space, W, plan)
        space._ops[key] = op
    op.threads = threads
    return op


def apply_T(v: GridValueFunction, W: Potential, plan: StepPlan, threads: int = 1) -> GridValueFunction:
    op = operator(v.space, W, plan, threads)
    return GridValueFunction(v.space, op(v.values))


def apply_T_steps(v: GridValueFunction, W: Potential, plan: StepPlan, k: int, threads: int = 1) -> GridValueFunction:
    if k < 1:
        raise ValueError("k must be a positive integer")
    op = operator(v.space, W, plan, threads)
    values = v.values
    for _ in range(k):
        values = op(values)
    return GridValueFunction(v.space, values)


def argmin_step(v: GridValueFunction, W: Potential, plan: StepPlan, state: int) -> tuple[int, float]:
    return operator(v.space, W, plan).argmin(v.values, state)
