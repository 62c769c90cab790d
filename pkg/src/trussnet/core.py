"""Graph-and-geometry kernel for truss robots.

A robot is a framework: an undirected graph whose vertices carry positions
in the plane or in space.  Everything downstream (estimation, control,
tube kinematics) is built on the edge-length map and its Jacobian.

Vertex ids are 1-based in file formats and documentation; internally all
arrays are 0-based.  A configuration is the stacked position vector
``x = [p_1, ..., p_n]`` of length ``n * dim``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

Configuration = NDArray[np.float64]

# Singular values below RANK_RTOL * s_max count as zero when ranking the
# rigidity matrix.  Configurable per call.
RANK_RTOL = 1e-8


class ZeroLengthEdgeError(ValueError):
    """An edge has (numerically) coincident endpoints; its direction is undefined."""

    def __init__(self, edge_index: int, vertices: tuple[int, int]):
        self.edge_index = edge_index
        self.vertices = vertices
        i, j = vertices
        super().__init__(
            f"edge {edge_index} ({i + 1},{j + 1}) has zero length; "
            "rigidity row undefined"
        )


@dataclass(frozen=True)
class FrameworkGraph:
    """Topology of a truss robot: ``n`` vertices, undirected edges, ambient dim.

    Parameters
    ----------
    n : int
        Vertex count.  Vertices are 0..n-1 internally.
    edges : tuple of (i, j)
        Undirected edges, 0-based.  The tuple order is fixed and defines the
        edge index used by every length-indexed quantity.
    dim : int
        Ambient dimension, 2 or 3.
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    dim: int
    _neighbors: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("need at least one vertex")
        if self.dim not in (2, 3):
            raise ValueError(f"ambient dimension must be 2 or 3, got {self.dim}")
        seen = set()
        canon = []
        for k, (i, j) in enumerate(self.edges):
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge {k} ({i},{j}) references a vertex outside 0..{self.n - 1}")
            if i == j:
                raise ValueError(f"edge {k} is a self-loop at vertex {i}")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise ValueError(f"duplicate edge {{{i},{j}}} at index {k}")
            seen.add(key)
            canon.append((i, j))
        object.__setattr__(self, "edges", tuple(canon))
        nbrs: list[list[int]] = [[] for _ in range(self.n)]
        for i, j in self.edges:
            nbrs[i].append(j)
            nbrs[j].append(i)
        object.__setattr__(self, "_neighbors", tuple(tuple(sorted(v)) for v in nbrs))

    @classmethod
    def from_one_based(cls, n: int, edges, dim: int) -> "FrameworkGraph":
        """Build from 1-based edge pairs, the file-format convention."""
        return cls(n, tuple((i - 1, j - 1) for i, j in edges), dim)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def neighbors(self, i: int) -> tuple[int, ...]:
        return self._neighbors[i]

    def incident_edges(self, i: int) -> tuple[int, ...]:
        return tuple(k for k, (a, b) in enumerate(self.edges) if i in (a, b))

    def edge_index(self, i: int, j: int) -> int:
        for k, (a, b) in enumerate(self.edges):
            if {a, b} == {i, j}:
                return k
        raise KeyError(f"no edge {{{i},{j}}}")

    def is_connected(self) -> bool:
        seen = {0}
        stack = [0]
        while stack:
            v = stack.pop()
            for w in self._neighbors[v]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == self.n

    def check_configuration(self, x: Configuration) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size != self.n * self.dim:
            raise ValueError(
                f"configuration has length {x.size}, expected {self.n}*{self.dim}"
                f"={self.n * self.dim}"
            )
        return x


def positions(g: FrameworkGraph, x: Configuration) -> np.ndarray:
    """View a stacked configuration as an (n, dim) position array."""
    return g.check_configuration(x).reshape(g.n, g.dim)


def stack_positions(p: np.ndarray) -> Configuration:
    """Inverse of :func:`positions`."""
    return np.asarray(p, dtype=float).reshape(-1)


def edge_lengths(g: FrameworkGraph, x: Configuration) -> np.ndarray:
    """Lengths of all edges, in edge-list order."""
    p = positions(g, x)
    a = np.array([i for i, _ in g.edges])
    b = np.array([j for _, j in g.edges])
    return np.linalg.norm(p[a] - p[b], axis=1)


def rigidity_matrix(g: FrameworkGraph, x: Configuration) -> np.ndarray:
    """Jacobian of the edge-length map: ``Ldot = R(x) @ xdot``.

    Row k, for edge {i, j}, carries the unit edge direction
    ``(p_i - p_j) / L_k`` in vertex i's column block and its negation in
    vertex j's block.

    Raises
    ------
    ZeroLengthEdgeError
        If any edge has coincident endpoints.
    """
    p = positions(g, x)
    d = g.dim
    R = np.zeros((g.num_edges, g.n * d))
    for k, (i, j) in enumerate(g.edges):
        diff = p[i] - p[j]
        L = np.linalg.norm(diff)
        if L <= 1e-12:
            raise ZeroLengthEdgeError(k, (i, j))
        u = diff / L
        R[k, d * i : d * i + d] = u
        R[k, d * j : d * j + d] = -u
    return R


def edge_rate_map(g: FrameworkGraph, x: Configuration, xdot: np.ndarray) -> np.ndarray:
    """Edge-length rates induced by node velocities: ``R(x) @ xdot``."""
    xdot = np.asarray(xdot, dtype=float).reshape(-1)
    if xdot.size != g.n * g.dim:
        raise ValueError("velocity vector does not conform to the graph")
    return rigidity_matrix(g, x) @ xdot


def rigid_motion_basis(g: FrameworkGraph, x: Configuration) -> np.ndarray:
    """Basis of infinitesimal rigid-body velocities at x.

    Columns: dim translations followed by dim*(dim-1)/2 rotation generators.
    """
    p = positions(g, x)
    d = g.dim
    cols = []
    for axis in range(d):
        t = np.zeros((g.n, d))
        t[:, axis] = 1.0
        cols.append(t.reshape(-1))
    if d == 2:
        gens = [np.array([[0.0, -1.0], [1.0, 0.0]])]
    else:
        gens = [
            np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]),
            np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]),
            np.array([[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]]),
        ]
    for S in gens:
        cols.append((p @ S.T).reshape(-1))
    return np.column_stack(cols)


def numeric_rank(M: np.ndarray, rtol: float = RANK_RTOL) -> int:
    """Rank with singular values below rtol * s_max treated as zero."""
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def is_infinitesimally_rigid(
    g: FrameworkGraph, x: Configuration, rtol: float = RANK_RTOL
) -> bool:
    """True iff rank R(x) = n*dim - dim*(dim+1)/2 (no first-order flexes)."""
    d = g.dim
    target = g.n * d - d * (d + 1) // 2
    return numeric_rank(rigidity_matrix(g, x), rtol) == target


def apply_rigid_transform(
    g: FrameworkGraph, x: Configuration, rotation: np.ndarray, translation: np.ndarray
) -> Configuration:
    """Apply ``p -> Q p + t`` blockwise to a configuration."""
    p = positions(g, x)
    return stack_positions(p @ np.asarray(rotation).T + np.asarray(translation))
