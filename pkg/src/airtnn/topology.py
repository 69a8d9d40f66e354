"""Order-2 regular cell complexes and their combinatorial operators.

A complex is built by lifting a connected graph: every cycle of a fundamental
cycle basis (spanning-tree method) becomes a polygon. Edges carry the canonical
orientation u -> v for u < v; polygons carry per-edge traversal signs. The
signed incidences B1 (nodes x edges) and B2 (edges x polygons) are kept as
integer matrices so boundary-of-boundary can be checked exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import FormatError, GraphGenerationError, PowerIterationError


@dataclass(eq=False)
class Graph:
    """Undirected simple graph with optional community labels.

    Edges are stored as an (n_edges, 2) int array with u < v per row, rows in
    lexicographic order. Edge index = row index everywhere downstream.
    """

    n_nodes: int
    edges: np.ndarray
    community_of: np.ndarray | None = None

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if self.edges.size:
            u, v = self.edges[:, 0], self.edges[:, 1]
            if np.any(u >= v):
                raise ValueError("edges must satisfy u < v (no self-loops)")
            if u.min() < 0 or v.max() >= self.n_nodes:
                raise ValueError("edge endpoint out of range")
            keys = u * self.n_nodes + v
            if np.unique(keys).size != keys.size:
                raise ValueError("duplicate edges")
        if self.community_of is not None:
            self.community_of = np.asarray(self.community_of, dtype=np.int64)
            if self.community_of.shape != (self.n_nodes,):
                raise ValueError("community_of must have one entry per node")

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def n_communities(self) -> int:
        if self.community_of is None:
            raise ValueError("graph has no community labels")
        return int(self.community_of.max()) + 1

    def edge_index(self) -> dict[tuple[int, int], int]:
        """Map (u, v) with u < v to the edge's row index."""
        return {(int(u), int(v)): i for i, (u, v) in enumerate(self.edges)}

    def neighbors(self) -> list[list[int]]:
        """Sorted adjacency lists."""
        adj: list[list[int]] = [[] for _ in range(self.n_nodes)]
        for u, v in self.edges:
            adj[int(u)].append(int(v))
            adj[int(v)].append(int(u))
        for lst in adj:
            lst.sort()
        return adj

    def is_connected(self) -> bool:
        if self.n_nodes == 0:
            return True
        adj = self.neighbors()
        seen = np.zeros(self.n_nodes, dtype=bool)
        stack = [0]
        seen[0] = True
        while stack:
            u = stack.pop()
            for w in adj[u]:
                if not seen[w]:
                    seen[w] = True
                    stack.append(w)
        return bool(seen.all())


def sbm_generate(
    n_nodes: int,
    n_communities: int,
    p_intra: float,
    p_inter: float,
    rng: np.random.Generator,
    max_retries: int = 100,
) -> Graph:
    """Sample a connected stochastic block model graph.

    Nodes are split into equal contiguous communities. Each unordered pair is
    an edge independently with probability p_intra (same community) or p_inter
    (different). Draws are repeated until the graph is connected.
    """
    if n_nodes <= 0 or n_communities <= 0 or n_nodes % n_communities != 0:
        raise ValueError("n_nodes must be a positive multiple of n_communities")
    if not (0.0 <= p_inter <= p_intra <= 1.0):
        raise ValueError("need 0 <= p_inter <= p_intra <= 1")

    size = n_nodes // n_communities
    community = np.repeat(np.arange(n_communities, dtype=np.int64), size)
    iu, ju = np.triu_indices(n_nodes, k=1)
    probs = np.where(community[iu] == community[ju], p_intra, p_inter)

    for _ in range(max_retries):
        mask = rng.random(probs.shape[0]) < probs
        edges = np.stack([iu[mask], ju[mask]], axis=1)
        graph = Graph(n_nodes=n_nodes, edges=edges, community_of=community)
        if graph.is_connected():
            return graph
    raise GraphGenerationError(
        f"no connected draw within {max_retries} attempts "
        f"(n={n_nodes}, k={n_communities}, p={p_intra}/{p_inter})"
    )


def cycle_basis_paton(graph: Graph) -> list[list[int]]:
    """Fundamental cycle basis from a BFS spanning tree (Paton's method).

    Returns one simple cycle per non-tree edge, as a node sequence whose
    consecutive nodes (and last-to-first pair) are graph edges. The basis has
    exactly n_edges - n_nodes + 1 members for a connected graph.
    """
    if not graph.is_connected():
        raise ValueError("cycle basis requires a connected graph")

    adj = graph.neighbors()
    n = graph.n_nodes
    parent = np.full(n, -1, dtype=np.int64)
    depth = np.full(n, -1, dtype=np.int64)
    order = []
    depth[0] = 0
    queue = [0]
    head = 0
    while head < len(queue):
        u = queue[head]
        head += 1
        order.append(u)
        for w in adj[u]:
            if depth[w] < 0:
                depth[w] = depth[u] + 1
                parent[w] = u
                queue.append(w)

    tree = {(min(int(u), int(p)), max(int(u), int(p)))
            for u, p in enumerate(parent) if p >= 0}

    cycles = []
    for u, v in graph.edges:
        u, v = int(u), int(v)
        if (u, v) in tree:
            continue
        # Join the two tree paths at their lowest common ancestor.
        path_u, path_v = [u], [v]
        a, b = u, v
        while depth[a] > depth[b]:
            a = int(parent[a])
            path_u.append(a)
        while depth[b] > depth[a]:
            b = int(parent[b])
            path_v.append(b)
        while a != b:
            a = int(parent[a])
            b = int(parent[b])
            path_u.append(a)
            path_v.append(b)
        # path_u ends at the LCA; walk down the other side, skipping the LCA.
        cycles.append(path_u + path_v[-2::-1])
    return cycles


@dataclass(eq=False)
class CellComplex2:
    """Order-2 regular cell complex over a graph.

    polygons[p] lists the cyclic traversal of cycle p as (edge_index, sign)
    pairs; sign is +1 when the traversal follows the edge's canonical u -> v
    orientation. B1 and B2 are the signed incidence matrices with integer
    entries; B1 @ B2 == 0 holds exactly.
    """

    graph: Graph
    polygons: list[list[tuple[int, int]]]
    B1: np.ndarray
    B2: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.graph.n_nodes

    @property
    def n_edges(self) -> int:
        return self.graph.n_edges

    @property
    def n_polygons(self) -> int:
        return len(self.polygons)


def lift_to_complex(graph: Graph) -> CellComplex2:
    """Extend a connected graph to an order-2 complex.

    Every fundamental cycle becomes a polygon. Raises if the boundary
    condition B1 @ B2 == 0 fails, which would indicate a construction bug.
    """
    n0, n1 = graph.n_nodes, graph.n_edges
    B1 = np.zeros((n0, n1), dtype=np.int64)
    for e, (u, v) in enumerate(graph.edges):
        B1[u, e] = -1
        B1[v, e] = +1

    eidx = graph.edge_index()
    cycles = cycle_basis_paton(graph)
    polygons: list[list[tuple[int, int]]] = []
    B2 = np.zeros((n1, len(cycles)), dtype=np.int64)
    for p, cyc in enumerate(cycles):
        signed = []
        for i in range(len(cyc)):
            a, b = cyc[i], cyc[(i + 1) % len(cyc)]
            sign = 1 if a < b else -1
            e = eidx[(min(a, b), max(a, b))]
            signed.append((e, sign))
            B2[e, p] = sign
        polygons.append(signed)

    if len(cycles) and np.any(B1 @ B2):
        raise RuntimeError("boundary-of-boundary condition violated")
    return CellComplex2(graph=graph, polygons=polygons, B1=B1, B2=B2)


class ShiftKind(str, Enum):
    LOWER_ADJACENCY = "lower_adjacency"
    UPPER_ADJACENCY = "upper_adjacency"
    LOWER_LAPLACIAN = "lower_laplacian"
    UPPER_LAPLACIAN = "upper_laplacian"


@dataclass(eq=False)
class ShiftOperator:
    """Symmetric edge-space operator plus its off-diagonal support.

    The support is the (nnz, 2) array of index pairs where off-diagonal
    entries are allowed to be nonzero, i.e. the neighborhood relation; the
    channel sampler places fading gains exactly there.
    """

    kind: ShiftKind
    matrix: np.ndarray
    support: np.ndarray

    @property
    def n_cells(self) -> int:
        return self.matrix.shape[0]


def shift_operator(complex_: CellComplex2, kind: ShiftKind | str) -> ShiftOperator:
    """Build one of the four edge-space shift operators of a complex.

    Adjacency kinds are binary with zero diagonal: lower links edges sharing a
    node, upper links edges bounding a common polygon. Laplacian kinds are
    B1^T B1 and B2 B2^T.
    """
    kind = ShiftKind(kind)
    B1, B2 = complex_.B1, complex_.B2
    if kind in (ShiftKind.LOWER_ADJACENCY, ShiftKind.LOWER_LAPLACIAN):
        m = B1.T @ B1
    else:
        m = B2 @ B2.T
    off = m.copy()
    np.fill_diagonal(off, 0)
    support = np.argwhere(off != 0)

    if kind in (ShiftKind.LOWER_ADJACENCY, ShiftKind.UPPER_ADJACENCY):
        matrix = np.zeros(m.shape, dtype=np.float64)
        matrix[support[:, 0], support[:, 1]] = 1.0
    else:
        matrix = m.astype(np.float64)
    return ShiftOperator(kind=kind, matrix=matrix, support=support)


def spectral_norm(
    operator: ShiftOperator | np.ndarray,
    tol: float = 1e-10,
    seed: int = 0,
    max_iter: int = 10_000,
) -> float:
    """Largest eigenvalue of a symmetric operator via power iteration.

    The estimate is the Rayleigh norm ratio ||S v_k|| / ||v_k||; iteration
    stops when successive estimates agree to relative tolerance tol. For the
    nonnegative adjacency and PSD Laplacian kinds this equals lambda_max.
    """
    m = operator.matrix if isinstance(operator, ShiftOperator) else np.asarray(operator, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("expected a square matrix")
    if not np.allclose(m, m.T, rtol=0.0, atol=1e-12):
        raise ValueError("expected a symmetric matrix")
    if m.shape[0] == 0:
        return 0.0

    rng = np.random.default_rng(seed)
    v = rng.standard_normal(m.shape[0])
    v /= np.linalg.norm(v)
    est = np.inf
    for _ in range(max_iter):
        w = m @ v
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            return 0.0
        v = w / nw
        if abs(nw - est) <= tol * nw:
            return nw
        est = nw
    raise PowerIterationError(f"power iteration did not converge in {max_iter} steps")


def edge_partition(complex_: CellComplex2) -> np.ndarray:
    """Class index per edge: community c when both endpoints lie in c, else
    the extra inter-community class n_communities."""
    graph = complex_.graph
    if graph.community_of is None:
        raise ValueError("edge partition requires community labels")
    cu = graph.community_of[graph.edges[:, 0]]
    cv = graph.community_of[graph.edges[:, 1]]
    return np.where(cu == cv, cu, graph.n_communities).astype(np.int64)


# ---------------------------------------------------------------------------
# Serialization: line-oriented text, one record per line.

FORMAT_COMPLEX = "cellcomplex v1"


def write_complex(fh, complex_: CellComplex2) -> None:
    graph = complex_.graph
    fh.write(FORMAT_COMPLEX + "\n")
    fh.write(f"counts {graph.n_nodes} {graph.n_edges} {complex_.n_polygons}\n")
    if graph.community_of is None:
        fh.write("communities none\n")
    else:
        fh.write("communities " + " ".join(str(c) for c in graph.community_of) + "\n")
    for u, v in graph.edges:
        fh.write(f"edge {u} {v}\n")
    for poly in complex_.polygons:
        fh.write("polygon " + " ".join(f"{e}:{s:+d}" for e, s in poly) + "\n")


def save_complex(complex_: CellComplex2, path) -> None:
    with open(path, "w") as fh:
        write_complex(fh, complex_)


def read_complex(lines, start=1):
    """Parse the complex record from an iterator of (lineno, text) pairs."""
    lines = iter(lines)

    def next_line():
        try:
            return next(lines)
        except StopIteration:
            raise FormatError("unexpected end of file") from None

    no, text = next_line()
    if text.strip() != FORMAT_COMPLEX:
        raise FormatError(f"unsupported header {text.strip()!r}", line=no)
    no, text = next_line()
    parts = text.split()
    if len(parts) != 4 or parts[0] != "counts":
        raise FormatError("expected 'counts N0 N1 N2'", line=no)
    n0, n1, n2 = (int(p) for p in parts[1:])

    no, text = next_line()
    parts = text.split()
    if not parts or parts[0] != "communities":
        raise FormatError("expected 'communities ...'", line=no)
    if parts[1:] == ["none"]:
        community = None
    else:
        if len(parts) != n0 + 1:
            raise FormatError(f"expected {n0} community labels", line=no)
        community = np.array([int(p) for p in parts[1:]], dtype=np.int64)

    edges = np.zeros((n1, 2), dtype=np.int64)
    for e in range(n1):
        no, text = next_line()
        parts = text.split()
        if len(parts) != 3 or parts[0] != "edge":
            raise FormatError("expected 'edge u v'", line=no)
        edges[e] = (int(parts[1]), int(parts[2]))

    graph = Graph(n_nodes=n0, edges=edges, community_of=community)
    B1 = np.zeros((n0, n1), dtype=np.int64)
    for e, (u, v) in enumerate(edges):
        B1[u, e] = -1
        B1[v, e] = +1

    polygons: list[list[tuple[int, int]]] = []
    B2 = np.zeros((n1, n2), dtype=np.int64)
    for p in range(n2):
        no, text = next_line()
        parts = text.split()
        if not parts or parts[0] != "polygon":
            raise FormatError("expected 'polygon e:+1 ...'", line=no)
        signed = []
        try:
            for tok in parts[1:]:
                e_s, s_s = tok.split(":")
                e, s = int(e_s), int(s_s)
                if s not in (-1, 1) or not (0 <= e < n1):
                    raise ValueError
                signed.append((e, s))
                B2[e, p] = s
        except ValueError:
            raise FormatError(f"malformed polygon token in {text.strip()!r}", line=no) from None
        polygons.append(signed)

    if n2 and np.any(B1 @ B2):
        raise FormatError("stored polygons violate B1 @ B2 = 0")
    return CellComplex2(graph=graph, polygons=polygons, B1=B1, B2=B2)


def load_complex(path) -> CellComplex2:
    with open(path) as fh:
        numbered = ((i, line) for i, line in enumerate(fh, start=1))
        return read_complex(numbered)
