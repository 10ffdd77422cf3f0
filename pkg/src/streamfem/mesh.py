"""Structured triangulations of the unit square and global DOF numberings.

Every cell of the uniform n x n grid is split along its bottom-left to
top-right diagonal. Each vertex carries six degrees of freedom (value, first
and second derivatives) and each edge midpoint carries one (normal
derivative), for a total of 6 V + E unknowns. Three global numbering schemes
are provided; they permute the unknowns but describe the same field.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

# per-vertex DOF slots, in this fixed order
VERTEX_SLOTS = ("value", "dx", "dy", "dxx", "dxy", "dyy")
SLOT_INDEX = {name: k for k, name in enumerate(VERTEX_SLOTS)}


class OrderingScheme(enum.Enum):
    """Global numbering strategies for the Argyris unknowns.

    VERTEX_BLOCK      six consecutive numbers per vertex, then midside DOFs
                      (horizontal, vertical, oblique edges in row-major order).
    FUNCTION_FIRST    all function values, then each derivative family in
                      turn, then midside DOFs as above.
    ALTERNATING_VERTEX  vertices visited even row-major positions first, then
                      odd positions, six consecutive numbers each, then
                      midside DOFs as above.
    """

    VERTEX_BLOCK = 1
    FUNCTION_FIRST = 2
    ALTERNATING_VERTEX = 3

    @classmethod
    def from_int(cls, k: int) -> "OrderingScheme":
        try:
            return cls(k)
        except ValueError:
            raise ValueError(f"ordering scheme must be 1, 2 or 3, got {k}") from None


@dataclass(frozen=True)
class Mesh:
    """Uniform triangulation of the unit square with h = 1/n.

    Attributes
    ----------
    n : int
        Subdivisions per side.
    vertices : (V, 2) float array
        Vertex coordinates, row-major over the grid.
    triangles : (T, 3) int array
        Counterclockwise vertex triples.
    edges : (E, 2) int array
        Vertex pairs with lower index first.
    edge_midpoints : (E, 2) float array
    triangle_edges : (T, 3) int array
        Global edge index of local edges (v0,v1), (v1,v2), (v2,v0).
    vertex_on_boundary, edge_on_boundary : bool arrays
        An edge is on the boundary iff it belongs to exactly one triangle.
    """

    n: int
    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    edge_midpoints: np.ndarray
    triangle_edges: np.ndarray
    vertex_on_boundary: np.ndarray
    edge_on_boundary: np.ndarray

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def h(self) -> float:
        return 1.0 / self.n

    def triangle_coords(self, t: int) -> np.ndarray:
        """(3, 2) vertex coordinates of triangle t."""
        return self.vertices[self.triangles[t]]

    def signed_area(self, t: int) -> float:
        p = self.triangle_coords(t)
        u, v = p[1] - p[0], p[2] - p[0]
        return 0.5 * float(u[0] * v[1] - u[1] * v[0])

    def summary(self) -> str:
        nb_v = int(self.vertex_on_boundary.sum())
        nb_e = int(self.edge_on_boundary.sum())
        return (
            f"unit-square mesh n={self.n} (h=1/{self.n}): "
            f"{self.num_vertices} vertices ({nb_v} on boundary), "
            f"{self.num_triangles} triangles, "
            f"{self.num_edges} edges ({nb_e} on boundary), "
            f"{6 * self.num_vertices + self.num_edges} DOFs"
        )


def build_uniform_mesh(n: int) -> Mesh:
    """Triangulate the unit square with n subdivisions per side.

    Each cell is split by its bottom-left to top-right diagonal; both
    triangles are counterclockwise. Edges are listed horizontal block first
    (row-major), then vertical, then oblique.
    """
    if not isinstance(n, (int, np.integer)) or isinstance(n, bool):
        raise TypeError(f"n must be an integer, got {type(n).__name__}")
    if n < 1:
        raise ValueError(f"mesh subdivisions must be >= 1, got {n}")

    m = n + 1
    xs = np.arange(m) / n
    gx, gy = np.meshgrid(xs, xs, indexing="xy")
    vertices = np.column_stack([gx.ravel(), gy.ravel()])

    def vid(i, j):
        return j * m + i

    edges = []
    edge_index = {}

    def add_edge(a, b):
        key = (a, b) if a < b else (b, a)
        edge_index[key] = len(edges)
        edges.append(key)

    for j in range(m):          # horizontal
        for i in range(n):
            add_edge(vid(i, j), vid(i + 1, j))
    for j in range(n):          # vertical
        for i in range(m):
            add_edge(vid(i, j), vid(i, j + 1))
    for j in range(n):          # oblique
        for i in range(n):
            add_edge(vid(i, j), vid(i + 1, j + 1))

    triangles = []
    triangle_edges = []

    def local_edges(a, b, c):
        return [
            edge_index[(a, b) if a < b else (b, a)],
            edge_index[(b, c) if b < c else (c, b)],
            edge_index[(c, a) if c < a else (a, c)],
        ]

    for j in range(n):
        for i in range(n):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            triangles.append((v00, v10, v11))          # lower
            triangle_edges.append(local_edges(v00, v10, v11))
            triangles.append((v00, v11, v01))          # upper
            triangle_edges.append(local_edges(v00, v11, v01))

    edges_arr = np.array(edges, dtype=np.int64)
    triangles_arr = np.array(triangles, dtype=np.int64)
    triangle_edges_arr = np.array(triangle_edges, dtype=np.int64)

    edge_midpoints = 0.5 * (vertices[edges_arr[:, 0]] + vertices[edges_arr[:, 1]])

    # boundary = incident to exactly one triangle
    edge_tri_count = np.zeros(len(edges_arr), dtype=np.int64)
    for te in triangle_edges_arr:
        edge_tri_count[te] += 1
    edge_on_boundary = edge_tri_count == 1
    vertex_on_boundary = np.zeros(len(vertices), dtype=bool)
    for (a, b), on_b in zip(edges_arr, edge_on_boundary):
        if on_b:
            vertex_on_boundary[a] = True
            vertex_on_boundary[b] = True

    return Mesh(
        n=int(n),
        vertices=vertices,
        triangles=triangles_arr,
        edges=edges_arr,
        edge_midpoints=edge_midpoints,
        triangle_edges=triangle_edges_arr,
        vertex_on_boundary=vertex_on_boundary,
        edge_on_boundary=edge_on_boundary,
    )


@dataclass(frozen=True)
class DofMap:
    """Bijection between (entity, slot) pairs and global DOF indices.

    ``vertex_dofs[v, k]`` is the global index of slot k at vertex v (slot
    order: value, dx, dy, dxx, dxy, dyy); ``edge_dofs[e]`` the midside
    normal-derivative DOF of edge e. ``constrained`` marks clamped DOFs;
    ``free_of_global`` maps global index -> reduced index (-1 if clamped)
    and ``globals_of_free`` is its inverse, sorted ascending.
    """

    scheme: OrderingScheme
    total_dofs: int
    vertex_dofs: np.ndarray
    edge_dofs: np.ndarray
    constrained: np.ndarray
    minimal_bc: bool = False
    free_of_global: np.ndarray = field(repr=False, default=None)
    globals_of_free: np.ndarray = field(repr=False, default=None)

    @property
    def num_free(self) -> int:
        return len(self.globals_of_free)

    def vertex_dof(self, v: int, slot: int | str) -> int:
        if isinstance(slot, str):
            slot = SLOT_INDEX[slot]
        return int(self.vertex_dofs[v, slot])

    def edge_dof(self, e: int) -> int:
        return int(self.edge_dofs[e])

    def triangle_dofs(self, mesh: Mesh, t: int) -> np.ndarray:
        """The 21 global DOFs of triangle t in local order: the six slots of
        each vertex, then the three midside DOFs of edges (v0,v1), (v1,v2),
        (v2,v0)."""
        verts = mesh.triangles[t]
        out = np.empty(21, dtype=np.int64)
        out[:18] = self.vertex_dofs[verts].ravel()
        out[18:] = self.edge_dofs[mesh.triangle_edges[t]]
        return out


def _vertex_visit_order(mesh: Mesh, scheme: OrderingScheme) -> np.ndarray:
    v = np.arange(mesh.num_vertices)
    if scheme is OrderingScheme.ALTERNATING_VERTEX:
        return np.concatenate([v[::2], v[1::2]])
    return v


def enumerate_dofs(
    mesh: Mesh,
    scheme: OrderingScheme | int = OrderingScheme.VERTEX_BLOCK,
    minimal_bc: bool = False,
) -> DofMap:
    """Number the 6 V + E degrees of freedom under one of the three schemes.

    All schemes number the midside DOFs last, in the mesh's edge order
    (horizontal, vertical, oblique). ``minimal_bc=False`` clamps all six
    slots of every boundary vertex; ``minimal_bc=True`` leaves the second
    derivative along the boundary normal direction free at non-corner
    boundary vertices.
    """
    if isinstance(scheme, int):
        scheme = OrderingScheme.from_int(scheme)
    nv, ne = mesh.num_vertices, mesh.num_edges
    total = 6 * nv + ne

    vertex_dofs = np.empty((nv, 6), dtype=np.int64)
    if scheme is OrderingScheme.FUNCTION_FIRST:
        for k in range(6):
            vertex_dofs[:, k] = k * nv + np.arange(nv)
    else:
        order = _vertex_visit_order(mesh, scheme)
        for rank, v in enumerate(order):
            vertex_dofs[v] = 6 * rank + np.arange(6)
    edge_dofs = 6 * nv + np.arange(ne)

    constrained = np.zeros(total, dtype=bool)
    m = mesh.n + 1
    for v in np.flatnonzero(mesh.vertex_on_boundary):
        if minimal_bc:
            i, j = v % m, v // m
            on_vertical = i == 0 or i == mesh.n    # boundary running in y
            on_horizontal = j == 0 or j == mesh.n  # boundary running in x
            clamped = {"value", "dx", "dy", "dxy"}
            if on_vertical:
                clamped.add("dyy")
            if on_horizontal:
                clamped.add("dxx")
            for name in clamped:
                constrained[vertex_dofs[v, SLOT_INDEX[name]]] = True
        else:
            constrained[vertex_dofs[v]] = True
    constrained[edge_dofs[mesh.edge_on_boundary]] = True

    free_of_global = np.full(total, -1, dtype=np.int64)
    globals_of_free = np.flatnonzero(~constrained)
    free_of_global[globals_of_free] = np.arange(len(globals_of_free))

    return DofMap(
        scheme=scheme,
        total_dofs=total,
        vertex_dofs=vertex_dofs,
        edge_dofs=edge_dofs,
        constrained=constrained,
        minimal_bc=minimal_bc,
        free_of_global=free_of_global,
        globals_of_free=globals_of_free,
    )


def constrained_dofs(mesh: Mesh, dofmap: DofMap) -> set[int]:
    """Global indices of the clamped DOFs (boundary vertices and midsides)."""
    return set(np.flatnonzero(dofmap.constrained).tolist())


def ordering_permutation(dm_from: DofMap, dm_to: DofMap) -> np.ndarray:
    """Permutation p with p[i_from] = i_to for the same (entity, slot).

    Both maps must come from the same mesh and boundary-condition choice.
    """
    if dm_from.total_dofs != dm_to.total_dofs:
        raise ValueError("DOF maps are not over the same mesh")
    p = np.empty(dm_from.total_dofs, dtype=np.int64)
    p[dm_from.vertex_dofs.ravel()] = dm_to.vertex_dofs.ravel()
    p[dm_from.edge_dofs] = dm_to.edge_dofs
    return p


def free_permutation(dm_from: DofMap, dm_to: DofMap) -> np.ndarray:
    """Same as :func:`ordering_permutation` but between reduced indices."""
    p = ordering_permutation(dm_from, dm_to)
    return dm_to.free_of_global[p[dm_from.globals_of_free]]


def export_mesh_csv(mesh: Mesh, dofmap: DofMap, directory) -> list[str]:
    """Write vertices.csv, edges.csv and triangles.csv under ``directory``.

    Returns the written file paths. Coordinates at full precision; intended
    for debugging and plotting, not re-import.
    """
    import os

    os.makedirs(directory, exist_ok=True)
    paths = []

    path = os.path.join(directory, "vertices.csv")
    with open(path, "w") as f:
        f.write("vertex,x,y,on_boundary," + ",".join(f"dof_{s}" for s in VERTEX_SLOTS) + "\n")
        for v in range(mesh.num_vertices):
            x, y = (float(c) for c in mesh.vertices[v])
            dofs = ",".join(str(d) for d in dofmap.vertex_dofs[v])
            f.write(f"{v},{x!r},{y!r},{int(mesh.vertex_on_boundary[v])},{dofs}\n")
    paths.append(path)

    path = os.path.join(directory, "edges.csv")
    with open(path, "w") as f:
        f.write("edge,v_lo,v_hi,mid_x,mid_y,on_boundary,dof_normal\n")
        for e in range(mesh.num_edges):
            a, b = mesh.edges[e]
            mx, my = (float(c) for c in mesh.edge_midpoints[e])
            f.write(
                f"{e},{a},{b},{mx!r},{my!r},"
                f"{int(mesh.edge_on_boundary[e])},{dofmap.edge_dofs[e]}\n"
            )
    paths.append(path)

    path = os.path.join(directory, "triangles.csv")
    with open(path, "w") as f:
        f.write("triangle,v0,v1,v2,e01,e12,e20\n")
        for t in range(mesh.num_triangles):
            v = mesh.triangles[t]
            e = mesh.triangle_edges[t]
            f.write(f"{t},{v[0]},{v[1]},{v[2]},{e[0]},{e[1]},{e[2]}\n")
    paths.append(path)

    return paths
