"""Quintic Argyris shape functions on physical triangles.

Each triangle carries 21 degrees of freedom: value, gradient and Hessian at
the three vertices plus the normal derivative at the three edge midpoints.
The shape functions are constructed per physical triangle by solving the
21 x 21 dual system (functionals applied to monomials); no reference-element
mapping is used because the element is not affine-equivalent. Monomials are
centered at the centroid and scaled by the triangle diameter to keep the
system well conditioned.

The midside normal is global: the edge runs from the lower to the higher
global vertex index and the normal is that direction rotated by +90 degrees.
Both triangles sharing an edge therefore see the same normal, which makes
the midside DOF single-valued and the global field C1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Mesh

DUALITY_TOL = 1e-8

# monomial exponents (i, j) with i + j <= 5, by total degree
MONOMIAL_EXPONENTS = np.array(
    [(i, d - i) for d in range(6) for i in range(d, -1, -1)], dtype=np.int64
)

_FALLING = np.zeros((6, 3))
for _i in range(6):
    _FALLING[_i, 0] = 1.0
    _FALLING[_i, 1] = _i
    _FALLING[_i, 2] = _i * (_i - 1)


class ElementConstructionError(RuntimeError):
    """Raised when the dual system of a triangle cannot be solved reliably."""


@dataclass(frozen=True)
class DofFunctional:
    """One of the 21 nodal functionals of a triangle.

    kind is 'value', 'dx', 'dy', 'dxx', 'dxy', 'dyy' or 'normal'; anchor is
    the vertex or edge midpoint; normal is set only for kind='normal'.
    """

    kind: str
    anchor: np.ndarray
    normal: np.ndarray | None = None


def edge_normal(mesh: Mesh, e: int) -> np.ndarray:
    """Unit normal of edge e under the global lower-to-higher +90 convention."""
    a, b = mesh.edges[e]
    d = mesh.vertices[b] - mesh.vertices[a]
    d = d / np.linalg.norm(d)
    return np.array([-d[1], d[0]])


def _monomial_matrix(local_pts: np.ndarray, ax: int, ay: int, inv_d: float) -> np.ndarray:
    """Design matrix of the (ax, ay) derivative of all monomials.

    local_pts are centered/scaled coordinates; the inv_d factors convert
    local derivatives back to physical ones.
    """
    xi = local_pts[:, 0][:, None]
    eta = local_pts[:, 1][:, None]
    I = MONOMIAL_EXPONENTS[:, 0][None, :]
    J = MONOMIAL_EXPONENTS[:, 1][None, :]
    ci = _FALLING[MONOMIAL_EXPONENTS[:, 0], ax][None, :]
    cj = _FALLING[MONOMIAL_EXPONENTS[:, 1], ay][None, :]
    pi = np.maximum(I - ax, 0)
    pj = np.maximum(J - ay, 0)
    with np.errstate(invalid="ignore"):
        m = ci * cj * (xi ** pi) * (eta ** pj)
    # 0^0 handled by numpy as 1; dropped terms already have zero coefficient
    return m * inv_d ** (ax + ay)


_DERIV_ORDERS = {
    "value": (0, 0),
    "dx": (1, 0),
    "dy": (0, 1),
    "dxx": (2, 0),
    "dxy": (1, 1),
    "dyy": (0, 2),
}


@dataclass(frozen=True)
class ElementBasis:
    """The 21 dual shape functions of one physical triangle.

    coeffs[i, k] is the coefficient of monomial k (in centered/scaled local
    coordinates) of shape function i. Local DOF order: six slots per vertex
    (value, dx, dy, dxx, dxy, dyy) for vertices 0, 1, 2, then the midside
    normal DOFs of edges (v0,v1), (v1,v2), (v2,v0).
    """

    triangle: int
    coords: np.ndarray
    centroid: np.ndarray
    diameter: float
    coeffs: np.ndarray
    functionals: tuple[DofFunctional, ...]
    edge_normals: np.ndarray
    duality_residual: float

    def local_coords(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return (pts - self.centroid) / self.diameter

    def evaluate(self, points: np.ndarray, orders=(("value", (0, 0)),)) -> dict[str, np.ndarray]:
        """Evaluate derivative tables of all 21 shapes at the given points.

        Returns a dict name -> (npoints, 21) array for each requested
        (name, (ax, ay)) pair.
        """
        loc = self.local_coords(points)
        inv_d = 1.0 / self.diameter
        out = {}
        for name, (ax, ay) in orders:
            m = _monomial_matrix(loc, ax, ay, inv_d)
            out[name] = m @ self.coeffs.T
        return out

    def contains(self, point, tol: float = 1e-12) -> bool:
        def cross2(u, v):
            return u[0] * v[1] - u[1] * v[0]

        a, b, c = self.coords
        area2 = cross2(b - a, c - a)
        p = np.asarray(point, dtype=float)
        l2 = cross2(p - a, c - a) / area2
        l3 = cross2(b - a, p - a) / area2
        l1 = 1.0 - l2 - l3
        return bool(min(l1, l2, l3) >= -tol)


def _triangle_functionals(mesh: Mesh, t: int) -> tuple[list[DofFunctional], np.ndarray]:
    coords = mesh.triangle_coords(t)
    fns: list[DofFunctional] = []
    for v in range(3):
        for kind in _DERIV_ORDERS:
            fns.append(DofFunctional(kind=kind, anchor=coords[v]))
    normals = np.empty((3, 2))
    for m, e in enumerate(mesh.triangle_edges[t]):
        n = edge_normal(mesh, e)
        normals[m] = n
        fns.append(DofFunctional(kind="normal", anchor=mesh.edge_midpoints[e].copy(), normal=n))
    return fns, normals


def build_element_basis(mesh: Mesh, triangle_index: int, edge_normal_convention=None) -> ElementBasis:
    """Solve the dual system of one triangle and verify nodal duality.

    ``edge_normal_convention`` may be a callable (mesh, edge) -> unit normal
    to override the global convention (used in tests); the default is the
    shared lower-to-higher +90 convention required for C1 assembly.
    """
    coords = mesh.triangle_coords(triangle_index)
    u, v = coords[1] - coords[0], coords[2] - coords[0]
    area2 = float(u[0] * v[1] - u[1] * v[0])
    if area2 <= 0.0:
        raise ElementConstructionError(
            f"triangle {triangle_index} is degenerate or misoriented (2*area = {area2:g})"
        )

    fns, normals = _triangle_functionals(mesh, triangle_index)
    if edge_normal_convention is not None:
        normals = np.array(
            [edge_normal_convention(mesh, e) for e in mesh.triangle_edges[triangle_index]]
        )
        fns = [
            DofFunctional(kind=f.kind, anchor=f.anchor, normal=normals[i - 18])
            if f.kind == "normal"
            else f
            for i, f in enumerate(fns)
        ]

    centroid = coords.mean(axis=0)
    diameter = max(
        float(np.linalg.norm(coords[i] - coords[j])) for i in range(3) for j in range(i + 1, 3)
    )
    inv_d = 1.0 / diameter

    F = np.empty((21, 21))
    row = 0
    for v in range(3):
        loc = (coords[v] - centroid)[None, :] * inv_d
        for kind in _DERIV_ORDERS:
            ax, ay = _DERIV_ORDERS[kind]
            F[row] = _monomial_matrix(loc, ax, ay, inv_d)[0]
            row += 1
    for m in range(3):
        f = fns[18 + m]
        loc = ((f.anchor - centroid) * inv_d)[None, :]
        gx = _monomial_matrix(loc, 1, 0, inv_d)[0]
        gy = _monomial_matrix(loc, 0, 1, inv_d)[0]
        F[row] = f.normal[0] * gx + f.normal[1] * gy
        row += 1

    try:
        coeffs = np.linalg.solve(F, np.eye(21)).T
    except np.linalg.LinAlgError as exc:
        raise ElementConstructionError(
            f"dual system of triangle {triangle_index} is singular "
            f"(condition estimate {np.linalg.cond(F):.3e})"
        ) from exc

    residual = float(np.abs(F @ coeffs.T - np.eye(21)).max())
    if residual > DUALITY_TOL:
        raise ElementConstructionError(
            f"duality residual {residual:.3e} exceeds {DUALITY_TOL:g} on triangle "
            f"{triangle_index} (condition estimate {np.linalg.cond(F):.3e})"
        )

    return ElementBasis(
        triangle=int(triangle_index),
        coords=coords,
        centroid=centroid,
        diameter=diameter,
        coeffs=coeffs,
        functionals=tuple(fns),
        edge_normals=normals,
        duality_residual=residual,
    )


def build_all_bases(mesh: Mesh) -> list[ElementBasis]:
    """Element bases for every triangle of the mesh."""
    return [build_element_basis(mesh, t) for t in range(mesh.num_triangles)]


EVAL_ORDERS = (
    ("value", (0, 0)),
    ("dx", (1, 0)),
    ("dy", (0, 1)),
    ("dxx", (2, 0)),
    ("dxy", (1, 1)),
    ("dyy", (0, 2)),
)


def eval_shape(basis: ElementBasis, point) -> list[dict]:
    """Value, gradient, Hessian and Laplacian of all 21 shapes at one point."""
    tables = basis.evaluate(np.asarray(point, dtype=float)[None, :], EVAL_ORDERS)
    out = []
    for i in range(21):
        hess = np.array(
            [
                [tables["dxx"][0, i], tables["dxy"][0, i]],
                [tables["dxy"][0, i], tables["dyy"][0, i]],
            ]
        )
        out.append(
            {
                "value": float(tables["value"][0, i]),
                "gradient": np.array([tables["dx"][0, i], tables["dy"][0, i]]),
                "hessian": hess,
                "laplacian": float(hess[0, 0] + hess[1, 1]),
            }
        )
    return out


def interpolate_field(mesh: Mesh, dofmap, derivatives: dict) -> np.ndarray:
    """Argyris interpolant coefficients of an analytically known field.

    ``derivatives`` maps 'value', 'dx', 'dy', 'dxx', 'dxy', 'dyy' to
    callables f(x, y) accepting arrays. The midside DOFs are the normal
    derivatives under the global edge convention.
    """
    coeffs = np.zeros(dofmap.total_dofs)
    vx, vy = mesh.vertices[:, 0], mesh.vertices[:, 1]
    for k, name in enumerate(("value", "dx", "dy", "dxx", "dxy", "dyy")):
        coeffs[dofmap.vertex_dofs[:, k]] = derivatives[name](vx, vy)
    mx, my = mesh.edge_midpoints[:, 0], mesh.edge_midpoints[:, 1]
    gx = derivatives["dx"](mx, my)
    gy = derivatives["dy"](mx, my)
    for e in range(mesh.num_edges):
        n = edge_normal(mesh, e)
        coeffs[dofmap.edge_dofs[e]] = n[0] * gx[e] + n[1] * gy[e]
    return coeffs


def dump_duality_csv(basis: ElementBasis, path) -> None:
    """Write the 21 x 21 duality matrix F_j(phi_i) of one element as CSV."""
    inv_d = 1.0 / basis.diameter
    F = np.empty((21, 21))
    row = 0
    for f in basis.functionals:
        loc = ((f.anchor - basis.centroid) * inv_d)[None, :]
        if f.kind == "normal":
            gx = _monomial_matrix(loc, 1, 0, inv_d)[0]
            gy = _monomial_matrix(loc, 0, 1, inv_d)[0]
            F[row] = f.normal[0] * gx + f.normal[1] * gy
        else:
            ax, ay = _DERIV_ORDERS[f.kind]
            F[row] = _monomial_matrix(loc, ax, ay, inv_d)[0]
        row += 1
    duality = F @ basis.coeffs.T
    with open(path, "w") as fh:
        fh.write(",".join(f"shape_{i}" for i in range(21)) + "\n")
        for j in range(21):
            fh.write(",".join(repr(float(v)) for v in duality[j]) + "\n")
