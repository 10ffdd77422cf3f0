"""Fixed-point driver for the linearized stream-function problem.

The initial guess is the solution of the biharmonic problem (convection form
dropped, same load), solved with PCG. Each outer iteration freezes the
convection field at the previous iterate, reassembles the convection form
and solves the nonsymmetric system with BiCGSTAB. The iteration stops when
both the coefficient update norm and the relative nonlinear residual fall
below the tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assembly import (
    ElementTables,
    assemble_biharmonic,
    assemble_convection,
    assemble_load,
    manufactured_rhs,
)
from .mesh import Mesh, OrderingScheme, enumerate_dofs
from .quadrature import rule as quad_rule
from .solvers import SolveReport, bicgstab, pcg


@dataclass(frozen=True)
class PicardConfig:
    """Run parameters; tolerances per the fixed-point stopping rule.

    ``linear_tol=None`` resolves to ``tol`` for a standalone biharmonic
    solve and to ``tol * 1e-3`` inside the fixed-point loop: the inner
    solves must be accurate well below the outer update test, or the
    update norms stall at the inner solver's noise floor and the dual
    stopping criterion is never met.
    """

    reynolds: float = 1.0
    tol: float = 1e-5
    max_outer: int = 50
    n_quad_points: int = 6
    ordering: OrderingScheme | int = OrderingScheme.VERTEX_BLOCK
    linear_tol: float | None = None
    linear_max_iter: int = 20000
    minimal_bc: bool = False
    flip_convention: bool = False

    def __post_init__(self):
        if self.reynolds <= 0:
            raise ValueError("Reynolds number must be positive")
        if self.tol <= 0 or (self.linear_tol is not None and self.linear_tol <= 0):
            raise ValueError("tolerances must be positive")
        if self.max_outer < 1:
            raise ValueError("max_outer must be at least 1")

    @property
    def biharmonic_tol(self) -> float:
        return self.tol if self.linear_tol is None else self.linear_tol

    @property
    def inner_tol(self) -> float:
        return self.tol * 1e-3 if self.linear_tol is None else self.linear_tol


@dataclass
class OuterIteration:
    index: int
    update_norm: float
    residual: float
    report: SolveReport


@dataclass
class PicardTrace:
    iterations: list[OuterIteration] = field(default_factory=list)
    converged: bool = False
    coefficients: np.ndarray | None = None
    initial_report: SolveReport | None = None

    @property
    def total_inner_iterations(self) -> float:
        return sum(it.report.iterations for it in self.iterations)

    @property
    def mean_inner_iterations(self) -> float:
        if not self.iterations:
            return 0.0
        return self.total_inner_iterations / len(self.iterations)

    @property
    def total_flops(self) -> int:
        total = sum(it.report.flops for it in self.iterations)
        if self.initial_report is not None:
            total += self.initial_report.flops
        return total

    def export_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write("outer,update_norm,residual,inner_iterations,inner_flops,inner_converged\n")
            for it in self.iterations:
                f.write(
                    f"{it.index},{it.update_norm!r},{it.residual!r},"
                    f"{it.report.iterations:g},{it.report.flops},"
                    f"{int(it.report.converged)}\n"
                )


class PicardError(RuntimeError):
    """Raised when an inner solve breaks down; carries the trace so far."""

    def __init__(self, message: str, trace: PicardTrace):
        super().__init__(message)
        self.trace = trace


def _setup(mesh: Mesh, config: PicardConfig):
    dofmap = enumerate_dofs(mesh, config.ordering, minimal_bc=config.minimal_bc)
    q = quad_rule(config.n_quad_points)
    tables = ElementTables(mesh, q)
    return dofmap, q, tables


def _expand(dofmap, reduced: np.ndarray) -> np.ndarray:
    full = np.zeros(dofmap.total_dofs)
    full[dofmap.globals_of_free] = reduced
    return full


def solve_biharmonic_problem(
    mesh: Mesh,
    config: PicardConfig,
    load: str = "full",
):
    """Solve the biharmonic problem A psi = l with PCG.

    ``load`` selects the manufactured forcing: 'full' keeps the convective
    term (the reference-table runs), 'stokes' drops it so the exact stream
    function solves the continuous problem (refinement studies), 'zero'
    uses f = 0.

    Returns (full-DOF coefficients, SolveReport).
    """
    dofmap, q, tables = _setup(mesh, config)
    ms = manufactured_rhs(config.reynolds, flip_convention=config.flip_convention)
    if load == "full":
        f = ms.forcing
    elif load == "stokes":
        f = ms.forcing_linear
    elif load == "zero":
        f = lambda x, y: (np.zeros_like(x), np.zeros_like(y))
    else:
        raise ValueError(f"unknown load '{load}'")
    A = assemble_biharmonic(mesh, dofmap, q, config.reynolds, tables=tables)
    ell = assemble_load(mesh, dofmap, q, f, tables=tables, source=load)
    x, report = pcg(A.matrix, ell.vector, tol=config.biharmonic_tol,
                    max_iter=config.linear_max_iter)
    return _expand(dofmap, x), report


def solve_linearized_nse(
    mesh: Mesh,
    config: PicardConfig,
    include_convection: bool = True,
):
    """Run the fixed-point iteration for the linearized problem.

    Returns (full-DOF coefficients, PicardTrace). ``include_convection=False``
    degenerates to the biharmonic problem solved iteratively (a consistency
    check: the result must match solve_biharmonic_problem).
    """
    dofmap, q, tables = _setup(mesh, config)

    ms = manufactured_rhs(config.reynolds, flip_convention=config.flip_convention)
    A = assemble_biharmonic(mesh, dofmap, q, config.reynolds, tables=tables)
    ell = assemble_load(mesh, dofmap, q, ms.forcing, tables=tables, source="manufactured")
    norm_ell = float(np.linalg.norm(ell.vector))
    scale = norm_ell if norm_ell > 0 else 1.0

    trace = PicardTrace()
    x0, init_report = pcg(A.matrix, ell.vector, tol=config.inner_tol,
                          max_iter=config.linear_max_iter)
    trace.initial_report = init_report
    if not init_report.converged:
        raise PicardError("initial biharmonic PCG solve did not converge", trace)
    psi_full = _expand(dofmap, x0)

    free = dofmap.globals_of_free
    for outer in range(1, config.max_outer + 1):
        if include_convection:
            B = assemble_convection(
                mesh, dofmap, q, psi_full, tables=tables,
                flip_convention=config.flip_convention,
            )
            system = A.matrix + B.matrix
        else:
            system = A.matrix
        x, report = bicgstab(
            system, ell.vector, tol=config.inner_tol, max_iter=config.linear_max_iter
        )
        if report.breakdown is not None:
            trace.iterations.append(
                OuterIteration(index=outer, update_norm=np.nan, residual=np.nan, report=report)
            )
            raise PicardError(f"BiCGSTAB {report.breakdown} at outer iteration {outer}", trace)

        new_full = _expand(dofmap, x)
        update = float(np.linalg.norm(new_full[free] - psi_full[free]))
        psi_full = new_full

        # nonlinear residual of the discrete equation with the new iterate
        if include_convection:
            B_new = assemble_convection(
                mesh, dofmap, q, psi_full, tables=tables,
                flip_convention=config.flip_convention,
            )
            res_vec = (A.matrix + B_new.matrix).matvec(x) - ell.vector
        else:
            res_vec = A.matrix.matvec(x) - ell.vector
        residual = float(np.linalg.norm(res_vec)) / scale

        trace.iterations.append(
            OuterIteration(index=outer, update_norm=update, residual=residual, report=report)
        )
        if update <= config.tol and residual <= config.tol:
            trace.converged = True
            break

    trace.coefficients = psi_full
    return psi_full, trace
