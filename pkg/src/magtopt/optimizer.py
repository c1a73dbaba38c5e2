"""Level-set descent on the unit sphere of L2 over the design region.

The design is a nodal level set psi (positive = ferromagnetic) kept at unit
L2 norm. Each iteration rotates psi toward the normalized generalized
descent field by spherical interpolation; the step parameter kappa is halved
until the objective strictly decreases. The fixed point psi = c * field is
the discrete optimality condition, detected through the angle between the
two unit vectors.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import fem, problem_setup, topo_derivative
from .cell_problems import CorrectionTable
from .mesh import Region, TriMesh
from .problem_setup import Problem

log = logging.getLogger("magtopt.optimizer")


class DesignSpaceError(Exception):
    pass


class DesignSpace:
    """Design-region function space: node set and P1 mass matrix.

    The mass matrix integrates products of P1 functions over the DESIGN
    elements exactly (consistent element mass A/12 [[2,1,1],[1,2,1],[1,1,2]]).
    """

    def __init__(self, mesh: TriMesh):
        self.mesh = mesh
        self.elements = np.flatnonzero(mesh.region == Region.DESIGN)
        if self.elements.size == 0:
            raise DesignSpaceError("mesh has no DESIGN region")
        self.nodes = np.unique(mesh.tris[self.elements].ravel())
        self.area = float(mesh.areas[self.elements].sum())
        glob2loc = -np.ones(mesh.n_nodes, dtype=np.int64)
        glob2loc[self.nodes] = np.arange(self.nodes.size)
        tr = glob2loc[mesh.tris[self.elements]]
        a = mesh.areas[self.elements]
        base = (np.ones((3, 3)) + np.eye(3)) / 12.0
        data = a[:, None, None] * base
        rows = np.repeat(tr, 3, axis=1).ravel()
        cols = np.tile(tr, (1, 3)).ravel()
        m = self.nodes.size
        self.mass = sp.csr_matrix((data.ravel(), (rows, cols)), shape=(m, m))
        self._glob2loc = glob2loc

    def restrict(self, full: np.ndarray) -> np.ndarray:
        return np.asarray(full, dtype=float)[self.nodes]


@dataclass
class LevelSetField:
    """Nodal level-set values over the design nodes, with cached L2 norm."""
    space: DesignSpace
    values: np.ndarray
    _norm: float = field(default=None, repr=False)

    def norm(self) -> float:
        if self._norm is None:
            v = self.values
            self._norm = float(np.sqrt(v @ (self.space.mass @ v)))
        return self._norm

    def normalized(self) -> "LevelSetField":
        n = self.norm()
        if n == 0.0:
            raise DesignSpaceError("cannot normalize the zero level set")
        return LevelSetField(self.space, self.values / n, 1.0)

    def expand(self) -> np.ndarray:
        """Full-length nodal vector (zeros outside the design node set)."""
        out = np.zeros(self.space.mesh.n_nodes)
        out[self.space.nodes] = self.values
        return out


def l2_inner(mesh: TriMesh, a: LevelSetField, b: LevelSetField) -> float:
    """L2 inner product over the design region; symmetric under swap exactly
    (evaluated in symmetrized form)."""
    if a.space.mesh is not mesh or b.space.mesh is not mesh or a.space is not b.space:
        raise ValueError("fields must share the same design space on this mesh")
    m = a.space.mass
    return 0.5 * (float(a.values @ (m @ b.values))
                  + float(b.values @ (m @ a.values)))


def slerp(psi: LevelSetField, g: LevelSetField, theta: float,
          kappa: float) -> LevelSetField:
    """Spherical step from unit psi toward unit g by fraction kappa of theta;
    stays on the L2 unit sphere (renormalized against roundoff drift)."""
    st = np.sin(theta)
    vals = (np.sin((1.0 - kappa) * theta) * psi.values
            + np.sin(kappa * theta) * g.values) / st
    return LevelSetField(psi.space, vals).normalized()


def ferro_fraction(space: DesignSpace, psi: LevelSetField) -> float:
    mesh = space.mesh
    psi_c = psi.expand()[mesh.tris[space.elements]].mean(axis=1)
    a = mesh.areas[space.elements]
    return float(a[psi_c > 0.0].sum() / space.area)


@dataclass
class OptimizerOptions:
    kappa_start: float = 0.1          # paper practice; Algorithm default is 1
    kappa_min: float = 2.0 ** -20
    theta_tol_deg: float = 1.0
    max_iter: int = 400


@dataclass
class IterationRecord:
    k: int
    objective: float
    theta_deg: float
    kappa: float
    ferro_fraction: float


@dataclass
class OptState:
    """Descent trajectory. objective_history is strictly decreasing across
    accepted iterations by the acceptance rule."""
    psi: LevelSetField
    objective: float
    k: int = 0
    status: str = "running"
    records: list = field(default_factory=list)

    @property
    def objective_history(self):
        return [r.objective for r in self.records]


class Driver:
    """Bundles the PDE pipeline for one problem: state/adjoint solves,
    descent-field assembly, and objective evaluation per level set."""

    def __init__(self, problem: Problem, curve,
                 table_air_in_ferro: CorrectionTable,
                 table_ferro_in_air: CorrectionTable):
        self.problem = problem
        self.curve = curve
        self.tables = (table_air_in_ferro, table_ferro_in_air)
        self.space = DesignSpace(problem.mesh)
        self.rhs = fem.assemble_rhs(problem.mesh, problem.sources)

    def solve(self, psi: LevelSetField) -> tuple[fem.StateResult, float]:
        res = fem.solve_state(self.problem.mesh, self.curve,
                              levelset=psi.expand(), rhs=self.rhs)
        j = problem_setup.eval_objective(self.problem.mesh, res.field,
                                         self.problem.objective)
        return res, j

    def descent_field(self, psi: LevelSetField,
                      state: fem.StateResult) -> LevelSetField:
        mesh = self.problem.mesh
        gvec = problem_setup.assemble_adjoint_rhs(mesh, state.field,
                                                  self.problem.objective)
        p = fem.solve_adjoint(mesh, self.curve, None, state.field,
                              adjoint_rhs=-gvec, state=state)
        td = topo_derivative.assemble_generalized_td(
            mesh, self.curve, psi.expand(), state.field, p, *self.tables)
        return LevelSetField(self.space, self.space.restrict(td.nodal))


def step(state: OptState, descent: LevelSetField, driver: Driver,
         options: OptimizerOptions) -> OptState:
    """One accepted descent iteration (or a terminal state).

    Computes theta between the current psi and the normalized descent field,
    then tries kappa_start, kappa_start/2, ... accepting the first trial
    whose objective strictly decreases. Underflow of kappa marks a stall,
    theta below tolerance marks convergence.
    """
    if descent.norm() == 0.0:
        state.status = "converged"
        return state
    g = descent.normalized()
    cos_t = float(np.clip(l2_inner(driver.problem.mesh, state.psi, g), -1.0, 1.0))
    theta = float(np.arccos(cos_t))
    if np.degrees(theta) < options.theta_tol_deg:
        state.status = "converged"
        return state

    kappa = options.kappa_start
    while kappa >= options.kappa_min:
        trial = slerp(state.psi, g, theta, kappa)
        try:
            res, j_try = driver.solve(trial)
        except fem.SolverError as exc:
            raise fem.SolverError(
                f"state solve failed in trial kappa={kappa:g} "
                f"at iteration {state.k}: {exc}",
                residual_norm=exc.residual_norm) from exc
        if j_try < state.objective:
            state.k += 1
            state.psi = trial
            state.objective = j_try
            state.records.append(IterationRecord(
                state.k, j_try, np.degrees(theta), kappa,
                ferro_fraction(driver.space, trial)))
            state._last_state = res
            return state
        kappa *= 0.5
    state.status = "stalled"
    return state


def run(problem: Problem, curve, table_air_in_ferro: CorrectionTable,
        table_ferro_in_air: CorrectionTable,
        options: OptimizerOptions = None, levelset0: np.ndarray = None,
        callback=None) -> OptState:
    """Full descent loop; returns the trajectory with a terminal status in
    {"converged", "stalled", "max_iter"}.

    levelset0: full nodal seed (default: the problem's smooth all-ferro
    bump); callback(state) runs after every accepted iteration.
    """
    options = options or OptimizerOptions()
    driver = Driver(problem, curve, table_air_in_ferro, table_ferro_in_air)
    seed = problem_setup.default_levelset(problem.mesh) if levelset0 is None \
        else np.asarray(levelset0, dtype=float)
    psi = LevelSetField(driver.space, driver.space.restrict(seed)).normalized()

    res, j0 = driver.solve(psi)
    state = OptState(psi, j0)
    state._last_state = res
    log.info("initial objective %.6e", j0)

    while state.k < options.max_iter:
        g = driver.descent_field(state.psi, state._last_state)
        step(state, g, driver, options)
        if state.status != "running":
            break
        rec = state.records[-1]
        log.info("iter %3d  J=%.6e  theta=%6.2f deg  kappa=%g  ferro=%.3f",
                 rec.k, rec.objective, rec.theta_deg, rec.kappa,
                 rec.ferro_fraction)
        if callback is not None:
            callback(state)
    if state.status == "running":
        state.status = "max_iter"
    log.info("finished: %s after %d iterations, J=%.6e",
             state.status, state.k, state.objective)
    return state
