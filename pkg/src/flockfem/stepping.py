"""Semi-implicit time stepping for the alignment-model family.

Each step solves three linear systems (density, weight, velocity), each
implicit only in its own unknown with all coefficients frozen at the current
step, so the solve order is immaterial; we fix density, weight, velocity for
reproducibility. Variants:

* ``s_model``        - weight transported along the filtered velocity
* ``cucker_smale``   - weight frozen at its initial field
* ``motsch_tadmor``  - no weight unknown; the force is scaled by the
  reciprocal filtered density recomputed each step

Weak forms (test functions v in P3, q in P2, time step k):

    (1/k)<rho', v> - <rho' u, dv/dx>                        = (1/k)<rho, v> + <f1, v>
    (1/k)<w', v>   + <(dw'/dx) uF, v>                        = (1/k)<w, v> + <f2, v>
    (1/k)<u', q>   + <u' du/dx, q> + <w u' rho_phi, q>       = (1/k)<u, q> + <w (u rho)_phi, q> + <f3, q>

where primes denote the new time level and ``uF = (u rho)_phi / rho_phi``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from .errors import BlowUpSuspected, CFLViolation, FlockFemError, FloorViolation, SolverFailure
from .kernels import KernelTable
from .mesh import FEFunction, PeriodicMesh, interpolate

VARIANTS = ("cucker_smale", "motsch_tadmor", "s_model")


@dataclass
class SimState:
    """Discrete state (rho, w, u) at time t."""

    rho: FEFunction
    w: FEFunction
    u: FEFunction
    t: float = 0.0

    def __post_init__(self):
        for name, f, space in (("rho", self.rho, "P3"), ("w", self.w, "P3"), ("u", self.u, "P2")):
            if f.space != space:
                raise ValueError(f"{name} must live in {space}, got {f.space}")
            if not np.all(np.isfinite(f.coefficients)):
                raise ValueError(f"{name} has non-finite coefficients")

    @property
    def mesh(self) -> PeriodicMesh:
        return self.rho.mesh

    def copy(self) -> "SimState":
        return SimState(self.rho.copy(), self.w.copy(), self.u.copy(), self.t)


@dataclass
class StepConfig:
    """Time-stepping parameters and monitor thresholds."""

    k: float
    T: float
    variant: str = "s_model"
    forcing: tuple[Callable, Callable, Callable] | None = None
    cfl_ratio_max: float = 0.25
    cfl_strict: bool = False
    rho_phi_floor: float = 1e-10
    dxu_cap: float = 1e6
    solver_tol: float = 1e-8

    def __post_init__(self):
        if self.k <= 0:
            raise ValueError("time step must be positive")
        if self.T < self.k:
            raise ValueError("final time must be at least one step")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got '{self.variant}'")

    def n_steps(self) -> int:
        ratio = self.T / self.k
        n = int(round(ratio))
        if n < 1 or abs(ratio - n) > 1e-6 * max(1.0, ratio):
            raise ValueError(
                f"final time T={self.T} is not an integer number of steps of k={self.k}"
            )
        return n

    def check_cfl(self, h: float):
        if self.k <= self.cfl_ratio_max * h:
            return
        msg = (
            f"time step k={self.k:.6g} exceeds {self.cfl_ratio_max:.3g}*h="
            f"{self.cfl_ratio_max * h:.6g}; stability is not guaranteed"
        )
        if self.cfl_strict:
            raise CFLViolation(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=3)


@dataclass
class LinearSystem:
    """Assembled cyclic-banded system stored dense over the periodic DOFs."""

    matrix: np.ndarray
    rhs: np.ndarray

    def solve(self, tol: float) -> np.ndarray:
        a, b = self.matrix, self.rhs
        scale = np.linalg.norm(a, np.inf)
        lu, piv = scipy.linalg.lu_factor(a, check_finite=False)
        pivots = np.abs(np.diag(lu))
        if pivots.min() < 1e-14 * scale:
            raise SolverFailure(
                f"near-singular system: pivot {pivots.min():.3e} below "
                f"1e-14 * |A|_inf = {1e-14 * scale:.3e}"
            )
        x = scipy.linalg.lu_solve((lu, piv), b, check_finite=False)
        resid = np.linalg.norm(a @ x - b, np.inf)
        bound = tol * (scale * np.linalg.norm(x, np.inf) + np.linalg.norm(b, np.inf))
        if resid > max(bound, tol):
            raise SolverFailure(f"residual {resid:.3e} above tolerance {bound:.3e}")
        return x


class Assembler:
    """Element-loop assembly of mass/transport forms for one FE space."""

    def __init__(self, mesh: PeriodicMesh, space: str):
        self.mesh = mesh
        self.space = space
        self.n = mesh.n_dof(space)
        self.dofs = mesh.dofmap(space)  # (E, nloc)
        self.psi = mesh.basis_at_quad(space)  # (nloc, Q)
        self.dpsi = mesh.basis_at_quad(space, deriv=1)  # reference derivative
        self.wq = mesh.quad_weights  # reference weights, sum 1
        self.rows = self.dofs[:, :, None].repeat(self.dofs.shape[1], axis=2)
        self.cols = self.dofs[:, None, :].repeat(self.dofs.shape[1], axis=1)
        # local blocks of <v_j, v_i> are element-independent
        local_mass = mesh.h * np.einsum("q,iq,jq->ij", self.wq, self.psi, self.psi)
        self.mass = self._scatter(np.broadcast_to(local_mass, (mesh.num_elements,) + local_mass.shape))

    def _scatter(self, local: np.ndarray) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        np.add.at(a, (self.rows.ravel(), self.cols.ravel()), np.ascontiguousarray(local).ravel())
        return a

    def weighted_mass(self, c_quad: np.ndarray) -> np.ndarray:
        """Matrix of <c v_j, v_i> for a coefficient sampled at quadrature points."""
        c = c_quad.reshape(self.mesh.num_elements, -1)
        local = self.mesh.h * np.einsum("q,eq,iq,jq->eij", self.wq, c, self.psi, self.psi)
        return self._scatter(local)

    def transport_to_test_grad(self, c_quad: np.ndarray) -> np.ndarray:
        """Matrix of <c v_j, dv_i/dx>; the h from dx cancels the jacobian."""
        c = c_quad.reshape(self.mesh.num_elements, -1)
        local = np.einsum("q,eq,iq,jq->eij", self.wq, c, self.dpsi, self.psi)
        return self._scatter(local)

    def transport_of_trial_grad(self, c_quad: np.ndarray) -> np.ndarray:
        """Matrix of <c dv_j/dx, v_i>."""
        c = c_quad.reshape(self.mesh.num_elements, -1)
        local = np.einsum("q,eq,iq,jq->eij", self.wq, c, self.psi, self.dpsi)
        return self._scatter(local)

    def load(self, g_quad: np.ndarray) -> np.ndarray:
        """Vector of <g, v_i> for g sampled at quadrature points."""
        g = g_quad.reshape(self.mesh.num_elements, -1)
        local = self.mesh.h * np.einsum("q,eq,iq->ei", self.wq, g, self.psi)
        b = np.zeros(self.n)
        np.add.at(b, self.dofs.ravel(), local.ravel())
        return b


@dataclass
class _StepContext:
    """Frozen step-n samples shared by the three solves of one step."""

    rho_q: np.ndarray
    u_q: np.ndarray
    du_q: np.ndarray
    w_q: np.ndarray
    rho_phi_q: np.ndarray
    urho_phi_q: np.ndarray
    w_eff_q: np.ndarray
    u_favre_q: np.ndarray | None


@dataclass
class Monitors:
    rho_min: float
    rho_phi_min: float
    dxu_max: float


@dataclass
class RunResult:
    """Trajectory snapshots plus per-sample diagnostics records.

    ``error`` carries the exception when the run aborted early; the snapshot
    and record lists then hold the partial trajectory.
    """

    snapshots: list
    records: list
    cfg: StepConfig
    steps_completed: int
    error: Exception | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


class Stepper:
    """Owns the assembly caches for one (mesh, kernel) pair."""

    def __init__(self, table: KernelTable, cfg: StepConfig):
        self.table = table
        self.mesh = table.mesh
        self.cfg = cfg
        self.p3 = Assembler(self.mesh, "P3")
        self.p2 = Assembler(self.mesh, "P2")
        self._node_kernel_rows = None  # P3-node targets, for the MT derived weight

    # -- shared per-step samples ------------------------------------------------

    def _context(self, state: SimState) -> _StepContext:
        rho_q = state.rho.at_quad().ravel()
        u_q = state.u.at_quad().ravel()
        du_q = state.u.at_quad(deriv=1).ravel()
        w_q = state.w.at_quad().ravel()
        rho_phi_q = self.table.convolve_quad(rho_q)
        urho_phi_q = self.table.convolve_quad(u_q * rho_q)
        variant = self.cfg.variant
        u_favre_q = None
        if variant == "s_model":
            self._require_floor(rho_phi_q)
            u_favre_q = urho_phi_q / rho_phi_q
            w_eff_q = w_q
        elif variant == "cucker_smale":
            w_eff_q = w_q
        else:  # motsch_tadmor
            self._require_floor(rho_phi_q)
            w_eff_q = 1.0 / rho_phi_q
        return _StepContext(rho_q, u_q, du_q, w_q, rho_phi_q, urho_phi_q, w_eff_q, u_favre_q)

    def _require_floor(self, rho_phi_q: np.ndarray):
        i = int(np.argmin(rho_phi_q))
        if rho_phi_q[i] < self.cfg.rho_phi_floor:
            raise FloorViolation(
                rho_phi_q[i], self.mesh.global_quad_points.ravel()[i], self.cfg.rho_phi_floor
            )

    def _forcing_load(self, assembler: Assembler, idx: int, t_new: float) -> np.ndarray:
        if self.cfg.forcing is None:
            return 0.0
        f = self.cfg.forcing[idx]
        xq = self.mesh.global_quad_points.ravel()
        return assembler.load(np.asarray(f(t_new, xq), dtype=float))

    # -- the three solves ---------------------------------------------------------

    def step_rho(self, state: SimState, ctx: _StepContext | None = None) -> FEFunction:
        ctx = ctx or self._context(state)
        k = self.cfg.k
        a = self.p3.mass / k - self.p3.transport_to_test_grad(ctx.u_q)
        b = self.p3.mass @ state.rho.coefficients / k
        b = b + self._forcing_load(self.p3, 0, state.t + k)
        coeffs = LinearSystem(a, b).solve(self.cfg.solver_tol)
        return FEFunction(self.mesh, "P3", coeffs)

    def step_w(self, state: SimState, ctx: _StepContext | None = None) -> FEFunction:
        if ctx is None or ctx.u_favre_q is None:
            rho_q = state.rho.at_quad().ravel()
            u_q = state.u.at_quad().ravel()
            rho_phi_q = self.table.convolve_quad(rho_q)
            self._require_floor(rho_phi_q)
            u_favre_q = self.table.convolve_quad(u_q * rho_q) / rho_phi_q
        else:
            u_favre_q = ctx.u_favre_q
        k = self.cfg.k
        a = self.p3.mass / k + self.p3.transport_of_trial_grad(u_favre_q)
        b = self.p3.mass @ state.w.coefficients / k
        b = b + self._forcing_load(self.p3, 1, state.t + k)
        coeffs = LinearSystem(a, b).solve(self.cfg.solver_tol)
        return FEFunction(self.mesh, "P3", coeffs)

    def step_u(self, state: SimState, w_effective=None, ctx: _StepContext | None = None) -> FEFunction:
        ctx = ctx or self._context(state)
        if w_effective is None:
            w_eff_q = ctx.w_eff_q
        elif isinstance(w_effective, FEFunction):
            w_eff_q = w_effective.at_quad().ravel()
        else:
            w_eff_q = np.asarray(w_effective, dtype=float).ravel()
        k = self.cfg.k
        a = (
            self.p2.mass / k
            + self.p2.weighted_mass(ctx.du_q)
            + self.p2.weighted_mass(w_eff_q * ctx.rho_phi_q)
        )
        b = self.p2.mass @ state.u.coefficients / k
        b = b + self.p2.load(w_eff_q * ctx.urho_phi_q)
        b = b + self._forcing_load(self.p2, 2, state.t + k)
        coeffs = LinearSystem(a, b).solve(self.cfg.solver_tol)
        return FEFunction(self.mesh, "P2", coeffs)

    # -- step and run -------------------------------------------------------------

    def monitors(self, state: SimState, ctx: _StepContext | None = None) -> Monitors:
        dense = self.mesh.dense_points
        rho_dense = state.rho.eval(dense)
        du_dense = state.u.eval(dense, deriv=1)
        rho_phi_q = ctx.rho_phi_q if ctx is not None else self.table.convolve_quad(
            state.rho.at_quad().ravel()
        )
        return Monitors(
            rho_min=float(rho_dense.min()),
            rho_phi_min=float(rho_phi_q.min()),
            dxu_max=float(np.abs(du_dense).max()),
        )

    def _check_monitors(self, state: SimState, mon: Monitors):
        if mon.rho_phi_min < self.cfg.rho_phi_floor:
            xq = self.mesh.global_quad_points.ravel()
            rho_phi_q = self.table.convolve_quad(state.rho.at_quad().ravel())
            raise BlowUpSuspected(
                "rho_phi_min", mon.rho_phi_min, xq[int(np.argmin(rho_phi_q))], self.cfg.rho_phi_floor
            )
        if mon.dxu_max > self.cfg.dxu_cap:
            dense = self.mesh.dense_points
            du = np.abs(state.u.eval(dense, deriv=1))
            raise BlowUpSuspected("dxu_max", mon.dxu_max, dense[int(np.argmax(du))], self.cfg.dxu_cap)

    def _derived_mt_weight(self, rho: FEFunction) -> FEFunction:
        if self._node_kernel_rows is None:
            self._node_kernel_rows = self.table.target_matrix(self.mesh.node_positions("P3"))
        rho_phi_nodes = self._node_kernel_rows @ rho.at_quad().ravel()
        i = int(np.argmin(rho_phi_nodes))
        if rho_phi_nodes[i] < self.cfg.rho_phi_floor:
            raise FloorViolation(
                rho_phi_nodes[i], self.mesh.node_positions("P3")[i], self.cfg.rho_phi_floor
            )
        return FEFunction(self.mesh, "P3", 1.0 / rho_phi_nodes)

    def advance(self, state: SimState) -> SimState:
        """One time step; raises BlowUpSuspected/FloorViolation/SolverFailure."""
        ctx = self._context(state)
        self._check_monitors(state, Monitors(
            rho_min=float(ctx.rho_q.min()),
            rho_phi_min=float(ctx.rho_phi_q.min()),
            dxu_max=float(np.abs(state.u.eval(self.mesh.dense_points, deriv=1)).max()),
        ))
        new_rho = self.step_rho(state, ctx)
        if self.cfg.variant == "s_model":
            new_w = self.step_w(state, ctx)
        elif self.cfg.variant == "cucker_smale":
            new_w = state.w
        else:
            new_w = self._derived_mt_weight(new_rho)
        new_u = self.step_u(state, ctx=ctx)
        return SimState(new_rho, new_w, new_u, state.t + self.cfg.k)

    def run(self, initial: SimState, sample_every: int = 1) -> RunResult:
        """March to T, sampling diagnostics every ``sample_every`` steps.

        Step 0 and the final step are always sampled. On failure the partial
        trajectory is returned with the error attached.
        """
        from . import diagnostics  # deferred; diagnostics imports nothing from here

        n_steps = self.cfg.n_steps()
        self.cfg.check_cfl(self.mesh.h)
        if sample_every < 1:
            raise ValueError("sample_every must be at least 1")
        state = initial.copy()
        snapshots = [state.copy()]
        records = [diagnostics.bulk_stats(state, self.table)]
        error = None
        steps_done = 0
        for n in range(n_steps):
            try:
                state = self.advance(state)
            except FlockFemError as exc:  # keep the partial trajectory
                error = exc
                break
            steps_done = n + 1
            if steps_done % sample_every == 0 or steps_done == n_steps:
                snapshots.append(state.copy())
                records.append(diagnostics.bulk_stats(state, self.table))
        return RunResult(
            snapshots=snapshots,
            records=records,
            cfg=self.cfg,
            steps_completed=steps_done,
            error=error,
        )


def run(initial: SimState, cfg: StepConfig, table: KernelTable, sample_every: int = 1) -> RunResult:
    """Convenience wrapper building a :class:`Stepper` and running to T."""
    return Stepper(table, cfg).run(initial, sample_every=sample_every)


def constant_state(mesh: PeriodicMesh, rho: float = 1.0, u: float = 0.0, w: float = 1.0, t: float = 0.0) -> SimState:
    """Spatially constant state; an exact fixed point of every variant."""
    return SimState(
        rho=interpolate(mesh, "P3", lambda x: np.full_like(x, float(rho))),
        w=interpolate(mesh, "P3", lambda x: np.full_like(x, float(w))),
        u=interpolate(mesh, "P2", lambda x: np.full_like(x, float(u))),
        t=t,
    )
