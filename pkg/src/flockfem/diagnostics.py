"""Measured analogues of the model's conservation and long-time statements.

Everything here is a pure function of a state snapshot: entropy threshold
classification, bulk momentum/energy/variance budgets, alignment amplitude
and its fitted decay rate, relative entropy with its L1/L2 sandwich, the
limiting-distribution bound, and the small-data condition report.

Sup-norm style quantities use the mesh's dense element-interior samples
(10 per element by default) since one-sided derivatives jump at element
boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSeries
from .kernels import KernelTable
from .stepping import SimState


@dataclass
class DiagnosticsRecord:
    """Per-time scalar diagnostics of one state snapshot.

    ``entropy_H`` is None when the density is not strictly positive at the
    quadrature points (the relative entropy is then undefined).
    """

    t: float
    mass: float
    momentum: float
    energy: float
    v2: float
    amplitude: float
    e_min: float
    e_max: float
    rho_min: float
    rho_phi_min: float
    entropy_H: float | None
    l1_dev: float
    dxu_max: float

    FIELDS = (
        "t", "mass", "momentum", "energy", "v2", "amplitude", "e_min", "e_max",
        "rho_min", "rho_phi_min", "entropy_H", "l1_dev", "dxu_max",
    )


@dataclass
class ThresholdVerdict:
    e0_min: float
    e0_max: float
    argmin: float
    verdict: str  # "global_existence_predicted" | "blow_up_predicted"


@dataclass
class EntropyResult:
    H: float | None
    ck_lower: float
    ck_upper: float
    l1_dev: float
    holds: bool
    positive_density: bool


@dataclass
class EntropyBoundResult:
    q_tilde: float
    feasible: bool
    bound: float | None
    w_min: float
    w_max: float


@dataclass
class SmallDataReport:
    amplitude0: float
    u0_inf: float
    eta: float
    epsilon_max: float
    satisfied: bool
    witness: float | None
    reason: str


def e_field(state: SimState, table: KernelTable, points=None):
    """Entropy field du/dx + w * rho_phi at dense samples.

    Returns (points, values, min, max). Points default to the mesh's dense
    element-interior samples.
    """
    mesh = state.mesh
    if points is None:
        points = mesh.dense_points
        mat = table.dense_matrix()
    else:
        points = np.asarray(points, dtype=float)
        mat = table.target_matrix(points)
    rho_phi = mat @ state.rho.at_quad().ravel()
    vals = state.u.eval(points, deriv=1) + state.w.eval(points) * rho_phi
    return points, vals, float(vals.min()), float(vals.max())


def classify_threshold(state: SimState, table: KernelTable) -> ThresholdVerdict:
    """Sign check of the initial entropy field: e0 >= 0 predicts global existence.

    Informational only; the discrete scheme is not guaranteed to blow up in
    finitely many steps when e0 < 0.
    """
    points, vals, lo, hi = e_field(state, table)
    verdict = "global_existence_predicted" if lo >= 0.0 else "blow_up_predicted"
    return ThresholdVerdict(
        e0_min=lo, e0_max=hi, argmin=float(points[int(np.argmin(vals))]), verdict=verdict
    )


def relative_entropy(state: SimState) -> EntropyResult:
    """Relative entropy against the uniform density, with its L1/L2 sandwich.

    On the unit torus: rho_bar = mass, H = int rho log(rho/rho_bar),
    (1/2) |rho - rho_bar|_1^2  <=  rho_bar H  <=  |rho - rho_bar|_2^2.
    Requires rho > 0 at the quadrature points; otherwise H is undefined and
    only the norm deviations are reported.
    """
    mesh = state.mesh
    rho_q = state.rho.at_quad().ravel()
    wq = mesh.global_quad_weights.ravel()
    mass = float(np.sum(wq * rho_q))
    rho_bar = mass  # domain measure is 1
    dev = rho_q - rho_bar
    l1 = float(np.sum(wq * np.abs(dev)))
    l2sq = float(np.sum(wq * dev**2))
    ck_lower = 0.5 * l1**2
    ck_upper = l2sq
    if np.any(rho_q <= 0.0):
        return EntropyResult(None, ck_lower, ck_upper, l1, False, False)
    # integrand rho log(rho/rho_bar) - (rho - rho_bar) is pointwise nonnegative
    # and integrates to H, which avoids cancellation for near-uniform states
    H = float(np.sum(wq * (rho_q * np.log(rho_q / rho_bar) - dev)))
    holds = bool(ck_lower <= rho_bar * H + 1e-10 and rho_bar * H <= ck_upper + 1e-10)
    return EntropyResult(H, ck_lower, ck_upper, l1, holds, True)


def bulk_stats(state: SimState, table: KernelTable) -> DiagnosticsRecord:
    """All scalar diagnostics of one snapshot, by quadrature and dense sampling."""
    mesh = state.mesh
    rho_q = state.rho.at_quad().ravel()
    u_q = state.u.at_quad().ravel()
    wq = mesh.global_quad_weights.ravel()
    mass = float(np.sum(wq * rho_q))
    if mass <= 0:
        raise ValueError(f"total mass must be positive, got {mass:.6g}")
    momentum = float(np.sum(wq * rho_q * u_q))
    energy = float(0.5 * np.sum(wq * rho_q * u_q**2))
    v2 = energy - momentum**2 / (2.0 * mass)

    dense = mesh.dense_points
    u_dense = state.u.eval(dense)
    du_dense = state.u.eval(dense, deriv=1)
    rho_dense = state.rho.eval(dense)
    rho_phi_dense = table.dense_matrix() @ rho_q
    e_vals = du_dense + state.w.eval(dense) * rho_phi_dense
    ent = relative_entropy(state)
    return DiagnosticsRecord(
        t=state.t,
        mass=mass,
        momentum=momentum,
        energy=energy,
        v2=v2,
        amplitude=float(u_dense.max() - u_dense.min()),
        e_min=float(e_vals.min()),
        e_max=float(e_vals.max()),
        rho_min=float(rho_dense.min()),
        rho_phi_min=float(rho_phi_dense.min()),
        entropy_H=ent.H,
        l1_dev=ent.l1_dev,
        dxu_max=float(np.abs(du_dense).max()),
    )


def entropy_bound(state: SimState, table: KernelTable, c_param: float = 1.0) -> EntropyBoundResult:
    """Limiting-distribution deviation bound from the modified entropy field.

    e_tilde(x) = du/dx + w(x) * int (rho(y) - rho(x)) phi_h(x - y) dy and
    q_tilde = e_tilde / rho. The bound holds only while
    max|q_tilde| < w_max * |phi|_L1; otherwise the report is flagged
    infeasible. ``c_param`` stands in for the unquantified covering constant.
    """
    mesh = state.mesh
    dense = mesh.dense_points
    rho_q = state.rho.at_quad().ravel()
    wq = mesh.global_quad_weights.ravel()
    mass = float(np.sum(wq * rho_q))
    mat = table.dense_matrix()
    rho_phi = mat @ rho_q
    kernel_mass_at = mat @ np.ones_like(rho_q)  # same quadrature as rho_phi
    rho_dense = state.rho.eval(dense)
    if np.any(rho_dense <= 0.0):
        raise ValueError("entropy bound needs strictly positive density at samples")
    w_dense = state.w.eval(dense)
    e_tilde = state.u.eval(dense, deriv=1) + w_dense * (rho_phi - rho_dense * kernel_mass_at)
    q_tilde = float(np.max(np.abs(e_tilde / rho_dense)))
    w_max = float(w_dense.max())
    w_min = float(w_dense.min())
    spec = table.spec
    feasible = q_tilde < w_max * spec.l1_norm
    bound = None
    if feasible:
        bound = (
            (q_tilde + spec.inf_norm * (w_max - w_min))
            * mass * w_max * spec.inf_norm
            / (c_param * (w_max * spec.l1_norm - q_tilde))
        )
    return EntropyBoundResult(q_tilde, feasible, bound, w_min, w_max)


def small_data_report(state: SimState, table: KernelTable) -> SmallDataReport:
    """Check the global-existence smallness conditions on an initial state.

    eta bounds |dw/dx| for all time; epsilon_max is the admissible smallness
    threshold. Satisfied iff some eps < epsilon_max has amplitude0 < eps^2
    and |u0|_inf < eps, i.e. iff max(sqrt(A0), |u0|_inf) < epsilon_max.
    """
    spec = table.spec
    if spec.c1 <= 0:
        raise ValueError("small-data report needs a kernel bounded below (c1 > 0)")
    mesh = state.mesh
    dense = mesh.dense_points
    u_dense = state.u.eval(dense)
    w_dense = state.w.eval(dense)
    dw_dense = state.w.eval(dense, deriv=1)
    rho_q = state.rho.at_quad().ravel()
    mass = float(np.sum(mesh.global_quad_weights.ravel() * rho_q))
    a0 = float(u_dense.max() - u_dense.min())
    u0_inf = float(np.abs(u_dense).max())
    w_min = float(w_dense.min())
    w_max = float(w_dense.max())
    if w_min <= 0:
        return SmallDataReport(a0, u0_inf, np.inf, 0.0, False, None,
                               "weight not bounded below away from zero")
    eta = float(np.abs(dw_dense).max()) * np.exp(
        2.0 * spec.inf_norm * spec.grad_inf_norm * a0 / (mass * w_min * spec.c1**3)
    )
    epsilon_max = spec.c1 * w_min * mass / (
        2.0 + eta * mass * spec.inf_norm + w_max * mass * spec.grad_inf_norm
    )
    need = max(np.sqrt(a0), u0_inf)
    if need < epsilon_max:
        witness = 0.5 * (need + epsilon_max)
        return SmallDataReport(a0, u0_inf, eta, epsilon_max, True, float(witness), "")
    return SmallDataReport(
        a0, u0_inf, eta, epsilon_max, False, None,
        f"required smallness {need:.6g} is not below epsilon_max {epsilon_max:.6g}",
    )


def fit_decay_rate(times, amplitudes, window=None, w_min: float = 1.0,
                   mass: float = 1.0, c1: float = 1.0):
    """Least-squares exponential decay rate of an amplitude series.

    Fits the slope of -log A against t over the window and returns it next
    to the predicted rate w_min * mass * c1. Raises DegenerateSeries when
    the window has fewer than 3 samples or the amplitude is not positive.
    """
    t = np.asarray(times, dtype=float)
    a = np.asarray(amplitudes, dtype=float)
    if window is not None:
        keep = (t >= window[0]) & (t <= window[1])
        t, a = t[keep], a[keep]
    if len(t) < 3:
        raise DegenerateSeries(f"need at least 3 samples in the window, got {len(t)}")
    if np.any(a <= 0.0):
        raise DegenerateSeries("amplitude series must stay positive for a log fit")
    slope = np.polyfit(t, -np.log(a), 1)[0]
    return float(slope), float(w_min * mass * c1)
