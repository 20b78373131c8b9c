"""Torus convolutions with an interpolated communication kernel.

The kernel phi is radial in the torus distance d_T(x) = min(|x| mod 1,
1 - |x| mod 1) and is replaced by its P3 interpolant phi_h on the mesh.
Convolutions are evaluated by the element-wise Gauss rule; the kernel values
at all (quadrature point, quadrature point) pairs are precomputed once per
mesh so each per-step convolution is a single table contraction.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import FloorViolation
from .mesh import FEFunction, PeriodicMesh, interpolate

DEFAULT_RHO_PHI_FLOOR = 1e-10


def torus_distance(d) -> np.ndarray:
    """Distance on the unit torus, in [0, 1/2]."""
    d = np.abs(np.asarray(d, dtype=float)) % 1.0
    return np.minimum(d, 1.0 - d)


@dataclass(frozen=True)
class KernelSpec:
    """Radial kernel with the constants used by the theorem diagnostics.

    ``inf_norm``, ``l1_norm`` (over the unit torus), ``grad_inf_norm`` and
    ``c1`` (minimum over torus distances) feed the alignment-rate, small-data
    and entropy-bound formulas.
    """

    kind: str
    profile: Callable  # phi as a function of torus distance in [0, 1/2]
    inf_norm: float
    l1_norm: float
    grad_inf_norm: float
    c1: float

    def __call__(self, d) -> np.ndarray:
        return np.asarray(self.profile(torus_distance(d)), dtype=float)


def rational_sqrt_kernel() -> KernelSpec:
    """phi(r) = 1/sqrt(1 + r^2), periodized over the torus.

    On distances [0, 1/2]: max 1 at r=0, min 2/sqrt(5) at r=1/2,
    integral 2*asinh(1/2), steepest slope at r=1/2.
    """
    return KernelSpec(
        kind="rational_sqrt",
        profile=lambda r: 1.0 / np.sqrt(1.0 + r**2),
        inf_norm=1.0,
        l1_norm=2.0 * np.arcsinh(0.5),
        grad_inf_norm=0.5 * (1.25) ** (-1.5),
        c1=2.0 / np.sqrt(5.0),
    )


def constant_kernel() -> KernelSpec:
    """phi = 1: the all-to-all mean-field kernel with unit mass on [0, 1]."""
    return KernelSpec(
        kind="constant",
        profile=lambda r: np.ones_like(np.asarray(r, dtype=float)),
        inf_norm=1.0,
        l1_norm=1.0,
        grad_inf_norm=0.0,
        c1=1.0,
    )


def table_kernel(path) -> KernelSpec:
    """Kernel from a two-column CSV (distance in [0, 1/2], value).

    Distances must be strictly increasing; values must be nonnegative.
    The profile is the cubic-spline interpolant of the table.
    """
    dists, vals = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].lstrip().startswith("#"):
                continue
            dists.append(float(row[0]))
            vals.append(float(row[1]))
    d = np.asarray(dists)
    v = np.asarray(vals)
    if len(d) < 4:
        raise ValueError("kernel table needs at least 4 rows for cubic interpolation")
    if np.any(np.diff(d) <= 0):
        raise ValueError("kernel table distances must be strictly increasing")
    if d[0] < 0 or d[-1] > 0.5 + 1e-12:
        raise ValueError("kernel table distances must lie in [0, 1/2]")
    if np.any(v < 0):
        raise ValueError("kernel table values must be nonnegative")
    spline = CubicSpline(d, v, bc_type="not-a-knot")
    probe = np.linspace(d[0], d[-1], 4001)
    pv = spline(probe)
    return KernelSpec(
        kind="table",
        profile=lambda r: spline(np.clip(r, d[0], d[-1])),
        inf_norm=float(np.max(pv)),
        l1_norm=float(2.0 * spline.integrate(d[0], d[-1])),
        grad_inf_norm=float(np.max(np.abs(spline(probe, 1)))),
        c1=float(np.min(pv)),
    )


def kernel_from_name(kind: str, path=None) -> KernelSpec:
    if kind == "rational_sqrt":
        return rational_sqrt_kernel()
    if kind == "constant":
        return constant_kernel()
    if kind == "table":
        if path is None:
            raise ValueError("table kernel needs a CSV path")
        return table_kernel(path)
    raise ValueError(f"unknown kernel kind '{kind}'")


@dataclass
class KernelTable:
    """Interpolated kernel phi_h plus its precomputed quadrature tables."""

    mesh: PeriodicMesh
    spec: KernelSpec
    phi_h: FEFunction
    total_mass: float  # integral of phi_h over the torus
    quad_table: np.ndarray = field(repr=False)  # phi_h(x_a - x_b), (EQ, EQ)
    _weighted: np.ndarray = field(repr=False)  # quad_table * quad weights
    _dense_table: np.ndarray | None = field(default=None, repr=False)

    def eval_phi_h(self, d) -> np.ndarray:
        """phi_h at a signed separation, wrapped onto the torus."""
        return self.phi_h.eval(np.asarray(d, dtype=float))

    def convolve_quad(self, samples: np.ndarray) -> np.ndarray:
        """(f phi_h) at the quadrature points, from quad-point samples of f."""
        return self._weighted @ np.asarray(samples, dtype=float).ravel()

    def target_matrix(self, targets) -> np.ndarray:
        """Quadrature-weighted kernel rows for arbitrary target points."""
        targets = np.asarray(targets, dtype=float)
        yq = self.mesh.global_quad_points.ravel()
        wq = self.mesh.global_quad_weights.ravel()
        rows = self.phi_h.eval((targets[:, None] - yq[None, :]).ravel())
        return rows.reshape(len(targets), len(yq)) * wq[None, :]

    def dense_matrix(self) -> np.ndarray:
        """Cached weighted kernel rows at the mesh's dense sample points."""
        if self._dense_table is None:
            self._dense_table = self.target_matrix(self.mesh.dense_points)
        return self._dense_table


def build_kernel_table(mesh: PeriodicMesh, spec: KernelSpec) -> KernelTable:
    """Interpolate the periodized kernel and precompute its pairwise table."""
    phi_h = interpolate(mesh, "P3", lambda x: spec(x))
    yq = mesh.global_quad_points.ravel()
    wq = mesh.global_quad_weights.ravel()
    diffs = yq[:, None] - yq[None, :]
    table = phi_h.eval(diffs.ravel()).reshape(diffs.shape)
    total = float(np.sum(wq * phi_h.eval(yq)))
    return KernelTable(
        mesh=mesh,
        spec=spec,
        phi_h=phi_h,
        total_mass=total,
        quad_table=table,
        _weighted=table * wq[None, :],
    )


def _as_quad_samples(f, mesh: PeriodicMesh) -> np.ndarray:
    if isinstance(f, FEFunction):
        return f.at_quad().ravel()
    arr = np.asarray(f, dtype=float).ravel()
    if arr.size != mesh.global_quad_points.size:
        raise ValueError("samples must cover every quadrature point")
    return arr


def convolve(f, table: KernelTable, targets=None) -> np.ndarray:
    """Samples of f * phi_h, by the element-wise Gauss rule.

    ``f`` is an FEFunction or quad-point samples; ``targets`` defaults to the
    quadrature points themselves (the precomputed fast path).
    """
    samples = _as_quad_samples(f, table.mesh)
    if targets is None:
        return table.convolve_quad(samples)
    return table.target_matrix(targets) @ samples


def favre_velocity(
    u,
    rho,
    table: KernelTable,
    targets=None,
    floor: float = DEFAULT_RHO_PHI_FLOOR,
) -> np.ndarray:
    """Density-weighted filtered velocity (u rho)_phi / rho_phi.

    The product u*rho is sampled pointwise at the quadrature points before
    convolving. Raises :class:`FloorViolation` when the filtered density
    drops below ``floor`` at any target.
    """
    mesh = table.mesh
    u_s = _as_quad_samples(u, mesh)
    rho_s = _as_quad_samples(rho, mesh)
    if targets is None:
        rho_phi = table.convolve_quad(rho_s)
        urho_phi = table.convolve_quad(u_s * rho_s)
        locs = mesh.global_quad_points.ravel()
    else:
        mat = table.target_matrix(targets)
        rho_phi = mat @ rho_s
        urho_phi = mat @ (u_s * rho_s)
        locs = np.asarray(targets, dtype=float)
    i = int(np.argmin(rho_phi))
    if rho_phi[i] < floor:
        raise FloorViolation(rho_phi[i], locs[i], floor)
    return urho_phi / rho_phi
