"""Periodic 1D mesh, local Lagrange bases, FE functions and error norms.

The domain is the unit torus: a uniform partition of [0, 1] into
``num_elements`` cells with the point 0 identified with the point 1.
Fields live in C0 Lagrange spaces of local order 3 ("P3", nodes at
0, 1/3, 2/3, 1 of each element) or order 2 ("P2", nodes at 0, 1/2, 1).
Periodic identification leaves 3M (resp. 2M) distinct coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

SPACE_ORDER = {"P3": 3, "P2": 2}

#: interior sample offsets per element used for sup-norm style quantities;
#: element-interior so one-sided derivatives are well defined
DENSE_SAMPLES_PER_ELEMENT = 10


@dataclass(frozen=True)
class LocalBasis:
    """Lagrange basis on the reference element [0, 1].

    ``coeffs[k]`` holds the monomial coefficients (constant first) of the
    polynomial that is 1 at ``nodes[k]`` and 0 at the other nodes.
    """

    order: int
    nodes: np.ndarray
    coeffs: np.ndarray

    def eval(self, s, deriv: int = 0) -> np.ndarray:
        """Evaluate all basis polynomials at reference coordinates ``s``.

        Returns an array of shape ``(order+1,) + shape(s)``. ``deriv`` is the
        derivative order w.r.t. the reference coordinate (0 or 1).
        """
        s = np.asarray(s, dtype=float)
        n = self.order + 1
        out = np.zeros((n,) + s.shape)
        for k in range(n):
            c = self.coeffs[k]
            if deriv == 1:
                c = c[1:] * np.arange(1, n)
            elif deriv != 0:
                raise ValueError("only derivative orders 0 and 1 supported")
            # Horner form of the local polynomial
            acc = np.zeros_like(s)
            for a in c[::-1]:
                acc = acc * s + a
            out[k] = acc
        return out


def build_local_basis(order: int) -> LocalBasis:
    """Construct the reference Lagrange basis of the given order (2 or 3).

    Coefficients solve the Vandermonde system at the reference nodes, so row
    k of ``coeffs`` is the k-th Lagrange polynomial.
    """
    if order not in (2, 3):
        raise ValueError(f"basis order must be 2 or 3, got {order}")
    nodes = np.linspace(0.0, 1.0, order + 1)
    vander = np.vander(nodes, order + 1, increasing=True)
    # row k of coeffs satisfies sum_m coeffs[k, m] * node_j**m = delta_kj
    coeffs = np.linalg.inv(vander).T
    return LocalBasis(order=order, nodes=nodes, coeffs=coeffs)


@dataclass
class PeriodicMesh:
    """Uniform periodic partition of [0, 1] with cached quadrature and bases.

    ``quad_points``/``quad_weights`` are the Gauss-Legendre rule on the [0, 1]
    reference element (weights sum to 1); global points and weights are the
    per-element mapped copies.
    """

    num_elements: int
    quad_order: int = 6
    quad_points: np.ndarray = field(init=False, repr=False)
    quad_weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.num_elements < 2:
            raise ValueError(f"need at least 2 elements, got {self.num_elements}")
        if self.quad_order < 4:
            raise ValueError(f"quadrature order must be >= 4, got {self.quad_order}")
        pts, wts = np.polynomial.legendre.leggauss(self.quad_order)
        # map from [-1, 1] to the [0, 1] reference element
        self.quad_points = 0.5 * (pts + 1.0)
        self.quad_weights = 0.5 * wts
        self._basis = {"P3": build_local_basis(3), "P2": build_local_basis(2)}
        # per-space tables at the reference quadrature points
        self._psi = {s: b.eval(self.quad_points) for s, b in self._basis.items()}
        self._dpsi = {s: b.eval(self.quad_points, deriv=1) for s, b in self._basis.items()}
        e = np.arange(self.num_elements)
        self.element_left = e * self.h
        # global quadrature points/weights, shape (num_elements, quad_order)
        self.global_quad_points = self.element_left[:, None] + self.quad_points[None, :] * self.h
        self.global_quad_weights = np.broadcast_to(
            self.quad_weights[None, :] * self.h, self.global_quad_points.shape
        ).copy()
        self._dofmap = {s: self._build_dofmap(SPACE_ORDER[s]) for s in SPACE_ORDER}
        off = (np.arange(DENSE_SAMPLES_PER_ELEMENT) + 0.5) / DENSE_SAMPLES_PER_ELEMENT
        self.dense_points = (self.element_left[:, None] + off[None, :] * self.h).ravel()

    @property
    def h(self) -> float:
        return 1.0 / self.num_elements

    def _build_dofmap(self, order: int) -> np.ndarray:
        n_dof = order * self.num_elements
        e = np.arange(self.num_elements)[:, None]
        k = np.arange(order + 1)[None, :]
        return (order * e + k) % n_dof

    def basis(self, space: str) -> LocalBasis:
        return self._basis[space]

    def dofmap(self, space: str) -> np.ndarray:
        """Global DOF indices per element, shape (num_elements, order+1)."""
        return self._dofmap[space]

    def n_dof(self, space: str) -> int:
        return SPACE_ORDER[space] * self.num_elements

    def basis_at_quad(self, space: str, deriv: int = 0) -> np.ndarray:
        """Reference basis values at quadrature points, shape (order+1, Q)."""
        return self._dpsi[space] if deriv else self._psi[space]

    def node_positions(self, space: str) -> np.ndarray:
        order = SPACE_ORDER[space]
        return np.arange(self.n_dof(space)) / (order * self.num_elements)

    def locate(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Wrap points onto the torus and split into (element index, local coord)."""
        x = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(x)):
            raise ValueError("evaluation points must be finite")
        xw = x - np.floor(x)
        scaled = xw * self.num_elements
        elem = np.minimum(scaled.astype(int), self.num_elements - 1)
        local = scaled - elem
        return elem, local

    def integrate_samples(self, samples: np.ndarray) -> float:
        """Integrate a field given by its values at the global quadrature points."""
        samples = np.asarray(samples, dtype=float).reshape(self.global_quad_points.shape)
        return float(np.sum(samples * self.global_quad_weights))


def build_mesh(num_elements: int, quad_order: int = 6) -> PeriodicMesh:
    return PeriodicMesh(num_elements=num_elements, quad_order=quad_order)


@dataclass
class FEFunction:
    """Scalar FE field on a :class:`PeriodicMesh` given by nodal coefficients.

    Coefficients are the values at the global nodes (node 0 doubles as node 1
    of the torus). Evaluation is C0 across element boundaries; the derivative
    is one-sided from within the containing element.
    """

    mesh: PeriodicMesh
    space: str
    coefficients: np.ndarray

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        expected = self.mesh.n_dof(self.space)
        if self.coefficients.shape != (expected,):
            raise ValueError(
                f"{self.space} on {self.mesh.num_elements} elements needs "
                f"{expected} coefficients, got {self.coefficients.shape}"
            )

    def eval(self, x, deriv: int = 0) -> np.ndarray:
        """Evaluate the field (deriv=0) or its spatial derivative (deriv=1)."""
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        elem, local = self.mesh.locate(np.atleast_1d(x))
        basis = self.mesh.basis(self.space)
        psi = basis.eval(local, deriv=deriv)  # (order+1, n)
        dofs = self.mesh.dofmap(self.space)[elem]  # (n, order+1)
        vals = np.einsum("nk,kn->n", self.coefficients[dofs], psi)
        if deriv == 1:
            vals = vals * self.mesh.num_elements  # chain rule d/dx = M d/ds
        return vals[0] if scalar else vals

    def at_quad(self, deriv: int = 0) -> np.ndarray:
        """Values at all global quadrature points, shape (num_elements, Q)."""
        psi = self.mesh.basis_at_quad(self.space, deriv=deriv)  # (order+1, Q)
        dofs = self.mesh.dofmap(self.space)  # (E, order+1)
        vals = np.einsum("ek,kq->eq", self.coefficients[dofs], psi)
        if deriv == 1:
            vals = vals * self.mesh.num_elements
        return vals

    def copy(self) -> "FEFunction":
        return FEFunction(self.mesh, self.space, self.coefficients.copy())


def interpolate(mesh: PeriodicMesh, space: str, f: Callable) -> FEFunction:
    """Nodal interpolant of a pointwise-evaluable function.

    Reproduces any continuous piecewise polynomial of the space's order on
    the same mesh exactly.
    """
    nodes = mesh.node_positions(space)
    vals = np.asarray(f(nodes), dtype=float)
    if vals.shape != nodes.shape:  # scalar-only callables
        vals = np.array([f(x) for x in nodes], dtype=float)
    bad = ~np.isfinite(vals)
    if np.any(bad):
        where = nodes[bad][0]
        raise ValueError(f"interpolation target is not finite at node x={where:.6g}")
    return FEFunction(mesh, space, vals)


def error_norms(
    f: FEFunction,
    ref: Callable,
    which: str = "L2",
    ref_deriv: Callable | None = None,
) -> float:
    """Error of an FE field against a reference function.

    ``which`` is one of L2 / H1semi / L1 / Linf. L2, H1semi and L1 use the
    element-wise Gauss rule; Linf uses dense element-interior sampling.
    H1semi requires ``ref_deriv``.
    """
    mesh = f.mesh
    if which == "Linf":
        xs = mesh.dense_points
        return float(np.max(np.abs(f.eval(xs) - np.asarray(ref(xs), dtype=float))))
    xq = mesh.global_quad_points.ravel()
    wq = mesh.global_quad_weights.ravel()
    if which == "H1semi":
        if ref_deriv is None:
            raise ValueError("H1semi error needs the reference derivative")
        diff = f.eval(xq, deriv=1) - np.asarray(ref_deriv(xq), dtype=float)
        return float(np.sqrt(np.sum(wq * diff**2)))
    diff = f.eval(xq) - np.asarray(ref(xq), dtype=float)
    if which == "L2":
        return float(np.sqrt(np.sum(wq * diff**2)))
    if which == "L1":
        return float(np.sum(wq * np.abs(diff)))
    raise ValueError(f"unknown norm '{which}'")
