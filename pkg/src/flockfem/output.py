"""Bit-stable file outputs: CSV series, JSON metadata, figure-side data.

Every file opens with a ``# config_hash=...`` comment line so outputs from
different configurations cannot be silently mixed; the first non-comment
line of each CSV is its fixed header. Numbers are written with 17
significant digits so repeated runs of the same config produce identical
bytes.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import numpy as np

from .errors import ConfigError

TIMESERIES_HEADER = (
    "t,mass,momentum,energy,v2,amplitude,e_min,e_max,"
    "rho_min,rho_phi_min,entropy_H,l1_dev,dxu_max"
)
SNAPSHOTS_HEADER = "t,x,rho,w,u,e"
CONVERGENCE_HEADER = "level,h,k,E0,E1"

LOCK_NAME = ".flockfem.lock"


def fmt(x) -> str:
    if x is None:
        return ""
    return f"{float(x):.17g}"


def config_hash(resolved: dict) -> str:
    blob = json.dumps(resolved, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


class RunDirectory:
    """Single-owner output directory guarded by a lock file."""

    def __init__(self, path, resolved_config: dict):
        self.path = Path(path)
        self.hash = config_hash(resolved_config)
        self.resolved = resolved_config
        self._lock_fd = None

    def __enter__(self):
        self.path.mkdir(parents=True, exist_ok=True)
        lock = self.path / LOCK_NAME
        try:
            self._lock_fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise ConfigError(
                f"output directory {self.path} is locked by another run "
                f"(remove {lock} if it is stale)"
            )
        os.write(self._lock_fd, self.hash.encode())
        return self

    def __exit__(self, *exc):
        if self._lock_fd is not None:
            os.close(self._lock_fd)
            (self.path / LOCK_NAME).unlink(missing_ok=True)
        return False

    def _open(self, name):
        fh = open(self.path / name, "w", newline="")
        fh.write(f"# config_hash={self.hash}\n")
        return fh

    def write_timeseries(self, records, name="timeseries.csv", failure=None):
        with self._open(name) as fh:
            fh.write(TIMESERIES_HEADER + "\n")
            for r in records:
                fields = (
                    r.t, r.mass, r.momentum, r.energy, r.v2, r.amplitude,
                    r.e_min, r.e_max, r.rho_min, r.rho_phi_min,
                    r.entropy_H, r.l1_dev, r.dxu_max,
                )
                fh.write(",".join(fmt(v) for v in fields) + "\n")
            if failure:
                fh.write(f"# run_failed: {failure}\n")

    def write_snapshots(self, snapshots, table, name="snapshots.csv", failure=None):
        from .diagnostics import e_field

        with self._open(name) as fh:
            fh.write(SNAPSHOTS_HEADER + "\n")
            for state in snapshots:
                xs, e_vals, _, _ = e_field(state, table)
                rho = state.rho.eval(xs)
                w = state.w.eval(xs)
                u = state.u.eval(xs)
                for j in range(len(xs)):
                    fh.write(
                        ",".join(fmt(v) for v in (state.t, xs[j], rho[j], w[j], u[j], e_vals[j]))
                        + "\n"
                    )
            if failure:
                fh.write(f"# run_failed: {failure}\n")

    def write_convergence(self, sweep, name="convergence.csv"):
        with self._open(name) as fh:
            fh.write(CONVERGENCE_HEADER + "\n")
            for row in sweep.levels:
                if row.failed:
                    fh.write(f"{row.level},{fmt(row.h)},{fmt(row.k)},,\n")
                else:
                    fh.write(
                        f"{row.level},{fmt(row.h)},{fmt(row.k)},{fmt(row.e0)},{fmt(row.e1)}\n"
                    )

    def write_pair_differences(self, pairs, name="compare_pairs.csv"):
        with self._open(name) as fh:
            fh.write("t,variant_a,variant_b,sup_u_diff,l2_u_diff,sup_rho_diff,l2_rho_diff,rel_sup_u_diff\n")
            for p in pairs:
                for j, t in enumerate(p.times):
                    fh.write(
                        f"{fmt(t)},{p.pair[0]},{p.pair[1]},{fmt(p.sup_u[j])},{fmt(p.l2_u[j])},"
                        f"{fmt(p.sup_rho[j])},{fmt(p.l2_rho[j])},{fmt(p.rel_sup_u[j])}\n"
                    )

    def write_small_flock(self, series, name="compare_small_flock.csv"):
        with self._open(name) as fh:
            fh.write("t,variant,mean_abs_u_window,com_displacement\n")
            for s in series:
                for j, t in enumerate(s.times):
                    fh.write(
                        f"{fmt(t)},{s.variant},{fmt(s.mean_abs_u[j])},{fmt(s.com_displacement[j])}\n"
                    )

    def write_json(self, payload: dict, name: str):
        payload = dict(payload)
        payload["config_hash"] = self.hash
        with open(self.path / name, "w") as fh:
            json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_run_meta(self, kernel_table, switches: dict, status="ok", error=None):
        spec = kernel_table.spec
        meta = {
            "resolved_config": self.resolved,
            "kernel": {
                "kind": spec.kind,
                "inf_norm": spec.inf_norm,
                "l1_norm": spec.l1_norm,
                "grad_inf_norm": spec.grad_inf_norm,
                "c1": spec.c1,
                "phi_h_total_mass": kernel_table.total_mass,
            },
            "switches": switches,
            "status": status,
        }
        if error is not None:
            meta["error"] = f"{type(error).__name__}: {error}"
        self.write_json(meta, "run_meta.json")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def default_switches(mesh, cfg=None, extra=None) -> dict:
    """Design-decision switches recorded with every run for comparability."""
    switches = {
        "kernel_periodization": "torus_distance_wrap",
        "p2_reference_nodes": [0.0, 0.5, 1.0],
        "quadrature_points_per_element": mesh.quad_order,
        "dense_samples_per_element": 10,
        "linear_solver": "dense_lu_partial_pivoting",
        "forcing_time_level": "implicit_endpoint",
        "periodic_dof_count": {"P3": mesh.n_dof("P3"), "P2": mesh.n_dof("P2")},
    }
    if cfg is not None:
        switches.update(
            {
                "cfl_ratio_max": cfg.cfl_ratio_max,
                "cfl_strict": cfg.cfl_strict,
                "rho_phi_floor": cfg.rho_phi_floor,
                "dxu_cap": cfg.dxu_cap,
                "solver_tol": cfg.solver_tol,
            }
        )
    if extra:
        switches.update(extra)
    return switches
