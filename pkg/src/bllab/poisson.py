"""Mode-by-mode Poisson solves on the strip and streamfunction velocity recovery."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .grid import INTERIOR, DomainError, Field, wavenumbers

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Dirichlet:
    values: object = 0.0


@dataclass(frozen=True)
class Neumann:
    values: object = 0.0


def _profile(bc, n_x):
    return np.broadcast_to(np.asarray(bc.values, dtype=float), (n_x,)).astype(float)


class ModalPoisson:
    """LU-cached solver for ``(D2 - k^2) phi = r`` on each Fourier mode.

    ``bottom`` and ``top`` are ``"dirichlet"`` or ``"neumann"``.
    """

    def __init__(self, grid, bottom="dirichlet", top="dirichlet", kind=INTERIOR):
        self.grid = grid
        self.kind = kind
        self.bottom = bottom
        self.top = top
        D1, D2 = grid.D1(kind), grid.D2(kind)
        n = D1.shape[0]
        self.n = n
        self.k = wavenumbers(grid.n_x)
        self.factors = []
        self.pure_neumann = bottom == "neumann" and top == "neumann"
        for k in self.k:
            A = D2 - k * k * np.eye(n)
            A[0] = D1[0] if bottom == "neumann" else np.eye(n)[0]
            A[-1] = D1[-1] if top == "neumann" else np.eye(n)[-1]
            if k == 0 and self.pure_neumann:
                self.factors.append(A)  # singular: handled by least squares
            else:
                self.factors.append(lu_factor(A))

    def solve_hat(self, rhs_hat, bottom_hat, top_hat):
        """Solve for all modes; arrays are rfft coefficients, shape (n_k, n)."""
        out = np.zeros_like(rhs_hat, dtype=complex)
        self.mismatch = 0.0
        for i, fac in enumerate(self.factors):
            b = rhs_hat[i].copy()
            b[0] = bottom_hat[i]
            b[-1] = top_hat[i]
            if i == 0 and self.pure_neumann:
                out[i] = self._solve_mean_neumann(fac, b)
            else:
                br = np.stack([b.real, b.imag], axis=1)
                sol = lu_solve(fac, br)
                out[i] = sol[:, 0] + 1j * sol[:, 1]
        return out

    def _solve_mean_neumann(self, A, b):
        w = self.grid.weights(self.kind)
        # append the zero-mean constraint and solve in the least-squares sense
        M = np.vstack([A, w / w.sum()])
        rhs = np.concatenate([b.real, [0.0]])
        sol, *_ = np.linalg.lstsq(M, rhs, rcond=None)
        resid = A @ sol - b.real
        self.mismatch = float(np.max(np.abs(resid)))
        if self.mismatch > 1e-8:
            log.warning("Neumann data incompatible with rhs mean; least-squares mismatch %.3e",
                        self.mismatch)
        return sol.astype(complex)


_POISSON_CACHE: dict = {}


def modal_poisson(grid, bottom, top, kind=INTERIOR):
    key = (id(grid), bottom, top, kind)
    hit = _POISSON_CACHE.get(key)
    if hit is None or hit.grid is not grid:
        hit = ModalPoisson(grid, bottom, top, kind)
        _POISSON_CACHE[key] = hit
    return hit


def _kind_of(bc):
    if isinstance(bc, Dirichlet):
        return "dirichlet"
    if isinstance(bc, Neumann):
        return "neumann"
    raise DomainError(f"unsupported boundary spec {bc!r}")


def solve_poisson(rhs: Field, bc_bottom=Dirichlet(), bc_top=Dirichlet()) -> Field:
    """Solve ``lap(phi) = rhs`` with the given wall and lid conditions.

    When both ends are Neumann the x-mean mode is fixed by a zero-mean pin;
    incompatible data are solved in the least-squares sense and logged.
    """
    grid = rhs.grid
    solver = modal_poisson(grid, _kind_of(bc_bottom), _kind_of(bc_top), rhs.kind)
    rh = np.fft.rfft(rhs.values, axis=0)
    bh = np.fft.rfft(_profile(bc_bottom, grid.n_x))
    th = np.fft.rfft(_profile(bc_top, grid.n_x))
    phi = np.fft.irfft(solver.solve_hat(rh, bh, th), n=grid.n_x, axis=0)
    return Field(grid, phi, rhs.kind)


def laplacian(f: Field) -> Field:
    from .grid import dx_spectral
    D2 = f.grid.D2(f.kind)
    return Field(f.grid, dx_spectral(f.values, 2) + f.values @ D2.T, f.kind)


def streamfunction_wall_value(v_boundary):
    """Wall streamfunction with ``-d/dx psi = v_boundary``; requires zero-mean data."""
    v_boundary = np.asarray(v_boundary, dtype=float)
    vh = np.fft.rfft(v_boundary)
    if abs(vh[0].real) > 1e-10 * max(1.0, v_boundary.size * np.max(np.abs(v_boundary))):
        raise DomainError("wall-normal boundary data must have zero x-mean")
    k = wavenumbers(v_boundary.size)
    ph = np.zeros_like(vh)
    ph[1:] = 1j * vh[1:] / k[1:]
    return ph


class StreamSolver:
    """Velocity from vorticity for the non-mean modes, with inhomogeneous wall flux."""

    def __init__(self, grid):
        self.grid = grid
        self.poisson = modal_poisson(grid, "dirichlet", "dirichlet", INTERIOR)
        self.k = wavenumbers(grid.n_x)

    def psi_hat(self, omega_hat, v_boundary=None):
        bottom = np.zeros(len(self.k), dtype=complex)
        if v_boundary is not None:
            bottom = streamfunction_wall_value(v_boundary)
        rhs = omega_hat.copy()
        rhs[0] = 0.0
        ph = self.poisson.solve_hat(rhs, bottom, np.zeros_like(bottom))
        ph[0] = 0.0
        return ph

    def velocity(self, omega, v_boundary=None, mean_u=None):
        """``(u, v, psi)`` arrays from a vorticity array; ``mean_u`` is the y-profile of the x-mean."""
        g = self.grid
        oh = np.fft.rfft(omega, axis=0)
        ph = self.psi_hat(oh, v_boundary)
        if mean_u is None:
            mean_u = mean_flow_from_vorticity(g, oh[0].real / g.n_x)
        psi = np.fft.irfft(ph, n=g.n_x, axis=0)
        u = psi @ g.D1y.T + mean_u[None, :]
        vh = -1j * self.k[:, None] * ph
        vh[-1] = 0.0
        v = np.fft.irfft(vh, n=g.n_x, axis=0)
        return u, v, psi


def mean_flow_from_vorticity(grid, mean_omega, far_field=0.0):
    """x-mean of u from the x-mean vorticity, at rest (``far_field``) at the lid."""
    C = grid.Cy
    return far_field - (C[-1] - C) @ mean_omega


def velocity_from_vorticity(omega: Field, v_boundary=None, mean_u=None, far_field=0.0):
    """Divergence-free ``(u, v)`` with ``d_y u - d_x v = omega`` and ``v = v_boundary`` on the wall.

    The x-mean of ``u`` is taken from ``mean_u`` when given, otherwise integrated
    down from ``far_field`` at the lid.
    """
    if omega.kind != INTERIOR:
        raise DomainError("velocity recovery needs an interior vorticity field")
    g = omega.grid
    if mean_u is None:
        mean_u = mean_flow_from_vorticity(g, omega.values.mean(axis=0), far_field)
    u, v, _ = StreamSolver(g).velocity(omega.values, v_boundary, np.asarray(mean_u, dtype=float))
    if v_boundary is not None:
        v[:, 0] = v_boundary
    return Field(g, u), Field(g, v)
