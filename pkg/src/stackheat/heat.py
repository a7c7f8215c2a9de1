"""Theta-scheme solvers for the 1D heat equation with Dirichlet data.

Space is discretized by second-order central differences on the uniform grid,
time by the one-parameter theta scheme (theta = 1/2 Crank-Nicolson, theta = 1
implicit Euler); both are unconditionally stable on [1/2, 1].  Each time step
costs one tridiagonal solve.  Dirichlet data enters through the boundary rows
of the stencil (ghost-free), so the interior update for a step k -> k+1 reads

    (I - theta*dt*D) y^{k+1} = (I + (1-theta)*dt*D) y^k
        + dt * favg(source)^k + (dt/dx^2) * favg(boundary)^k at the edge rows

with D the interior discrete Laplacian and favg the scheme's forward-in-time
average theta*z^{k+1} + (1-theta)*z^k.  The backward solver is the exact time
reversal of the forward one, so backward-solving reversed data reproduces the
reversed forward solution to machine precision.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded

from .errors import GridMismatchError
from .grids import LEFT, RIGHT, BoundaryTrace, SpaceTimeField, SpatialGrid, TimeGrid


def favg(z: np.ndarray, theta: float) -> np.ndarray:
    """Step average of a forward-in-time nodal sequence (levels 0..K -> K midpoints)."""
    return theta * z[1:] + (1.0 - theta) * z[:-1]


def bavg(z: np.ndarray, theta: float) -> np.ndarray:
    """Step average of a backward-in-time nodal sequence (implicit level first)."""
    return theta * z[:-1] + (1.0 - theta) * z[1:]


def midpoint_transpose(m: np.ndarray, theta: float = 0.5) -> np.ndarray:
    """Transpose of ``favg``: scatter K midpoint values back to K+1 levels."""
    out = np.zeros((m.shape[0] + 1,) + m.shape[1:])
    out[1:] += theta * m
    out[:-1] += (1.0 - theta) * m
    return out


def trapezoid_time_weights(n_levels: int) -> np.ndarray:
    w = np.ones(n_levels)
    w[0] = w[-1] = 0.5
    return w


def _check_theta(theta: float):
    if not 0.5 <= theta <= 1.0:
        raise ValueError(f"theta_scheme must lie in [1/2, 1], got {theta}")


def _banded_matrix(grid: SpatialGrid, tgrid: TimeGrid, theta: float) -> np.ndarray:
    """(I - theta*dt*D) in scipy solve_banded layout."""
    n = grid.n_interior
    r = theta * tgrid.dt / grid.dx ** 2
    ab = np.zeros((3, n))
    ab[0, 1:] = -r
    ab[1, :] = 1.0 + 2.0 * r
    ab[2, :-1] = -r
    return ab


def _explicit_apply(y: np.ndarray, grid: SpatialGrid, tgrid: TimeGrid, theta: float) -> np.ndarray:
    """(I + (1-theta)*dt*D) y for an interior vector with zero extension."""
    r = (1.0 - theta) * tgrid.dt / grid.dx ** 2
    out = (1.0 - 2.0 * r) * y
    out[1:] += r * y[:-1]
    out[:-1] += r * y[1:]
    return out


def march(grid: SpatialGrid, tgrid: TimeGrid, y0: np.ndarray,
          source: np.ndarray | None = None,
          left: np.ndarray | None = None,
          right: np.ndarray | None = None,
          theta: float = 0.5) -> np.ndarray:
    """Raw forward march on interior arrays; returns (n_levels, n_interior).

    ``source`` has shape (n_levels, n_interior); ``left``/``right`` are the
    Dirichlet boundary values per level.  This is the hot path shared by the
    public solvers and the coupled-system engines.
    """
    _check_theta(theta)
    n, klev = grid.n_interior, tgrid.n_levels
    ab = _banded_matrix(grid, tgrid, theta)
    scale = tgrid.dt / grid.dx ** 2

    y = np.empty((klev, n))
    y[0] = y0
    src_mid = None if source is None else tgrid.dt * favg(source, theta)
    left_mid = None if left is None else scale * favg(left, theta)
    right_mid = None if right is None else scale * favg(right, theta)

    for k in range(klev - 1):
        rhs = _explicit_apply(y[k], grid, tgrid, theta)
        if src_mid is not None:
            rhs = rhs + src_mid[k]
        if left_mid is not None:
            rhs[0] += left_mid[k]
        if right_mid is not None:
            rhs[-1] += right_mid[k]
        y[k + 1] = solve_banded((1, 1), ab, rhs)
    return y


def march_backward(grid: SpatialGrid, tgrid: TimeGrid, terminal: np.ndarray,
                   source: np.ndarray | None = None,
                   left: np.ndarray | None = None,
                   right: np.ndarray | None = None,
                   theta: float = 0.5) -> np.ndarray:
    """Raw backward march (-q_t - Dq = f): forward march on reversed data."""
    rev = march(
        grid, tgrid, terminal,
        source=None if source is None else source[::-1],
        left=None if left is None else left[::-1],
        right=None if right is None else right[::-1],
        theta=theta,
    )
    return rev[::-1].copy()


def _validate_inputs(grid, tgrid, initial, source, left, right):
    initial = np.asarray(initial, dtype=float)
    if initial.shape == (grid.n_nodes,):
        initial = initial[1:-1]
    if initial.shape != (grid.n_interior,):
        raise GridMismatchError(
            f"initial/terminal datum has shape {initial.shape}, expected ({grid.n_interior},)"
        )
    if not np.all(np.isfinite(initial)):
        raise ValueError("initial/terminal datum contains non-finite entries")
    src = None
    if source is not None:
        if source.grid != grid or source.tgrid != tgrid:
            raise GridMismatchError("source field lives on a different grid")
        src = source.interior
    traces = {}
    for side, tr in ((LEFT, left), (RIGHT, right)):
        if tr is None:
            continue
        if tr.tgrid != tgrid:
            raise GridMismatchError(f"{side} trace lives on a different time grid")
        if tr.side != side:
            raise ValueError(f"trace tagged {tr.side!r} passed as the {side} datum")
        traces[side] = tr.values
    return initial, src, traces


def _assemble_field(grid, tgrid, interior, traces) -> SpaceTimeField:
    vals = np.zeros((tgrid.n_levels, grid.n_nodes))
    vals[:, 1:-1] = interior
    if LEFT in traces:
        vals[:, 0] = traces[LEFT]
    if RIGHT in traces:
        vals[:, -1] = traces[RIGHT]
    return SpaceTimeField(grid, tgrid, vals)


def solve_forward(grid: SpatialGrid, tgrid: TimeGrid, y0,
                  source: SpaceTimeField | None = None,
                  left: BoundaryTrace | None = None,
                  right: BoundaryTrace | None = None,
                  theta: float = 0.5) -> SpaceTimeField:
    """Solve y_t - y_xx = source with Dirichlet traces and initial datum y0.

    Level 0 of the result equals ``y0`` extended by the boundary data; the
    boundary rows carry the given traces at every level.
    """
    y0, src, traces = _validate_inputs(grid, tgrid, y0, source, left, right)
    interior = march(grid, tgrid, y0, src,
                     traces.get(LEFT), traces.get(RIGHT), theta)
    return _assemble_field(grid, tgrid, interior, traces)


def solve_backward(grid: SpatialGrid, tgrid: TimeGrid, terminal,
                   source: SpaceTimeField | None = None,
                   left: BoundaryTrace | None = None,
                   right: BoundaryTrace | None = None,
                   theta: float = 0.5) -> SpaceTimeField:
    """Solve -q_t - q_xx = source backward from the terminal datum.

    Identical to ``solve_forward`` under the reversal t -> T - t; level
    ``n_steps`` of the result equals the terminal datum.
    """
    qT, src, traces = _validate_inputs(grid, tgrid, terminal, source, left, right)
    interior = march_backward(grid, tgrid, qT, src,
                              traces.get(LEFT), traces.get(RIGHT), theta)
    return _assemble_field(grid, tgrid, interior, traces)


def normal_derivative(field: SpaceTimeField, side: str) -> BoundaryTrace:
    """Outward normal derivative at one endpoint, second-order one-sided stencil.

    Exact on quadratics.  At the left endpoint the outward normal is -x, at
    the right it is +x.
    """
    if field.grid.n_nodes < 4:
        raise ValueError("normal derivative needs at least 3 interior nodes")
    v = field.values
    dx = field.grid.dx
    if side == LEFT:
        vals = (3.0 * v[:, 0] - 4.0 * v[:, 1] + v[:, 2]) / (2.0 * dx)
    elif side == RIGHT:
        vals = (3.0 * v[:, -1] - 4.0 * v[:, -2] + v[:, -3]) / (2.0 * dx)
    else:
        raise ValueError(f"unknown side {side!r}")
    return BoundaryTrace(field.tgrid, side, vals)


def normal_derivative_o1(interior: np.ndarray, grid: SpatialGrid, side: str) -> np.ndarray:
    """First-order outward normal derivative of a homogeneous-Dirichlet field.

    This stencil (-u_1/dx at the left, -u_n/dx at the right) is the exact
    transpose of the Dirichlet boundary injection of the theta scheme, so the
    coupled optimality and adjoint systems built with it satisfy the discrete
    duality identities to machine precision.  ``interior`` has shape
    (n_levels, n_interior) or (n_interior,).
    """
    col = 0 if side == LEFT else -1
    return -np.asarray(interior)[..., col] / grid.dx
