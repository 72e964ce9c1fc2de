"""Radial fast-diffusion solver for the conformally flat Yamabe flow.

Evolves u_t = (n-1)/m * lap(u^m) on a graded radial mesh with a
finite-volume Laplacian (zero flux at r = 0, Dirichlet at the outer end)
and backward-Euler steps solved by damped Newton iteration on the flux
variable U = u^m.  The scheme is an M-matrix discretization, so nodewise
ordering of initial data is preserved exactly and the discrete solution
satisfies the pointwise lower bound u^(1-m) >= u0^(1-m) exp(-int max R).

The rescaled flow ubar(x,t) = e^(gamma t) u(e^(beta t) x, t) is evolved
through this exact change of variables around the original-variable
stepper rather than by discretizing the drift terms; rescaled states keep
their original-frame field as the source of truth and expose the rescaled
values as a view.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.linalg import solve_banded


class SolverError(RuntimeError):
    """Time stepping failed (persistent Newton breakdown)."""


class TailExtinct(RuntimeError):
    """The drifting outer tail reached zero; the run cannot continue."""


def sphere_area(n: int) -> float:
    """Surface measure of the unit (n-1)-sphere."""
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


# ---------------------------------------------------------------------------
# Boundary conditions


@dataclass(frozen=True)
class FrozenTail:
    """Hold the outer value at its t=0 level."""
    value: float

    def __call__(self, t: float) -> float:
        return self.value


@dataclass(frozen=True)
class DriftingTail:
    """Outer tail r^2 u^(1-m) = A ln r + K(t), K(t) = K0 - (n-1)(n-2) t.

    The drift rate is the universal (n-1)(n-2) of the comparison argument;
    it does not depend on beta.  Reaching K(t) with a nonpositive bracket
    terminates the run (tail extinct).
    """
    A: float
    K0: float
    r_max: float
    n: int

    @property
    def drift_rate(self) -> float:
        return (self.n - 1) * (self.n - 2)

    def tail_level(self, t: float) -> float:
        return self.A * math.log(self.r_max) + self.K0 - self.drift_rate * t

    def value_at(self, r: np.ndarray, t: float) -> np.ndarray:
        """Tail formula u(r, t) at arbitrary radii (for view fills)."""
        r = np.asarray(r, dtype=float)
        level = self.A * np.log(r) + self.K0 - self.drift_rate * t
        if np.any(level <= 0.0):
            raise TailExtinct(f"tail level nonpositive at t={t}")
        one_minus_m = 4.0 / (self.n + 2)
        return (level / r ** 2) ** (1.0 / one_minus_m)

    def __call__(self, t: float) -> float:
        level = self.tail_level(t)
        if level <= 0.0:
            raise TailExtinct(
                f"outer tail level {level} <= 0 at t={t}; run terminated")
        one_minus_m = 4.0 / (self.n + 2)
        return (level / self.r_max ** 2) ** (1.0 / one_minus_m)


@dataclass(frozen=True)
class DirichletSeries:
    """Outer (or annulus-inner) value from a user-supplied closed form."""
    fn: Callable[[float], float]

    def __call__(self, t: float) -> float:
        return float(self.fn(t))


OuterBC = FrozenTail | DriftingTail | DirichletSeries


def outer_bc_value(t: float, bc: OuterBC) -> float:
    """Boundary value u(r_max, t) for the given outer BC spec."""
    return bc(t)


# ---------------------------------------------------------------------------
# Grid


@dataclass(frozen=True)
class FlowGrid:
    """Radial mesh with finite-volume geometry.

    bc_inner is "symmetry" (zero flux through r=0; first node at 0) or
    "dirichlet" (annulus; first node positive, value from inner_values).
    """

    r: np.ndarray
    n: int
    bc_inner: str = "symmetry"
    bc_outer: OuterBC | None = None
    inner_values: DirichletSeries | None = None
    max_ratio: float = 1.1

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        object.__setattr__(self, "r", r)
        if self.n < 3:
            raise ValueError("dimension must be >= 3")
        if np.any(np.diff(r) <= 0):
            raise ValueError("grid nodes must be strictly increasing")
        if self.bc_inner == "symmetry":
            if r[0] != 0.0:
                raise ValueError("symmetry grid must start at r = 0")
        elif self.bc_inner == "dirichlet":
            if r[0] <= 0.0:
                raise ValueError("annulus grid must start at r > 0")
            if self.inner_values is None:
                raise ValueError("dirichlet inner BC needs inner_values")
        else:
            raise ValueError(f"unknown bc_inner {self.bc_inner}")
        dr = np.diff(r)
        start = 1 if self.bc_inner == "symmetry" else 0
        growth = dr[start + 1:] / dr[start:-1]
        if growth.size and growth.max() > self.max_ratio * (1 + 1e-12):
            raise ValueError(
                f"mesh stretching ratio {growth.max():.4f} exceeds {self.max_ratio}")
        # finite-volume geometry: faces at midpoints, boundary faces at ends
        faces = np.empty(len(r) + 1)
        faces[1:-1] = 0.5 * (r[1:] + r[:-1])
        faces[0] = r[0]
        faces[-1] = r[-1]
        object.__setattr__(self, "_faces", faces)
        volumes = (faces[1:] ** self.n - faces[:-1] ** self.n) / self.n
        areas = faces[1:-1] ** (self.n - 1)
        object.__setattr__(self, "_volumes", volumes)
        object.__setattr__(self, "_areas", areas)
        object.__setattr__(self, "_dr", dr)
        # flux-difference roundoff amplification per node: the discrete
        # Laplacian of a level field carries +-2 eps |U| w_sum / vol
        w_e = areas / dr
        w_sum = np.empty(len(r))
        w_sum[1:-1] = w_e[1:] + w_e[:-1]
        w_sum[0] = w_e[0]
        w_sum[-1] = w_e[-1]
        object.__setattr__(self, "_noise_w", w_sum / volumes)

    @property
    def size(self) -> int:
        return len(self.r)

    @property
    def m(self) -> float:
        return (self.n - 2) / (self.n + 2)

    def laplacian(self, U: np.ndarray) -> np.ndarray:
        """FV radial Laplacian of U at every node (boundary rows one-sided)."""
        flux = self._areas * np.diff(U) / self._dr
        out = np.empty_like(U)
        out[1:-1] = (flux[1:] - flux[:-1]) / self._volumes[1:-1]
        if self.bc_inner == "symmetry":
            out[0] = flux[0] / self._volumes[0]
        else:
            out[0] = self._onesided(U, first=True)
        out[-1] = self._onesided(U, first=False)
        return out

    def _onesided(self, U: np.ndarray, first: bool) -> float:
        # cubic through the 4 end nodes, derivatives taken at the boundary
        idx = (0, 1, 2, 3) if first else (-4, -3, -2, -1)
        anchor = 0 if first else 3
        x = self.r[list(idx)]
        y = U[list(idx)]
        c = np.polyfit(x - x[anchor], y, 3)
        d1 = c[2]
        d2 = 2.0 * c[1]
        rr = x[anchor]
        return d2 + (self.n - 1) / rr * d1


def graded_grid(n: int, r_max: float = math.exp(12.0), nodes: int = 2048,
                uniform_to: float = 1.0, bc_outer: OuterBC | None = None,
                max_ratio: float = 1.1) -> FlowGrid:
    """Uniform mesh on [0, uniform_to], geometric stretching beyond."""
    if r_max <= uniform_to:
        raise ValueError("r_max must exceed the uniform region")

    def mismatch(n_u):
        n_g = nodes - n_u
        q = (r_max / uniform_to) ** (1.0 / n_g)
        return uniform_to * (q - 1.0) - uniform_to / (n_u - 1)

    lo, hi = 8, nodes - 8
    if mismatch(lo) > 0 or mismatch(hi) < 0:
        n_u = lo if abs(mismatch(lo)) < abs(mismatch(hi)) else hi
    else:
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if mismatch(mid) <= 0:
                lo = mid
            else:
                hi = mid
        n_u = lo
    n_g = nodes - n_u
    q = (r_max / uniform_to) ** (1.0 / n_g)
    if q > max_ratio:
        raise ValueError(
            f"{nodes} nodes cannot reach r_max={r_max:g} at ratio <= {max_ratio}")
    uniform = np.linspace(0.0, uniform_to, n_u)
    geo = uniform_to * q ** np.arange(1, n_g + 1)
    geo[-1] = r_max
    return FlowGrid(r=np.concatenate([uniform, geo]), n=n,
                    bc_outer=bc_outer, max_ratio=max_ratio)


def log_grid(n: int, r_inner: float, r_max: float, nodes: int = 1024,
             bc_outer: OuterBC | None = None,
             max_ratio: float = 1.1) -> FlowGrid:
    """Node at 0 plus log-spaced nodes from r_inner to r_max.

    Used when curvature concentrates near the origin (type II runs): the
    mesh resolves radii down to r_inner while reaching a far tail.
    """
    if not (0 < r_inner < r_max):
        raise ValueError("need 0 < r_inner < r_max")
    q = (r_max / r_inner) ** (1.0 / (nodes - 2))
    if q > max_ratio:
        raise ValueError(
            f"{nodes} nodes cannot span [{r_inner:g}, {r_max:g}] at ratio <= {max_ratio}")
    r = np.concatenate([[0.0], r_inner * q ** np.arange(nodes - 1)])
    r[-1] = r_max
    return FlowGrid(r=r, n=n, bc_outer=bc_outer, max_ratio=max_ratio)


def annulus_grid(n: int, r_min: float, r_max: float, nodes: int,
                 inner_values: DirichletSeries,
                 bc_outer: OuterBC) -> FlowGrid:
    """Uniform annulus mesh with Dirichlet values at both ends (oracle runs)."""
    r = np.linspace(r_min, r_max, nodes)
    return FlowGrid(r=r, n=n, bc_inner="dirichlet", bc_outer=bc_outer,
                    inner_values=inner_values)


# ---------------------------------------------------------------------------
# States and curvature


@dataclass(frozen=True)
class FlowState:
    """Time-stamped radial solution.

    For rescaled states, u holds the rescaled values on grid.r and
    origin = (grid, u) carries the original-frame field the stepper
    actually advances (views never re-enter the evolution, so repeated
    stepping does not accumulate interpolation error).
    """

    grid: FlowGrid
    u: np.ndarray
    t: float = 0.0
    rescaled: bool = False
    beta: float | None = None
    origin: tuple[FlowGrid, np.ndarray] | None = None

    def __post_init__(self):
        if len(self.u) != self.grid.size:
            raise ValueError("state length does not match grid")
        if np.any(self.u <= 0):
            raise ValueError("conformal factor must be positive")
        if self.rescaled and self.beta is None:
            raise ValueError("rescaled state needs beta")

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def m(self) -> float:
        return self.grid.m

    @property
    def gamma(self) -> float:
        if self.beta is None:
            raise ValueError("gamma defined only for rescaled states")
        return 2.0 * self.beta / (1.0 - self.m)


@dataclass(frozen=True)
class CurvatureField:
    values: np.ndarray
    max_R: float
    argmax_r: float


def scalar_curvature(state: FlowState, live_floor: float = 0.0) -> CurvatureField:
    """R = -(1-m)(n-1)/m * lap(u^m)/u on the state's own representation.

    max_R/argmax are taken over nodes where |R| exceeds the local
    roundoff envelope of the discrete Laplacian (deep inside a level
    region the computed R is pure flux-cancellation noise) and where u
    exceeds live_floor (nodes held up by a positivity clamp measure the
    flux into a drained region, not curvature).
    """
    grid, u = state.grid, state.u
    if np.any(u <= 0):
        raise ValueError("curvature undefined for nonpositive u")
    m = grid.m
    c = (1.0 - m) * (grid.n - 1) / m
    U = u ** m
    vals = -c * grid.laplacian(U) / u
    u_big = np.empty_like(U)
    u_big[1:-1] = np.maximum(U[2:], np.maximum(U[1:-1], U[:-2]))
    u_big[0] = max(U[0], U[1])
    u_big[-1] = max(U[-1], U[-2])
    envelope = c * 2.0 * np.finfo(float).eps * u_big * grid._noise_w / u
    live = (np.abs(vals) > 8.0 * envelope) & (u > live_floor)
    if np.any(live):
        masked = np.where(live, vals, -np.inf)
        i = int(np.argmax(masked))
        max_R, arg = float(vals[i]), float(grid.r[i])
    else:
        max_R, arg = 0.0, float(grid.r[0])
    return CurvatureField(values=vals, max_R=max_R, argmax_r=arg)


def _log_interp(r_src: np.ndarray, u_src: np.ndarray):
    """Positive monotone interpolant of a radial field.

    Piecewise PCHIP of ln u: against r on the inner region (where meshes
    are uniform-in-r and log spacing would be coarse) and against ln r on
    the tail.  Evaluation beyond the source range returns NaN for the
    caller's fill logic.
    """
    ln_u = np.log(u_src)
    r_hi = r_src[-1]
    split = min(1.0, r_hi)
    k = int(np.searchsorted(r_src, split))
    k = min(max(k, 1), len(r_src) - 1)
    r_split = r_src[k]
    inner = PchipInterpolator(r_src[:k + 1], ln_u[:k + 1],
                              extrapolate=False) if k >= 2 else None
    pos = r_src >= r_split if inner is not None else r_src > 0
    outer = PchipInterpolator(np.log(r_src[pos]), ln_u[pos],
                              extrapolate=False) if pos.sum() >= 2 else None

    def ev(r_new: np.ndarray) -> np.ndarray:
        r_new = np.asarray(r_new, dtype=float)
        out = np.full_like(r_new, np.nan)
        if inner is not None:
            low = (r_new >= r_src[0]) & (r_new <= r_split)
            out[low] = inner(r_new[low])
        if outer is not None:
            hi = (r_new >= (r_split if inner is not None else r_src[pos][0])) \
                & (r_new <= r_hi * (1 + 1e-12))
            out[hi] = outer(np.minimum(np.log(r_new[hi]), math.log(r_hi)))
        return np.exp(out)

    return ev


def resample(r_src: np.ndarray, u_src: np.ndarray, r_new: np.ndarray,
             fill: Callable[[np.ndarray], np.ndarray] | None = None) -> np.ndarray:
    """Monotone resampling; nodes beyond the source range use `fill`."""
    ev = _log_interp(r_src, u_src)
    out = ev(r_new)
    bad = ~np.isfinite(out)
    if np.any(bad):
        if fill is None:
            raise ValueError("resampling beyond source range with no tail fill")
        out[bad] = fill(r_new[bad])
    return out


def rescale(state: FlowState, beta: float, direction: str) -> FlowState:
    """Exact change of variables ubar(x, t) = e^(gamma t) u(e^(beta t) x, t).

    direction "to_rescaled" dilates onto the same grid with monotone
    resampling; "to_original" inverts it.  At t = 0 both are the identity.
    Nodes that would need extrapolation are filled from the outer tail BC.
    """
    grid = state.grid
    m = grid.m
    gamma = 2.0 * beta / (1.0 - m)
    t = state.t
    amp = math.exp(gamma * t)
    dil = math.exp(beta * t)
    if direction == "to_rescaled":
        if state.rescaled:
            raise ValueError("state already rescaled")
        if t == 0.0:
            return replace(state, rescaled=True, beta=beta,
                           origin=(grid, state.u))
        # ubar on grid.r needs u at grid.r * e^(beta t)
        fill = None
        if isinstance(grid.bc_outer, DriftingTail):
            fill = lambda r: grid.bc_outer.value_at(r, t)
        vals = amp * resample(grid.r, state.u, grid.r * dil, fill=fill)
        return FlowState(grid=grid, u=vals, t=t, rescaled=True, beta=beta,
                         origin=(grid, state.u))
    if direction == "to_original":
        if not state.rescaled:
            raise ValueError("state is not rescaled")
        if state.origin is not None:
            g, u = state.origin
            return FlowState(grid=g, u=u, t=t, rescaled=False)
        if t == 0.0:
            return FlowState(grid=grid, u=state.u, t=t, rescaled=False)
        vals = resample(grid.r, state.u, grid.r / dil, fill=None) / amp
        return FlowState(grid=grid, u=vals, t=t, rescaled=False)
    raise ValueError(f"unknown direction {direction}")


def rescaled_view(grid: FlowGrid, u: np.ndarray, t: float, beta: float,
                  view_grid: FlowGrid | None = None) -> np.ndarray:
    """ubar(x) = e^(gamma t) u(e^(beta t) x) sampled on view_grid (or grid)."""
    m = grid.m
    gamma = 2.0 * beta / (1.0 - m)
    target = (view_grid or grid).r
    amp = math.exp(gamma * t)
    dil = math.exp(beta * t)

    def fill(r):
        bc = grid.bc_outer
        if isinstance(bc, DriftingTail):
            return bc.value_at(r, t)
        if bc is None:
            raise ValueError("view beyond evolved domain with no outer BC")
        return np.full(len(np.atleast_1d(r)), bc(t))

    return amp * resample(grid.r, u, target * dil, fill=fill)


# ---------------------------------------------------------------------------
# Backward Euler stepping


class _StepRejected(Exception):
    pass


@dataclass
class TimeController:
    """Proportional step control on relative change and Newton effort."""

    dt_init: float = 1e-4
    dt_min: float = 1e-14
    dt_max: float = math.inf
    target_rel_change: float = 1e-3
    newton_tol: float = 1e-11
    max_newton: int = 30
    max_rejects: int = 40
    extinction_floor: float = 1e-8   # fraction of the initial max u
    positivity_clamp: float = 0.0    # absolute floor on u (0 = off)
    grow_cap: float = 2.0


def _newton_be_step(grid: FlowGrid, u_old: np.ndarray, dt: float, t_new: float,
                    ctrl: TimeController) -> np.ndarray:
    """One backward-Euler step of u_t = (n-1)/m lap(u^m); returns u_new.

    Solves F(U) = U^(1/m) - u_old - dt c lap(U) = 0 in U = u^m by damped
    Newton with a positivity line search.
    """
    n, m = grid.n, grid.m
    c = (n - 1) / m
    inv_m = 1.0 / m
    N = grid.size
    areas = grid._areas
    dr = grid._dr
    vol = grid._volumes

    lo = 1 if grid.bc_inner == "dirichlet" else 0
    # Dirichlet values at t_new
    u_bc_outer = grid.bc_outer(t_new)
    if u_bc_outer <= 0:
        raise TailExtinct(f"outer boundary value nonpositive at t={t_new}")
    U = u_old ** m
    U[-1] = u_bc_outer ** m
    if lo:
        u_bc_inner = grid.inner_values(t_new)
        if u_bc_inner <= 0:
            raise TailExtinct(f"inner boundary value nonpositive at t={t_new}")
        U[0] = u_bc_inner ** m

    w_e = areas / dr               # edge conductances

    def lap_interior(U):
        flux = w_e * np.diff(U)
        lap = np.empty(N)
        lap[1:-1] = (flux[1:] - flux[:-1]) / vol[1:-1]
        lap[0] = flux[0] / vol[0]
        lap[-1] = 0.0
        return lap

    def residual(U):
        return U ** inv_m - u_old - dt * c * lap_interior(U)

    # convergence scale: tolerance relative to the magnitudes summed in F
    # plus the roundoff envelope of evaluating the Laplacian term (flux
    # differences of nearly equal U carry 2 eps |U| each, so F has an
    # irreducible noise floor Newton cannot go below)
    eps = np.finfo(float).eps
    u_big = np.empty(N)
    u_big[1:-1] = np.maximum(U[2:], np.maximum(U[1:-1], U[:-2]))
    u_big[0] = max(U[0], U[1])
    u_big[-1] = max(U[-1], U[-2])
    lap_noise = 2.0 * eps * u_big * grid._noise_w
    scale = (ctrl.newton_tol * (u_old + np.abs(dt * c * lap_interior(U))
                                + 1e-10 * u_old.max())
             + 4.0 * (eps * (U ** inv_m + u_old) + dt * c * lap_noise))

    sl = slice(lo, N - 1)          # unknown nodes
    idx = np.arange(lo, N - 1)
    wl = np.where(idx > 0, w_e[np.maximum(idx - 1, 0)], 0.0)
    wr = w_e[idx]
    off_l = -dt * c * wl / vol[idx]
    off_r = -dt * c * wr / vol[idx]
    err_prev = math.inf
    for _ in range(ctrl.max_newton):
        F = residual(U)
        err = np.max(np.abs(F[sl]) / scale[sl])
        if err <= 1.0:
            u_new = U ** inv_m
            u_new[-1] = u_bc_outer
            if lo:
                u_new[0] = u_bc_inner
            return u_new
        if not math.isfinite(err) or err > 1e4 * err_prev:
            raise _StepRejected("Newton residual diverged")
        err_prev = min(err_prev, err)
        diag = inv_m * U[idx] ** (inv_m - 1.0) + dt * c * (wl + wr) / vol[idx]
        ab = np.zeros((3, len(idx)))
        ab[0, 1:] = off_r[:-1]
        ab[1, :] = diag
        ab[2, :-1] = off_l[1:]
        try:
            dU = solve_banded((1, 1), ab, -F[idx])
        except np.linalg.LinAlgError as e:
            raise _StepRejected(str(e))
        alpha = 1.0
        Ui = U[idx]
        while alpha > 1e-10 and np.any(Ui + alpha * dU <= 0):
            alpha *= 0.5
        if alpha <= 1e-10:
            raise _StepRejected("positivity line search failed")
        U = U.copy()
        U[idx] = Ui + alpha * dU
    raise _StepRejected("Newton did not converge")


def step(state: FlowState, dt: float,
         controller: TimeController | None = None) -> FlowState:
    """Advance one backward-Euler step (rescaled states step their
    original-frame field and refresh the view).

    A rejected Newton solve surfaces as SolverError; the adaptive loop in
    `evolve` is the place where rejection triggers dt halving instead.
    """
    ctrl = controller or TimeController()
    try:
        if state.rescaled:
            g, u = state.origin if state.origin is not None else (
                state.grid, state.u if state.t == 0.0 else None)
            if u is None:
                raise ValueError("rescaled state lacks an original-frame field")
            u_new = _newton_be_step(g, u.copy(), dt, state.t + dt, ctrl)
            t_new = state.t + dt
            view = rescaled_view(g, u_new, t_new, state.beta, state.grid)
            return FlowState(grid=state.grid, u=view, t=t_new, rescaled=True,
                             beta=state.beta, origin=(g, u_new))
        u_new = _newton_be_step(state.grid, state.u.copy(), dt,
                                state.t + dt, ctrl)
        return FlowState(grid=state.grid, u=u_new, t=state.t + dt)
    except _StepRejected as e:
        raise SolverError(f"step of size {dt} rejected: {e}") from e


@dataclass
class Trajectory:
    """Snapshots plus the per-step record of an evolution."""

    states: list[FlowState]
    step_times: np.ndarray
    step_dt: np.ndarray
    step_max_R: np.ndarray
    step_max_u: np.ndarray
    step_argmax_r: np.ndarray | None = None
    extinction_time: float | None = None
    tail_extinct_time: float | None = None

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    def max_R_at_snapshots(self) -> np.ndarray:
        out = []
        for s in self.states:
            target = s if not s.rescaled else FlowState(
                grid=s.origin[0], u=s.origin[1], t=s.t)
            out.append(scalar_curvature(target).max_R)
        return np.array(out)

    def curvature_integral(self, t: float) -> float:
        """Right-endpoint Riemann sum of max R over steps up to t.

        With backward Euler this makes the pointwise lower bound an exact
        discrete identity at interior nodes.
        """
        k = np.searchsorted(self.step_times, t * (1 + 1e-12), side="right")
        return float(np.sum(self.step_dt[:k] * self.step_max_R[:k]))


def evolve(state: FlowState, t_end: float,
           controller: TimeController | None = None,
           snapshot_times: Sequence[float] | None = None) -> Trajectory:
    """Time loop around `step` with adaptive dt and a snapshot schedule.

    Snapshots land exactly on the requested times.  Extinction (max u
    below the controller floor) and tail extinction terminate the run and
    are recorded on the trajectory.
    """
    ctrl = controller or TimeController()
    if t_end <= state.t:
        raise ValueError("t_end must exceed the state's time")
    snaps = sorted(set(snapshot_times or [])) or []
    for ts in snaps:
        if ts < state.t or ts > t_end * (1 + 1e-12):
            raise ValueError(f"snapshot time {ts} outside [{state.t}, {t_end}]")
    if not snaps or snaps[-1] < t_end:
        snaps.append(t_end)

    rescaled = state.rescaled
    if rescaled:
        g, u = state.origin if state.origin is not None else (state.grid, state.u)
        if state.t != 0.0 and state.origin is None:
            raise ValueError("rescaled evolution needs an original-frame field")
        beta = state.beta
    else:
        g, u = state.grid, state.u

    u0_max = float(u.max())
    floor = ctrl.extinction_floor * u0_max

    states = [state]
    rec_t, rec_dt, rec_R, rec_umax, rec_arg = [], [], [], [], []
    t = state.t
    dt = min(ctrl.dt_init, ctrl.dt_max)
    extinction = None
    tail_extinct = None
    snap_iter = iter(snaps)
    next_snap = next(snap_iter)
    rejects = 0

    def emit(u_now, t_now):
        if rescaled:
            view = rescaled_view(g, u_now, t_now, beta, state.grid)
            states.append(FlowState(grid=state.grid, u=view, t=t_now,
                                    rescaled=True, beta=beta,
                                    origin=(g, u_now)))
        else:
            states.append(FlowState(grid=g, u=u_now, t=t_now))

    while t < t_end * (1 - 1e-14):
        dt_try = min(dt, next_snap - t)
        if dt_try < ctrl.dt_min:
            raise SolverError(f"step size underflow at t={t}")
        try:
            u_new = _newton_be_step(g, u.copy(), dt_try, t + dt_try, ctrl)
        except _StepRejected:
            rejects += 1
            if rejects > ctrl.max_rejects:
                raise SolverError(f"persistent Newton failure at t={t}")
            dt = 0.5 * dt_try
            continue
        except TailExtinct:
            tail_extinct = t
            break
        rejects = 0
        t_new = t + dt_try
        if ctrl.positivity_clamp > 0.0:
            u_new = np.maximum(u_new, ctrl.positivity_clamp)
        rel_change = float(np.max(np.abs(u_new - u)) / u.max())
        R = scalar_curvature(FlowState(grid=g, u=u_new, t=t_new),
                             live_floor=10.0 * ctrl.positivity_clamp)
        rec_t.append(t_new)
        rec_dt.append(dt_try)
        rec_R.append(R.max_R)
        rec_arg.append(R.argmax_r)
        umax = float(u_new.max())
        rec_umax.append(umax)

        u = u_new
        t = t_new
        if abs(t - next_snap) <= 1e-12 * max(1.0, abs(next_snap)):
            emit(u, next_snap)
            t = next_snap
            nxt = next(snap_iter, None)
            if nxt is None:
                break
            next_snap = nxt
        if umax < floor:
            extinction = t
            break
        # proportional control on the relative change of this step
        dt = dt_try * min(ctrl.grow_cap,
                          max(0.3, 0.8 * ctrl.target_rel_change
                              / max(rel_change, 1e-14)))
        dt = min(dt, ctrl.dt_max)

    return Trajectory(states=states, step_times=np.array(rec_t),
                      step_dt=np.array(rec_dt), step_max_R=np.array(rec_R),
                      step_max_u=np.array(rec_umax),
                      step_argmax_r=np.array(rec_arg),
                      extinction_time=extinction,
                      tail_extinct_time=tail_extinct)


# ---------------------------------------------------------------------------
# Distances and the pointwise lower bound


def l1_distance(a: FlowState, b: FlowState, radius: float) -> float:
    """int_{|x|<=radius} |u_a - u_b| dx with the radial measure, trapezoid rule."""
    if a.grid.n != b.grid.n:
        raise ValueError("states live in different dimensions")
    r = a.grid.r
    ub = b.u if b.grid is a.grid or np.array_equal(b.grid.r, r) else \
        resample(b.grid.r, b.u, r)
    diff = np.abs(a.u - ub)
    mask = r <= radius
    rr = r[mask]
    dd = diff[mask]
    if len(rr) < 2:
        raise ValueError("radius encloses fewer than 2 nodes")
    integ = np.trapezoid(dd * rr ** (a.n - 1), rr)
    if rr[-1] < radius and mask.sum() < len(r):
        # partial cell up to the exact radius
        j = mask.sum()
        frac_r = radius
        d_at = np.interp(frac_r, r, diff)
        integ += 0.5 * (dd[-1] * rr[-1] ** (a.n - 1)
                        + d_at * frac_r ** (a.n - 1)) * (frac_r - rr[-1])
    return float(sphere_area(a.n) * integ)


def sup_distance(a: FlowState, b: FlowState, radius: float) -> float:
    r = a.grid.r
    ub = b.u if np.array_equal(b.grid.r, r) else resample(b.grid.r, b.u, r)
    mask = r <= radius
    return float(np.max(np.abs(a.u - ub)[mask]))


@dataclass(frozen=True)
class BoundReport:
    violations: list
    max_deficit: float
    snapshots_checked: int

    @property
    def ok(self) -> bool:
        return not self.violations


def pointwise_lower_bound_check(traj: Trajectory,
                                f: Callable[[float], float] | None = None,
                                rel_slack: float = 1e-6) -> BoundReport:
    """Verify u(t)^(1-m) >= u0(x)^(1-m) exp(-int_0^t f) at every snapshot.

    By default f is the recorded per-step max curvature (right-endpoint
    sum, under which the bound is an exact identity of the backward-Euler
    scheme at interior nodes).  A callable f is integrated on the step grid.
    """
    first = traj.states[0]
    orig0 = first if not first.rescaled else FlowState(
        grid=first.origin[0], u=first.origin[1], t=first.t)
    m = orig0.grid.m
    one_minus_m = 1.0 - m
    u0 = orig0.u ** one_minus_m
    t0 = orig0.t

    def integral(t):
        if f is None:
            return traj.curvature_integral(t)
        ts = traj.step_times[traj.step_times <= t * (1 + 1e-12)]
        grid_t = np.concatenate([[t0], ts])
        vals = np.array([f(x) for x in grid_t])
        return float(np.trapezoid(vals, grid_t))

    violations = []
    max_deficit = 0.0
    for s in traj.states:
        orig = s if not s.rescaled else FlowState(grid=s.origin[0],
                                                  u=s.origin[1], t=s.t)
        bound = u0 * math.exp(-integral(s.t))
        lhs = orig.u ** one_minus_m
        deficit = (bound - lhs) / np.maximum(bound, 1e-300)
        worst = float(deficit.max())
        if worst > rel_slack:
            i = int(np.argmax(deficit))
            violations.append((s.t, float(orig.grid.r[i]), worst))
        max_deficit = max(max_deficit, worst)
    return BoundReport(violations=violations, max_deficit=max_deficit,
                       snapshots_checked=len(traj.states))


# ---------------------------------------------------------------------------
# Exact shrinking cylinder (oracle)


@dataclass(frozen=True)
class ShrinkingCylinder:
    """u^(1-m) = (n-1)(n-2)(T-t)/r^2: exact solution with R = 1/(T-t)."""

    n: int
    T: float

    @property
    def m(self) -> float:
        return (self.n - 2) / (self.n + 2)

    def u(self, r: np.ndarray, t: float) -> np.ndarray:
        if t >= self.T:
            raise ValueError("cylinder extinct")
        c = (self.n - 1) * (self.n - 2) * (self.T - t)
        return (c / np.asarray(r, dtype=float) ** 2) ** (1.0 / (1.0 - self.m))

    def curvature(self, t: float) -> float:
        return 1.0 / (self.T - t)

    def boundary(self, r: float) -> DirichletSeries:
        return DirichletSeries(fn=lambda t, rr=r: float(self.u(np.array([rr]), t)[0]))
