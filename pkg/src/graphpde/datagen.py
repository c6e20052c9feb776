"""Ground-truth data: random initial conditions, reference solvers, sampling.

Reference solutions live on a uniform ``R x R`` grid.  Periodic problems use
nodes ``lo + (hi - lo) * i / R`` with wrap-around stencils; the Dirichlet heat
problem uses ``lo + (hi - lo) * i / (R - 1)`` with the boundary ring held at
its initial values.  Spatial derivatives are the 5-point Laplacian and
centered first differences.  Diffusion is always implicit (backward Euler);
convection is implicit for convection-diffusion and explicit for Burgers.

Fields are arrays of shape ``(R, R, d)`` indexed ``[ix, iy, component]``.
"""

from dataclasses import dataclass, field, replace
import math

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import bicgstab, cg

from .errors import DegenerateField, LinearSolveFailure, NonFiniteState, ShapeMismatch, TimeNotOnGrid

KINDS = ("heat", "convdiff", "burgers")
SOLVE_RTOL = 1e-10
TIME_TOL = 1e-9
MIN_GAP = 1e-4

_DEFAULTS = {
    "heat": dict(D=0.2, v=(0.0, 0.0), domain=(0.0, 0.0, 1.0, 1.0), bc="dirichlet",
                 fourier_N=10, gt_dt=1e-4),
    "convdiff": dict(D=0.25, v=(5.0, 2.0), domain=(0.0, 0.0, 2 * math.pi, 2 * math.pi),
                     bc="periodic", fourier_N=4, gt_dt=2e-4),
    "burgers": dict(D=0.15, v=(0.0, 0.0), domain=(0.0, 0.0, 2 * math.pi, 2 * math.pi),
                    bc="periodic", fourier_N=2, gt_dt=1.6e-3),
}


@dataclass(frozen=True)
class EquationSpec:
    """Benchmark problem.  ``domain`` is ``(x_lo, y_lo, x_hi, y_hi)``."""

    kind: str
    D: float
    v: tuple = (0.0, 0.0)
    domain: tuple = (0.0, 0.0, 1.0, 1.0)
    bc: str = "periodic"
    fourier_N: int = 4
    gt_grid: int = 128
    gt_dt: float = 1e-4

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown equation kind {self.kind!r}")
        if self.bc not in ("periodic", "dirichlet"):
            raise ValueError(f"unknown boundary condition {self.bc!r}")
        if self.kind == "burgers" and self.bc != "periodic":
            raise ValueError("burgers is only implemented with periodic boundaries")
        if not (self.D >= 0 and self.gt_dt > 0 and self.gt_grid >= 4 and self.fourier_N >= 0):
            raise ValueError("invalid equation parameters")
        object.__setattr__(self, "v", tuple(float(c) for c in self.v))
        object.__setattr__(self, "domain", tuple(float(c) for c in self.domain))
        lo_x, lo_y, hi_x, hi_y = self.domain
        if not (hi_x > lo_x and hi_y > lo_y):
            raise ValueError("empty domain")

    @classmethod
    def default(cls, kind, **overrides):
        if kind not in KINDS:
            raise ValueError(f"unknown equation kind {kind!r}")
        return cls(kind=kind, **{**_DEFAULTS[kind], **overrides})

    @property
    def state_dim(self):
        return 2 if self.kind == "burgers" else 1

    def axes(self):
        """Grid coordinates along x and y."""
        lo_x, lo_y, hi_x, hi_y = self.domain
        r = self.gt_grid
        i = np.arange(r)
        if self.bc == "periodic":
            return lo_x + (hi_x - lo_x) * i / r, lo_y + (hi_y - lo_y) * i / r
        return lo_x + (hi_x - lo_x) * i / (r - 1), lo_y + (hi_y - lo_y) * i / (r - 1)

    def spacing(self):
        lo_x, lo_y, hi_x, hi_y = self.domain
        div = self.gt_grid if self.bc == "periodic" else self.gt_grid - 1
        return (hi_x - lo_x) / div, (hi_y - lo_y) / div


@dataclass
class FineTrajectory:
    spec: EquationSpec
    steps: np.ndarray   # step indices n; time = n * gt_dt
    states: np.ndarray  # (len(steps), R, R, d)

    @property
    def times(self):
        return self.steps * self.spec.gt_dt


@dataclass
class SimulationRecord:
    coords: np.ndarray  # (N, 2)
    times: np.ndarray   # (M+1,)
    states: np.ndarray  # (M+1, N, d)

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64)
        self.times = np.asarray(self.times, dtype=np.float64)
        self.states = np.asarray(self.states, dtype=np.float64)
        if self.coords.ndim != 2 or self.coords.shape[1] != 2:
            raise ShapeMismatch(f"coords must have shape (N, 2), got {self.coords.shape}")
        if self.states.ndim == 2:
            self.states = self.states[:, :, None]
        n = self.coords.shape[0]
        if self.states.ndim != 3 or self.states.shape[:2] != (self.times.size, n):
            raise ShapeMismatch(f"states must have shape ({self.times.size}, {n}, d), got {self.states.shape}")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if not (np.all(np.isfinite(self.coords)) and np.all(np.isfinite(self.states))
                and np.all(np.isfinite(self.times))):
            raise NonFiniteState("record contains non-finite values")

    @property
    def n_nodes(self):
        return self.coords.shape[0]

    @property
    def state_dim(self):
        return self.states.shape[2]


@dataclass
class Dataset:
    equation: EquationSpec
    simulations: list
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        dims = {s.state_dim for s in self.simulations}
        if len(dims) > 1:
            raise ShapeMismatch("simulations have different state dimensions")
        if dims and dims != {self.equation.state_dim}:
            raise ShapeMismatch("state dimension does not match the equation")

    def __len__(self):
        return len(self.simulations)

    @property
    def state_dim(self):
        return self.equation.state_dim


# -- initial conditions --------------------------------------------------


def sample_initial_condition(spec, seed):
    """Random truncated Fourier series, min-max normalized per component.

    For each component, ``sum_{k,l=-N..N} lam_kl cos(kx + ly) + gam_kl sin(kx + ly)``
    with standard normal coefficients is rescaled to ``[0, 1]``; Burgers
    components are further mapped to ``[-3, 3]``.  Returns ``(R, R, d)``.
    """
    rng = np.random.default_rng(seed)
    xs, ys = spec.axes()
    n = spec.fourier_N
    ks = np.arange(-n, n + 1, dtype=np.float64)
    # cos(kx + ly) = cos kx cos ly - sin kx sin ly, likewise for sin
    cx, sx = np.cos(np.outer(ks, xs)), np.sin(np.outer(ks, xs))
    cy, sy = np.cos(np.outer(ks, ys)), np.sin(np.outer(ks, ys))
    out = np.empty((xs.size, ys.size, spec.state_dim))
    for c in range(spec.state_dim):
        lam = rng.standard_normal((ks.size, ks.size))
        gam = rng.standard_normal((ks.size, ks.size))
        field_ = (cx.T @ lam @ cy - sx.T @ lam @ sy
                  + sx.T @ gam @ cy + cx.T @ gam @ sy)
        lo, hi = field_.min(), field_.max()
        if not hi > lo:
            raise DegenerateField("initial condition is constant")
        unit = (field_ - lo) / (hi - lo)
        out[:, :, c] = 6.0 * (unit - 0.5) if spec.kind == "burgers" else unit
    return out


# -- reference solvers ---------------------------------------------------


def _diff_1d(r, h, periodic):
    """Second- and centered first-difference matrices on ``r`` points."""
    ones = np.ones(r)
    d2 = sp.diags([ones[:-1], -2 * ones, ones[:-1]], [-1, 0, 1], format="lil")
    d1 = sp.diags([-ones[:-1], ones[:-1]], [-1, 1], format="lil")
    if periodic:
        d2[0, r - 1] = 1.0
        d2[r - 1, 0] = 1.0
        d1[0, r - 1] = -1.0
        d1[r - 1, 0] = 1.0
    return d2.tocsr() / (h * h), d1.tocsr() / (2 * h)


def grid_operators(spec):
    """``(laplacian, d_dx, d_dy)`` acting on row-major flattened ``(R, R)`` fields."""
    r = spec.gt_grid
    hx, hy = spec.spacing()
    periodic = spec.bc == "periodic"
    d2x, d1x = _diff_1d(r, hx, periodic)
    d2y, d1y = _diff_1d(r, hy, periodic)
    eye = sp.identity(r, format="csr")
    lap = (sp.kron(d2x, eye) + sp.kron(eye, d2y)).tocsr()
    return lap, sp.kron(d1x, eye).tocsr(), sp.kron(eye, d1y).tocsr()


def _solve(solver, a, b, x0):
    x, info = solver(a, b, x0=x0, rtol=SOLVE_RTOL, atol=0.0, maxiter=10_000)
    if info != 0:
        raise LinearSolveFailure(f"iterative solver stopped with info={info}")
    return x


def _keep_steps(spec, n_total, keep):
    if keep is None:
        return np.arange(n_total + 1)
    steps = []
    for t in np.atleast_1d(np.asarray(keep, dtype=np.float64)):
        k = int(round(t / spec.gt_dt))
        if abs(k * spec.gt_dt - t) > TIME_TOL or k < 0 or k > n_total:
            raise TimeNotOnGrid(f"time {t} is not a multiple of gt_dt={spec.gt_dt} within [0, t_end]")
        steps.append(k)
    return np.unique(np.asarray(steps, dtype=np.int64))


def solve_ground_truth(spec, u0, t_end, keep=None):
    """Reference trajectory from ``t = 0`` to ``t_end`` in steps of ``spec.gt_dt``.

    Parameters
    ----------
    spec : EquationSpec
    u0 : ndarray
        Initial field, ``(R, R)`` or ``(R, R, d)``.
    t_end : float
        Rounded up to a whole number of steps.
    keep : sequence of float, optional
        Times to retain (each a multiple of ``gt_dt``); default keeps every step.

    Returns
    -------
    FineTrajectory
    """
    r = spec.gt_grid
    d = spec.state_dim
    u0 = np.asarray(u0, dtype=np.float64)
    if u0.shape == (r, r) and d == 1:
        u0 = u0[:, :, None]
    if u0.shape != (r, r, d):
        raise ShapeMismatch(f"initial field must have shape ({r}, {r}, {d}), got {u0.shape}")
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    n_total = int(math.ceil(t_end / spec.gt_dt - TIME_TOL))
    keep_steps = _keep_steps(spec, n_total, keep)
    stepper = _make_stepper(spec, u0)

    out = np.empty((keep_steps.size, r, r, d))
    u = u0.reshape(r * r, d).copy()
    slot = 0
    for n in range(n_total + 1):
        if n > 0:
            u = stepper(u)
            if not np.all(np.isfinite(u)):
                raise NonFiniteState(f"reference solution blew up at step {n}")
        if slot < keep_steps.size and keep_steps[slot] == n:
            out[slot] = u.reshape(r, r, d)
            slot += 1
    return FineTrajectory(spec, keep_steps, out)


def _make_stepper(spec, u0):
    lap, dx, dy = grid_operators(spec)
    dt = spec.gt_dt
    n = lap.shape[0]
    eye = sp.identity(n, format="csr")
    if spec.kind == "burgers":
        a = (eye - (dt * spec.D) * lap).tocsr()

        def step(u):
            ux, uy = u[:, 0], u[:, 1]
            out = np.empty_like(u)
            for c in range(2):
                w = u[:, c]
                rhs = w - dt * (ux * (dx @ w) + uy * (dy @ w))
                out[:, c] = _solve(cg, a, rhs, w)
            return out
        return step

    op = spec.D * lap
    if spec.kind == "convdiff":
        op = op - spec.v[0] * dx - spec.v[1] * dy
    a = (eye - dt * op).tocsr()
    solver = cg if spec.kind == "heat" else bicgstab
    if spec.bc == "periodic":
        def step(u):
            return _solve(solver, a, u[:, 0], u[:, 0])[:, None]
        return step

    r = spec.gt_grid
    ix, iy = np.meshgrid(np.arange(r), np.arange(r), indexing="ij")
    boundary = ((ix == 0) | (iy == 0) | (ix == r - 1) | (iy == r - 1)).ravel()
    inner = np.nonzero(~boundary)[0]
    outer = np.nonzero(boundary)[0]
    a_ii = a[inner][:, inner].tocsr()
    g = u0.reshape(n)[outer]
    lift = -(a[inner][:, outer] @ g)

    def step(u):
        out = u.copy()
        out[inner, 0] = _solve(solver, a_ii, u[inner, 0] + lift, u[inner, 0])
        return out
    return step


# -- sampling ------------------------------------------------------------


def eligible_nodes(spec):
    """Flat indices of grid nodes that may be observed (Dirichlet boundary excluded)."""
    r = spec.gt_grid
    if spec.bc == "periodic":
        return np.arange(r * r)
    ix, iy = np.meshgrid(np.arange(r), np.arange(r), indexing="ij")
    interior = (ix > 0) & (iy > 0) & (ix < r - 1) & (iy < r - 1)
    return np.nonzero(interior.ravel())[0]


def downsample(traj, n_nodes, t_obs, seed):
    """Observe ``n_nodes`` random grid nodes at times ``t_obs`` (no interpolation)."""
    spec = traj.spec
    pool = eligible_nodes(spec)
    if not 1 <= n_nodes <= pool.size:
        raise ValueError(f"n_nodes must be in [1, {pool.size}]")
    t_obs = np.asarray(t_obs, dtype=np.float64)
    rows = []
    for t in t_obs:
        k = int(round(t / spec.gt_dt))
        hit = np.nonzero(traj.steps == k)[0]
        if abs(k * spec.gt_dt - t) > TIME_TOL or hit.size == 0:
            raise TimeNotOnGrid(f"time {t} is not a stored multiple of gt_dt={spec.gt_dt}")
        rows.append(hit[0])
    rng = np.random.default_rng(seed)
    nodes = np.sort(rng.choice(pool, size=n_nodes, replace=False))
    xs, ys = spec.axes()
    r = spec.gt_grid
    coords = np.stack([xs[nodes // r], ys[nodes % r]], axis=1)
    flat = traj.states.reshape(traj.states.shape[0], r * r, -1)
    return SimulationRecord(coords, t_obs.copy(), flat[rows][:, nodes, :])


def perturb_times(t_obs, sigma, seed, gt_dt=None, min_gap=MIN_GAP):
    """Jitter interior observation times by ``N(0, sigma^2)``; endpoints stay fixed.

    The jittered times are sorted and pushed apart to at least ``min_gap``,
    then snapped to the nearest multiple of ``gt_dt`` when given (keeping at
    least one ``gt_dt`` between neighbours).
    """
    t = np.array(t_obs, dtype=np.float64)
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if t.size < 3 or sigma == 0:
        return t
    rng = np.random.default_rng(seed)
    inner = np.sort(t[1:-1] + sigma * rng.standard_normal(t.size - 2))
    out = np.concatenate([[t[0]], inner, [t[-1]]])
    out = _spread(out, min_gap)
    if gt_dt is not None:
        k = np.rint(out / gt_dt)
        k = _spread(k, 1.0)
        out = k * gt_dt
        out[0], out[-1] = t[0], t[-1]
    return out


def _spread(t, gap):
    """Enforce ``t[i+1] - t[i] >= gap`` with the endpoints pinned."""
    if (t[-1] - t[0]) < gap * (t.size - 1):
        raise ValueError("too many time points for the requested minimum gap")
    t = t.copy()
    for i in range(1, t.size - 1):
        t[i] = max(t[i], t[i - 1] + gap)
    for i in range(t.size - 2, 0, -1):
        t[i] = min(t[i], t[i + 1] - gap)
    return t


def add_noise(record, sigma, seed):
    """Copy of ``record`` with i.i.d. ``N(0, sigma^2)`` added to every state entry."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return replace(record, states=record.states.copy())
    rng = np.random.default_rng(seed)
    noisy = record.states + sigma * rng.standard_normal(record.states.shape)
    return replace(record, states=noisy)


# -- datasets ------------------------------------------------------------


def regular_times(t0, t1, dt):
    """``t0, t0 + dt, ..., t1``; ``dt`` must divide the span to 1e-9."""
    n = int(round((t1 - t0) / dt))
    if n < 1 or abs(n * dt - (t1 - t0)) > TIME_TOL:
        raise ValueError(f"dt={dt} does not divide [{t0}, {t1}]")
    return t0 + dt * np.arange(n + 1)


def simulation_seeds(seed, n_sims):
    """Per-simulation seed sequences; simulation ``i`` depends only on ``(seed, i)``.

    ``seed`` is an integer or a :class:`numpy.random.SeedSequence`; the
    latter is copied so repeated calls yield the same children.
    """
    if isinstance(seed, np.random.SeedSequence):
        root = np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key)
    else:
        root = np.random.SeedSequence(seed)
    return root.spawn(n_sims)


def generate_dataset(spec, n_sims, n_nodes, t_obs, seed, noise=0.0, time_sigma=0.0):
    """Simulate ``n_sims`` trajectories and sample each on its own random nodes.

    Each simulation draws its initial condition, node set, time jitter and
    observation noise from independent child streams of ``seed``.
    """
    t_obs = np.asarray(t_obs, dtype=np.float64)
    sims = []
    for child in simulation_seeds(seed, n_sims):
        s_ic, s_nodes, s_time, s_noise = child.spawn(4)
        times = perturb_times(t_obs, time_sigma, s_time, gt_dt=spec.gt_dt)
        u0 = sample_initial_condition(spec, s_ic)
        traj = solve_ground_truth(spec, u0, times[-1], keep=times)
        rec = downsample(traj, n_nodes, times, s_nodes)
        sims.append(add_noise(rec, noise, s_noise))
    meta = {
        "seed": str(seed),
        "n_sims": str(n_sims),
        "n_nodes": str(n_nodes),
        "noise": repr(float(noise)),
        "time_sigma": repr(float(time_sigma)),
        "gt_grid": str(spec.gt_grid),
        "gt_dt": repr(spec.gt_dt),
        "boundary_nodes": "excluded" if spec.bc == "dirichlet" else "n/a (periodic)",
    }
    return Dataset(spec, sims, meta)
