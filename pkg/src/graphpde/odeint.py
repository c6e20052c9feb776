"""Time integration of the node ODE system and gradients of the trajectory loss.

``integrate`` advances an autonomous system ``du/dt = f(u)`` and lands
exactly on every requested output time.  ``adjoint_gradient`` computes the
loss gradient by solving the adjoint system backward in time, keeping only
the states at the observation times.  ``backprop_gradient`` differentiates a
fixed-step discretization exactly and serves as the reference for the adjoint.
"""

from dataclasses import dataclass
import math

import numpy as np

from .errors import (MaxStepsExceeded, NonFiniteState, ShapeMismatch, StepUnderflow,
                     TimeMisalignment)
from .mpnn import Surrogate

METHODS = ("euler", "rk4", "dopri5")

SAFETY = 0.9
FACTOR_MIN = 0.2
FACTOR_MAX = 5.0
# PI controller exponents for an order-5 pair
_ALPHA = 0.2 - 0.75 * 0.04
_BETA = 0.04

_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)


@dataclass(frozen=True)
class SolverConfig:
    """Integrator settings.

    For ``euler`` and ``rk4`` each output interval is split into the fewest
    equal steps no longer than ``h_init``; the tolerances are unused.
    """

    method: str = "dopri5"
    rtol: float = 1e-7
    atol: float = 1e-7
    h_init: float = 1e-3
    h_min: float = 1e-12
    h_max: float = math.inf
    max_steps: int = 100_000

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("rtol and atol must be positive")
        if not (0 < self.h_min <= self.h_init <= self.h_max):
            raise ValueError("need 0 < h_min <= h_init <= h_max")
        if self.max_steps <= 0:
            raise ValueError("max_steps must be positive")


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (len(times), *state_shape)
    n_steps: int = 0
    n_rejected: int = 0
    nfe: int = 0

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")


def _check_times(t_eval):
    t = np.asarray(t_eval, dtype=np.float64)
    if t.ndim != 1 or t.size == 0:
        raise ValueError("t_eval must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(t)) or np.any(np.diff(t) <= 0):
        raise ValueError("t_eval must be finite and strictly increasing")
    return t


def rms_norm(x):
    return math.sqrt(float(np.mean(x * x))) if x.size else 0.0


class _Counter:
    def __init__(self, f):
        self.f = f
        self.n = 0

    def __call__(self, u):
        self.n += 1
        return self.f(u)


def integrate(f, u0, t_eval, cfg=SolverConfig(), norm=rms_norm):
    """Solve ``du/dt = f(u)`` with ``u(t_eval[0]) = u0`` and return the states at ``t_eval``.

    Parameters
    ----------
    f : callable
        Maps a state array to its time derivative (same shape).
    u0 : ndarray
        Initial state.
    t_eval : sequence of float
        Strictly increasing output times; steps are clamped to hit each one.
    cfg : SolverConfig
    norm : callable
        Reduces the tolerance-scaled error estimate of a ``dopri5`` step to a
        scalar; a step is accepted when the result is at most 1.

    Raises
    ------
    MaxStepsExceeded, StepUnderflow, NonFiniteState
    """
    t = _check_times(t_eval)
    u = np.array(u0, dtype=np.float64)
    if not np.all(np.isfinite(u)):
        raise NonFiniteState("initial state is not finite")
    fc = _Counter(f)
    states = np.empty((t.size,) + u.shape)
    states[0] = u
    if cfg.method == "dopri5":
        n_steps, n_rej = _dopri5(fc, u, t, cfg, norm, states)
    else:
        n_steps, n_rej = _fixed(fc, u, t, cfg, states)
    return Trajectory(t, states, n_steps, n_rej, fc.n)


def _finite_or_raise(u, t):
    if not np.all(np.isfinite(u)):
        raise NonFiniteState(f"state became non-finite at t={t:.6g}")


def _fixed(f, u, t, cfg, states):
    step = _euler_step if cfg.method == "euler" else _rk4_step
    n_steps = 0
    for k in range(1, t.size):
        span = t[k] - t[k - 1]
        n = interval_steps(span, cfg.h_init)
        h = span / n
        if n_steps + n > cfg.max_steps:
            raise MaxStepsExceeded(f"more than {cfg.max_steps} steps needed")
        for _ in range(n):
            u = step(f, u, h)
        n_steps += n
        _finite_or_raise(u, t[k])
        states[k] = u
    return n_steps, 0


def interval_steps(span, h):
    """Fewest equal steps no longer than ``h`` (to 1e-9 relative) covering ``span``."""
    return max(1, math.ceil(span / h - 1e-9))


def _euler_step(f, u, h):
    return u + h * f(u)


def _rk4_step(f, u, h):
    k1 = f(u)
    k2 = f(u + (0.5 * h) * k1)
    k3 = f(u + (0.5 * h) * k2)
    k4 = f(u + h * k3)
    return u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _dopri5(f, u, t, cfg, norm, states):
    h = min(cfg.h_init, cfg.h_max)
    err_prev = 1e-4
    n_steps = 0
    n_rej = 0
    just_rejected = False
    tc = t[0]
    k1 = f(u)
    for k in range(1, t.size):
        target = t[k]
        while tc < target:
            if n_steps + n_rej >= cfg.max_steps:
                raise MaxStepsExceeded(f"more than {cfg.max_steps} steps needed")
            if h < cfg.h_min:
                raise StepUnderflow(f"step size {h:.3g} fell below h_min at t={tc:.6g}")
            landing = tc + h * (1.0 + 1e-10) >= target
            hs = target - tc if landing else h
            stages = [k1]
            for i in range(1, 7):
                acc = u.copy()
                for j, a in enumerate(_A[i]):
                    if a != 0.0:
                        acc += (hs * a) * stages[j]
                if i == 6:
                    u_new = acc
                stages.append(f(acc))
            err = np.zeros_like(u)
            for j, e in enumerate(_E):
                err += (hs * e) * stages[j]
            scale = cfg.atol + cfg.rtol * np.maximum(np.abs(u), np.abs(u_new))
            en = norm(err / scale)
            if en <= 1.0 and np.all(np.isfinite(u_new)):
                if en == 0.0:
                    factor = FACTOR_MAX
                else:
                    factor = SAFETY * en ** -_ALPHA * err_prev ** _BETA
                    factor = min(FACTOR_MAX, max(FACTOR_MIN, factor))
                if just_rejected:
                    factor = min(factor, 1.0)
                err_prev = max(en, 1e-4)
                h_next = min(hs * factor, cfg.h_max)
                if landing:
                    # a clamped final step says little about the natural step size
                    h = max(h_next, min(h, cfg.h_max))
                    tc = target
                else:
                    h = h_next
                    tc = tc + hs
                u = u_new
                k1 = stages[6]
                n_steps += 1
                just_rejected = False
            else:
                if not math.isfinite(en):
                    factor = FACTOR_MIN
                else:
                    factor = max(FACTOR_MIN, SAFETY * en ** -0.2)
                h = hs * factor
                n_rej += 1
                just_rejected = True
        _finite_or_raise(u, target)
        states[k] = u
    return n_steps, n_rej


# -- loss gradients ------------------------------------------------------


def _prepare(graph, cfg_model, u0, t_obs, y_obs):
    t = _check_times(t_obs)
    if t.size < 2:
        raise ValueError("need at least two observation times")
    d = cfg_model.state_dim
    y = np.asarray(y_obs, dtype=np.float64)
    if y.ndim == 2 and d == 1:
        y = y[:, :, None]
    if y.shape != (t.size, graph.n_nodes, d):
        raise ShapeMismatch(f"observations must have shape ({t.size}, {graph.n_nodes}, {d}), got {np.shape(y_obs)}")
    u = np.asarray(u0, dtype=np.float64).reshape(graph.n_nodes, d)
    return t, u, y


def _residual_weight(m):
    return 2.0 / (m + 1)


def adjoint_gradient(graph, cfg_model, params, u0, t_obs, y_obs, solver=SolverConfig(), info=None):
    """Loss and its parameter gradient by the adjoint method.

    The forward pass keeps the states at the observation times only.  The
    backward pass integrates the state, the adjoint ``a = dL/du`` and the
    running parameter gradient from ``t_i`` back to ``t_{i-1}`` for each
    interval, restarting the state from the stored checkpoint and adding
    ``2/(M+1) (u(t_i) - y(t_i))`` to ``a`` at every observation time after
    ``t_0``.

    When ``info`` is a dict it receives ``n_checkpoints``,
    ``max_interval_states`` (states held by any one backward interval solve),
    ``forward_steps`` and ``backward_steps``.
    """
    t, u0, y = _prepare(graph, cfg_model, u0, t_obs, y_obs)
    model = Surrogate(graph, cfg_model, params)
    n, d = u0.shape
    m = t.size - 1
    fwd = integrate(model, u0, t, solver)
    checkpoints = fwd.states
    resid = checkpoints[1:] - y[1:]
    loss = float(np.sum(resid * resid)) / (m + 1)

    nu = n * d
    n_theta = model.params.size

    def aug(z):
        uu = z[:nu].reshape(n, d)
        aa = z[nu:2 * nu].reshape(n, d)
        out, caches = model.forward(uu)
        gu, gt = model.backward(caches, aa)
        return np.concatenate([-out.ravel(), gu.ravel(), gt])

    def norm(x):
        return max(rms_norm(x[:nu]), rms_norm(x[nu:2 * nu]), rms_norm(x[2 * nu:]))

    a = _residual_weight(m) * resid[-1]
    g = np.zeros(n_theta)
    back_steps = 0
    max_states = 0
    for i in range(m, 0, -1):
        z0 = np.concatenate([checkpoints[i].ravel(), a.ravel(), g])
        seg = integrate(aug, z0, [0.0, t[i] - t[i - 1]], solver, norm=norm)
        back_steps += seg.n_steps
        max_states = max(max_states, seg.states.shape[0])
        z1 = seg.states[-1]
        a = z1[nu:2 * nu].reshape(n, d)
        g = z1[2 * nu:]
        if i - 1 >= 1:
            a = a + _residual_weight(m) * resid[i - 2]
    if not np.all(np.isfinite(g)):
        raise NonFiniteState("adjoint gradient is not finite")
    if info is not None:
        info.update(n_checkpoints=checkpoints.shape[0], max_interval_states=max_states,
                    forward_steps=fwd.n_steps, backward_steps=back_steps)
    return loss, g


def fixed_steps(t_obs, dt):
    """Number of equal steps of length ``dt`` in each observation interval.

    Raises :class:`TimeMisalignment` unless ``dt`` divides every interval to 1e-9.
    """
    t = _check_times(t_obs)
    if not dt > 0:
        raise ValueError("dt must be positive")
    spans = np.diff(t)
    counts = np.rint(spans / dt).astype(np.int64)
    if np.any(counts < 1) or np.any(np.abs(counts * dt - spans) > 1e-9):
        raise TimeMisalignment(f"dt={dt} does not divide every observation interval")
    return counts


def backprop_gradient(graph, cfg_model, params, u0, t_obs, y_obs, dt, method="rk4"):
    """Exact gradient of the loss of a fixed-step discretization.

    Every stage's activations are kept and swept in reverse.  ``method`` is
    ``"rk4"`` or ``"euler"``.  Each interval uses ``round(span / dt)`` steps
    of length ``span / round(span / dt)``.
    """
    t, u0, y = _prepare(graph, cfg_model, u0, t_obs, y_obs)
    counts = fixed_steps(t, dt)
    return _backprop(Surrogate(graph, cfg_model, params), u0, t, y, counts, method)


def discrete_gradient(graph, cfg_model, params, u0, t_obs, y_obs, solver):
    """:func:`backprop_gradient` on the step pattern ``integrate`` uses for ``solver``.

    Only the fixed-step methods qualify.  The loss equals that of the
    trajectory :func:`integrate` returns with the same configuration.
    """
    if solver.method == "dopri5":
        raise ValueError("backpropagation needs a fixed-step method (euler or rk4)")
    t, u0, y = _prepare(graph, cfg_model, u0, t_obs, y_obs)
    counts = [interval_steps(s, solver.h_init) for s in np.diff(t)]
    if sum(counts) > solver.max_steps:
        raise MaxStepsExceeded(f"more than {solver.max_steps} steps needed")
    return _backprop(Surrogate(graph, cfg_model, params), u0, t, y, counts, solver.method)


def _backprop(model, u0, t, y, counts, method):
    if method not in ("rk4", "euler"):
        raise ValueError("backpropagation supports rk4 and euler")
    m = t.size - 1
    w = _residual_weight(m)

    tape = []
    u = u0
    preds = [u0]
    for k in range(m):
        h = (t[k + 1] - t[k]) / counts[k]
        for _ in range(counts[k]):
            if method == "euler":
                k1, c1 = model.forward(u)
                tape.append((h, (c1,)))
                u = u + h * k1
            else:
                k1, c1 = model.forward(u)
                k2, c2 = model.forward(u + (0.5 * h) * k1)
                k3, c3 = model.forward(u + (0.5 * h) * k2)
                k4, c4 = model.forward(u + h * k3)
                tape.append((h, (c1, c2, c3, c4)))
                u = u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(u)):
            raise NonFiniteState(f"state became non-finite at t={t[k + 1]:.6g}")
        preds.append(u)
    resid = np.stack(preds[1:]) - y[1:]
    loss = float(np.sum(resid * resid)) / (m + 1)

    g = np.zeros(model.params.size)
    ub = np.zeros_like(u0)
    pos = len(tape)
    for k in range(m - 1, -1, -1):
        ub = ub + w * resid[k]
        for _ in range(counts[k]):
            pos -= 1
            h, caches = tape[pos]
            if method == "euler":
                gu, gt = model.backward(caches[0], h * ub)
                ub = ub + gu
                g += gt
            else:
                c1, c2, c3, c4 = caches
                kb1 = (h / 6.0) * ub
                kb2 = (h / 3.0) * ub
                kb3 = (h / 3.0) * ub
                kb4 = (h / 6.0) * ub
                gu4, gt = model.backward(c4, kb4)
                g += gt
                kb3 = kb3 + h * gu4
                gu3, gt = model.backward(c3, kb3)
                g += gt
                kb2 = kb2 + (0.5 * h) * gu3
                gu2, gt = model.backward(c2, kb2)
                g += gt
                kb1 = kb1 + (0.5 * h) * gu2
                gu1, gt = model.backward(c1, kb1)
                g += gt
                ub = ub + gu1 + gu2 + gu3 + gu4
            tape[pos] = None
    return loss, g
