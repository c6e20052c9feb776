"""Dense tanh multilayer perceptrons, their vector-Jacobian products, and Rprop.

Parameters live in one flat float64 vector.  Each layer contributes its
weight matrix of shape ``(fan_in, fan_out)`` in row-major order followed by
its bias, layers in order.  Hidden layers use ``tanh``; the output layer is
affine.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .errors import NonFiniteGradient, ShapeMismatch


@dataclass(frozen=True)
class MlpSpec:
    layer_sizes: tuple

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2 or min(sizes) < 1:
            raise ValueError(f"invalid layer sizes {self.layer_sizes}")
        object.__setattr__(self, "layer_sizes", sizes)

    @property
    def n_in(self):
        return self.layer_sizes[0]

    @property
    def n_out(self):
        return self.layer_sizes[-1]

    @property
    def n_params(self):
        s = self.layer_sizes
        return sum(s[i] * s[i + 1] + s[i + 1] for i in range(len(s) - 1))


def param_count(specs):
    """Total number of trainable parameters of one spec or a sequence of specs."""
    if isinstance(specs, MlpSpec):
        return specs.n_params
    return sum(s.n_params for s in specs)


def unpack(spec, params):
    """Views ``[(W, b), ...]`` into ``params`` for every layer of ``spec``."""
    params = np.asarray(params)
    if params.shape != (spec.n_params,):
        raise ShapeMismatch(f"expected {spec.n_params} parameters, got {params.shape}")
    layers = []
    pos = 0
    s = spec.layer_sizes
    for i in range(len(s) - 1):
        n_w = s[i] * s[i + 1]
        w = params[pos:pos + n_w].reshape(s[i], s[i + 1])
        pos += n_w
        b = params[pos:pos + s[i + 1]]
        pos += s[i + 1]
        layers.append((w, b))
    return layers


def init_params(specs, seed):
    """Glorot-uniform weights, zero biases; one generator stream across all specs."""
    if isinstance(specs, MlpSpec):
        specs = [specs]
    rng = np.random.default_rng(seed)
    chunks = []
    for spec in specs:
        s = spec.layer_sizes
        for i in range(len(s) - 1):
            limit = np.sqrt(6.0 / (s[i] + s[i + 1]))
            chunks.append(rng.uniform(-limit, limit, size=s[i] * s[i + 1]))
            chunks.append(np.zeros(s[i + 1]))
    return np.concatenate(chunks)


def forward(spec, params, x):
    """Batched forward pass keeping the hidden activations for :func:`backward`.

    ``x`` has shape ``(B, n_in)``.  Returns ``(out, hidden)`` where ``hidden``
    lists the post-``tanh`` activations of each hidden layer.
    """
    layers = unpack(spec, params)
    hidden = []
    h = x
    for w, b in layers[:-1]:
        h = h @ w
        h += b
        np.tanh(h, out=h)
        hidden.append(h)
    w, b = layers[-1]
    out = h @ w
    out += b
    return out, hidden


def backward(spec, params, x, hidden, g_out, need_input=True):
    """Reverse sweep for a batch; returns ``(grad_params, grad_x)``.

    ``grad_x`` is ``None`` when ``need_input`` is false.
    """
    layers = unpack(spec, params)
    grads = []
    g = g_out
    acts = [x] + hidden
    for li in range(len(layers) - 1, -1, -1):
        w, _ = layers[li]
        a_in = acts[li]
        grads.append((a_in.T @ g).ravel())
        grads.append(g.sum(axis=0))
        if li == 0 and not need_input:
            g = None
            break
        g = g @ w.T
        if li > 0:
            _backend.tanh_grad_inplace(g, a_in)
    ordered = []
    for li in range(len(layers)):
        k = 2 * (len(layers) - 1 - li)
        ordered.append(grads[k])
        ordered.append(grads[k + 1])
    return np.concatenate(ordered), g


def _as_batch(spec, x, n, what):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    if xb.ndim != 2 or xb.shape[1] != n:
        raise ShapeMismatch(f"{what} must have trailing size {n}, got shape {x.shape}")
    return xb, single


def mlp_forward(spec, params, x):
    """Evaluate the network on one input vector or a batch of row vectors."""
    xb, single = _as_batch(spec, x, spec.n_in, "input")
    out, _ = forward(spec, params, xb)
    return out[0] if single else out


def mlp_vjp(spec, params, x, cotangent):
    """``(v^T d out/d params, v^T d out/d input)`` for cotangent ``v``.

    For a batch, the parameter gradient is summed over rows and the input
    gradient is returned per row.
    """
    xb, single = _as_batch(spec, x, spec.n_in, "input")
    gb, _ = _as_batch(spec, cotangent, spec.n_out, "cotangent")
    if gb.shape[0] != xb.shape[0]:
        raise ShapeMismatch("cotangent batch size differs from input batch size")
    _, hidden = forward(spec, params, xb)
    gp, gx = backward(spec, params, xb, hidden, gb)
    return gp, (gx[0] if single else gx)


@dataclass
class RpropState:
    """Per-parameter step sizes and the previous (possibly zeroed) gradient.

    ``eta_plus``/``eta_minus`` scale the step on sign agreement/flip;
    steps are kept inside ``[step_min, step_max]``.
    """

    steps: np.ndarray
    prev_grad: np.ndarray
    eta_plus: float = 1.2
    eta_minus: float = 0.5
    step_min: float = 1e-9
    step_max: float = 1e-3
    step_init: float = 1e-6
    n_iter: int = field(default=0)

    @classmethod
    def create(cls, n_params, step_init=1e-6, eta_plus=1.2, eta_minus=0.5,
               step_min=1e-9, step_max=1e-3):
        if not step_min <= step_init <= step_max:
            raise ValueError("need step_min <= step_init <= step_max")
        return cls(steps=np.full(n_params, float(step_init)), prev_grad=np.zeros(n_params),
                   eta_plus=eta_plus, eta_minus=eta_minus, step_min=step_min,
                   step_max=step_max, step_init=step_init)


def rprop_step(state, params, grad):
    """One iRprop- update.  Returns the new parameter vector; ``state`` is updated in place.

    On a sign flip the step shrinks and the stored gradient is zeroed, so the
    parameter does not move this iteration and the next step is neither grown
    nor shrunk.
    """
    params = np.asarray(params, dtype=np.float64)
    grad = np.array(grad, dtype=np.float64)
    if grad.shape != params.shape or grad.shape != state.steps.shape:
        raise ShapeMismatch("parameter, gradient and optimizer sizes differ")
    if not np.all(np.isfinite(grad)):
        raise NonFiniteGradient("gradient contains NaN or infinity")
    agree = state.prev_grad * grad
    steps = state.steps
    up = agree > 0
    down = agree < 0
    steps[up] = np.minimum(steps[up] * state.eta_plus, state.step_max)
    steps[down] = np.maximum(steps[down] * state.eta_minus, state.step_min)
    grad[down] = 0.0
    state.prev_grad = grad
    state.n_iter += 1
    return params - np.sign(grad) * steps
