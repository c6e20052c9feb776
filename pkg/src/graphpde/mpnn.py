"""Message-passing surrogate for the semi-discrete time derivative.

One graph layer maps node states ``h`` (``N x d``) to

    m_i = mean_{j in N(i)} phi(h_i, h_j - h_i, x_j - x_i)
    h'_i = gamma(h_i, m_i)

and the last layer's output is ``du/dt``.  ``phi`` and ``gamma`` are tanh MLPs
(:mod:`graphpde.nn`).  With ``use_edge_features=False`` the displacement input
is dropped and node positions are never read.

Evaluation happens in a canonical node numbering: nodes sorted
lexicographically by ``(x, y)`` and edges sorted by (source rank, target
rank).  Every floating-point operation therefore sees the same operands in the
same order no matter how the caller labels the nodes, which makes relabeling
equivariance exact rather than approximate.  Without edge features the
numbering is the caller's, since positions must not influence the result.

The mean over neighbours is taken on the last hidden activation of ``phi``
and pushed through its final affine layer afterwards; for an affine map this
equals averaging the messages themselves.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _backend, nn
from .errors import EmptyGraph, ShapeMismatch


@dataclass(frozen=True)
class SurrogateConfig:
    state_dim: int = 1
    message_dim: int = 40
    hidden_width: int = 60
    hidden_layers: int = 3
    n_graph_layers: int = 1
    aggregation: str = "mean"
    use_edge_features: bool = True

    def __post_init__(self):
        if self.aggregation != "mean":
            raise ValueError("only mean aggregation is implemented")
        if min(self.state_dim, self.message_dim, self.hidden_width, self.n_graph_layers) < 1:
            raise ValueError("sizes must be positive")
        if self.hidden_layers < 1:
            raise ValueError("phi needs at least one hidden layer")

    @property
    def phi_spec(self):
        d = self.state_dim
        n_in = 2 * d + (2 if self.use_edge_features else 0)
        return nn.MlpSpec((n_in,) + (self.hidden_width,) * self.hidden_layers + (self.message_dim,))

    @property
    def gamma_spec(self):
        d = self.state_dim
        return nn.MlpSpec((d + self.message_dim,) + (self.hidden_width,) * self.hidden_layers + (d,))

    @property
    def specs(self):
        return [self.phi_spec, self.gamma_spec] * self.n_graph_layers

    @property
    def n_params(self):
        return nn.param_count(self.specs)


def init_params(cfg, seed):
    return nn.init_params(cfg.specs, seed)


def split_params(cfg, params):
    """Per graph layer ``(phi_params, gamma_params)`` views of the flat vector."""
    params = np.asarray(params, dtype=np.float64)
    if params.shape != (cfg.n_params,):
        raise ShapeMismatch(f"expected {cfg.n_params} parameters, got {params.shape}")
    n_phi = cfg.phi_spec.n_params
    n_gamma = cfg.gamma_spec.n_params
    out = []
    pos = 0
    for _ in range(cfg.n_graph_layers):
        out.append((params[pos:pos + n_phi], params[pos + n_phi:pos + n_phi + n_gamma]))
        pos += n_phi + n_gamma
    return out


class _Plan:
    """Graph connectivity laid out in the evaluation numbering."""

    def __init__(self, graph, use_edge_features):
        n = graph.n_nodes
        if n == 0:
            raise EmptyGraph("graph has no nodes")
        if use_edge_features:
            c = graph.coords
            order = np.lexsort((c[:, 1], c[:, 0]))
        else:
            order = np.arange(n)
        rank = np.empty(n, dtype=np.int64)
        rank[order] = np.arange(n)
        src0, dst0 = graph.edges()
        src = rank[src0]
        dst = rank[dst0]
        perm = np.lexsort((dst, src))
        self.src = src[perm]
        self.dst = dst[perm]
        self.order = order
        self.identity = not use_edge_features
        self.n = n
        counts = np.bincount(self.src, minlength=n)
        self.indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=self.indptr[1:])
        self.deg = counts.astype(np.float64)[:, None]
        self.deg_safe = np.maximum(self.deg, 1.0)
        self.has_nb = (counts > 0).astype(np.float64)[:, None]
        # stable sort keeps ascending source order within each target segment
        self.dst_perm = np.argsort(self.dst, kind="stable")
        self.dst_indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.dst, minlength=n), out=self.dst_indptr[1:])
        if use_edge_features:
            c = graph.coords
            self.feat = c[order[self.dst]] - c[order[self.src]]
        else:
            self.feat = None

    def to_internal(self, u):
        return u if self.identity else u[self.order]

    def to_external(self, v):
        if self.identity:
            return v
        out = np.empty_like(v)
        out[self.order] = v
        return out


def plan_for(graph, cfg):
    key = ("mpnn-plan", bool(cfg.use_edge_features))
    plan = graph._cache.get(key)
    if plan is None:
        plan = _Plan(graph, cfg.use_edge_features)
        graph._cache[key] = plan
    return plan


def _layer_forward(plan, cfg, phi_p, gamma_p, h):
    phi_layers = nn.unpack(cfg.phi_spec, phi_p)
    hi = h[plan.src]
    parts = [hi, h[plan.dst] - hi]
    if plan.feat is not None:
        parts.append(plan.feat)
    z = np.concatenate(parts, axis=1)
    acts = []
    a = z
    for w, b in phi_layers[:-1]:
        a = a @ w
        a += b
        np.tanh(a, out=a)
        acts.append(a)
    s = _backend.segment_sum(plan.indptr, a)
    mbar = s / plan.deg_safe
    w_last, b_last = phi_layers[-1]
    m = (mbar @ w_last + b_last) * plan.has_nb
    y = np.concatenate([h, m], axis=1)
    out, g_hidden = nn.forward(cfg.gamma_spec, gamma_p, y)
    return out, (z, acts, mbar, y, g_hidden)


def _layer_backward(plan, cfg, phi_p, gamma_p, cache, g_out):
    z, acts, mbar, y, g_hidden = cache
    d = cfg.state_dim
    g_gamma, gy = nn.backward(cfg.gamma_spec, gamma_p, y, g_hidden, g_out)
    gh = gy[:, :d].copy()
    gm = gy[:, d:] * plan.has_nb
    phi_layers = nn.unpack(cfg.phi_spec, phi_p)
    w_last, _ = phi_layers[-1]
    grads = [None] * (2 * len(phi_layers))
    grads[-2] = (mbar.T @ gm).ravel()
    grads[-1] = gm.sum(axis=0)
    g = ((gm @ w_last.T) / plan.deg_safe)[plan.src]
    ins = [z] + acts[:-1]
    for li in range(len(phi_layers) - 2, -1, -1):
        _backend.tanh_grad_inplace(g, acts[li])
        grads[2 * li] = (ins[li].T @ g).ravel()
        grads[2 * li + 1] = g.sum(axis=0)
        g = g @ phi_layers[li][0].T
    gz_self = g[:, :d] - g[:, d:2 * d]
    gz_diff = g[:, d:2 * d]
    gh += _backend.segment_sum(plan.indptr, gz_self)
    gh += _backend.segment_sum(plan.dst_indptr, gz_diff[plan.dst_perm])
    return gh, np.concatenate(grads + [g_gamma])


def _as_state(graph, cfg, u):
    u = np.asarray(u, dtype=np.float64)
    squeeze = u.ndim == 1
    u2 = u[:, None] if squeeze else u
    if u2.ndim != 2 or u2.shape != (graph.n_nodes, cfg.state_dim):
        raise ShapeMismatch(f"state must have shape ({graph.n_nodes}, {cfg.state_dim}), got {u.shape}")
    return u2, squeeze


class Surrogate:
    """A surrogate bound to one graph and parameter vector.

    ``__call__`` evaluates ``du/dt``; ``forward``/``backward`` keep and
    consume the activation cache so a reverse sweep does not recompute the
    forward pass.  States are ``(N, d)`` arrays in the caller's numbering.
    """

    def __init__(self, graph, cfg, params):
        self.graph = graph
        self.cfg = cfg
        self.params = np.asarray(params, dtype=np.float64)
        self.layers = split_params(cfg, self.params)
        self.plan = plan_for(graph, cfg)
        self.nfe = 0

    def forward(self, u):
        self.nfe += 1
        h = self.plan.to_internal(u)
        caches = []
        for phi_p, gamma_p in self.layers:
            h, cache = _layer_forward(self.plan, self.cfg, phi_p, gamma_p, h)
            caches.append(cache)
        return self.plan.to_external(h), caches

    def __call__(self, u):
        return self.forward(u)[0]

    def backward(self, caches, cotangent):
        g = self.plan.to_internal(cotangent)
        grads = []
        for (phi_p, gamma_p), cache in zip(reversed(self.layers), reversed(caches)):
            g, gt = _layer_backward(self.plan, self.cfg, phi_p, gamma_p, cache, g)
            grads.append(gt)
        return self.plan.to_external(g), np.concatenate(grads[::-1])

    def vjp(self, u, cotangent):
        _, caches = self.forward(u)
        return self.backward(caches, cotangent)


def eval_fhat(graph, u, cfg, params):
    """Time derivative of the node states under the surrogate; same shape as ``u``."""
    u2, squeeze = _as_state(graph, cfg, u)
    out = Surrogate(graph, cfg, params)(u2)
    return out[:, 0] if squeeze else out


def fhat_vjp(graph, u, cfg, params, cotangent):
    """``(u_bar, theta_bar)`` for the cotangent of :func:`eval_fhat`'s output."""
    u2, squeeze = _as_state(graph, cfg, u)
    c2, _ = _as_state(graph, cfg, cotangent)
    gu, gt = Surrogate(graph, cfg, params).vjp(u2, c2)
    return (gu[:, 0] if squeeze else gu), gt


@dataclass
class Model:
    """A surrogate architecture with its parameters and free-form provenance."""

    cfg: SurrogateConfig
    params: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=np.float64)
        if self.params.shape != (self.cfg.n_params,):
            raise ShapeMismatch(f"expected {self.cfg.n_params} parameters, got {self.params.shape}")

    @classmethod
    def init(cls, cfg, seed):
        return cls(cfg, init_params(cfg, seed), {"init_seed": str(seed)})

    def surrogate(self, graph):
        return Surrogate(graph, self.cfg, self.params)
