"""Independent slow reference implementations used as test oracles."""

import numpy as np


def reference_mlp(sizes, params, x):
    """Straightforward per-layer evaluation with weights read off the flat layout."""
    pos = 0
    a = np.asarray(x, dtype=np.float64)
    for i in range(len(sizes) - 1):
        w = np.array(params[pos:pos + sizes[i] * sizes[i + 1]]).reshape(sizes[i], sizes[i + 1])
        pos += sizes[i] * sizes[i + 1]
        b = params[pos:pos + sizes[i + 1]]
        pos += sizes[i + 1]
        a = a @ w + b
        if i < len(sizes) - 2:
            a = np.tanh(a)
    return a


def reference_fhat(coords, nbrs, u, cfg, params):
    """Per-node loop: average phi over neighbours, then gamma."""
    out = u.copy()
    pos = 0
    for _ in range(cfg.n_graph_layers):
        sp, sg = cfg.phi_spec, cfg.gamma_spec
        pp = params[pos:pos + sp.n_params]
        pg = params[pos + sp.n_params:pos + sp.n_params + sg.n_params]
        pos += sp.n_params + sg.n_params
        h = out
        new = np.empty_like(h)
        for i in range(h.shape[0]):
            msgs = []
            for j in nbrs[i]:
                z = [h[i], h[j] - h[i]]
                if cfg.use_edge_features:
                    z.append(coords[j] - coords[i])
                msgs.append(reference_mlp(sp.layer_sizes, pp, np.concatenate(z)))
            m = np.mean(msgs, axis=0) if msgs else np.zeros(cfg.message_dim)
            new[i] = reference_mlp(sg.layer_sizes, pg, np.concatenate([h[i], m]))
        out = new
    return out


def incircle_matrix(pts, tris):
    """Vectorised in-circle determinants, shape (T, N); positive means inside."""
    a, b, c = (pts[tris[:, k]] for k in range(3))
    out = np.empty((tris.shape[0], pts.shape[0]))
    for p in range(pts.shape[0]):
        rows = []
        for v in (a, b, c):
            d = v - pts[p]
            rows.append(np.stack([d[:, 0], d[:, 1], (d * d).sum(1)], axis=1))
        out[:, p] = np.linalg.det(np.stack(rows, axis=1))
    return out
