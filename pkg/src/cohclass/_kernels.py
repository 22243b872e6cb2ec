"""Numba kernels for the convolution inner loops.

Arrays are channel-major (channels, batch, h, w); padded inputs carry a
one-pixel zero border. Parallel loops partition work so each thread owns
disjoint output slices, and the per-element accumulation order is fixed,
so results are deterministic regardless of thread scheduling. Weight
gradients accumulate in float64 scalars for precision in both numeric
modes.
"""

from numba import config, njit, prange

# the default TBB probe warns on older TBB builds; OpenMP is always
# present alongside numpy here and performs the same
config.THREADING_LAYER = "omp"


@njit(parallel=True, cache=True)
def conv3x3_forward(xp, w, b, out):
    cout = w.shape[0]
    cin = w.shape[1]
    n = xp.shape[1]
    h = out.shape[2]
    wd = out.shape[3]
    for s in prange(n):
        for o in range(cout):
            for i in range(h):
                for j in range(wd):
                    out[o, s, i, j] = b[o]
            for c in range(cin):
                for u in range(3):
                    for v in range(3):
                        wv = w[o, c, u, v]
                        for i in range(h):
                            for j in range(wd):
                                out[o, s, i, j] += wv * xp[c, s, i + u, j + v]


@njit(parallel=True, cache=True)
def conv3x3_input_grad(g, w, gxp):
    cout = w.shape[0]
    cin = w.shape[1]
    n = g.shape[1]
    h = g.shape[2]
    wd = g.shape[3]
    for s in prange(n):
        for c in range(cin):
            for o in range(cout):
                for u in range(3):
                    for v in range(3):
                        wv = w[o, c, u, v]
                        for i in range(h):
                            for j in range(wd):
                                gxp[c, s, i + u, j + v] += wv * g[o, s, i, j]


@njit(parallel=True, cache=True)
def conv3x3_weight_grad(g, xp, dw, db):
    cout = dw.shape[0]
    cin = dw.shape[1]
    n = g.shape[1]
    h = g.shape[2]
    wd = g.shape[3]
    for idx in prange(cout * cin):
        o = idx // cin
        c = idx % cin
        for u in range(3):
            for v in range(3):
                acc = 0.0
                for s in range(n):
                    for i in range(h):
                        for j in range(wd):
                            acc += g[o, s, i, j] * xp[c, s, i + u, j + v]
                dw[o, c, u, v] = acc
    for o in prange(cout):
        acc = 0.0
        for s in range(n):
            for i in range(h):
                for j in range(wd):
                    acc += g[o, s, i, j]
        db[o] = acc


@njit(parallel=True, cache=True)
def depthwise3x3_forward(xp, dw, out):
    cin = dw.shape[0]
    n = xp.shape[1]
    h = out.shape[2]
    wd = out.shape[3]
    for s in prange(n):
        for c in range(cin):
            for i in range(h):
                for j in range(wd):
                    out[c, s, i, j] = 0.0
            for u in range(3):
                for v in range(3):
                    wv = dw[c, u, v]
                    for i in range(h):
                        for j in range(wd):
                            out[c, s, i, j] += wv * xp[c, s, i + u, j + v]


@njit(parallel=True, cache=True)
def depthwise3x3_input_grad(g, dw, gxp):
    cin = dw.shape[0]
    n = g.shape[1]
    h = g.shape[2]
    wd = g.shape[3]
    for s in prange(n):
        for c in range(cin):
            for u in range(3):
                for v in range(3):
                    wv = dw[c, u, v]
                    for i in range(h):
                        for j in range(wd):
                            gxp[c, s, i + u, j + v] += wv * g[c, s, i, j]


@njit(parallel=True, cache=True)
def depthwise3x3_weight_grad(g, xp, ddw):
    cin = ddw.shape[0]
    n = g.shape[1]
    h = g.shape[2]
    wd = g.shape[3]
    for c in prange(cin):
        for u in range(3):
            for v in range(3):
                acc = 0.0
                for s in range(n):
                    for i in range(h):
                        for j in range(wd):
                            acc += g[c, s, i, j] * xp[c, s, i + u, j + v]
                ddw[c, u, v] = acc
