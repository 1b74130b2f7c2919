"""Pure-numpy pointwise kernels (fallback for the compiled ``_ckernels``).

All node-indexed arrays are component-first with the nodes flattened into the
last axis: a rank-2 field is ``(d, d, m)``, a rank-3 field ``(d, d, d, m)``.
Batches of matrices for the monotonicity kernels are ``(m, d, d)``.
"""

import numpy as np


def weight(G, mu, s):
    """(mu + |G|^2)^s at every node."""
    sq = np.einsum("ijm,ijm->m", G, G)
    return (mu + sq) ** s


def stress(G, mu, p):
    """(mu + |G|^2)^((p-2)/2) G, with S = 0 where mu = 0 and G = 0."""
    sq = np.einsum("ijm,ijm->m", G, G)
    base = mu + sq
    scale = np.zeros_like(base)
    np.power(base, 0.5 * (p - 2.0), out=scale, where=base > 0)
    return G * scale


def contract(G, M):
    """Return (G c, G^T c) with c_j = sum_hk G_hk M_jhk."""
    c = np.einsum("hkm,jhkm->jm", G, M)
    return np.einsum("ijm,jm->im", G, c), np.einsum("jim,jm->im", G, c)


def monotonicity_terms(A, B, mu, p):
    """Per-pair (S(A)-S(B)):(A-B) and (mu+|A|^2+|B|^2)^((p-2)/2) |A-B|^2."""
    a2 = np.einsum("mij,mij->m", A, A)
    b2 = np.einsum("mij,mij->m", B, B)
    ea = mu + a2
    eb = mu + b2
    sa = np.zeros_like(ea)
    sb = np.zeros_like(eb)
    np.power(ea, 0.5 * (p - 2.0), out=sa, where=ea > 0)
    np.power(eb, 0.5 * (p - 2.0), out=sb, where=eb > 0)
    D = A - B
    lhs = np.einsum("mij,mij->m", sa[:, None, None] * A - sb[:, None, None] * B, D)
    d2 = np.einsum("mij,mij->m", D, D)
    base = mu + a2 + b2
    w = np.zeros_like(base)
    np.power(base, 0.5 * (p - 2.0), out=w, where=base > 0)
    return lhs, w * d2
