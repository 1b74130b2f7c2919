"""Direct-summation oracle for the pressure functional: full complex DFT matrices, no FFT."""

import numpy as np


class DirectDFT:
    """Explicit O(N^2) discrete Fourier calculus on a small grid."""

    def __init__(self, grid):
        n = grid.points_per_axis
        ints = np.fft.fftfreq(n, 1.0 / n)
        kk = np.stack(np.meshgrid(*([ints] * grid.dim), indexing="ij")).reshape(grid.dim, -1)
        xx = np.stack(grid.coords).reshape(grid.dim, -1)
        scale = 2 * np.pi / grid.box_length
        self.k = kk * scale
        odd = kk.copy()
        odd[kk == -n // 2] = 0
        self.k_odd = odd * scale
        self.E = np.exp(1j * (self.k.T @ xx))  # rows: modes, columns: nodes
        self.shape = grid.shape
        self.n_nodes = xx.shape[1]
        self.k2 = np.sum(self.k**2, axis=0)

    def forward(self, v):
        return np.conj(self.E) @ v.ravel() / self.n_nodes

    def backward(self, vh):
        return (self.E.T @ vh).real.reshape(self.shape)

    def d1(self, v, j):
        return self.backward(1j * self.k_odd[j] * self.forward(v))

    def d2(self, v, j, k):
        sym = -self.k[j] ** 2 if j == k else (1j * self.k_odd[j]) * (1j * self.k_odd[k])
        return self.backward(sym * self.forward(v))

    def inv_lap_div(self, d):
        acc = sum(1j * self.k_odd[j] * self.forward(d[j]) for j in range(len(d)))
        inv = np.zeros_like(self.k2)
        inv[self.k2 > 0] = -1.0 / self.k2[self.k2 > 0]
        return self.backward(inv * acc)

    def double_riesz(self, S):
        acc = 0
        for i in range(len(S)):
            for j in range(len(S)):
                acc = acc + self.k_odd[i] * self.k_odd[j] * self.forward(S[i, j])
        inv = np.zeros_like(self.k2)
        inv[self.k2 > 0] = 1.0 / self.k2[self.k2 > 0]
        return self.backward(inv * acc)


def oracle_cutoff_free(u, sp, dft):
    d = len(u)
    G = np.array([[dft.d1(u[i], j) for j in range(d)] for i in range(d)])
    T = np.array([[[dft.d2(u[h], j, k) for k in range(d)] for h in range(d)] for j in range(d)])
    base = sp.mu + np.sum(G**2, axis=(0, 1))
    c = np.zeros((d,) + base.shape)
    for j in range(d):
        for h in range(d):
            for k in range(d):
                c[j] += G[h, k] * T[j, h, k] * base ** ((sp.p - 2) / 2)
    dens = np.zeros_like(c)
    for i in range(d):
        for j in range(d):
            dens[i] += (sp.p - 2) * G[j, i] * c[j] / base
    return dft.inv_lap_div(dens)


def oracle_singular(u, p, dft):
    d = len(u)
    G = np.array([[dft.d1(u[i], j) for j in range(d)] for i in range(d)])
    mag = np.sqrt(np.sum(G**2, axis=(0, 1)))
    w = np.zeros_like(mag)
    w[mag > 0] = mag[mag > 0] ** (p - 2)
    return dft.double_riesz(G * w)
