"""Periodic-box grids, field containers and spectral calculus.

Every field lives on a uniform grid of ``points_per_axis ** dim`` nodes in
the box ``[0, box_length)^dim``.  Values are stored component-first: a field
of tensor rank ``r`` has shape ``(dim,) * r + grid.shape``.  For the gradient
of a vector field the entry ``(i, j)`` is ``D_j u_i``; every derivative
operation appends its differentiation index *last*.

Derivatives are exact for band-limited fields.  Odd-order derivatives along an
axis drop that axis' Nyquist mode, even-order ones keep it, so that
``trace(hessian) == laplacian`` holds bit-for-bit in the spectral domain.
"""

from __future__ import annotations

import itertools
import json
import os
import struct
from dataclasses import dataclass, field as dc_field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.fft

from .errors import (
    ConfigurationError,
    ExponentError,
    RankError,
    UnsupportedDimensionError,
    WeightError,
)

__all__ = [
    "Grid",
    "Field",
    "build_grid",
    "differentiate",
    "norm",
    "dual_norm_estimate",
    "random_field",
    "write_field",
    "read_field",
]

THREADS_ENV = "PSTOKES_THREADS"
_workers = int(os.environ.get(THREADS_ENV, "1") or 1)


def set_threads(n: int) -> None:
    """Set the number of FFT worker threads (results are bit-stable only for 1)."""
    global _workers
    _workers = max(1, int(n))


def get_threads() -> int:
    return _workers


@dataclass(frozen=True)
class Grid:
    dim: int
    points_per_axis: int
    box_length: float

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise UnsupportedDimensionError(f"dim must be 2 or 3, got {self.dim}")
        n = self.points_per_axis
        if int(n) != n or n < 8 or (n & (n - 1)) != 0:
            raise ConfigurationError(
                f"points_per_axis must be a power of two >= 8, got {n}"
            )
        if not (self.box_length > 0 and np.isfinite(self.box_length)):
            raise ConfigurationError(f"box_length must be positive, got {self.box_length}")

    @property
    def spacing(self) -> float:
        return self.box_length / self.points_per_axis

    @property
    def shape(self) -> tuple:
        return (self.points_per_axis,) * self.dim

    @property
    def n_nodes(self) -> int:
        return self.points_per_axis**self.dim

    @property
    def volume(self) -> float:
        return self.box_length**self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @property
    def axes(self) -> tuple:
        """Array axes that carry the spatial index (always the trailing ones)."""
        return tuple(range(-self.dim, 0))

    @property
    def center(self) -> np.ndarray:
        return np.full(self.dim, 0.5 * self.box_length)

    @cached_property
    def coords(self) -> tuple:
        x = np.arange(self.points_per_axis) * self.spacing
        return tuple(np.meshgrid(*([x] * self.dim), indexing="ij"))

    @cached_property
    def spectral_shape(self) -> tuple:
        n = self.points_per_axis
        return (n,) * (self.dim - 1) + (n // 2 + 1,)

    @cached_property
    def integer_wavenumbers(self) -> tuple:
        """Broadcastable integer lattice, one array per axis (rfft layout)."""
        n = self.points_per_axis
        full = np.fft.fftfreq(n, d=1.0 / n)
        half = np.arange(n // 2 + 1, dtype=float)
        out = []
        for ax in range(self.dim):
            k = half if ax == self.dim - 1 else full
            shape = [1] * self.dim
            shape[ax] = k.size
            out.append(k.reshape(shape))
        return tuple(out)

    @cached_property
    def wavenumbers(self) -> tuple:
        scale = 2.0 * np.pi / self.box_length
        return tuple(k * scale for k in self.integer_wavenumbers)

    @cached_property
    def odd_wavenumbers(self) -> tuple:
        """Wavenumbers used by odd-order derivatives: Nyquist entries zeroed."""
        nyq = self.points_per_axis // 2
        out = []
        for k, kint in zip(self.wavenumbers, self.integer_wavenumbers):
            out.append(np.where(np.abs(kint) == nyq, 0.0, k))
        return tuple(out)

    @cached_property
    def k_squared(self) -> np.ndarray:
        return sum(k**2 for k in self.wavenumbers)

    @cached_property
    def inverse_k_squared(self) -> np.ndarray:
        k2 = self.k_squared
        out = np.zeros_like(k2)
        np.divide(1.0, k2, out=out, where=k2 > 0)
        return out

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """2/3-rule mask: keeps modes with |k_axis| < N/3 along every axis."""
        cut = self.points_per_axis / 3.0
        mask = np.ones(self.spectral_shape, dtype=bool)
        for k in self.integer_wavenumbers:
            mask = mask & (np.abs(k) < cut)
        return mask

    @cached_property
    def rfft_weights(self) -> np.ndarray:
        """Multiplicity of each stored rfft coefficient in the full spectrum."""
        n = self.points_per_axis
        w = np.full(n // 2 + 1, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        shape = [1] * self.dim
        shape[-1] = w.size
        return np.broadcast_to(w.reshape(shape), self.spectral_shape)

    def describe(self) -> dict:
        return {
            "dim": self.dim,
            "points_per_axis": self.points_per_axis,
            "box_length": float(self.box_length),
        }


def build_grid(dim: int, points_per_axis: int, box_length: float = 2 * np.pi) -> Grid:
    return Grid(int(dim), int(points_per_axis), float(box_length))


# --------------------------------------------------------------------------
# raw spectral helpers on arrays (component axes first, spatial axes last)


def fft(values: np.ndarray, grid: Grid) -> np.ndarray:
    return scipy.fft.rfftn(values, axes=grid.axes, workers=_workers)


def ifft(coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    return scipy.fft.irfftn(coeffs, s=grid.shape, axes=grid.axes, workers=_workers)


def dealias(values: np.ndarray, grid: Grid) -> np.ndarray:
    return ifft(fft(values, grid) * grid.dealias_mask, grid)


def derivative_multiplier(grid: Grid, orders) -> np.ndarray:
    """Fourier multiplier of ``prod_ax D_ax^orders[ax]``."""
    mult = np.ones(grid.spectral_shape, dtype=complex)
    for ax, m in enumerate(orders):
        if m == 0:
            continue
        k = grid.odd_wavenumbers[ax] if m % 2 else grid.wavenumbers[ax]
        mult = mult * (1j * k) ** m
    return mult


def _orders(dim: int, indices) -> tuple:
    counts = [0] * dim
    for i in indices:
        counts[i] += 1
    return tuple(counts)


def spectral_derivatives(coeffs: np.ndarray, grid: Grid, order: int) -> np.ndarray:
    """All derivatives of total order ``order``; new indices appended after components."""
    d = grid.dim
    ncomp = coeffs.shape[: coeffs.ndim - d]
    out = np.empty(ncomp + (d,) * order + grid.spectral_shape, dtype=complex)
    cache = {}
    for idx in itertools.product(range(d), repeat=order):
        key = _orders(d, idx)
        if key not in cache:
            cache[key] = derivative_multiplier(grid, key)
        out[(Ellipsis,) + idx + (slice(None),) * d] = coeffs * cache[key]
    return out


def grad_array(values: np.ndarray, grid: Grid) -> np.ndarray:
    return ifft(spectral_derivatives(fft(values, grid), grid, 1), grid)


def div_array(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Contract the last component index with the gradient."""
    hat = fft(values, grid)
    tail = (slice(None),) * grid.dim
    acc = 0
    for j in range(grid.dim):
        acc = acc + hat[(Ellipsis, j) + tail] * (1j * grid.odd_wavenumbers[j])
    return ifft(acc, grid)


def laplacian_array(values: np.ndarray, grid: Grid) -> np.ndarray:
    return ifft(-grid.k_squared * fft(values, grid), grid)


def inverse_laplacian_array(values: np.ndarray, grid: Grid) -> np.ndarray:
    return ifft(-grid.inverse_k_squared * fft(values, grid), grid)


def integrate(values: np.ndarray, grid: Grid) -> float:
    return float(np.sum(values) * grid.cell_volume)


def inner(a: np.ndarray, b: np.ndarray, grid: Grid) -> float:
    """L2 pairing of two arrays of equal shape (full index contraction)."""
    return float(np.vdot(a, b).real * grid.cell_volume)


def pointwise_magnitude(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Euclidean / Frobenius norm over component axes at each node."""
    ncomp = values.ndim - grid.dim
    if ncomp == 0:
        return np.abs(values)
    return np.sqrt(np.sum(values**2, axis=tuple(range(ncomp))))


def lq_norm_array(values: np.ndarray, grid: Grid, q: float, weight=None) -> float:
    mag = pointwise_magnitude(values, grid)
    if np.isinf(q):
        return float(mag.max())
    integrand = mag**q if weight is None else mag**q * weight
    return float((np.sum(integrand) * grid.cell_volume) ** (1.0 / q))


# --------------------------------------------------------------------------
# field container


@dataclass
class Field:
    """Tensor field on a periodic grid.

    ``values`` has shape ``(dim,) * rank + grid.shape``.
    """

    grid: Grid
    values: np.ndarray = dc_field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        d = self.grid.dim
        if v.ndim < d or v.shape[v.ndim - d :] != self.grid.shape:
            raise RankError(
                f"values of shape {v.shape} do not sit on grid {self.grid.shape}"
            )
        if any(s != d for s in v.shape[: v.ndim - d]):
            raise RankError(f"component axes {v.shape[: v.ndim - d]} must all equal dim={d}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        self.values = v

    @property
    def rank(self) -> int:
        return self.values.ndim - self.grid.dim

    @classmethod
    def zeros(cls, grid: Grid, rank: int = 0) -> "Field":
        return cls(grid, np.zeros((grid.dim,) * rank + grid.shape))

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "Field":
        """Evaluate ``fn(*coords)`` on the nodes; ``fn`` may return a list of components."""
        out = fn(*grid.coords)
        if isinstance(out, (list, tuple)):
            out = np.stack([np.broadcast_to(np.asarray(o, float), grid.shape) for o in out])
        return cls(grid, np.broadcast_to(np.asarray(out, float), np.shape(out)).copy())

    def spectral(self) -> np.ndarray:
        return fft(self.values, self.grid)

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())

    def mean(self) -> np.ndarray:
        return self.values.mean(axis=self.grid.axes)

    def magnitude(self) -> np.ndarray:
        return pointwise_magnitude(self.values, self.grid)

    def _check(self, other):
        if isinstance(other, Field):
            if other.grid != self.grid or other.rank != self.rank:
                raise RankError("fields differ in grid or rank")
            return other.values
        return other

    def __add__(self, other):
        return Field(self.grid, self.values + self._check(other))

    def __sub__(self, other):
        return Field(self.grid, self.values - self._check(other))

    def __mul__(self, scalar):
        return Field(self.grid, self.values * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return Field(self.grid, -self.values)


# aliases documenting intent; all share the one container
ScalarField = VectorField = Tensor2Field = Tensor3Field = Field

_KINDS = ("grad", "div", "laplacian", "hessian", "third")


def differentiate(field: Field, kind: str) -> Field:
    """Spectral derivative of ``field``.

    ``grad``/``hessian``/``third`` raise the rank by 1/2/3 (new index last),
    ``div`` contracts the last index and needs rank >= 1, ``laplacian`` keeps
    the rank.
    """
    g = field.grid
    if kind == "grad":
        return Field(g, grad_array(field.values, g))
    if kind == "div":
        if field.rank < 1:
            raise RankError("divergence needs a field of rank >= 1")
        return Field(g, div_array(field.values, g))
    if kind == "laplacian":
        return Field(g, laplacian_array(field.values, g))
    if kind == "hessian":
        return Field(g, ifft(spectral_derivatives(field.spectral(), g, 2), g))
    if kind == "third":
        return Field(g, ifft(spectral_derivatives(field.spectral(), g, 3), g))
    raise ValueError(f"unknown derivative kind {kind!r}; expected one of {_KINDS}")


def norm(field: Field, kind: str = "Lq", q: float = 2.0, weight: Field | None = None) -> float:
    """Trapezoid-on-torus Lebesgue norm of the pointwise magnitude of ``field``.

    ``kind`` is ``"Lq"``, ``"Linf"`` or ``"weighted_Lq"``; the weighted norm
    is ``(int |field|^q weight dx)^(1/q)``.
    """
    if kind == "Linf":
        return float(field.magnitude().max())
    if not q >= 1:
        raise ExponentError(f"q must be >= 1, got {q}")
    if kind == "Lq":
        return lq_norm_array(field.values, field.grid, q)
    if kind == "weighted_Lq":
        if weight is None:
            raise WeightError("weighted_Lq needs a weight field")
        w = weight.values
        if w.shape != field.grid.shape or not np.all(w > 0):
            raise WeightError("weight must be a strictly positive scalar field")
        return lq_norm_array(field.values, field.grid, q, weight=w)
    raise ValueError(f"unknown norm kind {kind!r}")


# --------------------------------------------------------------------------
# random band-limited fields


def random_field(
    grid: Grid,
    rank: int = 1,
    seed=0,
    decay: float = 2.0,
    amplitude: float = 1.0,
    max_mode: float | None = None,
) -> Field:
    """Gaussian band-limited field with spectral amplitude ``|k|^-decay``.

    Modes outside the 2/3-rule band (or above integer wavenumber
    ``max_mode``) are zero; the mean is zero.  The result is rescaled to unit
    RMS times ``amplitude``.
    """
    rng = np.random.default_rng(seed)
    shape = (grid.dim,) * rank + grid.spectral_shape
    coeffs = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    kint = np.sqrt(sum(k**2 for k in grid.integer_wavenumbers))
    envelope = np.zeros_like(kint)
    np.power(kint, -decay, out=envelope, where=kint > 0)
    mask = grid.dealias_mask & (kint > 0)
    if max_mode is not None:
        mask = mask & (kint <= max_mode)
    values = ifft(coeffs * envelope * mask, grid)
    rms = np.sqrt(np.mean(values**2))
    if rms > 0:
        values = values * (amplitude / rms)
    return Field(grid, values)


# --------------------------------------------------------------------------
# dual norm of a forcing


def dual_norm_estimate(f: Field, p_conj: float, n_probes: int = 8, seed: int = 0) -> float:
    """Lower estimate of ``||f||_{-1,p'} = sup |(f, phi)| / ||grad phi||_p``.

    The supremum is taken over two analytic candidates, ``Delta^-1 f`` and its
    image under the ``L^p`` duality map, followed by ``n_probes`` random
    band-limited fields.  Probe ``i`` is drawn from the stream ``(seed, i)``, so
    raising ``n_probes`` never lowers the estimate.
    """
    if not p_conj > 1:
        raise ExponentError(f"p_conj must exceed 1, got {p_conj}")
    if n_probes < 1:
        raise ValueError("n_probes must be >= 1")
    g = f.grid
    p = p_conj / (p_conj - 1.0)
    fv = f.values
    if not np.any(fv):
        return 0.0

    def ratio(phi):
        den = lq_norm_array(grad_array(phi, g), g, p)
        return abs(inner(fv, phi, g)) / den if den > 0 else 0.0

    phi0 = inverse_laplacian_array(fv, g)
    best = ratio(phi0)
    # duality map: grad phi ~ |G|^(p'-2) G with G = grad Delta^-1 f
    G = grad_array(phi0, g)
    mag = pointwise_magnitude(G, g)
    scale = np.zeros_like(mag)
    np.power(mag, p_conj - 2.0, out=scale, where=mag > 0)
    phi1 = inverse_laplacian_array(div_array(G * scale, g), g)
    best = max(best, ratio(phi1))
    for i in range(n_probes):
        probe = random_field(g, rank=f.rank, seed=[int(seed), i]).values
        best = max(best, ratio(probe))
    return best


# --------------------------------------------------------------------------
# serialization

_MAGIC = b"PSTKFLD1"
_HEADER = struct.Struct("<8siiid")


def write_field(path, field: Field, metadata: dict | None = None) -> Path:
    """Write ``field`` as little-endian float64 with a fixed header plus a JSON sidecar."""
    path = Path(path)
    g = field.grid
    header = _HEADER.pack(_MAGIC, g.dim, g.points_per_axis, field.rank, float(g.box_length))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())
    meta = {
        **g.describe(),
        "rank": field.rank,
        "shape": list(field.values.shape),
        "dtype": "float64",
        "byte_order": "little",
        "header_bytes": _HEADER.size,
    }
    if metadata:
        meta["metadata"] = metadata
    sidecar = path.with_name(path.name + ".json")
    sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True))
    return path


def read_field(path) -> Field:
    path = Path(path)
    raw = path.read_bytes()
    magic, dim, n, rank, box = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise ConfigurationError(f"{path}: not a field file")
    grid = build_grid(dim, n, box)
    shape = (dim,) * rank + grid.shape
    values = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(shape)
    return Field(grid, values.astype(float))
