"""Named analytic forcings used by the command-line front end and the tests."""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError
from .fields import Field, Grid, random_field
from .potentials import leray_project

__all__ = ["FORCINGS", "single_mode", "taylor_green", "bump_rotation",
           "random_band_limited", "make_forcing"]


def single_mode(grid: Grid, mode=(1, 0, 0), direction=(0, 1, 0), amplitude: float = 1.0) -> Field:
    """``amplitude * e * cos(k . x)``; divergence-free when ``e`` is orthogonal to ``mode``."""
    d = grid.dim
    k = np.asarray(mode[:d], float) * 2 * np.pi / grid.box_length
    e = np.asarray(direction[:d], float)
    if not np.any(e):
        raise ConfigurationError("direction must be nonzero")
    e = e / np.linalg.norm(e)
    phase = sum(ki * xi for ki, xi in zip(k, grid.coords))
    return Field(grid, amplitude * e.reshape((d,) + (1,) * d) * np.cos(phase))


def taylor_green(grid: Grid, amplitude: float = 1.0) -> Field:
    """Taylor-Green vortex, divergence-free, at the lowest wavenumber of the box."""
    if grid.dim != 3:
        raise ConfigurationError("taylor_green is defined for dim = 3")
    s = 2 * np.pi / grid.box_length
    x, y, z = (s * c for c in grid.coords)
    v = np.stack([
        np.sin(x) * np.cos(y) * np.cos(z),
        -np.cos(x) * np.sin(y) * np.cos(z),
        np.zeros(grid.shape),
    ])
    return Field(grid, amplitude * v)


def bump_rotation(grid: Grid, radius: float | None = None, amplitude: float = 1.0) -> Field:
    """Compactly supported rotation ``curl(b e_z)`` with ``b = (1 - r^2/R^2)_+^6`` (``dim = 2``: ``perp grad b``)."""
    R = radius if radius is not None else grid.box_length / 4
    c = grid.center
    dx = [x - ci for x, ci in zip(grid.coords, c)]
    r2 = sum(d**2 for d in dx)
    t = np.clip(1.0 - r2 / R**2, 0.0, None)
    db = -12.0 * t**5 / R**2  # grad b = db * (x - c)
    v = np.zeros((grid.dim,) + grid.shape)
    v[0] = db * dx[1]
    v[1] = -db * dx[0]
    return Field(grid, amplitude * v)


def random_band_limited(grid: Grid, seed=0, amplitude: float = 1.0, max_mode: float | None = 4,
                        solenoidal: bool = True) -> Field:
    """Random band-limited vector field, Leray-projected unless ``solenoidal`` is false."""
    f = random_field(grid, rank=1, seed=seed, amplitude=amplitude, max_mode=max_mode)
    if solenoidal:
        return Field(grid, leray_project(f.values, grid))
    return f


FORCINGS = {
    "single_mode": single_mode,
    "taylor_green": taylor_green,
    "bump_rotation": bump_rotation,
    "random_band_limited": random_band_limited,
}


def make_forcing(grid: Grid, config: dict, seed: int = 0) -> Field:
    """Build a forcing from ``{"name": ..., **kwargs}``; ``random_band_limited`` defaults to ``seed``."""
    config = dict(config)
    name = config.pop("name", None)
    if name not in FORCINGS:
        raise ConfigurationError(f"unknown forcing {name!r}; choose from {sorted(FORCINGS)}")
    if name == "random_band_limited":
        config.setdefault("seed", seed)
    for key in ("mode", "direction"):
        if key in config:
            config[key] = tuple(config[key])
    try:
        return FORCINGS[name](grid, **config)
    except TypeError as exc:
        raise ConfigurationError(f"bad arguments for forcing {name!r}: {exc}") from exc
