"""Periodic space-time lattice and exact Fourier-multiplier calculus.

Fields are plain complex ``ndarray`` objects of shape ``grid.shape`` =
``(Nx,)*n + (Nt,)``; vector fields carry a leading component axis of length
``n``.  Every differential operator here is a Fourier multiplier, evaluated
with the signed integer frequency convention ``k in [-N/2, N/2)``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.fft as _sfft

__all__ = [
    "GridSpec",
    "as_field",
    "as_vector_field",
    "fft",
    "ifft",
    "gradx",
    "divx",
    "laplacian",
    "half_dt",
    "hilbert_t",
    "dt",
    "inner",
    "l2_norm",
    "norms",
    "write_field",
    "read_field",
    "FIELD_MAGIC",
]

FIELD_MAGIC = b"KLFLD001"


def _is_pow2(m: int) -> bool:
    return m > 0 and (m & (m - 1)) == 0


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic lattice on the torus ``[0, Lx)^n x [0, Lt)``."""

    n: int = 2
    Nx: int = 16
    Nt: int = 32
    Lx: float = 1.0
    Lt: float = 1.0

    def __post_init__(self):
        if self.n < 1 or self.n > 3:
            raise ValueError(f"spatial dimension must be 1, 2 or 3, got {self.n}")
        for name in ("Nx", "Nt"):
            m = getattr(self, name)
            if m < 4 or not _is_pow2(m):
                raise ValueError(f"{name} must be a power of two >= 4, got {m}")
        if not (self.Lx > 0 and self.Lt > 0):
            raise ValueError("periods must be positive")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.Nx,) * self.n + (self.Nt,)

    @property
    def vshape(self) -> tuple[int, ...]:
        return (self.n,) + self.shape

    @property
    def size(self) -> int:
        return self.Nx**self.n * self.Nt

    @property
    def hx(self) -> float:
        return self.Lx / self.Nx

    @property
    def ht(self) -> float:
        return self.Lt / self.Nt

    @property
    def cell_volume(self) -> float:
        return self.hx**self.n * self.ht

    @property
    def volume(self) -> float:
        return self.Lx**self.n * self.Lt

    @property
    def parabolic_compatible(self) -> bool:
        return self.Nt >= self.Nx

    def refined(self, factor: int = 2) -> "GridSpec":
        return GridSpec(self.n, self.Nx * factor, self.Nt * factor, self.Lx, self.Lt)

    # -- frequencies -------------------------------------------------------

    def _axis_shape(self, axis: int, m: int) -> tuple[int, ...]:
        s = [1] * (self.n + 1)
        s[axis] = m
        return tuple(s)

    @cached_property
    def xi(self) -> tuple[np.ndarray, ...]:
        """Angular spatial wavenumbers, one broadcastable array per axis."""
        k = np.fft.fftfreq(self.Nx, d=1.0 / self.Nx)
        w = 2 * np.pi * k / self.Lx
        return tuple(w.reshape(self._axis_shape(j, self.Nx)) for j in range(self.n))

    @cached_property
    def tau(self) -> np.ndarray:
        m = np.fft.fftfreq(self.Nt, d=1.0 / self.Nt)
        return (2 * np.pi * m / self.Lt).reshape(self._axis_shape(self.n, self.Nt))

    @cached_property
    def xi2(self) -> np.ndarray:
        """|xi|^2 broadcast to the full spectral shape."""
        out = np.zeros(self.shape)
        for w in self.xi:
            out = out + w**2
        return out

    @cached_property
    def time_nyquist(self) -> np.ndarray:
        """Boolean mask (broadcastable) of the time-Nyquist line."""
        m = np.fft.fftfreq(self.Nt, d=1.0 / self.Nt)
        return (m == -self.Nt // 2).reshape(self._axis_shape(self.n, self.Nt))

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        """Lattice coordinates ``(x_1, ..., x_n, t)`` as broadcastable arrays."""
        xs = np.arange(self.Nx) * self.hx
        ts = np.arange(self.Nt) * self.ht
        out = [xs.reshape(self._axis_shape(j, self.Nx)) for j in range(self.n)]
        out.append(ts.reshape(self._axis_shape(self.n, self.Nt)))
        return tuple(out)

    # -- symbols -------------------------------------------------------------

    @cached_property
    def half_dt_symbol(self) -> np.ndarray:
        return np.sqrt(np.abs(self.tau))

    @cached_property
    def hilbert_symbol(self) -> np.ndarray:
        s = 1j * np.sign(self.tau)
        return np.where(self.time_nyquist, 0.0, s)

    @cached_property
    def dt_symbol(self) -> np.ndarray:
        return 1j * self.tau

    @cached_property
    def heat_symbol(self) -> np.ndarray:
        """Symbol ``i tau + |xi|^2`` of the constant-coefficient operator."""
        return self.dt_symbol + self.xi2


def as_field(grid: GridSpec, f) -> np.ndarray:
    arr = np.asarray(f, dtype=complex)
    if arr.shape != grid.shape:
        raise ValueError(f"field shape {arr.shape} does not match grid {grid.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("field contains non-finite samples")
    return arr


def as_vector_field(grid: GridSpec, F) -> np.ndarray:
    arr = np.asarray(F, dtype=complex)
    if arr.shape != grid.vshape:
        raise ValueError(f"vector field shape {arr.shape} does not match grid {grid.vshape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("vector field contains non-finite samples")
    return arr


def _axes(grid: GridSpec, arr: np.ndarray) -> tuple[int, ...]:
    lead = arr.ndim - (grid.n + 1)
    return tuple(range(lead, arr.ndim))


def fft(grid: GridSpec, f: np.ndarray) -> np.ndarray:
    """Space-time DFT over the trailing ``n+1`` axes (leading axes are batch)."""
    return _sfft.fftn(f, axes=_axes(grid, f))


def ifft(grid: GridSpec, fh: np.ndarray) -> np.ndarray:
    return _sfft.ifftn(fh, axes=_axes(grid, fh))


def multiply(grid: GridSpec, f: np.ndarray, symbol: np.ndarray) -> np.ndarray:
    return ifft(grid, fft(grid, f) * symbol)


def gradx(grid: GridSpec, f) -> np.ndarray:
    f = as_field(grid, f)
    fh = fft(grid, f)
    return np.stack([ifft(grid, 1j * w * fh) for w in grid.xi])


def divx(grid: GridSpec, F) -> np.ndarray:
    F = as_vector_field(grid, F)
    acc = np.zeros(grid.shape, dtype=complex)
    for j, w in enumerate(grid.xi):
        acc += 1j * w * fft(grid, F[j])
    return ifft(grid, acc)


def laplacian(grid: GridSpec, f) -> np.ndarray:
    return multiply(grid, as_field(grid, f), -grid.xi2)


def half_dt(grid: GridSpec, f) -> np.ndarray:
    """Half-order time derivative, symbol ``|tau|^(1/2)``."""
    return multiply(grid, as_field(grid, f), grid.half_dt_symbol)


def hilbert_t(grid: GridSpec, f) -> np.ndarray:
    """Hilbert transform in time, symbol ``i sgn(tau)``; zero on the Nyquist line."""
    return multiply(grid, as_field(grid, f), grid.hilbert_symbol)


def dt(grid: GridSpec, f) -> np.ndarray:
    return multiply(grid, as_field(grid, f), grid.dt_symbol)


def inner(grid: GridSpec, f: np.ndarray, g: np.ndarray) -> complex:
    """Quadrature inner product ``<f, g> = cell * sum f conj(g)`` (vector fields summed over components)."""
    return complex(grid.cell_volume * np.vdot(np.ravel(g), np.ravel(f)))


def l2_norm(grid: GridSpec, f: np.ndarray) -> float:
    return float(np.sqrt(grid.cell_volume) * np.linalg.norm(np.ravel(f)))


def norms(grid: GridSpec, f) -> dict:
    """L2 norm, the D-seminorm ``(|grad_x f|^2 + |D_t^{1/2} f|^2)^{1/2}`` and the energy norm.

    Evaluated spectrally; by Parseval this agrees with physical-space quadrature.
    """
    f = as_field(grid, f)
    fh = fft(grid, f)
    w = grid.cell_volume / grid.size
    p = np.abs(fh) ** 2
    l2sq = w * p.sum()
    gsq = w * (grid.xi2 * p).sum()
    hsq = w * (np.abs(grid.tau) * p).sum()
    dsq = gsq + hsq
    return {
        "l2": float(np.sqrt(l2sq)),
        "grad": float(np.sqrt(gsq)),
        "half_dt": float(np.sqrt(hsq)),
        "D_seminorm": float(np.sqrt(dsq)),
        "energy": float(np.sqrt(dsq + l2sq)),
    }


# -- binary container ----------------------------------------------------------

_HEADER = struct.Struct("<8sqqqddq")


def write_field(path, grid: GridSpec, data: np.ndarray) -> None:
    """Write a scalar field, vector field or stack of fields.

    Layout: magic, (n, Nx, Nt) int64, (Lx, Lt) float64, component count int64,
    then interleaved (re, im) float64 pairs in row-major ``(x_1..x_n, t)`` order.
    """
    arr = np.asarray(data, dtype="<c16")
    if arr.shape == grid.shape:
        ncomp = 1
    elif arr.shape[1:] == grid.shape:
        ncomp = arr.shape[0]
    else:
        raise ValueError(f"data shape {arr.shape} incompatible with grid {grid.shape}")
    with open(Path(path), "wb") as fh:
        fh.write(_HEADER.pack(FIELD_MAGIC, grid.n, grid.Nx, grid.Nt, grid.Lx, grid.Lt, ncomp))
        fh.write(np.ascontiguousarray(arr).tobytes())


def read_field(path) -> tuple[GridSpec, np.ndarray]:
    raw = Path(path).read_bytes()
    magic, n, nx, nt, lx, lt, ncomp = _HEADER.unpack_from(raw)
    if magic != FIELD_MAGIC:
        raise ValueError(f"not a field container (magic {magic!r})")
    grid = GridSpec(n, nx, nt, lx, lt)
    arr = np.frombuffer(raw, dtype="<c16", offset=_HEADER.size).astype(complex)
    if arr.size != ncomp * grid.size:
        raise ValueError("truncated field container")
    shape = grid.shape if ncomp == 1 else (ncomp,) + grid.shape
    return grid, arr.reshape(shape)
