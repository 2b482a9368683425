"""Cylindrical Wiener increments with exact coupling across resolutions.

A path is the full matrix of Gaussian increments at the finest step for
m noise directions.  Truncating columns realizes the projection onto the
first m_keep noise modes; summing rows in blocks coarsens the time step
while preserving the Brownian path.  Generation uses the Philox
counter-based generator keyed by (seed, path_id), so any path of an
ensemble can be (re)generated independently, in any order, on any number
of workers, with identical bits.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import IndivisibleFactorError, InvalidDimensionError, InvalidTruncationError

MAGIC = b"SPDEWNR1"


@dataclass(frozen=True)
class NoisePath:
    m_modes: int
    n_steps: int
    dt_fine: float
    increments: np.ndarray      # (n_steps, m_modes), each ~ N(0, dt_fine)
    seed: int
    path_id: int

    @property
    def t_end(self):
        return self.n_steps * self.dt_fine

    def terminal(self):
        """Brownian value W(t_end) per mode."""
        return self.increments.sum(axis=0)


def sample_path(m_modes, n_steps, dt_fine, seed, path_id=0):
    if m_modes < 1 or n_steps < 1 or dt_fine <= 0:
        raise InvalidDimensionError("m_modes, n_steps, dt_fine must be positive")
    key = np.array([seed, path_id], dtype=np.uint64)   # 128-bit Philox key
    gen = np.random.Generator(np.random.Philox(key=key))
    inc = gen.standard_normal((n_steps, m_modes)) * np.sqrt(dt_fine)
    return NoisePath(m_modes=m_modes, n_steps=n_steps, dt_fine=dt_fine,
                     increments=inc, seed=seed, path_id=path_id)


def truncate(path, m_keep):
    """Keep the first m_keep noise directions (the projection Q with n=m_keep)."""
    if m_keep < 0 or m_keep > path.m_modes:
        raise InvalidTruncationError(
            f"m_keep {m_keep} outside [0, {path.m_modes}]")
    return NoisePath(m_modes=m_keep, n_steps=path.n_steps, dt_fine=path.dt_fine,
                     increments=path.increments[:, :m_keep],
                     seed=path.seed, path_id=path.path_id)


def coarsen(path, factor):
    """Sum increments in blocks of `factor`; dt becomes factor*dt_fine."""
    if factor < 1 or path.n_steps % factor != 0:
        raise IndivisibleFactorError(
            f"factor {factor} does not divide n_steps {path.n_steps}")
    if factor == 1:
        return path
    blocks = path.increments.reshape(path.n_steps // factor, factor, path.m_modes)
    return NoisePath(m_modes=path.m_modes, n_steps=path.n_steps // factor,
                     dt_fine=path.dt_fine * factor, increments=blocks.sum(axis=1),
                     seed=path.seed, path_id=path.path_id)


def dump_increments(path, file):
    """Binary dump: 16-byte header (magic, u32 n_steps, u32 m_modes) then
    the increment matrix as little-endian float64, row-major."""
    close = False
    if isinstance(file, (str, bytes)):
        file = open(file, "wb")
        close = True
    try:
        file.write(MAGIC)
        file.write(struct.pack("<II", path.n_steps, path.m_modes))
        file.write(np.ascontiguousarray(path.increments, dtype="<f8").tobytes())
    finally:
        if close:
            file.close()


def load_increments(file, dt_fine, seed=0, path_id=0):
    """Read a dump back; dt_fine is not stored and must be supplied."""
    close = False
    if isinstance(file, (str, bytes)):
        file = open(file, "rb")
        close = True
    try:
        header = file.read(16)
        if len(header) != 16 or header[:8] != MAGIC:
            raise InvalidDimensionError("not a noise dump (bad magic)")
        n_steps, m_modes = struct.unpack("<II", header[8:])
        data = np.frombuffer(file.read(8 * n_steps * m_modes), dtype="<f8")
        if data.size != n_steps * m_modes:
            raise InvalidDimensionError("noise dump truncated")
        inc = data.reshape(n_steps, m_modes).astype(float)
    finally:
        if close:
            file.close()
    return NoisePath(m_modes=m_modes, n_steps=n_steps, dt_fine=dt_fine,
                     increments=inc, seed=seed, path_id=path_id)


def sample_block(m_modes, n_steps, dt_fine, seed, path_ids):
    """Stack of per-path increment matrices, shape (len(path_ids), n_steps, m).

    Each slice equals sample_path(...).increments bit for bit, so chunked
    or threaded consumers see exactly the serial stream.
    """
    out = np.empty((len(path_ids), n_steps, m_modes))
    for i, pid in enumerate(path_ids):
        out[i] = sample_path(m_modes, n_steps, dt_fine, seed, pid).increments
    return out
