"""Seeded two-sided correlated Gaussian walks.

A walk is sampled on the mesh ``-window_n, -window_n + 1/mesh_k, ..., window_n``
with ``L = R = 0`` at time zero.  Increments over a mesh step are bivariate
normal with variance ``1/mesh_k`` and correlation ``-cos(pi gamma^2 / 4)``.
The two time directions come from independent child streams of the seed, so
growing ``window_n`` leaves the inner part of the walk unchanged.
"""

from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, FormatError, ResourceError

WALK_MAGIC = b"MCRTWALK"
WALK_VERSION = 1
_HEADER = struct.Struct("<8sIdQIQ")

_POSITIVE_STREAM = 0
_NEGATIVE_STREAM = 1


def _max_bytes() -> int:
    return int(float(os.environ.get("MCRT_MAX_BYTES", 4 * 2**30)))


def correlation_of(gamma: float) -> float:
    """Correlation of the two walk coordinates for a given ``gamma``."""
    if not (0.0 < gamma < 2.0):
        raise DomainError(f"gamma must lie in (0, 2), got {gamma!r}")
    return -math.cos(math.pi * gamma * gamma / 4.0)


@dataclass(frozen=True)
class WalkParams:
    gamma: float
    window_n: int
    mesh_k: int = 1
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.gamma < 2.0):
            raise DomainError(f"gamma must lie in (0, 2), got {self.gamma!r}")
        if int(self.window_n) != self.window_n or self.window_n < 1:
            raise DomainError(f"window_n must be a positive integer, got {self.window_n!r}")
        if int(self.mesh_k) != self.mesh_k or self.mesh_k < 1:
            raise DomainError(f"mesh_k must be a positive integer, got {self.mesh_k!r}")
        if not (0 <= self.seed < 2**64):
            raise DomainError("seed must be a 64-bit unsigned integer")

    @property
    def n_samples(self) -> int:
        return 2 * self.window_n * self.mesh_k + 1


@dataclass(frozen=True, eq=False)
class CorrelatedWalk:
    """Sampled walk ``(L, R)`` on a uniform mesh.

    ``samples_l[i]`` is the value at time ``t_min + i / mesh_k``.  Walks made
    by :func:`generate_walk` have ``t_min = -window_n``; :meth:`from_samples`
    allows arbitrary hand-written walks for tests.
    """

    samples_l: np.ndarray
    samples_r: np.ndarray
    mesh_k: int = 1
    t_min: int = 0
    params: WalkParams | None = None
    rho: float = float("nan")

    def __post_init__(self):
        if self.samples_l.shape != self.samples_r.shape or self.samples_l.ndim != 1:
            raise DomainError("L and R sample arrays must be 1-d and of equal length")
        if (len(self.samples_l) - 1) % self.mesh_k:
            raise DomainError("sample count must be a whole number of unit intervals plus one")

    @classmethod
    def from_samples(cls, l, r, mesh_k: int = 1, t_min: int = 0) -> "CorrelatedWalk":
        l = np.ascontiguousarray(l, dtype=np.float64)
        r = np.ascontiguousarray(r, dtype=np.float64)
        return cls(l, r, mesh_k=int(mesh_k), t_min=int(t_min))

    @property
    def t_max(self) -> int:
        return self.t_min + (len(self.samples_l) - 1) // self.mesh_k

    @property
    def origin_index(self) -> int:
        return -self.t_min * self.mesh_k

    def index_of(self, t: int) -> int:
        """Sample index of the integer time ``t``."""
        return (t - self.t_min) * self.mesh_k

    def equals(self, other: "CorrelatedWalk") -> bool:
        return (
            self.mesh_k == other.mesh_k
            and self.t_min == other.t_min
            and np.array_equal(self.samples_l, other.samples_l)
            and np.array_equal(self.samples_r, other.samples_r)
        )


def _half(params: WalkParams, rho: float, stream: int) -> tuple[np.ndarray, np.ndarray]:
    seq = np.random.SeedSequence(params.seed, spawn_key=(stream,))
    rng = np.random.Generator(np.random.PCG64(seq))
    steps = params.window_n * params.mesh_k
    z = rng.standard_normal((steps, 2))
    scale = 1.0 / math.sqrt(params.mesh_k)
    dl = scale * z[:, 0]
    dr = scale * (rho * z[:, 0] + math.sqrt(1.0 - rho * rho) * z[:, 1])
    return np.cumsum(dl), np.cumsum(dr)


def generate_walk(params: WalkParams) -> CorrelatedWalk:
    """Sample the two-sided walk described by ``params``."""
    rho = correlation_of(params.gamma)
    n = params.n_samples
    required = 4 * n * 8
    if required > _max_bytes():
        raise ResourceError(
            f"walk with {n} samples needs about {required} bytes (limit {_max_bytes()})",
            required_bytes=required,
        )
    try:
        mid = params.window_n * params.mesh_k
        l = np.empty(n)
        r = np.empty(n)
        l[mid] = r[mid] = 0.0
        pos_l, pos_r = _half(params, rho, _POSITIVE_STREAM)
        l[mid + 1 :] = pos_l
        r[mid + 1 :] = pos_r
        neg_l, neg_r = _half(params, rho, _NEGATIVE_STREAM)
        l[:mid] = neg_l[::-1]
        r[:mid] = neg_r[::-1]
    except MemoryError as exc:
        raise ResourceError(
            f"could not allocate a walk with {n} samples (about {required} bytes)",
            required_bytes=required,
        ) from exc
    return CorrelatedWalk(l, r, params.mesh_k, -params.window_n, params, rho)


def save_walk(walk: CorrelatedWalk, path) -> None:
    p = walk.params
    if p is None:
        raise DomainError("only walks produced by generate_walk carry the parameters the format needs")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(WALK_MAGIC, WALK_VERSION, p.gamma, p.window_n, p.mesh_k, p.seed))
        fh.write(walk.samples_l.astype("<f8").tobytes())
        fh.write(walk.samples_r.astype("<f8").tobytes())


def load_walk(path) -> CorrelatedWalk:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError("walk file truncated before end of header")
    magic, version, gamma, window_n, mesh_k, seed = _HEADER.unpack_from(data, 0)
    if magic != WALK_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {WALK_MAGIC!r}")
    if version != WALK_VERSION:
        raise FormatError(f"unsupported walk format version {version}")
    try:
        params = WalkParams(gamma, window_n, mesh_k, seed)
    except DomainError as exc:
        raise FormatError(f"invalid header: {exc}") from exc
    n = params.n_samples
    if len(data) != _HEADER.size + 16 * n:
        raise FormatError(f"expected {2 * n} samples, file holds {(len(data) - _HEADER.size) / 8:g}")
    l = np.frombuffer(data, "<f8", n, _HEADER.size).astype(np.float64)
    r = np.frombuffer(data, "<f8", n, _HEADER.size + 8 * n).astype(np.float64)
    return CorrelatedWalk(l, r, mesh_k, -window_n, params, correlation_of(gamma))
