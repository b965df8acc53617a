"""Discretized temperature loops, the exact Gaussian reference measure, and the action.

A temperature loop is a periodic path on [0, beta] stored at the P grid
times tau_k = k beta / P.  The harmonic reference measure has covariance
given by the propagator

    S_beta(tau, tau') = [e^{-|tau-tau'| D} + e^{-(beta-|tau-tau'|) D}]
                        / (2 sqrt(m a) (1 - e^{-beta D})),   D = sqrt(a/m),

which on the uniform periodic grid is a symmetric positive-definite
circulant matrix.  `GaussianLoopFactory` diagonalizes it in the real
discrete Fourier basis, so reference loops are sampled *exactly* at the
grid points; the only discretization left in the interacting measure is
the Riemann sum inside the action.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigurationError, DefinitenessError, DomainError
from .spectral import OscillatorParams, anharmonic_potential

__all__ = [
    "TemperatureLoop",
    "BoundaryCondition",
    "LoopConfiguration",
    "GaussianLoopFactory",
    "propagator",
    "default_slices",
    "build_factory",
    "sample_loop",
    "action",
    "box_bonds",
    "exterior_face_counts",
    "save_loops",
    "load_loops",
]

LOOPS_MAGIC = b"QACLOOPS1\n"


def propagator(beta: float, m: float, a: float, tau, tau_prime):
    """Harmonic two-time covariance S_beta(tau, tau') for tau, tau' in [0, beta]."""
    if beta <= 0 or m <= 0 or a <= 0:
        raise DomainError("beta, m, a must all be strictly positive")
    tau = np.asarray(tau, dtype=float)
    tau_prime = np.asarray(tau_prime, dtype=float)
    if np.any(tau < 0) or np.any(tau > beta) or np.any(tau_prime < 0) or np.any(tau_prime > beta):
        raise DomainError(f"tau arguments must lie in [0, {beta}]")
    gap = math.sqrt(a / m)
    lag = np.abs(tau - tau_prime)
    value = (np.exp(-lag * gap) + np.exp(-(beta - lag) * gap)) / (
        2.0 * math.sqrt(m * a) * (1.0 - math.exp(-beta * gap))
    )
    return float(value) if value.ndim == 0 else value


def default_slices(beta: float, m: float, a: float) -> int:
    """P = max(16, ceil(8 beta sqrt(a/m))): >= 8 slices per reference correlation time."""
    return max(16, int(math.ceil(8.0 * beta * math.sqrt(a / m))))


@dataclass(frozen=True)
class TemperatureLoop:
    """One periodic path sampled at P uniform grid times (tau = beta excluded: it is tau = 0)."""

    values: np.ndarray
    beta: float

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.ndim != 1 or values.shape[0] < 2:
            raise ConfigurationError("loop values must be a 1-d array with at least 2 slices")
        if not np.all(np.isfinite(values)):
            raise ConfigurationError("loop values must all be finite")
        if self.beta <= 0:
            raise ConfigurationError("beta must be strictly positive")

    @property
    def slices(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class BoundaryCondition:
    """Exterior condition of a finite volume.

    ``free`` leaves outward bonds absent; the clamped kinds attach constant
    loops at +clamp or -clamp to every exterior neighbor, the standard
    symmetry-breaking surrogate for the extreme translation-invariant states.
    """

    kind: str
    clamp: float | None = None

    _KINDS = ("free", "plus_clamped", "minus_clamped")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ConfigurationError(f"boundary kind must be one of {self._KINDS}, got {self.kind!r}")
        if self.kind == "free":
            if self.clamp is not None:
                raise ConfigurationError("free boundary takes no clamp level")
        else:
            if not (self.clamp is not None and self.clamp > 0):
                raise ConfigurationError("clamped boundary requires clamp > 0")

    @classmethod
    def free(cls) -> "BoundaryCondition":
        return cls(kind="free")

    @classmethod
    def plus_clamped(cls, clamp: float) -> "BoundaryCondition":
        return cls(kind="plus_clamped", clamp=clamp)

    @classmethod
    def minus_clamped(cls, clamp: float) -> "BoundaryCondition":
        return cls(kind="minus_clamped", clamp=clamp)

    @property
    def sign(self) -> int:
        if self.kind == "plus_clamped":
            return 1
        if self.kind == "minus_clamped":
            return -1
        return 0

    def mirrored(self) -> "BoundaryCondition":
        if self.kind == "free":
            return self
        kind = "minus_clamped" if self.kind == "plus_clamped" else "plus_clamped"
        return BoundaryCondition(kind=kind, clamp=self.clamp)


@lru_cache(maxsize=64)
def box_bonds(box: tuple[int, ...]) -> np.ndarray:
    """All interior nearest-neighbor pairs of the box, each bond listed once (row-major ids)."""
    shape = tuple(box)
    ids = np.arange(int(np.prod(shape))).reshape(shape)
    pairs = []
    for axis in range(len(shape)):
        if shape[axis] < 2:
            continue
        left = np.take(ids, range(shape[axis] - 1), axis=axis).ravel()
        right = np.take(ids, range(1, shape[axis]), axis=axis).ravel()
        pairs.append(np.stack([left, right], axis=1))
    if not pairs:
        return np.empty((0, 2), dtype=int)
    return np.concatenate(pairs, axis=0)


@lru_cache(maxsize=64)
def exterior_face_counts(box: tuple[int, ...]) -> np.ndarray:
    """Per site, the number of nearest neighbors lying outside the box."""
    shape = tuple(box)
    counts = np.zeros(shape, dtype=int)
    for axis in range(len(shape)):
        edge_lo = [slice(None)] * len(shape)
        edge_lo[axis] = 0
        counts[tuple(edge_lo)] += 1
        edge_hi = [slice(None)] * len(shape)
        edge_hi[axis] = shape[axis] - 1
        counts[tuple(edge_hi)] += 1
    return counts.ravel()


@lru_cache(maxsize=64)
def neighbor_lists(box: tuple[int, ...]) -> tuple[np.ndarray, ...]:
    """Per site, the ids of its interior nearest neighbors."""
    n_sites = int(np.prod(box))
    lists: list[list[int]] = [[] for _ in range(n_sites)]
    for i, j in box_bonds(box):
        lists[int(i)].append(int(j))
        lists[int(j)].append(int(i))
    return tuple(np.array(v, dtype=int) for v in lists)


@dataclass
class LoopConfiguration:
    """Loops over every site of an axis-aligned box, all sharing (beta, P).

    ``values`` has shape (n_sites, P) with sites in row-major order of the
    box extents.
    """

    box: tuple[int, ...]
    beta: float
    slices: int
    values: np.ndarray
    boundary: BoundaryCondition

    def __post_init__(self):
        self.box = tuple(int(n) for n in self.box)
        if not self.box or any(n < 1 for n in self.box):
            raise ConfigurationError(f"box extents must all be >= 1, got {self.box!r}")
        if self.beta <= 0:
            raise ConfigurationError("beta must be strictly positive")
        if self.slices < 2:
            raise ConfigurationError("slices must be >= 2")
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.n_sites, self.slices):
            raise ConfigurationError(
                f"values must have shape {(self.n_sites, self.slices)}, got {self.values.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ConfigurationError("loop values must all be finite")

    @property
    def n_sites(self) -> int:
        return int(np.prod(self.box))

    def site_index(self, site) -> int:
        """Row-major flat id of a site given either its id or box coordinates."""
        if isinstance(site, (int, np.integer)):
            index = int(site)
            if not 0 <= index < self.n_sites:
                raise DomainError(f"site id {index} outside volume of {self.n_sites} sites")
            return index
        coords = tuple(int(c) for c in site)
        if len(coords) != len(self.box) or any(not 0 <= c < n for c, n in zip(coords, self.box)):
            raise DomainError(f"site {site!r} outside box {self.box}")
        return int(np.ravel_multi_index(coords, self.box))

    def loop(self, site) -> TemperatureLoop:
        return TemperatureLoop(values=self.values[self.site_index(site)].copy(), beta=self.beta)

    def copy(self) -> "LoopConfiguration":
        return LoopConfiguration(
            box=self.box,
            beta=self.beta,
            slices=self.slices,
            values=self.values.copy(),
            boundary=self.boundary,
        )

    def mirrored(self) -> "LoopConfiguration":
        """Global sign flip of every loop together with the mirrored boundary."""
        return LoopConfiguration(
            box=self.box,
            beta=self.beta,
            slices=self.slices,
            values=-self.values,
            boundary=self.boundary.mirrored(),
        )

    @classmethod
    def zeros(cls, box, beta, slices, boundary=None) -> "LoopConfiguration":
        box = tuple(int(n) for n in box)
        return cls(
            box=box,
            beta=beta,
            slices=slices,
            values=np.zeros((int(np.prod(box)), slices)),
            boundary=boundary or BoundaryCondition.free(),
        )

    @classmethod
    def constant(cls, box, beta, slices, level, boundary=None) -> "LoopConfiguration":
        box = tuple(int(n) for n in box)
        return cls(
            box=box,
            beta=beta,
            slices=slices,
            values=np.full((int(np.prod(box)), slices), float(level)),
            boundary=boundary or BoundaryCondition.free(),
        )


def _fourier_basis(slices: int) -> tuple[np.ndarray, np.ndarray]:
    """Real orthonormal DFT basis rows and the map row -> circulant frequency."""
    P = slices
    k = np.arange(P)
    rows = [np.full(P, 1.0 / math.sqrt(P))]
    freqs = [0]
    for j in range(1, (P + 1) // 2):
        angle = 2.0 * math.pi * j * k / P
        rows.append(math.sqrt(2.0 / P) * np.cos(angle))
        rows.append(math.sqrt(2.0 / P) * np.sin(angle))
        freqs.extend([j, j])
    if P % 2 == 0:
        rows.append((-1.0) ** k / math.sqrt(P))
        freqs.append(P // 2)
    return np.array(rows), np.array(freqs, dtype=int)


@dataclass(frozen=True)
class GaussianLoopFactory:
    """Exact sampler and quadratic form of the reference loop measure on P slices.

    ``spectral_weights`` are the eigenvalues of the circulant covariance,
    listed per real-Fourier basis row (cos/sin pairs share a weight).
    """

    beta: float
    m: float
    a: float
    slices: int
    first_row: np.ndarray
    spectral_weights: np.ndarray
    basis: np.ndarray
    _synthesis: np.ndarray
    _inverse: np.ndarray

    @property
    def slice_variance(self) -> float:
        return float(self.first_row[0])

    def covariance_matrix(self) -> np.ndarray:
        idx = np.arange(self.slices)
        return self.first_row[(idx[:, None] - idx[None, :]) % self.slices]

    def sample_values(self, rng: np.random.Generator, normal_sign: float = 1.0) -> np.ndarray:
        """One exact draw: rotate independent scaled normals back from the Fourier basis."""
        z = normal_sign * rng.standard_normal(self.slices)
        return self._synthesis @ z

    def sample_batch(self, rng: np.random.Generator, count: int) -> np.ndarray:
        z = rng.standard_normal((count, self.slices))
        return z @ self._synthesis.T

    def quad_form(self, values: np.ndarray) -> float:
        """values^T C^{-1} values evaluated in Fourier coordinates."""
        coeffs = self.basis @ values
        return float(np.sum(coeffs * coeffs / self.spectral_weights))

    def inverse_apply(self, values: np.ndarray) -> np.ndarray:
        return self._inverse @ values

    def inverse_row(self, j: int) -> np.ndarray:
        return self._inverse[j]

    @property
    def inverse_diagonal(self) -> float:
        return float(self._inverse[0, 0])


def build_factory(beta: float, m: float, a: float, slices: int) -> GaussianLoopFactory:
    """Assemble and diagonalize the circulant covariance of the reference measure."""
    if slices < 2:
        raise ConfigurationError("slices must be >= 2")
    times = np.arange(slices) * (beta / slices)
    first_row = propagator(beta, m, a, 0.0, times)
    eigen = np.fft.fft(first_row)
    if np.max(np.abs(eigen.imag)) > 1e-12 * np.max(np.abs(eigen.real)):
        raise DefinitenessError("circulant covariance is not symmetric to working precision")
    eigen = eigen.real
    if np.any(eigen <= 0.0):
        raise DefinitenessError(
            "nonpositive spectral weight in the reference covariance; "
            "increase the slice count or reduce beta * sqrt(a/m)"
        )
    basis, freqs = _fourier_basis(slices)
    weights = eigen[freqs]
    synthesis = basis.T * np.sqrt(weights)
    inverse = (basis.T / weights) @ basis
    return GaussianLoopFactory(
        beta=beta,
        m=m,
        a=a,
        slices=slices,
        first_row=first_row,
        spectral_weights=weights,
        basis=basis,
        _synthesis=synthesis,
        _inverse=inverse,
    )


def sample_loop(factory: GaussianLoopFactory, rng: np.random.Generator) -> TemperatureLoop:
    """One exact draw from the reference measure, as a TemperatureLoop."""
    return TemperatureLoop(values=factory.sample_values(rng), beta=factory.beta)


def action(config: LoopConfiguration, params: OscillatorParams) -> float:
    """Riemann-sum interaction action of a configuration.

    Bond terms -J sum_k w_i(tau_k) w_j(tau_k) over interior bonds (plus the
    clamped constant loops on exterior bonds) and site terms sum_k V(w),
    all weighted by beta/P.  The harmonic part lives in the reference
    measure, never here.
    """
    if abs(config.beta - params.beta) > 1e-12 * max(config.beta, params.beta):
        raise ConfigurationError(
            f"configuration beta {config.beta} does not match model beta {params.beta}"
        )
    if len(config.box) != params.d:
        raise ConfigurationError(
            f"box has {len(config.box)} axes but the model dimension is {params.d}"
        )
    dt = config.beta / config.slices
    values = config.values
    total = float(np.sum(anharmonic_potential(params, values))) * dt
    bonds = box_bonds(config.box)
    if bonds.shape[0]:
        total -= params.J * dt * float(np.sum(values[bonds[:, 0]] * values[bonds[:, 1]]))
    sign = config.boundary.sign
    if sign != 0:
        level = sign * config.boundary.clamp
        counts = exterior_face_counts(config.box)
        total -= params.J * dt * level * float(counts @ values.sum(axis=1))
    return total


def _header_dict(config: LoopConfiguration) -> dict:
    return {
        "format": "qacrystal-loops",
        "version": 1,
        "beta": config.beta,
        "slices": config.slices,
        "box": list(config.box),
        "boundary": config.boundary.kind,
        "clamp": config.boundary.clamp,
    }


def save_loops(config: LoopConfiguration, path) -> None:
    """Write a configuration: magic, JSON header line, raw little-endian float64 values."""
    header = json.dumps(_header_dict(config), sort_keys=True).encode() + b"\n"
    payload = np.ascontiguousarray(config.values, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(LOOPS_MAGIC)
        fh.write(header)
        fh.write(payload)


def load_loops(path) -> LoopConfiguration:
    """Bit-exact inverse of `save_loops`."""
    with open(path, "rb") as fh:
        magic = fh.read(len(LOOPS_MAGIC))
        if magic != LOOPS_MAGIC:
            raise ConfigurationError(f"{path}: not a qacrystal loops file")
        header = json.loads(fh.readline().decode())
        box = tuple(int(n) for n in header["box"])
        slices = int(header["slices"])
        n_sites = int(np.prod(box))
        payload = fh.read(8 * n_sites * slices)
        values = np.frombuffer(payload, dtype="<f8").reshape(n_sites, slices).copy()
    boundary = BoundaryCondition(kind=header["boundary"], clamp=header["clamp"])
    return LoopConfiguration(
        box=box, beta=float(header["beta"]), slices=slices, values=values, boundary=boundary
    )
