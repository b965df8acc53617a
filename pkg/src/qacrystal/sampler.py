"""Metropolis sampling of the interacting loop measure and its estimators.

The target law on a finite box is the product reference measure (exact
circulant Gaussian per site) reweighted by exp(-I) with I the interaction
action.  Three proposal kinds:

* whole-loop redraw -- one site's loop is replaced by a fresh exact draw
  from the reference measure; the Gaussian factor cancels, so the move is
  accepted with min(1, e^{-dI}) and is rejection-free when I vanishes
  (harmonic mode with J = 0);
* single-slice nudge -- one slice value gets a Gaussian step of scale
  sigma; the acceptance uses the full density change including the
  Gaussian quadratic form, evaluated through the factory's spectral
  inverse;
* global sign flip -- every loop is negated; with a free boundary this is
  always accepted (the action is even), with clamped boundaries only the
  boundary bond terms change.

Mirror convention: a chain with a minus-clamped boundary negates every
standard-normal variate it draws.  Because the action satisfies
I_minus(-w) = I_plus(w), a minus run with the same seed and the negated
initial state is then the *exact* pathwise negation of the plus run, which
turns the order-parameter antisymmetry into a machine-checkable identity.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError, PreconditionError
from .loops import (
    BoundaryCondition,
    GaussianLoopFactory,
    LoopConfiguration,
    action,
    exterior_face_counts,
    neighbor_lists,
)
from .spectral import OscillatorParams, anharmonic_potential

__all__ = [
    "ChainSettings",
    "EstimateReport",
    "ChainResult",
    "GksAuditReport",
    "batch_means",
    "metropolis_chain",
    "log_target_density",
    "matsubara_estimate",
    "order_parameter",
    "gks_audit",
    "clipped_identity",
    "merge_reports",
    "run_parallel_chains",
    "spawn_chain_settings",
    "save_checkpoint",
    "load_checkpoint",
]

BATCH_COUNT = 32
CHECKPOINT_MAGIC = b"QACCHKPT1\n"

REDRAW, NUDGE, FLIP = 0, 1, 2
_KIND_NAMES = ("redraw", "nudge", "flip")


@dataclass(frozen=True)
class ChainSettings:
    """Run-length, seeding, and proposal mix of one Metropolis chain.

    ``proposal_mix`` gives the probabilities of (whole-loop redraw,
    single-slice nudge, global sign flip); ``nudge_scale`` is the slice
    step sigma (None selects sqrt of the reference slice variance).
    ``burn_in`` counts extra discarded sweeps before the ``sweeps``
    recorded ones.
    """

    sweeps: int
    burn_in: int = 0
    thinning: int = 1
    seed: int = 0
    proposal_mix: tuple[float, float, float] = (0.5, 0.45, 0.05)
    nudge_scale: float | None = None

    def __post_init__(self):
        if not (isinstance(self.sweeps, int) and self.sweeps > 0):
            raise ConfigurationError(f"sweeps must be a positive integer, got {self.sweeps!r}")
        if not (isinstance(self.burn_in, int) and self.burn_in >= 0):
            raise ConfigurationError(f"burn_in must be a nonnegative integer, got {self.burn_in!r}")
        if not (isinstance(self.thinning, int) and self.thinning >= 1):
            raise ConfigurationError(f"thinning must be a positive integer, got {self.thinning!r}")
        if not (isinstance(self.seed, int) and 0 <= self.seed < 2**64):
            raise ConfigurationError("seed must be an unsigned 64-bit integer")
        mix = tuple(float(p) for p in self.proposal_mix)
        if len(mix) != 3 or any(p < 0 or p > 1 for p in mix) or abs(sum(mix) - 1.0) > 1e-9:
            raise ConfigurationError("proposal_mix must be three probabilities summing to 1")
        object.__setattr__(self, "proposal_mix", mix)
        if self.nudge_scale is not None and not self.nudge_scale > 0:
            raise ConfigurationError("nudge_scale must be positive when given")

    @property
    def n_samples(self) -> int:
        return self.sweeps // self.thinning

    def digest(self) -> str:
        payload = json.dumps(
            {
                "sweeps": self.sweeps,
                "burn_in": self.burn_in,
                "thinning": self.thinning,
                "seed": self.seed,
                "proposal_mix": list(self.proposal_mix),
                "nudge_scale": self.nudge_scale,
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def echo(self) -> dict:
        return {
            "sweeps": self.sweeps,
            "burn_in": self.burn_in,
            "thinning": self.thinning,
            "seed": self.seed,
            "proposal_mix": list(self.proposal_mix),
            "nudge_scale": self.nudge_scale,
            "digest": self.digest(),
        }


def batch_means(samples: np.ndarray, n_batches: int = BATCH_COUNT) -> tuple[np.ndarray, np.ndarray]:
    """Mean and batch-means standard error of a (possibly vector) sample series.

    The series is split into consecutive batches (trailing remainder
    dropped); the standard error is the spread of the batch means, which
    absorbs autocorrelation at the batch scale.
    """
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[0]
    if n == 0:
        raise ConfigurationError("cannot estimate from an empty sample series")
    mean = samples.mean(axis=0)
    b = min(n_batches, n)
    size = n // b
    trimmed = samples[: b * size].reshape((b, size) + samples.shape[1:])
    means = trimmed.mean(axis=1)
    if b < 2:
        return mean, np.full_like(np.asarray(mean, dtype=float), np.inf)
    se = means.std(axis=0, ddof=1) / math.sqrt(b)
    return mean, se


@dataclass(frozen=True)
class EstimateReport:
    """Monte Carlo estimate with its batch-means standard error and provenance."""

    value: float | np.ndarray
    std_error: float | np.ndarray
    n_samples: int
    acceptance_rates: dict
    settings_echo: dict

    def __post_init__(self):
        if np.any(np.asarray(self.std_error) < 0):
            raise ConfigurationError("std_error must be nonnegative")

    @classmethod
    def from_samples(cls, samples, acceptance_rates, settings) -> "EstimateReport":
        mean, se = batch_means(np.asarray(samples, dtype=float))
        scalar = np.asarray(mean).ndim == 0
        return cls(
            value=float(mean) if scalar else mean,
            std_error=float(se) if scalar else se,
            n_samples=int(np.asarray(samples).shape[0]),
            acceptance_rates=dict(acceptance_rates),
            settings_echo=settings.echo() if isinstance(settings, ChainSettings) else dict(settings),
        )


@dataclass
class ChainResult:
    """Thinned post-burn-in states plus acceptance bookkeeping."""

    trace: np.ndarray  # (n_samples, n_sites, slices)
    box: tuple[int, ...]
    beta: float
    slices: int
    boundary: BoundaryCondition
    params: OscillatorParams
    settings: ChainSettings
    acceptance_rates: dict
    reports: dict
    final_values: np.ndarray
    rng_state: dict

    @property
    def n_samples(self) -> int:
        return self.trace.shape[0]

    def final_configuration(self) -> LoopConfiguration:
        return LoopConfiguration(
            box=self.box,
            beta=self.beta,
            slices=self.slices,
            values=self.final_values.copy(),
            boundary=self.boundary,
        )

    def site_index(self, site) -> int:
        return self.final_configuration().site_index(site)

    def slice_index(self, tau: float) -> int:
        """Grid index of an imaginary time; off-grid values are rejected, never interpolated."""
        k = tau * self.slices / self.beta
        rounded = int(round(k))
        if abs(k - rounded) > 1e-9 * self.slices or not 0 <= tau <= self.beta:
            raise DomainError(
                f"tau = {tau} is not on the slice grid (beta = {self.beta}, P = {self.slices})"
            )
        return rounded % self.slices


def log_target_density(
    config: LoopConfiguration, params: OscillatorParams, factory: GaussianLoopFactory
) -> float:
    """Unnormalized log density of the discretized target: Gaussian part plus -I."""
    quad = sum(factory.quad_form(config.values[s]) for s in range(config.n_sites))
    return -0.5 * quad - action(config, params)


def _site_potential_sum(params: OscillatorParams, values: np.ndarray) -> float:
    if params.harmonic:
        return 0.0
    return float(np.sum(anharmonic_potential(params, values)))


def metropolis_chain(
    initial: LoopConfiguration,
    params: OscillatorParams,
    factory: GaussianLoopFactory,
    settings: ChainSettings,
    observers=(),
    rng_state: dict | None = None,
) -> ChainResult:
    """Run one Metropolis chain targeting the discretized interacting measure.

    A sweep visits every site once in fixed order and draws the move kind
    from ``settings.proposal_mix``: a whole-loop redraw proposes one fresh
    reference draw for the site, a nudge visit walks the site's P slices in
    order applying independent single-slice nudges (so slice updates keep
    pace with the loop resolution), and a flip visit proposes the global
    sign flip.  Post-burn-in states are recorded every ``thinning`` sweeps.
    ``observers`` is a sequence of (name, fn) pairs evaluated on each
    recorded state array; each yields an EstimateReport.

    Minus-clamped boundaries negate all normal variates (see the module
    docstring for the exact mirror coupling this buys).
    """
    if initial.slices != factory.slices:
        raise ConfigurationError(
            f"configuration has P = {initial.slices} but the factory was built with P = {factory.slices}"
        )
    if abs(initial.beta - factory.beta) > 1e-12 * max(initial.beta, factory.beta):
        raise ConfigurationError("configuration and factory disagree on beta")
    if abs(params.beta - initial.beta) > 1e-12 * max(params.beta, initial.beta):
        raise ConfigurationError("model and configuration disagree on beta")
    if len(initial.box) != params.d:
        raise ConfigurationError("box dimensionality must equal the model dimension d")

    box = initial.box
    n_sites = initial.n_sites
    P = initial.slices
    dt = initial.beta / P
    J = params.J
    boundary = initial.boundary
    normal_sign = -1.0 if boundary.kind == "minus_clamped" else 1.0
    clamp_level = boundary.sign * (boundary.clamp or 0.0)
    face_counts = exterior_face_counts(box).astype(float)
    neighbors = neighbor_lists(box)
    sigma = settings.nudge_scale if settings.nudge_scale is not None else math.sqrt(factory.slice_variance)
    mix0, mix1, _ = settings.proposal_mix

    rng = np.random.default_rng(settings.seed)
    if rng_state is not None:
        rng.bit_generator.state = rng_state

    values = initial.values.copy()
    inverse_rows = np.ascontiguousarray(np.stack([factory.inverse_row(j) for j in range(P)]))
    inverse_diag = np.diagonal(inverse_rows).copy()
    b1, b2 = params.b1, params.b2
    harmonic = params.harmonic
    attempted = np.zeros(3, dtype=int)
    accepted = np.zeros(3, dtype=int)

    def accept(delta: float) -> bool:
        u = rng.random()
        if delta <= 0.0:
            return True
        if delta > 700.0:
            return False
        return u < math.exp(-delta)

    def one_sweep() -> None:
        for site in range(n_sites):
            pick = rng.random()
            if pick < mix0:
                proposal = factory.sample_values(rng, normal_sign)
                old = values[site]
                neighbor_sum = values[neighbors[site]].sum(axis=0)  # zeros(P) when isolated
                diff = proposal - old
                delta = dt * (
                    _site_potential_sum(params, proposal)
                    - _site_potential_sum(params, old)
                    - J * float(np.dot(diff, neighbor_sum))
                    - J * clamp_level * face_counts[site] * float(diff.sum())
                )
                attempted[REDRAW] += 1
                if accept(delta):
                    values[site] = proposal
                    accepted[REDRAW] += 1
            elif pick < mix0 + mix1:
                # one single-slice nudge per slice, sequentially; the Gaussian
                # gradient g = C^{-1} w is kept incrementally up to date
                row = values[site]
                gradient = inverse_rows @ row
                couple = J * (values[neighbors[site]].sum(axis=0) + clamp_level * face_counts[site])
                steps = sigma * normal_sign * rng.standard_normal(P)
                attempted[NUDGE] += P
                for k in range(P):
                    step = steps[k]
                    old = row[k]
                    delta = step * gradient[k] + 0.5 * step * step * inverse_diag[k]
                    local = -step * couple[k]
                    if not harmonic:
                        new = old + step
                        local += (-b1 * new * new + b2 * new * new * new * new) - (
                            -b1 * old * old + b2 * old * old * old * old
                        )
                    delta += dt * local
                    if accept(delta):
                        row[k] = old + step
                        gradient += step * inverse_rows[:, k]
                        accepted[NUDGE] += 1
            else:
                delta = 0.0
                if clamp_level != 0.0:
                    boundary_sum = float(face_counts @ values.sum(axis=1))
                    delta = 2.0 * J * dt * clamp_level * boundary_sum
                attempted[FLIP] += 1
                if accept(delta):
                    np.negative(values, out=values)
                    accepted[FLIP] += 1

    for _ in range(settings.burn_in):
        one_sweep()

    n_rec = settings.n_samples
    trace = np.empty((n_rec, n_sites, P))
    recorded = 0
    for sweep in range(settings.sweeps):
        one_sweep()
        if (sweep + 1) % settings.thinning == 0 and recorded < n_rec:
            trace[recorded] = values
            recorded += 1

    rates = {
        name: (accepted[i] / attempted[i] if attempted[i] else float("nan"))
        for i, name in enumerate(_KIND_NAMES)
    }
    reports = {}
    for name, fn in observers:
        series = np.array([fn(state) for state in trace])
        reports[name] = EstimateReport.from_samples(series, rates, settings)

    return ChainResult(
        trace=trace,
        box=box,
        beta=initial.beta,
        slices=P,
        boundary=boundary,
        params=params,
        settings=settings,
        acceptance_rates=rates,
        reports=reports,
        final_values=values,
        rng_state=rng.bit_generator.state,
    )


def matsubara_estimate(result: ChainResult, functions, times) -> EstimateReport:
    """Monte Carlo estimate of an n-point imaginary-time correlation.

    ``functions`` is a sequence of (site, callable) pairs and ``times`` the
    matching imaginary times, all of which must lie on the slice grid.
    """
    functions = list(functions)
    times = list(times)
    if len(functions) != len(times):
        raise ConfigurationError("need exactly one time per test function")
    if not functions:
        raise ConfigurationError("need at least one test function")
    product = np.ones(result.n_samples)
    for (site, fn), tau in zip(functions, times):
        s = result.site_index(site)
        k = result.slice_index(tau)
        product = product * np.asarray(fn(result.trace[:, s, k]), dtype=float)
    return EstimateReport.from_samples(product, result.acceptance_rates, result.settings)


def order_parameter(result: ChainResult, site) -> EstimateReport:
    """Slice-averaged mean displacement at one site, with standard error.

    The integrand is the unbounded identity, outside the bounded
    test-function hypothesis of the correlation estimators; the estimate is
    reported anyway (the displacement marginals decay fast enough at desk
    scale) and callers surfacing it should carry the flag along.
    """
    s = result.site_index(site)
    series = result.trace[:, s, :].mean(axis=1)
    return EstimateReport.from_samples(series, result.acceptance_rates, result.settings)


def clipped_identity(limit: float):
    """Bounded odd test function clip(x) = max(-limit, min(limit, x))."""
    if not limit > 0:
        raise ConfigurationError("clip limit must be positive")

    def clip(x):
        return np.clip(x, -limit, limit)

    return clip


def _validate_odd_positive(fn, scale: float) -> None:
    xs = np.linspace(scale * 1e-3, scale, 33)
    fx = np.asarray(fn(xs), dtype=float)
    fnx = np.asarray(fn(-xs), dtype=float)
    if np.any(fx <= 0):
        raise PreconditionError("test function must be strictly positive for positive arguments")
    if np.max(np.abs(fx + fnx)) > 1e-12 * (1.0 + np.max(np.abs(fx))):
        raise PreconditionError("test function must be odd")


@dataclass(frozen=True)
class GksAuditReport:
    """Three-point estimates under both clamped boundaries and the sign verdict."""

    plus: EstimateReport
    minus: EstimateReport
    passed: bool
    sites: tuple
    times: tuple


def gks_audit(result: ChainResult, sites, times, functions) -> GksAuditReport:
    """Sign audit of a three-point correlation under the plus-clamped boundary.

    The odd, positive-on-positives test functions make the correlation
    nonnegative under the plus phase; the minus-boundary estimate is
    computed from the exactly mirrored (negated) trace.  The audit passes
    when the plus estimate is above -2 standard errors and the mirrored one
    below +2.
    """
    sites = tuple(sites)
    times = tuple(times)
    functions = tuple(functions)
    if not (len(sites) == len(times) == len(functions) == 3):
        raise ConfigurationError("the audit takes exactly three sites, times, and functions")
    if result.boundary.kind != "plus_clamped":
        raise PreconditionError("the audit chain must run under a plus-clamped boundary")
    scale = max(1.0, float(np.max(np.abs(result.trace))))
    for fn in functions:
        _validate_odd_positive(fn, scale)

    plus_prod = np.ones(result.n_samples)
    minus_prod = np.ones(result.n_samples)
    for site, tau, fn in zip(sites, times, functions):
        s = result.site_index(site)
        k = result.slice_index(tau)
        samples = result.trace[:, s, k]
        plus_prod = plus_prod * np.asarray(fn(samples), dtype=float)
        minus_prod = minus_prod * np.asarray(fn(-samples), dtype=float)
    plus = EstimateReport.from_samples(plus_prod, result.acceptance_rates, result.settings)
    minus = EstimateReport.from_samples(minus_prod, result.acceptance_rates, result.settings)
    passed = plus.value >= -2.0 * plus.std_error and minus.value <= 2.0 * minus.std_error
    return GksAuditReport(plus=plus, minus=minus, passed=bool(passed), sites=sites, times=times)


def merge_reports(reports) -> EstimateReport:
    """Pool estimates from independent chains (associative, order-independent)."""
    reports = list(reports)
    if not reports:
        raise ConfigurationError("nothing to merge")
    total = sum(r.n_samples for r in reports)
    value = sum(np.asarray(r.value, dtype=float) * (r.n_samples / total) for r in reports)
    variance = sum(
        (np.asarray(r.std_error, dtype=float) * (r.n_samples / total)) ** 2 for r in reports
    )
    scalar = np.asarray(value).ndim == 0
    se = np.sqrt(variance)
    return EstimateReport(
        value=float(value) if scalar else value,
        std_error=float(se) if scalar else se,
        n_samples=total,
        acceptance_rates=reports[0].acceptance_rates,
        settings_echo=reports[0].settings_echo,
    )


def spawn_chain_settings(settings: ChainSettings, n_chains: int) -> list[ChainSettings]:
    """Derive per-chain settings: seeds via SeedSequence(master).spawn(n)."""
    from dataclasses import replace

    children = np.random.SeedSequence(settings.seed).spawn(n_chains)
    return [
        replace(settings, seed=int(child.generate_state(1, dtype=np.uint64)[0]))
        for child in children
    ]


def run_parallel_chains(
    initial: LoopConfiguration,
    params: OscillatorParams,
    factory: GaussianLoopFactory,
    settings: ChainSettings,
    n_chains: int,
    observers=(),
    max_workers: int | None = None,
) -> list[ChainResult]:
    """Run independent chains with split seeds; results follow input ordering."""
    if n_chains < 1:
        raise ConfigurationError("n_chains must be >= 1")
    chain_settings = spawn_chain_settings(settings, n_chains)
    if n_chains == 1 or (max_workers is not None and max_workers <= 1):
        return [metropolis_chain(initial, params, factory, s, observers) for s in chain_settings]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=max_workers or n_chains) as pool:
        futures = [
            pool.submit(metropolis_chain, initial.copy(), params, factory, s, observers)
            for s in chain_settings
        ]
        return [f.result() for f in futures]


def save_checkpoint(result: ChainResult, path) -> None:
    """Persist the final configuration plus the generator state for resumption."""
    header = {
        "format": "qacrystal-checkpoint",
        "version": 1,
        "beta": result.beta,
        "slices": result.slices,
        "box": list(result.box),
        "boundary": result.boundary.kind,
        "clamp": result.boundary.clamp,
        "rng_state": result.rng_state,
        "settings": result.settings.echo(),
    }
    payload = np.ascontiguousarray(result.final_values, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(payload)


def load_checkpoint(path) -> tuple[LoopConfiguration, dict]:
    """Read back (configuration, rng_state) written by `save_checkpoint`."""
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ConfigurationError(f"{path}: not a qacrystal checkpoint file")
        header = json.loads(fh.readline().decode())
        box = tuple(int(n) for n in header["box"])
        slices = int(header["slices"])
        values = (
            np.frombuffer(fh.read(8 * int(np.prod(box)) * slices), dtype="<f8")
            .reshape(int(np.prod(box)), slices)
            .copy()
        )
    boundary = BoundaryCondition(kind=header["boundary"], clamp=header["clamp"])
    config = LoopConfiguration(
        box=box, beta=float(header["beta"]), slices=slices, values=values, boundary=boundary
    )
    return config, header["rng_state"]
