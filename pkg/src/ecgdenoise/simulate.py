"""Synthetic single-lead ECG generation with the McSharry limit-cycle ODE.

A rotating (u, v) pair is attracted to the unit circle; the voltage x is
driven by five Gaussian-shaped angular bumps (P, Q, R, S, T) plus a linear
pull toward the baseline. Integration uses classical fixed-step RK4 with
step h = 1 / (4 fs), so every fourth state lands on the output grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ._kernels import rk4_mcsharry
from .errors import IntegrationDivergedError, InvalidJitterError, WindowTooLongError

WAVE_NAMES = ("P", "Q", "R", "S", "T")

_TWO_PI = 2.0 * math.pi

#: Steps per output sample (h = 1 / (STRIDE * fs)).
STRIDE = 4

#: Retry budget when jittered positions violate the wave ordering.
JITTER_MAX_RETRIES = 100


@dataclass(frozen=True)
class OdeParams:
    """Parameters of one subject's canonical beat.

    ``a``, ``b`` and ``theta`` hold the amplitude, width (radians) and
    angular position (radians, in (-pi, pi]) of the P, Q, R, S, T waves in
    that order. ``x0`` is the baseline voltage (mV) and ``omega`` the
    angular frequency (rad/s), i.e. one beat every 2 pi / omega seconds.
    """

    a: tuple[float, ...]
    b: tuple[float, ...]
    theta: tuple[float, ...]
    x0: float = 0.0
    omega: float = _TWO_PI

    def __post_init__(self):
        for name, values in (("a", self.a), ("b", self.b), ("theta", self.theta)):
            if len(values) != 5:
                raise ValueError(f"{name} must have exactly five wave entries")
            if not all(math.isfinite(val) for val in values):
                raise ValueError(f"{name} entries must be finite")
        if any(width <= 0 for width in self.b):
            raise ValueError("wave widths b must be strictly positive")
        if not (math.isfinite(self.omega) and self.omega > 0):
            raise ValueError("omega must be strictly positive")
        if not math.isfinite(self.x0):
            raise ValueError("x0 must be finite")
        theta = np.asarray(self.theta, dtype=float)
        if np.any(theta <= -math.pi) or np.any(theta > math.pi):
            raise ValueError("wave positions must lie in (-pi, pi]")
        gaps = np.diff(theta) % _TWO_PI
        if np.any(gaps <= 0) or gaps.sum() >= _TWO_PI:
            raise ValueError(
                "wave positions must be strictly increasing in the order "
                "P < Q < R < S < T on a common branch"
            )

    @property
    def period(self) -> float:
        """Cycle length 2 pi / omega in seconds."""
        return _TWO_PI / self.omega

    def as_arrays(self):
        """Wave parameters as float64 arrays of shape (5,)."""
        return (
            np.asarray(self.a, dtype=np.float64),
            np.asarray(self.b, dtype=np.float64),
            np.asarray(self.theta, dtype=np.float64),
        )

    def scaled(self, gain: float) -> "OdeParams":
        """Copy with all wave amplitudes and the baseline multiplied by ``gain``."""
        return replace(
            self,
            a=tuple(gain * ai for ai in self.a),
            x0=gain * self.x0,
        )


#: Widely used McSharry parameter set (60 bpm, baseline 0 mV).
DEFAULT_PARAMS = OdeParams(
    a=(1.2, -5.0, 30.0, -7.5, 0.75),
    b=(0.25, 0.1, 0.1, 0.1, 0.4),
    theta=(-math.pi / 3.0, -math.pi / 12.0, 0.0, math.pi / 12.0, math.pi / 2.0),
    x0=0.0,
    omega=_TWO_PI,
)


def _readonly(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class RawTrace:
    """A sampled voltage trace: ``values[k]`` is x(k / fs) in mV."""

    fs: float
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _readonly(self.values))
        if self.values.ndim != 1 or self.values.size < 1:
            raise ValueError("trace must be a non-empty 1-D array")
        if not self.fs > 0:
            raise ValueError("fs must be positive")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("trace values must be finite")

    def __len__(self) -> int:
        return self.values.size

    @property
    def duration(self) -> float:
        return (self.values.size - 1) / self.fs


@dataclass(frozen=True)
class ThetaBeat:
    """A canonical beat: d voltage samples with the R peak at ``r_index``."""

    values: np.ndarray
    r_index: int
    fs: float

    def __post_init__(self):
        object.__setattr__(self, "values", _readonly(self.values))
        if self.values.ndim != 1 or self.values.size < 1:
            raise ValueError("beat must be a non-empty 1-D array")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("beat values must be finite")
        if not self.fs > 0:
            raise ValueError("fs must be positive")
        if not 0 <= self.r_index < self.values.size:
            raise ValueError("r_index out of range")
        if int(np.argmax(self.values)) != self.r_index:
            raise ValueError("r_index must be the global argmax of the beat")

    @property
    def d(self) -> int:
        return self.values.size


def integrate_states(params: OdeParams, duration: float, fs: float,
                     initial_state=(-1.0, 0.0, 0.0)):
    """Integrate one system and return ``(t, u, v, x)`` sampled at ``fs``.

    Exposes the full state for limit-cycle diagnostics; most callers want
    :func:`integrate_mcsharry`, which keeps only the voltage.
    """
    if not duration > 0:
        raise ValueError("duration must be positive")
    if not fs > 0:
        raise ValueError("fs must be positive")
    a, b, theta = params.as_arrays()
    n_samples = int(round(duration * fs))
    if n_samples < 1:
        raise ValueError("duration must cover at least one sample")
    h = 1.0 / (STRIDE * fs)
    u0, v0, x0 = (float(s) for s in initial_state)
    u, v, x = rk4_mcsharry(
        a[None, :], b[None, :], theta[None, :],
        np.array([params.x0]), np.array([params.omega]),
        np.array([u0]), np.array([v0]), np.array([x0]),
        h, n_samples * STRIDE, STRIDE,
    )
    t = np.arange(n_samples + 1) / fs
    return t, u[0], v[0], x[0]


def integrate_mcsharry(params: OdeParams, duration: float, fs: float,
                       initial_state=(-1.0, 0.0, 0.0)) -> RawTrace:
    """Integrate the ODE and return the voltage trace sampled at ``fs``.

    Deterministic given its inputs. Raises
    :class:`IntegrationDivergedError` if the state becomes non-finite
    (the error names the offending RK4 step).
    """
    _, _, _, x = integrate_states(params, duration, fs, initial_state)
    return RawTrace(fs=fs, values=x)


def sample_jittered_params(base: OdeParams, jitter_fraction: float,
                           rng_seed) -> OdeParams:
    """Randomly perturb a parameter set to mimic subject-level variation.

    Amplitudes, widths and the baseline are multiplied by independent
    Uniform(1 - f, 1 + f) draws; each wave position is shifted by
    Uniform(-f |theta_i|, +f |theta_i|). Draws violating the wave-order
    invariant are rejected and resampled up to ``JITTER_MAX_RETRIES`` times.
    Deterministic given the seed. ``omega`` is never jittered.
    """
    if not 0 <= jitter_fraction < 1:
        raise ValueError("jitter_fraction must lie in [0, 1)")
    rng = np.random.default_rng(rng_seed)
    a, b, theta = base.as_arrays()
    theta_span = jitter_fraction * np.abs(theta)
    for _ in range(JITTER_MAX_RETRIES):
        factors = rng.uniform(1.0 - jitter_fraction, 1.0 + jitter_fraction, size=11)
        shifts = rng.uniform(-theta_span, theta_span)
        try:
            return replace(
                base,
                a=tuple(a * factors[:5]),
                b=tuple(b * factors[5:10]),
                theta=tuple(theta + shifts),
                x0=base.x0 * factors[10],
            )
        except ValueError:
            continue
    raise InvalidJitterError(
        f"no valid parameter draw in {JITTER_MAX_RETRIES} attempts "
        f"(jitter_fraction={jitter_fraction})"
    )


def jitter_population(base: OdeParams, jitter_fraction: float, n: int,
                      seed) -> list[OdeParams]:
    """Draw ``n`` independent jittered parameter sets.

    Each draw uses its own child seed (indexed by position), so results do
    not depend on how a caller partitions the work.
    """
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    children = seed.spawn(n)
    return [sample_jittered_params(base, jitter_fraction, s) for s in children]


def _rk4_decay_factor(h: float, n_steps: int) -> float:
    # RK4 amplification of dx/dt = -x over n_steps steps
    rho = 1.0 - h + h * h / 2.0 - h ** 3 / 6.0 + h ** 4 / 24.0
    return rho ** n_steps


def extract_canonical_beats(params_batch, fs: float, d: int,
                            r_offset: int | None = None) -> np.ndarray:
    """Extract steady-state beats for a batch sharing one ``omega``.

    Returns an array of shape ``(len(params_batch), d)``; see
    :func:`extract_canonical_beat` for the single-beat contract.
    """
    params_batch = list(params_batch)
    if not params_batch:
        raise ValueError("params_batch must be non-empty")
    omega = params_batch[0].omega
    if any(p.omega != omega for p in params_batch):
        raise ValueError("batched extraction requires a shared omega")
    d = int(d)
    if d < 1:
        raise ValueError("d must be at least 1")
    if r_offset is None:
        r_offset = d // 3
    r_offset = int(r_offset)
    if not 0 <= r_offset < d:
        raise ValueError("r_offset must satisfy 0 <= r_offset < d")
    period = _TWO_PI / omega
    if d > fs * period + 1e-9:
        raise WindowTooLongError(
            f"window of {d} samples exceeds one cycle "
            f"({fs * period:.3f} samples at fs={fs})"
        )

    n = len(params_batch)
    a = np.stack([np.asarray(p.a, dtype=np.float64) for p in params_batch])
    b = np.stack([np.asarray(p.b, dtype=np.float64) for p in params_batch])
    theta = np.stack([np.asarray(p.theta, dtype=np.float64) for p in params_batch])
    x0 = np.array([p.x0 for p in params_batch])
    omegas = np.full(n, omega)

    h = 1.0 / (STRIDE * fs)
    steps_per_cycle = int(round(period / h))
    if steps_per_cycle < STRIDE:
        raise WindowTooLongError("cycle too short for the RK4 grid")

    # One calibration cycle from voltage 0 determines the forced response c;
    # the one-cycle map on the voltage is affine (x -> rho x + c), so the
    # exact periodic initial voltage is c / (1 - rho). This removes the
    # baseline transient without a long burn-in.
    start_u = np.full(n, -1.0)  # phase pi: half a cycle from the R wave
    start_v = np.zeros(n)
    _, _, x_cal = rk4_mcsharry(
        a, b, theta, x0, omegas, start_u, start_v, np.zeros(n),
        h, steps_per_cycle, steps_per_cycle,
    )
    rho = _rk4_decay_factor(h, steps_per_cycle)
    x_init = x_cal[:, -1] / (1.0 - rho)

    n_steps = 3 * steps_per_cycle
    n_steps += (-n_steps) % STRIDE
    _, _, x = rk4_mcsharry(
        a, b, theta, x0, omegas, start_u, start_v, x_init,
        h, n_steps, STRIDE,
    )

    samples_per_cycle = steps_per_cycle / STRIDE
    lo = int(round(samples_per_cycle))
    hi = int(round(2 * samples_per_cycle))
    peaks = lo + np.argmax(x[:, lo:hi], axis=1)
    starts = peaks - r_offset
    if np.any(starts < 0) or np.any(starts + d > x.shape[1]):
        raise WindowTooLongError("beat window falls outside the integrated trace")
    cols = starts[:, None] + np.arange(d)
    return x[np.arange(n)[:, None], cols]


def extract_canonical_beat(params: OdeParams, fs: float, d: int,
                           r_offset: int | None = None) -> ThetaBeat:
    """Extract one steady-state beat of length ``d`` sampled at ``fs``.

    The beat window places the R peak (the cycle's global maximum) at
    column ``r_offset`` (default ``d // 3``). Requires
    ``d <= fs * 2 pi / omega``, i.e. the window must fit inside one cycle.
    Deterministic: repeated extractions return identical vectors.
    """
    if r_offset is None:
        r_offset = int(d) // 3
    beats = extract_canonical_beats([params], fs, d, r_offset)
    return ThetaBeat(values=beats[0], r_index=int(r_offset), fs=fs)
