"""Data-driven reduced-order modeling from sampled input/output records.

The pipeline estimates observer pulse-response parameters by least
squares on a block-Toeplitz regressor, unwinds them into the system's
pulse-response sequence, stacks a block-Hankel matrix, realizes a
minimal discrete model from its dominant singular directions, and
converts the result to continuous time.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.signal

from .numerics import NumericsError, mat_log_principal, svd
from .signals import SignalRecord
from .statespace import StateSpace, zoh_step_matrices


class IdentificationError(RuntimeError):
    """Raised when a record cannot support the requested estimation."""


@dataclass(frozen=True)
class MarkovSequence:
    """Pulse-response blocks of a discrete system.

    ``feedthrough`` is the k=0 block; ``pulse_blocks[k-1]`` is the z-by-v
    response block at step k.
    """

    t_s: float
    feedthrough: np.ndarray
    pulse_blocks: list[np.ndarray]

    @property
    def n_outputs(self) -> int:
        return self.feedthrough.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.feedthrough.shape[1]

    def __len__(self) -> int:
        return len(self.pulse_blocks)


@dataclass(frozen=True)
class ObserverMarkov:
    """Observer pulse-response parameters split into input/output parts.

    ``blocks[k-1]`` is the pair (input part z-by-v, output part z-by-z)
    at step k; ``feedthrough`` is the direct z-by-v term.
    """

    t_s: float
    feedthrough: np.ndarray
    blocks: list[tuple[np.ndarray, np.ndarray]]

    @property
    def n_outputs(self) -> int:
        return self.feedthrough.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.feedthrough.shape[1]

    def __len__(self) -> int:
        return len(self.blocks)


@dataclass(frozen=True)
class EraReport:
    """Realization summary: spectrum of the Hankel matrix and the model."""

    hankel_size: int
    singular_values: np.ndarray
    retained_order: int
    cumulative_energy_at_r: float
    realized: StateSpace

    @property
    def cumulative_energy(self) -> np.ndarray:
        e = self.singular_values**2
        total = e.sum()
        if total == 0.0:
            return np.zeros_like(e)
        return np.cumsum(e) / total

    def to_json_dict(self) -> dict:
        return {
            "hankel_size": self.hankel_size,
            "retained_order": self.retained_order,
            "cumulative_energy_at_r": self.cumulative_energy_at_r,
            "singular_values": [float(s) for s in self.singular_values],
            "cumulative_energy": [float(e) for e in self.cumulative_energy],
            "sample_time_s": self.realized.dt,
            "model_order": self.realized.n_states,
        }

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2) + "\n")


@dataclass(frozen=True)
class IdentifyConfig:
    """Knobs for the full identification pipeline."""

    l: int = 30
    p: int = 100
    energy_threshold: float = 0.999
    t_s: float = 0.1
    r_override: int | None = None
    # reject records whose estimated direct feedthrough exceeds this
    # (None disables the check; plants modeled here have none)
    max_feedthrough: float | None = None
    # the trailing half of the outputs are exact running integrals of the
    # leading half: identify only the stable subsystem and reattach exact
    # integrator states, instead of estimating poles at z=1 from data
    integral_outputs: bool = False
    # discard singular directions within tail_gate times the spectrum's
    # tail median (the noise floor); None keeps the raw threshold choice
    tail_gate: float | None = 5.0
    # identical causal low-pass on inputs and outputs: records starting
    # from rest keep their I/O relation exactly while measurement noise
    # above the system band is attenuated; None disables
    prefilter_hz: float | None = None


def _prefilter(record: SignalRecord, cutoff_hz: float) -> SignalRecord:
    nyquist = 0.5 / record.t_s
    if not 0.0 < cutoff_hz < nyquist:
        raise IdentificationError(
            f"prefilter cutoff {cutoff_hz} Hz must lie in (0, {nyquist}) Hz"
        )
    sos = scipy.signal.butter(2, cutoff_hz / nyquist, output="sos")
    return SignalRecord(record.t_s, record.channels,
                        scipy.signal.sosfilt(sos, record.samples, axis=0))


def generate_excitation(seed: int, channels: tuple[str, ...], t_s: float,
                        duration: float, amplitude: float = 0.05,
                        hold: float = 1.0) -> SignalRecord:
    """Zero-mean uniform random steps, held ``hold`` seconds per channel."""
    n = int(round(duration / t_s)) + 1
    per_hold = max(1, int(round(hold / t_s)))
    n_levels = n // per_hold + 1
    rng = np.random.default_rng(seed)
    levels = rng.uniform(-amplitude, amplitude, size=(n_levels, len(channels)))
    samples = np.repeat(levels, per_hold, axis=0)[:n]
    return SignalRecord(t_s, channels, samples)


def estimate_observer_markov(u: SignalRecord, y: SignalRecord, l: int) -> ObserverMarkov:
    """Least-squares observer pulse-response parameters from general I/O data.

    Builds the block-Toeplitz regressor whose first block row holds the
    inputs and whose following ``l`` block rows hold lagged input/output
    pairs, then solves by SVD pseudo-inverse. The record must start
    from rest.
    """
    if u.t_s != y.t_s:
        raise IdentificationError(f"input T_s {u.t_s} != output T_s {y.t_s}")
    if u.n_samples != y.n_samples:
        raise IdentificationError("input and output records differ in length")
    if l < 1:
        raise IdentificationError("need at least one observer parameter block")
    v = len(u.channels)
    z = len(y.channels)
    n_samples = u.n_samples
    required = 4 * l * (v + z)
    if n_samples < required:
        raise IdentificationError(
            f"record too short: {n_samples} samples, need at least {required} "
            f"for l={l} with {v} inputs and {z} outputs"
        )

    uu = u.samples.T  # (v, N)
    yy = y.samples.T  # (z, N)
    vy = np.vstack([uu, yy])  # (v+z, N)
    regressor = np.zeros((v + l * (v + z), n_samples))
    regressor[:v] = uu
    for i in range(1, l + 1):
        rows = slice(v + (i - 1) * (v + z), v + i * (v + z))
        regressor[rows, i:] = vy[:, : n_samples - i]

    res = svd(regressor)
    s = res.singular_values
    rank = int(np.sum(s > 1e-10 * s[0])) if s[0] > 0 else 0
    if rank < v + z:
        raise IdentificationError(
            f"regressor rank {rank} is degenerate (need at least {v + z}); "
            "excitation carries no usable energy"
        )
    if rank < regressor.shape[0]:
        warnings.warn(
            f"observer regressor is rank deficient: effective rank {rank} of "
            f"{regressor.shape[0]} rows; estimates are minimum-norm",
            stacklevel=2,
        )
    inv_s = np.where(s > 1e-10 * s[0], 1.0 / np.where(s > 0, s, 1.0), 0.0)
    pinv_reg = (res.right * inv_s) @ res.left.T
    theta = yy @ pinv_reg  # (z, v + l(v+z))

    feedthrough = theta[:, :v]
    blocks = []
    for i in range(l):
        chunk = theta[:, v + i * (v + z): v + (i + 1) * (v + z)]
        blocks.append((chunk[:, :v], chunk[:, v:]))
    return ObserverMarkov(t_s=u.t_s, feedthrough=feedthrough, blocks=blocks)


def recover_system_markov(obs: ObserverMarkov, m: int) -> MarkovSequence:
    """Unwind observer parameters into ``m`` system pulse-response blocks.

    Blocks beyond the estimated horizon are treated as zero, which is
    what makes the recursion close (the implicit observer is deadbeat).
    """
    if m < 1:
        raise IdentificationError("need at least one pulse-response block")
    l = len(obs)
    blocks: list[np.ndarray] = []
    zero_in = np.zeros_like(obs.feedthrough)
    all_blocks = [obs.feedthrough]  # index k -> Y_k
    for k in range(1, m + 1):
        part_in = obs.blocks[k - 1][0] if k <= l else zero_in
        total = part_in.copy()
        for i in range(1, min(k, l) + 1):
            total += obs.blocks[i - 1][1] @ all_blocks[k - i]
        blocks.append(total)
        all_blocks.append(total)
    return MarkovSequence(t_s=obs.t_s, feedthrough=obs.feedthrough.copy(), pulse_blocks=blocks)


def build_hankel(markov: MarkovSequence, p: int) -> tuple[np.ndarray, np.ndarray]:
    """Block-Hankel matrix of the pulse response and its one-step shift.

    With fewer than 2p blocks available (2p-1 is still accepted) the
    last block row is dropped from both matrices so they stay aligned.
    """
    if p < 1:
        raise IdentificationError("hankel size p must be at least 1")
    m = len(markov)
    if m < 2 * p - 1:
        raise IdentificationError(
            f"need at least {2 * p - 1} pulse-response blocks for p={p}, have {m}"
        )
    n_rows = p
    if m == 2 * p - 1:
        warnings.warn(
            f"only {m} pulse blocks for p={p}: dropping the last block row "
            "of the Hankel pair",
            stacklevel=2,
        )
        n_rows = p - 1
    if n_rows < 1:
        raise IdentificationError("need at least 2 pulse-response blocks")
    z, v = markov.n_outputs, markov.n_inputs
    blocks = markov.pulse_blocks

    def assemble(offset: int) -> np.ndarray:
        h = np.empty((n_rows * z, p * v))
        for i in range(n_rows):
            for j in range(p):
                h[i * z:(i + 1) * z, j * v:(j + 1) * v] = blocks[i + j + offset]
        return h

    return assemble(0), assemble(1)


def era_realize(h: np.ndarray, h_shift: np.ndarray, z: int, v: int,
                energy_threshold: float = 0.999, r_override: int | None = None,
                feedthrough: np.ndarray | None = None,
                t_s: float = 1.0) -> EraReport:
    """Minimal realization from the dominant Hankel singular directions.

    The retained order is the smallest one whose cumulative squared
    singular-value energy reaches ``energy_threshold`` (or
    ``r_override``). ``feedthrough`` becomes the model's direct term.
    """
    if not 0.0 < energy_threshold <= 1.0:
        raise IdentificationError(f"energy threshold must lie in (0,1], got {energy_threshold}")
    if h.shape != h_shift.shape:
        raise IdentificationError(f"hankel pair shapes differ: {h.shape} vs {h_shift.shape}")
    res = svd(h)
    s = res.singular_values
    energy = s**2
    total = energy.sum()
    if total == 0.0:
        raise IdentificationError(
            "hankel matrix is numerically zero; maximum achievable energy is 0"
        )
    cumulative = np.cumsum(energy) / total
    numerical_rank = int(np.sum(s > 1e-12 * s[0]))
    if r_override is not None:
        if r_override < 1:
            raise IdentificationError("r_override must be positive")
        r = min(r_override, numerical_rank)
        if r < r_override:
            warnings.warn(
                f"r_override={r_override} exceeds numerical rank {numerical_rank}; clamped",
                stacklevel=2,
            )
    else:
        r = int(np.searchsorted(cumulative, energy_threshold) + 1)
        r = min(r, numerical_rank)

    s_r = s[:r]
    left = res.left[:, :r]
    right = res.right[:, :r]
    sqrt_s = np.sqrt(s_r)
    a_d = (left / sqrt_s).T @ h_shift @ (right / sqrt_s)
    b_d = ((right * sqrt_s).T)[:, :v]
    c_d = (left * sqrt_s)[:z, :]
    d_d = np.zeros((z, v)) if feedthrough is None else np.asarray(feedthrough, dtype=float)

    p_blocks = h.shape[1] // v
    realized = StateSpace(a=a_d, b=b_d, c=c_d, d=d_d, dt=t_s)
    return EraReport(
        hankel_size=p_blocks,
        singular_values=s,
        retained_order=r,
        cumulative_energy_at_r=float(cumulative[r - 1]),
        realized=realized,
    )


def to_continuous(dss: StateSpace, t_s: float | None = None) -> StateSpace:
    """Continuous-time model whose zero-order-hold sampling matches ``dss``.

    The state matrix is the scaled principal logarithm; the input matrix
    inverts the hold integral, computed through the augmented-exponential
    form so that poles at z=1 (pure integrators) stay well conditioned.
    """
    if dss.is_continuous:
        raise IdentificationError("to_continuous expects a discrete-time model")
    t_s = dss.dt if t_s is None else t_s
    try:
        a = mat_log_principal(dss.a) / t_s
    except NumericsError as exc:
        raise IdentificationError(
            f"discrete state matrix has no principal logarithm ({exc}); "
            "reduce the sample time T_s"
        ) from exc
    # hold integral M = int_0^Ts expm(a tau) dtau; b solves M b = b_d
    _, hold = zoh_step_matrices(a, np.eye(a.shape[0]), t_s)
    b = np.linalg.solve(hold, dss.b)
    return StateSpace(a=a, b=b, c=dss.c.copy(), d=dss.d.copy(), dt=None)


def augment_with_output_integrators(cont: StateSpace) -> StateSpace:
    """Append one exact integrator state per output channel.

    The result measures the original outputs followed by their running
    integrals; the appended states never feed back.
    """
    if not cont.is_continuous:
        raise IdentificationError("integrator augmentation expects a continuous model")
    n, z = cont.n_states, cont.n_outputs
    a = np.block([[cont.a, np.zeros((n, z))], [cont.c, np.zeros((z, z))]])
    b = np.vstack([cont.b, cont.d])
    c = np.block([[cont.c, np.zeros((z, z))], [np.zeros((z, n)), np.eye(z)]])
    d = np.vstack([cont.d, np.zeros_like(cont.d)])
    return StateSpace(a=a, b=b, c=c, d=d, dt=None)


def _gated_order(singular_values: np.ndarray, tail_gate: float | None) -> int | None:
    """Largest order whose singular value clears the tail noise floor."""
    if tail_gate is None or singular_values.size < 8:
        return None
    tail = singular_values[singular_values.size // 2:]
    floor = float(np.median(tail)) * tail_gate
    if floor <= 0.0:
        return None
    return max(1, int(np.sum(singular_values > floor)))


def identify(u: SignalRecord, y: SignalRecord,
             config: IdentifyConfig = IdentifyConfig()) -> tuple[EraReport, StateSpace]:
    """Full pipeline: observer regression, pulse-response recovery,
    Hankel realization, continuous conversion.

    With ``integral_outputs`` the regression sees only the leading half
    of the output channels; exact integrators for them are appended to
    the converted model. Estimating poles at z=1 from noisy data instead
    would leave them slightly off the unit circle with spurious residues
    that ramp under step inputs.
    """
    y_fit = y
    if config.integral_outputs:
        if len(y.channels) % 2 != 0:
            raise IdentificationError(
                "integral_outputs requires outputs split evenly into "
                "(signals, their integrals)"
            )
        y_fit = y.select(list(y.channels[: len(y.channels) // 2]))
    if config.prefilter_hz is not None:
        u = _prefilter(u, config.prefilter_hz)
        y_fit = _prefilter(y_fit, config.prefilter_hz)

    obs = estimate_observer_markov(u, y_fit, config.l)
    if config.max_feedthrough is not None:
        norm_d = float(np.linalg.norm(obs.feedthrough, "fro"))
        if norm_d > config.max_feedthrough:
            raise IdentificationError(
                f"estimated direct feedthrough norm {norm_d:.3e} exceeds "
                f"{config.max_feedthrough:.1e}; data are inconsistent with a strictly "
                "proper plant"
            )
    markov = recover_system_markov(obs, 2 * config.p)
    h, h_shift = build_hankel(markov, config.p)

    def realize(r_over: int | None) -> EraReport:
        return era_realize(
            h, h_shift, z=markov.n_outputs, v=markov.n_inputs,
            energy_threshold=config.energy_threshold, r_override=r_over,
            feedthrough=markov.feedthrough, t_s=config.t_s,
        )

    report = realize(config.r_override)
    r = report.retained_order
    if config.r_override is None:
        gate = _gated_order(report.singular_values, config.tail_gate)
        if gate is not None and gate < r:
            warnings.warn(
                f"retained order capped at {gate} (of {r}) by the spectrum's "
                "tail noise floor",
                stacklevel=2,
            )
            r = gate
            report = realize(r)
    # weak trailing modes occasionally land on the negative real axis and
    # block the logarithm; shedding them costs next to no energy
    while True:
        try:
            continuous = to_continuous(report.realized)
            break
        except IdentificationError:
            r -= 1
            if r < 1:
                raise
            warnings.warn(
                f"retained order reduced to {r} to keep the discrete-to-continuous "
                "conversion on the principal branch",
                stacklevel=2,
            )
            report = realize(r)

    if config.integral_outputs:
        continuous = augment_with_output_integrators(continuous)
    return report, continuous
