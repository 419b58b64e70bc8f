"""Level-scheme Hamiltonians and their large-detuning reductions.

Two chainwise-coupled schemes are covered:

* a three-level ladder (Feshbach level, excited bridge, deep level) driven by
  a pump/Stokes pair sharing a single-photon detuning ``delta_single`` and a
  two-photon detuning ``delta_two``;
* a five-level chain with two excited bridges, both sitting at the common
  detuning ``delta_single``.

When the single-photon detuning dominates every coupling, the excited levels
can be eliminated adiabatically.  The three-level ladder reduces to an
effective two-level system with coupling ``-Omega^2 / (2 delta)``; the
five-level chain reduces, once the Stark-balancing constraint
``Omega_1 = Omega_4 = sqrt(Omega_2^2 + Omega_3^2)`` holds, to a resonant
effective three-level chain.  The reductions carry regime diagnostics: a
warning below a detuning-to-coupling ratio of 10, and a hard error when the
balancing constraint is broken.

Channels may be passed as plain floats (constant drive) or as callables of
time that accept numpy arrays.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .qcore import HamiltonianRule, TimeGrid

__all__ = [
    "Channel",
    "RegimeWarning",
    "StarkBalanceError",
    "LambdaParams",
    "MParams",
    "EffTwoLevel",
    "EffThreeLevel",
    "as_channel",
    "build_lambda",
    "reduce_lambda",
    "build_m",
    "reduce_m",
    "adiabaticity_margin",
]

Channel = Union[float, Callable[[np.ndarray], np.ndarray]]

REGIME_RATIO = 10.0
_N_PROBE = 241


class RegimeWarning(UserWarning):
    """Adiabatic-elimination regime guard: detuning not clearly dominant."""


class StarkBalanceError(ValueError):
    """The four-channel balancing constraint is violated."""


def as_channel(value: Channel) -> Callable[[np.ndarray], np.ndarray]:
    """Normalize a float or callable into an array-valued function of time."""
    if callable(value):
        func = value

        def channel(t):
            t_arr = np.asarray(t, dtype=float)
            return np.broadcast_to(np.asarray(func(t_arr), dtype=float), t_arr.shape)

        return channel
    const = float(value)

    def constant(t):
        return np.full(np.asarray(t, dtype=float).shape, const)

    return constant


@dataclass(frozen=True)
class LambdaParams:
    """Drive parameters of the three-level ladder.

    ``duration`` is optional and only used to sample time-dependent channels
    for the reduction diagnostics; constant channels need no duration.
    """

    omega1: Channel
    omega2: Channel
    delta_single: float
    delta_two: Channel = 0.0
    duration: float | None = None


@dataclass(frozen=True)
class MParams:
    """Drive parameters of the five-level chain (four Rabi channels)."""

    omega1: Channel
    omega2: Channel
    omega3: Channel
    omega4: Channel
    delta_single: float
    duration: float | None = None


@dataclass(frozen=True)
class EffTwoLevel:
    """Effective two-level drive after eliminating the excited bridge."""

    omega_e: Callable[[np.ndarray], np.ndarray]
    delta_e: Callable[[np.ndarray], np.ndarray]

    def hamiltonian(self) -> HamiltonianRule:
        """Symmetric form: diag(+delta_e/2, -delta_e/2) with omega_e/2 coupling."""
        om, dl = self.omega_e, self.delta_e

        def evaluate(t):
            t_arr = np.asarray(t, dtype=float)
            o = np.broadcast_to(np.asarray(om(t_arr), dtype=float), t_arr.shape)
            d = np.broadcast_to(np.asarray(dl(t_arr), dtype=float), t_arr.shape)
            out = np.zeros(t_arr.shape + (2, 2), dtype=complex)
            out[..., 0, 0] = 0.5 * d
            out[..., 1, 1] = -0.5 * d
            out[..., 0, 1] = 0.5 * o
            out[..., 1, 0] = 0.5 * o
            return out

        return HamiltonianRule(2, evaluate)


@dataclass(frozen=True)
class EffThreeLevel:
    """Effective resonant three-level chain after eliminating both bridges."""

    omega_e1: Callable[[np.ndarray], np.ndarray]
    omega_e2: Callable[[np.ndarray], np.ndarray]

    def hamiltonian(self) -> HamiltonianRule:
        om1, om2 = self.omega_e1, self.omega_e2

        def evaluate(t):
            t_arr = np.asarray(t, dtype=float)
            o1 = np.broadcast_to(np.asarray(om1(t_arr), dtype=float), t_arr.shape)
            o2 = np.broadcast_to(np.asarray(om2(t_arr), dtype=float), t_arr.shape)
            out = np.zeros(t_arr.shape + (3, 3), dtype=complex)
            out[..., 0, 1] = 0.5 * o1
            out[..., 1, 0] = 0.5 * o1
            out[..., 1, 2] = 0.5 * o2
            out[..., 2, 1] = 0.5 * o2
            return out

        return HamiltonianRule(3, evaluate)


def _probe_times(duration: float | None) -> np.ndarray:
    if duration is None:
        return np.array([0.0])
    return np.linspace(0.0, duration, _N_PROBE)


def build_lambda(p: LambdaParams) -> HamiltonianRule:
    """Three-level ladder Hamiltonian.

    Couplings omega1/2 and omega2/2 sit on the chain; the diagonal is
    (0, delta_single, delta_two(t)).
    """
    om1 = as_channel(p.omega1)
    om2 = as_channel(p.omega2)
    dl2 = as_channel(p.delta_two)
    delta = float(p.delta_single)

    def evaluate(t):
        t_arr = np.asarray(t, dtype=float)
        o1 = 0.5 * om1(t_arr)
        o2 = 0.5 * om2(t_arr)
        d2 = dl2(t_arr)
        out = np.zeros(t_arr.shape + (3, 3), dtype=complex)
        out[..., 0, 1] = o1
        out[..., 1, 0] = o1
        out[..., 1, 2] = o2
        out[..., 2, 1] = o2
        out[..., 1, 1] = delta
        out[..., 2, 2] = d2
        return out

    return HamiltonianRule(3, evaluate)


def build_m(p: MParams) -> HamiltonianRule:
    """Five-level chain Hamiltonian with diagonal (0, delta, 0, delta, 0)."""
    chans = [as_channel(c) for c in (p.omega1, p.omega2, p.omega3, p.omega4)]
    delta = float(p.delta_single)

    def evaluate(t):
        t_arr = np.asarray(t, dtype=float)
        out = np.zeros(t_arr.shape + (5, 5), dtype=complex)
        for j, chan in enumerate(chans):
            val = 0.5 * chan(t_arr)
            out[..., j, j + 1] = val
            out[..., j + 1, j] = val
        out[..., 1, 1] = delta
        out[..., 3, 3] = delta
        return out

    return HamiltonianRule(5, evaluate)


def _warn_regime(delta: float, coupling_scale: float, context: str) -> None:
    if coupling_scale > 0 and abs(delta) < REGIME_RATIO * coupling_scale:
        warnings.warn(
            f"{context}: |delta| = {abs(delta):.4g} is below {REGIME_RATIO:g} x "
            f"the coupling scale {coupling_scale:.4g}; the eliminated model "
            "may be inaccurate",
            RegimeWarning,
            stacklevel=3,
        )


def reduce_lambda(p: LambdaParams) -> EffTwoLevel:
    """Eliminate the excited bridge of the three-level ladder.

    Requires equal pump and Stokes channels.  Returns the effective drive
    omega_e(t) = -omega(t)^2 / (2 delta), delta_e(t) = -delta_two(t).
    """
    delta = float(p.delta_single)
    if delta == 0.0:
        raise ValueError("reduction undefined for delta_single = 0")
    om1 = as_channel(p.omega1)
    om2 = as_channel(p.omega2)
    dl2 = as_channel(p.delta_two)
    probes = _probe_times(p.duration)
    o1 = om1(probes)
    o2 = om2(probes)
    mismatch = float(np.max(np.abs(o1 - o2)))
    scale = max(float(np.max(np.abs(o1))), 1e-300)
    if mismatch > 1e-9 * scale:
        raise ValueError(
            f"reduction requires omega1 = omega2; max channel mismatch {mismatch:.3e}"
        )
    _warn_regime(delta, max(float(np.max(np.abs(o1))), float(np.max(np.abs(dl2(probes))))),
                 "three-level reduction")

    def omega_e(t):
        return -om1(np.asarray(t, dtype=float)) ** 2 / (2.0 * delta)

    def delta_e(t):
        return -dl2(np.asarray(t, dtype=float))

    return EffTwoLevel(omega_e=omega_e, delta_e=delta_e)


def reduce_m(p: MParams) -> EffThreeLevel:
    """Eliminate both excited bridges of the five-level chain.

    Valid only under the Stark-balancing constraint
    omega1 = omega4 = sqrt(omega2^2 + omega3^2), which equalizes the
    light-shift diagonal so the reduced three-level chain is resonant.  The
    effective couplings are

        omega_e1 = -omega2 * sqrt(omega2^2 + omega3^2) / (2 delta)
        omega_e2 = -omega3 * sqrt(omega2^2 + omega3^2) / (2 delta)

    Raises StarkBalanceError naming the largest pointwise violation when the
    constraint fails beyond 1e-6 relative.
    """
    delta = float(p.delta_single)
    if delta == 0.0:
        raise ValueError("reduction undefined for delta_single = 0")
    chans = [as_channel(c) for c in (p.omega1, p.omega2, p.omega3, p.omega4)]
    probes = _probe_times(p.duration)
    vals = [c(probes) for c in chans]
    root = np.sqrt(vals[1] ** 2 + vals[2] ** 2)
    amp = max(float(np.max(root)), 1e-300)
    denom = np.maximum(root, 1e-9 * amp)
    viol = np.maximum(np.abs(vals[0] - root), np.abs(vals[3] - root)) / denom
    worst = int(np.argmax(viol))
    if viol[worst] > 1e-6:
        raise StarkBalanceError(
            f"balancing constraint omega1 = omega4 = sqrt(omega2^2 + omega3^2) "
            f"violated: relative defect {viol[worst]:.3e} at t = {probes[worst]:.6g} us"
        )
    _warn_regime(delta, max(float(np.max(np.abs(v))) for v in vals), "five-level reduction")

    om2, om3 = chans[1], chans[2]

    def omega_e1(t):
        t_arr = np.asarray(t, dtype=float)
        o2 = om2(t_arr)
        o3 = om3(t_arr)
        return -o2 * np.sqrt(o2**2 + o3**2) / (2.0 * delta)

    def omega_e2(t):
        t_arr = np.asarray(t, dtype=float)
        o2 = om2(t_arr)
        o3 = om3(t_arr)
        return -o3 * np.sqrt(o2**2 + o3**2) / (2.0 * delta)

    return EffThreeLevel(omega_e1=omega_e1, omega_e2=omega_e2)


def adiabaticity_margin(e: EffTwoLevel, grid: TimeGrid) -> float:
    """Peak ratio of mixing-angle rotation rate to eigenfrequency splitting.

    Returns max over the grid of

        |d(omega_e)/dt * delta_e - d(delta_e)/dt * omega_e|
        -----------------------------------------------------
              2 (omega_e^2 + delta_e^2)^(3/2)

    with derivatives by central differences on the grid.  Values much below
    one indicate the drive could be followed adiabatically.  Raises when the
    splitting vanishes at any sample (criterion undefined there).
    """
    times = grid.times
    om = np.asarray(e.omega_e(times), dtype=float)
    dl = np.asarray(e.delta_e(times), dtype=float)
    om = np.broadcast_to(om, times.shape)
    dl = np.broadcast_to(dl, times.shape)
    denom = om**2 + dl**2
    if np.any(denom == 0.0):
        raise ValueError("omega_e^2 + delta_e^2 vanishes on the grid; margin undefined")
    om_dot = np.gradient(om, times)
    dl_dot = np.gradient(dl, times)
    ratio = 0.5 * np.abs(om_dot * dl - dl_dot * om) / denom**1.5
    return float(np.max(ratio))
