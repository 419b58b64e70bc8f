"""Dynamical invariants for inverse-engineered population transfer.

A Hermitian operator I(t) satisfying dI/dt = dI/dt|_partial - i [I, H] = 0
has eigenstates whose populations are exactly conserved, so driving a system
along one such eigenstate realizes the adiabatic end state without slow
evolution.  Two parameterizations are provided:

* two-level: mixing angle ``theta`` and phase ``beta``; the eigenstate pair
  interpolates between the bare levels as theta sweeps 0 to pi;
* three-level: angles ``chi`` and ``vartheta`` whose null eigenstate carries
  population across the chain as vartheta sweeps between 0 and pi/2, with a
  small floor ``epsilon`` on chi keeping the inverse-engineered drive finite.

The scale ``omega0`` fixes the invariant's eigenvalues and never enters any
designed pulse or population; it defaults to 1 rad/us.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import cumulative_simpson

from .qcore import HamiltonianRule, StateVector, TimeGrid

__all__ = [
    "TwoLevelAux",
    "ThreeLevelAux",
    "invariant2",
    "eigenstates2",
    "invariant3",
    "eigenstates3",
    "invariant2_rule",
    "invariant3_rule",
    "solve_aux_polynomials",
    "invariant_residual",
    "lr_phase",
]

EPSILON_MIN = 1e-3
_FD_STEP = 1e-6  # us, fallback derivative step for non-analytic aux functions


def _fd(func, t, h=_FD_STEP):
    t_arr = np.asarray(t, dtype=float)
    return (np.asarray(func(t_arr + h)) - np.asarray(func(t_arr - h))) / (2.0 * h)


@dataclass(frozen=True)
class TwoLevelAux:
    """Auxiliary angle trajectories (theta, beta) for the two-level invariant.

    ``theta_dot`` / ``beta_dot`` may be omitted, in which case derivatives
    fall back to central differences; designed trajectories should supply
    them analytically since cot(theta) amplifies endpoint error.
    """

    theta: Callable[[np.ndarray], np.ndarray]
    beta: Callable[[np.ndarray], np.ndarray]
    omega0: float = 1.0
    theta_dot: Callable[[np.ndarray], np.ndarray] | None = None
    beta_dot: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.omega0 <= 0:
            raise ValueError("omega0 must be positive")

    def theta_deriv(self, t):
        if self.theta_dot is not None:
            return np.asarray(self.theta_dot(np.asarray(t, dtype=float)))
        return _fd(self.theta, t)

    def beta_deriv(self, t):
        if self.beta_dot is not None:
            return np.asarray(self.beta_dot(np.asarray(t, dtype=float)))
        return _fd(self.beta, t)

    @classmethod
    def linear_sweep(cls, t_f: float, beta: float, omega0: float = 1.0) -> "TwoLevelAux":
        """theta ramps 0 -> pi linearly over t_f at constant beta."""
        if t_f <= 0:
            raise ValueError("t_f must be positive")
        if abs(np.sin(beta)) < 1e-12:
            raise ValueError("beta must keep sin(beta) nonzero")
        rate = np.pi / t_f

        return cls(
            theta=lambda t: rate * np.asarray(t, dtype=float),
            beta=lambda t: np.full(np.asarray(t, dtype=float).shape, float(beta)),
            omega0=omega0,
            theta_dot=lambda t: np.full(np.asarray(t, dtype=float).shape, rate),
            beta_dot=lambda t: np.zeros(np.asarray(t, dtype=float).shape),
        )

    @classmethod
    def cubic_sweep(cls, t_f: float, omega0: float = 1.0) -> "TwoLevelAux":
        """theta = 3 pi (t/t_f)^2 - 2 pi (t/t_f)^3, flat at both ends; beta = pi/2."""
        if t_f <= 0:
            raise ValueError("t_f must be positive")

        def theta(t):
            s = np.asarray(t, dtype=float) / t_f
            return np.pi * s * s * (3.0 - 2.0 * s)

        def theta_dot(t):
            s = np.asarray(t, dtype=float) / t_f
            return 6.0 * np.pi * s * (1.0 - s) / t_f

        half_pi = np.pi / 2

        return cls(
            theta=theta,
            beta=lambda t: np.full(np.asarray(t, dtype=float).shape, half_pi),
            omega0=omega0,
            theta_dot=theta_dot,
            beta_dot=lambda t: np.zeros(np.asarray(t, dtype=float).shape),
        )


@dataclass(frozen=True)
class ThreeLevelAux:
    """Polynomial angle trajectories (chi, vartheta) for the chain invariant.

    chi is the unique quartic meeting chi(0) = chi(t_f) = epsilon,
    chi(t_f/2) = pi/4 and flat endpoints; vartheta is the unique cubic
    sweeping 0 -> pi/2 (creation) or pi/2 -> 0 (detection) with flat
    endpoints.  Coefficients ``scaled_a`` / ``scaled_b`` live in the scaled
    time s = t / t_f, where the endpoint derivatives cancel exactly in
    floating point (the inverse-engineered channels take a fourth root of
    the squared derivatives, so exact zeros matter); ``poly_a`` / ``poly_b``
    expose the same polynomials in plain time.
    """

    t_f: float
    epsilon: float
    direction: str
    scaled_a: np.ndarray  # chi coefficients in s = t / t_f, degree 4
    scaled_b: np.ndarray  # vartheta coefficients in s, degree 3
    omega0: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "scaled_a", np.asarray(self.scaled_a, dtype=float))
        object.__setattr__(self, "scaled_b", np.asarray(self.scaled_b, dtype=float))
        if self.scaled_a.size != 5 or self.scaled_b.size != 4:
            raise ValueError("need 5 chi coefficients and 4 vartheta coefficients")
        if self.direction not in ("creation", "detection"):
            raise ValueError(f"unknown direction {self.direction!r}")
        if self.omega0 <= 0:
            raise ValueError("omega0 must be positive")
        tf, eps = self.t_f, self.epsilon
        start, end = (0.0, np.pi / 2) if self.direction == "creation" else (np.pi / 2, 0.0)
        checks = (
            (self.chi(0.0) - eps),
            (self.chi(tf) - eps),
            (self.chi(tf / 2) - np.pi / 4),
            self.chi_deriv(0.0),
            self.chi_deriv(tf),
            (self.vartheta(0.0) - start),
            (self.vartheta(tf) - end),
            self.vartheta_deriv(0.0),
            self.vartheta_deriv(tf),
        )
        worst = max(abs(float(c)) for c in checks)
        if worst > 1e-12:
            raise ValueError(f"boundary conditions violated by {worst:.3e}")

    @property
    def poly_a(self) -> np.ndarray:
        return self.scaled_a / self.t_f ** np.arange(5)

    @property
    def poly_b(self) -> np.ndarray:
        return self.scaled_b / self.t_f ** np.arange(4)

    def chi(self, t):
        s = np.asarray(t, dtype=float) / self.t_f
        return np.polynomial.polynomial.polyval(s, self.scaled_a)

    def chi_deriv(self, t):
        s = np.asarray(t, dtype=float) / self.t_f
        d = np.polynomial.polynomial.polyder(self.scaled_a)
        return np.polynomial.polynomial.polyval(s, d) / self.t_f

    def vartheta(self, t):
        s = np.asarray(t, dtype=float) / self.t_f
        return np.polynomial.polynomial.polyval(s, self.scaled_b)

    def vartheta_deriv(self, t):
        s = np.asarray(t, dtype=float) / self.t_f
        d = np.polynomial.polynomial.polyder(self.scaled_b)
        return np.polynomial.polynomial.polyval(s, d) / self.t_f


def solve_aux_polynomials(t_f: float, epsilon: float, direction: str = "creation") -> ThreeLevelAux:
    """Solve the boundary-condition linear systems for (chi, vartheta).

    chi: five conditions (values at 0, t_f/2, t_f and flat endpoints) fix a
    quartic; vartheta: four conditions fix a cubic.  epsilon must lie in
    [1e-3, pi/4): the floor keeps cot(chi), and with it every designed
    pulse, finite.

    The systems are assembled and solved in the scaled time s = t / t_f,
    then the solution is snapped to its structured form (the entries are
    small integer multiples of pi/4 - epsilon and pi/2), which makes the
    flat-endpoint conditions exact in floating point rather than merely
    within solver roundoff.
    """
    if t_f <= 0:
        raise ValueError("t_f must be positive")
    if not (EPSILON_MIN <= epsilon < np.pi / 4):
        raise ValueError(f"epsilon must lie in [{EPSILON_MIN}, pi/4), got {epsilon}")
    if direction not in ("creation", "detection"):
        raise ValueError(f"unknown direction {direction!r}")

    def value_row(s, deg):
        return [s**j for j in range(deg + 1)]

    def deriv_row(s, deg):
        return [0.0] + [j * s ** (j - 1) for j in range(1, deg + 1)]

    a_mat = np.array(
        [
            value_row(0.0, 4),
            deriv_row(0.0, 4),
            value_row(0.5, 4),
            value_row(1.0, 4),
            deriv_row(1.0, 4),
        ]
    )
    a_rhs = np.array([epsilon, 0.0, np.pi / 4, epsilon, 0.0])
    solved_a = np.linalg.solve(a_mat, a_rhs)

    start, end = (0.0, np.pi / 2) if direction == "creation" else (np.pi / 2, 0.0)
    b_mat = np.array(
        [
            value_row(0.0, 3),
            deriv_row(0.0, 3),
            value_row(1.0, 3),
            deriv_row(1.0, 3),
        ]
    )
    b_rhs = np.array([start, 0.0, end, 0.0])
    solved_b = np.linalg.solve(b_mat, b_rhs)

    bump = np.pi / 4 - epsilon
    scaled_a = np.array([epsilon, 0.0, 16 * bump, -32 * bump, 16 * bump])
    sweep = np.pi / 2
    if direction == "creation":
        scaled_b = np.array([0.0, 0.0, 3 * sweep, -2 * sweep])
    else:
        scaled_b = np.array([sweep, 0.0, -3 * sweep, 2 * sweep])
    if (np.max(np.abs(solved_a - scaled_a)) > 1e-9
            or np.max(np.abs(solved_b - scaled_b)) > 1e-9):
        raise ValueError("boundary-condition solve disagrees with its structured form")

    return ThreeLevelAux(
        t_f=t_f, epsilon=epsilon, direction=direction,
        scaled_a=scaled_a, scaled_b=scaled_b,
    )


# ---------------------------------------------------------------------------
# invariant matrices and eigenstates
# ---------------------------------------------------------------------------


def _invariant2_stack(aux: TwoLevelAux, times) -> np.ndarray:
    t_arr = np.asarray(times, dtype=float)
    th = np.broadcast_to(np.asarray(aux.theta(t_arr), dtype=float), t_arr.shape)
    be = np.broadcast_to(np.asarray(aux.beta(t_arr), dtype=float), t_arr.shape)
    out = np.zeros(t_arr.shape + (2, 2), dtype=complex)
    half = 0.5 * aux.omega0
    out[..., 0, 0] = half * np.cos(th)
    out[..., 1, 1] = -half * np.cos(th)
    off = half * np.sin(th) * np.exp(-1j * be)
    out[..., 0, 1] = off
    out[..., 1, 0] = off.conj()
    return out


def invariant2(aux: TwoLevelAux, t: float) -> np.ndarray:
    """Two-level invariant matrix at time t; eigenvalues are +-omega0/2."""
    return _invariant2_stack(aux, np.asarray(float(t)))


def eigenstates2(aux: TwoLevelAux, t: float) -> tuple[StateVector, StateVector]:
    """Orthonormal eigenstate pair (phi_plus, phi_minus) at time t."""
    th = float(np.asarray(aux.theta(float(t))))
    be = float(np.asarray(aux.beta(float(t))))
    phi_plus = np.array([np.cos(th / 2) * np.exp(-1j * be), np.sin(th / 2)])
    phi_minus = np.array([np.sin(th / 2), -np.cos(th / 2) * np.exp(1j * be)])
    return StateVector(phi_plus), StateVector(phi_minus)


def _invariant3_stack(aux: ThreeLevelAux, times) -> np.ndarray:
    t_arr = np.asarray(times, dtype=float)
    chi = np.broadcast_to(np.asarray(aux.chi(t_arr), dtype=float), t_arr.shape)
    vt = np.broadcast_to(np.asarray(aux.vartheta(t_arr), dtype=float), t_arr.shape)
    out = np.zeros(t_arr.shape + (3, 3), dtype=complex)
    half = 0.5 * aux.omega0
    cchi, schi = np.cos(chi), np.sin(chi)
    out[..., 0, 1] = half * cchi * np.sin(vt)
    out[..., 1, 0] = out[..., 0, 1]
    out[..., 1, 2] = half * cchi * np.cos(vt)
    out[..., 2, 1] = out[..., 1, 2]
    out[..., 0, 2] = -1j * half * schi
    out[..., 2, 0] = 1j * half * schi
    return out


def invariant3(aux: ThreeLevelAux, t: float) -> np.ndarray:
    """Three-level invariant matrix at time t; spectrum {-omega0/2, 0, +omega0/2}."""
    return _invariant3_stack(aux, np.asarray(float(t)))


def eigenstates3(aux: ThreeLevelAux, t: float) -> tuple[StateVector, StateVector, StateVector]:
    """Eigenstates (phi_0, phi_plus, phi_minus) of the three-level invariant."""
    chi = float(np.asarray(aux.chi(float(t))))
    vt = float(np.asarray(aux.vartheta(float(t))))
    cchi, schi = np.cos(chi), np.sin(chi)
    cvt, svt = np.cos(vt), np.sin(vt)
    phi0 = np.array([cchi * cvt, -1j * schi, -cchi * svt])
    phi_plus = np.array([schi * cvt + 1j * svt, 1j * cchi, -schi * svt + 1j * cvt]) / np.sqrt(2)
    phi_minus = np.array([schi * cvt - 1j * svt, 1j * cchi, -schi * svt - 1j * cvt]) / np.sqrt(2)
    return StateVector(phi0), StateVector(phi_plus), StateVector(phi_minus)


def invariant2_rule(aux: TwoLevelAux) -> HamiltonianRule:
    """The two-level invariant as a Hermitian matrix-valued function of time."""
    return HamiltonianRule(2, lambda t: _invariant2_stack(aux, t))


def invariant3_rule(aux: ThreeLevelAux) -> HamiltonianRule:
    """The three-level invariant as a Hermitian matrix-valued function of time."""
    return HamiltonianRule(3, lambda t: _invariant3_stack(aux, t))


def invariant_residual(i_rule: HamiltonianRule, h_rule: HamiltonianRule, grid: TimeGrid) -> float:
    """Peak Frobenius norm of dI/dt|_partial - i [I, H] over the grid.

    The partial derivative is taken by central differences with a fixed
    stencil width of 1e-5 times the grid duration (shifted one-sided at the
    window edges), so the result is a property of the pair rather than of
    the sampling density.  Near-zero certifies that H transports the
    invariant's eigenstates exactly.
    """
    if i_rule.dimension != h_rule.dimension:
        raise ValueError(
            f"dimension mismatch: invariant {i_rule.dimension}, "
            f"Hamiltonian {h_rule.dimension}"
        )
    times = grid.times
    h_fd = 1e-5 * grid.duration
    t_plus = np.minimum(times + h_fd, grid.t_end)
    t_minus = np.maximum(times - h_fd, grid.t_start)
    di = (i_rule.matrices(t_plus) - i_rule.matrices(t_minus)) / (
        (t_plus - t_minus)[:, None, None]
    )
    i_m = i_rule.matrices(times)
    h_m = h_rule.matrices(times)
    residual = di - 1j * (i_m @ h_m - h_m @ i_m)
    return float(np.max(np.sqrt(np.sum(np.abs(residual) ** 2, axis=(1, 2)))))


# ---------------------------------------------------------------------------
# Lewis-Riesenfeld phases
# ---------------------------------------------------------------------------


def _eigvec_and_deriv_2(aux: TwoLevelAux, which: str, times: np.ndarray):
    th = np.broadcast_to(np.asarray(aux.theta(times), dtype=float), times.shape)
    be = np.broadcast_to(np.asarray(aux.beta(times), dtype=float), times.shape)
    th_d = np.broadcast_to(np.asarray(aux.theta_deriv(times), dtype=float), times.shape)
    be_d = np.broadcast_to(np.asarray(aux.beta_deriv(times), dtype=float), times.shape)
    c, s = np.cos(th / 2), np.sin(th / 2)
    eb_m = np.exp(-1j * be)
    eb_p = np.exp(1j * be)
    if which == "plus":
        vec = np.stack([c * eb_m, s], axis=-1)
        dvec = np.stack(
            [(-0.5 * th_d * s - 1j * be_d * c) * eb_m, 0.5 * th_d * c], axis=-1
        )
    elif which == "minus":
        vec = np.stack([s, -c * eb_p], axis=-1)
        dvec = np.stack(
            [0.5 * th_d * c, (0.5 * th_d * s - 1j * be_d * c) * eb_p], axis=-1
        )
    else:
        raise ValueError(f"two-level eigenstate selector must be 'plus' or 'minus', got {which!r}")
    return vec, dvec


def _eigvec_and_deriv_3(aux: ThreeLevelAux, which: str, times: np.ndarray):
    chi = np.broadcast_to(np.asarray(aux.chi(times), dtype=float), times.shape)
    vt = np.broadcast_to(np.asarray(aux.vartheta(times), dtype=float), times.shape)
    chi_d = np.broadcast_to(np.asarray(aux.chi_deriv(times), dtype=float), times.shape)
    vt_d = np.broadcast_to(np.asarray(aux.vartheta_deriv(times), dtype=float), times.shape)
    cc, sc = np.cos(chi), np.sin(chi)
    cv, sv = np.cos(vt), np.sin(vt)
    if which == "zero":
        vec = np.stack([cc * cv, -1j * sc, -cc * sv], axis=-1)
        dvec = np.stack(
            [
                -chi_d * sc * cv - vt_d * cc * sv,
                -1j * chi_d * cc,
                chi_d * sc * sv - vt_d * cc * cv,
            ],
            axis=-1,
        )
    elif which in ("plus", "minus"):
        sign = 1.0 if which == "plus" else -1.0
        rt2 = np.sqrt(2.0)
        vec = np.stack(
            [sc * cv + sign * 1j * sv, 1j * cc, -sc * sv + sign * 1j * cv], axis=-1
        ) / rt2
        dvec = np.stack(
            [
                chi_d * cc * cv - vt_d * sc * sv + sign * 1j * vt_d * cv,
                -1j * chi_d * sc,
                -chi_d * cc * sv - vt_d * sc * cv - sign * 1j * vt_d * sv,
            ],
            axis=-1,
        ) / rt2
    else:
        raise ValueError(
            f"three-level eigenstate selector must be 'zero', 'plus' or 'minus', got {which!r}"
        )
    return vec, dvec


def lr_phase(
    n: str,
    aux: TwoLevelAux | ThreeLevelAux,
    eff_h: HamiltonianRule,
    grid: TimeGrid,
) -> Callable[[float], float]:
    """Lewis-Riesenfeld phase zeta_n(t) of one invariant eigenstate.

    zeta_n(t) = integral from t_start of <phi_n| i d/dt' - H(t') |phi_n> dt',
    accumulated by Simpson quadrature on the grid; zeta_n(t_start) = 0.
    Populations of a transported solution never depend on these phases;
    they matter only when eigenstate superpositions interfere.

    ``n`` selects the eigenstate: "plus"/"minus" for a two-level aux,
    "zero"/"plus"/"minus" for a three-level aux.
    """
    times = grid.times
    if isinstance(aux, TwoLevelAux):
        vec, dvec = _eigvec_and_deriv_2(aux, n, times)
    else:
        vec, dvec = _eigvec_and_deriv_3(aux, n, times)
    h_m = eff_h.matrices(times)
    geometric = np.real(1j * np.einsum("ti,ti->t", vec.conj(), dvec))
    dynamic = np.real(np.einsum("ti,tij,tj->t", vec.conj(), h_m, vec))
    zeta = cumulative_simpson(geometric - dynamic, x=times, initial=0.0)

    def phase(t):
        return np.interp(t, times, zeta)

    return phase
