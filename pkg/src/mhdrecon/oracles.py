"""Closed-form reference solutions, forces, and decay envelopes.

These are the ground truths the solver and the scripted scenarios are checked
against: the decaying single-Taylor solution, the forced solution

    b(t) = e^{-eta N^2 t} T_nm + ((1 - e^{-eta N2^2 t}) / (eta N2^2)) T_{N2},

the velocity force that keeps u = 0 for it, and the decay-envelope shapes of
the stability and Duhamel estimates (with every unquantified constant set to
1; envelopes are used for rate and shape comparisons only, never for
pointwise domination claims).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .fields import (
    ConfigurationError,
    SpectralField2D,
    TaylorSpec,
    TorusGrid,
    make_taylor,
    make_tilde_t1,
    sobolev_norm,
    zero_field,
)
from .solver import MHDState, advective_cross_term


@dataclass(frozen=True)
class DecayingTaylorOracle:
    """Exact unforced solution (u, b) = (0, amplitude e^{-eta N^2 t} T_nm)."""

    spec: TaylorSpec
    eta: float
    amplitude: float = 1.0


@dataclass(frozen=True)
class ForcedOracle:
    """Exact solution of the forced system with magnetic forcing T_{N2}.

    The triple (0, b(t), P(t)) solves the forced equations when the velocity
    force is the compensating cross term (see forcing_f1).
    """

    spec_nm: TaylorSpec
    spec_2: TaylorSpec
    eta: float

    def __post_init__(self):
        if self.spec_2.eigenvalue >= self.spec_nm.eigenvalue:
            raise ConfigurationError("ForcedOracle requires N2^2 < N^2")
        if self.eta <= 0:
            raise ConfigurationError("ForcedOracle requires eta > 0")

    def coefficients(self, t: float) -> tuple[float, float]:
        """Time coefficients (c1, c2) of T_nm and T_{N2} in the closed form."""
        nsq = self.spec_nm.eigenvalue
        n2sq = self.spec_2.eigenvalue
        c1 = float(np.exp(-self.eta * nsq * t))
        c2 = float(-np.expm1(-n2sq * self.eta * t) / (self.eta * n2sq))
        return c1, c2


@dataclass(frozen=True)
class StabilityBound:
    """Parameters of the perturbation-decay envelope delta^2 N^{2r} e^{-2 sigma t}.

    sigma must lie strictly below min(nu, eta) of the run it describes; use
    for_run to derive it with the default safety factor 0.9. gamma is the
    aggregate initial-energy constant (1 + sum of squared L2 norms of the
    four initial fields); it enters only the untestable constant and is
    carried for reporting.
    """

    sigma: float
    r: int
    delta: float
    n_scale: float
    gamma: float = 1.0

    def __post_init__(self):
        if self.sigma <= 0:
            raise ConfigurationError("sigma must be positive")
        if self.n_scale <= 0 or self.delta < 0:
            raise ConfigurationError("n_scale must be positive and delta >= 0")

    @classmethod
    def for_run(
        cls,
        nu: float,
        eta: float,
        r: int,
        delta: float,
        n_scale: float,
        gamma: float = 1.0,
        safety: float = 0.9,
    ) -> "StabilityBound":
        if not 0 < safety < 1:
            raise ConfigurationError("safety factor must lie in (0, 1)")
        if min(nu, eta) <= 0:
            raise ConfigurationError("stability bound needs nu, eta > 0")
        return cls(sigma=safety * min(nu, eta), r=r, delta=delta, n_scale=n_scale, gamma=gamma)


def decaying_taylor(oracle: DecayingTaylorOracle, t: float, grid: TorusGrid) -> MHDState:
    """The exact state at time t: u = 0, b = amplitude e^{-eta N^2 t} T_nm."""
    if t < 0:
        raise ConfigurationError("oracle time must be >= 0")
    amp = oracle.amplitude * float(np.exp(-oracle.eta * oracle.spec.eigenvalue * t))
    return MHDState(zero_field(grid), make_taylor(oracle.spec, amp, grid), t)


def forced_exact_b(oracle: ForcedOracle, t: float, grid: TorusGrid) -> SpectralField2D:
    """The closed-form magnetic field of the forced construction at time t."""
    if t < 0:
        raise ConfigurationError("oracle time must be >= 0")
    c1, c2 = oracle.coefficients(t)
    big = make_taylor(oracle.spec_nm, 1.0, grid)
    small = make_taylor(oracle.spec_2, 1.0, grid)
    return SpectralField2D(grid, c1 * big.coeffs + c2 * small.coeffs)


def forced_exact_b_dt(oracle: ForcedOracle, t: float, grid: TorusGrid) -> SpectralField2D:
    """Analytic time derivative of forced_exact_b (for residual checks)."""
    nsq = oracle.spec_nm.eigenvalue
    n2sq = oracle.spec_2.eigenvalue
    d1 = -oracle.eta * nsq * float(np.exp(-oracle.eta * nsq * t))
    d2 = float(np.exp(-n2sq * oracle.eta * t))
    big = make_taylor(oracle.spec_nm, 1.0, grid)
    small = make_taylor(oracle.spec_2, 1.0, grid)
    return SpectralField2D(grid, d1 * big.coeffs + d2 * small.coeffs)


@lru_cache(maxsize=16)
def _cached_cross(spec_nm: TaylorSpec, spec_2: TaylorSpec, resolution: int) -> np.ndarray:
    grid = TorusGrid(resolution)
    big = make_taylor(spec_nm, 1.0, grid)
    small = make_taylor(spec_2, 1.0, grid)
    cross = advective_cross_term(big, small)
    cross.setflags(write=False)
    return cross


def forcing_f1(oracle: ForcedOracle, t: float, grid: TorusGrid) -> SpectralField2D:
    """The velocity force -c1(t) c2(t) [(T_nm . grad) T_{N2} + (T_{N2} . grad) T_nm].

    This cancels the advective cross term of the closed-form field so the
    velocity stays identically zero. The field has zero average by
    construction; it is generally not solenoidal (the pressure absorbs its
    gradient part), so it is returned unprojected.
    """
    if t < 0:
        raise ConfigurationError("oracle time must be >= 0")
    c1, c2 = oracle.coefficients(t)
    cross = _cached_cross(oracle.spec_nm, oracle.spec_2, grid.resolution)
    return SpectralField2D(grid, (-c1 * c2) * cross)


def stability_envelope(bound: StabilityBound, t: float) -> float:
    """The decay shape delta^2 N^{2r} e^{-2 sigma t} (untestable constant omitted)."""
    if t < 0:
        raise ConfigurationError("envelope time must be >= 0")
    return float(bound.delta**2 * bound.n_scale ** (2 * bound.r) * np.exp(-2.0 * bound.sigma * t))


def duhamel_envelopes(
    delta: float, n_scale: float, r: int, eta: float, sigma: float, t: float
) -> tuple[float, float]:
    """Bound shapes for the two Duhamel integrals, with constants set to 1.

    Returns (delta^2 N^{r+3} e^{-sigma t},
             delta N^{-2} + delta N^{r+1} e^{-eta N^2 t / 2}).
    """
    if min(delta, n_scale, eta, sigma) <= 0 or t < 0:
        raise ConfigurationError("duhamel_envelopes needs positive inputs and t >= 0")
    lh = delta**2 * n_scale ** (r + 3) * np.exp(-sigma * t)
    lm = delta * n_scale**-2 + delta * n_scale ** (r + 1) * np.exp(-eta * n_scale**2 * t / 2.0)
    return float(lh), float(lm)


def remark2_error_bound(eigenvalue: float, r: int, eta: float, t_end: float) -> float:
    """The displayed bound eta (N^r e^{-eta N^2 T} + e^{-eta T}) with N = sqrt(eigenvalue)."""
    if eigenvalue <= 0 or eta <= 0 or t_end <= 0:
        raise ConfigurationError("remark2_error_bound needs positive inputs")
    n = float(np.sqrt(eigenvalue))
    return float(eta * (n**r * np.exp(-eta * eigenvalue * t_end) + np.exp(-eta * t_end)))


def remark2_exact_b(spec_nm: TaylorSpec, eta: float, t: float, grid: TorusGrid) -> SpectralField2D:
    """Closed-form field for the variant forced by tilde T_1 (eigenvalue 1):

    b(t) = e^{-eta N^2 t} T_nm + ((1 - e^{-eta t}) / eta) tilde T_1.
    """
    if eta <= 0 or t < 0:
        raise ConfigurationError("remark2_exact_b needs eta > 0 and t >= 0")
    c1 = float(np.exp(-eta * spec_nm.eigenvalue * t))
    c2 = float(-np.expm1(-eta * t) / eta)
    big = make_taylor(spec_nm, 1.0, grid)
    small = make_tilde_t1(grid)
    return SpectralField2D(grid, c1 * big.coeffs + c2 * small.coeffs)


def remark2_exact_error(
    spec_nm: TaylorSpec, r: int, eta: float, t_end: float, grid: TorusGrid
) -> float:
    """|| eta b(T) - tilde T_1 ||_{H^r} evaluated from the closed form.

    The difference is eta e^{-eta N^2 T} T_nm - e^{-eta T} tilde T_1 exactly.
    """
    c1 = eta * float(np.exp(-eta * spec_nm.eigenvalue * t_end))
    c2 = -float(np.exp(-eta * t_end))
    big = make_taylor(spec_nm, 1.0, grid)
    small = make_tilde_t1(grid)
    diff = SpectralField2D(grid, c1 * big.coeffs + c2 * small.coeffs)
    return sobolev_norm(diff, r)
