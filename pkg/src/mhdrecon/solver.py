"""Time integration of incompressible 2D MHD on the torus.

The system

    d_t u + (u . grad) u + grad P = nu Lap u + (b . grad) b + f1,
    d_t b + (u . grad) b = (b . grad) u + eta Lap b + f2,
    div u = div b = 0,

is advanced pseudo-spectrally: nonlinear terms are formed on the collocation
grid with 2/3-rule dealiasing, the pressure is eliminated by Leray projection,
and the diffusion semigroups exp(-nu |k|^2 t), exp(-eta |k|^2 t) are applied
exactly through an integrating-factor RK4 step. Forces are evaluated at the
RK substage times, which keeps the step fourth-order for time-dependent
forcing.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .fields import (
    ConfigurationError,
    SpectralField2D,
    TaylorSpec,
    TorusGrid,
    make_taylor,
    make_tilde_t1,
    project_coeffs,
)


class BlowUpError(RuntimeError):
    """Raised when a coefficient becomes non-finite during time stepping."""

    def __init__(self, time: float):
        super().__init__(f"non-finite spectral coefficient at t = {time:.6g}")
        self.time = time


@dataclass(frozen=True)
class MHDState:
    """Velocity and magnetic field (both spectral) plus the simulation clock."""

    u: SpectralField2D
    b: SpectralField2D
    t: float = 0.0


@dataclass(frozen=True)
class ForcingSpec:
    """Declarative description of the body forces (f1 on u, f2 on b).

    kinds:
      none      no forcing
      theorem2  f2 = T_{n2,m2} static; f1(t) = -c1(t) c2(t) X with X the
                advective cross term of the two Taylor modes, chosen so the
                exact solution keeps u = 0 (c1, c2 are the time coefficients
                of the two modes in the closed-form magnetic field)
      remark2   same construction with the small mode replaced by tilde T_1
      custom    static Taylor forces given as (target, spec, amplitude) tuples

    Both forces always have zero average. They are not required to be
    solenoidal; the pressure absorbs any gradient part.
    """

    kind: str = "none"
    spec_nm: TaylorSpec | None = None
    spec_2: TaylorSpec | None = None
    custom: tuple = ()

    def __post_init__(self):
        if self.kind not in ("none", "theorem2", "remark2", "custom"):
            raise ConfigurationError(f"unknown forcing kind {self.kind!r}")
        if self.kind == "theorem2":
            if self.spec_nm is None or self.spec_2 is None:
                raise ConfigurationError("theorem2 forcing needs spec_nm and spec_2")
            if self.spec_2.eigenvalue >= self.spec_nm.eigenvalue:
                raise ConfigurationError("theorem2 forcing requires N2^2 < N^2")
        if self.kind == "remark2" and self.spec_nm is None:
            raise ConfigurationError("remark2 forcing needs spec_nm")


@dataclass(frozen=True)
class SimConfig:
    """Everything a run needs: physics parameters, grid, stepping, forcing."""

    nu: float
    eta: float
    grid: TorusGrid
    dt: float
    t_end: float
    forcing: ForcingSpec = field(default_factory=ForcingSpec)
    dealias: bool = True
    output_cadence: int = 50

    def __post_init__(self):
        if self.nu < 0 or self.eta < 0:
            raise ConfigurationError("viscosity and resistivity must be >= 0")
        if self.dt <= 0:
            raise ConfigurationError("dt must be positive")
        if self.t_end < 0:
            raise ConfigurationError("t_end must be >= 0")
        if self.output_cadence < 1:
            raise ConfigurationError("output_cadence must be >= 1")

    def to_dict(self) -> dict:
        d = {
            "nu": self.nu,
            "eta": self.eta,
            "resolution": self.grid.resolution,
            "dt": self.dt,
            "t_end": self.t_end,
            "dealias": self.dealias,
            "output_cadence": self.output_cadence,
            "forcing": {"kind": self.forcing.kind},
        }
        if self.forcing.spec_nm is not None:
            d["forcing"]["n"] = self.forcing.spec_nm.n
            d["forcing"]["m"] = self.forcing.spec_nm.m
        if self.forcing.spec_2 is not None:
            d["forcing"]["n2"] = self.forcing.spec_2.n
            d["forcing"]["m2"] = self.forcing.spec_2.m
        return d


def advective_cross_term(a: SpectralField2D, b: SpectralField2D) -> np.ndarray:
    """Coefficients of (a . grad) b + (b . grad) a, formed pseudo-spectrally."""
    g = a.grid
    ag = a.to_grid()
    bg = b.to_grid()
    out = np.empty((2, *g.shape), dtype=np.complex128)
    for i in range(2):
        dbx = g.to_grid(1j * g.k1 * b.coeffs[i])
        dby = g.to_grid(1j * g.k2 * b.coeffs[i])
        dax = g.to_grid(1j * g.k1 * a.coeffs[i])
        day = g.to_grid(1j * g.k2 * a.coeffs[i])
        prod = ag[0] * dbx + ag[1] * dby + bg[0] * dax + bg[1] * day
        out[i] = g.from_grid(prod)
    out[:, 0, 0] = 0.0
    return out


class _Forcing:
    """Evaluates f1(t), f2(t) as coefficient arrays for a concrete grid."""

    def __init__(self, spec: ForcingSpec, grid: TorusGrid, eta: float):
        self.spec = spec
        self.grid = grid
        self.eta = eta
        self._f2_static: np.ndarray | None = None
        self._cross: np.ndarray | None = None
        self._f1_static: np.ndarray | None = None
        self._nsq = self._n2sq = 0.0
        kind = spec.kind
        if kind in ("theorem2", "remark2"):
            if eta <= 0:
                raise ConfigurationError(f"{kind} forcing requires eta > 0")
            big = make_taylor(spec.spec_nm, 1.0, grid)
            if kind == "theorem2":
                small = make_taylor(spec.spec_2, 1.0, grid)
                self._n2sq = float(spec.spec_2.eigenvalue)
            else:
                small = make_tilde_t1(grid)
                self._n2sq = 1.0
            self._nsq = float(spec.spec_nm.eigenvalue)
            self._f2_static = small.coeffs.copy()
            # Only the solenoidal part of f1 acts on u (pressure absorbs the
            # rest); feeding stages the projected force keeps them clean.
            self._cross = project_coeffs(advective_cross_term(big, small), grid)
        elif kind == "custom":
            fu = np.zeros((2, *grid.shape), dtype=np.complex128)
            fb = np.zeros_like(fu)
            for target, tspec, amp in spec.custom:
                f = (
                    make_tilde_t1(grid, amp)
                    if tspec == "tilde_t1"
                    else make_taylor(tspec, amp, grid)
                )
                if target == "u":
                    fu += f.coeffs
                elif target == "b":
                    fb += f.coeffs
                else:
                    raise ConfigurationError(f"custom forcing target must be u or b, got {target!r}")
            self._f1_static = fu if np.any(fu) else None
            self._f2_static = fb if np.any(fb) else None

    def coefficients(self, t: float) -> tuple[float, float]:
        """Time coefficients (c1, c2) of the two modes in the closed-form field."""
        c1 = float(np.exp(-self.eta * self._nsq * t))
        c2 = float(-np.expm1(-self._n2sq * self.eta * t) / (self.eta * self._n2sq))
        return c1, c2

    def f1(self, t: float) -> np.ndarray | None:
        if self._cross is not None:
            c1, c2 = self.coefficients(t)
            return (-c1 * c2) * self._cross
        return self._f1_static

    def f2(self, t: float) -> np.ndarray | None:
        return self._f2_static


def build_forcing(spec: ForcingSpec, grid: TorusGrid, eta: float) -> _Forcing:
    return _Forcing(spec, grid, eta)


def _rhs_arrays(uc, bc, grid: TorusGrid, dealias: bool):
    """Nonlinear tendencies (Leray-projected, diffusion-free) plus max grid |u|.

    Returns coefficient arrays for -P[(u.grad)u - (b.grad)b] and
    -P[(u.grad)b - (b.grad)u]. The products are formed on the grid in
    conservative form, div(b x b - u x u) and div(u x b - b x u); for
    spectrally divergence-free fields under the 2/3 mask this coincides with
    the advective form while needing half the transforms.
    """
    k1, k2 = grid.k1, grid.k2
    ug = grid.to_grid(uc)
    bg = grid.to_grid(bc)
    umax = float(np.max(np.abs(ug))) if ug.size else 0.0

    s11 = grid.from_grid(ug[0] * ug[0] - bg[0] * bg[0])
    s12 = grid.from_grid(ug[0] * ug[1] - bg[0] * bg[1])
    s22 = grid.from_grid(ug[1] * ug[1] - bg[1] * bg[1])
    w = grid.from_grid(ug[0] * bg[1] - ug[1] * bg[0])
    if dealias:
        mask = grid.dealias_mask
        s11 *= mask
        s12 *= mask
        s22 *= mask
        w *= mask

    du = np.empty_like(uc)
    du[0] = -1j * (k1 * s11 + k2 * s12)
    du[1] = -1j * (k1 * s12 + k2 * s22)
    db = np.empty_like(bc)
    db[0] = 1j * k2 * w
    db[1] = -1j * k1 * w
    du = project_coeffs(du, grid)
    db = project_coeffs(db, grid)
    return du, db, umax


def nonlinear_rhs(state: MHDState, dealias: bool = True) -> tuple[SpectralField2D, SpectralField2D]:
    """Nonlinear spectral tendencies of (u, b); diffusion and forcing excluded."""
    g = state.u.grid
    du, db, _ = _rhs_arrays(state.u.coeffs, state.b.coeffs, g, dealias)
    return SpectralField2D(g, du), SpectralField2D(g, db)


def _step_arrays(uc, bc, t: float, h: float, cfg: SimConfig, forcing: _Forcing, exps):
    """One integrating-factor RK4 step on raw coefficient arrays."""
    g = cfg.grid
    eu_f, eu_h, eb_f, eb_h = exps

    def rhs(uu, bb, tt):
        du, db, umax = _rhs_arrays(uu, bb, g, cfg.dealias)
        f1 = forcing.f1(tt)
        f2 = forcing.f2(tt)
        if f1 is not None:
            du = du + f1
        if f2 is not None:
            db = db + f2
        return du, db, umax

    n1u, n1b, umax = rhs(uc, bc, t)
    cfl = h * umax * g.resolution / (2.0 * np.pi)
    if cfl >= 0.5:
        warnings.warn(
            f"CFL number {cfl:.2f} >= 0.5; the time step under-resolves advection",
            RuntimeWarning,
            stacklevel=3,
        )
    u1 = eu_h * (uc + 0.5 * h * n1u)
    b1 = eb_h * (bc + 0.5 * h * n1b)
    n2u, n2b, _ = rhs(u1, b1, t + 0.5 * h)
    u2 = eu_h * uc + 0.5 * h * n2u
    b2 = eb_h * bc + 0.5 * h * n2b
    n3u, n3b, _ = rhs(u2, b2, t + 0.5 * h)
    u3 = eu_f * uc + h * eu_h * n3u
    b3 = eb_f * bc + h * eb_h * n3b
    n4u, n4b, _ = rhs(u3, b3, t + h)

    un = eu_f * uc + (h / 6.0) * (eu_f * n1u + 2.0 * eu_h * (n2u + n3u) + n4u)
    bn = eb_f * bc + (h / 6.0) * (eb_f * n1b + 2.0 * eb_h * (n2b + n3b) + n4b)

    un = g.hermitianize(project_coeffs(un, g))
    bn = g.hermitianize(project_coeffs(bn, g))
    if not (np.all(np.isfinite(un)) and np.all(np.isfinite(bn))):
        raise BlowUpError(t + h)
    return un, bn


def _exp_factors(cfg: SimConfig, h: float):
    ksq = cfg.grid.ksq
    return (
        np.exp(-cfg.nu * ksq * h),
        np.exp(-cfg.nu * ksq * (0.5 * h)),
        np.exp(-cfg.eta * ksq * h),
        np.exp(-cfg.eta * ksq * (0.5 * h)),
    )


def step(state: MHDState, cfg: SimConfig) -> MHDState:
    """Advance one time step of size cfg.dt; diffusion is handled exactly."""
    forcing = build_forcing(cfg.forcing, cfg.grid, cfg.eta)
    exps = _exp_factors(cfg, cfg.dt)
    un, bn = _step_arrays(state.u.coeffs, state.b.coeffs, state.t, cfg.dt, cfg, forcing, exps)
    g = cfg.grid
    return MHDState(SpectralField2D(g, un), SpectralField2D(g, bn), state.t + cfg.dt)


def simulate(cfg: SimConfig, initial: MHDState, sinks=()) -> MHDState:
    """Advance to cfg.t_end, emitting states to sinks at the output cadence.

    The final step is shortened to land exactly on t_end. Sinks are callables
    receiving an MHDState; they fire at the initial state, every
    cfg.output_cadence-th step, and the final state. On blow-up the last good
    state is flushed before the error propagates.
    """
    g = cfg.grid
    uc = initial.u.coeffs.copy()
    bc = initial.b.coeffs.copy()
    t0 = initial.t
    total = cfg.t_end - t0
    if total < 0:
        raise ConfigurationError("initial state is already past t_end")

    def emit(t):
        state = MHDState(SpectralField2D(g, uc.copy()), SpectralField2D(g, bc.copy()), t)
        for sink in sinks:
            sink(state)
        return state

    emit(t0)
    if total == 0:
        return MHDState(initial.u, initial.b, t0)

    forcing = build_forcing(cfg.forcing, g, cfg.eta)
    n_full = int(np.floor(total / cfg.dt + 1e-9))
    leftover = total - n_full * cfg.dt
    if leftover < 1e-12 * max(1.0, abs(cfg.t_end)):
        leftover = 0.0
    exps = _exp_factors(cfg, cfg.dt)
    t = t0
    try:
        for i in range(n_full):
            uc, bc = _step_arrays(uc, bc, t, cfg.dt, cfg, forcing, exps)
            t = t0 + (i + 1) * cfg.dt
            if (i + 1) % cfg.output_cadence == 0 and not (i + 1 == n_full and leftover == 0.0):
                emit(t)
        if leftover > 0.0:
            uc, bc = _step_arrays(uc, bc, t, leftover, cfg, forcing, _exp_factors(cfg, leftover))
    except BlowUpError:
        emit(t)  # flush the last good state before propagating
        raise
    return emit(cfg.t_end)


def heat_propagate(f: SpectralField2D, eta: float, t: float) -> SpectralField2D:
    """Apply the diffusion semigroup exp(eta t Lap): multiply by exp(-eta |k|^2 t)."""
    if t < 0:
        raise ConfigurationError("heat_propagate requires t >= 0")
    return SpectralField2D(f.grid, f.coeffs * np.exp(-eta * f.grid.ksq * t))


@dataclass
class Trajectory:
    """Uniform-cadence snapshots of a run, as recorded by TrajectoryRecorder."""

    cfg: SimConfig
    times: list[float] = field(default_factory=list)
    states: list[MHDState] = field(default_factory=list)

    def state_at(self, t: float, atol: float = 1e-9) -> MHDState:
        for st in self.states:
            if abs(st.t - t) <= atol:
                return st
        raise ValueError(f"no snapshot at t = {t}")


class TrajectoryRecorder:
    """Sink that accumulates snapshots into a Trajectory."""

    def __init__(self, cfg: SimConfig):
        self.trajectory = Trajectory(cfg)

    def __call__(self, state: MHDState) -> None:
        self.trajectory.times.append(state.t)
        self.trajectory.states.append(state)


def duhamel_remainder(trajectory: Trajectory, eta: float) -> list[tuple[float, SpectralField2D]]:
    """D(t) = b(t) - exp(eta t Lap) b0 for every snapshot.

    This is the numerically exact total deviation of the magnetic field from
    pure heat evolution of its initial value.
    """
    if not trajectory.states:
        raise ValueError("trajectory has no snapshots; the initial state is required")
    b0 = trajectory.states[0].b
    t0 = trajectory.states[0].t
    out = []
    for st in trajectory.states:
        heated = heat_propagate(b0, eta, st.t - t0)
        out.append((st.t, st.b - heated))
    return out


def energy(state: MHDState) -> float:
    """Total energy (||u||^2 + ||b||^2) / 2 in the unnormalized L2 norm."""
    s = np.sum(np.abs(state.u.coeffs) ** 2) + np.sum(np.abs(state.b.coeffs) ** 2)
    return float(0.5 * (2.0 * np.pi) ** 2 * s)


def cross_helicity(state: MHDState) -> float:
    """int u . b dx."""
    s = np.sum(np.real(state.u.coeffs * np.conj(state.b.coeffs)))
    return float((2.0 * np.pi) ** 2 * s)
