"""Fixed-step simulation of one joint driven by two gear-coupled motors.

Two motor output shafts couple to a single load through gear mesh with play:
each coupling is a dead-zone spring-damper, so torque transmits only once the
relative angle exceeds the play half-width. Every shaft (both motors and the
load) carries stick-slip friction with Coulomb and viscous terms. These two
nonlinearities are what make the high-gain oscillation and the small-step
stall reproducible in closed loop.

All quantities are referenced to the joint output shaft; gear ratio is not
modeled explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

DEG = math.pi / 180.0


class NonFiniteState(Exception):
    """Integration produced NaN/Inf (bad dt or parameter set)."""


@dataclass(frozen=True)
class FrictionParams:
    """Stick-slip friction: static/Coulomb threshold and viscous coefficient."""

    tau_s: float  # N*m, > 0
    tau_v: float  # N*m*s/rad, >= 0

    def __post_init__(self):
        if not (self.tau_s > 0.0):
            raise ValueError("tau_s must be > 0")
        if self.tau_v < 0.0:
            raise ValueError("tau_v must be >= 0")


@dataclass(frozen=True)
class BacklashParams:
    half_width: float         # rad, >= 0 (dead-zone half-angle)
    contact_stiffness: float  # N*m/rad, > 0
    contact_damping: float = 0.0  # N*m*s/rad, >= 0

    def __post_init__(self):
        if self.half_width < 0.0:
            raise ValueError("half_width must be >= 0")
        if not (self.contact_stiffness > 0.0):
            raise ValueError("contact_stiffness must be > 0")
        if self.contact_damping < 0.0:
            raise ValueError("contact_damping must be >= 0")


@dataclass(frozen=True)
class MotorParams:
    torque_constant: float  # N*m per volt of command, at the output shaft
    inertia_motor: float    # kg*m^2, output-referred rotor inertia
    inertia_load: float     # kg*m^2
    voltage_limit: float    # V, |u| clamp
    friction: FrictionParams  # applied at each motor shaft and at the load

    def __post_init__(self):
        for name in ("torque_constant", "inertia_motor", "inertia_load", "voltage_limit"):
            if not (getattr(self, name) > 0.0):
                raise ValueError(f"{name} must be > 0")


@dataclass(frozen=True)
class PlantParams:
    motor: MotorParams
    backlash: BacklashParams
    eps_omega: float = 1e-6  # rad/s velocity dead-band defining "at rest"


@dataclass(frozen=True)
class PlantState:
    """Continuous joint state; advance only through plant_step."""

    theta_m1: float = 0.0
    theta_m2: float = 0.0
    omega_m1: float = 0.0
    omega_m2: float = 0.0
    theta_l: float = 0.0
    omega_l: float = 0.0
    t: float = 0.0


@dataclass(frozen=True)
class EncoderSpec:
    counts_per_rev: int = 4096

    def __post_init__(self):
        if self.counts_per_rev < 1:
            raise ValueError("counts_per_rev must be >= 1")

    @property
    def lsb(self) -> float:
        """Smallest resolvable angle, rad."""
        return 2.0 * math.pi / self.counts_per_rev


def friction_torque(omega: float, tau_e: float, p: FrictionParams,
                    eps_omega: float = 1e-6) -> float:
    """Coulomb + viscous friction torque with a sticking regime.

    Moving (|omega| > eps_omega): tau_s*sgn(omega) + tau_v*omega.
    At rest with |tau_e| below the static threshold: friction cancels tau_e.
    At rest otherwise: saturated at the breakaway limit tau_s*sgn(tau_e).
    """
    if abs(omega) > eps_omega:
        return p.tau_s * (1.0 if omega > 0.0 else -1.0) + p.tau_v * omega
    if abs(tau_e) < p.tau_s:
        return tau_e
    return p.tau_s * (1.0 if tau_e > 0.0 else -1.0)


def backlash_torque(delta_angle: float, delta_rate: float, p: BacklashParams) -> float:
    """Dead-zone spring-damper mesh torque.

    Zero inside the play band |delta| <= half_width; once a flank engages,
    torque is stiffness*(penetration) + damping*delta_rate. The damping term
    is clipped so the mesh never pulls (contact is compression-only per flank).
    """
    d = p.half_width
    if delta_angle > d:
        tau = p.contact_stiffness * (delta_angle - d) + p.contact_damping * delta_rate
        return max(tau, 0.0)
    if delta_angle < -d:
        tau = p.contact_stiffness * (delta_angle + d) + p.contact_damping * delta_rate
        return min(tau, 0.0)
    return 0.0


def _advance_velocity(omega: float, tau_e: float, inertia: float,
                      fr: FrictionParams, dt: float, eps: float) -> float:
    """Semi-implicit velocity update with exact stick capture."""
    tau_f = friction_torque(omega, tau_e, fr, eps)
    omega_new = omega + dt * (tau_e - tau_f) / inertia
    if abs(omega) <= eps and abs(tau_e) < fr.tau_s:
        return 0.0  # stuck: friction balances the applied torque exactly
    if omega != 0.0 and omega_new * omega < 0.0 and abs(tau_e) < fr.tau_s:
        return 0.0  # crossed zero while below breakaway: capture instead of chattering
    return omega_new


def plant_step(s: PlantState, u1: float, u2: float, dt: float, params: PlantParams) -> PlantState:
    """One semi-implicit Euler step of both motors and the load.

    Commands are clamped to +/-voltage_limit. dt must be in (0, 2 ms].
    Raises NonFiniteState if the update produces NaN/Inf.
    """
    if not (0.0 < dt <= 2e-3):
        raise ValueError("dt must be in (0, 0.002] s")
    m = params.motor
    bl = params.backlash
    fr = m.friction
    eps = params.eps_omega

    lim = m.voltage_limit
    u1 = min(lim, max(-lim, u1))
    u2 = min(lim, max(-lim, u2))

    c1 = backlash_torque(s.theta_m1 - s.theta_l, s.omega_m1 - s.omega_l, bl)
    c2 = backlash_torque(s.theta_m2 - s.theta_l, s.omega_m2 - s.omega_l, bl)

    om1 = _advance_velocity(s.omega_m1, m.torque_constant * u1 - c1,
                            m.inertia_motor, fr, dt, eps)
    om2 = _advance_velocity(s.omega_m2, m.torque_constant * u2 - c2,
                            m.inertia_motor, fr, dt, eps)
    oml = _advance_velocity(s.omega_l, c1 + c2, m.inertia_load, fr, dt, eps)

    new = PlantState(
        theta_m1=s.theta_m1 + dt * om1,
        theta_m2=s.theta_m2 + dt * om2,
        omega_m1=om1,
        omega_m2=om2,
        theta_l=s.theta_l + dt * oml,
        omega_l=oml,
        t=s.t + dt,
    )
    for v in (new.theta_m1, new.theta_m2, new.omega_m1, new.omega_m2, new.theta_l, new.omega_l):
        if not math.isfinite(v):
            raise NonFiniteState(f"non-finite plant state at t={s.t + dt:.6f}")
    return new


def encoder_read(s: PlantState, e: EncoderSpec) -> int:
    """Quantize the load angle to encoder counts (floor)."""
    return int(math.floor(s.theta_l / e.lsb))


def counts_to_rad(counts: int, e: EncoderSpec) -> float:
    return counts * e.lsb


# Calibrated defaults. The play half-width is 0.5 deg. The strong viscous term
# reflects the back-EMF of a high-ratio brushed gearmotor seen at the output
# shaft (the motor behaves like a velocity source), and the static friction is
# sized so a one/two-LSB position error times the default loop gain stays below
# breakaway (which is what stalls small-step tracking until dither is enabled).
DEFAULT_PLANT_CONFIG = {
    "plant.torque_constant": 1.0,
    "plant.inertia_motor": 0.004,
    "plant.inertia_load": 0.008,
    "plant.voltage_limit": 6.0,
    "plant.static_friction": 0.675,
    "plant.viscous_friction": 0.5,
    "plant.backlash_half_width": 0.5 * DEG,
    "plant.contact_stiffness": 300.0,
    "plant.contact_damping": 2.0,
    "plant.eps_omega": 1e-6,
    "plant.encoder_counts_per_rev": 4096,
}


def plant_params_from_config(cfg: dict | None = None) -> PlantParams:
    """Build PlantParams from a flat config dict (missing keys use defaults)."""
    c = dict(DEFAULT_PLANT_CONFIG)
    if cfg:
        c.update({k: v for k, v in cfg.items() if k in DEFAULT_PLANT_CONFIG})
    return PlantParams(
        motor=MotorParams(
            torque_constant=float(c["plant.torque_constant"]),
            inertia_motor=float(c["plant.inertia_motor"]),
            inertia_load=float(c["plant.inertia_load"]),
            voltage_limit=float(c["plant.voltage_limit"]),
            friction=FrictionParams(
                tau_s=float(c["plant.static_friction"]),
                tau_v=float(c["plant.viscous_friction"]),
            ),
        ),
        backlash=BacklashParams(
            half_width=float(c["plant.backlash_half_width"]),
            contact_stiffness=float(c["plant.contact_stiffness"]),
            contact_damping=float(c["plant.contact_damping"]),
        ),
        eps_omega=float(c["plant.eps_omega"]),
    )


def encoder_from_config(cfg: dict | None = None) -> EncoderSpec:
    counts = DEFAULT_PLANT_CONFIG["plant.encoder_counts_per_rev"]
    if cfg and "plant.encoder_counts_per_rev" in cfg:
        counts = cfg["plant.encoder_counts_per_rev"]
    return EncoderSpec(counts_per_rev=int(counts))


def ideal_plant_params(base: PlantParams | None = None) -> PlantParams:
    """Copy of the params with zero play and (near-)zero static friction.

    Used by tests that check the compensations are non-destructive on an
    ideal plant. tau_s must stay positive, so it is set negligibly small.
    """
    p = base or plant_params_from_config()
    return PlantParams(
        motor=replace(p.motor, friction=FrictionParams(tau_s=1e-12, tau_v=p.motor.friction.tau_v)),
        backlash=replace(p.backlash, half_width=0.0),
        eps_omega=p.eps_omega,
    )
