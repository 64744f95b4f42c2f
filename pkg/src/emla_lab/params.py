"""Physical parameter sets for PMSM-driven linear actuators.

All values are SI. Each actuator is described by the motor electrical
constants, the drivetrain inertias and frictions, the gearbox/screw
geometry, and the stiffness chain. The derived equivalent parameters
(alpha_rl, A_eq, B_eq, C_eq, D_eq, k_l) are computed in `model.py`.
"""

from __future__ import annotations

from dataclasses import dataclass, fields


_POSITIVE = (
    "phi_pm", "r_s", "l_d", "l_q", "j_m", "j_c", "j_gb", "m_bs",
    "b_m", "b_bs", "lead", "k_tau1", "k_tau2", "k_tau3",
    "k_bearing", "k_screw", "k_nut", "k_tube",
)


@dataclass(frozen=True)
class EmlaParams:
    """Full physical constant set of one actuator.

    Args:
        phi_pm: permanent magnet flux linkage (Wb)
        r_s: stator resistance (ohm)
        l_d, l_q: d/q axis inductances (H)
        n_p: pole pair count
        j_m, j_c, j_gb: motor / coupling / gearbox inertias (kg m^2)
        m_bs: ball screw mass (kg)
        b_m: motor viscous friction (N m s/rad)
        b_bs: screw viscous friction (N s/m)
        rho: inverse gearbox ratio, 0 < rho <= 1
        lead: screw lead (m)
        eta_gb: gearbox efficiency, 0 < eta_gb <= 1
        k_tau1..3: rotational stiffnesses (N m/rad)
        k_bearing, k_screw, k_nut, k_tube: linear stiffnesses (N/m)
    """

    phi_pm: float
    r_s: float
    l_d: float
    l_q: float
    n_p: int
    j_m: float
    j_c: float
    j_gb: float
    m_bs: float
    b_m: float
    b_bs: float
    rho: float
    lead: float
    eta_gb: float
    k_tau1: float
    k_tau2: float
    k_tau3: float
    k_bearing: float
    k_screw: float
    k_nut: float
    k_tube: float

    def __post_init__(self):
        for name in _POSITIVE:
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be > 0")
        if not isinstance(self.n_p, int) or self.n_p < 1:
            raise ValueError("n_p must be an integer >= 1")
        if not 0.0 < self.rho <= 1.0:
            raise ValueError("rho must satisfy 0 < rho <= 1")
        if not 0.0 < self.eta_gb <= 1.0:
            raise ValueError("eta_gb must satisfy 0 < eta_gb <= 1")


@dataclass(frozen=True)
class EquivalentParams:
    """Aggregated drivetrain parameters of the torque balance.

    alpha_rl is the rotary-to-linear conversion ratio (rad/m); a_eq,
    b_eq, c_eq, d_eq are the equivalent inertia (kg m), damping (N s),
    stiffness (N) and load-to-torque ratio (1/m); k_l is the series
    combination of the four linear stiffnesses (N/m).
    """

    alpha_rl: float
    a_eq: float
    b_eq: float
    c_eq: float
    d_eq: float
    k_l: float


@dataclass(frozen=True)
class JointState:
    """4-state vector: linear position, linear velocity, i_q, i_d."""

    x_l: float
    v_l: float
    i_q: float
    i_d: float

    def as_tuple(self):
        return (self.x_l, self.v_l, self.i_q, self.i_d)


@dataclass(frozen=True)
class MotorInputs:
    """Voltage commands plus the q-current command used by the flux term."""

    u_q: float
    u_d: float
    i_q_ref: float


# ---------------------------------------------------------------------------
# Named actuator data.  Motor and drivetrain ratings follow the studied
# heavy-crane actuators; values without a published source (coupling and
# gearbox inertias, frictions, efficiencies, the stiffness chain) are
# plausible engineering choices kept deliberately soft on the stiffness
# side so that the elastic term stays small against the torque ratings.
# ---------------------------------------------------------------------------

def lift_params() -> EmlaParams:
    return EmlaParams(
        phi_pm=0.15, r_s=0.14, l_d=2.4e-3, l_q=2.4e-3, n_p=8,
        j_m=0.016, j_c=1.3e-3, j_gb=3.0e-3, m_bs=156.5,
        b_m=1.0e-4, b_bs=50.0,
        rho=1.0 / 7.0, lead=0.02, eta_gb=0.90,
        k_tau1=2.0e5, k_tau2=2.0e5, k_tau3=2.0e5,
        k_bearing=0.4, k_screw=0.4, k_nut=0.4, k_tube=0.4,
    )


def tilt_params() -> EmlaParams:
    return EmlaParams(
        phi_pm=0.13, r_s=0.16, l_d=3.2e-3, l_q=3.2e-3, n_p=8,
        j_m=0.0105, j_c=8.0e-4, j_gb=2.0e-3, m_bs=83.6,
        b_m=1.0e-4, b_bs=30.0,
        rho=1.0 / 5.0, lead=0.01, eta_gb=0.90,
        k_tau1=2.0e5, k_tau2=2.0e5, k_tau3=2.0e5,
        k_bearing=0.6, k_screw=0.6, k_nut=0.6, k_tube=0.6,
    )


def telescope_params() -> EmlaParams:
    return EmlaParams(
        phi_pm=0.12, r_s=0.35, l_d=12.0e-3, l_q=12.0e-3, n_p=6,
        j_m=8.5e-4, j_c=4.0e-4, j_gb=5.0e-4, m_bs=30.4,
        b_m=1.0e-4, b_bs=5.0,
        rho=1.0, lead=0.01, eta_gb=0.95,
        k_tau1=2.0e5, k_tau2=2.0e5, k_tau3=2.0e5,
        k_bearing=0.2, k_screw=0.2, k_nut=0.2, k_tube=0.2,
    )


PARAM_SETS = {
    "lift": lift_params,
    "tilt": tilt_params,
    "telescope": telescope_params,
}

# Drive ratings used by config defaults: nominal current (A), peak current
# (3x nominal, the usual servo peak rating), voltage bound (V), torque
# ceiling (N m) and rated linear speed (m/s).
RATINGS = {
    "lift": {"i_n": 29.5, "i_peak": 88.5, "u_n": 315.0, "tau_max": 190.0,
             "v_max": 0.136},
    "tilt": {"i_n": 18.5, "i_peak": 55.5, "u_n": 300.0, "tau_max": 129.0,
             "v_max": 0.100},
    "telescope": {"i_n": 7.6, "i_peak": 22.8, "u_n": 600.0, "tau_max": 32.0,
                  "v_max": 0.210},
}


def params_from_dict(d: dict) -> EmlaParams:
    """Build EmlaParams from a plain dict, converting suffixed units.

    Keys may be the SI field names, or carry a `_mh` (millihenry) or
    `_n_per_um` (newton per micrometre) suffix which is converted here,
    never inside the model.
    """
    known = {f.name for f in fields(EmlaParams)}
    out = {}
    for key, val in d.items():
        if key.endswith("_mh") and key[:-3] in known:
            out[key[:-3]] = float(val) * 1e-3
        elif key.endswith("_n_per_um") and key[:-9] in known:
            out[key[:-9]] = float(val) * 1e6
        elif key in known:
            out[key] = int(val) if key == "n_p" else float(val)
        else:
            raise ValueError(f"unknown parameter field: {key}")
    missing = known - set(out)
    if missing:
        raise ValueError(f"missing parameter fields: {sorted(missing)}")
    return EmlaParams(**out)
