//! Linear induction motor model in the stationary α–β frame.
//!
//! The state is the primary current pair, the secondary flux pair and the
//! mover velocity. The same forward-Euler step drives both the simulated plant
//! and the controller's prediction model.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Electrical and mechanical constants of the machine (SI units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotorParams {
    /// Primary winding resistance per phase.
    #[serde(rename = "Rs")]
    pub rs: f64,
    /// Secondary resistance per phase.
    #[serde(rename = "Rr")]
    pub rr: f64,
    /// Primary inductance per phase.
    #[serde(rename = "Ls")]
    pub ls: f64,
    /// Secondary inductance per phase.
    #[serde(rename = "Lr")]
    pub lr: f64,
    /// Magnetizing inductance per phase.
    #[serde(rename = "Lm")]
    pub lm: f64,
    /// Pole pairs.
    pub np: u32,
    /// Pole pitch in metres.
    #[serde(rename = "h")]
    pub pole_pitch: f64,
    /// Mover mass in kilograms.
    #[serde(rename = "M")]
    pub mass: f64,
    /// Viscous friction and iron-loss coefficient in kg/s.
    #[serde(rename = "D")]
    pub damping: f64,
    #[serde(rename = "Vrated")]
    pub v_rated: f64,
    #[serde(rename = "Irated")]
    pub i_rated: f64,
    pub flux_rated: f64,
}

impl MotorParams {
    /// The 3 kW, 8-pole, 180 V laboratory motor.
    pub fn nominal() -> Self {
        MotorParams {
            rs: 5.3685,
            rr: 3.5315,
            ls: 0.02846,
            lr: 0.02846,
            lm: 0.02419,
            np: 4,
            pole_pitch: 0.027,
            mass: 2.78,
            damping: 36.0455,
            v_rated: 180.0,
            i_rated: 14.2,
            flux_rated: 0.056,
        }
    }

    /// Mechanical time constant M/D.
    pub fn mechanical_time_constant(&self) -> f64 {
        self.mass / self.damping
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("Rs", self.rs),
            ("Rr", self.rr),
            ("Ls", self.ls),
            ("Lr", self.lr),
            ("Lm", self.lm),
            ("h", self.pole_pitch),
            ("M", self.mass),
            ("D", self.damping),
            ("Vrated", self.v_rated),
            ("Irated", self.i_rated),
            ("flux_rated", self.flux_rated),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParams(format!(
                    "{name} must be finite and positive, got {value}"
                )));
            }
        }
        if self.np == 0 {
            return Err(Error::InvalidParams("np must be at least 1".into()));
        }
        if self.lm * self.lm >= self.ls * self.lr {
            return Err(Error::InvalidParams(format!(
                "Lm^2 = {} must be below Ls*Lr = {}",
                self.lm * self.lm,
                self.ls * self.lr
            )));
        }
        Ok(())
    }
}

/// Constants derived from [`MotorParams`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedParams {
    /// Leakage coefficient 1 − Lm²/(Ls·Lr).
    pub sigma: f64,
    /// Secondary time constant Lr/Rr.
    pub tr: f64,
    /// Force constant 3·np·Lm·π/(2·Lr·h).
    pub kf: f64,
}

pub fn derive_params(p: &MotorParams) -> Result<DerivedParams> {
    p.validate()?;
    let np = f64::from(p.np);
    Ok(DerivedParams {
        sigma: 1.0 - p.lm * p.lm / (p.ls * p.lr),
        tr: p.lr / p.rr,
        kf: 3.0 * np * p.lm * PI / (2.0 * p.lr * p.pole_pitch),
    })
}

/// Continuous state of the machine.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotorState {
    pub i_as: f64,
    pub i_bs: f64,
    pub lam_ar: f64,
    pub lam_br: f64,
    pub v: f64,
}

impl MotorState {
    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|x| x.is_finite())
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.i_as, self.i_bs, self.lam_ar, self.lam_br, self.v]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        MotorState {
            i_as: a[0],
            i_bs: a[1],
            lam_ar: a[2],
            lam_br: a[3],
            v: a[4],
        }
    }

    pub fn current_magnitude(&self) -> f64 {
        self.i_as.hypot(self.i_bs)
    }

    pub fn flux_magnitude(&self) -> f64 {
        self.lam_ar.hypot(self.lam_br)
    }
}

/// Time derivative of [`MotorState`]; same layout, per-second units.
pub type StateRate = MotorState;

/// Primary voltages and the external load force.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PlantInput {
    pub v_as: f64,
    pub v_bs: f64,
    pub f_load: f64,
}

/// Electromagnetic thrust kf·(λαr·iβs − λβr·iαs).
#[inline]
pub fn electromagnetic_force(s: &MotorState, d: &DerivedParams) -> f64 {
    d.kf * (s.lam_ar * s.i_bs - s.lam_br * s.i_as)
}

#[inline]
pub fn derivative(
    s: &MotorState,
    input: &PlantInput,
    p: &MotorParams,
    d: &DerivedParams,
) -> StateRate {
    let sigma_ls = d.sigma * p.ls;
    let current_decay = p.rs / sigma_ls + (1.0 - d.sigma) / (d.sigma * d.tr);
    let flux_to_current = p.lm / (sigma_ls * p.lr * d.tr);
    let np_pi_h = f64::from(p.np) * PI / p.pole_pitch;
    let speed_to_current = np_pi_h * p.lm / (sigma_ls * p.lr);
    let omega = np_pi_h * s.v;

    let di_as = -current_decay * s.i_as
        + flux_to_current * s.lam_ar
        + speed_to_current * s.v * s.lam_br
        + input.v_as / sigma_ls;
    let di_bs = -current_decay * s.i_bs - speed_to_current * s.v * s.lam_ar
        + flux_to_current * s.lam_br
        + input.v_bs / sigma_ls;
    let dlam_ar = p.lm / d.tr * s.i_as - s.lam_ar / d.tr - omega * s.lam_br;
    let dlam_br = p.lm / d.tr * s.i_bs + omega * s.lam_ar - s.lam_br / d.tr;
    let fe = electromagnetic_force(s, d);
    let dv = fe / p.mass - p.damping / p.mass * s.v - input.f_load / p.mass;

    MotorState {
        i_as: di_as,
        i_bs: di_bs,
        lam_ar: dlam_ar,
        lam_br: dlam_br,
        v: dv,
    }
}

/// One explicit forward-Euler step. Non-finite results are returned as-is;
/// callers check [`MotorState::is_finite`].
#[inline]
pub fn euler_step(
    s: &MotorState,
    input: &PlantInput,
    dt: f64,
    p: &MotorParams,
    d: &DerivedParams,
) -> MotorState {
    let r = derivative(s, input, p, d);
    MotorState {
        i_as: s.i_as + dt * r.i_as,
        i_bs: s.i_bs + dt * r.i_bs,
        lam_ar: s.lam_ar + dt * r.lam_ar,
        lam_br: s.lam_br + dt * r.lam_br,
        v: s.v + dt * r.v,
    }
}

/// `substeps` Euler steps of `dt / substeps` with the input held.
pub fn simulate_fine(
    s: &MotorState,
    input: &PlantInput,
    dt: f64,
    substeps: usize,
    p: &MotorParams,
    d: &DerivedParams,
) -> Result<MotorState> {
    if substeps == 0 {
        return Err(Error::InvalidConfig("substeps must be at least 1".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidConfig(format!("dt must be positive, got {dt}")));
    }
    let h = dt / substeps as f64;
    let mut x = *s;
    for _ in 0..substeps {
        x = euler_step(&x, input, h, p, d);
    }
    if !x.is_finite() {
        return Err(Error::NonFinite {
            t: dt,
            step: substeps,
            state: x,
        });
    }
    Ok(x)
}
