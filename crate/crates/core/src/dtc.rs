//! Classical direct thrust (torque) control with a PI outer speed loop.
//!
//! Two-level flux and three-level force hysteresis comparators select a
//! voltage vector from the Takahashi–Noguchi switching table, indexed by the
//! 60° sector of the stator flux.

use std::f64::consts::{FRAC_PI_3, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inverter::SwitchState;
use crate::motor::{derive_params, MotorParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DtcConfig {
    /// Proportional gain, N per m/s.
    #[serde(rename = "Kp")]
    pub kp: f64,
    /// Integral gain, N per m.
    #[serde(rename = "Ki")]
    pub ki: f64,
    /// Stator flux magnitude reference (Wb).
    pub flux_ref: f64,
    /// Flux comparator half-width (Wb).
    pub flux_band: f64,
    /// Force comparator half-width (N).
    pub force_band: f64,
    /// PI output clamp (N).
    pub force_limit: f64,
}

impl DtcConfig {
    /// Critically damped speed loop on the mechanical model with roughly
    /// 0.1 s settling.
    pub fn for_motor(p: &MotorParams) -> Result<Self> {
        let d = derive_params(p)?;
        let omega_n = 58.0;
        let nominal_force = d.kf * p.i_rated * p.flux_rated;
        let flux_ref = 0.2;
        Ok(DtcConfig {
            kp: 2.0 * omega_n * p.mass - p.damping,
            ki: p.mass * omega_n * omega_n,
            flux_ref,
            flux_band: 0.02 * flux_ref,
            force_band: 0.05 * nominal_force,
            force_limit: 2.0 * nominal_force,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("Kp", self.kp >= 0.0),
            ("Ki", self.ki >= 0.0),
            ("flux_ref", self.flux_ref > 0.0),
            ("flux_band", self.flux_band > 0.0),
            ("force_band", self.force_band > 0.0),
            ("force_limit", self.force_limit > 0.0),
        ];
        for (name, ok) in checks {
            if !ok {
                return Err(Error::InvalidConfig(format!("DTC {name} out of range")));
            }
        }
        if self.flux_band >= self.flux_ref {
            return Err(Error::InvalidConfig("DTC flux_band must be below flux_ref".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtcState {
    /// ∫(w − v) dt in metres.
    pub pi_integral: f64,
    /// 1 = increase flux, 0 = decrease.
    pub flux_comparator: u8,
    /// +1 = increase force, 0 = hold, −1 = decrease.
    pub force_comparator: i8,
}

impl Default for DtcState {
    fn default() -> Self {
        DtcState {
            pi_integral: 0.0,
            flux_comparator: 1,
            force_comparator: 0,
        }
    }
}

/// Active vectors by angle: entry k points at k·60°.
const ACTIVE: [SwitchState; 6] = [
    SwitchState::new(1, 0, 0),
    SwitchState::new(1, 0, 1),
    SwitchState::new(0, 0, 1),
    SwitchState::new(0, 1, 1),
    SwitchState::new(0, 1, 0),
    SwitchState::new(1, 1, 0),
];

const Z0: SwitchState = SwitchState::ZERO;
const Z7: SwitchState = SwitchState::ONES;

/// `SWITCHING_TABLE[flux][force + 1][sector - 1]`.
pub const SWITCHING_TABLE: [[[SwitchState; 6]; 3]; 2] = [
    // decrease flux
    [
        [ACTIVE[4], ACTIVE[5], ACTIVE[0], ACTIVE[1], ACTIVE[2], ACTIVE[3]],
        [Z0, Z7, Z0, Z7, Z0, Z7],
        [ACTIVE[2], ACTIVE[3], ACTIVE[4], ACTIVE[5], ACTIVE[0], ACTIVE[1]],
    ],
    // increase flux
    [
        [ACTIVE[5], ACTIVE[0], ACTIVE[1], ACTIVE[2], ACTIVE[3], ACTIVE[4]],
        [Z7, Z0, Z7, Z0, Z7, Z0],
        [ACTIVE[1], ACTIVE[2], ACTIVE[3], ACTIVE[4], ACTIVE[5], ACTIVE[0]],
    ],
];

pub fn table_lookup(flux_comparator: u8, force_comparator: i8, sector: u8) -> SwitchState {
    SWITCHING_TABLE[usize::from(flux_comparator.min(1))][(force_comparator.clamp(-1, 1) + 1) as usize]
        [usize::from(sector - 1)]
}

/// 60° sector of the flux angle, 1..=6. Sector 1 spans (−30°, 30°]; angles on
/// a boundary go to the lower sector. Zero flux maps to sector 1.
pub fn sector(lam_as: f64, lam_bs: f64) -> u8 {
    if lam_as == 0.0 && lam_bs == 0.0 {
        return 1;
    }
    let mut a = lam_bs.atan2(lam_as);
    // shift into (−30°, 330°]
    if a <= -PI / 6.0 {
        a += 2.0 * PI;
    }
    let s = ((a + PI / 6.0) / FRAC_PI_3).ceil();
    s.clamp(1.0, 6.0) as u8
}

/// Inputs the DTC consumes each sampling period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtcInputs {
    pub speed: f64,
    pub lam_as: f64,
    pub lam_bs: f64,
    pub force: f64,
    pub w_now: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtcOutput {
    pub u: SwitchState,
    pub force_ref: f64,
    pub state: DtcState,
}

pub fn dtc_step(inputs: &DtcInputs, state: &DtcState, cfg: &DtcConfig, dt: f64) -> DtcOutput {
    let err = inputs.w_now - inputs.speed;

    let integral_cap = if cfg.ki > 0.0 { cfg.force_limit / cfg.ki } else { 0.0 };
    let pi_integral = (state.pi_integral + err * dt).clamp(-integral_cap, integral_cap);
    let force_ref = (cfg.kp * err + cfg.ki * pi_integral).clamp(-cfg.force_limit, cfg.force_limit);

    let flux_err = cfg.flux_ref - inputs.lam_as.hypot(inputs.lam_bs);
    let flux_comparator = if flux_err > cfg.flux_band {
        1
    } else if flux_err < -cfg.flux_band {
        0
    } else {
        state.flux_comparator
    };

    let force_err = force_ref - inputs.force;
    let force_comparator = if force_err > cfg.force_band {
        1
    } else if force_err < -cfg.force_band {
        -1
    } else {
        match state.force_comparator {
            1 if force_err <= 0.0 => 0,
            -1 if force_err >= 0.0 => 0,
            c => c,
        }
    };

    let u = table_lookup(flux_comparator, force_comparator, sector(inputs.lam_as, inputs.lam_bs));
    DtcOutput {
        u,
        force_ref,
        state: DtcState {
            pi_integral,
            flux_comparator,
            force_comparator,
        },
    }
}
