//! Secondary-flux estimation by open-loop integration of the primary
//! back-EMF.

use crate::inverter::VoltageAlphaBeta;
use crate::motor::{DerivedParams, MotorParams, MotorState};

/// Integrated primary (stator) flux.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EstimatorState {
    pub lam_as: f64,
    pub lam_bs: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FluxEstimate {
    pub lam_ar_hat: f64,
    pub lam_br_hat: f64,
}

impl EstimatorState {
    /// Primary flux consistent with a plant state: σ·Ls·i + (Lm/Lr)·λr.
    pub fn consistent_with(s: &MotorState, p: &MotorParams) -> Self {
        let sigma_ls = p.ls - p.lm * p.lm / p.lr;
        EstimatorState {
            lam_as: sigma_ls * s.i_as + p.lm / p.lr * s.lam_ar,
            lam_bs: sigma_ls * s.i_bs + p.lm / p.lr * s.lam_br,
        }
    }

    /// Rectangular step of ∫(V − i·Rs) dt.
    pub fn update(&self, v: &VoltageAlphaBeta, i_as: f64, i_bs: f64, rs: f64, dt: f64) -> Self {
        EstimatorState {
            lam_as: self.lam_as + dt * (v.v_as - i_as * rs),
            lam_bs: self.lam_bs + dt * (v.v_bs - i_bs * rs),
        }
    }

    /// λr = (Lr/Lm)(λs − σ·Ls·i) per axis.
    pub fn secondary_flux(
        &self,
        i_as: f64,
        i_bs: f64,
        p: &MotorParams,
        d: &DerivedParams,
    ) -> FluxEstimate {
        let ratio = p.lr / p.lm;
        let leak = d.sigma * p.ls;
        FluxEstimate {
            lam_ar_hat: ratio * (self.lam_as - leak * i_as),
            lam_br_hat: ratio * (self.lam_bs - leak * i_bs),
        }
    }

    pub fn magnitude(&self) -> f64 {
        self.lam_as.hypot(self.lam_bs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inverter::{voltage, InverterParams, SWITCH_STATES};
    use crate::motor::{derive_params, euler_step, PlantInput};

    #[test]
    fn zero_integrand_keeps_state() {
        let e = EstimatorState {
            lam_as: 0.1,
            lam_bs: -0.2,
        };
        let v = VoltageAlphaBeta {
            v_as: 2.0 * 5.0,
            v_bs: -3.0 * 5.0,
        };
        assert_eq!(e.update(&v, 2.0, -3.0, 5.0, 1e-4), e);
    }

    #[test]
    fn single_rectangle() {
        let e = EstimatorState::default().update(
            &VoltageAlphaBeta {
                v_as: 100.0,
                v_bs: 0.0,
            },
            0.0,
            0.0,
            5.3685,
            1e-4,
        );
        assert!((e.lam_as - 0.01).abs() < 1e-15);
        assert_eq!(e.lam_bs, 0.0);
    }

    #[test]
    fn secondary_flux_cases() {
        let p = MotorParams::nominal();
        let d = derive_params(&p).unwrap();
        let (ia, ib) = (3.0, -1.5);
        let e = EstimatorState {
            lam_as: d.sigma * p.ls * ia,
            lam_bs: d.sigma * p.ls * ib,
        };
        let f = e.secondary_flux(ia, ib, &p, &d);
        assert!(f.lam_ar_hat.abs() < 1e-15 && f.lam_br_hat.abs() < 1e-15);

        let e = EstimatorState {
            lam_as: 0.2,
            lam_bs: 0.1,
        };
        let f = e.secondary_flux(0.0, 0.0, &p, &d);
        assert!((f.lam_ar_hat - p.lr / p.lm * 0.2).abs() < 1e-15);
        assert!((f.lam_br_hat - p.lr / p.lm * 0.1).abs() < 1e-15);
    }

    #[test]
    fn consistent_state_inverts_flux_estimate() {
        let p = MotorParams::nominal();
        let d = derive_params(&p).unwrap();
        let s = MotorState {
            i_as: 4.0,
            i_bs: -7.0,
            lam_ar: 0.12,
            lam_br: 0.05,
            v: 1.0,
        };
        let f = EstimatorState::consistent_with(&s, &p).secondary_flux(s.i_as, s.i_bs, &p, &d);
        assert!((f.lam_ar_hat - s.lam_ar).abs() < 1e-12);
        assert!((f.lam_br_hat - s.lam_br).abs() < 1e-12);
    }

    #[test]
    fn tracks_plant_stator_flux_over_50ms() {
        // Oracle: the plant's own stator flux σ·Ls·i + (Lm/Lr)·λr.
        let p = MotorParams::nominal();
        let d = derive_params(&p).unwrap();
        let inv = InverterParams::default();
        let dt = 1e-4;
        let mut s = MotorState::default();
        let mut est = EstimatorState::default();
        for k in 0..500 {
            // Slowly rotating six-step drive.
            let u = SWITCH_STATES[[0, 5, 2, 4, 1, 3][(k / 40) % 6]];
            let vab = voltage(u, &inv);
            let input = PlantInput {
                v_as: vab.v_as,
                v_bs: vab.v_bs,
                f_load: 0.0,
            };
            est = est.update(&vab, s.i_as, s.i_bs, p.rs, dt);
            s = euler_step(&s, &input, dt, &p, &d);
            let truth = EstimatorState::consistent_with(&s, &p);
            let scale = truth.magnitude().max(1e-3);
            assert!((est.lam_as - truth.lam_as).abs() <= 0.01 * scale, "step {k}");
            assert!((est.lam_bs - truth.lam_bs).abs() <= 0.01 * scale, "step {k}");
        }
    }
}
