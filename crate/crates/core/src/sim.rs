//! Closed-loop driver: plant, flux estimator and controller at a fixed
//! sampling period.
//!
//! Each tick samples the references, estimates the secondary flux from the
//! integrated primary flux, asks the controller for a switch position, records
//! the tick, then advances the plant and the estimator by one Euler step.

use std::time::Instant;

use crate::dtc::{dtc_step, DtcConfig, DtcInputs, DtcState};
use crate::enmpc::{ControllerState, Enmpc, ReferencePreview, SearchMode};
use crate::error::{Error, Result};
use crate::estimator::EstimatorState;
use crate::inverter::{inverse_clarke, voltage, SwitchState};
use crate::metrics::{compute_metrics, Metrics};
use crate::motor::{derive_params, electromagnetic_force, euler_step, MotorState, PlantInput};
use crate::scenario::{ControllerSpec, Scenario};
use crate::trace::{Trace, TraceRecord};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub mode: SearchMode,
    /// Record controller wall time per tick. Makes traces non-reproducible.
    pub timing: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Trace,
    pub metrics: Metrics,
    /// Leg transitions counted by the driver while applying controls.
    pub switch_transitions: u64,
    /// Ticks on which every ENMPC candidate was infeasible.
    pub infeasible_ticks: usize,
}

enum Controller {
    Enmpc {
        ctl: Box<Enmpc>,
        state: ControllerState,
        step_times: Vec<f64>,
    },
    Dtc {
        cfg: DtcConfig,
        state: DtcState,
    },
}

struct Decision {
    u: SwitchState,
    e: f64,
    cost: f64,
    evaluations: u32,
    infeasible: bool,
}

pub fn run(sc: &Scenario) -> Result<(Trace, Metrics)> {
    let out = run_with(sc, RunOptions::default())?;
    Ok((out.trace, out.metrics))
}

pub fn run_with(sc: &Scenario, opts: RunOptions) -> Result<RunOutput> {
    sc.validate()?;
    let plant = sc.motor;
    let plant_d = derive_params(&plant)?;
    let model = sc.controller_motor;
    let model_d = derive_params(&model)?;
    let inverter = sc.inverter();

    let mut controller = match &sc.controller {
        ControllerSpec::Enmpc(cfg) => Controller::Enmpc {
            step_times: cfg.step_times(),
            ctl: Box::new(Enmpc::new(cfg.clone(), model, inverter)?.with_mode(opts.mode)),
            state: ControllerState::default(),
        },
        ControllerSpec::Dtc(cfg) => Controller::Dtc {
            cfg: *cfg,
            state: DtcState::default(),
        },
    };

    let steps = sc.steps();
    let mut s = sc.initial_state;
    let mut est = EstimatorState::consistent_with(&s, &model);
    let mut records = Vec::with_capacity(steps + 1);
    let mut prev_u: Option<SwitchState> = None;
    let mut switch_transitions = 0u64;
    let mut infeasible_ticks = 0usize;

    for k in 0..=steps {
        let t = sc.time(k);
        let w = sc.speed_at(t);
        let f_load = sc.load_at(t);
        let flux = est.secondary_flux(s.i_as, s.i_bs, &model, &model_d);
        let measured = MotorState {
            lam_ar: flux.lam_ar_hat,
            lam_br: flux.lam_br_hat,
            ..s
        };

        let started = opts.timing.then(Instant::now);
        let decision = match &mut controller {
            Controller::Enmpc { ctl, state, step_times } => {
                let preview = ReferencePreview(step_times.iter().map(|dt| sc.speed_at(t + dt)).collect());
                let (u, next, diag) = ctl.control_step(&measured, w, &preview, state);
                *state = next;
                Decision {
                    u,
                    e: next.e,
                    cost: diag.cost,
                    evaluations: diag.stats.stage_evaluations as u32,
                    infeasible: diag.infeasible,
                }
            }
            Controller::Dtc { cfg, state } => {
                let out = dtc_step(
                    &DtcInputs {
                        speed: s.v,
                        lam_as: est.lam_as,
                        lam_bs: est.lam_bs,
                        force: electromagnetic_force(&measured, &model_d),
                        w_now: w,
                    },
                    state,
                    cfg,
                    sc.ts,
                );
                *state = out.state;
                Decision {
                    u: out.u,
                    e: out.state.pi_integral,
                    cost: 0.0,
                    evaluations: 0,
                    infeasible: false,
                }
            }
        };
        let compute_us = started.map_or(0.0, |t0| t0.elapsed().as_secs_f64() * 1e6);
        if decision.infeasible {
            infeasible_ticks += 1;
        }
        if let Some(p) = prev_u {
            switch_transitions += u64::from(crate::inverter::switch_count(p, decision.u));
        }
        prev_u = Some(decision.u);

        let [i_a, i_b, i_c] = inverse_clarke(s.i_as, s.i_bs);
        let [u1, u2, u3] = decision.u.legs();
        records.push(TraceRecord {
            t,
            w,
            v: s.v,
            i_as: s.i_as,
            i_bs: s.i_bs,
            i_a,
            i_b,
            i_c,
            lam_ar: s.lam_ar,
            lam_br: s.lam_br,
            lam_ar_hat: flux.lam_ar_hat,
            lam_br_hat: flux.lam_br_hat,
            fe: electromagnetic_force(&s, &plant_d),
            f_load,
            u1,
            u2,
            u3,
            e: decision.e,
            cost: decision.cost,
            evaluations: decision.evaluations,
            compute_us,
        });

        if k == steps {
            break;
        }
        let v = voltage(decision.u, &inverter);
        est = est.update(&v, s.i_as, s.i_bs, model.rs, sc.ts);
        s = euler_step(
            &s,
            &PlantInput {
                v_as: v.v_as,
                v_bs: v.v_bs,
                f_load,
            },
            sc.ts,
            &plant,
            &plant_d,
        );
        if !s.is_finite() {
            return Err(Error::NonFinite {
                t: sc.time(k + 1),
                step: k + 1,
                state: s,
            });
        }
    }

    let trace = Trace { records };
    let metrics = compute_metrics(&trace, sc);
    Ok(RunOutput {
        trace,
        metrics,
        switch_transitions,
        infeasible_ticks,
    })
}

/// Runs independent scenarios, concurrently when the `parallel` feature is on.
/// Results keep the input order.
pub fn run_many(scenarios: &[Scenario], opts: RunOptions) -> Vec<Result<RunOutput>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        scenarios.par_iter().map(|sc| run_with(sc, opts)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        scenarios.iter().map(|sc| run_with(sc, opts)).collect()
    }
}

/// Sequential counterpart of [`run_many`], kept for benchmarking.
pub fn run_many_sequential(scenarios: &[Scenario], opts: RunOptions) -> Vec<Result<RunOutput>> {
    scenarios.iter().map(|sc| run_with(sc, opts)).collect()
}
