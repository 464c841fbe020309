//! Enumerative nonlinear model predictive control over inverter switch
//! positions.
//!
//! Every candidate sequence of `Nu` switch positions is rolled out through the
//! forward-Euler motor model on a multi-rate prediction grid. The stage cost
//! penalises speed tracking error, the predicted integral error and switch
//! transitions. Candidates whose partial cost already exceeds the incumbent
//! are abandoned early; any predicted flux or current limit violation makes a
//! candidate infeasible.
//!
//! Ties are broken by enumeration order: candidate `i` encodes its sequence in
//! base 8 with the first control as the most significant digit, each digit an
//! index into [`SWITCH_STATES`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inverter::{switch_count, voltage, InverterParams, SwitchState, VoltageAlphaBeta, SWITCH_STATES};
use crate::motor::{derive_params, euler_step, DerivedParams, MotorParams, MotorState, PlantInput};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSegment {
    /// Model step size in seconds.
    pub step_duration: f64,
    pub repeat_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    /// Speed tracking weight.
    #[serde(rename = "Q")]
    pub q: f64,
    /// Integral-error weight.
    #[serde(rename = "P_E")]
    pub p_e: f64,
    /// Switch penalties, one per control move.
    #[serde(rename = "P_sw")]
    pub p_sw: Vec<f64>,
    /// Integral gain.
    #[serde(rename = "K_gain")]
    pub k_gain: f64,
    /// Error-sum freeze limit.
    #[serde(rename = "E_sat")]
    pub e_sat: f64,
    /// Control horizon.
    #[serde(rename = "Nu")]
    pub nu: usize,
    pub schedule: Vec<ScheduleSegment>,
    /// Secondary flux magnitude limit (Wb).
    pub lam_max: f64,
    /// Primary current magnitude limit (A).
    pub i_max: f64,
}

pub const DEFAULT_E_SAT: f64 = 1000.0;

/// Tuned configuration for sampling period `ts`: one control move, two steps
/// of `ts` followed by two steps of `4·ts`.
pub fn default_config(ts: f64) -> ControllerConfig {
    ControllerConfig {
        q: 1e6,
        p_e: 500.0,
        p_sw: vec![1.0],
        k_gain: 150.0,
        e_sat: DEFAULT_E_SAT,
        nu: 1,
        schedule: vec![
            ScheduleSegment {
                step_duration: ts,
                repeat_count: 2,
            },
            ScheduleSegment {
                step_duration: 4.0 * ts,
                repeat_count: 2,
            },
        ],
        lam_max: 0.45,
        i_max: 50.0,
    }
}

impl ControllerConfig {
    /// Number of prediction steps N.
    pub fn horizon(&self) -> usize {
        self.schedule.iter().map(|s| s.repeat_count).sum()
    }

    /// Step size of every prediction step, in order.
    pub fn step_durations(&self) -> Vec<f64> {
        self.schedule
            .iter()
            .flat_map(|s| std::iter::repeat_n(s.step_duration, s.repeat_count))
            .collect()
    }

    /// Time offsets (from now) at which each prediction step ends.
    pub fn step_times(&self) -> Vec<f64> {
        let mut t = 0.0;
        self.step_durations()
            .into_iter()
            .map(|dt| {
                t += dt;
                t
            })
            .collect()
    }

    pub fn prediction_interval(&self) -> f64 {
        self.schedule
            .iter()
            .map(|s| s.step_duration * s.repeat_count as f64)
            .sum()
    }

    pub fn candidate_count(&self) -> usize {
        8usize.pow(self.nu as u32)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        for (name, x) in [("Q", self.q), ("P_E", self.p_e), ("K_gain", self.k_gain)] {
            if !(x.is_finite() && x >= 0.0) {
                return bad(format!("{name} must be finite and non-negative, got {x}"));
            }
        }
        for (name, x) in [
            ("E_sat", self.e_sat),
            ("lam_max", self.lam_max),
            ("i_max", self.i_max),
        ] {
            if !(x > 0.0) {
                return bad(format!("{name} must be positive, got {x}"));
            }
        }
        if self.nu == 0 || self.nu > 4 {
            return bad(format!("Nu must be in 1..=4, got {}", self.nu));
        }
        if self.p_sw.len() != self.nu {
            return bad(format!(
                "P_sw needs {} entries (one per control move), got {}",
                self.nu,
                self.p_sw.len()
            ));
        }
        if let Some(p) = self.p_sw.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return bad(format!("P_sw entries must be positive, got {p}"));
        }
        if self.p_sw.windows(2).any(|w| w[0] <= w[1]) {
            return bad(format!("P_sw must be strictly decreasing, got {:?}", self.p_sw));
        }
        if self.schedule.is_empty() {
            return bad("schedule must not be empty".into());
        }
        for seg in &self.schedule {
            if !(seg.step_duration.is_finite() && seg.step_duration > 0.0) || seg.repeat_count == 0 {
                return bad(format!("invalid schedule segment {seg:?}"));
            }
        }
        if self.horizon() < self.nu {
            return bad(format!(
                "prediction horizon N = {} is shorter than Nu = {}",
                self.horizon(),
                self.nu
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerState {
    /// Accumulated tracking error.
    pub e: f64,
    /// Last applied control.
    pub u_prev: SwitchState,
}

impl Default for ControllerState {
    fn default() -> Self {
        ControllerState {
            e: 0.0,
            u_prev: SwitchState::ZERO,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSequence {
    pub controls: Vec<SwitchState>,
    /// `+∞` when some predicted step violates a limit.
    pub cost: f64,
}

/// Speed reference at the end of each prediction step.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePreview(pub Vec<f64>);

impl ReferencePreview {
    pub fn constant(w: f64, n: usize) -> Self {
        ReferencePreview(vec![w; n])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictedStep {
    pub state: MotorState,
    /// Integral error charged at this step.
    pub e_hat: f64,
    pub flux_violation: bool,
    pub current_violation: bool,
}

impl PredictedStep {
    pub fn violated(&self) -> bool {
        self.flux_violation || self.current_violation
    }
}

/// Integral-error update with the freeze rule: the step is discarded if it
/// would push |E| above `e_sat`.
#[inline]
pub fn integrate_error(e: f64, w: f64, v: f64, k_gain: f64, e_sat: f64) -> f64 {
    let next = e + k_gain * (w - v);
    if next.abs() > e_sat {
        e
    } else {
        next
    }
}

pub fn update_error(state: &ControllerState, w_now: f64, v_now: f64, cfg: &ControllerConfig) -> ControllerState {
    ControllerState {
        e: integrate_error(state.e, w_now, v_now, cfg.k_gain, cfg.e_sat),
        u_prev: state.u_prev,
    }
}

/// Cost charged at prediction step `step_index`. Switch penalties apply only
/// while the control is free (`step_index < Nu`).
#[inline]
pub fn stage_cost(
    v_hat: f64,
    w: f64,
    e_hat: f64,
    u: SwitchState,
    u_before: SwitchState,
    cfg: &ControllerConfig,
    step_index: usize,
) -> f64 {
    let dv = v_hat - w;
    let switching = if step_index < cfg.nu {
        cfg.p_sw[step_index] * f64::from(switch_count(u_before, u))
    } else {
        0.0
    };
    cfg.q * dv * dv + cfg.p_e * e_hat * e_hat + switching
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SearchMode {
    #[default]
    Sequential,
    /// Rolls candidates out concurrently, then replays the pruning rule over
    /// the precomputed costs. Results and counters are identical to
    /// [`SearchMode::Sequential`]. Without the `parallel` feature this runs on
    /// the calling thread.
    Parallel,
}

/// Work done by one search.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SearchStats {
    pub candidates: usize,
    /// Candidates whose cost was accumulated over the whole horizon.
    pub full_evaluations: usize,
    /// Stage-cost evaluations, including the one that triggered a break.
    pub stage_evaluations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub best: CandidateSequence,
    /// Enumeration index of `best`.
    pub index: usize,
    pub stats: SearchStats,
}

/// Every candidate sequence violated a limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AllInfeasible {
    pub stats: SearchStats,
}

pub type SearchOutcome = std::result::Result<SearchResult, AllInfeasible>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    /// Cost of the applied sequence; `+∞` when the infeasibility fallback ran.
    pub cost: f64,
    pub stats: SearchStats,
    pub infeasible: bool,
}

/// Outcome of one prediction step during a rollout.
#[derive(Debug, Clone, Copy)]
struct StepOutcome {
    cumulative: f64,
    violated: bool,
}

/// Prediction model: motor parameters as the controller believes them, the
/// DC-link voltage and the assumed load force.
#[derive(Debug, Clone)]
pub struct Enmpc {
    cfg: ControllerConfig,
    params: MotorParams,
    derived: DerivedParams,
    voltages: [VoltageAlphaBeta; 8],
    steps: Vec<f64>,
    assumed_load: f64,
    mode: SearchMode,
}

impl Enmpc {
    pub fn new(cfg: ControllerConfig, params: MotorParams, inverter: InverterParams) -> Result<Self> {
        cfg.validate()?;
        let derived = derive_params(&params)?;
        if !(inverter.vdc > 0.0) {
            return Err(Error::InvalidConfig(format!("vdc must be positive, got {}", inverter.vdc)));
        }
        Ok(Enmpc {
            steps: cfg.step_durations(),
            voltages: SWITCH_STATES.map(|u| voltage(u, &inverter)),
            cfg,
            params,
            derived,
            assumed_load: 0.0,
            mode: SearchMode::default(),
        })
    }

    pub fn with_mode(mut self, mode: SearchMode) -> Self {
        self.mode = mode;
        self
    }

    /// Load force the predictor assumes (0 unless set).
    pub fn with_assumed_load(mut self, f_load: f64) -> Self {
        self.assumed_load = f_load;
        self
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    /// Switch positions of candidate `index`, first move first.
    pub fn sequence(&self, index: usize) -> Vec<SwitchState> {
        (0..self.cfg.nu).map(|p| SWITCH_STATES[self.digit(index, p)]).collect()
    }

    #[inline]
    fn digit(&self, index: usize, position: usize) -> usize {
        (index / 8usize.pow((self.cfg.nu - 1 - position) as u32)) % 8
    }

    #[inline]
    fn model_step(&self, s: &MotorState, u_idx: usize, dt: f64) -> MotorState {
        let v = self.voltages[u_idx];
        let input = PlantInput {
            v_as: v.v_as,
            v_bs: v.v_bs,
            f_load: self.assumed_load,
        };
        euler_step(s, &input, dt, &self.params, &self.derived)
    }

    #[inline]
    fn violates(&self, s: &MotorState) -> (bool, bool) {
        (
            s.flux_magnitude() > self.cfg.lam_max,
            s.current_magnitude() > self.cfg.i_max,
        )
    }

    fn check_preview(&self, preview: &ReferencePreview) {
        assert_eq!(
            preview.0.len(),
            self.steps.len(),
            "reference preview must have one entry per prediction step"
        );
    }

    /// Predicted trajectory of an explicit control sequence. Controls beyond
    /// the sequence end are held.
    pub fn predict(&self, s0: &MotorState, e0: f64, controls: &[SwitchState], preview: &ReferencePreview) -> Vec<PredictedStep> {
        self.check_preview(preview);
        assert!(!controls.is_empty(), "at least one control is required");
        let mut s = *s0;
        let mut e = e0;
        let mut out = Vec::with_capacity(self.steps.len());
        for (j, &dt) in self.steps.iter().enumerate() {
            let u = controls[j.min(controls.len() - 1)];
            s = self.model_step(&s, u.index(), dt);
            let (flux_violation, current_violation) = self.violates(&s);
            out.push(PredictedStep {
                state: s,
                e_hat: e,
                flux_violation,
                current_violation,
            });
            e = integrate_error(e, preview.0[j], s.v, self.cfg.k_gain, self.cfg.e_sat);
        }
        out
    }

    /// Lazily rolls out candidate `index`. Stops after the first violating step.
    fn rollout<'a>(
        &'a self,
        s0: &MotorState,
        state: &ControllerState,
        preview: &'a ReferencePreview,
        index: usize,
    ) -> impl Iterator<Item = StepOutcome> + 'a {
        let mut s = *s0;
        let mut e = state.e;
        let mut before = state.u_prev;
        let mut acc = 0.0;
        let mut j = 0;
        let mut done = false;
        std::iter::from_fn(move || {
            if done || j == self.steps.len() {
                return None;
            }
            let u_idx = self.digit(index, j.min(self.cfg.nu - 1));
            let u = SWITCH_STATES[u_idx];
            s = self.model_step(&s, u_idx, self.steps[j]);
            let (fv, cv) = self.violates(&s);
            let w = preview.0[j];
            let out = if fv || cv {
                done = true;
                StepOutcome {
                    cumulative: f64::INFINITY,
                    violated: true,
                }
            } else {
                acc += stage_cost(s.v, w, e, u, before, &self.cfg, j);
                StepOutcome {
                    cumulative: acc,
                    violated: false,
                }
            };
            e = integrate_error(e, w, s.v, self.cfg.k_gain, self.cfg.e_sat);
            before = u;
            j += 1;
            Some(out)
        })
    }

    /// Full cost of candidate `index` (`+∞` if infeasible).
    pub fn sequence_cost(&self, s0: &MotorState, state: &ControllerState, preview: &ReferencePreview, index: usize) -> f64 {
        self.check_preview(preview);
        self.rollout(s0, state, preview, index)
            .last()
            .map_or(f64::INFINITY, |o| o.cumulative)
    }

    /// Evaluates every candidate over the full horizon and keeps the first
    /// strict minimum.
    pub fn search_exhaustive(&self, s0: &MotorState, state: &ControllerState, preview: &ReferencePreview) -> SearchOutcome {
        self.check_preview(preview);
        let n = self.cfg.candidate_count();
        let mut stats = SearchStats {
            candidates: n,
            ..Default::default()
        };
        let mut best: Option<(usize, f64)> = None;
        for i in 0..n {
            let mut cost = f64::INFINITY;
            for o in self.rollout(s0, state, preview, i) {
                stats.stage_evaluations += 1;
                cost = o.cumulative;
            }
            stats.full_evaluations += 1;
            if cost.is_finite() && best.is_none_or(|(_, c)| cost < c) {
                best = Some((i, cost));
            }
        }
        self.finish(best, stats)
    }

    /// Incremental search with early abandonment of dominated candidates.
    pub fn search_pruned(&self, s0: &MotorState, state: &ControllerState, preview: &ReferencePreview) -> SearchOutcome {
        self.check_preview(preview);
        match self.mode {
            SearchMode::Sequential => {
                let (best, stats) =
                    self.prune((0..self.cfg.candidate_count()).map(|i| self.rollout(s0, state, preview, i)));
                self.finish(best, stats)
            }
            SearchMode::Parallel => {
                let rollouts = self.rollouts_eager(s0, state, preview);
                let (best, stats) = self.prune(rollouts.iter().map(|r| r.iter().copied()));
                self.finish(best, stats)
            }
        }
    }

    #[cfg(feature = "parallel")]
    fn rollouts_eager(&self, s0: &MotorState, state: &ControllerState, preview: &ReferencePreview) -> Vec<Vec<StepOutcome>> {
        use rayon::prelude::*;
        (0..self.cfg.candidate_count())
            .into_par_iter()
            .map(|i| self.rollout(s0, state, preview, i).collect())
            .collect()
    }

    #[cfg(not(feature = "parallel"))]
    fn rollouts_eager(&self, s0: &MotorState, state: &ControllerState, preview: &ReferencePreview) -> Vec<Vec<StepOutcome>> {
        (0..self.cfg.candidate_count())
            .map(|i| self.rollout(s0, state, preview, i).collect())
            .collect()
    }

    /// The pruning rule over candidates in enumeration order. A candidate is
    /// dropped once its partial cost strictly exceeds the incumbent, and
    /// replaces the incumbent only with a strictly lower full cost.
    fn prune<R, I>(&self, rollouts: R) -> (Option<(usize, f64)>, SearchStats)
    where
        R: Iterator<Item = I>,
        I: Iterator<Item = StepOutcome>,
    {
        let horizon = self.steps.len();
        let mut stats = SearchStats::default();
        let mut j_opt = f64::INFINITY;
        let mut best = None;
        for (i, rollout) in rollouts.enumerate() {
            stats.candidates += 1;
            for (j, o) in rollout.enumerate() {
                stats.stage_evaluations += 1;
                if o.violated || o.cumulative > j_opt {
                    break;
                }
                if j + 1 == horizon {
                    stats.full_evaluations += 1;
                    if o.cumulative < j_opt {
                        j_opt = o.cumulative;
                        best = Some((i, o.cumulative));
                    }
                }
            }
        }
        (best, stats)
    }

    fn finish(&self, best: Option<(usize, f64)>, stats: SearchStats) -> SearchOutcome {
        match best {
            Some((index, cost)) => Ok(SearchResult {
                best: CandidateSequence {
                    controls: self.sequence(index),
                    cost,
                },
                index,
                stats,
            }),
            None => Err(AllInfeasible { stats }),
        }
    }

    /// Largest relative limit excess along the held-control prediction of
    /// candidate `index` (≤ 0 when feasible).
    pub fn max_relative_violation(&self, s0: &MotorState, e0: f64, preview: &ReferencePreview, index: usize) -> f64 {
        self.predict(s0, e0, &self.sequence(index), preview)
            .iter()
            .map(|p| {
                let flux = p.state.flux_magnitude() / self.cfg.lam_max - 1.0;
                let current = p.state.current_magnitude() / self.cfg.i_max - 1.0;
                flux.max(current)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// One receding-horizon step: integrate the tracking error, search, and
    /// apply the first control of the winner.
    ///
    /// `measured` carries measured currents and speed with estimated secondary
    /// flux. If every candidate is infeasible, the candidate with the smallest
    /// worst-case relative limit excess is applied instead.
    pub fn control_step(
        &self,
        measured: &MotorState,
        w_now: f64,
        preview: &ReferencePreview,
        state: &ControllerState,
    ) -> (SwitchState, ControllerState, StepDiagnostics) {
        let updated = update_error(state, w_now, measured.v, &self.cfg);
        let (u, diag) = match self.search_pruned(measured, &updated, preview) {
            Ok(r) => (
                r.best.controls[0],
                StepDiagnostics {
                    cost: r.best.cost,
                    stats: r.stats,
                    infeasible: false,
                },
            ),
            Err(AllInfeasible { stats }) => {
                let mut pick = (0, f64::INFINITY);
                for i in 0..self.cfg.candidate_count() {
                    let excess = self.max_relative_violation(measured, updated.e, preview, i);
                    if excess < pick.1 {
                        pick = (i, excess);
                    }
                }
                log::warn!(
                    "all {} candidates violate limits; applying least-violating candidate {} (excess {:.4})",
                    stats.candidates,
                    pick.0,
                    pick.1
                );
                (
                    SWITCH_STATES[self.digit(pick.0, 0)],
                    StepDiagnostics {
                        cost: f64::INFINITY,
                        stats,
                        infeasible: true,
                    },
                )
            }
        };
        (
            u,
            ControllerState {
                e: updated.e,
                u_prev: u,
            },
            diag,
        )
    }
}
