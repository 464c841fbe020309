//! Aggregate figures computed from a finished trace.
//!
//! Steady segments are the last 20% of every interval between consecutive
//! profile events (slope changes of the reference, load changes) plus the
//! last 20% of the run.

use std::fmt::Write as _;

use serde::Serialize;

use crate::inverter::switch_count;
use crate::scenario::Scenario;
use crate::trace::Trace;

/// Settling band around the reference, as a fraction of |w|.
pub const SETTLING_BAND: f64 = 0.01;
/// Fraction of each inter-event interval treated as steady.
pub const STEADY_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    /// Leg transitions summed over the three legs, per second of simulated time.
    pub transitions_per_second: f64,
    pub total_transitions: u64,
    pub tracking_rmse: f64,
    /// Worst settling time over load steps (0 with no load step).
    pub settling_time: f64,
    /// Peak-to-peak thrust, worst steady segment.
    pub force_ripple: f64,
    /// Largest plant secondary-flux magnitude.
    pub max_flux: f64,
    /// Largest plant primary-current magnitude.
    pub max_current: f64,
    pub mean_compute_us: f64,
    pub max_compute_us: f64,
    #[serde(skip)]
    pub settling_times: Vec<f64>,
}

impl Metrics {
    /// `key=value` lines.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.fields() {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    /// Header line plus one CSV row.
    pub fn to_csv(&self) -> String {
        let (keys, values): (Vec<_>, Vec<_>) = self.fields().into_iter().map(|(k, v)| (k, v.to_string())).unzip();
        format!("{}\n{}\n", keys.join(","), values.join(","))
    }

    fn fields(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("transitions_per_second", self.transitions_per_second),
            ("total_transitions", self.total_transitions as f64),
            ("tracking_rmse", self.tracking_rmse),
            ("settling_time", self.settling_time),
            ("force_ripple", self.force_ripple),
            ("max_flux", self.max_flux),
            ("max_current", self.max_current),
            ("mean_compute_us", self.mean_compute_us),
            ("max_compute_us", self.max_compute_us),
        ]
    }
}

/// Half-open steady windows `[start, end)`; the final window includes `end`.
pub fn steady_windows(sc: &Scenario) -> Vec<(f64, f64)> {
    let mut bounds = vec![0.0];
    bounds.extend(sc.events());
    bounds.push(sc.duration);
    bounds
        .windows(2)
        .map(|b| (b[1] - STEADY_FRACTION * (b[1] - b[0]), b[1]))
        .collect()
}

fn in_window(t: f64, (start, end): (f64, f64), last: bool) -> bool {
    t >= start && (t < end || (last && t <= end))
}

fn band(w: f64) -> f64 {
    (SETTLING_BAND * w.abs()).max(1e-6)
}

/// Time from `event` until the speed enters the settling band for good,
/// searching until `until`. Zero if it never leaves; `+∞` if it is still
/// outside at `until`.
pub fn settling_after(tr: &Trace, event: f64, until: f64) -> f64 {
    let mut settled_at = Some(event);
    for r in tr.records.iter().filter(|r| r.t >= event && r.t <= until) {
        if (r.v - r.w).abs() > band(r.w) {
            settled_at = None;
        } else if settled_at.is_none() {
            settled_at = Some(r.t);
        }
    }
    settled_at.map_or(f64::INFINITY, |t| t - event)
}

pub fn compute_metrics(tr: &Trace, sc: &Scenario) -> Metrics {
    let total_transitions: u64 = tr
        .records
        .windows(2)
        .map(|p| u64::from(switch_count(p[0].switch_state(), p[1].switch_state())))
        .sum();

    let windows = steady_windows(sc);
    let mut sq = 0.0;
    let mut count = 0usize;
    let mut force_ripple: f64 = 0.0;
    for (i, &win) in windows.iter().enumerate() {
        let last = i + 1 == windows.len();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for r in tr.records.iter().filter(|r| in_window(r.t, win, last)) {
            sq += (r.v - r.w).powi(2);
            count += 1;
            lo = lo.min(r.fe);
            hi = hi.max(r.fe);
        }
        if hi >= lo {
            force_ripple = force_ripple.max(hi - lo);
        }
    }

    let events = sc.events();
    let settling_times: Vec<f64> = sc
        .load_events()
        .into_iter()
        .map(|te| {
            let until = events.iter().copied().find(|&e| e > te).unwrap_or(sc.duration);
            settling_after(tr, te, until)
        })
        .collect();

    let n = tr.records.len().max(1) as f64;
    Metrics {
        transitions_per_second: total_transitions as f64 / sc.duration,
        total_transitions,
        tracking_rmse: if count > 0 { (sq / count as f64).sqrt() } else { 0.0 },
        settling_time: settling_times.iter().copied().fold(0.0, f64::max),
        force_ripple,
        max_flux: tr.records.iter().map(|r| r.flux_magnitude()).fold(0.0, f64::max),
        max_current: tr.records.iter().map(|r| r.current_magnitude()).fold(0.0, f64::max),
        mean_compute_us: tr.records.iter().map(|r| r.compute_us).sum::<f64>() / n,
        max_compute_us: tr.records.iter().map(|r| r.compute_us).fold(0.0, f64::max),
        settling_times,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inverter::SwitchState;
    use crate::scenario::{high_speed, low_speed};
    use crate::trace::TraceRecord;

    fn record(t: f64, w: f64, v: f64, u: SwitchState) -> TraceRecord {
        let [u1, u2, u3] = u.legs();
        TraceRecord {
            t,
            w,
            v,
            i_as: 0.0,
            i_bs: 0.0,
            i_a: 0.0,
            i_b: 0.0,
            i_c: 0.0,
            lam_ar: 0.0,
            lam_br: 0.0,
            lam_ar_hat: 0.0,
            lam_br_hat: 0.0,
            fe: 0.0,
            f_load: 0.0,
            u1,
            u2,
            u3,
            e: 0.0,
            cost: 0.0,
            evaluations: 0,
            compute_us: 0.0,
        }
    }

    fn synthetic(sc: &Scenario, f: impl Fn(usize, f64) -> (f64, SwitchState)) -> Trace {
        Trace {
            records: (0..=sc.steps())
                .map(|k| {
                    let t = sc.time(k);
                    let w = sc.speed_at(t);
                    let (v, u) = f(k, w);
                    record(t, w, v, u)
                })
                .collect(),
        }
    }

    #[test]
    fn constant_control_perfect_tracking() {
        let sc = high_speed();
        let tr = synthetic(&sc, |_, w| (w, SwitchState::new(1, 0, 0)));
        let m = compute_metrics(&tr, &sc);
        assert_eq!(m.transitions_per_second, 0.0);
        assert_eq!(m.tracking_rmse, 0.0);
        assert_eq!(m.settling_time, 0.0);
        assert_eq!(m.settling_times, vec![0.0]);
    }

    #[test]
    fn alternating_zero_vectors() {
        let sc = low_speed();
        let tr = synthetic(&sc, |k, w| {
            (w, if k % 2 == 0 { SwitchState::ZERO } else { SwitchState::ONES })
        });
        let m = compute_metrics(&tr, &sc);
        assert_eq!(m.total_transitions, 30_000);
        assert!((m.transitions_per_second - 30_000.0).abs() < 1e-9);
    }

    #[test]
    fn steady_windows_cover_event_tails() {
        let w = steady_windows(&high_speed());
        let expect = [(0.16, 0.2), (0.44, 0.5), (0.9, 1.0)];
        assert_eq!(w.len(), 3);
        for (a, b) in w.iter().zip(expect) {
            assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
        }
    }

    #[test]
    fn settling_after_dip() {
        let sc = low_speed();
        // dip 5% for 20 ms after the load step, then back on the reference
        let tr = synthetic(&sc, |_, w| (w, SwitchState::ZERO));
        let mut tr = tr;
        for r in tr.records.iter_mut().filter(|r| r.t >= 0.5 && r.t < 0.52) {
            r.v = 0.95 * r.w;
        }
        let m = compute_metrics(&tr, &sc);
        assert!((m.settling_time - 0.02).abs() < 2e-4, "{}", m.settling_time);
        let rmse_window = tr.records.iter().filter(|r| r.t >= 0.9).count();
        assert!(rmse_window > 0);
        assert_eq!(m.tracking_rmse, 0.0);
    }

    #[test]
    fn settling_ignores_brief_reentry() {
        let sc = low_speed();
        let mut tr = synthetic(&sc, |_, w| (w, SwitchState::ZERO));
        for r in tr.records.iter_mut().filter(|r| r.t >= 0.5 && r.t < 0.53) {
            r.v = if (0.505..0.506).contains(&r.t) { r.w } else { 0.95 * r.w };
        }
        let m = compute_metrics(&tr, &sc);
        assert!((m.settling_time - 0.03).abs() < 2e-4, "{}", m.settling_time);

        let last = tr.records.len() - 1;
        tr.records[last].v = 0.0;
        assert_eq!(compute_metrics(&tr, &sc).settling_time, f64::INFINITY);
    }

    #[test]
    fn flat_outputs() {
        let sc = low_speed();
        let m = compute_metrics(&synthetic(&sc, |_, w| (w, SwitchState::ZERO)), &sc);
        let kv = m.to_key_value();
        assert!(kv.lines().any(|l| l == "transitions_per_second=0"));
        let csv = m.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap().split(',').count(), lines.next().unwrap().split(',').count());
    }
}
