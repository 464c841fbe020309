use lim_enmpc::inverter::switch_count;
use lim_enmpc::scenario::{high_speed, low_speed, pj_sweep};
use lim_enmpc::sim::{run_many, run_many_sequential};
use lim_enmpc::{run_with, ControllerSpec, RunOptions, RunOutput, Scenario, SearchMode, Trace};

fn go(sc: &Scenario) -> RunOutput {
    run_with(sc, RunOptions::default()).unwrap()
}

fn dtc(mut sc: Scenario) -> Scenario {
    sc.controller = ControllerSpec::Dtc(sc.dtc_config().unwrap());
    sc
}

fn shortened(mut sc: Scenario, duration: f64) -> Scenario {
    sc.duration = duration;
    sc
}

fn counted_transitions(tr: &Trace) -> u64 {
    tr.records
        .windows(2)
        .map(|w| u64::from(switch_count(w[0].switch_state(), w[1].switch_state())))
        .sum()
}

/// Time after `event` until |v - w| stays within `band * |w|` for good.
fn time_to_hold(tr: &Trace, event: f64, band: f64) -> f64 {
    let last_out = tr
        .records
        .iter()
        .filter(|r| r.t >= event && (r.v - r.w).abs() > band * r.w.abs())
        .map(|r| r.t)
        .fold(event, f64::max);
    last_out - event
}

#[test]
fn dtc_recovers_from_the_load_step() {
    let out = go(&dtc(high_speed()));
    let hold = time_to_hold(&out.trace, 0.5, 0.02);
    assert!((0.01..0.2).contains(&hold), "held within 2% only after {hold} s");
}

#[test]
fn trace_transitions_match_driver_count() {
    for sc in [shortened(high_speed(), 0.3), dtc(shortened(low_speed(), 0.3))] {
        let out = go(&sc);
        assert_eq!(counted_transitions(&out.trace), out.switch_transitions, "{}", sc.name);
        assert_eq!(out.metrics.total_transitions, out.switch_transitions);
    }
}

#[test]
fn estimator_tracks_plant_with_exact_parameters() {
    for sc in [high_speed(), low_speed()] {
        let out = go(&sc);
        let rated = sc.motor.flux_rated;
        for r in &out.trace.records {
            let err = (r.lam_ar_hat - r.lam_ar).hypot(r.lam_br_hat - r.lam_br);
            assert!(err < 0.02 * rated, "{} t={}: {}", sc.name, r.t, err);
        }
    }
}

#[test]
fn heavier_switching_penalty_switches_less() {
    let base = pj_sweep();
    let variants: Vec<Scenario> = ["1", "10000"]
        .iter()
        .map(|v| lim_enmpc::scenario::override_key(&base, "controller.P_sw.0", v).unwrap())
        .collect();
    let res: Vec<RunOutput> = run_many(&variants, RunOptions::default()).into_iter().map(Result::unwrap).collect();
    assert!(res[1].switch_transitions <= res[0].switch_transitions);
}

#[test]
fn runs_are_reproducible_across_modes() {
    let sc = shortened(high_speed(), 0.05);
    let a = go(&sc).trace.to_csv_bytes();
    let b = go(&sc).trace.to_csv_bytes();
    let parallel = RunOptions { mode: SearchMode::Parallel, timing: false };
    let c = run_with(&sc, parallel).unwrap().trace.to_csv_bytes();
    assert_eq!(a, b);
    assert_eq!(a, c);

    let batch = [sc.clone(), dtc(sc.clone())];
    let many: Vec<_> = run_many(&batch, RunOptions::default()).into_iter().map(|r| r.unwrap().trace).collect();
    let seq: Vec<_> = run_many_sequential(&batch, RunOptions::default()).into_iter().map(|r| r.unwrap().trace).collect();
    assert_eq!(many, seq);
}

#[test]
fn nominal_scenarios_stay_finite() {
    for sc in [high_speed(), low_speed(), pj_sweep()] {
        let out = go(&sc);
        assert_eq!(out.trace.len(), sc.steps() + 1);
        assert!(out.trace.records.iter().all(|r| r.v.is_finite() && r.lam_ar.is_finite() && r.i_as.is_finite()));
        assert!(out.metrics.max_flux.is_finite());
    }
}

#[test]
fn timing_column_is_zero_without_timing() {
    let out = go(&shortened(high_speed(), 0.01));
    assert!(out.trace.records.iter().all(|r| r.compute_us == 0.0));
}
