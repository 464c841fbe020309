use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use lim_enmpc::enmpc::ReferencePreview;
use lim_enmpc::inverter::InverterParams;
use lim_enmpc::scenario::{high_speed, low_speed};
use lim_enmpc::sim::{run_many, run_many_sequential};
use lim_enmpc::{default_config, ControllerState, Enmpc, MotorParams, MotorState, RunOptions, SearchMode, SWITCH_STATES};

fn operating_point() -> MotorState {
    MotorState { i_as: 18.0, i_bs: -9.0, lam_ar: 0.21, lam_br: 0.12, v: 1.7 }
}

fn bench_search(c: &mut Criterion) {
    let mut group = c.benchmark_group("search");
    let s = operating_point();
    let state = ControllerState { e: 40.0, u_prev: SWITCH_STATES[2] };
    for nu in [1usize, 2] {
        let mut cfg = default_config(1e-4);
        cfg.nu = nu;
        cfg.p_sw = if nu == 1 { vec![1.0] } else { vec![2.0, 1.0] };
        let preview = ReferencePreview::constant(2.0, cfg.horizon());
        for mode in [SearchMode::Sequential, SearchMode::Parallel] {
            let ctl = Enmpc::new(cfg.clone(), MotorParams::nominal(), InverterParams::default())
                .unwrap()
                .with_mode(mode);
            group.bench_with_input(BenchmarkId::new(format!("{mode:?}"), format!("Nu{nu}")), &nu, |b, _| {
                b.iter(|| ctl.control_step(black_box(&s), 2.0, &preview, &state))
            });
        }
        let ctl = Enmpc::new(cfg.clone(), MotorParams::nominal(), InverterParams::default()).unwrap();
        group.bench_with_input(BenchmarkId::new("Exhaustive", format!("Nu{nu}")), &nu, |b, _| {
            b.iter(|| ctl.search_exhaustive(black_box(&s), &state, &preview))
        });
    }
    group.finish();
}

fn bench_batch(c: &mut Criterion) {
    let mut group = c.benchmark_group("batch");
    group.sample_size(10);
    let batch: Vec<_> = [high_speed(), low_speed()]
        .into_iter()
        .map(|mut sc| {
            sc.duration = 0.05;
            sc
        })
        .collect();
    let opts = RunOptions::default();
    group.bench_function("run_many", |b| b.iter(|| run_many(black_box(&batch), opts)));
    group.bench_function("run_many_sequential", |b| b.iter(|| run_many_sequential(black_box(&batch), opts)));
    group.finish();
}

criterion_group!(benches, bench_search, bench_batch);
criterion_main!(benches);
