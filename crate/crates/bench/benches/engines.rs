use std::f64::consts::TAU;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use omsync_core::mcwf::{build_operators, jump_step, FockSpace, FockState, Workspace};
use omsync_core::params::presets;
use omsync_core::phase::{histogram, residence_times, PhaseSeries, ResidenceConfig};
use omsync_core::rng::stream;
use omsync_core::sde::{
    simulate_with, DriftModel, Mode, NoiseSpec, SemiclassicalState, SimulationSpec, Stepper,
};
use omsync_core::QuantumScale;

fn scale() -> QuantumScale {
    QuantumScale {
        quantum_parameter: 1.0,
        rescaled_drive: presets::CROSSOVER_RESCALED_DRIVE,
    }
}

fn langevin(c: &mut Criterion) {
    let p = presets::crossover_dimer(0.15);
    let mode = Mode::Rescaled { scale: scale() };
    let noise = NoiseSpec::for_mode(&p, &mode, 1, 0);
    let stepper = Stepper::new(DriftModel::new(&p, &mode), TAU / 200.0, &noise).unwrap();
    let mut rng = noise.rng();
    let mut s = SemiclassicalState {
        beta1: num_complex::Complex64::new(0.05, 0.0),
        beta2: num_complex::Complex64::new(0.0, 0.05),
        ..SemiclassicalState::ZERO
    };
    c.bench_function("heun_step", |b| {
        b.iter(|| {
            s = stepper.advance(black_box(&s), &mut rng);
        })
    });

    let mut spec = SimulationSpec::new(p, mode, 1000.0, 1, 0);
    spec.burn_in = 0.0;
    c.bench_function("simulate_1000_time_units", |b| {
        b.iter(|| {
            let mut n = 0usize;
            simulate_with(black_box(&spec), |_, _| n += 1).unwrap();
            n
        })
    });
}

fn quantum_jumps(c: &mut Criterion) {
    let p = presets::quantum_regime_dimer(0.15, 0.015);
    let mut group = c.benchmark_group("jump_step");
    for (n_opt, n_mech) in [(1, 3), (2, 6)] {
        let space = FockSpace::new(n_opt, n_mech);
        let ops = build_operators(space, &p).unwrap();
        let mut psi = FockState::vacuum(&space);
        let mut work = Workspace::default();
        let mut rng = stream(1, 0);
        group.bench_with_input(BenchmarkId::from_parameter(space.dim()), &space, |b, _| {
            b.iter(|| jump_step(&mut psi, &ops, 0.01, &mut rng, &mut work).unwrap())
        });
    }
    group.finish();
}

fn phase_analysis(c: &mut Criterion) {
    // Telegraph-like series: dwells of 300 time units alternating near 0 and π.
    let n = 200_000;
    let times: Vec<f64> = (0..n).map(|k| k as f64 * 0.314).collect();
    let raw: Vec<f64> = times
        .iter()
        .map(|t| {
            if ((t / 300.0) as u64) % 2 == 0 {
                0.3 * (t * 0.7).sin()
            } else {
                3.0
            }
        })
        .collect();
    let ps = PhaseSeries::from_raw(times, &raw);
    let cfg = ResidenceConfig::default();
    c.bench_function("residence_times_200k", |b| {
        b.iter(|| residence_times(black_box(&ps), &cfg))
    });
    c.bench_function("histogram_200k", |b| {
        b.iter(|| histogram(black_box(&ps), 64).unwrap())
    });
}

criterion_group!(benches, langevin, quantum_jumps, phase_analysis);
criterion_main!(benches);
