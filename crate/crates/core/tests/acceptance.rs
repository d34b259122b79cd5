//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Criteria that need MNIST read it from `CHAOS_DATA_DIR` or
//! `<workspace>/data/mnist` and fail when it is missing. The scaling check
//! needs at least four physical cores and reports N/A otherwise.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Mutex;
use std::time::Instant;

use chaos_core::affinity::physical_cores;
use chaos_core::config::param_count;
use chaos_core::perf::{
    calibrate, mem_overhead, predict_time, prediction_accuracy, speedup, what_if,
    CalibrationSet, MachineProfile, PerfModelParams, SpeedupConstants, WhatIfGrid, WorkloadSpec,
};
use chaos_core::{train, Dataset, Hyperparams, NetworkConfig, TrainOptions, WorkSampler};
use common::{preprocess, RefNet};

const TABLE_I_WEIGHTS: [usize; 13] = [
    85, 1_260, 4_550, 510, 340, 20_040, 54_150, 1_510, 340, 30_060, 216_100, 135_150, 1_510,
];
const GRADIENT_NETS: u64 = 20;
const LEARNING_MAX_ERRORS: usize = 1_000;
const STABILITY_MAX_DIFF: usize = 100;
const SCALING_MIN_CORES: usize = 4;
const SCALING_EFFICIENCY: f64 = 0.6;
const CALIBRATION_REL_TOL: f64 = 0.01;
const HELD_OUT_MAX_ALPHA: f64 = 25.0;
const EPOCH_DOUBLING_TOL: f64 = 0.05;

/// Learning rate for the desk-scale runs: 0.4, shrinking by 0.7 per epoch.
fn desk_hyper(epochs: usize) -> Hyperparams {
    Hyperparams {
        eta: 0.4,
        lambda: 0.0,
        epochs,
        eta_decay: 0.7,
    }
}

enum Verdict {
    Pass(String),
    Fail(String),
    NotApplicable(String),
}
use Verdict::*;

fn check(cond: bool, detail: String) -> Verdict {
    if cond {
        Pass(detail)
    } else {
        Fail(detail)
    }
}

fn mnist() -> Option<Dataset> {
    common::mnist_dir().and_then(|d| Dataset::load_dir(d).ok())
}

fn parameter_counts() -> Verdict {
    let got: Vec<usize> = ["small", "medium", "large"]
        .iter()
        .flat_map(|n| param_count(&NetworkConfig::builtin(n).unwrap()))
        .map(|e| e.weights)
        .collect();
    let matching = got.iter().zip(TABLE_I_WEIGHTS).filter(|(a, b)| **a == *b).count();
    check(
        got == TABLE_I_WEIGHTS,
        format!("{matching}/13 entries match {got:?}"),
    )
}

fn gradients() -> Verdict {
    let (mut weights, mut worst) = (0, 0.0f64);
    for seed in 0..GRADIENT_NETS {
        match common::gradcheck::check(seed) {
            Ok((n, w)) => {
                weights += n;
                worst = worst.max(w);
            }
            Err(e) => return Fail(e),
        }
    }
    Pass(format!(
        "{GRADIENT_NETS} nets, {weights} weights, worst relative error {worst:.2e} (limit 1e-4)"
    ))
}

fn sequential_equivalence(data: Option<&Dataset>) -> Verdict {
    let Some(data) = data else {
        return Fail("MNIST not found".into());
    };
    let data = data.clone().subset(100, 100);
    let config = NetworkConfig::small().with_seed(7);
    let h = desk_hyper(2);
    let (_, weights, net) = train(&config, &data, &TrainOptions::new(1, h)).unwrap();
    let mut oracle = RefNet::<f32>::new(&config);
    for epoch in 0..h.epochs {
        for i in 0..data.train.len() {
            oracle.train_step(
                &preprocess(data.train.raw(i)),
                data.train.label(i),
                h.eta_at(epoch),
                h.lambda,
            );
        }
    }
    let snap = weights.snapshot();
    let (mut total, mut differing) = (0, 0);
    for (idx, _) in net.weighted() {
        for (a, b) in snap.logical(idx).iter().zip(oracle.flat(idx)) {
            total += 1;
            if a.to_bits() != b.to_bits() {
                differing += 1;
            }
        }
    }
    check(
        differing == 0 && total == net.weight_count(),
        format!("{differing} of {total} weights differ after 100 images x 2 epochs"),
    )
}

fn work_sharing() -> Verdict {
    let sampler = WorkSampler::new(0);
    let mut runs = 0;
    for p in [1, 2, 4, 8] {
        for n in [1, 7, 10_000] {
            for _ in 0..10 {
                sampler.reset(n);
                let seen = Mutex::new(Vec::with_capacity(n));
                std::thread::scope(|s| {
                    for _ in 0..p {
                        s.spawn(|| {
                            let mut mine = Vec::new();
                            while let Some(i) = sampler.next_index() {
                                mine.push(i);
                            }
                            seen.lock().unwrap().extend(mine);
                        });
                    }
                });
                let mut all = seen.into_inner().unwrap();
                all.sort_unstable();
                if all != (0..n).collect::<Vec<_>>() {
                    return Fail(format!("p={p} N={n}: {} claims", all.len()));
                }
                runs += 1;
            }
        }
    }
    Pass(format!("{runs} runs, every index claimed exactly once"))
}

/// Final test errors of the small network on the first 10,000 training
/// images after 5 epochs, per worker count.
fn desk_runs(data: &Dataset) -> Vec<(usize, usize, f64)> {
    let data = data.clone().subset(10_000, 10_000);
    [1, 2, 4, 8]
        .iter()
        .map(|&p| {
            let (report, _, _) =
                train(&NetworkConfig::small(), &data, &TrainOptions::new(p, desk_hyper(5))).unwrap();
            (p, report.final_test_errors().unwrap(), report.total_seconds())
        })
        .collect()
}

fn learning(runs: Option<&[(usize, usize, f64)]>) -> Verdict {
    let Some(runs) = runs else {
        return Fail("MNIST not found".into());
    };
    let &(_, errors, seconds) = runs.iter().find(|r| r.0 == 4).unwrap();
    check(
        errors <= LEARNING_MAX_ERRORS,
        format!(
            "p=4: {errors} test errors / 10000 ({:.2}%), limit {LEARNING_MAX_ERRORS}, {seconds:.0} s",
            errors as f64 / 100.0
        ),
    )
}

fn stability(runs: Option<&[(usize, usize, f64)]>) -> Verdict {
    let Some(runs) = runs else {
        return Fail("MNIST not found".into());
    };
    let base = runs[0].1;
    let worst = runs.iter().map(|r| r.1.abs_diff(base)).max().unwrap();
    let listing: Vec<String> = runs.iter().map(|r| format!("p={}:{}", r.0, r.1)).collect();
    check(
        worst <= STABILITY_MAX_DIFF,
        format!("errors {}; max diff from p=1 {worst}, limit {STABILITY_MAX_DIFF}", listing.join(" ")),
    )
}

fn scaling(data: Option<&Dataset>) -> Verdict {
    let cores = physical_cores();
    if cores < SCALING_MIN_CORES {
        return NotApplicable(format!(
            "host has {cores} physical core(s), the property needs at least {SCALING_MIN_CORES}"
        ));
    }
    let Some(data) = data else {
        return Fail("MNIST not found".into());
    };
    let data = data.clone().subset(10_000, 100);
    let throughput = |p: usize| {
        let (report, _, _) =
            train(&NetworkConfig::small(), &data, &TrainOptions::new(p, desk_hyper(1))).unwrap();
        report.epochs[0].train_throughput()
    };
    let one = throughput(1);
    let many = throughput(cores);
    let ratio = many / one;
    check(
        ratio >= SCALING_EFFICIENCY * cores as f64,
        format!(
            "p=1 {one:.0} img/s, p={cores} {many:.0} img/s, ratio {ratio:.2} (needs {:.1})",
            SCALING_EFFICIENCY * cores as f64
        ),
    )
}

fn model_identities() -> Verdict {
    let pm = PerfModelParams::reference();
    let c = pm.speedup_constants();
    let mut failures = Vec::new();
    for (i, it, ep) in [(60_000, 10_000, 70), (1, 1, 1), (0, 0, 0), (12_345, 678, 9)] {
        if speedup(&c, &WorkloadSpec::new(i, it, ep, 1)) != 1.0 {
            failures.push(format!("S(1) != 1 at ({i},{it},{ep})"));
        }
    }
    // Powers of two divide exactly in binary floating point, so the
    // identity S(p) = p holds to the last bit there.
    let linear = SpeedupConstants {
        e: 3.1e-3,
        f: 1.1e-3,
        g: 0.9e-3,
        ..Default::default()
    };
    let w = WorkloadSpec::new(60_000, 10_000, 70, 1);
    let mut worst_other = 0.0f64;
    for p in 1..=8192u64 {
        let s = speedup(&linear, &w.with_units(p));
        if p.is_power_of_two() {
            if s != p as f64 {
                failures.push(format!("S({p}) = {s}"));
            }
        } else {
            worst_other = worst_other.max((s - p as f64).abs() / p as f64);
        }
    }
    for p in [1, 7, 240, 480] {
        let w = WorkloadSpec::new(60_000, 10_000, 15, p);
        let pm = PerfModelParams {
            memory_contention: 1e-6,
            ..pm
        };
        if mem_overhead(&pm, &w) != 1e-6 * 60_000.0 * 15.0 / p as f64 {
            failures.push(format!("T_mem at p={p}"));
        }
    }
    for v in [1e-3, 1.0, 534.0, 1e7] {
        if prediction_accuracy(v, v).unwrap() != 0.0 {
            failures.push(format!("alpha({v},{v})"));
        }
    }
    check(
        failures.is_empty(),
        if failures.is_empty() {
            format!(
                "S(1)=1, S(p)=p exactly for p=2^k<=8192 (other p within {worst_other:.1e} rel), T_mem, alpha"
            )
        } else {
            failures.join("; ")
        },
    )
}

fn calibration(data: Option<&Dataset>) -> Verdict {
    // Round trip on noise-free synthetic timings.
    let config = NetworkConfig::small();
    let truth = PerfModelParams {
        operation_factor: 4.2,
        memory_contention: 3.0e-5,
        ..PerfModelParams::for_config(&config, &MachineProfile::coprocessor())
    };
    let mut synthetic = CalibrationSet::default();
    for (i, it, ep) in [(60_000, 10_000, 70), (10_000, 10_000, 5)] {
        for p in [1, 15, 30, 60, 120, 240] {
            let w = WorkloadSpec::new(i, it, ep, p);
            synthetic.push(w, predict_time(&truth, &w));
        }
    }
    let fit = calibrate(&config, &synthetic, &MachineProfile::coprocessor()).unwrap();
    let of_err = (fit.operation_factor - truth.operation_factor).abs() / truth.operation_factor;
    let mc_err = (fit.memory_contention - truth.memory_contention).abs() / truth.memory_contention;
    let round_trip = format!("round trip OF err {of_err:.1e}, MC err {mc_err:.1e}");
    if of_err > CALIBRATION_REL_TOL || mc_err > CALIBRATION_REL_TOL {
        return Fail(round_trip);
    }

    // Measured runs on this host, held-out p=8.
    let Some(data) = data else {
        return Fail(format!("{round_trip}; MNIST not found"));
    };
    let (i, it, ep) = (2_000, 1_000, 2);
    let data = data.clone().subset(i, it);
    let measure = |p: usize| {
        let start = Instant::now();
        train(&config, &data, &TrainOptions::new(p, desk_hyper(ep))).unwrap();
        start.elapsed().as_secs_f64()
    };
    let mut measured = CalibrationSet::default();
    for p in [1, 2, 4] {
        measured.push(WorkloadSpec::new(i as u64, it as u64, ep as u64, p), measure(p as usize));
    }
    let profile = MachineProfile::host();
    let fit = match calibrate(&config, &measured, &profile) {
        Ok(f) => f,
        Err(e) => return Fail(format!("{round_trip}; calibration failed: {e}")),
    };
    let held_out = WorkloadSpec::new(i as u64, it as u64, ep as u64, 8);
    let predicted = predict_time(&fit, &held_out);
    let actual = measure(8);
    let alpha = prediction_accuracy(actual, predicted).unwrap();
    check(
        alpha <= HELD_OUT_MAX_ALPHA,
        format!(
            "{round_trip}; p=8 predicted {predicted:.2} s, measured {actual:.2} s, alpha {alpha:.1}% (limit {HELD_OUT_MAX_ALPHA}%)"
        ),
    )
}

fn what_if_structure() -> Verdict {
    let table = what_if(&PerfModelParams::reference(), &WhatIfGrid::default());
    let mut worst = 0.0f64;
    for block in &table.blocks {
        for row in &block.rows {
            for pair in row.minutes.windows(2) {
                worst = worst.max((pair[1] / pair[0] - 2.0).abs() / 2.0);
            }
        }
    }
    let t240 = table.cell(240, 60_000, 70).unwrap();
    let t480 = table.cell(480, 60_000, 70).unwrap();
    let ratio = t480 / t240;
    check(
        worst <= EPOCH_DOUBLING_TOL && ratio > 0.5 && ratio < 1.0,
        format!(
            "epoch doubling within {:.2}% of 2x; 240->480 threads {t240:.1} -> {t480:.1} min, ratio {ratio:.3}",
            worst * 100.0
        ),
    )
}

fn main() {
    let data = mnist();
    let mut desk: Option<Vec<(usize, usize, f64)>> = None;
    let mut failed = 0;
    let mut run = |n: usize, name: &str, f: &mut dyn FnMut() -> Verdict| {
        let start = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(f))
            .unwrap_or_else(|e| {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                Fail(format!("panicked: {msg}"))
            });
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match verdict {
            Pass(d) => ("PASS", d),
            Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            NotApplicable(d) => ("N/A ", d),
        };
        println!("[{tag}] {n:>2}. {name}: {detail} ({secs:.1} s)");
    };

    run(1, "parameter counts", &mut parameter_counts);
    run(2, "gradient correctness", &mut gradients);
    run(3, "sequential equivalence", &mut || sequential_equivalence(data.as_ref()));
    run(4, "exactly-once work sharing", &mut work_sharing);
    run(5, "desk-scale learning", &mut || {
        desk = data.as_ref().map(desk_runs);
        learning(desk.as_deref())
    });
    run(6, "multi-worker accuracy stability", &mut || stability(desk.as_deref()));
    run(7, "training throughput scaling", &mut || scaling(data.as_ref()));
    run(8, "performance-model identities", &mut model_identities);
    run(9, "calibration", &mut || calibration(data.as_ref()));
    run(10, "what-if structure", &mut what_if_structure);

    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
