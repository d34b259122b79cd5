//! `model` subcommands.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use chaos_core::perf::{
    calibrate, comp_time, estimate_ops, mem_overhead, predict_time, prediction_accuracy, prep_ops,
    speedup, what_if, CalibrationSet, MachineProfile, PerfModelParams, WhatIfGrid, WorkloadSpec,
};
use chaos_core::{Error, NetworkConfig};

use crate::args::{ModelCommand, ParamsArgs, WhatIfArgs};
use crate::{CliError, CliResult};

pub fn cmd_model(cmd: &ModelCommand) -> CliResult<()> {
    print!("{}", model_output(cmd)?);
    Ok(())
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|source| {
        CliError::Core(Error::Io {
            path: path.to_path_buf(),
            source,
        })
    })
}

pub fn profile(name: &str) -> CliResult<MachineProfile> {
    Ok(match name {
        "coprocessor" => MachineProfile::coprocessor(),
        "host" => MachineProfile::host(),
        path => MachineProfile::parse(&read_text(Path::new(path))?)?,
    })
}

fn params(args: &ParamsArgs) -> CliResult<PerfModelParams> {
    let params = match (&args.params, &args.arch) {
        (Some(path), _) => PerfModelParams::parse(&read_text(path)?)?,
        (None, Some(arch)) => {
            PerfModelParams::for_config(&NetworkConfig::resolve(arch)?, &profile(&args.profile)?)
        }
        (None, None) => PerfModelParams::reference(),
    };
    params.validate()?;
    Ok(params)
}

fn grid(args: &WhatIfArgs) -> CliResult<WhatIfGrid> {
    let images = args
        .images
        .iter()
        .map(|pair| {
            let parsed = pair
                .split_once(':')
                .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)));
            parsed.ok_or_else(|| CliError::Usage(format!("--images expects TRAIN:TEST, got `{pair}`")))
        })
        .collect::<CliResult<Vec<(u64, u64)>>>()?;
    if args.threads.contains(&0) {
        return Err(CliError::Usage("thread counts must be at least 1".into()));
    }
    Ok(WhatIfGrid {
        images,
        epochs: args.epochs.clone(),
        threads: args.threads.clone(),
    })
}

/// The CSV (or parameter text) printed by each subcommand.
pub fn model_output(cmd: &ModelCommand) -> CliResult<String> {
    let mut out = String::new();
    match cmd {
        ModelCommand::Calibrate(a) => {
            let config = NetworkConfig::resolve(&a.arch)?;
            let cal = CalibrationSet::read_csv(&a.calibration)?;
            let fitted = calibrate(&config, &cal, &profile(&a.profile)?)?;
            out = fitted.to_text();
            if let Some(path) = &a.out {
                fs::write(path, &out).map_err(|source| Error::Io {
                    path: path.clone(),
                    source,
                })?;
            }
        }
        ModelCommand::Predict(a) => {
            if a.units == 0 {
                return Err(CliError::Usage("--p must be at least 1".into()));
            }
            let p = params(&a.params)?;
            let w = WorkloadSpec::new(a.train_images, a.test_images, a.epochs, a.units);
            let total = predict_time(&p, &w);
            out.push_str("i,it,ep,p,comp_seconds,mem_seconds,predicted_seconds,predicted_minutes\n");
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6},{:.6},{:.6},{:.3}",
                w.train_images,
                w.test_images,
                w.epochs,
                w.units,
                comp_time(&p, &w),
                mem_overhead(&p, &w),
                total,
                total / 60.0
            );
        }
        ModelCommand::Speedup(a) => {
            if a.units.contains(&0) {
                return Err(CliError::Usage("--p values must be at least 1".into()));
            }
            let p = params(&a.params)?;
            let constants = p.speedup_constants();
            out.push_str("p,predicted_seconds,speedup\n");
            for &units in &a.units {
                let w = WorkloadSpec::new(a.train_images, a.test_images, a.epochs, units);
                let _ = writeln!(
                    out,
                    "{units},{:.6},{:.4}",
                    predict_time(&p, &w),
                    speedup(&constants, &w)
                );
            }
        }
        ModelCommand::Whatif(a) => {
            out = what_if(&params(&a.params)?, &grid(a)?).to_csv();
        }
        ModelCommand::Accuracy(a) => {
            let acc = prediction_accuracy(a.measured, a.predicted)?;
            out.push_str("measured_seconds,predicted_seconds,deviation_percent\n");
            let _ = writeln!(out, "{},{},{acc:.4}", a.measured, a.predicted);
        }
        ModelCommand::Ops(a) => {
            let config = NetworkConfig::resolve(&a.arch)?;
            let ops = estimate_ops(&config);
            out.push_str("layer,kind,macs,activations,fprop,bprop\n");
            for l in &ops.layers {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    l.layer,
                    l.kind.name(),
                    l.macs,
                    l.activations,
                    l.fprop,
                    l.bprop
                );
            }
            let macs: u64 = ops.layers.iter().map(|l| l.macs).sum();
            let acts: u64 = ops.layers.iter().map(|l| l.activations).sum();
            let _ = writeln!(out, "total,,{macs},{acts},{},{}", ops.fprop, ops.bprop);
            eprintln!("prep operations: {}", prep_ops(&config));
        }
    }
    Ok(out)
}
