//! Analytical model of training time and speedup.
//!
//! Two forms are provided. [`SpeedupConstants`] holds seven per-unit costs
//! and gives the time on `p` processing units as
//!
//! ```text
//! T_p = (a*i + b*it + c) + (d + e*i/p_i + f*i/p_i + g*it/p_it) * ep
//! ```
//!
//! with `p_i = min(p, i)` and `p_it = min(p, it)`; the speedup is
//! `T_1 / T_p`. [`PerfModelParams`] expresses the same structure in
//! operation counts divided by a core speed and adds a memory-contention
//! term:
//!
//! ```text
//! T = ((Prep + 4i + 2it + 10ep)/s
//!      + (FProp+BProp)/s * i/p_i * ep
//!      + FProp/s * i/p_i * ep
//!      + FProp/s * it/p_it * ep) * CPI * OperationFactor
//!   + MemoryContention * i * ep / p
//! ```
//!
//! The two agree through [`PerfModelParams::speedup_constants`]:
//! `a = 4k`, `b = 2k`, `c = Prep*k`, `d = 10k`, `e = (FProp+BProp)*k`,
//! `f = g = FProp*k` where `k = CPI * OperationFactor / s`. Here `d` is the
//! per-epoch checkpoint cost, `e` training, `f` validation and `g` testing.

mod calibrate;
mod ops;
mod whatif;

use std::fmt;

pub use calibrate::{calibrate, fit_factors, CalibrationPoint, CalibrationSet};
pub use ops::{estimate_ops, LayerOps, OpCounts};
pub use whatif::{what_if, WhatIfBlock, WhatIfGrid, WhatIfRow, WhatIfTable};

use crate::config::{param_count, NetworkConfig};
use crate::error::{Error, Result};

/// Problem size and parallelism of one training run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WorkloadSpec {
    /// Training (and validation) images, `i`.
    pub train_images: u64,
    /// Test images, `it`.
    pub test_images: u64,
    /// Epochs, `ep`.
    pub epochs: u64,
    /// Processing units (worker threads), `p`.
    pub units: u64,
}

impl WorkloadSpec {
    pub fn new(train_images: u64, test_images: u64, epochs: u64, units: u64) -> Self {
        WorkloadSpec {
            train_images,
            test_images,
            epochs,
            units,
        }
    }

    pub fn with_units(self, units: u64) -> Self {
        WorkloadSpec { units, ..self }
    }

    /// `min(p, i)`.
    pub fn p_i(&self) -> u64 {
        self.units.max(1).min(self.train_images)
    }

    /// `min(p, it)`.
    pub fn p_it(&self) -> u64 {
        self.units.max(1).min(self.test_images)
    }
}

/// `n / min(p, n)`, the images one unit handles; zero for an empty set.
fn per_unit(n: u64, p: u64) -> f64 {
    if n == 0 {
        0.0
    } else {
        n as f64 / p.max(1).min(n) as f64
    }
}

/// Per-unit costs (seconds) of the speedup formula.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SpeedupConstants {
    /// Preparing one training image.
    pub a: f64,
    /// Preparing one test image.
    pub b: f64,
    /// Creating the network instances.
    pub c: f64,
    /// Serializing intermediate results, per epoch.
    pub d: f64,
    /// Forward and back-propagation of one training image.
    pub e: f64,
    /// Forward propagation of one validation image.
    pub f: f64,
    /// Forward propagation of one test image.
    pub g: f64,
}

impl SpeedupConstants {
    /// Time on `w.units` processing units.
    pub fn time(&self, w: &WorkloadSpec) -> f64 {
        let (i, it, ep) = (w.train_images as f64, w.test_images as f64, w.epochs as f64);
        let sequential = self.a * i + self.b * it + self.c;
        let per_epoch = self.d
            + self.e * per_unit(w.train_images, w.units)
            + self.f * per_unit(w.train_images, w.units)
            + self.g * per_unit(w.test_images, w.units);
        sequential + per_epoch * ep
    }
}

/// `T_1 / T_p`.
pub fn speedup(constants: &SpeedupConstants, w: &WorkloadSpec) -> f64 {
    let t1 = constants.time(&w.with_units(1));
    let tp = constants.time(w);
    if t1 == tp {
        1.0
    } else {
        t1 / tp
    }
}

/// Modeling constants of the execution-time model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerfModelParams {
    /// Sequential preparation work, in operations.
    pub prep: f64,
    /// Operations to forward-propagate one image.
    pub fprop: f64,
    /// Operations to back-propagate one image.
    pub bprop: f64,
    /// Operations per second of one core.
    pub core_speed: f64,
    /// Cycles-per-instruction floor.
    pub cpi: f64,
    /// Dimensionless correction for the operation-count approximation.
    pub operation_factor: f64,
    /// Seconds per image per contention event.
    pub memory_contention: f64,
    /// Processing units that can compute at once. `None` means every worker
    /// has its own; otherwise the computational rows use
    /// `min(p, compute_units)` while contention still sees all `p` workers.
    pub compute_units: Option<u64>,
}

impl PerfModelParams {
    /// Operation counts of `config` on `profile`, with unit correction
    /// factors and no contention.
    pub fn for_config(config: &NetworkConfig, profile: &MachineProfile) -> Self {
        let ops = estimate_ops(config);
        PerfModelParams {
            prep: prep_ops(config),
            fprop: ops.fprop,
            bprop: ops.bprop,
            core_speed: profile.core_speed_hz,
            cpi: profile.cpi_floor,
            operation_factor: 1.0,
            memory_contention: 0.0,
            compute_units: profile.hardware_threads,
        }
    }

    /// Like [`for_config`] with the operation factor chosen so that
    /// `predict_time(anchor) == seconds`.
    ///
    /// [`for_config`]: PerfModelParams::for_config
    pub fn anchored(
        config: &NetworkConfig,
        profile: &MachineProfile,
        anchor: &WorkloadSpec,
        seconds: f64,
    ) -> Result<Self> {
        let mut params = Self::for_config(config, profile);
        let base = comp_time(&params, anchor);
        if !(base > 0.0 && seconds > 0.0) {
            return Err(Error::Argument("anchor time must be positive".into()));
        }
        params.operation_factor = seconds / base;
        Ok(params)
    }

    /// Small network on the coprocessor profile, anchored at 8.9 minutes
    /// for 60k/10k images, 70 epochs and 240 threads, without contention.
    pub fn reference() -> Self {
        let anchor = WorkloadSpec::new(60_000, 10_000, 70, 240);
        Self::anchored(
            &NetworkConfig::small(),
            &MachineProfile::coprocessor(),
            &anchor,
            8.9 * 60.0,
        )
        .expect("reference anchor is positive")
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("prep", self.prep),
            ("fprop", self.fprop),
            ("bprop", self.bprop),
            ("cpi", self.cpi),
            ("operation_factor", self.operation_factor),
            ("memory_contention", self.memory_contention),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Argument(format!("{name} must be nonnegative, got {v}")));
            }
        }
        if !(self.core_speed.is_finite() && self.core_speed > 0.0) {
            return Err(Error::Argument(format!(
                "core speed must be positive, got {}",
                self.core_speed
            )));
        }
        if self.compute_units == Some(0) {
            return Err(Error::Argument("compute_units must be at least 1".into()));
        }
        Ok(())
    }

    /// The equivalent per-unit costs of the speedup formula.
    pub fn speedup_constants(&self) -> SpeedupConstants {
        let k = self.cpi * self.operation_factor / self.core_speed;
        SpeedupConstants {
            a: 4.0 * k,
            b: 2.0 * k,
            c: self.prep * k,
            d: 10.0 * k,
            e: (self.fprop + self.bprop) * k,
            f: self.fprop * k,
            g: self.fprop * k,
        }
    }

    /// `key=value` lines, one per field.
    pub fn to_text(&self) -> String {
        self.to_string()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let kv = parse_key_values(text)?;
        let get = |k: &str| -> Result<f64> {
            kv.iter()
                .find(|(key, _)| key == k)
                .ok_or_else(|| Error::Argument(format!("missing `{k}`")))?
                .1
                .parse()
                .map_err(|_| Error::Argument(format!("`{k}` is not a number")))
        };
        let compute_units = match kv.iter().find(|(k, _)| k == "compute_units") {
            Some((_, v)) => Some(
                v.parse()
                    .map_err(|_| Error::Argument("`compute_units` is not an integer".into()))?,
            ),
            None => None,
        };
        let params = PerfModelParams {
            prep: get("prep")?,
            fprop: get("fprop")?,
            bprop: get("bprop")?,
            core_speed: get("core_speed_hz")?,
            cpi: get("cpi")?,
            operation_factor: get("operation_factor")?,
            memory_contention: get("memory_contention")?,
            compute_units,
        };
        params.validate()?;
        Ok(params)
    }
}

impl fmt::Display for PerfModelParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "prep={:e}", self.prep)?;
        writeln!(f, "fprop={:e}", self.fprop)?;
        writeln!(f, "bprop={:e}", self.bprop)?;
        writeln!(f, "core_speed_hz={:e}", self.core_speed)?;
        writeln!(f, "cpi={:e}", self.cpi)?;
        writeln!(f, "operation_factor={:e}", self.operation_factor)?;
        writeln!(f, "memory_contention={:e}", self.memory_contention)?;
        if let Some(u) = self.compute_units {
            writeln!(f, "compute_units={u}")?;
        }
        Ok(())
    }
}

/// Sequential preparation work: one operation per initialized weight.
pub fn prep_ops(config: &NetworkConfig) -> f64 {
    param_count(config).iter().map(|e| e.weights as f64).sum()
}

/// Computational time `T_comp` in seconds.
pub fn comp_time(params: &PerfModelParams, w: &WorkloadSpec) -> f64 {
    let p = match params.compute_units {
        Some(units) => w.units.min(units),
        None => w.units,
    };
    let (i, it, ep) = (w.train_images as f64, w.test_images as f64, w.epochs as f64);
    let s = params.core_speed;
    let per_train = per_unit(w.train_images, p);
    let per_test = per_unit(w.test_images, p);
    let sequential = (params.prep + 4.0 * i + 2.0 * it + 10.0 * ep) / s;
    let training = (params.fprop + params.bprop) / s * per_train * ep;
    let validation = params.fprop / s * per_train * ep;
    let testing = params.fprop / s * per_test * ep;
    (sequential + (training + validation + testing)) * params.cpi * params.operation_factor
}

/// Memory overhead `T_mem = MemoryContention * i * ep / p` in seconds.
pub fn mem_overhead(params: &PerfModelParams, w: &WorkloadSpec) -> f64 {
    params.memory_contention * w.train_images as f64 * w.epochs as f64 / w.units.max(1) as f64
}

/// Predicted wall time `T_comp + T_mem` in seconds.
pub fn predict_time(params: &PerfModelParams, w: &WorkloadSpec) -> f64 {
    comp_time(params, w) + mem_overhead(params, w)
}

/// `|measured - predicted| / predicted * 100`.
pub fn prediction_accuracy(measured: f64, predicted: f64) -> Result<f64> {
    if !(predicted.is_finite() && predicted > 0.0) {
        return Err(Error::Argument(format!(
            "predicted time must be positive, got {predicted}"
        )));
    }
    Ok((measured - predicted).abs() / predicted * 100.0)
}

/// Core speed, CPI floor and hardware parallelism of a machine.
///
/// Plain text, `key=value` per line: `core_speed_hz`, `cpi_floor`, and
/// optionally `hardware_threads`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MachineProfile {
    pub core_speed_hz: f64,
    pub cpi_floor: f64,
    pub hardware_threads: Option<u64>,
}

impl MachineProfile {
    /// 61-core, 1.2 GHz coprocessor with 244 hardware threads. A single
    /// thread cannot issue on consecutive cycles there, hence a CPI floor of
    /// 2.
    pub fn coprocessor() -> Self {
        MachineProfile {
            core_speed_hz: 1.2e9,
            cpi_floor: 2.0,
            hardware_threads: Some(244),
        }
    }

    /// The current host: clock from `/proc/cpuinfo` when readable
    /// (2 GHz otherwise), CPI floor 1, and its logical CPU count.
    pub fn host() -> Self {
        let mhz = std::fs::read_to_string("/proc/cpuinfo").ok().and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("cpu MHz"))
                .and_then(|l| l.split(':').nth(1))
                .and_then(|v| v.trim().parse::<f64>().ok())
        });
        MachineProfile {
            core_speed_hz: mhz.map_or(2.0e9, |m| m * 1e6),
            cpi_floor: 1.0,
            hardware_threads: std::thread::available_parallelism()
                .ok()
                .map(|n| n.get() as u64),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let kv = parse_key_values(text)?;
        let mut profile = MachineProfile {
            core_speed_hz: f64::NAN,
            cpi_floor: 1.0,
            hardware_threads: None,
        };
        for (k, v) in &kv {
            let bad = || Error::Argument(format!("bad value `{v}` for `{k}`"));
            match k.as_str() {
                "core_speed_hz" => profile.core_speed_hz = v.parse().map_err(|_| bad())?,
                "cpi_floor" => profile.cpi_floor = v.parse().map_err(|_| bad())?,
                "hardware_threads" => profile.hardware_threads = Some(v.parse().map_err(|_| bad())?),
                other => return Err(Error::Argument(format!("unknown profile key `{other}`"))),
            }
        }
        if !(profile.core_speed_hz.is_finite() && profile.core_speed_hz > 0.0) {
            return Err(Error::Argument("profile needs a positive core_speed_hz".into()));
        }
        if !(profile.cpi_floor.is_finite() && profile.cpi_floor > 0.0) {
            return Err(Error::Argument("cpi_floor must be positive".into()));
        }
        if profile.hardware_threads == Some(0) {
            return Err(Error::Argument("hardware_threads must be at least 1".into()));
        }
        Ok(profile)
    }
}

fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Argument(format!("line {}: expected key=value", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}
