//! Fitting the operation factor and memory contention to measured runs.
//!
//! With everything else fixed the model is linear in its two free constants:
//! `T = OperationFactor * C(w) + MemoryContention * i * ep / p`, where `C` is
//! the computational time at unit operation factor. The fit first solves the
//! linear least-squares problem on relative residuals, then refines it with a
//! deterministic compass search on the squared log-time residuals.

use std::path::Path;

use super::{comp_time, predict_time, MachineProfile, PerfModelParams, WorkloadSpec};
use crate::config::NetworkConfig;
use crate::error::{Error, Result};

pub const CALIBRATION_CSV_HEADER: &str = "i,it,ep,p,seconds";

/// One measured run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationPoint {
    pub workload: WorkloadSpec,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CalibrationSet {
    pub points: Vec<CalibrationPoint>,
}

impl CalibrationSet {
    pub fn new(points: Vec<CalibrationPoint>) -> Self {
        CalibrationSet { points }
    }

    pub fn push(&mut self, workload: WorkloadSpec, seconds: f64) {
        self.points.push(CalibrationPoint { workload, seconds });
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Distinct worker counts in the set.
    pub fn distinct_units(&self) -> usize {
        let mut units: Vec<u64> = self.points.iter().map(|p| p.workload.units).collect();
        units.sort_unstable();
        units.dedup();
        units.len()
    }

    /// CSV with the header `i,it,ep,p,seconds`.
    pub fn parse_csv(text: &str) -> Result<Self> {
        Self::parse_named(text, "<calibration>")
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_named(&text, &path.display().to_string())
    }

    fn parse_named(text: &str, name: &str) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: name.to_string(),
            line,
            message,
        };
        let mut set = CalibrationSet::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line.replace(' ', "") == CALIBRATION_CSV_HEADER {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 5 {
                return Err(parse_err(n + 1, format!("expected 5 columns, found {}", cols.len())));
            }
            let int = |k: usize| -> Result<u64> {
                cols[k]
                    .parse()
                    .map_err(|_| parse_err(n + 1, format!("`{}` is not an integer", cols[k])))
            };
            let workload = WorkloadSpec::new(int(0)?, int(1)?, int(2)?, int(3)?);
            let seconds: f64 = cols[4]
                .parse()
                .map_err(|_| parse_err(n + 1, format!("`{}` is not a number", cols[4])))?;
            if workload.units == 0 {
                return Err(parse_err(n + 1, "p must be at least 1".into()));
            }
            if !(seconds.is_finite() && seconds > 0.0) {
                return Err(parse_err(n + 1, "seconds must be positive".into()));
            }
            set.push(workload, seconds);
        }
        Ok(set)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{CALIBRATION_CSV_HEADER}\n");
        for p in &self.points {
            let w = p.workload;
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                w.train_images, w.test_images, w.epochs, w.units, p.seconds
            ));
        }
        out
    }
}

/// Operation counts from `config`, speed and CPI from `profile`, and the
/// operation factor and memory contention fitted to `cal`.
pub fn calibrate(
    config: &NetworkConfig,
    cal: &CalibrationSet,
    profile: &MachineProfile,
) -> Result<PerfModelParams> {
    fit_factors(&PerfModelParams::for_config(config, profile), cal)
}

/// Refits `operation_factor` and `memory_contention` of `base` to `cal`,
/// keeping every other field.
pub fn fit_factors(base: &PerfModelParams, cal: &CalibrationSet) -> Result<PerfModelParams> {
    if cal.is_empty() {
        return Err(Error::Calibration("no calibration points".into()));
    }
    if cal.distinct_units() < 2 {
        return Err(Error::Calibration(
            "at least two distinct worker counts are needed to fit memory contention".into(),
        ));
    }
    base.validate()?;
    let unit = PerfModelParams {
        operation_factor: 1.0,
        memory_contention: 0.0,
        ..*base
    };
    // Columns of the linear model, scaled by 1/measured.
    let rows: Vec<(f64, f64)> = cal
        .points
        .iter()
        .map(|p| {
            let w = &p.workload;
            let c = comp_time(&unit, w);
            let m = w.train_images as f64 * w.epochs as f64 / w.units as f64;
            (c / p.seconds, m / p.seconds)
        })
        .collect();
    if rows.iter().all(|&(c, _)| c <= 0.0) {
        return Err(Error::Calibration("the workloads contain no computation".into()));
    }

    let (mut of, mut mc) = linear_fit(&rows);
    if mc < 0.0 || !mc.is_finite() || !of.is_finite() || of <= 0.0 {
        mc = 0.0;
        let (scc, sc) = rows.iter().fold((0.0, 0.0), |(a, b), &(c, _)| (a + c * c, b + c));
        of = sc / scc;
    }

    let objective = |of: f64, mc: f64| -> f64 {
        let params = PerfModelParams {
            operation_factor: of,
            memory_contention: mc,
            ..*base
        };
        cal.points
            .iter()
            .map(|p| {
                let r = p.seconds.ln() - predict_time(&params, &p.workload).ln();
                r * r
            })
            .sum()
    };
    let mc_scale = {
        let (sm, n) = rows.iter().fold((0.0, 0.0), |(a, n), &(_, m)| (a + m, n + 1.0));
        if sm > 0.0 {
            n / sm
        } else {
            0.0
        }
    };
    let (of, mc) = compass(objective, of, mc, mc_scale);
    Ok(PerfModelParams {
        operation_factor: of,
        memory_contention: mc,
        ..*base
    })
}

/// Least squares for `1 = of * c + mc * m` over the rows.
fn linear_fit(rows: &[(f64, f64)]) -> (f64, f64) {
    let (mut scc, mut scm, mut smm, mut sc, mut sm) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(c, m) in rows {
        scc += c * c;
        scm += c * m;
        smm += m * m;
        sc += c;
        sm += m;
    }
    let det = scc * smm - scm * scm;
    if det.abs() <= 1e-12 * scc * smm || det == 0.0 {
        return (f64::NAN, f64::NAN);
    }
    ((sc * smm - sm * scm) / det, (scc * sm - scm * sc) / det)
}

/// Pattern search over `(of > 0, mc >= 0)`. `of` moves multiplicatively,
/// `mc` additively in units of `mc_scale`, a typical contention magnitude.
fn compass(f: impl Fn(f64, f64) -> f64, mut of: f64, mut mc: f64, mc_scale: f64) -> (f64, f64) {
    let mut best = f(of, mc);
    let mut step = 0.1;
    for _ in 0..10_000 {
        if step < 1e-12 {
            break;
        }
        let mut moved = false;
        let candidates = [
            (of * (1.0 + step), mc),
            (of / (1.0 + step), mc),
            (of, mc + step * mc_scale.max(mc)),
            (of, (mc - step * mc_scale.max(mc)).max(0.0)),
        ];
        for (o, m) in candidates {
            if (o, m) == (of, mc) {
                continue;
            }
            let v = f(o, m);
            if v < best {
                best = v;
                of = o;
                mc = m;
                moved = true;
                break;
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    (of, mc)
}
