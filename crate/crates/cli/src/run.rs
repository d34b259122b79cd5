//! `train` and `bench`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chaos_core::affinity::Affinity;
use chaos_core::checkpoint::Checkpoint;
use chaos_core::perf::{CalibrationSet, WorkloadSpec};
use chaos_core::{train, Dataset, Error, Hyperparams, NetworkConfig, TrainOptions, TrainReport};

use crate::args::{BenchArgs, RunArgs, TrainArgs};
use crate::{CliError, CliResult};

pub const BENCH_CSV_HEADER: &str = "arch,workers,epochs,train_images,test_images,total_seconds,epoch_seconds,train_seconds,speedup,test_errors,test_size,diff";

/// Everything one training run needs, resolved from flags and environment.
pub struct RunConfig {
    /// Short label for CSV rows: the builtin name or the file stem.
    pub arch_name: String,
    pub network: NetworkConfig,
    pub data: Dataset,
    pub hyper: Hyperparams,
    pub affinity: Affinity,
    pub out: PathBuf,
}

impl RunConfig {
    pub fn resolve(args: &RunArgs) -> CliResult<Self> {
        let mut network = NetworkConfig::resolve(&args.arch)?;
        if let Some(seed) = args.seed {
            network = network.with_seed(seed);
        }
        let hyper = Hyperparams {
            eta: args.eta,
            lambda: args.lambda,
            epochs: args.epochs,
            eta_decay: args.eta_decay,
        };
        hyper.validate()?;
        let data = load_data(&args.data_dir, args.subset, args.test_subset)?;
        Ok(RunConfig {
            arch_name: arch_name(&args.arch),
            network,
            data,
            hyper,
            affinity: args.affinity,
            out: args.out.clone(),
        })
    }

    fn options(&self, workers: usize) -> TrainOptions {
        let mut opts = TrainOptions::new(workers, self.hyper);
        opts.affinity = self.affinity;
        opts
    }
}

fn arch_name(arch: &str) -> String {
    if NetworkConfig::builtin(arch).is_some() {
        return arch.to_string();
    }
    Path::new(arch)
        .file_stem()
        .map_or_else(|| arch.to_string(), |s| s.to_string_lossy().into_owned())
}

fn load_data(dir: &Path, train: Option<usize>, test: Option<usize>) -> CliResult<Dataset> {
    let data = Dataset::load_dir(dir)?;
    let check = |want: Option<usize>, have: usize, what: &str| match want {
        Some(n) if n > have => Err(CliError::Usage(format!(
            "{what} subset {n} exceeds the {have} available images"
        ))),
        Some(0) => Err(CliError::Usage(format!("{what} subset must be at least 1"))),
        Some(n) => Ok(n),
        None => Ok(have),
    };
    let train = check(train, data.train.len(), "training")?;
    let test = check(test, data.test.len(), "test")?;
    Ok(data.subset(train, test))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    Ok(())
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

pub fn cmd_train(args: &TrainArgs) -> CliResult<()> {
    if args.workers == 0 {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    let cfg = RunConfig::resolve(&args.run)?;
    create_dir(&cfg.out)?;
    let mut opts = cfg.options(args.workers);
    opts.checkpoint_dir = Some(cfg.out.clone());
    let (report, weights, net) = train(&cfg.network, &cfg.data, &opts)?;
    // Zero epochs never reach the per-epoch writer.
    if report.epochs.is_empty() {
        Checkpoint::capture(&net, &weights, 0).write(cfg.out.join("checkpoint.bin"))?;
    }
    // Rewritten so the last row carries its own checkpoint time.
    let csv = report.to_csv();
    write_file(&cfg.out.join("report.csv"), &csv)?;
    print!("{csv}");
    eprintln!(
        "{} workers={} total={:.3}s test_errors={}",
        cfg.arch_name,
        args.workers,
        report.total_seconds(),
        report.final_test_errors().map_or("-".into(), |e| e.to_string()),
    );
    Ok(())
}

/// One bench row.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub workers: usize,
    pub total_seconds: f64,
    pub epoch_seconds: f64,
    pub train_seconds: f64,
    pub test_errors: usize,
}

impl BenchRow {
    fn from_reports(workers: usize, reports: &[TrainReport]) -> Self {
        let n = reports.len() as f64;
        let mean = |f: fn(&TrainReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        let last = reports.last().expect("at least one repetition");
        let epochs = last.epochs.len().max(1) as f64;
        BenchRow {
            workers,
            total_seconds: mean(TrainReport::total_seconds),
            epoch_seconds: mean(|r| r.epochs.iter().map(|e| e.seconds()).sum::<f64>()) / epochs,
            train_seconds: mean(TrainReport::train_seconds),
            test_errors: last.final_test_errors().unwrap_or(last.test_size),
        }
    }
}

/// Rows of one architecture with speedup and error diff against a p=1
/// baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub arch: String,
    pub epochs: usize,
    pub train_images: usize,
    pub test_images: usize,
    pub test_size: usize,
    pub baseline: BenchRow,
    pub rows: Vec<BenchRow>,
}

impl BenchResult {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{BENCH_CSV_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.6},{:.6},{:.6},{:.4},{},{},{}",
                self.arch,
                r.workers,
                self.epochs,
                self.train_images,
                self.test_images,
                r.total_seconds,
                r.epoch_seconds,
                r.train_seconds,
                self.baseline.total_seconds / r.total_seconds,
                r.test_errors,
                self.test_size,
                r.test_errors as i64 - self.baseline.test_errors as i64,
            );
        }
        out
    }

    /// Measured points for `model calibrate`.
    pub fn calibration(&self) -> CalibrationSet {
        let mut set = CalibrationSet::default();
        for r in &self.rows {
            let w = WorkloadSpec::new(
                self.train_images as u64,
                self.test_images as u64,
                self.epochs as u64,
                r.workers as u64,
            );
            set.push(w, r.total_seconds);
        }
        set
    }
}

/// The workers=1 row for `arch` in an earlier bench CSV.
fn read_baseline(path: &Path, arch: &str) -> CliResult<BenchRow> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let bad = |line: usize, message: String| {
        CliError::Core(Error::Parse {
            path: path.display().to_string(),
            line,
            message,
        })
    };
    let mut lines = text.lines().enumerate();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| bad(1, "empty file".into()))?
        .1
        .split(',')
        .map(str::trim)
        .collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| bad(1, format!("missing column `{name}`")))
    };
    let (c_arch, c_workers) = (col("arch")?, col("workers")?);
    let (c_total, c_epoch, c_train) = (col("total_seconds")?, col("epoch_seconds")?, col("train_seconds")?);
    let c_errors = col("test_errors")?;
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let cell = |c: usize| cells.get(c).copied().ok_or_else(|| bad(idx + 1, "short row".into()));
        if cell(c_arch)? != arch || cell(c_workers)? != "1" {
            continue;
        }
        let num = |c: usize| -> CliResult<f64> {
            let v = cell(c)?;
            v.parse().map_err(|_| bad(idx + 1, format!("bad number `{v}`")))
        };
        let errors = cell(c_errors)?;
        return Ok(BenchRow {
            workers: 1,
            total_seconds: num(c_total)?,
            epoch_seconds: num(c_epoch)?,
            train_seconds: num(c_train)?,
            test_errors: errors
                .parse()
                .map_err(|_| bad(idx + 1, format!("bad count `{errors}`")))?,
        });
    }
    Err(CliError::Usage(format!(
        "{}: no workers=1 row for arch `{arch}`",
        path.display()
    )))
}

pub fn cmd_bench(args: &BenchArgs) -> CliResult<()> {
    let mut workers = args.workers.clone();
    workers.sort_unstable();
    workers.dedup();
    if workers.is_empty() || workers[0] == 0 {
        return Err(CliError::Usage("worker counts must be at least 1".into()));
    }
    if workers[0] != 1 && args.baseline_csv.is_none() {
        return Err(CliError::Usage(
            "worker list must include 1 as the baseline (or pass --baseline-csv)".into(),
        ));
    }
    if args.repeats == 0 {
        return Err(CliError::Usage("--repeats must be at least 1".into()));
    }
    let cfg = RunConfig::resolve(&args.run)?;
    let imported = match &args.baseline_csv {
        Some(path) if workers[0] != 1 => Some(read_baseline(path, &cfg.arch_name)?),
        _ => None,
    };
    create_dir(&cfg.out)?;

    let mut rows = Vec::new();
    let mut test_size = cfg.data.test.len();
    for &p in &workers {
        if args.warmup {
            let mut warm = cfg.options(p);
            warm.hyper.epochs = 1;
            train(&cfg.network, &cfg.data, &warm)?;
        }
        let mut reports = Vec::with_capacity(args.repeats);
        for _ in 0..args.repeats {
            let (report, _, _) = train(&cfg.network, &cfg.data, &cfg.options(p))?;
            reports.push(report);
        }
        let last = reports.last().expect("repeats >= 1");
        test_size = last.test_size;
        write_file(&cfg.out.join(format!("report_p{p}.csv")), &last.to_csv())?;
        let row = BenchRow::from_reports(p, &reports);
        eprintln!(
            "{} p={p} total={:.3}s test_errors={}",
            cfg.arch_name, row.total_seconds, row.test_errors
        );
        rows.push(row);
    }

    let baseline = match imported {
        Some(b) => b,
        None => rows[0].clone(),
    };
    let result = BenchResult {
        arch: cfg.arch_name.clone(),
        epochs: cfg.hyper.epochs,
        train_images: cfg.data.train.len(),
        test_images: cfg.data.test.len(),
        test_size,
        baseline,
        rows,
    };
    let csv = result.to_csv();
    write_file(&cfg.out.join("bench.csv"), &csv)?;
    write_file(&cfg.out.join("calibration.csv"), &result.calibration().to_csv())?;
    print!("{csv}");
    Ok(())
}
