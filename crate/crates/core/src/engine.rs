//! The parallel training loop.
//!
//! Every epoch runs three phases separated by full barriers: Training over
//! the training set, then Validation and Testing, which only read the
//! weights. In each phase `p` workers claim images from a shared
//! [`WorkSampler`] until it is exhausted. During Training a worker runs
//! forward and backward propagation on its private [`WorkerState`] and
//! publishes each layer's gradient to the [`SharedWeights`] as soon as that
//! layer is done, without locks and without waiting for other workers.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use crate::affinity::{self, Affinity};
use crate::checkpoint::Checkpoint;
use crate::config::NetworkConfig;
use crate::error::{Error, Result};
use crate::mnist::{preprocess_into, Dataset, LabeledSet};
use crate::network::{build_network, Network};
use crate::propagate::{backward_with, forward_loaded, output_delta_into, predict};
use crate::sampler::WorkSampler;
use crate::state::WorkerState;
use crate::weights::{SharedWeights, WeightRead};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    /// Step size per published update.
    pub eta: f32,
    /// Weight decay: `w <- w - eta * (g + lambda * w)`.
    pub lambda: f32,
    pub epochs: usize,
    /// Multiplies `eta` after every epoch; 1 keeps it constant.
    pub eta_decay: f32,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            eta: 0.001,
            lambda: 0.0,
            epochs: 1,
            eta_decay: 1.0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::Argument(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Argument(format!(
                "lambda must be nonnegative, got {}",
                self.lambda
            )));
        }
        if !(self.eta_decay.is_finite() && self.eta_decay > 0.0) {
            return Err(Error::Argument(format!(
                "eta decay must be positive, got {}",
                self.eta_decay
            )));
        }
        Ok(())
    }

    /// Learning rate used during 0-based `epoch`.
    pub fn eta_at(&self, epoch: usize) -> f32 {
        (self.eta as f64 * (self.eta_decay as f64).powi(epoch as i32)) as f32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpochPhase {
    Training,
    Validation,
    Testing,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseStats {
    pub seconds: f64,
    /// Images claimed from the sampler.
    pub claimed: usize,
    /// Training: images whose last layer was published. Evaluation: images
    /// evaluated.
    pub completed: usize,
    /// Evaluation only: images whose prediction differs from the label.
    pub incorrect: usize,
}

fn run_workers<F>(workers: &mut [WorkerState<f32>], affinity: Affinity, body: F) -> (f64, usize, usize)
where
    F: Fn(&mut WorkerState<f32>) -> (usize, usize) + Sync,
{
    let start = Instant::now();
    let (a, b) = std::thread::scope(|scope| {
        let handles: Vec<_> = workers
            .iter_mut()
            .enumerate()
            .map(|(w, state)| {
                let body = &body;
                scope.spawn(move || {
                    affinity::pin_current(affinity, w);
                    body(state)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .fold((0, 0), |acc, x| (acc.0 + x.0, acc.1 + x.1))
    });
    (start.elapsed().as_secs_f64(), a, b)
}

/// Trains on every image of `set` exactly once, one worker thread per
/// entry of `workers`. Returns when all workers are done.
#[allow(clippy::too_many_arguments)]
pub fn run_training_phase(
    net: &Network,
    workers: &mut [WorkerState<f32>],
    sampler: &WorkSampler,
    weights: &SharedWeights,
    set: &LabeledSet,
    eta: f32,
    lambda: f32,
    affinity: Affinity,
) -> PhaseStats {
    sampler.reset(set.len());
    let published = AtomicUsize::new(0);
    let (seconds, claimed, _) = run_workers(workers, affinity, |state| {
        let mut delta = vec![0.0f32; net.classes()];
        let mut claimed = 0;
        while let Some(i) = sampler.next_index() {
            claimed += 1;
            preprocess_into(set.raw(i), state.input_mut());
            forward_loaded(net, state, weights);
            output_delta_into(state.output(), set.label(i), &mut delta)
                .expect("labels checked against the output layer");
            backward_with(net, state, weights, &delta, |layer, grads| {
                weights.publish(layer, grads, eta, lambda)
            });
            published.fetch_add(1, Ordering::Relaxed);
        }
        (claimed, 0)
    });
    PhaseStats {
        seconds,
        claimed,
        completed: published.into_inner(),
        incorrect: 0,
    }
}

/// Counts mispredicted images of `set` without touching the weights.
pub fn run_evaluation_phase<W: WeightRead<f32>>(
    net: &Network,
    workers: &mut [WorkerState<f32>],
    sampler: &WorkSampler,
    weights: &W,
    set: &LabeledSet,
    affinity: Affinity,
) -> PhaseStats {
    sampler.reset(set.len());
    let (seconds, claimed, incorrect) = run_workers(workers, affinity, |state| {
        let (mut claimed, mut wrong) = (0, 0);
        while let Some(i) = sampler.next_index() {
            claimed += 1;
            preprocess_into(set.raw(i), state.input_mut());
            let out = forward_loaded(net, state, weights);
            if predict(out) != set.label(i) {
                wrong += 1;
            }
        }
        (claimed, wrong)
    });
    PhaseStats {
        seconds,
        claimed,
        completed: claimed,
        incorrect,
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    pub workers: usize,
    pub hyper: Hyperparams,
    pub affinity: Affinity,
    /// When set, the weights and the report so far are written here at the
    /// end of every epoch.
    pub checkpoint_dir: Option<PathBuf>,
}

impl TrainOptions {
    pub fn new(workers: usize, hyper: Hyperparams) -> Self {
        TrainOptions {
            workers,
            hyper,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub eta: f32,
    pub train_seconds: f64,
    pub validation_seconds: f64,
    pub test_seconds: f64,
    pub checkpoint_seconds: f64,
    pub train_claims: usize,
    /// Training images fully published when the Validation phase began.
    pub published_before_validation: usize,
    pub validation_errors: usize,
    pub test_errors: usize,
}

impl EpochRecord {
    pub fn seconds(&self) -> f64 {
        self.train_seconds + self.validation_seconds + self.test_seconds + self.checkpoint_seconds
    }

    /// Training images per second.
    pub fn train_throughput(&self) -> f64 {
        self.train_claims as f64 / self.train_seconds
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub workers: usize,
    pub train_size: usize,
    pub validation_size: usize,
    pub test_size: usize,
    /// Creating the worker replicas.
    pub setup_seconds: f64,
    pub epochs: Vec<EpochRecord>,
}

pub const REPORT_CSV_HEADER: &str = "epoch,eta,train_seconds,validation_seconds,test_seconds,checkpoint_seconds,epoch_seconds,cumulative_seconds,train_images,validation_errors,validation_size,test_errors,test_size";

impl TrainReport {
    pub fn total_seconds(&self) -> f64 {
        self.setup_seconds + self.epochs.iter().map(EpochRecord::seconds).sum::<f64>()
    }

    pub fn train_seconds(&self) -> f64 {
        self.epochs.iter().map(|e| e.train_seconds).sum()
    }

    pub fn final_test_errors(&self) -> Option<usize> {
        self.epochs.last().map(|e| e.test_errors)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_CSV_HEADER);
        out.push('\n');
        let mut cumulative = self.setup_seconds;
        for e in &self.epochs {
            cumulative += e.seconds();
            let _ = writeln!(
                out,
                "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{},{},{}",
                e.epoch,
                e.eta,
                e.train_seconds,
                e.validation_seconds,
                e.test_seconds,
                e.checkpoint_seconds,
                e.seconds(),
                cumulative,
                e.train_claims,
                e.validation_errors,
                self.validation_size,
                e.test_errors,
                self.test_size
            );
        }
        out
    }
}

/// Builds the network from `config` and trains it.
pub fn train(
    config: &NetworkConfig,
    data: &Dataset,
    opts: &TrainOptions,
) -> Result<(TrainReport, SharedWeights, Network)> {
    let (weights, net) = build_network(config)?;
    let report = train_weights(&net, &weights, data, opts)?;
    Ok((report, weights, net))
}

/// Trains existing `weights` in place.
pub fn train_weights(
    net: &Network,
    weights: &SharedWeights,
    data: &Dataset,
    opts: &TrainOptions,
) -> Result<TrainReport> {
    if opts.workers < 1 {
        return Err(Error::Argument("worker count must be at least 1".into()));
    }
    opts.hyper.validate()?;
    if net.input_size() != (crate::mnist::INPUT_SIZE, crate::mnist::INPUT_SIZE) {
        return Err(Error::Argument(format!(
            "network input is {}x{}, images are preprocessed to {}x{}",
            net.input_size().0,
            net.input_size().1,
            crate::mnist::INPUT_SIZE,
            crate::mnist::INPUT_SIZE
        )));
    }
    let validation = data.validation();
    for set in [&data.train, validation, &data.test] {
        if let Some(&l) = set.labels.labels.iter().max() {
            if l as usize >= net.classes() {
                return Err(Error::Argument(format!(
                    "label {l} does not fit a {}-class output layer",
                    net.classes()
                )));
            }
        }
    }
    if let Some(dir) = &opts.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let setup = Instant::now();
    let mut workers: Vec<WorkerState<f32>> = (0..opts.workers).map(|_| WorkerState::new(net)).collect();
    let sampler = WorkSampler::new(0);
    let mut report = TrainReport {
        workers: opts.workers,
        train_size: data.train.len(),
        validation_size: validation.len(),
        test_size: data.test.len(),
        setup_seconds: setup.elapsed().as_secs_f64(),
        epochs: Vec::with_capacity(opts.hyper.epochs),
    };

    for epoch in 0..opts.hyper.epochs {
        let eta = opts.hyper.eta_at(epoch);
        let training = run_training_phase(
            net,
            &mut workers,
            &sampler,
            weights,
            &data.train,
            eta,
            opts.hyper.lambda,
            opts.affinity,
        );
        let validation_stats =
            run_evaluation_phase(net, &mut workers, &sampler, weights, validation, opts.affinity);
        let testing = run_evaluation_phase(net, &mut workers, &sampler, weights, &data.test, opts.affinity);
        report.epochs.push(EpochRecord {
            epoch: epoch + 1,
            eta,
            train_seconds: training.seconds,
            validation_seconds: validation_stats.seconds,
            test_seconds: testing.seconds,
            checkpoint_seconds: 0.0,
            train_claims: training.claimed,
            published_before_validation: training.completed,
            validation_errors: validation_stats.incorrect,
            test_errors: testing.incorrect,
        });
        if let Some(dir) = &opts.checkpoint_dir {
            let start = Instant::now();
            Checkpoint::capture(net, weights, (epoch + 1) as u32).write(dir.join("checkpoint.bin"))?;
            let path = dir.join("report.csv");
            std::fs::write(&path, report.to_csv()).map_err(|e| Error::io(&path, e))?;
            report.epochs.last_mut().expect("pushed above").checkpoint_seconds =
                start.elapsed().as_secs_f64();
        }
    }
    Ok(report)
}
