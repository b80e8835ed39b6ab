//! Full-batch training with early stopping, and multi-trial summaries.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::dataset::DatasetBundle;
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::layers::{build_model, Model, ModelConfig, ParamKind, Variant};
use crate::math;
use crate::optim::{glorot_init, Adam, AdamConfig};
use crate::rng::{self, DropoutStreams, INIT_EPOCH};

/// Version of the serialized [`RunReport`] layout.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub lr: f64,
    pub weight_decay: f64,
    /// Whether attention vectors receive the L2 term as well.
    pub decay_attention: bool,
    pub patience: usize,
    pub max_epochs: usize,
    pub trials: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Protocol defaults; `pubmed` gets the larger learning rate and decay.
    pub fn for_dataset(dataset: &str, variant: Variant) -> Self {
        let pubmed = dataset.eq_ignore_ascii_case("pubmed");
        Self {
            model: ModelConfig::new(variant),
            lr: if pubmed { 0.01 } else { 0.005 },
            weight_decay: if pubmed { 1e-3 } else { 3e-4 },
            decay_attention: true,
            patience: 100,
            max_epochs: 1000,
            trials: 100,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(alloc::format!("learning rate {} must be positive", self.lr)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config("weight decay must be non-negative".into()));
        }
        if self.patience == 0 || self.max_epochs == 0 || self.trials == 0 {
            return Err(Error::Config("patience, max_epochs and trials must be positive".into()));
        }
        if self.patience > self.max_epochs {
            return Err(Error::Config("patience exceeds max_epochs".into()));
        }
        Ok(())
    }
}

/// Tracks the best validation loss. An epoch improves only with a strictly
/// smaller loss, so ties keep the earliest epoch.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best_loss: f64,
    best_epoch: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observation {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best_loss: f64::INFINITY,
            best_epoch: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, loss: f64) -> Observation {
        let improved = loss < self.best_loss;
        if improved {
            self.best_loss = loss;
            self.best_epoch = epoch;
        }
        Observation {
            improved,
            stop: epoch - self.best_epoch >= self.patience,
        }
    }

    pub fn best_loss(&self) -> f64 {
        self.best_loss
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

/// Mean softmax cross-entropy of `logits` over `mask`.
pub fn masked_cross_entropy(logits: &DenseMatrix, labels: &[usize], mask: &[usize]) -> f64 {
    let mut total = 0.0;
    for &i in mask {
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + math::ln(row.iter().map(|&x| math::exp(x - max)).sum::<f64>());
        total += lse - row[labels[i]];
    }
    total / mask.len() as f64
}

/// Fraction of `mask` whose arg-max logit equals the label; ties go to the
/// lowest class index.
pub fn accuracy(logits: &DenseMatrix, labels: &[usize], mask: &[usize]) -> f64 {
    let correct = mask
        .iter()
        .filter(|&&i| {
            let row = logits.row(i);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best == labels[i]
        })
        .count();
    correct as f64 / mask.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub best_val_loss: f64,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DivergedTrial {
    pub trial: usize,
    pub epoch: usize,
}

/// Parameters and bookkeeping of one finished trial.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: Model,
    pub result: TrialResult,
    /// Validation loss of every epoch, in order.
    pub val_losses: Vec<f64>,
}

/// Shared state for all trials of one run: the dataset tensors and a model
/// template whose structural operators are built once.
#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainConfig,
    template: Model,
    features: Arc<DenseMatrix>,
    labels: Arc<Vec<usize>>,
    train: Arc<Vec<usize>>,
    val: Vec<usize>,
    test: Vec<usize>,
    decay: Vec<bool>,
}

impl Trainer {
    pub fn new(bundle: &DatasetBundle, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        bundle.validate()?;
        let graphs = bundle.graphs_for(config.model.variant)?;
        let template = build_model(
            config.model,
            graphs.inputs(),
            bundle.n_features(),
            bundle.n_classes(),
            config.seed,
        )?;
        let decay = template
            .param_info()
            .iter()
            .map(|p| config.decay_attention || p.kind != ParamKind::Attention)
            .collect();
        Ok(Self {
            config,
            template,
            features: Arc::new(bundle.features.clone()),
            labels: Arc::new(bundle.labels.clone()),
            train: Arc::new(bundle.split.train.clone()),
            val: bundle.split.val.clone(),
            test: bundle.split.test.clone(),
            decay,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn template(&self) -> &Model {
        &self.template
    }

    /// Fresh parameters drawn from the initialization stream of `seed`.
    pub fn initial_model(&self, seed: u64) -> Model {
        let mut model = self.template.clone();
        let mut rng = rng::stream(seed, INIT_EPOCH, 0);
        let fresh = model
            .params()
            .iter()
            .map(|p| glorot_init(p.rows(), p.cols(), &mut rng))
            .collect();
        model.set_params(fresh).expect("same shapes");
        model
    }

    /// Trains trial `trial` with its derived seed.
    pub fn run_trial(&self, trial: usize) -> Result<TrialResult> {
        let seed = rng::trial_seed(self.config.seed, trial as u64);
        self.train_once(trial, seed).map(|t| t.result)
    }

    /// One complete training run: Adam steps with dropout, an evaluation
    /// pass per epoch for the validation loss, early stopping, then the
    /// best parameters are restored and scored once on the test set.
    pub fn train_once(&self, trial: usize, seed: u64) -> Result<TrainedModel> {
        let mut model = self.initial_model(seed);
        let mut adam = Adam::new(
            AdamConfig::new(self.config.lr, self.config.weight_decay),
            model.params(),
        );
        let mut stopper = EarlyStopping::new(self.config.patience);
        let mut best_params = model.params().to_vec();
        let mut val_losses = Vec::new();
        let mut epochs_run = 0;

        for epoch in 1..=self.config.max_epochs {
            epochs_run = epoch;
            let grads = self.gradients(&model, seed, epoch)?;
            adam.step(model.params_mut(), &grads, &self.decay)?;

            let logits = model.predict(&self.features)?;
            let val_loss = masked_cross_entropy(&logits, &self.labels, &self.val);
            if !val_loss.is_finite() {
                return Err(Error::NumericalDivergence { epoch });
            }
            val_losses.push(val_loss);
            let seen = stopper.observe(epoch, val_loss);
            if seen.improved {
                best_params.clone_from_slice(model.params());
            }
            if seen.stop {
                break;
            }
        }

        model.set_params(best_params)?;
        let logits = model.predict(&self.features)?;
        let result = TrialResult {
            trial,
            seed,
            best_epoch: stopper.best_epoch(),
            epochs_run,
            best_val_loss: stopper.best_loss(),
            val_accuracy: accuracy(&logits, &self.labels, &self.val),
            test_accuracy: accuracy(&logits, &self.labels, &self.test),
        };
        Ok(TrainedModel {
            model,
            result,
            val_losses,
        })
    }

    fn gradients(&self, model: &Model, seed: u64, epoch: usize) -> Result<Vec<DenseMatrix>> {
        let mut tape = Tape::new();
        let params = model.bind(&mut tape);
        let x = tape.constant_shared(Arc::clone(&self.features));
        let mut streams = DropoutStreams::new(seed, epoch as u64);
        let logits = model.forward(&mut tape, &params, x, Some(&mut streams))?;
        let loss = tape.cross_entropy_masked(logits, &self.labels, &self.train)?;
        if !tape.value(loss).get(0, 0).is_finite() {
            return Err(Error::NumericalDivergence { epoch });
        }
        tape.backward(loss)?;
        Ok(collect_grads(&tape, &params))
    }

    /// Training loss and its gradient at the model's current parameters,
    /// without dropout.
    pub fn loss_and_gradients(&self, model: &Model) -> Result<(f64, Vec<DenseMatrix>)> {
        let mut tape = Tape::new();
        let params = model.bind(&mut tape);
        let x = tape.constant_shared(Arc::clone(&self.features));
        let logits = model.forward(&mut tape, &params, x, None)?;
        let loss = tape.cross_entropy_masked(logits, &self.labels, &self.train)?;
        tape.backward(loss)?;
        Ok((tape.value(loss).get(0, 0), collect_grads(&tape, &params)))
    }

    /// Validation loss at the model's current parameters.
    pub fn val_loss(&self, model: &Model) -> Result<f64> {
        let logits = model.predict(&self.features)?;
        Ok(masked_cross_entropy(&logits, &self.labels, &self.val))
    }

    /// All trials in order on the calling thread.
    pub fn run_sequential(&self) -> Vec<Result<TrialResult>> {
        (0..self.config.trials).map(|t| self.run_trial(t)).collect()
    }
}

fn collect_grads(tape: &Tape, params: &[Var]) -> Vec<DenseMatrix> {
    params
        .iter()
        .map(|&v| {
            tape.grad(v).cloned().unwrap_or_else(|| {
                let (r, c) = tape.value(v).shape();
                DenseMatrix::zeros(r, c)
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation (`n − 1` divisor); zero for one trial.
    pub std: f64,
    pub completed: usize,
    pub diverged: usize,
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, math::sqrt(ss / (n - 1) as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub code_version: String,
    pub dataset: String,
    pub config: TrainConfig,
    pub trials: Vec<TrialResult>,
    pub diverged: Vec<DivergedTrial>,
    pub summary: Summary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_seconds: Option<f64>,
}

impl RunReport {
    /// Collects trial outcomes in trial order. Diverged trials are counted
    /// and excluded from the statistics; any other error is returned.
    pub fn assemble(
        dataset: &str,
        code_version: &str,
        config: TrainConfig,
        outcomes: Vec<Result<TrialResult>>,
    ) -> Result<Self> {
        let total = outcomes.len();
        let mut trials = Vec::with_capacity(total);
        let mut diverged = Vec::new();
        for (trial, outcome) in outcomes.into_iter().enumerate() {
            match outcome {
                Ok(r) => trials.push(r),
                Err(Error::NumericalDivergence { epoch }) => diverged.push(DivergedTrial { trial, epoch }),
                Err(e) => return Err(e),
            }
        }
        if trials.is_empty() {
            return Err(Error::AllTrialsDiverged(total));
        }
        let accs: Vec<f64> = trials.iter().map(|t| t.test_accuracy).collect();
        let (mean, std) = mean_std(&accs);
        Ok(Self {
            schema_version: REPORT_SCHEMA_VERSION,
            code_version: code_version.into(),
            dataset: dataset.into(),
            config,
            summary: Summary {
                mean,
                std,
                completed: trials.len(),
                diverged: diverged.len(),
            },
            trials,
            diverged,
            wall_clock_seconds: None,
        })
    }
}
