//! Optimization: AdamW with decoupled weight decay, the epoch loop with
//! best-checkpoint selection on validation accuracy, weighted-accuracy
//! evaluation, and grid search over learning rate and weight decay.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dataset::LabeledExample;
use crate::model::{Model, ModelError, TrainItem, VariantKind};
use crate::params::{Grads, ParamStore};
use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    DivergedLoss { epoch: usize, batch: usize },
    #[error("empty {0} set")]
    EmptySet(&'static str),
    #[error("all grid cells failed")]
    AllCellsFailed,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Training hyperparameters, including the grid-search space.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub grid_learning_rates: Vec<f64>,
    pub grid_weight_decays: Vec<f64>,
    pub seed: u64,
    pub variant: VariantKind,
    pub use_example_weights: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 32,
            learning_rate: 1e-3,
            weight_decay: 0.0,
            grid_learning_rates: vec![1e-3, 5e-4, 1e-4],
            grid_weight_decays: vec![0.0, 1e-2],
            seed: 42,
            variant: VariantKind::Full,
            use_example_weights: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.batch_size == 0 {
            return Err("batch_size must be positive".into());
        }
        if self.learning_rate < 0.0 {
            return Err("learning_rate must be non-negative".into());
        }
        if self.grid_learning_rates.is_empty() || self.grid_weight_decays.is_empty() {
            return Err("grid lists must be non-empty".into());
        }
        Ok(())
    }
}

/// AdamW: adaptive moments with weight decay decoupled from the gradient.
pub struct AdamW {
    learning_rate: f64,
    weight_decay: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step_count: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamW {
    pub fn new(params: &ParamStore, learning_rate: f64, weight_decay: f64) -> Self {
        let zeros: Vec<Tensor> = params
            .ids()
            .map(|id| {
                let (r, c) = params.get(id).shape();
                Tensor::zeros(r, c)
            })
            .collect();
        Self {
            learning_rate,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step_count: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &Grads) {
        self.step_count += 1;
        let bias1 = 1.0 - self.beta1.powi(self.step_count as i32);
        let bias2 = 1.0 - self.beta2.powi(self.step_count as i32);
        for id in params.ids() {
            let g = grads.get(id).data();
            let m = self.m[id.0].data_mut();
            let v = self.v[id.0].data_mut();
            let p = params.get_mut(id).data_mut();
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                p[i] -= self.learning_rate
                    * (m_hat / (v_hat.sqrt() + self.eps) + self.weight_decay * p[i]);
            }
        }
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

/// Result of a training run. The model is left holding the parameters of
/// the epoch with the best validation accuracy (possibly the initial ones).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
}

/// Weighted-accuracy evaluation report.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// correct weight / total weight.
    pub accuracy: f64,
    pub n_examples: usize,
    pub n_weighted: u64,
    /// Indexed by label: (total weight, correctly predicted weight).
    pub per_class: [(u64, u64); 2],
}

/// Evaluate any predictor over weighted examples.
pub fn evaluate_with<F>(predict: F, examples: &[LabeledExample]) -> Result<EvalReport, TrainError>
where
    F: Fn(&str) -> Result<u8, String> + Sync + Send,
{
    if examples.is_empty() {
        return Err(TrainError::EmptySet("evaluation"));
    }
    let predictions = crate::par::map_slice(examples, |ex| predict(&ex.first_name));
    let mut report = EvalReport {
        accuracy: 0.0,
        n_examples: examples.len(),
        n_weighted: 0,
        per_class: [(0, 0); 2],
    };
    let mut correct = 0u64;
    for (example, prediction) in examples.iter().zip(predictions) {
        let got = prediction.map_err(|e| {
            TrainError::Model(ModelError::InvalidConfig(format!(
                "prediction failed for '{}': {e}",
                example.first_name
            )))
        })?;
        let class = &mut report.per_class[usize::from(example.label)];
        class.0 += example.weight;
        report.n_weighted += example.weight;
        if got == example.label {
            class.1 += example.weight;
            correct += example.weight;
        }
    }
    report.accuracy = correct as f64 / report.n_weighted as f64;
    Ok(report)
}

pub fn evaluate_model(model: &Model, examples: &[LabeledExample]) -> Result<EvalReport, TrainError> {
    evaluate_with(
        |name| model.predict(name).map(|p| p.label).map_err(|e| e.to_string()),
        examples,
    )
}

pub fn evaluate_nb(
    model: &crate::baselines::NBModel,
    examples: &[LabeledExample],
) -> Result<EvalReport, TrainError> {
    evaluate_with(
        |name| crate::baselines::nb_predict(model, name).map(|p| p.label).map_err(|e| e.to_string()),
        examples,
    )
}

fn example_weight(config: &TrainConfig, example: &LabeledExample) -> f64 {
    if config.use_example_weights {
        example.weight as f64
    } else {
        1.0
    }
}

fn dropout_seed(config: &TrainConfig, epoch: usize, index: usize) -> u64 {
    config
        .seed
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add((epoch as u64) << 32)
        .wrapping_add(index as u64)
}

/// Minimize the summed cross-entropy with AdamW. Per-epoch train loss is
/// the weighted mean example loss; the checkpoint with the best validation
/// accuracy is kept (initial parameters count as epoch 0). Deterministic
/// for a fixed config and seed.
pub fn train(
    config: &TrainConfig,
    model: &mut Model,
    train_set: &[LabeledExample],
    val_set: &[LabeledExample],
) -> Result<TrainOutcome, TrainError> {
    if train_set.is_empty() {
        return Err(TrainError::EmptySet("training"));
    }
    if val_set.is_empty() {
        return Err(TrainError::EmptySet("validation"));
    }

    let mut optimizer = AdamW::new(model.params(), config.learning_rate, config.weight_decay);
    let mut best_params: Vec<(String, Tensor)> =
        model.params().iter().map(|(n, t)| (n.to_string(), t.clone())).collect();
    let mut best_val = evaluate_model(model, val_set)?.accuracy;
    let mut best_epoch = 0usize;
    let mut history = Vec::with_capacity(config.epochs);

    let dropout_active = model.config().dropout > 0.0;
    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(
            config.seed.wrapping_add((epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)),
        );
        order.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        let mut epoch_weight = 0.0;
        for (batch_no, chunk) in order.chunks(config.batch_size).enumerate() {
            let items: Vec<TrainItem> = chunk
                .iter()
                .map(|&i| TrainItem {
                    name: train_set[i].first_name.clone(),
                    label: train_set[i].label,
                    weight: example_weight(config, &train_set[i]),
                    dropout_seed: dropout_active.then(|| dropout_seed(config, epoch, i)),
                })
                .collect();
            let batch_weight: f64 = items.iter().map(|it| it.weight).sum();
            let (loss_sum, mut grads) = model.batch_loss_grads(&items)?;
            if !loss_sum.is_finite() || !grads.is_finite() {
                return Err(TrainError::DivergedLoss { epoch, batch: batch_no });
            }
            grads.scale_assign(1.0 / batch_weight);
            optimizer.step(model.params_mut(), &grads);
            epoch_loss += loss_sum;
            epoch_weight += batch_weight;
        }

        let val_accuracy = evaluate_model(model, val_set)?.accuracy;
        history.push(EpochStats { epoch, train_loss: epoch_loss / epoch_weight, val_accuracy });
        if val_accuracy > best_val {
            best_val = val_accuracy;
            best_epoch = epoch;
            best_params =
                model.params().iter().map(|(n, t)| (n.to_string(), t.clone())).collect();
        }
    }

    model.load_params(&best_params)?;
    Ok(TrainOutcome { history, best_epoch, best_val_accuracy: best_val })
}

/// One grid-search cell result.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub val_accuracy: Option<f64>,
    pub status: String,
    pub best: bool,
}

/// Train one model per grid cell (in parallel when enabled), keep the one
/// with the best validation accuracy. Ties go to the lower learning rate,
/// then the lower weight decay. Failed cells are recorded and skipped; the
/// search fails only when every cell fails.
pub fn grid_search<F>(
    config: &TrainConfig,
    model_factory: F,
    train_set: &[LabeledExample],
    val_set: &[LabeledExample],
) -> Result<(Vec<GridCell>, Model, TrainOutcome), TrainError>
where
    F: Fn() -> Result<Model, ModelError> + Sync + Send,
{
    let mut lrs = config.grid_learning_rates.clone();
    let mut wds = config.grid_weight_decays.clone();
    lrs.sort_by(f64::total_cmp);
    wds.sort_by(f64::total_cmp);
    let cells: Vec<(f64, f64)> =
        lrs.iter().flat_map(|&lr| wds.iter().map(move |&wd| (lr, wd))).collect();

    let results = crate::par::map_slice(&cells, |&(lr, wd)| {
        let cell_config = TrainConfig { learning_rate: lr, weight_decay: wd, ..config.clone() };
        match model_factory() {
            Ok(mut model) => match train(&cell_config, &mut model, train_set, val_set) {
                Ok(outcome) => (lr, wd, Ok((model, outcome))),
                Err(e) => (lr, wd, Err(e.to_string())),
            },
            Err(e) => (lr, wd, Err(e.to_string())),
        }
    });

    let mut cells_out = Vec::with_capacity(results.len());
    let mut best: Option<(usize, f64, Model, TrainOutcome)> = None;
    for (idx, (lr, wd, result)) in results.into_iter().enumerate() {
        match result {
            Ok((model, outcome)) => {
                let acc = outcome.best_val_accuracy;
                cells_out.push(GridCell {
                    learning_rate: lr,
                    weight_decay: wd,
                    val_accuracy: Some(acc),
                    status: "ok".to_string(),
                    best: false,
                });
                // cells are ordered (lr asc, wd asc); strict > keeps the
                // earliest maximum, which is the tie-break rule
                let replace = match &best {
                    Some((_, best_acc, _, _)) => acc > *best_acc,
                    None => true,
                };
                if replace {
                    best = Some((idx, acc, model, outcome));
                }
            }
            Err(message) => cells_out.push(GridCell {
                learning_rate: lr,
                weight_decay: wd,
                val_accuracy: None,
                status: format!("error: {message}"),
                best: false,
            }),
        }
    }
    let (best_idx, _, model, outcome) = best.ok_or(TrainError::AllCellsFailed)?;
    cells_out[best_idx].best = true;
    Ok((cells_out, model, outcome))
}

/// Write training history as `epoch,train_loss,val_accuracy`.
pub fn write_history_csv(history: &[EpochStats], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "epoch,train_loss,val_accuracy")?;
    for row in history {
        writeln!(out, "{},{},{}", row.epoch, row.train_loss, row.val_accuracy)?;
    }
    Ok(())
}

/// Write grid results as `lr,wd,val_accuracy,status`.
pub fn write_grid_csv(cells: &[GridCell], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "lr,wd,val_accuracy,status")?;
    for cell in cells {
        let acc = cell.val_accuracy.map_or(String::new(), |a| a.to_string());
        let status = if cell.best { format!("{} (best)", cell.status) } else { cell.status.clone() };
        writeln!(out, "{},{},{},{}", cell.learning_rate, cell.weight_decay, acc, status)?;
    }
    Ok(())
}
