//! Command implementations behind the `chgat` binary: graph construction,
//! training, evaluation, prediction, and dataset statistics.
//!
//! Exit codes: 0 success, 2 input error, 3 training failure. The config
//! file is flat `key = value` text; `CHGAT_SEED` overrides its seed.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::baselines::{nb_predict, nb_train, NBModel};
use crate::chars::CharacterTable;
use crate::checkpoint;
use crate::dataset::{compute_stats, derive_labels, load_name_records, split, LabeledExample};
use crate::graph::{count_graphs, write_graph_dump, HetGraphBundle};
use crate::model::{Model, ModelConfig, Prediction, VariantKind};
use crate::training::{
    evaluate_model, evaluate_nb, grid_search, write_grid_csv, write_history_csv, EvalReport,
    TrainConfig, TrainError,
};

/// Outcome of a command: its exit code and the text for standard output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandResult {
    pub exit_code: i32,
    pub summary: String,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT_ERROR: i32 = 2;
pub const EXIT_TRAINING_FAILURE: i32 = 3;

enum CmdError {
    Input(String),
    Training(String),
}

impl CmdError {
    fn result(self) -> CommandResult {
        match self {
            CmdError::Input(msg) => {
                CommandResult { exit_code: EXIT_INPUT_ERROR, summary: format!("error: {msg}\n") }
            }
            CmdError::Training(msg) => CommandResult {
                exit_code: EXIT_TRAINING_FAILURE,
                summary: format!("error: {msg}\n"),
            },
        }
    }
}

fn input_err(e: impl std::fmt::Display) -> CmdError {
    CmdError::Input(e.to_string())
}

fn finish(result: Result<String, CmdError>) -> CommandResult {
    match result {
        Ok(summary) => CommandResult { exit_code: EXIT_OK, summary },
        Err(e) => e.result(),
    }
}

/// Full run configuration parsed from a `key = value` file: training and
/// model hyperparameters plus split ratios and the NB smoothing constant.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub model: ModelConfig,
    pub split_ratios: (f64, f64, f64),
    pub nb_alpha: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            model: ModelConfig::default(),
            split_ratios: (0.90, 0.05, 0.05),
            nb_alpha: 1.0,
        }
    }
}

fn parse_f64_list(value: &str) -> Result<Vec<f64>, String> {
    value
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| format!("bad number '{v}'")))
        .collect()
}

/// Parse a config file. Unknown keys are rejected. When the file pins
/// `learning_rate`/`weight_decay` without a grid list, the grid collapses
/// to that single value.
pub fn parse_run_config(text: &str) -> Result<RunConfig, String> {
    let mut config = RunConfig::default();
    let mut saw_lr = false;
    let mut saw_wd = false;
    let mut saw_grid_lr = false;
    let mut saw_grid_wd = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| format!("line {}: expected 'key = value'", idx + 1))?;
        let bad = |v: &str| format!("line {}: bad value '{v}' for {key}", idx + 1);
        match key {
            "epochs" => config.train.epochs = value.parse().map_err(|_| bad(value))?,
            "batch_size" => config.train.batch_size = value.parse().map_err(|_| bad(value))?,
            "learning_rate" => {
                config.train.learning_rate = value.parse().map_err(|_| bad(value))?;
                saw_lr = true;
            }
            "weight_decay" => {
                config.train.weight_decay = value.parse().map_err(|_| bad(value))?;
                saw_wd = true;
            }
            "grid_learning_rates" => {
                config.train.grid_learning_rates = parse_f64_list(value).map_err(|_| bad(value))?;
                saw_grid_lr = true;
            }
            "grid_weight_decays" => {
                config.train.grid_weight_decays = parse_f64_list(value).map_err(|_| bad(value))?;
                saw_grid_wd = true;
            }
            "seed" => config.train.seed = value.parse().map_err(|_| bad(value))?,
            "variant" => {
                config.train.variant = value.parse().map_err(|e: String| format!("line {}: {e}", idx + 1))?
            }
            "use_example_weights" => {
                config.train.use_example_weights = value.parse().map_err(|_| bad(value))?
            }
            "dim" => config.model.dim = value.parse().map_err(|_| bad(value))?,
            "heads" => config.model.heads = value.parse().map_err(|_| bad(value))?,
            "encoder_layers" => config.model.encoder_layers = value.parse().map_err(|_| bad(value))?,
            "max_name_len" => config.model.max_name_len = value.parse().map_err(|_| bad(value))?,
            "dropout" => config.model.dropout = value.parse().map_err(|_| bad(value))?,
            "pron_neighbor_cap" => {
                config.model.pron_neighbor_cap = value.parse().map_err(|_| bad(value))?
            }
            "split" => {
                let parts = parse_f64_list(value).map_err(|_| bad(value))?;
                if parts.len() != 3 {
                    return Err(bad(value));
                }
                config.split_ratios = (parts[0], parts[1], parts[2]);
            }
            "nb_alpha" => config.nb_alpha = value.parse().map_err(|_| bad(value))?,
            other => return Err(format!("line {}: unknown key '{other}'", idx + 1)),
        }
    }
    if saw_lr && !saw_grid_lr {
        config.train.grid_learning_rates = vec![config.train.learning_rate];
    }
    if saw_wd && !saw_grid_wd {
        config.train.grid_weight_decays = vec![config.train.weight_decay];
    }
    config.train.validate()?;
    config.model.validate().map_err(|e| e.to_string())?;
    Ok(config)
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn load_examples(path: &Path) -> Result<(Vec<LabeledExample>, usize, usize), CmdError> {
    let records = load_name_records(path).map_err(input_err)?;
    let total = records.len();
    let (examples, ties) = derive_labels(&records);
    Ok((examples, ties, total))
}

fn format_eval(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "accuracy: {}", report.accuracy);
    let _ = writeln!(out, "n_examples: {}", report.n_examples);
    let _ = writeln!(out, "n_weighted: {}", report.n_weighted);
    let _ = writeln!(
        out,
        "class_male: total_weight={} correct_weight={}",
        report.per_class[0].0, report.per_class[0].1
    );
    let _ = writeln!(
        out,
        "class_female: total_weight={} correct_weight={}",
        report.per_class[1].0, report.per_class[1].1
    );
    out
}

/// Build all graphs for a character table, print per-type node and edge
/// counts, and optionally dump them as JSON lines to `out`.
pub fn cmd_build_graph(chars: &Path, out: &Path, dump: bool) -> CommandResult {
    finish((|| {
        let table = CharacterTable::load(chars).map_err(input_err)?;
        let bundle = HetGraphBundle::build(&table);
        let counts = count_graphs(&table, &bundle);
        let mut summary = String::new();
        let _ = writeln!(
            summary,
            "nodes: character={} semantic_component={} phonetic_component={} pronunciation={}",
            counts.character_nodes,
            counts.semantic_nodes,
            counts.phonetic_nodes,
            counts.pronunciation_nodes
        );
        let _ = writeln!(
            summary,
            "edges: char_sem={} char_phon={} char_pron={}",
            counts.char_sem_edges, counts.char_phon_edges, counts.char_pron_edges
        );
        let _ = writeln!(
            summary,
            "pronunciation meta-path pairs: {}",
            bundle.pronunciation.pair_count()
        );
        if dump {
            let mut buf = Vec::new();
            write_graph_dump(&table, &bundle, &mut buf).map_err(input_err)?;
            std::fs::write(out, buf).map_err(input_err)?;
            let _ = writeln!(summary, "dump written to {}", out.display());
        }
        Ok(summary)
    })())
}

/// Train a model (network variant or `nb`) with grid search, writing the
/// checkpoint, history CSV, grid CSV, and a run manifest into `out_dir`.
pub fn cmd_train(
    names: &Path,
    chars: &Path,
    config_path: &Path,
    variant: &str,
    out_dir: &Path,
) -> CommandResult {
    finish((|| {
        let config_text = std::fs::read_to_string(config_path)
            .map_err(|_| CmdError::Input(format!("config file missing: {}", config_path.display())))?;
        let mut config = parse_run_config(&config_text).map_err(CmdError::Input)?;
        if let Ok(seed) = std::env::var("CHGAT_SEED") {
            config.train.seed =
                seed.parse().map_err(|_| CmdError::Input(format!("bad CHGAT_SEED '{seed}'")))?;
        }
        let table = CharacterTable::load(chars).map_err(input_err)?;
        let (examples, ties, _) = load_examples(names)?;
        if examples.is_empty() {
            return Err(CmdError::Input("no labeled examples after dropping ties".into()));
        }
        let (train_set, val_set, test_set) = split(&examples, config.split_ratios, config.train.seed);

        std::fs::create_dir_all(out_dir).map_err(input_err)?;
        let names_bytes = std::fs::read(names).map_err(input_err)?;
        let chars_bytes = std::fs::read(chars).map_err(input_err)?;

        let mut summary = String::new();
        let _ = writeln!(
            summary,
            "examples: train={} val={} test={} (ties dropped: {ties})",
            train_set.len(),
            val_set.len(),
            test_set.len()
        );

        let mut manifest = String::new();
        let _ = writeln!(manifest, "seed = {}", config.train.seed);
        let _ = writeln!(manifest, "variant = {variant}");
        let _ = writeln!(manifest, "config_sha256 = {}", sha256_hex(config_text.as_bytes()));
        let _ = writeln!(manifest, "names_sha256 = {}", sha256_hex(&names_bytes));
        let _ = writeln!(manifest, "chars_sha256 = {}", sha256_hex(&chars_bytes));

        if variant == "nb" {
            let model = nb_train(&examples_for_nb(&train_set), config.nb_alpha)
                .map_err(|e| CmdError::Training(e.to_string()))?;
            let mut buf = Vec::new();
            model.save(&mut buf).map_err(input_err)?;
            let model_path = out_dir.join("nb_model.csv");
            std::fs::write(&model_path, &buf).map_err(input_err)?;
            let _ = writeln!(manifest, "model_sha256 = {}", sha256_hex(&buf));

            let train_report = evaluate_nb(&model, &train_set)
                .map_err(|e| CmdError::Training(e.to_string()))?;
            let _ = writeln!(summary, "train accuracy: {}", train_report.accuracy);
            if !val_set.is_empty() {
                let report =
                    evaluate_nb(&model, &val_set).map_err(|e| CmdError::Training(e.to_string()))?;
                let _ = writeln!(summary, "val accuracy: {}", report.accuracy);
            }
            if !test_set.is_empty() {
                let report =
                    evaluate_nb(&model, &test_set).map_err(|e| CmdError::Training(e.to_string()))?;
                let _ = writeln!(summary, "test accuracy: {}", report.accuracy);
            }
            std::fs::write(out_dir.join("manifest.txt"), &manifest).map_err(input_err)?;
            let _ = writeln!(summary, "model written to {}", model_path.display());
            return Ok(summary);
        }

        let kind: VariantKind =
            variant.parse().map_err(|e: String| CmdError::Input(e))?;
        config.train.variant = kind;
        let model_config = config.model.clone();
        let seed = config.train.seed;
        let factory = || Model::new(model_config.clone(), &table, kind, seed);

        let (cells, best_model, outcome) =
            grid_search(&config.train, factory, &train_set, &val_set).map_err(|e| match e {
                TrainError::AllCellsFailed => CmdError::Training(e.to_string()),
                TrainError::EmptySet(_) => CmdError::Input(e.to_string()),
                other => CmdError::Training(other.to_string()),
            })?;

        let checkpoint_path = out_dir.join("checkpoint.bin");
        let bytes = checkpoint::to_bytes(&best_model);
        std::fs::write(&checkpoint_path, &bytes).map_err(input_err)?;
        let _ = writeln!(manifest, "checkpoint_sha256 = {}", sha256_hex(&bytes));

        let mut history_csv = Vec::new();
        write_history_csv(&outcome.history, &mut history_csv).map_err(input_err)?;
        std::fs::write(out_dir.join("history.csv"), &history_csv).map_err(input_err)?;
        let mut grid_csv = Vec::new();
        write_grid_csv(&cells, &mut grid_csv).map_err(input_err)?;
        std::fs::write(out_dir.join("grid.csv"), &grid_csv).map_err(input_err)?;

        let best_cell = cells.iter().find(|c| c.best).expect("grid search returned a best cell");
        let _ = writeln!(manifest, "best_learning_rate = {}", best_cell.learning_rate);
        let _ = writeln!(manifest, "best_weight_decay = {}", best_cell.weight_decay);
        std::fs::write(out_dir.join("manifest.txt"), &manifest).map_err(input_err)?;

        let _ = writeln!(
            summary,
            "best cell: lr={} wd={} val_accuracy={}",
            best_cell.learning_rate, best_cell.weight_decay, outcome.best_val_accuracy
        );
        if !test_set.is_empty() {
            let report = evaluate_model(&best_model, &test_set)
                .map_err(|e| CmdError::Training(e.to_string()))?;
            let _ = writeln!(summary, "test accuracy: {}", report.accuracy);
        }
        let _ = writeln!(summary, "checkpoint written to {}", checkpoint_path.display());
        Ok(summary)
    })())
}

fn examples_for_nb(examples: &[LabeledExample]) -> Vec<LabeledExample> {
    examples.to_vec()
}

enum LoadedModel {
    Network(Box<Model>),
    NaiveBayes(NBModel),
}

fn load_model(path: &Path) -> Result<LoadedModel, CmdError> {
    let bytes = std::fs::read(path)
        .map_err(|_| CmdError::Input(format!("model file missing: {}", path.display())))?;
    if checkpoint::is_checkpoint(&bytes) {
        let model = checkpoint::from_bytes(&bytes).map_err(input_err)?;
        Ok(LoadedModel::Network(Box::new(model)))
    } else {
        let model = NBModel::load(std::io::Cursor::new(bytes)).map_err(input_err)?;
        Ok(LoadedModel::NaiveBayes(model))
    }
}

/// Evaluate a saved model over a whole name dataset.
pub fn cmd_eval(model_path: &Path, names: &Path) -> CommandResult {
    finish((|| {
        let model = load_model(model_path)?;
        let (examples, _, _) = load_examples(names)?;
        if examples.is_empty() {
            return Err(CmdError::Input("no labeled examples to evaluate".into()));
        }
        let report = match &model {
            LoadedModel::Network(m) => evaluate_model(m, &examples),
            LoadedModel::NaiveBayes(m) => evaluate_nb(m, &examples),
        }
        .map_err(input_err)?;
        Ok(format_eval(&report))
    })())
}

/// Predict genders for names, one per line: `name<TAB>label<TAB>probability`.
pub fn cmd_predict(model_path: &Path, names: &[String]) -> CommandResult {
    finish((|| {
        if names.is_empty() || names.iter().any(String::is_empty) {
            return Err(CmdError::Input("empty name argument".into()));
        }
        let model = load_model(model_path)?;
        let mut out = String::new();
        for name in names {
            let Prediction { label, probability } = match &model {
                LoadedModel::Network(m) => m.predict(name).map_err(input_err)?,
                LoadedModel::NaiveBayes(m) => nb_predict(m, name).map_err(input_err)?,
            };
            let letter = if label == 1 { 'F' } else { 'M' };
            let _ = writeln!(out, "{name}\t{letter}\t{probability:.4}");
        }
        Ok(out)
    })())
}

/// Print corpus statistics for a name dataset.
pub fn cmd_stats(names: &Path) -> CommandResult {
    finish((|| {
        let records = load_name_records(names).map_err(input_err)?;
        let stats = compute_stats(&records);
        let mut out = String::new();
        let _ = writeln!(out, "total_records: {}", stats.total_records);
        let _ = writeln!(out, "unique_names: {}", stats.unique_names);
        let _ = writeln!(out, "m_to_f_percent: {}", stats.m_to_f_percent);
        let _ = writeln!(out, "same_gender_flip_percent: {}", stats.same_gender_flip_percent);
        let _ = writeln!(out, "reversal_flip_percent: {}", stats.reversal_flip_percent);
        Ok(out)
    })())
}
