//! Baselines: the character-frequency Naïve Bayes classifier and the
//! constructor for the reduced network variants.
//!
//! The Naïve Bayes model keeps, for every character, the weighted number of
//! times it appears in male and female names, and scores a name by
//! multiplying the per-character conditionals under each gender.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use thiserror::Error;

use crate::chars::CharacterTable;
use crate::dataset::LabeledExample;
use crate::model::{Model, ModelConfig, ModelError, Prediction, VariantKind};

#[derive(Debug, Error)]
pub enum NbError {
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("empty name")]
    EmptyName,
    #[error("bad model file: {0}")]
    BadModelFile(String),
}

/// Character-frequency Naïve Bayes model with Laplace smoothing.
#[derive(Debug, Clone, PartialEq)]
pub struct NBModel {
    char_gender_counts: BTreeMap<char, (u64, u64)>,
    total_male: u64,
    total_female: u64,
    prior_male: f64,
    prior_female: f64,
    smoothing_alpha: f64,
}

impl NBModel {
    /// Assemble a model from raw counts; priors must sum to 1.
    pub fn from_counts(
        char_gender_counts: BTreeMap<char, (u64, u64)>,
        prior_male: f64,
        prior_female: f64,
        smoothing_alpha: f64,
    ) -> Self {
        assert!((prior_male + prior_female - 1.0).abs() < 1e-9, "priors must sum to 1");
        assert!(smoothing_alpha > 0.0, "smoothing alpha must be positive");
        let total_male = char_gender_counts.values().map(|c| c.0).sum();
        let total_female = char_gender_counts.values().map(|c| c.1).sum();
        Self { char_gender_counts, total_male, total_female, prior_male, prior_female, smoothing_alpha }
    }

    pub fn priors(&self) -> (f64, f64) {
        (self.prior_male, self.prior_female)
    }

    pub fn alpha(&self) -> f64 {
        self.smoothing_alpha
    }

    pub fn counts(&self, ch: char) -> Option<(u64, u64)> {
        self.char_gender_counts.get(&ch).copied()
    }

    pub fn vocab_size(&self) -> usize {
        self.char_gender_counts.len()
    }

    /// Smoothed P(char | gender) for both genders. Characters never seen in
    /// training contribute the smoothed uniform likelihood.
    pub fn conditional(&self, ch: char) -> (f64, f64) {
        let (cm, cf) = self.char_gender_counts.get(&ch).copied().unwrap_or((0, 0));
        let v = self.char_gender_counts.len() as f64;
        let a = self.smoothing_alpha;
        (
            (cm as f64 + a) / (self.total_male as f64 + a * v),
            (cf as f64 + a) / (self.total_female as f64 + a * v),
        )
    }

    /// Serialize as CSV with a one-line priors/alpha header.
    pub fn save(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(
            out,
            "# prior_male={:.17} prior_female={:.17} alpha={:.17}",
            self.prior_male, self.prior_female, self.smoothing_alpha
        )?;
        writeln!(out, "char,male_count,female_count")?;
        for (ch, (m, f)) in &self.char_gender_counts {
            writeln!(out, "{ch},{m},{f}")?;
        }
        Ok(())
    }

    pub fn load(input: impl BufRead) -> Result<Self, NbError> {
        let bad = |msg: &str| NbError::BadModelFile(msg.to_string());
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| bad("empty file"))?
            .map_err(|e| bad(&e.to_string()))?;
        let header = header
            .strip_prefix("# ")
            .ok_or_else(|| bad("missing priors header"))?;
        let mut prior_male = None;
        let mut prior_female = None;
        let mut alpha = None;
        for part in header.split_whitespace() {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| bad(&format!("bad header entry '{part}'")))?;
            let value: f64 = value.parse().map_err(|_| bad(&format!("bad number '{value}'")))?;
            match key {
                "prior_male" => prior_male = Some(value),
                "prior_female" => prior_female = Some(value),
                "alpha" => alpha = Some(value),
                other => return Err(bad(&format!("unknown header key '{other}'"))),
            }
        }
        let csv_header = lines
            .next()
            .ok_or_else(|| bad("missing csv header"))?
            .map_err(|e| bad(&e.to_string()))?;
        if csv_header != "char,male_count,female_count" {
            return Err(bad(&format!("bad csv header '{csv_header}'")));
        }
        let mut counts = BTreeMap::new();
        for line in lines {
            let line = line.map_err(|e| bad(&e.to_string()))?;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(bad(&format!("bad row '{line}'")));
            }
            let ch = fields[0]
                .chars()
                .next()
                .filter(|_| fields[0].chars().count() == 1)
                .ok_or_else(|| bad(&format!("bad char field '{}'", fields[0])))?;
            let m: u64 = fields[1].parse().map_err(|_| bad(&format!("bad count '{}'", fields[1])))?;
            let f: u64 = fields[2].parse().map_err(|_| bad(&format!("bad count '{}'", fields[2])))?;
            counts.insert(ch, (m, f));
        }
        Ok(Self::from_counts(
            counts,
            prior_male.ok_or_else(|| bad("missing prior_male"))?,
            prior_female.ok_or_else(|| bad("missing prior_female"))?,
            alpha.ok_or_else(|| bad("missing alpha"))?,
        ))
    }
}

/// Train the Naïve Bayes baseline: per-character counts accumulated with
/// example weights, Laplace smoothing, priors from weighted label totals.
pub fn nb_train(examples: &[LabeledExample], alpha: f64) -> Result<NBModel, NbError> {
    if examples.is_empty() {
        return Err(NbError::EmptyTrainingSet);
    }
    let mut counts: BTreeMap<char, (u64, u64)> = BTreeMap::new();
    let mut weight_male = 0u64;
    let mut weight_female = 0u64;
    for example in examples {
        if example.label == 1 {
            weight_female += example.weight;
        } else {
            weight_male += example.weight;
        }
        for ch in example.first_name.chars() {
            let entry = counts.entry(ch).or_insert((0, 0));
            if example.label == 1 {
                entry.1 += example.weight;
            } else {
                entry.0 += example.weight;
            }
        }
    }
    let total = (weight_male + weight_female) as f64;
    Ok(NBModel::from_counts(
        counts,
        weight_male as f64 / total,
        weight_female as f64 / total,
        alpha,
    ))
}

/// Posterior over genders by multiplying per-character conditionals into
/// the prior and normalizing. Returns the argmax label (ties go to male)
/// and its posterior probability.
pub fn nb_predict(model: &NBModel, name: &str) -> Result<Prediction, NbError> {
    if name.is_empty() {
        return Err(NbError::EmptyName);
    }
    let (prior_m, prior_f) = model.priors();
    let mut joint_m = prior_m;
    let mut joint_f = prior_f;
    for ch in name.chars() {
        let (pm, pf) = model.conditional(ch);
        joint_m *= pm;
        joint_f *= pf;
    }
    let posterior_f = joint_f / (joint_m + joint_f);
    if posterior_f > 0.5 {
        Ok(Prediction { label: 1, probability: posterior_f })
    } else {
        Ok(Prediction { label: 0, probability: 1.0 - posterior_f })
    }
}

/// Build a network variant over a character table. Parameter group sets
/// differ per variant and are assertable through the parameter store.
pub fn build_variant(
    config: &ModelConfig,
    table: &CharacterTable,
    kind: VariantKind,
    seed: u64,
) -> Result<Model, ModelError> {
    Model::new(config.clone(), table, kind, seed)
}
