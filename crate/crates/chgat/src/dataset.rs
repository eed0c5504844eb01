//! Name-gender frequency records: ingestion, label derivation, seeded
//! splits, and corpus statistics.
//!
//! File format: UTF-8 CSV with header `name,male,female`, one first name
//! per row, counts being occurrence totals per gender.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// One first name with per-gender occurrence counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NameRecord {
    pub first_name: String,
    pub male_count: u64,
    pub female_count: u64,
}

impl NameRecord {
    pub fn char_len(&self) -> usize {
        self.first_name.chars().count()
    }

    pub fn total(&self) -> u64 {
        self.male_count + self.female_count
    }

    /// Majority label: 1 = female, 0 = male, `None` on an exact tie.
    pub fn majority_label(&self) -> Option<u8> {
        match self.female_count.cmp(&self.male_count) {
            std::cmp::Ordering::Greater => Some(1),
            std::cmp::Ordering::Less => Some(0),
            std::cmp::Ordering::Equal => None,
        }
    }
}

/// A labeled training example with its occurrence weight.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledExample {
    pub first_name: String,
    pub label: u8,
    pub weight: u64,
}

/// Corpus-level statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetStats {
    /// Total name occurrences (sum of both gender counts).
    pub total_records: u64,
    pub unique_names: usize,
    /// 100 × Σ male / Σ female; infinite when no female occurrences exist.
    pub m_to_f_percent: f64,
    /// Share of two-character names whose characters share a majority
    /// gender opposite to the name's own label, in percent.
    pub same_gender_flip_percent: f64,
    /// Among two-character names whose reversal also occurs, the share
    /// whose reversal carries the opposite label, in percent.
    pub reversal_flip_percent: f64,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("name dataset file missing: {0}")]
    FileMissing(String),
    #[error("parse error at row {row}: {reason}")]
    Parse { row: usize, reason: String },
    #[error("invariant violation at row {row}: {reason}")]
    InvariantViolation { row: usize, reason: String },
}

/// Load name records from CSV. Bad rows fail loudly with their row number.
pub fn load_name_records(path: impl AsRef<Path>) -> Result<Vec<NameRecord>, DatasetError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|_| DatasetError::FileMissing(path.display().to_string()))?;
    parse_name_records(&text)
}

pub fn parse_name_records(text: &str) -> Result<Vec<NameRecord>, DatasetError> {
    let mut lines = text.lines().enumerate();
    let header = lines.next().map(|(_, l)| l.trim_end()).unwrap_or_default();
    if header != "name,male,female" {
        return Err(DatasetError::Parse {
            row: 1,
            reason: format!("expected header 'name,male,female', got '{header}'"),
        });
    }
    let mut records = Vec::new();
    for (idx, raw) in lines {
        let row = idx + 1;
        let line = raw.trim_end();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(DatasetError::Parse {
                row,
                reason: format!("expected 3 fields, got {}", fields.len()),
            });
        }
        let male_count: u64 = fields[1].parse().map_err(|_| DatasetError::Parse {
            row,
            reason: format!("male count '{}' is not a non-negative integer", fields[1]),
        })?;
        let female_count: u64 = fields[2].parse().map_err(|_| DatasetError::Parse {
            row,
            reason: format!("female count '{}' is not a non-negative integer", fields[2]),
        })?;
        let record = NameRecord { first_name: fields[0].to_string(), male_count, female_count };
        let len = record.char_len();
        if len == 0 || len > 3 {
            return Err(DatasetError::InvariantViolation {
                row,
                reason: format!("name '{}' has {len} characters; wanted 1..=3", record.first_name),
            });
        }
        if record.total() == 0 {
            return Err(DatasetError::InvariantViolation {
                row,
                reason: format!("name '{}' has zero total count", record.first_name),
            });
        }
        records.push(record);
    }
    Ok(records)
}

/// Majority-count labels with occurrence weights. Exact ties are dropped
/// and tallied rather than broken arbitrarily.
pub fn derive_labels(records: &[NameRecord]) -> (Vec<LabeledExample>, usize) {
    let mut examples = Vec::with_capacity(records.len());
    let mut ties = 0;
    for record in records {
        match record.majority_label() {
            Some(label) => examples.push(LabeledExample {
                first_name: record.first_name.clone(),
                label,
                weight: record.total(),
            }),
            None => ties += 1,
        }
    }
    (examples, ties)
}

/// Deterministic seeded split into (train, validation, test), partitioned
/// by unique name so no name crosses splits. Sizes land within one example
/// of the exact ratios.
pub fn split(
    examples: &[LabeledExample],
    ratios: (f64, f64, f64),
    seed: u64,
) -> (Vec<LabeledExample>, Vec<LabeledExample>, Vec<LabeledExample>) {
    let (r1, r2, r3) = ratios;
    assert!(
        (r1 + r2 + r3 - 1.0).abs() < 1e-9 && r1 >= 0.0 && r2 >= 0.0 && r3 >= 0.0,
        "split ratios must be non-negative and sum to 1"
    );
    // group examples by name, then shuffle names (sorted first so the input
    // row order has no effect)
    let mut by_name: BTreeMap<&str, Vec<&LabeledExample>> = BTreeMap::new();
    for ex in examples {
        by_name.entry(&ex.first_name).or_default().push(ex);
    }
    let mut names: Vec<&str> = by_name.keys().copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    names.shuffle(&mut rng);

    let total = examples.len() as f64;
    let cut1 = (total * r1).round() as usize;
    let cut2 = (total * (r1 + r2)).round() as usize;
    let mut out = (Vec::new(), Vec::new(), Vec::new());
    let mut placed = 0usize;
    for name in names {
        let group = &by_name[name];
        let bucket = if placed < cut1 {
            &mut out.0
        } else if placed < cut2 {
            &mut out.1
        } else {
            &mut out.2
        };
        placed += group.len();
        bucket.extend(group.iter().map(|&e| e.clone()));
    }
    out
}

/// Per-character gender marginals: each occurrence of a character in a name
/// contributes the name's full counts.
pub fn char_gender_marginals(records: &[NameRecord]) -> BTreeMap<char, (u64, u64)> {
    let mut marginals: BTreeMap<char, (u64, u64)> = BTreeMap::new();
    for record in records {
        for ch in record.first_name.chars() {
            let entry = marginals.entry(ch).or_insert((0, 0));
            entry.0 += record.male_count;
            entry.1 += record.female_count;
        }
    }
    marginals
}

fn char_majority(marginals: &BTreeMap<char, (u64, u64)>, ch: char) -> Option<u8> {
    let &(m, f) = marginals.get(&ch)?;
    match f.cmp(&m) {
        std::cmp::Ordering::Greater => Some(1),
        std::cmp::Ordering::Less => Some(0),
        std::cmp::Ordering::Equal => None,
    }
}

/// Corpus statistics. The flip percentages are over unique two-character
/// names; ties (in a name's own counts or in a character's marginals) never
/// count as flips but stay in the denominators.
pub fn compute_stats(records: &[NameRecord]) -> DatasetStats {
    let marginals = char_gender_marginals(records);
    let total_male: u64 = records.iter().map(|r| r.male_count).sum();
    let total_female: u64 = records.iter().map(|r| r.female_count).sum();
    let unique: BTreeSet<&str> = records.iter().map(|r| r.first_name.as_str()).collect();

    let by_name: BTreeMap<&str, &NameRecord> =
        records.iter().map(|r| (r.first_name.as_str(), r)).collect();

    let two_char: Vec<&NameRecord> = {
        let mut seen = BTreeSet::new();
        records
            .iter()
            .filter(|r| r.char_len() == 2 && seen.insert(r.first_name.as_str()))
            .collect()
    };

    let mut same_gender_flips = 0usize;
    let mut reversal_den = 0usize;
    let mut reversal_num = 0usize;
    for record in &two_char {
        let chars: Vec<char> = record.first_name.chars().collect();
        let label = record.majority_label();
        let g1 = char_majority(&marginals, chars[0]);
        let g2 = char_majority(&marginals, chars[1]);
        if let (Some(label), Some(g1), Some(g2)) = (label, g1, g2) {
            if g1 == g2 && label != g1 {
                same_gender_flips += 1;
            }
        }
        let reversed: String = chars.iter().rev().collect();
        if let Some(rev) = by_name.get(reversed.as_str()) {
            reversal_den += 1;
            if let (Some(a), Some(b)) = (label, rev.majority_label()) {
                if a != b {
                    reversal_num += 1;
                }
            }
        }
    }

    let percent = |num: usize, den: usize| {
        if den == 0 {
            0.0
        } else {
            100.0 * num as f64 / den as f64
        }
    };
    DatasetStats {
        total_records: total_male + total_female,
        unique_names: unique.len(),
        m_to_f_percent: if total_female == 0 {
            f64::INFINITY
        } else {
            100.0 * total_male as f64 / total_female as f64
        },
        same_gender_flip_percent: percent(same_gender_flips, two_char.len()),
        reversal_flip_percent: percent(reversal_num, reversal_den),
    }
}
