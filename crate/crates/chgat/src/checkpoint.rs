//! Checkpoint archive: a single binary file holding the model config as
//! key-value text, the character table, vocabulary manifests, and every
//! named parameter group as a shape-prefixed array of little-endian f32.
//! Loading rebuilds the model and validates manifests and shapes.

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::chars::CharacterTable;
use crate::model::{Model, ModelConfig, ModelError, VariantKind};
use crate::tensor::Tensor;

const MAGIC: &[u8] = b"CHGATCKPT1\n";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad checkpoint format: {0}")]
    Format(String),
    #[error("vocabulary manifest mismatch: {0}")]
    VocabMismatch(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn format_err(msg: impl Into<String>) -> CheckpointError {
    CheckpointError::Format(msg.into())
}

/// Canonical re-serialization of a character table, matching the TSV input
/// format line for line.
pub fn table_to_tsv(table: &CharacterTable) -> String {
    let mut out = String::new();
    for record in table.records() {
        let pinyin = record.pronunciation.as_ref().map(|p| p.key()).unwrap_or_default();
        let comps = record
            .components
            .iter()
            .map(|c| {
                let role = match c.role {
                    crate::chars::ComponentRole::Semantic => 'S',
                    crate::chars::ComponentRole::Phonetic => 'P',
                };
                format!("{role}:{}:{}", c.glyph, c.position_index)
            })
            .collect::<Vec<_>>()
            .join(";");
        out.push_str(&format!("{}\t{}\t{}\t{}\n", record.char, record.formation.index(), pinyin, comps));
    }
    out
}

fn config_to_text(model: &Model) -> String {
    let c = model.config();
    format!(
        "dim = {}\nheads = {}\nencoder_layers = {}\nmax_name_len = {}\ndropout = {}\npron_neighbor_cap = {}\nvariant = {}\nseed = {}\n",
        c.dim, c.heads, c.encoder_layers, c.max_name_len, c.dropout, c.pron_neighbor_cap,
        model.variant(), model.seed()
    )
}

fn parse_config_text(text: &str) -> Result<(ModelConfig, VariantKind, u64), CheckpointError> {
    let mut config = ModelConfig::default();
    let mut variant = VariantKind::Full;
    let mut seed = 0u64;
    for line in text.lines() {
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| format_err(format!("bad config line '{line}'")))?;
        let bad = |k: &str, v: &str| format_err(format!("bad config value {k} = '{v}'"));
        match key {
            "dim" => config.dim = value.parse().map_err(|_| bad(key, value))?,
            "heads" => config.heads = value.parse().map_err(|_| bad(key, value))?,
            "encoder_layers" => config.encoder_layers = value.parse().map_err(|_| bad(key, value))?,
            "max_name_len" => config.max_name_len = value.parse().map_err(|_| bad(key, value))?,
            "dropout" => config.dropout = value.parse().map_err(|_| bad(key, value))?,
            "pron_neighbor_cap" => {
                config.pron_neighbor_cap = value.parse().map_err(|_| bad(key, value))?
            }
            "variant" => variant = value.parse().map_err(|_| bad(key, value))?,
            "seed" => seed = value.parse().map_err(|_| bad(key, value))?,
            other => return Err(format_err(format!("unknown config key '{other}'"))),
        }
    }
    Ok((config, variant, seed))
}

struct Writer<W: Write> {
    out: W,
}

impl<W: Write> Writer<W> {
    fn u32(&mut self, v: u32) -> std::io::Result<()> {
        self.out.write_all(&v.to_le_bytes())
    }

    fn str16(&mut self, s: &str) -> std::io::Result<()> {
        let bytes = s.as_bytes();
        assert!(bytes.len() <= u16::MAX as usize);
        self.out.write_all(&(bytes.len() as u16).to_le_bytes())?;
        self.out.write_all(bytes)
    }

    fn text32(&mut self, s: &str) -> std::io::Result<()> {
        self.u32(s.len() as u32)?;
        self.out.write_all(s.as_bytes())
    }
}

struct Reader<R: Read> {
    input: R,
}

impl<R: Read> Reader<R> {
    fn u32(&mut self) -> Result<u32, CheckpointError> {
        let mut buf = [0u8; 4];
        self.input.read_exact(&mut buf)?;
        Ok(u32::from_le_bytes(buf))
    }

    fn str16(&mut self) -> Result<String, CheckpointError> {
        let mut len = [0u8; 2];
        self.input.read_exact(&mut len)?;
        let mut buf = vec![0u8; u16::from_le_bytes(len) as usize];
        self.input.read_exact(&mut buf)?;
        String::from_utf8(buf).map_err(|_| format_err("non-utf8 string"))
    }

    fn text32(&mut self) -> Result<String, CheckpointError> {
        let len = self.u32()? as usize;
        let mut buf = vec![0u8; len];
        self.input.read_exact(&mut buf)?;
        String::from_utf8(buf).map_err(|_| format_err("non-utf8 text block"))
    }
}

/// Serialize a model checkpoint to bytes.
pub fn to_bytes(model: &Model) -> Vec<u8> {
    let mut buf = Vec::new();
    let mut w = Writer { out: &mut buf };
    w.out.write_all(MAGIC).unwrap();
    w.text32(&config_to_text(model)).unwrap();

    let (chars, sem, phon, syllables) = model.vocab_manifests();
    let sections: [(&str, Vec<String>); 4] = [
        ("chars", chars.iter().map(char::to_string).collect()),
        ("sem_glyphs", sem.iter().map(char::to_string).collect()),
        ("phon_glyphs", phon.iter().map(char::to_string).collect()),
        ("syllables", syllables),
    ];
    w.u32(sections.len() as u32).unwrap();
    for (name, entries) in &sections {
        w.str16(name).unwrap();
        w.u32(entries.len() as u32).unwrap();
        for entry in entries {
            w.str16(entry).unwrap();
        }
    }

    w.text32(&table_to_tsv(model.table())).unwrap();

    let params = model.params();
    w.u32(params.len() as u32).unwrap();
    for (name, tensor) in params.iter() {
        w.str16(name).unwrap();
        w.u32(tensor.rows() as u32).unwrap();
        w.u32(tensor.cols() as u32).unwrap();
        for &v in tensor.data() {
            w.out.write_all(&(v as f32).to_le_bytes()).unwrap();
        }
    }
    buf
}

pub fn save(model: &Model, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    std::fs::write(path, to_bytes(model))?;
    Ok(())
}

/// Deserialize a checkpoint, rebuilding graphs from the embedded character
/// table and validating manifests and parameter shapes.
pub fn from_bytes(bytes: &[u8]) -> Result<Model, CheckpointError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(format_err("missing checkpoint magic"));
    }
    let mut r = Reader { input: &bytes[MAGIC.len()..] };
    let config_text = r.text32()?;
    let (config, variant, seed) = parse_config_text(&config_text)?;

    let section_count = r.u32()?;
    let mut sections = Vec::with_capacity(section_count as usize);
    for _ in 0..section_count {
        let name = r.str16()?;
        let count = r.u32()?;
        let mut entries = Vec::with_capacity(count as usize);
        for _ in 0..count {
            entries.push(r.str16()?);
        }
        sections.push((name, entries));
    }

    let table_text = r.text32()?;
    let table = CharacterTable::parse(&table_text)
        .map_err(|e| format_err(format!("embedded character table: {e}")))?;

    let mut model = Model::new(config, &table, variant, seed)?;

    let (chars, sem, phon, syllables) = model.vocab_manifests();
    let derived: [(&str, Vec<String>); 4] = [
        ("chars", chars.iter().map(char::to_string).collect()),
        ("sem_glyphs", sem.iter().map(char::to_string).collect()),
        ("phon_glyphs", phon.iter().map(char::to_string).collect()),
        ("syllables", syllables),
    ];
    if sections.len() != derived.len() {
        return Err(CheckpointError::VocabMismatch(format!(
            "expected {} manifest sections, found {}",
            derived.len(),
            sections.len()
        )));
    }
    for ((got_name, got), (want_name, want)) in sections.iter().zip(&derived) {
        if got_name != want_name || got != want {
            return Err(CheckpointError::VocabMismatch(format!(
                "section '{got_name}' does not match the vocabulary derived from the table"
            )));
        }
    }

    let param_count = r.u32()? as usize;
    let mut loaded = Vec::with_capacity(param_count);
    for _ in 0..param_count {
        let name = r.str16()?;
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            let mut buf = [0u8; 4];
            r.input.read_exact(&mut buf)?;
            data.push(f64::from(f32::from_le_bytes(buf)));
        }
        loaded.push((name, Tensor::from_vec(rows, cols, data)));
    }
    model.load_params(&loaded)?;
    Ok(model)
}

pub fn load(path: impl AsRef<Path>) -> Result<Model, CheckpointError> {
    let bytes = std::fs::read(path)?;
    from_bytes(&bytes)
}

/// True when the bytes start with the checkpoint magic (used to tell a
/// network checkpoint apart from a Naïve Bayes CSV model).
pub fn is_checkpoint(bytes: &[u8]) -> bool {
    bytes.len() >= MAGIC.len() && &bytes[..MAGIC.len()] == MAGIC
}
