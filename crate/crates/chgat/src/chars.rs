//! Character knowledge: formation types, component decompositions, and
//! pronunciations, loaded from a TSV table.
//!
//! File format (UTF-8, one record per line, `#` starts a comment):
//!
//! ```text
//! <char>\t<formation_index 1-17>\t<pinyin_syllable><tone_digit>\t<components>
//! ```
//!
//! where `<components>` is a `;`-separated list of `ROLE:GLYPH:POSITION`
//! entries with `ROLE` one of `S` (semantic) or `P` (phonetic). The
//! components field may be empty only for integral characters (formation
//! index 12). An empty pronunciation field marks an unknown pronunciation.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use thiserror::Error;

/// Number of formation types in the table of character structures.
pub const FORMATION_COUNT: u8 = 17;

/// Formation index of integral (undecomposable) characters.
pub const INTEGRAL_FORMATION: u8 = 12;

const FORMATION_NAMES: [&str; FORMATION_COUNT as usize] = [
    "left to right",
    "left to middle and right",
    "above to below",
    "above to middle and below",
    "full surround",
    "surround from above",
    "surround from below",
    "surround from left",
    "surround from upper left",
    "surround from upper right",
    "surround from lower left",
    "integral",
    "isosceles triangle layout",
    "square layout",
    "multielement combination",
    "overlaid",
    "multielement stacking",
];

/// Component slots available per formation type. Position indices in the
/// table must stay below this bound. The multielement layouts (15, 17) have
/// no fixed slot count; 8 is a generous ceiling.
const FORMATION_SLOTS: [u32; FORMATION_COUNT as usize] =
    [2, 3, 2, 3, 2, 2, 2, 2, 2, 2, 2, 1, 3, 4, 8, 2, 8];

/// One of the 17 spatial layouts by which components combine into a character.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FormationType {
    index: u8,
}

impl FormationType {
    pub fn new(index: u8) -> Option<Self> {
        (1..=FORMATION_COUNT).contains(&index).then_some(Self { index })
    }

    pub fn integral() -> Self {
        Self { index: INTEGRAL_FORMATION }
    }

    pub fn index(&self) -> u8 {
        self.index
    }

    pub fn name(&self) -> &'static str {
        FORMATION_NAMES[(self.index - 1) as usize]
    }

    pub fn is_integral(&self) -> bool {
        self.index == INTEGRAL_FORMATION
    }

    /// Number of component slots this layout provides.
    pub fn slots(&self) -> u32 {
        FORMATION_SLOTS[(self.index - 1) as usize]
    }
}

impl fmt::Display for FormationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.index, self.name())
    }
}

/// Whether a component contributes meaning or indicates pronunciation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ComponentRole {
    Semantic,
    Phonetic,
}

/// A sub-glyph of a character together with its role and layout slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ComponentRef {
    pub glyph: char,
    pub role: ComponentRole,
    pub position_index: u32,
}

/// A pinyin syllable with its tone. Tone 0 means unknown or unmarked neutral.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PinyinSyllable {
    pub syllable: String,
    pub tone: u8,
}

impl PinyinSyllable {
    pub fn new(syllable: impl Into<String>, tone: u8) -> Option<Self> {
        let syllable = syllable.into();
        let valid = !syllable.is_empty()
            && syllable.chars().all(|c| c.is_ascii_lowercase())
            && tone <= 5;
        valid.then_some(Self { syllable, tone })
    }

    /// Canonical node identity, e.g. `zhu1`.
    pub fn key(&self) -> String {
        format!("{}{}", self.syllable, self.tone)
    }
}

impl fmt::Display for PinyinSyllable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.syllable, self.tone)
    }
}

/// Structural facts about one character.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharacterRecord {
    pub char: char,
    pub formation: FormationType,
    pub components: Vec<ComponentRef>,
    /// `None` marks an unknown pronunciation.
    pub pronunciation: Option<PinyinSyllable>,
    pub is_picto_phonetic: bool,
}

impl CharacterRecord {
    /// Fallback record for characters absent from the table: integral, no
    /// components, pronunciation unknown.
    pub fn synthetic_integral(ch: char) -> Self {
        Self {
            char: ch,
            formation: FormationType::integral(),
            components: Vec::new(),
            pronunciation: None,
            is_picto_phonetic: false,
        }
    }

    pub fn semantic_components(&self) -> impl Iterator<Item = &ComponentRef> {
        self.components.iter().filter(|c| c.role == ComponentRole::Semantic)
    }

    pub fn phonetic_component(&self) -> Option<&ComponentRef> {
        self.components.iter().find(|c| c.role == ComponentRole::Phonetic)
    }
}

#[derive(Debug, Error)]
pub enum CharTableError {
    #[error("character table file missing: {0}")]
    FileMissing(String),
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("duplicate character '{0}'")]
    DuplicateCharacter(char),
}

/// Immutable lookup table from character to its structural record.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CharacterTable {
    records: BTreeMap<char, CharacterRecord>,
}

impl CharacterTable {
    /// Load a table from the TSV format described in the module docs.
    /// Malformed lines are rejected with their line number, never skipped.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CharTableError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|_| CharTableError::FileMissing(path.display().to_string()))?;
        Self::parse(&text)
    }

    /// Parse table text. Exposed separately so fixtures can be inlined.
    pub fn parse(text: &str) -> Result<Self, CharTableError> {
        let mut records = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim_end_matches(['\r', '\n']);
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let record = parse_record(line, line_no)?;
            if records.contains_key(&record.char) {
                return Err(CharTableError::DuplicateCharacter(record.char));
            }
            records.insert(record.char, record);
        }
        Ok(Self { records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn contains(&self, ch: char) -> bool {
        self.records.contains_key(&ch)
    }

    pub fn get(&self, ch: char) -> Option<&CharacterRecord> {
        self.records.get(&ch)
    }

    /// Records in deterministic (code point) order.
    pub fn records(&self) -> impl Iterator<Item = &CharacterRecord> {
        self.records.values()
    }

    pub fn chars(&self) -> impl Iterator<Item = char> + '_ {
        self.records.keys().copied()
    }

    /// Total decomposition lookup. Characters absent from the table get a
    /// synthetic integral record so prediction never fails on unseen input.
    pub fn decompose(&self, ch: char) -> CharacterRecord {
        match self.records.get(&ch) {
            Some(rec) => rec.clone(),
            None => CharacterRecord::synthetic_integral(ch),
        }
    }

    /// Union of the character's direct semantic components (hop 1) and the
    /// semantic components of those components when they themselves appear
    /// as characters in the table (hop 2). Deduplicated by (glyph, hop);
    /// phonetic-role components never enter at either hop.
    pub fn two_hop_semantic_components(&self, ch: char) -> Vec<ComponentRef> {
        let mut out = Vec::new();
        let mut seen_hop1 = Vec::new();
        let mut seen_hop2 = Vec::new();
        let record = self.decompose(ch);
        for comp in record.semantic_components() {
            if !seen_hop1.contains(&comp.glyph) {
                seen_hop1.push(comp.glyph);
                out.push(*comp);
            }
        }
        for hop1 in &seen_hop1 {
            let Some(sub) = self.records.get(hop1) else { continue };
            for comp in sub.semantic_components() {
                if !seen_hop2.contains(&comp.glyph) {
                    seen_hop2.push(comp.glyph);
                    out.push(*comp);
                }
            }
        }
        out
    }

    /// Largest component position index in the table (targets occupy 0).
    pub fn max_position_index(&self) -> u32 {
        self.records
            .values()
            .flat_map(|r| r.components.iter().map(|c| c.position_index))
            .max()
            .unwrap_or(0)
    }
}

fn parse_record(line: &str, line_no: usize) -> Result<CharacterRecord, CharTableError> {
    let err = |reason: String| CharTableError::Parse { line: line_no, reason };

    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 4 {
        return Err(err(format!("expected 4 tab-separated fields, got {}", fields.len())));
    }

    let mut chars = fields[0].chars();
    let ch = chars.next().ok_or_else(|| err("empty character field".into()))?;
    if chars.next().is_some() {
        return Err(err(format!("character field '{}' is not a single character", fields[0])));
    }

    let index: u8 = fields[1]
        .parse()
        .map_err(|_| err(format!("formation index '{}' is not an integer", fields[1])))?;
    let formation = FormationType::new(index)
        .ok_or_else(|| err(format!("formation index {index} outside 1..=17")))?;

    let pronunciation = parse_pinyin(fields[2]).map_err(&err)?;

    let mut components = Vec::new();
    if !fields[3].is_empty() {
        for entry in fields[3].split(';') {
            components.push(parse_component(entry, formation).map_err(&err)?);
        }
    }

    if components.is_empty() && !formation.is_integral() {
        return Err(err(format!(
            "empty components only allowed for integral characters (formation {INTEGRAL_FORMATION})"
        )));
    }
    if !components.is_empty() && formation.is_integral() {
        return Err(err("integral characters must have no components".into()));
    }

    let phonetic_count = components.iter().filter(|c| c.role == ComponentRole::Phonetic).count();
    if phonetic_count > 1 {
        return Err(err(format!("{phonetic_count} phonetic components; at most one allowed")));
    }

    Ok(CharacterRecord {
        char: ch,
        formation,
        components,
        pronunciation,
        is_picto_phonetic: phonetic_count == 1,
    })
}

fn parse_pinyin(field: &str) -> Result<Option<PinyinSyllable>, String> {
    if field.is_empty() {
        return Ok(None);
    }
    let (letters, tone) = match field.chars().last() {
        Some(d) if d.is_ascii_digit() => {
            let tone = d as u8 - b'0';
            (&field[..field.len() - 1], tone)
        }
        _ => (field, 0u8),
    };
    PinyinSyllable::new(letters, tone)
        .map(Some)
        .ok_or_else(|| format!("invalid pinyin field '{field}': want lowercase letters plus tone digit 0-5"))
}

fn parse_component(entry: &str, formation: FormationType) -> Result<ComponentRef, String> {
    let parts: Vec<&str> = entry.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("component entry '{entry}' is not ROLE:GLYPH:POSITION"));
    }
    let role = match parts[0] {
        "S" => ComponentRole::Semantic,
        "P" => ComponentRole::Phonetic,
        other => return Err(format!("component role '{other}' is not S or P")),
    };
    let mut glyph_chars = parts[1].chars();
    let glyph = glyph_chars.next().ok_or_else(|| format!("empty glyph in '{entry}'"))?;
    if glyph_chars.next().is_some() {
        return Err(format!("glyph '{}' is not a single character", parts[1]));
    }
    let position_index: u32 = parts[2]
        .parse()
        .map_err(|_| format!("position '{}' is not a non-negative integer", parts[2]))?;
    if position_index >= formation.slots() {
        return Err(format!(
            "position {position_index} exceeds the {} slots of formation {}",
            formation.slots(),
            formation.index()
        ));
    }
    Ok(ComponentRef { glyph, role, position_index })
}
