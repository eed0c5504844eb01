//! The full prediction network: embedding tables, the character graph
//! attention layer (node-level, structure, and aggregate attention), two
//! token text encoders, fusion with the pronunciation embedding, a
//! transformer encoder, and a linear gender classifier.

pub mod attention;
pub mod encoder;

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::chars::CharacterTable;
use crate::graph::{neighbor_sample, HetGraphBundle, NodeId as GraphNodeId, NodeKind};
use crate::params::{Grads, ParamId, ParamStore};
use crate::tape::{NodeId, Tape};
use crate::tensor::Tensor;

use attention::{attention_module, node_level_attention, AttentionHead, AttentionModuleParams};
use encoder::{encoder_stack, text_encoder, DropoutCtx, EncoderLayerParams, TextEncoderParams};

/// Probability clamp for the binary cross-entropy loss.
pub const BCE_EPS: f64 = 1e-7;

/// Depth of each token text encoder.
const TEXT_ENCODER_LAYERS: usize = 1;

/// Gender labels: 1 = female, 0 = male.
pub const LABEL_FEMALE: u8 = 1;
pub const LABEL_MALE: u8 = 0;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("empty name")]
    EmptyName,
    #[error("name of {len} characters exceeds the maximum of {max}")]
    NameTooLong { len: usize, max: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid label {0}; labels must be 0 or 1")]
    InvalidLabel(u8),
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
}

/// Network hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Embedding dimension d.
    pub dim: usize,
    /// Attention heads t; must divide `dim`.
    pub heads: usize,
    /// Depth of the post-fusion transformer encoder.
    pub encoder_layers: usize,
    /// Longest supported name, in characters.
    pub max_name_len: usize,
    /// Dropout rate inside encoder layers (training only).
    pub dropout: f64,
    /// Fan-out cap when sampling pronunciation meta-path neighbors.
    pub pron_neighbor_cap: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dim: 768,
            heads: 6,
            encoder_layers: 2,
            max_name_len: 3,
            dropout: 0.1,
            pron_neighbor_cap: 64,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.dim == 0 || self.heads == 0 || self.encoder_layers == 0 || self.max_name_len == 0 {
            return Err(ModelError::InvalidConfig("dimensions must be positive".into()));
        }
        if !self.dim.is_multiple_of(self.heads) {
            return Err(ModelError::InvalidConfig(format!(
                "dim {} not divisible by heads {}",
                self.dim, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::InvalidConfig(format!("dropout {} outside [0,1)", self.dropout)));
        }
        if self.pron_neighbor_cap == 0 {
            return Err(ModelError::InvalidConfig("pron_neighbor_cap must be at least 1".into()));
        }
        Ok(())
    }
}

/// Which network variant to build: the full three-level attention model or
/// one of the two reduced forms used for the ablation comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VariantKind {
    Full,
    /// No pronunciation node type and no meta-path graph in the graph
    /// attention layer; the structure attention output is the character
    /// representation (no aggregate attention).
    Variant1,
    /// No structure attention; semantic, phonetic, and pronunciation
    /// node-level outputs feed one aggregate attention directly.
    Variant2,
}

impl VariantKind {
    pub const ALL: [VariantKind; 3] = [VariantKind::Full, VariantKind::Variant1, VariantKind::Variant2];

    pub fn as_str(&self) -> &'static str {
        match self {
            VariantKind::Full => "full",
            VariantKind::Variant1 => "variant_1",
            VariantKind::Variant2 => "variant_2",
        }
    }
}

impl fmt::Display for VariantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VariantKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(VariantKind::Full),
            "variant_1" => Ok(VariantKind::Variant1),
            "variant_2" => Ok(VariantKind::Variant2),
            other => Err(format!("unknown variant '{other}'")),
        }
    }
}

/// Which feature table a neighborhood entry reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FeatKind {
    Char,
    Sem,
    Phon,
    Pron,
}

/// Resolved neighborhood entry: feature table row plus position slot.
#[derive(Debug, Clone)]
struct NeighborEntry {
    feat: FeatKind,
    row: usize,
    position: usize,
}

/// Precomputed per-character inputs to the graph attention layer. The first
/// entry of each neighborhood is the target character itself.
#[derive(Debug, Clone)]
struct CharContext {
    semantic: Vec<NeighborEntry>,
    phonetic: Vec<NeighborEntry>,
    pron: Vec<NeighborEntry>,
    char_row: usize,
    pron_token: usize,
}

impl CharContext {
    fn oov() -> Self {
        let target = NeighborEntry { feat: FeatKind::Char, row: 0, position: 0 };
        Self {
            semantic: vec![target.clone()],
            phonetic: vec![target.clone()],
            pron: vec![target],
            char_row: 0,
            pron_token: 0,
        }
    }
}

/// A gender call with the probability of the predicted label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: u8,
    pub probability: f64,
}

/// One training example as consumed by the optimizer.
#[derive(Debug, Clone)]
pub struct TrainItem {
    pub name: String,
    pub label: u8,
    pub weight: f64,
    /// Seed for this example's dropout masks; `None` disables dropout.
    pub dropout_seed: Option<u64>,
}

pub struct Model {
    config: ModelConfig,
    variant: VariantKind,
    seed: u64,
    table: CharacterTable,
    bundle: HetGraphBundle,
    params: ParamStore,
    char_vocab: BTreeMap<char, usize>,
    sem_vocab: BTreeMap<char, usize>,
    phon_vocab: BTreeMap<char, usize>,
    pron_vocab: BTreeMap<String, usize>,
    position_count: usize,
    feat_char: ParamId,
    feat_sem: ParamId,
    feat_phon: ParamId,
    feat_pron: Option<ParamId>,
    feat_position: ParamId,
    sem_heads: Vec<AttentionHead>,
    phon_heads: Vec<AttentionHead>,
    pron_heads: Option<Vec<AttentionHead>>,
    structure_attn: Option<AttentionModuleParams>,
    aggregate_attn: Option<AttentionModuleParams>,
    text_char: TextEncoderParams,
    text_pron: TextEncoderParams,
    fuse_w: ParamId,
    fuse_b: ParamId,
    encoder: Vec<EncoderLayerParams>,
    cls_w: ParamId,
    cls_b: ParamId,
    contexts: BTreeMap<char, CharContext>,
    pron_neighbors: BTreeMap<char, Vec<char>>,
}

impl Model {
    /// Build a freshly initialized model over a character table. All
    /// parameters are drawn from a ChaCha stream seeded with `seed`, in a
    /// fixed registration order, so identical inputs give identical models.
    pub fn new(
        config: ModelConfig,
        table: &CharacterTable,
        variant: VariantKind,
        seed: u64,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        let ModelConfig { dim, heads, .. } = config;
        let dh = dim / heads;

        let mut char_vocab = BTreeMap::new();
        let mut sem_vocab = BTreeMap::new();
        let mut phon_vocab = BTreeMap::new();
        let mut pron_vocab = BTreeMap::new();
        for record in table.records() {
            let next = char_vocab.len() + 1;
            char_vocab.entry(record.char).or_insert(next);
            for comp in &record.components {
                let vocab = match comp.role {
                    crate::chars::ComponentRole::Semantic => &mut sem_vocab,
                    crate::chars::ComponentRole::Phonetic => &mut phon_vocab,
                };
                let next = vocab.len() + 1;
                vocab.entry(comp.glyph).or_insert(next);
            }
            if let Some(p) = &record.pronunciation {
                let next = pron_vocab.len() + 1;
                pron_vocab.entry(p.key()).or_insert(next);
            }
        }
        let position_count = (table.max_position_index() as usize + 1).max(1);

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let emb_scale = 1.0 / (dim as f64).sqrt();
        let emb = |params: &mut ParamStore, name: &str, rows: usize, rng: &mut ChaCha8Rng| {
            params.register(name, Tensor::uniform(rows, dim, emb_scale, rng))
        };

        let feat_char = emb(&mut params, "graph.features.char", char_vocab.len() + 1, &mut rng);
        let feat_sem = emb(&mut params, "graph.features.sem", sem_vocab.len() + 1, &mut rng);
        let feat_phon = emb(&mut params, "graph.features.phon", phon_vocab.len() + 1, &mut rng);
        let feat_pron = (variant != VariantKind::Variant1)
            .then(|| emb(&mut params, "graph.features.pron", pron_vocab.len() + 1, &mut rng));
        let feat_position = emb(&mut params, "graph.features.position", position_count, &mut rng);

        let register_heads = |params: &mut ParamStore, path: &str, rng: &mut ChaCha8Rng| {
            (0..heads)
                .map(|h| AttentionHead {
                    proj: params.register(
                        format!("chgat.node.{path}.h{h}.proj"),
                        Tensor::uniform(dim, dh, 1.0 / (dim as f64).sqrt(), rng),
                    ),
                    score: params.register(
                        format!("chgat.node.{path}.h{h}.attn"),
                        Tensor::uniform(1, 2 * dh, 1.0 / ((2 * dh) as f64).sqrt(), rng),
                    ),
                })
                .collect::<Vec<_>>()
        };
        let sem_heads = register_heads(&mut params, "s", &mut rng);
        let phon_heads = register_heads(&mut params, "p", &mut rng);
        let pron_heads =
            (variant != VariantKind::Variant1).then(|| register_heads(&mut params, "pr", &mut rng));

        let register_module = |params: &mut ParamStore, name: &str, rng: &mut ChaCha8Rng| {
            AttentionModuleParams {
                w: params.register(
                    format!("chgat.attn.{name}.w"),
                    Tensor::uniform(dim, dim, 1.0 / (dim as f64).sqrt(), rng),
                ),
                b: params.register(format!("chgat.attn.{name}.b"), Tensor::zeros(1, dim)),
                q: params.register(
                    format!("chgat.attn.{name}.q"),
                    Tensor::uniform(1, dim, 1.0 / (dim as f64).sqrt(), rng),
                ),
            }
        };
        let structure_attn = (variant != VariantKind::Variant2)
            .then(|| register_module(&mut params, "structure", &mut rng));
        let aggregate_attn = (variant != VariantKind::Variant1)
            .then(|| register_module(&mut params, "aggregate", &mut rng));

        let text_char = TextEncoderParams::register(
            &mut params,
            "text.char",
            char_vocab.len() + 1,
            config.max_name_len,
            dim,
            TEXT_ENCODER_LAYERS,
            &mut rng,
        );
        let text_pron = TextEncoderParams::register(
            &mut params,
            "text.pron",
            pron_vocab.len() + 1,
            config.max_name_len,
            dim,
            TEXT_ENCODER_LAYERS,
            &mut rng,
        );

        let fuse_w = params.register(
            "fuse.proj",
            Tensor::uniform(2 * dim, dim, 1.0 / ((2 * dim) as f64).sqrt(), &mut rng),
        );
        let fuse_b = params.register("fuse.bias", Tensor::zeros(1, dim));

        let encoder = (0..config.encoder_layers)
            .map(|i| EncoderLayerParams::register(&mut params, &format!("encoder.layer{i}"), dim, &mut rng))
            .collect();

        let cls_w = params.register(
            "classifier.weight",
            Tensor::uniform(dim, 2, 1.0 / (dim as f64).sqrt(), &mut rng),
        );
        let cls_b = params.register("classifier.bias", Tensor::zeros(1, 2));

        let bundle = HetGraphBundle::build(table);
        let mut pron_neighbors = BTreeMap::new();
        for ch in table.chars() {
            let sample =
                neighbor_sample(&bundle.pronunciation, ch, config.pron_neighbor_cap, seed)
                    .expect("every table character is in the pronunciation graph");
            pron_neighbors.insert(ch, sample);
        }

        let mut model = Self {
            config,
            variant,
            seed,
            table: table.clone(),
            bundle,
            params,
            char_vocab,
            sem_vocab,
            phon_vocab,
            pron_vocab,
            position_count,
            feat_char,
            feat_sem,
            feat_phon,
            feat_pron,
            feat_position,
            sem_heads,
            phon_heads,
            pron_heads,
            structure_attn,
            aggregate_attn,
            text_char,
            text_pron,
            fuse_w,
            fuse_b,
            encoder,
            cls_w,
            cls_b,
            contexts: BTreeMap::new(),
            pron_neighbors: pron_neighbors.clone(),
        };
        model.contexts = model.build_contexts();
        Ok(model)
    }

    fn build_contexts(&self) -> BTreeMap<char, CharContext> {
        let mut contexts = BTreeMap::new();
        for record in self.table.records() {
            let ch = record.char;
            let char_row = self.char_vocab[&ch];
            let target = NeighborEntry { feat: FeatKind::Char, row: char_row, position: 0 };

            let sem_graph = &self.bundle.semantic[&ch];
            let mut semantic = Vec::with_capacity(sem_graph.nodes.len());
            for node in &sem_graph.nodes {
                semantic.push(match node.kind {
                    NodeKind::Character => target.clone(),
                    _ => NeighborEntry {
                        feat: FeatKind::Sem,
                        row: self.sem_vocab
                            .get(&node.key.chars().next().unwrap())
                            .copied()
                            .unwrap_or(0),
                        position: sem_graph.position(node) as usize,
                    },
                });
            }

            let phon_graph = &self.bundle.phonetic[&ch];
            let mut phonetic = Vec::with_capacity(phon_graph.nodes.len());
            for node in &phon_graph.nodes {
                phonetic.push(match node.kind {
                    NodeKind::Character => target.clone(),
                    _ => NeighborEntry {
                        feat: FeatKind::Phon,
                        row: self.phon_vocab
                            .get(&node.key.chars().next().unwrap())
                            .copied()
                            .unwrap_or(0),
                        position: phon_graph.position(node) as usize,
                    },
                });
            }

            let pron_token = record
                .pronunciation
                .as_ref()
                .and_then(|p| self.pron_vocab.get(&p.key()).copied())
                .unwrap_or(0);
            let mut pron = vec![target];
            if self.feat_pron.is_some() {
                if let Some(p) = &record.pronunciation {
                    pron.push(NeighborEntry {
                        feat: FeatKind::Pron,
                        row: self.pron_vocab.get(&p.key()).copied().unwrap_or(0),
                        position: 0,
                    });
                }
                for nb in &self.pron_neighbors[&ch] {
                    pron.push(NeighborEntry {
                        feat: FeatKind::Char,
                        row: self.char_vocab.get(nb).copied().unwrap_or(0),
                        position: 0,
                    });
                }
            }

            contexts.insert(ch, CharContext { semantic, phonetic, pron, char_row, pron_token });
        }
        contexts
    }

    fn context(&self, ch: char) -> Cow<'_, CharContext> {
        match self.contexts.get(&ch) {
            Some(c) => Cow::Borrowed(c),
            None => Cow::Owned(CharContext::oov()),
        }
    }

    fn feat_param(&self, kind: FeatKind) -> ParamId {
        match kind {
            FeatKind::Char => self.feat_char,
            FeatKind::Sem => self.feat_sem,
            FeatKind::Phon => self.feat_phon,
            FeatKind::Pron => self.feat_pron.expect("pronunciation features absent in this variant"),
        }
    }

    fn embed_neighborhood(&self, tape: &mut Tape, entries: &[NeighborEntry]) -> NodeId {
        let rows: Vec<NodeId> = entries
            .iter()
            .map(|e| {
                let feat = tape.gather_rows(self.feat_param(e.feat), vec![e.row]);
                let pos = tape.gather_rows(self.feat_position, vec![e.position.min(self.position_count - 1)]);
                tape.add(feat, pos)
            })
            .collect();
        tape.concat_rows(&rows)
    }

    /// Build the graph attention layer for a name; returns one 1×d node per
    /// character, in name order.
    fn build_chgat(&self, tape: &mut Tape, chars: &[char]) -> Vec<NodeId> {
        let contexts: Vec<Cow<'_, CharContext>> = chars.iter().map(|&c| self.context(c)).collect();
        let mut h_sem = Vec::with_capacity(chars.len());
        let mut h_phon = Vec::with_capacity(chars.len());
        let mut h_pron = Vec::with_capacity(chars.len());
        for ctx in &contexts {
            let xs = self.embed_neighborhood(tape, &ctx.semantic);
            h_sem.push(node_level_attention(tape, &self.sem_heads, xs).output);
            let xp = self.embed_neighborhood(tape, &ctx.phonetic);
            h_phon.push(node_level_attention(tape, &self.phon_heads, xp).output);
            if let Some(pron_heads) = &self.pron_heads {
                let xpr = self.embed_neighborhood(tape, &ctx.pron);
                h_pron.push(node_level_attention(tape, pron_heads, xpr).output);
            }
        }
        match self.variant {
            VariantKind::Full => {
                let structure = attention_module(
                    tape,
                    self.structure_attn.as_ref().unwrap(),
                    &[h_sem, h_phon],
                );
                attention_module(
                    tape,
                    self.aggregate_attn.as_ref().unwrap(),
                    &[structure.outputs, h_pron],
                )
                .outputs
            }
            VariantKind::Variant1 => {
                attention_module(tape, self.structure_attn.as_ref().unwrap(), &[h_sem, h_phon])
                    .outputs
            }
            VariantKind::Variant2 => attention_module(
                tape,
                self.aggregate_attn.as_ref().unwrap(),
                &[h_sem, h_phon, h_pron],
            )
            .outputs,
        }
    }

    fn build_logits(&self, tape: &mut Tape, chars: &[char], dropout: &mut DropoutCtx) -> NodeId {
        let z_rows = self.build_chgat(tape, chars);
        let z = tape.concat_rows(&z_rows);

        let char_tokens: Vec<usize> = chars.iter().map(|c| self.context(*c).char_row).collect();
        let t = text_encoder(tape, &self.text_char, &char_tokens, self.config.heads, dropout);
        let fused_seq = tape.add(z, t);

        let pron_tokens: Vec<usize> =
            chars.iter().map(|c| self.context(*c).pron_token).collect();
        let p = text_encoder(tape, &self.text_pron, &pron_tokens, self.config.heads, dropout);

        let cat = tape.concat_cols(&[fused_seq, p]);
        let fuse_w = tape.param(self.fuse_w);
        let fuse_b = tape.param(self.fuse_b);
        let projected = tape.matmul(cat, fuse_w);
        let projected = tape.add_row(projected, fuse_b);

        let encoded = encoder_stack(tape, &self.encoder, projected, self.config.heads, dropout);
        let pooled = tape.mean_rows(encoded);
        let cls_w = tape.param(self.cls_w);
        let cls_b = tape.param(self.cls_b);
        let logits = tape.matmul(pooled, cls_w);
        tape.add_row(logits, cls_b)
    }

    fn validate_name(&self, name: &str) -> Result<Vec<char>, ModelError> {
        let chars: Vec<char> = name.chars().collect();
        if chars.is_empty() {
            return Err(ModelError::EmptyName);
        }
        if chars.len() > self.config.max_name_len {
            return Err(ModelError::NameTooLong { len: chars.len(), max: self.config.max_name_len });
        }
        Ok(chars)
    }

    /// Graph-attention-layer output per character, in name order.
    pub fn chgat_layer(&self, name: &str) -> Result<Vec<Vec<f64>>, ModelError> {
        let chars = self.validate_name(name)?;
        let mut tape = Tape::new(&self.params);
        let rows = self.build_chgat(&mut tape, &chars);
        Ok(rows.into_iter().map(|id| tape.value(id).data().to_vec()).collect())
    }

    /// Evaluation-mode logits for a name.
    pub fn forward(&self, name: &str) -> Result<[f64; 2], ModelError> {
        let chars = self.validate_name(name)?;
        let mut tape = Tape::new(&self.params);
        let logits = self.build_logits(&mut tape, &chars, &mut DropoutCtx::eval());
        let v = tape.value(logits);
        Ok([v.at(0, 0), v.at(0, 1)])
    }

    pub fn predict(&self, name: &str) -> Result<Prediction, ModelError> {
        let [z0, z1] = self.forward(name)?;
        let p_female = 1.0 / (1.0 + (z0 - z1).exp());
        if p_female > 0.5 {
            Ok(Prediction { label: LABEL_FEMALE, probability: p_female })
        } else {
            Ok(Prediction { label: LABEL_MALE, probability: 1.0 - p_female })
        }
    }

    /// Weighted loss and gradients for one example.
    pub fn example_loss_grads(&self, item: &TrainItem) -> Result<(f64, Grads), ModelError> {
        if item.label > 1 {
            return Err(ModelError::InvalidLabel(item.label));
        }
        let chars = self.validate_name(&item.name)?;
        let mut tape = Tape::new(&self.params);
        let mut rng_store;
        let mut dropout = match item.dropout_seed {
            Some(seed) if self.config.dropout > 0.0 => {
                rng_store = ChaCha8Rng::seed_from_u64(seed);
                DropoutCtx::train(self.config.dropout, &mut rng_store)
            }
            _ => DropoutCtx::eval(),
        };
        let logits = self.build_logits(&mut tape, &chars, &mut dropout);
        let loss =
            tape.bce_from_logits(logits, vec![f64::from(item.label)], vec![item.weight], BCE_EPS);
        let mut grads = Grads::zeros_like(&self.params);
        tape.backward(loss, &mut grads);
        Ok((tape.value(loss).to_scalar(), grads))
    }

    /// Forward-only summed weighted loss over a batch (no gradients).
    pub fn batch_loss(&self, items: &[TrainItem]) -> Result<f64, ModelError> {
        let losses = crate::par::map_slice(items, |item| -> Result<f64, ModelError> {
            if item.label > 1 {
                return Err(ModelError::InvalidLabel(item.label));
            }
            let chars = self.validate_name(&item.name)?;
            let mut tape = Tape::new(&self.params);
            let logits = self.build_logits(&mut tape, &chars, &mut DropoutCtx::eval());
            let loss = tape.bce_from_logits(
                logits,
                vec![f64::from(item.label)],
                vec![item.weight],
                BCE_EPS,
            );
            Ok(tape.value(loss).to_scalar())
        });
        let mut total = 0.0;
        for loss in losses {
            total += loss?;
        }
        Ok(total)
    }

    /// Summed weighted loss and gradients over a batch. Per-example work
    /// fans out in parallel; the reduction runs in input order so results
    /// are bit-identical regardless of thread count.
    pub fn batch_loss_grads(&self, items: &[TrainItem]) -> Result<(f64, Grads), ModelError> {
        let results = crate::par::map_slice(items, |item| self.example_loss_grads(item));
        let mut total = 0.0;
        let mut grads = Grads::zeros_like(&self.params);
        for result in results {
            let (loss, g) = result?;
            total += loss;
            grads.add_assign(&g);
        }
        Ok((total, grads))
    }

    /// Sequential twin of [`Model::batch_loss_grads`], kept for the
    /// parallel-speedup benchmarks.
    pub fn batch_loss_grads_seq(&self, items: &[TrainItem]) -> Result<(f64, Grads), ModelError> {
        let results = crate::par::map_slice_seq(items, |item| self.example_loss_grads(item));
        let mut total = 0.0;
        let mut grads = Grads::zeros_like(&self.params);
        for result in results {
            let (loss, g) = result?;
            total += loss;
            grads.add_assign(&g);
        }
        Ok((total, grads))
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> VariantKind {
        self.variant
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn table(&self) -> &CharacterTable {
        &self.table
    }

    pub fn graphs(&self) -> &HetGraphBundle {
        &self.bundle
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// The frozen sampled pronunciation neighbors of a table character.
    pub fn pronunciation_neighbors(&self, ch: char) -> &[char] {
        self.pron_neighbors.get(&ch).map_or(&[], Vec::as_slice)
    }

    pub fn embedding_tables(&self) -> EmbeddingTables<'_> {
        EmbeddingTables { model: self }
    }

    /// Vocabulary manifests (sorted): characters, semantic glyphs, phonetic
    /// glyphs, syllables. Index 0 of every table is the shared unknown row.
    pub fn vocab_manifests(&self) -> (Vec<char>, Vec<char>, Vec<char>, Vec<String>) {
        (
            self.char_vocab.keys().copied().collect(),
            self.sem_vocab.keys().copied().collect(),
            self.phon_vocab.keys().copied().collect(),
            self.pron_vocab.keys().cloned().collect(),
        )
    }

    /// Replace all parameter values with `loaded`, validating that the
    /// group names and shapes match this model's layout exactly.
    pub fn load_params(&mut self, loaded: &[(String, Tensor)]) -> Result<(), ModelError> {
        if loaded.len() != self.params.len() {
            return Err(ModelError::ShapeMismatch(format!(
                "expected {} parameter groups, got {}",
                self.params.len(),
                loaded.len()
            )));
        }
        for (name, tensor) in loaded {
            let id = self.params.id(name).ok_or_else(|| {
                ModelError::ShapeMismatch(format!("unexpected parameter group '{name}'"))
            })?;
            let current = self.params.get(id);
            if current.shape() != tensor.shape() {
                return Err(ModelError::ShapeMismatch(format!(
                    "group '{name}' has shape {:?}, expected {:?}",
                    tensor.shape(),
                    current.shape()
                )));
            }
            *self.params.get_mut(id) = tensor.clone();
        }
        Ok(())
    }
}

/// Read-only view of the five feature tables.
pub struct EmbeddingTables<'m> {
    model: &'m Model,
}

impl<'m> EmbeddingTables<'m> {
    pub fn dim(&self) -> usize {
        self.model.config.dim
    }

    pub fn position_count(&self) -> usize {
        self.model.position_count
    }

    fn table_and_row(&self, node: &GraphNodeId) -> (ParamId, usize) {
        let model = self.model;
        match node.kind {
            NodeKind::Character => {
                let row = node
                    .key
                    .chars()
                    .next()
                    .and_then(|c| model.char_vocab.get(&c).copied())
                    .unwrap_or(0);
                (model.feat_char, row)
            }
            NodeKind::SemanticComponent => {
                let row = node
                    .key
                    .chars()
                    .next()
                    .and_then(|c| model.sem_vocab.get(&c).copied())
                    .unwrap_or(0);
                (model.feat_sem, row)
            }
            NodeKind::PhoneticComponent => {
                let row = node
                    .key
                    .chars()
                    .next()
                    .and_then(|c| model.phon_vocab.get(&c).copied())
                    .unwrap_or(0);
                (model.feat_phon, row)
            }
            NodeKind::Pronunciation => {
                let row = model.pron_vocab.get(&node.key).copied().unwrap_or(0);
                (
                    model.feat_pron.expect("pronunciation features absent in this variant"),
                    row,
                )
            }
        }
    }

    /// Feature row for a node; unknown keys fall back to the shared unknown
    /// vector of the node kind's table.
    pub fn feature(&self, node: &GraphNodeId) -> &[f64] {
        let (param, row) = self.table_and_row(node);
        self.model.params.get(param).row(row)
    }

    pub fn position(&self, index: usize) -> &[f64] {
        let idx = index.min(self.model.position_count - 1);
        self.model.params.get(self.model.feat_position).row(idx)
    }

    /// Initial embedding of a node: feature vector plus position vector,
    /// element by element.
    pub fn initial_embedding(&self, node: &GraphNodeId, position_index: usize) -> Vec<f64> {
        let feature = self.feature(node);
        let position = self.position(position_index);
        feature.iter().zip(position).map(|(f, p)| f + p).collect()
    }
}

/// Binary cross-entropy of a logits batch against labels, summed over the
/// batch with the positive-class probability clamped to [`BCE_EPS`].
pub fn bce_loss(logits: &[[f64; 2]], labels: &[u8]) -> Result<f64, ModelError> {
    if logits.len() != labels.len() {
        return Err(ModelError::ShapeMismatch(format!(
            "{} logit rows vs {} labels",
            logits.len(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
        return Err(ModelError::InvalidLabel(bad));
    }
    let store = ParamStore::new();
    let mut tape = Tape::new(&store);
    let data: Vec<f64> = logits.iter().flat_map(|row| row.iter().copied()).collect();
    let node = tape.constant(Tensor::from_vec(logits.len(), 2, data));
    let loss = tape.bce_from_logits(
        node,
        labels.iter().map(|&l| f64::from(l)).collect(),
        vec![1.0; labels.len()],
        BCE_EPS,
    );
    Ok(tape.value(loss).to_scalar())
}
