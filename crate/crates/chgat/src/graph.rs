//! Heterogeneous graph construction: per-character semantic and phonetic
//! component graphs plus the corpus-wide pronunciation meta-path graph.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::chars::CharacterTable;

/// Node kinds of the heterogeneous graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeKind {
    Character,
    SemanticComponent,
    PhoneticComponent,
    Pronunciation,
}

impl NodeKind {
    pub fn label(&self) -> &'static str {
        match self {
            NodeKind::Character => "character",
            NodeKind::SemanticComponent => "semantic_component",
            NodeKind::PhoneticComponent => "phonetic_component",
            NodeKind::Pronunciation => "pronunciation",
        }
    }
}

/// Typed node identity. The same glyph under different kinds is a distinct
/// node, which is the point of the heterogeneous structure.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId {
    pub kind: NodeKind,
    pub key: String,
}

impl NodeId {
    pub fn character(ch: char) -> Self {
        Self { kind: NodeKind::Character, key: ch.to_string() }
    }

    pub fn semantic(glyph: char) -> Self {
        Self { kind: NodeKind::SemanticComponent, key: glyph.to_string() }
    }

    pub fn phonetic(glyph: char) -> Self {
        Self { kind: NodeKind::PhoneticComponent, key: glyph.to_string() }
    }

    pub fn pronunciation(key: impl Into<String>) -> Self {
        Self { kind: NodeKind::Pronunciation, key: key.into() }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind.label(), self.key)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeKind {
    CharSem,
    CharPhon,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Edge {
    pub from: NodeId,
    pub to: NodeId,
    pub kind: EdgeKind,
}

/// Per-character component graph (either the semantic or the phonetic one).
/// Nodes and edges keep insertion order so rebuilds are bit-identical.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentGraph {
    pub target: NodeId,
    pub nodes: Vec<NodeId>,
    pub edges: Vec<Edge>,
    pub positions: BTreeMap<NodeId, u32>,
}

impl ComponentGraph {
    fn new(target: NodeId) -> Self {
        let mut positions = BTreeMap::new();
        positions.insert(target.clone(), 0);
        Self { target: target.clone(), nodes: vec![target], edges: Vec::new(), positions }
    }

    fn add_node(&mut self, node: NodeId, position: u32) {
        if !self.nodes.contains(&node) {
            self.nodes.push(node.clone());
        }
        self.positions.entry(node).or_insert(position);
    }

    fn add_edge(&mut self, from: NodeId, to: NodeId, kind: EdgeKind) {
        let edge = Edge { from, to, kind };
        if !self.edges.contains(&edge) {
            self.edges.push(edge);
        }
    }

    pub fn edge_count(&self, kind: EdgeKind) -> usize {
        self.edges.iter().filter(|e| e.kind == kind).count()
    }

    pub fn position(&self, node: &NodeId) -> u32 {
        self.positions.get(node).copied().unwrap_or(0)
    }
}

/// Character-pronunciation-character meta-path adjacency. Symmetric, no
/// self-loops; every character of the table appears as a key.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MetaPathGraph {
    adjacency: BTreeMap<char, BTreeSet<char>>,
}

impl MetaPathGraph {
    pub fn neighbors(&self, ch: char) -> Option<&BTreeSet<char>> {
        self.adjacency.get(&ch)
    }

    pub fn contains(&self, ch: char) -> bool {
        self.adjacency.contains_key(&ch)
    }

    pub fn chars(&self) -> impl Iterator<Item = char> + '_ {
        self.adjacency.keys().copied()
    }

    pub fn degree(&self, ch: char) -> usize {
        self.adjacency.get(&ch).map_or(0, |s| s.len())
    }

    /// Total number of unordered neighbor pairs.
    pub fn pair_count(&self) -> usize {
        self.adjacency.values().map(|s| s.len()).sum::<usize>() / 2
    }
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("character '{0}' is not in the pronunciation graph")]
    UnknownCharacter(char),
}

/// Build the semantic graph of a character: the target plus its hop-1
/// semantic components and, when a hop-1 component is itself a character of
/// the table, that component's own semantic components at hop 2.
pub fn build_semantic_graph(table: &CharacterTable, ch: char) -> ComponentGraph {
    let mut graph = ComponentGraph::new(NodeId::character(ch));
    let record = table.decompose(ch);
    let mut hop1 = Vec::new();
    for comp in record.semantic_components() {
        let node = NodeId::semantic(comp.glyph);
        graph.add_node(node.clone(), comp.position_index);
        graph.add_edge(graph.target.clone(), node, EdgeKind::CharSem);
        if !hop1.contains(&comp.glyph) {
            hop1.push(comp.glyph);
        }
    }
    for glyph in hop1 {
        let Some(sub) = table.get(glyph) else { continue };
        let parent = NodeId::semantic(glyph);
        for comp in sub.semantic_components() {
            let node = NodeId::semantic(comp.glyph);
            graph.add_node(node.clone(), comp.position_index);
            graph.add_edge(parent.clone(), node, EdgeKind::CharSem);
        }
    }
    graph
}

/// Build the phonetic graph of a character: the target plus at most one
/// phonetic component at hop 1.
pub fn build_phonetic_graph(table: &CharacterTable, ch: char) -> ComponentGraph {
    let mut graph = ComponentGraph::new(NodeId::character(ch));
    let record = table.decompose(ch);
    if let Some(comp) = record.phonetic_component() {
        let node = NodeId::phonetic(comp.glyph);
        graph.add_node(node.clone(), comp.position_index);
        graph.add_edge(graph.target.clone(), node, EdgeKind::CharPhon);
    }
    graph
}

/// Build the shared pronunciation meta-path graph. Two characters are
/// neighbors iff their syllable and tone both match; characters with an
/// unknown pronunciation get empty neighbor sets.
pub fn build_pronunciation_graph(table: &CharacterTable) -> MetaPathGraph {
    let mut by_pron: BTreeMap<String, Vec<char>> = BTreeMap::new();
    let mut adjacency: BTreeMap<char, BTreeSet<char>> = BTreeMap::new();
    for record in table.records() {
        adjacency.insert(record.char, BTreeSet::new());
        if let Some(p) = &record.pronunciation {
            by_pron.entry(p.key()).or_default().push(record.char);
        }
    }
    for group in by_pron.values() {
        for &a in group {
            for &b in group {
                if a != b {
                    adjacency.get_mut(&a).unwrap().insert(b);
                }
            }
        }
    }
    MetaPathGraph { adjacency }
}

/// All three graphs for a table: per-character semantic and phonetic graphs
/// plus the shared pronunciation graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HetGraphBundle {
    pub semantic: BTreeMap<char, ComponentGraph>,
    pub phonetic: BTreeMap<char, ComponentGraph>,
    pub pronunciation: MetaPathGraph,
}

impl HetGraphBundle {
    pub fn build(table: &CharacterTable) -> Self {
        let chars: Vec<char> = table.chars().collect();
        let built = crate::par::map_slice(&chars, |&ch| {
            (ch, build_semantic_graph(table, ch), build_phonetic_graph(table, ch))
        });
        let mut semantic = BTreeMap::new();
        let mut phonetic = BTreeMap::new();
        for (ch, sem, phon) in built {
            semantic.insert(ch, sem);
            phonetic.insert(ch, phon);
        }
        Self { semantic, phonetic, pronunciation: build_pronunciation_graph(table) }
    }
}

/// Deterministic uniform sample without replacement of at most `cap`
/// pronunciation neighbors. Returns the full (sorted) neighbor set when the
/// degree does not exceed the cap.
pub fn neighbor_sample(
    graph: &MetaPathGraph,
    ch: char,
    cap: usize,
    seed: u64,
) -> Result<Vec<char>, GraphError> {
    assert!(cap >= 1, "cap must be at least 1");
    let neighbors = graph.neighbors(ch).ok_or(GraphError::UnknownCharacter(ch))?;
    let mut all: Vec<char> = neighbors.iter().copied().collect();
    if all.len() <= cap {
        return Ok(all);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (ch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    all.shuffle(&mut rng);
    all.truncate(cap);
    Ok(all)
}

/// Aggregate node and edge counts over a bundle, for the CLI summary.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GraphCounts {
    pub character_nodes: usize,
    pub semantic_nodes: usize,
    pub phonetic_nodes: usize,
    pub pronunciation_nodes: usize,
    pub char_sem_edges: usize,
    pub char_phon_edges: usize,
    pub char_pron_edges: usize,
}

pub fn count_graphs(table: &CharacterTable, bundle: &HetGraphBundle) -> GraphCounts {
    let mut sem_glyphs = BTreeSet::new();
    let mut phon_glyphs = BTreeSet::new();
    let mut prons = BTreeSet::new();
    let mut counts = GraphCounts { character_nodes: table.len(), ..Default::default() };
    for record in table.records() {
        if let Some(p) = &record.pronunciation {
            prons.insert(p.key());
            counts.char_pron_edges += 1;
        }
    }
    for graph in bundle.semantic.values() {
        counts.char_sem_edges += graph.edges.len();
        for node in &graph.nodes {
            if node.kind == NodeKind::SemanticComponent {
                sem_glyphs.insert(node.key.clone());
            }
        }
    }
    for graph in bundle.phonetic.values() {
        counts.char_phon_edges += graph.edges.len();
        for node in &graph.nodes {
            if node.kind == NodeKind::PhoneticComponent {
                phon_glyphs.insert(node.key.clone());
            }
        }
    }
    counts.semantic_nodes = sem_glyphs.len();
    counts.phonetic_nodes = phon_glyphs.len();
    counts.pronunciation_nodes = prons.len();
    counts
}

/// Write the JSON-lines graph dump: one object per character with its
/// semantic and phonetic edge lists and pronunciation neighbor count.
pub fn write_graph_dump(
    table: &CharacterTable,
    bundle: &HetGraphBundle,
    mut out: impl Write,
) -> std::io::Result<()> {
    for ch in table.chars() {
        let sem = &bundle.semantic[&ch];
        let phon = &bundle.phonetic[&ch];
        let record = serde_json::json!({
            "char": ch.to_string(),
            "semantic_edges": sem.edges.iter()
                .map(|e| vec![e.from.key.clone(), e.to.key.clone()])
                .collect::<Vec<_>>(),
            "phonetic_edges": phon.edges.iter()
                .map(|e| vec![e.from.key.clone(), e.to.key.clone()])
                .collect::<Vec<_>>(),
            "pronunciation_neighbors_count": bundle.pronunciation.degree(ch),
        });
        writeln!(out, "{record}")?;
    }
    Ok(())
}
