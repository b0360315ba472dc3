//! Knowledge-graph scene embeddings.
//!
//! A small triple store holds facts about the scene objects. For each
//! experiment the scene-relevant subgraph is selected (the perceived
//! entities plus everything at graph distance 1), linearized into a
//! sentence, and turned into a fixed-length vector by concatenating
//! pretrained word vectors. The resulting embedding is static for the
//! whole experiment and is concatenated to the visual features upstream
//! of the recurrent layer.

use crate::real::Real;
use crate::rng::{fnv1a, stream};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use thiserror::Error;

/// Per-word vector width.
pub const WORD_DIM: usize = 40;

/// Relations that attach colors to objects; filtered out in partial mode.
const COLOR_RELATIONS: [&str; 2] = ["hasColor", "canHaveColor"];

#[derive(Debug, Error)]
pub enum KgeError {
    #[error("perceived entity {0:?} is not in the knowledge graph")]
    UnknownEntity(String),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{origin}:{line}: {msg}")]
    Malformed {
        origin: String,
        line: usize,
        msg: String,
    },
    #[error("{origin}:{line}: vector has {got} components, expected at least {expected}")]
    ShortVector {
        origin: String,
        line: usize,
        got: usize,
        expected: usize,
    },
}

/// One (head, relation, tail) fact. Ordering is lexicographic by field,
/// which fixes the linearization order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

impl Triple {
    pub fn new(head: &str, relation: &str, tail: &str) -> Self {
        assert!(
            !head.is_empty() && !relation.is_empty() && !tail.is_empty(),
            "triple labels must be non-empty"
        );
        Triple {
            head: head.to_string(),
            relation: relation.to_string(),
            tail: tail.to_string(),
        }
    }
}

/// An immutable-after-build set of triples. Entity and relation sets are
/// derived from the triples, so every entity has at least one incident edge.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeGraph {
    triples: BTreeSet<Triple>,
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, head: &str, relation: &str, tail: &str) {
        self.triples.insert(Triple::new(head, relation, tail));
    }

    pub fn from_triples<I: IntoIterator<Item = Triple>>(iter: I) -> Self {
        KnowledgeGraph {
            triples: iter.into_iter().collect(),
        }
    }

    pub fn triples(&self) -> impl Iterator<Item = &Triple> {
        self.triples.iter()
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn contains_entity(&self, label: &str) -> bool {
        self.triples
            .iter()
            .any(|t| t.head == label || t.tail == label)
    }

    pub fn entities(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        for t in &self.triples {
            out.insert(t.head.as_str());
            out.insert(t.tail.as_str());
        }
        out
    }

    pub fn relations(&self) -> BTreeSet<&str> {
        self.triples.iter().map(|t| t.relation.as_str()).collect()
    }

    /// Parses the tab-separated triple format: one `head<TAB>relation<TAB>tail`
    /// per line. Lines starting with '#' and blank lines are skipped.
    /// `origin` names the source in error messages.
    pub fn parse(text: &str, origin: &str) -> Result<Self, KgeError> {
        let mut graph = KnowledgeGraph::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split('\t');
            let (h, r, t) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
                (Some(h), Some(r), Some(t), None) => (h.trim(), r.trim(), t.trim()),
                _ => {
                    return Err(KgeError::Malformed {
                        origin: origin.to_string(),
                        line: i + 1,
                        msg: "expected head<TAB>relation<TAB>tail".to_string(),
                    })
                }
            };
            if h.is_empty() || r.is_empty() || t.is_empty() {
                return Err(KgeError::Malformed {
                    origin: origin.to_string(),
                    line: i + 1,
                    msg: "empty label".to_string(),
                });
            }
            graph.insert(h, r, t);
        }
        Ok(graph)
    }

    pub fn from_file(path: &Path) -> Result<Self, KgeError> {
        let text = std::fs::read_to_string(path).map_err(|source| KgeError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    /// The built-in graph for the three tabletop targets. With `dr` the
    /// color facts list both candidate colors per object; without it each
    /// object has its single fixed color.
    pub fn desk_default(dr: bool) -> Self {
        let mut g = KnowledgeGraph::new();
        if dr {
            g.insert("mug", "canHaveColor", "red");
            g.insert("mug", "canHaveColor", "blue");
            g.insert("bottle", "canHaveColor", "yellow");
            g.insert("bottle", "canHaveColor", "purple");
            g.insert("cereal_box", "canHaveColor", "brown");
            g.insert("cereal_box", "canHaveColor", "light blue");
        } else {
            g.insert("mug", "hasColor", "red");
            g.insert("bottle", "hasColor", "yellow");
            g.insert("cereal_box", "hasColor", "brown");
        }
        g.insert("mug", "isA", "graspable");
        g.insert("bottle", "isA", "graspable");
        g.insert("cereal_box", "isA", "graspable");
        g.insert("mug", "isConnectedTo", "handle");
        g.insert("handle", "hasShape", "curved");
        g.insert("bottle", "hasShape", "cylindrical");
        g.insert("cereal_box", "isMadeOf", "cardboard");
        g.insert("mug", "standsOn", "table");
        g.insert("bottle", "standsOn", "table");
        g.insert("cereal_box", "standsOn", "table");
        g.insert("table", "isMadeOf", "wood");
        g
    }
}

/// Which semantic input the agent receives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KgeMode {
    /// Vision only; no embedding.
    None,
    /// Object types only; color facts are removed.
    Partial,
    /// Object types and (possible) colors.
    Full,
}

impl fmt::Display for KgeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            KgeMode::None => "none",
            KgeMode::Partial => "partial",
            KgeMode::Full => "full",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for KgeMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(KgeMode::None),
            "partial" => Ok(KgeMode::Partial),
            "full" => Ok(KgeMode::Full),
            other => Err(format!(
                "unknown kge mode {other:?} (expected none, partial, or full)"
            )),
        }
    }
}

/// Fixed-length vector summary of the scene subgraph.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneEmbedding {
    pub values: Vec<f64>,
    /// The linearized sentence the vector was computed from.
    pub source_sentence: String,
    /// How many sentence tokens had no entry in the word table.
    pub unknown_tokens: usize,
}

impl SceneEmbedding {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Values cast to the requested precision.
    pub fn values_as<T: Real>(&self) -> Vec<T> {
        self.values.iter().map(|&v| T::of(v)).collect()
    }
}

/// Token to vector mapping with a fixed per-word width.
#[derive(Debug, Clone, Default)]
pub struct WordVectorTable {
    dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

impl WordVectorTable {
    pub fn new(dim: usize) -> Self {
        WordVectorTable {
            dim,
            vectors: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(|v| v.as_slice())
    }

    pub fn insert(&mut self, token: &str, vector: Vec<f64>) {
        assert_eq!(vector.len(), self.dim, "vector width mismatch");
        self.vectors.insert(token.to_string(), vector);
    }
}

/// Selects the induced subgraph on the closed 1-neighborhood of `perceived`:
/// the perceived nodes, every node at undirected graph distance 1 from one
/// of them, and all triples whose head and tail both fall in that node set.
pub fn select_subgraph(
    graph: &KnowledgeGraph,
    perceived: &[&str],
) -> Result<KnowledgeGraph, KgeError> {
    for &p in perceived {
        if !graph.contains_entity(p) {
            return Err(KgeError::UnknownEntity(p.to_string()));
        }
    }
    let seed: BTreeSet<&str> = perceived.iter().copied().collect();
    let mut closed = seed.clone();
    for t in graph.triples() {
        if seed.contains(t.head.as_str()) {
            closed.insert(t.tail.as_str());
        }
        if seed.contains(t.tail.as_str()) {
            closed.insert(t.head.as_str());
        }
    }
    let kept = graph
        .triples()
        .filter(|t| closed.contains(t.head.as_str()) && closed.contains(t.tail.as_str()))
        .cloned();
    Ok(KnowledgeGraph::from_triples(kept))
}

/// Splits a camel-case relation label into lowercase words:
/// `hasColor` becomes `has color`.
fn split_camel(label: &str) -> String {
    let mut out = String::with_capacity(label.len() + 4);
    for ch in label.chars() {
        if ch.is_uppercase() {
            if !out.is_empty() {
                out.push(' ');
            }
            out.extend(ch.to_lowercase());
        } else {
            out.push(ch);
        }
    }
    out
}

/// Renders a subgraph as one sentence: triples in lexicographic
/// (head, relation, tail) order, each as "head relation tail", joined by
/// spaces. Relation labels are camel-case split so word tables resolve them.
pub fn linearize(subgraph: &KnowledgeGraph) -> String {
    let mut words: Vec<String> = Vec::with_capacity(subgraph.len() * 3);
    for t in subgraph.triples() {
        words.push(t.head.clone());
        words.push(split_camel(&t.relation));
        words.push(t.tail.clone());
    }
    words.join(" ")
}

/// Concatenates the word vector of every whitespace token in order, then
/// right-pads with zeros or truncates to exactly `target_dim` entries.
/// Unknown tokens contribute zero vectors and are counted.
pub fn embed_scene(
    sentence: &str,
    table: &WordVectorTable,
    target_dim: usize,
) -> SceneEmbedding {
    let mut values: Vec<f64> = Vec::new();
    let mut unknown = 0usize;
    for token in sentence.split_whitespace() {
        match table.get(token) {
            Some(v) => values.extend_from_slice(v),
            None => {
                unknown += 1;
                values.resize(values.len() + table.dim(), 0.0);
            }
        }
    }
    values.truncate(target_dim);
    values.resize(target_dim, 0.0);
    SceneEmbedding {
        values,
        source_sentence: sentence.to_string(),
        unknown_tokens: unknown,
    }
}

/// Loads a pretrained word-vector text file: one record per line,
/// `token v1 v2 ... vD`, space-separated. Vectors wider than `expected_dim`
/// are truncated to their first `expected_dim` components; narrower ones
/// are an error.
pub fn load_word_vectors(path: &Path, expected_dim: usize) -> Result<WordVectorTable, KgeError> {
    let origin = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| KgeError::Io {
        path: origin.clone(),
        source,
    })?;
    let mut table = WordVectorTable::new(expected_dim);
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = parts.next().expect("non-empty line has a first token");
        let mut vector = Vec::with_capacity(expected_dim);
        for (j, p) in parts.enumerate() {
            if vector.len() == expected_dim {
                // Wider native dimension: keep the prefix, skip the rest.
                break;
            }
            match p.parse::<f64>() {
                Ok(v) => vector.push(v),
                Err(_) => {
                    return Err(KgeError::Malformed {
                        origin,
                        line: i + 1,
                        msg: format!("component {} is not a number: {p:?}", j + 1),
                    })
                }
            }
        }
        if vector.len() < expected_dim {
            return Err(KgeError::ShortVector {
                origin,
                line: i + 1,
                got: vector.len(),
                expected: expected_dim,
            });
        }
        table.insert(token, vector);
    }
    Ok(table)
}

/// Builds a deterministic stand-in word table when no pretrained file is
/// available: each token's vector is uniform(-1, 1) noise seeded by the
/// token's hash combined with the global seed.
pub fn fallback_word_vectors(vocabulary: &[&str], d_w: usize, seed: u64) -> WordVectorTable {
    let mut table = WordVectorTable::new(d_w);
    for &token in vocabulary {
        let mut rng = stream(seed, fnv1a(token));
        let vector = (0..d_w).map(|_| rng.gen_range(-1.0..1.0)).collect();
        table.insert(token, vector);
    }
    table
}

/// Every distinct token produced by linearizing the full graph; the
/// vocabulary for [`fallback_word_vectors`].
pub fn graph_vocabulary(graph: &KnowledgeGraph) -> Vec<String> {
    let sentence = linearize(graph);
    let set: BTreeSet<&str> = sentence.split_whitespace().collect();
    set.into_iter().map(str::to_string).collect()
}

/// Computes the experiment's static scene embedding for the given mode.
///
/// `perceived` is the experiment-level entity list (the object types the
/// agent can encounter). Mode none yields no embedding; partial removes
/// color triples from the selected subgraph; full keeps them. When
/// `target_dim` is not forced by the caller it defaults to 300 with domain
/// randomization and 150 without.
pub fn scene_embedding_for_mode(
    graph: &KnowledgeGraph,
    mode: KgeMode,
    dr_enabled: bool,
    perceived: &[&str],
    table: &WordVectorTable,
    target_dim: Option<usize>,
) -> Result<Option<SceneEmbedding>, KgeError> {
    if mode == KgeMode::None {
        return Ok(None);
    }
    let dim = target_dim.unwrap_or(if dr_enabled { 300 } else { 150 });
    let mut subgraph = select_subgraph(graph, perceived)?;
    if mode == KgeMode::Partial {
        subgraph = KnowledgeGraph::from_triples(
            subgraph
                .triples()
                .filter(|t| !COLOR_RELATIONS.contains(&t.relation.as_str()))
                .cloned(),
        );
    }
    let sentence = linearize(&subgraph);
    Ok(Some(embed_scene(&sentence, table, dim)))
}
