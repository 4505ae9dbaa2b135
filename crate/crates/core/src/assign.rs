//! Class-adjacency statistics and codeword assignment optimization.
//!
//! The adjacency graph counts 6-connected (face-neighbor) voxel pairs with
//! differing labels across a corpus of label volumes. The assignment
//! objective is the count-weighted sum of Hamming distances between the data
//! words of adjacent classes; optimization is greedy construction followed by
//! pairwise-swap local search (including moves onto unused words).
//!
//! Assignments target data words; under Hamming(7,4) the encoded distance of
//! any pair is at least its data-word distance, so data-word cost is a lower
//! bound proxy for encoded cost.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::codebook::{required_data_bits, Codebook, Scheme};
use crate::error::{Error, Result};
use crate::volume::LabelVolume;

const ADJACENCY_FORMAT_VERSION: u32 = 1;

/// Undirected class-adjacency graph with co-boundary counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassAdjacencyGraph {
    n_classes: usize,
    // Keyed by (a, b) with a < b; counts are >= 1.
    edges: BTreeMap<(u16, u16), u64>,
}

impl ClassAdjacencyGraph {
    pub fn new(n_classes: usize, edges: BTreeMap<(u16, u16), u64>) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::invalid(format!(
                "adjacency graph needs at least 2 classes, got {n_classes}"
            )));
        }
        for (&(a, b), &count) in &edges {
            if a >= b {
                return Err(Error::invalid(format!(
                    "edge ({a}, {b}) must be ordered a < b with no self-loops"
                )));
            }
            if b as usize >= n_classes {
                return Err(Error::invalid(format!(
                    "edge ({a}, {b}) out of range for {n_classes} classes"
                )));
            }
            if count == 0 {
                return Err(Error::invalid(format!(
                    "edge ({a}, {b}) has zero count; absent edges are omitted"
                )));
            }
        }
        Ok(ClassAdjacencyGraph { n_classes, edges })
    }

    pub fn empty(n_classes: usize) -> Result<Self> {
        Self::new(n_classes, BTreeMap::new())
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Edges in sorted (a, b) order.
    pub fn edges(&self) -> impl Iterator<Item = (u16, u16, u64)> + '_ {
        self.edges.iter().map(|(&(a, b), &c)| (a, b, c))
    }

    pub fn count(&self, a: u16, b: u16) -> u64 {
        let key = if a < b { (a, b) } else { (b, a) };
        self.edges.get(&key).copied().unwrap_or(0)
    }

    /// Total co-boundary count incident to `class`.
    pub fn weighted_degree(&self, class: u16) -> u64 {
        self.edges
            .iter()
            .filter(|(&(a, b), _)| a == class || b == class)
            .map(|(_, &c)| c)
            .sum()
    }

    /// Same topology with every count collapsed to 1.
    pub fn binarized(&self) -> Self {
        ClassAdjacencyGraph {
            n_classes: self.n_classes,
            edges: self.edges.keys().map(|&k| (k, 1)).collect(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = AdjacencyFile {
            format_version: ADJACENCY_FORMAT_VERSION,
            n_classes: self.n_classes,
            edges: self
                .edges
                .iter()
                .map(|(&(a, b), &c)| [a as u64, b as u64, c])
                .collect(),
        };
        let text = toml::to_string(&file).map_err(|e| Error::parse(path, e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: AdjacencyFile =
            toml::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        if file.format_version != ADJACENCY_FORMAT_VERSION {
            return Err(Error::parse(
                path,
                format!("unsupported format version {}", file.format_version),
            ));
        }
        let mut edges = BTreeMap::new();
        for [a, b, count] in file.edges {
            if a > u16::MAX as u64 || b > u16::MAX as u64 {
                return Err(Error::parse(path, format!("edge ({a}, {b}) out of range")));
            }
            edges.insert((a as u16, b as u16), count);
        }
        Self::new(file.n_classes, edges).map_err(|e| Error::parse(path, e.to_string()))
    }
}

#[derive(Serialize, Deserialize)]
struct AdjacencyFile {
    format_version: u32,
    n_classes: usize,
    edges: Vec<[u64; 3]>,
}

/// Count 6-connected voxel pairs with differing labels across the corpus.
pub fn build_adjacency(
    volumes: &[LabelVolume],
    n_classes: usize,
) -> Result<ClassAdjacencyGraph> {
    if volumes.is_empty() {
        return Err(Error::invalid("adjacency needs at least one label volume"));
    }
    let mut edges: BTreeMap<(u16, u16), u64> = BTreeMap::new();
    let mut bump = |a: u16, b: u16| {
        if a != b {
            let key = if a < b { (a, b) } else { (b, a) };
            *edges.entry(key).or_insert(0) += 1;
        }
    };
    for volume in volumes {
        for &label in &volume.labels {
            if label as usize >= n_classes {
                return Err(Error::invalid(format!(
                    "label {label} out of range for {n_classes} classes"
                )));
            }
        }
        let dims = volume.dims;
        for z in 0..dims.z {
            for y in 0..dims.y {
                for x in 0..dims.x {
                    let here = volume.labels[dims.index(x, y, z)];
                    if x + 1 < dims.x {
                        bump(here, volume.labels[dims.index(x + 1, y, z)]);
                    }
                    if y + 1 < dims.y {
                        bump(here, volume.labels[dims.index(x, y + 1, z)]);
                    }
                    if z + 1 < dims.z {
                        bump(here, volume.labels[dims.index(x, y, z + 1)]);
                    }
                }
            }
        }
    }
    ClassAdjacencyGraph::new(n_classes, edges)
}

/// Objective value: sum over edges of `count * hamming(word_a, word_b)`.
pub fn assignment_cost(graph: &ClassAdjacencyGraph, codebook: &Codebook) -> Result<u64> {
    if codebook.n_classes() < graph.n_classes() {
        return Err(Error::invalid(format!(
            "codebook covers {} classes but the graph has {}",
            codebook.n_classes(),
            graph.n_classes()
        )));
    }
    let mut cost = 0u64;
    for (a, b, count) in graph.edges() {
        let wa = codebook.data_word(a)?;
        let wb = codebook.data_word(b)?;
        cost += count * (wa ^ wb).count_ones() as u64;
    }
    Ok(cost)
}

/// Outcome of [`optimize_assignment`].
#[derive(Debug, Clone)]
pub struct AssignmentResult {
    pub codebook: Codebook,
    pub cost: u64,
    /// Local-search passes executed (each pass scans all candidate moves).
    pub iterations: usize,
    pub seed: u64,
}

/// Greedy construction plus pairwise-swap local search.
///
/// Greedy places the class with the highest weighted degree first, then
/// repeatedly assigns the class most strongly tied to already-placed classes
/// to the unused data word with the lowest incremental cost. Local search
/// scans class-class swaps and class-to-unused-word moves in seeded random
/// order, applying each improvement, until a pass finds none or the pass
/// budget is exhausted. Deterministic per seed; the returned cost is never
/// worse than the greedy start.
pub fn optimize_assignment(
    graph: &ClassAdjacencyGraph,
    scheme: Scheme,
    seed: u64,
    max_iterations: usize,
) -> Result<AssignmentResult> {
    if max_iterations == 0 {
        return Err(Error::invalid("iteration budget must be positive"));
    }
    let n_classes = graph.n_classes();
    let n_bits = required_data_bits(n_classes)?;
    let n_words = 1usize << n_bits;

    // Per-class neighbor lists for O(degree) incremental cost.
    let mut neighbors: Vec<Vec<(u16, u64)>> = vec![Vec::new(); n_classes];
    for (a, b, count) in graph.edges() {
        neighbors[a as usize].push((b, count));
        neighbors[b as usize].push((a, count));
    }
    let weighted_degree: Vec<u64> = (0..n_classes)
        .map(|c| neighbors[c].iter().map(|&(_, w)| w).sum())
        .collect();

    // Greedy construction.
    let mut word_of: Vec<Option<u32>> = vec![None; n_classes];
    let mut word_used = vec![false; n_words];
    let mut placed_weight: Vec<u64> = vec![0; n_classes];
    for step in 0..n_classes {
        let next = if step == 0 {
            (0..n_classes)
                .max_by_key(|&c| (weighted_degree[c], std::cmp::Reverse(c)))
                .expect("n_classes >= 2")
        } else {
            (0..n_classes)
                .filter(|&c| word_of[c].is_none())
                .max_by_key(|&c| (placed_weight[c], weighted_degree[c], std::cmp::Reverse(c)))
                .expect("unplaced class exists")
        };
        let best_word = (0..n_words as u32)
            .filter(|&w| !word_used[w as usize])
            .min_by_key(|&w| {
                let incremental: u64 = neighbors[next]
                    .iter()
                    .filter_map(|&(nbr, count)| {
                        word_of[nbr as usize]
                            .map(|nw| count * (w ^ nw).count_ones() as u64)
                    })
                    .sum();
                (incremental, w)
            })
            .expect("unused word exists");
        word_of[next] = Some(best_word);
        word_used[best_word as usize] = true;
        for &(nbr, count) in &neighbors[next] {
            placed_weight[nbr as usize] += count;
        }
    }
    let mut words: Vec<u32> = word_of.into_iter().map(|w| w.expect("placed")).collect();

    let local_cost = |c: usize, word: u32, words: &[u32]| -> u64 {
        neighbors[c]
            .iter()
            .map(|&(nbr, count)| count * (word ^ words[nbr as usize]).count_ones() as u64)
            .sum()
    };
    let total_cost = |words: &[u32]| -> u64 {
        graph
            .edges()
            .map(|(a, b, count)| {
                count * (words[a as usize] ^ words[b as usize]).count_ones() as u64
            })
            .sum()
    };

    let greedy_cost = total_cost(&words);
    let mut cost = greedy_cost;

    // Candidate moves: every class pair swap and every class-to-unused-word move.
    #[derive(Clone, Copy)]
    enum Move {
        Swap(usize, usize),
        Relocate(usize, u32),
    }
    let unused_words: Vec<u32> = (0..n_words as u32)
        .filter(|&w| !words.contains(&w))
        .collect();
    let mut candidates: Vec<Move> = Vec::new();
    for a in 0..n_classes {
        for b in (a + 1)..n_classes {
            candidates.push(Move::Swap(a, b));
        }
    }
    for c in 0..n_classes {
        for slot in 0..unused_words.len() {
            candidates.push(Move::Relocate(c, slot as u32));
        }
    }
    // Track which word occupies each unused slot as relocations happen.
    let mut free_words = unused_words;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut iterations = 0usize;
    while iterations < max_iterations {
        iterations += 1;
        candidates.shuffle(&mut rng);
        let mut improved = false;
        for &mv in &candidates {
            match mv {
                Move::Swap(a, b) => {
                    let before = local_cost(a, words[a], &words) + local_cost(b, words[b], &words);
                    let (wa, wb) = (words[a], words[b]);
                    words[a] = wb;
                    words[b] = wa;
                    let after = local_cost(a, words[a], &words) + local_cost(b, words[b], &words);
                    if after < before {
                        cost = cost + after - before;
                        improved = true;
                    } else {
                        words[a] = wa;
                        words[b] = wb;
                    }
                }
                Move::Relocate(c, slot) => {
                    let free = free_words[slot as usize];
                    let before = local_cost(c, words[c], &words);
                    let after = local_cost(c, free, &words);
                    if after < before {
                        free_words[slot as usize] = words[c];
                        words[c] = free;
                        cost = cost + after - before;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            break;
        }
    }

    let recomputed = total_cost(&words);
    debug_assert_eq!(cost, recomputed, "incremental cost drifted");
    debug_assert!(recomputed <= greedy_cost);
    let codebook = Codebook::new(n_classes, scheme, words)?;
    Ok(AssignmentResult {
        codebook,
        cost: recomputed,
        iterations,
        seed,
    })
}
