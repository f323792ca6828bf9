//! Seeded synthetic corpora for tests, examples and the learnability checks.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::corpus::{Features, LabelSet, LabelSpace, MultiLabelDataset, MultiLabelInstance};
use crate::error::Result;
use crate::sparse::SparseVec;
use crate::textprep::EmbeddingTable;

/// Reaction labels of the bundled separable corpus.
pub const SEPARABLE_LABELS: [&str; 4] = ["alegria", "raiva", "surpresa", "tristeza"];

const FILLER: [&str; 40] = [
    "governo",
    "cidade",
    "ontem",
    "projeto",
    "equipe",
    "mercado",
    "escola",
    "prefeito",
    "semana",
    "partida",
    "estado",
    "empresa",
    "pesquisa",
    "jogo",
    "reforma",
    "policia",
    "hospital",
    "festival",
    "eleicao",
    "tribunal",
    "bairro",
    "transporte",
    "chuva",
    "museu",
    "ministro",
    "campanha",
    "obra",
    "rede",
    "banco",
    "trabalho",
    "saude",
    "economia",
    "filme",
    "praia",
    "noite",
    "cultura",
    "clube",
    "rua",
    "centro",
    "anos",
];

/// Indicator tokens of label `j`; each document carrying the label contains
/// both of them.
pub fn indicator_tokens(j: usize) -> [String; 2] {
    [format!("sinal{j}a"), format!("sinal{j}b")]
}

/// The bundled separable corpus: 600 documents of raw text over four labels.
/// Every label is carried with probability 0.4 and is signalled by its two
/// indicator tokens, placed among 6 to 10 filler words.
pub fn separable_corpus(seed: u64) -> MultiLabelDataset {
    separable_corpus_sized(600, seed)
}

pub fn separable_corpus_sized(n: usize, seed: u64) -> MultiLabelDataset {
    let space = LabelSpace::new(SEPARABLE_LABELS).expect("static label space");
    let width = space.len();
    let mut rng = crate::rng::stream(seed, 0);
    let instances = (0..n)
        .map(|i| {
            let labels = LabelSet::from_flags(&(0..width).map(|_| rng.random_bool(0.4)).collect::<Vec<_>>());
            let n_filler = rng.random_range(6..=10);
            let mut words: Vec<String> = (0..n_filler)
                .map(|_| FILLER[rng.random_range(0..FILLER.len())].to_string())
                .collect();
            for j in labels.iter() {
                for tok in indicator_tokens(j) {
                    let at = rng.random_range(0..=words.len());
                    words.insert(at, tok);
                }
            }
            MultiLabelInstance {
                id: format!("sint-{i:04}"),
                features: Features::Text(words.join(" ")),
                labels,
            }
        })
        .collect();
    MultiLabelDataset::new(space, instances, 0).expect("consistent synthetic corpus")
}

/// Random word vectors for every word the separable corpus can contain.
pub fn separable_embeddings(dim: usize, seed: u64) -> EmbeddingTable {
    let mut words: Vec<String> = FILLER.iter().map(|w| w.to_string()).collect();
    for j in 0..SEPARABLE_LABELS.len() {
        words.extend(indicator_tokens(j));
    }
    random_embeddings(&words, dim, seed)
}

pub fn random_embeddings(words: &[String], dim: usize, seed: u64) -> EmbeddingTable {
    let mut rng = crate::rng::stream(seed, 1);
    let rows = words
        .iter()
        .map(|w| (w.clone(), (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()))
        .collect();
    EmbeddingTable::from_rows(dim, rows).expect("distinct synthetic words")
}

/// Sparse dataset where feature `j` (weight 1) marks label `j`, plus
/// `noise_dims` random count features drawn from {0, 1, 2}.
pub fn indicator_dataset(n: usize, n_labels: usize, noise_dims: usize, seed: u64) -> MultiLabelDataset {
    let mut rng = crate::rng::stream(seed, 2);
    let dim = n_labels + noise_dims;
    let instances = (0..n)
        .map(|i| {
            let labels = LabelSet::from_flags(&(0..n_labels).map(|_| rng.random_bool(0.4)).collect::<Vec<_>>());
            let mut pairs: Vec<(u32, f64)> = labels.iter().map(|j| (j as u32, 1.0)).collect();
            for k in 0..noise_dims {
                let v = rng.random_range(0..3);
                if v > 0 {
                    pairs.push(((n_labels + k) as u32, v as f64));
                }
            }
            MultiLabelInstance {
                id: format!("ind-{i}"),
                features: Features::Sparse(SparseVec::from_pairs(pairs).expect("finite")),
                labels,
            }
        })
        .collect();
    MultiLabelDataset::new(label_space(n_labels), instances, dim).expect("consistent")
}

/// Sparse dataset whose labels are only loosely tied to the features: each
/// label is driven by one feature with flip probability `noise`.
pub fn noisy_dataset(n: usize, n_labels: usize, dim: usize, noise: f64, seed: u64) -> MultiLabelDataset {
    assert!(dim >= n_labels);
    let mut rng = crate::rng::stream(seed, 3);
    let instances = (0..n)
        .map(|i| {
            let dense: Vec<f64> = (0..dim).map(|_| rng.random_range(0..3) as f64).collect();
            let flags: Vec<bool> = (0..n_labels)
                .map(|j| (dense[j] >= 1.0) != rng.random_bool(noise))
                .collect();
            MultiLabelInstance {
                id: format!("noisy-{i}"),
                features: Features::Sparse(SparseVec::from_dense(&dense).expect("finite")),
                labels: LabelSet::from_flags(&flags),
            }
        })
        .collect();
    MultiLabelDataset::new(label_space(n_labels), instances, dim).expect("consistent")
}

/// Labels `l0`, `l1`, ...
pub fn label_space(n: usize) -> LabelSpace {
    LabelSpace::new((0..n).map(|j| format!("l{j}"))).expect("valid synthetic space")
}

/// Shuffled copy of `0..n`.
pub fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut crate::rng::stream(seed, 4));
    p
}

/// Write the bundled separable corpus as JSONL.
pub fn write_separable_corpus(path: impl AsRef<std::path::Path>, seed: u64) -> Result<()> {
    crate::corpus::write_jsonl(&separable_corpus(seed), path)
}
