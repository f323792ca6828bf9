//! Multi-label data model, JSONL ingestion and corpus statistics.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::sparse::SparseVec;

/// Widest label universe a [`LabelSet`] can hold.
pub const MAX_LABELS: usize = 64;

/// Ordered label universe; label `j` is `names[j]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSpace {
    names: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl LabelSpace {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() < 2 {
            return Err(Error::LabelSpace(format!(
                "need at least 2 labels, got {}",
                names.len()
            )));
        }
        if names.len() > MAX_LABELS {
            return Err(Error::LabelSpace(format!(
                "at most {MAX_LABELS} labels are supported, got {}",
                names.len()
            )));
        }
        let mut index = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if name.is_empty() {
                return Err(Error::LabelSpace("empty label name".into()));
            }
            if index.insert(name.clone(), i).is_some() {
                return Err(Error::LabelSpace(format!("duplicate label {name:?}")));
            }
        }
        Ok(Self { names, index })
    }

    /// Space over the sorted union of `names`.
    pub fn sorted_union<'a>(names: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let set: BTreeSet<&str> = names.into_iter().collect();
        Self::new(set)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn empty_set(&self) -> LabelSet {
        LabelSet::empty(self.len())
    }

    /// Label set from names; unknown names are returned as the error value.
    pub fn encode<'a>(&self, names: impl IntoIterator<Item = &'a str>) -> std::result::Result<LabelSet, String> {
        let mut set = self.empty_set();
        for n in names {
            match self.index_of(n) {
                Some(j) => set.insert(j),
                None => return Err(n.to_string()),
            }
        }
        Ok(set)
    }

    pub fn decode(&self, set: LabelSet) -> Vec<&str> {
        set.iter().map(|j| self.names[j].as_str()).collect()
    }
}

impl TryFrom<Vec<String>> for LabelSpace {
    type Error = Error;

    fn try_from(names: Vec<String>) -> Result<Self> {
        Self::new(names)
    }
}

impl From<LabelSpace> for Vec<String> {
    fn from(space: LabelSpace) -> Self {
        space.names
    }
}

/// Subset of a label space as a fixed-width bitset; bit `j` is label `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LabelSet {
    bits: u64,
    width: u8,
}

impl LabelSet {
    pub fn empty(width: usize) -> Self {
        assert!(width <= MAX_LABELS, "label set wider than {MAX_LABELS}");
        Self {
            bits: 0,
            width: width as u8,
        }
    }

    pub fn from_bits(bits: u64, width: usize) -> Self {
        let mut s = Self::empty(width);
        s.bits = bits & Self::mask(width);
        s
    }

    pub fn from_indices(width: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut s = Self::empty(width);
        for j in indices {
            s.insert(j);
        }
        s
    }

    pub fn from_flags(flags: &[bool]) -> Self {
        Self::from_indices(
            flags.len(),
            flags.iter().enumerate().filter(|(_, f)| **f).map(|(j, _)| j),
        )
    }

    fn mask(width: usize) -> u64 {
        if width == 64 {
            u64::MAX
        } else {
            (1u64 << width) - 1
        }
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn width(&self) -> usize {
        self.width as usize
    }

    pub fn insert(&mut self, j: usize) {
        assert!(j < self.width(), "label {j} outside width {}", self.width);
        self.bits |= 1 << j;
    }

    pub fn remove(&mut self, j: usize) {
        if j < self.width() {
            self.bits &= !(1 << j);
        }
    }

    pub fn contains(&self, j: usize) -> bool {
        j < self.width() && self.bits >> j & 1 == 1
    }

    pub fn len(&self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> {
        let bits = self.bits;
        (0..self.width()).filter(move |j| bits >> j & 1 == 1)
    }

    pub fn complement(&self) -> Self {
        Self::from_bits(!self.bits, self.width())
    }

    /// Size of the symmetric difference.
    pub fn hamming(&self, other: &LabelSet) -> usize {
        (self.bits ^ other.bits).count_ones() as usize
    }

    /// Restrict to the labels in `subset`, re-indexed 0..subset.len().
    pub fn project(&self, subset: &[usize]) -> LabelSet {
        LabelSet::from_indices(
            subset.len(),
            subset
                .iter()
                .enumerate()
                .filter(|(_, &j)| self.contains(j))
                .map(|(k, _)| k),
        )
    }

    pub fn to_flags(&self) -> Vec<bool> {
        (0..self.width()).map(|j| self.contains(j)).collect()
    }
}

impl fmt::Display for LabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (n, j) in self.iter().enumerate() {
            if n > 0 {
                write!(f, ",")?;
            }
            write!(f, "{j}")?;
        }
        write!(f, "}}")
    }
}

/// Token ids for the sequence (LSTM) path; `ids.len()` is the padded length and
/// `len` the number of real tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub len: usize,
}

impl TokenSequence {
    pub fn tokens(&self) -> &[u32] {
        &self.ids[..self.len.min(self.ids.len())]
    }
}

/// Instance representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Features {
    /// Raw text, not yet vectorized.
    Text(String),
    Sparse(SparseVec),
    Sequence(TokenSequence),
}

impl Features {
    pub fn kind(&self) -> &'static str {
        match self {
            Features::Text(_) => "text",
            Features::Sparse(_) => "sparse",
            Features::Sequence(_) => "sequence",
        }
    }

    pub fn as_sparse(&self) -> Result<&SparseVec> {
        match self {
            Features::Sparse(v) => Ok(v),
            other => Err(Error::Representation(format!(
                "expected sparse features, found {}",
                other.kind()
            ))),
        }
    }

    pub fn as_sequence(&self) -> Result<&TokenSequence> {
        match self {
            Features::Sequence(s) => Ok(s),
            other => Err(Error::Representation(format!(
                "expected a token sequence, found {}",
                other.kind()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiLabelInstance {
    pub id: String,
    pub features: Features,
    pub labels: LabelSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiLabelDataset {
    space: LabelSpace,
    instances: Vec<MultiLabelInstance>,
    feature_dim: usize,
}

impl MultiLabelDataset {
    pub fn new(space: LabelSpace, instances: Vec<MultiLabelInstance>, feature_dim: usize) -> Result<Self> {
        for inst in &instances {
            if inst.labels.width() != space.len() {
                return Err(Error::invalid(format!(
                    "instance {:?} has label width {} but the space has {} labels",
                    inst.id,
                    inst.labels.width(),
                    space.len()
                )));
            }
            if let Features::Sparse(v) = &inst.features {
                if v.dim_hint() > feature_dim {
                    return Err(Error::invalid(format!(
                        "instance {:?} has feature index {} beyond dimension {feature_dim}",
                        inst.id,
                        v.dim_hint() - 1
                    )));
                }
            }
        }
        Ok(Self {
            space,
            instances,
            feature_dim,
        })
    }

    pub fn space(&self) -> &LabelSpace {
        &self.space
    }

    pub fn instances(&self) -> &[MultiLabelInstance] {
        &self.instances
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn n_labels(&self) -> usize {
        self.space.len()
    }

    pub fn label_sets(&self) -> Vec<LabelSet> {
        self.instances.iter().map(|i| i.labels).collect()
    }

    /// New dataset over the instances at `indices` (in that order).
    pub fn subset(&self, indices: &[usize]) -> MultiLabelDataset {
        MultiLabelDataset {
            space: self.space.clone(),
            instances: indices.iter().map(|&i| self.instances[i].clone()).collect(),
            feature_dim: self.feature_dim,
        }
    }

    /// Replace every instance's features, keeping ids and labels.
    pub fn map_features(
        &self,
        feature_dim: usize,
        mut f: impl FnMut(&MultiLabelInstance) -> Result<Features>,
    ) -> Result<MultiLabelDataset> {
        let instances = self
            .instances
            .iter()
            .map(|inst| {
                Ok(MultiLabelInstance {
                    id: inst.id.clone(),
                    features: f(inst)?,
                    labels: inst.labels,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        MultiLabelDataset::new(self.space.clone(), instances, feature_dim)
    }
}

#[derive(Deserialize)]
struct JsonDoc {
    id: Option<String>,
    text: Option<String>,
    features: Option<BTreeMap<String, f64>>,
    labels: Vec<String>,
}

/// Load a JSONL corpus. Each non-blank line holds `labels` plus either `text`
/// or a `features` map. Without `space` the label space is the sorted union of
/// the observed labels.
pub fn load_jsonl(path: impl AsRef<Path>, space: Option<&LabelSpace>) -> Result<MultiLabelDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut rows: Vec<(usize, String, Features, Vec<String>)> = Vec::new();
    let mut feature_dim = 0usize;
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: JsonDoc = serde_json::from_str(&line).map_err(|e| parse_err(lineno, e.to_string()))?;
        let features = match (doc.text, doc.features) {
            (Some(_), Some(_)) => return Err(parse_err(lineno, "both \"text\" and \"features\" present".into())),
            (Some(t), None) => Features::Text(t),
            (None, Some(map)) => {
                let mut pairs = Vec::with_capacity(map.len());
                for (k, v) in map {
                    let idx: u32 = k
                        .parse()
                        .map_err(|_| parse_err(lineno, format!("feature key {k:?} is not an index")))?;
                    if !v.is_finite() {
                        return Err(parse_err(lineno, format!("feature {k} is not finite")));
                    }
                    pairs.push((idx, v));
                }
                let v = SparseVec::from_pairs(pairs).map_err(|e| parse_err(lineno, e.to_string()))?;
                feature_dim = feature_dim.max(v.dim_hint());
                Features::Sparse(v)
            }
            (None, None) => return Err(parse_err(lineno, "missing \"text\" or \"features\"".into())),
        };
        let id = doc.id.unwrap_or_else(|| format!("line-{lineno}"));
        rows.push((lineno, id, features, doc.labels));
    }
    if rows.is_empty() {
        return Err(Error::EmptyCorpus);
    }

    let space = match space {
        Some(s) => s.clone(),
        None => LabelSpace::sorted_union(rows.iter().flat_map(|r| r.3.iter().map(String::as_str)))?,
    };
    let mut instances = Vec::with_capacity(rows.len());
    for (lineno, id, features, labels) in rows {
        let labels = space
            .encode(labels.iter().map(String::as_str))
            .map_err(|label| Error::UnknownLabel { label, line: lineno })?;
        instances.push(MultiLabelInstance { id, features, labels });
    }
    MultiLabelDataset::new(space, instances, feature_dim)
}

/// Write a dataset in the JSONL format read by [`load_jsonl`]. Sequence
/// features have no JSONL form and are rejected.
pub fn write_jsonl(ds: &MultiLabelDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for inst in ds.instances() {
        let mut obj = Map::new();
        obj.insert("id".into(), json!(inst.id));
        match &inst.features {
            Features::Text(t) => {
                obj.insert("text".into(), json!(t));
            }
            Features::Sparse(v) => {
                let map: Map<String, Value> = v.iter().map(|(i, w)| (i.to_string(), json!(w))).collect();
                obj.insert("features".into(), Value::Object(map));
            }
            Features::Sequence(_) => {
                return Err(Error::Representation(
                    "token sequences cannot be written as JSONL".into(),
                ))
            }
        }
        obj.insert("labels".into(), json!(ds.space().decode(inst.labels)));
        writeln!(out, "{}", Value::Object(obj)).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// A document with per-label reader vote counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawVotedDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub text: String,
    pub votes: BTreeMap<String, u64>,
}

impl RawVotedDocument {
    pub fn total_votes(&self) -> u64 {
        self.votes.values().sum()
    }

    /// Labels with at least one vote, in name order.
    pub fn voted_labels(&self) -> Vec<&str> {
        self.votes
            .iter()
            .filter(|(_, &c)| c > 0)
            .map(|(k, _)| k.as_str())
            .collect()
    }
}

/// What the vote fraction is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdScope {
    /// Each document's own vote total.
    #[default]
    Doc,
    /// The mean per-document vote total of the input corpus (one absolute cut-off).
    Corpus,
}

/// Remove labels whose vote count is strictly below `fraction` of the reference
/// total, then drop documents left without a voted label. Surviving counts are
/// unchanged.
pub fn vote_threshold_filter(
    docs: &[RawVotedDocument],
    fraction: f64,
    scope: ThresholdScope,
) -> Result<Vec<RawVotedDocument>> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!(
            "threshold fraction must be in (0,1), got {fraction}"
        )));
    }
    let corpus_mean = if docs.is_empty() {
        0.0
    } else {
        docs.iter().map(|d| d.total_votes() as f64).sum::<f64>() / docs.len() as f64
    };
    let kept = docs
        .iter()
        .filter_map(|doc| {
            let reference = match scope {
                ThresholdScope::Doc => doc.total_votes() as f64,
                ThresholdScope::Corpus => corpus_mean,
            };
            let cutoff = fraction * reference;
            let votes: BTreeMap<String, u64> = doc
                .votes
                .iter()
                .filter(|(_, &c)| c > 0 && (c as f64) >= cutoff)
                .map(|(k, &c)| (k.clone(), c))
                .collect();
            (!votes.is_empty()).then(|| RawVotedDocument {
                id: doc.id.clone(),
                text: doc.text.clone(),
                votes,
            })
        })
        .collect();
    Ok(kept)
}

/// Mean number of labels per instance.
pub fn label_cardinality(ds: &MultiLabelDataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let total: usize = ds.instances().iter().map(|i| i.labels.len()).sum();
    Ok(total as f64 / ds.len() as f64)
}

/// Cardinality divided by the number of labels.
pub fn label_density(ds: &MultiLabelDataset) -> Result<f64> {
    Ok(label_cardinality(ds)? / ds.n_labels() as f64)
}

/// Number of instances carrying each label, in label-space order.
pub fn class_distribution(ds: &MultiLabelDataset) -> Vec<(String, usize)> {
    let mut counts = vec![0usize; ds.n_labels()];
    for inst in ds.instances() {
        for j in inst.labels.iter() {
            counts[j] += 1;
        }
    }
    ds.space().names().iter().cloned().zip(counts).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn doc(votes: &[(&str, u64)]) -> RawVotedDocument {
        RawVotedDocument {
            id: None,
            text: "t".into(),
            votes: votes.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    #[test]
    fn load_three_lines() {
        let f = write_tmp(
            r#"{"text": "x", "labels": ["a"]}
{"text": "y", "labels": ["a", "b"]}
{"text": "z", "labels": ["b"]}
"#,
        );
        let ds = load_jsonl(f.path(), None).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.n_labels(), 2);
        assert_eq!(ds.space().names(), &["a", "b"]);
        assert_eq!(ds.instances()[1].labels.len(), 2);
    }

    #[test]
    fn unknown_label_names_label_and_line() {
        let f = write_tmp(r#"{"text": "x", "labels": ["zz"]}"#);
        let space = LabelSpace::new(["a", "b"]).unwrap();
        let err = load_jsonl(f.path(), Some(&space)).unwrap_err();
        match &err {
            Error::UnknownLabel { label, line } => {
                assert_eq!(label, "zz");
                assert_eq!(*line, 1);
            }
            other => panic!("unexpected error {other}"),
        }
        let msg = err.to_string();
        assert!(msg.contains("zz") && msg.contains("line 1"), "{msg}");
    }

    #[test]
    fn empty_file_is_an_error() {
        let f = write_tmp("");
        let err = load_jsonl(f.path(), None).unwrap_err();
        assert_eq!(err.to_string(), "empty corpus");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let f = write_tmp("{\"text\": \"x\", \"labels\": [\"a\", \"b\"]}\n{not json\n");
        match load_jsonl(f.path(), None).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn feature_lines_set_dimension() {
        let f = write_tmp(
            r#"{"id": "d1", "features": {"12": 0.5, "90": 1.25}, "labels": ["a"]}
{"id": "d2", "features": {"3": 1.0}, "labels": ["b"]}"#,
        );
        let ds = load_jsonl(f.path(), None).unwrap();
        assert_eq!(ds.feature_dim(), 91);
        let v = ds.instances()[0].features.as_sparse().unwrap();
        assert_eq!(v.indices(), &[12, 90]);
    }

    #[test]
    fn threshold_boundary_is_strict() {
        let out = vote_threshold_filter(&[doc(&[("love", 97), ("hate", 3)])], 0.03, ThresholdScope::Doc).unwrap();
        assert_eq!(out[0].votes.len(), 2);

        let out = vote_threshold_filter(&[doc(&[("love", 98), ("hate", 2)])], 0.03, ThresholdScope::Doc).unwrap();
        assert_eq!(out[0].votes.keys().collect::<Vec<_>>(), vec!["love"]);
        assert_eq!(out[0].votes["love"], 98);

        let out = vote_threshold_filter(&[doc(&[("hate", 1)])], 0.03, ThresholdScope::Doc).unwrap();
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn threshold_drops_voteless_documents_and_validates_fraction() {
        let out = vote_threshold_filter(&[doc(&[("love", 0)])], 0.03, ThresholdScope::Doc).unwrap();
        assert!(out.is_empty());
        assert!(vote_threshold_filter(&[], 0.0, ThresholdScope::Doc).is_err());
        assert!(vote_threshold_filter(&[], 1.0, ThresholdScope::Doc).is_err());
    }

    #[test]
    fn corpus_scope_uses_one_cutoff() {
        // mean total = (100 + 10) / 2 = 55, cutoff 0.1 * 55 = 5.5
        let docs = [doc(&[("a", 95), ("b", 5)]), doc(&[("a", 4), ("b", 6)])];
        let out = vote_threshold_filter(&docs, 0.1, ThresholdScope::Corpus).unwrap();
        assert_eq!(out[0].votes.keys().collect::<Vec<_>>(), vec!["a"]);
        assert_eq!(out[1].votes.keys().collect::<Vec<_>>(), vec!["b"]);
    }

    fn toy(sets: &[&[usize]], width: usize) -> MultiLabelDataset {
        let names: Vec<String> = (0..width).map(|j| format!("l{j}")).collect();
        let space = LabelSpace::new(names).unwrap();
        let instances = sets
            .iter()
            .enumerate()
            .map(|(i, s)| MultiLabelInstance {
                id: i.to_string(),
                features: Features::Text(String::new()),
                labels: LabelSet::from_indices(width, s.iter().copied()),
            })
            .collect();
        MultiLabelDataset::new(space, instances, 0).unwrap()
    }

    #[test]
    fn cardinality_density_distribution() {
        let ds = toy(&[&[0], &[0, 1], &[1, 2]], 3);
        let card = label_cardinality(&ds).unwrap();
        assert!((card - 5.0 / 3.0).abs() < 1e-12);
        assert!((label_density(&ds).unwrap() - 5.0 / 9.0).abs() < 1e-12);
        assert_eq!(
            class_distribution(&ds),
            vec![("l0".into(), 2), ("l1".into(), 2), ("l2".into(), 1)]
        );
    }

    #[test]
    fn empty_dataset_statistics() {
        let ds = toy(&[], 2);
        assert!(label_cardinality(&ds).is_err());
        assert!(class_distribution(&ds).iter().all(|(_, c)| *c == 0));
    }

    #[test]
    fn label_space_invariants() {
        assert!(LabelSpace::new(["a"]).is_err());
        assert!(LabelSpace::new(["a", "a"]).is_err());
        assert!(LabelSpace::new(["a", ""]).is_err());
        let s = LabelSpace::new(["x", "y"]).unwrap();
        assert_eq!(s.index_of("y"), Some(1));
        let json = serde_json::to_string(&s).unwrap();
        let back: LabelSpace = serde_json::from_str(&json).unwrap();
        assert_eq!(back.index_of("y"), Some(1));
    }
}
