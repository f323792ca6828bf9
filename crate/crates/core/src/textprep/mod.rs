//! Text preprocessing: token replacement, normalisation, stopwords, stemming,
//! TF-IDF vectorization and embedding-sequence encoding.

mod embedding;
mod stemmer;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{Features, MultiLabelDataset};
use crate::error::{Error, Result};
use crate::sparse::SparseVec;

pub use embedding::{encode_sequence, load_word2vec_text, EmbeddingTable, OOV_ID, PAD_ID};
pub use stemmer::{PortugueseStemmer, Stemmer};

pub const URL_TOKEN: &str = "[URL]";
pub const EMAIL_TOKEN: &str = "[EMAIL]";
pub const PERCENT_TOKEN: &str = "[PCT]";
pub const CURRENCY_TOKEN: &str = "[CUR]";
pub const NUMBER_TOKEN: &str = "[NUM]";

/// Replacement rules, tried in this order at each position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Replacement {
    Url,
    Email,
    Percent,
    Currency,
    Number,
}

impl Replacement {
    pub const ALL: [Replacement; 5] = [
        Replacement::Url,
        Replacement::Email,
        Replacement::Percent,
        Replacement::Currency,
        Replacement::Number,
    ];

    pub fn token(self) -> &'static str {
        match self {
            Replacement::Url => URL_TOKEN,
            Replacement::Email => EMAIL_TOKEN,
            Replacement::Percent => PERCENT_TOKEN,
            Replacement::Currency => CURRENCY_TOKEN,
            Replacement::Number => NUMBER_TOKEN,
        }
    }

    fn pattern(self) -> &'static str {
        match self {
            Replacement::Url => r"(?i:\b(?:https?://|ftp://|www\.)[^\s<>]+)",
            Replacement::Email => r"[\w.+-]+@[\w-]+(?:\.[\w-]+)+",
            Replacement::Percent => r"\b\d+(?:[.,]\d+)*\s?%",
            Replacement::Currency => r"\bR\$|\bUS\$|\$|€|£|¥",
            Replacement::Number => r"\b\d+(?:[.,]\d+)*\b",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub lowercase: bool,
    pub strip_special: bool,
    pub stopwords: HashSet<String>,
    pub stemmer: Stemmer,
    pub replacements: Vec<Replacement>,
    pub max_sequence_length: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            lowercase: true,
            strip_special: true,
            stopwords: HashSet::new(),
            stemmer: Stemmer::Identity,
            replacements: Replacement::ALL.to_vec(),
            max_sequence_length: 50,
        }
    }
}

impl PipelineConfig {
    /// Lowercasing and punctuation stripping only: the raw-token view used for
    /// the sequence path.
    pub fn raw_tokens(max_sequence_length: usize) -> Self {
        Self {
            replacements: Vec::new(),
            max_sequence_length,
            ..Self::default()
        }
    }

    pub fn with_stopwords<I, S>(mut self, words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.stopwords = words.into_iter().map(Into::into).collect();
        self
    }
}

/// Read a stopword list: one token per line, blank lines and `#` comments ignored.
pub fn load_stopwords(path: impl AsRef<Path>) -> Result<HashSet<String>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect())
}

fn combined_regex(rules: &[Replacement]) -> Regex {
    let alternation: Vec<String> = rules
        .iter()
        .enumerate()
        .map(|(k, r)| format!("(?P<r{k}>{})", r.pattern()))
        .collect();
    Regex::new(&alternation.join("|")).expect("replacement patterns are valid")
}

fn default_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| combined_regex(&Replacement::ALL))
}

enum Segment<'a> {
    Text(&'a str),
    Sentinel(&'static str),
}

fn segment<'a>(text: &'a str, rules: &[Replacement]) -> Vec<Segment<'a>> {
    if rules.is_empty() {
        return vec![Segment::Text(text)];
    }
    let owned;
    let re = if rules == Replacement::ALL {
        default_regex()
    } else {
        owned = combined_regex(rules);
        &owned
    };
    let mut out = Vec::new();
    let mut last = 0;
    for caps in re.captures_iter(text) {
        let (k, m) = (0..rules.len())
            .find_map(|k| caps.name(&format!("r{k}")).map(|m| (k, m)))
            .expect("one alternative matched");
        let mut end = m.end();
        if rules[k] == Replacement::Url {
            // trailing sentence punctuation belongs to the sentence, not the link
            let trimmed = m
                .as_str()
                .trim_end_matches(['.', ',', ';', ':', '!', '?', ')', '"', '\'']);
            end = m.start() + trimmed.len();
        }
        if m.start() > last {
            out.push(Segment::Text(&text[last..m.start()]));
        }
        out.push(Segment::Sentinel(rules[k].token()));
        if end < m.end() {
            out.push(Segment::Text(&text[end..m.end()]));
        }
        last = m.end();
    }
    if last < text.len() {
        out.push(Segment::Text(&text[last..]));
    }
    out
}

/// Turn raw text into tokens: replacement rules on the original text, then
/// casefolding and special-character stripping, whitespace split, stopword
/// removal and finally stemming. Sentinel tokens are never stemmed or
/// stopworded.
pub fn tokenize_and_normalize(text: &str, cfg: &PipelineConfig) -> Vec<String> {
    let mut tokens = Vec::new();
    for seg in segment(text, &cfg.replacements) {
        match seg {
            Segment::Sentinel(tok) => tokens.push(tok.to_string()),
            Segment::Text(t) => {
                let t = if cfg.lowercase { t.to_lowercase() } else { t.to_string() };
                let t: String = if cfg.strip_special {
                    t.chars().map(|c| if c.is_alphanumeric() { c } else { ' ' }).collect()
                } else {
                    t
                };
                for w in t.split_whitespace() {
                    if cfg.stopwords.contains(w) {
                        continue;
                    }
                    let stemmed = cfg.stemmer.stem(w);
                    if !stemmed.is_empty() {
                        tokens.push(stemmed);
                    }
                }
            }
        }
    }
    tokens
}

/// Term index with document frequencies; terms are indexed in lexicographic order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    terms: BTreeMap<String, (u32, u32)>,
    n_docs: usize,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn index(&self, term: &str) -> Option<u32> {
        self.terms.get(term).map(|t| t.0)
    }

    pub fn df(&self, term: &str) -> Option<u32> {
        self.terms.get(term).map(|t| t.1)
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.terms.keys().map(String::as_str)
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.df(term).map(|df| (self.n_docs as f64 / df as f64).ln())
    }
}

pub fn fit_vocabulary<S: AsRef<str>>(docs: &[Vec<S>], min_df: usize) -> Result<Vocabulary> {
    if min_df < 1 {
        return Err(Error::invalid("min_df must be at least 1"));
    }
    let mut df: BTreeMap<&str, u32> = BTreeMap::new();
    for doc in docs {
        let unique: HashSet<&str> = doc.iter().map(AsRef::as_ref).collect();
        for t in unique {
            *df.entry(t).or_default() += 1;
        }
    }
    if df.is_empty() {
        return Err(Error::invalid("cannot fit a vocabulary on an all-empty corpus"));
    }
    let terms = df
        .into_iter()
        .filter(|(_, c)| *c as usize >= min_df)
        .enumerate()
        .map(|(i, (t, c))| (t.to_string(), (i as u32, c)))
        .collect();
    Ok(Vocabulary {
        terms,
        n_docs: docs.len(),
    })
}

/// Raw term count times `ln(N/df)`, L2-normalised when nonzero.
pub fn tfidf_vectorize<S: AsRef<str>>(doc: &[S], vocab: &Vocabulary) -> SparseVec {
    let mut counts: BTreeMap<u32, (u32, u32)> = BTreeMap::new();
    for t in doc {
        if let Some(&(idx, df)) = vocab.terms.get(t.as_ref()) {
            counts.entry(idx).or_insert((0, df)).0 += 1;
        }
    }
    let n = vocab.n_docs as f64;
    let (indices, values): (Vec<u32>, Vec<f64>) = counts
        .into_iter()
        .map(|(idx, (tf, df))| (idx, tf as f64 * (n / df as f64).ln()))
        .filter(|(_, w)| *w != 0.0)
        .unzip();
    let mut v = SparseVec::new(indices, values).expect("indices come from an ordered map");
    v.normalize();
    v
}

/// Tokenize every text instance, fit a vocabulary on the whole corpus and
/// replace the text with TF-IDF vectors.
pub fn vectorize_tfidf(
    ds: &MultiLabelDataset,
    cfg: &PipelineConfig,
    min_df: usize,
) -> Result<(Vocabulary, MultiLabelDataset)> {
    let tokens = tokenize_dataset(ds, cfg)?;
    let vocab = fit_vocabulary(&tokens, min_df)?;
    let mut it = tokens.iter();
    let out = ds.map_features(vocab.len(), |_| {
        Ok(Features::Sparse(tfidf_vectorize(it.next().unwrap(), &vocab)))
    })?;
    Ok((vocab, out))
}

/// Encode every text instance as a padded token-id sequence.
pub fn encode_dataset(
    ds: &MultiLabelDataset,
    cfg: &PipelineConfig,
    table: &EmbeddingTable,
) -> Result<MultiLabelDataset> {
    let tokens = tokenize_dataset(ds, cfg)?;
    let mut it = tokens.iter();
    ds.map_features(0, |_| {
        Ok(Features::Sequence(encode_sequence(
            it.next().unwrap(),
            table,
            cfg.max_sequence_length,
        )?))
    })
}

fn tokenize_dataset(ds: &MultiLabelDataset, cfg: &PipelineConfig) -> Result<Vec<Vec<String>>> {
    ds.instances()
        .iter()
        .map(|inst| match &inst.features {
            Features::Text(t) => Ok(tokenize_and_normalize(t, cfg)),
            other => Err(Error::Representation(format!(
                "instance {:?} holds {} features, expected text",
                inst.id,
                other.kind()
            ))),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(text: &str, cfg: &PipelineConfig) -> Vec<String> {
        tokenize_and_normalize(text, cfg)
    }

    #[test]
    fn url_replaced_and_punctuation_stripped() {
        let cfg = PipelineConfig::default();
        assert_eq!(
            toks("Visite http://g1.globo.com hoje!", &cfg),
            ["visite", "[URL]", "hoje"]
        );
    }

    #[test]
    fn currency_number_percent_order() {
        let cfg = PipelineConfig::default().with_stopwords(["ou"]);
        assert_eq!(
            toks("Custa R$ 50, ou 10% off", &cfg),
            ["custa", "[CUR]", "[NUM]", "[PCT]", "off"]
        );
    }

    #[test]
    fn empty_input() {
        assert!(toks("", &PipelineConfig::default()).is_empty());
        assert!(toks("  !!! ", &PipelineConfig::default()).is_empty());
    }

    #[test]
    fn replacement_happens_before_casefold() {
        let t = toks("HTTP://X.COM", &PipelineConfig::default());
        assert_eq!(t, ["[URL]"]);
        let t = toks("escreva para Joao.Silva@Exemplo.com.br.", &PipelineConfig::default());
        assert_eq!(t, ["escreva", "para", "[EMAIL]"]);
    }

    #[test]
    fn url_keeps_trailing_sentence_punctuation_out() {
        let t = toks("veja www.g1.com.br.", &PipelineConfig::default());
        assert_eq!(t, ["veja", "[URL]"]);
    }

    #[test]
    fn numbers_inside_words_are_kept() {
        let t = toks("g1 2017 3,5", &PipelineConfig::default());
        assert_eq!(t, ["g1", "[NUM]", "[NUM]"]);
    }

    #[test]
    fn sentinels_cannot_come_from_text() {
        let cfg = PipelineConfig::raw_tokens(10);
        assert_eq!(toks("[URL] texto", &cfg), ["url", "texto"]);
    }

    #[test]
    fn vocabulary_fit() {
        let docs = vec![vec!["a", "b"], vec!["b", "c"]];
        let v = fit_vocabulary(&docs, 1).unwrap();
        assert_eq!(v.terms().collect::<Vec<_>>(), ["a", "b", "c"]);
        assert_eq!(v.df("b"), Some(2));
        assert_eq!(v.df("a"), Some(1));
        assert_eq!(v.n_docs(), 2);
        assert_eq!(v.index("c"), Some(2));

        let v = fit_vocabulary(&docs, 2).unwrap();
        assert_eq!(v.terms().collect::<Vec<_>>(), ["b"]);
        assert_eq!(v.index("b"), Some(0));

        let docs: Vec<Vec<&str>> = vec![vec![]; 3];
        assert!(fit_vocabulary(&docs, 1).is_err());
        assert!(fit_vocabulary(&[vec!["a"]], 0).is_err());
    }

    #[test]
    fn ubiquitous_term_has_zero_idf() {
        let docs: Vec<Vec<&str>> = (0..1000).map(|_| vec!["the"]).collect();
        let v = fit_vocabulary(&docs, 1).unwrap();
        assert_eq!(v.df("the"), Some(1000));
        assert_eq!(v.idf("the"), Some(0.0));
        assert!(tfidf_vectorize(&["the", "the"], &v).is_empty());
    }

    #[test]
    fn tfidf_single_term_normalizes_to_one() {
        let docs = vec![vec!["a", "b"], vec!["c", "a"]];
        let v = fit_vocabulary(&docs, 1).unwrap();
        // raw weight 2 ln 2 = 1.3863 before normalisation
        let raw = 2.0 * (2.0f64).ln();
        assert!((raw - 1.3863).abs() < 1e-4);
        let x = tfidf_vectorize(&["b", "b"], &v);
        assert_eq!(x.indices(), &[v.index("b").unwrap()]);
        assert!((x.values()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tfidf_ignores_unknown_terms() {
        let v = fit_vocabulary(&[vec!["a"], vec!["b"]], 1).unwrap();
        assert!(tfidf_vectorize(&["zz", "yy"], &v).is_empty());
    }

    #[test]
    fn tfidf_two_terms_by_hand() {
        let docs = vec![vec!["a", "b"], vec!["b"], vec!["c"]];
        let v = fit_vocabulary(&docs, 1).unwrap();
        let x = tfidf_vectorize(&["a", "b", "b"], &v);
        let wa = (3.0f64).ln();
        let wb = 2.0 * (1.5f64).ln();
        let n = (wa * wa + wb * wb).sqrt();
        assert!((x.get(0) - wa / n).abs() < 1e-12);
        assert!((x.get(1) - wb / n).abs() < 1e-12);
    }
}
