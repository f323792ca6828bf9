use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stemmer {
    #[default]
    Identity,
    Portuguese,
}

impl Stemmer {
    pub fn stem(&self, word: &str) -> String {
        match self {
            Stemmer::Identity => word.to_string(),
            Stemmer::Portuguese => PortugueseStemmer.stem(word),
        }
    }
}

/// `(suffix, minimum stem length left behind, replacement)`
type Rule = (&'static str, usize, &'static str);

const PLURAL: &[Rule] = &[
    ("ões", 3, "ão"),
    ("ães", 1, "ão"),
    ("ais", 1, "al"),
    ("éis", 2, "el"),
    ("eis", 2, "el"),
    ("óis", 2, "ol"),
    ("les", 3, "l"),
    ("res", 3, "r"),
    ("ns", 1, "m"),
    ("is", 2, "il"),
    ("s", 2, ""),
];

const FEMININE: &[Rule] = &[
    ("inha", 3, "inho"),
    ("eira", 3, "eiro"),
    ("íaca", 3, "íaco"),
    ("ona", 3, "ão"),
    ("ora", 3, "or"),
    ("esa", 3, "ês"),
    ("osa", 3, "oso"),
    ("ica", 3, "ico"),
    ("ada", 2, "ado"),
    ("ida", 3, "ido"),
    ("ída", 3, "ido"),
    ("ima", 3, "imo"),
    ("iva", 3, "ivo"),
    ("na", 4, "no"),
];

const DEGREE: &[Rule] = &[
    ("íssimo", 3, ""),
    ("érrimo", 4, ""),
    ("zinho", 2, ""),
    ("inho", 3, ""),
    ("zão", 2, ""),
    ("ão", 3, ""),
];

const NOUN: &[Rule] = &[
    ("amentos", 3, ""),
    ("imentos", 3, ""),
    ("amento", 3, ""),
    ("imento", 3, ""),
    ("mente", 4, ""),
    ("idade", 4, ""),
    ("ência", 3, ""),
    ("ância", 3, ""),
    ("ação", 3, ""),
    ("ador", 3, ""),
    ("ável", 2, ""),
    ("ível", 2, ""),
    ("ismo", 3, ""),
    ("ista", 4, ""),
    ("eza", 3, ""),
];

const VERB: &[Rule] = &[
    ("aríamos", 2, ""),
    ("eríamos", 3, ""),
    ("ávamos", 2, ""),
    ("aremos", 2, ""),
    ("eremos", 2, ""),
    ("iremos", 3, ""),
    ("aram", 2, ""),
    ("eram", 3, ""),
    ("iram", 3, ""),
    ("avam", 2, ""),
    ("ando", 2, ""),
    ("endo", 3, ""),
    ("indo", 3, ""),
    ("ava", 2, ""),
    ("ará", 2, ""),
    ("erá", 3, ""),
    ("irá", 3, ""),
    ("ado", 2, ""),
    ("ido", 3, ""),
    ("ar", 2, ""),
    ("er", 2, ""),
    ("ir", 3, ""),
    ("ou", 3, ""),
    ("am", 2, ""),
    ("em", 2, ""),
    ("ei", 3, ""),
];

const VOWELS: &[Rule] = &[("a", 3, ""), ("e", 3, ""), ("o", 3, "")];

/// Suffix-stripping stemmer for Portuguese covering plural, feminine,
/// degree (diminutive/augmentative/superlative), nominal and verbal suffixes,
/// followed by final-vowel and accent removal.
#[derive(Debug, Clone, Copy, Default)]
pub struct PortugueseStemmer;

impl PortugueseStemmer {
    pub fn stem(&self, word: &str) -> String {
        if word.chars().count() < 3 || !word.chars().all(char::is_alphabetic) {
            return word.to_string();
        }
        let mut w = word.to_string();
        if w.ends_with('s') {
            apply(&mut w, PLURAL);
        }
        if w.ends_with('a') {
            apply(&mut w, FEMININE);
        }
        apply(&mut w, DEGREE);
        if !apply(&mut w, NOUN) {
            apply(&mut w, VERB);
        }
        apply(&mut w, VOWELS);
        strip_accents(&w)
    }
}

/// Apply the first rule whose suffix matches and leaves a long enough stem.
fn apply(word: &mut String, rules: &[Rule]) -> bool {
    for &(suffix, min_stem, replacement) in rules {
        if let Some(stem) = word.strip_suffix(suffix) {
            if stem.chars().count() >= min_stem {
                let mut out = stem.to_string();
                out.push_str(replacement);
                *word = out;
                return true;
            }
        }
    }
    false
}

fn strip_accents(word: &str) -> String {
    word.chars()
        .map(|c| match c {
            'á' | 'à' | 'â' | 'ã' => 'a',
            'é' | 'ê' => 'e',
            'í' => 'i',
            'ó' | 'ô' | 'õ' => 'o',
            'ú' | 'ü' => 'u',
            'ç' => 'c',
            other => other,
        })
        .collect()
}
