//! Dataset ingestion, tokenization, vocabulary construction and seeded
//! low-resource subsampling.
//!
//! The JSONL format is one object per line with string fields `text` and
//! `label`. Classes are numbered in first-appearance order. Token ids are
//! assigned by a [`Vocab`] with a reserved unknown word at id 0.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The reserved unknown-word token.
pub const UNK_TOKEN: &str = "<unk>";

/// Lowercases, splits on whitespace, and peels leading/trailing punctuation
/// characters into their own tokens. Interior punctuation (as in "it's")
/// stays attached.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.to_lowercase().split_whitespace() {
        let chars: Vec<char> = chunk.chars().collect();
        let mut start = 0;
        let mut end = chars.len();
        let mut leading = Vec::new();
        let mut trailing = Vec::new();
        while start < end && !chars[start].is_alphanumeric() {
            leading.push(chars[start].to_string());
            start += 1;
        }
        while end > start && !chars[end - 1].is_alphanumeric() {
            trailing.push(chars[end - 1].to_string());
            end -= 1;
        }
        trailing.reverse();
        out.append(&mut leading);
        if start < end {
            out.push(chars[start..end].iter().collect());
        }
        out.append(&mut trailing);
    }
    out
}

/// Bijective token/id mapping with a reserved unknown word.
///
/// Id 0 is always [`UNK_TOKEN`]; remaining ids follow descending corpus
/// frequency with a lexicographic tie-break, so construction is deterministic.
#[derive(Debug, Clone)]
pub struct Vocab {
    token_to_id: HashMap<String, usize>,
    id_to_token: Vec<String>,
    unk_id: usize,
}

impl Vocab {
    /// Builds the vocabulary of all tokens with frequency >= `min_count`,
    /// plus the unknown word.
    pub fn build(datasets: &[&Dataset], min_count: usize) -> Result<Self> {
        let total: usize = datasets.iter().map(|d| d.examples.len()).sum();
        if total == 0 {
            return Err(Error::EmptyDataset);
        }
        let mut freq: HashMap<&str, usize> = HashMap::new();
        for ds in datasets {
            for ex in &ds.examples {
                for w in &ex.words {
                    *freq.entry(w.as_str()).or_insert(0) += 1;
                }
            }
        }
        let mut entries: Vec<(&str, usize)> = freq
            .into_iter()
            .filter(|(_, c)| *c >= min_count.max(1))
            .collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));

        let mut id_to_token = Vec::with_capacity(entries.len() + 1);
        id_to_token.push(UNK_TOKEN.to_string());
        id_to_token.extend(entries.into_iter().map(|(t, _)| t.to_string()));
        Ok(Self::from_tokens(id_to_token, 0))
    }

    fn from_tokens(id_to_token: Vec<String>, unk_id: usize) -> Self {
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self {
            token_to_id,
            id_to_token,
            unk_id,
        }
    }

    /// Token id, or the unknown id for out-of-vocabulary tokens.
    pub fn id(&self, token: &str) -> usize {
        *self.token_to_id.get(token).unwrap_or(&self.unk_id)
    }

    pub fn token(&self, id: usize) -> Result<&str> {
        self.id_to_token
            .get(id)
            .map(String::as_str)
            .ok_or(Error::Lookup {
                id,
                size: self.id_to_token.len(),
            })
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }

    pub fn unk_id(&self) -> usize {
        self.unk_id
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    tokens: Vec<String>,
    unk_id: usize,
}

impl Serialize for Vocab {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        VocabFile {
            tokens: self.id_to_token.clone(),
            unk_id: self.unk_id,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vocab {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = VocabFile::deserialize(d)?;
        if raw.tokens.get(raw.unk_id).map(String::as_str) != Some(UNK_TOKEN) {
            return Err(serde::de::Error::custom(format!(
                "vocabulary has no {UNK_TOKEN:?} at id {}",
                raw.unk_id
            )));
        }
        Ok(Vocab::from_tokens(raw.tokens, raw.unk_id))
    }
}

/// One labeled text: the raw string, its word tokens, and (after encoding
/// against a vocabulary) the parallel token-id sequence.
#[derive(Debug, Clone)]
pub struct Example {
    pub words: Vec<String>,
    pub tokens: Vec<usize>,
    pub label: usize,
    pub raw_text: String,
}

impl Example {
    /// Tokenizes a raw text. Fails if tokenization yields no words.
    pub fn from_text(text: &str, label: usize) -> Result<Self> {
        let words = tokenize(text);
        if words.is_empty() {
            return Err(Error::Contract(format!(
                "text {text:?} tokenizes to zero words"
            )));
        }
        Ok(Self {
            words,
            tokens: Vec::new(),
            label,
            raw_text: text.to_string(),
        })
    }

    /// Number of words, `n_i`.
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

#[derive(Deserialize)]
struct JsonlLine {
    text: String,
    label: String,
}

/// A labeled corpus. `k` is set on low-resource splits, where every class
/// appears exactly `k` times.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub examples: Vec<Example>,
    pub classes: Vec<String>,
    pub k: Option<usize>,
}

impl Dataset {
    /// Loads a JSONL file of `{"text": ..., "label": ...}` objects.
    ///
    /// Classes are numbered in first-appearance order. Blank lines are
    /// skipped; any malformed line fails with its 1-based line number.
    pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Self> {
        let content = fs::read_to_string(path)?;
        let mut classes: Vec<String> = Vec::new();
        let mut examples = Vec::new();
        for (idx, line) in content.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: JsonlLine = serde_json::from_str(line).map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            let label = match classes.iter().position(|c| *c == parsed.label) {
                Some(i) => i,
                None => {
                    classes.push(parsed.label.clone());
                    classes.len() - 1
                }
            };
            let ex = Example::from_text(&parsed.text, label).map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            examples.push(ex);
        }
        if examples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(Self {
            examples,
            classes,
            k: None,
        })
    }

    /// Fills every example's token-id sequence from `vocab`; out-of-vocabulary
    /// words map to the unknown id.
    pub fn encode(&mut self, vocab: &Vocab) {
        for ex in &mut self.examples {
            ex.tokens = ex.words.iter().map(|w| vocab.id(w)).collect();
        }
    }

    /// Relabels this dataset against a fixed class list (e.g. the classes a
    /// frozen model was trained with). Unknown labels are an error.
    pub fn with_classes(&self, classes: &[String]) -> Result<Self> {
        let mut out = self.clone();
        for ex in &mut out.examples {
            let name = &self.classes[ex.label];
            ex.label = classes
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::MissingClass(name.clone()))?;
        }
        out.classes = classes.to_vec();
        Ok(out)
    }

    /// Draws exactly `k` examples per class without replacement,
    /// deterministically in `seed`.
    pub fn sample_low_resource(&self, k: usize, seed: u64) -> Result<Self> {
        Ok(self.split_low_resource(k, seed)?.0)
    }

    /// Like [`Self::sample_low_resource`], but also returns the complement
    /// (every example not selected), preserving corpus order.
    pub fn split_low_resource(&self, k: usize, seed: u64) -> Result<(Self, Self)> {
        let mut rng = StdRng::seed_from_u64(seed);
        let mut selected: Vec<usize> = Vec::with_capacity(k * self.classes.len());
        for (class_id, class) in self.classes.iter().enumerate() {
            let mut members: Vec<usize> = (0..self.examples.len())
                .filter(|&i| self.examples[i].label == class_id)
                .collect();
            if members.len() < k {
                return Err(Error::InsufficientClass {
                    class: class.clone(),
                    available: members.len(),
                    needed: k,
                });
            }
            members.shuffle(&mut rng);
            selected.extend_from_slice(&members[..k]);
        }
        let chosen: std::collections::HashSet<usize> = selected.iter().copied().collect();
        let low = Self {
            examples: selected.iter().map(|&i| self.examples[i].clone()).collect(),
            classes: self.classes.clone(),
            k: Some(k),
        };
        let rest = Self {
            examples: (0..self.examples.len())
                .filter(|i| !chosen.contains(i))
                .map(|i| self.examples[i].clone())
                .collect(),
            classes: self.classes.clone(),
            k: None,
        };
        Ok((low, rest))
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    /// Per-class example counts, indexed by class id.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.classes.len()];
        for ex in &self.examples {
            counts[ex.label] += 1;
        }
        counts
    }
}

/// Seeded synthetic corpora for experiments and tests.
pub mod synthetic {
    use super::{Dataset, Example};
    use rand::rngs::StdRng;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};

    const NEG_WORDS: &[&str] = &[
        "bad", "awful", "dull", "tedious", "clumsy", "dreary", "grating", "hollow",
    ];
    const POS_WORDS: &[&str] = &[
        "good",
        "great",
        "lovely",
        "excellent",
        "superb",
        "charming",
        "delightful",
        "uplifting",
    ];
    const NEUTRAL_WORDS: &[&str] = &[
        "the", "a", "movie", "film", "plot", "acting", "story", "it", "is", "with",
    ];

    /// Generates `per_class` sentences for each of the labels "neg" and
    /// "pos". Every sentence mixes neutral filler with 2-3 words drawn only
    /// from its own class list, so counting class words separates the corpus
    /// linearly. The i-th sentence of a class always contains class word
    /// `i % 8`: any split of at least 8 examples per class covers the whole
    /// class vocabulary, keeping splits separable under the training
    /// vocabulary.
    pub fn separable(per_class: usize, seed: u64) -> Vec<(String, String)> {
        let mut rng = StdRng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(per_class * 2);
        for (label, class_words) in [("neg", NEG_WORDS), ("pos", POS_WORDS)] {
            for i in 0..per_class {
                let n_neutral = rng.gen_range(1..=2);
                let n_extra = rng.gen_range(1..=2);
                let mut words: Vec<&str> = (0..n_neutral)
                    .map(|_| *NEUTRAL_WORDS.choose(&mut rng).expect("non-empty"))
                    .collect();
                words.push(class_words[i % class_words.len()]);
                words.extend(
                    (0..n_extra).map(|_| *class_words.choose(&mut rng).expect("non-empty")),
                );
                words.shuffle(&mut rng);
                out.push((words.join(" "), label.to_string()));
            }
        }
        out
    }

    /// [`separable`] packaged as a [`Dataset`] with classes `["neg", "pos"]`.
    pub fn separable_dataset(per_class: usize, seed: u64) -> Dataset {
        let pairs = separable(per_class, seed);
        let classes = vec!["neg".to_string(), "pos".to_string()];
        let examples = pairs
            .iter()
            .map(|(text, label)| {
                let id = classes.iter().position(|c| c == label).expect("known");
                Example::from_text(text, id).expect("non-empty synthetic text")
            })
            .collect();
        Dataset {
            examples,
            classes,
            k: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn write_jsonl(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for line in lines {
            writeln!(f, "{line}").unwrap();
        }
        f
    }

    #[test]
    fn tokenize_splits_edge_punctuation() {
        // Hand-derived from the stated rule: lowercase, whitespace split,
        // leading/trailing punctuation peeled; "it's" keeps its apostrophe.
        assert_eq!(
            tokenize("It's a good movie."),
            vec!["it's", "a", "good", "movie", "."]
        );
    }

    #[test]
    fn tokenize_empty_and_whitespace() {
        assert_eq!(tokenize(""), Vec::<String>::new());
        assert_eq!(tokenize("  HELLO  "), vec!["hello"]);
    }

    #[test]
    fn load_single_line() {
        let f = write_jsonl(&[r#"{"text":"good movie","label":"pos"}"#]);
        let ds = Dataset::load_jsonl(f.path()).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.classes, vec!["pos"]);
        assert_eq!(ds.examples[0].len(), 2);
    }

    #[test]
    fn load_shared_label() {
        let f = write_jsonl(&[
            r#"{"text":"good","label":"pos"}"#,
            r#"{"text":"great","label":"pos"}"#,
        ]);
        let ds = Dataset::load_jsonl(f.path()).unwrap();
        assert_eq!(ds.classes, vec!["pos"]);
        assert_eq!(ds.len(), 2);
    }

    #[test]
    fn load_missing_label_reports_line() {
        let f = write_jsonl(&[
            r#"{"text":"fine","label":"pos"}"#,
            r#"{"text":"broken"}"#,
        ]);
        match Dataset::load_jsonl(f.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn load_empty_file() {
        let f = write_jsonl(&[]);
        assert!(matches!(
            Dataset::load_jsonl(f.path()),
            Err(Error::EmptyDataset)
        ));
    }

    fn dataset_from_texts(texts: &[&str]) -> Dataset {
        Dataset {
            examples: texts
                .iter()
                .map(|t| Example::from_text(t, 0).unwrap())
                .collect(),
            classes: vec!["only".into()],
            k: None,
        }
    }

    #[test]
    fn vocab_min_count_filters() {
        let ds = dataset_from_texts(&["a a a b"]);
        let v = Vocab::build(&[&ds], 2).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v.token(0).unwrap(), UNK_TOKEN);
        assert_eq!(v.token(1).unwrap(), "a");
        assert_eq!(v.id("b"), v.unk_id());
    }

    #[test]
    fn vocab_min_count_one_keeps_all() {
        let ds = dataset_from_texts(&["a b"]);
        let v = Vocab::build(&[&ds], 1).unwrap();
        assert_eq!(v.len(), 3);
    }

    #[test]
    fn vocab_lexicographic_tie_break() {
        let ds = dataset_from_texts(&["b a b a"]);
        let v = Vocab::build(&[&ds], 1).unwrap();
        assert_eq!(v.token(1).unwrap(), "a");
        assert_eq!(v.token(2).unwrap(), "b");
    }

    #[test]
    fn sample_forced_selection() {
        let mut ds = dataset_from_texts(&["x y", "z w"]);
        ds.classes = vec!["only".into()];
        let low = ds.sample_low_resource(2, 7).unwrap();
        assert_eq!(low.len(), 2);
        assert_eq!(low.k, Some(2));
    }

    #[test]
    fn sample_is_deterministic() {
        let ds = synthetic::separable_dataset(20, 3);
        let a = ds.sample_low_resource(5, 11).unwrap();
        let b = ds.sample_low_resource(5, 11).unwrap();
        let texts =
            |d: &Dataset| d.examples.iter().map(|e| e.raw_text.clone()).collect::<Vec<_>>();
        assert_eq!(texts(&a), texts(&b));
    }

    #[test]
    fn sample_k10_two_classes_gives_20() {
        let ds = synthetic::separable_dataset(15, 5);
        let low = ds.sample_low_resource(10, 1).unwrap();
        assert_eq!(low.len(), 20);
        assert_eq!(low.class_counts(), vec![10, 10]);
    }

    #[test]
    fn sample_insufficient_class_names_it() {
        let ds = synthetic::separable_dataset(3, 5);
        match ds.sample_low_resource(4, 1) {
            Err(Error::InsufficientClass { class, .. }) => assert_eq!(class, "neg"),
            other => panic!("expected insufficient-class error, got {other:?}"),
        }
    }

    #[test]
    fn split_complement_is_disjoint_and_complete() {
        let ds = synthetic::separable_dataset(10, 9);
        let (low, rest) = ds.split_low_resource(4, 2).unwrap();
        assert_eq!(low.len() + rest.len(), ds.len());
        assert_eq!(low.class_counts(), vec![4, 4]);
    }

    #[test]
    fn with_classes_remaps_and_rejects() {
        let ds = synthetic::separable_dataset(2, 1);
        let flipped = vec!["pos".to_string(), "neg".to_string()];
        let remapped = ds.with_classes(&flipped).unwrap();
        for (a, b) in ds.examples.iter().zip(&remapped.examples) {
            assert_eq!(ds.classes[a.label], flipped[b.label]);
        }
        assert!(matches!(
            ds.with_classes(&["other".to_string()]),
            Err(Error::MissingClass(_))
        ));
    }

    #[test]
    fn vocab_serde_round_trip() {
        let ds = dataset_from_texts(&["a b c a"]);
        let v = Vocab::build(&[&ds], 1).unwrap();
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocab = serde_json::from_str(&json).unwrap();
        assert_eq!(back.len(), v.len());
        assert_eq!(back.id("c"), v.id("c"));
    }

    proptest! {
        // id -> token -> id round-trips for every in-vocabulary token.
        #[test]
        fn vocab_round_trip(texts in proptest::collection::vec("[a-z]{1,6}( [a-z]{1,6}){0,8}", 1..8)) {
            let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
            let ds = dataset_from_texts(&refs);
            let v = Vocab::build(&[&ds], 1).unwrap();
            for id in 0..v.len() {
                let tok = v.token(id).unwrap();
                prop_assert_eq!(v.id(tok), id);
            }
        }

        // Tokenization is idempotent on its own space-joined output.
        #[test]
        fn tokenize_idempotent(text in ".{0,60}") {
            let once = tokenize(&text);
            let twice = tokenize(&once.join(" "));
            prop_assert_eq!(once, twice);
        }

        // Low-resource sampling is deterministic and class-balanced for
        // arbitrary valid (k, seed).
        #[test]
        fn sampling_balanced_and_deterministic(k in 1usize..8, seed in 0u64..1000) {
            let ds = super::synthetic::separable_dataset(8, 42);
            let a = ds.sample_low_resource(k, seed).unwrap();
            let b = ds.sample_low_resource(k, seed).unwrap();
            prop_assert_eq!(a.class_counts(), vec![k, k]);
            let texts = |d: &Dataset| {
                d.examples.iter().map(|e| e.raw_text.clone()).collect::<Vec<_>>()
            };
            prop_assert_eq!(texts(&a), texts(&b));
        }
    }
}
