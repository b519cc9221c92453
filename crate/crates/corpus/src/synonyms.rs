//! Synonym tables: fold alternate surface forms into one class count.

use std::collections::HashMap;
use std::path::Path;

use crate::count::FrequencyTable;
use crate::normalize::normalize_phrase;
use crate::CorpusError;

/// Maps a normalized synonym phrase to its normalized canonical class name.
#[derive(Debug, Default, Clone)]
pub struct SynonymMap {
    to_class: HashMap<String, String>,
}

impl SynonymMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register `synonym` as a surface form of `class`. Both are normalized,
    /// and the class name is implicitly its own surface form. A phrase may
    /// not point at two different classes.
    pub fn insert(&mut self, class: &str, synonym: &str) -> Result<(), CorpusError> {
        let class = normalize_phrase(class);
        let synonym = normalize_phrase(synonym);
        if class.is_empty() || synonym.is_empty() {
            return Err(CorpusError::Invalid(
                "synonym table entries must be non-empty after normalization".into(),
            ));
        }
        self.bind(class.clone(), class.clone())?;
        self.bind(synonym, class)
    }

    fn bind(&mut self, phrase: String, class: String) -> Result<(), CorpusError> {
        match self.to_class.get(&phrase) {
            Some(prev) if *prev != class => Err(CorpusError::SynonymCollision {
                phrase,
                first: prev.clone(),
                second: class,
            }),
            _ => {
                self.to_class.insert(phrase, class);
                Ok(())
            }
        }
    }

    /// Parse a `class<TAB>synonym` file. Blank lines and `#` comments are
    /// skipped. The canonical name is implicitly its own synonym.
    pub fn from_tsv(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|e| CorpusError::Io {
            path: path.display().to_string(),
            offset: 0,
            source: e,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let mut table = Self::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (class, synonym) = line.split_once('\t').ok_or_else(|| {
                CorpusError::Invalid(format!(
                    "synonym line {} is not `class<TAB>synonym`: {line:?}",
                    lineno + 1
                ))
            })?;
            table.insert(class, synonym)?;
        }
        Ok(table)
    }

    pub fn classes(&self) -> Vec<String> {
        let mut cs: Vec<String> = self.to_class.values().cloned().collect();
        cs.sort_unstable();
        cs.dedup();
        cs
    }

    pub fn synonyms_of(&self, class: &str) -> Vec<String> {
        let class = normalize_phrase(class);
        let mut ss: Vec<String> = self
            .to_class
            .iter()
            .filter(|(_, c)| **c == class)
            .map(|(s, _)| s.clone())
            .collect();
        ss.sort_unstable();
        ss
    }
}

/// Per-class frequency: the class's own-phrase count plus the counts of
/// every registered synonym. Absent phrases contribute zero; every class in
/// `class_list` appears in the output even when all its phrases are missing.
pub fn merge_synonyms(
    table: &FrequencyTable,
    synonyms: &SynonymMap,
    class_list: &[String],
) -> HashMap<String, u64> {
    let mut out: HashMap<String, u64> = HashMap::new();
    for class in class_list {
        let class = normalize_phrase(class);
        let mut phrases = synonyms.synonyms_of(&class);
        if !phrases.contains(&class) {
            phrases.push(class.clone());
        }
        let mut total: u64 = 0;
        for p in &phrases {
            total = total.saturating_add(table.get(p));
        }
        out.insert(class, total);
    }
    out
}
