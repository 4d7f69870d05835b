//! Bundled, versioned stopword lists. Lists are compiled into the binary and
//! never fetched at runtime.

use std::collections::HashSet;
use std::sync::OnceLock;

use crate::hashing::sha256_hex;

/// Id of the default list: the NLTK English snapshot (179 entries).
pub const DEFAULT_STOPWORD_LIST: &str = "nltk-english-179";

const NLTK_ENGLISH: &str = include_str!("../../data/stopwords-nltk-english.txt");

#[derive(Debug)]
pub struct StopwordList {
    pub id: &'static str,
    /// SHA-256 of the list file; recorded in run metadata.
    pub version: String,
    words: HashSet<&'static str>,
}

impl StopwordList {
    fn parse(id: &'static str, source: &'static str) -> Self {
        StopwordList { id, version: sha256_hex(source), words: source.lines().map(str::trim).filter(|l| !l.is_empty()).collect() }
    }

    pub fn contains(&self, token: &str) -> bool {
        self.words.contains(token)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.words.iter().copied()
    }
}

/// Resolves a bundled list by id.
pub fn stopword_list(id: &str) -> Option<&'static StopwordList> {
    static NLTK: OnceLock<StopwordList> = OnceLock::new();
    match id {
        DEFAULT_STOPWORD_LIST => Some(NLTK.get_or_init(|| StopwordList::parse(DEFAULT_STOPWORD_LIST, NLTK_ENGLISH))),
        _ => None,
    }
}

pub fn available_lists() -> &'static [&'static str] {
    &[DEFAULT_STOPWORD_LIST]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinned_snapshot() {
        let list = stopword_list(DEFAULT_STOPWORD_LIST).unwrap();
        assert_eq!(list.len(), 179);
        assert_eq!(list.version, "019f104ba2ed07436d05f9cdd3383034ad66014edc27fc651f837e1a038b6451");
        for w in ["the", "a", "an", "of", "to", "when", "i", "it", "is"] {
            assert!(list.contains(w), "{w}");
        }
        assert!(!list.contains("app"));
    }

    #[test]
    fn unknown_list() {
        assert!(stopword_list("klingon").is_none());
    }
}
