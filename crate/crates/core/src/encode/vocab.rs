use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use crate::hashing::sha256_hex;

use super::EncodeError;

/// Ordered token vocabulary in BERT `vocab.txt` layout: id = line number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, EncodeError> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if index.insert(tok.clone(), i as u32).is_some() {
                return Err(EncodeError::Vocab(format!("duplicate token `{tok}`")));
            }
        }
        Ok(Vocab { tokens, index })
    }

    pub fn from_vocab_txt(text: &str) -> Result<Self, EncodeError> {
        Self::from_tokens(text.lines().map(|l| l.trim_end_matches('\r').to_string()).collect())
    }

    pub fn load(path: &Path) -> Result<Self, EncodeError> {
        let text = fs::read_to_string(path).map_err(|e| EncodeError::Vocab(format!("{}: {e}", path.display())))?;
        Self::from_vocab_txt(&text)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        fs::write(path, self.to_vocab_txt())
    }

    pub fn to_vocab_txt(&self) -> String {
        let mut out = String::new();
        for tok in &self.tokens {
            out.push_str(tok);
            out.push('\n');
        }
        out
    }

    /// Checkpoint-pinned identity of this vocabulary.
    pub fn vocab_ref(&self) -> String {
        format!("sha256:{}", sha256_hex(self.to_vocab_txt()))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Vocabulary for freshly initialized models: `specials`, then every
    /// character seen (bare and `##`-prefixed), then the most frequent
    /// words up to `max_size`. Ties break lexicographically.
    pub fn build<'a>(
        specials: &[&str],
        texts: impl IntoIterator<Item = &'a str>,
        max_size: usize,
        lowercase: bool,
    ) -> Result<Self, EncodeError> {
        let mut word_freq: BTreeMap<String, usize> = BTreeMap::new();
        let mut chars: BTreeSet<char> = BTreeSet::new();
        for text in texts {
            for word in super::wordpiece::basic_tokenize(text, lowercase) {
                chars.extend(word.chars());
                *word_freq.entry(word).or_insert(0) += 1;
            }
        }
        let mut tokens: Vec<String> = specials.iter().map(|s| s.to_string()).collect();
        for c in &chars {
            tokens.push(c.to_string());
        }
        for c in &chars {
            tokens.push(format!("##{c}"));
        }
        let mut words: Vec<(String, usize)> = word_freq.into_iter().filter(|(w, _)| w.chars().count() > 1).collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        for (word, _) in words {
            if tokens.len() >= max_size {
                break;
            }
            tokens.push(word);
        }
        let mut seen = BTreeSet::new();
        tokens.retain(|t| seen.insert(t.clone()));
        Self::from_tokens(tokens)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn build_is_deterministic_and_covers_chars() {
        let texts = ["app crashes", "app freezes", "love app"];
        let a = Vocab::build(&["[PAD]", "[UNK]"], texts, 100, true).unwrap();
        let b = Vocab::build(&["[PAD]", "[UNK]"], texts, 100, true).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.vocab_ref(), b.vocab_ref());
        assert_eq!(a.id("[PAD]"), Some(0));
        assert!(a.id("app").is_some());
        assert!(a.id("##z").is_some());
        assert!(a.id("c").is_some());
    }

    #[test]
    fn vocab_txt_round_trip() {
        let v = Vocab::from_tokens(vec!["[PAD]".into(), "a".into(), "##b".into()]).unwrap();
        let back = Vocab::from_vocab_txt(&v.to_vocab_txt()).unwrap();
        assert_eq!(v, back);
        assert!(Vocab::from_tokens(vec!["a".into(), "a".into()]).is_err());
    }
}
