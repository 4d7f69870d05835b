//! BERT-style basic tokenization followed by greedy longest-match WordPiece.

use unicode_normalization::UnicodeNormalization;

use super::vocab::Vocab;

const MAX_WORD_CHARS: usize = 100;

fn is_punctuation(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

/// Whitespace and punctuation split; with `lowercase`, also lowercases and
/// strips combining accents (the uncased BERT convention).
pub fn basic_tokenize(text: &str, lowercase: bool) -> Vec<String> {
    let cleaned: String = text.chars().filter(|c| !(c.is_control() && !c.is_whitespace()) && *c != '\u{fffd}').collect();
    let cleaned = if lowercase {
        cleaned.to_lowercase().nfd().filter(|c| !unicode_normalization::char::is_combining_mark(*c)).collect::<String>()
    } else {
        cleaned
    };
    let mut out = Vec::new();
    for word in cleaned.split_whitespace() {
        let mut current = String::new();
        for c in word.chars() {
            if is_punctuation(c) {
                if !current.is_empty() {
                    out.push(std::mem::take(&mut current));
                }
                out.push(c.to_string());
            } else {
                current.push(c);
            }
        }
        if !current.is_empty() {
            out.push(current);
        }
    }
    out
}

/// Splits one word into vocabulary pieces, or the unknown token when no
/// full segmentation exists.
pub fn wordpiece(word: &str, vocab: &Vocab, unk: u32, out: &mut Vec<u32>) {
    let chars: Vec<char> = word.chars().collect();
    if chars.len() > MAX_WORD_CHARS {
        out.push(unk);
        return;
    }
    let mark = out.len();
    let mut start = 0;
    while start < chars.len() {
        let mut end = chars.len();
        let mut found = None;
        while start < end {
            let piece: String = chars[start..end].iter().collect();
            let candidate = if start > 0 { format!("##{piece}") } else { piece };
            if let Some(id) = vocab.id(&candidate) {
                found = Some(id);
                break;
            }
            end -= 1;
        }
        match found {
            Some(id) => {
                out.push(id);
                start = end;
            }
            None => {
                out.truncate(mark);
                out.push(unk);
                return;
            }
        }
    }
}

pub fn tokenize_ids(text: &str, vocab: &Vocab, unk: u32, lowercase: bool) -> Vec<u32> {
    let mut ids = Vec::new();
    for word in basic_tokenize(text, lowercase) {
        wordpiece(&word, vocab, unk, &mut ids);
    }
    ids
}
