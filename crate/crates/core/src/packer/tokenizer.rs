//! Reference word/punctuation tokenizer.
//!
//! Text is whitespace-normalized, then split into pieces that are either a
//! run of alphanumeric characters or a single other character, each with
//! its preceding space folded in (`" world"`, `","`). Concatenating the
//! pieces reproduces the normalized text exactly.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

pub type TokenId = u32;

pub const PAD_ID: TokenId = 0;
pub const IMAGE_ID: TokenId = 1;
pub const UNK_ID: TokenId = 2;
/// First id handed to vocabulary pieces.
pub const FIRST_PIECE_ID: TokenId = 3;

/// Pluggable text tokenizer.
pub trait Tokenizer {
    fn encode(&self, text: &str) -> Vec<TokenId>;
    fn decode(&self, ids: &[TokenId]) -> String;
}

/// Split whitespace-normalized `text` into pieces.
pub fn pieces(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for (wi, word) in text.split_whitespace().enumerate() {
        let mut pending_space = wi > 0;
        let mut chars = word.char_indices().peekable();
        while let Some((start, c)) = chars.next() {
            let mut end = start + c.len_utf8();
            if c.is_alphanumeric() {
                while let Some(&(i, n)) = chars.peek() {
                    if !n.is_alphanumeric() {
                        break;
                    }
                    end = i + n.len_utf8();
                    chars.next();
                }
            }
            let mut piece = String::with_capacity(end - start + 1);
            if pending_space {
                piece.push(' ');
                pending_space = false;
            }
            piece.push_str(&word[start..end]);
            out.push(piece);
        }
    }
    out
}

/// Vocabulary with ids assigned in sorted piece order, so the same corpus
/// always yields the same ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct WordTokenizer {
    pieces: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl From<Vec<String>> for WordTokenizer {
    fn from(pieces: Vec<String>) -> Self {
        Self::from_pieces(pieces)
    }
}

impl From<WordTokenizer> for Vec<String> {
    fn from(tok: WordTokenizer) -> Self {
        tok.pieces
    }
}

impl WordTokenizer {
    pub fn build<'a, I>(texts: I) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let set: BTreeSet<String> = texts.into_iter().flat_map(pieces).collect();
        Self::from_pieces(set.into_iter().collect())
    }

    pub fn from_pieces(pieces: Vec<String>) -> Self {
        let index = pieces
            .iter()
            .enumerate()
            .map(|(i, p)| (p.clone(), FIRST_PIECE_ID + i as TokenId))
            .collect();
        Self { pieces, index }
    }

    pub fn pieces(&self) -> &[String] {
        &self.pieces
    }

    pub fn vocab_size(&self) -> usize {
        self.pieces.len() + FIRST_PIECE_ID as usize
    }
}

impl Tokenizer for WordTokenizer {
    fn encode(&self, text: &str) -> Vec<TokenId> {
        pieces(text)
            .into_iter()
            .map(|p| self.index.get(&p).copied().unwrap_or(UNK_ID))
            .collect()
    }

    fn decode(&self, ids: &[TokenId]) -> String {
        let mut out = String::new();
        for &id in ids {
            match id {
                PAD_ID => {}
                IMAGE_ID => out.push_str("<image>"),
                UNK_ID => out.push_str("<unk>"),
                _ => match self.pieces.get((id - FIRST_PIECE_ID) as usize) {
                    Some(p) => out.push_str(p),
                    None => out.push_str("<unk>"),
                },
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn piece_split() {
        assert_eq!(pieces("Hello, world!"), vec!["Hello", ",", " world", "!"]);
        assert_eq!(pieces("  a  b "), vec!["a", " b"]);
        assert!(pieces("").is_empty());
    }

    #[test]
    fn encode_examples() {
        let tok = WordTokenizer::build(["a b", "hello"]);
        assert!(tok.encode("").is_empty());
        assert_eq!(tok.encode("a b"), tok.encode("a  b"));
        assert_eq!(tok.encode("a b"), tok.encode("a b"));
        assert_eq!(tok.encode("zzz"), vec![UNK_ID]);
        // Sorted: " b" < "a" < "hello".
        assert_eq!(tok.encode("a b"), vec![4, 3]);
        let json = serde_json::to_string(&tok).unwrap();
        assert_eq!(json, r#"[" b","a","hello"]"#);
        assert_eq!(serde_json::from_str::<WordTokenizer>(&json).unwrap(), tok);
    }

    proptest! {
        #[test]
        fn decode_inverts_encode_up_to_whitespace(text in "[a-z0-9 ,.!?\n\t]{0,60}") {
            let tok = WordTokenizer::build([text.as_str()]);
            let normalized = text.split_whitespace().collect::<Vec<_>>().join(" ");
            prop_assert_eq!(tok.decode(&tok.encode(&text)), normalized);
        }
    }
}
