use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CONTINUATION_PREFIX, SPECIAL_TOKENS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub u32);

impl TokenId {
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn is_special(self) -> bool {
        (self.0 as usize) < SPECIAL_TOKENS.len()
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Ordered WordPiece token inventory; line number in the vocab file is the id.
#[derive(Clone, PartialEq, Eq)]
pub struct Vocabulary {
    entries: Vec<String>,
    index: HashMap<String, TokenId>,
    /// Longest entry in characters, continuation prefix excluded.
    max_piece_chars: usize,
}

impl fmt::Debug for Vocabulary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Vocabulary")
            .field("size", &self.entries.len())
            .field("max_piece_chars", &self.max_piece_chars)
            .finish()
    }
}

impl Vocabulary {
    /// Build from a complete entry list whose first five entries are the
    /// special tokens in order.
    pub fn from_entries(entries: Vec<String>) -> Result<Self> {
        for (i, special) in SPECIAL_TOKENS.iter().enumerate() {
            match entries.get(i) {
                Some(e) if e == special => {}
                Some(e) => {
                    return Err(Error::InvalidVocab(format!(
                        "line {} must be {special}, found '{e}'",
                        i + 1
                    )))
                }
                None => return Err(Error::InvalidVocab(format!("missing special token {special}"))),
            }
        }
        let mut index = HashMap::with_capacity(entries.len());
        let mut max_piece_chars = 1;
        for (i, e) in entries.iter().enumerate() {
            if e.is_empty() || e.chars().any(char::is_whitespace) {
                return Err(Error::InvalidVocab(format!(
                    "line {}: empty or whitespace token",
                    i + 1
                )));
            }
            if index.insert(e.clone(), TokenId(i as u32)).is_some() {
                return Err(Error::InvalidVocab(format!("line {}: duplicate token '{e}'", i + 1)));
            }
            if i >= SPECIAL_TOKENS.len() {
                let piece = e.strip_prefix(CONTINUATION_PREFIX).unwrap_or(e);
                max_piece_chars = max_piece_chars.max(piece.chars().count());
            }
        }
        Ok(Vocabulary {
            entries,
            index,
            max_piece_chars,
        })
    }

    /// Specials followed by `tokens`.
    pub fn with_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let entries = SPECIAL_TOKENS
            .iter()
            .map(|s| s.to_string())
            .chain(tokens.into_iter().map(Into::into))
            .collect();
        Self::from_entries(entries)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn id_of(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.entries.get(id.index()).map(String::as_str)
    }

    pub fn max_piece_chars(&self) -> usize {
        self.max_piece_chars
    }

    pub fn write_to<W: Write>(&self, out: W) -> Result<()> {
        let mut out = BufWriter::new(out);
        for e in &self.entries {
            out.write_all(e.as_bytes())?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(input: R) -> Result<Self> {
        let mut entries = Vec::new();
        for line in BufReader::new(input).lines() {
            let line = line?;
            entries.push(line.strip_suffix('\r').unwrap_or(&line).to_string());
        }
        Self::from_entries(entries)
    }
}

pub fn save_vocab(vocab: &Vocabulary, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io_at(path, e))?;
    vocab.write_to(file)
}

pub fn load_vocab(path: &Path) -> Result<Vocabulary> {
    let file = File::open(path).map_err(|e| Error::io_at(path, e))?;
    Vocabulary::read_from(file)
}
