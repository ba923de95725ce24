use serde::{Deserialize, Serialize};

use super::{
    pretokenize, TokenId, Vocabulary, CLS_ID, CONTINUATION_PREFIX, DEFAULT_MAX_WORD_CHARS, SEP_ID, UNK, UNK_ID,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedText {
    pub ids: Vec<TokenId>,
    pub truncated: bool,
}

/// Greedy longest-match-first ids for one word, appended to `out`.
/// Returns false (and appends nothing) if the word cannot be covered.
fn word_piece_ids(word: &str, vocab: &Vocabulary, max_word_chars: usize, out: &mut Vec<TokenId>) -> bool {
    // char boundaries, including the end of the word
    let bounds: Vec<usize> = word
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(word.len()))
        .collect();
    let n_chars = bounds.len() - 1;
    if n_chars == 0 || n_chars > max_word_chars {
        return false;
    }
    let mark = out.len();
    let mut candidate = String::with_capacity(word.len() + CONTINUATION_PREFIX.len());
    let mut start = 0;
    while start < n_chars {
        let longest = (n_chars - start).min(vocab.max_piece_chars());
        let mut found = None;
        for len in (1..=longest).rev() {
            let end = start + len;
            candidate.clear();
            if start > 0 {
                candidate.push_str(CONTINUATION_PREFIX);
            }
            candidate.push_str(&word[bounds[start]..bounds[end]]);
            if let Some(id) = vocab.id_of(&candidate) {
                found = Some((id, end));
                break;
            }
        }
        match found {
            Some((id, end)) => {
                out.push(id);
                start = end;
            }
            None => {
                out.truncate(mark);
                return false;
            }
        }
    }
    true
}

/// Tokenize one pretokenized word with the default word-length guard.
pub fn tokenize(word: &str, vocab: &Vocabulary) -> Vec<String> {
    tokenize_with_limit(word, vocab, DEFAULT_MAX_WORD_CHARS)
}

pub fn tokenize_with_limit(word: &str, vocab: &Vocabulary, max_word_chars: usize) -> Vec<String> {
    let mut ids = Vec::new();
    if word_piece_ids(word, vocab, max_word_chars, &mut ids) {
        ids.into_iter()
            .map(|id| vocab.token(id).expect("id from vocabulary").to_string())
            .collect()
    } else {
        vec![UNK.to_string()]
    }
}

/// `[CLS]` + word-piece ids of every word + `[SEP]`, keeping at most
/// `max_sequence_length` ids in total.
///
/// # Panics
/// If `max_sequence_length < 2`.
pub fn encode(text: &str, vocab: &Vocabulary, max_sequence_length: usize) -> EncodedText {
    assert!(
        max_sequence_length >= 2,
        "max_sequence_length must leave room for [CLS] and [SEP]"
    );
    let budget = max_sequence_length - 2;
    let mut ids = vec![CLS_ID];
    let mut truncated = false;
    let mut pieces = Vec::new();
    for word in pretokenize(text) {
        pieces.clear();
        if !word_piece_ids(&word, vocab, DEFAULT_MAX_WORD_CHARS, &mut pieces) {
            pieces.push(UNK_ID);
        }
        let room = budget - (ids.len() - 1);
        if pieces.len() > room {
            ids.extend_from_slice(&pieces[..room]);
            truncated = true;
            break;
        }
        ids.extend_from_slice(&pieces);
    }
    ids.push(SEP_ID);
    EncodedText { ids, truncated }
}

/// Glue continuation pieces onto the preceding piece and join words with a
/// single space.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        let t = t.as_ref();
        match t.strip_prefix(CONTINUATION_PREFIX) {
            Some(rest) if i > 0 => out.push_str(rest),
            _ => {
                if i > 0 {
                    out.push(' ');
                }
                out.push_str(t);
            }
        }
    }
    out
}
