//! WordPiece vocabulary training and greedy longest-match tokenization.
//!
//! Words are produced by [`pretokenize`] (NFC, whitespace and punctuation
//! splitting, case preserved). Non-initial pieces carry the `##`
//! continuation prefix. Special tokens always occupy ids 0 to 4.

mod pretokenize;
mod trainer;
mod vocab;
mod wordpiece;

pub use pretokenize::{is_punctuation, pretokenize};
pub use trainer::{train_wordpiece, train_wordpiece_from_counts, TrainerConfig, WordCounts};
pub use vocab::{load_vocab, save_vocab, TokenId, Vocabulary};
pub use wordpiece::{detokenize, encode, tokenize, tokenize_with_limit, EncodedText};

pub const CONTINUATION_PREFIX: &str = "##";

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";

/// Special tokens in id order.
pub const SPECIAL_TOKENS: [&str; 5] = [PAD, UNK, CLS, SEP, MASK];

pub const PAD_ID: TokenId = TokenId(0);
pub const UNK_ID: TokenId = TokenId(1);
pub const CLS_ID: TokenId = TokenId(2);
pub const SEP_ID: TokenId = TokenId(3);
pub const MASK_ID: TokenId = TokenId(4);

/// Words longer than this many characters tokenize to `[UNK]`.
pub const DEFAULT_MAX_WORD_CHARS: usize = 100;
pub const DEFAULT_MAX_SEQUENCE_LENGTH: usize = 512;
pub const DEFAULT_VOCAB_SIZE: usize = 52_000;
