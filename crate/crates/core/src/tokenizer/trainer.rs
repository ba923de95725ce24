//! WordPiece vocabulary learning by likelihood-scored pair merging.
//!
//! Each word starts as characters (first char in initial form, the rest with
//! the `##` prefix). At every step the adjacent pair `(a, b)` maximising
//! `count(ab) / (count(a) * count(b))` is merged, among pairs seen at least
//! `min_frequency` times. Scores are compared exactly as rationals; ties go
//! to the lexicographically smallest merged token.
//!
//! Candidate pairs live in a max-heap with lazy invalidation: an entry is
//! acted on only if the three counts it was scored with are still current.
//! Whenever a pair count or a symbol count changes, fresh entries are pushed
//! for every affected pair, so the heap always holds an up-to-date entry for
//! every live pair.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap, HashSet};

use rayon::prelude::*;

use super::{pretokenize, Vocabulary, CONTINUATION_PREFIX, DEFAULT_MAX_WORD_CHARS, SPECIAL_TOKENS};
use crate::error::{Error, Result};

const COUNT_CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainerConfig {
    pub target_size: usize,
    pub min_frequency: u64,
    /// Words longer than this are left out of merge statistics.
    pub max_word_chars: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            target_size: super::DEFAULT_VOCAB_SIZE,
            min_frequency: 2,
            max_word_chars: DEFAULT_MAX_WORD_CHARS,
        }
    }
}

/// Word frequencies after pretokenization.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WordCounts {
    counts: HashMap<String, u64>,
}

impl WordCounts {
    pub fn add_text(&mut self, text: &str) {
        for w in pretokenize(text) {
            *self.counts.entry(w).or_insert(0) += 1;
        }
    }

    pub fn merge(&mut self, other: WordCounts) {
        for (w, c) in other.counts {
            *self.counts.entry(w).or_insert(0) += c;
        }
    }

    /// Count a stream of texts, sharding each chunk across threads.
    pub fn from_texts<I, S>(texts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str> + Send + Sync,
    {
        let mut total = WordCounts::default();
        let mut chunk = Vec::with_capacity(COUNT_CHUNK);
        let flush = |chunk: &mut Vec<S>, total: &mut WordCounts| {
            let part = chunk
                .par_iter()
                .fold(WordCounts::default, |mut acc, t| {
                    acc.add_text(t.as_ref());
                    acc
                })
                .reduce(WordCounts::default, |mut a, b| {
                    a.merge(b);
                    a
                });
            total.merge(part);
            chunk.clear();
        };
        for t in texts {
            chunk.push(t);
            if chunk.len() == COUNT_CHUNK {
                flush(&mut chunk, &mut total);
            }
        }
        flush(&mut chunk, &mut total);
        total
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn get(&self, word: &str) -> u64 {
        self.counts.get(word).copied().unwrap_or(0)
    }
}

pub fn train_wordpiece<I, S>(texts: I, target_size: usize, min_frequency: u64) -> Result<Vocabulary>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str> + Send + Sync,
{
    let counts = WordCounts::from_texts(texts);
    train_wordpiece_from_counts(
        &counts,
        TrainerConfig {
            target_size,
            min_frequency,
            ..TrainerConfig::default()
        },
    )
}

type Pair = (u32, u32);

#[derive(Debug, PartialEq, Eq)]
struct Candidate {
    pair_count: u64,
    left_count: u64,
    right_count: u64,
    merged: String,
    pair: Pair,
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        // pair_count / (left * right), compared by cross-multiplication
        let lhs = self.pair_count as u128 * (other.left_count as u128 * other.right_count as u128);
        let rhs = other.pair_count as u128 * (self.left_count as u128 * self.right_count as u128);
        lhs.cmp(&rhs)
            .then_with(|| other.merged.cmp(&self.merged))
            .then_with(|| other.pair.cmp(&self.pair))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Word {
    symbols: Vec<u32>,
    freq: u64,
}

struct MergeState {
    tokens: Vec<String>,
    token_ids: HashMap<String, u32>,
    symbol_counts: Vec<u64>,
    words: Vec<Word>,
    pair_counts: HashMap<Pair, u64>,
    pair_words: HashMap<Pair, HashSet<usize>>,
    pairs_by_symbol: HashMap<u32, HashSet<Pair>>,
    heap: BinaryHeap<Candidate>,
    min_frequency: u64,
}

impl MergeState {
    fn merged_token(&self, (a, b): Pair) -> String {
        let right = &self.tokens[b as usize];
        let right = right.strip_prefix(CONTINUATION_PREFIX).unwrap_or(right);
        let mut s = String::with_capacity(self.tokens[a as usize].len() + right.len());
        s.push_str(&self.tokens[a as usize]);
        s.push_str(right);
        s
    }

    fn push(&mut self, pair: Pair) {
        let count = self.pair_counts.get(&pair).copied().unwrap_or(0);
        if count == 0 || count < self.min_frequency {
            return;
        }
        self.heap.push(Candidate {
            pair_count: count,
            left_count: self.symbol_counts[pair.0 as usize],
            right_count: self.symbol_counts[pair.1 as usize],
            merged: self.merged_token(pair),
            pair,
        });
    }

    fn is_current(&self, c: &Candidate) -> bool {
        self.pair_counts.get(&c.pair).copied() == Some(c.pair_count)
            && self.symbol_counts[c.pair.0 as usize] == c.left_count
            && self.symbol_counts[c.pair.1 as usize] == c.right_count
    }

    fn live_pairs(&self) -> usize {
        self.pair_counts.len()
    }

    fn rebuild_heap(&mut self) {
        self.heap.clear();
        let mut pairs: Vec<Pair> = self.pair_counts.keys().copied().collect();
        pairs.sort_unstable();
        for p in pairs {
            self.push(p);
        }
    }

    fn pop_best(&mut self) -> Option<Candidate> {
        while let Some(c) = self.heap.pop() {
            if self.is_current(&c) {
                return Some(c);
            }
        }
        None
    }

    fn add_pair(&mut self, pair: Pair, word: usize, freq: u64) {
        *self.pair_counts.entry(pair).or_insert(0) += freq;
        self.pair_words.entry(pair).or_default().insert(word);
        self.pairs_by_symbol.entry(pair.0).or_default().insert(pair);
        self.pairs_by_symbol.entry(pair.1).or_default().insert(pair);
    }

    /// Forget a pair whose count dropped to zero.
    fn drop_dead_pair(&mut self, pair: Pair) {
        if self.pair_counts.get(&pair) != Some(&0) {
            return;
        }
        self.pair_counts.remove(&pair);
        self.pair_words.remove(&pair);
        for s in [pair.0, pair.1] {
            if let Some(set) = self.pairs_by_symbol.get_mut(&s) {
                set.remove(&pair);
            }
        }
    }

    /// Merge every occurrence of `pair` into `new_id`.
    fn apply(&mut self, pair: Pair, new_id: u32) {
        let mut touched: Vec<usize> = self
            .pair_words
            .get(&pair)
            .map(|s| s.iter().copied().collect())
            .unwrap_or_default();
        touched.sort_unstable();

        let mut changed_pairs: BTreeSet<Pair> = BTreeSet::new();
        let mut symbol_delta: HashMap<u32, i64> = HashMap::new();

        for w in touched {
            let old = &self.words[w].symbols;
            let freq = self.words[w].freq;
            let mut new = Vec::with_capacity(old.len());
            let mut i = 0;
            while i < old.len() {
                if i + 1 < old.len() && (old[i], old[i + 1]) == pair {
                    new.push(new_id);
                    i += 2;
                } else {
                    new.push(old[i]);
                    i += 1;
                }
            }
            if new.len() == old.len() {
                continue;
            }
            let old = std::mem::replace(&mut self.words[w].symbols, new);
            // a pair repeated inside one word is removed and re-added once
            let old_pairs: BTreeSet<Pair> = old.windows(2).map(|p| (p[0], p[1])).collect();
            for p in old.windows(2) {
                let p = (p[0], p[1]);
                *self.pair_counts.get_mut(&p).expect("pair present") -= freq;
                changed_pairs.insert(p);
            }
            for p in &old_pairs {
                if let Some(set) = self.pair_words.get_mut(p) {
                    set.remove(&w);
                }
            }
            for s in &old {
                *symbol_delta.entry(*s).or_insert(0) -= freq as i64;
            }
            let new_syms = self.words[w].symbols.clone();
            for p in new_syms.windows(2) {
                let p = (p[0], p[1]);
                self.add_pair(p, w, freq);
                changed_pairs.insert(p);
            }
            for s in &new_syms {
                *symbol_delta.entry(*s).or_insert(0) += freq as i64;
            }
        }

        // drop pairs that no longer occur
        for p in &changed_pairs {
            self.drop_dead_pair(*p);
        }

        let mut changed_symbols: Vec<u32> = symbol_delta
            .into_iter()
            .filter(|(_, d)| *d != 0)
            .map(|(s, d)| {
                let c = &mut self.symbol_counts[s as usize];
                *c = (*c as i64 + d) as u64;
                s
            })
            .collect();
        changed_symbols.sort_unstable();

        for s in changed_symbols {
            if let Some(pairs) = self.pairs_by_symbol.get(&s) {
                changed_pairs.extend(pairs.iter().copied());
            }
        }
        for p in changed_pairs {
            self.push(p);
        }
        if self.heap.len() > 4 * self.live_pairs() + 1024 {
            self.rebuild_heap();
        }
    }
}

pub fn train_wordpiece_from_counts(counts: &WordCounts, config: TrainerConfig) -> Result<Vocabulary> {
    if counts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if config.min_frequency == 0 {
        return Err(Error::InvalidConfig("min_frequency must be at least 1".into()));
    }
    let alphabet: BTreeSet<char> = counts.counts.keys().flat_map(|w| w.chars()).collect();
    let minimum = SPECIAL_TOKENS.len() + 2 * alphabet.len();
    if config.target_size < minimum {
        return Err(Error::VocabTooSmall {
            target: config.target_size,
            minimum,
        });
    }

    let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
    tokens.extend(alphabet.iter().map(|c| c.to_string()));
    tokens.extend(alphabet.iter().map(|c| format!("{CONTINUATION_PREFIX}{c}")));
    let token_ids: HashMap<String, u32> = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();

    let mut sorted_words: Vec<(&String, u64)> = counts
        .counts
        .iter()
        .filter(|(w, _)| w.chars().count() <= config.max_word_chars)
        .map(|(w, c)| (w, *c))
        .collect();
    sorted_words.sort_unstable();

    let mut state = MergeState {
        symbol_counts: vec![0; tokens.len()],
        tokens,
        token_ids,
        words: Vec::with_capacity(sorted_words.len()),
        pair_counts: HashMap::new(),
        pair_words: HashMap::new(),
        pairs_by_symbol: HashMap::new(),
        heap: BinaryHeap::new(),
        min_frequency: config.min_frequency,
    };
    let mut buf = String::new();
    for (w, freq) in sorted_words {
        let symbols: Vec<u32> = w
            .chars()
            .enumerate()
            .map(|(i, c)| {
                buf.clear();
                if i > 0 {
                    buf.push_str(CONTINUATION_PREFIX);
                }
                buf.push(c);
                state.token_ids[&buf]
            })
            .collect();
        for s in &symbols {
            state.symbol_counts[*s as usize] += freq;
        }
        let idx = state.words.len();
        for p in symbols.windows(2) {
            state.add_pair((p[0], p[1]), idx, freq);
        }
        state.words.push(Word { symbols, freq });
    }
    state.rebuild_heap();

    while state.tokens.len() < config.target_size {
        let Some(best) = state.pop_best() else { break };
        let new_id = match state.token_ids.get(&best.merged) {
            Some(id) => *id,
            None => {
                let id = state.tokens.len() as u32;
                state.token_ids.insert(best.merged.clone(), id);
                state.tokens.push(best.merged);
                state.symbol_counts.push(0);
                id
            }
        };
        state.apply(best.pair, new_id);
    }

    Vocabulary::from_entries(state.tokens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::tokenize;

    fn alphabet_size(texts: &[&str]) -> usize {
        texts
            .iter()
            .flat_map(|t| pretokenize(t))
            .flat_map(|w| w.chars().collect::<Vec<_>>())
            .collect::<BTreeSet<_>>()
            .len()
    }

    #[test]
    fn empty_corpus_rejected() {
        assert!(matches!(
            train_wordpiece(Vec::<String>::new(), 100, 1),
            Err(Error::EmptyCorpus)
        ));
        assert!(matches!(train_wordpiece(["  "], 100, 1), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn below_seed_size_rejected() {
        // 5 specials + {a, b, ##a, ##b}
        assert!(matches!(
            train_wordpiece(["ab ab ab"], 8, 1),
            Err(Error::VocabTooSmall { target: 8, minimum: 9 })
        ));
    }

    #[test]
    fn tiny_corpus_hand_run() {
        // seed: specials + a, b, ##a, ##b (9); only pair (a, ##b) exists
        let v = train_wordpiece(["ab ab ab"], 10, 1).unwrap();
        assert_eq!(v.len(), 10);
        for t in ["a", "b", "##a", "##b", "ab"] {
            assert!(v.contains(t), "missing {t}");
        }
        assert_eq!(tokenize("ab", &v), vec!["ab"]);
        // nothing left to merge: stops short of the target
        let v = train_wordpiece(["ab ab ab"], 50, 1).unwrap();
        assert_eq!(v.len(), 10);
    }

    #[test]
    fn zero_merge_budget_gives_characters() {
        let texts = ["fever rash", "rash fever"];
        let target = SPECIAL_TOKENS.len() + 2 * alphabet_size(&texts);
        let v = train_wordpiece(texts, target, 1).unwrap();
        assert_eq!(v.len(), target);
        assert_eq!(tokenize("fever", &v), vec!["f", "##e", "##v", "##e", "##r"]);
    }

    #[test]
    fn score_prefers_rare_pairs() {
        // counts: a=4+1, ##b=4 ... x, ##y appear once together;
        // score(x,##y) = 1/(1*1) beats score(a,##b) = 4/(5*4)
        let v = train_wordpiece(["ab ab ab ab a xy"], 14, 1).unwrap();
        assert_eq!(v.entries()[13], "xy");
    }

    #[test]
    fn ties_break_lexicographically() {
        let v = train_wordpiece(["cd ab"], 14, 1).unwrap();
        assert_eq!(v.entries()[13], "ab");
    }

    #[test]
    fn min_frequency_filters_pairs() {
        let v = train_wordpiece(["ab ab cd"], 100, 2).unwrap();
        assert!(v.contains("ab"));
        assert!(!v.contains("cd"));
    }

    #[test]
    fn repeated_symbol_pairs_merge_without_overlap() {
        let v = train_wordpiece(["aaa aaa"], 100, 1).unwrap();
        assert!(v.contains("aaa"));
        assert_eq!(tokenize("aaa", &v), vec!["aaa"]);
    }

    #[test]
    fn learns_whole_domain_word() {
        let mut texts = vec!["intussusception"; 1000];
        texts.extend(["the patient was seen in clinic"; 200]);
        let v = train_wordpiece(texts, 400, 2).unwrap();
        assert!(v.contains("intussusception"));
        assert_eq!(tokenize("intussusception", &v), vec!["intussusception"]);
    }

    #[test]
    fn deterministic_under_input_order() {
        let a = [
            "fever and rash",
            "rash after dose",
            "dose two fever",
            "syncope after dose",
        ];
        let mut b = a;
        b.reverse();
        let va = train_wordpiece(a, 60, 1).unwrap();
        let vb = train_wordpiece(b, 60, 1).unwrap();
        assert_eq!(va, vb);
    }

    #[test]
    fn alphabet_is_seeded_in_both_forms() {
        let v = train_wordpiece(["xq"], 20, 1).unwrap();
        for t in ["x", "q", "##x", "##q"] {
            assert!(v.contains(t));
        }
    }
}
