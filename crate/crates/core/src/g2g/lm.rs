use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boundary symbol id (line start padding and end of line).
pub const BOUNDARY: u32 = 0;
/// Id of characters outside the training alphabet.
pub const UNKNOWN: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq)]
struct ContextCounts {
    total: u64,
    next: BTreeMap<u32, u64>,
}

/// Character n-gram model with interpolated Witten-Bell smoothing.
///
/// Every line is padded on the left with `order - 1` boundary symbols and
/// ends by predicting one boundary symbol.
#[derive(Clone, Debug, PartialEq)]
pub struct CharNgramLM {
    order: usize,
    chars: Vec<char>,
    ids: HashMap<char, u32>,
    /// `tables[k]` maps contexts of length `k` to their continuation counts.
    tables: Vec<HashMap<Vec<u32>, ContextCounts>>,
}

/// Serialized form: the alphabet and every `(context, next, count)` triple.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmData {
    pub order: usize,
    pub chars: String,
    pub ngrams: Vec<(Vec<u32>, u32, u64)>,
}

impl CharNgramLM {
    pub fn train<I, S>(lines: I, order: usize) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        if order == 0 {
            return Err(Error::InvalidModel("n-gram order must be at least 1".into()));
        }
        let lines: Vec<Vec<char>> = lines
            .into_iter()
            .map(|l| l.as_ref().chars().collect::<Vec<_>>())
            .filter(|l| !l.is_empty())
            .collect();
        if lines.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut chars: Vec<char> = lines.iter().flatten().copied().collect();
        chars.sort_unstable();
        chars.dedup();
        let mut lm = CharNgramLM::with_alphabet(order, chars);
        for line in &lines {
            let seq = lm.padded(line);
            for p in (order - 1)..seq.len() {
                for k in 0..order {
                    let ctx = seq[p - k..p].to_vec();
                    lm.add(ctx, seq[p], 1);
                }
            }
        }
        Ok(lm)
    }

    fn with_alphabet(order: usize, chars: Vec<char>) -> Self {
        let ids = chars.iter().enumerate().map(|(i, &c)| (c, i as u32 + 2)).collect();
        CharNgramLM {
            order,
            chars,
            ids,
            tables: vec![HashMap::new(); order],
        }
    }

    fn add(&mut self, ctx: Vec<u32>, next: u32, count: u64) {
        let entry = self.tables[ctx.len()].entry(ctx).or_default();
        entry.total += count;
        *entry.next.entry(next).or_default() += count;
    }

    fn padded(&self, line: &[char]) -> Vec<u32> {
        let mut seq = vec![BOUNDARY; self.order - 1];
        seq.extend(line.iter().map(|&c| self.id(c)));
        seq.push(BOUNDARY);
        seq
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Symbol id of a character.
    pub fn id(&self, c: char) -> u32 {
        self.ids.get(&c).copied().unwrap_or(UNKNOWN)
    }

    /// Number of predictable symbols: the alphabet, boundary and unknown.
    pub fn vocab_size(&self) -> usize {
        self.chars.len() + 2
    }

    /// Context of `order - 1` boundary symbols.
    pub fn start_context(&self) -> Vec<u32> {
        vec![BOUNDARY; self.order - 1]
    }

    /// `P(next | context)`; only the last `order - 1` context symbols are used.
    pub fn prob(&self, context: &[u32], next: u32) -> f64 {
        let keep = context.len().min(self.order - 1);
        self.prob_rec(&context[context.len() - keep..], next)
    }

    fn prob_rec(&self, ctx: &[u32], next: u32) -> f64 {
        let lower = if ctx.is_empty() {
            1.0 / self.vocab_size() as f64
        } else {
            self.prob_rec(&ctx[1..], next)
        };
        match self.tables[ctx.len()].get(ctx) {
            None => lower,
            Some(counts) => {
                let types = counts.next.len() as f64;
                let seen = counts.next.get(&next).copied().unwrap_or(0) as f64;
                (seen + types * lower) / (counts.total as f64 + types)
            }
        }
    }

    pub fn log_prob(&self, context: &[u32], next: u32) -> f64 {
        self.prob(context, next).ln()
    }

    /// Appends `next` to a context, keeping the last `order - 1` symbols.
    pub fn advance(&self, context: &mut Vec<u32>, next: u32) {
        if self.order > 1 {
            context.push(next);
            if context.len() > self.order - 1 {
                context.remove(0);
            }
        }
    }

    /// Log-probability of a whole line, including the final boundary.
    pub fn score_line(&self, text: &str) -> f64 {
        let mut ctx = self.start_context();
        let mut total = 0.0;
        for c in text.chars() {
            let id = self.id(c);
            total += self.log_prob(&ctx, id);
            self.advance(&mut ctx, id);
        }
        total + self.log_prob(&ctx, BOUNDARY)
    }

    /// All symbol ids in order.
    pub fn symbols(&self) -> impl Iterator<Item = u32> {
        0..self.vocab_size() as u32
    }

    /// Every context seen in training, by length.
    pub fn contexts(&self) -> impl Iterator<Item = &Vec<u32>> {
        self.tables.iter().flat_map(|t| t.keys())
    }

    pub fn to_data(&self) -> LmData {
        let mut ngrams: Vec<(Vec<u32>, u32, u64)> = self
            .tables
            .iter()
            .flat_map(|t| {
                t.iter()
                    .flat_map(|(ctx, c)| c.next.iter().map(move |(&n, &k)| (ctx.clone(), n, k)))
            })
            .collect();
        ngrams.sort();
        LmData {
            order: self.order,
            chars: self.chars.iter().collect(),
            ngrams,
        }
    }

    pub fn from_data(data: LmData) -> Result<Self> {
        if data.order == 0 {
            return Err(Error::InvalidModel("n-gram order must be at least 1".into()));
        }
        let chars: Vec<char> = data.chars.chars().collect();
        let mut lm = CharNgramLM::with_alphabet(data.order, chars);
        let max_id = lm.vocab_size() as u32;
        for (ctx, next, count) in data.ngrams {
            if ctx.len() >= data.order || next >= max_id || ctx.iter().any(|&c| c >= max_id) {
                return Err(Error::InvalidModel("n-gram entry outside the model".into()));
            }
            lm.add(ctx, next, count);
        }
        Ok(lm)
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn hand_computed_bigram() {
        let lm = CharNgramLM::train(["αβαβ"], 2).unwrap();
        let (a, b) = (lm.id('α'), lm.id('β'));
        // Unigram: counts α2 β2 <b>1 over 5 tokens, 3 types, 4 symbols.
        let p1 = (2.0 + 3.0 * 0.25) / (5.0 + 3.0);
        assert_abs_diff_eq!(p1, 0.34375);
        assert_abs_diff_eq!(lm.prob(&[], b), p1, epsilon = 1e-15);
        // After α: β twice, one type.
        assert_abs_diff_eq!(lm.prob(&[a], b), (2.0 + p1) / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(lm.prob(&[a], b), 0.78125, epsilon = 1e-15);
    }

    #[test]
    fn uniform_unigram() {
        let lm = CharNgramLM::train(["αβγ", "γβα"], 1).unwrap();
        let p: Vec<f64> = ['α', 'β', 'γ'].iter().map(|&c| lm.prob(&[], lm.id(c))).collect();
        assert_abs_diff_eq!(p[0], p[1], epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], p[2], epsilon = 1e-15);
    }

    #[test]
    fn empty_corpus() {
        assert!(matches!(
            CharNgramLM::train(Vec::<String>::new(), 3),
            Err(Error::EmptyCorpus)
        ));
        assert!(matches!(CharNgramLM::train([""], 3), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn unknown_characters_have_mass() {
        let lm = CharNgramLM::train(["αβ"], 3).unwrap();
        assert_eq!(lm.id('x'), UNKNOWN);
        assert!(lm.prob(&lm.start_context(), UNKNOWN) > 0.0);
    }

    #[test]
    fn data_round_trip() {
        let lm = CharNgramLM::train(["η αθηνα", "και η θεσσαλονικη"], 4).unwrap();
        let back = CharNgramLM::from_data(lm.to_data()).unwrap();
        assert_eq!(back, lm);
        assert_eq!(back.score_line("αθηνα"), lm.score_line("αθηνα"));
    }

    proptest! {
        #[test]
        fn distributions_sum_to_one(lines in prop::collection::vec("[αβγδ ]{1,12}", 1..6), order in 1usize..5) {
            let lm = CharNgramLM::train(&lines, order).unwrap();
            let mut contexts: Vec<Vec<u32>> = lm.contexts().cloned().collect();
            contexts.push(vec![UNKNOWN; order - 1]);
            for ctx in contexts {
                let total: f64 = lm.symbols().map(|s| lm.prob(&ctx, s)).sum();
                prop_assert!((total - 1.0).abs() < 1e-9);
                prop_assert!(lm.symbols().all(|s| lm.prob(&ctx, s) > 0.0));
            }
        }
    }
}
