//! Greeklish-to-Greek transliteration: a mapping table of Latin spellings,
//! a lattice of candidate renderings, a character language model and beam
//! search decoding. Also generates synthetic Greeklish for training data.

mod decode;
mod lattice;
mod lm;
mod synth;
mod table;

pub use decode::decode_lattice;
pub use lattice::{LatticeEdge, TransliterationLattice};
pub use lm::{CharNgramLM, LmData, BOUNDARY, UNKNOWN};
pub use synth::synth_greeklish;
pub use table::{Channel, MappingEntry, MappingTable};

use serde::{Deserialize, Serialize};

use crate::error::Result;

const DEFAULT_CORPUS: &str = include_str!("../../data/greek_corpus.txt");

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct G2gConfig {
    pub order: usize,
    pub lm_weight: f64,
    pub beam_width: usize,
}

impl Default for G2gConfig {
    fn default() -> Self {
        G2gConfig {
            order: 5,
            lm_weight: 1.0,
            beam_width: 8,
        }
    }
}

/// A mapping table and language model ready for decoding.
#[derive(Clone, Debug, PartialEq)]
pub struct Transliterator {
    pub table: MappingTable,
    pub lm: CharNgramLM,
    pub config: G2gConfig,
}

impl Transliterator {
    pub fn new(table: MappingTable, lm: CharNgramLM, config: G2gConfig) -> Self {
        Transliterator { table, lm, config }
    }

    /// Trains the language model on `corpus` lines.
    pub fn train<I, S>(table: MappingTable, corpus: I, config: G2gConfig) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let lm = CharNgramLM::train(corpus, config.order)?;
        Ok(Transliterator::new(table, lm, config))
    }

    /// The shipped table with a model trained on the bundled Greek corpus.
    pub fn bundled() -> Self {
        Transliterator::train(
            MappingTable::default_table(),
            DEFAULT_CORPUS.lines(),
            G2gConfig::default(),
        )
        .expect("bundled corpus is not empty")
    }

    /// Bundled Greek sentences, one per line.
    pub fn bundled_corpus() -> &'static str {
        DEFAULT_CORPUS
    }

    /// Transliterates every line of `text` independently.
    pub fn transliterate(&self, text: &str) -> String {
        text.split('\n')
            .map(|line| self.transliterate_line(line))
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn transliterate_line(&self, line: &str) -> String {
        let lattice = TransliterationLattice::build(line, &self.table);
        decode_lattice(&lattice, &self.lm, self.config.lm_weight, self.config.beam_width).0
    }
}
