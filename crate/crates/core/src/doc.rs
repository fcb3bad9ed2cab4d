//! Documents, sentences and tokens.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ner::NerTag;

/// The 17 universal part-of-speech tags.
pub const UPOS_TAGS: [&str; 17] = [
    "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM", "PART", "PRON", "PROPN", "PUNCT", "SCONJ",
    "SYM", "VERB", "X",
];

/// The morphological categories that have a classification head.
#[derive(Clone, Copy, Debug, Eq, Hash, Ord, PartialEq, PartialOrd, Serialize, Deserialize)]
pub enum MorphCategory {
    Case,
    Definite,
    Gender,
    Number,
    PronType,
    Foreign,
    Aspect,
    Mood,
    Person,
    Tense,
    VerbForm,
    Voice,
    NumType,
    Poss,
    Degree,
    Abbr,
}

impl MorphCategory {
    pub const ALL: [MorphCategory; 16] = [
        MorphCategory::Case,
        MorphCategory::Definite,
        MorphCategory::Gender,
        MorphCategory::Number,
        MorphCategory::PronType,
        MorphCategory::Foreign,
        MorphCategory::Aspect,
        MorphCategory::Mood,
        MorphCategory::Person,
        MorphCategory::Tense,
        MorphCategory::VerbForm,
        MorphCategory::Voice,
        MorphCategory::NumType,
        MorphCategory::Poss,
        MorphCategory::Degree,
        MorphCategory::Abbr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MorphCategory::Case => "Case",
            MorphCategory::Definite => "Definite",
            MorphCategory::Gender => "Gender",
            MorphCategory::Number => "Number",
            MorphCategory::PronType => "PronType",
            MorphCategory::Foreign => "Foreign",
            MorphCategory::Aspect => "Aspect",
            MorphCategory::Mood => "Mood",
            MorphCategory::Person => "Person",
            MorphCategory::Tense => "Tense",
            MorphCategory::VerbForm => "VerbForm",
            MorphCategory::Voice => "Voice",
            MorphCategory::NumType => "NumType",
            MorphCategory::Poss => "Poss",
            MorphCategory::Degree => "Degree",
            MorphCategory::Abbr => "Abbr",
        }
    }
}

impl fmt::Display for MorphCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MorphCategory {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MorphCategory::ALL.iter().copied().find(|c| c.name() == s).ok_or(())
    }
}

/// Morphological features restricted to the modeled categories. A missing
/// category means "not applicable".
#[derive(Clone, Debug, Default, Eq, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MorphFeatures(BTreeMap<MorphCategory, String>);

impl MorphFeatures {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, category: MorphCategory) -> Option<&str> {
        self.0.get(&category).map(String::as_str)
    }

    pub fn insert(&mut self, category: MorphCategory, value: impl Into<String>) {
        self.0.insert(category, value.into());
    }

    pub fn remove(&mut self, category: MorphCategory) -> Option<String> {
        self.0.remove(&category)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (MorphCategory, &str)> {
        self.0.iter().map(|(&c, v)| (c, v.as_str()))
    }
}

impl FromIterator<(MorphCategory, String)> for MorphFeatures {
    fn from_iter<I: IntoIterator<Item = (MorphCategory, String)>>(iter: I) -> Self {
        MorphFeatures(iter.into_iter().collect())
    }
}

/// CoNLL-U columns and values that are carried through without being
/// modeled.
#[derive(Clone, Debug, Default, Eq, PartialEq)]
pub struct Passthrough {
    pub lemma: Option<String>,
    pub xpos: Option<String>,
    pub deps: Option<String>,
    /// MISC entries other than `SpaceAfter` and `NER`, in input order.
    pub misc: Vec<String>,
    /// FEATS entries whose category is not modeled.
    pub feats: Vec<(String, String)>,
}

#[derive(Clone, Debug, Eq, PartialEq)]
pub struct Token {
    /// 1-based position in the sentence.
    pub index: usize,
    pub form: String,
    pub upos: Option<String>,
    pub feats: MorphFeatures,
    pub ner: Option<String>,
    /// Head word index, 0 for the virtual root.
    pub head: Option<usize>,
    pub deprel: Option<String>,
    pub space_after: bool,
    pub passthrough: Passthrough,
}

impl Token {
    pub fn new(index: usize, form: impl Into<String>) -> Self {
        Token {
            index,
            form: form.into(),
            upos: None,
            feats: MorphFeatures::new(),
            ner: None,
            head: None,
            deprel: None,
            space_after: true,
            passthrough: Passthrough::default(),
        }
    }
}

/// A sentence, together with CoNLL-U material that is preserved verbatim.
#[derive(Clone, Debug, Default, Eq, PartialEq)]
pub struct Sentence {
    pub tokens: Vec<Token>,
    /// Comment lines without the leading `#`.
    pub comments: Vec<String>,
    /// Multiword-token and empty-node lines, keyed by the number of words
    /// that precede them.
    pub raw_lines: Vec<(usize, String)>,
}

impl Sentence {
    pub fn new(tokens: Vec<Token>) -> Self {
        Sentence {
            tokens,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn forms(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.form.as_str()).collect()
    }

    /// Checks the structural token invariants.
    pub fn validate(&self) -> Result<(), String> {
        let n = self.tokens.len();
        for (pos, token) in self.tokens.iter().enumerate() {
            if token.index != pos + 1 {
                return Err(format!(
                    "token {} has index {}, expected {}",
                    token.form,
                    token.index,
                    pos + 1
                ));
            }
            if token.form.is_empty() {
                return Err(format!("token {} has an empty form", token.index));
            }
            if let Some(head) = token.head {
                if head > n || head == token.index {
                    return Err(format!("token {} has invalid head {}", token.index, head));
                }
            }
            if let Some(ner) = &token.ner {
                ner.parse::<NerTag>()
                    .map_err(|_| format!("token {} has invalid NER tag {}", token.index, ner))?;
            }
        }
        Ok(())
    }

    /// Reconstructs the surface text from forms and spacing.
    pub fn text(&self) -> String {
        let mut text = String::new();
        for token in &self.tokens {
            text.push_str(&token.form);
            if token.space_after {
                text.push(' ');
            }
        }
        text.truncate(text.trim_end().len());
        text
    }
}

#[derive(Clone, Debug, Default, Eq, PartialEq)]
pub struct Doc {
    pub raw_text: String,
    pub sentences: Vec<Sentence>,
    pub normalized: bool,
}

impl Doc {
    pub fn from_sentences(sentences: Vec<Sentence>) -> Self {
        let raw_text = sentences.iter().map(Sentence::text).collect::<Vec<_>>().join(" ");
        Doc {
            raw_text,
            sentences,
            normalized: false,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &Token> {
        self.sentences.iter().flat_map(|s| s.tokens.iter())
    }

    pub fn n_tokens(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }
}

const EXTRA_PUNCT: &str = "«»“”‘’„…·–—΄´\u{037E}\u{0387}";

pub fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation() || EXTRA_PUNCT.contains(c)
}

fn is_sentence_final(c: char) -> bool {
    matches!(c, '.' | ';' | '!' | '?' | '\u{037E}')
}

/// Rule-based tokenizer: whitespace splitting, then leading and trailing
/// punctuation split off one character at a time. A sentence ends at
/// `. ; ! ?` followed by whitespace or the end of the text. Abbreviations are
/// not recognized.
pub fn tokenize(text: &str) -> Doc {
    let mut sentences = Vec::new();
    let mut current: Vec<Token> = Vec::new();

    let chunks: Vec<&str> = text.split_whitespace().collect();
    for chunk in chunks {
        let chars: Vec<char> = chunk.chars().collect();
        let lead = chars.iter().take_while(|&&c| is_punct(c)).count();
        let trail = if lead == chars.len() {
            0
        } else {
            chars.iter().rev().take_while(|&&c| is_punct(c)).count()
        };

        let mut pieces: Vec<String> = chars[..lead].iter().map(|c| c.to_string()).collect();
        if lead < chars.len() {
            pieces.push(chars[lead..chars.len() - trail].iter().collect());
        }
        pieces.extend(chars[chars.len() - trail..].iter().map(|c| c.to_string()));

        let n_pieces = pieces.len();
        for (k, piece) in pieces.into_iter().enumerate() {
            let last_in_chunk = k + 1 == n_pieces;
            let ends_sentence = last_in_chunk && {
                let mut it = piece.chars();
                matches!((it.next(), it.next()), (Some(c), None) if is_sentence_final(c))
            };
            let mut token = Token::new(current.len() + 1, piece);
            token.space_after = last_in_chunk;
            current.push(token);
            if ends_sentence {
                sentences.push(Sentence::new(std::mem::take(&mut current)));
            }
        }
    }
    if !current.is_empty() {
        sentences.push(Sentence::new(current));
    }

    Doc {
        raw_text: text.to_owned(),
        sentences,
        normalized: false,
    }
}
