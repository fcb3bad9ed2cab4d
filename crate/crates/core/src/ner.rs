//! Named entity recognition: BIOES tags over 18 entity types, a token
//! classification head, span extraction and entity-level scoring.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayViewD, ArrayViewMutD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::doc::{Doc, Sentence};
use crate::encoder::{outer_add, EncoderModel};
use crate::error::{Error, Result};
use crate::nn::{argmax, dropout_mask, softmax_cross_entropy, uniform_matrix, view, Parameters};
use crate::train::metrics::Prf;

#[derive(Clone, Copy, Debug, Eq, Hash, Ord, PartialEq, PartialOrd, Serialize, Deserialize)]
#[allow(clippy::upper_case_acronyms, non_camel_case_types)]
pub enum EntityType {
    ORG,
    PERSON,
    CARDINAL,
    GPE,
    DATE,
    PERCENT,
    ORDINAL,
    LOC,
    NORP,
    TIME,
    MONEY,
    EVENT,
    PRODUCT,
    WORK_OF_ART,
    FAC,
    QUANTITY,
    LAW,
    LANGUAGE,
}

impl EntityType {
    pub const ALL: [EntityType; 18] = [
        EntityType::ORG,
        EntityType::PERSON,
        EntityType::CARDINAL,
        EntityType::GPE,
        EntityType::DATE,
        EntityType::PERCENT,
        EntityType::ORDINAL,
        EntityType::LOC,
        EntityType::NORP,
        EntityType::TIME,
        EntityType::MONEY,
        EntityType::EVENT,
        EntityType::PRODUCT,
        EntityType::WORK_OF_ART,
        EntityType::FAC,
        EntityType::QUANTITY,
        EntityType::LAW,
        EntityType::LANGUAGE,
    ];

    /// Types shared with common multilingual toolkits, for parity tables.
    pub const SHARED_SIX: [EntityType; 6] = [
        EntityType::EVENT,
        EntityType::GPE,
        EntityType::PERSON,
        EntityType::LOC,
        EntityType::ORG,
        EntityType::PRODUCT,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EntityType::ORG => "ORG",
            EntityType::PERSON => "PERSON",
            EntityType::CARDINAL => "CARDINAL",
            EntityType::GPE => "GPE",
            EntityType::DATE => "DATE",
            EntityType::PERCENT => "PERCENT",
            EntityType::ORDINAL => "ORDINAL",
            EntityType::LOC => "LOC",
            EntityType::NORP => "NORP",
            EntityType::TIME => "TIME",
            EntityType::MONEY => "MONEY",
            EntityType::EVENT => "EVENT",
            EntityType::PRODUCT => "PRODUCT",
            EntityType::WORK_OF_ART => "WORK_OF_ART",
            EntityType::FAC => "FAC",
            EntityType::QUANTITY => "QUANTITY",
            EntityType::LAW => "LAW",
            EntityType::LANGUAGE => "LANGUAGE",
        }
    }

    fn ordinal(self) -> usize {
        EntityType::ALL.iter().position(|&t| t == self).unwrap()
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EntityType {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        EntityType::ALL.iter().copied().find(|t| t.name() == s).ok_or(())
    }
}

#[derive(Clone, Copy, Debug, Eq, Hash, PartialEq)]
pub enum NerTag {
    O,
    B(EntityType),
    I(EntityType),
    E(EntityType),
    S(EntityType),
}

/// Number of tags: `O` plus B/I/E/S for every type.
pub const TAGSET_SIZE: usize = 1 + 4 * EntityType::ALL.len();

impl NerTag {
    /// Tag id: `O` is 0, then B, I, E, S for each type in declaration order.
    pub fn id(self) -> usize {
        match self {
            NerTag::O => 0,
            NerTag::B(t) => 1 + 4 * t.ordinal(),
            NerTag::I(t) => 2 + 4 * t.ordinal(),
            NerTag::E(t) => 3 + 4 * t.ordinal(),
            NerTag::S(t) => 4 + 4 * t.ordinal(),
        }
    }

    pub fn from_id(id: usize) -> NerTag {
        assert!(id < TAGSET_SIZE, "tag id {id} out of range");
        if id == 0 {
            return NerTag::O;
        }
        let t = EntityType::ALL[(id - 1) / 4];
        match (id - 1) % 4 {
            0 => NerTag::B(t),
            1 => NerTag::I(t),
            2 => NerTag::E(t),
            _ => NerTag::S(t),
        }
    }

    pub fn entity_type(self) -> Option<EntityType> {
        match self {
            NerTag::O => None,
            NerTag::B(t) | NerTag::I(t) | NerTag::E(t) | NerTag::S(t) => Some(t),
        }
    }
}

impl fmt::Display for NerTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NerTag::O => f.write_str("O"),
            NerTag::B(t) => write!(f, "B-{t}"),
            NerTag::I(t) => write!(f, "I-{t}"),
            NerTag::E(t) => write!(f, "E-{t}"),
            NerTag::S(t) => write!(f, "S-{t}"),
        }
    }
}

impl FromStr for NerTag {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        if s == "O" {
            return Ok(NerTag::O);
        }
        let (prefix, ty) = s.split_once('-').ok_or(())?;
        let ty: EntityType = ty.parse()?;
        match prefix {
            "B" => Ok(NerTag::B(ty)),
            "I" => Ok(NerTag::I(ty)),
            "E" => Ok(NerTag::E(ty)),
            "S" => Ok(NerTag::S(ty)),
            _ => Err(()),
        }
    }
}

/// An entity occurrence. Word indices are 1-based and inclusive.
#[derive(Clone, Copy, Debug, Eq, Hash, Ord, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct EntitySpan {
    pub sentence: usize,
    pub start: usize,
    pub end: usize,
    pub entity_type: EntityType,
}

/// Turns an arbitrary tag sequence into a valid BIOES sequence.
///
/// Valid sequences are returned unchanged. Otherwise: a span left open by
/// `B`/`I` is closed at the last word of its run (its last tag becomes `E`,
/// or `S` for a single word); a dangling `I` opens a span at that word; a
/// dangling `E` becomes `S`; a type change inside a span closes the old span.
pub fn repair(tags: &[NerTag]) -> Vec<NerTag> {
    let mut out = tags.to_vec();
    let mut open: Option<(EntityType, usize)> = None;

    fn close(out: &mut [NerTag], ty: EntityType, start: usize, end: usize) {
        if start == end {
            out[start] = NerTag::S(ty);
        } else {
            out[start] = NerTag::B(ty);
            for tag in &mut out[start + 1..end] {
                *tag = NerTag::I(ty);
            }
            out[end] = NerTag::E(ty);
        }
    }

    for (p, &tag) in tags.iter().enumerate() {
        match tag {
            NerTag::O => {
                if let Some((ty, start)) = open.take() {
                    close(&mut out, ty, start, p - 1);
                }
            }
            NerTag::B(ty) => {
                if let Some((prev, start)) = open.take() {
                    close(&mut out, prev, start, p - 1);
                }
                open = Some((ty, p));
            }
            NerTag::I(ty) => match open {
                Some((prev, _)) if prev == ty => {}
                Some((prev, start)) => {
                    close(&mut out, prev, start, p - 1);
                    open = Some((ty, p));
                }
                None => open = Some((ty, p)),
            },
            NerTag::E(ty) => match open.take() {
                Some((prev, start)) if prev == ty => close(&mut out, ty, start, p),
                Some((prev, start)) => {
                    close(&mut out, prev, start, p - 1);
                    out[p] = NerTag::S(ty);
                }
                None => out[p] = NerTag::S(ty),
            },
            NerTag::S(ty) => {
                if let Some((prev, start)) = open.take() {
                    close(&mut out, prev, start, p - 1);
                }
                out[p] = NerTag::S(ty);
            }
        }
    }
    if let Some((ty, start)) = open {
        close(&mut out, ty, start, tags.len() - 1);
    }
    out
}

/// Extracts spans from a valid BIOES sequence (call [`repair`] first for
/// model output).
pub fn spans_from_tags(sentence: usize, tags: &[NerTag]) -> Vec<EntitySpan> {
    let mut spans = Vec::new();
    let mut start = None;
    for (p, &tag) in tags.iter().enumerate() {
        match tag {
            NerTag::S(ty) => spans.push(EntitySpan {
                sentence,
                start: p + 1,
                end: p + 1,
                entity_type: ty,
            }),
            NerTag::B(_) => start = Some(p),
            NerTag::E(ty) => {
                if let Some(s) = start.take() {
                    spans.push(EntitySpan {
                        sentence,
                        start: s + 1,
                        end: p + 1,
                        entity_type: ty,
                    });
                }
            }
            NerTag::I(_) => {}
            NerTag::O => start = None,
        }
    }
    spans
}

/// BIOES tags for non-overlapping spans over a sentence of `len` words.
pub fn tags_from_spans(len: usize, spans: &[EntitySpan]) -> Vec<NerTag> {
    let mut tags = vec![NerTag::O; len];
    for span in spans {
        let (s, e, ty) = (span.start - 1, span.end - 1, span.entity_type);
        if s == e {
            tags[s] = NerTag::S(ty);
        } else {
            tags[s] = NerTag::B(ty);
            for tag in &mut tags[s + 1..e] {
                *tag = NerTag::I(ty);
            }
            tags[e] = NerTag::E(ty);
        }
    }
    tags
}

/// Entity spans of every sentence of a document, from the tokens' NER tags.
/// Untagged tokens count as `O`.
pub fn doc_spans(doc: &Doc) -> Vec<EntitySpan> {
    doc.sentences
        .iter()
        .enumerate()
        .flat_map(|(i, s)| spans_from_tags(i, &repair(&sentence_tags(s))))
        .collect()
}

fn sentence_tags(sentence: &Sentence) -> Vec<NerTag> {
    sentence
        .tokens
        .iter()
        .map(|t| t.ner.as_deref().and_then(|n| n.parse().ok()).unwrap_or(NerTag::O))
        .collect()
}

/// Standoff export: one `sentence_idx\tstart\tend\ttype` line per span.
pub fn spans_to_standoff(spans: &[EntitySpan]) -> String {
    spans
        .iter()
        .map(|s| format!("{}\t{}\t{}\t{}\n", s.sentence, s.start, s.end, s.entity_type))
        .collect()
}

pub fn spans_from_standoff(text: &str) -> Result<Vec<EntitySpan>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let bad = || Error::Conllu {
                line: i + 1,
                message: format!("malformed standoff line `{line}`"),
            };
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 4 {
                return Err(bad());
            }
            let span = EntitySpan {
                sentence: f[0].parse().map_err(|_| bad())?,
                start: f[1].parse().map_err(|_| bad())?,
                end: f[2].parse().map_err(|_| bad())?,
                entity_type: f[3].parse().map_err(|_| bad())?,
            };
            if span.start == 0 || span.start > span.end {
                return Err(bad());
            }
            Ok(span)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EntityReport {
    pub per_type: BTreeMap<EntityType, Prf>,
    pub micro: Prf,
    pub macro_f1: f64,
}

/// Exact-match entity scores: a predicted span is correct iff sentence,
/// start, end and type all match a gold span. Macro-F1 averages the types
/// that have gold or predicted support.
pub fn entity_f1(pred: &[EntitySpan], gold: &[EntitySpan]) -> EntityReport {
    entity_f1_filtered(pred, gold, &EntityType::ALL)
}

/// [`entity_f1`] restricted to the given types.
pub fn entity_f1_filtered(pred: &[EntitySpan], gold: &[EntitySpan], types: &[EntityType]) -> EntityReport {
    use std::collections::BTreeSet;

    let keep = |s: &&EntitySpan| types.contains(&s.entity_type);
    let pred: BTreeSet<EntitySpan> = pred.iter().filter(keep).copied().collect();
    let gold: BTreeSet<EntitySpan> = gold.iter().filter(keep).copied().collect();

    let mut counts: BTreeMap<EntityType, (usize, usize, usize)> = BTreeMap::new();
    for span in &pred {
        let c = counts.entry(span.entity_type).or_default();
        c.1 += 1;
        if gold.contains(span) {
            c.0 += 1;
        }
    }
    for span in &gold {
        counts.entry(span.entity_type).or_default().2 += 1;
    }

    let per_type: BTreeMap<EntityType, Prf> = counts
        .iter()
        .map(|(&t, &(tp, n_pred, n_gold))| (t, Prf::from_counts(tp, n_pred, n_gold)))
        .collect();
    let (tp, n_pred, n_gold) = counts
        .values()
        .fold((0, 0, 0), |acc, c| (acc.0 + c.0, acc.1 + c.1, acc.2 + c.2));
    let (micro, macro_f1) = if per_type.is_empty() {
        (
            Prf {
                precision: 1.0,
                recall: 1.0,
                f1: 1.0,
            },
            1.0,
        )
    } else {
        (
            Prf::from_counts(tp, n_pred, n_gold),
            per_type.values().map(|p| p.f1).sum::<f64>() / per_type.len() as f64,
        )
    };
    EntityReport {
        per_type,
        micro,
        macro_f1,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NerModel {
    pub encoder: EncoderModel,
    /// `TAGSET_SIZE × d`
    pub head: Array2<f64>,
}

impl NerModel {
    pub fn new(encoder: EncoderModel) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(encoder.config.seed.wrapping_add(0x4e4552));
        let head = uniform_matrix(&mut rng, TAGSET_SIZE, encoder.dim());
        NerModel { encoder, head }
    }

    /// `n × TAGSET_SIZE` logits.
    pub fn logits<S: AsRef<str>>(&self, words: &[S]) -> Result<Array2<f64>> {
        let enc = self.encoder.encode(words)?;
        Ok(word_rows(&enc).dot(&self.head.t()))
    }

    /// Accumulates gradients of the summed per-word cross-entropy into
    /// `grads` and returns `(loss_sum, words)`.
    pub fn accumulate(
        &self,
        sentence: &Sentence,
        dropout: f64,
        rng: &mut ChaCha8Rng,
        grads: &mut NerModel,
    ) -> Result<(f64, usize)> {
        let gold = gold_tags(sentence)?;
        let trace = self.encoder.forward(&sentence.forms())?;
        let n = sentence.len();
        let mask = dropout_mask(rng, n, self.encoder.dim(), dropout);
        let mut e = word_rows(&trace.output).to_owned();
        if let Some(m) = &mask {
            e *= m;
        }
        let logits = e.dot(&self.head.t());
        let mut d_e = Array2::<f64>::zeros(e.raw_dim());
        let mut loss = 0.0;
        for i in 0..n {
            let (l, g) = softmax_cross_entropy(logits.row(i), gold[i].id());
            loss += l;
            outer_add(&mut grads.head, &g.view(), &e.row(i));
            d_e.row_mut(i).assign(&self.head.t().dot(&g));
        }
        if let Some(m) = &mask {
            d_e *= m;
        }
        let mut d_out = Array2::<f64>::zeros(trace.output.raw_dim());
        d_out.slice_mut(ndarray::s![1.., ..]).assign(&d_e);
        self.encoder.backward(&trace, &d_out, &mut grads.encoder);
        Ok((loss, n))
    }

    /// Tags a sentence, returning repaired BIOES tags.
    pub fn predict<S: AsRef<str>>(&self, words: &[S]) -> Result<Vec<NerTag>> {
        Ok(ner_decode(&self.logits(words)?))
    }
}

fn word_rows(enc: &Array2<f64>) -> ndarray::ArrayView2<'_, f64> {
    enc.slice(ndarray::s![1.., ..])
}

fn gold_tags(sentence: &Sentence) -> Result<Vec<NerTag>> {
    sentence
        .tokens
        .iter()
        .map(|t| {
            let tag = t
                .ner
                .as_deref()
                .ok_or_else(|| Error::MissingGold(format!("NER tag of word {}", t.index)))?;
            tag.parse().map_err(|_| Error::UnknownLabel {
                head: "NER".to_owned(),
                label: tag.to_owned(),
            })
        })
        .collect()
}

/// Per-word argmax (ties to the lowest id) followed by [`repair`].
pub fn ner_decode(logits: &Array2<f64>) -> Vec<NerTag> {
    let raw: Vec<NerTag> = logits
        .rows()
        .into_iter()
        .map(|row| NerTag::from_id(argmax(row)))
        .collect();
    repair(&raw)
}

/// Summed cross-entropy of gold tags under `logits`.
pub fn ner_loss(logits: &Array2<f64>, gold: &Sentence) -> Result<f64> {
    let tags = gold_tags(gold)?;
    if tags.len() != logits.nrows() {
        return Err(Error::LengthMismatch {
            left: logits.nrows(),
            right: tags.len(),
        });
    }
    Ok(tags
        .iter()
        .enumerate()
        .map(|(i, t)| softmax_cross_entropy(logits.row(i), t.id()).0)
        .sum())
}

impl Parameters for NerModel {
    fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        let mut out = self.encoder.tensors();
        out.push(view("ner.head", &self.head));
        out
    }

    fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>> {
        let mut out = self.encoder.tensors_mut();
        out.push(self.head.view_mut().into_dyn());
        out
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    use super::*;
    use crate::doc::Token;
    use crate::encoder::{EncoderConfig, SubwordVocab};

    fn t(s: &str) -> NerTag {
        s.parse().unwrap()
    }

    fn tags(s: &str) -> Vec<NerTag> {
        s.split_whitespace().map(t).collect()
    }

    #[test]
    fn tagset() {
        assert_eq!(TAGSET_SIZE, 73);
        for id in 0..TAGSET_SIZE {
            let tag = NerTag::from_id(id);
            assert_eq!(tag.id(), id);
            assert_eq!(tag.to_string().parse::<NerTag>(), Ok(tag));
        }
        assert!("B-CITY".parse::<NerTag>().is_err());
        assert!("X-ORG".parse::<NerTag>().is_err());
    }

    #[test]
    fn worked_example_span() {
        let seq = tags("O S-ORG O O S-GPE O O O O O");
        let spans = spans_from_tags(0, &repair(&seq));
        assert_eq!(
            spans[0],
            EntitySpan {
                sentence: 0,
                start: 2,
                end: 2,
                entity_type: EntityType::ORG
            }
        );
        assert!(spans_from_tags(0, &tags("O O O")).is_empty());
    }

    /// Regex-style scanner over the tag string, independent of the state
    /// machine in `spans_from_tags`.
    fn scan(seq: &[NerTag]) -> Vec<(usize, usize, EntityType)> {
        let s: Vec<String> = seq.iter().map(|t| t.to_string()).collect();
        let mut out = Vec::new();
        let mut i = 0;
        while i < s.len() {
            if let Some(ty) = s[i].strip_prefix("S-") {
                out.push((i + 1, i + 1, ty.parse().unwrap()));
            } else if let Some(ty) = s[i].strip_prefix("B-") {
                let mut j = i + 1;
                while j < s.len() && s[j] == format!("I-{ty}") {
                    j += 1;
                }
                if j < s.len() && s[j] == format!("E-{ty}") {
                    out.push((i + 1, j + 1, ty.parse().unwrap()));
                    i = j;
                }
            }
            i += 1;
        }
        out
    }

    #[test]
    fn multiword_spans() {
        let seq = tags("B-GPE E-GPE S-LOC");
        let spans: Vec<_> = spans_from_tags(0, &seq)
            .iter()
            .map(|s| (s.start, s.end, s.entity_type))
            .collect();
        assert_eq!(spans, vec![(1, 2, EntityType::GPE), (3, 3, EntityType::LOC)]);
        assert_eq!(spans, scan(&seq));
    }

    #[test]
    fn repairs() {
        assert_eq!(repair(&tags("I-ORG I-ORG O")), tags("B-ORG E-ORG O"));
        assert_eq!(repair(&tags("O E-PERSON")), tags("O S-PERSON"));
        assert_eq!(repair(&tags("B-ORG I-ORG")), tags("B-ORG E-ORG"));
        assert_eq!(repair(&tags("B-ORG")), tags("S-ORG"));
        assert_eq!(repair(&tags("B-ORG I-GPE E-GPE")), tags("S-ORG B-GPE E-GPE"));
        assert_eq!(repair(&tags("B-ORG E-GPE")), tags("S-ORG S-GPE"));
        assert_eq!(repair(&tags("B-ORG S-LOC")), tags("S-ORG S-LOC"));
        assert_eq!(repair(&[]), vec![]);
    }

    #[test]
    fn f1_worked_example() {
        let g = |s, e| EntitySpan {
            sentence: 0,
            start: s,
            end: e,
            entity_type: EntityType::PERSON,
        };
        let gold = vec![g(1, 1), g(3, 4), g(6, 6)];
        let pred = vec![g(1, 1), g(3, 3)];
        let r = entity_f1(&pred, &gold);
        assert_abs_diff_eq!(r.micro.precision, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(r.micro.recall, 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.micro.f1, 0.4, epsilon = 1e-15);

        let r = entity_f1(&gold, &gold);
        assert_eq!(r.micro.f1, 1.0);
        assert_eq!(r.macro_f1, 1.0);

        let r = entity_f1(&[], &gold);
        assert_eq!(r.micro.recall, 0.0);
        assert_eq!(r.micro.f1, 0.0);
        assert_eq!(r.macro_f1, 0.0);
    }

    #[test]
    fn macro_ignores_unsupported_types() {
        let span = |ty| EntitySpan {
            sentence: 0,
            start: 1,
            end: 1,
            entity_type: ty,
        };
        let gold = vec![span(EntityType::ORG)];
        let pred = vec![span(EntityType::ORG)];
        assert_eq!(entity_f1(&pred, &gold).macro_f1, 1.0);

        let r = entity_f1_filtered(
            &[span(EntityType::DATE)],
            &[span(EntityType::DATE)],
            &EntityType::SHARED_SIX,
        );
        assert!(r.per_type.is_empty());
    }

    #[test]
    fn standoff_round_trip() {
        let spans = vec![
            EntitySpan {
                sentence: 0,
                start: 2,
                end: 2,
                entity_type: EntityType::ORG,
            },
            EntitySpan {
                sentence: 3,
                start: 1,
                end: 4,
                entity_type: EntityType::WORK_OF_ART,
            },
        ];
        let text = spans_to_standoff(&spans);
        assert_eq!(text, "0\t2\t2\tORG\n3\t1\t4\tWORK_OF_ART\n");
        assert_eq!(spans_from_standoff(&text).unwrap(), spans);
        assert!(spans_from_standoff("0\t2\tORG").is_err());
    }

    fn sentence(words: &[(&str, &str)]) -> Sentence {
        Sentence::new(
            words
                .iter()
                .enumerate()
                .map(|(i, (w, tag))| {
                    let mut t = Token::new(i + 1, *w);
                    t.ner = Some(tag.to_string());
                    t
                })
                .collect(),
        )
    }

    fn small_model(dim: usize) -> NerModel {
        let vocab = SubwordVocab::from_pieces(["α", "β", "γ"]);
        NerModel::new(EncoderModel::new(
            EncoderConfig {
                dim,
                layers: 1,
                max_len: 16,
                seed: 9,
            },
            vocab,
        ))
    }

    #[test]
    fn uniform_logits_loss() {
        let s = sentence(&[("α", "O"), ("β", "S-ORG")]);
        let logits = Array2::zeros((2, TAGSET_SIZE));
        assert_abs_diff_eq!(ner_loss(&logits, &s).unwrap(), 2.0 * (73f64).ln(), epsilon = 1e-12);
        let mut peaked = Array2::zeros((2, TAGSET_SIZE));
        peaked[[0, 0]] = 1e4;
        peaked[[1, NerTag::S(EntityType::ORG).id()]] = 1e4;
        assert!(ner_loss(&peaked, &s).unwrap() < 1e-12);
    }

    #[test]
    fn loss_matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let logits: Array2<f64> = Array2::from_shape_simple_fn((3, TAGSET_SIZE), || rng.random_range(-2.0..2.0));
        let s = sentence(&[("α", "B-LOC"), ("β", "E-LOC"), ("γ", "O")]);
        let oracle: f64 = [NerTag::B(EntityType::LOC).id(), NerTag::E(EntityType::LOC).id(), 0]
            .iter()
            .enumerate()
            .map(|(i, &g)| {
                let z: f64 = (0..TAGSET_SIZE).map(|k| logits[[i, k]].exp()).sum();
                -(logits[[i, g]].exp() / z).ln()
            })
            .sum();
        assert_abs_diff_eq!(ner_loss(&logits, &s).unwrap(), oracle, epsilon = 1e-6);
    }

    #[test]
    fn gradient_check() {
        let model = small_model(8);
        let s = sentence(&[("αβ", "B-ORG"), ("γ", "E-ORG"), ("βα", "S-DATE")]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut grads = model.zeros_like();
        model.accumulate(&s, 0.0, &mut rng, &mut grads).unwrap();
        let analytic = grads.flatten();
        let loss = |m: &NerModel| ner_loss(&m.logits(&s.forms()).unwrap(), &s).unwrap();
        let h = 1e-4;
        for k in 0..model.n_params() {
            let mut p = model.clone();
            p.with_scalar_mut(k, |v| *v += h);
            let mut m = model.clone();
            m.with_scalar_mut(k, |v| *v -= h);
            let numeric = (loss(&p) - loss(&m)) / (2.0 * h);
            let diff = (numeric - analytic[k]).abs();
            assert!(diff <= 1e-3 * numeric.abs().max(analytic[k].abs()) || diff <= 1e-8);
        }
    }

    #[test]
    fn unknown_gold_tag() {
        let mut s = sentence(&[("α", "O")]);
        s.tokens[0].ner = Some("B-CITY".into());
        let logits = Array2::zeros((1, TAGSET_SIZE));
        assert!(matches!(ner_loss(&logits, &s), Err(Error::UnknownLabel { .. })));
    }

    fn spans_strategy() -> impl Strategy<Value = (usize, Vec<EntitySpan>)> {
        (1usize..15, prop::collection::vec((0usize..3, 0usize..18), 0..8)).prop_map(|(len, raw)| {
            let mut spans = Vec::new();
            let mut pos = 0;
            for (gap_len, ty) in raw {
                let start = pos + gap_len % 2;
                let end = start + gap_len;
                if end >= len {
                    break;
                }
                spans.push(EntitySpan {
                    sentence: 0,
                    start: start + 1,
                    end: end + 1,
                    entity_type: EntityType::ALL[ty],
                });
                pos = end + 1;
            }
            (len, spans)
        })
    }

    proptest! {
        #[test]
        fn spans_tags_round_trip((len, spans) in spans_strategy()) {
            let tags = tags_from_spans(len, &spans);
            prop_assert_eq!(repair(&tags), tags.clone());
            prop_assert_eq!(spans_from_tags(0, &tags), spans.clone());
            prop_assert_eq!(entity_f1(&spans, &spans).micro.f1, 1.0);
        }

        #[test]
        fn repaired_spans_never_overlap(ids in prop::collection::vec(0usize..TAGSET_SIZE, 0..20)) {
            let raw: Vec<NerTag> = ids.into_iter().map(NerTag::from_id).collect();
            let fixed = repair(&raw);
            prop_assert_eq!(repair(&fixed), fixed.clone());
            let spans = spans_from_tags(0, &fixed);
            for w in spans.windows(2) {
                prop_assert!(w[0].end < w[1].start);
            }
            prop_assert_eq!(tags_from_spans(fixed.len(), &spans), fixed);
        }

        #[test]
        fn decode_matches_scan(seed in any::<u64>(), n in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let logits = Array2::from_shape_simple_fn((n, TAGSET_SIZE), || rng.random_range(-1.0..1.0));
            let raw: Vec<NerTag> = (0..n)
                .map(|i| {
                    let mut best = 0;
                    for k in 1..TAGSET_SIZE {
                        if logits[[i, k]] > logits[[i, best]] {
                            best = k;
                        }
                    }
                    NerTag::from_id(best)
                })
                .collect();
            prop_assert_eq!(ner_decode(&logits), repair(&raw));
        }
    }
}
