//! Joint UPOS and morphological tagging: one shared encoder and 17 linear
//! classification heads, decoded independently by argmax.

use ndarray::{s, Array2, ArrayViewD, ArrayViewMutD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::doc::{MorphCategory, MorphFeatures, Sentence, UPOS_TAGS};
use crate::encoder::EncoderModel;
use crate::error::{Error, Result};
use crate::nn::{argmax, dropout_mask, softmax_cross_entropy, uniform_matrix, view, Parameters};
use crate::train::metrics::micro_macro_f1;

/// Label of a morphological head for words without that category.
pub const NOT_APPLICABLE: &str = "N/A";

/// Number of heads: UPOS plus one per morphological category.
pub const N_HEADS: usize = 1 + MorphCategory::ALL.len();

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadLabels {
    pub name: String,
    pub labels: Vec<String>,
}

impl HeadLabels {
    pub fn id(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Label vocabularies of all heads: UPOS first, then the morphological
/// categories in [`MorphCategory::ALL`] order.
pub fn label_vocabularies<'a, I>(sentences: I) -> Vec<HeadLabels>
where
    I: IntoIterator<Item = &'a Sentence>,
{
    let mut values: Vec<std::collections::BTreeSet<String>> = vec![Default::default(); MorphCategory::ALL.len()];
    for sentence in sentences {
        for token in &sentence.tokens {
            for (cat, value) in token.feats.iter() {
                values[cat as usize].insert(value.to_owned());
            }
        }
    }
    let mut heads = vec![HeadLabels {
        name: "UPOS".to_owned(),
        labels: UPOS_TAGS.iter().map(|t| t.to_string()).collect(),
    }];
    for (cat, vals) in MorphCategory::ALL.iter().zip(values) {
        let mut labels = vec![NOT_APPLICABLE.to_owned()];
        labels.extend(vals);
        heads.push(HeadLabels {
            name: cat.name().to_owned(),
            labels,
        });
    }
    heads
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaggerModel {
    pub encoder: EncoderModel,
    pub labels: Vec<HeadLabels>,
    /// One `|labels| × d` matrix per head.
    pub heads: Vec<Array2<f64>>,
}

/// Per-head logits, each `n × |labels|`.
pub type TagLogits = Vec<Array2<f64>>;

impl TaggerModel {
    pub fn new(encoder: EncoderModel, labels: Vec<HeadLabels>) -> Result<Self> {
        if labels.len() != N_HEADS {
            return Err(Error::InvalidModel(format!(
                "tagger needs {N_HEADS} heads, got {}",
                labels.len()
            )));
        }
        if let Some(h) = labels.iter().find(|h| h.labels.is_empty()) {
            return Err(Error::InvalidModel(format!("head {} has no labels", h.name)));
        }
        if let Some(bad) = labels[0].labels.iter().find(|l| !UPOS_TAGS.contains(&l.as_str())) {
            return Err(Error::InvalidModel(format!("`{bad}` is not a UPOS tag")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(encoder.config.seed.wrapping_add(0x544147));
        let heads = labels
            .iter()
            .map(|h| uniform_matrix(&mut rng, h.labels.len(), encoder.dim()))
            .collect();
        Ok(TaggerModel { encoder, labels, heads })
    }

    pub fn tag_logits<S: AsRef<str>>(&self, words: &[S]) -> Result<TagLogits> {
        let enc = self.encoder.encode(words)?;
        let e = enc.slice(s![1.., ..]);
        Ok(self.heads.iter().map(|w| e.dot(&w.t())).collect())
    }

    /// UPOS and features per word. Heads predicting N/A add no feature.
    pub fn tag_decode(&self, logits: &TagLogits) -> Vec<(String, MorphFeatures)> {
        decode_ids(logits)
            .into_iter()
            .map(|ids| {
                let upos = self.labels[0].labels[ids[0]].clone();
                let feats = MorphCategory::ALL
                    .iter()
                    .zip(&ids[1..])
                    .zip(&self.labels[1..])
                    .filter(|((_, &id), head)| head.labels[id] != NOT_APPLICABLE)
                    .map(|((&cat, &id), head)| (cat, head.labels[id].clone()))
                    .collect();
                (upos, feats)
            })
            .collect()
    }

    /// Gold label id per word and head.
    fn gold_ids(&self, sentence: &Sentence) -> Result<Vec<Vec<usize>>> {
        sentence
            .tokens
            .iter()
            .map(|t| {
                let upos = t
                    .upos
                    .as_deref()
                    .ok_or_else(|| Error::MissingGold(format!("UPOS of word {}", t.index)))?;
                let mut ids = vec![lookup(&self.labels[0], upos)?];
                for (cat, head) in MorphCategory::ALL.iter().zip(&self.labels[1..]) {
                    let value = t.feats.get(*cat).unwrap_or(NOT_APPLICABLE);
                    ids.push(lookup(head, value)?);
                }
                Ok(ids)
            })
            .collect()
    }

    /// Summed cross-entropy over words and heads.
    pub fn tag_loss(&self, logits: &TagLogits, gold: &Sentence) -> Result<f64> {
        let ids = self.gold_ids(gold)?;
        if logits.iter().any(|l| l.nrows() != ids.len()) {
            return Err(Error::LengthMismatch {
                left: logits[0].nrows(),
                right: ids.len(),
            });
        }
        let mut loss = 0.0;
        for (i, word) in ids.iter().enumerate() {
            for (h, &g) in word.iter().enumerate() {
                loss += softmax_cross_entropy(logits[h].row(i), g).0;
            }
        }
        Ok(loss)
    }

    /// Accumulates gradients of the summed loss into `grads` and returns
    /// `(loss_sum, words)`.
    pub fn accumulate(
        &self,
        sentence: &Sentence,
        dropout: f64,
        rng: &mut ChaCha8Rng,
        grads: &mut TaggerModel,
    ) -> Result<(f64, usize)> {
        let ids = self.gold_ids(sentence)?;
        let trace = self.encoder.forward(&sentence.forms())?;
        let n = sentence.len();
        let mut e = trace.output.slice(s![1.., ..]).to_owned();
        let mask = dropout_mask(rng, n, self.encoder.dim(), dropout);
        if let Some(m) = &mask {
            e *= m;
        }
        let mut d_e = Array2::<f64>::zeros(e.raw_dim());
        let mut loss = 0.0;
        for (h, w) in self.heads.iter().enumerate() {
            let logits = e.dot(&w.t());
            let mut d_logits = Array2::<f64>::zeros(logits.raw_dim());
            for i in 0..n {
                let (l, g) = softmax_cross_entropy(logits.row(i), ids[i][h]);
                loss += l;
                d_logits.row_mut(i).assign(&g);
            }
            grads.heads[h] += &d_logits.t().dot(&e);
            d_e += &d_logits.dot(w);
        }
        if let Some(m) = &mask {
            d_e *= m;
        }
        let mut d_out = Array2::<f64>::zeros(trace.output.raw_dim());
        d_out.slice_mut(s![1.., ..]).assign(&d_e);
        self.encoder.backward(&trace, &d_out, &mut grads.encoder);
        Ok((loss, n))
    }

    /// Fills `upos` and `feats` of every token.
    pub fn annotate(&self, sentence: &mut Sentence) -> Result<()> {
        let logits = self.tag_logits(&sentence.forms())?;
        for (token, (upos, feats)) in sentence.tokens.iter_mut().zip(self.tag_decode(&logits)) {
            token.upos = Some(upos);
            token.feats = feats;
        }
        Ok(())
    }

    /// Scores predictions on gold sentences.
    pub fn evaluate(&self, gold: &[Sentence]) -> Result<TaggerScores> {
        let mut pred_ids: Vec<Vec<usize>> = vec![Vec::new(); N_HEADS];
        let mut gold_ids: Vec<Vec<usize>> = vec![Vec::new(); N_HEADS];
        for sentence in gold {
            let ids = self.gold_ids(sentence)?;
            let decoded = decode_ids(&self.tag_logits(&sentence.forms())?);
            for (g, p) in ids.iter().zip(&decoded) {
                for h in 0..N_HEADS {
                    gold_ids[h].push(g[h]);
                    pred_ids[h].push(p[h]);
                }
            }
        }
        let per_head = (0..N_HEADS)
            .map(|h| {
                let (micro, macro_f1) = micro_macro_f1(&pred_ids[h], &gold_ids[h])?;
                Ok((self.labels[h].name.clone(), micro, macro_f1))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TaggerScores { per_head })
    }
}

fn lookup(head: &HeadLabels, label: &str) -> Result<usize> {
    head.id(label).ok_or_else(|| Error::UnknownLabel {
        head: head.name.clone(),
        label: label.to_owned(),
    })
}

/// Argmax label id per word and head; ties go to the lowest id.
pub fn decode_ids(logits: &TagLogits) -> Vec<Vec<usize>> {
    let n = logits.first().map_or(0, |l| l.nrows());
    (0..n)
        .map(|i| logits.iter().map(|l| argmax(l.row(i))).collect())
        .collect()
}

/// Micro- and macro-F1 for each head, UPOS first.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TaggerScores {
    pub per_head: Vec<(String, f64, f64)>,
}

impl TaggerScores {
    pub fn upos_micro(&self) -> f64 {
        self.per_head[0].1
    }

    pub fn upos_macro(&self) -> f64 {
        self.per_head[0].2
    }

    /// Mean macro-F1 over all heads; the model selection metric.
    pub fn mean_macro(&self) -> f64 {
        self.per_head.iter().map(|h| h.2).sum::<f64>() / self.per_head.len() as f64
    }
}

impl Parameters for TaggerModel {
    fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        let mut out = self.encoder.tensors();
        for (head, w) in self.labels.iter().zip(&self.heads) {
            out.push(view(&format!("tagger.{}", head.name), w));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>> {
        let mut out = self.encoder.tensors_mut();
        out.extend(self.heads.iter_mut().map(|w| w.view_mut().into_dyn()));
        out
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::Rng;

    use super::*;
    use crate::doc::Token;
    use crate::encoder::{EncoderConfig, SubwordVocab};

    fn word(i: usize, form: &str, upos: &str, feats: &[(MorphCategory, &str)]) -> Token {
        let mut t = Token::new(i, form);
        t.upos = Some(upos.to_owned());
        for (c, v) in feats {
            t.feats.insert(*c, *v);
        }
        t
    }

    fn sample() -> Sentence {
        use MorphCategory::*;
        Sentence::new(vec![
            word(1, "αβ", "DET", &[(Case, "Nom"), (Gender, "Fem")]),
            word(2, "γα", "NOUN", &[(Case, "Nom"), (Number, "Sing")]),
            word(3, "β", "VERB", &[(Tense, "Past"), (Number, "Sing")]),
        ])
    }

    fn model(dim: usize) -> TaggerModel {
        let vocab = SubwordVocab::from_pieces(["α", "β", "γ"]);
        let enc = EncoderModel::new(
            EncoderConfig {
                dim,
                layers: 1,
                max_len: 16,
                seed: 5,
            },
            vocab,
        );
        TaggerModel::new(enc, label_vocabularies([&sample()])).unwrap()
    }

    #[test]
    fn vocabularies() {
        let labels = label_vocabularies([&sample()]);
        assert_eq!(labels.len(), 17);
        assert_eq!(labels[0].labels.len(), 17);
        assert_eq!(labels[1].name, "Case");
        assert_eq!(labels[1].labels, vec!["N/A", "Nom"]);
        assert_eq!(labels[16].labels, vec!["N/A"]);
    }

    #[test]
    fn rejects_bad_heads() {
        let vocab = SubwordVocab::from_pieces(["α"]);
        let enc = EncoderModel::new(EncoderConfig::default(), vocab);
        let mut labels = label_vocabularies([&sample()]);
        labels[0].labels.push("NOUNISH".into());
        assert!(TaggerModel::new(enc.clone(), labels).is_err());
        assert!(TaggerModel::new(enc, vec![]).is_err());
    }

    #[test]
    fn zero_heads_zero_logits() {
        let mut m = model(4);
        for w in &mut m.heads {
            w.fill(0.0);
        }
        let logits = m.tag_logits(&["αβ", "γ"]).unwrap();
        assert_eq!(logits.len(), 17);
        assert!(logits.iter().all(|l| l.nrows() == 2 && l.iter().all(|&x| x == 0.0)));
        let decoded = decode_ids(&logits);
        assert!(decoded.iter().flatten().all(|&id| id == 0));
        let tags = m.tag_decode(&logits);
        assert_eq!(tags[0].0, "ADJ");
        assert!(tags[0].1.is_empty());
    }

    #[test]
    fn hand_set_logits() {
        let mut m = model(2);
        let e = m.encoder.encode(&["αβ"]).unwrap();
        m.heads[1] = array![[1.0, 0.0], [0.5, -2.0]];
        let logits = m.tag_logits(&["αβ"]).unwrap();
        let (e0, e1) = (e[[1, 0]], e[[1, 1]]);
        assert_abs_diff_eq!(logits[1][[0, 0]], e0, epsilon = 1e-12);
        assert_abs_diff_eq!(logits[1][[0, 1]], 0.5 * e0 - 2.0 * e1, epsilon = 1e-12);
    }

    #[test]
    fn batch_independence() {
        let m = model(4);
        let alone = m.tag_logits(&["γα", "β"]).unwrap();
        let batch = m.encoder.encode_batch(&[vec!["αβ"], vec!["γα", "β"]]).unwrap();
        let again = batch[1].slice(s![1.., ..]).dot(&m.heads[0].t());
        assert_eq!(alone[0], again);
    }

    #[test]
    fn loss_values() {
        let m = model(4);
        let s = sample();
        let zero: TagLogits = m.labels.iter().map(|h| Array2::zeros((3, h.labels.len()))).collect();
        let expected: f64 = m.labels.iter().map(|h| 3.0 * (h.labels.len() as f64).ln()).sum();
        assert_abs_diff_eq!(m.tag_loss(&zero, &s).unwrap(), expected, epsilon = 1e-10);

        let gold = m.gold_ids(&s).unwrap();
        let mut peaked = zero.clone();
        for (i, ids) in gold.iter().enumerate() {
            for (h, &g) in ids.iter().enumerate() {
                peaked[h][[i, g]] = 1e4;
            }
        }
        assert!(m.tag_loss(&peaked, &s).unwrap() < 1e-9);
    }

    #[test]
    fn loss_matches_scalar_oracle() {
        let m = model(4);
        let s = sample();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let logits: TagLogits = m
            .labels
            .iter()
            .map(|h| Array2::from_shape_simple_fn((3, h.labels.len()), || rng.random_range(-3.0..3.0)))
            .collect();
        let gold = m.gold_ids(&s).unwrap();
        let mut oracle = 0.0;
        for i in 0..3 {
            for h in 0..17 {
                let row: Vec<f64> = logits[h].row(i).to_vec();
                let z: f64 = row.iter().map(|x| x.exp()).sum();
                oracle -= (row[gold[i][h]].exp() / z).ln();
            }
        }
        assert_abs_diff_eq!(m.tag_loss(&logits, &s).unwrap(), oracle, epsilon = 1e-6);
    }

    #[test]
    fn unknown_gold_label() {
        let m = model(4);
        let mut s = sample();
        s.tokens[0].feats.insert(MorphCategory::Case, "Voc");
        let err = m.tag_loss(&m.tag_logits(&s.forms()).unwrap(), &s).unwrap_err();
        assert!(err.to_string().contains("Case") && err.to_string().contains("Voc"));
        s.tokens[0].upos = None;
        assert!(matches!(m.gold_ids(&s), Err(Error::MissingGold(_))));
    }

    fn loss_of(m: &TaggerModel, s: &Sentence) -> f64 {
        m.tag_loss(&m.tag_logits(&s.forms()).unwrap(), s).unwrap()
    }

    #[test]
    fn gradient_check() {
        let m = model(8);
        let s = sample();
        let mut grads = m.zeros_like();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (loss, n) = m.accumulate(&s, 0.0, &mut rng, &mut grads).unwrap();
        assert_eq!(n, 3);
        assert_abs_diff_eq!(loss, loss_of(&m, &s), epsilon = 1e-9);
        let analytic = grads.flatten();
        let h = 1e-4;
        for k in 0..m.n_params() {
            let mut p = m.clone();
            p.with_scalar_mut(k, |v| *v += h);
            let mut q = m.clone();
            q.with_scalar_mut(k, |v| *v -= h);
            let numeric = (loss_of(&p, &s) - loss_of(&q, &s)) / (2.0 * h);
            let diff = (numeric - analytic[k]).abs();
            assert!(
                diff <= 1e-3 * numeric.abs().max(analytic[k].abs()) || diff <= 1e-8,
                "param {k}: {numeric} vs {}",
                analytic[k]
            );
        }
    }

    #[test]
    fn descends_along_negative_gradient() {
        let m = model(8);
        let s = sample();
        let mut grads = m.zeros_like();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        m.accumulate(&s, 0.0, &mut rng, &mut grads).unwrap();
        let mut prev = loss_of(&m, &s);
        for step in 1..=5 {
            let mut moved = m.clone();
            moved.scaled_add(-1e-4 * step as f64, &grads);
            let now = loss_of(&moved, &s);
            assert!(now < prev);
            prev = now;
        }
    }

    proptest! {
        #[test]
        fn decode_matches_scan(seed in any::<u64>(), n in 1usize..5) {
            let m = model(4);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let logits: TagLogits = m.labels.iter()
                .map(|h| Array2::from_shape_simple_fn((n, h.labels.len()), || rng.random_range(-1.0..1.0)))
                .collect();
            let ids = decode_ids(&logits);
            for i in 0..n {
                for h in 0..17 {
                    let row = logits[h].row(i);
                    let mut best = 0;
                    for k in 1..row.len() {
                        if row[k] > row[best] { best = k; }
                    }
                    prop_assert_eq!(ids[i][h], best);
                }
            }
        }

        #[test]
        fn shift_invariance(seed in any::<u64>(), c in -50.0f64..50.0) {
            let m = model(4);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut logits: TagLogits = m.labels.iter()
                .map(|h| Array2::from_shape_simple_fn((2, h.labels.len()), || rng.random_range(-1.0..1.0)))
                .collect();
            let before = m.tag_decode(&logits);
            logits[3].row_mut(1).mapv_inplace(|x| x + c);
            prop_assert_eq!(m.tag_decode(&logits), before);
        }
    }
}
