//! Biaffine dependency parser: four projections of the encoder output, a
//! biaffine arc scorer, a biaffine label scorer and a joint loss.

mod mst;

pub use mst::{decode_mst, is_tree, tree_score};

use ndarray::{s, Array1, Array2, Array3, ArrayViewD, ArrayViewMutD, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::doc::{Doc, Sentence};
use crate::encoder::{outer_add, EncoderModel};
use crate::error::{Error, Result};
use crate::nn::{argmax, dropout_mask, softmax_cross_entropy, uniform_matrix, uniform_vector, view, Parameters};
use crate::train::metrics::uas_las_docs;

/// What the linear term of the label scorer sees.
#[derive(Clone, Copy, Debug, Default, Eq, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelConcat {
    /// The dependent's rel-head and rel-dep vectors.
    #[default]
    AsPrinted,
    /// The head's rel-head vector and the dependent's rel-dep vector.
    HeadDep,
}

#[derive(Clone, Copy, Debug, Default, Eq, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decoder {
    #[default]
    Greedy,
    Mst,
}

impl std::str::FromStr for Decoder {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "greedy" => Ok(Decoder::Greedy),
            "mst" => Ok(Decoder::Mst),
            other => Err(format!("unknown decoder `{other}`, expected greedy or mst")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParserConfig {
    pub proj_dim: usize,
    pub rel_concat: RelConcat,
    pub decoder: Decoder,
}

impl Default for ParserConfig {
    fn default() -> Self {
        ParserConfig {
            proj_dim: 64,
            rel_concat: RelConcat::AsPrinted,
            decoder: Decoder::Greedy,
        }
    }
}

/// Arc scores: row `i - 1` holds dependent word `i`, column `j` candidate
/// head `j` (0 is the root). Self-arcs are `-inf`.
#[derive(Clone, Debug, PartialEq)]
pub struct ArcScores {
    matrix: Array2<f64>,
}

impl ArcScores {
    /// Wraps an `n × (n + 1)` matrix, masking self-arcs.
    pub fn from_matrix(mut matrix: Array2<f64>) -> Self {
        assert_eq!(matrix.ncols(), matrix.nrows() + 1, "arc scores must be n × (n + 1)");
        for i in 0..matrix.nrows() {
            matrix[[i, i + 1]] = f64::NEG_INFINITY;
        }
        ArcScores { matrix }
    }

    /// Number of words.
    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }

    /// Score of head `head` for word `dep` (1-based).
    pub fn get(&self, dep: usize, head: usize) -> f64 {
        self.matrix[[dep - 1, head]]
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }
}

/// Highest-scoring head of every word; ties go to the lowest index. The
/// result may contain cycles.
pub fn decode_greedy(scores: &ArcScores) -> Vec<usize> {
    scores.matrix.rows().into_iter().map(argmax).collect()
}

/// Highest-scoring label per word from an `n × K` score matrix.
pub fn decode_rels(rel_scores: &Array2<f64>) -> Vec<usize> {
    rel_scores.rows().into_iter().map(argmax).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParserModel {
    pub encoder: EncoderModel,
    pub config: ParserConfig,
    pub labels: Vec<String>,
    pub w_arc_head: Array2<f64>,
    pub w_arc_dep: Array2<f64>,
    pub w_rel_head: Array2<f64>,
    pub w_rel_dep: Array2<f64>,
    pub w_arc: Array2<f64>,
    pub b_arc: Array1<f64>,
    /// `K × d' × d'`
    pub u_rel: Array3<f64>,
    /// `K × 2d'`
    pub w_rel: Array2<f64>,
    pub b_rel: Array1<f64>,
}

/// Projected representations, each `(n + 1) × d'`.
struct Projections {
    arc_head: Array2<f64>,
    arc_dep: Array2<f64>,
    rel_head: Array2<f64>,
    rel_dep: Array2<f64>,
}

impl ParserModel {
    pub fn new(encoder: EncoderModel, config: ParserConfig, labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidModel("parser needs at least one label".into()));
        }
        if config.proj_dim == 0 {
            return Err(Error::InvalidModel("projection width must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(encoder.config.seed.wrapping_add(0x444550));
        let (d, p, k) = (encoder.dim(), config.proj_dim, labels.len());
        let w_arc_head = uniform_matrix(&mut rng, p, d);
        let w_arc_dep = uniform_matrix(&mut rng, p, d);
        let w_rel_head = uniform_matrix(&mut rng, p, d);
        let w_rel_dep = uniform_matrix(&mut rng, p, d);
        let w_arc = uniform_matrix(&mut rng, p, p);
        let b_arc = uniform_vector(&mut rng, p);
        let u_rel = uniform_matrix(&mut rng, k * p, p)
            .into_shape_with_order((k, p, p))
            .expect("shape matches");
        let w_rel = uniform_matrix(&mut rng, k, 2 * p);
        let b_rel = uniform_vector(&mut rng, k);
        Ok(ParserModel {
            encoder,
            config,
            labels,
            w_arc_head,
            w_arc_dep,
            w_rel_head,
            w_rel_dep,
            w_arc,
            b_arc,
            u_rel,
            w_rel,
            b_rel,
        })
    }

    /// Sorted relation labels found in the corpus.
    pub fn labels_from<'a, I: IntoIterator<Item = &'a Sentence>>(sentences: I) -> Vec<String> {
        let set: std::collections::BTreeSet<String> = sentences
            .into_iter()
            .flat_map(|s| s.tokens.iter().filter_map(|t| t.deprel.clone()))
            .collect();
        set.into_iter().collect()
    }

    fn project(&self, e: &Array2<f64>) -> Projections {
        Projections {
            arc_head: e.dot(&self.w_arc_head.t()),
            arc_dep: e.dot(&self.w_arc_dep.t()),
            rel_head: e.dot(&self.w_rel_head.t()),
            rel_dep: e.dot(&self.w_rel_dep.t()),
        }
    }

    /// `(arc_dep W_arcᵀ)` for all rows and the arc scores.
    fn arc_scores_from(&self, p: &Projections) -> (Array2<f64>, ArcScores) {
        let a = p.arc_dep.dot(&self.w_arc.t());
        let bias = p.arc_head.dot(&self.b_arc);
        let mut m = a.slice(s![1.., ..]).dot(&p.arc_head.t());
        m += &bias.view().insert_axis(Axis(0));
        (a, ArcScores::from_matrix(m))
    }

    fn rel_input(&self, p: &Projections, dep: usize, head: usize) -> Array1<f64> {
        let first = match self.config.rel_concat {
            RelConcat::AsPrinted => p.rel_head.row(dep),
            RelConcat::HeadDep => p.rel_head.row(head),
        };
        ndarray::concatenate![Axis(0), first, p.rel_dep.row(dep)]
    }

    /// Label scores for word `dep` attached to `head`, length `K`.
    fn rel_scores_at(&self, p: &Projections, dep: usize, head: usize) -> Array1<f64> {
        let hd = p.rel_dep.row(dep);
        let hh = p.rel_head.row(head);
        let x = self.rel_input(p, dep, head);
        let mut out = self.w_rel.dot(&x) + &self.b_rel;
        for (k, u) in self.u_rel.outer_iter().enumerate() {
            out[k] += hh.dot(&u.dot(&hd));
        }
        out
    }

    pub fn score_arcs<S: AsRef<str>>(&self, words: &[S]) -> Result<ArcScores> {
        let e = self.encoder.encode(words)?;
        Ok(self.arc_scores_from(&self.project(&e)).1)
    }

    /// `n × K` label scores of every word at the given heads.
    pub fn score_rels<S: AsRef<str>>(&self, words: &[S], heads: &[usize]) -> Result<Array2<f64>> {
        let e = self.encoder.encode(words)?;
        self.rel_scores_for(&self.project(&e), heads)
    }

    fn rel_scores_for(&self, p: &Projections, heads: &[usize]) -> Result<Array2<f64>> {
        let n = p.arc_head.nrows() - 1;
        if heads.len() != n {
            return Err(Error::LengthMismatch {
                left: heads.len(),
                right: n,
            });
        }
        let mut out = Array2::zeros((n, self.labels.len()));
        for (i, &h) in heads.iter().enumerate() {
            if h > n {
                return Err(Error::HeadOutOfRange {
                    word: i + 1,
                    gold: h,
                    len: n,
                });
            }
            out.row_mut(i).assign(&self.rel_scores_at(p, i + 1, h));
        }
        Ok(out)
    }

    /// Predicted heads and label ids.
    pub fn parse<S: AsRef<str>>(&self, words: &[S], decoder: Decoder) -> Result<(Vec<usize>, Vec<usize>)> {
        let e = self.encoder.encode(words)?;
        let p = self.project(&e);
        let (_, arcs) = self.arc_scores_from(&p);
        let heads = match decoder {
            Decoder::Greedy => decode_greedy(&arcs),
            Decoder::Mst => decode_mst(&arcs),
        };
        let rels = decode_rels(&self.rel_scores_for(&p, &heads)?);
        Ok((heads, rels))
    }

    /// Fills `head` and `deprel` of every token.
    pub fn annotate(&self, sentence: &mut Sentence, decoder: Decoder) -> Result<()> {
        let (heads, rels) = self.parse(&sentence.forms(), decoder)?;
        for ((token, h), r) in sentence.tokens.iter_mut().zip(heads).zip(rels) {
            token.head = Some(h);
            token.deprel = Some(self.labels[r].clone());
        }
        Ok(())
    }

    fn gold(&self, sentence: &Sentence) -> Result<(Vec<usize>, Vec<usize>)> {
        let n = sentence.len();
        let mut heads = Vec::with_capacity(n);
        let mut rels = Vec::with_capacity(n);
        for t in &sentence.tokens {
            let head = t
                .head
                .ok_or_else(|| Error::MissingGold(format!("head of word {}", t.index)))?;
            if head > n || head == t.index {
                return Err(Error::HeadOutOfRange {
                    word: t.index,
                    gold: head,
                    len: n,
                });
            }
            let label = t
                .deprel
                .as_deref()
                .ok_or_else(|| Error::MissingGold(format!("deprel of word {}", t.index)))?;
            let id = self
                .labels
                .iter()
                .position(|l| l == label)
                .ok_or_else(|| Error::UnknownLabel {
                    head: "DEPREL".into(),
                    label: label.to_owned(),
                })?;
            heads.push(head);
            rels.push(id);
        }
        Ok((heads, rels))
    }

    /// Arc cross-entropy plus label cross-entropy at the gold head, summed
    /// over words.
    pub fn parse_loss(&self, sentence: &Sentence) -> Result<f64> {
        let (heads, rels) = self.gold(sentence)?;
        let e = self.encoder.encode(&sentence.forms())?;
        let p = self.project(&e);
        let (_, arcs) = self.arc_scores_from(&p);
        let rel_scores = self.rel_scores_for(&p, &heads)?;
        Ok(loss_from_scores(&arcs, &rel_scores, &heads, &rels))
    }

    /// Accumulates gradients of the summed loss into `grads` and returns
    /// `(loss_sum, words)`.
    pub fn accumulate(
        &self,
        sentence: &Sentence,
        dropout: f64,
        rng: &mut ChaCha8Rng,
        grads: &mut ParserModel,
    ) -> Result<(f64, usize)> {
        let (heads, rels) = self.gold(sentence)?;
        let trace = self.encoder.forward(&sentence.forms())?;
        let n = sentence.len();
        let mut e = trace.output.clone();
        let mask = dropout_mask(rng, n + 1, self.encoder.dim(), dropout);
        if let Some(m) = &mask {
            e *= m;
        }
        let p = self.project(&e);
        let (a, arcs) = self.arc_scores_from(&p);
        let dp = self.config.proj_dim;

        let mut d_arc_head = Array2::<f64>::zeros(p.arc_head.raw_dim());
        let mut d_rel_head = Array2::<f64>::zeros(p.rel_head.raw_dim());
        let mut d_rel_dep = Array2::<f64>::zeros(p.rel_dep.raw_dim());
        let mut d_s = Array2::<f64>::zeros((n + 1, n + 1));
        let mut loss = 0.0;

        for i in 1..=n {
            let (l, g) = softmax_cross_entropy(arcs.matrix.row(i - 1), heads[i - 1]);
            loss += l;
            d_s.row_mut(i).assign(&g);

            let j = heads[i - 1];
            let scores = self.rel_scores_at(&p, i, j);
            let (l, g) = softmax_cross_entropy(scores.view(), rels[i - 1]);
            loss += l;
            let hd = p.rel_dep.row(i);
            let hh = p.rel_head.row(j);
            for (k, u) in self.u_rel.outer_iter().enumerate() {
                let gk = g[k];
                if gk == 0.0 {
                    continue;
                }
                let mut du = grads.u_rel.index_axis_mut(Axis(0), k);
                for r in 0..dp {
                    du.row_mut(r).scaled_add(gk * hh[r], &hd);
                }
                d_rel_head.row_mut(j).scaled_add(gk, &u.dot(&hd));
                d_rel_dep.row_mut(i).scaled_add(gk, &u.t().dot(&hh));
            }
            let x = self.rel_input(&p, i, j);
            outer_add(&mut grads.w_rel, &g.view(), &x.view());
            grads.b_rel += &g;
            let dx = self.w_rel.t().dot(&g);
            let first = match self.config.rel_concat {
                RelConcat::AsPrinted => i,
                RelConcat::HeadDep => j,
            };
            d_rel_head.row_mut(first).scaled_add(1.0, &dx.slice(s![..dp]));
            d_rel_dep.row_mut(i).scaled_add(1.0, &dx.slice(s![dp..]));
        }

        // S[i][j] = a_i · arc_head_j + arc_head_j · b_arc
        let d_a = d_s.dot(&p.arc_head);
        d_arc_head += &d_s.t().dot(&a);
        let col_sums = d_s.sum_axis(Axis(0));
        grads.b_arc += &p.arc_head.t().dot(&col_sums);
        for (j, &c) in col_sums.iter().enumerate() {
            d_arc_head.row_mut(j).scaled_add(c, &self.b_arc);
        }
        // a_i = W_arc arc_dep_i
        let d_arc_dep = d_a.dot(&self.w_arc);
        grads.w_arc += &d_a.t().dot(&p.arc_dep);

        let mut d_e = Array2::<f64>::zeros(e.raw_dim());
        for (dh, w, gw) in [
            (&d_arc_head, &self.w_arc_head, &mut grads.w_arc_head),
            (&d_arc_dep, &self.w_arc_dep, &mut grads.w_arc_dep),
            (&d_rel_head, &self.w_rel_head, &mut grads.w_rel_head),
            (&d_rel_dep, &self.w_rel_dep, &mut grads.w_rel_dep),
        ] {
            *gw += &dh.t().dot(&e);
            d_e += &dh.dot(w);
        }
        if let Some(m) = &mask {
            d_e *= m;
        }
        self.encoder.backward(&trace, &d_e, &mut grads.encoder);
        Ok((loss, n))
    }

    /// UAS and LAS of predictions against gold sentences.
    pub fn evaluate(&self, gold: &[Sentence], decoder: Decoder) -> Result<(f64, f64)> {
        let mut pred = gold.to_vec();
        for s in &mut pred {
            self.annotate(s, decoder)?;
        }
        uas_las_docs(&[Doc::from_sentences(pred)], &[Doc::from_sentences(gold.to_vec())])
    }
}

/// Joint loss from precomputed scores: arc CE per word plus label CE at the
/// gold head (`rel_scores` must be scored at the gold heads).
pub fn loss_from_scores(arcs: &ArcScores, rel_scores: &Array2<f64>, heads: &[usize], rels: &[usize]) -> f64 {
    let mut loss = 0.0;
    for i in 0..arcs.len() {
        loss += softmax_cross_entropy(arcs.matrix.row(i), heads[i]).0;
        loss += softmax_cross_entropy(rel_scores.row(i), rels[i]).0;
    }
    loss
}

impl Parameters for ParserModel {
    fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        let mut out = self.encoder.tensors();
        out.extend([
            view("parser.w_arc_head", &self.w_arc_head),
            view("parser.w_arc_dep", &self.w_arc_dep),
            view("parser.w_rel_head", &self.w_rel_head),
            view("parser.w_rel_dep", &self.w_rel_dep),
            view("parser.w_arc", &self.w_arc),
            view("parser.b_arc", &self.b_arc),
            view("parser.u_rel", &self.u_rel),
            view("parser.w_rel", &self.w_rel),
            view("parser.b_rel", &self.b_rel),
        ]);
        out
    }

    fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>> {
        let mut out = self.encoder.tensors_mut();
        out.extend([
            self.w_arc_head.view_mut().into_dyn(),
            self.w_arc_dep.view_mut().into_dyn(),
            self.w_rel_head.view_mut().into_dyn(),
            self.w_rel_dep.view_mut().into_dyn(),
            self.w_arc.view_mut().into_dyn(),
            self.b_arc.view_mut().into_dyn(),
            self.u_rel.view_mut().into_dyn(),
            self.w_rel.view_mut().into_dyn(),
            self.b_rel.view_mut().into_dyn(),
        ]);
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

    fn model(dim: usize, proj: usize, concat: RelConcat) -> ParserModel {
        let vocab = SubwordVocab::from_pieces(["α", "β", "γ"]);
        let enc = EncoderModel::new(
            EncoderConfig {
                dim,
                layers: 1,
                max_len: 16,
                seed: 3,
            },
            vocab,
        );
        let config = ParserConfig {
            proj_dim: proj,
            rel_concat: concat,
            decoder: Decoder::Greedy,
        };
        ParserModel::new(enc, config, vec!["nsubj".into(), "obj".into(), "root".into()]).unwrap()
    }

    fn sentence(words: &[(&str, usize, &str)]) -> Sentence {
        Sentence::new(
            words
                .iter()
                .enumerate()
                .map(|(i, (w, h, r))| {
                    let mut t = Token::new(i + 1, *w);
                    t.head = Some(*h);
                    t.deprel = Some(r.to_string());
                    t
                })
                .collect(),
        )
    }

    fn sample() -> Sentence {
        sentence(&[("αβ", 2, "nsubj"), ("γ", 0, "root"), ("βα", 2, "obj")])
    }

    /// Scalar forms of the projections for row `r`.
    fn project_row(w: &Array2<f64>, e: &Array2<f64>, r: usize) -> Vec<f64> {
        (0..w.nrows())
            .map(|a| (0..w.ncols()).map(|b| w[[a, b]] * e[[r, b]]).sum())
            .collect()
    }

    #[test]
    fn zero_biaffine_zero_scores() {
        let mut m = model(4, 3, RelConcat::AsPrinted);
        m.w_arc.fill(0.0);
        m.b_arc.fill(0.0);
        let s = m.score_arcs(&["α", "β"]).unwrap();
        for i in 1..=2 {
            for j in 0..=2 {
                if i == j {
                    assert_eq!(s.get(i, j), f64::NEG_INFINITY);
                } else {
                    assert_eq!(s.get(i, j), 0.0);
                }
            }
        }
    }

    #[test]
    fn arc_scores_match_scalar_oracle() {
        let mut m = model(4, 2, RelConcat::AsPrinted);
        m.w_arc = array![[0.3, -1.2], [0.7, 0.4]];
        m.b_arc = array![0.5, -0.25];
        let words = ["αβ", "γ"];
        let e = m.encoder.encode(&words).unwrap();
        let s = m.score_arcs(&words).unwrap();
        for i in 1..=2 {
            let hd = project_row(&m.w_arc_dep, &e, i);
            for j in 0..=2 {
                if i == j {
                    continue;
                }
                let hh = project_row(&m.w_arc_head, &e, j);
                let mut oracle = 0.0;
                for a in 0..2 {
                    for b in 0..2 {
                        oracle += hh[a] * m.w_arc[[a, b]] * hd[b];
                    }
                    oracle += hh[a] * m.b_arc[a];
                }
                assert_abs_diff_eq!(s.get(i, j), oracle, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn head_bias_shifts_one_column() {
        let mut m = model(4, 3, RelConcat::AsPrinted);
        let words = ["αβ", "γ", "β"];
        let e = m.encoder.encode(&words).unwrap();
        let before = m.score_arcs(&words).unwrap();
        // Choose a bias change whose dot product with head 2's projection is c.
        let h2 = Array1::from(project_row(&m.w_arc_head, &e, 2));
        let c = 1.5;
        m.b_arc.scaled_add(c / h2.dot(&h2), &h2);
        let after = m.score_arcs(&words).unwrap();
        for i in [1, 3] {
            assert_abs_diff_eq!(after.get(i, 2) - before.get(i, 2), c, epsilon = 1e-9);
        }
    }

    #[test]
    fn rel_scores_match_scalar_oracle() {
        for concat in [RelConcat::AsPrinted, RelConcat::HeadDep] {
            let m = model(4, 2, concat);
            let words = ["αβ", "γ"];
            let heads = [2, 0];
            let e = m.encoder.encode(&words).unwrap();
            let scores = m.score_rels(&words, &heads).unwrap();
            for i in 1..=2 {
                let j = heads[i - 1];
                let hd = project_row(&m.w_rel_dep, &e, i);
                let hh = project_row(&m.w_rel_head, &e, j);
                let first = match concat {
                    RelConcat::AsPrinted => project_row(&m.w_rel_head, &e, i),
                    RelConcat::HeadDep => hh.clone(),
                };
                let x: Vec<f64> = first.iter().chain(&hd).copied().collect();
                for k in 0..3 {
                    let mut oracle = m.b_rel[k];
                    for a in 0..2 {
                        for b in 0..2 {
                            oracle += hh[a] * m.u_rel[[k, a, b]] * hd[b];
                        }
                    }
                    for (q, xv) in x.iter().enumerate() {
                        oracle += m.w_rel[[k, q]] * xv;
                    }
                    assert_abs_diff_eq!(scores[[i - 1, k]], oracle, epsilon = 1e-6);
                }
            }
        }
    }

    #[test]
    fn rel_bias_only() {
        let mut m = model(4, 2, RelConcat::AsPrinted);
        m.u_rel.fill(0.0);
        m.w_rel.fill(0.0);
        m.b_rel = array![0.1, -0.4, 2.0];
        let scores = m.score_rels(&["α", "β", "γ"], &[0, 1, 1]).unwrap();
        for row in scores.rows() {
            assert_eq!(row.to_vec(), vec![0.1, -0.4, 2.0]);
        }
        let before = m.score_rels(&["α", "β"], &[2, 0]).unwrap();
        m.b_rel[1] += 0.75;
        let after = m.score_rels(&["α", "β"], &[2, 0]).unwrap();
        for i in 0..2 {
            assert_abs_diff_eq!(after[[i, 1]] - before[[i, 1]], 0.75, epsilon = 1e-12);
        }
    }

    #[test]
    fn loss_edge_cases() {
        let single = ArcScores::from_matrix(array![[3.0, 0.0]]);
        assert_eq!(loss_from_scores(&single, &array![[0.0]], &[0], &[0]), 0.0);
        let uniform = ArcScores::from_matrix(Array2::zeros((2, 3)));
        let l = loss_from_scores(&uniform, &array![[0.0], [0.0]], &[0, 1], &[0, 0]);
        assert_abs_diff_eq!(l, 2.0 * 2f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn loss_matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let arcs = ArcScores::from_matrix(Array2::from_shape_simple_fn((3, 4), || rng.random_range(-2.0..2.0)));
        let rel: Array2<f64> = Array2::from_shape_simple_fn((3, 2), || rng.random_range(-2.0..2.0));
        let heads = [2, 0, 1];
        let rels = [1, 0, 1];
        let mut oracle = 0.0;
        for i in 0..3 {
            let z: f64 = (0..4).filter(|&j| j != i + 1).map(|j| arcs.get(i + 1, j).exp()).sum();
            oracle -= (arcs.get(i + 1, heads[i]).exp() / z).ln();
            let z: f64 = (0..2).map(|k| rel[[i, k]].exp()).sum();
            oracle -= (rel[[i, rels[i]]].exp() / z).ln();
        }
        assert_abs_diff_eq!(loss_from_scores(&arcs, &rel, &heads, &rels), oracle, epsilon = 1e-6);
    }

    #[test]
    fn gold_errors() {
        let m = model(4, 2, RelConcat::AsPrinted);
        let s = sentence(&[("α", 5, "root")]);
        assert!(matches!(m.parse_loss(&s), Err(Error::HeadOutOfRange { gold: 5, .. })));
        let s = sentence(&[("α", 0, "amod")]);
        assert!(matches!(m.parse_loss(&s), Err(Error::UnknownLabel { .. })));
    }

    #[test]
    fn single_word_attaches_to_root() {
        let m = model(4, 2, RelConcat::AsPrinted);
        let (heads, _) = m.parse(&["α"], Decoder::Greedy).unwrap();
        assert_eq!(heads, vec![0]);
    }

    fn gradient_check(concat: RelConcat) {
        let m = model(8, 8, concat);
        let s = sample();
        let mut grads = m.zeros_like();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (loss, _) = m.accumulate(&s, 0.0, &mut rng, &mut grads).unwrap();
        assert_abs_diff_eq!(loss, m.parse_loss(&s).unwrap(), epsilon = 1e-9);
        let analytic = grads.flatten();
        let h = 1e-4;
        for k in 0..m.n_params() {
            let mut p = m.clone();
            p.with_scalar_mut(k, |v| *v += h);
            let mut q = m.clone();
            q.with_scalar_mut(k, |v| *v -= h);
            let numeric = (p.parse_loss(&s).unwrap() - q.parse_loss(&s).unwrap()) / (2.0 * h);
            let diff = (numeric - analytic[k]).abs();
            assert!(
                diff <= 1e-3 * numeric.abs().max(analytic[k].abs()) || diff <= 1e-8,
                "param {k}: {numeric} vs {}",
                analytic[k]
            );
        }
    }

    #[test]
    fn gradient_check_as_printed() {
        gradient_check(RelConcat::AsPrinted);
    }

    #[test]
    fn gradient_check_head_dep() {
        gradient_check(RelConcat::HeadDep);
    }

    proptest! {
        #[test]
        fn greedy_matches_scan(seed in any::<u64>(), n in 1usize..7) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let arcs = ArcScores::from_matrix(Array2::from_shape_simple_fn((n, n + 1), || rng.random_range(-1.0..1.0)));
            let heads = decode_greedy(&arcs);
            for i in 1..=n {
                let mut best = 0;
                for j in 1..=n {
                    if arcs.get(i, j) > arcs.get(i, best) {
                        best = j;
                    }
                }
                prop_assert_eq!(heads[i - 1], best);
                prop_assert_ne!(heads[i - 1], i);
            }
        }

        #[test]
        fn rel_decode_shift_invariant(seed in any::<u64>(), c in -10.0f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut scores: Array2<f64> = Array2::from_shape_simple_fn((3, 4), || rng.random_range(-1.0..1.0));
            let before = decode_rels(&scores);
            scores.row_mut(1).mapv_inplace(|x| x + c);
            prop_assert_eq!(decode_rels(&scores), before);
        }
    }
}
