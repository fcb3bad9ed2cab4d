//! Contextual word encoder.
//!
//! Words are normalized and segmented into subword pieces. A `[ROOT]` piece
//! is prepended, the piece embeddings go through a stack of residual
//! bidirectional recurrent mixing layers, and each word is represented by the
//! output at its *first* piece. Row 0 of the output is the `[ROOT]` position
//! and serves as the virtual root for dependency parsing.

use std::collections::{BTreeMap, HashMap};
use std::io::{self, BufRead, Write};

use ndarray::{s, Array1, Array2, ArrayView1, ArrayViewD, ArrayViewMutD, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::{uniform_matrix, uniform_vector, view, Parameters};
use crate::normalize::normalize;

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const ROOT: &str = "[ROOT]";

/// Subword piece inventory. Ids 0, 1 and 2 are `[PAD]`, `[UNK]` and
/// `[ROOT]`; special pieces never match word text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubwordVocab {
    pieces: Vec<String>,
    index: HashMap<String, usize>,
    max_piece_chars: usize,
}

impl SubwordVocab {
    pub const PAD_ID: usize = 0;
    pub const UNK_ID: usize = 1;
    pub const ROOT_ID: usize = 2;

    /// Builds a vocabulary from the given pieces, which are appended after
    /// the special pieces. Duplicates are ignored.
    pub fn from_pieces<I, S>(pieces: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = SubwordVocab {
            pieces: vec![PAD.to_owned(), UNK.to_owned(), ROOT.to_owned()],
            index: HashMap::new(),
            max_piece_chars: 0,
        };
        for piece in pieces {
            vocab.push(piece.into());
        }
        vocab
    }

    fn push(&mut self, piece: String) {
        if piece.is_empty() || self.index.contains_key(&piece) || self.pieces[..3].contains(&piece) {
            return;
        }
        self.max_piece_chars = self.max_piece_chars.max(piece.chars().count());
        self.index.insert(piece.clone(), self.pieces.len());
        self.pieces.push(piece);
    }

    /// Vocabulary of every character plus every whole (normalized) word
    /// that occurs at least `min_count` times.
    pub fn build<'a, I>(words: I, min_count: usize) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut chars = std::collections::BTreeSet::new();
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for word in words {
            let word = normalize(word);
            chars.extend(word.chars());
            *counts.entry(word).or_default() += 1;
        }
        let mut frequent: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(w, c)| *c >= min_count && w.chars().count() > 1)
            .collect();
        frequent.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        SubwordVocab::from_pieces(
            chars
                .into_iter()
                .map(String::from)
                .chain(frequent.into_iter().map(|(w, _)| w)),
        )
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn pieces(&self) -> &[String] {
        &self.pieces
    }

    pub fn id(&self, piece: &str) -> Option<usize> {
        self.index.get(piece).copied()
    }

    /// Greedy longest-match-first segmentation. Characters that are not in
    /// the vocabulary become `[UNK]`.
    pub fn segment(&self, word: &str) -> Vec<usize> {
        let chars: Vec<char> = word.chars().collect();
        let mut ids = Vec::new();
        let mut start = 0;
        let mut buf = String::new();
        while start < chars.len() {
            let longest = self.max_piece_chars.min(chars.len() - start);
            let mut matched = None;
            for len in (1..=longest).rev() {
                buf.clear();
                buf.extend(&chars[start..start + len]);
                if let Some(&id) = self.index.get(&buf) {
                    matched = Some((id, len));
                    break;
                }
            }
            match matched {
                Some((id, len)) => {
                    ids.push(id);
                    start += len;
                }
                None => {
                    ids.push(Self::UNK_ID);
                    start += 1;
                }
            }
        }
        ids
    }

    /// SHA-256 over the pieces, hex encoded.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        for piece in &self.pieces {
            hasher.update(piece.as_bytes());
            hasher.update(b"\n");
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Writes one piece per line; the line number is the id.
    pub fn write_lines<W: Write>(&self, mut writer: W) -> io::Result<()> {
        for piece in &self.pieces {
            writeln!(writer, "{piece}")?;
        }
        Ok(())
    }

    pub fn read_lines<R: BufRead>(reader: R) -> Result<Self> {
        let lines = reader.lines().collect::<io::Result<Vec<_>>>()?;
        Self::from_lines(lines)
    }

    pub(crate) fn from_lines(lines: Vec<String>) -> Result<Self> {
        if lines.len() < 3 || lines[0] != PAD || lines[1] != UNK || lines[2] != ROOT {
            return Err(Error::InvalidModel(
                "vocabulary must start with [PAD], [UNK], [ROOT]".to_owned(),
            ));
        }
        let vocab = SubwordVocab::from_pieces(lines.iter().skip(3).cloned());
        if vocab.len() != lines.len() {
            return Err(Error::InvalidModel(
                "vocabulary contains duplicate or empty pieces".to_owned(),
            ));
        }
        Ok(vocab)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub dim: usize,
    pub layers: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            dim: 64,
            layers: 1,
            max_len: 256,
            seed: 42,
        }
    }
}

/// Residual bidirectional recurrent layer:
/// `out[p] = x[p] + f[p] + b[p]` with
/// `f[p] = tanh(A_f x[p] + R_f f[p-1] + c_f)` and
/// `b[p] = tanh(A_b x[p] + R_b b[p+1] + c_b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MixerLayer {
    pub fwd_input: Array2<f64>,
    pub fwd_recurrent: Array2<f64>,
    pub fwd_bias: Array1<f64>,
    pub bwd_input: Array2<f64>,
    pub bwd_recurrent: Array2<f64>,
    pub bwd_bias: Array1<f64>,
}

impl MixerLayer {
    fn random(rng: &mut ChaCha8Rng, dim: usize) -> Self {
        MixerLayer {
            fwd_input: uniform_matrix(rng, dim, dim),
            fwd_recurrent: uniform_matrix(rng, dim, dim),
            fwd_bias: uniform_vector(rng, dim),
            bwd_input: uniform_matrix(rng, dim, dim),
            bwd_recurrent: uniform_matrix(rng, dim, dim),
            bwd_bias: uniform_vector(rng, dim),
        }
    }

    fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        let len = x.nrows();
        let dim = x.ncols();
        let mut fwd = x.dot(&self.fwd_input.t()) + &self.fwd_bias;
        let mut bwd = x.dot(&self.bwd_input.t()) + &self.bwd_bias;
        let mut prev = Array1::<f64>::zeros(dim);
        for p in 0..len {
            let mut row = fwd.row_mut(p);
            row += &self.fwd_recurrent.dot(&prev);
            row.mapv_inplace(f64::tanh);
            prev.assign(&row);
        }
        prev.fill(0.0);
        for p in (0..len).rev() {
            let mut row = bwd.row_mut(p);
            row += &self.bwd_recurrent.dot(&prev);
            row.mapv_inplace(f64::tanh);
            prev.assign(&row);
        }
        let out = x + &fwd + &bwd;
        (out, fwd, bwd)
    }

    /// Backpropagates `d_out` and returns the gradient for the layer input.
    fn backward(
        &self,
        x: &Array2<f64>,
        fwd: &Array2<f64>,
        bwd: &Array2<f64>,
        d_out: &Array2<f64>,
        grads: &mut MixerLayer,
    ) -> Array2<f64> {
        let len = x.nrows();
        let dim = x.ncols();
        let mut d_x = d_out.clone();

        let mut carry = Array1::<f64>::zeros(dim);
        for p in (0..len).rev() {
            let d_state = &d_out.row(p) + &carry;
            let d_pre = &d_state * &fwd.row(p).mapv(|v| 1.0 - v * v);
            outer_add(&mut grads.fwd_input, &d_pre.view(), &x.row(p));
            grads.fwd_bias += &d_pre;
            if p > 0 {
                outer_add(&mut grads.fwd_recurrent, &d_pre.view(), &fwd.row(p - 1));
            }
            d_x.row_mut(p).scaled_add(1.0, &self.fwd_input.t().dot(&d_pre));
            carry = self.fwd_recurrent.t().dot(&d_pre);
        }

        carry.fill(0.0);
        for p in 0..len {
            let d_state = &d_out.row(p) + &carry;
            let d_pre = &d_state * &bwd.row(p).mapv(|v| 1.0 - v * v);
            outer_add(&mut grads.bwd_input, &d_pre.view(), &x.row(p));
            grads.bwd_bias += &d_pre;
            if p + 1 < len {
                outer_add(&mut grads.bwd_recurrent, &d_pre.view(), &bwd.row(p + 1));
            }
            d_x.row_mut(p).scaled_add(1.0, &self.bwd_input.t().dot(&d_pre));
            carry = self.bwd_recurrent.t().dot(&d_pre);
        }
        d_x
    }
}

/// `m += a bᵀ`
pub(crate) fn outer_add(m: &mut Array2<f64>, a: &ArrayView1<f64>, b: &ArrayView1<f64>) {
    for (i, &ai) in a.iter().enumerate() {
        if ai != 0.0 {
            m.row_mut(i).scaled_add(ai, b);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderModel {
    pub config: EncoderConfig,
    pub vocab: SubwordVocab,
    pub embeddings: Array2<f64>,
    pub layers: Vec<MixerLayer>,
}

/// Intermediate values of a forward pass, kept for backpropagation.
#[derive(Clone, Debug)]
pub struct EncoderTrace {
    pub piece_ids: Vec<usize>,
    /// Piece position of each output row; entry 0 is the `[ROOT]` piece.
    pub row_positions: Vec<usize>,
    layer_inputs: Vec<Array2<f64>>,
    layer_states: Vec<(Array2<f64>, Array2<f64>)>,
    /// `(n + 1) × d` word representations.
    pub output: Array2<f64>,
}

impl EncoderModel {
    /// Randomly initialized encoder with weights drawn uniformly from
    /// `(-0.1, 0.1)` using `config.seed`.
    pub fn new(config: EncoderConfig, vocab: SubwordVocab) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let embeddings = uniform_matrix(&mut rng, vocab.len(), config.dim);
        let layers = (0..config.layers)
            .map(|_| MixerLayer::random(&mut rng, config.dim))
            .collect();
        EncoderModel {
            config,
            vocab,
            embeddings,
            layers,
        }
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    /// Piece ids for a sentence with the `[ROOT]` piece first, and the
    /// position of each word's first piece.
    pub fn pieces<S: AsRef<str>>(&self, words: &[S]) -> (Vec<usize>, Vec<usize>) {
        let mut ids = vec![SubwordVocab::ROOT_ID];
        let mut rows = vec![0];
        for word in words {
            rows.push(ids.len());
            let normalized = normalize(word.as_ref());
            let segmented = self.vocab.segment(&normalized);
            if segmented.is_empty() {
                ids.push(SubwordVocab::UNK_ID);
            } else {
                ids.extend(segmented);
            }
        }
        (ids, rows)
    }

    /// Contextual representation of each word plus the root, `(n + 1) × d`.
    pub fn encode<S: AsRef<str>>(&self, words: &[S]) -> Result<Array2<f64>> {
        Ok(self.forward(words)?.output)
    }

    pub fn encode_batch<S: AsRef<str>>(&self, sentences: &[Vec<S>]) -> Result<Vec<Array2<f64>>> {
        sentences.iter().map(|s| self.encode(s)).collect()
    }

    pub fn forward<S: AsRef<str>>(&self, words: &[S]) -> Result<EncoderTrace> {
        if words.len() > self.config.max_len {
            return Err(Error::SentenceTooLong {
                len: words.len(),
                max: self.config.max_len,
            });
        }
        let (piece_ids, row_positions) = self.pieces(words);
        Ok(self.forward_pieces(piece_ids, row_positions))
    }

    /// Forward pass over explicit piece ids.
    pub fn forward_pieces(&self, piece_ids: Vec<usize>, row_positions: Vec<usize>) -> EncoderTrace {
        let mut x = self.embeddings.select(Axis(0), &piece_ids);
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let mut layer_states = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (out, fwd, bwd) = layer.forward(&x);
            layer_inputs.push(x);
            layer_states.push((fwd, bwd));
            x = out;
        }
        let output = x.select(Axis(0), &row_positions);
        EncoderTrace {
            piece_ids,
            row_positions,
            layer_inputs,
            layer_states,
            output,
        }
    }

    /// Accumulates parameter gradients for `d_output`, the gradient of the
    /// loss with respect to [`EncoderTrace::output`].
    pub fn backward(&self, trace: &EncoderTrace, d_output: &Array2<f64>, grads: &mut EncoderModel) {
        let len = trace.piece_ids.len();
        let mut d_x = Array2::<f64>::zeros((len, self.config.dim));
        for (row, &pos) in trace.row_positions.iter().enumerate() {
            d_x.row_mut(pos).scaled_add(1.0, &d_output.row(row));
        }
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let (fwd, bwd) = &trace.layer_states[l];
            d_x = layer.backward(&trace.layer_inputs[l], fwd, bwd, &d_x, &mut grads.layers[l]);
        }
        for (p, &id) in trace.piece_ids.iter().enumerate() {
            grads.embeddings.slice_mut(s![id, ..]).scaled_add(1.0, &d_x.row(p));
        }
    }
}

impl Parameters for EncoderModel {
    fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        let mut out = vec![view("encoder.embeddings", &self.embeddings)];
        for (l, layer) in self.layers.iter().enumerate() {
            out.push(view(&format!("encoder.layer{l}.fwd_input"), &layer.fwd_input));
            out.push(view(&format!("encoder.layer{l}.fwd_recurrent"), &layer.fwd_recurrent));
            out.push(view(&format!("encoder.layer{l}.fwd_bias"), &layer.fwd_bias));
            out.push(view(&format!("encoder.layer{l}.bwd_input"), &layer.bwd_input));
            out.push(view(&format!("encoder.layer{l}.bwd_recurrent"), &layer.bwd_recurrent));
            out.push(view(&format!("encoder.layer{l}.bwd_bias"), &layer.bwd_bias));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>> {
        let mut out = vec![self.embeddings.view_mut().into_dyn()];
        for layer in &mut self.layers {
            out.push(layer.fwd_input.view_mut().into_dyn());
            out.push(layer.fwd_recurrent.view_mut().into_dyn());
            out.push(layer.fwd_bias.view_mut().into_dyn());
            out.push(layer.bwd_input.view_mut().into_dyn());
            out.push(layer.bwd_recurrent.view_mut().into_dyn());
            out.push(layer.bwd_bias.view_mut().into_dyn());
        }
        out
    }
}
