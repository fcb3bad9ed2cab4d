use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adamw::AdamW;
use crate::doc::Sentence;
use crate::error::{Error, Result};
use crate::ner::{doc_spans, entity_f1, NerModel};
use crate::nn::Parameters;
use crate::parser::ParserModel;
use crate::tagger::TaggerModel;

/// A model that can be trained on sentences and scored on a dev set.
pub trait Trainable: Parameters + Send + Sync {
    /// Adds the gradient of the summed loss over `sentence` to `grads`;
    /// returns the loss sum and the number of words.
    fn accumulate(
        &self,
        sentence: &Sentence,
        dropout: f64,
        rng: &mut ChaCha8Rng,
        grads: &mut Self,
    ) -> Result<(f64, usize)>;

    /// Model selection metric, higher is better.
    fn dev_metric(&self, dev: &[Sentence]) -> Result<f64>;
}

impl Trainable for TaggerModel {
    fn accumulate(&self, s: &Sentence, dropout: f64, rng: &mut ChaCha8Rng, grads: &mut Self) -> Result<(f64, usize)> {
        TaggerModel::accumulate(self, s, dropout, rng, grads)
    }

    /// Mean macro-F1 over the 17 heads.
    fn dev_metric(&self, dev: &[Sentence]) -> Result<f64> {
        Ok(self.evaluate(dev)?.mean_macro())
    }
}

impl Trainable for NerModel {
    fn accumulate(&self, s: &Sentence, dropout: f64, rng: &mut ChaCha8Rng, grads: &mut Self) -> Result<(f64, usize)> {
        NerModel::accumulate(self, s, dropout, rng, grads)
    }

    /// Entity macro-F1.
    fn dev_metric(&self, dev: &[Sentence]) -> Result<f64> {
        Ok(ner_scores(self, dev)?.macro_f1)
    }
}

/// Entity scores of the model's predictions on gold sentences.
pub fn ner_scores(model: &NerModel, gold: &[Sentence]) -> Result<crate::ner::EntityReport> {
    let gold_doc = crate::doc::Doc::from_sentences(gold.to_vec());
    let mut pred_doc = gold_doc.clone();
    for s in &mut pred_doc.sentences {
        let tags = model.predict(&s.forms())?;
        for (t, tag) in s.tokens.iter_mut().zip(tags) {
            t.ner = Some(tag.to_string());
        }
    }
    Ok(entity_f1(&doc_spans(&pred_doc), &doc_spans(&gold_doc)))
}

impl Trainable for ParserModel {
    fn accumulate(&self, s: &Sentence, dropout: f64, rng: &mut ChaCha8Rng, grads: &mut Self) -> Result<(f64, usize)> {
        ParserModel::accumulate(self, s, dropout, rng, grads)
    }

    /// Labeled attachment score.
    fn dev_metric(&self, dev: &[Sentence]) -> Result<f64> {
        Ok(self.evaluate(dev, self.config.decoder)?.1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub learning_rate: f64,
    pub dropout: f64,
    pub grad_accumulation_steps: usize,
    pub weight_decay: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            learning_rate: 3e-5,
            dropout: 0.0,
            grad_accumulation_steps: 4,
            weight_decay: 0.2,
            epochs: 30,
            seed: 42,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidHyperParams(m.to_owned()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if self.grad_accumulation_steps == 0 {
            return bad("gradient accumulation steps must be at least 1");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight decay must be non-negative");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Sentences per microbatch.
    pub batch_size: usize,
    /// Epochs without dev improvement before stopping.
    pub patience: usize,
    /// Stop as soon as the dev metric reaches this value.
    pub target: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            patience: 5,
            target: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean loss per word over the epoch.
    pub train_loss: f64,
    pub dev_metric: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Mean per-word loss of every optimizer step.
    pub step_losses: Vec<f64>,
    /// Epoch (1-based) of the returned checkpoint.
    pub best_epoch: usize,
    pub best_dev: f64,
}

/// Trains with AdamW and returns the checkpoint with the best dev metric.
///
/// The loss is the mean over the words of an optimizer step: gradients of
/// `grad_accumulation_steps` microbatches are summed and divided by their
/// total word count. A partial accumulation at the end of an epoch is
/// applied too.
pub fn train<M: Trainable>(
    mut model: M,
    train_set: &[Sentence],
    dev: &[Sentence],
    hp: &HyperParams,
    config: &TrainConfig,
) -> Result<(M, TrainReport)> {
    hp.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    if dev.is_empty() {
        return Err(Error::EmptySplit("dev"));
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidHyperParams("batch size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut opt = AdamW::new(&model);
    let mut report = TrainReport {
        epochs: Vec::new(),
        step_losses: Vec::new(),
        best_epoch: 0,
        best_dev: f64::NEG_INFINITY,
    };
    let mut best = model.clone();
    let mut stale = 0;

    for epoch in 1..=hp.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut rng);

        let mut grads = model.zeros_like();
        let (mut step_loss, mut step_words, mut pending) = (0.0, 0usize, 0usize);
        let (mut epoch_loss, mut epoch_words) = (0.0, 0usize);
        let batches: Vec<&[usize]> = order.chunks(config.batch_size).collect();
        for (b, batch) in batches.iter().enumerate() {
            for &i in *batch {
                let (loss, words) = model.accumulate(&train_set[i], hp.dropout, &mut rng, &mut grads)?;
                step_loss += loss;
                step_words += words;
            }
            pending += 1;
            if pending == hp.grad_accumulation_steps || b + 1 == batches.len() {
                if step_words > 0 {
                    let mut scaled = model.zeros_like();
                    scaled.scaled_add(1.0 / step_words as f64, &grads);
                    opt.step(&mut model, &scaled, hp.learning_rate, hp.weight_decay)?;
                    report.step_losses.push(step_loss / step_words as f64);
                }
                epoch_loss += step_loss;
                epoch_words += step_words;
                grads = model.zeros_like();
                step_loss = 0.0;
                step_words = 0;
                pending = 0;
            }
        }

        let metric = model.dev_metric(dev)?;
        report.epochs.push(EpochRecord {
            epoch,
            train_loss: epoch_loss / epoch_words.max(1) as f64,
            dev_metric: metric,
        });
        if metric > report.best_dev {
            report.best_dev = metric;
            report.best_epoch = epoch;
            best = model.clone();
            stale = 0;
        } else {
            stale += 1;
        }
        if config.target.is_some_and(|t| metric >= t) || stale >= config.patience {
            break;
        }
    }
    Ok((best, report))
}

/// Hyperparameter ranges; the default is the full search space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub learning_rates: Vec<f64>,
    pub dropouts: Vec<f64>,
    pub accumulations: Vec<usize>,
    pub weight_decays: Vec<f64>,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            learning_rates: vec![5e-5, 3e-5, 2e-5],
            dropouts: vec![0.0, 0.1, 0.2],
            accumulations: vec![4, 8],
            weight_decays: vec![0.2, 0.5, 0.8],
        }
    }
}

impl Grid {
    pub fn single(hp: &HyperParams) -> Self {
        Grid {
            learning_rates: vec![hp.learning_rate],
            dropouts: vec![hp.dropout],
            accumulations: vec![hp.grad_accumulation_steps],
            weight_decays: vec![hp.weight_decay],
        }
    }

    /// Every combination, learning rate varying slowest.
    pub fn cells(&self, epochs: usize, seed: u64) -> Vec<HyperParams> {
        let mut out = Vec::new();
        for &learning_rate in &self.learning_rates {
            for &dropout in &self.dropouts {
                for &grad_accumulation_steps in &self.accumulations {
                    for &weight_decay in &self.weight_decays {
                        out.push(HyperParams {
                            learning_rate,
                            dropout,
                            grad_accumulation_steps,
                            weight_decay,
                            epochs,
                            seed,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridRow {
    pub hp: HyperParams,
    pub best_dev: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridReport {
    pub rows: Vec<GridRow>,
    /// Row index of the selected cell.
    pub champion: usize,
    pub test_metric: f64,
}

impl GridReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from(
            "cell\tlearning_rate\tdropout\taccumulation\tweight_decay\tbest_epoch\tepochs_run\tbest_dev\tchampion\n",
        );
        for (i, r) in self.rows.iter().enumerate() {
            let _ = writeln!(
                out,
                "{i}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.6}\t{}",
                r.hp.learning_rate,
                r.hp.dropout,
                r.hp.grad_accumulation_steps,
                r.hp.weight_decay,
                r.best_epoch,
                r.epochs_run,
                r.best_dev,
                u8::from(i == self.champion)
            );
        }
        out
    }

    pub fn to_text(&self) -> String {
        let c = &self.rows[self.champion];
        format!(
            "{} cells trained\nbest cell {}: lr={} dropout={} accumulation={} weight_decay={}\ndev metric {:.4} at epoch {}\ntest metric {:.4}\n",
            self.rows.len(),
            self.champion,
            c.hp.learning_rate,
            c.hp.dropout,
            c.hp.grad_accumulation_steps,
            c.hp.weight_decay,
            c.best_dev,
            c.best_epoch,
            self.test_metric
        )
    }
}

/// Trains every cell (in parallel) from a fresh model, selects the best dev
/// metric (the earliest cell on ties) and scores it on `test`.
pub fn grid_search<M, F>(
    init: F,
    cells: &[HyperParams],
    train_set: &[Sentence],
    dev: &[Sentence],
    test: &[Sentence],
    config: &TrainConfig,
) -> Result<(M, GridReport)>
where
    M: Trainable,
    F: Fn() -> M + Sync,
{
    if cells.is_empty() {
        return Err(Error::InvalidHyperParams("empty grid".into()));
    }
    if test.is_empty() {
        return Err(Error::EmptySplit("test"));
    }
    let results: Vec<(M, TrainReport, HyperParams)> = cells
        .par_iter()
        .map(|hp| train(init(), train_set, dev, hp, config).map(|(m, r)| (m, r, *hp)))
        .collect::<Result<_>>()?;
    let mut champion = 0;
    for (i, (_, r, _)) in results.iter().enumerate() {
        if r.best_dev > results[champion].1.best_dev {
            champion = i;
        }
    }
    let rows = results
        .iter()
        .map(|(_, r, hp)| GridRow {
            hp: *hp,
            best_dev: r.best_dev,
            best_epoch: r.best_epoch,
            epochs_run: r.epochs.len(),
        })
        .collect();
    let model = results.into_iter().nth(champion).expect("champion exists").0;
    let test_metric = model.dev_metric(test)?;
    Ok((
        model,
        GridReport {
            rows,
            champion,
            test_metric,
        },
    ))
}
