use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::metrics::uas_las_docs;
use super::trainer::{grid_search, ner_scores, GridReport, HyperParams, TrainConfig};
use crate::container;
use crate::doc::{Doc, Sentence};
use crate::encoder::{EncoderConfig, EncoderModel, SubwordVocab};
use crate::error::{Error, Result};
use crate::ner::NerModel;
use crate::parser::{Decoder, ParserConfig, ParserModel};
use crate::pipeline::Processor;
use crate::tagger::{label_vocabularies, TaggerModel};

/// A trainable annotation task.
#[derive(Clone, Copy, Debug, Eq, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Pos,
    Ner,
    Dp,
}

impl Task {
    pub fn name(self) -> &'static str {
        self.processor().name()
    }

    pub fn processor(self) -> Processor {
        match self {
            Task::Pos => Processor::Pos,
            Task::Ner => Processor::Ner,
            Task::Dp => Processor::Dp,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "pos" => Ok(Task::Pos),
            "ner" => Ok(Task::Ner),
            "dp" => Ok(Task::Dp),
            other => Err(format!("unknown task `{other}`, expected pos, ner or dp")),
        }
    }
}

/// Architecture settings for a fresh model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSetup {
    pub encoder: EncoderConfig,
    pub parser: ParserConfig,
    /// Minimum frequency for a whole word to become a vocabulary piece.
    pub min_piece_count: usize,
}

impl Default for ModelSetup {
    fn default() -> Self {
        ModelSetup {
            encoder: EncoderConfig::default(),
            parser: ParserConfig::default(),
            min_piece_count: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum TaskModel {
    Tagger(TaggerModel),
    Ner(NerModel),
    Parser(ParserModel),
}

/// Named scores, in a fixed order per task.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Evaluation {
    pub task: Task,
    pub metrics: Vec<(String, f64)>,
}

impl Evaluation {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    /// One `name<TAB>value` line per metric.
    pub fn to_text(&self) -> String {
        self.metrics.iter().map(|(n, v)| format!("{n}\t{v:.6}\n")).collect()
    }
}

impl TaskModel {
    /// A randomly initialized model with vocabularies built from `train`.
    pub fn init(task: Task, setup: &ModelSetup, train: &[Sentence]) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptySplit("train"));
        }
        let vocab = SubwordVocab::build(train.iter().flat_map(|s| s.forms()), setup.min_piece_count);
        let encoder = EncoderModel::new(setup.encoder.clone(), vocab);
        Ok(match task {
            Task::Pos => TaskModel::Tagger(TaggerModel::new(encoder, label_vocabularies(train))?),
            Task::Ner => TaskModel::Ner(NerModel::new(encoder)),
            Task::Dp => TaskModel::Parser(ParserModel::new(
                encoder,
                setup.parser,
                ParserModel::labels_from(train),
            )?),
        })
    }

    pub fn task(&self) -> Task {
        match self {
            TaskModel::Tagger(_) => Task::Pos,
            TaskModel::Ner(_) => Task::Ner,
            TaskModel::Parser(_) => Task::Dp,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        match self {
            TaskModel::Tagger(m) => container::save(m, path),
            TaskModel::Ner(m) => container::save(m, path),
            TaskModel::Parser(m) => container::save(m, path),
        }
    }

    pub fn load(task: Task, path: impl AsRef<Path>) -> Result<Self> {
        Ok(match task {
            Task::Pos => TaskModel::Tagger(container::load(path)?),
            Task::Ner => TaskModel::Ner(container::load(path)?),
            Task::Dp => TaskModel::Parser(container::load(path)?),
        })
    }

    /// Scores the model on gold sentences.
    ///
    /// * pos: UPOS micro and macro F1, mean macro F1 over all heads, then
    ///   micro and macro F1 of every head.
    /// * ner: entity micro and macro F1.
    /// * dp: UAS and LAS.
    pub fn evaluate(&self, gold: &[Sentence], decoder: Decoder) -> Result<Evaluation> {
        if gold.is_empty() {
            return Err(Error::EmptySplit("evaluation"));
        }
        let metrics = match self {
            TaskModel::Tagger(m) => {
                let s = m.evaluate(gold)?;
                let mut out = vec![
                    ("upos_micro_f1".to_owned(), s.upos_micro()),
                    ("upos_macro_f1".to_owned(), s.upos_macro()),
                    ("mean_macro_f1".to_owned(), s.mean_macro()),
                ];
                for (name, micro, macro_f1) in &s.per_head {
                    out.push((format!("{name}_micro_f1"), *micro));
                    out.push((format!("{name}_macro_f1"), *macro_f1));
                }
                out
            }
            TaskModel::Ner(m) => {
                let r = ner_scores(m, gold)?;
                vec![
                    ("entity_micro_f1".to_owned(), r.micro.f1),
                    ("entity_macro_f1".to_owned(), r.macro_f1),
                ]
            }
            TaskModel::Parser(m) => {
                let gold_doc = Doc::from_sentences(gold.to_vec());
                let mut pred = gold_doc.clone();
                for s in &mut pred.sentences {
                    m.annotate(s, decoder)?;
                }
                let (uas, las) = uas_las_docs(&[pred], &[gold_doc])?;
                vec![("uas".to_owned(), uas), ("las".to_owned(), las)]
            }
        };
        Ok(Evaluation {
            task: self.task(),
            metrics,
        })
    }
}

/// Grid search for one task from a fresh model per cell.
pub fn train_task(
    task: Task,
    setup: &ModelSetup,
    cells: &[HyperParams],
    train: &[Sentence],
    dev: &[Sentence],
    test: &[Sentence],
    config: &TrainConfig,
) -> Result<(TaskModel, GridReport)> {
    Ok(match TaskModel::init(task, setup, train)? {
        TaskModel::Tagger(m) => {
            let (m, r) = grid_search(|| m.clone(), cells, train, dev, test, config)?;
            (TaskModel::Tagger(m), r)
        }
        TaskModel::Ner(m) => {
            let (m, r) = grid_search(|| m.clone(), cells, train, dev, test, config)?;
            (TaskModel::Ner(m), r)
        }
        TaskModel::Parser(m) => {
            let (m, r) = grid_search(|| m.clone(), cells, train, dev, test, config)?;
            (TaskModel::Parser(m), r)
        }
    })
}
