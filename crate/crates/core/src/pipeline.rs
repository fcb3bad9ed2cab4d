//! Processor composition: optional transliteration followed by independent
//! per-sentence annotators, plus model discovery on disk and structured
//! output.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::conllu::to_conllu;
use crate::container::{self, sha256_hex, Stored};
use crate::doc::{tokenize, Doc, Sentence};
use crate::error::{Error, Result};
use crate::g2g::Transliterator;
use crate::ner::NerModel;
use crate::parser::{Decoder, ParserModel};
use crate::tagger::TaggerModel;

/// Name of the optional model manifest inside a model directory.
pub const MANIFEST_FILE: &str = "pipeline.json";

#[derive(Clone, Copy, Debug, Eq, Hash, Ord, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Processor {
    G2g,
    Pos,
    Ner,
    Dp,
}

impl Processor {
    pub const ALL: [Processor; 4] = [Processor::G2g, Processor::Pos, Processor::Ner, Processor::Dp];

    pub fn name(self) -> &'static str {
        match self {
            Processor::G2g => "g2g",
            Processor::Pos => "pos",
            Processor::Ner => "ner",
            Processor::Dp => "dp",
        }
    }

    /// File name of the processor's model container.
    pub fn default_file(self) -> &'static str {
        match self {
            Processor::G2g => "g2g.grnlp",
            Processor::Pos => "tagger.grnlp",
            Processor::Ner => "ner.grnlp",
            Processor::Dp => "parser.grnlp",
        }
    }

    fn valid_names() -> String {
        Processor::ALL.map(Processor::name).join(", ")
    }
}

impl fmt::Display for Processor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Processor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Processor::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::UnknownProcessor {
                name: s.to_owned(),
                valid: Processor::valid_names(),
            })
    }
}

/// A set of processors in execution order: `g2g` first, then the
/// annotators in canonical order.
#[derive(Clone, Debug, Eq, PartialEq)]
pub struct PipelineSpec {
    processors: Vec<Processor>,
}

impl PipelineSpec {
    /// Parses a comma-separated list such as `"pos, ner, dp"`.
    pub fn parse(spec: &str) -> Result<Self> {
        PipelineSpec::from_names(spec.split(',').map(str::trim))
    }

    pub fn from_names<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut processors = Vec::new();
        for name in names {
            let p: Processor = name.as_ref().parse()?;
            if processors.contains(&p) {
                return Err(Error::DuplicateProcessor(p.name().to_owned()));
            }
            processors.push(p);
        }
        if processors.is_empty() {
            return Err(Error::UnknownProcessor {
                name: String::new(),
                valid: Processor::valid_names(),
            });
        }
        processors.sort();
        Ok(PipelineSpec { processors })
    }

    pub fn processors(&self) -> &[Processor] {
        &self.processors
    }

    pub fn contains(&self, p: Processor) -> bool {
        self.processors.contains(&p)
    }
}

impl fmt::Display for PipelineSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.processors.iter().map(|p| p.name()).collect();
        f.write_str(&names.join(", "))
    }
}

/// Fills some annotation slots of a sentence.
pub trait Annotator: Send + Sync {
    fn annotate(&self, sentence: &mut Sentence) -> Result<()>;
}

impl Annotator for TaggerModel {
    fn annotate(&self, sentence: &mut Sentence) -> Result<()> {
        TaggerModel::annotate(self, sentence)
    }
}

impl Annotator for NerModel {
    fn annotate(&self, sentence: &mut Sentence) -> Result<()> {
        let tags = self.predict(&sentence.forms())?;
        for (token, tag) in sentence.tokens.iter_mut().zip(tags) {
            token.ner = Some(tag.to_string());
        }
        Ok(())
    }
}

impl<T: Annotator + ?Sized> Annotator for Arc<T> {
    fn annotate(&self, sentence: &mut Sentence) -> Result<()> {
        (**self).annotate(sentence)
    }
}

/// A parser bound to a decoding strategy.
pub struct ParserAnnotator {
    pub model: Arc<ParserModel>,
    pub decoder: Decoder,
}

impl Annotator for ParserAnnotator {
    fn annotate(&self, sentence: &mut Sentence) -> Result<()> {
        self.model.annotate(sentence, self.decoder)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub path: String,
    pub sha256: String,
}

/// Contents of `pipeline.json`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StoreManifest {
    pub models: BTreeMap<String, ModelEntry>,
}

/// A directory of model containers. When `pipeline.json` is present its
/// paths (relative to the directory) and checksums are used; otherwise each
/// processor's default file name.
#[derive(Clone, Debug)]
pub struct ModelStore {
    dir: PathBuf,
    manifest: Option<StoreManifest>,
}

impl ModelStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        let manifest_path = dir.join(MANIFEST_FILE);
        let manifest = if manifest_path.is_file() {
            Some(serde_json::from_slice(&fs::read(&manifest_path)?)?)
        } else {
            None
        };
        Ok(ModelStore { dir, manifest })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Writes `pipeline.json` listing every default model file present in
    /// `dir` with its checksum.
    pub fn write_manifest(dir: impl AsRef<Path>) -> Result<StoreManifest> {
        let dir = dir.as_ref();
        let mut manifest = StoreManifest::default();
        for p in Processor::ALL {
            let path = dir.join(p.default_file());
            if path.is_file() {
                manifest.models.insert(
                    p.name().to_owned(),
                    ModelEntry {
                        path: p.default_file().to_owned(),
                        sha256: sha256_hex(&fs::read(&path)?),
                    },
                );
            }
        }
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(manifest)
    }

    fn path(&self, p: Processor) -> Option<(PathBuf, Option<&str>)> {
        match &self.manifest {
            Some(m) => m
                .models
                .get(p.name())
                .map(|e| (self.dir.join(&e.path), Some(e.sha256.as_str()))),
            None => Some((self.dir.join(p.default_file()), None)),
        }
    }

    /// True if the store has a model file for `p`.
    pub fn has(&self, p: Processor) -> bool {
        self.path(p).is_some_and(|(path, _)| path.is_file())
    }

    fn load<M: Stored>(&self, p: Processor) -> Result<M> {
        let (path, digest) = self.path(p).ok_or_else(|| Error::MissingModel(p.name().to_owned()))?;
        if !path.is_file() {
            return Err(Error::MissingModel(format!("{} ({})", p.name(), path.display())));
        }
        let bytes = fs::read(&path)?;
        if let Some(expected) = digest {
            if sha256_hex(&bytes) != expected.to_ascii_lowercase() {
                return Err(Error::ChecksumMismatch(path.display().to_string()));
            }
        }
        container::from_bytes(&bytes).map_err(|e| match e {
            Error::ChecksumMismatch(_) => Error::ChecksumMismatch(path.display().to_string()),
            other => other,
        })
    }
}

/// Models loaded once and shared by any number of pipelines.
#[derive(Clone, Debug, Default)]
pub struct Models {
    pub g2g: Option<Arc<Transliterator>>,
    pub tagger: Option<Arc<TaggerModel>>,
    pub ner: Option<Arc<NerModel>>,
    pub parser: Option<Arc<ParserModel>>,
}

impl Models {
    /// Loads the models of the given processors.
    pub fn load(store: &ModelStore, processors: &[Processor]) -> Result<Self> {
        let mut models = Models::default();
        for &p in processors {
            match p {
                Processor::G2g => models.g2g = Some(Arc::new(store.load(p)?)),
                Processor::Pos => models.tagger = Some(Arc::new(store.load(p)?)),
                Processor::Ner => models.ner = Some(Arc::new(store.load(p)?)),
                Processor::Dp => models.parser = Some(Arc::new(store.load(p)?)),
            }
        }
        Ok(models)
    }

    /// Loads every model the store provides, skipping absent ones.
    pub fn load_available(store: &ModelStore) -> Result<Self> {
        let present: Vec<Processor> = Processor::ALL.into_iter().filter(|&p| store.has(p)).collect();
        Models::load(store, &present)
    }

    pub fn has(&self, p: Processor) -> bool {
        match p {
            Processor::G2g => self.g2g.is_some(),
            Processor::Pos => self.tagger.is_some(),
            Processor::Ner => self.ner.is_some(),
            Processor::Dp => self.parser.is_some(),
        }
    }

    pub fn available(&self) -> Vec<Processor> {
        Processor::ALL.into_iter().filter(|&p| self.has(p)).collect()
    }

    /// A pipeline over these models; fails if one is not loaded.
    pub fn pipeline(&self, spec: &PipelineSpec, decoder: Decoder) -> Result<Pipeline> {
        let missing = |p: Processor| Error::MissingModel(p.name().to_owned());
        let mut annotators: Vec<Box<dyn Annotator>> = Vec::new();
        let mut g2g = None;
        for &p in spec.processors() {
            match p {
                Processor::G2g => g2g = Some(self.g2g.clone().ok_or_else(|| missing(p))?),
                Processor::Pos => annotators.push(Box::new(self.tagger.clone().ok_or_else(|| missing(p))?)),
                Processor::Ner => annotators.push(Box::new(self.ner.clone().ok_or_else(|| missing(p))?)),
                Processor::Dp => annotators.push(Box::new(ParserAnnotator {
                    model: self.parser.clone().ok_or_else(|| missing(p))?,
                    decoder,
                })),
            }
        }
        Ok(Pipeline::from_parts(spec.clone(), g2g, annotators))
    }
}

/// Processors ready to run.
pub struct Pipeline {
    spec: PipelineSpec,
    g2g: Option<Arc<Transliterator>>,
    annotators: Vec<Box<dyn Annotator>>,
}

impl fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Pipeline")
            .field("spec", &self.spec.to_string())
            .finish()
    }
}

impl Pipeline {
    /// Loads the models of every requested processor from `store`.
    pub fn create(spec: &PipelineSpec, store: &ModelStore, decoder: Decoder) -> Result<Self> {
        Models::load(store, spec.processors())?.pipeline(spec, decoder)
    }

    /// Assembles a pipeline from already loaded parts. Annotators run in
    /// the given order after transliteration.
    pub fn from_parts(
        spec: PipelineSpec,
        g2g: Option<Arc<Transliterator>>,
        annotators: Vec<Box<dyn Annotator>>,
    ) -> Self {
        Pipeline { spec, g2g, annotators }
    }

    pub fn spec(&self) -> &PipelineSpec {
        &self.spec
    }

    /// Transliterates (when `g2g` is loaded), tokenizes and annotates.
    ///
    /// Annotators see surface forms; the encoder applies normalization to
    /// its own input.
    pub fn run(&self, text: &str) -> Result<PipelineOutput> {
        let transliteration = self.g2g.as_ref().map(|g| g.transliterate(text));
        let working = transliteration.as_deref().unwrap_or(text);
        let mut doc = tokenize(working);
        for (i, sentence) in doc.sentences.iter_mut().enumerate() {
            sentence.comments.push(format!(" text = {}", sentence.text()));
            for annotator in &self.annotators {
                annotator.annotate(sentence).map_err(|e| Error::InSentence {
                    sentence: i + 1,
                    source: Box::new(e),
                })?;
            }
        }
        Ok(PipelineOutput {
            input: text.to_owned(),
            transliteration,
            doc,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineOutput {
    pub input: String,
    pub transliteration: Option<String>,
    pub doc: Doc,
}

/// Structured form of a pipeline result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DocumentJson {
    pub text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transliteration: Option<String>,
    pub sentences: Vec<SentenceJson>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SentenceJson {
    pub text: String,
    pub tokens: Vec<TokenJson>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenJson {
    pub index: usize,
    pub form: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upos: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feats: Option<BTreeMap<String, String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ner: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub head: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deprel: Option<String>,
}

impl PipelineOutput {
    pub fn to_document(&self) -> DocumentJson {
        let sentences = self
            .doc
            .sentences
            .iter()
            .map(|s| SentenceJson {
                text: s.text(),
                tokens: s
                    .tokens
                    .iter()
                    .map(|t| TokenJson {
                        index: t.index,
                        form: t.form.clone(),
                        upos: t.upos.clone(),
                        feats: t.upos.as_ref().map(|_| {
                            t.feats
                                .iter()
                                .map(|(c, v)| (c.name().to_owned(), v.to_owned()))
                                .collect()
                        }),
                        ner: t.ner.clone(),
                        head: t.head,
                        deprel: t.deprel.clone(),
                    })
                    .collect(),
            })
            .collect();
        DocumentJson {
            text: self.input.clone(),
            transliteration: self.transliteration.clone(),
            sentences,
        }
    }

    /// Compact single-line JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_document()).expect("document serializes")
    }

    pub fn to_conllu(&self) -> String {
        to_conllu(std::slice::from_ref(&self.doc))
    }
}

#[cfg(test)]
mod tests {
    use std::sync::{Arc, Mutex};

    use super::*;
    use crate::encoder::{EncoderConfig, EncoderModel, SubwordVocab};
    use crate::parser::ParserConfig;
    use crate::tagger::label_vocabularies;

    #[test]
    fn spec_parsing() {
        let spec = PipelineSpec::parse("pos, ner, dp").unwrap();
        assert_eq!(spec.processors(), &[Processor::Pos, Processor::Ner, Processor::Dp]);
        let spec = PipelineSpec::parse("dp,g2g , pos").unwrap();
        assert_eq!(spec.processors(), &[Processor::G2g, Processor::Pos, Processor::Dp]);
        assert_eq!(spec.to_string(), "g2g, pos, dp");
        assert_eq!(PipelineSpec::parse("g2g").unwrap().processors(), &[Processor::G2g]);
        assert!(matches!(PipelineSpec::parse("pos, pos"), Err(Error::DuplicateProcessor(p)) if p == "pos"));
        let err = PipelineSpec::parse("pos, lemma").unwrap_err();
        assert!(matches!(&err, Error::UnknownProcessor { name, .. } if name == "lemma"));
        assert!(err.to_string().contains("g2g, pos, ner, dp"));
        assert!(PipelineSpec::parse("").is_err());
    }

    struct Probe(Arc<Mutex<Vec<String>>>);

    impl Annotator for Probe {
        fn annotate(&self, sentence: &mut Sentence) -> Result<()> {
            self.0.lock().unwrap().push(sentence.text());
            Ok(())
        }
    }

    #[test]
    fn annotators_receive_transliterated_text() {
        let seen = Arc::new(Mutex::new(Vec::new()));
        let spec = PipelineSpec::parse("pos, g2g").unwrap();
        let pipeline = Pipeline::from_parts(
            spec,
            Some(Arc::new(Transliterator::bundled())),
            vec![Box::new(Probe(seen.clone()))],
        );
        let out = pipeline.run("h athina kai h thessaloniki einai poleis").unwrap();
        assert_eq!(
            out.transliteration.as_deref(),
            Some("η αθηνα και η θεσσαλονικη ειναι πολεις")
        );
        assert_eq!(
            *seen.lock().unwrap(),
            vec!["η αθηνα και η θεσσαλονικη ειναι πολεις".to_owned()]
        );
    }

    #[test]
    fn empty_input_gives_empty_doc() {
        let pipeline = Pipeline::from_parts(
            PipelineSpec::parse("g2g").unwrap(),
            Some(Arc::new(Transliterator::bundled())),
            vec![],
        );
        let out = pipeline.run("").unwrap();
        assert!(out.doc.is_empty());
        assert_eq!(out.to_conllu(), "");
    }

    fn small_encoder(max_len: usize) -> EncoderModel {
        let config = EncoderConfig {
            dim: 4,
            layers: 1,
            max_len,
            seed: 1,
        };
        EncoderModel::new(config, SubwordVocab::from_pieces(["α", "β"]))
    }

    #[test]
    fn long_sentence_error_names_sentence() {
        let tagger = TaggerModel::new(small_encoder(3), label_vocabularies(std::iter::empty())).unwrap();
        let pipeline = Pipeline::from_parts(PipelineSpec::parse("pos").unwrap(), None, vec![Box::new(tagger)]);
        let err = pipeline.run("α β. α β γ δ ε ζ.").unwrap_err();
        assert!(matches!(err, Error::InSentence { sentence: 2, .. }));
        assert_eq!(err.code(), "sentence_too_long");
    }

    #[test]
    fn store_manifest_checks_digest() {
        let dir = tempfile::tempdir().unwrap();
        let parser = ParserModel::new(small_encoder(16), ParserConfig::default(), vec!["root".into()]).unwrap();
        container::save(&parser, dir.path().join("parser.grnlp")).unwrap();
        let spec = PipelineSpec::parse("dp").unwrap();

        let store = ModelStore::open(dir.path()).unwrap();
        assert!(Pipeline::create(&spec, &store, Decoder::Mst).is_ok());
        let err = Pipeline::create(&PipelineSpec::parse("pos").unwrap(), &store, Decoder::Greedy).unwrap_err();
        assert!(matches!(err, Error::MissingModel(_)));

        let manifest = ModelStore::write_manifest(dir.path()).unwrap();
        assert_eq!(manifest.models.keys().collect::<Vec<_>>(), vec!["dp"]);
        let mut bytes = fs::read(dir.path().join("parser.grnlp")).unwrap();
        let store = ModelStore::open(dir.path()).unwrap();
        assert!(Pipeline::create(&spec, &store, Decoder::Greedy).is_ok());

        let last = bytes.len() - 1;
        bytes[last] ^= 0xff;
        fs::write(dir.path().join("parser.grnlp"), &bytes).unwrap();
        let err = Pipeline::create(&spec, &store, Decoder::Greedy).unwrap_err();
        assert!(matches!(err, Error::ChecksumMismatch(_)));
    }

    #[test]
    fn json_output_shape() {
        let tagger = TaggerModel::new(small_encoder(16), label_vocabularies(std::iter::empty())).unwrap();
        let pipeline = Pipeline::from_parts(PipelineSpec::parse("pos").unwrap(), None, vec![Box::new(tagger)]);
        let out = pipeline.run("α β.").unwrap();
        let value: serde_json::Value = serde_json::from_str(&out.to_json()).unwrap();
        assert_eq!(value["text"], "α β.");
        assert!(value.get("transliteration").is_none());
        let tokens = value["sentences"][0]["tokens"].as_array().unwrap();
        assert_eq!(tokens.len(), 3);
        assert!(tokens.iter().all(|t| t["upos"].is_string() && t["feats"].is_object()));
        assert!(tokens.iter().all(|t| t.get("ner").is_none()));
        assert!(out.to_conllu().starts_with("# text = α β.\n1\tα\t"));
    }
}
