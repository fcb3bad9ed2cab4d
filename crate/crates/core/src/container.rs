//! Binary model container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "GRNLP1" | u32 manifest length | manifest JSON
//! | u32 tensor count | per tensor: u16 name length, name, u8 rank,
//!   u32 per dimension, f32 values in row-major order
//! | SHA-256 of every preceding byte
//! ```
//!
//! Weights are stored as 32-bit floats, so a loaded model can differ from
//! the saved one by rounding; saving it again reproduces the same bytes.

use std::fs;
use std::path::Path;

use ndarray::{ArrayViewD, ArrayViewMutD};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::encoder::{EncoderConfig, EncoderModel, SubwordVocab};
use crate::error::{Error, Result};
use crate::g2g::{CharNgramLM, G2gConfig, LmData, MappingTable, Transliterator};
use crate::ner::NerModel;
use crate::nn::Parameters;
use crate::parser::{ParserConfig, ParserModel};
use crate::tagger::{HeadLabels, TaggerModel};

pub const MAGIC: &[u8; 6] = b"GRNLP1";
pub const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub component: String,
    pub seed: u64,
    pub config: Value,
    pub vocab: Vec<String>,
    pub labels: Value,
    pub tensors: Vec<TensorInfo>,
    pub extra: Value,
}

/// Component-specific part of a manifest.
#[derive(Clone, Debug, PartialEq)]
pub struct Header {
    pub seed: u64,
    pub config: Value,
    pub vocab: Vec<String>,
    pub labels: Value,
    pub extra: Value,
}

/// A model that can be written to and read from a container.
pub trait Stored: Sized {
    const COMPONENT: &'static str;

    fn header(&self) -> Result<Header>;

    /// Builds a model with the right tensor shapes; weights are overwritten
    /// by the loader.
    fn skeleton(header: Header) -> Result<Self>;

    fn stored_tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)>;

    fn stored_tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>>;
}

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn to_bytes<M: Stored>(model: &M) -> Result<Vec<u8>> {
    let header = model.header()?;
    let tensors = model.stored_tensors();
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        component: M::COMPONENT.to_owned(),
        seed: header.seed,
        config: header.config,
        vocab: header.vocab,
        labels: header.labels,
        tensors: tensors
            .iter()
            .map(|(name, t)| TensorInfo {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
        extra: header.extra,
    };
    let json = serde_json::to_vec(&manifest)?;
    let mut out = Vec::with_capacity(json.len() + 64);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&len_u32(json.len())?.to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&len_u32(tensors.len())?.to_le_bytes());
    for (name, t) in &tensors {
        let name_len =
            u16::try_from(name.len()).map_err(|_| Error::Container(format!("tensor name `{name}` too long")))?;
        let rank =
            u8::try_from(t.ndim()).map_err(|_| Error::Container(format!("tensor `{name}` has too many axes")))?;
        out.extend_from_slice(&name_len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(rank);
        for &dim in t.shape() {
            out.extend_from_slice(&len_u32(dim)?.to_le_bytes());
        }
        for &v in t.iter() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

/// Reads the manifest after validating magic, checksum and version.
pub fn read_manifest(bytes: &[u8]) -> Result<Manifest> {
    Ok(parse(bytes)?.0)
}

pub fn from_bytes<M: Stored>(bytes: &[u8]) -> Result<M> {
    let (manifest, mut reader) = parse(bytes)?;
    if manifest.component != M::COMPONENT {
        return Err(Error::Container(format!(
            "container holds a `{}` model, expected `{}`",
            manifest.component,
            M::COMPONENT
        )));
    }
    let mut model = M::skeleton(Header {
        seed: manifest.seed,
        config: manifest.config,
        vocab: manifest.vocab,
        labels: manifest.labels,
        extra: manifest.extra,
    })?;
    let expected: Vec<TensorInfo> = model
        .stored_tensors()
        .iter()
        .map(|(name, t)| TensorInfo {
            name: name.clone(),
            shape: t.shape().to_vec(),
        })
        .collect();
    if manifest.tensors != expected {
        return Err(Error::Container(
            "manifest tensor table does not match the model".into(),
        ));
    }
    let count = reader.u32()? as usize;
    if count != expected.len() {
        return Err(Error::Container(format!(
            "expected {} tensors, found {count}",
            expected.len()
        )));
    }
    for (info, mut dst) in expected.iter().zip(model.stored_tensors_mut()) {
        let name_len = reader.u16()? as usize;
        let name = std::str::from_utf8(reader.take(name_len)?)
            .map_err(|_| Error::Container("tensor name is not UTF-8".into()))?;
        if name != info.name {
            return Err(Error::Container(format!(
                "missing tensor `{}`, found `{name}`",
                info.name
            )));
        }
        let rank = reader.u8()? as usize;
        let shape = (0..rank)
            .map(|_| reader.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        if shape != info.shape {
            return Err(Error::Container(format!(
                "tensor `{name}` has shape {shape:?}, expected {:?}",
                info.shape
            )));
        }
        for slot in dst.iter_mut() {
            let raw = reader.take(4)?;
            *slot = f32::from_le_bytes([raw[0], raw[1], raw[2], raw[3]]) as f64;
        }
    }
    if reader.pos != reader.bytes.len() {
        return Err(Error::Container("trailing bytes after tensor data".into()));
    }
    Ok(model)
}

pub fn save<M: Stored>(model: &M, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_bytes(model)?)?;
    Ok(())
}

pub fn load<M: Stored>(path: impl AsRef<Path>) -> Result<M> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    from_bytes(&bytes).map_err(|e| match e {
        Error::ChecksumMismatch(_) => Error::ChecksumMismatch(path.display().to_string()),
        other => other,
    })
}

fn len_u32(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Container(format!("length {n} exceeds 32 bits")))
}

/// Checks the envelope and returns the manifest plus a reader positioned
/// at the tensor count.
fn parse(bytes: &[u8]) -> Result<(Manifest, Reader<'_>)> {
    if bytes.len() < MAGIC.len() + DIGEST_LEN || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Container("not a model container".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::ChecksumMismatch("model container".into()));
    }
    let mut reader = Reader {
        bytes: body,
        pos: MAGIC.len(),
    };
    let len = reader.u32()? as usize;
    let value: Value = serde_json::from_slice(reader.take(len)?)?;
    let found = value
        .get("format_version")
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::Container("manifest has no format version".into()))?;
    if found != FORMAT_VERSION as u64 {
        return Err(Error::VersionMismatch {
            found: found.min(u32::MAX as u64) as u32,
            expected: FORMAT_VERSION,
        });
    }
    Ok((serde_json::from_value(value)?, reader))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Container("truncated container".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

#[derive(Serialize, Deserialize)]
struct ParserSettings {
    encoder: EncoderConfig,
    parser: ParserConfig,
}

#[derive(Serialize, Deserialize)]
struct G2gExtra {
    table: String,
    lm: LmData,
}

fn encoder_skeleton(config: &Value, vocab: Vec<String>) -> Result<EncoderModel> {
    let config: EncoderConfig = serde_json::from_value(config.clone())?;
    Ok(EncoderModel::new(config, SubwordVocab::from_pieces(vocab)))
}

fn vocab_pieces(encoder: &EncoderModel) -> Vec<String> {
    encoder.vocab.pieces()[3..].to_vec()
}

impl Stored for TaggerModel {
    const COMPONENT: &'static str = "tagger";

    fn header(&self) -> Result<Header> {
        Ok(Header {
            seed: self.encoder.config.seed,
            config: serde_json::to_value(&self.encoder.config)?,
            vocab: vocab_pieces(&self.encoder),
            labels: serde_json::to_value(&self.labels)?,
            extra: Value::Null,
        })
    }

    fn skeleton(header: Header) -> Result<Self> {
        let labels: Vec<HeadLabels> = serde_json::from_value(header.labels)?;
        TaggerModel::new(encoder_skeleton(&header.config, header.vocab)?, labels)
    }

    fn stored_tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        self.tensors()
    }

    fn stored_tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>> {
        self.tensors_mut()
    }
}

impl Stored for NerModel {
    const COMPONENT: &'static str = "ner";

    fn header(&self) -> Result<Header> {
        Ok(Header {
            seed: self.encoder.config.seed,
            config: serde_json::to_value(&self.encoder.config)?,
            vocab: vocab_pieces(&self.encoder),
            labels: serde_json::to_value(
                (0..crate::ner::TAGSET_SIZE)
                    .map(|i| crate::ner::NerTag::from_id(i).to_string())
                    .collect::<Vec<_>>(),
            )?,
            extra: Value::Null,
        })
    }

    fn skeleton(header: Header) -> Result<Self> {
        let labels: Vec<String> = serde_json::from_value(header.labels)?;
        let expected: Vec<String> = (0..crate::ner::TAGSET_SIZE)
            .map(|i| crate::ner::NerTag::from_id(i).to_string())
            .collect();
        if labels != expected {
            return Err(Error::InvalidModel("NER tag inventory differs from this build".into()));
        }
        Ok(NerModel::new(encoder_skeleton(&header.config, header.vocab)?))
    }

    fn stored_tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        self.tensors()
    }

    fn stored_tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>> {
        self.tensors_mut()
    }
}

impl Stored for ParserModel {
    const COMPONENT: &'static str = "parser";

    fn header(&self) -> Result<Header> {
        Ok(Header {
            seed: self.encoder.config.seed,
            config: serde_json::to_value(ParserSettings {
                encoder: self.encoder.config.clone(),
                parser: self.config,
            })?,
            vocab: vocab_pieces(&self.encoder),
            labels: serde_json::to_value(&self.labels)?,
            extra: Value::Null,
        })
    }

    fn skeleton(header: Header) -> Result<Self> {
        let settings: ParserSettings = serde_json::from_value(header.config)?;
        let labels: Vec<String> = serde_json::from_value(header.labels)?;
        let encoder = EncoderModel::new(settings.encoder, SubwordVocab::from_pieces(header.vocab));
        ParserModel::new(encoder, settings.parser, labels)
    }

    fn stored_tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        self.tensors()
    }

    fn stored_tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>> {
        self.tensors_mut()
    }
}

impl Stored for Transliterator {
    const COMPONENT: &'static str = "g2g";

    fn header(&self) -> Result<Header> {
        Ok(Header {
            seed: 0,
            config: serde_json::to_value(self.config)?,
            vocab: Vec::new(),
            labels: Value::Null,
            extra: serde_json::to_value(G2gExtra {
                table: self.table.to_tsv(),
                lm: self.lm.to_data(),
            })?,
        })
    }

    fn skeleton(header: Header) -> Result<Self> {
        let config: G2gConfig = serde_json::from_value(header.config)?;
        let extra: G2gExtra = serde_json::from_value(header.extra)?;
        let lm = CharNgramLM::from_data(extra.lm)?;
        if lm.order() != config.order {
            return Err(Error::InvalidModel(
                "language model order differs from the config".into(),
            ));
        }
        Ok(Transliterator::new(MappingTable::parse(&extra.table)?, lm, config))
    }

    fn stored_tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        Vec::new()
    }

    fn stored_tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>> {
        Vec::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::RelConcat;
    use crate::tagger::label_vocabularies;

    fn encoder() -> EncoderModel {
        let config = EncoderConfig {
            dim: 6,
            layers: 1,
            max_len: 32,
            seed: 3,
        };
        EncoderModel::new(config, SubwordVocab::from_pieces(["α", "β", "αβ", "γ"]))
    }

    fn parser() -> ParserModel {
        let config = ParserConfig {
            proj_dim: 4,
            rel_concat: RelConcat::HeadDep,
            ..ParserConfig::default()
        };
        ParserModel::new(encoder(), config, vec!["nsubj".into(), "root".into()]).unwrap()
    }

    fn assert_round_trip<M: Stored>(model: &M) -> M {
        let bytes = to_bytes(model).unwrap();
        let back: M = from_bytes(&bytes).unwrap();
        assert_eq!(to_bytes(&back).unwrap(), bytes);
        back
    }

    #[test]
    fn layout_prefix() {
        let bytes = to_bytes(&NerModel::new(encoder())).unwrap();
        assert_eq!(&bytes[..6], b"GRNLP1");
        let len = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let manifest: Manifest = serde_json::from_slice(&bytes[10..10 + len]).unwrap();
        assert_eq!(manifest.format_version, 1);
        assert_eq!(manifest.component, "ner");
        assert_eq!(manifest.tensors.last().unwrap().shape, vec![73, 6]);
        let digest = Sha256::digest(&bytes[..bytes.len() - 32]);
        assert_eq!(&bytes[bytes.len() - 32..], digest.as_slice());
    }

    #[test]
    fn byte_identical_round_trips() {
        assert_round_trip(&NerModel::new(encoder()));
        let back = assert_round_trip(&parser());
        assert_eq!(back.config, parser().config);
        let labels = label_vocabularies(std::iter::empty());
        assert_round_trip(&TaggerModel::new(encoder(), labels).unwrap());
        let g2g = assert_round_trip(&Transliterator::bundled());
        assert_eq!(g2g, Transliterator::bundled());
    }

    #[test]
    fn weights_survive_as_f32() {
        let model = parser();
        let back: ParserModel = from_bytes(&to_bytes(&model).unwrap()).unwrap();
        for ((_, a), (_, b)) in model.tensors().iter().zip(back.tensors().iter()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert_eq!(*y, *x as f32 as f64);
            }
        }
    }

    #[test]
    fn corrupted_byte_fails_checksum() {
        let mut bytes = to_bytes(&NerModel::new(encoder())).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 1;
        assert!(matches!(
            from_bytes::<NerModel>(&bytes),
            Err(Error::ChecksumMismatch(_))
        ));
    }

    fn reseal(mut body: Vec<u8>) -> Vec<u8> {
        let digest = Sha256::digest(&body);
        body.extend_from_slice(&digest);
        body
    }

    fn replace_manifest(bytes: &[u8], edit: impl FnOnce(&mut Manifest)) -> Vec<u8> {
        let len = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let mut manifest: Manifest = serde_json::from_slice(&bytes[10..10 + len]).unwrap();
        edit(&mut manifest);
        let json = serde_json::to_vec(&manifest).unwrap();
        let mut body = MAGIC.to_vec();
        body.extend_from_slice(&(json.len() as u32).to_le_bytes());
        body.extend_from_slice(&json);
        body.extend_from_slice(&bytes[10 + len..bytes.len() - 32]);
        reseal(body)
    }

    #[test]
    fn version_mismatch() {
        let bytes = to_bytes(&NerModel::new(encoder())).unwrap();
        let bumped = replace_manifest(&bytes, |m| m.format_version = 2);
        assert!(matches!(
            from_bytes::<NerModel>(&bumped),
            Err(Error::VersionMismatch { found: 2, expected: 1 })
        ));
    }

    #[test]
    fn declared_shape_must_match() {
        let bytes = to_bytes(&NerModel::new(encoder())).unwrap();
        let bad = replace_manifest(&bytes, |m| m.tensors[0].shape[0] += 1);
        assert!(matches!(from_bytes::<NerModel>(&bad), Err(Error::Container(_))));
        let missing = replace_manifest(&bytes, |m| {
            m.tensors.pop();
        });
        assert!(matches!(from_bytes::<NerModel>(&missing), Err(Error::Container(_))));
    }

    #[test]
    fn truncated_tensor_data() {
        let bytes = to_bytes(&NerModel::new(encoder())).unwrap();
        let body = bytes[..bytes.len() - 32 - 4].to_vec();
        assert!(matches!(
            from_bytes::<NerModel>(&reseal(body)),
            Err(Error::Container(_))
        ));
    }

    #[test]
    fn wrong_component() {
        let bytes = to_bytes(&NerModel::new(encoder())).unwrap();
        assert!(matches!(from_bytes::<ParserModel>(&bytes), Err(Error::Container(_))));
        assert!(matches!(from_bytes::<NerModel>(b"nope"), Err(Error::Container(_))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("parser.grnlp");
        save(&parser(), &path).unwrap();
        let back: ParserModel = load(&path).unwrap();
        save(&back, dir.path().join("again.grnlp")).unwrap();
        assert_eq!(
            fs::read(&path).unwrap(),
            fs::read(dir.path().join("again.grnlp")).unwrap()
        );
    }
}
