use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEFAULT_TABLE: &str = include_str!("../../data/greeklish.tsv");

/// Why a Latin spelling stands for a Greek one.
#[derive(Clone, Copy, Debug, Eq, Hash, Ord, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Visual,
    Phonetic,
    Keyboard,
    Digit,
}

impl Channel {
    pub fn name(self) -> &'static str {
        match self {
            Channel::Visual => "visual",
            Channel::Phonetic => "phonetic",
            Channel::Keyboard => "keyboard",
            Channel::Digit => "digit",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Channel {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s {
            "visual" => Ok(Channel::Visual),
            "phonetic" => Ok(Channel::Phonetic),
            "keyboard" => Ok(Channel::Keyboard),
            "digit" => Ok(Channel::Digit),
            _ => Err(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MappingEntry {
    pub latin: String,
    pub greek: String,
    pub channel: Channel,
    /// Log-domain score, at most 0.
    pub weight: f64,
}

/// Latin-to-Greek spelling correspondences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MappingTable {
    entries: Vec<MappingEntry>,
}

impl MappingTable {
    /// Validates entries: nonempty sides of 1–3 Latin and 1–2 Greek
    /// characters, finite non-positive weights, and every Greek lowercase
    /// letter covered.
    pub fn new(entries: Vec<MappingEntry>) -> Result<Self> {
        for (i, e) in entries.iter().enumerate() {
            validate(e).map_err(|message| Error::MappingTable { line: i + 1, message })?;
        }
        let table = MappingTable { entries };
        if let Some(c) = ('α'..='ω').find(|&c| !table.inverse().contains_key(c.to_string().as_str())) {
            return Err(Error::UnmappedCharacter(c));
        }
        Ok(table)
    }

    /// Parses the TSV format `latin\tgreek\tchannel\tweight`. Lines starting
    /// with `#` and blank lines are ignored; the weight column is optional.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let bad = |message: String| Error::MappingTable { line: i + 1, message };
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if !(3..=4).contains(&fields.len()) {
                return Err(bad(format!(
                    "expected 3 or 4 tab-separated fields, found {}",
                    fields.len()
                )));
            }
            let channel = fields[2]
                .parse()
                .map_err(|_| bad(format!("unknown channel `{}`", fields[2])))?;
            let weight = match fields.get(3) {
                Some(w) => w.trim().parse().map_err(|_| bad(format!("bad weight `{w}`")))?,
                None => 0.0,
            };
            let entry = MappingEntry {
                latin: fields[0].to_lowercase(),
                greek: fields[1].to_owned(),
                channel,
                weight,
            };
            validate(&entry).map_err(bad)?;
            entries.push(entry);
        }
        MappingTable::new(entries)
    }

    /// The shipped table covering visual, phonetic and keyboard spellings.
    pub fn default_table() -> Self {
        MappingTable::parse(DEFAULT_TABLE).expect("shipped mapping table is valid")
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("# latin\tgreek\tchannel\tweight\n");
        for e in &self.entries {
            out.push_str(&format!("{}\t{}\t{}\t{}\n", e.latin, e.greek, e.channel, e.weight));
        }
        out
    }

    pub fn entries(&self) -> &[MappingEntry] {
        &self.entries
    }

    /// Sets the weight of every entry of one channel.
    pub fn with_channel_weight(mut self, channel: Channel, weight: f64) -> Result<Self> {
        if !weight.is_finite() || weight > 0.0 {
            return Err(Error::MappingTable {
                line: 0,
                message: format!("weight {weight} must be finite and at most 0"),
            });
        }
        for e in self.entries.iter_mut().filter(|e| e.channel == channel) {
            e.weight = weight;
        }
        Ok(self)
    }

    /// Longest Latin side, in characters.
    pub fn max_latin_len(&self) -> usize {
        self.entries.iter().map(|e| e.latin.chars().count()).max().unwrap_or(1)
    }

    /// Largest ratio of Greek to Latin length over all entries.
    pub fn max_expansion(&self) -> usize {
        self.entries
            .iter()
            .map(|e| e.greek.chars().count().div_ceil(e.latin.chars().count()))
            .max()
            .unwrap_or(1)
    }

    /// Greek spelling to its distinct Latin variants, in table order.
    pub fn inverse(&self) -> BTreeMap<&str, Vec<&str>> {
        let mut map: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for e in &self.entries {
            let variants = map.entry(e.greek.as_str()).or_default();
            if !variants.contains(&e.latin.as_str()) {
                variants.push(e.latin.as_str());
            }
        }
        map
    }
}

fn validate(e: &MappingEntry) -> std::result::Result<(), String> {
    let latin_len = e.latin.chars().count();
    if !(1..=3).contains(&latin_len) {
        return Err(format!("latin side `{}` must have 1 to 3 characters", e.latin));
    }
    let greek_len = e.greek.chars().count();
    if !(1..=2).contains(&greek_len) {
        return Err(format!("greek side `{}` must have 1 to 2 characters", e.greek));
    }
    if !e.weight.is_finite() || e.weight > 0.0 {
        return Err(format!("weight {} must be finite and at most 0", e.weight));
    }
    Ok(())
}

impl Default for MappingTable {
    fn default() -> Self {
        MappingTable::default_table()
    }
}
