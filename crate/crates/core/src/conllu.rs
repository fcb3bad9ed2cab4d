//! CoNLL-U reading and writing.
//!
//! Only FORM, UPOS, FEATS, HEAD and DEPREL are modeled. LEMMA, XPOS, DEPS,
//! unmodeled FEATS and MISC entries, comments, multiword-token ranges and
//! empty nodes are carried through unchanged. NER tags live in MISC as
//! `NER=<tag>` and missing spaces as `SpaceAfter=No`.

use std::fmt::Write as _;
use std::io::{self, BufRead, Write};

use crate::doc::{Doc, MorphCategory, MorphFeatures, Passthrough, Sentence, Token};
use crate::error::{Error, Result};
use crate::ner::NerTag;

fn parse_error(line: usize, message: impl Into<String>) -> Error {
    Error::Conllu {
        line,
        message: message.into(),
    }
}

fn optional(field: &str) -> Option<String> {
    if field == "_" {
        None
    } else {
        Some(field.to_owned())
    }
}

fn parse_feats(field: &str, line: usize) -> Result<(MorphFeatures, Vec<(String, String)>)> {
    let mut known = MorphFeatures::new();
    let mut other = Vec::new();
    if field == "_" {
        return Ok((known, other));
    }
    for pair in field.split('|') {
        let (cat, val) = pair
            .split_once('=')
            .filter(|(c, v)| !c.is_empty() && !v.is_empty())
            .ok_or_else(|| parse_error(line, format!("malformed feature `{pair}`")))?;
        match cat.parse::<MorphCategory>() {
            Ok(category) => known.insert(category, val),
            Err(()) => other.push((cat.to_owned(), val.to_owned())),
        }
    }
    Ok((known, other))
}

/// Reads all documents from a CoNLL-U stream. A `# newdoc` comment starts a
/// new document.
pub fn read_conllu<R: BufRead>(reader: R) -> Result<Vec<Doc>> {
    let mut docs: Vec<Vec<Sentence>> = Vec::new();
    let mut sentence = Sentence::default();
    let mut token_lines: Vec<usize> = Vec::new();
    let mut newdoc = false;

    let finish = |at: usize,
                  sentence: &mut Sentence,
                  token_lines: &mut Vec<usize>,
                  newdoc: &mut bool,
                  docs: &mut Vec<Vec<Sentence>>|
     -> Result<()> {
        if sentence.tokens.is_empty() && sentence.comments.is_empty() {
            return Ok(());
        }
        if sentence.tokens.is_empty() {
            return Err(parse_error(at, "sentence without tokens"));
        }
        let n = sentence.tokens.len();
        for (token, &line) in sentence.tokens.iter().zip(token_lines.iter()) {
            if let Some(head) = token.head {
                if head > n || head == token.index {
                    return Err(parse_error(
                        line,
                        format!("head {head} invalid for word {} of {n}", token.index),
                    ));
                }
            }
        }
        if *newdoc || docs.is_empty() {
            docs.push(Vec::new());
        }
        docs.last_mut().unwrap().push(std::mem::take(sentence));
        token_lines.clear();
        *newdoc = false;
        Ok(())
    };

    let mut last_line = 0;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);

        if line.trim().is_empty() {
            finish(line_no, &mut sentence, &mut token_lines, &mut newdoc, &mut docs)?;
            continue;
        }

        if let Some(comment) = line.strip_prefix('#') {
            if sentence.tokens.is_empty() && comment.trim_start().starts_with("newdoc") {
                newdoc = true;
            }
            if !sentence.tokens.is_empty() {
                return Err(parse_error(line_no, "comment inside a sentence"));
            }
            sentence.comments.push(comment.to_owned());
            continue;
        }

        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 10 {
            return Err(parse_error(
                line_no,
                format!("expected 10 tab-separated columns, found {}", fields.len()),
            ));
        }

        let id = fields[0];
        if id.contains('-') || id.contains('.') {
            sentence.raw_lines.push((sentence.tokens.len(), line.to_owned()));
            continue;
        }
        let index: usize = id
            .parse()
            .map_err(|_| parse_error(line_no, format!("invalid ID `{id}`")))?;
        if index != sentence.tokens.len() + 1 {
            return Err(parse_error(
                line_no,
                format!("expected ID {}, found {index}", sentence.tokens.len() + 1),
            ));
        }
        if fields[1].is_empty() {
            return Err(parse_error(line_no, "empty FORM"));
        }

        let (feats, other_feats) = parse_feats(fields[5], line_no)?;
        let head = match fields[6] {
            "_" => None,
            h => Some(
                h.parse::<usize>()
                    .map_err(|_| parse_error(line_no, format!("invalid HEAD `{h}`")))?,
            ),
        };

        let mut token = Token::new(index, fields[1]);
        token.upos = optional(fields[3]);
        token.feats = feats;
        token.head = head;
        token.deprel = optional(fields[7]);
        token.passthrough = Passthrough {
            lemma: optional(fields[2]),
            xpos: optional(fields[4]),
            deps: optional(fields[8]),
            misc: Vec::new(),
            feats: other_feats,
        };

        if fields[9] != "_" {
            for entry in fields[9].split('|') {
                if let Some(tag) = entry.strip_prefix("NER=") {
                    tag.parse::<NerTag>()
                        .map_err(|_| parse_error(line_no, format!("invalid NER tag `{tag}`")))?;
                    token.ner = Some(tag.to_owned());
                } else if entry == "SpaceAfter=No" {
                    token.space_after = false;
                } else {
                    token.passthrough.misc.push(entry.to_owned());
                }
            }
        }

        sentence.tokens.push(token);
        token_lines.push(line_no);
    }
    finish(last_line, &mut sentence, &mut token_lines, &mut newdoc, &mut docs)?;

    Ok(docs
        .into_iter()
        .map(|sentences| {
            let mut doc = Doc::from_sentences(sentences);
            let texts: Vec<String> = doc
                .sentences
                .iter()
                .map(|s| {
                    s.comments
                        .iter()
                        .find_map(|c| c.trim_start().strip_prefix("text = "))
                        .map_or_else(|| s.text(), str::to_owned)
                })
                .collect();
            doc.raw_text = texts.join(" ");
            doc
        })
        .collect())
}

/// Parses CoNLL-U from a string.
pub fn parse_conllu(text: &str) -> Result<Vec<Doc>> {
    read_conllu(text.as_bytes())
}

fn feats_cell(token: &Token) -> String {
    let mut pairs: Vec<(&str, &str)> = token
        .feats
        .iter()
        .map(|(c, v)| (c.name(), v))
        .chain(token.passthrough.feats.iter().map(|(c, v)| (c.as_str(), v.as_str())))
        .collect();
    if pairs.is_empty() {
        return "_".to_owned();
    }
    pairs.sort_by(|a, b| a.0.to_lowercase().cmp(&b.0.to_lowercase()).then(a.0.cmp(b.0)));
    pairs
        .iter()
        .map(|(c, v)| format!("{c}={v}"))
        .collect::<Vec<_>>()
        .join("|")
}

fn misc_cell(token: &Token) -> String {
    let mut entries: Vec<String> = token.passthrough.misc.clone();
    if let Some(ner) = &token.ner {
        entries.push(format!("NER={ner}"));
    }
    if !token.space_after {
        entries.push("SpaceAfter=No".to_owned());
    }
    if entries.is_empty() {
        return "_".to_owned();
    }
    entries.sort();
    entries.join("|")
}

fn or_blank(value: &Option<String>) -> &str {
    value.as_deref().unwrap_or("_")
}

/// Formats a single sentence, including its trailing blank line.
pub fn sentence_to_conllu(sentence: &Sentence) -> String {
    let mut out = String::new();
    for comment in &sentence.comments {
        let _ = writeln!(out, "#{comment}");
    }
    let mut raw = sentence.raw_lines.iter().peekable();
    for (pos, token) in sentence.tokens.iter().enumerate() {
        while let Some((_, line)) = raw.next_if(|(before, _)| *before == pos) {
            let _ = writeln!(out, "{line}");
        }
        let head = token.head.map(|h| h.to_string()).unwrap_or_else(|| "_".to_owned());
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            token.index,
            token.form,
            or_blank(&token.passthrough.lemma),
            or_blank(&token.upos),
            or_blank(&token.passthrough.xpos),
            feats_cell(token),
            head,
            or_blank(&token.deprel),
            or_blank(&token.passthrough.deps),
            misc_cell(token),
        );
    }
    for (_, line) in raw {
        let _ = writeln!(out, "{line}");
    }
    out.push('\n');
    out
}

/// Formats documents as CoNLL-U.
pub fn to_conllu(docs: &[Doc]) -> String {
    docs.iter()
        .flat_map(|d| d.sentences.iter())
        .map(sentence_to_conllu)
        .collect()
}

/// Writes documents as CoNLL-U.
pub fn write_conllu<W: Write>(mut writer: W, docs: &[Doc]) -> io::Result<()> {
    writer.write_all(to_conllu(docs).as_bytes())
}
