//! Plain-text exchange formats for codebooks and codeword labels.
//!
//! ```text
//! DISTSPEC-CB 1 <site_id> <n_s> <d>
//! <group_id> <weight> <c1> ... <cd>        (n_s lines)
//!
//! DISTSPEC-LB 1 <site_id> <count>
//! <group_id> <label>                       (count lines)
//! ```
//!
//! Single spaces, `\n` line ends. Floats use the shortest decimal that
//! parses back to the same bits.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::site::{CodebookEntry, CodebookMessage, LabelMessage};

pub const CODEBOOK_MAGIC: &str = "DISTSPEC-CB";
pub const LABELS_MAGIC: &str = "DISTSPEC-LB";
pub const FORMAT_VERSION: u32 = 1;

fn push_float(out: &mut String, x: f64) {
    use std::fmt::Write as _;
    let a = x.abs();
    if a != 0.0 && !(1e-5..1e16).contains(&a) {
        write!(out, "{x:e}").unwrap();
    } else {
        write!(out, "{x}").unwrap();
    }
}

fn emit<W: Write>(sink: &mut W, text: &str) -> Result<usize> {
    sink.write_all(text.as_bytes())?;
    Ok(text.len())
}

pub fn encode_codebook(msg: &CodebookMessage) -> Result<String> {
    msg.validate()?;
    let mut out = format!(
        "{CODEBOOK_MAGIC} {FORMAT_VERSION} {} {} {}\n",
        msg.site_id,
        msg.entries.len(),
        msg.dim
    );
    for e in &msg.entries {
        out.push_str(&format!("{} {}", e.group_id, e.weight));
        for &x in &e.centroid {
            out.push(' ');
            push_float(&mut out, x);
        }
        out.push('\n');
    }
    Ok(out)
}

/// Writes a codebook and returns the number of bytes written.
pub fn write_codebook<W: Write>(msg: &CodebookMessage, sink: &mut W) -> Result<usize> {
    emit(sink, &encode_codebook(msg)?)
}

pub fn write_labels<W: Write>(msg: &LabelMessage, sink: &mut W) -> Result<usize> {
    if msg.labels.is_empty() {
        return Err(Error::InvalidCodebook(format!(
            "label message for site {} is empty",
            msg.site_id
        )));
    }
    let mut out = format!("{LABELS_MAGIC} {FORMAT_VERSION} {} {}\n", msg.site_id, msg.labels.len());
    for (g, l) in &msg.labels {
        out.push_str(&format!("{g} {l}\n"));
    }
    emit(sink, &out)
}

struct Lines<R> {
    inner: R,
    number: usize,
    buf: String,
}

impl<R: BufRead> Lines<R> {
    fn new(inner: R) -> Self {
        Self {
            inner,
            number: 0,
            buf: String::new(),
        }
    }

    fn next_line(&mut self) -> Result<Option<&str>> {
        self.buf.clear();
        if self.inner.read_line(&mut self.buf)? == 0 {
            return Ok(None);
        }
        self.number += 1;
        Ok(Some(self.buf.trim_end_matches(['\n', '\r'])))
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.number,
            message: message.into(),
        }
    }

    /// Fails unless only blank lines remain.
    fn expect_end(&mut self) -> Result<()> {
        while let Some(line) = self.next_line()? {
            if !line.trim().is_empty() {
                let msg = "record count mismatch: more records than the header declares";
                return Err(self.err(msg));
            }
        }
        Ok(())
    }
}

fn parse_token<T: std::str::FromStr>(tok: &str, what: &str, line: usize) -> Result<T> {
    tok.parse().map_err(|_| Error::Parse {
        line,
        message: format!("cannot parse {what} `{tok}`"),
    })
}

fn parse_header(line: &str, magic: &str, fields: usize, at: usize) -> Result<Vec<u64>> {
    let tokens: Vec<&str> = line.split(' ').collect();
    if tokens.first() != Some(&magic) {
        return Err(Error::Parse {
            line: at,
            message: format!("bad magic, expected `{magic}`"),
        });
    }
    if tokens.len() != fields + 2 {
        return Err(Error::Parse {
            line: at,
            message: format!("header needs {} fields", fields + 2),
        });
    }
    let version: u32 = parse_token(tokens[1], "version", at)?;
    if version != FORMAT_VERSION {
        return Err(Error::Parse {
            line: at,
            message: format!("version mismatch: expected {FORMAT_VERSION}, got {version}"),
        });
    }
    tokens[2..]
        .iter()
        .map(|t| parse_token(t, "header field", at))
        .collect()
}

pub fn read_codebook<R: BufRead>(source: R) -> Result<CodebookMessage> {
    let mut lines = Lines::new(source);
    let header = lines
        .next_line()?
        .ok_or_else(|| Error::Parse {
            line: 1,
            message: "empty input".into(),
        })?
        .to_owned();
    let h = parse_header(&header, CODEBOOK_MAGIC, 3, 1)?;
    let site_id = u32::try_from(h[0]).map_err(|_| lines.err("site id out of range"))?;
    let (count, dim) = (h[1] as usize, h[2] as usize);
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let Some(line) = lines.next_line()?.map(str::to_owned) else {
            return Err(lines.err(format!(
                "record count mismatch: header declares {count}, found {}",
                entries.len()
            )));
        };
        let tokens: Vec<&str> = line.split(' ').collect();
        let at = lines.number;
        if tokens.len() != dim + 2 {
            return Err(lines.err(format!("expected {} fields, got {}", dim + 2, tokens.len())));
        }
        let group_id = parse_token(tokens[0], "group id", at)?;
        let weight = parse_token(tokens[1], "weight", at)?;
        let centroid = tokens[2..]
            .iter()
            .map(|t| parse_token::<f64>(t, "float", at))
            .collect::<Result<Vec<_>>>()?;
        entries.push(CodebookEntry {
            group_id,
            weight,
            centroid,
        });
    }
    lines.expect_end()?;
    let msg = CodebookMessage {
        site_id,
        dim,
        entries,
    };
    msg.validate()?;
    Ok(msg)
}

pub fn read_labels<R: BufRead>(source: R) -> Result<LabelMessage> {
    let mut lines = Lines::new(source);
    let header = lines
        .next_line()?
        .ok_or_else(|| Error::Parse {
            line: 1,
            message: "empty input".into(),
        })?
        .to_owned();
    let h = parse_header(&header, LABELS_MAGIC, 2, 1)?;
    let site_id = u32::try_from(h[0]).map_err(|_| lines.err("site id out of range"))?;
    let count = h[1] as usize;
    if count == 0 {
        return Err(lines.err("label message is empty"));
    }
    let mut labels = BTreeMap::new();
    for i in 0..count {
        let Some(line) = lines.next_line()?.map(str::to_owned) else {
            return Err(lines.err(format!(
                "record count mismatch: header declares {count}, found {i}"
            )));
        };
        let at = lines.number;
        let tokens: Vec<&str> = line.split(' ').collect();
        if tokens.len() != 2 {
            return Err(lines.err(format!("expected 2 fields, got {}", tokens.len())));
        }
        let group: usize = parse_token(tokens[0], "group id", at)?;
        let label: usize = parse_token(tokens[1], "label", at)?;
        if labels.insert(group, label).is_some() {
            return Err(lines.err(format!("duplicate group id {group}")));
        }
    }
    lines.expect_end()?;
    Ok(LabelMessage { site_id, labels })
}

/// Checks that a label message answers exactly the groups of a codebook.
pub fn check_labels_cover(codebook: &CodebookMessage, labels: &LabelMessage) -> Result<()> {
    if codebook.site_id != labels.site_id {
        return Err(Error::InvalidCodebook(format!(
            "labels for site {} paired with codebook of site {}",
            labels.site_id, codebook.site_id
        )));
    }
    let groups: BTreeSet<usize> = codebook.entries.iter().map(|e| e.group_id).collect();
    let labelled: BTreeSet<usize> = labels.labels.keys().copied().collect();
    if let Some(g) = groups.difference(&labelled).next() {
        return Err(Error::MissingGroupLabel(*g));
    }
    if let Some(g) = labelled.difference(&groups).next() {
        return Err(Error::InvalidCodebook(format!("label for unknown group {g}")));
    }
    Ok(())
}
