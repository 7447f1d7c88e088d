//! Shared helpers for the line-oriented text artifacts.

use std::fmt::Write as _;

use crate::env::EnvId;
use crate::error::{Error, Result};

pub(crate) fn fmt_float(out: &mut String, v: f64) {
    write!(out, "{v:.16e}").expect("writing to a String cannot fail");
}

pub(crate) fn write_row(out: &mut String, values: impl IntoIterator<Item = f64>) {
    for (i, v) in values.into_iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        fmt_float(out, v);
    }
    out.push('\n');
}

pub(crate) fn parse_row(line: &str, line_no: usize, expected: usize) -> Result<Vec<f64>> {
    let values = line
        .split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|e| Error::format(line_no, format!("bad number `{tok}`: {e}")))
        })
        .collect::<Result<Vec<f64>>>()?;
    if values.len() != expected {
        return Err(Error::format(
            line_no,
            format!("expected {expected} values, found {}", values.len()),
        ));
    }
    Ok(values)
}

/// Splits text into lines, requiring a terminating newline so that a file cut
/// off mid-record is rejected.
pub(crate) fn complete_lines(text: &str) -> Result<Vec<&str>> {
    if !text.ends_with('\n') {
        let n = text.lines().count();
        return Err(Error::format(n, "file is truncated (missing final newline)"));
    }
    Ok(text.lines().collect())
}

/// Parses `key=value` pairs from a header line after its magic token.
pub(crate) fn header_fields<'a>(line: &'a str, magic: &str) -> Result<Vec<(&'a str, &'a str)>> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(magic) {
        return Err(Error::format(1, format!("expected header starting with `{magic}`")));
    }
    parts
        .map(|kv| {
            kv.split_once('=')
                .ok_or_else(|| Error::format(1, format!("bad header field `{kv}`")))
        })
        .collect()
}

pub(crate) fn header_usize(fields: &[(&str, &str)], key: &str, line: usize) -> Result<usize> {
    let raw = fields
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| Error::format(line, format!("missing header field `{key}`")))?;
    raw.parse()
        .map_err(|_| Error::format(line, format!("bad value for `{key}`: `{raw}`")))
}

pub(crate) fn header_env(fields: &[(&str, &str)], line: usize) -> Result<EnvId> {
    let raw = fields
        .iter()
        .find(|(k, _)| *k == "env")
        .map(|(_, v)| *v)
        .ok_or_else(|| Error::format(line, "missing header field `env`"))?;
    raw.parse()
}


/// Sequential reader over complete lines, tracking 1-based line numbers.
pub(crate) struct LineCursor<'a> {
    lines: Vec<&'a str>,
    pos: usize,
}

impl<'a> LineCursor<'a> {
    pub(crate) fn new(text: &'a str) -> Result<Self> {
        Ok(LineCursor { lines: complete_lines(text)?, pos: 0 })
    }

    pub(crate) fn line_no(&self) -> usize {
        self.pos
    }

    pub(crate) fn next_line(&mut self) -> Result<&'a str> {
        let line = self
            .lines
            .get(self.pos)
            .copied()
            .ok_or_else(|| Error::format(self.pos + 1, "unexpected end of file"))?;
        self.pos += 1;
        Ok(line)
    }

    pub(crate) fn next_row(&mut self, expected: usize) -> Result<Vec<f64>> {
        let line = self.next_line()?;
        parse_row(line, self.pos, expected)
    }

    pub(crate) fn is_done(&self) -> bool {
        self.pos >= self.lines.len()
    }
}
