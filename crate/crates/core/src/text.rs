//! Shared plumbing for the versioned, line-oriented text formats.
//!
//! Every file starts with a magic line `<MAGIC>/<version>` and every line,
//! including the last, ends in `\n`. Fields are escaped with `\\`, `\t`, `\n`
//! and `\r`; space-separated formats additionally escape a space as `\s`. A
//! field consisting of a single `-` is written `\-` so that `-` stays free
//! to mean "absent".

use std::borrow::Cow;
use std::fmt;

use thiserror::Error;

/// What went wrong while reading one of the text formats.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatErrorKind {
    #[error("unexpected end of input")]
    UnexpectedEnd,
    #[error("missing or unrecognized header, expected `{expected}`")]
    BadHeader { expected: String },
    #[error("unsupported version `{found}`, expected `{expected}`")]
    VersionMismatch { expected: String, found: String },
    #[error("expected {expected} fields, found {found}")]
    FieldCount { expected: usize, found: usize },
    #[error("invalid escape sequence at column {column}")]
    BadEscape { column: usize },
    #[error("invalid {what}: `{value}`")]
    BadValue { what: &'static str, value: String },
    #[error("{0}")]
    Invalid(String),
}

/// A format error, located at a 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FormatError {
    pub line: usize,
    pub kind: FormatErrorKind,
}

impl FormatError {
    pub fn new(line: usize, kind: FormatErrorKind) -> Self {
        FormatError { line, kind }
    }

    pub fn invalid(line: usize, msg: impl Into<String>) -> Self {
        FormatError::new(line, FormatErrorKind::Invalid(msg.into()))
    }

    pub fn bad_value(line: usize, what: &'static str, value: &str) -> Self {
        FormatError::new(
            line,
            FormatErrorKind::BadValue {
                what,
                value: value.to_string(),
            },
        )
    }
}

impl fmt::Display for FormatError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.kind)
    }
}

impl std::error::Error for FormatError {}

/// Escapes a field for a tab-separated line.
pub fn escape_tab_field(s: &str) -> Cow<'_, str> {
    escape(s, false)
}

/// Escapes a field for a space-separated line.
pub fn escape_space_field(s: &str) -> Cow<'_, str> {
    escape(s, true)
}

fn escape(s: &str, space: bool) -> Cow<'_, str> {
    let needs = s == "-"
        || s
            .bytes()
            .any(|b| matches!(b, b'\\' | b'\t' | b'\n' | b'\r') || (space && b == b' '));
    if !needs {
        return Cow::Borrowed(s);
    }
    if s == "-" {
        return Cow::Borrowed("\\-");
    }
    let mut out = String::with_capacity(s.len() + 8);
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            ' ' if space => out.push_str("\\s"),
            c => out.push(c),
        }
    }
    Cow::Owned(out)
}

/// Reverses [`escape_tab_field`] / [`escape_space_field`].
///
/// On error the returned column is the 1-based character position of the
/// offending backslash within the field.
pub fn unescape_field(s: &str) -> Result<String, usize> {
    if !s.contains('\\') {
        return Ok(s.to_string());
    }
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars().enumerate();
    while let Some((i, c)) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some((_, '\\')) => out.push('\\'),
            Some((_, 't')) => out.push('\t'),
            Some((_, 'n')) => out.push('\n'),
            Some((_, 'r')) => out.push('\r'),
            Some((_, 's')) => out.push(' '),
            Some((_, '-')) => out.push('-'),
            _ => return Err(i + 1),
        }
    }
    Ok(out)
}

/// Encodes an optional field, using `-` for `None`.
pub fn escape_optional(value: Option<&str>, space: bool) -> Cow<'_, str> {
    match value {
        None => Cow::Borrowed("-"),
        Some(v) => escape(v, space),
    }
}

/// Decodes a field written by [`escape_optional`].
pub fn unescape_optional(s: &str) -> Result<Option<String>, usize> {
    if s == "-" {
        Ok(None)
    } else {
        unescape_field(s).map(Some)
    }
}

/// Iterates over the newline-terminated lines of a text document.
///
/// A trailing fragment without `\n` means the input was cut short and is
/// reported as [`FormatErrorKind::UnexpectedEnd`].
pub struct Lines<'a> {
    rest: &'a str,
    line: usize,
}

impl<'a> Lines<'a> {
    pub fn new(input: &'a str) -> Self {
        Lines {
            rest: input,
            line: 0,
        }
    }

    /// Line number of the most recently returned line (0 before the first).
    pub fn line_no(&self) -> usize {
        self.line
    }

    pub fn is_empty(&self) -> bool {
        self.rest.is_empty()
    }

    /// Returns the next line, `Ok(None)` at a clean end of input.
    pub fn next_line(&mut self) -> Result<Option<&'a str>, FormatError> {
        if self.rest.is_empty() {
            return Ok(None);
        }
        self.line += 1;
        match self.rest.find('\n') {
            Some(pos) => {
                let line = &self.rest[..pos];
                self.rest = &self.rest[pos + 1..];
                Ok(Some(line))
            }
            None => Err(FormatError::new(self.line, FormatErrorKind::UnexpectedEnd)),
        }
    }

    /// Like [`Lines::next_line`] but end of input is an error.
    pub fn require_line(&mut self) -> Result<&'a str, FormatError> {
        match self.next_line()? {
            Some(line) => Ok(line),
            None => Err(FormatError::new(
                self.line + 1,
                FormatErrorKind::UnexpectedEnd,
            )),
        }
    }

    /// Consumes and checks the `MAGIC/version` header line.
    pub fn expect_header(&mut self, magic: &str, version: u32) -> Result<(), FormatError> {
        let expected = format!("{magic}/{version}");
        let line = self.require_line()?;
        if line == expected {
            return Ok(());
        }
        let line_no = self.line;
        match line.strip_prefix(magic).and_then(|r| r.strip_prefix('/')) {
            Some(found) => Err(FormatError::new(
                line_no,
                FormatErrorKind::VersionMismatch {
                    expected,
                    found: found.to_string(),
                },
            )),
            None => Err(FormatError::new(
                line_no,
                FormatErrorKind::BadHeader { expected },
            )),
        }
    }
}

/// Converts a UTF-8 decoding failure into a located format error.
pub(crate) fn decode_utf8(bytes: &[u8]) -> Result<&str, FormatError> {
    std::str::from_utf8(bytes).map_err(|e| {
        let line = bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count() + 1;
        FormatError::invalid(line, "input is not valid UTF-8")
    })
}

/// Splits a line into exactly `n` fields separated by `sep`.
pub(crate) fn split_fields(
    line: &str,
    sep: char,
    n: usize,
    line_no: usize,
) -> Result<Vec<&str>, FormatError> {
    let fields: Vec<&str> = line.split(sep).collect();
    if fields.len() != n {
        return Err(FormatError::new(
            line_no,
            FormatErrorKind::FieldCount {
                expected: n,
                found: fields.len(),
            },
        ));
    }
    Ok(fields)
}

pub(crate) fn unescape_at(field: &str, line_no: usize) -> Result<String, FormatError> {
    unescape_field(field)
        .map_err(|column| FormatError::new(line_no, FormatErrorKind::BadEscape { column }))
}

pub(crate) fn unescape_optional_at(
    field: &str,
    line_no: usize,
) -> Result<Option<String>, FormatError> {
    unescape_optional(field)
        .map_err(|column| FormatError::new(line_no, FormatErrorKind::BadEscape { column }))
}

pub(crate) fn parse_num<T: std::str::FromStr>(
    field: &str,
    what: &'static str,
    line_no: usize,
) -> Result<T, FormatError> {
    field
        .parse()
        .map_err(|_| FormatError::bad_value(line_no, what, field))
}
