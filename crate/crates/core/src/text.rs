//! Shared helpers for the line-oriented text formats.

use crate::error::{Error, Result};

/// Yields `(line_number, tokens)` for every non-empty line, with `#` comments removed.
pub(crate) fn records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            None
        } else {
            Some((i + 1, tokens))
        }
    })
}

pub(crate) fn key_value(token: &str) -> Result<(&str, &str)> {
    token
        .split_once('=')
        .ok_or_else(|| Error::Syntax(format!("expected key=value, found `{token}`")))
}

pub(crate) fn parse_int(key: &str, value: &str) -> Result<i64> {
    value
        .parse::<i64>()
        .map_err(|_| Error::Syntax(format!("`{key}` expects an integer, found `{value}`")))
}

pub(crate) fn parse_f64(key: &str, value: &str) -> Result<f64> {
    match value.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Syntax(format!(
            "`{key}` expects a number, found `{value}`"
        ))),
    }
}

/// Parses a byte count with an optional `K`/`M` (binary) suffix.
pub(crate) fn parse_bytes(key: &str, value: &str) -> Result<u64> {
    let (digits, mult) = match value.as_bytes().last() {
        Some(b'K') | Some(b'k') => (&value[..value.len() - 1], 1024),
        Some(b'M') | Some(b'm') => (&value[..value.len() - 1], 1024 * 1024),
        _ => (value, 1),
    };
    digits
        .parse::<u64>()
        .map(|v| v * mult)
        .map_err(|_| Error::Syntax(format!("`{key}` expects a byte size, found `{value}`")))
}

/// Formats an f64 so that it parses back to the identical value.
pub(crate) fn fmt_f64(v: f64) -> String {
    let s = format!("{v}");
    debug_assert_eq!(s.parse::<f64>().ok(), Some(v));
    s
}
