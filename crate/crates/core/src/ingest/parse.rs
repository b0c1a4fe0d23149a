use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{IngestError, LineError, TraceEvent, MAX_REPORTED_ERRORS};
use crate::model::{Guid, TimePoint, Warning, WarningCode};

/// Outcome of parsing one line of the canonical format.
#[derive(Debug, Clone, PartialEq)]
pub enum ParsedLine {
    Event(TraceEvent),
    /// Blank line or `#` comment.
    Skip,
    /// A record kind this parser does not know; the caller warns and moves on.
    Unknown(String),
}

/// Column-level parse failure; `offset` is the byte offset within the line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

struct Token<'a> {
    offset: usize,
    text: TokenText<'a>,
}

enum TokenText<'a> {
    Bare(&'a str),
    Quoted(String),
}

impl Token<'_> {
    fn as_str(&self) -> &str {
        match &self.text {
            TokenText::Bare(s) => s,
            TokenText::Quoted(s) => s,
        }
    }

    fn into_string(self) -> String {
        match self.text {
            TokenText::Bare(s) => s.to_string(),
            TokenText::Quoted(s) => s,
        }
    }
}

fn tokenize(line: &str) -> Result<Vec<Token<'_>>, ParseError> {
    let bytes = line.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if bytes[i] == b'"' {
            let mut out = String::new();
            i += 1;
            let mut closed = false;
            while i < bytes.len() {
                match bytes[i] {
                    b'"' => {
                        closed = true;
                        i += 1;
                        break;
                    }
                    b'\\' if i + 1 < bytes.len() => {
                        match bytes[i + 1] {
                            b'"' => out.push('"'),
                            b'\\' => out.push('\\'),
                            b'n' => out.push('\n'),
                            b't' => out.push('\t'),
                            other => {
                                return Err(ParseError {
                                    offset: i,
                                    message: format!("unknown escape '\\{}'", other as char),
                                })
                            }
                        }
                        i += 2;
                    }
                    _ => {
                        // Copy one UTF-8 scalar.
                        let ch = line[i..].chars().next().expect("in bounds");
                        out.push(ch);
                        i += ch.len_utf8();
                    }
                }
            }
            if !closed {
                return Err(ParseError {
                    offset: start,
                    message: "unterminated quoted name".to_string(),
                });
            }
            if i < bytes.len() && !bytes[i].is_ascii_whitespace() {
                return Err(ParseError {
                    offset: i,
                    message: "expected whitespace after quoted name".to_string(),
                });
            }
            tokens.push(Token {
                offset: start,
                text: TokenText::Quoted(out),
            });
        } else {
            while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
                i += 1;
            }
            tokens.push(Token {
                offset: start,
                text: TokenText::Bare(&line[start..i]),
            });
        }
    }
    Ok(tokens)
}

fn err(offset: usize, message: impl Into<String>) -> ParseError {
    ParseError {
        offset,
        message: message.into(),
    }
}

fn field_u64(tok: &Token<'_>, what: &str) -> Result<u64, ParseError> {
    tok.as_str().parse::<u64>().map_err(|_| {
        err(
            tok.offset,
            format!("expected unsigned integer {what}, got '{}'", tok.as_str()),
        )
    })
}

fn field_i64(tok: &Token<'_>, what: &str) -> Result<i64, ParseError> {
    tok.as_str()
        .parse::<i64>()
        .map_err(|_| err(tok.offset, format!("expected integer {what}, got '{}'", tok.as_str())))
}

/// Field `i` of a record with `n` tokens; a missing field is reported at the
/// end of the line.
fn at<'t, 'a>(
    tokens: &'t [Token<'a>],
    i: usize,
    n: usize,
    kind: &str,
    line_len: usize,
) -> Result<&'t Token<'a>, ParseError> {
    tokens.get(i).ok_or_else(|| {
        err(
            line_len,
            format!("'{kind}' record needs {} fields, found {}", n - 1, tokens.len() - 1),
        )
    })
}

fn no_trailing(kind: &str, tokens: &[Token<'_>], n: usize) -> Result<(), ParseError> {
    match tokens.get(n) {
        Some(t) => Err(err(t.offset, format!("unexpected trailing field in '{kind}' record"))),
        None => Ok(()),
    }
}

/// Parse one record of the canonical line format.
///
/// ```text
/// L <index> <core_id> <thread_id>
/// E <time> <loc> <guid> <parent_guid|-> <primitive>
/// X <time> <loc> <guid>
/// C <time> <loc> <counter_name> <value>
/// S <path>
/// ```
///
/// Fields are checked left to right, so the reported offset points at the
/// first bad field.
pub fn parse_event(line: &str) -> Result<ParsedLine, ParseError> {
    let trimmed = line.trim_start();
    if trimmed.is_empty() || trimmed.starts_with('#') {
        return Ok(ParsedLine::Skip);
    }
    let mut tokens = tokenize(line)?;
    let kind = tokens[0].as_str().to_string();
    let kind = kind.as_str();
    let len = line.len();
    let event = match kind {
        "L" => {
            let f = |i| at(&tokens, i, 4, kind, len);
            let event = TraceEvent::LocationDef {
                index: field_u64(f(1)?, "location index")?,
                core_id: field_i64(f(2)?, "core id")?,
                thread_id: field_i64(f(3)?, "thread id")?,
            };
            no_trailing(kind, &tokens, 4)?;
            event
        }
        "E" => {
            let f = |i| at(&tokens, i, 6, kind, len);
            let time = TimePoint(field_u64(f(1)?, "time")?);
            let location = field_u64(f(2)?, "location")?;
            let guid = Guid(field_u64(f(3)?, "guid")?);
            let parent = match f(4)?.as_str() {
                "-" => None,
                _ => Some(Guid(field_u64(f(4)?, "parent guid")?)),
            };
            f(5)?;
            no_trailing(kind, &tokens, 6)?;
            let primitive = tokens.pop().expect("arity checked");
            if primitive.as_str().is_empty() {
                return Err(err(primitive.offset, "empty primitive name"));
            }
            TraceEvent::Enter {
                time,
                location,
                guid,
                parent,
                primitive: primitive.into_string(),
            }
        }
        "X" => {
            let f = |i| at(&tokens, i, 4, kind, len);
            let event = TraceEvent::Leave {
                time: TimePoint(field_u64(f(1)?, "time")?),
                location: field_u64(f(2)?, "location")?,
                guid: Guid(field_u64(f(3)?, "guid")?),
            };
            no_trailing(kind, &tokens, 4)?;
            event
        }
        "C" => {
            let f = |i| at(&tokens, i, 5, kind, len);
            let time = TimePoint(field_u64(f(1)?, "time")?);
            let location = field_u64(f(2)?, "location")?;
            let name = f(3)?;
            if name.as_str().is_empty() {
                return Err(err(name.offset, "empty counter name"));
            }
            let value_tok = f(4)?;
            let value: f64 = value_tok.as_str().parse().map_err(|_| {
                err(
                    value_tok.offset,
                    format!("expected counter value, got '{}'", value_tok.as_str()),
                )
            })?;
            if !value.is_finite() || value < 0.0 {
                return Err(err(value_tok.offset, "counter value must be finite and non-negative"));
            }
            no_trailing(kind, &tokens, 5)?;
            TraceEvent::Counter {
                time,
                location,
                counter: name.as_str().to_string(),
                value,
            }
        }
        "S" => {
            at(&tokens, 1, 2, kind, len)?;
            no_trailing(kind, &tokens, 2)?;
            TraceEvent::Source {
                path: tokens.pop().expect("arity checked").into_string(),
            }
        }
        other => return Ok(ParsedLine::Unknown(other.to_string())),
    };
    Ok(ParsedLine::Event(event))
}

/// Parsed events of a whole trace text plus the warnings raised while parsing.
#[derive(Debug, Clone, Default)]
pub struct ParsedTrace {
    pub events: Vec<TraceEvent>,
    pub warnings: Vec<Warning>,
}

/// Parse every line of `text`. Malformed lines are collected (the first
/// [`MAX_REPORTED_ERRORS`] are kept) and reported together.
pub fn parse_trace(text: &str) -> Result<ParsedTrace, IngestError> {
    let mut out = ParsedTrace::default();
    let mut errors = Vec::new();
    let mut total_errors = 0usize;
    let mut offset = 0usize;
    for (idx, raw_line) in text.split_inclusive('\n').enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim_end_matches(['\n', '\r']);
        match parse_event(line) {
            Ok(ParsedLine::Event(ev)) => out.events.push(ev),
            Ok(ParsedLine::Skip) => {}
            Ok(ParsedLine::Unknown(kind)) => out.warnings.push(Warning::new(
                WarningCode::UnknownRecord,
                format!("line {line_no}: unknown record kind '{kind}' skipped"),
            )),
            Err(e) => {
                total_errors += 1;
                if errors.len() < MAX_REPORTED_ERRORS {
                    errors.push(LineError {
                        line: line_no,
                        offset: offset + e.offset,
                        message: e.message,
                    });
                }
            }
        }
        offset += raw_line.len();
    }
    if total_errors > 0 {
        return Err(IngestError::Malformed {
            errors,
            total: total_errors,
        });
    }
    Ok(out)
}
