//! Parsing of grounded model outputs.
//!
//! Strict mode accepts only the productions emitted by [`crate::taskgen`]
//! (boxes in a list may be adjacent or separated by one space). Lenient mode
//! falls back to scanning for bracketed 4-tuples anywhere in the text and
//! attaching each to the nearest preceding phrase fragment.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bbox::NormBox;
use crate::record::{Finding, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ParseMode {
    #[default]
    Strict,
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at byte {position}: expected {expected}")]
pub struct ParseError {
    pub position: usize,
    pub expected: String,
}

/// Structured view of one model output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedOutput {
    pub task: Task,
    /// Phrase (PG) or anatomical location (AGRG); empty for GRG.
    pub subject: String,
    pub boxes: Vec<NormBox>,
    pub description: Option<String>,
    /// GRG findings in output order.
    pub findings: Vec<Finding>,
    /// Set when the output was recovered by the lenient scanner.
    pub salvaged: bool,
    pub warnings: Vec<String>,
}

impl ParsedOutput {
    pub fn empty(task: Task) -> Self {
        ParsedOutput {
            task,
            subject: String::new(),
            boxes: Vec::new(),
            description: None,
            findings: Vec::new(),
            salvaged: false,
            warnings: Vec::new(),
        }
    }

    /// Every box in the output, GRG findings included.
    pub fn all_boxes(&self) -> Vec<NormBox> {
        let mut v = self.boxes.clone();
        for f in &self.findings {
            v.extend_from_slice(&f.boxes);
        }
        v
    }
}

pub fn parse_output(text: &str, task: Task, mode: ParseMode) -> Result<ParsedOutput, ParseError> {
    match parse_strict(text, task) {
        Ok(p) => Ok(p),
        Err(e) if mode == ParseMode::Strict => Err(e),
        Err(_) => Ok(parse_lenient(text, task)),
    }
}

const LOCATION_PREFIX: &str = "Location of the ";
const DESCRIPTION_PREFIX: &str = "Description of the ";
const DESCRIPTION_KEY: &str = ". Description: ";

struct Cursor<'a> {
    s: &'a str,
    pos: usize,
    warnings: Vec<String>,
}

impl<'a> Cursor<'a> {
    fn new(s: &'a str) -> Self {
        Cursor { s, pos: 0, warnings: Vec::new() }
    }

    fn rest(&self) -> &'a str {
        &self.s[self.pos..]
    }

    fn at_end(&self) -> bool {
        self.pos >= self.s.len()
    }

    fn err<T>(&self, expected: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError { position: self.pos, expected: expected.into() })
    }

    fn peek(&self) -> Option<u8> {
        self.s.as_bytes().get(self.pos).copied()
    }

    fn literal(&mut self, lit: &str) -> Result<(), ParseError> {
        if self.rest().starts_with(lit) {
            self.pos += lit.len();
            Ok(())
        } else {
            self.err(format!("{lit:?}"))
        }
    }

    fn byte(&mut self, b: u8) -> Result<(), ParseError> {
        if self.peek() == Some(b) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("{:?}", b as char))
        }
    }

    fn end(&self) -> Result<(), ParseError> {
        if self.at_end() {
            Ok(())
        } else {
            self.err("end of output")
        }
    }

    /// `-?digits(.digits)?`
    fn number(&mut self) -> Result<f64, ParseError> {
        let start = self.pos;
        let bytes = self.s.as_bytes();
        let mut i = self.pos;
        if bytes.get(i) == Some(&b'-') {
            i += 1;
        }
        let int_start = i;
        while bytes.get(i).is_some_and(u8::is_ascii_digit) {
            i += 1;
        }
        if i == int_start {
            return self.err("decimal numeral");
        }
        if bytes.get(i) == Some(&b'.') {
            i += 1;
            let frac_start = i;
            while bytes.get(i).is_some_and(u8::is_ascii_digit) {
                i += 1;
            }
            if i == frac_start {
                self.pos = i;
                return self.err("digits after decimal point");
            }
        }
        self.pos = i;
        Ok(self.s[start..i].parse().expect("validated numeral"))
    }

    fn box_group(&mut self) -> Result<Option<NormBox>, ParseError> {
        self.byte(b'[')?;
        let mut v = [0.0; 4];
        for (k, slot) in v.iter_mut().enumerate() {
            if k > 0 {
                self.byte(b',')?;
            }
            *slot = self.number()?;
        }
        self.byte(b']')?;
        Ok(accept_box(v, &mut self.warnings))
    }

    /// One or more box groups, adjacent or separated by a single space.
    fn box_list(&mut self) -> Result<Vec<NormBox>, ParseError> {
        let mut out = Vec::new();
        out.extend(self.box_group()?);
        loop {
            if self.peek() == Some(b'[') {
                out.extend(self.box_group()?);
            } else if self.rest().starts_with(" [") {
                self.pos += 1;
                out.extend(self.box_group()?);
            } else {
                return Ok(out);
            }
        }
    }
}

/// Turns raw coordinates into a box, clamping out-of-range values and
/// dropping boxes with no area. Both cases leave a warning.
fn accept_box(v: [f64; 4], warnings: &mut Vec<String>) -> Option<NormBox> {
    let raw = match NormBox::new(v[0], v[1], v[2], v[3]) {
        Ok(b) => b,
        Err(e) => {
            let msg = format!("dropped box {v:?}: {e}");
            log::warn!("{msg}");
            warnings.push(msg);
            return None;
        }
    };
    let in_range = v.iter().all(|x| (0.0..=1.0).contains(x)) && raw.is_in_frame();
    if in_range {
        return Some(raw);
    }
    match raw.clamp() {
        Ok(c) => {
            let msg = format!("clamped out-of-range box {v:?}");
            log::warn!("{msg}");
            warnings.push(msg);
            Some(c)
        }
        Err(e) => {
            let msg = format!("dropped box {v:?}: {e}");
            log::warn!("{msg}");
            warnings.push(msg);
            None
        }
    }
}

fn non_empty(text: &str, position: usize, what: &str) -> Result<String, ParseError> {
    if text.trim().is_empty() || text != text.trim() {
        Err(ParseError { position, expected: format!("non-empty {what} without surrounding spaces") })
    } else {
        Ok(text.to_string())
    }
}

fn parse_strict(text: &str, task: Task) -> Result<ParsedOutput, ParseError> {
    let text = text.trim();
    let mut c = Cursor::new(text);
    let mut out = ParsedOutput::empty(task);
    match task {
        Task::Pg | Task::Detection => {
            let Some(open) = text.find('[') else {
                c.pos = text.len();
                return c.err("\": [\" followed by a box group");
            };
            let Some(phrase) = text[..open].strip_suffix(": ") else {
                c.pos = open;
                return c.err("\": \" before the first box group");
            };
            out.subject = non_empty(phrase, 0, "phrase")?;
            c.pos = open;
            out.boxes = c.box_list()?;
            c.end()?;
        }
        Task::AgrgLocate | Task::AgrgBoth => {
            c.literal(LOCATION_PREFIX)?;
            let Some(sep) = c.rest().find(": [") else {
                return c.err("\"<location>: [\"");
            };
            out.subject = non_empty(&c.rest()[..sep], c.pos, "location")?;
            c.pos += sep + 2;
            out.boxes = c.box_list()?;
            if task == Task::AgrgLocate {
                c.byte(b'.')?;
            } else {
                c.literal(DESCRIPTION_KEY)?;
                out.description = Some(non_empty(c.rest(), c.pos, "description")?);
                c.pos = text.len();
            }
            c.end()?;
        }
        Task::AgrgDescribe => {
            c.literal(DESCRIPTION_PREFIX)?;
            let Some(sep) = c.rest().find(": ") else {
                return c.err("\"<location>: \"");
            };
            out.subject = non_empty(&c.rest()[..sep], c.pos, "location")?;
            c.pos += sep + 2;
            out.description = Some(non_empty(c.rest(), c.pos, "description")?);
        }
        Task::Grg => {
            out.findings = parse_grg_strict(&mut c)?;
        }
    }
    out.warnings = c.warnings;
    Ok(out)
}

/// Index of the first `.` that ends a sentence (followed by a space or the end).
fn sentence_end(s: &str) -> Option<usize> {
    let b = s.as_bytes();
    (0..b.len()).find(|&i| b[i] == b'.' && (i + 1 == b.len() || b[i + 1] == b' '))
}

fn parse_grg_strict(c: &mut Cursor<'_>) -> Result<Vec<Finding>, ParseError> {
    let mut findings = Vec::new();
    if c.at_end() {
        return c.err("at least one finding");
    }
    loop {
        let rest = c.rest();
        let next_end = sentence_end(rest);
        let next_box = rest.find('[').filter(|&b| next_end.is_none_or(|e| b < e));
        match (next_box, next_end) {
            (Some(b), _) => {
                let Some(phrase) = rest[..b].strip_suffix(' ') else {
                    c.pos += b;
                    return c.err("space between phrase and box group");
                };
                let phrase = non_empty(phrase, c.pos, "phrase")?;
                c.pos += b;
                let boxes = c.box_list()?;
                c.byte(b'.')?;
                findings.push(Finding { phrase, boxes });
            }
            (_, Some(e)) => {
                let phrase = non_empty(&rest[..e], c.pos, "sentence")?;
                c.pos += e + 1;
                findings.push(Finding { phrase, boxes: Vec::new() });
            }
            (None, None) => {
                c.pos = c.s.len();
                return c.err("\".\" ending the sentence");
            }
        }
        if c.at_end() {
            return Ok(findings);
        }
        c.byte(b' ')?;
        if c.at_end() {
            return c.err("another finding");
        }
    }
}

/// A bracketed numeric 4-tuple found by the lenient scanner.
struct Group {
    start: usize,
    end: usize,
    coords: [f64; 4],
}

fn scan_groups(text: &str) -> Vec<Group> {
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(rel) = text[from..].find('[') {
        let start = from + rel;
        let Some(close_rel) = text[start..].find(']') else { break };
        let end = start + close_rel + 1;
        let inner = &text[start + 1..end - 1];
        let fields: Vec<&str> = inner.split(',').collect();
        if fields.len() == 4 {
            let parsed: Vec<f64> = fields.iter().filter_map(|f| f.trim().parse().ok()).collect();
            if parsed.len() == 4 {
                out.push(Group { start, end, coords: [parsed[0], parsed[1], parsed[2], parsed[3]] });
                from = end;
                continue;
            }
        }
        from = start + 1;
    }
    out
}

fn clean_fragment(s: &str) -> String {
    let s = s.trim();
    let s = s.strip_prefix(LOCATION_PREFIX).unwrap_or(s);
    let s = s.strip_prefix(DESCRIPTION_PREFIX).unwrap_or(s);
    s.trim_end_matches([':', ' ', '.', ',']).trim().to_string()
}

fn split_sentences(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = s.trim();
    while !rest.is_empty() {
        match sentence_end(rest) {
            Some(e) => {
                let sent = rest[..e].trim();
                if !sent.is_empty() {
                    out.push(sent.to_string());
                }
                rest = rest[e + 1..].trim_start();
            }
            None => {
                out.push(rest.trim().to_string());
                break;
            }
        }
    }
    out
}

/// Location named after a `Location of the` / `Description of the` keyword.
fn keyword_location(text: &str) -> Option<String> {
    for key in [LOCATION_PREFIX, DESCRIPTION_PREFIX] {
        if let Some(i) = text.find(key) {
            let after = &text[i + key.len()..];
            let stop = after.find([':', '[', '.']).unwrap_or(after.len());
            let loc = after[..stop].trim();
            if !loc.is_empty() {
                return Some(loc.to_string());
            }
        }
    }
    None
}

fn parse_lenient(text: &str, task: Task) -> ParsedOutput {
    let mut out = ParsedOutput::empty(task);
    out.salvaged = true;
    let groups = scan_groups(text);
    let mut warnings = Vec::new();
    let boxes_of = |g: &Group, w: &mut Vec<String>| accept_box(g.coords, w);

    match task {
        Task::Pg | Task::Detection => {
            let head = groups.first().map_or(text, |g| &text[..g.start]);
            out.subject = clean_fragment(head);
            out.boxes = groups.iter().filter_map(|g| boxes_of(g, &mut warnings)).collect();
        }
        Task::AgrgLocate | Task::AgrgDescribe | Task::AgrgBoth => {
            out.subject = keyword_location(text).unwrap_or_default();
            out.boxes = groups.iter().filter_map(|g| boxes_of(g, &mut warnings)).collect();
            if task != Task::AgrgLocate {
                let desc = if let Some(i) = text.rfind("Description:") {
                    text[i + "Description:".len()..].trim().to_string()
                } else if let Some(i) = text.find(DESCRIPTION_PREFIX) {
                    let after = &text[i + DESCRIPTION_PREFIX.len()..];
                    after.find(':').map_or(after, |c| &after[c + 1..]).trim().to_string()
                } else {
                    let tail = groups.last().map_or(text, |g| &text[g.end..]);
                    tail.trim_start_matches(['.', ' ']).trim().to_string()
                };
                let desc = crate::taskgen::strip_box_groups(&desc);
                if !desc.is_empty() {
                    out.description = Some(desc);
                }
            }
        }
        Task::Grg => {
            let mut prev_end = 0;
            for g in &groups {
                let fragment = &text[prev_end..g.start];
                let bx = boxes_of(g, &mut warnings);
                let attach_to_previous = fragment.trim().is_empty() && !out.findings.is_empty();
                if attach_to_previous {
                    out.findings.last_mut().expect("non-empty").boxes.extend(bx);
                } else {
                    let mut sentences = split_sentences(fragment.trim_start_matches(['.', ' ']));
                    let phrase = sentences.pop().map(|s| clean_fragment(&s)).unwrap_or_default();
                    out.findings.extend(sentences.into_iter().map(|s| Finding { phrase: s, boxes: Vec::new() }));
                    out.findings.push(Finding { phrase, boxes: bx.into_iter().collect() });
                }
                prev_end = g.end;
            }
            let tail = text[prev_end..].trim_start_matches(['.', ' ']);
            out.findings.extend(split_sentences(tail).into_iter().map(|s| Finding { phrase: s, boxes: Vec::new() }));
        }
    }
    out.warnings = warnings;
    out
}
