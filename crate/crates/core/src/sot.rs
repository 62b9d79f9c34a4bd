//! Tagged-text wire format for reasoning traces and the noise filter applied
//! to generated traces.
//!
//! A document is the concatenation of one `<subtask>OP<answer>VALUE` segment
//! per step, on a single line:
//!
//! ```text
//! <subtask>select(garland)<answer>garland <bbox>(0.51, 0.0, 0.54, 0.09)<subtask>query([garland <bbox>(0.51, 0.0, 0.54, 0.09)], name)<answer>garland
//! ```

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bbox::NormBBox;
use crate::interpreter::{ObjectEntry, SoTTrace, Step, Value};
use crate::program::{is_comparative, lookup_operation, OpKind};

pub const SUBTASK_TAG: &str = "<subtask>";
pub const ANSWER_TAG: &str = "<answer>";
pub const BBOX_TAG: &str = "<bbox>";

/// A serialized trace.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SoTDocument(String);

impl SoTDocument {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl fmt::Display for SoTDocument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn serialize(t: &SoTTrace) -> SoTDocument {
    let mut out = String::new();
    for step in t.steps() {
        out.push_str(SUBTASK_TAG);
        out.push_str(&step.rendered_op);
        out.push_str(ANSWER_TAG);
        out.push_str(&step.value.render_answer());
    }
    SoTDocument(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    Empty,
    UnbalancedTags,
    MalformedBBox,
    MalformedValue,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("byte {position}: {kind:?}: {detail}")]
pub struct ParseError {
    pub position: usize,
    pub kind: ParseErrorKind,
    pub detail: String,
}

fn perr(position: usize, kind: ParseErrorKind, detail: impl Into<String>) -> ParseError {
    ParseError {
        position,
        kind,
        detail: detail.into(),
    }
}

/// Parses a tagged document back into a trace. Whitespace between segments
/// is ignored and box tuples are re-rendered in canonical form. Object ids
/// are not part of the format, so parsed entries carry none.
pub fn parse(doc: &str) -> Result<SoTTrace, ParseError> {
    let mut steps = Vec::new();
    let mut pos = skip_ws(doc, 0);
    if pos == doc.len() {
        return Err(perr(0, ParseErrorKind::Empty, "empty document"));
    }
    while pos < doc.len() {
        if !doc[pos..].starts_with(SUBTASK_TAG) {
            return Err(perr(pos, ParseErrorKind::UnbalancedTags, "expected <subtask>"));
        }
        let op_start = pos + SUBTASK_TAG.len();
        let op_end = op_start
            + doc[op_start..]
                .find(ANSWER_TAG)
                .ok_or_else(|| perr(op_start, ParseErrorKind::UnbalancedTags, "missing <answer>"))?;
        let op = &doc[op_start..op_end];
        if op.contains(SUBTASK_TAG) {
            return Err(perr(op_start, ParseErrorKind::UnbalancedTags, "nested <subtask>"));
        }
        let ans_start = op_end + ANSWER_TAG.len();
        let ans_end = doc[ans_start..]
            .find(SUBTASK_TAG)
            .map_or(doc.len(), |i| ans_start + i);
        let answer = &doc[ans_start..ans_end];
        if answer.contains(ANSWER_TAG) {
            return Err(perr(ans_start, ParseErrorKind::UnbalancedTags, "repeated <answer>"));
        }
        let op = op.trim();
        if op.is_empty() {
            return Err(perr(op_start, ParseErrorKind::MalformedValue, "empty operation"));
        }
        let rendered_op = canonicalize_boxes(op).map_err(|(i, d)| {
            perr(op_start + i, ParseErrorKind::MalformedBBox, d)
        })?;
        let value = parse_value(op_name(op), answer.trim())
            .map_err(|(kind, d)| perr(ans_start, kind, d))?;
        steps.push(Step { rendered_op, value });
        pos = skip_ws(doc, ans_end);
    }
    Ok(SoTTrace::new(steps).expect("at least one segment was read"))
}

fn skip_ws(s: &str, from: usize) -> usize {
    from + (s.len() - from - s[from..].trim_start().len())
}

/// Operation name: everything before the first `(`.
pub fn op_name(op: &str) -> &str {
    op.split('(').next().unwrap_or("").trim()
}

/// Parses one `(a, b, c, d)` tuple at the start of `s`; returns the box and
/// the number of bytes consumed.
fn parse_tuple(s: &str) -> Result<(NormBBox, usize), String> {
    let close = s
        .find(')')
        .filter(|_| s.starts_with('('))
        .ok_or_else(|| "box tuple is not parenthesized".to_string())?;
    let inner = &s[1..close];
    let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(format!("box tuple has {} components, expected 4", parts.len()));
    }
    let mut v = [0.0f64; 4];
    for (slot, p) in v.iter_mut().zip(&parts) {
        *slot = p
            .parse::<f64>()
            .map_err(|_| format!("box component {p:?} is not a number"))?;
    }
    let b = NormBBox::new(v[0], v[1], v[2], v[3]).map_err(|e| e.to_string())?;
    Ok((b, close + 1))
}

/// Rewrites every `<bbox>(…)` tuple in canonical form. Errors carry the byte
/// offset of the offending tag.
pub fn canonicalize_boxes(s: &str) -> Result<String, (usize, String)> {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    let mut offset = 0;
    while let Some(i) = rest.find(BBOX_TAG) {
        out.push_str(&rest[..i + BBOX_TAG.len()]);
        let after = &rest[i + BBOX_TAG.len()..];
        let (b, used) = parse_tuple(after).map_err(|d| (offset + i, d))?;
        out.push_str(&b.to_string());
        let consumed = i + BBOX_TAG.len() + used;
        offset += consumed;
        rest = &rest[consumed..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Parses `name <bbox>(…), name <bbox>(…)`.
pub fn parse_object_list(s: &str) -> Result<Vec<ObjectEntry>, String> {
    let mut out = Vec::new();
    let mut rest = s.trim();
    while !rest.is_empty() {
        let i = rest
            .find(BBOX_TAG)
            .ok_or_else(|| format!("expected `name <bbox>(…)`, found {rest:?}"))?;
        let name = rest[..i].trim();
        if name.is_empty() || name.contains([',', '[', ']']) {
            return Err(format!("bad object name {name:?}"));
        }
        let (bbox, used) = parse_tuple(&rest[i + BBOX_TAG.len()..])?;
        out.push(ObjectEntry {
            object_id: None,
            name: name.to_string(),
            bbox,
        });
        rest = rest[i + BBOX_TAG.len() + used..].trim_start();
        if let Some(r) = rest.strip_prefix(',') {
            rest = r.trim_start();
            if rest.is_empty() {
                return Err("trailing comma in object list".to_string());
            }
        } else if !rest.is_empty() {
            return Err(format!("unexpected text after box: {rest:?}"));
        }
    }
    if out.is_empty() {
        return Err("empty object list".to_string());
    }
    Ok(out)
}

fn parse_bool(s: &str) -> Option<bool> {
    if s.eq_ignore_ascii_case("yes") {
        Some(true)
    } else if s.eq_ignore_ascii_case("no") {
        Some(false)
    } else {
        None
    }
}

fn parse_value(op: &str, answer: &str) -> Result<Value, (ParseErrorKind, String)> {
    canonicalize_boxes(answer).map_err(|(_, d)| (ParseErrorKind::MalformedBBox, d))?;
    if answer == "None" {
        return Ok(Value::None);
    }
    if let Some(list) = answer
        .strip_prefix("there are [")
        .and_then(|r| r.strip_suffix(']'))
    {
        let ids: Option<Vec<String>> = list
            .split(',')
            .map(|p| p.trim().strip_prefix('#').map(str::to_string))
            .collect();
        return ids
            .filter(|ids| ids.iter().all(|i| !i.is_empty()))
            .map(Value::SceneRef)
            .ok_or((ParseErrorKind::MalformedValue, format!("bad scene reference {answer:?}")));
    }
    let has_box = answer.contains(BBOX_TAG);
    let objects = || {
        parse_object_list(answer)
            .map(Value::Objects)
            .map_err(|d| (ParseErrorKind::MalformedValue, d))
    };
    match lookup_operation(op).map(|(k, _)| k) {
        Some(OpKind::Select | OpKind::Relate | OpKind::Filter) => objects(),
        Some(
            OpKind::Verify
            | OpKind::VerifyRel
            | OpKind::Exist
            | OpKind::And
            | OpKind::Or
            | OpKind::Same
            | OpKind::SamePair
            | OpKind::Different
            | OpKind::DifferentPair,
        ) => parse_bool(answer)
            .map(Value::Boolean)
            .ok_or((ParseErrorKind::MalformedValue, format!("expected yes/no, found {answer:?}"))),
        Some(OpKind::Choose | OpKind::ChooseRel) if !has_box => {
            Ok(Value::Choice(answer.to_string()))
        }
        Some(OpKind::Query | OpKind::Common | OpKind::Compare) if !has_box => {
            Ok(Value::Attribute(answer.to_string()))
        }
        _ if has_box => objects(),
        _ => Ok(match parse_bool(answer) {
            Some(b) => Value::Boolean(b),
            None => Value::Attribute(answer.to_string()),
        }),
    }
}

/// Why a trace was rejected, or `Ok`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterReason {
    AnswerMismatch,
    MalformedArgument,
    OverLength,
    Ok,
}

impl FilterReason {
    pub fn as_str(self) -> &'static str {
        match self {
            FilterReason::AnswerMismatch => "answer_mismatch",
            FilterReason::MalformedArgument => "malformed_argument",
            FilterReason::OverLength => "over_length",
            FilterReason::Ok => "ok",
        }
    }
}

impl fmt::Display for FilterReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub accepted: bool,
    pub reason: FilterReason,
    pub detail: String,
}

impl FilterVerdict {
    fn reject(reason: FilterReason, detail: String) -> Self {
        FilterVerdict {
            accepted: false,
            reason,
            detail,
        }
    }

    fn ok() -> Self {
        FilterVerdict {
            accepted: true,
            reason: FilterReason::Ok,
            detail: String::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("{0} must be at least 1")]
pub struct FilterConfigError(&'static str);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterConfig {
    max_steps: usize,
    max_chars: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            max_steps: 12,
            max_chars: 2000,
        }
    }
}

impl FilterConfig {
    pub fn new(max_steps: usize, max_chars: usize) -> Result<Self, FilterConfigError> {
        if max_steps == 0 {
            return Err(FilterConfigError("max_steps"));
        }
        if max_chars == 0 {
            return Err(FilterConfigError("max_chars"));
        }
        Ok(FilterConfig {
            max_steps,
            max_chars,
        })
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    pub fn max_chars(&self) -> usize {
        self.max_chars
    }
}

/// Lowercases, trims, drops `<bbox>(…)` tuples and collapses whitespace.
pub fn normalize_answer(s: &str) -> String {
    let mut stripped = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(i) = rest.find(BBOX_TAG) {
        stripped.push_str(&rest[..i]);
        let after = &rest[i + BBOX_TAG.len()..];
        rest = match (after.starts_with('('), after.find(')')) {
            (true, Some(close)) => &after[close + 1..],
            _ => after,
        };
    }
    stripped.push_str(rest);
    stripped
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Applies the three rejection rules in order: answer, argument grammar,
/// length.
pub fn filter_sot(t: &SoTTrace, ground_truth: &str, cfg: &FilterConfig) -> FilterVerdict {
    let got = normalize_answer(t.final_answer());
    let want = normalize_answer(ground_truth);
    if got != want {
        return FilterVerdict::reject(
            FilterReason::AnswerMismatch,
            format!("expected {want:?}, got {got:?}"),
        );
    }
    for (i, step) in t.steps().iter().enumerate() {
        if let Err(e) = check_operation(&step.rendered_op) {
            return FilterVerdict::reject(FilterReason::MalformedArgument, format!("step {i}: {e}"));
        }
    }
    if t.len() > cfg.max_steps {
        return FilterVerdict::reject(
            FilterReason::OverLength,
            format!("{} steps exceed the limit of {}", t.len(), cfg.max_steps),
        );
    }
    let chars = serialize(t).as_str().chars().count();
    if chars > cfg.max_chars {
        return FilterVerdict::reject(
            FilterReason::OverLength,
            format!("{chars} characters exceed the limit of {}", cfg.max_chars),
        );
    }
    FilterVerdict::ok()
}

/// Filters a raw document. Documents that do not parse are malformed.
pub fn filter_document(doc: &str, ground_truth: &str, cfg: &FilterConfig) -> FilterVerdict {
    match parse(doc) {
        Ok(t) => filter_sot(&t, ground_truth, cfg),
        Err(e) => FilterVerdict::reject(FilterReason::MalformedArgument, e.to_string()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GrammarError {
    #[error("expected `name(arguments)`")]
    Shape,
    #[error("unknown operation {0:?}")]
    UnknownOperation(String),
    #[error("unbalanced brackets")]
    Unbalanced,
    #[error("{op} takes {expected} arguments, got {got}")]
    Arity {
        op: String,
        expected: &'static str,
        got: usize,
    },
    #[error("argument {index}: {reason}")]
    Argument { index: usize, reason: String },
}

/// Splits on commas outside brackets and parentheses.
fn split_top_level(s: &str) -> Result<Vec<&str>, GrammarError> {
    let mut parts = Vec::new();
    let mut depth: i32 = 0;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '[' | '(' => depth += 1,
            ']' | ')' => {
                depth -= 1;
                if depth < 0 {
                    return Err(GrammarError::Unbalanced);
                }
            }
            ',' if depth == 0 => {
                parts.push(s[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err(GrammarError::Unbalanced);
    }
    parts.push(s[start..].trim());
    Ok(parts)
}

fn check_inline_list(arg: &str) -> Result<(), String> {
    let inner = arg
        .strip_prefix('[')
        .and_then(|a| a.strip_suffix(']'))
        .ok_or_else(|| format!("expected an object list, found {arg:?}"))?;
    if inner.trim() == "None" {
        return Ok(());
    }
    parse_object_list(inner).map(|_| ())
}

fn check_choice(arg: &str) -> Result<(), String> {
    match arg.split_once('|') {
        Some((l, r)) if !l.trim().is_empty() && !r.trim().is_empty() && !r.contains('|') => Ok(()),
        _ => Err(format!("expected `a|b`, found {arg:?}")),
    }
}

fn check_text(arg: &str) -> Result<(), String> {
    if arg.is_empty() || arg.contains(['[', ']', '<', '>']) {
        Err(format!("bad text argument {arg:?}"))
    } else {
        Ok(())
    }
}

fn check_bool(arg: &str) -> Result<(), String> {
    parse_bool(arg)
        .map(|_| ())
        .ok_or_else(|| format!("expected yes/no, found {arg:?}"))
}

/// Checks one rendered operation against the catalog and its argument shape.
pub fn check_operation(op: &str) -> Result<(), GrammarError> {
    let op = op.trim();
    let open = op.find('(').ok_or(GrammarError::Shape)?;
    let body = op[open + 1..].strip_suffix(')').ok_or(GrammarError::Shape)?;
    let name = op[..open].trim();
    let (kind, category) =
        lookup_operation(name).ok_or_else(|| GrammarError::UnknownOperation(name.to_string()))?;
    let args = split_top_level(body)?;
    let n = args.len();
    let (lo, hi, expected) = match kind {
        OpKind::Select | OpKind::Exist => (1, 1, "1"),
        OpKind::Relate | OpKind::VerifyRel | OpKind::ChooseRel => (3, 3, "3"),
        OpKind::Compare => (2, 3, "2 or 3"),
        _ => (2, 2, "2"),
    };
    if n < lo || n > hi {
        return Err(GrammarError::Arity {
            op: name.to_string(),
            expected,
            got: n,
        });
    }
    let err = |index: usize| move |reason: String| GrammarError::Argument { index, reason };
    let list = |i: usize| check_inline_list(args[i]).map_err(err(i));
    let text = |i: usize| check_text(args[i]).map_err(err(i));
    match kind {
        OpKind::Select => text(0),
        OpKind::Exist => list(0),
        OpKind::Relate | OpKind::VerifyRel | OpKind::ChooseRel => {
            // The dependency list sits on the object side: last for role s,
            // first for role o.
            let (l, named) = if args[2].starts_with('[') { (2, 0) } else { (0, 2) };
            list(l)?;
            text(named)?;
            if kind == OpKind::ChooseRel {
                check_choice(args[1]).map_err(err(1))
            } else {
                text(1)
            }
        }
        OpKind::Filter | OpKind::Verify | OpKind::Query | OpKind::Same | OpKind::Different => {
            list(0)?;
            text(1)
        }
        OpKind::Choose => {
            list(0)?;
            if category.as_deref().is_some_and(is_comparative) && args[1].starts_with('[') {
                list(1)
            } else {
                check_choice(args[1]).map_err(err(1))
            }
        }
        OpKind::And | OpKind::Or => {
            check_bool(args[0]).map_err(err(0))?;
            check_bool(args[1]).map_err(err(1))
        }
        OpKind::Common | OpKind::SamePair | OpKind::DifferentPair => {
            list(0)?;
            list(1)
        }
        OpKind::Compare => {
            list(0)?;
            list(1)?;
            if n == 3 {
                text(2)
            } else {
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    const FIG7: &str = "<subtask>select(garland)<answer>garland <bbox>(0.51, 0.0, 0.54, 0.09)\
<subtask>relate(curtain, to the right of, [garland <bbox>(0.51, 0.0, 0.54, 0.09)])\
<answer>curtain <bbox>(0.73, 0.0, 0.87, 0.58)\
<subtask>relate(furniture, same color, [curtain <bbox>(0.73, 0.0, 0.87, 0.58)])\
<answer>couch <bbox>(0.12, 0.48, 0.71, 0.97)\
<subtask>query([couch <bbox>(0.12, 0.48, 0.71, 0.97)], name)<answer>couch";

    #[test]
    fn parses_and_reserializes_garland_document() {
        let t = parse(FIG7).unwrap();
        assert_eq!(t.len(), 4);
        assert_eq!(t.final_answer(), "couch");
        assert_eq!(t.final_value(), &Value::Attribute("couch".into()));
        assert_eq!(serialize(&t).as_str(), FIG7);
        for s in t.steps() {
            check_operation(&s.rendered_op).unwrap();
        }
    }

    #[test]
    fn none_value_renders_and_parses() {
        let t = SoTTrace::new(vec![Step {
            rendered_op: "select(unicorn)".into(),
            value: Value::None,
        }])
        .unwrap();
        let doc = serialize(&t);
        assert_eq!(doc.as_str(), "<subtask>select(unicorn)<answer>None");
        assert_eq!(parse(doc.as_str()).unwrap(), t);
    }

    #[test]
    fn parse_errors() {
        let e = parse("<subtask>x<answer>a <bbox>(0.1, 0.2)").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::MalformedBBox);
        assert_eq!(parse("   ").unwrap_err().kind, ParseErrorKind::Empty);
        assert_eq!(
            parse("<subtask>select(a)").unwrap_err().kind,
            ParseErrorKind::UnbalancedTags
        );
        assert_eq!(
            parse("<answer>x").unwrap_err().kind,
            ParseErrorKind::UnbalancedTags
        );
        assert_eq!(
            parse("<subtask>select(a)<answer>a <bbox>(0.1, x, 0.2, 0.3)").unwrap_err().kind,
            ParseErrorKind::MalformedBBox
        );
        assert_eq!(
            parse("<subtask>select(a)<answer>a <bbox>(0.1, 0.1, 1.2, 0.3)").unwrap_err().kind,
            ParseErrorKind::MalformedBBox
        );
    }

    #[test]
    fn whitespace_is_normalized() {
        let t = parse("  <subtask> select(a) <answer> a <bbox>( 0.1,0.2 ,0.3, 0.40)\n<subtask>exist([a <bbox>(0.1,0.2,0.3,0.4)])<answer>Yes\n")
            .unwrap();
        assert_eq!(t.steps()[1].rendered_op, "exist([a <bbox>(0.1, 0.2, 0.3, 0.4)])");
        assert_eq!(t.final_value(), &Value::Boolean(true));
        assert_eq!(
            serialize(&t).as_str(),
            "<subtask>select(a)<answer>a <bbox>(0.1, 0.2, 0.3, 0.4)<subtask>exist([a <bbox>(0.1, 0.2, 0.3, 0.4)])<answer>yes"
        );
    }

    #[test]
    fn filter_rules_in_order() {
        let cfg = FilterConfig::default();
        let t = parse(FIG7).unwrap();
        assert!(filter_sot(&t, "Couch ", &cfg).accepted);
        assert_eq!(filter_sot(&t, "sofa", &cfg).reason, FilterReason::AnswerMismatch);
        let no = parse("<subtask>select(a)<answer>a <bbox>(0.1, 0.2, 0.3, 0.4)<subtask>exist([a <bbox>(0.1, 0.2, 0.3, 0.4)])<answer>no").unwrap();
        assert!(filter_sot(&no, "No", &cfg).accepted);

        let typo = FIG7.replacen("select(", "selcet(", 1);
        let v = filter_document(&typo, "couch", &cfg);
        assert_eq!(v.reason, FilterReason::MalformedArgument);
        assert!(v.detail.contains("selcet"));

        let mut steps = t.steps().to_vec();
        let last = steps.pop().unwrap();
        while steps.len() < 12 {
            steps.push(steps[0].clone());
        }
        steps.push(last);
        let long = SoTTrace::new(steps).unwrap();
        assert_eq!(long.len(), 13);
        let v = filter_sot(&long, "couch", &cfg);
        assert_eq!(v.reason, FilterReason::OverLength);
        assert!(!v.accepted);

        let tight = FilterConfig::new(12, 100).unwrap();
        assert_eq!(filter_sot(&t, "couch", &tight).reason, FilterReason::OverLength);
        assert!(FilterConfig::new(0, 1).is_err());
    }

    #[test]
    fn grammar_checks() {
        check_operation("choose rel(rice, to the left of|to the right of, [bowl <bbox>(0.36, 0.37, 0.59, 0.57)])").unwrap();
        check_operation("verify rel([plate <bbox>(0.06, 0.22, 0.41, 0.5)], on, spoon)").unwrap();
        check_operation("and(no, yes)").unwrap();
        check_operation("exist([None])").unwrap();
        check_operation("choose taller([a <bbox>(0.0, 0.0, 0.1, 0.1)], [b <bbox>(0.0, 0.0, 0.1, 0.1)])").unwrap();
        assert!(matches!(
            check_operation("relate(a, on)"),
            Err(GrammarError::Arity { got: 2, .. })
        ));
        assert!(matches!(
            check_operation("verify color([a <bbox>(0.1, 0.2, 0.3)], red)"),
            Err(GrammarError::Argument { index: 0, .. })
        ));
        assert_eq!(check_operation("select(a"), Err(GrammarError::Shape));
        assert!(matches!(
            check_operation("choose color([a <bbox>(0.1, 0.2, 0.3, 0.4)], red)"),
            Err(GrammarError::Argument { index: 1, .. })
        ));
        assert_eq!(check_operation("exist([a <bbox>(0.1, 0.2, 0.3, 0.4)]])"), Err(GrammarError::Unbalanced));
    }

    #[test]
    fn answer_normalization() {
        assert_eq!(normalize_answer("  Couch "), "couch");
        assert_eq!(normalize_answer("Couch <bbox>(0.1, 0.2, 0.3, 0.4)"), "couch");
        assert_eq!(normalize_answer("dark   Blue"), "dark blue");
    }
}
