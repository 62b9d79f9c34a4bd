//! Generation prompts and response decoding.
//!
//! A prompt is a plain-text template with `{{slot}}` markers. The shipped
//! template carries the operation catalog, two worked examples and the
//! formatting notes, followed by the instance: question, program, scene
//! description and final answer. Model responses are JSON arrays of
//! `{"Operation", "Answer"}` entries that refer to objects as `#k`; decoding
//! resolves those references against the scene graph and produces the same
//! trace type the interpreter does.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use thiserror::Error;

use crate::bbox::{normalize_bbox, BBox};
use crate::interpreter::{
    execute, execute_detailed, ExecConfig, ExecutionError, ObjectEntry, ResultEntry, SoTTrace,
    Step, Value,
};
use crate::program::{lookup_operation, parse_program, OpKind, ProgramError, RawOp};
use crate::scene_graph::{parse_questions, parse_scene_graphs, QuestionRecord, SceneGraph};

const TEMPLATE: &str = include_str!("../assets/prompt_template.txt");
const CATALOG: &str = include_str!("../assets/prompt_catalog.txt");
const NOTES: &str = include_str!("../assets/prompt_notes.txt");
const EXAMPLE_SCENES: &str = include_str!("../assets/incontext_scenes.json");
const EXAMPLE_QUESTIONS: &str = include_str!("../assets/incontext_questions.json");

/// Slots every template must contain, in this order.
pub const SLOTS: [&str; 7] = [
    "catalog", "examples", "notes", "question", "program", "scene", "answer",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("template is missing the {{{{{0}}}}} slot")]
    MissingSlot(&'static str),
    #[error("template slot {{{{{0}}}}} is out of order")]
    SlotOrder(String),
    #[error("template has unknown slot {{{{{0}}}}}")]
    UnknownSlot(String),
    #[error("template has an unterminated slot marker")]
    Unterminated,
    #[error("template needs at least one in-context example")]
    NoExamples,
    #[error("question is about image {question} but the scene is {scene}")]
    ImageMismatch { question: String, scene: String },
}

/// One worked example shown to the model.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptExample {
    pub question: String,
    pub program: Vec<RawOp>,
    /// Omitted when the example reuses the previous example's scene.
    pub scene: Option<String>,
    pub answer: String,
    pub result: Vec<ResultEntry>,
}

impl PromptExample {
    /// Builds an example whose result block comes from executing its program.
    pub fn from_execution(
        q: &QuestionRecord,
        sg: &SceneGraph,
        with_scene: bool,
        cfg: &ExecConfig,
    ) -> Result<Self, OfflineError> {
        let program = parse_program(&q.raw_ops)?;
        let ex = execute_detailed(&program, sg, cfg)?;
        Ok(PromptExample {
            question: q.text.clone(),
            program: q.raw_ops.clone(),
            scene: with_scene.then(|| render_scene_description(sg, None)),
            answer: q.answer.clone(),
            result: ex.result_block(),
        })
    }

    fn render(&self, out: &mut String) {
        let _ = writeln!(out, "Question: {}", self.question);
        let _ = writeln!(out, "Operation: ");
        let _ = writeln!(out, "{}", render_program(&self.program));
        if let Some(scene) = &self.scene {
            let _ = writeln!(out, "Object description: ");
            let _ = writeln!(out, "{scene}");
        }
        let _ = writeln!(out, "Final Answer: {}", display_answer(&self.answer));
        let _ = writeln!(out, "Result:");
        let _ = write!(out, "{}", render_result_block(&self.result));
    }
}

enum Piece {
    Text(String),
    Slot(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    text: String,
    catalog: String,
    notes: String,
    examples: Vec<PromptExample>,
}

impl PromptTemplate {
    pub fn new(
        text: &str,
        catalog: &str,
        notes: &str,
        examples: Vec<PromptExample>,
    ) -> Result<Self, TemplateError> {
        split_template(text)?;
        if examples.is_empty() {
            return Err(TemplateError::NoExamples);
        }
        Ok(PromptTemplate {
            text: text.to_string(),
            catalog: catalog.trim_end().to_string(),
            notes: notes.trim_end().to_string(),
            examples,
        })
    }

    /// The bundled template with its two worked examples.
    pub fn shipped() -> Self {
        let (graphs, _) = parse_scene_graphs(EXAMPLE_SCENES).expect("bundled scenes parse");
        let (questions, _) = parse_questions(EXAMPLE_QUESTIONS).expect("bundled questions parse");
        let cfg = ExecConfig::default();
        let mut examples = Vec::new();
        let mut last_image: Option<&str> = None;
        for q in &questions {
            let sg = graphs
                .iter()
                .find(|g| g.image_id() == q.image_id)
                .expect("bundled question has its scene");
            let with_scene = last_image != Some(sg.image_id());
            examples.push(
                PromptExample::from_execution(q, sg, with_scene, &cfg)
                    .expect("bundled examples execute"),
            );
            last_image = Some(sg.image_id());
        }
        PromptTemplate::new(TEMPLATE, CATALOG, NOTES, examples).expect("bundled template is valid")
    }

    /// Same blocks and examples, different template text.
    pub fn with_text(&self, text: &str) -> Result<Self, TemplateError> {
        PromptTemplate::new(text, &self.catalog, &self.notes, self.examples.clone())
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn examples(&self) -> &[PromptExample] {
        &self.examples
    }
}

fn split_template(text: &str) -> Result<Vec<Piece>, TemplateError> {
    let mut pieces = Vec::new();
    let mut rest = text;
    let mut next = 0;
    while let Some(open) = rest.find("{{") {
        let close = rest[open..].find("}}").ok_or(TemplateError::Unterminated)? + open;
        let name = rest[open + 2..close].trim();
        let idx = SLOTS
            .iter()
            .position(|s| *s == name)
            .ok_or_else(|| TemplateError::UnknownSlot(name.to_string()))?;
        if idx < next {
            return Err(TemplateError::SlotOrder(name.to_string()));
        }
        if idx > next {
            return Err(TemplateError::MissingSlot(SLOTS[next]));
        }
        pieces.push(Piece::Text(rest[..open].to_string()));
        pieces.push(Piece::Slot(idx));
        next += 1;
        rest = &rest[close + 2..];
    }
    if next < SLOTS.len() {
        return Err(TemplateError::MissingSlot(SLOTS[next]));
    }
    pieces.push(Piece::Text(rest.to_string()));
    Ok(pieces)
}

/// Renders the full prompt for one question. Pure: identical inputs give
/// identical bytes.
pub fn build_prompt(
    q: &QuestionRecord,
    sg: &SceneGraph,
    tmpl: &PromptTemplate,
) -> Result<String, TemplateError> {
    if q.image_id != sg.image_id() {
        return Err(TemplateError::ImageMismatch {
            question: q.image_id.clone(),
            scene: sg.image_id().to_string(),
        });
    }
    let mut examples = String::new();
    for ex in &tmpl.examples {
        ex.render(&mut examples);
    }
    let examples = examples.trim_end().to_string();
    let mut out = String::new();
    for piece in split_template(&tmpl.text)? {
        match piece {
            Piece::Text(t) => out.push_str(&t),
            Piece::Slot(i) => match SLOTS[i] {
                "catalog" => out.push_str(&tmpl.catalog),
                "examples" => out.push_str(&examples),
                "notes" => out.push_str(&tmpl.notes),
                "question" => out.push_str(&q.text),
                "program" => out.push_str(&render_program(&q.raw_ops)),
                "scene" => out.push_str(&render_scene_description(sg, None)),
                _ => out.push_str(&display_answer(&q.answer)),
            },
        }
    }
    Ok(out)
}

/// Answers are shown capitalized, as in `Final Answer: No`.
fn display_answer(a: &str) -> String {
    let a = a.trim();
    let mut chars = a.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}

fn render_program(ops: &[RawOp]) -> String {
    let lines: Vec<String> = ops
        .iter()
        .map(|op| {
            let deps: Vec<String> = op.dependencies.iter().map(|d| d.to_string()).collect();
            format!(
                "    {{\"operation\": {}, \"dependencies\": [{}], \"argument\": {}}}",
                json_str(&op.name),
                deps.join(", "),
                json_str(&op.argument)
            )
        })
        .collect();
    format!("[\n{}\n]", lines.join(", \n"))
}

fn render_result_block(entries: &[ResultEntry]) -> String {
    let items: Vec<String> = entries
        .iter()
        .map(|e| {
            format!(
                "    {{\n        \"Operation\": {},\n        \"Answer\": {}\n    }}",
                json_str(&e.operation),
                json_str(&e.answer)
            )
        })
        .collect();
    format!("[\n{}\n]", items.join(",\n"))
}

fn pixel(v: f64) -> String {
    if v == libm::trunc(v) && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Numbered `"#k"` entries in scene order. With `relevant_ids`, only those
/// objects and the objects their relations point at are listed; numbering
/// still follows scene order.
pub fn render_scene_description(sg: &SceneGraph, relevant_ids: Option<&BTreeSet<String>>) -> String {
    let keep: Option<BTreeSet<&str>> = relevant_ids.map(|ids| {
        let mut keep: BTreeSet<&str> = BTreeSet::new();
        for o in sg.objects().iter().filter(|o| ids.contains(&o.object_id)) {
            keep.insert(&o.object_id);
            for r in &o.relations {
                keep.insert(&r.target);
            }
        }
        keep
    });
    let mut entries = Vec::new();
    for (i, o) in sg.objects().iter().enumerate() {
        if keep.as_ref().is_some_and(|k| !k.contains(o.object_id.as_str())) {
            continue;
        }
        let attrs: Vec<String> = o.attributes.iter().map(|a| json_str(a)).collect();
        let rels: Vec<String> = o
            .relations
            .iter()
            .filter_map(|r| {
                sg.position(&r.target)
                    .map(|p| json_str(&format!("{} #{}", r.name, p + 1)))
            })
            .collect();
        let b = &o.bbox;
        entries.push(format!(
            "    \"#{}\": {{\"id\":{},\"name\":{},\"attributes\":[{}],\"location\":[{},{},{},{}],\"relations\":[{}]}}",
            i + 1,
            json_str(&o.object_id),
            json_str(&o.name),
            attrs.join(","),
            pixel(b.x_left),
            pixel(b.y_top),
            pixel(b.x_right),
            pixel(b.y_bottom),
            rels.join(",")
        ));
    }
    if entries.is_empty() {
        return "{}".to_string();
    }
    format!("{{\n{}\n}}", entries.join(",\n"))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatError {
    #[error("no JSON array of {{Operation, Answer}} entries found")]
    NoResultBlock,
    #[error("step {step}: unknown object reference {reference}")]
    UnknownReference { step: usize, reference: String },
    #[error("step {step}: cannot read answer {answer:?}")]
    BadAnswer { step: usize, answer: String },
    #[error("step {step}: cannot read operation {operation:?}")]
    BadOperation { step: usize, operation: String },
}

/// Finds the first balanced JSON array in `text` that decodes as a nonempty
/// result block. Raw line breaks inside strings are tolerated.
pub fn extract_result_block(text: &str) -> Option<Vec<ResultEntry>> {
    let bytes = text.as_bytes();
    let mut from = 0;
    while let Some(rel) = text[from..].find('[') {
        let start = from + rel;
        if let Some(end) = matching_bracket(bytes, start) {
            let candidate = sanitize_strings(&text[start..=end]);
            if let Ok(entries) = serde_json::from_str::<Vec<ResultEntry>>(&candidate) {
                if !entries.is_empty() {
                    return Some(entries);
                }
            }
        }
        from = start + 1;
    }
    None
}

/// Index of the `]` closing the `[` at `start`, skipping string contents.
fn matching_bracket(bytes: &[u8], start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_str {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_str = true,
            b'[' | b'{' => depth += 1,
            b']' | b'}' => {
                depth = depth.checked_sub(1)?;
                if depth == 0 {
                    return (b == b']').then_some(i);
                }
            }
            _ => {}
        }
    }
    None
}

/// Replaces raw control characters inside JSON strings with spaces.
fn sanitize_strings(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut in_str = false;
    let mut escaped = false;
    for c in s.chars() {
        if in_str {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_str = false;
            } else if c.is_control() {
                out.push(' ');
                continue;
            }
        } else if c == '"' {
            in_str = true;
        }
        out.push(c);
    }
    out
}

/// Decodes a model response into a trace grounded in `sg`.
pub fn parse_response(
    text: &str,
    sg: &SceneGraph,
    cfg: &ExecConfig,
) -> Result<SoTTrace, FormatError> {
    let entries = extract_result_block(text).ok_or(FormatError::NoResultBlock)?;
    let decoder = Decoder { sg, cfg };
    let mut steps = Vec::with_capacity(entries.len());
    for (step, e) in entries.iter().enumerate() {
        let rendered_op = decoder.operation(step, &e.operation)?;
        let value = decoder.answer(step, &rendered_op, &e.answer)?;
        steps.push(Step { rendered_op, value });
    }
    SoTTrace::new(steps).map_err(|_| FormatError::NoResultBlock)
}

struct Decoder<'a> {
    sg: &'a SceneGraph,
    cfg: &'a ExecConfig,
}

impl Decoder<'_> {
    fn object(&self, step: usize, reference: &str, pixel_box: Option<BBox>) -> Result<ObjectEntry, FormatError> {
        let unknown = || FormatError::UnknownReference {
            step,
            reference: reference.to_string(),
        };
        let k: usize = reference
            .trim()
            .strip_prefix('#')
            .and_then(|n| n.trim().parse().ok())
            .ok_or_else(unknown)?;
        let o = k
            .checked_sub(1)
            .and_then(|i| self.sg.objects().get(i))
            .ok_or_else(unknown)?;
        let b = pixel_box.unwrap_or(o.bbox);
        Ok(ObjectEntry {
            object_id: Some(o.object_id.clone()),
            name: o.name.clone(),
            bbox: normalize_bbox(&b, self.sg.width(), self.sg.height(), self.cfg.precision),
        })
    }

    /// Parses `#k (x, y, x, y), #j, …`.
    fn objects(&self, step: usize, list: &str) -> Result<Vec<ObjectEntry>, FormatError> {
        let mut out = Vec::new();
        let mut rest = list.trim();
        let bad = || FormatError::BadAnswer {
            step,
            answer: list.to_string(),
        };
        while !rest.is_empty() {
            let end = rest.find([',', '(']).unwrap_or(rest.len());
            let reference = rest[..end].trim();
            rest = rest[end..].trim_start();
            let mut pixel_box = None;
            if let Some(r) = rest.strip_prefix('(') {
                let close = r.find(')').ok_or_else(bad)?;
                let nums: Result<Vec<f64>, _> =
                    r[..close].split(',').map(|n| n.trim().parse::<f64>()).collect();
                match nums.ok().as_deref() {
                    Some([a, b, c, d]) => {
                        pixel_box = Some(BBox::new(*a, *b, *c, *d).map_err(|_| bad())?);
                    }
                    _ => return Err(bad()),
                }
                rest = r[close + 1..].trim_start();
            }
            out.push(self.object(step, reference, pixel_box)?);
            if let Some(r) = rest.strip_prefix(',') {
                rest = r.trim_start();
            } else if !rest.is_empty() {
                return Err(bad());
            }
        }
        if out.is_empty() {
            return Err(bad());
        }
        Ok(out)
    }

    fn inline(&self, step: usize, inner: &str) -> Result<String, FormatError> {
        if inner.trim() == "None" {
            return Ok("[None]".to_string());
        }
        let list = self.objects(step, inner)?;
        let parts: Vec<String> = list.iter().map(ToString::to_string).collect();
        Ok(format!("[{}]", parts.join(", ")))
    }

    /// Rewrites `#k` lists into named objects with normalized boxes and
    /// lowercases boolean arguments of `and`/`or`.
    fn operation(&self, step: usize, op: &str) -> Result<String, FormatError> {
        let op = op.trim();
        let bad = || FormatError::BadOperation {
            step,
            operation: op.to_string(),
        };
        let open = op.find('(').ok_or_else(bad)?;
        let name = op[..open].trim();
        let body = op[open + 1..].strip_suffix(')').ok_or_else(bad)?;
        let kind = lookup_operation(name).map(|(k, _)| k);
        let mut out = String::with_capacity(op.len() * 2);
        out.push_str(name);
        out.push('(');
        let mut rest = body;
        while let Some(i) = rest.find('[') {
            out.push_str(&rest[..i]);
            let close = rest[i..].find(']').ok_or_else(bad)? + i;
            out.push_str(&self.inline(step, &rest[i + 1..close])?);
            rest = &rest[close + 1..];
        }
        out.push_str(rest);
        out.push(')');
        if matches!(kind, Some(OpKind::And | OpKind::Or)) {
            let args: Vec<String> = body
                .split(',')
                .map(|a| a.trim().trim_matches(['[', ']']).to_lowercase())
                .collect();
            return Ok(format!("{name}({})", args.join(", ")));
        }
        Ok(out)
    }

    fn answer(&self, step: usize, rendered_op: &str, answer: &str) -> Result<Value, FormatError> {
        let a = answer.trim();
        let bad = || FormatError::BadAnswer {
            step,
            answer: answer.to_string(),
        };
        if let Some(list) = a.strip_prefix("there are") {
            let inner = list
                .trim()
                .strip_prefix('[')
                .and_then(|l| l.strip_suffix(']'))
                .ok_or_else(bad)?;
            let ids = self
                .objects(step, inner)?
                .into_iter()
                .filter_map(|e| e.object_id)
                .collect();
            return Ok(Value::SceneRef(ids));
        }
        let inner = a
            .strip_prefix('[')
            .and_then(|l| l.strip_suffix(']'))
            .unwrap_or(a)
            .trim();
        if inner.is_empty() {
            return Err(bad());
        }
        if inner == "None" {
            return Ok(Value::None);
        }
        if inner.starts_with('#') {
            return self.objects(step, inner).map(Value::Objects);
        }
        let kind = lookup_operation(crate::sot::op_name(rendered_op)).map(|(k, _)| k);
        let boolean = match inner.to_lowercase().as_str() {
            "yes" => Some(true),
            "no" => Some(false),
            _ => None,
        };
        Ok(match kind {
            Some(OpKind::Choose | OpKind::ChooseRel) => Value::Choice(inner.to_string()),
            Some(OpKind::Query | OpKind::Common | OpKind::Compare) => {
                Value::Attribute(inner.to_string())
            }
            _ => match boolean {
                Some(b) => Value::Boolean(b),
                None => Value::Attribute(inner.to_string()),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OfflineError {
    #[error(transparent)]
    Program(#[from] ProgramError),
    #[error(transparent)]
    Execution(#[from] ExecutionError),
}

impl OfflineError {
    /// Stable machine-readable tag.
    pub fn code(&self) -> &'static str {
        match self {
            OfflineError::Program(ProgramError::UnknownOperation { .. }) => "unknown_operation",
            OfflineError::Program(_) => "malformed_program",
            OfflineError::Execution(e) => e.reason.code(),
        }
    }
}

/// Deterministic stand-in for the model: executes the question's program.
pub fn generate_offline(
    q: &QuestionRecord,
    sg: &SceneGraph,
    cfg: &ExecConfig,
) -> Result<SoTTrace, OfflineError> {
    let program = parse_program(&q.raw_ops)?;
    Ok(execute(&program, sg, cfg)?)
}

/// Result block the interpreter would print for a question, as JSON text;
/// what a perfectly answering model returns.
pub fn offline_response(
    q: &QuestionRecord,
    sg: &SceneGraph,
    cfg: &ExecConfig,
) -> Result<String, OfflineError> {
    let program = parse_program(&q.raw_ops)?;
    Ok(render_result_block(&execute_detailed(&program, sg, cfg)?.result_block()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn banana() -> (SceneGraph, Vec<QuestionRecord>) {
        let (graphs, _) = parse_scene_graphs(EXAMPLE_SCENES).unwrap();
        let (qs, _) = parse_questions(EXAMPLE_QUESTIONS).unwrap();
        (graphs.into_iter().next().unwrap(), qs)
    }

    #[test]
    fn scene_description_lists_every_object() {
        let (sg, _) = banana();
        let d = render_scene_description(&sg, None);
        assert!(d.contains(
            "\"#1\": {\"id\":\"681253\",\"name\":\"banana\",\"attributes\":[\"small\",\"yellow\"],\"location\":[237,87,310,117],\"relations\":[\"to the left of #10\"]}"
        ));
        assert!(d.contains("\"#16\": {\"id\":\"681269\""));
        assert!(!d.contains("\"#17\""));
        let parsed: serde_json::Value = serde_json::from_str(&d).unwrap();
        assert_eq!(parsed.as_object().unwrap().len(), 16);
    }

    #[test]
    fn relevant_ids_keep_relation_targets() {
        let (sg, _) = banana();
        let ids: BTreeSet<String> = ["681259".to_string()].into_iter().collect();
        let d = render_scene_description(&sg, Some(&ids));
        let parsed: serde_json::Value = serde_json::from_str(&d).unwrap();
        let keys: Vec<&String> = parsed.as_object().unwrap().keys().collect();
        assert_eq!(keys, ["#12", "#7"]);
        let (empty, _) = SceneGraph::new("e", 10, 10, Vec::new()).unwrap();
        assert_eq!(render_scene_description(&empty, None), "{}");
    }

    #[test]
    fn prompt_contains_instance_in_order() {
        let (sg, qs) = banana();
        let tmpl = PromptTemplate::shipped();
        let p = build_prompt(&qs[0], &sg, &tmpl).unwrap();
        assert_eq!(p, build_prompt(&qs[0], &sg, &tmpl).unwrap());
        let catalog = p.find("17. different").unwrap();
        let examples = p.find("Examples:").unwrap();
        let notes = p.find("Operation in Response:").unwrap();
        let instance = p.rfind("Question: Do the bananas").unwrap();
        assert!(catalog < examples && examples < notes && notes < instance);
        assert!(p.ends_with("Final Answer: No\nResult:\n"));
        assert!(p.contains("\"Answer\": \"[#12 (268, 32, 317, 82)]\""));
        assert!(p.contains("{\"operation\": \"relate\", \"dependencies\": [0], \"argument\": \"bananas, to the left of s (681264)\"}"));
        assert_eq!(tmpl.examples().len(), 2);
        assert!(tmpl.examples()[1].scene.is_none());
    }

    #[test]
    fn template_slot_errors() {
        let tmpl = PromptTemplate::shipped();
        assert_eq!(
            tmpl.with_text("{{catalog}}{{examples}}{{notes}}{{question}}{{program}}{{answer}}"),
            Err(TemplateError::MissingSlot("scene"))
        );
        assert_eq!(
            tmpl.with_text("{{catalog}}{{examples}}{{notes}}{{question}}{{program}}{{scene}}{{answer}}{{question}}"),
            Err(TemplateError::SlotOrder("question".into()))
        );
        assert!(matches!(tmpl.with_text("{{catalog}} {{oops}}"), Err(TemplateError::UnknownSlot(_))));
        assert_eq!(tmpl.with_text("{{catalog"), Err(TemplateError::Unterminated));
        let minimal = tmpl
            .with_text("{{catalog}}{{examples}}{{notes}}Q:{{question}}{{program}}{{scene}}A:{{answer}}")
            .unwrap();
        let (sg, qs) = banana();
        assert!(build_prompt(&qs[1], &sg, &minimal).unwrap().ends_with("A:Yes"));
    }

    #[test]
    fn decodes_printed_result_block_with_prose_and_line_breaks() {
        let (sg, _) = banana();
        let response = "Sure! Here is the result:\n[\n    {\n        \"Operation\": \"select(banana)\",\n        \"Answer\": \"[#1 (237, 87, 310, 117), \n        #12 (268, 32, 317, 82), #14 (248, 55, 312, 89)]\"\n    },\n    {\"Operation\": \"exist([#1, #12, #14])\", \"Answer\": \"[Yes]\"},\n    {\"Operation\": \"select(bowl)\", \"Answer\": \"[#6 (178,184,293,283)]\"},\n    {\"Operation\": \"exist([#6])\", \"Answer\": \"[Yes]\"},\n    {\"Operation\": \"and(Yes, Yes)\", \"Answer\": \"[Yes]\"}\n]\nHope this helps [really].";
        let t = parse_response(response, &sg, &ExecConfig::default()).unwrap();
        assert_eq!(t.len(), 5);
        assert_eq!(t.final_answer(), "yes");
        assert_eq!(t.steps()[4].rendered_op, "and(yes, yes)");
        assert_eq!(
            t.steps()[3].rendered_op,
            "exist([bowl <bbox>(0.36, 0.37, 0.59, 0.57)])"
        );
    }

    #[test]
    fn format_errors() {
        let (sg, _) = banana();
        let cfg = ExecConfig::default();
        assert_eq!(
            parse_response("I cannot answer", &sg, &cfg),
            Err(FormatError::NoResultBlock)
        );
        assert_eq!(parse_response("[]", &sg, &cfg), Err(FormatError::NoResultBlock));
        assert!(matches!(
            parse_response(r#"[{"Operation": "select(x)", "Answer": "[#99]"}]"#, &sg, &cfg),
            Err(FormatError::UnknownReference { step: 0, .. })
        ));
    }

    #[test]
    fn offline_and_echoed_response_agree() {
        let (sg, qs) = banana();
        let cfg = ExecConfig::default();
        for q in &qs {
            let offline = generate_offline(q, &sg, &cfg).unwrap();
            let online = parse_response(&offline_response(q, &sg, &cfg).unwrap(), &sg, &cfg).unwrap();
            assert_eq!(online, offline);
        }
    }
}
