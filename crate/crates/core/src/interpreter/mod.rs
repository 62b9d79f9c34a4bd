//! Deterministic executor of parsed programs over scene graphs.
//!
//! Every step records the operation with its dependencies' values inlined and
//! the value it produced. Two renderings are kept side by side: the
//! Subtask-of-Thought form (object names with normalized boxes) and the
//! generation-prompt "Result" form (`#k` references with pixel boxes).

mod lexicon;

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::bbox::{normalize_bbox, NormBBox, DEFAULT_PRECISION};
use crate::program::{
    is_comparative, ChoiceContext, Entity, OpKind, ParsedArg, Program, ProgramOp, RelationSpec,
    Role,
};
use crate::scene_graph::{names_match, objects_by_name, SGObject, SceneGraph};

pub use lexicon::{Lexicon, LexiconError, CATEGORY_VOCABULARY, COMMON_PRIORITY};

/// An object in a step result.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectEntry {
    /// Scene-graph id; absent when the entry was parsed back from text.
    pub object_id: Option<String>,
    pub name: String,
    pub bbox: NormBBox,
}

impl fmt::Display for ObjectEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} <bbox>{}", self.name, self.bbox)
    }
}

/// Intermediate result of one step.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    /// Nonempty list of objects with normalized boxes.
    Objects(Vec<ObjectEntry>),
    Attribute(String),
    Boolean(bool),
    None,
    Choice(String),
    /// Key objects of `select(scene)`, by scene-graph id.
    SceneRef(Vec<String>),
}

impl Value {
    /// Text placed after `<answer>`.
    pub fn render_answer(&self) -> String {
        match self {
            Value::Objects(list) => join(list.iter().map(ToString::to_string)),
            Value::Attribute(s) | Value::Choice(s) => s.clone(),
            Value::Boolean(b) => yes_no(*b).to_string(),
            Value::None => "None".to_string(),
            Value::SceneRef(ids) => format!(
                "there are [{}]",
                join(ids.iter().map(|id| format!("#{id}")))
            ),
        }
    }

    /// Drops scene-graph ids, leaving only what the wire format carries.
    pub fn without_ids(&self) -> Value {
        match self {
            Value::Objects(list) => Value::Objects(
                list.iter()
                    .map(|e| ObjectEntry {
                        object_id: None,
                        ..e.clone()
                    })
                    .collect(),
            ),
            other => other.clone(),
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Boolean(b) => Some(*b),
            Value::None => Some(false),
            _ => None,
        }
    }
}

pub(crate) fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn join(parts: impl Iterator<Item = String>) -> String {
    parts.collect::<Vec<_>>().join(", ")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub rendered_op: String,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TraceError {
    #[error("a trace needs at least one step")]
    Empty,
}

/// Ordered reasoning steps; the last value is the answer.
#[derive(Debug, Clone, PartialEq)]
pub struct SoTTrace {
    steps: Vec<Step>,
    final_answer: String,
}

impl SoTTrace {
    pub fn new(steps: Vec<Step>) -> Result<Self, TraceError> {
        let last = steps.last().ok_or(TraceError::Empty)?;
        let final_answer = last.value.render_answer();
        Ok(SoTTrace {
            steps,
            final_answer,
        })
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn final_answer(&self) -> &str {
        &self.final_answer
    }

    pub fn final_value(&self) -> &Value {
        &self.steps[self.steps.len() - 1].value
    }

    pub fn without_ids(&self) -> SoTTrace {
        SoTTrace {
            steps: self
                .steps
                .iter()
                .map(|s| Step {
                    rendered_op: s.rendered_op.clone(),
                    value: s.value.without_ids(),
                })
                .collect(),
            final_answer: self.final_answer.clone(),
        }
    }

    pub fn into_steps(self) -> Vec<Step> {
        self.steps
    }
}

/// Thresholds for geometric position tests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionRule {
    /// Dead band around the midline, as a fraction of the image dimension.
    /// A box center inside the band is neither left nor right.
    pub margin: f64,
}

impl Default for PositionRule {
    fn default() -> Self {
        PositionRule { margin: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecConfig {
    pub lexicon: Lexicon,
    pub position_rule: PositionRule,
    pub precision: u32,
    pub strict: bool,
    /// Upper bound on key objects reported by `select(scene)` when the
    /// program names none.
    pub scene_key_cap: usize,
}

impl Default for ExecConfig {
    fn default() -> Self {
        ExecConfig {
            lexicon: Lexicon::seed(),
            position_rule: PositionRule::default(),
            precision: DEFAULT_PRECISION,
            strict: false,
            scene_key_cap: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExecFailure {
    DanglingAnnotation(String),
    EmptySelection(String),
    ChooseAmbiguous { left: String, right: String },
    UnresolvableCategory(String),
    TypeMismatch(&'static str),
}

impl fmt::Display for ExecFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExecFailure::DanglingAnnotation(id) => write!(f, "annotation id {id} not in scene"),
            ExecFailure::EmptySelection(what) => write!(f, "nothing matches {what}"),
            ExecFailure::ChooseAmbiguous { left, right } => {
                write!(f, "cannot decide between {left:?} and {right:?}")
            }
            ExecFailure::UnresolvableCategory(c) => write!(f, "cannot resolve category {c:?}"),
            ExecFailure::TypeMismatch(expected) => write!(f, "expected {expected}"),
        }
    }
}

impl ExecFailure {
    /// Stable machine-readable tag.
    pub fn code(&self) -> &'static str {
        match self {
            ExecFailure::DanglingAnnotation(_) => "dangling_annotation",
            ExecFailure::EmptySelection(_) => "empty_selection",
            ExecFailure::ChooseAmbiguous { .. } => "choose_ambiguous",
            ExecFailure::UnresolvableCategory(_) => "unresolvable_category",
            ExecFailure::TypeMismatch(_) => "type_mismatch",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("step {step}: {reason}")]
pub struct ExecutionError {
    pub step: usize,
    pub reason: ExecFailure,
}

/// One executed step in both renderings.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecutedStep {
    pub sot_op: String,
    pub result_op: String,
    pub value: Value,
    pub result_answer: String,
}

/// Entry of the JSON result block used by the generation prompt.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ResultEntry {
    #[serde(rename = "Operation")]
    pub operation: String,
    #[serde(rename = "Answer")]
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Execution {
    steps: Vec<ExecutedStep>,
}

impl Execution {
    pub fn steps(&self) -> &[ExecutedStep] {
        &self.steps
    }

    pub fn trace(&self) -> SoTTrace {
        SoTTrace::new(
            self.steps
                .iter()
                .map(|s| Step {
                    rendered_op: s.sot_op.clone(),
                    value: s.value.clone(),
                })
                .collect(),
        )
        .expect("programs are nonempty")
    }

    pub fn result_block(&self) -> Vec<ResultEntry> {
        self.steps
            .iter()
            .map(|s| ResultEntry {
                operation: s.result_op.clone(),
                answer: s.result_answer.clone(),
            })
            .collect()
    }
}

/// Runs `program` over `sg` and returns the SoT trace.
pub fn execute(p: &Program, sg: &SceneGraph, cfg: &ExecConfig) -> Result<SoTTrace, ExecutionError> {
    execute_detailed(p, sg, cfg).map(|e| e.trace())
}

/// Runs `program` over `sg`, keeping both renderings of every step.
pub fn execute_detailed(
    p: &Program,
    sg: &SceneGraph,
    cfg: &ExecConfig,
) -> Result<Execution, ExecutionError> {
    let mut ex = Executor {
        sg,
        cfg,
        program: p,
        values: Vec::with_capacity(p.len()),
    };
    let mut steps = Vec::with_capacity(p.len());
    for (index, op) in p.ops().iter().enumerate() {
        let terminal = index + 1 == p.len();
        let (args, value) = ex
            .step(index, op, terminal)
            .map_err(|reason| ExecutionError {
                step: index,
                reason,
            })?;
        let name = op.display_name();
        let sot_op = format!("{name}({})", ex.render_args(&args, Style::Sot));
        let result_op = format!("{name}({})", ex.render_args(&args, Style::Result));
        let result_answer = ex.render_result_answer(&value);
        ex.values.push(value.clone());
        steps.push(ExecutedStep {
            sot_op,
            result_op,
            value,
            result_answer,
        });
    }
    Ok(Execution { steps })
}

/// Rendered operation argument.
enum Arg {
    Text(String),
    Dep(usize),
}

#[derive(Clone, Copy)]
enum Style {
    Sot,
    Result,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Low,
    High,
}

struct Executor<'a> {
    sg: &'a SceneGraph,
    cfg: &'a ExecConfig,
    program: &'a Program,
    values: Vec<Value>,
}

type StepResult = Result<(Vec<Arg>, Value), ExecFailure>;

impl<'a> Executor<'a> {
    fn soft<T>(&self, failure: ExecFailure, fallback: T) -> Result<T, ExecFailure> {
        if self.cfg.strict {
            Err(failure)
        } else {
            Ok(fallback)
        }
    }

    fn entry(&self, o: &SGObject) -> ObjectEntry {
        ObjectEntry {
            object_id: Some(o.object_id.clone()),
            name: o.name.clone(),
            bbox: normalize_bbox(&o.bbox, self.sg.width(), self.sg.height(), self.cfg.precision),
        }
    }

    fn objects_value(&self, objs: &[&SGObject]) -> Value {
        if objs.is_empty() {
            Value::None
        } else {
            Value::Objects(objs.iter().map(|o| self.entry(o)).collect())
        }
    }

    /// Scene objects referenced by a dependency value, or `None` when the
    /// value carries no objects.
    fn deref(&self, dep: usize) -> Result<Option<Vec<&'a SGObject>>, ExecFailure> {
        let sg = self.sg;
        match &self.values[dep] {
            Value::Objects(list) => Ok(Some(
                list.iter()
                    .filter_map(|e| e.object_id.as_deref().and_then(|id| sg.get(id)))
                    .collect(),
            )),
            Value::SceneRef(ids) => Ok(Some(ids.iter().filter_map(|id| sg.get(id)).collect())),
            Value::None => Ok(None),
            _ => self.soft(ExecFailure::TypeMismatch("an object list"), None),
        }
    }

    fn check_annotation(&self, parsed: &ParsedArg) -> Result<(), ExecFailure> {
        match parsed.annotation_id() {
            Some(id) if self.cfg.strict && self.sg.get(id).is_none() => {
                Err(ExecFailure::DanglingAnnotation(id.to_string()))
            }
            _ => Ok(()),
        }
    }

    /// Objects called `name`, or belonging to the class `name`, in scene order.
    fn named(&self, name: &str) -> Vec<&'a SGObject> {
        let direct = objects_by_name(self.sg, name);
        let lex = &self.cfg.lexicon;
        self.sg
            .objects()
            .iter()
            .filter(|o| {
                direct.iter().any(|d| d.object_id == o.object_id) || lex.is_member(name, &o.name)
            })
            .collect()
    }

    fn candidates(&self, entity: &Entity) -> Vec<&'a SGObject> {
        match entity {
            Entity::Placeholder => self.sg.objects().iter().collect(),
            Entity::Named(n) => self.named(n),
        }
    }

    fn step(&self, index: usize, op: &ProgramOp, terminal: bool) -> StepResult {
        self.check_annotation(&op.parsed)?;
        let deps = &op.dependencies;
        let cat = op.category.as_deref();
        match (op.kind, &op.parsed) {
            (OpKind::Select, ParsedArg::ObjectRef { name, .. }) => self.select(index, name),
            (OpKind::Relate, ParsedArg::Relation(spec)) => self.relate(spec, deps[0]),
            (OpKind::Filter, ParsedArg::AttributeValue(v)) => {
                let args = vec![Arg::Dep(deps[0]), Arg::Text(v.clone())];
                let value = match self.deref(deps[0])? {
                    None => Value::None,
                    Some(objs) => {
                        let kept: Vec<_> = objs
                            .into_iter()
                            .filter(|o| self.attr_test(o, cat, v))
                            .collect();
                        self.objects_value(&kept)
                    }
                };
                Ok((args, value))
            }
            (OpKind::Verify, ParsedArg::AttributeValue(v)) => {
                let args = vec![Arg::Dep(deps[0]), Arg::Text(v.clone())];
                let holds = match self.deref(deps[0])? {
                    Some(objs) if !objs.is_empty() => {
                        objs.iter().all(|o| self.attr_test(o, cat, v))
                    }
                    _ => false,
                };
                Ok((args, Value::Boolean(holds)))
            }
            (OpKind::VerifyRel, ParsedArg::Relation(spec)) => {
                let args = relation_args(&spec.entity, &spec.relation, spec.role, deps[0]);
                let holds = match self.deref(deps[0])? {
                    Some(objs) if !objs.is_empty() => objs
                        .iter()
                        .all(|d| self.relation_holds(&spec.entity, &spec.relation, spec.role, d)),
                    _ => false,
                };
                Ok((args, Value::Boolean(holds)))
            }
            (OpKind::Exist, _) => {
                let holds = match &self.values[deps[0]] {
                    Value::Objects(l) => !l.is_empty(),
                    Value::SceneRef(ids) => !ids.is_empty(),
                    _ => false,
                };
                Ok((vec![Arg::Dep(deps[0])], Value::Boolean(holds)))
            }
            (OpKind::And | OpKind::Or, _) => {
                let a = self.boolean(deps[0])?;
                let b = self.boolean(deps[1])?;
                let v = if op.kind == OpKind::And { a && b } else { a || b };
                Ok((vec![Arg::Dep(deps[0]), Arg::Dep(deps[1])], Value::Boolean(v)))
            }
            (OpKind::ChooseRel, ParsedArg::ChoicePair {
                left,
                right,
                context: Some(ctx),
            }) => self.choose_rel(ctx, left, right, deps[0], terminal),
            (OpKind::Choose, parsed) if cat.is_some_and(is_comparative) => {
                self.choose_comparative(cat.unwrap_or_default(), parsed, deps)
            }
            (OpKind::Choose, ParsedArg::ChoicePair { left, right, .. }) => {
                let args = vec![Arg::Dep(deps[0]), Arg::Text(format!("{left}|{right}"))];
                let objs = self.deref(deps[0])?.unwrap_or_default();
                let test = |choice: &str| {
                    !objs.is_empty() && objs.iter().all(|o| self.attr_test(o, cat, choice))
                };
                let value = self.pick(left, right, test(left), test(right))?;
                Ok((args, value))
            }
            (OpKind::Query, ParsedArg::AttributeValue(category)) => {
                let args = vec![Arg::Dep(deps[0]), Arg::Text(category.clone())];
                let value = self.query(deps[0], category)?;
                Ok((args, value))
            }
            (OpKind::Common, _) => {
                let args = vec![Arg::Dep(deps[0]), Arg::Dep(deps[1])];
                let a = self.deref(deps[0])?.unwrap_or_default();
                let b = self.deref(deps[1])?.unwrap_or_default();
                for category in self.cfg.lexicon.common_order() {
                    let va = self.values_of_all(&a, &category);
                    let vb = self.values_of_all(&b, &category);
                    if va.intersection(&vb).next().is_some() {
                        return Ok((args, Value::Attribute(category)));
                    }
                }
                let v = self.soft(
                    ExecFailure::UnresolvableCategory("common".to_string()),
                    Value::None,
                )?;
                Ok((args, v))
            }
            (OpKind::SamePair | OpKind::DifferentPair, _) => {
                let args = vec![Arg::Dep(deps[0]), Arg::Dep(deps[1])];
                let category = cat.unwrap_or("attr");
                let a = self.deref(deps[0])?.unwrap_or_default();
                let b = self.deref(deps[1])?.unwrap_or_default();
                let va = self.values_of_all(&a, category);
                let vb = self.values_of_all(&b, category);
                if va.is_empty() || vb.is_empty() {
                    let v = self.soft(
                        ExecFailure::UnresolvableCategory(category.to_string()),
                        Value::None,
                    )?;
                    return Ok((args, v));
                }
                let shared = va.intersection(&vb).next().is_some();
                let same = op.kind == OpKind::SamePair;
                Ok((args, Value::Boolean(if same { shared } else { !shared })))
            }
            (OpKind::Same | OpKind::Different, ParsedArg::AttributeValue(category)) => {
                let args = vec![Arg::Dep(deps[0]), Arg::Text(category.clone())];
                let objs = self.deref(deps[0])?.unwrap_or_default();
                let sets: Vec<BTreeSet<String>> = objs
                    .iter()
                    .map(|o| self.values_of(o, category))
                    .collect();
                if objs.is_empty() || sets.iter().any(BTreeSet::is_empty) {
                    let v = self.soft(
                        ExecFailure::UnresolvableCategory(category.clone()),
                        Value::None,
                    )?;
                    return Ok((args, v));
                }
                let mut shared = sets[0].clone();
                for s in &sets[1..] {
                    shared = shared.intersection(s).cloned().collect();
                }
                let all_same = !shared.is_empty();
                let v = if op.kind == OpKind::Same {
                    all_same
                } else {
                    !all_same
                };
                Ok((args, Value::Boolean(v)))
            }
            (OpKind::Compare, parsed) => {
                let spec = match parsed {
                    ParsedArg::AttributeValue(s) => s.clone(),
                    _ => String::new(),
                };
                let mut args = vec![Arg::Dep(deps[0]), Arg::Dep(deps[1])];
                if !spec.is_empty() {
                    args.push(Arg::Text(spec.clone()));
                }
                let a = self.deref(deps[0])?.unwrap_or_default();
                let b = self.deref(deps[1])?.unwrap_or_default();
                let winner = match (a.first(), b.first()) {
                    (Some(a), Some(b)) => self.comparative_winner(&spec, a, b),
                    _ => None,
                };
                let value = match winner {
                    Some(o) => Value::Attribute(o.name.clone()),
                    None => self.soft(ExecFailure::UnresolvableCategory(spec), Value::None)?,
                };
                Ok((args, value))
            }
            _ => Err(ExecFailure::TypeMismatch("an argument matching the operation")),
        }
    }

    fn boolean(&self, dep: usize) -> Result<bool, ExecFailure> {
        match self.values[dep].as_bool() {
            Some(b) => Ok(b),
            None => self.soft(ExecFailure::TypeMismatch("a boolean"), false),
        }
    }

    fn select(&self, index: usize, name: &str) -> StepResult {
        let args = vec![Arg::Text(name.to_string())];
        if name.trim().eq_ignore_ascii_case("scene") {
            return Ok((args, Value::SceneRef(self.scene_keys(index))));
        }
        let objs = self.named(name);
        if objs.is_empty() {
            let v = self.soft(ExecFailure::EmptySelection(name.to_string()), Value::None)?;
            return Ok((args, v));
        }
        Ok((args, self.objects_value(&objs)))
    }

    /// Objects whose annotation ids appear in later operations; all objects
    /// (capped) when there are none.
    fn scene_keys(&self, index: usize) -> Vec<String> {
        let named: BTreeSet<&str> = self.program.ops()[index + 1..]
            .iter()
            .filter_map(|op| op.parsed.annotation_id())
            .collect();
        let keys: Vec<String> = self
            .sg
            .objects()
            .iter()
            .filter(|o| named.contains(o.object_id.as_str()))
            .map(|o| o.object_id.clone())
            .collect();
        if keys.is_empty() {
            self.sg
                .objects()
                .iter()
                .take(self.cfg.scene_key_cap)
                .map(|o| o.object_id.clone())
                .collect()
        } else {
            keys
        }
    }

    fn relate(&self, spec: &RelationSpec, dep: usize) -> StepResult {
        let args = relation_args(&spec.entity, &spec.relation, spec.role, dep);
        let Some(anchors) = self.deref(dep)? else {
            return Ok((args, Value::None));
        };
        let cands = self.candidates(&spec.entity);
        let mut found: Vec<&SGObject> = cands
            .iter()
            .copied()
            .filter(|c| {
                anchors.iter().any(|d| match spec.role {
                    Role::Subject => c.has_edge(&spec.relation, &d.object_id),
                    Role::Object => d.has_edge(&spec.relation, &c.object_id),
                })
            })
            .collect();
        if found.is_empty() {
            found = self.derived_relation(&spec.relation, &cands, &anchors);
        }
        if found.is_empty() {
            let v = self.soft(
                ExecFailure::EmptySelection(format!(
                    "{} {} anchor",
                    spec.entity.as_str(),
                    spec.relation
                )),
                Value::None,
            )?;
            return Ok((args, v));
        }
        Ok((args, self.objects_value(&found)))
    }

    /// `same <category>` / `different <category>` relations, which scene
    /// graphs do not store as edges.
    fn derived_relation(
        &self,
        relation: &str,
        cands: &[&'a SGObject],
        anchors: &[&'a SGObject],
    ) -> Vec<&'a SGObject> {
        let rel = relation.trim();
        let (same, category) = if let Some(c) = rel.strip_prefix("same ") {
            (true, c.trim())
        } else if let Some(c) = rel.strip_prefix("different ") {
            (false, c.trim())
        } else {
            return Vec::new();
        };
        cands
            .iter()
            .copied()
            .filter(|c| !anchors.iter().any(|a| a.object_id == c.object_id))
            .filter(|c| {
                let vc = self.values_of(c, category);
                !vc.is_empty()
                    && anchors.iter().any(|a| {
                        let va = self.values_of(a, category);
                        !va.is_empty() && (vc.intersection(&va).next().is_some() == same)
                    })
            })
            .collect()
    }

    fn relation_holds(&self, entity: &Entity, relation: &str, role: Role, d: &SGObject) -> bool {
        self.candidates(entity).iter().any(|c| match role {
            Role::Subject => c.has_edge(relation, &d.object_id),
            Role::Object => d.has_edge(relation, &c.object_id),
        })
    }

    fn choose_rel(
        &self,
        ctx: &ChoiceContext,
        left: &str,
        right: &str,
        dep: usize,
        terminal: bool,
    ) -> StepResult {
        let pair = format!("{left}|{right}");
        let args = relation_args(&ctx.entity, &pair, ctx.role, dep);
        let anchors = self.deref(dep)?.unwrap_or_default();
        let holds = |rel: &str| {
            anchors
                .iter()
                .any(|d| self.relation_holds(&ctx.entity, rel, ctx.role, d))
        };
        let (l, r) = if terminal {
            (short_direction(left), short_direction(right))
        } else {
            (left.to_string(), right.to_string())
        };
        let value = self.pick(&l, &r, holds(left), holds(right))?;
        Ok((args, value))
    }

    fn pick(&self, left: &str, right: &str, l: bool, r: bool) -> Result<Value, ExecFailure> {
        match (l, r) {
            (true, false) => Ok(Value::Choice(left.to_string())),
            (false, true) => Ok(Value::Choice(right.to_string())),
            _ => self.soft(
                ExecFailure::ChooseAmbiguous {
                    left: left.to_string(),
                    right: right.to_string(),
                },
                Value::None,
            ),
        }
    }

    fn choose_comparative(&self, comparative: &str, parsed: &ParsedArg, deps: &[usize]) -> StepResult {
        match (deps, parsed) {
            ([a, b], _) => {
                let args = vec![Arg::Dep(*a), Arg::Dep(*b)];
                let oa = self.deref(*a)?.unwrap_or_default();
                let ob = self.deref(*b)?.unwrap_or_default();
                let winner = match (oa.first(), ob.first()) {
                    (Some(x), Some(y)) => self.comparative_winner(comparative, x, y),
                    _ => None,
                };
                let value = match winner {
                    Some(o) => Value::Choice(o.name.clone()),
                    None => self.soft(
                        ExecFailure::UnresolvableCategory(comparative.to_string()),
                        Value::None,
                    )?,
                };
                Ok((args, value))
            }
            ([d], ParsedArg::ChoicePair { left, right, .. }) => {
                let args = vec![Arg::Dep(*d), Arg::Text(format!("{left}|{right}"))];
                let objs = self.deref(*d)?.unwrap_or_default();
                let find = |n: &str| objs.iter().copied().find(|o| names_match(&o.name, n));
                let value = match (find(left), find(right)) {
                    (Some(x), Some(y)) => match self.comparative_winner(comparative, x, y) {
                        Some(w) if w.object_id == x.object_id => Value::Choice(left.clone()),
                        Some(_) => Value::Choice(right.clone()),
                        None => self.pick(left, right, false, false)?,
                    },
                    _ => self.pick(left, right, false, false)?,
                };
                Ok((args, value))
            }
            _ => Err(ExecFailure::TypeMismatch("two objects to compare")),
        }
    }

    /// Object satisfying the comparative, by geometry where the box answers
    /// it and by lexicon rank otherwise.
    fn comparative_winner(&self, comparative: &str, a: &'a SGObject, b: &'a SGObject) -> Option<&'a SGObject> {
        let pick_max = |ka: f64, kb: f64| {
            if ka > kb {
                Some(a)
            } else if kb > ka {
                Some(b)
            } else {
                None
            }
        };
        let comparative = comparative.trim();
        match comparative {
            "taller" => pick_max(a.bbox.height(), b.bbox.height()),
            "shorter" => pick_max(-a.bbox.height(), -b.bbox.height()),
            "larger" | "bigger" => pick_max(a.bbox.area(), b.bbox.area()),
            "smaller" => pick_max(-a.bbox.area(), -b.bbox.area()),
            // Image y grows downward.
            "higher" => pick_max(-a.bbox.center().1, -b.bbox.center().1),
            "lower" => pick_max(a.bbox.center().1, b.bbox.center().1),
            other => {
                let lex = &self.cfg.lexicon;
                let (key, sign) = if lex.has_ranks(other) {
                    (other, 1)
                } else {
                    match opposite(other) {
                        Some(o) if lex.has_ranks(o) => (o, -1),
                        _ => return None,
                    }
                };
                let rank = |o: &SGObject| {
                    core::iter::once(&o.name)
                        .chain(o.attributes.iter())
                        .filter_map(|v| lex.rank(key, v))
                        .max()
                };
                let (ra, rb) = (rank(a)?, rank(b)?);
                pick_max((sign * ra) as f64, (sign * rb) as f64)
            }
        }
    }

    fn query(&self, dep: usize, category: &str) -> Result<Value, ExecFailure> {
        let category = category.trim();
        let unresolved = |this: &Self| {
            this.soft(
                ExecFailure::UnresolvableCategory(category.to_string()),
                Value::None,
            )
        };
        if let Value::SceneRef(ids) = &self.values[dep] {
            let lex = &self.cfg.lexicon;
            let hit = ids
                .iter()
                .filter_map(|id| self.sg.get(id))
                .find(|o| lex.category_of(&o.name) == Some(category));
            return match hit {
                Some(o) => Ok(Value::Attribute(o.name.clone())),
                None => unresolved(self),
            };
        }
        let Some(objs) = self.deref(dep)? else {
            return Ok(Value::None);
        };
        let Some(first) = objs.first() else {
            return unresolved(self);
        };
        match self.values_of(first, category).into_iter().next() {
            Some(v) => Ok(Value::Attribute(v)),
            None => unresolved(self),
        }
    }

    /// Values an object has for a category: its name, its geometric side,
    /// or the attributes the lexicon files under the category.
    fn values_of(&self, o: &SGObject, category: &str) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        match category {
            "name" => {
                out.insert(o.name.clone());
            }
            "hposition" => {
                if let Some(s) = self.side(o, true) {
                    out.insert(if s == Side::Low { "left" } else { "right" }.to_string());
                }
            }
            "vposition" => {
                if let Some(s) = self.side(o, false) {
                    out.insert(if s == Side::Low { "top" } else { "bottom" }.to_string());
                }
            }
            "attr" => {
                out.extend(o.attributes.iter().map(|a| a.trim().to_lowercase()));
            }
            _ => {
                let lex = &self.cfg.lexicon;
                out.extend(
                    o.attributes
                        .iter()
                        .filter(|a| lex.category_of(a) == Some(category))
                        .map(|a| a.trim().to_lowercase()),
                );
            }
        }
        out
    }

    fn values_of_all(&self, objs: &[&SGObject], category: &str) -> BTreeSet<String> {
        objs.iter()
            .flat_map(|o| self.values_of(o, category))
            .collect()
    }

    /// Which side of the image midline the box center falls on; `None`
    /// inside the dead band.
    fn side(&self, o: &SGObject, horizontal: bool) -> Option<Side> {
        let (cx, cy) = o.bbox.center();
        let (c, extent) = if horizontal {
            (cx, f64::from(self.sg.width()))
        } else {
            (cy, f64::from(self.sg.height()))
        };
        let mid = extent / 2.0;
        let band = self.cfg.position_rule.margin * extent;
        if c < mid - band {
            Some(Side::Low)
        } else if c > mid + band {
            Some(Side::High)
        } else {
            None
        }
    }

    /// Attribute test shared by filter, verify and choose.
    fn attr_test(&self, o: &SGObject, category: Option<&str>, value: &str) -> bool {
        let value = value.trim();
        if let Some(inner) = value
            .strip_prefix("not(")
            .and_then(|v| v.strip_suffix(')'))
        {
            return !self.attr_test(o, category, inner);
        }
        let lower = value.to_lowercase();
        let horizontal = matches!(lower.as_str(), "left" | "right");
        let vertical = matches!(lower.as_str(), "top" | "bottom");
        match category {
            Some("hposition") | Some("position") if horizontal => {
                let want = if lower == "left" { Side::Low } else { Side::High };
                self.side(o, true) == Some(want)
            }
            Some("vposition") | Some("position") if vertical => {
                let want = if lower == "top" { Side::Low } else { Side::High };
                self.side(o, false) == Some(want)
            }
            Some("name") => names_match(&o.name, value),
            None => o.has_attribute(value) || names_match(&o.name, value),
            _ => o.has_attribute(value),
        }
    }

    fn render_args(&self, args: &[Arg], style: Style) -> String {
        join(args.iter().map(|a| match a {
            Arg::Text(t) => t.clone(),
            Arg::Dep(d) => self.render_inline(&self.values[*d], style),
        }))
    }

    fn render_inline(&self, v: &Value, style: Style) -> String {
        match (v, style) {
            (Value::Objects(list), Style::Sot) => {
                format!("[{}]", join(list.iter().map(ToString::to_string)))
            }
            (Value::Objects(list), Style::Result) => format!(
                "[{}]",
                join(list.iter().map(|e| self.hash_ref(e.object_id.as_deref())))
            ),
            (Value::SceneRef(ids), Style::Sot) => format!(
                "[{}]",
                join(
                    ids.iter()
                        .filter_map(|id| self.sg.get(id))
                        .map(|o| self.entry(o).to_string())
                )
            ),
            (Value::SceneRef(ids), Style::Result) => {
                format!("[{}]", join(ids.iter().map(|id| self.hash_ref(Some(id)))))
            }
            (Value::Boolean(b), Style::Sot) => yes_no(*b).to_string(),
            (Value::Boolean(b), Style::Result) => capitalized(*b).to_string(),
            (Value::None, _) => "[None]".to_string(),
            (Value::Attribute(s) | Value::Choice(s), _) => s.clone(),
        }
    }

    fn hash_ref(&self, id: Option<&str>) -> String {
        match id.and_then(|id| self.sg.position(id)) {
            Some(p) => format!("#{}", p + 1),
            None => "#?".to_string(),
        }
    }

    fn render_result_answer(&self, v: &Value) -> String {
        match v {
            Value::Objects(list) => format!(
                "[{}]",
                join(list.iter().map(|e| {
                    let obj = e.object_id.as_deref().and_then(|id| self.sg.get(id));
                    match obj {
                        Some(o) => format!("{} {}", self.hash_ref(Some(&o.object_id)), o.bbox),
                        None => format!("#? {}", e.bbox),
                    }
                }))
            ),
            Value::Boolean(b) => format!("[{}]", capitalized(*b)),
            Value::None => "[None]".to_string(),
            Value::Attribute(s) | Value::Choice(s) => format!("[{s}]"),
            Value::SceneRef(ids) => format!(
                "there are [{}]",
                join(ids.iter().map(|id| self.hash_ref(Some(id))))
            ),
        }
    }
}

fn relation_args(entity: &Entity, relation: &str, role: Role, dep: usize) -> Vec<Arg> {
    let named = Arg::Text(entity.as_str().to_string());
    let rel = Arg::Text(relation.to_string());
    match role {
        Role::Subject => vec![named, rel, Arg::Dep(dep)],
        Role::Object => vec![Arg::Dep(dep), rel, named],
    }
}

fn capitalized(b: bool) -> &'static str {
    if b {
        "Yes"
    } else {
        "No"
    }
}

/// `to the left of` answers as `left` when it is the final step.
pub fn short_direction(relation: &str) -> String {
    let r = relation.trim();
    r.strip_prefix("to the ")
        .and_then(|s| s.strip_suffix(" of"))
        .unwrap_or(r)
        .to_string()
}

fn opposite(comparative: &str) -> Option<&'static str> {
    Some(match comparative {
        "younger" => "older",
        "older" => "younger",
        "less healthy" => "healthier",
        "healthier" => "less healthy",
        _ => return None,
    })
}
