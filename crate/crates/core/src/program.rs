//! GQA sub-task operation records and their argument micro-grammar.
//!
//! Raw records carry a free-form operation name (`"verify color"`), dependency
//! indices and a verbatim argument (`"bananas, to the left of s (681264)"`).
//! [`parse_program`] resolves names against the embedded catalog and parses
//! every argument into a [`ParsedArg`].

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One operation record as it appears in a GQA question annotation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawOp {
    #[serde(rename = "operation")]
    pub name: String,
    pub dependencies: Vec<usize>,
    pub argument: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OpKind {
    Select,
    Relate,
    Filter,
    Verify,
    VerifyRel,
    Choose,
    ChooseRel,
    Exist,
    And,
    Or,
    Query,
    Common,
    Compare,
    Same,
    SamePair,
    Different,
    DifferentPair,
}

impl OpKind {
    /// Stem used when rendering the operation (`verify`, `choose rel`, `same`).
    pub fn stem(self) -> &'static str {
        match self {
            OpKind::Select => "select",
            OpKind::Relate => "relate",
            OpKind::Filter => "filter",
            OpKind::Verify => "verify",
            OpKind::VerifyRel => "verify rel",
            OpKind::Choose => "choose",
            OpKind::ChooseRel => "choose rel",
            OpKind::Exist => "exist",
            OpKind::And => "and",
            OpKind::Or => "or",
            OpKind::Query => "query",
            OpKind::Common => "common",
            OpKind::Compare => "compare",
            OpKind::Same | OpKind::SamePair => "same",
            OpKind::Different | OpKind::DifferentPair => "different",
        }
    }

    /// Number of dependencies the executor expects, as an inclusive range.
    pub fn dependency_range(self) -> (usize, usize) {
        match self {
            OpKind::Select => (0, 0),
            OpKind::And | OpKind::Or | OpKind::SamePair | OpKind::DifferentPair => (2, 2),
            OpKind::Common | OpKind::Compare => (2, 2),
            OpKind::Choose => (1, 2),
            _ => (1, 1),
        }
    }
}

/// Choose categories answered by comparing two objects rather than testing
/// an attribute.
pub const COMPARATIVES: &[&str] = &[
    "younger",
    "older",
    "healthier",
    "less healthy",
    "taller",
    "shorter",
    "higher",
    "lower",
    "larger",
    "smaller",
];

pub fn is_comparative(category: &str) -> bool {
    COMPARATIVES.contains(&category)
}

const FILTER_CATEGORIES: &[&str] = &[
    "realism", "brightness", "texture", "depth", "weight", "orientation", "event", "liquid",
    "company", "race", "hardness", "room", "pattern", "length", "material", "hposition",
    "position", "size", "pose", "activity", "shape", "height", "age", "sportActivity",
    "face expression", "cleanliness", "sport", "weather", "state", "thickness", "opaqness",
    "flavor", "fatness", "width", "tone", "gender", "color", "vposition",
];

const CHOOSE_CATEGORIES: &[&str] = &[
    "weather", "hposition", "vposition", "color", "name", "material", "location", "size",
    "place", "younger", "older", "length", "pose", "activity", "height", "less healthy",
    "sportActivity", "shape", "healthier", "cleanliness", "state", "thickness", "pattern",
    "fatness", "shorter", "higher", "company", "taller", "realism", "larger", "hardness",
    "smaller", "brightness", "lower", "age", "weight", "depth", "flavor", "race", "opaqness",
    "gender", "face expression", "tone", "width",
];

const VERIFY_CATEGORIES: &[&str] = &[
    "state", "pose", "height", "location", "position", "size", "material", "length", "weather",
    "shape", "place", "pattern", "cleanliness", "thickness", "activity", "tone", "hardness",
    "face expression", "age", "sportActivity", "width", "fatness", "opaqness", "weight", "depth",
    "gender", "company", "realism", "type", "flavor", "brightness", "texture", "color", "race",
    "room", "hposition", "vposition",
];

const PAIR_CATEGORIES: &[&str] = &["color", "shape", "material", "attr"];

/// One catalog entry: the operation name as written in annotations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CatalogEntry {
    pub name: String,
    pub kind: OpKind,
    pub category: Option<String>,
}

/// Every operation name the parser accepts.
pub fn catalog() -> Vec<CatalogEntry> {
    let entry = |name: String, kind, category: Option<&str>| CatalogEntry {
        name,
        kind,
        category: category.map(str::to_string),
    };
    let mut out = vec![
        entry("select".into(), OpKind::Select, None),
        entry("relate".into(), OpKind::Relate, None),
        entry("exist".into(), OpKind::Exist, None),
        entry("and".into(), OpKind::And, None),
        entry("or".into(), OpKind::Or, None),
        entry("query".into(), OpKind::Query, None),
        entry("common".into(), OpKind::Common, None),
        entry("compare".into(), OpKind::Compare, None),
        entry("same".into(), OpKind::Same, None),
        entry("different".into(), OpKind::Different, None),
        entry("filter".into(), OpKind::Filter, None),
        entry("verify".into(), OpKind::Verify, None),
        entry("choose".into(), OpKind::Choose, None),
        entry("verify rel".into(), OpKind::VerifyRel, None),
        entry("choose rel".into(), OpKind::ChooseRel, None),
    ];
    for c in FILTER_CATEGORIES {
        out.push(entry(format!("filter {c}"), OpKind::Filter, Some(c)));
    }
    for c in VERIFY_CATEGORIES {
        out.push(entry(format!("verify {c}"), OpKind::Verify, Some(c)));
    }
    for c in CHOOSE_CATEGORIES {
        out.push(entry(format!("choose {c}"), OpKind::Choose, Some(c)));
    }
    for c in PAIR_CATEGORIES {
        out.push(entry(format!("same {c}"), OpKind::SamePair, Some(c)));
        out.push(entry(format!("different {c}"), OpKind::DifferentPair, Some(c)));
    }
    out
}

/// Resolves an operation name (`"verify color"`) to its kind and category.
pub fn lookup_operation(name: &str) -> Option<(OpKind, Option<String>)> {
    let wanted = collapse_ws(name);
    catalog()
        .into_iter()
        .find(|e| e.name.eq_ignore_ascii_case(&wanted))
        .map(|e| (e.kind, e.category))
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Annotation {
    Id(String),
    /// Written as `(-)`: the entity has no annotation id.
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    /// The named entity is the subject; the dependency fills the object slot.
    Subject,
    /// The named entity is the object; the dependency fills the subject slot.
    Object,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Entity {
    Named(String),
    /// `_`: any object.
    Placeholder,
}

impl Entity {
    fn parse(s: &str) -> Entity {
        if s == "_" {
            Entity::Placeholder
        } else {
            Entity::Named(s.to_string())
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            Entity::Named(n) => n,
            Entity::Placeholder => "_",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationSpec {
    pub entity: Entity,
    pub relation: String,
    pub role: Role,
    pub annotation: Option<Annotation>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChoiceContext {
    pub entity: Entity,
    pub role: Role,
    pub annotation: Option<Annotation>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParsedArg {
    ObjectRef {
        name: String,
        annotation: Option<Annotation>,
    },
    Relation(RelationSpec),
    ChoicePair {
        left: String,
        right: String,
        context: Option<ChoiceContext>,
    },
    AttributeValue(String),
    Empty,
}

impl ParsedArg {
    /// Annotation id carried by the argument, if any.
    pub fn annotation_id(&self) -> Option<&str> {
        let ann = match self {
            ParsedArg::ObjectRef { annotation, .. } => annotation.as_ref(),
            ParsedArg::Relation(spec) => spec.annotation.as_ref(),
            ParsedArg::ChoicePair {
                context: Some(ctx), ..
            } => ctx.annotation.as_ref(),
            _ => None,
        };
        match ann {
            Some(Annotation::Id(id)) => Some(id),
            _ => None,
        }
    }
}

fn write_annotation(f: &mut fmt::Formatter<'_>, ann: &Option<Annotation>) -> fmt::Result {
    match ann {
        Some(Annotation::Id(id)) => write!(f, " ({id})"),
        Some(Annotation::Unknown) => f.write_str(" (-)"),
        None => Ok(()),
    }
}

fn role_letter(role: Role) -> char {
    match role {
        Role::Subject => 's',
        Role::Object => 'o',
    }
}

/// Canonical argument string; re-parses to the same value.
impl fmt::Display for ParsedArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParsedArg::ObjectRef { name, annotation } => {
                f.write_str(name)?;
                write_annotation(f, annotation)
            }
            ParsedArg::Relation(spec) => {
                write!(
                    f,
                    "{},{},{}",
                    spec.entity.as_str(),
                    spec.relation,
                    role_letter(spec.role)
                )?;
                write_annotation(f, &spec.annotation)
            }
            ParsedArg::ChoicePair {
                left,
                right,
                context: None,
            } => write!(f, "{left}|{right}"),
            ParsedArg::ChoicePair {
                left,
                right,
                context: Some(ctx),
            } => {
                write!(
                    f,
                    "{},{left}|{right},{}",
                    ctx.entity.as_str(),
                    role_letter(ctx.role)
                )?;
                write_annotation(f, &ctx.annotation)
            }
            ParsedArg::AttributeValue(v) => f.write_str(v),
            ParsedArg::Empty => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ArgumentError {
    #[error("missing argument")]
    MissingArgument,
    #[error("malformed choice: {0:?}")]
    MalformedChoice(String),
    #[error("malformed argument: {0:?}")]
    MalformedArgument(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProgramError {
    #[error("empty program")]
    Empty,
    #[error("unknown operation {name:?} at index {index}")]
    UnknownOperation { name: String, index: usize },
    #[error("malformed program at index {index}: {reason}")]
    MalformedProgram { index: usize, reason: String },
    #[error("operation {index}: {source}")]
    Argument {
        index: usize,
        #[source]
        source: ArgumentError,
    },
}

/// Splits a trailing ` (id)` / ` (-)` suffix.
fn split_annotation(s: &str) -> Result<(&str, Option<Annotation>), ArgumentError> {
    let s = s.trim();
    if !s.ends_with(')') {
        return Ok((s, None));
    }
    let open = s
        .rfind('(')
        .ok_or_else(|| ArgumentError::MalformedArgument(s.to_string()))?;
    let inner = s[open + 1..s.len() - 1].trim();
    if inner.is_empty() || inner.contains(['(', ')']) {
        return Err(ArgumentError::MalformedArgument(s.to_string()));
    }
    let ann = if inner == "-" {
        Annotation::Unknown
    } else {
        Annotation::Id(inner.to_string())
    };
    Ok((s[..open].trim_end(), Some(ann)))
}

/// Splits the trailing role letter, attached either by a comma (`,s`) or a
/// space (`of s`).
fn split_role(s: &str) -> Option<(&str, Role)> {
    let s = s.trim_end();
    let (head, letter) = s.split_at(s.len().checked_sub(1)?);
    let role = match letter {
        "s" => Role::Subject,
        "o" => Role::Object,
        _ => return None,
    };
    let sep = head.chars().last()?;
    if sep == ',' || sep.is_whitespace() {
        let head = head[..head.len() - sep.len_utf8()].trim_end();
        let head = head.strip_suffix(',').unwrap_or(head).trim_end();
        Some((head, role))
    } else {
        None
    }
}

fn parse_relation_body(
    raw: &str,
) -> Result<(Entity, String, Role, Option<Annotation>), ArgumentError> {
    let malformed = || ArgumentError::MalformedArgument(raw.to_string());
    let (body, annotation) = split_annotation(raw)?;
    let (body, role) = split_role(body).ok_or_else(malformed)?;
    let (name, relation) = body.split_once(',').ok_or_else(malformed)?;
    let (name, relation) = (name.trim(), relation.trim());
    if name.is_empty() || relation.is_empty() {
        return Err(malformed());
    }
    Ok((Entity::parse(name), relation.to_string(), role, annotation))
}

fn parse_choice(s: &str) -> Result<(String, String), ArgumentError> {
    let parts: Vec<&str> = s.split('|').map(str::trim).collect();
    match parts.as_slice() {
        [l, r] if !l.is_empty() && !r.is_empty() => Ok((l.to_string(), r.to_string())),
        [_] => Err(ArgumentError::MalformedArgument(s.to_string())),
        _ => Err(ArgumentError::MalformedChoice(s.to_string())),
    }
}

/// Parses one verbatim GQA argument according to the operation it belongs to.
pub fn parse_argument(
    kind: OpKind,
    category: Option<&str>,
    argument: &str,
) -> Result<ParsedArg, ArgumentError> {
    let arg = argument.trim();
    match kind {
        OpKind::Exist
        | OpKind::And
        | OpKind::Or
        | OpKind::Common
        | OpKind::SamePair
        | OpKind::DifferentPair => Ok(ParsedArg::Empty),
        OpKind::Select => {
            if arg.is_empty() {
                return Err(ArgumentError::MissingArgument);
            }
            let (name, annotation) = split_annotation(arg)?;
            if name.is_empty() || name.contains([',', '|']) {
                return Err(ArgumentError::MalformedArgument(arg.to_string()));
            }
            Ok(ParsedArg::ObjectRef {
                name: name.to_string(),
                annotation,
            })
        }
        OpKind::Relate | OpKind::VerifyRel => {
            if arg.is_empty() {
                return Err(ArgumentError::MissingArgument);
            }
            let (entity, relation, role, annotation) = parse_relation_body(arg)?;
            if relation.contains('|') {
                return Err(ArgumentError::MalformedArgument(arg.to_string()));
            }
            Ok(ParsedArg::Relation(RelationSpec {
                entity,
                relation,
                role,
                annotation,
            }))
        }
        OpKind::ChooseRel => {
            if arg.is_empty() {
                return Err(ArgumentError::MissingArgument);
            }
            let (entity, relation, role, annotation) = parse_relation_body(arg)?;
            let (left, right) = parse_choice(&relation)?;
            Ok(ParsedArg::ChoicePair {
                left,
                right,
                context: Some(ChoiceContext {
                    entity,
                    role,
                    annotation,
                }),
            })
        }
        OpKind::Choose => {
            let comparative = category.is_some_and(is_comparative);
            if arg.is_empty() {
                return if comparative {
                    Ok(ParsedArg::Empty)
                } else {
                    Err(ArgumentError::MissingArgument)
                };
            }
            let (left, right) = parse_choice(arg)?;
            Ok(ParsedArg::ChoicePair {
                left,
                right,
                context: None,
            })
        }
        OpKind::Compare => {
            if arg.is_empty() {
                Ok(ParsedArg::Empty)
            } else {
                Ok(ParsedArg::AttributeValue(arg.to_string()))
            }
        }
        OpKind::Filter | OpKind::Verify | OpKind::Query | OpKind::Same | OpKind::Different => {
            if arg.is_empty() {
                return Err(ArgumentError::MissingArgument);
            }
            if arg.contains('|') {
                return Err(ArgumentError::MalformedArgument(arg.to_string()));
            }
            Ok(ParsedArg::AttributeValue(arg.to_string()))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProgramOp {
    pub kind: OpKind,
    pub category: Option<String>,
    pub parsed: ParsedArg,
    pub dependencies: Vec<usize>,
}

impl ProgramOp {
    /// Operation name as rendered in traces (`verify color`, `choose rel`).
    pub fn display_name(&self) -> String {
        match &self.category {
            Some(c) => format!("{} {c}", self.kind.stem()),
            None => self.kind.stem().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    ops: Vec<ProgramOp>,
}

impl Program {
    pub fn ops(&self) -> &[ProgramOp] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn terminal(&self) -> &ProgramOp {
        // Programs are never empty once parsed.
        &self.ops[self.ops.len() - 1]
    }
}

/// Resolves operation names, parses arguments and checks the dependency DAG.
pub fn parse_program(raw: &[RawOp]) -> Result<Program, ProgramError> {
    if raw.is_empty() {
        return Err(ProgramError::Empty);
    }
    let mut ops = Vec::with_capacity(raw.len());
    let mut used = vec![false; raw.len()];
    for (index, r) in raw.iter().enumerate() {
        let (kind, category) =
            lookup_operation(&r.name).ok_or_else(|| ProgramError::UnknownOperation {
                name: r.name.clone(),
                index,
            })?;
        for (k, &d) in r.dependencies.iter().enumerate() {
            if d >= index {
                return Err(ProgramError::MalformedProgram {
                    index,
                    reason: format!("dependency {d} does not precede the operation"),
                });
            }
            if k > 0 && r.dependencies[k - 1] >= d {
                return Err(ProgramError::MalformedProgram {
                    index,
                    reason: "dependencies must be strictly increasing".to_string(),
                });
            }
            used[d] = true;
        }
        let (lo, hi) = kind.dependency_range();
        let n = r.dependencies.len();
        if n < lo || n > hi {
            return Err(ProgramError::MalformedProgram {
                index,
                reason: format!("{} expects {lo}..={hi} dependencies, got {n}", r.name.trim()),
            });
        }
        let parsed = parse_argument(kind, category.as_deref(), &r.argument)
            .map_err(|source| ProgramError::Argument { index, source })?;
        ops.push(ProgramOp {
            kind,
            category,
            parsed,
            dependencies: r.dependencies.clone(),
        });
    }
    if let Some(index) = used[..raw.len() - 1].iter().position(|u| !u) {
        return Err(ProgramError::MalformedProgram {
            index,
            reason: "result is never used; program has more than one terminal operation"
                .to_string(),
        });
    }
    Ok(Program { ops })
}
