//! Scene graphs, question records, GQA-format ingestion and balanced sampling.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::marker::PhantomData;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::{Deserializer, MapAccess, Visitor};
use serde::Deserialize;
use thiserror::Error;

use crate::bbox::BBox;
use crate::program::RawOp;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SceneGraphError {
    #[error("malformed document: {0}")]
    Malformed(String),
    #[error("image {image_id}: width and height must be positive (got {width}x{height})")]
    BadDimensions {
        image_id: String,
        width: u32,
        height: u32,
    },
    #[error("image {image_id}: empty object id")]
    EmptyObjectId { image_id: String },
    #[error("image {image_id}: duplicate object id {object_id}")]
    DuplicateObject { image_id: String, object_id: String },
    #[error("image {image_id}, object {object_id}: {reason}")]
    BadBox {
        image_id: String,
        object_id: String,
        reason: String,
    },
}

/// Non-fatal findings collected during ingestion.
#[derive(Debug, Clone, PartialEq)]
pub enum IngestWarning {
    DanglingRelation {
        image_id: String,
        object_id: String,
        relation: String,
        target: String,
    },
    ZeroArea {
        image_id: String,
        object_id: String,
    },
    OutOfBounds {
        image_id: String,
        object_id: String,
    },
    SkippedQuestion {
        question_id: String,
        reason: String,
    },
}

impl fmt::Display for IngestWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IngestWarning::DanglingRelation {
                image_id,
                object_id,
                relation,
                target,
            } => write!(
                f,
                "dangling_relation\timage={image_id}\tobject={object_id}\trelation={relation}\ttarget={target}"
            ),
            IngestWarning::ZeroArea {
                image_id,
                object_id,
            } => write!(f, "zero_area\timage={image_id}\tobject={object_id}"),
            IngestWarning::OutOfBounds {
                image_id,
                object_id,
            } => write!(f, "out_of_bounds\timage={image_id}\tobject={object_id}"),
            IngestWarning::SkippedQuestion {
                question_id,
                reason,
            } => write!(f, "skipped_question\tquestion={question_id}\treason={reason}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Relation {
    pub name: String,
    pub target: String,
}

/// One annotated object. Relations list the edges where this object is the subject.
#[derive(Debug, Clone, PartialEq)]
pub struct SGObject {
    pub object_id: String,
    pub name: String,
    pub attributes: Vec<String>,
    pub bbox: BBox,
    pub relations: Vec<Relation>,
}

impl SGObject {
    pub fn has_attribute(&self, value: &str) -> bool {
        let value = value.trim();
        self.attributes
            .iter()
            .any(|a| a.trim().eq_ignore_ascii_case(value))
    }

    pub fn has_edge(&self, relation: &str, target: &str) -> bool {
        let relation = relation.trim();
        self.relations
            .iter()
            .any(|r| r.target == target && r.name.trim().eq_ignore_ascii_case(relation))
    }
}

/// Immutable scene graph; objects keep their annotation order.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneGraph {
    image_id: String,
    width: u32,
    height: u32,
    objects: Vec<SGObject>,
    index: BTreeMap<String, usize>,
}

impl SceneGraph {
    /// Validates and assembles a scene graph. Relations pointing at unknown
    /// objects are dropped and reported; out-of-image and zero-area boxes are
    /// kept and reported.
    pub fn new(
        image_id: impl Into<String>,
        width: u32,
        height: u32,
        mut objects: Vec<SGObject>,
    ) -> Result<(SceneGraph, Vec<IngestWarning>), SceneGraphError> {
        let image_id = image_id.into();
        if width == 0 || height == 0 {
            return Err(SceneGraphError::BadDimensions {
                image_id,
                width,
                height,
            });
        }
        let mut index = BTreeMap::new();
        for (i, obj) in objects.iter().enumerate() {
            if obj.object_id.is_empty() {
                return Err(SceneGraphError::EmptyObjectId { image_id });
            }
            if index.insert(obj.object_id.clone(), i).is_some() {
                return Err(SceneGraphError::DuplicateObject {
                    image_id,
                    object_id: obj.object_id.clone(),
                });
            }
        }
        let mut warnings = Vec::new();
        for obj in objects.iter_mut() {
            let object_id = obj.object_id.clone();
            obj.relations.retain(|r| {
                let ok = index.contains_key(&r.target);
                if !ok {
                    warnings.push(IngestWarning::DanglingRelation {
                        image_id: image_id.clone(),
                        object_id: object_id.clone(),
                        relation: r.name.clone(),
                        target: r.target.clone(),
                    });
                }
                ok
            });
            if obj.bbox.is_zero_area() {
                warnings.push(IngestWarning::ZeroArea {
                    image_id: image_id.clone(),
                    object_id: object_id.clone(),
                });
            }
            if !obj.bbox.fits_within(width, height) {
                warnings.push(IngestWarning::OutOfBounds {
                    image_id: image_id.clone(),
                    object_id,
                });
            }
        }
        Ok((
            SceneGraph {
                image_id,
                width,
                height,
                objects,
                index,
            },
            warnings,
        ))
    }

    pub fn image_id(&self) -> &str {
        &self.image_id
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn objects(&self) -> &[SGObject] {
        &self.objects
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn get(&self, object_id: &str) -> Option<&SGObject> {
        self.index.get(object_id).map(|&i| &self.objects[i])
    }

    /// Zero-based position of an object in annotation order.
    pub fn position(&self, object_id: &str) -> Option<usize> {
        self.index.get(object_id).copied()
    }

    /// Subject objects with an edge `subject --relation--> target_id`.
    pub fn subjects_of<'a>(
        &'a self,
        relation: &'a str,
        target_id: &'a str,
    ) -> impl Iterator<Item = &'a SGObject> + 'a {
        self.objects
            .iter()
            .filter(move |o| o.has_edge(relation, target_id))
    }
}

/// Lowercases, trims and strips one trailing `s`, so `banana` and `bananas`
/// compare equal.
pub fn name_key(name: &str) -> String {
    let lower = name.trim().to_lowercase();
    match lower.strip_suffix('s') {
        Some(stem) if !stem.is_empty() => stem.to_string(),
        _ => lower,
    }
}

pub fn names_match(a: &str, b: &str) -> bool {
    name_key(a) == name_key(b)
}

/// All objects whose name matches `name` under plural-insensitive comparison,
/// in scene order.
pub fn objects_by_name<'a>(sg: &'a SceneGraph, name: &str) -> Vec<&'a SGObject> {
    let key = name_key(name);
    sg.objects
        .iter()
        .filter(|o| name_key(&o.name) == key)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuestionRecord {
    pub question_id: String,
    pub image_id: String,
    pub text: String,
    pub answer: String,
    pub question_type: String,
    pub raw_ops: Vec<RawOp>,
}

/// Picks up to `quota_per_type` records per question type with a seeded
/// shuffle. Output keeps the input order of the chosen records.
pub fn sample_balanced(
    records: &[QuestionRecord],
    quota_per_type: usize,
    seed: u64,
) -> Vec<QuestionRecord> {
    let quota = quota_per_type.max(1);
    let mut by_type: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        by_type.entry(r.question_type.as_str()).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::new();
    for (_, mut idx) in by_type {
        idx.shuffle(&mut rng);
        idx.truncate(quota);
        chosen.extend(idx);
    }
    chosen.sort_unstable();
    chosen.into_iter().map(|i| records[i].clone()).collect()
}

// ---------------------------------------------------------------------------
// GQA document parsing

/// JSON object that remembers key order.
struct Ordered<V>(Vec<(String, V)>);

impl<'de, V: Deserialize<'de>> Deserialize<'de> for Ordered<V> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct OrderedVisitor<V>(PhantomData<V>);

        impl<'de, V: Deserialize<'de>> Visitor<'de> for OrderedVisitor<V> {
            type Value = Ordered<V>;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a JSON object")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
                let mut entries = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, V>()? {
                    entries.push((k, v));
                }
                Ok(Ordered(entries))
            }
        }

        deserializer.deserialize_map(OrderedVisitor(PhantomData))
    }
}

#[derive(Deserialize)]
struct GqaRelation {
    name: String,
    object: String,
}

#[derive(Deserialize)]
struct GqaObject {
    name: String,
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    #[serde(default)]
    attributes: Vec<String>,
    #[serde(default)]
    relations: Vec<GqaRelation>,
}

#[derive(Deserialize)]
struct GqaImage {
    width: u32,
    height: u32,
    objects: Ordered<GqaObject>,
}

/// Parses a GQA scene-graph document (`{image_id: {width, height, objects}}`).
/// Result keeps the document's image order.
pub fn parse_scene_graphs(
    text: &str,
) -> Result<(Vec<SceneGraph>, Vec<IngestWarning>), SceneGraphError> {
    let doc: Ordered<GqaImage> =
        serde_json::from_str(text).map_err(|e| SceneGraphError::Malformed(e.to_string()))?;
    let mut graphs = Vec::with_capacity(doc.0.len());
    let mut warnings = Vec::new();
    for (image_id, image) in doc.0 {
        let mut objects = Vec::with_capacity(image.objects.0.len());
        for (object_id, o) in image.objects.0 {
            let bbox = BBox::from_xywh(o.x, o.y, o.w, o.h).map_err(|e| SceneGraphError::BadBox {
                image_id: image_id.clone(),
                object_id: object_id.clone(),
                reason: e.to_string(),
            })?;
            objects.push(SGObject {
                object_id,
                name: o.name,
                attributes: o.attributes,
                bbox,
                relations: o
                    .relations
                    .into_iter()
                    .map(|r| Relation {
                        name: r.name,
                        target: r.object,
                    })
                    .collect(),
            });
        }
        let (sg, w) = SceneGraph::new(image_id, image.width, image.height, objects)?;
        warnings.extend(w);
        graphs.push(sg);
    }
    Ok((graphs, warnings))
}

#[derive(Deserialize)]
struct GqaTypes {
    structural: Option<String>,
    semantic: Option<String>,
    detailed: Option<String>,
}

#[derive(Deserialize)]
struct GqaOp {
    operation: String,
    #[serde(default)]
    dependencies: Vec<usize>,
    #[serde(default)]
    argument: String,
}

#[derive(Deserialize)]
struct GqaQuestion {
    #[serde(rename = "imageId")]
    image_id: String,
    question: String,
    answer: String,
    #[serde(default)]
    types: Option<GqaTypes>,
    #[serde(default, rename = "type")]
    plain_type: Option<String>,
    semantic: Vec<GqaOp>,
}

/// Parses a GQA question document (`{question_id: {...}}`) in file order.
/// Records that cannot be used are skipped and reported.
pub fn parse_questions(
    text: &str,
) -> Result<(Vec<QuestionRecord>, Vec<IngestWarning>), SceneGraphError> {
    let doc: Ordered<serde_json::Value> =
        serde_json::from_str(text).map_err(|e| SceneGraphError::Malformed(e.to_string()))?;
    let mut records = Vec::with_capacity(doc.0.len());
    let mut warnings = Vec::new();
    for (question_id, value) in doc.0 {
        let skip = |reason: String| IngestWarning::SkippedQuestion {
            question_id: question_id.clone(),
            reason,
        };
        let q: GqaQuestion = match serde_json::from_value(value) {
            Ok(q) => q,
            Err(e) => {
                warnings.push(skip(format!("malformed record: {e}")));
                continue;
            }
        };
        if q.semantic.is_empty() {
            warnings.push(skip("empty operation list".to_string()));
            continue;
        }
        let forward = q
            .semantic
            .iter()
            .enumerate()
            .find(|(i, op)| op.dependencies.iter().any(|d| d >= i));
        if let Some((i, _)) = forward {
            warnings.push(skip(format!("operation {i} depends on a later operation")));
            continue;
        }
        let question_type = q
            .types
            .and_then(|t| t.detailed.or(t.semantic).or(t.structural))
            .or(q.plain_type)
            .unwrap_or_else(|| "unknown".to_string());
        records.push(QuestionRecord {
            question_id: question_id.clone(),
            image_id: q.image_id,
            text: q.question,
            answer: q.answer,
            question_type,
            raw_ops: q
                .semantic
                .into_iter()
                .map(|op| RawOp {
                    name: op.operation,
                    dependencies: op.dependencies,
                    argument: op.argument,
                })
                .collect(),
        });
    }
    Ok((records, warnings))
}
