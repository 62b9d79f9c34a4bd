//! Grounded-answer metrics: answer accuracy, IoU, precision/recall at IoU
//! thresholds, operation accuracy and step consistency.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::bbox::NormBBox;
use crate::interpreter::{SoTTrace, Value};
use crate::program::lookup_operation;
use crate::sot::{normalize_answer, op_name, parse_object_list};

/// Thresholds reported by default.
pub const DEFAULT_THRESHOLDS: [f64; 3] = [0.5, 0.75, 0.95];

/// Intersection over union; a zero-area union scores 0.
pub fn iou(a: &NormBBox, b: &NormBBox) -> f64 {
    let iw = (a.x_r.min(b.x_r) - a.x_l.max(b.x_l)).max(0.0);
    let ih = (a.y_r.min(b.y_r) - a.y_l.max(b.y_l)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub question_id: String,
    pub predicted_answer: String,
    pub gold_answer: String,
    pub predicted_bbox: Option<NormBBox>,
    pub gold_bbox: Option<NormBBox>,
    pub predicted_trace: Option<SoTTrace>,
    pub gold_trace: Option<SoTTrace>,
}

impl EvalRecord {
    pub fn answer_correct(&self) -> bool {
        answers_match(&self.predicted_answer, &self.gold_answer)
    }

    pub fn box_iou(&self) -> Option<f64> {
        match (&self.predicted_bbox, &self.gold_bbox) {
            (Some(p), Some(g)) => Some(iou(p, g)),
            _ => None,
        }
    }
}

/// Exact match after normalization; an empty prediction never matches.
pub fn answers_match(predicted: &str, gold: &str) -> bool {
    let p = normalize_answer(predicted);
    !p.is_empty() && p == normalize_answer(gold)
}

/// Box a trace grounds its answer in: the first object fed to a final
/// `query(…, name)`, or the first object of a final object list.
pub fn grounding_box(t: &SoTTrace) -> Option<NormBBox> {
    let last = t.steps().last()?;
    if let Value::Objects(list) = &last.value {
        return list.first().map(|e| e.bbox);
    }
    let op = last.rendered_op.trim();
    if op_name(op) != "query" {
        return None;
    }
    let body = op.strip_prefix("query(")?.strip_suffix(')')?;
    let (list, category) = body.rsplit_once(',')?;
    if category.trim() != "name" {
        return None;
    }
    let inner = list.trim().strip_prefix('[')?.strip_suffix(']')?;
    parse_object_list(inner).ok()?.first().map(|e| e.bbox)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    /// IoU must exceed the threshold.
    #[default]
    Strict,
    /// IoU equal to the threshold also counts.
    Inclusive,
}

impl ThresholdRule {
    pub fn passes(self, iou: f64, threshold: f64) -> bool {
        match self {
            ThresholdRule::Strict => iou > threshold,
            ThresholdRule::Inclusive => iou >= threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    TruePositive,
    FalsePositive,
}

/// TP iff the answer is correct and the IoU passes the threshold. Records
/// without both boxes are not classified.
pub fn classify(r: &EvalRecord, threshold: f64, rule: ThresholdRule) -> Option<Outcome> {
    let v = r.box_iou()?;
    Some(if r.answer_correct() && rule.passes(v, threshold) {
        Outcome::TruePositive
    } else {
        Outcome::FalsePositive
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecall {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    /// Records with a gold box but no predicted box; they count against
    /// recall only.
    pub missing_predictions: usize,
    /// Records without a gold box, left out entirely.
    pub excluded: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// Precision = TP / (TP + FP) over records with both boxes; recall = TP /
/// records with a gold box.
pub fn precision_recall(records: &[EvalRecord], threshold: f64, rule: ThresholdRule) -> PrecisionRecall {
    let (mut tp, mut fp, mut missing, mut excluded) = (0usize, 0usize, 0usize, 0usize);
    for r in records {
        match classify(r, threshold, rule) {
            Some(Outcome::TruePositive) => tp += 1,
            Some(Outcome::FalsePositive) => fp += 1,
            None if r.gold_bbox.is_some() => missing += 1,
            None => excluded += 1,
        }
    }
    let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
    let warning = (tp + fp == 0).then(|| "no records with both boxes".to_string());
    PrecisionRecall {
        threshold,
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fp + missing),
        true_positives: tp,
        false_positives: fp,
        missing_predictions: missing,
        excluded,
        warning,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    pub value: f64,
    pub count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// Mean IoU over records with a correct answer and both boxes.
pub fn mean_iou_correct(records: &[EvalRecord]) -> Ratio {
    let ious: Vec<f64> = records
        .iter()
        .filter(|r| r.answer_correct())
        .filter_map(EvalRecord::box_iou)
        .collect();
    if ious.is_empty() {
        return Ratio {
            value: 0.0,
            count: 0,
            warning: Some("no correct records with both boxes".to_string()),
        };
    }
    Ratio {
        value: ious.iter().sum::<f64>() / ious.len() as f64,
        count: ious.len(),
        warning: None,
    }
}

pub fn answer_accuracy(records: &[EvalRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    let hits = records.iter().filter(|r| r.answer_correct()).count();
    hits as f64 / records.len() as f64
}

/// Operation name without arguments, resolved through the catalog when
/// possible so spacing and case differences do not count.
fn op_key(rendered_op: &str) -> String {
    let name = op_name(rendered_op);
    match lookup_operation(name) {
        Some((kind, Some(c))) => format!("{} {c}", kind.stem()),
        Some((kind, None)) => kind.stem().to_string(),
        None => name.to_lowercase(),
    }
}

/// Positional match of operation names; denominator is the longer trace.
pub fn op_accuracy(pred: &SoTTrace, gold: &SoTTrace) -> f64 {
    let denom = pred.len().max(gold.len());
    if denom == 0 {
        return 1.0;
    }
    let hits = pred
        .steps()
        .iter()
        .zip(gold.steps())
        .filter(|(p, g)| op_key(&p.rendered_op) == op_key(&g.rendered_op))
        .count();
    hits as f64 / denom as f64
}

/// Operation with its own arguments but without inlined dependency values,
/// which are scored as intermediate answers instead.
pub fn op_skeleton(rendered_op: &str) -> String {
    let name = op_key(rendered_op);
    if matches!(name.as_str(), "and" | "or") {
        return format!("{name}()");
    }
    let body = rendered_op
        .find('(')
        .map_or("", |i| &rendered_op[i..]);
    let mut out = name;
    let mut depth = 0usize;
    for c in body.chars() {
        match c {
            '[' => {
                if depth == 0 {
                    out.push('[');
                }
                depth += 1;
            }
            ']' => {
                depth = depth.saturating_sub(1);
                if depth == 0 {
                    out.push(']');
                }
            }
            c if depth == 0 && !c.is_whitespace() => out.extend(c.to_lowercase()),
            _ => {}
        }
    }
    out
}

fn value_key(v: &Value) -> String {
    v.render_answer().trim().to_lowercase()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Bucket {
    TT,
    TF,
    FT,
    FF,
}

/// First letter: sub-tasks correct; second: intermediate answers correct.
pub fn bucket(pred: &SoTTrace, gold: &SoTTrace) -> Bucket {
    let same_len = pred.len() == gold.len();
    let ops_ok = same_len
        && pred
            .steps()
            .iter()
            .zip(gold.steps())
            .all(|(p, g)| op_skeleton(&p.rendered_op) == op_skeleton(&g.rendered_op));
    let values_ok = same_len
        && pred
            .steps()
            .iter()
            .zip(gold.steps())
            .all(|(p, g)| value_key(&p.value) == value_key(&g.value));
    match (ops_ok, values_ok) {
        (true, true) => Bucket::TT,
        (true, false) => Bucket::TF,
        (false, true) => Bucket::FT,
        (false, false) => Bucket::FF,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BucketCounts {
    #[serde(rename = "TT")]
    pub tt: usize,
    #[serde(rename = "TF")]
    pub tf: usize,
    #[serde(rename = "FT")]
    pub ft: usize,
    #[serde(rename = "FF")]
    pub ff: usize,
}

impl BucketCounts {
    pub fn add(&mut self, b: Bucket) {
        match b {
            Bucket::TT => self.tt += 1,
            Bucket::TF => self.tf += 1,
            Bucket::FT => self.ft += 1,
            Bucket::FF => self.ff += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tt + self.tf + self.ft + self.ff
    }
}

/// Bucket tallies split by whether the final answer was correct.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConsistencyTables {
    pub final_correct: BucketCounts,
    pub final_incorrect: BucketCounts,
}

/// Tallies records carrying both traces; others are skipped.
pub fn consistency_buckets(records: &[EvalRecord]) -> ConsistencyTables {
    let mut out = ConsistencyTables::default();
    for r in records {
        if let (Some(p), Some(g)) = (&r.predicted_trace, &r.gold_trace) {
            let b = bucket(p, g);
            if r.answer_correct() {
                out.final_correct.add(b);
            } else {
                out.final_incorrect.add(b);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub records: usize,
    pub answer_accuracy: f64,
    pub mean_iou_correct: Ratio,
    pub threshold_rule: ThresholdRule,
    pub precision_recall: Vec<PrecisionRecall>,
    /// Records with both a predicted and a gold box.
    pub box_records: usize,
    /// Mean positional operation accuracy over records with both traces.
    pub op_accuracy: Ratio,
    pub consistency: ConsistencyTables,
}

pub fn evaluate(records: &[EvalRecord], thresholds: &[f64], rule: ThresholdRule) -> MetricsReport {
    let box_records = records.iter().filter(|r| r.box_iou().is_some()).count();
    let op_scores: Vec<f64> = records
        .iter()
        .filter_map(|r| match (&r.predicted_trace, &r.gold_trace) {
            (Some(p), Some(g)) => Some(op_accuracy(p, g)),
            _ => None,
        })
        .collect();
    let op_ratio = if op_scores.is_empty() {
        Ratio {
            value: 0.0,
            count: 0,
            warning: Some("no records with both traces".to_string()),
        }
    } else {
        Ratio {
            value: op_scores.iter().sum::<f64>() / op_scores.len() as f64,
            count: op_scores.len(),
            warning: None,
        }
    };
    MetricsReport {
        records: records.len(),
        answer_accuracy: answer_accuracy(records),
        mean_iou_correct: mean_iou_correct(records),
        threshold_rule: rule,
        precision_recall: thresholds
            .iter()
            .map(|&t| precision_recall(records, t, rule))
            .collect(),
        box_records,
        op_accuracy: op_ratio,
        consistency: consistency_buckets(records),
    }
}

impl MetricsReport {
    /// Plain-text table for terminals.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "records            {}", self.records);
        let _ = writeln!(s, "answer accuracy    {:.4}", self.answer_accuracy);
        let _ = writeln!(
            s,
            "mean IoU (correct) {:.4}  (n={})",
            self.mean_iou_correct.value, self.mean_iou_correct.count
        );
        let _ = writeln!(
            s,
            "box coverage       {} of {} records ({} excluded)",
            self.box_records,
            self.records,
            self.records - self.box_records
        );
        let _ = writeln!(
            s,
            "op accuracy        {:.4}  (n={})",
            self.op_accuracy.value, self.op_accuracy.count
        );
        let _ = writeln!(s, "threshold  precision  recall  TP  FP");
        for pr in &self.precision_recall {
            let _ = writeln!(
                s,
                "{:<9}  {:<9.4}  {:<6.4}  {:<3} {}",
                pr.threshold, pr.precision, pr.recall, pr.true_positives, pr.false_positives
            );
        }
        let _ = writeln!(s, "consistency        TT   TF   FT   FF");
        for (label, c) in [
            ("final correct  ", &self.consistency.final_correct),
            ("final incorrect", &self.consistency.final_incorrect),
        ] {
            let _ = writeln!(s, "{label}    {:<4} {:<4} {:<4} {}", c.tt, c.tf, c.ft, c.ff);
        }
        for w in [
            &self.mean_iou_correct.warning,
            &self.op_accuracy.warning,
        ]
        .into_iter()
        .flatten()
        {
            let _ = writeln!(s, "warning: {w}");
        }
        s
    }
}
