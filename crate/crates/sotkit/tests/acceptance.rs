//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sot_core::eval::{evaluate, iou, precision_recall, EvalRecord, ThresholdRule};
use sot_core::llm_gen::{extract_result_block, offline_response};
use sot_core::program::parse_program;
use sot_core::sot::{check_operation, filter_document, normalize_answer, parse, serialize, FilterConfig, FilterReason};
use sot_core::synth::{random_program, random_scene};
use sot_core::{
    execute, normalize_bbox, parse_questions, parse_scene_graphs, ExecConfig, NormBBox, ObjectEntry,
    SoTTrace, Step, Value,
};
use sotkit::corpus::read_corpus;
use sotkit::pipeline::{GenFailure, Rejection, GENERATED, GEN_FAILURES, REJECTIONS};
use sotkit::{cmd_eval, cmd_filter, cmd_gen, cmd_ingest, cmd_stats, GenMode, PipelineConfig};

type Check = Result<String, String>;
type Snapshot = Vec<(String, Vec<u8>)>;
type Criterion = (&'static str, fn() -> Check);

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Result blocks as printed for the two worked examples.
const PRINTED_VERIFY: &str = r#"[
    {
        "Operation": "select(plantains)",
        "Answer": "[#7 (346, 0, 391, 70)]"
    },
    {
        "Operation": "relate(bananas, to the left of, [#7])",
        "Answer": "[#12 (268, 32, 317, 82)]"
    },
    {
        "Operation": "verify size([#12], large)",
        "Answer": "[No]"
    },
    {
        "Operation": "verify color([#12], yellow)",
        "Answer": "[Yes]"
    },
    {
        "Operation": "and(No, Yes)",
        "Answer": "[No]"
    }
]"#;

const PRINTED_EXIST: &str = r#"[
    {
        "Operation": "select(banana)",
        "Answer": "[#1 (237, 87, 310, 117),
        #12 (268, 32, 317, 82), #14 (248, 55, 312, 89)]"
    },
    {
        "Operation": "exist([#1, #12, #14])",
        "Answer": "[Yes]"
    },
    {
        "Operation": "select(bowl)",
        "Answer": "[#6 (178,184,293,283)]"
    },
    {
        "Operation": "exist([#6])",
        "Answer": "[Yes]"
    },
    {
        "Operation": "and(Yes, Yes)",
        "Answer": "[Yes]"
    }
]"#;

/// Whitespace collapsed and commas followed by exactly one space.
fn canonical(s: &str) -> String {
    let collapsed = s.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed.replace(" ,", ",").replace(", ", ",").replace(',', ", ")
}

fn golden_worked_examples() -> Check {
    let (graphs, _) = parse_scene_graphs(&read(&fixtures().join("worked_scenes.json"))).unwrap();
    let (qs, _) = parse_questions(&read(&fixtures().join("worked_questions.json"))).unwrap();
    let cfg = ExecConfig::default();
    let mut steps = 0;
    for (qid, printed, final_answer) in [
        ("q_banana_large_yellow", PRINTED_VERIFY, "[No]"),
        ("q_bowls_and_bananas", PRINTED_EXIST, "[Yes]"),
    ] {
        let q = qs.iter().find(|q| q.question_id == qid).unwrap();
        let sg = graphs.iter().find(|g| g.image_id() == q.image_id).unwrap();
        let got = offline_response(q, sg, &cfg).map_err(|e| format!("{qid}: {e}"))?;
        let got = extract_result_block(&got).ok_or(format!("{qid}: generator output has no result block"))?;
        let want = extract_result_block(printed).unwrap();
        ensure(got.len() == want.len(), || format!("{qid}: {} steps, printed {}", got.len(), want.len()))?;
        for (i, (g, w)) in got.iter().zip(&want).enumerate() {
            ensure(canonical(&g.operation) == canonical(&w.operation), || {
                format!("{qid} step {}: op {:?} != {:?}", i + 1, g.operation, w.operation)
            })?;
            ensure(canonical(&g.answer) == canonical(&w.answer), || {
                format!("{qid} step {}: answer {:?} != {:?}", i + 1, g.answer, w.answer)
            })?;
        }
        ensure(got.last().unwrap().answer == final_answer, || format!("{qid}: final answer"))?;
        steps += got.len();
    }
    Ok(format!("{steps} steps match byte-for-byte after canonical spacing"))
}

const FIG7: &str = "<subtask>select(garland)<answer>garland <bbox>(0.51, 0.0, 0.54, 0.09)<subtask>relate(curtain, to the right of, [garland <bbox>(0.51, 0.0, 0.54, 0.09)])<answer>curtain <bbox>(0.73, 0.0, 0.87, 0.58)<subtask>relate(furniture, same color, [curtain <bbox>(0.73, 0.0, 0.87, 0.58)])<answer>couch <bbox>(0.12, 0.48, 0.71, 0.97)<subtask>query([couch <bbox>(0.12, 0.48, 0.71, 0.97)], name)<answer>couch";

/// Replaces every number with `N`.
fn mask_numbers(s: &str) -> String {
    let mut out = String::new();
    let mut in_num = false;
    for c in s.chars() {
        if c.is_ascii_digit() || (in_num && c == '.') {
            if !in_num {
                out.push('N');
                in_num = true;
            }
        } else {
            in_num = false;
            out.push(c);
        }
    }
    out
}

fn garland_format() -> Check {
    let (graphs, _) = parse_scene_graphs(&read(&fixtures().join("worked_scenes.json"))).unwrap();
    let (qs, _) = parse_questions(&read(&fixtures().join("worked_questions.json"))).unwrap();
    let q = qs.iter().find(|q| q.question_id == "q_garland_furniture").unwrap();
    let sg = graphs.iter().find(|g| g.image_id() == q.image_id).unwrap();
    let cfg = ExecConfig::default();
    let t = execute(&parse_program(&q.raw_ops).unwrap(), sg, &cfg).map_err(|e| e.to_string())?;
    let doc = serialize(&t).into_string();
    ensure(mask_numbers(&doc) == mask_numbers(FIG7), || format!("structure differs: {doc}"))?;
    for s in parse(&doc).map_err(|e| e.to_string())?.steps() {
        check_operation(&s.rendered_op).map_err(|e| format!("{}: {e:?}", s.rendered_op))?;
    }
    // Every printed box must be the fixture object's own normalized box.
    let mut boxes = 0;
    for s in t.steps() {
        if let Value::Objects(list) = &s.value {
            for o in list {
                let id = o.object_id.as_deref().ok_or("object without id")?;
                let want = normalize_bbox(&sg.get(id).unwrap().bbox, sg.width(), sg.height(), cfg.precision);
                ensure(o.bbox == want, || format!("{id}: {} != {want}", o.bbox))?;
                boxes += 1;
            }
        }
    }
    ensure(t.final_answer() == "couch", || "final answer".into())?;
    let exact = if doc == FIG7 { ", identical to the printed document" } else { "" };
    Ok(format!("4 steps, grammar valid, {boxes} boxes checked against the scene{exact}"))
}

fn interpreter_traces(n: usize, seed: u64) -> Vec<SoTTrace> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = ExecConfig::default();
    let mut out = Vec::with_capacity(n);
    let mut i = 0;
    while out.len() < n {
        let k = rng.gen_range(1..12);
        let sg = random_scene(&mut rng, &format!("s{i}"), k);
        let raw = random_program(&mut rng, &sg);
        out.push(execute(&parse_program(&raw).unwrap(), &sg, &cfg).unwrap());
        i += 1;
    }
    out
}

fn codec_round_trip() -> Check {
    let traces = interpreter_traces(1500, 20240501);
    let mut seen: HashMap<String, SoTTrace> = HashMap::new();
    let mut failures = Vec::new();
    for (i, t) in traces.iter().enumerate() {
        let wire = t.without_ids();
        let doc = serialize(t).into_string();
        match parse(&doc) {
            Ok(back) if back == wire && serialize(&back).as_str() == doc => {}
            Ok(_) => failures.push(format!("#{i} differs after round trip")),
            Err(e) => failures.push(format!("#{i} {e}")),
        }
        if let Some(prev) = seen.insert(doc, wire.clone()) {
            if prev != wire {
                failures.push(format!("#{i} shares a document with a different trace"));
            }
        }
    }
    ensure(failures.is_empty(), || format!("{} failures, first: {}", failures.len(), failures[0]))?;
    Ok(format!("{} traces, {} distinct documents, 0 failures", traces.len(), seen.len()))
}

fn iou_pixel_oracle() -> Check {
    const G: i64 = 64;
    let mut rng = ChaCha8Rng::seed_from_u64(64);
    let pick = |rng: &mut ChaCha8Rng| {
        let (a, b) = (rng.gen_range(0..=G), rng.gen_range(0..=G));
        let (c, d) = (rng.gen_range(0..=G), rng.gen_range(0..=G));
        (a.min(b), c.min(d), a.max(b), c.max(d))
    };
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let a = pick(&mut rng);
        let b = pick(&mut rng);
        let (mut inter, mut union) = (0u32, 0u32);
        for y in 0..G {
            for x in 0..G {
                let ina = x >= a.0 && x < a.2 && y >= a.1 && y < a.3;
                let inb = x >= b.0 && x < b.2 && y >= b.1 && y < b.3;
                inter += u32::from(ina && inb);
                union += u32::from(ina || inb);
            }
        }
        let oracle = if union == 0 { 0.0 } else { f64::from(inter) / f64::from(union) };
        let n = |t: (i64, i64, i64, i64)| {
            let g = G as f64;
            NormBBox::new(t.0 as f64 / g, t.1 as f64 / g, t.2 as f64 / g, t.3 as f64 / g).unwrap()
        };
        worst = worst.max((iou(&n(a), &n(b)) - oracle).abs());
    }
    ensure(worst <= 1e-6, || format!("max deviation {worst:e}"))?;
    Ok(format!("500 box pairs on a 64x64 grid, max deviation {worst:e}"))
}

fn record(id: &str, correct: bool, pred: Option<NormBBox>, gold: Option<NormBBox>) -> EvalRecord {
    EvalRecord {
        question_id: id.into(),
        predicted_answer: if correct { "couch".into() } else { "chair".into() },
        gold_answer: "couch".into(),
        predicted_bbox: pred,
        gold_bbox: gold,
        predicted_trace: None,
        gold_trace: None,
    }
}

fn metrics_fixture() -> Check {
    let gold = NormBBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
    let wide = |w: f64| NormBBox::new(0.0, 0.0, w, 1.0).unwrap();
    let recs = [
        record("a", true, Some(wide(0.6)), Some(gold)),
        record("b", true, Some(wide(0.3)), Some(gold)),
        record("c", false, Some(wide(0.8)), Some(gold)),
    ];
    let ious: Vec<f64> = recs.iter().map(|r| r.box_iou().unwrap()).collect();
    ensure(
        ious.iter().zip([0.6, 0.3, 0.8]).all(|(a, b)| (a - b).abs() < 1e-12),
        || format!("fixture IoUs {ious:?}"),
    )?;
    let pr = precision_recall(&recs, 0.5, ThresholdRule::Strict);
    ensure(pr.precision == 1.0 / 3.0 && pr.recall == 1.0 / 3.0, || {
        format!("precision {} recall {}", pr.precision, pr.recall)
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(200);
    let rand_box = |rng: &mut ChaCha8Rng| {
        let (a, b, c, d) = (rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>());
        NormBBox::new(a.min(b), c.min(d), a.max(b), c.max(d)).unwrap()
    };
    let mut random = Vec::new();
    for i in 0..200 {
        let g = rand_box(&mut rng);
        // Predictions near the gold box so every IoU band is populated.
        let p = if rng.gen_bool(0.6) {
            let j = rng.gen::<f64>() * 0.1;
            NormBBox::new(g.x_l * (1.0 - j), g.y_l, (g.x_r + j).min(1.0), g.y_r).unwrap()
        } else {
            rand_box(&mut rng)
        };
        let pred = if rng.gen_bool(0.9) { Some(p) } else { None };
        let gold = if rng.gen_bool(0.9) { Some(g) } else { None };
        random.push(record(&format!("r{i}"), rng.gen_bool(0.7), pred, gold));
    }
    let report = evaluate(&random, &[0.5, 0.75, 0.95], ThresholdRule::Strict);
    let prs = &report.precision_recall;
    for w in prs.windows(2) {
        ensure(w[1].true_positives <= w[0].true_positives, || "TP increased with the threshold".into())?;
        ensure(w[1].recall <= w[0].recall, || "recall increased with the threshold".into())?;
    }
    for p in prs {
        let denom = p.true_positives + p.false_positives;
        ensure(denom == 0 || p.precision == p.true_positives as f64 / denom as f64, || "precision numerator".into())?;
        let rden = denom + p.missing_predictions;
        ensure(rden == 0 || p.recall == p.true_positives as f64 / rden as f64, || "recall numerator".into())?;
    }
    let tps: Vec<usize> = prs.iter().map(|p| p.true_positives).collect();
    ensure(tps[0] > tps[2], || format!("random records did not exercise thresholds: {tps:?}"))?;
    Ok(format!("P = R = 1/3 at 0.5; TP over 0.5/0.75/0.95 on 200 random records: {tps:?}"))
}

enum Corruption {
    AnswerFlip,
    OpTypo,
    BBoxArity,
    StepInflation,
}

fn flip_final(t: &SoTTrace) -> SoTTrace {
    let mut steps: Vec<Step> = t.steps().to_vec();
    let last = steps.last_mut().unwrap();
    last.value = match &last.value {
        Value::Boolean(b) => Value::Boolean(!b),
        Value::Attribute(s) => Value::Attribute(format!("{s}zz")),
        Value::Choice(s) => Value::Choice(format!("{s}zz")),
        Value::Objects(list) => Value::Objects(
            list.iter()
                .map(|o| ObjectEntry {
                    name: format!("{}zz", o.name),
                    ..o.clone()
                })
                .collect(),
        ),
        other => other.clone(),
    };
    SoTTrace::new(steps).unwrap()
}

fn corrupt(t: &SoTTrace, kind: &Corruption, max_steps: usize, rng: &mut ChaCha8Rng) -> String {
    match kind {
        Corruption::AnswerFlip => serialize(&flip_final(t)).into_string(),
        Corruption::OpTypo => {
            let mut steps = t.steps().to_vec();
            let i = rng.gen_range(0..steps.len());
            let op = &steps[i].rendered_op;
            let name_end = op.find('(').unwrap();
            steps[i].rendered_op = format!("{}q{}", &op[..name_end], &op[name_end..]);
            serialize(&SoTTrace::new(steps).unwrap()).into_string()
        }
        Corruption::BBoxArity => {
            let doc = serialize(t).into_string();
            let starts: Vec<usize> = doc.match_indices("<bbox>(").map(|(i, _)| i + 7).collect();
            let s = starts[rng.gen_range(0..starts.len())];
            let comma = s + doc[s..].find(", ").unwrap();
            format!("{}{}", &doc[..s], &doc[comma + 2..])
        }
        Corruption::StepInflation => {
            let mut steps = t.steps().to_vec();
            let last = steps.pop().unwrap();
            while steps.len() < max_steps {
                steps.push(steps[0].clone());
            }
            steps.push(last);
            serialize(&SoTTrace::new(steps).unwrap()).into_string()
        }
    }
}

fn corruption_suite() -> Check {
    let cfg = FilterConfig::default();
    let clean: Vec<SoTTrace> = interpreter_traces(400, 7)
        .into_iter()
        .filter(|t| {
            !matches!(t.final_value(), Value::None | Value::SceneRef(_))
                && serialize(t).as_str().contains("<bbox>(")
        })
        .take(100)
        .collect();
    ensure(clean.len() == 100, || format!("only {} clean traces", clean.len()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut accepted = 0;
    for t in &clean {
        let v = filter_document(serialize(t).as_str(), t.final_answer(), &cfg);
        accepted += usize::from(v.accepted);
    }
    ensure(accepted == 100, || format!("{accepted}/100 clean traces accepted"))?;
    let mut summary = Vec::new();
    for (kind, want, name) in [
        (Corruption::AnswerFlip, FilterReason::AnswerMismatch, "answer flip"),
        (Corruption::OpTypo, FilterReason::MalformedArgument, "op typo"),
        (Corruption::BBoxArity, FilterReason::MalformedArgument, "bbox arity"),
        (Corruption::StepInflation, FilterReason::OverLength, "step inflation"),
    ] {
        let mut right = 0;
        for t in &clean {
            let doc = corrupt(t, &kind, cfg.max_steps(), &mut rng);
            let v = filter_document(&doc, t.final_answer(), &cfg);
            if !v.accepted && v.reason == want {
                right += 1;
            } else {
                return Err(format!("{name}: got {} for {doc}", v.reason));
            }
        }
        summary.push(format!("{name} {right}/100"));
    }
    Ok(format!("clean 100/100 accepted; rejected with the right reason: {}", summary.join(", ")))
}

fn mini_config(out: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.paths.scene_graphs = Some(fixtures().join("mini_corpus/scenes.json"));
    cfg.paths.questions = Some(fixtures().join("mini_corpus/questions.json"));
    cfg.paths.out = Some(out.to_path_buf());
    cfg
}

fn mini_corpus() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let cfg = mini_config(dir.path());
    let r = cmd_gen(&cfg, GenMode::Offline, None).map_err(|e| e.to_string())?;
    let mut hits = 0;
    let mut misses = Vec::new();
    for e in read_corpus(&dir.path().join(GENERATED)).map_err(|e| e.to_string())? {
        let t = parse(&e.document).map_err(|err| format!("{}: {err}", e.meta.question_id))?;
        if normalize_answer(t.final_answer()) == normalize_answer(&e.meta.ground_truth) {
            hits += 1;
        } else {
            misses.push(serde_json::json!({
                "question_id": e.meta.question_id,
                "reason": "answer_mismatch",
                "expected": e.meta.ground_truth,
                "got": t.final_answer(),
            }));
        }
    }
    let failures: Vec<GenFailure> = read(&dir.path().join(GEN_FAILURES))
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    for f in &failures {
        misses.push(serde_json::json!({"question_id": f.question_id, "reason": f.code, "detail": f.detail}));
    }
    cmd_filter(&cfg).map_err(|e| e.to_string())?;
    let rejections: Vec<Rejection> = read(&dir.path().join(REJECTIONS))
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    for m in &misses {
        println!("  miss {m}");
    }
    ensure(r.questions == 50, || format!("{} questions loaded", r.questions))?;
    ensure(
        rejections.len() + failures.len() == misses.len(),
        || "filter report disagrees with the miss list".into(),
    )?;
    let rate = hits as f64 / 50.0;
    ensure(rate >= 0.95, || format!("{hits}/50 correct"))?;
    Ok(format!("{hits}/50 final answers match ({:.0}%), misses reported: {}", rate * 100.0, misses.len()))
}

fn snapshot(dir: &Path) -> Snapshot {
    let mut files: Snapshot = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn pipeline_determinism() -> Check {
    let run = |workers: usize| -> Result<(tempfile::TempDir, Snapshot), String> {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = mini_config(dir.path());
        cfg.seed = 42;
        cfg.sample_per_type = 3;
        cfg.workers = workers;
        cmd_ingest(&cfg).map_err(|e| e.to_string())?;
        cmd_gen(&cfg, GenMode::Offline, None).map_err(|e| e.to_string())?;
        cmd_filter(&cfg).map_err(|e| e.to_string())?;
        cmd_stats(&cfg).map_err(|e| e.to_string())?;
        cmd_eval(&cfg, None).map_err(|e| e.to_string())?;
        let snap = snapshot(dir.path());
        Ok((dir, snap))
    };
    let (_a, sa) = run(1)?;
    let (_b, sb) = run(8)?;
    ensure(sa.len() >= 10, || format!("only {} output files", sa.len()))?;
    for ((na, ba), (nb, bb)) in sa.iter().zip(&sb) {
        ensure(na == nb && ba == bb, || format!("{na} differs"))?;
    }
    ensure(sa.len() == sb.len(), || "file sets differ".into())?;
    let bytes: usize = sa.iter().map(|(_, b)| b.len()).sum();
    Ok(format!("{} files, {bytes} bytes identical across 1 and 8 workers", sa.len()))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("worked-example result blocks", golden_worked_examples),
        ("garland SoT format", garland_format),
        ("codec round trip", codec_round_trip),
        ("IoU pixel-grid oracle", iou_pixel_oracle),
        ("metrics fixture and monotonicity", metrics_fixture),
        ("filtration corruption suite", corruption_suite),
        ("50-question oracle corpus", mini_corpus),
        ("pipeline determinism", pipeline_determinism),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let start = std::time::Instant::now();
        let res = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let ms = start.elapsed().as_millis();
        match res {
            Ok(detail) => println!("PASS  {name}: {detail} [{ms} ms]"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why} [{ms} ms]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
