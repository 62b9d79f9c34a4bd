//! Random scene graphs and well-formed programs over them, for fuzzing and
//! load tests.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::bbox::BBox;
use crate::program::RawOp;
use crate::scene_graph::{Relation, SGObject, SceneGraph};

const NAMES: &[&str] = &[
    "banana", "bowl", "plate", "table", "chair", "couch", "man", "woman", "dog", "cat", "car",
    "tree", "shirt", "lamp", "cup", "bottle", "window", "door", "rice", "pizza",
];
const COLORS: &[&str] = &["red", "blue", "green", "white", "black", "yellow", "brown"];
const MATERIALS: &[&str] = &["wood", "metal", "plastic", "glass", "leather"];
const SIZES: &[&str] = &["small", "large", "tall"];
const RELATIONS: &[&str] = &["to the left of", "to the right of", "on", "near", "behind", "holding"];

/// A random scene with `n` objects, one color and possibly a material and
/// size per object, and a few relations.
pub fn random_scene<R: Rng>(rng: &mut R, image_id: &str, n: usize) -> SceneGraph {
    let width = rng.gen_range(200..=800u32);
    let height = rng.gen_range(200..=800u32);
    let mut objects = Vec::with_capacity(n);
    for i in 0..n {
        let x0 = rng.gen_range(0..width - 10);
        let y0 = rng.gen_range(0..height - 10);
        let x1 = rng.gen_range(x0 + 1..=width);
        let y1 = rng.gen_range(y0 + 1..=height);
        let mut attributes = vec![COLORS.choose(rng).unwrap().to_string()];
        if rng.gen_bool(0.6) {
            attributes.push(MATERIALS.choose(rng).unwrap().to_string());
        }
        if rng.gen_bool(0.4) {
            attributes.push(SIZES.choose(rng).unwrap().to_string());
        }
        objects.push(SGObject {
            object_id: format!("{}", 1000 + i),
            name: NAMES.choose(rng).unwrap().to_string(),
            attributes,
            bbox: BBox::new(f64::from(x0), f64::from(y0), f64::from(x1), f64::from(y1))
                .expect("ordered corners"),
            relations: Vec::new(),
        });
    }
    if n > 1 {
        for _ in 0..n * 2 {
            let s = rng.gen_range(0..n);
            let t = rng.gen_range(0..n);
            if s != t {
                let target = objects[t].object_id.clone();
                objects[s].relations.push(Relation {
                    name: RELATIONS.choose(rng).unwrap().to_string(),
                    target,
                });
            }
        }
    }
    SceneGraph::new(image_id, width, height, objects)
        .expect("generated scene is valid")
        .0
}

fn op(name: &str, deps: &[usize], arg: impl Into<String>) -> RawOp {
    RawOp {
        name: name.to_string(),
        dependencies: deps.to_vec(),
        argument: arg.into(),
    }
}

fn pick_attr<'a, R: Rng>(rng: &mut R, o: &'a SGObject) -> (&'static str, &'a str) {
    let a = o.attributes.choose(rng).map(String::as_str).unwrap_or("red");
    let cat = if COLORS.contains(&a) {
        "color"
    } else if MATERIALS.contains(&a) {
        "material"
    } else {
        "size"
    };
    (cat, a)
}

/// Appends `select` (and sometimes a `relate` or `filter`) and returns the
/// index of the step that yields the focus objects.
fn focus<R: Rng>(rng: &mut R, sg: &SceneGraph, ops: &mut Vec<RawOp>) -> usize {
    let objs = sg.objects();
    let o = &objs[rng.gen_range(0..objs.len())];
    if rng.gen_bool(0.05) {
        ops.push(op("select", &[], "unicorn"));
        return ops.len() - 1;
    }
    ops.push(op("select", &[], format!("{} ({})", o.name, o.object_id)));
    let mut cur = ops.len() - 1;
    let incoming: Vec<&SGObject> = objs
        .iter()
        .filter(|s| s.relations.iter().any(|r| r.target == o.object_id))
        .collect();
    match rng.gen_range(0..4) {
        0 if !incoming.is_empty() => {
            let s = incoming.choose(rng).unwrap();
            let r = s
                .relations
                .iter()
                .find(|r| r.target == o.object_id)
                .unwrap();
            ops.push(op(
                "relate",
                &[cur],
                format!("{},{},s ({})", s.name, r.name, s.object_id),
            ));
            cur = ops.len() - 1;
        }
        1 if !o.relations.is_empty() => {
            let r = o.relations.choose(rng).unwrap();
            let t = sg.get(&r.target).unwrap();
            ops.push(op(
                "relate",
                &[cur],
                format!("{},{},o ({})", t.name, r.name, t.object_id),
            ));
            cur = ops.len() - 1;
        }
        2 => {
            let (cat, a) = pick_attr(rng, o);
            ops.push(op(&format!("filter {cat}"), &[cur], a));
            cur = ops.len() - 1;
        }
        _ => {}
    }
    cur
}

/// A well-formed program over `sg`: one or two focus chains ending in a
/// terminal operation drawn from the whole catalog.
pub fn random_program<R: Rng>(rng: &mut R, sg: &SceneGraph) -> Vec<RawOp> {
    assert!(!sg.is_empty(), "programs need a nonempty scene");
    let mut ops = Vec::new();
    let a = focus(rng, sg, &mut ops);
    let some = &sg.objects()[rng.gen_range(0..sg.len())];
    let (cat, val) = pick_attr(rng, some);
    let other = COLORS.choose(rng).unwrap();
    match rng.gen_range(0..14) {
        0 => ops.push(op("query", &[a], "name")),
        1 => ops.push(op(&format!("verify {cat}"), &[a], val)),
        2 => ops.push(op("exist", &[a], "?")),
        3 => ops.push(op("choose color", &[a], format!("{val}|{other}"))),
        4 => ops.push(op("query", &[a], ["color", "hposition", "vposition"][rng.gen_range(0..3)])),
        5 | 6 => {
            let b = focus(rng, sg, &mut ops);
            let name = ["same color", "different color", "common", "same material"]
                [rng.gen_range(0..4)];
            ops.push(op(name, &[a, b], ""));
        }
        7 => {
            let v1 = ops.len();
            ops.push(op(&format!("verify {cat}"), &[a], val));
            ops.push(op("verify color", &[a], *other));
            let name = if rng.gen_bool(0.5) { "and" } else { "or" };
            ops.push(op(name, &[v1, v1 + 1], ""));
        }
        8 => {
            let b = focus(rng, sg, &mut ops);
            let cmp = ["taller", "smaller", "higher", "larger"][rng.gen_range(0..4)];
            ops.push(op(&format!("choose {cmp}"), &[a, b], ""));
        }
        9 => {
            let r = RELATIONS.choose(rng).unwrap();
            ops.push(op(
                "verify rel",
                &[a],
                format!("{},{},{} ({})", some.name, r, ["s", "o"][rng.gen_range(0..2)], some.object_id),
            ));
        }
        10 => ops.push(op(
            "choose rel",
            &[a],
            format!("{},to the left of|to the right of,s ({})", some.name, some.object_id),
        )),
        11 => ops.push(op("filter hposition", &[a], ["left", "right"][rng.gen_range(0..2)])),
        12 => ops.push(op("same", &[a], "color")),
        _ => {
            let b = focus(rng, sg, &mut ops);
            ops.push(op("compare", &[a, b], "larger"));
        }
    }
    ops
}

/// Name usable as a question id for generated programs.
pub fn synthetic_id(image_id: &str, i: usize) -> String {
    format!("{image_id}-q{i}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interpreter::{execute, ExecConfig};
    use crate::program::parse_program;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_programs_parse_and_run() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cfg = ExecConfig::default();
        for i in 0..200 {
            let n = rng.gen_range(1..12);
            let sg = random_scene(&mut rng, &i.to_string(), n);
            let raw = random_program(&mut rng, &sg);
            let p = parse_program(&raw).unwrap_or_else(|e| panic!("{raw:?}: {e}"));
            execute(&p, &sg, &cfg).unwrap();
        }
    }
}
