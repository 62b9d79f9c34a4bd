//! Attribute lexicon: maps attribute values to categories, object names to
//! classes (`couch` is a `furniture`), and ranks values for comparatives that
//! geometry cannot answer (`older`, `healthier`).
//!
//! File format, one tab-separated entry per line, `#` starts a comment:
//!
//! ```text
//! red     color
//! couch   class:furniture
//! adult   rank:older:3
//! ```

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use crate::scene_graph::name_key;

/// Category names a lexicon entry may map to.
pub const CATEGORY_VOCABULARY: &[&str] = &[
    "color", "material", "shape", "size", "realism", "brightness", "texture", "depth", "weight",
    "orientation", "event", "liquid", "company", "race", "hardness", "room", "pattern", "length",
    "pose", "activity", "height", "age", "sportActivity", "face expression", "cleanliness",
    "sport", "weather", "state", "thickness", "opaqness", "flavor", "fatness", "width", "tone",
    "gender", "location", "place", "type", "name",
];

/// Categories tried first by `common`, before the rest in lexicographic order.
pub const COMMON_PRIORITY: &[&str] = &["color", "material", "shape"];

const SEED: &str = include_str!("../../assets/lexicon.tsv");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LexiconError {
    #[error("line {line}: expected two tab-separated columns")]
    Columns { line: usize },
    #[error("line {line}: unknown category {category:?}")]
    UnknownCategory { line: usize, category: String },
    #[error("line {line}: bad rank entry {entry:?}")]
    BadRank { line: usize, entry: String },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lexicon {
    categories: BTreeMap<String, String>,
    classes: BTreeMap<String, Vec<String>>,
    ranks: BTreeMap<String, BTreeMap<String, i64>>,
}

impl Lexicon {
    pub fn empty() -> Self {
        Lexicon::default()
    }

    /// The vocabulary shipped with the crate.
    pub fn seed() -> Self {
        Lexicon::parse(SEED).expect("shipped lexicon parses")
    }

    pub fn parse(text: &str) -> Result<Self, LexiconError> {
        let mut lex = Lexicon::default();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (value, category) = line
                .split_once('\t')
                .map(|(a, b)| (a.trim(), b.trim()))
                .filter(|(a, b)| !a.is_empty() && !b.is_empty())
                .ok_or(LexiconError::Columns { line: line_no })?;
            if let Some(class) = category.strip_prefix("class:") {
                lex.add_class(value, class.trim());
            } else if let Some(rest) = category.strip_prefix("rank:") {
                let (comparative, rank) = rest.rsplit_once(':').ok_or(LexiconError::BadRank {
                    line: line_no,
                    entry: category.to_string(),
                })?;
                let rank: i64 = rank.trim().parse().map_err(|_| LexiconError::BadRank {
                    line: line_no,
                    entry: category.to_string(),
                })?;
                lex.ranks
                    .entry(comparative.trim().to_string())
                    .or_default()
                    .insert(value.to_lowercase(), rank);
            } else {
                if !CATEGORY_VOCABULARY.contains(&category) {
                    return Err(LexiconError::UnknownCategory {
                        line: line_no,
                        category: category.to_string(),
                    });
                }
                lex.insert(value, category);
            }
        }
        Ok(lex)
    }

    pub fn insert(&mut self, value: &str, category: &str) {
        self.categories
            .insert(value.trim().to_lowercase(), category.to_string());
    }

    pub fn add_class(&mut self, name: &str, class: &str) {
        let members = self.classes.entry(name_key(class)).or_default();
        let key = name_key(name);
        if !members.contains(&key) {
            members.push(key);
        }
    }

    pub fn category_of(&self, value: &str) -> Option<&str> {
        self.categories
            .get(&value.trim().to_lowercase())
            .map(String::as_str)
    }

    /// True when an object called `object_name` belongs to the class `class`.
    pub fn is_member(&self, class: &str, object_name: &str) -> bool {
        self.classes
            .get(&name_key(class))
            .is_some_and(|m| m.contains(&name_key(object_name)))
    }

    /// Rank of `value` for a comparative; larger means "more". Plural object
    /// names fall back to their singular entry.
    pub fn rank(&self, comparative: &str, value: &str) -> Option<i64> {
        let ranks = self.ranks.get(comparative)?;
        ranks
            .get(&value.trim().to_lowercase())
            .or_else(|| ranks.get(&name_key(value)))
            .copied()
    }

    pub fn has_ranks(&self, comparative: &str) -> bool {
        self.ranks.contains_key(comparative)
    }

    /// Every category appearing in the lexicon, in `common`'s tie-break order.
    pub fn common_order(&self) -> Vec<String> {
        let mut rest: Vec<String> = self
            .categories
            .values()
            .filter(|c| !COMMON_PRIORITY.contains(&c.as_str()) && c.as_str() != "name")
            .cloned()
            .collect();
        rest.sort();
        rest.dedup();
        let mut out: Vec<String> = COMMON_PRIORITY.iter().map(|c| c.to_string()).collect();
        out.extend(rest);
        out
    }

    pub fn describe(&self) -> String {
        format!(
            "{} values, {} classes, {} ranked comparatives",
            self.categories.len(),
            self.classes.len(),
            self.ranks.len()
        )
    }
}
