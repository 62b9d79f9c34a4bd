//! Scene-graph program execution and Subtask-of-Thought traces.
//!
//! The crate is `no_std` with `alloc`: it parses GQA scene graphs and question
//! programs, executes programs into grounded reasoning traces, serializes and
//! filters those traces, builds generation prompts, and scores predictions.
//! File and network IO live in the `sotkit` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod bbox;
pub mod eval;
pub mod interpreter;
pub mod llm_gen;
pub mod program;
pub mod scene_graph;
pub mod sot;
pub mod synth;

pub use bbox::{normalize_bbox, BBox, BBoxError, NormBBox};
pub use interpreter::{
    execute, execute_detailed, ExecConfig, ExecutionError, Lexicon, ObjectEntry, SoTTrace, Step,
    Value,
};
pub use program::{parse_program, Program, ProgramError, RawOp};
pub use scene_graph::{
    parse_questions, parse_scene_graphs, IngestWarning, QuestionRecord, SceneGraph, SceneGraphError,
};
