#![allow(dead_code)]

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use sot_core::llm_gen::{build_prompt, offline_response, PromptTemplate};
use sot_core::{parse_questions, parse_scene_graphs, ExecConfig};
use sotkit::client::{ClientError, CompletionService};
use sotkit::PipelineConfig;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn mini_config(out: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.paths.scene_graphs = Some(fixtures().join("mini_corpus/scenes.json"));
    cfg.paths.questions = Some(fixtures().join("mini_corpus/questions.json"));
    cfg.paths.out = Some(out.to_path_buf());
    cfg.workers = 4;
    cfg
}

/// Answers every known prompt with the interpreter's own result block.
pub struct EchoService {
    answers: HashMap<String, String>,
    pub calls: Mutex<usize>,
}

impl EchoService {
    pub fn new(scenes: &Path, questions: &Path) -> Self {
        let (graphs, _) = parse_scene_graphs(&std::fs::read_to_string(scenes).unwrap()).unwrap();
        let (qs, _) = parse_questions(&std::fs::read_to_string(questions).unwrap()).unwrap();
        let tmpl = PromptTemplate::shipped();
        let cfg = ExecConfig::default();
        let mut answers = HashMap::new();
        for q in &qs {
            let sg = graphs.iter().find(|g| g.image_id() == q.image_id).unwrap();
            if let Ok(resp) = offline_response(q, sg, &cfg) {
                answers.insert(build_prompt(q, sg, &tmpl).unwrap(), format!("Result:\n{resp}\n"));
            }
        }
        EchoService {
            answers,
            calls: Mutex::new(0),
        }
    }
}

impl CompletionService for EchoService {
    fn complete(&self, prompt: &str) -> Result<String, ClientError> {
        *self.calls.lock().unwrap() += 1;
        Ok(self
            .answers
            .get(prompt)
            .cloned()
            .unwrap_or_else(|| "I cannot answer".to_string()))
    }
}

/// What the mock server saw.
#[derive(Debug, Clone, Default)]
pub struct Seen {
    pub requests: Vec<(String, String)>,
}

/// Serves canned `(status, body)` replies in order, one per connection.
pub fn serve(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Seen>>, std::thread::JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Seen::default()));
    let seen2 = seen.clone();
    let handle = std::thread::spawn(move || {
        for (status, body) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut headers = String::new();
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap() == 0 || line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                headers.push_str(&line);
            }
            let mut req = vec![0u8; len];
            reader.read_exact(&mut req).unwrap();
            seen2
                .lock()
                .unwrap()
                .requests
                .push((headers, String::from_utf8(req).unwrap()));
            let mut w = stream;
            let _ = write!(
                w,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            let _ = w.flush();
        }
    });
    (url, seen, handle)
}

pub fn chat_reply(content: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
}

/// Every file in `dir`, by name.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}
