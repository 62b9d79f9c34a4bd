//! Pipeline configuration: one TOML file plus command-line overrides.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use sot_core::eval::{ThresholdRule, DEFAULT_THRESHOLDS};
use sot_core::interpreter::PositionRule;
use sot_core::sot::FilterConfig;
use sot_core::{ExecConfig, Lexicon};

use crate::client::GenClientConfig;
use crate::error::PipelineError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub scene_graphs: Option<PathBuf>,
    pub questions: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub template: Option<PathBuf>,
    /// Prediction corpus scored by `eval`; defaults to the accepted corpus.
    pub predictions: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterSection {
    pub max_steps: usize,
    pub max_chars: usize,
}

impl Default for FilterSection {
    fn default() -> Self {
        let d = FilterConfig::default();
        FilterSection {
            max_steps: d.max_steps(),
            max_chars: d.max_chars(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExecSection {
    pub precision: u32,
    pub strict: bool,
    pub position_margin: f64,
    pub scene_key_cap: usize,
}

impl Default for ExecSection {
    fn default() -> Self {
        let d = ExecConfig::default();
        ExecSection {
            precision: d.precision,
            strict: d.strict,
            position_margin: d.position_rule.margin,
            scene_key_cap: d.scene_key_cap,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenSection {
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub max_retries: u32,
    pub timeout_secs: f64,
    pub requests_per_minute: u32,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
}

impl Default for GenSection {
    fn default() -> Self {
        GenSection {
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model: "default".into(),
            temperature: 0.0,
            max_tokens: 2048,
            max_retries: 3,
            timeout_secs: 120.0,
            requests_per_minute: 60,
            api_key_env: "SOTKIT_API_KEY".into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub workers: usize,
    pub thresholds: Vec<f64>,
    /// Count IoU equal to the threshold as a hit.
    pub inclusive_threshold: bool,
    /// Questions kept per question type; 0 keeps everything.
    pub sample_per_type: usize,
    pub paths: Paths,
    pub filter: FilterSection,
    pub exec: ExecSection,
    pub gen: GenSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            workers: 1,
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
            inclusive_threshold: false,
            sample_per_type: 0,
            paths: Paths::default(),
            filter: FilterSection::default(),
            exec: ExecSection::default(),
            gen: GenSection::default(),
        }
    }
}

/// Values given on the command line; each one wins over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub scene_graphs: Option<PathBuf>,
    pub questions: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub template: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub thresholds: Option<Vec<f64>>,
    pub max_steps: Option<usize>,
    pub endpoint: Option<String>,
}

impl PipelineConfig {
    /// Parses TOML; relative paths are taken relative to `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, PipelineError> {
        let mut cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        let p = &mut cfg.paths;
        for slot in [
            &mut p.scene_graphs,
            &mut p.questions,
            &mut p.out,
            &mut p.lexicon,
            &mut p.template,
            &mut p.predictions,
        ] {
            if let Some(path) = slot.as_mut() {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn apply(&mut self, o: Overrides) {
        let p = &mut self.paths;
        p.scene_graphs = o.scene_graphs.or(p.scene_graphs.take());
        p.questions = o.questions.or(p.questions.take());
        p.out = o.out.or(p.out.take());
        p.lexicon = o.lexicon.or(p.lexicon.take());
        p.template = o.template.or(p.template.take());
        p.predictions = o.predictions.or(p.predictions.take());
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.workers {
            self.workers = v;
        }
        if let Some(v) = o.thresholds {
            self.thresholds = v;
        }
        if let Some(v) = o.max_steps {
            self.filter.max_steps = v;
        }
        if let Some(v) = o.endpoint {
            self.gen.endpoint = v;
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if self.thresholds.is_empty() {
            return bad("at least one threshold is required".into());
        }
        if let Some(t) = self.thresholds.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return bad(format!("threshold {t} is outside (0, 1)"));
        }
        if self.exec.precision > sot_core::bbox::MAX_PRECISION {
            return bad(format!(
                "precision {} exceeds {}",
                self.exec.precision,
                sot_core::bbox::MAX_PRECISION
            ));
        }
        if !(0.0..0.5).contains(&self.exec.position_margin) {
            return bad("position_margin must be in [0, 0.5)".into());
        }
        self.filter_config()?;
        self.client_config()?;
        Ok(())
    }

    pub fn filter_config(&self) -> Result<FilterConfig, PipelineError> {
        FilterConfig::new(self.filter.max_steps, self.filter.max_chars)
            .map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn threshold_rule(&self) -> ThresholdRule {
        if self.inclusive_threshold {
            ThresholdRule::Inclusive
        } else {
            ThresholdRule::Strict
        }
    }

    /// Executor settings; reads the lexicon file when one is configured.
    pub fn exec_config(&self) -> Result<ExecConfig, PipelineError> {
        let lexicon = match &self.paths.lexicon {
            Some(path) => {
                let text = crate::io::read_input(path)?;
                Lexicon::parse(&text)
                    .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?
            }
            None => Lexicon::seed(),
        };
        Ok(ExecConfig {
            lexicon,
            position_rule: PositionRule {
                margin: self.exec.position_margin,
            },
            precision: self.exec.precision,
            strict: self.exec.strict,
            scene_key_cap: self.exec.scene_key_cap,
        })
    }

    pub fn client_config(&self) -> Result<GenClientConfig, PipelineError> {
        let g = &self.gen;
        if !(g.timeout_secs > 0.0 && g.timeout_secs.is_finite()) {
            return Err(PipelineError::Config("timeout_secs must be positive".into()));
        }
        GenClientConfig::new(
            &g.endpoint,
            &g.model,
            g.temperature,
            g.max_retries,
            Duration::from_secs_f64(g.timeout_secs),
            g.requests_per_minute,
        )
        .map(|c| c.with_max_tokens(g.max_tokens).with_api_key_env(&g.api_key_env))
        .map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.paths.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file() {
        let mut cfg = PipelineConfig::from_toml(
            "seed = 3\nworkers = 2\n[paths]\nout = \"o\"\nquestions = \"/abs/q.json\"\n[filter]\nmax_steps = 9\n",
            Path::new("/base"),
        )
        .unwrap();
        assert_eq!(cfg.paths.out, Some(PathBuf::from("/base/o")));
        assert_eq!(cfg.paths.questions, Some(PathBuf::from("/abs/q.json")));
        cfg.apply(Overrides {
            seed: Some(5),
            max_steps: Some(4),
            ..Overrides::default()
        });
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.workers, 2);
        assert_eq!(cfg.filter.max_steps, 4);
        assert_eq!(cfg.filter.max_chars, 2000);
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        let base = Path::new(".");
        assert!(PipelineConfig::from_toml("bogus = 1", base).is_err());
        for text in [
            "workers = 0",
            "thresholds = [0.5, 1.0]",
            "thresholds = []",
            "[filter]\nmax_steps = 0",
            "[gen]\nrequests_per_minute = 0",
            "[gen]\ntemperature = -1.0",
            "[exec]\nprecision = 9",
        ] {
            let cfg = PipelineConfig::from_toml(text, base).unwrap();
            assert!(
                matches!(cfg.validate(), Err(PipelineError::Config(_))),
                "{text}"
            );
        }
    }
}
