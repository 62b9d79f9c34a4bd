//! Optional external answer judge. Its numbers are reported on their own
//! and never mixed into the exact-match metrics.

use serde::Serialize;

use crate::client::{ClientError, CompletionService};

pub const DEFAULT_JUDGE_TEMPLATE: &str = "Decide whether the predicted answer means the same as the reference answer for the question.\nQuestion: {{question}}\nReference answer: {{gold}}\nPredicted answer: {{predicted}}\nReply with yes or no only.\n";

pub fn render_judge_prompt(template: &str, question: &str, gold: &str, predicted: &str) -> String {
    template
        .replace("{{question}}", question)
        .replace("{{gold}}", gold)
        .replace("{{predicted}}", predicted)
}

/// A reply counts as agreement when its first word is "yes".
pub fn judge_answer(
    service: &dyn CompletionService,
    template: &str,
    question: &str,
    gold: &str,
    predicted: &str,
) -> Result<bool, ClientError> {
    let reply = service.complete(&render_judge_prompt(template, question, gold, predicted))?;
    let first = reply
        .split(|c: char| !c.is_alphanumeric())
        .find(|w| !w.is_empty())
        .unwrap_or("");
    Ok(first.eq_ignore_ascii_case("yes"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JudgeReport {
    pub judged: usize,
    pub agreed: usize,
    pub failures: usize,
    pub agreement: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(&'static str);

    impl CompletionService for Fixed {
        fn complete(&self, _: &str) -> Result<String, ClientError> {
            Ok(self.0.to_string())
        }
    }

    #[test]
    fn reads_first_word() {
        let t = DEFAULT_JUDGE_TEMPLATE;
        assert!(judge_answer(&Fixed("Yes."), t, "q", "couch", "sofa").unwrap());
        assert!(!judge_answer(&Fixed("no, yes"), t, "q", "couch", "sofa").unwrap());
        assert!(render_judge_prompt(t, "Q?", "g", "p").contains("Reference answer: g\nPredicted answer: p"));
    }
}
