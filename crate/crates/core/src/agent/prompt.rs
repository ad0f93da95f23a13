//! Prompt bundles: system message, rated examples and the new request.

use super::catalogue::{CatalogueEntry, Verdict};
use super::client::{ChatMessage, ChatRequest};
use crate::dsl::schema::registry_text;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const TEMPLATE_VERSION: &str = "flowscribe-prompt/1";
pub const DEFAULT_BUDGET: usize = 10;
/// Most failed examples spliced into one bundle.
pub const MAX_DONTS: usize = 2;

const PREAMBLE: &str = "\
You are an agent that writes objective functions for arranging microparticles.
A flow controller moves the particles to minimise the objective you write.
Write the objective in the objective language below and reply with exactly
one fenced block tagged objective-dsl. Do not write any other code.

Grammar:
  spec  := \"(objective\" meta* term+ \")\"
  meta  := :name \"label\" | :n count | :norm-length number | :tolerance number
  term  := \"(term\" kind (:key value)* \")\"
  value := number | \"string\" | symbol | (list ...) | (form :key value ...)
Angles are in degrees, lengths in micrometres. `;` starts a comment.
Describe the arrangement by relations (shape, spacing, region) rather than
fixed coordinates unless the request names coordinates.
";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub prompt: String,
    pub spec_text: String,
    pub verdict: Verdict,
    pub feedback: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub template_version: String,
    pub system_message: String,
    /// DOs first, then DONTs.
    pub examples: Vec<Example>,
    pub request: String,
    pub budget: usize,
}

pub fn system_message() -> String {
    format!("{PREAMBLE}\n{}", registry_text())
}

fn example(e: &CatalogueEntry) -> Example {
    Example {
        prompt: e.prompt.clone(),
        spec_text: e.spec_text.clone(),
        verdict: e.verdict,
        feedback: e.user_feedback.clone(),
    }
}

/// Pick up to `budget` examples: DOs by score (absent scores last), ties
/// to the more recent entry, then up to two of the most recent DONTs in
/// whatever budget is left. `entries` must be in catalogue order.
pub fn compose_prompt(entries: &[CatalogueEntry], request: &str, budget: usize) -> PromptBundle {
    let mut dos: Vec<(usize, &CatalogueEntry)> = entries
        .iter()
        .enumerate()
        .filter(|(_, e)| e.verdict == Verdict::Do)
        .collect();
    dos.sort_by(|(ia, a), (ib, b)| {
        let sa = a.score.unwrap_or(f64::NEG_INFINITY);
        let sb = b.score.unwrap_or(f64::NEG_INFINITY);
        sb.total_cmp(&sa).then(ib.cmp(ia))
    });
    let mut examples: Vec<Example> = dos.iter().take(budget).map(|(_, e)| example(e)).collect();
    let room = budget.saturating_sub(examples.len()).min(MAX_DONTS);
    examples.extend(
        entries
            .iter()
            .rev()
            .filter(|e| e.verdict == Verdict::Dont)
            .take(room)
            .map(example),
    );
    PromptBundle {
        template_version: TEMPLATE_VERSION.into(),
        system_message: system_message(),
        examples,
        request: request.into(),
        budget,
    }
}

impl PromptBundle {
    /// SHA-256 of the bundle's JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("bundle serialises");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Chat messages: each DO as a request/answer pair, then the new
    /// request carrying the DONTs as negative guidance.
    pub fn messages(&self) -> Vec<ChatMessage> {
        let mut msgs = Vec::new();
        for e in self.examples.iter().filter(|e| e.verdict == Verdict::Do) {
            msgs.push(ChatMessage::user(&e.prompt));
            msgs.push(ChatMessage::assistant(format!(
                "```objective-dsl\n{}\n```",
                e.spec_text.trim_end()
            )));
        }
        let mut last = String::new();
        let donts: Vec<&Example> = self.examples.iter().filter(|e| e.verdict == Verdict::Dont).collect();
        if !donts.is_empty() {
            last.push_str("Failed attempts (DON'T repeat these):\n");
            for e in donts {
                last.push_str(&format!(
                    "Request: {}\nReply:\n```\n{}\n```\n",
                    e.prompt,
                    e.spec_text.trim_end()
                ));
                if !e.feedback.is_empty() {
                    last.push_str(&format!("User feedback: {}\n", e.feedback));
                }
                last.push('\n');
            }
            last.push_str("New request: ");
        }
        last.push_str(&self.request);
        msgs.push(ChatMessage::user(last));
        msgs
    }

    pub fn to_request(&self, model: &str) -> ChatRequest {
        ChatRequest {
            system: self.system_message.clone(),
            messages: self.messages(),
            model: model.into(),
            temperature: 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(i: usize, verdict: Verdict, score: Option<f64>) -> CatalogueEntry {
        let mut e = CatalogueEntry::new(format!("p{i}"), format!("(objective (term spacing.repel :d0 {i}))"), verdict, "m");
        e.score = score;
        e.user_feedback = format!("f{i}");
        e
    }

    #[test]
    fn top_dos_by_score() {
        let cat: Vec<_> = (0..12).map(|i| entry(i, Verdict::Do, Some((i % 5) as f64 / 5.0))).collect();
        let b = compose_prompt(&cat, "circle", 10);
        let got: Vec<&str> = b.examples.iter().map(|e| e.prompt.as_str()).collect();
        // Scores 0.8 (p9, p4), 0.6 (p8, p3), ..., ties most recent first.
        assert_eq!(got, ["p9", "p4", "p8", "p3", "p7", "p2", "p11", "p6", "p1", "p10"]);
        assert_eq!(b, compose_prompt(&cat, "circle", 10));
    }

    #[test]
    fn zero_shot() {
        let b = compose_prompt(&[], "circle", 10);
        assert!(b.examples.is_empty());
        let m = b.messages();
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].content, "circle");
    }

    #[test]
    fn dont_cap() {
        let mut cat: Vec<_> = (0..3).map(|i| entry(i, Verdict::Do, Some(0.5))).collect();
        cat.extend((3..8).map(|i| entry(i, Verdict::Dont, None)));
        let b = compose_prompt(&cat, "x", 10);
        let v: Vec<(&str, Verdict)> = b.examples.iter().map(|e| (e.prompt.as_str(), e.verdict)).collect();
        assert_eq!(
            v,
            [
                ("p2", Verdict::Do),
                ("p1", Verdict::Do),
                ("p0", Verdict::Do),
                ("p7", Verdict::Dont),
                ("p6", Verdict::Dont)
            ]
        );
        let last = b.messages().pop().unwrap().content;
        assert!(last.contains("User feedback: f7") && last.ends_with("New request: x"));
        assert!(compose_prompt(&cat, "x", 0).examples.is_empty());
        assert_eq!(compose_prompt(&cat, "x", 4).examples.len(), 4);
    }

    #[test]
    fn bundle_does_not_depend_on_model() {
        let cat: Vec<_> = (0..3).map(|i| entry(i, Verdict::Do, Some(0.5))).collect();
        let b = compose_prompt(&cat, "x", 10);
        let (r1, r2) = (b.to_request("model-a"), b.to_request("model-b"));
        assert_eq!(r1.messages, r2.messages);
        assert_eq!(r1.system, r2.system);
        assert_eq!(r1.temperature, 0.0);
    }
}
