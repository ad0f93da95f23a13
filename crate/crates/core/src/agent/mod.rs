//! Agent front end: compose a prompt from the catalogue, call the model,
//! extract and parse the objective, score outcomes and keep the ratings.

pub mod catalogue;
pub mod client;
pub mod evaluate;
pub mod prompt;

pub use catalogue::{apply_rating, Catalogue, CatalogueEntry, CatalogueError, Rating, Verdict};
pub use client::{ChatMessage, ChatRequest, ChatResponse, ClientError, LlmClient, MockClient, ScriptedClient};
pub use prompt::{compose_prompt, PromptBundle, DEFAULT_BUDGET, TEMPLATE_VERSION};

use crate::dsl::{self, render_diagnostics, ObjectiveSpec};
use crate::geom::Vec2;
use crate::terms::CompiledObjective;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub model_id: String,
    pub bundle_hash: String,
    pub template_version: String,
    pub repair_rounds: usize,
    /// SHA-256 of the canonical spec text.
    pub spec_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    pub spec: ObjectiveSpec,
    /// Canonical print of `spec`.
    pub spec_text: String,
    pub provenance: Provenance,
    pub bundle: PromptBundle,
    /// Every model reply, in order.
    pub transcript: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error(transparent)]
    Client(#[from] ClientError),
    /// Every attempt failed to yield a valid spec. The failure is recorded
    /// as a DONT entry.
    #[error("no valid objective after {attempts} attempts: {reason}")]
    Failed {
        attempts: usize,
        reason: String,
        transcript: Vec<String>,
        dont_entry: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthOptions {
    pub budget: usize,
    /// First try plus repair rounds.
    pub attempts: usize,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            budget: DEFAULT_BUDGET,
            attempts: 2,
        }
    }
}

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Extract and parse one reply; the error text is what the repair round
/// sends back to the model.
fn read_reply(reply: &str) -> Result<ObjectiveSpec, String> {
    let body = dsl::extract_fenced(reply).map_err(|e| e.to_string())?;
    dsl::parse(&body).map_err(|d| render_diagnostics(&body, &d))
}

pub fn synthesize(
    request: &str,
    catalogue: &Catalogue,
    client: &dyn LlmClient,
    opts: &SynthOptions,
) -> Result<Synthesis, SynthError> {
    let bundle = compose_prompt(&catalogue.entries(), request, opts.budget);
    let mut req = bundle.to_request(client.model_id());
    let mut transcript = Vec::new();
    let mut reason = String::from("no attempts allowed");
    let attempts = opts.attempts.max(1);
    for round in 0..attempts {
        let reply = client.complete(&req)?;
        transcript.push(reply.clone());
        match read_reply(&reply) {
            Ok(spec) => {
                let spec_text = dsl::print_canonical(&spec);
                let provenance = Provenance {
                    model_id: client.model_id().into(),
                    bundle_hash: bundle.hash(),
                    template_version: bundle.template_version.clone(),
                    repair_rounds: round,
                    spec_hash: sha256_hex(&spec_text),
                };
                return Ok(Synthesis {
                    spec,
                    spec_text,
                    provenance,
                    bundle,
                    transcript,
                });
            }
            Err(e) => {
                reason = e;
                req.messages.push(ChatMessage::assistant(reply));
                req.messages.push(ChatMessage::user(format!(
                    "That reply could not be used:\n{}\nReply again with one corrected objective-dsl block.",
                    reason.trim_end()
                )));
            }
        }
    }
    let mut entry = CatalogueEntry::new(request, transcript.last().cloned().unwrap_or_default(), Verdict::Dont, client.model_id());
    entry.unparseable = true;
    entry.user_feedback = format!("synthesis failed: {}", reason.trim_end());
    entry.template = Some(bundle.template_version.clone());
    let dont_entry = match catalogue.append(entry) {
        Ok(e) => Some(e.id),
        Err(err) => {
            log::warn!("could not record failed synthesis: {err}");
            None
        }
    };
    Err(SynthError::Failed {
        attempts,
        reason,
        transcript,
        dont_entry,
    })
}

/// Default objective scale f₀ of the geometric score.
pub const DEFAULT_SCORE_SCALE: f64 = crate::dsl::DEFAULT_TOLERANCE;

/// S = exp(−f(A)/f₀), with f₀ the objective's tolerance scale. Lies in
/// [0, 1], equals 1 only at f = 0 and is 0 for non-finite f.
pub fn score_geometric(a: &[Vec2], obj: &CompiledObjective) -> f64 {
    let f0 = if obj.tolerance > 0.0 { obj.tolerance } else { DEFAULT_SCORE_SCALE };
    match obj.evaluate(a) {
        Ok(f) if f.is_finite() => score_from_value(f.max(0.0), f0),
        _ => 0.0,
    }
}

pub fn score_from_value(f: f64, f0: f64) -> f64 {
    (-f / f0).exp()
}
