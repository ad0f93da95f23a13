//! Request and response shapes published at `GET /schema`.

use flowscribe_core::dsl::schema::registry_json;
use serde_json::{json, Value};

fn endpoint(method: &str, path: &str, request: Value, response: Value, errors: &[u16]) -> Value {
    json!({
        "method": method,
        "path": path,
        "request": request,
        "response": response,
        "errors": errors,
    })
}

pub fn document() -> Value {
    let vec2 = json!({"x": "number", "y": "number"});
    let diagnostic = json!({
        "severity": "error | warning",
        "span": {"start": "integer (byte offset)", "end": "integer"},
        "message": "string",
    });
    let error = json!({
        "error": "not_found | conflict | invalid | synthesis_failed | upstream | internal",
        "message": "string",
        "diagnostics": [diagnostic],
        "transcript": ["string (synthesis_failed only)"],
    });
    let entry = json!({
        "id": "string",
        "prompt": "string",
        "spec_text": "string",
        "score": "number in [0, 1] | null",
        "user_feedback": "string (one comment per line)",
        "verdict": "DO | DONT",
        "created_at": "RFC 3339 timestamp",
        "model_id": "string",
        "unparseable": "boolean",
        "rating": "integer 1-5 | null",
        "template": "string | null",
    });
    let frame = json!({
        "cycle": "integer",
        "positions": [vec2],
        "plan": "null | {primitives: [{kind, center, angle, amplitude}]}",
        "objective": "number",
        "squareness": "number | null",
        "density_ratio": "number | null",
        "events": [{"type": "perturbation | reseed | stall | infeasible | target-reached"}],
        "evaluations": "integer",
        "seeded_from": "warm | informed | random | null",
        "converged": "boolean | null (set on the last frame)",
    });
    let outcome = json!({
        "reason": "complete | stopped | error",
        "converged": "boolean | null",
        "frames": "integer",
        "final_objective": "number | null",
        "score": "number | null",
        "error": "string | null",
    });
    json!({
        "version": crate::server::VERSION,
        "error": error,
        "endpoints": [
            endpoint("GET", "/health", Value::Null,
                json!({"status": "ok", "version": "string", "model_id": "string", "catalogue_entries": "integer"}), &[]),
            endpoint("GET", "/schema", Value::Null, json!("this document"), &[]),
            endpoint("POST", "/sessions", Value::Null, json!({"session_id": "string"}), &[]),
            endpoint("GET", "/sessions/{id}", Value::Null,
                json!({"session_id": "string", "runs": ["string"], "live_run": "string | null", "spec_text": "string | null"}), &[404]),
            endpoint("POST", "/sessions/{id}/synthesize",
                json!({"prompt": "string", "budget": "integer (optional, default 10)"}),
                json!({"spec_text": "string", "spec": "JSON export of the spec", "transcript": ["string"],
                       "provenance": {"model_id": "string", "bundle_hash": "string", "template_version": "string",
                                      "repair_rounds": "integer", "spec_hash": "string"}}),
                &[404, 422, 502]),
            endpoint("POST", "/sessions/{id}/runs",
                json!({
                    "headers": {"Idempotency-Key": "optional; a repeated key returns the original run"},
                    "spec_text": "string",
                    "mode": "potential | inverse (default inverse)",
                    "n": "integer (default 20)",
                    "n_paths": "integer (default 7)",
                    "primitive": "linear-lut | circular | saddle | shear (default linear-lut)",
                    "amplitude": "number | null (null leaves it free in [0, 1]; default 1)",
                    "seed": "integer",
                    "cycles": "integer (default 60)",
                    "target": "number | null",
                    "init_half": "number (default 30)",
                    "initial": [vec2],
                    "perturbations": [{"cycle": "integer", "perturbation": "see /runs/{rid}/perturb"}],
                    "sqp_iters": "integer | null",
                    "max_iters": "integer | null",
                    "prompt": "string | null",
                }),
                json!({"run_id": "string", "session_id": "string", "events": "string (stream URL)", "spec_text": "canonical spec"}),
                &[404, 409, 422]),
            endpoint("GET", "/runs/{rid}", Value::Null,
                json!({"run_id": "string", "frames": "integer", "finished": "boolean", "outcome": outcome}), &[404]),
            endpoint("GET", "/runs/{rid}/events",
                json!({"headers": {"Last-Event-ID": "optional; resume after this cycle"}}),
                json!({"content_type": "text/event-stream",
                       "events": {"frame": {"id": "cycle", "data": frame}, "end": {"data": outcome}}}),
                &[404, 422]),
            endpoint("POST", "/runs/{rid}/perturb",
                json!({"kind": "triangle | scatter | displace", "indices": ["integer"],
                       "displacements": [vec2], "magnitude": "number", "seed": "integer"}),
                json!({"run_id": "string", "applies_at_cycle": "integer"}), &[404, 409, 422]),
            endpoint("POST", "/runs/{rid}/stop", Value::Null, json!({"run_id": "string"}), &[404]),
            endpoint("POST", "/runs/{rid}/feedback",
                json!({"rating": "integer 1-5 | \"DO\" | \"DONT\"", "comment": "string"}), entry.clone(), &[404, 409, 422]),
            endpoint("GET", "/catalogue",
                json!({"query": {"verdict": "DO | DONT (optional)", "offset": "integer", "limit": "integer (max 500)"}}),
                json!({"entries": [entry], "offset": "integer", "limit": "integer", "total": "integer"}), &[422]),
        ],
        "dsl": registry_json(),
    })
}
