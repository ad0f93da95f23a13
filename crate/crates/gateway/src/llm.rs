//! HTTP implementation of the language-model client contract.
//!
//! POSTs the wire request `{system, messages, model, temperature}` as JSON
//! and expects `{text}` back. Transport failures, timeouts and 5xx
//! replies are retried with a short linear backoff; 4xx replies are not.

use crate::config::LlmSettings;
use flowscribe_core::agent::{ChatRequest, ChatResponse, ClientError, LlmClient, MockClient};
use std::sync::Arc;
use std::time::Duration;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub retries: usize,
    pub backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            retries: 2,
            backoff: Duration::from_millis(500),
        }
    }
}

pub struct HttpClient {
    agent: ureq::Agent,
    endpoint: String,
    api_key: Option<String>,
    model: String,
    retry: RetryPolicy,
}

impl HttpClient {
    pub fn new(endpoint: &str, api_key: Option<String>, model: &str, timeout: Duration, retry: RetryPolicy) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpClient {
            agent,
            endpoint: endpoint.to_string(),
            api_key,
            model: model.to_string(),
            retry,
        }
    }

    /// One attempt. `Err((error, retryable))`.
    fn attempt(&self, req: &ChatRequest) -> Result<String, (ClientError, bool)> {
        let mut call = self.agent.post(&self.endpoint);
        if let Some(k) = &self.api_key {
            call = call.header("Authorization", format!("Bearer {k}"));
        }
        let mut resp = call.send_json(req).map_err(|e| match e {
            ureq::Error::Timeout(_) => (ClientError::Timeout, true),
            e => (ClientError::Transport(e.to_string()), true),
        })?;
        let status = resp.status().as_u16();
        if status >= 400 {
            let body = resp.body_mut().read_to_string().unwrap_or_default();
            let msg = format!("HTTP {status}: {}", body.chars().take(200).collect::<String>());
            return Err((ClientError::Transport(msg), status >= 500));
        }
        resp.body_mut()
            .read_json::<ChatResponse>()
            .map(|r| r.text)
            .map_err(|e| (ClientError::Transport(format!("bad response body: {e}")), false))
    }
}

impl LlmClient for HttpClient {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn complete(&self, req: &ChatRequest) -> Result<String, ClientError> {
        let mut tries = 0;
        loop {
            match self.attempt(req) {
                Ok(t) => return Ok(t),
                Err((e, retry)) => {
                    if !retry || tries >= self.retry.retries {
                        return Err(e);
                    }
                    tries += 1;
                    log::warn!("llm call failed ({e}); retry {tries}/{}", self.retry.retries);
                    std::thread::sleep(self.retry.backoff * tries as u32);
                }
            }
        }
    }
}

/// Client for the configured endpoint, or the offline mock.
pub fn make_client(s: &LlmSettings) -> Arc<dyn LlmClient> {
    match s.endpoint.as_deref() {
        None | Some("mock") | Some("") => Arc::new(MockClient::new(&s.model)),
        Some(url) => Arc::new(HttpClient::new(
            url,
            s.api_key.clone(),
            &s.model,
            Duration::from_secs(s.timeout_secs),
            RetryPolicy::default(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use flowscribe_core::agent::ChatMessage;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    /// Serve `replies` (status, body) to successive connections, returning
    /// the raw requests received.
    fn fake_server(replies: Vec<(u16, String)>) -> (String, std::thread::JoinHandle<Vec<String>>) {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/complete", l.local_addr().unwrap());
        let h = std::thread::spawn(move || {
            let mut seen = Vec::new();
            for (status, body) in replies {
                let (mut s, _) = l.accept().unwrap();
                let mut r = BufReader::new(s.try_clone().unwrap());
                let mut head = String::new();
                let mut len = 0;
                loop {
                    let mut line = String::new();
                    r.read_line(&mut line).unwrap();
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    head.push_str(&line);
                    if line == "\r\n" {
                        break;
                    }
                }
                let mut buf = vec![0; len];
                r.read_exact(&mut buf).unwrap();
                seen.push(head + &String::from_utf8(buf).unwrap());
                write!(
                    s,
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
            seen
        });
        (url, h)
    }

    fn request() -> ChatRequest {
        ChatRequest {
            system: "sys".into(),
            messages: vec![ChatMessage::user("a circle")],
            model: "m1".into(),
            temperature: 0.0,
        }
    }

    fn fast() -> RetryPolicy {
        RetryPolicy {
            retries: 2,
            backoff: Duration::from_millis(1),
        }
    }

    #[test]
    fn wire_format_and_auth() {
        let (url, h) = fake_server(vec![(200, r#"{"text":"hello"}"#.into())]);
        let c = HttpClient::new(&url, Some("k3y".into()), "m1", Duration::from_secs(5), fast());
        assert_eq!(c.complete(&request()).unwrap(), "hello");
        let seen = h.join().unwrap();
        let lower = seen[0].to_ascii_lowercase();
        assert!(lower.starts_with("post /v1/complete"));
        assert!(lower.contains("authorization: bearer k3y"));
        let body: serde_json::Value = serde_json::from_str(seen[0].split("\r\n\r\n").nth(1).unwrap()).unwrap();
        assert_eq!(body["model"], "m1");
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["system"], "sys");
        assert_eq!(body["messages"][0]["role"], "user");
    }

    #[test]
    fn retries_server_errors_but_not_client_errors() {
        let (url, h) = fake_server(vec![(503, "{}".into()), (200, r#"{"text":"ok"}"#.into())]);
        let c = HttpClient::new(&url, None, "m", Duration::from_secs(5), fast());
        assert_eq!(c.complete(&request()).unwrap(), "ok");
        assert_eq!(h.join().unwrap().len(), 2);

        let (url, h) = fake_server(vec![(401, "{\"error\":\"no\"}".into())]);
        let c = HttpClient::new(&url, None, "m", Duration::from_secs(5), fast());
        let e = c.complete(&request()).unwrap_err();
        assert!(matches!(e, ClientError::Transport(ref m) if m.contains("401")), "{e}");
        assert_eq!(h.join().unwrap().len(), 1);
    }

    #[test]
    fn unreachable_endpoint_is_a_transport_error() {
        let port = {
            let l = TcpListener::bind("127.0.0.1:0").unwrap();
            l.local_addr().unwrap().port()
        };
        let c = HttpClient::new(&format!("http://127.0.0.1:{port}/"), None, "m", Duration::from_secs(2), fast());
        assert!(matches!(c.complete(&request()), Err(ClientError::Transport(_))));
    }

    #[test]
    fn mock_selected_without_endpoint() {
        let s = LlmSettings {
            endpoint: None,
            api_key: None,
            model: "mock-keyword/1".into(),
            timeout_secs: 1,
        };
        assert_eq!(make_client(&s).model_id(), "mock-keyword/1");
    }
}
