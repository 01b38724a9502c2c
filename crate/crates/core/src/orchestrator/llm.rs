//! Chat-completions client for OpenAI-compatible endpoints.

use std::collections::BTreeMap;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use ureq::Agent;

use super::agents::{AgentRole, BackendError, BackendRequest, Message, PlannerBackend};
use super::config::DEFAULT_TEMPERATURE;

pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";
pub const DEFAULT_MODEL: &str = "gpt-4o-mini";
pub const DEFAULT_API_KEY_VAR: &str = "OPENAI_API_KEY";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);
pub const DEFAULT_ATTEMPTS: u32 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct LlmSettings {
    pub endpoint: String,
    pub model: String,
    /// Model per role, overriding `model`.
    pub role_models: BTreeMap<AgentRole, String>,
    pub temperature: f64,
    /// Name of the environment variable holding the API key.
    pub api_key_var: String,
    pub timeout: Duration,
    pub attempts: u32,
    /// First retry delay; doubles on each further retry.
    pub backoff: Duration,
}

impl Default for LlmSettings {
    fn default() -> Self {
        LlmSettings {
            endpoint: DEFAULT_ENDPOINT.to_string(),
            model: DEFAULT_MODEL.to_string(),
            role_models: BTreeMap::new(),
            temperature: DEFAULT_TEMPERATURE,
            api_key_var: DEFAULT_API_KEY_VAR.to_string(),
            timeout: DEFAULT_TIMEOUT,
            attempts: DEFAULT_ATTEMPTS,
            backoff: Duration::from_millis(500),
        }
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    temperature: f64,
    messages: &'a [Message],
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

pub struct LlmBackend {
    settings: LlmSettings,
    agent: Agent,
}

impl LlmBackend {
    pub fn new(settings: LlmSettings) -> Self {
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(settings.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        LlmBackend { settings, agent }
    }

    pub fn settings(&self) -> &LlmSettings {
        &self.settings
    }

    fn model_for(&self, role: AgentRole) -> &str {
        self.settings.role_models.get(&role).unwrap_or(&self.settings.model)
    }

    fn attempt(&self, body: &ChatRequest<'_>, key: Option<&str>) -> Result<String, BackendError> {
        let mut req = self.agent.post(&self.settings.endpoint).header("Content-Type", "application/json");
        if let Some(k) = key {
            req = req.header("Authorization", &format!("Bearer {k}"));
        }
        let mut resp = req.send_json(body).map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(BackendError::Status(status));
        }
        let parsed: ChatResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::Malformed(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::Malformed("no choices in response".into()))
    }
}

fn retryable(e: &BackendError) -> bool {
    match e {
        BackendError::Transport(_) => true,
        BackendError::Status(s) => *s == 429 || *s >= 500,
        _ => false,
    }
}

impl PlannerBackend for LlmBackend {
    fn name(&self) -> &str {
        "llm"
    }

    fn is_deterministic(&self) -> bool {
        false
    }

    fn respond(&self, request: &BackendRequest<'_>) -> Result<String, BackendError> {
        let key = std::env::var(&self.settings.api_key_var).ok().filter(|k| !k.is_empty());
        let body = ChatRequest {
            model: self.model_for(request.role),
            temperature: self.settings.temperature,
            messages: request.conversation,
        };
        let mut delay = self.settings.backoff;
        let mut last = BackendError::Config("no attempts configured".into());
        for i in 0..self.settings.attempts.max(1) {
            if i > 0 {
                thread::sleep(delay);
                delay *= 2;
            }
            match self.attempt(&body, key.as_deref()) {
                Ok(text) => return Ok(text),
                Err(e) if retryable(&e) => last = e,
                Err(e) => return Err(e),
            }
        }
        Err(last)
    }
}

#[cfg(test)]
pub(crate) mod mock {
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::{Arc, Mutex};
    use std::thread;

    /// A tiny HTTP server answering each request with the next scripted
    /// `(status, body)` pair (the last one repeats). Captured request bodies
    /// are returned through the shared vector.
    pub fn serve(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let seen = Arc::new(Mutex::new(Vec::new()));
        let log = seen.clone();
        thread::spawn(move || {
            for (i, stream) in listener.incoming().enumerate() {
                let Ok(mut stream) = stream else { break };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap_or(0);
                    }
                }
                let mut body = vec![0u8; len];
                let _ = reader.read_exact(&mut body);
                log.lock().unwrap().push(String::from_utf8_lossy(&body).into_owned());
                let (status, text) = replies[i.min(replies.len() - 1)].clone();
                let resp = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
                    text.len()
                );
                let _ = stream.write_all(resp.as_bytes());
            }
        });
        (url, seen)
    }

    pub fn completion(content: &str) -> String {
        serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrator::agents::PlanningContext;
    use crate::world::WorldState;

    fn settings(url: String) -> LlmSettings {
        LlmSettings {
            endpoint: url,
            api_key_var: "CORRPLAN_TEST_UNSET_KEY".into(),
            backoff: Duration::from_millis(1),
            timeout: Duration::from_secs(5),
            ..LlmSettings::default()
        }
    }

    fn ctx() -> PlanningContext {
        PlanningContext {
            request: "x".into(),
            state: WorldState::new(),
            feedback: vec![],
            round: 0,
            seed: 0,
        }
    }

    #[test]
    fn sends_model_and_reads_first_choice() {
        let (url, seen) = mock::serve(vec![(200, mock::completion("get cup table"))]);
        let mut s = settings(url);
        s.role_models.insert(AgentRole::Ropa, "planner-model".into());
        let b = LlmBackend::new(s);
        let conv = [Message::user("hi")];
        let c = ctx();
        let out = b
            .respond(&BackendRequest {
                role: AgentRole::Ropa,
                conversation: &conv,
                context: &c,
            })
            .unwrap();
        assert_eq!(out, "get cup table");
        let body: serde_json::Value = serde_json::from_str(&seen.lock().unwrap()[0]).unwrap();
        assert_eq!(body["model"], "planner-model");
        assert_eq!(body["temperature"], 0.8);
        assert_eq!(body["messages"][0]["content"], "hi");
    }

    #[test]
    fn retries_server_errors_then_gives_up() {
        let (url, seen) = mock::serve(vec![(500, "{}".into())]);
        let b = LlmBackend::new(settings(url));
        let c = ctx();
        let err = b
            .respond(&BackendRequest {
                role: AgentRole::Alex,
                conversation: &[],
                context: &c,
            })
            .unwrap_err();
        assert_eq!(err, BackendError::Status(500));
        assert_eq!(seen.lock().unwrap().len(), 3);
    }

    #[test]
    fn recovers_after_a_transient_failure() {
        let (url, _) = mock::serve(vec![(503, "{}".into()), (200, mock::completion("ok"))]);
        let b = LlmBackend::new(settings(url));
        let c = ctx();
        let out = b.respond(&BackendRequest {
            role: AgentRole::Alex,
            conversation: &[],
            context: &c,
        });
        assert_eq!(out.unwrap(), "ok");
    }
}
