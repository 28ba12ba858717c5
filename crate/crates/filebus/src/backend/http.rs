//! HTTP client backend speaking a chat-completions-style protocol.
//!
//! Configuration comes from the environment: `FILEBUS_MODEL_URL` (required
//! when this backend is selected), `FILEBUS_MODEL_KEY` (optional bearer
//! token), `FILEBUS_MODEL_NAME` (optional model identifier). The tool list
//! is serialized into the system message; the assistant's reply text is
//! returned verbatim as the raw action bytes.
//!
//! Transport faults are retried 3 times with exponential backoff starting
//! at one second, then reported as [`BackendError::Transport`].

use super::{BackendError, ModelBackend, ModelRequest, ModelResponse};
use serde_json::json;
use std::time::Duration;

pub const URL_VAR: &str = "FILEBUS_MODEL_URL";
pub const KEY_VAR: &str = "FILEBUS_MODEL_KEY";
pub const NAME_VAR: &str = "FILEBUS_MODEL_NAME";

const ATTEMPTS: u32 = 3;
const FIRST_BACKOFF: Duration = Duration::from_secs(1);

pub struct HttpBackend {
    url: String,
    key: Option<String>,
    model: String,
    agent: ureq::Agent,
}

impl HttpBackend {
    /// Build from explicit settings.
    pub fn new(url: String, key: Option<String>, model: String) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(120))
            .build();
        HttpBackend {
            url,
            key,
            model,
            agent,
        }
    }

    /// Build from `FILEBUS_MODEL_*` environment variables. A missing URL is
    /// a startup error, not a per-call one.
    pub fn from_env() -> Result<Self, BackendError> {
        let url = std::env::var(URL_VAR)
            .map_err(|_| BackendError::Config(format!("{URL_VAR} is not set")))?;
        let key = std::env::var(KEY_VAR).ok();
        let model = std::env::var(NAME_VAR).unwrap_or_else(|_| "default".into());
        Ok(Self::new(url, key, model))
    }

    fn build_body(&self, request: &ModelRequest) -> serde_json::Value {
        let mut system = request.system_directive.clone();
        if !request.available_tools.is_empty() {
            system.push_str("\n\nAvailable tools:\n");
            for line in &request.available_tools {
                system.push_str("- ");
                system.push_str(line);
                system.push('\n');
            }
        }
        system.push_str(
            "\nRespond with exactly one JSON object per turn: either \
             {\"tool\": ..., \"args\": {...}} or {\"finish\": {\"status\": ..., \
             \"summary\": ...}}.",
        );
        let user = format!(
            "Directive:\n{}\n\nWorkspace map:\n{}\n\nTranscript so far:\n{}",
            request.directive,
            request.rendered_map,
            request.local_events.transcript_text(),
        );
        json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        })
    }

    fn post_once(&self, body: &serde_json::Value) -> Result<String, String> {
        let mut req = self
            .agent
            .post(&self.url)
            .set("content-type", "application/json");
        if let Some(key) = &self.key {
            req = req.set("authorization", &format!("Bearer {key}"));
        }
        let reply = req
            .send_json(body.clone())
            .map_err(|e| e.to_string())?
            .into_json::<serde_json::Value>()
            .map_err(|e| format!("invalid JSON reply: {e}"))?;
        reply
            .pointer("/choices/0/message/content")
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .ok_or_else(|| "reply lacks choices[0].message.content".to_string())
    }
}

impl ModelBackend for HttpBackend {
    fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, BackendError> {
        let body = self.build_body(request);
        let mut backoff = FIRST_BACKOFF;
        let mut last_err = String::new();
        for attempt in 1..=ATTEMPTS {
            match self.post_once(&body) {
                Ok(content) => {
                    return Ok(ModelResponse {
                        raw: content.into_bytes(),
                    })
                }
                Err(e) => last_err = e,
            }
            if attempt < ATTEMPTS {
                std::thread::sleep(backoff);
                backoff *= 2;
            }
        }
        Err(BackendError::Transport {
            attempts: ATTEMPTS,
            detail: last_err,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::LocalContext;

    #[test]
    fn body_carries_tools_and_transcript_sections() {
        let backend = HttpBackend::new("http://localhost:1/v1".into(), None, "m".into());
        let request = ModelRequest {
            role_id: "implementation".into(),
            system_directive: "build things".into(),
            directive: "make reproduce.sh".into(),
            rendered_map: "# workspace map".into(),
            local_events: LocalContext::default(),
            available_tools: vec!["shell: run a command".into()],
        };
        let body = backend.build_body(&request);
        let system = body["messages"][0]["content"].as_str().unwrap();
        assert!(system.contains("build things"));
        assert!(system.contains("shell: run a command"));
        let user = body["messages"][1]["content"].as_str().unwrap();
        assert!(user.contains("make reproduce.sh"));
        assert!(user.contains("# workspace map"));
        assert_eq!(body["model"], "m");
    }

    #[test]
    fn from_env_requires_url() {
        // Serialize access to the process environment with a local lock.
        static ENV_LOCK: std::sync::Mutex<()> = std::sync::Mutex::new(());
        let _guard = ENV_LOCK.lock().unwrap();
        std::env::remove_var(URL_VAR);
        assert!(matches!(
            HttpBackend::from_env(),
            Err(BackendError::Config(_))
        ));
        std::env::set_var(URL_VAR, "http://localhost:9/v1");
        assert!(HttpBackend::from_env().is_ok());
        std::env::remove_var(URL_VAR);
    }
}
