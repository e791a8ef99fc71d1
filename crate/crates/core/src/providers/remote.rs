//! Blocking JSON-over-HTTP client for remote providers.

use serde::Serialize;
use serde_json::Value;

use super::ProviderError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Keywords,
    Rhetoric,
    Trending,
    Generate,
}

#[derive(Serialize)]
struct Request<'a> {
    task: Task,
    input: &'a str,
    round: u32,
}

#[derive(Debug, Clone)]
pub struct RemoteClient {
    url: String,
    #[cfg_attr(not(feature = "remote"), allow(dead_code))]
    timeout_ms: u64,
    retries: u32,
}

impl RemoteClient {
    pub fn new(url: &str, timeout_ms: u64, retries: u32) -> Self {
        Self {
            url: url.to_string(),
            timeout_ms,
            retries,
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// POSTs one request and returns the `output` member of the response.
    /// Failed attempts are retried `retries` times, sequentially.
    pub fn call(&self, task: Task, input: &str, round: u32) -> Result<Value, ProviderError> {
        let body = Request { task, input, round };
        let mut last = String::new();
        for attempt in 0..=self.retries {
            match self.post(&body) {
                Ok(v) => return Ok(v),
                Err(e) => {
                    log::debug!("remote {task:?} attempt {attempt} failed: {e}");
                    last = e;
                }
            }
        }
        Err(ProviderError::Remote(last))
    }

    #[cfg(feature = "remote")]
    fn post(&self, body: &Request<'_>) -> Result<Value, String> {
        use std::time::Duration;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(self.timeout_ms)))
            .build()
            .into();
        let mut resp = agent.post(&self.url).send_json(body).map_err(|e| e.to_string())?;
        let value: Value = resp.body_mut().read_json().map_err(|e| e.to_string())?;
        value
            .get("output")
            .cloned()
            .ok_or_else(|| "response has no `output` member".to_string())
    }

    #[cfg(not(feature = "remote"))]
    fn post(&self, _body: &Request<'_>) -> Result<Value, String> {
        Err("built without the `remote` feature".to_string())
    }
}
