//! Blocking JSON-over-HTTP helper shared by the external-service bindings.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, Clone)]
pub struct JsonClient {
    endpoint: String,
    agent: ureq::Agent,
    retries: u32,
}

impl JsonClient {
    pub fn new(endpoint: impl Into<String>, timeout: Duration, retries: u32) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        JsonClient {
            endpoint: endpoint.into(),
            agent,
            retries,
        }
    }

    /// POSTs `body` and decodes the JSON reply, retrying transport failures.
    pub fn post<Req: Serialize, Resp: DeserializeOwned>(&self, body: &Req) -> Result<Resp, String> {
        let mut last = String::new();
        for _ in 0..=self.retries {
            match self.post_once(body) {
                Ok(r) => return Ok(r),
                Err(e) => last = e,
            }
        }
        Err(last)
    }

    fn post_once<Req: Serialize, Resp: DeserializeOwned>(&self, body: &Req) -> Result<Resp, String> {
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .send_json(body)
            .map_err(|e| format!("{}: {e}", self.endpoint))?;
        resp.body_mut()
            .read_json::<Resp>()
            .map_err(|e| format!("{}: bad response: {e}", self.endpoint))
    }
}
