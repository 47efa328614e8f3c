//! Blocking REST client for the platform API.

use std::time::{Duration, Instant};

use insole_core::model::SensorFrame;
use serde::de::DeserializeOwned;
use serde_json::{json, Value};
use thiserror::Error;
use uuid::Uuid;

/// Report bodies can be large; the raw report of a long session runs to megabytes.
const BODY_LIMIT: u64 = 512 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("cannot reach {url}: {message}")]
    Connection { url: String, message: String },
    #[error("authentication failed: {0}")]
    AuthFailed(String),
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("unexpected response: {0}")]
    Decode(String),
}

#[derive(Debug, Clone)]
pub struct Reply {
    pub status: u16,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.body).into_owned()
    }

    pub fn json<T: DeserializeOwned>(&self) -> Result<T, ClientError> {
        serde_json::from_slice(&self.body).map_err(|e| ClientError::Decode(format!("{e}: {}", self.text())))
    }

    /// The `error.code` of an error envelope.
    pub fn error_code(&self) -> Option<String> {
        let v: Value = serde_json::from_slice(&self.body).ok()?;
        v["error"]["code"].as_str().map(str::to_string)
    }

    fn expect<T: DeserializeOwned>(self, ok: u16) -> Result<T, ClientError> {
        if self.status == ok {
            self.json()
        } else {
            Err(ClientError::Status { status: self.status, body: self.text() })
        }
    }
}

#[derive(Clone)]
pub struct ApiClient {
    agent: ureq::Agent,
    base: String,
    token: Option<String>,
}

impl ApiClient {
    /// `base` is the API root, e.g. `http://127.0.0.1:8080/api/v1`.
    pub fn new(base: &str) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_connect(Some(Duration::from_secs(5)))
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .into();
        ApiClient { agent, base: base.trim_end_matches('/').to_string(), token: None }
    }

    pub fn with_token(mut self, token: impl Into<String>) -> Self {
        self.token = Some(token.into());
        self
    }

    pub fn token(&self) -> Option<&str> {
        self.token.as_deref()
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    fn finish(
        &self,
        url: &str,
        r: Result<ureq::http::Response<ureq::Body>, ureq::Error>,
    ) -> Result<Reply, ClientError> {
        let mut resp = r.map_err(|e| ClientError::Connection { url: url.to_string(), message: e.to_string() })?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .with_config()
            .limit(BODY_LIMIT)
            .read_to_vec()
            .map_err(|e| ClientError::Connection { url: url.to_string(), message: e.to_string() })?;
        Ok(Reply { status, body })
    }

    pub fn get(&self, path: &str) -> Result<Reply, ClientError> {
        let url = self.url(path);
        let mut req = self.agent.get(&url);
        if let Some(t) = &self.token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        self.finish(&url, req.call())
    }

    pub fn post(&self, path: &str, body: &[u8]) -> Result<Reply, ClientError> {
        let url = self.url(path);
        let mut req = self.agent.post(&url).header("Content-Type", "application/json");
        if let Some(t) = &self.token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        self.finish(&url, req.send(body))
    }

    pub fn post_json(&self, path: &str, body: &Value) -> Result<Reply, ClientError> {
        self.post(path, &serde_json::to_vec(body).expect("json values serialize"))
    }

    /// Exchanges credentials for a token and keeps it for later calls.
    pub fn login(&mut self, username: &str, credential: &str) -> Result<(), ClientError> {
        let r = self.post_json("/auth/token", &json!({ "username": username, "credential": credential }))?;
        match r.status {
            200 => {
                let v: Value = r.json()?;
                let t = v["token"].as_str().ok_or_else(|| ClientError::Decode("no token in reply".into()))?;
                self.token = Some(t.to_string());
                Ok(())
            }
            401 | 429 => Err(ClientError::AuthFailed(r.text())),
            _ => Err(ClientError::Status { status: r.status, body: r.text() }),
        }
    }

    pub fn create_user(
        &self,
        username: &str,
        credential: &str,
        role: &str,
        patient: Option<Uuid>,
    ) -> Result<Value, ClientError> {
        self.post_json(
            "/users",
            &json!({ "username": username, "credential": credential, "role": role, "patient_id": patient }),
        )?
        .expect(201)
    }

    pub fn create_patient(&self, display_name: &str) -> Result<Uuid, ClientError> {
        let v: Value = self.post_json("/patients", &json!({ "display_name": display_name }))?.expect(201)?;
        id_field(&v, "patient_id")
    }

    pub fn create_pairing(&self, patient: Uuid, insole_model_id: &str) -> Result<Uuid, ClientError> {
        let v: Value = self
            .post_json("/pairings", &json!({ "patient_id": patient, "insole_model_id": insole_model_id }))?
            .expect(201)?;
        id_field(&v, "pairing_id")
    }

    /// The patient's active pairing, if any.
    pub fn active_pairing(&self, patient: Uuid) -> Result<Option<Uuid>, ClientError> {
        let v: Vec<Value> = self.get(&format!("/pairings?patient={patient}"))?.expect(200)?;
        v.iter().find(|p| p["active"] == json!(true)).map(|p| id_field(p, "pairing_id")).transpose()
    }

    /// `speed` applies to 10 m walks only.
    pub fn create_session(
        &self,
        patient: Uuid,
        pairing: Uuid,
        session_type: &str,
        speed: Option<&str>,
    ) -> Result<Uuid, ClientError> {
        let mut body = json!({ "patient_id": patient, "pairing_id": pairing, "type": session_type });
        if let Some(s) = speed {
            body["speed"] = json!(s);
        }
        let v: Value = self.post_json("/sessions", &body)?.expect(201)?;
        id_field(&v, "session_id")
    }

    pub fn session(&self, session: Uuid) -> Result<Value, ClientError> {
        self.get(&format!("/sessions/{session}"))?.expect(200)
    }

    pub fn post_frames(&self, session: Uuid, frames: &[SensorFrame]) -> Result<Reply, ClientError> {
        self.post(&format!("/sessions/{session}/frames"), &serde_json::to_vec(frames).expect("frames serialize"))
    }

    /// Returns the analysis job id.
    pub fn finalize(&self, session: Uuid) -> Result<Uuid, ClientError> {
        let v: Value = self.post(&format!("/sessions/{session}/finalize"), b"")?.expect(202)?;
        id_field(&v, "job_id")
    }

    pub fn job(&self, job: Uuid) -> Result<Value, ClientError> {
        self.get(&format!("/jobs/{job}"))?.expect(200)
    }

    /// Polls until the job is done or failed.
    pub fn wait_for_job(&self, job: Uuid, timeout: Duration) -> Result<Value, ClientError> {
        let start = Instant::now();
        loop {
            let v = self.job(job)?;
            if matches!(v["state"].as_str(), Some("done" | "failed")) {
                return Ok(v);
            }
            if start.elapsed() > timeout {
                return Err(ClientError::Decode(format!("job {job} still {} after {timeout:?}", v["state"])));
            }
            std::thread::sleep(Duration::from_millis(20));
        }
    }

    /// `route` is raw, walking, balance or ai; `query` is appended verbatim.
    pub fn report(&self, session: Uuid, route: &str, query: &str) -> Result<Reply, ClientError> {
        let q = if query.is_empty() { String::new() } else { format!("?{query}") };
        self.get(&format!("/sessions/{session}/reports/{route}{q}"))
    }
}

fn id_field(v: &Value, name: &str) -> Result<Uuid, ClientError> {
    v[name]
        .as_str()
        .and_then(|s| Uuid::parse_str(s).ok())
        .ok_or_else(|| ClientError::Decode(format!("missing {name} in {v}")))
}
