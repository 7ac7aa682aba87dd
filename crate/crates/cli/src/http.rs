//! HTTP backends for the scorer traits: small JSON-POST clients.
//!
//! Transport problems (refused connections, timeouts, 5xx) surface as
//! retryable errors so the core retry policy re-attempts them; anything the
//! backend answered wrongly (4xx, malformed body, missing field) is a
//! protocol error and fails fast.

use std::time::Duration;

use capsieve_core::client::ClientError;
use capsieve_core::scoring::AestheticClient;
use capsieve_core::vqa::VqaClient;
use serde::Deserialize;

fn default_client() -> reqwest::blocking::Client {
    reqwest::blocking::Client::builder()
        .connect_timeout(Duration::from_secs(5))
        .timeout(Duration::from_secs(30))
        .build()
        .expect("plain HTTP client builds without platform state")
}

/// Failures before an HTTP status exists are transport problems.
fn transport(err: reqwest::Error) -> ClientError {
    ClientError::Retryable(err.to_string())
}

fn check_status(status: reqwest::StatusCode) -> Result<(), ClientError> {
    if status.is_server_error() {
        return Err(ClientError::Retryable(format!("backend returned {status}")));
    }
    if !status.is_success() {
        return Err(ClientError::Protocol(format!("backend returned {status}")));
    }
    Ok(())
}

/// Aesthetic scorer: POST `{"id", "uri"}`, expect `{"aesthetic": <f64>}`.
pub struct HttpAesthetic {
    endpoint: String,
    client: reqwest::blocking::Client,
}

impl HttpAesthetic {
    pub fn new(endpoint: impl Into<String>) -> Self {
        HttpAesthetic { endpoint: endpoint.into(), client: default_client() }
    }
}

#[derive(Deserialize)]
struct AestheticWire {
    aesthetic: f64,
}

impl AestheticClient for HttpAesthetic {
    fn fetch(&self, id: &str, uri: &str) -> Result<f64, ClientError> {
        let response = self
            .client
            .post(&self.endpoint)
            .json(&serde_json::json!({ "id": id, "uri": uri }))
            .send()
            .map_err(transport)?;
        check_status(response.status())?;
        let wire: AestheticWire = response
            .json()
            .map_err(|e| ClientError::Protocol(format!("bad aesthetic response: {e}")))?;
        if !wire.aesthetic.is_finite() {
            return Err(ClientError::Protocol(format!(
                "aesthetic score {} is not finite",
                wire.aesthetic
            )));
        }
        Ok(wire.aesthetic)
    }
}

/// Alignment backend: POST `{"id", "uri", "question"}`, expect
/// `{"p_yes": <f64>}`. Range checking stays with the evaluation harness,
/// which treats out-of-range probabilities as fatal.
pub struct HttpVqa {
    endpoint: String,
    client: reqwest::blocking::Client,
}

impl HttpVqa {
    pub fn new(endpoint: impl Into<String>) -> Self {
        HttpVqa { endpoint: endpoint.into(), client: default_client() }
    }
}

#[derive(Deserialize)]
struct VqaWire {
    p_yes: f64,
}

impl VqaClient for HttpVqa {
    fn p_yes(&self, id: &str, uri: &str, question: &str) -> Result<f64, ClientError> {
        let response = self
            .client
            .post(&self.endpoint)
            .json(&serde_json::json!({ "id": id, "uri": uri, "question": question }))
            .send()
            .map_err(transport)?;
        check_status(response.status())?;
        let wire: VqaWire = response
            .json()
            .map_err(|e| ClientError::Protocol(format!("bad alignment response: {e}")))?;
        Ok(wire.p_yes)
    }
}
