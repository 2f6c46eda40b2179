//! Blocking client for the control service's HTTP API.

use std::time::Duration;

use rainsim_core::protocol::{FieldError, LiveParams, ParamsUpdate, StateReport};
use reqwest::blocking::Response;
use reqwest::StatusCode;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    /// The service rejected the request.
    #[error("{status}: {detail}")]
    Rejected { status: StatusCode, detail: FieldError },
    #[error("unexpected response {status}: {body}")]
    Unexpected { status: StatusCode, body: String },
    #[error(transparent)]
    Transport(#[from] reqwest::Error),
}

pub struct Client {
    base: String,
    http: reqwest::blocking::Client,
}

impl Client {
    /// `base` is the service root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Result<Self, ClientError> {
        let http = reqwest::blocking::Client::builder().timeout(Duration::from_secs(30)).build()?;
        Ok(Self { base: base.into().trim_end_matches('/').to_owned(), http })
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    fn check(resp: Response) -> Result<Response, ClientError> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let body = resp.text().unwrap_or_default();
        match serde_json::from_str::<FieldError>(&body) {
            Ok(detail) => Err(ClientError::Rejected { status, detail }),
            Err(_) => Err(ClientError::Unexpected { status, body }),
        }
    }

    pub fn state(&self) -> Result<StateReport, ClientError> {
        Ok(Self::check(self.http.get(self.url("/api/state")).send()?)?.json()?)
    }

    /// Send a partial update; returns the parameters the service will use
    /// from the next frame on.
    pub fn set_params(&self, update: &ParamsUpdate) -> Result<LiveParams, ClientError> {
        Ok(Self::check(self.http.post(self.url("/api/params")).json(update).send()?)?.json()?)
    }

    pub fn reset(&self) -> Result<(), ClientError> {
        Self::check(self.http.post(self.url("/api/reset")).send()?)?;
        Ok(())
    }

    /// The latest frame as PNG bytes.
    pub fn frame_png(&self) -> Result<Vec<u8>, ClientError> {
        Ok(Self::check(self.http.get(self.url("/api/frame")).send()?)?.bytes()?.to_vec())
    }
}
