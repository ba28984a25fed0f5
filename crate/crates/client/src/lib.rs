//! Typed async client for the `/v1` dialogue service.

use reqwest::{RequestBuilder, StatusCode};
use serde::de::DeserializeOwned;

pub use css_api::{
    ActPrediction, BeamText, ClassifyRequest, CreateSession, DecodeKnobs, Health, MessageRequest,
    MessageResponse, SessionCreated, Speaker, Strategy, Transcript, TranscriptEntry,
};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Transport(#[from] reqwest::Error),
    /// The service answered with a non-success status.
    #[error("service returned {status}: {message}")]
    Api { status: StatusCode, message: String },
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Clone, Debug)]
pub struct Client {
    http: reqwest::Client,
    base: String,
}

impl Client {
    /// `base_url` like `http://127.0.0.1:8080`; a trailing slash is ignored.
    pub fn new(base_url: impl Into<String>) -> Self {
        let mut base = base_url.into();
        while base.ends_with('/') {
            base.pop();
        }
        Client {
            http: reqwest::Client::new(),
            base,
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    async fn send<T: DeserializeOwned>(req: RequestBuilder) -> Result<T> {
        let resp = req.send().await?;
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.json().await?);
        }
        let text = resp.text().await.unwrap_or_default();
        let message = serde_json::from_str::<css_api::ErrorBody>(&text)
            .map(|b| b.error)
            .unwrap_or(text);
        Err(ClientError::Api { status, message })
    }

    pub async fn health(&self) -> Result<Health> {
        Self::send(self.http.get(self.url("/v1/health"))).await
    }

    pub async fn create_session(&self, decode: Option<DecodeKnobs>) -> Result<String> {
        let body = CreateSession { decode };
        let created: SessionCreated =
            Self::send(self.http.post(self.url("/v1/session")).json(&body)).await?;
        Ok(created.session_id)
    }

    pub async fn send_message(
        &self,
        session: &str,
        text: &str,
        decode: Option<DecodeKnobs>,
    ) -> Result<MessageResponse> {
        let body = MessageRequest {
            text: text.to_string(),
            decode,
        };
        let url = self.url(&format!("/v1/session/{session}/message"));
        Self::send(self.http.post(url).json(&body)).await
    }

    pub async fn transcript(&self, session: &str) -> Result<Transcript> {
        let url = self.url(&format!("/v1/session/{session}/transcript"));
        Self::send(self.http.get(url)).await
    }

    /// Empties the session's dialogue state, keeping its id and decode settings.
    pub async fn reset(&self, session: &str) -> Result<Transcript> {
        let url = self.url(&format!("/v1/session/{session}/reset"));
        Self::send(self.http.post(url)).await
    }

    pub async fn classify(&self, text: &str) -> Result<ActPrediction> {
        let body = ClassifyRequest {
            text: text.to_string(),
        };
        Self::send(self.http.post(self.url("/v1/classify")).json(&body)).await
    }
}
