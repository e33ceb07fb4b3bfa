//! Typed HTTP client for a running metafuse service.

use metafuse_core::api::{ApiError, EngineToggle, MetricsRunRequest, MetricsRunResponse, SearchRequest};
use metafuse_core::model::{EngineDescriptor, MergedResponse};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;
use url::Url;

#[derive(Debug, Error)]
pub enum ClientError {
    /// The service answered with a non-2xx status.
    #[error("{status} {code}: {message}")]
    Api { status: u16, code: String, message: String },

    #[error("transport error: {0}")]
    Transport(String),

    #[error("invalid server url `{0}`")]
    BadUrl(String),
}

#[derive(Debug, Clone)]
pub struct MetafuseClient {
    base: Url,
    http: reqwest::Client,
}

impl MetafuseClient {
    pub fn new(base_url: &str) -> Result<Self, ClientError> {
        let mut base = Url::parse(base_url).map_err(|_| ClientError::BadUrl(base_url.to_string()))?;
        if !base.path().ends_with('/') {
            let path = format!("{}/", base.path());
            base.set_path(&path);
        }
        Ok(MetafuseClient {
            base,
            http: reqwest::Client::new(),
        })
    }

    fn url(&self, path: &str) -> Result<Url, ClientError> {
        self.base.join(path).map_err(|_| ClientError::BadUrl(path.to_string()))
    }

    async fn decode<T: DeserializeOwned>(response: reqwest::Response) -> Result<T, ClientError> {
        let status = response.status();
        let bytes = response.bytes().await.map_err(|e| ClientError::Transport(e.to_string()))?;
        if status.is_success() {
            return serde_json::from_slice(&bytes).map_err(|e| ClientError::Transport(format!("bad response body: {e}")));
        }
        let (code, message) = match serde_json::from_slice::<ApiError>(&bytes) {
            Ok(err) => (err.error, err.message),
            Err(_) => ("http_error".to_string(), String::from_utf8_lossy(&bytes).into_owned()),
        };
        Err(ClientError::Api {
            status: status.as_u16(),
            code,
            message,
        })
    }

    async fn send<T: DeserializeOwned>(&self, request: reqwest::RequestBuilder) -> Result<T, ClientError> {
        let response = request.send().await.map_err(|e| ClientError::Transport(e.to_string()))?;
        Self::decode(response).await
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, ClientError> {
        self.send(self.http.post(self.url(path)?).json(body)).await
    }

    pub async fn search(&self, request: &SearchRequest) -> Result<MergedResponse, ClientError> {
        self.post("api/search", request).await
    }

    pub async fn engines(&self) -> Result<Vec<EngineDescriptor>, ClientError> {
        self.send(self.http.get(self.url("api/engines")?)).await
    }

    pub async fn set_enabled(&self, engine_id: &str, enabled: bool) -> Result<EngineDescriptor, ClientError> {
        let mut url = self.url("api/engines/")?;
        url.path_segments_mut()
            .map_err(|_| ClientError::BadUrl(engine_id.to_string()))?
            .pop_if_empty()
            .push(engine_id);
        self.send(self.http.put(url).json(&EngineToggle { enabled })).await
    }

    /// Raw stats JSON, one entry per engine.
    pub async fn stats(&self) -> Result<serde_json::Value, ClientError> {
        self.send(self.http.get(self.url("api/stats")?)).await
    }

    pub async fn run_metrics(&self, request: &MetricsRunRequest) -> Result<MetricsRunResponse, ClientError> {
        self.post("api/metrics/run", request).await
    }
}
