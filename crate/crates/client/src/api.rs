//! HTTP/JSON API client.

use floorspace_core::api::{ConfigurationView, ErrorBody, EventsPage, GainsView, PinRequest, StatusReport, UnpinRequest};
use reqwest::Response;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::ClientError;

#[derive(Debug, Clone)]
pub struct ApiClient {
    base: String,
    http: reqwest::Client,
}

impl ApiClient {
    /// `base` is the server root, e.g. `http://127.0.0.1:7400`.
    pub fn new(base: impl Into<String>) -> Self {
        Self {
            base: base.into().trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}/api/{path}", self.base)
    }

    async fn check(&self, res: Response) -> Result<Response, ClientError> {
        let status = res.status();
        if status.is_success() {
            return Ok(res);
        }
        let text = res.text().await.unwrap_or_default();
        let message = serde_json::from_str::<ErrorBody>(&text).map(|b| b.error).unwrap_or(text);
        Err(ClientError::Api {
            status: status.as_u16(),
            message,
        })
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        let res = self.http.get(self.url(path)).send().await?;
        Ok(self.check(res).await?.json().await?)
    }

    async fn post<B: Serialize>(&self, path: &str, body: &B) -> Result<(), ClientError> {
        let res = self.http.post(self.url(path)).json(body).send().await?;
        self.check(res).await?;
        Ok(())
    }

    pub async fn health(&self) -> Result<(), ClientError> {
        self.get::<serde_json::Value>("health").await.map(|_| ())
    }

    pub async fn status(&self) -> Result<StatusReport, ClientError> {
        self.get("status").await
    }

    pub async fn configuration(&self) -> Result<Option<ConfigurationView>, ClientError> {
        self.get("configuration").await
    }

    pub async fn gains(&self) -> Result<GainsView, ClientError> {
        self.get("gains").await
    }

    /// Configuration changes from index `since` on.
    pub async fn events(&self, since: usize) -> Result<EventsPage, ClientError> {
        self.get(&format!("events?since={since}")).await
    }

    pub async fn pin(&self, owner: &str, floors: Vec<Vec<String>>) -> Result<(), ClientError> {
        self.post(
            "pin",
            &PinRequest {
                owner: owner.into(),
                floors,
            },
        )
        .await
    }

    pub async fn unpin(&self, owner: &str) -> Result<(), ClientError> {
        self.post("unpin", &UnpinRequest { owner: owner.into() }).await
    }
}
