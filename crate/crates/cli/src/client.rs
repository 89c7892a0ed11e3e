//! Minimal blocking JSON client for the vault API.

use anyhow::{anyhow, Result};
use reqwest::blocking::{Client as Http, RequestBuilder};
use serde_json::Value;

pub struct Client {
    http: Http,
    base: String,
    token: Option<String>,
}

impl Client {
    pub fn new(base: &str, token: Option<&str>) -> Result<Self> {
        Ok(Self {
            http: Http::builder().timeout(std::time::Duration::from_secs(120)).build()?,
            base: base.trim_end_matches('/').to_string(),
            token: token.map(str::to_string),
        })
    }

    fn send(&self, req: RequestBuilder) -> Result<Value> {
        let req = match &self.token {
            Some(t) => req.bearer_auth(t),
            None => req,
        };
        let resp = req.send()?;
        let status = resp.status();
        let text = resp.text()?;
        let body: Value = if text.is_empty() {
            Value::Null
        } else {
            serde_json::from_str(&text).unwrap_or(Value::String(text))
        };
        if status.is_success() {
            Ok(body)
        } else {
            let msg = body["message"].as_str().map(str::to_string).unwrap_or_else(|| body.to_string());
            Err(anyhow!("{status}: {msg}"))
        }
    }

    pub fn get(&self, path: &str) -> Result<Value> {
        self.send(self.http.get(format!("{}{path}", self.base)))
    }

    pub fn post(&self, path: &str, body: &Value) -> Result<Value> {
        self.send(self.http.post(format!("{}{path}", self.base)).json(body))
    }

    pub fn delete(&self, path: &str) -> Result<Value> {
        self.send(self.http.delete(format!("{}{path}", self.base)))
    }
}
