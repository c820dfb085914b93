//! Replays recorded HTTP responses in place of the network.

use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::gateway::live::{HttpResponse, Transport};
use crate::gateway::TransportError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordedResponse {
    /// Full URL, or a URL without query string that matches any query.
    pub url: String,
    #[serde(default = "ok")]
    pub status: u16,
    pub body: String,
}

fn ok() -> u16 {
    200
}

/// Answers GET requests from a list of recorded responses and logs every
/// requested URL. Unknown URLs get a 404.
#[derive(Debug, Default)]
pub struct RecordedTransport {
    responses: Vec<RecordedResponse>,
    requests: Mutex<Vec<String>>,
}

impl RecordedTransport {
    pub fn new(responses: Vec<RecordedResponse>) -> Self {
        Self {
            responses,
            requests: Mutex::new(Vec::new()),
        }
    }

    /// Reads a JSONL file of `{url, status, body}` records.
    pub fn load(path: &Path) -> Result<Self, crate::rundir::RunError> {
        Ok(Self::new(crate::rundir::read_jsonl_file(path)?))
    }

    pub fn requests(&self) -> Vec<String> {
        self.requests.lock().expect("log lock").clone()
    }

    fn find(&self, url: &str) -> Option<&RecordedResponse> {
        let bare = url.split('?').next().unwrap_or(url);
        self.responses
            .iter()
            .find(|r| r.url == url)
            .or_else(|| self.responses.iter().find(|r| !r.url.contains('?') && r.url == bare))
    }
}

impl Transport for RecordedTransport {
    fn post_json(&self, url: &str, _: &[(String, String)], _: &Value, t: Duration) -> Result<HttpResponse, TransportError> {
        self.get(url, &[], t)
    }

    fn get(&self, url: &str, _: &[(String, String)], _: Duration) -> Result<HttpResponse, TransportError> {
        self.requests.lock().expect("log lock").push(url.to_string());
        Ok(match self.find(url) {
            Some(r) => HttpResponse {
                status: r.status,
                body: r.body.clone(),
            },
            None => HttpResponse {
                status: 404,
                body: "not found".into(),
            },
        })
    }
}
