//! Minimal HTTP plumbing shared by the network backends: a transport trait
//! (so tests can substitute recorded responses) and a retry loop with capped
//! exponential backoff.

use std::thread;
use std::time::Duration;

use super::BackendError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Get,
    Post,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Body {
    Empty,
    Json(String),
    Form(Vec<(String, String)>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpRequest {
    pub method: Method,
    pub url: String,
    pub query: Vec<(String, String)>,
    pub headers: Vec<(String, String)>,
    pub body: Body,
}

impl HttpRequest {
    pub fn get(url: impl Into<String>) -> Self {
        Self {
            method: Method::Get,
            url: url.into(),
            query: Vec::new(),
            headers: Vec::new(),
            body: Body::Empty,
        }
    }

    pub fn post(url: impl Into<String>, body: Body) -> Self {
        Self {
            method: Method::Post,
            body,
            ..Self::get(url)
        }
    }

    pub fn header(mut self, name: &str, value: impl Into<String>) -> Self {
        self.headers.push((name.to_owned(), value.into()));
        self
    }

    pub fn query(mut self, name: &str, value: impl Into<String>) -> Self {
        self.query.push((name.to_owned(), value.into()));
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

pub trait Transport: Send + Sync {
    /// Performs one request. `Err` is a connection-level failure; HTTP error
    /// statuses come back as `Ok` responses.
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, String>;
}

/// Blocking transport backed by `ureq`.
pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration, user_agent: &str) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .user_agent(user_agent)
            .build()
            .into();
        Self { agent }
    }
}

impl Transport for UreqTransport {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, String> {
        let result = match (&request.method, &request.body) {
            (Method::Get, _) => {
                let mut req = self.agent.get(&request.url);
                for (k, v) in &request.query {
                    req = req.query(k, v);
                }
                for (k, v) in &request.headers {
                    req = req.header(k, v);
                }
                req.call()
            }
            (Method::Post, body) => {
                let mut req = self.agent.post(&request.url);
                for (k, v) in &request.query {
                    req = req.query(k, v);
                }
                for (k, v) in &request.headers {
                    req = req.header(k, v);
                }
                match body {
                    Body::Empty => req.send_empty(),
                    Body::Json(json) => req
                        .header("Content-Type", "application/json")
                        .send(json.as_str()),
                    Body::Form(pairs) => {
                        req.send_form(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))
                    }
                }
            }
        };
        let mut response = result.map_err(|e| e.to_string())?;
        let status = response.status().as_u16();
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| e.to_string())?;
        Ok(HttpResponse { status, body })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub retries: u32,
    pub base_backoff: Duration,
    pub max_backoff: Duration,
}

impl RetryPolicy {
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt).unwrap_or(u32::MAX);
        self.base_backoff
            .saturating_mul(factor)
            .min(self.max_backoff)
    }
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            retries: 3,
            base_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(30),
        }
    }
}

/// Sends with retries on connection failures, 429, and 5xx. Other 4xx
/// statuses fail immediately. Success means a 2xx response.
pub fn send_with_retry(
    transport: &dyn Transport,
    request: &HttpRequest,
    policy: &RetryPolicy,
) -> Result<HttpResponse, BackendError> {
    let mut attempt = 0;
    loop {
        let outcome = match transport.send(request) {
            Ok(r) if (200..300).contains(&r.status) => return Ok(r),
            other => other,
        };
        let retryable = match &outcome {
            Ok(r) => r.status == 429 || r.status >= 500,
            Err(_) => true,
        };
        if !retryable || attempt >= policy.retries {
            return Err(match outcome {
                Ok(r) if r.status == 429 => BackendError::RateLimited {
                    url: request.url.clone(),
                },
                Ok(r) => BackendError::Endpoint {
                    url: request.url.clone(),
                    message: format!("HTTP {}: {}", r.status, truncate(&r.body, 200)),
                },
                Err(e) => BackendError::Endpoint {
                    url: request.url.clone(),
                    message: e,
                },
            });
        }
        let delay = policy.backoff(attempt);
        log::debug!(
            "retrying {} in {:?} (attempt {})",
            request.url,
            delay,
            attempt + 1
        );
        thread::sleep(delay);
        attempt += 1;
    }
}

fn truncate(s: &str, max_chars: usize) -> &str {
    match s.char_indices().nth(max_chars) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}
