//! Transport-neutral request handling.
//!
//! [`Service::handle`] maps a [`WireRequest`] to a [`WireResponse`]; the CLI
//! `serve` command and the tests both drive it, the former through an HTTP
//! server that only converts between its own types and these.

use std::collections::BTreeMap;
use std::net::IpAddr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::decision::{
    AuthDecision, AuthRequest, ColocationPolicy, DecisionError, DenyReason, Engine, EngineConfig, LinkClick,
    Notification,
};
use crate::domain::DomainName;
use crate::geometry::Resolution;
use crate::session::{Channel, Clock, Cookie, Preference, SessionConfig, SessionId, SessionState, SessionStore};
use crate::verify::{AcceptSet, PhotoAnalysis, VerifyConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("server_domains must name at least one host")]
    NoServerDomains,
    #[error("server domain {0:?}: {1}")]
    BadDomain(String, String),
    #[error("token_length {0} outside [6, 12]")]
    TokenLength(usize),
    #[error("{0} must lie in (0, 1], got {1}")]
    Threshold(&'static str, f64),
    #[error("session_ttl_s must be positive")]
    Ttl,
    #[error("invalid config JSON: {0}")]
    Json(String),
}

fn default_token_length() -> usize {
    10
}
fn default_retake_cap() -> u32 {
    5
}
fn default_cr() -> f64 {
    0.8
}
fn default_half() -> f64 {
    0.5
}
fn default_ttl() -> u64 {
    300
}
fn default_lookups() -> Option<u32> {
    Some(10)
}
fn default_resolution() -> Resolution {
    Resolution::FULL_HD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Hostnames this server is reachable under. The first one is the
    /// origin that issues cookies and appears in short links.
    pub server_domains: Vec<String>,
    #[serde(default = "default_token_length")]
    pub token_length: usize,
    #[serde(default = "default_retake_cap")]
    pub retake_cap: u32,
    #[serde(default = "default_cr")]
    pub cr_threshold: f64,
    #[serde(default = "default_half")]
    pub iou_threshold: f64,
    #[serde(default = "default_half")]
    pub confidence_floor: f64,
    #[serde(default)]
    pub colocation_mode: ColocationPolicy,
    #[serde(default = "default_ttl")]
    pub session_ttl_s: u64,
    #[serde(default = "default_lookups")]
    pub lookups_per_second: Option<u32>,
    #[serde(default = "default_resolution")]
    pub target_resolution: Resolution,
    #[serde(default)]
    pub users: BTreeMap<String, Preference>,
    #[serde(default)]
    pub seed: u64,
    /// Echo phone notifications in login responses.
    #[serde(default)]
    pub test_mode: bool,
}

impl Config {
    pub fn new(server_domains: &[&str]) -> Self {
        Self {
            server_domains: server_domains.iter().map(|s| s.to_string()).collect(),
            token_length: default_token_length(),
            retake_cap: default_retake_cap(),
            cr_threshold: default_cr(),
            iou_threshold: default_half(),
            confidence_floor: default_half(),
            colocation_mode: ColocationPolicy::default(),
            session_ttl_s: default_ttl(),
            lookups_per_second: default_lookups(),
            target_resolution: default_resolution(),
            users: BTreeMap::new(),
            seed: 0,
            test_mode: false,
        }
    }

    pub fn from_json(s: &str) -> Result<Self, ConfigError> {
        let c: Config = serde_json::from_str(s).map_err(|e| ConfigError::Json(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn domains(&self) -> Result<Vec<DomainName>, ConfigError> {
        if self.server_domains.is_empty() {
            return Err(ConfigError::NoServerDomains);
        }
        self.server_domains
            .iter()
            .map(|d| DomainName::parse(d).map_err(|e| ConfigError::BadDomain(d.clone(), e.to_string())))
            .collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.domains()?;
        if !(6..=12).contains(&self.token_length) {
            return Err(ConfigError::TokenLength(self.token_length));
        }
        for (name, v) in [
            ("cr_threshold", self.cr_threshold),
            ("iou_threshold", self.iou_threshold),
            ("confidence_floor", self.confidence_floor),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(ConfigError::Threshold(name, v));
            }
        }
        if self.session_ttl_s == 0 {
            return Err(ConfigError::Ttl);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireRequest {
    pub method: String,
    pub path: String,
    /// Header names in lower case.
    #[serde(default)]
    pub headers: BTreeMap<String, String>,
    #[serde(default)]
    pub body: String,
    pub peer: IpAddr,
}

impl WireRequest {
    pub fn new(method: &str, path: &str, peer: IpAddr) -> Self {
        Self {
            method: method.to_string(),
            path: path.to_string(),
            headers: BTreeMap::new(),
            body: String::new(),
            peer,
        }
    }

    pub fn with_body(mut self, body: impl Into<String>) -> Self {
        self.body = body.into();
        self
    }

    pub fn with_cookie(mut self, value: &str) -> Self {
        self.headers
            .insert("cookie".into(), format!("{}={value}", Cookie::NAME));
        self
    }

    pub fn with_header(mut self, name: &str, value: &str) -> Self {
        self.headers.insert(name.to_ascii_lowercase(), value.to_string());
        self
    }

    /// Value of our cookie in the `Cookie` header. `Some("")` when the
    /// header names the cookie without a value.
    pub fn auth_cookie(&self) -> Option<String> {
        let header = self.headers.get("cookie")?;
        header.split(';').find_map(|pair| {
            let (name, value) = pair.split_once('=').unwrap_or((pair, ""));
            (name.trim() == Cookie::NAME).then(|| value.trim().to_string())
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireResponse {
    pub status: u16,
    #[serde(default)]
    pub headers: BTreeMap<String, String>,
    pub body: Value,
}

impl WireResponse {
    fn json(status: u16, body: Value) -> Self {
        Self {
            status,
            headers: BTreeMap::new(),
            body,
        }
    }

    fn error(status: u16, code: &str) -> Self {
        Self::json(status, json!({ "error": code }))
    }
}

#[derive(Deserialize)]
struct LoginBody {
    username: Option<String>,
    #[allow(dead_code)]
    #[serde(default)]
    password: Option<String>,
    #[serde(default)]
    channel: Option<Channel>,
}

pub struct Service {
    engine: Engine,
    test_mode: bool,
}

impl Service {
    pub fn new(config: &Config, clock: Arc<dyn Clock>) -> Result<Self, ConfigError> {
        config.validate()?;
        let domains = config.domains()?;
        let session_config = SessionConfig {
            token_length: config.token_length,
            retake_cap: config.retake_cap,
            ttl_ms: config.session_ttl_s.saturating_mul(1000),
            lookups_per_second: config.lookups_per_second,
        };
        let store = SessionStore::new(
            domains[0].clone(),
            session_config,
            ChaCha20Rng::seed_from_u64(config.seed),
            clock,
        );
        let verify = VerifyConfig::new(config.cr_threshold, config.confidence_floor)
            .map_err(|_| ConfigError::Threshold("cr_threshold", config.cr_threshold))?;
        let engine = Engine::new(
            Arc::new(store),
            EngineConfig {
                accept: AcceptSet::new(domains).map_err(|_| ConfigError::NoServerDomains)?,
                policy: config.colocation_mode,
                verify,
                target_resolution: config.target_resolution,
                users: config.users.clone(),
            },
        );
        Ok(Self {
            engine,
            test_mode: config.test_mode,
        })
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn handle(&self, req: &WireRequest) -> WireResponse {
        self.handle_with_notifications(req).0
    }

    /// Handles a request and returns the phone notifications it queued.
    pub fn handle_with_notifications(&self, req: &WireRequest) -> (WireResponse, Vec<Notification>) {
        let path = req.path.split('?').next().unwrap_or("");
        let segments: Vec<&str> = path.trim_matches('/').split('/').collect();
        let method = req.method.to_ascii_uppercase();
        let response = match (method.as_str(), segments.as_slice()) {
            ("POST", ["login"]) => self.login(req),
            ("GET", ["c", digits]) => self.click(req, digits),
            ("POST", ["c", digits, "photo"]) => self.photo(req, digits),
            ("POST", ["c", _, "image"]) => WireResponse::error(501, "raw-image-upload-not-implemented"),
            ("GET", ["status", id]) => self.status(id),
            ("GET", [""]) => self.landing(req),
            (_, ["login"] | ["c", _] | ["c", _, "photo" | "image"] | ["status", _] | [""]) => {
                WireResponse::error(405, "method-not-allowed")
            }
            _ => WireResponse::error(404, "not-found"),
        };
        let notifications = self.engine.drain_notifications();
        let mut response = response;
        if self.test_mode && !notifications.is_empty() {
            if let Value::Object(body) = &mut response.body {
                body.insert("notification".into(), json!(notifications[0]));
            }
        }
        (response, notifications)
    }

    fn login(&self, req: &WireRequest) -> WireResponse {
        let body: LoginBody = match serde_json::from_str(&req.body) {
            Ok(b) => b,
            Err(_) => return WireResponse::error(400, "bad-request"),
        };
        let request = AuthRequest {
            presented_cookie: req.auth_cookie(),
            username: body.username,
            source_address: req.peer,
            channel: body.channel.unwrap_or(Channel::PcBrowser),
        };
        match self.engine.handle_auth_request(&request) {
            Ok(AuthDecision::Authorize) => WireResponse::json(200, json!({ "status": "authorized" })),
            Ok(AuthDecision::LinkSent { session_id, cookie }) => {
                // the short link goes to the phone only; the browser polls
                let mut r = WireResponse::json(
                    200,
                    json!({ "status": "link-sent", "session_id": session_id, "poll": format!("/status/{session_id}") }),
                );
                r.headers.insert(
                    "set-cookie".into(),
                    format!("{}={cookie}; Path=/; HttpOnly; Secure; SameSite=Lax", Cookie::NAME),
                );
                r
            }
            Ok(_) => WireResponse::error(400, "bad-request"),
            Err(DecisionError::UnknownUser(_)) => WireResponse::error(401, "unknown-user"),
            Err(_) => WireResponse::error(500, "internal"),
        }
    }

    fn click(&self, req: &WireRequest, digits: &str) -> WireResponse {
        let click = LinkClick {
            token_digits: digits.to_string(),
            presented_cookie: req.auth_cookie(),
            source_address: req.peer,
        };
        match self.engine.handle_link_click(&click) {
            Ok(AuthDecision::RequirePhoto { advisory }) => {
                let mut body = json!({ "status": "photo-required", "upload": format!("/c/{digits}/photo") });
                if let Some(a) = advisory {
                    body["advisory"] = json!(a);
                }
                WireResponse::json(200, body)
            }
            Ok(d) => decision_response(d),
            Err(_) => WireResponse::error(500, "internal"),
        }
    }

    fn photo(&self, req: &WireRequest, digits: &str) -> WireResponse {
        let analysis = match PhotoAnalysis::from_json(&req.body) {
            Ok(a) => a,
            Err(e) => return WireResponse::json(400, json!({ "error": "bad-photo-analysis", "detail": e.to_string() })),
        };
        match self.engine.handle_photo_submission(digits, req.peer, &analysis) {
            Ok(d) => decision_response(d),
            Err(DecisionError::InvalidState(state)) => {
                WireResponse::json(409, json!({ "error": "not-awaiting-photo", "state": state }))
            }
            Err(_) => WireResponse::error(500, "internal"),
        }
    }

    fn status(&self, id: &str) -> WireResponse {
        let state = SessionId::parse(id).and_then(|id| self.engine.session_state(id));
        match state {
            Some(state) => WireResponse::json(200, json!({ "session_id": id, "state": state })),
            None => WireResponse::error(404, "unknown-session"),
        }
    }

    fn landing(&self, req: &WireRequest) -> WireResponse {
        let session = req.auth_cookie().and_then(|c| self.engine.store().by_cookie(&c));
        match session {
            Some(s) if s.state == SessionState::Authorized => {
                WireResponse::json(200, json!({ "status": "signed-in", "username": s.username }))
            }
            _ => WireResponse::json(401, json!({ "status": "login-required" })),
        }
    }
}

fn decision_response(d: AuthDecision) -> WireResponse {
    match d {
        AuthDecision::Authorize => WireResponse::json(200, json!({ "status": "authorized" })),
        AuthDecision::Deny {
            reason: reason @ (DenyReason::UnknownToken | DenyReason::RateLimited),
        } => {
            let status = if reason == DenyReason::RateLimited { 429 } else { 403 };
            WireResponse::error(status, reason.code())
        }
        AuthDecision::Deny { reason } => {
            WireResponse::json(200, json!({ "status": "denied", "reason": reason.code(), "warning": true }))
        }
        AuthDecision::RequestRetake {
            reason,
            remaining,
            warning,
        } => WireResponse::json(
            200,
            json!({ "status": "retake", "reason": reason.code(), "remaining": remaining, "warning": warning }),
        ),
        AuthDecision::Fallback => WireResponse::json(200, json!({ "status": "fallback" })),
        AuthDecision::RequirePhoto { .. } => WireResponse::json(200, json!({ "status": "photo-required" })),
        AuthDecision::LinkSent { .. } | AuthDecision::BadRequest => WireResponse::error(400, "bad-request"),
    }
}
