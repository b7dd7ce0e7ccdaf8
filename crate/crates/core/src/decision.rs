//! Authentication decisions: the cookie-check / short-link / colocation
//! flow, and the photo branch that runs when colocation cannot be shown.

use std::collections::BTreeMap;
use std::net::IpAddr;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::DomainName;
use crate::geometry::Resolution;
use crate::session::{
    Channel, Cookie, LoginOrigin, Preference, Session, SessionError, SessionId, SessionState,
    SessionStore, TokenLookup,
};
use crate::verify::{verify_photo, AcceptSet, PhotoAnalysis, RetakeReason, VerifyConfig, VerifyResult};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecisionError {
    #[error("unknown user {0:?}")]
    UnknownUser(String),
    #[error("session is {0:?}, not awaiting a photo")]
    InvalidState(SessionState),
    #[error(transparent)]
    Session(#[from] SessionError),
}

/// How the server decides that the phone clicking the link is the device
/// that logged in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColocationPolicy {
    /// The click carries the cookie issued at login.
    #[default]
    CookieEquality,
    /// The click comes from the login address.
    IpEquality,
    /// The click comes from the same network prefix as the login.
    SameNetwork(u8),
}

impl ColocationPolicy {
    pub fn colocated(&self, session: &Session, click: &LinkClick) -> bool {
        match *self {
            ColocationPolicy::CookieEquality => click
                .presented_cookie
                .as_deref()
                .is_some_and(|c| c == session.cookie.value()),
            ColocationPolicy::IpEquality => click.source_address == session.login.address,
            ColocationPolicy::SameNetwork(prefix) => {
                same_prefix(click.source_address, session.login.address, prefix)
            }
        }
    }
}

fn same_prefix(a: IpAddr, b: IpAddr, prefix: u8) -> bool {
    match (a, b) {
        (IpAddr::V4(a), IpAddr::V4(b)) => {
            let bits = u32::from(prefix.min(32));
            let mask = u32::MAX.checked_shl(32 - bits).unwrap_or(0);
            u32::from(a) & mask == u32::from(b) & mask
        }
        (IpAddr::V6(a), IpAddr::V6(b)) => {
            let bits = u32::from(prefix.min(128));
            let mask = u128::MAX.checked_shl(128 - bits).unwrap_or(0);
            u128::from(a) & mask == u128::from(b) & mask
        }
        _ => false,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthRequest {
    /// Raw cookie value, possibly malformed.
    pub presented_cookie: Option<String>,
    pub username: Option<String>,
    pub source_address: IpAddr,
    pub channel: Channel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkClick {
    pub token_digits: String,
    pub presented_cookie: Option<String>,
    pub source_address: IpAddr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DenyReason {
    PhishingDetected,
    UnknownToken,
    RateLimited,
}

impl DenyReason {
    pub fn code(&self) -> &'static str {
        match self {
            DenyReason::PhishingDetected => "phishing-detected",
            DenyReason::UnknownToken => "unknown-token",
            DenyReason::RateLimited => "rate-limited",
        }
    }
}

pub const SAME_BROWSER_ADVISORY: &str = "open the link in the browser you used to sign in";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "decision", rename_all = "kebab-case")]
pub enum AuthDecision {
    Authorize,
    /// Login accepted, short link sent to the phone; the browser polls.
    /// The link itself never travels back over the browser's connection.
    LinkSent {
        session_id: SessionId,
        cookie: String,
    },
    Deny {
        reason: DenyReason,
    },
    RequirePhoto {
        advisory: Option<String>,
    },
    RequestRetake {
        reason: RetakeReason,
        remaining: u32,
        warning: bool,
    },
    Fallback,
    BadRequest,
}

/// Message delivered to the user's phone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Notification {
    pub username: String,
    pub via: Preference,
    pub link: String,
    pub session_id: SessionId,
}

pub struct EngineConfig {
    pub accept: AcceptSet,
    pub policy: ColocationPolicy,
    pub verify: VerifyConfig,
    pub target_resolution: Resolution,
    pub users: BTreeMap<String, Preference>,
}

/// Stateless decision layer over the shared session store.
pub struct Engine {
    store: Arc<SessionStore>,
    config: EngineConfig,
    outbox: Mutex<Vec<Notification>>,
}

impl Engine {
    pub fn new(store: Arc<SessionStore>, config: EngineConfig) -> Self {
        Self {
            store,
            config,
            outbox: Mutex::new(Vec::new()),
        }
    }

    pub fn store(&self) -> &SessionStore {
        &self.store
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn server_domain(&self) -> &DomainName {
        self.store.origin()
    }

    /// Takes every queued phone notification.
    pub fn drain_notifications(&self) -> Vec<Notification> {
        std::mem::take(&mut *self.outbox.lock().unwrap_or_else(|e| e.into_inner()))
    }

    pub fn handle_auth_request(&self, r: &AuthRequest) -> Result<AuthDecision, DecisionError> {
        if let Some(value) = &r.presented_cookie {
            if !Cookie::is_well_formed(value) {
                return Ok(AuthDecision::BadRequest);
            }
            if let Some(s) = self.store.by_cookie(value) {
                if s.state == SessionState::Authorized {
                    return Ok(AuthDecision::Authorize);
                }
            }
        }
        let Some(username) = &r.username else {
            return Ok(AuthDecision::BadRequest);
        };
        let preference = *self
            .config
            .users
            .get(username)
            .ok_or_else(|| DecisionError::UnknownUser(username.clone()))?;

        let origin = LoginOrigin {
            address: r.source_address,
            channel: r.channel,
        };
        let session = self.store.create_session(username, preference, origin);
        let token = self.store.issue_short_link(session.id)?;
        let link = token.link(self.server_domain());
        self.outbox
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(Notification {
                username: username.clone(),
                via: preference,
                link,
                session_id: session.id,
            });
        Ok(AuthDecision::LinkSent {
            session_id: session.id,
            cookie: session.cookie.value().to_string(),
        })
    }

    pub fn handle_link_click(&self, c: &LinkClick) -> Result<AuthDecision, DecisionError> {
        let session = match self.store.lookup_token(c.source_address, &c.token_digits) {
            TokenLookup::Found(s) => s,
            TokenLookup::Unknown => return Ok(deny(DenyReason::UnknownToken)),
            TokenLookup::RateLimited => return Ok(deny(DenyReason::RateLimited)),
        };
        Ok(match session.state {
            SessionState::LinkSent if self.config.policy.colocated(&session, c) => {
                self.store.transition(session.id, SessionState::Authorized)?;
                AuthDecision::Authorize
            }
            SessionState::LinkSent => {
                self.store.transition(session.id, SessionState::AwaitingPhoto)?;
                let advisory = (session.login.channel == Channel::PhoneBrowser)
                    .then(|| SAME_BROWSER_ADVISORY.to_string());
                AuthDecision::RequirePhoto { advisory }
            }
            SessionState::AwaitingPhoto => AuthDecision::RequirePhoto { advisory: None },
            SessionState::Authorized => AuthDecision::Authorize,
            SessionState::Denied => deny(DenyReason::PhishingDetected),
            SessionState::FallbackOffered => AuthDecision::Fallback,
            SessionState::CredentialsOk => deny(DenyReason::UnknownToken),
        })
    }

    pub fn handle_photo_submission(
        &self,
        token_digits: &str,
        source: IpAddr,
        analysis: &PhotoAnalysis,
    ) -> Result<AuthDecision, DecisionError> {
        let session = match self.store.lookup_token(source, token_digits) {
            TokenLookup::Found(s) => s,
            TokenLookup::Unknown => return Ok(deny(DenyReason::UnknownToken)),
            TokenLookup::RateLimited => return Ok(deny(DenyReason::RateLimited)),
        };
        if session.state != SessionState::AwaitingPhoto {
            return Err(DecisionError::InvalidState(session.state));
        }
        // Boxes were validated against the photo's own resolution, so the
        // rescale cannot fail; fall back to the original coordinates anyway.
        let scaled = analysis.rescaled(self.config.target_resolution);
        let analysis = scaled.as_ref().unwrap_or(analysis);

        match verify_photo(analysis, &self.config.accept, &self.config.verify) {
            VerifyResult::Match(_) => {
                self.store.transition(session.id, SessionState::Authorized)?;
                Ok(AuthDecision::Authorize)
            }
            VerifyResult::Mismatch { .. } => {
                self.store.transition(session.id, SessionState::Denied)?;
                Ok(deny(DenyReason::PhishingDetected))
            }
            VerifyResult::Retake { reason, warning } => {
                let s = self.store.record_retake(session.id, reason)?;
                if s.state == SessionState::FallbackOffered {
                    return Ok(AuthDecision::Fallback);
                }
                Ok(AuthDecision::RequestRetake {
                    reason,
                    remaining: self.store.config().retake_cap - s.retakes,
                    warning,
                })
            }
        }
    }

    pub fn session_state(&self, id: SessionId) -> Option<SessionState> {
        self.store.get(id).map(|s| s.state)
    }
}

fn deny(reason: DenyReason) -> AuthDecision {
    AuthDecision::Deny { reason }
}
