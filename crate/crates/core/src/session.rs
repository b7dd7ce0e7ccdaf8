//! Server-side login sessions: cookies, short-link tokens, retake counters
//! and the lifecycle state machine.
//!
//! The store is shared by concurrent request handlers. Every operation takes
//! the single internal lock, so operations are linearizable; callers receive
//! snapshots and mutate only through the store.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::net::IpAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

use rand::{Rng, RngCore};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::DomainName;
use crate::verify::RetakeReason;

/// Milliseconds on whatever clock the store was built with.
pub type Millis = u64;

pub trait Clock: Send + Sync {
    fn now_ms(&self) -> Millis;
}

/// Logical clock advanced by hand; used by the simulator and tests.
#[derive(Debug, Clone, Default)]
pub struct ManualClock(Arc<AtomicU64>);

impl ManualClock {
    pub fn new(start: Millis) -> Self {
        Self(Arc::new(AtomicU64::new(start)))
    }

    pub fn advance(&self, by: Millis) {
        self.0.fetch_add(by, Ordering::SeqCst);
    }

    pub fn set(&self, to: Millis) {
        self.0.store(to, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> Millis {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SessionError {
    #[error("session {0} not found")]
    NotFound(SessionId),
    #[error("session is {from:?}; cannot {action}")]
    InvalidState { from: SessionState, action: &'static str },
    #[error("token length {0} outside 6..=12")]
    TokenLength(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SessionId(u128);

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:032x}", self.0)
    }
}

impl SessionId {
    pub fn parse(s: &str) -> Option<Self> {
        if s.len() != 32 {
            return None;
        }
        u128::from_str_radix(s, 16).ok().map(Self)
    }
}

impl Serialize for SessionId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// A 128-bit web cookie value, rendered as 32 lowercase hex digits.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Cookie {
    value: String,
    origin: DomainName,
}

impl Cookie {
    pub const NAME: &'static str = "photoauth";

    fn generate(rng: &mut impl RngCore, origin: DomainName) -> Self {
        Self {
            value: format!("{:032x}", rng.gen::<u128>()),
            origin,
        }
    }

    /// Syntactic check on a presented cookie value.
    pub fn is_well_formed(value: &str) -> bool {
        value.len() == 32 && value.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
    }

    pub fn value(&self) -> &str {
        &self.value
    }

    pub fn origin(&self) -> &DomainName {
        &self.origin
    }
}

/// Random decimal token embedded in the short link sent to the phone.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(transparent)]
pub struct ShortLinkToken(String);

impl ShortLinkToken {
    pub const MIN_LEN: usize = 6;
    pub const MAX_LEN: usize = 12;

    pub fn generate(rng: &mut impl RngCore, len: usize) -> Result<Self, SessionError> {
        if !(Self::MIN_LEN..=Self::MAX_LEN).contains(&len) {
            return Err(SessionError::TokenLength(len));
        }
        let digits = (0..len).map(|_| char::from(b'0' + rng.gen_range(0..10u8))).collect();
        Ok(Self(digits))
    }

    pub fn digits(&self) -> &str {
        &self.0
    }

    /// `<server-domain>/c/<digits>`
    pub fn link(&self, server: &DomainName) -> String {
        format!("{server}/c/{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preference {
    Sms,
    Push,
    Email,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SessionState {
    CredentialsOk,
    LinkSent,
    AwaitingPhoto,
    Authorized,
    Denied,
    FallbackOffered,
}

impl SessionState {
    /// Edges of the lifecycle graph. Retakes are the `AwaitingPhoto` self loop.
    pub fn can_transition_to(self, to: SessionState) -> bool {
        use SessionState::*;
        matches!(
            (self, to),
            (CredentialsOk, LinkSent)
                | (LinkSent, Authorized)
                | (LinkSent, AwaitingPhoto)
                | (AwaitingPhoto, Authorized)
                | (AwaitingPhoto, Denied)
                | (AwaitingPhoto, AwaitingPhoto)
                | (AwaitingPhoto, FallbackOffered)
        )
    }

    pub fn is_final(self) -> bool {
        matches!(self, SessionState::Authorized | SessionState::Denied)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Session {
    pub id: SessionId,
    pub username: String,
    pub cookie: Cookie,
    pub token: Option<ShortLinkToken>,
    pub preference: Preference,
    pub state: SessionState,
    pub retakes: u32,
    pub created_at: Millis,
    pub phishing_warned: bool,
    pub login: LoginOrigin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Channel {
    PcBrowser,
    PhoneBrowser,
}

/// Where the login request came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct LoginOrigin {
    pub address: IpAddr,
    pub channel: Channel,
}

impl LoginOrigin {
    pub fn pc(address: IpAddr) -> Self {
        Self {
            address,
            channel: Channel::PcBrowser,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub token_length: usize,
    pub retake_cap: u32,
    pub ttl_ms: Millis,
    /// Token lookups allowed per source address per second; `None` disables
    /// the limit.
    pub lookups_per_second: Option<u32>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            token_length: 10,
            retake_cap: 5,
            ttl_ms: 300_000,
            lookups_per_second: Some(10),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TokenLookup {
    Found(Session),
    Unknown,
    RateLimited,
}

pub struct SessionStore {
    origin: DomainName,
    config: SessionConfig,
    clock: Arc<dyn Clock>,
    inner: Mutex<Inner>,
}

struct Inner {
    rng: ChaCha20Rng,
    sessions: HashMap<SessionId, Session>,
    tokens: HashMap<String, SessionId>,
    cookies: HashMap<String, SessionId>,
    lookups: HashMap<IpAddr, VecDeque<Millis>>,
}

impl SessionStore {
    pub fn new(origin: DomainName, config: SessionConfig, rng: ChaCha20Rng, clock: Arc<dyn Clock>) -> Self {
        Self {
            origin,
            config,
            clock,
            inner: Mutex::new(Inner {
                rng,
                sessions: HashMap::new(),
                tokens: HashMap::new(),
                cookies: HashMap::new(),
                lookups: HashMap::new(),
            }),
        }
    }

    pub fn origin(&self) -> &DomainName {
        &self.origin
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn now_ms(&self) -> Millis {
        self.clock.now_ms()
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn expired(&self, s: &Session, now: Millis) -> bool {
        s.state != SessionState::Authorized && now.saturating_sub(s.created_at) > self.config.ttl_ms
    }

    /// New session in `CredentialsOk` with a fresh cookie for this server.
    pub fn create_session(&self, username: &str, preference: Preference, login: LoginOrigin) -> Session {
        let now = self.clock.now_ms();
        let mut inner = self.lock();
        let id = loop {
            let id = SessionId(inner.rng.gen());
            if !inner.sessions.contains_key(&id) {
                break id;
            }
        };
        let cookie = loop {
            let c = Cookie::generate(&mut inner.rng, self.origin.clone());
            if !inner.cookies.contains_key(c.value()) {
                break c;
            }
        };
        let session = Session {
            id,
            username: username.to_string(),
            cookie,
            token: None,
            preference,
            state: SessionState::CredentialsOk,
            retakes: 0,
            created_at: now,
            phishing_warned: false,
            login,
        };
        inner.cookies.insert(session.cookie.value().to_string(), id);
        inner.sessions.insert(id, session.clone());
        session
    }

    /// Draws a token not held by any live session and moves the session to
    /// `LinkSent`.
    pub fn issue_short_link(&self, id: SessionId) -> Result<ShortLinkToken, SessionError> {
        let now = self.clock.now_ms();
        let mut inner = self.lock();
        let state = inner.sessions.get(&id).ok_or(SessionError::NotFound(id))?.state;
        if state != SessionState::CredentialsOk {
            return Err(SessionError::InvalidState {
                from: state,
                action: "issue a short link",
            });
        }
        let token = loop {
            let t = ShortLinkToken::generate(&mut inner.rng, self.config.token_length)?;
            let taken = inner
                .tokens
                .get(t.digits())
                .and_then(|sid| inner.sessions.get(sid))
                .is_some_and(|s| !self.expired(s, now));
            if !taken {
                break t;
            }
        };
        if let Some(old) = inner.tokens.insert(token.digits().to_string(), id) {
            // the previous holder had expired; unlink it
            if let Some(s) = inner.sessions.get_mut(&old) {
                s.token = None;
            }
        }
        let s = inner.sessions.get_mut(&id).expect("checked above");
        s.token = Some(token.clone());
        s.state = SessionState::LinkSent;
        Ok(token)
    }

    /// Exact-match token lookup; expired sessions read as unknown.
    pub fn resolve_token(&self, digits: &str) -> Option<Session> {
        let now = self.clock.now_ms();
        let inner = self.lock();
        let id = inner.tokens.get(digits)?;
        inner.sessions.get(id).filter(|s| !self.expired(s, now)).cloned()
    }

    /// Token lookup subject to the per-source rate limit.
    pub fn lookup_token(&self, source: IpAddr, digits: &str) -> TokenLookup {
        let now = self.clock.now_ms();
        if let Some(limit) = self.config.lookups_per_second {
            let mut inner = self.lock();
            let window = inner.lookups.entry(source).or_default();
            while window.front().is_some_and(|&t| now.saturating_sub(t) >= 1000) {
                window.pop_front();
            }
            if window.len() >= limit as usize {
                return TokenLookup::RateLimited;
            }
            window.push_back(now);
        }
        match self.resolve_token(digits) {
            Some(s) => TokenLookup::Found(s),
            None => TokenLookup::Unknown,
        }
    }

    pub fn get(&self, id: SessionId) -> Option<Session> {
        self.lock().sessions.get(&id).cloned()
    }

    pub fn by_cookie(&self, value: &str) -> Option<Session> {
        let now = self.clock.now_ms();
        let inner = self.lock();
        let id = inner.cookies.get(value)?;
        inner.sessions.get(id).filter(|s| !self.expired(s, now)).cloned()
    }

    /// Moves a session along one edge of the lifecycle graph.
    pub fn transition(&self, id: SessionId, to: SessionState) -> Result<Session, SessionError> {
        let mut inner = self.lock();
        let s = inner.sessions.get_mut(&id).ok_or(SessionError::NotFound(id))?;
        if !s.state.can_transition_to(to) || to == SessionState::LinkSent {
            return Err(SessionError::InvalidState {
                from: s.state,
                action: "make that transition",
            });
        }
        s.state = to;
        Ok(s.clone())
    }

    /// Counts a failed photo. The session stays in `AwaitingPhoto` until the
    /// failures exceed the retake cap, then moves to `FallbackOffered` with a
    /// phishing warning.
    pub fn record_retake(&self, id: SessionId, reason: RetakeReason) -> Result<Session, SessionError> {
        let mut inner = self.lock();
        let s = inner.sessions.get_mut(&id).ok_or(SessionError::NotFound(id))?;
        if s.state != SessionState::AwaitingPhoto {
            return Err(SessionError::InvalidState {
                from: s.state,
                action: "record a retake",
            });
        }
        if reason == RetakeReason::MultipleAddrbars {
            s.phishing_warned = true;
        }
        if s.retakes + 1 > self.config.retake_cap {
            s.state = SessionState::FallbackOffered;
            s.phishing_warned = true;
        } else {
            s.retakes += 1;
        }
        Ok(s.clone())
    }

    /// Drops expired sessions and their index entries.
    pub fn purge_expired(&self) -> usize {
        let now = self.clock.now_ms();
        let mut inner = self.lock();
        let dead: Vec<SessionId> = inner
            .sessions
            .values()
            .filter(|s| self.expired(s, now))
            .map(|s| s.id)
            .collect();
        for id in &dead {
            if let Some(s) = inner.sessions.remove(id) {
                inner.cookies.remove(s.cookie.value());
                if let Some(t) = s.token {
                    if inner.tokens.get(t.digits()) == Some(id) {
                        inner.tokens.remove(t.digits());
                    }
                }
            }
        }
        dead.len()
    }

    /// Checks that the token index maps exactly onto the sessions holding a
    /// token. Used by stress tests.
    pub fn index_is_consistent(&self) -> bool {
        let inner = self.lock();
        let forward = inner.tokens.iter().all(|(digits, id)| {
            inner
                .sessions
                .get(id)
                .and_then(|s| s.token.as_ref())
                .is_some_and(|t| t.digits() == digits)
        });
        let backward = inner
            .sessions
            .values()
            .filter_map(|s| s.token.as_ref().map(|t| (t, s.id)))
            .all(|(t, id)| inner.tokens.get(t.digits()) == Some(&id));
        forward && backward
    }

    pub fn len(&self) -> usize {
        self.lock().sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use std::collections::HashSet;
    use std::net::Ipv4Addr;

    const PC_ADDR: IpAddr = IpAddr::V4(Ipv4Addr::new(192, 0, 2, 10));
    const PC: LoginOrigin = LoginOrigin {
        address: PC_ADDR,
        channel: Channel::PcBrowser,
    };

    fn store_with(config: SessionConfig) -> (SessionStore, ManualClock) {
        let clock = ManualClock::new(0);
        let store = SessionStore::new(
            DomainName::parse("microsoft.com").unwrap(),
            config,
            ChaCha20Rng::seed_from_u64(7),
            Arc::new(clock.clone()),
        );
        (store, clock)
    }

    fn store() -> (SessionStore, ManualClock) {
        store_with(SessionConfig::default())
    }

    fn awaiting_photo(store: &SessionStore) -> SessionId {
        let s = store.create_session("bob", Preference::Sms, PC);
        store.issue_short_link(s.id).unwrap();
        store.transition(s.id, SessionState::AwaitingPhoto).unwrap();
        s.id
    }

    #[test]
    fn create_gives_distinct_cookies_from_this_origin() {
        let (store, _) = store();
        let a = store.create_session("bob", Preference::Sms, PC);
        let b = store.create_session("bob", Preference::Sms, PC);
        assert_ne!(a.cookie.value(), b.cookie.value());
        assert_eq!(a.cookie.origin().ascii(), "microsoft.com");
        assert_eq!(a.state, SessionState::CredentialsOk);
        assert_eq!(a.retakes, 0);
        assert!(Cookie::is_well_formed(a.cookie.value()));
    }

    #[test]
    fn ten_thousand_sessions_have_distinct_ids() {
        let (store, _) = store();
        let ids: HashSet<_> = (0..10_000)
            .map(|_| store.create_session("u", Preference::Push, PC).id)
            .collect();
        assert_eq!(ids.len(), 10_000);
    }

    #[test]
    fn token_shapes() {
        let (store, _) = store();
        let s = store.create_session("bob", Preference::Sms, PC);
        let t = store.issue_short_link(s.id).unwrap();
        assert_eq!(t.digits().len(), 10);
        assert!(t.digits().bytes().all(|b| b.is_ascii_digit()));
        assert_eq!(t.link(store.origin()), format!("microsoft.com/c/{}", t.digits()));

        let (short, _) = store_with(SessionConfig {
            token_length: 6,
            ..Default::default()
        });
        let s = short.create_session("bob", Preference::Sms, PC);
        assert_eq!(short.issue_short_link(s.id).unwrap().digits().len(), 6);

        let mut rng = ChaCha20Rng::seed_from_u64(1);
        assert_eq!(ShortLinkToken::generate(&mut rng, 5), Err(SessionError::TokenLength(5)));
        assert_eq!(ShortLinkToken::generate(&mut rng, 13), Err(SessionError::TokenLength(13)));
    }

    #[test]
    fn issuing_twice_is_invalid() {
        let (store, _) = store();
        let s = store.create_session("bob", Preference::Sms, PC);
        store.issue_short_link(s.id).unwrap();
        assert!(matches!(
            store.issue_short_link(s.id),
            Err(SessionError::InvalidState { from: SessionState::LinkSent, .. })
        ));
    }

    #[test]
    fn resolve_issued_and_unknown() {
        let (store, _) = store();
        let s = store.create_session("bob", Preference::Sms, PC);
        let t = store.issue_short_link(s.id).unwrap();
        assert_eq!(store.resolve_token(t.digits()).unwrap().id, s.id);
        let other = if t.digits() == "0000000000" { "1111111111" } else { "0000000000" };
        assert!(store.resolve_token(other).is_none());
    }

    #[test]
    fn tokens_expire_after_ttl() {
        let (store, clock) = store();
        let s = store.create_session("bob", Preference::Sms, PC);
        let t = store.issue_short_link(s.id).unwrap();
        clock.advance(300_000);
        assert!(store.resolve_token(t.digits()).is_some());
        clock.advance(1);
        assert!(store.resolve_token(t.digits()).is_none());
        assert_eq!(store.purge_expired(), 1);
        assert!(store.is_empty());
    }

    #[test]
    fn authorized_sessions_outlive_ttl() {
        let (store, clock) = store();
        let s = store.create_session("bob", Preference::Sms, PC);
        store.issue_short_link(s.id).unwrap();
        store.transition(s.id, SessionState::Authorized).unwrap();
        clock.advance(1_000_000);
        assert!(store.by_cookie(s.cookie.value()).is_some());
    }

    #[test]
    fn rate_limit_per_source() {
        let (store, clock) = store();
        let other: IpAddr = "198.51.100.1".parse().unwrap();
        for _ in 0..10 {
            assert_eq!(store.lookup_token(PC_ADDR, "123"), TokenLookup::Unknown);
        }
        assert_eq!(store.lookup_token(PC_ADDR, "123"), TokenLookup::RateLimited);
        assert_eq!(store.lookup_token(other, "123"), TokenLookup::Unknown);
        clock.advance(1000);
        assert_eq!(store.lookup_token(PC_ADDR, "123"), TokenLookup::Unknown);
    }

    #[test]
    fn retake_counting_and_cap() {
        let (store, _) = store();
        let id = awaiting_photo(&store);
        let s = store.record_retake(id, RetakeReason::Unreadable).unwrap();
        assert_eq!((s.retakes, s.state), (1, SessionState::AwaitingPhoto));
        for n in 2..=5 {
            let s = store.record_retake(id, RetakeReason::Unreadable).unwrap();
            assert_eq!((s.retakes, s.state), (n, SessionState::AwaitingPhoto));
            assert!(!s.phishing_warned);
        }
        let s = store.record_retake(id, RetakeReason::Unreadable).unwrap();
        assert_eq!(s.state, SessionState::FallbackOffered);
        assert_eq!(s.retakes, 5);
        assert!(s.phishing_warned);
        assert!(store.record_retake(id, RetakeReason::Unreadable).is_err());
    }

    #[test]
    fn multiple_addrbars_sets_warning() {
        let (store, _) = store();
        let id = awaiting_photo(&store);
        let s = store.record_retake(id, RetakeReason::MultipleAddrbars).unwrap();
        assert!(s.phishing_warned);
        assert_eq!(s.state, SessionState::AwaitingPhoto);
    }

    #[test]
    fn retake_requires_awaiting_photo() {
        let (store, _) = store();
        let s = store.create_session("bob", Preference::Sms, PC);
        assert!(store.record_retake(s.id, RetakeReason::Unreadable).is_err());
    }

    #[test]
    fn lifecycle_graph_is_enforced() {
        use SessionState::*;
        let all = [CredentialsOk, LinkSent, AwaitingPhoto, Authorized, Denied, FallbackOffered];
        let allowed = [
            (CredentialsOk, LinkSent),
            (LinkSent, Authorized),
            (LinkSent, AwaitingPhoto),
            (AwaitingPhoto, Authorized),
            (AwaitingPhoto, Denied),
            (AwaitingPhoto, AwaitingPhoto),
            (AwaitingPhoto, FallbackOffered),
        ];
        for from in all {
            for to in all {
                assert_eq!(from.can_transition_to(to), allowed.contains(&(from, to)), "{from:?}->{to:?}");
            }
        }
        let (store, _) = store();
        let s = store.create_session("bob", Preference::Sms, PC);
        assert!(store.transition(s.id, Authorized).is_err());
        // LinkSent is only reachable through issue_short_link
        assert!(store.transition(s.id, LinkSent).is_err());
        store.issue_short_link(s.id).unwrap();
        store.transition(s.id, Authorized).unwrap();
        for to in all {
            assert!(store.transition(s.id, to).is_err());
        }
    }

    #[test]
    fn concurrent_operations_keep_index_consistent() {
        let (store, _) = store_with(SessionConfig {
            token_length: 6,
            lookups_per_second: None,
            ..Default::default()
        });
        let store = Arc::new(store);
        let handles: Vec<_> = (0..8)
            .map(|t| {
                let store = Arc::clone(&store);
                std::thread::spawn(move || {
                    let mut tokens = Vec::new();
                    for i in 0..500 {
                        let s = store.create_session(&format!("u{t}-{i}"), Preference::Sms, PC);
                        let tok = store.issue_short_link(s.id).unwrap();
                        assert_eq!(store.resolve_token(tok.digits()).unwrap().id, s.id);
                        tokens.push(tok);
                        if i % 3 == 0 {
                            store.transition(s.id, SessionState::AwaitingPhoto).unwrap();
                        }
                    }
                    tokens
                })
            })
            .collect();
        let all: Vec<ShortLinkToken> = handles.into_iter().flat_map(|h| h.join().unwrap()).collect();
        let distinct: HashSet<_> = all.iter().map(|t| t.digits().to_string()).collect();
        assert_eq!(distinct.len(), all.len());
        assert_eq!(store.len(), 4000);
        assert!(store.index_is_consistent());
    }

    #[test]
    fn cookies_never_repeat() {
        let (store, _) = store();
        let values: HashSet<String> = (0..100_000)
            .map(|_| store.create_session("u", Preference::Sms, PC).cookie.value().to_string())
            .collect();
        assert_eq!(values.len(), 100_000);
    }
}
