//! Deterministic replay of logins and phishing attacks.
//!
//! Four actors exchange messages: the victim's PC browser, the victim's
//! phone, the adversary running a reverse proxy, and the real server. The
//! phone reaches the server over the only safe link; the adversary is an
//! endpoint of unsafe links only and therefore never sees a short link or a
//! one-time code. Time is a logical clock, and every random draw comes from
//! the scenario seed.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::net::{IpAddr, Ipv4Addr};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::{ChaCha20Rng, ChaCha8Rng};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::decision::{
    AuthDecision, AuthRequest, ColocationPolicy, DecisionError, DenyReason, Engine, EngineConfig, LinkClick,
};
use crate::domain::DomainName;
use crate::geometry::Resolution;
use crate::session::{Channel, Clock, ManualClock, Preference, SessionConfig, SessionId, SessionState, SessionStore, ShortLinkToken};
use crate::synth::{generate_layout, mix_seed, simulate_detection, DetectorProfile, LayoutVariant, Theme};
use crate::verify::{AcceptSet, VerifyConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("invalid scenario JSON: {0}")]
    Json(String),
    #[error(transparent)]
    Decision(#[from] DecisionError),
}

fn invalid(msg: impl Into<String>) -> SimError {
    SimError::Invalid(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Actor {
    VictimPc,
    VictimPhone,
    Adversary,
    Server,
}

impl Actor {
    pub fn address(self) -> IpAddr {
        match self {
            Actor::VictimPc => IpAddr::V4(Ipv4Addr::new(192, 0, 2, 10)),
            Actor::VictimPhone => IpAddr::V4(Ipv4Addr::new(192, 0, 2, 77)),
            Actor::Adversary => IpAddr::V4(Ipv4Addr::new(203, 0, 113, 5)),
            Actor::Server => IpAddr::V4(Ipv4Addr::new(198, 51, 100, 1)),
        }
    }

    pub fn party(self) -> Party {
        match self {
            Actor::Adversary => Party::Adversary,
            _ => Party::Victim,
        }
    }
}

/// Who ends up holding an authorized session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Party {
    Victim,
    Adversary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trust {
    Safe,
    Unsafe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Link {
    pub endpoints: (Actor, Actor),
    pub trust: Trust,
}

/// The fixed topology. Only the phone-server link is safe.
pub const LINKS: [Link; 4] = [
    Link {
        endpoints: (Actor::VictimPc, Actor::Adversary),
        trust: Trust::Unsafe,
    },
    Link {
        endpoints: (Actor::Adversary, Actor::Server),
        trust: Trust::Unsafe,
    },
    Link {
        endpoints: (Actor::VictimPc, Actor::Server),
        trust: Trust::Unsafe,
    },
    Link {
        endpoints: (Actor::VictimPhone, Actor::Server),
        trust: Trust::Safe,
    },
];

fn link_between(a: Actor, b: Actor) -> Link {
    *LINKS
        .iter()
        .find(|l| l.endpoints == (a, b) || l.endpoints == (b, a))
        .unwrap_or_else(|| panic!("no link between {a:?} and {b:?}"))
}

/// Browser cookie storage under the same-origin policy: a cookie is only
/// ever attached to requests for the exact origin that set it.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CookieJar {
    cookies: BTreeMap<DomainName, String>,
}

impl CookieJar {
    pub fn store(&mut self, origin: &DomainName, value: &str) {
        self.cookies.insert(origin.clone(), value.to_string());
    }

    pub fn cookie_for(&self, destination: &DomainName) -> Option<&str> {
        self.cookies.get(destination).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.cookies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cookies.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewriteRule {
    pub from: String,
    pub to: String,
}

/// The adversary's man-in-the-middle site.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RtpProxy {
    pub fake_domain: DomainName,
    pub upstream: DomainName,
    /// Extra substitutions on top of upstream → fake domain.
    #[serde(default)]
    pub rewrite_rules: Vec<RewriteRule>,
    /// What the fake page shows besides the proxied content.
    #[serde(default = "genuine")]
    pub injection: LayoutVariant,
    /// Pass the real server's Set-Cookie through to the victim.
    #[serde(default = "yes")]
    pub forward_cookies: bool,
}

fn genuine() -> LayoutVariant {
    LayoutVariant::Genuine
}
fn yes() -> bool {
    true
}

impl RtpProxy {
    pub fn new(fake_domain: DomainName, upstream: DomainName) -> Self {
        Self {
            fake_domain,
            upstream,
            rewrite_rules: Vec::new(),
            injection: LayoutVariant::Genuine,
            forward_cookies: true,
        }
    }

    /// Rewrites content flowing from the real server to the victim.
    pub fn rewrite_outbound(&self, content: &str) -> String {
        let mut out = content.replace(self.upstream.ascii().as_str(), self.fake_domain.unicode());
        for r in &self.rewrite_rules {
            out = out.replace(&r.from, &r.to);
        }
        out
    }

    /// Rewrites content flowing from the victim to the real server.
    pub fn rewrite_inbound(&self, content: &str) -> String {
        let mut out = content.to_string();
        for r in self.rewrite_rules.iter().rev() {
            out = out.replace(&r.to, &r.from);
        }
        out.replace(self.fake_domain.unicode(), &self.upstream.ascii())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    Photoauth,
    /// Classic one-time code typed into the browser, kept as a contrast.
    Otp,
}

fn victim_pc() -> Actor {
    Actor::VictimPc
}
fn victim_phone() -> Actor {
    Actor::VictimPhone
}
fn light() -> Vec<Theme> {
    vec![Theme::Light]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum Event {
    /// A browser navigates to a domain.
    Visit {
        #[serde(default = "victim_pc")]
        actor: Actor,
        domain: String,
    },
    /// Credentials typed into whatever page the browser shows.
    SubmitLogin {
        #[serde(default = "victim_pc")]
        actor: Actor,
    },
    /// The phone opens the most recent short link it received.
    ClickLink {
        #[serde(default = "victim_phone")]
        actor: Actor,
    },
    /// The phone photographs the PC browser and uploads the analysis,
    /// retaking on request. The user stops when warned.
    PhotographAndUpload {
        #[serde(default = "light")]
        themes: Vec<Theme>,
    },
    /// The adversary sends the victim's browser to another domain.
    Redirect { to: String },
    /// A browser reloads the page it shows, presenting its cookie.
    Revisit {
        #[serde(default = "victim_pc")]
        actor: Actor,
    },
    /// The adversary presents its own cookie to the real server.
    AdversaryUseCookie,
    /// The adversary tries random short-link tokens.
    GuessTokens { count: u64 },
    /// The user types the one-time code into the PC browser.
    EnterOtp,
    /// Logical time passes.
    Wait { ms: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum Outcome {
    Authorized { by: Party },
    AttackDetected,
    AttackBlocked { reason: String },
    /// Nothing was authorized, detected or blocked.
    Unresolved,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Authorized { by: Party::Victim } => write!(f, "Authorized(victim)"),
            Outcome::Authorized { by: Party::Adversary } => write!(f, "Authorized(adversary)"),
            Outcome::AttackDetected => write!(f, "AttackDetected"),
            Outcome::AttackBlocked { reason } => write!(f, "AttackBlocked({reason})"),
            Outcome::Unresolved => write!(f, "Unresolved"),
        }
    }
}

fn default_actors() -> Vec<Actor> {
    vec![Actor::VictimPc, Actor::VictimPhone, Actor::Adversary, Actor::Server]
}
fn default_server_domains() -> Vec<String> {
    vec!["microsoft.com".into(), "www.microsoft.com".into()]
}
fn default_user() -> String {
    "bob".into()
}
fn default_profile() -> DetectorProfile {
    DetectorProfile::oracle()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default = "default_actors")]
    pub actors: Vec<Actor>,
    pub events: Vec<Event>,
    #[serde(default)]
    pub expected_outcome: Option<Outcome>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default = "default_server_domains")]
    pub server_domains: Vec<String>,
    #[serde(default = "default_user")]
    pub username: String,
    #[serde(default)]
    pub preference: Option<Preference>,
    #[serde(default)]
    pub proxy: Option<RtpProxy>,
    #[serde(default = "default_profile")]
    pub detector: DetectorProfile,
    #[serde(default)]
    pub colocation: ColocationPolicy,
    #[serde(default)]
    pub session: Option<SessionConfig>,
}

impl Scenario {
    pub fn from_json(s: &str) -> Result<Self, SimError> {
        serde_json::from_str(s).map_err(|e| SimError::Json(e.to_string()))
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrailEntry {
    pub step: usize,
    pub actor: Actor,
    pub session: Option<SessionId>,
    /// Party that holds the session the decision is about.
    pub beneficiary: Option<Party>,
    pub decision: AuthDecision,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogEntry {
    pub seq: usize,
    pub t_ms: u64,
    pub from: Actor,
    pub to: Actor,
    pub link: Trust,
    pub kind: String,
    /// Domain the request is addressed to, for browser requests.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub destination: Option<String>,
    /// Origin under which the attached cookie was stored.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cookie_origin: Option<String>,
    pub detail: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub name: String,
    pub seed: u64,
    pub outcome: Outcome,
    pub expected_outcome: Option<Outcome>,
    pub photos_taken: u32,
    pub trail: Vec<TrailEntry>,
    pub log: Vec<LogEntry>,
}

impl ScenarioReport {
    pub fn met_expectation(&self) -> bool {
        self.expected_outcome.as_ref().is_none_or(|e| *e == self.outcome)
    }

    pub fn adversary_authorized(&self) -> bool {
        self.outcome == Outcome::Authorized { by: Party::Adversary }
            || self
                .trail
                .iter()
                .any(|t| t.decision == AuthDecision::Authorize && t.beneficiary == Some(Party::Adversary))
    }

    pub fn log_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.log {
            out.push_str(&serde_json::to_string(e).expect("log entries serialize"));
            out.push('\n');
        }
        out
    }

    /// Summary without the message log.
    pub fn summary(&self) -> Value {
        json!({
            "name": self.name,
            "seed": self.seed,
            "outcome": self.outcome,
            "expected_outcome": self.expected_outcome,
            "photos_taken": self.photos_taken,
            "trail": self.trail,
        })
    }
}

struct OtpSession {
    owner: Actor,
    code: String,
    authorized: bool,
}

enum Backend {
    Photo(Engine),
    Otp {
        rng: ChaCha20Rng,
        sessions: Vec<OtpSession>,
    },
}

enum PhoneMessage {
    Link(String),
    Code(String),
}

struct Sim<'a> {
    sc: &'a Scenario,
    backend: Backend,
    clock: Arc<ManualClock>,
    origin: DomainName,
    real: Vec<DomainName>,
    jars: BTreeMap<Actor, CookieJar>,
    views: BTreeMap<Actor, DomainName>,
    inbox: Vec<PhoneMessage>,
    owners: HashMap<SessionId, Actor>,
    adversary_rng: ChaCha8Rng,
    log: Vec<LogEntry>,
    trail: Vec<TrailEntry>,
    blocked: Option<String>,
    detected: bool,
    photos: u32,
    step: usize,
}

const EVENT_MS: u64 = 1_000;
const PHOTO_MS: u64 = 5_000;

impl<'a> Sim<'a> {
    fn new(sc: &'a Scenario) -> Result<Self, SimError> {
        let real = sc
            .server_domains
            .iter()
            .map(|d| DomainName::parse(d).map_err(|e| invalid(format!("server domain {d:?}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let origin = real.first().cloned().ok_or_else(|| invalid("no server domains"))?;
        if let Some(p) = &sc.proxy {
            if real.contains(&p.fake_domain) {
                return Err(invalid("proxy fake_domain must differ from the server domains"));
            }
            if !real.contains(&p.upstream) {
                return Err(invalid("proxy upstream must be a server domain"));
            }
        }
        sc.detector.validate().map_err(|e| invalid(e.to_string()))?;
        for a in [Actor::VictimPc, Actor::VictimPhone, Actor::Server] {
            if !sc.actors.contains(&a) {
                return Err(invalid(format!("actor {a:?} is required")));
            }
        }
        if sc.proxy.is_some() && !sc.actors.contains(&Actor::Adversary) {
            return Err(invalid("a proxy needs the adversary actor"));
        }

        let clock = Arc::new(ManualClock::new(0));
        let backend = match sc.scheme {
            Scheme::Photoauth => {
                let store = SessionStore::new(
                    origin.clone(),
                    sc.session.unwrap_or_default(),
                    ChaCha20Rng::seed_from_u64(mix_seed(sc.seed, 0)),
                    clock.clone() as Arc<dyn Clock>,
                );
                let users = BTreeMap::from([(sc.username.clone(), sc.preference.unwrap_or(Preference::Sms))]);
                Backend::Photo(Engine::new(
                    Arc::new(store),
                    EngineConfig {
                        accept: AcceptSet::new(real.iter().cloned()).expect("non-empty"),
                        policy: sc.colocation,
                        verify: VerifyConfig::default(),
                        target_resolution: Resolution::FULL_HD,
                        users,
                    },
                ))
            }
            Scheme::Otp => Backend::Otp {
                rng: ChaCha20Rng::seed_from_u64(mix_seed(sc.seed, 0)),
                sessions: Vec::new(),
            },
        };
        Ok(Self {
            sc,
            backend,
            clock,
            origin,
            real,
            jars: BTreeMap::new(),
            views: BTreeMap::new(),
            inbox: Vec::new(),
            owners: HashMap::new(),
            adversary_rng: ChaCha8Rng::seed_from_u64(mix_seed(sc.seed, 3)),
            log: Vec::new(),
            trail: Vec::new(),
            blocked: None,
            detected: false,
            photos: 0,
            step: 0,
        })
    }

    fn engine(&self) -> Result<&Engine, SimError> {
        match &self.backend {
            Backend::Photo(e) => Ok(e),
            Backend::Otp { .. } => Err(invalid("event needs the photoauth scheme")),
        }
    }

    fn send(&mut self, from: Actor, to: Actor, kind: &str, destination: Option<&DomainName>, detail: Value) {
        let link = link_between(from, to);
        let cookie_origin = destination
            .filter(|d| self.jars.get(&from).and_then(|j| j.cookie_for(d)).is_some())
            .map(|d| d.ascii());
        self.log.push(LogEntry {
            seq: self.log.len(),
            t_ms: self.clock.now_ms(),
            from,
            to,
            link: link.trust,
            kind: kind.to_string(),
            destination: destination.map(|d| d.ascii()),
            cookie_origin,
            detail,
        });
    }

    fn record(&mut self, actor: Actor, session: Option<SessionId>, decision: AuthDecision) {
        let beneficiary = session.and_then(|s| self.owners.get(&s)).map(|a| a.party());
        self.trail.push(TrailEntry {
            step: self.step,
            actor,
            session,
            beneficiary,
            decision,
        });
    }

    fn block(&mut self, reason: &str) {
        if self.blocked.is_none() {
            self.blocked = Some(reason.to_string());
        }
    }

    fn parse_domain(&self, s: &str) -> Result<DomainName, SimError> {
        DomainName::parse(s).map_err(|e| invalid(format!("domain {s:?}: {e}")))
    }

    fn view(&self, actor: Actor) -> Result<DomainName, SimError> {
        self.views
            .get(&actor)
            .cloned()
            .ok_or_else(|| invalid(format!("{actor:?} has not visited any page")))
    }

    fn is_fake(&self, d: &DomainName) -> bool {
        self.sc.proxy.as_ref().is_some_and(|p| p.fake_domain == *d)
    }

    fn proxy(&self) -> &RtpProxy {
        self.sc.proxy.as_ref().expect("checked by is_fake")
    }

    fn jar(&mut self, actor: Actor) -> &mut CookieJar {
        self.jars.entry(actor).or_default()
    }

    fn cookie(&self, actor: Actor, d: &DomainName) -> Option<String> {
        self.jars.get(&actor).and_then(|j| j.cookie_for(d)).map(str::to_string)
    }

    fn run(mut self) -> Result<ScenarioReport, SimError> {
        for (i, event) in self.sc.events.iter().enumerate() {
            self.step = i;
            self.apply(event)?;
            self.clock.advance(EVENT_MS);
        }
        let outcome = self.outcome();
        Ok(ScenarioReport {
            name: self.sc.name.clone(),
            seed: self.sc.seed,
            outcome,
            expected_outcome: self.sc.expected_outcome.clone(),
            photos_taken: self.photos,
            trail: self.trail,
            log: self.log,
        })
    }

    fn outcome(&self) -> Outcome {
        let authorized: Vec<Actor> = match &self.backend {
            Backend::Photo(e) => {
                let mut ids: Vec<_> = self.owners.iter().collect();
                ids.sort();
                ids.into_iter()
                    .filter(|(id, _)| e.session_state(**id) == Some(SessionState::Authorized))
                    .map(|(_, a)| *a)
                    .collect()
            }
            Backend::Otp { sessions, .. } => sessions.iter().filter(|s| s.authorized).map(|s| s.owner).collect(),
        };
        if authorized.iter().any(|a| a.party() == Party::Adversary) {
            Outcome::Authorized { by: Party::Adversary }
        } else if !authorized.is_empty() {
            Outcome::Authorized { by: Party::Victim }
        } else if self.detected {
            Outcome::AttackDetected
        } else if let Some(reason) = &self.blocked {
            Outcome::AttackBlocked { reason: reason.clone() }
        } else {
            Outcome::Unresolved
        }
    }

    fn apply(&mut self, event: &Event) -> Result<(), SimError> {
        match event {
            Event::Visit { actor, domain } => {
                let d = self.parse_domain(domain)?;
                self.visit(*actor, d)
            }
            Event::SubmitLogin { actor } => self.submit_login(*actor),
            Event::ClickLink { actor } => self.click_link(*actor),
            Event::PhotographAndUpload { themes } => self.photograph(themes),
            Event::Redirect { to } => {
                let d = self.parse_domain(to)?;
                let from = self.view(Actor::VictimPc)?;
                if !self.is_fake(&from) {
                    return Err(invalid("only the adversary's page can redirect the victim"));
                }
                self.send(Actor::Adversary, Actor::VictimPc, "redirect", None, json!({ "location": d.ascii() }));
                self.visit(Actor::VictimPc, d)?;
                self.revisit(Actor::VictimPc)
            }
            Event::Revisit { actor } => self.revisit(*actor),
            Event::AdversaryUseCookie => self.adversary_use_cookie(),
            Event::GuessTokens { count } => self.guess_tokens(*count),
            Event::EnterOtp => self.enter_otp(),
            Event::Wait { ms } => {
                self.clock.advance(*ms);
                Ok(())
            }
        }
    }

    fn visit(&mut self, actor: Actor, d: DomainName) -> Result<(), SimError> {
        if actor == Actor::VictimPhone && self.is_fake(&d) {
            return Err(invalid("the phone only talks to the real server"));
        }
        if ![Actor::VictimPc, Actor::VictimPhone].contains(&actor) {
            return Err(invalid("only victim browsers visit pages"));
        }
        if self.is_fake(&d) {
            self.send(actor, Actor::Adversary, "http-get", Some(&d), json!({ "path": "/" }));
            let upstream = self.proxy().upstream.clone();
            self.send(Actor::Adversary, Actor::Server, "http-get", Some(&upstream), json!({ "path": "/" }));
            let page = self.proxy().rewrite_outbound(&format!("sign in to {}", upstream.ascii()));
            self.send(Actor::Adversary, actor, "http-response", None, json!({ "page": page }));
        } else if self.real.contains(&d) {
            self.send(actor, Actor::Server, "http-get", Some(&d), json!({ "path": "/" }));
        } else {
            return Err(invalid(format!("nobody serves {}", d.ascii())));
        }
        self.views.insert(actor, d);
        Ok(())
    }

    fn channel(actor: Actor) -> Channel {
        if actor == Actor::VictimPhone {
            Channel::PhoneBrowser
        } else {
            Channel::PcBrowser
        }
    }

    /// Sends a login or cookie-only request to the real server on behalf of
    /// `client`, which is either a victim browser or the adversary.
    fn server_login(
        &mut self,
        client: Actor,
        dest: &DomainName,
        username: Option<String>,
        channel: Channel,
    ) -> Result<AuthDecision, SimError> {
        let cookie = self.cookie(client, dest);
        self.send(
            client,
            Actor::Server,
            "login",
            Some(dest),
            json!({ "username": username, "with_password": username.is_some() }),
        );
        let req = AuthRequest {
            presented_cookie: cookie.clone(),
            username,
            source_address: client.address(),
            channel,
        };
        let engine = self.engine()?;
        let decision = engine.handle_auth_request(&req)?;
        let notes = engine.drain_notifications();
        let session = match &decision {
            AuthDecision::LinkSent { session_id, .. } => Some(*session_id),
            _ => cookie.as_deref().and_then(|c| engine.store().by_cookie(c)).map(|s| s.id),
        };
        if let AuthDecision::LinkSent { session_id, cookie, .. } = &decision {
            self.owners.insert(*session_id, client);
            self.jar(client).store(dest, cookie);
        }
        self.send(Actor::Server, client, "login-response", None, json!(decision));
        for n in notes {
            // phone delivery is the safe link; the adversary is not an endpoint
            self.send(Actor::Server, Actor::VictimPhone, "notification", None, json!({ "via": n.via, "link": n.link }));
            self.inbox.push(PhoneMessage::Link(n.link));
        }
        self.record(client, session, decision.clone());
        Ok(decision)
    }

    fn otp_login(&mut self, owner: Actor) -> Result<(), SimError> {
        let Backend::Otp { rng, sessions } = &mut self.backend else {
            return Err(invalid("not an otp scenario"));
        };
        let code = format!("{:06}", rng.gen_range(0..1_000_000u32));
        sessions.push(OtpSession {
            owner,
            code: code.clone(),
            authorized: false,
        });
        self.send(Actor::Server, Actor::VictimPhone, "notification", None, json!({ "otp": "******" }));
        self.inbox.push(PhoneMessage::Code(code));
        Ok(())
    }

    fn submit_login(&mut self, actor: Actor) -> Result<(), SimError> {
        let view = self.view(actor)?;
        let username = self.sc.username.clone();
        if self.is_fake(&view) {
            // credentials go to the adversary, who replays them upstream
            self.send(actor, Actor::Adversary, "login", Some(&view), json!({ "username": username }));
            let upstream = self.proxy().upstream.clone();
            match self.sc.scheme {
                Scheme::Photoauth => {
                    let decision = self.server_login(Actor::Adversary, &upstream, Some(username), Channel::PcBrowser)?;
                    let shown = self.proxy().rewrite_outbound(&serde_json::to_string(&decision).unwrap_or_default());
                    self.send(Actor::Adversary, actor, "login-response", None, json!({ "page": shown }));
                    if let AuthDecision::LinkSent { cookie, .. } = &decision {
                        if self.proxy().forward_cookies {
                            // the browser files it under the origin that sent it
                            let fake = view.clone();
                            self.jar(actor).store(&fake, cookie);
                        }
                    }
                }
                Scheme::Otp => {
                    self.send(Actor::Adversary, Actor::Server, "login", Some(&upstream), json!({ "username": username }));
                    self.otp_login(Actor::Adversary)?;
                }
            }
        } else if self.real.contains(&view) {
            match self.sc.scheme {
                Scheme::Photoauth => {
                    self.server_login(actor, &view, Some(username), Self::channel(actor))?;
                }
                Scheme::Otp => {
                    self.send(actor, Actor::Server, "login", Some(&view), json!({ "username": username }));
                    self.otp_login(actor)?;
                }
            }
        }
        Ok(())
    }

    fn latest_link(&self) -> Option<String> {
        self.inbox.iter().rev().find_map(|m| match m {
            PhoneMessage::Link(l) => Some(l.clone()),
            PhoneMessage::Code(_) => None,
        })
    }

    fn token_of(link: &str) -> String {
        link.rsplit("/c/").next().unwrap_or("").to_string()
    }

    fn click_link(&mut self, actor: Actor) -> Result<(), SimError> {
        if actor != Actor::VictimPhone {
            return Err(invalid("short links arrive on the phone"));
        }
        let Some(link) = self.latest_link() else {
            return Err(invalid("the phone has no short link"));
        };
        let origin = self.origin.clone();
        let digits = Self::token_of(&link);
        self.send(actor, Actor::Server, "link-click", Some(&origin), json!({ "path": format!("/c/{digits}") }));
        let click = LinkClick {
            token_digits: digits.clone(),
            presented_cookie: self.cookie(actor, &origin),
            source_address: actor.address(),
        };
        let engine = self.engine()?;
        let session = engine.store().resolve_token(&digits).map(|s| s.id);
        let decision = engine.handle_link_click(&click)?;
        self.send(Actor::Server, actor, "link-response", None, json!(decision));
        self.record(actor, session, decision);
        Ok(())
    }

    fn photograph(&mut self, themes: &[Theme]) -> Result<(), SimError> {
        let Some(link) = self.latest_link() else {
            return Err(invalid("the phone has no short link"));
        };
        if themes.is_empty() {
            return Err(invalid("themes must not be empty"));
        }
        let shown = self.view(Actor::VictimPc)?;
        let variant = if self.is_fake(&shown) {
            self.proxy().injection.clone()
        } else {
            LayoutVariant::Genuine
        };
        let digits = Self::token_of(&link);
        let origin = self.origin.clone();
        let cap = self.engine()?.store().config().retake_cap;
        for attempt in 0..=cap as usize {
            let theme = themes[attempt % themes.len()];
            let layout = generate_layout(&shown, theme, &variant, mix_seed(self.sc.seed, 1000 + u64::from(self.photos)));
            let analysis = simulate_detection(&layout, &self.sc.detector);
            self.photos += 1;
            self.clock.advance(PHOTO_MS);
            self.send(
                Actor::VictimPhone,
                Actor::Server,
                "photo-upload",
                Some(&origin),
                json!({ "path": format!("/c/{digits}/photo"), "theme": theme, "texts": analysis.texts().len(), "addrbars": analysis.addrbars().len() }),
            );
            let engine = self.engine()?;
            let session = engine.store().resolve_token(&digits).map(|s| s.id);
            let decision = match engine.handle_photo_submission(&digits, Actor::VictimPhone.address(), &analysis) {
                Ok(d) => d,
                Err(DecisionError::InvalidState(state)) => {
                    self.send(Actor::Server, Actor::VictimPhone, "photo-response", None, json!({ "error": "not-awaiting-photo", "state": state }));
                    return Ok(());
                }
                Err(e) => return Err(e.into()),
            };
            self.send(Actor::Server, Actor::VictimPhone, "photo-response", None, json!(decision));
            self.record(Actor::VictimPhone, session, decision.clone());
            match decision {
                AuthDecision::RequestRetake { warning: true, reason, .. } => {
                    // the user heeds the phishing warning and stops
                    self.block(reason.code());
                    return Ok(());
                }
                AuthDecision::RequestRetake { .. } => continue,
                AuthDecision::Deny {
                    reason: DenyReason::PhishingDetected,
                } => {
                    self.detected = true;
                    return Ok(());
                }
                AuthDecision::Deny { reason } => {
                    self.block(reason.code());
                    return Ok(());
                }
                AuthDecision::Fallback => {
                    self.block("fallback");
                    return Ok(());
                }
                _ => return Ok(()),
            }
        }
        Ok(())
    }

    fn revisit(&mut self, actor: Actor) -> Result<(), SimError> {
        let view = self.view(actor)?;
        if self.is_fake(&view) {
            // the proxy answers with the adversary's own upstream session
            self.send(actor, Actor::Adversary, "http-get", Some(&view), json!({ "path": "/" }));
            return self.adversary_use_cookie();
        }
        let decision = self.server_login(actor, &view, None, Self::channel(actor))?;
        if decision == AuthDecision::BadRequest {
            self.block("no-valid-cookie");
        }
        Ok(())
    }

    fn adversary_use_cookie(&mut self) -> Result<(), SimError> {
        let upstream = match &self.sc.proxy {
            Some(p) => p.upstream.clone(),
            None => return Err(invalid("no adversary proxy configured")),
        };
        if let Backend::Otp { .. } = self.backend {
            return Ok(());
        }
        self.server_login(Actor::Adversary, &upstream, None, Channel::PcBrowser)?;
        Ok(())
    }

    fn guess_tokens(&mut self, count: u64) -> Result<(), SimError> {
        let upstream = match &self.sc.proxy {
            Some(p) => p.upstream.clone(),
            None => return Err(invalid("no adversary proxy configured")),
        };
        let engine = self.engine()?;
        let len = engine.store().config().token_length;
        let cookie = self.cookie(Actor::Adversary, &upstream);
        let mut tried = HashSet::new();
        let (mut lookups, mut throttled) = (0u64, 0u64);
        let mut hit = None;
        while (tried.len() as u64) < count && hit.is_none() {
            let guess = ShortLinkToken::generate(&mut self.adversary_rng, len)
                .map_err(|e| invalid(e.to_string()))?
                .digits()
                .to_string();
            if !tried.insert(guess.clone()) {
                continue;
            }
            loop {
                let click = LinkClick {
                    token_digits: guess.clone(),
                    presented_cookie: cookie.clone(),
                    source_address: Actor::Adversary.address(),
                };
                lookups += 1;
                let engine = self.engine()?;
                match engine.handle_link_click(&click)? {
                    AuthDecision::Deny {
                        reason: DenyReason::RateLimited,
                    } => {
                        throttled += 1;
                        self.clock.advance(EVENT_MS);
                    }
                    AuthDecision::Deny {
                        reason: DenyReason::UnknownToken,
                    } => break,
                    d => {
                        let session = engine.store().resolve_token(&guess).map(|s| s.id);
                        hit = Some((session, d));
                        break;
                    }
                }
            }
        }
        self.send(
            Actor::Adversary,
            Actor::Server,
            "token-guesses",
            Some(&upstream),
            json!({ "distinct": tried.len(), "lookups": lookups, "throttled": throttled, "hit": hit.is_some() }),
        );
        match hit {
            Some((session, d)) => self.record(Actor::Adversary, session, d),
            None => {
                self.record(Actor::Adversary, None, AuthDecision::Deny { reason: DenyReason::UnknownToken });
                self.block(DenyReason::UnknownToken.code());
            }
        }
        Ok(())
    }

    fn enter_otp(&mut self) -> Result<(), SimError> {
        let code = self
            .inbox
            .iter()
            .rev()
            .find_map(|m| match m {
                PhoneMessage::Code(c) => Some(c.clone()),
                PhoneMessage::Link(_) => None,
            })
            .ok_or_else(|| invalid("the phone has no one-time code"))?;
        let view = self.view(Actor::VictimPc)?;
        let via_proxy = self.is_fake(&view);
        let submitter = if via_proxy {
            self.send(Actor::VictimPc, Actor::Adversary, "otp-entry", Some(&view), json!({ "code": "******" }));
            let upstream = self.proxy().upstream.clone();
            self.send(Actor::Adversary, Actor::Server, "otp-entry", Some(&upstream), json!({ "code": "******" }));
            Actor::Adversary
        } else {
            self.send(Actor::VictimPc, Actor::Server, "otp-entry", Some(&view), json!({ "code": "******" }));
            Actor::VictimPc
        };
        let Backend::Otp { sessions, .. } = &mut self.backend else {
            return Err(invalid("not an otp scenario"));
        };
        // the code authorizes whichever pending session it was issued for
        let decision = match sessions.iter_mut().rev().find(|s| !s.authorized && s.code == code && s.owner == submitter) {
            Some(s) => {
                s.authorized = true;
                AuthDecision::Authorize
            }
            None => AuthDecision::Deny {
                reason: DenyReason::UnknownToken,
            },
        };
        let beneficiary = (decision == AuthDecision::Authorize).then(|| submitter.party());
        self.send(Actor::Server, submitter, "otp-response", None, json!(decision));
        self.trail.push(TrailEntry {
            step: self.step,
            actor: submitter,
            session: None,
            beneficiary,
            decision,
        });
        Ok(())
    }
}

/// Runs a scenario to completion.
pub fn run_scenario(scenario: &Scenario) -> Result<ScenarioReport, SimError> {
    Sim::new(scenario)?.run()
}

fn ev_visit(actor: Actor, domain: &str) -> Event {
    Event::Visit {
        actor,
        domain: domain.to_string(),
    }
}

fn base_scenario(name: &str, seed: u64, server_domains: &[&str], profile: DetectorProfile) -> Scenario {
    Scenario {
        name: name.to_string(),
        actors: default_actors(),
        events: Vec::new(),
        expected_outcome: None,
        seed,
        scheme: Scheme::Photoauth,
        server_domains: server_domains.iter().map(|s| s.to_string()).collect(),
        username: default_user(),
        preference: None,
        proxy: None,
        detector: profile,
        colocation: ColocationPolicy::CookieEquality,
        session: None,
    }
}

/// Victim logs in on the real site and completes the photo step.
pub fn benign_scenario(seed: u64, profile: DetectorProfile, themes: Vec<Theme>) -> Scenario {
    let mut s = base_scenario("benign-login", seed, &["microsoft.com", "www.microsoft.com"], profile);
    s.events = vec![
        ev_visit(Actor::VictimPc, "www.microsoft.com"),
        Event::SubmitLogin { actor: Actor::VictimPc },
        Event::ClickLink { actor: Actor::VictimPhone },
        Event::PhotographAndUpload { themes },
        Event::Revisit { actor: Actor::VictimPc },
    ];
    s.expected_outcome = Some(Outcome::Authorized { by: Party::Victim });
    s
}

pub fn run_benign_login(seed: u64, profile: DetectorProfile) -> Result<ScenarioReport, SimError> {
    run_scenario(&benign_scenario(seed, profile, light()))
}

/// Victim signs in from the phone's own browser, so the short link opens
/// where the cookie already is.
pub fn phone_login_scenario(seed: u64) -> Scenario {
    let mut s = base_scenario("phone-login", seed, &["microsoft.com", "www.microsoft.com"], DetectorProfile::oracle());
    s.events = vec![
        ev_visit(Actor::VictimPhone, "microsoft.com"),
        Event::SubmitLogin { actor: Actor::VictimPhone },
        Event::ClickLink { actor: Actor::VictimPhone },
    ];
    s.expected_outcome = Some(Outcome::Authorized { by: Party::Victim });
    s
}

fn rtp_base(name: &str, seed: u64, fake: &str, upstream: &str, profile: DetectorProfile) -> Result<Scenario, SimError> {
    let up = DomainName::parse(upstream).map_err(|e| invalid(e.to_string()))?;
    let fk = DomainName::parse(fake).map_err(|e| invalid(e.to_string()))?;
    if up == fk {
        return Err(invalid("fake domain equals the upstream domain"));
    }
    let www = format!("www.{}", up.ascii());
    let mut s = base_scenario(name, seed, &[upstream, &www], profile);
    s.proxy = Some(RtpProxy::new(fk, up));
    Ok(s)
}

/// Victim falls for a reverse proxy at `fake`, which relays to `upstream`.
pub fn rtp_scenario(seed: u64, fake: &str, upstream: &str, profile: DetectorProfile) -> Result<Scenario, SimError> {
    let mut s = rtp_base("rtp-attack", seed, fake, upstream, profile)?;
    s.events = vec![
        ev_visit(Actor::VictimPc, fake),
        Event::SubmitLogin { actor: Actor::VictimPc },
        Event::ClickLink { actor: Actor::VictimPhone },
        Event::PhotographAndUpload { themes: light() },
        Event::AdversaryUseCookie,
    ];
    s.expected_outcome = Some(Outcome::AttackDetected);
    Ok(s)
}

pub fn run_rtp_attack(seed: u64, fake: &str, upstream: &str, profile: DetectorProfile) -> Result<ScenarioReport, SimError> {
    run_scenario(&rtp_scenario(seed, fake, upstream, profile)?)
}

/// The proxy relays the login and, instead of waiting, tries `guesses`
/// random short-link tokens with its own cookie.
pub fn token_bruteforce_scenario(seed: u64, guesses: u64) -> Result<Scenario, SimError> {
    let mut s = rtp_base("token-bruteforce", seed, "microsoft1.com", "microsoft.com", DetectorProfile::oracle())?;
    s.events = vec![
        ev_visit(Actor::VictimPc, "microsoft1.com"),
        Event::SubmitLogin { actor: Actor::VictimPc },
        Event::GuessTokens { count: guesses },
        Event::AdversaryUseCookie,
    ];
    s.expected_outcome = Some(Outcome::AttackBlocked {
        reason: "unknown-token".into(),
    });
    Ok(s)
}

pub fn redirection_scenario(seed: u64) -> Scenario {
    let mut s = rtp_base("redirection-attack", seed, "microsoft1.com", "microsoft.com", DetectorProfile::oracle())
        .expect("fixed domains differ");
    s.events = vec![
        ev_visit(Actor::VictimPc, "microsoft1.com"),
        Event::SubmitLogin { actor: Actor::VictimPc },
        Event::Redirect {
            to: "microsoft.com".into(),
        },
        Event::AdversaryUseCookie,
    ];
    s.expected_outcome = Some(Outcome::AttackBlocked {
        reason: "no-valid-cookie".into(),
    });
    s
}

/// After relaying the login, the adversary forwards the real cookie and
/// redirects the victim to the real site so a photo would show the real
/// domain.
pub fn run_redirection_attack(seed: u64) -> Result<ScenarioReport, SimError> {
    run_scenario(&redirection_scenario(seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Placement {
    Title,
    PageContent,
    PictureInPicture,
}

pub fn injection_scenario(seed: u64, placement: Placement, profile: DetectorProfile) -> Scenario {
    let mut s = rtp_scenario(seed, "microsoft1.com", "microsoft.com", profile).expect("fixed domains differ");
    s.name = format!("injection-{}", serde_json::to_value(placement).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default());
    let shown = "microsoft.com".to_string();
    let proxy = s.proxy.as_mut().expect("rtp scenario has a proxy");
    proxy.injection = match placement {
        Placement::Title => LayoutVariant::TitleInjection(shown),
        Placement::PageContent => LayoutVariant::ContentInjection(shown),
        Placement::PictureInPicture => LayoutVariant::PictureInPicture(format!("https://{shown}/login")),
    };
    s.expected_outcome = Some(match placement {
        Placement::PictureInPicture => Outcome::AttackBlocked {
            reason: "multiple-addrbars".into(),
        },
        _ => Outcome::AttackDetected,
    });
    s
}

/// The fake page additionally displays the real domain somewhere a photo
/// would capture it.
pub fn run_injection_attack(seed: u64, placement: Placement, profile: DetectorProfile) -> Result<ScenarioReport, SimError> {
    run_scenario(&injection_scenario(seed, placement, profile))
}

pub fn otp_baseline_scenario(seed: u64) -> Scenario {
    let mut s = rtp_base("otp-baseline", seed, "microsoft1.com", "microsoft.com", DetectorProfile::oracle())
        .expect("fixed domains differ");
    s.scheme = Scheme::Otp;
    s.events = vec![
        ev_visit(Actor::VictimPc, "microsoft1.com"),
        Event::SubmitLogin { actor: Actor::VictimPc },
        Event::EnterOtp,
    ];
    s.expected_outcome = Some(Outcome::Authorized { by: Party::Adversary });
    s
}

/// The same proxy against a typed one-time code.
pub fn run_otp_baseline(seed: u64) -> Result<ScenarioReport, SimError> {
    run_scenario(&otp_baseline_scenario(seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TokenGuessStats {
    pub trials: u64,
    pub guesses_per_trial: u64,
    pub token_length: usize,
    pub hits: u64,
}

impl TokenGuessStats {
    /// Chance that one trial hits: guesses / 10^length.
    pub fn per_trial_probability(&self) -> f64 {
        self.guesses_per_trial as f64 / 10f64.powi(self.token_length as i32)
    }
}

/// Monte-Carlo estimate of how often an adversary holding `guesses`
/// distinct tokens hits one freshly issued token. Each trial draws a token
/// with the same generator the session store uses.
pub fn token_guess_trials(trials: u64, guesses: u64, token_length: usize, seed: u64) -> Result<TokenGuessStats, SimError> {
    if !(ShortLinkToken::MIN_LEN..=ShortLinkToken::MAX_LEN).contains(&token_length) {
        return Err(invalid(format!("token length {token_length}")));
    }
    if guesses as f64 >= 10f64.powi(token_length as i32) {
        return Err(invalid("more guesses than tokens"));
    }
    let mut adversary = ChaCha8Rng::seed_from_u64(mix_seed(seed, 1));
    let mut set = HashSet::with_capacity(guesses as usize);
    while (set.len() as u64) < guesses {
        let t = ShortLinkToken::generate(&mut adversary, token_length).map_err(|e| invalid(e.to_string()))?;
        set.insert(t.digits().to_string());
    }
    let mut server = ChaCha20Rng::seed_from_u64(mix_seed(seed, 2));
    let mut hits = 0;
    for _ in 0..trials {
        let t = ShortLinkToken::generate(&mut server, token_length).map_err(|e| invalid(e.to_string()))?;
        if set.contains(t.digits()) {
            hits += 1;
        }
    }
    Ok(TokenGuessStats {
        trials,
        guesses_per_trial: guesses,
        token_length,
        hits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{AddrBarModel, OcrModel};
    use crate::verify::RetakeReason;

    fn dn(s: &str) -> DomainName {
        DomainName::parse(s).unwrap()
    }

    fn decisions(r: &ScenarioReport) -> Vec<&AuthDecision> {
        r.trail.iter().map(|t| &t.decision).collect()
    }

    #[test]
    fn benign_oracle_login_authorizes_victim() {
        let r = run_benign_login(1, DetectorProfile::oracle()).unwrap();
        assert_eq!(r.outcome, Outcome::Authorized { by: Party::Victim });
        assert!(r.met_expectation());
        assert_eq!(r.photos_taken, 1);
        // the revisit presents the real-origin cookie and is let straight in
        assert_eq!(r.trail.last().unwrap().decision, AuthDecision::Authorize);
        assert_eq!(r.trail.last().unwrap().beneficiary, Some(Party::Victim));
    }

    #[test]
    fn dark_dot_drop_retakes_then_authorizes() {
        let profile = DetectorProfile {
            ocr: OcrModel::Noisy {
                sub_rate: 0.0,
                dot_drop_rate_dark: 1.0,
                split_url: false,
            },
            addrbar: AddrBarModel::Oracle,
            seed: 0,
        };
        let r = run_scenario(&benign_scenario(4, profile, vec![Theme::Dark, Theme::Dark, Theme::Light])).unwrap();
        assert_eq!(r.outcome, Outcome::Authorized { by: Party::Victim });
        assert_eq!(r.photos_taken, 3);
        let retakes: Vec<_> = decisions(&r)
            .into_iter()
            .filter_map(|d| match d {
                AuthDecision::RequestRetake { reason, remaining, .. } => Some((*reason, *remaining)),
                _ => None,
            })
            .collect();
        assert_eq!(retakes, vec![(RetakeReason::DotMissing, 4), (RetakeReason::DotMissing, 3)]);
    }

    #[test]
    fn dark_only_photos_end_in_fallback() {
        let profile = DetectorProfile {
            ocr: OcrModel::Noisy {
                sub_rate: 0.0,
                dot_drop_rate_dark: 1.0,
                split_url: false,
            },
            addrbar: AddrBarModel::Oracle,
            seed: 0,
        };
        let r = run_scenario(&benign_scenario(4, profile, vec![Theme::Dark])).unwrap();
        assert_eq!(r.photos_taken, 6);
        assert!(decisions(&r).contains(&&AuthDecision::Fallback));
        assert_eq!(r.outcome, Outcome::AttackBlocked { reason: "fallback".into() });
    }

    #[test]
    fn phone_login_needs_no_photo() {
        let r = run_scenario(&phone_login_scenario(2)).unwrap();
        assert_eq!(r.outcome, Outcome::Authorized { by: Party::Victim });
        assert_eq!(r.photos_taken, 0);
    }

    #[test]
    fn rtp_attacks_are_detected() {
        for (fake, real) in [("microsoft1.com", "microsoft.com"), ("аpple.com", "apple.com"), ("micosoft.com", "microsoft.com")] {
            for seed in 0..20 {
                let r = run_rtp_attack(seed, fake, real, DetectorProfile::oracle()).unwrap();
                assert_eq!(r.outcome, Outcome::AttackDetected, "{fake} seed {seed}");
                assert!(!r.adversary_authorized());
                assert!(r.trail.iter().any(|t| t.decision
                    == AuthDecision::Deny {
                        reason: DenyReason::PhishingDetected
                    }
                    && t.beneficiary == Some(Party::Adversary)));
            }
        }
        assert!(run_rtp_attack(0, "apple.com", "apple.com", DetectorProfile::oracle()).is_err());
    }

    #[test]
    fn adversary_never_touches_the_safe_link() {
        let r = run_rtp_attack(3, "microsoft1.com", "microsoft.com", DetectorProfile::oracle()).unwrap();
        for e in &r.log {
            if e.link == Trust::Safe {
                assert_ne!(e.from, Actor::Adversary);
                assert_ne!(e.to, Actor::Adversary);
            }
            if e.from == Actor::Adversary || e.to == Actor::Adversary {
                let text = e.detail.to_string();
                assert!(!text.contains("/c/"), "short link leaked: {text}");
            }
        }
        assert!(r.log.iter().any(|e| e.kind == "notification" && e.link == Trust::Safe));
    }

    #[test]
    fn sop_invariant_holds_in_logs() {
        let reports = [
            run_benign_login(1, DetectorProfile::oracle()).unwrap(),
            run_redirection_attack(1).unwrap(),
            run_rtp_attack(1, "microsoft1.com", "microsoft.com", DetectorProfile::oracle()).unwrap(),
        ];
        for r in &reports {
            for e in &r.log {
                if let Some(o) = &e.cookie_origin {
                    assert_eq!(Some(o), e.destination.as_ref());
                }
            }
        }
    }

    #[test]
    fn cookie_jar_same_origin() {
        let mut jar = CookieJar::default();
        jar.store(&dn("microsoft1.com"), "c1");
        assert_eq!(jar.cookie_for(&dn("microsoft1.com")), Some("c1"));
        assert_eq!(jar.cookie_for(&dn("microsoft.com")), None);
        jar.store(&dn("microsoft.com"), "c2");
        assert_eq!(jar.cookie_for(&dn("microsoft.com")), Some("c2"));
        assert_eq!(jar.len(), 2);
    }

    #[test]
    fn redirection_is_blocked() {
        let r = run_redirection_attack(5).unwrap();
        assert_eq!(
            r.outcome,
            Outcome::AttackBlocked {
                reason: "no-valid-cookie".into()
            }
        );
        // the cookie-less request to the real origin
        let last_pc = r
            .log
            .iter()
            .rev()
            .find(|e| e.from == Actor::VictimPc && e.to == Actor::Server)
            .unwrap();
        assert_eq!(last_pc.destination.as_deref(), Some("microsoft.com"));
        assert_eq!(last_pc.cookie_origin, None);
        assert!(!r.adversary_authorized());
    }

    #[test]
    fn injections() {
        for seed in 0..20 {
            for p in [Placement::Title, Placement::PageContent] {
                let r = run_injection_attack(seed, p, DetectorProfile::oracle()).unwrap();
                assert_eq!(r.outcome, Outcome::AttackDetected, "{p:?} seed {seed}");
            }
            let r = run_injection_attack(seed, Placement::PictureInPicture, DetectorProfile::oracle()).unwrap();
            assert!(r.met_expectation());
            assert!(r.trail.iter().any(|t| matches!(
                t.decision,
                AuthDecision::RequestRetake {
                    reason: RetakeReason::MultipleAddrbars,
                    warning: true,
                    ..
                }
            )));
        }
    }

    #[test]
    fn otp_baseline_falls_to_the_proxy() {
        for seed in 0..20 {
            let r = run_otp_baseline(seed).unwrap();
            assert_eq!(r.outcome, Outcome::Authorized { by: Party::Adversary });
            assert!(r.adversary_authorized());
        }
    }

    #[test]
    fn bruteforce_runs_out_of_time() {
        let r = run_scenario(&token_bruteforce_scenario(9, 10_000).unwrap()).unwrap();
        assert_eq!(r.outcome, Outcome::AttackBlocked { reason: "unknown-token".into() });
        let summary = r.log.iter().find(|e| e.kind == "token-guesses").unwrap();
        assert_eq!(summary.detail["distinct"], 10_000);
        assert!(summary.detail["throttled"].as_u64().unwrap() > 0);
    }

    #[test]
    fn guessing_the_real_token_would_win() {
        // sanity check of the brute-force harness: with a 6-digit token and
        // no rate limit or expiry, a million guesses cover the whole space
        let mut s = token_bruteforce_scenario(9, 1_000_000).unwrap();
        s.session = Some(SessionConfig {
            token_length: 6,
            retake_cap: 5,
            ttl_ms: u64::MAX / 4,
            lookups_per_second: None,
        });
        let r = run_scenario(&s).unwrap();
        assert_eq!(r.outcome, Outcome::Authorized { by: Party::Adversary });
    }

    #[test]
    fn token_guess_stats() {
        let s = token_guess_trials(10_000, 100, 6, 1).unwrap();
        // expected hits 10_000 * 100 / 10^6 = 1
        assert!(s.hits <= 8);
        let s = token_guess_trials(20_000, 500_000, 6, 1).unwrap();
        let rate = s.hits as f64 / 20_000.0;
        assert!((rate - 0.5).abs() < 0.02, "{rate}");
        assert!(token_guess_trials(1, 10, 5, 1).is_err());
        assert!(token_guess_trials(1, 1_000_000, 6, 1).is_err());
    }

    #[test]
    fn runs_are_byte_identical() {
        let a = run_rtp_attack(7, "microsoft1.com", "microsoft.com", DetectorProfile::default_noisy(3)).unwrap();
        let b = run_rtp_attack(7, "microsoft1.com", "microsoft.com", DetectorProfile::default_noisy(3)).unwrap();
        assert_eq!(a.log_jsonl(), b.log_jsonl());
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn trail_follows_lifecycle() {
        let r = run_scenario(&benign_scenario(
            4,
            DetectorProfile {
                ocr: OcrModel::Noisy {
                    sub_rate: 0.0,
                    dot_drop_rate_dark: 1.0,
                    split_url: false,
                },
                addrbar: AddrBarModel::Oracle,
                seed: 0,
            },
            vec![Theme::Dark, Theme::Light],
        ))
        .unwrap();
        let mut state = None;
        for t in &r.trail {
            let next = match &t.decision {
                AuthDecision::LinkSent { .. } => SessionState::LinkSent,
                AuthDecision::RequirePhoto { .. } | AuthDecision::RequestRetake { .. } => SessionState::AwaitingPhoto,
                AuthDecision::Authorize => SessionState::Authorized,
                other => panic!("unexpected {other:?}"),
            };
            if let Some(prev) = state {
                assert!(prev == next || SessionState::can_transition_to(prev, next), "{prev:?} -> {next:?}");
            }
            state = Some(next);
        }
        assert_eq!(state, Some(SessionState::Authorized));
    }

    #[test]
    fn scenario_json_round_trip() {
        let s = injection_scenario(3, Placement::PictureInPicture, DetectorProfile::oracle());
        let text = serde_json::to_string(&s).unwrap();
        let back = Scenario::from_json(&text).unwrap();
        assert_eq!(back, s);
        let minimal = Scenario::from_json(
            r#"{"name":"m","events":[{"event":"visit","domain":"microsoft.com"},{"event":"submit-login"},
                {"event":"click-link"},{"event":"photograph-and-upload"}],
                "expected_outcome":{"outcome":"authorized","by":"victim"}}"#,
        )
        .unwrap();
        let r = run_scenario(&minimal).unwrap();
        assert!(r.met_expectation());
        assert!(Scenario::from_json(r#"{"name":"x","events":[{"event":"dance"}]}"#).is_err());
    }

    #[test]
    fn malformed_scripts_are_rejected() {
        let mut s = benign_scenario(1, DetectorProfile::oracle(), light());
        s.events.insert(0, Event::ClickLink { actor: Actor::VictimPhone });
        assert!(matches!(run_scenario(&s), Err(SimError::Invalid(_))));
        let mut s = benign_scenario(1, DetectorProfile::oracle(), light());
        s.events[0] = ev_visit(Actor::VictimPc, "example.org");
        assert!(run_scenario(&s).is_err());
        let mut s = benign_scenario(1, DetectorProfile::oracle(), light());
        s.actors.retain(|a| *a != Actor::VictimPhone);
        assert!(run_scenario(&s).is_err());
    }

    #[test]
    fn proxy_rewrites_both_ways() {
        let p = RtpProxy::new(dn("microsoft1.com"), dn("microsoft.com"));
        assert_eq!(p.rewrite_outbound("go to microsoft.com/c/1"), "go to microsoft1.com/c/1");
        assert_eq!(p.rewrite_inbound("host: microsoft1.com"), "host: microsoft.com");
    }
}
