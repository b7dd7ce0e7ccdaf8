//! Hostname extraction from address-bar text and normalization to the ASCII
//! form used for every comparison.

use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::punycode::{to_punycode, PunycodeError};

const MAX_LABEL_LEN: usize = 63;
const MAX_NAME_LEN: usize = 253;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("no hostname found in {0:?}")]
    NoHostname(String),
    #[error("invalid label {label:?}: {why}")]
    InvalidLabel { label: String, why: &'static str },
    #[error("hostname longer than {MAX_NAME_LEN} characters")]
    TooLong,
    #[error(transparent)]
    Punycode(#[from] PunycodeError),
    #[error("invalid substitution rule on line {line}: {text:?}")]
    InvalidRule { line: usize, text: String },
}

/// Normalized hostname: lowercase ASCII labels, non-ASCII labels encoded
/// with the `xn--` prefix.
///
/// Equality and hashing only look at the ASCII labels; the raw text that
/// produced the name is kept for reporting.
#[derive(Debug, Clone)]
pub struct DomainName {
    labels: Vec<String>,
    unicode: String,
    original_text: String,
}

impl DomainName {
    /// Parses a bare hostname (no scheme, port or path).
    pub fn parse(host: &str) -> Result<Self, DomainError> {
        Self::parse_with_original(host, host)
    }

    fn parse_with_original(host: &str, original: &str) -> Result<Self, DomainError> {
        let host = host.trim().strip_suffix('.').unwrap_or(host.trim());
        if host.is_empty() {
            return Err(DomainError::NoHostname(original.to_string()));
        }
        let unicode = host.to_lowercase();
        let labels = unicode
            .split('.')
            .map(|raw| {
                if raw.is_empty() {
                    return Err(DomainError::InvalidLabel {
                        label: raw.to_string(),
                        why: "empty label",
                    });
                }
                if !raw.chars().all(|c| c.is_alphanumeric() || c == '-') {
                    return Err(DomainError::InvalidLabel {
                        label: raw.to_string(),
                        why: "not letters, digits and hyphens",
                    });
                }
                let ascii = to_punycode(raw)?;
                check_ldh(&ascii)?;
                Ok(ascii)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let total = labels.iter().map(String::len).sum::<usize>() + labels.len() - 1;
        if total > MAX_NAME_LEN {
            return Err(DomainError::TooLong);
        }
        Ok(Self {
            labels,
            unicode,
            original_text: original.to_string(),
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn original_text(&self) -> &str {
        &self.original_text
    }

    /// Lowercased hostname before Punycode encoding.
    pub fn unicode(&self) -> &str {
        &self.unicode
    }

    pub fn ascii(&self) -> String {
        self.labels.join(".")
    }
}

fn check_ldh(label: &str) -> Result<(), DomainError> {
    let bad = |why| DomainError::InvalidLabel {
        label: label.to_string(),
        why,
    };
    if label.len() > MAX_LABEL_LEN {
        return Err(bad("longer than 63 characters"));
    }
    if !label
        .bytes()
        .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-')
    {
        return Err(bad("not letters, digits and hyphens"));
    }
    if label.starts_with('-') || label.ends_with('-') {
        return Err(bad("leading or trailing hyphen"));
    }
    Ok(())
}

impl PartialEq for DomainName {
    fn eq(&self, other: &Self) -> bool {
        self.labels == other.labels
    }
}

impl Eq for DomainName {}

impl Hash for DomainName {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.labels.hash(state);
    }
}

impl PartialOrd for DomainName {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for DomainName {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.labels.cmp(&other.labels)
    }
}

impl fmt::Display for DomainName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.ascii())
    }
}

impl FromStr for DomainName {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl Serialize for DomainName {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.ascii())
    }
}

impl<'de> Deserialize<'de> for DomainName {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        DomainName::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Text read by OCR from inside the address bar.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UrlText(String);

impl UrlText {
    pub fn new(raw: impl Into<String>) -> Option<Self> {
        let raw = raw.into();
        (!raw.trim().is_empty()).then_some(Self(raw))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

/// Pulls the hostname out of address-bar text.
///
/// Strips scheme, userinfo, port and everything from the first `/`, `?` or
/// `#`. When the text has several whitespace-separated tokens the first one
/// that parses wins.
pub fn extract_hostname(text: &UrlText) -> Result<DomainName, DomainError> {
    let mut first_err = None;
    for token in text.as_str().split_whitespace() {
        match host_of_token(token).and_then(|h| DomainName::parse_with_original(h, text.as_str())) {
            Ok(d) => return Ok(d),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    Err(first_err.unwrap_or_else(|| DomainError::NoHostname(text.as_str().to_string())))
}

fn host_of_token(token: &str) -> Result<&str, DomainError> {
    let no_host = || DomainError::NoHostname(token.to_string());
    let rest = match token.find("://") {
        Some(pos) if is_scheme(&token[..pos]) => &token[pos + 3..],
        Some(_) => return Err(no_host()),
        None => token,
    };
    let authority = rest.split(['/', '?', '#']).next().unwrap_or("");
    let host_port = authority.rsplit_once('@').map_or(authority, |(_, h)| h);
    let host = match host_port.rsplit_once(':') {
        Some((h, port)) if port.bytes().all(|b| b.is_ascii_digit()) => h,
        Some(_) => return Err(no_host()),
        None => host_port,
    };
    if host.is_empty() {
        return Err(no_host());
    }
    Ok(host)
}

fn is_scheme(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.'))
}

pub fn domains_equal(a: &DomainName, b: &DomainName) -> bool {
    a == b
}

/// One confusable substitution: `from` is replaced by `to`, or deleted when
/// `to` is `None` (the OCR dot-drop mode).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubstitutionRule {
    pub from: char,
    pub to: Option<char>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubstitutionRules(Vec<SubstitutionRule>);

impl SubstitutionRules {
    pub fn new(rules: Vec<SubstitutionRule>) -> Self {
        Self(rules)
    }

    /// `o 0` and `l 1`, the digit look-alikes used for typosquatting.
    pub fn digit_lookalikes() -> Self {
        Self(vec![
            SubstitutionRule { from: 'o', to: Some('0') },
            SubstitutionRule { from: 'l', to: Some('1') },
        ])
    }

    pub fn rules(&self) -> &[SubstitutionRule] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Parses the plain-text rule format: one rule per line, source and
    /// replacement separated by whitespace (`o 0`). A line holding a single
    /// character deletes it. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, DomainError> {
        let mut rules = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = || DomainError::InvalidRule {
                line: idx + 1,
                text: line.to_string(),
            };
            let mut parts = line.split_whitespace();
            let from = single_char(parts.next().ok_or_else(bad)?).ok_or_else(bad)?;
            let to = match parts.next() {
                Some(t) => Some(single_char(t).ok_or_else(bad)?),
                None => None,
            };
            if parts.next().is_some() || to == Some('.') || from == '-' {
                return Err(bad());
            }
            rules.push(SubstitutionRule { from, to });
        }
        Ok(Self(rules))
    }
}

fn single_char(s: &str) -> Option<char> {
    let mut it = s.chars();
    let c = it.next()?;
    it.next().is_none().then_some(c)
}

/// Produces a look-alike of `d`: for each rule in order, one occurrence of
/// its source character (chosen by the seed) is substituted. Rules whose
/// source character does not occur are skipped.
///
/// Mutation works on the Unicode form of the name, so the result is
/// re-normalized and can fail if a substitution breaks the label syntax.
pub fn confusable_mutate(
    d: &DomainName,
    rules: &SubstitutionRules,
    seed: u64,
) -> Result<DomainName, DomainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chars: Vec<char> = d.unicode().chars().collect();
    for rule in rules.rules() {
        let positions: Vec<usize> = chars
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == rule.from)
            .map(|(i, _)| i)
            .collect();
        if let Some(&pos) = positions.choose(&mut rng) {
            match rule.to {
                Some(to) => chars[pos] = to,
                None => {
                    chars.remove(pos);
                }
            }
        }
    }
    let text: String = chars.into_iter().collect();
    DomainName::parse(&text)
}
