//! Hierarchical agent names.
//!
//! The canonical form is
//!
//! ```text
//! <protocol>://<agent_id>.<capability>.<provider>.v<major>.<minor>[.<patch>].<extension>
//! ```
//!
//! Labels follow a DNS-label-like grammar: 1 to 63 characters of lowercase
//! ASCII letters, digits, and interior hyphens. Dots are reserved as field
//! separators.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::ErrorCode;

pub const MAX_LABEL_LEN: usize = 63;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NameError {
    #[error("malformed name: {0}")]
    Malformed(String),
    #[error("unknown protocol `{0}` (expected a2a, mcp, acp or custom)")]
    InvalidProtocol(String),
    #[error("invalid label `{0}`")]
    InvalidLabel(String),
    #[error("invalid version `{0}`")]
    InvalidVersion(String),
    #[error("query must constrain at least one field")]
    EmptyQuery,
}

impl NameError {
    pub fn code(&self) -> ErrorCode {
        match self {
            NameError::Malformed(_) => ErrorCode::Malformed,
            NameError::InvalidProtocol(_) => ErrorCode::InvalidProtocol,
            NameError::InvalidLabel(_) => ErrorCode::InvalidLabel,
            NameError::InvalidVersion(_) => ErrorCode::InvalidVersion,
            NameError::EmptyQuery => ErrorCode::InvalidName,
        }
    }
}

/// A single name field.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Label(String);

impl Label {
    pub fn new(value: impl Into<String>) -> Result<Self, NameError> {
        let value = value.into();
        if is_valid_label(&value) {
            Ok(Label(value))
        } else {
            Err(NameError::InvalidLabel(value))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

fn is_valid_label(s: &str) -> bool {
    let bytes = s.as_bytes();
    if bytes.is_empty() || bytes.len() > MAX_LABEL_LEN {
        return false;
    }
    let alnum = |b: u8| b.is_ascii_lowercase() || b.is_ascii_digit();
    alnum(bytes[0])
        && alnum(bytes[bytes.len() - 1])
        && bytes.iter().all(|&b| alnum(b) || b == b'-')
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for Label {
    type Err = NameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Label::new(s)
    }
}

impl AsRef<str> for Label {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl PartialEq<str> for Label {
    fn eq(&self, other: &str) -> bool {
        self.0 == other
    }
}

impl PartialEq<&str> for Label {
    fn eq(&self, other: &&str) -> bool {
        self.0 == *other
    }
}

/// Semantic version with an optional patch component.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Version {
    pub major: u64,
    pub minor: u64,
    pub patch: Option<u64>,
}

impl Version {
    pub const fn new(major: u64, minor: u64) -> Self {
        Version { major, minor, patch: None }
    }

    pub const fn with_patch(major: u64, minor: u64, patch: u64) -> Self {
        Version { major, minor, patch: Some(patch) }
    }

    /// Parses `2.1` or `2.1.3` (no `v` prefix).
    pub fn parse_bare(s: &str) -> Result<Self, NameError> {
        let err = || NameError::InvalidVersion(s.to_owned());
        let parts: Vec<&str> = s.split('.').collect();
        if !(2..=3).contains(&parts.len()) {
            return Err(err());
        }
        let num = |p: &str| -> Result<u64, NameError> {
            let canonical = !p.is_empty()
                && p.bytes().all(|b| b.is_ascii_digit())
                && (p == "0" || !p.starts_with('0'));
            if !canonical {
                return Err(err());
            }
            p.parse().map_err(|_| err())
        };
        Ok(Version {
            major: num(parts[0])?,
            minor: num(parts[1])?,
            patch: parts.get(2).map(|p| num(p)).transpose()?,
        })
    }

    /// Ordering used for query matching: an absent patch counts as 0, so
    /// `1.0` and `1.0.0` have equal precedence.
    pub fn precedence_cmp(&self, other: &Version) -> Ordering {
        (self.major, self.minor, self.patch.unwrap_or(0)).cmp(&(
            other.major,
            other.minor,
            other.patch.unwrap_or(0),
        ))
    }
}

impl Ord for Version {
    fn cmp(&self, other: &Self) -> Ordering {
        self.precedence_cmp(other)
            .then_with(|| self.patch.is_some().cmp(&other.patch.is_some()))
    }
}

impl PartialOrd for Version {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Total order on versions: `(major, minor, patch)` with an absent patch
/// treated as 0; `x.y` sorts immediately before `x.y.0`.
pub fn compare_versions(a: &Version, b: &Version) -> Ordering {
    a.cmp(b)
}

impl fmt::Display for Version {
    /// Renders without the `v` prefix.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.major, self.minor)?;
        if let Some(patch) = self.patch {
            write!(f, ".{patch}")?;
        }
        Ok(())
    }
}

impl FromStr for Version {
    type Err = NameError;

    /// Accepts both `2.1` and `v2.1`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Version::parse_bare(s.strip_prefix('v').unwrap_or(s))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Protocol {
    A2a,
    Mcp,
    Acp,
    Custom,
}

impl Protocol {
    pub const ALL: [Protocol; 4] = [Protocol::A2a, Protocol::Mcp, Protocol::Acp, Protocol::Custom];

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::A2a => "a2a",
            Protocol::Mcp => "mcp",
            Protocol::Acp => "acp",
            Protocol::Custom => "custom",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = NameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "a2a" => Ok(Protocol::A2a),
            "mcp" => Ok(Protocol::Mcp),
            "acp" => Ok(Protocol::Acp),
            "custom" => Ok(Protocol::Custom),
            other => Err(NameError::InvalidProtocol(other.to_owned())),
        }
    }
}

/// A fully decomposed agent name.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AnsName {
    pub protocol: Protocol,
    pub agent_id: Label,
    pub capability: Label,
    pub provider: Label,
    pub version: Version,
    pub extension: Label,
}

impl AnsName {
    pub fn parse(s: &str) -> Result<Self, NameError> {
        let (scheme, rest) = s
            .split_once("://")
            .ok_or_else(|| NameError::Malformed(format!("`{s}` has no `://` separator")))?;
        let protocol: Protocol = scheme.parse()?;

        let parts: Vec<&str> = rest.split('.').collect();
        // agent.capability.provider.vMAJOR.MINOR[.PATCH].extension
        if !(6..=7).contains(&parts.len()) {
            return Err(NameError::Malformed(format!(
                "`{s}` must have agent, capability, provider, version and extension fields"
            )));
        }
        let agent_id = Label::new(parts[0])?;
        let capability = Label::new(parts[1])?;
        let provider = Label::new(parts[2])?;
        let extension = Label::new(parts[parts.len() - 1])?;

        let version_text = parts[3..parts.len() - 1].join(".");
        let bare = version_text
            .strip_prefix('v')
            .ok_or_else(|| NameError::InvalidVersion(version_text.clone()))?;
        let version = Version::parse_bare(bare).map_err(|_| NameError::InvalidVersion(version_text))?;

        Ok(AnsName { protocol, agent_id, capability, provider, version, extension })
    }

    /// The canonical string form.
    pub fn format(&self) -> String {
        self.to_string()
    }

    pub fn matches(&self, query: &NameQuery) -> bool {
        matches(self, query)
    }
}

impl fmt::Display for AnsName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}://{}.{}.{}.v{}.{}",
            self.protocol, self.agent_id, self.capability, self.provider, self.version, self.extension
        )
    }
}

impl FromStr for AnsName {
    type Err = NameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AnsName::parse(s)
    }
}

macro_rules! string_serde {
    ($ty:ty, $expecting:literal) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let s = String::deserialize(deserializer)?;
                s.parse().map_err(|e: NameError| {
                    serde::de::Error::custom(format_args!("{}: {e}", $expecting))
                })
            }
        }
    };
}

string_serde!(Label, "label");
string_serde!(Version, "version");
string_serde!(Protocol, "protocol");
string_serde!(AnsName, "ans name");

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VersionReq {
    Exact(Version),
    AtLeast(Version),
    /// Resolved by the registry; matches any single name.
    Latest,
}

impl VersionReq {
    pub fn satisfied_by(&self, version: &Version) -> bool {
        match self {
            VersionReq::Exact(v) => version.precedence_cmp(v) == Ordering::Equal,
            VersionReq::AtLeast(v) => version.precedence_cmp(v) != Ordering::Less,
            VersionReq::Latest => true,
        }
    }
}

impl FromStr for VersionReq {
    type Err = NameError;

    /// `latest`, `2.1`, `v2.1`, or `>=2.0`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "latest" {
            Ok(VersionReq::Latest)
        } else if let Some(min) = s.strip_prefix(">=") {
            Ok(VersionReq::AtLeast(min.trim().parse()?))
        } else {
            Ok(VersionReq::Exact(s.parse()?))
        }
    }
}

impl fmt::Display for VersionReq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VersionReq::Exact(v) => write!(f, "{v}"),
            VersionReq::AtLeast(v) => write!(f, ">={v}"),
            VersionReq::Latest => f.write_str("latest"),
        }
    }
}

/// Partial name used for discovery. Unset fields match anything.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NameQuery {
    pub protocol: Option<Protocol>,
    pub agent_id: Option<Label>,
    pub capability: Option<Label>,
    pub provider: Option<Label>,
    pub extension: Option<Label>,
    pub version_req: Option<VersionReq>,
}

impl NameQuery {
    pub fn capability(capability: Label) -> Self {
        NameQuery { capability: Some(capability), ..Default::default() }
    }

    pub fn is_empty(&self) -> bool {
        self.protocol.is_none()
            && self.agent_id.is_none()
            && self.capability.is_none()
            && self.provider.is_none()
            && self.extension.is_none()
            && self.version_req.is_none()
    }

    pub fn validate(&self) -> Result<(), NameError> {
        if self.is_empty() {
            Err(NameError::EmptyQuery)
        } else {
            Ok(())
        }
    }

    pub fn wants_latest(&self) -> bool {
        self.version_req == Some(VersionReq::Latest)
    }
}

/// True iff every constrained field of `query` agrees with `name`.
pub fn matches(name: &AnsName, query: &NameQuery) -> bool {
    fn field<T: PartialEq>(want: &Option<T>, have: &T) -> bool {
        want.as_ref().is_none_or(|w| w == have)
    }
    field(&query.protocol, &name.protocol)
        && field(&query.agent_id, &name.agent_id)
        && field(&query.capability, &name.capability)
        && field(&query.provider, &name.provider)
        && field(&query.extension, &name.extension)
        && query.version_req.is_none_or(|r| r.satisfied_by(&name.version))
}
