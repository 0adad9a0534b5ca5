//! The closed set of error codes shared by every layer of the system.
//!
//! Module-level error types carry richer context but always map onto one of
//! these codes, which is what appears on the wire and in CLI JSON output.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

macro_rules! error_codes {
    ($($variant:ident => $text:literal, $status:literal;)*) => {
        /// Wire-level error identifier.
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "SCREAMING_SNAKE_CASE")]
        pub enum ErrorCode {
            $($variant,)*
        }

        impl ErrorCode {
            /// Every code, in declaration order.
            pub const ALL: &'static [ErrorCode] = &[$(ErrorCode::$variant,)*];

            pub fn as_str(self) -> &'static str {
                match self {
                    $(ErrorCode::$variant => $text,)*
                }
            }

            /// HTTP status used when this code is returned by the registry API.
            pub fn http_status(self) -> u16 {
                match self {
                    $(ErrorCode::$variant => $status,)*
                }
            }
        }

        impl FromStr for ErrorCode {
            type Err = UnknownErrorCode;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($text => Ok(ErrorCode::$variant),)*
                    _ => Err(UnknownErrorCode(s.to_owned())),
                }
            }
        }
    };
}

error_codes! {
    // malformed input
    Malformed => "MALFORMED", 400;
    InvalidProtocol => "INVALID_PROTOCOL", 400;
    InvalidLabel => "INVALID_LABEL", 400;
    InvalidVersion => "INVALID_VERSION", 400;
    InvalidName => "INVALID_NAME", 400;
    NameMismatch => "NAME_MISMATCH", 400;
    PolicyParse => "POLICY_PARSE", 400;
    RoleViolation => "ROLE_VIOLATION", 400;
    WindowExceeded => "WINDOW_EXCEEDED", 400;
    // authentication
    UntrustedRoot => "UNTRUSTED_ROOT", 401;
    ChainInvalid => "CHAIN_INVALID", 401;
    CertExpired => "CERT_EXPIRED", 401;
    CertNotYetValid => "CERT_NOT_YET_VALID", 401;
    BadSignature => "BAD_SIGNATURE", 401;
    NonceReplay => "NONCE_REPLAY", 401;
    ChallengeExpired => "CHALLENGE_EXPIRED", 401;
    HandshakeTimeout => "HANDSHAKE_TIMEOUT", 401;
    // authorization
    PolicyDenied => "POLICY_DENIED", 403;
    CapabilityMismatch => "CAPABILITY_MISMATCH", 403;
    UnknownCapability => "UNKNOWN_CAPABILITY", 403;
    Revoked => "REVOKED", 403;
    // lookup
    UnknownAgent => "UNKNOWN_AGENT", 404;
    DuplicateAgent => "DUPLICATE_AGENT", 409;
    // server side
    LogCorrupt => "LOG_CORRUPT", 500;
    Internal => "INTERNAL", 500;
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown error code `{0}`")]
pub struct UnknownErrorCode(pub String);
