use std::fmt;

use zt5g_core::FailReason;

/// An error with a stable class name and exit code.
#[derive(Debug)]
pub struct Failure {
    pub class: &'static str,
    pub message: String,
}

impl Failure {
    pub fn new(class: &'static str, message: impl Into<String>) -> Self {
        Failure {
            class,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        exit_code(self.class)
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

impl From<&FailReason> for Failure {
    fn from(r: &FailReason) -> Self {
        Failure::new(r.class(), r.to_string())
    }
}

/// 1 is reserved for unclassified errors and 2 for usage errors (clap).
pub fn exit_code(class: &str) -> u8 {
    match class {
        "io" => 3,
        "workspace" => 4,
        "duplicate-id" => 5,
        "unknown-id" => 6,
        "invalid-id" => 7,
        "params-mismatch" => 8,
        "empty-workspace" => 9,
        "no-database" => 10,
        "config" => 11,
        "empty-input" => 12,
        "protocol-violation" => 20,
        "malformed" => 21,
        "session-mismatch" => 22,
        "unexpected-peer" => 23,
        "signature-invalid" => 24,
        "binding-invalid" => 25,
        "hakf-mismatch" => 26,
        "digest-mismatch" => 27,
        "seal-authentication" => 28,
        "device-tampered" => 29,
        "signer-exhausted" => 30,
        "credential" => 31,
        "timeout" => 32,
        "peer-aborted" => 33,
        "key-mismatch" => 34,
        _ => 1,
    }
}

pub fn fail<T>(class: &'static str, message: impl Into<String>) -> anyhow::Result<T> {
    Err(Failure::new(class, message).into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_are_distinct() {
        let classes = [
            "io",
            "workspace",
            "duplicate-id",
            "unknown-id",
            "invalid-id",
            "params-mismatch",
            "empty-workspace",
            "no-database",
            "config",
            "empty-input",
            "protocol-violation",
            "malformed",
            "session-mismatch",
            "unexpected-peer",
            "signature-invalid",
            "binding-invalid",
            "hakf-mismatch",
            "digest-mismatch",
            "seal-authentication",
            "device-tampered",
            "signer-exhausted",
            "credential",
            "timeout",
            "peer-aborted",
            "key-mismatch",
        ];
        let mut codes: Vec<u8> = classes.iter().map(|c| exit_code(c)).collect();
        assert!(codes.iter().all(|&c| c > 2));
        codes.sort_unstable();
        codes.dedup();
        assert_eq!(codes.len(), classes.len());
    }

    #[test]
    fn every_handshake_reason_has_a_code() {
        let reasons = [
            FailReason::Timeout,
            FailReason::PeerAborted,
            FailReason::HakfRejected,
            FailReason::DigestMismatch,
            FailReason::BindingInvalid,
            FailReason::SealAuthentication,
            FailReason::PeerSignatureInvalid,
            FailReason::SessionMismatch,
            FailReason::DeviceTampered,
            FailReason::SignerExhausted,
            FailReason::Malformed(String::new()),
            FailReason::Credential(String::new()),
            FailReason::IllegalInitiate("Idle"),
        ];
        for r in &reasons {
            assert_ne!(Failure::from(r).exit_code(), 1, "{}", r.class());
        }
    }
}
