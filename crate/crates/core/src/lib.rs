//! Zero-trust device authentication and key agreement for cellular networks.
//!
//! Every party holds a certificate binding its ID, a composite post-quantum
//! public key and the hashed response of its hardware root of authentication
//! (HRA). A home-network authority (HAKF) keeps the hashed HRA images and
//! vouches for certificates; two UEs run a six-message handshake that ends
//! with a shared session key. `netsim` measures that handshake under load.

pub mod certs;
pub mod hakf;
pub mod handshake;
pub mod hra;
pub mod lattice_kem;
pub mod netsim;
pub mod pqc_sign;

pub use certs::{issue_certificate, verify_signature, Certificate, UserIdentity};
pub use hakf::{CertificateDb, Hakf, VerificationRequest, VerificationResponse};
pub use handshake::{
    derive_session_key, run_handshake, Credentials, FailReason, HandshakeSession, MessageType, SessionKey,
    SessionState,
};
pub use hra::{HraDevice, HraImage};
pub use lattice_kem::{Ciphertext, KemParams, KemPrivateKey, KemPublicKey, SharedSecret};
pub use netsim::{run_once, run_sweep, SimMetrics, SimScenario};
pub use pqc_sign::{SignKeyPair, Signature};
