//! Six-message mutual authentication and session-key agreement.
//!
//! ```text
//! initiator            responder              HAKF
//!     ---- M1 cert_i ----->
//!                          ---- M2 req(cert_i) --->
//!                          <--- M3 sealed verdict --
//!     <--- M4 cert_j, ct, sig --                      responder Established
//!     ---------------- M5 req(cert_j) ------------->
//!     <--------------- M6 sealed verdict -----------  initiator Established
//! ```
//!
//! The responder encapsulates once to the initiator's key and ships the
//! ciphertext in M4, signed together with the session ID, nonce and both
//! certificate digests so nobody else can substitute it. Both sides derive the session key from that secret, the
//! initiator's nonce and both certificate digests.

mod adversary;
mod driver;
mod message;

pub use adversary::{
    certificate_tamper_drill, mitm_drill, spoof_drill, verdict_replay_drill, DrillReport, MitmSubstitute,
    ResponseReplay, TamperCert,
};
pub use driver::{
    run_handshake, serve_hakf, Hop, Interceptor, Node, Passive, RunOutcome, TraceEntry,
};
pub use message::{
    Body, DecodeError, HandshakeMessage, MessageType, Nonce, SessionId, HEADER_BYTES, NONCE_BYTES,
    SESSION_ID_BYTES,
};

use hkdf::Hkdf;
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};

use crate::certs::{issue_certificate, verify_signature, CertError, Certificate, UserIdentity};
use crate::hakf::{open_response, HakfError, VerificationRequest};
use crate::hra::{HraDevice, HraError};
use crate::lattice_kem::{decapsulate, encapsulate, keygen, Ciphertext, KemParams, KemPrivateKey};
use crate::pqc_sign::{self, SignError, SignKeyPair, Signature};

fn derive(seed: &[u8; 32], label: &[u8]) -> [u8; 32] {
    Sha256::new().chain_update(label).chain_update(seed).finalize().into()
}

/// Everything one party needs to take part: identity, KEM private key,
/// signing state and HRA device.
#[derive(Debug)]
pub struct Credentials {
    pub identity: UserIdentity,
    pub kem_sk: KemPrivateKey,
    pub signer: SignKeyPair,
    pub device: HraDevice,
}

impl Credentials {
    /// Deterministically derives all key material and the device from `seed`.
    pub fn generate(
        user_id: &str,
        seed: &[u8; 32],
        challenge_bits: u8,
        sign_height: u8,
        params: &KemParams,
    ) -> Result<Self, CertError> {
        let signer = SignKeyPair::generate(&derive(seed, b"zt5g-cred-sign"), sign_height)?;
        Self::with_signer(user_id, seed, challenge_bits, signer, params)
    }

    /// Same derivation as `generate`, but with signing state restored from
    /// storage so used leaves stay used.
    pub fn with_signer(
        user_id: &str,
        seed: &[u8; 32],
        challenge_bits: u8,
        signer: SignKeyPair,
        params: &KemParams,
    ) -> Result<Self, CertError> {
        let mut kem_seed = [0u8; 64];
        kem_seed[..32].copy_from_slice(&derive(seed, b"zt5g-cred-kem-a"));
        kem_seed[32..].copy_from_slice(&derive(seed, b"zt5g-cred-kem-b"));
        let (kem_pk, kem_sk) = keygen(&kem_seed, params)?;
        let device = HraDevice::new(derive(seed, b"zt5g-cred-silicon"), challenge_bits)?;
        Ok(Credentials {
            identity: UserIdentity {
                user_id: user_id.to_owned(),
                kem_pk,
                sig_pk: signer.public().to_vec(),
            },
            kem_sk,
            signer,
            device,
        })
    }

    pub fn user_id(&self) -> &str {
        &self.identity.user_id
    }

    pub fn params(&self) -> &KemParams {
        self.identity.kem_pk.params()
    }

    /// Issues a fresh certificate, consuming one signature.
    pub fn issue(&mut self) -> Result<Certificate, CertError> {
        issue_certificate(&self.identity, &mut self.signer, &self.device)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Initiator,
    Responder,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, thiserror::Error)]
pub enum FailReason {
    #[error("{msg_type} is not legal in state {state}")]
    UnexpectedMessage { state: &'static str, msg_type: MessageType },
    #[error("initiate called in state {0}")]
    IllegalInitiate(&'static str),
    #[error("{0}")]
    Malformed(String),
    #[error("session id or nonce does not match")]
    SessionMismatch,
    #[error("peer presented id {found}, expected {expected}")]
    UnexpectedPeer { expected: String, found: String },
    #[error("peer certificate signature is invalid")]
    PeerSignatureInvalid,
    #[error("ciphertext binding signature is invalid")]
    BindingInvalid,
    #[error("HAKF rejected the peer certificate")]
    HakfRejected,
    #[error("HAKF response answers a different request")]
    DigestMismatch,
    #[error("HAKF response failed authentication")]
    SealAuthentication,
    #[error("HRA device is tampered")]
    DeviceTampered,
    #[error("signing key exhausted")]
    SignerExhausted,
    #[error("credential error: {0}")]
    Credential(String),
    #[error("no response before the retry budget ran out")]
    Timeout,
    #[error("the other endpoint failed the handshake")]
    PeerAborted,
}

impl FailReason {
    /// Short machine-readable class.
    pub fn class(&self) -> &'static str {
        match self {
            FailReason::UnexpectedMessage { .. } | FailReason::IllegalInitiate(_) => "protocol-violation",
            FailReason::Malformed(_) => "malformed",
            FailReason::SessionMismatch => "session-mismatch",
            FailReason::UnexpectedPeer { .. } => "unexpected-peer",
            FailReason::PeerSignatureInvalid => "signature-invalid",
            FailReason::BindingInvalid => "binding-invalid",
            FailReason::HakfRejected => "hakf-mismatch",
            FailReason::DigestMismatch => "digest-mismatch",
            FailReason::SealAuthentication => "seal-authentication",
            FailReason::DeviceTampered => "device-tampered",
            FailReason::SignerExhausted => "signer-exhausted",
            FailReason::Credential(_) => "credential",
            FailReason::Timeout => "timeout",
            FailReason::PeerAborted => "peer-aborted",
        }
    }
}

impl From<CertError> for FailReason {
    fn from(e: CertError) -> Self {
        match e {
            CertError::Hra(HraError::Tampered) => FailReason::DeviceTampered,
            CertError::Sign(SignError::Exhausted(_)) => FailReason::SignerExhausted,
            other => FailReason::Credential(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SessionState {
    Idle,
    SentCert,
    AwaitHakfVerdict,
    AwaitPeerCert,
    AwaitOwnVerdict,
    Established,
    Failed(FailReason),
}

impl SessionState {
    pub fn name(&self) -> &'static str {
        match self {
            SessionState::Idle => "Idle",
            SessionState::SentCert => "SentCert",
            SessionState::AwaitHakfVerdict => "AwaitHakfVerdict",
            SessionState::AwaitPeerCert => "AwaitPeerCert",
            SessionState::AwaitOwnVerdict => "AwaitOwnVerdict",
            SessionState::Established => "Established",
            SessionState::Failed(_) => "Failed",
        }
    }

    /// The single message type accepted in this state, if any.
    pub fn expects(&self, role: Role) -> Option<MessageType> {
        match (role, self) {
            (Role::Initiator, SessionState::SentCert) => Some(MessageType::M4RespCertAndKem),
            (Role::Initiator, SessionState::AwaitOwnVerdict) => Some(MessageType::M6VerResp),
            (Role::Responder, SessionState::AwaitPeerCert) => Some(MessageType::M1InitCert),
            (Role::Responder, SessionState::AwaitHakfVerdict) => Some(MessageType::M3VerResp),
            _ => None,
        }
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SessionKey([u8; 32]);

impl SessionKey {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    /// First 8 bytes of SHA-256 of the key, hex encoded. Safe to print.
    pub fn fingerprint(&self) -> String {
        Sha256::digest(self.0)[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl std::fmt::Debug for SessionKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SessionKey({})", self.fingerprint())
    }
}

/// `HKDF-SHA256(ikm = shared secret, info = nonce || H(cert_i) || H(cert_j))`.
pub fn derive_session_key(shared_secret: &[u8; 32], nonce: &Nonce, cert_i: &Certificate, cert_j: &Certificate) -> SessionKey {
    let hk = Hkdf::<Sha256>::new(Some(b"zt5g-session-key"), shared_secret);
    let mut info = Vec::with_capacity(NONCE_BYTES + 64);
    info.extend_from_slice(nonce);
    info.extend_from_slice(&cert_i.digest());
    info.extend_from_slice(&cert_j.digest());
    let mut key = [0u8; 32];
    hk.expand(&info, &mut key).expect("32 bytes is a valid hkdf length");
    SessionKey(key)
}

/// What the responder signs in M4: the session, both certificates and the
/// ciphertext.
pub fn kem_binding(session_id: &SessionId, nonce: &Nonce, cert_i: &Certificate, cert_j: &Certificate, ct: &Ciphertext) -> Vec<u8> {
    let mut out = b"zt5g-kem-binding".to_vec();
    out.extend_from_slice(session_id);
    out.extend_from_slice(nonce);
    out.extend_from_slice(&cert_i.digest());
    out.extend_from_slice(&cert_j.digest());
    out.extend_from_slice(&Sha256::digest(ct.to_bytes()));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Destination {
    Peer,
    Hakf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outbound {
    pub to: Destination,
    pub msg_type: MessageType,
    pub bytes: Vec<u8>,
}

/// One endpoint's view of one handshake.
#[derive(Debug, Clone)]
pub struct HandshakeSession {
    role: Role,
    state: SessionState,
    params: KemParams,
    expected_peer: Option<String>,
    session_id: SessionId,
    nonce: Nonce,
    own_cert: Option<Certificate>,
    peer_cert: Option<Certificate>,
    pending_ct: Option<Ciphertext>,
    request_digest: Option<[u8; 32]>,
    transcript: Sha256,
    transcript_messages: u64,
    session_key: Option<SessionKey>,
    peer_signature_ok: bool,
    peer_hakf_ok: bool,
}

impl HandshakeSession {
    /// A session that will contact `peer_id`. Any other responder ID in M4
    /// fails the handshake.
    pub fn initiator(peer_id: &str, params: KemParams) -> Self {
        Self::new(Role::Initiator, SessionState::Idle, Some(peer_id.to_owned()), params)
    }

    pub fn responder(params: KemParams) -> Self {
        Self::new(Role::Responder, SessionState::AwaitPeerCert, None, params)
    }

    fn new(role: Role, state: SessionState, expected_peer: Option<String>, params: KemParams) -> Self {
        HandshakeSession {
            role,
            state,
            params,
            expected_peer,
            session_id: [0; SESSION_ID_BYTES],
            nonce: [0; NONCE_BYTES],
            own_cert: None,
            peer_cert: None,
            pending_ct: None,
            request_digest: None,
            transcript: Sha256::new(),
            transcript_messages: 0,
            session_key: None,
            peer_signature_ok: false,
            peer_hakf_ok: false,
        }
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn is_established(&self) -> bool {
        self.state == SessionState::Established
    }

    pub fn is_failed(&self) -> bool {
        matches!(self.state, SessionState::Failed(_))
    }

    pub fn failure(&self) -> Option<&FailReason> {
        match &self.state {
            SessionState::Failed(r) => Some(r),
            _ => None,
        }
    }

    pub fn session_id(&self) -> &SessionId {
        &self.session_id
    }

    pub fn nonce(&self) -> &Nonce {
        &self.nonce
    }

    pub fn peer_cert(&self) -> Option<&Certificate> {
        self.peer_cert.as_ref()
    }

    pub fn session_key(&self) -> Option<&SessionKey> {
        self.session_key.as_ref()
    }

    /// `(signature check passed, HAKF check passed)` for the peer's
    /// certificate in this session.
    pub fn peer_checks(&self) -> (bool, bool) {
        (self.peer_signature_ok, self.peer_hakf_ok)
    }

    /// Hash over every message sent or received so far, in order.
    pub fn transcript_hash(&self) -> [u8; 32] {
        self.transcript.clone().finalize().into()
    }

    pub fn transcript_messages(&self) -> u64 {
        self.transcript_messages
    }

    /// Moves to `Failed` unless already failed. Clears any key material.
    pub fn abort(&mut self, reason: FailReason) {
        if !self.is_failed() {
            self.state = SessionState::Failed(reason);
        }
        self.session_key = None;
        self.pending_ct = None;
    }

    fn fail(&mut self, reason: FailReason) -> FailReason {
        self.abort(reason);
        self.failure().cloned().expect("just failed")
    }

    fn absorb(&mut self, bytes: &[u8]) {
        self.transcript.update((bytes.len() as u64).to_be_bytes());
        self.transcript.update(bytes);
        self.transcript_messages += 1;
    }

    fn emit(&mut self, to: Destination, msg: HandshakeMessage) -> Outbound {
        let bytes = msg.encode();
        self.absorb(&bytes);
        Outbound {
            to,
            msg_type: msg.msg_type,
            bytes,
        }
    }

    fn message(&self, msg_type: MessageType, body: Body) -> HandshakeMessage {
        HandshakeMessage {
            msg_type,
            session_id: self.session_id,
            nonce: self.nonce,
            body,
        }
    }

    /// Starts the handshake: picks the session ID and nonce, issues a fresh
    /// certificate and returns M1.
    pub fn initiate<R: RngCore + CryptoRng>(&mut self, creds: &mut Credentials, rng: &mut R) -> Result<Outbound, FailReason> {
        if self.role != Role::Initiator || self.state != SessionState::Idle {
            let state = self.state.name();
            return Err(self.fail(FailReason::IllegalInitiate(state)));
        }
        rng.fill_bytes(&mut self.session_id);
        rng.fill_bytes(&mut self.nonce);
        let cert = creds.issue().map_err(|e| self.fail(e.into()))?;
        self.own_cert = Some(cert.clone());
        self.state = SessionState::SentCert;
        Ok(self.emit(Destination::Peer, self.message(MessageType::M1InitCert, Body::Cert(cert))))
    }

    /// Feeds one received message. Returns what to send next. An `Err`
    /// means the session is now `Failed`; nothing is sent.
    pub fn on_message<R: RngCore + CryptoRng>(
        &mut self,
        bytes: &[u8],
        creds: &mut Credentials,
        rng: &mut R,
    ) -> Result<Vec<Outbound>, FailReason> {
        self.absorb(bytes);
        if let Some(r) = self.failure() {
            return Err(r.clone());
        }
        let result = self.dispatch(bytes, creds, rng);
        result.map_err(|r| self.fail(r))
    }

    fn dispatch<R: RngCore + CryptoRng>(
        &mut self,
        bytes: &[u8],
        creds: &mut Credentials,
        rng: &mut R,
    ) -> Result<Vec<Outbound>, FailReason> {
        let Some((msg_type, _, _)) = HandshakeMessage::peek_header(bytes) else {
            return Err(FailReason::Malformed("bad header".into()));
        };
        if self.state.expects(self.role) != Some(msg_type) {
            return Err(FailReason::UnexpectedMessage {
                state: self.state.name(),
                msg_type,
            });
        }
        let msg = HandshakeMessage::decode(bytes, &self.params).map_err(|e| FailReason::Malformed(e.0))?;
        if msg_type != MessageType::M1InitCert && (msg.session_id != self.session_id || msg.nonce != self.nonce) {
            return Err(FailReason::SessionMismatch);
        }
        match (msg_type, msg.body) {
            (MessageType::M1InitCert, Body::Cert(cert_i)) => {
                self.session_id = msg.session_id;
                self.nonce = msg.nonce;
                self.on_peer_cert(cert_i, None, creds)
            }
            (MessageType::M4RespCertAndKem, Body::CertAndKem(cert_j, ct, sig)) => {
                self.on_peer_cert(cert_j, Some((ct, sig)), creds)
            }
            (MessageType::M3VerResp | MessageType::M6VerResp, Body::VerResp(resp)) => {
                let digest = self.request_digest.expect("request sent before verdict");
                match open_response(&creds.kem_sk, &resp, &digest) {
                    Ok(true) => self.peer_hakf_ok = true,
                    Ok(false) => return Err(FailReason::HakfRejected),
                    Err(HakfError::DigestMismatch) => return Err(FailReason::DigestMismatch),
                    Err(_) => return Err(FailReason::SealAuthentication),
                }
                self.finish(creds, rng)
            }
            _ => Err(FailReason::Malformed("body does not match message type".into())),
        }
    }

    /// Local signature check, then ask HAKF about the peer.
    fn on_peer_cert(
        &mut self,
        peer: Certificate,
        ct: Option<(Ciphertext, Signature)>,
        creds: &mut Credentials,
    ) -> Result<Vec<Outbound>, FailReason> {
        if let Some(expected) = &self.expected_peer {
            if &peer.user_id != expected {
                return Err(FailReason::UnexpectedPeer {
                    expected: expected.clone(),
                    found: peer.user_id,
                });
            }
        }
        if !verify_signature(&peer) {
            return Err(FailReason::PeerSignatureInvalid);
        }
        self.peer_signature_ok = true;
        peer.kem_public_key(&self.params)
            .map_err(|e| FailReason::Malformed(e.to_string()))?;
        if self.own_cert.is_none() {
            self.own_cert = Some(creds.issue()?);
        }
        let own = self.own_cert.as_ref().expect("set above");
        let ct = match ct {
            Some((ct, sig)) => {
                let binding = kem_binding(&self.session_id, &self.nonce, own, &peer, &ct);
                let key = peer.verification_key().ok_or(FailReason::PeerSignatureInvalid)?;
                if !pqc_sign::verify(key, &binding, &sig) {
                    return Err(FailReason::BindingInvalid);
                }
                Some(ct)
            }
            None => None,
        };
        let req = VerificationRequest {
            subject_cert: peer.clone(),
            requester_cert: self.own_cert.clone().expect("set above"),
        };
        self.request_digest = Some(req.digest());
        self.peer_cert = Some(peer);
        self.pending_ct = ct;
        let (msg_type, next) = match self.role {
            Role::Responder => (MessageType::M2VerReq, SessionState::AwaitHakfVerdict),
            Role::Initiator => (MessageType::M5VerReq, SessionState::AwaitOwnVerdict),
        };
        self.state = next;
        Ok(vec![self.emit(Destination::Hakf, self.message(msg_type, Body::VerReq(req)))])
    }

    /// Verdict was true: derive the key. The responder also sends M4.
    fn finish<R: RngCore + CryptoRng>(&mut self, creds: &mut Credentials, rng: &mut R) -> Result<Vec<Outbound>, FailReason> {
        let own = self.own_cert.clone().expect("own certificate issued");
        let peer = self.peer_cert.clone().expect("peer certificate stored");
        debug_assert!(self.peer_signature_ok && self.peer_hakf_ok);
        match self.role {
            Role::Responder => {
                let peer_pk = peer
                    .kem_public_key(&self.params)
                    .map_err(|e| FailReason::Malformed(e.to_string()))?;
                let mut coins = [0u8; 32];
                rng.fill_bytes(&mut coins);
                let (ct, ss) = encapsulate(&peer_pk, &coins).map_err(|e| FailReason::Credential(e.to_string()))?;
                let binding = kem_binding(&self.session_id, &self.nonce, &peer, &own, &ct);
                let sig = creds.signer.sign(&binding).map_err(|e| FailReason::from(CertError::Sign(e)))?;
                self.session_key = Some(derive_session_key(ss.as_bytes(), &self.nonce, &peer, &own));
                self.state = SessionState::Established;
                Ok(vec![self.emit(
                    Destination::Peer,
                    self.message(MessageType::M4RespCertAndKem, Body::CertAndKem(own, ct, sig)),
                )])
            }
            Role::Initiator => {
                let ct = self.pending_ct.take().expect("ciphertext stored from M4");
                let ss = decapsulate(&creds.kem_sk, &ct).map_err(|e| FailReason::Malformed(e.to_string()))?;
                self.session_key = Some(derive_session_key(ss.as_bytes(), &self.nonce, &own, &peer));
                self.state = SessionState::Established;
                Ok(Vec::new())
            }
        }
    }
}
