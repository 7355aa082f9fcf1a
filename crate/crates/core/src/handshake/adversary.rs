//! Active attackers for the in-memory driver, and repeatable drills built
//! on them.

use std::collections::BTreeMap;

use rand::{CryptoRng, Rng, RngCore};

use super::driver::{run_handshake, serve_hakf, Hop, Interceptor, Passive};
use super::{kem_binding, Body, Credentials, HandshakeMessage, HandshakeSession, MessageType, HEADER_BYTES};
use crate::certs::Certificate;
use crate::hakf::Hakf;
use crate::lattice_kem::encapsulate;

/// Replaces the certificate in M1 or M4 with one issued by the attacker,
/// re-encapsulating to the initiator and signing the binding for M4.
pub struct MitmSubstitute {
    pub attacker: Credentials,
    pub target: MessageType,
    coins: [u8; 32],
    initiator_cert: Option<Certificate>,
}

impl MitmSubstitute {
    pub fn new(attacker: Credentials, target: MessageType, coins: [u8; 32]) -> Self {
        assert!(matches!(target, MessageType::M1InitCert | MessageType::M4RespCertAndKem));
        MitmSubstitute {
            attacker,
            target,
            coins,
            initiator_cert: None,
        }
    }
}

impl Interceptor for MitmSubstitute {
    fn intercept(&mut self, hop: Hop, bytes: Vec<u8>) -> Option<Vec<u8>> {
        let params = *self.attacker.params();
        if hop.msg_type == MessageType::M1InitCert {
            if let Ok(HandshakeMessage { body: Body::Cert(c), .. }) = HandshakeMessage::decode(&bytes, &params) {
                self.initiator_cert = Some(c);
            }
        }
        if hop.msg_type != self.target {
            return Some(bytes);
        }
        let Ok(mut msg) = HandshakeMessage::decode(&bytes, &params) else {
            return Some(bytes);
        };
        let Ok(own) = self.attacker.issue() else {
            return Some(bytes);
        };
        msg.body = match msg.body {
            Body::Cert(_) => Body::Cert(own),
            Body::CertAndKem(..) => {
                // The initiator's key was in M1, so the attacker can produce
                // a fresh ciphertext whose secret it knows.
                let Some(victim) = &self.initiator_cert else {
                    return Some(bytes);
                };
                let Ok(victim_pk) = victim.kem_public_key(&params) else {
                    return Some(bytes);
                };
                let Ok((ct, _)) = encapsulate(&victim_pk, &self.coins) else {
                    return Some(bytes);
                };
                let binding = kem_binding(&msg.session_id, &msg.nonce, victim, &own, &ct);
                let Ok(sig) = self.attacker.signer.sign(&binding) else {
                    return Some(bytes);
                };
                Body::CertAndKem(own, ct, sig)
            }
            other => other,
        };
        Some(msg.encode())
    }
}

/// XORs `mask` into one byte of the certificate carried by `target`.
pub struct TamperCert {
    pub target: MessageType,
    pub offset: usize,
    pub mask: u8,
}

impl Interceptor for TamperCert {
    fn intercept(&mut self, hop: Hop, mut bytes: Vec<u8>) -> Option<Vec<u8>> {
        if hop.msg_type == self.target {
            if let Some(b) = bytes.get_mut(HEADER_BYTES + self.offset) {
                *b ^= self.mask;
            }
        }
        Some(bytes)
    }
}

/// Swaps the sealed verdict on `target` for a stale one recorded earlier,
/// rewriting the header so it matches the live session.
pub struct ResponseReplay {
    pub target: MessageType,
    pub stale: Vec<u8>,
}

impl Interceptor for ResponseReplay {
    fn intercept(&mut self, hop: Hop, bytes: Vec<u8>) -> Option<Vec<u8>> {
        if hop.msg_type != self.target || bytes.len() < HEADER_BYTES {
            return Some(bytes);
        }
        let mut out = self.stale.clone();
        out[..HEADER_BYTES].copy_from_slice(&bytes[..HEADER_BYTES]);
        Some(out)
    }
}

/// Records every M3 and M6 in flight.
#[derive(Default)]
struct Recorder {
    m3: Vec<Vec<u8>>,
    m6: Vec<Vec<u8>>,
}

impl Interceptor for Recorder {
    fn intercept(&mut self, hop: Hop, bytes: Vec<u8>) -> Option<Vec<u8>> {
        match hop.msg_type {
            MessageType::M3VerResp => self.m3.push(bytes.clone()),
            MessageType::M6VerResp => self.m6.push(bytes.clone()),
            _ => {}
        }
        Some(bytes)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DrillReport {
    pub trials: u64,
    /// Trials where the attacked endpoint ended in `Failed`.
    pub failed: u64,
    /// Trials where the attacked endpoint reached `Established`.
    pub false_acceptances: u64,
    /// Failure class of the attacked endpoint, counted.
    pub reasons: BTreeMap<&'static str, u64>,
}

impl DrillReport {
    fn record(&mut self, accepted: bool, target: &HandshakeSession) {
        self.trials += 1;
        if accepted {
            self.false_acceptances += 1;
        }
        if let Some(r) = target.failure() {
            self.failed += 1;
            *self.reasons.entry(r.class()).or_default() += 1;
        }
    }

    pub fn all_failed(&self) -> bool {
        self.trials > 0 && self.failed == self.trials && self.false_acceptances == 0
    }
}

fn attacker<R: RngCore>(claimed_id: &str, honest: &Credentials, rng: &mut R) -> Credentials {
    let p = *honest.params();
    Credentials::generate(claimed_id, &rng.gen(), honest.device.challenge_bits(), 1, &p)
        .expect("attacker credentials")
}

/// The attacker claims `victim_id` using its own keys and device. It plays
/// the initiator towards `honest` or the responder to `honest`'s initiation,
/// chosen at random per trial.
pub fn spoof_drill<R: RngCore + CryptoRng>(
    honest: &mut Credentials,
    victim_id: &str,
    hakf: &Hakf,
    trials: u64,
    rng: &mut R,
) -> DrillReport {
    let mut report = DrillReport::default();
    for _ in 0..trials {
        let mut spoofer = attacker(victim_id, honest, rng);
        if rng.gen() {
            let out = run_handshake(&mut spoofer, honest, hakf, rng, &mut Passive);
            report.record(out.responder_accepted, &out.responder);
        } else {
            let out = run_handshake(honest, &mut spoofer, hakf, rng, &mut Passive);
            report.record(out.initiator_accepted, &out.initiator);
        }
    }
    report
}

/// A man in the middle swaps its own certificate into M1 or M4. Half the
/// time it claims the replaced party's ID, otherwise its own.
pub fn mitm_drill<R: RngCore + CryptoRng>(
    initiator: &mut Credentials,
    responder: &mut Credentials,
    hakf: &Hakf,
    trials: u64,
    rng: &mut R,
) -> DrillReport {
    let mut report = DrillReport::default();
    for t in 0..trials {
        let on_m4: bool = rng.gen();
        let replaced = if on_m4 { responder.user_id() } else { initiator.user_id() };
        let claim = if rng.gen() { replaced.to_owned() } else { format!("mallory-{t}") };
        let target = if on_m4 { MessageType::M4RespCertAndKem } else { MessageType::M1InitCert };
        let mut mitm = MitmSubstitute::new(attacker(&claim, initiator, rng), target, rng.gen());
        let out = run_handshake(initiator, responder, hakf, rng, &mut mitm);
        if on_m4 {
            report.record(out.initiator_accepted, &out.initiator);
        } else {
            report.record(out.responder_accepted, &out.responder);
        }
    }
    report
}

/// Takes one M1 and flips every byte of its certificate in turn, each with
/// a random non-zero mask, feeding the result to a fresh responder and
/// forwarding its request to HAKF.
pub fn certificate_tamper_drill<R: RngCore + CryptoRng>(
    initiator: &mut Credentials,
    responder: &mut Credentials,
    hakf: &Hakf,
    rng: &mut R,
) -> DrillReport {
    let params = *initiator.params();
    let mut session = HandshakeSession::initiator(responder.user_id(), params);
    let m1 = session.initiate(initiator, rng).expect("honest initiator").bytes;
    let mut report = DrillReport::default();
    for offset in 0..m1.len() - HEADER_BYTES {
        let mut bytes = m1.clone();
        bytes[HEADER_BYTES + offset] ^= rng.gen_range(1..=255u8);
        let mut resp = HandshakeSession::responder(params);
        if let Ok(out) = resp.on_message(&bytes, responder, rng) {
            for o in out {
                match serve_hakf(hakf, &o.bytes, rng) {
                    Ok(reply) => {
                        let _ = resp.on_message(&reply, responder, rng);
                    }
                    Err(_) => resp.abort(super::FailReason::Timeout),
                }
            }
        }
        report.record(resp.is_established(), &resp);
    }
    report
}

/// Records genuine `true` verdicts from `warmup` honest runs, then replays
/// a random one into each trial on the M3 or M6 leg.
pub fn verdict_replay_drill<R: RngCore + CryptoRng>(
    initiator: &mut Credentials,
    responder: &mut Credentials,
    hakf: &Hakf,
    warmup: usize,
    trials: u64,
    rng: &mut R,
) -> DrillReport {
    let mut rec = Recorder::default();
    for _ in 0..warmup {
        let out = run_handshake(initiator, responder, hakf, rng, &mut rec);
        assert!(out.both_established(), "warmup handshakes must succeed");
    }
    let mut report = DrillReport::default();
    for _ in 0..trials {
        let on_m3: bool = rng.gen();
        let pool = if on_m3 { &rec.m3 } else { &rec.m6 };
        let stale = pool[rng.gen_range(0..pool.len())].clone();
        let target = if on_m3 { MessageType::M3VerResp } else { MessageType::M6VerResp };
        let mut replay = ResponseReplay { target, stale };
        let out = run_handshake(initiator, responder, hakf, rng, &mut replay);
        if on_m3 {
            report.record(out.responder_accepted, &out.responder);
        } else {
            report.record(out.initiator_accepted, &out.initiator);
        }
    }
    report
}
