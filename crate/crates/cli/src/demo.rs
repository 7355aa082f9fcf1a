//! `handshake`: one local run between two enrolled users, optionally with
//! an active attacker on the wire.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use zt5g_core::handshake::{
    run_handshake, Hop, Interceptor, MitmSubstitute, Passive, ResponseReplay, RunOutcome, HEADER_BYTES,
};
use zt5g_core::{Credentials, FailReason, Hakf, HandshakeSession, MessageType};

use crate::failure::{fail, Failure};
use crate::workspace::Workspace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Adversary {
    /// Substitute the attacker's certificate, claiming the initiator's ID, into M1.
    Mitm,
    /// The attacker initiates under the initiator's ID with its own keys.
    Spoof,
    /// Flip one byte of the certificate in M1.
    TamperCert,
    /// Replay a verdict from an earlier session into M3.
    TamperVerdict,
}

/// Records M3 of a warm-up run.
#[derive(Default)]
struct Capture(Option<Vec<u8>>);

impl Interceptor for Capture {
    fn intercept(&mut self, hop: Hop, bytes: Vec<u8>) -> Option<Vec<u8>> {
        if hop.msg_type == MessageType::M3VerResp {
            self.0 = Some(bytes.clone());
        }
        Some(bytes)
    }
}

fn state_line(name: &str, s: &HandshakeSession) -> String {
    match s.failure() {
        Some(r) => format!("{name}: Failed reason={} ({r})", r.class()),
        None => format!("{name}: {}", s.state().name()),
    }
}

fn report(out: &mut impl Write, o: &RunOutcome) -> std::io::Result<()> {
    for t in &o.trace {
        writeln!(
            out,
            "{} {} -> {} {} bytes{}",
            t.hop.msg_type,
            t.hop.from,
            t.hop.to,
            t.bytes,
            if t.delivered { "" } else { " (dropped)" }
        )?;
    }
    writeln!(out, "{}", state_line("initiator", &o.initiator))?;
    writeln!(out, "{}", state_line("responder", &o.responder))?;
    for (name, s) in [("initiator", &o.initiator), ("responder", &o.responder)] {
        if let Some(k) = s.session_key() {
            writeln!(out, "{name} key fingerprint: {}", k.fingerprint())?;
        }
    }
    Ok(())
}

/// The reason to report. A side that was left waiting or torn down is a
/// consequence of the other side's failure, so it ranks last.
fn primary_failure(o: &RunOutcome) -> Option<Failure> {
    let rank = |r: &FailReason| match r {
        FailReason::PeerAborted => 2,
        FailReason::Timeout => 1,
        _ => 0,
    };
    [o.initiator.failure(), o.responder.failure()]
        .into_iter()
        .flatten()
        .min_by_key(|r| rank(r))
        .map(Failure::from)
}

fn attacker(claimed: &str, like: &Credentials, rng: &mut ChaCha20Rng) -> anyhow::Result<Credentials> {
    Credentials::generate(claimed, &rng.gen(), like.device.challenge_bits(), 1, like.params())
        .map_err(|e| Failure::new("credential", e.to_string()).into())
}

pub fn run(
    ws: &Workspace,
    initiator_id: &str,
    responder_id: &str,
    adversary: Option<Adversary>,
    rng: &mut ChaCha20Rng,
    out: &mut impl Write,
) -> anyhow::Result<()> {
    if initiator_id == responder_id {
        return fail("unknown-id", "initiator and responder must differ");
    }
    let params = ws.params()?;
    let db = ws.load_db()?;
    let mut i = ws.load(initiator_id)?;
    let mut r = ws.load(responder_id)?;
    for id in [initiator_id, responder_id] {
        if !db.contains(id) {
            return fail("unknown-id", format!("{id} is not in the HAKF database; rerun init-db"));
        }
    }
    let hakf = Hakf::new(db, params);

    // Initiator signs its certificate; responder its certificate and the
    // ciphertext binding. The verdict replay needs a warm-up run first.
    let runs = if adversary == Some(Adversary::TamperVerdict) { 2 } else { 1 };
    ws.reserve_signatures(&i, runs)?;
    ws.reserve_signatures(&r, 2 * runs)?;

    if let Some(a) = adversary {
        writeln!(out, "adversary: {a:?}")?;
    }
    let outcome = match adversary {
        None => run_handshake(&mut i, &mut r, &hakf, rng, &mut Passive),
        Some(Adversary::Spoof) => {
            let mut spoofer = attacker(initiator_id, &i, rng)?;
            run_handshake(&mut spoofer, &mut r, &hakf, rng, &mut Passive)
        }
        Some(Adversary::Mitm) => {
            let mut mitm = MitmSubstitute::new(attacker(initiator_id, &i, rng)?, MessageType::M1InitCert, rng.gen());
            run_handshake(&mut i, &mut r, &hakf, rng, &mut mitm)
        }
        Some(Adversary::TamperCert) => {
            let (pick, mask) = (rng.gen::<u64>(), rng.gen_range(1..=255u8));
            let mut flipped = None;
            let mut tamper = |hop: Hop, mut bytes: Vec<u8>| {
                if hop.msg_type == MessageType::M1InitCert && bytes.len() > HEADER_BYTES {
                    let offset = (pick % (bytes.len() - HEADER_BYTES) as u64) as usize;
                    bytes[HEADER_BYTES + offset] ^= mask;
                    flipped = Some(offset);
                }
                Some(bytes)
            };
            let o = run_handshake(&mut i, &mut r, &hakf, rng, &mut tamper);
            if let Some(offset) = flipped {
                writeln!(out, "flipped certificate byte {offset} with mask {mask:#04x}")?;
            }
            o
        }
        Some(Adversary::TamperVerdict) => {
            let mut capture = Capture::default();
            let warmup = run_handshake(&mut i, &mut r, &hakf, rng, &mut capture);
            let stale = match (warmup.both_established(), capture.0) {
                (true, Some(m3)) => m3,
                _ => return Err(primary_failure(&warmup).unwrap_or(Failure::new("timeout", "warm-up run failed")).into()),
            };
            writeln!(out, "recorded a genuine M3 from a warm-up session")?;
            let mut replay = ResponseReplay {
                target: MessageType::M3VerResp,
                stale,
            };
            run_handshake(&mut i, &mut r, &hakf, rng, &mut replay)
        }
    };
    // Leaves between the real counter and the reservation were never
    // used, so handing them back is safe.
    ws.save_signer(initiator_id, &i.signer)?;
    ws.save_signer(responder_id, &r.signer)?;

    report(out, &outcome)?;
    if outcome.both_established() {
        if !outcome.keys_agree() {
            return fail("key-mismatch", "both ends established but derived different keys");
        }
        writeln!(out, "result: ok")?;
        return Ok(());
    }
    let failure = primary_failure(&outcome).unwrap_or(Failure::new("timeout", "handshake did not complete"));
    writeln!(out, "result: failed reason={}", failure.class)?;
    Err(failure.into())
}
