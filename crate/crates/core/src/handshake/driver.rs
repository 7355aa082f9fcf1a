use std::collections::VecDeque;

use rand::{CryptoRng, RngCore};

use super::{Credentials, Destination, FailReason, HandshakeMessage, HandshakeSession, MessageType};
use crate::hakf::{Hakf, HakfError};
use crate::handshake::Body;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Node {
    Initiator,
    Responder,
    Hakf,
}

impl std::fmt::Display for Node {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Node::Initiator => "initiator",
            Node::Responder => "responder",
            Node::Hakf => "hakf",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hop {
    pub from: Node,
    pub to: Node,
    pub msg_type: MessageType,
}

/// Sits on every link. May rewrite or drop (`None`) a message in flight.
pub trait Interceptor {
    fn intercept(&mut self, hop: Hop, bytes: Vec<u8>) -> Option<Vec<u8>>;
}

/// Delivers everything unchanged.
pub struct Passive;

impl Interceptor for Passive {
    fn intercept(&mut self, _: Hop, bytes: Vec<u8>) -> Option<Vec<u8>> {
        Some(bytes)
    }
}

impl<F: FnMut(Hop, Vec<u8>) -> Option<Vec<u8>>> Interceptor for F {
    fn intercept(&mut self, hop: Hop, bytes: Vec<u8>) -> Option<Vec<u8>> {
        self(hop, bytes)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub hop: Hop,
    pub bytes: usize,
    pub delivered: bool,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub initiator: HandshakeSession,
    pub responder: HandshakeSession,
    pub trace: Vec<TraceEntry>,
    /// Set when HAKF refused to answer a request.
    pub hakf_error: Option<HakfError>,
    /// Whether each side reached `Established` at any point, before any
    /// teardown caused by the other side failing.
    pub initiator_accepted: bool,
    pub responder_accepted: bool,
}

impl RunOutcome {
    pub fn both_established(&self) -> bool {
        self.initiator.is_established() && self.responder.is_established()
    }

    pub fn keys_agree(&self) -> bool {
        match (self.initiator.session_key(), self.responder.session_key()) {
            (Some(a), Some(b)) => a == b,
            _ => false,
        }
    }
}

/// Answers an M2 or M5 with the matching M3 or M6 under the same header.
pub fn serve_hakf<R: RngCore + CryptoRng>(hakf: &Hakf, bytes: &[u8], rng: &mut R) -> Result<Vec<u8>, HakfError> {
    let msg = HandshakeMessage::decode(bytes, hakf.params()).map_err(|e| HakfError::Protocol(e.0))?;
    let reply_type = match msg.msg_type {
        MessageType::M2VerReq => MessageType::M3VerResp,
        MessageType::M5VerReq => MessageType::M6VerResp,
        other => return Err(HakfError::Protocol(format!("HAKF does not accept {other}"))),
    };
    let Body::VerReq(req) = &msg.body else {
        return Err(HakfError::Protocol("expected a verification request".into()));
    };
    let resp = hakf.verify(req, rng)?;
    Ok(HandshakeMessage {
        msg_type: reply_type,
        session_id: msg.session_id,
        nonce: msg.nonce,
        body: Body::VerResp(resp),
    }
    .encode())
}

/// Runs one handshake over an in-memory transport.
///
/// Every message passes through `adversary`. Whichever side is still
/// waiting when the network goes quiet is failed with `Timeout`.
pub fn run_handshake<R: RngCore + CryptoRng>(
    initiator_creds: &mut Credentials,
    responder_creds: &mut Credentials,
    hakf: &Hakf,
    rng: &mut R,
    adversary: &mut dyn Interceptor,
) -> RunOutcome {
    let params = *initiator_creds.params();
    let mut initiator = HandshakeSession::initiator(responder_creds.user_id(), params);
    let mut responder = HandshakeSession::responder(params);
    let mut trace = Vec::new();
    let mut hakf_error = None;
    let mut queue: VecDeque<(Node, Node, MessageType, Vec<u8>)> = VecDeque::new();

    if let Ok(m1) = initiator.initiate(initiator_creds, rng) {
        queue.push_back((Node::Initiator, Node::Responder, m1.msg_type, m1.bytes));
    }
    while let Some((from, to, msg_type, bytes)) = queue.pop_front() {
        let hop = Hop { from, to, msg_type };
        let len = bytes.len();
        let delivered = adversary.intercept(hop, bytes);
        trace.push(TraceEntry {
            hop,
            bytes: len,
            delivered: delivered.is_some(),
        });
        let Some(bytes) = delivered else { continue };
        let out = match to {
            Node::Hakf => {
                match serve_hakf(hakf, &bytes, rng) {
                    Ok(reply) => {
                        let t = HandshakeMessage::peek_header(&reply).expect("own encoding").0;
                        queue.push_back((Node::Hakf, from, t, reply));
                    }
                    Err(e) => hakf_error = Some(e),
                }
                continue;
            }
            Node::Initiator => initiator.on_message(&bytes, initiator_creds, rng),
            Node::Responder => responder.on_message(&bytes, responder_creds, rng),
        };
        for o in out.unwrap_or_default() {
            let dest = match o.to {
                Destination::Hakf => Node::Hakf,
                Destination::Peer if to == Node::Initiator => Node::Responder,
                Destination::Peer => Node::Initiator,
            };
            queue.push_back((to, dest, o.msg_type, o.bytes));
        }
    }
    let initiator_accepted = initiator.is_established();
    let responder_accepted = responder.is_established();
    for s in [&mut initiator, &mut responder] {
        if !s.is_established() {
            s.abort(FailReason::Timeout);
        }
    }
    // A failed endpoint never uses the channel, so the other side tears
    // down too and no one is left holding a key.
    if initiator.is_failed() {
        responder.abort(FailReason::PeerAborted);
    }
    if responder.is_failed() {
        initiator.abort(FailReason::PeerAborted);
    }
    RunOutcome {
        initiator,
        responder,
        trace,
        hakf_error,
        initiator_accepted,
        responder_accepted,
    }
}
