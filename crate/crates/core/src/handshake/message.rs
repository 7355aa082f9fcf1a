use crate::certs::{Certificate, Reader, FRAME_BYTES};
use crate::hakf::{VerificationRequest, VerificationResponse};
use crate::lattice_kem::{Ciphertext, KemParams};
use crate::pqc_sign::Signature;

pub const SESSION_ID_BYTES: usize = 8;
pub const NONCE_BYTES: usize = 16;
/// `msg_type (1) || session id (8) || nonce (16)`.
pub const HEADER_BYTES: usize = 1 + SESSION_ID_BYTES + NONCE_BYTES;

pub type SessionId = [u8; SESSION_ID_BYTES];
pub type Nonce = [u8; NONCE_BYTES];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum MessageType {
    M1InitCert = 1,
    M2VerReq = 2,
    M3VerResp = 3,
    M4RespCertAndKem = 4,
    M5VerReq = 5,
    M6VerResp = 6,
}

impl MessageType {
    pub const ALL: [MessageType; 6] = [
        MessageType::M1InitCert,
        MessageType::M2VerReq,
        MessageType::M3VerResp,
        MessageType::M4RespCertAndKem,
        MessageType::M5VerReq,
        MessageType::M6VerResp,
    ];

    pub fn from_byte(b: u8) -> Option<Self> {
        Self::ALL.get((b as usize).wrapping_sub(1)).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            MessageType::M1InitCert => "M1",
            MessageType::M2VerReq => "M2",
            MessageType::M3VerResp => "M3",
            MessageType::M4RespCertAndKem => "M4",
            MessageType::M5VerReq => "M5",
            MessageType::M6VerResp => "M6",
        }
    }
}

impl std::fmt::Display for MessageType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Body {
    Cert(Certificate),
    VerReq(VerificationRequest),
    VerResp(VerificationResponse),
    /// Responder certificate, ciphertext, and the responder's signature
    /// over the ciphertext binding.
    CertAndKem(Certificate, Ciphertext, Signature),
}

/// One protocol message. The body variant must match `msg_type`:
/// M1 `Cert`, M2/M5 `VerReq`, M3/M6 `VerResp`, M4 `CertAndKem`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HandshakeMessage {
    pub msg_type: MessageType,
    pub session_id: SessionId,
    pub nonce: Nonce,
    pub body: Body,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed message: {0}")]
pub struct DecodeError(pub String);

fn pad_to_frame(out: &mut Vec<u8>, body_start: usize) {
    let body = out.len() - body_start;
    out.resize(body_start + body.div_ceil(FRAME_BYTES) * FRAME_BYTES, 0);
}

impl HandshakeMessage {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_BYTES + 2 * FRAME_BYTES);
        out.push(self.msg_type as u8);
        out.extend_from_slice(&self.session_id);
        out.extend_from_slice(&self.nonce);
        match &self.body {
            Body::Cert(c) => out.extend_from_slice(&c.encode()),
            Body::VerReq(r) => out.extend_from_slice(&r.encode()),
            Body::VerResp(r) => out.extend_from_slice(&r.encode()),
            Body::CertAndKem(c, ct, sig) => {
                out.extend_from_slice(&c.encode());
                for field in [ct.to_bytes().as_slice(), sig.as_bytes()] {
                    out.extend_from_slice(&(field.len() as u16).to_be_bytes());
                    out.extend_from_slice(field);
                }
                pad_to_frame(&mut out, HEADER_BYTES);
            }
        }
        out
    }

    /// Reads only the header.
    pub fn peek_header(bytes: &[u8]) -> Option<(MessageType, SessionId, Nonce)> {
        let t = MessageType::from_byte(*bytes.first()?)?;
        let sid = bytes.get(1..1 + SESSION_ID_BYTES)?.try_into().ok()?;
        let nonce = bytes.get(1 + SESSION_ID_BYTES..HEADER_BYTES)?.try_into().ok()?;
        Some((t, sid, nonce))
    }

    pub fn decode(bytes: &[u8], params: &KemParams) -> Result<Self, DecodeError> {
        let err = |s: String| DecodeError(s);
        let (msg_type, session_id, nonce) =
            Self::peek_header(bytes).ok_or_else(|| err("bad header".into()))?;
        let body = &bytes[HEADER_BYTES..];
        let body = match msg_type {
            MessageType::M1InitCert => Body::Cert(Certificate::decode(body).map_err(|e| err(e.to_string()))?),
            MessageType::M2VerReq | MessageType::M5VerReq => {
                Body::VerReq(VerificationRequest::decode(body).map_err(|e| err(e.to_string()))?)
            }
            MessageType::M3VerResp | MessageType::M6VerResp => Body::VerResp(
                VerificationResponse::decode(body, params).map_err(|e| err(e.to_string()))?,
            ),
            MessageType::M4RespCertAndKem => {
                let (cert, used) = Certificate::decode_prefix(body).map_err(|e| err(e.to_string()))?;
                let mut r = Reader::new(&body[used..]);
                let ct_len = r.u16().ok_or_else(|| err("truncated ciphertext".into()))? as usize;
                let ct = r.take(ct_len).ok_or_else(|| err("truncated ciphertext".into()))?;
                let ct = Ciphertext::from_bytes(ct, params).map_err(|e| err(e.to_string()))?;
                let sig_len = r.u16().ok_or_else(|| err("truncated binding signature".into()))? as usize;
                let sig = r.take(sig_len).ok_or_else(|| err("truncated binding signature".into()))?;
                let sig = Signature::from_bytes(sig.to_vec());
                let pad = r.rest();
                if pad.len() >= FRAME_BYTES || pad.iter().any(|&b| b != 0) || !body.len().is_multiple_of(FRAME_BYTES) {
                    return Err(err("non-canonical padding".into()));
                }
                Body::CertAndKem(cert, ct, sig)
            }
        };
        Ok(HandshakeMessage {
            msg_type,
            session_id,
            nonce,
            body,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type_bytes_round_trip() {
        for t in MessageType::ALL {
            assert_eq!(MessageType::from_byte(t as u8), Some(t));
        }
        assert_eq!(MessageType::from_byte(0), None);
        assert_eq!(MessageType::from_byte(7), None);
    }

    #[test]
    fn short_header_rejected() {
        let p = KemParams::toy_noiseless();
        assert!(HandshakeMessage::decode(&[1u8; 10], &p).is_err());
        assert!(HandshakeMessage::decode(&[], &p).is_err());
    }
}
