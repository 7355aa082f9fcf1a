#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use std::collections::HashSet;

use zt5g_core::handshake::{
    serve_hakf, Credentials, FailReason, HandshakeSession, MessageType, Role, SessionState,
};
use zt5g_core::lattice_kem::{
    cbd_poly, expand_matrix, pke_decrypt, pke_encrypt, pke_keygen, sample_noise, KemParams,
};
use zt5g_core::{CertificateDb, Hakf};

pub mod oracle {
    pub type Poly = Vec<i64>;

    pub fn lift(p: &zt5g_core::lattice_kem::RingElement) -> Poly {
        p.coeffs().iter().map(|&c| c as i64).collect()
    }

    /// `a * b mod (X^n + 1, q)`.
    pub fn mul(a: &Poly, b: &Poly, q: i64) -> Poly {
        let n = a.len();
        let mut out = vec![0i64; n];
        for i in 0..n {
            for j in 0..n {
                let prod = a[i] * b[j];
                if i + j < n {
                    out[i + j] += prod;
                } else {
                    out[i + j - n] -= prod;
                }
            }
        }
        out.into_iter().map(|c| c.rem_euclid(q)).collect()
    }

    pub fn add(a: &Poly, b: &Poly, q: i64) -> Poly {
        a.iter().zip(b).map(|(x, y)| (x + y).rem_euclid(q)).collect()
    }

    pub fn sub(a: &Poly, b: &Poly, q: i64) -> Poly {
        a.iter().zip(b).map(|(x, y)| (x - y).rem_euclid(q)).collect()
    }

    pub fn compress(x: i64, d: u32, q: i64) -> u32 {
        let scaled = (x as f64 * (1u64 << d) as f64 / q as f64).round() as u64;
        (scaled % (1u64 << d)) as u32
    }

    pub fn decompress(y: u32, d: u32, q: i64) -> i64 {
        (y as f64 * q as f64 / (1u64 << d) as f64).round() as i64
    }

    pub fn compress_poly(p: &Poly, d: u32, q: i64) -> Vec<u32> {
        p.iter().map(|&x| compress(x, d, q)).collect()
    }

    pub fn decompress_poly(c: &[u32], d: u32, q: i64) -> Poly {
        c.iter().map(|&y| decompress(y, d, q)).collect()
    }
}

pub fn inputs(seed: u8) -> ([u8; 32], [u8; 32], [u8; 32], Vec<u8>) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed as u64);
    (rng.gen(), rng.gen(), rng.gen(), vec![seed])
}

/// Runs keygen, encrypt and decrypt through both the library and the
/// oracle and asserts every intermediate compressed value agrees.
pub fn check_against_oracle(p: &KemParams, seed: u8) {
    let q = p.q as i64;
    let k = p.k;
    let (rho, sigma, coins, mut msg) = inputs(seed);
    msg.resize(p.message_bytes(), seed.wrapping_mul(31));
    if p.n < 8 {
        msg[0] &= (1 << p.n) - 1;
    }

    let (pk, s_lib) = pke_keygen(&rho, &sigma, p);
    let a: Vec<Vec<oracle::Poly>> = expand_matrix(&rho, p).iter().map(|r| r.iter().map(oracle::lift).collect()).collect();
    let (s, e) = sample_noise(&sigma, p);
    let s: Vec<oracle::Poly> = s.iter().map(oracle::lift).collect();
    let e: Vec<oracle::Poly> = e.iter().map(oracle::lift).collect();
    for i in 0..k {
        let mut acc = e[i].clone();
        for j in 0..k {
            acc = oracle::add(&acc, &oracle::mul(&a[i][j], &s[j], q), q);
        }
        assert_eq!(pk.t_compressed()[i], oracle::compress_poly(&acc, p.d_t, q), "t[{i}] seed {seed}");
    }

    let ct = pke_encrypt(&pk, &msg, &coins);
    let r: Vec<oracle::Poly> = (0..k).map(|i| oracle::lift(&cbd_poly(&coins, i as u8, p))).collect();
    let e1: Vec<oracle::Poly> = (0..k).map(|i| oracle::lift(&cbd_poly(&coins, (k + i) as u8, p))).collect();
    let e2 = oracle::lift(&cbd_poly(&coins, 2 * k as u8, p));
    for j in 0..k {
        let mut acc = e1[j].clone();
        for i in 0..k {
            acc = oracle::add(&acc, &oracle::mul(&a[i][j], &r[i], q), q);
        }
        assert_eq!(ct.u_compressed()[j], oracle::compress_poly(&acc, p.d_u, q), "u[{j}] seed {seed}");
    }
    let t_hat: Vec<oracle::Poly> = pk.t_compressed().iter().map(|c| oracle::decompress_poly(c, p.d_t, q)).collect();
    let mut v = e2;
    for i in 0..k {
        v = oracle::add(&v, &oracle::mul(&t_hat[i], &r[i], q), q);
    }
    let m_poly: oracle::Poly = (0..p.n).map(|i| ((msg[i / 8] >> (i % 8)) & 1) as i64 * ((q + 1) / 2)).collect();
    v = oracle::add(&v, &m_poly, q);
    assert_eq!(ct.v_compressed(), oracle::compress_poly(&v, p.d_v, q).as_slice(), "v seed {seed}");

    let u_hat: Vec<oracle::Poly> = ct.u_compressed().iter().map(|c| oracle::decompress_poly(c, p.d_u, q)).collect();
    let mut w = oracle::decompress_poly(ct.v_compressed(), p.d_v, q);
    for i in 0..k {
        w = oracle::sub(&w, &oracle::mul(&s[i], &u_hat[i], q), q);
    }
    let mut expected = vec![0u8; p.message_bytes()];
    for (i, &c) in w.iter().enumerate() {
        expected[i / 8] |= (oracle::compress(c, 1, q) as u8) << (i % 8);
    }
    assert_eq!(pke_decrypt(&s_lib, &ct), expected, "decrypt seed {seed}");
}

pub fn party(id: &str, seed: u8, height: u8, p: &KemParams) -> Credentials {
    Credentials::generate(id, &[seed; 32], 4, height, p).unwrap()
}

pub fn authority(parties: &[&Credentials], p: KemParams) -> Hakf {
    let mut db = CertificateDb::new();
    for c in parties {
        db.register_user(c.user_id(), c.device.enumerate_image(c.user_id()).unwrap())
            .unwrap();
    }
    Hakf::new(db, p)
}

pub struct Snapshots {
    pub sessions: Vec<(Role, HandshakeSession)>,
    pub messages: Vec<Vec<u8>>,
}

/// Walks one honest handshake by hand, keeping a copy of each endpoint in
/// every state it passes through and all six messages.
pub fn walk(a: &mut Credentials, b: &mut Credentials, hakf: &Hakf, rng: &mut ChaCha20Rng) -> Snapshots {
    let p = *a.params();
    let mut sessions = Vec::new();
    let mut i = HandshakeSession::initiator(b.user_id(), p);
    sessions.push((Role::Initiator, i.clone()));
    let m1 = i.initiate(a, rng).unwrap().bytes;
    sessions.push((Role::Initiator, i.clone()));
    let mut r = HandshakeSession::responder(p);
    sessions.push((Role::Responder, r.clone()));
    let m2 = r.on_message(&m1, b, rng).unwrap().remove(0).bytes;
    sessions.push((Role::Responder, r.clone()));
    let m3 = serve_hakf(hakf, &m2, rng).unwrap();
    let m4 = r.on_message(&m3, b, rng).unwrap().remove(0).bytes;
    sessions.push((Role::Responder, r.clone()));
    let m5 = i.on_message(&m4, a, rng).unwrap().remove(0).bytes;
    sessions.push((Role::Initiator, i.clone()));
    let m6 = serve_hakf(hakf, &m5, rng).unwrap();
    assert!(i.on_message(&m6, a, rng).unwrap().is_empty());
    sessions.push((Role::Initiator, i.clone()));
    assert_eq!(i.session_key(), r.session_key());
    let mut failed_i = i.clone();
    failed_i.abort(FailReason::Timeout);
    sessions.push((Role::Initiator, failed_i));
    let mut failed_r = r.clone();
    failed_r.abort(FailReason::Timeout);
    sessions.push((Role::Responder, failed_r));
    Snapshots {
        sessions,
        messages: vec![m1, m2, m3, m4, m5, m6],
    }
}


pub struct MatrixReport {
    pub pairs: usize,
    pub legal: usize,
    pub violations: Vec<String>,
    pub all_states_seen: bool,
}

/// Feeds every message type to a copy of each endpoint in every state it
/// can occupy. Illegal pairs must end in `Failed` with no key; legal ones
/// must not fail.
pub fn fail_closed_matrix(p: &KemParams, seed: u64) -> MatrixReport {
    let mut a = party("alice", 1, 6, p);
    let mut b = party("bob", 2, 6, p);
    let hakf = authority(&[&a, &b], *p);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let snap = walk(&mut a, &mut b, &hakf, &mut rng);

    let mut report = MatrixReport {
        pairs: 0,
        legal: 0,
        violations: Vec::new(),
        all_states_seen: false,
    };
    let mut seen = HashSet::new();
    for (role, session) in &snap.sessions {
        seen.insert((*role, session.state().name()));
        for t in MessageType::ALL {
            report.pairs += 1;
            let mut s = session.clone();
            let creds = if *role == Role::Initiator { &mut a } else { &mut b };
            let before = s.transcript_messages();
            let out = s.on_message(&snap.messages[t as usize - 1], creds, &mut rng);
            let label = format!("{role:?}/{}/{t}", session.state().name());
            // One entry for the message received, one per message sent.
            let sent = out.as_ref().map_or(0, Vec::len) as u64;
            if s.transcript_messages() != before + 1 + sent {
                report.violations.push(format!("{label}: transcript"));
            }
            if session.state().expects(*role) == Some(t) {
                report.legal += 1;
                if out.is_err() || s.is_failed() {
                    report.violations.push(format!("{label}: legal input rejected"));
                }
            } else if out.is_ok() || !s.is_failed() || s.session_key().is_some() || s.state() == &SessionState::Established {
                report.violations.push(format!("{label}: not fail-closed"));
            }
        }
    }
    let expected: HashSet<(Role, &str)> = [
        (Role::Initiator, "Idle"),
        (Role::Initiator, "SentCert"),
        (Role::Initiator, "AwaitOwnVerdict"),
        (Role::Initiator, "Established"),
        (Role::Initiator, "Failed"),
        (Role::Responder, "AwaitPeerCert"),
        (Role::Responder, "AwaitHakfVerdict"),
        (Role::Responder, "Established"),
        (Role::Responder, "Failed"),
    ]
    .into_iter()
    .collect();
    report.all_states_seen = seen == expected;
    report
}
