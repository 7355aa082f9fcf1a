//! Fixtures shared by the benchmarks.

use zt5g_core::{CertificateDb, Credentials, Hakf, KemParams};

/// Two enrolled users and an authority that knows both.
pub fn enrolled_pair(params: KemParams, sign_height: u8) -> (Credentials, Credentials, Hakf) {
    let a = Credentials::generate("alice", &[1; 32], 8, sign_height, &params).expect("alice");
    let b = Credentials::generate("bob", &[2; 32], 8, sign_height, &params).expect("bob");
    let mut db = CertificateDb::new();
    for c in [&a, &b] {
        let image = c.device.enumerate_image(c.user_id()).expect("image");
        db.register_user(c.user_id(), image).expect("fresh id");
    }
    (a, b, Hakf::new(db, params))
}
