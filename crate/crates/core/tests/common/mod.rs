#![allow(dead_code)]

use std::sync::Arc;

use chaoskey::primitives::Identity;
use chaoskey::protocol::{
    register_user_begin, CredentialStore, MemoryStore, ProtocolConfig, ServerEndpoint, UserCredentials, UserSession,
};
use chaoskey::transport::{run_handshake, HandshakeOutcome, Loopback};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub const PW: &[u8] = b"correct horse";

pub fn config() -> ProtocolConfig {
    ProtocolConfig::default().with_prime_bits(64)
}

pub fn endpoint_with(store: Arc<dyn CredentialStore>) -> ServerEndpoint {
    ServerEndpoint::new(store, Identity::new("server").unwrap(), config())
}

pub fn endpoint() -> ServerEndpoint {
    endpoint_with(Arc::new(MemoryStore::new()))
}

pub fn enroll(server: &ServerEndpoint, name: &str, seed: u64) -> UserCredentials {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (req, pending) = register_user_begin(Identity::new(name).unwrap(), PW, server.config(), &mut rng).unwrap();
    pending.finish(server.register(&req, &mut rng).unwrap())
}

pub fn loopback(server: &ServerEndpoint, creds: &UserCredentials, pw: &[u8], seed: u64) -> HandshakeOutcome {
    run_handshake(
        UserSession::new(creds.clone(), *server.config()),
        pw,
        server.session(),
        &mut Loopback::new(),
        &mut ChaCha20Rng::seed_from_u64(seed),
        &mut ChaCha20Rng::seed_from_u64(!seed),
    )
    .unwrap()
}
