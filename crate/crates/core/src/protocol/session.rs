//! Per-role handshake state machines.
//!
//! ```text
//! user:   Init --start--> AwaitMsg2 --finish--> Established
//! server: Init --respond--> AwaitMsg3 --verify--> Established
//! ```
//!
//! Any failure moves the session to `Aborted`. `Established` and `Aborted`
//! are terminal; every operation attempted in them fails with `OutOfOrder`.

use std::fmt;
use std::sync::Arc;

use num_bigint::BigUint;
use rand::{CryptoRng, RngCore};

use super::messages::{AuthMsg1, AuthMsg2, AuthMsg3, RegistrationRequest, RegistrationResponse};
use super::registration::register_server_process;
use super::store::{CredentialStore, ServerRecord, UserCredentials};
use super::{AbortReason, ProtocolConfig, ProtocolError};
use crate::census::{HashSite, OpCensus};
use crate::chebyshev::{cheby_keygen, cheby_shared, ChebyParams, FieldElement};
use crate::primitives::{ct_eq, tags, xor_bytes, Digest, HashAlg, Identity, Nonce};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    User,
    Server,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    Init,
    AwaitMsg2,
    AwaitMsg3,
    Established,
    Aborted(AbortReason),
}

impl Phase {
    pub fn is_terminal(&self) -> bool {
        matches!(self, Phase::Established | Phase::Aborted(_))
    }
}

/// 32-byte key handed to the application: `H("sk", encode(sk_i))`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct SessionKey(pub [u8; 32]);

impl SessionKey {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    /// First 8 hex characters, for display.
    pub fn fingerprint(&self) -> String {
        hex::encode(&self.0[..4])
    }
}

impl fmt::Debug for SessionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SessionKey({}..)", self.fingerprint())
    }
}

/// The agreed element `sk_i = T_rs(x) mod N` and the key derived from it.
#[derive(Clone)]
struct Shared {
    encoded: Vec<u8>,
    key: SessionKey,
}

impl Shared {
    fn derive(hash: HashAlg, element: &FieldElement, params: &ChebyParams, census: &mut OpCensus) -> Self {
        let encoded = params.encode_element(element);
        census.hash(HashSite::SessionKey);
        let key = SessionKey(hash.hash_tuple(tags::SK, &[&encoded]).0);
        Self { encoded, key }
    }
}

fn au_digest(
    hash: HashAlg,
    tag: &str,
    id: &Identity,
    hk: &Digest,
    shared: &Shared,
    census: &mut OpCensus,
    site: HashSite,
) -> Digest {
    census.hash(site);
    hash.hash_tuple(tag, &[&id.padded()[..], hk.as_bytes(), &shared.encoded])
}

/// `element XOR mask_expand(seed)`, counted as one mask expansion and one XOR.
fn mask_element(hash: HashAlg, bytes: &[u8], seed: &Digest, census: &mut OpCensus) -> Vec<u8> {
    census.mask(bytes.len());
    census.xor();
    let mask = hash.mask_expand(seed, bytes.len());
    xor_bytes(bytes, &mask).expect("mask has the element length")
}

struct UserPending {
    hk: Digest,
    hpw: Digest,
    exponent: BigUint,
    params: ChebyParams,
}

enum UserState {
    Init,
    AwaitMsg2(Box<UserPending>),
    Established(Shared),
    Aborted(AbortReason),
}

/// User side of one authentication run.
pub struct UserSession {
    creds: UserCredentials,
    config: ProtocolConfig,
    state: UserState,
    census: OpCensus,
    ephemeral_public: Option<Vec<u8>>,
}

impl UserSession {
    pub fn new(creds: UserCredentials, config: ProtocolConfig) -> Self {
        Self { creds, config, state: UserState::Init, census: OpCensus::new(), ephemeral_public: None }
    }

    pub fn phase(&self) -> Phase {
        match &self.state {
            UserState::Init => Phase::Init,
            UserState::AwaitMsg2(_) => Phase::AwaitMsg2,
            UserState::Established(_) => Phase::Established,
            UserState::Aborted(r) => Phase::Aborted(*r),
        }
    }

    pub fn census(&self) -> &OpCensus {
        &self.census
    }

    pub fn credentials(&self) -> &UserCredentials {
        &self.creds
    }

    /// Canonical encoding of `T_r(x)` once chosen.
    pub fn ephemeral_public(&self) -> Option<&[u8]> {
        self.ephemeral_public.as_deref()
    }

    pub fn session_key(&self) -> Result<SessionKey, ProtocolError> {
        match &self.state {
            UserState::Established(shared) => Ok(shared.key),
            _ => Err(ProtocolError::NotEstablished),
        }
    }

    /// Moves a live session to `Aborted`; terminal sessions are unchanged.
    pub fn abort(&mut self, reason: AbortReason) {
        if !self.phase().is_terminal() {
            self.state = UserState::Aborted(reason);
        }
    }

    fn fail(&mut self, reason: AbortReason) -> ProtocolError {
        self.state = UserState::Aborted(reason);
        ProtocolError::Aborted(reason)
    }

    /// Step (a): picks `(x, N)`, `r` and `k`, and builds `{M_i, M1, M2, AID, x, N}`.
    pub fn start<R: RngCore + CryptoRng + ?Sized>(
        &mut self,
        password: &[u8],
        rng: &mut R,
    ) -> Result<AuthMsg1, ProtocolError> {
        if !matches!(self.state, UserState::Init) {
            return Err(ProtocolError::OutOfOrder { op: "start", phase: self.phase() });
        }
        let h = self.config.hash;
        let census = &mut self.census;

        census.hash(HashSite::PasswordDigest);
        let hpw = h.hash_tuple(tags::HPW, &[password, self.creds.ns.as_bytes()]);

        let params = ChebyParams::generate(self.config.prime_bits, rng)
            .map_err(|e| ProtocolError::InvalidRegistration(format!("session parameters: {e}")))?;
        let keypair = cheby_keygen(&params, rng);
        census.chebyshev();
        let public = params.encode_element(keypair.public());

        let k = Nonce::random(rng);
        census.hash(HashSite::SessionMask);
        let hk = h.hash_tuple(tags::AID_MASK, &[k.as_bytes()]);

        census.xor();
        let m1 = self.creds.ri.xor(&hk);
        census.xor();
        let aid = self.creds.id.masked(&hk);
        let m2 = mask_element(h, &public, &self.creds.r1, census);

        let msg = AuthMsg1 {
            pseudonym: self.creds.pseudonym,
            m1,
            m2,
            aid,
            x: params.base().value().clone(),
            modulus: params.modulus().clone(),
        };
        self.ephemeral_public = Some(public);
        self.state =
            UserState::AwaitMsg2(Box::new(UserPending { hk, hpw, exponent: keypair.exponent().clone(), params }));
        Ok(msg)
    }

    /// Step (c): authenticates the server and answers with `AU_i`.
    pub fn finish(&mut self, msg: &AuthMsg2) -> Result<AuthMsg3, ProtocolError> {
        let pending = match std::mem::replace(&mut self.state, UserState::Init) {
            UserState::AwaitMsg2(p) => p,
            other => {
                self.state = other;
                return Err(ProtocolError::OutOfOrder { op: "finish", phase: self.phase() });
            }
        };
        let h = self.config.hash;
        let params = &pending.params;

        if msg.m3.len() != params.element_len() {
            return Err(self.fail(AbortReason::Malformed));
        }
        if msg.server_id != self.creds.server_id {
            return Err(self.fail(AbortReason::ServerAuthFailed));
        }

        self.census.hash(HashSite::IdentityPassword);
        let id_pw = h.hash_tuple(tags::RI, &[&self.creds.id.padded()[..], pending.hpw.as_bytes()]);
        self.census.xor();
        let hx = self.creds.ri.xor(&id_pw);

        let ts_bytes = mask_element(h, &msg.m3, &hx, &mut self.census);
        // A value outside the field can only come from a wrong mask.
        let Ok(ts) = params.decode_element(&ts_bytes) else {
            return Err(self.fail(AbortReason::ServerAuthFailed));
        };
        self.census.chebyshev();
        let element = cheby_shared(&pending.exponent, &ts, params).expect("ts decoded below N");
        let shared = Shared::derive(h, &element, params, &mut self.census);

        let expected =
            au_digest(h, tags::AUS, &self.creds.id, &pending.hk, &shared, &mut self.census, HashSite::ServerAuth);
        if !ct_eq(expected.as_bytes(), msg.au_s.as_bytes()) {
            return Err(self.fail(AbortReason::ServerAuthFailed));
        }
        let au_i =
            au_digest(h, tags::AUI, &self.creds.server_id, &pending.hk, &shared, &mut self.census, HashSite::UserAuth);
        self.state = UserState::Established(shared);
        Ok(AuthMsg3 { au_i })
    }
}

impl fmt::Debug for UserSession {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UserSession").field("id", &self.creds.id).field("phase", &self.phase()).finish()
    }
}

/// A server identity bound to its credential store.
#[derive(Clone)]
pub struct ServerEndpoint {
    store: Arc<dyn CredentialStore>,
    server_id: Identity,
    config: ProtocolConfig,
}

impl ServerEndpoint {
    pub fn new(store: Arc<dyn CredentialStore>, server_id: Identity, config: ProtocolConfig) -> Self {
        Self { store, server_id, config }
    }

    pub fn server_id(&self) -> &Identity {
        &self.server_id
    }

    pub fn store(&self) -> &Arc<dyn CredentialStore> {
        &self.store
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.config
    }

    pub fn session(&self) -> ServerSession {
        ServerSession {
            endpoint: self.clone(),
            state: ServerState::Init,
            census: OpCensus::new(),
            peer: None,
            ephemeral_public: None,
        }
    }

    pub fn register<R: RngCore + CryptoRng + ?Sized>(
        &self,
        req: &RegistrationRequest,
        rng: &mut R,
    ) -> Result<RegistrationResponse, ProtocolError> {
        register_server_process(req, &self.server_id, self.store.as_ref(), &self.config, rng)
    }
}

impl fmt::Debug for ServerEndpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ServerEndpoint").field("server_id", &self.server_id).field("users", &self.store.len()).finish()
    }
}

struct ServerPending {
    hk: Digest,
    shared: Shared,
}

enum ServerState {
    Init,
    AwaitMsg3(Box<ServerPending>),
    Established(Shared),
    Aborted(AbortReason),
}

/// Server side of one authentication run.
pub struct ServerSession {
    endpoint: ServerEndpoint,
    state: ServerState,
    census: OpCensus,
    peer: Option<ServerRecord>,
    ephemeral_public: Option<Vec<u8>>,
}

impl ServerSession {
    pub fn phase(&self) -> Phase {
        match &self.state {
            ServerState::Init => Phase::Init,
            ServerState::AwaitMsg3(_) => Phase::AwaitMsg3,
            ServerState::Established(_) => Phase::Established,
            ServerState::Aborted(r) => Phase::Aborted(*r),
        }
    }

    pub fn census(&self) -> &OpCensus {
        &self.census
    }

    /// Registered identity behind the pseudonym, once the user is identified.
    pub fn peer_identity(&self) -> Option<&Identity> {
        self.peer.as_ref().map(|r| &r.id)
    }

    /// Canonical encoding of `T_s(x)` once chosen.
    pub fn ephemeral_public(&self) -> Option<&[u8]> {
        self.ephemeral_public.as_deref()
    }

    pub fn session_key(&self) -> Result<SessionKey, ProtocolError> {
        match &self.state {
            ServerState::Established(shared) => Ok(shared.key),
            _ => Err(ProtocolError::NotEstablished),
        }
    }

    pub fn abort(&mut self, reason: AbortReason) {
        if !self.phase().is_terminal() {
            self.state = ServerState::Aborted(reason);
        }
    }

    fn fail(&mut self, reason: AbortReason) -> ProtocolError {
        self.state = ServerState::Aborted(reason);
        ProtocolError::Aborted(reason)
    }

    /// Step (b): identifies the user behind the pseudonym and answers with
    /// `{ID_s, M3, AU_s}`.
    pub fn respond<R: RngCore + CryptoRng + ?Sized>(
        &mut self,
        msg: &AuthMsg1,
        rng: &mut R,
    ) -> Result<AuthMsg2, ProtocolError> {
        if !matches!(self.state, ServerState::Init) {
            return Err(ProtocolError::OutOfOrder { op: "respond", phase: self.phase() });
        }
        let config = self.endpoint.config;
        let h = config.hash;

        let record = match self.endpoint.store.lookup(&msg.pseudonym) {
            Ok(Some(record)) => record,
            _ => return Err(self.fail(AbortReason::UnknownUser)),
        };

        let bits = msg.modulus.bits();
        if bits < config.min_prime_bits || bits > config.max_prime_bits {
            return Err(self.fail(AbortReason::Malformed));
        }
        let Ok(params) = ChebyParams::new(msg.modulus.clone(), msg.x.clone(), rng) else {
            return Err(self.fail(AbortReason::Malformed));
        };
        if msg.m2.len() != params.element_len() {
            return Err(self.fail(AbortReason::Malformed));
        }

        self.census.xor();
        let hk = record.ri.xor(&msg.m1);
        self.census.xor();
        let claimed = record.id.masked(&hk);
        if !ct_eq(&claimed, &msg.aid) {
            // masked(ID) == AID  <=>  ID == H(k) XOR AID
            return Err(self.fail(AbortReason::AuthFailed));
        }

        let tr_bytes = mask_element(h, &msg.m2, &record.r1, &mut self.census);
        let Ok(tr) = params.decode_element(&tr_bytes) else {
            return Err(self.fail(AbortReason::Malformed));
        };

        let keypair = cheby_keygen(&params, rng);
        self.census.chebyshev();
        self.census.chebyshev();
        let element = cheby_shared(keypair.exponent(), &tr, &params).expect("tr decoded below N");
        let shared = Shared::derive(h, &element, &params, &mut self.census);

        let au_s = au_digest(h, tags::AUS, &record.id, &hk, &shared, &mut self.census, HashSite::ServerAuth);
        let public = params.encode_element(keypair.public());
        let m3 = mask_element(h, &public, &record.hx, &mut self.census);

        self.ephemeral_public = Some(public);
        self.peer = Some(record);
        self.state = ServerState::AwaitMsg3(Box::new(ServerPending { hk, shared }));
        Ok(AuthMsg2 { server_id: self.endpoint.server_id.clone(), m3, au_s })
    }

    /// Step (d): authenticates the user.
    pub fn verify(&mut self, msg: &AuthMsg3) -> Result<(), ProtocolError> {
        let pending = match std::mem::replace(&mut self.state, ServerState::Init) {
            ServerState::AwaitMsg3(p) => p,
            other => {
                self.state = other;
                return Err(ProtocolError::OutOfOrder { op: "verify", phase: self.phase() });
            }
        };
        let h = self.endpoint.config.hash;
        let expected = au_digest(
            h,
            tags::AUI,
            &self.endpoint.server_id,
            &pending.hk,
            &pending.shared,
            &mut self.census,
            HashSite::UserAuth,
        );
        if !ct_eq(expected.as_bytes(), msg.au_i.as_bytes()) {
            return Err(self.fail(AbortReason::UserAuthFailed));
        }
        self.state = ServerState::Established(pending.shared);
        Ok(())
    }
}

impl fmt::Debug for ServerSession {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ServerSession")
            .field("server_id", &self.endpoint.server_id)
            .field("phase", &self.phase())
            .finish()
    }
}
