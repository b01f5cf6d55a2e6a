//! Yoon-Jeon three-party key agreement (Alice, Bob, trusted Trent).
//!
//! ```text
//! A -> T : A, E_TA(A, B, x, N, T_r(x))
//! T -> B : E_TB(B, A, x, N, T_r(x))
//! B -> A : T_s(x), MAC_B = H_k(B, A, T_r(x))       k = T_s(T_r(x))
//! A -> B : MAC_A = H_k(A, B, T_s(x))               k = T_r(T_s(x))
//! ```
//!
//! `E` is encrypt-then-MAC over a hash counter keystream. The sender
//! identity in the first message travels in clear so Trent can pick `TA`.

use std::collections::HashMap;

use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::census::{HashSite, OpCensus};
use crate::chebyshev::{cheby_keygen, cheby_shared, ChebyParams};
use crate::codec::{CodecError, FieldReader, FieldWriter};
use crate::primitives::{ct_eq, tags, Digest, HashAlg, Identity, Nonce, DIGEST_LEN, NONCE_LEN};
use crate::protocol::SessionKey;
use crate::transport::{Channel, Direction, Party, ProtocolMessage, Transcript, TransportError};

pub const KEY_LEN: usize = 32;

const TAG_KEYSTREAM: &str = "yjks";
const TAG_CIPHER_MAC: &str = "yjtag";
const TAG_MAC: &str = "yjmac";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum YjError {
    #[error("identity {0} has no key with the trusted party")]
    UnknownIdentity(String),
    #[error("identity {0} already has a key")]
    DuplicateIdentity(String),
    #[error("authenticated decryption failed")]
    Decrypt,
    #[error("malformed plaintext: {0}")]
    Plaintext(#[from] CodecError),
    #[error("identity in the plaintext does not match")]
    IdentityMismatch,
    #[error("invalid chaotic-map parameters")]
    BadParams,
    #[error("MAC verification failed")]
    MacMismatch,
}

/// Long-term keys Trent shares with each party.
#[derive(Clone, Default)]
pub struct TrentKeyTable {
    keys: HashMap<Identity, [u8; KEY_LEN]>,
}

impl TrentKeyTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: Identity, key: [u8; KEY_LEN]) -> Result<(), YjError> {
        if self.keys.contains_key(&id) {
            return Err(YjError::DuplicateIdentity(id.to_string()));
        }
        self.keys.insert(id, key);
        Ok(())
    }

    pub fn enroll<R: RngCore + CryptoRng + ?Sized>(
        &mut self,
        id: Identity,
        rng: &mut R,
    ) -> Result<[u8; KEY_LEN], YjError> {
        let mut key = [0u8; KEY_LEN];
        rng.fill_bytes(&mut key);
        self.insert(id, key)?;
        Ok(key)
    }

    pub fn key(&self, id: &Identity) -> Result<&[u8; KEY_LEN], YjError> {
        self.keys.get(id).ok_or_else(|| YjError::UnknownIdentity(id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}

impl std::fmt::Debug for TrentKeyTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TrentKeyTable").field("parties", &self.keys.len()).finish()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct YjMsg1 {
    pub sender: Identity,
    pub ciphertext: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct YjMsg2 {
    pub ciphertext: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct YjMsg3 {
    /// Canonical encoding of `T_s(x)`.
    pub ts_public: Vec<u8>,
    pub mac_b: Digest,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct YjMsg4 {
    pub mac_a: Digest,
}

/// Sealed box layout: `nonce(16) || ciphertext || tag(32)`.
pub fn seal(hash: HashAlg, key: &[u8; KEY_LEN], nonce: &Nonce, plaintext: &[u8], census: &mut OpCensus) -> Vec<u8> {
    census.encryption();
    let mut out = nonce.as_bytes().to_vec();
    out.extend(apply_keystream(hash, key, nonce, plaintext, census));
    census.hash(HashSite::CipherBlock);
    let tag = hash.hash_tuple(TAG_CIPHER_MAC, &[&key[..], nonce.as_bytes(), &out[NONCE_LEN..]]);
    out.extend_from_slice(tag.as_bytes());
    out
}

pub fn open(hash: HashAlg, key: &[u8; KEY_LEN], sealed: &[u8], census: &mut OpCensus) -> Result<Vec<u8>, YjError> {
    census.decryption();
    if sealed.len() < NONCE_LEN + DIGEST_LEN {
        return Err(YjError::Decrypt);
    }
    let (nonce, rest) = sealed.split_at(NONCE_LEN);
    let (body, tag) = rest.split_at(rest.len() - DIGEST_LEN);
    let nonce = Nonce::from_slice(nonce).expect("split at nonce length");
    census.hash(HashSite::CipherBlock);
    let expected = hash.hash_tuple(TAG_CIPHER_MAC, &[&key[..], nonce.as_bytes(), body]);
    if !ct_eq(expected.as_bytes(), tag) {
        return Err(YjError::Decrypt);
    }
    Ok(apply_keystream(hash, key, &nonce, body, census))
}

fn apply_keystream(hash: HashAlg, key: &[u8; KEY_LEN], nonce: &Nonce, data: &[u8], census: &mut OpCensus) -> Vec<u8> {
    let mut out = Vec::with_capacity(data.len());
    for (ctr, chunk) in data.chunks(DIGEST_LEN).enumerate() {
        census.hash(HashSite::CipherBlock);
        let block = hash.hash_tuple(TAG_KEYSTREAM, &[&key[..], nonce.as_bytes(), &(ctr as u32).to_be_bytes()]);
        out.extend(chunk.iter().zip(block.as_bytes()).map(|(a, b)| a ^ b));
    }
    out
}

/// The five-tuple carried inside both ciphertexts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyRequest {
    pub first: Identity,
    pub second: Identity,
    pub params: ChebyParams,
    pub tr_public: Vec<u8>,
}

impl KeyRequest {
    pub fn to_bytes(&self) -> Vec<u8> {
        FieldWriter::new()
            .bytes(&self.first.padded())
            .bytes(&self.second.padded())
            .uint(self.params.base().value())
            .uint(self.params.modulus())
            .bytes(&self.tr_public)
            .finish()
    }

    pub fn from_bytes<R: RngCore + ?Sized>(bytes: &[u8], rng: &mut R) -> Result<Self, YjError> {
        let mut r = FieldReader::new(bytes);
        let first = read_identity(&mut r, "first")?;
        let second = read_identity(&mut r, "second")?;
        let x = r.uint("x")?;
        let modulus = r.uint("N")?;
        let tr_public = r.bytes()?.to_vec();
        r.finish()?;
        let params = ChebyParams::new(modulus, x, rng).map_err(|_| YjError::BadParams)?;
        params.decode_element(&tr_public).map_err(|_| YjError::BadParams)?;
        Ok(Self { first, second, params, tr_public })
    }

    fn swapped(&self) -> Self {
        Self { first: self.second.clone(), second: self.first.clone(), ..self.clone() }
    }
}

fn read_identity(r: &mut FieldReader<'_>, field: &'static str) -> Result<Identity, CodecError> {
    let padded = r.fixed::<32>(field)?;
    Identity::from_padded(&padded).map_err(|_| CodecError::InvalidField(field))
}

fn keyed_mac(hash: HashAlg, k: &[u8], a: &Identity, b: &Identity, element: &[u8], census: &mut OpCensus) -> Digest {
    census.hash(HashSite::KeyedMac);
    hash.hash_tuple(TAG_MAC, &[k, &a.padded()[..], &b.padded()[..], element])
}

fn derive_key(hash: HashAlg, k: &[u8], census: &mut OpCensus) -> SessionKey {
    census.hash(HashSite::SessionKey);
    SessionKey(hash.hash_tuple(tags::SK, &[k]).0)
}

/// Alice between steps 1 and 4.
#[derive(Debug)]
pub struct AliceState {
    me: Identity,
    peer: Identity,
    exponent: num_bigint::BigUint,
    request: KeyRequest,
    pub census: OpCensus,
}

/// Bob between steps 3 and 5.
#[derive(Debug)]
pub struct BobState {
    me: Identity,
    peer: Identity,
    k: Vec<u8>,
    ts_public: Vec<u8>,
    pub census: OpCensus,
}

/// Step 1: Alice picks `(x, N)` and `r`, and seals the request under `TA`.
pub fn yj_step1_alice<R: RngCore + CryptoRng + ?Sized>(
    alice: &Identity,
    bob: &Identity,
    ta: &[u8; KEY_LEN],
    hash: HashAlg,
    prime_bits: u64,
    rng: &mut R,
) -> Result<(YjMsg1, AliceState), YjError> {
    let mut census = OpCensus::new();
    let params = ChebyParams::generate(prime_bits, rng).map_err(|_| YjError::BadParams)?;
    let keypair = cheby_keygen(&params, rng);
    census.chebyshev();
    let request = KeyRequest {
        first: alice.clone(),
        second: bob.clone(),
        tr_public: params.encode_element(keypair.public()),
        params,
    };
    let ciphertext = seal(hash, ta, &Nonce::random(rng), &request.to_bytes(), &mut census);
    let msg = YjMsg1 { sender: alice.clone(), ciphertext };
    let state =
        AliceState { me: alice.clone(), peer: bob.clone(), exponent: keypair.exponent().clone(), request, census };
    Ok((msg, state))
}

/// Step 2: Trent checks `A`, then re-seals the swapped tuple under `TB`.
pub fn yj_step2_trent<R: RngCore + CryptoRng + ?Sized>(
    msg: &YjMsg1,
    table: &TrentKeyTable,
    hash: HashAlg,
    census: &mut OpCensus,
    rng: &mut R,
) -> Result<YjMsg2, YjError> {
    let ta = table.key(&msg.sender)?;
    let plain = open(hash, ta, &msg.ciphertext, census)?;
    let request = KeyRequest::from_bytes(&plain, rng)?;
    if request.first != msg.sender {
        return Err(YjError::IdentityMismatch);
    }
    let tb = table.key(&request.second)?;
    let forwarded = request.swapped();
    let ciphertext = seal(hash, tb, &Nonce::random(rng), &forwarded.to_bytes(), census);
    Ok(YjMsg2 { ciphertext })
}

/// Step 3: Bob opens the request, picks `s` and answers with `T_s(x)` and `MAC_B`.
pub fn yj_step3_bob<R: RngCore + CryptoRng + ?Sized>(
    msg: &YjMsg2,
    bob: &Identity,
    tb: &[u8; KEY_LEN],
    hash: HashAlg,
    rng: &mut R,
) -> Result<(YjMsg3, BobState), YjError> {
    let mut census = OpCensus::new();
    let plain = open(hash, tb, &msg.ciphertext, &mut census)?;
    let request = KeyRequest::from_bytes(&plain, rng)?;
    if &request.first != bob {
        return Err(YjError::IdentityMismatch);
    }
    let params = &request.params;
    let tr = params.decode_element(&request.tr_public).map_err(|_| YjError::BadParams)?;
    let keypair = cheby_keygen(params, rng);
    census.chebyshev();
    census.chebyshev();
    let k = params.encode_element(&cheby_shared(keypair.exponent(), &tr, params).expect("tr below N"));
    let mac_b = keyed_mac(hash, &k, bob, &request.second, &request.tr_public, &mut census);
    let ts_public = params.encode_element(keypair.public());
    let state = BobState { me: bob.clone(), peer: request.second, k, ts_public: ts_public.clone(), census };
    Ok((YjMsg3 { ts_public, mac_b }, state))
}

/// Step 4: Alice checks `MAC_B` and answers with `MAC_A`.
pub fn yj_step4_alice(
    msg: &YjMsg3,
    mut state: AliceState,
    hash: HashAlg,
) -> Result<(YjMsg4, SessionKey, OpCensus), YjError> {
    let params = &state.request.params;
    let ts = params.decode_element(&msg.ts_public).map_err(|_| YjError::BadParams)?;
    let census = &mut state.census;
    census.chebyshev();
    let k = params.encode_element(&cheby_shared(&state.exponent, &ts, params).expect("ts below N"));
    let expected = keyed_mac(hash, &k, &state.peer, &state.me, &state.request.tr_public, census);
    if !ct_eq(expected.as_bytes(), msg.mac_b.as_bytes()) {
        return Err(YjError::MacMismatch);
    }
    let mac_a = keyed_mac(hash, &k, &state.me, &state.peer, &msg.ts_public, census);
    let key = derive_key(hash, &k, census);
    Ok((YjMsg4 { mac_a }, key, state.census))
}

/// Step 5: Bob checks `MAC_A`.
pub fn yj_step5_bob(msg: &YjMsg4, mut state: BobState, hash: HashAlg) -> Result<(SessionKey, OpCensus), YjError> {
    let census = &mut state.census;
    let expected = keyed_mac(hash, &state.k, &state.peer, &state.me, &state.ts_public, census);
    if !ct_eq(expected.as_bytes(), msg.mac_a.as_bytes()) {
        return Err(YjError::MacMismatch);
    }
    let key = derive_key(hash, &state.k, census);
    Ok((key, state.census))
}

/// Per-party randomness for one baseline run.
pub struct YjRngs<'a, R: RngCore + CryptoRng> {
    pub alice: &'a mut R,
    pub trent: &'a mut R,
    pub bob: &'a mut R,
}

#[derive(Debug)]
pub struct YjOutcome {
    pub alice_key: Option<SessionKey>,
    pub bob_key: Option<SessionKey>,
    /// First failure, if any, and the party that detected it.
    pub failure: Option<(Party, YjError)>,
    pub transcript: Transcript,
    /// Operation counts summed over all three parties.
    pub census: OpCensus,
}

impl YjOutcome {
    pub fn established(&self) -> bool {
        matches!((&self.alice_key, &self.bob_key), (Some(a), Some(b)) if a == b)
    }
}

/// Runs steps 1-5 over `channel`. Frames that fail to decode count as a
/// failure of the receiving party.
pub fn run_yoonjeon<R: RngCore + CryptoRng>(
    alice: &Identity,
    bob: &Identity,
    table: &TrentKeyTable,
    hash: HashAlg,
    prime_bits: u64,
    channel: &mut dyn Channel,
    rngs: YjRngs<'_, R>,
) -> Result<YjOutcome, TransportError> {
    let mut out = YjOutcome {
        alice_key: None,
        bob_key: None,
        failure: None,
        transcript: Transcript::new(),
        census: OpCensus::new(),
    };
    let fail = |out: &mut YjOutcome, party, e| out.failure = Some((party, e));

    let ta = table.key(alice).map_err(|e| TransportError::Local(e.to_string()))?;
    let (m1, alice_state) = yj_step1_alice(alice, bob, ta, hash, prime_bits, rngs.alice)
        .map_err(|e| TransportError::Local(e.to_string()))?;

    let received =
        out.transcript.exchange(channel, Direction::new(Party::User, Party::Trent), &ProtocolMessage::Yj1(m1))?;
    let Some(ProtocolMessage::Yj1(m1)) = received else {
        fail(&mut out, Party::Trent, YjError::Decrypt);
        out.census.merge(&alice_state.census);
        return Ok(out);
    };
    let mut trent_census = OpCensus::new();
    let m2 = yj_step2_trent(&m1, table, hash, &mut trent_census, rngs.trent);
    out.census.merge(&trent_census);
    let m2 = match m2 {
        Ok(m) => m,
        Err(e) => {
            fail(&mut out, Party::Trent, e);
            out.census.merge(&alice_state.census);
            return Ok(out);
        }
    };

    let received =
        out.transcript.exchange(channel, Direction::new(Party::Trent, Party::Server), &ProtocolMessage::Yj2(m2))?;
    let tb = table.key(bob).map_err(|e| TransportError::Local(e.to_string()))?;
    let step3 = match received {
        Some(ProtocolMessage::Yj2(m2)) => yj_step3_bob(&m2, bob, tb, hash, rngs.bob),
        _ => Err(YjError::Decrypt),
    };
    let (m3, bob_state) = match step3 {
        Ok(v) => v,
        Err(e) => {
            fail(&mut out, Party::Server, e);
            out.census.merge(&alice_state.census);
            return Ok(out);
        }
    };

    let received =
        out.transcript.exchange(channel, Direction::new(Party::Server, Party::User), &ProtocolMessage::Yj3(m3))?;
    let step4 = match received {
        Some(ProtocolMessage::Yj3(m3)) => yj_step4_alice(&m3, alice_state, hash),
        _ => Err(YjError::MacMismatch),
    };
    let m4 = match step4 {
        Ok((m4, key, census)) => {
            out.alice_key = Some(key);
            out.census.merge(&census);
            m4
        }
        Err(e) => {
            fail(&mut out, Party::User, e);
            out.census.merge(&bob_state.census);
            return Ok(out);
        }
    };

    let received =
        out.transcript.exchange(channel, Direction::new(Party::User, Party::Server), &ProtocolMessage::Yj4(m4))?;
    let step5 = match received {
        Some(ProtocolMessage::Yj4(m4)) => yj_step5_bob(&m4, bob_state, hash),
        _ => Err(YjError::MacMismatch),
    };
    match step5 {
        Ok((key, census)) => {
            out.bob_key = Some(key);
            out.census.merge(&census);
        }
        Err(e) => fail(&mut out, Party::Server, e),
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::{decode_frame, encode_frame, Loopback};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    const H: HashAlg = HashAlg::Sha256;

    struct Fixture {
        alice: Identity,
        bob: Identity,
        table: TrentKeyTable,
        rng: ChaCha20Rng,
    }

    fn fixture(seed: u64) -> Fixture {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let alice = Identity::new("alice").unwrap();
        let bob = Identity::new("bob").unwrap();
        let mut table = TrentKeyTable::new();
        table.enroll(alice.clone(), &mut rng).unwrap();
        table.enroll(bob.clone(), &mut rng).unwrap();
        Fixture { alice, bob, table, rng }
    }

    #[test]
    fn cipher_round_trip_and_tamper() {
        let mut census = OpCensus::new();
        let key = [7u8; 32];
        let nonce = Nonce([1; 16]);
        let msg = b"a plaintext longer than one block of keystream output";
        let sealed = seal(H, &key, &nonce, msg, &mut census);
        assert_eq!(sealed.len(), 16 + msg.len() + 32);
        assert_eq!(open(H, &key, &sealed, &mut census).unwrap(), msg);
        for i in 0..sealed.len() {
            let mut bad = sealed.clone();
            bad[i] ^= 1;
            assert_eq!(open(H, &key, &bad, &mut census), Err(YjError::Decrypt));
        }
        assert_eq!(open(H, &[8; 32], &sealed, &mut census), Err(YjError::Decrypt));
        assert_eq!(open(H, &key, &sealed[..40], &mut census), Err(YjError::Decrypt));
    }

    #[test]
    fn step1_plaintext_round_trips_and_id_is_clear() {
        let mut f = fixture(1);
        let ta = *f.table.key(&f.alice).unwrap();
        let (m1, state) = yj_step1_alice(&f.alice, &f.bob, &ta, H, 64, &mut f.rng).unwrap();
        let plain = open(H, &ta, &m1.ciphertext, &mut OpCensus::new()).unwrap();
        assert_eq!(KeyRequest::from_bytes(&plain, &mut f.rng).unwrap(), state.request);
        let frame = encode_frame(&ProtocolMessage::Yj1(m1)).unwrap();
        let padded = f.alice.padded();
        assert!(frame.windows(32).any(|w| w == padded));
    }

    #[test]
    fn trent_rejects_unknown_or_wrong_key() {
        let mut f = fixture(2);
        let mallory = Identity::new("mallory").unwrap();
        let ta = *f.table.key(&f.alice).unwrap();
        let (m1, _) = yj_step1_alice(&f.alice, &f.bob, &ta, H, 64, &mut f.rng).unwrap();
        let mut census = OpCensus::new();

        let unknown = YjMsg1 { sender: mallory.clone(), ..m1.clone() };
        assert!(matches!(
            yj_step2_trent(&unknown, &f.table, H, &mut census, &mut f.rng),
            Err(YjError::UnknownIdentity(_))
        ));

        let (wrong, _) = yj_step1_alice(&f.alice, &f.bob, &[0u8; 32], H, 64, &mut f.rng).unwrap();
        assert_eq!(yj_step2_trent(&wrong, &f.table, H, &mut census, &mut f.rng), Err(YjError::Decrypt));

        // Bob's own key with Alice's name attached: Trent opens under TA and fails.
        let tb = *f.table.key(&f.bob).unwrap();
        let (as_bob, _) = yj_step1_alice(&f.bob, &f.alice, &tb, H, 64, &mut f.rng).unwrap();
        let spoofed = YjMsg1 { sender: f.alice.clone(), ..as_bob };
        assert_eq!(yj_step2_trent(&spoofed, &f.table, H, &mut census, &mut f.rng), Err(YjError::Decrypt));
    }

    #[test]
    fn bob_rejects_request_for_someone_else() {
        let mut f = fixture(3);
        let carol = Identity::new("carol").unwrap();
        f.table.enroll(carol.clone(), &mut f.rng).unwrap();
        let ta = *f.table.key(&f.alice).unwrap();
        let (m1, _) = yj_step1_alice(&f.alice, &carol, &ta, H, 64, &mut f.rng).unwrap();
        let m2 = yj_step2_trent(&m1, &f.table, H, &mut OpCensus::new(), &mut f.rng).unwrap();
        // Sealed for carol, so Bob cannot even open it; carol's key plus Bob's name
        // is the identity check proper.
        let tc = *f.table.key(&carol).unwrap();
        assert_eq!(yj_step3_bob(&m2, &f.bob, &tc, H, &mut f.rng).unwrap_err(), YjError::IdentityMismatch);
    }

    #[test]
    fn honest_steps_agree_and_macs_bind() {
        let mut f = fixture(4);
        let ta = *f.table.key(&f.alice).unwrap();
        let tb = *f.table.key(&f.bob).unwrap();
        let (m1, alice) = yj_step1_alice(&f.alice, &f.bob, &ta, H, 64, &mut f.rng).unwrap();
        let m2 = yj_step2_trent(&m1, &f.table, H, &mut OpCensus::new(), &mut f.rng).unwrap();
        let (m3, bob) = yj_step3_bob(&m2, &f.bob, &tb, H, &mut f.rng).unwrap();

        let mut bad_m3 = m3.clone();
        bad_m3.mac_b.0[0] ^= 1;
        let (_, alice_copy) = yj_step1_alice(&f.alice, &f.bob, &ta, H, 64, &mut f.rng).unwrap();
        assert_eq!(yj_step4_alice(&bad_m3, alice_copy, H).unwrap_err(), YjError::MacMismatch);

        let (m4, ka, _) = yj_step4_alice(&m3, alice, H).unwrap();
        let mut bad_m4 = m4.clone();
        bad_m4.mac_a.0[5] ^= 0x40;
        let (_, bob_copy) = yj_step3_bob(&m2, &f.bob, &tb, H, &mut f.rng).unwrap();
        assert_eq!(yj_step5_bob(&bad_m4, bob_copy, H).unwrap_err(), YjError::MacMismatch);

        let (kb, _) = yj_step5_bob(&m4, bob, H).unwrap();
        assert_eq!(ka, kb);
    }

    #[test]
    fn old_msg3_is_rejected() {
        let mut f = fixture(5);
        let ta = *f.table.key(&f.alice).unwrap();
        let tb = *f.table.key(&f.bob).unwrap();
        let (m1, _) = yj_step1_alice(&f.alice, &f.bob, &ta, H, 64, &mut f.rng).unwrap();
        let m2 = yj_step2_trent(&m1, &f.table, H, &mut OpCensus::new(), &mut f.rng).unwrap();
        let (old_m3, _) = yj_step3_bob(&m2, &f.bob, &tb, H, &mut f.rng).unwrap();

        let (_, fresh) = yj_step1_alice(&f.alice, &f.bob, &ta, H, 64, &mut f.rng).unwrap();
        assert!(yj_step4_alice(&old_m3, fresh, H).is_err());
    }

    #[test]
    fn full_run_counts_two_encryptions_two_decryptions() {
        let mut f = fixture(6);
        let mut trent_rng = ChaCha20Rng::seed_from_u64(60);
        let mut bob_rng = ChaCha20Rng::seed_from_u64(61);
        let out = run_yoonjeon(
            &f.alice,
            &f.bob,
            &f.table,
            H,
            64,
            &mut Loopback::new(),
            YjRngs { alice: &mut f.rng, trent: &mut trent_rng, bob: &mut bob_rng },
        )
        .unwrap();
        assert!(out.established(), "{:?}", out.failure);
        assert_eq!(out.census.encryptions(), 2);
        assert_eq!(out.census.decryptions(), 2);
        assert_eq!(out.transcript.len(), 4);
        for entry in out.transcript.entries() {
            assert!(decode_frame(&entry.frame).is_ok());
        }
    }
}
