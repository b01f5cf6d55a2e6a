use num_bigint::BigUint;
use rand::{CryptoRng, RngCore};

use super::messages::{RegistrationRequest, RegistrationResponse};
use super::store::{CredentialStore, ServerRecord, StoreError, UserCredentials};
use super::{ProtocolConfig, ProtocolError};
use crate::codec::uint_bytes;
use crate::logistic::{chaotic_sum, decimal_lift, logistic_sequence, LogisticParams};
use crate::numtheory::{crt_solve, gen_coprime, random_exact_bits, CrtSystem};
use crate::primitives::{tags, Digest, Identity, Nonce};

/// User-side registration state between sending the request and receiving
/// the response.
#[derive(Clone, Debug)]
pub struct PendingRegistration {
    id: Identity,
    ns: Nonce,
    m1: BigUint,
    hpw: Digest,
}

impl PendingRegistration {
    pub fn hpw(&self) -> &Digest {
        &self.hpw
    }

    pub fn m1(&self) -> &BigUint {
        &self.m1
    }

    pub fn finish(self, resp: RegistrationResponse) -> UserCredentials {
        UserCredentials {
            id: self.id,
            server_id: resp.server_id,
            pseudonym: resp.pseudonym,
            ri: resp.ri,
            r1: resp.r1,
            ns: self.ns,
        }
    }
}

/// Logistic sequence sum, lifted to an integer: `(sum * 10^c, c)`.
fn chaotic_material<R: RngCore + ?Sized>(
    config: &ProtocolConfig,
    rng: &mut R,
) -> Result<(BigUint, u32), ProtocolError> {
    let params = LogisticParams::random(config.logistic_precision, config.sequence_len, rng)
        .map_err(|e| ProtocolError::InvalidRegistration(e.to_string()))?;
    let sum =
        chaotic_sum(&logistic_sequence(&params)).map_err(|e| ProtocolError::InvalidRegistration(e.to_string()))?;
    let (lifted, digits) = decimal_lift(&sum);
    Ok((BigUint::from(lifted), digits))
}

pub fn register_user_begin<R: RngCore + CryptoRng + ?Sized>(
    id: Identity,
    password: &[u8],
    config: &ProtocolConfig,
    rng: &mut R,
) -> Result<(RegistrationRequest, PendingRegistration), ProtocolError> {
    if password.is_empty() {
        return Err(ProtocolError::InvalidRegistration("empty password".into()));
    }
    if config.crt_modulus_bits < 2 {
        return Err(ProtocolError::InvalidRegistration("CRT modulus too small".into()));
    }
    let (a_prime, digits) = chaotic_material(config, rng)?;
    let m1 = random_exact_bits(config.crt_modulus_bits, rng);
    let ns = Nonce::random(rng);
    let hpw = config.hash.hash_tuple(tags::HPW, &[password, ns.as_bytes()]);
    let request = RegistrationRequest { id: id.clone(), a_prime, digits, m1: m1.clone(), hpw };
    Ok((request, PendingRegistration { id, ns, m1, hpw }))
}

/// Server half of registration. Inserts the new record into `store`.
pub fn register_server_process<R: RngCore + CryptoRng + ?Sized>(
    req: &RegistrationRequest,
    server_id: &Identity,
    store: &dyn CredentialStore,
    config: &ProtocolConfig,
    rng: &mut R,
) -> Result<RegistrationResponse, ProtocolError> {
    if req.m1 < BigUint::from(2u8) {
        return Err(ProtocolError::InvalidRegistration("m1 must be at least 2".into()));
    }
    let already = || ProtocolError::AlreadyRegistered(req.id.to_string());
    if store.contains_identity(&req.id)? {
        return Err(already());
    }

    let (b_prime, _) = chaotic_material(config, rng)?;
    let m2 = gen_coprime(&req.m1, config.crt_modulus_bits.max(2), rng)
        .map_err(|e| ProtocolError::InvalidRegistration(e.to_string()))?;
    let system = CrtSystem::new(vec![&req.a_prime % &req.m1, &b_prime % &m2], vec![req.m1.clone(), m2.clone()])
        .expect("m2 is coprime to m1 by construction");
    let (x, _) = crt_solve(&system).expect("coprime system is solvable");

    let h = config.hash;
    let hx = h.hash_tuple(tags::HX, &[uint_bytes(&x)]);
    let ri = h.hash_tuple(tags::RI, &[&req.id.padded()[..], req.hpw.as_bytes()]).xor(&hx);
    let r1 = h.hash_tuple(tags::R1, &[&uint_bytes(&m2)[..], req.hpw.as_bytes()]);

    loop {
        let pseudonym = Nonce::random(rng);
        let record = ServerRecord { id: req.id.clone(), pseudonym, ri, r1, hx };
        match store.insert(record) {
            Ok(()) => return Ok(RegistrationResponse { server_id: server_id.clone(), pseudonym, ri, r1 }),
            Err(StoreError::DuplicatePseudonym) => continue,
            Err(StoreError::DuplicateIdentity) => return Err(already()),
            Err(e) => return Err(e.into()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logistic::Fixed;
    use crate::protocol::MemoryStore;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn id(s: &str) -> Identity {
        Identity::new(s).unwrap()
    }

    #[test]
    fn request_is_reproducible_and_lifts_exactly() {
        let cfg = ProtocolConfig::default();
        let (a, _) = register_user_begin(id("alice"), b"pw", &cfg, &mut ChaCha20Rng::seed_from_u64(1)).unwrap();
        let (b, _) = register_user_begin(id("alice"), b"pw", &cfg, &mut ChaCha20Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.m1.bits(), cfg.crt_modulus_bits);

        // Recompute the chaotic sum independently from the same rng stream.
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let params = LogisticParams::random(cfg.logistic_precision, cfg.sequence_len, &mut rng).unwrap();
        let seq = logistic_sequence(&params);
        let exact: u128 = seq.iter().map(Fixed::mantissa).sum();
        let scale = 10u128.pow(cfg.logistic_precision - a.digits);
        assert_eq!(BigUint::from(exact), &a.a_prime * scale);
    }

    #[test]
    fn same_password_different_nonce() {
        let cfg = ProtocolConfig::default();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let (a, _) = register_user_begin(id("alice"), b"hunter2", &cfg, &mut rng).unwrap();
        let (b, _) = register_user_begin(id("bob"), b"hunter2", &cfg, &mut rng).unwrap();
        assert_ne!(a.hpw, b.hpw);
        assert!(register_user_begin(id("c"), b"", &cfg, &mut rng).is_err());
    }

    #[test]
    fn server_record_satisfies_construction_identity() {
        let cfg = ProtocolConfig::default();
        let store = MemoryStore::new();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let (req, pending) = register_user_begin(id("alice"), b"pw", &cfg, &mut rng).unwrap();
        let resp = register_server_process(&req, &id("srv"), &store, &cfg, &mut rng).unwrap();
        let record = store.lookup(&resp.pseudonym).unwrap().unwrap();
        let h_id_pw = cfg.hash.hash_tuple(tags::RI, &[&req.id.padded()[..], req.hpw.as_bytes()]);
        assert_eq!(record.ri.xor(&h_id_pw), record.hx);
        assert_eq!(record.ri, resp.ri);
        let creds = pending.finish(resp);
        assert_eq!(creds.pseudonym, record.pseudonym);
        assert_eq!(creds.server_id, id("srv"));
    }

    #[test]
    fn duplicate_identity_refused_and_pseudonyms_distinct() {
        let cfg = ProtocolConfig::default();
        let store = MemoryStore::new();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let (req_a, _) = register_user_begin(id("alice"), b"pw", &cfg, &mut rng).unwrap();
        let (req_b, _) = register_user_begin(id("bob"), b"pw", &cfg, &mut rng).unwrap();
        let ra = register_server_process(&req_a, &id("srv"), &store, &cfg, &mut rng).unwrap();
        let rb = register_server_process(&req_b, &id("srv"), &store, &cfg, &mut rng).unwrap();
        assert_ne!(ra.pseudonym, rb.pseudonym);
        let err = register_server_process(&req_a, &id("srv"), &store, &cfg, &mut rng).unwrap_err();
        assert!(matches!(err, ProtocolError::AlreadyRegistered(_)));
        assert_eq!(store.len(), 2);
    }

    #[test]
    fn fully_seeded_registration_is_bit_identical() {
        let cfg = ProtocolConfig::default();
        let run = || {
            let store = MemoryStore::new();
            let mut user_rng = ChaCha20Rng::seed_from_u64(10);
            let mut server_rng = ChaCha20Rng::seed_from_u64(11);
            let (req, _) = register_user_begin(id("alice"), b"pw", &cfg, &mut user_rng).unwrap();
            register_server_process(&req, &id("srv"), &store, &cfg, &mut server_rng).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn rejects_degenerate_m1() {
        let cfg = ProtocolConfig::default();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let (mut req, _) = register_user_begin(id("alice"), b"pw", &cfg, &mut rng).unwrap();
        req.m1 = BigUint::from(1u8);
        let err = register_server_process(&req, &id("srv"), &MemoryStore::new(), &cfg, &mut rng).unwrap_err();
        assert!(matches!(err, ProtocolError::InvalidRegistration(_)));
    }
}
