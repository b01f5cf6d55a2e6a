use chaoskey::adversary::scan_anonymity;
use chaoskey::baseline::{run_yoonjeon, TrentKeyTable, YjError, YjRngs};
use chaoskey::primitives::{HashAlg, Identity};
use chaoskey::transport::{Loopback, Party};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn parties() -> (Identity, Identity) {
    (Identity::new("alice").unwrap(), Identity::new("bob").unwrap())
}

fn table(seed: u64) -> TrentKeyTable {
    let (a, b) = parties();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut t = TrentKeyTable::new();
    t.enroll(a, &mut rng).unwrap();
    t.enroll(b, &mut rng).unwrap();
    t
}

fn run(seed: u64, hash: HashAlg, channel: &mut Loopback) -> chaoskey::baseline::YjOutcome {
    let (a, b) = parties();
    let mut r = [0, 1, 2].map(|k| ChaCha20Rng::seed_from_u64(seed * 3 + k));
    let [ra, rt, rb] = &mut r;
    run_yoonjeon(&a, &b, &table(7), hash, 64, channel, YjRngs { alice: ra, trent: rt, bob: rb }).unwrap()
}

#[test]
fn five_hundred_seeded_runs_agree() {
    for seed in 0..500 {
        let out = run(seed, HashAlg::Sha256, &mut Loopback::new());
        assert!(out.established(), "seed {seed}: {:?}", out.failure);
        assert_eq!(out.alice_key, out.bob_key);
        assert_eq!(out.transcript.len(), 4);
    }
}

#[test]
fn alternate_hash_also_agrees() {
    for seed in 0..20 {
        assert!(run(seed, HashAlg::Sha512_256, &mut Loopback::new()).established());
    }
}

#[test]
fn cleartext_sender_is_always_visible() {
    let (a, _) = parties();
    let out = run(1, HashAlg::Sha256, &mut Loopback::new());
    let scan = scan_anonymity(&out.transcript, &[a]);
    assert!(scan.succeeded);
    assert!(scan.evidence.contains("frame 0"), "{}", scan.evidence);
}

#[test]
fn tampered_ciphertext_is_caught() {
    // Flip one byte of Trent's reply to Bob.
    let mut channel = Loopback::with_tamper(|i, _, mut f| {
        if i == 1 {
            let last = f.len() - 1;
            f[last] ^= 1;
        }
        f
    });
    let out = run(3, HashAlg::Sha256, &mut channel);
    assert!(!out.established());
    assert!(matches!(out.failure, Some((Party::Server, YjError::Decrypt))), "{:?}", out.failure);
}

#[test]
fn tampered_mac_is_caught() {
    let mut channel = Loopback::with_tamper(|i, _, mut f| {
        if i == 3 {
            let last = f.len() - 1;
            f[last] ^= 0x80;
        }
        f
    });
    let out = run(4, HashAlg::Sha256, &mut channel);
    assert!(matches!(out.failure, Some((_, YjError::MacMismatch))), "{:?}", out.failure);
}
