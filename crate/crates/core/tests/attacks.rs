mod common;

use chaoskey::adversary::{
    attack_insider_impersonation, attack_mitm_substitute, attack_replay, attack_replay_registration, check_known_key,
    report_linkability, scan_unmasked_elements, KnownKeySession, MitmPolicy,
};
use chaoskey::primitives::{HashAlg, Identity};
use chaoskey::protocol::{register_user_begin, Phase, UserSession};
use common::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

#[test]
fn mitm_sweep_never_succeeds() {
    let server = endpoint();
    let alice = enroll(&server, "alice", 1);
    for seed in 0..10u64 {
        for policy in [
            MitmPolicy::SubstituteM2,
            MitmPolicy::SubstituteM3,
            MitmPolicy::SubstituteBoth,
            MitmPolicy::Identity { victim: Identity::new("alice").unwrap(), claimed: Identity::new("eve").unwrap() },
        ] {
            let out = attack_mitm_substitute(
                UserSession::new(alice.clone(), *server.config()),
                PW,
                &server,
                policy,
                &mut ChaCha20Rng::seed_from_u64(seed),
                &mut ChaCha20Rng::seed_from_u64(seed + 1000),
                seed,
            )
            .unwrap();
            assert!(!out.succeeded, "seed {seed}: {out}");
        }
    }
}

#[test]
fn replays_of_every_session_fail() {
    let server = endpoint();
    let users: Vec<_> = (0..4).map(|i| enroll(&server, &format!("u{i}"), i)).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    for (i, creds) in users.iter().enumerate() {
        let t = loopback(&server, creds, PW, 50 + i as u64).transcript;
        let out = attack_replay(&t, &server, &mut rng).unwrap();
        assert!(!out.succeeded, "{out}");
    }
}

#[test]
fn registration_replay_is_refused() {
    let server = endpoint();
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let (req, _) = register_user_begin(Identity::new("alice").unwrap(), PW, server.config(), &mut rng).unwrap();
    server.register(&req, &mut rng).unwrap();
    let out = attack_replay_registration(&req, &server, &mut rng);
    assert!(!out.succeeded, "{out}");
}

#[test]
fn known_key_over_ten_sessions_reveals_nothing_else() {
    let server = endpoint();
    let alice = enroll(&server, "alice", 2);
    let sessions: Vec<_> = (0..10)
        .map(|s| {
            let out = loopback(&server, &alice, PW, 200 + s);
            KnownKeySession { key: out.user.session_key().unwrap(), transcript: out.transcript, seed: Some(200 + s) }
        })
        .collect();
    for revealed in 0..sessions.len() {
        let out = check_known_key(&sessions, revealed, HashAlg::Sha256);
        assert!(!out.succeeded, "revealed {revealed}: {out}");
        assert!(out.warnings.is_empty());
    }
}

#[test]
fn linkability_groups_sessions_per_user() {
    let server = endpoint();
    let users: Vec<_> = (0..5).map(|i| enroll(&server, &format!("u{i}"), 10 + i)).collect();
    let transcripts: Vec<_> =
        (0..20).map(|k| loopback(&server, &users[k % 5], PW, 300 + k as u64).transcript).collect();
    let report = report_linkability(&transcripts);
    assert_eq!(report.groups.len(), 5);
    assert!(report.groups.iter().all(|g| g.sessions.len() == 4));
    assert!(report.unlinked.is_empty());
    assert!(report.linked(0, 5) && !report.linked(0, 1));
}

#[test]
fn ephemeral_publics_never_appear_in_clear() {
    let server = endpoint();
    let alice = enroll(&server, "alice", 3);
    for seed in 0..20 {
        let out = loopback(&server, &alice, PW, seed);
        let tr = out.user.ephemeral_public().unwrap();
        let ts = out.server.ephemeral_public().unwrap();
        let scan = scan_unmasked_elements(&out.transcript, &[tr, ts]);
        assert!(!scan.succeeded, "{scan}");
    }
}

#[test]
fn insiders_cannot_impersonate_the_server() {
    let server = endpoint();
    let users: Vec<_> = (0..4).map(|i| enroll(&server, &format!("u{i}"), 20 + i)).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    for (v, victim_creds) in users.iter().enumerate() {
        for (m, insider) in users.iter().enumerate().filter(|(m, _)| *m != v) {
            let mut victim = UserSession::new(victim_creds.clone(), *server.config());
            let msg1 = victim.start(PW, &mut rng).unwrap();
            let out = attack_insider_impersonation(insider, PW, &mut victim, &msg1, HashAlg::Sha256, &mut rng);
            assert!(!out.succeeded, "insider {m} vs victim {v}: {out}");
            assert_ne!(victim.phase(), Phase::Established);
        }
    }
}
