//! Attack harness run against recorded transcripts and live endpoints.
//!
//! Each check returns an [`AttackOutcome`] whose `succeeded` flag is true
//! only when a security property was actually violated: the server accepted
//! a replay, an identity appeared on the wire, an adversary could compute a
//! session key, or both ends accepted tampered traffic.
//!
//! Key-recovery checks are limited to polynomial-time recomputation from
//! public values. Discrete-log search over `T_r(x)` is not attempted, since
//! at test sizes it would succeed trivially and says nothing about the
//! protocol.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use num_bigint::{BigUint, RandBigInt};
use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::chebyshev::{cheby_eval_fast, element_len, FieldElement};
use crate::primitives::{tags, xor_bytes, Digest, HashAlg, Identity};
use crate::protocol::{
    AuthMsg1, AuthMsg2, Phase, RegistrationRequest, ServerEndpoint, SessionKey, UserCredentials, UserSession,
};
use crate::transport::{
    decode_frame, encode_frame, field_spans, run_handshake, tag, Loopback, ProtocolMessage, Transcript, TransportError,
};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttackOutcome {
    pub name: String,
    /// True when the attacked property was violated.
    pub succeeded: bool,
    pub evidence: String,
    pub warnings: Vec<String>,
}

impl AttackOutcome {
    pub fn held(name: &str, evidence: impl Into<String>) -> Self {
        Self { name: name.to_owned(), succeeded: false, evidence: evidence.into(), warnings: Vec::new() }
    }

    pub fn violated(name: &str, evidence: impl Into<String>) -> Self {
        let evidence = evidence.into();
        assert!(!evidence.is_empty(), "a successful attack must carry evidence");
        Self { name: name.to_owned(), succeeded: true, evidence, warnings: Vec::new() }
    }

    /// `attack=<name> succeeded=<bool> evidence="<text>"`, plus
    /// `warnings="<a; b>"` when there are any.
    pub fn machine_line(&self) -> String {
        let mut line = format!("attack={} succeeded={} evidence={:?}", self.name, self.succeeded, self.evidence);
        if !self.warnings.is_empty() {
            line.push_str(&format!(" warnings={:?}", self.warnings.join("; ")));
        }
        line
    }
}

impl fmt::Display for AttackOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<22} succeeded={:<5} {}", self.name, self.succeeded, self.evidence)?;
        for w in &self.warnings {
            write!(f, "\n{:<22} warning: {w}", "")?;
        }
        Ok(())
    }
}

fn recorded(transcript: &Transcript, wanted: u8) -> Option<ProtocolMessage> {
    transcript.find(wanted).and_then(|e| e.message().ok())
}

/// Re-sends a recorded msg1 to a fresh server session, then the recorded
/// msg3 if the server answers.
pub fn attack_replay<R: RngCore + CryptoRng + ?Sized>(
    old: &Transcript,
    endpoint: &ServerEndpoint,
    rng: &mut R,
) -> Result<AttackOutcome, TransportError> {
    const NAME: &str = "replay";
    let Some(ProtocolMessage::Auth1(m1)) = recorded(old, tag::AUTH1) else {
        return Err(TransportError::Local("transcript has no msg1 to replay".into()));
    };
    let mut session = endpoint.session();
    if let Err(e) = session.respond(&m1, rng) {
        return Ok(AttackOutcome::held(NAME, format!("server refused the replayed msg1: {e}")));
    }
    let Some(ProtocolMessage::Auth3(m3)) = recorded(old, tag::AUTH3) else {
        return Ok(AttackOutcome::held(NAME, "server answered but no msg3 was recorded to complete the run"));
    };
    Ok(match session.verify(&m3) {
        Ok(()) => AttackOutcome::violated(NAME, "server established a session from replayed msg1 and msg3"),
        Err(e) => AttackOutcome::held(NAME, format!("server answered msg2, then rejected the recorded AU_i: {e}")),
    })
}

/// Re-submits a recorded registration request.
pub fn attack_replay_registration<R: RngCore + CryptoRng + ?Sized>(
    req: &RegistrationRequest,
    endpoint: &ServerEndpoint,
    rng: &mut R,
) -> AttackOutcome {
    const NAME: &str = "replay-registration";
    match endpoint.register(req, rng) {
        Ok(resp) => AttackOutcome::violated(
            NAME,
            format!("server issued a second pseudonym {} for {}", resp.pseudonym.to_hex(), req.id),
        ),
        Err(e) => AttackOutcome::held(NAME, format!("refused: {e}")),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MitmPolicy {
    /// Replace `M2` with the encoding of `T_e(x)`.
    SubstituteM2,
    /// Replace `M3` with the encoding of `T_e(x)`.
    SubstituteM3,
    SubstituteBoth,
    /// Rewrite `AID` so it unmasks to `claimed` instead of `victim`.
    Identity {
        victim: Identity,
        claimed: Identity,
    },
}

impl MitmPolicy {
    fn label(&self) -> &'static str {
        match self {
            MitmPolicy::SubstituteM2 => "mitm-m2",
            MitmPolicy::SubstituteM3 => "mitm-m3",
            MitmPolicy::SubstituteBoth => "mitm-both",
            MitmPolicy::Identity { .. } => "mitm-identity",
        }
    }
}

#[derive(Default)]
struct MitmState {
    params: Option<(BigUint, FieldElement)>,
    /// `T_e(x)` encodings the adversary injected.
    injected: Vec<Vec<u8>>,
    /// Original masked element fields seen on the wire.
    observed: Vec<Vec<u8>>,
}

fn intercept(policy: &MitmPolicy, e: &BigUint, state: &mut MitmState, frame: Vec<u8>) -> Vec<u8> {
    let Ok(msg) = decode_frame(&frame) else { return frame };
    let forged = match msg {
        ProtocolMessage::Auth1(mut m) => {
            let x = FieldElement::reduce(&m.x, &m.modulus);
            state.params = Some((m.modulus.clone(), x));
            state.observed.push(m.m2.clone());
            match policy {
                MitmPolicy::SubstituteM2 | MitmPolicy::SubstituteBoth => {
                    m.m2 = inject(e, state);
                }
                MitmPolicy::Identity { victim, claimed } => {
                    let delta = xor_bytes(&victim.padded(), &claimed.padded()).expect("equal lengths");
                    m.aid = xor_bytes(&m.aid, &delta).expect("equal lengths").try_into().expect("32 bytes");
                }
                MitmPolicy::SubstituteM3 => return frame,
            }
            ProtocolMessage::Auth1(m)
        }
        ProtocolMessage::Auth2(mut m) => {
            state.observed.push(m.m3.clone());
            match policy {
                MitmPolicy::SubstituteM3 | MitmPolicy::SubstituteBoth => m.m3 = inject(e, state),
                _ => return frame,
            }
            ProtocolMessage::Auth2(m)
        }
        _ => return frame,
    };
    encode_frame(&forged).unwrap_or(frame)
}

fn inject(e: &BigUint, state: &mut MitmState) -> Vec<u8> {
    let (n, x) = state.params.as_ref().expect("msg1 precedes msg2");
    let te = cheby_eval_fast(e, x, n).encode(n);
    state.injected.push(te.clone());
    te
}

/// Every key the adversary can derive with its exponent `e`: it applies
/// `T_e` to each element-sized field it saw, masked or not.
fn adversary_keys(hash: HashAlg, e: &BigUint, state: &MitmState) -> Vec<SessionKey> {
    let Some((n, _)) = &state.params else { return Vec::new() };
    let len = element_len(n);
    state
        .observed
        .iter()
        .chain(&state.injected)
        .filter(|v| v.len() == len)
        .map(|v| {
            let point = FieldElement::reduce(&BigUint::from_bytes_be(v), n);
            let shared = cheby_eval_fast(e, &point, n).encode(n);
            SessionKey(hash.hash_tuple(tags::SK, &[&shared]).0)
        })
        .collect()
}

/// Runs a live handshake with an interceptor applying `policy`.
#[allow(clippy::too_many_arguments)]
pub fn attack_mitm_substitute<R1, R2>(
    user: UserSession,
    password: &[u8],
    endpoint: &ServerEndpoint,
    policy: MitmPolicy,
    user_rng: &mut R1,
    server_rng: &mut R2,
    adversary_seed: u64,
) -> Result<AttackOutcome, TransportError>
where
    R1: RngCore + CryptoRng + ?Sized,
    R2: RngCore + CryptoRng + ?Sized,
{
    let name = policy.label();
    let hash = endpoint.config().hash;
    let state = Arc::new(Mutex::new(MitmState::default()));
    let e = Arc::new(Mutex::new(None::<BigUint>));
    let mut adv_rng = ChaCha20Rng::seed_from_u64(adversary_seed);

    let (st, ee, pol) = (state.clone(), e.clone(), policy.clone());
    let mut channel = Loopback::with_tamper(move |_, _, frame| {
        let mut st = st.lock().expect("tamper state");
        let mut ee = ee.lock().expect("tamper state");
        if ee.is_none() {
            if let Ok(ProtocolMessage::Auth1(m)) = decode_frame(&frame) {
                if m.modulus > BigUint::from(2u8) {
                    *ee = Some(adv_rng.gen_biguint_range(&BigUint::from(2u8), &m.modulus));
                }
            }
        }
        match ee.as_ref() {
            Some(e) => intercept(&pol, e, &mut st, frame),
            None => frame,
        }
    });

    let out = run_handshake(user, password, endpoint.session(), &mut channel, user_rng, server_rng)?;
    let state = state.lock().expect("tamper state");
    let candidates = match e.lock().expect("tamper state").as_ref() {
        Some(e) => adversary_keys(hash, e, &state),
        None => Vec::new(),
    };
    let user_key = out.user.session_key().ok();
    let server_key = out.server.session_key().ok();
    let summary = format!("user {:?}, server {:?}", out.user.phase(), out.server.phase());

    if let Some(k) = [user_key, server_key].into_iter().flatten().find(|k| candidates.contains(k)) {
        return Ok(AttackOutcome::violated(
            name,
            format!("adversary derived session key {}; {summary}", k.fingerprint()),
        ));
    }
    if out.both_established() {
        return Ok(AttackOutcome::violated(name, format!("both ends accepted tampered traffic; {summary}")));
    }
    Ok(AttackOutcome::held(name, summary))
}

/// Searches every frame for the padded identity of each known party.
pub fn scan_anonymity(transcript: &Transcript, identities: &[Identity]) -> AttackOutcome {
    const NAME: &str = "anonymity";
    let mut hits = Vec::new();
    for entry in transcript.entries() {
        for id in identities {
            let needle = id.padded();
            if let Some(offset) = entry.frame.windows(needle.len()).position(|w| w == needle) {
                hits.push(format!("{id} in frame {} ({}) at byte {offset}", entry.index, entry.direction));
            }
        }
    }
    if hits.is_empty() {
        AttackOutcome::held(NAME, format!("{} frames, {} identities, no match", transcript.len(), identities.len()))
    } else {
        AttackOutcome::violated(NAME, hits.join("; "))
    }
}

/// Searches every frame for the raw encodings of ephemeral publics
/// `T_r(x)`, `T_s(x)`, which must only appear masked.
pub fn scan_unmasked_elements(transcript: &Transcript, elements: &[&[u8]]) -> AttackOutcome {
    const NAME: &str = "unmasked-element";
    let mut hits = Vec::new();
    for entry in transcript.entries() {
        for (i, el) in elements.iter().enumerate().filter(|(_, el)| !el.is_empty()) {
            if let Some(offset) = entry.frame.windows(el.len()).position(|w| w == *el) {
                hits.push(format!("element {i} in frame {} at byte {offset}", entry.index));
            }
        }
    }
    if hits.is_empty() {
        AttackOutcome::held(NAME, format!("{} elements absent from {} frames", elements.len(), transcript.len()))
    } else {
        AttackOutcome::violated(NAME, hits.join("; "))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinkGroup {
    /// `pseudonym:<hex>` or `identity:<id>`.
    pub handle: String,
    pub sessions: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LinkabilityReport {
    pub groups: Vec<LinkGroup>,
    /// Sessions with no clear handle.
    pub unlinked: Vec<usize>,
}

impl LinkabilityReport {
    pub fn linked(&self, a: usize, b: usize) -> bool {
        self.groups.iter().any(|g| g.sessions.contains(&a) && g.sessions.contains(&b))
    }

    /// Number of session pairs sharing a handle.
    pub fn linked_pairs(&self) -> usize {
        self.groups.iter().map(|g| g.sessions.len() * g.sessions.len().saturating_sub(1) / 2).sum()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for g in &self.groups {
            let ids: Vec<String> = g.sessions.iter().map(usize::to_string).collect();
            out.push_str(&format!("link handle={} sessions={}\n", g.handle, ids.join(",")));
        }
        out
    }
}

fn link_handle(transcript: &Transcript) -> Option<String> {
    transcript.entries().iter().find_map(|e| match e.message().ok()? {
        ProtocolMessage::Auth1(m) => Some(format!("pseudonym:{}", m.pseudonym.to_hex())),
        ProtocolMessage::Yj1(m) => Some(format!("identity:{}", m.sender)),
        _ => None,
    })
}

/// Groups sessions by the value that identifies the initiator in clear:
/// the fixed pseudonym `M_i`, or the baseline's sender identity.
pub fn report_linkability(transcripts: &[Transcript]) -> LinkabilityReport {
    let mut report = LinkabilityReport::default();
    for (i, t) in transcripts.iter().enumerate() {
        match link_handle(t) {
            Some(handle) => match report.groups.iter_mut().find(|g| g.handle == handle) {
                Some(g) => g.sessions.push(i),
                None => report.groups.push(LinkGroup { handle, sessions: vec![i] }),
            },
            None => report.unlinked.push(i),
        }
    }
    report
}

#[derive(Clone, Debug)]
pub struct KnownKeySession {
    pub transcript: Transcript,
    pub key: SessionKey,
    /// Seed the session's randomness came from, when known.
    pub seed: Option<u64>,
}

fn public_fields(t: &Transcript) -> Vec<(&'static str, Vec<u8>)> {
    let mut out = Vec::new();
    for e in t.entries() {
        if let Ok(spans) = field_spans(&e.frame) {
            out.extend(spans.into_iter().map(|s| (s.name, e.frame[s.range].to_vec())));
        }
    }
    out
}

/// Candidate keys for `target` from the revealed session and public data:
/// key reuse, `H("sk", f)` for every public field `f`, and the revealed key
/// shifted by the XOR difference of same-named 32-byte fields.
fn recompute_candidates(hash: HashAlg, revealed: &KnownKeySession, target: &Transcript) -> Vec<SessionKey> {
    let mut out = vec![revealed.key];
    let rev_fields = public_fields(&revealed.transcript);
    let tgt_fields = public_fields(target);
    for (_, f) in rev_fields.iter().chain(&tgt_fields) {
        out.push(SessionKey(hash.hash_tuple(tags::SK, &[f]).0));
    }
    for (name, f) in &tgt_fields {
        for (rname, rf) in &rev_fields {
            if name == rname && f.len() == 32 && rf.len() == 32 {
                let delta = xor_bytes(f, rf).expect("32 bytes");
                let shifted = xor_bytes(&delta, revealed.key.as_bytes()).expect("32 bytes");
                out.push(SessionKey(shifted.try_into().expect("32 bytes")));
            }
        }
    }
    out
}

/// Reveals `sessions[revealed].key` and tries to recompute every other key.
pub fn check_known_key(sessions: &[KnownKeySession], revealed: usize, hash: HashAlg) -> AttackOutcome {
    const NAME: &str = "known-key";
    let mut warnings = Vec::new();
    let mut duplicate_of: Vec<Option<usize>> = vec![None; sessions.len()];
    for i in 0..sessions.len() {
        for j in 0..i {
            let same_seed = matches!((sessions[i].seed, sessions[j].seed), (Some(a), Some(b)) if a == b);
            if same_seed {
                warnings.push(format!("sessions {j} and {i} share a seed: rng reuse"));
            }
            if sessions[i].transcript == sessions[j].transcript && duplicate_of[i].is_none() {
                duplicate_of[i] = Some(duplicate_of[j].unwrap_or(j));
                if !same_seed {
                    warnings.push(format!("sessions {j} and {i} have identical transcripts: rng reuse"));
                }
            }
        }
    }
    let root = |i: usize| duplicate_of[i].unwrap_or(i);
    let Some(rev) = sessions.get(revealed) else {
        return AttackOutcome::held(NAME, "no session to reveal");
    };

    let mut findings = Vec::new();
    let mut checked = 0;
    for (i, s) in sessions.iter().enumerate() {
        if root(i) == root(revealed) {
            continue;
        }
        checked += 1;
        if recompute_candidates(hash, rev, &s.transcript).contains(&s.key) {
            findings.push(format!("session {i} key {} recomputed", s.key.fingerprint()));
        }
    }
    for i in 0..sessions.len() {
        for j in 0..i {
            if root(i) != root(j) && sessions[i].key == sessions[j].key {
                findings.push(format!("distinct sessions {j} and {i} share a key"));
            }
        }
    }

    let mut outcome = if findings.is_empty() {
        AttackOutcome::held(
            NAME,
            format!("revealed session {revealed}; {checked} other sessions unrecoverable, keys pairwise distinct"),
        )
    } else {
        AttackOutcome::violated(NAME, findings.join("; "))
    };
    outcome.warnings = warnings;
    outcome
}

/// A registered user answers someone else's msg1 as if it were the server,
/// using only its own credentials.
pub fn attack_insider_impersonation<R: RngCore + CryptoRng + ?Sized>(
    insider: &UserCredentials,
    insider_password: &[u8],
    victim: &mut UserSession,
    victim_msg1: &AuthMsg1,
    hash: HashAlg,
    rng: &mut R,
) -> AttackOutcome {
    const NAME: &str = "insider-impersonation";
    let n = &victim_msg1.modulus;
    let x = FieldElement::reduce(&victim_msg1.x, n);

    // Everything the insider can derive with its own secrets.
    let hpw = hash.hash_tuple(tags::HPW, &[insider_password, insider.ns.as_bytes()]);
    let id_pw = hash.hash_tuple(tags::RI, &[&insider.id.padded()[..], hpw.as_bytes()]);
    let own_hx = insider.ri.xor(&id_pw);
    let hk_guess = insider.ri.xor(&victim_msg1.m1);
    let id_guess = xor_bytes(&victim_msg1.aid, hk_guess.as_bytes()).expect("32 bytes");
    let len = element_len(n);
    let tr_guess = xor_bytes(&victim_msg1.m2, &hash.mask_expand(&insider.r1, len)).unwrap_or_default();
    let tr_guess = FieldElement::reduce(&BigUint::from_bytes_be(&tr_guess), n);

    let s = rng.gen_biguint_range(&BigUint::from(2u8), n);
    let sk = cheby_eval_fast(&s, &tr_guess, n).encode(n);
    let ts = cheby_eval_fast(&s, &x, n).encode(n);
    let m3 = xor_bytes(&ts, &hash.mask_expand(&own_hx, len)).expect("mask has the element length");
    let au_s: Digest = hash.hash_tuple(tags::AUS, &[&id_guess[..], hk_guess.as_bytes(), &sk]);
    let forged = AuthMsg2 { server_id: insider.server_id.clone(), m3, au_s };

    match victim.finish(&forged) {
        Ok(_) => AttackOutcome::violated(NAME, "victim accepted a server response forged by another user"),
        Err(e) => AttackOutcome::held(NAME, format!("victim rejected the forged msg2: {e}")),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FieldTally {
    pub flips: u32,
    pub user_established: u32,
    pub server_established: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FuzzReport {
    pub cases: u32,
    /// Both ends established after a flip.
    pub dual_established: u32,
    /// Both ends established with different keys.
    pub mismatched_keys: u32,
    /// Keyed by `frame:field`; header bytes and length prefixes use `frame:framing`.
    pub by_field: BTreeMap<String, FieldTally>,
}

impl FuzzReport {
    pub fn violated(&self) -> bool {
        self.dual_established > 0 || self.mismatched_keys > 0
    }

    pub fn outcome(&self) -> AttackOutcome {
        const NAME: &str = "bit-flip";
        let summary = format!(
            "{} flips over {} fields: {} dual-established, {} mismatched keys",
            self.cases,
            self.by_field.len(),
            self.dual_established,
            self.mismatched_keys
        );
        if self.violated() {
            AttackOutcome::violated(NAME, summary)
        } else {
            AttackOutcome::held(NAME, summary)
        }
    }
}

fn field_of(frame: &[u8], byte: usize) -> String {
    let tag = frame.get(4).copied().unwrap_or(0);
    let name = field_spans(frame)
        .ok()
        .and_then(|spans| spans.into_iter().find(|s| s.range.contains(&byte)).map(|s| s.name))
        .unwrap_or("framing");
    format!("{tag:02x}:{name}")
}

/// Flips every bit of every protocol frame in turn, one flip per run, with
/// both sides' randomness fixed by the seeds.
pub fn bit_flip_fuzz(
    endpoint: &ServerEndpoint,
    creds: &UserCredentials,
    password: &[u8],
    user_seed: u64,
    server_seed: u64,
) -> Result<FuzzReport, TransportError> {
    let config = *endpoint.config();
    let run = |channel: &mut Loopback| {
        run_handshake(
            UserSession::new(creds.clone(), config),
            password,
            endpoint.session(),
            channel,
            &mut ChaCha20Rng::seed_from_u64(user_seed),
            &mut ChaCha20Rng::seed_from_u64(server_seed),
        )
    };
    let honest = run(&mut Loopback::new())?;
    if !honest.agreed() {
        return Err(TransportError::Local("honest baseline run did not establish".into()));
    }
    let frames: Vec<Vec<u8>> = honest.transcript.entries().iter().map(|e| e.frame.clone()).collect();

    let mut report = FuzzReport::default();
    for (k, frame) in frames.iter().enumerate() {
        for bit in 0..frame.len() * 8 {
            let mut channel = Loopback::with_tamper(move |i, _, mut f| {
                if i == k {
                    f[bit / 8] ^= 1 << (bit % 8);
                }
                f
            });
            let out = run(&mut channel)?;
            let user_ok = out.user.phase() == Phase::Established;
            let server_ok = out.server.phase() == Phase::Established;
            report.cases += 1;
            if user_ok && server_ok {
                report.dual_established += 1;
                if !out.agreed() {
                    report.mismatched_keys += 1;
                }
            }
            let tally = report.by_field.entry(field_of(frame, bit / 8)).or_default();
            tally.flips += 1;
            tally.user_established += u32::from(user_ok);
            tally.server_established += u32::from(server_ok);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baseline::{run_yoonjeon, TrentKeyTable, YjRngs};
    use crate::protocol::{register_user_begin, AbortReason, MemoryStore, ProtocolConfig};
    use crate::transport::HandshakeOutcome;

    const PW: &[u8] = b"pw";

    fn id(s: &str) -> Identity {
        Identity::new(s).unwrap()
    }

    fn config() -> ProtocolConfig {
        ProtocolConfig::default().with_prime_bits(64)
    }

    fn server() -> ServerEndpoint {
        ServerEndpoint::new(Arc::new(MemoryStore::new()), id("server"), config())
    }

    fn enroll(server: &ServerEndpoint, name: &str, seed: u64) -> (UserCredentials, RegistrationRequest) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (req, pending) = register_user_begin(id(name), PW, &config(), &mut rng).unwrap();
        (pending.finish(server.register(&req, &mut rng).unwrap()), req)
    }

    fn run(server: &ServerEndpoint, creds: &UserCredentials, seed: u64) -> HandshakeOutcome {
        run_handshake(
            UserSession::new(creds.clone(), config()),
            PW,
            server.session(),
            &mut Loopback::new(),
            &mut ChaCha20Rng::seed_from_u64(seed),
            &mut ChaCha20Rng::seed_from_u64(seed ^ 0xffff),
        )
        .unwrap()
    }

    #[test]
    fn replay_fails_and_leaves_live_session_alone() {
        let srv = server();
        let (creds, req) = enroll(&srv, "alice", 1);
        let old = run(&srv, &creds, 10);
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let outcome = attack_replay(&old.transcript, &srv, &mut rng).unwrap();
        assert!(!outcome.succeeded, "{outcome}");
        assert!(outcome.evidence.contains("user-auth-failed"));
        assert!(run(&srv, &creds, 11).agreed());
        assert!(!attack_replay_registration(&req, &srv, &mut rng).succeeded);
        assert!(attack_replay(&Transcript::new(), &srv, &mut rng).is_err());
    }

    #[test]
    fn mitm_policies_fail() {
        let srv = server();
        let (creds, _) = enroll(&srv, "alice", 3);
        let policies = [
            MitmPolicy::SubstituteM2,
            MitmPolicy::SubstituteM3,
            MitmPolicy::SubstituteBoth,
            MitmPolicy::Identity { victim: id("alice"), claimed: id("mallory") },
        ];
        for (i, policy) in policies.into_iter().enumerate() {
            let out = attack_mitm_substitute(
                UserSession::new(creds.clone(), config()),
                PW,
                &srv,
                policy.clone(),
                &mut ChaCha20Rng::seed_from_u64(i as u64),
                &mut ChaCha20Rng::seed_from_u64(100 + i as u64),
                7,
            )
            .unwrap();
            assert!(!out.succeeded, "{out}");
            match policy {
                MitmPolicy::SubstituteM2 => assert!(out.evidence.contains("ServerAuthFailed"), "{out}"),
                MitmPolicy::Identity { .. } => assert!(out.evidence.contains("server Aborted(AuthFailed)"), "{out}"),
                _ => {}
            }
        }
    }

    #[test]
    fn adversary_key_set_detects_a_broken_protocol() {
        // With the mask stripped (the adversary sees T_r(x) in clear), the
        // candidate set contains T_e(T_r(x)), which is what a server that
        // accepted T_e(x) would derive.
        let n = BigUint::from(1_000_003u32);
        let x = FieldElement::reduce(&BigUint::from(12345u32), &n);
        let r = BigUint::from(777u32);
        let e = BigUint::from(4242u32);
        let tr = cheby_eval_fast(&r, &x, &n).encode(&n);
        let state = MitmState { params: Some((n.clone(), x.clone())), injected: vec![], observed: vec![tr] };
        let keys = adversary_keys(HashAlg::Sha256, &e, &state);
        let shared = cheby_eval_fast(&(&r * &e), &x, &n).encode(&n);
        assert!(keys.contains(&SessionKey(HashAlg::Sha256.hash_tuple(tags::SK, &[&shared]).0)));
    }

    #[test]
    fn anonymity_scan_separates_protocols() {
        let srv = server();
        let (creds, _) = enroll(&srv, "alice", 4);
        let ids = [id("alice"), id("server")];
        let t = run(&srv, &creds, 12).transcript;
        let only_user = scan_anonymity(&t, &ids[..1]);
        assert!(!only_user.succeeded);
        // The server identity is public and does appear in msg2.
        assert!(scan_anonymity(&t, &ids).evidence.contains("server in frame 1"));
        assert!(!scan_anonymity(&Transcript::new(), &ids).succeeded);

        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let mut table = TrentKeyTable::new();
        table.enroll(id("alice"), &mut rng).unwrap();
        table.enroll(id("bob"), &mut rng).unwrap();
        let (mut a, mut t2, mut b) =
            (ChaCha20Rng::seed_from_u64(1), ChaCha20Rng::seed_from_u64(2), ChaCha20Rng::seed_from_u64(3));
        let yj = run_yoonjeon(
            &id("alice"),
            &id("bob"),
            &table,
            HashAlg::Sha256,
            64,
            &mut Loopback::new(),
            YjRngs { alice: &mut a, trent: &mut t2, bob: &mut b },
        )
        .unwrap();
        let leak = scan_anonymity(&yj.transcript, &[id("alice")]);
        assert!(leak.succeeded);
        assert!(leak.evidence.starts_with("alice in frame 0 (U>T) at byte 9"), "{}", leak.evidence);
    }

    #[test]
    fn ephemeral_publics_never_on_wire() {
        let srv = server();
        let (creds, _) = enroll(&srv, "alice", 6);
        let out = run(&srv, &creds, 13);
        let els = [out.user.ephemeral_public().unwrap(), out.server.ephemeral_public().unwrap()];
        assert!(!scan_unmasked_elements(&out.transcript, &els).succeeded);
        let found = scan_unmasked_elements(&out.transcript, &[&out.transcript.entries()[0].frame[9..25]]);
        assert!(found.succeeded);
    }

    #[test]
    fn linkability_groups_by_pseudonym() {
        let srv = server();
        let (alice, _) = enroll(&srv, "alice", 7);
        let (bob, _) = enroll(&srv, "bob", 8);
        let ts = vec![
            run(&srv, &alice, 20).transcript,
            run(&srv, &bob, 21).transcript,
            run(&srv, &alice, 22).transcript,
            Transcript::new(),
        ];
        let report = report_linkability(&ts);
        assert!(report.linked(0, 2));
        assert!(!report.linked(0, 1));
        assert_eq!(report.linked_pairs(), 1);
        assert_eq!(report.unlinked, [3]);
        assert!(report.render().contains(&format!("pseudonym:{}", alice.pseudonym.to_hex())));
    }

    #[test]
    fn known_key_checks() {
        let srv = server();
        let (creds, _) = enroll(&srv, "alice", 9);
        let sessions: Vec<KnownKeySession> = (0..10)
            .map(|i| {
                let out = run(&srv, &creds, 30 + i);
                KnownKeySession { key: out.user.session_key().unwrap(), transcript: out.transcript, seed: Some(30 + i) }
            })
            .collect();
        let outcome = check_known_key(&sessions, 3, HashAlg::Sha256);
        assert!(!outcome.succeeded, "{outcome}");
        assert!(outcome.warnings.is_empty());

        let twice = vec![sessions[0].clone(), sessions[0].clone(), sessions[1].clone()];
        let outcome = check_known_key(&twice, 0, HashAlg::Sha256);
        assert!(!outcome.succeeded, "{outcome}");
        assert_eq!(outcome.warnings.len(), 1);
        assert!(outcome.warnings[0].contains("rng reuse"));

        let mut leaky = sessions[..2].to_vec();
        leaky[1].key = leaky[0].key;
        assert!(check_known_key(&leaky, 0, HashAlg::Sha256).succeeded);
    }

    #[test]
    fn insider_cannot_answer_for_server() {
        let srv = server();
        let (alice, _) = enroll(&srv, "alice", 10);
        let (mallory, _) = enroll(&srv, "mallory", 11);
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let mut victim = UserSession::new(alice, config());
        let m1 = victim.start(PW, &mut rng).unwrap();
        let outcome = attack_insider_impersonation(&mallory, PW, &mut victim, &m1, HashAlg::Sha256, &mut rng);
        assert!(!outcome.succeeded, "{outcome}");
        assert_eq!(victim.phase(), Phase::Aborted(AbortReason::ServerAuthFailed));
    }

    #[test]
    fn outcome_formats() {
        let mut o = AttackOutcome::held("replay", "server said \"no\"");
        assert_eq!(o.machine_line(), r#"attack=replay succeeded=false evidence="server said \"no\"""#);
        o.warnings.push("w".into());
        assert!(o.machine_line().ends_with(r#" warnings="w""#));
    }

    #[test]
    #[should_panic(expected = "evidence")]
    fn violation_requires_evidence() {
        AttackOutcome::violated("x", "");
    }
}
