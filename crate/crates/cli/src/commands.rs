use std::hint::black_box;
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;
use std::thread;
use std::time::Instant;

use chaoskey::adversary::{
    attack_insider_impersonation, attack_mitm_substitute, attack_replay, attack_replay_registration, bit_flip_fuzz,
    check_known_key, report_linkability, scan_anonymity, scan_unmasked_elements, AttackOutcome, KnownKeySession,
    MitmPolicy,
};
use chaoskey::baseline::{run_yoonjeon, TrentKeyTable, YjOutcome, YjRngs};
use chaoskey::chebyshev::{cheby_eval_fast, ChebyParams};
use chaoskey::costmodel::{cost_table, cost_total, published_rows, CostWeights};
use chaoskey::logistic::{chaotic_sum, decimal_lift, logistic_sequence, LogisticParams};
use chaoskey::numtheory::random_exact_bits;
use chaoskey::primitives::{xor_bytes, Identity};
use chaoskey::protocol::{
    register_user_begin, MemoryStore, Phase, ProtocolError, ServerEndpoint, UserCredentials, UserSession,
};
use chaoskey::transport::{
    client_handshake, client_register, run_handshake, serve_connection, tag, Channel, HandshakeOutcome, Loopback,
    ServeOutcome, SocketChannel, Transcript, ALREADY_REGISTERED,
};
use num_bigint::RandBigInt;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::setup::*;
use crate::{Cli, Cmd, Failure, Format, Opts, Protocol, Transport};

pub const ATTACKS: &[(&str, &str)] = &[
    ("replay", "re-send a recorded msg1/msg3 to a live server"),
    ("registration-replay", "re-send a registration request"),
    ("mitm-m2", "substitute the user's masked ephemeral"),
    ("mitm-m3", "substitute the server's masked ephemeral"),
    ("mitm-both", "substitute both masked ephemerals"),
    ("mitm-identity", "rewrite the masked identity"),
    ("anonymity", "search transcripts for identities in clear"),
    ("unmasked", "search transcripts for ephemeral publics in clear"),
    ("known-key", "derive other session keys from one revealed key"),
    ("insider", "a registered user answers for the server"),
    ("bitflip", "flip every bit of every honest frame"),
    ("linkability", "group sessions by clear handles (report only)"),
];

const LAB_PASSWORD: &[u8] = b"lab password";

struct Out(Format);

impl Out {
    fn emit(&self, text: impl AsRef<str>, machine: impl AsRef<str>) {
        let s = match self.0 {
            Format::Text => text.as_ref(),
            Format::Machine => machine.as_ref(),
        };
        println!("{}", s.trim_end());
    }
}

pub fn run(cli: &Cli) -> Result<bool, Failure> {
    let opts = &cli.opts;
    let out = Out(opts.format);
    match &cli.cmd {
        Cmd::Params => params(opts, &out),
        Cmd::Register { identity, remote } => register(opts, &out, identity, *remote),
        Cmd::Handshake { remote, dump } => handshake(opts, &out, *remote, dump.as_deref()),
        Cmd::Serve { max_connections } => serve(opts, &out, *max_connections),
        Cmd::Attack { name, transcript, ids, sessions } => attack(opts, &out, name, transcript, ids, *sessions),
        Cmd::CostTable => cost(opts, &out),
        Cmd::Baseline => baseline(opts, &out),
        Cmd::Bench { iterations } => bench(opts, &out, *iterations),
    }
}

fn params(opts: &Opts, out: &Out) -> Result<bool, Failure> {
    let mut rng = user_rng(opts);
    let cheby = ChebyParams::generate(opts.bits, &mut rng).map_err(|e| Failure::Io(e.to_string()))?;
    let logistic =
        LogisticParams::random(opts.precision, opts.seq_len, &mut rng).map_err(|e| Failure::Usage(e.to_string()))?;
    let sum = chaotic_sum(&logistic_sequence(&logistic)).map_err(|e| Failure::Usage(e.to_string()))?;
    let (lifted, digits) = decimal_lift(&sum);
    let m1 = random_exact_bits(config(opts).crt_modulus_bits, &mut rng);
    let fields = [
        ("bits", opts.bits.to_string()),
        ("hash", opts.hash.id().to_string()),
        ("N", cheby.modulus().to_string()),
        ("x", cheby.base().to_string()),
        ("lambda", logistic.lambda().to_string()),
        ("x0", logistic.x0().to_string()),
        ("sum", sum.value().to_string()),
        ("a_prime", lifted.to_string()),
        ("c", digits.to_string()),
        ("m1", m1.to_string()),
    ];
    let text: Vec<String> = fields.iter().map(|(k, v)| format!("{k:<8} {v}")).collect();
    let machine: Vec<String> = fields.iter().map(|(k, v)| format!("{k}={v}")).collect();
    out.emit(text.join("\n"), format!("params {}", machine.join(" ")));
    Ok(true)
}

fn register(opts: &Opts, out: &Out, raw_id: &str, remote: bool) -> Result<bool, Failure> {
    let id = identity(raw_id)?;
    let cfg = config(opts);
    let pw = password()?;
    let mut rng = user_rng(opts);
    let (req, pending) =
        register_user_begin(id.clone(), &pw, &cfg, &mut rng).map_err(|e| Failure::Usage(e.to_string()))?;

    let resp = if remote {
        let stream = TcpStream::connect(&opts.addr).map_err(|e| Failure::Io(format!("{}: {e}", opts.addr)))?;
        match client_register(stream, &req).map_err(io_err)? {
            Ok(resp) => resp,
            Err(reason) => {
                let text = if reason == ALREADY_REGISTERED {
                    format!("refused: {id} is already registered")
                } else {
                    format!("refused: {reason}")
                };
                out.emit(text, format!("register identity={id} result=refused reason={reason}"));
                return Ok(false);
            }
        }
    } else {
        let server = endpoint(opts)?;
        match server.register(&req, &mut server_rng(opts)) {
            Ok(resp) => resp,
            Err(ProtocolError::AlreadyRegistered(_)) => {
                out.emit(
                    format!("refused: {id} is already registered"),
                    format!("register identity={id} result=refused reason={ALREADY_REGISTERED}"),
                );
                return Ok(false);
            }
            Err(ProtocolError::Store(e)) => return Err(Failure::Io(e.to_string())),
            Err(e) => {
                out.emit(format!("refused: {e}"), format!("register identity={id} result=refused reason={e:?}"));
                return Ok(false);
            }
        }
    };
    let creds = pending.finish(resp);
    creds.save(&opts.cred).map_err(|e| Failure::Io(format!("{}: {e}", opts.cred.display())))?;
    let pseudonym = creds.pseudonym.to_hex();
    out.emit(
        format!("registered {id}\npseudonym {pseudonym}\ncredentials {}", opts.cred.display()),
        format!("register identity={id} result=ok pseudonym={pseudonym}"),
    );
    Ok(true)
}

fn frame_sizes(t: &Transcript) -> Vec<(String, usize)> {
    t.entries()
        .iter()
        .map(|e| {
            let name = match e.tag() {
                Some(tag::AUTH1) => "msg1".to_string(),
                Some(tag::AUTH2) => "msg2".to_string(),
                Some(tag::AUTH3) => "msg3".to_string(),
                Some(tag::ABORT) => "abort".to_string(),
                Some(t) => format!("{t:02x}"),
                None => "?".to_string(),
            };
            (name, e.frame.len())
        })
        .collect()
}

fn report_party(out: &Out, role: &str, phase: Phase, key: Option<String>, cost: String) {
    let fp = key.unwrap_or_else(|| "-".into());
    out.emit(
        format!("{role:<7} {:<28} fingerprint {fp}  cost {cost}", phase_label(phase)),
        format!("party role={role} phase={} fingerprint={fp} cost={cost}", phase_label(phase)),
    );
}

fn handshake(opts: &Opts, out: &Out, remote: bool, dump: Option<&std::path::Path>) -> Result<bool, Failure> {
    let creds = load_credentials(opts)?;
    let pw = password()?;
    let cfg = config(opts);
    let mut urng = user_rng(opts);

    let (ok, transcript) = if remote {
        let stream = TcpStream::connect(&opts.addr).map_err(|e| Failure::Io(format!("{}: {e}", opts.addr)))?;
        let (user, t) = client_handshake(stream, UserSession::new(creds, cfg), &pw, &mut urng).map_err(io_err)?;
        let key = user.session_key().ok().map(|k| k.fingerprint());
        report_party(out, "user", user.phase(), key, user.census().cost_expr().to_string());
        (user.phase() == Phase::Established, t)
    } else {
        let server = endpoint(opts)?;
        let mut channel: Box<dyn Channel> = match opts.transport {
            Transport::Loopback => Box::new(Loopback::new()),
            Transport::Socket => Box::new(SocketChannel::pair().map_err(|e| Failure::Io(e.to_string()))?),
        };
        let o: HandshakeOutcome = run_handshake(
            UserSession::new(creds, cfg),
            &pw,
            server.session(),
            channel.as_mut(),
            &mut urng,
            &mut server_rng(opts),
        )
        .map_err(io_err)?;
        report_party(
            out,
            "user",
            o.user.phase(),
            o.user.session_key().ok().map(|k| k.fingerprint()),
            o.user.census().cost_expr().to_string(),
        );
        report_party(
            out,
            "server",
            o.server.phase(),
            o.server.session_key().ok().map(|k| k.fingerprint()),
            o.server.census().cost_expr().to_string(),
        );
        (o.agreed(), o.transcript)
    };

    let sizes = frame_sizes(&transcript);
    let text: Vec<String> = sizes.iter().map(|(n, s)| format!("{n} {s}B")).collect();
    let machine: Vec<String> = sizes.iter().map(|(n, s)| format!("{n}={s}")).collect();
    out.emit(format!("frames  {}", text.join(", ")), format!("frames {}", machine.join(" ")));
    if let Some(path) = dump {
        std::fs::write(path, transcript.dump()).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(ok)
}

fn serve(opts: &Opts, out: &Out, max_connections: Option<usize>) -> Result<bool, Failure> {
    let server = Arc::new(endpoint(opts)?);
    let listener = TcpListener::bind(&opts.addr).map_err(|e| Failure::Io(format!("{}: {e}", opts.addr)))?;
    let local = listener.local_addr().map_err(|e| Failure::Io(e.to_string()))?;
    out.emit(format!("listening on {local}"), format!("listening addr={local}"));

    let format = opts.format;
    let mut workers = Vec::new();
    for (index, conn) in listener.incoming().take(max_connections.unwrap_or(usize::MAX)).enumerate() {
        let stream = match conn {
            Ok(s) => s,
            Err(e) => {
                eprintln!("chaoskey: accept: {e}");
                continue;
            }
        };
        let server = Arc::clone(&server);
        let mut rng = connection_rng(opts, index);
        workers.push(thread::spawn(move || {
            let out = Out(format);
            let (text, machine) = match serve_connection(stream, &server, &mut rng) {
                Ok(ServeOutcome::Registered(id)) => {
                    (format!("registered {id}"), format!("result=registered identity={id}"))
                }
                Ok(ServeOutcome::RegistrationRefused(why)) => {
                    (format!("refused registration: {why}"), format!("result=refused reason={why:?}"))
                }
                Ok(ServeOutcome::Session(s)) => {
                    let peer = s.peer_identity().map(Identity::to_string).unwrap_or_else(|| "-".into());
                    let fp = s.session_key().map(|k| k.fingerprint()).unwrap_or_else(|_| "-".into());
                    let phase = phase_label(s.phase());
                    (
                        format!("session {phase} peer {peer} fingerprint {fp}"),
                        format!("result=session phase={phase} peer={peer} fingerprint={fp}"),
                    )
                }
                Ok(ServeOutcome::Closed) => ("closed".into(), "result=closed".into()),
                Err(e) => (format!("error: {e}"), format!("result=error reason={:?}", e.to_string())),
            };
            out.emit(format!("conn {index}: {text}"), format!("conn index={index} {machine}"));
        }));
    }
    for w in workers {
        w.join().ok();
    }
    Ok(true)
}

/// An in-memory server with three enrolled users, all seeded from one stream.
struct Lab {
    server: ServerEndpoint,
    users: Vec<UserCredentials>,
    rng: ChaCha20Rng,
}

impl Lab {
    fn new(opts: &Opts) -> Result<Self, Failure> {
        let server = ServerEndpoint::new(Arc::new(MemoryStore::new()), identity(&opts.server_id)?, config(opts));
        let mut rng = user_rng(opts);
        let users = ["alice", "bob", "mallory"]
            .iter()
            .map(|name| {
                let mut r = ChaCha20Rng::seed_from_u64(sub_seed(&mut rng));
                let (req, pending) = register_user_begin(identity(name)?, LAB_PASSWORD, server.config(), &mut r)
                    .map_err(|e| Failure::Usage(e.to_string()))?;
                let resp = server.register(&req, &mut r).map_err(|e| Failure::Io(e.to_string()))?;
                Ok(pending.finish(resp))
            })
            .collect::<Result<_, Failure>>()?;
        Ok(Self { server, users, rng })
    }

    fn session(&mut self, user: usize) -> (HandshakeOutcome, u64) {
        let seed = sub_seed(&mut self.rng);
        let out = run_handshake(
            UserSession::new(self.users[user].clone(), *self.server.config()),
            LAB_PASSWORD,
            self.server.session(),
            &mut Loopback::new(),
            &mut ChaCha20Rng::seed_from_u64(seed),
            &mut ChaCha20Rng::seed_from_u64(!seed),
        )
        .expect("loopback delivers");
        (out, seed)
    }
}

fn load_transcripts(paths: &[std::path::PathBuf]) -> Result<Vec<Transcript>, Failure> {
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))?;
            Transcript::parse(&text).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))
        })
        .collect()
}

fn yoonjeon(opts: &Opts, seed: u64, bits: u64) -> Result<YjOutcome, Failure> {
    let alice = identity("alice")?;
    let bob = identity("bob")?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut table = TrentKeyTable::new();
    table.enroll(alice.clone(), &mut rng).map_err(|e| Failure::Usage(e.to_string()))?;
    table.enroll(bob.clone(), &mut rng).map_err(|e| Failure::Usage(e.to_string()))?;
    let mut trent = ChaCha20Rng::seed_from_u64(seed ^ 1);
    let mut bob_rng = ChaCha20Rng::seed_from_u64(seed ^ 2);
    run_yoonjeon(
        &alice,
        &bob,
        &table,
        opts.hash,
        bits,
        &mut Loopback::new(),
        YjRngs { alice: &mut rng, trent: &mut trent, bob: &mut bob_rng },
    )
    .map_err(io_err)
}

fn attack(
    opts: &Opts,
    out: &Out,
    name: &str,
    paths: &[std::path::PathBuf],
    ids: &[String],
    sessions: usize,
) -> Result<bool, Failure> {
    if !ATTACKS.iter().any(|(n, _)| *n == name) {
        let list: Vec<String> = ATTACKS.iter().map(|(n, d)| format!("  {n:<20} {d}")).collect();
        return Err(Failure::Usage(format!("unknown attack {name:?}; available:\n{}", list.join("\n"))));
    }
    let recorded = load_transcripts(paths)?;
    let search: Vec<Identity> = if ids.is_empty() {
        ["alice", "bob", "mallory"].iter().map(|n| identity(n)).collect::<Result<_, _>>()?
    } else {
        ids.iter().map(|n| identity(n)).collect::<Result<_, _>>()?
    };

    if opts.protocol == Protocol::YoonJeon {
        let transcripts = if recorded.is_empty() {
            let mut rng = user_rng(opts);
            let bits = opts.bits.min(256);
            (0..sessions.max(1))
                .map(|_| yoonjeon(opts, sub_seed(&mut rng), bits).map(|o| o.transcript))
                .collect::<Result<Vec<_>, _>>()?
        } else {
            recorded
        };
        return match name {
            "anonymity" => Ok(emit_outcomes(out, &scan_each(&transcripts, &search))),
            "linkability" => {
                emit_linkability(out, &transcripts);
                Ok(true)
            }
            _ => Err(Failure::Usage(format!("attack {name:?} is only implemented against the proposed protocol"))),
        };
    }

    let mut lab = Lab::new(opts)?;
    let outcomes: Vec<AttackOutcome> = match name {
        "replay" => {
            let targets = if recorded.is_empty() { vec![lab.session(0).0.transcript] } else { recorded };
            let on_disk;
            let server = if paths.is_empty() {
                &lab.server
            } else {
                on_disk = endpoint(opts)?;
                &on_disk
            };
            let mut rng = server_rng(opts);
            targets.iter().map(|t| attack_replay(t, server, &mut rng).map_err(io_err)).collect::<Result<_, _>>()?
        }
        "registration-replay" => {
            let mut r = ChaCha20Rng::seed_from_u64(sub_seed(&mut lab.rng));
            let (req, _) = register_user_begin(identity("carol")?, LAB_PASSWORD, lab.server.config(), &mut r)
                .map_err(|e| Failure::Usage(e.to_string()))?;
            lab.server.register(&req, &mut r).map_err(|e| Failure::Io(e.to_string()))?;
            vec![attack_replay_registration(&req, &lab.server, &mut r)]
        }
        "mitm-m2" | "mitm-m3" | "mitm-both" | "mitm-identity" => {
            let policy = match name {
                "mitm-m2" => MitmPolicy::SubstituteM2,
                "mitm-m3" => MitmPolicy::SubstituteM3,
                "mitm-both" => MitmPolicy::SubstituteBoth,
                _ => MitmPolicy::Identity { victim: identity("alice")?, claimed: identity("mallory")? },
            };
            let seed = sub_seed(&mut lab.rng);
            vec![attack_mitm_substitute(
                UserSession::new(lab.users[0].clone(), *lab.server.config()),
                LAB_PASSWORD,
                &lab.server,
                policy,
                &mut ChaCha20Rng::seed_from_u64(seed),
                &mut ChaCha20Rng::seed_from_u64(!seed),
                seed ^ 0xadd,
            )
            .map_err(io_err)?]
        }
        "anonymity" => {
            let ts = if recorded.is_empty() {
                (0..sessions.max(1)).map(|i| lab.session(i % 3).0.transcript).collect()
            } else {
                recorded
            };
            scan_each(&ts, &search)
        }
        "unmasked" => {
            let (o, _) = lab.session(0);
            let tr = o.user.ephemeral_public().unwrap_or_default();
            let ts = o.server.ephemeral_public().unwrap_or_default();
            vec![scan_unmasked_elements(&o.transcript, &[tr, ts])]
        }
        "known-key" => {
            let recorded: Vec<KnownKeySession> = (0..sessions.max(2))
                .map(|_| {
                    let (o, seed) = lab.session(0);
                    let key = o.user.session_key().expect("honest session establishes");
                    KnownKeySession { transcript: o.transcript, key, seed: Some(seed) }
                })
                .collect();
            vec![check_known_key(&recorded, 0, opts.hash)]
        }
        "insider" => {
            let mut r = ChaCha20Rng::seed_from_u64(sub_seed(&mut lab.rng));
            let mut victim = UserSession::new(lab.users[0].clone(), *lab.server.config());
            let msg1 = victim.start(LAB_PASSWORD, &mut r).map_err(|e| Failure::Usage(e.to_string()))?;
            vec![attack_insider_impersonation(&lab.users[2], LAB_PASSWORD, &mut victim, &msg1, opts.hash, &mut r)]
        }
        "bitflip" => {
            let seed = sub_seed(&mut lab.rng);
            let report = bit_flip_fuzz(&lab.server, &lab.users[0], LAB_PASSWORD, seed, !seed).map_err(io_err)?;
            vec![report.outcome()]
        }
        "linkability" => {
            let ts: Vec<Transcript> = if recorded.is_empty() {
                (0..sessions.max(1)).map(|i| lab.session(i % 3).0.transcript).collect()
            } else {
                recorded
            };
            emit_linkability(out, &ts);
            return Ok(true);
        }
        _ => unreachable!("name checked against ATTACKS"),
    };
    Ok(emit_outcomes(out, &outcomes))
}

fn scan_each(transcripts: &[Transcript], ids: &[Identity]) -> Vec<AttackOutcome> {
    transcripts.iter().map(|t| scan_anonymity(t, ids)).collect()
}

/// Prints each outcome; true when none succeeded.
fn emit_outcomes(out: &Out, outcomes: &[AttackOutcome]) -> bool {
    for o in outcomes {
        out.emit(o.to_string(), o.machine_line());
    }
    let broken = outcomes.iter().filter(|o| o.succeeded).count();
    if outcomes.len() > 1 {
        out.emit(
            format!("{broken}/{} runs violated the property", outcomes.len()),
            format!("summary runs={} succeeded={broken}", outcomes.len()),
        );
    }
    broken == 0
}

fn emit_linkability(out: &Out, ts: &[Transcript]) {
    let report = report_linkability(ts);
    let summary = format!(
        "linkability sessions={} groups={} linked_pairs={} unlinked={}",
        ts.len(),
        report.groups.len(),
        report.linked_pairs(),
        report.unlinked.len()
    );
    out.emit(format!("{}{summary}", report.render()), format!("{}{summary}", report.render()));
}

fn cost(opts: &Opts, out: &Out) -> Result<bool, Failure> {
    let weights = CostWeights::PUBLISHED;
    let report = cost_table(&published_rows(), &weights);
    out.emit(report.render_text(), report.render_machine());

    let mut lab = Lab::new(&Opts { bits: opts.bits.min(256), ..opts.clone() })?;
    let (o, _) = lab.session(0);
    let user = o.user.census().cost_expr();
    let server = o.server.census().cost_expr();
    let mut both = o.user.census().clone();
    both.merge(o.server.census());
    let total = cost_total(&both.cost_expr(), &weights);
    out.emit(
        format!("measured proposed: user {user}, server {server}, total {total}T_H"),
        format!("measured row=\"proposed\" user={user} server={server} computed={total}"),
    );
    let flagged = report.flagged().count();
    out.emit(
        format!("{} rows, {} match, {flagged} flagged", report.rows.len(), report.rows.len() - flagged),
        format!("summary rows={} match={} flagged={flagged}", report.rows.len(), report.rows.len() - flagged),
    );
    Ok(true)
}

fn baseline(opts: &Opts, out: &Out) -> Result<bool, Failure> {
    let seed = sub_seed(&mut user_rng(opts));
    let o = yoonjeon(opts, seed, opts.bits)?;
    let fp = |k: Option<chaoskey::protocol::SessionKey>| k.map(|k| k.fingerprint()).unwrap_or_else(|| "-".into());
    let (a, b) = (fp(o.alice_key), fp(o.bob_key));
    let status = match &o.failure {
        None => "established".to_string(),
        Some((party, e)) => format!("failed at {party:?}: {e}"),
    };
    let sizes: Vec<String> =
        o.transcript.entries().iter().map(|e| format!("{}:{}", e.direction, e.frame.len())).collect();
    let leak = scan_anonymity(&o.transcript, &[identity("alice")?]);
    out.emit(
        format!(
            "yoon-jeon {status}\nalice fingerprint {a}\nbob   fingerprint {b}\nencryptions {} decryptions {}\nframes {}\nanonymity: {leak}",
            o.census.encryptions(),
            o.census.decryptions(),
            sizes.join(" ")
        ),
        format!(
            "baseline status={status:?} alice={a} bob={b} encryptions={} decryptions={} frames={}\n{}",
            o.census.encryptions(),
            o.census.decryptions(),
            sizes.join(","),
            leak.machine_line()
        ),
    );
    Ok(o.established())
}

fn bench(opts: &Opts, out: &Out, iterations: u32) -> Result<bool, Failure> {
    let iterations = iterations.max(1);
    let mut rng = user_rng(opts);
    let params = ChebyParams::generate(opts.bits, &mut rng).map_err(|e| Failure::Io(e.to_string()))?;
    let n = params.modulus().clone();
    let exponent = rng.gen_biguint_below(&n);
    let block = [0x5au8; 32];

    let time = |f: &mut dyn FnMut()| {
        let start = Instant::now();
        for _ in 0..iterations {
            f();
        }
        start.elapsed().as_secs_f64() * 1e9 / f64::from(iterations)
    };
    let t_h = time(&mut || {
        black_box(opts.hash.hash_tuple("bench", &[black_box(&block[..])]));
    });
    let t_x = time(&mut || {
        black_box(xor_bytes(black_box(&block), black_box(&block)).ok());
    });
    let t_cm = time(&mut || {
        black_box(cheby_eval_fast(black_box(&exponent), params.base(), &n));
    });

    let mut lab = Lab::new(opts)?;
    let start = Instant::now();
    let rounds = (iterations / 20).max(1);
    for _ in 0..rounds {
        black_box(lab.session(0));
    }
    let t_hs = start.elapsed().as_secs_f64() * 1e9 / f64::from(rounds);

    let ratio = t_cm / t_h;
    let rows = [("T_H", t_h), ("T_X", t_x), ("T_CM", t_cm), ("handshake", t_hs)];
    let text: Vec<String> = rows.iter().map(|(k, v)| format!("{k:<10} {:>12.0} ns", v)).collect();
    let machine: Vec<String> = rows.iter().map(|(k, v)| format!("bench op={k} ns={v:.0}")).collect();
    out.emit(
        format!("{}\nT_CM/T_H   {ratio:>12.1}  (bits={}, iterations={iterations})", text.join("\n"), opts.bits),
        format!("{}\nbench ratio_cm_h={ratio:.1} bits={} iterations={iterations}", machine.join("\n"), opts.bits),
    );
    Ok(true)
}
