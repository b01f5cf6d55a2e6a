//! Wire format, channels and the handshake driver.
//!
//! Frame layout:
//!
//! ```text
//! +----------------+-----+--------------------------------------------+
//! | total len (BE) | tag | field*: len (u32 BE) || bytes              |
//! |    4 bytes     | 1 B |                                            |
//! +----------------+-----+--------------------------------------------+
//! ```
//!
//! `total len` counts the whole frame including itself. Identities are sent
//! in their 32-byte padded form; integers are minimal big-endian.
//!
//! An `AuthMsg3` carrying `AU_i = 00..00` is 41 bytes:
//!
//! ```text
//! 00000029 13 00000020 0000000000000000000000000000000000000000000000000000000000000000
//! ```
//!
//! and an `Abort` with an empty reason is `00000009 7f 00000000`.

use std::fmt;
use std::io::{self, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::ops::Range;
use std::str::FromStr;

use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::baseline::{YjMsg1, YjMsg2, YjMsg3, YjMsg4};
use crate::codec::{CodecError, FieldReader, FieldWriter};
use crate::primitives::{Digest, Identity, Nonce};
use crate::protocol::{
    AbortReason, AuthMsg1, AuthMsg2, AuthMsg3, ProtocolError, RegistrationRequest, RegistrationResponse,
    ServerEndpoint, ServerSession, UserSession,
};

pub const HEADER_LEN: usize = 5;
pub const MAX_PAYLOAD: usize = (1 << 24) - 1;

pub mod tag {
    pub const REGISTRATION_REQUEST: u8 = 0x01;
    pub const REGISTRATION_RESPONSE: u8 = 0x02;
    pub const AUTH1: u8 = 0x11;
    pub const AUTH2: u8 = 0x12;
    pub const AUTH3: u8 = 0x13;
    pub const YJ1: u8 = 0x21;
    pub const YJ2: u8 = 0x22;
    pub const YJ3: u8 = 0x23;
    pub const YJ4: u8 = 0x24;
    pub const ABORT: u8 = 0x7F;
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ProtocolMessage {
    RegistrationRequest(RegistrationRequest),
    RegistrationResponse(RegistrationResponse),
    Auth1(AuthMsg1),
    Auth2(AuthMsg2),
    Auth3(AuthMsg3),
    Yj1(YjMsg1),
    Yj2(YjMsg2),
    Yj3(YjMsg3),
    Yj4(YjMsg4),
    Abort { reason: String },
}

impl ProtocolMessage {
    pub fn tag(&self) -> u8 {
        match self {
            ProtocolMessage::RegistrationRequest(_) => tag::REGISTRATION_REQUEST,
            ProtocolMessage::RegistrationResponse(_) => tag::REGISTRATION_RESPONSE,
            ProtocolMessage::Auth1(_) => tag::AUTH1,
            ProtocolMessage::Auth2(_) => tag::AUTH2,
            ProtocolMessage::Auth3(_) => tag::AUTH3,
            ProtocolMessage::Yj1(_) => tag::YJ1,
            ProtocolMessage::Yj2(_) => tag::YJ2,
            ProtocolMessage::Yj3(_) => tag::YJ3,
            ProtocolMessage::Yj4(_) => tag::YJ4,
            ProtocolMessage::Abort { .. } => tag::ABORT,
        }
    }

    pub fn abort(reason: AbortReason) -> Self {
        ProtocolMessage::Abort { reason: reason.as_str().to_owned() }
    }
}

/// Field names per tag, in wire order.
pub fn field_names(tag: u8) -> Option<&'static [&'static str]> {
    Some(match tag {
        tag::REGISTRATION_REQUEST => &["ID", "a'", "c", "m1", "hpw"],
        tag::REGISTRATION_RESPONSE => &["ID_s", "M_i", "R_i", "R_1"],
        tag::AUTH1 => &["M_i", "M1", "M2", "AID", "x", "N"],
        tag::AUTH2 => &["ID_s", "M3", "AU_s"],
        tag::AUTH3 => &["AU_i"],
        tag::YJ1 => &["A", "E_TA"],
        tag::YJ2 => &["E_TB"],
        tag::YJ3 => &["T_s", "MAC_B"],
        tag::YJ4 => &["MAC_A"],
        tag::ABORT => &["reason"],
        _ => return None,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("frame truncated")]
    Truncated,
    #[error("declared frame length {0} is out of range")]
    BadLength(u32),
    #[error("payload of {0} bytes exceeds the frame limit")]
    Oversize(usize),
    #[error("unknown message tag 0x{0:02x}")]
    UnknownTag(u8),
    #[error("field length {0} overruns the frame")]
    FieldLengthOverflow(u32),
    #[error("{0} trailing bytes")]
    TrailingGarbage(usize),
    #[error("bad field: {0}")]
    Field(CodecError),
}

impl From<CodecError> for FrameError {
    fn from(e: CodecError) -> Self {
        match e {
            CodecError::Truncated => FrameError::Truncated,
            CodecError::FieldLengthOverflow(n) => FrameError::FieldLengthOverflow(n),
            CodecError::TrailingGarbage(n) => FrameError::TrailingGarbage(n),
            other => FrameError::Field(other),
        }
    }
}

fn write_identity(w: &mut FieldWriter, id: &Identity) {
    w.bytes(&id.padded());
}

fn read_identity(r: &mut FieldReader<'_>, field: &'static str) -> Result<Identity, CodecError> {
    let padded = r.fixed::<32>(field)?;
    Identity::from_padded(&padded).map_err(|_| CodecError::InvalidField(field))
}

fn read_digest(r: &mut FieldReader<'_>, field: &'static str) -> Result<Digest, CodecError> {
    r.fixed::<32>(field).map(Digest)
}

fn read_nonce(r: &mut FieldReader<'_>, field: &'static str) -> Result<Nonce, CodecError> {
    r.fixed::<16>(field).map(Nonce)
}

fn encode_payload(msg: &ProtocolMessage) -> Vec<u8> {
    let mut w = FieldWriter::new();
    match msg {
        ProtocolMessage::RegistrationRequest(m) => {
            write_identity(&mut w, &m.id);
            w.uint(&m.a_prime).u64(m.digits.into()).uint(&m.m1).bytes(m.hpw.as_bytes());
        }
        ProtocolMessage::RegistrationResponse(m) => {
            write_identity(&mut w, &m.server_id);
            w.bytes(m.pseudonym.as_bytes()).bytes(m.ri.as_bytes()).bytes(m.r1.as_bytes());
        }
        ProtocolMessage::Auth1(m) => {
            w.bytes(m.pseudonym.as_bytes())
                .bytes(m.m1.as_bytes())
                .bytes(&m.m2)
                .bytes(&m.aid)
                .uint(&m.x)
                .uint(&m.modulus);
        }
        ProtocolMessage::Auth2(m) => {
            write_identity(&mut w, &m.server_id);
            w.bytes(&m.m3).bytes(m.au_s.as_bytes());
        }
        ProtocolMessage::Auth3(m) => {
            w.bytes(m.au_i.as_bytes());
        }
        ProtocolMessage::Yj1(m) => {
            write_identity(&mut w, &m.sender);
            w.bytes(&m.ciphertext);
        }
        ProtocolMessage::Yj2(m) => {
            w.bytes(&m.ciphertext);
        }
        ProtocolMessage::Yj3(m) => {
            w.bytes(&m.ts_public).bytes(m.mac_b.as_bytes());
        }
        ProtocolMessage::Yj4(m) => {
            w.bytes(m.mac_a.as_bytes());
        }
        ProtocolMessage::Abort { reason } => {
            w.bytes(reason.as_bytes());
        }
    }
    w.finish()
}

pub fn encode_frame(msg: &ProtocolMessage) -> Result<Vec<u8>, FrameError> {
    let payload = encode_payload(msg);
    if payload.len() > MAX_PAYLOAD {
        return Err(FrameError::Oversize(payload.len()));
    }
    let total = (HEADER_LEN + payload.len()) as u32;
    let mut frame = Vec::with_capacity(total as usize);
    frame.extend_from_slice(&total.to_be_bytes());
    frame.push(msg.tag());
    frame.extend(payload);
    Ok(frame)
}

/// Checks the header and returns `(tag, payload)`.
fn split_frame(bytes: &[u8]) -> Result<(u8, &[u8]), FrameError> {
    if bytes.len() < HEADER_LEN {
        return Err(FrameError::Truncated);
    }
    let declared = u32::from_be_bytes(bytes[..4].try_into().expect("4 bytes"));
    if (declared as usize) < HEADER_LEN || declared as usize - HEADER_LEN > MAX_PAYLOAD {
        return Err(FrameError::BadLength(declared));
    }
    let declared = declared as usize;
    if bytes.len() < declared {
        return Err(FrameError::Truncated);
    }
    if bytes.len() > declared {
        return Err(FrameError::TrailingGarbage(bytes.len() - declared));
    }
    let tag = bytes[4];
    if field_names(tag).is_none() {
        return Err(FrameError::UnknownTag(tag));
    }
    Ok((tag, &bytes[HEADER_LEN..]))
}

pub fn decode_frame(bytes: &[u8]) -> Result<ProtocolMessage, FrameError> {
    let (tag, payload) = split_frame(bytes)?;
    let mut r = FieldReader::new(payload);
    let msg = match tag {
        tag::REGISTRATION_REQUEST => {
            let id = read_identity(&mut r, "ID")?;
            let a_prime = r.uint("a'")?;
            let digits = u32::try_from(r.u64("c")?).map_err(|_| CodecError::InvalidField("c"))?;
            let m1 = r.uint("m1")?;
            let hpw = read_digest(&mut r, "hpw")?;
            ProtocolMessage::RegistrationRequest(RegistrationRequest { id, a_prime, digits, m1, hpw })
        }
        tag::REGISTRATION_RESPONSE => ProtocolMessage::RegistrationResponse(RegistrationResponse {
            server_id: read_identity(&mut r, "ID_s")?,
            pseudonym: read_nonce(&mut r, "M_i")?,
            ri: read_digest(&mut r, "R_i")?,
            r1: read_digest(&mut r, "R_1")?,
        }),
        tag::AUTH1 => ProtocolMessage::Auth1(AuthMsg1 {
            pseudonym: read_nonce(&mut r, "M_i")?,
            m1: read_digest(&mut r, "M1")?,
            m2: r.bytes()?.to_vec(),
            aid: r.fixed::<32>("AID")?,
            x: r.uint("x")?,
            modulus: r.uint("N")?,
        }),
        tag::AUTH2 => ProtocolMessage::Auth2(AuthMsg2 {
            server_id: read_identity(&mut r, "ID_s")?,
            m3: r.bytes()?.to_vec(),
            au_s: read_digest(&mut r, "AU_s")?,
        }),
        tag::AUTH3 => ProtocolMessage::Auth3(AuthMsg3 { au_i: read_digest(&mut r, "AU_i")? }),
        tag::YJ1 => {
            ProtocolMessage::Yj1(YjMsg1 { sender: read_identity(&mut r, "A")?, ciphertext: r.bytes()?.to_vec() })
        }
        tag::YJ2 => ProtocolMessage::Yj2(YjMsg2 { ciphertext: r.bytes()?.to_vec() }),
        tag::YJ3 => {
            ProtocolMessage::Yj3(YjMsg3 { ts_public: r.bytes()?.to_vec(), mac_b: read_digest(&mut r, "MAC_B")? })
        }
        tag::YJ4 => ProtocolMessage::Yj4(YjMsg4 { mac_a: read_digest(&mut r, "MAC_A")? }),
        tag::ABORT => {
            let reason = std::str::from_utf8(r.bytes()?).map_err(|_| CodecError::InvalidField("reason"))?;
            ProtocolMessage::Abort { reason: reason.to_owned() }
        }
        _ => unreachable!("split_frame rejects unknown tags"),
    };
    r.finish()?;
    Ok(msg)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldSpan {
    pub name: &'static str,
    /// Byte range of the field contents within the whole frame.
    pub range: Range<usize>,
}

/// Locates every field of a well-formed frame.
pub fn field_spans(frame: &[u8]) -> Result<Vec<FieldSpan>, FrameError> {
    decode_frame(frame)?;
    let names = field_names(frame[4]).expect("decoded tag is known");
    let mut spans = Vec::with_capacity(names.len());
    let mut pos = HEADER_LEN;
    for &name in names {
        let len = u32::from_be_bytes(frame[pos..pos + 4].try_into().expect("4 bytes")) as usize;
        spans.push(FieldSpan { name, range: pos + 4..pos + 4 + len });
        pos += 4 + len;
    }
    Ok(spans)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Party {
    User,
    Server,
    Trent,
}

impl Party {
    fn marker(self) -> char {
        match self {
            Party::User => 'U',
            Party::Server => 'S',
            Party::Trent => 'T',
        }
    }

    fn from_marker(c: char) -> Option<Self> {
        match c {
            'U' => Some(Party::User),
            'S' => Some(Party::Server),
            'T' => Some(Party::Trent),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Direction {
    pub from: Party,
    pub to: Party,
}

impl Direction {
    pub const USER_TO_SERVER: Direction = Direction { from: Party::User, to: Party::Server };
    pub const SERVER_TO_USER: Direction = Direction { from: Party::Server, to: Party::User };

    pub fn new(from: Party, to: Party) -> Self {
        Self { from, to }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}>{}", self.from.marker(), self.to.marker())
    }
}

impl FromStr for Direction {
    type Err = TranscriptParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || TranscriptParseError::Direction(s.to_owned());
        let mut chars = s.chars();
        let (Some(a), Some('>'), Some(b), None) = (chars.next(), chars.next(), chars.next(), chars.next()) else {
            return Err(bad());
        };
        Ok(Direction::new(Party::from_marker(a).ok_or_else(bad)?, Party::from_marker(b).ok_or_else(bad)?))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TranscriptEntry {
    pub index: u32,
    pub direction: Direction,
    /// Bytes as delivered to the recipient.
    pub frame: Vec<u8>,
}

impl TranscriptEntry {
    /// Tag byte, if the frame is long enough to have one.
    pub fn tag(&self) -> Option<u8> {
        self.frame.get(4).copied()
    }

    pub fn message(&self) -> Result<ProtocolMessage, FrameError> {
        decode_frame(&self.frame)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TranscriptParseError {
    #[error("line {0}: expected `index direction tag hex`")]
    Shape(usize),
    #[error("bad direction marker {0:?}")]
    Direction(String),
    #[error("line {0}: bad hex")]
    Hex(usize),
    #[error("line {0}: index is not strictly increasing")]
    Order(usize),
    #[error("line {0}: tag column disagrees with the frame")]
    Tag(usize),
}

/// Ordered record of every frame that crossed a channel.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Transcript {
    entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[TranscriptEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, direction: Direction, frame: Vec<u8>) {
        let index = self.entries.last().map_or(0, |e| e.index + 1);
        self.entries.push(TranscriptEntry { index, direction, frame });
    }

    /// First frame with the given tag.
    pub fn find(&self, tag: u8) -> Option<&TranscriptEntry> {
        self.entries.iter().find(|e| e.tag() == Some(tag))
    }

    /// Whether the last frame is an `Abort`.
    pub fn ends_with_abort(&self) -> bool {
        self.entries.last().and_then(TranscriptEntry::tag) == Some(tag::ABORT)
    }

    /// Encodes `msg`, sends it, records what arrived and decodes it on the
    /// receiving side. `None` means the delivered bytes did not parse.
    pub fn exchange(
        &mut self,
        channel: &mut dyn Channel,
        direction: Direction,
        msg: &ProtocolMessage,
    ) -> Result<Option<ProtocolMessage>, TransportError> {
        let frame = encode_frame(msg)?;
        let delivered = channel.deliver(direction, frame)?;
        let decoded = decode_frame(&delivered).ok();
        self.push(direction, delivered);
        Ok(decoded)
    }

    /// One line per frame: `index direction tag hex(frame)`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let tag = e.tag().map_or_else(|| "--".to_owned(), |t| format!("{t:02x}"));
            out.push_str(&format!("{} {} {} {}\n", e.index, e.direction, tag, hex::encode(&e.frame)));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, TranscriptParseError> {
        let mut entries: Vec<TranscriptEntry> = Vec::new();
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let lineno = n + 1;
            let cols: Vec<&str> = line.split_whitespace().collect();
            let [index, dir, tag, data] = cols[..] else {
                return Err(TranscriptParseError::Shape(lineno));
            };
            let index: u32 = index.parse().map_err(|_| TranscriptParseError::Shape(lineno))?;
            if entries.last().is_some_and(|e| e.index >= index) {
                return Err(TranscriptParseError::Order(lineno));
            }
            let frame = hex::decode(data).map_err(|_| TranscriptParseError::Hex(lineno))?;
            let expected = frame.get(4).map_or_else(|| "--".to_owned(), |t| format!("{t:02x}"));
            if expected != tag {
                return Err(TranscriptParseError::Tag(lineno));
            }
            entries.push(TranscriptEntry { index, direction: dir.parse()?, frame });
        }
        Ok(Self { entries })
    }
}

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("framing: {0}")]
    Frame(#[from] FrameError),
    #[error("connection closed")]
    Closed,
    #[error("{0} is not supported by this channel")]
    Unsupported(&'static str),
    #[error("local failure: {0}")]
    Local(String),
}

impl From<ProtocolError> for TransportError {
    fn from(e: ProtocolError) -> Self {
        TransportError::Local(e.to_string())
    }
}

/// Moves a frame from one party to another and returns what arrived.
pub trait Channel {
    fn deliver(&mut self, direction: Direction, frame: Vec<u8>) -> Result<Vec<u8>, TransportError>;
}

type Tamper = Box<dyn FnMut(usize, Direction, Vec<u8>) -> Vec<u8> + Send>;

/// In-memory channel. An optional interceptor sees each frame with its
/// zero-based position and may rewrite it.
#[derive(Default)]
pub struct Loopback {
    tamper: Option<Tamper>,
    delivered: usize,
}

impl Loopback {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_tamper(f: impl FnMut(usize, Direction, Vec<u8>) -> Vec<u8> + Send + 'static) -> Self {
        Self { tamper: Some(Box::new(f)), delivered: 0 }
    }
}

impl Channel for Loopback {
    fn deliver(&mut self, direction: Direction, frame: Vec<u8>) -> Result<Vec<u8>, TransportError> {
        let index = self.delivered;
        self.delivered += 1;
        Ok(match &mut self.tamper {
            Some(f) => f(index, direction, frame),
            None => frame,
        })
    }
}

impl fmt::Debug for Loopback {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Loopback")
            .field("tampered", &self.tamper.is_some())
            .field("delivered", &self.delivered)
            .finish()
    }
}

/// Length-prefixed frames over a byte stream.
#[derive(Debug)]
pub struct FramedStream<S> {
    inner: S,
}

impl<S: Read + Write> FramedStream<S> {
    pub fn new(inner: S) -> Self {
        Self { inner }
    }

    pub fn get_ref(&self) -> &S {
        &self.inner
    }

    pub fn write_frame(&mut self, frame: &[u8]) -> Result<(), TransportError> {
        self.inner.write_all(frame)?;
        self.inner.flush()?;
        Ok(())
    }

    pub fn send(&mut self, msg: &ProtocolMessage) -> Result<Vec<u8>, TransportError> {
        let frame = encode_frame(msg)?;
        self.write_frame(&frame)?;
        Ok(frame)
    }

    /// Next whole frame, or `None` on a clean end of stream.
    pub fn read_frame(&mut self) -> Result<Option<Vec<u8>>, TransportError> {
        let mut header = [0u8; 4];
        let mut filled = 0;
        while filled < 4 {
            match self.inner.read(&mut header[filled..]) {
                Ok(0) if filled == 0 => return Ok(None),
                Ok(0) => return Err(TransportError::Closed),
                Ok(n) => filled += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        let declared = u32::from_be_bytes(header) as usize;
        if declared < HEADER_LEN || declared - HEADER_LEN > MAX_PAYLOAD {
            return Err(FrameError::BadLength(declared as u32).into());
        }
        let mut frame = vec![0u8; declared];
        frame[..4].copy_from_slice(&header);
        self.inner.read_exact(&mut frame[4..]).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => TransportError::Closed,
            _ => e.into(),
        })?;
        Ok(Some(frame))
    }
}

/// Two ends of a loopback TCP connection, user side and server side.
#[derive(Debug)]
pub struct SocketChannel {
    user: FramedStream<TcpStream>,
    server: FramedStream<TcpStream>,
}

impl SocketChannel {
    pub fn pair() -> io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let user = TcpStream::connect(listener.local_addr()?)?;
        let (server, _) = listener.accept()?;
        user.set_nodelay(true)?;
        server.set_nodelay(true)?;
        Ok(Self { user: FramedStream::new(user), server: FramedStream::new(server) })
    }
}

impl Channel for SocketChannel {
    fn deliver(&mut self, direction: Direction, frame: Vec<u8>) -> Result<Vec<u8>, TransportError> {
        let (tx, rx) = match (direction.from, direction.to) {
            (Party::User, Party::Server) => (&mut self.user, &mut self.server),
            (Party::Server, Party::User) => (&mut self.server, &mut self.user),
            _ => return Err(TransportError::Unsupported("a third party")),
        };
        tx.write_frame(&frame)?;
        rx.read_frame()?.ok_or(TransportError::Closed)
    }
}

/// Both terminal sessions and the full transcript of one handshake.
#[derive(Debug)]
pub struct HandshakeOutcome {
    pub user: UserSession,
    pub server: ServerSession,
    pub transcript: Transcript,
}

impl HandshakeOutcome {
    /// Both sides established with the same key.
    pub fn agreed(&self) -> bool {
        matches!((self.user.session_key(), self.server.session_key()), (Ok(a), Ok(b)) if a == b)
    }

    pub fn both_established(&self) -> bool {
        self.user.session_key().is_ok() && self.server.session_key().is_ok()
    }
}

/// What a party makes of a frame it did not expect.
fn unexpected(got: &Option<ProtocolMessage>) -> AbortReason {
    match got {
        Some(ProtocolMessage::Abort { .. }) => AbortReason::PeerAborted,
        _ => AbortReason::Malformed,
    }
}

/// Sends an `Abort` and returns the reason the receiver records.
fn notify_abort(
    transcript: &mut Transcript,
    channel: &mut dyn Channel,
    direction: Direction,
    reason: AbortReason,
) -> Result<AbortReason, TransportError> {
    let got = transcript.exchange(channel, direction, &ProtocolMessage::abort(reason))?;
    Ok(match got {
        Some(ProtocolMessage::Abort { .. }) => AbortReason::PeerAborted,
        _ => AbortReason::Malformed,
    })
}

/// Splits session errors into abort reasons and local failures.
fn step<T>(r: Result<T, ProtocolError>) -> Result<Result<T, AbortReason>, TransportError> {
    match r {
        Ok(v) => Ok(Ok(v)),
        Err(e) => match e.abort_reason() {
            Some(reason) => Ok(Err(reason)),
            None => Err(e.into()),
        },
    }
}

/// Runs msg1, msg2, msg3 between fresh sessions over `channel`.
///
/// A party that detects a failure sends an `Abort` frame. Any session still
/// live when the exchange stops is aborted as `peer-aborted`, modelling a
/// closed connection.
pub fn run_handshake<R1, R2>(
    mut user: UserSession,
    password: &[u8],
    mut server: ServerSession,
    channel: &mut dyn Channel,
    user_rng: &mut R1,
    server_rng: &mut R2,
) -> Result<HandshakeOutcome, TransportError>
where
    R1: RngCore + CryptoRng + ?Sized,
    R2: RngCore + CryptoRng + ?Sized,
{
    let mut t = Transcript::new();
    drive(&mut user, password, &mut server, channel, user_rng, server_rng, &mut t)?;
    user.abort(AbortReason::PeerAborted);
    server.abort(AbortReason::PeerAborted);
    Ok(HandshakeOutcome { user, server, transcript: t })
}

fn drive<R1, R2>(
    user: &mut UserSession,
    password: &[u8],
    server: &mut ServerSession,
    channel: &mut dyn Channel,
    user_rng: &mut R1,
    server_rng: &mut R2,
    t: &mut Transcript,
) -> Result<(), TransportError>
where
    R1: RngCore + CryptoRng + ?Sized,
    R2: RngCore + CryptoRng + ?Sized,
{
    let m1 = user.start(password, user_rng)?;

    let got = t.exchange(channel, Direction::USER_TO_SERVER, &ProtocolMessage::Auth1(m1))?;
    let m2 = match &got {
        Some(ProtocolMessage::Auth1(m)) => step(server.respond(m, server_rng))?,
        other => Err(unexpected(other)),
    };
    let m2 = match m2 {
        Ok(m) => m,
        Err(reason) => {
            server.abort(reason);
            if reason != AbortReason::PeerAborted {
                let r = notify_abort(t, channel, Direction::SERVER_TO_USER, reason)?;
                user.abort(r);
            }
            return Ok(());
        }
    };

    let got = t.exchange(channel, Direction::SERVER_TO_USER, &ProtocolMessage::Auth2(m2))?;
    let m3 = match &got {
        Some(ProtocolMessage::Auth2(m)) => step(user.finish(m))?,
        other => Err(unexpected(other)),
    };
    let m3 = match m3 {
        Ok(m) => m,
        Err(reason) => {
            user.abort(reason);
            if reason != AbortReason::PeerAborted {
                let r = notify_abort(t, channel, Direction::USER_TO_SERVER, reason)?;
                server.abort(r);
            }
            return Ok(());
        }
    };

    let got = t.exchange(channel, Direction::USER_TO_SERVER, &ProtocolMessage::Auth3(m3))?;
    let verdict = match &got {
        Some(ProtocolMessage::Auth3(m)) => step(server.verify(m))?,
        other => Err(unexpected(other)),
    };
    if let Err(reason) = verdict {
        server.abort(reason);
        if reason != AbortReason::PeerAborted {
            // The user is already established; the frame only informs it.
            notify_abort(t, channel, Direction::SERVER_TO_USER, reason)?;
        }
    }
    Ok(())
}

/// Reason text a server sends when refusing a registration.
pub const ALREADY_REGISTERED: &str = "already-registered";
pub const INVALID_REGISTRATION: &str = "invalid-registration";

/// Result of serving one connection.
#[derive(Debug)]
pub enum ServeOutcome {
    Registered(Identity),
    RegistrationRefused(String),
    Session(Box<ServerSession>),
    /// Peer closed or sent something other than a request.
    Closed,
}

/// Serves one request (a registration or a handshake) on `stream`.
pub fn serve_connection<S, R>(stream: S, endpoint: &ServerEndpoint, rng: &mut R) -> Result<ServeOutcome, TransportError>
where
    S: Read + Write,
    R: RngCore + CryptoRng + ?Sized,
{
    let mut io = FramedStream::new(stream);
    let Some(frame) = io.read_frame()? else {
        return Ok(ServeOutcome::Closed);
    };
    match decode_frame(&frame) {
        Ok(ProtocolMessage::RegistrationRequest(req)) => match endpoint.register(&req, rng) {
            Ok(resp) => {
                io.send(&ProtocolMessage::RegistrationResponse(resp))?;
                Ok(ServeOutcome::Registered(req.id))
            }
            Err(ProtocolError::AlreadyRegistered(id)) => {
                io.send(&ProtocolMessage::Abort { reason: ALREADY_REGISTERED.into() })?;
                Ok(ServeOutcome::RegistrationRefused(format!("identity {id} is already registered")))
            }
            Err(ProtocolError::InvalidRegistration(why)) => {
                io.send(&ProtocolMessage::Abort { reason: INVALID_REGISTRATION.into() })?;
                Ok(ServeOutcome::RegistrationRefused(why))
            }
            Err(e) => Err(e.into()),
        },
        Ok(ProtocolMessage::Auth1(m1)) => {
            let mut session = endpoint.session();
            let m2 = match step(session.respond(&m1, rng))? {
                Ok(m2) => m2,
                Err(reason) => {
                    io.send(&ProtocolMessage::abort(reason))?;
                    return Ok(ServeOutcome::Session(Box::new(session)));
                }
            };
            io.send(&ProtocolMessage::Auth2(m2))?;
            let reply = io.read_frame()?.map(|f| decode_frame(&f).ok());
            let verdict = match &reply {
                Some(Some(ProtocolMessage::Auth3(m3))) => step(session.verify(m3))?,
                Some(other) => Err(unexpected(other)),
                None => Err(AbortReason::PeerAborted),
            };
            if let Err(reason) = verdict {
                session.abort(reason);
                if reason != AbortReason::PeerAborted {
                    io.send(&ProtocolMessage::abort(reason))?;
                }
            }
            Ok(ServeOutcome::Session(Box::new(session)))
        }
        Ok(_) => Ok(ServeOutcome::Closed),
        Err(_) => {
            io.send(&ProtocolMessage::abort(AbortReason::Malformed))?;
            Ok(ServeOutcome::Closed)
        }
    }
}

/// Sends a registration request; `Err(reason)` carries a server refusal.
pub fn client_register<S: Read + Write>(
    stream: S,
    req: &RegistrationRequest,
) -> Result<Result<RegistrationResponse, String>, TransportError> {
    let mut io = FramedStream::new(stream);
    io.send(&ProtocolMessage::RegistrationRequest(req.clone()))?;
    let frame = io.read_frame()?.ok_or(TransportError::Closed)?;
    match decode_frame(&frame)? {
        ProtocolMessage::RegistrationResponse(resp) => Ok(Ok(resp)),
        ProtocolMessage::Abort { reason } => Ok(Err(reason)),
        _ => Err(TransportError::Local("unexpected reply to a registration request".into())),
    }
}

/// User side of a handshake over a stream. The transcript holds every frame
/// sent or received, in order.
pub fn client_handshake<S, R>(
    stream: S,
    mut user: UserSession,
    password: &[u8],
    rng: &mut R,
) -> Result<(UserSession, Transcript), TransportError>
where
    S: Read + Write,
    R: RngCore + CryptoRng + ?Sized,
{
    let mut io = FramedStream::new(stream);
    let mut t = Transcript::new();
    let m1 = user.start(password, rng)?;
    t.push(Direction::USER_TO_SERVER, io.send(&ProtocolMessage::Auth1(m1))?);

    let Some(frame) = io.read_frame()? else {
        user.abort(AbortReason::PeerAborted);
        return Ok((user, t));
    };
    let got = decode_frame(&frame).ok();
    t.push(Direction::SERVER_TO_USER, frame);
    let m3 = match &got {
        Some(ProtocolMessage::Auth2(m2)) => step(user.finish(m2))?,
        other => Err(unexpected(other)),
    };
    match m3 {
        Ok(m3) => t.push(Direction::USER_TO_SERVER, io.send(&ProtocolMessage::Auth3(m3))?),
        Err(reason) => {
            user.abort(reason);
            if reason != AbortReason::PeerAborted {
                t.push(Direction::USER_TO_SERVER, io.send(&ProtocolMessage::abort(reason))?);
            }
            return Ok((user, t));
        }
    }
    // The server either closes quietly or reports a failed AU_i check.
    if let Some(frame) = io.read_frame()? {
        t.push(Direction::SERVER_TO_USER, frame);
    }
    Ok((user, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{register_user_begin, MemoryStore, Phase, ProtocolConfig, UserCredentials};
    use num_bigint::BigUint;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use std::sync::Arc;

    const PASSWORD: &[u8] = b"pw";

    fn id(s: &str) -> Identity {
        Identity::new(s).unwrap()
    }

    fn config() -> ProtocolConfig {
        ProtocolConfig::default().with_prime_bits(64)
    }

    fn setup(seed: u64) -> (ServerEndpoint, UserCredentials) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let server = ServerEndpoint::new(Arc::new(MemoryStore::new()), id("server"), config());
        let (req, pending) = register_user_begin(id("alice"), PASSWORD, &config(), &mut rng).unwrap();
        let resp = server.register(&req, &mut rng).unwrap();
        (server, pending.finish(resp))
    }

    fn handshake(seed: u64, channel: &mut dyn Channel) -> HandshakeOutcome {
        let (server, creds) = setup(seed);
        let mut urng = ChaCha20Rng::seed_from_u64(seed + 1000);
        let mut srng = ChaCha20Rng::seed_from_u64(seed + 2000);
        run_handshake(UserSession::new(creds, config()), PASSWORD, server.session(), channel, &mut urng, &mut srng)
            .unwrap()
    }

    #[test]
    fn documented_frame_sizes() {
        let m3 = encode_frame(&ProtocolMessage::Auth3(AuthMsg3 { au_i: Digest([0; 32]) })).unwrap();
        assert_eq!(m3.len(), 41);
        assert_eq!(hex::encode(&m3[..9]), "000000291300000020");
        let abort = encode_frame(&ProtocolMessage::Abort { reason: String::new() }).unwrap();
        assert_eq!(hex::encode(abort), "000000097f00000000");
    }

    #[test]
    fn frame_errors_are_distinct() {
        let good = encode_frame(&ProtocolMessage::Auth3(AuthMsg3 { au_i: Digest([9; 32]) })).unwrap();
        assert_eq!(decode_frame(&good[..3]), Err(FrameError::Truncated));
        assert_eq!(decode_frame(&good[..40]), Err(FrameError::Truncated));
        let mut extra = good.clone();
        extra.push(0);
        assert_eq!(decode_frame(&extra), Err(FrameError::TrailingGarbage(1)));
        let mut unknown = good.clone();
        unknown[4] = 0xEE;
        assert_eq!(decode_frame(&unknown), Err(FrameError::UnknownTag(0xEE)));
        let mut overflow = good.clone();
        overflow[8] = 0x21;
        assert_eq!(decode_frame(&overflow), Err(FrameError::FieldLengthOverflow(0x21)));
        let mut short = good.clone();
        short[8] = 0x1f;
        assert_eq!(
            decode_frame(&short),
            Err(FrameError::Field(CodecError::WrongLength { field: "AU_i", expected: 32, got: 31 }))
        );
        assert_eq!(decode_frame(&[0, 0, 0, 4, 0x13]), Err(FrameError::BadLength(4)));
        assert_eq!(decode_frame(&[0xff, 0, 0, 0, 0x13]), Err(FrameError::BadLength(0xff00_0000)));
    }

    #[test]
    fn non_canonical_integers_rejected() {
        let msg = ProtocolMessage::RegistrationRequest(RegistrationRequest {
            id: id("a"),
            a_prime: BigUint::from(5u8),
            digits: 3,
            m1: BigUint::from(7u8),
            hpw: Digest([1; 32]),
        });
        let frame = encode_frame(&msg).unwrap();
        let spans = field_spans(&frame).unwrap();
        let a = &spans[1];
        let mut padded = frame[..a.range.start - 4].to_vec();
        padded.extend_from_slice(&2u32.to_be_bytes());
        padded.extend_from_slice(&[0, 5]);
        padded.extend_from_slice(&frame[a.range.end..]);
        let total = padded.len() as u32;
        padded[..4].copy_from_slice(&total.to_be_bytes());
        assert!(matches!(decode_frame(&padded), Err(FrameError::Field(CodecError::NonCanonicalInteger("a'")))));
    }

    #[test]
    fn spans_cover_every_field() {
        let out = handshake(1, &mut Loopback::new());
        for e in out.transcript.entries() {
            let spans = field_spans(&e.frame).unwrap();
            assert_eq!(spans.len(), field_names(e.tag().unwrap()).unwrap().len());
            assert_eq!(spans.last().unwrap().range.end, e.frame.len());
        }
        let m1 = out.transcript.find(tag::AUTH1).unwrap();
        let spans = field_spans(&m1.frame).unwrap();
        assert_eq!(spans[0].name, "M_i");
        assert_eq!(spans[0].range.len(), 16);
        assert_eq!(spans[3].range.len(), 32);
    }

    #[test]
    fn loopback_honest_run() {
        let out = handshake(2, &mut Loopback::new());
        assert!(out.agreed());
        let tags: Vec<_> = out.transcript.entries().iter().map(|e| e.tag().unwrap()).collect();
        assert_eq!(tags, [tag::AUTH1, tag::AUTH2, tag::AUTH3]);
        assert_eq!(
            out.transcript.entries().iter().map(|e| e.direction).collect::<Vec<_>>(),
            [Direction::USER_TO_SERVER, Direction::SERVER_TO_USER, Direction::USER_TO_SERVER]
        );
    }

    #[test]
    fn socket_and_loopback_transcripts_match() {
        let a = handshake(3, &mut Loopback::new());
        let b = handshake(3, &mut SocketChannel::pair().unwrap());
        assert_eq!(a.transcript, b.transcript);
        assert_eq!(a.user.session_key().unwrap(), b.server.session_key().unwrap());
    }

    #[test]
    fn tampered_msg2_ends_with_abort() {
        let mut ch = Loopback::with_tamper(|i, _, mut f| {
            if i == 1 {
                let n = f.len();
                f[n - 1] ^= 1;
            }
            f
        });
        let out = handshake(4, &mut ch);
        assert!(out.transcript.ends_with_abort());
        assert!(!out.both_established());
        assert_eq!(out.user.phase(), Phase::Aborted(AbortReason::ServerAuthFailed));
        assert_eq!(out.server.phase(), Phase::Aborted(AbortReason::PeerAborted));
        assert_eq!(
            out.transcript.entries().last().unwrap().message().unwrap(),
            ProtocolMessage::abort(AbortReason::ServerAuthFailed)
        );
    }

    #[test]
    fn garbled_frame_is_malformed() {
        let mut ch = Loopback::with_tamper(|i, _, mut f| {
            if i == 0 {
                f[4] = 0xEE;
            }
            f
        });
        let out = handshake(5, &mut ch);
        assert_eq!(out.server.phase(), Phase::Aborted(AbortReason::Malformed));
        assert_eq!(out.user.phase(), Phase::Aborted(AbortReason::PeerAborted));
    }

    #[test]
    fn tampered_msg3_leaves_only_user_established() {
        let mut ch = Loopback::with_tamper(|i, _, mut f| {
            if i == 2 {
                f[20] ^= 0x80;
            }
            f
        });
        let out = handshake(6, &mut ch);
        assert_eq!(out.user.phase(), Phase::Established);
        assert_eq!(out.server.phase(), Phase::Aborted(AbortReason::UserAuthFailed));
        assert!(out.transcript.ends_with_abort());
    }

    #[test]
    fn transcript_dump_round_trips() {
        let out = handshake(7, &mut Loopback::new());
        let text = out.transcript.dump();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().next().unwrap().starts_with("0 U>S 11 "));
        assert_eq!(Transcript::parse(&text).unwrap(), out.transcript);
        assert_eq!(Transcript::parse("0 U>S 13 zz"), Err(TranscriptParseError::Hex(1)));
        assert_eq!(
            Transcript::parse("1 U>S 7f 000000097f00000000\n1 S>U 7f 000000097f00000000"),
            Err(TranscriptParseError::Order(2))
        );
        assert!(Transcript::parse("0 X>S 7f 000000097f00000000").is_err());
        assert_eq!(Transcript::parse("0 U>S 13 000000097f00000000"), Err(TranscriptParseError::Tag(1)));
    }

    #[test]
    fn served_registration_and_handshake_over_tcp() {
        let endpoint = ServerEndpoint::new(Arc::new(MemoryStore::new()), id("server"), config());
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let ep = endpoint.clone();
        let server = std::thread::spawn(move || {
            let mut rng = ChaCha20Rng::seed_from_u64(77);
            (0..3).map(|_| serve_connection(listener.accept().unwrap().0, &ep, &mut rng).unwrap()).collect::<Vec<_>>()
        });

        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let (req, pending) = register_user_begin(id("alice"), PASSWORD, &config(), &mut rng).unwrap();
        let resp = client_register(TcpStream::connect(addr).unwrap(), &req).unwrap().unwrap();
        let refused = client_register(TcpStream::connect(addr).unwrap(), &req).unwrap();
        assert_eq!(refused, Err(ALREADY_REGISTERED.to_owned()));

        let user = UserSession::new(pending.finish(resp), config());
        let (user, t) = client_handshake(TcpStream::connect(addr).unwrap(), user, PASSWORD, &mut rng).unwrap();
        assert_eq!(t.len(), 3);

        let outcomes = server.join().unwrap();
        assert!(matches!(outcomes[0], ServeOutcome::Registered(_)));
        assert!(matches!(outcomes[1], ServeOutcome::RegistrationRefused(_)));
        let ServeOutcome::Session(session) = &outcomes[2] else { panic!("expected a session") };
        assert_eq!(session.session_key().unwrap(), user.session_key().unwrap());
    }

    fn arb_identity() -> impl Strategy<Value = Identity> {
        proptest::collection::vec(any::<u8>(), 1..=31).prop_map(|v| Identity::new(v).unwrap())
    }

    fn arb_digest() -> impl Strategy<Value = Digest> {
        any::<[u8; 32]>().prop_map(Digest)
    }

    fn arb_uint() -> impl Strategy<Value = BigUint> {
        proptest::collection::vec(any::<u8>(), 0..40).prop_map(|v| BigUint::from_bytes_be(&v))
    }

    fn arb_bytes() -> impl Strategy<Value = Vec<u8>> {
        proptest::collection::vec(any::<u8>(), 0..80)
    }

    pub(crate) fn arb_message() -> impl Strategy<Value = ProtocolMessage> {
        prop_oneof![
            (arb_identity(), arb_uint(), any::<u32>(), arb_uint(), arb_digest()).prop_map(
                |(id, a_prime, digits, m1, hpw)| {
                    ProtocolMessage::RegistrationRequest(RegistrationRequest { id, a_prime, digits, m1, hpw })
                }
            ),
            (arb_identity(), any::<[u8; 16]>(), arb_digest(), arb_digest()).prop_map(|(server_id, p, ri, r1)| {
                ProtocolMessage::RegistrationResponse(RegistrationResponse { server_id, pseudonym: Nonce(p), ri, r1 })
            }),
            (any::<[u8; 16]>(), arb_digest(), arb_bytes(), any::<[u8; 32]>(), arb_uint(), arb_uint()).prop_map(
                |(p, m1, m2, aid, x, modulus)| ProtocolMessage::Auth1(AuthMsg1 {
                    pseudonym: Nonce(p),
                    m1,
                    m2,
                    aid,
                    x,
                    modulus
                })
            ),
            (arb_identity(), arb_bytes(), arb_digest())
                .prop_map(|(server_id, m3, au_s)| ProtocolMessage::Auth2(AuthMsg2 { server_id, m3, au_s })),
            arb_digest().prop_map(|au_i| ProtocolMessage::Auth3(AuthMsg3 { au_i })),
            (arb_identity(), arb_bytes())
                .prop_map(|(sender, ciphertext)| ProtocolMessage::Yj1(YjMsg1 { sender, ciphertext })),
            arb_bytes().prop_map(|ciphertext| ProtocolMessage::Yj2(YjMsg2 { ciphertext })),
            (arb_bytes(), arb_digest())
                .prop_map(|(ts_public, mac_b)| ProtocolMessage::Yj3(YjMsg3 { ts_public, mac_b })),
            arb_digest().prop_map(|mac_a| ProtocolMessage::Yj4(YjMsg4 { mac_a })),
            "[a-z-]{0,24}".prop_map(|reason| ProtocolMessage::Abort { reason }),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn round_trip(msg in arb_message()) {
            let frame = encode_frame(&msg).unwrap();
            prop_assert_eq!(decode_frame(&frame).unwrap(), msg);
        }

        #[test]
        fn injective(a in arb_message(), b in arb_message()) {
            if a != b {
                prop_assert_ne!(encode_frame(&a).unwrap(), encode_frame(&b).unwrap());
            }
        }

        #[test]
        fn random_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..128)) {
            let _ = decode_frame(&bytes);
        }
    }
}
