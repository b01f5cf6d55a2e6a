//! Long-term credentials on both sides and their persistence.
//!
//! Files start with a 4-byte magic and a version byte, followed by records,
//! each a 4-byte big-endian length and the record's length-prefixed fields.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use thiserror::Error;

use crate::codec::{CodecError, FieldReader, FieldWriter};
use crate::primitives::{Digest, Identity, Nonce};

const STORE_MAGIC: &[u8; 4] = b"CKST";
const CREDENTIAL_MAGIC: &[u8; 4] = b"CKCR";
const FORMAT_VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("file does not start with the expected magic")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),
    #[error("corrupt record: {0}")]
    Corrupt(#[from] CodecError),
    #[error("identity already registered")]
    DuplicateIdentity,
    #[error("pseudonym already assigned")]
    DuplicatePseudonym,
}

/// What the server keeps per registered user, keyed by pseudonym.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ServerRecord {
    pub id: Identity,
    pub pseudonym: Nonce,
    pub ri: Digest,
    pub r1: Digest,
    /// `H(X)` for this user's CRT solution.
    pub hx: Digest,
}

impl ServerRecord {
    fn encode(&self) -> Vec<u8> {
        FieldWriter::new()
            .bytes(&self.id.padded())
            .bytes(self.pseudonym.as_bytes())
            .bytes(self.ri.as_bytes())
            .bytes(self.r1.as_bytes())
            .bytes(self.hx.as_bytes())
            .finish()
    }

    fn decode(bytes: &[u8]) -> Result<Self, StoreError> {
        let mut r = FieldReader::new(bytes);
        let id = Identity::from_padded(r.bytes()?).map_err(|_| CodecError::InvalidField("id"))?;
        let record = ServerRecord {
            id,
            pseudonym: Nonce(r.fixed("pseudonym")?),
            ri: Digest(r.fixed("ri")?),
            r1: Digest(r.fixed("r1")?),
            hx: Digest(r.fixed("hx")?),
        };
        r.finish()?;
        Ok(record)
    }
}

/// What the user keeps after registration. The password is not stored;
/// `n_s` is, so `h_pw` can be recomputed from a typed password.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UserCredentials {
    pub id: Identity,
    pub server_id: Identity,
    pub pseudonym: Nonce,
    pub ri: Digest,
    pub r1: Digest,
    pub ns: Nonce,
}

impl UserCredentials {
    pub fn to_bytes(&self) -> Vec<u8> {
        let body = FieldWriter::new()
            .bytes(&self.id.padded())
            .bytes(&self.server_id.padded())
            .bytes(self.pseudonym.as_bytes())
            .bytes(self.ri.as_bytes())
            .bytes(self.r1.as_bytes())
            .bytes(self.ns.as_bytes())
            .finish();
        let mut out = header(CREDENTIAL_MAGIC);
        out.extend_from_slice(&(body.len() as u32).to_be_bytes());
        out.extend_from_slice(&body);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, StoreError> {
        let rest = check_header(bytes, CREDENTIAL_MAGIC)?;
        let mut outer = FieldReader::new(rest);
        let body = outer.bytes()?;
        outer.finish()?;
        let mut r = FieldReader::new(body);
        let id = Identity::from_padded(r.bytes()?).map_err(|_| CodecError::InvalidField("id"))?;
        let server_id = Identity::from_padded(r.bytes()?).map_err(|_| CodecError::InvalidField("server_id"))?;
        let creds = UserCredentials {
            id,
            server_id,
            pseudonym: Nonce(r.fixed("pseudonym")?),
            ri: Digest(r.fixed("ri")?),
            r1: Digest(r.fixed("r1")?),
            ns: Nonce(r.fixed("ns")?),
        };
        r.finish()?;
        Ok(creds)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), StoreError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn header(magic: &[u8; 4]) -> Vec<u8> {
    let mut out = magic.to_vec();
    out.push(FORMAT_VERSION);
    out
}

fn check_header<'a>(bytes: &'a [u8], magic: &[u8; 4]) -> Result<&'a [u8], StoreError> {
    if bytes.len() < 5 || &bytes[..4] != magic {
        return Err(StoreError::BadMagic);
    }
    if bytes[4] != FORMAT_VERSION {
        return Err(StoreError::UnsupportedVersion(bytes[4]));
    }
    Ok(&bytes[5..])
}

/// Server-side credential database keyed by pseudonym.
///
/// Implementations allow concurrent lookups; `insert` is exclusive and
/// atomic with respect to the uniqueness checks.
pub trait CredentialStore: Send + Sync {
    fn lookup(&self, pseudonym: &Nonce) -> Result<Option<ServerRecord>, StoreError>;

    fn contains_identity(&self, id: &Identity) -> Result<bool, StoreError>;

    /// Fails with `DuplicateIdentity` or `DuplicatePseudonym` without
    /// modifying the store.
    fn insert(&self, record: ServerRecord) -> Result<(), StoreError>;

    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Default, Debug)]
struct Index {
    by_pseudonym: HashMap<Nonce, ServerRecord>,
    by_identity: HashMap<Identity, Nonce>,
}

impl Index {
    fn check(&self, record: &ServerRecord) -> Result<(), StoreError> {
        if self.by_identity.contains_key(&record.id) {
            return Err(StoreError::DuplicateIdentity);
        }
        if self.by_pseudonym.contains_key(&record.pseudonym) {
            return Err(StoreError::DuplicatePseudonym);
        }
        Ok(())
    }

    fn add(&mut self, record: ServerRecord) {
        self.by_identity.insert(record.id.clone(), record.pseudonym);
        self.by_pseudonym.insert(record.pseudonym, record);
    }
}

#[derive(Default, Debug)]
pub struct MemoryStore {
    index: RwLock<Index>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl CredentialStore for MemoryStore {
    fn lookup(&self, pseudonym: &Nonce) -> Result<Option<ServerRecord>, StoreError> {
        Ok(self.index.read().expect("store lock").by_pseudonym.get(pseudonym).cloned())
    }

    fn contains_identity(&self, id: &Identity) -> Result<bool, StoreError> {
        Ok(self.index.read().expect("store lock").by_identity.contains_key(id))
    }

    fn insert(&self, record: ServerRecord) -> Result<(), StoreError> {
        let mut index = self.index.write().expect("store lock");
        index.check(&record)?;
        index.add(record);
        Ok(())
    }

    fn len(&self) -> usize {
        self.index.read().expect("store lock").by_pseudonym.len()
    }
}

/// Append-only record log on disk with an in-memory index.
#[derive(Debug)]
pub struct FileStore {
    path: PathBuf,
    index: RwLock<Index>,
    file: Mutex<File>,
}

impl FileStore {
    /// Opens the log at `path`, creating it when absent.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(&path)?;
        let mut contents = Vec::new();
        file.read_to_end(&mut contents)?;
        let mut index = Index::default();
        if contents.is_empty() {
            file.write_all(&header(STORE_MAGIC))?;
            file.sync_data()?;
        } else {
            let mut r = FieldReader::new(check_header(&contents, STORE_MAGIC)?);
            while !r.is_empty() {
                let record = ServerRecord::decode(r.bytes()?)?;
                index.check(&record)?;
                index.add(record);
            }
        }
        Ok(Self { path, index: RwLock::new(index), file: Mutex::new(file) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl CredentialStore for FileStore {
    fn lookup(&self, pseudonym: &Nonce) -> Result<Option<ServerRecord>, StoreError> {
        Ok(self.index.read().expect("store lock").by_pseudonym.get(pseudonym).cloned())
    }

    fn contains_identity(&self, id: &Identity) -> Result<bool, StoreError> {
        Ok(self.index.read().expect("store lock").by_identity.contains_key(id))
    }

    fn insert(&self, record: ServerRecord) -> Result<(), StoreError> {
        let mut index = self.index.write().expect("store lock");
        index.check(&record)?;
        let entry = FieldWriter::new().bytes(&record.encode()).finish();
        let mut file = self.file.lock().expect("store file lock");
        file.write_all(&entry)?;
        file.sync_data()?;
        index.add(record);
        Ok(())
    }

    fn len(&self) -> usize {
        self.index.read().expect("store lock").by_pseudonym.len()
    }
}
