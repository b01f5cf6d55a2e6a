//! Per-session operation counters.
//!
//! A session owns its [`OpCensus`] and records every hash, XOR, Chebyshev
//! evaluation and symmetric cipher call at the call site. Hash calls carry a
//! site label so they can be split into the operations the cost model
//! counts and the extra derivations this implementation performs.

use std::collections::BTreeMap;
use std::fmt;

use crate::costmodel::CostExpr;

/// Where a hash invocation came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum HashSite {
    /// `H(k)`, the per-session mask for `M1` and `AID`.
    SessionMask,
    /// `H(ID_i, h_pw)`, used by the user to unmask `H(X)`.
    IdentityPassword,
    /// `AU_s` on either side.
    ServerAuth,
    /// `AU_i` on either side.
    UserAuth,
    /// Baseline keyed MAC `H_k(.)`.
    KeyedMac,
    /// `h_pw = H(pw, n_s)` recomputed from the typed password.
    PasswordDigest,
    /// One block of mask expansion for element-length XOR.
    MaskBlock,
    /// Final session-key derivation from the shared element.
    SessionKey,
    /// Keystream or tag block inside the baseline cipher.
    CipherBlock,
}

impl HashSite {
    /// Whether the cost model's `T_H` column counts this call.
    pub fn counted_by_model(&self) -> bool {
        matches!(
            self,
            HashSite::SessionMask
                | HashSite::IdentityPassword
                | HashSite::ServerAuth
                | HashSite::UserAuth
                | HashSite::KeyedMac
        )
    }

    pub fn label(&self) -> &'static str {
        match self {
            HashSite::SessionMask => "H(k)",
            HashSite::IdentityPassword => "H(ID,hpw)",
            HashSite::ServerAuth => "AUs",
            HashSite::UserAuth => "AUi",
            HashSite::KeyedMac => "H_k",
            HashSite::PasswordDigest => "hpw",
            HashSite::MaskBlock => "mask-block",
            HashSite::SessionKey => "sk-kdf",
            HashSite::CipherBlock => "cipher-block",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OpCensus {
    hashes: BTreeMap<HashSite, u32>,
    xors: u32,
    chebyshev: u32,
    encryptions: u32,
    decryptions: u32,
}

impl OpCensus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn hash(&mut self, site: HashSite) {
        self.hash_n(site, 1);
    }

    pub fn hash_n(&mut self, site: HashSite, n: u32) {
        if n > 0 {
            *self.hashes.entry(site).or_default() += n;
        }
    }

    /// Records a mask expansion of `len` bytes.
    pub fn mask(&mut self, len: usize) {
        self.hash_n(HashSite::MaskBlock, len.div_ceil(32) as u32);
    }

    pub fn xor(&mut self) {
        self.xors += 1;
    }

    pub fn chebyshev(&mut self) {
        self.chebyshev += 1;
    }

    pub fn encryption(&mut self) {
        self.encryptions += 1;
    }

    pub fn decryption(&mut self) {
        self.decryptions += 1;
    }

    pub fn hashes_at(&self, site: HashSite) -> u32 {
        self.hashes.get(&site).copied().unwrap_or(0)
    }

    pub fn total_hashes(&self) -> u32 {
        self.hashes.values().sum()
    }

    pub fn xors(&self) -> u32 {
        self.xors
    }

    pub fn chebyshev_evals(&self) -> u32 {
        self.chebyshev
    }

    pub fn encryptions(&self) -> u32 {
        self.encryptions
    }

    pub fn decryptions(&self) -> u32 {
        self.decryptions
    }

    /// Counts in the cost model's vocabulary; overhead hashes are excluded.
    pub fn cost_expr(&self) -> CostExpr {
        let counted = self.hashes.iter().filter(|(site, _)| site.counted_by_model()).map(|(_, n)| n).sum();
        CostExpr {
            hash: counted,
            xor: self.xors,
            encrypt: self.encryptions,
            decrypt: self.decryptions,
            chebyshev: self.chebyshev,
        }
    }

    /// Hash calls outside the cost model, per site.
    pub fn overhead(&self) -> Vec<(HashSite, u32)> {
        self.hashes.iter().filter(|(site, _)| !site.counted_by_model()).map(|(s, n)| (*s, *n)).collect()
    }

    pub fn merge(&mut self, other: &OpCensus) {
        for (site, n) in &other.hashes {
            self.hash_n(*site, *n);
        }
        self.xors += other.xors;
        self.chebyshev += other.chebyshev;
        self.encryptions += other.encryptions;
        self.decryptions += other.decryptions;
    }
}

impl fmt::Display for OpCensus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.cost_expr())?;
        let overhead = self.overhead();
        if !overhead.is_empty() {
            let items: Vec<String> = overhead.iter().map(|(s, n)| format!("{}x{}", n, s.label())).collect();
            write!(f, " (+ overhead: {})", items.join(", "))?;
        }
        Ok(())
    }
}
