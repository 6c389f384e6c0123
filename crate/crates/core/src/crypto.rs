//! Signature schemes, the random oracle and PoW grinding.
//!
//! Both providers share the SHA-256 random oracle, so digests, leader
//! positions and PoW outcomes are identical across them. Only signature
//! bytes differ.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::encoding::{Encode, Encoder};
use crate::types::{Digest, PublicKey, Puzzle, Signature};

/// The random oracle `H`.
pub fn oracle(data: &[u8]) -> Digest {
    Digest(Sha256::digest(data).into())
}

/// Oracle over several byte strings, each length-prefixed.
pub fn oracle_parts(domain: &[u8], parts: &[&[u8]]) -> Digest {
    let mut enc = Encoder::with_domain(domain);
    for p in parts {
        enc.bytes(p);
    }
    oracle(&enc.finish())
}

#[derive(Clone)]
pub struct Keypair {
    secret: [u8; 32],
    public: PublicKey,
}

impl Keypair {
    pub fn public(&self) -> PublicKey {
        self.public
    }

    pub fn secret_bytes(&self) -> &[u8; 32] {
        &self.secret
    }
}

impl fmt::Debug for Keypair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Keypair")
            .field("public", &self.public)
            .finish_non_exhaustive()
    }
}

pub trait CryptoProvider: Send + Sync + fmt::Debug {
    fn kind(&self) -> CryptoKind;

    /// Deterministic key derivation; the simulator derives every key from the
    /// scenario seed.
    fn keypair_from_seed(&self, seed: &[u8]) -> Keypair;

    fn sign(&self, key: &Keypair, msg: &[u8]) -> Signature;

    fn verify(&self, pk: &PublicKey, msg: &[u8], sig: &Signature) -> bool;

    fn oracle(&self, data: &[u8]) -> Digest {
        oracle(data)
    }
}

/// Hash-tag signatures. `sig = H(pk || msg)` is checkable by anyone and is
/// therefore forgeable in principle; unforgeability is a contract enforced by
/// the simulator, which only lets a strategy sign with keys it owns.
#[derive(Debug, Default, Clone, Copy)]
pub struct SimCrypto;

impl SimCrypto {
    fn tag(pk: &PublicKey, msg: &[u8]) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"solida/sim/sig");
        h.update(pk.0);
        h.update(msg);
        h.finalize().into()
    }
}

impl CryptoProvider for SimCrypto {
    fn kind(&self) -> CryptoKind {
        CryptoKind::Sim
    }

    fn keypair_from_seed(&self, seed: &[u8]) -> Keypair {
        let secret = oracle_parts(b"solida/sim/sk", &[seed]).0;
        let public = PublicKey(oracle_parts(b"solida/sim/pk", &[&secret]).0);
        Keypair { secret, public }
    }

    fn sign(&self, key: &Keypair, msg: &[u8]) -> Signature {
        Signature(Self::tag(&key.public, msg).to_vec())
    }

    fn verify(&self, pk: &PublicKey, msg: &[u8], sig: &Signature) -> bool {
        sig.0.as_slice() == Self::tag(pk, msg)
    }
}

/// Ed25519 signatures.
#[derive(Debug, Default, Clone, Copy)]
pub struct RealCrypto;

impl CryptoProvider for RealCrypto {
    fn kind(&self) -> CryptoKind {
        CryptoKind::Real
    }

    fn keypair_from_seed(&self, seed: &[u8]) -> Keypair {
        let secret = oracle_parts(b"solida/ed25519/sk", &[seed]).0;
        let sk = SigningKey::from_bytes(&secret);
        Keypair {
            secret,
            public: PublicKey(sk.verifying_key().to_bytes()),
        }
    }

    fn sign(&self, key: &Keypair, msg: &[u8]) -> Signature {
        let sk = SigningKey::from_bytes(&key.secret);
        Signature(sk.sign(msg).to_bytes().to_vec())
    }

    fn verify(&self, pk: &PublicKey, msg: &[u8], sig: &Signature) -> bool {
        let Ok(vk) = VerifyingKey::from_bytes(&pk.0) else {
            return false;
        };
        let Ok(bytes) = <[u8; 64]>::try_from(sig.0.as_slice()) else {
            return false;
        };
        vk.verify(msg, &ed25519_dalek::Signature::from_bytes(&bytes))
            .is_ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CryptoKind {
    Sim,
    Real,
}

impl CryptoKind {
    pub fn provider(self) -> Arc<dyn CryptoProvider> {
        match self {
            CryptoKind::Sim => Arc::new(SimCrypto),
            CryptoKind::Real => Arc::new(RealCrypto),
        }
    }
}

impl FromStr for CryptoKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sim" => Ok(CryptoKind::Sim),
            "real" => Ok(CryptoKind::Real),
            other => Err(format!("unknown crypto provider `{other}` (expected sim or real)")),
        }
    }
}

/// PoW difficulty: a digest `d` is a solution iff `d < threshold` as 256-bit
/// big-endian integers.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Threshold(pub Digest);

impl Threshold {
    pub const ZERO: Threshold = Threshold(Digest([0; 32]));
    pub const MAX: Threshold = Threshold(Digest([0xff; 32]));

    /// `2^(256 - z)`; `z = 0` saturates to the all-ones digest.
    pub fn from_leading_zero_bits(z: u32) -> Self {
        if z == 0 {
            return Self::MAX;
        }
        if z > 256 {
            return Self::ZERO;
        }
        let bit = 256 - z;
        let mut out = [0u8; 32];
        out[31 - (bit / 8) as usize] = 1 << (bit % 8);
        Threshold(Digest(out))
    }

    /// Threshold giving per-attempt success probability `p` (to 128 bits).
    pub fn from_probability(p: f64) -> Self {
        if p >= 1.0 {
            return Self::MAX;
        }
        if p <= 0.0 {
            return Self::ZERO;
        }
        let hi = (p * 2f64.powi(128)) as u128;
        let mut out = [0u8; 32];
        out[..16].copy_from_slice(&hi.to_be_bytes());
        Threshold(Digest(out))
    }

    /// Per-attempt success probability, from the top 128 bits.
    pub fn probability(&self) -> f64 {
        let hi = u128::from_be_bytes(self.0 .0[..16].try_into().unwrap());
        hi as f64 / 2f64.powi(128)
    }

    pub fn accepts(&self, d: &Digest) -> bool {
        d.0 < self.0 .0
    }
}

impl fmt::Debug for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Threshold({})", self.0.to_hex())
    }
}

pub fn puzzle_digest(puzzle: &Puzzle) -> Digest {
    let mut enc = Encoder::with_domain(b"solida/puzzle");
    puzzle.encode_into(&mut enc);
    oracle(&enc.finish())
}

/// `H(puzzle, pk, nonce)` with the puzzle pre-hashed.
pub fn pow_hash(puzzle_digest: &Digest, pk: &PublicKey, nonce: u64) -> Digest {
    let mut buf = [0u8; 8 + 32 + 32 + 8];
    buf[..8].copy_from_slice(b"solidpow");
    buf[8..40].copy_from_slice(&puzzle_digest.0);
    buf[40..72].copy_from_slice(&pk.0);
    buf[72..].copy_from_slice(&nonce.to_be_bytes());
    oracle(&buf)
}

/// Grind nonces `start..start+budget`; returns the first solution.
pub fn mine(
    puzzle: &Puzzle,
    pk: &PublicKey,
    threshold: &Threshold,
    start: u64,
    budget: u64,
) -> Option<u64> {
    let pd = puzzle_digest(puzzle);
    (start..start.saturating_add(budget)).find(|&n| threshold.accepts(&pow_hash(&pd, pk, n)))
}
