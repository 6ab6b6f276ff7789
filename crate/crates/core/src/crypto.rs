//! Dealer-based `(n, t, f)` threshold signatures and threshold coin tossing.
//!
//! This is a deterministic test scheme. A trusted dealer expands a 64-bit seed
//! into one signing key and one coin key per party plus two global keys. A
//! signature share is an HMAC-SHA256 of `domain ‖ signer ‖ digest(message)`
//! under the signer's key; combining `t` valid shares from distinct signers
//! yields an HMAC of the digest under the global signing key, so every
//! qualifying subset produces the same signature bytes. The coin works the
//! same way in a separately keyed domain with threshold `f + 1`, and the coin
//! MAC seeds a ChaCha stream from which the output set is sampled.
//!
//! Verification needs the per-party keys, so the "public" half here is only
//! public within the simulator. Protocol code talks to the [`Signer`] and
//! [`Verifier`] traits and never to these structs directly, so a real
//! pairing-based scheme can replace this one.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use hmac::{Hmac, KeyInit, Mac};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::codec::{DecodeError, Reader, Writer};
use crate::PartyId;

type HmacSha256 = Hmac<Sha256>;

const DOMAIN_SIGN_SHARE: u8 = 0x01;
const DOMAIN_SIGNATURE: u8 = 0x02;
const DOMAIN_COIN_SHARE: u8 = 0x03;
const DOMAIN_COIN: u8 = 0x04;

const KEY_FILE_MAGIC: &[u8; 4] = b"EVTC";
const KEY_FILE_VERSION: u8 = 1;

/// SHA-256 digest of canonical message bytes.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub fn of(bytes: &[u8]) -> Digest {
        Digest(Sha256::digest(bytes).into())
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({}…)", &self.to_hex()[..12])
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("need {needed} shares from distinct signers, have {have}")]
    InsufficientShares { have: usize, needed: usize },
    #[error("shares reference different messages")]
    MixedMessages,
    #[error("share from party {signer} does not validate")]
    InvalidShare { signer: PartyId },
    #[error("cannot draw {s} distinct values from 1..={range_n}")]
    InvalidRange { range_n: u32, s: u32 },
    #[error("key file: {0}")]
    KeyFile(String),
}

/// Scheme parameters. For the agreement protocol `n = 3f + 1` and `t = n - f`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CryptoParams {
    pub n: u32,
    pub t: u32,
    pub f: u32,
    pub seed: u64,
}

impl CryptoParams {
    /// Parameters with the protocol's signing threshold `t = n - f`.
    pub fn new(n: u32, f: u32, seed: u64) -> Result<Self, CryptoError> {
        Self::with_threshold(n, n.saturating_sub(f), f, seed)
    }

    pub fn with_threshold(n: u32, t: u32, f: u32, seed: u64) -> Result<Self, CryptoError> {
        let p = CryptoParams { n, t, f, seed };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), CryptoError> {
        if self.n != 3 * self.f + 1 {
            return Err(CryptoError::InvalidParams(format!(
                "n = {} but 3f + 1 = {}",
                self.n,
                3 * self.f + 1
            )));
        }
        if self.t <= self.f || self.t > self.n {
            return Err(CryptoError::InvalidParams(format!(
                "threshold t = {} outside ({}, {}]",
                self.t, self.f, self.n
            )));
        }
        Ok(())
    }

    /// Number of coin shares that determine a coin.
    pub fn coin_threshold(&self) -> usize {
        self.f as usize + 1
    }
}

/// One party's share of a threshold signature on some message.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SignShare {
    pub signer: PartyId,
    pub message_digest: Digest,
    pub share_bytes: Vec<u8>,
}

/// A combined certificate over one message.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ThresholdSignature {
    pub message_digest: Digest,
    pub sig_bytes: Vec<u8>,
}

/// One party's share of the coin for some tag.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct CoinShare {
    pub signer: PartyId,
    pub tag_digest: Digest,
    pub share_bytes: Vec<u8>,
}

impl fmt::Debug for SignShare {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SignShare(p{} {:?})", self.signer, self.message_digest)
    }
}

impl fmt::Debug for ThresholdSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ThresholdSignature({:?})", self.message_digest)
    }
}

impl fmt::Debug for CoinShare {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CoinShare(p{} {:?})", self.signer, self.tag_digest)
    }
}

impl SignShare {
    pub fn encode(&self, w: &mut Writer) {
        w.u32(self.signer)
            .fixed(&self.message_digest.0)
            .bytes(&self.share_bytes);
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(SignShare {
            signer: r.u32()?,
            message_digest: Digest(r.fixed()?),
            share_bytes: r.bytes()?,
        })
    }
}

impl ThresholdSignature {
    pub fn encode(&self, w: &mut Writer) {
        w.fixed(&self.message_digest.0).bytes(&self.sig_bytes);
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(ThresholdSignature {
            message_digest: Digest(r.fixed()?),
            sig_bytes: r.bytes()?,
        })
    }

    /// Encoded size, used for the signature part of byte accounting.
    pub fn encoded_len(&self) -> usize {
        32 + 4 + self.sig_bytes.len()
    }
}

impl CoinShare {
    pub fn encode(&self, w: &mut Writer) {
        w.u32(self.signer)
            .fixed(&self.tag_digest.0)
            .bytes(&self.share_bytes);
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(CoinShare {
            signer: r.u32()?,
            tag_digest: Digest(r.fixed()?),
            share_bytes: r.bytes()?,
        })
    }
}

/// A party's private signing capability.
pub trait Signer: Send + Sync {
    fn party(&self) -> PartyId;
    fn sign_share(&self, message: &[u8]) -> SignShare;
    fn coin_share(&self, tag: &[u8]) -> CoinShare;
}

/// Public verification and combination, shared by all parties.
pub trait Verifier: Send + Sync {
    fn params(&self) -> &CryptoParams;
    fn share_validate(&self, share: &SignShare, message: &[u8]) -> bool;
    fn combine(
        &self,
        shares: &[SignShare],
        message: &[u8],
    ) -> Result<ThresholdSignature, CryptoError>;
    fn threshold_validate(&self, sig: &ThresholdSignature, message: &[u8]) -> bool;
    fn coin_share_verify(&self, share: &CoinShare, tag: &[u8]) -> bool;
    fn coin_toss(
        &self,
        tag: &[u8],
        shares: &[CoinShare],
        range_n: u32,
        s: u32,
    ) -> Result<Vec<PartyId>, CryptoError>;
}

fn mac(key: &[u8; 32], parts: &[&[u8]]) -> [u8; 32] {
    let mut m = HmacSha256::new_from_slice(key).expect("HMAC accepts any key length");
    for p in parts {
        m.update(p);
    }
    m.finalize().into_bytes().into()
}

/// Per-party secret: one key in the signature domain, one in the coin domain.
#[derive(Clone, PartialEq, Eq)]
pub struct SecretShare {
    party: PartyId,
    sig_key: [u8; 32],
    coin_key: [u8; 32],
}

impl fmt::Debug for SecretShare {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SecretShare")
            .field("party", &self.party)
            .finish_non_exhaustive()
    }
}

impl Signer for SecretShare {
    fn party(&self) -> PartyId {
        self.party
    }

    fn sign_share(&self, message: &[u8]) -> SignShare {
        let d = Digest::of(message);
        SignShare {
            signer: self.party,
            message_digest: d,
            share_bytes: mac(
                &self.sig_key,
                &[&[DOMAIN_SIGN_SHARE], &self.party.to_be_bytes(), &d.0],
            )
            .to_vec(),
        }
    }

    fn coin_share(&self, tag: &[u8]) -> CoinShare {
        let d = Digest::of(tag);
        CoinShare {
            signer: self.party,
            tag_digest: d,
            share_bytes: mac(
                &self.coin_key,
                &[&[DOMAIN_COIN_SHARE], &self.party.to_be_bytes(), &d.0],
            )
            .to_vec(),
        }
    }
}

/// Verification data for every party plus the two global keys.
#[derive(Clone, PartialEq, Eq)]
pub struct PublicKeySet {
    params: CryptoParams,
    sig_master: [u8; 32],
    coin_master: [u8; 32],
    sig_keys: Vec<[u8; 32]>,
    coin_keys: Vec<[u8; 32]>,
}

impl fmt::Debug for PublicKeySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PublicKeySet")
            .field("params", &self.params)
            .finish_non_exhaustive()
    }
}

impl PublicKeySet {
    fn key_index(&self, party: PartyId) -> Option<usize> {
        (party >= 1 && party <= self.params.n).then(|| party as usize - 1)
    }

    /// Coin output for a tag as the dealer sees it, without any shares.
    /// Equals `coin_toss` on any qualifying share set; the simulator uses it
    /// as an omniscient oracle for committee membership.
    pub fn coin_value(
        &self,
        tag: &[u8],
        range_n: u32,
        s: u32,
    ) -> Result<Vec<PartyId>, CryptoError> {
        if s > range_n {
            return Err(CryptoError::InvalidRange { range_n, s });
        }
        let seed = mac(&self.coin_master, &[&[DOMAIN_COIN], &Digest::of(tag).0]);
        let mut rng = ChaCha8Rng::from_seed(seed);
        let mut out: Vec<PartyId> =
            rand::seq::index::sample(&mut rng, range_n as usize, s as usize)
                .into_iter()
                .map(|i| i as PartyId + 1)
                .collect();
        out.sort_unstable();
        Ok(out)
    }
}

impl Verifier for PublicKeySet {
    fn params(&self) -> &CryptoParams {
        &self.params
    }

    fn share_validate(&self, share: &SignShare, message: &[u8]) -> bool {
        let Some(idx) = self.key_index(share.signer) else {
            return false;
        };
        let d = Digest::of(message);
        if share.message_digest != d {
            return false;
        }
        let expected = mac(
            &self.sig_keys[idx],
            &[&[DOMAIN_SIGN_SHARE], &share.signer.to_be_bytes(), &d.0],
        );
        share.share_bytes == expected
    }

    fn combine(
        &self,
        shares: &[SignShare],
        message: &[u8],
    ) -> Result<ThresholdSignature, CryptoError> {
        let d = Digest::of(message);
        if shares.iter().any(|s| s.message_digest != d) {
            return Err(CryptoError::MixedMessages);
        }
        if let Some(bad) = shares.iter().find(|s| !self.share_validate(s, message)) {
            return Err(CryptoError::InvalidShare { signer: bad.signer });
        }
        let signers: BTreeSet<PartyId> = shares.iter().map(|s| s.signer).collect();
        let needed = self.params.t as usize;
        if signers.len() < needed {
            return Err(CryptoError::InsufficientShares {
                have: signers.len(),
                needed,
            });
        }
        Ok(ThresholdSignature {
            message_digest: d,
            sig_bytes: mac(&self.sig_master, &[&[DOMAIN_SIGNATURE], &d.0]).to_vec(),
        })
    }

    fn threshold_validate(&self, sig: &ThresholdSignature, message: &[u8]) -> bool {
        let d = Digest::of(message);
        sig.message_digest == d
            && sig.sig_bytes == mac(&self.sig_master, &[&[DOMAIN_SIGNATURE], &d.0])
    }

    fn coin_share_verify(&self, share: &CoinShare, tag: &[u8]) -> bool {
        let Some(idx) = self.key_index(share.signer) else {
            return false;
        };
        let d = Digest::of(tag);
        if share.tag_digest != d {
            return false;
        }
        let expected = mac(
            &self.coin_keys[idx],
            &[&[DOMAIN_COIN_SHARE], &share.signer.to_be_bytes(), &d.0],
        );
        share.share_bytes == expected
    }

    fn coin_toss(
        &self,
        tag: &[u8],
        shares: &[CoinShare],
        range_n: u32,
        s: u32,
    ) -> Result<Vec<PartyId>, CryptoError> {
        if let Some(bad) = shares.iter().find(|sh| !self.coin_share_verify(sh, tag)) {
            return Err(CryptoError::InvalidShare { signer: bad.signer });
        }
        let signers: BTreeSet<PartyId> = shares.iter().map(|sh| sh.signer).collect();
        let needed = self.params.coin_threshold();
        if signers.len() < needed {
            return Err(CryptoError::InsufficientShares {
                have: signers.len(),
                needed,
            });
        }
        self.coin_value(tag, range_n, s)
    }
}

/// Everything the dealer hands out: one secret per party and the shared
/// verification data.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyMaterial {
    public: Arc<PublicKeySet>,
    secrets: Vec<SecretShare>,
}

/// Trusted-dealer setup. A pure function of `params` (including its seed).
pub fn deal(params: CryptoParams) -> Result<KeyMaterial, CryptoError> {
    params.validate()?;
    let mut root_input = Writer::new(0xd0);
    root_input
        .bytes(b"evaba-dealer")
        .u64(params.seed)
        .u32(params.n)
        .u32(params.t)
        .u32(params.f);
    let root: [u8; 32] = Sha256::digest(root_input.finish()).into();

    let sig_master = mac(&root, &[b"sig-master"]);
    let coin_master = mac(&root, &[b"coin-master"]);
    let secrets: Vec<SecretShare> = (1..=params.n)
        .map(|party| SecretShare {
            party,
            sig_key: mac(&root, &[b"sig-key", &party.to_be_bytes()]),
            coin_key: mac(&root, &[b"coin-key", &party.to_be_bytes()]),
        })
        .collect();
    Ok(KeyMaterial::assemble(
        params,
        sig_master,
        coin_master,
        secrets,
    ))
}

impl KeyMaterial {
    fn assemble(
        params: CryptoParams,
        sig_master: [u8; 32],
        coin_master: [u8; 32],
        secrets: Vec<SecretShare>,
    ) -> KeyMaterial {
        let public = PublicKeySet {
            params,
            sig_master,
            coin_master,
            sig_keys: secrets.iter().map(|s| s.sig_key).collect(),
            coin_keys: secrets.iter().map(|s| s.coin_key).collect(),
        };
        KeyMaterial {
            public: Arc::new(public),
            secrets,
        }
    }

    pub fn params(&self) -> &CryptoParams {
        &self.public.params
    }

    pub fn public(&self) -> &Arc<PublicKeySet> {
        &self.public
    }

    /// Secret of party `party` (1-based).
    pub fn secret(&self, party: PartyId) -> Option<&SecretShare> {
        self.public.key_index(party).map(|i| &self.secrets[i])
    }

    /// Binary export: magic `EVTC`, version byte, params, global keys, then
    /// one `(party, sig_key, coin_key)` row per party.
    pub fn to_bytes(&self) -> Vec<u8> {
        let p = &self.public.params;
        let mut out = KEY_FILE_MAGIC.to_vec();
        let mut w = Writer::new(KEY_FILE_VERSION);
        w.u32(p.n)
            .u32(p.t)
            .u32(p.f)
            .u64(p.seed)
            .fixed(&self.public.sig_master)
            .fixed(&self.public.coin_master);
        for s in &self.secrets {
            w.u32(s.party).fixed(&s.sig_key).fixed(&s.coin_key);
        }
        out.extend_from_slice(&w.finish());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<KeyMaterial, CryptoError> {
        let err = |e: DecodeError| CryptoError::KeyFile(e.to_string());
        if bytes.len() < 5 || &bytes[..4] != KEY_FILE_MAGIC {
            return Err(CryptoError::KeyFile("bad magic".into()));
        }
        let mut r = Reader::new(&bytes[4..]);
        let version = r.u8().map_err(err)?;
        if version != KEY_FILE_VERSION {
            return Err(CryptoError::KeyFile(format!(
                "unsupported version {version}"
            )));
        }
        let n = r.u32().map_err(err)?;
        let t = r.u32().map_err(err)?;
        let f = r.u32().map_err(err)?;
        let seed = r.u64().map_err(err)?;
        let params = CryptoParams::with_threshold(n, t, f, seed)?;
        let sig_master = r.fixed().map_err(err)?;
        let coin_master = r.fixed().map_err(err)?;
        let mut secrets = Vec::with_capacity(n as usize);
        for expected in 1..=n {
            let party = r.u32().map_err(err)?;
            if party != expected {
                return Err(CryptoError::KeyFile(format!(
                    "share table row {expected} names party {party}"
                )));
            }
            secrets.push(SecretShare {
                party,
                sig_key: r.fixed().map_err(err)?,
                coin_key: r.fixed().map_err(err)?,
            });
        }
        r.finish().map_err(err)?;
        Ok(KeyMaterial::assemble(
            params,
            sig_master,
            coin_master,
            secrets,
        ))
    }

    pub fn write_to(&self, path: &Path) -> std::io::Result<()> {
        fs::write(path, self.to_bytes())
    }

    pub fn read_from(path: &Path) -> Result<KeyMaterial, CryptoError> {
        let bytes = fs::read(path).map_err(|e| CryptoError::KeyFile(e.to_string()))?;
        KeyMaterial::from_bytes(&bytes)
    }
}
