//! eVABA: validated asynchronous Byzantine agreement where only a randomly
//! selected committee of κ parties broadcasts proposals in each view.
//!
//! The crate is layered bottom-up:
//!
//! * [`crypto`]: dealer-based threshold signatures and threshold coin.
//! * [`committee`]: per-view committee selection from the coin.
//! * [`pb`]: prioritized provable broadcast, which only ACKs committee senders.
//! * [`promotion`]: the four chained broadcasts and the key/lock/commit store.
//! * [`engine`]: the per-party view loop (propose, suggest, elect, view-change).
//! * [`sim`]: deterministic asynchronous network with Byzantine behaviours.
//! * [`harness`]: experiment sweeps, complexity checks and reports.

pub mod codec;
pub mod committee;
pub mod crypto;
pub mod engine;
pub mod harness;
pub mod message;
pub mod pb;
pub mod promotion;
pub mod sim;

/// Party identifier, `1..=n`.
pub type PartyId = u32;

/// View number, starting at 1.
pub type View = u64;

pub use committee::{committee_probability, Committee};
pub use crypto::{deal, CryptoParams, KeyMaterial, Signer, Verifier};
pub use engine::{Engine, EngineConfig};
pub use sim::{run, AdversaryConfig, Behavior, SchedulerKind, SimConfig, Trace};
