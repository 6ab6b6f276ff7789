//! Exact versus sampled probability of an all-Byzantine committee.

use serde::Serialize;

use crate::committee::{coin_tag, committee_probability};
use crate::crypto::{deal, CryptoError, CryptoParams};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CommitteeStatsRow {
    pub n: u32,
    pub f: u32,
    pub kappa: u32,
    /// Exact probability as `numerator/denominator`.
    pub exact_ratio: String,
    pub exact: f64,
    pub samples: u64,
    pub hits: u64,
    pub empirical: f64,
    /// Binomial standard deviation of the empirical estimate.
    pub sigma: f64,
    pub within_3_sigma: bool,
    /// `(1/3)^κ`, an upper bound on the exact value whenever `κ ≤ f`.
    pub third_power: f64,
}

/// One row per κ: exact probability and a Monte Carlo estimate from
/// `samples` fresh coin tags. The Byzantine set is the last `f` parties;
/// any fixed set of that size has the same probability.
pub fn committee_stats(
    n: u32,
    f: u32,
    kappas: &[u32],
    samples: u64,
    seed: u64,
) -> Result<Vec<CommitteeStatsRow>, CryptoError> {
    let keys = deal(CryptoParams::new(n, f, seed)?)?;
    let pk = keys.public();
    let first_byz = n - f + 1;
    let mut rows = Vec::with_capacity(kappas.len());
    for &kappa in kappas {
        let exact_r = committee_probability(n, f, kappa);
        let exact = *exact_r.numer() as f64 / *exact_r.denom() as f64;
        let mut hits = 0u64;
        for i in 0..samples {
            let members = pk.coin_value(&coin_tag("mc", kappa as u64, i), n, kappa)?;
            if members.iter().all(|&m| m >= first_byz) {
                hits += 1;
            }
        }
        let empirical = hits as f64 / samples.max(1) as f64;
        let sigma = (exact * (1.0 - exact) / samples.max(1) as f64).sqrt();
        rows.push(CommitteeStatsRow {
            n,
            f,
            kappa,
            exact_ratio: format!("{}/{}", exact_r.numer(), exact_r.denom()),
            exact,
            samples,
            hits,
            empirical,
            sigma,
            within_3_sigma: (empirical - exact).abs() <= 3.0 * sigma,
            third_power: (1.0f64 / 3.0).powi(kappa as i32),
        });
    }
    Ok(rows)
}
