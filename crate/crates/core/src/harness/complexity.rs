//! Per-view message-complexity bounds, counted over honest senders only.
//! Byzantine traffic is the adversary's budget and is reported separately.

use serde::Serialize;

use crate::sim::{PhaseCounts, Trace};
use crate::View;

/// Fixed constant in the `total ≤ c·n²` bound. The honest per-view maximum
/// is five all-to-all phases plus `9nκ` promotion and propose traffic, so
/// 14 covers every κ ≤ n.
pub const TOTAL_CONSTANT: f64 = 14.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ViewComplexity {
    pub view: View,
    pub counts: PhaseCounts,
    pub total: u64,
    /// `total / n²`.
    pub c: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComplexityReport {
    pub pass: bool,
    pub views: Vec<ViewComplexity>,
    pub max_c: f64,
    pub max_promotion: u64,
    pub failures: Vec<String>,
}

pub fn promotion_bound(n: u32, kappa: u32) -> u64 {
    8 * n as u64 * kappa as u64
}

pub fn check_complexity(trace: &Trace) -> ComplexityReport {
    let n = trace.n as u64;
    let kappa = trace.kappa as u64;
    let n2 = n * n;
    let mut failures = Vec::new();
    let mut views = Vec::new();
    for (&view, vc) in &trace.counters.per_view {
        let h = vc.honest;
        let total = h.total();
        let mut check = |name: &str, got: u64, bound: u64| {
            if got > bound {
                failures.push(format!("view {view}: {name} {got} > {bound}"));
            }
        };
        check("promotion", h.promotion, 8 * n * kappa);
        check("propose", h.propose, kappa * n);
        check("suggest", h.suggest, n2);
        check("election", h.election, n2);
        check("view-change", h.view_change, n2);
        check("selection", h.selection, n2);
        check("decide", h.decide, n2);
        let c = total as f64 / n2 as f64;
        if c > TOTAL_CONSTANT {
            failures.push(format!("view {view}: total {total} > {TOTAL_CONSTANT}·n²"));
        }
        views.push(ViewComplexity {
            view,
            counts: h,
            total,
            c,
        });
    }
    ComplexityReport {
        pass: failures.is_empty(),
        max_c: views.iter().map(|v| v.c).fold(0.0, f64::max),
        max_promotion: views.iter().map(|v| v.counts.promotion).max().unwrap_or(0),
        views,
        failures,
    }
}
