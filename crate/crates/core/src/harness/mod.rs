//! Seeded experiment sweeps and their reports.
//!
//! Runs execute on the rayon pool; results are put back in seed order
//! before aggregation, so a report is a pure function of its config.

mod complexity;
mod stats;

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::crypto::{CryptoParams, Digest, KeyMaterial};
use crate::message::{Message, Phase};
use crate::sim::{
    run, run_with_keys, AdversaryConfig, Behavior, DelayRule, Outcome, PhaseCounts, SchedulerKind,
    ScriptedSend, SimConfig, SimError, Trace,
};
use crate::{PartyId, View};

pub use complexity::{
    check_complexity, promotion_bound, ComplexityReport, ViewComplexity, TOTAL_CONSTANT,
};
pub use stats::{committee_stats, CommitteeStatsRow};

pub const REPORT_VERSION: &str = "evaba-report/1";

/// Named adversary behaviours as accepted on the command line.
pub const BEHAVIORS: [&str; 6] = [
    "crash",
    "mute",
    "equivocate",
    "rogue-broadcast",
    "withhold-shares",
    "scripted",
];

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ExperimentConfig {
    pub n: u32,
    pub f: u32,
    pub kappa: u32,
    pub runs: u64,
    pub seed: u64,
    /// `none` or one of [`BEHAVIORS`].
    pub adversary: String,
    pub byzantine: Vec<PartyId>,
    pub scheduler: String,
    pub delay: Vec<DelayRule>,
    pub max_views: View,
    pub instance: u64,
}

impl ExperimentConfig {
    /// κ = f + 1, honest parties, random scheduler, 20 views.
    pub fn new(n: u32, f: u32) -> Self {
        ExperimentConfig {
            n,
            f,
            kappa: f + 1,
            runs: 1,
            seed: 0,
            adversary: "none".into(),
            byzantine: Vec::new(),
            scheduler: "random".into(),
            delay: Vec::new(),
            max_views: 20,
            instance: 0,
        }
    }

    /// Runs `behavior` on the last `f` parties.
    pub fn with_adversary(mut self, behavior: &str) -> Self {
        self.adversary = behavior.into();
        self.byzantine = if behavior == "none" {
            Vec::new()
        } else {
            (self.n - self.f + 1..=self.n).collect()
        };
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        CryptoParams::new(self.n, self.f, 0)?;
        if self.byzantine.len() > self.f as usize {
            return Err(SimError::Config(format!(
                "{} Byzantine parties exceed f = {}",
                self.byzantine.len(),
                self.f
            )));
        }
        if self.adversary == "none" && !self.byzantine.is_empty() {
            return Err(SimError::Config(
                "Byzantine ids given without --adversary".into(),
            ));
        }
        if self.adversary != "none" && !BEHAVIORS.contains(&self.adversary.as_str()) {
            return Err(SimError::Config(format!(
                "unknown adversary {:?}",
                self.adversary
            )));
        }
        scheduler_kind(&self.scheduler, &self.delay)?;
        Ok(())
    }

    /// The simulator config of the run with this seed.
    pub fn sim_config(&self, seed: u64) -> Result<SimConfig, SimError> {
        let mut c = SimConfig::new(self.n, self.f);
        c.kappa = self.kappa;
        c.instance = self.instance;
        c.max_views = self.max_views;
        c.key_seed = seed;
        c.record_events = false;
        let scheduler = scheduler_kind(&self.scheduler, &self.delay)?;
        c.adversary = if self.adversary == "none" {
            AdversaryConfig::honest(scheduler, seed)
        } else {
            let behavior = match self.adversary.as_str() {
                "crash" => Behavior::Crash,
                "mute" => Behavior::Mute,
                "equivocate" => Behavior::Equivocate,
                "rogue-broadcast" => Behavior::RogueBroadcast,
                "withhold-shares" => Behavior::WithholdShares,
                "scripted" => Behavior::Scripted(Vec::new()),
                other => return Err(SimError::Config(format!("unknown adversary {other:?}"))),
            };
            let mut a = AdversaryConfig::uniform(scheduler, behavior, self.byzantine.clone(), seed);
            for (&p, b) in a.byzantine.iter_mut() {
                if let Behavior::Scripted(list) = b {
                    *list = fuzz_script(self.n, p, seed);
                }
            }
            a
        };
        c.validate()?;
        Ok(c)
    }
}

fn scheduler_kind(name: &str, delay: &[DelayRule]) -> Result<SchedulerKind, SimError> {
    Ok(match name {
        "fifo" => SchedulerKind::Fifo,
        "random" => SchedulerKind::Random,
        "honest-last" => SchedulerKind::HonestLast,
        "target-delay" => {
            if delay.is_empty() {
                // Without explicit rules, hold back everything party 1 sends.
                SchedulerKind::TargetDelay(vec![DelayRule {
                    from: Some(1),
                    ..DelayRule::default()
                }])
            } else {
                SchedulerKind::TargetDelay(delay.to_vec())
            }
        }
        other => return Err(SimError::Config(format!("unknown scheduler {other:?}"))),
    })
}

/// A scripted party's payload list, sent to everyone: random bytes, a
/// PROPOSE with a forged certificate, and truncated and bit-flipped copies
/// of that PROPOSE.
pub fn fuzz_script(n: u32, party: PartyId, seed: u64) -> Vec<ScriptedSend> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (party as u64).rotate_left(32));
    let probe = Message::Propose(crate::message::ProposeMsg {
        view: 1,
        proposer: party,
        value: crate::sim::default_value(party),
        cert: crate::crypto::ThresholdSignature {
            message_digest: Digest::of(b"forged"),
            sig_bytes: vec![0; 32],
        },
    })
    .encode();
    let mut payloads: Vec<Vec<u8>> = Vec::new();
    for _ in 0..4 {
        let len = rng.random_range(0..64);
        payloads.push((0..len).map(|_| rng.random()).collect());
    }
    payloads.push(probe[..probe.len() / 2].to_vec());
    let mut flipped = probe.clone();
    let i = rng.random_range(0..flipped.len());
    flipped[i] ^= 1 << rng.random_range(0..8);
    payloads.push(flipped);
    payloads.push(probe);
    let mut out = Vec::new();
    for payload in payloads {
        for to in 1..=n {
            out.push(ScriptedSend {
                to,
                payload: payload.clone(),
            });
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRecord {
    pub seed: u64,
    pub outcome: Outcome,
    pub views_to_decide: Option<View>,
    pub views_run: View,
    pub messages: PhaseCounts,
    pub byzantine_messages: u64,
    pub bytes_l: u64,
    pub bytes_k: u64,
    pub max_promotion_per_view: u64,
    pub max_c: f64,
    pub violations: Vec<String>,
}

impl RunRecord {
    pub fn from_trace(seed: u64, trace: &Trace) -> Self {
        let cx = check_complexity(trace);
        let mut violations = trace.violations.clone();
        violations.extend(cx.failures.iter().map(|f| format!("complexity: {f}")));
        RunRecord {
            seed,
            outcome: trace.outcome.clone(),
            views_to_decide: trace.views_to_decide(),
            views_run: trace.stats.max_view,
            messages: trace.counters.honest_total(),
            byzantine_messages: trace.counters.byzantine_total().total() + trace.counters.unparsed,
            bytes_l: trace.counters.honest_bytes_l,
            bytes_k: trace.counters.honest_bytes_k,
            max_promotion_per_view: cx.max_promotion,
            max_c: cx.max_c,
            violations,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseMeans {
    pub selection: f64,
    pub promotion: f64,
    pub propose: f64,
    pub suggest: f64,
    pub election: f64,
    pub view_change: f64,
    pub decide: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Aggregates {
    pub decided_runs: u64,
    pub undecided_runs: u64,
    pub mean_views: f64,
    pub p95_views: View,
    pub max_views: View,
    pub mean_messages: PhaseMeans,
    /// Honest promotion messages per executed view, averaged over runs.
    pub mean_promotion_per_view: f64,
    pub max_promotion_per_view: u64,
    pub promotion_bound: u64,
    pub max_c: f64,
    pub c_bound: f64,
    pub mean_bytes_l: f64,
    pub mean_bytes_k: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BaselineComparison {
    pub mode: &'static str,
    pub kappa: u32,
    pub aggregates: Aggregates,
    /// Baseline over eVABA mean promotion messages per view.
    pub promotion_ratio: f64,
    /// `n / κ` for the eVABA configuration.
    pub expected_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub version: &'static str,
    pub config: ExperimentConfig,
    pub runs: u64,
    pub aggregates: Aggregates,
    pub baseline: Option<BaselineComparison>,
    pub per_run: Vec<RunRecord>,
    pub violations: Vec<String>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Human-readable summary table.
    pub fn write_table<W: Write>(&self, mut w: W) -> io::Result<()> {
        let c = &self.config;
        writeln!(
            w,
            "n={} f={} kappa={} runs={} adversary={} scheduler={} seed={}",
            c.n, c.f, c.kappa, self.runs, c.adversary, c.scheduler, c.seed
        )?;
        let a = &self.aggregates;
        writeln!(w, "{:<28}{:>14}", "metric", "value")?;
        let rows: [(&str, String); 12] = [
            ("decided runs", a.decided_runs.to_string()),
            ("undecided runs", a.undecided_runs.to_string()),
            ("mean views to decide", format!("{:.3}", a.mean_views)),
            ("p95 views to decide", a.p95_views.to_string()),
            (
                "mean messages / run",
                format!("{:.1}", a.mean_messages.total),
            ),
            (
                "mean promotion / view",
                format!("{:.1}", a.mean_promotion_per_view),
            ),
            (
                "max promotion / view",
                format!("{} (≤ {})", a.max_promotion_per_view, a.promotion_bound),
            ),
            (
                "max c = total / n²",
                format!("{:.3} (≤ {})", a.max_c, a.c_bound),
            ),
            ("mean L bytes / run", format!("{:.0}", a.mean_bytes_l)),
            ("mean K bytes / run", format!("{:.0}", a.mean_bytes_k)),
            ("max views to decide", a.max_views.to_string()),
            ("violations", self.violations.len().to_string()),
        ];
        for (k, v) in rows {
            writeln!(w, "{k:<28}{v:>14}")?;
        }
        if let Some(b) = &self.baseline {
            writeln!(
                w,
                "baseline {} (kappa={}): mean promotion / view {:.1}, ratio {:.3} (n/kappa = {:.3})",
                b.mode, b.kappa, b.aggregates.mean_promotion_per_view, b.promotion_ratio, b.expected_ratio
            )?;
        }
        for v in self.violations.iter().take(20) {
            writeln!(w, "violation: {v}")?;
        }
        Ok(())
    }
}

/// Executes runs `seed..seed + runs`. With `keys`, every run shares them;
/// otherwise each run deals its own from the run seed.
pub fn run_traces(
    config: &ExperimentConfig,
    keys: Option<&KeyMaterial>,
    record_events: bool,
) -> Result<Vec<(u64, Trace)>, SimError> {
    config.validate()?;
    let seeds: Vec<u64> = (0..config.runs)
        .map(|i| config.seed.wrapping_add(i))
        .collect();
    seeds
        .par_iter()
        .map(|&seed| {
            let mut sc = config.sim_config(seed)?;
            sc.record_events = record_events;
            let trace = match keys {
                Some(k) => run_with_keys(&sc, k)?,
                None => run(&sc)?,
            };
            Ok((seed, trace))
        })
        .collect()
}

pub fn aggregate(n: u32, kappa: u32, records: &[RunRecord]) -> Aggregates {
    let runs = records.len().max(1) as f64;
    let mut views: Vec<View> = records.iter().filter_map(|r| r.views_to_decide).collect();
    views.sort_unstable();
    let decided = views.len() as u64;
    let p95 = if views.is_empty() {
        0
    } else {
        views[((views.len() as f64 * 0.95).ceil() as usize).clamp(1, views.len()) - 1]
    };
    let mean_of = |f: &dyn Fn(&RunRecord) -> f64| records.iter().map(f).sum::<f64>() / runs;
    let phase = |p: Phase| mean_of(&|r| r.messages.get(p) as f64);
    Aggregates {
        decided_runs: decided,
        undecided_runs: records.len() as u64 - decided,
        mean_views: if decided == 0 {
            0.0
        } else {
            views.iter().sum::<View>() as f64 / decided as f64
        },
        p95_views: p95,
        max_views: views.last().copied().unwrap_or(0),
        mean_messages: PhaseMeans {
            selection: phase(Phase::Selection),
            promotion: phase(Phase::Promotion),
            propose: phase(Phase::Propose),
            suggest: phase(Phase::Suggest),
            election: phase(Phase::Election),
            view_change: phase(Phase::ViewChange),
            decide: phase(Phase::Decide),
            total: mean_of(&|r| r.messages.total() as f64),
        },
        mean_promotion_per_view: mean_of(&|r| {
            r.messages.promotion as f64 / r.views_run.max(1) as f64
        }),
        max_promotion_per_view: records
            .iter()
            .map(|r| r.max_promotion_per_view)
            .max()
            .unwrap_or(0),
        promotion_bound: promotion_bound(n, kappa),
        max_c: records.iter().map(|r| r.max_c).fold(0.0, f64::max),
        c_bound: TOTAL_CONSTANT,
        mean_bytes_l: mean_of(&|r| r.bytes_l as f64),
        mean_bytes_k: mean_of(&|r| r.bytes_k as f64),
    }
}

fn records_of(traces: &[(u64, Trace)]) -> Vec<RunRecord> {
    traces
        .iter()
        .map(|(seed, t)| RunRecord::from_trace(*seed, t))
        .collect()
}

fn violations_of(label: &str, records: &[RunRecord]) -> Vec<String> {
    records
        .iter()
        .flat_map(|r| {
            r.violations
                .iter()
                .map(move |v| format!("{label}seed {}: {v}", r.seed))
        })
        .collect()
}

/// Builds the report for already executed traces.
pub fn report_from_traces(config: &ExperimentConfig, traces: &[(u64, Trace)]) -> ExperimentReport {
    let per_run = records_of(traces);
    ExperimentReport {
        version: REPORT_VERSION,
        config: config.clone(),
        runs: per_run.len() as u64,
        aggregates: aggregate(config.n, config.kappa, &per_run),
        baseline: None,
        violations: violations_of("", &per_run),
        per_run,
    }
}

/// Runs the experiment and, if `baseline` is set, the all-broadcast
/// configuration (κ = n) on the same seeds.
pub fn run_experiment(
    config: &ExperimentConfig,
    keys: Option<&KeyMaterial>,
    baseline: bool,
) -> Result<ExperimentReport, SimError> {
    let traces = run_traces(config, keys, false)?;
    let mut report = report_from_traces(config, &traces);
    if baseline {
        report.baseline = Some(run_baseline(
            config,
            keys,
            &report.aggregates,
            &mut report.violations,
        )?);
    }
    Ok(report)
}

fn run_baseline(
    config: &ExperimentConfig,
    keys: Option<&KeyMaterial>,
    ours: &Aggregates,
    violations: &mut Vec<String>,
) -> Result<BaselineComparison, SimError> {
    let mut bc = config.clone();
    bc.kappa = config.n;
    let records = records_of(&run_traces(&bc, keys, false)?);
    violations.extend(violations_of("baseline ", &records));
    let aggregates = aggregate(bc.n, bc.kappa, &records);
    Ok(BaselineComparison {
        mode: "all-broadcast",
        kappa: bc.kappa,
        promotion_ratio: aggregates.mean_promotion_per_view
            / ours.mean_promotion_per_view.max(1e-9),
        expected_ratio: config.n as f64 / config.kappa as f64,
        aggregates,
    })
}
