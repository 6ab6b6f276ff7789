use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use flate2::write::GzEncoder;
use flate2::Compression;

use evaba::crypto::{deal, CryptoParams, KeyMaterial};
use evaba::harness::{
    committee_stats, report_from_traces, run_experiment, run_traces, ExperimentConfig, BEHAVIORS,
};
use evaba::sim::DelayRule;
use evaba::PartyId;

#[derive(Parser)]
#[command(
    name = "evaba",
    version,
    about = "Committee-based validated asynchronous agreement: simulator and experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded simulations and write a report.
    Run(RunArgs),
    /// Exact and sampled probability of an all-Byzantine committee.
    CommitteeStats(StatsArgs),
    /// Deal threshold keys into a file.
    Keygen(KeygenArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    AllBroadcast,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    n: u32,
    #[arg(long)]
    f: u32,
    /// Committee size, default f + 1.
    #[arg(long)]
    kappa: Option<u32>,
    #[arg(long, default_value_t = 1)]
    runs: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// none, crash, mute, equivocate, rogue-broadcast, withhold-shares, scripted.
    #[arg(long, default_value = "none")]
    adversary: String,
    /// Byzantine parties: a count (the highest ids) or a comma list of ids.
    /// Defaults to the last f parties when an adversary is set.
    #[arg(long)]
    byz: Option<String>,
    /// fifo, random, honest-last or target-delay.
    #[arg(long, default_value = "random")]
    scheduler: String,
    /// Rule for target-delay as FROM:TO[:TAG-PREFIX], `*` for any. Repeatable.
    #[arg(long)]
    delay: Vec<String>,
    #[arg(long, default_value_t = 20)]
    max_views: u64,
    #[arg(long, value_enum)]
    baseline: Option<Baseline>,
    /// Report file (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Trace file (JSON lines, gzipped if the name ends in .gz).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Key file from `keygen`; otherwise every run deals its own keys.
    #[arg(long)]
    keys: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    n: u32,
    #[arg(long)]
    f: u32,
    /// Committee sizes; default 1..=f+1.
    #[arg(long, value_delimiter = ',')]
    kappa: Vec<u32>,
    #[arg(long, default_value_t = 100_000)]
    samples: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct KeygenArgs {
    #[arg(long)]
    n: u32,
    #[arg(long)]
    f: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_byz(spec: &str, n: u32) -> Result<Vec<PartyId>, String> {
    let spec = spec.trim();
    if !spec.contains(',') {
        let k: u32 = spec.parse().map_err(|_| format!("bad --byz {spec:?}"))?;
        if k > n {
            return Err(format!("--byz {k} exceeds n = {n}"));
        }
        return Ok((n - k + 1..=n).collect());
    }
    let mut ids: Vec<PartyId> = spec
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse().map_err(|_| format!("bad party id {s:?}")))
        .collect::<Result<_, _>>()?;
    ids.sort_unstable();
    ids.dedup();
    Ok(ids)
}

fn parse_delay(spec: &str) -> Result<DelayRule, String> {
    let parts: Vec<&str> = spec.splitn(3, ':').collect();
    if parts.len() < 2 {
        return Err(format!("bad --delay {spec:?}, expected FROM:TO[:TAG]"));
    }
    let id = |s: &str| -> Result<Option<PartyId>, String> {
        if s == "*" {
            Ok(None)
        } else {
            s.parse()
                .map(Some)
                .map_err(|_| format!("bad party id {s:?}"))
        }
    };
    Ok(DelayRule {
        from: id(parts[0])?,
        to: id(parts[1])?,
        tag_prefix: parts.get(2).map(|s| s.to_string()),
    })
}

fn create(path: &Path) -> io::Result<Box<dyn Write>> {
    let file = BufWriter::new(File::create(path)?);
    if path.extension().is_some_and(|e| e == "gz") {
        Ok(Box::new(GzEncoder::new(file, Compression::default())))
    } else {
        Ok(Box::new(file))
    }
}

fn cmd_run(a: RunArgs) -> Result<bool, String> {
    let mut config = ExperimentConfig::new(a.n, a.f);
    config.kappa = a.kappa.unwrap_or(a.f + 1);
    config.runs = a.runs;
    config.seed = a.seed;
    config.scheduler = a.scheduler;
    config.max_views = a.max_views;
    config.delay = a
        .delay
        .iter()
        .map(|d| parse_delay(d))
        .collect::<Result<_, _>>()?;
    if a.adversary != "none" && !BEHAVIORS.contains(&a.adversary.as_str()) {
        return Err(format!("unknown adversary {:?}", a.adversary));
    }
    config = config.with_adversary(&a.adversary);
    if let Some(spec) = &a.byz {
        config.byzantine = parse_byz(spec, a.n)?;
    }
    config.validate().map_err(|e| e.to_string())?;

    let keys = match &a.keys {
        Some(p) => {
            let k = KeyMaterial::read_from(p).map_err(|e| e.to_string())?;
            if k.params().n != a.n || k.params().f != a.f {
                return Err(format!(
                    "{} holds keys for n = {}, f = {}",
                    p.display(),
                    k.params().n,
                    k.params().f
                ));
            }
            Some(k)
        }
        None => None,
    };

    let report = match &a.trace {
        Some(path) => {
            let traces = run_traces(&config, keys.as_ref(), true).map_err(|e| e.to_string())?;
            let mut w = create(path).map_err(|e| e.to_string())?;
            for (seed, t) in &traces {
                writeln!(w, "{{\"kind\":\"run\",\"seed\":{seed}}}").map_err(|e| e.to_string())?;
                t.write_jsonl(&mut w).map_err(|e| e.to_string())?;
            }
            w.flush().map_err(|e| e.to_string())?;
            let mut report = report_from_traces(&config, &traces);
            if a.baseline.is_some() {
                let full =
                    run_experiment(&config, keys.as_ref(), true).map_err(|e| e.to_string())?;
                report.baseline = full.baseline;
                report.violations = full.violations;
            }
            report
        }
        None => run_experiment(&config, keys.as_ref(), a.baseline.is_some())
            .map_err(|e| e.to_string())?,
    };

    report
        .write_table(io::stdout().lock())
        .map_err(|e| e.to_string())?;
    if let Some(out) = &a.out {
        std::fs::write(out, report.to_json()).map_err(|e| format!("{}: {e}", out.display()))?;
    }
    Ok(report.violations.is_empty())
}

fn cmd_stats(a: StatsArgs) -> Result<bool, String> {
    let kappas = if a.kappa.is_empty() {
        (1..=a.f + 1).collect()
    } else {
        a.kappa
    };
    if let Some(&k) = kappas.iter().find(|&&k| k == 0 || k > a.n) {
        return Err(format!("kappa {k} outside 1..={}", a.n));
    }
    let rows = committee_stats(a.n, a.f, &kappas, a.samples, a.seed).map_err(|e| e.to_string())?;
    println!(
        "{:>6} {:>24} {:>12} {:>12} {:>10} {:>6} {:>12}",
        "kappa", "exact", "exact~", "empirical", "sigma", "3σ", "(1/3)^κ"
    );
    for r in &rows {
        println!(
            "{:>6} {:>24} {:>12.6e} {:>12.6e} {:>10.2e} {:>6} {:>12.6e}",
            r.kappa, r.exact_ratio, r.exact, r.empirical, r.sigma, r.within_3_sigma, r.third_power
        );
    }
    if let Some(out) = &a.out {
        let json = serde_json::to_string_pretty(&rows).expect("rows serialize");
        std::fs::write(out, json + "\n").map_err(|e| format!("{}: {e}", out.display()))?;
    }
    Ok(true)
}

fn cmd_keygen(a: KeygenArgs) -> Result<bool, String> {
    let params = CryptoParams::new(a.n, a.f, a.seed).map_err(|e| e.to_string())?;
    let keys = deal(params).map_err(|e| e.to_string())?;
    keys.write_to(&a.out)
        .map_err(|e| format!("{}: {e}", a.out.display()))?;
    println!(
        "wrote keys for n={} t={} f={} to {}",
        a.n,
        params.t,
        a.f,
        a.out.display()
    );
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::CommitteeStats(a) => cmd_stats(a),
        Command::Keygen(a) => cmd_keygen(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
