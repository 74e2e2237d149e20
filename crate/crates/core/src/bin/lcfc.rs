use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info};

use lcfc::config::ConfigFile;
use lcfc::error::{Error, Result};
use lcfc::experiment::{self, BenchConfig, ExperimentConfig, BENCH_CSV_HEADER};
use lcfc::federation::{self, Transcript};
use lcfc::privacy::{self, AuditConfig};

#[derive(Parser)]
#[command(name = "lcfc", version, about = "Federated clustering on a securely reconstructed distance matrix")]
struct Cli {
    /// Worker threads; 1 is the bit-exact reference mode.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reconstruct the distance matrix, cluster it, and score the result.
    Run(RunArgs),
    /// Time the protocol phases over a grid of sample counts and segment counts.
    Bench(BenchArgs),
    /// Enumerate what colluding clients can learn from their shares.
    PrivacyAudit(AuditArgs),
    /// Reconstruct the distance matrix only.
    Reconstruct(ReconstructArgs),
    /// Decode a saved transcript.
    Replay(ReplayArgs),
}

/// Dataset, scheme and partition flags shared by `run` and `reconstruct`.
#[derive(Args, Default)]
struct SetupArgs {
    /// Flat key = value file; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// iris, blobs, rings, or a CSV path.
    #[arg(long)]
    dataset: Option<String>,
    /// Label column of a CSV: an index, last, or none.
    #[arg(long)]
    label_col: Option<String>,
    /// none, minmax (to [-1, 1]) or unit (per-sample L2).
    #[arg(long)]
    normalize: Option<String>,
    #[arg(long)]
    subsample: Option<usize>,
    #[arg(long)]
    synth_n: Option<usize>,
    #[arg(long)]
    synth_k: Option<usize>,
    #[arg(long)]
    synth_noise: Option<f64>,
    /// Field modulus.
    #[arg(long)]
    p: Option<u64>,
    /// Quantization exponent.
    #[arg(long)]
    q: Option<u32>,
    /// Number of clients.
    #[arg(short, long)]
    m: Option<usize>,
    /// Data segments per sample.
    #[arg(short, long)]
    l: Option<usize>,
    /// Noise segments per sample.
    #[arg(short, long)]
    t: Option<usize>,
    /// Comma-separated alpha nodes.
    #[arg(long)]
    alpha: Option<String>,
    /// Comma-separated beta nodes.
    #[arg(long)]
    beta: Option<String>,
    /// iid, skew:P or dirichlet:ALPHA.
    #[arg(long)]
    partition: Option<String>,
    /// Falls back to OMNI_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// seeded or entropy.
    #[arg(long)]
    noise: Option<String>,
    #[arg(long, value_parser = ["q", "2q"])]
    dequant_exponent: Option<String>,
    /// Write the reconstructed matrix (.csv or .bin).
    #[arg(long)]
    dump_matrix: Option<PathBuf>,
    #[arg(long)]
    save_transcript: Option<PathBuf>,
    /// Decode this transcript instead of running the protocol.
    #[arg(long)]
    replay: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    setup: SetupArgs,
    /// Comma-separated: km, kmed, fcm, sc, nmf, dbscan, hc, or all.
    #[arg(long)]
    backends: Option<String>,
    #[arg(short, long)]
    k: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated label-skew levels to run in turn.
    #[arg(long)]
    sweep_p: Option<String>,
    /// Also tabulate reconstruction RMSE over m in 3..=15, l and t in 1..=4.
    #[arg(long)]
    sweep_feasibility: bool,
    /// Also cluster the exact distance matrix and compare labels.
    #[arg(long)]
    compare_oracle: bool,
    /// Spectral bandwidth: median, fixed:SIGMA2 or knn:K.
    #[arg(long)]
    sigma: Option<String>,
    /// DBSCAN radius on squared distances.
    #[arg(long)]
    eps: Option<f64>,
    /// Square --eps before use.
    #[arg(long)]
    eps_is_euclidean: bool,
    #[arg(long)]
    min_pts: Option<usize>,
    /// single, complete, average or ward.
    #[arg(long)]
    linkage: Option<String>,
    #[arg(long)]
    fuzzifier: Option<f64>,
    /// Applies to every backend.
    #[arg(long)]
    max_iter: Option<usize>,
    /// Applies to every backend.
    #[arg(long)]
    n_init: Option<usize>,
    /// BACKEND.KEY=VALUE, repeatable.
    #[arg(long = "set", value_name = "BACKEND.KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Args)]
struct ReconstructArgs {
    #[command(flatten)]
    setup: SetupArgs,
}

#[derive(Args)]
struct ReplayArgs {
    transcript: PathBuf,
    /// Drop this client's report before decoding; repeatable.
    #[arg(long)]
    drop_client: Vec<usize>,
    #[arg(long, value_parser = ["q", "2q"], default_value = "2q")]
    dequant_exponent: String,
    #[arg(long)]
    dump_matrix: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated sample counts.
    #[arg(long, default_value = "2000")]
    n: String,
    /// Comma-separated segment counts.
    #[arg(long, default_value = "2,4,8")]
    l: String,
    #[arg(short, long, default_value_t = 2)]
    t: usize,
    #[arg(short, long, default_value_t = 19)]
    m: usize,
    #[arg(short, long, default_value_t = 64)]
    d: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    /// Write the table as CSV here as well.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long, default_value_t = privacy::DEFAULT_AUDIT_PRIME)]
    p: u64,
    #[arg(long, default_value_t = 1)]
    l: usize,
    #[arg(long, default_value_t = 1)]
    t: usize,
    /// Defaults to 2l + 2t - 1, at least 2.
    #[arg(long)]
    m: Option<usize>,
    /// Number of colluders, taken as the first clients.
    #[arg(long, default_value_t = 1)]
    colluders: usize,
    /// Explicit comma-separated colluding clients; overrides --colluders.
    #[arg(long)]
    colluder_set: Option<String>,
    #[arg(long, default_value_t = privacy::DEFAULT_BUDGET)]
    budget: u64,
    /// Run a chi-square test instead of failing when over budget.
    #[arg(long)]
    heuristic: bool,
    #[arg(long, default_value_t = 20_000)]
    samples: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the JSON report here as well as to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var("OMNI_SEED") {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| Error::Config(format!("OMNI_SEED must be an unsigned integer, got '{v}'"))),
        Err(_) => Ok(None),
    }
}

fn list<T: std::str::FromStr>(what: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::Config(format!("{what}: cannot parse '{s}'"))))
        .collect()
}

/// Defaults, then OMNI_SEED, then the config file, then flags.
fn experiment_config(setup: &SetupArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    if let Some(seed) = env_seed()? {
        cfg.seed = seed;
    }
    if let Some(path) = &setup.config {
        cfg.apply_file(&ConfigFile::load(path)?)?;
    }
    let s = |v: &Option<String>| v.clone();
    let pairs: [(&str, Option<String>); 20] = [
        ("dataset", s(&setup.dataset)),
        ("label_col", s(&setup.label_col)),
        ("normalize", s(&setup.normalize)),
        ("subsample", setup.subsample.map(|v| v.to_string())),
        ("synth_n", setup.synth_n.map(|v| v.to_string())),
        ("synth_k", setup.synth_k.map(|v| v.to_string())),
        ("synth_noise", setup.synth_noise.map(|v| v.to_string())),
        ("p", setup.p.map(|v| v.to_string())),
        ("q", setup.q.map(|v| v.to_string())),
        ("m", setup.m.map(|v| v.to_string())),
        ("l", setup.l.map(|v| v.to_string())),
        ("t", setup.t.map(|v| v.to_string())),
        ("alpha", s(&setup.alpha)),
        ("beta", s(&setup.beta)),
        ("partition", s(&setup.partition)),
        ("seed", setup.seed.map(|v| v.to_string())),
        ("noise", s(&setup.noise)),
        ("dequant", s(&setup.dequant_exponent)),
        ("dump_matrix", setup.dump_matrix.as_ref().map(|p| p.to_string_lossy().into_owned())),
        ("save_transcript", setup.save_transcript.as_ref().map(|p| p.to_string_lossy().into_owned())),
    ];
    for (key, value) in pairs {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    if let Some(p) = &setup.replay {
        cfg.set("replay", &p.to_string_lossy())?;
    }
    Ok(cfg)
}

fn run_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = experiment_config(&args.setup)?;
    if let Some(v) = &args.backends {
        cfg.set("backends", v)?;
    }
    if let Some(k) = args.k {
        cfg.set("k", &k.to_string())?;
    }
    if let Some(o) = &args.out {
        cfg.set("out", &o.to_string_lossy())?;
    }
    if let Some(v) = &args.sweep_p {
        cfg.set("sweep_p", v)?;
    }
    if args.sweep_feasibility {
        cfg.sweep_feasibility = true;
    }
    if args.compare_oracle {
        cfg.compare_oracle = true;
    }
    let scoped: [(&str, &str, Option<String>); 8] = [
        ("all", "max_iter", args.max_iter.map(|v| v.to_string())),
        ("all", "n_init", args.n_init.map(|v| v.to_string())),
        ("sc", "sigma", args.sigma.clone()),
        ("dbscan", "eps", args.eps.map(|v| v.to_string())),
        ("dbscan", "eps_is_euclidean", args.eps_is_euclidean.then(|| "true".to_string())),
        ("dbscan", "min_pts", args.min_pts.map(|v| v.to_string())),
        ("hc", "linkage", args.linkage.clone()),
        ("fcm", "fuzzifier", args.fuzzifier.map(|v| v.to_string())),
    ];
    for (section, key, value) in scoped {
        if let Some(v) = value {
            cfg.set_backend(section, key, &v)?;
        }
    }
    for s in &args.sets {
        let bad = || Error::Config(format!("--set expects BACKEND.KEY=VALUE, got '{s}'"));
        let (lhs, value) = s.split_once('=').ok_or_else(bad)?;
        let (section, key) = lhs.split_once('.').ok_or_else(bad)?;
        cfg.set_backend(section.trim(), key.trim(), value)?;
    }
    Ok(cfg)
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let cfg = run_config(args)?;
    let (record, timings) = experiment::run(&cfg)?;
    println!(
        "dataset {} (n = {}, d = {}), m = {}, l = {}, t = {}",
        record.dataset.name, record.dataset.n, record.dataset.d, record.scheme.m, record.scheme.l, record.scheme.t
    );
    let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
    for r in &record.runs {
        let part = r.partition.map_or_else(|| "replay".to_string(), |p| format!("{p:?}"));
        println!("{part}: rmse {:.3e}", r.rmse);
        for b in &r.backends {
            println!("  {:<7} kappa {}  nmi {}  clusters {}", b.backend.name(), fmt(b.kappa), fmt(b.nmi), b.clusters);
        }
    }
    if !record.feasibility.is_empty() {
        let feasible = record.feasibility.iter().filter(|c| c.feasible).count();
        println!("feasibility grid: {feasible} of {} cells decodable", record.feasibility.len());
    }
    info!("total {:.2} s", timings.total_s);
    println!("results in {}", cfg.out.display());
    Ok(())
}

fn cmd_reconstruct(args: &ReconstructArgs) -> Result<()> {
    let cfg = experiment_config(&args.setup)?;
    let (matrix, rmse, t) = experiment::reconstruct_only(&cfg)?;
    println!("n = {}, rmse vs exact {:.3e}", matrix.n(), rmse);
    println!(
        "encode {:.3} s, client distances {:.3} s, decode {:.3} s, total {:.3} s",
        t.encode_s, t.client_distance_s, t.decode_s, t.total_s
    );
    if let Some(p) = &cfg.dump_matrix {
        println!("matrix written to {}", p.display());
    }
    Ok(())
}

fn cmd_replay(args: &ReplayArgs) -> Result<()> {
    let mut transcript = Transcript::load(&args.transcript)?;
    for &c in &args.drop_client {
        transcript = transcript.without_report(c);
    }
    let scheme = transcript.scheme()?;
    let matrix = federation::replay_decode(&transcript, &scheme, args.dequant_exponent.parse()?)?;
    println!(
        "decoded n = {} from {} reports (m = {}, l = {}, t = {}, threshold {})",
        matrix.n(),
        transcript.reports().count(),
        scheme.m(),
        scheme.l(),
        scheme.t(),
        scheme.threshold()
    );
    if let Some(p) = &args.dump_matrix {
        matrix.dump(p)?;
        println!("matrix written to {}", p.display());
    }
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let cfg = BenchConfig {
        ns: list("n", &args.n)?,
        ls: list("l", &args.l)?,
        t: args.t,
        m: args.m,
        d: args.d,
        seed: args.seed.or(env_seed()?).unwrap_or(0),
        repeats: args.repeats,
        ..Default::default()
    };
    let rows = experiment::bench(&cfg)?;
    let mut table = format!("{BENCH_CSV_HEADER}\n");
    for r in &rows {
        table.push_str(&r.csv_line());
        table.push('\n');
    }
    print!("{table}");
    if let Some(p) = &args.out {
        std::fs::write(p, table)?;
    }
    Ok(())
}

fn cmd_audit(args: &AuditArgs) -> Result<()> {
    let m = args.m.unwrap_or_else(|| (2 * args.l + 2 * args.t).saturating_sub(1).max(2));
    let mut cfg = AuditConfig::new(args.p, args.l, args.t, m, args.colluders);
    if let Some(set) = &args.colluder_set {
        cfg.colluders = list("colluder_set", set)?;
    }
    cfg.budget = args.budget;
    cfg.heuristic = args.heuristic;
    cfg.heuristic_samples = args.samples;
    cfg.seed = args.seed.or(env_seed()?).unwrap_or(0);
    let report = privacy::audit(&cfg)?;
    let json = serde_json::to_string_pretty(&report)?;
    println!("{json}");
    if let Some(p) = &args.out {
        std::fs::write(p, json + "\n")?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            error!("cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Bench(a) => cmd_bench(a),
        Command::PrivacyAudit(a) => cmd_audit(a),
        Command::Reconstruct(a) => cmd_reconstruct(a),
        Command::Replay(a) => cmd_replay(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
