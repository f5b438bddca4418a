//! Command-line entry point wiring all modules together.
//!
//! Exit codes: 0 success, 1 verification findings or replay divergence,
//! 2 usage errors, 3 runtime failures.

use crate::audit;
use crate::backend::ExternalEndpointConfig;
use crate::benchmark::{self, TaskExample, TaskLabel, UserWindow};
use crate::engine::{self, EngineConfig};
use crate::hash::{derive_rng_seed, fnv1a64};
use crate::persona::{self, DerivationMode};
use crate::proposer::ProposalSource;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "ledgersim",
    version,
    about = "Rule-grounded synthetic transaction stream generator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Backend {
    Mock,
    External,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TaskKind {
    Illiquidity,
    Theft,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DeriveMode {
    Heuristic,
    External,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a corpus and write a run directory.
    Generate(GenerateArgs),
    /// Re-derive every user's final state from the audit log.
    Replay {
        #[arg(long)]
        run: PathBuf,
    },
    /// Check hash chains, export consistency, and invariant satisfaction.
    Verify {
        #[arg(long)]
        run: PathBuf,
    },
    /// Build a benchmark task file from a run.
    BuildTask(BuildTaskArgs),
    /// Encode a task file into dense feature rows.
    Encode(EncodeArgs),
    /// Emit corpus statistics tables.
    Stats {
        #[arg(long)]
        run: PathBuf,
        /// Directory for CSV tables; defaults to the run directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Derive financial profiles for bare personas.
    DeriveProfiles(DeriveProfilesArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// personas.jsonl (augmented records, one JSON object per line).
    #[arg(long)]
    personas: PathBuf,
    /// Engine config JSON; flags below override individual keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Parent directory for the run (named by config hash + seed).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "mock")]
    backend: Backend,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    days: Option<u32>,
    /// Simulate exactly this many users, cloning and re-deriving profiles
    /// beyond what the personas file provides.
    #[arg(long)]
    users: Option<usize>,
    /// Config preset: default, stressed, or affluent.
    #[arg(long)]
    preset: Option<String>,
    /// Log external request/response bodies (credentials redacted).
    #[arg(long)]
    log_llm: bool,
}

#[derive(Args)]
struct BuildTaskArgs {
    #[arg(value_enum)]
    task: TaskKind,
    #[arg(long)]
    run: PathBuf,
    #[arg(long, default_value_t = 3)]
    n_months: u32,
    /// Days after the window end within which illiquidity counts positive;
    /// omit for "any time after".
    #[arg(long)]
    horizon_days: Option<i64>,
    #[arg(long, default_value_t = 30)]
    stride_days: i64,
    /// Injection attempts for the theft task.
    #[arg(long, default_value_t = 100)]
    injections: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Output task.jsonl; defaults inside the run directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EncodeArgs {
    /// task.jsonl produced by build-task.
    #[arg(long)]
    task: PathBuf,
    #[arg(long, default_value_t = 50)]
    vocab_threshold: u64,
    #[arg(long, default_value_t = 0.8)]
    train_ratio: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory; defaults next to the task file.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct DeriveProfilesArgs {
    #[arg(long)]
    personas: PathBuf,
    #[arg(long, value_enum, default_value = "heuristic")]
    mode: DeriveMode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Endpoint config JSON for external mode.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output augmented personas.jsonl; defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Runs the CLI; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            3
        }
    }
}

fn dispatch(command: Command) -> Result<i32, Box<dyn std::error::Error>> {
    match command {
        Command::Generate(args) => generate(args),
        Command::Replay { run } => replay(&run),
        Command::Verify { run } => verify(&run),
        Command::BuildTask(args) => build_task(args),
        Command::Encode(args) => encode(args),
        Command::Stats { run, out } => stats(&run, out.as_deref()),
        Command::DeriveProfiles(args) => derive_profiles(args),
    }
}

fn load_config(
    path: Option<&Path>,
    preset: Option<&str>,
) -> Result<EngineConfig, Box<dyn std::error::Error>> {
    let mut config = match preset {
        Some(name) => EngineConfig::preset(name)?,
        None => EngineConfig::default(),
    };
    if let Some(path) = path {
        let text = std::fs::read_to_string(path)?;
        config = serde_json::from_str(&text)?;
        if let Some(name) = preset {
            // CLI preset wins over the file's baseline knobs.
            let preset_config = EngineConfig::preset(name)?;
            config.rules.policy = preset_config.rules.policy;
            config.mock = preset_config.mock;
        }
    }
    Ok(config)
}

fn generate(args: GenerateArgs) -> Result<i32, Box<dyn std::error::Error>> {
    let mut config = load_config(args.config.as_deref(), args.preset.as_deref())?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(days) = args.days {
        config.max_days = days;
    }
    if args.log_llm {
        if let Some(backend) = config.backend.as_mut() {
            backend.log_bodies = true;
        }
    }
    config.validate()?;

    let mut personas = persona::load_personas(&args.personas)?;
    if let Some(target) = args.users {
        personas = persona::extend_personas(&personas, target, config.seed);
    }
    if personas.is_empty() {
        eprintln!("no personas to simulate");
        return Ok(2);
    }

    let source = match args.backend {
        Backend::Mock => ProposalSource::mock_with(config.mock.clone()),
        Backend::External => {
            let endpoint = config
                .backend
                .clone()
                .ok_or("external backend requested but config has no `backend` section")?;
            ProposalSource::External(crate::proposer::ExternalProposer::from_config(endpoint)?)
        }
    };

    let (manifest, run_dir) =
        engine::run_corpus(&personas, &config, &source, args.jobs, &args.out)?;
    println!(
        "run {}: {} users, {} events ({} exported), {} illiquid, {:.2}s",
        run_dir.display(),
        manifest.user_count,
        manifest.total_events,
        manifest.total_exported_events,
        manifest.illiquid_users,
        manifest.elapsed_secs
    );
    Ok(0)
}

fn replay(run: &Path) -> Result<i32, Box<dyn std::error::Error>> {
    let loaded = engine::load_run(run)?;
    let policy = &loaded.manifest.config.rules.policy;
    let mut divergences = 0;
    for (user_id, records) in &loaded.audit_by_user {
        let Some(initial) = loaded.initial_states.get(user_id) else {
            println!("{user_id}: missing initial state");
            divergences += 1;
            continue;
        };
        match audit::replay(records, initial, policy) {
            Ok(state) => {
                let final_snapshot = loaded
                    .snapshots
                    .iter()
                    .rev()
                    .find(|s| s.state.user_id == *user_id);
                match final_snapshot {
                    Some(snap)
                        if crate::ledger::state_hash(&snap.state)
                            == crate::ledger::state_hash(&state) =>
                    {
                        println!("{user_id}: ok ({} records)", records.len());
                    }
                    Some(_) => {
                        println!("{user_id}: final state mismatch");
                        divergences += 1;
                    }
                    None => println!("{user_id}: ok (no snapshots)"),
                }
            }
            Err(e) => {
                println!("{user_id}: {e}");
                divergences += 1;
            }
        }
    }
    println!(
        "replayed {} users, {} divergences",
        loaded.audit_by_user.len(),
        divergences
    );
    Ok(if divergences == 0 { 0 } else { 1 })
}

fn verify(run: &Path) -> Result<i32, Box<dyn std::error::Error>> {
    let loaded = engine::load_run(run)?;
    let report = audit::verify(
        &loaded.audit_by_user,
        &loaded.events,
        &loaded.initial_states,
        &loaded.manifest.config.rules.policy,
    );
    println!(
        "verified {} users, {} transitions, {} exported events",
        report.users_checked, report.transitions_checked, report.exported_events_checked
    );
    for finding in &report.findings {
        println!(
            "finding [{}] {}: {}",
            finding.category, finding.user_id, finding.detail
        );
    }
    if report.is_clean() {
        println!("clean");
        Ok(0)
    } else {
        println!("{} finding(s)", report.findings.len());
        Ok(1)
    }
}

fn write_task_file(path: &Path, examples: &[TaskExample]) -> std::io::Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    for example in examples {
        writeln!(file, "{}", serde_json::to_string(example).unwrap())?;
    }
    file.flush()
}

fn build_task(args: BuildTaskArgs) -> Result<i32, Box<dyn std::error::Error>> {
    let loaded = engine::load_run(&args.run)?;
    let seed = args.seed.unwrap_or(loaded.manifest.seed);
    let by_user = benchmark::events_by_user(&loaded.events);
    let start = loaded.manifest.config.start_date;
    let (examples, label) = match args.task {
        TaskKind::Illiquidity => {
            let (examples, report) = benchmark::build_illiquidity_examples(
                &by_user,
                &loaded.manifest.users,
                start,
                args.n_months,
                args.horizon_days,
                args.stride_days,
            )?;
            println!(
                "illiquidity: {} examples, {} positives, {} users skipped, {} windows excluded",
                report.examples,
                report.positives,
                report.users_skipped_short,
                report.windows_excluded_overlap
            );
            (examples, "illiquidity")
        }
        TaskKind::Theft => {
            let users: Vec<&String> = by_user.keys().collect();
            if users.len() < 2 {
                return Err("identity theft needs at least two users".into());
            }
            let mut rng = ChaCha12Rng::from_seed(derive_rng_seed(seed, 0x7eef7));
            let mut examples = Vec::new();
            let mut infeasible = 0usize;
            for k in 0..args.injections {
                let pi = k % users.len();
                let di = (k + 1 + k / users.len()) % users.len();
                let di = if di == pi { (di + 1) % users.len() } else { di };
                let primary =
                    UserWindow::slice(users[pi], &by_user[users[pi]], start, args.n_months);
                let donor = UserWindow::slice(users[di], &by_user[users[di]], start, args.n_months);
                match benchmark::inject_identity_theft(&primary, &donor, args.n_months, k, &mut rng)
                {
                    Ok(example) => examples.push(example),
                    Err(benchmark::BenchmarkError::InjectionInfeasible) => infeasible += 1,
                    Err(e) => return Err(e.into()),
                }
            }
            let event_positives: usize = examples
                .iter()
                .map(|e| match &e.label {
                    TaskLabel::IdentityTheft { labels } => labels.iter().filter(|b| **b).count(),
                    _ => 0,
                })
                .sum();
            let total_events: usize = examples.iter().map(|e| e.events.len()).sum();
            println!(
                "theft: {} examples ({} infeasible), event-level positive rate {:.2}%",
                examples.len(),
                infeasible,
                100.0 * event_positives as f64 / total_events.max(1) as f64
            );
            (examples, "theft")
        }
    };
    let out = args.out.unwrap_or_else(|| {
        args.run
            .join(format!("task-{label}-n{}.jsonl", args.n_months))
    });
    write_task_file(&out, &examples)?;
    println!("wrote {} examples to {}", examples.len(), out.display());
    Ok(0)
}

fn read_task_file(path: &Path) -> Result<Vec<TaskExample>, Box<dyn std::error::Error>> {
    let text = std::fs::read_to_string(path)?;
    let mut examples = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        examples.push(serde_json::from_str(line)?);
    }
    Ok(examples)
}

fn encode(args: EncodeArgs) -> Result<i32, Box<dyn std::error::Error>> {
    let examples = read_task_file(&args.task)?;
    if examples.is_empty() {
        return Err("task file has no examples".into());
    }
    let ratios = [
        ("train", args.train_ratio),
        ("test", 1.0 - args.train_ratio),
    ];
    let splits = benchmark::split(examples, &ratios, args.seed)?;
    let train_events: Vec<crate::ledger::ExportEvent> = splits[0]
        .examples
        .iter()
        .flat_map(|e| e.events.iter().cloned())
        .collect();
    let vocab = benchmark::build_vocab(&train_events, args.vocab_threshold);

    let out_dir = args
        .out_dir
        .unwrap_or_else(|| args.task.parent().unwrap_or(Path::new(".")).to_path_buf());
    std::fs::create_dir_all(&out_dir)?;
    let header = serde_json::json!({
        "vocab_threshold": vocab.threshold,
        "name_dims": vocab.name_dims(),
        "type_dims": vocab.type_dims(),
        "total_dims": vocab.total_dims(),
        "columns": "example_id,event_index,label,<name one-hot block>,<type one-hot block>,card_present,sgn_log_amount",
        "splits": splits.iter().map(|s| serde_json::json!({
            "name": s.name,
            "examples": s.examples.len(),
            "users": s.user_ids.len(),
            "positive_rate": s.positive_rate,
        })).collect::<Vec<_>>(),
    });
    std::fs::write(
        out_dir.join("features-header.json"),
        serde_json::to_string_pretty(&header)?,
    )?;
    std::fs::write(
        out_dir.join("vocab.json"),
        serde_json::to_string_pretty(&vocab)?,
    )?;

    for part in &splits {
        let path = out_dir.join(format!("features-{}.csv", part.name));
        let mut file = std::io::BufWriter::new(std::fs::File::create(&path)?);
        for example in &part.examples {
            for (i, event) in example.events.iter().enumerate() {
                let label = match &example.label {
                    TaskLabel::Illiquidity { label } => *label as u8,
                    TaskLabel::IdentityTheft { labels } => labels[i] as u8,
                };
                let dense = benchmark::encode_event(event, &vocab).to_dense();
                let row: Vec<String> = dense.iter().map(|v| format!("{v}")).collect();
                writeln!(
                    file,
                    "{},{},{},{}",
                    example.example_id,
                    i,
                    label,
                    row.join(",")
                )?;
            }
        }
        file.flush()?;
        println!(
            "{}: {} examples, positive rate {:.4}",
            path.display(),
            part.examples.len(),
            part.positive_rate
        );
    }
    println!(
        "dims: {} names + {} types + 2 = {}",
        vocab.name_dims(),
        vocab.type_dims(),
        vocab.total_dims()
    );
    Ok(0)
}

fn stats(run: &Path, out: Option<&Path>) -> Result<i32, Box<dyn std::error::Error>> {
    let loaded = engine::load_run(run)?;
    let out_dir = out.unwrap_or(run);
    std::fs::create_dir_all(out_dir)?;
    for key in crate::analytics::GROUP_KEYS {
        let table = crate::analytics::group_stats(&loaded.events, &loaded.personas, key)?;
        std::fs::write(out_dir.join(format!("stats-{key}.csv")), table.to_csv())?;
    }
    let report = crate::analytics::summary(&loaded.events, &loaded.manifest.users, 50);
    std::fs::write(
        out_dir.join("stats-distributions.csv"),
        report.distributions_csv(),
    )?;
    print!("{}", report.render_text());
    Ok(0)
}

fn derive_profiles(args: DeriveProfilesArgs) -> Result<i32, Box<dyn std::error::Error>> {
    let records = persona::load_persona_records(&args.personas)?;
    let external = match args.mode {
        DeriveMode::Heuristic => None,
        DeriveMode::External => {
            let path = args
                .config
                .as_ref()
                .ok_or("external mode needs --config with an endpoint section")?;
            let endpoint: ExternalEndpointConfig =
                serde_json::from_str(&std::fs::read_to_string(path)?)?;
            let transport = crate::backend::HttpChatTransport::new(endpoint.clone())?;
            Some((endpoint, transport))
        }
    };
    let mut out_lines = Vec::new();
    for (idx, mut record) in records.into_iter().enumerate() {
        if record.user_financial_profile.is_none() {
            let mode = match &external {
                None => DerivationMode::Heuristic,
                Some((endpoint, transport)) => DerivationMode::External(endpoint, transport),
            };
            let profile = persona::derive_financial_profile(
                &record.user_persona,
                mode,
                args.seed ^ fnv1a64(idx.to_string().as_bytes()),
            )?;
            record.user_financial_profile = Some(profile);
        }
        if record.user_id.is_none() {
            record.user_id = Some(persona::assign_user_id(idx, &record));
        }
        out_lines.push(serde_json::to_string(&record)?);
    }
    let body = out_lines.join("\n") + "\n";
    match args.out {
        Some(path) => {
            std::fs::write(&path, body)?;
            println!(
                "wrote {} augmented personas to {}",
                out_lines.len(),
                path.display()
            );
        }
        None => print!("{body}"),
    }
    Ok(0)
}
