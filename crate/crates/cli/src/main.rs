use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ffdn::engine::{run, RunOptions};
use ffdn::experiments::{
    prepare_run, random_grid, run_sweep, trace_seed, validate_robustness, write_results_csv,
    write_runs_csv, SweepSpec,
};
use ffdn::model::{generate_catalog, generate_trace, read_trace, write_trace, Scenario};
use ffdn::policies::MethodKind;

#[derive(Parser)]
#[command(
    name = "ffdn",
    version,
    about = "Fog delivery network streaming simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate workload trace files.
    GenTrace(GenTraceArgs),
    /// Run one method on one trace.
    Run(RunArgs),
    /// Run a sweep file and write the results CSV.
    Sweep(SweepArgs),
    /// Compare analytic robustness with Monte Carlo estimates.
    Validate(ValidateArgs),
    /// Print the built-in scenario as TOML.
    DefaultScenario,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario TOML file; the built-in default scenario when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Shift on-demand estimates by the local worker backlog.
    #[arg(long)]
    queue_aware: bool,
    /// Decide each segment one GOP before its deadline.
    #[arg(long)]
    just_in_time: bool,
}

impl ScenarioArgs {
    fn load(&self) -> Result<Scenario> {
        let mut s = match &self.scenario {
            Some(p) => load_scenario(p)?,
            None => Scenario::default(),
        };
        s.flags.queue_aware |= self.queue_aware;
        s.flags.just_in_time |= self.just_in_time;
        Ok(s)
    }
}

#[derive(Args)]
struct GenTraceArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    trace_count: u32,
    /// Segment budget per trace, overriding the scenario.
    #[arg(long)]
    segments: Option<u32>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Trace file; generated from the scenario and seed when omitted.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, default_value = "robust-ffdn")]
    method: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for summary.json, outcomes.csv and events.jsonl.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Record the per-event log (written to the output directory).
    #[arg(long)]
    event_log: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep TOML file.
    spec: PathBuf,
    /// Scenario TOML file, overriding the one named in the sweep file.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    queue_aware: bool,
    #[arg(long)]
    just_in_time: bool,
    #[arg(long)]
    trace_count: Option<u32>,
    /// Base seed, overriding the sweep file.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, default_value_t = 100)]
    cells: usize,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fail when the largest deviation exceeds this.
    #[arg(long, default_value_t = 0.01)]
    tolerance: f64,
    /// Write the full report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Scenario::from_toml(&text).with_context(|| format!("parsing {}", path.display()))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn gen_trace(args: GenTraceArgs) -> Result<()> {
    let mut scenario = args.scenario.load()?;
    if let Some(n) = args.segments {
        scenario.workload.target_segments = Some(n);
    }
    let catalog = generate_catalog(&scenario.catalog)?;
    let topology = scenario.topology()?;
    for k in 0..args.trace_count {
        let trace = generate_trace(
            &scenario.workload,
            &catalog,
            &topology,
            trace_seed(args.seed, k),
        )?;
        let name = format!("trace-{k:03}.csv");
        let mut w = create(&args.out, &name)?;
        write_trace(&trace, &topology, &mut w)?;
        w.flush()?;
        println!(
            "{}: {} requests, {} segments",
            args.out.join(&name).display(),
            trace.requests.len(),
            trace.total_segments
        );
    }
    Ok(())
}

fn run_one(args: RunArgs) -> Result<()> {
    let method: MethodKind = args.method.parse()?;
    let scenario = args.scenario.load()?;
    let (world, mut trace) = prepare_run(&scenario, args.seed)?;
    if let Some(p) = &args.trace {
        let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
        trace = read_trace(f, &world.topology, &world.catalog)
            .with_context(|| format!("reading {}", p.display()))?;
    }
    let out = run(
        &world,
        &trace,
        method,
        args.seed,
        RunOptions {
            event_log: args.event_log,
        },
    )?;
    let summary = serde_json::to_string_pretty(&out.summary)?;
    println!("{summary}");
    if let Some(dir) = &args.out {
        let mut w = create(dir, "summary.json")?;
        writeln!(w, "{summary}")?;
        w.flush()?;
        let mut csv = csv::Writer::from_writer(create(dir, "outcomes.csv")?);
        csv.write_record([
            "request_id",
            "video_id",
            "segment_index",
            "choice",
            "source",
            "delivered_at",
            "deadline",
            "missed",
        ])?;
        for o in &out.outcomes {
            let (choice, source) = match o.choice {
                ffdn::policies::DeliveryChoice::LocalCache => ("local_cache", String::new()),
                ffdn::policies::DeliveryChoice::OnDemand => ("on_demand", String::new()),
                ffdn::policies::DeliveryChoice::RemoteFetch { source } => {
                    ("remote_fetch", world.topology.node(source).name.clone())
                }
            };
            csv.write_record([
                o.request_id.to_string(),
                o.video_id.to_string(),
                o.segment_index.to_string(),
                choice.to_string(),
                source,
                o.delivered_at.to_string(),
                o.deadline.to_string(),
                o.missed.to_string(),
            ])?;
        }
        csv.flush()?;
        if args.event_log {
            let mut w = create(dir, "events.jsonl")?;
            out.write_event_log(&mut w)?;
            w.flush()?;
        }
    } else if args.event_log {
        out.write_event_log(std::io::stdout().lock())?;
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let text = fs::read_to_string(&args.spec)
        .with_context(|| format!("reading {}", args.spec.display()))?;
    let mut spec =
        SweepSpec::from_toml(&text).with_context(|| format!("parsing {}", args.spec.display()))?;
    if let Some(n) = args.trace_count {
        spec.trace_count = n;
    }
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    let scenario_path = match (&args.scenario, &spec.scenario) {
        (Some(p), _) => Some(p.clone()),
        (None, Some(p)) => Some(args.spec.parent().unwrap_or(Path::new(".")).join(p)),
        (None, None) => None,
    };
    let mut scenario = match scenario_path {
        Some(p) => load_scenario(&p)?,
        None => Scenario::default(),
    };
    scenario.flags.queue_aware |= args.queue_aware;
    scenario.flags.just_in_time |= args.just_in_time;
    let out = run_sweep(&spec, &scenario)?;
    let mut w = create(&args.out, "results.csv")?;
    write_results_csv(&out.aggregates, &mut w)?;
    w.flush()?;
    let mut w = create(&args.out, "runs.csv")?;
    write_runs_csv(&out.runs, &mut w)?;
    w.flush()?;
    for a in &out.aggregates {
        let ci = a
            .ci_half_width
            .map(|c| format!(" ± {c:.4}"))
            .unwrap_or_default();
        println!(
            "{:>8} {:<20} {:.4}{ci}",
            a.point, a.method, a.mean_miss_rate
        );
    }
    Ok(())
}

fn validate(args: ValidateArgs) -> Result<()> {
    let grid = random_grid(args.cells, args.seed);
    let report = validate_robustness(&grid, args.samples, args.seed)?;
    if let Some(p) = &args.out {
        let mut w =
            BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?);
        serde_json::to_writer_pretty(&mut w, &report)?;
        w.flush()?;
    }
    println!(
        "{} cells, {} samples each, max deviation {:.5}",
        report.cells.len(),
        report.mc_samples,
        report.max_deviation
    );
    if report.max_deviation > args.tolerance {
        bail!(
            "max deviation {} exceeds tolerance {}",
            report.max_deviation,
            args.tolerance
        );
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenTrace(a) => gen_trace(a),
        Command::Run(a) => run_one(a),
        Command::Sweep(a) => sweep(a),
        Command::Validate(a) => validate(a),
        Command::DefaultScenario => {
            print!("{}", Scenario::default().to_toml());
            Ok(())
        }
    }
}
