//! `autonoc`: run the lifecycle tasks, inject failures, inspect the
//! topology and re-render reports.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use autonoc_core::agent::{RemoteConfig, ENV_LLM_URL};
use autonoc_core::failure::{
    classify_failure, detect_anomaly, inject_failure, localize_failure, DetectionTolerance,
    FailureSpec, Observation,
};
use autonoc_core::harness::{
    build_report, emit_report, read_results, run_trials_logged, BackendChoice, Mode, PolicySet,
    Report, TaskId,
};
use autonoc_core::optical::{
    build_backbone, compute_osnr, compute_power_profile, BackboneConfig, Network,
};
use autonoc_core::retriever::{ingest_corpus, load_corpus_dir, retrieve, shipped_corpus};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "autonoc",
    version,
    about = "Multi-domain optical network operated by cooperating agents"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run lifecycle tasks and write transcripts plus a report.
    Run(RunArgs),
    /// Inject a failure into the default network and diagnose it.
    InjectFailure {
        /// TOML failure spec, e.g. `kind = "fiber-aging"`, `span_id = "span3"`, `delta_db = 3.0`.
        #[arg(long)]
        spec: PathBuf,
    },
    /// Inspect the network.
    Topo {
        #[command(subcommand)]
        action: TopoAction,
    },
    /// Re-render the report of a previous run directory.
    Report { dir: PathBuf },
    /// Rank document chunks for a query.
    Retrieve {
        query: String,
        #[arg(long, default_value_t = 3)]
        k: usize,
        /// Directory of `.md`/`.txt` documents; the shipped corpus when absent.
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum TopoAction {
    /// Print the backbone, metro and fabric.
    Show {
        /// Backbone TOML replacing the default line.
        #[arg(long)]
        backbone: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    /// 1..4 or `all`.
    #[arg(long, default_value = "all")]
    task: String,
    #[arg(long, value_enum, default_value_t = ModeArg::All)]
    mode: ModeArg,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = BackendArg::Scripted)]
    backend: BackendArg,
    /// Scripted policy set; each mode's benchmark set when absent.
    #[arg(long, value_enum)]
    policies: Option<PoliciesArg>,
    /// Model name sent to the remote endpoint.
    #[arg(long, default_value = "default")]
    model: String,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Autolight,
    #[value(alias = "single_agent")]
    Single,
    #[value(alias = "naive_multi")]
    Naive,
    All,
}

impl ModeArg {
    fn modes(self) -> Vec<Mode> {
        match self {
            ModeArg::Autolight => vec![Mode::Autolight],
            ModeArg::Single => vec![Mode::SingleAgent],
            ModeArg::Naive => vec![Mode::NaiveMulti],
            ModeArg::All => Mode::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Scripted,
    Remote,
}

#[derive(Clone, Copy, ValueEnum)]
enum PoliciesArg {
    Cooperative,
    IdentityDropping,
    Overwhelmed,
}

impl From<PoliciesArg> for PolicySet {
    fn from(p: PoliciesArg) -> Self {
        match p {
            PoliciesArg::Cooperative => PolicySet::Cooperative,
            PoliciesArg::IdentityDropping => PolicySet::IdentityDropping,
            PoliciesArg::Overwhelmed => PolicySet::Overwhelmed,
        }
    }
}

fn tasks(arg: &str) -> Result<Vec<TaskId>> {
    if arg == "all" {
        return Ok(TaskId::ALL.to_vec());
    }
    arg.split(',')
        .map(|t| t.trim().parse::<TaskId>().map_err(anyhow::Error::msg))
        .collect()
}

fn run(args: RunArgs) -> Result<()> {
    let backend = match args.backend {
        BackendArg::Scripted => BackendChoice::Scripted(args.policies.map(Into::into)),
        BackendArg::Remote => {
            if args.policies.is_some() {
                bail!("--policies only applies to the scripted backend");
            }
            let cfg = RemoteConfig::from_env(&args.model)
                .with_context(|| format!("remote backend needs {ENV_LLM_URL} to be set"))?;
            BackendChoice::Remote(cfg)
        }
    };
    let transcripts = args.out.join("transcripts");
    fs::create_dir_all(&transcripts)
        .with_context(|| format!("creating {}", transcripts.display()))?;
    let mut results = Vec::new();
    for task in tasks(&args.task)? {
        for mode in args.mode.modes() {
            let runs = run_trials_logged(task, mode, args.trials, args.seed, &backend)?;
            for (r, log) in runs {
                let path = transcripts.join(format!(
                    "{}-{}-{}.jsonl",
                    task,
                    mode.as_str(),
                    r.trial_index
                ));
                let file = fs::File::create(&path)
                    .with_context(|| format!("writing {}", path.display()))?;
                log.write_jsonl(BufWriter::new(file))?;
                results.push(r);
            }
            let done = results
                .iter()
                .filter(|r| r.task == task && r.mode == mode && r.completed)
                .count();
            eprintln!("{task} {:<12} {done}/{}", mode.as_str(), args.trials);
        }
    }
    let report = emit_report(&results, &args.out)?;
    print_report(&report);
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cell(rate: Option<f64>) -> String {
    rate.map_or("-".into(), |r| format!("{:.0}%", r * 100.0))
}

fn print_report(report: &Report) {
    println!(
        "{:<8} {:>10} {:>13} {:>12}",
        "task", "autolight", "single_agent", "naive_multi"
    );
    for row in &report.comparison {
        println!(
            "{:<8} {:>10} {:>13} {:>12}",
            row.task,
            cell(row.autolight),
            cell(row.single_agent),
            cell(row.naive_multi)
        );
    }
    let h = &report.headline;
    println!(
        "headline: autolight {}, single agent {}, improvement {}",
        h.autolight_completion, h.single_agent_completion, h.improvement
    );
    for c in &report.l4_checklist.criteria {
        println!(
            "  {:<18} {} evidence trial(s)",
            c.criterion,
            c.evidence.len()
        );
    }
}

fn inject(spec_path: &Path) -> Result<()> {
    let text = fs::read_to_string(spec_path)
        .with_context(|| format!("reading {}", spec_path.display()))?;
    let spec = FailureSpec::from_toml(&text)?;
    let base = Network::default_network();
    let failed = inject_failure(&base, &spec)?;
    let tol = DetectionTolerance::default();
    let obs = Observation::of_network(&failed);
    let anomaly = detect_anomaly(&obs, &Observation::of_network(&base), &tol)?;
    let class = classify_failure(anomaly.as_ref(), &obs.links, tol.quality_db);
    let located = anomaly
        .as_ref()
        .map(|a| localize_failure(a, &failed.backbone));
    let mut errors = Vec::new();
    if let Err(e) = &class {
        errors.push(format!("classify: {e}"));
    }
    if let Some(Err(e)) = &located {
        errors.push(format!("localize: {e}"));
    }
    let out = json!({
        "spec": spec,
        "anomaly": anomaly,
        "class": class.as_ref().ok().map(|c| c.label),
        "localized": located.and_then(Result::ok),
        "errors": errors,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn topo_show(backbone: Option<&Path>, as_json: bool) -> Result<()> {
    let mut net = Network::default_network();
    if let Some(p) = backbone {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        net.backbone = build_backbone(&BackboneConfig::from_toml(&text)?)?;
    }
    if as_json {
        println!("{}", serde_json::to_string_pretty(&net)?);
        return Ok(());
    }
    let bb = &net.backbone;
    println!(
        "backbone: {} spans, {} amplifiers, {} channels",
        bb.spans.len(),
        bb.amplifiers.len(),
        bb.channels.len()
    );
    for s in &bb.spans {
        println!(
            "  {:<8} {:<11} {:>6.1} km  {:>5.2} dB",
            s.id,
            s.domain.to_string(),
            s.length_km,
            s.loss_db()
        );
    }
    for m in compute_power_profile(bb) {
        let a = bb
            .amplifier(m.element_id.as_str())
            .expect("reading names an amplifier");
        println!(
            "  {:<8} {:<11} gain {:>5.2} dB  nf {:.1} dB  {:<6} {:>7.2} dBm",
            a.id,
            a.domain.to_string(),
            a.gain_db,
            a.nf_db,
            format!("{:?}", m.port).to_lowercase(),
            m.total_power_dbm
        );
    }
    for t in &bb.transponders {
        let osnr = t.channel.and_then(|c| compute_osnr(bb, c).ok());
        println!(
            "  {:<8} {:<11} ch {:<4} {:>4} Gbps  OSNR {}",
            t.id,
            t.domain.to_string(),
            t.channel.map_or("-".into(), |c| c.to_string()),
            t.rate_gbps.unwrap_or(0),
            osnr.map_or("-".into(), |o| format!("{o:.2} dB"))
        );
    }
    let m = &net.metro;
    println!(
        "metro {}: {} nodes, {} edges, {} wavelengths",
        m.name,
        m.node_count(),
        m.edges.len(),
        m.wavelengths
    );
    for e in &m.edges {
        println!(
            "  {} - {}  {:.0} km",
            m.nodes[e.a].name, m.nodes[e.b].name, e.length_km
        );
    }
    let f = &net.fabric;
    println!(
        "fabric: {} leaves x {} spines, {} servers, {} links",
        f.leaves,
        f.spines,
        f.servers.len(),
        f.links.len()
    );
    Ok(())
}

fn report(dir: &Path) -> Result<()> {
    let results = read_results(dir)
        .with_context(|| format!("reading {}", dir.join("report.json").display()))?;
    if results.is_empty() {
        bail!("{} holds no trial results", dir.display());
    }
    let report = emit_report(&results, dir)?;
    debug_assert_eq!(report, build_report(&results));
    print_report(&report);
    Ok(())
}

fn retrieve_cmd(query: &str, k: usize, corpus: Option<&Path>) -> Result<()> {
    if k == 0 {
        bail!("--k must be at least 1");
    }
    let docs = match corpus {
        Some(d) => load_corpus_dir(d)?,
        None => shipped_corpus(),
    };
    let index = ingest_corpus(&docs)?;
    for (rank, h) in retrieve(&index, query, k).iter().enumerate() {
        println!(
            "{}. {:.3}  {} / {}",
            rank + 1,
            h.score,
            h.chunk.doc_id,
            h.chunk.heading
        );
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::InjectFailure { spec } => inject(&spec),
        Command::Topo {
            action: TopoAction::Show { backbone, json },
        } => topo_show(backbone.as_deref(), json),
        Command::Report { dir } => report(&dir),
        Command::Retrieve { query, k, corpus } => retrieve_cmd(&query, k, corpus.as_deref()),
    }
}
