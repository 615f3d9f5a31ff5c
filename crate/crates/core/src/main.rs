use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use ising_moments::error::{Error, Result};
use ising_moments::fields::{learn_fields, schedule_fields, schedule_fields_practical};
use ising_moments::generate::{generate_model, GeneratorSpec, Topology};
use ising_moments::known_structure::learn_known_structure;
use ising_moments::model::IsingModel;
use ising_moments::moments::{build_moments, MomentTable};
use ising_moments::optimizer::{schedule_practical, schedule_theory, Overrides, Schedule, ScheduleMode, DEFAULT_ITERATIONS};
use ising_moments::pipeline::{manifest_path, run_pipeline, ExperimentConfig, RunManifest};
use ising_moments::sampling::{default_burn_in, default_thinning, sample_exact, sample_gibbs, Dataset, SamplerKind};
use ising_moments::screening::{learn_couplings, CouplingEstimate};
use ising_moments::structure::{compare_edges, threshold_edges, EdgeSet};
use ising_moments::verify::{format_table, run_suite};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  other error (I/O, invalid parameter, failed verification)
  2  input file violates its schema
  3  moment table lacks a required degree
  4  infeasible configuration
  5  theory-scale schedule not confirmed (pass --confirm-theory)";

#[derive(Parser)]
#[command(name = "ising-moments", version, about = "Learn Ising models from low-order moments", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a ground-truth model on a chosen topology.
    GenModel(GenModelArgs),
    /// Draw spin configurations from a model.
    Sample(SampleArgs),
    /// Empirical moment table from a sample file.
    Moments(MomentsArgs),
    /// Learn couplings from a moment table.
    Learn(LearnArgs),
    /// Threshold a coupling estimate into an edge list.
    Structure(StructureArgs),
    /// Re-fit magnetic fields with couplings and edges held fixed.
    Fields(FieldsArgs),
    /// Learn all parameters on a known edge set.
    Known(KnownArgs),
    /// Run numerical checks of the underlying bounds.
    Verify(VerifyArgs),
    /// Run a full experiment from a JSON config.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
#[command(after_help = EXIT_CODES)]
struct GenModelArgs {
    #[arg(long)]
    p: usize,
    #[arg(long, value_parser = parse_topology)]
    topology: Topology,
    #[arg(long)]
    gamma: f64,
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Degree for er (expected) and regular (exact) graphs.
    #[arg(long, default_value_t = 3)]
    degree: usize,
    /// Fixed coupling magnitude (random signs) instead of random magnitudes.
    #[arg(long)]
    coupling: Option<f64>,
    /// Fixed field on every node.
    #[arg(long)]
    field: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
#[command(after_help = EXIT_CODES)]
struct SampleArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value = "exact", value_parser = parse_sampler)]
    method: SamplerKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Gibbs sweeps discarded before the first sample (default 10 p).
    #[arg(long)]
    burn_in: Option<usize>,
    /// Gibbs sweeps between kept samples (default p).
    #[arg(long)]
    thinning: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
#[command(after_help = EXIT_CODES)]
struct MomentsArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    degree: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct ScheduleArgs {
    #[arg(long, default_value = "practical", value_parser = parse_mode)]
    mode: ScheduleMode,
    /// Taylor degree.
    #[arg(long)]
    d: Option<usize>,
    /// Iteration count.
    #[arg(long = "T")]
    t: Option<u64>,
    /// Step size.
    #[arg(long)]
    eta: Option<f64>,
    /// Target error (picks the default degree; required shape in theory mode).
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// Stop once the gradient ∞-norm stays below this for 10 iterations.
    #[arg(long)]
    early_stop: Option<f64>,
    /// Actually run a theory-mode schedule.
    #[arg(long)]
    confirm_theory: bool,
}

impl ScheduleArgs {
    fn overrides(&self, n: Option<u64>) -> Overrides {
        Overrides {
            d: self.d,
            t: self.t,
            eta: self.eta,
            n,
            epsilon: self.epsilon,
            delta: self.delta,
            early_stop: self.early_stop,
        }
    }
}

#[derive(Args)]
#[command(after_help = EXIT_CODES)]
struct LearnArgs {
    #[arg(long)]
    moments: PathBuf,
    #[arg(long)]
    gamma: f64,
    #[command(flatten)]
    schedule: ScheduleArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
#[command(after_help = EXIT_CODES)]
struct StructureArgs {
    #[arg(long)]
    estimate: PathBuf,
    #[arg(long)]
    alpha: f64,
    /// Ground-truth model to compare against.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
#[command(after_help = EXIT_CODES)]
struct FieldsArgs {
    #[arg(long)]
    estimate: PathBuf,
    #[arg(long)]
    edges: PathBuf,
    #[arg(long)]
    moments: PathBuf,
    /// Defaults to the estimate's radius.
    #[arg(long)]
    gamma: Option<f64>,
    /// Coupling error used in the reported bound and theory schedule.
    #[arg(long)]
    epsilon_couplings: Option<f64>,
    #[command(flatten)]
    schedule: ScheduleArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
#[command(after_help = EXIT_CODES)]
struct KnownArgs {
    #[arg(long)]
    moments: PathBuf,
    #[arg(long)]
    edges: PathBuf,
    #[arg(long)]
    gamma: f64,
    #[arg(long = "T", default_value_t = DEFAULT_ITERATIONS)]
    t: u64,
    /// Defaults to 2 gamma / (L sqrt T) with L = 2 sqrt(D+1) e^gamma.
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
#[command(after_help = EXIT_CODES)]
struct VerifyArgs {
    /// `all` or one of the check families.
    #[arg(long, default_value = "all")]
    suite: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the JSON reports here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
#[command(after_help = EXIT_CODES)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
}

fn parse_topology(s: &str) -> std::result::Result<Topology, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_sampler(s: &str) -> std::result::Result<SamplerKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_mode(s: &str) -> std::result::Result<ScheduleMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn confirm(sched: &Schedule, confirmed: bool) -> Result<()> {
    if sched.mode == ScheduleMode::Theory {
        eprintln!(
            "theory schedule: d = {}, T = {}, eta = {:e}, n = {}",
            sched.d,
            sched.t,
            sched.eta,
            sched.n.map(|n| n.to_string()).unwrap_or_default()
        );
        if !confirmed {
            return Err(Error::TheoryUnconfirmed {
                t: sched.t,
                n: sched.n.unwrap_or(0),
            });
        }
    }
    Ok(())
}

fn gen_model(a: GenModelArgs) -> Result<()> {
    let started = Instant::now();
    let spec = GeneratorSpec {
        p: a.p,
        topology: a.topology,
        gamma: a.gamma,
        alpha: a.alpha,
        seed: a.seed,
        degree: a.degree,
        coupling: a.coupling,
        field: a.field,
    };
    let mut manifest = RunManifest::new("gen-model", serde_json::to_value(&spec)?);
    manifest.seeds.insert("generator".into(), a.seed);
    let model = generate_model(&spec)?;
    manifest.write_output(&a.out, &model.to_json()?)?;
    manifest.finish(&manifest_path(&a.out), started)
}

fn sample(a: SampleArgs) -> Result<()> {
    let started = Instant::now();
    let mut manifest = RunManifest::new(
        "sample",
        json!({"n": a.n, "method": a.method.as_str(), "seed": a.seed, "burn_in": a.burn_in, "thinning": a.thinning}),
    );
    manifest.seeds.insert("sampler".into(), a.seed);
    let model = IsingModel::from_json(&manifest.read_input(&a.model)?)?;
    let p = model.p();
    let data = match a.method {
        SamplerKind::Exact => sample_exact(&model, a.n, a.seed)?,
        SamplerKind::Gibbs => sample_gibbs(
            &model,
            a.n,
            a.seed,
            a.burn_in.unwrap_or_else(|| default_burn_in(p)),
            a.thinning.unwrap_or_else(|| default_thinning(p)),
        )?,
    };
    manifest.write_output(&a.out, &data.to_csv()?)?;
    manifest.finish(&manifest_path(&a.out), started)
}

fn moments(a: MomentsArgs) -> Result<()> {
    let started = Instant::now();
    let mut manifest = RunManifest::new("moments", json!({"degree": a.degree}));
    let data = Dataset::from_csv(&manifest.read_input(&a.data)?)?;
    manifest.seeds.insert("sampler".into(), data.seed);
    let table = build_moments(&data, a.degree)?;
    manifest.write_output(&a.out, &table.to_json()?)?;
    manifest.finish(&manifest_path(&a.out), started)
}

fn read_table(manifest: &mut RunManifest, path: &Path) -> Result<MomentTable> {
    MomentTable::from_json(&manifest.read_input(path)?)
}

fn learn(a: LearnArgs) -> Result<()> {
    let started = Instant::now();
    let mut manifest = RunManifest::new("learn", json!({"gamma": a.gamma}));
    let table = read_table(&mut manifest, &a.moments)?;
    let p = table.p();
    let s = &a.schedule;
    let sched = match s.mode {
        ScheduleMode::Practical => schedule_practical(p, a.gamma, &s.overrides(None), table.n())?,
        ScheduleMode::Theory => {
            let eps = s.epsilon.ok_or_else(|| Error::invalid("theory mode needs --epsilon"))?;
            let delta = s.delta.ok_or_else(|| Error::invalid("theory mode needs --delta"))?;
            schedule_theory(p, a.gamma, eps, delta)?
        }
    };
    manifest.schedule = Some(sched.clone());
    confirm(&sched, s.confirm_theory)?;
    let est = learn_couplings(&table, &sched)?;
    manifest.write_output(&a.out, &est.to_json()?)?;
    manifest.finish(&manifest_path(&a.out), started)
}

fn structure(a: StructureArgs) -> Result<()> {
    let started = Instant::now();
    let mut manifest = RunManifest::new("structure", json!({"alpha": a.alpha}));
    let est = CouplingEstimate::from_json(&manifest.read_input(&a.estimate)?)?;
    let edges = threshold_edges(&est, a.alpha)?;
    if let Some(path) = &a.truth {
        let truth = IsingModel::from_json(&manifest.read_input(path)?)?;
        let cmp = compare_edges(&edges, &EdgeSet::from_model(&truth));
        println!("{}", serde_json::to_string(&cmp)?);
    }
    manifest.write_output(&a.out, &edges.to_json()?)?;
    manifest.finish(&manifest_path(&a.out), started)
}

fn fields(a: FieldsArgs) -> Result<()> {
    let started = Instant::now();
    let mut manifest = RunManifest::new("fields", json!({"gamma": a.gamma, "epsilon_couplings": a.epsilon_couplings}));
    let mut est = CouplingEstimate::from_json(&manifest.read_input(&a.estimate)?)?;
    let edges = EdgeSet::from_json(&manifest.read_input(&a.edges)?)?;
    let table = read_table(&mut manifest, &a.moments)?;
    let gamma = a.gamma.unwrap_or(est.schedule.gamma);
    let s = &a.schedule;
    let sched = match s.mode {
        ScheduleMode::Practical => schedule_fields_practical(gamma, &s.overrides(None), table.n())?,
        ScheduleMode::Theory => {
            let eps_h = s.epsilon.ok_or_else(|| Error::invalid("theory mode needs --epsilon"))?;
            let delta = s.delta.ok_or_else(|| Error::invalid("theory mode needs --delta"))?;
            let eps_c = a
                .epsilon_couplings
                .ok_or_else(|| Error::invalid("theory mode needs --epsilon-couplings"))?;
            schedule_fields(gamma, edges.max_degree(est.p), eps_c, eps_h, delta, est.p)?
        }
    };
    manifest.schedule = Some(sched.clone());
    confirm(&sched, s.confirm_theory)?;
    let fe = learn_fields(&est, &edges, &table, &sched, a.epsilon_couplings)?;
    est.fields_stage2 = Some(fe);
    manifest.write_output(&a.out, &est.to_json()?)?;
    manifest.finish(&manifest_path(&a.out), started)
}

fn known(a: KnownArgs) -> Result<()> {
    let started = Instant::now();
    let mut manifest = RunManifest::new("known", json!({"gamma": a.gamma, "T": a.t, "eta": a.eta}));
    let table = read_table(&mut manifest, &a.moments)?;
    let edges = EdgeSet::from_json(&manifest.read_input(&a.edges)?)?;
    let eta = a.eta.unwrap_or_else(|| {
        let l = 2.0 * ((edges.max_degree(table.p()) + 1) as f64).sqrt() * a.gamma.exp();
        2.0 * a.gamma / (l * (a.t as f64).sqrt())
    });
    let est = learn_known_structure(&table, &edges, a.gamma, a.t, eta)?;
    manifest.schedule = Some(est.schedule.clone());
    manifest.write_output(&a.out, &est.to_json()?)?;
    manifest.finish(&manifest_path(&a.out), started)
}

fn verify(a: VerifyArgs) -> Result<bool> {
    let reports = run_suite(&a.suite, a.seed)?;
    print!("{}", format_table(&reports));
    let text = serde_json::to_string_pretty(&reports)?;
    match &a.out {
        Some(path) => ising_moments::pipeline::write_atomic(path, text.as_bytes())?,
        None => println!("{text}"),
    }
    Ok(reports.iter().all(|r| r.passed()))
}

fn pipeline(a: PipelineArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.config)?;
    let cfg = ExperimentConfig::from_json(&text)?;
    if let Some(summary) = run_pipeline(&cfg, Some(&text))? {
        println!("{}", serde_json::to_string_pretty(&summary)?);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenModel(a) => gen_model(a),
        Command::Sample(a) => sample(a),
        Command::Moments(a) => moments(a),
        Command::Learn(a) => learn(a),
        Command::Structure(a) => structure(a),
        Command::Fields(a) => fields(a),
        Command::Known(a) => known(a),
        Command::Verify(a) => match verify(a) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(1),
            Err(e) => Err(e),
        },
        Command::Pipeline(a) => pipeline(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
