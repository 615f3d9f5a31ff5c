//! End-to-end experiment runs, run manifests, and atomic file output.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fields::{learn_fields, schedule_fields, schedule_fields_practical};
use crate::generate::{generate_model, GeneratorSpec};
use crate::known_structure::learn_known_structure;
use crate::model::{l1_width, IsingModel};
use crate::moments::{build_moments, exact_table, MomentTable};
use crate::optimizer::{schedule_practical, schedule_theory, Overrides, Schedule, ScheduleMode};
use crate::polyexpand::{coupling_moment_degree, field_moment_degree};
use crate::sampling::{default_burn_in, default_thinning, sample_exact, sample_gibbs, SamplerKind};
use crate::screening::{learn_couplings, CouplingEstimate};
use crate::structure::{compare_edges, threshold_edges, EdgeComparison, EdgeSet};

/// Writes `contents` to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// `dir/name.json` -> `dir/name.manifest.json`.
pub fn manifest_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.manifest.json"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputHash {
    pub path: String,
    pub sha256: String,
}

/// Provenance of one command invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub arguments: serde_json::Value,
    pub inputs: Vec<InputHash>,
    pub seeds: BTreeMap<String, u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Schedule>,
    pub outputs: Vec<InputHash>,
    pub wall_time_secs: f64,
}

impl RunManifest {
    pub fn new(command: &str, arguments: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            arguments,
            inputs: Vec::new(),
            seeds: BTreeMap::new(),
            schedule: None,
            outputs: Vec::new(),
            wall_time_secs: 0.0,
        }
    }

    /// Reads an input file and records its hash.
    pub fn read_input(&mut self, path: &Path) -> Result<String> {
        let text = fs::read_to_string(path)?;
        self.inputs.push(InputHash {
            path: path.display().to_string(),
            sha256: sha256_hex(text.as_bytes()),
        });
        Ok(text)
    }

    /// Atomically writes an output file and records its hash.
    pub fn write_output(&mut self, path: &Path, contents: &str) -> Result<()> {
        write_atomic(path, contents.as_bytes())?;
        self.outputs.push(InputHash {
            path: path.display().to_string(),
            sha256: sha256_hex(contents.as_bytes()),
        });
        Ok(())
    }

    pub fn finish(mut self, path: &Path, started: Instant) -> Result<()> {
        self.wall_time_secs = started.elapsed().as_secs_f64();
        write_atomic(path, serde_json::to_string_pretty(&self)?.as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSource {
    File(PathBuf),
    Generate(GeneratorSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub method: SamplerKind,
    pub n: usize,
    pub seed: u64,
    #[serde(default)]
    pub burn_in: Option<usize>,
    #[serde(default)]
    pub thinning: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Couplings,
    Structure,
    Fields,
    KnownStructure,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    #[serde(default)]
    pub n: Vec<usize>,
    #[serde(default)]
    pub d: Vec<usize>,
    #[serde(default, rename = "T")]
    pub t: Vec<u64>,
    #[serde(default)]
    pub gamma: Vec<f64>,
}

impl Sweep {
    pub fn is_empty(&self) -> bool {
        self.n.is_empty() && self.d.is_empty() && self.t.is_empty() && self.gamma.is_empty()
    }
}

/// Pipeline configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelSource,
    /// Omit to learn from exact moments of the model.
    #[serde(default)]
    pub sampler: Option<SamplerConfig>,
    /// Defaults to the smallest degree every requested stage needs (capped at `p`).
    #[serde(default)]
    pub moment_degree: Option<usize>,
    /// ℓ1 radius; defaults to the model's width.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default = "default_mode")]
    pub mode: ScheduleMode,
    #[serde(default)]
    pub confirm_theory: bool,
    #[serde(default)]
    pub overrides: Overrides,
    #[serde(default)]
    pub field_overrides: Overrides,
    pub stages: Vec<Stage>,
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Edge list used by the field and known-structure stages when the
    /// structure stage is not run.
    #[serde(default)]
    pub edges: Option<PathBuf>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub sweep: Sweep,
}

fn default_mode() -> ScheduleMode {
    ScheduleMode::Practical
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn has(&self, s: Stage) -> bool {
        self.stages.contains(&s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::Infeasible("no stages requested".into()));
        }
        if self.has(Stage::Structure) {
            if !self.has(Stage::Couplings) {
                return Err(Error::Infeasible("structure stage needs the couplings stage".into()));
            }
            if self.alpha.is_none() {
                return Err(Error::Infeasible("structure stage needs alpha".into()));
            }
        }
        if self.has(Stage::Fields) && !self.has(Stage::Couplings) {
            return Err(Error::Infeasible("fields stage needs the couplings stage".into()));
        }
        for s in [Stage::Fields, Stage::KnownStructure] {
            if self.has(s) && !self.has(Stage::Structure) && self.edges.is_none() {
                return Err(Error::Infeasible(format!(
                    "{s:?} stage needs the structure stage or an edge list"
                )));
            }
        }
        Ok(())
    }
}

/// Errors of one run against the ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub p: usize,
    pub n: Option<u64>,
    pub moment_degree: usize,
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Schedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_coupling_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structure: Option<EdgeComparison>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structure_exact: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_field_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub known_max_coupling_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub known_max_field_error: Option<f64>,
    /// Per-node failure probability and the union bound over nodes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_per_node: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_union: Option<f64>,
}

/// Artifacts of one run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub model: IsingModel,
    pub table: MomentTable,
    pub estimate: Option<CouplingEstimate>,
    pub edges: Option<EdgeSet>,
    pub known: Option<CouplingEstimate>,
    pub summary: RunSummary,
}

/// Point-specific values that override the config during a sweep.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SweepPoint {
    pub n: Option<usize>,
    pub d: Option<usize>,
    pub t: Option<u64>,
    pub gamma: Option<f64>,
}

pub fn load_model(source: &ModelSource) -> Result<IsingModel> {
    match source {
        ModelSource::File(path) => IsingModel::from_json(&fs::read_to_string(path)?),
        ModelSource::Generate(spec) => generate_model(spec),
    }
}

fn coupling_schedule(cfg: &ExperimentConfig, p: usize, gamma: f64, n: Option<u64>, pt: &SweepPoint) -> Result<Schedule> {
    let mut o = cfg.overrides.clone();
    o.d = pt.d.or(o.d);
    o.t = pt.t.or(o.t);
    match cfg.mode {
        ScheduleMode::Practical => schedule_practical(p, gamma, &o, n),
        ScheduleMode::Theory => {
            let s = schedule_theory(p, gamma, o.epsilon.unwrap_or(0.1), o.delta.unwrap_or(0.05))?;
            if !cfg.confirm_theory {
                return Err(Error::TheoryUnconfirmed {
                    t: s.t,
                    n: s.n.unwrap_or(0),
                });
            }
            Ok(s)
        }
    }
}

fn field_schedule(cfg: &ExperimentConfig, p: usize, gamma: f64, max_degree: usize, n: Option<u64>, pt: &SweepPoint) -> Result<Schedule> {
    let mut o = cfg.field_overrides.clone();
    o.d = pt.d.or(o.d);
    o.t = pt.t.or(o.t);
    match cfg.mode {
        ScheduleMode::Practical => schedule_fields_practical(gamma, &o, n),
        ScheduleMode::Theory => {
            let eps_c = cfg.overrides.epsilon.unwrap_or(0.1);
            let s = schedule_fields(gamma, max_degree, eps_c, o.epsilon.unwrap_or(0.1), o.delta.unwrap_or(0.05), p)?;
            if !cfg.confirm_theory {
                return Err(Error::TheoryUnconfirmed {
                    t: s.t,
                    n: s.n.unwrap_or(0),
                });
            }
            Ok(s)
        }
    }
}

/// Runs every requested stage once. `given_edges` is used by the field and
/// known-structure stages when no structure stage runs.
pub fn run_once(
    cfg: &ExperimentConfig,
    model: &IsingModel,
    given_edges: Option<&EdgeSet>,
    pt: &SweepPoint,
) -> Result<RunOutput> {
    let p = model.p();
    let gamma = pt.gamma.or(cfg.gamma).unwrap_or_else(|| l1_width(model));
    if !(gamma > 0.0) {
        return Err(Error::Infeasible("gamma is zero; set it explicitly".into()));
    }
    let n_hint = cfg.sampler.as_ref().map(|s| pt.n.unwrap_or(s.n) as u64);
    let sched = if cfg.has(Stage::Couplings) {
        Some(coupling_schedule(cfg, p, gamma, n_hint, pt)?)
    } else {
        None
    };
    let degree = match cfg.moment_degree {
        Some(d) => d,
        None => {
            let mut need = 1;
            if let Some(s) = &sched {
                need = need.max(coupling_moment_degree(s.d));
            }
            if cfg.has(Stage::Fields) {
                let fs = field_schedule(cfg, p, gamma, 0, None, pt)?;
                need = need.max(field_moment_degree(fs.d));
            }
            if cfg.has(Stage::KnownStructure) {
                need = match given_edges {
                    Some(e) if !cfg.has(Stage::Structure) => need.max(e.max_degree(p) + 1),
                    _ => p,
                };
            }
            need.min(p)
        }
    };
    let table = match &cfg.sampler {
        Some(s) => {
            let n = pt.n.unwrap_or(s.n);
            let data = match s.method {
                SamplerKind::Exact => sample_exact(model, n, s.seed)?,
                SamplerKind::Gibbs => sample_gibbs(
                    model,
                    n,
                    s.seed,
                    s.burn_in.unwrap_or_else(|| default_burn_in(p)),
                    s.thinning.unwrap_or_else(|| default_thinning(p)),
                )?,
            };
            build_moments(&data, degree)?
        }
        None => exact_table(model, degree)?,
    };
    let truth_edges = EdgeSet::from_model(model);
    let mut summary = RunSummary {
        p,
        n: table.n(),
        moment_degree: table.degree(),
        gamma,
        schedule: sched.clone(),
        max_coupling_error: None,
        structure: None,
        structure_exact: None,
        max_field_error: None,
        known_max_coupling_error: None,
        known_max_field_error: None,
        delta_per_node: sched.as_ref().and_then(|s| s.delta),
        delta_union: sched.as_ref().and_then(|s| s.delta).map(|d| (d * p as f64).min(1.0)),
    };

    let mut estimate = None;
    if let Some(s) = &sched {
        let est = learn_couplings(&table, s)?;
        summary.max_coupling_error = Some(est.max_coupling_error(model));
        estimate = Some(est);
    }
    let mut edges = given_edges.cloned();
    if cfg.has(Stage::Structure) {
        let est = estimate.as_ref().expect("validated");
        let e = threshold_edges(est, cfg.alpha.expect("validated"))?;
        let cmp = compare_edges(&e, &truth_edges);
        summary.structure_exact = Some(cmp.exact());
        summary.structure = Some(cmp);
        edges = Some(e);
    }
    if cfg.has(Stage::Fields) {
        let e = edges.as_ref().expect("validated");
        let est = estimate.as_mut().expect("validated");
        let fs = field_schedule(cfg, p, gamma, e.max_degree(p), table.n(), pt)?;
        let eps_c = summary.max_coupling_error;
        let fe = learn_fields(est, e, &table, &fs, eps_c)?;
        est.fields_stage2 = Some(fe);
        summary.max_field_error = Some(est.max_field_error(model));
    }
    let mut known = None;
    if cfg.has(Stage::KnownStructure) {
        let e = edges.as_ref().expect("validated");
        let o = &cfg.overrides;
        let t = pt.t.or(o.t).unwrap_or(crate::optimizer::DEFAULT_ITERATIONS);
        let eta = match o.eta {
            Some(eta) => eta,
            None => {
                let l = 2.0 * ((e.max_degree(p) + 1) as f64).sqrt() * gamma.exp();
                2.0 * gamma / (l * (t as f64).sqrt())
            }
        };
        let k = learn_known_structure(&table, e, gamma, t, eta)?;
        summary.known_max_coupling_error = Some(k.max_coupling_error(model));
        summary.known_max_field_error = Some(k.max_field_error(model));
        known = Some(k);
    }
    Ok(RunOutput {
        model: model.clone(),
        table,
        estimate,
        edges,
        known,
        summary,
    })
}

fn opt_f64(x: Option<f64>) -> String {
    x.map(|v| format!("{v:e}")).unwrap_or_default()
}

fn sweep_points(cfg: &ExperimentConfig) -> Vec<SweepPoint> {
    fn axis<T: Copy>(v: &[T]) -> Vec<Option<T>> {
        if v.is_empty() {
            vec![None]
        } else {
            v.iter().map(|&x| Some(x)).collect()
        }
    }
    let mut out = Vec::new();
    for n in axis(&cfg.sweep.n) {
        for d in axis(&cfg.sweep.d) {
            for t in axis(&cfg.sweep.t) {
                for gamma in axis(&cfg.sweep.gamma) {
                    out.push(SweepPoint { n, d, t, gamma });
                }
            }
        }
    }
    out
}

/// One CSV row per sweep point.
pub fn sweep_csv(cfg: &ExperimentConfig, model: &IsingModel, given_edges: Option<&EdgeSet>) -> Result<String> {
    let points = sweep_points(cfg);
    let rows: Vec<String> = points
        .par_iter()
        .map(|pt| {
            let out = run_once(cfg, model, given_edges, pt)?;
            let s = &out.summary;
            let sched = s.schedule.as_ref();
            let (fp, fneg) = s.structure.as_ref().map(|c| c.counts()).unzip();
            Ok(format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                s.n.map(|n| n.to_string()).unwrap_or_else(|| "exact".into()),
                sched.map(|x| x.d.to_string()).unwrap_or_default(),
                sched.map(|x| x.t.to_string()).unwrap_or_default(),
                s.gamma,
                s.moment_degree,
                opt_f64(s.max_coupling_error),
                fp.map(|x| x.to_string()).unwrap_or_default(),
                fneg.map(|x| x.to_string()).unwrap_or_default(),
                s.structure_exact.map(|x| x.to_string()).unwrap_or_default(),
                opt_f64(s.max_field_error),
                opt_f64(s.known_max_coupling_error),
                opt_f64(s.known_max_field_error),
            ))
        })
        .collect::<Result<_>>()?;
    let mut csv = String::from(
        "n,d,T,gamma,moment_degree,max_coupling_error,false_positives,false_negatives,structure_exact,max_field_error,known_max_coupling_error,known_max_field_error\n",
    );
    for r in rows {
        csv.push_str(&r);
        csv.push('\n');
    }
    Ok(csv)
}

/// Runs the configured pipeline and writes its artifacts under `output_dir`.
/// Returns the summary of the single run, or `None` for a sweep.
pub fn run_pipeline(cfg: &ExperimentConfig, config_text: Option<&str>) -> Result<Option<RunSummary>> {
    cfg.validate()?;
    let started = Instant::now();
    let dir = &cfg.output_dir;
    let mut manifest = RunManifest::new("pipeline", serde_json::to_value(cfg)?);
    if let Some(text) = config_text {
        manifest.inputs.push(InputHash {
            path: "<config>".into(),
            sha256: sha256_hex(text.as_bytes()),
        });
    }
    let model = match &cfg.model {
        ModelSource::File(path) => IsingModel::from_json(&manifest.read_input(path)?)?,
        ModelSource::Generate(spec) => {
            manifest.seeds.insert("generator".into(), spec.seed);
            generate_model(spec)?
        }
    };
    if let Some(s) = &cfg.sampler {
        manifest.seeds.insert("sampler".into(), s.seed);
    }
    let given_edges = match &cfg.edges {
        Some(path) => Some(EdgeSet::from_json(&manifest.read_input(path)?)?),
        None => None,
    };
    manifest.write_output(&dir.join("model.json"), &model.to_json()?)?;

    if !cfg.sweep.is_empty() {
        let csv = sweep_csv(cfg, &model, given_edges.as_ref())?;
        manifest.write_output(&dir.join("sweep.csv"), &csv)?;
        manifest.finish(&dir.join("manifest.json"), started)?;
        return Ok(None);
    }

    let out = run_once(cfg, &model, given_edges.as_ref(), &SweepPoint::default())?;
    manifest.schedule = out.summary.schedule.clone();
    manifest.write_output(&dir.join("moments.json"), &out.table.to_json()?)?;
    if let Some(est) = &out.estimate {
        manifest.write_output(&dir.join("estimate.json"), &est.to_json()?)?;
    }
    if cfg.has(Stage::Structure) {
        if let Some(e) = &out.edges {
            manifest.write_output(&dir.join("edges.json"), &e.to_json()?)?;
        }
    }
    if let Some(k) = &out.known {
        manifest.write_output(&dir.join("known_estimate.json"), &k.to_json()?)?;
    }
    manifest.write_output(&dir.join("summary.json"), &serde_json::to_string_pretty(&out.summary)?)?;
    manifest.finish(&dir.join("manifest.json"), started)?;
    Ok(Some(out.summary))
}
