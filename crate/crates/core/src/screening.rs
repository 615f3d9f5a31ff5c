//! Per-node coupling learning from a moment table and symmetrization into a
//! full estimate.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::FieldEstimate;
use crate::model::{IsingModel, LocalParams, ModelMeta};
use crate::moments::MomentTable;
use crate::optimizer::{projected_gd, GdOutcome, Schedule, ScheduleMode};
use crate::polyexpand::{approx_gradient, coupling_moment_degree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMethod {
    Screening,
    KnownStructure,
}

impl fmt::Display for EstimateMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimateMethod::Screening => "screening",
            EstimateMethod::KnownStructure => "known_structure",
        })
    }
}

/// Summary of one node's optimization run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDiagnostics {
    pub node: usize,
    pub iterations: u64,
    pub early_stopped: bool,
    pub initial_grad_norm: f64,
    pub final_grad_norm: f64,
    /// `[iteration, ||g||_inf]` every `ceil(T/100)` iterations.
    pub grad_norm_trace: Vec<(u64, f64)>,
}

impl NodeDiagnostics {
    pub(crate) fn from_outcome(node: usize, out: &GdOutcome) -> Self {
        Self {
            node,
            iterations: out.iterations,
            early_stopped: out.early_stopped,
            initial_grad_norm: out.initial_grad_norm,
            final_grad_norm: out.final_grad_norm,
            grad_norm_trace: out.trace.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub nodes: Vec<NodeDiagnostics>,
    /// Largest moment degree read from the table during the run.
    pub max_moment_degree: usize,
}

/// Learned local parameters for every node.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingEstimate {
    pub p: usize,
    pub nodes: Vec<LocalParams>,
    pub schedule: Schedule,
    pub method: EstimateMethod,
    pub diagnostics: Diagnostics,
    pub fields_stage2: Option<FieldEstimate>,
}

/// Per-node result of [`learn_node`].
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFit {
    pub params: LocalParams,
    pub diagnostics: NodeDiagnostics,
}

pub(crate) fn trace_stride(t: u64) -> u64 {
    t.div_ceil(100).max(1)
}

/// Averaged projected GD on the approximate screening gradient of node `u`,
/// started from zero.
pub fn learn_node(u: usize, table: &MomentTable, sched: &Schedule) -> Result<NodeFit> {
    let p = table.p();
    if u >= p {
        return Err(Error::IndexOutOfRange { index: u, p });
    }
    sched.validate()?;
    let need = coupling_moment_degree(sched.d);
    if !table.covers(need) {
        return Err(Error::MissingMoment {
            degree: need,
            table_degree: table.degree(),
        });
    }
    let oracle = |x: &[f64]| approx_gradient(&LocalParams::from_vec(u, x), sched.d, table);
    let out = projected_gd(
        oracle,
        sched.gamma,
        sched.eta,
        sched.t,
        &vec![0.0; p],
        &sched.gd_options(Some(trace_stride(sched.t))),
    )?;
    Ok(NodeFit {
        params: LocalParams::from_vec(u, &out.average),
        diagnostics: NodeDiagnostics::from_outcome(u, &out),
    })
}

/// Runs [`learn_node`] for every node in parallel and collects the results
/// in node order.
pub fn learn_couplings(table: &MomentTable, sched: &Schedule) -> Result<CouplingEstimate> {
    table.reset_query_log();
    let fits: Vec<NodeFit> = (0..table.p())
        .into_par_iter()
        .map(|u| learn_node(u, table, sched))
        .collect::<Result<_>>()?;
    let (nodes, diags) = fits.into_iter().map(|f| (f.params, f.diagnostics)).unzip();
    let mut schedule = sched.clone();
    if schedule.n.is_none() {
        schedule.n = table.n();
    }
    Ok(CouplingEstimate {
        p: table.p(),
        nodes,
        schedule,
        method: EstimateMethod::Screening,
        diagnostics: Diagnostics {
            nodes: diags,
            max_moment_degree: table.max_queried_degree(),
        },
        fields_stage2: None,
    })
}

#[derive(Serialize, Deserialize)]
struct EstimateFile {
    p: usize,
    couplings: Vec<(usize, usize, f64)>,
    fields: Vec<f64>,
    #[serde(default)]
    meta: ModelMeta,
    method: EstimateMethod,
    schedule: Schedule,
    diagnostics: Diagnostics,
    /// Per-node `[field, J_u0, J_u1, ...]` before symmetrization.
    local: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fields_stage2: Option<FieldEstimate>,
}

impl CouplingEstimate {
    /// Directed estimate of `J_uv` from node `u`'s subproblem.
    pub fn directed(&self, u: usize, v: usize) -> f64 {
        self.nodes[u].coupling(v)
    }

    /// `(J_uv from u + J_vu from v) / 2`.
    pub fn coupling(&self, u: usize, v: usize) -> f64 {
        0.5 * (self.directed(u, v) + self.directed(v, u))
    }

    /// Symmetrized couplings for every pair `u < v`.
    pub fn symmetric_couplings(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for u in 0..self.p {
            for v in u + 1..self.p {
                out.push((u, v, self.coupling(u, v)));
            }
        }
        out
    }

    /// Field estimates from the coupling stage (each node's own field coordinate).
    pub fn stage1_fields(&self) -> Vec<f64> {
        self.nodes.iter().map(|lp| lp.field).collect()
    }

    /// Stage-2 fields if present, else the stage-1 fields.
    pub fn best_fields(&self) -> Vec<f64> {
        match &self.fields_stage2 {
            Some(f) => f.fields.clone(),
            None => self.stage1_fields(),
        }
    }

    /// Estimate holding `model`'s own parameters, for fitting fields against
    /// known couplings. The schedule is a one-step placeholder at radius `gamma`.
    pub fn from_model(model: &IsingModel, gamma: f64) -> Result<Self> {
        let schedule = Schedule {
            d: 0,
            t: 1,
            eta: 1.0,
            n: None,
            gamma,
            epsilon: None,
            delta: None,
            mode: ScheduleMode::Practical,
            lipschitz: None,
            early_stop: None,
        };
        schedule.validate()?;
        Ok(Self {
            p: model.p(),
            nodes: (0..model.p()).map(|u| model.local_params(u)).collect(),
            schedule,
            method: EstimateMethod::Screening,
            diagnostics: Diagnostics {
                nodes: vec![],
                max_moment_degree: 0,
            },
            fields_stage2: None,
        })
    }

    /// Estimate as a model: symmetrized couplings and [`Self::best_fields`].
    pub fn to_model(&self) -> Result<IsingModel> {
        let mut m = IsingModel::new(self.p)?;
        for (u, v, x) in self.symmetric_couplings() {
            m.set_coupling(u, v, x)?;
        }
        for (u, h) in self.best_fields().into_iter().enumerate() {
            m.set_field(u, h)?;
        }
        Ok(m)
    }

    pub fn max_coupling_error(&self, truth: &IsingModel) -> f64 {
        self.symmetric_couplings()
            .into_iter()
            .map(|(u, v, x)| (x - truth.coupling(u, v)).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_field_error(&self, truth: &IsingModel) -> f64 {
        self.best_fields()
            .iter()
            .zip(truth.fields())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = EstimateFile {
            p: self.p,
            couplings: self
                .symmetric_couplings()
                .into_iter()
                .filter(|&(_, _, x)| x != 0.0)
                .collect(),
            fields: self.best_fields(),
            meta: ModelMeta {
                gamma: Some(self.schedule.gamma),
                ..Default::default()
            },
            method: self.method,
            schedule: self.schedule.clone(),
            diagnostics: self.diagnostics.clone(),
            local: self.nodes.iter().map(LocalParams::to_vec).collect(),
            fields_stage2: self.fields_stage2.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: EstimateFile = serde_json::from_str(text)?;
        if file.local.len() != file.p {
            return Err(Error::schema(format!(
                "local has {} rows, expected p = {}",
                file.local.len(),
                file.p
            )));
        }
        let mut nodes = Vec::with_capacity(file.p);
        for (u, row) in file.local.iter().enumerate() {
            if row.len() != file.p {
                return Err(Error::schema(format!(
                    "local row {u} has length {}, expected {}",
                    row.len(),
                    file.p
                )));
            }
            nodes.push(LocalParams::from_vec(u, row));
        }
        if let Some(f) = &file.fields_stage2 {
            if f.fields.len() != file.p {
                return Err(Error::schema("fields_stage2 length does not match p"));
            }
        }
        Ok(Self {
            p: file.p,
            nodes,
            schedule: file.schedule,
            method: file.method,
            diagnostics: file.diagnostics,
            fields_stage2: file.fields_stage2,
        })
    }
}
