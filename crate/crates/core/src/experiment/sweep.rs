use super::output::artifact_path;
use super::{ExperimentConfig, SenderMode};
use crate::design::{derive_seed, splitmix64, DescentConfig, DesignResult};
use crate::error::{Error, Result};
use crate::nonstrategic::{lloyd_max_with, LloydConfig};
use crate::quantizer::ClassifierDocument;
use crate::receiver::{evaluate_population, evaluate_single, EquilibriumReport};
use crate::source::{GaussianParams, SourceModel};
use crate::strategic::{design_full_info_from, design_level1, design_level2};
use crate::types::TypePmf;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cell::OnceCell;
use std::path::Path;
use std::sync::Mutex;

const TAG_LLOYD: u64 = 0x4c4c_4f59;
const TAG_FULL: u64 = 0x4655_4c4c;
const TAG_LEVEL2: u64 = 0x4c56_4c32;

/// One line of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sigma_s2: f64,
    pub rho: f64,
    pub lambda: f64,
    pub mode: SenderMode,
    #[serde(rename = "M")]
    pub num_cells: usize,
    /// `D_D^*`.
    pub receiver_distortion: Option<f64>,
    /// `D_E^0..D_E^2` under each sender's perceived estimates; blank for
    /// senders absent from the population.
    pub sender_distortion: [Option<f64>; 3],
    pub status: String,
}

impl SweepRow {
    fn pending(
        cfg: &ExperimentConfig,
        sigma_s2: f64,
        rho: f64,
        lambda: f64,
        mode: SenderMode,
    ) -> Self {
        Self {
            sigma_s2,
            rho,
            lambda,
            mode,
            num_cells: cfg.num_cells,
            receiver_distortion: None,
            sender_distortion: [None; 3],
            status: String::new(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    fn same_point(&self, other: &SweepRow) -> bool {
        self.sigma_s2.to_bits() == other.sigma_s2.to_bits()
            && self.rho.to_bits() == other.rho.to_bits()
            && self.lambda.to_bits() == other.lambda.to_bits()
            && self.mode == other.mode
            && self.num_cells == other.num_cells
    }
}

/// Everything computed for one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointArtifact {
    pub config: ExperimentConfig,
    pub row: SweepRow,
    pub report: EquilibriumReport,
    /// Designs of the population members, in mixture order.
    pub designs: Vec<DesignResult>,
    /// Each member's classifier with the receiver's actual estimates.
    pub classifiers: Vec<ClassifierDocument>,
}

#[derive(Debug, Clone)]
pub struct SweepTable {
    pub config: ExperimentConfig,
    pub rows: Vec<SweepRow>,
    /// Rows taken from existing artifacts instead of being recomputed.
    pub reused: usize,
}

impl SweepTable {
    pub fn failed(&self) -> usize {
        self.rows.iter().filter(|r| !r.is_ok()).count()
    }
}

fn pair_key(sigma_s2: f64, rho: f64) -> u64 {
    splitmix64(sigma_s2.to_bits()) ^ splitmix64(rho.to_bits()).rotate_left(29)
}

/// λ-independent designs of one `(σ_S², ρ)` cell, built on first use.
struct PairContext<'a> {
    cfg: &'a ExperimentConfig,
    key: u64,
    model: OnceCell<std::result::Result<SourceModel, Error>>,
    level0: OnceCell<std::result::Result<DesignResult, Error>>,
    level1: OnceCell<std::result::Result<DesignResult, Error>>,
    full: OnceCell<std::result::Result<DesignResult, Error>>,
}

impl<'a> PairContext<'a> {
    fn new(cfg: &'a ExperimentConfig, sigma_s2: f64, rho: f64) -> Self {
        let ctx = Self {
            cfg,
            key: pair_key(sigma_s2, rho),
            model: OnceCell::new(),
            level0: OnceCell::new(),
            level1: OnceCell::new(),
            full: OnceCell::new(),
        };
        let _ = ctx.model.set(SourceModel::gaussian(
            GaussianParams::standard(sigma_s2, rho),
            cfg.grid,
        ));
        ctx
    }

    fn model(&self) -> Result<&SourceModel> {
        self.model
            .get()
            .expect("model set")
            .as_ref()
            .map_err(Clone::clone)
    }

    fn level0(&self) -> Result<&DesignResult> {
        self.level0
            .get_or_init(|| {
                let lloyd = LloydConfig {
                    seed: derive_seed(self.cfg.lloyd.seed, self.key ^ TAG_LLOYD),
                    ..self.cfg.lloyd
                };
                lloyd_max_with(self.model()?, self.cfg.num_cells, &lloyd)
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    fn level1(&self) -> Result<&DesignResult> {
        self.level1
            .get_or_init(|| design_level1(self.level0()?, self.model()?))
            .as_ref()
            .map_err(Clone::clone)
    }

    fn full(&self) -> Result<&DesignResult> {
        self.full
            .get_or_init(|| {
                let descent = DescentConfig {
                    seed: derive_seed(self.cfg.descent.seed, self.key ^ TAG_FULL),
                    ..self.cfg.descent
                };
                design_full_info_from(
                    self.model()?,
                    self.cfg.num_cells,
                    &self.level1()?.boundaries,
                    &descent,
                )
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    fn evaluate(&self, row: SweepRow) -> (SweepRow, Option<PointArtifact>) {
        let result = self.evaluate_inner(&row);
        self.finish(row, result)
    }

    fn finish(
        &self,
        mut row: SweepRow,
        result: Result<(EquilibriumReport, Vec<DesignResult>)>,
    ) -> (SweepRow, Option<PointArtifact>) {
        match result {
            Ok((report, designs)) => {
                row.receiver_distortion = Some(report.receiver_distortion);
                for (d, v) in designs.iter().zip(&report.per_type_sender_distortion) {
                    if let Some(slot) = level_slot(d) {
                        row.sender_distortion[slot] = Some(*v);
                    }
                }
                row.status = "ok".into();
                let classifiers = designs
                    .iter()
                    .map(|d| ClassifierDocument::new(&d.boundaries, &report.actual_estimates))
                    .collect();
                let mut report = report;
                report.config_echo = serde_json::to_value(self.cfg).ok();
                let artifact = PointArtifact {
                    config: self.cfg.clone(),
                    row: row.clone(),
                    report,
                    designs,
                    classifiers,
                };
                (row, Some(artifact))
            }
            Err(e) => {
                row.status = format!(
                    "error:{}: {}",
                    e.kind(),
                    e.message().replace(['\n', '\r'], " ")
                );
                (row, None)
            }
        }
    }

    fn evaluate_inner(&self, row: &SweepRow) -> Result<(EquilibriumReport, Vec<DesignResult>)> {
        let model = self.model()?;
        match row.mode {
            SenderMode::NonStrategic => single(model, self.level0()?),
            SenderMode::PartiallyStrategic => single(model, self.level1()?),
            SenderMode::FullInfo => single(model, self.full()?),
            SenderMode::BoundedRational => {
                let p = TypePmf::population(row.lambda)?;
                let p_prime = TypePmf::perceived_by_level2(row.lambda)?;
                let d0 = self.level0()?;
                let d1 = self.level1()?;
                let descent = DescentConfig {
                    seed: derive_seed(
                        self.cfg.descent.seed,
                        self.key ^ splitmix64(row.lambda.to_bits()) ^ TAG_LEVEL2,
                    ),
                    ..self.cfg.descent
                };
                let d2 = design_level2(
                    model,
                    self.cfg.num_cells,
                    &d0.boundaries,
                    &d1.boundaries,
                    &p_prime,
                    &descent,
                )?;
                let report = evaluate_population(model, [d0, d1, &d2], &p, &p_prime)?;
                Ok((report, vec![d0.clone(), d1.clone(), d2]))
            }
        }
    }
}

fn single(model: &SourceModel, d: &DesignResult) -> Result<(EquilibriumReport, Vec<DesignResult>)> {
    Ok((evaluate_single(model, d)?, vec![d.clone()]))
}

fn level_slot(d: &DesignResult) -> Option<usize> {
    use crate::design::SenderLevel::*;
    match d.level {
        Level0 => Some(0),
        Level1 => Some(1),
        Level2 => Some(2),
        FullInfo => None,
    }
}

/// Designs and evaluates a single point from scratch.
pub fn design_point(
    cfg: &ExperimentConfig,
    sigma_s2: f64,
    rho: f64,
    lambda: f64,
    mode: SenderMode,
) -> Result<PointArtifact> {
    cfg.validate()?;
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::Argument(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let ctx = PairContext::new(cfg, sigma_s2, rho);
    let row = SweepRow::pending(cfg, sigma_s2, rho, lambda, mode);
    let result = ctx.evaluate_inner(&row)?;
    let (_, artifact) = ctx.finish(row, Ok(result));
    Ok(artifact.expect("successful evaluation yields an artifact"))
}

fn same_run(a: &ExperimentConfig, b: &ExperimentConfig) -> bool {
    let mut a = a.clone();
    a.output_dir = b.output_dir.clone();
    &a == b
}

fn load_valid_artifact(path: &Path, cfg: &ExperimentConfig, row: &SweepRow) -> Option<SweepRow> {
    let text = std::fs::read_to_string(path).ok()?;
    let artifact: PointArtifact = serde_json::from_str(&text).ok()?;
    let valid = same_run(&artifact.config, cfg)
        && artifact.row.same_point(row)
        && artifact.row.is_ok()
        && artifact.row.receiver_distortion == Some(artifact.report.receiver_distortion);
    valid.then_some(artifact.row)
}

/// Runs every `(σ_S², ρ, λ, mode)` point, writing one JSON artifact per
/// successful point under `<output_dir>/points`. Points whose artifact already
/// exists and matches the configuration are not recomputed.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepTable> {
    cfg.validate()?;
    sweep_points(cfg)
}

fn sweep_points(cfg: &ExperimentConfig) -> Result<SweepTable> {
    let points_dir = cfg.output_dir.join("points");
    std::fs::create_dir_all(&points_dir)
        .map_err(|e| Error::Io(format!("cannot create {}: {e}", points_dir.display())))?;
    let pairs: Vec<(f64, f64)> = cfg
        .sigma_s2_list
        .iter()
        .flat_map(|&s| cfg.rho_list.iter().map(move |&r| (s, r)))
        .collect();
    let write_lock = Mutex::new(());
    let per_pair: Vec<Result<(Vec<SweepRow>, usize)>> = pairs
        .par_iter()
        .map(|&(sigma_s2, rho)| {
            let ctx = PairContext::new(cfg, sigma_s2, rho);
            let mut rows = Vec::new();
            let mut reused = 0;
            for &lambda in &cfg.lambda_list {
                for &mode in &cfg.sender_modes {
                    let pending = SweepRow::pending(cfg, sigma_s2, rho, lambda, mode);
                    let path = artifact_path(&cfg.output_dir, &pending);
                    if let Some(row) = load_valid_artifact(&path, cfg, &pending) {
                        reused += 1;
                        rows.push(row);
                        continue;
                    }
                    let (row, artifact) = ctx.evaluate(pending);
                    if let Some(artifact) = artifact {
                        let json = serde_json::to_string_pretty(&artifact)
                            .map_err(|e| Error::Io(e.to_string()))?;
                        let _guard = write_lock.lock().unwrap_or_else(|e| e.into_inner());
                        std::fs::write(&path, json).map_err(|e| {
                            Error::Io(format!("cannot write {}: {e}", path.display()))
                        })?;
                    }
                    rows.push(row);
                }
            }
            Ok((rows, reused))
        })
        .collect();
    let mut rows = Vec::new();
    let mut reused = 0;
    for part in per_pair {
        let (r, n) = part?;
        rows.extend(r);
        reused += n;
    }
    Ok(SweepTable {
        config: cfg.clone(),
        rows,
        reused,
    })
}
