//! Classifiers of the strategic senders: the level-1 shift rule, level 2's
//! descent against its perceived mixture estimates, and the fully rational
//! full-information sender.

use crate::design::{
    derive_seed, descend, random_monotone, DescentConfig, DescentOutcome, DesignResult,
    InitFailure, Objective, SenderLevel,
};
use crate::error::{Error, Result};
use crate::nonstrategic::lloyd_max_with;
use crate::nonstrategic::LloydConfig;
use crate::quantizer::{
    estimates_from_totals, perceived_estimates_mixture, sender_distortion,
    sender_distortion_unchecked, BoundaryMatrix, EstimateVector, EMPTY_CELL_MASS,
};
use crate::source::{Moments, SourceModel};
use crate::types::TypePmf;
use rayon::prelude::*;

/// Level 1 best-responds to the honest estimates: the honest boundaries shifted
/// by `-s` at every level, clamped to the support.
pub fn design_level1(nonstrategic: &DesignResult, model: &SourceModel) -> Result<DesignResult> {
    if nonstrategic.level != SenderLevel::Level0 {
        return Err(Error::Argument(
            "level-1 design needs the level-0 design".into(),
        ));
    }
    nonstrategic.boundaries.validate(model)?;
    let (a, b) = model.x_support();
    let n = nonstrategic.boundaries.row(0);
    let m_cells = nonstrategic.boundaries.num_cells();
    let interior: Vec<Vec<f64>> = model
        .s_levels()
        .iter()
        .map(|s| n[1..m_cells].iter().map(|v| (v - s).clamp(a, b)).collect())
        .collect();
    let q = BoundaryMatrix::from_interior(model, &interior)?;
    let y = nonstrategic.perceived_estimates.clone();
    let d = sender_distortion(model, &q, &y, true)?;
    Ok(DesignResult {
        level: SenderLevel::Level1,
        boundaries: q,
        perceived_estimates: y,
        sender_distortion: d,
        trace: vec![d],
        init_index: 0,
        empty_cell_flags: nonstrategic.empty_cell_flags.clone(),
        failed_inits: Vec::new(),
    })
}

/// `∂/∂q_{s,m} Σ_m Σ_s w_s ∫ (x + s·[bias] − y_m)^2 f` for fixed `y`, by the
/// Leibniz rule: `w_s f(q, s) [(q − c_{m−1})^2 − (q − c_m)^2]` with `c = y − s·[bias]`.
pub fn boundary_gradient(
    model: &SourceModel,
    q: &BoundaryMatrix,
    y: &EstimateVector,
    bias_in_loss: bool,
) -> Vec<Vec<f64>> {
    let m_cells = q.num_cells();
    let y = y.values();
    model
        .s_weights()
        .iter()
        .enumerate()
        .map(|(k, w)| {
            let row = q.row(k);
            (1..m_cells)
                .map(|m| {
                    let x = row[m];
                    let left = x - model.effective_target(k, y[m - 1], bias_in_loss);
                    let right = x - model.effective_target(k, y[m], bias_in_loss);
                    w * model.density_at_level(k, x) * (left * left - right * right)
                })
                .collect()
        })
        .collect()
}

/// Gradient of level 2's distortion with its perceived estimates held fixed.
pub fn level2_gradient(
    model: &SourceModel,
    q2: &BoundaryMatrix,
    y2: &EstimateVector,
) -> Vec<Vec<f64>> {
    boundary_gradient(model, q2, y2, true)
}

/// Level 2's perceived estimates: the receiver's best response to the
/// level-0/level-1 mixture weighted by the perceived pmf. They do not involve
/// level 2's own classifier.
pub fn level2_perceived_estimates(
    model: &SourceModel,
    q0: &BoundaryMatrix,
    q1: &BoundaryMatrix,
    p_prime: &TypePmf,
) -> Result<crate::quantizer::MixtureEstimates> {
    if p_prime.probs.len() != 2 {
        return Err(Error::Argument(
            "perceived pmf must cover levels 0 and 1".into(),
        ));
    }
    perceived_estimates_mixture(model, &[(q0, p_prime.probs[0]), (q1, p_prime.probs[1])])
}

struct FixedEstimates<'a> {
    model: &'a SourceModel,
    y: &'a EstimateVector,
}

impl Objective for FixedEstimates<'_> {
    fn value(&self, q: &BoundaryMatrix) -> f64 {
        sender_distortion_unchecked(self.model, q, self.y.values(), true)
    }

    fn gradient(&self, q: &BoundaryMatrix) -> Vec<Vec<f64>> {
        level2_gradient(self.model, q, self.y)
    }
}

pub fn design_level2(
    model: &SourceModel,
    num_cells: usize,
    q0: &BoundaryMatrix,
    q1: &BoundaryMatrix,
    p_prime: &TypePmf,
    cfg: &DescentConfig,
) -> Result<DesignResult> {
    cfg.validate()?;
    for q in [q0, q1] {
        q.validate(model)?;
        if q.num_cells() != num_cells {
            return Err(Error::Argument(
                "input classifiers do not have M cells".into(),
            ));
        }
    }
    let perceived = level2_perceived_estimates(model, q0, q1, p_prime)?;
    let objective = FixedEstimates {
        model,
        y: &perceived.estimates,
    };
    let (outcome, index, failures) = multi_start(model, num_cells, q1, &objective, cfg)?;
    Ok(DesignResult {
        level: SenderLevel::Level2,
        sender_distortion: outcome.value,
        boundaries: outcome.boundaries,
        perceived_estimates: perceived.estimates,
        trace: outcome.trace,
        init_index: index,
        empty_cell_flags: perceived.empty_cells,
        failed_inits: failures,
    })
}

/// Per-level, per-cell moments of a classifier (before the S weights).
fn cell_table(model: &SourceModel, q: &BoundaryMatrix) -> Vec<Vec<Moments>> {
    (0..model.num_s_levels())
        .map(|k| {
            (0..q.num_cells())
                .map(|m| {
                    let (lo, hi) = q.cell(k, m);
                    model.moments_unchecked(k, lo, hi)
                })
                .collect()
        })
        .collect()
}

/// Sender objective when the receiver best-responds to the sender's own classifier.
struct BestResponse<'a> {
    model: &'a SourceModel,
}

struct BestResponseEval {
    value: f64,
    estimates: Vec<f64>,
    masses: Vec<f64>,
    /// `Σ_s w_s s ∫_{cell m} f`.
    bias_moment: Vec<f64>,
    empty: Vec<usize>,
}

impl BestResponse<'_> {
    fn evaluate(&self, q: &BoundaryMatrix) -> BestResponseEval {
        let model = self.model;
        let table = cell_table(model, q);
        let m_cells = q.num_cells();
        let mut totals = vec![Moments::default(); m_cells];
        let mut bias_moment = vec![0.0; m_cells];
        for (k, (row, w)) in table.iter().zip(model.s_weights()).enumerate() {
            let s = model.s_levels()[k];
            for (m, mom) in row.iter().enumerate() {
                totals[m] += mom.scaled(*w);
                bias_moment[m] += w * s * mom.mass;
            }
        }
        let est = estimates_from_totals(&totals, &[(q, 1.0)]);
        let y = est.estimates.values();
        let mut value = 0.0;
        for (k, (row, w)) in table.iter().zip(model.s_weights()).enumerate() {
            let mut acc = 0.0;
            for (m, mom) in row.iter().enumerate() {
                acc += mom.squared_error(model.effective_target(k, y[m], true));
            }
            value += w * acc;
        }
        BestResponseEval {
            value,
            estimates: est.estimates.0,
            masses: est.masses,
            bias_moment,
            empty: est.empty_cells,
        }
    }
}

impl Objective for BestResponse<'_> {
    fn value(&self, q: &BoundaryMatrix) -> f64 {
        self.evaluate(q).value
    }

    fn gradient(&self, q: &BoundaryMatrix) -> Vec<Vec<f64>> {
        full_info_gradient_from(self.model, q, &self.evaluate(q))
    }
}

fn full_info_gradient_from(
    model: &SourceModel,
    q: &BoundaryMatrix,
    eval: &BestResponseEval,
) -> Vec<Vec<f64>> {
    let y = EstimateVector(eval.estimates.clone());
    let mut grad = boundary_gradient(model, q, &y, true);
    // Each estimate is a cell centroid, so moving a boundary moves the two
    // adjacent estimates; `∂D/∂y_m = −2 Σ_s w_s s ∫_{cell m} f`.
    let live = |m: usize| eval.masses[m] >= EMPTY_CELL_MASS && !eval.empty.contains(&m);
    for (k, (g_row, w)) in grad.iter_mut().zip(model.s_weights()).enumerate() {
        let row = q.row(k);
        for (i, g) in g_row.iter_mut().enumerate() {
            let m = i + 1;
            let x = row[m];
            let wf = w * model.density_at_level(k, x);
            if live(m - 1) {
                let dy = wf * (x - eval.estimates[m - 1]) / eval.masses[m - 1];
                *g += -2.0 * eval.bias_moment[m - 1] * dy;
            }
            if live(m) {
                let dy = -wf * (x - eval.estimates[m]) / eval.masses[m];
                *g += -2.0 * eval.bias_moment[m] * dy;
            }
        }
    }
    grad
}

/// Total derivative of the full-information sender distortion, including the
/// receiver's response to the moved boundaries.
pub fn full_info_gradient(model: &SourceModel, q: &BoundaryMatrix) -> Vec<Vec<f64>> {
    let obj = BestResponse { model };
    full_info_gradient_from(model, q, &obj.evaluate(q))
}

/// Sender distortion of a classifier whose receiver best-responds to it.
pub fn full_info_distortion(model: &SourceModel, q: &BoundaryMatrix) -> f64 {
    BestResponse { model }.evaluate(q).value
}

/// Fully rational sender with full information; the warm start is the level-1
/// shift of a freshly designed honest quantizer.
pub fn design_full_info(
    model: &SourceModel,
    num_cells: usize,
    cfg: &DescentConfig,
) -> Result<DesignResult> {
    let honest = lloyd_max_with(
        model,
        num_cells,
        &LloydConfig {
            seed: cfg.seed,
            ..LloydConfig::default()
        },
    )?;
    let warm = design_level1(&honest, model)?;
    design_full_info_from(model, num_cells, &warm.boundaries, cfg)
}

pub fn design_full_info_from(
    model: &SourceModel,
    num_cells: usize,
    warm_start: &BoundaryMatrix,
    cfg: &DescentConfig,
) -> Result<DesignResult> {
    cfg.validate()?;
    warm_start.validate(model)?;
    if warm_start.num_cells() != num_cells {
        return Err(Error::Argument("warm start does not have M cells".into()));
    }
    let objective = BestResponse { model };
    let (outcome, index, failures) = multi_start(model, num_cells, warm_start, &objective, cfg)?;
    let eval = objective.evaluate(&outcome.boundaries);
    Ok(DesignResult {
        level: SenderLevel::FullInfo,
        sender_distortion: eval.value,
        boundaries: outcome.boundaries,
        perceived_estimates: EstimateVector(eval.estimates),
        trace: outcome.trace,
        init_index: index,
        empty_cell_flags: eval.empty,
        failed_inits: failures,
    })
}

/// Runs `cfg.num_inits` random starts (indices `0..num_inits`) plus the warm start
/// (index `num_inits`) and keeps the lowest objective; ties go to the lowest index.
fn multi_start<O: Objective + Sync>(
    model: &SourceModel,
    num_cells: usize,
    warm_start: &BoundaryMatrix,
    objective: &O,
    cfg: &DescentConfig,
) -> Result<(DescentOutcome, usize, Vec<InitFailure>)> {
    if num_cells == 1 {
        let q = BoundaryMatrix::constant(model, &[])?;
        let value = objective.value(&q);
        return Ok((
            DescentOutcome {
                boundaries: q,
                value,
                trace: vec![value],
            },
            0,
            Vec::new(),
        ));
    }
    let runs: Vec<Result<DescentOutcome>> = (0..=cfg.num_inits)
        .into_par_iter()
        .map(|i| {
            let init = if i == cfg.num_inits {
                warm_start.clone()
            } else {
                random_monotone(model, num_cells, derive_seed(cfg.seed, i as u64))?
            };
            descend(model, init, objective, cfg)
        })
        .collect();
    let mut best: Option<(DescentOutcome, usize)> = None;
    let mut failures = Vec::new();
    for (i, run) in runs.into_iter().enumerate() {
        match run {
            Ok(out) => {
                if best.as_ref().is_none_or(|(b, _)| out.value < b.value) {
                    best = Some((out, i));
                }
            }
            Err(e) => failures.push(InitFailure {
                init_index: i,
                reason: e.to_string(),
            }),
        }
    }
    match best {
        Some((out, i)) => Ok((out, i, failures)),
        None => Err(Error::Design(format!(
            "all {} initializations failed",
            failures.len()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::project_monotone;
    use crate::nonstrategic::lloyd_max;
    use crate::source::{GaussianParams, GridSpec};

    fn model(s2: f64, rho: f64) -> SourceModel {
        SourceModel::gaussian(GaussianParams::standard(s2, rho), GridSpec::default()).unwrap()
    }

    fn fixed_y_distortion(m: &SourceModel, q: &BoundaryMatrix, y: &EstimateVector) -> f64 {
        sender_distortion(m, q, y, true).unwrap()
    }

    fn max_abs(g: &[Vec<f64>]) -> f64 {
        g.iter().flatten().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Central differences of `f` at every interior boundary.
    fn central_differences(
        q: &BoundaryMatrix,
        h: f64,
        f: impl Fn(&BoundaryMatrix) -> f64,
    ) -> Vec<Vec<f64>> {
        let m_cells = q.num_cells();
        (0..q.rows().len())
            .map(|k| {
                (1..m_cells)
                    .map(|m| {
                        let mut plus = q.clone();
                        plus.row_mut(k)[m] += h;
                        let mut minus = q.clone();
                        minus.row_mut(k)[m] -= h;
                        (f(&plus) - f(&minus)) / (2.0 * h)
                    })
                    .collect()
            })
            .collect()
    }

    fn relative_error(analytic: &[Vec<f64>], numeric: &[Vec<f64>]) -> f64 {
        let diff = analytic
            .iter()
            .flatten()
            .zip(numeric.iter().flatten())
            .fold(0.0, |a, (x, y)| f64::max(a, (x - y).abs()));
        diff / max_abs(numeric)
    }

    #[test]
    fn level1_is_shifted_honest_classifier() {
        let m = model(1.0, 0.5);
        let d0 = lloyd_max(&m, 4).unwrap();
        let d1 = design_level1(&d0, &m).unwrap();
        let n = d0.boundaries.row(0);
        let mid = m.num_s_levels() / 2;
        assert_eq!(m.s_levels()[mid], 0.0);
        assert_eq!(d1.boundaries.row(mid), n);
        let (a, b) = m.x_support();
        for (k, s) in m.s_levels().iter().enumerate() {
            for (got, honest) in d1.boundaries.row(k)[1..4].iter().zip(&n[1..4]) {
                assert_eq!(*got, (honest - s).clamp(a, b));
            }
        }
        assert_eq!(d1.perceived_estimates, d0.perceived_estimates);
    }

    #[test]
    fn level1_shift_beats_unshifted() {
        let m = model(1.0, 0.5);
        let d0 = lloyd_max(&m, 4).unwrap();
        let d1 = design_level1(&d0, &m).unwrap();
        let unshifted = fixed_y_distortion(&m, &d0.boundaries, &d0.perceived_estimates);
        assert!(d1.sender_distortion <= unshifted);
    }

    #[test]
    fn level1_rejects_other_levels() {
        let m = model(1.0, 0.5);
        let d1 = design_level1(&lloyd_max(&m, 2).unwrap(), &m).unwrap();
        assert!(matches!(design_level1(&d1, &m), Err(Error::Argument(_))));
    }

    #[test]
    fn negligible_bias_collapses_to_honest() {
        let m = model(1e-6, 0.5);
        let d0 = lloyd_max(&m, 4).unwrap();
        let d1 = design_level1(&d0, &m).unwrap();
        assert!((d1.sender_distortion - d0.sender_distortion).abs() < 1e-3);
        let full = design_full_info_from(&m, 4, &d1.boundaries, &DescentConfig::default()).unwrap();
        assert!((full.sender_distortion - d0.sender_distortion).abs() < 1e-3);
    }

    #[test]
    fn level2_stationary_at_midpoints_without_bias() {
        let m = model(1e-6, 0.0);
        let d0 = lloyd_max(&m, 4).unwrap();
        let d1 = design_level1(&d0, &m).unwrap();
        let p = TypePmf::perceived_by_level2(1.0).unwrap();
        let d2 = design_level2(
            &m,
            4,
            &d0.boundaries,
            &d1.boundaries,
            &p,
            &DescentConfig::default(),
        )
        .unwrap();
        let y = d2.perceived_estimates.values();
        for (row, s) in d2.boundaries.rows().iter().zip(m.s_levels()) {
            for i in 1..4 {
                let mid = 0.5 * (y[i - 1] + y[i]);
                assert!((row[i] - (mid - s)).abs() < 1e-6, "{row:?} {y:?}");
                if s.abs() < 1e-3 {
                    assert!((row[i] - mid).abs() < 1e-3);
                }
            }
        }
    }

    #[test]
    fn level2_solution_is_stationary_and_descends() {
        let m = model(1.0, 0.5);
        let d0 = lloyd_max(&m, 4).unwrap();
        let d1 = design_level1(&d0, &m).unwrap();
        let p = TypePmf::perceived_by_level2(10.0).unwrap();
        let cfg = DescentConfig::default();
        let d2 = design_level2(&m, 4, &d0.boundaries, &d1.boundaries, &p, &cfg).unwrap();
        let g = level2_gradient(&m, &d2.boundaries, &d2.perceived_estimates);
        assert!(max_abs(&g) < 1e-5, "{}", max_abs(&g));
        assert!(d2.trace.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(*d2.trace.last().unwrap(), d2.sender_distortion);
        assert!(d2.failed_inits.is_empty());

        let single = DescentConfig {
            num_inits: 1,
            ..cfg
        };
        let one = design_level2(&m, 4, &d0.boundaries, &d1.boundaries, &p, &single).unwrap();
        assert!(d2.sender_distortion <= one.sender_distortion);

        let again = design_level2(&m, 4, &d0.boundaries, &d1.boundaries, &p, &cfg).unwrap();
        assert_eq!(d2, again);
    }

    #[test]
    fn level2_estimates_ignore_own_classifier() {
        let m = model(1.0, 0.5);
        let d0 = lloyd_max(&m, 4).unwrap();
        let d1 = design_level1(&d0, &m).unwrap();
        let p = TypePmf::perceived_by_level2(2.0).unwrap();
        let y = level2_perceived_estimates(&m, &d0.boundaries, &d1.boundaries, &p).unwrap();
        let d2 = design_level2(
            &m,
            4,
            &d0.boundaries,
            &d1.boundaries,
            &p,
            &DescentConfig::default(),
        )
        .unwrap();
        assert_eq!(d2.perceived_estimates, y.estimates);
    }

    #[test]
    fn level2_gradient_matches_finite_differences() {
        for (s2, rho) in [(0.1, 0.1), (1.0, 0.5), (1.5, 0.7)] {
            let m = model(s2, rho);
            let d0 = lloyd_max(&m, 4).unwrap();
            let d1 = design_level1(&d0, &m).unwrap();
            let p = TypePmf::perceived_by_level2(3.0).unwrap();
            let y = level2_perceived_estimates(&m, &d0.boundaries, &d1.boundaries, &p)
                .unwrap()
                .estimates;
            for seed in 0..3 {
                let mut q = random_monotone(&m, 4, derive_seed(17, seed)).unwrap();
                project_monotone(&mut q, m.x_support(), 1e-3);
                let g = level2_gradient(&m, &q, &y);
                let fd = central_differences(&q, 1e-5, |q| fixed_y_distortion(&m, q, &y));
                assert!(
                    relative_error(&g, &fd) < 1e-4,
                    "{}",
                    relative_error(&g, &fd)
                );
            }
        }
    }

    #[test]
    fn full_info_gradient_matches_finite_differences() {
        for (s2, rho) in [(0.1, 0.1), (1.0, 0.5), (1.5, 0.7)] {
            let m = model(s2, rho);
            for seed in 0..3 {
                let mut q = random_monotone(&m, 4, derive_seed(23, seed)).unwrap();
                project_monotone(&mut q, m.x_support(), 1e-3);
                let g = full_info_gradient(&m, &q);
                let fd = central_differences(&q, 1e-5, |q| full_info_distortion(&m, q));
                assert!(
                    relative_error(&g, &fd) < 1e-4,
                    "{}",
                    relative_error(&g, &fd)
                );
            }
        }
    }

    #[test]
    fn full_info_solution_is_stationary() {
        let m = model(1.0, 0.5);
        let d = design_full_info(&m, 4, &DescentConfig::default()).unwrap();
        assert_eq!(d.level, SenderLevel::FullInfo);
        let g = full_info_gradient(&m, &d.boundaries);
        assert!(max_abs(&g) < 1e-5, "{}", max_abs(&g));
        let y = perceived_estimates_mixture(&m, &[(&d.boundaries, 1.0)]).unwrap();
        assert_eq!(d.perceived_estimates, y.estimates);
        assert!((full_info_distortion(&m, &d.boundaries) - d.sender_distortion).abs() < 1e-15);
    }

    #[test]
    fn single_cell_designs() {
        let m = model(1.0, 0.5);
        let d0 = lloyd_max(&m, 1).unwrap();
        let d1 = design_level1(&d0, &m).unwrap();
        let p = TypePmf::perceived_by_level2(1.0).unwrap();
        let cfg = DescentConfig::default();
        let d2 = design_level2(&m, 1, &d0.boundaries, &d1.boundaries, &p, &cfg).unwrap();
        let full = design_full_info(&m, 1, &cfg).unwrap();
        let (a, b) = m.x_support();
        for d in [&d1, &d2, &full] {
            assert!(d.boundaries.rows().iter().all(|r| r == &[a, b]));
            assert!(d.perceived_estimates.values()[0].abs() < 1e-10);
        }
        // E(X + S)^2 = 1 + 1 + 2 * 0.5
        assert!((d2.sender_distortion - 3.0).abs() < 1e-4);
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let m = model(1.0, 0.5);
        let d0 = lloyd_max(&m, 4).unwrap();
        let d1 = design_level1(&d0, &m).unwrap();
        let p = TypePmf::perceived_by_level2(1.0).unwrap();
        let cfg = DescentConfig::default();
        assert!(design_level2(&m, 3, &d0.boundaries, &d1.boundaries, &p, &cfg).is_err());
        let wrong = TypePmf::population(1.0).unwrap();
        assert!(design_level2(&m, 4, &d0.boundaries, &d1.boundaries, &wrong, &cfg).is_err());
        let bad = DescentConfig {
            step_size: 0.0,
            ..cfg
        };
        assert!(design_level2(&m, 4, &d0.boundaries, &d1.boundaries, &p, &bad).is_err());
    }
}
