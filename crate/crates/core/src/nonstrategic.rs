//! The honest sender's classical quantizer for the marginal of X.

use crate::design::{derive_seed, DesignResult, SenderLevel};
use crate::error::{Error, Result};
use crate::quantizer::{
    cell_totals, estimates_from_totals, sender_distortion, BoundaryMatrix, MixtureEstimates,
};
use crate::source::SourceModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LloydConfig {
    pub num_inits: usize,
    pub max_iters: usize,
    /// Stop once no boundary moves by more than this.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for LloydConfig {
    fn default() -> Self {
        Self {
            num_inits: 10,
            max_iters: 10_000,
            tolerance: 1e-10,
            seed: 0,
        }
    }
}

/// Lloyd-Max design with the default configuration.
pub fn lloyd_max(model: &SourceModel, num_cells: usize) -> Result<DesignResult> {
    lloyd_max_with(model, num_cells, &LloydConfig::default())
}

/// Best Lloyd fixed point over `cfg.num_inits` random monotone starts.
pub fn lloyd_max_with(
    model: &SourceModel,
    num_cells: usize,
    cfg: &LloydConfig,
) -> Result<DesignResult> {
    if num_cells == 0 {
        return Err(Error::Argument("M must be at least 1".into()));
    }
    if cfg.num_inits == 0 {
        return Err(Error::Argument("num_inits must be at least 1".into()));
    }
    let (a, b) = model.x_support();
    let mut best: Option<DesignResult> = None;
    for i in 0..cfg.num_inits {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, i as u64));
        let mut init: Vec<f64> = (0..num_cells - 1).map(|_| rng.gen_range(a..b)).collect();
        init.sort_by(f64::total_cmp);
        let mut res = lloyd_from(model, &init, cfg)?;
        res.init_index = i;
        // strict comparison keeps the lowest index on ties
        if best
            .as_ref()
            .is_none_or(|b| res.sender_distortion < b.sender_distortion)
        {
            best = Some(res);
        }
    }
    Ok(best.expect("at least one initialization"))
}

/// Lloyd iteration from the given interior boundaries: alternate conditional
/// means and midpoints until the boundaries stop moving.
pub fn lloyd_from(model: &SourceModel, init: &[f64], cfg: &LloydConfig) -> Result<DesignResult> {
    let (a, b) = model.x_support();
    let mut interior: Vec<f64> = init.iter().map(|v| v.clamp(a, b)).collect();
    interior.sort_by(f64::total_cmp);
    let mut trace = Vec::new();
    let mut q = BoundaryMatrix::constant(model, &interior)?;
    let mut est = conditional_means(model, &q);
    for _ in 0..cfg.max_iters {
        let y = est.estimates.values();
        let next: Vec<f64> = (0..interior.len())
            .map(|m| (0.5 * (y[m] + y[m + 1])).clamp(a, b))
            .collect();
        let moved = next
            .iter()
            .zip(&interior)
            .map(|(n, o)| (n - o).abs())
            .fold(0.0, f64::max);
        interior = next;
        q = BoundaryMatrix::constant(model, &interior)?;
        est = conditional_means(model, &q);
        trace.push(sender_distortion(model, &q, &est.estimates, false)?);
        if moved < cfg.tolerance {
            break;
        }
    }
    let d = sender_distortion(model, &q, &est.estimates, false)?;
    Ok(DesignResult {
        level: SenderLevel::Level0,
        boundaries: q,
        perceived_estimates: est.estimates,
        sender_distortion: d,
        trace,
        init_index: 0,
        empty_cell_flags: est.empty_cells,
        failed_inits: Vec::new(),
    })
}

fn conditional_means(model: &SourceModel, q: &BoundaryMatrix) -> MixtureEstimates {
    estimates_from_totals(&cell_totals(model, q), &[(q, 1.0)])
}
