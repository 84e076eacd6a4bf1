//! The fully rational receiver: actual estimates and distortion for a sender
//! population, and the per-type accounting around them.

use crate::design::{DesignResult, SenderLevel};
use crate::error::{Error, Result};
use crate::quantizer::{
    perceived_estimates_mixture, receiver_distortion_mixture, sender_distortion, BoundaryMatrix,
    EstimateVector,
};
use crate::source::SourceModel;
use crate::types::TypePmf;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    /// Population pmf, present for the three-type population.
    pub type_pmf: Option<TypePmf>,
    /// Level 2's perceived pmf, present for the three-type population.
    pub perceived_pmf: Option<TypePmf>,
    /// Sender of each population member, in mixture order.
    pub members: Vec<SenderLevel>,
    /// Mixture weight of each member.
    pub weights: Vec<f64>,
    /// `y^*`.
    pub actual_estimates: EstimateVector,
    /// `D_D^*`.
    pub receiver_distortion: f64,
    /// Each member's distortion under the estimates it perceives.
    pub per_type_sender_distortion: Vec<f64>,
    /// Each member's distortion under the actual estimates.
    pub per_type_sender_distortion_actual: Vec<f64>,
    /// Receiver distortion conditional on each member, at `y^*`.
    pub per_type_receiver_contribution: Vec<f64>,
    pub empty_cell_flags: Vec<usize>,
    pub config_echo: Option<serde_json::Value>,
}

impl EquilibriumReport {
    /// `Σ_k p_k · contribution_k`.
    pub fn recomposed_distortion(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.per_type_receiver_contribution)
            .map(|(w, c)| w * c)
            .sum()
    }
}

/// Evaluates an arbitrary weighted population of designed senders.
pub fn evaluate_mixture(
    model: &SourceModel,
    members: &[(&DesignResult, f64)],
) -> Result<EquilibriumReport> {
    if members.is_empty() {
        return Err(Error::Argument("empty population".into()));
    }
    let m_cells = members[0].0.boundaries.num_cells();
    for (d, _) in members {
        d.boundaries.validate(model)?;
        if d.boundaries.num_cells() != m_cells || d.perceived_estimates.len() != m_cells {
            return Err(Error::Argument("population members disagree on M".into()));
        }
    }
    let classifiers: Vec<(&BoundaryMatrix, f64)> =
        members.iter().map(|(d, w)| (&d.boundaries, *w)).collect();
    let actual = perceived_estimates_mixture(model, &classifiers)?;
    let receiver_distortion = receiver_distortion_mixture(model, &classifiers, &actual.estimates)?;

    let mut perceived = Vec::with_capacity(members.len());
    let mut at_actual = Vec::with_capacity(members.len());
    let mut contribution = Vec::with_capacity(members.len());
    for (d, _) in members {
        let bias = d.level.bias_in_loss();
        perceived.push(sender_distortion(
            model,
            &d.boundaries,
            &d.perceived_estimates,
            bias,
        )?);
        at_actual.push(sender_distortion(
            model,
            &d.boundaries,
            &actual.estimates,
            bias,
        )?);
        contribution.push(sender_distortion(
            model,
            &d.boundaries,
            &actual.estimates,
            false,
        )?);
    }
    Ok(EquilibriumReport {
        type_pmf: None,
        perceived_pmf: None,
        members: members.iter().map(|(d, _)| d.level).collect(),
        weights: members.iter().map(|(_, w)| *w).collect(),
        actual_estimates: actual.estimates,
        receiver_distortion,
        per_type_sender_distortion: perceived,
        per_type_sender_distortion_actual: at_actual,
        per_type_receiver_contribution: contribution,
        empty_cell_flags: actual.empty_cells,
        config_echo: None,
    })
}

/// The three-type population `(Q⁰, Q¹, Q²)` mixed by `p`.
pub fn evaluate_population(
    model: &SourceModel,
    designs: [&DesignResult; 3],
    p: &TypePmf,
    p_prime: &TypePmf,
) -> Result<EquilibriumReport> {
    if p.probs.len() != 3 {
        return Err(Error::Argument(
            "population pmf must cover levels 0..=2".into(),
        ));
    }
    if p_prime.probs.len() != 2 {
        return Err(Error::Argument(
            "perceived pmf must cover levels 0 and 1".into(),
        ));
    }
    let expected = [
        SenderLevel::Level0,
        SenderLevel::Level1,
        SenderLevel::Level2,
    ];
    for (d, lvl) in designs.iter().zip(expected) {
        if d.level != lvl {
            return Err(Error::Argument(format!(
                "expected a {lvl:?} design, got {:?}",
                d.level
            )));
        }
    }
    let members: Vec<(&DesignResult, f64)> = designs
        .iter()
        .copied()
        .zip(p.probs.iter().copied())
        .collect();
    let mut report = evaluate_mixture(model, &members)?;
    report.type_pmf = Some(p.clone());
    report.perceived_pmf = Some(p_prime.clone());
    Ok(report)
}

/// A population made of a single sender.
pub fn evaluate_single(model: &SourceModel, design: &DesignResult) -> Result<EquilibriumReport> {
    evaluate_mixture(model, &[(design, 1.0)])
}
