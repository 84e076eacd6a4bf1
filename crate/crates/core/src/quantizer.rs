//! Per-bias-level monotone classifiers and the conditional-mean machinery
//! shared by every sender type and by the receiver.

use crate::error::{Error, Result};
use crate::source::{Moments, SourceModel};
use serde::{Deserialize, Serialize};

/// Total mixture mass below which a message is treated as never sent.
pub const EMPTY_CELL_MASS: f64 = 1e-12;

/// One sorted boundary vector `[q_{s,0}, ..., q_{s,M}]` per S grid level, with
/// `q_{s,0} = a_X` and `q_{s,M} = b_X`. Cell `m` (0-based) at level `k` is
/// `[bounds[k][m], bounds[k][m + 1]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryMatrix {
    #[serde(rename = "M")]
    num_cells: usize,
    s_levels: Vec<f64>,
    bounds: Vec<Vec<f64>>,
}

impl BoundaryMatrix {
    /// Validates shape and monotonicity against `model`.
    pub fn from_rows(model: &SourceModel, num_cells: usize, bounds: Vec<Vec<f64>>) -> Result<Self> {
        let q = Self {
            num_cells,
            s_levels: model.s_levels().to_vec(),
            bounds,
        };
        q.validate(model)?;
        Ok(q)
    }

    /// The same interior boundaries at every S level.
    pub fn constant(model: &SourceModel, interior: &[f64]) -> Result<Self> {
        let (a, b) = model.x_support();
        let mut row = Vec::with_capacity(interior.len() + 2);
        row.push(a);
        row.extend(interior.iter().map(|q| q.clamp(a, b)));
        row.push(b);
        Self::from_rows(model, interior.len() + 1, vec![row; model.num_s_levels()])
    }

    /// Builds from per-level interior boundaries, clamping into the support.
    pub fn from_interior(model: &SourceModel, interior: &[Vec<f64>]) -> Result<Self> {
        let (a, b) = model.x_support();
        let m = interior.first().map_or(0, |r| r.len()) + 1;
        let rows = interior
            .iter()
            .map(|r| {
                let mut row = Vec::with_capacity(m + 1);
                row.push(a);
                row.extend(r.iter().map(|q| q.clamp(a, b)));
                row.push(b);
                row
            })
            .collect();
        Self::from_rows(model, m, rows)
    }

    pub fn validate(&self, model: &SourceModel) -> Result<()> {
        if self.num_cells == 0 {
            return Err(Error::Argument("classifier needs at least one cell".into()));
        }
        if self.bounds.len() != model.num_s_levels() || self.s_levels.len() != self.bounds.len() {
            return Err(Error::Argument(format!(
                "classifier has {} rows, model has {} S levels",
                self.bounds.len(),
                model.num_s_levels()
            )));
        }
        let (a, b) = model.x_support();
        for (k, row) in self.bounds.iter().enumerate() {
            if row.len() != self.num_cells + 1 {
                return Err(Error::Argument(format!(
                    "row {k} has {} boundaries, expected {}",
                    row.len(),
                    self.num_cells + 1
                )));
            }
            if row[0] != a || row[self.num_cells] != b {
                return Err(Error::Argument(format!(
                    "row {k} does not span the X support"
                )));
            }
            if row.iter().any(|v| !v.is_finite()) || row.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::Argument(format!("row {k} is not monotone")));
            }
        }
        Ok(())
    }

    pub fn num_cells(&self) -> usize {
        self.num_cells
    }

    pub fn s_levels(&self) -> &[f64] {
        &self.s_levels
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.bounds
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.bounds[k]
    }

    /// Cell `m` at level `k` as `(lo, hi)`.
    #[inline]
    pub fn cell(&self, k: usize, m: usize) -> (f64, f64) {
        (self.bounds[k][m], self.bounds[k][m + 1])
    }

    /// Interior boundaries only, one row per level.
    pub fn interior(&self) -> Vec<Vec<f64>> {
        self.bounds
            .iter()
            .map(|r| r[1..self.num_cells].to_vec())
            .collect()
    }

    pub(crate) fn row_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.bounds[k]
    }

    fn same_shape(&self, other: &BoundaryMatrix) -> bool {
        self.num_cells == other.num_cells && self.s_levels == other.s_levels
    }
}

/// Receiver actions, one per message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EstimateVector(pub Vec<f64>);

impl EstimateVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Maps a source point to its message. The bias is snapped to the nearest S level;
/// a point on an interior boundary belongs to the cell on its left. Returns the
/// 0-based cell index.
pub fn encode(model: &SourceModel, q: &BoundaryMatrix, x: f64, s: f64) -> Result<usize> {
    let (a, b) = model.x_support();
    if x.is_nan() || x < a || x > b {
        return Err(Error::Domain(format!("x = {x} outside [{a}, {b}]")));
    }
    let (sa, sb) = model.s_support();
    if s.is_nan() || s < sa || s > sb {
        return Err(Error::Domain(format!("s = {s} outside [{sa}, {sb}]")));
    }
    let row = q.row(model.s_grid().nearest(s));
    let m = row[1..].partition_point(|&edge| edge < x);
    Ok(m.min(q.num_cells - 1))
}

/// Conditional-mean estimates of a weighted mixture of classifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureEstimates {
    pub estimates: EstimateVector,
    /// Total mixture probability of each message.
    pub masses: Vec<f64>,
    /// Messages whose mass fell below [`EMPTY_CELL_MASS`]; their estimate is the
    /// midpoint of the hull of the contributing intervals.
    pub empty_cells: Vec<usize>,
}

fn check_mixture(model: &SourceModel, classifiers: &[(&BoundaryMatrix, f64)]) -> Result<usize> {
    let (first, _) = classifiers
        .first()
        .ok_or_else(|| Error::Argument("empty classifier list".into()))?;
    let mut total = 0.0;
    for (q, w) in classifiers {
        if !(w.is_finite() && *w >= 0.0) {
            return Err(Error::Argument(format!("mixture weight {w} is negative")));
        }
        if !q.same_shape(first) || q.bounds.len() != model.num_s_levels() {
            return Err(Error::Argument(
                "classifiers disagree on M or the S grid".into(),
            ));
        }
        total += w;
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Argument(format!(
            "mixture weights sum to {total}, expected 1"
        )));
    }
    Ok(first.num_cells)
}

/// Per-message moments of one classifier, integrated over X and S.
pub fn cell_totals(model: &SourceModel, q: &BoundaryMatrix) -> Vec<Moments> {
    let mut out = vec![Moments::default(); q.num_cells];
    for (k, w) in model.s_weights().iter().enumerate() {
        for (m, slot) in out.iter_mut().enumerate() {
            let (lo, hi) = q.cell(k, m);
            *slot += model.moments_unchecked(k, lo, hi).scaled(*w);
        }
    }
    out
}

/// `values[m] = Σ_i w_i ∫∫_{cell m of i} x f / Σ_i w_i ∫∫_{cell m of i} f`.
///
/// With a single classifier this is the receiver's best response to it; with the
/// level-0/level-1 classifiers weighted by the perceived pmf it gives level 2's
/// perceived estimates; with all three weighted by the population pmf it gives the
/// actual receiver estimates.
pub fn perceived_estimates_mixture(
    model: &SourceModel,
    classifiers: &[(&BoundaryMatrix, f64)],
) -> Result<MixtureEstimates> {
    let m_cells = check_mixture(model, classifiers)?;
    let mut totals = vec![Moments::default(); m_cells];
    for (q, w) in classifiers {
        if *w == 0.0 {
            continue;
        }
        for (slot, t) in totals.iter_mut().zip(cell_totals(model, q)) {
            *slot += t.scaled(*w);
        }
    }
    Ok(estimates_from_totals(&totals, classifiers))
}

pub(crate) fn estimates_from_totals(
    totals: &[Moments],
    classifiers: &[(&BoundaryMatrix, f64)],
) -> MixtureEstimates {
    let mut values = Vec::with_capacity(totals.len());
    let mut empty = Vec::new();
    for (m, t) in totals.iter().enumerate() {
        if t.mass < EMPTY_CELL_MASS {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for (q, w) in classifiers {
                if *w == 0.0 {
                    continue;
                }
                for row in &q.bounds {
                    lo = lo.min(row[m]);
                    hi = hi.max(row[m + 1]);
                }
            }
            values.push(0.5 * (lo + hi));
            empty.push(m);
        } else {
            values.push(t.first / t.mass);
        }
    }
    MixtureEstimates {
        estimates: EstimateVector(values),
        masses: totals.iter().map(|t| t.mass).collect(),
        empty_cells: empty,
    }
}

/// `Σ_m Σ_s w_s ∫_{cell} (x + s·[bias_in_loss] − y_m)^2 f dx`.
pub fn sender_distortion(
    model: &SourceModel,
    q: &BoundaryMatrix,
    y: &EstimateVector,
    bias_in_loss: bool,
) -> Result<f64> {
    if y.len() != q.num_cells {
        return Err(Error::Argument(format!(
            "{} estimates for {} cells",
            y.len(),
            q.num_cells
        )));
    }
    if q.bounds.len() != model.num_s_levels() {
        return Err(Error::Argument(
            "classifier does not match the S grid".into(),
        ));
    }
    Ok(sender_distortion_unchecked(model, q, &y.0, bias_in_loss))
}

pub(crate) fn sender_distortion_unchecked(
    model: &SourceModel,
    q: &BoundaryMatrix,
    y: &[f64],
    bias_in_loss: bool,
) -> f64 {
    let mut total = 0.0;
    for (k, w) in model.s_weights().iter().enumerate() {
        total += w * row_distortion(model, k, q.row(k), y, bias_in_loss);
    }
    total
}

/// Distortion of a single boundary row at level `k`, before the S weight.
#[inline]
pub(crate) fn row_distortion(
    model: &SourceModel,
    k: usize,
    row: &[f64],
    y: &[f64],
    bias_in_loss: bool,
) -> f64 {
    let mut acc = 0.0;
    for (m, ym) in y.iter().enumerate() {
        let mom = model.moments_unchecked(k, row[m], row[m + 1]);
        acc += mom.squared_error(model.effective_target(k, *ym, bias_in_loss));
    }
    acc
}

/// `Σ_i w_i Σ_m Σ_s w_s ∫_{cell m of i} (x − y_m)^2 f dx`.
pub fn receiver_distortion_mixture(
    model: &SourceModel,
    classifiers: &[(&BoundaryMatrix, f64)],
    y: &EstimateVector,
) -> Result<f64> {
    let m_cells = check_mixture(model, classifiers)?;
    if y.len() != m_cells {
        return Err(Error::Argument(format!(
            "{} estimates for {m_cells} cells",
            y.len()
        )));
    }
    Ok(classifiers
        .iter()
        .filter(|(_, w)| *w > 0.0)
        .map(|(q, w)| w * sender_distortion_unchecked(model, q, &y.0, false))
        .sum())
}

/// Serialized classifier artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierDocument {
    #[serde(rename = "M")]
    pub num_cells: usize,
    pub s_levels: Vec<f64>,
    pub bounds: Vec<Vec<f64>>,
    pub estimates: EstimateVector,
}

impl ClassifierDocument {
    pub fn new(q: &BoundaryMatrix, y: &EstimateVector) -> Self {
        Self {
            num_cells: q.num_cells,
            s_levels: q.s_levels.clone(),
            bounds: q.bounds.clone(),
            estimates: y.clone(),
        }
    }

    pub fn into_parts(self, model: &SourceModel) -> Result<(BoundaryMatrix, EstimateVector)> {
        let q = BoundaryMatrix {
            num_cells: self.num_cells,
            s_levels: self.s_levels,
            bounds: self.bounds,
        };
        q.validate(model)?;
        if self.estimates.len() != q.num_cells {
            return Err(Error::Argument("estimate count does not match M".into()));
        }
        Ok((q, self.estimates))
    }
}
