//! Jointly Gaussian (state, bias) source truncated to a rectangle, with the
//! quadrature machinery every expectation in the crate is evaluated against.
//!
//! Integrals at a fixed bias level run along X only. X uses a composite
//! Gauss-Legendre panel grid; an integral over `[lo, hi]` sums the panels that
//! lie fully inside the interval and integrates the two clipped end panels
//! with the same rule mapped onto the clipped piece, so every cell integral is
//! a smooth function of its endpoints. The outer integral over S is a weighted
//! sum over the S grid levels.

use crate::error::{Error, Result};
use crate::quadrature::{panel_edge, GaussLegendre, QuadratureGrid};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::ops::{Add, AddAssign};

/// Parameters of the bivariate normal before truncation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub mean_x: f64,
    pub mean_s: f64,
    /// Standard deviation of X.
    pub sigma_x: f64,
    /// Standard deviation of S.
    pub sigma_s: f64,
    pub rho: f64,
}

impl GaussianParams {
    /// Zero-mean source with unit-variance state, as used by the experiments.
    pub fn standard(sigma_s2: f64, rho: f64) -> Self {
        Self {
            mean_x: 0.0,
            mean_s: 0.0,
            sigma_x: 1.0,
            sigma_s: sigma_s2.sqrt(),
            rho,
        }
    }
}

/// Discretization of the support rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub x_panels: usize,
    pub x_nodes_per_panel: usize,
    pub s_panels: usize,
    pub s_nodes_per_panel: usize,
    /// Half-width of each support interval in standard deviations.
    pub truncation_sigmas: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            x_panels: 64,
            x_nodes_per_panel: 8,
            s_panels: 13,
            s_nodes_per_panel: 5,
            truncation_sigmas: 5.0,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.x_panels == 0 || self.x_nodes_per_panel == 0 {
            return Err(Error::Argument("x grid must have at least one node".into()));
        }
        if self.s_panels == 0 || self.s_nodes_per_panel == 0 {
            return Err(Error::Argument("s grid must have at least one node".into()));
        }
        if (self.s_panels * self.s_nodes_per_panel).is_multiple_of(2) {
            return Err(Error::Argument(
                "s grid must have an odd number of levels so the mean is a node".into(),
            ));
        }
        if !(self.truncation_sigmas.is_finite() && self.truncation_sigmas > 0.0) {
            return Err(Error::Argument("truncation_sigmas must be positive".into()));
        }
        Ok(())
    }
}

/// Zeroth, first and second raw moments of the density over an interval.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub mass: f64,
    pub first: f64,
    pub second: f64,
}

impl Moments {
    /// `∫ (x - c)^2 f dx` expanded from the raw moments.
    #[inline]
    pub fn squared_error(&self, c: f64) -> f64 {
        (self.second - 2.0 * c * self.first + c * c * self.mass).max(0.0)
    }

    pub fn scaled(&self, w: f64) -> Self {
        Self {
            mass: self.mass * w,
            first: self.first * w,
            second: self.second * w,
        }
    }
}

impl Add for Moments {
    type Output = Moments;
    fn add(self, o: Moments) -> Moments {
        Moments {
            mass: self.mass + o.mass,
            first: self.first + o.first,
            second: self.second + o.second,
        }
    }
}

impl AddAssign for Moments {
    fn add_assign(&mut self, o: Moments) {
        *self = *self + o;
    }
}

/// Conditional Gaussian slice `f(x, s_k) = amp * exp(-(x - mean)^2 * inv_two_var)`.
#[derive(Debug, Clone)]
struct Slice {
    amp: f64,
    mean: f64,
    inv_two_var: f64,
}

impl Slice {
    #[inline]
    fn eval(&self, x: f64) -> f64 {
        let d = x - self.mean;
        self.amp * (-d * d * self.inv_two_var).exp()
    }
}

#[derive(Debug, Clone)]
pub struct SourceModel {
    params: GaussianParams,
    grid_spec: GridSpec,
    x_support: (f64, f64),
    s_support: (f64, f64),
    x_grid: QuadratureGrid,
    s_grid: QuadratureGrid,
    rule: GaussLegendre,
    /// Normalizing constant of the truncated density under the quadrature.
    norm: f64,
    slices: Vec<Slice>,
    /// `panel_moments[k][j]`: moments of slice `k` over X panel `j`.
    panel_moments: Vec<Vec<Moments>>,
    /// `w_k * ∫ f(x, s_k) dx`, the probability carried by each S level.
    row_mass: Vec<f64>,
}

impl SourceModel {
    pub fn gaussian(params: GaussianParams, grid: GridSpec) -> Result<Self> {
        let GaussianParams {
            mean_x,
            mean_s,
            sigma_x,
            sigma_s,
            rho,
        } = params;
        if !(sigma_x.is_finite() && sigma_x > 0.0) || !(sigma_s.is_finite() && sigma_s > 0.0) {
            return Err(Error::Argument(format!(
                "standard deviations must be positive, got sigma_x={sigma_x}, sigma_s={sigma_s}"
            )));
        }
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::Argument(format!(
                "rho must lie in [0, 1), got {rho}"
            )));
        }
        if !mean_x.is_finite() || !mean_s.is_finite() {
            return Err(Error::Argument("means must be finite".into()));
        }
        grid.validate()?;

        let t = grid.truncation_sigmas;
        let x_support = (mean_x - t * sigma_x, mean_x + t * sigma_x);
        let s_support = (mean_s - t * sigma_s, mean_s + t * sigma_s);
        let x_grid = QuadratureGrid::composite(
            x_support.0,
            x_support.1,
            grid.x_panels,
            grid.x_nodes_per_panel,
        );
        let mut s_grid = QuadratureGrid::composite(
            s_support.0,
            s_support.1,
            grid.s_panels,
            grid.s_nodes_per_panel,
        );
        // Pin the middle level to the mean exactly.
        let mid = s_grid.len() / 2;
        s_grid.nodes[mid] = mean_s;

        let cond_sd = sigma_x * (1.0 - rho * rho).sqrt();
        let inv_two_var = 1.0 / (2.0 * cond_sd * cond_sd);
        let slope = rho * sigma_x / sigma_s;
        let mut slices: Vec<Slice> = s_grid
            .nodes
            .iter()
            .map(|&s| {
                let zs = (s - mean_s) / sigma_s;
                let marginal = (-0.5 * zs * zs).exp() / ((2.0 * PI).sqrt() * sigma_s);
                Slice {
                    amp: marginal / ((2.0 * PI).sqrt() * cond_sd),
                    mean: mean_x + slope * (s - mean_s),
                    inv_two_var,
                }
            })
            .collect();

        let rule = GaussLegendre::new(grid.x_nodes_per_panel);
        let mut model = Self {
            params,
            grid_spec: grid,
            x_support,
            s_support,
            x_grid,
            s_grid,
            rule,
            norm: 1.0,
            slices: Vec::new(),
            panel_moments: Vec::new(),
            row_mass: Vec::new(),
        };

        let raw: Vec<Vec<Moments>> = slices.iter().map(|sl| model.panel_table(sl)).collect();
        let norm: f64 = raw
            .iter()
            .zip(&model.s_grid.weights)
            .map(|(row, w)| w * row.iter().map(|m| m.mass).sum::<f64>())
            .sum();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::Argument("source has no mass on the grid".into()));
        }
        for sl in &mut slices {
            sl.amp /= norm;
        }
        model.norm = norm;
        model.panel_moments = slices.iter().map(|sl| model.panel_table(sl)).collect();
        model.row_mass = model
            .panel_moments
            .iter()
            .zip(&model.s_grid.weights)
            .map(|(row, w)| w * row.iter().map(|m| m.mass).sum::<f64>())
            .collect();
        model.slices = slices;
        Ok(model)
    }

    fn panel_table(&self, slice: &Slice) -> Vec<Moments> {
        let (a, b) = self.x_support;
        let p = self.grid_spec.x_panels;
        (0..p)
            .map(|j| {
                self.integrate_slice(slice, panel_edge(a, b, p, j), panel_edge(a, b, p, j + 1))
            })
            .collect()
    }

    #[inline]
    fn integrate_slice(&self, slice: &Slice, lo: f64, hi: f64) -> Moments {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let mut m = Moments::default();
        for (t, w) in self.rule.nodes.iter().zip(&self.rule.weights) {
            let x = mid + half * t;
            let fw = w * slice.eval(x);
            m.mass += fw;
            m.first += fw * x;
            m.second += fw * x * x;
        }
        m.scaled(half)
    }

    pub fn params(&self) -> &GaussianParams {
        &self.params
    }

    pub fn grid_spec(&self) -> &GridSpec {
        &self.grid_spec
    }

    pub fn x_support(&self) -> (f64, f64) {
        self.x_support
    }

    pub fn s_support(&self) -> (f64, f64) {
        self.s_support
    }

    pub fn x_grid(&self) -> &QuadratureGrid {
        &self.x_grid
    }

    pub fn s_grid(&self) -> &QuadratureGrid {
        &self.s_grid
    }

    pub fn s_levels(&self) -> &[f64] {
        &self.s_grid.nodes
    }

    pub fn s_weights(&self) -> &[f64] {
        &self.s_grid.weights
    }

    pub fn num_s_levels(&self) -> usize {
        self.s_grid.len()
    }

    /// Probability carried by S level `k` (quadrature weight times slice mass).
    pub fn row_mass(&self, k: usize) -> f64 {
        self.row_mass[k]
    }

    /// Variance of X under the truncated quadrature measure.
    pub fn variance_x(&self) -> f64 {
        let (a, b) = self.x_support;
        let total = (0..self.num_s_levels())
            .map(|k| self.moments_unchecked(k, a, b).scaled(self.s_weights()[k]))
            .fold(Moments::default(), |acc, m| acc + m);
        total.second - total.first * total.first
    }

    fn in_x(&self, x: f64) -> bool {
        let (a, b) = self.x_support;
        let tol = 1e-12 * (b - a);
        x >= a - tol && x <= b + tol
    }

    /// Truncated and renormalized joint density at an arbitrary point of the rectangle.
    pub fn joint_density(&self, x: f64, s: f64) -> Result<f64> {
        let (sa, sb) = self.s_support;
        let stol = 1e-12 * (sb - sa);
        if !self.in_x(x) || s < sa - stol || s > sb + stol || x.is_nan() || s.is_nan() {
            return Err(Error::Domain(format!("({x}, {s}) outside support")));
        }
        let GaussianParams {
            mean_x,
            mean_s,
            sigma_x,
            sigma_s,
            rho,
        } = self.params;
        let zx = (x - mean_x) / sigma_x;
        let zs = (s - mean_s) / sigma_s;
        let one_m = 1.0 - rho * rho;
        let q = (zx * zx - 2.0 * rho * zx * zs + zs * zs) / one_m;
        let dens = (-0.5 * q).exp() / (2.0 * PI * sigma_x * sigma_s * one_m.sqrt());
        Ok(dens / self.norm)
    }

    /// Density on S level `k`, without a support check.
    #[inline]
    pub fn density_at_level(&self, k: usize, x: f64) -> f64 {
        self.slices[k].eval(x)
    }

    fn check_interval(&self, k: usize, lo: f64, hi: f64) -> Result<()> {
        if k >= self.num_s_levels() {
            return Err(Error::Argument(format!("s index {k} out of range")));
        }
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::Argument(format!("reversed interval [{lo}, {hi}]")));
        }
        if !self.in_x(lo) || !self.in_x(hi) {
            return Err(Error::Domain(format!(
                "interval [{lo}, {hi}] outside X support"
            )));
        }
        Ok(())
    }

    /// Moments of `f(., s_k)` over `[lo, hi]`.
    pub fn cell_moments(&self, k: usize, lo: f64, hi: f64) -> Result<Moments> {
        self.check_interval(k, lo, hi)?;
        Ok(self.moments_unchecked(k, lo, hi))
    }

    /// Hot-path variant of [`Self::cell_moments`]; bounds are clamped to the support
    /// and an empty or reversed interval yields zero.
    pub fn moments_unchecked(&self, k: usize, lo: f64, hi: f64) -> Moments {
        let (a, b) = self.x_support;
        let lo = lo.max(a);
        let hi = hi.min(b);
        if hi <= lo {
            return Moments::default();
        }
        let slice = &self.slices[k];
        let jl = self.panel_of(lo);
        let jh = self.panel_of(hi);
        if jl == jh {
            return self.integrate_slice(slice, lo, hi);
        }
        let p = self.grid_spec.x_panels;
        let mut acc = self.integrate_slice(slice, lo, panel_edge(a, b, p, jl + 1));
        for m in &self.panel_moments[k][jl + 1..jh] {
            acc += *m;
        }
        acc += self.integrate_slice(slice, panel_edge(a, b, p, jh), hi);
        acc
    }

    /// Panel holding `x`; a point on an interior edge belongs to the panel on its left.
    fn panel_of(&self, x: f64) -> usize {
        let (a, b) = self.x_support;
        let p = self.grid_spec.x_panels;
        let mut j = (((x - a) / (b - a)) * p as f64).floor() as isize;
        j = j.clamp(0, p as isize - 1);
        let mut j = j as usize;
        while j > 0 && x <= panel_edge(a, b, p, j) {
            j -= 1;
        }
        while j + 1 < p && x > panel_edge(a, b, p, j + 1) {
            j += 1;
        }
        j
    }

    pub fn cell_mass(&self, k: usize, lo: f64, hi: f64) -> Result<f64> {
        Ok(self.cell_moments(k, lo, hi)?.mass)
    }

    pub fn cell_first_moment(&self, k: usize, lo: f64, hi: f64) -> Result<f64> {
        Ok(self.cell_moments(k, lo, hi)?.first)
    }

    /// `∫_{lo}^{hi} (x + s_k·[bias_in_loss] − target)^2 f(x, s_k) dx`.
    pub fn quadratic_distortion_integral(
        &self,
        k: usize,
        lo: f64,
        hi: f64,
        target: f64,
        bias_in_loss: bool,
    ) -> Result<f64> {
        let m = self.cell_moments(k, lo, hi)?;
        Ok(m.squared_error(self.effective_target(k, target, bias_in_loss)))
    }

    /// Target shifted so that `(x + s − y)^2` reads as `(x − c)^2`.
    #[inline]
    pub fn effective_target(&self, k: usize, target: f64, bias_in_loss: bool) -> f64 {
        if bias_in_loss {
            target - self.s_grid.nodes[k]
        } else {
            target
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn standard(rho: f64) -> SourceModel {
        SourceModel::gaussian(GaussianParams::standard(1.0, rho), GridSpec::default()).unwrap()
    }

    fn total(model: &SourceModel) -> Moments {
        let (a, b) = model.x_support();
        (0..model.num_s_levels())
            .map(|k| {
                model
                    .cell_moments(k, a, b)
                    .unwrap()
                    .scaled(model.s_weights()[k])
            })
            .fold(Moments::default(), |acc, m| acc + m)
    }

    #[test]
    fn density_at_mode() {
        let m = standard(0.0);
        let d = m.joint_density(0.0, 0.0).unwrap();
        assert!((d - 1.0 / (2.0 * PI)).abs() < 1e-6, "{d}");
        let m = standard(0.5);
        let d = m.joint_density(0.0, 0.0).unwrap();
        assert!((d - 1.0 / (2.0 * PI * 0.75f64.sqrt())).abs() < 1e-6, "{d}");
    }

    #[test]
    fn density_symmetry_and_slices_agree() {
        let m = standard(0.7);
        for &(x, s) in &[(0.3, 1.2), (-2.0, 0.4), (4.1, -3.3)] {
            let a = m.joint_density(x, s).unwrap();
            let b = m.joint_density(-x, -s).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
        for k in [0, 10, 32, 50] {
            let s = m.s_levels()[k];
            let a = m.joint_density(1.1, s).unwrap();
            let b = m.density_at_level(k, 1.1);
            assert!((a - b).abs() < 1e-14 * a.max(1e-300) + 1e-300, "{a} vs {b}");
        }
    }

    #[test]
    fn density_outside_support_is_domain_error() {
        let m = standard(0.5);
        assert!(matches!(m.joint_density(5.5, 0.0), Err(Error::Domain(_))));
        assert!(matches!(m.joint_density(0.0, -6.0), Err(Error::Domain(_))));
    }

    #[test]
    fn reversed_bounds_rejected() {
        let m = standard(0.5);
        assert!(matches!(m.cell_mass(3, 1.0, 0.0), Err(Error::Argument(_))));
        assert!(matches!(
            m.cell_mass(999, 0.0, 1.0),
            Err(Error::Argument(_))
        ));
        assert!(matches!(m.cell_mass(3, 0.0, 6.0), Err(Error::Domain(_))));
    }

    #[test]
    fn zero_width_is_zero() {
        let m = standard(0.5);
        assert_eq!(m.cell_mass(7, 0.25, 0.25).unwrap(), 0.0);
        assert_eq!(m.cell_first_moment(7, 0.25, 0.25).unwrap(), 0.0);
        assert_eq!(
            m.quadratic_distortion_integral(7, 0.25, 0.25, 1.0, true)
                .unwrap(),
            0.0
        );
    }

    #[test]
    fn normalization_and_moments() {
        for &s2 in &[0.1, 1.0, 1.5] {
            for &rho in &[0.1, 0.5, 0.7] {
                let m =
                    SourceModel::gaussian(GaussianParams::standard(s2, rho), GridSpec::default())
                        .unwrap();
                let t = total(&m);
                assert!((t.mass - 1.0).abs() < 1e-6);
                assert!(t.first.abs() < 1e-6);
                assert!((t.second - 1.0).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn variance_of_state_plus_bias() {
        let m = standard(0.5);
        let (a, b) = m.x_support();
        let d: f64 = (0..m.num_s_levels())
            .map(|k| {
                m.s_weights()[k] * m.quadratic_distortion_integral(k, a, b, 0.0, true).unwrap()
            })
            .sum();
        assert!((d - 3.0).abs() < 1e-3, "{d}");
        let d: f64 = (0..m.num_s_levels())
            .map(|k| {
                m.s_weights()[k]
                    * m.quadratic_distortion_integral(k, a, b, 0.0, false)
                        .unwrap()
            })
            .sum();
        assert!((d - 1.0).abs() < 1e-4, "{d}");
    }

    #[test]
    fn split_interval_is_additive() {
        let m = standard(0.5);
        for k in [5, 32, 60] {
            let whole = m.cell_moments(k, -1.3, 2.7).unwrap();
            let left = m.cell_moments(k, -1.3, 0.41).unwrap();
            let right = m.cell_moments(k, 0.41, 2.7).unwrap();
            assert!((whole.mass - left.mass - right.mass).abs() < 1e-14);
            assert!((whole.first - left.first - right.first).abs() < 1e-14);
        }
    }

    #[test]
    fn cell_mass_mirror_symmetry() {
        let m = standard(0.7);
        let n = m.num_s_levels();
        for k in [0, 9, 20, 32] {
            for &(lo, hi) in &[(-1.0, 0.3), (0.0, 5.0), (-4.9, 2.2), (0.15625, 0.3125)] {
                let a = m.cell_mass(k, lo, hi).unwrap();
                let b = m.cell_mass(n - 1 - k, -hi, -lo).unwrap();
                assert!((a - b).abs() < 1e-10, "k={k} [{lo},{hi}] {a} vs {b}");
            }
        }
    }

    #[test]
    fn bad_parameters_rejected() {
        let grid = GridSpec::default();
        assert!(SourceModel::gaussian(GaussianParams::standard(1.0, 1.0), grid).is_err());
        assert!(SourceModel::gaussian(GaussianParams::standard(1.0, -0.1), grid).is_err());
        assert!(SourceModel::gaussian(GaussianParams::standard(0.0, 0.5), grid).is_err());
        let even = GridSpec {
            s_panels: 8,
            s_nodes_per_panel: 8,
            ..grid
        };
        assert!(SourceModel::gaussian(GaussianParams::standard(1.0, 0.5), even).is_err());
    }
}
