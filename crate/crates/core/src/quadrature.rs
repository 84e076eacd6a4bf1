//! Gauss-Legendre rules and composite panel grids.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on the reference interval `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds an `n`-point rule by Newton iteration on the Legendre recurrence.
    /// Nodes are returned in increasing order; for odd `n` the middle node is exactly 0.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let half = n.div_ceil(2);
        for i in 0..half {
            // Tricomi initial guess for the i-th largest root.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d.is_finite() {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[n - 1 - i] = x;
            weights[n - 1 - i] = w;
            nodes[i] = -x;
            weights[i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integrates `f` over `[lo, hi]` with the rule mapped affinely onto the interval.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, lo: f64, hi: f64, mut f: F) -> f64 {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let mut acc = 0.0;
        for (t, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * t);
        }
        acc * half
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// A fixed set of nodes with weights over a closed interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureGrid {
    pub lo: f64,
    pub hi: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureGrid {
    /// Composite Gauss-Legendre: `panels` equal-width panels with `per_panel` nodes each.
    pub fn composite(lo: f64, hi: f64, panels: usize, per_panel: usize) -> Self {
        let rule = GaussLegendre::new(per_panel);
        let mut nodes = Vec::with_capacity(panels * per_panel);
        let mut weights = Vec::with_capacity(panels * per_panel);
        for j in 0..panels {
            let a = panel_edge(lo, hi, panels, j);
            let b = panel_edge(lo, hi, panels, j + 1);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (t, w) in rule.nodes.iter().zip(&rule.weights) {
                nodes.push(mid + half * t);
                weights.push(w * half);
            }
        }
        Self {
            lo,
            hi,
            nodes,
            weights,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Index of the node closest to `v`; ties go to the lower index.
    pub fn nearest(&self, v: f64) -> usize {
        let idx = self.nodes.partition_point(|&n| n < v);
        if idx == 0 {
            return 0;
        }
        if idx == self.nodes.len() {
            return idx - 1;
        }
        if (v - self.nodes[idx - 1]) <= (self.nodes[idx] - v) {
            idx - 1
        } else {
            idx
        }
    }
}

/// Edge `j` of a uniform panel partition of `[lo, hi]`; exact at both ends.
pub fn panel_edge(lo: f64, hi: f64, panels: usize, j: usize) -> f64 {
    if j == 0 {
        lo
    } else if j == panels {
        hi
    } else {
        lo + (hi - lo) * (j as f64 / panels as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        for n in 1..=12 {
            let rule = GaussLegendre::new(n);
            for deg in 0..(2 * n) {
                let got = rule.integrate(-1.0, 2.0, |x| x.powi(deg as i32));
                let exact =
                    (2f64.powi(deg as i32 + 1) - (-1f64).powi(deg as i32 + 1)) / (deg as f64 + 1.0);
                assert!(
                    (got - exact).abs() < 1e-11 * exact.abs().max(1.0),
                    "n={n} deg={deg} got={got} exact={exact}"
                );
            }
        }
    }

    #[test]
    fn weights_sum_and_symmetry() {
        let rule = GaussLegendre::new(8);
        let total: f64 = rule.weights.iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
        for i in 0..8 {
            assert_eq!(rule.nodes[i], -rule.nodes[7 - i]);
        }
        assert!(rule.nodes.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn odd_rule_has_zero_node() {
        let rule = GaussLegendre::new(5);
        assert_eq!(rule.nodes[2], 0.0);
        let grid = QuadratureGrid::composite(-5.0, 5.0, 13, 5);
        assert_eq!(grid.len(), 65);
        assert_eq!(grid.nodes[32], 0.0);
        assert!(grid.nodes.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn nearest_node() {
        let grid = QuadratureGrid {
            lo: 0.0,
            hi: 3.0,
            nodes: vec![0.5, 1.5, 2.5],
            weights: vec![1.0; 3],
        };
        assert_eq!(grid.nearest(-4.0), 0);
        assert_eq!(grid.nearest(1.0), 0);
        assert_eq!(grid.nearest(1.1), 1);
        assert_eq!(grid.nearest(9.0), 2);
    }
}
