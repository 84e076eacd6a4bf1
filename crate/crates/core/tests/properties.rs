use proptest::prelude::*;
use stratquant::design::{project_monotone, random_monotone};
use stratquant::experiment::format_sig;
use stratquant::quantizer::{encode, perceived_estimates_mixture, receiver_distortion_mixture};
use stratquant::{EstimateVector, GaussianParams, GridSpec, SourceModel, TypePmf};

fn model(s2: f64, rho: f64) -> SourceModel {
    let grid = GridSpec {
        x_panels: 16,
        s_panels: 5,
        s_nodes_per_panel: 3,
        ..GridSpec::default()
    };
    SourceModel::gaussian(GaussianParams::standard(s2, rho), grid).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pmf_is_a_distribution(l in 1e-4f64..1e3) {
        let p = TypePmf::population(l).unwrap();
        prop_assert!((p.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.probs.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!((p.probs[1] / p.probs[0] - l).abs() <= 1e-12 * l);
        prop_assert!((p.probs[2] / p.probs[1] - l / 2.0).abs() <= 1e-12 * l);
    }

    #[test]
    fn encode_agrees_with_cells(
        s2 in 0.05f64..2.0,
        rho in 0.0f64..0.9,
        seed in any::<u64>(),
        ux in 0.0f64..1.0,
        us in 0.0f64..1.0,
    ) {
        let m = model(s2, rho);
        let q = random_monotone(&m, 4, seed).unwrap();
        let (a, b) = m.x_support();
        let (sa, sb) = m.s_support();
        let x = a + ux * (b - a);
        let s = sa + us * (sb - sa);
        let cell = encode(&m, &q, x, s).unwrap();
        let k = m.s_grid().nearest(s);
        let (lo, hi) = q.cell(k, cell);
        prop_assert!(lo <= x && x <= hi);
        if cell > 0 {
            // ties go to the left cell
            prop_assert!(x > lo);
        }
    }

    #[test]
    fn mirrored_cells_carry_equal_mass(
        s2 in 0.05f64..2.0,
        rho in 0.0f64..0.9,
        lo in -5.0f64..5.0,
        width in 0.0f64..4.0,
    ) {
        let m = model(s2, rho);
        let hi = (lo + width).min(5.0);
        let last = m.num_s_levels() - 1;
        for k in 0..m.num_s_levels() {
            let a = m.cell_mass(k, lo, hi).unwrap();
            let b = m.cell_mass(last - k, -hi, -lo).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mixture_estimates_are_bayes_optimal(
        s2 in 0.05f64..2.0,
        rho in 0.0f64..0.9,
        seeds in (any::<u64>(), any::<u64>()),
        w in 0.0f64..1.0,
        dir in proptest::collection::vec(-1.0f64..1.0, 3),
    ) {
        let m = model(s2, rho);
        let q0 = random_monotone(&m, 3, seeds.0).unwrap();
        let q1 = random_monotone(&m, 3, seeds.1).unwrap();
        let pop = [(&q0, w), (&q1, 1.0 - w)];
        let est = perceived_estimates_mixture(&m, &pop).unwrap();
        prop_assert!((est.masses.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let base = receiver_distortion_mixture(&m, &pop, &est.estimates).unwrap();
        let moved = EstimateVector(
            est.estimates.values().iter().zip(&dir).map(|(y, d)| y + 1e-3 * d).collect(),
        );
        let d = receiver_distortion_mixture(&m, &pop, &moved).unwrap();
        prop_assert!(d >= base - 1e-8);
    }

    #[test]
    fn projection_is_monotone_and_idempotent(
        seed in any::<u64>(),
        noise in proptest::collection::vec(-20.0f64..20.0, 15 * 4),
        gap in 0.0f64..0.1,
    ) {
        let m = model(1.0, 0.5);
        let base = random_monotone(&m, 5, seed).unwrap();
        let mut rows = base.interior();
        for (v, n) in rows.iter_mut().flatten().zip(&noise) {
            *v += n;
        }
        let (a, b) = m.x_support();
        let clamped: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| {
                let mut r: Vec<f64> = r.iter().map(|v| v.clamp(a, b)).collect();
                r.sort_by(f64::total_cmp);
                r
            })
            .collect();
        let mut q = stratquant::BoundaryMatrix::from_interior(&m, &clamped).unwrap();
        project_monotone(&mut q, m.x_support(), gap);
        for row in q.rows() {
            prop_assert_eq!(row[0], a);
            prop_assert_eq!(row[5], b);
            for w in row.windows(2) {
                prop_assert!(w[1] - w[0] >= gap - 1e-12);
            }
        }
        let once = q.clone();
        project_monotone(&mut q, m.x_support(), gap);
        prop_assert_eq!(once, q);
    }

    #[test]
    fn twelve_digit_formatting_roundtrips(v in -1e6f64..1e6) {
        prop_assume!(v != 0.0);
        let back: f64 = format_sig(v, 12).parse().unwrap();
        prop_assert!(((back - v) / v).abs() < 5e-12);
    }
}
