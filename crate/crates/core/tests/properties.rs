use proptest::prelude::*;
use shiftquant::check_loss::check_loss;
use shiftquant::inverse_shift::{estimate_shift, GHat};
use shiftquant::io::{fmt_f64, parse_sample_csv, sample_csv};
use shiftquant::kernel::KernelId;
use shiftquant::quantile_fit::{DebiasedFit, RegressionSample};
use shiftquant::testing::{bootstrap_p_value, bootstrap_rejects};

fn line(slope: f64, offset: f64) -> DebiasedFit {
    let grid: Vec<f64> = (0..=1000).map(|j| j as f64 / 1000.0).collect();
    let m = grid.iter().map(|t| slope * t + offset).collect();
    DebiasedFit::from_curve(grid, m, vec![slope; 1001])
}

proptest! {
    #[test]
    fn check_loss_is_convex(tau in 0.01f64..0.99, a in -10.0f64..10.0, b in -10.0f64..10.0, l in 0.0f64..1.0) {
        let mid = check_loss(tau, l * a + (1.0 - l) * b);
        prop_assert!(mid <= l * check_loss(tau, a) + (1.0 - l) * check_loss(tau, b) + 1e-12);
        prop_assert!(check_loss(tau, a) >= 0.0);
    }

    #[test]
    fn ghat_has_unit_mass(values in prop::collection::vec(-5.0f64..5.0, 20..200), h in 0.05f64..1.0) {
        let m0 = values[0];
        let g = GHat::from_values(values, m0, h, KernelId::Epanechnikov);
        let (lo, hi) = g.range();
        let mass = g.big_g(hi + h) - g.big_g(lo - h);
        prop_assert!((mass - 1.0).abs() < 1e-3, "mass {}", mass);
    }

    #[test]
    fn shift_of_a_line_is_recovered(d in 0.05f64..0.3, slope in 0.5f64..3.0) {
        let c1 = line(slope, 0.0);
        let c2 = line(slope, -slope * d);
        let h = 0.02 * slope;
        let g1 = GHat::new(&c1, h, KernelId::Epanechnikov, 1000).unwrap();
        let g2 = GHat::new(&c2, h, KernelId::Epanechnikov, 1000).unwrap();
        let se = estimate_shift(&c1, &c2, &g1, &g2, 0.1).unwrap();
        prop_assert!((se.d_tilde - d).abs() < 1e-9);
        prop_assert!((se.d_hat - d).abs() < 0.02, "d_hat {} vs {}", se.d_hat, d);
    }

    #[test]
    fn rejection_is_monotone_in_alpha(boot in prop::collection::vec(0.0f64..10.0, 1..300), stat in 0.0f64..10.0,
                                     a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        if bootstrap_rejects(&boot, stat, lo) {
            prop_assert!(bootstrap_rejects(&boot, stat, hi));
        }
        let p = bootstrap_p_value(&boot, stat);
        prop_assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn floats_round_trip_through_text(x in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        prop_assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn samples_round_trip_through_csv(p in 1usize..4, raw in prop::collection::vec(-1e6f64..1e6, 60..120)) {
        let n = raw.len() / (p + 1);
        let y = raw[..n].to_vec();
        let x = raw[n..n + n * p].to_vec();
        let s = RegressionSample::new(y, x, p).unwrap();
        let back = parse_sample_csv(sample_csv(&s).as_bytes(), false).unwrap();
        prop_assert_eq!(back.y(), s.y());
        prop_assert_eq!(back.x(), s.x());
    }
}
