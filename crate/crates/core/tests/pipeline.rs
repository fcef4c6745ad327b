use shiftquant::bandwidth::TestMode;
use shiftquant::lrv::{joint_m_c_curve, LrvSetup};
use shiftquant::report::{RunReport, TestReport};
use shiftquant::simulate::{make_example, DgpSpec, Design, ExampleId};
use shiftquant::testing::{bootstrap_tables, estimate_pair, run_test, Dependence, TestConfig};

fn design(seed: u64, dependent_errors: bool) -> Design {
    make_example(&DgpSpec { example: ExampleId::Ex1, n: 100, tau: 0.5, dependent_errors, seed }).unwrap()
}

fn config() -> TestConfig {
    TestConfig { q_boot: 200, ..TestConfig::default() }
}

#[test]
fn same_seed_same_outcome() {
    let d = design(2, false);
    let cfg = config();
    let go = || run_test(&d.sample1, &d.sample2, &d.c1, &d.c2, 0.5, TestMode::Scb, Dependence::Independent, &cfg, 5).unwrap();
    let (a, b) = (go(), go());
    let ra = TestReport::new("scb", 5, "h".into(), vec![RunReport::from_outcome(&a, &[0.05])]);
    let rb = TestReport::new("scb", 5, "h".into(), vec![RunReport::from_outcome(&b, &[0.05])]);
    assert_eq!(ra.to_json().unwrap(), rb.to_json().unwrap());
}

#[test]
fn report_round_trips() {
    let d = design(3, false);
    let o = run_test(&d.sample1, &d.sample2, &d.c1, &d.c2, 0.5, TestMode::Sit, Dependence::Independent, &config(), 1).unwrap();
    let report = TestReport::new("sit", 1, "abc".into(), vec![RunReport::from_outcome(&o, &[0.0, 0.05, 0.1])]);
    let text = report.to_json().unwrap();
    assert_eq!(TestReport::from_json(&text).unwrap(), report);
    assert!(!text.contains("NaN"));
    assert_eq!(report.runs[0].decisions[0].critical_value, None);
    assert!(!report.runs[0].decisions[0].reject);
}

#[test]
fn self_comparison_does_not_reject() {
    let d = design(4, false);
    let o = run_test(&d.sample1, &d.sample1, &d.c1, &d.c1, 0.5, TestMode::Sit, Dependence::Independent, &config(), 1).unwrap();
    assert_eq!(o.shift.d_hat, 0.0);
    assert_eq!(o.sit.as_ref().unwrap().statistic, 0.0);
    assert!(!o.rejects(0.05));
}

/// `S = Q^{1/2}` is symmetric, so `S₁₁² + S₁₂² = Q₁₁ = M̂_{c,1}²`.
#[test]
fn joint_scale_keeps_marginal_scales() {
    let d = design(6, true);
    let cfg = config();
    let pair = estimate_pair(&d.sample1, &d.sample2, &d.c1, &d.c2, 0.5, TestMode::Sit, &cfg).unwrap();
    let [f1, f2] = &pair.series;
    let s1 = LrvSetup { sample: &d.sample1, fit: &f1.fit, tau: 0.5, b: f1.tuning.b, m: f1.tuning.m, kernel: cfg.kernel };
    let s2 = LrvSetup { sample: &d.sample2, fit: &f2.fit, tau: 0.5, b: f2.tuning.b, m: f2.tuning.m, kernel: cfg.kernel };
    let joint = joint_m_c_curve(&s1, &s2, f1.tuning.w, f2.tuning.w, f2.tuning.m, &d.c1, &d.c2, &f1.mc, &f2.mc).unwrap();
    assert_eq!(joint.clipped, 0);
    for (t, [m11, m12, m22]) in joint.knots.iter().zip(&joint.m_c_matrix) {
        assert!((m11 * m11 + m12 * m12 - f1.mc.at(*t).powi(2)).abs() < 1e-9);
        assert!((m22 * m22 + m12 * m12 - f2.mc.at(*t).powi(2)).abs() < 1e-9);
    }
}

#[test]
fn dependent_tables_have_comparable_scale() {
    let d = design(7, false);
    let cfg = config();
    let pair = estimate_pair(&d.sample1, &d.sample2, &d.c1, &d.c2, 0.5, TestMode::Sit, &cfg).unwrap();
    let (s1, s2) = (&d.sample1, &d.sample2);
    let (ind, _) = bootstrap_tables(&pair, s1, s2, &d.c1, &d.c2, 0.5, Dependence::Independent, &cfg).unwrap();
    let (dep, _) = bootstrap_tables(&pair, s1, s2, &d.c1, &d.c2, 0.5, Dependence::Dependent, &cfg).unwrap();
    let ratio = dep.expected_sit_mean() / ind.expected_sit_mean();
    assert!((0.7..1.3).contains(&ratio), "ratio {ratio}");
}
