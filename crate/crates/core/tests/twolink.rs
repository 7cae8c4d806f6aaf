mod support;

use infodesign::scenarios::{ScenarioSet, ScenarioSpec};
use infodesign::twolink::{
    clamped_policy, sys_opt_closed_form, thm1_check, thm2_check, thm3_polynomials,
    uniform_obedience_exact, Conclusion, TwoLinkInstance, UniformCase,
};
use infodesign::Error;
use proptest::prelude::*;
use support::*;

fn inst(a1: f64, a2: f64, x: f64) -> TwoLinkInstance {
    TwoLinkInstance::new(a1, a2, x).unwrap()
}

fn x_prior(a1: f64, a2: f64, points: &[(f64, f64)]) -> ScenarioSet {
    let specs: Vec<ScenarioSpec> = points.iter().map(|&(w, x)| two_link_spec(w, a1, a2, x)).collect();
    ScenarioSet::from_discrete_spec(&specs).unwrap()
}

#[test]
fn closed_form_examples() {
    assert_eq!(sys_opt_closed_form(&inst(1.0, 1.0, 0.0)), 0.5);
    assert_eq!(sys_opt_closed_form(&inst(1.0, 1.0, 4.0)), 0.0);
    assert_eq!(sys_opt_closed_form(&inst(1.0, 1.0, -4.0)), 1.0);
    assert_eq!(TwoLinkInstance::new(0.0, 0.0, 1.0), Err(Error::DegenerateInstance));
    let i = inst(1.0, 3.0, 0.0);
    assert_eq!(i.alpha(), 0.125);
    assert_eq!(i.beta(), 0.75);
}

#[test]
fn clamped_policy_examples() {
    let i = inst(1.0, 3.0, 6.0);
    assert_eq!(clamped_policy(&i), 0.0);
    let i = inst(1.0, 3.0, 0.0);
    assert_eq!(clamped_policy(&i), i.beta());
    assert_eq!(clamped_policy(&inst(1.0, 3.0, -2.0)), 1.0);
}

#[test]
fn support_and_moment_check_examples() {
    // Symmetric x independent of deterministic slopes.
    let independent = x_prior(1.0, 1.0, &[(0.5, -0.5), (0.5, 0.5)]);
    let v = thm1_check(&independent).unwrap();
    assert!(v.support_ok);
    assert_eq!(v.conclusion, Conclusion::Optimal);

    // E[x] = 0, but link 2 is much steeper exactly when x > 0.
    let correlated = ScenarioSet::from_discrete_spec(&[
        two_link_spec(0.5, 1.0, 3.0, 0.2),
        two_link_spec(0.5, 1.0, 0.6, -0.2),
    ])
    .unwrap();
    let v = thm1_check(&correlated).unwrap();
    assert!(v.support_ok);
    assert!((v.moment_lhs[0] - 0.0575).abs() < 1e-12);
    assert_eq!(v.conclusion, Conclusion::NotOptimal);

    let outside = x_prior(1.0, 1.0, &[(0.5, -0.5), (0.5, 2.5)]);
    assert_eq!(
        thm1_check(&outside).unwrap().conclusion,
        Conclusion::SupportViolatedInconclusive
    );
}

#[test]
fn fixed_slope_variance_check_examples() {
    let (a1, a2) = (0.5, 2.0);
    let at_boundary = x_prior(a1, a2, &[(1.0, 2.0 * a2)]);
    assert_eq!(thm2_check(a1, a2, &at_boundary).unwrap().conclusion, Conclusion::Optimal);
    let lower = x_prior(a1, a2, &[(1.0, -2.0 * a1)]);
    assert_eq!(thm2_check(a1, a2, &lower).unwrap().conclusion, Conclusion::Optimal);
    let interior = x_prior(a1, a2, &[(1.0, a2)]);
    assert_eq!(thm2_check(a1, a2, &interior).unwrap().conclusion, Conclusion::NotOptimal);

    // E[x] = a₂ = 2 throughout; the variance 6t crosses E[x](2a₂ − E[x]) = 4 at t = 2/3.
    for (t, expected) in [(0.3, Conclusion::NotOptimal), (0.6, Conclusion::NotOptimal), (0.7, Conclusion::Optimal), (1.0, Conclusion::Optimal)] {
        let set = x_prior(a1, a2, &[(1.0 - t, 2.0), (0.6 * t, 4.0), (0.4 * t, -1.0)]);
        let v = thm2_check(a1, a2, &set).unwrap();
        assert!(v.support_ok);
        assert_eq!(v.conclusion, expected, "t = {t}");
    }
}

#[test]
fn polynomial_examples() {
    let (g, h) = thm3_polynomials(0.25, 0.25);
    assert!((g + 0.234375).abs() < 1e-15);
    assert_eq!(g, h);
    for a in [0.05, 0.1, 0.3, 0.45] {
        let (g, h) = thm3_polynomials(a, a);
        assert!((g - h).abs() < 1e-15);
    }
}

#[test]
fn polynomials_are_negative_on_the_lower_domain() {
    for i in 1..50 {
        for j in i..50 {
            let (g, h) = thm3_polynomials(i as f64 * 0.01, j as f64 * 0.01);
            assert!(g <= 0.0 && h <= 0.0, "({i}, {j}): {g} {h}");
        }
    }
}

#[test]
fn uniform_obedience_matches_quadrature() {
    for (a1, a2) in [
        (0.1, 0.3),
        (0.3, 0.1),
        (0.25, 0.25),
        (0.2, 0.8),
        (0.9, 0.3),
        (0.6, 1.4),
        (1.5, 0.7),
        (0.0, 0.4),
    ] {
        let exact = uniform_obedience_exact(a1, a2).unwrap();
        let q1 = integrate_unit_square(|b1, b2| obedience_integrands(a1, a2, b1, b2).0, 1e-12);
        let q2 = integrate_unit_square(|b1, b2| obedience_integrands(a1, a2, b1, b2).1, 1e-12);
        assert!((exact.lhs1 - q1).abs() <= 1e-8, "a=({a1},{a2}) lhs1 {} vs {q1}", exact.lhs1);
        assert!((exact.lhs2 - q2).abs() <= 1e-8, "a=({a1},{a2}) lhs2 {} vs {q2}", exact.lhs2);
    }
}

#[test]
fn uniform_obedience_cases() {
    assert_eq!(uniform_obedience_exact(0.1, 0.3).unwrap().case, UniformCase::BothTriangles);
    assert_eq!(uniform_obedience_exact(0.2, 0.8).unwrap().case, UniformCase::LowerTriangleOnly);
    assert_eq!(uniform_obedience_exact(0.6, 0.9).unwrap().case, UniformCase::NoTriangles);
    let swapped = uniform_obedience_exact(0.8, 0.2).unwrap();
    assert!(swapped.swapped);
    assert_eq!(swapped.case, UniformCase::LowerTriangleOnly);
    assert!(!uniform_obedience_exact(0.2, 0.8).unwrap().swapped);
}

#[test]
fn uniform_obedience_is_nonpositive_on_grid() {
    for i in 1..=40 {
        for j in 1..=40 {
            let (a1, a2) = (i as f64 * 0.05, j as f64 * 0.05);
            let r = uniform_obedience_exact(a1, a2).unwrap();
            assert!(r.lhs1 <= 1e-12 && r.lhs2 <= 1e-12, "a=({a1},{a2}): {r:?}");
        }
    }
}

#[test]
fn steep_links_pass_the_fixed_slope_check() {
    for (a1, a2) in [(0.5, 0.5), (0.7, 1.2), (2.0, 0.5)] {
        let exact = uniform_obedience_exact(a1, a2).unwrap();
        assert_eq!(exact.case, UniformCase::NoTriangles);
        let grid = ScenarioSet::uniform_b_grid(&[a1, a2], 60).unwrap();
        let v = thm2_check(a1, a2, &grid).unwrap();
        assert!(v.support_ok);
        assert_eq!(v.conclusion, Conclusion::Optimal);
        assert!(exact.lhs1 <= 0.0 && exact.lhs2 <= 0.0);
    }
}

proptest! {
    #[test]
    fn closed_form_matches_grid(a1 in 0.0f64..5.0, a2 in 0.0f64..5.0, x in -10.0f64..10.0) {
        prop_assume!(a1 + a2 > 1e-3);
        let f = sys_opt_closed_form(&inst(a1, a2, x));
        prop_assert!((f - grid_minimizer(a1, a2, x, 20_001)).abs() <= 1e-4);
    }

    #[test]
    fn clamped_policy_equals_closed_form(a1 in 0.0f64..5.0, a2 in 0.0f64..5.0, x in -12.0f64..12.0) {
        prop_assume!(a1 + a2 > 0.0);
        let i = inst(a1, a2, x);
        prop_assert!((clamped_policy(&i) - sys_opt_closed_form(&i)).abs() <= 1e-12);
    }

    #[test]
    fn swapping_links_mirrors_the_optimum(a1 in 0.0f64..5.0, a2 in 0.0f64..5.0, x in -12.0f64..12.0) {
        prop_assume!(a1 + a2 > 0.0);
        let f = sys_opt_closed_form(&inst(a1, a2, x));
        let g = sys_opt_closed_form(&inst(a2, a1, -x));
        prop_assert!((f - (1.0 - g)).abs() <= 1e-12);
    }

    #[test]
    fn moment_and_variance_forms_agree(
        a1 in 0.0f64..3.0,
        a2 in 0.0f64..3.0,
        points in proptest::collection::vec((0.01f64..1.0, -5.0f64..5.0), 1..12),
    ) {
        let set = x_prior(1.0, 1.0, &points);
        let v = thm2_check(a1, a2, &set);
        prop_assume!(v.is_ok());
        let v = v.unwrap();
        let variance = v.variance_lhs.unwrap();
        for (m, s) in v.moment_lhs.iter().zip(&variance) {
            prop_assert!((m - s).abs() <= 1e-10 * (1.0 + m.abs()));
        }
    }
}
