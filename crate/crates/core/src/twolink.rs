//! Closed-form results for two parallel links with affine delays.
//!
//! With `x = b₁ − b₂`, the state enters the problem only through
//! `(a₁, a₂, x)`. The full-information system optimum sends
//! `[(2a₂ − x) / (2(a₁ + a₂))]₀¹` of the users to link 1 and does not depend
//! on the prior. Recommending exactly that split is obedient, and therefore
//! optimal, iff two scalar moment conditions hold when the optimum never
//! saturates. For `(b₁, b₂)` uniform on the unit square the two obedience
//! integrals are evaluated exactly, without any support assumption.

use serde::{Deserialize, Serialize};

use crate::scenarios::{Scenario, ScenarioSet};
use crate::{Error, Result};

/// Affine two-link instance in reduced coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoLinkInstance {
    pub a1: f64,
    pub a2: f64,
    /// Free-flow difference `b₁ − b₂`.
    pub x: f64,
}

impl TwoLinkInstance {
    pub fn new(a1: f64, a2: f64, x: f64) -> Result<Self> {
        for (name, v) in [("a1", a1), ("a2", a2)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::NegativeCoefficient {
                    context: name.into(),
                    value: v,
                });
            }
        }
        if a1 + a2 == 0.0 {
            return Err(Error::DegenerateInstance);
        }
        Ok(Self { a1, a2, x })
    }

    pub fn from_scenario(s: &Scenario) -> Result<Self> {
        if s.num_links() != 2 {
            return Err(Error::NotTwoLink(format!("{} links", s.num_links())));
        }
        Self::new(s.a[0], s.a[1], s.x())
    }

    /// `1 / (2(a₁ + a₂))`.
    pub fn alpha(&self) -> f64 {
        0.5 / (self.a1 + self.a2)
    }

    /// `a₂ / (a₁ + a₂)`.
    pub fn beta(&self) -> f64 {
        self.a2 / (self.a1 + self.a2)
    }

    /// Total cost of sending `f1` to link 1, minus the constant `a₂ + b₂`:
    /// `(x − 2a₂) f₁ + (a₁ + a₂) f₁²`.
    pub fn reduced_cost(&self, f1: f64) -> f64 {
        (self.x - 2.0 * self.a2) * f1 + (self.a1 + self.a2) * f1 * f1
    }
}

/// Full-information system optimum share of link 1.
pub fn sys_opt_closed_form(inst: &TwoLinkInstance) -> f64 {
    ((2.0 * inst.a2 - inst.x) / (2.0 * (inst.a1 + inst.a2))).clamp(0.0, 1.0)
}

/// The same optimum written through the thresholds `β/α = 2a₂` and
/// `(β − 1)/α = −2a₁`; boundary points take the saturated branch.
pub fn clamped_policy(inst: &TwoLinkInstance) -> f64 {
    let (alpha, beta) = (inst.alpha(), inst.beta());
    if inst.x >= beta / alpha {
        0.0
    } else if inst.x <= (beta - 1.0) / alpha {
        1.0
    } else {
        beta - alpha * inst.x
    }
}

/// Full-information user equilibrium share of link 1.
pub fn user_equilibrium_closed_form(inst: &TwoLinkInstance) -> f64 {
    ((inst.a2 - inst.x) / (inst.a1 + inst.a2)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Conclusion {
    Optimal,
    NotOptimal,
    SupportViolatedInconclusive,
}

/// Outcome of a support-and-moment optimality check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremVerdict {
    pub support_ok: bool,
    /// Left-hand sides of the moment conditions, each required to be `≤ 0`.
    pub moment_lhs: Vec<f64>,
    /// Variance form of the same conditions (deterministic slopes only).
    pub variance_lhs: Option<Vec<f64>>,
    pub conclusion: Conclusion,
}

fn verdict(support_ok: bool, moment_lhs: Vec<f64>, variance_lhs: Option<Vec<f64>>, tol: f64) -> TheoremVerdict {
    let conclusion = if !support_ok {
        Conclusion::SupportViolatedInconclusive
    } else if moment_lhs.iter().all(|&m| m <= tol) {
        Conclusion::Optimal
    } else {
        Conclusion::NotOptimal
    };
    TheoremVerdict {
        support_ok,
        moment_lhs,
        variance_lhs,
        conclusion,
    }
}

fn require_two_links(set: &ScenarioSet) -> Result<()> {
    if set.num_links() == 2 {
        Ok(())
    } else {
        Err(Error::NotTwoLink(format!("{} links", set.num_links())))
    }
}

/// Support and moment conditions for random slopes.
///
/// Supports are taken marginally over positive-weight scenarios:
/// `max x ≤ 2 min a₂` and `min x ≥ −2 max a₁`. The moments are
/// `E[(2a₂x − x²)/(a₁+a₂)]` and `E[(−2a₁x − x²)/(a₁+a₂)]`.
pub fn thm1_check(set: &ScenarioSet) -> Result<TheoremVerdict> {
    require_two_links(set)?;
    let (x_min, x_max) = set.support_range(Scenario::x);
    let (a2_min, _) = set.support_range(|s| s.a[1]);
    let (_, a1_max) = set.support_range(|s| s.a[0]);
    let support_ok = x_max <= 2.0 * a2_min && x_min >= -2.0 * a1_max;

    let m1 = set.expectation(|s| (2.0 * s.a[1] * s.x() - s.x() * s.x()) / (s.a[0] + s.a[1]))?;
    let m2 = set.expectation(|s| (-2.0 * s.a[0] * s.x() - s.x() * s.x()) / (s.a[0] + s.a[1]))?;
    let scale = set.expectation(|s| s.x() * s.x() / (s.a[0] + s.a[1]))?;
    Ok(verdict(support_ok, vec![m1, m2], None, 1e-12 * (1.0 + scale)))
}

/// Moment summary of `x` used by [`thm2_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XMoments {
    pub mean: f64,
    pub second: f64,
    pub variance: f64,
}

pub fn x_moments(set: &ScenarioSet) -> Result<XMoments> {
    require_two_links(set)?;
    let mean = set.expectation(Scenario::x)?;
    let second = set.expectation(|s| s.x() * s.x())?;
    let variance = set.expectation(|s| (s.x() - mean).powi(2))?;
    Ok(XMoments {
        mean,
        second,
        variance,
    })
}

/// Deterministic slopes `a₁, a₂`; only `x` is random.
///
/// Moment form `−E[x²]/(2a₁) ≤ E[x] ≤ E[x²]/(2a₂)`, stored multiplied out as
/// `2a₂E[x] − E[x²] ≤ 0` and `−2a₁E[x] − E[x²] ≤ 0` so that zero slopes are
/// allowed. Variance form `σ² ≥ E[x](2a₂ − E[x])` and
/// `σ² ≥ −E[x](2a₁ + E[x])`. The slopes recorded in `x_set` are ignored.
pub fn thm2_check(a1: f64, a2: f64, x_set: &ScenarioSet) -> Result<TheoremVerdict> {
    TwoLinkInstance::new(a1, a2, 0.0)?;
    let m = x_moments(x_set)?;
    let (x_min, x_max) = x_set.support_range(Scenario::x);
    let support_ok = x_min >= -2.0 * a1 && x_max <= 2.0 * a2;
    let moment = vec![2.0 * a2 * m.mean - m.second, -2.0 * a1 * m.mean - m.second];
    let variance = vec![
        m.mean * (2.0 * a2 - m.mean) - m.variance,
        -m.mean * (2.0 * a1 + m.mean) - m.variance,
    ];
    let tol = 1e-12 * (1.0 + m.second);
    Ok(verdict(support_ok, moment, Some(variance), tol))
}

/// Polynomials whose positivity signals a violated obedience constraint for
/// the uniform prior when both saturation triangles exist
/// (`a₁, a₂ < 1/2`, `a₁ ≤ a₂`).
pub fn thm3_polynomials(a1: f64, a2: f64) -> (f64, f64) {
    (g_poly(a1, a2), g_poly_mirror(a1, a2))
}

fn g_poly(a1: f64, a2: f64) -> f64 {
    2.0 * a1.powi(4) - 2.0 * a2.powi(4) - 4.0 * a1.powi(3) + 2.0 * a2.powi(3)
        + 4.0 * a1.powi(3) * a2
        + 3.0 * a1 * a1
        - 6.0 * a1 * a1 * a2
        - a1
        - a2
        + 3.0 * a1 * a2
}

fn g_poly_mirror(a1: f64, a2: f64) -> f64 {
    -2.0 * a1.powi(4) + 2.0 * a2.powi(4) + 2.0 * a1.powi(3) - 4.0 * a2.powi(3)
        + 4.0 * a1 * a2.powi(3)
        + 3.0 * a2 * a2
        - 6.0 * a1 * a2 * a2
        - a1
        - a2
        + 3.0 * a1 * a2
}

/// Which saturation regions of the clamped policy intersect `x ∈ [−1, 1]`,
/// after ordering the links so that `a₁ ≤ a₂`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UniformCase {
    /// `a₁ ≤ a₂ < 1/2`: all-on-link-1 and all-on-link-2 regions both exist.
    BothTriangles,
    /// `a₁ < 1/2 ≤ a₂`: only the all-on-link-1 region exists.
    LowerTriangleOnly,
    /// `1/2 ≤ a₁ ≤ a₂`: the optimum never saturates.
    NoTriangles,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformObedience {
    /// `∫∫ (x − a₂)π̃₁ + (a₁+a₂)π̃₁² db` for the first obedience constraint.
    pub lhs1: f64,
    /// The same for the second constraint.
    pub lhs2: f64,
    pub case: UniformCase,
    /// The links were exchanged to reach `a₁ ≤ a₂`.
    pub swapped: bool,
}

/// Exact obedience integrals of the clamped system-optimum policy when
/// `(b₁, b₂)` is uniform on `[0, 1]²`.
///
/// `x = b₁ − b₂` has the triangular density `1 − |x|` on `[−1, 1]`, and on
/// each region of the clamped policy the integrand is a polynomial of degree
/// at most two in `x`, so every piece is integrated through an exact
/// antiderivative.
pub fn uniform_obedience_exact(a1: f64, a2: f64) -> Result<UniformObedience> {
    for (name, v) in [("a1", a1), ("a2", a2)] {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::NegativeCoefficient {
                context: name.into(),
                value: v,
            });
        }
    }
    if a1 <= a2 {
        let (lhs1, lhs2, case) = ordered_uniform_obedience(a1, a2);
        Ok(UniformObedience {
            lhs1,
            lhs2,
            case,
            swapped: false,
        })
    } else {
        // Exchanging the links maps x to −x and the first constraint onto
        // the second.
        let (lhs1, lhs2, case) = ordered_uniform_obedience(a2, a1);
        Ok(UniformObedience {
            lhs1: lhs2,
            lhs2: lhs1,
            case,
            swapped: true,
        })
    }
}

fn uniform_case(a1: f64, a2: f64) -> UniformCase {
    debug_assert!(a1 <= a2);
    if 2.0 * a2 < 1.0 {
        UniformCase::BothTriangles
    } else if 2.0 * a1 < 1.0 {
        UniformCase::LowerTriangleOnly
    } else {
        UniformCase::NoTriangles
    }
}

/// Requires `a₁ ≤ a₂`.
fn ordered_uniform_obedience(a1: f64, a2: f64) -> (f64, f64, UniformCase) {
    let s = a1 + a2;
    // Lower region x ≤ −2a₁ (π̃₁ = 1): first integrand x + a₁, second 0.
    let t1_first = Poly::new(&[a1, 1.0]);
    // Upper region x ≥ 2a₂ (π̃₁ = 0): first integrand 0, second a₂ − x.
    let t2_second = Poly::new(&[a2, -1.0]);
    // Interior: (2a₂x − x²)/(4s) and −x(2a₁ + x)/(4s). Only evaluated when
    // the interior is non-empty, which implies s > 0.
    let r_first = || Poly::new(&[0.0, 2.0 * a2 / (4.0 * s), -1.0 / (4.0 * s)]);
    let r_second = || Poly::new(&[0.0, -2.0 * a1 / (4.0 * s), -1.0 / (4.0 * s)]);

    let case = uniform_case(a1, a2);
    let (lhs1, lhs2) = match case {
        UniformCase::BothTriangles => {
            let (lo, hi) = (-2.0 * a1, 2.0 * a2);
            let interior_first = if s > 0.0 { triangular(&r_first(), lo, hi) } else { 0.0 };
            let interior_second = if s > 0.0 { triangular(&r_second(), lo, hi) } else { 0.0 };
            (
                triangular(&t1_first, -1.0, lo) + interior_first,
                interior_second + triangular(&t2_second, hi, 1.0),
            )
        }
        UniformCase::LowerTriangleOnly => {
            let lo = -2.0 * a1;
            (
                triangular(&t1_first, -1.0, lo) + triangular(&r_first(), lo, 1.0),
                triangular(&r_second(), lo, 1.0),
            )
        }
        UniformCase::NoTriangles => (
            triangular(&r_first(), -1.0, 1.0),
            triangular(&r_second(), -1.0, 1.0),
        ),
    };
    (lhs1, lhs2, case)
}

/// Dense polynomial `Σ c_k x^k`.
#[derive(Debug, Clone, PartialEq)]
struct Poly(Vec<f64>);

impl Poly {
    fn new(coeffs: &[f64]) -> Self {
        Self(coeffs.to_vec())
    }

    fn mul(&self, other: &Poly) -> Poly {
        let mut out = vec![0.0; self.0.len() + other.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly(out)
    }

    fn antiderivative_at(&self, x: f64) -> f64 {
        self.0
            .iter()
            .enumerate()
            .rev()
            .fold(0.0, |acc, (k, c)| acc * x + c / (k + 1) as f64)
            * x
    }

    fn integrate(&self, lo: f64, hi: f64) -> f64 {
        self.antiderivative_at(hi) - self.antiderivative_at(lo)
    }
}

/// `∫_lo^hi p(x)(1 − |x|) dx` for `−1 ≤ lo ≤ hi ≤ 1`.
fn triangular(p: &Poly, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let mut total = 0.0;
    if lo < 0.0 {
        total += p.mul(&Poly::new(&[1.0, 1.0])).integrate(lo, hi.min(0.0));
    }
    if hi > 0.0 {
        total += p.mul(&Poly::new(&[1.0, -1.0])).integrate(lo.max(0.0), hi);
    }
    total
}
