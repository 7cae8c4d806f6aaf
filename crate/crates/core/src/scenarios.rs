//! Finite weighted sets of network states.
//!
//! Every prior over the network state is reduced to a [`ScenarioSet`] before
//! any solve: a list of scenarios, each carrying a probability weight and the
//! affine delay coefficients `τ_e(f) = a_e f + b_e` of every link. Continuous
//! priors enter through [`ScenarioSet::uniform_b_grid`] (midpoint rule) or
//! [`ScenarioSet::monte_carlo`] (seeded sampling).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Identifier of the generator behind [`ScenarioSet::monte_carlo`].
pub const RNG_ALGORITHM: &str = "chacha8-seed_from_u64";

/// One network state with its probability mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub weight: f64,
    /// Per-link slope, time per unit flow.
    pub a: Vec<f64>,
    /// Per-link free-flow delay.
    pub b: Vec<f64>,
}

impl Scenario {
    pub fn num_links(&self) -> usize {
        self.a.len()
    }

    #[inline]
    pub fn delay(&self, link: usize, flow: f64) -> f64 {
        self.a[link] * flow + self.b[link]
    }

    /// `∫₀^flow τ_e(s) ds`.
    #[inline]
    pub fn delay_integral(&self, link: usize, flow: f64) -> f64 {
        0.5 * self.a[link] * flow * flow + self.b[link] * flow
    }

    /// Free-flow difference `b₁ − b₂` of a two-link scenario.
    pub fn x(&self) -> f64 {
        self.b[0] - self.b[1]
    }

    /// Total travel time `Σ_e f_e τ_e(f_e)`.
    pub fn total_cost(&self, link_flow: &[f64]) -> f64 {
        link_flow
            .iter()
            .enumerate()
            .map(|(e, &f)| f * self.delay(e, f))
            .sum()
    }
}

/// Weight and coefficients of one scenario in a discrete specification.
/// Weights need not be normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub weight: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl ScenarioSpec {
    pub fn new(weight: f64, a: Vec<f64>, b: Vec<f64>) -> Self {
        Self { weight, a, b }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Provenance {
    DiscreteSpec,
    UniformGrid { n: usize },
    MonteCarlo { seed: u64, n: usize, rng: String },
    /// Derived from another set, e.g. by coefficient scaling.
    Derived { from: Box<Provenance> },
}

/// Delay function family. Only affine delays are solved; the enum is the
/// extension point for per-link polynomial coefficients.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DelayModel {
    #[default]
    Affine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    scenarios: Vec<Scenario>,
    provenance: Provenance,
    delay_model: DelayModel,
}

/// One-dimensional distribution named in a sampler specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedDistribution {
    pub dist: String,
    #[serde(default)]
    pub params: Vec<f64>,
}

impl NamedDistribution {
    pub fn new(dist: impl Into<String>, params: Vec<f64>) -> Self {
        Self {
            dist: dist.into(),
            params,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum SamplerSpec {
    /// Independent uniforms on a box for every `a_e` and `b_e`.
    UniformBox {
        a_lo: Vec<f64>,
        a_hi: Vec<f64>,
        b_lo: Vec<f64>,
        b_hi: Vec<f64>,
    },
    /// Independent product of named one-dimensional distributions.
    IndependentProduct {
        a: Vec<NamedDistribution>,
        b: Vec<NamedDistribution>,
    },
}

enum Sampler {
    Constant(f64),
    Uniform(f64, f64),
    Exponential(Exp<f64>),
    Beta(Beta<f64>),
}

impl Sampler {
    fn parse(d: &NamedDistribution) -> Result<Self> {
        let unsupported = || Error::UnsupportedDistribution(format!("{}{:?}", d.dist, d.params));
        let p = &d.params;
        let s = match (d.dist.as_str(), p.as_slice()) {
            ("constant", &[c]) => {
                non_negative("constant value", c)?;
                Sampler::Constant(c)
            }
            ("uniform", &[lo, hi]) => {
                if lo.is_nan() || hi.is_nan() || lo > hi {
                    return Err(unsupported());
                }
                non_negative("uniform lower bound", lo)?;
                Sampler::Uniform(lo, hi)
            }
            ("exponential", &[rate]) => Sampler::Exponential(Exp::new(rate).map_err(|_| unsupported())?),
            ("beta", &[alpha, beta]) => {
                Sampler::Beta(Beta::new(alpha, beta).map_err(|_| unsupported())?)
            }
            _ => return Err(unsupported()),
        };
        Ok(s)
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Sampler::Constant(c) => *c,
            Sampler::Uniform(lo, hi) => lo + (hi - lo) * rng.random::<f64>(),
            Sampler::Exponential(d) => d.sample(rng),
            Sampler::Beta(d) => d.sample(rng),
        }
    }
}

fn non_negative(context: &str, value: f64) -> Result<()> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::NegativeCoefficient {
            context: context.to_string(),
            value,
        })
    }
}

impl ScenarioSet {
    /// Builds a set from explicit scenarios, renormalizing the weights.
    pub fn from_discrete_spec(specs: &[ScenarioSpec]) -> Result<Self> {
        Self::from_specs(specs, Provenance::DiscreteSpec)
    }

    fn from_specs(specs: &[ScenarioSpec], provenance: Provenance) -> Result<Self> {
        let first = specs.first().ok_or(Error::EmptySpec)?;
        let links = first.a.len();
        if links == 0 {
            return Err(Error::EmptySpec);
        }
        for (k, s) in specs.iter().enumerate() {
            if s.a.len() != links || s.b.len() != links {
                return Err(Error::DimensionMismatch {
                    context: "scenario coefficients",
                    expected: links,
                    found: if s.a.len() != links { s.a.len() } else { s.b.len() },
                });
            }
            non_negative(&format!("weight of scenario {k}"), s.weight)?;
            for (e, (&a, &b)) in s.a.iter().zip(&s.b).enumerate() {
                non_negative(&format!("a[{e}] of scenario {k}"), a)?;
                non_negative(&format!("b[{e}] of scenario {k}"), b)?;
            }
        }
        let total: f64 = specs.iter().map(|s| s.weight).sum();
        if !total.is_finite() || total <= 0.0 {
            return Err(Error::InvalidWeights(format!("weights sum to {total}")));
        }
        let scenarios = specs
            .iter()
            .map(|s| Scenario {
                weight: s.weight / total,
                a: s.a.clone(),
                b: s.b.clone(),
            })
            .collect();
        Ok(Self {
            scenarios,
            provenance,
            delay_model: DelayModel::Affine,
        })
    }

    /// Midpoint-rule discretization of `(b₁, b₂)` uniform on the unit square
    /// with the slopes `a` held fixed. Cells are ordered with `b₁` outer.
    pub fn uniform_b_grid(a: &[f64], n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGridSize(n));
        }
        if a.len() != 2 {
            return Err(Error::DimensionMismatch {
                context: "uniform grid slopes",
                expected: 2,
                found: a.len(),
            });
        }
        let w = 1.0 / (n * n) as f64;
        let mid = |k: usize| (k as f64 + 0.5) / n as f64;
        let specs: Vec<ScenarioSpec> = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| ScenarioSpec::new(w, a.to_vec(), vec![mid(i), mid(j)]))
            .collect();
        Self::from_specs(&specs, Provenance::UniformGrid { n })
    }

    /// `n` equally weighted samples, reproducible from `seed`.
    pub fn monte_carlo(sampler: &SamplerSpec, n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGridSize(n));
        }
        let (a_samplers, b_samplers) = match sampler {
            SamplerSpec::UniformBox {
                a_lo,
                a_hi,
                b_lo,
                b_hi,
            } => {
                let links = a_lo.len();
                for v in [a_hi, b_lo, b_hi] {
                    if v.len() != links {
                        return Err(Error::DimensionMismatch {
                            context: "uniform box bounds",
                            expected: links,
                            found: v.len(),
                        });
                    }
                }
                let box_of = |lo: &[f64], hi: &[f64]| -> Result<Vec<Sampler>> {
                    lo.iter()
                        .zip(hi)
                        .map(|(&l, &h)| {
                            Sampler::parse(&NamedDistribution::new("uniform", vec![l, h]))
                        })
                        .collect()
                };
                (box_of(a_lo, a_hi)?, box_of(b_lo, b_hi)?)
            }
            SamplerSpec::IndependentProduct { a, b } => {
                if a.len() != b.len() {
                    return Err(Error::DimensionMismatch {
                        context: "independent product",
                        expected: a.len(),
                        found: b.len(),
                    });
                }
                (
                    a.iter().map(Sampler::parse).collect::<Result<Vec<_>>>()?,
                    b.iter().map(Sampler::parse).collect::<Result<Vec<_>>>()?,
                )
            }
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = 1.0 / n as f64;
        let specs: Vec<ScenarioSpec> = (0..n)
            .map(|_| {
                let a = a_samplers.iter().map(|s| s.sample(&mut rng)).collect();
                let b = b_samplers.iter().map(|s| s.sample(&mut rng)).collect();
                ScenarioSpec::new(w, a, b)
            })
            .collect();
        Self::from_specs(
            &specs,
            Provenance::MonteCarlo {
                seed,
                n,
                rng: RNG_ALGORITHM.to_string(),
            },
        )
    }

    pub fn scenarios(&self) -> &[Scenario] {
        &self.scenarios
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn num_links(&self) -> usize {
        self.scenarios[0].num_links()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn delay_model(&self) -> DelayModel {
        self.delay_model
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.scenarios.iter().map(|s| s.weight)
    }

    /// Same weights, every `a_e` and `b_e` multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !factor.is_finite() || factor <= 0.0 {
            return Err(Error::NegativeCoefficient {
                context: "scaling factor".into(),
                value: factor,
            });
        }
        let scenarios = self
            .scenarios
            .iter()
            .map(|s| Scenario {
                weight: s.weight,
                a: s.a.iter().map(|v| v * factor).collect(),
                b: s.b.iter().map(|v| v * factor).collect(),
            })
            .collect();
        Ok(Self {
            scenarios,
            provenance: Provenance::Derived {
                from: Box::new(self.provenance.clone()),
            },
            delay_model: self.delay_model,
        })
    }

    /// Same scenarios with replacement weights (renormalized).
    pub fn reweighted(&self, weights: &[f64]) -> Result<Self> {
        if weights.len() != self.len() {
            return Err(Error::DimensionMismatch {
                context: "replacement weights",
                expected: self.len(),
                found: weights.len(),
            });
        }
        let specs: Vec<ScenarioSpec> = self
            .scenarios
            .iter()
            .zip(weights)
            .map(|(s, &w)| ScenarioSpec::new(w, s.a.clone(), s.b.clone()))
            .collect();
        Self::from_specs(
            &specs,
            Provenance::Derived {
                from: Box::new(self.provenance.clone()),
            },
        )
    }

    /// `Σ_k w_k g(θ_k)`. Zero-weight scenarios are skipped; a non-finite
    /// value on a positive-weight scenario is an error.
    pub fn expectation<F>(&self, g: F) -> Result<f64>
    where
        F: Fn(&Scenario) -> f64,
    {
        let mut total = 0.0;
        for (index, s) in self.scenarios.iter().enumerate() {
            if s.weight == 0.0 {
                continue;
            }
            let value = g(s);
            if !value.is_finite() {
                return Err(Error::SingularIntegrand { index, value });
            }
            total += s.weight * value;
        }
        Ok(total)
    }

    /// Parallel version of [`ScenarioSet::expectation`]. The reduction order
    /// depends on the thread pool, so results agree with the sequential sum
    /// only up to rounding.
    pub fn par_expectation<F>(&self, g: F) -> Result<f64>
    where
        F: Fn(&Scenario) -> f64 + Sync,
    {
        self.scenarios
            .par_iter()
            .enumerate()
            .filter(|(_, s)| s.weight != 0.0)
            .map(|(index, s)| {
                let value = g(s);
                if value.is_finite() {
                    Ok(s.weight * value)
                } else {
                    Err(Error::SingularIntegrand { index, value })
                }
            })
            .try_reduce(|| 0.0, |l, r| Ok(l + r))
    }

    /// Smallest and largest value of `g` over positive-weight scenarios.
    pub fn support_range<F>(&self, g: F) -> (f64, f64)
    where
        F: Fn(&Scenario) -> f64,
    {
        self.scenarios
            .iter()
            .filter(|s| s.weight > 0.0)
            .map(g)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            })
    }
}
