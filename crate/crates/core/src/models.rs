//! Max-stable test models with known Pickands functions.
//!
//! Samples have unit Fréchet margins. The symmetric logistic model is drawn
//! as a positive-stable mixture: `X_i = (S / E_i)^{α}` with `E_i` unit
//! exponential and `S` positive `α`-stable with Laplace transform
//! `exp(-t^α)`, generated by Kanter's representation.

use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bernstein::SimplexPoint;
use crate::error::{check_len, Error, Result};
use crate::madogram::SampleMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Family {
    SymmetricLogistic {
        alpha: f64,
    },
    #[cfg(feature = "asymmetric-logistic")]
    AsymmetricLogistic {
        components: Vec<AlComponent>,
    },
}

/// One term `(Σ_{i∈members} (θ_i w_i)^{1/α})^α` of an asymmetric logistic
/// model. For every coordinate the weights across components sum to one.
#[cfg(feature = "asymmetric-logistic")]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlComponent {
    pub members: Vec<usize>,
    pub weights: Vec<f64>,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub d: usize,
    #[serde(flatten)]
    pub family: Family,
}

impl ModelSpec {
    pub fn symmetric_logistic(d: usize, alpha: f64) -> Result<Self> {
        let spec = Self {
            d,
            family: Family::SymmetricLogistic { alpha },
        };
        spec.validate()?;
        Ok(spec)
    }

    #[cfg(feature = "asymmetric-logistic")]
    pub fn asymmetric_logistic(d: usize, components: Vec<AlComponent>) -> Result<Self> {
        let spec = Self {
            d,
            family: Family::AsymmetricLogistic { components },
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn family_name(&self) -> &'static str {
        match self.family {
            Family::SymmetricLogistic { .. } => "symmetric-logistic",
            #[cfg(feature = "asymmetric-logistic")]
            Family::AsymmetricLogistic { .. } => "asymmetric-logistic",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::domain(format!("model dimension must be >= 2, got {}", self.d)));
        }
        match &self.family {
            Family::SymmetricLogistic { alpha } => check_alpha(*alpha),
            #[cfg(feature = "asymmetric-logistic")]
            Family::AsymmetricLogistic { components } => {
                let mut totals = vec![0.0; self.d];
                for c in components {
                    check_alpha(c.alpha)?;
                    check_len(c.members.len(), c.weights.len())?;
                    if c.members.is_empty() {
                        return Err(Error::domain("asymmetric logistic component has no members"));
                    }
                    for (&i, &t) in c.members.iter().zip(&c.weights) {
                        if i >= self.d || !(0.0..=1.0).contains(&t) {
                            return Err(Error::domain(format!("bad member {i} or weight {t}")));
                        }
                        totals[i] += t;
                    }
                }
                if totals.iter().any(|t| (t - 1.0).abs() > 1e-12) {
                    return Err(Error::domain(format!(
                        "asymmetric logistic weights must sum to 1 per coordinate, got {totals:?}"
                    )));
                }
                Ok(())
            }
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "logistic parameter must lie in (0, 1], got {alpha}"
        )))
    }
}

fn logistic_norm(terms: impl Iterator<Item = f64>, alpha: f64) -> f64 {
    // scaled by the largest term to avoid underflow of x^{1/α}
    let terms: Vec<f64> = terms.collect();
    let max = terms.iter().fold(0.0f64, |m, v| m.max(*v));
    if max == 0.0 {
        return 0.0;
    }
    let sum: f64 = terms.iter().map(|t| (t / max).powf(1.0 / alpha)).sum();
    max * sum.powf(alpha)
}

pub fn true_pickands(model: &ModelSpec, w: &SimplexPoint) -> Result<f64> {
    check_len(model.d, w.dim())?;
    let c = w.coords();
    Ok(match &model.family {
        Family::SymmetricLogistic { alpha } => logistic_norm(c.iter().copied(), *alpha),
        #[cfg(feature = "asymmetric-logistic")]
        Family::AsymmetricLogistic { components } => components
            .iter()
            .map(|comp| {
                let terms = comp.members.iter().zip(&comp.weights).map(|(&i, t)| t * c[i]);
                logistic_norm(terms, comp.alpha)
            })
            .sum(),
    })
}

/// Positive `α`-stable variate with Laplace transform `exp(-t^α)`.
fn positive_stable<R: Rng>(rng: &mut R, alpha: f64) -> f64 {
    if alpha >= 1.0 {
        return 1.0;
    }
    let u = std::f64::consts::PI * rng.sample::<f64, _>(Open01);
    let e = -rng.sample::<f64, _>(Open01).ln();
    let log_s = (alpha * u).sin().ln() - (u.sin().ln()) / alpha
        + (1.0 - alpha) / alpha * (((1.0 - alpha) * u).sin().ln() - e.ln());
    log_s.exp()
}

/// Symmetric logistic draw of dimension `d` written into `out`.
fn logistic_draw<R: Rng>(rng: &mut R, alpha: f64, out: &mut [f64]) {
    let s = positive_stable(rng, alpha);
    for x in out.iter_mut() {
        let e = -rng.sample::<f64, _>(Open01).ln();
        *x = (s / e).powf(alpha);
    }
}

/// `n` draws from `model`, reproducible for a given seed.
pub fn sample(model: &ModelSpec, n: usize, seed: u64) -> Result<SampleMatrix> {
    model.validate()?;
    let d = model.d;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![0.0; n * d];
    match &model.family {
        Family::SymmetricLogistic { alpha } => {
            for row in values.chunks_exact_mut(d) {
                logistic_draw(&mut rng, *alpha, row);
            }
        }
        #[cfg(feature = "asymmetric-logistic")]
        Family::AsymmetricLogistic { components } => {
            let mut z = vec![0.0; d];
            for row in values.chunks_exact_mut(d) {
                for comp in components {
                    let zs = &mut z[..comp.members.len()];
                    logistic_draw(&mut rng, comp.alpha, zs);
                    for ((&i, t), zi) in comp.members.iter().zip(&comp.weights).zip(zs.iter()) {
                        row[i] = row[i].max(t * zi);
                    }
                }
            }
        }
    }
    SampleMatrix::from_row_major(n, d, values)
}

/// Decorrelated seed for replicate `rep` of a run seeded with `seed`
/// (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, rep: u64) -> u64 {
    let mut z = seed ^ rep.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
