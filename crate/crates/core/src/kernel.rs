//! Probability kernels: the interpolating marginal, the three-action posterior
//! (stay / resample from the prior / flip to the data token), the model's
//! reverse transition, and the Bayes-derived forward kernel.
//!
//! States are category indices; one-hot vectors only appear inside the
//! arithmetic here.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::schedule::gamma_cond_from_levels;

/// Sum drift accepted (and removed) by [`Simplex::new`].
pub const RENORMALIZE_TOLERANCE: f64 = 1e-9;
/// Tolerance for the weight identities checked by [`PosteriorWeights`].
pub const WEIGHT_TOLERANCE: f64 = 1e-12;

// Below this drift the vector is kept bit-for-bit.
const EXACT_DRIFT: f64 = 1e-14;

/// A probability vector over `K` categories.
#[derive(Debug, Clone, PartialEq)]
pub struct Simplex {
    probs: Vec<f64>,
}

impl Simplex {
    /// Validates `probs`. Entries must be finite and nonnegative (rounding
    /// residue down to `-1e-15` is zeroed); a sum within
    /// [`RENORMALIZE_TOLERANCE`] of one is renormalized, anything further is
    /// rejected.
    pub fn new(mut probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Shape("simplex needs at least one category"));
        }
        let mut sum = 0.0;
        for p in probs.iter_mut() {
            if !p.is_finite() || *p < -1e-15 {
                return Err(Error::NotASimplex { sum: f64::NAN });
            }
            if *p < 0.0 {
                *p = 0.0;
            }
            sum += *p;
        }
        let drift = (sum - 1.0).abs();
        if drift > RENORMALIZE_TOLERANCE {
            return Err(Error::NotASimplex { sum });
        }
        if drift > EXACT_DRIFT {
            for p in probs.iter_mut() {
                *p /= sum;
            }
        }
        Ok(Self { probs })
    }

    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Shape("simplex needs at least one category"));
        }
        Ok(Self {
            probs: vec![1.0 / k as f64; k],
        })
    }

    /// The vertex `e_i`.
    pub fn one_hot(k: usize, i: usize) -> Result<Self> {
        check_index(i, k)?;
        let mut probs = vec![0.0; k];
        probs[i] = 1.0;
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }

    /// Number of categories `K`.
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.probs[i]
    }

    /// True when every entry is strictly positive.
    pub fn full_support(&self) -> bool {
        self.probs.iter().all(|&p| p > 0.0)
    }

    /// `a * self + (1 - a) * other`.
    pub fn mix(&self, a: f64, other: &Simplex) -> Result<Simplex> {
        if self.len() != other.len() {
            return Err(Error::Shape("mixing simplexes of different size"));
        }
        Simplex::new(
            self.probs
                .iter()
                .zip(&other.probs)
                .map(|(p, q)| a * p + (1.0 - a) * q)
                .collect(),
        )
    }

    /// Largest absolute elementwise difference.
    pub fn max_abs_diff(&self, other: &Simplex) -> f64 {
        max_abs_diff(&self.probs, &other.probs)
    }
}

pub(crate) fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[inline]
pub(crate) fn check_index(i: usize, k: usize) -> Result<()> {
    if i < k {
        Ok(())
    } else {
        Err(Error::Index {
            index: i,
            categories: k,
        })
    }
}

/// `(1 - gamma_t) * prior + gamma_t * e_x`.
pub fn marginal(gamma_t: f64, prior: &Simplex, x: usize) -> Result<Simplex> {
    if !(0.0..=1.0).contains(&gamma_t) {
        return Err(Error::Domain("noise level must lie in [0, 1]"));
    }
    check_index(x, prior.len())?;
    let mut probs: Vec<f64> = prior.probs.iter().map(|p| (1.0 - gamma_t) * p).collect();
    probs[x] += gamma_t;
    Simplex::new(probs)
}

/// Mixture weights of the reverse transition from `t` to `s < t`:
/// `w_stay = (1 - lambda) gamma_{s|t}`, `w_prior = lambda (1 - gamma_s)`,
/// `w_flip = 1 - w_stay - w_prior`.
///
/// Construction checks that the result keeps the marginal at `s` equal to
/// `(1 - gamma_s) q + gamma_s e_x`, i.e.
/// `w_stay (1 - gamma_t) + w_prior = 1 - gamma_s` and
/// `w_stay gamma_t + w_flip = gamma_s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorWeights {
    w_stay: f64,
    w_prior: f64,
    w_flip: f64,
    gamma_s: f64,
    gamma_t: f64,
}

impl PosteriorWeights {
    pub fn new(gamma_s: f64, gamma_t: f64, lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Domain("lambda must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&gamma_s) || !(0.0..=1.0).contains(&gamma_t) {
            return Err(Error::Domain("noise level must lie in [0, 1]"));
        }
        if gamma_t >= 1.0 {
            return Err(Error::Singularity("gamma_t = 1 leaves gamma_{s|t} undefined"));
        }
        if gamma_s <= gamma_t {
            return Err(Error::Ordering("posterior weights need gamma_s > gamma_t"));
        }
        let gamma_cond = gamma_cond_from_levels(gamma_s, gamma_t)?;
        let w_stay = (1.0 - lambda) * gamma_cond;
        let w_prior = lambda * (1.0 - gamma_s);
        let w_flip = (1.0 - (w_stay + w_prior)).max(0.0);

        // The closed form (1 - lambda)(1 - gamma_{s|t}) + lambda gamma_s must agree.
        let closed = (1.0 - lambda) * (1.0 - gamma_cond) + lambda * gamma_s;
        if (closed - w_flip).abs() > WEIGHT_TOLERANCE {
            return Err(Error::Domain("w_flip disagrees with its closed form"));
        }
        let weights = Self {
            w_stay,
            w_prior,
            w_flip,
            gamma_s,
            gamma_t,
        };
        weights.validate()?;
        Ok(weights)
    }

    /// Raw weights with no checks. Used to inject faults into verification.
    pub fn from_raw_unchecked(
        w_stay: f64,
        w_prior: f64,
        w_flip: f64,
        gamma_s: f64,
        gamma_t: f64,
    ) -> Self {
        Self {
            w_stay,
            w_prior,
            w_flip,
            gamma_s,
            gamma_t,
        }
    }

    /// Sum-to-one plus both marginal constraints, each within [`WEIGHT_TOLERANCE`].
    pub fn validate(&self) -> Result<()> {
        let unit = |w: f64| (0.0..=1.0).contains(&w);
        if !(unit(self.w_stay) && unit(self.w_prior) && unit(self.w_flip)) {
            return Err(Error::Domain("posterior weight outside [0, 1]"));
        }
        let [total, c1, c2] = self.constraint_residuals();
        if total > WEIGHT_TOLERANCE || c1 > WEIGHT_TOLERANCE || c2 > WEIGHT_TOLERANCE {
            return Err(Error::Domain("posterior weights violate the marginal constraints"));
        }
        Ok(())
    }

    /// Absolute residuals of `[sum = 1, constraint (1), constraint (2)]`.
    pub fn constraint_residuals(&self) -> [f64; 3] {
        [
            (self.w_stay + self.w_prior + self.w_flip - 1.0).abs(),
            (self.w_stay * (1.0 - self.gamma_t) + self.w_prior - (1.0 - self.gamma_s)).abs(),
            (self.w_stay * self.gamma_t + self.w_flip - self.gamma_s).abs(),
        ]
    }

    pub fn w_stay(&self) -> f64 {
        self.w_stay
    }

    pub fn w_prior(&self) -> f64 {
        self.w_prior
    }

    pub fn w_flip(&self) -> f64 {
        self.w_flip
    }

    pub fn gamma_s(&self) -> f64 {
        self.gamma_s
    }

    pub fn gamma_t(&self) -> f64 {
        self.gamma_t
    }

    /// `w_stay e_{x_t} + w_prior prior + w_flip target` written into `out`.
    /// `target` is either a one-hot (true posterior) or a model prediction.
    pub fn mix_into(&self, x_t: usize, prior: &[f64], target: &[f64], out: &mut [f64]) {
        for ((o, q), y) in out.iter_mut().zip(prior).zip(target) {
            *o = self.w_prior * q + self.w_flip * y;
        }
        out[x_t] += self.w_stay;
    }

    /// Like [`mix_into`](Self::mix_into) with `target = e_x`, bit for bit.
    pub fn posterior_into(&self, x_t: usize, prior: &[f64], x: usize, out: &mut [f64]) {
        for (i, (o, q)) in out.iter_mut().zip(prior).enumerate() {
            *o = self.w_prior * q + if i == x { self.w_flip } else { 0.0 };
        }
        out[x_t] += self.w_stay;
    }
}

/// Shorthand for [`PosteriorWeights::new`].
pub fn posterior_weights(gamma_s: f64, gamma_t: f64, lambda: f64) -> Result<PosteriorWeights> {
    PosteriorWeights::new(gamma_s, gamma_t, lambda)
}

/// True reverse transition `p(x_s | x_t, x) = w_stay e_{x_t} + w_prior q + w_flip e_x`.
pub fn posterior(
    weights: &PosteriorWeights,
    x_t: usize,
    prior: &Simplex,
    x: usize,
) -> Result<Simplex> {
    let k = prior.len();
    check_index(x_t, k)?;
    check_index(x, k)?;
    let mut out = vec![0.0; k];
    weights.posterior_into(x_t, &prior.probs, x, &mut out);
    Simplex::new(out)
}

/// Model reverse transition `w_stay e_{x_t} + w_prior q + w_flip x_theta`.
pub fn parametrized_reverse(
    weights: &PosteriorWeights,
    x_t: usize,
    prior: &Simplex,
    x_theta: &Simplex,
) -> Result<Simplex> {
    let k = prior.len();
    if x_theta.len() != k {
        return Err(Error::Shape("prediction and prior have different K"));
    }
    check_index(x_t, k)?;
    let mut out = vec![0.0; k];
    weights.mix_into(x_t, &prior.probs, &x_theta.probs, &mut out);
    Simplex::new(out)
}

/// Forward transition `p(x_t | x_s = i, x) = alpha_i m_t + (1 - alpha_i) e_i`
/// obtained from the reverse kernel by Bayes' rule.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardKernel {
    alpha: Vec<f64>,
    marginal_t: Simplex,
}

impl ForwardKernel {
    /// Resampling probability `alpha_i` for each current state `i`.
    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn marginal_t(&self) -> &Simplex {
        &self.marginal_t
    }

    /// `p(x_t = j | x_s = i, x)`.
    pub fn prob(&self, i: usize, j: usize) -> f64 {
        let a = self.alpha[i];
        let stay = if i == j { 1.0 - a } else { 0.0 };
        a * self.marginal_t.probs[j] + stay
    }

    /// Row `i` of the forward transition matrix.
    pub fn row(&self, i: usize) -> Result<Simplex> {
        check_index(i, self.alpha.len())?;
        Simplex::new((0..self.alpha.len()).map(|j| self.prob(i, j)).collect())
    }
}

/// Builds the forward kernel: `alpha_i = D_i / m_s(i)` with
/// `D_i = w_prior q(i) + w_flip 1[i = x]`. Every entry of `marginal_s` must be
/// positive.
pub fn forward_kernel(
    weights: &PosteriorWeights,
    prior: &Simplex,
    x: usize,
    marginal_t: &Simplex,
    marginal_s: &Simplex,
) -> Result<ForwardKernel> {
    let k = prior.len();
    if marginal_t.len() != k || marginal_s.len() != k {
        return Err(Error::Shape("marginals and prior have different K"));
    }
    check_index(x, k)?;
    let mut alpha = Vec::with_capacity(k);
    for i in 0..k {
        let m_s = marginal_s.probs[i];
        if m_s <= 0.0 {
            return Err(Error::Singularity("marginal at s has a zero entry"));
        }
        let d = weights.w_prior * prior.probs[i] + if i == x { weights.w_flip } else { 0.0 };
        alpha.push((d / m_s).clamp(0.0, 1.0));
    }
    Ok(ForwardKernel {
        alpha,
        marginal_t: marginal_t.clone(),
    })
}

/// Inverse-CDF draw for a fixed uniform `u` in `[0, 1)`.
pub fn sample_with_uniform(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    // u landed in the rounding gap above the accumulated sum.
    last_positive
}

/// Draws a category from `dist` by inverse CDF over the stored order.
pub fn sample_categorical(dist: &Simplex, rng: &mut Rng) -> usize {
    sample_with_uniform(&dist.probs, rng.next_f64())
}
