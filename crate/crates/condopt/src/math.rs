//! Log-space numerics: stable mixtures and cached log-gamma lookups.

use std::hash::{BuildHasherDefault, Hasher};

use statrs::function::gamma::ln_gamma;

/// FNV-1a, for hashing region states: the keys are short and hashed in hot
/// loops, where the default hasher's setup cost dominates.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Fnv1a(u64);

impl Hasher for Fnv1a {
    #[inline]
    fn write(&mut self, bytes: &[u8]) {
        let mut h = if self.0 == 0 { 0xcbf2_9ce4_8422_2325 } else { self.0 };
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        self.0 = h;
    }

    #[inline]
    fn finish(&self) -> u64 {
        self.0
    }
}

pub(crate) type FnvBuildHasher = BuildHasherDefault<Fnv1a>;

/// log(exp(a) + exp(b)) without overflow.
#[inline]
pub fn log_sum_exp2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    if a > b {
        a + (b - a).exp().ln_1p()
    } else {
        b + (a - b).exp().ln_1p()
    }
}

/// log(sum(exp(xs))) over a slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s: f64 = xs.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

/// log(1 - exp(x)) for x <= 0.
#[inline]
pub fn ln_1m_exp(x: f64) -> f64 {
    debug_assert!(x <= 0.0);
    if x == 0.0 {
        return f64::NEG_INFINITY;
    }
    // Split at -ln 2 for accuracy (Maechler's recipe).
    if x < -std::f64::consts::LN_2 {
        (-x.exp()).ln_1p()
    } else {
        (-x.exp_m1()).ln()
    }
}

/// log(exp(a) - exp(b)) for a >= b.
#[inline]
pub fn log_diff_exp(a: f64, b: f64) -> f64 {
    debug_assert!(a >= b);
    if b == f64::NEG_INFINITY {
        return a;
    }
    a + ln_1m_exp(b - a)
}

/// Streaming log-sum-exp accumulator: feeds terms one at a time without
/// materializing them. The result is a deterministic function of the term
/// sequence.
#[derive(Debug, Clone, Copy)]
pub struct StreamLse {
    max: f64,
    sum: f64,
}

impl StreamLse {
    pub fn new() -> Self {
        Self { max: f64::NEG_INFINITY, sum: 0.0 }
    }

    #[inline]
    pub fn add(&mut self, t: f64) {
        if t == f64::NEG_INFINITY {
            return;
        }
        if t <= self.max {
            self.sum += (t - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - t).exp() + 1.0;
            self.max = t;
        }
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

impl Default for StreamLse {
    fn default() -> Self {
        Self::new()
    }
}

/// ln Gamma(base + k) for integer k, precomputed up to a count bound.
///
/// The mass-split marginals evaluate ln Gamma at `alpha + count` for counts up
/// to n; a table turns those into O(1) lookups.
#[derive(Debug, Clone)]
pub struct LnGammaTable {
    base: f64,
    vals: Vec<f64>,
}

impl LnGammaTable {
    pub fn new(base: f64, max_count: usize) -> Self {
        debug_assert!(base > 0.0);
        let vals = (0..=max_count).map(|k| ln_gamma(base + k as f64)).collect();
        Self { base, vals }
    }

    #[inline]
    pub fn get(&self, count: usize) -> f64 {
        match self.vals.get(count) {
            Some(&v) => v,
            None => ln_gamma(self.base + count as f64),
        }
    }
}

/// Cached tables for the two-child Dirichlet-multinomial factor
/// Beta(alpha + counts) / Beta(alpha).
#[derive(Debug, Clone)]
pub struct DirichletFactorTable {
    left: LnGammaTable,
    right: LnGammaTable,
    total: LnGammaTable,
    ln_beta_prior: f64,
}

impl DirichletFactorTable {
    pub fn new(alpha: [f64; 2], max_count: usize) -> Self {
        let left = LnGammaTable::new(alpha[0], max_count);
        let right = LnGammaTable::new(alpha[1], max_count);
        let total = LnGammaTable::new(alpha[0] + alpha[1], max_count);
        let ln_beta_prior = left.get(0) + right.get(0) - total.get(0);
        Self { left, right, total, ln_beta_prior }
    }

    /// log of Beta(alpha_1 + n_1, alpha_2 + n_2) / Beta(alpha_1, alpha_2).
    #[inline]
    pub fn log_factor(&self, n_left: usize, n_right: usize) -> f64 {
        self.left.get(n_left) + self.right.get(n_right) - self.total.get(n_left + n_right)
            - self.ln_beta_prior
    }
}
