//! One-dimensional Parzen estimators used by the TPE surrogate.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;

/// Probability mass floor so that far-tail lattice masses stay finite in log space.
const MIN_MASS: f64 = 1e-300;

/// Truncated Gaussian mixture over a numeric parameter.
///
/// Integer parameters are modelled on `[lo - 0.5, hi + 0.5]`, sampled by
/// rounding, and scored by the mass each kernel puts on the unit cell around
/// the integer.
///
/// Besides one kernel per observation, the mixture carries a wide prior
/// kernel centred on the range (standard deviation equal to the range) with
/// weight `prior_weight`, which keeps some mass everywhere so the search
/// cannot collapse onto an early cluster.
#[derive(Debug, Clone)]
pub struct NumericKde {
    centers: Vec<f64>,
    bandwidth: f64,
    lo: f64,
    hi: f64,
    integer: bool,
    /// `ln` of each kernel's mass inside `[lo, hi]`.
    log_norm: Vec<f64>,
    prior_weight: f64,
    prior_log_norm: f64,
}

impl NumericKde {
    /// `lo`/`hi` are the parameter's own bounds; an empty `values` slice
    /// with no prior yields the uniform density.
    pub fn fit(values: &[f64], lo: f64, hi: f64, integer: bool, floor_fraction: f64, prior_weight: f64) -> Self {
        let (lo, hi) = if integer { (lo - 0.5, hi + 0.5) } else { (lo, hi) };
        let floor = (floor_fraction * (hi - lo)).max(adaptive_floor(hi - lo, values.len()));
        let bandwidth = scott_bandwidth(values).max(floor).max(f64::MIN_POSITIVE);
        let log_norm = values
            .iter()
            .map(|&mu| interval_mass(lo, hi, mu, bandwidth).max(MIN_MASS).ln())
            .collect();
        let prior_log_norm = interval_mass(lo, hi, (lo + hi) / 2.0, hi - lo).ln();
        Self {
            centers: values.to_vec(),
            bandwidth,
            lo,
            hi,
            integer,
            log_norm,
            prior_weight: prior_weight.max(0.0),
            prior_log_norm,
        }
    }

    fn prior_sigma(&self) -> f64 {
        self.hi - self.lo
    }

    fn total_weight(&self) -> f64 {
        self.centers.len() as f64 + self.prior_weight
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let x = if self.total_weight() <= 0.0 {
            rng.random_range(self.lo..=self.hi)
        } else {
            let pick = rng.random_range(0.0..self.total_weight());
            if pick < self.centers.len() as f64 {
                let mu = self.centers[(pick as usize).min(self.centers.len() - 1)];
                self.sample_truncated(mu, self.bandwidth, rng)
            } else {
                self.sample_truncated((self.lo + self.hi) / 2.0, self.prior_sigma(), rng)
            }
        };
        if self.integer {
            x.round().clamp(self.lo + 0.5, self.hi - 0.5)
        } else {
            x
        }
    }

    fn sample_truncated<R: Rng + ?Sized>(&self, mu: f64, sigma: f64, rng: &mut R) -> f64 {
        // kernel centres lie inside the bounds, so acceptance is at least one half
        for _ in 0..1000 {
            let z: f64 = rng.sample(StandardNormal);
            let x = mu + sigma * z;
            if (self.lo..=self.hi).contains(&x) {
                return x;
            }
        }
        mu.clamp(self.lo, self.hi)
    }

    /// Log density (continuous) or log mass (integer lattice) at `x`.
    pub fn log_pdf(&self, x: f64) -> f64 {
        if self.total_weight() <= 0.0 {
            // for integers the extended width equals the number of lattice points
            return -(self.hi - self.lo).ln();
        }
        let mut terms: Vec<f64> = self
            .centers
            .iter()
            .zip(&self.log_norm)
            .map(|(&mu, &log_z)| self.log_kernel(x, mu, self.bandwidth) - log_z)
            .collect();
        if self.prior_weight > 0.0 {
            let mid = (self.lo + self.hi) / 2.0;
            terms.push(self.prior_weight.ln() + self.log_kernel(x, mid, self.prior_sigma()) - self.prior_log_norm);
        }
        log_sum_exp(&terms) - self.total_weight().ln()
    }

    fn log_kernel(&self, x: f64, mu: f64, h: f64) -> f64 {
        if self.integer {
            interval_mass(x - 0.5, x + 0.5, mu, h).max(MIN_MASS).ln()
        } else {
            let z = (x - mu) / h;
            -0.5 * z * z - (h * (2.0 * PI).sqrt()).ln()
        }
    }
}

/// Smoothed frequency distribution over category indices.
#[derive(Debug, Clone)]
pub struct CategoricalEstimator {
    probs: Vec<f64>,
    index: WeightedIndex<f64>,
}

impl CategoricalEstimator {
    /// `p(choice) ∝ count + prior_weight`.
    pub fn fit(values: &[usize], n_choices: usize, prior_weight: f64) -> Self {
        let mut weights = vec![prior_weight.max(0.0); n_choices];
        for &v in values {
            weights[v] += 1.0;
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            weights.iter_mut().for_each(|w| *w = 1.0);
        }
        let total: f64 = weights.iter().sum();
        let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let index = WeightedIndex::new(&probs).expect("weights are positive");
        Self { probs, index }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.index.sample(rng)
    }

    pub fn log_pdf(&self, choice: usize) -> f64 {
        self.probs[choice].max(MIN_MASS).ln()
    }
}

/// Bandwidth floor that shrinks with the number of observations,
/// `range / min(100, n + 1)`, so small sets stay exploratory.
pub fn adaptive_floor(range: f64, n: usize) -> f64 {
    range / (n as f64 + 1.0).min(100.0)
}

/// Scott's rule, `1.06 * sd * n^(-1/5)`, zero for fewer than two points.
pub fn scott_bandwidth(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    1.06 * var.sqrt() * (n as f64).powf(-0.2)
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// Mass of `N(mu, h^2)` on `[a, b]`, evaluated on the tail that avoids cancellation.
fn interval_mass(a: f64, b: f64, mu: f64, h: f64) -> f64 {
    let za = (a - mu) / h;
    let zb = (b - mu) / h;
    if za > 0.0 {
        // upper tail: Q(za) - Q(zb)
        0.5 * (libm::erfc(za * FRAC_1_SQRT_2) - libm::erfc(zb * FRAC_1_SQRT_2))
    } else {
        normal_cdf(zb) - normal_cdf(za)
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}
