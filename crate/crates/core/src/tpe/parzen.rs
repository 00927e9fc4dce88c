use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use statrs::function::erf::erf;

/// Weight of the uniform prior component, in units of one observation.
const PRIOR_WEIGHT: f64 = 1.0;
/// Points closer than this to the anchor count as sitting on it.
pub(crate) const ANCHOR_TOL: f64 = 1e-12;

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

/// Mixture of Gaussians truncated to `[lo, hi]`, one per observation, plus a
/// uniform prior. An optional anchor adds a point mass at the anchor value.
pub(crate) struct ContinuousParzen {
    lo: f64,
    hi: f64,
    mus: Vec<f64>,
    sigmas: Vec<f64>,
    /// Truncation mass of each kernel inside `[lo, hi]`.
    masses: Vec<f64>,
    anchor: Option<(f64, f64)>,
}

impl ContinuousParzen {
    pub fn fit(points: &[f64], lo: f64, hi: f64, anchor: Option<f64>) -> Self {
        let anchor = anchor.map(|a| {
            let on = points.iter().filter(|&&p| (p - a).abs() <= ANCHOR_TOL).count() as f64;
            (a, (on + 0.5) / (points.len() as f64 + 1.0))
        });
        let mut mus: Vec<f64> = match anchor {
            Some((a, _)) => points.iter().copied().filter(|p| (p - a).abs() > ANCHOR_TOL).collect(),
            None => points.to_vec(),
        };
        mus.sort_by(f64::total_cmp);
        let sigmas = bandwidths(&mus, lo, hi);
        let masses = mus
            .iter()
            .zip(&sigmas)
            .map(|(&mu, &s)| std_normal_cdf((hi - mu) / s) - std_normal_cdf((lo - mu) / s))
            .map(|m| m.max(1e-300))
            .collect();
        Self { lo, hi, mus, sigmas, masses, anchor }
    }

    fn continuous_density(&self, x: f64) -> f64 {
        let range = self.hi - self.lo;
        let kernels: f64 = self
            .mus
            .iter()
            .zip(&self.sigmas)
            .zip(&self.masses)
            .map(|((&mu, &s), &mass)| {
                (-0.5 * ((x - mu) / s).powi(2)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt() * mass)
            })
            .sum();
        (kernels + PRIOR_WEIGHT / range) / (self.mus.len() as f64 + PRIOR_WEIGHT)
    }

    /// Log-likelihood used for the density ratio: the point mass at the
    /// anchor, or the continuous part scaled by its mixture weight.
    pub fn log_density(&self, x: f64) -> f64 {
        match self.anchor {
            Some((a, p)) if (x - a).abs() <= ANCHOR_TOL => p.ln(),
            Some((_, p)) => (1.0 - p).ln() + self.continuous_density(x).ln(),
            None => self.continuous_density(x).ln(),
        }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        if let Some((a, p)) = self.anchor {
            if rng.random::<f64>() < p {
                return a;
            }
        }
        let total = self.mus.len() as f64 + PRIOR_WEIGHT;
        let pick = rng.random::<f64>() * total;
        if pick >= self.mus.len() as f64 {
            return rng.random_range(self.lo..=self.hi);
        }
        let i = (pick as usize).min(self.mus.len() - 1);
        let normal = Normal::new(self.mus[i], self.sigmas[i]).expect("positive bandwidth");
        for _ in 0..64 {
            let v = normal.sample(rng);
            if (self.lo..=self.hi).contains(&v) {
                return v;
            }
        }
        self.mus[i].clamp(self.lo, self.hi)
    }
}

/// Per-kernel widths for sorted centers: the larger gap to a neighbour
/// (interval ends count as neighbours), clipped to
/// `[range / min(100, n + 1), range]`.
fn bandwidths(sorted: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let range = hi - lo;
    let n = sorted.len();
    let floor = range / (n as f64 + 1.0).min(100.0);
    (0..n)
        .map(|i| {
            let left = if i == 0 { sorted[i] - lo } else { sorted[i] - sorted[i - 1] };
            let right = if i + 1 == n { hi - sorted[i] } else { sorted[i + 1] - sorted[i] };
            left.max(right).clamp(floor, range)
        })
        .collect()
}

/// Smoothed frequencies `(count + 1/K) / (n + 1)`.
pub(crate) struct CategoricalParzen {
    probs: Vec<f64>,
}

impl CategoricalParzen {
    pub fn fit(indices: &[usize], k: usize) -> Self {
        let mut counts = vec![0.0; k];
        for &i in indices {
            counts[i] += 1.0;
        }
        let n = indices.len() as f64;
        let probs = counts
            .into_iter()
            .map(|c| (c + PRIOR_WEIGHT / k as f64) / (n + PRIOR_WEIGHT))
            .collect();
        Self { probs }
    }

    pub fn log_density(&self, i: usize) -> f64 {
        self.probs[i].ln()
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.probs.len() - 1
    }
}

/// Radical inverse of `index` in base `base`.
pub(crate) fn halton(mut index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

pub(crate) fn nth_prime(n: usize) -> u64 {
    let mut primes: Vec<u64> = Vec::with_capacity(n + 1);
    let mut c = 2u64;
    while primes.len() <= n {
        if primes.iter().take_while(|&&p| p * p <= c).all(|&p| c % p != 0) {
            primes.push(c);
        }
        c += 1;
    }
    primes[n]
}
