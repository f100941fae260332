//! Bounded random inputs: independent marginals, interval partitions of the
//! support, and closed-form cell statistics (probability and conditional
//! mean).

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::interval::{Interval, IntervalBox};

/// Cells lighter than this have no usable conditional mean.
pub const MIN_CELL_PROBABILITY: f64 = 1e-300;

const QUANTILE_TOL: f64 = 1e-12;
const QUANTILE_MAX_ITER: usize = 200;
const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Error function.
pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

/// Complementary error function `1 - erf(x)`.
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Standard normal mass of `[alpha, beta]`, computed on whichever tail
/// avoids cancellation.
pub fn normal_mass(alpha: f64, beta: f64) -> f64 {
    if alpha >= 0.0 {
        normal_cdf(-alpha) - normal_cdf(-beta)
    } else {
        normal_cdf(beta) - normal_cdf(alpha)
    }
}

/// One independent component of the random vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Marginal {
    Uniform {
        a: f64,
        b: f64,
    },
    #[serde(rename = "truncnormal")]
    TruncatedNormal {
        mu: f64,
        sigma: f64,
        a: f64,
        b: f64,
    },
}

impl Marginal {
    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::InvalidInput(format!(
                "uniform support must satisfy a < b, got [{a}, {b}]"
            )));
        }
        Ok(Marginal::Uniform { a, b })
    }

    pub fn truncated_normal(mu: f64, sigma: f64, a: f64, b: f64) -> Result<Self> {
        if !(mu.is_finite() && sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidInput(format!(
                "truncated normal needs finite mu and sigma > 0, got mu={mu}, sigma={sigma}"
            )));
        }
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::InvalidInput(format!(
                "truncation range must satisfy a < b, got [{a}, {b}]"
            )));
        }
        let mass = normal_mass((a - mu) / sigma, (b - mu) / sigma);
        if !(mass > MIN_CELL_PROBABILITY) {
            return Err(Error::InvalidInput(format!(
                "truncation range [{a}, {b}] carries no normal mass"
            )));
        }
        Ok(Marginal::TruncatedNormal { mu, sigma, a, b })
    }

    pub fn support(&self) -> Interval {
        match *self {
            Marginal::Uniform { a, b } | Marginal::TruncatedNormal { a, b, .. } => Interval::new(a, b),
        }
    }

    pub fn mean(&self) -> f64 {
        let s = self.support();
        self.conditional_mean(s.lo(), s.hi())
            .expect("support has positive mass")
    }

    /// `P(l <= w <= u)` for `[l, u]` inside the support.
    pub fn probability(&self, l: f64, u: f64) -> f64 {
        match *self {
            Marginal::Uniform { a, b } => (u - l) / (b - a),
            Marginal::TruncatedNormal { mu, sigma, a, b } => {
                let z = |v: f64| (v - mu) / sigma;
                normal_mass(z(l), z(u)) / normal_mass(z(a), z(b))
            }
        }
    }

    /// `E[w | l <= w <= u]` for `[l, u]` inside the support.
    pub fn conditional_mean(&self, l: f64, u: f64) -> Result<f64> {
        let m = match *self {
            Marginal::Uniform { .. } => {
                if self.probability(l, u) < MIN_CELL_PROBABILITY {
                    return Err(Error::ZeroProbabilityCell(self.probability(l, u)));
                }
                0.5 * (l + u)
            }
            Marginal::TruncatedNormal { mu, sigma, .. } => {
                let alpha = (l - mu) / sigma;
                let beta = (u - mu) / sigma;
                let mass = normal_mass(alpha, beta);
                if !(mass >= MIN_CELL_PROBABILITY) {
                    return Err(Error::ZeroProbabilityCell(mass));
                }
                mu + sigma * (normal_pdf(alpha) - normal_pdf(beta)) / mass
            }
        };
        Ok(m.clamp(l, u))
    }

    /// Inverse CDF on the support, `q in [0, 1]`.
    pub fn quantile(&self, q: f64) -> f64 {
        match *self {
            Marginal::Uniform { a, b } => (a + q * (b - a)).clamp(a, b),
            Marginal::TruncatedNormal { mu, sigma, a, b } => {
                let alpha = (a - mu) / sigma;
                let beta = (b - mu) / sigma;
                let target = q * normal_mass(alpha, beta);
                let (mut lo, mut hi) = (alpha, beta);
                let mut z = 0.5 * (lo + hi);
                for _ in 0..QUANTILE_MAX_ITER {
                    let r = normal_mass(alpha, z) - target;
                    if r < 0.0 {
                        lo = z;
                    } else {
                        hi = z;
                    }
                    let d = normal_pdf(z);
                    let newton = z - r / d;
                    let next = if d > 0.0 && newton > lo && newton < hi {
                        newton
                    } else {
                        0.5 * (lo + hi)
                    };
                    let done = (next - z).abs() <= QUANTILE_TOL || hi - lo <= QUANTILE_TOL;
                    z = next;
                    if done {
                        break;
                    }
                }
                (mu + sigma * z).clamp(a, b)
            }
        }
    }
}

/// Product distribution of independent marginals.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct DistributionSpec {
    marginals: Vec<Marginal>,
}

impl DistributionSpec {
    pub fn new(marginals: Vec<Marginal>) -> Result<Self> {
        if marginals.is_empty() {
            return Err(Error::InvalidInput("distribution needs at least one component".into()));
        }
        Ok(Self { marginals })
    }

    pub fn marginals(&self) -> &[Marginal] {
        &self.marginals
    }

    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    pub fn support(&self) -> IntervalBox {
        IntervalBox::new(self.marginals.iter().map(Marginal::support).collect()).expect("nonempty")
    }

    pub fn mean(&self) -> Vec<f64> {
        self.marginals.iter().map(Marginal::mean).collect()
    }

    fn check_cell(&self, cell: &IntervalBox) -> Result<()> {
        if cell.dim() != self.dim() || !cell.is_subset_of(&self.support()) {
            return Err(Error::CellOutsideSupport(format!(
                "{cell} is not inside {}",
                self.support()
            )));
        }
        Ok(())
    }

    pub fn cell_probability(&self, cell: &IntervalBox) -> Result<f64> {
        self.check_cell(cell)?;
        Ok(self
            .marginals
            .iter()
            .zip(cell.iter())
            .map(|(m, iv)| m.probability(iv.lo(), iv.hi()))
            .product())
    }

    pub fn cell_conditional_mean(&self, cell: &IntervalBox) -> Result<Vec<f64>> {
        let prob = self.cell_probability(cell)?;
        if !(prob >= MIN_CELL_PROBABILITY) {
            return Err(Error::ZeroProbabilityCell(prob));
        }
        self.marginals
            .iter()
            .zip(cell.iter())
            .map(|(m, iv)| m.conditional_mean(iv.lo(), iv.hi()))
            .collect()
    }

    /// Draws `n` independent samples by inverse-CDF transformation.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.marginals.iter().map(|m| m.quantile(rng.random::<f64>())).collect()
    }
}

/// One cell of a partition with its exact statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub bounds: IntervalBox,
    pub probability: f64,
    pub mean: Vec<f64>,
}

/// Tensor-grid interval partition of the support.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Partition {
    domain: IntervalBox,
    counts: Vec<usize>,
    cells: Vec<Cell>,
}

impl Partition {
    /// Partition generated by per-dimension edge lists. Each list must start
    /// and end at the support endpoints and be strictly increasing.
    pub fn grid(dist: &DistributionSpec, edges: &[Vec<f64>]) -> Result<Self> {
        let domain = dist.support();
        if edges.len() != dist.dim() {
            return Err(Error::Dimension(format!(
                "partition has {} edge lists for a {}-dimensional distribution",
                edges.len(),
                dist.dim()
            )));
        }
        for (j, (e, iv)) in edges.iter().zip(domain.iter()).enumerate() {
            let ok = e.len() >= 2 && e[0] == iv.lo() && e[e.len() - 1] == iv.hi() && e.windows(2).all(|w| w[0] < w[1]);
            if !ok {
                return Err(Error::InvalidInput(format!(
                    "edges of dimension {} must increase strictly from {} to {}",
                    j + 1,
                    iv.lo(),
                    iv.hi()
                )));
            }
        }
        let counts: Vec<usize> = edges.iter().map(|e| e.len() - 1).collect();
        let total: usize = counts.iter().product();
        let mut cells = Vec::with_capacity(total);
        let mut idx = vec![0usize; counts.len()];
        for _ in 0..total {
            let comps = idx
                .iter()
                .zip(edges)
                .map(|(&i, e)| Interval::new(e[i], e[i + 1]))
                .collect();
            let bounds = IntervalBox::new(comps)?;
            let probability = dist.cell_probability(&bounds)?;
            let mean = dist.cell_conditional_mean(&bounds)?;
            cells.push(Cell {
                bounds,
                probability,
                mean,
            });
            // last dimension varies fastest
            for j in (0..idx.len()).rev() {
                idx[j] += 1;
                if idx[j] < counts[j] {
                    break;
                }
                idx[j] = 0;
            }
        }
        let sum: f64 = cells.iter().map(|c| c.probability).sum();
        if (sum - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidInput(format!("cell probabilities sum to {sum}, not 1")));
        }
        Ok(Self { domain, counts, cells })
    }

    /// Equal-width tensor grid over `wbox` with `counts[j]` cells along
    /// dimension `j`.
    pub fn uniform(wbox: &IntervalBox, dist: &DistributionSpec, counts: &[usize]) -> Result<Self> {
        if *wbox != dist.support() {
            return Err(Error::InvalidInput(format!(
                "partition domain {wbox} differs from the distribution support {}",
                dist.support()
            )));
        }
        if counts.len() != wbox.dim() {
            return Err(Error::Dimension(format!(
                "{} cell counts given for a {}-dimensional box",
                counts.len(),
                wbox.dim()
            )));
        }
        if counts.contains(&0) {
            return Err(Error::InvalidInput("cell counts must be positive".into()));
        }
        let edges: Vec<Vec<f64>> = counts
            .iter()
            .zip(wbox.iter())
            .map(|(&n, iv)| {
                let mut e: Vec<f64> = (0..=n).map(|i| iv.lo() + iv.width() * i as f64 / n as f64).collect();
                e[0] = iv.lo();
                e[n] = iv.hi();
                e
            })
            .collect();
        Self::grid(dist, &edges)
    }

    /// The trivial one-cell partition.
    pub fn single(dist: &DistributionSpec) -> Result<Self> {
        Self::uniform(&dist.support(), dist, &vec![1; dist.dim()])
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn domain(&self) -> &IntervalBox {
        &self.domain
    }
}
