//! Quenched trajectory simulation.
//!
//! Path `i` draws from its own ChaCha8 stream (`seed`, stream `i`), so the
//! ensemble is a pure function of the configuration whatever the thread
//! schedule. Reductions run in path order.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::environment::{Environment, Orbit};
use crate::error::{Error, Result};
use crate::measure::{compensated_sum, Harmonic};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    /// Number of independent paths.
    pub paths: u64,
    pub horizon: u64,
    /// Sorted, distinct, within `1..=horizon`.
    pub checkpoints: Vec<u64>,
}

impl SimConfig {
    pub fn new(seed: u64, paths: u64, horizon: u64, checkpoints: Vec<u64>) -> Result<Self> {
        let cfg = SimConfig {
            seed,
            paths,
            horizon,
            checkpoints,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checkpoints `n/8, n/4, n/2, n`.
    pub fn geometric(seed: u64, paths: u64, horizon: u64) -> Result<Self> {
        let mut cps: Vec<u64> = [8, 4, 2, 1]
            .iter()
            .map(|d| horizon / d)
            .filter(|&c| c > 0)
            .collect();
        cps.dedup();
        SimConfig::new(seed, paths, horizon, cps)
    }

    pub fn validate(&self) -> Result<()> {
        if self.paths == 0 || self.horizon == 0 {
            return Err(Error::Domain("paths and horizon must be positive".into()));
        }
        if self.checkpoints.is_empty() {
            return Err(Error::Domain("at least one checkpoint is required".into()));
        }
        if self.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain(
                "checkpoints must be strictly increasing".into(),
            ));
        }
        if self.checkpoints[0] == 0 || *self.checkpoints.last().unwrap() > self.horizon {
            return Err(Error::Domain("checkpoints must lie in 1..=horizon".into()));
        }
        Ok(())
    }
}

/// State of one path at a checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathSummary {
    pub site: i64,
    pub max: i64,
    pub min: i64,
}

impl PathSummary {
    pub fn at_max(&self) -> bool {
        self.site == self.max
    }

    pub fn at_min(&self) -> bool {
        self.site == self.min
    }

    pub fn drawdown(&self) -> i64 {
        self.max - self.site
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub checkpoints: Vec<u64>,
    /// `paths[i][c]`: path `i` at checkpoint `c`.
    pub paths: Vec<Vec<PathSummary>>,
}

impl Simulation {
    /// Summaries of every path at checkpoint index `c`, in path order.
    pub fn at(&self, c: usize) -> impl Iterator<Item = &PathSummary> + '_ {
        self.paths.iter().map(move |p| &p[c])
    }
}

/// `p(x + kα)·2⁶⁴` along `[−n, n]`; a step goes up iff a uniform `u64`
/// falls below the threshold.
struct Thresholds {
    offset: i64,
    up: Vec<u64>,
}

impl Thresholds {
    fn new(env: &Environment, x: f64, reach: u64) -> Self {
        let n = reach as i64;
        let orbit = Orbit::new(env, x, -n, n);
        let up = (-n..=n)
            .map(|k| {
                let t = orbit.p(k) * 18_446_744_073_709_551_616.0;
                if t >= u64::MAX as f64 {
                    u64::MAX
                } else {
                    t as u64
                }
            })
            .collect();
        Thresholds { offset: n, up }
    }

    #[inline]
    fn get(&self, k: i64) -> u64 {
        self.up[(k + self.offset) as usize]
    }
}

fn run_path(thresholds: &Thresholds, cfg: &SimConfig, index: u64) -> Vec<PathSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index);
    let mut out = Vec::with_capacity(cfg.checkpoints.len());
    let (mut site, mut max, mut min) = (0i64, 0i64, 0i64);
    let mut t = 0u64;
    for &cp in &cfg.checkpoints {
        while t < cp {
            if rng.next_u64() < thresholds.get(site) {
                site += 1;
                max = max.max(site);
            } else {
                site -= 1;
                min = min.min(site);
            }
            t += 1;
        }
        out.push(PathSummary { site, max, min });
    }
    out
}

/// Runs `cfg.paths` walks from 0 in the environment seen from `x`.
pub fn simulate(env: &Environment, x: f64, cfg: &SimConfig) -> Result<Simulation> {
    cfg.validate()?;
    let thresholds = Thresholds::new(env, x, cfg.horizon);
    let paths = (0..cfg.paths)
        .into_par_iter()
        .map(|i| run_path(&thresholds, cfg, i))
        .collect();
    Ok(Simulation {
        checkpoints: cfg.checkpoints.clone(),
        paths,
    })
}

/// A binomial proportion with its 95% Wilson interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub successes: u64,
    pub trials: u64,
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Proportion {
    pub fn wilson(successes: u64, trials: u64) -> Self {
        assert!(trials > 0 && successes <= trials);
        let n = trials as f64;
        let p = successes as f64 / n;
        let z2 = Z95 * Z95;
        let denom = 1.0 + z2 / n;
        let centre = (p + z2 / (2.0 * n)) / denom;
        let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
        Proportion {
            successes,
            trials,
            estimate: p,
            // the bounds are exactly 0 and 1 at the extremes
            lo: if successes == 0 {
                0.0
            } else {
                (centre - half).max(0.0)
            },
            hi: if successes == trials {
                1.0
            } else {
                (centre + half).min(1.0)
            },
        }
    }

    pub fn contains(&self, p: f64) -> bool {
        self.lo <= p && p <= self.hi
    }

    /// Intervals are disjoint and this one lies below `other`.
    pub fn strictly_below(&self, other: &Proportion) -> bool {
        self.hi < other.lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cond16Row {
    pub checkpoint: u64,
    /// `ℙ(max_{j≤n} ξ_j = ξ_n)`
    pub p_max: Proportion,
    /// `ℙ(min_{j≤n} ξ_j = ξ_n)`
    pub p_min: Proportion,
}

pub fn condition16_from(sim: &Simulation) -> Vec<Cond16Row> {
    let m = sim.paths.len() as u64;
    sim.checkpoints
        .iter()
        .enumerate()
        .map(|(c, &checkpoint)| {
            let hits_max = sim.at(c).filter(|s| s.at_max()).count() as u64;
            let hits_min = sim.at(c).filter(|s| s.at_min()).count() as u64;
            Cond16Row {
                checkpoint,
                p_max: Proportion::wilson(hits_max, m),
                p_min: Proportion::wilson(hits_min, m),
            }
        })
        .collect()
}

/// Frequency of the walk sitting at its running maximum (resp. minimum).
pub fn condition16_estimate(env: &Environment, x: f64, cfg: &SimConfig) -> Result<Vec<Cond16Row>> {
    Ok(condition16_from(&simulate(env, x, cfg)?))
}

/// Sample mean and standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
}

impl MeanEstimate {
    pub fn from_samples(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = compensated_sum(values.iter().copied()) / n;
        let var = if values.len() > 1 {
            compensated_sum(values.iter().map(|v| (v - mean) * (v - mean))) / (n - 1.0)
        } else {
            0.0
        };
        MeanEstimate {
            mean,
            std_error: (var / n).sqrt(),
        }
    }

    pub fn ci(&self) -> (f64, f64) {
        (
            self.mean - Z95 * self.std_error,
            self.mean + Z95 * self.std_error,
        )
    }

    pub fn variance(&self, samples: usize) -> f64 {
        self.std_error * self.std_error * samples as f64
    }
}

/// Mean of `ξ_n` and `Var(ξ_n)/n` at each checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub checkpoint: u64,
    pub site: MeanEstimate,
    pub variance_per_step: f64,
}

pub fn moments_from(sim: &Simulation) -> Vec<MomentRow> {
    sim.checkpoints
        .iter()
        .enumerate()
        .map(|(c, &checkpoint)| {
            let sites: Vec<f64> = sim.at(c).map(|s| s.site as f64).collect();
            let est = MeanEstimate::from_samples(&sites);
            MomentRow {
                checkpoint,
                site: est,
                variance_per_step: est.variance(sites.len()) / checkpoint as f64,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrownianRow {
    pub delta: f64,
    /// `ℙ̂(max_{j≤n} ξ_j − ξ_n ≤ δ√n)`
    pub empirical: f64,
    /// `ℙ(|N(0, σ̂²)| ≤ δ)`
    pub gaussian: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrownianReport {
    pub n: u64,
    pub sigma: f64,
    pub rows: Vec<BrownianRow>,
}

/// Law of `max − ξ_n` at the last checkpoint against the reflected
/// Gaussian with the empirical variance.
pub fn brownian_from(sim: &Simulation, deltas: &[f64]) -> Result<BrownianReport> {
    if deltas.iter().any(|d| !(*d >= 0.0)) {
        return Err(Error::Domain("deltas must be nonnegative".into()));
    }
    let c = sim.checkpoints.len() - 1;
    let n = sim.checkpoints[c];
    let moments = moments_from(sim);
    let sigma = moments[c].variance_per_step.sqrt();
    let scale = (n as f64).sqrt();
    let m = sim.paths.len() as f64;
    let rows = deltas
        .iter()
        .map(|&delta| {
            let hits = sim
                .at(c)
                .filter(|s| s.drawdown() as f64 <= delta * scale)
                .count() as f64;
            let empirical = hits / m;
            let gaussian = if sigma > 0.0 {
                erf(delta / (sigma * std::f64::consts::SQRT_2))
            } else {
                1.0
            };
            BrownianRow {
                delta,
                empirical,
                gaussian,
                gap: (empirical - gaussian).abs(),
            }
        })
        .collect();
    Ok(BrownianReport { n, sigma, rows })
}

pub fn brownian_functional_check(
    env: &Environment,
    x: f64,
    cfg: &SimConfig,
    deltas: &[f64],
) -> Result<BrownianReport> {
    brownian_from(&simulate(env, x, cfg)?, deltas)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixingEstimate {
    pub x: f64,
    pub checkpoint: u64,
    pub harmonic: Harmonic,
    pub estimate: MeanEstimate,
}

/// Monte Carlo estimates of `𝔼 φ(x + ξ_n α)`.
pub fn empirical_mixing(
    env: &Environment,
    xs: &[f64],
    cfg: &SimConfig,
    harmonics: &[Harmonic],
) -> Result<Vec<MixingEstimate>> {
    let alpha = env.alpha();
    let mut out = Vec::new();
    for &x in xs {
        let sim = simulate(env, x, cfg)?;
        for (c, &checkpoint) in sim.checkpoints.iter().enumerate() {
            for &h in harmonics {
                let values: Vec<f64> = sim
                    .at(c)
                    .map(|s| h.eval(x + s.site as f64 * alpha))
                    .collect();
                out.push(MixingEstimate {
                    x,
                    checkpoint,
                    harmonic: h,
                    estimate: MeanEstimate::from_samples(&values),
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::TrigPolynomial;
    use crate::rotation::Frequency;

    fn flat() -> Environment {
        Environment::new(TrigPolynomial::zero(), Frequency::golden())
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::new(1, 0, 10, vec![10]).is_err());
        assert!(SimConfig::new(1, 5, 10, vec![]).is_err());
        assert!(SimConfig::new(1, 5, 10, vec![5, 5]).is_err());
        assert!(SimConfig::new(1, 5, 10, vec![11]).is_err());
        assert_eq!(
            SimConfig::geometric(1, 5, 1000).unwrap().checkpoints,
            vec![125, 250, 500, 1000]
        );
        assert_eq!(
            SimConfig::geometric(1, 5, 2).unwrap().checkpoints,
            vec![1, 2]
        );
    }

    #[test]
    fn one_step_law() {
        let env = Environment::reference();
        let x = 0.1;
        let m = 100_000;
        let sim = simulate(&env, x, &SimConfig::new(7, m, 1, vec![1]).unwrap()).unwrap();
        let ups = sim.at(0).filter(|s| s.site == 1).count() as f64;
        assert!(sim.at(0).all(|s| s.site.abs() == 1));
        let p = env.eval_p(x);
        let sd = (p * (1.0 - p) / m as f64).sqrt();
        assert!((ups / m as f64 - p).abs() < 4.0 * sd);
    }

    #[test]
    fn reproducible() {
        let cfg = SimConfig::geometric(42, 500, 400).unwrap();
        let env = Environment::reference();
        let a = simulate(&env, 0.2, &cfg).unwrap();
        let b = simulate(&env, 0.2, &cfg).unwrap();
        assert_eq!(a, b);
        let other = simulate(&env, 0.2, &SimConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn summaries_consistent() {
        let sim = simulate(
            &Environment::reference(),
            0.0,
            &SimConfig::geometric(3, 200, 800).unwrap(),
        )
        .unwrap();
        for path in &sim.paths {
            for s in path {
                assert!(s.min <= s.site && s.site <= s.max && s.min <= 0 && s.max >= 0);
            }
            for w in path.windows(2) {
                assert!(w[1].max >= w[0].max && w[1].min <= w[0].min);
            }
        }
    }

    #[test]
    fn flat_moments() {
        let cfg = SimConfig::new(11, 20_000, 2_000, vec![2_000]).unwrap();
        let m = &moments_from(&simulate(&flat(), 0.0, &cfg).unwrap())[0];
        assert!(m.site.mean.abs() < 4.0 * m.site.std_error);
        assert!((m.variance_per_step - 1.0).abs() < 0.05);
    }

    #[test]
    fn wilson_interval() {
        let p = Proportion::wilson(0, 100);
        assert_eq!(p.lo, 0.0);
        assert!(p.hi > 0.0 && p.hi < 0.05);
        let p = Proportion::wilson(50, 100);
        assert!((p.lo + p.hi - 1.0).abs() < 1e-12);
        assert!(p.contains(0.5));
        // quadrupling the sample halves the width
        let a = Proportion::wilson(300, 1_000);
        let b = Proportion::wilson(1_200, 4_000);
        let ratio = (a.hi - a.lo) / (b.hi - b.lo);
        assert!((ratio - 2.0).abs() < 0.02);
    }

    #[test]
    fn brownian_boundary_cases() {
        let cfg = SimConfig::new(5, 5_000, 400, vec![400]).unwrap();
        let sim = simulate(&flat(), 0.0, &cfg).unwrap();
        let rep = brownian_from(&sim, &[0.0, 100.0]).unwrap();
        let cond = condition16_from(&sim);
        assert_eq!(rep.rows[0].empirical, cond[0].p_max.estimate);
        assert_eq!(rep.rows[0].gaussian, 0.0);
        assert_eq!(rep.rows[1].empirical, 1.0);
        assert!((rep.rows[1].gaussian - 1.0).abs() < 1e-12);
        assert!(brownian_from(&sim, &[-1.0]).is_err());
    }

    #[test]
    fn mixing_estimates_shrink_with_more_paths() {
        let env = Environment::reference();
        let hs = [Harmonic::cos(1)];
        let small = empirical_mixing(
            &env,
            &[0.0],
            &SimConfig::new(9, 1_000, 50, vec![50]).unwrap(),
            &hs,
        )
        .unwrap();
        let large = empirical_mixing(
            &env,
            &[0.0],
            &SimConfig::new(9, 4_000, 50, vec![50]).unwrap(),
            &hs,
        )
        .unwrap();
        let ratio = small[0].estimate.std_error / large[0].estimate.std_error;
        assert!((ratio - 2.0).abs() < 0.2, "{ratio}");
    }
}
