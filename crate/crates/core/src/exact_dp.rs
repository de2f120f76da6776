//! Exact evolution of the law of the walk on ℤ.
//!
//! Distributions live on a dense interval of sites that grows by one site
//! per step on each side. Entries that drop below `f64::MIN_POSITIVE` at the
//! edges are moved to a `trimmed` ledger, so `Σ masses + absorbed + trimmed`
//! stays 1 at every step.
//!
//! Two chains are evolved: the walk `ξ` itself and the lazy chain `ζ`
//! ("squared" walk). By default `ζ_n = ξ_{2n}/2`, with kernel
//!
//! ```text
//! up   = p_{2s} p_{2s+1}
//! stay = p_{2s} q_{2s+1} + q_{2s} p_{2s−1}
//! down = q_{2s} q_{2s−1}
//! ```
//!
//! where `p_k = p(x + kα)`. [`SquaredKernel::Frozen`] instead uses
//! `p², 2pq, q²` evaluated at `x + sα`.

use rayon::prelude::*;

use crate::environment::{Environment, Orbit};
use crate::error::{Error, Result};
use crate::measure::{compensated_sum, Atom, AtomicCircleMeasure, Harmonic};
use crate::occupation::{stationary_estimate, visit_counts};

/// Largest number of steps any evolution may take.
pub const DEFAULT_HORIZON: u64 = 1_000_000;

/// Below this a return probability counts as vanished.
pub const VANISHING: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SquaredKernel {
    /// Two steps of the walk, observed at even times.
    #[default]
    TwoStep,
    /// `p², 2pq, q²` frozen at the current site.
    Frozen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Chain {
    Walk,
    Squared(SquaredKernel),
}

impl Chain {
    /// Position on the walk's lattice of a site of this chain, used to place
    /// it on the circle.
    pub fn walk_site(self, site: i64) -> i64 {
        match self {
            Chain::Squared(SquaredKernel::TwoStep) => 2 * site,
            _ => site,
        }
    }
}

/// Law of `ξ_n` or `ζ_n` started at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeDistribution {
    chain: Chain,
    lo: i64,
    masses: Vec<f64>,
    time: u64,
    absorbed: f64,
    trimmed: f64,
    taboo: Option<i64>,
}

impl LatticeDistribution {
    /// Unit mass at 0, time 0.
    pub fn origin(chain: Chain) -> Self {
        LatticeDistribution {
            chain,
            lo: 0,
            masses: vec![1.0],
            time: 0,
            absorbed: 0.0,
            trimmed: 0.0,
            taboo: None,
        }
    }

    /// Absorbs mass that enters `site` at any later step.
    pub fn with_taboo(mut self, site: i64) -> Self {
        self.taboo = Some(site);
        self
    }

    pub fn chain(&self) -> Chain {
        self.chain
    }

    pub fn time(&self) -> u64 {
        self.time
    }

    pub fn taboo(&self) -> Option<i64> {
        self.taboo
    }

    pub fn absorbed(&self) -> f64 {
        self.absorbed
    }

    pub fn trimmed(&self) -> f64 {
        self.trimmed
    }

    /// Smallest and largest site with stored mass.
    pub fn support(&self) -> (i64, i64) {
        (self.lo, self.lo + self.masses.len() as i64 - 1)
    }

    pub fn mass(&self, site: i64) -> f64 {
        let i = site - self.lo;
        if i < 0 || i >= self.masses.len() as i64 {
            0.0
        } else {
            self.masses[i as usize]
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.masses
            .iter()
            .enumerate()
            .map(move |(i, &m)| (self.lo + i as i64, m))
    }

    /// Mass still on the lattice.
    pub fn lattice_mass(&self) -> f64 {
        compensated_sum(self.masses.iter().copied())
    }

    /// Lattice mass plus the absorbed and trimmed ledgers.
    pub fn total_mass(&self) -> f64 {
        compensated_sum(
            self.masses
                .iter()
                .copied()
                .chain([self.absorbed, self.trimmed]),
        )
    }

    /// For the walk: no mass on sites of the wrong parity.
    pub fn parity_ok(&self) -> bool {
        match self.chain {
            Chain::Walk => self
                .iter()
                .all(|(k, m)| m == 0.0 || (k - self.time as i64).rem_euclid(2) == 0),
            Chain::Squared(_) => true,
        }
    }

    /// Expectation of `g(site)` under the lattice masses.
    pub fn expect(&self, g: impl Fn(i64) -> f64) -> f64 {
        compensated_sum(self.iter().map(|(k, m)| m * g(k)))
    }
}

/// Transition probabilities `(down, stay, up)` along a window of sites.
struct KernelTable {
    lo: i64,
    rows: Vec<[f64; 3]>,
}

impl KernelTable {
    fn new(env: &Environment, x: f64, chain: Chain, lo: i64, hi: i64) -> Self {
        let rows = match chain {
            Chain::Walk => {
                let orbit = Orbit::new(env, x, lo, hi);
                (lo..=hi).map(|k| [orbit.q(k), 0.0, orbit.p(k)]).collect()
            }
            Chain::Squared(SquaredKernel::TwoStep) => {
                let orbit = Orbit::new(env, x, 2 * lo - 1, 2 * hi + 1);
                (lo..=hi)
                    .map(|s| {
                        let k = 2 * s;
                        [
                            orbit.q(k) * orbit.q(k - 1),
                            orbit.p(k) * orbit.q(k + 1) + orbit.q(k) * orbit.p(k - 1),
                            orbit.p(k) * orbit.p(k + 1),
                        ]
                    })
                    .collect()
            }
            Chain::Squared(SquaredKernel::Frozen) => {
                let orbit = Orbit::new(env, x, lo, hi);
                (lo..=hi)
                    .map(|s| {
                        let (p, q) = (orbit.p(s), orbit.q(s));
                        [q * q, 2.0 * p * q, p * p]
                    })
                    .collect()
            }
        };
        KernelTable { lo, rows }
    }

    fn covers(&self, lo: i64, hi: i64) -> bool {
        lo >= self.lo && hi < self.lo + self.rows.len() as i64
    }

    #[inline]
    fn row(&self, site: i64) -> [f64; 3] {
        self.rows[(site - self.lo) as usize]
    }
}

/// Advances by one step; returns the mass newly absorbed at the taboo site.
fn advance(dist: &mut LatticeDistribution, kernel: &KernelTable, scratch: &mut Vec<f64>) -> f64 {
    let len = dist.masses.len();
    scratch.clear();
    scratch.resize(len + 2, 0.0);
    for (i, &m) in dist.masses.iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        let [down, stay, up] = kernel.row(dist.lo + i as i64);
        scratch[i] += m * down;
        scratch[i + 1] += m * stay;
        scratch[i + 2] += m * up;
    }
    let new_lo = dist.lo - 1;
    let mut caught = 0.0;
    if let Some(t) = dist.taboo {
        let i = t - new_lo;
        if i >= 0 && (i as usize) < scratch.len() {
            caught = scratch[i as usize];
            scratch[i as usize] = 0.0;
        }
    }
    let first = scratch.iter().position(|&m| m >= f64::MIN_POSITIVE);
    let (start, end) = match first {
        Some(s) => (
            s,
            scratch
                .iter()
                .rposition(|&m| m >= f64::MIN_POSITIVE)
                .unwrap()
                + 1,
        ),
        // everything absorbed or negligible: keep one empty site
        None => (0, 1),
    };
    let dropped = compensated_sum(scratch[..start].iter().chain(&scratch[end..]).copied());
    dist.trimmed += dropped;
    dist.absorbed += caught;
    dist.masses.clear();
    dist.masses.extend_from_slice(&scratch[start..end]);
    dist.lo = new_lo + start as i64;
    dist.time += 1;
    caught
}

fn check_horizon(n: u64) -> Result<()> {
    if n > DEFAULT_HORIZON {
        return Err(Error::HorizonExceeded {
            requested: n,
            horizon: DEFAULT_HORIZON,
        });
    }
    Ok(())
}

/// Evolves `start` by `n` steps, calling `observe(dist, newly_absorbed)`
/// after each one.
fn evolve_from(
    env: &Environment,
    x: f64,
    mut dist: LatticeDistribution,
    n: u64,
    mut observe: impl FnMut(&LatticeDistribution, f64),
) -> Result<LatticeDistribution> {
    check_horizon(dist.time + n)?;
    if n == 0 {
        return Ok(dist);
    }
    let (lo, hi) = dist.support();
    let reach = n as i64;
    let kernel = KernelTable::new(env, x, dist.chain, lo - reach, hi + reach);
    let mut scratch = Vec::with_capacity(dist.masses.len() + 2 * n as usize + 2);
    for _ in 0..n {
        let caught = advance(&mut dist, &kernel, &mut scratch);
        observe(&dist, caught);
    }
    Ok(dist)
}

fn evolve(
    env: &Environment,
    x: f64,
    chain: Chain,
    n: u64,
    taboo: Option<i64>,
    observe: impl FnMut(&LatticeDistribution, f64),
) -> Result<LatticeDistribution> {
    let mut start = LatticeDistribution::origin(chain);
    start.taboo = taboo;
    evolve_from(env, x, start, n, observe)
}

fn single_step(dist: &LatticeDistribution, env: &Environment, x: f64) -> LatticeDistribution {
    let (lo, hi) = dist.support();
    let kernel = KernelTable::new(env, x, dist.chain, lo, hi);
    debug_assert!(kernel.covers(lo, hi));
    let mut out = dist.clone();
    let mut scratch = Vec::new();
    advance(&mut out, &kernel, &mut scratch);
    out
}

/// One step of the walk: mass at `k` moves to `k+1` with probability
/// `p(x+kα)` and to `k−1` otherwise.
pub fn step(dist: &LatticeDistribution, env: &Environment, x: f64) -> Result<LatticeDistribution> {
    if dist.chain != Chain::Walk {
        return Err(Error::Domain("step expects a walk distribution".into()));
    }
    Ok(single_step(dist, env, x))
}

/// One step of the lazy chain.
pub fn squared_step(
    dist: &LatticeDistribution,
    env: &Environment,
    x: f64,
) -> Result<LatticeDistribution> {
    if dist.chain == Chain::Walk {
        return Err(Error::Domain(
            "squared_step expects a squared-chain distribution".into(),
        ));
    }
    Ok(single_step(dist, env, x))
}

/// Probability of staying put for the lazy chain at site `s`.
pub fn stay_probability(env: &Environment, x: f64, kernel: SquaredKernel, s: i64) -> f64 {
    KernelTable::new(env, x, Chain::Squared(kernel), s, s).row(s)[1]
}

/// Law of `ξ_n` from 0; mass entering `taboo` after time 0 is absorbed.
pub fn distribution_at(
    env: &Environment,
    x: f64,
    n: u64,
    taboo: Option<i64>,
) -> Result<LatticeDistribution> {
    evolve(env, x, Chain::Walk, n, taboo, |_, _| {})
}

/// Law of `ζ_n` from 0.
pub fn squared_distribution_at(
    env: &Environment,
    x: f64,
    n: u64,
    taboo: Option<i64>,
    kernel: SquaredKernel,
) -> Result<LatticeDistribution> {
    evolve(env, x, Chain::Squared(kernel), n, taboo, |_, _| {})
}

/// `terms[k-1] = f_k(a)`: probability of being at `a` at time `k` without
/// visiting 0 at times `1..=k`. For `a = 0` the terms are first-return
/// probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct TabooSeries {
    pub target: i64,
    pub terms: Vec<f64>,
}

impl TabooSeries {
    pub fn partial_sum(&self, k: usize) -> f64 {
        compensated_sum(self.terms[..k.min(self.terms.len())].iter().copied())
    }

    pub fn sum(&self) -> f64 {
        self.partial_sum(self.terms.len())
    }
}

/// Taboo-at-0 series for several targets from one evolution.
pub fn taboo_series_many(
    env: &Environment,
    x: f64,
    chain: Chain,
    targets: &[i64],
    horizon: u64,
) -> Result<Vec<TabooSeries>> {
    let mut series: Vec<TabooSeries> = targets
        .iter()
        .map(|&target| TabooSeries {
            target,
            terms: Vec::with_capacity(horizon as usize),
        })
        .collect();
    evolve(env, x, chain, horizon, Some(0), |d, caught| {
        for s in series.iter_mut() {
            s.terms.push(if s.target == 0 {
                caught
            } else {
                d.mass(s.target)
            });
        }
    })?;
    Ok(series)
}

pub fn taboo_series(
    env: &Environment,
    x: f64,
    chain: Chain,
    target: i64,
    horizon: u64,
) -> Result<TabooSeries> {
    Ok(taboo_series_many(env, x, chain, &[target], horizon)?.remove(0))
}

/// `Σ_{k ≤ K} f_k(a)`: expected visits to `a` before returning to 0,
/// truncated at `K` steps.
pub fn mu_via_dp(env: &Environment, x: f64, a: i64, horizon: u64) -> Result<f64> {
    if a == 0 {
        return Err(Error::Domain("site must be nonzero".into()));
    }
    if a.unsigned_abs() > horizon {
        return Err(Error::Domain(format!(
            "site {a} unreachable in {horizon} steps"
        )));
    }
    Ok(taboo_series(env, x, Chain::Walk, a, horizon)?.sum())
}

/// [`mu_via_dp`] for every nonzero site in `[−window, window]`.
pub fn mu_profile_via_dp(
    env: &Environment,
    x: f64,
    window: u64,
    horizon: u64,
) -> Result<Vec<(i64, f64)>> {
    let w = window as i64;
    let sites: Vec<i64> = (-w..=w).filter(|&a| a != 0).collect();
    Ok(taboo_series_many(env, x, Chain::Walk, &sites, horizon)?
        .into_iter()
        .map(|s| (s.target, s.sum()))
        .collect())
}

/// Probability that the walk started at `k` hits `a` before `b`, by evolving
/// the law on `a..=b` with both ends absorbing until less than `tol` mass
/// remains inside.
pub fn exit_probability_via_dp(
    env: &Environment,
    x: f64,
    a: i64,
    k: i64,
    b: i64,
    tol: f64,
) -> Result<f64> {
    if !(a < k && k < b) {
        return Err(Error::Domain(format!("need a < k < b, got {a}, {k}, {b}")));
    }
    if !(tol > 0.0) {
        return Err(Error::Domain("tolerance must be positive".into()));
    }
    let width = (b - a) as usize;
    let p: Vec<f64> = (a..=b).map(|s| env.eval_p(env.orbit_point(x, s))).collect();
    let mut mass = vec![0.0; width + 1];
    let mut next = mass.clone();
    mass[(k - a) as usize] = 1.0;
    let (mut at_a, mut at_b) = (0.0, 0.0);
    for _ in 0..DEFAULT_HORIZON {
        next.iter_mut().for_each(|v| *v = 0.0);
        for i in 1..width {
            let m = mass[i];
            next[i + 1] += m * p[i];
            next[i - 1] += m * (1.0 - p[i]);
        }
        at_a += next[0];
        at_b += next[width];
        next[0] = 0.0;
        next[width] = 0.0;
        std::mem::swap(&mut mass, &mut next);
        if mass.iter().sum::<f64>() < tol {
            return Ok(at_a / (at_a + at_b));
        }
    }
    Err(Error::HorizonExceeded {
        requested: DEFAULT_HORIZON + 1,
        horizon: DEFAULT_HORIZON,
    })
}

/// Probabilities `ℙ(≥ j visits to a before returning to 0)`, `j = 1..=j_max`,
/// for the walk started at 0.
///
/// Solved on the sites strictly between 0 and `a + sign(a)`; the outer site
/// is sent straight back to `a`, which is exact when excursions beyond `a`
/// return almost surely (symmetric environments).
pub fn visit_tail_probabilities(
    env: &Environment,
    x: f64,
    a: i64,
    j_max: usize,
) -> Result<Vec<f64>> {
    if a == 0 || j_max == 0 {
        return Err(Error::Domain("need a ≠ 0 and j_max ≥ 1".into()));
    }
    let sign = a.signum();
    let depth = a.unsigned_abs() as usize;
    let width = depth + 1;
    let orbit = Orbit::new(env, x, -(width as i64), width as i64);
    // outward probability at distance i from 0
    let out = |i: usize| {
        let k = sign * i as i64;
        if sign > 0 {
            orbit.p(k)
        } else {
            orbit.q(k)
        }
    };
    // state[c][i - 1]: mass at distance i having made c visits to a
    let mut state = vec![vec![0.0f64; width]; j_max];
    let mut reached = vec![0.0f64; j_max + 1];
    let first = out(0);
    if depth == 1 {
        reached[1] += first;
        if j_max > 1 {
            state[1][0] = first;
        }
    } else {
        state[0][0] = first;
    }
    let mut next = state.clone();
    let cap = 50_000_000 / (width * j_max).max(1);
    for _ in 0..cap {
        for row in next.iter_mut() {
            row.iter_mut().for_each(|m| *m = 0.0);
        }
        let mut live = 0.0;
        for c in 0..j_max {
            for i in 1..=width {
                let m = state[c][i - 1];
                if m == 0.0 {
                    continue;
                }
                let moves = if i == width {
                    [(i - 1, m), (0, 0.0)]
                } else {
                    let o = out(i);
                    [(i + 1, m * o), (i - 1, m * (1.0 - o))]
                };
                for (dest, w) in moves {
                    if w == 0.0 || dest == 0 {
                        continue;
                    }
                    let c2 = if dest == depth { c + 1 } else { c };
                    if c2 > c {
                        reached[c2] += w;
                    }
                    if c2 < j_max {
                        next[c2][dest - 1] += w;
                        live += w;
                    }
                }
            }
        }
        std::mem::swap(&mut state, &mut next);
        if live < 1e-17 {
            return Ok(reached[1..].to_vec());
        }
    }
    Err(Error::Domain("visit counts did not converge".into()))
}

/// `ℙ_x(ζ_n = 0)` for `n = 0..`, and the ratios of consecutive terms.
#[derive(Debug, Clone, PartialEq)]
pub struct KingmanOrey {
    pub return_probabilities: Vec<f64>,
    /// `ratios[n] = ℙ(ζ_{n+1}=0) / ℙ(ζ_n=0)`
    pub ratios: Vec<f64>,
    /// Stopped early because a return probability vanished.
    pub truncated: bool,
}

fn return_probabilities(
    env: &Environment,
    x: f64,
    kernel: SquaredKernel,
    n_max: u64,
) -> Result<(Vec<f64>, bool)> {
    let mut probs = Vec::with_capacity(n_max as usize + 1);
    probs.push(1.0);
    evolve(env, x, Chain::Squared(kernel), n_max, None, |d, _| {
        probs.push(d.mass(0))
    })?;
    match probs.iter().position(|&p| p < VANISHING) {
        Some(cut) => {
            probs.truncate(cut);
            Ok((probs, true))
        }
        None => Ok((probs, false)),
    }
}

/// Ratio series up to `ratios[n_max]`.
pub fn kingman_orey_ratio(
    env: &Environment,
    x: f64,
    n_max: u64,
    kernel: SquaredKernel,
) -> Result<KingmanOrey> {
    let (probs, truncated) = return_probabilities(env, x, kernel, n_max + 1)?;
    let ratios = probs.windows(2).map(|w| w[1] / w[0]).collect();
    Ok(KingmanOrey {
        return_probabilities: probs,
        ratios,
        truncated,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubexponentialReport {
    /// `u[n] = −log ℙ_x(ζ_n = 0)`
    pub u: Vec<f64>,
    /// `u_n/n` at the last available `n`.
    pub last: f64,
    /// `(u_n/n) / (u_{n/4}/(n/4))`
    pub quarter_ratio: f64,
    /// Largest `u_{n+m} − u_n − u_m` over the spot checks.
    pub subadditivity_excess: f64,
    pub truncated: bool,
}

pub fn subexponential_check(
    env: &Environment,
    x: f64,
    n_max: u64,
    kernel: SquaredKernel,
) -> Result<SubexponentialReport> {
    if n_max < 4 {
        return Err(Error::Domain("n_max must be at least 4".into()));
    }
    let (probs, truncated) = return_probabilities(env, x, kernel, n_max)?;
    let u: Vec<f64> = probs.iter().map(|p| -p.ln()).collect();
    let n = u.len() - 1;
    if n < 4 {
        return Err(Error::Domain(
            "return probabilities vanished too early".into(),
        ));
    }
    let rate = |k: usize| u[k] / k as f64;
    let stride = (n / 64).max(1);
    let mut excess = f64::NEG_INFINITY;
    for a in (1..=n).step_by(stride) {
        for b in (1..=n - a).step_by(stride) {
            excess = excess.max(u[a + b] - u[a] - u[b]);
        }
    }
    Ok(SubexponentialReport {
        last: rate(n),
        quarter_ratio: rate(n) / rate(n / 4),
        subadditivity_excess: excess,
        u,
        truncated,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenewalRow {
    pub site: i64,
    pub n: u64,
    /// `ℙ(ζ_n = a)`
    pub direct: f64,
    /// `Σ_{k=1}^n ℙ(ζ_{n−k} = 0) f_k(a)`
    pub convolution: f64,
    pub residual: f64,
}

/// Renewal decomposition at the last visit to 0, for every `n ≤ n_max`.
pub fn renewal_residuals(
    env: &Environment,
    x: f64,
    sites: &[i64],
    n_max: u64,
    kernel: SquaredKernel,
) -> Result<Vec<RenewalRow>> {
    let chain = Chain::Squared(kernel);
    let mut at: Vec<Vec<f64>> = vec![Vec::with_capacity(n_max as usize + 1); sites.len()];
    let mut zero = vec![1.0];
    for (a, col) in sites.iter().zip(at.iter_mut()) {
        col.push(if *a == 0 { 1.0 } else { 0.0 });
    }
    evolve(env, x, chain, n_max, None, |d, _| {
        zero.push(d.mass(0));
        for (a, col) in sites.iter().zip(at.iter_mut()) {
            col.push(d.mass(*a));
        }
    })?;
    let taboo = taboo_series_many(env, x, chain, sites, n_max)?;
    let mut rows = Vec::with_capacity(sites.len() * n_max as usize);
    for ((&site, col), series) in sites.iter().zip(&at).zip(&taboo) {
        for n in 1..=n_max as usize {
            let convolution = compensated_sum((1..=n).map(|k| zero[n - k] * series.terms[k - 1]));
            rows.push(RenewalRow {
                site,
                n: n as u64,
                direct: col[n],
                convolution,
                residual: (col[n] - convolution).abs(),
            });
        }
    }
    Ok(rows)
}

/// `|ℙ(ζ_n = a) − Σ_{k=1}^n ℙ(ζ_{n−k} = 0) f_k(a)|`
pub fn renewal_identity_check(
    env: &Environment,
    x: f64,
    a: i64,
    n: u64,
    kernel: SquaredKernel,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::Domain("n must be positive".into()));
    }
    Ok(renewal_residuals(env, x, &[a], n, kernel)?
        .last()
        .unwrap()
        .residual)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SrlpReport {
    pub n: u64,
    /// Sites of the parity of `n` in `[−window, window]`.
    pub sites: Vec<i64>,
    /// `deviations[i][j] = |ℙ(ξ_n=a_i)/ℙ(ξ_n=a_j) − μ_{a_i}/μ_{a_j}|`
    pub deviations: Vec<Vec<f64>>,
    pub max_deviation: f64,
}

impl SrlpReport {
    pub fn median_deviation(&self) -> f64 {
        let mut all: Vec<f64> = self
            .deviations
            .iter()
            .enumerate()
            .flat_map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .filter(move |(j, _)| *j != i)
                    .map(|(_, &d)| d)
            })
            .collect();
        if all.is_empty() {
            return 0.0;
        }
        all.sort_by(f64::total_cmp);
        all[all.len() / 2]
    }
}

/// Compares ratios of the time-`n` law with ratios of visit counts.
pub fn srlp_check(env: &Environment, x: f64, n: u64, window: u64) -> Result<SrlpReport> {
    if window == 0 || n < window {
        return Err(Error::Domain("need 1 ≤ window ≤ n".into()));
    }
    let dist = distribution_at(env, x, n, None)?;
    let mu = visit_counts(env, x, window as usize)?;
    let w = window as i64;
    let sites: Vec<i64> = (-w..=w)
        .filter(|k| (k - n as i64).rem_euclid(2) == 0)
        .collect();
    let mut max_deviation = 0.0f64;
    let mut deviations = Vec::with_capacity(sites.len());
    for &a in &sites {
        let mut row = Vec::with_capacity(sites.len());
        for &b in &sites {
            let d = if a == b {
                0.0
            } else {
                (dist.mass(a) / dist.mass(b) - mu.mu(a)? / mu.mu(b)?).abs()
            };
            max_deviation = max_deviation.max(d);
            row.push(d);
        }
        deviations.push(row);
    }
    Ok(SrlpReport {
        n,
        sites,
        deviations,
        max_deviation,
    })
}

/// Places the mass of each site on the circle: the walk's site `k` goes to
/// `x + kα`.
pub fn circle_projection(
    dist: &LatticeDistribution,
    x: f64,
    alpha: f64,
) -> Result<AtomicCircleMeasure> {
    if dist.absorbed > 0.0 {
        return Err(Error::AbsorbedMass(dist.absorbed));
    }
    let chain = dist.chain;
    let atoms = dist.iter().filter(|&(_, m)| m > 0.0).map(|(k, m)| Atom {
        position: x + chain.walk_site(k) as f64 * alpha,
        weight: m,
    });
    Ok(AtomicCircleMeasure::from_atoms(atoms, false)?.with_normalized_flag())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixingRow {
    pub harmonic: Harmonic,
    /// `𝔼 φ(X_n)` from `x1`
    pub first: f64,
    /// `𝔼 φ(X_n)` from `x2`
    pub second: f64,
    /// `∫ φ` against the stationary estimate
    pub stationary: f64,
    pub gap: f64,
    pub first_to_stationary: f64,
    pub second_to_stationary: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixingReport {
    pub n: u64,
    pub x1: f64,
    pub x2: f64,
    /// Close return time used for the stationary estimate.
    pub q: u64,
    pub rows: Vec<MixingRow>,
}

impl MixingReport {
    pub fn max_gap(&self) -> f64 {
        self.rows.iter().map(|r| r.gap).fold(0.0, f64::max)
    }
}

/// Largest close return time at most `max(√n, 2)`, or the first one above
/// 1 if there is none.
pub fn stationary_horizon(env: &Environment, n: u64) -> Result<u64> {
    let freq = env.frequency();
    let cap = ((n as f64).sqrt() as u64).max(2);
    let times = freq.close_return_times(cap)?;
    match times.last() {
        Some(&q) if q > 1 => Ok(q),
        _ => Ok(freq
            .convergents_past(1)?
            .iter()
            .map(|c| c.q)
            .find(|&q| q > 1)
            .unwrap_or(2)),
    }
}

/// `𝔼 φ(x + ξ_n α)` for both starting points, computed exactly.
pub fn mixing_distance(
    env: &Environment,
    x1: f64,
    x2: f64,
    n: u64,
    harmonics: &[Harmonic],
) -> Result<MixingReport> {
    let alpha = env.alpha();
    let expectations = |x: f64| -> Result<Vec<f64>> {
        let dist = distribution_at(env, x, n, None)?;
        Ok(harmonics
            .iter()
            .map(|h| dist.expect(|k| h.eval(x + k as f64 * alpha)))
            .collect())
    };
    let (e1, e2) = if x1 == x2 {
        let e = expectations(x1)?;
        (e.clone(), e)
    } else {
        let (a, b) = rayon::join(|| expectations(x1), || expectations(x2));
        (a?, b?)
    };
    let q = stationary_horizon(env, n)?;
    let stationary = stationary_estimate(env, x1, q)?.measure;
    let rows = harmonics
        .iter()
        .zip(e1.iter().zip(&e2))
        .map(|(&h, (&first, &second))| {
            let s = stationary.integrate(|y| h.eval(y));
            MixingRow {
                harmonic: h,
                first,
                second,
                stationary: s,
                gap: (first - second).abs(),
                first_to_stationary: (first - s).abs(),
                second_to_stationary: (second - s).abs(),
            }
        })
        .collect();
    Ok(MixingReport { n, x1, x2, q, rows })
}

/// [`mixing_distance`] for several times, in parallel.
pub fn mixing_series(
    env: &Environment,
    x1: f64,
    x2: f64,
    times: &[u64],
    harmonics: &[Harmonic],
) -> Result<Vec<MixingReport>> {
    times
        .par_iter()
        .map(|&n| mixing_distance(env, x1, x2, n, harmonics))
        .collect()
}
