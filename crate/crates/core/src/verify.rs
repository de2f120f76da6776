//! Invariant suite at pinned desk-scale parameters.
//!
//! Each check reports the measured quantity next to its threshold. The
//! suite is what `qpwalk verify` runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::environment::{
    denjoy_koksma_certificate, total_variation, uniform_grid, Environment, TrigPolynomial,
};
use crate::error::Result;
use crate::exact_dp::{
    distribution_at, mu_profile_via_dp, renewal_residuals, squared_distribution_at, squared_step,
    srlp_check, step, visit_tail_probabilities, Chain, LatticeDistribution, SquaredKernel,
};
use crate::martingale::{build_martingale, exit_probability};
use crate::measure::Harmonic;
use crate::monte_carlo::{condition16_from, empirical_mixing, simulate, SimConfig};
use crate::occupation::{
    geometric_parameter, invariant_density_residual, pushforward, stationary_estimate,
    test_integral, visit_counts,
};
use crate::rotation::{convergents, Frequency};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub module: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

fn below(
    module: &'static str,
    name: &'static str,
    value: f64,
    threshold: f64,
    detail: String,
) -> Check {
    Check {
        module,
        name,
        passed: value < threshold,
        value,
        threshold,
        detail,
    }
}

fn holds(module: &'static str, name: &'static str, ok: bool, detail: String) -> Check {
    Check {
        module,
        name,
        passed: ok,
        value: if ok { 1.0 } else { 0.0 },
        threshold: 1.0,
        detail,
    }
}

fn failed(module: &'static str, name: &'static str, err: crate::error::Error) -> Check {
    holds(module, name, false, format!("error: {err}"))
}

fn guard(module: &'static str, name: &'static str, f: impl FnOnce() -> Result<Check>) -> Check {
    f().unwrap_or_else(|e| failed(module, name, e))
}

/// Best approximations of the second kind by exhaustive scan.
fn best_approximations(alpha: f64, q_max: u64) -> Vec<u64> {
    let mut best = f64::INFINITY;
    let mut out = Vec::new();
    for q in 1..=q_max {
        let t = q as f64 * alpha;
        let d = (t - t.round()).abs();
        if d < best {
            best = d;
            out.push(q);
        }
    }
    out
}

fn rotation_checks(out: &mut Vec<Check>) {
    let freqs = [
        ("golden", Frequency::golden()),
        ("silver", Frequency::silver()),
        ("liouville-demo", Frequency::liouville_demo()),
    ];
    out.push(guard("rotation", "err below 1/q", || {
        let mut worst = 0.0f64;
        for (_, f) in &freqs {
            for c in f.convergents_past(100_000)? {
                worst = worst.max(c.err * c.q as f64);
            }
        }
        Ok(below(
            "rotation",
            "err below 1/q",
            worst,
            1.0,
            "max q·|qα − p|".into(),
        ))
    }));
    out.push(guard("rotation", "errors strictly decrease", || {
        let mut ok = true;
        for (_, f) in &freqs {
            let cs = convergents(&f.partial_quotients(12)?)?;
            ok &= cs
                .windows(2)
                .all(|w| w[1].err < w[0].err && w[1].q > w[0].q);
        }
        Ok(holds(
            "rotation",
            "errors strictly decrease",
            ok,
            "depth 12".into(),
        ))
    }));
    out.push(guard("rotation", "close returns are denominators", || {
        let mut ok = true;
        for (_, f) in &freqs[..2] {
            ok &= f.close_return_times(10_000)? == best_approximations(f.value(), 10_000);
        }
        let (_, lv) = &freqs[2];
        let dens: Vec<u64> = lv
            .convergents_past(1_000_000)?
            .iter()
            .map(|c| c.q)
            .filter(|&q| q <= 1_000_000)
            .collect();
        ok &= lv.close_return_times(1_000_000)? == dens;
        Ok(holds(
            "rotation",
            "close returns are denominators",
            ok,
            "scan to 1e4 for golden and silver".into(),
        ))
    }));
}

fn environment_checks(env: &Environment, out: &mut Vec<Check>) {
    let grid = uniform_grid(4096);
    let (sum_err, logit_err) = grid
        .iter()
        .map(|&x| {
            let p = env.eval_p(x);
            let q = env.eval_q(x);
            ((p + q - 1.0).abs(), ((p / q).ln() - env.eval_f(x)).abs())
        })
        .fold((0.0f64, 0.0f64), |a, b| (a.0.max(b.0), a.1.max(b.1)));
    out.push(below(
        "environment",
        "p + q = 1",
        sum_err,
        1e-15,
        "4096-point grid".into(),
    ));
    out.push(below(
        "environment",
        "log(p/q) = f",
        logit_err,
        1e-12,
        "4096-point grid".into(),
    ));
    out.push(guard("environment", "Denjoy-Koksma", || {
        let grid = uniform_grid(1024);
        let mut worst = 0.0f64;
        let mut violations = 0;
        for q in env.frequency().close_return_times(10_000)? {
            let rep = denjoy_koksma_certificate(env, &grid, q)?;
            worst = worst.max(rep.max_abs_sum / rep.variation.max(f64::MIN_POSITIVE));
            violations += rep.violations.len();
        }
        let mut c = holds(
            "environment",
            "Denjoy-Koksma",
            violations == 0,
            format!("max |S_q f|/var f = {worst:.4} over close returns ≤ 1e4"),
        );
        c.value = violations as f64;
        c.threshold = 0.0;
        Ok(c)
    }));
    let worst = (1..=3)
        .map(|k| {
            let f = TrigPolynomial::cosine(k, 0.7);
            (total_variation(&f) - 4.0 * k as f64 * 0.7).abs()
        })
        .fold(0.0, f64::max);
    out.push(below(
        "environment",
        "variation closed form",
        worst,
        1e-8,
        "0.7·cos 2πkx, k ≤ 3".into(),
    ));
}

fn martingale_checks(env: &Environment, seed: u64, out: &mut Vec<Check>) {
    out.push(guard("martingale", "identity", || {
        let grid = uniform_grid(16);
        let worst = grid
            .par_iter()
            .map(|&x| build_martingale(env, x, 1_000).map(|t| t.identity_residual(env)))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        Ok(below(
            "martingale",
            "identity",
            worst,
            1e-10,
            "16 x, N = 1000".into(),
        ))
    }));
    out.push(guard("martingale", "exit probabilities", || {
        let mut complement = 0.0f64;
        let mut monotone = true;
        for x in uniform_grid(8) {
            let t = build_martingale(env, x, 12)?;
            for a in -10..0 {
                for b in 1..=10 {
                    let mut prev = f64::INFINITY;
                    for k in a + 1..b {
                        let to_a = exit_probability(&t, a, k, b)?;
                        let to_b = (t.value(k)? - t.value(a)?) / (t.value(b)? - t.value(a)?);
                        complement = complement.max((to_a + to_b - 1.0).abs());
                        monotone &= to_a < prev;
                        prev = to_a;
                    }
                }
            }
        }
        let mut c = below(
            "martingale",
            "exit probabilities",
            complement,
            1e-14,
            format!("complement defect; decreasing in k: {monotone}"),
        );
        c.passed &= monotone;
        Ok(c)
    }));
    out.push(guard("martingale", "one-step expectation", || {
        let x = 0.0;
        let t = build_martingale(env, x, 8)?;
        let samples = 20_000;
        let mut worst = 0.0f64;
        for k in -5i64..=5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((k + 100) as u64);
            let p = env.eval_p(env.orbit_point(x, k));
            let (up, down) = (t.value(k + 1)?, t.value(k - 1)?);
            let values: Vec<f64> = (0..samples)
                .map(|_| if rng.gen::<f64>() < p { up } else { down })
                .collect();
            let mean = values.iter().sum::<f64>() / samples as f64;
            let sd =
                ((up - down).abs() * (p * (1.0 - p)).sqrt() / (samples as f64).sqrt()).max(1e-300);
            worst = worst.max((mean - t.value(k)?).abs() / sd);
        }
        Ok(below(
            "martingale",
            "one-step expectation",
            worst,
            4.0,
            "max |mean − M(k)| in σ, k ∈ [−5, 5]".into(),
        ))
    }));
    out.push(guard("martingale", "uniform escape", || {
        let q = env
            .frequency()
            .close_return_times(30)?
            .last()
            .copied()
            .unwrap_or(1);
        let grid = uniform_grid(256);
        let mut prev = (0.0f64, 0.0f64);
        let mut ok = true;
        for mult in [1u64, 2, 4, 8] {
            let n = (q * mult) as usize;
            let (mut lo, mut hi) = (f64::INFINITY, f64::INFINITY);
            for &x in &grid {
                let t = build_martingale(env, x, n)?;
                hi = hi.min(t.value(n as i64)?.abs());
                lo = lo.min(t.value(-(n as i64))?.abs());
            }
            ok &= hi >= prev.1 && lo >= prev.0;
            prev = (lo, hi);
        }
        Ok(holds(
            "martingale",
            "uniform escape",
            ok,
            format!(
                "min |M(±N)| over 256 x along N = {q}·2^j: {:.3e}, {:.3e}",
                prev.0, prev.1
            ),
        ))
    }));
}

fn occupation_checks(env: &Environment, out: &mut Vec<Check>) {
    out.push(guard("occupation", "invariant density", || {
        let mut worst = 0.0f64;
        for x in uniform_grid(16) {
            worst = worst.max(invariant_density_residual(&visit_counts(env, x, 200)?, env));
        }
        Ok(below(
            "occupation",
            "invariant density",
            worst,
            1e-10,
            "16 x, window 200".into(),
        ))
    }));
    out.push(guard("occupation", "scale-function identity", || {
        let mut worst = 0.0f64;
        for x in uniform_grid(16) {
            let mu = visit_counts(env, x, 50)?;
            let t = build_martingale(env, x, 50)?;
            let p0 = env.eval_p(x);
            for a in 1..=50 {
                let lhs = mu.mu(a)? * t.increment(a - 1)? * env.eval_q(env.orbit_point(x, a));
                worst = worst.max((lhs - p0).abs() / p0);
            }
        }
        Ok(below(
            "occupation",
            "scale-function identity",
            worst,
            1e-10,
            "16 x, a ≤ 50".into(),
        ))
    }));
    out.push(guard("occupation", "taboo-series agreement", || {
        let horizon = 10_000u64;
        let x = 0.0;
        let mu = visit_counts(env, x, 8)?;
        let mut worst = 0.0f64;
        let mut ok = true;
        for (a, dp) in mu_profile_via_dp(env, x, 8, horizon)? {
            let exact = mu.mu(a)?;
            // truncated partial sums sit below the limit, by O(|a|/√K)
            let slack = 2.0 * a.abs() as f64 / (horizon as f64).sqrt();
            let rel = (exact - dp) / exact;
            ok &= rel > -1e-12 && rel < slack;
            worst = worst.max(rel.abs() / slack);
        }
        let mut c = below(
            "occupation",
            "taboo-series agreement",
            worst,
            1.0,
            "relative gap / (2|a|/√K), |a| ≤ 8, K = 1e4".into(),
        );
        c.passed &= ok;
        Ok(c)
    }));
    out.push(guard("occupation", "pushforward mass", || {
        let mut worst = 0.0f64;
        for q in [13u64, 34, 89, 144] {
            let m = stationary_estimate(env, 0.37, q)?.measure;
            worst = worst.max((pushforward(&m, env).mass() - 1.0).abs());
        }
        Ok(below(
            "occupation",
            "pushforward mass",
            worst,
            1e-12,
            "q ∈ {13, 34, 89, 144}".into(),
        ))
    }));
    out.push(guard("occupation", "stationary stabilization", || {
        let hs = Harmonic::basis(2);
        let qs = [34u64, 55];
        let mut integrals = vec![];
        for x in [0.0, 0.37] {
            let mut row = vec![];
            for &q in &qs {
                let m = stationary_estimate(env, x, q)?.measure;
                row.push(
                    hs.iter()
                        .map(|&h| test_integral(&m, h))
                        .collect::<Result<Vec<f64>>>()?,
                );
            }
            integrals.push(row);
        }
        let mut gap = 0.0f64;
        for i in 0..hs.len() {
            gap = gap.max((integrals[0][1][i] - integrals[1][1][i]).abs());
            gap = gap.max((integrals[0][1][i] - integrals[0][0][i]).abs());
        }
        Ok(below(
            "occupation",
            "stationary stabilization",
            gap,
            0.05,
            "harmonics k ≤ 2 at q = 55: cross-x and successive-q gaps".into(),
        ))
    }));
}

fn exact_dp_checks(env: &Environment, out: &mut Vec<Check>) {
    out.push(guard("exact_dp", "mass and parity", || {
        let mut worst = 0.0f64;
        let mut parity = true;
        let mut walk = LatticeDistribution::origin(Chain::Walk);
        let mut taboo = LatticeDistribution::origin(Chain::Walk).with_taboo(0);
        let mut lazy =
            LatticeDistribution::origin(Chain::Squared(SquaredKernel::TwoStep)).with_taboo(1);
        for _ in 0..1_000 {
            walk = step(&walk, env, 0.1)?;
            taboo = step(&taboo, env, 0.1)?;
            lazy = squared_step(&lazy, env, 0.1)?;
            parity &= walk.parity_ok() && taboo.parity_ok();
            for d in [&walk, &taboo, &lazy] {
                worst = worst.max((d.total_mass() - 1.0).abs());
            }
        }
        let long = distribution_at(env, 0.1, 20_000, None)?;
        worst = worst.max((long.total_mass() - 1.0).abs());
        let mut c = below(
            "exact_dp",
            "mass and parity",
            worst,
            1e-12,
            format!("every step to 1000, and n = 20000; parity: {parity}"),
        );
        c.passed &= parity;
        Ok(c)
    }));
    out.push(guard("exact_dp", "two squared steps", || {
        let mut worst = 0.0f64;
        for x in uniform_grid(8) {
            let w = distribution_at(env, x, 4, None)?;
            let z = squared_distribution_at(env, x, 2, None, SquaredKernel::TwoStep)?;
            for s in -2..=2 {
                worst = worst.max((z.mass(s) - w.mass(2 * s)).abs());
            }
        }
        Ok(below(
            "exact_dp",
            "two squared steps",
            worst,
            1e-14,
            "8 x".into(),
        ))
    }));
    out.push(guard("exact_dp", "renewal identity", || {
        let f = env.f().clone();
        let envs = [
            Environment::new(TrigPolynomial::zero(), env.frequency().clone()),
            env.clone(),
            Environment::with_drift(f, Frequency::liouville_demo(), env.drift()),
        ];
        let mut worst = 0.0f64;
        for e in &envs {
            for r in renewal_residuals(e, 0.0, &[-2, -1, 0, 1, 2], 200, SquaredKernel::TwoStep)? {
                worst = worst.max(r.residual);
            }
        }
        Ok(below(
            "exact_dp",
            "renewal identity",
            worst,
            1e-12,
            "n ≤ 200, a ∈ {0, ±1, ±2}; flat, given, Liouville".into(),
        ))
    }));
    out.push(guard("exact_dp", "ratio-limit trend", || {
        let meds: Vec<f64> = [500u64, 2_000, 8_000]
            .iter()
            .map(|&n| srlp_check(env, 0.0, n, 5).map(|r| r.median_deviation()))
            .collect::<Result<_>>()?;
        let ok = meds.windows(2).all(|w| w[1] < w[0]);
        Ok(holds(
            "exact_dp",
            "ratio-limit trend",
            ok,
            format!("median deviation at n = 500, 2000, 8000: {meds:.4?}"),
        ))
    }));
    out.push(guard("exact_dp", "geometric visit counts", || {
        let mut worst = 0.0f64;
        for x in [0.0, 0.37] {
            let t = build_martingale(env, x, 8)?;
            for a in [-4i64, -3, -2, -1, 1, 2, 3, 4] {
                let tails = visit_tail_probabilities(env, x, a, 4)?;
                let r = geometric_parameter(env, x, a, &t)?;
                for (j, p) in tails.iter().enumerate() {
                    let expected = tails[0] * (1.0 - r).powi(j as i32);
                    worst = worst.max((p - expected).abs() / expected);
                }
            }
        }
        Ok(below(
            "exact_dp",
            "geometric visit counts",
            worst,
            1e-10,
            "j ≤ 4, |a| ≤ 4".into(),
        ))
    }));
}

fn monte_carlo_checks(env: &Environment, seed: u64, out: &mut Vec<Check>) {
    out.push(guard("monte_carlo", "thread independence", || {
        let cfg = SimConfig::geometric(seed, 2_000, 500)?;
        let runs: Vec<_> = [1usize, 3]
            .iter()
            .map(|&threads| {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .expect("thread pool");
                pool.install(|| simulate(env, 0.2, &cfg))
            })
            .collect::<Result<_>>()?;
        Ok(holds(
            "monte_carlo",
            "thread independence",
            runs[0] == runs[1],
            "1 vs 3 threads".into(),
        ))
    }));
    out.push(guard("monte_carlo", "path summaries", || {
        let sim = simulate(env, 0.0, &SimConfig::geometric(seed, 2_000, 1_000)?)?;
        let ok = sim
            .paths
            .iter()
            .flatten()
            .all(|s| s.min <= s.site && s.site <= s.max && s.min <= 0 && s.max >= 0);
        Ok(holds(
            "monte_carlo",
            "path summaries",
            ok,
            "min ≤ ξ_n ≤ max, min ≤ 0 ≤ max".into(),
        ))
    }));
    out.push(guard("monte_carlo", "agreement with exact law", || {
        let n = 1_000;
        let cfg = SimConfig::new(seed, 20_000, n, vec![n])?;
        let mc = &empirical_mixing(env, &[0.0], &cfg, &[Harmonic::cos(1)])?[0];
        let dist = distribution_at(env, 0.0, n, None)?;
        let alpha = env.alpha();
        let exact = dist.expect(|k| Harmonic::cos(1).eval(k as f64 * alpha));
        let sigmas = (mc.estimate.mean - exact).abs() / mc.estimate.std_error;
        Ok(below(
            "monte_carlo",
            "agreement with exact law",
            sigmas,
            4.0,
            format!(
                "𝔼 cos 2πX_n at n = {n}: MC {:.4} vs DP {exact:.4}, in σ",
                mc.estimate.mean
            ),
        ))
    }));
    out.push(guard("monte_carlo", "interval coverage", || {
        // simple walk: ℙ(max_{j≤n} S_j = S_n) = C(n, n/2)/2^n
        let flat = Environment::new(TrigPolynomial::zero(), Frequency::golden());
        let n = 100u64;
        let exact =
            (0..50).fold(1.0f64, |acc, i| acc * (100 - i) as f64 / (i + 1) as f64) / 2f64.powi(100);
        let mut covered = 0;
        for rep in 0..100u64 {
            let cfg = SimConfig::new(
                seed.wrapping_add(rep.wrapping_mul(0x9E37_79B9_7F4A_7C15)),
                1_000,
                n,
                vec![n],
            )?;
            let row = condition16_from(&simulate(&flat, 0.0, &cfg)?)[0];
            covered += row.p_max.contains(exact) as u32;
        }
        let mut c = holds(
            "monte_carlo",
            "interval coverage",
            covered >= 90,
            format!("{covered}/100 Wilson intervals cover {exact:.5}"),
        );
        c.value = covered as f64;
        c.threshold = 90.0;
        Ok(c)
    }));
}

/// Runs every check against `env`. The suite expects a symmetric
/// environment; recurrence is assumed by the visit-count checks.
pub fn run_suite(env: &Environment, seed: u64) -> VerifyReport {
    let mut checks = Vec::new();
    rotation_checks(&mut checks);
    environment_checks(env, &mut checks);
    martingale_checks(env, seed, &mut checks);
    occupation_checks(env, &mut checks);
    exact_dp_checks(env, &mut checks);
    monte_carlo_checks(env, seed, &mut checks);
    VerifyReport { seed, checks }
}
