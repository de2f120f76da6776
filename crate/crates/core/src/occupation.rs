//! Expected visit counts before the first return to 0, the atomic measures
//! they induce along the orbit, and the stationary-measure estimate.
//!
//! For `a > 0`:
//!
//! ```text
//! μ_{x,a} = p(x) / q(x+aα) · Π_{j=1}^{a−1} p(x+jα)/q(x+jα)
//!         = p(x) / (q(x+aα) · (M(a) − M(a−1)))
//! ```
//!
//! and symmetrically for `a < 0`, with `μ_{x,0} = 1`. The product starts
//! at `j = 1`; with that index the profile satisfies the invariant-density
//! identity `p_{a−1} μ_{a−1} + q_{a+1} μ_{a+1} = μ_a` at every site,
//! including `a = 0`.

use crate::environment::{Environment, Orbit};
use crate::error::{Error, Result};
use crate::martingale::MartingaleTable;
use crate::measure::{compensated_sum, Atom, AtomicCircleMeasure, Harmonic};

/// Mass below which the stationary estimate is flagged as immature.
pub const MASS_THRESHOLD: f64 = 10.0;

#[derive(Debug, Clone)]
pub struct VisitProfile {
    x: f64,
    window: usize,
    mu: Vec<f64>,
}

impl VisitProfile {
    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// `μ_{x,a}`
    pub fn mu(&self, a: i64) -> Result<f64> {
        if a.unsigned_abs() as usize > self.window {
            return Err(Error::Window {
                site: a,
                window: self.window,
            });
        }
        Ok(self.mu[(a + self.window as i64) as usize])
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        let n = self.window as i64;
        self.mu
            .iter()
            .enumerate()
            .map(move |(i, &m)| (i as i64 - n, m))
    }
}

fn log_mu_from_orbit(orbit: &Orbit, window: usize) -> Vec<f64> {
    let n = window as i64;
    let mut log_mu = vec![0.0f64; 2 * window + 1];
    let log_p0 = orbit.p(0).ln();
    let log_q0 = orbit.q(0).ln();
    // running Σ_{j=1}^{a−1} f_j
    let mut acc = 0.0;
    for a in 1..=n {
        log_mu[(n + a) as usize] = log_p0 - orbit.q(a).ln() + acc;
        acc += orbit.f(a);
    }
    acc = 0.0;
    for a in 1..=n {
        log_mu[(n - a) as usize] = log_q0 - orbit.p(-a).ln() + acc;
        acc -= orbit.f(-a);
    }
    log_mu
}

/// `μ_{x,a}` for `a ∈ [−window, window]`, computed in log space.
pub fn visit_counts(env: &Environment, x: f64, window: usize) -> Result<VisitProfile> {
    if window == 0 {
        return Err(Error::Domain("window must be at least 1".into()));
    }
    let n = window as i64;
    let orbit = Orbit::new(env, x, -n, n);
    let log_mu = log_mu_from_orbit(&orbit, window);
    let mut mu = Vec::with_capacity(log_mu.len());
    for (i, l) in log_mu.iter().enumerate() {
        let v = l.exp();
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::ProductOverflow { site: i as i64 - n });
        }
        mu.push(v);
    }
    Ok(VisitProfile { x, window, mu })
}

/// Probability of reaching 0 from `a` before coming back to `a`:
/// `q(x+aα)(M(a) − M(a−1)) / (M(a) − M(0))` for `a > 0`, mirrored below.
pub fn geometric_parameter(
    env: &Environment,
    x: f64,
    a: i64,
    table: &MartingaleTable,
) -> Result<f64> {
    if a == 0 {
        return Err(Error::Domain(
            "geometric parameter undefined at the origin".into(),
        ));
    }
    if table.x() != x {
        return Err(Error::Domain(format!(
            "table built for x = {}, requested x = {x}",
            table.x()
        )));
    }
    let y = env.orbit_point(x, a);
    if a > 0 {
        let step = table.increment(a - 1)?;
        Ok(env.eval_q(y) * step / (table.value(a)? - table.value(0)?))
    } else {
        let step = table.increment(a)?;
        Ok(env.eval_p(y) * step / (table.value(0)? - table.value(a)?))
    }
}

/// Largest relative residual of `p_{a−1}μ_{a−1} + q_{a+1}μ_{a+1} − μ_a` over
/// interior sites.
pub fn invariant_density_residual(profile: &VisitProfile, env: &Environment) -> f64 {
    let n = profile.window as i64;
    let orbit = Orbit::new(env, profile.x, -n, n);
    let mu = &profile.mu;
    (-n + 1..n)
        .map(|a| {
            let i = (a + n) as usize;
            let lhs = orbit.p(a - 1) * mu[i - 1] + orbit.q(a + 1) * mu[i + 1];
            (lhs - mu[i]).abs() / mu[i]
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
pub struct NuMeasures {
    pub odd: AtomicCircleMeasure,
    pub even: AtomicCircleMeasure,
    /// Unnormalized mass `Σ_{0≤k<q, k odd} μ_{x,k}`.
    pub mass_odd: f64,
    pub mass_even: f64,
}

fn orbit_atoms(env: &Environment, x: f64, q: u64) -> Result<Vec<(u64, Atom)>> {
    let window = q.max(1) as usize;
    let profile = visit_counts(env, x, window)?;
    Ok((0..q)
        .map(|k| {
            (
                k,
                Atom {
                    position: env.orbit_point(x, k as i64),
                    weight: profile.mu[window + k as usize],
                },
            )
        })
        .collect())
}

/// Visit counts on `x + kα`, `0 ≤ k < q`, split by the parity of `k`.
pub fn nu_measures(env: &Environment, x: f64, q: u64) -> Result<NuMeasures> {
    if q < 2 {
        return Err(Error::Domain("q must be at least 2".into()));
    }
    let atoms = orbit_atoms(env, x, q)?;
    let (odd, even): (Vec<_>, Vec<_>) = atoms.into_iter().partition(|(k, _)| k % 2 == 1);
    let mass_odd = compensated_sum(odd.iter().map(|(_, a)| a.weight));
    let mass_even = compensated_sum(even.iter().map(|(_, a)| a.weight));
    Ok(NuMeasures {
        odd: AtomicCircleMeasure::from_atoms(odd.into_iter().map(|(_, a)| a), true)?,
        even: AtomicCircleMeasure::from_atoms(even.into_iter().map(|(_, a)| a), true)?,
        mass_odd,
        mass_even,
    })
}

/// One step of the Markov operator: `(y, w)` becomes `(y+α, p(y)w)` and
/// `(y−α, q(y)w)`.
pub fn pushforward(measure: &AtomicCircleMeasure, env: &Environment) -> AtomicCircleMeasure {
    let alpha = env.alpha();
    let atoms = measure.atoms().iter().flat_map(|a| {
        let p = env.eval_p(a.position);
        [
            Atom {
                position: a.position + alpha,
                weight: p * a.weight,
            },
            Atom {
                position: a.position - alpha,
                weight: (1.0 - p) * a.weight,
            },
        ]
    });
    let out = AtomicCircleMeasure::from_atoms(atoms, false).expect("nonnegative weights");
    if measure.is_normalized() {
        out.with_normalized_flag()
    } else {
        out
    }
}

#[derive(Debug, Clone)]
pub struct StationaryEstimate {
    pub measure: AtomicCircleMeasure,
    pub mass_odd: f64,
    pub mass_even: f64,
    /// Either parity mass is at most [`MASS_THRESHOLD`].
    pub below_mass_threshold: bool,
}

/// `(M_odd ν_odd + M_even ν_even) / (M_odd + M_even)`: all orbit atoms
/// `0 ≤ k < q` weighted by `μ_{x,k}` and normalized.
pub fn stationary_estimate(env: &Environment, x: f64, q: u64) -> Result<StationaryEstimate> {
    let nu = nu_measures(env, x, q)?;
    let atoms = orbit_atoms(env, x, q)?;
    let measure = AtomicCircleMeasure::from_atoms(atoms.into_iter().map(|(_, a)| a), true)?;
    Ok(StationaryEstimate {
        measure,
        mass_odd: nu.mass_odd,
        mass_even: nu.mass_even,
        below_mass_threshold: nu.mass_odd <= MASS_THRESHOLD || nu.mass_even <= MASS_THRESHOLD,
    })
}

/// `∫ φ dν` for a harmonic test function.
pub fn test_integral(measure: &AtomicCircleMeasure, harmonic: Harmonic) -> Result<f64> {
    if !measure.is_normalized() {
        return Err(Error::Unnormalized);
    }
    Ok(measure.integrate(|y| harmonic.eval(y)))
}

#[derive(Debug, Clone, Copy)]
pub struct QuasiInvarianceRow {
    pub harmonic: Harmonic,
    /// `∫ φ(y) dν(y)`
    pub direct: f64,
    /// `∫ φ(y+α) · p(y)/q(y+α) dν(y)`
    pub transported: f64,
    pub discrepancy: f64,
}

/// Compares both sides of the quasi-invariance relation
/// `ν(R_α A) = ∫_A p(y)/q(y+α) dν(y)` integrated against each harmonic.
/// A stationary measure has zero discrepancy.
pub fn quasi_invariance_diagnostic(
    measure: &AtomicCircleMeasure,
    env: &Environment,
    harmonics: &[Harmonic],
) -> Result<Vec<QuasiInvarianceRow>> {
    if !measure.is_normalized() {
        return Err(Error::Unnormalized);
    }
    let alpha = env.alpha();
    Ok(harmonics
        .iter()
        .map(|&h| {
            let direct = measure.integrate(|y| h.eval(y));
            let transported =
                measure.integrate(|y| h.eval(y + alpha) * env.eval_p(y) / env.eval_q(y + alpha));
            QuasiInvarianceRow {
                harmonic: h,
                direct,
                transported,
                discrepancy: (direct - transported).abs(),
            }
        })
        .collect())
}
