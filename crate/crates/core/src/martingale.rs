//! Scale function `M` of the walk on ℤ and the exit probabilities it
//! yields.
//!
//! `M(0) = 0`, `M(1) = 1` and the increments `d_k = M(k+1) − M(k)` obey
//! `d_k = (q_k/p_k)·d_{k−1}`, which is exactly the martingale identity
//! `p_k M(k+1) + q_k M(k−1) = M(k)`. Increments are exponentiated from
//! cumulative log-odds so long windows neither overflow nor underflow
//! until the products themselves leave the float range.

use rayon::prelude::*;

use crate::environment::{total_variation, Environment, Orbit};
use crate::error::{Error, Result};

/// exp overflows just above 709.78.
const LOG_LIMIT: f64 = 700.0;

#[derive(Debug, Clone)]
pub struct MartingaleTable {
    x: f64,
    window: usize,
    /// `M(k)` for `k ∈ [−N, N]`
    values: Vec<f64>,
    /// `d_k` for `k ∈ [−N, N−1]`
    increments: Vec<f64>,
}

impl MartingaleTable {
    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn window(&self) -> usize {
        self.window
    }

    fn check(&self, k: i64) -> Result<()> {
        if k.unsigned_abs() as usize > self.window {
            Err(Error::Window {
                site: k,
                window: self.window,
            })
        } else {
            Ok(())
        }
    }

    /// `M(k)`
    pub fn value(&self, k: i64) -> Result<f64> {
        self.check(k)?;
        Ok(self.values[(k + self.window as i64) as usize])
    }

    /// `M(k+1) − M(k)`
    pub fn increment(&self, k: i64) -> Result<f64> {
        self.check(k)?;
        self.check(k + 1)?;
        Ok(self.increments[(k + self.window as i64) as usize])
    }

    pub fn values(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        let n = self.window as i64;
        self.values
            .iter()
            .enumerate()
            .map(move |(i, &v)| (i as i64 - n, v))
    }

    /// `M(b) − M(a)` as a sum of increments.
    fn span(&self, a: i64, b: i64) -> f64 {
        let n = self.window as i64;
        self.increments[(a + n) as usize..(b + n) as usize]
            .iter()
            .sum()
    }

    /// Largest relative residual of `p_k M(k+1) + q_k M(k−1) − M(k)` over
    /// interior sites, scaled by `p_k|M(k+1)| + q_k|M(k−1)|`.
    pub fn identity_residual(&self, env: &Environment) -> f64 {
        let n = self.window as i64;
        let orbit = Orbit::new(env, self.x, -n, n);
        (-n + 1..n)
            .map(|k| {
                let i = (k + n) as usize;
                let (p, q) = (orbit.p(k), orbit.q(k));
                let lhs = p * self.values[i + 1] + q * self.values[i - 1];
                let scale = p * self.values[i + 1].abs() + q * self.values[i - 1].abs();
                (lhs - self.values[i]).abs() / scale
            })
            .fold(0.0, f64::max)
    }
}

/// Scale function on `[−window, window]` for the environment seen from `x`.
pub fn build_martingale(env: &Environment, x: f64, window: usize) -> Result<MartingaleTable> {
    if window == 0 {
        return Err(Error::Domain("window must be at least 1".into()));
    }
    let n = window as i64;
    let orbit = Orbit::new(env, x, -n, n);
    // log d_k: d_0 = 1, log d_k = log d_{k−1} − f_k, log d_{k−1} = log d_k + f_k
    let mut log_d = vec![0.0f64; 2 * window];
    let zero = window; // index of d_0
    for k in 1..n {
        log_d[zero + k as usize] = log_d[zero + k as usize - 1] - orbit.f(k);
    }
    for k in (-n + 1..=0).rev() {
        let i = (zero as i64 + k) as usize;
        log_d[i - 1] = log_d[i] + orbit.f(k);
    }
    let mut increments = Vec::with_capacity(2 * window);
    for (i, &l) in log_d.iter().enumerate() {
        if !(l.abs() <= LOG_LIMIT) {
            return Err(Error::ProductOverflow { site: i as i64 - n });
        }
        increments.push(l.exp());
    }
    let mut values = vec![0.0f64; 2 * window + 1];
    for k in 1..=window {
        values[window + k] = values[window + k - 1] + increments[window + k - 1];
    }
    for k in 1..=window {
        values[window - k] = values[window - k + 1] - increments[window - k];
    }
    Ok(MartingaleTable {
        x,
        window,
        values,
        increments,
    })
}

/// Probability that the walk started at `k` hits `a` before `b`:
/// `(M(b) − M(k)) / (M(b) − M(a))`.
pub fn exit_probability(table: &MartingaleTable, a: i64, k: i64, b: i64) -> Result<f64> {
    if !(a < k && k < b) {
        return Err(Error::Domain(format!("need a < k < b, got {a}, {k}, {b}")));
    }
    table.check(a)?;
    table.check(b)?;
    Ok(table.span(k, b) / table.span(a, b))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReturnBounds {
    /// Lower bound on returning to 0 before hitting `b`: `M(b)/(M(b) − M(−1))`.
    pub upper_barrier: f64,
    /// Lower bound on returning to 0 before hitting `a`: `−M(a)/(M(1) − M(a))`.
    pub lower_barrier: f64,
}

/// Return bounds at barriers `a < 0 < b`.
pub fn return_bounds_at(table: &MartingaleTable, a: i64, b: i64) -> Result<ReturnBounds> {
    if a > -1 || b < 1 {
        return Err(Error::Domain(format!(
            "need a ≤ −1 and b ≥ 1, got {a}, {b}"
        )));
    }
    table.check(a)?;
    table.check(b)?;
    let m_b = table.value(b)?;
    let m_a = table.value(a)?;
    Ok(ReturnBounds {
        upper_barrier: m_b / (m_b - table.value(-1)?),
        lower_barrier: -m_a / (table.value(1)? - m_a),
    })
}

/// Return bounds at the window edges `±N`.
pub fn return_bounds(table: &MartingaleTable) -> Result<ReturnBounds> {
    let n = table.window as i64;
    return_bounds_at(table, -n, n)
}

#[derive(Debug, Clone)]
pub struct ProductReport {
    pub q: u64,
    /// `e^{−var f}`
    pub floor: f64,
    /// `Π_{j=1}^q (q/p)(x + jα)` per grid point.
    pub products: Vec<f64>,
    pub min_product: f64,
    pub violations: Vec<f64>,
}

impl ProductReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `Π_{j=1}^q (q/p)(x+jα) ≥ e^{−var f}` over a grid of base points
/// for a close return time `q`.
pub fn close_return_product_check(
    env: &Environment,
    x_grid: &[f64],
    q: u64,
) -> Result<ProductReport> {
    if !env.frequency().is_close_return(q)? {
        return Err(Error::NotCloseReturn { q });
    }
    let floor = (-total_variation(env.f())).exp();
    let products: Vec<f64> = x_grid
        .par_iter()
        .map(|&x| (-env.birkhoff_sum(x, q)).exp())
        .collect();
    let min_product = products.iter().copied().fold(f64::INFINITY, f64::min);
    let violations = x_grid
        .iter()
        .zip(&products)
        .filter(|(_, &p)| p < floor)
        .map(|(&x, _)| x)
        .collect();
    Ok(ProductReport {
        q,
        floor,
        products,
        min_product,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{uniform_grid, TrigPolynomial};
    use crate::rotation::Frequency;

    fn flat() -> Environment {
        Environment::new(TrigPolynomial::zero(), Frequency::golden())
    }

    /// `P(hit a before b | start k)` for every k by value iteration on the
    /// absorbing chain.
    fn absorbing_oracle(env: &Environment, x: f64, a: i64, b: i64) -> Vec<f64> {
        let orbit = Orbit::new(env, x, a, b);
        let len = (b - a + 1) as usize;
        let mut h = vec![0.0; len];
        h[0] = 1.0;
        loop {
            let mut next = h.clone();
            let mut change = 0.0f64;
            for i in 1..len - 1 {
                let k = a + i as i64;
                next[i] = orbit.p(k) * h[i + 1] + orbit.q(k) * h[i - 1];
                change = change.max((next[i] - h[i]).abs());
            }
            h = next;
            if change < 1e-16 {
                return h;
            }
        }
    }

    #[test]
    fn flat_scale_is_identity() {
        let t = build_martingale(&flat(), 0.3, 20).unwrap();
        for (k, m) in t.values() {
            assert!((m - k as f64).abs() < 1e-12, "M({k}) = {m}");
        }
    }

    #[test]
    fn anchoring_and_positive_formula() {
        let env = Environment::reference();
        let t = build_martingale(&env, 0.0, 10).unwrap();
        assert_eq!(t.value(0).unwrap(), 0.0);
        assert_eq!(t.value(1).unwrap() - t.value(0).unwrap(), 1.0);
        let y = env.orbit_point(0.0, 1);
        let expected = 1.0 + env.eval_q(y) / env.eval_p(y);
        assert!((t.value(2).unwrap() - expected).abs() < 1e-14);
        // negative side from the recurrence: M(−1) = −p(x)/q(x)
        assert!((t.value(-1).unwrap() + env.eval_p(0.0) / env.eval_q(0.0)).abs() < 1e-14);
    }

    #[test]
    fn identity_holds() {
        let env = Environment::reference();
        for x in [0.0, 0.37, 0.91] {
            let t = build_martingale(&env, x, 500).unwrap();
            assert!(t.identity_residual(&env) < 1e-12);
            for k in -500..500 {
                assert!(t.increment(k).unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn flat_exit_examples() {
        let t = build_martingale(&flat(), 0.0, 10).unwrap();
        assert!((exit_probability(&t, -1, 0, 5).unwrap() - 5.0 / 6.0).abs() < 1e-15);
        assert!(exit_probability(&t, 0, 0, 5).is_err());
        assert!(exit_probability(&t, -1, 6, 5).is_err());
        assert!(matches!(
            exit_probability(&t, -11, 0, 5),
            Err(Error::Window { .. })
        ));
    }

    #[test]
    fn exit_adjacent_to_b() {
        let env = Environment::reference();
        let t = build_martingale(&env, 0.2, 10).unwrap();
        let (a, b) = (-4, 6);
        let lhs = exit_probability(&t, a, b - 1, b).unwrap();
        let rhs = t.increment(b - 1).unwrap() / (t.value(b).unwrap() - t.value(a).unwrap());
        assert!((lhs - rhs).abs() < 1e-15);
    }

    #[test]
    fn exit_matches_absorbing_chain() {
        let env = Environment::reference();
        let t = build_martingale(&env, 0.0, 10).unwrap();
        let h = absorbing_oracle(&env, 0.0, -3, 3);
        let v = exit_probability(&t, -3, 0, 3).unwrap();
        assert!((v - h[3]).abs() < 1e-10, "{v} vs {}", h[3]);
    }

    #[test]
    fn exit_complement_and_monotone() {
        let env = Environment::reference();
        let t = build_martingale(&env, 0.6, 12).unwrap();
        let (a, b) = (-7, 9);
        let mut last = 1.0;
        for k in a + 1..b {
            let to_a = exit_probability(&t, a, k, b).unwrap();
            let to_b = (t.value(k).unwrap() - t.value(a).unwrap())
                / (t.value(b).unwrap() - t.value(a).unwrap());
            assert!((to_a + to_b - 1.0).abs() < 1e-14);
            assert!(to_a < last);
            last = to_a;
        }
    }

    #[test]
    fn flat_return_bounds() {
        let t = build_martingale(&flat(), 0.0, 9).unwrap();
        let r = return_bounds(&t).unwrap();
        assert!((r.upper_barrier - 0.9).abs() < 1e-15);
        assert!((r.lower_barrier - 0.9).abs() < 1e-15);
    }

    #[test]
    fn return_bound_below_exact_return_probability() {
        let env = Environment::reference();
        let t = build_martingale(&env, 0.0, 8).unwrap();
        let bound = return_bounds(&t).unwrap().upper_barrier;
        // exact: step down (returns surely before b) or step up then hit 0 before 8
        let h = absorbing_oracle(&env, 0.0, 0, 8);
        let exact = env.eval_q(0.0) + env.eval_p(0.0) * h[1];
        assert!(bound > 0.0 && bound < 1.0);
        assert!(bound <= exact, "{bound} > {exact}");
    }

    #[test]
    fn product_check_examples() {
        let grid = uniform_grid(128);
        let r = close_return_product_check(&flat(), &grid, 13).unwrap();
        assert!(r.passed());
        assert!((r.min_product - 1.0).abs() < 1e-15);
        let env = Environment::reference();
        for q in [13, 21] {
            let r = close_return_product_check(&env, &grid, q).unwrap();
            assert!(r.passed());
            assert!(r.min_product >= (-4.0f64).exp());
        }
    }

    #[test]
    fn overflow_reported_with_site() {
        let env = Environment::with_drift(TrigPolynomial::zero(), Frequency::golden(), 3.0);
        match build_martingale(&env, 0.0, 400) {
            Err(Error::ProductOverflow { site }) => assert!(site.abs() > 200),
            other => panic!("expected overflow, got {other:?}"),
        }
    }
}
