//! Continued fractions of rotation numbers: partial quotients, convergents
//! and close return times.
//!
//! A frequency is either a binary float, whose expansion is certified only
//! as far as rounding allows, or an exact list of partial quotients
//! continued by an all-ones tail. The second form keeps the convergent
//! denominators exact for Liouville-like frequencies whose approximation
//! quality a float cannot resolve.

use crate::error::{Error, Result};

/// Smallest Gauss-map residual from which another quotient is extracted.
pub const CERTIFIED_RESIDUAL: f64 = 9.094947017729282e-13; // 2^-40

const GOLDEN_TAIL: f64 = 1.618_033_988_749_895; // [1; 1, 1, ...]

#[derive(Debug, Clone, PartialEq)]
pub struct PartialQuotients {
    pub a0: i64,
    pub quotients: Vec<u64>,
    /// `residuals[k-1]` is the fractional part left after extracting the
    /// k-th quotient, i.e. the reciprocal of the next complete quotient.
    residuals: Vec<f64>,
    /// Set when the quotients expand a float, which is then exact.
    source: Option<f64>,
}

impl PartialQuotients {
    pub fn depth(&self) -> usize {
        self.quotients.len()
    }

    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    /// The number these quotients expand, at working precision.
    pub fn value(&self) -> f64 {
        match self.residuals.first() {
            None => self.a0 as f64,
            Some(_) => self.a0 as f64 + 1.0 / (self.quotients[0] as f64 + self.residuals[0]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Convergent {
    pub p: i64,
    pub q: u64,
    /// `|qα − p|`
    pub err: f64,
}

/// One step of the Gauss map with a running bound on the absolute error of
/// the residual.
struct GaussMap {
    residual: f64,
    err: f64,
    depth: usize,
}

impl GaussMap {
    fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Domain(format!("frequency {alpha} not in (0, 1)")));
        }
        Ok(GaussMap {
            residual: alpha,
            // the float stands for an irrational it rounds
            err: alpha * f64::EPSILON,
            depth: 0,
        })
    }

    fn next_quotient(&mut self, requested: usize) -> Result<(u64, f64)> {
        let horizon = Error::PrecisionHorizon {
            requested,
            certified: self.depth,
        };
        let r = self.residual;
        if r <= CERTIFIED_RESIDUAL || r <= 2.0 * self.err {
            return Err(horizon);
        }
        let inv = 1.0 / r;
        let inv_err = self.err / (r * (r - self.err)) + inv * f64::EPSILON;
        let a = inv.floor();
        if (inv - inv_err).floor() != a || (inv + inv_err).floor() != a || a < 1.0 {
            return Err(horizon);
        }
        self.residual = inv - a;
        self.err = inv_err;
        self.depth += 1;
        Ok((a as u64, self.residual))
    }
}

fn fused_err(alpha: f64, p: i128, q: i128) -> f64 {
    let qf = q as f64;
    let prod = qf * alpha;
    let low = qf.mul_add(alpha, -prod);
    ((prod - p as f64) + low).abs()
}

/// First `depth` partial quotients of `alpha ∈ (0, 1)`.
///
/// Refuses once the Gauss-map residual drops to 2⁻⁴⁰ or the propagated
/// rounding error could change a quotient.
pub fn continued_fraction(alpha: f64, depth: usize) -> Result<PartialQuotients> {
    if depth == 0 {
        return Err(Error::Domain("depth must be positive".into()));
    }
    let mut map = GaussMap::new(alpha)?;
    let mut quotients = Vec::with_capacity(depth);
    let mut residuals = Vec::with_capacity(depth);
    for _ in 0..depth {
        let (a, r) = map.next_quotient(depth)?;
        quotients.push(a);
        residuals.push(r);
    }
    Ok(PartialQuotients {
        a0: 0,
        quotients,
        residuals,
        source: Some(alpha),
    })
}

fn checked_step(a: u64, prev: i128, prev2: i128, index: usize) -> Result<i128> {
    let v = (a as i128)
        .checked_mul(prev)
        .and_then(|x| x.checked_add(prev2))
        .ok_or(Error::IntegerOverflow { index })?;
    if v > i64::MAX as i128 || v < i64::MIN as i128 {
        return Err(Error::IntegerOverflow { index });
    }
    Ok(v)
}

/// Convergents `p_k/q_k` for `k = 1..=depth` via the standard three-term
/// recurrence. For a float frequency `|qα − p|` is evaluated with a fused
/// multiply-add; for exact quotients it comes from the complete quotients,
/// which keeps full relative precision far below `ulp(α)`.
pub fn convergents(pq: &PartialQuotients) -> Result<Vec<Convergent>> {
    let (mut p_prev, mut p_prev2) = (pq.a0 as i128, 1i128);
    let (mut q_prev, mut q_prev2) = (1i128, 0i128);
    let mut out = Vec::with_capacity(pq.depth());
    for (k, (&a, &r)) in pq.quotients.iter().zip(&pq.residuals).enumerate() {
        let index = k + 1;
        let p = checked_step(a, p_prev, p_prev2, index)?;
        let q = checked_step(a, q_prev, q_prev2, index)?;
        let err = match pq.source {
            Some(alpha) if q < (1i128 << 53) => fused_err(alpha, p, q),
            _ => r / (q as f64 + r * q_prev as f64),
        };
        out.push(Convergent {
            p: p as i64,
            q: q as u64,
            err,
        });
        p_prev2 = p_prev;
        p_prev = p;
        q_prev2 = q_prev;
        q_prev = q;
    }
    Ok(out)
}

fn denominators_up_to(convergents: &[Convergent], q_max: u64) -> Vec<u64> {
    let mut out = vec![1u64];
    for c in convergents {
        if c.q > q_max {
            break;
        }
        if *out.last().unwrap() != c.q {
            out.push(c.q);
        }
    }
    out
}

/// Close return times `q ≤ q_max` of a float frequency: the convergent
/// denominators (with `q₀ = 1`), ascending.
pub fn close_return_times(alpha: f64, q_max: u64) -> Result<Vec<u64>> {
    Frequency::from_float(alpha)?.close_return_times(q_max)
}

/// Builds the frequency `[0; g₁, …, g_n, 1, 1, …]` and returns its float
/// value with the exact convergents for the prescribed quotients.
pub fn liouville_like(growth: &[u64]) -> Result<(f64, Vec<Convergent>)> {
    let freq = Frequency::from_quotients(growth.to_vec())?;
    let pq = freq.partial_quotients(growth.len())?;
    Ok((freq.value(), convergents(&pq)?))
}

/// Rotation number of the environment.
#[derive(Debug, Clone, PartialEq)]
pub struct Frequency {
    value: f64,
    exact: Option<Vec<u64>>,
}

impl Frequency {
    pub fn from_float(value: f64) -> Result<Self> {
        if !(value > 0.0 && value < 1.0) {
            return Err(Error::Domain(format!("frequency {value} not in (0, 1)")));
        }
        Ok(Frequency { value, exact: None })
    }

    /// `[0; quotients…, 1, 1, …]`; the all-ones tail keeps the number
    /// irrational.
    pub fn from_quotients(quotients: Vec<u64>) -> Result<Self> {
        if quotients.is_empty() {
            return Err(Error::Domain("quotient list must be non-empty".into()));
        }
        if quotients.contains(&0) {
            return Err(Error::Domain("partial quotients must be at least 1".into()));
        }
        let mut beta = GOLDEN_TAIL;
        for &a in quotients.iter().rev() {
            beta = a as f64 + 1.0 / beta;
        }
        Ok(Frequency {
            value: 1.0 / beta,
            exact: Some(quotients),
        })
    }

    /// (√5 − 1)/2
    pub fn golden() -> Self {
        Frequency::from_quotients(vec![1]).expect("static quotients")
    }

    /// √2 − 1
    pub fn silver() -> Self {
        Frequency::from_float(std::f64::consts::SQRT_2 - 1.0).expect("in (0,1)")
    }

    /// `[0; 1, 10, 100, 1000, 1, 1, …]`
    pub fn liouville_demo() -> Self {
        Frequency::from_quotients(vec![1, 10, 100, 1000]).expect("static quotients")
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn exact_quotients(&self) -> Option<&[u64]> {
        self.exact.as_deref()
    }

    pub fn partial_quotients(&self, depth: usize) -> Result<PartialQuotients> {
        match &self.exact {
            None => continued_fraction(self.value, depth),
            Some(prefix) => {
                if depth == 0 {
                    return Err(Error::Domain("depth must be positive".into()));
                }
                let quotient = |k: usize| prefix.get(k).copied().unwrap_or(1);
                // complete quotients β_k = [a_k; a_{k+1}, …], 1-based
                let top = depth.max(prefix.len());
                let mut beta = vec![0.0f64; top + 2];
                beta[top + 1] = GOLDEN_TAIL;
                for k in (1..=top).rev() {
                    beta[k] = quotient(k - 1) as f64 + 1.0 / beta[k + 1];
                }
                Ok(PartialQuotients {
                    a0: 0,
                    quotients: (0..depth).map(quotient).collect(),
                    residuals: (1..=depth).map(|k| 1.0 / beta[k + 1]).collect(),
                    source: None,
                })
            }
        }
    }

    /// Convergents with denominators up to and including the first one
    /// exceeding `q_max`.
    pub fn convergents_past(&self, q_max: u64) -> Result<Vec<Convergent>> {
        let mut depth = 8usize;
        loop {
            let list = match self.partial_quotients(depth) {
                Ok(pq) => convergents(&pq)?,
                Err(Error::PrecisionHorizon { certified, .. }) if certified > 0 => {
                    let list = convergents(&self.partial_quotients(certified)?)?;
                    if list.last().is_none_or(|c| c.q <= q_max) {
                        return Err(Error::PrecisionHorizon {
                            requested: depth,
                            certified,
                        });
                    }
                    list
                }
                Err(e) => return Err(e),
            };
            if list.last().is_some_and(|c| c.q > q_max) {
                return Ok(list);
            }
            depth *= 2;
        }
    }

    pub fn close_return_times(&self, q_max: u64) -> Result<Vec<u64>> {
        if q_max == 0 {
            return Err(Error::Domain("q_max must be positive".into()));
        }
        Ok(denominators_up_to(&self.convergents_past(q_max)?, q_max))
    }

    pub fn is_close_return(&self, q: u64) -> Result<bool> {
        if q == 0 {
            return Ok(false);
        }
        Ok(self.close_return_times(q)?.last() == Some(&q))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOLDEN: f64 = 0.618_033_988_749_894_8;

    /// `|qα − p|` for the float α, exact up to the final rounding.
    fn exact_err(alpha: f64, p: i64, q: u64) -> f64 {
        let qf = q as f64;
        let prod = qf * alpha;
        let low = qf.mul_add(alpha, -prod);
        ((prod - p as f64) + low).abs()
    }

    /// Best approximations of the second kind by exhaustive scan.
    fn best_approximation_denominators(alpha: f64, q_max: u64) -> Vec<u64> {
        let mut best = f64::INFINITY;
        let mut out = Vec::new();
        for q in 1..=q_max {
            let x = q as f64 * alpha;
            let d = (x - x.round()).abs();
            if d < best {
                best = d;
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn golden_quotients_are_ones() {
        let pq = continued_fraction(GOLDEN, 5).unwrap();
        assert_eq!(pq.quotients, vec![1, 1, 1, 1, 1]);
    }

    #[test]
    fn silver_quotients_are_twos() {
        let pq = continued_fraction(std::f64::consts::SQRT_2 - 1.0, 4).unwrap();
        assert_eq!(pq.quotients, vec![2, 2, 2, 2]);
    }

    #[test]
    fn just_below_half_starts_with_two() {
        let alpha = 0.5 - 1e-9 * std::f64::consts::SQRT_2;
        assert_eq!(continued_fraction(alpha, 1).unwrap().quotients, vec![2]);
    }

    #[test]
    fn domain_and_horizon_errors() {
        assert!(matches!(continued_fraction(1.2, 3), Err(Error::Domain(_))));
        assert!(matches!(continued_fraction(0.0, 3), Err(Error::Domain(_))));
        // a float is rational; its expansion must stop being certified
        assert!(matches!(
            continued_fraction(GOLDEN, 200),
            Err(Error::PrecisionHorizon { .. })
        ));
        assert!(matches!(
            continued_fraction(0.5, 1),
            Err(Error::PrecisionHorizon { certified: 0, .. })
        ));
    }

    #[test]
    fn golden_denominators_are_fibonacci() {
        let cs = convergents(&continued_fraction(GOLDEN, 8).unwrap()).unwrap();
        let qs: Vec<u64> = cs.iter().map(|c| c.q).collect();
        assert_eq!(qs, vec![1, 2, 3, 5, 8, 13, 21, 34]);
        let oracle = best_approximation_denominators(GOLDEN, 34);
        assert_eq!(oracle, vec![1, 2, 3, 5, 8, 13, 21, 34]);
    }

    #[test]
    fn silver_denominators() {
        let alpha = std::f64::consts::SQRT_2 - 1.0;
        let cs = convergents(&continued_fraction(alpha, 4).unwrap()).unwrap();
        assert_eq!(
            cs.iter().map(|c| c.q).collect::<Vec<_>>(),
            vec![2, 5, 12, 29]
        );
        assert_eq!(
            best_approximation_denominators(alpha, 30),
            vec![1, 2, 5, 12, 29]
        );
    }

    #[test]
    fn single_quotient_convergent() {
        let alpha = 1.0 / (7.0 + std::f64::consts::FRAC_1_SQRT_2);
        let cs = convergents(&continued_fraction(alpha, 1).unwrap()).unwrap();
        assert_eq!((cs[0].p, cs[0].q), (1, 7));
        assert!((cs[0].err - (7.0 * alpha - 1.0).abs()).abs() < 1e-15);
    }

    #[test]
    fn convergent_errors_match_direct_evaluation() {
        for alpha in [
            GOLDEN,
            std::f64::consts::SQRT_2 - 1.0,
            std::f64::consts::PI - 3.0,
        ] {
            let cs = convergents(&continued_fraction(alpha, 10).unwrap()).unwrap();
            for c in &cs {
                let direct = exact_err(alpha, c.p, c.q);
                assert!(
                    (c.err - direct).abs() <= 1e-12 * direct,
                    "{c:?} vs {direct}"
                );
                assert!(c.err < 1.0 / c.q as f64);
            }
            for w in cs.windows(2) {
                assert!(w[1].err < w[0].err);
                assert!(w[1].q > w[0].q);
            }
        }
    }

    #[test]
    fn close_returns_examples() {
        assert_eq!(
            close_return_times(GOLDEN, 25).unwrap(),
            vec![1, 2, 3, 5, 8, 13, 21]
        );
        assert_eq!(
            close_return_times(std::f64::consts::SQRT_2 - 1.0, 30).unwrap(),
            vec![1, 2, 5, 12, 29]
        );
        assert_eq!(
            close_return_times(std::f64::consts::PI - 3.0, 1).unwrap(),
            vec![1]
        );
        assert_eq!(close_return_times(GOLDEN, 1).unwrap(), vec![1]);
    }

    #[test]
    fn close_returns_agree_with_scan() {
        for alpha in [
            GOLDEN,
            std::f64::consts::SQRT_2 - 1.0,
            0.123_456_789_f64,
            std::f64::consts::E - 2.0,
        ] {
            let fast = close_return_times(alpha, 10_000).unwrap();
            assert_eq!(
                fast,
                best_approximation_denominators(alpha, 10_000),
                "alpha {alpha}"
            );
            for &q in &fast {
                let x = q as f64 * alpha;
                assert!((x - x.round()).abs() < 1.0 / q as f64);
            }
        }
    }

    #[test]
    fn liouville_examples() {
        let (alpha, cs) = liouville_like(&[1, 1, 1, 1, 1, 1]).unwrap();
        assert!((alpha - GOLDEN).abs() < 1e-15);
        assert_eq!(
            cs.iter().map(|c| c.q).collect::<Vec<_>>(),
            vec![1, 2, 3, 5, 8, 13]
        );

        let (alpha, cs) = liouville_like(&[1, 10, 100, 1000]).unwrap();
        let qs: Vec<u64> = cs.iter().map(|c| c.q).collect();
        // q_k = a_k q_{k-1} + q_{k-2}: 1, 10·1+1, 100·11+1, 1000·1101+11
        assert_eq!(qs, vec![1, 11, 1101, 1_101_011]);
        for c in &cs {
            assert!(c.err < 1.0 / c.q as f64);
            let direct = exact_err(alpha, c.p, c.q);
            // float α carries ~q·ulp absolute error
            assert!((c.err - direct).abs() < c.q as f64 * 2e-16 + 1e-15);
        }

        let (alpha, cs) = liouville_like(&[2]).unwrap();
        assert_eq!((cs[0].p, cs[0].q), (1, 2));
        assert!(alpha > 0.0 && alpha < 0.5);
    }

    #[test]
    fn liouville_overflow_reported() {
        let growth = vec![u64::MAX / 2; 4];
        assert!(matches!(
            liouville_like(&growth),
            Err(Error::IntegerOverflow { .. })
        ));
    }

    #[test]
    fn frequency_close_returns() {
        let f = Frequency::liouville_demo();
        assert_eq!(
            f.close_return_times(2_000_000).unwrap(),
            vec![1, 11, 1101, 1_101_011, 1_102_112]
        );
        assert!(f.is_close_return(1101).unwrap());
        assert!(!f.is_close_return(1100).unwrap());
        let g = Frequency::golden();
        assert_eq!(
            g.close_return_times(100).unwrap(),
            vec![1, 2, 3, 5, 8, 13, 21, 34, 55, 89]
        );
        assert!((g.value() - GOLDEN).abs() < 1e-16);
    }
}
