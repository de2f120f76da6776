//! The quasi-periodic environment: a zero-mean trigonometric polynomial
//! `f`, the jump probability `p = e^f / (1 + e^f)`, Birkhoff sums along the
//! rotation and the Denjoy–Koksma bound.

use std::f64::consts::TAU;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measure::reduce;
use crate::rotation::Frequency;

/// Sample count for the ellipticity bounds.
const ELLIPTICITY_SAMPLES: usize = 4096;

/// `f(x) = Σ a_k cos(2πkx) + b_k sin(2πkx)`, no constant term.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigPolynomial {
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl TrigPolynomial {
    /// Coefficient lists are padded with zeros to a common degree.
    pub fn new(cos: Vec<f64>, sin: Vec<f64>) -> Result<Self> {
        if cos.iter().chain(&sin).any(|c| !c.is_finite()) {
            return Err(Error::Domain(
                "trigonometric coefficients must be finite".into(),
            ));
        }
        let degree = cos.len().max(sin.len());
        let mut cos = cos;
        let mut sin = sin;
        cos.resize(degree, 0.0);
        sin.resize(degree, 0.0);
        Ok(TrigPolynomial { cos, sin })
    }

    pub fn zero() -> Self {
        TrigPolynomial {
            cos: Vec::new(),
            sin: Vec::new(),
        }
    }

    /// `amplitude · cos(2πkx)`
    pub fn cosine(k: usize, amplitude: f64) -> Self {
        let mut cos = vec![0.0; k];
        cos[k - 1] = amplitude;
        TrigPolynomial::new(cos, Vec::new()).expect("finite")
    }

    pub fn degree(&self) -> usize {
        self.cos.len()
    }

    pub fn cos_coefficients(&self) -> &[f64] {
        &self.cos
    }

    pub fn sin_coefficients(&self) -> &[f64] {
        &self.sin
    }

    pub fn is_zero(&self) -> bool {
        self.cos.iter().chain(&self.sin).all(|&c| c == 0.0)
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for (k, (a, b)) in self.cos.iter().zip(&self.sin).enumerate() {
            let arg = TAU * (k + 1) as f64 * x;
            if *a != 0.0 {
                acc += a * arg.cos();
            }
            if *b != 0.0 {
                acc += b * arg.sin();
            }
        }
        acc
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for (k, (a, b)) in self.cos.iter().zip(&self.sin).enumerate() {
            let w = TAU * (k + 1) as f64;
            let arg = w * x;
            acc += w * (b * arg.cos() - a * arg.sin());
        }
        acc
    }

    /// Upper bound on `sup |f'|`.
    pub fn lipschitz_bound(&self) -> f64 {
        self.cos
            .iter()
            .zip(&self.sin)
            .enumerate()
            .map(|(k, (a, b))| TAU * (k + 1) as f64 * a.hypot(*b))
            .sum()
    }
}

/// `∫₀¹ |f'(x)| dx` by adaptive Simpson quadrature, relative tolerance 1e-8.
pub fn total_variation(f: &TrigPolynomial) -> f64 {
    if f.is_zero() {
        return 0.0;
    }
    let g = |x: f64| f.derivative(x).abs();
    let panels = 16 * (f.degree() + 1);
    // |f'| ≤ L, and var ≥ the largest single-harmonic oscillation scale
    let scale = f.lipschitz_bound().max(f64::MIN_POSITIVE);
    let tol = 1e-10 * scale / panels as f64;
    (0..panels)
        .map(|i| {
            let a = i as f64 / panels as f64;
            let b = (i + 1) as f64 / panels as f64;
            let fa = g(a);
            let fb = g(b);
            let m = 0.5 * (a + b);
            let fm = g(m);
            let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
            adaptive_simpson(&g, a, b, fa, fm, fb, whole, tol, 48)
        })
        .sum()
}

#[allow(clippy::too_many_arguments)]
fn adaptive_simpson(
    g: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = g(lm);
    let frm = g(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        adaptive_simpson(g, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + adaptive_simpson(g, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

#[inline]
fn logistic(f: f64) -> f64 {
    1.0 / (1.0 + (-f).exp())
}

/// Frequency together with the log-odds function of the jump probability.
#[derive(Debug, Clone)]
pub struct Environment {
    f: TrigPolynomial,
    alpha: Frequency,
    drift: f64,
    pmin: f64,
    pmax: f64,
}

impl Environment {
    pub fn new(f: TrigPolynomial, alpha: Frequency) -> Self {
        Environment::with_drift(f, alpha, 0.0)
    }

    /// Asymmetric comparison environment with log-odds `f + drift`.
    pub fn with_drift(f: TrigPolynomial, alpha: Frequency, drift: f64) -> Self {
        let mut fmin = f64::INFINITY;
        let mut fmax = f64::NEG_INFINITY;
        for i in 0..ELLIPTICITY_SAMPLES {
            let v = f.eval(i as f64 / ELLIPTICITY_SAMPLES as f64);
            fmin = fmin.min(v);
            fmax = fmax.max(v);
        }
        // any point is within half a sample spacing of a sample
        let slack = f.lipschitz_bound() * 0.5 / ELLIPTICITY_SAMPLES as f64;
        let pmin = logistic(fmin + drift - slack);
        let pmax = logistic(fmax + drift + slack);
        Environment {
            f,
            alpha,
            drift,
            pmin,
            pmax,
        }
    }

    /// `f = cos 2πx` with the golden frequency.
    pub fn reference() -> Self {
        Environment::new(TrigPolynomial::cosine(1, 1.0), Frequency::golden())
    }

    pub fn f(&self) -> &TrigPolynomial {
        &self.f
    }

    pub fn frequency(&self) -> &Frequency {
        &self.alpha
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.value()
    }

    pub fn drift(&self) -> f64 {
        self.drift
    }

    pub fn is_symmetric(&self) -> bool {
        self.drift == 0.0
    }

    /// Certified lower bound of `p` over the circle.
    pub fn pmin(&self) -> f64 {
        self.pmin
    }

    /// Certified upper bound of `p` over the circle.
    pub fn pmax(&self) -> f64 {
        self.pmax
    }

    /// Lower bound `2·pmin·(1 − pmax)` on the holding probability of the
    /// two-step chain.
    pub fn ellipticity(&self) -> f64 {
        2.0 * self.pmin * (1.0 - self.pmax)
    }

    #[inline]
    pub fn eval_f(&self, x: f64) -> f64 {
        self.f.eval(x) + self.drift
    }

    #[inline]
    pub fn eval_p(&self, x: f64) -> f64 {
        logistic(self.eval_f(x))
    }

    #[inline]
    pub fn eval_q(&self, x: f64) -> f64 {
        1.0 - self.eval_p(x)
    }

    /// Point `x + kα` of the orbit.
    #[inline]
    pub fn orbit_point(&self, x: f64, k: i64) -> f64 {
        reduce(x + k as f64 * self.alpha())
    }

    /// `Σ_{j=1}^n f(x + jα)`, reducing the argument after every rotation.
    pub fn birkhoff_sum(&self, x: f64, n: u64) -> f64 {
        let alpha = self.alpha();
        let mut y = reduce(x);
        let mut sum = 0.0;
        for _ in 0..n {
            y = reduce(y + alpha);
            sum += self.eval_f(y);
        }
        sum
    }
}

/// Per-site values of the environment along a window of the orbit.
#[derive(Debug, Clone)]
pub struct Orbit {
    lo: i64,
    f: Vec<f64>,
    p: Vec<f64>,
}

impl Orbit {
    /// Sites `lo..=hi` of the orbit of `x`.
    pub fn new(env: &Environment, x: f64, lo: i64, hi: i64) -> Self {
        assert!(lo <= hi, "empty orbit window");
        let f: Vec<f64> = (lo..=hi)
            .map(|k| env.eval_f(env.orbit_point(x, k)))
            .collect();
        let p = f.iter().map(|&v| logistic(v)).collect();
        Orbit { lo, f, p }
    }

    pub fn symmetric_window(env: &Environment, x: f64, reach: u64) -> Self {
        Orbit::new(env, x, -(reach as i64), reach as i64)
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.lo + self.p.len() as i64 - 1
    }

    pub fn contains(&self, k: i64) -> bool {
        k >= self.lo && k <= self.hi()
    }

    #[inline]
    pub fn p(&self, k: i64) -> f64 {
        self.p[(k - self.lo) as usize]
    }

    #[inline]
    pub fn q(&self, k: i64) -> f64 {
        1.0 - self.p(k)
    }

    /// Log-odds `log(p/q)` at site k.
    #[inline]
    pub fn f(&self, k: i64) -> f64 {
        self.f[(k - self.lo) as usize]
    }
}

#[derive(Debug, Clone)]
pub struct DenjoyKoksmaReport {
    pub q: u64,
    pub variation: f64,
    /// `|S_q f(x)|` per grid point.
    pub sums: Vec<f64>,
    pub max_abs_sum: f64,
    /// Grid points where `|S_q f(x)| ≥ var(f)`.
    pub violations: Vec<f64>,
}

impl DenjoyKoksmaReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Evaluates `|Σ_{j=1}^q f(x + jα)|` on a grid and flags any point where it
/// reaches `var(f)`. `q` must be a close return time of the frequency.
pub fn denjoy_koksma_certificate(
    env: &Environment,
    x_grid: &[f64],
    q: u64,
) -> Result<DenjoyKoksmaReport> {
    if !env.frequency().is_close_return(q)? {
        return Err(Error::NotCloseReturn { q });
    }
    let variation = total_variation(env.f());
    let sums: Vec<f64> = x_grid
        .par_iter()
        .map(|&x| env.birkhoff_sum(x, q).abs())
        .collect();
    let max_abs_sum = sums.iter().copied().fold(0.0, f64::max);
    let violations = x_grid
        .iter()
        .zip(&sums)
        .filter(|(_, &s)| s > 0.0 && s >= variation)
        .map(|(&x, _)| x)
        .collect();
    Ok(DenjoyKoksmaReport {
        q,
        variation,
        sums,
        max_abs_sum,
        violations,
    })
}

/// `n` equally spaced circle points starting at 0.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 / n as f64).collect()
}
