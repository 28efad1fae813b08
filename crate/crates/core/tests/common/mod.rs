//! Reference computations shared by the oracle tests and the acceptance run.
#![allow(dead_code)]

use rand::Rng;
use tvcorr::inference::ThresholdRule;

/// Fourth-order Epanechnikov kernel, written out independently of the library.
pub fn k4(u: f64) -> f64 {
    if u.abs() <= 1.0 {
        15.0 / 32.0 * (3.0 - 10.0 * u * u + 7.0 * u.powi(4))
    } else {
        0.0
    }
}

/// Weighted least squares `min Σ w (z - a - c d)²` via the 2x2 normal
/// equations, solved by Cramer's rule.
pub fn wls_intercept(z: &[f64], d: &[f64], w: &[f64]) -> (f64, f64) {
    let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for k in 0..z.len() {
        a11 += w[k];
        a12 += w[k] * d[k];
        a22 += w[k] * d[k] * d[k];
        b1 += w[k] * z[k];
        b2 += w[k] * d[k] * z[k];
    }
    let det = a11 * a22 - a12 * a12;
    ((a22 * b1 - a12 * b2) / det, (a11 * b2 - a12 * b1) / det)
}

/// A random local-linear problem and its reference solution.
pub struct FitCase {
    pub z: Vec<f64>,
    pub times: Vec<f64>,
    pub t: f64,
    pub b: f64,
    pub expect: (f64, f64),
}

pub fn random_fit_case(r: &mut impl Rng) -> FitCase {
    let len = r.random_range(20..200);
    let mut times: Vec<f64> = (0..len).map(|_| r.random::<f64>()).collect();
    times.sort_by(f64::total_cmp);
    let z: Vec<f64> = times.iter().map(|t| (5.0 * t).sin() + r.random::<f64>() - 0.5).collect();
    let t = r.random_range(0.2..0.8);
    let b = r.random_range(0.15..0.4);
    let (mut zs, mut ds, mut ws) = (Vec::new(), Vec::new(), Vec::new());
    for (zj, tj) in z.iter().zip(&times) {
        let u = (tj - t) / b;
        if u.abs() < 1.0 {
            zs.push(*zj);
            ds.push(tj - t);
            ws.push(k4(u));
        }
    }
    let expect = wls_intercept(&zs, &ds, &ws);
    FitCase { z, times, t, b, expect }
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

/// Composite Simpson rule on [-1, 1].
pub fn simpson(f: impl Fn(f64) -> f64) -> f64 {
    let panels = 20_000;
    let h = 2.0 / panels as f64;
    let mut s = f(-1.0) + f(1.0);
    for k in 1..panels {
        let x = -1.0 + k as f64 * h;
        s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    s * h / 3.0
}

/// `R = max{r : #{P <= Δ(r)} >= r}` by scanning every `r`, then every `P <= Δ(R)`.
pub fn step_up_oracle(p: &[f64], rule: &ThresholdRule) -> Vec<usize> {
    let m = p.len();
    let mut r_max = 0;
    for r in 1..=m {
        let below = p.iter().filter(|&&v| v <= rule.threshold(r)).count();
        if below >= r {
            r_max = r;
        }
    }
    if r_max == 0 {
        return Vec::new();
    }
    (0..m).filter(|&k| p[k] <= rule.threshold(r_max)).collect()
}

/// P-values on a coarse lattice, with extra mass near zero, so ties are common.
pub fn tied_pvalues(r: &mut impl Rng, case: usize) -> Vec<f64> {
    let m = r.random_range(1..=50);
    let levels = [10, 100, 1000][case % 3];
    (0..m)
        .map(|_| {
            if r.random::<f64>() < 0.3 {
                r.random_range(0..=levels / 20) as f64 / levels as f64
            } else {
                r.random_range(0..=levels) as f64 / levels as f64
            }
        })
        .collect()
}
