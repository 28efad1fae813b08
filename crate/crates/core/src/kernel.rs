//! Smoothing kernels supported on `[-1, 1]`.

use std::fmt;

/// A symmetric kernel with support `[-1, 1]` and cached moments.
#[derive(Clone, Copy)]
pub struct Kernel {
    name: &'static str,
    profile: fn(f64) -> f64,
    moments: KernelMoments,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelMoments {
    /// `∫ K`
    pub mass: f64,
    /// `∫ u² K`
    pub second: f64,
    /// `κ = ∫ K²`
    pub kappa: f64,
}

impl Kernel {
    /// Wraps a kernel profile. `profile` is only ever called on `[-1, 1]`.
    pub fn new(name: &'static str, profile: fn(f64) -> f64) -> Self {
        let moments = KernelMoments {
            mass: simpson(|u| profile(u)),
            second: simpson(|u| u * u * profile(u)),
            kappa: simpson(|u| profile(u).powi(2)),
        };
        Self {
            name,
            profile,
            moments,
        }
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        if u.abs() > 1.0 {
            0.0
        } else {
            (self.profile)(u)
        }
    }

    /// `K_b(x) = K(x / b)`.
    #[inline]
    pub fn scaled(&self, x: f64, b: f64) -> f64 {
        self.eval(x / b)
    }

    pub fn moments(&self) -> KernelMoments {
        self.moments
    }

    pub fn kappa(&self) -> f64 {
        self.moments.kappa
    }
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Kernel")
            .field("name", &self.name)
            .field("moments", &self.moments)
            .finish()
    }
}

impl Default for Kernel {
    fn default() -> Self {
        fourth_order_epanechnikov()
    }
}

/// `K(u) = (15/32)(3 - 10u² + 7u⁴)` on `|u| <= 1`. Integrates to one and has
/// a vanishing second moment; it is negative for `|u| > sqrt(3/7)`.
pub fn fourth_order_epanechnikov() -> Kernel {
    Kernel::new("epanechnikov4", |u| {
        let u2 = u * u;
        15.0 / 32.0 * (3.0 - 10.0 * u2 + 7.0 * u2 * u2)
    })
}

/// Second-order Epanechnikov kernel `0.75 (1 - u²)`.
pub fn epanechnikov() -> Kernel {
    Kernel::new("epanechnikov", |u| 0.75 * (1.0 - u * u))
}

// Composite Simpson on [-1, 1].
fn simpson(f: impl Fn(f64) -> f64) -> f64 {
    const PANELS: usize = 4096;
    let h = 2.0 / PANELS as f64;
    let mut acc = f(-1.0) + f(1.0);
    for k in 1..PANELS {
        let u = -1.0 + k as f64 * h;
        acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(u);
    }
    acc * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_at_zero() {
        assert_eq!(fourth_order_epanechnikov().eval(0.0), 1.40625);
    }

    #[test]
    fn support_and_symmetry() {
        let k = fourth_order_epanechnikov();
        for i in 0..=200 {
            let u = i as f64 / 100.0;
            assert_eq!(k.eval(u), k.eval(-u));
        }
        assert_eq!(k.eval(1.0001), 0.0);
        assert_eq!(k.eval(-3.0), 0.0);
        assert!(k.eval(1.0).abs() < 1e-15);
        assert_eq!(k.scaled(0.05, 0.1), k.eval(0.5));
    }

    #[test]
    fn cached_moments() {
        let m = fourth_order_epanechnikov().moments();
        assert!((m.mass - 1.0).abs() < 1e-10);
        assert!(m.second.abs() < 1e-10);
        assert!((m.kappa - 1.25).abs() < 1e-10);
        let e = epanechnikov().moments();
        assert!((e.mass - 1.0).abs() < 1e-10);
        assert!((e.kappa - 0.6).abs() < 1e-10);
    }
}
