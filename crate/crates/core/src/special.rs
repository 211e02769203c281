//! Orthogonal polynomials and combinatorial quantities on the sphere.
//!
//! Everything here is evaluated with forward three-term recurrences in
//! double precision, which are stable on `[-1, 1]` for the Gegenbauer family
//! and on the whole real line for Hermite polynomials. Factorial ratios go
//! through `ln_gamma` so that large degrees never overflow.

use std::f64::consts::PI;

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Inputs within this distance outside `[-1, 1]` are clipped to the boundary.
pub const BOUNDARY_TOL: f64 = 1e-12;

fn clip_unit(t: f64) -> Result<f64> {
    if !t.is_finite() || t.abs() > 1.0 + BOUNDARY_TOL {
        return Err(Error::Domain(format!("argument {t} outside [-1, 1]")));
    }
    Ok(t.clamp(-1.0, 1.0))
}

/// A Gegenbauer polynomial `C_n^(eta)` with validated parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GegenbauerIndex {
    pub eta: f64,
    pub n: usize,
}

impl GegenbauerIndex {
    pub fn new(eta: f64, n: usize) -> Result<Self> {
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::Domain(format!("Gegenbauer parameter eta = {eta} must be > 0")));
        }
        Ok(Self { eta, n })
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        gegenbauer(self.n, self.eta, t)
    }

    /// `C_n^(eta)(1) = Gamma(n + 2 eta) / (n! Gamma(2 eta))`.
    pub fn value_at_one(&self) -> f64 {
        let n = self.n as f64;
        (ln_gamma(n + 2.0 * self.eta) - ln_gamma(n + 1.0) - ln_gamma(2.0 * self.eta)).exp()
    }
}

/// Returns `[C_0, ..., C_n]` at `t`. Inputs are assumed already validated.
fn gegenbauer_table(n: usize, eta: f64, t: f64) -> Vec<f64> {
    let mut c = Vec::with_capacity(n + 1);
    c.push(1.0);
    if n == 0 {
        return c;
    }
    c.push(2.0 * eta * t);
    for k in 2..=n {
        let kf = k as f64;
        let next = (2.0 * t * (kf + eta - 1.0) * c[k - 1] - (kf + 2.0 * eta - 2.0) * c[k - 2]) / kf;
        c.push(next);
    }
    c
}

/// Gegenbauer (ultraspherical) polynomial `C_n^(eta)(t)`.
pub fn gegenbauer(n: usize, eta: f64, t: f64) -> Result<f64> {
    GegenbauerIndex::new(eta, n)?;
    let t = clip_unit(t)?;
    Ok(gegenbauer_table(n, eta, t)[n])
}

/// `(C_n^(eta)(t), C_{n-1}^(eta)(t))` from a single recurrence pass, with
/// `C_{-1} = 0`.
pub fn gegenbauer_pair(n: usize, eta: f64, t: f64) -> Result<(f64, f64)> {
    GegenbauerIndex::new(eta, n)?;
    let t = clip_unit(t)?;
    let table = gegenbauer_table(n, eta, t);
    let prev = if n == 0 { 0.0 } else { table[n - 1] };
    Ok((table[n], prev))
}

/// Legendre polynomial of the sphere, `P_{n,d+1}`, normalized so that
/// `P_{n,d+1}(1) = 1`. For `dplus1 = 2` this is `cos(n arccos t)`.
pub fn legendre_sphere(n: usize, dplus1: usize, t: f64) -> Result<f64> {
    Ok(legendre_sphere_table(n, dplus1, t)?[n])
}

/// `[P_{0,d+1}(t), ..., P_{n,d+1}(t)]` via
/// `(k + D - 2) P_{k+1} = (2k + D - 2) t P_k - k P_{k-1}` with `D = d + 1`.
pub fn legendre_sphere_table(n: usize, dplus1: usize, t: f64) -> Result<Vec<f64>> {
    if dplus1 < 2 {
        return Err(Error::Domain(format!("ambient dimension {dplus1} must be >= 2")));
    }
    let t = clip_unit(t)?;
    let dim = dplus1 as f64;
    let mut p = Vec::with_capacity(n + 1);
    p.push(1.0);
    if n == 0 {
        return Ok(p);
    }
    p.push(t);
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + dim - 2.0) * t * p[k] - kf * p[k - 1]) / (kf + dim - 2.0);
        p.push(next);
    }
    Ok(p)
}

/// Dirichlet kernel `1 + 2 sum_{k=1}^{n} cos(k t) = sin((n + 1/2) t) / sin(t / 2)`,
/// extended by continuity to `1 + 2n` at `t = 0`.
pub fn dirichlet(n: usize, t: f64) -> Result<f64> {
    if !t.is_finite() || !(0.0..=PI + BOUNDARY_TOL).contains(&t) {
        return Err(Error::Domain(format!("Dirichlet kernel argument {t} outside [0, pi]")));
    }
    if t == 0.0 {
        return Ok(1.0 + 2.0 * n as f64);
    }
    let t = t.min(PI);
    Ok(((n as f64 + 0.5) * t).sin() / (0.5 * t).sin())
}

fn binomial_u128(n: u128, k: u128) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1) at every step
        acc = acc.checked_mul(n - i)? / (i + 1);
    }
    Some(acc)
}

/// Dimension `N_{n,d+1}` of the degree-`n` spherical harmonics on `S^d`,
/// `(2n + d - 1)(n + d - 2)! / (n! (d - 1)!)`, in exact integer arithmetic.
pub fn harmonic_dim(n: usize, dplus1: usize) -> Result<u64> {
    if dplus1 < 2 {
        return Err(Error::Domain(format!("ambient dimension {dplus1} must be >= 2")));
    }
    let d = (dplus1 - 1) as u128;
    let n = n as u128;
    if d == 1 {
        return Ok(if n == 0 { 1 } else { 2 });
    }
    let overflow = || Error::Overflow(format!("N_{{{n},{dplus1}}} exceeds 64-bit range"));
    // (n + d - 2)! / (n! (d - 2)!) = binom(n + d - 2, n)
    let binom = binomial_u128(n + d - 2, n).ok_or_else(overflow)?;
    let numer = (2 * n + d - 1).checked_mul(binom).ok_or_else(overflow)?;
    u64::try_from(numer / (d - 1)).map_err(|_| overflow())
}

/// Surface area `|S^d| = 2 pi^{(d+1)/2} / Gamma((d+1)/2)`. Also valid for
/// `d = 0`, where it counts the two points of `S^0`.
pub fn sphere_area(d: usize) -> f64 {
    ln_sphere_area(d).exp()
}

pub fn ln_sphere_area(d: usize) -> f64 {
    let h = (d as f64 + 1.0) / 2.0;
    std::f64::consts::LN_2 + h * PI.ln() - ln_gamma(h)
}

/// Physicists' Hermite polynomial `H_n(x)`.
pub fn hermite(n: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (0.0, 1.0);
    for k in 0..n {
        let next = 2.0 * x * cur - 2.0 * k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Natural log of `n!`.
pub fn ln_factorial(n: usize) -> f64 {
    ln_gamma(n as f64 + 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gegenbauer_small_cases() {
        assert_eq!(gegenbauer(0, 1.0, 0.37).unwrap(), 1.0);
        assert_relative_eq!(gegenbauer(2, 1.0, 1.0).unwrap(), 3.0, epsilon = 1e-14);
        let a = gegenbauer(3, 1.5, -0.4).unwrap();
        let b = gegenbauer(3, 1.5, 0.4).unwrap();
        assert_relative_eq!(a, -b, epsilon = 1e-14);
    }

    #[test]
    fn gegenbauer_rejects_bad_inputs() {
        assert!(matches!(gegenbauer(2, 0.0, 0.1), Err(Error::Domain(_))));
        assert!(matches!(gegenbauer(2, -1.0, 0.1), Err(Error::Domain(_))));
        assert!(matches!(gegenbauer(2, 1.0, 1.0 + 1e-9), Err(Error::Domain(_))));
        // roundoff just outside the interval is clipped
        let v = gegenbauer(4, 1.0, 1.0 + 1e-13).unwrap();
        assert_relative_eq!(v, 5.0, epsilon = 1e-12);
    }

    #[test]
    fn value_at_one_matches_recurrence() {
        for &eta in &[0.5, 1.0, 1.5, 2.0, 3.0] {
            for n in 0..30 {
                let idx = GegenbauerIndex::new(eta, n).unwrap();
                assert_relative_eq!(idx.value_at_one(), idx.eval(1.0).unwrap(), max_relative = 1e-11);
            }
        }
    }

    #[test]
    fn gegenbauer_pair_handles_degree_zero() {
        assert_eq!(gegenbauer_pair(0, 1.0, 0.3).unwrap(), (1.0, 0.0));
        let (c3, c2) = gegenbauer_pair(3, 1.0, 0.3).unwrap();
        assert_relative_eq!(c3, gegenbauer(3, 1.0, 0.3).unwrap());
        assert_relative_eq!(c2, gegenbauer(2, 1.0, 0.3).unwrap());
    }

    #[test]
    fn legendre_circle_is_chebyshev() {
        let t = 0.3_f64.cos();
        assert_relative_eq!(legendre_sphere(4, 2, t).unwrap(), 1.2_f64.cos(), epsilon = 1e-13);
        assert_relative_eq!(legendre_sphere(7, 4, 1.0).unwrap(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn legendre_explicit_two_term_sum() {
        // P_{2,3}(t) = 2! Gamma(3/2) [ t^2 / (2! Gamma(3/2)) - (1 - t^2) / (4 Gamma(5/2)) ]
        //           = t^2 - (1 - t^2) / 2 = (3 t^2 - 1) / 2
        for &t in &[0.0, 0.25, -0.6, 0.9] {
            let expected = (3.0 * t * t - 1.0) / 2.0;
            assert_relative_eq!(legendre_sphere(2, 3, t).unwrap(), expected, epsilon = 1e-15);
        }
        assert_relative_eq!(legendre_sphere(2, 3, 0.0).unwrap(), -0.5, epsilon = 1e-15);
    }

    #[test]
    fn legendre_rejects_circle_dimension_one() {
        assert!(legendre_sphere(2, 1, 0.0).is_err());
        assert!(legendre_sphere(2, 3, -1.5).is_err());
    }

    #[test]
    fn dirichlet_values() {
        assert_eq!(dirichlet(3, 0.0).unwrap(), 7.0);
        assert_relative_eq!(dirichlet(3, 1e-9).unwrap(), 7.0, epsilon = 1e-9);
        assert_relative_eq!(dirichlet(1, PI).unwrap(), -1.0, epsilon = 1e-14);
        let brute: f64 = 1.0 + 2.0 * (1..=10).map(|k| (k as f64 * 0.5).cos()).sum::<f64>();
        assert_relative_eq!(dirichlet(10, 0.5).unwrap(), brute, epsilon = 1e-12);
        assert!(dirichlet(2, -0.1).is_err());
        assert!(dirichlet(2, 4.0).is_err());
    }

    #[test]
    fn harmonic_dim_known_values() {
        assert_eq!(harmonic_dim(0, 2).unwrap(), 1);
        assert_eq!(harmonic_dim(3, 2).unwrap(), 2);
        assert_eq!(harmonic_dim(2, 3).unwrap(), 5);
        assert_eq!(harmonic_dim(0, 5).unwrap(), 1);
        assert_eq!(harmonic_dim(1, 5).unwrap(), 5);
        assert!(harmonic_dim(1, 1).is_err());
    }

    #[test]
    fn harmonic_dim_overflow_is_reported() {
        assert!(matches!(harmonic_dim(100_000, 40), Err(Error::Overflow(_))));
    }

    #[test]
    fn harmonic_dim_cumulative_identity() {
        for dplus1 in 2..7 {
            let mut acc = 0u64;
            for n in 0..40 {
                acc += harmonic_dim(n, dplus1).unwrap();
                assert_eq!(acc, harmonic_dim(n, dplus1 + 1).unwrap(), "n={n} D={dplus1}");
            }
        }
    }

    #[test]
    fn sphere_areas() {
        assert_relative_eq!(sphere_area(0), 2.0, epsilon = 1e-14);
        assert_relative_eq!(sphere_area(1), 2.0 * PI, epsilon = 1e-13);
        assert_relative_eq!(sphere_area(2), 4.0 * PI, epsilon = 1e-13);
        assert_relative_eq!(sphere_area(3), 2.0 * PI * PI, epsilon = 1e-12);
    }

    #[test]
    fn hermite_values() {
        assert_eq!(hermite(3, 0.0), 0.0);
        assert_eq!(hermite(0, 1.7), 1.0);
        assert_eq!(hermite(1, 1.7), 3.4);
        // H_4(x) = 16x^4 - 48x^2 + 12
        let x: f64 = 0.5;
        assert_relative_eq!(hermite(4, x), 16.0 * x.powi(4) - 48.0 * x * x + 12.0, epsilon = 1e-12);
        for n in (1..20).step_by(2) {
            assert_eq!(hermite(n, 0.0), 0.0);
        }
    }
}
