//! Eigenvalues of the squared-exponential integral operator on `S^d`
//! (Lebesgue measure), exact RKHS norms of the hard functions and the
//! degree selection `N_bar`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;
use crate::special::{harmonic_dim, ln_sphere_area};

/// Parameters of `k(x, y) = exp(-||x - y||^2 / theta)` on `S^d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub d: usize,
    pub theta: f64,
}

impl KernelParams {
    pub fn new(d: usize, theta: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::Domain("sphere dimension d must be >= 1".into()));
        }
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(Error::Domain(format!(
                "lengthscale theta must be positive, got {theta}"
            )));
        }
        Ok(Self { d, theta })
    }

    /// Kernel as a function of `t = x . y`: `exp(-2 (1 - t) / theta)`.
    pub fn profile(&self, t: f64) -> f64 {
        (-2.0 * (1.0 - t) / self.theta).exp()
    }
}

/// Where a spectrum's values come from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    /// The analytic lower-bound form with constant `c`.
    AnalyticLowerBound { c: f64 },
    /// Numerical projection integrals with `nodes` Gauss-Legendre nodes.
    Quadrature { nodes: usize },
}

impl Provenance {
    fn label(&self) -> String {
        match self {
            Provenance::AnalyticLowerBound { c } => format!("lower_bound(C={c})"),
            Provenance::Quadrature { nodes } => format!("quadrature({nodes})"),
        }
    }
}

/// Per-degree eigenvalues `lambda_n`, `n = 0..=max_degree`, with
/// multiplicities `N_{n,d+1}`. Values are stored as logarithms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSpectrum {
    pub kp: KernelParams,
    pub ln_lambda: Vec<f64>,
    pub multiplicity: Vec<u64>,
    pub provenance: Provenance,
}

impl EigenSpectrum {
    fn from_ln(kp: KernelParams, ln_lambda: Vec<f64>, provenance: Provenance) -> Result<Self> {
        let multiplicity = (0..ln_lambda.len())
            .map(|n| harmonic_dim(n, kp.d + 1))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            kp,
            ln_lambda,
            multiplicity,
            provenance,
        })
    }

    pub fn max_degree(&self) -> usize {
        self.ln_lambda.len() - 1
    }

    fn check(&self, n: usize) -> Result<()> {
        if n > self.max_degree() {
            Err(Error::SpectrumRange {
                requested: n,
                available: self.max_degree(),
            })
        } else {
            Ok(())
        }
    }

    pub fn ln_lambda(&self, n: usize) -> Result<f64> {
        self.check(n)?;
        Ok(self.ln_lambda[n])
    }

    /// `lambda_n`; may underflow to zero for high degrees, use
    /// [`EigenSpectrum::ln_lambda`] there.
    pub fn lambda(&self, n: usize) -> Result<f64> {
        Ok(self.ln_lambda(n)?.exp())
    }

    pub fn multiplicity(&self, n: usize) -> Result<u64> {
        self.check(n)?;
        Ok(self.multiplicity[n])
    }

    /// `sum_n lambda_n N_{n,d+1}` over the stored degrees.
    pub fn trace(&self) -> f64 {
        self.ln_lambda
            .iter()
            .zip(&self.multiplicity)
            .map(|(l, &m)| l.exp() * m as f64)
            .sum()
    }

    /// CSV with header `degree,lambda,ln_lambda,multiplicity,provenance`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("degree,lambda,ln_lambda,multiplicity,provenance\n");
        let label = self.provenance.label();
        for (n, (l, m)) in self.ln_lambda.iter().zip(&self.multiplicity).enumerate() {
            out.push_str(&format!("{n},{:e},{l},{m},{label}\n", l.exp()));
        }
        out
    }
}

/// `ln` of `(2e/theta)^n C / (2n+d-1)^{n+d/2}`; the base `2n+d-1` is read
/// as 1 when it vanishes (`n = 0`, `d = 1`).
pub fn ln_eigen_lower_bound(n: usize, kp: &KernelParams, c: f64) -> f64 {
    let nf = n as f64;
    let d = kp.d as f64;
    let base = 2.0 * nf + d - 1.0;
    let ln_base = if base > 0.0 { base.ln() } else { 0.0 };
    nf * (2.0 * std::f64::consts::E / kp.theta).ln() + c.ln() - (nf + 0.5 * d) * ln_base
}

/// Lower-bound eigenvalue form, returned as `(value, ln value)`.
pub fn eigen_lower_bound(n: usize, kp: &KernelParams, c: f64) -> Result<(f64, f64)> {
    if !(c > 0.0) {
        return Err(Error::Domain(format!("constant C must be positive, got {c}")));
    }
    let ln = ln_eigen_lower_bound(n, kp, c);
    Ok((ln.exp(), ln))
}

/// Relative tolerance between an `n`-node and a `2n`-node evaluation.
pub const QUAD_CONVERGENCE_TOL: f64 = 1e-8;

/// `ln` of the integral `int_0^pi exp(s cos phi) sin^{2n+d-1} phi dphi`.
fn ln_weighted_integral(rule: &GaussLegendre, s: f64, power: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let pts: Vec<(f64, f64)> = rule
        .mapped(0.0, pi)
        .map(|(phi, w)| {
            let sin = phi.sin();
            let lg = s * phi.cos() + if power > 0.0 { power * sin.ln() } else { 0.0 };
            (lg, w)
        })
        .collect();
    let shift = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = pts.iter().map(|(lg, w)| w * (lg - shift).exp()).sum();
    shift + sum.ln()
}

fn ln_quadrature_with(rule: &GaussLegendre, n: usize, kp: &KernelParams) -> f64 {
    // Rodrigues' formula and n integrations by parts turn the projection
    // integral into one with a positive integrand, so tiny eigenvalues do
    // not suffer from cancellation.
    let s = 2.0 / kp.theta;
    let d = kp.d as f64;
    let nf = n as f64;
    ln_sphere_area(kp.d - 1) - s + nf * (0.5 * s).ln() + ln_gamma(0.5 * d) - ln_gamma(nf + 0.5 * d)
        + ln_weighted_integral(rule, s, 2.0 * nf + d - 1.0)
}

/// `ln lambda_n` by quadrature, checked against a rule with twice the nodes.
pub fn ln_eigen_quadrature(n: usize, kp: &KernelParams, nodes: usize) -> Result<f64> {
    if nodes < 64 {
        return Err(Error::Domain(format!(
            "at least 64 quadrature nodes required, got {nodes}"
        )));
    }
    let coarse = ln_quadrature_with(&GaussLegendre::new(nodes), n, kp);
    let fine = ln_quadrature_with(&GaussLegendre::new(2 * nodes), n, kp);
    check_convergence(n, coarse, fine)?;
    Ok(fine)
}

fn check_convergence(n: usize, coarse: f64, fine: f64) -> Result<()> {
    let rel = (coarse - fine).exp_m1().abs();
    if !fine.is_finite() || !(rel < QUAD_CONVERGENCE_TOL) {
        return Err(Error::Convergence(format!(
            "degree {n}: doubling nodes changed the eigenvalue by {rel:e} relative"
        )));
    }
    Ok(())
}

/// `lambda_n` by quadrature.
pub fn eigen_quadrature(n: usize, kp: &KernelParams, nodes: usize) -> Result<f64> {
    Ok(ln_eigen_quadrature(n, kp, nodes)?.exp())
}

/// Default node count for spectra.
pub const DEFAULT_NODES: usize = 256;

/// Quadrature spectrum for degrees `0..=max_degree`.
pub fn quadrature_spectrum(kp: KernelParams, max_degree: usize, nodes: usize) -> Result<EigenSpectrum> {
    if nodes < 64 {
        return Err(Error::Domain(format!(
            "at least 64 quadrature nodes required, got {nodes}"
        )));
    }
    let coarse = GaussLegendre::new(nodes);
    let fine = GaussLegendre::new(2 * nodes);
    let ln = (0..=max_degree)
        .map(|n| {
            let a = ln_quadrature_with(&coarse, n, &kp);
            let b = ln_quadrature_with(&fine, n, &kp);
            check_convergence(n, a, b).map(|_| b)
        })
        .collect::<Result<Vec<_>>>()?;
    EigenSpectrum::from_ln(kp, ln, Provenance::Quadrature { nodes })
}

/// Spectrum made of the analytic lower-bound form with constant `c`.
pub fn lower_bound_spectrum(kp: KernelParams, max_degree: usize, c: f64) -> Result<EigenSpectrum> {
    if !(c > 0.0) {
        return Err(Error::Domain(format!("constant C must be positive, got {c}")));
    }
    let ln = (0..=max_degree).map(|n| ln_eigen_lower_bound(n, &kp, c)).collect();
    EigenSpectrum::from_ln(kp, ln, Provenance::AnalyticLowerBound { c })
}

/// `C* = min_{n <= upto} lambda_n / lower_bound(n, C = 1)`.
pub fn fitted_lower_bound_constant(spectrum: &EigenSpectrum, upto: usize) -> Result<f64> {
    let upto = upto.min(spectrum.max_degree());
    let ln = (0..=upto)
        .map(|n| spectrum.ln_lambda[n] - ln_eigen_lower_bound(n, &spectrum.kp, 1.0))
        .fold(f64::INFINITY, f64::min);
    Ok(ln.exp())
}

fn log_sum_exp(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `ln b_{N,z}(z) = ln( sum_{n<=N} N_{n,d+1} / |S^d| )`.
pub fn ln_peak_value(n: usize, d: usize) -> Result<f64> {
    let total: f64 = (0..=n)
        .map(|k| harmonic_dim(k, d + 1).map(|m| m as f64))
        .sum::<Result<f64>>()?;
    Ok(total.ln() - ln_sphere_area(d))
}

/// `ln ||f_{eps,N,z}||_H`; independent of the center.
pub fn ln_rkhs_norm_hard(eps: f64, n: usize, spectrum: &EigenSpectrum) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("eps must be positive, got {eps}")));
    }
    spectrum.check(n)?;
    let d = spectrum.kp.d;
    let ln_area = ln_sphere_area(d);
    let ln_sum = log_sum_exp((0..=n).map(|k| (spectrum.multiplicity[k] as f64).ln() - ln_area - spectrum.ln_lambda[k]));
    Ok((2.0 * eps).ln() - ln_peak_value(n, d)? + 0.5 * ln_sum)
}

/// RKHS norm of the hard function with parameters `(eps, N)`:
/// `(2 eps / b_N(z)) sqrt(sum_{n<=N} N_{n,d+1} / (|S^d| lambda_n))`.
pub fn rkhs_norm_hard(eps: f64, n: usize, spectrum: &EigenSpectrum) -> Result<f64> {
    Ok(ln_rkhs_norm_hard(eps, n, spectrum)?.exp())
}

/// Largest `N >= 1` whose hard function has RKHS norm at most `b`.
///
/// The norm is not monotone for the first few degrees, so every degree of
/// the spectrum is scanned.
pub fn select_n_bar(eps: f64, b: f64, spectrum: &EigenSpectrum) -> Result<usize> {
    if !(b > 0.0) {
        return Err(Error::Domain(format!("budget B must be positive, got {b}")));
    }
    let ln_b = b.ln();
    let mut best = None;
    for n in 0..=spectrum.max_degree() {
        if ln_rkhs_norm_hard(eps, n, spectrum)? <= ln_b {
            best = Some(n);
        }
    }
    match best {
        Some(n) if n == spectrum.max_degree() => Err(Error::SpectrumRange {
            requested: n + 1,
            available: n,
        }),
        Some(n) if n >= 1 => Ok(n),
        _ => Err(Error::Range(format!(
            "eps/B not sufficiently small (eps = {eps}, B = {b})"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::{legendre_sphere, sphere_area};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn circle() -> KernelParams {
        KernelParams::new(1, 1.0).unwrap()
    }

    /// `2 pi e^{-s} I_n(s)` via the power series of the modified Bessel function.
    fn circle_closed_form(n: usize, theta: f64) -> f64 {
        let s = 2.0 / theta;
        let mut term = (0.5 * s).powi(n as i32) / (1..=n).map(|k| k as f64).product::<f64>();
        let mut sum = 0.0;
        for k in 0..200 {
            sum += term;
            term *= (0.25 * s * s) / ((k + 1) as f64 * (n + k + 1) as f64);
        }
        2.0 * PI * (-s).exp() * sum
    }

    /// Direct projection integral with composite Simpson in the angle.
    fn naive_projection(n: usize, kp: &KernelParams) -> f64 {
        let m = 20_000;
        let h = PI / m as f64;
        let d = kp.d as f64;
        let f = |phi: f64| {
            let t = phi.cos();
            kp.profile(t) * legendre_sphere(n, kp.d + 1, t).unwrap() * phi.sin().powf(d - 1.0)
        };
        let mut acc = f(0.0) + f(PI);
        for i in 1..m {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
        }
        sphere_area(kp.d - 1) * acc * h / 3.0
    }

    #[test]
    fn kernel_params_validation() {
        assert!(KernelParams::new(0, 1.0).is_err());
        assert!(KernelParams::new(1, 0.0).is_err());
        assert!(KernelParams::new(1, f64::NAN).is_err());
    }

    #[test]
    fn lower_bound_at_zero_degree() {
        let (v, ln) = eigen_lower_bound(0, &circle(), 2.5).unwrap();
        assert_relative_eq!(v, 2.5);
        assert_relative_eq!(ln, 2.5f64.ln());
        let kp3 = KernelParams::new(3, 1.0).unwrap();
        assert_relative_eq!(
            eigen_lower_bound(0, &kp3, 1.0).unwrap().0,
            1.0 / 2f64.powf(1.5),
            epsilon = 1e-14
        );
        assert!(eigen_lower_bound(3, &kp3, 0.0).is_err());
    }

    #[test]
    fn lower_bound_ratio() {
        let kp = KernelParams::new(2, 0.7).unwrap();
        for n in 0..60 {
            let r = (ln_eigen_lower_bound(n + 1, &kp, 1.0) - ln_eigen_lower_bound(n, &kp, 1.0)).exp();
            let (nf, d) = (n as f64, 2.0);
            let expected = (2.0 * std::f64::consts::E / 0.7) * (2.0 * nf + d - 1.0).powf(nf + d / 2.0)
                / (2.0 * nf + d + 1.0).powf(nf + 1.0 + d / 2.0);
            assert_relative_eq!(r, expected, max_relative = 1e-10);
        }
    }

    #[test]
    fn lower_bound_log_ratio_approaches_one_slowly() {
        let kp = circle();
        let ratio = |n: usize| ln_eigen_lower_bound(n, &kp, 1.0) / (-(n as f64) * (n as f64).ln());
        let mut prev = ratio(40);
        assert!(prev > 0.7 && prev < 1.0);
        for n in [80, 1_000, 100_000, 10_000_000] {
            let r = ratio(n);
            assert!(r > prev && r < 1.0);
            prev = r;
        }
        assert!(prev > 0.93);
    }

    #[test]
    fn circle_matches_bessel_closed_form() {
        for &theta in &[0.5, 1.0, 3.0] {
            let kp = KernelParams::new(1, theta).unwrap();
            for n in 0..30 {
                let q = eigen_quadrature(n, &kp, 128).unwrap();
                assert_relative_eq!(q, circle_closed_form(n, theta), max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn quadrature_matches_naive_projection() {
        for d in 1..=4 {
            let kp = KernelParams::new(d, 1.0).unwrap();
            for n in 0..6 {
                let q = eigen_quadrature(n, &kp, 128).unwrap();
                let naive = naive_projection(n, &kp);
                assert!((q - naive).abs() < 1e-7 * q.max(1e-3), "d={d} n={n}: {q} vs {naive}");
            }
        }
    }

    #[test]
    fn quadrature_rejects_few_nodes() {
        assert!(eigen_quadrature(3, &circle(), 32).is_err());
    }

    #[test]
    fn trace_identity() {
        for d in 1..=3 {
            let spec = quadrature_spectrum(KernelParams::new(d, 1.0).unwrap(), 60, DEFAULT_NODES).unwrap();
            assert!((spec.trace() - sphere_area(d)).abs() < 1e-6, "d={d}");
        }
    }

    #[test]
    fn mercer_reconstruction() {
        for d in 1..=2 {
            let kp = KernelParams::new(d, 1.0).unwrap();
            let spec = quadrature_spectrum(kp, 60, DEFAULT_NODES).unwrap();
            for i in 0..=50 {
                let t = (PI * i as f64 / 50.0).cos();
                let approx: f64 = (0..=60)
                    .map(|n| {
                        spec.lambda(n).unwrap() * spec.multiplicity[n] as f64 / sphere_area(d)
                            * legendre_sphere(n, d + 1, t).unwrap()
                    })
                    .sum();
                assert!((approx - kp.profile(t)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn fitted_constant_gives_valid_bound() {
        let spec = quadrature_spectrum(circle(), 40, DEFAULT_NODES).unwrap();
        let c = fitted_lower_bound_constant(&spec, 30).unwrap();
        for n in 0..=30 {
            assert!(spec.ln_lambda[n] >= ln_eigen_lower_bound(n, &spec.kp, c) - 1e-12);
        }
    }

    #[test]
    fn norm_of_constant_function() {
        let spec = quadrature_spectrum(circle(), 10, DEFAULT_NODES).unwrap();
        let eps = 0.01;
        let expected = 2.0 * eps * (2.0 * PI / spec.lambda(0).unwrap()).sqrt();
        assert_relative_eq!(rkhs_norm_hard(eps, 0, &spec).unwrap(), expected, max_relative = 1e-12);
        assert_relative_eq!(
            rkhs_norm_hard(2.0 * eps, 7, &spec).unwrap(),
            2.0 * rkhs_norm_hard(eps, 7, &spec).unwrap(),
            max_relative = 1e-12
        );
        assert!(matches!(
            rkhs_norm_hard(eps, 11, &spec),
            Err(Error::SpectrumRange { .. })
        ));
    }

    #[test]
    fn norm_upper_bound() {
        for d in 1..=3 {
            let spec = quadrature_spectrum(KernelParams::new(d, 1.0).unwrap(), 40, DEFAULT_NODES).unwrap();
            let area = sphere_area(d);
            for n in 0..=40 {
                let bound = 2.0 * 1e-3 * (area / spec.lambda(n).unwrap()).sqrt();
                assert!(rkhs_norm_hard(1e-3, n, &spec).unwrap() <= bound * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn n_bar_selection() {
        let spec = quadrature_spectrum(circle(), 80, DEFAULT_NODES).unwrap();
        let mut prev = 0;
        for &eps in &[1e-3, 1e-5, 1e-8, 1e-12] {
            let n = select_n_bar(eps, 1.0, &spec).unwrap();
            assert!(rkhs_norm_hard(eps, n, &spec).unwrap() <= 1.0);
            assert!(rkhs_norm_hard(eps, n + 1, &spec).unwrap() > 1.0);
            assert!(n >= prev);
            prev = n;
        }
        assert!(matches!(select_n_bar(1.0, 1.0, &spec), Err(Error::Range(_))));
        let short = quadrature_spectrum(circle(), 5, DEFAULT_NODES).unwrap();
        assert!(matches!(
            select_n_bar(1e-12, 1.0, &short),
            Err(Error::SpectrumRange { .. })
        ));
    }

    #[test]
    fn spectrum_csv_and_json() {
        let spec = quadrature_spectrum(circle(), 3, 64).unwrap();
        let csv = spec.to_csv();
        assert!(csv.starts_with("degree,lambda,ln_lambda,multiplicity,provenance\n"));
        assert_eq!(csv.lines().count(), 5);
        let json = serde_json::to_string(&spec).unwrap();
        let back: EigenSpectrum = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
    }
}
