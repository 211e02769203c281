//! Approximated-delta hard functions on `S^d`, the function class built from
//! a separated set of their centers, the numerical checks run on them and
//! the Hermite baseline under a Gaussian measure on the real line.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mercer::{ln_peak_value, rkhs_norm_hard, select_n_bar, EigenSpectrum, KernelParams};
use crate::special::{dirichlet, hermite, legendre_sphere_table, ln_factorial, ln_sphere_area, sphere_area};
use crate::sphere::{
    annulus_index, default_candidate_budget, geodesic, greedy_separated_set, region_distance, region_samples,
    SeparatedSet, SpherePartition, SpherePoint,
};

/// Anything that can be queried as a reward function on the sphere.
pub trait Objective: Send + Sync {
    fn value(&self, x: &SpherePoint) -> f64;
}

impl<F: Fn(&SpherePoint) -> f64 + Send + Sync> Objective for F {
    fn value(&self, x: &SpherePoint) -> f64 {
        self(x)
    }
}

/// `C_N^(eta)(t) + C_{N-1}^(eta)(t)` without allocation. `t` must be in `[-1, 1]`.
fn gegenbauer_pair_sum(n: usize, eta: f64, t: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, 2.0 * eta * t);
    if n == 0 {
        return 1.0;
    }
    for k in 2..=n {
        let kf = k as f64;
        let next = (2.0 * t * (kf + eta - 1.0) * cur - (kf + 2.0 * eta - 2.0) * prev) / kf;
        prev = cur;
        cur = next;
    }
    cur + prev
}

fn check_unit_pair(x: &SpherePoint, z: &SpherePoint) -> Result<()> {
    if x.dim() != z.dim() {
        return Err(Error::Domain(format!("points live on S^{} and S^{}", x.dim(), z.dim())));
    }
    Ok(())
}

/// `b_N` as a function of `t = x . z`:
/// `(C_N^(eta_d+1)(t) + C_{N-1}^(eta_d+1)(t)) / |S^d|`, `eta_d = (d-1)/2`.
pub fn b_profile(t: f64, n: usize, d: usize) -> Result<f64> {
    if d == 0 {
        return Err(Error::Domain("sphere dimension d must be >= 1".into()));
    }
    if !t.is_finite() || t.abs() > 1.0 + crate::special::BOUNDARY_TOL {
        return Err(Error::Domain(format!("argument {t} outside [-1, 1]")));
    }
    let eta = 0.5 * (d as f64 + 1.0);
    Ok(gegenbauer_pair_sum(n, eta, t.clamp(-1.0, 1.0)) / sphere_area(d))
}

/// `b_{N,z}(x)` through the Gegenbauer closed form.
pub fn b_value(x: &SpherePoint, z: &SpherePoint, n: usize, d: usize) -> Result<f64> {
    check_unit_pair(x, z)?;
    b_profile(x.dot(z).clamp(-1.0, 1.0), n, d)
}

/// `b_{N,z}(x)` through the truncated addition-theorem sum
/// `sum_{n<=N} N_{n,d+1} P_{n,d+1}(x . z) / |S^d|`.
pub fn b_value_legendre(x: &SpherePoint, z: &SpherePoint, n: usize, d: usize) -> Result<f64> {
    check_unit_pair(x, z)?;
    let t = x.dot(z).clamp(-1.0, 1.0);
    let p = legendre_sphere_table(n, d + 1, t)?;
    let mut sum = 0.0;
    for (k, pk) in p.iter().enumerate() {
        sum += crate::special::harmonic_dim(k, d + 1)? as f64 * pk;
    }
    Ok(sum / sphere_area(d))
}

/// `b_{N,z}(x)` on the circle through the Dirichlet kernel.
pub fn b_value_dirichlet(x: &SpherePoint, z: &SpherePoint, n: usize) -> Result<f64> {
    check_unit_pair(x, z)?;
    if x.dim() != 1 {
        return Err(Error::Domain("the Dirichlet route exists only on the circle".into()));
    }
    Ok(dirichlet(n, geodesic(x, z))? / (2.0 * std::f64::consts::PI))
}

/// `f_{eps,N,z}(x) = 2 eps b_{N,z}(x) / b_{N,z}(z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardFunction {
    pub center: SpherePoint,
    pub eps: f64,
    pub n: usize,
    pub kp: KernelParams,
    /// `C_N + C_{N-1}` at `t = 1`, evaluated by the same recurrence as
    /// every other point so that `f(z) = 2 eps` holds exactly.
    peak: f64,
}

impl HardFunction {
    pub fn new(center: SpherePoint, eps: f64, n: usize, kp: KernelParams) -> Result<Self> {
        if center.dim() != kp.d {
            return Err(Error::Domain(format!(
                "center lives on S^{}, kernel on S^{}",
                center.dim(),
                kp.d
            )));
        }
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::Domain(format!("eps must be positive, got {eps}")));
        }
        if n == 0 {
            return Err(Error::Domain("degree N must be >= 1".into()));
        }
        let peak = gegenbauer_pair_sum(n, 0.5 * (kp.d as f64 + 1.0), 1.0);
        Ok(Self {
            center,
            eps,
            n,
            kp,
            peak,
        })
    }

    /// Value as a function of `t = x . z`.
    pub fn profile(&self, t: f64) -> f64 {
        let eta = 0.5 * (self.kp.d as f64 + 1.0);
        2.0 * self.eps * gegenbauer_pair_sum(self.n, eta, t.clamp(-1.0, 1.0)) / self.peak
    }

    /// Value at geodesic distance `angle` from the center.
    pub fn at_angle(&self, angle: f64) -> f64 {
        self.profile(angle.cos())
    }

    pub fn evaluate(&self, x: &SpherePoint) -> f64 {
        self.profile(x.dot(&self.center))
    }

    pub fn rkhs_norm(&self, spectrum: &EigenSpectrum) -> Result<f64> {
        rkhs_norm_hard(self.eps, self.n, spectrum)
    }
}

impl Objective for HardFunction {
    fn value(&self, x: &SpherePoint) -> f64 {
        self.evaluate(x)
    }
}

/// Linear combination `sum_k coef_k f_k` of hard functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Combination {
    pub terms: Vec<(f64, HardFunction)>,
}

impl Combination {
    pub fn single(f: HardFunction) -> Self {
        Self { terms: vec![(1.0, f)] }
    }
}

impl Objective for Combination {
    fn value(&self, x: &SpherePoint) -> f64 {
        self.terms.iter().map(|(c, f)| c * f.evaluate(x)).sum()
    }
}

/// Smallest `rho*` such that `|f| <= eps` at every grid angle in
/// `[rho*, pi - rho*]`. The grid crossing is refined by bisection.
pub fn measure_width(f: &HardFunction, grid: usize) -> Result<f64> {
    if grid < 1000 {
        return Err(Error::Domain(format!(
            "width grid needs at least 1000 points, got {grid}"
        )));
    }
    let pi = std::f64::consts::PI;
    let h = pi / grid as f64;
    let exceeds = |a: f64| f.at_angle(a).abs() > f.eps;
    // innermost violating grid angle measured from the nearer pole
    let mut worst: Option<(f64, f64)> = None;
    for k in 0..=grid {
        let a = k as f64 * h;
        if exceeds(a) {
            let r = a.min(pi - a);
            if worst.is_none_or(|(w, _)| r > w) {
                worst = Some((r, a));
            }
        }
    }
    let Some((r, a)) = worst else { return Ok(0.0) };
    // step toward the equator from the violating angle
    let toward = if a <= 0.5 * pi { h } else { -h };
    let (mut lo, mut hi) = (a, a + toward);
    if exceeds(hi) {
        return Ok(r + h);
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if exceeds(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi.min(pi - hi))
}

/// Default angular grid for a hard function of degree `n`.
pub fn default_width_grid(n: usize) -> usize {
    (50 * n).max(1000) * 4
}

/// Fractions of `|S^d|` on which `f >= eps` near `z` and near `-z`
/// (split at the equator of `z`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LobeMass {
    pub near_center: f64,
    pub near_antipode: f64,
}

pub fn lobe_masses(f: &HardFunction, grid: usize) -> LobeMass {
    let pi = std::f64::consts::PI;
    let d = f.kp.d as i32;
    let h = pi / grid as f64;
    let (mut plus, mut minus) = (0.0, 0.0);
    for k in 0..grid {
        let a = (k as f64 + 0.5) * h;
        if f.at_angle(a) >= f.eps {
            let w = a.sin().powi(d - 1) * h;
            if a < 0.5 * pi {
                plus += w;
            } else {
                minus += w;
            }
        }
    }
    let scale = (ln_sphere_area(f.kp.d - 1) - ln_sphere_area(f.kp.d)).exp();
    LobeMass {
        near_center: plus * scale,
        near_antipode: minus * scale,
    }
}

/// The class `(f_z)_{z in centers}` at level `eps` and budget `B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionClass {
    pub eps: f64,
    pub budget: f64,
    pub n_bar: usize,
    pub width: f64,
    pub member_norm: f64,
    pub kp: KernelParams,
    pub partition: SpherePartition,
    pub functions: Vec<HardFunction>,
}

impl FunctionClass {
    pub fn centers(&self) -> &SeparatedSet {
        &self.partition.centers
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn member(&self, i: usize) -> Result<&HardFunction> {
        self.functions.get(i).ok_or(Error::Index {
            index: i,
            len: self.functions.len(),
        })
    }
}

/// Builds the class with every member at RKHS norm at most `B/3`, so that
/// `f_i + 2 f_j` stays within `B`. The separation is twice the measured
/// width of a member.
pub fn build_class(
    eps: f64,
    budget: f64,
    kp: KernelParams,
    spectrum: &EigenSpectrum,
    seed: u64,
) -> Result<FunctionClass> {
    if !(eps > 0.0) || !(budget > 0.0) {
        return Err(Error::Domain("eps and B must be positive".into()));
    }
    if eps >= budget {
        return Err(Error::Range(format!(
            "eps/B not sufficiently small (eps = {eps}, B = {budget})"
        )));
    }
    if spectrum.kp != kp {
        return Err(Error::Domain(
            "spectrum was computed for different kernel parameters".into(),
        ));
    }
    let n_bar = select_n_bar(eps, budget / 3.0, spectrum)?;
    if n_bar < 2 {
        return Err(Error::Range(format!(
            "eps/B not sufficiently small: N_bar = {n_bar} < 2"
        )));
    }
    let reference = HardFunction::new(SpherePoint::north_pole(kp.d), eps, n_bar, kp)?;
    let width = 2.0 * measure_width(&reference, default_width_grid(n_bar))?;
    let centers = greedy_separated_set(kp.d, width, default_candidate_budget(kp.d, width), seed)?;
    let partition = crate::sphere::build_partition(centers)?;
    let functions = partition
        .centers
        .centers
        .iter()
        .map(|z| HardFunction::new(z.clone(), eps, n_bar, kp))
        .collect::<Result<Vec<_>>>()?;
    let member_norm = rkhs_norm_hard(eps, n_bar, spectrum)?;
    Ok(FunctionClass {
        eps,
        budget,
        n_bar,
        width,
        member_norm,
        kp,
        partition,
        functions,
    })
}

/// Sampled region statistics of every member over every region.
/// Entry `[z][k]` refers to member `k` evaluated over region `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSup {
    pub max_value: Vec<Vec<f64>>,
    pub max_abs: Vec<Vec<f64>>,
    pub distance: Vec<Vec<f64>>,
}

/// One pass over dense samples of all regions.
pub fn region_sup(fc: &FunctionClass, per_region: usize, seed: u64) -> RegionSup {
    let samples = region_samples(&fc.partition, per_region, seed);
    let rows: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = samples
        .par_iter()
        .map(|region| {
            let mut max_value = Vec::with_capacity(fc.len());
            let mut max_abs = Vec::with_capacity(fc.len());
            let mut distance = Vec::with_capacity(fc.len());
            for f in &fc.functions {
                let (mut hi, mut ab) = (f64::NEG_INFINITY, 0.0f64);
                for x in region {
                    let v = f.evaluate(x);
                    hi = hi.max(v);
                    ab = ab.max(v.abs());
                }
                max_value.push(hi);
                max_abs.push(ab);
                distance.push(region_distance(region, &f.center));
            }
            (max_value, max_abs, distance)
        })
        .collect();
    let mut out = RegionSup {
        max_value: vec![],
        max_abs: vec![],
        distance: vec![],
    };
    for (a, b, c) in rows {
        out.max_value.push(a);
        out.max_abs.push(b);
        out.distance.push(c);
    }
    out
}

impl RegionSup {
    /// `sum_k (sup_{R_z} f_k)^2 / eps^2`.
    pub fn sum_ratio(&self, z: usize, eps: f64) -> f64 {
        self.max_abs[z].iter().map(|s| (s / eps).powi(2)).sum()
    }

    /// Largest `sup_{R_z} f_k / eps` over pairs `z != k`.
    pub fn foreign_peak_ratio(&self, eps: f64) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for (z, row) in self.max_value.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                if k != z {
                    worst = worst.max(v / eps);
                }
            }
        }
        worst
    }

    /// Mean over regions of the squared-sup contribution of the members whose
    /// sampled distance to the region falls in annulus `i`.
    pub fn annulus_profile(&self, eps: f64, width: f64) -> Vec<f64> {
        let m = self.max_abs.len();
        let mut acc: Vec<f64> = Vec::new();
        for z in 0..m {
            for k in 0..m {
                if k == z {
                    continue;
                }
                let i = annulus_index(self.distance[z][k], width);
                if acc.len() <= i {
                    acc.resize(i + 1, 0.0);
                }
                acc[i] += (self.max_abs[z][k] / eps).powi(2);
            }
        }
        acc.iter_mut().for_each(|a| *a /= m as f64);
        acc
    }
}

/// `sum_{z~} (sup_{x in R_z} f_{z~}(x))^2 / eps^2` from dense samples.
pub fn sup_sum_ratio(fc: &FunctionClass, z_index: usize, per_region: usize, seed: u64) -> Result<f64> {
    if z_index >= fc.len() {
        return Err(Error::Index {
            index: z_index,
            len: fc.len(),
        });
    }
    Ok(region_sup(fc, per_region, seed).sum_ratio(z_index, fc.eps))
}

/// Least-squares slope of `ln value` against `ln i` over `i >= 1` with a
/// positive value.
pub fn log_log_slope(profile: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = profile
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, v)| **v > 0.0)
        .map(|(i, v)| ((i as f64).ln(), v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// `(f, f~) = (f_i, f_i + 2 f_j)`.
pub fn adversarial_pair(fc: &FunctionClass, i: usize, j: usize) -> Result<(Combination, Combination)> {
    let fi = fc.member(i)?.clone();
    let fj = fc.member(j)?.clone();
    if i == j {
        return Err(Error::Domain("adversarial pair needs two distinct members".into()));
    }
    Ok((
        Combination::single(fi.clone()),
        Combination {
            terms: vec![(1.0, fi), (2.0, fj)],
        },
    ))
}

/// Parameters of the squared-exponential eigensystem under `N(0, sigma^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianBaselineParams {
    pub sigma_measure: f64,
    pub theta: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub big_a: f64,
    pub big_b: f64,
}

impl GaussianBaselineParams {
    pub fn new(sigma_measure: f64, theta: f64) -> Result<Self> {
        if !(sigma_measure > 0.0) || !(theta > 0.0) {
            return Err(Error::Domain("sigma and theta must be positive".into()));
        }
        let a = 1.0 / (4.0 * sigma_measure * sigma_measure);
        let b = 1.0 / theta;
        let c = (a * a + 2.0 * a * b).sqrt();
        let big_a = a + b + c;
        Ok(Self {
            sigma_measure,
            theta,
            a,
            b,
            c,
            big_a,
            big_b: b / big_a,
        })
    }

    /// `lambda_n = sqrt(2a / A) B^n`.
    pub fn eigenvalue(&self, n: usize) -> f64 {
        (2.0 * self.a / self.big_a).sqrt() * self.big_b.powi(n as i32)
    }
}

/// `b_N(x) = sum_{n<=N} phi_n(x) phi_n(0)` in Christoffel-Darboux form:
/// `sqrt(c/a) e^{-(c-a)x^2} [H_N(0) H_{N+1}(u) - H_N(u) H_{N+1}(0)] / (2^{N+1} N! u)`
/// with `u = sqrt(2c) x`. Only one of the two products survives for each
/// parity of `N`, which avoids cancellation near `x = 0`.
pub fn gaussian_baseline(x: f64, n: usize, gp: &GaussianBaselineParams, d: usize) -> Result<f64> {
    if d != 1 {
        return Err(Error::Domain(format!(
            "the Gaussian baseline is defined for d = 1 only, got d = {d}"
        )));
    }
    let u = (2.0 * gp.c).sqrt() * x;
    let ln_norm = ((n + 1) as f64) * std::f64::consts::LN_2 + ln_factorial(n);
    let (hn0, hn1_0) = (hermite(n, 0.0), hermite(n + 1, 0.0));
    let bracket = if u == 0.0 {
        // limit: H_N(0) H'_{N+1}(0) - H'_N(0) H_{N+1}(0), H'_k = 2k H_{k-1}
        let dn1 = 2.0 * (n + 1) as f64 * hermite(n, 0.0);
        let dn = if n == 0 {
            0.0
        } else {
            2.0 * n as f64 * hermite(n - 1, 0.0)
        };
        hn0 * dn1 - dn * hn1_0
    } else if n % 2 == 1 {
        -hermite(n, u) * hn1_0 / u
    } else {
        hn0 * hermite(n + 1, u) / u
    };
    Ok((gp.c / gp.a).sqrt() * (-(gp.c - gp.a) * x * x).exp() * bracket * (-ln_norm).exp())
}

/// First `x > 0` with `b_N(x) = b_N(0) / 2`, by scanning then bisection.
pub fn gaussian_half_width(n: usize, gp: &GaussianBaselineParams) -> Result<f64> {
    let peak = gaussian_baseline(0.0, n, gp, 1)?;
    let half = 0.5 * peak;
    let step = 1e-3 / (2.0 * gp.c).sqrt();
    let mut lo = 0.0;
    for _ in 0..1_000_000 {
        let hi = lo + step;
        if gaussian_baseline(hi, n, gp, 1)? <= half {
            let (mut a, mut b) = (lo, hi);
            for _ in 0..60 {
                let m = 0.5 * (a + b);
                if gaussian_baseline(m, n, gp, 1)? > half {
                    a = m;
                } else {
                    b = m;
                }
            }
            return Ok(b);
        }
        lo = hi;
    }
    Err(Error::Convergence("half-peak crossing not found".into()))
}

/// `ln b_{N,z}(z) |S^d|`, the cumulative harmonic dimension.
pub fn ln_peak_times_area(n: usize, d: usize) -> Result<f64> {
    Ok(ln_peak_value(n, d)? + ln_sphere_area(d))
}
