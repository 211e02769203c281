//! Squared-exponential GP regression on `S^d`, information gain, greedy
//! maximum-information-gain selection and the truncated-spectrum upper bound.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mercer::{ln_eigen_lower_bound, EigenSpectrum};
use crate::special::{harmonic_dim, ln_sphere_area};
use crate::sphere::SpherePoint;

/// `exp(-||x - y||^2 / theta) = exp(-2 (1 - x . y) / theta)` for unit vectors.
pub fn se_kernel(x: &SpherePoint, y: &SpherePoint, theta: f64) -> f64 {
    (-2.0 * (1.0 - x.dot(y).clamp(-1.0, 1.0)) / theta).exp()
}

pub const JITTER_START: f64 = 1e-10;
pub const JITTER_MAX: f64 = 1e-6;

/// Adds escalating jitter until `pivot + jitter` is positive.
fn jittered_pivot(pivot: f64) -> Result<(f64, f64)> {
    if pivot > 0.0 {
        return Ok((pivot, 0.0));
    }
    let mut jitter = JITTER_START;
    while jitter <= JITTER_MAX * (1.0 + 1e-12) {
        if pivot + jitter > 0.0 {
            return Ok((pivot + jitter, jitter));
        }
        jitter *= 10.0;
    }
    Err(Error::Factorization(format!(
        "pivot {pivot:e} stays non-positive after jitter {JITTER_MAX:e}"
    )))
}

/// Points, observations and the noise variance used for regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpDataset {
    pub points: Vec<SpherePoint>,
    pub observations: Vec<f64>,
    pub noise_var: f64,
}

impl GpDataset {
    pub fn new(points: Vec<SpherePoint>, observations: Vec<f64>, noise_var: f64) -> Result<Self> {
        if points.len() != observations.len() {
            return Err(Error::Domain(format!(
                "{} points but {} observations",
                points.len(),
                observations.len()
            )));
        }
        if !(noise_var > 0.0) {
            return Err(Error::Domain(format!(
                "noise variance must be positive, got {noise_var}"
            )));
        }
        Ok(Self {
            points,
            observations,
            noise_var,
        })
    }

    pub fn empty(noise_var: f64) -> Result<Self> {
        Self::new(Vec::new(), Vec::new(), noise_var)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Cholesky factor of `K + noise_var I`, grown one row at a time.
#[derive(Debug, Clone)]
pub struct PosteriorState {
    theta: f64,
    noise_var: f64,
    points: Vec<SpherePoint>,
    /// Row `t` holds `L[t][0..=t]`.
    rows: Vec<Vec<f64>>,
    /// `L^{-1} y`.
    z: Vec<f64>,
    jitter: Vec<f64>,
    ln_det: f64,
}

impl PosteriorState {
    pub fn new(theta: f64, noise_var: f64) -> Result<Self> {
        if !(theta > 0.0) || !(noise_var > 0.0) {
            return Err(Error::Domain("theta and noise variance must be positive".into()));
        }
        Ok(Self {
            theta,
            noise_var,
            points: vec![],
            rows: vec![],
            z: vec![],
            jitter: vec![],
            ln_det: 0.0,
        })
    }

    pub fn fit(ds: &GpDataset, theta: f64) -> Result<Self> {
        let mut s = Self::new(theta, ds.noise_var)?;
        for (x, y) in ds.points.iter().zip(&ds.observations) {
            s.append(x.clone(), *y)?;
        }
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `v = L^{-1} k(X, x)`.
    fn solve_lower(&self, kx: &[f64]) -> Vec<f64> {
        let mut v = Vec::with_capacity(kx.len());
        for (t, row) in self.rows.iter().enumerate() {
            let s: f64 = row[..t].iter().zip(&v).map(|(a, b)| a * b).sum();
            v.push((kx[t] - s) / row[t]);
        }
        v
    }

    /// Rank-one extension of the factor with a new observation.
    pub fn append(&mut self, x: SpherePoint, y: f64) -> Result<()> {
        let kx: Vec<f64> = self.points.iter().map(|p| se_kernel(p, &x, self.theta)).collect();
        let v = self.solve_lower(&kx);
        let pivot = 1.0 + self.noise_var - v.iter().map(|a| a * a).sum::<f64>();
        let (pivot, jitter) = jittered_pivot(pivot)?;
        let diag = pivot.sqrt();
        let zt = (y - v.iter().zip(&self.z).map(|(a, b)| a * b).sum::<f64>()) / diag;
        let mut row = v;
        row.push(diag);
        self.rows.push(row);
        self.z.push(zt);
        self.jitter.push(jitter);
        self.points.push(x);
        self.ln_det += 2.0 * diag.ln();
        Ok(())
    }

    /// Posterior mean and variance of the latent function at `x`.
    pub fn predict(&self, x: &SpherePoint) -> (f64, f64) {
        let kx: Vec<f64> = self.points.iter().map(|p| se_kernel(p, x, self.theta)).collect();
        let v = self.solve_lower(&kx);
        let mean = v.iter().zip(&self.z).map(|(a, b)| a * b).sum();
        let var = (1.0 - v.iter().map(|a| a * a).sum::<f64>()).clamp(f64::MIN_POSITIVE, 1.0);
        (mean, var)
    }

    /// `ln det(K + noise_var I)` (including any jitter) from the running factor.
    pub fn log_det(&self) -> f64 {
        self.ln_det
    }

    /// The same log-determinant from a fresh dense factorization.
    pub fn fresh_log_det(&self) -> Result<f64> {
        let n = self.points.len();
        let m = DMatrix::from_fn(n, n, |i, j| {
            let k = se_kernel(&self.points[i], &self.points[j], self.theta);
            if i == j {
                k + self.noise_var + self.jitter[i]
            } else {
                k
            }
        });
        let chol = m
            .cholesky()
            .ok_or_else(|| Error::Factorization("dense kernel matrix is not positive definite".into()))?;
        Ok(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
    }

    /// `1/2 ln det(I + K / noise_var)`.
    pub fn info_gain(&self) -> f64 {
        0.5 * (self.ln_det - self.points.len() as f64 * self.noise_var.ln())
    }
}

/// Posterior `(mean, variance)` at `x`; the prior `(0, 1)` for an empty dataset.
pub fn posterior(ds: &GpDataset, theta: f64, x: &SpherePoint) -> Result<(f64, f64)> {
    Ok(PosteriorState::fit(ds, theta)?.predict(x))
}

/// `1/2 ln det(I + K_T / noise_var)` for the dataset's points.
pub fn info_gain(ds: &GpDataset, theta: f64) -> Result<f64> {
    Ok(PosteriorState::fit(ds, theta)?.info_gain())
}

/// GP posterior restricted to a fixed candidate set, with every query taken
/// from that set. Each step costs `O(C t)` for `C` candidates.
#[derive(Debug, Clone)]
pub struct CandidateGp {
    theta: f64,
    noise_var: f64,
    candidates: Vec<SpherePoint>,
    /// `cols[t][c] = (L^{-1} k(X, c))_t`.
    cols: Vec<Vec<f64>>,
    var: Vec<f64>,
    mean: Vec<f64>,
    selected: Vec<usize>,
    ln_det: f64,
}

impl CandidateGp {
    pub fn new(candidates: Vec<SpherePoint>, theta: f64, noise_var: f64) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::Domain("candidate set is empty".into()));
        }
        if !(theta > 0.0) || !(noise_var > 0.0) {
            return Err(Error::Domain("theta and noise variance must be positive".into()));
        }
        let c = candidates.len();
        Ok(Self {
            theta,
            noise_var,
            candidates,
            cols: vec![],
            var: vec![1.0; c],
            mean: vec![0.0; c],
            selected: vec![],
            ln_det: 0.0,
        })
    }

    pub fn candidates(&self) -> &[SpherePoint] {
        &self.candidates
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn mean(&self, c: usize) -> f64 {
        self.mean[c]
    }

    pub fn variance(&self, c: usize) -> f64 {
        self.var[c].max(f64::MIN_POSITIVE)
    }

    pub fn means(&self) -> &[f64] {
        &self.mean
    }

    pub fn variances(&self) -> &[f64] {
        &self.var
    }

    pub fn info_gain(&self) -> f64 {
        0.5 * (self.ln_det - self.selected.len() as f64 * self.noise_var.ln())
    }

    /// Conditions on an observation `y` at candidate `p`.
    pub fn observe(&mut self, p: usize, y: f64) -> Result<()> {
        if p >= self.candidates.len() {
            return Err(Error::Index {
                index: p,
                len: self.candidates.len(),
            });
        }
        let (pivot, _) = jittered_pivot(self.var[p].max(0.0) + self.noise_var)?;
        let diag = pivot.sqrt();
        let c = self.candidates.len();
        // acc[c] = w_c . w_p
        let mut acc = vec![0.0; c];
        for col in &self.cols {
            let wp = col[p];
            for (a, w) in acc.iter_mut().zip(col) {
                *a += w * wp;
            }
        }
        let xp = &self.candidates[p];
        let mean_p = self.mean[p];
        let resid = (y - mean_p) / diag;
        let new_col: Vec<f64> = self
            .candidates
            .iter()
            .zip(&acc)
            .map(|(x, a)| (se_kernel(x, xp, self.theta) - a) / diag)
            .collect();
        for ((v, m), w) in self.var.iter_mut().zip(self.mean.iter_mut()).zip(&new_col) {
            *v = (*v - w * w).max(0.0);
            *m += w * resid;
        }
        self.cols.push(new_col);
        self.selected.push(p);
        self.ln_det += 2.0 * diag.ln();
        Ok(())
    }

    /// Candidate with the largest posterior variance; ties to the lowest index.
    pub fn argmax_variance(&self) -> usize {
        argmax(&self.var)
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Result of greedy information-gain maximization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyMig {
    pub indices: Vec<usize>,
    /// `gain[t - 1]` is the information gain of the first `t` points.
    pub gain: Vec<f64>,
}

/// Greedy maximum-variance selection of `T` points (repeats allowed).
pub fn greedy_mig(t_max: usize, candidates: &[SpherePoint], theta: f64, noise_var: f64) -> Result<GreedyMig> {
    if candidates.len() < t_max {
        return Err(Error::Domain(format!(
            "{} candidates for T = {t_max}",
            candidates.len()
        )));
    }
    let mut gp = CandidateGp::new(candidates.to_vec(), theta, noise_var)?;
    let mut gain = Vec::with_capacity(t_max);
    for _ in 0..t_max {
        let p = gp.argmax_variance();
        gp.observe(p, 0.0)?;
        gain.push(gp.info_gain());
    }
    Ok(GreedyMig {
        indices: gp.selected.clone(),
        gain,
    })
}

/// Degrees of the extrapolated tail are summed until terms drop below this
/// fraction of the running tail.
const TAIL_REL_TOL: f64 = 1e-17;

/// `ln` of the constant scaling the analytic eigenvalue form to the largest
/// ratio seen over the last ten computed degrees.
fn ln_tail_constant(spectrum: &EigenSpectrum) -> f64 {
    let top = spectrum.max_degree();
    let lo = top.saturating_sub(9);
    (lo..=top)
        .map(|n| spectrum.ln_lambda[n] - ln_eigen_lower_bound(n, &spectrum.kp, 1.0))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `ln (lambda_n N_{n,d+1})`, from the spectrum or its analytic tail.
fn ln_weighted_eigen(spectrum: &EigenSpectrum, n: usize, ln_c: f64) -> Result<f64> {
    let d = spectrum.kp.d;
    let ln_mult = (harmonic_dim(n, d + 1)? as f64).ln();
    if n <= spectrum.max_degree() {
        Ok(spectrum.ln_lambda[n] + ln_mult)
    } else {
        Ok(ln_eigen_lower_bound(n, &spectrum.kp, 1.0) + ln_c + ln_mult)
    }
}

/// `sum_{n > M} lambda_n N_{n,d+1}` with the analytic tail beyond the spectrum.
fn tail_sum(spectrum: &EigenSpectrum, m: usize) -> Result<f64> {
    let ln_c = ln_tail_constant(spectrum);
    let top = spectrum.max_degree();
    let first_extrapolated = (top + 1).max(m + 1);
    let a = ln_weighted_eigen(spectrum, first_extrapolated, ln_c)?;
    let b = ln_weighted_eigen(spectrum, first_extrapolated + 1, ln_c)?;
    if !(b < a) {
        return Err(Error::Range(format!(
            "analytic eigenvalue tail is not decreasing at degree {first_extrapolated}; extend the spectrum"
        )));
    }
    let mut sum = 0.0;
    let mut n = m + 1;
    loop {
        let term = ln_weighted_eigen(spectrum, n, ln_c)?.exp();
        sum += term;
        if n > top && (term <= TAIL_REL_TOL * sum || term == 0.0) {
            break;
        }
        n += 1;
        if n > top + 100_000 {
            return Err(Error::Range("analytic eigenvalue tail does not converge".into()));
        }
    }
    Ok(sum)
}

/// `(sum_{n<=M} N_{n,d+1}) ln(1 + T/noise_var) + T/(|S^d| noise_var) sum_{n>M} lambda_n N_{n,d+1}`.
pub fn mig_bound(t: usize, m: usize, spectrum: &EigenSpectrum, noise_var: f64, d: usize) -> Result<f64> {
    if d != spectrum.kp.d {
        return Err(Error::Domain(format!("spectrum is for d = {}, not {d}", spectrum.kp.d)));
    }
    if !(noise_var > 0.0) {
        return Err(Error::Domain("noise variance must be positive".into()));
    }
    let tf = t as f64;
    let head_dim = harmonic_dim(m, d + 2)? as f64;
    let head = head_dim * (tf / noise_var).ln_1p();
    let tail = tf / (ln_sphere_area(d).exp() * noise_var) * tail_sum(spectrum, m)?;
    Ok(head + tail)
}

/// `min_{M <= max degree} mig_bound` and its minimizer.
pub fn mig_bound_min(t: usize, spectrum: &EigenSpectrum, noise_var: f64, d: usize) -> Result<(f64, usize)> {
    let mut best = (f64::INFINITY, 0);
    for m in 0..=spectrum.max_degree() {
        let v = mig_bound(t, m, spectrum, noise_var, d)?;
        if v < best.0 {
            best = (v, m);
        }
    }
    Ok(best)
}

/// Smallest `M > 1/c` with `M ln(cM) >= ln T`; infeasible when that `M`
/// already exceeds `M ln(cM) <= cU ln T`.
pub fn select_m(t: f64, _d: usize, c: f64, c_upper: f64) -> Result<usize> {
    if !(t >= 3.0) {
        return Err(Error::Domain(format!("T must be at least 3, got {t}")));
    }
    if !(c > 0.0) || !(c_upper > 0.0) {
        return Err(Error::Domain("c and cU must be positive".into()));
    }
    let target = t.ln();
    let mut m = (1.0 / c).floor() as usize + 1;
    while (m as f64) * (c * m as f64).ln() < target {
        m += 1;
    }
    let value = m as f64 * (c * m as f64).ln();
    if value > c_upper * target {
        return Err(Error::Infeasible(format!(
            "M = {m} gives M ln(cM) = {value:.4} > cU ln T = {:.4}; raise cU",
            c_upper * target
        )));
    }
    Ok(m)
}
