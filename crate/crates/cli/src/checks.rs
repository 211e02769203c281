//! The verification suite behind `hardsphere-gp verify`. Each check measures
//! a worst-case deviation (or ratio) and compares it with a fixed tolerance.

use std::f64::consts::PI;

use hardsphere::gp::{greedy_mig, mig_bound_min};
use hardsphere::hard::{
    b_profile, b_value, b_value_dirichlet, b_value_legendre, build_class, default_width_grid, gaussian_baseline,
    gaussian_half_width, measure_width, region_sup, GaussianBaselineParams, HardFunction,
};
use hardsphere::mercer::{quadrature_spectrum, select_n_bar, KernelParams, DEFAULT_NODES};
use hardsphere::special::{
    dirichlet, gegenbauer, harmonic_dim, hermite, legendre_sphere, ln_factorial, sphere_area, GegenbauerIndex,
};
use hardsphere::sphere::{sample_uniform, SpherePoint};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::VerifyConfig;
use crate::error::CliError;

/// Outcome of one check. `measured` is compared against `tolerance`
/// in the direction given by `detail`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl Check {
    fn at_most(name: &str, measured: f64, tolerance: f64, what: &str) -> Self {
        Self {
            name: name.into(),
            passed: measured.is_finite() && measured <= tolerance,
            measured: finite(measured),
            tolerance,
            detail: format!("{what} must be <= tolerance"),
        }
    }

    fn at_least(name: &str, measured: f64, tolerance: f64, what: &str) -> Self {
        Self {
            name: name.into(),
            passed: measured.is_finite() && measured >= tolerance,
            measured: finite(measured),
            tolerance,
            detail: format!("{what} must be >= tolerance"),
        }
    }

    fn failed(name: &str, err: impl std::fmt::Display) -> Self {
        Self {
            name: name.into(),
            passed: false,
            measured: 0.0,
            tolerance: 0.0,
            detail: format!("error: {err}"),
        }
    }
}

// JSON has no representation for non-finite numbers.
fn finite(x: f64) -> f64 {
    if x.is_finite() {
        x
    } else {
        f64::MAX
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub all_passed: bool,
    pub checks: Vec<Check>,
}

type CheckResult = Result<Check, hardsphere::Error>;

fn guarded(name: &str, f: impl FnOnce() -> CheckResult) -> Check {
    f().unwrap_or_else(|e| Check::failed(name, e))
}

fn max_of(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(0.0, |m, v| if v.is_nan() || v > m { v } else { m })
}

fn band_ratio(values: &[f64]) -> f64 {
    let hi = values.iter().cloned().fold(f64::MIN, f64::max);
    let lo = values.iter().cloned().fold(f64::MAX, f64::min);
    hi / lo
}

pub fn dirichlet_closed_form() -> Check {
    let worst = max_of((1..=64usize).flat_map(|n| {
        (1..=1000).map(move |i| {
            let t = PI * i as f64 / 1000.0;
            let sum = 1.0 + 2.0 * (1..=n).map(|k| (k as f64 * t).cos()).sum::<f64>();
            (sum - dirichlet(n, t).unwrap_or(f64::NAN)).abs()
        })
    }));
    Check::at_most("dirichlet_closed_form", worst, 1e-8, "max |cosine sum - closed form|")
}

/// Hard-function profile on the circle against the Dirichlet form. The
/// factor scales the Gegenbauer route and exists to exercise the harness.
pub fn profile_matches_dirichlet(factor: f64) -> Check {
    let name = "hard_profile_matches_dirichlet_form";
    guarded(name, || {
        let z = SpherePoint::from_angle(0.0);
        let mut worst: f64 = 0.0;
        for n in 1..=40 {
            for i in 0..=200 {
                let x = SpherePoint::from_angle(PI * i as f64 / 200.0);
                let g = factor * b_value(&x, &z, n, 1)?;
                let dir = b_value_dirichlet(&x, &z, n)?;
                let scale = (1.0 + 2.0 * n as f64) / (2.0 * PI);
                worst = worst.max((g - dir).abs() / scale);
            }
        }
        Ok(Check::at_most(name, worst, 1e-8, "max deviation relative to the peak"))
    })
}

pub fn dirichlet_half_peak() -> Check {
    let name = "dirichlet_half_peak_bound";
    guarded(name, || {
        let mut excess = f64::MIN;
        for n in 2..=64usize {
            let half = 0.5 * (1.0 + 2.0 * n as f64);
            let lo = PI / n as f64;
            for i in 0..=2000 {
                let t = lo + (PI - lo) * i as f64 / 2000.0;
                excess = excess.max(dirichlet(n, t)? - half);
            }
        }
        Ok(Check::at_most(
            name,
            excess,
            0.0,
            "max of kernel minus half its peak beyond pi/N",
        ))
    })
}

const ETAS: [f64; 5] = [0.5, 1.0, 1.5, 2.0, 3.0];

fn unit_grid(points: usize) -> impl Iterator<Item = f64> {
    (0..points).map(move |i| -1.0 + 2.0 * i as f64 / (points - 1) as f64)
}

pub fn gegenbauer_shift_identity() -> Check {
    let name = "gegenbauer_parameter_shift_identity";
    guarded(name, || {
        let mut worst: f64 = 0.0;
        for &eta in &ETAS {
            for n in 0..=50usize {
                for t in unit_grid(201) {
                    let up = gegenbauer(n, eta + 1.0, t)?;
                    let up2 = if n >= 2 { gegenbauer(n - 2, eta + 1.0, t)? } else { 0.0 };
                    let lhs = (n as f64 + eta) * gegenbauer(n, eta, t)?;
                    let dev = (lhs - eta * (up - up2)).abs() / up.abs().max(1.0);
                    worst = worst.max(dev);
                }
            }
        }
        Ok(Check::at_most(name, worst, 1e-8, "max scaled deviation"))
    })
}

pub fn gegenbauer_endpoints_and_parity() -> Check {
    let name = "gegenbauer_endpoint_values_and_parity";
    guarded(name, || {
        let mut worst: f64 = 0.0;
        for &eta in &ETAS {
            for n in 0..=50usize {
                // C_n(1) = prod_{k<n} (2 eta + k) / (k + 1)
                let exact: f64 = (0..n).map(|k| (2.0 * eta + k as f64) / (k as f64 + 1.0)).product();
                worst = worst.max((gegenbauer(n, eta, 1.0)? - exact).abs() / exact);
                let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                for t in unit_grid(201) {
                    let a = gegenbauer(n, eta, t)?;
                    worst = worst.max((gegenbauer(n, eta, -t)? - sign * a).abs() / exact);
                }
            }
        }
        Ok(Check::at_most(name, worst, 1e-8, "max relative deviation"))
    })
}

pub fn gegenbauer_max_at_endpoints() -> Check {
    let name = "gegenbauer_maximum_at_endpoints";
    guarded(name, || {
        let mut worst: f64 = 0.0;
        for eta in [1.0, 1.5, 2.0] {
            for n in 0..=50usize {
                let top = GegenbauerIndex::new(eta, n)?.value_at_one();
                let mut m: f64 = 0.0;
                for t in unit_grid(201) {
                    m = m.max(gegenbauer(n, eta, t)?.abs());
                }
                worst = worst.max((m - top).abs() / top);
            }
        }
        Ok(Check::at_most(
            name,
            worst,
            1e-8,
            "relative gap between grid max and value at 1",
        ))
    })
}

pub fn gegenbauer_dirichlet_sum() -> Check {
    let name = "gegenbauer_consecutive_sum_is_dirichlet";
    guarded(name, || {
        let mut worst: f64 = 0.0;
        for n in 1..=64usize {
            for i in 1..=1000 {
                let xi = PI * i as f64 / 1000.0;
                let sum = gegenbauer(n, 1.0, xi.cos())? + gegenbauer(n - 1, 1.0, xi.cos())?;
                let exact = ((n as f64 + 0.5) * xi).sin() / (0.5 * xi).sin();
                worst = worst.max((sum - exact).abs());
            }
        }
        Ok(Check::at_most(name, worst, 1e-8, "max absolute deviation"))
    })
}

/// Running maximum over degrees of the scaled sup of `|C_n(cos xi)|`
/// away from the endpoints; the ratio between degrees 64 and 16 stays small.
pub fn gegenbauer_interior_decay() -> Check {
    let name = "gegenbauer_interior_decay_constant";
    guarded(name, || {
        let mut worst: f64 = 0.0;
        for eta in [0.5, 1.0, 1.5, 2.0] {
            let mut running = 0.0f64;
            let mut at16 = 0.0;
            for n in 4..=64usize {
                let nf = n as f64;
                let lo = 1.0 / nf;
                let mut sup: f64 = 0.0;
                for i in 0..=2000 {
                    let xi = lo + (0.5 * PI - lo) * i as f64 / 2000.0;
                    sup = sup.max(gegenbauer(n, eta, xi.cos())?.abs() * xi.powf(eta) * nf.powf(1.0 - eta));
                }
                running = running.max(sup);
                if n == 16 {
                    at16 = running;
                }
            }
            worst = worst.max(running / at16);
        }
        Ok(Check::at_most(
            name,
            worst,
            1.5,
            "running max at degree 64 over degree 16",
        ))
    })
}

pub fn legendre_rescaling() -> Check {
    let name = "legendre_matches_gegenbauer_rescaling";
    guarded(name, || {
        let mut worst: f64 = 0.0;
        for d in 2..=4usize {
            let eta = 0.5 * (d as f64 - 1.0);
            for n in 0..=40usize {
                let top = GegenbauerIndex::new(eta, n)?.value_at_one();
                for t in unit_grid(201) {
                    let p = legendre_sphere(n, d + 1, t)?;
                    let g = gegenbauer(n, eta, t)? / top;
                    worst = worst.max((p - g).abs() / p.abs().max(1e-3));
                }
            }
        }
        Ok(Check::at_most(name, worst, 1e-10, "max relative deviation"))
    })
}

pub fn harmonic_dim_cumulative() -> Check {
    let name = "harmonic_dimension_cumulative_sum";
    guarded(name, || {
        let mut mismatches = 0.0;
        for d in 1..=5usize {
            for n in 0..=60usize {
                let sum: u64 = (0..=n).map(|k| harmonic_dim(k, d + 1)).sum::<Result<u64, _>>()?;
                if sum != harmonic_dim(n, d + 2)? {
                    mismatches += 1.0;
                }
            }
        }
        Ok(Check::at_most(name, mismatches, 0.0, "number of mismatches"))
    })
}

pub fn closed_forms_agree(seed: u64) -> Check {
    let name = "hard_profile_closed_form_routes_agree";
    guarded(name, || {
        let mut worst: f64 = 0.0;
        for d in 1..=3usize {
            let xs = sample_uniform(d, 1000, seed ^ 0x11);
            let zs = sample_uniform(d, 1000, seed ^ 0x22);
            for n in [1, 2, 5, 10, 20, 40] {
                let peak = b_profile(1.0, n, d)?;
                for (x, z) in xs.iter().zip(&zs) {
                    let g = b_value(x, z, n, d)?;
                    let l = b_value_legendre(x, z, n, d)?;
                    worst = worst.max((g - l).abs() / peak);
                    if d == 1 {
                        worst = worst.max((g - b_value_dirichlet(x, z, n)?).abs() / peak);
                    }
                }
            }
        }
        Ok(Check::at_most(name, worst, 1e-8, "max deviation relative to the peak"))
    })
}

pub fn peak_lower_bound() -> Check {
    let name = "peak_dominates_degree_power";
    guarded(name, || {
        let mut worst = f64::MAX;
        for d in 1..=3usize {
            for n in 1..=40usize {
                let peak = b_profile(1.0, n, d)? * sphere_area(d);
                let bound = ((d as f64) * (n as f64).ln() - ln_factorial(d)).exp();
                worst = worst.min(peak / bound);
            }
        }
        Ok(Check::at_least(name, worst, 1.0, "min of peak times area over N^d/d!"))
    })
}

const EPS_GRID: [f64; 3] = [1e-3, 1e-5, 1e-8];

/// Peak value, norm and confinement of members, plus the width law.
pub fn hard_function_checks(seed: u64) -> Vec<Check> {
    let mut peak_err: f64 = 0.0;
    let mut norm_excess = f64::MIN;
    let mut escapes = 0.0;
    let mut width_band: f64 = 1.0;
    let mut sup_band: f64 = 1.0;
    let mut slope_max = f64::MIN;
    let mut error = None;
    for d in 1..=2usize {
        let mut run = || -> Result<(Vec<f64>, Vec<f64>), hardsphere::Error> {
            let kp = KernelParams::new(d, 1.0)?;
            let spec = quadrature_spectrum(kp, 80, DEFAULT_NODES)?;
            let mut widths = Vec::new();
            let mut sups = Vec::new();
            for &eps in &EPS_GRID {
                let n = select_n_bar(eps, 1.0, &spec)?;
                let f = HardFunction::new(SpherePoint::north_pole(d), eps, n, kp)?;
                peak_err = peak_err.max((f.evaluate(&f.center) - 2.0 * eps).abs() / eps);
                norm_excess = norm_excess.max(f.rkhs_norm(&spec)? - 1.0);
                let rho = measure_width(&f, default_width_grid(n))?;
                widths.push(rho * n as f64);
                for x in sample_uniform(d, 20_000, seed) {
                    let a = hardsphere::geodesic(&x, &f.center);
                    if f.evaluate(&x) >= eps && a > rho && a < PI - rho {
                        escapes += 1.0;
                    }
                }
                let fc = build_class(eps, 1.0, kp, &spec, seed)?;
                let rs = region_sup(&fc, 400, seed);
                sups.push((0..fc.len()).map(|z| rs.sum_ratio(z, eps)).fold(0.0, f64::max));
                if let Some(s) = hardsphere::hard::log_log_slope(&rs.annulus_profile(eps, fc.width)) {
                    slope_max = slope_max.max(s);
                }
            }
            Ok((widths, sups))
        };
        match run() {
            Ok((w, s)) => {
                width_band = width_band.max(band_ratio(&w));
                sup_band = sup_band.max(band_ratio(&s));
            }
            Err(e) => error = Some(e),
        }
    }
    let names = [
        "hard_function_peak_value",
        "hard_function_norm_within_budget",
        "hard_function_large_values_near_poles",
        "width_times_degree_band",
        "region_sup_sum_band",
        "region_sup_annulus_decay",
    ];
    if let Some(e) = error {
        return names.iter().map(|n| Check::failed(n, &e)).collect();
    }
    vec![
        Check::at_most(names[0], peak_err, 1e-9, "max |f(z) - 2 eps| / eps"),
        Check::at_most(names[1], norm_excess, 0.0, "max RKHS norm minus budget"),
        Check::at_most(names[2], escapes, 0.0, "samples with f >= eps outside both polar caps"),
        Check::at_most(names[3], width_band, 2.0, "max/min of width times degree"),
        Check::at_most(names[4], sup_band, 3.0, "max/min of the region sup sum"),
        Check::at_most(
            names[5],
            slope_max,
            -1.5,
            "largest log-log slope of annulus contributions",
        ),
    ]
}

pub fn degree_growth() -> Check {
    let name = "degree_growth_band";
    guarded(name, || {
        let spec = quadrature_spectrum(KernelParams::new(1, 1.0)?, 80, DEFAULT_NODES)?;
        let mut ratios = Vec::new();
        for k in 3..=12 {
            let l = (10f64.powi(k)).ln();
            let n = select_n_bar(10f64.powi(-k), 1.0, &spec)?;
            ratios.push(n as f64 / (l / l.ln()));
        }
        Ok(Check::at_most(
            name,
            band_ratio(&ratios),
            3.0,
            "max/min of N_bar over ln(B/eps)/ln ln(B/eps)",
        ))
    })
}

pub fn mercer_identities() -> Vec<Check> {
    let run = || -> Result<(f64, f64), hardsphere::Error> {
        let kp = KernelParams::new(1, 1.0)?;
        let spec = quadrature_spectrum(kp, 60, DEFAULT_NODES)?;
        let trace_gap = (spec.trace() - sphere_area(1)).abs();
        let mut worst: f64 = 0.0;
        for i in 0..=200 {
            let t = (PI * i as f64 / 200.0).cos();
            let mut s = 0.0;
            for n in 0..=60 {
                s += spec.lambda(n)? * spec.multiplicity(n)? as f64 / sphere_area(1) * legendre_sphere(n, 2, t)?;
            }
            worst = worst.max((s - kp.profile(t)).abs());
        }
        Ok((worst, trace_gap))
    };
    match run() {
        Ok((rec, gap)) => vec![
            Check::at_most("mercer_kernel_reconstruction", rec, 1e-6, "max reconstruction error"),
            Check::at_most("mercer_trace_identity", gap, 1e-6, "|trace - |S^d||"),
        ],
        Err(e) => vec![
            Check::failed("mercer_kernel_reconstruction", &e),
            Check::failed("mercer_trace_identity", &e),
        ],
    }
}

/// Greedy information gain against the theoretical growth rate and the
/// bound minimized over the truncation degree.
pub fn mig_checks(t_max: usize, seed: u64) -> Vec<Check> {
    let run = || -> Result<(f64, f64), hardsphere::Error> {
        let kp = KernelParams::new(1, 1.0)?;
        let spec = quadrature_spectrum(kp, 80, DEFAULT_NODES)?;
        let cands = sample_uniform(1, t_max, seed);
        let g = greedy_mig(t_max, &cands, 1.0, 1.0)?;
        let mut horizons = vec![];
        let mut t = 64;
        while t <= t_max {
            horizons.push(t);
            t *= 4;
        }
        let mut ratios = Vec::new();
        let mut slack = f64::MAX;
        for &t in &horizons {
            let gain = g.gain[t - 1];
            let l = (t as f64).ln();
            ratios.push(gain / (l * l / l.ln()));
            slack = slack.min(mig_bound_min(t, &spec, 1.0, 1)?.0 - gain);
        }
        Ok((band_ratio(&ratios), slack))
    };
    match run() {
        Ok((band, slack)) => vec![
            Check::at_most(
                "information_gain_growth_band",
                band,
                2.0,
                "max/min of greedy gain over growth rate",
            ),
            Check::at_least(
                "information_gain_below_bound",
                slack,
                0.0,
                "min of bound minus greedy gain",
            ),
        ],
        Err(e) => vec![
            Check::failed("information_gain_growth_band", &e),
            Check::failed("information_gain_below_bound", &e),
        ],
    }
}

pub fn gaussian_baseline_checks() -> Vec<Check> {
    let run = || -> Result<(f64, f64), hardsphere::Error> {
        let gp = GaussianBaselineParams::new(1.0, 1.0)?;
        let mut worst: f64 = 0.0;
        for n in 0..=30usize {
            for i in 0..=100 {
                let x = -2.0 + 4.0 * i as f64 / 100.0;
                let u = (2.0 * gp.c).sqrt();
                let direct: f64 = (0..=n)
                    .map(|k| {
                        let ln_norm = k as f64 * std::f64::consts::LN_2 + ln_factorial(k);
                        let phi =
                            |y: f64| (gp.c / gp.a).powf(0.25) * (-(gp.c - gp.a) * y * y).exp() * hermite(k, u * y);
                        phi(x) * phi(0.0) * (-ln_norm).exp()
                    })
                    .sum();
                let closed = gaussian_baseline(x, n, &gp, 1)?;
                worst = worst.max((closed - direct).abs() / direct.abs().max(1e-3));
            }
        }
        let scaled: Vec<f64> = (4..=64)
            .map(|n| gaussian_half_width(n, &gp).map(|w| w * (n as f64).sqrt()))
            .collect::<Result<_, _>>()?;
        Ok((worst, band_ratio(&scaled)))
    };
    match run() {
        Ok((dev, band)) => vec![
            Check::at_most(
                "gaussian_closed_form_matches_sum",
                dev,
                1e-7,
                "max deviation relative to max(|direct sum|, 1e-3)",
            ),
            Check::at_most(
                "gaussian_half_width_band",
                band,
                2.0,
                "max/min of half-width times sqrt(N)",
            ),
        ],
        Err(e) => vec![
            Check::failed("gaussian_closed_form_matches_sum", &e),
            Check::failed("gaussian_half_width_band", &e),
        ],
    }
}

/// Runs every check; independent groups run in parallel.
pub fn run_all(cfg: &VerifyConfig) -> VerifyReport {
    let seed = cfg.seed;
    let factor = cfg.perturb_b;
    let t_max = cfg.mig_t_max;
    let groups: Vec<Box<dyn Fn() -> Vec<Check> + Send + Sync>> = vec![
        Box::new(|| vec![dirichlet_closed_form()]),
        Box::new(move || vec![profile_matches_dirichlet(factor)]),
        Box::new(|| vec![dirichlet_half_peak()]),
        Box::new(|| vec![gegenbauer_shift_identity()]),
        Box::new(|| vec![gegenbauer_endpoints_and_parity()]),
        Box::new(|| vec![gegenbauer_max_at_endpoints()]),
        Box::new(|| vec![gegenbauer_dirichlet_sum()]),
        Box::new(|| vec![gegenbauer_interior_decay()]),
        Box::new(|| vec![legendre_rescaling()]),
        Box::new(|| vec![harmonic_dim_cumulative()]),
        Box::new(move || vec![closed_forms_agree(seed)]),
        Box::new(|| vec![peak_lower_bound()]),
        Box::new(move || hard_function_checks(seed)),
        Box::new(|| vec![degree_growth()]),
        Box::new(mercer_identities),
        Box::new(move || mig_checks(t_max, seed)),
        Box::new(gaussian_baseline_checks),
    ];
    let checks: Vec<Check> = groups.par_iter().flat_map_iter(|g| g()).collect();
    VerifyReport {
        all_passed: checks.iter().all(|c| c.passed),
        checks,
    }
}

/// Serializes the report and fails when any check failed.
pub fn report_status(report: &VerifyReport) -> Result<(), CliError> {
    if report.all_passed {
        Ok(())
    } else {
        let failed: Vec<&str> = report
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect();
        Err(CliError::Verification(format!("failed checks: {}", failed.join(", "))))
    }
}
