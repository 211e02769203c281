//! The five subcommands. Each reads a validated configuration, writes its
//! outputs into the output directory and finishes with a manifest.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use hardsphere::bandit::{
    certify_change_of_measure, derive_seed, eps_schedule, worst_member_regret, AlgorithmParams, CertificateReport,
    CertifySettings, Event, Verdict,
};
use hardsphere::gp::{greedy_mig, mig_bound_min};
use hardsphere::hard::{build_class, default_width_grid, measure_width, FunctionClass, HardFunction};
use hardsphere::mercer::{quadrature_spectrum, EigenSpectrum, KernelParams, DEFAULT_NODES};
use hardsphere::sphere::{sample_uniform, SpherePoint};
use serde::{Deserialize, Serialize};

use crate::checks::{report_status, run_all};
use crate::config::{parse, CertifyConfig, InstanceConfig, MigConfig, RegretConfig, VerifyConfig};
use crate::error::CliError;
use crate::manifest::{CheckOutcome, OutputSet, RunManifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Instance,
    Verify,
    Mig,
    Regret,
    Certify,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Instance => "instance",
            Subcommand::Verify => "verify",
            Subcommand::Mig => "mig",
            Subcommand::Regret => "regret",
            Subcommand::Certify => "certify",
        }
    }
}

/// Runs a subcommand on the configuration text. `seed` overrides the
/// configured seed. A failed verification still writes its report and
/// manifest before returning the error.
pub fn run(cmd: Subcommand, config_text: &str, seed: Option<u64>, out: &Path) -> Result<RunManifest, CliError> {
    let start = Instant::now();
    let mut files = OutputSet::new(out)?;
    let (seed, checks, failure) = match cmd {
        Subcommand::Instance => {
            let mut cfg: InstanceConfig = parse(config_text)?;
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.validate()?;
            (cfg.seed, instance(&cfg, &mut files)?, None)
        }
        Subcommand::Verify => {
            let mut cfg: VerifyConfig = parse(config_text)?;
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.validate()?;
            let (checks, status) = verify(&cfg, &mut files)?;
            (cfg.seed, checks, status.err())
        }
        Subcommand::Mig => {
            let mut cfg: MigConfig = parse(config_text)?;
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.validate()?;
            (cfg.seed, mig(&cfg, &mut files)?, None)
        }
        Subcommand::Regret => {
            let mut cfg: RegretConfig = parse(config_text)?;
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.validate()?;
            (cfg.seed, regret(&cfg, &mut files)?, None)
        }
        Subcommand::Certify => {
            let mut cfg: CertifyConfig = parse(config_text)?;
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.validate()?;
            (cfg.seed, certify(&cfg, &mut files)?, None)
        }
    };
    let manifest = files.finish(cmd.name(), config_text, seed, start.elapsed().as_secs_f64(), checks)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(manifest),
    }
}

fn spectrum(d: usize, theta: f64, max_degree: usize) -> Result<(KernelParams, EigenSpectrum), CliError> {
    let kp = KernelParams::new(d, theta)?;
    let spec = quadrature_spectrum(kp, max_degree, DEFAULT_NODES)?;
    Ok((kp, spec))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSummary {
    pub degree: usize,
    pub file: String,
    pub peak: f64,
    pub width: f64,
    /// Absent when the degree exceeds the computed spectrum.
    pub rkhs_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub kernel: KernelParams,
    pub eps: f64,
    pub profiles: Vec<ProfileSummary>,
    pub class: Option<FunctionClass>,
}

fn instance(cfg: &InstanceConfig, files: &mut OutputSet) -> Result<Vec<CheckOutcome>, CliError> {
    let (kp, spec) = spectrum(cfg.d, cfg.theta, cfg.max_degree)?;
    let mut profiles = Vec::new();
    for &n in &cfg.degrees {
        let f = HardFunction::new(SpherePoint::north_pole(cfg.d), cfg.eps, n, kp)?;
        let mut csv = String::from("geodesic_angle,f_value\n");
        let last = (cfg.profile_points - 1) as f64;
        for k in 0..cfg.profile_points {
            let a = std::f64::consts::PI * k as f64 / last;
            writeln!(csv, "{a},{}", f.at_angle(a)).expect("writing to a String");
        }
        let file = format!("profile_N{n}.csv");
        files.write(&file, csv.as_bytes())?;
        let rkhs_norm = if n <= spec.max_degree() {
            Some(f.rkhs_norm(&spec)?)
        } else {
            None
        };
        profiles.push(ProfileSummary {
            degree: n,
            file,
            peak: f.at_angle(0.0),
            width: measure_width(&f, default_width_grid(n))?,
            rkhs_norm,
        });
    }
    let class = cfg
        .class_budget
        .map(|b| build_class(cfg.eps, b, kp, &spec, cfg.seed))
        .transpose()?;
    let peaks_ok = profiles
        .iter()
        .all(|p| (p.peak - 2.0 * cfg.eps).abs() <= 1e-9 * cfg.eps);
    let body = InstanceFile {
        kernel: kp,
        eps: cfg.eps,
        profiles,
        class,
    };
    files.write("class.json", serde_json::to_string_pretty(&body)?.as_bytes())?;
    Ok(vec![CheckOutcome {
        name: "profile_peak_is_twice_eps".into(),
        passed: peaks_ok,
    }])
}

pub const VERIFY_REPORT: &str = "verify_report.json";

fn verify(cfg: &VerifyConfig, files: &mut OutputSet) -> Result<(Vec<CheckOutcome>, Result<(), CliError>), CliError> {
    let report = run_all(cfg);
    files.write(VERIFY_REPORT, serde_json::to_string_pretty(&report)?.as_bytes())?;
    let outcomes = report
        .checks
        .iter()
        .map(|c| CheckOutcome {
            name: c.name.clone(),
            passed: c.passed,
        })
        .collect();
    Ok((outcomes, report_status(&report)))
}

/// `(ln T)^{d+1} (ln ln T)^{-d}`.
pub fn mig_growth_rate(t: usize, d: usize) -> f64 {
    let l = (t as f64).ln();
    l.powi(d as i32 + 1) / l.ln().powi(d as i32)
}

fn mig(cfg: &MigConfig, files: &mut OutputSet) -> Result<Vec<CheckOutcome>, CliError> {
    let (_, spec) = spectrum(cfg.d, cfg.theta, cfg.max_degree)?;
    let t_max = *cfg.horizons.iter().max().expect("validated non-empty");
    let cands = sample_uniform(cfg.d, cfg.candidates, cfg.seed);
    let greedy = greedy_mig(t_max, &cands, cfg.theta, cfg.noise_var)?;
    let mut csv = String::from("T,greedy_gain,bound_minM,M_star,ratio_to_theory\n");
    let mut ratios = Vec::new();
    let mut below_bound = true;
    for &t in &cfg.horizons {
        let gain = greedy.gain[t - 1];
        let (bound, m_star) = mig_bound_min(t, &spec, cfg.noise_var, cfg.d)?;
        let ratio = gain / mig_growth_rate(t, cfg.d);
        below_bound &= gain <= bound;
        ratios.push(ratio);
        writeln!(csv, "{t},{gain},{bound},{m_star},{ratio}").expect("writing to a String");
    }
    files.write("mig.csv", csv.as_bytes())?;
    let hi = ratios.iter().cloned().fold(f64::MIN, f64::max);
    let lo = ratios.iter().cloned().fold(f64::MAX, f64::min);
    Ok(vec![
        CheckOutcome {
            name: "ratio_to_theory_band".into(),
            passed: hi <= 2.0 * lo,
        },
        CheckOutcome {
            name: "greedy_gain_below_bound".into(),
            passed: below_bound,
        },
    ])
}

fn candidates_with_centers(d: usize, count: usize, fc: &FunctionClass, seed: u64) -> Vec<SpherePoint> {
    let mut cands = sample_uniform(d, count, seed);
    cands.extend(fc.centers().centers.iter().cloned());
    cands
}

fn regret(cfg: &RegretConfig, files: &mut OutputSet) -> Result<Vec<CheckOutcome>, CliError> {
    let (kp, spec) = spectrum(cfg.d, cfg.theta, cfg.max_degree)?;
    let params = AlgorithmParams {
        theta: cfg.theta,
        noise_var: cfg.model_noise_var(),
        beta: cfg.beta,
    };
    let mut trials_csv =
        String::from("T,eps,n_bar,members,trial,worst_member,cumulative_regret,simple_regret,regret_over_T_eps\n");
    let mut counts_csv = String::from("T,trial,region,count\n");
    for &t in &cfg.horizons {
        let eps = match cfg.eps {
            Some(e) => e,
            None => eps_schedule(t, cfg.sigma, cfg.budget, cfg.delta, cfg.d, cfg.c_tilde)?,
        };
        let fc = build_class(eps, cfg.budget, kp, &spec, derive_seed(cfg.seed, t as u64))?;
        let cands = candidates_with_centers(cfg.d, cfg.candidates, &fc, derive_seed(cfg.seed, 1 << 32 | t as u64));
        for trial in 0..cfg.trials {
            let seed = derive_seed(derive_seed(cfg.seed, t as u64), 1 + trial as u64);
            let w = worst_member_regret(&fc, cfg.algorithm, t, &cands, &params, cfg.sigma, seed)?;
            let scaled = w.cumulative_regret / (t as f64 * eps);
            writeln!(
                trials_csv,
                "{t},{eps},{},{},{trial},{},{},{},{scaled}",
                fc.n_bar,
                fc.len(),
                w.member,
                w.cumulative_regret,
                w.simple_regret
            )
            .expect("writing to a String");
            for (region, count) in w.region_counts.iter().enumerate() {
                writeln!(counts_csv, "{t},{trial},{region},{count}").expect("writing to a String");
            }
        }
    }
    files.write("regret.csv", trials_csv.as_bytes())?;
    files.write("region_counts.csv", counts_csv.as_bytes())?;
    Ok(Vec::new())
}

fn event_name(e: Event) -> &'static str {
    match e {
        Event::ReportInRegion => "report_in_region",
        Event::HalfQueriesInRegion => "half_queries_in_region",
    }
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::PremisesNotMet => "premises_not_met",
        Verdict::Holds => "holds",
        Verdict::Violated => "violated",
    }
}

fn certify(cfg: &CertifyConfig, files: &mut OutputSet) -> Result<Vec<CheckOutcome>, CliError> {
    let (kp, spec) = spectrum(cfg.d, cfg.theta, cfg.max_degree)?;
    let fc = build_class(cfg.eps, cfg.budget, kp, &spec, cfg.seed)?;
    if let Some(&(i, j)) = cfg.pairs.iter().find(|&&(i, j)| i >= fc.len() || j >= fc.len()) {
        return Err(CliError::Config(format!(
            "field `pairs`: pair ({i}, {j}) out of range for a class of {} members",
            fc.len()
        )));
    }
    let cands = candidates_with_centers(cfg.d, cfg.candidates, &fc, derive_seed(cfg.seed, 3));
    let settings = CertifySettings {
        algorithm: cfg.algorithm,
        params: AlgorithmParams {
            theta: cfg.theta,
            noise_var: cfg.model_noise_var(),
            beta: cfg.beta,
        },
        horizon: cfg.horizon,
        delta: cfg.delta,
        trials: cfg.trials,
        event: cfg.event,
        noise_std: cfg.sigma,
        per_region: cfg.per_region,
        seed: cfg.seed,
    };
    let mut csv = String::from(
        "i,j,horizon,delta,trials,event,p_f,p_f_lower,p_f_upper,p_f_tilde,p_f_tilde_lower,p_f_tilde_upper,lhs,rhs,verdict\n",
    );
    let mut reports: Vec<CertificateReport> = Vec::new();
    for &pair in &cfg.pairs {
        let r = certify_change_of_measure(&fc, pair, &cands, &settings)?;
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            pair.0,
            pair.1,
            r.horizon,
            r.delta,
            r.trials,
            event_name(r.event),
            r.p_f,
            r.p_f_interval.0,
            r.p_f_interval.1,
            r.p_f_tilde,
            r.p_f_tilde_interval.0,
            r.p_f_tilde_interval.1,
            r.lhs,
            r.rhs,
            verdict_name(r.verdict)
        )
        .expect("writing to a String");
        reports.push(r);
    }
    files.write("certificates.csv", csv.as_bytes())?;
    files.write("certificates.json", serde_json::to_string_pretty(&reports)?.as_bytes())?;
    let no_violation = reports.iter().all(|r| r.verdict != Verdict::Violated);
    Ok(vec![CheckOutcome {
        name: "no_change_of_measure_violation".into(),
        passed: no_violation,
    }])
}
