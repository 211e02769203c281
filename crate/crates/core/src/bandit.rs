//! Bandit episodes on the sphere, regret accounting, the empirical
//! change-of-measure certifier and the `eps` schedule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{argmax, CandidateGp};
use crate::hard::{adversarial_pair, Combination, FunctionClass, Objective};
use crate::sphere::{region_samples, sample_uniform, SpherePartition, SpherePoint};

/// Independent stream `stream` of a master seed.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = master ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Number of uniform samples checked against the declared optimum.
pub const OPTIMUM_CHECK_SAMPLES: usize = 10_000;

/// A reward function with Gaussian observation noise.
pub struct Environment<'a> {
    objective: &'a dyn Objective,
    pub d: usize,
    pub noise_std: f64,
    pub optimum: f64,
    pub seed: u64,
}

impl<'a> Environment<'a> {
    /// `noise_std = 0` gives noise-free observations.
    pub fn new(objective: &'a dyn Objective, d: usize, noise_std: f64, optimum: f64, seed: u64) -> Result<Self> {
        if !(noise_std >= 0.0) || !noise_std.is_finite() {
            return Err(Error::Domain(format!("noise std must be >= 0, got {noise_std}")));
        }
        let pts = sample_uniform(d, OPTIMUM_CHECK_SAMPLES, derive_seed(seed, u64::MAX));
        let best = pts.iter().map(|x| objective.value(x)).fold(f64::NEG_INFINITY, f64::max);
        if best > optimum + 1e-12 * optimum.abs().max(1.0) {
            return Err(Error::Domain(format!(
                "sampled value {best} exceeds the declared optimum {optimum}"
            )));
        }
        Ok(Self {
            objective,
            d,
            noise_std,
            optimum,
            seed,
        })
    }

    /// Optimum taken as the largest value over uniform samples and `extra`.
    pub fn with_sampled_optimum(
        objective: &'a dyn Objective,
        d: usize,
        noise_std: f64,
        extra: &[SpherePoint],
        seed: u64,
    ) -> Result<Self> {
        let pts = sample_uniform(d, OPTIMUM_CHECK_SAMPLES, derive_seed(seed, u64::MAX));
        let optimum = pts
            .iter()
            .chain(extra)
            .map(|x| objective.value(x))
            .fold(f64::NEG_INFINITY, f64::max);
        Self::new(objective, d, noise_std, optimum, seed)
    }

    pub fn value(&self, x: &SpherePoint) -> f64 {
        self.objective.value(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    GpUcb,
    MaxVariance,
    Random,
}

/// Exploration weight of GP-UCB; the acquisition is `mean + sqrt(beta_t) std`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BetaSchedule {
    /// `beta_t = 2 ln(|candidates| t^2)`.
    Default,
    Constant {
        beta: f64,
    },
}

impl BetaSchedule {
    pub fn beta(&self, n_candidates: usize, t: usize) -> f64 {
        match self {
            BetaSchedule::Default => 2.0 * (n_candidates as f64 * (t as f64).powi(2)).ln(),
            BetaSchedule::Constant { beta } => *beta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmParams {
    pub theta: f64,
    /// Noise variance assumed by the GP model.
    pub noise_var: f64,
    pub beta: BetaSchedule,
}

/// Everything recorded over one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    pub queries: Vec<usize>,
    pub points: Vec<SpherePoint>,
    pub observations: Vec<f64>,
    pub instant_regret: Vec<f64>,
    pub cumulative_regret: f64,
    pub reported_index: usize,
    pub reported: SpherePoint,
    pub simple_regret: f64,
    pub region_counts: Option<Vec<usize>>,
    pub reported_region: Option<usize>,
}

impl RegretTrace {
    /// `R_T` recomputed from the instantaneous regrets.
    pub fn recomputed_cumulative(&self) -> f64 {
        self.instant_regret.iter().sum()
    }
}

/// Runs `algorithm` for `T` steps with queries restricted to `candidates`.
/// The reported maximizer is the candidate with the largest posterior mean.
pub fn run_episode(
    algorithm: Algorithm,
    env: &Environment,
    t_max: usize,
    candidates: &[SpherePoint],
    params: &AlgorithmParams,
    partition: Option<&SpherePartition>,
) -> Result<RegretTrace> {
    if t_max == 0 {
        return Err(Error::Domain("T must be >= 1".into()));
    }
    let mut gp = CandidateGp::new(candidates.to_vec(), params.theta, params.noise_var)?;
    let values: Vec<f64> = candidates.iter().map(|x| env.value(x)).collect();
    let mut noise_rng = ChaCha8Rng::seed_from_u64(derive_seed(env.seed, 0));
    let mut pick_rng = ChaCha8Rng::seed_from_u64(derive_seed(env.seed, 1));
    let c = candidates.len();
    let mut queries = Vec::with_capacity(t_max);
    let mut observations = Vec::with_capacity(t_max);
    let mut instant_regret = Vec::with_capacity(t_max);
    for t in 1..=t_max {
        let p = match algorithm {
            Algorithm::GpUcb => {
                let root_beta = params.beta.beta(c, t).max(0.0).sqrt();
                let score: Vec<f64> = gp
                    .means()
                    .iter()
                    .zip(gp.variances())
                    .map(|(m, v)| m + root_beta * v.max(0.0).sqrt())
                    .collect();
                argmax(&score)
            }
            Algorithm::MaxVariance => gp.argmax_variance(),
            Algorithm::Random => pick_rng.random_range(0..c),
        };
        let noise: f64 = StandardNormal.sample(&mut noise_rng);
        let y = values[p] + env.noise_std * noise;
        gp.observe(p, y)?;
        queries.push(p);
        observations.push(y);
        instant_regret.push(env.optimum - values[p]);
    }
    let reported_index = argmax(gp.means());
    let reported = candidates[reported_index].clone();
    let region_counts = partition.map(|part| {
        let mut counts = vec![0; part.len()];
        for &q in &queries {
            counts[part.assign(&candidates[q])] += 1;
        }
        counts
    });
    Ok(RegretTrace {
        points: queries.iter().map(|&q| candidates[q].clone()).collect(),
        queries,
        observations,
        cumulative_regret: instant_regret.iter().sum(),
        instant_regret,
        simple_regret: env.optimum - values[reported_index],
        reported_region: partition.map(|p| p.assign(&reported)),
        reported,
        reported_index,
        region_counts,
    })
}

/// `KL(N(mu1, sigma^2) || N(mu2, sigma^2)) = (mu1 - mu2)^2 / (2 sigma^2)`.
pub fn kl_gaussian(mu1: f64, mu2: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
    }
    Ok((mu1 - mu2).powi(2) / (2.0 * sigma * sigma))
}

/// Sampled `sup_{x in R_j} KL(N(f(x), sigma^2) || N(f~(x), sigma^2))` per region.
pub fn max_kl_per_region(
    f: &dyn Objective,
    f_tilde: &dyn Objective,
    partition: &SpherePartition,
    sigma: f64,
    per_region: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
    }
    let samples = region_samples(partition, per_region, seed);
    samples
        .iter()
        .map(|region| {
            region
                .iter()
                .map(|x| kl_gaussian(f.value(x), f_tilde.value(x), sigma))
                .try_fold(0.0f64, |acc, v| v.map(|v| acc.max(v)))
        })
        .collect()
}

/// Two-sided Wilson score interval at 95%.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let n = trials as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    /// The reported maximizer lies in the region of member `i`.
    ReportInRegion,
    /// At least half of the queries lie in the region of member `i`.
    HalfQueriesInRegion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    PremisesNotMet,
    Holds,
    Violated,
}

/// Settings shared by every certifier run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifySettings {
    pub algorithm: Algorithm,
    pub params: AlgorithmParams,
    pub horizon: usize,
    pub delta: f64,
    pub trials: usize,
    pub event: Event,
    pub noise_std: f64,
    pub per_region: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub pair: (usize, usize),
    pub horizon: usize,
    pub delta: f64,
    pub trials: usize,
    pub event: Event,
    pub p_f: f64,
    pub p_f_interval: (f64, f64),
    pub p_f_tilde: f64,
    pub p_f_tilde_interval: (f64, f64),
    pub mean_counts: Vec<f64>,
    pub max_kl: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub verdict: Verdict,
}

fn event_holds(event: Event, trace: &RegretTrace, region: usize, horizon: usize) -> bool {
    match event {
        Event::ReportInRegion => trace.reported_region == Some(region),
        Event::HalfQueriesInRegion => {
            let counts = trace.region_counts.as_ref().expect("partition attached");
            2 * counts[region] >= horizon
        }
    }
}

/// Estimates both sides of the change-of-measure inequality for
/// `f = f_i` against `f~ = f_i + 2 f_j` (or `f~ = f` when `i = j`).
///
/// The event is defined through the region of member `i`. Premises are
/// accepted when the Wilson interval of `P_f(A)` lies above `1 - delta`
/// and that of `P_f~(A)` below `delta`.
pub fn certify_change_of_measure(
    fc: &FunctionClass,
    pair: (usize, usize),
    candidates: &[SpherePoint],
    s: &CertifySettings,
) -> Result<CertificateReport> {
    if s.trials < 30 {
        return Err(Error::Domain(format!("at least 30 trials required, got {}", s.trials)));
    }
    if !(s.delta > 0.0 && s.delta < 1.0 / 3.0) {
        return Err(Error::Domain(format!("delta must lie in (0, 1/3), got {}", s.delta)));
    }
    if !(s.noise_std > 0.0) {
        return Err(Error::Domain("the certifier needs positive observation noise".into()));
    }
    let (i, j) = pair;
    let (f, f_tilde): (Combination, Combination) = if i == j {
        let fi = Combination::single(fc.member(i)?.clone());
        (fi.clone(), fi)
    } else {
        adversarial_pair(fc, i, j)?
    };
    let d = fc.kp.d;
    let partition = &fc.partition;
    let run = |obj: &Combination, trial: usize, stream: u64| -> Result<RegretTrace> {
        let env_seed = derive_seed(derive_seed(s.seed, stream), trial as u64);
        let env = Environment {
            objective: obj,
            d,
            noise_std: s.noise_std,
            optimum: f64::NAN,
            seed: env_seed,
        };
        run_episode(s.algorithm, &env, s.horizon, candidates, &s.params, Some(partition))
    };
    let under_f: Vec<RegretTrace> = (0..s.trials)
        .into_par_iter()
        .map(|k| run(&f, k, 0))
        .collect::<Result<Vec<_>>>()?;
    let under_ft: Vec<RegretTrace> = (0..s.trials)
        .into_par_iter()
        .map(|k| run(&f_tilde, k, 1))
        .collect::<Result<Vec<_>>>()?;
    let hits_f = under_f
        .iter()
        .filter(|tr| event_holds(s.event, tr, i, s.horizon))
        .count();
    let hits_ft = under_ft
        .iter()
        .filter(|tr| event_holds(s.event, tr, i, s.horizon))
        .count();
    let p_f_interval = wilson_interval(hits_f, s.trials);
    let p_f_tilde_interval = wilson_interval(hits_ft, s.trials);

    let m = partition.len();
    let mut mean_counts = vec![0.0; m];
    for tr in &under_f {
        for (acc, &c) in mean_counts
            .iter_mut()
            .zip(tr.region_counts.as_ref().expect("partition attached"))
        {
            *acc += c as f64;
        }
    }
    mean_counts.iter_mut().for_each(|c| *c /= s.trials as f64);
    let max_kl = max_kl_per_region(
        &f,
        &f_tilde,
        partition,
        s.noise_std,
        s.per_region,
        derive_seed(s.seed, 2),
    )?;
    let lhs: f64 = mean_counts.iter().zip(&max_kl).map(|(n, k)| n * k).sum();
    let rhs = (1.0 / (2.4 * s.delta)).ln();
    let premises = p_f_interval.0 >= 1.0 - s.delta && p_f_tilde_interval.1 <= s.delta;
    let verdict = match (premises, lhs >= rhs) {
        (false, _) => Verdict::PremisesNotMet,
        (true, true) => Verdict::Holds,
        (true, false) => Verdict::Violated,
    };
    Ok(CertificateReport {
        pair,
        horizon: s.horizon,
        delta: s.delta,
        trials: s.trials,
        event: s.event,
        p_f: hits_f as f64 / s.trials as f64,
        p_f_interval,
        p_f_tilde: hits_ft as f64 / s.trials as f64,
        p_f_tilde_interval,
        mean_counts,
        max_kl,
        lhs,
        rhs,
        verdict,
    })
}

/// Maximum fixed-point iterations of [`eps_schedule`].
pub const EPS_MAX_ITER: usize = 200;
/// Relative tolerance of the fixed point.
pub const EPS_TOL: f64 = 1e-10;

/// Right-hand side of the fixed-point equation
/// `eps = (C/2) sqrt(sigma^2/T L^d (ln L)^{-d} ln(1/delta))`, `L = ln(B/eps)`.
pub fn eps_map(eps: f64, t: usize, sigma: f64, b: f64, delta: f64, d: usize, c_tilde: f64) -> f64 {
    let l = (b / eps).ln();
    let df = d as f64;
    0.5 * c_tilde * (sigma * sigma / t as f64 * l.powf(df) * l.ln().powf(-df) * (1.0 / delta).ln()).sqrt()
}

/// Solves the `eps` schedule by fixed-point iteration.
pub fn eps_schedule(t: usize, sigma: f64, b: f64, delta: f64, d: usize, c_tilde: f64) -> Result<f64> {
    if !(sigma > 0.0) || !(b > 0.0) || !(c_tilde > 0.0) || d == 0 {
        return Err(Error::Domain("sigma, B, the constant and d must be positive".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("delta must lie in (0, 1), got {delta}")));
    }
    let scale = sigma * sigma * (1.0 / delta).ln();
    if (t as f64) * b * b < 100.0 * scale {
        return Err(Error::Hypothesis(format!(
            "T B^2 = {:.3e} is not large against sigma^2 ln(1/delta) = {scale:.3e}",
            t as f64 * b * b
        )));
    }
    let mut eps = b / std::f64::consts::E.powi(2);
    for _ in 0..EPS_MAX_ITER {
        let next = eps_map(eps, t, sigma, b, delta, d, c_tilde);
        if !(next > 0.0) || !(b / next > std::f64::consts::E) {
            return Err(Error::Hypothesis(format!(
                "iterate {next:e} leaves the region B/eps > e"
            )));
        }
        if ((next - eps) / next).abs() < EPS_TOL {
            if next >= 0.5 * b {
                return Err(Error::Hypothesis(format!("eps = {next} is not below B/2")));
            }
            return Ok(next);
        }
        eps = next;
    }
    Err(Error::Convergence(format!(
        "eps schedule did not converge in {EPS_MAX_ITER} iterations"
    )))
}

/// Worst member's cumulative regret over a class, each member run with the
/// same environment seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstMember {
    pub member: usize,
    pub cumulative_regret: f64,
    pub simple_regret: f64,
    pub region_counts: Vec<usize>,
}

pub fn worst_member_regret(
    fc: &FunctionClass,
    algorithm: Algorithm,
    horizon: usize,
    candidates: &[SpherePoint],
    params: &AlgorithmParams,
    noise_std: f64,
    seed: u64,
) -> Result<WorstMember> {
    let runs: Vec<(usize, RegretTrace)> = fc
        .functions
        .par_iter()
        .enumerate()
        .map(|(k, f)| {
            let env = Environment {
                objective: f,
                d: fc.kp.d,
                noise_std,
                optimum: 2.0 * fc.eps,
                seed,
            };
            run_episode(algorithm, &env, horizon, candidates, params, Some(&fc.partition)).map(|tr| (k, tr))
        })
        .collect::<Result<Vec<_>>>()?;
    let (member, tr) = runs
        .into_iter()
        .fold(None::<(usize, RegretTrace)>, |best, cur| match best {
            Some(b) if b.1.cumulative_regret >= cur.1.cumulative_regret => Some(b),
            _ => Some(cur),
        })
        .ok_or_else(|| Error::Domain("function class is empty".into()))?;
    Ok(WorstMember {
        member,
        cumulative_regret: tr.cumulative_regret,
        simple_regret: tr.simple_regret,
        region_counts: tr.region_counts.unwrap_or_default(),
    })
}
