//! Points on `S^d`, geodesic distance, uniform sampling, greedy packings of
//! the shrunken upper hemisphere and the antipodally paired Voronoi
//! partition built on top of them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `| ||x|| - 1 |` for a valid point.
pub const UNIT_TOL: f64 = 1e-10;

/// A unit vector in `R^{d+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SpherePoint {
    coords: Vec<f64>,
}

impl TryFrom<Vec<f64>> for SpherePoint {
    type Error = Error;

    fn try_from(coords: Vec<f64>) -> Result<Self> {
        SpherePoint::new(coords)
    }
}

impl From<SpherePoint> for Vec<f64> {
    fn from(p: SpherePoint) -> Self {
        p.coords
    }
}

impl SpherePoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::Domain("a sphere point needs at least 2 coordinates".into()));
        }
        let norm = coords.iter().map(|c| c * c).sum::<f64>().sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOL {
            return Err(Error::Domain(format!("coordinates have norm {norm}, expected 1")));
        }
        Ok(Self { coords })
    }

    /// Projects a nonzero vector onto the sphere.
    pub fn normalized(mut coords: Vec<f64>) -> Result<Self> {
        let norm = coords.iter().map(|c| c * c).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() || coords.len() < 2 {
            return Err(Error::Domain("cannot normalize a zero or non-finite vector".into()));
        }
        coords.iter_mut().for_each(|c| *c /= norm);
        Ok(Self { coords })
    }

    /// `(cos phi, sin phi)` on the circle.
    pub fn from_angle(phi: f64) -> Self {
        Self {
            coords: vec![phi.cos(), phi.sin()],
        }
    }

    /// Standard basis vector `e_i` of `R^{d+1}` (zero based).
    pub fn basis(d: usize, i: usize) -> Self {
        let mut coords = vec![0.0; d + 1];
        coords[i] = 1.0;
        Self { coords }
    }

    /// `e_{d+1}`, the pole of the upper hemisphere.
    pub fn north_pole(d: usize) -> Self {
        Self::basis(d, d)
    }

    /// Intrinsic dimension `d` of the sphere the point lives on.
    pub fn dim(&self) -> usize {
        self.coords.len() - 1
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn last(&self) -> f64 {
        self.coords[self.coords.len() - 1]
    }

    pub fn dot(&self, other: &SpherePoint) -> f64 {
        self.coords.iter().zip(&other.coords).map(|(a, b)| a * b).sum()
    }

    pub fn antipode(&self) -> Self {
        Self {
            coords: self.coords.iter().map(|c| -c).collect(),
        }
    }

    /// Representative in the closed upper hemisphere: `x` if its last
    /// coordinate is non-negative, otherwise `-x`.
    pub fn hemisphere_rep(&self) -> Self {
        if self.last() >= 0.0 {
            self.clone()
        } else {
            self.antipode()
        }
    }

    /// Point at geodesic distance `angle` from `self` along the great circle
    /// through `toward`. `toward` must not be parallel to `self`.
    pub fn along_geodesic(&self, toward: &SpherePoint, angle: f64) -> Result<Self> {
        let c = self.dot(toward);
        let tangent: Vec<f64> = toward.coords.iter().zip(&self.coords).map(|(t, s)| t - c * s).collect();
        let norm = tangent.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return Err(Error::Domain("direction is parallel to the base point".into()));
        }
        let (s, co) = angle.sin_cos();
        let coords = self
            .coords
            .iter()
            .zip(&tangent)
            .map(|(p, t)| co * p + s * t / norm)
            .collect();
        SpherePoint::normalized(coords)
    }
}

/// Geodesic distance `arccos(a . b)` with the dot product clipped to `[-1, 1]`.
pub fn geodesic(a: &SpherePoint, b: &SpherePoint) -> f64 {
    a.dot(b).clamp(-1.0, 1.0).acos()
}

/// `count` points drawn uniformly from `S^d` by normalizing standard Gaussian
/// vectors. Deterministic in `seed`.
pub fn sample_uniform(d: usize, count: usize, seed: u64) -> Vec<SpherePoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let v: Vec<f64> = (0..=d).map(|_| StandardNormal.sample(&mut rng)).collect();
        if let Ok(p) = SpherePoint::normalized(v) {
            out.push(p);
        }
    }
    out
}

/// A `w`-separated set of centers inside the shrunken upper hemisphere
/// `S^d_+(w) = { x : x_{d+1} > 0, dist(x, equator) > w/2 }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparatedSet {
    pub d: usize,
    pub separation: f64,
    pub centers: Vec<SpherePoint>,
}

impl SeparatedSet {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Smallest pairwise geodesic distance, `+inf` for fewer than two centers.
    pub fn min_pairwise_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (i, a) in self.centers.iter().enumerate() {
            for b in &self.centers[i + 1..] {
                best = best.min(geodesic(a, b));
            }
        }
        best
    }
}

/// Rough count of `w`-separated points that fit on `S^d_+(w)`.
fn expected_centers(d: usize, w: f64) -> f64 {
    (std::f64::consts::PI / w).powi(d as i32)
}

/// Default candidate pool size: `100 (pi / w)^d`.
pub fn default_candidate_budget(d: usize, w: f64) -> usize {
    (100.0 * expected_centers(d, w)).ceil().max(1000.0) as usize
}

/// Greedy farthest-point packing of `S^d_+(w)` over a random candidate pool.
///
/// The first center is the candidate closest to the pole; afterwards the
/// candidate farthest from the current centers is added while its distance
/// exceeds `w`. The result is maximal with respect to the pool.
pub fn greedy_separated_set(d: usize, w: f64, candidate_budget: usize, seed: u64) -> Result<SeparatedSet> {
    if d == 0 {
        return Err(Error::Domain("sphere dimension must be >= 1".into()));
    }
    if !(w > 0.0) || w >= std::f64::consts::PI {
        return Err(Error::Domain(format!("separation {w} must lie in (0, pi)")));
    }
    let expected = expected_centers(d, w);
    if (candidate_budget as f64) < 10.0 * expected {
        return Err(Error::Budget(format!(
            "{candidate_budget} candidates for about {expected:.0} centers; need at least {:.0}",
            10.0 * expected
        )));
    }
    let height = (0.5 * w).sin();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<SpherePoint> = Vec::with_capacity(candidate_budget);
    while pool.len() < candidate_budget {
        let v: Vec<f64> = (0..=d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let Ok(p) = SpherePoint::normalized(v) else { continue };
        let p = if p.last() < 0.0 { p.antipode() } else { p };
        if p.last() > height {
            pool.push(p);
        }
    }

    let first = pool
        .iter()
        .enumerate()
        .fold(0, |best, (i, p)| if p.last() > pool[best].last() { i } else { best });
    let cos_w = w.cos();
    // Largest cosine to any chosen center; smaller means farther away.
    let mut nearest_cos: Vec<f64> = vec![f64::NEG_INFINITY; pool.len()];
    let mut chosen = Vec::new();
    let mut next = first;
    loop {
        let center = pool[next].clone();
        for (slot, p) in nearest_cos.iter_mut().zip(&pool) {
            let c = p.dot(&center);
            if c > *slot {
                *slot = c;
            }
        }
        chosen.push(center);
        let (idx, cos) = nearest_cos
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &c)| if c < acc.1 { (i, c) } else { acc });
        // strict separation: accept only if the geodesic distance exceeds w
        if cos >= cos_w || geodesic_from_cos(cos) <= w {
            break;
        }
        next = idx;
    }
    Ok(SeparatedSet {
        d,
        separation: w,
        centers: chosen,
    })
}

fn geodesic_from_cos(c: f64) -> f64 {
    c.clamp(-1.0, 1.0).acos()
}

/// Tie tolerance on dot products when choosing the nearest center.
const TIE_TOL: f64 = 1e-12;

/// How a point is mapped to a region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentRule {
    /// Nearest center (geodesic) to the upper-hemisphere representative of
    /// the point, ties to the lowest index.
    HemisphereVoronoi,
}

/// Partition of `S^d` into regions `R_z = R_z^+ u -R_z^+`, one per center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpherePartition {
    pub centers: SeparatedSet,
    pub rule: AssignmentRule,
}

impl SpherePartition {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Index of the region containing `x`.
    pub fn assign(&self, x: &SpherePoint) -> usize {
        let rep = x.hemisphere_rep();
        let mut best = 0;
        let mut best_dot = f64::NEG_INFINITY;
        for (i, c) in self.centers.centers.iter().enumerate() {
            let v = rep.dot(c);
            if v > best_dot + TIE_TOL {
                best = i;
                best_dot = v;
            }
        }
        best
    }
}

pub fn build_partition(centers: SeparatedSet) -> Result<SpherePartition> {
    if centers.is_empty() {
        return Err(Error::Domain("partition needs at least one center".into()));
    }
    Ok(SpherePartition {
        centers,
        rule: AssignmentRule::HemisphereVoronoi,
    })
}

/// Dense samples of every region of `partition`, about `per_region` each.
///
/// On the circle the samples are an equispaced angular grid; in higher
/// dimensions they are uniform draws. Every region additionally receives its
/// center and the antipode of its center.
pub fn region_samples(partition: &SpherePartition, per_region: usize, seed: u64) -> Vec<Vec<SpherePoint>> {
    let m = partition.len();
    let d = partition.centers.d;
    let total = per_region.max(1) * m;
    let points: Vec<SpherePoint> = if d == 1 {
        (0..total)
            .map(|k| SpherePoint::from_angle(2.0 * std::f64::consts::PI * (k as f64 + 0.5) / total as f64))
            .collect()
    } else {
        sample_uniform(d, total, seed)
    };
    let mut buckets: Vec<Vec<SpherePoint>> = vec![Vec::with_capacity(2 * per_region + 2); m];
    for (j, c) in partition.centers.centers.iter().enumerate() {
        buckets[j].push(c.clone());
        buckets[j].push(c.antipode());
    }
    for p in points {
        let j = partition.assign(&p);
        buckets[j].push(p);
    }
    buckets
}

/// Sampled `inf_{x in R_z} rho(x, target)`.
pub fn region_distance(samples: &[SpherePoint], target: &SpherePoint) -> f64 {
    let best = samples.iter().map(|x| x.dot(target)).fold(f64::NEG_INFINITY, f64::max);
    geodesic_from_cos(best)
}

/// Counts `|Z_i|` of the other centers whose sampled distance to region
/// `z_index` lies in `(i w/2, (i+1) w/2]`, for `i = 0, 1, ...`.
pub fn annulus_counts(
    centers: &SeparatedSet,
    partition: &SpherePartition,
    z_index: usize,
    per_region: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    if z_index >= centers.len() {
        return Err(Error::Index {
            index: z_index,
            len: centers.len(),
        });
    }
    let samples = region_samples(partition, per_region, seed);
    Ok(annulus_counts_from_samples(centers, &samples[z_index], z_index))
}

pub(crate) fn annulus_index(dist: f64, w: f64) -> usize {
    // (i w/2, (i+1) w/2]  ->  i = ceil(2 dist / w) - 1
    ((2.0 * dist / w).ceil() as usize).saturating_sub(1)
}

pub(crate) fn annulus_counts_from_samples(
    centers: &SeparatedSet,
    region: &[SpherePoint],
    z_index: usize,
) -> Vec<usize> {
    let mut counts: Vec<usize> = Vec::new();
    for (k, c) in centers.centers.iter().enumerate() {
        if k == z_index {
            continue;
        }
        let i = annulus_index(region_distance(region, c), centers.separation);
        if counts.len() <= i {
            counts.resize(i + 1, 0);
        }
        counts[i] += 1;
    }
    counts
}
