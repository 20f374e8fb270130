//! Per-epoch resampling: draw k per point, move the moving boundary, drop
//! points outside the sampled geometry, then split into batches.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CollocationPoint, CollocationSet, Population, SamplingError, ScenarioSpec};

/// One `k` per point of each population.
#[derive(Clone, Debug, PartialEq)]
pub struct KAssignment {
    pub volume: Vec<f64>,
    pub dirichlet: Vec<f64>,
    pub neumann: Vec<f64>,
    pub moving: Vec<f64>,
}

impl KAssignment {
    pub fn get(&self, p: Population) -> &[f64] {
        match p {
            Population::Volume => &self.volume,
            Population::Dirichlet => &self.dirichlet,
            Population::Neumann => &self.neumann,
            Population::Moving => &self.moving,
        }
    }

    /// Same `k` everywhere.
    pub fn constant(set: &CollocationSet, k: f64) -> Self {
        Self {
            volume: vec![k; set.volume.len()],
            dirichlet: vec![k; set.dirichlet.len()],
            neumann: vec![k; set.neumann.len()],
            moving: vec![k; set.moving.len()],
        }
    }
}

/// Independent uniform draws over the scenario's k range; static scenarios
/// get the reference value everywhere.
pub fn sample_parameters(set: &CollocationSet, scenario: &ScenarioSpec, seed: u64) -> KAssignment {
    sample_parameters_with_rng(set, scenario, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn sample_parameters_with_rng<R: Rng + ?Sized>(set: &CollocationSet, scenario: &ScenarioSpec, rng: &mut R) -> KAssignment {
    let [lo, hi] = scenario.k_range;
    if !scenario.parametric {
        return KAssignment::constant(set, scenario.k_ref);
    }
    if lo == hi {
        return KAssignment::constant(set, lo);
    }
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(lo..=hi)).collect() };
    KAssignment {
        volume: draw(set.volume.len()),
        dirichlet: draw(set.dirichlet.len()),
        neumann: draw(set.neumann.len()),
        moving: draw(set.moving.len()),
    }
}

/// A training point for one epoch: possibly moved position, its `k`, and the
/// labels it carries from the source set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampledPoint {
    pub position: [f64; 3],
    pub k: f64,
    pub origin: Population,
    /// Index into the origin population of the source set.
    pub source: usize,
    pub velocity: [f64; 3],
    pub pressure: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rejection {
    pub origin: Population,
    pub source: usize,
    pub reason: String,
}

/// Filtered collections for one epoch. `dirichlet` holds static Dirichlet
/// points first, then the moved-and-filtered moving points.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SampledSets {
    pub volume: Vec<SampledPoint>,
    pub dirichlet: Vec<SampledPoint>,
    pub neumann: Vec<SampledPoint>,
    pub rejected: Vec<Rejection>,
}

impl SampledSets {
    pub fn len(&self) -> usize {
        self.volume.len() + self.dirichlet.len() + self.neumann.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn sampled(pt: &CollocationPoint, position: [f64; 3], k: f64, origin: Population, source: usize) -> SampledPoint {
    SampledPoint {
        position,
        k,
        origin,
        source,
        velocity: pt.velocity.unwrap_or_default(),
        pressure: pt.pressure.unwrap_or_default(),
    }
}

pub fn apply_parametric_pipeline(
    set: &CollocationSet,
    ks: &KAssignment,
    scenario: &ScenarioSpec,
) -> Result<SampledSets, SamplingError> {
    for pop in Population::ALL {
        let (n, m) = (set.population(pop).len(), ks.get(pop).len());
        if n != m {
            return Err(SamplingError::Assignment(format!("set '{}' has {n} points but {m} k values", pop.tag())));
        }
    }
    let mut out = SampledSets::default();
    let finite = |x: &[f64; 3], k: f64| x.iter().all(|v| v.is_finite()) && k.is_finite();
    for pop in [Population::Volume, Population::Dirichlet, Population::Neumann, Population::Moving] {
        for (i, (pt, &k)) in set.population(pop).iter().zip(ks.get(pop)).enumerate() {
            if !finite(&pt.position, k) {
                out.rejected.push(Rejection {
                    origin: pop,
                    source: i,
                    reason: format!("non-finite input x={:?} k={k}", pt.position),
                });
                continue;
            }
            let (pos, keep) = if pop == Population::Moving {
                let moved = scenario.transform(&pt.position, k);
                (moved, scenario.inside_m(&moved, k))
            } else {
                (pt.position, scenario.inside_fdn(&pt.position, k))
            };
            if !keep {
                continue;
            }
            let s = sampled(pt, pos, k, pop, i);
            match pop {
                Population::Volume => out.volume.push(s),
                Population::Dirichlet | Population::Moving => out.dirichlet.push(s),
                Population::Neumann => out.neumann.push(s),
            }
        }
    }
    for r in &out.rejected {
        log::warn!("rejected {} point {}: {}", r.origin.tag(), r.source, r.reason);
    }
    Ok(out)
}

/// One minibatch with a proportional share of every population.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Batch {
    pub volume: Vec<SampledPoint>,
    pub dirichlet: Vec<SampledPoint>,
    pub neumann: Vec<SampledPoint>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.volume.len() + self.dirichlet.len() + self.neumann.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn make_batches(sets: &SampledSets, max_batch_size: usize, seed: u64) -> Result<Vec<Batch>, SamplingError> {
    make_batches_with_rng(sets, max_batch_size, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Shuffles each population and splits all of them into the same number of
/// near-equal parts, chosen so that no part exceeds `max_batch_size`.
pub fn make_batches_with_rng<R: Rng + ?Sized>(
    sets: &SampledSets,
    max_batch_size: usize,
    rng: &mut R,
) -> Result<Vec<Batch>, SamplingError> {
    if max_batch_size == 0 {
        return Err(SamplingError::BatchSize);
    }
    let pops = [&sets.volume, &sets.dirichlet, &sets.neumann];
    let nb = pops.iter().map(|p| p.len().div_ceil(max_batch_size)).max().unwrap_or(0).max(1);
    let mut batches = vec![Batch::default(); nb];
    for (which, pop) in pops.iter().enumerate() {
        let mut pts: Vec<SampledPoint> = pop.to_vec();
        pts.shuffle(rng);
        let (base, extra) = (pts.len() / nb, pts.len() % nb);
        let mut it = pts.into_iter();
        for (b, batch) in batches.iter_mut().enumerate() {
            let part: Vec<SampledPoint> = it.by_ref().take(base + usize::from(b < extra)).collect();
            match which {
                0 => batch.volume = part,
                1 => batch.dirichlet = part,
                _ => batch.neumann = part,
            }
        }
    }
    Ok(batches)
}
