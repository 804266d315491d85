//! Random walks `S_n = exp(X_1) * ... * exp(X_n)` with horizontal i.i.d.
//! steps, their rescaling `D_{1/n} S_n`, and the block approximations
//! `Psi_m(Y_n^m)` used by the exponential-approximation studies.

use crate::algebra::CarnotGroup;
use crate::error::{check_len, Error, Result};
use crate::paths::endpoint_product;
use crate::rate::{CumulantModel, ModelKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Generator for trial `trial` of a study seeded with `seed`.
///
/// Each trial reads its own ChaCha stream, so results do not depend on how
/// trials are scheduled across threads.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Mixes a label into a master seed (splitmix64 finaliser), giving
/// independent seeds for the cells of a study.
pub fn derive_seed(master: u64, label: u64) -> u64 {
    let mut z = master
        ^ label
            .wrapping_add(0x9E37_79B9_7F4A_7C15)
            .wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Law of the horizontal steps.
#[derive(Clone, Debug)]
pub struct StepDistribution {
    model: CumulantModel,
}

impl StepDistribution {
    pub fn new(kind: ModelKind, group: &CarnotGroup) -> Self {
        StepDistribution {
            model: CumulantModel::new(kind, group),
        }
    }

    /// Accepts the same names as [`ModelKind::parse`].
    pub fn parse(text: &str, group: &CarnotGroup) -> Result<Self> {
        Ok(Self::new(ModelKind::parse(text)?, group))
    }

    pub fn kind(&self) -> ModelKind {
        self.model.kind()
    }

    pub fn name(&self) -> String {
        self.model.name()
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    /// The matching cumulant model (for rate computations).
    pub fn model(&self) -> &CumulantModel {
        &self.model
    }

    /// Bound `M` with `|X|_H <= M` almost surely, if there is one.
    pub fn radius(&self) -> Option<f64> {
        let d = self.dim() as f64;
        match self.kind() {
            ModelKind::Gaussian => None,
            ModelKind::UniformCube | ModelKind::Rademacher => Some(d.sqrt()),
            ModelKind::Sphere { radius } | ModelKind::Ball { radius } => Some(radius),
        }
    }

    pub fn bounded(&self) -> bool {
        self.radius().is_some()
    }

    /// Every shipped law is sub-Gaussian (Gaussian or bounded).
    pub fn sub_gaussian(&self) -> bool {
        true
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        self.model.sample_into(rng, out);
    }
}

/// One simulated walk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkRun {
    pub n: usize,
    pub seed: u64,
    pub trial: u64,
    /// `S_n`.
    pub terminal: Vec<f64>,
    /// `D_{1/n} S_n`.
    pub rescaled: Vec<f64>,
    /// `X_1, ..., X_n`, when requested.
    pub increments: Option<Vec<Vec<f64>>>,
}

impl WalkRun {
    /// Walk with prescribed steps (seed and trial are recorded as 0).
    pub fn from_increments(group: &CarnotGroup, increments: Vec<Vec<f64>>) -> Result<Self> {
        if increments.is_empty() {
            return Err(Error::invalid("a walk needs n >= 1 steps"));
        }
        let terminal = endpoint_product(group, &increments)?;
        let n = increments.len();
        let rescaled = group.dilate(1.0 / n as f64, &terminal)?;
        Ok(WalkRun {
            n,
            seed: 0,
            trial: 0,
            terminal,
            rescaled,
            increments: Some(increments),
        })
    }

    fn increments_or_err(&self) -> Result<&[Vec<f64>]> {
        self.increments
            .as_deref()
            .ok_or_else(|| Error::invalid("walk was sampled without retained increments"))
    }

    /// `D_{1/n} S_n` evaluated as `exp(X_1/n) * ... * exp(X_n/n)`.
    pub fn rescaled_by_steps(&self, group: &CarnotGroup) -> Result<Vec<f64>> {
        let inv = 1.0 / self.n as f64;
        let scaled: Vec<Vec<f64>> = self
            .increments_or_err()?
            .iter()
            .map(|x| x.iter().map(|v| v * inv).collect())
            .collect();
        endpoint_product(group, &scaled)
    }

    /// `(1/n) sum X_i`.
    pub fn horizontal_mean(&self) -> Result<Vec<f64>> {
        let xs = self.increments_or_err()?;
        let mut sum = xs[0].clone();
        for x in &xs[1..] {
            sum.iter_mut().zip(x).for_each(|(s, v)| *s += v);
        }
        let inv = 1.0 / self.n as f64;
        Ok(sum.into_iter().map(|v| v * inv).collect())
    }
}

/// Terminal point of one walk, reusing caller buffers.
pub(crate) fn terminal_point<R: Rng + ?Sized>(
    group: &CarnotGroup,
    dist: &StepDistribution,
    n: usize,
    rng: &mut R,
    mut retain: Option<&mut Vec<Vec<f64>>>,
) -> Vec<f64> {
    let dim = group.dim();
    let d1 = group.horizontal_dim();
    let mut acc = vec![0.0; dim];
    let mut next = vec![0.0; dim];
    let mut step = vec![0.0; dim];
    for _ in 0..n {
        dist.sample_into(rng, &mut step[..d1]);
        if let Some(store) = retain.as_deref_mut() {
            store.push(step[..d1].to_vec());
        }
        group.bcdh_into(&acc, &step, &mut next);
        std::mem::swap(&mut acc, &mut next);
    }
    acc
}

fn check_walk(group: &CarnotGroup, dist: &StepDistribution, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("a walk needs n >= 1 steps"));
    }
    check_len(group.horizontal_dim(), dist.dim())
}

/// Samples trial 0 of `seed` without keeping the steps.
pub fn sample_walk(group: &CarnotGroup, dist: &StepDistribution, n: usize, seed: u64) -> Result<WalkRun> {
    sample_walk_trial(group, dist, n, seed, 0, false)
}

/// Samples trial `trial` of `seed`; `retain` keeps `X_1..X_n`.
pub fn sample_walk_trial(
    group: &CarnotGroup,
    dist: &StepDistribution,
    n: usize,
    seed: u64,
    trial: u64,
    retain: bool,
) -> Result<WalkRun> {
    check_walk(group, dist, n)?;
    let mut rng = trial_rng(seed, trial);
    let mut store = retain.then(|| Vec::with_capacity(n));
    let terminal = terminal_point(group, dist, n, &mut rng, store.as_mut());
    let rescaled = group.dilate(1.0 / n as f64, &terminal)?;
    Ok(WalkRun {
        n,
        seed,
        trial,
        terminal,
        rescaled,
        increments: store,
    })
}

/// Rescaled block means `Y_n^{m,k}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockProjection {
    pub m: usize,
    pub n: usize,
    /// `n_0 = 0 < n_1 < ... < n_m = n`.
    pub boundaries: Vec<usize>,
    /// `(1/n)(X_{n_{k-1}+1} + ... + X_{n_k})`.
    pub means: Vec<Vec<f64>>,
}

impl BlockProjection {
    /// `Psi_m(Y) = exp(Y^1) * ... * exp(Y^m)`.
    pub fn product(&self, group: &CarnotGroup) -> Result<Vec<f64>> {
        endpoint_product(group, &self.means)
    }
}

/// Splits the retained steps into `m` blocks of `floor(n/m)` steps, the last
/// block taking the remainder.
pub fn block_projection(run: &WalkRun, m: usize) -> Result<BlockProjection> {
    let xs = run.increments_or_err()?;
    let n = run.n;
    if m == 0 || m > n {
        return Err(Error::invalid(format!(
            "block count must satisfy 1 <= m <= n = {n}, got {m}"
        )));
    }
    let size = n / m;
    let mut boundaries: Vec<usize> = (0..m).map(|k| k * size).collect();
    boundaries.push(n);
    let inv = 1.0 / n as f64;
    let means = boundaries
        .windows(2)
        .map(|w| {
            let mut sum = xs[w[0]].clone();
            for x in &xs[w[0] + 1..w[1]] {
                sum.iter_mut().zip(x).for_each(|(s, v)| *s += v);
            }
            sum.into_iter().map(|v| v * inv).collect()
        })
        .collect();
    Ok(BlockProjection {
        m,
        n,
        boundaries,
        means,
    })
}

/// `Psi_m(Y_n^m)^{-1} * D_{1/n} S_n`, with `D_{1/n} S_n` evaluated step by
/// step so that `m = n` reproduces it bit for bit.
pub fn approximation_gap_element(group: &CarnotGroup, run: &WalkRun, m: usize) -> Result<Vec<f64>> {
    let blocks = block_projection(run, m)?;
    let approx = blocks.product(group)?;
    let exact = run.rescaled_by_steps(group)?;
    group.difference(&approx, &exact)
}

/// `|Psi_m(Y_n^m)^{-1} * D_{1/n} S_n|_G`.
pub fn approximation_gap(group: &CarnotGroup, run: &WalkRun, m: usize) -> Result<f64> {
    Ok(group.homogeneous_norm(&approximation_gap_element(group, run, m)?))
}
