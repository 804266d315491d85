//! Direct Monte Carlo for rare events of `D_{1/n} S_n`: hit probabilities,
//! decay-slope regressions and the matching rate-function references.

use crate::algebra::CarnotGroup;
use crate::error::{check_len, Error, Result};
use crate::par;
use crate::rate::{minimize_rate, RateProblem, RateSettings};
use crate::walk::{approximation_gap, derive_seed, sample_walk_trial, terminal_point, trial_rng, StepDistribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// Estimates with fewer hits still enter slope fits but are flagged.
pub const LOW_HIT_COUNT: u64 = 30;

const TRIAL_CHUNK: u64 = 4096;

/// Rare-event region for `D_{1/n} S_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EventSpec {
    /// `|x|_G >= threshold`.
    NormExceedance { threshold: f64 },
    /// `|center^{-1} * x|_G < radius`.
    Ball { center: Vec<f64>, radius: f64 },
    /// `|L(x)|_H >= threshold`.
    HorizontalExceedance { threshold: f64 },
}

impl EventSpec {
    pub fn validate(&self, group: &CarnotGroup) -> Result<()> {
        match self {
            EventSpec::NormExceedance { threshold } | EventSpec::HorizontalExceedance { threshold } => {
                if !threshold.is_finite() || *threshold < 0.0 {
                    return Err(Error::invalid(format!(
                        "event threshold must be finite and >= 0, got {threshold}"
                    )));
                }
            }
            EventSpec::Ball { center, radius } => {
                check_len(group.dim(), center.len())?;
                if center.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid("ball center must be finite"));
                }
                if !radius.is_finite() || *radius <= 0.0 {
                    return Err(Error::invalid(format!(
                        "ball radius must be finite and > 0, got {radius}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, group: &CarnotGroup, x: &[f64]) -> bool {
        match self {
            EventSpec::NormExceedance { threshold } => group.homogeneous_norm(x) >= *threshold,
            EventSpec::Ball { center, radius } => {
                let diff = group.difference(center, x).expect("validated dimensions");
                group.homogeneous_norm(&diff) < *radius
            }
            EventSpec::HorizontalExceedance { threshold } => {
                group.horizontal_norm(&group.horizontal_log(x)) >= *threshold
            }
        }
    }
}

/// Hit frequency of an event at one `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub n: usize,
    pub trials: u64,
    pub hits: u64,
    pub p_hat: f64,
    /// Wilson 95% interval; one-sided `[0, 1 - 0.05^{1/trials}]` when no hits.
    pub ci_low: f64,
    pub ci_high: f64,
    /// `(1/n) log p_hat`, absent when there are no hits.
    pub log_rate: Option<f64>,
}

impl McEstimate {
    pub fn from_counts(n: usize, trials: u64, hits: u64) -> Self {
        let (ci_low, ci_high) = wilson_interval(hits, trials);
        let p_hat = hits as f64 / trials as f64;
        McEstimate {
            n,
            trials,
            hits,
            p_hat,
            ci_low,
            ci_high,
            log_rate: (hits > 0).then(|| p_hat.ln() / n as f64),
        }
    }

    /// Whether the estimate enters slope fits (zero-hit rows are censored).
    pub fn usable(&self) -> bool {
        self.hits > 0
    }
}

/// 95% interval for a binomial proportion.
pub fn wilson_interval(hits: u64, trials: u64) -> (f64, f64) {
    let nt = trials as f64;
    if hits == 0 {
        return (0.0, 1.0 - 0.05f64.powf(1.0 / nt));
    }
    let p = hits as f64 / nt;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / nt;
    let center = (p + z2 / (2.0 * nt)) / denom;
    let half = Z95 / denom * (p * (1.0 - p) / nt + z2 / (4.0 * nt * nt)).sqrt();
    ((center - half).max(0.0).min(p), (center + half).min(1.0).max(p))
}

fn check_study(group: &CarnotGroup, dist: &StepDistribution, trials: u64) -> Result<()> {
    check_len(group.horizontal_dim(), dist.dim())?;
    if trials == 0 {
        return Err(Error::invalid("trials must be >= 1"));
    }
    Ok(())
}

/// `P(D_{1/n} S_n in event)` from `trials` independent walks.
pub fn estimate(
    group: &CarnotGroup,
    dist: &StepDistribution,
    event: &EventSpec,
    n: usize,
    trials: u64,
    seed: u64,
) -> Result<McEstimate> {
    check_study(group, dist, trials)?;
    event.validate(group)?;
    if n == 0 {
        return Err(Error::invalid("n must be >= 1"));
    }
    let inv = 1.0 / n as f64;
    let counts = par::map_chunks(trials, TRIAL_CHUNK, |start, len| {
        let mut hits = 0u64;
        for t in start..start + len {
            let mut rng = trial_rng(seed, t);
            let s = terminal_point(group, dist, n, &mut rng, None);
            let x = group.dilate(inv, &s).expect("dimension checked");
            hits += event.contains(group, &x) as u64;
        }
        hits
    });
    Ok(McEstimate::from_counts(n, trials, counts.iter().sum()))
}

/// Least-squares line through `(x, y)` with a 95% t-interval on the slope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Absent with fewer than three points.
    pub slope_ci: Option<(f64, f64)>,
}

pub fn fit_line(points: &[(f64, f64)]) -> Option<LineFit> {
    let k = points.len();
    if k < 2 {
        return None;
    }
    let kf = k as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / kf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / kf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_ci = (k >= 3).then(|| {
        let ssr: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
        let se = (ssr / (kf - 2.0) / sxx).sqrt();
        let t = StudentsT::new(0.0, 1.0, kf - 2.0)
            .expect("positive degrees of freedom")
            .inverse_cdf(0.975);
        (slope - t * se, slope + t * se)
    });
    Some(LineFit {
        slope,
        intercept,
        slope_ci,
    })
}

/// How the reference `inf J` over the event is evaluated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReferenceSettings {
    /// Boundary points in the first scan.
    pub boundary_points: usize,
    /// Boundary points in the refinement scan (0 skips it).
    pub refine_points: usize,
    /// Segments of the discretized rate functional.
    pub m: usize,
    pub rate: RateSettings,
    /// Dilation used for the monotonicity check at the minimizing point.
    pub dilation_check: f64,
}

impl Default for ReferenceSettings {
    fn default() -> Self {
        ReferenceSettings {
            boundary_points: 64,
            refine_points: 128,
            m: 32,
            rate: RateSettings {
                restarts: 4,
                ..RateSettings::default()
            },
            dilation_check: 1.1,
        }
    }
}

/// `inf J` over the event region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateReference {
    /// `inf J` (an upper estimate for boundary scans).
    pub inf_rate: f64,
    /// How `inf_rate` was obtained.
    pub provenance: String,
    /// Boundary point attaining the minimum, if any.
    pub argmin: Option<Vec<f64>>,
    /// Scan minima for the coarse and refined grids.
    pub coarse: Option<f64>,
    pub refined: Option<f64>,
    /// `J` at the dilated minimizer; should not be below `inf_rate`.
    pub dilated_value: Option<f64>,
    pub points_failed: usize,
}

impl RateReference {
    fn exact(value: f64, provenance: &str) -> Self {
        RateReference {
            inf_rate: value,
            provenance: provenance.into(),
            argmin: None,
            coarse: None,
            refined: None,
            dilated_value: None,
            points_failed: 0,
        }
    }

    /// `J` grows under the dilation check, as expected when the infimum
    /// sits on the boundary.
    pub fn monotone(&self) -> Option<bool> {
        self.dilated_value.map(|v| v >= self.inf_rate * (1.0 - 1e-6))
    }
}

/// Unit vectors of `R^dim`: both signs in 1D, equally spaced angles in 2D,
/// a Fibonacci lattice in 3D and seeded Gaussian directions otherwise.
pub fn sphere_directions(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    match dim {
        0 => Vec::new(),
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count)
            .map(|i| {
                let t = std::f64::consts::TAU * i as f64 / count as f64;
                vec![t.cos(), t.sin()]
            })
            .collect(),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|i| {
                    let z = 1.0 - (2 * i + 1) as f64 / count as f64;
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let phi = golden * i as f64;
                    vec![r * phi.cos(), r * phi.sin(), z]
                })
                .collect()
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..count)
                .map(|_| loop {
                    let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
                    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if norm > 1e-12 {
                        break v.into_iter().map(|x| x / norm).collect();
                    }
                })
                .collect()
        }
    }
}

fn rate_at(group: &CarnotGroup, dist: &StepDistribution, settings: &ReferenceSettings, target: &[f64]) -> Option<f64> {
    minimize_rate(&RateProblem {
        group,
        model: dist.model(),
        target: target.to_vec(),
        m: settings.m,
        settings: settings.rate.clone(),
    })
    .ok()
    .map(|r| r.value)
}

/// Minimum of `J` over the given points: `(value, argmin, failures)`.
fn scan(
    group: &CarnotGroup,
    dist: &StepDistribution,
    settings: &ReferenceSettings,
    points: &[Vec<f64>],
) -> (Option<(f64, Vec<f64>)>, usize) {
    let values = par::map_indexed(points.len(), |i| rate_at(group, dist, settings, &points[i]));
    let failed = values.iter().filter(|v| v.is_none()).count();
    let best = values
        .iter()
        .zip(points)
        .filter_map(|(v, p)| v.map(|v| (v, p)))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(v, p)| (v, p.clone()));
    (best, failed)
}

fn boundary_points(group: &CarnotGroup, event: &EventSpec, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let dirs = sphere_directions(group.dim(), count, seed);
    let mut out = Vec::with_capacity(dirs.len() + 1);
    match event {
        EventSpec::NormExceedance { threshold } => {
            for u in dirs {
                let scale = threshold / group.homogeneous_norm(&u);
                out.push(group.dilate(scale, &u)?);
            }
        }
        EventSpec::Ball { center, radius } => {
            out.push(center.clone());
            for u in dirs {
                let scale = radius / group.homogeneous_norm(&u);
                out.push(group.multiply(center, &group.dilate(scale, &u)?)?);
            }
        }
        EventSpec::HorizontalExceedance { .. } => unreachable!("handled in closed form"),
    }
    Ok(out)
}

/// `inf J` over the event, from the boundary of the region.
///
/// Horizontal exceedance reduces to `min_{|h|_H = a} Lambda*(h)`; the other
/// events are scanned with [`minimize_rate`] on a grid of boundary points
/// (plus the center for balls), which gives an upper estimate.
pub fn rate_reference(
    group: &CarnotGroup,
    dist: &StepDistribution,
    event: &EventSpec,
    settings: &ReferenceSettings,
) -> Result<RateReference> {
    event.validate(group)?;
    let identity = group.identity::<f64>();
    if event.contains(group, &identity) {
        return Ok(RateReference::exact(0.0, "identity_in_event"));
    }
    if let EventSpec::HorizontalExceedance { threshold } = event {
        let d1 = group.horizontal_dim();
        let count = settings.boundary_points.max(settings.refine_points);
        let mut best = f64::INFINITY;
        let mut argmin = None;
        for u in sphere_directions(d1, count, settings.rate.seed) {
            let s = threshold / group.horizontal_norm(&u);
            let h: Vec<f64> = u.iter().map(|v| v * s).collect();
            let v = dist.model().legendre(&h)?;
            if v < best {
                best = v;
                argmin = Some(group.exp_horizontal(&h)?);
            }
        }
        let mut r = RateReference::exact(best, "legendre_on_horizontal_sphere");
        r.argmin = argmin;
        return Ok(r);
    }

    let coarse_pts = boundary_points(group, event, settings.boundary_points, settings.rate.seed)?;
    let (coarse, mut failed) = scan(group, dist, settings, &coarse_pts);
    let mut best = coarse.clone();
    let mut refined_value = None;
    if settings.refine_points > 0 {
        let fine_pts = boundary_points(group, event, settings.refine_points, derive_seed(settings.rate.seed, 1))?;
        let (fine, f) = scan(group, dist, settings, &fine_pts);
        failed += f;
        refined_value = fine.as_ref().map(|b| b.0);
        if let Some(fb) = fine {
            if best.as_ref().is_none_or(|b| fb.0 < b.0) {
                best = Some(fb);
            }
        }
    }
    let Some((value, argmin)) = best else {
        return Err(Error::Infeasible {
            best_residual: f64::INFINITY,
            tolerance: settings.rate.tolerance,
        });
    };
    let dilated_value = match event {
        EventSpec::NormExceedance { .. } => {
            let far = group.dilate(settings.dilation_check, &argmin)?;
            rate_at(group, dist, settings, &far)
        }
        _ => None,
    };
    Ok(RateReference {
        inf_rate: value,
        provenance: "boundary_scan".into(),
        argmin: Some(argmin),
        coarse: coarse.map(|c| c.0),
        refined: refined_value,
        dilated_value,
        points_failed: failed,
    })
}

/// Decay of `log p_hat_n` along an `n` schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeReport {
    pub event: EventSpec,
    pub estimates: Vec<McEstimate>,
    /// `(n, log p_hat_n)` for the estimates with at least one hit.
    pub fit_points: Vec<(usize, f64)>,
    /// Absent with fewer than three usable estimates.
    pub fit: Option<LineFit>,
    /// `-inf J`, with its provenance.
    pub reference_slope: Option<f64>,
    pub reference: Option<RateReference>,
    pub warnings: Vec<String>,
}

impl SlopeReport {
    pub fn slope(&self) -> Option<f64> {
        self.fit.as_ref().map(|f| f.slope)
    }

    /// Long-format rows `n,trials,hits,p_hat,ci_low,ci_high,log_rate,usable`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,trials,hits,p_hat,ci_low,ci_high,log_rate,usable\n");
        for e in &self.estimates {
            out.push_str(&format!(
                "{},{},{},{:?},{:?},{:?},{},{}\n",
                e.n,
                e.trials,
                e.hits,
                e.p_hat,
                e.ci_low,
                e.ci_high,
                e.log_rate.map(|v| format!("{v:?}")).unwrap_or_default(),
                e.usable()
            ));
        }
        out
    }
}

/// Estimates at each `n`, regresses `log p_hat_n` on `n`, and attaches
/// `-inf J` over the event when `reference` is given.
pub fn slope_study(
    group: &CarnotGroup,
    dist: &StepDistribution,
    event: &EventSpec,
    schedule: &[usize],
    trials: u64,
    seed: u64,
    reference: Option<&ReferenceSettings>,
) -> Result<SlopeReport> {
    check_study(group, dist, trials)?;
    event.validate(group)?;
    if schedule.is_empty() || schedule[0] == 0 || schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid(
            "n schedule must be non-empty, positive and strictly increasing",
        ));
    }
    let mut estimates = Vec::with_capacity(schedule.len());
    for &n in schedule {
        estimates.push(estimate(group, dist, event, n, trials, derive_seed(seed, n as u64))?);
    }
    let fit_points: Vec<(usize, f64)> = estimates
        .iter()
        .filter(|e| e.usable())
        .map(|e| (e.n, e.p_hat.ln()))
        .collect();
    let mut warnings = Vec::new();
    for e in estimates.iter().filter(|e| e.usable() && e.hits < LOW_HIT_COUNT) {
        warnings.push(format!("n = {}: only {} hits; log p_hat is noisy", e.n, e.hits));
    }
    let fit = if fit_points.len() >= 3 {
        let pts: Vec<(f64, f64)> = fit_points.iter().map(|&(n, y)| (n as f64, y)).collect();
        fit_line(&pts)
    } else {
        warnings.push(format!(
            "only {} estimate(s) with hits; slope not fitted",
            fit_points.len()
        ));
        None
    };
    let reference = match reference {
        Some(r) => Some(rate_reference(group, dist, event, r)?),
        None => None,
    };
    if let Some(r) = &reference {
        if r.points_failed > 0 {
            warnings.push(format!(
                "{} boundary point(s) had no feasible rate solution",
                r.points_failed
            ));
        }
        if r.monotone() == Some(false) {
            warnings.push("rate decreased under dilation at the minimizing boundary point".into());
        }
    }
    Ok(SlopeReport {
        event: event.clone(),
        estimates,
        fit_points,
        fit,
        reference_slope: reference.as_ref().map(|r| -r.inf_rate),
        reference,
        warnings,
    })
}

/// One `(m, n)` cell of an approximation study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub m: usize,
    pub n: usize,
    pub trials: u64,
    /// Trials with gap above the threshold.
    pub exceed: u64,
    pub p_hat: f64,
    /// `(1/n) log p_hat`; absent (censored) when nothing exceeded.
    pub log_rate: Option<f64>,
    pub censored: bool,
    pub median_gap: f64,
    /// Trials whose gap is exactly zero.
    pub zero_gaps: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayStudy {
    pub threshold: f64,
    pub rows: Vec<DecayRow>,
    /// `(m, fraction of n-rows censored)`.
    pub censored_fraction: Vec<(usize, f64)>,
}

impl DecayStudy {
    pub fn row(&self, m: usize, n: usize) -> Option<&DecayRow> {
        self.rows.iter().find(|r| r.m == m && r.n == n)
    }

    /// Rows `m,n,trials,exceed,p_hat,log_rate,censored,median_gap,zero_gaps`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("m,n,trials,exceed,p_hat,log_rate,censored,median_gap,zero_gaps\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{:?},{},{},{:?},{}\n",
                r.m,
                r.n,
                r.trials,
                r.exceed,
                r.p_hat,
                r.log_rate.map(|v| format!("{v:?}")).unwrap_or_default(),
                r.censored,
                r.median_gap,
                r.zero_gaps
            ));
        }
        out
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

/// `P(|Psi_m(Y_n^m)^{-1} * D_{1/n} S_n|_G > threshold)` over the `(m, n)`
/// grid; every `m` is evaluated on the same walks for a given `n`.
pub fn approximation_decay_study(
    group: &CarnotGroup,
    dist: &StepDistribution,
    threshold: f64,
    n_schedule: &[usize],
    m_list: &[usize],
    trials: u64,
    seed: u64,
) -> Result<DecayStudy> {
    check_study(group, dist, trials)?;
    if !(threshold > 0.0) || !threshold.is_finite() {
        return Err(Error::invalid(format!(
            "gap threshold must be finite and > 0, got {threshold}"
        )));
    }
    if n_schedule.is_empty() || m_list.is_empty() {
        return Err(Error::invalid("n schedule and m list must be non-empty"));
    }
    for &n in n_schedule {
        if let Some(&m) = m_list.iter().find(|&&m| m == 0 || m > n) {
            return Err(Error::invalid(format!(
                "block count m = {m} must satisfy 1 <= m <= n = {n}"
            )));
        }
    }
    let mut rows = Vec::new();
    for &n in n_schedule {
        let cell_seed = derive_seed(seed, n as u64);
        let gaps: Vec<Result<Vec<f64>>> = par::map_indexed(trials as usize, |t| {
            let run = sample_walk_trial(group, dist, n, cell_seed, t as u64, true)?;
            m_list.iter().map(|&m| approximation_gap(group, &run, m)).collect()
        });
        let gaps: Vec<Vec<f64>> = gaps.into_iter().collect::<Result<_>>()?;
        for (j, &m) in m_list.iter().enumerate() {
            let mut col: Vec<f64> = gaps.iter().map(|g| g[j]).collect();
            let exceed = col.iter().filter(|&&g| g > threshold).count() as u64;
            let zero_gaps = col.iter().filter(|&&g| g == 0.0).count() as u64;
            let p_hat = exceed as f64 / trials as f64;
            rows.push(DecayRow {
                m,
                n,
                trials,
                exceed,
                p_hat,
                log_rate: (exceed > 0).then(|| p_hat.ln() / n as f64),
                censored: exceed == 0,
                median_gap: median(&mut col),
                zero_gaps,
            });
        }
    }
    let censored_fraction = m_list
        .iter()
        .map(|&m| {
            let cells: Vec<&DecayRow> = rows.iter().filter(|r| r.m == m).collect();
            let c = cells.iter().filter(|r| r.censored).count();
            (m, c as f64 / cells.len() as f64)
        })
        .collect();
    Ok(DecayStudy {
        threshold,
        rows,
        censored_fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rate::ModelKind;

    #[test]
    fn wilson_contains_estimate() {
        for (h, n) in [(0, 10), (1, 10), (5, 10), (10, 10), (37, 1000)] {
            let (lo, hi) = wilson_interval(h, n);
            let p = h as f64 / n as f64;
            assert!(lo <= p && p <= hi && lo >= 0.0 && hi <= 1.0, "{h}/{n}: [{lo}, {hi}]");
        }
        // textbook value: 5/10 gives (0.2366, 0.7634)
        let (lo, hi) = wilson_interval(5, 10);
        assert!((lo - 0.236_593).abs() < 1e-5 && (hi - 0.763_407).abs() < 1e-5);
    }

    #[test]
    fn line_fit_recovers_exact_line() {
        let pts: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, 2.0 - 0.5 * i as f64)).collect();
        let f = fit_line(&pts).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-14 && (f.intercept - 2.0).abs() < 1e-14);
        let (lo, hi) = f.slope_ci.unwrap();
        assert!((hi - lo).abs() < 1e-12);
        assert!(fit_line(&pts[..2]).unwrap().slope_ci.is_none());
    }

    #[test]
    fn certain_and_impossible_events() {
        let g = CarnotGroup::heisenberg(2).unwrap();
        let d = StepDistribution::new(ModelKind::Gaussian, &g);
        let e = estimate(&g, &d, &EventSpec::NormExceedance { threshold: 0.0 }, 5, 200, 1).unwrap();
        assert_eq!(e.hits, 200);
        let b = StepDistribution::new(ModelKind::Sphere { radius: 1.0 }, &g);
        let e = estimate(
            &g,
            &b,
            &EventSpec::HorizontalExceedance { threshold: 1.0 + 1e-9 },
            3,
            500,
            1,
        )
        .unwrap();
        assert_eq!(e.hits, 0);
        assert_eq!(e.log_rate, None);
        assert!(e.ci_high > 0.0);
    }

    #[test]
    fn invalid_studies_are_rejected() {
        let g = CarnotGroup::heisenberg(2).unwrap();
        let d = StepDistribution::new(ModelKind::Gaussian, &g);
        let ev = EventSpec::NormExceedance { threshold: 1.0 };
        assert!(estimate(&g, &d, &ev, 5, 0, 1).is_err());
        let bad = EventSpec::Ball {
            center: vec![0.0; 3],
            radius: 0.0,
        };
        assert!(estimate(&g, &d, &bad, 5, 10, 1).is_err());
        assert!(approximation_decay_study(&g, &d, 0.0, &[8], &[1], 10, 1).is_err());
        assert!(approximation_decay_study(&g, &d, 0.1, &[8], &[9], 10, 1).is_err());
    }

    #[test]
    fn fibonacci_directions_are_unit() {
        for dim in 1..6 {
            for u in sphere_directions(dim, 16, 3) {
                let n: f64 = u.iter().map(|v| v * v).sum();
                assert!((n - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ball_around_identity_has_zero_rate() {
        let g = CarnotGroup::heisenberg(2).unwrap();
        let d = StepDistribution::new(ModelKind::Gaussian, &g);
        let ev = EventSpec::Ball {
            center: vec![0.0; 3],
            radius: 0.1,
        };
        let r = rate_reference(&g, &d, &ev, &ReferenceSettings::default()).unwrap();
        assert_eq!(r.inf_rate, 0.0);
    }
}
