//! Experiment configuration: one JSON document, with command-line overrides.

use crate::error::CliError;
use carnot_core::diagnostics::{SubExpParams, WindowConvention, MAX_MGF_LAMBDA};
use carnot_core::mc::{EventSpec, ReferenceSettings};
use carnot_core::rate::{ModelKind, RateSettings};
use carnot_core::walk::StepDistribution;
use carnot_core::{CarnotGroup, GroupDescriptor};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Builtin (`heisenberg`, `heisenberg:4`, `engel`, `filiform:4`,
    /// `euclidean:1`) or path to a JSON group descriptor.
    #[serde(default = "default_group")]
    pub group: String,
    /// Step law, e.g. `gaussian`, `uniform_cube`, `ball:2`.
    #[serde(default = "default_distribution")]
    pub distribution: String,
    #[serde(default)]
    pub seed: u64,
    /// Output directory; not part of the config hash.
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub walk: WalkConfig,
    #[serde(default)]
    pub rate: RateConfig,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub approx: ApproxConfig,
    #[serde(default)]
    pub diag: DiagConfig,
}

fn default_group() -> String {
    "heisenberg".into()
}

fn default_distribution() -> String {
    "gaussian".into()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            group: default_group(),
            distribution: default_distribution(),
            seed: 0,
            out: None,
            walk: WalkConfig::default(),
            rate: RateConfig::default(),
            mc: McConfig::default(),
            approx: ApproxConfig::default(),
            diag: DiagConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WalkConfig {
    pub n: usize,
    pub trials: u64,
    /// Block count for the approximation gap column.
    pub m: Option<usize>,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            n: 100,
            trials: 10,
            m: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RateConfig {
    /// Target point; the identity when absent.
    pub target: Option<Vec<f64>>,
    pub m: usize,
    /// When set, `J_m` is computed along this schedule instead of at `m`.
    pub m_schedule: Option<Vec<usize>>,
    /// Optimizer settings; `seed` is replaced by the master seed.
    pub settings: RateSettings,
}

impl Default for RateConfig {
    fn default() -> Self {
        RateConfig {
            target: None,
            m: 32,
            m_schedule: None,
            settings: RateSettings::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    pub event: EventSpec,
    pub n_schedule: Vec<usize>,
    pub trials: u64,
    /// `null` skips the `inf J` reference.
    pub reference: Option<ReferenceSettings>,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            event: EventSpec::NormExceedance { threshold: 1.2 },
            n_schedule: vec![4, 8, 12, 16],
            trials: 100_000,
            reference: Some(ReferenceSettings::default()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ApproxConfig {
    pub delta: f64,
    pub n_schedule: Vec<usize>,
    pub m_list: Vec<usize>,
    pub trials: u64,
}

impl Default for ApproxConfig {
    fn default() -> Self {
        ApproxConfig {
            delta: 0.05,
            n_schedule: vec![512],
            m_list: vec![1, 4, 16, 64],
            trials: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagConfig {
    /// `(k, l)` windows.
    pub windows: Vec<(usize, usize)>,
    pub lambdas: Vec<f64>,
    pub trials: u64,
    pub convention: WindowConvention,
    /// Summands for the sub-exponential bookkeeping table.
    pub subexp: Vec<SubExpParams>,
    pub independent: bool,
}

impl Default for DiagConfig {
    fn default() -> Self {
        DiagConfig {
            windows: vec![(0, 4), (0, 8)],
            lambdas: vec![-0.1, -0.05, 0.0, 0.05, 0.1],
            trials: 100_000,
            convention: WindowConvention::Trailing,
            subexp: vec![
                SubExpParams { nu2: 1.0, alpha: 1.0 },
                SubExpParams { nu2: 1.0, alpha: 1.0 },
            ],
            independent: true,
        }
    }
}

/// Validated configuration with its group resolved.
pub struct Resolved {
    pub config: ExperimentConfig,
    pub group: CarnotGroup,
    pub hash: String,
}

impl Resolved {
    pub fn distribution(&self) -> Result<StepDistribution, CliError> {
        Ok(StepDistribution::parse(&self.config.distribution, &self.group)?)
    }

    pub fn model_kind(&self) -> Result<ModelKind, CliError> {
        Ok(ModelKind::parse(&self.config.distribution)?)
    }
}

/// Parses a config document, reporting the line and column of syntax errors.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    serde_json::from_str(text)
        .map_err(|e| CliError::new("config_parse", format!("config: {e}")).at(e.line(), e.column()))
}

fn builtin(name: &str) -> Option<Result<CarnotGroup, CliError>> {
    let (head, arg) = match name.split_once(':') {
        Some((h, a)) => (h, Some(a)),
        None => (name, None),
    };
    let num = |default: usize| -> Result<usize, CliError> {
        match arg {
            None => Ok(default),
            Some(a) => a
                .parse()
                .map_err(|_| CliError::new("invalid_config", format!("bad parameter in group `{name}`"))),
        }
    };
    let built = match head {
        "heisenberg" => num(2).and_then(|d| Ok(CarnotGroup::heisenberg(d)?)),
        "engel" if arg.is_none() => Ok(CarnotGroup::engel()),
        "filiform" => num(3).and_then(|s| Ok(CarnotGroup::filiform(s)?)),
        "euclidean" => num(1).and_then(|d| Ok(CarnotGroup::euclidean(d)?)),
        _ => return None,
    };
    Some(built)
}

/// Builtin name, or a descriptor path resolved against `base`.
pub fn resolve_group(spec: &str, base: &Path) -> Result<CarnotGroup, CliError> {
    if let Some(g) = builtin(spec) {
        return g;
    }
    let path = base.join(spec);
    let text = std::fs::read_to_string(&path).map_err(|e| {
        CliError::new(
            "invalid_config",
            format!(
                "group `{spec}` is not a builtin and {} cannot be read: {e}",
                path.display()
            ),
        )
    })?;
    let desc: GroupDescriptor = serde_json::from_str(&text)
        .map_err(|e| CliError::new("group_parse", format!("{}: {e}", path.display())).at(e.line(), e.column()))?;
    Ok(desc.build()?)
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::new("invalid_config", msg)
}

fn increasing(v: &[usize]) -> bool {
    !v.is_empty() && v[0] > 0 && v.windows(2).all(|w| w[0] < w[1])
}

/// Checks every section against the resolved group.
pub fn validate(cfg: &ExperimentConfig, group: &CarnotGroup) -> Result<(), CliError> {
    ModelKind::parse(&cfg.distribution)?;
    let w = &cfg.walk;
    if w.n == 0 || w.trials == 0 {
        return Err(invalid("walk: n and trials must be >= 1"));
    }
    if let Some(m) = w.m {
        if m == 0 || m > w.n {
            return Err(invalid(format!("walk: m = {m} must satisfy 1 <= m <= n")));
        }
    }

    let r = &cfg.rate;
    if let Some(t) = &r.target {
        if t.len() != group.dim() {
            return Err(carnot_core::Error::DimensionMismatch {
                expected: group.dim(),
                found: t.len(),
            }
            .into());
        }
    }
    if r.m == 0 {
        return Err(invalid("rate: m must be >= 1"));
    }
    if let Some(s) = &r.m_schedule {
        if !increasing(s) {
            return Err(invalid("rate: m_schedule must be positive and strictly increasing"));
        }
    }

    let mc = &cfg.mc;
    if mc.trials == 0 {
        return Err(invalid("mc: trials must be >= 1"));
    }
    if !increasing(&mc.n_schedule) {
        return Err(invalid("mc: n_schedule must be positive and strictly increasing"));
    }
    mc.event.validate(group)?;
    if let Some(rs) = &mc.reference {
        if rs.m == 0 || rs.boundary_points == 0 || !(rs.dilation_check > 1.0) {
            return Err(invalid(
                "mc.reference: m and boundary_points must be >= 1, dilation_check > 1",
            ));
        }
    }

    let a = &cfg.approx;
    if !(a.delta > 0.0) || !a.delta.is_finite() {
        return Err(invalid("approx: delta must be finite and > 0"));
    }
    if a.trials == 0 || !increasing(&a.n_schedule) || a.m_list.is_empty() {
        return Err(invalid(
            "approx: trials >= 1, increasing n_schedule and non-empty m_list required",
        ));
    }
    if a.m_list.iter().any(|&m| m == 0 || m > a.n_schedule[0]) {
        return Err(invalid("approx: every m must satisfy 1 <= m <= smallest n"));
    }

    let d = &cfg.diag;
    if d.trials == 0 || d.windows.is_empty() {
        return Err(invalid("diag: trials >= 1 and at least one window required"));
    }
    if d.windows.iter().any(|&(k, l)| k > l) {
        return Err(invalid("diag: windows need k <= l"));
    }
    if d.lambdas.iter().any(|l| !(l.abs() <= MAX_MGF_LAMBDA)) {
        return Err(invalid(format!("diag: |lambda| must be <= {MAX_MGF_LAMBDA}")));
    }
    if d.subexp.iter().any(|p| SubExpParams::new(p.nu2, p.alpha).is_err()) {
        return Err(invalid("diag: sub-exponential parameters must be finite and >= 0"));
    }
    Ok(())
}

/// SHA-256 over the canonical config (without `out`) and the resolved group.
pub fn config_hash(cfg: &ExperimentConfig, group: &CarnotGroup) -> String {
    #[derive(Serialize)]
    struct Hashed<'a> {
        config: &'a ExperimentConfig,
        group: GroupDescriptor,
    }
    let text = serde_json::to_string(&Hashed {
        config: cfg,
        group: group.descriptor(),
    })
    .expect("config serializes");
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Applies command-line overrides, resolves the group and validates.
pub fn resolve(
    mut config: ExperimentConfig,
    base: &Path,
    seed: Option<u64>,
    out: Option<PathBuf>,
    group: Option<String>,
) -> Result<Resolved, CliError> {
    let mut group_base = base.to_path_buf();
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(o) = out {
        config.out = Some(o);
    }
    if let Some(g) = group {
        config.group = g;
        group_base = PathBuf::from(".");
    }
    config.rate.settings.seed = config.seed;
    let g = resolve_group(&config.group, &group_base)?;
    validate(&config, &g)?;
    let hash = config_hash(&config, &g);
    Ok(Resolved { config, group: g, hash })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse_config(r#"{"grop": "engel"}"#).is_err());
        assert!(parse_config(r#"{"walk": {"n": 3, "steps": 2}}"#).is_err());
    }

    #[test]
    fn syntax_errors_carry_line() {
        let e = parse_config("{\n  \"seed\": ,\n}").unwrap_err();
        assert_eq!(e.code, "config_parse");
        assert_eq!(e.line, Some(2));
    }

    #[test]
    fn hash_ignores_output_directory() {
        let g = CarnotGroup::engel();
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.out = Some("elsewhere".into());
        assert_eq!(config_hash(&a, &g), config_hash(&b, &g));
        b.seed = 1;
        assert_ne!(config_hash(&a, &g), config_hash(&b, &g));
    }

    #[test]
    fn default_config_round_trips() {
        let cfg = ExperimentConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(parse_config(&text).unwrap(), cfg);
    }

    #[test]
    fn builtin_groups_resolve() {
        let base = Path::new(".");
        assert_eq!(resolve_group("heisenberg:4", base).unwrap().dim(), 5);
        assert_eq!(resolve_group("engel", base).unwrap().homogeneous_dimension(), 7);
        assert!(resolve_group("no-such-group.json", base).is_err());
    }

    #[test]
    fn zero_trials_rejected() {
        let mut cfg = ExperimentConfig::default();
        cfg.mc.trials = 0;
        let e = resolve(cfg, Path::new("."), None, None, None).err().unwrap();
        assert_eq!(e.code, "invalid_config");
    }
}
