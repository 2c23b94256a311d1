//! Run configuration: strict JSON schema, dotted-path overrides and
//! validation with field-path diagnostics.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::analysis::{DELTA_CLASS, MIN_FIT_SAMPLES};
use crate::error::{Error, Result};
use crate::integrator::IntegratorControls;
use crate::kernel::{assemble_operator, build_kernel, Domain, NonlocalOperator, Profile};
use crate::model::ModelParams;
use crate::stationary::{probe_controls, Exponents, ProbeOptions, RegionSpec};
use crate::sweep::{ScanAxis, ShootingConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Run,
    Stationary,
    Region,
    Shoot,
    Scan,
    Rates,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Run => "run",
            Experiment::Stationary => "stationary",
            Experiment::Region => "region",
            Experiment::Shoot => "shoot",
            Experiment::Scan => "scan",
            Experiment::Rates => "rates",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub nodes: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub profile: Profile,
    pub radius: f64,
}

/// Named initial profiles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum NamedProfile {
    /// `base - depth exp(-|x - c|^2 / (2 width^2))`, `c` the domain centre
    /// unless given.
    Dip {
        base: f64,
        depth: f64,
        width: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Constant(f64),
    Profile(NamedProfile),
    /// Whitespace- or comma-separated values, one per node. Relative paths
    /// resolve against the config file directory.
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub u: InitialSpec,
    pub v: InitialSpec,
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig { u: InitialSpec::Constant(1.0), v: InitialSpec::Constant(1.0) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub delta_class: f64,
    /// Fit windows in minimum-value space, per component.
    pub window_u: Option<(f64, f64)>,
    pub window_v: Option<(f64, f64)>,
    pub min_samples: usize,
    /// Window on `min u` for the component relation.
    pub relation_window: Option<(f64, f64)>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            delta_class: DELTA_CLASS,
            window_u: None,
            window_v: None,
            min_samples: MIN_FIT_SAMPLES,
            relation_window: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StationaryConfig {
    pub options: ProbeOptions,
    /// Controls for the long probe integrations; defaults suited to steady
    /// states when absent.
    pub controls: Option<IntegratorControls>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub lambda_range: (f64, f64),
    pub mu_range: (f64, f64),
    pub resolution: (usize, usize),
    #[serde(default = "default_width")]
    pub bisect_width: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShootConfig {
    /// Explicit samples; otherwise `samples` evenly spaced interior points.
    #[serde(default)]
    pub deltas: Option<Vec<f64>>,
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default = "default_width")]
    pub bisect_width: f64,
}

impl ShootConfig {
    pub fn delta_grid(&self) -> Vec<f64> {
        match (&self.deltas, self.samples) {
            (Some(d), _) => d.clone(),
            (None, Some(n)) => (1..=n).map(|i| i as f64 / (n + 1) as f64).collect(),
            (None, None) => vec![],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub axes: Vec<ScanAxis>,
}

fn default_width() -> f64 {
    1e-3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Must match the subcommand when present.
    #[serde(default)]
    pub experiment: Option<Experiment>,
    pub domain: DomainConfig,
    pub kernel: KernelConfig,
    pub params: ModelParams,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub controls: IntegratorControls,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub stationary: StationaryConfig,
    #[serde(default)]
    pub region: Option<RegionConfig>,
    #[serde(default)]
    pub shoot: Option<ShootConfig>,
    #[serde(default)]
    pub scan: Option<ScanConfig>,
    /// Output directory; `--out` takes precedence.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

/// Applies `key=value` with a dotted key path. The value is parsed as JSON
/// when possible and taken as a string otherwise.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::config(format!("override `{assignment}` must have the form key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::config(format!("override key `{key}` has an empty segment")));
    }
    let mut node = doc;
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| Error::config(format!("override key `{key}`: `{part}` is not an array index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| Error::config(format!("override key `{key}`: index {idx} out of range ({len})")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(Error::config(format!("override key `{key}`: `{part}` is not inside an object"))),
        };
    }
    unreachable!("loop returns on the last segment")
}

/// Parses a config document after overrides, reporting the offending key
/// path on schema errors.
pub fn parse_value(doc: Value) -> Result<RunConfig> {
    serde_path_to_error::deserialize(doc).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." {
            Error::config(inner.to_string())
        } else {
            Error::config(format!("{path}: {inner}"))
        }
    })
}

/// Reads, overrides and validates a config for `kind`. Relative file paths
/// in the config resolve against the config's directory.
pub fn parse_config(path: &Path, overrides: &[String], kind: Experiment) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
    let mut doc: Value =
        serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: invalid JSON: {e}", path.display())))?;
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    let config = parse_value(doc)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    LoadedConfig::new(config, base, kind)
}

/// A validated config with its resolved operator and initial data.
#[derive(Debug)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub kind: Experiment,
    pub operator: NonlocalOperator,
    pub u0: Vec<f64>,
    pub v0: Vec<f64>,
}

fn prefixed(prefix: &str, e: Error) -> Error {
    match e {
        Error::Configuration(m) if m.starts_with(prefix) => Error::Configuration(m),
        Error::Configuration(m) => Error::Configuration(format!("{prefix}.{m}")),
        Error::Resolution(m) => Error::Configuration(format!("{prefix}: {m}")),
        other => other,
    }
}

impl LoadedConfig {
    pub fn new(config: RunConfig, base_dir: PathBuf, kind: Experiment) -> Result<Self> {
        if let Some(e) = config.experiment {
            if e != kind {
                return Err(Error::config(format!(
                    "experiment: config is for `{}` but the subcommand is `{}`",
                    e.name(),
                    kind.name()
                )));
            }
        }
        config.params.validate().map_err(|e| prefixed("params", e))?;
        config.controls.validate()?;
        if !(config.kernel.radius > 0.0 && config.kernel.radius.is_finite()) {
            return Err(Error::config(format!("kernel.radius must be > 0, got {}", config.kernel.radius)));
        }
        let d = &config.domain;
        let domain = Domain::new(&d.lower, &d.upper, &d.nodes).map_err(|e| prefixed("domain", e))?;
        let kernel = build_kernel(config.kernel.profile, config.kernel.radius, domain.dim())
            .map_err(|e| prefixed("kernel", e))?;
        let a = &config.analysis;
        if !(a.delta_class > config.controls.quench_floor && a.delta_class < 1.0) {
            return Err(Error::config("analysis.delta_class must lie in (controls.quench_floor, 1)"));
        }
        for (name, w) in [("window_u", a.window_u), ("window_v", a.window_v), ("relation_window", a.relation_window)] {
            if let Some((lo, hi)) = w {
                if !(lo >= 0.0 && lo < hi) {
                    return Err(Error::config(format!("analysis.{name} must satisfy 0 <= lo < hi")));
                }
            }
        }
        if let Some(c) = &config.stationary.controls {
            c.validate().map_err(|e| prefixed("stationary", e))?;
        }
        let operator = assemble_operator(&domain, &kernel).map_err(|e| match e {
            Error::Resolution(m) => Error::config(format!("domain/kernel resolution: {m}")),
            other => other,
        })?;
        let u0 = resolve_initial(&config.initial.u, &domain, &base_dir, "initial.u")?;
        let v0 = resolve_initial(&config.initial.v, &domain, &base_dir, "initial.v")?;
        let loaded = LoadedConfig { config, kind, operator, u0, v0 };
        loaded.validate_experiment()?;
        Ok(loaded)
    }

    fn validate_experiment(&self) -> Result<()> {
        let c = &self.config;
        match self.kind {
            Experiment::Region => {
                self.region_spec()?.validate().map_err(|e| prefixed("region", e))?;
            }
            Experiment::Shoot => {
                self.shooting_config()?;
            }
            Experiment::Scan => {
                let scan = c.scan.as_ref().ok_or_else(|| Error::config("scan: section is required"))?;
                if scan.axes.iter().any(|a| a.values.iter().any(|v| !v.is_finite())) {
                    return Err(Error::config("scan.axes: values must be finite"));
                }
            }
            Experiment::Run | Experiment::Stationary | Experiment::Rates => {}
        }
        Ok(())
    }

    pub fn region_spec(&self) -> Result<RegionSpec> {
        let r = self.config.region.as_ref().ok_or_else(|| Error::config("region: section is required"))?;
        let p = &self.config.params;
        Ok(RegionSpec {
            lambda_range: r.lambda_range,
            mu_range: r.mu_range,
            resolution: r.resolution,
            exponents: Exponents { p: p.p, q: p.q, alpha: p.alpha, beta: p.beta },
            bisect_width: r.bisect_width,
        })
    }

    pub fn shooting_config(&self) -> Result<ShootingConfig> {
        let s = self.config.shoot.as_ref().ok_or_else(|| Error::config("shoot: section is required"))?;
        let deltas = s.delta_grid();
        if deltas.is_empty() {
            return Err(Error::config("shoot: give `deltas` or a positive `samples`"));
        }
        let mut sc = ShootingConfig::new(
            self.u0.clone(),
            self.v0.clone(),
            deltas,
            self.config.params,
            self.config.controls.clone(),
        )
        .map_err(|e| prefixed("shoot", e))?;
        sc.bisect_width = s.bisect_width;
        sc.delta_class = self.config.analysis.delta_class;
        sc.validate().map_err(|e| prefixed("shoot", e))?;
        Ok(sc)
    }

    pub fn probe_controls(&self) -> IntegratorControls {
        self.config.stationary.controls.clone().unwrap_or_else(probe_controls)
    }

    pub fn probe_options(&self) -> ProbeOptions {
        self.config.stationary.options
    }
}

fn resolve_initial(spec: &InitialSpec, domain: &Domain, base: &Path, field: &str) -> Result<Vec<f64>> {
    let n = domain.len();
    let values = match spec {
        InitialSpec::Constant(c) => vec![*c; n],
        InitialSpec::Profile(NamedProfile::Dip { base: b, depth, width, center }) => {
            if !(*width > 0.0) {
                return Err(Error::config(format!("{field}.profile.width must be > 0")));
            }
            let dim = domain.dim();
            let c: Vec<f64> = match center {
                Some(c) if c.len() == dim => c.clone(),
                Some(_) => return Err(Error::config(format!("{field}.profile.center must have {dim} entries"))),
                None => (0..dim).map(|a| 0.5 * (domain.lower()[a] + domain.upper()[a])).collect(),
            };
            (0..n)
                .map(|i| {
                    let x = domain.coords(i);
                    let r2: f64 = (0..dim).map(|a| (x[a] - c[a]).powi(2)).sum();
                    b - depth * (-r2 / (2.0 * width * width)).exp()
                })
                .collect()
        }
        InitialSpec::File(p) => {
            let path = if p.is_absolute() { p.clone() } else { base.join(p) };
            let text = std::fs::read_to_string(&path)
                .map_err(|e| Error::config(format!("{field}.file: cannot read {}: {e}", path.display())))?;
            let vals: std::result::Result<Vec<f64>, _> = text
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|s| !s.is_empty())
                .map(str::parse::<f64>)
                .collect();
            let vals = vals.map_err(|e| Error::config(format!("{field}.file: {e}")))?;
            if vals.len() != n {
                return Err(Error::config(format!("{field}.file: {} values for {n} nodes", vals.len())));
            }
            vals
        }
    };
    if values.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::config(format!("{field} must be positive at every node")));
    }
    Ok(values)
}
