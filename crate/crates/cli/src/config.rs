//! Run configuration: a TOML file with one optional section per command,
//! command-line overrides, and validation with line-anchored messages.

use std::fmt;
use std::path::{Path, PathBuf};

use dualmem_core::small_gap::NewtonOptions;
use dualmem_core::{Grid2, IterationOptions, PhysParams};
use serde::{Deserialize, Serialize};

/// Configuration problem tied to a location in the config file when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: Option<PathBuf>,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.path, self.line) {
            (Some(p), Some(l)) => write!(f, "{}:{}: {}", p.display(), l, self.message),
            (Some(p), None) => write!(f, "{}: {}", p.display(), self.message),
            (None, _) => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Picard iteration settings shared by the commands that run the full model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationSettings {
    pub damping: f64,
    pub fallback_damping: f64,
    pub max_iter: usize,
    pub fp_tol: f64,
    pub gap_min: f64,
    pub linear_tol: f64,
    pub c3: f64,
}

impl Default for IterationSettings {
    fn default() -> Self {
        let d = IterationOptions::<f64>::default();
        Self {
            damping: d.damping,
            fallback_damping: d.fallback_damping,
            max_iter: d.max_iter,
            fp_tol: d.fp_tol,
            gap_min: d.gap_min,
            linear_tol: d.linear_tol,
            c3: d.c3,
        }
    }
}

impl IterationSettings {
    pub fn options(&self) -> IterationOptions<f64> {
        IterationOptions {
            damping: self.damping,
            fallback_damping: self.fallback_damping,
            max_iter: self.max_iter,
            fp_tol: self.fp_tol,
            gap_min: self.gap_min,
            linear_tol: self.linear_tol,
            c3: self.c3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub eps: f64,
    pub lambda: f64,
    pub mu: f64,
    pub r0: f64,
    pub nx: usize,
    pub nz: usize,
    pub damping: f64,
    pub fallback_damping: f64,
    pub max_iter: usize,
    pub fp_tol: f64,
    pub gap_min: f64,
    pub linear_tol: f64,
    pub c3: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        let it = IterationSettings::default();
        Self {
            eps: 0.1,
            lambda: 0.01,
            mu: 0.01,
            r0: 1.0 / 3.0,
            nx: 65,
            nz: 65,
            damping: it.damping,
            fallback_damping: it.fallback_damping,
            max_iter: it.max_iter,
            fp_tol: it.fp_tol,
            gap_min: it.gap_min,
            linear_tol: it.linear_tol,
            c3: it.c3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmallGapConfig {
    pub lambda: f64,
    pub mu: f64,
    pub nx: usize,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// `Λ` values tabulated in `oracle.csv`.
    pub oracle_lambdas: Vec<f64>,
    /// `λ` of the symmetric-reduction comparison.
    pub reduction_lambda: f64,
    /// Initial continuation step along the diagonal.
    pub fold_step: f64,
    /// Continuation stops once the halved step is below this.
    pub fold_step_min: f64,
}

impl Default for SmallGapConfig {
    fn default() -> Self {
        let n = NewtonOptions::<f64>::default();
        Self {
            lambda: 0.05,
            mu: 0.05,
            nx: 201,
            newton_tol: n.tol,
            newton_max_iter: n.max_iter,
            oracle_lambdas: (1..=28).map(|k| k as f64 * 0.05).collect(),
            reduction_lambda: 0.05,
            fold_step: 0.01,
            fold_step_min: 1e-7,
        }
    }
}

impl SmallGapConfig {
    pub fn newton(&self) -> NewtonOptions<f64> {
        NewtonOptions {
            tol: self.newton_tol,
            max_iter: self.newton_max_iter,
            ..NewtonOptions::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepPlan {
    /// Tensor grid over `[lambda_min, lambda_max] × [mu_min, mu_max]`.
    Grid,
    /// Points `s (a, b)` along each direction `(a, b)` in `rays`.
    Rays,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub eps: f64,
    pub r0: f64,
    pub nx: usize,
    pub nz: usize,
    pub plan: SweepPlan,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub lambda_steps: usize,
    pub mu_min: f64,
    pub mu_max: f64,
    pub mu_steps: usize,
    pub rays: Vec<[f64; 2]>,
    pub s_max: f64,
    pub s_steps: usize,
    pub workers: usize,
    pub damping: f64,
    pub fallback_damping: f64,
    pub max_iter: usize,
    pub fp_tol: f64,
    pub gap_min: f64,
    pub linear_tol: f64,
    pub c3: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let it = IterationSettings::default();
        Self {
            eps: 0.1,
            r0: 1.0 / 3.0,
            nx: 33,
            nz: 17,
            plan: SweepPlan::Rays,
            lambda_min: 0.0,
            lambda_max: 0.3,
            lambda_steps: 7,
            mu_min: 0.0,
            mu_max: 0.3,
            mu_steps: 7,
            rays: vec![[1.0, 1.0], [1.0, 0.25], [0.25, 1.0]],
            s_max: 0.4,
            s_steps: 20,
            workers: 1,
            damping: it.damping,
            fallback_damping: it.fallback_damping,
            max_iter: it.max_iter,
            fp_tol: it.fp_tol,
            gap_min: it.gap_min,
            linear_tol: it.linear_tol,
            c3: it.c3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitsConfig {
    pub lambda: f64,
    pub mu: f64,
    pub r0: f64,
    pub nx: usize,
    pub nz: usize,
    pub eps_list: Vec<f64>,
    pub workers: usize,
    pub newton_tol: f64,
    /// Also write a gnuplot script over `limits.csv`.
    pub plot_script: bool,
    pub damping: f64,
    pub fallback_damping: f64,
    pub max_iter: usize,
    pub fp_tol: f64,
    pub gap_min: f64,
    pub linear_tol: f64,
    pub c3: f64,
}

impl Default for LimitsConfig {
    fn default() -> Self {
        let it = IterationSettings::default();
        Self {
            lambda: 0.01,
            mu: 0.01,
            r0: 1.0 / 3.0,
            nx: 65,
            nz: 65,
            eps_list: vec![0.2, 0.1, 0.05, 0.025],
            workers: 1,
            newton_tol: NewtonOptions::<f64>::default().tol,
            plot_script: true,
            damping: it.damping,
            fallback_damping: it.fallback_damping,
            max_iter: it.max_iter,
            fp_tol: it.fp_tol,
            gap_min: it.gap_min,
            linear_tol: it.linear_tol,
            c3: it.c3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub lambdas: Vec<f64>,
    /// Number of profile samples `x = k/(2n)`, `k = 1..=n`.
    pub samples: usize,
    /// Also locate the fold of the shooting formulation.
    pub shooting_fold: bool,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            lambdas: vec![0.2, 0.6, 1.0],
            samples: 50,
            shooting_fold: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    /// Output directory.
    pub out: Option<PathBuf>,
    pub solve: SolveConfig,
    pub smallgap: SmallGapConfig,
    pub sweep: SweepConfig,
    pub limits: LimitsConfig,
    pub oracle: OracleConfig,
}

/// A parsed config plus its source text, kept for locating keys.
#[derive(Debug, Clone, Default)]
pub struct LoadedConfig {
    pub file: ConfigFile,
    pub source: Option<(PathBuf, String)>,
}

/// 1-based line of the first character at `offset`.
fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of `key = ...` inside `[section]`, if the file sets it.
pub fn locate_key(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            continue;
        }
        if current == section {
            if let Some((lhs, _)) = line.split_once('=') {
                if lhs.trim() == key {
                    return Some(k + 1);
                }
            }
        }
    }
    None
}

impl LoadedConfig {
    pub fn from_str(text: &str, path: Option<&Path>) -> Result<Self, ConfigError> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| ConfigError {
            path: path.map(Path::to_path_buf),
            line: e.span().map(|s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
        Ok(Self {
            file,
            source: path.map(|p| (p.to_path_buf(), text.to_string())),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            path: Some(path.to_path_buf()),
            line: None,
            message: format!("cannot read config: {e}"),
        })?;
        Self::from_str(&text, Some(path))
    }

    /// Error about `section.key`, anchored to the line that set it.
    pub fn error(&self, section: &str, key: &str, message: impl Into<String>) -> ConfigError {
        let (path, line) = match &self.source {
            Some((p, text)) => (Some(p.clone()), locate_key(text, section, key)),
            None => (None, None),
        };
        ConfigError {
            path,
            line,
            message: format!("[{section}] {key}: {}", message.into()),
        }
    }
}

/// Values given on the command line; each replaces the matching key of the
/// selected section.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub eps: Option<f64>,
    pub lambda: Option<f64>,
    pub mu: Option<f64>,
    pub r0: Option<f64>,
    pub nx: Option<usize>,
    pub nz: Option<usize>,
    pub workers: Option<usize>,
}

fn check(cond: bool, cfg: &LoadedConfig, section: &str, key: &str, msg: &str) -> Result<(), ConfigError> {
    if cond {
        Ok(())
    } else {
        Err(cfg.error(section, key, msg))
    }
}

fn check_iteration(cfg: &LoadedConfig, section: &str, it: &IterationSettings) -> Result<(), ConfigError> {
    let unit = |t: f64| t > 0.0 && t <= 1.0;
    check(unit(it.damping), cfg, section, "damping", "must lie in (0, 1]")?;
    check(unit(it.fallback_damping), cfg, section, "fallback_damping", "must lie in (0, 1]")?;
    check(it.max_iter > 0, cfg, section, "max_iter", "must be positive")?;
    check(it.fp_tol > 0.0, cfg, section, "fp_tol", "must be positive")?;
    check(it.gap_min > 0.0, cfg, section, "gap_min", "must be positive")?;
    check(it.linear_tol > 0.0, cfg, section, "linear_tol", "must be positive")?;
    check(it.c3 >= 0.0, cfg, section, "c3", "must be nonnegative")
}

fn check_grid(cfg: &LoadedConfig, section: &str, nx: usize, nz: usize) -> Result<(), ConfigError> {
    check(nx >= 3 && nx % 2 == 1, cfg, section, "nx", "must be odd and at least 3")?;
    check(nz >= 3, cfg, section, "nz", "must be at least 3")
}

fn check_params(cfg: &LoadedConfig, section: &str, eps: f64, lambda: f64, mu: f64, r0: f64) -> Result<(), ConfigError> {
    check(eps > 0.0 && eps < 1.0, cfg, section, "eps", "must lie in (0, 1)")?;
    check(lambda >= 0.0 && lambda.is_finite(), cfg, section, "lambda", "must be finite and >= 0")?;
    check(mu >= 0.0 && mu.is_finite(), cfg, section, "mu", "must be finite and >= 0")?;
    check(r0 > 0.0 && r0 < 2.0 / 3.0, cfg, section, "r0", "must lie in (0, 2/3)")?;
    // Anything the constructors still reject is reported against the section.
    PhysParams::new(eps, lambda, mu, r0)
        .map(|_| ())
        .map_err(|e| cfg.error(section, "eps", e.to_string()))
}

/// Iteration keys are repeated in each section so that every section stays
/// a flat table with unknown keys rejected.
macro_rules! iteration_accessor {
    ($($t:ty),*) => {$(
        impl $t {
            pub fn iteration(&self) -> IterationSettings {
                IterationSettings {
                    damping: self.damping,
                    fallback_damping: self.fallback_damping,
                    max_iter: self.max_iter,
                    fp_tol: self.fp_tol,
                    gap_min: self.gap_min,
                    linear_tol: self.linear_tol,
                    c3: self.c3,
                }
            }
        }
    )*};
}

iteration_accessor!(SolveConfig, SweepConfig, LimitsConfig);

impl SolveConfig {
    pub fn apply(&mut self, o: &Overrides) {
        self.eps = o.eps.unwrap_or(self.eps);
        self.lambda = o.lambda.unwrap_or(self.lambda);
        self.mu = o.mu.unwrap_or(self.mu);
        self.r0 = o.r0.unwrap_or(self.r0);
        self.nx = o.nx.unwrap_or(self.nx);
        self.nz = o.nz.unwrap_or(self.nz);
    }

    pub fn validate(&self, cfg: &LoadedConfig) -> Result<(), ConfigError> {
        check_params(cfg, "solve", self.eps, self.lambda, self.mu, self.r0)?;
        check_grid(cfg, "solve", self.nx, self.nz)?;
        check_iteration(cfg, "solve", &self.iteration())
    }

    pub fn params(&self) -> PhysParams<f64> {
        PhysParams {
            eps: self.eps,
            lambda: self.lambda,
            mu: self.mu,
            r0: self.r0,
        }
    }

    pub fn grid(&self) -> Grid2 {
        Grid2::new(self.nx, self.nz).expect("validated grid")
    }
}

impl SmallGapConfig {
    pub fn apply(&mut self, o: &Overrides) {
        self.lambda = o.lambda.unwrap_or(self.lambda);
        self.mu = o.mu.unwrap_or(self.mu);
        self.nx = o.nx.unwrap_or(self.nx);
    }

    pub fn validate(&self, cfg: &LoadedConfig) -> Result<(), ConfigError> {
        let s = "smallgap";
        check(self.lambda >= 0.0 && self.lambda.is_finite(), cfg, s, "lambda", "must be finite and >= 0")?;
        check(self.mu >= 0.0 && self.mu.is_finite(), cfg, s, "mu", "must be finite and >= 0")?;
        check(self.nx >= 3 && self.nx % 2 == 1, cfg, s, "nx", "must be odd and at least 3")?;
        check(self.newton_tol > 0.0, cfg, s, "newton_tol", "must be positive")?;
        check(self.newton_max_iter > 0, cfg, s, "newton_max_iter", "must be positive")?;
        check(
            self.oracle_lambdas.iter().all(|&l| l > 0.0 && l.is_finite()),
            cfg,
            s,
            "oracle_lambdas",
            "entries must be positive",
        )?;
        check(self.reduction_lambda > 0.0, cfg, s, "reduction_lambda", "must be positive")?;
        check(self.fold_step > 0.0, cfg, s, "fold_step", "must be positive")?;
        check(
            self.fold_step_min > 0.0 && self.fold_step_min <= self.fold_step,
            cfg,
            s,
            "fold_step_min",
            "must be positive and at most fold_step",
        )
    }

    pub fn grid(&self) -> Grid2 {
        Grid2::new(self.nx, 3).expect("validated grid")
    }
}

impl SweepConfig {
    pub fn apply(&mut self, o: &Overrides) {
        self.eps = o.eps.unwrap_or(self.eps);
        self.r0 = o.r0.unwrap_or(self.r0);
        self.nx = o.nx.unwrap_or(self.nx);
        self.nz = o.nz.unwrap_or(self.nz);
        self.workers = o.workers.unwrap_or(self.workers);
        if let Some(l) = o.lambda {
            self.lambda_max = l;
        }
        if let Some(m) = o.mu {
            self.mu_max = m;
        }
    }

    pub fn validate(&self, cfg: &LoadedConfig) -> Result<(), ConfigError> {
        let s = "sweep";
        check_params(cfg, s, self.eps, 0.0, 0.0, self.r0)?;
        check_grid(cfg, s, self.nx, self.nz)?;
        check_iteration(cfg, s, &self.iteration())?;
        check(self.workers > 0, cfg, s, "workers", "must be positive")?;
        match self.plan {
            SweepPlan::Grid => {
                check(
                    self.lambda_min >= 0.0 && self.lambda_max >= self.lambda_min,
                    cfg,
                    s,
                    "lambda_max",
                    "need 0 <= lambda_min <= lambda_max",
                )?;
                check(
                    self.mu_min >= 0.0 && self.mu_max >= self.mu_min,
                    cfg,
                    s,
                    "mu_max",
                    "need 0 <= mu_min <= mu_max",
                )?;
                check(self.lambda_steps >= 1, cfg, s, "lambda_steps", "must be at least 1")?;
                check(self.mu_steps >= 1, cfg, s, "mu_steps", "must be at least 1")
            }
            SweepPlan::Rays => {
                check(!self.rays.is_empty(), cfg, s, "rays", "need at least one ray")?;
                check(
                    self.rays
                        .iter()
                        .all(|r| r.iter().all(|c| c.is_finite() && *c >= 0.0)),
                    cfg,
                    s,
                    "rays",
                    "directions must be finite and nonnegative",
                )?;
                check(self.s_max > 0.0, cfg, s, "s_max", "must be positive")?;
                check(self.s_steps >= 1, cfg, s, "s_steps", "must be at least 1")
            }
        }
    }

    pub fn grid(&self) -> Grid2 {
        Grid2::new(self.nx, self.nz).expect("validated grid")
    }
}

impl LimitsConfig {
    pub fn apply(&mut self, o: &Overrides) {
        self.lambda = o.lambda.unwrap_or(self.lambda);
        self.mu = o.mu.unwrap_or(self.mu);
        self.r0 = o.r0.unwrap_or(self.r0);
        self.nx = o.nx.unwrap_or(self.nx);
        self.nz = o.nz.unwrap_or(self.nz);
        self.workers = o.workers.unwrap_or(self.workers);
        if let Some(e) = o.eps {
            self.eps_list = vec![e];
        }
    }

    pub fn validate(&self, cfg: &LoadedConfig) -> Result<(), ConfigError> {
        let s = "limits";
        check(!self.eps_list.is_empty(), cfg, s, "eps_list", "must not be empty")?;
        check(
            self.eps_list.iter().all(|&e| e > 0.0 && e < 1.0),
            cfg,
            s,
            "eps_list",
            "entries must lie in (0, 1)",
        )?;
        check_params(cfg, s, self.eps_list[0], self.lambda, self.mu, self.r0)?;
        check_grid(cfg, s, self.nx, self.nz)?;
        check_iteration(cfg, s, &self.iteration())?;
        check(self.workers > 0, cfg, s, "workers", "must be positive")?;
        check(self.newton_tol > 0.0, cfg, s, "newton_tol", "must be positive")
    }

    pub fn grid(&self) -> Grid2 {
        Grid2::new(self.nx, self.nz).expect("validated grid")
    }
}

impl OracleConfig {
    pub fn validate(&self, cfg: &LoadedConfig) -> Result<(), ConfigError> {
        check(
            !self.lambdas.is_empty() && self.lambdas.iter().all(|&l| l > 0.0 && l.is_finite()),
            cfg,
            "oracle",
            "lambdas",
            "need at least one positive value",
        )?;
        check(self.samples >= 1, cfg, "oracle", "samples", "must be at least 1")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = LoadedConfig::from_str("", None).unwrap();
        assert_eq!(c.file, ConfigFile::default());
        assert_eq!(c.file.limits.eps_list, vec![0.2, 0.1, 0.05, 0.025]);
    }

    #[test]
    fn iteration_keys_live_in_each_section() {
        let c = LoadedConfig::from_str("[solve]\nmax_iter = 7\neps = 0.2\n", None).unwrap();
        assert_eq!(c.file.solve.iteration().max_iter, 7);
        assert_eq!(c.file.solve.eps, 0.2);
    }

    #[test]
    fn parse_errors_carry_line() {
        let e = LoadedConfig::from_str("[solve]\neps = 0.1\nnx = \"many\"\n", None).unwrap_err();
        assert_eq!(e.line, Some(3), "{e}");
        let e = LoadedConfig::from_str("[solve]\n\nbogus = 1\n", None).unwrap_err();
        assert_eq!(e.line, Some(3), "{e}");
    }

    #[test]
    fn validation_errors_carry_line() {
        let text = "out = \"x\"\n[solve]\nlambda = 0.1\neps = 1.5\n";
        let c = LoadedConfig::from_str(text, Some(Path::new("run.toml"))).unwrap();
        let e = c.file.solve.validate(&c).unwrap_err();
        assert_eq!(e.line, Some(4));
        assert!(e.to_string().starts_with("run.toml:4: [solve] eps"), "{e}");
    }

    #[test]
    fn overrides_replace_values() {
        let mut s = SolveConfig::default();
        s.apply(&Overrides {
            lambda: Some(0.0),
            nx: Some(9),
            ..Default::default()
        });
        assert_eq!((s.lambda, s.nx, s.mu), (0.0, 9, 0.01));
    }

    #[test]
    fn key_lookup_respects_sections() {
        let text = "[solve]\nnx = 3\n[sweep]\nnx = 5\n";
        assert_eq!(locate_key(text, "sweep", "nx"), Some(4));
        assert_eq!(locate_key(text, "limits", "nx"), None);
    }
}
