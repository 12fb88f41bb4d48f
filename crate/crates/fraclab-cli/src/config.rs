//! Experiment configuration: a flat TOML file with one table per module.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Renormalization,
    Layer,
    Stability,
    Sliding,
    ConstrainedMin,
    Glue,
    Blowdown,
    Fit1d,
    FullPipeline,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Renormalization => "renormalization",
            Experiment::Layer => "layer",
            Experiment::Stability => "stability",
            Experiment::Sliding => "sliding",
            Experiment::ConstrainedMin => "constrained_min",
            Experiment::Glue => "glue",
            Experiment::Blowdown => "blowdown",
            Experiment::Fit1d => "fit1d",
            Experiment::FullPipeline => "full_pipeline",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub s: f64,
    #[serde(default = "one")]
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub grid: Grid,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub renormalization: Renormalization,
    #[serde(default)]
    pub stability: Stability,
    #[serde(default)]
    pub minimality: Minimality,
    #[serde(default)]
    pub blowdown: Blowdown,
}

fn one() -> usize {
    1
}

/// Layer grid (1D) and box grid (2D).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Grid {
    pub h: f64,
    pub x_max: f64,
    pub h2: f64,
    pub x_max2: f64,
    /// Top spacing of the graded z mesh; defaults to 0.4 for s < 1/2, where
    /// the levels refine toward the trace, and to h otherwise.
    pub dz_top: Option<f64>,
}

impl Grid {
    pub fn dz_top(&self, s: f64) -> f64 {
        self.dz_top.unwrap_or(if s < 0.5 { 0.4 } else { self.h })
    }
}

impl Default for Grid {
    fn default() -> Self {
        Grid { h: 0.1, x_max: 40.0, h2: 0.5, x_max2: 12.0, dz_top: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub residual: f64,
    pub slack: f64,
    pub form: f64,
    pub fit: f64,
    pub minimizer: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { residual: 1e-10, slack: 1e-8, form: 1e-2, fit: 0.1, minimizer: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Renormalization {
    pub r_list: Vec<f64>,
    pub bump_center: f64,
    pub bump_width: f64,
    pub iterations: usize,
}

impl Default for Renormalization {
    fn default() -> Self {
        Renormalization { r_list: vec![4.0, 8.0, 16.0, 32.0], bump_center: 0.5, bump_width: 1.0, iterations: 50_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Stability {
    pub r: f64,
    pub cutoff_inner: f64,
    pub cutoff_outer: f64,
    pub trials: usize,
    pub eps_list: Vec<f64>,
}

impl Default for Stability {
    fn default() -> Self {
        Stability {
            r: 40.0,
            cutoff_inner: 8.0,
            cutoff_outer: 18.0,
            trials: 50,
            eps_list: vec![0.4, 0.2, 0.1, 0.05, 0.025],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Minimality {
    pub r: f64,
    pub trials: usize,
    pub glue_trials: usize,
    pub glue_r: f64,
    pub glue_h: f64,
    pub psi_amplitude: f64,
}

impl Default for Minimality {
    fn default() -> Self {
        Minimality { r: 8.0, trials: 50, glue_trials: 20, glue_r: 4.0, glue_h: 0.25, psi_amplitude: 2.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Blowdown {
    pub eps_list: Vec<f64>,
    pub window: f64,
    pub nodes: usize,
    /// Direction of the rotated layer, in degrees.
    pub angle: f64,
}

impl Default for Blowdown {
    fn default() -> Self {
        Blowdown { eps_list: vec![1.0, 0.5, 0.25, 0.125], window: 3.0, nodes: 61, angle: 30.0 }
    }
}

#[derive(Debug)]
pub struct ConfigError {
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

fn bad(field: &str, why: &str) -> ConfigError {
    ConfigError { message: format!("field `{field}`: {why}") }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError { message: format!("{}: {e}", path.display()) })?;
        Self::parse(&text).map_err(|e| ConfigError { message: format!("{}: {}", path.display(), e.message) })
    }

    /// Parse and validate. TOML errors carry the line and column.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let at = e
                .span()
                .map(|sp| {
                    let line = text[..sp.start].matches('\n').count() + 1;
                    format!("line {line}: ")
                })
                .unwrap_or_default();
            ConfigError { message: format!("{at}{}", e.message()) }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(bad("s", "must lie in (0, 1)"));
        }
        if !(1..=3).contains(&self.n) {
            return Err(bad("n", "must be 1, 2 or 3"));
        }
        if self.experiment == Experiment::FullPipeline && self.n != 2 {
            return Err(bad("n", "full_pipeline runs in two dimensions"));
        }
        let g = &self.grid;
        for (name, v) in [("grid.h", g.h), ("grid.x_max", g.x_max), ("grid.h2", g.h2), ("grid.x_max2", g.x_max2), ("grid.dz_top", g.dz_top(self.s))] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(bad(name, "must be positive"));
            }
        }
        for (name, x, h) in [("grid.x_max", g.x_max, g.h), ("grid.x_max2", g.x_max2, g.h2)] {
            let k = x / h;
            if (k - k.round()).abs() > 1e-9 {
                return Err(bad(name, "must be a multiple of the spacing"));
            }
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("tolerances.residual", t.residual),
            ("tolerances.slack", t.slack),
            ("tolerances.form", t.form),
            ("tolerances.fit", t.fit),
            ("tolerances.minimizer", t.minimizer),
        ] {
            if !(v > 0.0) {
                return Err(bad(name, "tolerances must be positive"));
            }
        }
        use Experiment::*;
        let uses = |list: &[Experiment]| list.contains(&self.experiment);
        let r = &self.renormalization;
        if uses(&[Renormalization]) && (r.r_list.is_empty() || r.r_list.iter().any(|&x| !(x > 0.0) || x > g.x_max)) {
            return Err(bad("renormalization.r_list", "radii must lie in (0, grid.x_max]"));
        }
        if !(r.bump_width > 0.0) {
            return Err(bad("renormalization.bump_width", "must be positive"));
        }
        let st = &self.stability;
        if uses(&[Stability]) && !(0.0 < st.cutoff_inner && st.cutoff_inner < st.cutoff_outer && st.cutoff_outer <= st.r && st.r <= g.x_max) {
            return Err(bad("stability", "need 0 < cutoff_inner < cutoff_outer ≤ r ≤ grid.x_max"));
        }
        if st.eps_list.iter().any(|&e| !(e > 0.0)) {
            return Err(bad("stability.eps_list", "entries must be positive"));
        }
        let m = &self.minimality;
        if uses(&[ConstrainedMin, FullPipeline]) && !(m.r > 0.0 && m.r < g.x_max2) {
            return Err(bad("minimality.r", "must lie in (0, grid.x_max2)"));
        }
        if !(m.glue_r > 0.0 && m.glue_h > 0.0 && m.psi_amplitude > 0.0) {
            return Err(bad("minimality", "glue_r, glue_h and psi_amplitude must be positive"));
        }
        let b = &self.blowdown;
        if b.eps_list.iter().any(|&e| !(e > 0.0)) {
            return Err(bad("blowdown.eps_list", "entries must be positive"));
        }
        if b.nodes < 3 || !(b.window > 0.0) {
            return Err(bad("blowdown", "need window > 0 and at least 3 nodes"));
        }
        Ok(())
    }

    /// Canonical TOML text; its hash names the run directory.
    pub fn canonical(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        toml::to_string(&c).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = ExperimentConfig::parse("experiment = \"layer\"\ns = 0.5\n").unwrap();
        assert_eq!(c.n, 1);
        assert_eq!(c.grid, Grid::default());
        assert_eq!(ExperimentConfig::parse(&c.canonical()).unwrap(), c);
    }

    #[test]
    fn diagnostics_name_the_line_or_field() {
        let e = ExperimentConfig::parse("experiment = \"layer\"\ns = 0.5\n[grid]\nh = \"x\"\n").unwrap_err();
        assert!(e.message.starts_with("line 4"), "{}", e.message);
        let e = ExperimentConfig::parse("experiment = \"layer\"\ns = 1.5\n").unwrap_err();
        assert!(e.message.contains("`s`"), "{}", e.message);
        let e = ExperimentConfig::parse("experiment = \"layer\"\ns = 0.5\n[tolerances]\nslack = 0.0\n").unwrap_err();
        assert!(e.message.contains("tolerances.slack"), "{}", e.message);
        let e = ExperimentConfig::parse("experiment = \"nope\"\ns = 0.5\n").unwrap_err();
        assert!(e.message.starts_with("line 1"), "{}", e.message);
    }
}
