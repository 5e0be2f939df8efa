//! Scenario configuration: TOML in, validated model objects out.
//!
//! Every key has a default, so an empty document is the full reference
//! scenario. Angles are in degrees here and radians everywhere else.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

use xpdmimo_core::boundary::BoundaryThresholds;
use xpdmimo_core::channel::{FadingParams, SubarrayConfig};
use xpdmimo_core::geometry::{ArrayGeometry, Cartesian, Cluster, ClusterSet, Layout, SphericalPosition};
use xpdmimo_core::optimizer::{Budget, PenaltySchedule, Scenario};
use xpdmimo_core::polarization::{PathlossParams, XpdParams};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("{rule}{}: {detail}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Constraint { rule: &'static str, line: Option<usize>, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutKind {
    Linear,
    Planar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    pub layout: LayoutKind,
    pub num_elements: usize,
    /// Element spacing in metres; half a wavelength when absent.
    pub spacing: Option<f64>,
    pub wavelength: f64,
    /// Planar aspect ratio rows/cols.
    pub k: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self { layout: LayoutKind::Linear, num_elements: 60, spacing: None, wavelength: 0.1, k: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UserConfig {
    pub r: f64,
    pub theta_deg: f64,
    pub phi_deg: f64,
    pub num_antennas: usize,
}

impl Default for UserConfig {
    fn default() -> Self {
        Self { r: 30.0, theta_deg: 90.0, phi_deg: 0.0, num_antennas: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClustersConfig {
    pub positions: Vec<[f64; 3]>,
    pub azimuth_spread_deg: f64,
    pub truncation_deg: f64,
    /// User range at which cluster-to-user range ratios are taken.
    pub r_ref: f64,
}

impl Default for ClustersConfig {
    fn default() -> Self {
        Self {
            positions: vec![[29.3, 0.0, 6.2], [24.6, -4.3, 1.3], [39.0, -9.0, 0.0], [32.7, -2.9, -2.9], [48.5, -8.7, -8.6]],
            azimuth_spread_deg: 35.0,
            truncation_deg: 180.0,
            r_ref: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct XpdConfig {
    pub xpd_at_unit_db: f64,
    pub eta: f64,
}

impl Default for XpdConfig {
    fn default() -> Self {
        Self { xpd_at_unit_db: 5.0, eta: 0.8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathlossConfig {
    /// Gain at 1 m in dB; free-space (λ/4π)² when absent.
    pub beta0_db: Option<f64>,
    pub alpha: f64,
}

impl Default for PathlossConfig {
    fn default() -> Self {
        Self { beta0_db: None, alpha: 4.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThresholdsConfig {
    pub gamma1: f64,
    pub gamma2: f64,
    pub power_ratio: f64,
}

impl Default for ThresholdsConfig {
    fn default() -> Self {
        Self { gamma1: 1.05, gamma2: 1.05, power_ratio: 1.15 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerConfig {
    pub p_dbm: f64,
    pub sigma2_dbm: f64,
    /// Per-antenna cap as a multiple of 1/(2M).
    pub q0_factor: f64,
}

impl Default for PowerConfig {
    fn default() -> Self {
        Self { p_dbm: 43.0, sigma2_dbm: -96.0, q0_factor: 4.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FadingConfig {
    pub mu: f64,
    pub seed: u64,
    pub trials: u64,
}

impl Default for FadingConfig {
    fn default() -> Self {
        Self { mu: 5.0, seed: 1, trials: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub s: usize,
    pub m0: usize,
    pub mu_0: f64,
    pub growth: f64,
    pub max_outer: usize,
    pub inner_tol: f64,
    pub feas_tol: f64,
    pub paper_budget: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let s = PenaltySchedule::default();
        Self {
            s: 6,
            m0: 10,
            mu_0: s.mu_0,
            growth: s.growth,
            max_outer: s.max_outer,
            inner_tol: s.inner_tol,
            feas_tol: s.feas_tol,
            paper_budget: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub geometry: GeometryConfig,
    pub user: UserConfig,
    pub clusters: ClustersConfig,
    pub xpd: XpdConfig,
    pub pathloss: PathlossConfig,
    pub thresholds: ThresholdsConfig,
    pub power: PowerConfig,
    pub fading: FadingConfig,
    pub optimizer: OptimizerConfig,
}

fn line_of(src: &str, section: &str, key: &str) -> Option<usize> {
    let mut in_section = false;
    for (i, line) in src.lines().enumerate() {
        let t = line.trim();
        if t.starts_with('[') {
            in_section = t.trim_matches(|c| c == '[' || c == ']').trim() == section;
            continue;
        }
        if in_section && t.split('=').next().map(str::trim) == Some(key) {
            return Some(i + 1);
        }
    }
    None
}

fn db(x: f64) -> f64 {
    10f64.powf(x / 10.0)
}

impl ScenarioConfig {
    pub fn from_toml(src: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(src).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate(src)?;
        Ok(cfg)
    }

    /// Checks cross-field rules; `src` only supplies line numbers.
    pub fn validate(&self, src: &str) -> Result<(), ConfigError> {
        let m = self.geometry.num_elements;
        let (s, m0) = (self.optimizer.s, self.optimizer.m0);
        if s * m0 != m {
            return Err(ConfigError::Constraint {
                rule: "S·M0 = M",
                line: line_of(src, "optimizer", "s").or(line_of(src, "optimizer", "m0")).or(line_of(src, "geometry", "num_elements")),
                detail: format!("S = {s}, M0 = {m0} give {} but M = {m}", s * m0),
            });
        }
        if !(self.power.q0_factor >= 1.0) {
            return Err(ConfigError::Constraint {
                rule: "infeasible per-antenna cap",
                line: line_of(src, "power", "q0_factor"),
                detail: format!("q0·2M = {} < 1", self.power.q0_factor),
            });
        }
        let checks: [(&str, &str, bool, String); 3] = [
            ("user", "r", self.user.r > 0.0, format!("user range must be positive, got {}", self.user.r)),
            ("clusters", "r_ref", self.clusters.r_ref > 0.0, format!("r_ref must be positive, got {}", self.clusters.r_ref)),
            ("user", "num_antennas", self.user.num_antennas >= 1, "the user needs at least one antenna".to_string()),
        ];
        for (section, key, ok, detail) in checks {
            if !ok {
                return Err(ConfigError::Constraint { rule: "positive parameter", line: line_of(src, section, key), detail });
            }
        }
        self.geometry().map_err(|e| constraint("geometry", src, "geometry", e))?;
        self.clusters().map_err(|e| constraint("clusters", src, "clusters", e))?;
        self.xpd_params().map_err(|e| constraint("xpd", src, "xpd", e))?;
        self.pathloss_params().map_err(|e| constraint("pathloss", src, "pathloss", e))?;
        self.thresholds().map_err(|e| constraint("thresholds", src, "thresholds", e))?;
        self.fading().map_err(|e| constraint("fading", src, "fading", e))?;
        self.schedule().validate().map_err(|e| constraint("optimizer", src, "optimizer", e))?;
        Ok(())
    }

    pub fn geometry(&self) -> xpdmimo_core::Result<ArrayGeometry> {
        self.geometry_with(self.geometry.num_elements)
    }

    /// The configured array with a different element count.
    pub fn geometry_with(&self, m: usize) -> xpdmimo_core::Result<ArrayGeometry> {
        let g = &self.geometry;
        let spacing = g.spacing.unwrap_or(g.wavelength / 2.0);
        let layout = match g.layout {
            LayoutKind::Linear => Layout::Linear,
            LayoutKind::Planar => {
                let rows = ((m as f64) * g.k).sqrt().round() as usize;
                if rows == 0 || m % rows != 0 {
                    return Err(xpdmimo_core::Error::InvalidParameter(format!(
                        "{m} elements cannot form a planar array with k = {}",
                        g.k
                    )));
                }
                Layout::Planar { rows, cols: m / rows }
            }
        };
        ArrayGeometry::new(m, layout, spacing, g.wavelength)
    }

    pub fn user(&self) -> xpdmimo_core::Result<SphericalPosition> {
        SphericalPosition::new(self.user.r, self.user.theta_deg.to_radians(), self.user.phi_deg.to_radians())
    }

    pub fn clusters(&self) -> xpdmimo_core::Result<ClusterSet> {
        let c = &self.clusters;
        ClusterSet::new(
            c.positions
                .iter()
                .map(|p| {
                    Cluster::new(
                        Cartesian::new(p[0], p[1], p[2]),
                        c.azimuth_spread_deg.to_radians(),
                        c.truncation_deg.to_radians(),
                    )
                })
                .collect::<xpdmimo_core::Result<Vec<_>>>()?,
        )
    }

    pub fn c_ratios(&self) -> xpdmimo_core::Result<Vec<f64>> {
        Ok(xpdmimo_core::boundary::c_ratios_at(&self.clusters()?, self.clusters.r_ref))
    }

    pub fn xpd_params(&self) -> xpdmimo_core::Result<XpdParams> {
        XpdParams::new(db(self.xpd.xpd_at_unit_db), self.xpd.eta)
    }

    pub fn beta0(&self) -> f64 {
        match self.pathloss.beta0_db {
            Some(v) => db(v),
            None => (self.geometry.wavelength / (4.0 * std::f64::consts::PI)).powi(2),
        }
    }

    pub fn pathloss_params(&self) -> xpdmimo_core::Result<PathlossParams> {
        PathlossParams::new(self.beta0(), self.pathloss.alpha)
    }

    pub fn thresholds(&self) -> xpdmimo_core::Result<BoundaryThresholds> {
        let t = &self.thresholds;
        BoundaryThresholds::new(t.gamma1, t.gamma2, t.power_ratio)
    }

    pub fn fading(&self) -> xpdmimo_core::Result<FadingParams> {
        FadingParams::new(self.fading.mu, self.fading.seed)
    }

    pub fn subarrays(&self) -> xpdmimo_core::Result<SubarrayConfig> {
        SubarrayConfig::new(self.optimizer.s, self.optimizer.m0)
    }

    pub fn schedule(&self) -> PenaltySchedule {
        let o = &self.optimizer;
        PenaltySchedule { mu_0: o.mu_0, growth: o.growth, max_outer: o.max_outer, inner_tol: o.inner_tol, feas_tol: o.feas_tol }
    }

    pub fn budget(&self) -> Budget {
        if self.optimizer.paper_budget {
            Budget::InverseS
        } else {
            Budget::UnitTrace
        }
    }

    /// Linear SNR `P/σ²` at transmit power `p_dbm`.
    pub fn snr_at(&self, p_dbm: f64) -> f64 {
        db(p_dbm - self.power.sigma2_dbm)
    }

    pub fn snr(&self) -> f64 {
        self.snr_at(self.power.p_dbm)
    }

    pub fn q0(&self) -> f64 {
        self.power.q0_factor / (2 * self.geometry.num_elements) as f64
    }

    pub fn scenario(&self) -> xpdmimo_core::Result<Scenario> {
        Ok(Scenario {
            geom: self.geometry()?,
            user: self.user()?,
            clusters: self.clusters()?,
            c_ratios: self.c_ratios()?,
            xpd: self.xpd_params()?,
            pathloss: self.pathloss_params()?,
            num_ue_antennas: self.user.num_antennas,
            subarrays: self.subarrays()?,
        })
    }

    /// SHA-256 of the canonical JSON form of the resolved configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

fn constraint(section: &'static str, src: &str, line_section: &str, e: xpdmimo_core::Error) -> ConfigError {
    let line = src
        .lines()
        .position(|l| l.trim().trim_matches(|c| c == '[' || c == ']').trim() == line_section && l.trim().starts_with('['))
        .map(|i| i + 1);
    ConfigError::Constraint { rule: section, line, detail: e.to_string() }
}

/// Reads a config from `path`, or from stdin when `path` is `-`.
pub fn load_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let src = if path.as_os_str() == "-" {
        let mut s = String::new();
        std::io::Read::read_to_string(&mut std::io::stdin(), &mut s)
            .map_err(|source| ConfigError::Io { path: "<stdin>".into(), source })?;
        s
    } else {
        std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?
    };
    ScenarioConfig::from_toml(&src)
}
