//! Pipeline configuration: a TOML document with one table per concern.
//!
//! ```toml
//! [fire]
//! thresh_low = 0.9
//! thresh_mod = 0.5
//!
//! [topple]
//! thresh_low = 0.8
//! thresh_mod = 0.4
//!
//! [proximity]
//! depth_safe_threshold = 5.0
//! clearance_safe_threshold_m = 3.0
//! ```
//!
//! `fire`, `topple` and `proximity` are required; every other table
//! (`fragility`, `material_factor`, `class_score`, `cost`, `hough`, `canny`,
//! `pointcloud`) falls back to defaults key by key.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::Material;
use crate::depth::RegionStatistic;
use crate::hough::HoughParams;
use crate::imaging::CannyParams;
use crate::pointcloud::CloudParams;
use crate::risk::{ClassScores, FragilityWeights, RiskConfig, RiskError, RiskThresholds};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config: {0}")]
    Invalid(String),
    #[error("config: {0}")]
    Risk(#[from] RiskError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProximityConfig {
    pub depth_safe_threshold: f64,
    pub clearance_safe_threshold_m: f64,
    #[serde(default)]
    pub region_statistic: RegionStatistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FragilitySection {
    pub w_tilt: f64,
    pub w_age: f64,
    pub w_material: f64,
    pub w_wind: f64,
    pub age_cap_years: f64,
    pub wind_ref_ms: f64,
    pub tilt_ref_deg: f64,
    /// Scalar wind exposure applied to every pole.
    pub wind_speed_ms: f64,
}

impl Default for FragilitySection {
    fn default() -> Self {
        let w = FragilityWeights::default();
        Self {
            w_tilt: w.w_tilt,
            w_age: w.w_age,
            w_material: w.w_material,
            w_wind: w.w_wind,
            age_cap_years: w.age_cap_years,
            wind_ref_ms: w.wind_ref_ms,
            tilt_ref_deg: w.tilt_ref_deg,
            wind_speed_ms: 0.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostSection {
    pub implementation_cost: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    fire: RiskThresholds,
    topple: RiskThresholds,
    proximity: ProximityConfig,
    #[serde(default)]
    fragility: FragilitySection,
    #[serde(default)]
    material_factor: BTreeMap<String, f64>,
    #[serde(default)]
    class_score: ClassScores,
    #[serde(default)]
    cost: CostSection,
    #[serde(default)]
    hough: HoughParams,
    #[serde(default)]
    canny: CannyParams,
    #[serde(default)]
    pointcloud: CloudParams,
}

/// Validated configuration for a full pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub risk: RiskConfig,
    pub region_statistic: RegionStatistic,
    pub hough: HoughParams,
    pub canny: CannyParams,
    pub pointcloud: CloudParams,
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text)?;
        raw.fire.validate()?;
        raw.topple.validate()?;

        let mut weights = FragilityWeights {
            w_tilt: raw.fragility.w_tilt,
            w_age: raw.fragility.w_age,
            w_material: raw.fragility.w_material,
            w_wind: raw.fragility.w_wind,
            age_cap_years: raw.fragility.age_cap_years,
            wind_ref_ms: raw.fragility.wind_ref_ms,
            tilt_ref_deg: raw.fragility.tilt_ref_deg,
            ..FragilityWeights::default()
        };
        for (name, factor) in &raw.material_factor {
            let m: Material = name.parse().map_err(|_| {
                ConfigError::Invalid(format!("unknown material `{name}` in [material_factor]"))
            })?;
            weights.material_factor.insert(m, *factor);
        }
        weights.validate()?;

        let s = raw.class_score;
        if ![s.low, s.moderate, s.high]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite())
        {
            return Err(ConfigError::Invalid(
                "class_score values must be positive".into(),
            ));
        }
        let p = &raw.proximity;
        if !(p.depth_safe_threshold > 0.0 && p.depth_safe_threshold.is_finite()) {
            return Err(ConfigError::Invalid(
                "proximity.depth_safe_threshold must be positive".into(),
            ));
        }
        if !(p.clearance_safe_threshold_m > 0.0 && p.clearance_safe_threshold_m.is_finite()) {
            return Err(ConfigError::Invalid(
                "proximity.clearance_safe_threshold_m must be positive".into(),
            ));
        }
        if !(raw.fragility.wind_speed_ms >= 0.0) {
            return Err(ConfigError::Invalid(
                "fragility.wind_speed_ms must be non-negative".into(),
            ));
        }
        if !(raw.pointcloud.scale_m_per_unit > 0.0 && raw.pointcloud.scale_m_per_unit.is_finite()) {
            return Err(ConfigError::Invalid(
                "pointcloud.scale_m_per_unit must be positive".into(),
            ));
        }
        let c = &raw.canny;
        if !(c.low >= 0.0 && c.low <= c.high && c.sigma > 0.0) {
            return Err(ConfigError::Invalid(
                "canny thresholds must satisfy 0 <= low <= high and sigma > 0".into(),
            ));
        }

        Ok(PipelineConfig {
            risk: RiskConfig {
                fire: raw.fire,
                topple: raw.topple,
                fragility: weights,
                class_scores: raw.class_score,
                depth_safe_threshold: p.depth_safe_threshold,
                clearance_safe_threshold_m: p.clearance_safe_threshold_m,
                wind_speed_ms: raw.fragility.wind_speed_ms,
                implementation_cost: raw.cost.implementation_cost,
            },
            region_statistic: p.region_statistic,
            hough: raw.hough,
            canny: raw.canny,
            pointcloud: raw.pointcloud,
        })
    }

    /// Canonical TOML form of this configuration; parsing it yields an equal
    /// config.
    pub fn to_toml_string(&self) -> String {
        let w = &self.risk.fragility;
        let raw = RawConfig {
            fire: self.risk.fire,
            topple: self.risk.topple,
            proximity: ProximityConfig {
                depth_safe_threshold: self.risk.depth_safe_threshold,
                clearance_safe_threshold_m: self.risk.clearance_safe_threshold_m,
                region_statistic: self.region_statistic,
            },
            fragility: FragilitySection {
                w_tilt: w.w_tilt,
                w_age: w.w_age,
                w_material: w.w_material,
                w_wind: w.w_wind,
                age_cap_years: w.age_cap_years,
                wind_ref_ms: w.wind_ref_ms,
                tilt_ref_deg: w.tilt_ref_deg,
                wind_speed_ms: self.risk.wind_speed_ms,
            },
            material_factor: w
                .material_factor
                .iter()
                .map(|(m, f)| (m.as_str().to_string(), *f))
                .collect(),
            class_score: self.risk.class_scores,
            cost: CostSection {
                implementation_cost: self.risk.implementation_cost,
            },
            hough: self.hough,
            canny: self.canny,
            pointcloud: self.pointcloud.clone(),
        };
        toml::to_string(&raw).expect("config is always serializable")
    }
}
