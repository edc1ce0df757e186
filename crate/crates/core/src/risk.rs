//! Fire risk, fragility, topple risk and the cost metric.
//!
//! Both risk classifiers apply the same three-way threshold rule:
//!
//! | class    | condition                              |
//! |----------|----------------------------------------|
//! | Low      | `value > thresh_low`                   |
//! | Moderate | `thresh_low >= value > thresh_mod`     |
//! | High     | `value <= thresh_mod`                  |
//!
//! For topple risk this means a *higher* fragility maps to a *lower* risk
//! class. That is the rule as published and it is kept verbatim; choose
//! thresholds accordingly.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Material, PoleRecord};
use crate::depth::DepthEstimate;
use crate::hough::InclinationResult;
use crate::pointcloud::CorridorResult;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiskError {
    #[error("invalid thresholds: require thresh_low > thresh_mod (got {low} and {moderate})")]
    Thresholds { low: f64, moderate: f64 },
    #[error("{name} {value} outside [0, 1]")]
    Ratio { name: &'static str, value: f64 },
    #[error("no material factor for `{0}`")]
    MissingMaterial(Material),
    #[error("invalid fragility weights: {0}")]
    Weights(String),
    #[error("invalid fragility input: {0}")]
    Input(String),
    #[error("fire risk score must be positive, got {0}")]
    Score(f64),
    #[error("no analysis input for pole `{0}`")]
    NoInputs(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskThresholds {
    pub thresh_low: f64,
    pub thresh_mod: f64,
}

impl RiskThresholds {
    pub fn new(thresh_low: f64, thresh_mod: f64) -> Result<Self, RiskError> {
        let t = RiskThresholds {
            thresh_low,
            thresh_mod,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), RiskError> {
        if self.thresh_low.is_finite()
            && self.thresh_mod.is_finite()
            && self.thresh_low > self.thresh_mod
        {
            Ok(())
        } else {
            Err(RiskError::Thresholds {
                low: self.thresh_low,
                moderate: self.thresh_mod,
            })
        }
    }

    fn classify(&self, value: f64) -> RiskClass {
        if value > self.thresh_low {
            RiskClass::Low
        } else if value > self.thresh_mod {
            RiskClass::Moderate
        } else {
            RiskClass::High
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RiskClass {
    Low,
    Moderate,
    High,
}

impl RiskClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            RiskClass::Low => "Low",
            RiskClass::Moderate => "Moderate",
            RiskClass::High => "High",
        }
    }
}

impl fmt::Display for RiskClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn check_ratio(name: &'static str, value: f64) -> Result<(), RiskError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(RiskError::Ratio { name, value })
    }
}

pub fn fire_risk(accuracy: f64, t: &RiskThresholds) -> Result<RiskClass, RiskError> {
    t.validate()?;
    check_ratio("accuracy", accuracy)?;
    Ok(t.classify(accuracy))
}

pub fn topple_risk(fragility_value: f64, t: &RiskThresholds) -> Result<RiskClass, RiskError> {
    t.validate()?;
    check_ratio("fragility", fragility_value)?;
    Ok(t.classify(fragility_value))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FragilityInput {
    pub tilt_deg: f64,
    pub age_years: f64,
    pub material: Material,
    pub wind_speed_ms: f64,
}

/// Weighted sum of saturating per-factor terms:
/// `w_tilt*min(tilt/tilt_ref, 1) + w_age*min(age/age_cap, 1)
///  + w_material*factor(material) + w_wind*min(wind/wind_ref, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FragilityWeights {
    pub w_tilt: f64,
    pub w_age: f64,
    pub w_material: f64,
    pub w_wind: f64,
    pub material_factor: BTreeMap<Material, f64>,
    pub age_cap_years: f64,
    pub wind_ref_ms: f64,
    pub tilt_ref_deg: f64,
}

impl Default for FragilityWeights {
    fn default() -> Self {
        let material_factor = BTreeMap::from([
            (Material::Wood, 1.0),
            (Material::Composite, 0.6),
            (Material::Steel, 0.3),
            (Material::Concrete, 0.2),
            (Material::Unknown, 1.0),
        ]);
        Self {
            w_tilt: 0.25,
            w_age: 0.25,
            w_material: 0.25,
            w_wind: 0.25,
            material_factor,
            age_cap_years: 100.0,
            wind_ref_ms: 40.0,
            tilt_ref_deg: 10.0,
        }
    }
}

impl FragilityWeights {
    pub fn validate(&self) -> Result<(), RiskError> {
        let w = [self.w_tilt, self.w_age, self.w_material, self.w_wind];
        if w.iter().any(|v| !(*v >= 0.0)) {
            return Err(RiskError::Weights("weights must be non-negative".into()));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(RiskError::Weights(format!(
                "weights sum to {sum}, expected 1"
            )));
        }
        for (name, v) in [
            ("age_cap_years", self.age_cap_years),
            ("wind_ref_ms", self.wind_ref_ms),
            ("tilt_ref_deg", self.tilt_ref_deg),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(RiskError::Weights(format!("{name} must be positive")));
            }
        }
        if let Some((m, f)) = self
            .material_factor
            .iter()
            .find(|(_, f)| !(0.0..=1.0).contains(*f))
        {
            return Err(RiskError::Weights(format!(
                "material factor for {m} is {f}, outside [0, 1]"
            )));
        }
        Ok(())
    }
}

pub fn fragility(input: &FragilityInput, w: &FragilityWeights) -> Result<f64, RiskError> {
    w.validate()?;
    if !(0.0..=90.0).contains(&input.tilt_deg) {
        return Err(RiskError::Input(format!(
            "tilt {} outside [0, 90]",
            input.tilt_deg
        )));
    }
    if !(input.age_years >= 0.0) {
        return Err(RiskError::Input(format!(
            "age {} is negative",
            input.age_years
        )));
    }
    if !(input.wind_speed_ms >= 0.0) {
        return Err(RiskError::Input(format!(
            "wind speed {} is negative",
            input.wind_speed_ms
        )));
    }
    let factor = *w
        .material_factor
        .get(&input.material)
        .ok_or(RiskError::MissingMaterial(input.material))?;
    let sat = |v: f64, r: f64| (v / r).min(1.0);
    let f = w.w_tilt * sat(input.tilt_deg, w.tilt_ref_deg)
        + w.w_age * sat(input.age_years, w.age_cap_years)
        + w.w_material * factor
        + w.w_wind * sat(input.wind_speed_ms, w.wind_ref_ms);
    Ok(f.clamp(0.0, 1.0))
}

/// Numeric value of a risk class, used as the cost-metric divisor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassScores {
    pub low: f64,
    pub moderate: f64,
    pub high: f64,
}

impl Default for ClassScores {
    fn default() -> Self {
        Self {
            low: 1.0,
            moderate: 2.0,
            high: 3.0,
        }
    }
}

pub fn risk_class_score(c: RiskClass, mapping: &ClassScores) -> f64 {
    match c {
        RiskClass::Low => mapping.low,
        RiskClass::Moderate => mapping.moderate,
        RiskClass::High => mapping.high,
    }
}

pub fn cost_metric(cost: f64, fire_risk_score: f64) -> Result<f64, RiskError> {
    if !(fire_risk_score > 0.0) {
        return Err(RiskError::Score(fire_risk_score));
    }
    Ok(cost / fire_risk_score)
}

/// Everything [`assess_pole`] needs beyond the stage outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskConfig {
    pub fire: RiskThresholds,
    pub topple: RiskThresholds,
    pub fragility: FragilityWeights,
    pub class_scores: ClassScores,
    /// Relative depth (model units) at or above which vegetation counts as
    /// clear of the pole.
    pub depth_safe_threshold: f64,
    /// 3D clearance in metres at or above which vegetation counts as clear.
    pub clearance_safe_threshold_m: f64,
    pub wind_speed_ms: f64,
    pub implementation_cost: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoleRiskAssessment {
    pub pole_id: String,
    pub latitude: f64,
    pub longitude: f64,
    pub fire_risk: Option<RiskClass>,
    /// Share of this pole's proximity measurements that satisfy their safe
    /// threshold; the accuracy fed to the fire-risk rule.
    pub proximity_accuracy: Option<f64>,
    pub topple_risk: Option<RiskClass>,
    pub fragility: Option<f64>,
    pub clearance_m: Option<f64>,
    pub relative_depth: Option<f64>,
    pub tilt_deg: Option<f64>,
    pub inclination_deg: Option<f64>,
    pub cost_metric: Option<f64>,
}

/// Combines stage outputs for one pole.
///
/// Tilt comes from the point cloud when available, else from the image
/// deflection. Fire risk uses the fraction of available proximity
/// measurements (3D clearance, relative depth) at or above their safe
/// thresholds as the accuracy input. A missing pole age counts as the age
/// cap.
pub fn assess_pole(
    pole: &PoleRecord,
    inclination: Option<&InclinationResult>,
    corridor: Option<&CorridorResult>,
    depth: Option<&DepthEstimate>,
    config: &RiskConfig,
) -> Result<PoleRiskAssessment, RiskError> {
    if inclination.is_none() && corridor.is_none() && depth.is_none() {
        return Err(RiskError::NoInputs(pole.pole_id.clone()));
    }
    let tilt_deg = corridor
        .map(|c| c.tilt_deg)
        .or(inclination.map(|i| i.deflection_deg));

    let (fragility_value, topple) = match tilt_deg {
        Some(tilt) => {
            let input = FragilityInput {
                tilt_deg: tilt,
                age_years: pole.age_years.unwrap_or(config.fragility.age_cap_years),
                material: pole.material,
                wind_speed_ms: config.wind_speed_ms,
            };
            let f = fragility(&input, &config.fragility)?;
            (Some(f), Some(topple_risk(f, &config.topple)?))
        }
        None => (None, None),
    };

    let clearance_m = corridor.and_then(|c| c.clearance_m);
    let relative_depth = depth.map(|d| d.relative_depth);
    let checks: Vec<bool> = clearance_m
        .map(|c| c >= config.clearance_safe_threshold_m)
        .into_iter()
        .chain(relative_depth.map(|d| d >= config.depth_safe_threshold))
        .collect();
    let (proximity_accuracy, fire) = if checks.is_empty() {
        (None, None)
    } else {
        let acc = checks.iter().filter(|c| **c).count() as f64 / checks.len() as f64;
        (Some(acc), Some(fire_risk(acc, &config.fire)?))
    };
    let cost = match (fire, config.implementation_cost) {
        (Some(class), Some(cost)) => Some(cost_metric(
            cost,
            risk_class_score(class, &config.class_scores),
        )?),
        _ => None,
    };

    Ok(PoleRiskAssessment {
        pole_id: pole.pole_id.clone(),
        latitude: pole.latitude,
        longitude: pole.longitude,
        fire_risk: fire,
        proximity_accuracy,
        topple_risk: topple,
        fragility: fragility_value,
        clearance_m,
        relative_depth,
        tilt_deg,
        inclination_deg: tilt_deg.map(|t| 90.0 - t),
        cost_metric: cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hough::aggregate_pole_inclination;
    use crate::imaging::BBox;

    fn t(low: f64, moderate: f64) -> RiskThresholds {
        RiskThresholds::new(low, moderate).unwrap()
    }

    fn config() -> RiskConfig {
        RiskConfig {
            fire: t(0.9, 0.4),
            topple: t(0.8, 0.4),
            fragility: FragilityWeights::default(),
            class_scores: ClassScores::default(),
            depth_safe_threshold: 5.0,
            clearance_safe_threshold_m: 3.0,
            wind_speed_ms: 20.0,
            implementation_cost: Some(3000.0),
        }
    }

    fn pole() -> PoleRecord {
        PoleRecord {
            pole_id: "P1".into(),
            latitude: 37.0,
            longitude: -122.0,
            age_years: Some(50.0),
            material: Material::Wood,
            height_m: None,
            circumference_m: None,
        }
    }

    #[test]
    fn fire_risk_cases() {
        assert_eq!(fire_risk(0.95, &t(0.9, 0.7)).unwrap(), RiskClass::Low);
        assert_eq!(fire_risk(0.9, &t(0.9, 0.7)).unwrap(), RiskClass::Moderate);
        assert_eq!(fire_risk(0.7, &t(0.9, 0.7)).unwrap(), RiskClass::High);
        let bad = RiskThresholds {
            thresh_low: 0.5,
            thresh_mod: 0.5,
        };
        assert!(matches!(
            fire_risk(0.7, &bad),
            Err(RiskError::Thresholds { .. })
        ));
        assert!(RiskThresholds::new(0.2, 0.6).is_err());
        assert!(fire_risk(1.2, &t(0.9, 0.7)).is_err());
    }

    #[test]
    fn topple_risk_cases() {
        assert_eq!(topple_risk(0.9, &t(0.8, 0.4)).unwrap(), RiskClass::Low);
        assert_eq!(topple_risk(0.4, &t(0.8, 0.4)).unwrap(), RiskClass::High);
        assert_eq!(topple_risk(0.6, &t(0.8, 0.4)).unwrap(), RiskClass::Moderate);
    }

    #[test]
    fn fragility_cases() {
        let mut w = FragilityWeights::default();
        w.material_factor.insert(Material::Steel, 0.0);
        let zero = FragilityInput {
            tilt_deg: 0.0,
            age_years: 0.0,
            material: Material::Steel,
            wind_speed_ms: 0.0,
        };
        assert_eq!(fragility(&zero, &w).unwrap(), 0.0);
        let sat = FragilityInput {
            tilt_deg: 45.0,
            age_years: 300.0,
            material: Material::Wood,
            wind_speed_ms: 90.0,
        };
        assert_eq!(fragility(&sat, &w).unwrap(), 1.0);
        let worked = FragilityInput {
            tilt_deg: 5.0,
            age_years: 50.0,
            material: Material::Wood,
            wind_speed_ms: 20.0,
        };
        assert_eq!(
            fragility(&worked, &FragilityWeights::default()).unwrap(),
            0.625
        );
    }

    #[test]
    fn fragility_errors() {
        let mut w = FragilityWeights::default();
        w.material_factor.remove(&Material::Composite);
        let input = FragilityInput {
            tilt_deg: 1.0,
            age_years: 1.0,
            material: Material::Composite,
            wind_speed_ms: 1.0,
        };
        assert_eq!(
            fragility(&input, &w),
            Err(RiskError::MissingMaterial(Material::Composite))
        );
        let w = FragilityWeights {
            w_tilt: 0.5,
            ..FragilityWeights::default()
        };
        assert!(matches!(fragility(&input, &w), Err(RiskError::Weights(_))));
    }

    #[test]
    fn scores_and_cost() {
        let s = ClassScores::default();
        assert_eq!(risk_class_score(RiskClass::Low, &s), 1.0);
        assert_eq!(risk_class_score(RiskClass::High, &s), 3.0);
        assert_eq!(
            risk_class_score(RiskClass::High, &ClassScores { high: 10.0, ..s }),
            10.0
        );
        assert_eq!(cost_metric(3000.0, 3.0).unwrap(), 1000.0);
        assert_eq!(cost_metric(0.0, 1.0).unwrap(), 0.0);
        assert_eq!(cost_metric(500.0, 2.0).unwrap(), 250.0);
        assert_eq!(cost_metric(500.0, 0.0), Err(RiskError::Score(0.0)));
    }

    #[test]
    fn assess_partial_and_priority() {
        let cfg = config();
        let incl = aggregate_pole_inclination(&[(0.0, 85.0)]).unwrap();
        let a = assess_pole(&pole(), Some(&incl), None, None, &cfg).unwrap();
        assert_eq!(a.tilt_deg, Some(5.0));
        assert!(a.topple_risk.is_some() && a.fragility.is_some());
        assert_eq!(
            (a.fire_risk, a.cost_metric, a.clearance_m),
            (None, None, None)
        );

        let corridor = CorridorResult {
            tilt_deg: 2.0,
            inclination_deg: 88.0,
            clearance_m: Some(1.0),
            nearest_pair: None,
        };
        let a = assess_pole(&pole(), Some(&incl), Some(&corridor), None, &cfg).unwrap();
        assert_eq!(a.tilt_deg, Some(2.0));

        assert_eq!(
            assess_pole(&pole(), None, None, None, &cfg),
            Err(RiskError::NoInputs("P1".into()))
        );
    }

    #[test]
    fn assess_full_matches_stages() {
        let cfg = config();
        let incl = aggregate_pole_inclination(&[(0.0, 84.0)]).unwrap();
        let corridor = CorridorResult {
            tilt_deg: 5.0,
            inclination_deg: 85.0,
            clearance_m: Some(4.0),
            nearest_pair: None,
        };
        let b = BBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let depth = DepthEstimate {
            pole_id: "P1".into(),
            relative_depth: 1.2,
            actual_distance_m: None,
            pole_box: b,
            vegetation_box: b,
        };
        let a = assess_pole(&pole(), Some(&incl), Some(&corridor), Some(&depth), &cfg).unwrap();

        let frag = fragility(
            &FragilityInput {
                tilt_deg: 5.0,
                age_years: 50.0,
                material: Material::Wood,
                wind_speed_ms: 20.0,
            },
            &cfg.fragility,
        )
        .unwrap();
        assert_eq!(a.fragility, Some(frag));
        assert_eq!(a.topple_risk, Some(topple_risk(frag, &cfg.topple).unwrap()));
        // Clearance 4 >= 3 passes, relative depth 1.2 < 5 fails: accuracy 0.5.
        assert_eq!(a.proximity_accuracy, Some(0.5));
        assert_eq!(a.fire_risk, Some(RiskClass::Moderate));
        assert_eq!(a.cost_metric, Some(1500.0));
        assert_eq!(a.clearance_m, Some(4.0));
        assert_eq!(a.relative_depth, Some(1.2));
    }
}
