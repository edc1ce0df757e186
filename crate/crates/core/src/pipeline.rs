//! End-to-end orchestration over a pole catalog and report emission.
//!
//! Input layout, one directory per pole under the inputs root:
//!
//! ```text
//! <root>/<pole_id>/rois.csv          pole_id,image,heading,x_min,y_min,x_max,y_max
//! <root>/<pole_id>/edges/<image>     binary P5 PGM edge mask, nonzero = edge
//! <root>/<pole_id>/depth/boxes.csv   map,pole_x_min,...,veg_y_max,actual_m
//! <root>/<pole_id>/depth/<map>       P5 PGM or PFM depth map
//! <root>/<pole_id>/cloud.ply         reconstructed scene
//! ```
//!
//! A stage runs only when its inputs exist. Stage errors are recorded, never
//! propagated.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::catalog::{write_pole_catalog, PoleRecord};
use crate::config::PipelineConfig;
use crate::depth::{estimate_from_map, load_depth_map, DepthEstimate, DepthFormat, DepthMap};
use crate::hough::{aggregate_pole_inclination, measure_view, HoughParams, InclinationResult};
use crate::imaging::{BBox, EdgeMask};
use crate::pointcloud::{analyze_cloud, parse_ply, CorridorResult};
use crate::risk::{assess_pole, PoleRiskAssessment, RiskClass, RiskConfig};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("failed to build worker pool: {0}")]
    Pool(String),
    #[error("jobs must be at least 1")]
    Jobs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Inclination,
    Depth,
    Corridor,
    Assess,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Inclination => "inclination",
            Stage::Depth => "depth",
            Stage::Corridor => "corridor",
            Stage::Assess => "assess",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageIssue {
    pub pole_id: String,
    pub stage: Stage,
    pub message: String,
}

/// Stage outputs and the resulting assessment for one pole.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoleResult {
    pub pole: PoleRecord,
    pub inclination: Option<InclinationResult>,
    pub depth: Option<DepthEstimate>,
    pub corridor: Option<CorridorResult>,
    pub assessment: PoleRiskAssessment,
    /// Stages that failed or produced suspect output without preventing the
    /// assessment.
    pub warnings: Vec<StageIssue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRun {
    pub run_id: String,
    /// Canonical TOML of the configuration the run used.
    pub config: String,
    /// Ordered by pole id, then catalog position.
    pub assessments: Vec<PoleResult>,
    /// One entry per catalog pole that produced no assessment.
    pub failures: Vec<StageIssue>,
    /// Wall-clock seconds summed over poles, per stage.
    pub timings: BTreeMap<Stage, f64>,
}

/// Deterministic run identifier derived from the catalog and configuration.
pub fn run_id(catalog: &[PoleRecord], config: &PipelineConfig) -> String {
    let mut h = Sha256::new();
    h.update(write_pole_catalog(catalog).unwrap_or_default().as_bytes());
    h.update([0u8]);
    h.update(config.to_toml_string().as_bytes());
    hex::encode(&h.finalize()[..8])
}

enum Outcome {
    Assessed(Box<PoleResult>),
    Failed(StageIssue),
}

type StageTimes = Vec<(Stage, f64)>;

/// Runs every stage with available inputs for each pole on a pool of `jobs`
/// worker threads.
pub fn run_pipeline(
    catalog: &[PoleRecord],
    inputs_root: &Path,
    config: &PipelineConfig,
    jobs: usize,
) -> Result<PipelineRun, PipelineError> {
    if jobs == 0 {
        return Err(PipelineError::Jobs);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| PipelineError::Pool(e.to_string()))?;
    let mut results: Vec<(usize, Outcome, StageTimes)> = pool.install(|| {
        catalog
            .par_iter()
            .enumerate()
            .map(|(i, pole)| {
                let (o, t) = process_pole(pole, inputs_root, config);
                (i, o, t)
            })
            .collect()
    });
    results.sort_by(|a, b| {
        catalog[a.0]
            .pole_id
            .cmp(&catalog[b.0].pole_id)
            .then(a.0.cmp(&b.0))
    });

    let mut run = PipelineRun {
        run_id: run_id(catalog, config),
        config: config.to_toml_string(),
        assessments: Vec::new(),
        failures: Vec::new(),
        timings: BTreeMap::new(),
    };
    for (_, outcome, times) in results {
        for (stage, secs) in times {
            *run.timings.entry(stage).or_default() += secs;
        }
        match outcome {
            Outcome::Assessed(r) => run.assessments.push(*r),
            Outcome::Failed(f) => run.failures.push(f),
        }
    }
    Ok(run)
}

/// Recomputes every assessment from its stored stage outputs under a new
/// risk configuration.
pub fn rescore(run: &PipelineRun, risk: &RiskConfig) -> PipelineRun {
    let mut out = run.clone();
    let mut kept = Vec::with_capacity(out.assessments.len());
    for mut r in out.assessments {
        match assess_pole(
            &r.pole,
            r.inclination.as_ref(),
            r.corridor.as_ref(),
            r.depth.as_ref(),
            risk,
        ) {
            Ok(a) => {
                r.assessment = a;
                kept.push(r);
            }
            Err(e) => out.failures.push(StageIssue {
                pole_id: r.pole.pole_id.clone(),
                stage: Stage::Assess,
                message: e.to_string(),
            }),
        }
    }
    out.assessments = kept;
    out.failures.sort_by(|a, b| a.pole_id.cmp(&b.pole_id));
    out
}

fn pole_dir(root: &Path, pole_id: &str) -> Option<PathBuf> {
    let safe = !pole_id.is_empty()
        && pole_id != "."
        && pole_id != ".."
        && !pole_id.contains(['/', '\\', '\0']);
    safe.then(|| root.join(pole_id))
}

fn process_pole(pole: &PoleRecord, root: &Path, config: &PipelineConfig) -> (Outcome, StageTimes) {
    let mut issues = Vec::new();
    let mut times = Vec::new();
    let issue = |stage, message: String| StageIssue {
        pole_id: pole.pole_id.clone(),
        stage,
        message,
    };

    let Some(dir) = pole_dir(root, &pole.pole_id) else {
        return (
            Outcome::Failed(issue(
                Stage::Assess,
                "pole id cannot name an input directory".into(),
            )),
            times,
        );
    };

    let mut timed = |stage: Stage, f: &mut dyn FnMut() -> Option<Result<(), String>>| {
        let t0 = Instant::now();
        let r = f();
        if r.is_some() {
            times.push((stage, t0.elapsed().as_secs_f64()));
        }
        if let Some(Err(e)) = r {
            issues.push(issue(stage, e));
        }
    };

    let mut inclination = None;
    timed(Stage::Inclination, &mut || {
        let rois = dir.join("rois.csv");
        rois.is_file().then(|| {
            inclination = Some(inclination_stage(&dir, &rois, config)?);
            Ok(())
        })
    });

    let mut depth = None;
    let mut depth_warn = None;
    timed(Stage::Depth, &mut || {
        let boxes = dir.join("depth").join("boxes.csv");
        boxes.is_file().then(|| {
            let (est, warn) = depth_stage(&pole.pole_id, &dir.join("depth"), &boxes, config)?;
            depth = Some(est);
            depth_warn = warn;
            Ok(())
        })
    });

    let mut corridor = None;
    let mut corridor_warn = None;
    timed(Stage::Corridor, &mut || {
        let ply = dir.join("cloud.ply");
        ply.is_file().then(|| {
            let bytes = std::fs::read(&ply).map_err(|e| format!("{}: {e}", ply.display()))?;
            let cloud = parse_ply(&bytes).map_err(|e| e.to_string())?;
            let analysis = analyze_cloud(&cloud, &config.pointcloud).map_err(|e| e.to_string())?;
            if analysis.up_vector_suspect {
                corridor_warn = Some(format!(
                    "dominant ground plane tilts {:.1} deg from the up vector",
                    analysis.ground_tilt_deg.unwrap_or(f64::NAN)
                ));
            }
            corridor = Some(analysis.corridor);
            Ok(())
        })
    });
    issues.extend(depth_warn.map(|m| issue(Stage::Depth, m)));
    issues.extend(corridor_warn.map(|m| issue(Stage::Corridor, m)));

    let t0 = Instant::now();
    let assessed = assess_pole(
        pole,
        inclination.as_ref(),
        corridor.as_ref(),
        depth.as_ref(),
        &config.risk,
    );
    times.push((Stage::Assess, t0.elapsed().as_secs_f64()));
    let outcome = match assessed {
        Ok(assessment) => Outcome::Assessed(Box::new(PoleResult {
            pole: pole.clone(),
            inclination,
            depth,
            corridor,
            assessment,
            warnings: issues,
        })),
        Err(e) if issues.is_empty() => Outcome::Failed(issue(Stage::Assess, e.to_string())),
        Err(_) => {
            let stage = issues[0].stage;
            let message = issues
                .iter()
                .map(|i| format!("{}: {}", i.stage.as_str(), i.message))
                .collect::<Vec<_>>()
                .join("; ");
            Outcome::Failed(issue(stage, message))
        }
    };
    (outcome, times)
}

#[derive(Debug, Deserialize)]
struct RoiRow {
    pole_id: String,
    image: String,
    heading: f64,
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

fn safe_file(dir: &Path, name: &str) -> Result<PathBuf, String> {
    if name.is_empty() || name.contains(['/', '\\', '\0']) || name == "." || name == ".." {
        return Err(format!("invalid file name `{name}`"));
    }
    Ok(dir.join(name))
}

/// Reads a binary P5 PGM as an edge mask; nonzero samples are edges.
pub fn load_edge_mask(bytes: &[u8]) -> Result<EdgeMask, String> {
    let map = load_depth_map(bytes, DepthFormat::Pgm16).map_err(|e| e.to_string())?;
    EdgeMask::from_bits(
        map.width(),
        map.height(),
        map.values().iter().map(|v| *v != 0.0).collect(),
    )
    .map_err(|e| e.to_string())
}

/// Encodes an edge mask as an 8-bit P5 PGM with edges at 255.
pub fn encode_edge_mask(mask: &EdgeMask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    out.extend(mask.bits().iter().map(|b| if *b { 255u8 } else { 0 }));
    out
}

fn inclination_stage(
    dir: &Path,
    rois: &Path,
    config: &PipelineConfig,
) -> Result<InclinationResult, String> {
    let rows = read_roi_rows(rois)?;
    measure_rows(&rows, &dir.join("edges"), &config.hough)
}

fn read_roi_rows(rois: &Path) -> Result<Vec<RoiRow>, String> {
    let mut reader =
        csv::Reader::from_path(rois).map_err(|e| format!("{}: {e}", rois.display()))?;
    reader
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| format!("{}: {e}", rois.display()))
}

/// Median inclination over the views in `rows`. Views that fail are skipped
/// unless every view fails.
fn measure_rows(
    rows: &[RoiRow],
    edges_dir: &Path,
    params: &HoughParams,
) -> Result<InclinationResult, String> {
    let mut masks: HashMap<&str, EdgeMask> = HashMap::new();
    let mut views = Vec::new();
    let mut errors = Vec::new();
    for row in rows {
        let result = (|| -> Result<f64, String> {
            if !masks.contains_key(row.image.as_str()) {
                let path = safe_file(edges_dir, &row.image)?;
                let bytes = std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
                masks.insert(&row.image, load_edge_mask(&bytes)?);
            }
            let roi =
                BBox::new(row.x_min, row.y_min, row.x_max, row.y_max).map_err(|e| e.to_string())?;
            let (_, incl) = measure_view(&masks[row.image.as_str()], &roi, params)
                .map_err(|e| e.to_string())?;
            Ok(incl)
        })();
        match result {
            Ok(incl) => views.push((row.heading, incl)),
            Err(e) => errors.push(format!("{} @ {}: {e}", row.image, row.heading)),
        }
    }
    if views.is_empty() {
        return Err(if errors.is_empty() {
            "no views listed".into()
        } else {
            errors.join("; ")
        });
    }
    aggregate_pole_inclination(&views).map_err(|e| e.to_string())
}

/// Per-pole inclination from an ROI table (`pole_id,image,heading,x_min,
/// y_min,x_max,y_max`) whose images live in `edges_dir`. Keyed by pole id.
pub fn inclinations_from_rois(
    rois: &Path,
    edges_dir: &Path,
    params: &HoughParams,
) -> Result<BTreeMap<String, Result<InclinationResult, String>>, String> {
    let mut by_pole: BTreeMap<String, Vec<RoiRow>> = BTreeMap::new();
    for row in read_roi_rows(rois)? {
        by_pole.entry(row.pole_id.clone()).or_default().push(row);
    }
    Ok(by_pole
        .into_iter()
        .map(|(id, rows)| {
            let r = measure_rows(&rows, edges_dir, params);
            (id, r)
        })
        .collect())
}

#[derive(Debug, Deserialize)]
struct BoxRow {
    map: String,
    pole_x_min: f64,
    pole_y_min: f64,
    pole_x_max: f64,
    pole_y_max: f64,
    veg_x_min: f64,
    veg_y_min: f64,
    veg_x_max: f64,
    veg_y_max: f64,
    actual_m: Option<f64>,
}

/// Per-map estimates are reduced to the one with the smallest relative depth.
fn depth_stage(
    pole_id: &str,
    dir: &Path,
    boxes: &Path,
    config: &PipelineConfig,
) -> Result<(DepthEstimate, Option<String>), String> {
    let mut reader =
        csv::Reader::from_path(boxes).map_err(|e| format!("{}: {e}", boxes.display()))?;
    let mut maps: HashMap<String, DepthMap> = HashMap::new();
    let mut best: Option<DepthEstimate> = None;
    let mut errors = Vec::new();
    for row in reader.deserialize::<BoxRow>() {
        let row = row.map_err(|e| format!("boxes.csv: {e}"))?;
        let result = (|| -> Result<DepthEstimate, String> {
            if !maps.contains_key(&row.map) {
                let path = safe_file(dir, &row.map)?;
                let bytes = std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
                let format = DepthFormat::sniff(&bytes)
                    .ok_or_else(|| format!("{}: unrecognized depth format", row.map))?;
                maps.insert(
                    row.map.clone(),
                    load_depth_map(&bytes, format).map_err(|e| e.to_string())?,
                );
            }
            let pole_box = BBox::new(
                row.pole_x_min,
                row.pole_y_min,
                row.pole_x_max,
                row.pole_y_max,
            )
            .map_err(|e| e.to_string())?;
            let veg_box = BBox::new(row.veg_x_min, row.veg_y_min, row.veg_x_max, row.veg_y_max)
                .map_err(|e| e.to_string())?;
            estimate_from_map(
                pole_id,
                &maps[&row.map],
                pole_box,
                veg_box,
                config.region_statistic,
                row.actual_m,
            )
            .map_err(|e| e.to_string())
        })();
        match result {
            Ok(e) => {
                if best
                    .as_ref()
                    .is_none_or(|b| e.relative_depth < b.relative_depth)
                {
                    best = Some(e);
                }
            }
            Err(e) => errors.push(format!("{}: {e}", row.map)),
        }
    }
    match best {
        Some(b) => Ok((b, (!errors.is_empty()).then(|| errors.join("; ")))),
        None if errors.is_empty() => Err("boxes.csv lists no depth maps".into()),
        None => Err(errors.join("; ")),
    }
}

/// Rounds to six decimal places; `-0` becomes `0`.
fn round6(v: f64) -> f64 {
    let r = (v * 1e6).round() / 1e6;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn num(v: Option<f64>) -> Value {
    v.filter(|x| x.is_finite())
        .map_or(Value::Null, |x| json!(round6(x)))
}

fn class(c: Option<RiskClass>) -> Value {
    c.map_or(Value::Null, |c| json!(c.as_str()))
}

/// GeoJSON FeatureCollection with one Point feature per assessed pole.
/// Property keys are sorted and numbers carry at most six decimals, so equal
/// runs produce identical bytes.
pub fn emit_geojson(run: &PipelineRun) -> String {
    #[derive(Serialize)]
    struct Geometry {
        #[serde(rename = "type")]
        kind: &'static str,
        coordinates: [Value; 2],
    }
    #[derive(Serialize)]
    struct Feature {
        #[serde(rename = "type")]
        kind: &'static str,
        geometry: Geometry,
        properties: BTreeMap<&'static str, Value>,
    }
    #[derive(Serialize)]
    struct Collection {
        #[serde(rename = "type")]
        kind: &'static str,
        features: Vec<Feature>,
    }

    let features = run
        .assessments
        .iter()
        .map(|r| {
            let a = &r.assessment;
            let properties = BTreeMap::from([
                ("pole_id", json!(a.pole_id)),
                ("fire_risk", class(a.fire_risk)),
                ("topple_risk", class(a.topple_risk)),
                ("fragility", num(a.fragility)),
                ("tilt_deg", num(a.tilt_deg)),
                ("inclination_deg", num(a.inclination_deg)),
                ("clearance_m", num(a.clearance_m)),
                ("relative_depth", num(a.relative_depth)),
                ("proximity_accuracy", num(a.proximity_accuracy)),
                ("cost_metric", num(a.cost_metric)),
            ]);
            Feature {
                kind: "Feature",
                geometry: Geometry {
                    kind: "Point",
                    coordinates: [num(Some(a.longitude)), num(Some(a.latitude))],
                },
                properties,
            }
        })
        .collect();
    serde_json::to_string(&Collection {
        kind: "FeatureCollection",
        features,
    })
    .expect("geojson is serializable")
}

pub const SUMMARY_HEADER: [&str; 12] = [
    "pole_id",
    "latitude",
    "longitude",
    "fire_risk",
    "topple_risk",
    "fragility",
    "tilt_deg",
    "inclination_deg",
    "clearance_m",
    "relative_depth",
    "proximity_accuracy",
    "cost_metric",
];

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn histogram(values: impl Iterator<Item = Option<RiskClass>>) -> String {
    let mut counts = [0usize; 3];
    let mut missing = 0;
    for v in values {
        match v {
            Some(RiskClass::Low) => counts[0] += 1,
            Some(RiskClass::Moderate) => counts[1] += 1,
            Some(RiskClass::High) => counts[2] += 1,
            None => missing += 1,
        }
    }
    format!(
        "Low={} Moderate={} High={} none={}",
        counts[0], counts[1], counts[2], missing
    )
}

/// Per-pole CSV rows followed by `#`-prefixed footer lines: pole counts,
/// mean and median deflection over poles with a tilt, risk-class histograms
/// and one line per failure.
pub fn emit_summary(run: &PipelineRun) -> String {
    let mut w = csv::WriterBuilder::new()
        .flexible(true)
        .from_writer(Vec::new());
    w.write_record(SUMMARY_HEADER).expect("in-memory write");
    for r in &run.assessments {
        let a = &r.assessment;
        w.write_record([
            a.pole_id.clone(),
            a.latitude.to_string(),
            a.longitude.to_string(),
            a.fire_risk
                .map(|c| c.as_str().to_string())
                .unwrap_or_default(),
            a.topple_risk
                .map(|c| c.as_str().to_string())
                .unwrap_or_default(),
            cell(a.fragility),
            cell(a.tilt_deg),
            cell(a.inclination_deg),
            cell(a.clearance_m),
            cell(a.relative_depth),
            cell(a.proximity_accuracy),
            cell(a.cost_metric),
        ])
        .expect("in-memory write");
    }

    let mut deflections: Vec<f64> = run
        .assessments
        .iter()
        .filter_map(|r| r.assessment.tilt_deg)
        .collect();
    let mean = (!deflections.is_empty())
        .then(|| deflections.iter().sum::<f64>() / deflections.len() as f64);
    let median = (!deflections.is_empty()).then(|| crate::depth::median(&mut deflections));

    let footer = [
        ["# run_id".to_string(), run.run_id.clone()],
        ["# assessed".to_string(), run.assessments.len().to_string()],
        ["# failed".to_string(), run.failures.len().to_string()],
        ["# mean_deflection_deg".to_string(), cell(mean)],
        ["# median_deflection_deg".to_string(), cell(median)],
        [
            "# fire_risk".to_string(),
            histogram(run.assessments.iter().map(|r| r.assessment.fire_risk)),
        ],
        [
            "# topple_risk".to_string(),
            histogram(run.assessments.iter().map(|r| r.assessment.topple_risk)),
        ],
    ];
    for row in footer {
        w.write_record(row).expect("in-memory write");
    }
    for f in &run.failures {
        w.write_record(["# failure", &f.pole_id, f.stage.as_str(), &f.message])
            .expect("in-memory write");
    }
    for r in &run.assessments {
        for f in &r.warnings {
            w.write_record(["# warning", &f.pole_id, f.stage.as_str(), &f.message])
                .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

/// Human-readable per-stage timing table.
pub fn format_timings(run: &PipelineRun) -> String {
    let mut s = String::new();
    for (stage, secs) in &run.timings {
        let _ = writeln!(s, "{:<12} {:>10.3} s", stage.as_str(), secs);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Material;
    use crate::risk::{ClassScores, FragilityWeights, RiskThresholds};

    fn pole(id: &str) -> PoleRecord {
        PoleRecord {
            pole_id: id.into(),
            latitude: 37.5,
            longitude: -122.25,
            age_years: Some(40.0),
            material: Material::Wood,
            height_m: None,
            circumference_m: None,
        }
    }

    fn risk_config() -> RiskConfig {
        RiskConfig {
            fire: RiskThresholds {
                thresh_low: 0.9,
                thresh_mod: 0.4,
            },
            topple: RiskThresholds {
                thresh_low: 0.8,
                thresh_mod: 0.4,
            },
            fragility: FragilityWeights::default(),
            class_scores: ClassScores::default(),
            depth_safe_threshold: 5.0,
            clearance_safe_threshold_m: 3.0,
            wind_speed_ms: 0.0,
            implementation_cost: None,
        }
    }

    fn run_with_tilts(tilts: &[f64]) -> PipelineRun {
        let cfg = risk_config();
        let assessments = tilts
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let p = pole(&format!("P{i}"));
                let incl = InclinationResult::from_inclination(90.0 - t, vec![]);
                let assessment = assess_pole(&p, Some(&incl), None, None, &cfg).unwrap();
                PoleResult {
                    pole: p,
                    inclination: Some(incl),
                    depth: None,
                    corridor: None,
                    assessment,
                    warnings: vec![],
                }
            })
            .collect();
        PipelineRun {
            run_id: "r".into(),
            config: String::new(),
            assessments,
            failures: vec![],
            timings: BTreeMap::new(),
        }
    }

    fn footer_value(summary: &str, key: &str) -> String {
        let line = summary
            .lines()
            .find(|l| l.starts_with(&format!("# {key},")))
            .unwrap();
        line.split_once(',').unwrap().1.to_string()
    }

    #[test]
    fn empty_geojson() {
        let run = run_with_tilts(&[]);
        assert_eq!(
            emit_geojson(&run),
            r#"{"type":"FeatureCollection","features":[]}"#
        );
    }

    #[test]
    fn single_feature_coordinates() {
        let g: Value = serde_json::from_str(&emit_geojson(&run_with_tilts(&[2.5]))).unwrap();
        let f = &g["features"][0];
        assert_eq!(f["type"], "Feature");
        assert_eq!(f["geometry"]["type"], "Point");
        assert_eq!(f["geometry"]["coordinates"], json!([-122.25, 37.5]));
        assert_eq!(f["properties"]["pole_id"], "P0");
        assert_eq!(f["properties"]["tilt_deg"], json!(2.5));
        assert_eq!(f["properties"]["clearance_m"], Value::Null);
    }

    #[test]
    fn rounding_to_six_places() {
        assert_eq!(round6(0.12345649), 0.123456);
        assert_eq!(round6(-1e-9), 0.0);
        assert!(round6(-1e-9).is_sign_positive());
        assert_eq!(num(Some(f64::NAN)), Value::Null);
    }

    #[test]
    fn summary_mean_deflection() {
        let s = emit_summary(&run_with_tilts(&[0.0, 0.0]));
        assert_eq!(footer_value(&s, "mean_deflection_deg"), "0");
        let s = emit_summary(&run_with_tilts(&[1.0, 3.0]));
        assert_eq!(footer_value(&s, "mean_deflection_deg"), "2");
        assert_eq!(footer_value(&s, "median_deflection_deg"), "2");
        assert_eq!(footer_value(&s, "assessed"), "2");
        assert!(s.starts_with(&SUMMARY_HEADER.join(",")));
    }

    #[test]
    fn summary_without_tilts() {
        let s = emit_summary(&run_with_tilts(&[]));
        assert_eq!(footer_value(&s, "mean_deflection_deg"), "");
        assert_eq!(
            footer_value(&s, "fire_risk"),
            "Low=0 Moderate=0 High=0 none=0"
        );
    }

    #[test]
    fn pole_dir_rejects_traversal() {
        let root = Path::new("/data");
        assert_eq!(pole_dir(root, "P1"), Some(root.join("P1")));
        assert_eq!(pole_dir(root, ".."), None);
        assert_eq!(pole_dir(root, "a/b"), None);
        assert_eq!(pole_dir(root, ""), None);
    }

    #[test]
    fn edge_mask_pgm_round_trip() {
        let mut m = EdgeMask::new(5, 3);
        m.set(1, 2, true);
        m.set(4, 0, true);
        assert_eq!(load_edge_mask(&encode_edge_mask(&m)).unwrap(), m);
    }

    #[test]
    fn rescore_applies_new_thresholds() {
        let run = run_with_tilts(&[5.0]);
        let before = run.assessments[0].assessment.topple_risk;
        let mut cfg = risk_config();
        cfg.topple = RiskThresholds {
            thresh_low: 0.99,
            thresh_mod: 0.98,
        };
        let after = rescore(&run, &cfg);
        assert_ne!(after.assessments[0].assessment.topple_risk, before);
        assert_eq!(
            after.assessments[0].assessment.topple_risk,
            Some(RiskClass::High)
        );
    }
}
