//! Pole catalog ingestion, street-view capture planning and the cached
//! image fetcher.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::imaging::RgbRaster;

pub const CATALOG_HEADER: [&str; 7] = [
    "pole_id",
    "lat",
    "lon",
    "age_years",
    "material",
    "height_m",
    "circumference_m",
];

pub const DEFAULT_API_KEY_ENV: &str = "STREETVIEW_API_KEY";
pub const DEFAULT_BASE_URL: &str = "https://maps.googleapis.com/maps/api/streetview";

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("bad catalog header: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("{message}, line {line}")]
    Row { line: u64, message: String },
    #[error("catalog csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid capture profile: {0}")]
    Profile(String),
    #[error("invalid pole record: {0}")]
    Record(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Material {
    Wood,
    Steel,
    Concrete,
    Composite,
    Unknown,
}

impl Material {
    pub const ALL: [Material; 5] = [
        Material::Wood,
        Material::Steel,
        Material::Concrete,
        Material::Composite,
        Material::Unknown,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Material::Wood => "wood",
            Material::Steel => "steel",
            Material::Concrete => "concrete",
            Material::Composite => "composite",
            Material::Unknown => "unknown",
        }
    }

    /// Lenient parse: anything unrecognized is `Unknown`.
    pub fn parse_lenient(s: &str) -> Material {
        s.parse().unwrap_or(Material::Unknown)
    }
}

impl FromStr for Material {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "wood" => Ok(Material::Wood),
            "steel" => Ok(Material::Steel),
            "concrete" => Ok(Material::Concrete),
            "composite" => Ok(Material::Composite),
            "unknown" => Ok(Material::Unknown),
            other => Err(format!("unknown material `{other}`")),
        }
    }
}

impl fmt::Display for Material {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoleRecord {
    pub pole_id: String,
    pub latitude: f64,
    pub longitude: f64,
    pub age_years: Option<f64>,
    pub material: Material,
    pub height_m: Option<f64>,
    pub circumference_m: Option<f64>,
}

impl PoleRecord {
    pub fn validate(&self) -> Result<(), String> {
        if !(-90.0..=90.0).contains(&self.latitude) {
            return Err("latitude out of range".into());
        }
        if !(-180.0..=180.0).contains(&self.longitude) {
            return Err("longitude out of range".into());
        }
        if let Some(age) = self.age_years {
            if !(age >= 0.0) {
                return Err("age_years must be non-negative".into());
            }
        }
        Ok(())
    }

    /// Poles older than fifty years form the ageing cohort most catalogs
    /// single out.
    pub fn is_over_fifty_years(&self) -> bool {
        self.age_years.is_some_and(|a| a > 50.0)
    }
}

fn parse_optional(cell: &str, name: &str, line: u64) -> Result<Option<f64>, CatalogError> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    cell.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .map(Some)
        .ok_or_else(|| CatalogError::Row {
            line,
            message: format!("unparsable {name} `{cell}`"),
        })
}

fn parse_required(cell: &str, name: &str, line: u64) -> Result<f64, CatalogError> {
    parse_optional(cell, name, line)?.ok_or_else(|| CatalogError::Row {
        line,
        message: format!("missing {name}"),
    })
}

/// Parses the pole catalog CSV. Line numbers in errors are 1-based file
/// lines, so the first data row is line 2.
pub fn parse_pole_catalog(csv_text: &str) -> Result<Vec<PoleRecord>, CatalogError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(csv_text.as_bytes());
    let header = reader.headers()?.clone();
    let found: Vec<&str> = header.iter().map(str::trim).collect();
    if found != CATALOG_HEADER {
        return Err(CatalogError::Header {
            expected: CATALOG_HEADER.join(","),
            found: found.join(","),
        });
    }

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != CATALOG_HEADER.len() {
            return Err(CatalogError::Row {
                line,
                message: format!(
                    "expected {} columns, found {}",
                    CATALOG_HEADER.len(),
                    row.len()
                ),
            });
        }
        let pole_id = row[0].trim().to_string();
        if pole_id.is_empty() {
            return Err(CatalogError::Row {
                line,
                message: "empty pole_id".into(),
            });
        }
        let record = PoleRecord {
            pole_id,
            latitude: parse_required(&row[1], "latitude", line)?,
            longitude: parse_required(&row[2], "longitude", line)?,
            age_years: parse_optional(&row[3], "age_years", line)?,
            material: Material::parse_lenient(&row[4]),
            height_m: parse_optional(&row[5], "height_m", line)?,
            circumference_m: parse_optional(&row[6], "circumference_m", line)?,
        };
        record
            .validate()
            .map_err(|message| CatalogError::Row { line, message })?;
        records.push(record);
    }
    Ok(records)
}

/// Inverse of [`parse_pole_catalog`].
pub fn write_pole_catalog(records: &[PoleRecord]) -> Result<String, CatalogError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(CATALOG_HEADER)?;
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for r in records {
        w.write_record([
            r.pole_id.clone(),
            r.latitude.to_string(),
            r.longitude.to_string(),
            opt(r.age_years),
            r.material.to_string(),
            opt(r.height_m),
            opt(r.circumference_m),
        ])?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CatalogError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv writer emits utf-8 for utf-8 input"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureProfile {
    pub image_width: u32,
    pub image_height: u32,
    pub fov_degrees: f64,
    pub pitch_degrees: f64,
    pub headings: Vec<f64>,
}

impl CaptureProfile {
    pub fn new(
        image_width: u32,
        image_height: u32,
        fov_degrees: f64,
        pitch_degrees: f64,
        headings: Vec<f64>,
    ) -> Result<Self, CatalogError> {
        let p = CaptureProfile {
            image_width,
            image_height,
            fov_degrees,
            pitch_degrees,
            headings,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), CatalogError> {
        if self.image_width == 0 || self.image_height == 0 {
            return Err(CatalogError::Profile("image size must be positive".into()));
        }
        if !(self.fov_degrees > 0.0 && self.fov_degrees <= 120.0) {
            return Err(CatalogError::Profile(format!(
                "fov {} outside (0, 120]",
                self.fov_degrees
            )));
        }
        if let Some(h) = self.headings.iter().find(|h| !(0.0..360.0).contains(*h)) {
            return Err(CatalogError::Profile(format!(
                "heading {h} outside [0, 360)"
            )));
        }
        Ok(())
    }

    /// `count` headings starting at `start`, `step` degrees apart, wrapped
    /// into `[0, 360)`.
    pub fn heading_sweep(start: f64, step: f64, count: usize) -> Vec<f64> {
        (0..count)
            .map(|i| (start + step * i as f64).rem_euclid(360.0))
            .collect()
    }

    pub fn view_count(&self) -> usize {
        self.headings.len()
    }
}

/// The detection profile (10 views at 620x620, fov 10, pitch 0, 36 degree
/// heading step) and the 35-view reconstruction grid at 2500x2500.
pub fn default_profiles() -> (CaptureProfile, Vec<CaptureProfile>) {
    let detection = CaptureProfile {
        image_width: 620,
        image_height: 620,
        fov_degrees: 10.0,
        pitch_degrees: 0.0,
        headings: CaptureProfile::heading_sweep(0.0, 36.0, 10),
    };
    let recon = |fov: f64, pitch: f64, step: f64, count: usize| CaptureProfile {
        image_width: 2500,
        image_height: 2500,
        fov_degrees: fov,
        pitch_degrees: pitch,
        headings: CaptureProfile::heading_sweep(0.0, step, count),
    };
    let reconstruction = vec![
        recon(10.0, 0.0, 36.0, 10),
        recon(20.0, 0.0, 36.0, 10),
        recon(10.0, 10.0, 36.0, 10),
        recon(20.0, 10.0, 72.0, 5),
    ];
    (detection, reconstruction)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewRequest {
    pub pole_id: String,
    pub latitude: f64,
    pub longitude: f64,
    pub heading: f64,
    pub pitch: f64,
    pub fov: f64,
    pub width: u32,
    pub height: u32,
}

impl ViewRequest {
    /// Query string without the API key; this is also the cache identity.
    pub fn canonical_query(&self) -> String {
        format!(
            "size={}x{}&fov={}&pitch={}&heading={}&location={},{}",
            self.width,
            self.height,
            self.fov,
            self.pitch,
            self.heading,
            self.latitude,
            self.longitude
        )
    }

    pub fn url(&self, base_url: &str, api_key: Option<&str>) -> String {
        let mut url = format!("{base_url}?{}", self.canonical_query());
        if let Some(key) = api_key {
            url.push_str("&key=");
            url.push_str(key);
        }
        url
    }

    /// Stable hex SHA-256 of the canonical query.
    pub fn cache_key(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_query().as_bytes()))
    }
}

pub fn build_view_requests(pole: &PoleRecord, profile: &CaptureProfile) -> Vec<ViewRequest> {
    let mut headings = profile.headings.clone();
    headings.sort_by(f64::total_cmp);
    headings
        .into_iter()
        .map(|heading| ViewRequest {
            pole_id: pole.pole_id.clone(),
            latitude: pole.latitude,
            longitude: pole.longitude,
            heading,
            pitch: profile.pitch_degrees,
            fov: profile.fov_degrees,
            width: profile.image_width,
            height: profile.image_height,
        })
        .collect()
}

/// Transport used by [`fetch_views`]. Implementations must be callable from
/// several threads at once.
pub trait ImageFetchClient: Sync {
    fn get(&self, url: &str) -> Result<Vec<u8>, String>;
}

#[derive(Debug, Clone)]
pub struct FetchConfig {
    pub base_url: String,
    pub api_key_env: String,
    pub cache_root: PathBuf,
}

impl FetchConfig {
    pub fn new(cache_root: impl Into<PathBuf>) -> Self {
        Self {
            base_url: DEFAULT_BASE_URL.to_string(),
            api_key_env: DEFAULT_API_KEY_ENV.to_string(),
            cache_root: cache_root.into(),
        }
    }

    pub fn api_key(&self) -> Option<String> {
        std::env::var(&self.api_key_env).ok()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageAsset {
    pub request: ViewRequest,
    pub pixels: RgbRaster,
    pub fetched_at: SystemTime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FetchFailure {
    /// Index into the request list passed to [`fetch_views`].
    pub index: usize,
    pub request: ViewRequest,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct FetchOutcome {
    pub assets: Vec<ImageAsset>,
    pub failures: Vec<FetchFailure>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheSidecar {
    key: String,
    query: String,
    fetched_at_unix: u64,
    width: u32,
    height: u32,
}

/// Content-addressed image cache: `<root>/<key[..2]>/<key>.img` plus a
/// `<key>.json` sidecar.
#[derive(Debug, Clone)]
pub struct ImageCache {
    root: PathBuf,
}

impl ImageCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn image_path(&self, key: &str) -> PathBuf {
        self.root.join(&key[..2]).join(format!("{key}.img"))
    }

    pub fn sidecar_path(&self, key: &str) -> PathBuf {
        self.root.join(&key[..2]).join(format!("{key}.json"))
    }

    fn load(&self, key: &str) -> Option<(Vec<u8>, SystemTime)> {
        let bytes = fs::read(self.image_path(key)).ok()?;
        let meta: CacheSidecar =
            serde_json::from_slice(&fs::read(self.sidecar_path(key)).ok()?).ok()?;
        Some((
            bytes,
            UNIX_EPOCH + std::time::Duration::from_secs(meta.fetched_at_unix),
        ))
    }

    fn store(&self, req: &ViewRequest, key: &str, bytes: &[u8], at: SystemTime) -> io::Result<()> {
        let dir = self.root.join(&key[..2]);
        fs::create_dir_all(&dir)?;
        let meta = CacheSidecar {
            key: key.to_string(),
            query: req.canonical_query(),
            fetched_at_unix: at.duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            width: req.width,
            height: req.height,
        };
        // Image first, sidecar last: a present sidecar marks a complete entry.
        write_atomic(&self.image_path(key), bytes)?;
        write_atomic(&self.sidecar_path(key), &serde_json::to_vec_pretty(&meta)?)
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)
}

fn decode_rgb(bytes: &[u8], req: &ViewRequest) -> Result<RgbRaster, String> {
    let img = image::load_from_memory(bytes).map_err(|e| format!("undecodable image: {e}"))?;
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    if (w, h) != (req.width, req.height) {
        return Err(format!(
            "image is {w}x{h}, requested {}x{}",
            req.width, req.height
        ));
    }
    RgbRaster::new(w as usize, h as usize, rgb.into_raw()).map_err(|e| e.to_string())
}

/// Fetches every request through the cache. Identical requests share one
/// cache entry and at most one client call; failures are recorded per
/// request and never stop the others.
pub fn fetch_views(
    requests: &[ViewRequest],
    client: &dyn ImageFetchClient,
    config: &FetchConfig,
) -> FetchOutcome {
    let cache = ImageCache::new(&config.cache_root);
    let api_key = config.api_key();

    let mut unique: BTreeMap<String, &ViewRequest> = BTreeMap::new();
    for r in requests {
        unique.entry(r.cache_key()).or_insert(r);
    }

    let resolved: HashMap<String, Result<(Vec<u8>, SystemTime), String>> = unique
        .par_iter()
        .map(|(key, req)| {
            if let Some(hit) = cache.load(key) {
                return (key.clone(), Ok(hit));
            }
            let result = client
                .get(&req.url(&config.base_url, api_key.as_deref()))
                .map_err(|e| format!("transport failure: {e}"))
                .and_then(|bytes| {
                    decode_rgb(&bytes, req)?;
                    let now = SystemTime::now();
                    cache
                        .store(req, key, &bytes, now)
                        .map_err(|e| format!("cache write failed: {e}"))?;
                    Ok((bytes, now))
                });
            (key.clone(), result)
        })
        .collect();

    let mut outcome = FetchOutcome::default();
    for (index, req) in requests.iter().enumerate() {
        let decoded = resolved[&req.cache_key()]
            .as_ref()
            .map_err(Clone::clone)
            .and_then(|(bytes, at)| decode_rgb(bytes, req).map(|px| (px, *at)));
        match decoded {
            Ok((pixels, fetched_at)) => outcome.assets.push(ImageAsset {
                request: req.clone(),
                pixels,
                fetched_at,
            }),
            Err(message) => outcome.failures.push(FetchFailure {
                index,
                request: req.clone(),
                message,
            }),
        }
    }
    outcome
}
