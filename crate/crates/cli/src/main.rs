use std::fs::{self, File};
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use polerisk_core::catalog::{build_view_requests, default_profiles, DEFAULT_BASE_URL};
use polerisk_core::depth::{estimate_from_map, load_depth_map, DepthFormat, RegionStatistic};
use polerisk_core::detection::{
    mean_average_precision, read_detections_csv, read_ground_truth_csv,
};
use polerisk_core::hough::HoughParams;
use polerisk_core::pipeline::{format_timings, inclinations_from_rois, rescore};
use polerisk_core::pointcloud::{analyze_cloud, parse_ply, CloudParams};
use polerisk_core::synthetic::{write_synthetic_dataset, SyntheticOptions};
use polerisk_core::{
    emit_geojson, emit_summary, parse_pole_catalog, run_pipeline, BBox, PipelineConfig,
    PipelineRun, PoleRecord,
};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "polerisk",
    version,
    about = "Utility pole inclination, vegetation clearance and risk scoring"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage over a pole catalog and write the risk map and summary.
    Run {
        #[arg(long)]
        catalog: PathBuf,
        /// Root holding one input directory per pole.
        #[arg(long)]
        inputs: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_geojson: PathBuf,
        #[arg(long)]
        out_summary: PathBuf,
        /// Full run record, readable by `risk --assessments-in`.
        #[arg(long)]
        out_json: Option<PathBuf>,
        /// Worker threads; defaults to the available parallelism.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Per-pole inclination from edge masks and an ROI table.
    Inclination {
        /// Directory containing the edge masks named in the ROI table.
        #[arg(long)]
        edges: PathBuf,
        #[arg(long)]
        rois: PathBuf,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Pipeline config whose `[hough]` section overrides the defaults.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Mean average precision of detections against ground truth.
    EvalMap {
        #[arg(long)]
        dets: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        iou: f64,
    },
    /// Relative depth between a pole box and a vegetation box.
    Depth {
        /// 16-bit P5 PGM or PFM depth map.
        #[arg(long)]
        map: PathBuf,
        /// `x_min,y_min,x_max,y_max`
        #[arg(long, value_parser = parse_box, allow_hyphen_values = true)]
        pole_box: BBox,
        #[arg(long, value_parser = parse_box, allow_hyphen_values = true)]
        veg_box: BBox,
        /// Measured pole-to-vegetation distance in metres.
        #[arg(long)]
        actual: Option<f64>,
        #[arg(long, default_value = "")]
        pole_id: String,
        #[arg(long, value_enum, default_value_t = Statistic::Median)]
        statistic: Statistic,
    },
    /// Cluster a reconstructed scene and report pole tilt and clearance.
    Pointcloud {
        #[arg(long)]
        ply: PathBuf,
        #[arg(long, default_value_t = 0.35)]
        eps: f64,
        #[arg(long, default_value_t = 8)]
        min_pts: usize,
        /// JSON destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-score a saved run under a different risk configuration.
    Risk {
        /// Run record written by `run --out-json`.
        #[arg(long)]
        assessments_in: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = ReportFormat::Csv)]
        out: ReportFormat,
        /// Destination file; stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// List the street-level capture requests for each catalog pole.
    Views {
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long, default_value = DEFAULT_BASE_URL)]
        base_url: String,
        /// Use the reconstruction grid instead of the detection sweep.
        #[arg(long)]
        reconstruction: bool,
    },
    /// Write a seeded synthetic input tree with known ground truth.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        poles: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Statistic {
    Median,
    Mean,
    Min,
}

impl From<Statistic> for RegionStatistic {
    fn from(s: Statistic) -> Self {
        match s {
            Statistic::Median => RegionStatistic::Median,
            Statistic::Mean => RegionStatistic::Mean,
            Statistic::Min => RegionStatistic::Min,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Csv,
    Geojson,
}

/// Bad catalog or configuration input exits with 2, anything else with 1.
enum Failure {
    Input(String),
    Other(String),
}

type CmdResult = Result<(), Failure>;

fn other(e: impl std::fmt::Display) -> Failure {
    Failure::Other(e.to_string())
}

fn parse_box(s: &str) -> Result<BBox, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}")))
        .collect::<Result<_, _>>()?;
    let [x0, y0, x1, y1] = v[..] else {
        return Err(format!(
            "expected x_min,y_min,x_max,y_max, got {} values",
            v.len()
        ));
    };
    BBox::new(x0, y0, x1, y1).map_err(|e| e.to_string())
}

fn read_text(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_catalog(path: &Path) -> Result<Vec<PoleRecord>, Failure> {
    let text = read_text(path).map_err(Failure::Input)?;
    parse_pole_catalog(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn load_config(path: &Path) -> Result<PipelineConfig, Failure> {
    let text = read_text(path).map_err(Failure::Input)?;
    PipelineConfig::from_toml_str(&text)
        .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn write_output(path: Option<&Path>, text: &str) -> CmdResult {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Other(format!("{}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            let tail = if text.ends_with('\n') { "" } else { "\n" };
            match out
                .write_all(text.as_bytes())
                .and_then(|_| out.write_all(tail.as_bytes()))
                .and_then(|_| out.flush())
            {
                // A closed downstream pipe is not an error for a filter-style tool.
                Err(e) if e.kind() != ErrorKind::BrokenPipe => Err(other(e)),
                _ => Ok(()),
            }
        }
    }
}

fn run(cmd: Command) -> CmdResult {
    match cmd {
        Command::Run {
            catalog,
            inputs,
            config,
            out_geojson,
            out_summary,
            out_json,
            jobs,
        } => {
            let poles = load_catalog(&catalog)?;
            let cfg = load_config(&config)?;
            let jobs =
                jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let run = run_pipeline(&poles, &inputs, &cfg, jobs).map_err(other)?;
            write_output(Some(&out_geojson), &emit_geojson(&run))?;
            write_output(Some(&out_summary), &emit_summary(&run))?;
            if let Some(p) = out_json {
                write_output(
                    Some(&p),
                    &serde_json::to_string_pretty(&run).map_err(other)?,
                )?;
            }
            eprintln!(
                "run {}: {} assessed, {} failed",
                run.run_id,
                run.assessments.len(),
                run.failures.len()
            );
            for f in &run.failures {
                eprintln!(
                    "  failed {} [{}]: {}",
                    f.pole_id,
                    f.stage.as_str(),
                    f.message
                );
            }
            eprint!("{}", format_timings(&run));
            Ok(())
        }
        Command::Inclination {
            edges,
            rois,
            out,
            config,
        } => {
            let params = match config {
                Some(p) => load_config(&p)?.hough,
                None => HoughParams::default(),
            };
            let results = inclinations_from_rois(&rois, &edges, &params).map_err(Failure::Other)?;
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["pole_id", "inclination_deg", "deflection_deg", "n_views"])
                .map_err(other)?;
            for (pole_id, r) in results {
                match r {
                    Ok(r) => w
                        .write_record([
                            pole_id,
                            r.inclination_deg.to_string(),
                            r.deflection_deg.to_string(),
                            r.n_views_used.to_string(),
                        ])
                        .map_err(other)?,
                    Err(e) => eprintln!("{pole_id}: {e}"),
                }
            }
            let bytes = w.into_inner().map_err(other)?;
            write_output(out.as_deref(), &String::from_utf8_lossy(&bytes))
        }
        Command::EvalMap { dets, gt, iou } => {
            let open = |p: &Path| {
                File::open(p).map_err(|e| Failure::Other(format!("{}: {e}", p.display())))
            };
            let dets = read_detections_csv(open(&dets)?).map_err(other)?;
            let gts = read_ground_truth_csv(open(&gt)?).map_err(other)?;
            let report = mean_average_precision(&dets, &gts, iou).map_err(other)?;
            write_output(None, &serde_json::to_string_pretty(&report).map_err(other)?)
        }
        Command::Depth {
            map,
            pole_box,
            veg_box,
            actual,
            pole_id,
            statistic,
        } => {
            let bytes =
                fs::read(&map).map_err(|e| Failure::Other(format!("{}: {e}", map.display())))?;
            let format = DepthFormat::sniff(&bytes).ok_or_else(|| {
                Failure::Other(format!("{}: unrecognized depth format", map.display()))
            })?;
            let depth = load_depth_map(&bytes, format).map_err(other)?;
            let est = estimate_from_map(
                &pole_id,
                &depth,
                pole_box,
                veg_box,
                statistic.into(),
                actual,
            )
            .map_err(other)?;
            write_output(None, &serde_json::to_string(&est).map_err(other)?)
        }
        Command::Pointcloud {
            ply,
            eps,
            min_pts,
            out,
        } => {
            let bytes =
                fs::read(&ply).map_err(|e| Failure::Other(format!("{}: {e}", ply.display())))?;
            let cloud = parse_ply(&bytes).map_err(other)?;
            let params = CloudParams {
                eps,
                min_pts,
                ..CloudParams::default()
            };
            let a = analyze_cloud(&cloud, &params).map_err(other)?;
            let report = json!({
                "tilt_deg": a.corridor.tilt_deg,
                "inclination_deg": a.corridor.inclination_deg,
                "clearance_m": a.corridor.clearance_m,
                "nearest_pair": a.corridor.nearest_pair,
                "n_points": a.n_points,
                "n_noise": a.n_noise,
                "ground_tilt_deg": a.ground_tilt_deg,
                "up_vector_suspect": a.up_vector_suspect,
                "clusters": a.clusters,
            });
            write_output(
                out.as_deref(),
                &serde_json::to_string_pretty(&report).map_err(other)?,
            )
        }
        Command::Risk {
            assessments_in,
            config,
            out,
            output,
        } => {
            let text = read_text(&assessments_in).map_err(Failure::Input)?;
            let saved: PipelineRun = serde_json::from_str(&text)
                .map_err(|e| Failure::Input(format!("{}: {e}", assessments_in.display())))?;
            let cfg = load_config(&config)?;
            let mut run = rescore(&saved, &cfg.risk);
            run.config = cfg.to_toml_string();
            let text = match out {
                ReportFormat::Csv => emit_summary(&run),
                ReportFormat::Geojson => emit_geojson(&run),
            };
            write_output(output.as_deref(), &text)
        }
        Command::Views {
            catalog,
            base_url,
            reconstruction,
        } => {
            let poles = load_catalog(&catalog)?;
            let (detection, recon) = default_profiles();
            let profiles = if reconstruction {
                recon
            } else {
                vec![detection]
            };
            let mut text = String::from("pole_id\theading\tpitch\tfov\tcache_key\turl\n");
            for pole in &poles {
                for profile in &profiles {
                    for r in build_view_requests(pole, profile) {
                        text.push_str(&format!(
                            "{}\t{}\t{}\t{}\t{}\t{}\n",
                            r.pole_id,
                            r.heading,
                            r.pitch,
                            r.fov,
                            r.cache_key(),
                            r.url(&base_url, None)
                        ));
                    }
                }
            }
            write_output(None, &text)
        }
        Command::Synth { out, poles, seed } => {
            let opts = SyntheticOptions {
                n_poles: poles,
                seed,
                ..SyntheticOptions::default()
            };
            let (_, truth) = write_synthetic_dataset(&out, &opts).map_err(other)?;
            let truth_path = out.join("truth.json");
            write_output(
                Some(&truth_path),
                &serde_json::to_string_pretty(&truth).map_err(other)?,
            )?;
            eprintln!("wrote {} poles under {}", truth.len(), out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Other(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
