//! `fidreg` command-line tool.

mod config;
mod plots;
mod records;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use nalgebra::Vector3;

use fidreg::cloud::PointCloud;
use fidreg::image::{project, ProjectionConfig};
use fidreg::io;
use fidreg::map_locate::locate_markers_in_map;
use fidreg::marker::{MarkerSpec, TagFamily};
use fidreg::metrics::{chamfer_and_recall, DEFAULT_OVERLAP_TAU, overlap_definition, pairwise_overlap, registration_recall, rmse, EvalReport};
use fidreg::registration::{detect_all, register, RegistrationError};
use fidreg::simulator::{self, presets, SceneFile};
use fidreg::Pose;

use config::Settings;
use records::*;

#[derive(Parser, Debug)]
#[command(name = "fidreg", version, about = "Fiducial markers in LiDAR point clouds")]
struct Cli {
    /// Settings file with `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the random seed of simulation commands.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Treat scans that cannot be connected to the anchor as an error.
    #[arg(long, global = true)]
    strict: bool,
    /// Write intermediate intensity images (PGM) into this directory.
    #[arg(long, global = true)]
    dump_images: Option<PathBuf>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    /// Box with one marker per side, five sensors around it.
    Box,
    /// Wall with three markers, two nearby sensors.
    Wall,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample synthetic scans (and optionally a dense map) from a scene.
    Simulate {
        /// Scene file (JSON with `scene`, `sensor`, `viewpoints`).
        #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
        scene: Option<PathBuf>,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        #[arg(long)]
        out: PathBuf,
        /// Also write `map.ply`, a grid sampling of the scene at this spacing.
        #[arg(long)]
        map_spacing: Option<f64>,
        /// Position noise of the map, meters.
        #[arg(long, default_value_t = 0.0)]
        map_sigma: f64,
        #[command(flatten)]
        family: FamilyArgs,
    },
    /// Detect markers in individual scans.
    Detect {
        /// PLY files or directories of PLY files.
        #[arg(long, num_args = 1.., required = true)]
        scans: Vec<PathBuf>,
        #[arg(long)]
        marker_size: f64,
        #[command(flatten)]
        family: FamilyArgs,
        /// Detections as JSON lines.
        #[arg(long)]
        out: PathBuf,
    },
    /// Locate markers in a dense map through intermediate planes.
    LocateMap {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        marker_size: f64,
        #[command(flatten)]
        family: FamilyArgs,
        #[arg(long)]
        out: PathBuf,
        /// Write every candidate box (and its image) into this directory.
        #[arg(long)]
        dump_candidates: Option<PathBuf>,
    },
    /// Register scans through shared markers.
    Register {
        #[arg(long, num_args = 1.., required = true)]
        scans: Vec<PathBuf>,
        #[arg(long)]
        marker_size: f64,
        #[command(flatten)]
        family: FamilyArgs,
        /// Scan poses in the anchor frame.
        #[arg(long)]
        out: PathBuf,
        /// All scans merged in the anchor frame.
        #[arg(long)]
        merged: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Detections as JSON lines.
        #[arg(long)]
        detections: Option<PathBuf>,
        #[arg(long)]
        anchor: Option<usize>,
        /// Start every scan at identity instead of chaining shortest paths.
        #[arg(long)]
        no_first_graph: bool,
        /// Skip the factor-graph refinement.
        #[arg(long)]
        no_second_graph: bool,
    },
    /// Compare estimated poses against simulator ground truth.
    Eval {
        /// One or more pose files; each counts as a registration run.
        #[arg(long, num_args = 1.., required = true)]
        poses: Vec<PathBuf>,
        /// `ground_truth.json` from `simulate`.
        #[arg(long)]
        truth: PathBuf,
        /// Scans for cloud metrics (default: the files listed in the ground truth).
        #[arg(long, num_args = 1..)]
        scans: Vec<PathBuf>,
        #[arg(long)]
        anchor: Option<usize>,
        /// Divide each Chamfer term by its set size.
        #[arg(long)]
        mean: bool,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Directory for SVG plots.
        #[arg(long)]
        plots: Option<PathBuf>,
    },
}

#[derive(clap::Args, Debug)]
struct FamilyArgs {
    /// Tag family file, one bit string per line (default: built-in 4×4).
    #[arg(long)]
    family: Option<PathBuf>,
    /// Border width of the family, in cells.
    #[arg(long, default_value_t = 1)]
    family_border: usize,
}

impl FamilyArgs {
    fn load(&self) -> Result<TagFamily, CliError> {
        match &self.family {
            None => Ok(TagFamily::builtin()),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| invalid(format!("{}: {e}", p.display())))?;
                TagFamily::parse(&text, self.family_border).map_err(|e| invalid(format!("{}: {e}", p.display())))
            }
        }
    }
}

#[derive(Debug)]
enum CliError {
    /// Bad arguments, settings or input files (exit code 2).
    Invalid(String),
    /// The pipeline ran and failed (exit code 3).
    Pipeline(String),
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Invalid(msg.into())
}

fn failed(msg: impl Into<String>) -> CliError {
    CliError::Pipeline(msg.into())
}

impl From<io::IoError> for CliError {
    fn from(e: io::IoError) -> Self {
        invalid(e.to_string())
    }
}

impl From<RegistrationError> for CliError {
    fn from(e: RegistrationError) -> Self {
        match e {
            RegistrationError::BadAnchor(..) | RegistrationError::TooFewScans(_) | RegistrationError::BadCovariance => {
                invalid(e.to_string())
            }
            _ => failed(e.to_string()),
        }
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| failed(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| failed(format!("{}: {e}", path.display())))
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serializes") + "\n"
}

/// Files named on the command line, with directories expanded in name
/// order to their `scan_*.ply` entries, or to every `.ply` entry when there
/// are none (a simulation directory also holds `map.ply`).
fn collect_scans(paths: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| invalid(format!("{}: {e}", p.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|e| e.extension().is_some_and(|x| x.eq_ignore_ascii_case("ply")))
                .collect();
            entries.sort();
            let is_scan = |e: &PathBuf| e.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("scan_"));
            if entries.iter().any(is_scan) {
                entries.retain(is_scan);
            }
            out.extend(entries);
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        return Err(invalid("no scans given"));
    }
    Ok(out)
}

fn load_clouds(paths: &[PathBuf]) -> Result<Vec<PointCloud>, CliError> {
    paths.iter().map(|p| io::read_ply(p).map_err(CliError::from)).collect()
}

fn check_side(side: f64) -> Result<(), CliError> {
    if side.is_finite() && side > 0.0 {
        Ok(())
    } else {
        Err(invalid("--marker-size must be positive"))
    }
}

fn dump_scan_images(dir: &Path, clouds: &[PointCloud], s: &Settings) -> Result<(), CliError> {
    for (i, c) in clouds.iter().enumerate() {
        let cfg = ProjectionConfig::fit(c, s.register.detect.theta_a, s.register.detect.theta_i)
            .map_err(|e| failed(format!("scan {i}: {e}")))?;
        let img = project(c, &cfg).map_err(|e| failed(format!("scan {i}: {e}")))?;
        write(&dir.join(format!("scan_{i:03}.pgm")), img.to_pgm())?;
    }
    Ok(())
}

fn preset_scene(p: Preset, seed: u64) -> SceneFile {
    match p {
        Preset::Box => SceneFile {
            scene: presets::box_scene(0.5, true),
            sensor: presets::mechanical_sensor(seed),
            viewpoints: presets::ring_viewpoints(&[45.0, 135.0, 225.0, 315.0, 0.0], 3.5, 0.8, Vector3::new(0.0, 0.0, 0.8)),
        },
        Preset::Wall => SceneFile {
            scene: presets::wall_scene(4.0, &[4, 17, 31], 0.5),
            sensor: presets::mechanical_sensor(seed),
            viewpoints: vec![
                simulator::look_at(Vector3::zeros(), Vector3::new(4.0, 0.0, 0.0)),
                simulator::look_at(Vector3::new(0.3, 0.8, 0.1), Vector3::new(4.0, 0.2, 0.0)),
            ],
        },
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(invalid("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| failed(e.to_string()))?;
    }
    let settings = |side: f64| -> Result<Settings, CliError> {
        let mut s = Settings::new(side);
        if let Some(p) = &cli.config {
            s.load(p).map_err(invalid)?;
        }
        s.register.strict |= cli.strict;
        Ok(s)
    };

    match &cli.command {
        Command::Simulate { scene, preset, out, map_spacing, map_sigma, family } => {
            let s = settings(0.5)?;
            let family = family.load()?;
            let mut file = match (scene, preset) {
                (Some(p), _) => {
                    let text = fs::read_to_string(p).map_err(|e| invalid(format!("{}: {e}", p.display())))?;
                    serde_json::from_str::<SceneFile>(&text).map_err(|e| invalid(format!("{}: {e}", p.display())))?
                }
                (None, Some(p)) => preset_scene(*p, 0),
                (None, None) => return Err(invalid("give --scene or --preset")),
            };
            if let Some(seed) = cli.seed {
                file.sensor.seed = seed;
            }
            file.scene.validate(&family).map_err(|e| invalid(e.to_string()))?;
            file.sensor.validate().map_err(|e| invalid(e.to_string()))?;
            if file.viewpoints.is_empty() {
                return Err(invalid("scene has no viewpoints"));
            }
            let data = simulator::make_dataset(&file.scene, &family, &file.viewpoints, &file.sensor);
            let mut names = Vec::new();
            for (i, scan) in data.scans.iter().enumerate() {
                let name = format!("scan_{i:03}.ply");
                write(&out.join(&name), io::ply_string(scan))?;
                info!("{name}: {} points", scan.len());
                names.push(name);
            }
            let map = match map_spacing {
                Some(s) if !(*s > 0.0) => return Err(invalid("--map-spacing must be positive")),
                Some(s) => {
                    let m = simulator::sample_map(&file.scene, &family, *s, *map_sigma, 0.0, file.sensor.seed);
                    write(&out.join("map.ply"), io::ply_string(&m))?;
                    Some("map.ply".to_string())
                }
                None => None,
            };
            let truth = GroundTruth {
                scans: names,
                poses: data.poses.clone(),
                markers: data.markers.clone(),
                overlaps: data.overlaps.clone(),
                overlap_definition: overlap_definition(DEFAULT_OVERLAP_TAU),
                map,
            };
            write(&out.join("ground_truth.json"), to_json(&truth))?;
            write(&out.join("scene.json"), to_json(&file))?;
            if let Some(dir) = &cli.dump_images {
                dump_scan_images(dir, &data.scans, &s)?;
            }
            println!("wrote {} scans to {}", data.scans.len(), out.display());
        }
        Command::Detect { scans, marker_size, family, out } => {
            check_side(*marker_size)?;
            let s = settings(*marker_size)?;
            let family = family.load()?;
            let paths = collect_scans(scans)?;
            let clouds = load_clouds(&paths)?;
            let obs = detect_all(&clouds, &family, &s.register)?;
            write(out, jsonl(obs.iter().flatten().map(DetectionRecord::from)))?;
            if let Some(dir) = &cli.dump_images {
                dump_scan_images(dir, &clouds, &s)?;
            }
            for (p, o) in paths.iter().zip(&obs) {
                println!("{}: {:?}", p.display(), o.iter().map(|o| o.id).collect::<Vec<_>>());
            }
        }
        Command::LocateMap { map, marker_size, family, out, dump_candidates } => {
            check_side(*marker_size)?;
            let mut s = settings(*marker_size)?;
            let family = family.load()?;
            let cloud = io::read_ply(map)?;
            s.locate.keep_images = dump_candidates.is_some() || cli.dump_images.is_some();
            let spec = MarkerSpec::new(*marker_size, 0.0);
            let res = locate_markers_in_map(&cloud, &spec, &family, &s.locate);
            write(out, jsonl(res.observations.iter().map(DetectionRecord::from)))?;
            let image_dir = dump_candidates.as_ref().or(cli.dump_images.as_ref());
            let mut recs = Vec::new();
            for (k, c) in res.candidates.iter().enumerate() {
                let image = match (&c.image, image_dir) {
                    (Some(img), Some(dir)) => {
                        let name = format!("candidate_{k:03}.pgm");
                        write(&dir.join(&name), img.to_pgm())?;
                        Some(name)
                    }
                    _ => None,
                };
                let ctr = c.obb.center();
                recs.push(CandidateRecord {
                    index: k,
                    center: [ctr.x, ctr.y, ctr.z],
                    extents: c.obb.extents,
                    box_pose: c.obb.pose,
                    buffered_points: c.buffered_points,
                    ids: c.ids.clone(),
                    flipped: c.flipped,
                    image,
                });
            }
            if let Some(dir) = dump_candidates {
                write(&dir.join("candidates.json"), to_json(&recs))?;
            }
            println!(
                "{} clusters, {} candidates, markers {:?}",
                res.clusters,
                res.candidates.len(),
                res.observations.iter().map(|o| o.id).collect::<Vec<_>>()
            );
        }
        Command::Register {
            scans,
            marker_size,
            family,
            out,
            merged,
            report,
            detections,
            anchor,
            no_first_graph,
            no_second_graph,
        } => {
            check_side(*marker_size)?;
            let mut s = settings(*marker_size)?;
            if let Some(a) = anchor {
                s.register.anchor = *a;
            }
            s.register.first_graph &= !no_first_graph;
            s.register.second_graph &= !no_second_graph;
            let family = family.load()?;
            let paths = collect_scans(scans)?;
            if s.register.anchor >= paths.len() {
                return Err(invalid(format!("anchor {} is out of range for {} scans", s.register.anchor, paths.len())));
            }
            let clouds = load_clouds(&paths)?;
            if let Some(dir) = &cli.dump_images {
                dump_scan_images(dir, &clouds, &s)?;
            }
            let (res, obs) = register(&clouds, &family, &s.register)?;
            write(out, io::poses_string(&res.scan_poses))?;
            if let Some(p) = detections {
                write(p, jsonl(obs.iter().flatten().map(DetectionRecord::from)))?;
            }
            if let Some(p) = merged {
                write(p, io::ply_string(&res.merged_cloud(&clouds)))?;
            }
            let files: Vec<String> = paths.iter().map(|p| p.display().to_string()).collect();
            if let Some(p) = report {
                write(p, to_json(&RegisterReport::new(&res, &files)))?;
            }
            println!(
                "registered {}/{} scans, cost {:.6e} -> {:.6e} ({} iterations)",
                res.scan_poses.iter().flatten().count(),
                res.scan_poses.len(),
                res.initial_cost,
                res.final_cost,
                res.iterations
            );
            if !res.unreachable.is_empty() {
                println!("unreachable scans: {:?}", res.unreachable);
            }
        }
        Command::Eval { poses, truth, scans, anchor, mean, report, plots } => {
            let s = settings(0.5)?;
            let text = fs::read_to_string(truth).map_err(|e| invalid(format!("{}: {e}", truth.display())))?;
            let gt: GroundTruth = serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", truth.display())))?;
            let anchor = anchor.unwrap_or(s.register.anchor);
            if anchor >= gt.poses.len() {
                return Err(invalid(format!("anchor {anchor} is out of range for {} poses", gt.poses.len())));
            }
            let rel: Vec<Pose> = gt.poses.iter().map(|p| gt.poses[anchor].inverse() * *p).collect();
            let estimates: Vec<Vec<Option<Pose>>> = poses.iter().map(|p| io::read_poses(p)).collect::<Result<_, _>>()?;
            let mut runs = Vec::new();
            for (path, est) in poses.iter().zip(&estimates) {
                let (mut e, mut t, mut missing) = (Vec::new(), Vec::new(), Vec::new());
                for (i, r) in rel.iter().enumerate() {
                    match est.get(i).copied().flatten() {
                        Some(p) => {
                            e.push(p);
                            t.push(*r);
                        }
                        None => missing.push(i),
                    }
                }
                let (rmse_t, rmse_r) = rmse(&e, &t).map_err(|_| failed(format!("{}: no scan poses", path.display())))?;
                runs.push(RunError { poses: path.display().to_string(), rmse_t, rmse_r, missing });
            }
            let pairs: Vec<(f64, f64)> = runs.iter().map(|r| (r.rmse_t, r.rmse_r)).collect();
            let rr = registration_recall(&pairs, s.rr_thr_t, s.rr_thr_r).map_err(|e| failed(e.to_string()))?;
            let first = &estimates[0];
            let translation_errors: Vec<Option<f64>> = rel
                .iter()
                .enumerate()
                .map(|(i, r)| first.get(i).copied().flatten().map(|p| (p.translation - r.translation).norm()))
                .collect();

            let scan_paths: Vec<PathBuf> = if scans.is_empty() {
                let base = truth.parent().unwrap_or(Path::new("."));
                gt.scans.iter().map(|n| base.join(n)).filter(|p| p.exists()).collect()
            } else {
                collect_scans(scans)?
            };
            let mut ev = EvalReport {
                rmse_t: runs[0].rmse_t,
                rmse_r: runs[0].rmse_r,
                registration_recall: Some(rr),
                overlap_definition: overlap_definition(s.overlap_tau),
                ..Default::default()
            };
            if scan_paths.len() == rel.len() {
                let clouds = load_clouds(&scan_paths)?;
                let (mut est_merge, mut true_merge) = (PointCloud::default(), PointCloud::default());
                for (i, c) in clouds.iter().enumerate() {
                    if let Some(p) = first.get(i).copied().flatten() {
                        est_merge.extend(&c.transformed(&p));
                        true_merge.extend(&c.transformed(&rel[i]));
                    }
                }
                if let Ok((cd, recall)) = chamfer_and_recall(&est_merge, &true_merge, s.recall_thr, *mean) {
                    ev.chamfer = Some(cd);
                    ev.recall = Some(recall);
                }
                let aligned: Vec<PointCloud> = clouds.iter().zip(&rel).map(|(c, p)| c.transformed(p)).collect();
                ev.overlap = pairwise_overlap(&aligned, s.overlap_tau);
            } else if !scans.is_empty() {
                return Err(invalid(format!("{} scans given for {} ground-truth poses", scan_paths.len(), rel.len())));
            }
            let outp = EvalOutput { report: ev, anchor, runs, translation_errors };
            print_eval(&outp);
            if let Some(p) = report {
                write(p, to_json(&outp))?;
            }
            if let Some(dir) = plots {
                let t: Vec<[f64; 2]> = rel.iter().map(|p| [p.translation.x, p.translation.y]).collect();
                let e: Vec<Option<[f64; 2]>> =
                    (0..rel.len()).map(|i| first.get(i).copied().flatten().map(|p| [p.translation.x, p.translation.y])).collect();
                write(&dir.join("trajectory.svg"), plots::trajectory_svg(&t, &e))?;
                let errs: Vec<f64> = outp.translation_errors.iter().flatten().copied().collect();
                write(&dir.join("error_histogram.svg"), plots::histogram_svg(&errs, 10, "translation error per scan", "m"))?;
            }
        }
    }
    Ok(())
}

fn print_eval(o: &EvalOutput) {
    let r = &o.report;
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.6e}"));
    println!("{:<24} {:.6e}", "RMSE_T [m]", r.rmse_t);
    println!("{:<24} {:.6e}", "RMSE_R [rad]", r.rmse_r);
    println!("{:<24} {}", "Chamfer", opt(r.chamfer));
    println!("{:<24} {}", "Recall", opt(r.recall));
    println!("{:<24} {}", "Registration recall", opt(r.registration_recall));
    for p in &r.overlap {
        println!("{:<24} {:.4}", format!("overlap {}-{}", p.a, p.b), p.rate);
    }
    for run in o.runs.iter().filter(|r| !r.missing.is_empty()) {
        println!("{}: missing scans {:?}", run.poses, run.missing);
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Invalid(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Pipeline(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
