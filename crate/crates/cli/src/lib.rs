//! `evvel` command implementations.
//!
//! Every command is a plain function returning a typed summary so the same
//! code path serves the binary and the test suites. Exit codes: 0 success,
//! 1 runtime failure, 2 bad config or input, 3 near-parallel view planes,
//! 4 insufficient data.

pub mod manifest;
pub mod svg;

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use evvel_core::geometry::{Line3D, Point3};
use evvel_core::nalgebra::Vector3;
use evvel_core::ingest::{parse_events, parse_observations, parse_rig, write_observations, EventStream, RigConfig};
use evvel_core::leading_edge::{
    build_radial_histogram, classified_csv, EdgeError, EdgeOptions, PolarityFilter, DEFAULT_HIST_DR_PX,
    DEFAULT_HIST_DT_US, DEFAULT_LATERAL_GATE_PX, DEFAULT_OUTLIER_GATE_PX,
};
use evvel_core::motion_fit::{DecayFit, FitError};
use evvel_core::pipeline::{run_pipeline, PipelineOptions, PipelineOutput};
use evvel_core::simulator::{render_events, scene_artifacts, RenderedCamera, SimScene};
use evvel_core::theory::{comparison_table, compare_measurements, muzzle_energy, predict_muzzle_velocity, theory_decay_curve, Deviation, GasGunConfig};
use evvel_core::trajectory::TrajectoryError;
use evvel_core::association::AssociationError;
use evvel_core::Error as CoreError;

use crate::manifest::RunManifest;
use crate::svg::Series;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NEAR_PARALLEL: i32 = 3;
pub const EXIT_INSUFFICIENT_DATA: i32 = 4;

pub const SCENE_FILE: &str = "scene.json";
pub const OBSERVATIONS_FILE: &str = "observations.csv";
pub const FIT_REPORT_FILE: &str = "fit_report.txt";
pub const FIT_CURVE_FILE: &str = "fit_curve.csv";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const BASELINE_FILE: &str = "baseline.txt";

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub error: anyhow::Error,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl CliError {
    fn config(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_CONFIG,
            error: error.into(),
        }
    }

    fn failure(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_FAILURE,
            error: error.into(),
        }
    }
}

fn core_exit_code(e: &CoreError) -> i32 {
    match e {
        CoreError::Trajectory(TrajectoryError::NearParallelPlanes(..)) => EXIT_NEAR_PARALLEL,
        CoreError::Trajectory(TrajectoryError::InsufficientViews(_))
        | CoreError::Fit(FitError::InsufficientData(_))
        | CoreError::Edge(EdgeError::EmptyStream)
        | CoreError::Association(AssociationError::EmptyInput) => EXIT_INSUFFICIENT_DATA,
        CoreError::Ingest(_) => EXIT_CONFIG,
        _ => EXIT_FAILURE,
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let code = core_exit_code(&e);
        let error = match &e {
            CoreError::Trajectory(TrajectoryError::InsufficientViews(_)) => anyhow!(
                "{e}; pass --line to associate a single view against a known trajectory"
            ),
            _ => anyhow!(e),
        };
        Self { code, error }
    }
}

#[derive(Debug, Parser)]
#[command(name = "evvel", version, about = "Fragment velocity from multi-view event-camera streams")]
pub struct Cli {
    /// Worker threads for parallel stages. Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a labelled synthetic scene to event CSVs.
    Simulate(SimulateArgs),
    /// Leading edge, trajectory, association and decay fit.
    Pipeline(PipelineArgs),
    /// Predict muzzle velocity from gas-gun parameters.
    Theory(TheoryArgs),
    /// Emit plot data (CSV, optional SVG) from stage outputs.
    PlotData(PlotArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Scene config JSON; the built-in default scene when omitted.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the scene seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolarityArg {
    Both,
    Pos,
    Neg,
}

impl From<PolarityArg> for PolarityFilter {
    fn from(p: PolarityArg) -> Self {
        match p {
            PolarityArg::Both => PolarityFilter::Both,
            PolarityArg::Pos => PolarityFilter::Positive,
            PolarityArg::Neg => PolarityFilter::Negative,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub rig: PathBuf,
    /// Event CSVs as `CAM=PATH`, or plain paths taken in rig camera order.
    #[arg(long, num_args = 1.., required = true)]
    pub events: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// Reception threshold in pixels; overrides the rig.
    #[arg(long)]
    pub omega_px: Option<f64>,
    /// Search grid step in metres; overrides the rig.
    #[arg(long)]
    pub step_m: Option<f64>,
    #[arg(long, value_enum, default_value_t = PolarityArg::Both)]
    pub polarity: PolarityArg,
    /// Radial trend gate in pixels; 0 disables it.
    #[arg(long, default_value_t = DEFAULT_OUTLIER_GATE_PX)]
    pub outlier_gate_px: f64,
    /// Bearing gate in pixels; 0 disables it.
    #[arg(long, default_value_t = DEFAULT_LATERAL_GATE_PX)]
    pub lateral_gate_px: f64,
    /// Recorded in the manifest. The pipeline itself draws no random numbers.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Known trajectory `ox,oy,oz,dx,dy,dz`; skips triangulation.
    #[arg(long)]
    pub line: Option<String>,
    /// Also run the corresponding-point intersection baseline.
    #[arg(long)]
    pub baseline_intersection: bool,
}

#[derive(Debug, Clone, Args)]
pub struct TheoryArgs {
    /// Gas-gun config JSON.
    #[arg(long)]
    pub config: PathBuf,
    /// Measured muzzle velocity to compare against, m/s.
    #[arg(long)]
    pub measured: Option<f64>,
    /// Extra reference velocities as `NAME=V`.
    #[arg(long = "reference")]
    pub references: Vec<String>,
    /// Decay coefficient for `--curve`, 1/m.
    #[arg(long, requires = "curve")]
    pub k_per_m: Option<f64>,
    /// Writes `D_m,v_mps` for 0..=1 m at 1 cm spacing.
    #[arg(long, requires = "k_per_m")]
    pub curve: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PlotArgs {
    #[command(subcommand)]
    pub kind: PlotKind,
}

#[derive(Debug, Clone, Subcommand)]
pub enum PlotKind {
    /// Radial-distance / time histogram of one view.
    Histogram {
        #[arg(long)]
        rig: PathBuf,
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        cam: u32,
        #[arg(long, default_value_t = DEFAULT_HIST_DR_PX)]
        dr_px: f64,
        #[arg(long, default_value_t = DEFAULT_HIST_DT_US)]
        dt_us: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// 3D observation scatter.
    Observations {
        #[arg(long)]
        observations: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Displacement over time with the fitted curve.
    Fit {
        #[arg(long)]
        observations: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
}

pub fn histogram_file(cam: u32) -> String {
    format!("histogram_cam{cam}.csv")
}

pub fn classified_file(cam: u32) -> String {
    format!("classified_cam{cam}.csv")
}

pub fn line2d_file(cam: u32) -> String {
    format!("line2d_cam{cam}.csv")
}

fn ms_since(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

fn read_config(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(CliError::config)
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(CliError::failure)
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct SimulateSummary {
    pub scene: SimScene,
    pub rendered: Vec<RenderedCamera>,
    pub files: Vec<PathBuf>,
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<SimulateSummary, CliError> {
    let mut manifest = RunManifest::new("simulate");
    let start = Instant::now();
    let mut scene = match &args.scene {
        Some(path) => {
            read_config(path)?;
            let text = manifest.read_input(path).map_err(CliError::config)?;
            manifest.config_paths.push(path.display().to_string());
            SimScene::from_json(&text).map_err(|e| CliError::config(anyhow!("{}: {e}", path.display())))?
        }
        None => SimScene::default_scene(),
    };
    if let Some(seed) = args.seed {
        scene.seed = seed;
    }
    manifest.seed = Some(scene.seed);
    manifest.stage("load", ms_since(start));

    let start = Instant::now();
    let rendered = render_events(&scene);
    manifest.stage("render", ms_since(start));

    let start = Instant::now();
    create_dir(&args.out)?;
    let mut files = Vec::new();
    for (name, body) in scene_artifacts(&scene, &rendered) {
        manifest.write_output(&args.out, &name, &body).map_err(CliError::failure)?;
        files.push(args.out.join(name));
    }
    manifest
        .write_output(&args.out, SCENE_FILE, &scene.to_json())
        .map_err(CliError::failure)?;
    files.push(args.out.join(SCENE_FILE));
    manifest.stage("write", ms_since(start));
    manifest.save(&args.out).map_err(CliError::failure)?;
    Ok(SimulateSummary { scene, rendered, files })
}

// ---------------------------------------------------------------------------
// pipeline
// ---------------------------------------------------------------------------

/// Parses `ox,oy,oz,dx,dy,dz`.
pub fn parse_line_arg(s: &str) -> Result<Line3D, CliError> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::config(anyhow!("--line expects six numbers `ox,oy,oz,dx,dy,dz`, got `{s}`")))?;
    if v.len() != 6 {
        return Err(CliError::config(anyhow!("--line expects six numbers, got {}", v.len())));
    }
    Line3D::new(Point3::new(v[0], v[1], v[2]), Vector3::new(v[3], v[4], v[5]))
        .map_err(|e| CliError::config(anyhow!("--line: {e}")))
}

/// Resolves `--events` values to `(camera id, path)` pairs.
pub fn resolve_event_args(values: &[String], rig: &RigConfig) -> Result<Vec<(u32, PathBuf)>, CliError> {
    let ids = rig.camera_ids();
    let mut out = Vec::with_capacity(values.len());
    for (i, v) in values.iter().enumerate() {
        let pair = v
            .split_once('=')
            .and_then(|(id, path)| id.trim().parse::<u32>().ok().map(|id| (id, PathBuf::from(path))));
        let (id, path) = match pair {
            Some(p) => p,
            None => {
                let id = *ids.get(i).ok_or_else(|| {
                    CliError::config(anyhow!("event file `{v}` has no camera: the rig has {} cameras", ids.len()))
                })?;
                (id, PathBuf::from(v))
            }
        };
        if rig.camera(id).is_none() {
            return Err(CliError::config(anyhow!("camera {id} of `{v}` is not in the rig")));
        }
        if out.iter().any(|(c, _)| *c == id) {
            return Err(CliError::config(anyhow!("camera {id} given twice")));
        }
        out.push((id, path));
    }
    Ok(out)
}

fn gate(v: f64) -> Option<f64> {
    (v > 0.0).then_some(v)
}

#[derive(Debug)]
pub struct PipelineSummary {
    pub output: PipelineOutput,
    pub streams: Vec<EventStream>,
}

pub fn cmd_pipeline(args: &PipelineArgs) -> Result<PipelineSummary, CliError> {
    let mut manifest = RunManifest::new("pipeline");
    manifest.seed = args.seed;
    let start = Instant::now();
    read_config(&args.rig)?;
    let rig_text = manifest.read_input(&args.rig).map_err(CliError::config)?;
    manifest.config_paths.push(args.rig.display().to_string());
    let rig = parse_rig(&rig_text).map_err(|e| CliError::config(anyhow!("{}: {e}", args.rig.display())))?;
    let mut streams = Vec::new();
    for (cam, path) in resolve_event_args(&args.events, &rig)? {
        read_config(&path)?;
        let text = manifest.read_input(&path).map_err(CliError::config)?;
        let model = rig.camera(cam).expect("resolved against rig");
        let stream = parse_events(&text, cam, model.intrinsics().width(), model.intrinsics().height())
            .map_err(|e| CliError::config(anyhow!("{}: {e}", path.display())))?;
        streams.push(stream);
    }
    let line = args.line.as_deref().map(parse_line_arg).transpose()?;
    if let Some(w) = args.omega_px {
        if !(w > 0.0 && w.is_finite()) {
            return Err(CliError::config(anyhow!("--omega-px must be > 0, got {w}")));
        }
    }
    if let Some(s) = args.step_m {
        if !(s > 0.0 && s.is_finite()) {
            return Err(CliError::config(anyhow!("--step-m must be > 0, got {s}")));
        }
    }
    manifest.stage("load", ms_since(start));

    let opts = PipelineOptions {
        edge: EdgeOptions {
            polarity: args.polarity.into(),
            outlier_gate_px: gate(args.outlier_gate_px),
            lateral_gate_px: gate(args.lateral_gate_px),
        },
        omega_px: args.omega_px,
        step_m: args.step_m,
        line,
        run_baseline: args.baseline_intersection,
        ..Default::default()
    };
    let output = run_pipeline(&rig, &streams, &opts)?;
    for (name, ms) in &output.stage_ms {
        manifest.stage(name, *ms);
    }

    let start = Instant::now();
    create_dir(&args.out)?;
    let out = &args.out;
    let mut write = |name: &str, body: &str| manifest.write_output(out, name, body).map_err(CliError::failure);
    write(OBSERVATIONS_FILE, &write_observations(&output.observations))?;
    write(FIT_REPORT_FILE, &output.fit.report())?;
    write(FIT_CURVE_FILE, &output.fit.curve_csv(&output.observations))?;
    let l = &output.line;
    write(
        TRAJECTORY_FILE,
        &format!(
            "ox,oy,oz,dx,dy,dz\n{},{},{},{},{},{}\n",
            l.origin.x, l.origin.y, l.origin.z, l.dir.x, l.dir.y, l.dir.z
        ),
    )?;
    for (stream, x) in streams.iter().zip(&output.extractions) {
        let hist = build_radial_histogram(&stream.events, x.edge.origin, DEFAULT_HIST_DR_PX, DEFAULT_HIST_DT_US)
            .map_err(|e| CliError::from(CoreError::from(e)))?;
        write(&histogram_file(stream.cam), &hist.to_csv())?;
        write(&classified_file(stream.cam), &classified_csv(stream, &x.kept))?;
    }
    for (cam, fit) in &output.fits {
        write(&line2d_file(*cam), &fit.to_csv())?;
    }
    if let Some(b) = &output.baseline {
        write(
            BASELINE_FILE,
            &format!(
                "observations={}\nbaseline_windows={}\nbaseline_points={}\n",
                output.observations.len(),
                b.windows_compared,
                b.count()
            ),
        )?;
    }
    manifest.stage("write", ms_since(start));
    manifest.save(&args.out).map_err(CliError::failure)?;
    Ok(PipelineSummary { output, streams })
}

// ---------------------------------------------------------------------------
// theory
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct TheoryReport {
    pub energy_j: f64,
    pub v0_mps: f64,
    /// Measured velocity against the prediction and each named reference.
    pub deviations: Vec<(String, f64, Deviation)>,
    pub text: String,
}

fn parse_reference(s: &str) -> Result<(String, f64), CliError> {
    let (name, v) = s
        .split_once('=')
        .ok_or_else(|| CliError::config(anyhow!("--reference expects NAME=V, got `{s}`")))?;
    let v = v
        .trim()
        .parse::<f64>()
        .map_err(|_| CliError::config(anyhow!("--reference value `{v}` is not a number")))?;
    Ok((name.trim().to_string(), v))
}

pub fn cmd_theory(args: &TheoryArgs) -> Result<TheoryReport, CliError> {
    let text = read_config(&args.config)?;
    let cfg = GasGunConfig::from_json(&text).map_err(|e| CliError::config(anyhow!("{}: {e}", args.config.display())))?;
    let energy_j = muzzle_energy(&cfg).map_err(CliError::config)?;
    let v0_mps = predict_muzzle_velocity(&cfg).map_err(CliError::config)?;
    let mut out = format!("muzzle_energy_J={energy_j:.4}\npredicted_v0_mps={v0_mps:.4}\n");
    let mut deviations = Vec::new();
    if let Some(measured) = args.measured {
        let mut refs = vec![("gas-gun theory".to_string(), v0_mps)];
        for r in &args.references {
            refs.push(parse_reference(r)?);
        }
        for (name, v) in &refs {
            let d = compare_measurements(measured, *v).map_err(CliError::config)?;
            deviations.push((name.clone(), *v, d));
        }
        let named: Vec<(&str, f64)> = refs.iter().map(|(n, v)| (n.as_str(), *v)).collect();
        out.push('\n');
        out.push_str(&comparison_table(measured, &named).map_err(CliError::config)?);
    } else if !args.references.is_empty() {
        return Err(CliError::config(anyhow!("--reference needs --measured")));
    }
    if let (Some(k), Some(path)) = (args.k_per_m, &args.curve) {
        let grid: Vec<f64> = (0..=100).map(|i| i as f64 * 0.01).collect();
        let mut csv = String::from("D_m,v_mps\n");
        for (d, v) in theory_decay_curve(v0_mps, k, &grid) {
            csv.push_str(&format!("{d},{v}\n"));
        }
        std::fs::write(path, csv)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(CliError::failure)?;
    }
    Ok(TheoryReport {
        energy_j,
        v0_mps,
        deviations,
        text: out,
    })
}

// ---------------------------------------------------------------------------
// plot-data
// ---------------------------------------------------------------------------

fn write_plot(out: &Path, csv: &str, svg: Option<(&Path, String)>) -> Result<(), CliError> {
    std::fs::write(out, csv)
        .with_context(|| format!("writing {}", out.display()))
        .map_err(CliError::failure)?;
    if let Some((path, body)) = svg {
        std::fs::write(path, body)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(CliError::failure)?;
    }
    Ok(())
}

pub fn cmd_plot_data(kind: &PlotKind) -> Result<(), CliError> {
    match kind {
        PlotKind::Histogram {
            rig,
            events,
            cam,
            dr_px,
            dt_us,
            out,
            svg,
        } => {
            let rig = parse_rig(&read_config(rig)?).map_err(CliError::config)?;
            let model = rig
                .camera(*cam)
                .ok_or_else(|| CliError::config(anyhow!("camera {cam} is not in the rig")))?;
            let stream = parse_events(&read_config(events)?, *cam, model.intrinsics().width(), model.intrinsics().height())
                .map_err(CliError::config)?;
            let origin = rig.scatter_origin(*cam).expect("rig resolves every scatter origin");
            let hist = build_radial_histogram(&stream.events, origin, *dr_px, *dt_us).map_err(CliError::config)?;
            let chart = svg.as_deref().map(|p| {
                let pts: Vec<(f64, f64)> = hist
                    .bins()
                    .map(|((r, t), _)| ((t as f64 + 0.5) * dt_us, (r as f64 + 0.5) * dr_px))
                    .collect();
                (p, svg::chart("radial distance over time", "t (us)", "r (px)", &[Series::Points { data: &pts, color: "#1f4e9c" }]))
            });
            write_plot(out, &hist.to_csv(), chart)
        }
        PlotKind::Observations { observations, out, svg } => {
            let obs = parse_observations(&read_config(observations)?).map_err(CliError::config)?;
            let chart = svg.as_deref().map(|p| {
                let pts: Vec<(f64, f64)> = obs.iter().map(|o| (o.point.x, o.point.y)).collect();
                (p, svg::chart("observation points", "X (m)", "Y (m)", &[Series::Points { data: &pts, color: "#1f4e9c" }]))
            });
            write_plot(out, &write_observations(&obs), chart)
        }
        PlotKind::Fit {
            observations,
            report,
            out,
            svg,
        } => {
            let obs = parse_observations(&read_config(observations)?).map_err(CliError::config)?;
            let fit = DecayFit::parse_report(&read_config(report)?).map_err(CliError::config)?;
            let csv = fit.curve_csv(&obs);
            let chart = svg.as_deref().map(|p| {
                let mut rows: Vec<(f64, f64, f64)> = Vec::new();
                for line in csv.lines().skip(1) {
                    let f: Vec<f64> = line.split(',').filter_map(|v| v.parse().ok()).collect();
                    if f.len() == 3 {
                        rows.push((f[0], f[1], f[2]));
                    }
                }
                let measured: Vec<(f64, f64)> = rows.iter().map(|r| (r.0, r.1)).collect();
                let fitted: Vec<(f64, f64)> = rows.iter().map(|r| (r.0, r.2)).collect();
                (
                    p,
                    svg::chart(
                        "displacement over time",
                        "t (us)",
                        "D (m)",
                        &[
                            Series::Points { data: &measured, color: "#1f4e9c" },
                            Series::Line { data: &fitted, color: "#c0392b" },
                        ],
                    ),
                )
            });
            write_plot(out, &csv, chart)
        }
    }
}

// ---------------------------------------------------------------------------
// entry point
// ---------------------------------------------------------------------------

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate(args) => {
            let s = cmd_simulate(args)?;
            for r in &s.rendered {
                println!("cam{}: {} events", r.cam, r.events.len());
            }
            println!("wrote {} files to {}", s.files.len(), args.out.display());
        }
        Command::Pipeline(args) => {
            let s = cmd_pipeline(args)?;
            let f = &s.output.fit;
            println!("v0_mps={:.4}", f.v0);
            println!("k_per_m={:.6e}", f.k);
            println!("observations={}", s.output.observations.len());
            if !f.converged {
                eprintln!("warning: decay fit did not converge after {} iterations", f.iterations);
            }
            if let Some(b) = &s.output.baseline {
                println!("baseline_points={} (windows compared: {})", b.count(), b.windows_compared);
            }
        }
        Command::Theory(args) => print!("{}", cmd_theory(args)?.text),
        Command::PlotData(args) => cmd_plot_data(&args.kind)?,
    }
    Ok(())
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli)),
            Err(e) => Err(CliError::config(anyhow!("--threads: {e}"))),
        },
        None => dispatch(&cli),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_CONFIG
            } else {
                EXIT_OK
            }
        }
    }
}
