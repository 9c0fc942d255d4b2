//! `shadowlane`: negative-shadow attack toolkit for camera-based lane
//! detection — solar geometry, sweep generation, scene composition,
//! detection, attack scoring, closed-loop simulation, defense, and reports.

mod manifest;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use manifest::RunManifest;
use shadowlane_core::attack::{
    brightness_sweep, calibrate_threshold, run_sweep, AttackOutcome, SweepRun, SweepStats,
    DEFAULT_APPROACH_STEP_M, DEFAULT_BRIGHTNESS_GRID,
};
use shadowlane_core::compositor::{compose, GroundMap};
use shadowlane_core::defense::{luminosity_filter, DefenseParams};
use shadowlane_core::detector::{Detector, DetectorParams};
use shadowlane_core::raster::{GrayImage, Rgb8Image};
use shadowlane_core::report::{fmt_num, line_chart_svg, read_csv_columns, write_csv, Series};
use shadowlane_core::scene::{standard_scenes, SceneSpec};
use shadowlane_core::sim::{
    run_scenario, success_rate_table, trajectory_csv, ScenarioSpec, DEFAULT_LENGTHS_M,
    DEFAULT_SPEEDS_MPH,
};
use shadowlane_core::solar::{sun_position, shadow_length, CivilInstant, Observer, OccluderSpec};
use shadowlane_core::sweep::{batch_csv, generate_sweep, write_config_csv, NsConfig, PurgeVariant, SweepBounds};
use shadowlane_core::{Error, Result};

/// Config precedence everywhere: CLI flag > config file > built-in default.
#[derive(Parser)]
#[command(
    name = "shadowlane",
    version,
    about = "Negative-shadow attacks on lane detection: geometry, sweeps, simulation, defense",
    after_help = "Config precedence: CLI flag > --config file > built-in default.\n\
                  Worker count falls back to the SHADOWLANE_WORKERS environment variable."
)]
struct Cli {
    /// RNG seed applied to every stochastic step.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Parallel workers (default: SHADOWLANE_WORKERS or all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solar position and occluder shadow length over a local-time window.
    Shadow(ShadowArgs),
    /// Generate the purged negative-shadow parameter sweep.
    Sweep(SweepArgs),
    /// Compose one negative-shadow config onto a synthetic scene.
    Compose(ComposeArgs),
    /// Run the lane detector on an image.
    Detect(DetectArgs),
    /// Evaluate the full sweep against the detector (mask differencing).
    Attack(AttackArgs),
    /// Closed-loop scenario simulation (single run or full grid).
    Simulate(SimulateArgs),
    /// Apply the luminosity-filter defense to a directory of images.
    Defend(DefendArgs),
    /// Render SVG/CSV reports from a results directory.
    Report(ReportArgs),
}

#[derive(Args)]
struct ShadowArgs {
    #[arg(long)]
    lat: f64,
    #[arg(long)]
    lon: f64,
    /// Date as YYYY-MM-DD.
    #[arg(long)]
    date: String,
    /// Occluder mount height, meters.
    #[arg(long, default_value_t = 10.0)]
    height: f64,
    /// Occluder panel length, meters.
    #[arg(long, default_value_t = 10.0)]
    panel_length: f64,
    /// Panel tilt from vertical, degrees.
    #[arg(long, default_value_t = 90.0)]
    tilt: f64,
    /// Window start, local HH:MM.
    #[arg(long, default_value = "08:00")]
    from: String,
    /// Window end, local HH:MM.
    #[arg(long, default_value = "09:00")]
    to: String,
    #[arg(long, default_value_t = 5)]
    step_min: u32,
    /// Local time = UTC + this many hours.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    utc_offset: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Purge-rule variant: literal | geometric.
    #[arg(long, default_value = "literal")]
    variant: String,
    /// Split configs.csv into batches of this many rows.
    #[arg(long)]
    batch_rows: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ComposeArgs {
    /// Standard scene index (0-3).
    #[arg(long, default_value_t = 0)]
    scene: usize,
    #[arg(long, default_value_t = 0.3)]
    width: f64,
    #[arg(long, default_value_t = 5.0)]
    length: f64,
    #[arg(long, default_value_t = 5.0)]
    beta: f64,
    #[arg(long, default_value_t = 0.5)]
    distance: f64,
    #[arg(long, default_value_t = 1.8)]
    brightness: f64,
    #[arg(long, default_value_t = 0.55)]
    shade_factor: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DetectArgs {
    /// Input image (PNG or PPM).
    #[arg(long)]
    image: PathBuf,
    /// External detector command; default is the reference pipeline.
    #[arg(long, num_args = 1..)]
    detector_cmd: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AttackArgs {
    /// Purge-rule variant: literal | geometric.
    #[arg(long, default_value = "literal")]
    variant: String,
    #[arg(long, default_value_t = 0.55)]
    shade_factor: f64,
    /// Also run the brightness/onset-distance experiment.
    #[arg(long)]
    onset: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Built-in scenario id (1|2|3).
    #[arg(long)]
    scenario: Option<u8>,
    /// Scenario config file (key-value text); overrides --scenario.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 35.0)]
    speed: f64,
    /// Negative-shadow stripe length, meters; 0 disables the attack.
    #[arg(long, default_value_t = 30.0)]
    length: f64,
    /// Run the full scenario x speed x length grid instead.
    #[arg(long)]
    grid: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DefendArgs {
    /// Directory of input images (PNG/PPM).
    #[arg(long, name = "in")]
    in_dir: PathBuf,
    /// Defense parameter file (key-value text).
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Report CSV path (default: <out>/defend.csv).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory containing outcome CSVs from other subcommands.
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // clap prints help/version on stdout with success status.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let workers = cli.workers.or_else(|| {
        std::env::var("SHADOWLANE_WORKERS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = workers {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
    let started = Instant::now();
    let result = match &cli.cmd {
        Cmd::Shadow(a) => cmd_shadow(a, &cli, started),
        Cmd::Sweep(a) => cmd_sweep(a, &cli, started),
        Cmd::Compose(a) => cmd_compose(a, &cli, started),
        Cmd::Detect(a) => cmd_detect(a, &cli, started),
        Cmd::Attack(a) => cmd_attack(a, &cli, workers, started),
        Cmd::Simulate(a) => cmd_simulate(a, &cli, started),
        Cmd::Defend(a) => cmd_defend(a, &cli, started),
        Cmd::Report(a) => cmd_report(a, &cli, started),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(2);
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))
}

fn parse_hhmm(s: &str) -> Result<f64> {
    let bad = || Error::InvalidConfig(format!("bad time '{s}', expected HH:MM"));
    let (h, m) = s.split_once(':').ok_or_else(bad)?;
    let h: u32 = h.parse().map_err(|_| bad())?;
    let m: u32 = m.parse().map_err(|_| bad())?;
    if h > 23 || m > 59 {
        return Err(bad());
    }
    Ok(h as f64 + m as f64 / 60.0)
}

fn parse_date(s: &str) -> Result<(i32, u32, u32)> {
    let bad = || Error::InvalidConfig(format!("bad date '{s}', expected YYYY-MM-DD"));
    let parts: Vec<&str> = s.split('-').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    Ok((
        parts[0].parse().map_err(|_| bad())?,
        parts[1].parse().map_err(|_| bad())?,
        parts[2].parse().map_err(|_| bad())?,
    ))
}

fn finish(mut m: RunManifest, dir: &Path, started: Instant) -> Result<()> {
    m.duration_s = started.elapsed().as_secs_f64();
    m.write(dir)
}

fn cmd_shadow(a: &ShadowArgs, cli: &Cli, started: Instant) -> Result<()> {
    ensure_dir(&a.out)?;
    let obs = Observer::new(a.lat, a.lon)?;
    let occ = OccluderSpec::new(a.height, a.panel_length, a.tilt)?;
    let (y, mo, d) = parse_date(&a.date)?;
    let (from, to) = (parse_hhmm(&a.from)?, parse_hhmm(&a.to)?);
    if to < from {
        return Err(Error::InvalidConfig("--to before --from".into()));
    }
    let mut rows = Vec::new();
    let mut t = from;
    while t <= to + 1e-9 {
        let instant = CivilInstant::new(y, mo, d, (t - a.utc_offset).rem_euclid(24.0))?;
        let sun = sun_position(instant, obs);
        let shadow = shadow_length(&occ, sun.altitude_deg())
            .map(|v| fmt_num((v * 1000.0).round() / 1000.0))
            .unwrap_or_default();
        rows.push(vec![
            format!("{:02}:{:02}", t as u32, ((t % 1.0) * 60.0).round() as u32),
            fmt_num((sun.azimuth_deg() * 1000.0).round() / 1000.0),
            fmt_num((sun.altitude_deg() * 1000.0).round() / 1000.0),
            shadow,
        ]);
        t += a.step_min as f64 / 60.0;
    }
    let csv = a.out.join("shadow.csv");
    write_csv(&csv, &["time_local", "azimuth_deg", "altitude_deg", "shadow_m"], &rows)?;
    println!("{} rows -> {}", rows.len(), csv.display());

    let mut m = RunManifest::new("shadow", cli.seed);
    m.param("lat", a.lat)
        .param("lon", a.lon)
        .param("date", &a.date)
        .param("height", a.height)
        .param("panel_length", a.panel_length)
        .param("tilt", a.tilt)
        .param("from", &a.from)
        .param("to", &a.to)
        .param("step_min", a.step_min)
        .param("utc_offset", a.utc_offset);
    m.outputs.push(csv.display().to_string());
    finish(m, &a.out, started)
}

fn cmd_sweep(a: &SweepArgs, cli: &Cli, started: Instant) -> Result<()> {
    ensure_dir(&a.out)?;
    let variant: PurgeVariant = a.variant.parse()?;
    let configs = generate_sweep(&SweepBounds::default(), variant);
    let mut outputs = Vec::new();
    match a.batch_rows {
        Some(rows) => {
            for p in batch_csv(&configs, rows, &a.out)? {
                outputs.push(p.display().to_string());
            }
        }
        None => {
            let path = a.out.join("configs.csv");
            write_config_csv(&configs, &path)?;
            outputs.push(path.display().to_string());
        }
    }
    println!("{} configs ({variant}) -> {}", configs.len(), a.out.display());

    let mut m = RunManifest::new("sweep", cli.seed);
    m.param("variant", variant)
        .param("count", configs.len());
    m.outputs = outputs;
    finish(m, &a.out, started)
}

fn cmd_compose(a: &ComposeArgs, cli: &Cli, started: Instant) -> Result<()> {
    ensure_dir(&a.out)?;
    let scenes = standard_scenes(cli.seed)?;
    let scene = scenes
        .get(a.scene)
        .ok_or_else(|| Error::InvalidConfig(format!("scene {} out of range", a.scene)))?;
    let cfg = NsConfig::new(a.width, a.length, a.beta, a.distance, a.brightness)?;
    let ground = GroundMap::for_scene(scene);
    let composed = compose(scene, &ground, &cfg, a.shade_factor)?;
    let benign_path = a.out.join("benign.png");
    let attacked_path = a.out.join("composed.png");
    scene.image.write_auto(&benign_path)?;
    composed.image.write_auto(&attacked_path)?;
    println!(
        "scene {} composed (no_op = {}) -> {}",
        a.scene,
        composed.no_op,
        a.out.display()
    );

    let mut m = RunManifest::new("compose", cli.seed);
    m.param("scene", a.scene)
        .param("width", a.width)
        .param("length", a.length)
        .param("beta", a.beta)
        .param("distance", a.distance)
        .param("brightness", a.brightness)
        .param("shade_factor", a.shade_factor);
    m.outputs = vec![
        benign_path.display().to_string(),
        attacked_path.display().to_string(),
    ];
    finish(m, &a.out, started)
}

fn gray_to_rgb(mask: &GrayImage) -> Rgb8Image {
    let mut out = Rgb8Image::new(mask.width, mask.height);
    for y in 0..mask.height {
        for x in 0..mask.width {
            let v = mask.get(x, y);
            out.set_pixel(x, y, [v, v, v]);
        }
    }
    out
}

fn cmd_detect(a: &DetectArgs, cli: &Cli, started: Instant) -> Result<()> {
    ensure_dir(&a.out)?;
    let image = Rgb8Image::read_auto(&a.image)?;
    let detector = if a.detector_cmd.is_empty() {
        Detector::Reference(DetectorParams::default())
    } else {
        Detector::Subprocess(a.detector_cmd.clone())
    };
    // Detection needs road-plane calibration; standard scene geometry is
    // assumed for arbitrary images of the same size.
    let scenes = standard_scenes(cli.seed)?;
    let calib = scenes[0].calib();
    let result = detector.run(&image, &calib)?;
    let mask_path = a.out.join("mask.png");
    gray_to_rgb(&result.mask).write_auto(&mask_path)?;
    let rows: Vec<Vec<String>> = result
        .lanes
        .iter()
        .enumerate()
        .map(|(i, l)| {
            vec![
                i.to_string(),
                format!("{:.4}", l.confidence),
                format!("{:.4}", l.width_m),
                l.support.to_string(),
                l.points.len().to_string(),
            ]
        })
        .collect();
    let lanes_path = a.out.join("lanes.csv");
    write_csv(&lanes_path, &["lane", "confidence", "width_m", "support", "n_points"], &rows)?;
    let mut pt_rows = Vec::new();
    for (i, l) in result.lanes.iter().enumerate() {
        for p in &l.points {
            pt_rows.push(vec![i.to_string(), format!("{:.2}", p[0]), format!("{:.2}", p[1])]);
        }
    }
    let points_path = a.out.join("points.csv");
    write_csv(&points_path, &["lane", "u", "v"], &pt_rows)?;
    println!("{} lanes -> {}", result.lanes.len(), a.out.display());

    let mut m = RunManifest::new("detect", cli.seed);
    m.param(
        "detector",
        if a.detector_cmd.is_empty() {
            "reference".to_string()
        } else {
            a.detector_cmd.join(" ")
        },
    );
    m.inputs = vec![a.image.display().to_string()];
    m.outputs = vec![
        mask_path.display().to_string(),
        lanes_path.display().to_string(),
        points_path.display().to_string(),
    ];
    finish(m, &a.out, started)
}

fn outcome_rows(outcomes: &[AttackOutcome]) -> Vec<Vec<String>> {
    outcomes
        .iter()
        .map(|o| {
            vec![
                fmt_num(o.config.width_m),
                fmt_num(o.config.length_m),
                fmt_num(o.config.beta_deg),
                fmt_num(o.config.distance_m),
                fmt_num(o.config.brightness),
                o.scene_id.to_string(),
                o.added_pixels.to_string(),
                o.removed_pixels.to_string(),
                (o.success as u8).to_string(),
            ]
        })
        .collect()
}

pub const OUTCOME_HEADER: [&str; 9] = [
    "width_m",
    "length_m",
    "beta_deg",
    "distance_m",
    "brightness",
    "scene_id",
    "added_pixels",
    "removed_pixels",
    "success",
];

fn cmd_attack(a: &AttackArgs, cli: &Cli, workers: Option<usize>, started: Instant) -> Result<()> {
    ensure_dir(&a.out)?;
    let variant: PurgeVariant = a.variant.parse()?;
    let configs = generate_sweep(&SweepBounds::default(), variant);
    let scenes = standard_scenes(cli.seed)?;
    let detector = Detector::reference();
    let benign: Vec<_> = scenes
        .iter()
        .map(|s| detector.run(&s.image, &s.calib()))
        .collect::<Result<_>>()?;
    let run = SweepRun {
        shade_factor: a.shade_factor,
        threshold: calibrate_threshold(&benign)?,
        workers: workers.unwrap_or_else(num_threads),
    };
    let outcomes = run_sweep(&scenes, &configs, &detector, &run)?;
    let outcomes_path = a.out.join("outcomes.csv");
    write_csv(&outcomes_path, &OUTCOME_HEADER, &outcome_rows(&outcomes))?;
    let stats = SweepStats::from_outcomes(&outcomes);
    let mut stat_rows = Vec::new();
    for s in &stats.series {
        for &(v, rate, n) in &s.points {
            stat_rows.push(vec![
                s.param.to_string(),
                fmt_num(v),
                format!("{rate:.6}"),
                n.to_string(),
            ]);
        }
    }
    let series_path = a.out.join("param_series.csv");
    write_csv(&series_path, &["param", "value", "success_rate", "n"], &stat_rows)?;
    println!(
        "{} outcomes, success rate {:.4} (threshold {} px) -> {}",
        stats.n_outcomes,
        stats.success_rate,
        run.threshold,
        a.out.display()
    );
    let mut outputs = vec![
        outcomes_path.display().to_string(),
        series_path.display().to_string(),
    ];
    if a.onset {
        let spec = SceneSpec::new(shadowlane_core::scene::LaneLayout::default_us(), cli.seed);
        let cfg = NsConfig::new(0.3, 5.0, 5.0, 0.5, 1.8)?;
        let onsets = brightness_sweep(
            &spec,
            1.8,
            &cfg,
            &DEFAULT_BRIGHTNESS_GRID,
            &detector,
            a.shade_factor,
            DEFAULT_APPROACH_STEP_M,
            30.0,
        )?;
        let rows: Vec<Vec<String>> = onsets
            .iter()
            .map(|p| {
                vec![
                    fmt_num(p.brightness),
                    p.onset_m.map(fmt_num).unwrap_or_default(),
                ]
            })
            .collect();
        let onset_path = a.out.join("onset.csv");
        write_csv(&onset_path, &["brightness", "onset_m"], &rows)?;
        outputs.push(onset_path.display().to_string());
    }

    let mut m = RunManifest::new("attack", cli.seed);
    m.param("variant", variant)
        .param("shade_factor", a.shade_factor)
        .param("threshold_px", run.threshold)
        .param("workers", run.workers)
        .param("onset", a.onset);
    m.outputs = outputs;
    finish(m, &a.out, started)
}

fn num_threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

pub const GRID_HEADER: [&str; 8] = [
    "scenario",
    "speed_mph",
    "length_m",
    "attack_success",
    "reaction_time_s",
    "takeover_preventable",
    "combined",
    "inconclusive",
];

fn cmd_simulate(a: &SimulateArgs, cli: &Cli, started: Instant) -> Result<()> {
    ensure_dir(&a.out)?;
    let detector = Detector::reference();
    let mut m = RunManifest::new("simulate", cli.seed);
    m.param("speed", a.speed)
        .param("length", a.length)
        .param("grid", a.grid);
    if a.grid {
        let grid = success_rate_table(&detector, cli.seed, &DEFAULT_SPEEDS_MPH, &DEFAULT_LENGTHS_M)?;
        let rows: Vec<Vec<String>> = grid
            .cells
            .iter()
            .map(|c| {
                vec![
                    c.scenario.to_string(),
                    fmt_num(c.speed_mph),
                    fmt_num(c.length_m),
                    (c.verdict.attack_success as u8).to_string(),
                    c.verdict.reaction_time_s.map(|t| format!("{t:.4}")).unwrap_or_default(),
                    (c.verdict.takeover_preventable as u8).to_string(),
                    (c.verdict.combined as u8).to_string(),
                    (c.verdict.inconclusive as u8).to_string(),
                ]
            })
            .collect();
        let grid_path = a.out.join("grid.csv");
        write_csv(&grid_path, &GRID_HEADER, &rows)?;
        let avg_rows: Vec<Vec<String>> = grid
            .per_length_avg
            .iter()
            .map(|&(l, r)| vec![fmt_num(l), format!("{r:.6}")])
            .collect();
        let avg_path = a.out.join("per_length.csv");
        write_csv(&avg_path, &["length_m", "success_rate"], &avg_rows)?;
        println!("{} grid cells -> {}", grid.cells.len(), a.out.display());
        m.outputs = vec![grid_path.display().to_string(), avg_path.display().to_string()];
        return finish(m, &a.out, started);
    }

    let spec = match (&a.config, a.scenario) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::io(path.display().to_string(), e))?;
            m.inputs.push(path.display().to_string());
            ScenarioSpec::from_config(&text)?
        }
        (None, Some(id)) => ScenarioSpec::standard(id)?,
        (None, None) => {
            return Err(Error::InvalidConfig(
                "simulate needs --scenario, --config, or --grid".into(),
            ))
        }
    };
    m.param("scenario", spec.id);
    let run = run_scenario(&spec, a.speed, a.length, &detector, cli.seed, None)?;
    let traj_path = a.out.join("trajectory.csv");
    std::fs::write(&traj_path, trajectory_csv(&run.trajectory))
        .map_err(|e| Error::io(traj_path.display().to_string(), e))?;
    let v = &run.verdict;
    let verdict_path = a.out.join("verdict.csv");
    write_csv(
        &verdict_path,
        &["attack_success", "reaction_time_s", "takeover_preventable", "combined", "inconclusive"],
        &[vec![
            (v.attack_success as u8).to_string(),
            v.reaction_time_s.map(|t| format!("{t:.4}")).unwrap_or_default(),
            (v.takeover_preventable as u8).to_string(),
            (v.combined as u8).to_string(),
            (v.inconclusive as u8).to_string(),
        ]],
    )?;
    println!(
        "scenario {} @ {} mph, L = {} m: success = {}, rt = {}, combined = {}",
        spec.id,
        a.speed,
        a.length,
        v.attack_success,
        v.reaction_time_s.map(|t| format!("{t:.2} s")).unwrap_or_else(|| "-".into()),
        v.combined
    );
    m.outputs = vec![traj_path.display().to_string(), verdict_path.display().to_string()];
    finish(m, &a.out, started)
}

fn parse_defense_params(text: &str) -> Result<DefenseParams> {
    let mut p = DefenseParams::default();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |detail: String| Error::Parse {
            format: "defense params".into(),
            line: ln + 1,
            detail,
        };
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad("expected key = value".into()))?;
        let v = v.trim();
        match k.trim() {
            "margin_px" => p.margin_px = v.parse().map_err(|e| bad(format!("{e}")))?,
            "anomaly_threshold" => {
                p.anomaly_threshold = v.parse().map_err(|e| bad(format!("{e}")))?
            }
            "enclosure_ratio" => p.enclosure_ratio = v.parse().map_err(|e| bad(format!("{e}")))?,
            "fill_radius" => p.fill_radius = v.parse().map_err(|e| bad(format!("{e}")))?,
            other => return Err(bad(format!("unknown key {other}"))),
        }
    }
    p.validate()?;
    Ok(p)
}

fn cmd_defend(a: &DefendArgs, cli: &Cli, started: Instant) -> Result<()> {
    ensure_dir(&a.out)?;
    let params = match &a.params {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::io(path.display().to_string(), e))?;
            parse_defense_params(&text)?
        }
        None => DefenseParams::default(),
    };
    let mut entries: Vec<PathBuf> = std::fs::read_dir(&a.in_dir)
        .map_err(|e| Error::io(a.in_dir.display().to_string(), e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("png") | Some("ppm")
            )
        })
        .collect();
    entries.sort();
    if entries.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no .png/.ppm images in {}",
            a.in_dir.display()
        )));
    }
    let mut rows = Vec::new();
    let mut outputs = Vec::new();
    for path in &entries {
        let image = Rgb8Image::read_auto(path)?;
        let filtered = luminosity_filter(&image, &params)?;
        let changed = image
            .data
            .iter()
            .zip(filtered.data.iter())
            .filter(|(a, b)| a != b)
            .count()
            / 3;
        let name = path.file_name().expect("file path").to_string_lossy().to_string();
        let out_path = a.out.join(&name);
        filtered.write_auto(&out_path)?;
        rows.push(vec![name, changed.to_string()]);
        outputs.push(out_path.display().to_string());
    }
    let report_path = a
        .report
        .clone()
        .unwrap_or_else(|| a.out.join("defend.csv"));
    write_csv(&report_path, &["image", "suppressed_pixels"], &rows)?;
    println!("{} images filtered -> {}", entries.len(), a.out.display());

    let mut m = RunManifest::new("defend", cli.seed);
    m.param("margin_px", params.margin_px)
        .param("anomaly_threshold", params.anomaly_threshold)
        .param("enclosure_ratio", params.enclosure_ratio)
        .param("fill_radius", params.fill_radius);
    m.inputs = entries.iter().map(|p| p.display().to_string()).collect();
    m.outputs = outputs;
    m.outputs.push(report_path.display().to_string());
    finish(m, &a.out, started)
}

fn cmd_report(a: &ReportArgs, cli: &Cli, started: Instant) -> Result<()> {
    ensure_dir(&a.out)?;
    let mut outputs = Vec::new();
    let mut emit = |name: &str, svg: String, rows: (&[&str], Vec<Vec<String>>)| -> Result<()> {
        let svg_path = a.out.join(format!("{name}.svg"));
        std::fs::write(&svg_path, &svg).map_err(|e| Error::io(svg_path.display().to_string(), e))?;
        let csv_path = a.out.join(format!("{name}.csv"));
        write_csv(&csv_path, rows.0, &rows.1)?;
        outputs.push(svg_path.display().to_string());
        outputs.push(csv_path.display().to_string());
        Ok(())
    };

    // Mean attack outcome over parameter bounds, from outcomes.csv.
    let outcomes_path = a.results.join("outcomes.csv");
    let mut series = Vec::new();
    let mut rows = Vec::new();
    if outcomes_path.exists() {
        let text = std::fs::read_to_string(&outcomes_path)
            .map_err(|e| Error::io(outcomes_path.display().to_string(), e))?;
        let cols = read_csv_columns(
            &text,
            &["width_m", "length_m", "beta_deg", "distance_m", "brightness", "scene_id", "added_pixels", "removed_pixels", "success"],
        )?;
        let outcomes: Vec<AttackOutcome> = cols
            .iter()
            .map(|r| AttackOutcome {
                config: NsConfig {
                    width_m: r[0],
                    length_m: r[1],
                    beta_deg: r[2],
                    distance_m: r[3],
                    brightness: r[4],
                },
                scene_id: r[5] as usize,
                added_pixels: r[6] as usize,
                removed_pixels: r[7] as usize,
                success: r[8] != 0.0,
            })
            .collect();
        let stats = SweepStats::from_outcomes(&outcomes);
        for s in &stats.series {
            series.push(Series::new(
                s.param,
                s.points.iter().map(|&(v, r, _)| (v, r)).collect(),
            ));
            for &(v, r, n) in &s.points {
                rows.push(vec![
                    s.param.to_string(),
                    fmt_num(v),
                    format!("{r:.6}"),
                    n.to_string(),
                ]);
            }
        }
    }
    emit(
        "mean_outcome",
        line_chart_svg("Mean attack outcome over parameter bounds", "parameter value", "success rate", &series),
        (&["param", "value", "success_rate", "n"], rows),
    )?;

    // Success rate by NS length, from per_length.csv.
    let per_length_path = a.results.join("per_length.csv");
    let mut series = Vec::new();
    let mut rows = Vec::new();
    if per_length_path.exists() {
        let text = std::fs::read_to_string(&per_length_path)
            .map_err(|e| Error::io(per_length_path.display().to_string(), e))?;
        let cols = read_csv_columns(&text, &["length_m", "success_rate"])?;
        series.push(Series::new(
            "success rate",
            cols.iter().map(|r| (r[0], r[1])).collect(),
        ));
        rows = cols
            .iter()
            .map(|r| vec![fmt_num(r[0]), format!("{:.6}", r[1])])
            .collect();
    }
    emit(
        "success_by_length",
        line_chart_svg("Success rate by NS length", "NS length (m)", "success rate", &series),
        (&["length_m", "success_rate"], rows),
    )?;

    // Brightness vs onset distance, from onset.csv.
    let onset_path = a.results.join("onset.csv");
    let mut series = Vec::new();
    let mut rows = Vec::new();
    if onset_path.exists() {
        let text = std::fs::read_to_string(&onset_path)
            .map_err(|e| Error::io(onset_path.display().to_string(), e))?;
        let cols = read_csv_columns(&text, &["brightness"])?;
        // onset_m may be empty; parse manually alongside.
        let mut pts = Vec::new();
        for (line, r) in text.lines().skip(1).zip(cols.iter()) {
            let onset = line.split(',').nth(1).unwrap_or("").trim();
            if let Ok(v) = onset.parse::<f64>() {
                pts.push((r[0], v));
                rows.push(vec![fmt_num(r[0]), fmt_num(v)]);
            }
        }
        series.push(Series::new("onset distance", pts));
    }
    emit(
        "illuminance",
        line_chart_svg("Misdetection onset vs NS brightness", "brightness ratio", "onset distance (m)", &series),
        (&["brightness", "onset_m"], rows),
    )?;

    println!("reports -> {}", a.out.display());
    let mut m = RunManifest::new("report", cli.seed);
    m.inputs = vec![a.results.display().to_string()];
    m.outputs = outputs;
    finish(m, &a.out, started)
}
