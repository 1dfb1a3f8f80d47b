use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use entinav::agent::{AgentKind, AgentState, CrowdState, GroupParams, MotionParams};
use entinav::edm::{
    aggregate_responses, fit_mapping, study_statistics, EntitativityMapping, InvisibilityMode, ParamBounds, ITEMS,
};
use entinav::io::{self, StudyData};
use entinav::scenarios::{self, parse_scenario, Mode, RunOptions, RunOutput, Scenario};
use entinav::sim::{fit_agent_params, predict_with, CrowdModel, FitConfig, FitWindow, GoalPolicy, ParamTable};
use entinav::Error;

#[derive(Parser)]
#[command(name = "entinav", version, about = "Entitativity-aware robot navigation in simulated crowds")]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario with robots at a fixed invisibility.
    Simulate(RunArgs),
    /// Paired intervention run against plain navigation.
    Intervene(RunArgs),
    /// Robots patrol through the crowd at full invisibility.
    Surveil(RunArgs),
    /// Fit pedestrian parameters from a trajectory file and predict ahead.
    Predict(PredictArgs),
    /// Fit the entitativity matrix from study data.
    FitEdm(StudyArgs),
    /// Correlations, Cronbach's alpha and PCA of study responses.
    StudyStats(StudyArgs),
    /// Per-operation timing.
    Bench(BenchArgs),
    /// Per-frame wide table of positions for plotting.
    ExportPlotData(ExportArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dt: Option<f64>,
    /// Fixed invisibility for the robot group: 1 is least noticeable, 0 most.
    #[arg(long)]
    s: Option<f64>,
    /// Invisibility lower bound during intervention.
    #[arg(long = "s-min")]
    s_min: Option<f64>,
    /// 4x4 mapping matrix file (defaults to the published one).
    #[arg(long)]
    mapping: Option<PathBuf>,
    /// Threat look-ahead, seconds.
    #[arg(long)]
    horizon: Option<f64>,
    /// Write zero planning time so reports are byte-reproducible.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct PredictArgs {
    /// Trajectory TSV.
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seconds per frame.
    #[arg(long, default_value_t = 0.1)]
    dt: f64,
    /// Prediction horizon, seconds.
    #[arg(long, default_value_t = 3.0)]
    horizon: f64,
}

#[derive(Args)]
struct StudyArgs {
    /// Study responses or aggregated points CSV.
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    mapping: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    iterations: usize,
}

#[derive(Args)]
struct ExportArgs {
    /// Trajectory TSV.
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let validation = e.chain().any(|c| c.downcast_ref::<Error>().is_some_and(Error::is_validation));
            ExitCode::from(if validation { 1 } else { 2 })
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("ENTINAV_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| Error::Input(format!("ENTINAV_THREADS must be a non-negative integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the thread pool")?;
    Ok(())
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate(a) => run_scenario_cmd(a, Mode::Baseline),
        Command::Intervene(a) => run_scenario_cmd(a, Mode::Intervention),
        Command::Surveil(a) => run_scenario_cmd(a, Mode::Surveillance),
        Command::Predict(a) => predict_cmd(a),
        Command::FitEdm(a) => fit_edm_cmd(a),
        Command::StudyStats(a) => study_stats_cmd(a),
        Command::Bench(a) => bench_cmd(a),
        Command::ExportPlotData(a) => export_cmd(a),
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn load_mapping(path: Option<&Path>) -> Result<EntitativityMapping> {
    match path {
        None => Ok(EntitativityMapping::published()),
        Some(p) => {
            let m = io::read_matrix(open(p)?).with_context(|| format!("reading {}", p.display()))?;
            Ok(EntitativityMapping::new(m, ParamBounds::STANDARD)?)
        }
    }
}

fn unit_flag(name: &str, v: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(Error::Validation {
            path: name.into(),
            line: None,
            message: format!("{v} is outside [0, 1]"),
        }
        .into())
    }
}

fn apply_overrides(s: &mut Scenario, a: &RunArgs) -> Result<()> {
    if let Some(seed) = a.seed {
        s.seed = seed;
    }
    if let Some(dt) = a.dt {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Validation {
                path: "--dt".into(),
                line: None,
                message: format!("must be positive, got {dt}"),
            }
            .into());
        }
        s.dt = dt;
    }
    if let Some(v) = a.s {
        s.invisibility.s = unit_flag("--s", v)?;
        s.invisibility.mode = InvisibilityMode::FixedS;
    }
    if let Some(v) = a.s_min {
        s.invisibility.s_min = unit_flag("--s-min", v)?;
        s.invisibility.mode = InvisibilityMode::LowerBound;
    }
    if let Some(h) = a.horizon {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Validation {
                path: "--horizon".into(),
                line: None,
                message: format!("must be positive, got {h}"),
            }
            .into());
        }
        s.robots.horizon = h;
    }
    Ok(())
}

fn run_scenario_cmd(a: RunArgs, mode: Mode) -> Result<()> {
    let text = fs::read_to_string(&a.scenario).with_context(|| format!("reading {}", a.scenario.display()))?;
    let mut scenario = parse_scenario(&text).with_context(|| format!("in {}", a.scenario.display()))?;
    apply_overrides(&mut scenario, &a)?;
    scenario.mode = mode;
    let options = RunOptions {
        mapping: load_mapping(a.mapping.as_deref())?,
        timing: !a.no_timing,
    };
    let out: RunOutput = match mode {
        Mode::Baseline => scenarios::run_baseline(&scenario, &options)?,
        Mode::Intervention => scenarios::run_intervention(&scenario, &options)?,
        Mode::Surveillance => scenarios::run_surveillance(&scenario, &options)?,
    };
    let mut w = create(&a.out, "trajectories.tsv")?;
    io::write_recording(&out.ours.output.recording, &mut w)?;
    w.flush()?;
    if let Some(b) = &out.baseline {
        let mut w = create(&a.out, "baseline_trajectories.tsv")?;
        io::write_recording(&b.output.recording, &mut w)?;
        w.flush()?;
    }
    let mut w = create(&a.out, "report.txt")?;
    write!(w, "{}", out.report)?;
    w.flush()?;
    print!("{}", out.report);
    Ok(())
}

fn predict_cmd(a: PredictArgs) -> Result<()> {
    if !(a.dt > 0.0) || !(a.horizon > 0.0) {
        return Err(Error::Input("--dt and --horizon must be positive".into()).into());
    }
    let trajs = io::read_trajectories(open(&a.scenario)?).with_context(|| format!("reading {}", a.scenario.display()))?;
    let last = trajs
        .iter()
        .filter_map(|t| t.samples.last().map(|s| s.frame))
        .max()
        .ok_or_else(|| Error::Input("trajectory file has no samples".into()))?;
    let step = trajs.iter().map(|t| t.frame_step()).min().unwrap_or(1);
    let frame_dt = a.dt * step as f64;
    let xs: Vec<f64> = trajs.iter().flat_map(|t| t.samples.iter().map(|s| s.position.x)).collect();
    let ys: Vec<f64> = trajs.iter().flat_map(|t| t.samples.iter().map(|s| s.position.y)).collect();
    let lo = entinav::geometry::Vec2::new(fold_min(&xs) - 1000.0, fold_min(&ys) - 1000.0);
    let hi = entinav::geometry::Vec2::new(fold_max(&xs) + 1000.0, fold_max(&ys) + 1000.0);
    let world = entinav::agent::WorldGeometry::open(entinav::geometry::Rect::new(lo, hi)?);
    let config = FitConfig::default();
    let mut params = ParamTable::new();
    let mut agents = Vec::new();
    for t in trajs.iter().filter(|t| t.kind == AgentKind::Pedestrian) {
        let Some(end) = t.samples.iter().position(|s| s.frame == last) else {
            continue;
        };
        let start = (end + 1).saturating_sub(config.window);
        let window = t.window(start, end + 1 - start);
        let previous = start.checked_sub(1).map(|i| t.samples[i].position);
        let fit_win = FitWindow {
            observed: &window,
            previous,
            context: &trajs,
            goal: None,
            world: &world,
            dt: frame_dt,
        };
        let p = match fit_agent_params(&fit_win, &MotionParams::default(), &config) {
            Ok(p) => p,
            Err(Error::InsufficientData { .. }) => {
                log::warn!("agent {}: too few samples, using default parameters", t.agent_id);
                MotionParams::default()
            }
            Err(e) => return Err(e.into()),
        };
        let pos = t.samples[end].position;
        let vel = match end.checked_sub(1) {
            Some(i) => (pos - t.samples[i].position) / frame_dt,
            None => entinav::geometry::Vec2::ZERO,
        };
        let radius = p.radius;
        params.insert(t.agent_id, p);
        agents.push(AgentState::new(t.agent_id, AgentKind::Pedestrian, pos, radius, pos)?.with_velocity(vel));
    }
    let crowd = CrowdState::new(agents, 0.0)?;
    let model = CrowdModel::new(params.clone(), world, frame_dt);
    let pred = predict_with(&model, &crowd, a.horizon, GoalPolicy::EXTRAPOLATE)?;
    let mut trajectories = Vec::new();
    for (id, pts) in &pred.positions {
        let samples = pts
            .iter()
            .enumerate()
            .map(|(k, p)| entinav::sim::Sample {
                frame: last + step * (k as u32 + 1),
                position: *p,
            })
            .collect();
        trajectories.push(entinav::sim::Trajectory::new(*id, AgentKind::Pedestrian, samples)?);
    }
    let mut w = create(&a.out, "prediction.tsv")?;
    io::write_trajectories(&trajectories, &mut w)?;
    w.flush()?;
    let mut w = create(&a.out, "fitted_params.tsv")?;
    writeln!(w, "agent_id\tneighbor_dist\tradius\tpref_speed\tgroup_cohesion")?;
    for (id, p) in &params {
        let g = GroupParams::from_motion_params(p);
        writeln!(
            w,
            "{id}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
            g.neighbor_dist, g.radius, g.pref_speed, g.group_cohesion
        )?;
    }
    w.flush()?;
    Ok(())
}

fn fold_min(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

fn fold_max(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn fit_edm_cmd(a: StudyArgs) -> Result<()> {
    let data = io::read_study_data(open(&a.scenario)?).with_context(|| format!("reading {}", a.scenario.display()))?;
    let points = match data {
        StudyData::Responses(r) => aggregate_responses(&r)?,
        StudyData::Points(p) => p,
    };
    let mapping = fit_mapping(&points, &ParamBounds::STANDARD)?;
    let mut w = create(&a.out, "matrix.txt")?;
    io::write_matrix(&mapping.rows(), &mut w)?;
    w.flush()?;
    io::write_matrix(&mapping.rows(), std::io::stdout().lock())?;
    Ok(())
}

fn study_stats_cmd(a: StudyArgs) -> Result<()> {
    let data = io::read_study_data(open(&a.scenario)?).with_context(|| format!("reading {}", a.scenario.display()))?;
    let StudyData::Responses(responses) = data else {
        return Err(Error::Input("study statistics need individual responses, not aggregated points".into()).into());
    };
    let r = study_statistics(&responses)?;
    let mut text = String::new();
    text.push_str("correlation\n");
    text.push_str(&format!("item\t{}\n", ITEMS.map(|i| i.name()).join("\t")));
    for (i, item) in ITEMS.iter().enumerate() {
        let row: Vec<String> = r.correlation[i].iter().map(|c| format!("{c:.6}")).collect();
        text.push_str(&format!("{}\t{}\n", item.name(), row.join("\t")));
    }
    text.push_str(&format!("cronbach_alpha\t{:.6}\n", r.cronbach_alpha));
    let ev: Vec<String> = r.explained_variance.iter().map(|v| format!("{v:.6}")).collect();
    text.push_str(&format!("explained_variance\t{}\n", ev.join("\t")));
    let rev: Vec<&str> = r.reversed.iter().map(|i| i.name()).collect();
    text.push_str(&format!("reversed\t{}\n", if rev.is_empty() { "-".to_string() } else { rev.join(",") }));
    let mut w = create(&a.out, "study_stats.txt")?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    print!("{text}");
    Ok(())
}

fn bench_cmd(a: BenchArgs) -> Result<()> {
    let mapping = load_mapping(a.mapping.as_deref())?;
    let iters = a.iterations.max(1);
    let mut rows = Vec::new();

    let gp = GroupParams::DEFAULT;
    let n = 100_000;
    let t = Instant::now();
    let mut acc = 0.0;
    for _ in 0..n {
        acc += mapping.entitativity(std::hint::black_box(&gp))?.friendliness;
    }
    std::hint::black_box(acc);
    rows.push(("entitativity", t.elapsed().as_secs_f64() * 1e6 / n as f64, n));

    let t = Instant::now();
    for k in 0..n {
        let s = (k % 11) as f64 / 10.0;
        std::hint::black_box(mapping.params_for_invisibility(s)?);
    }
    rows.push(("params_for_invisibility", t.elapsed().as_secs_f64() * 1e6 / n as f64, n));

    let scenario = scenarios::builtin::load(scenarios::builtin::DENSE_SURVEILLANCE)?;
    let (crowd, model) = scenario.build()?;
    let peds = CrowdState {
        agents: crowd.pedestrians().copied().collect(),
        time: 0.0,
    };
    let t = Instant::now();
    for _ in 0..iters {
        std::hint::black_box(model.step(&peds, &Default::default(), None)?);
    }
    rows.push(("crowd_step_50", t.elapsed().as_secs_f64() * 1e6 / iters as f64, iters));

    let mut short = scenario.clone();
    short.duration = iters as f64 * short.dt;
    let out = scenarios::run_surveillance(&short, &RunOptions { mapping, timing: true })?;
    rows.push(("planning_step_3x50", out.report.mean_step_time_us, iters));

    let mut text = String::from("operation\tmean_us\titerations\n");
    for (name, us, k) in rows {
        text.push_str(&format!("{name}\t{us:.3}\t{k}\n"));
    }
    let mut w = create(&a.out, "bench.tsv")?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    print!("{text}");
    Ok(())
}

fn export_cmd(a: ExportArgs) -> Result<()> {
    let trajs = io::read_trajectories(open(&a.scenario)?).with_context(|| format!("reading {}", a.scenario.display()))?;
    let mut frames: Vec<u32> = trajs.iter().flat_map(|t| t.samples.iter().map(|s| s.frame)).collect();
    frames.sort_unstable();
    frames.dedup();
    let mut w = create(&a.out, "plot_data.tsv")?;
    let mut header = vec!["frame".to_string()];
    for t in &trajs {
        header.push(format!("x_{}", t.agent_id));
        header.push(format!("y_{}", t.agent_id));
    }
    writeln!(w, "{}", header.join("\t"))?;
    for f in frames {
        let mut row = vec![f.to_string()];
        for t in &trajs {
            match t.position_at(f) {
                Some(p) => {
                    row.push(format!("{:.9}", p.x));
                    row.push(format!("{:.9}", p.y));
                }
                None => {
                    row.push(String::new());
                    row.push(String::new());
                }
            }
        }
        writeln!(w, "{}", row.join("\t"))?;
    }
    w.flush()?;
    Ok(())
}
