use std::path::{Path, PathBuf};

use clap::Args;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use spinewalk::gait::GaitId;
use spinewalk::metrics::{
    cost_of_transport, footfall_consistency, gait_transition, hildebrand, summarize, CostWeights, CotCurve, HildebrandGrid,
    MetricsError, Transition,
};
use spinewalk::mpc::VelocityCommand;
use spinewalk::optimize::{export_preset, grid_search, write_candidates_csv, Candidate, EpisodeEvaluator, ParamGrid};
use spinewalk::sim::{run_episode, SimLog, StopReason};
use spinewalk::spine::StrategyId;
use spinewalk::study::{
    interact_match_rate, load_votes, naturalness_scores, validate_participants, ScoreReport, StudyError, CONTRADICTION_THRESHOLD,
};

use crate::config::{output_dir, parse_gait, parse_strategy, ExperimentArgs, ExperimentConfig, Resolved};
use crate::error::CliError;

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(path)
}

fn create(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

fn json<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut s = serde_json::to_vec_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    s.push(b'\n');
    Ok(s)
}

fn metrics_error(e: MetricsError) -> CliError {
    match e {
        MetricsError::TooFewBins(_) | MetricsError::InvalidWeights(_) => CliError::Config(e.to_string()),
        MetricsError::EmptyWindow
        | MetricsError::TooShort { .. }
        | MetricsError::EmptyBin(_)
        | MetricsError::ZeroVelocity(_)
        | MetricsError::NoCrossing
        | MetricsError::MultipleCrossings(_) => CliError::Empty(e.to_string()),
        _ => CliError::Schema(e.to_string()),
    }
}

fn run(r: &Resolved, gait: GaitId, strategy: StrategyId, command: VelocityCommand) -> Result<SimLog, CliError> {
    let exp = r.experiment(gait, strategy, command)?;
    run_episode(&r.model, &r.sim, &exp, &r.mpc).map_err(|e| CliError::Sim(e.to_string()))
}

/// Runs one episode and writes `log.csv` and `summary.json`.
pub fn simulate(args: &ExperimentArgs) -> Result<PathBuf, CliError> {
    let r = Resolved::new(&ExperimentConfig::from_args(args)?)?;
    let log = run(&r, r.gait, r.strategy, r.command)?;
    let dir = output_dir(r.output.as_deref(), "simulate");
    create(&dir)?;
    let mut csv = Vec::new();
    log.write_csv(&mut csv).map_err(|e| CliError::Io(e.to_string()))?;
    write(&dir, "log.csv", &csv)?;
    let wall = &log.mpc_wall_time;
    if !wall.is_empty() {
        let mean = wall.iter().sum::<f64>() / wall.len() as f64;
        eprintln!("mean MPC solve time {:.3} ms over {} ticks", mean * 1e3, wall.len());
    }
    let summary = summarize(&log).map_err(metrics_error)?;
    write(&dir, "summary.json", &json(&summary)?)?;
    if log.stop != StopReason::Completed {
        return Err(CliError::Sim(format!("episode stopped early ({:?}) at t = {:.3} s", log.stop, log.duration())));
    }
    Ok(dir)
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    /// Gaits to sweep.
    #[arg(long, value_delimiter = ',', value_parser = parse_gait, default_value = "walk,trot")]
    pub gaits: Vec<GaitId>,
    /// Strategies to sweep.
    #[arg(long, value_delimiter = ',', value_parser = parse_strategy, default_value = "fixed,stiffness,foot_tracking,time_real,time_opt")]
    pub strategies: Vec<StrategyId>,
    /// Forward speeds, m/s.
    #[arg(long, value_delimiter = ',', required = true)]
    pub velocities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct SweepPoint {
    velocity: f64,
    cot: Option<f64>,
    cot_without_spine: Option<f64>,
    stable: bool,
    error: Option<String>,
}

fn sweep_point(r: &Resolved, gait: GaitId, strategy: StrategyId, v: f64) -> SweepPoint {
    let mut command = VelocityCommand::default_for(gait);
    command.vx = v;
    let mut p = SweepPoint { velocity: v, cot: None, cot_without_spine: None, stable: false, error: None };
    match run(r, gait, strategy, command) {
        Err(e) => p.error = Some(e.to_string()),
        Ok(log) if log.stop != StopReason::Completed => p.error = Some(format!("stopped early: {:?}", log.stop)),
        Ok(log) => match (cost_of_transport(&log, true), cost_of_transport(&log, false)) {
            (Ok(a), Ok(b)) => {
                p.cot = Some(a);
                p.cot_without_spine = Some(b);
                p.stable = true;
            }
            (Err(e), _) | (_, Err(e)) => p.error = Some(e.to_string()),
        },
    }
    p
}

fn points_csv(points: &[SweepPoint]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(["velocity", "cot", "cot_without_spine", "stable", "error"]).map_err(io)?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    for p in points {
        w.write_record([p.velocity.to_string(), opt(p.cot), opt(p.cot_without_spine), p.stable.to_string(), p.error.clone().unwrap_or_default()])
            .map_err(io)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

fn curve(points: &[SweepPoint], pick: impl Fn(&SweepPoint) -> Option<f64>) -> Option<CotCurve> {
    CotCurve::new(points.iter().filter_map(|p| Some((p.velocity, pick(p)?))).collect()).ok()
}

fn curve_csv(c: &CotCurve) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    c.write_csv(&mut buf)?;
    Ok(buf)
}

#[derive(Debug, Serialize)]
struct TransitionReport {
    strategy: Option<StrategyId>,
    velocity: Option<f64>,
    trot_cheaper_above: Option<bool>,
    error: Option<String>,
}

impl TransitionReport {
    fn new(strategy: Option<StrategyId>, t: Result<Transition, MetricsError>) -> Self {
        match t {
            Ok(t) => Self { strategy, velocity: Some(t.velocity), trot_cheaper_above: Some(t.trot_cheaper_above), error: None },
            Err(e) => Self { strategy, velocity: None, trot_cheaper_above: None, error: Some(e.to_string()) },
        }
    }
}

/// CoT against speed for every (gait, strategy). Writes a full table per
/// pair (unstable points included and marked), clean curves of the stable
/// points, and the walk/trot transition per strategy when both gaits ran.
pub fn sweep(args: &SweepArgs) -> Result<PathBuf, CliError> {
    let r = Resolved::new(&ExperimentConfig::from_args(&args.experiment)?)?;
    if args.velocities.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Config("velocities must be finite".into()));
    }
    let mut vs = args.velocities.clone();
    vs.sort_by(f64::total_cmp);
    vs.dedup();
    for &g in &args.gaits {
        r.schedule(g)?;
        for &s in &args.strategies {
            r.params(s, g)?;
        }
    }
    let mut gaits = args.gaits.clone();
    gaits.sort();
    gaits.dedup();
    let mut strategies = args.strategies.clone();
    strategies.sort();
    strategies.dedup();
    let mut jobs: Vec<(GaitId, StrategyId, f64)> = Vec::new();
    for &g in &gaits {
        for &s in &strategies {
            jobs.extend(vs.iter().map(|&v| (g, s, v)));
        }
    }
    let results: Vec<SweepPoint> = jobs.par_iter().map(|&(g, s, v)| sweep_point(&r, g, s, v)).collect();

    let dir = output_dir(r.output.as_deref(), "sweep");
    create(&dir)?;
    let per_pair = vs.len();
    let mut curves = std::collections::BTreeMap::new();
    for (k, chunk) in results.chunks(per_pair).enumerate() {
        let (g, s, _) = jobs[k * per_pair];
        let stem = format!("{}_{}", g.name(), s.name());
        write(&dir, &format!("cot_{stem}.csv"), &points_csv(chunk)?)?;
        let stable = chunk.iter().filter(|p| p.stable).count();
        eprintln!("{stem}: {stable}/{} points stable", chunk.len());
        if let Some(c) = curve(chunk, |p| p.cot) {
            write(&dir, &format!("curve_{stem}.csv"), &curve_csv(&c)?)?;
            curves.insert((g, s), c);
        }
        if let Some(c) = curve(chunk, |p| p.cot_without_spine) {
            write(&dir, &format!("curve_{stem}_nospine.csv"), &curve_csv(&c)?)?;
        }
    }
    for &s in &strategies {
        if let (Some(w), Some(t)) = (curves.get(&(GaitId::Walk, s)), curves.get(&(GaitId::Trot, s))) {
            let report = TransitionReport::new(Some(s), gait_transition(w, t));
            write(&dir, &format!("transition_{}.json", s.name()), &json(&report)?)?;
        }
    }
    Ok(dir)
}

#[derive(Debug, Clone, Args)]
pub struct TransitionArgs {
    /// Walking CoT curve (velocity,cot CSV).
    #[arg(long)]
    pub walk: PathBuf,
    /// Trotting CoT curve (velocity,cot CSV).
    #[arg(long)]
    pub trot: PathBuf,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

pub fn transition(args: &TransitionArgs) -> Result<PathBuf, CliError> {
    let load = |p: &Path| {
        CotCurve::load(p).map_err(|e| if p.exists() { CliError::Schema(e.to_string()) } else { CliError::Io(e.to_string()) })
    };
    let (walk, trot) = (load(&args.walk)?, load(&args.trot)?);
    let t = gait_transition(&walk, &trot);
    let dir = output_dir(args.output.as_deref(), "transition");
    create(&dir)?;
    let (report, t) = match t {
        Ok(t) => (TransitionReport::new(None, Ok(t)), Ok(t)),
        Err(e) => (TransitionReport::new(None, Err(e)), Err(())),
    };
    write(&dir, "transition.json", &json(&report)?)?;
    let t = t.map_err(|()| CliError::Empty(report.error.clone().unwrap_or_default()))?;
    println!("transition velocity {:.4} m/s", t.velocity);
    Ok(dir)
}

#[derive(Debug, Clone, Args)]
pub struct HildebrandArgs {
    /// Episode log written by `simulate`.
    #[arg(long)]
    pub log: PathBuf,
    /// Phase bins per cycle.
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    /// Image pixels per grid cell.
    #[arg(long, default_value_t = 12)]
    pub cell: usize,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct HildebrandReport<'a> {
    grid: &'a HildebrandGrid,
    consistency: f64,
}

pub fn hildebrand_cmd(args: &HildebrandArgs) -> Result<PathBuf, CliError> {
    if args.cell == 0 {
        return Err(CliError::Config("cell size must be positive".into()));
    }
    let file = std::fs::File::open(&args.log).map_err(|e| CliError::Io(format!("{}: {e}", args.log.display())))?;
    let log = SimLog::read_csv(std::io::BufReader::new(file)).map_err(|e| CliError::Schema(e.to_string()))?;
    let grid = hildebrand(&log, args.bins, &log.meta.gait).map_err(metrics_error)?;
    let consistency = footfall_consistency(&grid.measured, &grid.reference).map_err(metrics_error)?;
    let dir = output_dir(args.output.as_deref(), "hildebrand");
    create(&dir)?;
    write(&dir, "hildebrand.pgm", &grid.to_pgm(args.cell))?;
    write(&dir, "hildebrand.svg", grid.to_svg(args.cell).as_bytes())?;
    write(&dir, "hildebrand.json", &json(&HildebrandReport { grid: &grid, consistency })?)?;
    println!("{} cycles, footfall consistency {consistency:.4}", grid.cycles);
    Ok(dir)
}

/// Grid search definition file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeConfig {
    pub grid: ParamGrid,
    /// Cost weights; defaults to the row for the grid's strategy.
    pub weights: Option<CostWeights>,
    pub duration: Option<f64>,
    pub seed: Option<u64>,
    pub model: Option<PathBuf>,
    pub gait_library: Option<PathBuf>,
    /// Base constants for parameters not on an axis.
    pub presets: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct OptimizeArgs {
    /// Grid search TOML.
    #[arg(long)]
    pub config: PathBuf,
    /// Override the episode length, s.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Candidates kept in `top.json`.
    #[arg(long, default_value_t = 5)]
    pub top_k: usize,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

pub fn optimize(args: &OptimizeArgs) -> Result<PathBuf, CliError> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    let oc: OptimizeConfig = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    oc.grid.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let dir_of = args.config.parent().unwrap_or(Path::new("."));
    let rel = |p: &Option<PathBuf>| p.as_ref().map(|p| dir_of.join(p));
    let exp = ExperimentConfig {
        model: rel(&oc.model),
        gait_library: rel(&oc.gait_library),
        presets: rel(&oc.presets),
        gait: Some(oc.grid.gait),
        strategy: Some(oc.grid.strategy),
        duration: args.duration.or(oc.duration),
        seed: oc.seed,
        ..Default::default()
    };
    let r = Resolved::new(&exp)?;
    let weights = oc.weights.unwrap_or_else(|| CostWeights::for_strategy(oc.grid.strategy));
    weights.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let mut ev = EpisodeEvaluator::new(r.schedule(oc.grid.gait)?, oc.grid.strategy);
    ev.model = r.model.clone();
    ev.sim = r.sim.clone();
    ev.weights = weights;
    ev.seed = r.seed;
    let base = r.params(oc.grid.strategy, oc.grid.gait)?;
    let ranked = grid_search(&ev, &oc.grid, &base).map_err(|e| CliError::Config(e.to_string()))?;

    let dir = output_dir(args.output.as_deref(), "optimize");
    create(&dir)?;
    let mut csv = Vec::new();
    write_candidates_csv(&ranked, &mut csv).map_err(|e| CliError::Io(e.to_string()))?;
    write(&dir, "candidates.csv", &csv)?;
    let top: Vec<&Candidate> = ranked.iter().take(args.top_k).collect();
    write(&dir, "top.json", &json(&top)?)?;
    let best = ranked.iter().find(|c| c.stable).ok_or_else(|| CliError::Sim("no stable candidate".into()))?;
    let preset = export_preset(best, oc.grid.strategy, oc.grid.gait.name()).map_err(|e| CliError::Sim(e.to_string()))?;
    write(&dir, "preset.toml", preset.to_toml().as_bytes())?;
    println!("best cost {} with {:?}", best.cost, best.assignment);
    Ok(dir)
}

#[derive(Debug, Clone, Args)]
pub struct ScoreArgs {
    /// Votes CSV.
    #[arg(long)]
    pub votes: PathBuf,
    #[arg(long, value_parser = parse_strategy, default_value = "fixed")]
    pub baseline: StrategyId,
    /// Contradictory answers that drop a participant.
    #[arg(long, default_value_t = CONTRADICTION_THRESHOLD)]
    pub threshold: usize,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct StudyReport<'a> {
    records: usize,
    kept_records: usize,
    dropped: &'a [String],
    interact_match_rate: f64,
    naturalness: &'a ScoreReport,
}

fn study_error(e: StudyError) -> CliError {
    match e {
        StudyError::Io(e) => CliError::Io(e.to_string()),
        StudyError::EmptyInput => CliError::Empty(e.to_string()),
        StudyError::Schema { .. } | StudyError::BaselineMissing { .. } => CliError::Schema(e.to_string()),
    }
}

pub fn score(args: &ScoreArgs) -> Result<PathBuf, CliError> {
    if args.threshold == 0 {
        return Err(CliError::Config("threshold must be at least 1".into()));
    }
    let records = load_votes(&args.votes).map_err(study_error)?;
    if records.is_empty() {
        return Err(study_error(StudyError::EmptyInput));
    }
    let (kept, dropped) = validate_participants(&records, args.threshold);
    let rate = interact_match_rate(&kept).map_err(study_error)?;
    let report = naturalness_scores(&kept, args.baseline).map_err(study_error)?;

    let dir = output_dir(args.output.as_deref(), "study");
    create(&dir)?;
    let summary = StudyReport { records: records.len(), kept_records: kept.len(), dropped: &dropped, interact_match_rate: rate, naturalness: &report };
    write(&dir, "report.json", &json(&summary)?)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(["gait", "strategy", "score", "votes"]).map_err(io)?;
    let rows = report.scores.iter().map(|(s, sc)| ("all", s, sc)).chain(
        report.per_gait.iter().flat_map(|(g, m)| m.iter().map(move |(s, sc)| (g.name(), s, sc))),
    );
    for (g, s, sc) in rows {
        w.write_record([g, s.name(), &sc.score.to_string(), &sc.votes.to_string()]).map_err(io)?;
    }
    write(&dir, "breakdown.csv", &w.into_inner().map_err(|e| CliError::Io(e.to_string()))?)?;
    let mut list = dropped.join("\n");
    if !list.is_empty() {
        list.push('\n');
    }
    write(&dir, "dropped.txt", list.as_bytes())?;
    println!("match rate {rate:.4}, total naturalness {:.4}, dropped {}", report.total, dropped.len());
    Ok(dir)
}
