//! Command implementations. Each takes a resolved config and run paths so
//! tests and the ablation driver can call them without a process boundary.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use cfl_core::data::{
    build_splits, load_hidden_annotations, load_labeled, load_test, load_unlabeled_images, write_dataset, Image,
    LabeledSample, SplitName, Target,
};
use cfl_core::detector::DetectorParams;
use cfl_core::eval::{evaluate, pseudo_label_quality, EvalResult, PseudoLabelQuality};
use cfl_core::pipeline::{
    generate_pseudo_labels, predict_all, train_stage1, train_stage2, PseudoLabelConfig, StepRecord, TrainState,
};
use cfl_core::{CflError, Detection, LabelSpace};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{write_atomic, Checkpoint};
use crate::config::RunConfig;
use crate::{draw, Command, ConfigArgs, NetArg, SplitArg, StageArg};

#[derive(Debug)]
pub enum CommandError {
    /// Bad arguments or configuration; exit code 1.
    Usage(String),
    /// Anything that failed while running; exit code 2.
    Runtime(CflError),
}

impl fmt::Display for CommandError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CommandError::Usage(m) => write!(f, "{m}"),
            CommandError::Runtime(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CommandError {}

impl From<CflError> for CommandError {
    fn from(e: CflError) -> Self {
        CommandError::Runtime(e)
    }
}

impl From<std::io::Error> for CommandError {
    fn from(e: std::io::Error) -> Self {
        CommandError::Runtime(e.into())
    }
}

pub type CmdResult<T> = std::result::Result<T, CommandError>;

/// Where a run reads its data and writes its outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunPaths {
    pub root: PathBuf,
    pub data: PathBuf,
}

impl RunPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        let root = root.into();
        Self { data: root.join("data"), root }
    }

    pub fn for_config(cfg: &RunConfig) -> Self {
        Self::new(cfg.run_dir())
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    pub fn stage_checkpoint(&self, stage: u8) -> PathBuf {
        self.checkpoints().join(format!("stage{stage}.ckpt"))
    }

    pub fn latest_checkpoint(&self) -> PathBuf {
        self.checkpoints().join("latest.ckpt")
    }

    pub fn diverged_checkpoint(&self) -> PathBuf {
        self.checkpoints().join("diverged.ckpt")
    }

    pub fn train_log(&self) -> PathBuf {
        self.root.join("logs").join("train_log.jsonl")
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.root.join("eval")
    }

    pub fn ablation_dir(&self) -> PathBuf {
        self.root.join("ablation")
    }

    pub fn report_dir(&self) -> PathBuf {
        self.root.join("report")
    }

    pub fn resolved_config(&self) -> PathBuf {
        self.root.join("resolved_config.txt")
    }
}

pub fn resolve_config(args: &ConfigArgs) -> CmdResult<RunConfig> {
    match &args.config {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
    .and_then(|mut c| c.apply_overrides(&args.overrides).map(|_| c))
    .and_then(|c| c.validate().map(|_| c))
    .map_err(|e| CommandError::Usage(e.to_string()))
}

fn echo_config(cfg: &RunConfig, paths: &RunPaths) -> CmdResult<()> {
    write_atomic(&paths.resolved_config(), cfg.to_text().as_bytes())?;
    Ok(())
}

pub fn dispatch(command: Command) -> CmdResult<()> {
    match command {
        Command::MakeSplits { cfg, force } => {
            let cfg = resolve_config(&cfg)?;
            let paths = RunPaths::for_config(&cfg);
            make_splits(&cfg, &paths, force)
        }
        Command::Train { cfg, stage, resume } => {
            let cfg = resolve_config(&cfg)?;
            let paths = RunPaths::for_config(&cfg);
            train(&cfg, &paths, stage, resume).map(|_| ())
        }
        Command::Eval { cfg, checkpoint, split, net } => {
            let cfg = resolve_config(&cfg)?;
            let paths = RunPaths::for_config(&cfg);
            let ckpt = checkpoint.unwrap_or_else(|| paths.latest_checkpoint());
            let report = eval_checkpoint(&cfg, &paths, &ckpt, split, net)?;
            println!("{}", report.result.to_text(&report.space));
            Ok(())
        }
        Command::Ablate { cfg } => {
            let cfg = resolve_config(&cfg)?;
            let paths = RunPaths::for_config(&cfg);
            let table = ablate(&cfg, &paths)?;
            print!("{}", table.to_text());
            Ok(())
        }
        Command::Report { cfg } => {
            let cfg = resolve_config(&cfg)?;
            report(&RunPaths::for_config(&cfg))
        }
    }
}

/// Render the three splits. Refuses to touch an existing data directory
/// unless `force` is set; a forced rebuild replaces it in one rename.
pub fn make_splits(cfg: &RunConfig, paths: &RunPaths, force: bool) -> CmdResult<()> {
    if paths.data.exists() && !force {
        return Err(CommandError::Runtime(CflError::Contract(format!(
            "{} already exists; pass --force to rebuild it",
            paths.data.display()
        ))));
    }
    fs::create_dir_all(&paths.root)?;
    echo_config(cfg, paths)?;
    let ds = build_splits(&cfg.split)?;
    let staging = paths.root.join(format!(".data.tmp{}", std::process::id()));
    if staging.exists() {
        fs::remove_dir_all(&staging)?;
    }
    write_dataset(&staging, &ds)?;
    if paths.data.exists() {
        fs::remove_dir_all(&paths.data)?;
    }
    fs::rename(&staging, &paths.data)?;
    log::info!(
        "wrote {} labeled, {} unlabeled, {} test images to {}",
        ds.labeled.len(),
        ds.unlabeled.len(),
        ds.test.len(),
        paths.data.display()
    );
    Ok(())
}

fn require_splits(paths: &RunPaths) -> CmdResult<()> {
    for split in SplitName::ALL {
        let p = split.manifest_path(&paths.data);
        if !p.exists() {
            return Err(CommandError::Runtime(CflError::Contract(format!(
                "split manifest {} is missing; run make-splits first",
                p.display()
            ))));
        }
    }
    Ok(())
}

/// Splits loaded into memory.
pub struct LoadedData {
    pub labeled: Vec<LabeledSample>,
    pub unlabeled: Vec<Image>,
    pub hidden: Vec<Vec<Target>>,
    pub test: Vec<LabeledSample>,
}

impl LoadedData {
    pub fn load(paths: &RunPaths) -> CmdResult<Self> {
        require_splits(paths)?;
        let hidden = load_hidden_annotations(&paths.data)?
            .iter()
            .map(|anns| anns.iter().map(|a| a.target()).collect::<cfl_core::Result<Vec<_>>>())
            .collect::<cfl_core::Result<Vec<_>>>()?;
        Ok(Self {
            labeled: load_labeled(&paths.data)?,
            unlabeled: load_unlabeled_images(&paths.data)?.into_iter().map(|(_, img)| img).collect(),
            hidden,
            test: load_test(&paths.data)?,
        })
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLine {
    pub iteration: u64,
    pub stage: u8,
    pub total: f64,
    pub l_rpn_cls: f64,
    pub l_rpn_reg: f64,
    pub l_roi_reg: f64,
    pub l_roi_ce: f64,
    pub l_fc: f64,
    pub l_uc: f64,
    pub u_rpn_cls: f64,
    pub u_roi_ce: f64,
    pub u_fc: f64,
    pub u_uc: f64,
    pub alpha_t: f64,
    pub pool_occupancy: Vec<usize>,
    pub pseudo_labels: usize,
    pub pseudo_unknown: usize,
    pub grad_norm: f64,
}

impl From<&StepRecord> for LogLine {
    fn from(r: &StepRecord) -> Self {
        Self {
            iteration: r.iteration,
            stage: r.stage,
            total: r.total,
            l_rpn_cls: r.sup.rpn_cls,
            l_rpn_reg: r.sup.rpn_reg,
            l_roi_reg: r.sup.roi_reg,
            l_roi_ce: r.sup.roi_ce,
            l_fc: r.sup.fc,
            l_uc: r.sup.uc,
            u_rpn_cls: r.unsup.rpn_cls,
            u_roi_ce: r.unsup.roi_ce,
            u_fc: r.unsup.fc,
            u_uc: r.unsup.uc,
            alpha_t: r.alpha_t,
            pool_occupancy: r.pool_occupancy.clone(),
            pseudo_labels: r.pseudo_labels,
            pseudo_unknown: r.pseudo_unknown,
            grad_norm: r.grad_norm,
        }
    }
}

pub fn read_log(path: &Path) -> CmdResult<Vec<LogLine>> {
    let f = File::open(path).map_err(|e| {
        CommandError::Runtime(CflError::Contract(format!("cannot open training log {}: {e}", path.display())))
    })?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line).map_err(CflError::from)?);
        }
    }
    Ok(out)
}

/// Keep only log lines before `iteration` (used when resuming).
fn truncate_log(path: &Path, iteration: u64) -> CmdResult<()> {
    if !path.exists() {
        return Ok(());
    }
    let kept: Vec<_> = read_log(path)?.into_iter().filter(|l| l.iteration < iteration).collect();
    let mut buf = Vec::new();
    for l in &kept {
        serde_json::to_writer(&mut buf, l).map_err(CflError::from)?;
        buf.push(b'\n');
    }
    write_atomic(path, &buf)?;
    Ok(())
}

fn open_log(path: &Path, append: bool) -> CmdResult<BufWriter<File>> {
    fs::create_dir_all(path.parent().expect("log lives in a directory"))?;
    let f = fs::OpenOptions::new().create(true).write(true).append(append).truncate(!append).open(path)?;
    Ok(BufWriter::new(f))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSummary {
    pub iterations: u64,
    pub seconds: f64,
}

fn run_stage(
    cfg: &RunConfig,
    paths: &RunPaths,
    data: &LoadedData,
    state: &mut TrainState,
    stage: u8,
    log: &mut BufWriter<File>,
) -> CmdResult<()> {
    let every = cfg.checkpoint_every;
    let done_stage = stage - 1;
    let mut observer = |s: &TrainState, rec: &StepRecord| -> cfl_core::Result<()> {
        serde_json::to_writer(&mut *log, &LogLine::from(rec))?;
        log.write_all(b"\n")?;
        let it = s.iteration;
        if it % 100 == 0 {
            log::info!("stage {stage} iteration {it} loss {:.4}", rec.total);
        }
        if every > 0 && it % every == 0 {
            log.flush()?;
            Checkpoint { config: cfg.clone(), stage: done_stage, state: s.clone() }
                .save(&paths.latest_checkpoint())
                .map_err(|e| CflError::Contract(format!("periodic checkpoint: {e}")))?;
        }
        Ok(())
    };
    let result = if stage == 1 {
        train_stage1(state, &data.labeled, &cfg.schedule, &mut observer)
    } else {
        train_stage2(state, &data.labeled, &data.unlabeled, &cfg.schedule, &mut observer)
    };
    log.flush()?;
    if let Err(e) = result {
        if matches!(e, CflError::Diverged { .. }) {
            let path = paths.diverged_checkpoint();
            Checkpoint { config: cfg.clone(), stage: done_stage, state: state.clone() }.save(&path)?;
            log::error!("training diverged; state dumped to {}", path.display());
        }
        return Err(e.into());
    }
    let ck = Checkpoint { config: cfg.clone(), stage, state: state.clone() };
    ck.save(&paths.stage_checkpoint(stage))?;
    ck.save(&paths.latest_checkpoint())?;
    Ok(())
}

pub fn train(cfg: &RunConfig, paths: &RunPaths, stage: StageArg, resume: bool) -> CmdResult<TrainSummary> {
    let data = LoadedData::load(paths)?;
    train_with_data(cfg, paths, &data, stage, resume)
}

pub fn train_with_data(
    cfg: &RunConfig,
    paths: &RunPaths,
    data: &LoadedData,
    stage: StageArg,
    resume: bool,
) -> CmdResult<TrainSummary> {
    fs::create_dir_all(paths.checkpoints())?;
    echo_config(cfg, paths)?;
    let start = Instant::now();
    let log_path = paths.train_log();

    let mut state = if stage == StageArg::Two {
        let p = paths.stage_checkpoint(1);
        if !p.exists() {
            return Err(CommandError::Runtime(CflError::Contract(format!(
                "stage 2 needs the stage-1 checkpoint {}, which does not exist",
                p.display()
            ))));
        }
        let ck = Checkpoint::load(&p)?;
        truncate_log(&log_path, ck.state.iteration)?;
        ck.state
    } else {
        let latest = paths.latest_checkpoint();
        match (resume, latest.exists()) {
            (true, true) => {
                let ck = Checkpoint::load(&latest)?;
                if ck.stage != 0 {
                    return Err(CommandError::Usage(format!(
                        "{} holds a finished stage {}; nothing to resume in stage 1",
                        latest.display(),
                        ck.stage
                    )));
                }
                truncate_log(&log_path, ck.state.iteration)?;
                ck.state
            }
            _ => {
                truncate_log(&log_path, 0)?;
                TrainState::new(cfg.detector(), &cfg.schedule, cfg.seed)?
            }
        }
    };
    let start_iter = state.iteration;
    let mut log = open_log(&log_path, true)?;
    if stage != StageArg::Two {
        run_stage(cfg, paths, data, &mut state, 1, &mut log)?;
    }
    if stage != StageArg::One {
        run_stage(cfg, paths, data, &mut state, 2, &mut log)?;
    }
    Ok(TrainSummary { iterations: state.iteration - start_iter, seconds: start.elapsed().as_secs_f64() })
}

/// Metrics for one (checkpoint, split, net) combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: String,
    pub net: String,
    pub iteration: u64,
    pub result: EvalResult,
    /// Teacher-style pseudo-label quality; present for the unlabeled split.
    pub pseudo: Option<PseudoLabelQuality>,
    #[serde(skip, default = "default_space")]
    pub space: LabelSpace,
}

fn default_space() -> LabelSpace {
    LabelSpace::new(1).expect("one class is valid")
}

fn split_name(s: SplitArg) -> &'static str {
    match s {
        SplitArg::Test => "test",
        SplitArg::UnlabeledDiagnostic => "unlabeled-diagnostic",
    }
}

fn net_name(n: NetArg) -> &'static str {
    match n {
        NetArg::Teacher => "teacher",
        NetArg::Student => "student",
    }
}

/// Pseudo-labels the network would emit for every unlabeled image, scored
/// against the hidden annotations.
pub fn pseudo_quality(params: &DetectorParams, cfg: &RunConfig, data: &LoadedData) -> CmdResult<PseudoLabelQuality> {
    let pl = PseudoLabelConfig { threshold: cfg.schedule.pseudo_threshold, nms_iou: cfg.schedule.pseudo_nms };
    let pseudo = data
        .unlabeled
        .iter()
        .map(|img| generate_pseudo_labels(params, img, &pl))
        .collect::<cfl_core::Result<Vec<_>>>()?;
    Ok(pseudo_label_quality(&pseudo, &data.hidden, &params.config.label_space())?)
}

pub fn eval_checkpoint(
    cfg: &RunConfig,
    paths: &RunPaths,
    ckpt: &Path,
    split: SplitArg,
    net: NetArg,
) -> CmdResult<EvalReport> {
    let ck = Checkpoint::load(ckpt)?;
    let data = LoadedData::load(paths)?;
    eval_state(cfg, paths, &ck, &data, split, net)
}

pub fn eval_state(
    cfg: &RunConfig,
    paths: &RunPaths,
    ck: &Checkpoint,
    data: &LoadedData,
    split: SplitArg,
    net: NetArg,
) -> CmdResult<EvalReport> {
    let params = match net {
        NetArg::Teacher => &ck.state.teacher,
        NetArg::Student => &ck.state.student,
    };
    let space = params.config.label_space();
    let (images, gts): (Vec<&Image>, Vec<Vec<Target>>) = match split {
        SplitArg::Test => data.test.iter().map(|s| (&s.image, s.targets.clone())).unzip(),
        SplitArg::UnlabeledDiagnostic => (data.unlabeled.iter().collect(), data.hidden.clone()),
    };
    let preds = predict_all(params, &images, cfg.eval_score_threshold as f32, cfg.eval_nms)?;
    let result = evaluate(&preds, &gts, &space)?;
    let pseudo = match split {
        SplitArg::UnlabeledDiagnostic => Some(pseudo_quality(params, cfg, data)?),
        SplitArg::Test => None,
    };
    let report = EvalReport {
        split: split_name(split).into(),
        net: net_name(net).into(),
        iteration: ck.state.iteration,
        result,
        pseudo,
        space,
    };

    let stem = format!("{}_{}", report.split, report.net);
    let dir = paths.eval_dir();
    fs::create_dir_all(&dir)?;
    let mut text = report.result.to_text(&space);
    if let Some(q) = &report.pseudo {
        text.push_str(&format!(
            "pseudo_precision {}\npseudo_recall {}\nood_contamination {}\npseudo_id {}\npseudo_unknown {}\n",
            q.precision, q.recall, q.ood_contamination, q.num_id_pseudo, q.num_unknown_pseudo
        ));
    }
    write_atomic(&dir.join(format!("{stem}.txt")), text.as_bytes())?;
    write_atomic(&dir.join(format!("{stem}.json")), &serde_json::to_vec_pretty(&report).map_err(CflError::from)?)?;

    let img_dir = dir.join(&stem);
    fs::create_dir_all(&img_dir)?;
    for (i, (img, dets)) in images.iter().zip(&preds).enumerate().take(cfg.eval_images) {
        let canvas = annotate(img, dets, &ck.config, &space);
        canvas.save(img_dir.join(format!("{i:04}.png"))).map_err(CflError::from)?;
    }
    Ok(report)
}

const ANNOTATION_SCALE: u32 = 4;

/// Upscaled image with one box per detection. ID classes use palette
/// colours and solid outlines; unknown uses magenta dashed outlines.
pub fn annotate(img: &Image, dets: &[Detection], cfg: &RunConfig, space: &LabelSpace) -> image::RgbImage {
    let s = ANNOTATION_SCALE;
    let small = img.to_rgb8();
    let mut out = image::imageops::resize(
        &small,
        small.width() * s,
        small.height() * s,
        image::imageops::FilterType::Nearest,
    );
    for d in dets {
        let unknown = space.is_unknown(d.class_id);
        let color = if unknown { draw::UNKNOWN } else { draw::PALETTE[d.class_id % draw::PALETTE.len()] };
        let b = d.bbox;
        let (x0, y0) = ((b.x_min * s as f32) as i64, (b.y_min * s as f32) as i64);
        let (x1, y1) = ((b.x_max * s as f32) as i64 - 1, (b.y_max * s as f32) as i64 - 1);
        draw::rect(&mut out, x0, y0, x1, y1, color, unknown);
        let name = cfg.class_name(d.class_id);
        let text = format!("{name} {:.2}", d.score);
        draw::label(&mut out, x0, (y0 - 7).max(0), &text, 1, draw::BLACK, color);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub enable_fc: bool,
    pub enable_uc: bool,
    pub lambda: f64,
    /// Which network the metrics come from.
    pub net: String,
    pub map_k: f64,
    pub ap_u: f64,
    pub ood_contamination: f64,
    pub pseudo_precision: f64,
    pub pseudo_recall: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    /// `(fc, uc)` in the order off/off, on/off, off/on, on/on.
    pub rows: Vec<AblationRow>,
    pub label_only: AblationRow,
}

impl AblationTable {
    pub fn row(&self, fc: bool, uc: bool) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.enable_fc == fc && r.enable_uc == uc)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("l_fc  l_uc  map_k   ap_u    contamination\n");
        let mark = |b: bool| if b { "on " } else { "off" };
        for r in &self.rows {
            s.push_str(&format!(
                "{}   {}   {:.4}  {:.4}  {:.4}\n",
                mark(r.enable_fc),
                mark(r.enable_uc),
                r.map_k,
                r.ap_u,
                r.ood_contamination
            ));
        }
        let b = &self.label_only;
        s.push_str(&format!(
            "label-only ({} net, lambda 0): map_k {:.4} ap_u {:.4}\n",
            b.net, b.map_k, b.ap_u
        ));
        s
    }
}

pub const ABLATION_GRID: [(bool, bool); 4] = [(false, false), (true, false), (false, true), (true, true)];

/// Train and score one configuration in `root` against shared data.
pub fn ablation_run(
    name: &str,
    cfg: &RunConfig,
    root: &Path,
    data_root: &Path,
    data: &LoadedData,
    net: NetArg,
) -> CmdResult<AblationRow> {
    let paths = RunPaths { root: root.to_path_buf(), data: data_root.to_path_buf() };
    let summary = train_with_data(cfg, &paths, data, StageArg::Both, false)?;
    let ck = Checkpoint::load(&paths.stage_checkpoint(2))?;
    let test = eval_state(cfg, &paths, &ck, data, SplitArg::Test, net)?;
    let diag = eval_state(cfg, &paths, &ck, data, SplitArg::UnlabeledDiagnostic, net)?;
    let q = diag.pseudo.expect("diagnostic split carries pseudo-label quality");
    log::info!("{name}: map_k {:.4} ap_u {:.4} contamination {:.4}", test.result.map_k, test.result.ap_u, q.ood_contamination);
    Ok(AblationRow {
        name: name.to_string(),
        enable_fc: cfg.schedule.enable_fc,
        enable_uc: cfg.schedule.enable_uc,
        lambda: cfg.schedule.lambda,
        net: net_name(net).into(),
        map_k: test.result.map_k,
        ap_u: test.result.ap_u,
        ood_contamination: q.ood_contamination,
        pseudo_precision: q.precision,
        pseudo_recall: q.recall,
        seconds: summary.seconds,
    })
}

/// The enable_fc x enable_uc grid with equal seeds and budgets, plus a
/// closed-set label-only run (lambda = 0, both terms off) over the same
/// number of iterations. Every row is scored with its EMA teacher.
pub fn ablate(cfg: &RunConfig, paths: &RunPaths) -> CmdResult<AblationTable> {
    let data = LoadedData::load(paths)?;
    fs::create_dir_all(paths.ablation_dir())?;
    echo_config(cfg, paths)?;
    let mut rows = Vec::new();
    for (fc, uc) in ABLATION_GRID {
        let mut c = cfg.clone();
        c.schedule.enable_fc = fc;
        c.schedule.enable_uc = uc;
        let name = format!("fc{}_uc{}", fc as u8, uc as u8);
        rows.push(ablation_run(&name, &c, &paths.ablation_dir().join(&name), &paths.data, &data, NetArg::Teacher)?);
    }
    let mut c = cfg.clone();
    c.schedule.lambda = 0.0;
    c.schedule.enable_fc = false;
    c.schedule.enable_uc = false;
    let label_only =
        ablation_run("label_only", &c, &paths.ablation_dir().join("label_only"), &paths.data, &data, NetArg::Teacher)?;
    let table = AblationTable { rows, label_only };
    let dir = paths.ablation_dir();
    write_atomic(&dir.join("table.txt"), table.to_text().as_bytes())?;
    write_atomic(&dir.join("table.json"), &serde_json::to_vec_pretty(&table).map_err(CflError::from)?)?;
    Ok(table)
}

fn moving_average(points: &[(f64, f64)], window: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(points.len());
    let mut sum = 0.0;
    for i in 0..points.len() {
        sum += points[i].1;
        if i >= window {
            sum -= points[i - window].1;
        }
        let n = (i + 1).min(window) as f64;
        out.push((points[i].0, sum / n));
    }
    out
}

/// Loss curves from the training log and, when present, the ablation table.
pub fn report(paths: &RunPaths) -> CmdResult<()> {
    let dir = paths.report_dir();
    fs::create_dir_all(&dir)?;
    let log_path = paths.train_log();
    let table_path = paths.ablation_dir().join("table.json");
    if !log_path.exists() && !table_path.exists() {
        return Err(CommandError::Runtime(CflError::Contract(format!(
            "nothing to report: neither {} nor {} exists",
            log_path.display(),
            table_path.display()
        ))));
    }
    if log_path.exists() {
        let lines = read_log(&log_path)?;
        let column = |f: fn(&LogLine) -> f64| -> Vec<(f64, f64)> {
            moving_average(&lines.iter().map(|l| (l.iteration as f64, f(l))).collect::<Vec<_>>(), 25)
        };
        let cols: Vec<(&str, Vec<(f64, f64)>)> = vec![
            ("total", column(|l| l.total)),
            ("rpn_cls", column(|l| l.l_rpn_cls)),
            ("roi_ce", column(|l| l.l_roi_ce)),
            ("roi_reg", column(|l| l.l_roi_reg)),
            ("l_fc", column(|l| l.l_fc)),
            ("l_uc", column(|l| l.l_uc)),
            ("u_uc", column(|l| l.u_uc)),
        ];
        let series: Vec<_> = cols.iter().map(|(n, p)| draw::Series { name: n, points: p }).collect();
        draw::line_plot("training losses (moving average)", &series, 900, 420)
            .save(dir.join("loss_curves.png"))
            .map_err(CflError::from)?;
    }
    if table_path.exists() {
        let table: AblationTable =
            serde_json::from_slice(&fs::read(&table_path)?).map_err(CflError::from)?;
        let mark = |b: bool| if b { "on" } else { "off" }.to_string();
        let mut rows: Vec<Vec<String>> = table
            .rows
            .iter()
            .map(|r| {
                vec![
                    mark(r.enable_fc),
                    mark(r.enable_uc),
                    format!("{:.4}", r.map_k),
                    format!("{:.4}", r.ap_u),
                    format!("{:.4}", r.ood_contamination),
                ]
            })
            .collect();
        let b = &table.label_only;
        rows.push(vec![
            "label".into(),
            "only".into(),
            format!("{:.4}", b.map_k),
            format!("{:.4}", b.ap_u),
            "-".into(),
        ]);
        draw::table("component ablation", &["l_fc", "l_uc", "map_k", "ap_u", "contamination"], &rows)
            .save(dir.join("ablation_table.png"))
            .map_err(CflError::from)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moving_average_matches_direct_means() {
        let pts: Vec<_> = (0..6).map(|i| (i as f64, i as f64)).collect();
        let ma = moving_average(&pts, 3);
        assert_eq!(ma[0].1, 0.0);
        assert_eq!(ma[1].1, 0.5);
        assert_eq!(ma[5].1, 4.0);
    }

    #[test]
    fn run_paths_layout() {
        let p = RunPaths::new("/r");
        assert_eq!(p.data, PathBuf::from("/r/data"));
        assert_eq!(p.stage_checkpoint(1), PathBuf::from("/r/checkpoints/stage1.ckpt"));
        assert_eq!(p.train_log(), PathBuf::from("/r/logs/train_log.jsonl"));
    }
}
