//! The four subcommands as library functions, so tests can drive them
//! without spawning processes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ijvtrack::contour::resample;
use ijvtrack::fb::FbParams;
use ijvtrack::hs::HsParams;
use ijvtrack::lk::LkParams;
use ijvtrack::metrics::{aggregate, detect_failure, FailureVerdict};
use ijvtrack::{
    contour_area, contour_to_mask, dice, Algorithm, Contour, DiceSeries, Phantom, PhantomConfig,
    SequenceTracker, TrackerConfig,
};

use crate::config::{format_config, parse_config};
use crate::dataset::{
    contour_name, frame_name, numbered_files, read_contour, read_mask, write_contour, write_pgm,
    Dataset, CONTOURS_DIR, TRUTH_DIR,
};

pub const CONFIG_ECHO: &str = "config.txt";
pub const CSA_CSV: &str = "csa.csv";
pub const DICE_CSV: &str = "dice.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const CURVE_CSV: &str = "mean_dice_curve.csv";
pub const SUCCESS_CSV: &str = "success_counts.csv";

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Writes a phantom dataset. `seed` and `frames` override the config file.
pub fn cmd_synth(
    config_path: Option<&Path>,
    out: &Path,
    seed: Option<u64>,
    frames: Option<usize>,
) -> Result<PhantomConfig> {
    let mut config = match config_path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            parse_config(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => PhantomConfig::default(),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(n) = frames {
        config.frame_count = n;
    }
    let phantom = Phantom::new(config.clone())?;

    let truth_dir = out.join(TRUTH_DIR);
    let contour_dir = out.join(CONTOURS_DIR);
    for d in [out, &truth_dir, &contour_dir] {
        create_dir(d)?;
    }
    write_text(&out.join(CONFIG_ECHO), &format_config(&config))?;
    let (w, h) = (config.width, config.height);
    for t in 0..config.frame_count {
        write_pgm(&out.join(frame_name(t)), w, h, &phantom.frame(t)?.to_u8())?;
        write_pgm(
            &truth_dir.join(frame_name(t)),
            w,
            h,
            &phantom.truth_mask(t)?.to_u8(),
        )?;
        write_contour(
            &contour_dir.join(contour_name(t)),
            &phantom.truth_contour(t)?,
        )?;
    }
    Ok(config)
}

/// Tracker flags shared by `track` and `compare`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackOptions {
    pub levels: usize,
    /// LK window length and FB aggregation window.
    pub window: usize,
    pub alpha: f64,
    /// HS Jacobi iterations per level.
    pub iters: usize,
    pub points: usize,
}

impl Default for TrackOptions {
    fn default() -> Self {
        Self {
            levels: 3,
            window: 20,
            alpha: 1.0,
            iters: 250,
            points: 32,
        }
    }
}

impl TrackOptions {
    pub fn tracker_config(&self, algo: &str) -> Result<TrackerConfig> {
        let algorithm = match algo {
            "lk" => Algorithm::Lk(LkParams {
                level_count: self.levels,
                ..LkParams::with_window(self.window)
            }),
            "hs" => Algorithm::Hs(HsParams {
                alpha: self.alpha,
                iterations: self.iters,
                level_count: self.levels,
            }),
            "fb" => Algorithm::Fb(FbParams {
                avg_window: self.window,
                level_count: self.levels,
                ..FbParams::default()
            }),
            other => bail!("unknown algorithm '{other}' (expected lk, hs or fb)"),
        };
        let config = TrackerConfig {
            algorithm,
            point_count: self.points,
        };
        config.validate()?;
        Ok(config)
    }
}

fn csa_csv(contours: &[Contour]) -> String {
    let mut s = String::from("frame,csa_px2\n");
    for (i, c) in contours.iter().enumerate() {
        let _ = writeln!(s, "{i},{:.6}", contour_area(c));
    }
    s
}

/// Tracks the dataset from `init` (default: the dataset's own frame-0
/// contour) and writes one contour file per frame plus `csa.csv`.
pub fn cmd_track(
    dataset_dir: &Path,
    algo: &str,
    init: Option<&Path>,
    opts: &TrackOptions,
    out: &Path,
) -> Result<Vec<Contour>> {
    let config = opts.tracker_config(algo)?;
    let ds = Dataset::open(dataset_dir)?;
    let init_path = init
        .map(Path::to_path_buf)
        .unwrap_or_else(|| ds.initial_contour_path());
    let mut initial = read_contour(&init_path)?;
    if initial.len() != opts.points {
        initial = resample(&initial, opts.points)?;
    }
    let initial = Contour::new(initial.points().to_vec(), 0)?;

    let first = ds.frame(0)?;
    if let Some(&(x, y)) = initial
        .points()
        .iter()
        .find(|&&(x, y)| !first.contains(x, y))
    {
        bail!(
            "initial contour point ({x}, {y}) lies outside the {}x{} frame",
            ds.width,
            ds.height
        );
    }

    let mut tracker = SequenceTracker::new(initial.clone(), first, config)?;
    let mut contours = vec![initial];
    for i in 1..ds.len() {
        let c = tracker
            .push(ds.frame(i)?)
            .with_context(|| format!("tracking into frame {i}"))?;
        contours.push(c.clone());
    }

    create_dir(out)?;
    for (i, c) in contours.iter().enumerate() {
        write_contour(&out.join(contour_name(i)), c)?;
    }
    write_text(&out.join(CSA_CSV), &csa_csv(&contours))?;
    Ok(contours)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub series: DiceSeries,
    pub areas: Vec<f64>,
    pub verdict: FailureVerdict,
}

impl EvalReport {
    /// `PASS` or `FAIL@<first failing frame>`.
    pub fn verdict_line(&self) -> String {
        match self.verdict.first_failure {
            Some(i) => format!("FAIL@{i}"),
            None => "PASS".to_string(),
        }
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("frame,dice,csa_px2\n");
        for (i, (d, a)) in self.series.values().iter().zip(&self.areas).enumerate() {
            let _ = writeln!(s, "{i},{d:.6},{a:.6}");
        }
        s
    }
}

/// Scores tracked contours against truth masks. A `truth` directory holding
/// a `truth/` subdirectory (a dataset root) is accepted too.
pub fn cmd_eval(tracked: &Path, truth: &Path, out: Option<&Path>) -> Result<EvalReport> {
    let truth_dir = if truth.join(TRUTH_DIR).is_dir() {
        truth.join(TRUTH_DIR)
    } else {
        truth.to_path_buf()
    };
    let contour_files = numbered_files(tracked, "txt")?;
    if contour_files.is_empty() {
        bail!("{}: no frame_NNNNN.txt contour files", tracked.display());
    }
    let mask_files = numbered_files(&truth_dir, "pgm")?;
    if mask_files.len() != contour_files.len() {
        bail!(
            "{} tracked contours but {} truth masks",
            contour_files.len(),
            mask_files.len()
        );
    }
    let mut values = Vec::with_capacity(contour_files.len());
    let mut areas = Vec::with_capacity(contour_files.len());
    for (cp, mp) in contour_files.iter().zip(&mask_files) {
        let c = read_contour(cp)?;
        let truth_mask = read_mask(mp)?;
        let m = contour_to_mask(&c, truth_mask.width(), truth_mask.height());
        values.push(dice(&m, &truth_mask)?);
        areas.push(contour_area(&c));
    }
    let series = DiceSeries::new(values)?;
    let verdict = detect_failure(&series)?;
    let report = EvalReport {
        series,
        areas,
        verdict,
    };
    if let Some(p) = out {
        if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            create_dir(parent)?;
        }
        write_text(p, &report.csv())?;
    }
    Ok(report)
}

/// One (dataset, algorithm) cell of a comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub dataset: PathBuf,
    pub algo: String,
    pub outcome: std::result::Result<EvalReport, String>,
}

impl CellResult {
    pub fn mean_dice(&self) -> Option<f64> {
        self.outcome.as_ref().ok().map(|r| r.series.mean())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub cells: Vec<CellResult>,
    /// Per algorithm, in flag order: `(name, successes, evaluated cells)`.
    pub success_counts: Vec<(String, usize, usize)>,
    /// Per algorithm, in flag order: mean DICE per frame over datasets.
    pub curves: Vec<(String, Vec<f64>)>,
}

fn run_cell(
    dataset: &Path,
    algo: &str,
    opts: &TrackOptions,
    cell_dir: &Path,
) -> Result<EvalReport> {
    let tracked = cell_dir.join("contours");
    cmd_track(dataset, algo, None, opts, &tracked)?;
    cmd_eval(
        &tracked,
        &dataset.join(TRUTH_DIR),
        Some(&cell_dir.join(DICE_CSV)),
    )
}

/// Runs track + eval for every dataset and algorithm. A failing cell is
/// recorded in the summary and the run carries on.
pub fn cmd_compare(
    datasets: &[PathBuf],
    algos: &[String],
    opts: &TrackOptions,
    out: &Path,
) -> Result<CompareReport> {
    if datasets.is_empty() {
        bail!("no datasets given");
    }
    if algos.is_empty() {
        bail!("no algorithms given");
    }
    for a in algos {
        opts.tracker_config(a)?;
    }
    create_dir(out)?;

    let mut cells = Vec::new();
    for (di, ds) in datasets.iter().enumerate() {
        for algo in algos {
            let cell_dir = out.join("cells").join(format!("{di:03}_{algo}"));
            let outcome = run_cell(ds, algo, opts, &cell_dir).map_err(|e| format!("{e:#}"));
            cells.push(CellResult {
                dataset: ds.clone(),
                algo: algo.clone(),
                outcome,
            });
        }
    }

    let mut summary =
        String::from("dataset,algo,mean_dice,min_dice,frames,success,first_failure,error\n");
    for c in &cells {
        let ds = c.dataset.display();
        match &c.outcome {
            Ok(r) => {
                let ff = r
                    .verdict
                    .first_failure
                    .map(|i| i.to_string())
                    .unwrap_or_default();
                let _ = writeln!(
                    summary,
                    "{ds},{},{:.6},{:.6},{},{},{ff},",
                    c.algo,
                    r.series.mean(),
                    r.series.min(),
                    r.series.len(),
                    !r.verdict.failed
                );
            }
            Err(e) => {
                let msg = e.replace([',', '\n'], ";");
                let _ = writeln!(summary, "{ds},{},,,,false,,{msg}", c.algo);
            }
        }
    }
    write_text(&out.join(SUMMARY_CSV), &summary)?;

    let mut success_counts = Vec::new();
    let mut curves = Vec::new();
    for algo in algos {
        let series: Vec<DiceSeries> = cells
            .iter()
            .filter(|c| &c.algo == algo)
            .filter_map(|c| c.outcome.as_ref().ok().map(|r| r.series.clone()))
            .collect();
        let (successes, curve) = match aggregate(&series) {
            Ok(s) => (s.success_count, s.mean_curve),
            Err(_) => (0, Vec::new()),
        };
        success_counts.push((algo.clone(), successes, series.len()));
        curves.push((algo.clone(), curve));
    }

    let mut counts = String::from("algo,success_count,evaluated,datasets\n");
    for (algo, s, n) in &success_counts {
        let _ = writeln!(counts, "{algo},{s},{n},{}", datasets.len());
    }
    write_text(&out.join(SUCCESS_CSV), &counts)?;

    let mut curve_csv = String::from("frame");
    for (algo, _) in &curves {
        curve_csv.push(',');
        curve_csv.push_str(algo);
    }
    curve_csv.push('\n');
    let frames = curves.iter().map(|(_, c)| c.len()).max().unwrap_or(0);
    for t in 0..frames {
        let _ = write!(curve_csv, "{t}");
        for (_, c) in &curves {
            match c.get(t) {
                Some(v) => {
                    let _ = write!(curve_csv, ",{v:.6}");
                }
                None => curve_csv.push(','),
            }
        }
        curve_csv.push('\n');
    }
    write_text(&out.join(CURVE_CSV), &curve_csv)?;

    Ok(CompareReport {
        cells,
        success_counts,
        curves,
    })
}
