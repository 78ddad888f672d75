//! The `train`, `encode`, `retrieve`, `evaluate`, `plot` and `sweep`
//! commands as library functions. The `dagh` binary only parses arguments
//! and maps errors to exit codes with [`exit_code`].
//!
//! A training run directory holds:
//!
//! ```text
//! config.toml          resolved experiment configuration
//! run.json             config snapshot, seed, crate version, summary
//! loss.csv, loss.json  per-epoch loss history
//! stage1/, stage2/     checkpoints
//! targets.dagh         attention-guided codes of the training set
//! data/<split>/        materialized splits (synthetic datasets only)
//! data/<split>.labels.json
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::attention::{attention_forward, normalize_map};
use crate::checkpoint::Checkpoint;
use crate::config::{DatasetConfig, ExperimentConfig};
use crate::datasets::{load_dataset, save_dataset, Dataset, LabelSet, Split};
use crate::error::{Error, Result};
use crate::metrics::{evaluate as evaluate_codes, label_relevance, EvalReport, EvalSettings, PR_CSV, P_AT_N_CSV, REPORT_FILE};
use crate::nn::Tensor;
use crate::plot::{attention_panel, save_png, LinePlot};
use crate::retrieval::{pack, rank_queries, PackedCodes};
use crate::trainer::{bit_agreement, encode_dataset, run_pipeline, STAGE2_DIR};

pub const RUN_MANIFEST: &str = "run.json";
pub const CONFIG_SNAPSHOT: &str = "config.toml";
pub const PR_PNG: &str = "pr_curve.png";
pub const P_AT_N_PNG: &str = "p_at_n.png";
pub const P_AT_H2_PNG: &str = "p_at_h2_vs_bits.png";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_TABLE: &str = "sweep.md";

/// 0 success, 2 usage or configuration, 3 data or format, 4 divergence.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 2,
        Error::InvalidInput(_) | Error::Io { .. } | Error::Format(_) => 3,
        Error::Divergence { .. } => 4,
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn labels_path(dir: &Path, split: Split) -> PathBuf {
    dir.join("data").join(format!("{split}.labels.json"))
}

/// Summary of a finished training run, also stored in `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub train_images: usize,
    pub stage1_first_loss: Option<f64>,
    pub stage1_last_loss: Option<f64>,
    pub stage2_last_guide: Option<f64>,
    pub final_beta: f64,
    /// Fraction of training-set bits where the final network agrees with
    /// the attention-guided targets.
    pub bit_agreement: f64,
}

/// Trains both stages and writes a run directory. `output` overrides the
/// configured directory (and the environment override).
pub fn train(config_path: &Path, output: Option<&Path>) -> Result<RunManifest> {
    let config = ExperimentConfig::load(config_path)?;
    let out = output.map(Path::to_path_buf).unwrap_or_else(|| config.resolved_output_dir());
    train_config(&config, &out)
}

/// [`train`] for an already loaded configuration.
pub fn train_config(config: &ExperimentConfig, out: &Path) -> Result<RunManifest> {
    let splits = config.dataset.load()?;
    fs::create_dir_all(out.join("data")).map_err(|e| Error::io(out, e))?;
    let snapshot = out.join(CONFIG_SNAPSHOT);
    fs::write(&snapshot, config.to_toml_string()).map_err(|e| Error::io(&snapshot, e))?;
    for split in [Split::Train, Split::Query, Split::Gallery] {
        let ds = splits.get(split);
        write_json(&ds.labels(), &labels_path(out, split))?;
        if matches!(config.dataset, DatasetConfig::Synthetic(_)) {
            save_dataset(ds, &out.join("data").join(split.to_string()))?;
        }
    }
    let state = run_pipeline(&splits.train, &config.model.networks(), &config.train, Some(out))?;
    let stage1: Vec<f64> = state.history.iter().filter(|e| e.sem.is_some()).map(|e| e.total).collect();
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.train.seed,
        config: config.clone(),
        train_images: splits.train.len(),
        stage1_first_loss: stage1.first().copied(),
        stage1_last_loss: stage1.last().copied(),
        stage2_last_guide: state.history.iter().rev().find_map(|e| e.guide),
        final_beta: state.beta,
        bit_agreement: bit_agreement(&splits.train, &state.hash2, &state.targets)?,
    };
    write_json(&manifest, &out.join(RUN_MANIFEST))?;
    Ok(manifest)
}

/// Where `encode` reads images from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// A directory written by `save_dataset`.
    Dir(PathBuf),
    /// One split of the dataset an experiment file describes.
    Config { config: PathBuf, split: Split },
}

impl DataSource {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DataSource::Dir(d) => load_dataset(d),
            DataSource::Config { config, split } => {
                let c = ExperimentConfig::load(config)?;
                Ok(c.dataset.load()?.get(*split).clone())
            }
        }
    }

    fn describe(&self) -> String {
        match self {
            DataSource::Dir(d) => d.display().to_string(),
            DataSource::Config { config, split } => format!("{}#{split}", config.display()),
        }
    }
}

/// Sidecar written next to every code file as `<file>.meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodesMeta {
    pub code_length: usize,
    pub count: usize,
    pub checkpoint: String,
    pub source: String,
    /// Mean wall-clock time to encode one image, in microseconds.
    pub encode_us_per_image: f64,
    pub labels: Vec<LabelSet>,
}

pub fn meta_path(codes: &Path) -> PathBuf {
    let mut name = codes.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

/// Encodes a dataset with the checkpoint's final network (the second
/// hashing network when present) and writes packed codes plus sidecar.
pub fn encode(checkpoint: &Path, source: &DataSource, out: &Path) -> Result<CodesMeta> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let dataset = source.load()?;
    let net = ckpt.encoder();
    if net.config().input != dataset.image_shape() {
        return Err(Error::invalid(format!(
            "checkpoint expects {} images, dataset has {}",
            net.config().input,
            dataset.image_shape()
        )));
    }
    let start = Instant::now();
    let codes = encode_dataset(&dataset, net)?;
    let elapsed = start.elapsed();
    let packed = pack(&codes)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    packed.write(out)?;
    let meta = CodesMeta {
        code_length: packed.code_length(),
        count: packed.len(),
        checkpoint: checkpoint.display().to_string(),
        source: source.describe(),
        encode_us_per_image: elapsed.as_secs_f64() * 1e6 / dataset.len().max(1) as f64,
        labels: dataset.labels(),
    };
    write_json(&meta, &meta_path(out))?;
    Ok(meta)
}

fn check_k(queries: &PackedCodes, gallery: &PackedCodes) -> Result<()> {
    if queries.code_length() != gallery.code_length() {
        return Err(Error::invalid(format!(
            "code length mismatch: query codes have K = {}, gallery codes have K = {}",
            queries.code_length(),
            gallery.code_length()
        )));
    }
    Ok(())
}

/// Ranks the gallery for every query and writes
/// `query,rank,gallery_id,distance` rows, keeping the `top` best per query.
pub fn retrieve(queries: &Path, gallery: &Path, out: &Path, top: Option<usize>) -> Result<usize> {
    let q = PackedCodes::read(queries)?;
    let g = PackedCodes::read(gallery)?;
    check_k(&q, &g)?;
    let rankings = rank_queries(&q, &g)?;
    let mut csv = String::from("query,rank,gallery_id,distance\n");
    let mut rows = 0;
    for r in &rankings {
        let keep = top.unwrap_or(r.len()).min(r.len());
        for (rank, (id, d)) in r.ids.iter().zip(&r.distances).take(keep).enumerate() {
            csv.push_str(&format!("{},{},{id},{d}\n", r.query_id, rank + 1));
            rows += 1;
        }
    }
    fs::write(out, csv).map_err(|e| Error::io(out, e))?;
    Ok(rows)
}

/// Label sources for [`evaluate`]; `None` falls back to the code sidecars.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelFiles {
    pub queries: Option<PathBuf>,
    pub gallery: Option<PathBuf>,
}

fn load_labels(explicit: Option<&Path>, codes: &Path, expected: usize) -> Result<Vec<LabelSet>> {
    let labels: Vec<LabelSet> = match explicit {
        Some(p) => read_json(p)?,
        None => {
            let meta = meta_path(codes);
            if !meta.exists() {
                return Err(Error::invalid(format!(
                    "no labels given for {} and no sidecar {}",
                    codes.display(),
                    meta.display()
                )));
            }
            read_json::<CodesMeta>(&meta)?.labels
        }
    };
    if labels.len() != expected {
        return Err(Error::invalid(format!(
            "{} labels for {} codes in {}",
            labels.len(),
            expected,
            codes.display()
        )));
    }
    Ok(labels)
}

/// Computes the metric suite and writes `report.json` plus curve CSVs.
pub fn evaluate(queries: &Path, gallery: &Path, labels: &LabelFiles, settings: &EvalSettings, out_dir: &Path) -> Result<EvalReport> {
    let q = PackedCodes::read(queries)?;
    let g = PackedCodes::read(gallery)?;
    check_k(&q, &g)?;
    let ql = load_labels(labels.queries.as_deref(), queries, q.len())?;
    let gl = load_labels(labels.gallery.as_deref(), gallery, g.len())?;
    let mut report = evaluate_codes(&q, &g, &label_relevance(&ql, &gl), settings)?;
    let meta = meta_path(queries);
    if meta.exists() {
        report.encode_us_per_image = Some(read_json::<CodesMeta>(&meta)?.encode_us_per_image);
    }
    report.write(out_dir)?;
    Ok(report)
}

fn find_reports(dir: &Path) -> Result<Vec<EvalReport>> {
    let mut found = Vec::new();
    let own = dir.join(REPORT_FILE);
    if own.exists() {
        found.push(EvalReport::read(&own)?);
    }
    if let Ok(entries) = fs::read_dir(dir) {
        let mut subdirs: Vec<PathBuf> = entries.filter_map(|e| e.ok()).map(|e| e.path()).filter(|p| p.is_dir()).collect();
        subdirs.sort();
        for sub in subdirs {
            for candidate in [sub.join(REPORT_FILE), sub.join("eval").join(REPORT_FILE)] {
                if candidate.exists() {
                    found.push(EvalReport::read(&candidate)?);
                }
            }
        }
    }
    Ok(found)
}

fn read_csv_rows(path: &Path, columns: usize) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let row: Vec<f64> = l
                .split(',')
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
            if row.len() != columns {
                return Err(Error::Format(format!("{}: expected {columns} columns", path.display())));
            }
            Ok(row)
        })
        .collect()
}

/// Renders the PR curve and P@N chart from the CSVs in `report_dir`, and
/// P@H≤2 against code length from every report found there or one level
/// below (for example a sweep over `model.code_length`). Returns the files
/// written.
pub fn plot(report_dir: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let pr_csv = report_dir.join(PR_CSV);
    let pn_csv = report_dir.join(P_AT_N_CSV);
    let reports = find_reports(report_dir)?;
    if !pr_csv.exists() && reports.is_empty() {
        return Err(Error::invalid(format!("no evaluation outputs in {}", report_dir.display())));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    if pr_csv.exists() {
        let pr: Vec<(f64, f64)> = read_csv_rows(&pr_csv, 3)?.iter().map(|r| (r[1], r[2])).collect();
        let p = out_dir.join(PR_PNG);
        save_png(&LinePlot::new((0.0, 1.0), (0.0, 1.0)).with_series(pr).render(480, 360), &p)?;
        written.push(p);
    }
    if pn_csv.exists() {
        let pn: Vec<(f64, f64)> = read_csv_rows(&pn_csv, 2)?.iter().map(|r| (r[0], r[1])).collect();
        let max_n = pn.iter().map(|p| p.0).fold(1.0, f64::max);
        let p = out_dir.join(P_AT_N_PNG);
        save_png(&LinePlot::new((0.0, max_n), (0.0, 1.0)).with_series(pn).render(480, 360), &p)?;
        written.push(p);
    }
    if !reports.is_empty() {
        let mut pts: Vec<(f64, f64)> = reports.iter().map(|r| (r.code_length as f64, r.p_at_h2)).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts.dedup_by(|a, b| a.0 == b.0);
        let lo = pts.first().map_or(0.0, |p| p.0);
        let hi = pts.last().map_or(1.0, |p| p.0);
        let p = out_dir.join(P_AT_H2_PNG);
        save_png(&LinePlot::new((lo, hi), (0.0, 1.0)).with_series(pts).render(480, 360), &p)?;
        written.push(p);
    }
    Ok(written)
}

/// Writes `attention_<id>.png` panels (image, map, attended image) for the
/// first `count` images of `source`.
pub fn plot_attention(checkpoint: &Path, source: &DataSource, count: usize, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let dataset = source.load()?;
    let shape = dataset.image_shape();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    for s in dataset.samples().iter().take(count) {
        let map = normalize_map(&attention_forward(&Tensor::from_hwc(&s.pixels, shape), &ckpt.attention)?);
        let p = out_dir.join(format!("attention_{}.png", s.id));
        save_png(&attention_panel(&s.pixels, shape, &map, 4)?, &p)?;
        written.push(p);
    }
    Ok(written)
}

/// One row of a sweep comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: String,
    pub map: f64,
    pub p_at_h2: f64,
    pub precision_at_first_n: Option<f64>,
    pub mean_abs_bit_correlation: f64,
    pub bit_agreement: f64,
    pub stage1_last_loss: Option<f64>,
    pub run_dir: PathBuf,
}

/// Trains and evaluates one run per value of `param` (a dotted config key)
/// and writes `sweep.csv` and `sweep.md` into `out`.
pub fn sweep(config_path: &Path, param: &str, values: &[String], output: Option<&Path>) -> Result<Vec<SweepRow>> {
    let base = ExperimentConfig::load(config_path)?;
    let out = output.map(Path::to_path_buf).unwrap_or_else(|| base.resolved_output_dir());
    sweep_config(&base, param, values, &out)
}

/// [`sweep`] for an already loaded configuration.
pub fn sweep_config(base: &ExperimentConfig, param: &str, values: &[String], out: &Path) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let configs: Vec<ExperimentConfig> = values.iter().map(|v| base.with_override(param, v)).collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (value, cfg) in values.iter().zip(&configs) {
        let dir = out.join(format!("{param}={value}"));
        let manifest = train_config(cfg, &dir)?;
        let ckpt = dir.join(STAGE2_DIR);
        let codes = dir.join("codes");
        for split in [Split::Query, Split::Gallery] {
            let src = DataSource::Config {
                config: dir.join(CONFIG_SNAPSHOT),
                split,
            };
            encode(&ckpt, &src, &codes.join(format!("{split}.dagh")))?;
        }
        let report = evaluate(
            &codes.join("query.dagh"),
            &codes.join("gallery.dagh"),
            &LabelFiles::default(),
            &cfg.eval,
            &dir.join("eval"),
        )?;
        rows.push(SweepRow {
            value: value.clone(),
            map: report.map,
            p_at_h2: report.p_at_h2,
            precision_at_first_n: report.p_at_n.first().map(|p| p.1),
            mean_abs_bit_correlation: report.bit_correlation.mean_abs_off_diagonal,
            bit_agreement: manifest.bit_agreement,
            stage1_last_loss: manifest.stage1_last_loss,
            run_dir: dir,
        });
    }
    write_sweep_tables(param, &rows, out)?;
    Ok(rows)
}

fn write_sweep_tables(param: &str, rows: &[SweepRow], out: &Path) -> Result<()> {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
    let mut csv = format!("{param},map,p_at_h2,p_at_first_n,mean_abs_bit_corr,bit_agreement,stage1_last_loss\n");
    let mut md = format!(
        "| {param} | mAP | P@H≤2 | P@N(first) | mean abs bit corr | bit agreement | final stage-1 loss |\n|---|---|---|---|---|---|---|\n"
    );
    for r in rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.value,
            r.map,
            r.p_at_h2,
            r.precision_at_first_n.map(|v| v.to_string()).unwrap_or_default(),
            r.mean_abs_bit_correlation,
            r.bit_agreement,
            r.stage1_last_loss.map(|v| v.to_string()).unwrap_or_default()
        ));
        md.push_str(&format!(
            "| {} | {:.4} | {:.4} | {} | {:.4} | {:.4} | {} |\n",
            r.value,
            r.map,
            r.p_at_h2,
            opt(r.precision_at_first_n),
            r.mean_abs_bit_correlation,
            r.bit_agreement,
            opt(r.stage1_last_loss)
        ));
    }
    let p = out.join(SWEEP_CSV);
    fs::write(&p, csv).map_err(|e| Error::io(&p, e))?;
    let p = out.join(SWEEP_TABLE);
    fs::write(&p, md).map_err(|e| Error::io(&p, e))
}
