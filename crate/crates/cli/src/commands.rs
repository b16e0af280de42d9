//! Subcommand implementations: each loads/derives its inputs, runs the core
//! routines, writes artifacts under the output directory, and prints the
//! primary report as JSON on stdout.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use aanet_core::fewshot::{ncc_classify, sample_episode};
use aanet_core::network::{
    build_network, load_checkpoint, save_checkpoint, LayerGraph, Mode, NodeKind,
};
use aanet_core::robustness::{corrupt, Corruption, CorruptionReport, ErrorTable, Severity};
use aanet_core::spectral::{aliased_energy_tensor, shift_consistency};
use aanet_core::tensor::Tensor as TensorBase;
use aanet_core::{Error, LabeledImages, Result, Tensor};

use crate::config::{DataConfig, ExperimentConfig};
use crate::idx::load_idx;
use crate::plot::{self, Kind};
use crate::synthetic;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

impl Format {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(Error::Argument(format!(
                "format must be 'json' or 'csv', got '{other}'"
            ))),
        }
    }
}

/// Parsed command line shared by every subcommand.
pub struct Invocation {
    pub command: String,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub format: Format,
    pub checkpoint: Option<PathBuf>,
    pub baseline: Option<PathBuf>,
    pub table: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub kind: Option<String>,
}

impl Invocation {
    fn config(&self) -> Result<ExperimentConfig> {
        let path = self
            .config
            .as_ref()
            .ok_or_else(|| Error::Config(format!("{} requires --config", self.command)))?;
        let mut cfg = ExperimentConfig::load(path)?;
        if let Some(seed) = self.seed {
            cfg.train.seed = seed;
        }
        Ok(cfg)
    }

    fn ensure_out(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out)
            .map_err(|e| Error::Io(format!("cannot create {}: {e}", self.out.display())))?;
        Ok(())
    }

    /// Echoes the resolved configuration and seed (stderr) and persists it
    /// beside the artifacts so any run is reproducible from its output dir.
    fn echo(&self, cfg: &ExperimentConfig) -> Result<()> {
        self.ensure_out()?;
        eprintln!(
            "{} seed={} out={}",
            self.command,
            cfg.train.seed,
            self.out.display()
        );
        let text = cfg.to_json();
        eprintln!("{text}");
        std::fs::write(self.out.join("config.json"), text)?;
        Ok(())
    }

    fn write_artifact(&self, name: &str, contents: &str) -> Result<PathBuf> {
        self.ensure_out()?;
        let path = self.out.join(name);
        std::fs::write(&path, contents)?;
        Ok(path)
    }
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes")
}

fn load_train_data(cfg: &ExperimentConfig) -> Result<LabeledImages> {
    match &cfg.data {
        DataConfig::Synthetic(s) => synthetic::generate(s),
        DataConfig::Idx(idx) => load_idx(Path::new(&idx.images), Path::new(&idx.labels)),
    }
}

/// Held-out split: synthetic data regenerates fresh examples from a shifted
/// seed; IDX data reserves its trailing examples.
fn load_holdout(cfg: &ExperimentConfig) -> Result<LabeledImages> {
    let want = cfg.eval.holdout.max(1);
    match &cfg.data {
        DataConfig::Synthetic(s) => {
            let mut held = s.clone();
            held.size = want.div_ceil(s.classes) * s.classes;
            synthetic::generate_with_seed(&held, s.seed.wrapping_add(1))
        }
        DataConfig::Idx(idx) => {
            let all = load_idx(Path::new(&idx.images), Path::new(&idx.labels))?;
            let n = all.len();
            let take = want.min(n);
            let images = all.images[n - take..].to_vec();
            let labels = all.labels[n - take..].to_vec();
            LabeledImages::new(images, labels, all.classes)
        }
    }
}

fn build_net(cfg: &ExperimentConfig) -> Result<LayerGraph<f64>> {
    build_network(&cfg.arch, &cfg.placement, cfg.train.seed)
}

fn maybe_restore(net: &mut LayerGraph<f64>, checkpoint: &Option<PathBuf>) -> Result<()> {
    if let Some(path) = checkpoint {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
        load_checkpoint(net, std::io::BufReader::new(file))?;
    }
    Ok(())
}

fn check_finite(t: &Tensor, what: &str) -> Result<()> {
    if !t.all_finite() {
        return Err(Error::Numeric(format!("{what} contains non-finite values")));
    }
    Ok(())
}

/// Eval-mode accuracy over a dataset, batched.
fn accuracy(net: &LayerGraph<f64>, data: &LabeledImages, batch: usize) -> Result<f64> {
    let mut correct = 0usize;
    let indices: Vec<usize> = (0..data.len()).collect();
    for chunk in indices.chunks(batch.max(1)) {
        let (x, labels) = data.batch(chunk)?;
        let logits = net.eval_forward(&x)?;
        check_finite(&logits, "logits")?;
        for (i, &label) in labels.iter().enumerate() {
            if argmax(&logits, i) == label {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

fn argmax(logits: &Tensor, n: usize) -> usize {
    let (_, c, _, _) = logits.shape();
    (1..c).fold(0, |best, k| {
        if logits.at(n, k, 0, 0) > logits.at(n, best, 0, 0) {
            k
        } else {
            best
        }
    })
}

pub fn train(inv: &Invocation) -> Result<()> {
    let cfg = inv.config()?;
    inv.echo(&cfg)?;
    let data = load_train_data(&cfg)?;
    let mut net = build_net(&cfg)?;
    net.set_mode(Mode::Train);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    let mut log = String::from("epoch,loss,accuracy\n");
    let mut final_loss = f64::NAN;
    let mut final_acc = f64::NAN;
    for epoch in 0..cfg.train.epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.train.batch) {
            let (x, labels) = data.batch(chunk)?;
            net.zero_grad();
            let loss = net.loss_and_backward(&x, &labels)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "loss became non-finite in epoch {epoch}"
                )));
            }
            net.sgd_step(cfg.train.lr, cfg.train.momentum)?;
            epoch_loss += loss;
            batches += 1;
        }
        epoch_loss /= batches.max(1) as f64;
        let acc = accuracy(&net, &data, cfg.train.batch.max(16))?;
        log.push_str(&format!("{},{epoch_loss},{acc}\n", epoch + 1));
        final_loss = epoch_loss;
        final_acc = acc;
    }

    let ckpt_path = inv.out.join("checkpoint.bin");
    let file = std::fs::File::create(&ckpt_path)
        .map_err(|e| Error::Io(format!("cannot create {}: {e}", ckpt_path.display())))?;
    save_checkpoint(&net, std::io::BufWriter::new(file))?;
    inv.write_artifact("train_log.csv", &log)?;

    let report = serde_json::json!({
        "epochs": cfg.train.epochs,
        "final_loss": final_loss,
        "final_train_accuracy": final_acc,
        "checkpoint": ckpt_path.to_string_lossy(),
        "parameters": net.parameter_count(),
    });
    println!("{}", json(&report));
    Ok(())
}

pub fn eval(inv: &Invocation) -> Result<()> {
    let cfg = inv.config()?;
    inv.echo(&cfg)?;
    let holdout = load_holdout(&cfg)?;
    let mut net = build_net(&cfg)?;
    maybe_restore(&mut net, &inv.checkpoint)?;
    net.set_mode(Mode::Eval);
    let acc = accuracy(&net, &holdout, 64)?;
    let report = serde_json::json!({
        "examples": holdout.len(),
        "accuracy": acc,
        "error": 1.0 - acc,
    });
    inv.write_artifact("eval.json", &json(&report))?;
    println!("{}", json(&report));
    Ok(())
}

fn corruption_list(cfg: &ExperimentConfig) -> Result<Vec<Corruption>> {
    if cfg.eval.corruptions.is_empty() {
        Ok(Corruption::ALL.to_vec())
    } else {
        cfg.eval
            .corruptions
            .iter()
            .map(|c| Corruption::from_id(c))
            .collect()
    }
}

/// Deterministic per-(corruption, severity, example) seed so the grid can be
/// evaluated in any order, on any number of workers, with identical results.
fn cell_seed(base: u64, corruption: Corruption, severity: usize, example: usize) -> u64 {
    let ci = Corruption::ALL
        .iter()
        .position(|&c| c == corruption)
        .expect("known corruption") as u64;
    base.wrapping_mul(1_000_003)
        .wrapping_add(ci * 1_009 + severity as u64 * 101 + example as u64)
}

fn worker_count(cells: usize) -> usize {
    let configured = std::env::var("AANET_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1);
    let fallback = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    configured.unwrap_or(fallback).min(cells.max(1))
}

/// Evaluates the model's error on every (corruption, severity) cell of the
/// grid using a bounded worker pool; assembly is order-insensitive.
pub fn corrupted_error_table(
    net: &LayerGraph<f64>,
    holdout: &LabeledImages,
    corruptions: &[Corruption],
    base_seed: u64,
) -> Result<ErrorTable> {
    let clean_error = 1.0 - accuracy(net, holdout, 64)?;
    let cells: Vec<(Corruption, usize)> = corruptions
        .iter()
        .flat_map(|&c| (1..=5).map(move |s| (c, s)))
        .collect();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(Corruption, usize, f64)>> = Mutex::new(Vec::new());
    let first_error: Mutex<Option<Error>> = Mutex::new(None);
    let workers = worker_count(cells.len());

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= cells.len() {
                    break;
                }
                let (c, s) = cells[i];
                match cell_error(net, holdout, c, s, base_seed) {
                    Ok(err) => results.lock().unwrap().push((c, s, err)),
                    Err(e) => {
                        let mut slot = first_error.lock().unwrap();
                        if slot.is_none() {
                            *slot = Some(e);
                        }
                        break;
                    }
                }
            });
        }
    });

    if let Some(e) = first_error.into_inner().unwrap() {
        return Err(e);
    }
    let mut entries: BTreeMap<String, [f64; 5]> = BTreeMap::new();
    for &c in corruptions {
        entries.insert(c.id().to_string(), [0.0; 5]);
    }
    for (c, s, err) in results.into_inner().unwrap() {
        entries.get_mut(c.id()).expect("prefilled")[s - 1] = err;
    }
    Ok(ErrorTable {
        entries,
        clean_error,
    })
}

fn cell_error(
    net: &LayerGraph<f64>,
    holdout: &LabeledImages,
    corruption: Corruption,
    severity: usize,
    base_seed: u64,
) -> Result<f64> {
    let sev = Severity::new(severity)?;
    let mut corrupted = Vec::with_capacity(holdout.len());
    for (i, img) in holdout.images.iter().enumerate() {
        corrupted.push(corrupt(
            img,
            corruption,
            sev,
            cell_seed(base_seed, corruption, severity, i),
        )?);
    }
    let data = LabeledImages::new(corrupted, holdout.labels.clone(), holdout.classes)?;
    Ok(1.0 - accuracy(net, &data, 64)?)
}

pub fn corrupt_eval(inv: &Invocation) -> Result<()> {
    let cfg = inv.config()?;
    inv.echo(&cfg)?;
    let holdout = load_holdout(&cfg)?;
    let mut net = build_net(&cfg)?;
    maybe_restore(&mut net, &inv.checkpoint)?;
    net.set_mode(Mode::Eval);
    let corruptions = corruption_list(&cfg)?;
    let table = corrupted_error_table(&net, &holdout, &corruptions, cfg.train.seed)?;
    table.validate()?;

    inv.write_artifact("error_table.json", &json(&table))?;
    inv.write_artifact("error_table.csv", &table.to_csv())?;
    if let Some(baseline_path) = &inv.baseline {
        let baseline = read_error_table(baseline_path)?;
        let report = CorruptionReport::from_tables(&table, &baseline)?;
        inv.write_artifact("corruption_report.json", &json(&report))?;
        println!("{}", json(&report));
    } else {
        println!("{}", json(&table));
    }
    Ok(())
}

fn read_error_table(path: &Path) -> Result<ErrorTable> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    let table: ErrorTable =
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("bad error table: {e}")))?;
    table.validate()?;
    Ok(table)
}

/// AliasReport for the input of every subsampling node in the graph.
pub fn spectrum_report(
    net: &LayerGraph<f64>,
    batch: &Tensor,
) -> Result<Vec<(String, aanet_core::AliasReport)>> {
    let trace = net.eval_forward_trace(batch)?;
    let mut reports = Vec::new();
    for node in net.nodes() {
        if let NodeKind::Subsample { stride } = node.kind {
            let feeding = &trace[node.input];
            reports.push((node.name.clone(), aliased_energy_tensor(feeding, stride)?));
        }
    }
    Ok(reports)
}

pub fn spectrum(inv: &Invocation) -> Result<()> {
    let cfg = inv.config()?;
    inv.echo(&cfg)?;
    let holdout = load_holdout(&cfg)?;
    let mut net = build_net(&cfg)?;
    maybe_restore(&mut net, &inv.checkpoint)?;
    net.set_mode(Mode::Eval);
    let take: Vec<usize> = (0..holdout.len().min(16)).collect();
    let (batch, _) = holdout.batch(&take)?;
    let reports = spectrum_report(&net, &batch)?;
    let rows: Vec<serde_json::Value> = reports
        .iter()
        .map(|(layer, r)| {
            serde_json::json!({
                "layer": layer,
                "total_energy": r.total_energy,
                "above_nyquist_energy": r.above_nyquist_energy,
                "fraction": r.fraction,
                "stride": r.stride,
            })
        })
        .collect();
    inv.write_artifact("spectrum.json", &json(&rows))?;
    println!("{}", json(&rows));
    Ok(())
}

pub fn consistency(inv: &Invocation) -> Result<()> {
    let cfg = inv.config()?;
    inv.echo(&cfg)?;
    let holdout = load_holdout(&cfg)?;
    let mut net = build_net(&cfg)?;
    maybe_restore(&mut net, &inv.checkpoint)?;
    net.set_mode(Mode::Eval);
    let take: Vec<usize> = (0..holdout.len().min(64)).collect();
    let (batch, _) = holdout.batch(&take)?;
    let report = shift_consistency(&net, &batch, cfg.eval.shift_max, cfg.eval.shift_padding)?;
    inv.write_artifact("consistency.json", &json(&report))?;
    println!("{}", json(&report));
    Ok(())
}

fn features_of(net: &LayerGraph<f64>, images: &[Tensor]) -> Result<Vec<Vec<f64>>> {
    let batch = TensorBase::stack(images)?;
    let (features, _) = net.eval_features_and_logits(&batch)?;
    let (n, c, _, _) = features.shape();
    Ok((0..n)
        .map(|i| (0..c).map(|k| features.at(i, k, 0, 0)).collect())
        .collect())
}

pub fn episode_eval(inv: &Invocation) -> Result<()> {
    let cfg = inv.config()?;
    inv.echo(&cfg)?;
    let holdout = load_holdout(&cfg)?;
    let mut net = build_net(&cfg)?;
    maybe_restore(&mut net, &inv.checkpoint)?;
    net.set_mode(Mode::Eval);
    let ep = &cfg.eval.episode;
    if ep.count == 0 {
        return Err(Error::Config("eval.episode.count must be >= 1".into()));
    }
    let mut accuracies = Vec::with_capacity(ep.count);
    for e in 0..ep.count {
        let episode = sample_episode(
            &holdout,
            ep.way,
            ep.shots,
            ep.query,
            cfg.train.seed.wrapping_add(e as u64),
        )?;
        let support = features_of(&net, &episode.support_images)?;
        let query = features_of(&net, &episode.query_images)?;
        let predicted = ncc_classify(&support, &episode.support_labels, &query)?;
        let correct = predicted
            .iter()
            .zip(&episode.query_labels)
            .filter(|(p, t)| p == t)
            .count();
        accuracies.push(correct as f64 / episode.query_labels.len() as f64);
    }
    let mean = accuracies.iter().sum::<f64>() / accuracies.len() as f64;
    let var = accuracies
        .iter()
        .map(|a| (a - mean) * (a - mean))
        .sum::<f64>()
        / accuracies.len() as f64;
    let ci95 = 1.96 * (var / accuracies.len() as f64).sqrt();
    let report = serde_json::json!({
        "episodes": ep.count,
        "way": ep.way,
        "shots": ep.shots,
        "query_per_class": ep.query,
        "mean_accuracy": mean,
        "ci95": ci95,
    });
    inv.write_artifact("episodes.json", &json(&report))?;
    println!("{}", json(&report));
    Ok(())
}

pub fn mce(inv: &Invocation) -> Result<()> {
    let table_path = inv
        .table
        .as_ref()
        .ok_or_else(|| Error::Config("mce requires --table <error_table.json>".into()))?;
    let baseline_path = inv
        .baseline
        .as_ref()
        .ok_or_else(|| Error::Config("mce requires --baseline <error_table.json>".into()))?;
    let table = read_error_table(table_path)?;
    let baseline = read_error_table(baseline_path)?;
    let report = CorruptionReport::from_tables(&table, &baseline)?;
    inv.ensure_out()?;
    match inv.format {
        Format::Json => {
            inv.write_artifact("mce.json", &json(&report))?;
        }
        Format::Csv => {
            let mut csv = String::from("corruption,ce\n");
            for (c, v) in &report.ce {
                csv.push_str(&format!("{c},{v}\n"));
            }
            csv.push_str(&format!("mce,{}\n", report.mce));
            inv.write_artifact("mce.csv", &csv)?;
        }
    }
    println!("{}", json(&report));
    Ok(())
}

pub fn plot(inv: &Invocation) -> Result<()> {
    let input = inv
        .input
        .as_ref()
        .ok_or_else(|| Error::Config("plot requires --input <file.csv>".into()))?;
    let kind = Kind::parse(inv.kind.as_deref().unwrap_or("line"))?;
    let text = std::fs::read_to_string(input)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", input.display())))?;
    let svg = plot::render(&text, kind)?;
    let stem = input
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "plot".into());
    let path = inv.write_artifact(&format!("{stem}.svg"), &svg)?;
    println!(
        "{}",
        json(&serde_json::json!({ "svg": path.to_string_lossy() }))
    );
    Ok(())
}
