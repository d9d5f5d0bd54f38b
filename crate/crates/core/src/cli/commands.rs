use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use edgehst::embed::EncoderModel;
use edgehst::graph::FeatureProvider;
use edgehst::metrics::{self, SubsampleSummary, TimeSlicedAuc};
use edgehst::pipeline::{Forests, Pipeline, PipelineConfig, ScoreRecord, SCORE_HEADER};
use edgehst::streamgen::{self, StreamSpec};
use edgehst::threshold::{brute_force_threshold, fit_threshold, ThresholdReport};
use edgehst::train::{train_gae, TrainConfig};
use edgehst::{EncoderConfig, Error, ForestParams, Mode, Result, TemporalGraph};

use super::run::{read_file, run_dir, write_file, RunManifest};
use super::{EvalArgs, GenArgs, ScoreArgs, SplitPart, ThresholdArgs, TrainArgs};

const MODEL_FILE: &str = "model.json";
const FORESTS_FILE: &str = "forests.json";

pub fn gen(a: GenArgs) -> Result<()> {
    let mut spec = match &a.spec {
        Some(p) => serde_json::from_str(&read_file(p)?)?,
        None => StreamSpec {
            injections: Vec::new(),
            ..StreamSpec::default()
        },
    };
    if let Some(v) = a.nodes {
        spec.n_nodes = v;
    }
    if let Some(v) = a.edges {
        spec.n_edges = v;
    }
    if !a.inject.is_empty() || a.spec.is_none() {
        spec.injections = a.inject.clone();
    }
    if a.spec.is_none() || a.anomaly_fraction != 0.02 {
        spec.anomaly_fraction = a.anomaly_fraction;
    }
    spec.communities = a.communities.unwrap_or(spec.communities);
    spec.cross_rate = a.cross_rate.unwrap_or(spec.cross_rate);
    spec.intensity = a.intensity.unwrap_or(spec.intensity);
    spec.episode_size = a.episode_size.unwrap_or(spec.episode_size);
    spec.mean_interarrival = a.mean_interarrival.unwrap_or(spec.mean_interarrival);
    spec.background = a.background.unwrap_or(spec.background);
    spec.seed = a.seed;

    let dir = run_dir(a.run.run_dir.as_deref(), &a.run.runs_root, a.seed)?;
    let mut manifest = RunManifest::new("gen", a.seed);
    let stream = manifest.time("generate", || streamgen::generate(&spec))?;
    let out = a.out.unwrap_or_else(|| dir.join("stream.csv"));
    manifest.time("write", || streamgen::write_csv(&out, &stream.edges))?;
    let injections = dir.join("injections.json");
    write_file(&injections, serde_json::to_string_pretty(&stream.injections)?)?;
    manifest.config = serde_json::to_value(&spec)?;
    manifest.output("stream", &out);
    manifest.output("injections", &injections);
    manifest.write(&dir)?;
    let positives = stream.edges.iter().filter(|e| e.label == Some(1)).count();
    log::info!(
        "wrote {} edges ({positives} anomalous) to {}",
        stream.edges.len(),
        out.display()
    );
    println!("{}", dir.display());
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct TrainSnapshot {
    split: (f64, f64, f64),
    skip_header: bool,
    mode: Mode,
    encoder: EncoderConfig,
    train: TrainConfig,
    forest: ForestParams,
    report: edgehst::train::TrainReport,
}

fn read_features(path: &Path) -> Result<FeatureProvider> {
    let text = read_file(path)?;
    let mut rows = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split(',').map(str::trim);
        let id = fields.next().unwrap_or_default().to_string();
        let values = fields
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                msg: e.to_string(),
            })?;
        rows.insert(id, values);
    }
    FeatureProvider::explicit(rows)
}

pub fn train(a: TrainArgs) -> Result<()> {
    let split = streamgen::parse_fractions(&a.split)?;
    let mut encoder = EncoderConfig::default();
    encoder.layers = a.layers.unwrap_or(encoder.layers);
    encoder.hidden_dim = a.hidden_dim.unwrap_or(encoder.hidden_dim);
    encoder.embed_dim = a.embed_dim.unwrap_or(encoder.embed_dim);
    encoder.fanout = a.fanout.unwrap_or(encoder.fanout);
    encoder.combinator = a.combinator.unwrap_or(encoder.combinator);
    if let Some(dim) = a.feature_dim {
        if let FeatureProvider::IdentityHash { dim: d, .. } = &mut encoder.features {
            *d = dim;
        }
    }
    if let Some(p) = &a.features {
        encoder.features = read_features(p)?;
    }
    let defaults = TrainConfig::default();
    let tc = TrainConfig {
        epochs: a.epochs.unwrap_or(defaults.epochs),
        learning_rate: a.lr.unwrap_or(defaults.learning_rate),
        batch_size: a.batch_size.unwrap_or(defaults.batch_size),
        negatives: a.negatives.unwrap_or(defaults.negatives),
        optimizer: a.optimizer.unwrap_or(defaults.optimizer),
        seed: a.seed,
        ..defaults
    };
    let fd = ForestParams::default();
    let forest = ForestParams {
        trees: a.trees.unwrap_or(fd.trees),
        height: a.height.unwrap_or(fd.height),
        window: a.window.unwrap_or(fd.window),
    };
    encoder.validate()?;
    tc.validate()?;
    forest.validate()?;

    let dir = run_dir(a.run.run_dir.as_deref(), &a.run.runs_root, a.seed)?;
    let mut manifest = RunManifest::new("train", a.seed);
    manifest.input("stream", &a.input.stream);
    let edges = manifest.time("ingest", || {
        streamgen::ingest_csv(&a.input.stream, a.input.skip_header)
    })?;
    let [train_part, _, _] = streamgen::temporal_split(&edges, split)?;
    let graph = TemporalGraph::from_edges(train_part)?;
    log::info!(
        "training on {} edges, {} nodes",
        train_part.len(),
        graph.node_count()
    );
    let (model, report) = manifest.time("train", || train_gae(&graph, encoder.clone(), &tc))?;
    let forests = manifest.time("forest_init", || {
        Forests::initialize(&model, &graph, train_part, forest, a.mode, a.seed)
    })?;

    let model_path = dir.join(MODEL_FILE);
    let forests_path = dir.join(FORESTS_FILE);
    write_file(&model_path, model.to_json()?)?;
    write_file(&forests_path, forests.to_json()?)?;
    manifest.config = serde_json::to_value(TrainSnapshot {
        split,
        skip_header: a.input.skip_header,
        mode: a.mode,
        encoder,
        train: tc,
        forest,
        report,
    })?;
    manifest.output("model", &model_path);
    manifest.output("forests", &forests_path);
    manifest.write(&dir)?;
    println!("{}", dir.display());
    Ok(())
}

pub fn score(a: ScoreArgs) -> Result<()> {
    let trained = RunManifest::read(&a.model)?;
    let snapshot: TrainSnapshot = serde_json::from_value(trained.config.clone())?;
    let model = EncoderModel::from_json(&read_file(&a.model.join(MODEL_FILE))?)?;
    let forests = Forests::from_json(&read_file(&a.model.join(FORESTS_FILE))?)?;
    let split = match &a.split {
        Some(s) => streamgen::parse_fractions(s)?,
        None => snapshot.split,
    };
    let seed = a.seed.unwrap_or(trained.seed);
    let defaults = PipelineConfig::default();
    let config = PipelineConfig {
        weights: a.weights.unwrap_or(defaults.weights),
        cache_size: a.cache_size.unwrap_or(defaults.cache_size),
        cache_policy: a.cache_policy.unwrap_or(defaults.cache_policy),
        mode: a.mode.unwrap_or(forests.mode()),
        forest: forests.node.params,
        seed,
    };

    let dir = run_dir(a.run.run_dir.as_deref(), &a.run.runs_root, seed)?;
    let mut manifest = RunManifest::new("score", seed);
    manifest.input("stream", &a.input.stream);
    manifest.input("model", &a.model);
    let skip_header = a.input.skip_header || snapshot.skip_header;
    let edges = manifest.time("ingest", || streamgen::ingest_csv(&a.input.stream, skip_header))?;
    let [train_part, val, test] = streamgen::temporal_split(&edges, split)?;
    let graph = TemporalGraph::from_edges(train_part)?;
    let mut pipeline = Pipeline::new(model, forests, graph, config.clone())?;
    let records = manifest.time("score", || -> Result<Vec<ScoreRecord>> {
        let val_records = pipeline.run_stream(val)?;
        match a.split_part {
            SplitPart::Val => Ok(val_records),
            SplitPart::Test => pipeline.run_stream(test),
        }
    })?;

    let out = a.out.unwrap_or_else(|| dir.join("scores.csv"));
    let mut text = String::with_capacity(records.len() * 64);
    text.push_str(SCORE_HEADER);
    text.push('\n');
    for r in &records {
        text.push_str(&r.to_line());
        text.push('\n');
    }
    write_file(&out, text)?;
    manifest.config = serde_json::json!({
        "pipeline": config,
        "split": split,
        "split_part": format!("{:?}", a.split_part).to_lowercase(),
        "skip_header": skip_header,
    });
    manifest.output("scores", &out);
    manifest.write(&dir)?;
    log::info!("scored {} edges", records.len());
    println!("{}", dir.display());
    Ok(())
}

fn read_scores(path: &Path) -> Result<Vec<ScoreRecord>> {
    let text = read_file(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        match ScoreRecord::parse_line(line) {
            Ok(Some(r)) => out.push(r),
            Ok(None) => {}
            Err(msg) => {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: i + 1,
                    msg,
                })
            }
        }
    }
    Ok(out)
}

fn labeled(path: &Path, records: &[ScoreRecord]) -> Result<(Vec<f64>, Vec<u8>)> {
    records
        .iter()
        .map(|r| match r.edge.label {
            Some(l) => Ok((r.score, l)),
            None => Err(Error::Precondition(format!(
                "{}: record {} has no label",
                path.display(),
                r.seq
            ))),
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct ThresholdOutput {
    #[serde(flatten)]
    report: ThresholdReport,
    oracle_checked: bool,
}

pub fn threshold(a: ThresholdArgs) -> Result<()> {
    let records = read_scores(&a.scores)?;
    let (scores, labels) = labeled(&a.scores, &records)?;
    let data: Vec<(f64, u8)> = scores.into_iter().zip(labels).collect();
    let report = fit_threshold(&data)?;
    if report.degenerate {
        log::warn!("validation scores are degenerate (single class or single score)");
    }
    if a.oracle {
        let (tau, objective) = brute_force_threshold(&data)
            .ok_or_else(|| Error::Internal("brute-force sweep found no candidate".into()))?;
        if tau != report.tau_star || objective != report.objective {
            return Err(Error::Internal(format!(
                "threshold sweep disagrees with brute force: ({}, {}) vs ({tau}, {objective})",
                report.tau_star, report.objective
            )));
        }
    }
    let output = ThresholdOutput {
        report,
        oracle_checked: a.oracle,
    };
    let dir = run_dir(a.run.run_dir.as_deref(), &a.run.runs_root, 0)?;
    let out = a.out.unwrap_or_else(|| dir.join("threshold.json"));
    let json = serde_json::to_string_pretty(&output)?;
    write_file(&out, &json)?;
    let mut manifest = RunManifest::new("threshold", 0);
    manifest.input("scores", &a.scores);
    manifest.output("threshold", &out);
    manifest.config = serde_json::json!({ "oracle": a.oracle });
    manifest.write(&dir)?;
    println!("{json}");
    Ok(())
}

#[derive(Debug, Serialize)]
struct EvalOutput {
    #[serde(flatten)]
    result: metrics::EvalResult,
    n_slices: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    subsample: Option<SubsampleSummary>,
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let tau = match (a.tau, &a.threshold) {
        (Some(t), _) => t,
        (None, Some(p)) => {
            let v: serde_json::Value = serde_json::from_str(&read_file(p)?)?;
            v.get("tau_star")
                .and_then(serde_json::Value::as_f64)
                .ok_or_else(|| Error::Precondition(format!("{}: no tau_star", p.display())))?
        }
        (None, None) => return Err(Error::Config("give --tau or --threshold".into())),
    };
    let records = read_scores(&a.scores)?;
    if records.is_empty() {
        return Err(Error::Precondition(format!(
            "{}: no score records",
            a.scores.display()
        )));
    }
    let (scores, labels) = labeled(&a.scores, &records)?;
    let mut manifest = RunManifest::new("eval", a.seed);
    manifest.input("scores", &a.scores);
    let result = metrics::thresholded_metrics(&scores, &labels, tau)?;
    if result.roc_auc.is_none() {
        log::warn!("labels hold a single class; ROC-AUC is undefined");
    }
    let slices: TimeSlicedAuc = metrics::time_sliced_auc(&scores, &labels, a.slices)?;
    let subsample = match a.subsample {
        Some(f) => Some(manifest.time("subsample", || {
            metrics::subsample_eval(&scores, &labels, Some(tau), f, a.repeats, a.seed)
        })?),
        None => None,
    };
    let output = EvalOutput {
        result,
        n_slices: a.slices,
        subsample,
    };

    let dir: PathBuf = run_dir(a.run.run_dir.as_deref(), &a.run.runs_root, a.seed)?;
    let metrics_path = dir.join("metrics.json");
    let slices_path = dir.join("slices.csv");
    let json = serde_json::to_string_pretty(&output)?;
    write_file(&metrics_path, &json)?;
    write_file(&slices_path, slices.to_csv())?;
    manifest.config = serde_json::json!({
        "tau": tau,
        "slices": a.slices,
        "subsample": a.subsample,
        "repeats": a.repeats,
    });
    manifest.output("metrics", &metrics_path);
    manifest.output("slices", &slices_path);
    manifest.write(&dir)?;
    println!("{json}");
    Ok(())
}
