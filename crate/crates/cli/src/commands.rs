use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context};
use serde::Serialize;

use dia_sgn::dynamic_env::{extract_scene, DiaKey, DynamicEnvConfig};
use dia_sgn::error::TrainError;
use dia_sgn::semantic_graph::{assemble_3dsg, Edge3D, GraphHistory, SemanticGraph2D, DEFAULT_MAX_HISTORY};
use dia_sgn::sgn::{forward, load_model, save_model, Prediction, Preset, SgnParams};
use dia_sgn::sim::{dataset_samples, generate as simulate_dataset, ingest_dataset, make_map, Dataset, DatasetWriter, GenerationConfig, SampleConfig, TemplateKind};
use dia_sgn::train::{evaluate, train as fit, OptimizerKind, Sample, TrainConfig};

use crate::config::{pick, FileConfig};
use crate::{svg, EvalArgs, Failure, GenerateArgs, PredictArgs, SampleArgs, TrainArgs};

pub const MODEL_FILE: &str = "model.sgn";
pub const LAST_GOOD_FILE: &str = "last_good.sgn";
const DEFAULT_SAMPLES: usize = 50;

/// Writes one line to stdout; a closed pipe is not an error.
fn emit(text: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display())).map_err(Failure::from)
}

fn require_file(path: &Path, what: &str) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("{what} {} does not exist", path.display())))
    }
}

fn load_dataset(dir: &Path) -> Result<Dataset, Failure> {
    require_file(&dir.join("manifest.json"), "dataset manifest")?;
    ingest_dataset(dir, &DynamicEnvConfig::default()).with_context(|| format!("reading dataset {}", dir.display())).map_err(Failure::from)
}

fn load_params(path: &Path) -> Result<SgnParams<f64>, Failure> {
    require_file(path, "model file")?;
    load_model(path).with_context(|| format!("reading model {}", path.display())).map_err(Failure::from)
}

fn sample_config(a: &SampleArgs, file: &FileConfig, params: &SgnParams<f64>) -> Result<SampleConfig, Failure> {
    let cfg = SampleConfig {
        history: pick(a.history, file.history, DEFAULT_MAX_HISTORY),
        stride: pick(a.stride, file.stride, 1),
        min_candidates: pick(a.min_candidates, file.min_candidates, 1),
        normalization: params.config.normalization,
    };
    if cfg.history == 0 || cfg.stride == 0 {
        return Err(usage("history and stride must be at least 1"));
    }
    Ok(cfg)
}

fn samples_of(ds: &Dataset, cfg: &SampleConfig) -> Result<Vec<Sample>, Failure> {
    let samples = dataset_samples(ds, &DynamicEnvConfig::default(), cfg).context("building samples")?;
    if samples.is_empty() {
        return Err(Failure::Runtime(anyhow!("the dataset yields no labeled samples")));
    }
    Ok(samples)
}

pub fn generate(a: &GenerateArgs, file: &FileConfig) -> Result<(), Failure> {
    let template = a.template.clone().or(file.template.clone()).ok_or_else(|| usage("--template is required"))?;
    let kind: TemplateKind = template.parse().map_err(Failure::from)?;
    let seed = file.seed(a.seed)?;
    let episodes = a.episodes.or(file.episodes).ok_or_else(|| usage("--episodes is required"))?;
    let mut gen = GenerationConfig::new(kind, episodes, seed);
    gen.n_agents = pick(a.agents, file.agents, gen.n_agents);
    gen.duration = pick(a.duration, file.duration, gen.duration);
    gen.validate()?;
    if !(gen.duration > 0.0 && gen.duration <= dia_sgn::sim::MAX_DURATION) {
        return Err(usage(format!("duration must lie in (0, {}] s", dia_sgn::sim::MAX_DURATION)));
    }
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let map = make_map(kind, seed)?;
    let mut writer = DatasetWriter::create(&a.out, &map.map, Some(kind), Some(seed)).context("creating dataset")?;
    let (_, stats) = simulate_dataset(&gen, |item, _| {
        writer.write(&item.episode, &item.labels, Some(item.seed)).context("writing episode").map_err(Failure::from)
    })?;
    writer.finish(Some(stats)).context("writing manifest")?;
    emit(&serde_json::to_string(&stats).expect("stats serialize"));
    Ok(())
}

fn train_config(a: &TrainArgs, file: &FileConfig) -> Result<TrainConfig, Failure> {
    let preset: Preset = pick(a.preset.clone(), file.preset.clone(), "desk".into()).parse().map_err(usage)?;
    let base = match preset {
        Preset::Full => TrainConfig::full(),
        Preset::Desk => TrainConfig::desk(),
    };
    let (ua_sgn, nc_sgn) = match pick(a.ablation.clone(), file.ablation.clone(), "none".into()).as_str() {
        "ua" => (true, false),
        "nc" => (false, true),
        "none" => (false, false),
        other => return Err(usage(format!("unknown ablation `{other}` (expected ua, nc or none)"))),
    };
    let optimizer = match pick(a.optimizer.clone(), file.optimizer.clone(), "adam".into()).as_str() {
        "adam" => OptimizerKind::Adam,
        "sgd" => OptimizerKind::Sgd,
        other => return Err(usage(format!("unknown optimizer `{other}` (expected adam or sgd)"))),
    };
    let cfg = TrainConfig {
        learning_rate: pick(a.lr, file.lr, base.learning_rate),
        batch_size: pick(a.batch, file.batch, base.batch_size),
        epochs: pick(a.epochs, file.epochs, base.epochs),
        beta: pick(a.beta, file.beta, base.beta),
        k_reg: pick(a.kreg, file.kreg, base.k_reg),
        mixtures: pick(a.mixtures, file.mixtures, base.mixtures),
        dropout: pick(a.dropout, file.dropout, base.dropout),
        ua_sgn,
        nc_sgn,
        seed: file.seed(a.seed)?,
        optimizer,
        ..base
    };
    cfg.validate()?;
    if cfg.mixtures == 0 || !(cfg.k_reg > 0.0) || !(0.0..1.0).contains(&cfg.dropout) {
        return Err(usage("mixtures must be at least 1, kreg positive and dropout in [0, 1)"));
    }
    Ok(cfg)
}

#[derive(Serialize)]
struct TrainRecord<'a> {
    train: &'a TrainConfig,
    sampling: &'a SampleConfig,
    samples: usize,
}

pub fn train(a: &TrainArgs, file: &FileConfig) -> Result<(), Failure> {
    let cfg = train_config(a, file)?;
    let init = SgnParams::<f64>::init(cfg.model_config(), cfg.seed).map_err(|e| usage(e.to_string()))?;
    let sc = sample_config(&a.sampling, file, &init)?;
    let ds = load_dataset(&a.dataset)?;
    let samples = samples_of(&ds, &sc)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let (params, curve) = match fit(&samples, &cfg) {
        Ok(r) => r,
        Err(TrainError::Diverged { epoch, step, last_good }) => {
            let p = a.out.join(LAST_GOOD_FILE);
            write(&p, last_good)?;
            return Err(Failure::Runtime(anyhow!(
                "training diverged at epoch {epoch}, step {step}; last finite parameters saved to {}",
                p.display()
            )));
        }
        Err(e) => return Err(e.into()),
    };
    let mut metrics = evaluate(&params, &samples, pick(a.samples, file.samples, DEFAULT_SAMPLES), cfg.seed)?;
    metrics.loss_curve = curve.loss_curve;
    let model = a.out.join(MODEL_FILE);
    save_model(&params, &model).with_context(|| format!("writing {}", model.display()))?;
    write(&a.out.join("metrics.json"), metrics.to_json())?;
    write(&a.out.join("loss_curve.csv"), metrics.loss_curve_csv())?;
    let record = TrainRecord { train: &cfg, sampling: &sc, samples: samples.len() };
    write(&a.out.join("train_config.json"), serde_json::to_string_pretty(&record).expect("config serializes"))?;
    if a.svg {
        let pts = |f: fn(&dia_sgn::train::EpochRecord) -> f64| metrics.loss_curve.iter().map(|r| (r.epoch as f64, f(r))).collect();
        let loss = svg::line_plot("Training loss", "epoch", "mean loss", &[("loss".into(), pts(|r| r.mean_loss))]);
        write(&a.out.join("loss_curve.svg"), loss)?;
        let acc = svg::line_plot("Training accuracy", "epoch", "intention accuracy", &[("accuracy".into(), pts(|r| r.accuracy))]);
        write(&a.out.join("accuracy.svg"), acc)?;
    }
    emit(&metrics.to_json());
    Ok(())
}

pub fn eval(a: &EvalArgs, file: &FileConfig) -> Result<(), Failure> {
    let params = load_params(&a.model)?;
    let sc = sample_config(&a.sampling, file, &params)?;
    let ds = load_dataset(&a.dataset)?;
    let samples = samples_of(&ds, &sc)?;
    let metrics = evaluate(&params, &samples, pick(a.samples, file.samples, DEFAULT_SAMPLES), file.seed(a.seed)?)?;
    let json = metrics.to_json();
    if let Some(out) = &a.out {
        write(out, &json)?;
    }
    emit(&json);
    Ok(())
}

#[derive(Serialize)]
struct Candidate {
    path_id: String,
    rear_agent: u32,
    w: f64,
    score: f64,
    /// Mixture mean of `(y_s1, y_s2, y_t)`.
    mean: [f64; 3],
}

#[derive(Serialize)]
struct PredictionDoc {
    episode: String,
    frame: usize,
    t: f64,
    reference: usize,
    candidates: Vec<Candidate>,
    samples: Vec<Vec<Edge3D>>,
}

fn label(k: &DiaKey) -> String {
    k.to_string()
}

/// Prediction for frame `f` from the `history` frames ending there.
fn predict_frame(
    params: &SgnParams<f64>,
    graphs: &[SemanticGraph2D],
    f: usize,
    history: usize,
) -> Result<(Prediction<f64>, Vec<DiaKey>), Failure> {
    let mut hist = GraphHistory::new(history);
    for g in &graphs[(f + 1).saturating_sub(history)..=f] {
        hist.push(g.clone()).context("graph history")?;
    }
    let input = hist.to_input(&params.config.normalization).context("graph input")?;
    let pred = forward(params, &input).context("forward pass")?;
    Ok((pred, input.keys))
}

pub fn predict(a: &PredictArgs, file: &FileConfig) -> Result<(), Failure> {
    let params = load_params(&a.model)?;
    let ds = load_dataset(&a.dataset)?;
    let history = pick(a.history, file.history, DEFAULT_MAX_HISTORY);
    if history == 0 {
        return Err(usage("history must be at least 1"));
    }
    let idx = ds
        .manifest
        .episodes
        .iter()
        .position(|e| e.id == a.episode)
        .ok_or_else(|| usage(format!("episode `{}` is not in the manifest", a.episode)))?;
    let (ep, _) = &ds.episodes[idx];
    if a.frame >= ep.len() {
        return Err(usage(format!("frame {} out of range: episode `{}` has {} frames", a.frame, a.episode, ep.len())));
    }
    let first = if a.trace { 0 } else { (a.frame + 1).saturating_sub(history) };
    let dynamic = DynamicEnvConfig::default();
    let mut graphs = vec![SemanticGraph2D { timestamp: 0.0, nodes: Vec::new(), reference: 0 }; first];
    for i in first..=a.frame {
        let ex = extract_scene(&ep.snapshot(i), ep.ego, &dynamic).with_context(|| format!("frame {i}"))?;
        graphs.push(SemanticGraph2D::from_extraction(&ex).with_context(|| format!("frame {i}"))?);
    }

    let (pred, keys) = predict_frame(&params, &graphs, a.frame, history)?;
    let current = &graphs[a.frame];
    let outputs: Vec<_> = pred.edges.iter().map(|e| (e.gmm.clone(), e.w)).collect();
    let n_samples = pick(a.samples, file.samples, DEFAULT_SAMPLES);
    let sampled = assemble_3dsg(current, &outputs, n_samples, file.seed(a.seed)?).context("sampling 3D graphs")?;
    let doc = PredictionDoc {
        episode: a.episode.clone(),
        frame: a.frame,
        t: ep.frames[a.frame].t,
        reference: pred.reference,
        candidates: pred
            .edges
            .iter()
            .map(|e| Candidate {
                path_id: e.key.path.to_string(),
                rear_agent: e.key.rear_agent.0,
                w: e.w,
                score: e.score,
                mean: e.gmm.mean(),
            })
            .collect(),
        samples: sampled.into_iter().map(|g| g.edges).collect(),
    };
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write(&a.out.join("prediction.json"), serde_json::to_string_pretty(&doc).expect("prediction serializes"))?;

    let labels: Vec<String> = keys.iter().map(label).collect();
    if a.heatmap_csv {
        write(&a.out.join("heatmap.csv"), heatmap_csv(&labels, &pred.attention))?;
    }
    if a.svg {
        write(&a.out.join("heatmap.svg"), svg::heatmap("Attention coefficients", &labels, &pred.attention))?;
    }

    if a.intention_csv || a.svg {
        let mut rows = Vec::new();
        let frames = if a.trace { 0..=a.frame } else { a.frame..=a.frame };
        for f in frames {
            let p = if f == a.frame { pred.clone() } else { predict_frame(&params, &graphs, f, history)?.0 };
            for e in &p.edges {
                rows.push((f, ep.frames[f].t, e.key.clone(), e.w));
            }
        }
        if a.intention_csv {
            write(&a.out.join("intention.csv"), intention_csv(&rows))?;
        }
        if a.svg {
            let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
            for (_, t, k, w) in &rows {
                series.entry(label(k)).or_default().push((*t, *w));
            }
            let series: Vec<_> = series.into_iter().collect();
            write(&a.out.join("intention.svg"), svg::line_plot("Insertion probability", "t [s]", "w", &series))?;
        }
    }
    emit(&serde_json::to_string(&doc.candidates).expect("candidates serialize"));
    Ok(())
}

/// Rows are attending areas, columns attended areas.
pub fn heatmap_csv(labels: &[String], alpha: &[Vec<f64>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut head = vec!["attending".to_string()];
    head.extend(labels.iter().cloned());
    w.write_record(&head).expect("in-memory write");
    for (l, row) in labels.iter().zip(alpha) {
        let mut rec = vec![l.clone()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

pub fn intention_csv(rows: &[(usize, f64, DiaKey, f64)]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["frame", "t", "path_id", "rear_agent", "w"]).expect("in-memory write");
    for (f, t, k, p) in rows {
        w.write_record([f.to_string(), t.to_string(), k.path.to_string(), k.rear_agent.to_string(), p.to_string()])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}
