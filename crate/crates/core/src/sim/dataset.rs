use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::engine::{simulate_episode, Episode, Frame};
use super::label::{label_with, FrameLabel};
use super::policy::DriverPolicy;
use super::template::{make_map, MapTemplate, TemplateKind};
use crate::dynamic_env::{extract_scene, AgentId, AgentState, DiaKey, DynamicEnvConfig, Extraction};
use crate::error::{FormatError, SimError};
use crate::semantic_graph::{GraphHistory, Normalization, SemanticGraph2D, DEFAULT_MAX_HISTORY};
use crate::static_env::{FrenetPose, LightState, PathId, PointId, RoadMap};
use crate::train::Sample;

/// Per-episode seed: the first output of the master-seeded ChaCha8 stream
/// numbered `index`. Episodes can therefore be generated in any order.
pub fn episode_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng.next_u64()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub template: TemplateKind,
    /// Number of labeled episodes to produce.
    pub episodes: usize,
    pub n_agents: usize,
    pub duration: f64,
    pub seed: u64,
    pub policy: DriverPolicy,
    pub dynamic: DynamicEnvConfig,
    /// Give up after `episodes * max_attempt_factor` simulations.
    pub max_attempt_factor: usize,
}

impl GenerationConfig {
    pub fn new(template: TemplateKind, episodes: usize, seed: u64) -> Self {
        let n_agents = match template {
            TemplateKind::Merge => 3,
            _ => 4,
        };
        Self {
            template,
            episodes,
            n_agents,
            duration: 40.0,
            seed,
            policy: DriverPolicy::default(),
            dynamic: DynamicEnvConfig::default(),
            max_attempt_factor: 20,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.episodes == 0 {
            return Err(SimError::InvalidParams("episode count must be at least 1".into()));
        }
        if self.n_agents == 0 {
            return Err(SimError::InvalidParams("n_agents must be at least 1".into()));
        }
        self.template.validate()?;
        self.policy.validate()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub attempts: usize,
    pub labeled: usize,
    pub spawn_failures: usize,
    pub no_insertion: usize,
    pub frames: usize,
    pub labels: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEpisode {
    pub index: usize,
    pub seed: u64,
    pub episode: Episode,
    pub labels: Vec<FrameLabel>,
}

/// Simulates and labels episodes until `cfg.episodes` carry labels, handing
/// each one (with its per-frame extractions) to `visit`. Episodes whose
/// agents cannot be placed or that never insert are skipped and counted.
pub fn generate<E: From<SimError>>(
    cfg: &GenerationConfig,
    mut visit: impl FnMut(LabeledEpisode, &[Extraction]) -> Result<(), E>,
) -> Result<(MapTemplate, GenerationStats), E> {
    cfg.validate()?;
    let template = make_map(cfg.template, cfg.seed)?;
    let mut stats = GenerationStats::default();
    let max_attempts = cfg.episodes.saturating_mul(cfg.max_attempt_factor.max(1));
    while stats.labeled < cfg.episodes {
        if stats.attempts >= max_attempts {
            return Err(SimError::InvalidParams(format!(
                "only {} of {} episodes produced an insertion after {} attempts",
                stats.labeled, cfg.episodes, stats.attempts
            ))
            .into());
        }
        let seed = episode_seed(cfg.seed, stats.attempts as u64);
        stats.attempts += 1;
        let episode = match simulate_episode(&template, cfg.n_agents, &cfg.policy, seed, cfg.duration) {
            Ok(ep) => ep,
            Err(SimError::SpawnFailure(msg)) => {
                log::debug!("episode seed {seed}: {msg}");
                stats.spawn_failures += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let exs = episode_extractions(&episode, &cfg.dynamic)?;
        let labels = match label_with(&episode, &exs, &cfg.dynamic) {
            Ok(l) if !l.is_empty() => l,
            Ok(_) | Err(SimError::NoInsertion) => {
                stats.no_insertion += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        stats.frames += episode.len();
        stats.labels += labels.len();
        let item = LabeledEpisode { index: stats.labeled, seed, episode, labels };
        stats.labeled += 1;
        visit(item, &exs)?;
    }
    Ok((template, stats))
}

pub fn episode_extractions(ep: &Episode, cfg: &DynamicEnvConfig) -> Result<Vec<Extraction>, SimError> {
    (0..ep.len()).map(|i| Ok(extract_scene(&ep.snapshot(i), ep.ego, cfg)?)).collect()
}

/// How labeled frames turn into training samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig {
    /// Frames per graph history, the newest included.
    pub history: usize,
    /// Keep every `stride`-th labeled frame.
    pub stride: usize,
    /// Drop frames with fewer candidate DIAs.
    pub min_candidates: usize,
    pub normalization: Normalization,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self { history: DEFAULT_MAX_HISTORY, stride: 1, min_candidates: 1, normalization: Normalization::default() }
    }
}

/// Training samples of one labeled episode; `exs` are the per-frame
/// extractions of the episode.
pub fn episode_samples(exs: &[Extraction], labels: &[FrameLabel], cfg: &SampleConfig) -> Result<Vec<Sample>, SimError> {
    let Some(first) = labels.first() else { return Ok(Vec::new()) };
    let stride = cfg.stride.max(1);
    let mut out = Vec::new();
    for lab in labels.iter().filter(|l| (l.frame - first.frame) % stride == 0) {
        let start = (lab.frame + 1).saturating_sub(cfg.history.max(1));
        let mut hist = GraphHistory::new(cfg.history.max(1));
        for ex in &exs[start..=lab.frame] {
            hist.push(SemanticGraph2D::from_extraction(ex)?)?;
        }
        let input = hist.to_input(&cfg.normalization)?;
        if input.node_count() < cfg.min_candidates {
            continue;
        }
        let target = input.keys.iter().position(|k| k == &lab.key).ok_or(SimError::NoInsertion)?;
        out.push(Sample { input, target, y: lab.y });
    }
    Ok(out)
}

/// Generates episodes and converts them to samples in one pass.
pub fn build_dataset(gen: &GenerationConfig, cfg: &SampleConfig) -> Result<(Vec<Sample>, GenerationStats), SimError> {
    let mut samples = Vec::new();
    let (_, stats) = generate(gen, |item, exs| {
        samples.extend(episode_samples(exs, &item.labels, cfg)?);
        Ok::<(), SimError>(())
    })?;
    Ok((samples, stats))
}

// ---------------------------------------------------------------- files

pub const EPISODE_COLUMNS: [&str; 8] = ["t", "agent_id", "path_id", "s", "d", "v", "a", "length"];
pub const LABEL_COLUMNS: [&str; 7] = ["frame", "t", "path_id", "rear_agent", "y_s1", "y_s2", "y_t"];
pub const LIGHT_COLUMNS: [&str; 3] = ["t", "point_id", "state"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub ego: AgentId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<TemplateKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<GenerationStats>,
    pub episodes: Vec<ManifestEntry>,
}

/// An ingested dataset directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub map: Arc<RoadMap>,
    pub episodes: Vec<(Episode, Vec<FrameLabel>)>,
}

fn light_name(s: LightState) -> &'static str {
    match s {
        LightState::Red => "red",
        LightState::Yellow => "yellow",
        LightState::Green => "green",
    }
}

fn csv_err(file: &str, e: csv::Error) -> FormatError {
    let line = e.position().map_or(0, |p| p.line());
    FormatError::Csv { file: file.to_owned(), line, message: e.to_string() }
}

fn io_err(file: &Path, e: std::io::Error) -> FormatError {
    FormatError::Io(format!("{}: {e}", file.display()))
}

pub fn episode_csv(ep: &Episode) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(EPISODE_COLUMNS).expect("in-memory write");
    for f in &ep.frames {
        for a in &f.agents {
            w.write_record([
                f.t.to_string(),
                a.id.to_string(),
                a.path.to_string(),
                a.pose.s.to_string(),
                a.pose.d.to_string(),
                a.v.to_string(),
                a.a.to_string(),
                a.length.to_string(),
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output")
}

pub fn lights_csv(ep: &Episode) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(LIGHT_COLUMNS).expect("in-memory write");
    for f in &ep.frames {
        for (id, st) in &f.lights {
            w.write_record([f.t.to_string(), id.to_string(), light_name(*st).to_owned()]).expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output")
}

pub fn labels_csv(ep: &Episode, labels: &[FrameLabel]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(LABEL_COLUMNS).expect("in-memory write");
    for l in labels {
        let t = ep.frames.get(l.frame).map_or(f64::NAN, |f| f.t);
        w.write_record([
            l.frame.to_string(),
            t.to_string(),
            l.key.path.to_string(),
            l.key.rear_agent.to_string(),
            l.y[0].to_string(),
            l.y[1].to_string(),
            l.y[2].to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output")
}

/// Streams labeled episodes into a dataset directory.
pub struct DatasetWriter {
    dir: std::path::PathBuf,
    manifest: Manifest,
}

impl DatasetWriter {
    pub fn create(dir: &Path, map: &RoadMap, template: Option<TemplateKind>, seed: Option<u64>) -> Result<Self, FormatError> {
        for sub in ["episodes", "labels"] {
            let p = dir.join(sub);
            fs::create_dir_all(&p).map_err(|e| io_err(&p, e))?;
        }
        let p = dir.join("map.json");
        fs::write(&p, map.to_json()).map_err(|e| io_err(&p, e))?;
        Ok(Self { dir: dir.to_owned(), manifest: Manifest { template, seed, counts: None, episodes: Vec::new() } })
    }

    pub fn write(&mut self, ep: &Episode, labels: &[FrameLabel], seed: Option<u64>) -> Result<(), FormatError> {
        let id = format!("{:03}", self.manifest.episodes.len());
        let p = self.dir.join("episodes").join(format!("{id}.csv"));
        fs::write(&p, episode_csv(ep)).map_err(|e| io_err(&p, e))?;
        if ep.frames.iter().any(|f| !f.lights.is_empty()) {
            let p = self.dir.join("episodes").join(format!("{id}_lights.csv"));
            fs::write(&p, lights_csv(ep)).map_err(|e| io_err(&p, e))?;
        }
        let p = self.dir.join("labels").join(format!("{id}.csv"));
        fs::write(&p, labels_csv(ep, labels)).map_err(|e| io_err(&p, e))?;
        self.manifest.episodes.push(ManifestEntry { id, ego: ep.ego, seed });
        Ok(())
    }

    pub fn finish(mut self, counts: Option<GenerationStats>) -> Result<Manifest, FormatError> {
        self.manifest.counts = counts;
        let p = self.dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&self.manifest).map_err(|e| FormatError::Json(e.to_string()))?;
        fs::write(&p, text + "\n").map_err(|e| io_err(&p, e))?;
        Ok(self.manifest)
    }
}

/// Writes `map.json`, one trajectory and one label CSV per episode and the
/// manifest.
pub fn export_dataset(
    dir: &Path,
    map: &RoadMap,
    template: Option<TemplateKind>,
    seed: Option<u64>,
    episodes: &[(Episode, Vec<FrameLabel>)],
) -> Result<Manifest, FormatError> {
    let mut w = DatasetWriter::create(dir, map, template, seed)?;
    for (ep, labels) in episodes {
        w.write(ep, labels, None)?;
    }
    w.finish(None)
}

struct Table {
    file: String,
    columns: BTreeMap<String, usize>,
    rows: Vec<(u64, csv::StringRecord)>,
}

impl Table {
    fn parse(file: &str, text: &str, required: &[&str]) -> Result<Self, FormatError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = rdr.headers().map_err(|e| csv_err(file, e))?.clone();
        let columns: BTreeMap<String, usize> = headers.iter().enumerate().map(|(i, h)| (h.to_owned(), i)).collect();
        for c in required {
            if !columns.contains_key(*c) {
                return Err(FormatError::MissingColumn { file: file.to_owned(), column: (*c).to_owned() });
            }
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| csv_err(file, e))?;
            let line = rec.position().map_or(0, |p| p.line());
            rows.push((line, rec));
        }
        Ok(Self { file: file.to_owned(), columns, rows })
    }

    fn get<T: std::str::FromStr>(&self, row: usize, column: &str) -> Result<T, FormatError> {
        let (line, rec) = &self.rows[row];
        let raw = rec.get(self.columns[column]).unwrap_or("");
        raw.parse().map_err(|_| FormatError::Csv {
            file: self.file.clone(),
            line: *line,
            message: format!("cannot parse `{raw}` as {column}"),
        })
    }

    fn fail(&self, row: usize, message: impl Into<String>) -> FormatError {
        FormatError::Csv { file: self.file.clone(), line: self.rows[row].0, message: message.into() }
    }
}

/// Parses a trajectory CSV (`t, agent_id, path_id, s, d, v, a, length`, one
/// row per agent and time step, rows grouped by strictly increasing `t`).
pub fn parse_episode_csv(file: &str, text: &str, map: Arc<RoadMap>, ego: AgentId) -> Result<Episode, FormatError> {
    let table = Table::parse(file, text, &EPISODE_COLUMNS)?;
    let mut frames: Vec<Frame> = Vec::new();
    for i in 0..table.rows.len() {
        let t: f64 = table.get(i, "t")?;
        let path = PathId::new(table.get::<String>(i, "path_id")?);
        if map.path(&path).is_none() {
            return Err(table.fail(i, format!("unknown path `{path}`")));
        }
        let agent = AgentState {
            id: AgentId(table.get(i, "agent_id")?),
            path,
            pose: FrenetPose::new(table.get(i, "s")?, table.get(i, "d")?),
            v: table.get(i, "v")?,
            a: table.get(i, "a")?,
            length: table.get(i, "length")?,
        };
        match frames.last_mut() {
            Some(f) if f.t == t => f.agents.push(agent),
            Some(f) if f.t > t => return Err(table.fail(i, format!("time {t} after {}", f.t))),
            _ => frames.push(Frame { t, agents: vec![agent], lights: BTreeMap::new() }),
        }
    }
    Ok(Episode { template: None, map, ego, frames })
}

pub fn parse_lights_csv(file: &str, text: &str, ep: &mut Episode) -> Result<(), FormatError> {
    let table = Table::parse(file, text, &LIGHT_COLUMNS)?;
    for i in 0..table.rows.len() {
        let t: f64 = table.get(i, "t")?;
        let raw: String = table.get(i, "point_id")?;
        let id = PointId::parse(&raw).ok_or_else(|| table.fail(i, format!("bad point id `{raw}`")))?;
        let state = match table.get::<String>(i, "state")?.as_str() {
            "red" => LightState::Red,
            "yellow" => LightState::Yellow,
            "green" => LightState::Green,
            other => return Err(table.fail(i, format!("unknown light state `{other}`"))),
        };
        let frame = ep.frames.iter_mut().find(|f| f.t == t).ok_or_else(|| table.fail(i, format!("no frame at t = {t}")))?;
        frame.lights.insert(id, state);
    }
    Ok(())
}

pub fn parse_labels_csv(file: &str, text: &str) -> Result<Vec<FrameLabel>, FormatError> {
    let table = Table::parse(file, text, &LABEL_COLUMNS)?;
    (0..table.rows.len())
        .map(|i| {
            Ok(FrameLabel {
                frame: table.get(i, "frame")?,
                key: DiaKey { path: PathId::new(table.get::<String>(i, "path_id")?), rear_agent: AgentId(table.get(i, "rear_agent")?) },
                y: [table.get(i, "y_s1")?, table.get(i, "y_s2")?, table.get(i, "y_t")?],
            })
        })
        .collect()
}

fn read(p: &Path) -> Result<String, FormatError> {
    fs::read_to_string(p).map_err(|e| io_err(p, e))
}

/// Reads a dataset directory. Episodes without a label file are labeled on
/// the fly with `cfg`; those that never insert get no labels.
pub fn ingest_dataset(dir: &Path, cfg: &DynamicEnvConfig) -> Result<Dataset, FormatError> {
    let manifest: Manifest =
        serde_json::from_str(&read(&dir.join("manifest.json"))?).map_err(|e| FormatError::Json(format!("manifest.json: {e}")))?;
    let map = Arc::new(RoadMap::from_json(&read(&dir.join("map.json"))?)?);
    let mut episodes = Vec::with_capacity(manifest.episodes.len());
    for entry in &manifest.episodes {
        let name = format!("episodes/{}.csv", entry.id);
        let mut ep = parse_episode_csv(&name, &read(&dir.join(&name))?, map.clone(), entry.ego)?;
        ep.template = manifest.template;
        let lights = dir.join("episodes").join(format!("{}_lights.csv", entry.id));
        if lights.exists() {
            parse_lights_csv(&format!("episodes/{}_lights.csv", entry.id), &read(&lights)?, &mut ep)?;
        }
        let label_name = format!("labels/{}.csv", entry.id);
        let label_path = dir.join(&label_name);
        let labels = if label_path.exists() {
            parse_labels_csv(&label_name, &read(&label_path)?)?
        } else {
            let exs = episode_extractions(&ep, cfg)?;
            match label_with(&ep, &exs, cfg) {
                Ok(l) => l,
                Err(SimError::NoInsertion) => Vec::new(),
                Err(e) => return Err(e.into()),
            }
        };
        episodes.push((ep, labels));
    }
    Ok(Dataset { manifest, map, episodes })
}

/// Samples of an ingested dataset.
pub fn dataset_samples(ds: &Dataset, dynamic: &DynamicEnvConfig, cfg: &SampleConfig) -> Result<Vec<Sample>, SimError> {
    let mut out = Vec::new();
    for (ep, labels) in &ds.episodes {
        if labels.is_empty() {
            continue;
        }
        let exs = episode_extractions(ep, dynamic)?;
        out.extend(episode_samples(&exs, labels, cfg)?);
    }
    Ok(out)
}
