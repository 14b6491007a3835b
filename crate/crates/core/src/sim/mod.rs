//! Synthetic scenarios: parametric maps, scripted drivers, insertion labels
//! and the on-disk dataset format.

mod dataset;
mod engine;
mod label;
mod policy;
mod template;

pub use dataset::{
    build_dataset, dataset_samples, episode_csv, episode_extractions, episode_samples, episode_seed, export_dataset,
    generate, ingest_dataset, labels_csv, lights_csv, parse_episode_csv, parse_labels_csv, parse_lights_csv, Dataset,
    DatasetWriter, GenerationConfig, GenerationStats, LabeledEpisode, Manifest, ManifestEntry, SampleConfig,
    EPISODE_COLUMNS, LABEL_COLUMNS, LIGHT_COLUMNS,
};
pub use engine::{
    simulate, simulate_episode, AgentSetup, Episode, Frame, AFTER_INSERTION, DECISION_DISTANCE, LANE_CHANGE_TIME,
    MAX_DURATION, PRIORITY_RANGE, SIM_DT, STOP_HOLD, VEHICLE_LENGTH,
};
pub use label::{detect_insertion, label_episode, FrameLabel, Insertion};
pub use policy::{DriverPolicy, EMERGENCY_DECEL, JITTER};
pub use template::{
    make_map, Conflict, MapTemplate, PathRole, Scenario, SharedSection, TemplateKind, LANE_WIDTH, MAX_WAYPOINT_SPACING,
};
