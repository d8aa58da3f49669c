//! JSON report types written by the CLI, with CSV mirrors for plotting.
//!
//! Every report embeds the fully resolved `key = value` configuration so
//! a run can be reproduced from its outputs alone.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::detector::{DetectorConfig, StimulusEvent, StreamRun};
use crate::error::Result;
use crate::eval::{DelayHistogram, SampleMetrics, StimulationMetrics, SweepResult};
use crate::nn::{NetworkSpec, TrainConfig, TrainHistory};
use crate::pmbo::Experiment;
use crate::signal::PipelineConfig;
use crate::synth::SyntheticConfig;

pub type ConfigEcho = BTreeMap<String, String>;

#[derive(Debug, Serialize)]
pub struct SubjectStats {
    pub subject_id: u32,
    pub file: String,
    pub duration_s: f64,
    pub positive_fraction: f64,
    pub spindle_count: usize,
}

#[derive(Debug, Serialize)]
pub struct SynthManifest {
    pub config: ConfigEcho,
    pub synthetic: SyntheticConfig,
    pub subjects: Vec<SubjectStats>,
    pub mean_positive_fraction: f64,
}

#[derive(Debug, Serialize)]
pub struct TrainReport {
    pub config: ConfigEcho,
    pub spec: NetworkSpec,
    pub train: TrainConfig,
    pub pipeline: PipelineConfig,
    pub parameter_count: u64,
    pub weights_file: String,
    pub history: TrainHistory,
    pub validation_f1: f64,
}

#[derive(Debug, Serialize)]
pub struct SimulateReport {
    pub config: ConfigEcho,
    pub pipeline: PipelineConfig,
    pub detector: DetectorConfig,
    pub scores: Vec<(f64, f64)>,
    pub events: Vec<StimulusEvent>,
    pub event_metrics: Option<StimulationMetrics>,
    pub histogram: Option<DelayHistogram>,
    /// Wall-clock timing; excluded from reproducibility guarantees.
    pub timing: Timing,
}

#[derive(Debug, Serialize)]
pub struct Timing {
    pub samples_processed: usize,
    pub elapsed_s: f64,
    pub samples_per_second: f64,
}

impl From<&StreamRun> for Timing {
    fn from(r: &StreamRun) -> Self {
        Self {
            samples_processed: r.samples_processed,
            elapsed_s: r.elapsed_s,
            samples_per_second: r.samples_per_second,
        }
    }
}

/// The evaluation report schema: config, sample metrics, event metrics,
/// sweep rows, delay histogram.
#[derive(Debug, Serialize)]
pub struct EvaluationReport {
    pub config: ConfigEcho,
    pub sample_metrics: Option<SampleMetrics>,
    pub event_metrics: Option<StimulationMetrics>,
    pub sweep: SweepResult,
    pub histogram: DelayHistogram,
}

#[derive(Debug, Serialize)]
pub struct PmboReport {
    pub config: ConfigEcho,
    pub completed: usize,
    pub failed: usize,
    pub front: Vec<Experiment>,
    pub hypervolume: f64,
    pub log_file: String,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| crate::error::Error::Format(format!("serializing report: {e}")))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn write_events_csv(path: &Path, events: &[StimulusEvent]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "trigger_time_s")?;
    for e in events {
        writeln!(w, "{}", e.trigger_time_s)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_scores_csv(path: &Path, scores: &[(f64, f64)]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "window_end_time_s,score")?;
    for (t, s) in scores {
        writeln!(w, "{t},{s}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep_csv(path: &Path, sweep: &SweepResult) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "threshold,precision,recall,f1,stimuli")?;
    for p in &sweep.points {
        writeln!(w, "{},{},{},{},{}", p.threshold, p.precision, p.recall, p.f1, p.stimuli)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_histogram_csv(path: &Path, hist: &DelayHistogram) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "edge_lo_ms,edge_hi_ms,count")?;
    for (i, &c) in hist.counts.iter().enumerate() {
        writeln!(w, "{},{},{}", hist.edges_ms[i], hist.edges_ms[i + 1], c)?;
    }
    w.flush()?;
    Ok(())
}
