//! Command-line front door: dataset generation, training, streaming
//! simulation, threshold sweeps, and architecture search.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::KeyValueConfig;
use crate::detector::{run_stream, DetectorConfig};
use crate::error::{Error, Result};
use crate::eval;
use crate::nn::{self, InputMode, Network, NetworkSpec, OutputMode, TrainConfig};
use crate::pmbo::{self, HyperParams, SearchConfig};
use crate::report::{self, ConfigEcho};
use crate::signal::{downsample, RawSignalSpec, PipelineConfig};
use crate::synth::{self, Phase, Recording, SyntheticConfig};

#[derive(Parser, Debug)]
#[command(
    name = "portiloop-sim",
    about = "Closed-loop EEG spindle detection simulator: synthetic data, training, streaming detection, sweeps, and architecture search"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Plain-text `key = value` configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed (overrides the config file's `seed`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Inline overrides, `--set key=value`, applied after the file.
    #[arg(long = "set", global = true)]
    pub overrides: Vec<String>,
    /// Detection threshold (simulate).
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    /// Worker count (pmbo).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Experiment budget (pmbo).
    #[arg(long, global = true)]
    pub budget: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate synthetic recordings with labels.
    Synth,
    /// Train a detector on a recording directory.
    Train,
    /// Stream a recording (or raw signal) through a trained detector.
    Simulate,
    /// Re-run the stimulation policy over a threshold grid.
    Sweep,
    /// Pareto architecture search.
    Pmbo,
}

fn resolved_config(cli: &Cli) -> Result<KeyValueConfig> {
    let mut cfg = match &cli.config {
        Some(path) => KeyValueConfig::load(path)?,
        None => KeyValueConfig::new(),
    };
    cfg.apply_overrides(&cli.overrides)?;
    if let Some(seed) = cli.seed {
        cfg.set("seed", seed);
    }
    if let Some(t) = cli.threshold {
        cfg.set("threshold", t);
    }
    if let Some(w) = cli.workers {
        cfg.set("workers", w);
    }
    if let Some(b) = cli.budget {
        cfg.set("budget", b);
    }
    Ok(cfg)
}

fn echo(cfg: &KeyValueConfig) -> ConfigEcho {
    cfg.entries().clone()
}

/// Thread cap from the environment; also limits pmbo workers.
fn env_thread_cap() -> Option<usize> {
    std::env::var("PORTILOOP_SIM_THREADS").ok().and_then(|v| v.parse().ok()).filter(|&n| n > 0)
}

pub fn run(cli: Cli) -> Result<()> {
    std::fs::create_dir_all(&cli.out)?;
    match cli.command {
        Command::Synth => cmd_synth(&cli),
        Command::Train => cmd_train(&cli),
        Command::Simulate => cmd_simulate(&cli),
        Command::Sweep => cmd_sweep(&cli),
        Command::Pmbo => cmd_pmbo(&cli),
    }
}

const SYNTH_KEYS: &[&str] = &[
    "seed", "subjects", "duration_s", "phase", "density", "noise_exponent", "snr_low", "snr_high",
    "freq_low", "freq_high", "burst_min_s", "burst_max_s", "export_csv",
];

fn parse_phase(cfg: &KeyValueConfig) -> Result<Phase> {
    match cfg.get_or::<u8>("phase", 1)? {
        1 => Ok(Phase::One),
        2 => Ok(Phase::Two),
        other => Err(Error::Parameter(format!("phase must be 1 or 2, got {other}"))),
    }
}

fn cmd_synth(cli: &Cli) -> Result<()> {
    let cfg = resolved_config(cli)?;
    cfg.reject_unknown_keys(SYNTH_KEYS)?;
    let seed: u64 = cfg.get_or("seed", 0)?;
    let subjects: u32 = cfg.get_or("subjects", 20)?;
    let phase = parse_phase(&cfg)?;
    let synth_cfg = SyntheticConfig {
        seed,
        duration_s: cfg.get_or("duration_s", 360.0)?,
        spindle_density: cfg.get_or("density", 0.05)?,
        noise_exponent: cfg.get_or("noise_exponent", 1.0)?,
        snr_range: (cfg.get_or("snr_low", 0.5)?, cfg.get_or("snr_high", 3.0)?),
        frequency_range_hz: (cfg.get_or("freq_low", 12.0)?, cfg.get_or("freq_high", 16.0)?),
        duration_range_s: (cfg.get_or("burst_min_s", 0.8)?, cfg.get_or("burst_max_s", 2.2)?),
        ..SyntheticConfig::default()
    };
    synth_cfg.validate()?;
    let export_csv: bool = cfg.get_or("export_csv", false)?;

    let mut stats = Vec::new();
    let mut total_fraction = 0.0;
    for subject in 0..subjects {
        let (rec, anns) = synth::generate_recording_with_annotations(&synth_cfg, subject, phase)?;
        let file = format!("subject_{subject:03}.plrc");
        synth::io::write_recording(&cli.out.join(&file), &rec)?;
        if export_csv {
            synth::io::export_recording_csv(
                &cli.out.join(format!("subject_{subject:03}.csv")),
                &rec,
            )?;
        }
        total_fraction += rec.positive_fraction();
        stats.push(report::SubjectStats {
            subject_id: subject,
            file,
            duration_s: rec.duration_s(),
            positive_fraction: rec.positive_fraction(),
            spindle_count: anns.len(),
        });
    }
    let manifest = report::SynthManifest {
        config: echo(&cfg),
        synthetic: synth_cfg,
        mean_positive_fraction: total_fraction / subjects.max(1) as f64,
        subjects: stats,
    };
    report::write_json(&cli.out.join("manifest.json"), &manifest)?;
    println!("wrote {} recordings to {}", subjects, cli.out.display());
    Ok(())
}

const SPEC_KEYS: &[&str] = &[
    "window_size_s", "dilation_s", "cnn_layers", "cnn_channels", "conv_kernel", "conv_stride",
    "conv_dilation", "pool_kernel", "pool_stride", "pool_dilation", "rnn_layers", "rnn_hidden",
    "inputs", "mode",
];

fn parse_spec(cfg: &KeyValueConfig) -> Result<NetworkSpec> {
    let d = NetworkSpec::default();
    let inputs = match cfg.get("inputs").unwrap_or("clean") {
        "clean" => InputMode::Clean,
        "clean+envelope" => InputMode::CleanEnvelope,
        other => return Err(Error::Parameter(format!("inputs must be `clean` or `clean+envelope`, got `{other}`"))),
    };
    let mode = match cfg.get("mode").unwrap_or("classifier") {
        "classifier" => OutputMode::Classifier,
        "regressor" => OutputMode::Regressor,
        other => return Err(Error::Parameter(format!("mode must be `classifier` or `regressor`, got `{other}`"))),
    };
    let spec = NetworkSpec {
        sample_rate_hz: 250.0,
        window_size_s: cfg.get_or("window_size_s", d.window_size_s)?,
        dilation_s: cfg.get_or("dilation_s", d.dilation_s)?,
        cnn_layers: cfg.get_or("cnn_layers", d.cnn_layers)?,
        cnn_channels: cfg.get_or("cnn_channels", d.cnn_channels)?,
        conv_kernel: cfg.get_or("conv_kernel", d.conv_kernel)?,
        conv_stride: cfg.get_or("conv_stride", d.conv_stride)?,
        conv_dilation: cfg.get_or("conv_dilation", d.conv_dilation)?,
        pool_kernel: cfg.get_or("pool_kernel", d.pool_kernel)?,
        pool_stride: cfg.get_or("pool_stride", d.pool_stride)?,
        pool_dilation: cfg.get_or("pool_dilation", d.pool_dilation)?,
        rnn_layers: cfg.get_or("rnn_layers", d.rnn_layers)?,
        rnn_hidden: cfg.get_or("rnn_hidden", d.rnn_hidden)?,
        inputs,
        mode,
    };
    spec.validate()?;
    Ok(spec)
}

const TRAIN_KEYS_ONLY: &[&str] = &[
    "seed", "dataset_dir", "learning_rate", "weight_decay", "max_epochs", "patience",
    "smoothing_factor", "batches_per_epoch", "batch_size", "dropout", "sequence_length",
    "validation_max_windows", "notch_freq_hz",
];

fn parse_train_config(cfg: &KeyValueConfig, seed: u64) -> Result<TrainConfig> {
    let d = TrainConfig::default();
    Ok(TrainConfig {
        learning_rate: cfg.get_or("learning_rate", d.learning_rate)?,
        weight_decay: cfg.get_or("weight_decay", d.weight_decay)?,
        max_epochs: cfg.get_or("max_epochs", d.max_epochs)?,
        patience: cfg.get_or("patience", d.patience)?,
        smoothing_factor: cfg.get_or("smoothing_factor", d.smoothing_factor)?,
        batches_per_epoch: cfg.get_or("batches_per_epoch", d.batches_per_epoch)?,
        batch_size: cfg.get_or("batch_size", d.batch_size)?,
        dropout: cfg.get_or("dropout", d.dropout)?,
        sequence_length: cfg.get_or("sequence_length", d.sequence_length)?,
        validation_max_windows: cfg.get_or("validation_max_windows", d.validation_max_windows)?,
        seed,
    })
}

fn pipeline_from(cfg: &KeyValueConfig) -> Result<PipelineConfig> {
    Ok(PipelineConfig {
        notch_freq_hz: cfg.get_or("notch_freq_hz", 60.0)?,
        ..PipelineConfig::default()
    })
}

fn load_dataset(dir: &Path) -> Result<Vec<Recording>> {
    if !dir.is_dir() {
        return Err(Error::Parameter(format!("dataset_dir `{}` is not a directory", dir.display())));
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|e| e == "plrc").unwrap_or(false))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Parameter(format!("no .plrc recordings in `{}`", dir.display())));
    }
    files.iter().map(|p| synth::io::read_recording(p)).collect()
}

fn cmd_train(cli: &Cli) -> Result<()> {
    let cfg = resolved_config(cli)?;
    let known: Vec<&str> = TRAIN_KEYS_ONLY.iter().chain(SPEC_KEYS).copied().collect();
    cfg.reject_unknown_keys(&known)?;
    let seed: u64 = cfg.get_or("seed", 0)?;
    let dataset_dir = PathBuf::from(
        cfg.get("dataset_dir")
            .ok_or_else(|| Error::Parameter("train requires dataset_dir".into()))?,
    );
    let spec = parse_spec(&cfg)?;
    let train_cfg = parse_train_config(&cfg, seed)?;
    let pipeline_cfg = pipeline_from(&cfg)?;

    let recordings = load_dataset(&dataset_dir)?;
    let split = synth::split_subjects(&recordings, seed)?;
    let prepare = |idxs: &[usize]| -> Result<Vec<synth::PreparedRecording>> {
        idxs.iter()
            .map(|&i| synth::PreparedRecording::from_recording(&recordings[i], &pipeline_cfg))
            .collect()
    };
    let train_set = prepare(&split.train)?;
    let val_set = prepare(&split.validation)?;

    let net = Network::init(&spec, seed)?;
    let (trained, history) = nn::train(net, &train_cfg, &train_set, &val_set)?;
    let val_f1 =
        nn::train::evaluate_samplewise_f1(&trained, &val_set, 0.5, train_cfg.validation_max_windows);

    let weights_file = "weights.plnw".to_string();
    nn::save_weights(&cli.out.join(&weights_file), &trained)?;
    let rep = report::TrainReport {
        config: echo(&cfg),
        parameter_count: nn::count_parameters(&spec)?,
        spec,
        train: train_cfg,
        pipeline: pipeline_cfg,
        weights_file,
        history,
        validation_f1: val_f1,
    };
    report::write_json(&cli.out.join("train_report.json"), &rep)?;
    println!(
        "trained: best epoch {}, validation f1 {:.3}, {} parameters",
        rep.history.best_epoch, val_f1, rep.parameter_count
    );
    Ok(())
}

const SIM_KEYS: &[&str] = &[
    "seed", "weights", "input", "input_sidecar", "threshold", "stride_samples",
    "dilation_samples", "constant_delay_ms", "stimulus_duration_ms", "refractory_ms",
    "notch_freq_hz",
];

fn parse_detector(cfg: &KeyValueConfig) -> Result<DetectorConfig> {
    let d = DetectorConfig::default();
    let det = DetectorConfig {
        threshold: cfg.get_or("threshold", d.threshold)?,
        stride_samples: cfg.get_or("stride_samples", d.stride_samples)?,
        dilation_samples: cfg.get_or("dilation_samples", d.dilation_samples)?,
        constant_delay_ms: cfg.get_or("constant_delay_ms", d.constant_delay_ms)?,
        stimulus_duration_ms: cfg.get_or("stimulus_duration_ms", d.stimulus_duration_ms)?,
        refractory_ms: cfg.get_or("refractory_ms", d.refractory_ms)?,
    };
    det.validate()?;
    Ok(det)
}

/// Loads a `.plrc` recording, or a raw f32/CSV signal (sidecar required),
/// downsampling to 250 Hz when the declared rate is a multiple of it.
fn load_input_signal(cfg: &KeyValueConfig) -> Result<(Recording, bool)> {
    let input = PathBuf::from(
        cfg.get("input").ok_or_else(|| Error::Parameter("missing `input` path".into()))?,
    );
    let is_recording = input.extension().map(|e| e == "plrc").unwrap_or(false);
    if is_recording {
        return Ok((synth::io::read_recording(&input)?, true));
    }
    let sidecar = PathBuf::from(cfg.get("input_sidecar").ok_or_else(|| {
        Error::Parameter("raw input needs `input_sidecar` declaring sample_rate_hz".into())
    })?);
    let raw_spec = RawSignalSpec::from_sidecar(&sidecar)?;
    let mut samples = crate::signal::raw::load_raw_signal(&input, &raw_spec)?;
    if raw_spec.sample_rate_hz != 250.0 {
        samples = downsample(&samples, raw_spec.sample_rate_hz, 250.0)?;
    }
    let n = samples.len();
    Ok((
        Recording {
            subject_id: 0,
            phase: Phase::One,
            sample_rate_hz: 250.0,
            samples,
            scores: vec![0.0; n],
            binary: vec![false; n],
        },
        false,
    ))
}

fn cmd_simulate(cli: &Cli) -> Result<()> {
    let cfg = resolved_config(cli)?;
    cfg.reject_unknown_keys(SIM_KEYS)?;
    let weights = PathBuf::from(
        cfg.get("weights").ok_or_else(|| Error::Parameter("simulate requires weights".into()))?,
    );
    let net = nn::load_weights(&weights)?;
    let detector_cfg = parse_detector(&cfg)?;
    let pipeline_cfg = pipeline_from(&cfg)?;
    let (recording, labeled) = load_input_signal(&cfg)?;

    let run = run_stream(&recording, &net, &detector_cfg, &pipeline_cfg)?;
    let (event_metrics, histogram) = if labeled {
        let intervals = recording.spindle_intervals_s();
        let m = eval::stimulation_prf(&run.events, &intervals)?;
        let h = eval::delay_distribution(&m.delays_ms);
        (Some(m), Some(h))
    } else {
        (None, None)
    };

    report::write_events_csv(&cli.out.join("events.csv"), &run.events)?;
    report::write_scores_csv(&cli.out.join("scores.csv"), &run.scores)?;
    let rep = report::SimulateReport {
        config: echo(&cfg),
        pipeline: pipeline_cfg,
        detector: detector_cfg,
        timing: report::Timing::from(&run),
        scores: run.scores,
        events: run.events,
        event_metrics,
        histogram,
    };
    report::write_json(&cli.out.join("simulate_report.json"), &rep)?;
    println!(
        "simulate: {} events, threshold {}, {:.0} samples/s",
        rep.events.len(),
        rep.detector.threshold,
        rep.timing.samples_per_second
    );
    Ok(())
}

const SWEEP_KEYS: &[&str] = &[
    "seed", "weights", "dataset_dir", "input", "threshold_lo", "threshold_hi", "threshold_step",
    "stride_samples", "dilation_samples", "constant_delay_ms", "stimulus_duration_ms",
    "refractory_ms", "notch_freq_hz",
];

fn cmd_sweep(cli: &Cli) -> Result<()> {
    let cfg = resolved_config(cli)?;
    cfg.reject_unknown_keys(SWEEP_KEYS)?;
    let weights = PathBuf::from(
        cfg.get("weights").ok_or_else(|| Error::Parameter("sweep requires weights".into()))?,
    );
    let net = nn::load_weights(&weights)?;
    let detector_cfg = parse_detector(&cfg)?;
    let pipeline_cfg = pipeline_from(&cfg)?;

    let recordings: Vec<Recording> = match cfg.get("dataset_dir") {
        Some(dir) => load_dataset(Path::new(dir))?,
        None => vec![load_input_signal(&cfg)?.0],
    };

    let lo: f64 = cfg.get_or("threshold_lo", 0.05)?;
    let hi: f64 = cfg.get_or("threshold_hi", 0.95)?;
    let step: f64 = cfg.get_or("threshold_step", 0.01)?;
    if step <= 0.0 || hi < lo {
        return Err(Error::Parameter("bad threshold grid".into()));
    }
    let mut thresholds = Vec::new();
    let mut t = lo;
    while t <= hi + 1e-12 {
        thresholds.push(t.min(1.0));
        t += step;
    }

    // One inference pass per recording; the sweep replays the policy.
    let mut cached: Vec<(Vec<(f64, f64)>, Vec<(f64, f64)>)> = Vec::new();
    for rec in &recordings {
        let run = run_stream(rec, &net, &detector_cfg, &pipeline_cfg)?;
        cached.push((run.scores, rec.spindle_intervals_s()));
    }
    let streams: Vec<(&[(f64, f64)], &[(f64, f64)])> =
        cached.iter().map(|(s, l)| (s.as_slice(), l.as_slice())).collect();
    let sweep = eval::threshold_sweep_pooled(&streams, &detector_cfg, &thresholds)?;

    // Detailed metrics at the argmax-f1 threshold.
    let best_threshold = sweep.best.as_ref().map(|b| b.threshold).unwrap_or(0.5);
    let mut all_delays = Vec::new();
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    let (mut stp, mut sfp, mut sfn) = (0u64, 0u64, 0u64);
    for (rec, (scores, intervals)) in recordings.iter().zip(&cached) {
        let events = crate::detector::apply_policy(scores, best_threshold, &detector_cfg)?;
        let m = eval::stimulation_prf(&events, intervals)?;
        tp += m.tp;
        fp += m.fp;
        fn_ += m.fn_;
        all_delays.extend_from_slice(&m.delays_ms);
        // Samplewise metrics on the stride grid at the same threshold.
        let fs = rec.sample_rate_hz;
        let preds: Vec<bool> = scores.iter().map(|&(_, s)| s >= best_threshold).collect();
        let labels: Vec<bool> = scores
            .iter()
            .map(|&(t, _)| rec.binary[(t * fs).round() as usize])
            .collect();
        let sm = eval::samplewise_prf(&preds, &labels)?;
        stp += sm.tp;
        sfp += sm.fp;
        sfn += sm.fn_;
    }
    let event_metrics = {
        let denom_p = tp + fp;
        let denom_r = tp + fn_;
        let precision = if denom_p == 0 { 0.0 } else { tp as f64 / denom_p as f64 };
        let recall = if denom_r == 0 { 0.0 } else { tp as f64 / denom_r as f64 };
        let f1 = if 2 * tp + fp + fn_ == 0 {
            0.0
        } else {
            2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
        };
        eval::StimulationMetrics { precision, recall, f1, tp, fp, fn_, delays_ms: all_delays.clone() }
    };
    let sample_metrics = {
        let precision = if stp + sfp == 0 { 0.0 } else { stp as f64 / (stp + sfp) as f64 };
        let recall = if stp + sfn == 0 { 0.0 } else { stp as f64 / (stp + sfn) as f64 };
        let f1 = if 2 * stp + sfp + sfn == 0 {
            0.0
        } else {
            2.0 * stp as f64 / (2 * stp + sfp + sfn) as f64
        };
        eval::SampleMetrics { precision, recall, f1, tp: stp, fp: sfp, fn_: sfn }
    };
    let histogram = eval::delay_distribution(&all_delays);

    report::write_sweep_csv(&cli.out.join("sweep.csv"), &sweep)?;
    report::write_histogram_csv(&cli.out.join("histogram.csv"), &histogram)?;
    let rep = report::EvaluationReport {
        config: echo(&cfg),
        sample_metrics: Some(sample_metrics),
        event_metrics: Some(event_metrics),
        sweep,
        histogram,
    };
    report::write_json(&cli.out.join("sweep_report.json"), &rep)?;
    if let Some(best) = &rep.sweep.best {
        println!(
            "sweep: best threshold {:.2} (p {:.3}, r {:.3}, f1 {:.3})",
            best.threshold, best.precision, best.recall, best.f1
        );
    }
    Ok(())
}

const PMBO_KEYS: &[&str] = &[
    "seed", "budget", "workers", "candidates", "noise1", "noise2", "hw_low", "hw_high",
    "density_bins", "gaussian_scale", "resample_cap", "meta_iterations", "meta_hidden",
    "meta_learning_rate", "meta_weight_decay", "objective", "resume", "dataset_dir",
    "obj_epochs", "obj_batches", "obj_sequence_length", "obj_subjects", "notch_freq_hz",
];

fn cmd_pmbo(cli: &Cli) -> Result<()> {
    let cfg = resolved_config(cli)?;
    cfg.reject_unknown_keys(PMBO_KEYS)?;
    let seed: u64 = cfg.get_or("seed", 0)?;
    let mut workers: usize = cfg.get_or("workers", 2)?;
    if let Some(cap) = env_thread_cap() {
        workers = workers.min(cap);
    }
    let sampler = pmbo::SamplerConfig {
        candidates_per_proposal: cfg.get_or("candidates", 200)?,
        uniform_fraction: cfg.get_or("noise1", 0.25)?,
        random_selection_prob: cfg.get_or("noise2", 0.1)?,
        hardware_range: (cfg.get_or("hw_low", 1000)?, cfg.get_or("hw_high", 80000)?),
        density_bins: cfg.get_or("density_bins", 10)?,
        gaussian_scale: cfg.get_or("gaussian_scale", 0.1)?,
        resample_cap: cfg.get_or("resample_cap", 1000)?,
    };
    let meta = pmbo::MetaNetworkConfig {
        hidden_size: cfg.get_or("meta_hidden", 200)?,
        learning_rate: cfg.get_or("meta_learning_rate", 0.05)?,
        weight_decay: cfg.get_or("meta_weight_decay", 0.01)?,
        iterations: cfg.get_or("meta_iterations", 100)?,
        seed,
    };
    let search_cfg = SearchConfig {
        sampler,
        meta,
        n_workers: workers.max(1),
        budget: cfg.get_or("budget", 20)?,
        seed,
    };

    let log_path = cli.out.join("search.jsonl");
    let resume: bool = cfg.get_or("resume", false)?;
    let initial = if resume && log_path.exists() {
        pmbo::load_search_log(&log_path)?
    } else {
        Vec::new()
    };
    let mut log_file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)?;
    if !resume {
        log_file.set_len(0)?;
    }

    let objective_kind = cfg.get("objective").unwrap_or("surrogate").to_string();
    let outcome = match objective_kind.as_str() {
        "surrogate" => pmbo::run_search(
            &pmbo::HyperSpace::default(),
            &search_cfg,
            pmbo::surrogate_objective,
            initial,
            Some(&mut log_file),
        )?,
        "train" => {
            let dir = PathBuf::from(cfg.get("dataset_dir").ok_or_else(|| {
                Error::Parameter("objective=train requires dataset_dir".into())
            })?);
            let pipeline_cfg = pipeline_from(&cfg)?;
            let recordings = load_dataset(&dir)?;
            let max_subjects: usize = cfg.get_or("obj_subjects", recordings.len())?;
            let recordings: Vec<Recording> =
                recordings.into_iter().take(max_subjects.max(10)).collect();
            let split = synth::split_subjects(&recordings, seed)?;
            let prepare = |idxs: &[usize]| -> Result<Vec<synth::PreparedRecording>> {
                idxs.iter()
                    .map(|&i| {
                        synth::PreparedRecording::from_recording(&recordings[i], &pipeline_cfg)
                    })
                    .collect()
            };
            let train_set = prepare(&split.train)?;
            let val_set = prepare(&split.validation)?;
            let obj_epochs: usize = cfg.get_or("obj_epochs", 2)?;
            let obj_batches: usize = cfg.get_or("obj_batches", 20)?;
            let obj_seq: usize = cfg.get_or("obj_sequence_length", 8)?;
            let objective = move |h: &HyperParams| -> std::result::Result<(f64, u64), String> {
                let spec = h.to_spec(InputMode::Clean, OutputMode::Classifier, 250.0);
                let lh = nn::count_parameters(&spec).map_err(|e| e.to_string())?;
                let tc = TrainConfig {
                    learning_rate: h.learning_rate,
                    batch_size: h.batch_size.min(64),
                    max_epochs: obj_epochs,
                    patience: obj_epochs,
                    batches_per_epoch: obj_batches,
                    sequence_length: obj_seq,
                    validation_max_windows: 500,
                    seed,
                    ..TrainConfig::default()
                };
                let net = Network::init(&spec, seed).map_err(|e| e.to_string())?;
                let (trained, _) =
                    nn::train(net, &tc, &train_set, &val_set).map_err(|e| e.to_string())?;
                let f1 = nn::train::evaluate_samplewise_f1(&trained, &val_set, 0.5, 500);
                Ok((1.0 - f1, lh))
            };
            pmbo::run_search(
                &pmbo::HyperSpace::default(),
                &search_cfg,
                objective,
                initial,
                Some(&mut log_file),
            )?
        }
        other => {
            return Err(Error::Parameter(format!(
                "objective must be `surrogate` or `train`, got `{other}`"
            )))
        }
    };

    let hv = pmbo::hypervolume(&outcome.front, search_cfg.sampler.hardware_range);
    let rep = report::PmboReport {
        config: echo(&cfg),
        completed: outcome.dataset.len(),
        failed: outcome.failed,
        front: outcome.front,
        hypervolume: hv,
        log_file: "search.jsonl".to_string(),
    };
    report::write_json(&cli.out.join("pmbo_report.json"), &rep)?;
    println!(
        "pmbo: {} experiments, front of {} (hypervolume {:.4})",
        rep.completed,
        rep.front.len(),
        hv
    );
    Ok(())
}

/// Exit code for an error, per the documented convention.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Parameter(_) | Error::Format(_) | Error::Data(_) | Error::Shape(_) | Error::Io(_) => 2,
        Error::Contract(_) | Error::Training(_) | Error::SearchSpaceExhausted(_) => 3,
    }
}
