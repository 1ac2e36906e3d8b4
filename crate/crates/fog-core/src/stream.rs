//! Fixed-memory streaming simulator: ring-buffered sample ingestion, the
//! per-window feature/inference pipeline, RAS trigger emission and analytic
//! working-set accounting against the 8 KB deployment budget.
//!
//! Predictions are bit-identical to the batch pipeline: the ring hands the
//! extractor the same f32 samples in the same chronological order, and the
//! same model scores them. Debrief samples and recording boundaries reset
//! the ring, mirroring how batch windowing never spans such gaps.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{ExtractionPlan, FeatureExtractor, FeatureSubset, WindowSource};
use crate::ingest::{Episode, Label, Recording, NUM_CHANNELS};
use crate::model::AnyModel;

/// Deployment RAM budget in bytes.
pub const DEFAULT_MEMORY_BUDGET: usize = 8192;

/// Fixed-capacity multi-channel sample ring.
pub struct RingBuffer {
    data: Vec<f32>, // channel-major: NUM_CHANNELS x capacity
    capacity: usize,
    len: usize,
    head: usize, // next write position
}

impl RingBuffer {
    pub fn new(capacity: usize) -> RingBuffer {
        RingBuffer {
            data: vec![0.0; capacity * NUM_CHANNELS],
            capacity,
            len: 0,
            head: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn clear(&mut self) {
        self.len = 0;
        self.head = 0;
    }

    /// Push one 9-channel sample, overwriting the oldest when full.
    pub fn push(&mut self, sample: &[f32; NUM_CHANNELS]) {
        for (c, &v) in sample.iter().enumerate() {
            self.data[c * self.capacity + self.head] = v;
        }
        self.head = (self.head + 1) % self.capacity;
        if self.len < self.capacity {
            self.len += 1;
        }
        assert!(self.len <= self.capacity, "ring occupancy exceeded capacity");
    }

    /// The most recent `n` samples of one channel as two chronological
    /// slices (older part first).
    pub fn latest(&self, channel: usize, n: usize) -> (&[f32], &[f32]) {
        assert!(n <= self.len, "requested window longer than ring contents");
        let row = &self.data[channel * self.capacity..(channel + 1) * self.capacity];
        let end = self.head; // one past the newest sample
        let start = (end + self.capacity - n) % self.capacity;
        if start < end {
            (&row[start..end], &[])
        } else {
            (&row[start..], &row[..end])
        }
    }

    pub fn bytes(&self) -> usize {
        self.data.len() * std::mem::size_of::<f32>()
    }
}

/// View of the newest window in a ring, for the shared extractor path.
struct RingWindow<'a> {
    ring: &'a RingBuffer,
    n: usize,
}

impl WindowSource for RingWindow<'_> {
    fn channel_parts(&self, channel: usize) -> (&[f32], &[f32]) {
        self.ring.latest(channel, self.n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamConfig {
    pub window_secs: u32,
    pub fs: u32,
    pub stride: u32,
    pub subset: FeatureSubset,
    /// Minimum gap between RAS triggers, in milliseconds. The default is
    /// one window length.
    pub debounce_ms: Option<i64>,
    pub memory_budget: usize,
}

impl StreamConfig {
    pub fn new(window_secs: u32, fs: u32, stride: u32, subset: FeatureSubset) -> StreamConfig {
        StreamConfig {
            window_secs,
            fs,
            stride,
            subset,
            debounce_ms: None,
            memory_budget: DEFAULT_MEMORY_BUDGET,
        }
    }

    pub fn window_samples(&self) -> usize {
        (self.window_secs * self.fs) as usize
    }

    pub fn debounce_ms(&self) -> i64 {
        self.debounce_ms
            .unwrap_or(self.window_secs as i64 * 1000)
    }

    fn ring_capacity(&self) -> usize {
        self.window_samples().max(self.stride as usize)
    }

    pub fn validate(&self, model: &AnyModel) -> Result<()> {
        if self.stride == 0 || self.stride as usize > self.window_samples() {
            return Err(Error::Config {
                field: "stride".into(),
                message: format!(
                    "stride must be in 1..={} samples, got {}",
                    self.window_samples(),
                    self.stride
                ),
            });
        }
        if model.n_features() != self.subset.len() {
            return Err(Error::DimensionMismatch {
                expected: self.subset.len(),
                actual: model.n_features(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Prediction,
    RasTrigger,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StreamEvent {
    pub kind: EventKind,
    pub start_ms: i64,
    pub end_ms: i64,
    pub fog: bool,
    pub scores: [f64; 2],
    pub feature_us: f64,
    pub inference_us: f64,
}

/// Analytic working-set accounting for one deployed configuration. Every
/// part is computed from the config, never measured from the host heap:
/// ring = capacity x 9 channels x f32; feature scratch = the f32 feature
/// vector, plus an f32 complex spectrum buffer when any frequency feature
/// is planned, plus the model's inference scratch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryBudgetReport {
    pub ring_bytes: usize,
    pub feature_scratch_bytes: usize,
    pub model_bytes: usize,
    pub total_bytes: usize,
    pub budget_bytes: usize,
    pub fits: bool,
}

pub fn budget_check(config: &StreamConfig, model: &AnyModel) -> MemoryBudgetReport {
    let ring_bytes = config.ring_capacity() * NUM_CHANNELS * 4;
    let plan_needs_spectrum = config
        .subset
        .descriptors
        .iter()
        .any(|d| !d.kind.is_time_domain());
    let spectrum_bytes = if plan_needs_spectrum {
        config.window_samples() * 8 // interleaved re/im f32
    } else {
        0
    };
    let feature_scratch_bytes =
        config.subset.len() * 4 + spectrum_bytes + model.inference_scratch_bytes();
    let model_bytes = model.size_bytes();
    let total_bytes = ring_bytes + feature_scratch_bytes + model_bytes;
    MemoryBudgetReport {
        ring_bytes,
        feature_scratch_bytes,
        model_bytes,
        total_bytes,
        budget_bytes: config.memory_budget,
        fits: total_bytes <= config.memory_budget,
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct StageLatency {
    pub mean_us: f64,
    pub p95_us: f64,
    pub max_us: f64,
}

fn stage_latency(mut samples: Vec<f64>) -> StageLatency {
    if samples.is_empty() {
        return StageLatency::default();
    }
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    StageLatency {
        mean_us: mean,
        p95_us: samples[((samples.len() as f64 * 0.95) as usize).min(samples.len() - 1)],
        max_us: *samples.last().unwrap(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StreamResult {
    pub events: Vec<StreamEvent>,
    pub budget: MemoryBudgetReport,
    pub feature_latency: StageLatency,
    pub inference_latency: StageLatency,
    pub n_predictions: usize,
    pub n_triggers: usize,
}

impl StreamResult {
    pub fn predictions(&self) -> impl Iterator<Item = &StreamEvent> {
        self.events
            .iter()
            .filter(|e| e.kind == EventKind::Prediction)
    }

    pub fn triggers(&self) -> impl Iterator<Item = &StreamEvent> {
        self.events
            .iter()
            .filter(|e| e.kind == EventKind::RasTrigger)
    }

    /// One JSON object per line, predictions and triggers interleaved in
    /// emission order.
    pub fn events_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("event serializes"));
            out.push('\n');
        }
        out
    }
}

/// Timestamp companion ring for event reporting. A deployed device derives
/// window stamps from its sample counter; the simulator carries the true
/// input stamps instead, outside the analytic memory accounting.
struct TsRing {
    data: Vec<i64>,
    capacity: usize,
    len: usize,
    head: usize,
}

impl TsRing {
    fn new(capacity: usize) -> TsRing {
        TsRing {
            data: vec![0; capacity],
            capacity,
            len: 0,
            head: 0,
        }
    }

    fn clear(&mut self) {
        self.len = 0;
        self.head = 0;
    }

    fn push(&mut self, ts: i64) {
        self.data[self.head] = ts;
        self.head = (self.head + 1) % self.capacity;
        self.len = (self.len + 1).min(self.capacity);
    }

    /// Timestamp of the oldest sample within the latest `n`.
    fn start_of_latest(&self, n: usize) -> i64 {
        debug_assert!(n <= self.len);
        self.data[(self.head + self.capacity - n) % self.capacity]
    }
}

/// Replay recordings through the fixed-memory pipeline.
///
/// Emits one Prediction per complete window at the stride cadence and a
/// RasTrigger for FoG predictions subject to the debounce gap. Debrief
/// samples and recording boundaries reset the ring.
pub fn run_stream(
    recordings: &[Recording],
    config: &StreamConfig,
    model: &AnyModel,
) -> Result<StreamResult> {
    config.validate(model)?;
    let n = config.window_samples();
    let stride = config.stride as usize;
    let plan = ExtractionPlan::new(&config.subset.descriptors)?;
    let mut extractor = FeatureExtractor::new(n, config.fs);
    let mut ring = RingBuffer::new(config.ring_capacity());
    let mut stamps = TsRing::new(config.ring_capacity());
    let mut features = vec![0.0f64; plan.n_features()];

    let mut events = Vec::new();
    let mut feature_times = Vec::new();
    let mut inference_times = Vec::new();
    let mut last_trigger_end: Option<i64> = None;
    let debounce = config.debounce_ms();

    for recording in recordings {
        ring.clear();
        stamps.clear();
        let mut run_len = 0usize; // samples in the current gap-free run
        for sample in &recording.samples {
            if sample.label == Label::Debrief {
                ring.clear();
                stamps.clear();
                run_len = 0;
                continue;
            }
            let mut values = [0.0f32; NUM_CHANNELS];
            for (c, &v) in sample.accel.iter().enumerate() {
                values[c] = v as f32;
            }
            ring.push(&values);
            stamps.push(sample.timestamp_ms);
            run_len += 1;

            if run_len < n || (run_len - n) % stride != 0 {
                continue;
            }

            let window = RingWindow { ring: &ring, n };
            let t = Instant::now();
            extractor.extract_into(&plan, &window, &mut features)?;
            let feature_us = t.elapsed().as_nanos() as f64 / 1000.0;
            let t = Instant::now();
            let scores = model.class_scores(&features)?;
            let inference_us = t.elapsed().as_nanos() as f64 / 1000.0;
            let fog = scores[1] > scores[0];
            feature_times.push(feature_us);
            inference_times.push(inference_us);

            let start_ms = stamps.start_of_latest(n);
            let end_ms = sample.timestamp_ms;
            events.push(StreamEvent {
                kind: EventKind::Prediction,
                start_ms,
                end_ms,
                fog,
                scores,
                feature_us,
                inference_us,
            });
            if fog {
                let gap_ok = last_trigger_end.map_or(true, |t| end_ms - t >= debounce);
                if gap_ok {
                    last_trigger_end = Some(end_ms);
                    events.push(StreamEvent {
                        kind: EventKind::RasTrigger,
                        start_ms,
                        end_ms,
                        fog: true,
                        scores,
                        feature_us,
                        inference_us,
                    });
                }
            }
        }
    }

    let n_predictions = events
        .iter()
        .filter(|e| e.kind == EventKind::Prediction)
        .count();
    let n_triggers = events.len() - n_predictions;
    Ok(StreamResult {
        budget: budget_check(config, model),
        feature_latency: stage_latency(feature_times),
        inference_latency: stage_latency(inference_times),
        n_predictions,
        n_triggers,
        events,
    })
}

/// Per-episode detection delay: time from episode onset to the end of the
/// first overlapping FoG-predicted window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeDetection {
    pub subject: u8,
    pub onset_ms: i64,
    pub delay_ms: Option<i64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionLatencyReport {
    pub per_episode: Vec<EpisodeDetection>,
    pub detected: usize,
    pub missed: usize,
    pub miss_rate: f64,
    pub mean_delay_ms: Option<f64>,
    pub median_delay_ms: Option<f64>,
}

pub fn detection_latency(
    events: &[StreamEvent],
    episodes: &[Episode],
    fs: u32,
) -> DetectionLatencyReport {
    let mut per_episode = Vec::with_capacity(episodes.len());
    let mut delays = Vec::new();
    for ep in episodes {
        let onset = ep.start_ms;
        let end = ep.start_ms + (ep.len_samples as i64 * 1000) / fs as i64;
        let hit = events
            .iter()
            .filter(|e| e.kind == EventKind::Prediction && e.fog)
            .find(|e| e.end_ms >= onset && e.start_ms <= end);
        let delay = hit.map(|e| (e.end_ms - onset).max(0));
        if let Some(d) = delay {
            delays.push(d);
        }
        per_episode.push(EpisodeDetection {
            subject: ep.subject.0,
            onset_ms: onset,
            delay_ms: delay,
        });
    }
    let detected = delays.len();
    let missed = episodes.len() - detected;
    delays.sort_unstable();
    DetectionLatencyReport {
        detected,
        missed,
        miss_rate: if episodes.is_empty() {
            0.0
        } else {
            missed as f64 / episodes.len() as f64
        },
        mean_delay_ms: (!delays.is_empty())
            .then(|| delays.iter().sum::<i64>() as f64 / delays.len() as f64),
        median_delay_ms: (!delays.is_empty()).then(|| delays[delays.len() / 2] as f64),
        per_episode,
    }
}

#[cfg(test)]
mod tests;
