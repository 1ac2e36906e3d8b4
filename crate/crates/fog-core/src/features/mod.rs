//! Feature extraction engine: windowing, the ten per-channel time/frequency
//! features, matrix assembly, subset selection and normalization.

mod select;
mod spectral;

pub use select::{
    normalize, select_features, FeatureSubset, NormStats, SelectionOutcome,
    DEFAULT_CORR_THRESHOLD,
};
pub use spectral::{
    freq_features, power_spectrum, FreqFeatures, Psd, FREEZE_BAND, FREEZE_INDEX_CAP,
    FREEZE_INDEX_EPSILON, LOCOMOTOR_BAND,
};

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Segment, SubjectId, NUM_CHANNELS};

/// Accelerometer placement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sensor {
    Ankle,
    Leg,
    Torso,
}

impl Sensor {
    pub const ALL: [Sensor; 3] = [Sensor::Ankle, Sensor::Leg, Sensor::Torso];

    /// The three channels recorded by this sensor.
    pub fn channels(self) -> [Channel; 3] {
        let base = match self {
            Sensor::Ankle => 0,
            Sensor::Leg => 3,
            Sensor::Torso => 6,
        };
        [
            Channel::ALL[base],
            Channel::ALL[base + 1],
            Channel::ALL[base + 2],
        ]
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Sensor::Ankle => "A",
            Sensor::Leg => "L",
            Sensor::Torso => "T",
        }
    }
}

/// One of the nine signal channels, in corpus column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Channel {
    AnkleX,
    AnkleY,
    AnkleZ,
    LegX,
    LegY,
    LegZ,
    TorsoX,
    TorsoY,
    TorsoZ,
}

impl Channel {
    pub const ALL: [Channel; NUM_CHANNELS] = [
        Channel::AnkleX,
        Channel::AnkleY,
        Channel::AnkleZ,
        Channel::LegX,
        Channel::LegY,
        Channel::LegZ,
        Channel::TorsoX,
        Channel::TorsoY,
        Channel::TorsoZ,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn sensor(self) -> Sensor {
        match self.index() / 3 {
            0 => Sensor::Ankle,
            1 => Sensor::Leg,
            _ => Sensor::Torso,
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Channel::AnkleX => "A_X",
            Channel::AnkleY => "A_Y",
            Channel::AnkleZ => "A_Z",
            Channel::LegX => "L_X",
            Channel::LegY => "L_Y",
            Channel::LegZ => "L_Z",
            Channel::TorsoX => "T_X",
            Channel::TorsoY => "T_Y",
            Channel::TorsoZ => "T_Z",
        }
    }

    pub fn from_short_name(name: &str) -> Option<Channel> {
        Channel::ALL.iter().copied().find(|c| c.short_name() == name)
    }
}

/// The ten per-channel feature kinds, in canonical column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureKind {
    Mean,
    Std,
    Var,
    Rms,
    Mav,
    Entropy,
    Energy,
    PeakFreq,
    FreezeIndex,
    BandPower,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 10] = [
        FeatureKind::Mean,
        FeatureKind::Std,
        FeatureKind::Var,
        FeatureKind::Rms,
        FeatureKind::Mav,
        FeatureKind::Entropy,
        FeatureKind::Energy,
        FeatureKind::PeakFreq,
        FeatureKind::FreezeIndex,
        FeatureKind::BandPower,
    ];

    pub const TIME_DOMAIN: [FeatureKind; 5] = [
        FeatureKind::Mean,
        FeatureKind::Std,
        FeatureKind::Var,
        FeatureKind::Rms,
        FeatureKind::Mav,
    ];

    pub fn is_time_domain(self) -> bool {
        matches!(
            self,
            FeatureKind::Mean
                | FeatureKind::Std
                | FeatureKind::Var
                | FeatureKind::Rms
                | FeatureKind::Mav
        )
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Mean => "Mean",
            FeatureKind::Std => "Std",
            FeatureKind::Var => "Var",
            FeatureKind::Rms => "Rms",
            FeatureKind::Mav => "Mav",
            FeatureKind::Entropy => "Entropy",
            FeatureKind::Energy => "Energy",
            FeatureKind::PeakFreq => "PeakFreq",
            FeatureKind::FreezeIndex => "FreezeIndex",
            FeatureKind::BandPower => "BandPower",
        }
    }

    pub fn from_name(name: &str) -> Option<FeatureKind> {
        FeatureKind::ALL.iter().copied().find(|k| k.name() == name)
    }
}

/// One column of the feature matrix: a (channel, kind) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FeatureDescriptor {
    pub channel: Channel,
    pub kind: FeatureKind,
}

impl fmt::Display for FeatureDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.channel.short_name(), self.kind.name())
    }
}

impl FromStr for FeatureDescriptor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (ch, kind) = s.split_once('.').ok_or_else(|| Error::Data(format!(
            "malformed feature descriptor `{s}`"
        )))?;
        let channel = Channel::from_short_name(ch)
            .ok_or_else(|| Error::Data(format!("unknown channel `{ch}` in `{s}`")))?;
        let kind = FeatureKind::from_name(kind)
            .ok_or_else(|| Error::Data(format!("unknown feature kind `{kind}` in `{s}`")))?;
        Ok(FeatureDescriptor { channel, kind })
    }
}

/// The full (channel x kind) descriptor grid in canonical order: channels in
/// corpus order, kinds in canonical order within each channel.
pub fn descriptor_grid(channels: &[Channel], kinds: &[FeatureKind]) -> Result<Vec<FeatureDescriptor>> {
    if channels.is_empty() {
        return Err(Error::Config {
            field: "channels".into(),
            message: "channel subset must be nonempty".into(),
        });
    }
    if kinds.is_empty() {
        return Err(Error::Config {
            field: "kinds".into(),
            message: "feature kind subset must be nonempty".into(),
        });
    }
    let mut channels: Vec<Channel> = channels.to_vec();
    channels.sort_unstable();
    channels.dedup();
    let mut kinds: Vec<FeatureKind> = kinds.to_vec();
    kinds.sort_unstable();
    kinds.dedup();
    let mut out = Vec::with_capacity(channels.len() * kinds.len());
    for &c in &channels {
        for &k in &kinds {
            out.push(FeatureDescriptor { channel: c, kind: k });
        }
    }
    Ok(out)
}

/// Window geometry: length in seconds, sampling rate, hop in samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowParams {
    pub window_secs: u32,
    pub fs: u32,
    pub stride: u32,
}

impl WindowParams {
    pub fn new(window_secs: u32, fs: u32, stride: u32) -> WindowParams {
        WindowParams {
            window_secs,
            fs,
            stride,
        }
    }

    /// Samples per channel per window.
    pub fn window_samples(&self) -> usize {
        (self.window_secs * self.fs) as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_secs == 0 || self.fs == 0 {
            return Err(Error::Config {
                field: "window".into(),
                message: "window length and sampling rate must be positive".into(),
            });
        }
        if self.stride == 0 {
            return Err(Error::Config {
                field: "stride".into(),
                message: "stride must be at least one sample".into(),
            });
        }
        Ok(())
    }
}

/// How a window's per-sample labels resolve to one binary label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LabelRule {
    /// FoG when at least half the samples are FoG-labelled (ties go to FoG).
    Majority,
    /// FoG when the FoG fraction reaches the given threshold.
    Fraction(f64),
}

impl Default for LabelRule {
    fn default() -> Self {
        LabelRule::Majority
    }
}

impl LabelRule {
    pub fn resolve(self, fog_count: usize, window_len: usize) -> bool {
        match self {
            LabelRule::Majority => 2 * fog_count >= window_len,
            LabelRule::Fraction(f) => fog_count as f64 >= f * window_len as f64,
        }
    }
}

/// Lightweight handle to one window inside a segment store.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowIndex {
    pub segment: u32,
    pub offset: u32,
    pub subject: SubjectId,
    pub start_ms: i64,
    pub fog: bool,
}

/// Slice windows out of gap-free segments at the stride cadence. Segments
/// shorter than one window contribute nothing.
pub fn make_windows(
    segments: &[Segment],
    params: &WindowParams,
    rule: LabelRule,
) -> Result<Vec<WindowIndex>> {
    params.validate()?;
    let n = params.window_samples();
    let stride = params.stride as usize;
    let mut out = Vec::new();
    for (seg_idx, seg) in segments.iter().enumerate() {
        if seg.len() < n {
            continue;
        }
        // Running FoG count makes labelling O(1) per window.
        let mut fog_count = seg.fog[..n].iter().filter(|&&b| b).count();
        let mut offset = 0usize;
        loop {
            out.push(WindowIndex {
                segment: seg_idx as u32,
                offset: offset as u32,
                subject: seg.subject,
                start_ms: seg.timestamps[offset],
                fog: rule.resolve(fog_count, n),
            });
            if offset + stride + n > seg.len() {
                break;
            }
            for i in offset..offset + stride {
                if seg.fog[i] {
                    fog_count -= 1;
                }
            }
            for i in offset + n..offset + stride + n {
                if seg.fog[i] {
                    fog_count += 1;
                }
            }
            offset += stride;
        }
    }
    Ok(out)
}

/// Access to one window's per-channel samples, possibly split in two parts
/// (ring-buffer wrap). Part `a` precedes part `b` chronologically; batch
/// windows put everything in `a`.
pub trait WindowSource {
    fn channel_parts(&self, channel: usize) -> (&[f32], &[f32]);
}

/// Batch window view borrowing straight from a segment.
pub struct WindowView<'a> {
    segment: &'a Segment,
    offset: usize,
    len: usize,
}

impl<'a> WindowView<'a> {
    pub fn new(segments: &'a [Segment], index: &WindowIndex, window_samples: usize) -> WindowView<'a> {
        WindowView {
            segment: &segments[index.segment as usize],
            offset: index.offset as usize,
            len: window_samples,
        }
    }
}

impl WindowSource for WindowView<'_> {
    fn channel_parts(&self, channel: usize) -> (&[f32], &[f32]) {
        (
            &self.segment.channels[channel][self.offset..self.offset + self.len],
            &[],
        )
    }
}

/// The five time-domain statistics of one channel window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeFeatures {
    pub mean: f64,
    pub std: f64,
    /// Population variance (1/N).
    pub var: f64,
    pub rms: f64,
    pub mav: f64,
}

/// Compute the time-domain statistics over a (possibly split) window.
pub fn time_features_parts(a: &[f32], b: &[f32]) -> TimeFeatures {
    let n = (a.len() + b.len()) as f64;
    let mut sum = 0.0f64;
    let mut sum_sq = 0.0f64;
    let mut sum_abs = 0.0f64;
    for &x in a.iter().chain(b.iter()) {
        let x = x as f64;
        sum += x;
        sum_sq += x * x;
        sum_abs += x.abs();
    }
    let mean = sum / n;
    let mut var = 0.0f64;
    for &x in a.iter().chain(b.iter()) {
        let d = x as f64 - mean;
        var += d * d;
    }
    var /= n;
    TimeFeatures {
        mean,
        std: var.sqrt(),
        var,
        rms: (sum_sq / n).sqrt(),
        mav: sum_abs / n,
    }
}

/// Time-domain statistics of one contiguous channel window.
pub fn time_features(samples: &[f32]) -> TimeFeatures {
    time_features_parts(samples, &[])
}

struct ChannelPlan {
    channel: usize,
    needs_time: bool,
    needs_psd: bool,
    outputs: Vec<(FeatureKind, usize)>,
}

/// Precompiled extraction order for a fixed descriptor list.
pub struct ExtractionPlan {
    descriptors: Vec<FeatureDescriptor>,
    channels: Vec<ChannelPlan>,
}

impl ExtractionPlan {
    pub fn new(descriptors: &[FeatureDescriptor]) -> Result<ExtractionPlan> {
        if descriptors.is_empty() {
            return Err(Error::Config {
                field: "descriptors".into(),
                message: "descriptor list must be nonempty".into(),
            });
        }
        let mut channels: Vec<ChannelPlan> = Vec::new();
        for c in 0..NUM_CHANNELS {
            let outputs: Vec<(FeatureKind, usize)> = descriptors
                .iter()
                .enumerate()
                .filter(|(_, d)| d.channel.index() == c)
                .map(|(i, d)| (d.kind, i))
                .collect();
            if outputs.is_empty() {
                continue;
            }
            channels.push(ChannelPlan {
                channel: c,
                needs_time: outputs.iter().any(|(k, _)| k.is_time_domain()),
                needs_psd: outputs.iter().any(|(k, _)| !k.is_time_domain()),
                outputs,
            });
        }
        Ok(ExtractionPlan {
            descriptors: descriptors.to_vec(),
            channels,
        })
    }

    pub fn descriptors(&self) -> &[FeatureDescriptor] {
        &self.descriptors
    }

    pub fn n_features(&self) -> usize {
        self.descriptors.len()
    }

    /// Whether any planned feature needs a power spectrum.
    pub fn needs_spectrum(&self) -> bool {
        self.channels.iter().any(|c| c.needs_psd)
    }
}

/// Reusable per-window feature computer for one window length.
pub struct FeatureExtractor {
    n: usize,
    fs: f64,
    fft: Arc<dyn Fft<f64>>,
    signal: Vec<Complex<f64>>,
    fft_scratch: Vec<Complex<f64>>,
    psd: Vec<f64>,
}

impl FeatureExtractor {
    pub fn new(window_samples: usize, fs: u32) -> FeatureExtractor {
        let fft = FftPlanner::new().plan_fft_forward(window_samples);
        let scratch_len = fft.get_inplace_scratch_len();
        FeatureExtractor {
            n: window_samples,
            fs: fs as f64,
            fft,
            signal: vec![Complex::default(); window_samples],
            fft_scratch: vec![Complex::default(); scratch_len],
            psd: vec![0.0; window_samples / 2 + 1],
        }
    }

    pub fn window_samples(&self) -> usize {
        self.n
    }

    /// Compute every planned feature of one window into `out`, which must
    /// have exactly `plan.n_features()` slots.
    pub fn extract_into<S: WindowSource>(
        &mut self,
        plan: &ExtractionPlan,
        window: &S,
        out: &mut [f64],
    ) -> Result<()> {
        if out.len() != plan.n_features() {
            return Err(Error::DimensionMismatch {
                expected: plan.n_features(),
                actual: out.len(),
            });
        }
        for ch_plan in &plan.channels {
            let (a, b) = window.channel_parts(ch_plan.channel);
            if a.len() + b.len() != self.n {
                return Err(Error::DimensionMismatch {
                    expected: self.n,
                    actual: a.len() + b.len(),
                });
            }
            let time = if ch_plan.needs_time {
                Some(time_features_parts(a, b))
            } else {
                None
            };
            let freq = if ch_plan.needs_psd {
                for (slot, &x) in self.signal.iter_mut().zip(a.iter().chain(b.iter())) {
                    *slot = Complex::new(x as f64, 0.0);
                }
                self.fft
                    .process_with_scratch(&mut self.signal, &mut self.fft_scratch);
                let n = self.n as f64;
                for (k, p) in self.psd.iter_mut().enumerate() {
                    *p = self.signal[k].norm_sqr() / n;
                }
                Some(freq_features(&self.psd, self.n, self.fs))
            } else {
                None
            };
            for &(kind, column) in &ch_plan.outputs {
                let value = match kind {
                    FeatureKind::Mean => time.as_ref().unwrap().mean,
                    FeatureKind::Std => time.as_ref().unwrap().std,
                    FeatureKind::Var => time.as_ref().unwrap().var,
                    FeatureKind::Rms => time.as_ref().unwrap().rms,
                    FeatureKind::Mav => time.as_ref().unwrap().mav,
                    FeatureKind::Entropy => freq.as_ref().unwrap().entropy,
                    FeatureKind::Energy => freq.as_ref().unwrap().energy,
                    FeatureKind::PeakFreq => freq.as_ref().unwrap().peak_freq,
                    FeatureKind::FreezeIndex => freq.as_ref().unwrap().freeze_index,
                    FeatureKind::BandPower => freq.as_ref().unwrap().band_power,
                };
                if !value.is_finite() {
                    return Err(Error::Data(format!(
                        "non-finite value for feature {}",
                        plan.descriptors[column]
                    )));
                }
                out[column] = value;
            }
        }
        Ok(())
    }
}

/// Feature rows for a set of windows, plus labels and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    descriptors: Vec<FeatureDescriptor>,
    values: Vec<f64>,
    labels: Vec<bool>,
    subjects: Vec<SubjectId>,
}

impl FeatureMatrix {
    pub fn new(
        descriptors: Vec<FeatureDescriptor>,
        values: Vec<f64>,
        labels: Vec<bool>,
        subjects: Vec<SubjectId>,
    ) -> Result<FeatureMatrix> {
        if labels.len() != subjects.len() || values.len() != labels.len() * descriptors.len() {
            return Err(Error::Data("inconsistent feature matrix shape".into()));
        }
        Ok(FeatureMatrix {
            descriptors,
            values,
            labels,
            subjects,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_cols(&self) -> usize {
        self.descriptors.len()
    }

    pub fn descriptors(&self) -> &[FeatureDescriptor] {
        &self.descriptors
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn subjects(&self) -> &[SubjectId] {
        &self.subjects
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.n_cols();
        &self.values[i * c..(i + 1) * c]
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_cols() + col]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// New matrix keeping only the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let c = self.n_cols();
        let mut values = Vec::with_capacity(rows.len() * c);
        let mut labels = Vec::with_capacity(rows.len());
        let mut subjects = Vec::with_capacity(rows.len());
        for &r in rows {
            values.extend_from_slice(self.row(r));
            labels.push(self.labels[r]);
            subjects.push(self.subjects[r]);
        }
        FeatureMatrix {
            descriptors: self.descriptors.clone(),
            values,
            labels,
            subjects,
        }
    }

    /// New matrix keeping only the given columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> FeatureMatrix {
        let c = self.n_cols();
        let mut values = Vec::with_capacity(self.n_rows() * cols.len());
        for r in 0..self.n_rows() {
            let row = &self.values[r * c..(r + 1) * c];
            for &col in cols {
                values.push(row[col]);
            }
        }
        FeatureMatrix {
            descriptors: cols.iter().map(|&c| self.descriptors[c]).collect(),
            values,
            labels: self.labels.clone(),
            subjects: self.subjects.clone(),
        }
    }

    /// Column positions of `subset` descriptors within this matrix.
    pub fn column_positions(&self, subset: &[FeatureDescriptor]) -> Result<Vec<usize>> {
        subset
            .iter()
            .map(|d| {
                self.descriptors
                    .iter()
                    .position(|x| x == d)
                    .ok_or_else(|| Error::Data(format!("descriptor {d} not present in matrix")))
            })
            .collect()
    }

    /// Write as CSV with a `subject,label,<descriptor...>` header.
    pub fn to_csv(&self, writer: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["subject".to_string(), "label".to_string()];
        header.extend(self.descriptors.iter().map(|d| d.to_string()));
        w.write_record(&header).map_err(csv_err)?;
        for r in 0..self.n_rows() {
            let mut record = vec![
                self.subjects[r].0.to_string(),
                if self.labels[r] { "1" } else { "0" }.to_string(),
            ];
            record.extend(self.row(r).iter().map(|v| format!("{v:?}")));
            w.write_record(&record).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn from_csv(reader: impl std::io::Read) -> Result<FeatureMatrix> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers().map_err(csv_err)?.clone();
        if header.len() < 3 || &header[0] != "subject" || &header[1] != "label" {
            return Err(Error::Data(
                "feature CSV must start with subject,label columns".into(),
            ));
        }
        let descriptors: Vec<FeatureDescriptor> = header
            .iter()
            .skip(2)
            .map(FeatureDescriptor::from_str)
            .collect::<Result<_>>()?;
        let mut values = Vec::new();
        let mut labels = Vec::new();
        let mut subjects = Vec::new();
        for record in r.records() {
            let record = record.map_err(csv_err)?;
            subjects.push(SubjectId(record[0].parse().map_err(|_| {
                Error::Data(format!("bad subject id `{}`", &record[0]))
            })?));
            labels.push(&record[1] == "1");
            for field in record.iter().skip(2) {
                values.push(field.parse::<f64>().map_err(|_| {
                    Error::Data(format!("bad feature value `{field}`"))
                })?);
            }
        }
        FeatureMatrix::new(descriptors, values, labels, subjects)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Data(format!("csv: {e}"))
}

/// Extract one row per window for the canonical (channel x kind) grid.
pub fn extract_matrix(
    segments: &[Segment],
    windows: &[WindowIndex],
    params: &WindowParams,
    channels: &[Channel],
    kinds: &[FeatureKind],
) -> Result<FeatureMatrix> {
    let descriptors = descriptor_grid(channels, kinds)?;
    extract_matrix_for(segments, windows, params, &descriptors)
}

/// Extract one row per window for an explicit ordered descriptor list.
pub fn extract_matrix_for(
    segments: &[Segment],
    windows: &[WindowIndex],
    params: &WindowParams,
    descriptors: &[FeatureDescriptor],
) -> Result<FeatureMatrix> {
    let plan = ExtractionPlan::new(descriptors)?;
    let n = params.window_samples();
    let mut extractor = FeatureExtractor::new(n, params.fs);
    let mut values = vec![0.0f64; windows.len() * descriptors.len()];
    for (i, w) in windows.iter().enumerate() {
        let view = WindowView::new(segments, w, n);
        extractor.extract_into(
            &plan,
            &view,
            &mut values[i * descriptors.len()..(i + 1) * descriptors.len()],
        )?;
    }
    FeatureMatrix::new(
        descriptors.to_vec(),
        values,
        windows.iter().map(|w| w.fog).collect(),
        windows.iter().map(|w| w.subject).collect(),
    )
}
