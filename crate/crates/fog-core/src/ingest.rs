//! DAPHNet corpus ingestion: parsing, label binarization, episode accounting,
//! and stratified partitioning.
//!
//! A corpus is a directory of per-recording text files (`S01R01.txt`, ...),
//! one whitespace-separated line per sample: timestamp in milliseconds, nine
//! accelerometer readings in milli-g (ankle XYZ, leg XYZ, torso XYZ), and an
//! activity label.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// DAPHNet sampling rate.
pub const SAMPLE_RATE_HZ: u32 = 64;

/// Number of accelerometer channels (3 sensors x 3 axes).
pub const NUM_CHANNELS: usize = 9;

/// Subjects excluded by default: they recorded no freezing episodes.
pub const DEFAULT_EXCLUDED_SUBJECTS: [u8; 2] = [4, 10];

/// Activity label as annotated in the corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    /// Outside the experiment protocol; dropped before classification.
    Debrief = 0,
    Normal = 1,
    Fog = 2,
}

impl Label {
    pub fn from_raw(value: i64) -> Option<Label> {
        match value {
            0 => Some(Label::Debrief),
            1 => Some(Label::Normal),
            2 => Some(Label::Fog),
            _ => None,
        }
    }

    pub fn as_raw(self) -> i64 {
        self as i64
    }
}

/// One timestamped 9-channel accelerometer reading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub timestamp_ms: i64,
    /// Milli-g readings ordered ankle X,Y,Z, leg X,Y,Z, torso X,Y,Z.
    pub accel: [i32; NUM_CHANNELS],
    pub label: Label,
}

/// Subject identifier (1-based, as in the corpus file names).
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct SubjectId(pub u8);

impl fmt::Display for SubjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S{:02}", self.0)
    }
}

/// One recording session file for one subject.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Recording {
    pub subject: SubjectId,
    pub run: u8,
    pub samples: Vec<SampleRecord>,
}

/// Non-fatal anomaly found while parsing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseWarning {
    pub file: String,
    pub line: usize,
    pub message: String,
}

/// Parse one DAPHNet-format stream: 11 whitespace-separated integers per line.
///
/// Empty lines are skipped. A line with the wrong field count or a
/// non-integer token is a hard error carrying the line number. Non-monotone
/// timestamps produce a warning and the record is kept.
pub fn parse_daphnet(
    reader: impl BufRead,
    source: &str,
) -> Result<(Vec<SampleRecord>, Vec<ParseWarning>)> {
    let mut samples = Vec::new();
    let mut warnings = Vec::new();
    let mut prev_ts: Option<i64> = None;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut fields = [0i64; 11];
        let mut n_fields = 0usize;
        for token in trimmed.split_ascii_whitespace() {
            if n_fields == 11 {
                n_fields += 1;
                break;
            }
            fields[n_fields] = token.parse::<i64>().map_err(|_| Error::Parse {
                file: source.to_string(),
                line: line_no,
                message: format!("non-integer token `{token}`"),
            })?;
            n_fields += 1;
        }
        if n_fields != 11 {
            return Err(Error::Parse {
                file: source.to_string(),
                line: line_no,
                message: format!("expected 11 fields, found {n_fields}"),
            });
        }
        let label = Label::from_raw(fields[10]).ok_or_else(|| Error::Parse {
            file: source.to_string(),
            line: line_no,
            message: format!("label must be 0, 1 or 2, found {}", fields[10]),
        })?;
        let mut accel = [0i32; NUM_CHANNELS];
        for (i, slot) in accel.iter_mut().enumerate() {
            *slot = i32::try_from(fields[i + 1]).map_err(|_| Error::Parse {
                file: source.to_string(),
                line: line_no,
                message: format!("acceleration value {} out of range", fields[i + 1]),
            })?;
        }
        let ts = fields[0];
        if let Some(prev) = prev_ts {
            if ts < prev {
                warnings.push(ParseWarning {
                    file: source.to_string(),
                    line: line_no,
                    message: format!("timestamp {ts} decreases from {prev}"),
                });
            }
        }
        prev_ts = Some(ts);
        samples.push(SampleRecord {
            timestamp_ms: ts,
            accel,
            label,
        });
    }
    Ok((samples, warnings))
}

/// Write samples back in the corpus text format (inverse of [`parse_daphnet`]).
pub fn write_daphnet(mut writer: impl Write, samples: &[SampleRecord]) -> Result<()> {
    for s in samples {
        write!(writer, "{}", s.timestamp_ms)?;
        for v in &s.accel {
            write!(writer, " {v}")?;
        }
        writeln!(writer, " {}", s.label.as_raw())?;
    }
    Ok(())
}

/// Interpret the standard corpus file name `SxxRyy.txt`.
pub fn parse_file_name(name: &str) -> Option<(u8, u8)> {
    let stem = name.strip_suffix(".txt")?;
    let rest = stem.strip_prefix('S')?;
    let (subj, run) = rest.split_once('R')?;
    if subj.is_empty() || run.is_empty() {
        return None;
    }
    Some((subj.parse().ok()?, run.parse().ok()?))
}

/// All recordings of a corpus plus the subject exclusion set.
#[derive(Debug, Clone)]
pub struct Cohort {
    /// Sorted by (subject, run).
    pub recordings: Vec<Recording>,
    pub excluded: Vec<SubjectId>,
    pub warnings: Vec<ParseWarning>,
}

impl Cohort {
    /// Load every file in `dir` matching the `SxxRyy.txt` pattern, with the
    /// default exclusion set.
    pub fn load_dir(dir: &Path) -> Result<Cohort> {
        Self::load_dir_filtered(dir, parse_file_name, &DEFAULT_EXCLUDED_SUBJECTS)
    }

    /// Load with a custom file-name interpreter (returning `(subject, run)`)
    /// and exclusion list.
    pub fn load_dir_filtered(
        dir: &Path,
        name_parser: impl Fn(&str) -> Option<(u8, u8)>,
        excluded: &[u8],
    ) -> Result<Cohort> {
        let mut found: BTreeMap<(u8, u8), Recording> = BTreeMap::new();
        let mut warnings = Vec::new();
        for entry in std::fs::read_dir(dir)? {
            let entry = entry?;
            let name = entry.file_name();
            let name = name.to_string_lossy();
            let Some((subject, run)) = name_parser(&name) else {
                continue;
            };
            let file = std::fs::File::open(entry.path())?;
            let (samples, mut file_warnings) =
                parse_daphnet(std::io::BufReader::new(file), &name)?;
            warnings.append(&mut file_warnings);
            found.insert(
                (subject, run),
                Recording {
                    subject: SubjectId(subject),
                    run,
                    samples,
                },
            );
        }
        if found.is_empty() {
            return Err(Error::Data(format!(
                "no corpus files found in {}",
                dir.display()
            )));
        }
        Ok(Cohort {
            recordings: found.into_values().collect(),
            excluded: excluded.iter().copied().map(SubjectId).collect(),
            warnings,
        })
    }

    pub fn from_recordings(recordings: Vec<Recording>, excluded: &[u8]) -> Cohort {
        let mut recordings = recordings;
        recordings.sort_by_key(|r| (r.subject, r.run));
        Cohort {
            recordings,
            excluded: excluded.iter().copied().map(SubjectId).collect(),
        warnings: Vec::new(),
        }
    }

    /// Recordings that take part in experiments (excluded subjects dropped).
    pub fn included(&self) -> impl Iterator<Item = &Recording> {
        self.recordings
            .iter()
            .filter(|r| !self.excluded.contains(&r.subject))
    }

    pub fn subjects(&self) -> Vec<SubjectId> {
        let mut ids: Vec<SubjectId> = self.recordings.iter().map(|r| r.subject).collect();
        ids.dedup();
        ids
    }
}

/// Binary-labelled sample after dropping the debrief class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinSample {
    pub timestamp_ms: i64,
    pub accel: [i32; NUM_CHANNELS],
    pub fog: bool,
}

/// Drop debrief samples; FoG becomes the positive class.
pub fn binarize(samples: &[SampleRecord]) -> Vec<BinSample> {
    samples
        .iter()
        .filter(|s| s.label != Label::Debrief)
        .map(|s| BinSample {
            timestamp_ms: s.timestamp_ms,
            accel: s.accel,
            fog: s.label == Label::Fog,
        })
        .collect()
}

/// Contiguous run of non-debrief samples from one recording, stored
/// channel-major for windowed feature extraction. Dropped debrief regions
/// split a recording into separate segments so no window spans the gap.
#[derive(Debug, Clone)]
pub struct Segment {
    pub subject: SubjectId,
    pub timestamps: Vec<i64>,
    /// `NUM_CHANNELS` per-channel sample arrays of equal length.
    pub channels: Vec<Vec<f32>>,
    pub fog: Vec<bool>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }
}

/// Binarize one recording into gap-free segments.
pub fn binarize_segments(recording: &Recording) -> Vec<Segment> {
    let mut segments = Vec::new();
    let mut current: Option<Segment> = None;
    for s in &recording.samples {
        if s.label == Label::Debrief {
            if let Some(seg) = current.take() {
                segments.push(seg);
            }
            continue;
        }
        let seg = current.get_or_insert_with(|| Segment {
            subject: recording.subject,
            timestamps: Vec::new(),
            channels: vec![Vec::new(); NUM_CHANNELS],
            fog: Vec::new(),
        });
        seg.timestamps.push(s.timestamp_ms);
        for (c, value) in s.accel.iter().enumerate() {
            seg.channels[c].push(*value as f32);
        }
        seg.fog.push(s.label == Label::Fog);
    }
    if let Some(seg) = current.take() {
        segments.push(seg);
    }
    segments
}

/// Binarize every included recording of a cohort.
pub fn cohort_segments(cohort: &Cohort) -> Vec<Segment> {
    cohort
        .included()
        .flat_map(binarize_segments)
        .filter(|s| !s.is_empty())
        .collect()
}

/// One maximal run of FoG-labelled samples.
#[derive(Debug, Clone, Serialize)]
pub struct Episode {
    pub subject: SubjectId,
    pub start_ms: i64,
    pub len_samples: usize,
    pub duration_s: f64,
}

/// Find every FoG episode (maximal run of label 2) in a set of recordings.
pub fn fog_episodes(recordings: &[Recording], fs: u32) -> Vec<Episode> {
    let mut episodes = Vec::new();
    for rec in recordings {
        let mut run_start: Option<(usize, i64)> = None;
        for (i, s) in rec.samples.iter().enumerate() {
            match (s.label == Label::Fog, run_start) {
                (true, None) => run_start = Some((i, s.timestamp_ms)),
                (false, Some((start, ts))) => {
                    episodes.push(Episode {
                        subject: rec.subject,
                        start_ms: ts,
                        len_samples: i - start,
                        duration_s: (i - start) as f64 / fs as f64,
                    });
                    run_start = None;
                }
                _ => {}
            }
        }
        if let Some((start, ts)) = run_start {
            episodes.push(Episode {
                subject: rec.subject,
                start_ms: ts,
                len_samples: rec.samples.len() - start,
                duration_s: (rec.samples.len() - start) as f64 / fs as f64,
            });
        }
    }
    episodes
}

/// Summary statistics over episode durations.
#[derive(Debug, Clone, Serialize)]
pub struct EpisodeStats {
    pub count: usize,
    pub mean_s: f64,
    pub std_s: f64,
    pub min_s: f64,
    pub max_s: f64,
}

pub fn episode_stats(episodes: &[Episode]) -> EpisodeStats {
    let count = episodes.len();
    if count == 0 {
        return EpisodeStats {
            count: 0,
            mean_s: f64::NAN,
            std_s: f64::NAN,
            min_s: f64::NAN,
            max_s: f64::NAN,
        };
    }
    let mean = episodes.iter().map(|e| e.duration_s).sum::<f64>() / count as f64;
    let var = episodes
        .iter()
        .map(|e| (e.duration_s - mean).powi(2))
        .sum::<f64>()
        / count as f64;
    EpisodeStats {
        count,
        mean_s: mean,
        std_s: var.sqrt(),
        min_s: episodes
            .iter()
            .map(|e| e.duration_s)
            .fold(f64::INFINITY, f64::min),
        max_s: episodes
            .iter()
            .map(|e| e.duration_s)
            .fold(f64::NEG_INFINITY, f64::max),
    }
}

fn class_indices(labels: &[bool]) -> (Vec<usize>, Vec<usize>) {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (i, &fog) in labels.iter().enumerate() {
        if fog {
            pos.push(i);
        } else {
            neg.push(i);
        }
    }
    (pos, neg)
}

/// Stratified train/test split over item indices.
///
/// Per class, `floor(ratio * count)` items go to the training side. The
/// returned index sets are sorted, disjoint, and their union covers the
/// input. Deterministic under a fixed seed.
pub fn stratified_split(
    labels: &[bool],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config {
            field: "ratio".into(),
            message: format!("must satisfy 0 < ratio < 1, got {ratio}"),
        });
    }
    let (pos, neg) = class_indices(labels);
    for (name, class) in [("FoG", &pos), ("Normal", &neg)] {
        if class.len() < 2 {
            return Err(Error::Stratification(format!(
                "class {name} has {} windows, need at least 2",
                class.len()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [pos, neg] {
        let mut idx = class;
        idx.shuffle(&mut rng);
        // Epsilon keeps decimal ratios like 0.7 * 90 from flooring to 62.
        let n_train = (ratio * idx.len() as f64 + 1e-9).floor() as usize;
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Stratified k-fold partition over item indices.
///
/// Returns `k` (train, validation) index pairs. Validation folds are
/// pairwise disjoint and their union covers the input; per-fold class
/// counts differ from the global ratio by at most one item.
pub fn stratified_kfold(
    labels: &[bool],
    k: usize,
    seed: u64,
) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k < 2 {
        return Err(Error::Config {
            field: "folds".into(),
            message: format!("need k >= 2, got {k}"),
        });
    }
    if k > labels.len() {
        return Err(Error::Config {
            field: "folds".into(),
            message: format!("k = {k} exceeds window count {}", labels.len()),
        });
    }
    let (pos, neg) = class_indices(labels);
    for (name, class) in [("FoG", &pos), ("Normal", &neg)] {
        if class.len() < k {
            return Err(Error::Stratification(format!(
                "class {name} has {} windows, need at least k = {k}",
                class.len()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    for class in [pos, neg] {
        let mut idx = class;
        idx.shuffle(&mut rng);
        for (i, item) in idx.into_iter().enumerate() {
            folds[i % k].push(item);
        }
    }
    let mut out = Vec::with_capacity(k);
    for i in 0..k {
        let mut val = folds[i].clone();
        val.sort_unstable();
        let mut train: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        train.sort_unstable();
        out.push((train, val));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn parses_one_line() {
        let (samples, warnings) =
            parse_daphnet(Cursor::new("10 1 2 3 4 5 6 7 8 9 1\n"), "test").unwrap();
        assert_eq!(samples.len(), 1);
        assert!(warnings.is_empty());
        assert_eq!(samples[0].timestamp_ms, 10);
        assert_eq!(samples[0].accel, [1, 2, 3, 4, 5, 6, 7, 8, 9]);
        assert_eq!(samples[0].label, Label::Normal);
    }

    #[test]
    fn rejects_short_line() {
        let err = parse_daphnet(Cursor::new("10 1 2 3\n"), "test").unwrap_err();
        match err {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 1);
                assert!(message.contains("4"), "{message}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_non_integer() {
        let err =
            parse_daphnet(Cursor::new("10 1 2 x 4 5 6 7 8 9 1\n"), "test").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn rejects_bad_label() {
        let err =
            parse_daphnet(Cursor::new("10 1 2 3 4 5 6 7 8 9 7\n"), "test").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }

    #[test]
    fn warns_on_backwards_timestamp() {
        let input = "20 1 1 1 1 1 1 1 1 1 1\n10 1 1 1 1 1 1 1 1 1 1\n";
        let (samples, warnings) = parse_daphnet(Cursor::new(input), "test").unwrap();
        assert_eq!(samples.len(), 2);
        assert_eq!(warnings.len(), 1);
        assert_eq!(warnings[0].line, 2);
    }

    #[test]
    fn roundtrips_through_text() {
        let input = "10 1 2 3 4 5 6 7 8 9 1\n25 -9 8 -7 6 -5 4 -3 2 -1 2\n40 0 0 0 0 0 0 0 0 0 0\n";
        let (samples, _) = parse_daphnet(Cursor::new(input), "test").unwrap();
        let mut buf = Vec::new();
        write_daphnet(&mut buf, &samples).unwrap();
        let (reparsed, _) = parse_daphnet(Cursor::new(&buf), "test").unwrap();
        assert_eq!(samples, reparsed);
    }

    #[test]
    fn binarize_drops_debrief() {
        let mk = |label| SampleRecord {
            timestamp_ms: 0,
            accel: [0; 9],
            label,
        };
        let out = binarize(&[mk(Label::Debrief), mk(Label::Normal), mk(Label::Fog)]);
        assert_eq!(out.len(), 2);
        assert!(!out[0].fog);
        assert!(out[1].fog);

        let empty = binarize(&[mk(Label::Debrief), mk(Label::Debrief)]);
        assert!(empty.is_empty());
    }

    #[test]
    fn segments_split_at_debrief() {
        let mk = |ts, label| SampleRecord {
            timestamp_ms: ts,
            accel: [1; 9],
            label,
        };
        let rec = Recording {
            subject: SubjectId(1),
            run: 1,
            samples: vec![
                mk(0, Label::Normal),
                mk(1, Label::Fog),
                mk(2, Label::Debrief),
                mk(3, Label::Normal),
            ],
        };
        let segs = binarize_segments(&rec);
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].len(), 2);
        assert_eq!(segs[1].len(), 1);
        assert_eq!(segs[0].fog, vec![false, true]);
    }

    #[test]
    fn counts_episodes_across_boundaries() {
        let mk = |label| SampleRecord {
            timestamp_ms: 0,
            accel: [0; 9],
            label,
        };
        let rec = Recording {
            subject: SubjectId(2),
            run: 1,
            samples: vec![
                mk(Label::Normal),
                mk(Label::Fog),
                mk(Label::Fog),
                mk(Label::Normal),
                mk(Label::Fog),
            ],
        };
        let eps = fog_episodes(&[rec], 64);
        assert_eq!(eps.len(), 2);
        assert_eq!(eps[0].len_samples, 2);
        assert_eq!(eps[1].len_samples, 1);
    }

    #[test]
    fn split_is_stratified_and_deterministic() {
        let labels: Vec<bool> = (0..100).map(|i| i < 10).collect();
        let (train, test) = stratified_split(&labels, 0.7, 9).unwrap();
        assert_eq!(train.len(), 70);
        assert_eq!(test.len(), 30);
        let train_pos = train.iter().filter(|&&i| labels[i]).count();
        assert_eq!(train_pos, 7);

        let again = stratified_split(&labels, 0.7, 9).unwrap();
        assert_eq!((train.clone(), test.clone()), again);

        let mut all: Vec<usize> = train.iter().chain(test.iter()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn split_rejects_bad_ratio_and_tiny_class() {
        let labels: Vec<bool> = (0..100).map(|i| i < 10).collect();
        assert!(stratified_split(&labels, 1.0, 0).is_err());
        assert!(stratified_split(&labels, 0.0, 0).is_err());
        let one_pos: Vec<bool> = (0..10).map(|i| i == 0).collect();
        assert!(matches!(
            stratified_split(&one_pos, 0.5, 0),
            Err(Error::Stratification(_))
        ));
    }

    #[test]
    fn kfold_partitions_evenly() {
        let labels: Vec<bool> = (0..20).map(|i| i % 2 == 0).collect();
        let folds = stratified_kfold(&labels, 10, 3).unwrap();
        assert_eq!(folds.len(), 10);
        let mut seen = Vec::new();
        for (train, val) in &folds {
            assert_eq!(val.len(), 2);
            assert_eq!(train.len(), 18);
            seen.extend_from_slice(val);
        }
        seen.sort_unstable();
        assert_eq!(seen, (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn kfold_class_balance_within_one() {
        let labels: Vec<bool> = (0..97).map(|i| i % 7 == 0).collect();
        let k = 5;
        let folds = stratified_kfold(&labels, k, 11).unwrap();
        let total_pos = labels.iter().filter(|&&b| b).count();
        let base = total_pos / k;
        for (_, val) in &folds {
            let pos = val.iter().filter(|&&i| labels[i]).count();
            assert!(pos == base || pos == base + 1, "fold has {pos} positives");
        }
    }

    #[test]
    fn kfold_rejects_oversized_k() {
        let labels = vec![true, false, true, false];
        assert!(stratified_kfold(&labels, 5, 0).is_err());
        assert!(stratified_kfold(&labels, 1, 0).is_err());
    }

    #[test]
    fn file_name_pattern() {
        assert_eq!(parse_file_name("S01R02.txt"), Some((1, 2)));
        assert_eq!(parse_file_name("S10R01.txt"), Some((10, 1)));
        assert_eq!(parse_file_name("readme.md"), None);
        assert_eq!(parse_file_name("SR.txt"), None);
    }
}
