//! Deterministic synthetic corpus generator.
//!
//! Emits DAPHNet-format recordings with the documented corpus shape: ten
//! subjects, two recordings each, 64 Hz, nine milli-g channels, 237 freezing
//! episodes spread over eight subjects (subjects 4 and 10 record none),
//! episode durations in [0.5 s, 40.5 s] with mean 7.3 s, and roughly 8 h 20 m
//! of signal overall.
//!
//! Signal model: normal gait is a locomotor-band oscillation (0.8-1.4 Hz
//! fundamental plus harmonic) strongest at the ankle, weakest at the torso,
//! under a slowly drifting whole-body gain. Freezing episodes are either
//! trembling (freeze-band oscillation with attenuated gait, per-channel
//! amplitudes jittered episode by episode) or akinetic (overall attenuation).
//! Turns inject brief near-freeze-band bursts into normal gait so no single
//! channel feature separates the classes cleanly.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};

use crate::error::Result;
use crate::ingest::{write_daphnet, Label, Recording, SampleRecord, SubjectId};

/// Documented total episode count.
pub const TOTAL_EPISODES: usize = 237;
/// Per-subject episode counts (index 0 = subject 1); subjects 4 and 10 are
/// the freeze-free ones.
pub const EPISODES_PER_SUBJECT: [usize; 10] = [26, 35, 38, 0, 30, 32, 28, 25, 23, 0];

const EPISODE_MEAN_S: f64 = 7.3;
const EPISODE_STD_S: f64 = 6.7;
const EPISODE_MIN_S: f64 = 0.5;
const EPISODE_MAX_S: f64 = 40.5;

/// Per-subject recording time, seconds (x10 subjects = 30 000 s = 8 h 20 m).
const SUBJECT_SECONDS: f64 = 3000.0;

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub seed: u64,
    pub fs: u32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { seed: 2026, fs: 64 }
    }
}

// Sensor geometry: locomotor amplitude (milli-g) per sensor, per-axis
// multipliers, and gravity offsets. The ankle carries the most gait energy,
// the torso the least.
const SENSOR_AMPLITUDE: [f64; 3] = [430.0, 215.0, 95.0];
const AXIS_MULT: [f64; 3] = [1.0, 0.72, 0.55];
const GRAVITY_OFFSET: [[f64; 3]; 3] = [
    [60.0, -960.0, 140.0],
    [30.0, -980.0, 90.0],
    [10.0, -1000.0, 40.0],
];
const NOISE_STD: [f64; 3] = [34.0, 30.0, 26.0];

// Freezing-signature strength relative to the sensor's gait amplitude.
const TREMBLE_REL: [f64; 3] = [0.60, 0.44, 0.20];
// Per-episode per-channel amplitude jitter range for the freeze component.
const TREMBLE_JITTER: (f64, f64) = (0.25, 1.7);
// Probability that a non-ankle sensor participates in a trembling episode.
const TREMBLE_PARTICIPATION: f64 = 0.7;
// Gait residue remaining during a trembling episode.
const TREMBLE_GAIT_RESIDUE: f64 = 0.22;
// Akinetic episodes: overall attenuation and faint tremor.
const AKINETIC_GAIT_RESIDUE: f64 = 0.10;
const AKINETIC_TREMOR_REL: f64 = 0.10;
const AKINETIC_FRACTION: f64 = 0.30;

// Turns: brief bursts below/at the freeze band during normal gait.
const TURN_GAP_S: (f64, f64) = (10.0, 26.0);
const TURN_LEN_S: (f64, f64) = (1.0, 2.6);
const TURN_REL: (f64, f64) = (0.25, 0.80);
const TURN_FREQ_HZ: (f64, f64) = (3.1, 4.9);

// Whole-body gain: piecewise-constant every 2 s, lognormal-ish drift.
const GAIN_STEP_S: f64 = 2.0;
const GAIN_RANGE: (f64, f64) = (0.45, 2.3);

#[derive(Debug, Clone, Copy, PartialEq)]
enum Mode {
    Debrief,
    Walk,
    Tremble,
    Akinetic,
}

struct Block {
    mode: Mode,
    len_samples: usize,
}

/// Draw all 237 episode durations, then rescale so the mean lands on the
/// documented value while staying inside the documented range.
fn episode_durations(seed: u64) -> Vec<f64> {
    let shape = (EPISODE_MEAN_S / EPISODE_STD_S).powi(2);
    let scale = EPISODE_STD_S * EPISODE_STD_S / EPISODE_MEAN_S;
    let gamma = Gamma::new(shape, scale).expect("valid gamma parameters");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xD0A7_11E5);
    let mut durations: Vec<f64> = (0..TOTAL_EPISODES)
        .map(|_| gamma.sample(&mut rng).clamp(EPISODE_MIN_S, EPISODE_MAX_S))
        .collect();
    for _ in 0..12 {
        let mean = durations.iter().sum::<f64>() / durations.len() as f64;
        let factor = EPISODE_MEAN_S / mean;
        if (factor - 1.0).abs() < 1e-6 {
            break;
        }
        for d in &mut durations {
            *d = (*d * factor).clamp(EPISODE_MIN_S, EPISODE_MAX_S);
        }
    }
    durations
}

/// Lay one recording out as a block sequence consuming `episodes` durations.
fn plan_blocks(
    episodes: &[f64],
    target_s: f64,
    fs: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<Block> {
    let samples = |secs: f64| (secs * fs).round() as usize;
    let mut blocks = Vec::new();
    let mut used_s = 0.0;
    let push = |blocks: &mut Vec<Block>, mode: Mode, secs: f64, used: &mut f64| {
        blocks.push(Block {
            mode,
            len_samples: samples(secs),
        });
        *used += secs;
    };

    push(&mut blocks, Mode::Debrief, rng.random_range(25.0..55.0), &mut used_s);
    for (i, &dur) in episodes.iter().enumerate() {
        push(&mut blocks, Mode::Walk, rng.random_range(14.0..40.0), &mut used_s);
        if i > 0 && rng.random_bool(0.12) {
            push(&mut blocks, Mode::Debrief, rng.random_range(12.0..30.0), &mut used_s);
            push(&mut blocks, Mode::Walk, rng.random_range(10.0..24.0), &mut used_s);
        }
        let mode = if rng.random_bool(AKINETIC_FRACTION) {
            Mode::Akinetic
        } else {
            Mode::Tremble
        };
        push(&mut blocks, mode, dur, &mut used_s);
    }
    let tail_debrief = rng.random_range(25.0..55.0);
    if used_s + tail_debrief < target_s {
        push(&mut blocks, Mode::Walk, target_s - used_s - tail_debrief, &mut used_s);
    }
    push(&mut blocks, Mode::Debrief, tail_debrief, &mut used_s);
    blocks
}

struct EpisodeProfile {
    /// Per-channel freeze-component amplitude (milli-g, before gain).
    freeze_amp: [f64; 9],
    freeze_hz: f64,
    second_hz: f64,
    gait_residue: f64,
}

fn synthesize_recording(
    subject: usize,
    run: u8,
    episodes: &[f64],
    cfg: &SynthConfig,
    rng: &mut ChaCha8Rng,
) -> Recording {
    let fs = cfg.fs as f64;
    let blocks = plan_blocks(episodes, SUBJECT_SECONDS / 2.0, fs, rng);

    // Subject-level idiosyncrasies.
    let subject_scale = rng.random_range(0.85..1.2);
    let walk_hz_base = rng.random_range(0.85..1.3);
    let noise_scale = rng.random_range(0.9..1.25);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let phases: [f64; 9] = std::array::from_fn(|_| rng.random_range(0.0..std::f64::consts::TAU));

    let mut samples = Vec::new();
    let mut t_idx = 0usize; // global sample index for timestamps
    let mut gain = 1.0f64;
    let mut gain_left = 0usize;
    let gain_step = (GAIN_STEP_S * fs) as usize;

    for block in &blocks {
        let label = match block.mode {
            Mode::Debrief => Label::Debrief,
            Mode::Walk => Label::Normal,
            Mode::Tremble | Mode::Akinetic => Label::Fog,
        };
        let walk_hz = (walk_hz_base + rng.random_range(-0.1f64..0.15)).clamp(0.8, 1.4);

        // Per-episode freeze profile.
        let profile = match block.mode {
            Mode::Tremble => {
                let mut amp = [0.0f64; 9];
                for c in 0..9 {
                    let sensor = c / 3;
                    let participates = sensor == 0 || rng.random_bool(TREMBLE_PARTICIPATION);
                    let jitter = rng.random_range(TREMBLE_JITTER.0..TREMBLE_JITTER.1);
                    if participates {
                        amp[c] = SENSOR_AMPLITUDE[sensor]
                            * AXIS_MULT[c % 3]
                            * TREMBLE_REL[sensor]
                            * jitter;
                    }
                }
                Some(EpisodeProfile {
                    freeze_amp: amp,
                    freeze_hz: rng.random_range(4.3..6.6),
                    second_hz: rng.random_range(6.6..7.8),
                    gait_residue: TREMBLE_GAIT_RESIDUE * rng.random_range(0.6..1.4),
                })
            }
            Mode::Akinetic => {
                let mut amp = [0.0f64; 9];
                for (c, slot) in amp.iter_mut().enumerate() {
                    let sensor = c / 3;
                    *slot = SENSOR_AMPLITUDE[sensor]
                        * AXIS_MULT[c % 3]
                        * AKINETIC_TREMOR_REL
                        * rng.random_range(0.4..1.8);
                }
                Some(EpisodeProfile {
                    freeze_amp: amp,
                    freeze_hz: rng.random_range(5.0..7.2),
                    second_hz: rng.random_range(3.4..4.6),
                    gait_residue: AKINETIC_GAIT_RESIDUE * rng.random_range(0.5..1.5),
                })
            }
            _ => None,
        };

        // Turn schedule within walking blocks.
        let mut next_turn = (rng.random_range(TURN_GAP_S.0..TURN_GAP_S.1) * fs) as usize;
        let mut turn_left = 0usize;
        let mut turn_rel = 0.0;
        let mut turn_hz = 4.0;
        // Stronger-on-ankle turn bursts.
        let mut turn_sensor_mult = [1.0f64; 3];

        for _ in 0..block.len_samples {
            if gain_left == 0 {
                let z: f64 = normal.sample(rng);
                gain = (gain * (0.30 * z).exp()).clamp(GAIN_RANGE.0, GAIN_RANGE.1);
                gain_left = gain_step;
            }
            gain_left -= 1;

            if block.mode == Mode::Walk {
                if turn_left == 0 {
                    if next_turn == 0 {
                        turn_left = (rng.random_range(TURN_LEN_S.0..TURN_LEN_S.1) * fs) as usize;
                        turn_rel = rng.random_range(TURN_REL.0..TURN_REL.1);
                        turn_hz = rng.random_range(TURN_FREQ_HZ.0..TURN_FREQ_HZ.1);
                        turn_sensor_mult = [1.0, rng.random_range(0.4..0.9), rng.random_range(0.2..0.6)];
                        next_turn = (rng.random_range(TURN_GAP_S.0..TURN_GAP_S.1) * fs) as usize;
                    } else {
                        next_turn -= 1;
                    }
                } else {
                    turn_left -= 1;
                }
            }

            let t = t_idx as f64 / fs;
            let mut accel = [0i32; 9];
            for c in 0..9 {
                let sensor = c / 3;
                let base_amp = SENSOR_AMPLITUDE[sensor] * AXIS_MULT[c % 3] * subject_scale;
                let phase = phases[c];
                let mut value = GRAVITY_OFFSET[sensor][c % 3];
                let gait = |carrier_amp: f64| {
                    carrier_amp
                        * ((std::f64::consts::TAU * walk_hz * t + phase).sin()
                            + 0.35 * (std::f64::consts::TAU * 2.0 * walk_hz * t + 1.7 * phase).sin())
                };
                match (&block.mode, &profile) {
                    (Mode::Debrief, _) => {
                        // Standing still: small sway only.
                        value += 0.06 * gait(base_amp) * gain;
                    }
                    (Mode::Walk, _) => {
                        value += gait(base_amp) * gain;
                        if turn_left > 0 {
                            value += turn_rel
                                * base_amp
                                * turn_sensor_mult[sensor]
                                * gain
                                * (std::f64::consts::TAU * turn_hz * t + 0.9 * phase).sin();
                        }
                    }
                    (_, Some(p)) => {
                        value += gait(base_amp * p.gait_residue) * gain;
                        value += p.freeze_amp[c]
                            * subject_scale
                            * gain
                            * ((std::f64::consts::TAU * p.freeze_hz * t + phase).sin()
                                + 0.5 * (std::f64::consts::TAU * p.second_hz * t + 2.3 * phase).sin());
                    }
                    _ => unreachable!(),
                }
                let noise: f64 = normal.sample(rng);
                value += noise * NOISE_STD[sensor] * noise_scale;
                accel[c] = value.round() as i32;
            }
            samples.push(SampleRecord {
                timestamp_ms: (t_idx as i64 * 15625) / 1000,
                accel,
                label,
            });
            t_idx += 1;
        }
    }

    Recording {
        subject: SubjectId(subject as u8),
        run,
        samples,
    }
}

/// Generate the full ten-subject corpus (two recordings per subject).
pub fn generate_corpus(cfg: &SynthConfig) -> Vec<Recording> {
    let durations = episode_durations(cfg.seed);
    let mut next_episode = 0usize;
    let mut recordings = Vec::with_capacity(20);
    for subject in 1..=10usize {
        let count = EPISODES_PER_SUBJECT[subject - 1];
        let subject_durations = &durations[next_episode..next_episode + count];
        next_episode += count;
        let mut rng = ChaCha8Rng::seed_from_u64(
            cfg.seed ^ (subject as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        );
        // Split this subject's episodes across the two runs.
        let first = count - count / 2;
        recordings.push(synthesize_recording(
            subject,
            1,
            &subject_durations[..first],
            cfg,
            &mut rng,
        ));
        recordings.push(synthesize_recording(
            subject,
            2,
            &subject_durations[first..],
            cfg,
            &mut rng,
        ));
    }
    recordings
}

/// Write the generated corpus as `SxxRyy.txt` files under `dir`.
pub fn write_corpus(cfg: &SynthConfig, dir: &std::path::Path) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for rec in generate_corpus(cfg) {
        let path = dir.join(format!("S{:02}R{:02}.txt", rec.subject.0, rec.run));
        let file = std::fs::File::create(&path)?;
        write_daphnet(std::io::BufWriter::new(file), &rec.samples)?;
        paths.push(path);
    }
    Ok(paths)
}
