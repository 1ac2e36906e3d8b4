//! Windowed dataset cache: `FOGW`, little-endian, columnar.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic            4 B   "FOGW"
//! version          u16   1
//! fs               u16   Hz
//! window_secs      u16
//! stride           u32   samples
//! n_channels       u8    9
//! label_rule       u8    0 = majority (ties to FoG)
//! n_windows        u32
//! subject          u8    x n_windows
//! label            u8    x n_windows (1 = FoG)
//! start_ms         i64   x n_windows
//! samples          f32   x n_windows x 9 x window_samples
//!                        (window-major, channel-major within a window)
//! ```

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::{LabelRule, WindowIndex, WindowParams, WindowSource, WindowView};
use crate::ingest::{Segment, SubjectId, NUM_CHANNELS};

pub const CACHE_MAGIC: [u8; 4] = *b"FOGW";
pub const CACHE_FORMAT_VERSION: u16 = 1;

/// Write windows (resolved against their segments) into a cache file.
pub fn write_window_cache(
    path: &Path,
    segments: &[Segment],
    windows: &[WindowIndex],
    params: &WindowParams,
) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    let n = params.window_samples();

    w.write_all(&CACHE_MAGIC)?;
    w.write_all(&CACHE_FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(params.fs as u16).to_le_bytes())?;
    w.write_all(&(params.window_secs as u16).to_le_bytes())?;
    w.write_all(&params.stride.to_le_bytes())?;
    w.write_all(&[NUM_CHANNELS as u8, 0u8])?;
    w.write_all(&(windows.len() as u32).to_le_bytes())?;
    for win in windows {
        w.write_all(&[win.subject.0])?;
    }
    for win in windows {
        w.write_all(&[win.fog as u8])?;
    }
    for win in windows {
        w.write_all(&win.start_ms.to_le_bytes())?;
    }
    for win in windows {
        let view = WindowView::new(segments, win, n);
        for c in 0..NUM_CHANNELS {
            let (a, b) = view.channel_parts(c);
            for &v in a.iter().chain(b.iter()) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// A cache read back into pipeline form: each cached window becomes a
/// one-window segment (per-sample labels carry the resolved window label).
pub struct CachedWindows {
    pub params: WindowParams,
    pub segments: Vec<Segment>,
    pub windows: Vec<WindowIndex>,
}

pub fn read_window_cache(path: &Path) -> Result<CachedWindows> {
    let ctx = "window cache";
    let file = std::fs::File::open(path)?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, ctx)?;
    if magic != CACHE_MAGIC {
        return Err(Error::BadMagic {
            context: ctx.into(),
            expected: CACHE_MAGIC,
        });
    }
    let version = read_u16(&mut r, ctx)?;
    if version != CACHE_FORMAT_VERSION {
        return Err(Error::Version {
            context: ctx.into(),
            version,
        });
    }
    let fs = read_u16(&mut r, ctx)? as u32;
    let window_secs = read_u16(&mut r, ctx)? as u32;
    let mut stride = [0u8; 4];
    read_exact(&mut r, &mut stride, ctx)?;
    let stride = u32::from_le_bytes(stride);
    let mut misc = [0u8; 2];
    read_exact(&mut r, &mut misc, ctx)?;
    if misc[0] as usize != NUM_CHANNELS {
        return Err(Error::Data(format!(
            "cache declares {} channels, expected {NUM_CHANNELS}",
            misc[0]
        )));
    }
    let mut n_windows = [0u8; 4];
    read_exact(&mut r, &mut n_windows, ctx)?;
    let n_windows = u32::from_le_bytes(n_windows) as usize;

    let params = WindowParams::new(window_secs, fs, stride);
    params.validate()?;
    let n = params.window_samples();

    let mut subjects = vec![0u8; n_windows];
    read_exact(&mut r, &mut subjects, ctx)?;
    let mut labels = vec![0u8; n_windows];
    read_exact(&mut r, &mut labels, ctx)?;
    let mut start_ms = vec![0i64; n_windows];
    for slot in start_ms.iter_mut() {
        let mut b = [0u8; 8];
        read_exact(&mut r, &mut b, ctx)?;
        *slot = i64::from_le_bytes(b);
    }

    let mut segments = Vec::with_capacity(n_windows);
    let mut windows = Vec::with_capacity(n_windows);
    let mut sample_buf = vec![0u8; n * 4];
    for i in 0..n_windows {
        let fog = labels[i] == 1;
        let mut channels = Vec::with_capacity(NUM_CHANNELS);
        for _ in 0..NUM_CHANNELS {
            read_exact(&mut r, &mut sample_buf, ctx)?;
            channels.push(
                sample_buf
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            );
        }
        let step_ms = 1000 / fs as i64;
        segments.push(Segment {
            subject: SubjectId(subjects[i]),
            timestamps: (0..n as i64).map(|k| start_ms[i] + k * step_ms).collect(),
            channels,
            fog: vec![fog; n],
        });
        windows.push(WindowIndex {
            segment: i as u32,
            offset: 0,
            subject: SubjectId(subjects[i]),
            start_ms: start_ms[i],
            fog,
        });
    }
    Ok(CachedWindows {
        params,
        segments,
        windows,
    })
}

/// Convenience: window a segment set and cache the result.
pub fn build_cache(
    path: &Path,
    segments: &[Segment],
    params: &WindowParams,
    rule: LabelRule,
) -> Result<usize> {
    let windows = crate::features::make_windows(segments, params, rule)?;
    write_window_cache(path, segments, &windows, params)?;
    Ok(windows.len())
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], ctx: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Truncated { context: ctx.into() }
        } else {
            Error::Io(e)
        }
    })
}

fn read_u16(r: &mut impl Read, ctx: &str) -> Result<u16> {
    let mut b = [0u8; 2];
    read_exact(r, &mut b, ctx)?;
    Ok(u16::from_le_bytes(b))
}
