//! File formats: binary measurements, PGM images and spectrogram CSV.
//!
//! Measurement layout (little-endian): magic `MDGS`, version `u32`, sampling
//! frequency `f64`, sample count `u64`, direction `u8`, label `u8`, subject id
//! as `u32` byte length plus UTF-8, then interleaved `(re, im)` `f64` pairs.

use std::io::{Read, Write};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::sim::{Direction, IqSignal, Label};
use crate::tfa::{to_db, GrayImage, Spectrogram};

pub const MAGIC: &[u8; 4] = b"MDGS";
pub const VERSION: u32 = 1;
const MAX_SUBJECT_LEN: u32 = 4096;

/// A measurement file's contents.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementFile {
    pub signal: IqSignal,
    pub direction: Direction,
    pub label: Label,
    pub subject: String,
}

pub fn write_measurement(w: &mut impl Write, m: &MeasurementFile) -> Result<()> {
    let id = m.subject.as_bytes();
    if id.len() > MAX_SUBJECT_LEN as usize {
        return Err(Error::Format(format!("subject id longer than {MAX_SUBJECT_LEN} bytes")));
    }
    let mut buf = Vec::with_capacity(34 + id.len() + 16 * m.signal.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&m.signal.sampling_frequency.to_le_bytes());
    buf.extend_from_slice(&(m.signal.len() as u64).to_le_bytes());
    buf.push(m.direction.code());
    buf.push(m.label.code());
    buf.extend_from_slice(&(id.len() as u32).to_le_bytes());
    buf.extend_from_slice(id);
    for s in &m.signal.samples {
        buf.extend_from_slice(&s.re.to_le_bytes());
        buf.extend_from_slice(&s.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn take<const N: usize>(bytes: &[u8], pos: &mut usize, what: &str) -> Result<[u8; N]> {
    let end = *pos + N;
    let slice = bytes
        .get(*pos..end)
        .ok_or_else(|| Error::Format(format!("truncated file while reading {what}")))?;
    *pos = end;
    Ok(slice.try_into().expect("slice has length N"))
}

pub fn read_measurement(r: &mut impl Read) -> Result<MeasurementFile> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    parse_measurement(&bytes)
}

pub fn parse_measurement(bytes: &[u8]) -> Result<MeasurementFile> {
    let mut pos = 0;
    if &take::<4>(bytes, &mut pos, "magic")? != MAGIC {
        return Err(Error::Format("not a measurement file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(take(bytes, &mut pos, "version")?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let fs = f64::from_le_bytes(take(bytes, &mut pos, "sampling frequency")?);
    let n = u64::from_le_bytes(take(bytes, &mut pos, "sample count")?);
    let [direction] = take::<1>(bytes, &mut pos, "direction")?;
    let [label] = take::<1>(bytes, &mut pos, "label")?;
    let direction =
        Direction::from_code(direction).ok_or_else(|| Error::Format(format!("bad direction code {direction}")))?;
    let label = Label::from_code(label).ok_or_else(|| Error::Format(format!("bad label code {label}")))?;
    let id_len = u32::from_le_bytes(take(bytes, &mut pos, "subject length")?);
    if id_len > MAX_SUBJECT_LEN {
        return Err(Error::Format(format!("subject id length {id_len} too large")));
    }
    let id = bytes
        .get(pos..pos + id_len as usize)
        .ok_or_else(|| Error::Format("truncated file while reading subject".into()))?;
    pos += id_len as usize;
    let subject = String::from_utf8(id.to_vec()).map_err(|_| Error::Format("subject id is not UTF-8".into()))?;
    let payload = &bytes[pos..];
    if n.checked_mul(16) != Some(payload.len() as u64) {
        return Err(Error::Format(format!(
            "header announces {n} samples but {} payload bytes follow",
            payload.len()
        )));
    }
    let samples = payload
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().expect("8 bytes")),
                f64::from_le_bytes(c[8..].try_into().expect("8 bytes")),
            )
        })
        .collect();
    let signal = IqSignal::new(samples, fs).map_err(|e| Error::Format(e.to_string()))?;
    Ok(MeasurementFile {
        signal,
        direction,
        label,
        subject,
    })
}

/// Binary PGM (P5), 8-bit. The top row shows the largest `y`.
pub fn write_pgm(w: &mut impl Write, image: &GrayImage) -> Result<()> {
    let (width, height) = image.dims();
    let mut buf = format!("P5\n{width} {height}\n255\n").into_bytes();
    buf.reserve(width * height);
    for y in (0..height).rev() {
        for x in 0..width {
            buf.push((image.get(x, y) * 255.0).round() as u8);
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Whole spectrogram as gray levels: dB relative to the maximum mapped from
/// `[db_floor, db_ceil]`, `x` = frame, `y` = bin (frequency ascending).
pub fn spectrogram_image(spec: &Spectrogram, db_floor: f64, db_ceil: f64) -> Result<GrayImage> {
    if !(db_floor < db_ceil) {
        return Err(Error::InvalidConfig(format!(
            "db_floor {db_floor} must be below db_ceil {db_ceil}"
        )));
    }
    let db = if spec.is_db { spec.clone() } else { to_db(spec) };
    Ok(GrayImage::from_fn(db.frames(), db.bins(), |x, y| {
        (db.get(x, y) - db_floor) / (db_ceil - db_floor)
    }))
}

/// Spectrogram in dB as CSV. The first row holds frame times, the first
/// column bin frequencies; bins with `|f| > max_abs_freq` are skipped.
pub fn write_spectrogram_csv(w: &mut impl Write, spec: &Spectrogram, max_abs_freq: f64) -> Result<()> {
    let db = if spec.is_db { spec.clone() } else { to_db(spec) };
    let mut out = String::from("frequency_hz\\time_s");
    for t in &db.frame_times {
        out.push_str(&format!(",{t:.6}"));
    }
    out.push('\n');
    for (k, f) in db.freq_axis.iter().enumerate().rev() {
        if f.abs() > max_abs_freq {
            continue;
        }
        out.push_str(&format!("{f:.4}"));
        for n in 0..db.frames() {
            out.push_str(&format!(",{:.3}", db.get(n, k)));
        }
        out.push('\n');
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}
