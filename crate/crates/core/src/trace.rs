//! Per-frame channel gains and GS losses, plus the CSV / JSON trace format.
//!
//! CSV layout is `t,gain,loss` with one row per frame. When per-frame image
//! quality is known (from ingested renders) two extra columns `mse,ssim` are
//! appended. Floats are written with 17 significant digits.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{GsError, Result};
use crate::scalar::Scalar;

/// Quality of the GS-reconstructed composite relative to the real one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameQuality<T = f64> {
    pub mse: T,
    pub ssim: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameTrace<T = f64> {
    gains: Vec<T>,
    losses: Vec<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    quality: Option<Vec<FrameQuality<T>>>,
}

impl<T: Scalar> FrameTrace<T> {
    pub fn new(gains: Vec<T>, losses: Vec<T>) -> Result<Self> {
        if gains.len() != losses.len() {
            return Err(GsError::LengthMismatch { what: "loss vector", got: losses.len(), expected: gains.len() });
        }
        if let Some(i) = gains.iter().position(|g| !(*g > T::zero() && g.is_finite())) {
            return Err(GsError::TraceFormat(format!(
                "gain at frame {i} must be positive and finite, got {}",
                gains[i]
            )));
        }
        if let Some(i) = losses.iter().position(|l| !(*l >= T::zero() && l.is_finite())) {
            return Err(GsError::TraceFormat(format!(
                "loss at frame {i} must be finite and non-negative, got {}",
                losses[i]
            )));
        }
        Ok(Self { gains, losses, quality: None })
    }

    pub fn with_quality(mut self, quality: Vec<FrameQuality<T>>) -> Result<Self> {
        if quality.len() != self.gains.len() {
            return Err(GsError::LengthMismatch {
                what: "quality vector",
                got: quality.len(),
                expected: self.gains.len(),
            });
        }
        self.quality = Some(quality);
        Ok(self)
    }

    pub fn gains(&self) -> &[T] {
        &self.gains
    }

    pub fn losses(&self) -> &[T] {
        &self.losses
    }

    pub fn quality(&self) -> Option<&[FrameQuality<T>]> {
        self.quality.as_deref()
    }

    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }

    /// Same gains, different losses. Quality data is dropped since it no
    /// longer describes the new losses.
    pub fn with_losses(&self, losses: Vec<T>) -> Result<Self> {
        Self::new(self.gains.clone(), losses)
    }

    /// Reorders frames so that frame `i` of the result is frame `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.len() {
            return Err(GsError::LengthMismatch { what: "permutation", got: perm.len(), expected: self.len() });
        }
        let mut out =
            Self::new(perm.iter().map(|&i| self.gains[i]).collect(), perm.iter().map(|&i| self.losses[i]).collect())?;
        if let Some(q) = &self.quality {
            out.quality = Some(perm.iter().map(|&i| q[i]).collect());
        }
        Ok(out)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceRecord {
    t: usize,
    gain: f64,
    loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ssim: Option<f64>,
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv<T: Scalar, W: Write>(trace: &FrameTrace<T>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    match trace.quality() {
        Some(_) => w.write_record(["t", "gain", "loss", "mse", "ssim"])?,
        None => w.write_record(["t", "gain", "loss"])?,
    }
    for t in 0..trace.len() {
        let mut row = vec![t.to_string(), fmt17(trace.gains[t].to_f64_lossy()), fmt17(trace.losses[t].to_f64_lossy())];
        if let Some(q) = trace.quality() {
            row.push(fmt17(q[t].mse.to_f64_lossy()));
            row.push(fmt17(q[t].ssim.to_f64_lossy()));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: Scalar, R: Read>(input: R) -> Result<FrameTrace<T>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let records = rdr.deserialize::<TraceRecord>().collect::<std::result::Result<Vec<_>, _>>()?;
    from_records(records)
}

pub fn write_json<T: Scalar, W: Write>(trace: &FrameTrace<T>, out: W) -> Result<()> {
    let records: Vec<TraceRecord> = (0..trace.len())
        .map(|t| TraceRecord {
            t,
            gain: trace.gains[t].to_f64_lossy(),
            loss: trace.losses[t].to_f64_lossy(),
            mse: trace.quality().map(|q| q[t].mse.to_f64_lossy()),
            ssim: trace.quality().map(|q| q[t].ssim.to_f64_lossy()),
        })
        .collect();
    serde_json::to_writer_pretty(out, &records)?;
    Ok(())
}

pub fn read_json<T: Scalar, R: Read>(input: R) -> Result<FrameTrace<T>> {
    let records: Vec<TraceRecord> = serde_json::from_reader(input)?;
    from_records(records)
}

fn from_records<T: Scalar>(records: Vec<TraceRecord>) -> Result<FrameTrace<T>> {
    if let Some(first) = records.first() {
        for (i, r) in records.iter().enumerate() {
            if r.t != first.t + i {
                return Err(GsError::TraceFormat(format!(
                    "frame indices must be contiguous and ascending: row {i} has t={}, expected {}",
                    r.t,
                    first.t + i
                )));
            }
        }
    }
    let gains = records.iter().map(|r| T::lit(r.gain)).collect();
    let losses = records.iter().map(|r| T::lit(r.loss)).collect();
    let trace = FrameTrace::new(gains, losses)?;
    let with_q = records.iter().filter(|r| r.mse.is_some() && r.ssim.is_some()).count();
    if with_q == records.len() && !records.is_empty() {
        let q = records
            .iter()
            .map(|r| FrameQuality { mse: T::lit(r.mse.unwrap()), ssim: T::lit(r.ssim.unwrap()) })
            .collect();
        trace.with_quality(q)
    } else if with_q == 0 {
        Ok(trace)
    } else {
        Err(GsError::TraceFormat("mse/ssim columns must be present on every row or none".into()))
    }
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

/// Reads a trace, choosing JSON for `.json` files and CSV otherwise.
pub fn read_trace<T: Scalar>(path: &Path) -> Result<FrameTrace<T>> {
    let file = BufReader::new(File::open(path)?);
    if is_json(path) {
        read_json(file)
    } else {
        read_csv(file)
    }
}

pub fn write_trace<T: Scalar>(trace: &FrameTrace<T>, path: &Path) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    if is_json(path) {
        write_json(trace, &mut file)?;
    } else {
        write_csv(trace, &mut file)?;
    }
    file.flush()?;
    Ok(())
}
