//! MR compositing and image-quality measures: L1, SSIM, DSSIM, the weighted
//! frame loss, PSNR, and per-frame GS losses from rendered frame sets.

use std::collections::BTreeSet;
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GsError, Result};
use crate::scalar::Scalar;
use crate::trace::FrameQuality;

pub const CHANNELS: usize = 3;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Default loss assigned to frames that have no GS render.
pub const MISSING_RENDER_LOSS: f64 = 1e6;

/// 8-bit RGB raster, row-major, interleaved channels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageFrame {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl ImageFrame {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height * CHANNELS {
            return Err(GsError::Geometry(format!(
                "{width}x{height} RGB frame needs {} samples, got {}",
                width * height * CHANNELS,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self { width, height, data: vec![value; width * height * CHANNELS] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(width * height * CHANNELS);
        for y in 0..height {
            for x in 0..width {
                for c in 0..CHANNELS {
                    data.push(f(x, y, c));
                }
            }
        }
        Self { width, height, data }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path)?.to_rgb8();
        let (w, h) = img.dimensions();
        Self::new(w as usize, h as usize, img.into_raw())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        image::save_buffer(path, &self.data, self.width as u32, self.height as u32, image::ColorType::Rgb8)?;
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    fn same_geometry(&self, other: &Self) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(GsError::Geometry(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }
}

/// Per-pixel binary selector; `true` keeps the real image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(GsError::Geometry(format!(
                "{width}x{height} mask needs {} pixels, got {}",
                width * height,
                bits.len()
            )));
        }
        Ok(Self { width, height, bits })
    }

    pub fn filled(width: usize, height: usize, keep_real: bool) -> Self {
        Self { width, height, bits: vec![keep_real; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let bits = (0..height).flat_map(|y| (0..width).map(move |x| (x, y))).map(|(x, y)| f(x, y)).collect();
        Self { width, height, bits }
    }

    /// Loads a mask image whose pixels are 0 or 255.
    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path)?.to_luma8();
        let (w, h) = img.dimensions();
        let bits = img
            .into_raw()
            .into_iter()
            .map(|v| match v {
                0 => Ok(false),
                255 => Ok(true),
                other => Err(GsError::Geometry(format!("mask pixel value {other} is neither 0 nor 255"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(w as usize, h as usize, bits)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let raw: Vec<u8> = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        image::save_buffer(path, &raw, self.width as u32, self.height as u32, image::ColorType::L8)?;
        Ok(())
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }
}

/// `d ⊙ r + (1 − d) ⊙ v`. With a binary mask this selects one source per pixel.
pub fn composite(real: &ImageFrame, virt: &ImageFrame, mask: &Mask) -> Result<ImageFrame> {
    real.same_geometry(virt)?;
    if mask.width != real.width || mask.height != real.height {
        return Err(GsError::Geometry(format!(
            "mask {}x{} vs frame {}x{}",
            mask.width, mask.height, real.width, real.height
        )));
    }
    let data = real
        .data
        .chunks_exact(CHANNELS)
        .zip(virt.data.chunks_exact(CHANNELS))
        .zip(&mask.bits)
        .flat_map(|((r, v), &keep)| if keep { r } else { v }.iter().copied())
        .collect();
    Ok(ImageFrame { width: real.width, height: real.height, data })
}

#[inline]
fn unit<T: Scalar>(v: u8) -> T {
    T::lit(v as f64 / 255.0)
}

/// Mean absolute difference on the [0, 1] range.
pub fn l1<T: Scalar>(a: &ImageFrame, b: &ImageFrame) -> Result<T> {
    a.same_geometry(b)?;
    let total: T = a.data.iter().zip(&b.data).map(|(&x, &y)| (unit::<T>(x) - unit::<T>(y)).abs()).sum();
    Ok(total / T::from_usize_lossy(a.data.len()))
}

pub fn mse<T: Scalar>(a: &ImageFrame, b: &ImageFrame) -> Result<T> {
    a.same_geometry(b)?;
    let total: T = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| {
            let d = unit::<T>(x) - unit::<T>(y);
            d * d
        })
        .sum();
    Ok(total / T::from_usize_lossy(a.data.len()))
}

/// `10 log10(1 / MSE)` on the unit range; `+∞` for identical frames.
pub fn psnr<T: Scalar>(a: &ImageFrame, b: &ImageFrame) -> Result<T> {
    Ok(psnr_from_mse(mse::<T>(a, b)?))
}

pub fn psnr_from_mse<T: Scalar>(mse: T) -> T {
    if mse <= T::zero() {
        T::infinity()
    } else {
        -T::lit(10.0) * mse.log10()
    }
}

fn gaussian_window<T: Scalar>() -> Vec<T> {
    let half = (SSIM_WINDOW / 2) as f64;
    let raw: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let d = i as f64 - half;
            (-(d * d) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|w| T::lit(w / sum)).collect()
}

/// Valid-region separable filtering of one plane.
fn filter_valid<T: Scalar>(plane: &[T], width: usize, height: usize, window: &[T]) -> Vec<T> {
    let n = window.len();
    let ow = width + 1 - n;
    let oh = height + 1 - n;
    let mut rows = vec![T::zero(); ow * height];
    for y in 0..height {
        let line = &plane[y * width..(y + 1) * width];
        for x in 0..ow {
            rows[y * ow + x] = window.iter().zip(&line[x..x + n]).map(|(&w, &v)| w * v).sum();
        }
    }
    let mut out = vec![T::zero(); ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = window.iter().enumerate().map(|(k, &w)| w * rows[(y + k) * ow + x]).sum();
        }
    }
    out
}

/// Mean local SSIM: 11×11 Gaussian window (σ = 1.5), valid positions only,
/// averaged over the three colour channels.
pub fn ssim<T: Scalar>(a: &ImageFrame, b: &ImageFrame) -> Result<T> {
    a.same_geometry(b)?;
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(GsError::ImageTooSmall { width: a.width, height: a.height, min: SSIM_WINDOW });
    }
    let window = gaussian_window::<T>();
    let c1 = T::lit(SSIM_K1 * SSIM_K1);
    let c2 = T::lit(SSIM_K2 * SSIM_K2);
    let two = T::lit(2.0);
    let (w, h) = (a.width, a.height);
    let mut total = T::zero();
    let mut count = 0usize;
    for c in 0..CHANNELS {
        let pa: Vec<T> = a.data.iter().skip(c).step_by(CHANNELS).map(|&v| unit(v)).collect();
        let pb: Vec<T> = b.data.iter().skip(c).step_by(CHANNELS).map(|&v| unit(v)).collect();
        let paa: Vec<T> = pa.iter().map(|&v| v * v).collect();
        let pbb: Vec<T> = pb.iter().map(|&v| v * v).collect();
        let pab: Vec<T> = pa.iter().zip(&pb).map(|(&x, &y)| x * y).collect();
        let mu_a = filter_valid(&pa, w, h, &window);
        let mu_b = filter_valid(&pb, w, h, &window);
        let e_aa = filter_valid(&paa, w, h, &window);
        let e_bb = filter_valid(&pbb, w, h, &window);
        let e_ab = filter_valid(&pab, w, h, &window);
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let var_a = e_aa[i] - ma * ma;
            let var_b = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            let num = (two * ma * mb + c1) * (two * cov + c2);
            let den = (ma * ma + mb * mb + c1) * (var_a + var_b + c2);
            total = total + num / den;
        }
        count += mu_a.len();
    }
    Ok(total / T::from_usize_lossy(count))
}

/// Map from SSIM to the structural dissimilarity term of the loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Dssim<T = f64> {
    /// `(1 − SSIM) / 2`, bounded in [0, 1].
    Halved,
    /// `1 / (1 − SSIM)`, capped at `clamp`.
    Reciprocal { clamp: T },
}

impl<T: Scalar> Default for Dssim<T> {
    fn default() -> Self {
        Dssim::Halved
    }
}

impl<T: Scalar> Dssim<T> {
    pub fn apply(self, ssim: T) -> T {
        match self {
            Dssim::Halved => (T::one() - ssim) / T::lit(2.0),
            Dssim::Reciprocal { clamp } => {
                let gap = T::one() - ssim;
                if gap <= T::zero() {
                    clamp
                } else {
                    (T::one() / gap).min(clamp)
                }
            }
        }
    }
}

pub fn dssim<T: Scalar>(a: &ImageFrame, b: &ImageFrame, variant: Dssim<T>) -> Result<T> {
    Ok(variant.apply(ssim(a, b)?))
}

/// `(1 − λ) L1 + λ DSSIM`.
pub fn mr_loss<T: Scalar>(a: &ImageFrame, b: &ImageFrame, lambda: T, variant: Dssim<T>) -> Result<T> {
    let l1 = l1::<T>(a, b)?;
    if lambda == T::zero() {
        return Ok(l1);
    }
    Ok((T::one() - lambda) * l1 + lambda * dssim(a, b, variant)?)
}

fn check_quad(real: &ImageFrame, gs: &ImageFrame, virt: &ImageFrame, mask: &Mask) -> Result<()> {
    real.same_geometry(gs)?;
    real.same_geometry(virt)?;
    if mask.width != real.width || mask.height != real.height {
        return Err(GsError::Geometry(format!(
            "mask {}x{} vs frame {}x{}",
            mask.width, mask.height, real.width, real.height
        )));
    }
    Ok(())
}

/// Loss between the true composite and the one rebuilt from the GS render.
pub fn gs_frame_loss<T: Scalar>(
    real: &ImageFrame,
    gs_render: &ImageFrame,
    virt: &ImageFrame,
    mask: &Mask,
    lambda: T,
    variant: Dssim<T>,
) -> Result<T> {
    check_quad(real, gs_render, virt, mask)?;
    let truth = composite(real, virt, mask)?;
    let rebuilt = composite(gs_render, virt, mask)?;
    mr_loss(&truth, &rebuilt, lambda, variant)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IngestOptions<T = f64> {
    pub ssim_weight: T,
    pub dssim: Dssim<T>,
    /// Loss recorded for frames without a GS render; large enough to force an upload.
    pub missing_render_loss: T,
}

impl<T: Scalar> Default for IngestOptions<T> {
    fn default() -> Self {
        Self { ssim_weight: T::lit(0.2), dssim: Dssim::Halved, missing_render_loss: T::lit(MISSING_RENDER_LOSS) }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IngestedLosses<T = f64> {
    pub losses: Vec<T>,
    /// MSE and SSIM of the GS composite against the true composite.
    pub quality: Vec<FrameQuality<T>>,
    /// Frames that had no `gs_` render.
    pub missing_renders: Vec<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Kind {
    Real,
    Gs,
    Virtual,
    Mask,
}

fn parse_frame_name(name: &str) -> Option<(Kind, usize)> {
    let stem = name.strip_suffix(".png")?;
    let (prefix, idx) = stem.rsplit_once('_')?;
    if idx.len() < 5 || !idx.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let kind = match prefix {
        "real" => Kind::Real,
        "gs" => Kind::Gs,
        "virtual" => Kind::Virtual,
        "mask" => Kind::Mask,
        _ => return None,
    };
    Some((kind, idx.parse().ok()?))
}

pub fn frame_file(kind: &str, index: usize) -> String {
    format!("{kind}_{index:05}.png")
}

/// Computes `L_t` for every frame set `real_/gs_/virtual_/mask_%05d.png` in
/// `dir`. Frame indices must run contiguously from 0. Frames are processed in
/// parallel; the output keeps frame order.
pub fn ingest_frame_dir<T: Scalar>(dir: &Path, opts: &IngestOptions<T>) -> Result<IngestedLosses<T>> {
    let mut present = BTreeSet::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        if let Some(parsed) = entry.file_name().to_str().and_then(parse_frame_name) {
            present.insert(parsed);
        }
    }
    let Some(last) = present.iter().map(|&(_, i)| i).max() else {
        warn!("no frame files found in {}", dir.display());
        return Ok(IngestedLosses { losses: Vec::new(), quality: Vec::new(), missing_renders: Vec::new() });
    };
    for index in 0..=last {
        for (kind, name) in [(Kind::Real, "real"), (Kind::Virtual, "virtual"), (Kind::Mask, "mask")] {
            if !present.contains(&(kind, index)) {
                return Err(GsError::Frame { index, message: format!("missing {}", frame_file(name, index)) });
            }
        }
    }

    let per_frame = (0..=last)
        .into_par_iter()
        .map(|index| -> Result<(T, FrameQuality<T>, bool)> {
            let tag = |e: GsError| GsError::Frame { index, message: e.to_string() };
            let real = ImageFrame::load(&dir.join(frame_file("real", index))).map_err(tag)?;
            let virt = ImageFrame::load(&dir.join(frame_file("virtual", index))).map_err(tag)?;
            let mask = Mask::load(&dir.join(frame_file("mask", index))).map_err(tag)?;
            if !present.contains(&(Kind::Gs, index)) {
                check_quad(&real, &real, &virt, &mask).map_err(tag)?;
                let worst = FrameQuality { mse: T::one(), ssim: T::zero() };
                return Ok((opts.missing_render_loss, worst, true));
            }
            let gs = ImageFrame::load(&dir.join(frame_file("gs", index))).map_err(tag)?;
            check_quad(&real, &gs, &virt, &mask).map_err(tag)?;
            let truth = composite(&real, &virt, &mask).map_err(tag)?;
            let rebuilt = composite(&gs, &virt, &mask).map_err(tag)?;
            let loss = mr_loss(&truth, &rebuilt, opts.ssim_weight, opts.dssim).map_err(tag)?;
            let quality =
                FrameQuality { mse: mse(&truth, &rebuilt).map_err(tag)?, ssim: ssim(&truth, &rebuilt).map_err(tag)? };
            Ok((loss, quality, false))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = IngestedLosses { losses: Vec::new(), quality: Vec::new(), missing_renders: Vec::new() };
    for (index, (loss, quality, missing)) in per_frame.into_iter().enumerate() {
        if missing {
            warn!("frame {index} has no GS render, using sentinel loss");
            out.missing_renders.push(index);
        }
        out.losses.push(loss);
        out.quality.push(quality);
    }
    Ok(out)
}
