use std::path::Path;

use gsrmr_core::mr_imaging::{
    composite, frame_file, gs_frame_loss, ingest_frame_dir, l1, mr_loss, psnr, ssim, IngestOptions, MISSING_RENDER_LOSS,
};
use gsrmr_core::{Dssim, ImageFrame, Mask};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_frame(w: usize, h: usize, rng: &mut ChaCha8Rng) -> ImageFrame {
    ImageFrame::from_fn(w, h, |_, _, _| rng.gen())
}

fn sample(f: &ImageFrame, x: usize, y: usize, c: usize) -> f64 {
    f.data()[(y * f.width() + x) * 3 + c] as f64 / 255.0
}

/// Direct 2D evaluation: every 11×11 window position, full Gaussian weight
/// matrix, no separable filtering.
fn naive_ssim(a: &ImageFrame, b: &ImageFrame) -> f64 {
    let g: Vec<f64> = (0..11).map(|i| (-((i as f64 - 5.0).powi(2)) / 4.5).exp()).collect();
    let norm: f64 = g.iter().sum::<f64>().powi(2);
    let (c1, c2) = (1e-4, 9e-4);
    let mut total = 0.0;
    let mut n = 0;
    for c in 0..3 {
        for y0 in 0..=a.height() - 11 {
            for x0 in 0..=a.width() - 11 {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for dy in 0..11 {
                    for dx in 0..11 {
                        let w = g[dy] * g[dx] / norm;
                        let (u, v) = (sample(a, x0 + dx, y0 + dy, c), sample(b, x0 + dx, y0 + dy, c));
                        ma += w * u;
                        mb += w * v;
                        saa += w * u * u;
                        sbb += w * v * v;
                        sab += w * u * v;
                    }
                }
                let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
                total += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                n += 1;
            }
        }
    }
    total / n as f64
}

fn naive_l1(a: &ImageFrame, b: &ImageFrame) -> f64 {
    let mut s = 0.0;
    for y in 0..a.height() {
        for x in 0..a.width() {
            for c in 0..3 {
                s += (sample(a, x, y, c) - sample(b, x, y, c)).abs();
            }
        }
    }
    s / (a.width() * a.height() * 3) as f64
}

fn transpose(f: &ImageFrame) -> ImageFrame {
    ImageFrame::from_fn(f.height(), f.width(), |x, y, c| f.data()[(x * f.width() + y) * 3 + c])
}

fn flip_horizontal(f: &ImageFrame) -> ImageFrame {
    ImageFrame::from_fn(f.width(), f.height(), |x, y, c| f.data()[(y * f.width() + f.width() - 1 - x) * 3 + c])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metric_ranges_and_symmetry(seed in any::<u64>(), w in 11usize..20, h in 11usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_frame(w, h, &mut rng);
        let b = random_frame(w, h, &mut rng);
        let d: f64 = l1(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        let s: f64 = ssim(&a, &b).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s));
        prop_assert!((s - ssim::<f64>(&b, &a).unwrap()).abs() <= 1e-12);
        let ab: f64 = mr_loss(&a, &b, 0.2, Dssim::Halved).unwrap();
        let ba: f64 = mr_loss(&b, &a, 0.2, Dssim::Halved).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12);
        prop_assert!(ab >= 0.0);
    }

    #[test]
    fn layout_does_not_change_psnr_or_loss(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_frame(13, 17, &mut rng);
        let b = random_frame(13, 17, &mut rng);
        let p: f64 = psnr(&a, &b).unwrap();
        let m: f64 = mr_loss(&a, &b, 0.2, Dssim::Halved).unwrap();
        for (ta, tb) in [(transpose(&a), transpose(&b)), (flip_horizontal(&a), flip_horizontal(&b))] {
            prop_assert!((psnr::<f64>(&ta, &tb).unwrap() - p).abs() <= 1e-9);
            prop_assert!((mr_loss::<f64>(&ta, &tb, 0.2, Dssim::Halved).unwrap() - m).abs() <= 1e-12);
        }
    }
}

#[test]
fn ssim_matches_direct_window_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (w, h) in [(11, 11), (16, 12), (23, 19)] {
        let a = random_frame(w, h, &mut rng);
        // correlated pair so SSIM is away from zero
        let b = ImageFrame::from_fn(w, h, |x, y, c| {
            let v = a.data()[(y * w + x) * 3 + c] as i32 + rng.gen_range(-30..=30);
            v.clamp(0, 255) as u8
        });
        let got: f64 = ssim(&a, &b).unwrap();
        let want = naive_ssim(&a, &b);
        assert!((got - want).abs() <= 1e-10, "{w}x{h}: {got} vs {want}");
        assert!(got > 0.3);
    }
}

#[test]
fn ssim_of_black_against_white() {
    let a = ImageFrame::filled(12, 12, 0);
    let b = ImageFrame::filled(12, 12, 255);
    let (c1, c2) = (1e-4_f64, 9e-4_f64);
    let want = c1 * c2 / ((1.0 + c1) * c2);
    let got: f64 = ssim(&a, &b).unwrap();
    assert!((got - want).abs() <= 1e-12);
    assert!((got - 1.0e-4).abs() <= 1e-7);
}

#[test]
fn psnr_of_one_level_offset() {
    let a = ImageFrame::filled(4, 4, 100);
    let b = ImageFrame::filled(4, 4, 101);
    let got: f64 = psnr(&a, &b).unwrap();
    assert!((got - 20.0 * 255f64.log10()).abs() <= 1e-9);
    assert!((got - 48.13).abs() <= 0.01);
    assert_eq!(psnr::<f64>(&a, &a).unwrap(), f64::INFINITY);
    assert_eq!(psnr::<f64>(&ImageFrame::filled(4, 4, 0), &ImageFrame::filled(4, 4, 255)).unwrap(), 0.0);
}

#[test]
fn weighted_loss_recomposes_from_parts() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let a = random_frame(14, 14, &mut rng);
    let b = random_frame(14, 14, &mut rng);
    let want = 0.8 * naive_l1(&a, &b) + 0.2 * (1.0 - naive_ssim(&a, &b)) / 2.0;
    let got: f64 = mr_loss(&a, &b, 0.2, Dssim::Halved).unwrap();
    assert!((got - want).abs() <= 1e-10);
    let pure: f64 =
        mr_loss(&ImageFrame::filled(11, 11, 0), &ImageFrame::filled(11, 11, 51), 0.0, Dssim::Halved).unwrap();
    assert!((pure - 0.2).abs() <= 1e-12);
}

#[test]
fn composite_picks_one_source_per_pixel() {
    let r = ImageFrame::filled(6, 5, 204);
    let v = ImageFrame::filled(6, 5, 51);
    let d = Mask::from_fn(6, 5, |x, y| (x + y) % 2 == 0);
    let m = composite(&r, &v, &d).unwrap();
    for y in 0..5 {
        for x in 0..6 {
            let want = if (x + y) % 2 == 0 { 0.8 } else { 0.2 };
            for c in 0..3 {
                assert!((sample(&m, x, y, c) - want).abs() < 1e-12);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let g = random_frame(12, 12, &mut rng);
    let real = random_frame(12, 12, &mut rng);
    let virt = random_frame(12, 12, &mut rng);
    let none: f64 = gs_frame_loss(&real, &g, &virt, &Mask::filled(12, 12, false), 0.2, Dssim::Halved).unwrap();
    assert_eq!(none, 0.0);
    let all: f64 = gs_frame_loss(&real, &g, &virt, &Mask::filled(12, 12, true), 0.2, Dssim::Halved).unwrap();
    assert_eq!(all, mr_loss::<f64>(&real, &g, 0.2, Dssim::Halved).unwrap());
}

fn write_frame_set(
    dir: &Path,
    index: usize,
    real: &ImageFrame,
    gs: Option<&ImageFrame>,
    virt: &ImageFrame,
    mask: &Mask,
) {
    real.save(&dir.join(frame_file("real", index))).unwrap();
    if let Some(g) = gs {
        g.save(&dir.join(frame_file("gs", index))).unwrap();
    }
    virt.save(&dir.join(frame_file("virtual", index))).unwrap();
    mask.save(&dir.join(frame_file("mask", index))).unwrap();
}

#[test]
fn ingest_matches_pixel_loop() {
    let dir = tempfile::tempdir().unwrap();
    let (w, h) = (16, 14);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut want = Vec::new();
    for (t, offset) in [0i32, 12, 40].into_iter().enumerate() {
        let real = random_frame(w, h, &mut rng);
        let virt = random_frame(w, h, &mut rng);
        let gs =
            ImageFrame::from_fn(w, h, |x, y, c| (real.data()[(y * w + x) * 3 + c] as i32 + offset).clamp(0, 255) as u8);
        let mask = Mask::from_fn(w, h, |x, _| x < w / 2);
        write_frame_set(dir.path(), t, &real, Some(&gs), &virt, &mask);
        // left half comes from the real/GS source, right half from the virtual frame
        let pick = |src: &ImageFrame| {
            ImageFrame::from_fn(w, h, |x, y, c| {
                let f = if x < w / 2 { src } else { &virt };
                f.data()[(y * w + x) * 3 + c]
            })
        };
        let (truth, rebuilt) = (pick(&real), pick(&gs));
        want.push(0.8 * naive_l1(&truth, &rebuilt) + 0.2 * (1.0 - naive_ssim(&truth, &rebuilt)) / 2.0);
    }
    let got = ingest_frame_dir::<f64>(dir.path(), &IngestOptions::default()).unwrap();
    assert_eq!(got.losses.len(), 3);
    assert_eq!(got.losses[0], 0.0);
    for (g, w) in got.losses.iter().zip(&want) {
        assert!((g - w).abs() <= 1e-10, "{g} vs {w}");
    }
    assert!(got.losses[1] < got.losses[2]);
    assert!(got.missing_renders.is_empty());
}

#[test]
fn ingest_edge_cases() {
    let empty = tempfile::tempdir().unwrap();
    let got = ingest_frame_dir::<f64>(empty.path(), &IngestOptions::default()).unwrap();
    assert!(got.losses.is_empty());

    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for t in 0..3 {
        let real = random_frame(12, 12, &mut rng);
        let virt = random_frame(12, 12, &mut rng);
        let gs = (t != 1).then(|| real.clone());
        write_frame_set(dir.path(), t, &real, gs.as_ref(), &virt, &Mask::filled(12, 12, true));
    }
    let got = ingest_frame_dir::<f64>(dir.path(), &IngestOptions::default()).unwrap();
    assert_eq!(got.losses, vec![0.0, MISSING_RENDER_LOSS, 0.0]);
    assert_eq!(got.missing_renders, vec![1]);
    assert_eq!((got.quality[1].mse, got.quality[1].ssim), (1.0, 0.0));

    std::fs::remove_file(dir.path().join(frame_file("virtual", 2))).unwrap();
    assert!(ingest_frame_dir::<f64>(dir.path(), &IngestOptions::default()).is_err());

    let bad = tempfile::tempdir().unwrap();
    let real = random_frame(12, 12, &mut rng);
    write_frame_set(bad.path(), 0, &real, Some(&random_frame(13, 12, &mut rng)), &real, &Mask::filled(12, 12, true));
    assert!(ingest_frame_dir::<f64>(bad.path(), &IngestOptions::default()).is_err());
}
