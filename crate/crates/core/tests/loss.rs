use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thermosplat_core::image::ThermalImage;
use thermosplat_core::loss::*;
use thermosplat_core::thermo::TempCurve;

fn random_image(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.0..1.0)).collect()
}

/// Direct 2D-window SSIM: explicit 11×11 weights, explicit per-window sums.
fn reference_ssim(a: &[f64], b: &[f64], w: usize, h: usize) -> f64 {
    let mut g = [[0.0f64; 11]; 11];
    let mut total = 0.0;
    for (i, row) in g.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(di * di + dj * dj) / (2.0 * 1.5 * 1.5)).exp();
            total += *v;
        }
    }
    let mut acc = 0.0;
    let mut count = 0usize;
    for y0 in 0..=h - 11 {
        for x0 in 0..=w - 11 {
            let (mut ma, mut mb) = (0.0, 0.0);
            for i in 0..11 {
                for j in 0..11 {
                    let k = g[i][j] / total;
                    ma += k * a[(y0 + i) * w + x0 + j];
                    mb += k * b[(y0 + i) * w + x0 + j];
                }
            }
            let (mut va, mut vb, mut cab) = (0.0, 0.0, 0.0);
            for i in 0..11 {
                for j in 0..11 {
                    let k = g[i][j] / total;
                    let da = a[(y0 + i) * w + x0 + j] - ma;
                    let db = b[(y0 + i) * w + x0 + j] - mb;
                    va += k * da * da;
                    vb += k * db * db;
                    cab += k * da * db;
                }
            }
            let c1 = 0.01f64.powi(2);
            let c2 = 0.03f64.powi(2);
            acc += ((2.0 * ma * mb + c1) * (2.0 * cab + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    acc / count as f64
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
}

#[test]
fn l1_examples() {
    let a = vec![0.2, 0.4, 0.6, 0.8];
    assert_eq!(l1_loss(&a, &a).unwrap().0, 0.0);
    let b: Vec<f64> = a.iter().map(|v| v + 0.1).collect();
    assert!((l1_loss(&b, &a).unwrap().0 - 0.1).abs() < 1e-15);
    let (_, g) = l1_loss(&b, &a).unwrap();
    assert!(g.iter().all(|&v| v == 0.25));
    assert!(l1_loss(&a, &a[..3]).is_err());
}

#[test]
fn l1_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = random_image(&mut rng, 64);
    let t = random_image(&mut rng, 64);
    let (_, g) = l1_loss(&p, &t).unwrap();
    let h = 1e-7;
    for i in 0..64 {
        let mut a = p.clone();
        let mut b = p.clone();
        a[i] += h;
        b[i] -= h;
        let n = (l1_loss(&a, &t).unwrap().0 - l1_loss(&b, &t).unwrap().0) / (2.0 * h);
        assert!((g[i] - n).abs() < 1e-6);
    }
}

#[test]
fn ssim_matches_reference_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let a = random_image(&mut rng, 32 * 32);
        let b = random_image(&mut rng, 32 * 32);
        let ours = ssim_value(&a, &b, 32, 32).unwrap();
        let theirs = reference_ssim(&a, &b, 32, 32);
        assert!((ours - theirs).abs() < 1e-6, "{ours} vs {theirs}");
    }
}

#[test]
fn ssim_self_similarity_is_exactly_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = random_image(&mut rng, 32 * 32);
    assert_eq!(ssim_value(&a, &a, 32, 32).unwrap(), 1.0);
    assert_eq!(ssim_with_grad(&a, &a, 32, 32).unwrap().0, 1.0);
}

#[test]
fn ssim_of_inverted_image_is_low() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a = random_image(&mut rng, 32 * 32);
    let b: Vec<f64> = a.iter().map(|v| 1.0 - v).collect();
    let s = ssim_value(&b, &a, 32, 32).unwrap();
    assert!(s < 0.5, "{s}");
    assert!((s - reference_ssim(&b, &a, 32, 32)).abs() < 1e-6);
}

#[test]
fn ssim_rejects_small_images() {
    let a = vec![0.5; 100];
    assert!(ssim_value(&a, &a, 10, 10).is_err());
}

#[test]
fn ssim_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (w, h) = (16, 14);
    let p = random_image(&mut rng, w * h);
    let t = random_image(&mut rng, w * h);
    let (_, g) = ssim_with_grad(&p, &t, w, h).unwrap();
    let step = 1e-6;
    let mut numeric = Vec::new();
    for i in 0..w * h {
        let mut a = p.clone();
        let mut b = p.clone();
        a[i] += step;
        b[i] -= step;
        numeric.push((ssim_value(&a, &t, w, h).unwrap() - ssim_value(&b, &t, w, h).unwrap()) / (2.0 * step));
    }
    // Corner pixels carry gradients near 1e-8, so compare as vectors.
    let diff: f64 = g.iter().zip(&numeric).map(|(a, n)| (a - n) * (a - n)).sum::<f64>().sqrt();
    let norm: f64 = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    assert!(diff / norm < 1e-4, "relative error {}", diff / norm);
}

#[test]
fn smooth_examples() {
    assert_eq!(smooth_loss(&[-1.0, -3.0], 2).unwrap().0, 4.0);
    assert_eq!(smooth_loss(&[0.5; 6], 3).unwrap().0, 0.0);
    assert!(smooth_loss(&[1.0], 1).is_err());
    let d = [0.3, -0.1, 0.7, 0.2];
    let base = smooth_loss(&d, 4).unwrap().0;
    let scaled: Vec<f64> = d.iter().map(|v| v * 3.0).collect();
    assert!((smooth_loss(&scaled, 4).unwrap().0 - 9.0 * base).abs() < 1e-12);
    let curve = TempCurve {
        times: vec![0.0, 1.0, 2.0],
        temps: vec![300.0, 299.0, 296.0],
        deltas: vec![-1.0, -3.0],
    };
    assert_eq!(smooth_loss_curves(&[curve]).unwrap().0, 4.0);
}

#[test]
fn smooth_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let d: Vec<f64> = (0..24).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (_, g) = smooth_loss(&d, 8).unwrap();
    let h = 1e-6;
    for i in 0..24 {
        let mut a = d.clone();
        let mut b = d.clone();
        a[i] += h;
        b[i] -= h;
        let n = (smooth_loss(&a, 8).unwrap().0 - smooth_loss(&b, 8).unwrap().0) / (2.0 * h);
        assert!(rel_err(g[i], n) < 1e-4);
    }
}

#[test]
fn stage1_composition() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a = random_image(&mut rng, 16 * 16);
    let (p, _) = stage1_loss(&a, &a, 16, 16, &LossWeights::default()).unwrap();
    assert_eq!(p.total, 0.0);
    let b = random_image(&mut rng, 16 * 16);
    let (p, _) = stage1_loss(&a, &b, 16, 16, &LossWeights::default()).unwrap();
    assert!((p.total - (0.8 * p.l1 + 0.2 * (1.0 - p.ssim))).abs() < 1e-15);
    // Weighted arithmetic with L1 = 1 and SSIM = 0.5.
    let w = LossWeights::default();
    assert!((w.l1 * 1.0 + w.ssim * (1.0 - 0.5) - 0.9).abs() < 1e-15);
}

#[test]
fn stage1_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let p = random_image(&mut rng, 12 * 13);
    let t = random_image(&mut rng, 12 * 13);
    let w = LossWeights::default();
    let (_, g) = stage1_loss(&p, &t, 12, 13, &w).unwrap();
    let h = 1e-7;
    for i in 0..p.len() {
        let mut a = p.clone();
        let mut b = p.clone();
        a[i] += h;
        b[i] -= h;
        let n = (stage1_loss(&a, &t, 12, 13, &w).unwrap().0.total
            - stage1_loss(&b, &t, 12, 13, &w).unwrap().0.total)
            / (2.0 * h);
        assert!((g[i] - n).abs() < 1e-5, "{i}: {} vs {n}", g[i]);
    }
}

#[test]
fn stage2_reductions() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let gt = random_image(&mut rng, 16 * 16);
    let linear = vec![-0.2; 8];
    let w = LossWeights::default();
    let r = stage2_loss(&gt, &gt, &gt, 16, 16, &linear, 4, &w, false).unwrap();
    assert_eq!(r.total, 0.0);

    let bumpy = [0.0, 1.0, 0.0, 1.0];
    let r = stage2_loss(&gt, &gt, &gt, 16, 16, &bumpy, 4, &w, false).unwrap();
    assert_eq!(r.total, 10.0 * r.smooth);
    assert!(r.smooth > 0.0);

    let p = random_image(&mut rng, 16 * 16);
    let w0 = LossWeights { smooth: 0.0, ..w };
    let r = stage2_loss(&p, &p, &gt, 16, 16, &bumpy, 4, &w0, false).unwrap();
    let (s1, _) = stage1_loss(&p, &gt, 16, 16, &w0).unwrap();
    assert_eq!(r.total, 2.0 * s1.total);
}

#[test]
fn stage2_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (w, h) = (12, 12);
    let gt = random_image(&mut rng, w * h);
    let d = random_image(&mut rng, w * h);
    let i = random_image(&mut rng, w * h);
    let deltas: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..0.0)).collect();
    let lw = LossWeights::default();
    for average in [false, true] {
        let f = |d: &[f64], i: &[f64], dl: &[f64]| stage2_loss(d, i, &gt, w, h, dl, 4, &lw, average).unwrap().total;
        let r = stage2_loss(&d, &i, &gt, w, h, &deltas, 4, &lw, average).unwrap();
        let step = 1e-7;
        for k in 0..w * h {
            let (mut a, mut b) = (d.clone(), d.clone());
            a[k] += step;
            b[k] -= step;
            let n = (f(&a, &i, &deltas) - f(&b, &i, &deltas)) / (2.0 * step);
            assert!((r.grad_direct[k] - n).abs() < 1e-5);
            let (mut a, mut b) = (i.clone(), i.clone());
            a[k] += step;
            b[k] -= step;
            let n = (f(&d, &a, &deltas) - f(&d, &b, &deltas)) / (2.0 * step);
            assert!((r.grad_integral[k] - n).abs() < 1e-5);
        }
        for k in 0..deltas.len() {
            let (mut a, mut b) = (deltas.clone(), deltas.clone());
            a[k] += 1e-6;
            b[k] -= 1e-6;
            let n = (f(&d, &i, &a) - f(&d, &i, &b)) / 2e-6;
            assert!(rel_err(r.grad_deltas[k], n) < 1e-4);
        }
    }
}

#[test]
fn consistency_gradients() {
    let (v, ga, gb) = consistency_loss(&[1.0, 3.0], &[0.0, 1.0]).unwrap();
    assert_eq!(v, 2.5);
    assert_eq!(ga, vec![1.0, 2.0]);
    assert_eq!(gb, vec![-1.0, -2.0]);
}

fn kelvin(data: Vec<f64>, w: usize, h: usize) -> ThermalImage {
    ThermalImage {
        width: w,
        height: h,
        data,
        timestamp: 0.0,
    }
}

#[test]
fn metric_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let base: Vec<f64> = (0..256).map(|_| rng.random_range(285.0..300.0)).collect();
    let a = kelvin(base.clone(), 16, 16);
    let range = [0.0, 40.0];
    let na = NormalizedImage::from_kelvin(&a, range).unwrap();
    assert_eq!(psnr(&na, &na).unwrap(), 100.0);
    assert_eq!(mae_celsius(&a, &a).unwrap(), 0.0);

    let shifted: Vec<f64> = na.data.iter().map(|v| v + 0.1).collect();
    assert!((psnr_values(&shifted, &na.data).unwrap() - 20.0).abs() < 1e-9);

    let b = kelvin(base.iter().map(|v| v + 1.0).collect(), 16, 16);
    assert!((mae_celsius(&b, &a).unwrap() - 1.0).abs() < 1e-12);

    // MAE ignores the normalization range, PSNR does not.
    let wide = [-20.0, 60.0];
    let p_narrow = psnr(
        &NormalizedImage::from_kelvin(&b, range).unwrap(),
        &NormalizedImage::from_kelvin(&a, range).unwrap(),
    )
    .unwrap();
    let p_wide = psnr(
        &NormalizedImage::from_kelvin(&b, wide).unwrap(),
        &NormalizedImage::from_kelvin(&a, wide).unwrap(),
    )
    .unwrap();
    assert!((p_wide - p_narrow - 20.0 * 2f64.log10()).abs() < 1e-9);
    assert!(mae_values(&base, &base[..10]).is_err());
}

#[test]
fn normalized_image_is_clamped() {
    let img = kelvin(vec![200.0, 273.15, 293.15, 400.0], 2, 2);
    let n = NormalizedImage::from_kelvin(&img, [0.0, 40.0]).unwrap();
    assert_eq!(n.data, vec![0.0, 0.0, 0.5, 1.0]);
}

proptest! {
    #[test]
    fn ssim_is_symmetric(seed in 0u64..100_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_image(&mut rng, 12 * 12);
        let b = random_image(&mut rng, 12 * 12);
        let ab = ssim_value(&a, &b, 12, 12).unwrap();
        let ba = ssim_value(&b, &a, 12, 12).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&ab));
    }

    #[test]
    fn mae_invariant_to_normalization(shift in -5.0f64..5.0, lo in -30.0f64..0.0, span in 20.0f64..80.0) {
        let a = kelvin((0..16).map(|i| 280.0 + i as f64).collect(), 4, 4);
        let b = kelvin(a.data.iter().map(|v| v + shift).collect(), 4, 4);
        let _ = NormalizedImage::from_kelvin(&a, [lo, lo + span]).unwrap();
        prop_assert!((mae_celsius(&b, &a).unwrap() - shift.abs()).abs() < 1e-9);
    }
}
