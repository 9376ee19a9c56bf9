use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use treescan::patchgrid::*;

fn block_mean(fmap: &FeatureMap, pr: usize, pc: usize, pitch: usize) -> Vec<f64> {
    let mut out = vec![0.0; fmap.channels()];
    for r in 0..pitch {
        for c in 0..pitch {
            for (ch, o) in out.iter_mut().enumerate() {
                *o += fmap.pixel(pr * pitch + r, pc * pitch + c)[ch] / (pitch * pitch) as f64;
            }
        }
    }
    out
}

/// Bilinear sampling written as a sum of tent kernels over every cell center.
fn tent_sample(fmap: &FeatureMap, x: f64, y: f64) -> Vec<f64> {
    let u = (x - 0.5).max(0.0).min(fmap.width() as f64 - 1.0);
    let v = (y - 0.5).max(0.0).min(fmap.height() as f64 - 1.0);
    let mut out = vec![0.0; fmap.channels()];
    for r in 0..fmap.height() {
        let wr = (1.0 - (v - r as f64).abs()).max(0.0);
        for c in 0..fmap.width() {
            let w = wr * (1.0 - (u - c as f64).abs()).max(0.0);
            if w > 0.0 {
                for (ch, o) in out.iter_mut().enumerate() {
                    *o += w * fmap.pixel(r, c)[ch];
                }
            }
        }
    }
    out
}

fn scalar_resample(fmap: &FeatureMap, cfg: &PatchGridConfig, field: &DeformationField) -> Vec<Vec<f64>> {
    let p = cfg.pitch as f64;
    let s = cfg.samples_per_side;
    let mut out = Vec::new();
    for pr in 0..cfg.rows {
        for pc in 0..cfg.cols {
            let d = field.patches[pr * cfg.cols + pc];
            let cx = (pc as f64 + 0.5) * p + d.dx * p / 2.0;
            let cy = (pr as f64 + 0.5) * p + d.dy * p / 2.0;
            let left = f64::max(cx - d.dw * p / 2.0, 0.0);
            let right = f64::min(cx + d.dw * p / 2.0, fmap.width() as f64);
            let top = f64::max(cy - d.dh * p / 2.0, 0.0);
            let bottom = f64::min(cy + d.dh * p / 2.0, fmap.height() as f64);
            let mut acc = vec![0.0; fmap.channels()];
            for i in 0..s {
                for j in 0..s {
                    let x = left + (right - left) * (2 * j + 1) as f64 / (2 * s) as f64;
                    let y = top + (bottom - top) * (2 * i + 1) as f64 / (2 * s) as f64;
                    for (a, v) in acc.iter_mut().zip(tent_sample(fmap, x, y)) {
                        *a += v / (s * s) as f64;
                    }
                }
            }
            out.push(acc);
        }
    }
    out
}

fn random_field<R: Rng>(rng: &mut R, count: usize) -> DeformationField {
    DeformationField {
        patches: (0..count)
            .map(|_| Deformation {
                dx: rng.gen_range(-1.0..=1.0),
                dy: rng.gen_range(-1.0..=1.0),
                dw: rng.gen_range(SCALE_MIN..=SCALE_MAX),
                dh: rng.gen_range(SCALE_MIN..=SCALE_MAX),
            })
            .collect(),
    }
}

#[test]
fn fixed_pooling_cases() {
    let constant = FeatureMap::from_fn(4, 4, 1, |_, _, _| 5.0).unwrap();
    let cfg = PatchGridConfig::for_map(&constant, 2, 2).unwrap();
    let nodes = pool_fixed_patches(&constant, &cfg).unwrap();
    assert_eq!(nodes.len(), 4);
    assert!(nodes.iter().all(|n| n.feature == [5.0] && n.extent == (2.0, 2.0)));

    let small = FeatureMap::new(2, 2, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
    let cfg = PatchGridConfig::for_map(&small, 1, 1).unwrap();
    let nodes = pool_fixed_patches(&small, &cfg).unwrap();
    let feats: Vec<f64> = nodes.iter().map(|n| n.feature[0]).collect();
    assert_eq!(feats, [0.0, 1.0, 2.0, 3.0]);
    assert_eq!(nodes[3].center, (1.5, 1.5));

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let fmap = FeatureMap::random(&mut rng, 8, 8, 3);
    let cfg = PatchGridConfig::for_map(&fmap, 4, 2).unwrap();
    for n in pool_fixed_patches(&fmap, &cfg).unwrap() {
        let want = block_mean(&fmap, n.grid_pos.0, n.grid_pos.1, 4);
        assert!(n.feature.iter().zip(&want).all(|(a, b)| (a - b).abs() <= 1e-12));
    }
}

#[test]
fn grid_mismatch_is_config_error() {
    let fmap = FeatureMap::zeros(6, 8, 1);
    assert!(matches!(
        PatchGridConfig::for_map(&fmap, 4, 2),
        Err(treescan::Error::Config(_))
    ));
    let cfg = PatchGridConfig::for_map(&FeatureMap::zeros(8, 8, 1), 4, 2).unwrap();
    assert!(pool_fixed_patches(&fmap, &cfg).is_err());
}

#[test]
fn identity_weights_give_identity_field() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let fmap = FeatureMap::random(&mut rng, 6, 9, 4);
    let cfg = PatchGridConfig::for_map(&fmap, 3, 3).unwrap();
    let field = predict_deformation(&fmap, &cfg, &DeformationWeights::identity(4)).unwrap();
    assert!(field.patches.iter().all(|d| *d == Deformation::IDENTITY));
}

#[test]
fn scale_clamps_at_both_ends() {
    let fmap = FeatureMap::from_fn(4, 4, 2, |_, _, _| 1.0).unwrap();
    let cfg = PatchGridConfig::for_map(&fmap, 2, 2).unwrap();
    let mut w = DeformationWeights::identity(2);
    w.conv3x3 = vec![1.0; 9 * 4];
    w.w_scale = [vec![50.0; 2], vec![50.0; 2]];
    let field = predict_deformation(&fmap, &cfg, &w).unwrap();
    assert!(field.patches.iter().all(|d| d.dw == SCALE_MAX && d.dh == SCALE_MAX));
    w.w_scale = [vec![-50.0; 2], vec![-50.0; 2]];
    let field = predict_deformation(&fmap, &cfg, &w).unwrap();
    assert!(field.patches.iter().all(|d| d.dw == SCALE_MIN && d.dh == SCALE_MIN));
}

#[test]
fn deformation_matches_scalar_formula() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (rows, cols, pitch, c) = (3, 4, 2, 3);
        let fmap = FeatureMap::random(&mut rng, rows * pitch, cols * pitch, c);
        let cfg = PatchGridConfig::for_map(&fmap, pitch, 2).unwrap();
        let w = DeformationWeights::random(&mut rng, c, 1.5);
        let field = predict_deformation(&fmap, &cfg, &w).unwrap();
        for pr in 0..rows {
            for pc in 0..cols {
                let mut hidden = vec![0.0; c];
                for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        let (r, q) = (pr as i64 + dr, pc as i64 + dc);
                        if r < 0 || q < 0 || r >= rows as i64 || q >= cols as i64 {
                            continue;
                        }
                        let f = block_mean(&fmap, r as usize, q as usize, pitch);
                        let tap = ((dr + 1) * 3 + dc + 1) as usize;
                        for (o, h) in hidden.iter_mut().enumerate() {
                            for (i, fi) in f.iter().enumerate() {
                                *h += w.conv3x3[tap * c * c + o * c + i] * fi;
                            }
                        }
                    }
                }
                let dot = |row: &[f64]| row.iter().zip(&hidden).map(|(a, b)| a * b).sum::<f64>();
                let softplus = |z: f64| (1.0 + z.exp()).ln();
                let want = [
                    dot(&w.w_offset[0]).tanh(),
                    dot(&w.w_offset[1]).tanh(),
                    softplus(dot(&w.w_scale[0]) + w.b_scale[0]).clamp(0.8, 1.2),
                    softplus(dot(&w.w_scale[1]) + w.b_scale[1]).clamp(0.8, 1.2),
                ];
                let d = field.patches[pr * cols + pc];
                for (got, want) in [d.dx, d.dy, d.dw, d.dh].iter().zip(want) {
                    assert!((got - want).abs() <= 1e-9, "seed {seed} patch ({pr},{pc})");
                }
                assert!(d.in_range());
            }
        }
    }
}

#[test]
fn bilinear_cases() {
    let small = FeatureMap::new(2, 2, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
    assert_eq!(bilinear_sample(&small, 1.0, 1.0), [1.5]);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let fmap = FeatureMap::random(&mut rng, 5, 7, 3);
    for r in 0..5 {
        for c in 0..7 {
            assert_eq!(bilinear_sample(&fmap, c as f64 + 0.5, r as f64 + 0.5), fmap.pixel(r, c));
        }
    }
    assert_eq!(bilinear_sample(&fmap, -4.0, 100.0), fmap.pixel(4, 0));
}

#[test]
fn identity_field_reproduces_fixed_pooling() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for pitch in 1..=4 {
        let fmap = FeatureMap::random(&mut rng, 3 * pitch, 2 * pitch, 2);
        let cfg = PatchGridConfig::for_map(&fmap, pitch, pitch).unwrap();
        let fixed = pool_fixed_patches(&fmap, &cfg).unwrap();
        let deformed = extract_deformed_patches(&fmap, &cfg, &DeformationField::identity(6)).unwrap();
        for (a, b) in fixed.iter().zip(&deformed) {
            assert_eq!(a.center, b.center);
            assert!(a.feature.iter().zip(&b.feature).all(|(x, y)| (x - y).abs() <= 1e-12));
        }
    }
}

#[test]
fn constant_map_any_field() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let fmap = FeatureMap::from_fn(6, 6, 2, |_, _, ch| if ch == 0 { -0.25 } else { 3.0 }).unwrap();
    let cfg = PatchGridConfig::for_map(&fmap, 2, 3).unwrap();
    let field = random_field(&mut rng, 9);
    for n in extract_deformed_patches(&fmap, &cfg, &field).unwrap() {
        assert!((n.feature[0] + 0.25).abs() < 1e-15 && (n.feature[1] - 3.0).abs() < 1e-14);
    }
}

#[test]
fn deformed_patches_match_scalar_resampler() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pitch = rng.gen_range(1..=3);
        let fmap = FeatureMap::random(&mut rng, 4 * pitch, 3 * pitch, 2);
        let cfg = PatchGridConfig::for_map(&fmap, pitch, rng.gen_range(1..=4)).unwrap();
        let field = random_field(&mut rng, cfg.node_count());
        let nodes = extract_deformed_patches(&fmap, &cfg, &field).unwrap();
        for (n, want) in nodes.iter().zip(scalar_resample(&fmap, &cfg, &field)) {
            assert!(n.feature.iter().zip(&want).all(|(a, b)| (a - b).abs() <= 1e-10));
            assert!(n.center.0 >= 0.0 && n.center.0 < fmap.width() as f64);
            assert!(n.center.1 >= 0.0 && n.center.1 < fmap.height() as f64);
        }
    }
}

#[test]
fn field_length_mismatch() {
    let fmap = FeatureMap::zeros(4, 4, 1);
    let cfg = PatchGridConfig::for_map(&fmap, 2, 2).unwrap();
    assert!(extract_deformed_patches(&fmap, &cfg, &DeformationField::identity(3)).is_err());
    assert!(predict_deformation(&fmap, &cfg, &DeformationWeights::identity(2)).is_err());
}

proptest! {
    #[test]
    fn bilinear_is_linear(seed in any::<u64>(), x in -1.0f64..8.0, y in -1.0f64..6.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = FeatureMap::random(&mut rng, 5, 7, 2);
        let b = FeatureMap::random(&mut rng, 5, 7, 2);
        let sum: Vec<f64> = a.data().iter().zip(b.data()).map(|(p, q)| p + q).collect();
        let ab = FeatureMap::new(5, 7, 2, sum).unwrap();
        let (sa, sb, sab) = (bilinear_sample(&a, x, y), bilinear_sample(&b, x, y), bilinear_sample(&ab, x, y));
        for ch in 0..2 {
            prop_assert!((sab[ch] - sa[ch] - sb[ch]).abs() <= 1e-12);
        }
    }

    #[test]
    fn adversarial_weights_stay_in_range(seed in any::<u64>(), scale in 0.1f64..1e4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fmap = FeatureMap::random(&mut rng, 6, 6, 3);
        let cfg = PatchGridConfig::for_map(&fmap, 2, 2).unwrap();
        let w = DeformationWeights::random(&mut rng, 3, scale);
        let field = predict_deformation(&fmap, &cfg, &w).unwrap();
        prop_assert!(field.patches.iter().all(Deformation::in_range));
    }
}
