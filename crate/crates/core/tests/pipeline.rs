use dsanet_core::pipeline::*;
use dsanet_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_sequence(t: usize, h: usize, w: usize, seed: u64) -> DsaSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = (0..t)
        .map(|_| Image::new(h, w, (0..h * w).map(|_| rng.random_range(0..4096) as f32).collect()).unwrap())
        .collect();
    DsaSequence::new(format!("seq{seed}"), frames, 4095).unwrap()
}

fn random_label(h: usize, w: usize, seed: u64) -> LabelMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    LabelMap::new(h, w, (0..h * w).map(|_| rng.random_range(0..3u8)).collect()).unwrap()
}

#[test]
fn directory_roundtrip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let seq = random_sequence(8, 64, 64, 1);
    let label = random_label(64, 64, 2);
    let mip = minip(&seq);
    save_sequence(dir.path(), &seq, Some(&label), Some(&mip)).unwrap();
    let (back, lab) = load_sequence(dir.path()).unwrap();
    assert_eq!((back.len(), back.height(), back.width()), (8, 64, 64));
    assert_eq!(back, seq);
    assert_eq!(lab.unwrap(), label);
    assert_eq!(load_minip(dir.path(), &seq.id).unwrap().unwrap(), mip);

    let out2 = tempfile::tempdir().unwrap();
    save_sequence(out2.path(), &back, None, None).unwrap();
    let (again, none) = load_sequence(out2.path()).unwrap();
    assert_eq!(again.stacked(), seq.stacked());
    assert!(none.is_none());
}

#[test]
fn eight_bit_frames_load() {
    let dir = tempfile::tempdir().unwrap();
    let frames = (0..3).map(|i| Image::filled(4, 5, 10.0 * i as f32)).collect();
    let seq = DsaSequence::new("small", frames, 255).unwrap();
    save_sequence(dir.path(), &seq, None, None).unwrap();
    let (back, _) = load_sequence(dir.path()).unwrap();
    assert_eq!(back, seq);
}

#[test]
fn load_errors_name_the_file() {
    let dir = tempfile::tempdir().unwrap();
    match load_sequence(dir.path()) {
        Err(Error::Io { path, .. }) => assert!(path.ends_with(MANIFEST)),
        other => panic!("{other:?}"),
    }

    let seq = random_sequence(3, 8, 8, 3);
    save_sequence(dir.path(), &seq, None, None).unwrap();
    let mut manifest = read_manifest(dir.path()).unwrap();
    manifest.frame_files.push("missing.pgm".into());
    std::fs::write(dir.path().join(MANIFEST), serde_json::to_string(&manifest).unwrap()).unwrap();
    let err = load_sequence(dir.path()).unwrap_err();
    assert!(err.to_string().contains("missing.pgm"), "{err}");

    // inconsistent frame size
    manifest.frame_files.pop();
    std::fs::write(dir.path().join(MANIFEST), serde_json::to_string(&manifest).unwrap()).unwrap();
    save_image(&dir.path().join(&manifest.frame_files[1]), &Image::filled(8, 7, 0.0), 4095).unwrap();
    match load_sequence(dir.path()) {
        Err(Error::Format { path, .. }) => assert!(path.ends_with(&manifest.frame_files[1])),
        other => panic!("{other:?}"),
    }

    // label size mismatch
    save_image(&dir.path().join(&manifest.frame_files[1]), &Image::filled(8, 8, 0.0), 4095).unwrap();
    save_label(&dir.path().join(LABEL_FILE), &random_label(4, 8, 0)).unwrap();
    match load_sequence(dir.path()) {
        Err(Error::Format { path, .. }) => assert!(path.ends_with(LABEL_FILE)),
        other => panic!("{other:?}"),
    }
}

#[test]
fn resampled_frames_keep_order_and_duplicates() {
    let frames = (0..5).map(|i| Image::filled(2, 2, i as f32)).collect();
    let seq = DsaSequence::new("five", frames, 255).unwrap();
    let r = resample_temporal(&seq, 8).unwrap();
    let firsts: Vec<f32> = r.frames.iter().map(|f| f.data[0]).collect();
    assert_eq!(firsts, vec![0.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0]);
    assert_eq!(r.source_frame_count, 5);
    assert!(matches!(resample_temporal(&seq, 0), Err(Error::Usage(_))));
}

#[test]
fn minip_of_constant_sequence_is_a_frame() {
    let frames = vec![Image::filled(3, 3, 7.0); 4];
    let seq = DsaSequence::new("c", frames, 255).unwrap();
    assert_eq!(minip(&seq).image, seq.frames[2]);
}

#[test]
fn zscore_statistics() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x: Vec<f32> = (0..10_000).map(|_| rng.random_range(-3.0..50.0)).collect();
    let (m, s) = mean_std(&normalize_intensity(&x));
    assert!(m.abs() < 1e-6, "{m}");
    assert!((s - 1.0).abs() < 1e-5, "{s}");
}

#[test]
fn sample_normalization_uses_minip_statistics() {
    let seq = random_sequence(4, 16, 16, 9);
    let mip = minip(&seq);
    let (frames, m) = normalize_sample(&seq.stacked(), &mip.image.data);
    let (mm, ms) = mean_std(&m);
    assert!(mm.abs() < 1e-6 && (ms - 1.0).abs() < 1e-5);
    // frames are brighter than their minimum, so their normalized mean is positive
    assert!(mean_std(&frames).0 > 0.0);
    let (mean, std) = mean_std(&mip.image.data);
    let expect = ((seq.frames[0].data[0] as f64 - mean) / std) as f32;
    assert_eq!(frames[0], expect);
}

fn triple(seed: u64) -> (DsaSequence, MinipImage, LabelMap) {
    let seq = random_sequence(3, 20, 24, seed);
    let mip = minip(&seq);
    (seq, mip, random_label(20, 24, seed + 100))
}

#[test]
fn identity_augmentation_is_exact() {
    let (seq, mip, label) = triple(11);
    let out = apply_augment(&seq, &mip, &label, &AugmentParams::identity(20, 24));
    assert_eq!(out, (seq, mip, label));
}

#[test]
fn mirroring_twice_is_identity() {
    let (seq, mip, label) = triple(12);
    let p = AugmentParams { flip_x: true, flip_y: true, ..AugmentParams::identity(20, 24) };
    let once = apply_augment(&seq, &mip, &label, &p);
    assert_ne!(once.0, seq);
    assert_eq!(once.2.get(0, 0), label.get(19, 23));
    let twice = apply_augment(&once.0, &once.1, &once.2, &p);
    assert_eq!(twice, (seq, mip, label));
}

#[test]
fn augmentation_crops_to_patch_and_keeps_label_classes() {
    let (seq, mip, _) = triple(13);
    let label = LabelMap::new(20, 24, (0..480).map(|i| if i % 7 == 0 { 1 } else { 0 }).collect()).unwrap();
    let cfg = AugmentConfig { crop: Some(16), ..Default::default() };
    for seed in 0..20 {
        let (s, m, l) = augment(&seq, &mip, &label, seed, &cfg);
        assert_eq!((s.height(), s.width(), m.image.height, l.width), (16, 16, 16, 16));
        assert!(l.classes.iter().all(|&c| c <= 1));
        assert!(s.frames.iter().all(|f| f.data.iter().all(|v| (0.0..=4095.0).contains(v))));
    }
    // smaller than the crop: mirrored up to size
    let cfg = AugmentConfig { crop: Some(32), ..Default::default() };
    let (s, _, l) = augment(&seq, &mip, &label, 3, &cfg);
    assert_eq!((s.height(), l.height), (32, 32));
}

#[test]
fn augmentation_is_seed_deterministic() {
    let (seq, mip, label) = triple(14);
    let cfg = AugmentConfig::default();
    assert_eq!(augment(&seq, &mip, &label, 7, &cfg), augment(&seq, &mip, &label, 7, &cfg));
}

#[test]
fn single_patch_and_half_overlap_stitch() {
    let img: Vec<f32> = (0..16).map(|v| v as f32).collect();
    let (grid, patches) = extract_patches(&img, 1, 4, 4, 4, 4).unwrap();
    assert_eq!(patches, vec![img.clone()]);
    assert_eq!(stitch(&grid, &patches, 1).unwrap(), img);

    // 2x4 image, 2x2 windows with stride 1: columns 1..3 covered twice
    let grid = PatchGrid::new(2, 4, 2, 2).unwrap();
    assert_eq!(grid.len(), 2);
    let grid = PatchGrid { offsets: vec![(0, 0), (0, 1), (0, 2)], stride: 1, ..grid };
    let outs = vec![vec![0.0; 4], vec![1.0; 4], vec![1.0; 4]];
    let s = stitch(&grid, &outs, 1).unwrap();
    assert_eq!(s[..4], [0.0, 0.5, 1.0, 1.0]);
    assert!(matches!(stitch(&grid, &outs[..2], 1), Err(Error::Usage(_))));
}

#[test]
fn sequence_patches_share_one_grid() {
    let seq = random_sequence(3, 10, 9, 21);
    let (grid, patches) = extract_patches(&seq.stacked(), 3, 10, 9, 4, 3).unwrap();
    for (&(oy, ox), p) in grid.offsets.iter().zip(&patches) {
        for t in 0..3 {
            let y = oy as isize - grid.pad_top as isize;
            let x = ox as isize - grid.pad_left as isize;
            let v = seq.frames[t].get(mirror_index(y, 10), mirror_index(x, 9));
            assert_eq!(p[t * 16], v);
        }
    }
}

/// Independent coverage oracle: every original pixel lies inside some window.
fn covered(grid: &PatchGrid) -> bool {
    (0..grid.height).all(|y| {
        (0..grid.width).all(|x| {
            let (py, px) = (y + grid.pad_top, x + grid.pad_left);
            grid.offsets
                .iter()
                .any(|&(oy, ox)| (oy..oy + grid.patch).contains(&py) && (ox..ox + grid.patch).contains(&px))
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stitch_after_extract_is_identity(
        h in 1usize..40, w in 1usize..40, patch in 1usize..20, sdiv in 1usize..5,
        c in 1usize..3, seed in any::<u64>(),
    ) {
        let stride = (patch / sdiv).max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img: Vec<f32> = (0..c * h * w).map(|_| rng.random_range(-1e3f32..1e3)).collect();
        let (grid, patches) = extract_patches(&img, c, h, w, patch, stride).unwrap();
        prop_assert!(covered(&grid));
        prop_assert!(grid.offsets.iter().all(|&(y, x)| y + patch <= grid.padded_height && x + patch <= grid.padded_width));
        prop_assert_eq!(stitch(&grid, &patches, c).unwrap(), img);
    }

    #[test]
    fn minip_ignores_frame_order(seed in any::<u64>(), t in 1usize..7) {
        let seq = random_sequence(t, 6, 5, seed);
        let mut shuffled = seq.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        for i in (1..t).rev() {
            shuffled.frames.swap(i, rng.random_range(0..=i));
        }
        prop_assert_eq!(minip(&shuffled), minip(&seq));
        let same = resample_temporal(&seq, t).unwrap();
        prop_assert_eq!(minip(&same), minip(&seq));
    }

    #[test]
    fn normalization_is_affine_invariant(
        xs in proptest::collection::vec(-1000i32..1000, 2..200), a in 1i32..64, b in -5000i32..5000,
    ) {
        // integer data with a dyadic scale keeps a*x+b exact in f32
        prop_assume!(xs.iter().any(|&x| x != xs[0]));
        let a = a as f32 / 8.0;
        let base: Vec<f32> = xs.iter().map(|&x| x as f32).collect();
        let shifted: Vec<f32> = base.iter().map(|&x| a * x + b as f32).collect();
        let (u, v) = (normalize_intensity(&base), normalize_intensity(&shifted));
        for (p, q) in u.iter().zip(&v) {
            prop_assert!((p - q).abs() < 1e-6, "{} vs {}", p, q);
        }
    }

    #[test]
    fn random_augmentation_never_adds_classes(seed in any::<u64>()) {
        let (seq, mip, label) = triple(seed % 1000);
        let (_, _, l) = augment(&seq, &mip, &label, seed, &AugmentConfig::default());
        prop_assert!(l.classes.iter().all(|&c| c <= 2));
    }
}
