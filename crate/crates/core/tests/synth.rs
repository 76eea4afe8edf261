use mareg_core::eval::dice;
use mareg_core::losses::{multi_axis_mi, smoothness, LossWeights};
use mareg_core::synth::{generate_pair, random_bspline_ddf, render_intensity, sample_label_map, GeneratorConfig};
use mareg_core::warp::{warp, warp_nearest};
use mareg_core::{DisplacementField, Mask3D, Shape3, Volume3D};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn shuffled(v: &Volume3D, seed: u64) -> Volume3D {
    let mut d = v.data().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..d.len()).rev() {
        d.swap(i, rng.random_range(0..=i));
    }
    v.with_data(d).unwrap()
}

#[test]
fn label_maps_keep_most_regions() {
    let counts: Vec<usize> = (0..10)
        .map(|s| sample_label_map(s, Shape3::cube(32), 8).unwrap().region_count())
        .collect();
    let mean = counts.iter().sum::<usize>() as f64 / 10.0;
    assert!(mean >= 6.0, "{counts:?}");
}

#[test]
fn field_tail_is_bounded() {
    let sigma = 2.0;
    let mut mags: Vec<f64> = Vec::new();
    for seed in 0..20 {
        let u = random_bspline_ddf(seed, Shape3::cube(64), 8, sigma).unwrap();
        mags.extend(u.magnitudes());
    }
    mags.sort_by(f64::total_cmp);
    let p999 = mags[(mags.len() as f64 * 0.999) as usize];
    assert!(p999 <= 4.0 * sigma, "p99.9 {p999}");
}

#[test]
fn field_is_smoother_than_matched_noise() {
    let s = Shape3::cube(32);
    let u = random_bspline_ddf(3, s, 8, 2.0).unwrap();
    let d = u.to_f64();
    let var = d.iter().map(|v| v * v).sum::<f64>() / d.len() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let noise: Vec<f32> = (0..d.len())
        .map(|_| (var.sqrt() * rng.sample::<f64, _>(StandardNormal)) as f32)
        .collect();
    let noise = DisplacementField::new(s, noise).unwrap();
    assert!(smoothness(&u) < smoothness(&noise));
}

#[test]
fn two_modalities_share_structure() {
    let labels = sample_label_map(8, Shape3::cube(32), 6).unwrap();
    let a = render_intensity(&labels, 1, 100).unwrap();
    let b = render_intensity(&labels, 1, 200).unwrap();
    let w = LossWeights::default();
    let pair = multi_axis_mi(&a, &b, &w).unwrap();
    assert!(pair.is_finite());
    assert!(pair < multi_axis_mi(&a, &shuffled(&b, 5), &w).unwrap());
}

#[test]
fn pairs_are_deterministic_and_bounded() {
    let s = Shape3::cube(32);
    let cfg = GeneratorConfig::default();
    let (a, b) = (generate_pair(11, s, &cfg).unwrap(), generate_pair(11, s, &cfg).unwrap());
    assert_eq!(a, b);
    assert_ne!(a.fixed, generate_pair(12, s, &cfg).unwrap().fixed);
    for v in [&a.fixed, &a.moving] {
        assert!(v.data().iter().all(|&x| (0.0..=1.0).contains(&x)));
    }
}

#[test]
fn ground_truth_statistics_at_default_settings() {
    let s = Shape3::cube(64);
    let cfg = GeneratorConfig::default();
    let w = LossWeights::default();
    let mut mean_mags = Vec::new();
    let mut worst_dice = 1.0f64;
    for seed in 0..20 {
        let p = generate_pair(seed, s, &cfg).unwrap();
        mean_mags.push(p.gt_ddf.mean_magnitude());

        let before = multi_axis_mi(&p.fixed, &p.moving, &w).unwrap();
        let after = multi_axis_mi(&p.fixed, &warp(&p.moving, &p.gt_ddf).unwrap(), &w).unwrap();
        assert!(after < before, "seed {seed}: {after} !< {before}");

        let pulled = warp_nearest(&p.moving_labels.labels, s, &p.gt_ddf, u8::MAX);
        for (label, &count) in p.fixed_labels.counts().iter().enumerate() {
            if count == 0 {
                continue;
            }
            let fixed = Mask3D::new(s, p.fixed_labels.mask(label as u8)).unwrap();
            let moved = Mask3D::new(s, pulled.iter().map(|&l| l == label as u8).collect()).unwrap();
            worst_dice = worst_dice.min(dice(&fixed, &moved).unwrap());
        }
    }
    let mean = mean_mags.iter().sum::<f64>() / mean_mags.len() as f64;
    assert!((0.5..=6.0).contains(&mean), "mean |gt| {mean}");
    assert!(worst_dice >= 0.85, "worst per-label dice {worst_dice}");
}
