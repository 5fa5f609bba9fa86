use super::*;
use crate::data::Subject;
use crate::grid::uniform;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// `f(t, z, score, rng)`, with one standard normal `score` per subject.
fn dataset(
    n: usize,
    m: usize,
    seed: u64,
    f: impl Fn(f64, f64, f64, &mut crate::rng::StreamRng) -> f64,
) -> FunctionalDataset {
    let t = uniform(0.0, 1.0, m);
    let subjects = (0..n)
        .map(|i| {
            let mut rng = crate::rng::stream(seed, i as u64);
            let z = rng.random_range(0.0..1.0);
            let score: f64 = Normal::new(0.0, 1.0).unwrap().sample(&mut rng);
            let y = t.iter().map(|&tj| f(tj, z, score, &mut rng)).collect();
            Subject::new(format!("s{i}"), vec![z], t.clone(), y)
        })
        .collect();
    FunctionalDataset::new(subjects, 1)
}

fn bw(h_t: f64, h_z: f64) -> Bandwidths {
    Bandwidths::new(h_t, vec![h_z], 0.2, vec![h_z]).unwrap()
}

#[test]
fn zero_data_gives_zero_mean() {
    let d = dataset(30, 11, 1, |_, _, _, _| 0.0);
    let mean = estimate_mean(
        &d,
        &bw(0.2, 0.3),
        KernelSpec::EPANECHNIKOV,
        &uniform(0.0, 1.0, 21),
        &[uniform(0.0, 1.0, 11)],
    )
    .unwrap();
    assert!(mean.values.iter().all(|v| v.abs() < 1e-10));
}

#[test]
fn affine_mean_is_recovered() {
    let d = dataset(60, 11, 2, |t, z, _, _| 1.0 + t + z);
    let mean = estimate_mean(
        &d,
        &bw(0.3, 0.3),
        KernelSpec::EPANECHNIKOV,
        &uniform(0.1, 0.9, 9),
        &[uniform(0.2, 0.8, 7)],
    )
    .unwrap();
    for (t, z) in [(0.3, 0.4), (0.5, 0.5), (0.9, 0.2)] {
        assert!((mean.eval(t, &[z]) - (1.0 + t + z)).abs() < 1e-8);
    }
}

#[test]
fn nadaraya_watson_reproduces_constants_and_ratio() {
    let d = dataset(40, 6, 3, |_, _, _, _| 2.5);
    let spec = KernelSpec::GAUSSIAN;
    let nw = nadaraya_watson_mean(&d, &bw(0.2, 0.2), spec, &uniform(0.0, 1.0, 5), &[uniform(0.0, 1.0, 5)]).unwrap();
    assert!(nw.values.iter().all(|v| (v - 2.5).abs() < 1e-12));

    let d = dataset(40, 6, 4, |t, z, _, rng| t * z + rng.random_range(-1.0..1.0));
    let (h_t, h_z) = (0.2, 0.25);
    let nw = nadaraya_watson_mean(&d, &bw(h_t, h_z), spec, &[0.4], &[vec![0.6]]).unwrap();
    let (mut num, mut den) = (0.0, 0.0);
    for s in &d.subjects {
        let wi = 1.0 / (d.n_subjects() * s.n_obs()) as f64;
        for (&t, &y) in s.t.iter().zip(&s.y) {
            let w = wi * spec.eval_scaled(t - 0.4, h_t) * spec.eval_scaled(s.z[0] - 0.6, h_z);
            num += w * y;
            den += w;
        }
    }
    assert!((nw.values[0] - num / den).abs() < 1e-12);
}

#[test]
fn huge_bandwidth_nadaraya_watson_tends_to_pooled_mean() {
    let d = dataset(25, 5, 5, |_, _, _, rng| rng.random_range(-1.0..3.0));
    let nw = nadaraya_watson_mean(&d, &bw(1e6, 1e6), KernelSpec::EPANECHNIKOV, &[0.5], &[vec![0.5]]).unwrap();
    let pooled: f64 = d
        .subjects
        .iter()
        .map(|s| s.y.iter().sum::<f64>() / s.n_obs() as f64)
        .sum::<f64>()
        / d.n_subjects() as f64;
    assert!((nw.values[0] - pooled).abs() < 1e-9);
}

#[test]
fn mean_is_invariant_to_subject_order() {
    let d = dataset(40, 8, 6, |t, z, _, rng| t + z * z + rng.random_range(-0.5..0.5));
    let mut rev = d.clone();
    rev.subjects.reverse();
    let args = (
        bw(0.25, 0.3),
        KernelSpec::EPANECHNIKOV,
        uniform(0.0, 1.0, 11),
        vec![uniform(0.0, 1.0, 6)],
    );
    let a = estimate_mean(&d, &args.0, args.1, &args.2, &args.3).unwrap();
    let b = estimate_mean(&rev, &args.0, args.1, &args.2, &args.3).unwrap();
    for (x, y) in a.values.iter().zip(&b.values) {
        assert!((x - y).abs() < 1e-12);
    }
    let ca = estimate_pooled_cov(&d, &a, 0.3, args.1, &args.2).unwrap();
    let cb = estimate_pooled_cov(&rev, &a, 0.3, args.1, &args.2).unwrap();
    assert!((&ca.values - &cb.values).amax() < 1e-12);
}

#[test]
fn insufficient_data_carries_grid_point() {
    let d = dataset(5, 4, 7, |_, _, _, _| 1.0);
    let err = estimate_mean(&d, &bw(0.01, 0.01), KernelSpec::EPANECHNIKOV, &[0.5], &[vec![0.5]]).unwrap_err();
    assert!(matches!(err, Error::InsufficientLocalData { ref query } if query == &vec![0.5, 0.5]));
}

fn known_phi(t: f64) -> f64 {
    std::f64::consts::SQRT_2 * (std::f64::consts::PI * t).sin()
}

#[test]
fn rank_one_covariance_is_recovered() {
    let d = dataset(500, 21, 8, |t, _, a, _| 2.0 * a * known_phi(t));
    let t_grid = uniform(0.0, 1.0, 21);
    let mean = MeanField::zero(t_grid.clone(), vec![uniform(0.0, 1.0, 2)]).unwrap();
    let cov = estimate_pooled_cov(&d, &mean, 0.15, KernelSpec::EPANECHNIKOV, &t_grid).unwrap();
    assert_eq!(cov.asymmetry(), 0.0);
    let mut worst = 0.0f64;
    for (a, &s) in t_grid.iter().enumerate() {
        for (b, &t) in t_grid.iter().enumerate() {
            worst = worst.max((cov.values[(a, b)] - 4.0 * known_phi(s) * known_phi(t)).abs());
        }
    }
    // sampling error of the score variance dominates: 4·2·√(2/500)·2 ≈ 1
    assert!(worst < 1.5, "max error {worst}");
}

#[test]
fn white_noise_covariance_is_near_zero_and_sigma2_recovered() {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let d = dataset(400, 21, 9, |_, _, _, rng| normal.sample(rng));
    let t_grid = uniform(0.0, 1.0, 21);
    let mean = MeanField::zero(t_grid.clone(), vec![uniform(0.0, 1.0, 2)]).unwrap();
    let cov = estimate_pooled_cov(&d, &mean, 0.15, KernelSpec::EPANECHNIKOV, &t_grid).unwrap();
    assert!(cov.values.amax() < 0.1, "max |cov| {}", cov.values.amax());
    let noise = estimate_sigma2(&d, &mean, &cov).unwrap();
    assert!((noise.sigma2 - 1.0).abs() < 0.1, "sigma2 {}", noise.sigma2);
}

#[test]
fn noiseless_sigma2_is_clamped_at_zero() {
    let d = dataset(100, 15, 10, |t, _, a, _| a * known_phi(t));
    let t_grid = uniform(0.0, 1.0, 15);
    let mean = MeanField::zero(t_grid.clone(), vec![uniform(0.0, 1.0, 2)]).unwrap();
    let cov = estimate_pooled_cov(&d, &mean, 0.2, KernelSpec::EPANECHNIKOV, &t_grid).unwrap();
    let noise = estimate_sigma2(&d, &mean, &cov).unwrap();
    // only smoothing bias remains; the signal variance peaks at 2
    assert!(noise.sigma2 >= 0.0 && noise.sigma2 < 0.1, "{}", noise.sigma2);
}

#[test]
fn singleton_subjects_cannot_form_covariance() {
    let d = FunctionalDataset::new(vec![Subject::new("a", vec![0.1], vec![0.5], vec![1.0])], 1);
    let mean = MeanField::zero(vec![0.0, 1.0], vec![vec![0.0, 1.0]]).unwrap();
    assert!(estimate_pooled_cov(&d, &mean, 0.2, KernelSpec::EPANECHNIKOV, &[0.0, 1.0]).is_err());
}

#[test]
fn artifacts_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dataset(30, 9, 11, |t, z, _, rng| t - z + rng.random_range(-0.2..0.2));
    let t_grid = uniform(0.0, 1.0, 9);
    let mean = estimate_mean(
        &d,
        &bw(0.3, 0.4),
        KernelSpec::EPANECHNIKOV,
        &t_grid,
        &[uniform(0.0, 1.0, 5)],
    )
    .unwrap();
    mean.save(&dir.path().join("mean.csv"), &dir.path().join("mean.meta"))
        .unwrap();
    let back = MeanField::load(&dir.path().join("mean.csv"), &dir.path().join("mean.meta")).unwrap();
    assert_eq!(back, mean);

    let cov = estimate_pooled_cov(&d, &mean, 0.3, KernelSpec::EPANECHNIKOV, &t_grid).unwrap();
    cov.save(&dir.path().join("cov.csv"), &dir.path().join("cov.meta"))
        .unwrap();
    let back = CovSurface::load(&dir.path().join("cov.csv"), &dir.path().join("cov.meta")).unwrap();
    assert_eq!(back, cov);
}
