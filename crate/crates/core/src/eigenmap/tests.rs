use super::*;
use crate::grid::uniform;
use proptest::prelude::*;
use rand::Rng;
use std::f64::consts::PI;

/// Orthonormal sine basis on [0, 1] sampled on a fine grid.
fn sine_basis(l: usize) -> EigenBasis {
    let t = uniform(0.0, 1.0, 201);
    let phi = DMatrix::from_fn(t.len(), l, |g, k| 2f64.sqrt() * ((k + 1) as f64 * PI * t[g]).sin());
    let lambda: Vec<f64> = (0..l).map(|k| 1.0 / (k + 1) as f64).collect();
    EigenBasis::from_columns(t, phi, lambda).unwrap()
}

fn zero_mean(p: usize) -> MeanField {
    MeanField::zero(uniform(0.0, 1.0, 3), vec![uniform(0.0, 1.0, 2); p]).unwrap()
}

fn subject(id: &str, z: Vec<f64>, t: Vec<f64>, y: Vec<f64>) -> Subject {
    Subject::new(id, z, t, y)
}

#[test]
fn design_rows_follow_lexicographic_pairs() {
    let basis = sine_basis(2);
    let s = subject("a", vec![0.5], vec![0.1, 0.4, 0.8], vec![1.0, 2.0, 3.0]);
    let b = build_design(&s, &zero_mean(1), &basis, 2).unwrap();
    assert_eq!(b.x.nrows(), 3);
    assert_eq!(b.y.as_slice(), &[2.0, 3.0, 6.0]);
    let pairs = [(0, 1), (0, 2), (1, 2)];
    for (r, &(j, k)) in pairs.iter().enumerate() {
        for c in 0..2 {
            let want = crate::eigen::eval_eigenfunction(&basis, c, s.t[j]).unwrap()
                * crate::eigen::eval_eigenfunction(&basis, c, s.t[k]).unwrap();
            assert_eq!(b.x[(r, c)], want);
        }
    }
}

#[test]
fn response_vanishes_when_curve_equals_mean() {
    let mean = MeanField::from_values(
        uniform(0.0, 1.0, 2),
        vec![uniform(0.0, 1.0, 2)],
        vec![1.0, 1.0, 3.0, 3.0],
        KernelSpec::default(),
    )
    .unwrap();
    let t = vec![0.0, 0.25, 0.5, 1.0];
    let y = t.iter().map(|&v| 1.0 + 2.0 * v).collect();
    let b = build_design(&subject("a", vec![0.3], t, y), &mean, &sine_basis(1), 1).unwrap();
    assert!(b.y.iter().all(|&v| v.abs() < 1e-15));
}

#[test]
fn singleton_subject_is_rejected_and_skipped() {
    let s = subject("a", vec![0.5], vec![0.5], vec![1.0]);
    assert!(build_design(&s, &zero_mean(1), &sine_basis(1), 1).is_err());
    let d = FunctionalDataset::new(vec![s, subject("b", vec![0.5], vec![0.2, 0.6], vec![1.0, 1.0])], 1);
    assert_eq!(build_designs(&d, &zero_mean(1), &sine_basis(1), 1).unwrap().len(), 1);
}

#[test]
fn single_subject_exact_system() {
    let basis = sine_basis(1);
    let t = vec![0.1, 0.3, 0.55, 0.9];
    let mut block = build_design(&subject("a", vec![0.5], t, vec![0.0; 4]), &zero_mean(1), &basis, 1).unwrap();
    block.y = &block.x.column(0) * 2.75;
    let est = wls_eigenvalues(&[block], &[0.5], &[0.3], KernelSpec::EPANECHNIKOV, true).unwrap();
    assert!((est[0] - 2.75).abs() < 1e-12);
}

#[test]
fn empty_neighborhood_reports_query() {
    let basis = sine_basis(1);
    let s = subject("a", vec![0.1], vec![0.2, 0.5], vec![1.0, 1.0]);
    let blocks = build_designs(&FunctionalDataset::new(vec![s], 1), &zero_mean(1), &basis, 1).unwrap();
    match wls_eigenvalues(&blocks, &[0.9], &[0.2], KernelSpec::EPANECHNIKOV, true) {
        Err(Error::EmptyNeighborhood { z }) => assert_eq!(z, vec![0.9]),
        other => panic!("{other:?}"),
    }
}

/// Random dataset with `n` subjects, `N_i ∈ [2, max_obs]`, covariate dim `p`.
fn random_dataset(seed: u64, n: usize, max_obs: usize, p: usize) -> FunctionalDataset {
    let mut rng = crate::rng::stream(seed, 0);
    let subjects = (0..n)
        .map(|i| {
            let ni = rng.random_range(2..=max_obs);
            let mut t: Vec<f64> = (0..ni).map(|_| rng.random_range(0.0..1.0)).collect();
            t.sort_by(f64::total_cmp);
            let y = (0..ni).map(|_| rng.random_range(-2.0..2.0)).collect();
            let z = (0..p).map(|_| rng.random_range(0.0..1.0)).collect();
            subject(&format!("s{i}"), z, t, y)
        })
        .collect();
    FunctionalDataset::new(subjects, p)
}

/// Stack every row of every block with its replicated kernel weight and
/// solve the weighted normal equations densely.
fn brute_force_wls(blocks: &[DesignBlock], z: &[f64], h: &[f64], spec: KernelSpec) -> Option<Vec<f64>> {
    let l = blocks[0].x.ncols();
    let mut a = DMatrix::<f64>::zeros(l, l);
    let mut b = DVector::<f64>::zeros(l);
    for blk in blocks {
        let mut w = 1.0;
        for k in 0..z.len() {
            w *= spec.eval((blk.z[k] - z[k]) / h[k]) / h[k];
        }
        for r in 0..blk.x.nrows() {
            let row = blk.x.row(r).transpose();
            a += w * &row * row.transpose();
            b += w * blk.y[r] * &row;
        }
    }
    a.lu().solve(&b).map(|x| x.iter().copied().collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn wls_matches_brute_force(
        seed in 0u64..100_000,
        n in 3usize..30,
        max_obs in 3usize..9,
        l in 1usize..4,
        p in 1usize..3,
    ) {
        let d = random_dataset(seed, n, max_obs, p);
        let blocks = build_designs(&d, &zero_mean(p), &sine_basis(l), l).unwrap();
        let h = vec![2.0; p];
        let z = vec![0.5; p];
        let got = wls_eigenvalues(&blocks, &z, &h, KernelSpec::EPANECHNIKOV, false).unwrap();
        let want = brute_force_wls(&blocks, &z, &h, KernelSpec::EPANECHNIKOV).unwrap();
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g - w).abs() <= 1e-10 * w.abs().max(1.0), "{g} vs {w}");
        }
    }

    #[test]
    fn common_weight_factor_is_irrelevant(seed in 0u64..100_000, e in -6i32..6) {
        let d = random_dataset(seed, 12, 6, 1);
        let blocks = build_designs(&d, &zero_mean(1), &sine_basis(2), 2).unwrap();
        let est = WlsEstimator::new(&blocks).unwrap();
        let w = est.kernel_weights(&[0.4], &[0.7], KernelSpec::EPANECHNIKOV).unwrap();
        let scaled: Vec<f64> = w.iter().map(|v| v * 2f64.powi(e)).collect();
        let (a, b) = (est.solve_weighted(&w).unwrap(), est.solve_weighted(&scaled).unwrap());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "{x} vs {y}");
        }
    }

    #[test]
    fn clamped_entries_are_zero_and_raw_kept(seed in 0u64..100_000) {
        let d = random_dataset(seed, 10, 5, 1);
        let blocks = build_designs(&d, &zero_mean(1), &sine_basis(3), 3).unwrap();
        let e = WlsEstimator::new(&blocks).unwrap().estimate(&[0.5], &[1.0], KernelSpec::EPANECHNIKOV, true).unwrap();
        for k in 0..3 {
            if e.clamped[k] {
                prop_assert!(e.value[k] == 0.0 && e.raw[k] < 0.0);
            } else {
                prop_assert_eq!(e.value[k], e.raw[k]);
            }
        }
    }
}

#[test]
fn trapezoid_scores_exact_on_piecewise_linear_integrands() {
    // φ linear and Û constant: the integrand is linear on every panel
    let t_grid = vec![0.0, 1.0];
    let basis = EigenBasis::from_columns(t_grid, DMatrix::from_row_slice(2, 1, &[1.0, 3.0]), vec![1.0]).unwrap();
    let t = vec![0.0, 0.2, 0.7, 1.0];
    let s = subject("a", vec![0.5], t, vec![2.0; 4]);
    let a = pc_scores_trapezoid(&s, &zero_mean(1), &basis, 1).unwrap();
    // ∫ 2 (1 + 2t) dt = 4
    assert!((a[0] - 4.0).abs() < 1e-12);
}

#[test]
fn trapezoid_scores_recover_noiseless_rank_one() {
    let basis = sine_basis(2);
    let t = uniform(0.0, 1.0, 51);
    let y = t.iter().map(|&v| 2.0 * 2f64.sqrt() * (PI * v).sin()).collect();
    let a = pc_scores_trapezoid(&subject("a", vec![0.5], t, y), &zero_mean(1), &basis, 2).unwrap();
    assert!((a[0] - 2.0).abs() < 1e-3, "{}", a[0]);
    assert!(a[1].abs() < 1e-3);
    let zero = pc_scores_trapezoid(
        &subject("b", vec![0.5], uniform(0.0, 1.0, 5), vec![0.0; 5]),
        &zero_mean(1),
        &basis,
        2,
    )
    .unwrap();
    assert_eq!(zero, vec![0.0, 0.0]);
}

#[test]
fn pace_scalar_closed_form() {
    let basis = sine_basis(1);
    let (lam, s2, t, u) = (1.7, 0.3, 0.35, 0.9);
    let s = subject("a", vec![0.5], vec![t], vec![u]);
    let a = pace_scores(&s, &zero_mean(1), &basis, &[lam], s2).unwrap();
    let phi = crate::eigen::eval_eigenfunction(&basis, 0, t).unwrap();
    let want = lam * phi * u / (lam * phi * phi + s2);
    assert!((a[0] - want).abs() < 1e-12);
}

#[test]
fn pace_shrinks_monotonically_in_sigma2() {
    let basis = sine_basis(1);
    let s = subject("a", vec![0.5], vec![0.2, 0.45, 0.8], vec![1.0, 1.4, 0.6]);
    let mut last = f64::INFINITY;
    for s2 in [0.01, 0.1, 1.0, 10.0, 1e4] {
        let a = pace_scores(&s, &zero_mean(1), &basis, &[2.0], s2).unwrap()[0].abs();
        assert!(a < last);
        last = a;
    }
    assert!(last < 1e-3);
}

#[test]
fn pace_agrees_with_trapezoid_in_the_dense_limit() {
    let basis = sine_basis(2);
    let t = uniform(0.0, 1.0, 101);
    let y: Vec<f64> = t
        .iter()
        .map(|&v| 1.5 * 2f64.sqrt() * (PI * v).sin() - 0.7 * 2f64.sqrt() * (2.0 * PI * v).sin())
        .collect();
    let s = subject("a", vec![0.5], t, y);
    let p = pace_scores(&s, &zero_mean(1), &basis, &[1.0, 0.5], 1e-8).unwrap();
    let q = pc_scores_trapezoid(&s, &zero_mean(1), &basis, 2).unwrap();
    for k in 0..2 {
        assert!((p[k] - q[k]).abs() < 1e-3, "{p:?} vs {q:?}");
    }
    // σ² = 0 with more points than components goes through the pseudo-inverse
    let z = pace_scores(&s, &zero_mean(1), &basis, &[1.0, 0.5], 0.0).unwrap();
    assert!((z[0] - 1.5).abs() < 1e-6 && (z[1] + 0.7).abs() < 1e-6, "{z:?}");
}

fn score_set_from(z: Vec<f64>, a2: impl Fn(f64) -> f64) -> ScoreSet {
    ScoreSet {
        ids: (0..z.len()).map(|i| i.to_string()).collect(),
        scores: z.iter().map(|&v| vec![a2(v).sqrt()]).collect(),
        z: z.into_iter().map(|v| vec![v]).collect(),
        method: ScoreMethod::Trapezoid,
    }
}

#[test]
fn pc_eigenvalues_reproduce_constants_and_affine() {
    let z = uniform(0.0, 1.0, 41);
    let s = score_set_from(z.clone(), |_| 3.0);
    let v = pc_eigenvalues(&s, &[0.37], &[0.2], KernelSpec::EPANECHNIKOV).unwrap();
    assert!((v[0] - 3.0).abs() < 1e-12);
    let s = score_set_from(z, |v| 1.0 + 2.0 * v);
    let v = pc_eigenvalues(&s, &[0.37], &[0.2], KernelSpec::EPANECHNIKOV).unwrap();
    assert!((v[0] - 1.74).abs() < 1e-8);
}

fn small_sim(seed: u64) -> FunctionalDataset {
    let mut rng = crate::rng::stream(seed, 0);
    let t = uniform(0.0, 1.0, 25);
    let subjects = (0..60)
        .map(|i| {
            let z: f64 = rng.random_range(0.0..1.0);
            let a: f64 = rng.random_range(-1.0..1.0) * (1.0 + z);
            let y = t
                .iter()
                .map(|&v| a * 2f64.sqrt() * (PI * v).sin() + rng.random_range(-0.1..0.1))
                .collect();
            subject(&i.to_string(), vec![z], t.clone(), y)
        })
        .collect();
    FunctionalDataset::new(subjects, 1)
}

#[test]
fn field_rows_match_single_queries_in_any_order() {
    let d = small_sim(3);
    let basis = sine_basis(2);
    let mean = zero_mean(1);
    let opts = FieldOptions::new(vec![0.25]);
    let zs: Vec<Vec<f64>> = uniform(0.1, 0.9, 9).into_iter().map(|v| vec![v]).collect();
    for method in [Method::Wls, Method::Pc] {
        let field = eigenvalue_field(&d, &mean, &basis, 2, method, &zs, &opts).unwrap();
        let single = eigenvalue_field(&d, &mean, &basis, 2, method, &zs[4..5], &opts).unwrap();
        assert_eq!(single.lambda.row(0), field.lambda.row(4));
        let mut rev = zs.clone();
        rev.reverse();
        let back = eigenvalue_field(&d, &mean, &basis, 2, method, &rev, &opts).unwrap();
        for i in 0..zs.len() {
            assert_eq!(back.lambda.row(zs.len() - 1 - i), field.lambda.row(i));
        }
    }
    let sq = eigenvalue_field(&d, &mean, &basis, 2, Method::PcSquared, &zs, &opts).unwrap();
    assert_eq!(sq.len(), d.n_subjects());
}

#[test]
fn too_many_failed_points_is_an_error() {
    let d = small_sim(4);
    let opts = FieldOptions::new(vec![0.05]);
    let zs: Vec<Vec<f64>> = uniform(2.0, 3.0, 5).into_iter().map(|v| vec![v]).collect();
    assert!(eigenvalue_field(&d, &zero_mean(1), &sine_basis(1), 1, Method::Wls, &zs, &opts).is_err());
}

#[test]
fn field_file_round_trip() {
    let d = small_sim(5);
    let zs: Vec<Vec<f64>> = uniform(0.0, 1.0, 11).into_iter().map(|v| vec![v]).collect();
    let field = eigenvalue_field(
        &d,
        &zero_mean(1),
        &sine_basis(2),
        2,
        Method::Wls,
        &zs,
        &FieldOptions::new(vec![0.3]),
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("f.csv"), dir.path().join("d.csv"));
    field.save(&a, &b).unwrap();
    let back = EigenvalueField::load(&a, 1, Method::Wls).unwrap();
    assert_eq!(back.lambda, field.lambda);
    assert_eq!(back.clamped, field.clamped);
    assert_eq!(back.z_points, field.z_points);
}

#[test]
fn reconstruction_is_symmetric_outer_product() {
    let basis = sine_basis(2);
    let zero = reconstruct_cov(&basis, &[0.0, 0.0]).unwrap();
    assert_eq!(zero.values.amax(), 0.0);
    let one = reconstruct_cov(&basis.truncated(1).unwrap(), &[1.0]).unwrap();
    let c = basis.phi.column(0);
    assert_eq!(one.values, c * c.transpose());
    let two = reconstruct_cov(&basis, &[2.0, 0.5]).unwrap();
    assert_eq!(two.asymmetry(), 0.0);
}
