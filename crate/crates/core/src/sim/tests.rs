use super::*;

#[test]
fn sim1_is_deterministic_and_respects_schemes() {
    let (a, ta) = gen_sim1(50, SchemeKind::Sparse, 1, 7).unwrap();
    let (b, tb) = gen_sim1(50, SchemeKind::Sparse, 1, 7).unwrap();
    assert_eq!(a, b);
    assert_eq!(ta, tb);
    assert!(a.subjects.iter().all(|s| (4..=10).contains(&s.n_obs())));
    assert!(a.subjects.iter().all(|s| s.t.windows(2).all(|w| w[0] < w[1])));
    let (c, _) = gen_sim1(10, SchemeKind::Dense, 1, 7).unwrap();
    assert!(c.subjects.iter().all(|s| s.n_obs() == 51));
    assert_eq!(c.time_domain, (0.0, 10.0));
    let (e, _) = gen_sim1(50, SchemeKind::Sparse, 1, 8).unwrap();
    assert_ne!(a, e);
}

#[test]
fn sim1_eigenvalue_formula() {
    let l = sim1_lambda(0.0);
    assert!((l[0] - 4.0 * (1.0 + 2.0 * 0.1f64.sin())).abs() < 1e-15);
    assert!((l[0] - 4.7987).abs() < 1e-4);
    assert!((l[1] - 4.0).abs() < 1e-15);
}

#[test]
fn sim1_score_variance_matches_eigenvalue() {
    let (_, truth) = gen_sim1(4000, SchemeKind::Sparse, 1, 11).unwrap();
    let a: Vec<f64> = truth
        .subjects
        .iter()
        .filter(|s| (0.45..=0.55).contains(&s.z[0]))
        .map(|s| s.scores[0])
        .collect();
    let n = a.len() as f64;
    let var = a.iter().map(|x| x * x).sum::<f64>() / n;
    let target = sim1_lambda(0.5)[0];
    // λ varies by a few percent across the bin; the sampling SD of the
    // variance estimate is λ √(2/n)
    let se = target * (2.0 / n).sqrt();
    assert!(
        (var - target).abs() < 4.0 * se + 0.05 * target,
        "{var} vs {target} (n={n})"
    );
}

#[test]
fn sim1_pooled_second_moment() {
    let (d, _) = gen_sim1(10_000, SchemeKind::Dense, 1, 12).unwrap();
    let tj = 10; // t = 2
    let t = d.subjects[0].t[tj];
    let y: Vec<f64> = d.subjects.iter().map(|s| s.y[tj]).collect();
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let m2 = y.iter().map(|v| v * v).sum::<f64>() / n;
    let zs = uniform(0.0, 1.0, 2001);
    let w = crate::grid::trapezoid_weights(&zs);
    let mut e = [0.0; 2];
    for (z, wz) in zs.iter().zip(&w) {
        let l = sim1_lambda(*z);
        e[0] += wz * l[0];
        e[1] += wz * l[1];
    }
    let want = e[0] * sim1_phi(0, t).powi(2) + e[1] * sim1_phi(1, t).powi(2) + 1.0;
    assert!(mean.abs() < 4.0 * (want / n).sqrt());
    assert!((m2 - want).abs() < 4.0 * want * (2.0 / n).sqrt(), "{m2} vs {want}");
}

#[test]
fn sim2_regions_and_values() {
    let (d, truth) = gen_sim2(32, 3).unwrap();
    assert_eq!(d.n_subjects(), 32 * 32);
    assert!(d.subjects.iter().all(|s| s.n_obs() == LATTICE_TIME_POINTS));
    let s0 = truth.subjects.iter().position(|s| s.label == Some(Region::S0)).unwrap();
    assert_eq!(truth.subjects[s0].lambda, vec![0.0, 0.0]);
    assert!(truth.subjects[s0].scores.iter().all(|&a| a == 0.0));
    assert_eq!(table2_lambda(&[0.0, 0.3], Region::S2)[0], 8.5);
    assert_eq!(gen_sim2(32, 3).unwrap().0, d);
    assert!(gen_sim2(129, 3).is_err());
}

#[test]
fn sim2_background_is_pure_noise() {
    let (d, truth) = gen_sim2(64, 5).unwrap();
    let noise: Vec<f64> = d
        .subjects
        .iter()
        .zip(&truth.subjects)
        .filter(|(_, t)| t.label == Some(Region::S0))
        .flat_map(|(s, _)| s.y.iter().copied())
        .collect();
    let n = noise.len() as f64;
    let var = noise.iter().map(|v| v * v).sum::<f64>() / n;
    assert!((var - 0.04).abs() < 4.0 * 0.04 * (2.0 / n).sqrt(), "{var}");
}

#[test]
fn sim3_variants() {
    let (d, truth) = gen_sim3(Variant::A, 32, 1).unwrap();
    assert_eq!(d.n_subjects(), 1024);
    let bg = truth.subjects.iter().find(|s| s.label == Some(Region::S0)).unwrap();
    assert_eq!(bg.lambda, vec![0.0, 0.0]);
    let m = Model::Sim3 {
        variant: Variant::C,
        q: 32,
    };
    let t = 0.3;
    let want = (2.0 * PI * t).sin() + (4.0 * PI * t).cos();
    assert_eq!(m.eigenfunction(0, t, &[0.5, 0.5], Some(Region::S2)), want);
    assert_eq!(m.eigenfunction(1, t, &[0.5, 0.5], Some(Region::S0)), 0.0);
    let (dc, _) = gen_sim3(Variant::C, 64, 1).unwrap();
    assert_eq!(dc.n_subjects(), 4096);
}

#[test]
fn sim3_smoothing_is_local() {
    let q = 64;
    let (_, a) = gen_sim3(Variant::A, q, 2).unwrap();
    let (_, b) = gen_sim3(Variant::B, q, 2).unwrap();
    let map = gen_phantom(q).unwrap();
    // an S1 point whose 3σ neighbourhood is entirely S1
    let reach = (3.0 * SIM3_FIELD_SIGMA * (q - 1) as f64).ceil() as usize;
    let interior = (0..q * q)
        .find(|&i| {
            let (r, c) = (i / q, i % q);
            r >= reach
                && c >= reach
                && r + reach < q
                && c + reach < q
                && (r - reach..=r + reach)
                    .all(|rr| (c - reach..=c + reach).all(|cc| map.label_at(rr, cc) == Region::S1))
        })
        .expect("interior S1 point");
    for k in 0..2 {
        let (va, vb) = (a.subjects[interior].lambda[k], b.subjects[interior].lambda[k]);
        assert!((va - vb).abs() < 0.01 * va, "{va} vs {vb}");
    }
    assert_eq!(b.subjects[interior].label, Some(Region::S1));
}

#[test]
fn smooth_field_constants_and_deltas() {
    let q = 40;
    let c = smooth_field(&vec![2.5; q * q], q, 0.03).unwrap();
    assert!(c.iter().all(|v| (v - 2.5).abs() < 1e-12));
    let mut delta = vec![0.0; q * q];
    delta[20 * q + 20] = 1.0;
    let s = smooth_field(&delta, q, 0.03).unwrap();
    assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-10);
}

#[test]
fn smooth_field_matches_dense_convolution() {
    use rand::Rng;
    let q = 20;
    let sigma = 0.07;
    let mut rng = stream(4, 0);
    let f: Vec<f64> = (0..q * q).map(|_| rng.random_range(-1.0..1.0)).collect();
    let got = smooth_field(&f, q, sigma).unwrap();
    let step = 1.0 / (q - 1) as f64;
    for i in 0..q * q {
        let (r, c) = ((i / q) as f64, (i % q) as f64);
        let (mut num, mut den) = (0.0, 0.0);
        for j in 0..q * q {
            let (rr, cc) = ((j / q) as f64, (j % q) as f64);
            let d2 = ((r - rr) * step).powi(2) + ((c - cc) * step).powi(2);
            let w = (-0.5 * d2 / (sigma * sigma)).exp();
            num += w * f[j];
            den += w;
        }
        assert!((got[i] - num / den).abs() < 1e-10);
    }
    // linear in its input
    let g: Vec<f64> = f.iter().map(|v| 3.0 * v + 1.0).collect();
    let sg = smooth_field(&g, q, sigma).unwrap();
    for (a, b) in got.iter().zip(&sg) {
        assert!((3.0 * a + 1.0 - b).abs() < 1e-12);
    }
}

#[test]
fn truth_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("truth.ndjson");
    for (_, truth) in [
        gen_sim1(20, SchemeKind::Sparse, 2, 1).unwrap(),
        gen_sim3(Variant::D, 16, 1).unwrap(),
    ] {
        truth.save(&path).unwrap();
        assert_eq!(SimTruth::load(&path).unwrap(), truth);
    }
}

#[test]
fn truth_covariance_is_the_eigen_expansion() {
    let (_, truth) = gen_sim1(3, SchemeKind::Dense, 1, 1).unwrap();
    let t = uniform(0.0, 10.0, 5);
    let c = truth.covariance(1, &t);
    let l = &truth.subjects[1].lambda;
    let want = l[0] * sim1_phi(0, t[2]) * sim1_phi(0, t[3]) + l[1] * sim1_phi(1, t[2]) * sim1_phi(1, t[3]);
    assert!((c[(2, 3)] - want).abs() < 1e-14);
    assert_eq!(truth.lambda_at(&[0.3]), sim1_lambda(0.3).to_vec());
}
