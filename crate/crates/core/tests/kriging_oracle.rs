//! Kriging checked against a textbook Gaussian-elimination solve of the full
//! augmented system, plus the equivariance properties of ordinary kriging.

use geokrige::{
    cokrige, krige_batch, ordinary_krige, CoregionalizationModel, ExponentialVariogramModel, KrigingModel,
    Location, NeighborhoodSpec, Observation, SpatialDataset,
};
use nalgebra::Matrix3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Gauss–Jordan elimination with partial pivoting on a dense row-major system.
fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in 0..n {
            if row != col {
                let f = a[row][col] / a[col][col];
                if f != 0.0 {
                    for k in col..n {
                        a[row][k] -= f * a[col][k];
                    }
                    b[row] -= f * b[col];
                }
            }
        }
    }
    (0..n).map(|i| b[i] / a[i][i]).collect()
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// `(prediction, variance)` from the full ordinary kriging system.
fn ok_oracle(pts: &[((f64, f64), f64)], m: &ExponentialVariogramModel, t: (f64, f64)) -> (f64, f64) {
    let n = pts.len();
    let s0 = m.partial_sill;
    let c = |h: f64| s0 * (-m.theta * h).exp();
    let mut a = vec![vec![0.0; n + 1]; n + 1];
    let mut b = vec![0.0; n + 1];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = if i == j {
                m.nugget + s0
            } else {
                c(dist(pts[i].0, pts[j].0))
            };
        }
        a[i][n] = 1.0;
        a[n][i] = 1.0;
        b[i] = c(dist(pts[i].0, t));
    }
    b[n] = 1.0;
    let x = gauss_solve(a, b.clone());
    let pred = (0..n).map(|i| x[i] * pts[i].1).sum();
    let var = m.nugget + s0 - (0..n).map(|i| x[i] * b[i]).sum::<f64>() - x[n];
    (pred, var)
}

fn random_points(rng: &mut ChaCha8Rng, n: usize, side: f64) -> Vec<((f64, f64), f64)> {
    (0..n)
        .map(|_| {
            (
                (rng.random_range(0.0..side), rng.random_range(0.0..side)),
                rng.random_range(-2.0..2.0),
            )
        })
        .collect()
}

fn to_dataset(pts: &[((f64, f64), f64)]) -> SpatialDataset {
    SpatialDataset::univariate(
        pts.iter()
            .enumerate()
            .map(|(k, &((x, y), v))| (k as u64, Location::new(x, y), v)),
    )
    .unwrap()
}

fn everything() -> NeighborhoodSpec {
    NeighborhoodSpec::new(100, f64::INFINITY, 1).unwrap()
}

#[test]
fn five_points_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let m = ExponentialVariogramModel::from_range(0.0, 1.0, 600.0).unwrap();
    let pts = random_points(&mut rng, 5, 800.0);
    let t = (400.0, 400.0);
    let p = ordinary_krige(&to_dataset(&pts), &m, Location::new(t.0, t.1), &everything()).unwrap();
    let (pred, var) = ok_oracle(&pts, &m, t);
    assert!((p.predicted_value - pred).abs() < 1e-9);
    assert!((p.kriging_variance - var).abs() < 1e-9);
}

#[test]
fn systems_up_to_sixty_points_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(60);
    for n in [1usize, 2, 7, 23, 41, 60] {
        for c0 in [0.0, 0.2] {
            let m = ExponentialVariogramModel::from_range(c0, 1.0 - c0, 300.0).unwrap();
            let pts = random_points(&mut rng, n, 1500.0);
            let t = (rng.random_range(0.0..1500.0), rng.random_range(0.0..1500.0));
            let p = ordinary_krige(&to_dataset(&pts), &m, Location::new(t.0, t.1), &everything()).unwrap();
            let (pred, var) = ok_oracle(&pts, &m, t);
            assert!((p.predicted_value - pred).abs() < 1e-8, "n={n} c0={c0}");
            assert!((p.kriging_variance - var.max(0.0)).abs() < 1e-8);
            let sum: f64 = p.weights.iter().map(|w| w.weight).sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn exact_interpolation_without_nugget() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let m = ExponentialVariogramModel::from_range(0.0, 1.0, 600.0).unwrap();
    let pts = random_points(&mut rng, 40, 1000.0);
    let ds = to_dataset(&pts);
    for &((x, y), v) in &pts {
        let p = ordinary_krige(&ds, &m, Location::new(x, y), &NeighborhoodSpec::default()).unwrap();
        assert!((p.predicted_value - v).abs() < 1e-6);
        assert!(p.kriging_variance <= 1e-6);
    }
}

#[test]
fn variance_grows_along_a_transect() {
    let m = ExponentialVariogramModel::from_range(0.0, 1.0, 600.0).unwrap();
    let ds = SpatialDataset::univariate([
        (0, Location::new(0.0, 0.0), 1.0),
        (1, Location::new(-200.0, 150.0), 0.5),
        (2, Location::new(-250.0, -100.0), -0.3),
    ])
    .unwrap();
    let mut prev = -1.0;
    for k in 0..60 {
        let t = Location::new(k as f64 * 15.0, 0.0);
        let v = ordinary_krige(&ds, &m, t, &everything()).unwrap().kriging_variance;
        if k == 0 {
            assert!(v <= 1e-9);
        }
        assert!(v >= prev - 1e-9, "variance dropped at step {k}");
        prev = v;
    }
}

#[test]
fn batch_matches_single_calls_bit_for_bit() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let m = ExponentialVariogramModel::from_range(0.2, 0.8, 600.0).unwrap();
    let pts = random_points(&mut rng, 500, 4000.0);
    let ds = to_dataset(&pts);
    let mut targets: Vec<(u64, Location, f64)> = (0..199)
        .map(|k| (k, Location::new(rng.random_range(0.0..4000.0), rng.random_range(0.0..4000.0)), 0.0))
        .collect();
    targets.push((199, Location::new(1e6, 1e6), 0.0));
    let tds = SpatialDataset::univariate(targets.clone()).unwrap();
    let nbhd = NeighborhoodSpec::default();
    let batch = krige_batch(&ds, &KrigingModel::Univariate(m), &tds, &nbhd);
    assert_eq!(batch.len(), 200);
    for (b, (_, loc, _)) in batch.iter().zip(&targets) {
        let single = ordinary_krige(&ds, &m, *loc, &nbhd);
        assert_eq!(b, &single);
    }
    assert_eq!(batch.iter().filter(|r| r.is_err()).count(), 1);
    assert!(batch[199].is_err());

    let one = SpatialDataset::univariate([targets[0]]).unwrap();
    assert_eq!(krige_batch(&ds, &KrigingModel::Univariate(m), &one, &nbhd)[0], batch[0]);
}

/// Full block co-kriging system with one constraint per present variable.
fn cok_oracle(
    obs: &[(u64, (f64, f64), f64, usize)],
    lmc: &CoregionalizationModel,
    t: (f64, f64),
    tv: usize,
) -> (f64, f64, Vec<f64>) {
    let n = obs.len();
    let mut vars: Vec<usize> = obs.iter().map(|o| o.3).collect();
    vars.sort();
    vars.dedup();
    let k = vars.len();
    let cov = |a: &(u64, (f64, f64), f64, usize), b: &(u64, (f64, f64), f64, usize)| {
        let h = dist(a.1, b.1);
        let mut c = lmc.b_structure[(a.3, b.3)] * (-lmc.theta * h).exp();
        if a.0 == b.0 && h == 0.0 {
            c += lmc.b_nugget[(a.3, b.3)];
        }
        c
    };
    let mut a = vec![vec![0.0; n + k]; n + k];
    let mut b = vec![0.0; n + k];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = cov(&obs[i], &obs[j]);
        }
        let g = vars.iter().position(|&v| v == obs[i].3).unwrap();
        a[i][n + g] = 1.0;
        a[n + g][i] = 1.0;
        b[i] = lmc.b_structure[(obs[i].3, tv)] * (-lmc.theta * dist(obs[i].1, t)).exp();
    }
    for (g, &v) in vars.iter().enumerate() {
        b[n + g] = if v == tv { 1.0 } else { 0.0 };
    }
    let x = gauss_solve(a, b.clone());
    let pred = (0..n).map(|i| x[i] * obs[i].2).sum();
    let g = vars.iter().position(|&v| v == tv).unwrap();
    let var = lmc.b_nugget[(tv, tv)] + lmc.b_structure[(tv, tv)] - (0..n).map(|i| x[i] * b[i]).sum::<f64>() - x[n + g];
    (pred, var, x[..n].to_vec())
}

fn multi_dataset(obs: &[(u64, (f64, f64), f64, usize)]) -> SpatialDataset {
    SpatialDataset::new(
        obs.iter()
            .map(|&(id, (x, y), v, var)| Observation::new(id, Location::new(x, y), v, var as u8))
            .collect(),
    )
    .unwrap()
}

fn test_lmc() -> CoregionalizationModel {
    let bs = Matrix3::new(1.0, 0.7, 0.4, 0.7, 0.9, 0.5, 0.4, 0.5, 0.8);
    let bn = Matrix3::new(0.1, 0.05, 0.0, 0.05, 0.2, 0.0, 0.0, 0.0, 0.05);
    CoregionalizationModel::new(1.0 / 200.0, bn, bs).unwrap()
}

#[test]
fn heterotopic_six_point_system_matches_oracle() {
    let obs = vec![
        (1, (0.0, 0.0), 1.2, 0),
        (2, (300.0, 50.0), -0.4, 0),
        (3, (100.0, 250.0), 0.3, 1),
        (4, (-150.0, 100.0), 0.9, 1),
        (5, (50.0, -200.0), -1.1, 2),
        (6, (250.0, 300.0), 0.6, 2),
    ];
    let lmc = test_lmc();
    let t = (120.0, 80.0);
    for tv in 0..3 {
        let p = cokrige(&multi_dataset(&obs), &lmc, Location::new(t.0, t.1), tv as u8, &everything()).unwrap();
        let (pred, var, _) = cok_oracle(&obs, &lmc, t, tv);
        assert!((p.predicted_value - pred).abs() < 1e-8);
        assert!((p.kriging_variance - var.max(0.0)).abs() < 1e-8);
    }
}

#[test]
fn collocated_system_with_shared_nuggets_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut obs = Vec::new();
    for id in 0..20u64 {
        let loc = (rng.random_range(0.0..800.0), rng.random_range(0.0..800.0));
        for v in 0..3 {
            obs.push((id, loc, rng.random_range(-1.0..1.0), v));
        }
    }
    let lmc = test_lmc();
    let t = (400.0, 400.0);
    let p = cokrige(&multi_dataset(&obs), &lmc, Location::new(t.0, t.1), 2, &everything()).unwrap();
    let (pred, var, w) = cok_oracle(&obs, &lmc, t, 2);
    assert!((p.predicted_value - pred).abs() < 1e-8);
    assert!((p.kriging_variance - var.max(0.0)).abs() < 1e-8);
    assert_eq!(w.len(), p.weights.len());
}

#[test]
fn cokriging_degenerates_to_ordinary_kriging() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let pts = random_points(&mut rng, 30, 1000.0);
    let m = ExponentialVariogramModel::from_range(0.1, 0.9, 600.0).unwrap();
    let lmc = CoregionalizationModel::diagonal(m.theta, [0.1, 0.3, 0.2], [0.9, 1.5, 0.4]).unwrap();
    let t = Location::new(500.0, 500.0);
    let nbhd = NeighborhoodSpec::default();
    let ok = ordinary_krige(&to_dataset(&pts), &m, t, &nbhd).unwrap();

    // target variable only
    let only: Vec<_> = pts.iter().enumerate().map(|(k, &(l, v))| (k as u64, l, v, 0)).collect();
    let ck = cokrige(&multi_dataset(&only), &lmc, t, 0, &nbhd).unwrap();
    assert!((ck.predicted_value - ok.predicted_value).abs() < 1e-9);
    assert!((ck.kriging_variance - ok.kriging_variance).abs() < 1e-9);

    // uncorrelated collocated auxiliaries carry no information
    let mut all = only.clone();
    for (k, &(l, _)) in pts.iter().enumerate() {
        all.push((k as u64, l, rng.random_range(-3.0..3.0), 1));
        all.push((k as u64, l, rng.random_range(-3.0..3.0), 2));
    }
    let ck = cokrige(&multi_dataset(&all), &lmc, t, 0, &nbhd).unwrap();
    assert!((ck.predicted_value - ok.predicted_value).abs() < 1e-9);
    assert!((ck.kriging_variance - ok.kriging_variance).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn weights_sum_and_equivariance(
        seed in 0u64..10_000,
        n in 2usize..40,
        shift in -50.0f64..50.0,
        dx in -1e4f64..1e4,
        dy in -1e4f64..1e4,
        c0 in prop_oneof![Just(0.0), Just(0.2)],
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = random_points(&mut rng, n, 900.0);
        let m = ExponentialVariogramModel::from_range(c0, 1.0 - c0, 600.0).unwrap();
        let t = Location::new(rng.random_range(0.0..900.0), rng.random_range(0.0..900.0));
        let ds = to_dataset(&pts);
        let nbhd = NeighborhoodSpec::default();
        let p = ordinary_krige(&ds, &m, t, &nbhd).unwrap();
        let sum: f64 = p.weights.iter().map(|w| w.weight).sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);

        let shifted = ordinary_krige(&ds.map_values(|v| v + shift).unwrap(), &m, t, &nbhd).unwrap();
        prop_assert!((shifted.predicted_value - p.predicted_value - shift).abs() < 1e-9);

        let moved = ordinary_krige(&ds.translated(dx, dy), &m, t.translated(dx, dy), &nbhd).unwrap();
        prop_assert!((moved.predicted_value - p.predicted_value).abs() < 1e-9);
        prop_assert!((moved.kriging_variance - p.kriging_variance).abs() < 1e-9);
    }

    #[test]
    fn cokriging_constraint_sums(seed in 0u64..10_000, n in 3usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let obs: Vec<_> = (0..n)
            .map(|k| (k as u64, (rng.random_range(0.0..700.0), rng.random_range(0.0..700.0)), rng.random_range(-1.0..1.0), k % 3))
            .collect();
        let tv = rng.random_range(0..3u8);
        let p = cokrige(&multi_dataset(&obs), &test_lmc(), Location::new(350.0, 350.0), tv, &NeighborhoodSpec::default()).unwrap();
        for v in 0..3u8 {
            let s: f64 = p.weights.iter().filter(|w| w.variable == v).map(|w| w.weight).sum();
            let expect = if v == tv { 1.0 } else { 0.0 };
            prop_assert!((s - expect).abs() < 1e-9);
        }
    }
}
