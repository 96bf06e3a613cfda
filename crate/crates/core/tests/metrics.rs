#[path = "support/metric_oracle.rs"]
mod metric_oracle;

use ffsv_core::eval::{
    cosine_score, eer, min_dcf, select_enhanced, tune_theta, DcfParams, Decision, DevPair, Embedding, SelectionPolicy,
};
use metric_oracle::{oracle_eer, oracle_min_dcf, random_set, selection_cases};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn metrics_agree_with_brute_force_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let params = [DcfParams::default(), DcfParams { p_target: 0.3, c_miss: 2.0, c_fa: 0.5 }];
    for _ in 0..1000 {
        let (s, t) = random_set(&mut rng);
        assert_eq!(eer(&s, &t).unwrap().0, oracle_eer(&s, &t));
        for p in &params {
            assert_eq!(min_dcf(&s, &t, p).unwrap().0, oracle_min_dcf(&s, &t, p));
        }
    }
}

#[test]
fn closed_form_cases() {
    assert_eq!(eer(&[1.0, 0.0], &[true, false]).unwrap().0, 0.0);
    assert_eq!(eer(&[0.6, 0.4, 0.8], &[true, false, false]).unwrap().0, 0.5);
    assert_eq!(eer(&[0.0, 1.0], &[true, false]).unwrap().0, 1.0);
    assert_eq!(min_dcf(&[1.0, 0.0], &[true, false], &DcfParams::default()).unwrap().0, 0.0);
    assert!(eer(&[1.0, 2.0], &[true, true]).is_err());
}

proptest! {
    #[test]
    fn metrics_bounded_and_oracle_exact(
        pairs in prop::collection::vec((-3.0f64..3.0, any::<bool>()), 2..100)
    ) {
        let (s, t): (Vec<f64>, Vec<bool>) = pairs.into_iter().unzip();
        prop_assume!(t.iter().any(|&x| x) && t.iter().any(|&x| !x));
        let e = eer(&s, &t).unwrap().0;
        let d = min_dcf(&s, &t, &DcfParams::default()).unwrap().0;
        prop_assert!((0.0..=1.0).contains(&e));
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(e, oracle_eer(&s, &t));
        prop_assert_eq!(d, oracle_min_dcf(&s, &t, &DcfParams::default()));
    }

    #[test]
    fn well_ordered_target_never_raises_eer(
        pairs in prop::collection::vec((-3.0f64..3.0, any::<bool>()), 2..60)
    ) {
        let (mut s, mut t): (Vec<f64>, Vec<bool>) = pairs.into_iter().unzip();
        prop_assume!(t.iter().any(|&x| x) && t.iter().any(|&x| !x));
        let before = eer(&s, &t).unwrap().0;
        s.push(10.0);
        t.push(true);
        prop_assert!(eer(&s, &t).unwrap().0 <= before + 1e-12);
    }

    #[test]
    fn cosine_symmetric_and_scale_invariant(
        a in prop::collection::vec(-5.0f64..5.0, 6),
        b in prop::collection::vec(-5.0f64..5.0, 6),
        alpha in 1e-3f64..1e3,
        beta in 1e-3f64..1e3,
    ) {
        let (ea, eb) = (Embedding::new(a).unwrap(), Embedding::new(b).unwrap());
        prop_assume!(ea.norm() > 1e-6 && eb.norm() > 1e-6);
        let s = cosine_score(&ea, &eb).unwrap();
        prop_assert!((s - cosine_score(&eb, &ea).unwrap()).abs() < 1e-12);
        prop_assert!((s - cosine_score(&ea.scaled(alpha), &eb.scaled(beta)).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn selection_boundary_and_scaling() {
    let policy = SelectionPolicy::default();
    assert_eq!(policy.theta, 0.7);
    for (a, b, expected) in selection_cases() {
        let (d, _) = select_enhanced(&a, &b, &policy).unwrap();
        assert_eq!(d, expected);
        for (sa, sb) in [(3.0, 1.0), (1.0, 0.25), (1e3, 1e-3)] {
            assert_eq!(select_enhanced(&a.scaled(sa), &b.scaled(sb), &policy).unwrap().0, expected);
        }
    }
    let never = SelectionPolicy { theta: 1.01 };
    for (a, b, _) in selection_cases() {
        assert_eq!(select_enhanced(&a, &b, &never).unwrap().0, Decision::KeepOriginal);
    }
}

fn unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn toy_pairs(rng: &mut ChaCha8Rng) -> (Vec<DevPair>, Vec<Vec<Embedding>>) {
    let mut pairs = Vec::new();
    for spk in 0..4 {
        let centre = unit(rng, 5);
        let noisy = |rng: &mut ChaCha8Rng, s: f64| {
            let v: Vec<f64> = centre.iter().map(|c| c + s * rng.random_range(-1.0..1.0)).collect();
            Embedding::new(v).unwrap()
        };
        for _ in 0..2 {
            pairs.push(DevPair { speaker: format!("s{spk}"), enrollment: noisy(rng, 0.8), test: noisy(rng, 0.5) });
        }
    }
    // two simulated sets: one close to the tests, one random
    let sims = vec![
        pairs
            .iter()
            .map(|p| {
                let v: Vec<f64> = p.test.0.iter().map(|c| c + 0.1 * rng.random_range(-1.0..1.0)).collect();
                Embedding::new(v).unwrap()
            })
            .collect(),
        pairs.iter().map(|_| Embedding::new(unit(rng, 5)).unwrap()).collect(),
    ];
    (pairs, sims)
}

/// Exhaustive evaluation of one grid cell, written from the definition.
fn cell_eer(pairs: &[DevPair], sims: &[Embedding], theta: f64) -> f64 {
    let enroll: Vec<&Embedding> = pairs
        .iter()
        .zip(sims)
        .map(|(p, s)| if cosine_score(&p.enrollment, s).unwrap() >= theta { s } else { &p.enrollment })
        .collect();
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for (i, e) in enroll.iter().enumerate() {
        for p in pairs {
            scores.push(cosine_score(e, &p.test).unwrap());
            labels.push(p.speaker == pairs[i].speaker);
        }
    }
    oracle_eer(&scores, &labels)
}

#[test]
fn tune_theta_matches_exhaustive_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let (pairs, sims) = toy_pairs(&mut rng);
        let thetas = [0.2, 0.7];
        let r = tune_theta(&pairs, &thetas, 2, |set, i| Ok(sims[set][i].clone())).unwrap();
        let mut best: Option<(f64, f64, usize)> = None;
        for (set, sim) in sims.iter().enumerate() {
            for &theta in &thetas {
                let e = cell_eer(&pairs, sim, theta);
                if best.is_none_or(|(be, bt, _)| e < be || (e == be && theta > bt)) {
                    best = Some((e, theta, set));
                }
            }
        }
        let (e, theta, set) = best.unwrap();
        assert_eq!((r.eer, r.theta, r.rir_set), (e, theta, set));
        assert_eq!(r.grid.len(), 4);
    }
}

#[test]
fn tune_theta_planted_optimum_and_trivial_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (pairs, sims) = toy_pairs(&mut rng);
    let exact: Vec<Embedding> = pairs.iter().map(|p| p.test.clone()).collect();
    let r = tune_theta(&pairs, &[-1.0], 3, |set, i| Ok(if set == 1 { exact[i].clone() } else { sims[1][i].clone() }))
        .unwrap();
    assert_eq!(r.rir_set, 1);
    assert!(r.grid.iter().all(|&(_, _, e)| r.eer <= e));
    let single = tune_theta(&pairs, &[0.42], 1, |_, i| Ok(sims[0][i].clone())).unwrap();
    assert_eq!((single.theta, single.rir_set), (0.42, 0));
    assert!(tune_theta(&pairs, &[], 1, |_, i| Ok(sims[0][i].clone())).is_err());
    assert!(tune_theta(&pairs[..2], &[0.7], 1, |_, i| Ok(sims[0][i].clone())).is_err());
}
