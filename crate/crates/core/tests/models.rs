mod common;

use common::*;
use hiercdm::models::*;
use hiercdm::qmatrix::*;
use hiercdm::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dina(s: &[f64], g: &[f64]) -> ItemParams {
    ItemParams::Dina(DinaParams::new(s.to_vec(), g.to_vec()).unwrap())
}

#[test]
fn dina_branches() {
    let qm = q(&[&[1, 1], &[0, 1]]);
    let p = dina(&[0.1, 0.1], &[0.2, 0.2]);
    assert!((item_prob(&p, &qm, 1, profile("11")).unwrap() - 0.9).abs() < 1e-15);
    assert!((item_prob(&p, &qm, 1, profile("10")).unwrap() - 0.2).abs() < 1e-15);
    assert!((item_prob(&p, &qm, 2, profile("01")).unwrap() - 0.9).abs() < 1e-15);
    assert!(matches!(item_prob(&p, &qm, 3, profile("01")), Err(Error::Index { .. })));
    assert!(matches!(item_prob(&p, &qm, 0, profile("01")), Err(Error::Index { .. })));
}

#[test]
fn dino_branches() {
    let qm = q(&[&[1, 1]]);
    let p = ItemParams::Dino(DinaParams::new(vec![0.1], vec![0.2]).unwrap());
    assert!((item_prob(&p, &qm, 1, profile("10")).unwrap() - 0.9).abs() < 1e-15);
    assert!((item_prob(&p, &qm, 1, profile("00")).unwrap() - 0.2).abs() < 1e-15);
}

#[test]
fn gdina_full_pattern_lookup() {
    let qm = q(&[&[1, 1, 0], &[0, 0, 1]]);
    let g = GdinaParams::new(&qm, vec![vec![0.1, 0.4, 0.6, 0.9], vec![0.2, 0.8]]).unwrap();
    let p = ItemParams::Gdina(g);
    assert!((item_prob(&p, &qm, 1, profile("110")).unwrap() - 0.9).abs() < 1e-15);
    assert!((item_prob(&p, &qm, 1, profile("000")).unwrap() - 0.1).abs() < 1e-15);
    // attribute 1 is the high bit of the reduced pattern
    assert!((item_prob(&p, &qm, 1, profile("101")).unwrap() - 0.6).abs() < 1e-15);
    assert!((item_prob(&p, &qm, 1, profile("011")).unwrap() - 0.4).abs() < 1e-15);
    assert_eq!(p.n_params(), 6);
    assert!(GdinaParams::new(&qm, vec![vec![0.1, 0.9], vec![0.2, 0.8]]).is_err());
}

#[test]
fn probabilities_are_clamped() {
    let qm = q(&[&[1]]);
    let p = dina(&[0.0], &[0.0]);
    assert_eq!(item_prob(&p, &qm, 1, profile("1")).unwrap(), 1.0 - EPS);
    assert_eq!(item_prob(&p, &qm, 1, profile("0")).unwrap(), EPS);
    let noiseless = ItemParams::Dina(DinaParams::with_eps(vec![0.0], vec![0.0], 0.0).unwrap());
    assert_eq!(item_prob(&noiseless, &qm, 1, profile("1")).unwrap(), 1.0);
}

#[test]
fn single_profile_half_probabilities() {
    let j = 7;
    let qm = QMatrix::from_masks(2, vec![0b11; j]).unwrap();
    let params = ItemParams::Dina(DinaParams::uniform(j, 0.5, 0.5).unwrap());
    let p = ProportionVector::uniform(set(2, &["10"])).unwrap();
    let data = ResponseMatrix::new(&[vec![1, 0, 1, 1, 0, 0, 1]]).unwrap();
    let l = marginal_loglik(&params, &p, &qm, &data).unwrap();
    assert!((l - j as f64 * 0.5f64.ln()).abs() < 1e-12);
}

#[test]
fn duplicated_rows_double_loglik() {
    let qm = q_two_blocks();
    let params = dina(&[0.1, 0.2, 0.15, 0.1, 0.3, 0.05], &[0.2, 0.1, 0.25, 0.2, 0.1, 0.1]);
    let p = ProportionVector::new(set(2, &["00", "10", "11"]), vec![0.2, 0.3, 0.5]).unwrap();
    let (data, _) = simulate_responses(&params, &p, &qm, 40, 9).unwrap();
    let l1 = marginal_loglik(&params, &p, &qm, &data).unwrap();
    let l2 = marginal_loglik(&params, &p, &qm, &data.concat(&data).unwrap()).unwrap();
    assert!((l2 - 2.0 * l1).abs() < 1e-9 * l1.abs());
}

/// Direct double sum in probability space.
fn loglik_oracle(params: &ItemParams, p: &ProportionVector, qm: &QMatrix, data: &ResponseMatrix) -> f64 {
    let mut total = 0.0;
    for row in data.to_rows() {
        let mut like = 0.0;
        for (&a, &pa) in p.support.profiles().iter().zip(&p.probs) {
            let mut prod = 1.0;
            for (j, &x) in row.iter().enumerate() {
                let t = item_prob(params, qm, j + 1, a).unwrap();
                prod *= if x == 1 { t } else { 1.0 - t };
            }
            like += pa * prod;
        }
        total += like.ln();
    }
    total
}

#[test]
fn loglik_matches_naive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for kind in [ModelKind::Dina, ModelKind::Dino, ModelKind::Gdina] {
        let qm = q(&[&[1, 0], &[0, 1], &[1, 1], &[1, 0], &[1, 1]]);
        let params = match kind {
            ModelKind::Gdina => ItemParams::Gdina(
                GdinaParams::new(
                    &qm,
                    (0..5)
                        .map(|j| (0..1 << qm.required(j).len()).map(|_| rng.random_range(0.05..0.95)).collect())
                        .collect(),
                )
                .unwrap(),
            ),
            _ => {
                let d = DinaParams::new(
                    (0..5).map(|_| rng.random_range(0.05..0.4)).collect(),
                    (0..5).map(|_| rng.random_range(0.05..0.4)).collect(),
                )
                .unwrap();
                if kind == ModelKind::Dina {
                    ItemParams::Dina(d)
                } else {
                    ItemParams::Dino(d)
                }
            }
        };
        let support = ProfileSet::full(2).unwrap();
        let p = ProportionVector::new(support, (0..4).map(|_| rng.random_range(0.1..1.0)).collect()).unwrap();
        let rows: Vec<Vec<u8>> = (0..50).map(|_| (0..5).map(|_| rng.random_range(0..2)).collect()).collect();
        let data = ResponseMatrix::new(&rows).unwrap();
        let l = marginal_loglik(&params, &p, &qm, &data).unwrap();
        let oracle = loglik_oracle(&params, &p, &qm, &data);
        assert!((l - oracle).abs() < 1e-9, "{kind}: {l} vs {oracle}");
        let per = respondent_likelihoods(&params, &p, &qm, &data).unwrap();
        assert!((per.mapv(f64::ln).sum() - oracle).abs() < 1e-9);
    }
}

#[test]
fn loglik_errors() {
    let qm = q_two_blocks();
    let params = dina(&[0.1; 6], &[0.1; 6]);
    let p = ProportionVector::uniform(ProfileSet::full(2).unwrap()).unwrap();
    let short = ResponseMatrix::new(&[vec![1, 0, 1]]).unwrap();
    assert!(marginal_loglik(&params, &p, &qm, &short).is_err());
    assert!(matches!(
        ProportionVector::new(ProfileSet::new(2, vec![]).unwrap(), vec![]),
        Err(Error::EmptySupport)
    ));
}

#[test]
fn noiseless_simulation_reproduces_ideal_responses() {
    let qm = q_linear_generic();
    let params = ItemParams::Dina(DinaParams::with_eps(vec![0.0; 9], vec![0.0; 9], 0.0).unwrap());
    let support = ProfileSet::full(3).unwrap();
    let p = ProportionVector::uniform(support.clone()).unwrap();
    let (data, profiles) = simulate_responses(&params, &p, &qm, 300, 4).unwrap();
    let ideal = ideal_response(&qm, &support, Rule::Dina).unwrap();
    for (row, a) in data.to_rows().iter().zip(&profiles) {
        assert_eq!(row, &ideal.column_of(*a).unwrap());
    }
}

#[test]
fn simulated_frequencies_concentrate() {
    let qm = QMatrix::stack(&[&QMatrix::identity(3).unwrap(), &q_three_attr()]).unwrap();
    let support = induce_profile_set(&linear3()).unwrap();
    let p = ProportionVector::new(support.clone(), vec![0.1, 0.2, 0.3, 0.4]).unwrap();
    let params = dina(&[0.1, 0.2, 0.1, 0.15, 0.1, 0.2, 0.05], &[0.2, 0.1, 0.1, 0.25, 0.1, 0.2, 0.3]);
    let n = 10_000;
    let (data, profiles) = simulate_responses(&params, &p, &qm, n, 2024).unwrap();
    let freq = profile_frequencies(&support, &profiles);
    for (f, &pa) in freq.iter().zip(&p.probs) {
        assert!((f - pa).abs() < 3.0 * (pa * (1.0 - pa) / n as f64).sqrt(), "{f} vs {pa}");
    }
    for j in 0..qm.j() {
        let expect: f64 = support
            .profiles()
            .iter()
            .zip(&p.probs)
            .map(|(&a, &pa)| pa * item_prob(&params, &qm, j + 1, a).unwrap())
            .sum();
        let mean = data.data().column(j).iter().map(|&v| v as f64).sum::<f64>() / n as f64;
        assert!((mean - expect).abs() < 4.0 * (expect * (1.0 - expect) / n as f64).sqrt());
    }
}

#[test]
fn simulation_is_seeded() {
    let qm = q_two_blocks();
    let params = dina(&[0.1; 6], &[0.2; 6]);
    let p = ProportionVector::uniform(ProfileSet::full(2).unwrap()).unwrap();
    let a = simulate_responses(&params, &p, &qm, 100, 5).unwrap();
    let b = simulate_responses(&params, &p, &qm, 100, 5).unwrap();
    let c = simulate_responses(&params, &p, &qm, 100, 6).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.0, c.0);
}

#[test]
fn proportion_vector_normalizes() {
    let v = ProportionVector::new(ProfileSet::full(2).unwrap(), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    assert!((v.probs.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    assert!((v.prob_of(profile("11")) - 0.4).abs() < 1e-15);
    assert!(ProportionVector::new(ProfileSet::full(1).unwrap(), vec![1.0, -0.1]).is_err());
    assert!(ProportionVector::new(ProfileSet::full(1).unwrap(), vec![0.0, 0.0]).is_err());
}

#[test]
fn params_json_layout() {
    let d = dina(&[0.1, 0.2], &[0.3, 0.1]);
    let v = serde_json::to_value(&d).unwrap();
    assert_eq!(v["model"], "dina");
    assert_eq!(v["slip"][1], 0.2);
    let qm = q(&[&[1, 1, 0], &[0, 0, 1]]);
    let g = ItemParams::Gdina(GdinaParams::new(&qm, vec![vec![0.1, 0.4, 0.6, 0.9], vec![0.2, 0.8]]).unwrap());
    let v = serde_json::to_value(&g).unwrap();
    assert_eq!(v["model"], "gdina");
    assert_eq!(v["items"][0]["required"], serde_json::json!([1, 2]));
    assert_eq!(v["items"][0]["theta"]["10"], 0.6);
    let back: ItemParams = serde_json::from_value(v).unwrap();
    assert_eq!(back, g);
}

// ---- properties ----

fn dina_instance() -> impl Strategy<Value = (QMatrix, DinaParams)> {
    (1usize..=3)
        .prop_flat_map(|k| {
            (
                Just(k),
                proptest::collection::vec((1u32..(1 << k), 0.0f64..0.5, 0.0f64..0.5), 1..6),
            )
        })
        .prop_map(|(k, items)| {
            let qm = QMatrix::from_masks(k, items.iter().map(|i| i.0).collect()).unwrap();
            let d = DinaParams::new(items.iter().map(|i| i.1).collect(), items.iter().map(|i| i.2).collect())
                .unwrap();
            (qm, d)
        })
}

proptest! {
    #[test]
    fn dina_equals_collapsed_gdina((qm, d) in dina_instance()) {
        let g = ItemParams::Gdina(GdinaParams::from_dina(&qm, &d).unwrap());
        let dp = ItemParams::Dina(d);
        for a in ProfileSet::full(qm.k()).unwrap().profiles() {
            for j in 1..=qm.j() {
                prop_assert_eq!(item_prob(&dp, &qm, j, *a).unwrap(), item_prob(&g, &qm, j, *a).unwrap());
            }
        }
    }

    #[test]
    fn loglik_exchangeable_over_rows((qm, d) in dina_instance(), seed in any::<u64>()) {
        let params = ItemParams::Dina(d);
        let p = ProportionVector::uniform(ProfileSet::full(qm.k()).unwrap()).unwrap();
        let (data, _) = simulate_responses(&params, &p, &qm, 30, seed).unwrap();
        let mut idx: Vec<usize> = (0..30).collect();
        idx.reverse();
        idx.rotate_left((seed % 30) as usize);
        let l1 = marginal_loglik(&params, &p, &qm, &data).unwrap();
        let l2 = marginal_loglik(&params, &p, &qm, &data.select_rows(&idx)).unwrap();
        prop_assert!((l1 - l2).abs() < 1e-9);
        prop_assert!(l1 <= 0.0);
        prop_assert!((l1 - loglik_oracle(&params, &p, &qm, &data)).abs() < 1e-9);
    }
}
