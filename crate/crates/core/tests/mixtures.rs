mod common;

use common::stochastic::{cross_moment_closed_form, offset_model, z_score};
use common::{random_centered_model, random_clip_model};
use fisher_ssl::linalg::random_orthonormal;
use fisher_ssl::subspace::fisher_subspace;
use fisher_ssl::{AedConfig, ProjectionMap, Seed, SharedGmm};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

const N: usize = 100_000;

#[test]
fn augmented_pairs_keep_the_base_marginal() {
    let model = offset_model();
    let mean = model.overall_mean();
    let second = model.second_moment();
    for (i, delta) in [0.0, 0.4, 1.0].into_iter().enumerate() {
        let p = AedConfig::new(model.clone(), delta).unwrap().sample_matrix(N, &mut Seed(40 + i as u64).rng());
        for side in [&p.x, &p.x_hat] {
            for a in 0..2 {
                assert!(z_score(side.column(a).iter().copied(), mean[a]) <= 3.0, "delta {delta}, mean {a}");
                for b in 0..2 {
                    let prods = side.column(a).iter().zip(side.column(b).iter()).map(|(u, v)| u * v).collect::<Vec<_>>();
                    assert!(z_score(prods.into_iter(), second[(a, b)]) <= 3.0, "delta {delta}, moment {a}{b}");
                }
            }
        }
    }
}

#[test]
fn independent_pairs_share_a_component_by_chance() {
    let model = SharedGmm::uniform(vec![DVector::from_vec(vec![1.0]), DVector::from_vec(vec![-1.0])], DMatrix::identity(1, 1)).unwrap();
    let p = AedConfig::new(model, 0.0).unwrap().sample_matrix(N, &mut Seed(3).rng());
    let same = p.z.iter().zip(&p.z_hat).map(|(a, b)| f64::from(u8::from(a == b)));
    assert!(z_score(same, 0.5) <= 3.0);
}

#[test]
fn cross_moment_closed_form_has_the_expected_limits() {
    let model = offset_model();
    let bar = model.overall_mean();
    let at_zero = cross_moment_closed_form(&model, 0.0);
    assert!((at_zero - &bar * bar.transpose()).amax() < 1e-14);
    let at_one = cross_moment_closed_form(&model, 1.0);
    assert!((at_one - (model.second_moment() - model.covariance())).amax() < 1e-12);
    let aed = AedConfig::new(model.clone(), 0.3).unwrap();
    assert!((aed.cross_moment() - cross_moment_closed_form(&model, 0.3)).amax() < 1e-12);
}

#[test]
fn paired_modalities_share_their_component_means() {
    let model = random_clip_model(3, 2, 2, &mut Seed(12).rng());
    let expected = model.cross_moment();
    let s = model.sample_matrix(N, &mut Seed(13).rng());
    for a in 0..2 {
        for b in 0..2 {
            let prods = s.x_v.column(a).iter().zip(s.x_t.column(b).iter()).map(|(u, v)| u * v).collect::<Vec<_>>();
            assert!(z_score(prods.into_iter(), expected[(a, b)]) <= 3.0);
        }
    }
}

#[test]
fn fisher_projection_preserves_posteriors_and_other_maps_do_not() {
    let mut rng = Seed(21).rng();
    let model = random_centered_model(4, 6, &mut rng);
    let fisher = fisher_subspace(&model).unwrap().as_map();
    let random = ProjectionMap::new(random_orthonormal(6, 3, &mut rng)).unwrap();
    let (x, _) = model.sample_matrix(200, &mut rng);
    let gap = |a: &ProjectionMap| {
        let projected = model.project(a).unwrap();
        x.row_iter()
            .map(|row| {
                let row = row.transpose();
                let p = model.posterior(&row).unwrap();
                let q = projected.posterior(&(a.matrix().transpose() * &row)).unwrap();
                p.iter().zip(&q).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    };
    assert!(gap(&fisher) <= 1e-8);
    assert!(gap(&random) > 1e-3);
}

proptest! {
    #[test]
    fn posteriors_are_probability_vectors(seed in any::<u64>(), scale in 0.1f64..50.0) {
        let mut rng = Seed(seed).rng();
        let model = random_centered_model(3, 4, &mut rng);
        let x = common::normal_matrix(4, 1, scale, &mut rng).column(0).into_owned();
        let p = model.posterior(&x).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
