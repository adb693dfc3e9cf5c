//! Properties that must hold for any model parameters and inputs, not just
//! trained ones.

use more_core::agent::{
    build_local_buffer, penalize_reward, restrictive_exploration, td_targets, ActorPolicy, CriticSet, CriticShape,
    FilterConfig, LagrangeState, Thresholds, COST, REWARD_A, REWARD_B,
};
use more_core::dataset::{nearest_rank_percentile, NormalizationStats, Transition};
use more_core::density::{elbo_components, DensityModel, VaeConfig};
use more_core::dynamics::{sensitivity, DynamicsModel, SensitivityConfig};
use more_core::nn::{Matrix, Mlp, MlpSpec};
use more_core::rng::{fill_normal, rng_from, Rng};
use proptest::prelude::*;
use rand::Rng as _;

fn uniform(rng: &mut Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn random_norm(rng: &mut Rng, sd: usize, ad: usize) -> NormalizationStats {
    NormalizationStats {
        state_mean: uniform(rng, sd, -1.0, 1.0),
        state_std: uniform(rng, sd, 0.3, 2.0),
        action_mean: uniform(rng, ad, -0.2, 0.2),
        action_std: uniform(rng, ad, 0.3, 1.0),
        reward_mean: 0.0,
        reward_std: 1.0,
    }
}

fn noisy_net(spec: MlpSpec, rng: &mut Rng, std: f64) -> Mlp {
    let mut net = Mlp::init(spec, rng);
    let mut noise = vec![0.0; net.params().len()];
    fill_normal(rng, std, &mut noise);
    net.params_mut().iter_mut().zip(noise).for_each(|(p, e)| *p += e);
    net
}

fn random_dynamics(rng: &mut Rng, norm: &NormalizationStats) -> DynamicsModel {
    let (sd, ad) = (norm.state_dim(), norm.action_dim());
    let net = noisy_net(MlpSpec::new(sd + ad, &[8], sd + 2), rng, 0.2);
    let mean = uniform(rng, sd + 2, -0.5, 0.5);
    let std = uniform(rng, sd + 2, 0.1, 1.0);
    DynamicsModel::from_parts(net, norm.clone(), mean, std, rng.random_bool(0.5)).unwrap()
}

fn random_density(rng: &mut Rng, norm: &NormalizationStats) -> DensityModel {
    let cfg = VaeConfig {
        encoder_hidden: vec![8],
        decoder_hidden: vec![8],
        ..VaeConfig::default()
    };
    let mut model = DensityModel::init(&cfg, norm.clone(), rng.random()).unwrap();
    let mut params = model.flat_params();
    let mut noise = vec![0.0; params.len()];
    fill_normal(rng, 0.3, &mut noise);
    params.iter_mut().zip(noise).for_each(|(p, e)| *p += e);
    model.set_flat_params(&params);
    model
}

fn random_rows(rng: &mut Rng, n: usize, dim: usize, std: f64) -> Matrix {
    let mut m = Matrix::zeros(n, dim);
    fill_normal(rng, std, m.as_mut_slice());
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sensitivity_is_nonnegative_and_predictions_finite(seed in any::<u64>()) {
        let mut rng = rng_from(seed, &[1]);
        let (sd, ad) = (rng.random_range(1..=4), rng.random_range(1..=3));
        let norm = random_norm(&mut rng, sd, ad);
        let model = random_dynamics(&mut rng, &norm);
        let s = uniform(&mut rng, sd, -3.0, 3.0);
        let a = uniform(&mut rng, ad, -1.0, 1.0);
        let cfg = SensitivityConfig { num_perturbations: rng.random_range(2..=6), noise_std: 0.05 };
        let u = sensitivity(&model, &s, &a, &cfg, seed).unwrap();
        prop_assert!(u >= 0.0 && u.is_finite(), "u = {u}");
        let p = model.predict(&s, &a).unwrap();
        prop_assert!(p.next_state.iter().all(|v| v.is_finite()));
        prop_assert!(p.reward.is_finite() && p.cost.is_finite());
    }

    #[test]
    fn kl_is_nonnegative_and_elbo_deterministic(seed in any::<u64>(), z in 1usize..4) {
        let mut rng = rng_from(seed, &[2]);
        let (sd, ad) = (rng.random_range(1..=4), rng.random_range(1..=3));
        let norm = random_norm(&mut rng, sd, ad);
        let model = random_density(&mut rng, &norm);
        let s = uniform(&mut rng, sd, -3.0, 3.0);
        let a = uniform(&mut rng, ad, -1.0, 1.0);
        let terms = elbo_components(&model, &s, &a, z, seed).unwrap();
        prop_assert!(terms.kl >= 0.0, "kl = {}", terms.kl);
        prop_assert!(terms.elbo().is_finite());
        prop_assert_eq!(terms, elbo_components(&model, &s, &a, z, seed).unwrap());
    }

    #[test]
    fn dual_ascent_never_goes_negative(
        lambda in 0.0f64..100.0,
        step in 1e-6f64..10.0,
        limit in -100.0f64..500.0,
        values in proptest::collection::vec(-1e4f64..1e4, 1..50),
    ) {
        let mut state = LagrangeState::new(lambda, step, limit).unwrap();
        for q in values {
            state.ascend(q);
            prop_assert!(state.lambda >= 0.0);
        }
    }

    #[test]
    fn penalty_never_amplifies(r in -10.0f64..10.0, p in -50.0f64..5.0, lp in -50.0f64..5.0, kappa in 0.0f64..20.0) {
        let r_used = penalize_reward(r, p, lp, kappa);
        prop_assert!(r_used.abs() <= r.abs());
        prop_assert_eq!(r_used.signum() == r.signum() || r == 0.0, true);
        if p >= lp {
            prop_assert_eq!(r_used, r);
        }
    }

    #[test]
    fn looser_percentile_admits_a_superset(
        values in proptest::collection::vec(0.0f64..10.0, 1..200),
        b1 in 0.0f64..100.0,
        b2 in 0.0f64..100.0,
    ) {
        let (lo, hi) = if b1 <= b2 { (b1, b2) } else { (b2, b1) };
        let (l_lo, l_hi) = (
            nearest_rank_percentile(&values, lo).unwrap(),
            nearest_rank_percentile(&values, hi).unwrap(),
        );
        for &u in &values {
            prop_assert!(!(u < l_lo) || u < l_hi);
        }
    }

    #[test]
    fn exploration_records_respect_the_thresholds(seed in any::<u64>()) {
        let mut rng = rng_from(seed, &[3]);
        let (sd, ad) = (rng.random_range(1..=4), rng.random_range(1..=3));
        let norm = random_norm(&mut rng, sd, ad);
        let dynamics = random_dynamics(&mut rng, &norm);
        let density = random_density(&mut rng, &norm);
        let actor = ActorPolicy::init(norm, &[8], 0.3, &mut rng);
        let config = FilterConfig {
            kappa: rng.random_range(0.0..10.0),
            rollout_length: rng.random_range(1..=4),
            sensitivity: SensitivityConfig { num_perturbations: 4, noise_std: 0.05 },
            density_z_samples: 1,
        };
        let thresholds = Thresholds {
            beta_u: 70.0,
            beta_p: 40.0,
            sensitivity: 10f64.powf(rng.random_range(-6.0..0.0)),
            density: rng.random_range(-20.0..0.0),
        };
        let n = rng.random_range(1..=12);
        let starts = random_rows(&mut rng, n, sd, 1.0);
        let out = restrictive_exploration(&starts, &actor, &dynamics, &density, &config, &thresholds, seed);

        for t in &out.positive {
            prop_assert!(t.sensitivity < thresholds.sensitivity);
            prop_assert!(t.density > thresholds.density);
            prop_assert_eq!(t.r_used, t.r_hat);
        }
        for t in &out.negative {
            prop_assert!(t.sensitivity < thresholds.sensitivity);
            prop_assert!(t.density <= thresholds.density);
            prop_assert_eq!(t.r_used, penalize_reward(t.r_hat, t.density, thresholds.density, config.kappa));
        }
        for t in out.positive.iter().chain(&out.negative) {
            prop_assert!(t.a.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
        for d in &out.discarded {
            prop_assert!(d.sensitivity >= thresholds.sensitivity);
            // A discard ends its rollout.
            prop_assert!(out.positive.iter().chain(&out.negative).all(|t| t.source != d.source || t.depth < d.depth));
        }
        // Rollouts are contiguous from depth 0 until they stop.
        for source in 0..starts.rows() {
            let mut depths: Vec<usize> = out
                .positive
                .iter()
                .chain(&out.negative)
                .filter(|t| t.source == source)
                .map(|t| t.depth)
                .chain(out.discarded.iter().filter(|d| d.source == source).map(|d| d.depth))
                .collect();
            depths.sort_unstable();
            prop_assert_eq!(depths.clone(), (0..depths.len()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn reward_target_is_dominated_by_each_target_critic(seed in any::<u64>(), gamma in 0.0f64..1.0) {
        let mut rng = rng_from(seed, &[4]);
        let (sd, ad) = (rng.random_range(1..=4), rng.random_range(1..=3));
        let norm = random_norm(&mut rng, sd, ad);
        let actor = ActorPolicy::init(norm.clone(), &[6], 0.1, &mut rng);
        let shape = CriticShape { hidden: vec![6], value_scale: 5.0, soft_update_rate: 0.005 };
        let mut critics = CriticSet::init(norm, &shape, &mut rng);
        for k in [REWARD_A, REWARD_B, COST] {
            let mut noise = vec![0.0; critics.target(k).params().len()];
            fill_normal(&mut rng, 0.5, &mut noise);
            critics.target_mut(k).params_mut().iter_mut().zip(noise).for_each(|(p, e)| *p += e);
        }
        let n = rng.random_range(1..=10);
        let real: Vec<Transition> = (0..n)
            .map(|_| Transition {
                s: uniform(&mut rng, sd, -2.0, 2.0),
                a: uniform(&mut rng, ad, -1.0, 1.0),
                r: rng.random_range(-1.0..1.0),
                cost_vector: vec![0.0],
                combined_cost: rng.random_range(0.0..2.0),
                s_next: uniform(&mut rng, sd, -2.0, 2.0),
                done: false,
            })
            .collect();
        let buffer = build_local_buffer(&real.iter().collect::<Vec<_>>(), &Default::default());
        let (reward, _) = td_targets(&buffer, &critics, &actor, gamma);
        let next = buffer.next_states();
        let next_actions = actor.act_batch(&next);
        let qa = critics.target_values(REWARD_A, &next, &next_actions);
        let qb = critics.target_values(REWARD_B, &next, &next_actions);
        for (i, rec) in buffer.records.iter().enumerate() {
            prop_assert!(reward[i] <= rec.r + gamma * qa[i]);
            prop_assert!(reward[i] <= rec.r + gamma * qb[i]);
        }
    }
}
