//! Policy value (fitted Q-evaluation or model Monte Carlo) and
//! counterfactual unfairness.

mod comparison;
mod fairness;
mod value;

pub use comparison::{compare_baselines, ComparisonTable, CF_ROW, VALUE_ROW};
pub use fairness::{evaluate_fairness_through_model, pairwise_disagreement, CFMetricReport, DEFAULT_FAIRNESS_REPS};
pub use value::{evaluate_value_through_fqe, evaluate_value_through_model, FqeSettings, ValueMethod, ValueReport};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::policy::{ConstantPolicy, FnPolicy, RandomPolicy};
    use crate::environment::{default_demo_env, demo_env, sample_demo_attributes, sample_trajectories, DemoParams, NoiseFamily, SyntheticEnvironment};
    use crate::error::Error;
    use crate::func_approx::{self, RegressorSpec};
    use ndarray::{s, Array2};

    fn z_space() -> Vec<Vec<f64>> {
        vec![vec![0.0], vec![1.0]]
    }

    fn demo_data(n: usize, horizon: usize) -> crate::trajectory::TrajectoryBatch {
        let zs = sample_demo_attributes(n, 21);
        sample_trajectories(&default_demo_env(), &zs.view(), &RandomPolicy { num_actions: 2 }, horizon, 22).unwrap()
    }

    #[test]
    fn constant_and_random_policies_are_fair() {
        let env = default_demo_env();
        let batch = demo_data(50, 6);
        for p in [
            Box::new(ConstantPolicy { num_actions: 2, action: 1 }) as Box<dyn crate::agents::Policy>,
            Box::new(RandomPolicy { num_actions: 2 }),
        ] {
            let r = evaluate_fairness_through_model(&env, &batch, &z_space(), &p, 3, 1).unwrap();
            assert_eq!(r.cf_metric, 0.0);
            assert_eq!(r.per_time.len(), 6);
            assert_eq!(r.num_arms, 2);
        }
    }

    #[test]
    fn sign_flip_env_is_maximally_unfair() {
        // z = 1 negates the state, which stays at ±1 forever
        let env = SyntheticEnvironment::new(
            1,
            1,
            2,
            |z, _| vec![if z[0] > 0.5 { -1.0 } else { 1.0 }],
            |_, x, _, _| x.to_vec(),
            |_, _, _, _| 0.0,
            NoiseFamily::Zero,
            NoiseFamily::Zero,
        )
        .unwrap();
        let zs = Array2::from_shape_fn((8, 1), |(i, _)| (i % 2) as f64);
        let batch = sample_trajectories(&env, &zs.view(), &RandomPolicy { num_actions: 2 }, 4, 0).unwrap();
        let p = FnPolicy::new(2, |_, x, _| if x[0] > 0.0 { vec![0.0, 1.0] } else { vec![1.0, 0.0] });
        let r = evaluate_fairness_through_model(&env, &batch, &z_space(), &p, 2, 0).unwrap();
        assert_eq!(r.cf_metric, 1.0);
        // relabeling z_space leaves the metric unchanged
        let r2 = evaluate_fairness_through_model(&env, &batch, &[vec![1.0], vec![0.0]], &p, 2, 0).unwrap();
        assert_eq!(r.cf_metric, r2.cf_metric);
    }

    #[test]
    fn unknown_attribute_is_a_domain_error() {
        let env = default_demo_env();
        let batch = demo_data(4, 2);
        let r = evaluate_fairness_through_model(&env, &batch, &[vec![0.0]], &RandomPolicy { num_actions: 2 }, 1, 0);
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn zero_reward_env_has_zero_value() {
        let env = SyntheticEnvironment::new(1, 1, 2, |_, e| vec![e[0]], |_, x, _, e| vec![x[0] + e[0]], |_, _, _, _| 0.0, NoiseFamily::Gaussian { sd: 1.0 }, NoiseFamily::Zero).unwrap();
        let r = evaluate_value_through_model(&env, &Array2::zeros((10, 1)), &RandomPolicy { num_actions: 2 }, 5, 0.9, 3, 0).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.standard_error, Some(0.0));
    }

    #[test]
    fn noise_free_constant_policy_value_is_closed_form() {
        let env = demo_env(DemoParams::default().noise_free());
        let zs = ndarray::array![[0.0], [1.0]];
        let p = ConstantPolicy { num_actions: 2, action: 1 };
        let (horizon, gamma) = (7, 0.9);
        let r = evaluate_value_through_model(&env, &zs, &p, horizon, gamma, 2, 5).unwrap();
        // r_t = x_t + (1 − 2 x_t) − 0.25 z = 1 − x_t − 0.25 z with x_{t+1} = 0.5 x_t + 0.6 + 0.4 z
        let expect = |z: f64| {
            let mut x = -0.5 + z;
            let mut g = 0.0;
            for t in 0..horizon {
                g += gamma.powi(t as i32) * (1.0 - x - 0.25 * z);
                x = 0.5 * x + 0.6 + 0.4 * z;
            }
            g
        };
        assert!((r.per_individual[0] - expect(0.0)).abs() < 1e-12);
        assert!((r.per_individual[1] - expect(1.0)).abs() < 1e-12);
        assert!((r.value - 0.5 * (expect(0.0) + expect(1.0))).abs() < 1e-12);
    }

    #[test]
    fn myopic_fqe_is_direct_reward_regression() {
        let batch = demo_data(80, 4);
        let p = ConstantPolicy { num_actions: 2, action: 1 };
        let settings = FqeSettings {
            discount: 0.0,
            ..FqeSettings::new(RegressorSpec::linear())
        };
        let r = evaluate_value_through_fqe(&batch, &p, &settings).unwrap();
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..batch.len() {
            for t in 0..4 {
                if batch.actions[[i, t]] == 1 {
                    x.extend([batch.zs[[i, 0]], batch.states[[i, t, 0]]]);
                    y.push(batch.rewards[[i, t]]);
                }
            }
        }
        let x = Array2::from_shape_vec((y.len(), 2), x).unwrap();
        let y = Array2::from_shape_vec((y.len(), 1), y).unwrap();
        let (m, _) = func_approx::fit(&RegressorSpec::linear(), &x.view(), &y.view()).unwrap();
        let s0 = ndarray::concatenate![ndarray::Axis(1), batch.zs, batch.states.slice(s![.., 0, ..])];
        let direct = m.predict(&s0.view()).unwrap().mean().unwrap();
        assert!((r.value - direct).abs() < 1e-10);
    }

    #[test]
    fn comparison_keeps_order() {
        let env = default_demo_env();
        let batch = demo_data(40, 3);
        let random = RandomPolicy { num_actions: 2 };
        let always = ConstantPolicy { num_actions: 2, action: 0 };
        let policies: Vec<(String, &dyn crate::agents::Policy)> = vec![("Random".into(), &random), ("Idle".into(), &always)];
        let t = compare_baselines(&env, &batch, &z_space(), &policies, &FqeSettings::new(RegressorSpec::linear()), 2, 0).unwrap();
        assert_eq!(t.names, vec!["Random", "Idle"]);
        assert_eq!(t.cf_metrics, vec![0.0, 0.0]);
        let single = compare_baselines(&env, &batch, &z_space(), &policies[..1], &FqeSettings::new(RegressorSpec::linear()), 2, 0).unwrap();
        assert_eq!(single.names.len(), 1);
    }
}
