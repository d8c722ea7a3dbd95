use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Number of parameters to compare (all of them if fewer exist).
    pub samples: usize,
    /// Pass threshold on the maximum relative error.
    pub tolerance: f64,
    /// Denominator floor so that gradients near zero are compared
    /// absolutely.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            samples: 200,
            tolerance: 1e-4,
            floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Parameters skipped because a +/- step changed the rectifier pattern.
    pub excluded: Vec<usize>,
    pub max_rel_error: f64,
    pub worst_index: Option<usize>,
    pub passed: bool,
}

/// Compares `analytic` against central finite differences of `loss`.
///
/// `pattern` returns the activation pattern at a parameter vector; a
/// parameter whose perturbation changes it sits within one step of a kink
/// and is excluded rather than compared.
pub fn grad_check<L, P>(
    params: &[f64],
    analytic: &[f64],
    mut loss: L,
    mut pattern: P,
    opts: &GradCheckOptions,
) -> GradCheckReport
where
    L: FnMut(&[f64]) -> f64,
    P: FnMut(&[f64]) -> Vec<bool>,
{
    assert_eq!(params.len(), analytic.len());
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let order = sample(&mut rng, params.len(), params.len());
    let base = pattern(params);
    let mut p = params.to_vec();
    let mut report = GradCheckReport {
        checked: 0,
        excluded: Vec::new(),
        max_rel_error: 0.0,
        worst_index: None,
        passed: true,
    };
    for i in order.iter() {
        if report.checked >= opts.samples {
            break;
        }
        let orig = p[i];
        p[i] = orig + opts.step;
        let plus_pattern = pattern(&p);
        let plus = loss(&p);
        p[i] = orig - opts.step;
        let minus_pattern = pattern(&p);
        let minus = loss(&p);
        p[i] = orig;
        if plus_pattern != base || minus_pattern != base {
            report.excluded.push(i);
            continue;
        }
        let numeric = (plus - minus) / (2.0 * opts.step);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.floor);
        report.checked += 1;
        if rel > report.max_rel_error || report.worst_index.is_none() {
            report.max_rel_error = rel.max(report.max_rel_error);
            report.worst_index = Some(i);
        }
    }
    report.passed = report.max_rel_error < opts.tolerance && report.checked > 0;
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{FactorizedHead, Mlp, PolicyNet, ValueNet, DEFAULT_HIDDEN};
    use crate::sim::{ActionVec, EnvConfig};

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn linear_model_squared_loss() {
        use rand::Rng;
        let mut r = rng(1);
        let net = Mlp::<f64>::new(&[20, 12], &mut r).unwrap();
        let x: Vec<f64> = (0..20).map(|_| r.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..12).map(|_| r.random_range(-1.0..1.0)).collect();
        let loss = |p: &[f64]| {
            let out = net.with_params(p).predict(&x).unwrap();
            0.5 * out.iter().zip(&y).map(|(o, t)| (o - t) * (o - t)).sum::<f64>()
        };
        let cache = net.forward(&x).unwrap();
        let g_out: Vec<f64> = cache.outputs().iter().zip(&y).map(|(o, t)| o - t).collect();
        let mut grads = vec![0.0; net.num_params()];
        net.backward(&cache, &g_out, &mut grads).unwrap();
        let rep = grad_check(net.params(), &grads, loss, |_| Vec::new(), &GradCheckOptions::default());
        assert_eq!(rep.checked, 200);
        assert!(rep.max_rel_error < 1e-8, "{}", rep.max_rel_error);
    }

    #[test]
    fn cross_entropy_through_factorized_head() {
        let cfg = EnvConfig::reference();
        let mut r = rng(2);
        let net = PolicyNet::<f64>::new(&cfg, &DEFAULT_HIDDEN, &mut r).unwrap();
        let xs = [0.1, 0.2, 0.0, 0.3, 0.2, 0.5, 0.1, 0.4, 0.0, 0.1, 0.3, 0.0, 0.8, 0.1, 0.2, 0.3];
        let actions = [ActionVec(vec![1, 0, 2, 3]), ActionVec(vec![0, 0, 1, 1])];
        let w = [0.5, 0.5];
        let mut grads = vec![0.0; net.mlp.num_params()];
        net.weighted_nll(&xs, &actions, &w, &mut grads).unwrap();
        let loss = |p: &[f64]| {
            let n = PolicyNet::from_parts(net.mlp.with_params(p), net.head).unwrap();
            n.weighted_nll(&xs, &actions, &w, &mut vec![0.0; p.len()]).unwrap()
        };
        let pattern = |p: &[f64]| net.mlp.with_params(p).activation_pattern(&xs, 2).unwrap();
        let rep = grad_check(net.mlp.params(), &grads, loss, pattern, &GradCheckOptions::default());
        assert!(rep.passed, "{rep:?}");
        assert!(rep.checked >= 200);
    }

    #[test]
    fn semi_gradient_critic_loss() {
        let cfg = EnvConfig::reference();
        let mut r = rng(3);
        let net = ValueNet::<f64>::new(&cfg, &DEFAULT_HIDDEN, &mut r).unwrap();
        let s = [0.1, 0.0, 0.1, 0.0, 0.2, 0.3, 0.0, 0.1];
        let s_next = [0.0, 0.0, 0.1, 0.0, 0.2, 0.3, 0.5, 0.1];
        let target = 1.5 + 0.99 * net.value(&s_next).unwrap();
        let mut grads = vec![0.0; net.mlp.num_params()];
        net.weighted_squared_error(&s, &[target], &[1.0], &mut grads).unwrap();
        let loss = |p: &[f64]| {
            let v = net.mlp.with_params(p).predict(&s).unwrap()[0];
            (target - v) * (target - v)
        };
        let pattern = |p: &[f64]| net.mlp.with_params(p).activation_pattern(&s, 1).unwrap();
        let rep = grad_check(net.mlp.params(), &grads, loss, pattern, &GradCheckOptions::default());
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn kink_adjacent_parameters_are_excluded() {
        // A hidden unit with pre-activation exactly at zero flips on any
        // perturbation of its incoming weight.
        let mut net = Mlp::<f64>::zeros(&[1, 1, 1]).unwrap();
        net.set_weight(1, 0, 0, 1.0);
        let x = [1.0];
        let loss = |p: &[f64]| net.with_params(p).predict(&x).unwrap()[0];
        let cache = net.forward(&x).unwrap();
        let mut grads = vec![0.0; net.num_params()];
        net.backward(&cache, &[1.0], &mut grads).unwrap();
        let pattern = |p: &[f64]| net.with_params(p).activation_pattern(&x, 1).unwrap();
        let rep = grad_check(net.params(), &grads, loss, pattern, &GradCheckOptions::default());
        assert_eq!(rep.excluded.len(), 2);
        assert!(rep.excluded.contains(&0) && rep.excluded.contains(&1));
        assert!(rep.passed);
    }

    #[test]
    fn wrong_gradient_fails() {
        let net = Mlp::<f64>::new(&[3, 2], &mut rng(4)).unwrap();
        let x = [1.0, 2.0, 3.0];
        let loss = |p: &[f64]| net.with_params(p).predict(&x).unwrap().iter().sum::<f64>();
        let rep = grad_check(net.params(), &vec![0.0; 8], loss, |_| Vec::new(), &GradCheckOptions::default());
        assert!(!rep.passed);
        let _ = FactorizedHead::new(1, 1);
    }
}
