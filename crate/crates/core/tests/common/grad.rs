//! Random networks and batches for gradient checks.

use arisnoma::hppo::gradcheck::grad_check;
use arisnoma::hppo::policy::{loss_and_grad, LossWeights, PolicyParameters, Sample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub struct Batch {
    states: Vec<Vec<f64>>,
    raws: Vec<Vec<f64>>,
    moves: Vec<usize>,
    old_d: Vec<f64>,
    old_c: Vec<f64>,
    adv: Vec<f64>,
    targets: Vec<f64>,
}

impl Batch {
    pub fn samples(&self) -> Vec<Sample<'_>> {
        (0..self.states.len())
            .map(|i| Sample {
                state: &self.states[i],
                movement: self.moves[i],
                raw: &self.raws[i],
                logp_d_old: self.old_d[i],
                logp_c_old: self.old_c[i],
                advantage: self.adv[i],
                value_target: self.targets[i],
            })
            .collect()
    }
}

pub fn random_batch(p: &PolicyParameters, n: usize, rng: &mut ChaCha8Rng) -> Batch {
    let sd = p.state_dim();
    let mut b = Batch {
        states: vec![],
        raws: vec![],
        moves: vec![],
        old_d: vec![],
        old_c: vec![],
        adv: vec![],
        targets: vec![],
    };
    for _ in 0..n {
        let s: Vec<f64> = (0..sd).map(|_| rng.random_range(-1.0..1.0)).collect();
        let out = p.forward(&s).unwrap();
        let raw: Vec<f64> = out
            .means
            .iter()
            .zip(&out.log_stds)
            .map(|(m, l)| m + l.exp() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let m = rng.random_range(0..5);
        let lp_d = arisnoma::hppo::policy::categorical_log_prob(&out.logits, m);
        let lp_c = arisnoma::hppo::policy::gaussian_log_density(&raw, &out.means, &out.log_stds);
        // Behavior log-probs offset so that ratios spread over both clip regions
        // while staying clear of the kinks.
        let mut off = || loop {
            let o: f64 = rng.random_range(-0.4..0.4);
            let r = (-o).exp();
            if (r - 0.8).abs() > 0.02 && (r - 1.2).abs() > 0.02 {
                return o;
            }
        };
        b.old_d.push(lp_d + off());
        b.old_c.push(lp_c + off());
        b.states.push(s);
        b.raws.push(raw);
        b.moves.push(m);
        b.adv.push(rng.sample::<f64, _>(StandardNormal));
        b.targets.push(rng.random_range(-2.0..2.0));
    }
    b
}

/// Worst relative gradient error over 20 random nets and batches.
pub fn worst_error(weights: LossWeights) -> f64 {
    let mut worst: f64 = 0.0;
    for trial in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + trial);
        let sd = rng.random_range(3..9);
        let ad = rng.random_range(1..6);
        let mut p = PolicyParameters::new(sd, ad, 8, rng.random_range(-1.0..0.5), &mut rng);
        // Push the heads away from their tiny initial scale.
        for w in p.discrete_head.params.iter_mut().chain(p.mean_head.params.iter_mut()) {
            *w += 0.3 * rng.sample::<f64, _>(StandardNormal);
        }
        let batch = random_batch(&p, 6, &mut rng);
        let samples = batch.samples();
        let base = p.clone();
        let f = |flat: &[f64]| {
            let mut q = base.clone();
            q.set_flat(flat);
            let (st, g) = loss_and_grad(&q, &samples, &weights).unwrap();
            (st.total, g.flat())
        };
        let r = grad_check(&p.flat(), f, 1e-4, 400, &mut rng);
        worst = worst.max(r.max_rel_error);
    }
    worst
}

