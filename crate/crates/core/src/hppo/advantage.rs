/// Truncated n-step advantages
/// `A_t = sum_{k<n} D^k r_{t+k} + D^n V(s_{t+n}) - V(s_t)`.
///
/// The sum stops at an episode end (no bootstrap past `done`); when the
/// rollout ends first, `last_value` stands in for `V(s_T)`.
pub fn n_step_advantage(rewards: &[f64], values: &[f64], dones: &[bool], last_value: f64, discount: f64, n_step: usize) -> Vec<f64> {
    assert_eq!(rewards.len(), values.len());
    assert_eq!(rewards.len(), dones.len());
    let t_len = rewards.len();
    (0..t_len)
        .map(|t| {
            let mut ret = 0.0;
            let mut scale = 1.0;
            let mut k = 0;
            let mut terminated = false;
            while k < n_step && t + k < t_len {
                ret += scale * rewards[t + k];
                scale *= discount;
                if dones[t + k] {
                    terminated = true;
                    k += 1;
                    break;
                }
                k += 1;
            }
            if !terminated {
                let boot = if t + k < t_len { values[t + k] } else { last_value };
                ret += scale * boot;
            }
            ret - values[t]
        })
        .collect()
}

/// Standardizes to zero mean and unit (population) variance. A constant
/// input maps to zeros.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for a in adv.iter_mut() {
        *a = if std > 0.0 { (*a - mean) / std } else { 0.0 };
    }
}
