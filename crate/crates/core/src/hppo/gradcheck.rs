use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub passed: bool,
}

pub const FD_STEP: f64 = 1e-5;

/// `|a - n| / max(|a|, |n|)`, with both-tiny pairs judged on an absolute
/// scale of `1e-8`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(1e-8);
    (analytic - numeric).abs() / scale
}

/// Compares `loss_fn`'s analytic gradient with central differences on up to
/// `coords` randomly chosen coordinates (all of them when `coords` covers
/// the vector).
pub fn grad_check<F, R>(params: &[f64], loss_fn: F, tolerance: f64, coords: usize, rng: &mut R) -> GradCheckReport
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
    R: Rng + ?Sized,
{
    let (_, analytic) = loss_fn(params);
    assert_eq!(analytic.len(), params.len(), "gradient length mismatch");
    let idx: Vec<usize> = if coords >= params.len() {
        (0..params.len()).collect()
    } else {
        (0..coords).map(|_| rng.random_range(0..params.len())).collect()
    };
    let mut x = params.to_vec();
    let mut worst = (0.0, 0);
    for i in idx {
        let orig = x[i];
        x[i] = orig + FD_STEP;
        let (lp, _) = loss_fn(&x);
        x[i] = orig - FD_STEP;
        let (lm, _) = loss_fn(&x);
        x[i] = orig;
        let numeric = (lp - lm) / (2.0 * FD_STEP);
        let e = relative_error(analytic[i], numeric);
        if e > worst.0 {
            worst = (e, i);
        }
    }
    GradCheckReport {
        max_rel_error: worst.0,
        worst_index: worst.1,
        passed: worst.0 <= tolerance,
    }
}
