//! Central finite-difference gradient checks.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::matrix::Matrix;
use super::params::ParamBundle;

/// Gradients smaller than this are compared on an absolute scale.
pub const REL_FLOOR: f64 = 1e-6;

/// `|a - n| / max(|a|, |n|, REL_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

fn central<F: FnMut(&[f64]) -> f64>(x: &mut [f64], i: usize, eps: f64, f: &mut F) -> f64 {
    let orig = x[i];
    x[i] = orig + eps;
    let up = f(x);
    x[i] = orig - eps;
    let down = f(x);
    x[i] = orig;
    (up - down) / (2.0 * eps)
}

/// Max relative error over every coordinate of a flat input.
pub fn check_slice<F: FnMut(&[f64]) -> f64>(x: &[f64], analytic: &[f64], mut f: F, eps: f64) -> f64 {
    assert_eq!(x.len(), analytic.len());
    let mut work = x.to_vec();
    (0..x.len())
        .map(|i| relative_error(analytic[i], central(&mut work, i, eps, &mut f)))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat offset of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub coords_checked: usize,
}

/// Checks `analytic` against central differences of `loss` on a random subset
/// of at least `min_coords` coordinates (all of them if there are fewer).
pub fn finite_diff_check<F>(
    params: &ParamBundle,
    analytic: &[Matrix],
    mut loss: F,
    eps: f64,
    min_coords: usize,
    seed: u64,
) -> GradCheckReport
where
    F: FnMut(&ParamBundle) -> f64,
{
    assert_eq!(analytic.len(), params.len());
    let offsets: Vec<usize> = params
        .iter()
        .scan(0, |acc, p| {
            let start = *acc;
            *acc += p.value.as_slice().len();
            Some(start)
        })
        .collect();
    let total = params.num_values();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks: Vec<usize> = sample(&mut rng, total, min_coords.min(total)).into_vec();
    picks.sort_unstable();

    let mut work = params.snapshot();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        coords_checked: picks.len(),
    };
    for flat in picks {
        let idx = offsets.partition_point(|&o| o <= flat) - 1;
        let local = flat - offsets[idx];
        let orig = work.get(idx).as_slice()[local];
        work.get_mut(idx).as_mut_slice()[local] = orig + eps;
        let up = loss(&work);
        work.get_mut(idx).as_mut_slice()[local] = orig - eps;
        let down = loss(&work);
        work.get_mut(idx).as_mut_slice()[local] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let err = relative_error(analytic[idx].as_slice()[local], numeric);
        if err > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(err);
            if err >= report.max_rel_error {
                report.worst = Some((params.name(idx).to_owned(), local));
            }
        }
    }
    report
}
