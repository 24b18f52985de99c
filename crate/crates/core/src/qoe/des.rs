//! Single-server FIFO simulation used to check the closed-form latency.
//!
//! Customers arrive as a Poisson stream and are served in order. Each
//! customer's waiting time follows Lindley's recursion
//! `W[k+1] = max(0, W[k] + S[k] - A[k+1])`, which replays the arrival and
//! departure events of a FIFO queue exactly without an event calendar.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal};

use super::model::traffic_intensity;
use crate::error::{Error, Result};

/// Service-time sampler with a given mean and standard deviation.
#[derive(Debug, Clone, Copy)]
enum ServiceTime {
    Deterministic(f64),
    LogNormal(LogNormal<f64>),
}

impl ServiceTime {
    fn new(mean: f64, std: f64) -> Result<Self> {
        if std == 0.0 {
            return Ok(Self::Deterministic(mean));
        }
        // Match the first two moments: sigma^2 = ln(1 + V^2), mu = ln(mean) - sigma^2 / 2.
        let cov = std / mean;
        let s2 = (1.0 + cov * cov).ln();
        let dist = LogNormal::new(mean.ln() - s2 / 2.0, s2.sqrt())
            .map_err(|e| Error::domain(format!("lognormal: {e}")))?;
        Ok(Self::LogNormal(dist))
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Deterministic(v) => *v,
            Self::LogNormal(d) => d.sample(rng),
        }
    }
}

/// Below this many arrivals the plain sample mean is returned.
const MIN_CONTROLLED: usize = 10_000;
const BATCHES: usize = 200;

/// Per-run statistics of one simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesRun {
    /// Plain sample mean of the sojourn times.
    pub mean_sojourn: f64,
    /// Sample mean corrected with control variates; equal to `mean_sojourn`
    /// for short runs.
    pub controlled: f64,
}

/// Mean sojourn time (wait plus service) over `n_arrivals` customers of an
/// M/G/1 queue with lognormal service times of mean `1/service_rate` and
/// standard deviation `service_time_std`. The queue starts empty.
///
/// Returns the control-variate estimate of [`mg1_des_run`].
pub fn mg1_des_oracle(
    arrival_rate: f64,
    service_rate: f64,
    service_time_std: f64,
    n_arrivals: usize,
    seed: u64,
) -> Result<f64> {
    Ok(mg1_des_run(arrival_rate, service_rate, service_time_std, n_arrivals, seed)?.controlled)
}

/// Simulates the queue and returns the plain and the controlled estimate.
///
/// The controls are the sample means of the service time, its square and the
/// interarrival gap, whose expectations are known from the input
/// distributions. Their coefficients are fitted by least squares over batch
/// means, which removes most of the noise that heavy-tailed service times put
/// into the plain mean.
pub fn mg1_des_run(
    arrival_rate: f64,
    service_rate: f64,
    service_time_std: f64,
    n_arrivals: usize,
    seed: u64,
) -> Result<DesRun> {
    if n_arrivals == 0 {
        return Err(Error::domain("need at least one arrival"));
    }
    if !(arrival_rate > 0.0) {
        return Err(Error::domain("arrival rate must be positive"));
    }
    if !(service_time_std >= 0.0 && service_time_std.is_finite()) {
        return Err(Error::domain("service time std must be non-negative"));
    }
    traffic_intensity(arrival_rate, service_rate)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let interarrival = Exp::new(arrival_rate).map_err(|e| Error::domain(format!("exp: {e}")))?;
    let mean_service = 1.0 / service_rate;
    let service = ServiceTime::new(mean_service, service_time_std)?;

    let batches = if n_arrivals >= MIN_CONTROLLED { BATCHES } else { 1 };
    let per = n_arrivals / batches;
    // per batch: sojourn, service, service^2, gap
    let mut sums = vec![[0.0f64; 4]; batches];
    let mut wait = 0.0f64;
    let mut total = 0.0f64;
    for k in 0..n_arrivals {
        let s = service.sample(&mut rng);
        total += wait + s;
        let gap = interarrival.sample(&mut rng);
        let b = (k / per.max(1)).min(batches - 1);
        if k < per * batches {
            let row = &mut sums[b];
            row[0] += wait + s;
            row[1] += s;
            row[2] += s * s;
            row[3] += gap;
        }
        wait = (wait + s - gap).max(0.0);
    }
    let mean_sojourn = total / n_arrivals as f64;
    if batches == 1 {
        return Ok(DesRun {
            mean_sojourn,
            controlled: mean_sojourn,
        });
    }
    let expected = [
        mean_service,
        mean_service * mean_service + service_time_std * service_time_std,
        1.0 / arrival_rate,
    ];
    let rows: Vec<[f64; 4]> = sums.iter().map(|r| r.map(|v| v / per as f64)).collect();
    let controlled = control_variates(&rows, &expected).unwrap_or(mean_sojourn);
    Ok(DesRun {
        mean_sojourn,
        controlled,
    })
}

/// `y - beta . (x - E[x])` over batch means `[y, x1, x2, x3]`, with `beta`
/// from least squares. Controls without spread are dropped; `None` if the
/// system is singular.
fn control_variates(rows: &[[f64; 4]], expected: &[f64; 3]) -> Option<f64> {
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..4).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let cov = |a: usize, b: usize| rows.iter().map(|r| (r[a] - mean[a]) * (r[b] - mean[b])).sum::<f64>();
    let live: Vec<usize> = (1..4).filter(|&j| cov(j, j) > 1e-12 * mean[j].abs().max(1.0).powi(2)).collect();
    let k = live.len();
    let mut m: Vec<Vec<f64>> = live
        .iter()
        .map(|&p| {
            let mut row: Vec<f64> = live.iter().map(|&q| cov(p, q)).collect();
            row.push(cov(p, 0));
            row
        })
        .collect();
    for i in 0..k {
        let piv = (i..k).max_by(|&a, &b| m[a][i].abs().total_cmp(&m[b][i].abs()))?;
        m.swap(i, piv);
        if m[i][i].abs() < 1e-300 {
            return None;
        }
        let d = m[i][i];
        m[i].iter_mut().for_each(|v| *v /= d);
        for r in 0..k {
            if r != i {
                let f = m[r][i];
                for j in i..=k {
                    m[r][j] -= f * m[i][j];
                }
            }
        }
    }
    let mut y = mean[0];
    for (i, &j) in live.iter().enumerate() {
        y -= m[i][k] * (mean[j] - expected[j - 1]);
    }
    y.is_finite().then_some(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qoe::model::agent_latency;

    #[test]
    fn single_customer_sees_only_service() {
        let l = mg1_des_oracle(1.0, 2.0, 0.0, 1, 1).unwrap();
        assert_eq!(l, 0.5);
    }

    #[test]
    fn light_traffic_tends_to_service_time() {
        let l = mg1_des_oracle(1e-6, 2.0, 0.3, 20_000, 3).unwrap();
        assert!((l - 0.5).abs() / 0.5 < 0.02, "{l}");
    }

    #[test]
    fn rejects_unstable_and_empty() {
        assert!(matches!(mg1_des_oracle(2.0, 2.0, 0.0, 10, 0), Err(Error::Stability { .. })));
        assert!(mg1_des_oracle(1.0, 2.0, 0.0, 0, 0).is_err());
    }

    #[test]
    fn lognormal_moments_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let st = ServiceTime::new(0.5, 1.0).unwrap();
        let n = 400_000;
        let xs: Vec<f64> = (0..n).map(|_| st.sample(&mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "{mean}");
        assert!((var.sqrt() - 1.0).abs() < 0.1, "{}", var.sqrt());
    }

    #[test]
    fn short_runs_use_the_plain_mean() {
        let r = mg1_des_run(0.5, 1.0, 1.0, 500, 4).unwrap();
        assert_eq!(r.mean_sojourn, r.controlled);
    }

    #[test]
    fn deterministic_service_keeps_the_gap_control() {
        let r = mg1_des_run(0.5, 1.0, 0.0, 50_000, 4).unwrap();
        assert_ne!(r.mean_sojourn, r.controlled);
        let pk = agent_latency(0.5, 1.0, 0.0).unwrap().latency;
        assert!((r.controlled - pk).abs() / pk < 0.02);
    }

    #[test]
    fn controls_tighten_heavy_tailed_runs() {
        let pk = agent_latency(0.5, 1.0, 2.0).unwrap().latency;
        let (mut plain, mut ctrl) = (0.0, 0.0);
        for seed in 0..8 {
            let r = mg1_des_run(0.5, 1.0, 2.0, 100_000, seed).unwrap();
            plain += (r.mean_sojourn - pk).powi(2);
            ctrl += (r.controlled - pk).powi(2);
        }
        assert!(ctrl < plain, "{ctrl} vs {plain}");
    }

    #[test]
    fn mm1_and_md1_reference_cases() {
        // 10^6 arrivals as in the reference cases; these dominate this module's test time.
        let mm1 = mg1_des_oracle(1.0, 2.0, 0.5, 1_000_000, 11).unwrap();
        assert!((mm1 - 1.0).abs() < 0.02, "{mm1}");
        let md1 = mg1_des_oracle(1.0, 2.0, 0.0, 1_000_000, 12).unwrap();
        let pk = agent_latency(1.0, 2.0, 0.0).unwrap().latency;
        assert!((md1 - pk).abs() / pk < 0.02, "{md1} vs {pk}");
    }
}
