//! M/G/1 queue simulator observing only inter-departure times.

use rand::distr::Uniform;
use rand_distr::{Distribution, Exp};

use crate::core::{Sample, SeedSpec};
use crate::{Error, Result};

/// Parameters of the M/G/1 queue: uniform service-time bounds and the
/// exponential arrival rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mg1Params {
    /// Lower service-time bound; must be positive.
    pub theta1: f64,
    /// Upper service-time bound; must exceed `theta1`.
    pub theta2: f64,
    /// Arrival rate; must be positive.
    pub theta3: f64,
}

impl Mg1Params {
    pub fn new(theta1: f64, theta2: f64, theta3: f64) -> Result<Self> {
        for (name, v) in [("theta1", theta1), ("theta2", theta2), ("theta3", theta3)] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("M/G/1 {name} = {v} is not finite")));
            }
        }
        if !(0.0 < theta1 && theta1 < theta2) {
            return Err(Error::InvalidParameter(format!(
                "M/G/1 service bounds must satisfy 0 < theta1 < theta2, got ({theta1}, {theta2})"
            )));
        }
        if theta3 <= 0.0 {
            return Err(Error::InvalidParameter(format!("M/G/1 arrival rate theta3 = {theta3} must be positive")));
        }
        Ok(Self { theta1, theta2, theta3 })
    }
}

/// Simulates `n_customers` through an initially empty FIFO queue and returns
/// the `n_customers - 1` gaps between consecutive departures.
///
/// Arrivals accumulate Exp(`theta3`) interarrival times from time zero;
/// customer `i` departs at `max(arrival_i, departure_{i-1}) + service_i`
/// with services drawn U(`theta1`, `theta2`). Per customer the interarrival
/// time is drawn before the service time.
pub fn mg1_simulate(n_customers: usize, theta: &Mg1Params, seed: &SeedSpec) -> Result<Sample> {
    if n_customers < 2 {
        return Err(Error::Config(format!(
            "M/G/1 needs at least 2 customers to observe a departure gap, got {n_customers}"
        )));
    }
    let mut rng = seed.rng();
    let interarrival = Exp::new(theta.theta3).expect("positive rate");
    let service = Uniform::new_inclusive(theta.theta1, theta.theta2).expect("ordered bounds");

    let mut gaps = Vec::with_capacity(n_customers - 1);
    let mut arrival = 0.0;
    let mut departure = 0.0;
    for i in 0..n_customers {
        arrival += interarrival.sample(&mut rng);
        let start = if arrival > departure { arrival } else { departure };
        let next_departure = start + service.sample(&mut rng);
        if i > 0 {
            gaps.push(next_departure - departure);
        }
        departure = next_departure;
    }
    Sample::new(gaps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;

    /// Independent oracle: an event-driven single-server FIFO queue. Draws
    /// the same (interarrival, service) stream, then replays it through an
    /// explicit event loop with a waiting line and a server slot.
    fn event_list_departure_gaps(n: usize, th: &Mg1Params, seed: &SeedSpec) -> Vec<f64> {
        let mut rng = seed.rng();
        let interarrival = Exp::new(th.theta3).unwrap();
        let service_dist = Uniform::new_inclusive(th.theta1, th.theta2).unwrap();
        let mut arrivals = Vec::with_capacity(n);
        let mut services = Vec::with_capacity(n);
        let mut t = 0.0;
        for _ in 0..n {
            t += interarrival.sample(&mut rng);
            arrivals.push(t);
            services.push(service_dist.sample(&mut rng));
        }

        let mut departures = vec![f64::NAN; n];
        let mut waiting = std::collections::VecDeque::new();
        let mut in_service: Option<(usize, f64)> = None;
        let mut next_arrival = 0;
        let mut done = 0;
        while done < n {
            let ta = arrivals.get(next_arrival).copied().unwrap_or(f64::INFINITY);
            let td = in_service.map_or(f64::INFINITY, |(_, d)| d);
            let now;
            if ta <= td {
                waiting.push_back(next_arrival);
                next_arrival += 1;
                now = ta;
            } else {
                let (c, d) = in_service.take().unwrap();
                departures[c] = d;
                done += 1;
                now = d;
            }
            if in_service.is_none() {
                if let Some(c) = waiting.pop_front() {
                    in_service = Some((c, now + services[c]));
                }
            }
        }
        departures.windows(2).map(|w| w[1] - w[0]).collect()
    }

    #[test]
    fn params_are_validated() {
        assert!(Mg1Params::new(1.0, 5.0, 0.2).is_ok());
        assert!(Mg1Params::new(0.0, 5.0, 0.2).is_err());
        assert!(Mg1Params::new(5.0, 5.0, 0.2).is_err());
        assert!(Mg1Params::new(6.0, 5.0, 0.2).is_err());
        assert!(Mg1Params::new(1.0, 5.0, 0.0).is_err());
    }

    #[test]
    fn customer_count_maps_to_gap_count() {
        let th = Mg1Params::new(1.0, 5.0, 0.2).unwrap();
        let y = mg1_simulate(51, &th, &SeedSpec::new(1)).unwrap();
        assert_eq!(y.len(), 50);
        assert!(mg1_simulate(1, &th, &SeedSpec::new(1)).is_err());
    }

    #[test]
    fn matches_event_list_oracle_trajectory_for_trajectory() {
        let th = Mg1Params::new(1.0, 5.0, 0.2).unwrap();
        for master in [2, 3, 4, 5] {
            let seed = SeedSpec::new(master);
            let y = mg1_simulate(200, &th, &seed).unwrap();
            let oracle = event_list_departure_gaps(200, &th, &seed);
            assert_eq!(y.values(), &oracle[..]);
        }
    }

    #[test]
    fn saturated_regime_yields_uniform_service_gaps() {
        let th = Mg1Params::new(2.0, 6.0, 1e9).unwrap();
        let y = mg1_simulate(10_001, &th, &SeedSpec::new(6)).unwrap();
        let cdf = |x: f64| ((x - 2.0) / 4.0).clamp(0.0, 1.0);
        assert!(stats::ks_one_sample(y.values(), cdf) < 0.05);
    }

    #[test]
    fn equal_bounds_and_no_arrivals_degenerate_to_constant_gaps() {
        let th = Mg1Params { theta1: 3.0, theta2: 3.0, theta3: 1e9 };
        let y = mg1_simulate(100, &th, &SeedSpec::new(8)).unwrap();
        for &g in y.values() {
            assert!((g - 3.0).abs() < 1e-6, "gap {g}");
        }
    }

    #[test]
    fn gaps_never_undercut_the_minimum_service_time() {
        let th = Mg1Params::new(0.5, 2.0, 0.8).unwrap();
        let mut min_gap = f64::INFINITY;
        let mut count = 0;
        for r in 0..2000 {
            let y = mg1_simulate(51, &th, &SeedSpec::new(100).with_replicate(r)).unwrap();
            count += y.len();
            min_gap = min_gap.min(y.values().iter().cloned().fold(f64::INFINITY, f64::min));
        }
        assert_eq!(count, 100_000);
        assert!(min_gap >= 0.5, "min gap {min_gap}");
    }
}
