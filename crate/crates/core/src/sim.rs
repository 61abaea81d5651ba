//! Exact continuous-time simulation of the N-urn particle system.
//!
//! The generator factorizes over balls: each ball in box i waits an
//! Exp(row_intensity(i)/n) time, then relocates to box j with probability
//! rates(i,j)/row_intensity(i). Self-jumps are real events that leave the
//! state unchanged. Simulating ball by ball is therefore exact and
//! embarrassingly parallel over balls and replicas.

use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};

use crate::error::{Error, Result};
use crate::kernel::DiscreteKernel;

/// Occupation numbers of the n boxes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoxCounts {
    pub n: usize,
    pub counts: Vec<u64>,
}

impl BoxCounts {
    pub fn new(counts: Vec<u64>) -> Self {
        BoxCounts {
            n: counts.len(),
            counts,
        }
    }

    pub fn total_mass(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Ensemble configuration: box count, horizon, snapshot times, master seed,
/// replica count.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub horizon: f64,
    pub sample_times: Vec<f64>,
    pub seed: u64,
    pub replicas: usize,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidArgument("n must be >= 1".into()));
        }
        if self.replicas == 0 {
            return Err(Error::InvalidArgument("replicas must be >= 1".into()));
        }
        if !(self.horizon >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "horizon {} must be >= 0",
                self.horizon
            )));
        }
        let mut prev = -1.0;
        for &t in &self.sample_times {
            if t < 0.0 || t > self.horizon {
                return Err(Error::InvalidArgument(format!(
                    "sample time {t} outside [0, {}]",
                    self.horizon
                )));
            }
            if t <= prev {
                return Err(Error::InvalidArgument(
                    "sample times must be strictly increasing".into(),
                ));
            }
            prev = t;
        }
        Ok(())
    }
}

/// Box counts recorded at the requested sample times.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub snapshots: Vec<(f64, BoxCounts)>,
}

impl Trajectory {
    pub fn counts_at(&self, idx: usize) -> &BoxCounts {
        &self.snapshots[idx].1
    }
}

/// One relocation event. Self-jumps (from == to) are retained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent {
    pub time: f64,
    pub from: usize,
    pub to: usize,
}

/// Event-resolved realization for functionals that need the full path, such
/// as the exponential martingale. Events are sorted by time.
#[derive(Debug, Clone, PartialEq)]
pub struct EventTrajectory {
    pub initial: BoxCounts,
    pub horizon: f64,
    pub events: Vec<JumpEvent>,
}

/// Independent Poisson counts with mean phi(i/n) per box.
pub fn sample_initial(phi: &[f64], n: usize, rng: &mut impl Rng) -> Result<BoxCounts> {
    if phi.len() != n {
        return Err(Error::shape(format!(
            "initial profile of length {} for {n} boxes",
            phi.len()
        )));
    }
    let mut counts = Vec::with_capacity(n);
    for (i, &mean) in phi.iter().enumerate() {
        if mean < 0.0 || !mean.is_finite() {
            return Err(Error::domain(format!(
                "Poisson mean {mean} at node {} is invalid",
                i + 1
            )));
        }
        if mean == 0.0 {
            counts.push(0);
        } else {
            let pois = Poisson::new(mean)
                .map_err(|e| Error::domain(format!("Poisson mean {mean}: {e}")))?;
            let draw: f64 = pois.sample(rng);
            counts.push(draw.round() as u64);
        }
    }
    Ok(BoxCounts::new(counts))
}

/// Precomputed destination tables for one discretized kernel, shared across
/// replicas.
pub struct Simulator<'a> {
    dk: &'a DiscreteKernel,
    /// Row-major prefix sums of the rate rows, for destination sampling.
    cdf: Vec<f64>,
}

impl<'a> Simulator<'a> {
    pub fn new(dk: &'a DiscreteKernel) -> Self {
        let n = dk.n;
        let mut cdf = Vec::with_capacity(n * n);
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += dk.rates[[i, j]];
                cdf.push(acc);
            }
        }
        Simulator { dk, cdf }
    }

    fn destination(&self, from: usize, rng: &mut impl Rng) -> usize {
        let n = self.dk.n;
        let row = &self.cdf[from * n..(from + 1) * n];
        let total = row[n - 1];
        let u: f64 = rng.random::<f64>() * total;
        // partition_point returns the first index with cdf > u.
        row.partition_point(|&c| c <= u).min(n - 1)
    }

    /// Walk one ball from `start` and report its box at each sample time.
    /// Consumes randomness only while sample times remain.
    fn walk_ball(
        &self,
        start: usize,
        sample_times: &[f64],
        positions: &mut [usize],
        rng: &mut impl Rng,
    ) {
        let mut pos = start;
        let mut t = 0.0;
        let mut next = 0;
        while next < sample_times.len() {
            let rate = self.dk.ball_rate(pos);
            let hold: f64 = Exp::new(rate).expect("positive rate").sample(rng);
            let t_jump = t + hold;
            while next < sample_times.len() && sample_times[next] < t_jump {
                positions[next] = pos;
                next += 1;
            }
            if next >= sample_times.len() {
                break;
            }
            pos = self.destination(pos, rng);
            t = t_jump;
        }
    }

    /// Exact realization observed at the given strictly increasing times.
    pub fn simulate(
        &self,
        x0: &BoxCounts,
        sample_times: &[f64],
        rng: &mut impl Rng,
    ) -> Result<Trajectory> {
        if x0.n != self.dk.n {
            return Err(Error::shape(format!(
                "{} boxes of initial data for a {}-box kernel",
                x0.n, self.dk.n
            )));
        }
        let mut grids: Vec<Vec<u64>> = vec![vec![0; x0.n]; sample_times.len()];
        let mut positions = vec![0usize; sample_times.len()];
        for (start, &count) in x0.counts.iter().enumerate() {
            for _ in 0..count {
                self.walk_ball(start, sample_times, &mut positions, rng);
                for (s, &p) in positions.iter().enumerate() {
                    grids[s][p] += 1;
                }
            }
        }
        let snapshots = sample_times
            .iter()
            .zip(grids)
            .map(|(&t, g)| (t, BoxCounts::new(g)))
            .collect();
        Ok(Trajectory { snapshots })
    }

    /// Full event log up to the horizon, sorted by event time.
    pub fn simulate_events(
        &self,
        x0: &BoxCounts,
        horizon: f64,
        rng: &mut impl Rng,
    ) -> Result<EventTrajectory> {
        if x0.n != self.dk.n {
            return Err(Error::shape(format!(
                "{} boxes of initial data for a {}-box kernel",
                x0.n, self.dk.n
            )));
        }
        if !(horizon >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "horizon {horizon} must be >= 0"
            )));
        }
        let mut events: Vec<(JumpEvent, usize)> = Vec::new();
        let mut ball_idx = 0usize;
        for (start, &count) in x0.counts.iter().enumerate() {
            for _ in 0..count {
                let mut pos = start;
                let mut t = 0.0;
                loop {
                    let rate = self.dk.ball_rate(pos);
                    let hold: f64 = Exp::new(rate).expect("positive rate").sample(rng);
                    t += hold;
                    if t > horizon {
                        break;
                    }
                    let to = self.destination(pos, rng);
                    events.push((
                        JumpEvent {
                            time: t,
                            from: pos,
                            to,
                        },
                        ball_idx,
                    ));
                    pos = to;
                }
                ball_idx += 1;
            }
        }
        // Ties are broken by ball index so the order is deterministic.
        events.sort_by(|a, b| {
            a.0.time
                .partial_cmp(&b.0.time)
                .expect("event times are finite")
                .then(a.1.cmp(&b.1))
        });
        Ok(EventTrajectory {
            initial: x0.clone(),
            horizon,
            events: events.into_iter().map(|(e, _)| e).collect(),
        })
    }
}

/// (1/n)·Σ_i counts(i)·f(i/n), the pairing of the empirical measure with f.
pub fn empirical_integral(x: &BoxCounts, f: &[f64]) -> Result<f64> {
    if f.len() != x.n {
        return Err(Error::shape(format!(
            "{} samples of f for {} boxes",
            f.len(),
            x.n
        )));
    }
    let s: f64 = x.counts.iter().zip(f).map(|(&c, &v)| c as f64 * v).sum();
    Ok(s / x.n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::RateKernel;
    use crate::seed::replica_rng;

    #[test]
    fn sample_initial_zero_profile_is_zero() {
        let mut rng = replica_rng(7, 0);
        let x = sample_initial(&vec![0.0; 100], 100, &mut rng).unwrap();
        assert!(x.counts.iter().all(|&c| c == 0));
    }

    #[test]
    fn sample_initial_rejects_negative_mean() {
        let mut rng = replica_rng(7, 0);
        assert!(matches!(
            sample_initial(&[1.0, -0.5], 2, &mut rng),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn sample_initial_constant_mean_concentrates() {
        // mean of 1000 Poisson(2) draws: the 3.3σ window is
        // 2 ± 3.3·sqrt(2/1000), i.e. [1.86, 2.14].
        let mut rng = replica_rng(2024, 0);
        let x = sample_initial(&vec![2.0; 1000], 1000, &mut rng).unwrap();
        let mean = x.total_mass() as f64 / 1000.0;
        assert!((1.86..=2.14).contains(&mean), "sample mean {mean}");
    }

    #[test]
    fn sample_initial_linear_profile_mean() {
        // node means i/n average to 0.5005 at n = 1000
        let n = 1000;
        let phi: Vec<f64> = (1..=n).map(|i| i as f64 / n as f64).collect();
        let mut rng = replica_rng(99, 1);
        let x = sample_initial(&phi, n, &mut rng).unwrap();
        let mean = x.total_mass() as f64 / n as f64;
        assert!((mean - 0.5005).abs() <= 0.075, "empirical mean {mean}");
    }

    #[test]
    fn mass_is_conserved_bitwise() {
        let dk = RateKernel::parse("product:affine(1,1),affine(2,-1)")
            .unwrap()
            .discretize(10)
            .unwrap();
        let sim = Simulator::new(&dk);
        let x0 = BoxCounts::new(vec![3, 0, 1, 0, 0, 2, 0, 0, 1, 0]);
        let mut rng = replica_rng(5, 0);
        let traj = sim.simulate(&x0, &[0.1, 0.5, 1.0, 2.0], &mut rng).unwrap();
        for (_, snap) in &traj.snapshots {
            assert_eq!(snap.total_mass(), 7);
        }
    }

    #[test]
    fn empty_sample_times_give_empty_snapshots() {
        let dk = RateKernel::constant(1.0).unwrap().discretize(4).unwrap();
        let sim = Simulator::new(&dk);
        let x0 = BoxCounts::new(vec![1, 2, 3, 4]);
        let mut rng = replica_rng(5, 0);
        let traj = sim.simulate(&x0, &[], &mut rng).unwrap();
        assert!(traj.snapshots.is_empty());
    }

    #[test]
    fn simulate_is_deterministic_in_the_seed() {
        let dk = RateKernel::constant(1.0).unwrap().discretize(8).unwrap();
        let sim = Simulator::new(&dk);
        let x0 = BoxCounts::new(vec![2; 8]);
        let times = [0.25, 0.5, 1.0];
        let a = sim.simulate(&x0, &times, &mut replica_rng(11, 3)).unwrap();
        let b = sim.simulate(&x0, &times, &mut replica_rng(11, 3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dimension_mismatch_is_shape_error() {
        let dk = RateKernel::constant(1.0).unwrap().discretize(4).unwrap();
        let sim = Simulator::new(&dk);
        let x0 = BoxCounts::new(vec![1, 1, 1]);
        assert!(matches!(
            sim.simulate(&x0, &[1.0], &mut replica_rng(0, 0)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn two_state_uniform_chain_law() {
        // One ball, two boxes, λ ≡ 1: P(in start box at t) = 1/2 + e^{-t}/2.
        // At t = 10 this is 0.5 to ten digits; 3.3σ binomial band over 10^4
        // replicas is ± 0.0165.
        let dk = RateKernel::constant(1.0).unwrap().discretize(2).unwrap();
        let sim = Simulator::new(&dk);
        let x0 = BoxCounts::new(vec![1, 0]);
        let replicas: u64 = 10_000;
        let mut hits = 0u64;
        for r in 0..replicas {
            let mut rng = replica_rng(31415, r);
            let traj = sim.simulate(&x0, &[10.0], &mut rng).unwrap();
            if traj.counts_at(0).counts[0] == 1 {
                hits += 1;
            }
        }
        let freq = hits as f64 / replicas as f64;
        assert!((freq - 0.5).abs() <= 0.017, "frequency {freq}");
    }

    #[test]
    fn event_log_is_time_sorted_and_mass_consistent() {
        let dk = RateKernel::constant(2.0).unwrap().discretize(5).unwrap();
        let sim = Simulator::new(&dk);
        let x0 = BoxCounts::new(vec![2, 1, 0, 3, 1]);
        let mut rng = replica_rng(8, 0);
        let traj = sim.simulate_events(&x0, 1.5, &mut rng).unwrap();
        assert!(traj.events.windows(2).all(|w| w[0].time <= w[1].time));
        // Replay the events; counts must stay nonnegative and conserve mass.
        let mut counts = traj.initial.counts.clone();
        for e in &traj.events {
            assert!(counts[e.from] > 0, "negative occupancy while replaying");
            counts[e.from] -= 1;
            counts[e.to] += 1;
        }
        let total: u64 = counts.iter().sum();
        assert_eq!(total, x0.total_mass());
    }

    #[test]
    fn empirical_integral_examples() {
        let x = BoxCounts::new(vec![2, 0, 0, 0]);
        assert_eq!(empirical_integral(&x, &[1.0; 4]).unwrap(), 0.5);

        let x = BoxCounts::new(vec![0, 0, 0, 4]);
        let f: Vec<f64> = (1..=4).map(|i| i as f64 / 4.0).collect();
        assert_eq!(empirical_integral(&x, &f).unwrap(), 1.0);

        let x = BoxCounts::new(vec![0, 0, 0, 0]);
        assert_eq!(empirical_integral(&x, &f).unwrap(), 0.0);

        assert!(matches!(
            empirical_integral(&x, &[1.0; 3]),
            Err(Error::Shape(_))
        ));
    }
}
