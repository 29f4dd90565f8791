//! Exact stochastic simulation (Gillespie's direct method) and discrete
//! observation of the simulated path.

use rand::Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::network::{LogRates, ReactionNetwork, Trajectory};
use crate::rng::stream;

/// One simulated path: the initial state and the ordered event stream.
///
/// Reaction indices are 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub initial_state: Vec<f64>,
    pub events: Vec<(f64, usize)>,
    /// Time up to which the path is known.
    pub horizon: f64,
}

/// When to stop the simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    pub horizon: f64,
    pub max_events: Option<usize>,
}

impl StopRule {
    pub fn horizon(horizon: f64) -> Self {
        StopRule {
            horizon,
            max_events: None,
        }
    }

    pub fn events(n: usize) -> Self {
        StopRule {
            horizon: f64::INFINITY,
            max_events: Some(n),
        }
    }
}

fn check_initial(net: &ReactionNetwork, y0: &[f64]) -> Result<()> {
    if y0.len() != net.n_species() {
        return Err(Error::Dimension(format!(
            "initial state has {} entries, network has {} species",
            y0.len(),
            net.n_species()
        )));
    }
    if let Some(y) = y0.iter().find(|y| !(**y >= 0.0) || y.fract() != 0.0) {
        return Err(Error::InvalidArgument(format!(
            "initial counts must be nonnegative integers, got {y}"
        )));
    }
    Ok(())
}

/// Simulate on `[0, horizon]` with the stream `(seed, 0)`.
pub fn simulate(
    net: &ReactionNetwork,
    rates: &LogRates,
    y0: &[f64],
    horizon: f64,
    seed: u64,
) -> Result<EventRecord> {
    let mut rng = stream(seed, 0);
    simulate_with(net, rates, y0, StopRule::horizon(horizon), &mut rng)
}

/// Direct-method SSA driven by a caller-supplied generator.
pub fn simulate_with<R: Rng + ?Sized>(
    net: &ReactionNetwork,
    rates: &LogRates,
    y0: &[f64],
    stop: StopRule,
    rng: &mut R,
) -> Result<EventRecord> {
    check_initial(net, y0)?;
    if !(stop.horizon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "horizon must be positive, got {}",
            stop.horizon
        )));
    }
    if stop.horizon.is_infinite() && stop.max_events.is_none() {
        return Err(Error::InvalidArgument(
            "an infinite horizon needs an event limit".into(),
        ));
    }
    let theta = net.reaction_rates(rates)?;
    let v = net.net_effect();
    let r = net.n_reactions();
    let max_events = stop.max_events.unwrap_or(usize::MAX);

    let mut y = y0.to_vec();
    let mut t = 0.0;
    let mut events = Vec::new();
    let mut hazard = vec![0.0; r];
    let mut horizon = stop.horizon;
    loop {
        if events.len() >= max_events {
            horizon = horizon.min(t);
            break;
        }
        let factors = net.factors_unchecked(&y);
        let mut total = 0.0;
        for j in 0..r {
            hazard[j] = theta[j] * factors[j];
            total += hazard[j];
        }
        if !total.is_finite() {
            return Err(Error::NonFinite(format!(
                "total hazard {total} at time {t} after {} events",
                events.len()
            )));
        }
        if total <= 0.0 {
            break;
        }
        let wait = rng.sample::<f64, _>(Exp1) / total;
        let next = t + wait;
        if next > stop.horizon {
            break;
        }
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = None;
        for (j, &h) in hazard.iter().enumerate() {
            if h > 0.0 {
                acc += h;
                chosen = Some(j);
                if target < acc {
                    break;
                }
            }
        }
        let j = chosen.expect("positive total hazard has a positive term");
        for l in 0..y.len() {
            y[l] += v[(l, j)];
        }
        t = next;
        events.push((t, j));
    }
    if horizon.is_infinite() {
        horizon = t;
    }
    Ok(EventRecord {
        initial_state: y0.to_vec(),
        events,
        horizon,
    })
}

fn check_grid(rec: &EventRecord, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("observation grid is empty".into()));
    }
    for (i, &t) in grid.iter().enumerate() {
        if !(t >= 0.0 && t <= rec.horizon) {
            return Err(Error::OutsideHorizon {
                time: t,
                horizon: rec.horizon,
            });
        }
        if i > 0 && !(t > grid[i - 1]) {
            return Err(Error::InvalidArgument(format!(
                "observation grid must be strictly increasing (entry {i})"
            )));
        }
    }
    Ok(())
}

/// States at the grid times by exact replay; an event at `t_i` counts
/// towards `Y_i`.
pub fn observe(net: &ReactionNetwork, rec: &EventRecord, grid: &[f64]) -> Result<Trajectory> {
    check_grid(rec, grid)?;
    let v = net.net_effect();
    let mut y = rec.initial_state.clone();
    let mut states = Vec::with_capacity(grid.len());
    let mut next = 0;
    for &t in grid {
        while next < rec.events.len() && rec.events[next].0 <= t {
            let j = rec.events[next].1;
            for (l, yl) in y.iter_mut().enumerate() {
                *yl += v[(l, j)];
            }
            next += 1;
        }
        states.push(y.clone());
    }
    Trajectory::for_network(net, grid.to_vec(), states)
}

/// Observation grid `0, τ_jump, τ_2·jump, …, τ_{n·jump}` where `τ_k` is
/// the time of the k-th event.
pub fn jump_grid(rec: &EventRecord, jump: usize, n_intervals: usize) -> Result<Vec<f64>> {
    if jump == 0 || n_intervals == 0 {
        return Err(Error::InvalidArgument(
            "jump and number of intervals must be positive".into(),
        ));
    }
    let needed = jump * n_intervals;
    if rec.events.len() < needed {
        return Err(Error::InsufficientEvents {
            needed,
            available: rec.events.len(),
        });
    }
    let mut grid = Vec::with_capacity(n_intervals + 1);
    grid.push(0.0);
    grid.extend((1..=n_intervals).map(|k| rec.events[k * jump - 1].0));
    Ok(grid)
}

/// Thin the path to every `jump`-th event, keeping `n_intervals` intervals.
pub fn subsample_by_jump(
    net: &ReactionNetwork,
    rec: &EventRecord,
    jump: usize,
    n_intervals: usize,
) -> Result<Trajectory> {
    let grid = jump_grid(rec, jump, n_intervals)?;
    observe(net, rec, &grid)
}

/// Ground-truth event counts `X_i` per interval `(t_{i-1}, t_i]`, `N × r`.
pub fn interval_counts(net: &ReactionNetwork, rec: &EventRecord, grid: &[f64]) -> Result<Vec<Vec<u64>>> {
    check_grid(rec, grid)?;
    let r = net.n_reactions();
    let mut counts = vec![vec![0u64; r]; grid.len().saturating_sub(1)];
    for &(t, j) in &rec.events {
        if t <= grid[0] || t > grid[grid.len() - 1] {
            continue;
        }
        let i = grid.partition_point(|&g| g < t);
        counts[i - 1][j] += 1;
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::parse_network;

    fn birth_death() -> ReactionNetwork {
        parse_network("0 -> A\nA -> 0\nA -> 2 A").unwrap()
    }

    #[test]
    fn absorbed_start_has_no_events() {
        let net = parse_network("A + B -> C\nC -> 0").unwrap();
        let rates = LogRates::new(vec![0.0, 0.0]).unwrap();
        let rec = simulate(&net, &rates, &[3.0, 0.0, 0.0], 10.0, 1).unwrap();
        assert!(rec.events.is_empty());
        let traj = observe(&net, &rec, &[0.0]).unwrap();
        assert_eq!(traj.n_intervals(), 0);
        assert_eq!(traj.state(0), &[3.0, 0.0, 0.0]);
    }

    #[test]
    fn same_seed_same_record() {
        let net = birth_death();
        let rates = LogRates::new(vec![1.0, -1.0, -1.5]).unwrap();
        let a = simulate(&net, &rates, &[5.0], 20.0, 42).unwrap();
        let b = simulate(&net, &rates, &[5.0], 20.0, 42).unwrap();
        let c = simulate(&net, &rates, &[5.0], 20.0, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.events.windows(2).all(|w| w[0].0 < w[1].0));
    }

    #[test]
    fn jump_subsampling() {
        let net = birth_death();
        let rates = LogRates::new(vec![2.0, -1.0, -1.5]).unwrap();
        let mut rng = stream(3, 0);
        let rec = simulate_with(&net, &rates, &[5.0], StopRule::events(50), &mut rng).unwrap();
        assert_eq!(rec.events.len(), 50);
        let t = subsample_by_jump(&net, &rec, 10, 5).unwrap();
        assert_eq!(t.times().len(), 6);
        let counts = interval_counts(&net, &rec, t.times()).unwrap();
        assert!(counts.iter().all(|row| row.iter().sum::<u64>() == 10));
        let every = subsample_by_jump(&net, &rec, 1, 50).unwrap();
        assert_eq!(&every.times()[1..], rec.events.iter().map(|e| e.0).collect::<Vec<_>>().as_slice());
        match subsample_by_jump(&net, &rec, 10, 6) {
            Err(Error::InsufficientEvents { needed, available }) => assert_eq!((needed, available), (60, 50)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn grid_outside_horizon_rejected() {
        let net = birth_death();
        let rates = LogRates::new(vec![0.0, 0.0, 0.0]).unwrap();
        let rec = simulate(&net, &rates, &[1.0], 2.0, 9).unwrap();
        assert!(matches!(observe(&net, &rec, &[0.0, 3.0]), Err(Error::OutsideHorizon { .. })));
        assert!(observe(&net, &rec, &[1.0, 0.5]).is_err());
    }

    #[test]
    fn single_event_interval() {
        let net = parse_network("A -> B").unwrap();
        let rec = EventRecord {
            initial_state: vec![2.0, 0.0],
            events: vec![(0.3, 0)],
            horizon: 1.0,
        };
        let t = observe(&net, &rec, &[0.0, 1.0]).unwrap();
        assert_eq!(t.increment(1), vec![-1.0, 1.0]);
        assert_eq!(interval_counts(&net, &rec, &[0.0, 1.0]).unwrap(), vec![vec![1]]);
        assert_eq!(interval_counts(&net, &rec, &[0.5, 1.0]).unwrap(), vec![vec![0]]);
    }
}
