//! Seeded Monte Carlo over random lattice paths.
//!
//! Every episode draws from its own ChaCha8 stream `(seed, episode index)`,
//! and per-episode results are reduced in index order, so an estimate is
//! bit-identical for a given seed whatever the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constrained::ConstrainedSolution;
use crate::error::{Error, Result};
use crate::model::{hop_cost_point, HopCost, Instance, LatticePoint, PathParams};
use crate::placement::PlacementSet;
use crate::renewal::CompensatedSum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    East,
    North,
}

/// One step of the path; `ended` means the path stops at the new point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathEvent {
    pub direction: Direction,
    pub ended: bool,
}

/// Draws a path: each step ends it with probability `p` and goes East with
/// probability `q`, independently.
pub fn sample_path<R: Rng + ?Sized>(path: &PathParams, rng: &mut R) -> Vec<PathEvent> {
    let mut events = Vec::new();
    loop {
        let ended = rng.random::<f64>() < path.p();
        let direction = if rng.random::<f64>() < path.q() {
            Direction::East
        } else {
            Direction::North
        };
        events.push(PathEvent { direction, ended });
        if ended {
            return events;
        }
    }
}

/// A deterministic placement set, or a once-per-deployment randomization
/// between two sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Policy {
    Deterministic {
        set: PlacementSet,
    },
    /// Uses `over` with probability `alpha`, else `under`.
    Mixed {
        under: PlacementSet,
        over: PlacementSet,
        alpha: f64,
    },
}

impl Policy {
    pub fn validate(&self) -> Result<()> {
        match self {
            Policy::Mixed { alpha, .. } if !(0.0..=1.0).contains(alpha) => {
                Err(Error::param("alpha", format!("must lie in [0, 1], got {alpha}")))
            }
            _ => Ok(()),
        }
    }

    /// Picks the set used for a whole deployment.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> &PlacementSet {
        match self {
            Policy::Deterministic { set } => set,
            Policy::Mixed { under, over, alpha } => {
                if rng.random::<f64>() < *alpha {
                    over
                } else {
                    under
                }
            }
        }
    }
}

impl From<PlacementSet> for Policy {
    fn from(set: PlacementSet) -> Self {
        Policy::Deterministic { set }
    }
}

impl From<&ConstrainedSolution> for Policy {
    fn from(sol: &ConstrainedSolution) -> Self {
        match &sol.set_over {
            Some(over) => Policy::Mixed {
                under: sol.set_under.clone(),
                over: over.clone(),
                alpha: sol.alpha,
            },
            None => Policy::Deterministic {
                set: sol.set_under.clone(),
            },
        }
    }
}

/// Position bookkeeping for one deployment walk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Walk {
    /// Offset from the last relay (or the control centre).
    pub rel: LatticePoint,
    pub abs: LatticePoint,
    pub steps: u64,
    pub total_cost: f64,
    pub relay_positions: Vec<LatticePoint>,
    pub ended: bool,
}

impl Default for Walk {
    fn default() -> Self {
        Self::new()
    }
}

impl Walk {
    pub fn new() -> Self {
        Self {
            rel: LatticePoint::ORIGIN,
            abs: LatticePoint::ORIGIN,
            steps: 0,
            total_cost: 0.0,
            relay_positions: Vec::new(),
            ended: false,
        }
    }

    pub fn relays(&self) -> u64 {
        self.relay_positions.len() as u64
    }

    pub fn step(&mut self, direction: Direction) {
        let (rel, abs) = match direction {
            Direction::East => (self.rel.east(), self.abs.east()),
            Direction::North => (self.rel.north(), self.abs.north()),
        };
        self.rel = rel;
        self.abs = abs;
        self.steps += 1;
    }

    /// Places a relay at the current point; returns the hop cost paid.
    pub fn place<C: HopCost + ?Sized>(&mut self, cost: &C) -> f64 {
        let d = hop_cost_point(self.rel, cost);
        self.total_cost += d;
        self.relay_positions.push(self.abs);
        self.rel = LatticePoint::ORIGIN;
        d
    }

    /// The source is placed at the current point; returns the final hop cost.
    pub fn finish<C: HopCost + ?Sized>(&mut self, cost: &C) -> f64 {
        let d = hop_cost_point(self.rel, cost);
        self.total_cost += d;
        self.ended = true;
        d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    /// Sum of all hop costs, including the final source hop.
    pub total_cost: f64,
    pub relays: u64,
    pub steps: u64,
    pub relay_positions: Vec<LatticePoint>,
    pub end_position: LatticePoint,
}

impl From<Walk> for EpisodeResult {
    fn from(w: Walk) -> Self {
        EpisodeResult {
            total_cost: w.total_cost,
            relays: w.relays(),
            steps: w.steps,
            end_position: w.abs,
            relay_positions: w.relay_positions,
        }
    }
}

/// Follows `set` along a given event sequence, which must end with the
/// only `ended` event.
pub fn run_events<C: HopCost + ?Sized>(set: &PlacementSet, events: &[PathEvent], cost: &C) -> Result<EpisodeResult> {
    let mut walk = Walk::new();
    for (i, ev) in events.iter().enumerate() {
        if walk.ended {
            return Err(Error::param("events", format!("event {i} follows the end of the path")));
        }
        walk.step(ev.direction);
        if ev.ended {
            walk.finish(cost);
        } else if set.contains(walk.rel) {
            walk.place(cost);
        }
    }
    if !walk.ended {
        return Err(Error::param("events", "path has no ended event"));
    }
    Ok(walk.into())
}

/// Draws the policy's set once, then a path, and walks it.
pub fn run_episode<C, R>(policy: &Policy, path: &PathParams, cost: &C, rng: &mut R) -> EpisodeResult
where
    C: HopCost + ?Sized,
    R: Rng + ?Sized,
{
    let set = policy.draw(rng);
    let events = sample_path(path, rng);
    run_events(set, &events, cost).expect("sampled paths end exactly once")
}

/// The RNG for one episode of a seeded run.
pub fn episode_rng(seed: u64, episode: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(episode);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    /// Sample standard deviation over `sqrt(episodes)`; zero for one episode.
    pub std_err: f64,
}

impl Estimate {
    fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mut sum = CompensatedSum::default();
        xs.iter().for_each(|&x| sum.add(x));
        let mean = sum.value() / n;
        if xs.len() < 2 {
            return Estimate { value: mean, std_err: 0.0 };
        }
        let mut sq = CompensatedSum::default();
        xs.iter().for_each(|&x| sq.add((x - mean) * (x - mean)));
        let var = sq.value() / (n - 1.0);
        Estimate {
            value: mean,
            std_err: (var / n).sqrt(),
        }
    }

    /// `|value - target|` in standard errors.
    pub fn z_score(&self, target: f64) -> f64 {
        let dev = (self.value - target).abs();
        if self.std_err > 0.0 {
            dev / self.std_err
        } else if dev == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean_cost: Estimate,
    pub mean_relays: Estimate,
    /// Per-episode `C + λ N`.
    pub mean_objective: Estimate,
    pub lambda: f64,
    pub episodes: u64,
    pub seed: u64,
}

/// Runs `episodes` independent deployments of `policy` on `inst`.
pub fn monte_carlo<C: HopCost>(policy: &Policy, inst: &Instance<C>, episodes: u64, seed: u64) -> Result<McEstimate> {
    if episodes == 0 {
        return Err(Error::param("episodes", "must be at least 1"));
    }
    policy.validate()?;
    let per_episode: Vec<(f64, f64)> = (0..episodes)
        .into_par_iter()
        .map(|i| {
            let mut rng = episode_rng(seed, i);
            let r = run_episode(policy, &inst.path, &inst.cost, &mut rng);
            (r.total_cost, r.relays as f64)
        })
        .collect();
    let lambda = inst.lambda();
    let costs: Vec<f64> = per_episode.iter().map(|r| r.0).collect();
    let relays: Vec<f64> = per_episode.iter().map(|r| r.1).collect();
    let objective: Vec<f64> = per_episode.iter().map(|r| r.0 + lambda * r.1).collect();
    Ok(McEstimate {
        mean_cost: Estimate::from_samples(&costs),
        mean_relays: Estimate::from_samples(&relays),
        mean_objective: Estimate::from_samples(&objective),
        lambda,
        episodes,
        seed,
    })
}
