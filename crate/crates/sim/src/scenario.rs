//! Synthetic corridor with a person standing in the middle.
//!
//! Pedestrians enter from both ends at random times and walk to a point on
//! the opposite end while the chosen model moves them. Every walker is
//! recorded from entry until it reaches its goal, one sample per step.

use crowdcal_core::{Point3, Trajectory, TrajectoryId, TrajectoryPoint, TrajectorySet, Vec2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};

use crate::socialforce::{Agent, ModelParams, Neighbor, Obstacle, Scene, DEFAULT_RADIUS, DEFAULT_RELAXATION_TIME};
use crate::stats::Gate;
use crate::{Result, SimError};

/// Standing people are recorded as `standing1`, `standing2`, ...
pub const STANDING_PREFIX: &str = "standing";
const HEAD_HEIGHT: f64 = 1.7;

#[derive(Debug, Clone, PartialEq)]
pub struct CorridorScenario {
    /// Walkers enter at x = -length/2 or +length/2.
    pub length: f64,
    /// Walls run along y = ±width/2.
    pub width: f64,
    /// No walker enters after this time (s).
    pub duration: f64,
    /// Mean arrivals per second at each entry end.
    pub arrival_rate: f64,
    /// Walkers enter at both ends, otherwise only at the left one.
    pub two_way: bool,
    pub speed_mean: f64,
    pub speed_sd: f64,
    pub speed_range: (f64, f64),
    /// Entry and goal offsets are drawn from [-spread, spread].
    pub lateral_spread: f64,
    /// Keep to the right: walkers stay on their own side of the corridor
    /// with offsets in [inner, spread] instead of [-spread, spread].
    pub keep_right: Option<f64>,
    /// People standing still for the whole run.
    pub standing: Vec<Vec2>,
    pub frame_rate: f64,
    pub radius: f64,
    pub relaxation_time: f64,
    /// A walker this close to its goal leaves the scene (m).
    pub arrival_radius: f64,
    /// Walkers still walking after this long are taken out (s).
    pub max_walk_time: f64,
    /// Gate lines at x = ±gate_offset for walking times.
    pub gate_offset: f64,
}

impl Default for CorridorScenario {
    fn default() -> Self {
        Self {
            length: 10.0,
            width: 4.0,
            duration: 300.0,
            arrival_rate: 0.1,
            two_way: true,
            speed_mean: 1.34,
            speed_sd: 0.25,
            speed_range: (0.8, 1.9),
            lateral_spread: 1.2,
            keep_right: None,
            standing: vec![Vec2::ZERO],
            frame_rate: 30.0,
            radius: DEFAULT_RADIUS,
            relaxation_time: DEFAULT_RELAXATION_TIME,
            arrival_radius: 0.1,
            max_walk_time: 60.0,
            gate_offset: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioData {
    pub set: TrajectorySet,
    pub obstacles: Vec<Obstacle>,
    pub gates: (Gate, Gate),
    /// Walkers still walking after `max_walk_time`.
    pub timed_out: Vec<TrajectoryId>,
    /// What each walker was told, in id order.
    pub walkers: Vec<WalkerSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalkerSpec {
    pub id: TrajectoryId,
    pub desired_speed: f64,
    pub goal: Vec2,
}

struct Pending {
    t: f64,
    from_left: bool,
    entry_y: f64,
    goal_y: f64,
    speed: f64,
}

struct Walker {
    agent: Agent,
    entered: f64,
    points: Vec<TrajectoryPoint>,
}

impl CorridorScenario {
    /// Sparse keep-right traffic in a long, wide corridor: walkers pass the
    /// standing person one at a time, 0.55 to 1.5 m to the side, and have
    /// several metres of free walking before their goal.
    pub fn sparse_passing() -> Self {
        Self {
            length: 14.0,
            width: 6.0,
            duration: 1300.0,
            arrival_rate: 0.02,
            lateral_spread: 1.5,
            keep_right: Some(0.55),
            ..Self::default()
        }
    }

    pub fn walls(&self) -> Vec<Obstacle> {
        let (x, y) = (self.length / 2.0 + 1.0, self.width / 2.0);
        vec![
            Obstacle::Segment(Vec2::new(-x, y), Vec2::new(x, y)),
            Obstacle::Segment(Vec2::new(-x, -y), Vec2::new(x, -y)),
        ]
    }

    pub fn gates(&self) -> (Gate, Gate) {
        let (g, y) = (self.gate_offset, self.width / 2.0);
        (Gate::new(Vec2::new(-g, -y), Vec2::new(-g, y)), Gate::new(Vec2::new(g, -y), Vec2::new(g, y)))
    }

    fn validate(&self) -> Result<()> {
        let positive = [
            self.length,
            self.width,
            self.duration,
            self.arrival_rate,
            self.frame_rate,
            self.radius,
            self.relaxation_time,
            self.arrival_radius,
            self.max_walk_time,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(SimError::Params("corridor scenario values must be positive".into()));
        }
        let (lo, hi) = self.speed_range;
        if !(lo > 0.0 && lo < hi) || self.speed_sd < 0.0 {
            return Err(SimError::Params("bad walking speed distribution".into()));
        }
        if self.lateral_spread + self.radius >= self.width / 2.0 {
            return Err(SimError::Params("lateral spread reaches the walls".into()));
        }
        if let Some(inner) = self.keep_right {
            if !(inner >= 0.0 && inner < self.lateral_spread) {
                return Err(SimError::Params("lane offset must lie in [0, lateral spread)".into()));
            }
        }
        Ok(())
    }

    fn arrivals(&self, rng: &mut ChaCha8Rng) -> Vec<Pending> {
        let gap = Exp::new(self.arrival_rate).unwrap();
        let speed = Normal::new(self.speed_mean, self.speed_sd.max(1e-12)).unwrap();
        let mut out = Vec::new();
        let ends: &[bool] = if self.two_way { &[true, false] } else { &[true] };
        for &from_left in ends {
            let mut t = gap.sample(rng);
            while t < self.duration {
                let v: f64 = loop {
                    let v = speed.sample(rng);
                    if (self.speed_range.0..=self.speed_range.1).contains(&v) {
                        break v;
                    }
                };
                let s = self.lateral_spread;
                let (entry_y, goal_y) = match self.keep_right {
                    None => (rng.random_range(-s..=s), rng.random_range(-s..=s)),
                    Some(inner) => {
                        // right of a walker heading towards +x is -y
                        let side = if from_left { -1.0 } else { 1.0 };
                        (side * rng.random_range(inner..=s), side * rng.random_range(inner..=s))
                    }
                };
                out.push(Pending { t, from_left, entry_y, goal_y, speed: v });
                t += gap.sample(rng);
            }
        }
        out.sort_by(|a, b| a.t.total_cmp(&b.t));
        out
    }
}

/// Simulate the corridor with `params` and record every walker.
pub fn generate(cfg: &CorridorScenario, params: &ModelParams, seed: u64) -> Result<ScenarioData> {
    cfg.validate()?;
    params.validate()?;
    let params = ModelParams { dt: 1.0 / cfg.frame_rate, ..*params };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pending = cfg.arrivals(&mut rng).into_iter().peekable();
    let half = cfg.length / 2.0;
    let mut scene = Scene {
        standing: cfg.standing.iter().map(|p| Neighbor::standing(*p, cfg.radius)).collect(),
        obstacles: cfg.walls(),
        ..Scene::default()
    };
    let mut walkers: Vec<Walker> = Vec::new();
    let mut done: Vec<(u32, Vec<TrajectoryPoint>)> = Vec::new();
    let mut specs = Vec::new();
    let mut timed_out = Vec::new();
    let mut next_id = 1u32;
    let mut blocked: Vec<Pending> = Vec::new();
    let mut k: u64 = 0;
    loop {
        let t = k as f64 / cfg.frame_rate;
        while pending.peek().is_some_and(|p| p.t <= t) {
            blocked.push(pending.next().unwrap());
        }
        // enter in arrival order once the entry point is clear
        let mut still_blocked = Vec::new();
        for p in blocked.drain(..) {
            let x = if p.from_left { -half } else { half };
            let entry = Vec2::new(x, p.entry_y);
            let clear = walkers.iter().all(|w| w.agent.position.distance(entry) > 2.0 * cfg.radius + 0.1);
            if !clear {
                still_blocked.push(p);
                continue;
            }
            let goal = Vec2::new(-x, p.goal_y);
            let heading = (goal - entry).normalized().unwrap();
            let agent = Agent {
                velocity: heading * p.speed,
                radius: cfg.radius,
                relaxation_time: cfg.relaxation_time,
                ..Agent::new(next_id, entry, goal, p.speed)
            };
            specs.push(WalkerSpec { id: TrajectoryId::new(format!("p{next_id:04}")), desired_speed: p.speed, goal });
            next_id += 1;
            walkers.push(Walker {
                agent,
                entered: t,
                points: vec![TrajectoryPoint::new(t, Point3::new(entry.x, entry.y, HEAD_HEIGHT))],
            });
        }
        blocked = still_blocked;

        if walkers.is_empty() && blocked.is_empty() && pending.peek().is_none() {
            break;
        }

        scene.agents = walkers.iter().map(|w| w.agent).collect();
        scene.step(&params)?;
        k += 1;
        let t_next = k as f64 / cfg.frame_rate;
        let mut remaining = Vec::with_capacity(walkers.len());
        for (mut w, agent) in walkers.into_iter().zip(&scene.agents) {
            w.agent = *agent;
            w.points.push(TrajectoryPoint::new(t_next, Point3::new(agent.position.x, agent.position.y, HEAD_HEIGHT)));
            if agent.distance_to_goal() <= cfg.arrival_radius {
                done.push((agent.id, w.points));
            } else if t_next - w.entered > cfg.max_walk_time {
                timed_out.push(TrajectoryId::new(format!("p{:04}", agent.id)));
                done.push((agent.id, w.points));
            } else {
                remaining.push(w);
            }
        }
        walkers = remaining;
    }

    let end = k as f64 / cfg.frame_rate;
    done.sort_by_key(|(id, _)| *id);
    let mut trajectories: Vec<Trajectory> = done
        .into_iter()
        .map(|(id, pts)| Trajectory::new(format!("p{id:04}"), pts))
        .collect::<std::result::Result<_, _>>()?;
    let steps = (end * cfg.frame_rate).round() as u64;
    for (i, p) in cfg.standing.iter().enumerate() {
        let pts = (0..=steps.max(1))
            .map(|k| TrajectoryPoint::new(k as f64 / cfg.frame_rate, Point3::new(p.x, p.y, HEAD_HEIGHT)))
            .collect();
        trajectories.push(Trajectory::new(format!("{STANDING_PREFIX}{}", i + 1), pts)?);
    }
    Ok(ScenarioData {
        set: TrajectorySet::new(trajectories, cfg.frame_rate)?,
        obstacles: cfg.walls(),
        gates: cfg.gates(),
        timed_out,
        walkers: specs,
    })
}
