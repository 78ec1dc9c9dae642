//! Social Force dynamics.
//!
//! Every force is an acceleration (m/s²). The repulsion of pedestrian β on
//! pedestrian α points along the unit vector from β to α; angles such as the
//! anisotropy angle are measured between α's direction of motion and the
//! direction from α towards β, so `0` means "β straight ahead".

use std::fmt;
use std::str::FromStr;

use crowdcal_core::Vec2;
use rayon::prelude::*;

use crate::{Result, SimError};

pub const DEFAULT_RADIUS: f64 = 0.25;
pub const DEFAULT_RELAXATION_TIME: f64 = 0.5;
pub const DEFAULT_ANISOTROPY: f64 = 0.3;
pub const DEFAULT_V_REL_FLOOR: f64 = 0.05;
pub const DEFAULT_DT: f64 = 1.0 / 30.0;
/// Speeds are capped at this multiple of the desired speed.
pub const SPEED_CAP_FACTOR: f64 = 1.3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Agent {
    pub id: u32,
    pub position: Vec2,
    pub velocity: Vec2,
    pub desired_speed: f64,
    pub goal: Vec2,
    pub radius: f64,
    pub relaxation_time: f64,
}

impl Agent {
    /// Agent at rest with the default radius and relaxation time.
    pub fn new(id: u32, position: Vec2, goal: Vec2, desired_speed: f64) -> Self {
        Self {
            id,
            position,
            velocity: Vec2::ZERO,
            desired_speed,
            goal,
            radius: DEFAULT_RADIUS,
            relaxation_time: DEFAULT_RELAXATION_TIME,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(SimError::Agent { id: self.id, msg: msg.to_string() });
        if !(self.position.is_finite() && self.velocity.is_finite() && self.goal.is_finite()) {
            return bad("non-finite state");
        }
        if !(self.desired_speed > 0.0 && self.desired_speed.is_finite()) {
            return bad("desired speed must be positive");
        }
        if !(self.relaxation_time > 0.0 && self.relaxation_time.is_finite()) {
            return bad("relaxation time must be positive");
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return bad("radius must be positive");
        }
        Ok(())
    }

    /// Unit vector towards the goal; `None` once the agent stands on it.
    pub fn desired_direction(&self) -> Option<Vec2> {
        (self.goal - self.position).normalized()
    }

    /// Direction of motion, or the desired direction for an agent at rest.
    pub fn heading(&self) -> Option<Vec2> {
        self.velocity.normalized().or_else(|| self.desired_direction())
    }

    pub fn distance_to_goal(&self) -> f64 {
        self.position.distance(self.goal)
    }

    pub fn as_neighbor(&self) -> Neighbor {
        Neighbor { position: self.position, velocity: self.velocity, radius: self.radius }
    }
}

/// What an agent needs to know about another pedestrian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub position: Vec2,
    pub velocity: Vec2,
    pub radius: f64,
}

impl Neighbor {
    pub fn standing(position: Vec2, radius: f64) -> Self {
        Self { position, velocity: Vec2::ZERO, radius }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Obstacle {
    Point(Vec2),
    Segment(Vec2, Vec2),
}

impl Obstacle {
    pub fn closest_point(&self, p: Vec2) -> Vec2 {
        match *self {
            Obstacle::Point(q) => q,
            Obstacle::Segment(a, b) => {
                let ab = b - a;
                let len2 = ab.norm_squared();
                if len2 == 0.0 {
                    return a;
                }
                let s = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
                a + ab * s
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        match *self {
            Obstacle::Point(q) => q.is_finite(),
            Obstacle::Segment(a, b) => a.is_finite() && b.is_finite(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    /// Circular repulsion.
    A,
    /// Elliptical, velocity-dependent repulsion.
    B,
    /// Deceleration plus evasive component.
    C,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::A, Variant::B, Variant::C];

    pub fn parameter_names(self) -> &'static [&'static str] {
        match self {
            Variant::A | Variant::B => &["a", "b"],
            Variant::C => &["a_n", "b_n", "c_n", "a_p", "b_p", "c_p"],
        }
    }

    /// Search box used by calibration. Lower bounds stand in for the open
    /// interval at zero.
    pub fn bounds(self) -> Vec<(f64, f64)> {
        match self {
            Variant::A | Variant::B => vec![(1e-3, 10.0), (1e-3, 3.0)],
            Variant::C => vec![(1e-3, 10.0); 6],
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Variant::A => "A",
            Variant::B => "B",
            Variant::C => "C",
        };
        f.write_str(s)
    }
}

impl FromStr for Variant {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(Variant::A),
            "B" | "b" => Ok(Variant::B),
            "C" | "c" => Ok(Variant::C),
            other => Err(SimError::Params(format!("unknown model variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Repulsion {
    Circular { a: f64, b: f64 },
    Elliptical { a: f64, b: f64 },
    Split { a_n: f64, b_n: f64, c_n: f64, a_p: f64, b_p: f64, c_p: f64 },
}

impl Repulsion {
    pub fn variant(&self) -> Variant {
        match self {
            Repulsion::Circular { .. } => Variant::A,
            Repulsion::Elliptical { .. } => Variant::B,
            Repulsion::Split { .. } => Variant::C,
        }
    }

    /// Coefficients in the order of [`Variant::parameter_names`].
    pub fn to_vec(&self) -> Vec<f64> {
        match *self {
            Repulsion::Circular { a, b } | Repulsion::Elliptical { a, b } => vec![a, b],
            Repulsion::Split { a_n, b_n, c_n, a_p, b_p, c_p } => vec![a_n, b_n, c_n, a_p, b_p, c_p],
        }
    }

    pub fn from_slice(variant: Variant, v: &[f64]) -> Result<Self> {
        let want = variant.parameter_names().len();
        if v.len() != want {
            return Err(SimError::Params(format!(
                "variant {variant} takes {want} coefficients, got {}",
                v.len()
            )));
        }
        let r = match variant {
            Variant::A => Repulsion::Circular { a: v[0], b: v[1] },
            Variant::B => Repulsion::Elliptical { a: v[0], b: v[1] },
            Variant::C => Repulsion::Split {
                a_n: v[0],
                b_n: v[1],
                c_n: v[2],
                a_p: v[3],
                b_p: v[4],
                c_p: v[5],
            },
        };
        Ok(r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub repulsion: Repulsion,
    /// Weight λ given to pedestrians directly behind; 1 is isotropic.
    pub anisotropy: f64,
    /// Integration step, also the look-ahead of the elliptical variant.
    pub dt: f64,
    /// Floor ε on the relative speed in the split variant.
    pub v_rel_floor: f64,
    /// Use `exp(-(r_α + r_β - ‖d‖)/b)` for the circular variant. That form
    /// grows with distance and exists only for comparison runs.
    pub printed_exponent_sign: bool,
}

impl ModelParams {
    pub fn new(repulsion: Repulsion) -> Self {
        Self {
            repulsion,
            anisotropy: DEFAULT_ANISOTROPY,
            dt: DEFAULT_DT,
            v_rel_floor: DEFAULT_V_REL_FLOOR,
            printed_exponent_sign: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let coeffs = self.repulsion.to_vec();
        if coeffs.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(SimError::Params(format!("repulsion coefficients must be positive: {coeffs:?}")));
        }
        if !(0.0..=1.0).contains(&self.anisotropy) {
            return Err(SimError::Params(format!("anisotropy must lie in [0, 1], got {}", self.anisotropy)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SimError::Params(format!("time step must be positive, got {}", self.dt)));
        }
        if !(self.v_rel_floor > 0.0 && self.v_rel_floor.is_finite()) {
            return Err(SimError::Params(format!("relative speed floor must be positive, got {}", self.v_rel_floor)));
        }
        Ok(())
    }
}

/// Relaxation of the current velocity towards the desired one. Zero for an
/// agent standing on its goal.
pub fn driving_force(agent: &Agent) -> Vec2 {
    match agent.desired_direction() {
        Some(e) => (e * agent.desired_speed - agent.velocity) / agent.relaxation_time,
        None => Vec2::ZERO,
    }
}

/// `λ + (1 - λ)(1 + cos φ)/2`.
pub fn anisotropy_weight(phi: f64, lambda: f64) -> f64 {
    weight_from_cos(phi.cos(), lambda)
}

fn weight_from_cos(cos_phi: f64, lambda: f64) -> f64 {
    lambda + (1.0 - lambda) * (1.0 + cos_phi) / 2.0
}

/// Semi-minor axis of the elliptical variant for separation `d` (from β to
/// α) and relative velocity `v_β - v_α`.
pub fn semi_minor_axis(d: Vec2, relative_velocity: Vec2, dt: f64) -> f64 {
    let y = relative_velocity * dt;
    let sum = d.norm() + (d - y).norm();
    0.5 * (sum * sum - y.norm_squared()).max(0.0).sqrt()
}

struct Separation {
    dist: f64,
    /// Unit vector from β to α.
    away: Vec2,
}

fn separation(alpha: &Agent, other: Vec2) -> Separation {
    let d = alpha.position - other;
    let dist = d.norm();
    let away = d
        .normalized()
        .or_else(|| alpha.heading().map(|h| -h))
        .unwrap_or(Vec2::new(1.0, 0.0));
    Separation { dist, away }
}

fn anisotropy_for(alpha: &Agent, sep: &Separation, lambda: f64) -> f64 {
    match alpha.heading() {
        Some(h) => weight_from_cos(-h.dot(sep.away), lambda),
        None => 1.0,
    }
}

fn circular(alpha: &Agent, beta: &Neighbor, a: f64, b: f64, weight: f64, params: &ModelParams) -> Vec2 {
    let sep = separation(alpha, beta.position);
    let contact = alpha.radius + beta.radius;
    let exponent = if params.printed_exponent_sign {
        -(contact - sep.dist) / b
    } else {
        (contact - sep.dist.max(contact)) / b
    };
    sep.away * (a * exponent.exp() * weight)
}

fn elliptical(alpha: &Agent, beta: &Neighbor, a: f64, b: f64, weight: f64, params: &ModelParams) -> Vec2 {
    let sep = separation(alpha, beta.position);
    let w = semi_minor_axis(alpha.position - beta.position, beta.velocity - alpha.velocity, params.dt);
    sep.away * (a * (-w / b).exp() * weight)
}

#[allow(clippy::too_many_arguments)]
fn split(
    alpha: &Agent,
    beta: &Neighbor,
    coeffs: [f64; 6],
    params: &ModelParams,
) -> Vec2 {
    let [a_n, b_n, c_n, a_p, b_p, c_p] = coeffs;
    let sep = separation(alpha, beta.position);
    let to_beta = -sep.away;
    let motion = alpha.heading().unwrap_or(to_beta);
    let theta = motion.dot(to_beta).clamp(-1.0, 1.0).acos();
    let v_rel = (beta.velocity - alpha.velocity).norm().max(params.v_rel_floor);
    let left = motion.perp();
    // β exactly ahead or behind: evade to the right
    let evade = if left.dot(to_beta) < 0.0 { left } else { -left };
    let decel = a_n * (-b_n * theta * theta / v_rel - c_n * sep.dist).exp();
    let evasive = a_p * (-b_p * theta / v_rel - c_p * sep.dist).exp();
    -motion * decel + evade * evasive
}

/// Circular repulsion of β on α with strength `a` and range `b`,
/// including the anisotropy weight. Overlapping agents feel the contact
/// magnitude.
pub fn repulsive_a(alpha: &Agent, beta: &Neighbor, a: f64, b: f64, params: &ModelParams) -> Vec2 {
    let w = anisotropy_for(alpha, &separation(alpha, beta.position), params.anisotropy);
    circular(alpha, beta, a, b, w, params)
}

/// Elliptical repulsion of β on α, including the anisotropy weight.
pub fn repulsive_b(alpha: &Agent, beta: &Neighbor, a: f64, b: f64, params: &ModelParams) -> Vec2 {
    let w = anisotropy_for(alpha, &separation(alpha, beta.position), params.anisotropy);
    elliptical(alpha, beta, a, b, w, params)
}

/// Split repulsion: a deceleration opposite α's motion plus an evasive
/// push perpendicular to it, away from β.
pub fn repulsive_c(alpha: &Agent, beta: &Neighbor, coeffs: [f64; 6], params: &ModelParams) -> Vec2 {
    split(alpha, beta, coeffs, params)
}

/// Repulsion of β on α under the configured variant.
pub fn pedestrian_force(alpha: &Agent, beta: &Neighbor, params: &ModelParams) -> Vec2 {
    match params.repulsion {
        Repulsion::Circular { a, b } => repulsive_a(alpha, beta, a, b, params),
        Repulsion::Elliptical { a, b } => repulsive_b(alpha, beta, a, b, params),
        Repulsion::Split { a_n, b_n, c_n, a_p, b_p, c_p } => {
            repulsive_c(alpha, beta, [a_n, b_n, c_n, a_p, b_p, c_p], params)
        }
    }
}

/// Obstacle repulsion: the closest obstacle point acts as a motionless,
/// zero-radius pedestrian. No anisotropy.
pub fn obstacle_force(alpha: &Agent, obstacle: &Obstacle, params: &ModelParams) -> Vec2 {
    let phantom = Neighbor::standing(obstacle.closest_point(alpha.position), 0.0);
    match params.repulsion {
        Repulsion::Circular { a, b } => circular(alpha, &phantom, a, b, 1.0, params),
        Repulsion::Elliptical { a, b } => elliptical(alpha, &phantom, a, b, 1.0, params),
        Repulsion::Split { a_n, b_n, c_n, a_p, b_p, c_p } => {
            split(alpha, &phantom, [a_n, b_n, c_n, a_p, b_p, c_p], params)
        }
    }
}

/// Driving force plus all pedestrian and obstacle repulsions.
pub fn total_force<'a>(
    alpha: &Agent,
    neighbors: impl IntoIterator<Item = &'a Neighbor>,
    obstacles: &[Obstacle],
    params: &ModelParams,
) -> Vec2 {
    let mut f = driving_force(alpha);
    for beta in neighbors {
        f += pedestrian_force(alpha, beta, params);
    }
    for o in obstacles {
        f += obstacle_force(alpha, o, params);
    }
    f
}

/// One semi-implicit Euler step: velocity first, then position with the
/// new velocity. The speed is capped at [`SPEED_CAP_FACTOR`]·v⁰.
pub fn integrate(agent: &mut Agent, force: Vec2, dt: f64) {
    agent.velocity += force * dt;
    let cap = SPEED_CAP_FACTOR * agent.desired_speed;
    let speed = agent.velocity.norm();
    if speed > cap {
        agent.velocity = agent.velocity * (cap / speed);
    }
    agent.position += agent.velocity * dt;
}

/// Agents, people standing still and walls.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scene {
    pub agents: Vec<Agent>,
    /// Pedestrians who keep their place. They repel agents but do not move.
    pub standing: Vec<Neighbor>,
    pub obstacles: Vec<Obstacle>,
    pub time: f64,
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        for a in &self.agents {
            a.validate()?;
        }
        if let Some(o) = self.obstacles.iter().find(|o| !o.is_finite()) {
            return Err(SimError::Params(format!("non-finite obstacle {o:?}")));
        }
        Ok(())
    }

    /// Forces on every agent at the current state.
    pub fn forces(&self, params: &ModelParams) -> Result<Vec<Vec2>> {
        let others: Vec<Neighbor> = self.agents.iter().map(Agent::as_neighbor).collect();
        self.agents
            .par_iter()
            .enumerate()
            .map(|(i, agent)| {
                let neighbors = others
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, n)| n)
                    .chain(&self.standing);
                let f = total_force(agent, neighbors, &self.obstacles, params);
                if f.is_finite() {
                    Ok(f)
                } else {
                    Err(SimError::NonFinite { id: agent.id, t: self.time })
                }
            })
            .collect()
    }

    /// Advance by `params.dt`. Forces are evaluated on the old state for all
    /// agents before anyone moves.
    pub fn step(&mut self, params: &ModelParams) -> Result<()> {
        let forces = self.forces(params)?;
        for (agent, f) in self.agents.iter_mut().zip(forces) {
            integrate(agent, f, params.dt);
        }
        self.time += params.dt;
        Ok(())
    }

    /// Parse the text scene format:
    ///
    /// ```text
    /// agent <id> <x> <y> <vx> <vy> <v0> <goal_x> <goal_y> <r> <tau>
    /// standing <x> <y> <r>
    /// segment <x1> <y1> <x2> <y2>
    /// point <x> <y>
    /// ```
    ///
    /// Blank lines and lines starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Scene> {
        let mut scene = Scene::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| SimError::Parse { line: idx + 1, msg };
            let mut fields = line.split_whitespace();
            let kind = fields.next().unwrap_or_default();
            let rest: Vec<&str> = fields.collect();
            let nums = |n: usize| -> Result<Vec<f64>> {
                if rest.len() != n {
                    return Err(err(format!("{kind} takes {n} values, got {}", rest.len())));
                }
                rest.iter()
                    .map(|s| s.parse::<f64>().map_err(|e| err(format!("{s:?}: {e}"))))
                    .collect()
            };
            match kind {
                "agent" => {
                    let v = nums(10)?;
                    if v[0] < 0.0 || v[0].fract() != 0.0 || v[0] > f64::from(u32::MAX) {
                        return Err(err(format!("bad agent id {}", rest[0])));
                    }
                    let agent = Agent {
                        id: v[0] as u32,
                        position: Vec2::new(v[1], v[2]),
                        velocity: Vec2::new(v[3], v[4]),
                        desired_speed: v[5],
                        goal: Vec2::new(v[6], v[7]),
                        radius: v[8],
                        relaxation_time: v[9],
                    };
                    agent.validate().map_err(|e| err(e.to_string()))?;
                    scene.agents.push(agent);
                }
                "standing" => {
                    let v = nums(3)?;
                    scene.standing.push(Neighbor::standing(Vec2::new(v[0], v[1]), v[2]));
                }
                "segment" => {
                    let v = nums(4)?;
                    scene.obstacles.push(Obstacle::Segment(Vec2::new(v[0], v[1]), Vec2::new(v[2], v[3])));
                }
                "point" => {
                    let v = nums(2)?;
                    scene.obstacles.push(Obstacle::Point(Vec2::new(v[0], v[1])));
                }
                other => return Err(err(format!("unknown record {other:?}"))),
            }
        }
        scene.validate()?;
        Ok(scene)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for a in &self.agents {
            out.push_str(&format!(
                "agent {} {} {} {} {} {} {} {} {} {}\n",
                a.id,
                a.position.x,
                a.position.y,
                a.velocity.x,
                a.velocity.y,
                a.desired_speed,
                a.goal.x,
                a.goal.y,
                a.radius,
                a.relaxation_time
            ));
        }
        for s in &self.standing {
            out.push_str(&format!("standing {} {} {}\n", s.position.x, s.position.y, s.radius));
        }
        for o in &self.obstacles {
            match o {
                Obstacle::Point(p) => out.push_str(&format!("point {} {}\n", p.x, p.y)),
                Obstacle::Segment(a, b) => {
                    out.push_str(&format!("segment {} {} {} {}\n", a.x, a.y, b.x, b.y))
                }
            }
        }
        out
    }
}
