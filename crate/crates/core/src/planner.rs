//! Joint-space RRT* and uniform time parameterization.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ik::{pose_error, solve_ik, DlsParams, IkError, IkStatus};
use crate::kinematics::{forward_kinematics, JointVector};
use crate::liegroup::RigidTransform;
use crate::robot_model::RobotModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerParams {
    pub max_iterations: usize,
    pub goal_bias: f64,
    /// Steering step, radians.
    pub steer_step: f64,
    /// Rewire radius scale γ in `γ (ln n / n)^(1/d)`.
    pub gamma: f64,
    pub seed: u64,
    /// Joint-space distance at which a node counts as the goal, radians.
    pub goal_tolerance: f64,
    /// Per-joint metric weights; empty means unweighted.
    pub weights: Vec<f64>,
    /// Once a solution exists, draw samples from the ellipsoid of
    /// configurations that could still shorten it (unweighted metric only).
    pub informed: bool,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            goal_bias: 0.05,
            steer_step: 0.2,
            gamma: 3.0,
            seed: 0,
            goal_tolerance: 1e-9,
            weights: Vec::new(),
            informed: true,
        }
    }
}

impl PlannerParams {
    fn validate(&self) -> Result<(), PlanError> {
        if !(0.0..=1.0).contains(&self.goal_bias) {
            return Err(PlanError::InvalidParams("goal_bias must lie in [0, 1]"));
        }
        if !(self.steer_step > 0.0) {
            return Err(PlanError::InvalidParams("steer_step must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(PlanError::InvalidParams("max_iterations must be at least 1"));
        }
        if !(self.gamma > 0.0) || !(self.goal_tolerance >= 0.0) {
            return Err(PlanError::InvalidParams("gamma and goal_tolerance must be positive"));
        }
        if self.weights.iter().any(|w| !(*w > 0.0)) {
            return Err(PlanError::InvalidParams("weights must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("{which} configuration violates the joint limits or has the wrong length")]
    OutOfLimits { which: &'static str },
    #[error("no path to the goal found within {iterations} iterations")]
    NoPathFound { iterations: usize },
    #[error("invalid planner parameters: {0}")]
    InvalidParams(&'static str),
    #[error("inverse kinematics for the goal pose ended with status {0:?}")]
    GoalNotReached(IkStatus),
    #[error(transparent)]
    Ik(#[from] IkError),
    #[error("cannot time-parameterize: {0}")]
    Parameterization(&'static str),
}

/// Ordered waypoints from start to goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointPath {
    pub waypoints: Vec<JointVector>,
}

impl JointPath {
    /// Sum of Euclidean segment lengths, radians.
    pub fn cost(&self) -> f64 {
        self.waypoints.windows(2).map(|w| (&w[1] - &w[0]).norm()).sum()
    }
}

/// Uniformly sampled joint trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointTrajectory {
    pub dt: f64,
    pub rows: Vec<JointVector>,
}

impl JointTrajectory {
    pub fn duration(&self) -> f64 {
        self.dt * (self.rows.len().saturating_sub(1)) as f64
    }
}

/// Predicate deciding whether the straight segment between two
/// configurations is free.
pub trait CollisionChecker {
    fn segment_free(&self, a: &JointVector, b: &JointVector) -> bool;
}

/// Everything is free.
#[derive(Debug, Clone, Copy, Default)]
pub struct FreeSpace;

impl CollisionChecker for FreeSpace {
    fn segment_free(&self, _: &JointVector, _: &JointVector) -> bool {
        true
    }
}

const INFORMED_ATTEMPTS: usize = 32;

#[derive(Debug, Clone)]
struct Node {
    q: JointVector,
    parent: Option<usize>,
    cost: f64,
    children: Vec<usize>,
}

/// Planner result with anytime diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanReport {
    pub path: JointPath,
    /// Best start-to-goal tree cost after every iteration (∞ before the
    /// goal is connected).
    pub best_cost_history: Vec<f64>,
    pub tree_size: usize,
}

struct Tree<'a> {
    nodes: Vec<Node>,
    /// Node configurations, row-major, for cache-friendly scans.
    coords: Vec<f64>,
    dof: usize,
    weights: &'a [f64],
}

impl Tree<'_> {
    fn dist_slices(&self, a: &[f64], b: &[f64]) -> f64 {
        if self.weights.is_empty() {
            a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
        } else {
            a.iter()
                .zip(b)
                .zip(self.weights)
                .map(|((x, y), w)| w * (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        }
    }

    fn dist(&self, a: &JointVector, b: &JointVector) -> f64 {
        self.dist_slices(a.as_slice(), b.as_slice())
    }

    fn push(&mut self, node: Node) -> usize {
        self.coords.extend_from_slice(node.q.as_slice());
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    fn nearest(&self, q: &JointVector) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, c) in self.coords.chunks_exact(self.dof).enumerate() {
            let d = self.dist_slices(c, q.as_slice());
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }

    fn near(&self, q: &JointVector, radius: f64, out: &mut Vec<(usize, f64)>) {
        out.clear();
        for (i, c) in self.coords.chunks_exact(self.dof).enumerate() {
            let d = self.dist_slices(c, q.as_slice());
            if d <= radius {
                out.push((i, d));
            }
        }
    }

    fn reparent(&mut self, child: usize, parent: usize, cost: f64) {
        if let Some(old) = self.nodes[child].parent {
            self.nodes[old].children.retain(|c| *c != child);
        }
        self.nodes[child].parent = Some(parent);
        self.nodes[parent].children.push(child);
        let delta = self.nodes[child].cost - cost;
        self.nodes[child].cost = cost;
        let mut stack = self.nodes[child].children.clone();
        while let Some(i) = stack.pop() {
            self.nodes[i].cost -= delta;
            stack.extend_from_slice(&self.nodes[i].children);
        }
    }

    fn branch(&self, mut i: usize) -> Vec<JointVector> {
        let mut out = vec![self.nodes[i].q.clone()];
        while let Some(p) = self.nodes[i].parent {
            out.push(self.nodes[p].q.clone());
            i = p;
        }
        out.reverse();
        out
    }
}

/// Uniform sampler over `{x : |x − a| + |x − b| ≤ c}` built from a unit-ball
/// sample, an axis scaling and the Householder reflection taking `e₁` onto
/// the focal axis.
struct Ellipsoid {
    center: JointVector,
    reflect: Option<JointVector>,
    c_min: f64,
}

impl Ellipsoid {
    fn new(a: &JointVector, b: &JointVector) -> Self {
        let c_min = (b - a).norm();
        let axis = (b - a) / c_min;
        let mut v = -axis.clone();
        v[0] += 1.0;
        let reflect = (v.norm() > 1e-12).then(|| v.normalize());
        Self {
            center: (a + b) * 0.5,
            reflect,
            c_min,
        }
    }

    fn sample(&self, c_best: f64, rng: &mut ChaCha8Rng) -> JointVector {
        let d = self.center.len();
        let mut x = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let radius = rng.random::<f64>().powf(1.0 / d as f64) / x.norm();
        x *= radius;
        let transverse = (c_best * c_best - self.c_min * self.c_min).max(0.0).sqrt() / 2.0;
        x[0] *= c_best / 2.0;
        for i in 1..d {
            x[i] *= transverse;
        }
        if let Some(v) = &self.reflect {
            let k = 2.0 * v.dot(&x);
            x.axpy(-k, v, 1.0);
        }
        &self.center + x
    }
}

fn steer(from: &JointVector, to: &JointVector, step: f64, dist: f64) -> JointVector {
    if dist <= step {
        to.clone()
    } else {
        from + (to - from) * (step / dist)
    }
}

/// Split every segment so consecutive waypoints are at most `step` apart.
pub fn densify(waypoints: &[JointVector], step: f64) -> Vec<JointVector> {
    let mut out = Vec::with_capacity(waypoints.len());
    if let Some(first) = waypoints.first() {
        out.push(first.clone());
    }
    for w in waypoints.windows(2) {
        let len = (&w[1] - &w[0]).norm();
        let pieces = ((len / step) - 1e-12).ceil().max(1.0) as usize;
        for k in 1..pieces {
            out.push(&w[0] + (&w[1] - &w[0]) * (k as f64 / pieces as f64));
        }
        out.push(w[1].clone());
    }
    out
}

/// Obstacle-free RRT* between two in-limit configurations.
pub fn plan(
    model: &RobotModel,
    start: &JointVector,
    goal: &JointVector,
    params: &PlannerParams,
) -> Result<JointPath, PlanError> {
    plan_detailed(model, start, goal, params, &FreeSpace).map(|r| r.path)
}

/// RRT* with a caller-supplied collision predicate and anytime history.
///
/// The returned path is densified so consecutive waypoints are no more than
/// one steering step apart.
pub fn plan_detailed(
    model: &RobotModel,
    start: &JointVector,
    goal: &JointVector,
    params: &PlannerParams,
    checker: &dyn CollisionChecker,
) -> Result<PlanReport, PlanError> {
    params.validate()?;
    let dof = model.dof();
    if start.len() != dof || !model.within_limits(start) {
        return Err(PlanError::OutOfLimits { which: "start" });
    }
    if goal.len() != dof || !model.within_limits(goal) {
        return Err(PlanError::OutOfLimits { which: "goal" });
    }
    if !params.weights.is_empty() && params.weights.len() != dof {
        return Err(PlanError::InvalidParams("weights length must equal the joint count"));
    }
    let mut tree = Tree {
        nodes: Vec::new(),
        coords: Vec::new(),
        dof,
        weights: &params.weights,
    };
    tree.push(Node {
        q: start.clone(),
        parent: None,
        cost: 0.0,
        children: Vec::new(),
    });
    if tree.dist(start, goal) <= params.goal_tolerance {
        return Ok(PlanReport {
            path: JointPath {
                waypoints: vec![start.clone()],
            },
            best_cost_history: vec![0.0],
            tree_size: 1,
        });
    }

    let lower = model.lower_limits();
    let upper = model.upper_limits();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let step = params.steer_step;
    let d = dof as f64;
    let mut goal_node: Option<usize> = None;
    let mut history = Vec::with_capacity(params.max_iterations);
    let mut neighbors = Vec::new();
    let ellipsoid = (params.informed && params.weights.is_empty()).then(|| Ellipsoid::new(start, goal));
    let uniform = |rng: &mut ChaCha8Rng| DVector::from_fn(dof, |i, _| rng.random_range(lower[i]..=upper[i]));

    for _ in 0..params.max_iterations {
        let sample = if rng.random::<f64>() < params.goal_bias {
            goal.clone()
        } else {
            match (&ellipsoid, goal_node) {
                (Some(e), Some(g)) => {
                    let c_best = tree.nodes[g].cost;
                    let mut s = None;
                    for _ in 0..INFORMED_ATTEMPTS {
                        let x = e.sample(c_best, &mut rng);
                        if model.within_limits(&x) {
                            s = Some(x);
                            break;
                        }
                    }
                    s.unwrap_or_else(|| uniform(&mut rng))
                }
                _ => uniform(&mut rng),
            }
        };
        let near_idx = tree.nearest(&sample);
        let dn = tree.dist(&tree.nodes[near_idx].q, &sample);
        let q_new = steer(&tree.nodes[near_idx].q, &sample, step, dn);
        if dn == 0.0 || !checker.segment_free(&tree.nodes[near_idx].q, &q_new) {
            history.push(goal_node.map_or(f64::INFINITY, |g| tree.nodes[g].cost));
            continue;
        }

        let n = (tree.nodes.len() + 1) as f64;
        let radius = (params.gamma * (n.ln() / n).powf(1.0 / d)).min(4.0 * step);
        tree.near(&q_new, radius, &mut neighbors);

        let mut parent = near_idx;
        let mut best = tree.nodes[near_idx].cost + tree.dist(&tree.nodes[near_idx].q, &q_new);
        for &(i, di) in &neighbors {
            let c = tree.nodes[i].cost + di;
            if c < best && checker.segment_free(&tree.nodes[i].q, &q_new) {
                best = c;
                parent = i;
            }
        }
        let new_idx = tree.push(Node {
            q: q_new.clone(),
            parent: Some(parent),
            cost: best,
            children: Vec::new(),
        });
        tree.nodes[parent].children.push(new_idx);

        for &(i, di) in &neighbors {
            if i == parent || tree.nodes[i].parent.is_none() {
                continue;
            }
            let c = best + di;
            if c < tree.nodes[i].cost && checker.segment_free(&q_new, &tree.nodes[i].q) {
                tree.reparent(i, new_idx, c);
            }
        }

        let dg = tree.dist(&q_new, goal);
        if dg <= params.goal_tolerance {
            match goal_node {
                Some(g) if tree.nodes[g].cost <= best => {}
                _ => goal_node = Some(new_idx),
            }
        } else if dg <= 2.0 * step && checker.segment_free(&q_new, goal) {
            let c = best + dg;
            match goal_node {
                None => {
                    let g = tree.push(Node {
                        q: goal.clone(),
                        parent: Some(new_idx),
                        cost: c,
                        children: Vec::new(),
                    });
                    tree.nodes[new_idx].children.push(g);
                    goal_node = Some(g);
                }
                Some(g) if c < tree.nodes[g].cost && tree.nodes[g].parent.is_some() => {
                    tree.reparent(g, new_idx, c);
                }
                _ => {}
            }
        }
        history.push(goal_node.map_or(f64::INFINITY, |g| tree.nodes[g].cost));
    }

    let g = goal_node.ok_or(PlanError::NoPathFound {
        iterations: params.max_iterations,
    })?;
    let mut waypoints = tree.branch(g);
    if let Some(last) = waypoints.last_mut() {
        *last = goal.clone();
    }
    Ok(PlanReport {
        path: JointPath {
            waypoints: densify(&waypoints, step),
        },
        best_cost_history: history,
        tree_size: tree.nodes.len(),
    })
}

/// Solve IK for `target` and return the converged joint vector for use as a
/// planner goal.
pub fn goal_from_pose(
    model: &RobotModel,
    target: &RigidTransform,
    seed: &JointVector,
    ik: &DlsParams,
) -> Result<JointVector, PlanError> {
    let out = solve_ik(model, target, seed, ik)?;
    if out.status != IkStatus::Converged {
        return Err(PlanError::GoalNotReached(out.status));
    }
    let reached = forward_kinematics(model, &out.q).map_err(IkError::from)?;
    debug_assert!(pose_error(target, &reached).within(&ik.tolerance));
    Ok(out.q)
}

/// Resample a path at constant joint-space speed.
///
/// The number of intervals is `ceil(L / (speed · dt))`, so the realised
/// speed never exceeds `max_speed`. A single-waypoint path becomes a
/// two-tick hold.
pub fn time_parameterize(
    path: &JointPath,
    dt: f64,
    max_speed: f64,
) -> Result<JointTrajectory, PlanError> {
    if !(dt > 0.0) || !(max_speed > 0.0) {
        return Err(PlanError::Parameterization("dt and speed must be positive"));
    }
    let wp = &path.waypoints;
    let Some(first) = wp.first() else {
        return Err(PlanError::Parameterization("empty path"));
    };
    let mut arc = vec![0.0];
    for w in wp.windows(2) {
        arc.push(arc.last().unwrap() + (&w[1] - &w[0]).norm());
    }
    let total = *arc.last().unwrap();
    if total == 0.0 {
        return Ok(JointTrajectory {
            dt,
            rows: vec![first.clone(), first.clone()],
        });
    }
    let intervals = ((total / max_speed / dt) - 1e-9).ceil().max(1.0) as usize;
    let mut rows = Vec::with_capacity(intervals + 1);
    let mut seg = 0;
    for k in 0..=intervals {
        if k == intervals {
            rows.push(wp.last().unwrap().clone());
            break;
        }
        let s = total * k as f64 / intervals as f64;
        while seg + 1 < arc.len() - 1 && arc[seg + 1] < s {
            seg += 1;
        }
        let len = arc[seg + 1] - arc[seg];
        let u = if len > 0.0 { (s - arc[seg]) / len } else { 0.0 };
        rows.push(&wp[seg] + (&wp[seg + 1] - &wp[seg]) * u.clamp(0.0, 1.0));
    }
    Ok(JointTrajectory { dt, rows })
}

/// `tick,q1..qn` with nine decimals.
pub fn joint_rows_csv(rows: &[JointVector]) -> String {
    let n = rows.first().map_or(0, |r| r.len());
    let mut out = String::from("tick");
    for i in 1..=n {
        out.push_str(&format!(",q{i}"));
    }
    out.push('\n');
    for (t, r) in rows.iter().enumerate() {
        out.push_str(&t.to_string());
        for x in r.iter() {
            out.push_str(&format!(",{x:.9}"));
        }
        out.push('\n');
    }
    out
}
