use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EnvError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    PointMass,
    Arm,
}

/// Goal instance of a task; the variant is the task kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Task {
    Reach {
        position: [f64; 2],
        #[serde(default = "down")]
        orientation: f64,
    },
    ForceAt {
        position: [f64; 2],
        #[serde(default = "down")]
        orientation: f64,
        #[serde(default = "default_force")]
        force: f64,
    },
    Circle {
        center: [f64; 2],
        radius: f64,
        #[serde(default = "default_speed")]
        speed: f64,
        #[serde(default = "down")]
        orientation: f64,
    },
    /// Back-and-forth sliding along a table segment while pressing.
    SlideForce {
        start: [f64; 2],
        end: [f64; 2],
        #[serde(default = "default_speed")]
        speed: f64,
        #[serde(default = "down")]
        orientation: f64,
        #[serde(default = "default_force")]
        force: f64,
    },
}

fn down() -> f64 {
    -FRAC_PI_2
}

fn default_force() -> f64 {
    10.0
}

fn default_speed() -> f64 {
    0.5
}

/// Named task families, as used on the command line and in configs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskFamily {
    PointReach,
    Reach,
    ForceAt,
    Circle,
    SlideForce,
}

impl TaskFamily {
    pub const ALL: [TaskFamily; 5] = [
        TaskFamily::PointReach,
        TaskFamily::Reach,
        TaskFamily::ForceAt,
        TaskFamily::Circle,
        TaskFamily::SlideForce,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskFamily::PointReach => "point-reach",
            TaskFamily::Reach => "reach",
            TaskFamily::ForceAt => "force-at",
            TaskFamily::Circle => "circle",
            TaskFamily::SlideForce => "slide-force",
        }
    }

    pub fn env(self) -> EnvKind {
        match self {
            TaskFamily::PointReach => EnvKind::PointMass,
            _ => EnvKind::Arm,
        }
    }
}

impl fmt::Display for TaskFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskFamily {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| {
                let valid: Vec<_> = TaskFamily::ALL.iter().map(|f| f.name()).collect();
                EnvError::UnknownTask {
                    name: s.to_string(),
                    valid: valid.join(", "),
                }
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardWeights {
    pub position: f64,
    pub orientation: f64,
    pub contact_bonus: f64,
    pub force: f64,
    pub path: f64,
    pub velocity: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            position: 1.0,
            orientation: 0.5,
            contact_bonus: 2.0,
            force: 0.05,
            path: 1.0,
            velocity: 0.2,
        }
    }
}

/// Everything that defines one task instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub env: EnvKind,
    pub task: Task,
    #[serde(default)]
    pub weights: RewardWeights,
    /// Cumulative episode reward at or above which the task counts as solved.
    pub success_threshold: f64,
    /// Episode length in control steps.
    pub horizon: usize,
    #[serde(default)]
    pub instance: u64,
}

impl TaskSpec {
    pub fn family(&self) -> TaskFamily {
        match (&self.env, &self.task) {
            (EnvKind::PointMass, _) => TaskFamily::PointReach,
            (_, Task::Reach { .. }) => TaskFamily::Reach,
            (_, Task::ForceAt { .. }) => TaskFamily::ForceAt,
            (_, Task::Circle { .. }) => TaskFamily::Circle,
            (_, Task::SlideForce { .. }) => TaskFamily::SlideForce,
        }
    }

    /// Short identifier, e.g. `force-at/3`.
    pub fn id(&self) -> String {
        format!("{}/{}", self.family(), self.instance)
    }

    pub fn validate(&self, reach: f64) -> Result<(), EnvError> {
        let bad = |msg: String| Err(EnvError::InvalidSpec(msg));
        if !self.success_threshold.is_finite() {
            return bad(format!("{}: success threshold must be finite", self.id()));
        }
        if self.horizon == 0 {
            return bad(format!("{}: horizon must be at least 1", self.id()));
        }
        if self.env == EnvKind::PointMass && !matches!(self.task, Task::Reach { .. }) {
            return bad("the point mass only supports reach tasks".into());
        }
        if self.env == EnvKind::Arm {
            let inside = |p: &[f64; 2]| p[0].hypot(p[1]) <= reach;
            let ok = match &self.task {
                Task::Reach { position, .. } | Task::ForceAt { position, .. } => inside(position),
                Task::Circle { center, radius, .. } => {
                    *radius > 0.0 && center[0].hypot(center[1]) + radius <= reach
                }
                Task::SlideForce { start, end, .. } => inside(start) && inside(end) && start != end,
            };
            if !ok {
                return bad(format!("{}: goal geometry outside the reachable workspace", self.id()));
            }
        }
        Ok(())
    }
}

/// End-effector quantities the rewards depend on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EeReading {
    pub position: [f64; 2],
    pub orientation: f64,
    pub velocity: [f64; 2],
    pub in_contact: bool,
    pub normal_force: f64,
}

/// Signed contribution of each reward component.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardTerms {
    pub position: f64,
    pub orientation: f64,
    pub velocity: f64,
    pub contact_bonus: f64,
    pub force: f64,
}

impl RewardTerms {
    pub fn total(&self) -> f64 {
        self.position + self.orientation + self.velocity + self.contact_bonus + self.force
    }
}

/// Angle wrapped to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut x = (a + PI).rem_euclid(2.0 * PI) - PI;
    if x <= -PI {
        x += 2.0 * PI;
    }
    x
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Desired velocity on a circle: counter-clockwise tangent at the nearest point.
pub fn circle_reference(center: [f64; 2], radius: f64, speed: f64, p: [f64; 2]) -> ([f64; 2], [f64; 2]) {
    let d = [p[0] - center[0], p[1] - center[1]];
    let n = d[0].hypot(d[1]);
    let u = if n > 1e-12 { [d[0] / n, d[1] / n] } else { [1.0, 0.0] };
    let nearest = [center[0] + radius * u[0], center[1] + radius * u[1]];
    (nearest, [-u[1] * speed, u[0] * speed])
}

/// Nearest segment point and desired sliding velocity.
///
/// Past either end the desired direction points back along the segment;
/// in between it follows the current direction of travel, so the motion
/// oscillates between the endpoints.
pub fn slide_reference(start: [f64; 2], end: [f64; 2], speed: f64, p: [f64; 2], v: [f64; 2]) -> ([f64; 2], [f64; 2]) {
    let len = dist(start, end);
    let u = [(end[0] - start[0]) / len, (end[1] - start[1]) / len];
    let s = (p[0] - start[0]) * u[0] + (p[1] - start[1]) * u[1];
    let sc = s.clamp(0.0, len);
    let nearest = [start[0] + sc * u[0], start[1] + sc * u[1]];
    let along = v[0] * u[0] + v[1] * u[1];
    let dir = if s >= len {
        -1.0
    } else if s <= 0.0 {
        1.0
    } else if along != 0.0 {
        along.signum()
    } else if s < 0.5 * len {
        1.0
    } else {
        -1.0
    };
    (nearest, [dir * speed * u[0], dir * speed * u[1]])
}

/// Per-step reward and its breakdown.
pub fn task_reward(spec: &TaskSpec, ee: &EeReading) -> (f64, RewardTerms) {
    let w = &spec.weights;
    let mut t = RewardTerms::default();
    let orient = |target: f64| -w.orientation * wrap_angle(ee.orientation - target).abs();
    let force_terms = |t: &mut RewardTerms, target: f64| {
        if ee.in_contact {
            t.contact_bonus = w.contact_bonus;
            t.force = -w.force * (ee.normal_force - target).abs();
        }
    };
    match (&spec.env, &spec.task) {
        (EnvKind::PointMass, Task::Reach { position, .. }) => {
            t.position = -w.position * dist(ee.position, *position);
        }
        (_, Task::Reach { position, orientation }) => {
            t.position = -w.position * dist(ee.position, *position);
            t.orientation = orient(*orientation);
        }
        (_, Task::ForceAt {
            position,
            orientation,
            force,
        }) => {
            t.position = -w.position * dist(ee.position, *position);
            t.orientation = orient(*orientation);
            force_terms(&mut t, *force);
        }
        (_, Task::Circle {
            center,
            radius,
            speed,
            orientation,
        }) => {
            let (_, v_ref) = circle_reference(*center, *radius, *speed, ee.position);
            t.position = -w.path * (dist(ee.position, *center) - radius).abs();
            t.velocity = -w.velocity * dist(ee.velocity, v_ref);
            t.orientation = orient(*orientation);
        }
        (_, Task::SlideForce {
            start,
            end,
            speed,
            orientation,
            force,
        }) => {
            let (nearest, v_ref) = slide_reference(*start, *end, *speed, ee.position, ee.velocity);
            t.position = -w.path * dist(ee.position, nearest);
            t.velocity = -w.velocity * dist(ee.velocity, v_ref);
            t.orientation = orient(*orientation);
            force_terms(&mut t, *force);
        }
    }
    (t.total(), t)
}

/// Inclusive success test on an episode's cumulative reward.
pub fn is_success(spec: &TaskSpec, cumulative_reward: f64) -> bool {
    cumulative_reward >= spec.success_threshold
}
