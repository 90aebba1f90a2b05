//! Scene data model and the scenario JSON file format.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::de::{self, Deserializer};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{polyline_length, Pose2, Se2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentClass {
    Vehicle,
    Truck,
    Motorcyclist,
    Cyclist,
    Pedestrian,
}

impl AgentClass {
    pub const ALL: [AgentClass; 5] = [
        AgentClass::Vehicle,
        AgentClass::Truck,
        AgentClass::Motorcyclist,
        AgentClass::Cyclist,
        AgentClass::Pedestrian,
    ];

    /// Pedestrians move freely; every other class follows the lane network.
    pub fn road_bound(self) -> bool {
        self != AgentClass::Pedestrian
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            AgentClass::Vehicle => "vehicle",
            AgentClass::Truck => "truck",
            AgentClass::Motorcyclist => "motorcyclist",
            AgentClass::Cyclist => "cyclist",
            AgentClass::Pedestrian => "pedestrian",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaneType {
    Vehicle,
    Intersection,
    Bike,
    Bus,
}

impl LaneType {
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
    Center,
}

impl Side {
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointType {
    Centerline,
    SolidBoundary,
    DashedBoundary,
}

impl PointType {
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        self as usize
    }
}

/// One sampled state of an agent. Velocity is in the scene frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub valid: bool,
}

impl AgentState {
    pub fn xy(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentTrack {
    pub id: u64,
    pub class: AgentClass,
    pub states: Vec<AgentState>,
}

impl AgentTrack {
    pub fn road_bound(&self) -> bool {
        self.class.road_bound()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaneDef {
    pub id: u64,
    pub lane_type: LaneType,
    /// Centerline samples; headings are the tangent of the following segment.
    pub centerline: Vec<Pose2>,
    pub left_boundary: Vec<[f64; 2]>,
    pub right_boundary: Vec<[f64; 2]>,
    pub successors: Vec<u64>,
    pub predecessors: Vec<u64>,
    pub left_neighbor: Vec<u64>,
    pub right_neighbor: Vec<u64>,
    pub length: f64,
}

impl LaneDef {
    /// Build a lane from raw polylines, deriving centerline headings and length.
    pub fn from_polylines(
        id: u64,
        lane_type: LaneType,
        centerline: &[[f64; 2]],
        left_boundary: Vec<[f64; 2]>,
        right_boundary: Vec<[f64; 2]>,
    ) -> Self {
        Self {
            id,
            lane_type,
            centerline: centerline_poses(centerline),
            left_boundary,
            right_boundary,
            successors: Vec::new(),
            predecessors: Vec::new(),
            left_neighbor: Vec::new(),
            right_neighbor: Vec::new(),
            length: polyline_length(centerline),
        }
    }

    pub fn centerline_xy(&self) -> Vec<[f64; 2]> {
        self.centerline.iter().map(|p| p.xy()).collect()
    }

    /// Closed polygon: left boundary followed by the reversed right boundary.
    pub fn polygon(&self) -> Vec<[f64; 2]> {
        let mut poly = self.left_boundary.clone();
        poly.extend(self.right_boundary.iter().rev());
        poly
    }
}

fn centerline_poses(pts: &[[f64; 2]]) -> Vec<Pose2> {
    let n = pts.len();
    (0..n)
        .map(|i| {
            let (a, b) = if i + 1 < n {
                (pts[i], pts[i + 1])
            } else if n >= 2 {
                (pts[n - 2], pts[n - 1])
            } else {
                (pts[i], pts[i])
            };
            let h = if a == b {
                0.0
            } else {
                (b[1] - a[1]).atan2(b[0] - a[0])
            };
            Pose2::new(pts[i][0], pts[i][1], h)
        })
        .collect()
}

/// One polyline segment of a lane, represented by its midpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointSeg {
    pub lane_id: u64,
    pub side: Side,
    pub pose: Pose2,
    pub seg_length: f64,
    pub point_type: PointType,
    /// Position of this segment along its polyline.
    pub seg_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub id: String,
    pub agents: Vec<AgentTrack>,
    pub lanes: Vec<LaneDef>,
    pub points: Vec<PointSeg>,
    pub t_history: usize,
    pub t_future: usize,
    pub dt: f64,
}

impl Scene {
    /// Assemble a scene from agents and lanes, deriving point segments and validating.
    pub fn new(
        id: impl Into<String>,
        agents: Vec<AgentTrack>,
        lanes: Vec<LaneDef>,
        t_history: usize,
        t_future: usize,
        dt: f64,
    ) -> Result<Self> {
        let points = derive_points(&lanes);
        let scene = Scene {
            id: id.into(),
            agents,
            lanes,
            points,
            t_history,
            t_future,
            dt,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn total_steps(&self) -> usize {
        self.t_history + self.t_future
    }

    /// Index of the last observed step.
    pub fn current_step(&self) -> usize {
        self.t_history - 1
    }

    pub fn lane_index(&self) -> HashMap<u64, usize> {
        self.lanes
            .iter()
            .enumerate()
            .map(|(i, l)| (l.id, i))
            .collect()
    }

    /// Agents observed at the last history step; these receive predictions.
    pub fn predicted_agents(&self) -> Vec<usize> {
        let t = self.current_step();
        (0..self.agents.len())
            .filter(|&i| self.agents[i].states[t].valid)
            .collect()
    }

    /// Predicted agents whose whole future is observed; these are supervised and scored.
    pub fn supervised_agents(&self) -> Vec<usize> {
        let t = self.current_step();
        (0..self.agents.len())
            .filter(|&i| {
                let s = &self.agents[i].states;
                s[t].valid && s[self.t_history..].iter().all(|st| st.valid)
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_history == 0 || self.t_future == 0 {
            return Err(Error::InvalidInput(format!(
                "scene {}: t_history and t_future must be positive",
                self.id
            )));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidInput(format!(
                "scene {}: dt must be positive",
                self.id
            )));
        }
        let mut ids = HashSet::new();
        for a in &self.agents {
            if !ids.insert(a.id) {
                return Err(Error::InvalidInput(format!(
                    "scene {}: duplicate agent id {}",
                    self.id, a.id
                )));
            }
            if a.states.len() != self.total_steps() {
                return Err(Error::InvalidInput(format!(
                    "scene {}: agent {} has {} states, expected {}",
                    self.id,
                    a.id,
                    a.states.len(),
                    self.total_steps()
                )));
            }
            for s in a.states.iter().filter(|s| s.valid) {
                if !(s.x.is_finite() && s.y.is_finite() && s.vx.is_finite() && s.vy.is_finite()) {
                    return Err(Error::InvalidInput(format!(
                        "scene {}: agent {} has a non-finite state",
                        self.id, a.id
                    )));
                }
            }
        }
        let index = self.lane_index();
        if index.len() != self.lanes.len() {
            return Err(Error::InvalidInput(format!(
                "scene {}: duplicate lane ids",
                self.id
            )));
        }
        for l in &self.lanes {
            if l.centerline.len() < 2 {
                return Err(Error::InvalidInput(format!(
                    "scene {}: lane {} centerline needs at least two points",
                    self.id, l.id
                )));
            }
            if l.left_boundary.is_empty() || l.right_boundary.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "scene {}: lane {} has an empty boundary",
                    self.id, l.id
                )));
            }
            let arc = polyline_length(&l.centerline_xy());
            if (arc - l.length).abs() > 1e-6 {
                return Err(Error::InvalidInput(format!(
                    "scene {}: lane {} length {} differs from centerline arc length {}",
                    self.id, l.id, l.length, arc
                )));
            }
            let refs = l
                .successors
                .iter()
                .chain(&l.predecessors)
                .chain(&l.left_neighbor)
                .chain(&l.right_neighbor);
            for r in refs {
                if !index.contains_key(r) {
                    return Err(Error::InvalidInput(format!(
                        "scene {}: lane {} references unknown lane {}",
                        self.id, l.id, r
                    )));
                }
            }
        }
        for p in &self.points {
            if !index.contains_key(&p.lane_id) || p.seg_length <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "scene {}: invalid point segment on lane {}",
                    self.id, p.lane_id
                )));
            }
        }
        Ok(())
    }

    /// Apply a rigid transform to every scene-frame quantity.
    pub fn transformed(&self, tf: &Se2) -> Scene {
        let mut out = self.clone();
        for a in &mut out.agents {
            for s in &mut a.states {
                let [x, y] = tf.apply_point([s.x, s.y]);
                let [vx, vy] = tf.apply_vector([s.vx, s.vy]);
                *s = AgentState { x, y, vx, vy, valid: s.valid };
            }
        }
        for l in &mut out.lanes {
            for p in &mut l.centerline {
                *p = tf.apply_pose(p);
            }
            for p in l.left_boundary.iter_mut().chain(l.right_boundary.iter_mut()) {
                *p = tf.apply_point(*p);
            }
        }
        for p in &mut out.points {
            p.pose = tf.apply_pose(&p.pose);
        }
        out
    }

    pub fn from_json_str(text: &str, origin: &Path) -> Result<Scene> {
        let file: ScenarioFile =
            serde_json::from_str(text).map_err(|e| Error::parse(origin, &e))?;
        file.into_scene()
    }

    pub fn load(path: &Path) -> Result<Scene> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text, path)
    }

    pub fn to_json_string(&self) -> String {
        let file = ScenarioFile::from_scene(self);
        let mut s = serde_json::to_string(&file).expect("scenario serialization");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }
}

/// Split every lane polyline into segments, one point node per segment.
pub fn derive_points(lanes: &[LaneDef]) -> Vec<PointSeg> {
    let mut out = Vec::new();
    for lane in lanes {
        let center = lane.centerline_xy();
        let left_type = if lane.left_neighbor.is_empty() {
            PointType::SolidBoundary
        } else {
            PointType::DashedBoundary
        };
        let right_type = if lane.right_neighbor.is_empty() {
            PointType::SolidBoundary
        } else {
            PointType::DashedBoundary
        };
        let lines: [(&[[f64; 2]], Side, PointType); 3] = [
            (&center, Side::Center, PointType::Centerline),
            (&lane.left_boundary, Side::Left, left_type),
            (&lane.right_boundary, Side::Right, right_type),
        ];
        for (pts, side, point_type) in lines {
            let mut seg_index = 0;
            for w in pts.windows(2) {
                let (dx, dy) = (w[1][0] - w[0][0], w[1][1] - w[0][1]);
                let len = dx.hypot(dy);
                if len <= 1e-9 {
                    continue;
                }
                out.push(PointSeg {
                    lane_id: lane.id,
                    side,
                    pose: Pose2::new(
                        0.5 * (w[0][0] + w[1][0]),
                        0.5 * (w[0][1] + w[1][1]),
                        dy.atan2(dx),
                    ),
                    seg_length: len,
                    point_type,
                    seg_index,
                });
                seg_index += 1;
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// File format

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    id: String,
    dt: f64,
    t_history: usize,
    t_future: usize,
    agents: Vec<AgentRecord>,
    lanes: Vec<LaneRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentRecord {
    id: u64,
    class: AgentClass,
    states: Vec<StateRecord>,
}

/// `[x, y, vx, vy, valid]`; `valid` may be a boolean or 0/1.
#[derive(Debug, Clone, Copy)]
struct StateRecord(AgentState);

impl Serialize for StateRecord {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let s = &self.0;
        let mut seq = ser.serialize_seq(Some(5))?;
        seq.serialize_element(&s.x)?;
        seq.serialize_element(&s.y)?;
        seq.serialize_element(&s.vx)?;
        seq.serialize_element(&s.vy)?;
        seq.serialize_element(&s.valid)?;
        seq.end()
    }
}

impl<'de> Deserialize<'de> for StateRecord {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Flag {
            Bool(bool),
            Num(f64),
        }
        let (x, y, vx, vy, flag): (f64, f64, f64, f64, Flag) = Deserialize::deserialize(de)?;
        let valid = match flag {
            Flag::Bool(b) => b,
            Flag::Num(v) if v == 0.0 || v == 1.0 => v == 1.0,
            Flag::Num(v) => {
                return Err(de::Error::custom(format!("valid flag must be 0 or 1, got {v}")))
            }
        };
        Ok(StateRecord(AgentState { x, y, vx, vy, valid }))
    }
}

/// Neighbor reference: absent, a single id, or a list of ids.
#[derive(Debug, Clone, Default)]
struct LaneRefs(Vec<u64>);

impl Serialize for LaneRefs {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0.as_slice() {
            [] => ser.serialize_none(),
            [one] => ser.serialize_u64(*one),
            many => many.serialize(ser),
        }
    }
}

impl<'de> Deserialize<'de> for LaneRefs {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Refs {
            One(u64),
            Many(Vec<u64>),
        }
        let r: Option<Refs> = Deserialize::deserialize(de)?;
        Ok(LaneRefs(match r {
            None => Vec::new(),
            Some(Refs::One(id)) => vec![id],
            Some(Refs::Many(v)) => v,
        }))
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LaneRecord {
    id: u64,
    #[serde(rename = "type")]
    lane_type: LaneType,
    centerline: Vec<[f64; 2]>,
    left_boundary: Vec<[f64; 2]>,
    right_boundary: Vec<[f64; 2]>,
    #[serde(default)]
    successors: Vec<u64>,
    #[serde(default)]
    predecessors: Vec<u64>,
    #[serde(default)]
    left_neighbor: LaneRefs,
    #[serde(default)]
    right_neighbor: LaneRefs,
}

impl ScenarioFile {
    fn from_scene(scene: &Scene) -> Self {
        ScenarioFile {
            id: scene.id.clone(),
            dt: scene.dt,
            t_history: scene.t_history,
            t_future: scene.t_future,
            agents: scene
                .agents
                .iter()
                .map(|a| AgentRecord {
                    id: a.id,
                    class: a.class,
                    states: a.states.iter().copied().map(StateRecord).collect(),
                })
                .collect(),
            lanes: scene
                .lanes
                .iter()
                .map(|l| LaneRecord {
                    id: l.id,
                    lane_type: l.lane_type,
                    centerline: l.centerline_xy(),
                    left_boundary: l.left_boundary.clone(),
                    right_boundary: l.right_boundary.clone(),
                    successors: l.successors.clone(),
                    predecessors: l.predecessors.clone(),
                    left_neighbor: LaneRefs(l.left_neighbor.clone()),
                    right_neighbor: LaneRefs(l.right_neighbor.clone()),
                })
                .collect(),
        }
    }

    fn into_scene(self) -> Result<Scene> {
        let agents = self
            .agents
            .into_iter()
            .map(|a| AgentTrack {
                id: a.id,
                class: a.class,
                states: a.states.into_iter().map(|s| s.0).collect(),
            })
            .collect();
        let lanes = self
            .lanes
            .into_iter()
            .map(|l| {
                let mut lane = LaneDef::from_polylines(
                    l.id,
                    l.lane_type,
                    &l.centerline,
                    l.left_boundary,
                    l.right_boundary,
                );
                lane.successors = l.successors;
                lane.predecessors = l.predecessors;
                lane.left_neighbor = l.left_neighbor.0;
                lane.right_neighbor = l.right_neighbor.0;
                lane
            })
            .collect();
        Scene::new(self.id, agents, lanes, self.t_history, self.t_future, self.dt)
    }
}

impl fmt::Display for AgentClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
