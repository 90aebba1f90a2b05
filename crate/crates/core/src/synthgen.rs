//! Procedural two-lane roads with optional junctions, vehicles driving the
//! lane graph and pedestrians walking beside it. Two named styles differ in
//! lane width, curvature, speed and junction frequency.

use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{polyline_at, polyline_length, Pose2};
use crate::metrics::{LaneIndex, LANE_EPS};
use crate::scenegraph::{AgentClass, AgentState, AgentTrack, LaneDef, LaneType, Scene};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapStyle {
    pub name: String,
    pub lane_width: f64,
    /// Absolute curvature range of road pieces, 1/m.
    pub curvature: [f64; 2],
    pub speed: [f64; 2],
    pub intersection_prob: f64,
    pub point_spacing: f64,
    /// Length range of one road piece, m.
    pub piece_length: [f64; 2],
    pub pieces: usize,
    pub vehicles: [usize; 2],
    pub pedestrians: [usize; 2],
}

impl MapStyle {
    /// Wide lanes, gentle curves, fast traffic, few junctions.
    pub fn a() -> Self {
        Self {
            name: "A".into(),
            lane_width: 3.7,
            curvature: [0.0, 0.004],
            speed: [8.0, 15.0],
            intersection_prob: 0.25,
            point_spacing: 2.0,
            piece_length: [30.0, 45.0],
            pieces: 3,
            vehicles: [2, 4],
            pedestrians: [0, 1],
        }
    }

    /// Narrow lanes, tight curves, slow traffic, frequent junctions.
    pub fn b() -> Self {
        Self {
            name: "B".into(),
            lane_width: 3.0,
            curvature: [0.012, 0.03],
            speed: [4.0, 10.0],
            intersection_prob: 0.7,
            point_spacing: 2.0,
            piece_length: [25.0, 40.0],
            pieces: 3,
            vehicles: [2, 4],
            pedestrians: [0, 2],
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "A" | "a" => Ok(Self::a()),
            "B" | "b" => Ok(Self::b()),
            other => Err(Error::InvalidConfig(format!("unknown style `{other}` (expected A or B)"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ordered = |r: [f64; 2]| r[0] <= r[1];
        if !(self.lane_width > 0.0 && self.point_spacing > 0.0) {
            return Err(Error::InvalidConfig("lane width and spacing must be positive".into()));
        }
        if !ordered(self.curvature) || !ordered(self.speed) || !ordered(self.piece_length) {
            return Err(Error::InvalidConfig("style ranges must be ordered".into()));
        }
        if self.vehicles[0] > self.vehicles[1] || self.pedestrians[0] > self.pedestrians[1] {
            return Err(Error::InvalidConfig("agent count ranges must be ordered".into()));
        }
        Ok(())
    }
}

/// Time axis of generated scenes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub t_history: usize,
    pub t_future: usize,
    pub dt: f64,
}

impl Default for Timing {
    fn default() -> Self {
        Self {
            t_history: 10,
            t_future: 30,
            dt: 0.1,
        }
    }
}

/// Reference-line point at arc length `s` from `start` with constant curvature.
fn arc_point(start: &Pose2, kappa: f64, s: f64) -> Pose2 {
    let th = start.heading;
    let (x, y) = if kappa.abs() < 1e-12 {
        (start.x + s * th.cos(), start.y + s * th.sin())
    } else {
        (
            start.x + ((th + kappa * s).sin() - th.sin()) / kappa,
            start.y + (th.cos() - (th + kappa * s).cos()) / kappa,
        )
    };
    Pose2::new(x, y, th + kappa * s)
}

fn offset(p: &Pose2, d: f64) -> [f64; 2] {
    [p.x - d * p.heading.sin(), p.y + d * p.heading.cos()]
}

/// One lane along a constant-curvature reference piece, `lateral` meters to
/// the left of the reference line.
fn lane_on_piece(
    id: u64,
    lane_type: LaneType,
    start: &Pose2,
    kappa: f64,
    length: f64,
    lateral: f64,
    width: f64,
    spacing: f64,
) -> LaneDef {
    let lane_len = length * (1.0 - kappa * lateral).abs();
    let n = (lane_len / spacing).round().max(1.0) as usize;
    let mut c = Vec::with_capacity(n + 1);
    let mut l = Vec::with_capacity(n + 1);
    let mut r = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let p = arc_point(start, kappa, length * i as f64 / n as f64);
        c.push(offset(&p, lateral));
        l.push(offset(&p, lateral + width / 2.0));
        r.push(offset(&p, lateral - width / 2.0));
    }
    LaneDef::from_polylines(id, lane_type, &c, l, r)
}

struct MapBuilder {
    lanes: Vec<LaneDef>,
    next_id: u64,
    width: f64,
    spacing: f64,
}

impl MapBuilder {
    fn add(&mut self, lane_type: LaneType, start: &Pose2, kappa: f64, length: f64, lateral: f64) -> usize {
        let id = self.next_id;
        self.next_id += 1;
        self.lanes.push(lane_on_piece(
            id, lane_type, start, kappa, length, lateral, self.width, self.spacing,
        ));
        self.lanes.len() - 1
    }

    fn link(&mut self, from: usize, to: usize) {
        let (a, b) = (self.lanes[from].id, self.lanes[to].id);
        self.lanes[from].successors.push(b);
        self.lanes[to].predecessors.push(a);
    }

    fn neighbors(&mut self, right: usize, left: usize) {
        let (r, l) = (self.lanes[right].id, self.lanes[left].id);
        self.lanes[right].left_neighbor.push(l);
        self.lanes[left].right_neighbor.push(r);
    }

    /// Two same-direction lanes on one piece; returns (right, left).
    fn pair(&mut self, start: &Pose2, kappa: f64, length: f64) -> (usize, usize) {
        let h = self.width / 2.0;
        let r = self.add(LaneType::Vehicle, start, kappa, length, -h);
        let l = self.add(LaneType::Vehicle, start, kappa, length, h);
        self.neighbors(r, l);
        (r, l)
    }
}

/// Lanes of one generated map.
pub fn gen_map(style: &MapStyle, rng: &mut impl Rng) -> Vec<LaneDef> {
    let mut b = MapBuilder {
        lanes: Vec::new(),
        next_id: 100 + rng.random_range(0..100),
        width: style.lane_width,
        spacing: style.point_spacing,
    };
    let mut pose = Pose2::new(0.0, 0.0, 0.0);
    let mut prev: Option<(usize, usize)> = None;
    for _ in 0..style.pieces {
        let len = rng.random_range(style.piece_length[0]..=style.piece_length[1]);
        let mag = rng.random_range(style.curvature[0]..=style.curvature[1]);
        let kappa = if rng.random_bool(0.5) { mag } else { -mag };
        let (r, l) = b.pair(&pose, kappa, len);
        if let Some((pr, pl)) = prev {
            b.link(pr, r);
            b.link(pl, l);
        }
        prev = Some((r, l));
        pose = arc_point(&pose, kappa, len);
    }
    let (r_end, l_end) = prev.expect("at least one piece");
    let h = style.lane_width / 2.0;
    if rng.random_bool(style.intersection_prob) {
        let w = style.lane_width;
        // Through connectors across a four-lane crossing, then a two-lane exit.
        let cross = 4.0 * w;
        let (tr, tl) = {
            let r = b.add(LaneType::Intersection, &pose, 0.0, cross, -h);
            let l = b.add(LaneType::Intersection, &pose, 0.0, cross, h);
            (r, l)
        };
        b.link(r_end, tr);
        b.link(l_end, tl);
        let after = arc_point(&pose, 0.0, cross);
        let exit_len = rng.random_range(40.0..=55.0);
        let (er, el) = b.pair(&after, 0.0, exit_len);
        b.link(tr, er);
        b.link(tl, el);
        // Right turn from the right lane, left turn from the left lane.
        let r_start = Pose2::new(offset(&pose, -h)[0], offset(&pose, -h)[1], pose.heading);
        let rr = 1.5 * w;
        let right = b.add(LaneType::Intersection, &r_start, -1.0 / rr, rr * FRAC_PI_2, 0.0);
        b.link(r_end, right);
        let r_exit = arc_point(&r_start, -1.0 / rr, rr * FRAC_PI_2);
        let re = b.add(LaneType::Vehicle, &r_exit, 0.0, exit_len, 0.0);
        b.link(right, re);
        let l_start = Pose2::new(offset(&pose, h)[0], offset(&pose, h)[1], pose.heading);
        let lr = 2.5 * w;
        let left = b.add(LaneType::Intersection, &l_start, 1.0 / lr, lr * FRAC_PI_2, 0.0);
        b.link(l_end, left);
        let l_exit = arc_point(&l_start, 1.0 / lr, lr * FRAC_PI_2);
        let le = b.add(LaneType::Vehicle, &l_exit, 0.0, exit_len, 0.0);
        b.link(left, le);
    } else {
        let len = rng.random_range(40.0..=55.0);
        let (er, el) = b.pair(&pose, 0.0, len);
        b.link(r_end, er);
        b.link(l_end, el);
    }
    b.lanes
}

/// Mean absolute curvature over all lane centerlines, 1/m.
pub fn mean_curvature(lanes: &[LaneDef]) -> f64 {
    let (mut turn, mut len) = (0.0, 0.0);
    for l in lanes {
        let c = &l.centerline;
        for w in c.windows(3) {
            turn += crate::geometry::normalize_angle(w[1].heading - w[0].heading).abs();
        }
        len += l.length;
    }
    if len > 0.0 {
        turn / len
    } else {
        0.0
    }
}

/// Random successor route starting at `lane`; concatenated centerline.
fn route(lanes: &[LaneDef], start: usize, rng: &mut impl Rng) -> (Vec<usize>, Vec<[f64; 2]>) {
    let index = |id: u64| lanes.iter().position(|l| l.id == id).expect("link resolves");
    let mut seq = vec![start];
    let mut pts = lanes[start].centerline_xy();
    let mut cur = start;
    while !lanes[cur].successors.is_empty() && seq.len() < 16 {
        let succ = &lanes[cur].successors;
        cur = index(succ[rng.random_range(0..succ.len())]);
        seq.push(cur);
        pts.extend(lanes[cur].centerline_xy().into_iter().skip(1));
    }
    (seq, pts)
}

fn states_from_positions(pos: &[[f64; 2]], dt: f64) -> Vec<AgentState> {
    let n = pos.len();
    (0..n)
        .map(|t| {
            let (a, b) = if t == 0 {
                (0, 1)
            } else if t + 1 == n {
                (n - 2, n - 1)
            } else {
                (t - 1, t + 1)
            };
            let span = (b - a) as f64 * dt;
            AgentState {
                x: pos[t][0],
                y: pos[t][1],
                vx: (pos[b][0] - pos[a][0]) / span,
                vy: (pos[b][1] - pos[a][1]) / span,
                valid: true,
            }
        })
        .collect()
}

fn vehicle_path(
    lanes: &[LaneDef],
    style: &MapStyle,
    timing: &Timing,
    rng: &mut impl Rng,
) -> Option<Vec<[f64; 2]>> {
    let steps = timing.t_history + timing.t_future;
    // Start on a lane of the first piece pair or their successors.
    let start = rng.random_range(0..4.min(lanes.len()));
    let (_, line) = route(lanes, start, rng);
    let total = polyline_length(&line);
    let v0 = rng.random_range(style.speed[0]..=style.speed[1]);
    let acc = rng.random_range(-1.0..=1.0);
    let mut s = Vec::with_capacity(steps);
    let mut dist = 0.0;
    for t in 0..steps {
        s.push(dist);
        let v = (v0 + acc * t as f64 * timing.dt).clamp(style.speed[0], style.speed[1]);
        dist += v * timing.dt;
    }
    let need = s[steps - 1];
    if need >= total {
        return None;
    }
    let s0 = rng.random_range(0.0..(total - need).min(40.0));
    Some(s.iter().map(|d| polyline_at(&line, s0 + d).xy()).collect())
}

/// Blend a path towards the neighbor lane over two seconds.
fn with_lane_change(
    lanes: &[LaneDef],
    path: &[[f64; 2]],
    timing: &Timing,
    rng: &mut impl Rng,
    index: &LaneIndex,
) -> Option<Vec<[f64; 2]>> {
    let t0 = rng.random_range(0..path.len() / 2);
    let blend = (2.0 / timing.dt).round() as usize;
    // Lateral shift direction from the lane the path starts on.
    let lane = lanes
        .iter()
        .find(|l| crate::geometry::point_polyline_dist(path[t0], &l.centerline_xy()) < 1e-6)?;
    let (sign, width) = if !lane.left_neighbor.is_empty() {
        (1.0, lane_width(lane))
    } else if !lane.right_neighbor.is_empty() {
        (-1.0, lane_width(lane))
    } else {
        return None;
    };
    let mut out = path.to_vec();
    for t in t0..path.len() {
        let lam = ((t - t0) as f64 / blend as f64).min(1.0);
        let lam = lam * lam * (3.0 - 2.0 * lam);
        let (a, b) = if t + 1 < path.len() {
            (path[t], path[t + 1])
        } else {
            (path[t - 1], path[t])
        };
        let h = (b[1] - a[1]).atan2(b[0] - a[0]);
        let d = sign * width * lam;
        out[t] = [path[t][0] - d * h.sin(), path[t][1] + d * h.cos()];
    }
    out.iter().all(|p| index.contains(*p, 0.0)).then_some(out)
}

fn lane_width(l: &LaneDef) -> f64 {
    let (a, b) = (l.left_boundary[0], l.right_boundary[0]);
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn pedestrian_path(lanes: &[LaneDef], timing: &Timing, rng: &mut impl Rng) -> Vec<[f64; 2]> {
    let steps = timing.t_history + timing.t_future;
    // Sidewalk: a few meters outside the outer boundary of a random lane.
    let lane = &lanes[rng.random_range(0..lanes.len())];
    let s = rng.random_range(0.0..lane.length);
    let c = polyline_at(&lane.centerline_xy(), s);
    let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let off = side * (lane_width(lane) * 1.5 + rng.random_range(1.0..3.0));
    let mut p = offset(&c, off);
    let speed = rng.random_range(0.6..1.6);
    let mut heading = c.heading + if rng.random_bool(0.5) { 0.0 } else { std::f64::consts::PI };
    let noise = Normal::new(0.0, 0.03).expect("valid sigma");
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        out.push(p);
        if rng.random_bool(0.03) {
            heading += rng.random_range(-0.6..0.6);
        }
        p = [
            p[0] + speed * timing.dt * heading.cos() + noise.sample(rng),
            p[1] + speed * timing.dt * heading.sin() + noise.sample(rng),
        ];
    }
    out
}

/// Vehicles with on-lane futures and pedestrians beside the road.
pub fn gen_agents(lanes: &[LaneDef], style: &MapStyle, timing: &Timing, rng: &mut impl Rng) -> Vec<AgentTrack> {
    let index = LaneIndex::new(lanes);
    let mut agents = Vec::new();
    let n_veh = rng.random_range(style.vehicles[0]..=style.vehicles[1]);
    let mut id = 1;
    let mut attempts = 0;
    while agents.len() < n_veh && attempts < 50 {
        attempts += 1;
        let Some(mut path) = vehicle_path(lanes, style, timing, rng) else { continue };
        if rng.random_bool(0.2) {
            if let Some(p) = with_lane_change(lanes, &path, timing, rng, &index) {
                path = p;
            }
        }
        if !path[timing.t_history..].iter().all(|p| index.contains(*p, LANE_EPS)) {
            continue;
        }
        let class = match rng.random_range(0..10) {
            0 => AgentClass::Truck,
            1 => AgentClass::Motorcyclist,
            2 => AgentClass::Cyclist,
            _ => AgentClass::Vehicle,
        };
        let mut states = states_from_positions(&path, timing.dt);
        if rng.random_bool(0.1) {
            let missing = rng.random_range(1..timing.t_history.max(2));
            for s in states.iter_mut().take(missing.min(timing.t_history - 1)) {
                s.valid = false;
            }
        }
        agents.push(AgentTrack { id, class, states });
        id += 1;
    }
    let n_ped = rng.random_range(style.pedestrians[0]..=style.pedestrians[1]);
    for _ in 0..n_ped {
        let path = pedestrian_path(lanes, timing, rng);
        agents.push(AgentTrack {
            id,
            class: AgentClass::Pedestrian,
            states: states_from_positions(&path, timing.dt),
        });
        id += 1;
    }
    agents
}

/// RNG of scene `index` in a dataset generated from `seed`.
pub fn scene_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn gen_scene(style: &MapStyle, timing: &Timing, seed: u64, index: u64) -> Result<Scene> {
    let mut rng = scene_rng(seed, index);
    let lanes = gen_map(style, &mut rng);
    let agents = gen_agents(&lanes, style, timing, &mut rng);
    Scene::new(
        format!("{}-{seed}-{index:05}", style.name),
        agents,
        lanes,
        timing.t_history,
        timing.t_future,
        timing.dt,
    )
}

/// `n` scenes, parallel over indices with `workers` threads; output order and
/// content do not depend on the worker count.
pub fn gen_dataset(style: &MapStyle, timing: &Timing, n: usize, seed: u64, workers: usize) -> Result<Vec<Scene>> {
    use rayon::prelude::*;
    style.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| {
        (0..n as u64)
            .into_par_iter()
            .map(|i| gen_scene(style, timing, seed, i))
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub style: MapStyle,
    pub timing: Timing,
    pub seed: u64,
    pub scenes: Vec<String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Write one JSON file per scene plus the manifest.
pub fn write_dataset(dir: &Path, style: &MapStyle, timing: &Timing, seed: u64, scenes: &[Scene]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for s in scenes {
        s.save(&dir.join(format!("{}.json", s.id)))?;
    }
    let manifest = DatasetManifest {
        style: style.clone(),
        timing: *timing,
        seed,
        scenes: scenes.iter().map(|s| s.id.clone()).collect(),
    };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Load a dataset directory. With a manifest, exactly the listed scenes in
/// order; otherwise every `*.json` file sorted by name.
pub fn load_dataset(dir: &Path) -> Result<Vec<Scene>> {
    let manifest = dir.join(MANIFEST_FILE);
    let files: Vec<std::path::PathBuf> = if manifest.exists() {
        let text = std::fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
        let m: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::parse(&manifest, &e))?;
        m.scenes.iter().map(|id| dir.join(format!("{id}.json"))).collect()
    } else {
        let mut f: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        f.sort();
        f
    };
    if files.is_empty() {
        return Err(Error::Data(format!("{}: no scene files", dir.display())));
    }
    files.iter().map(|p| Scene::load(p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenegraph::Side;

    #[test]
    fn straight_piece_segment_count() {
        let l = lane_on_piece(1, LaneType::Vehicle, &Pose2::new(0.0, 0.0, 0.0), 0.0, 100.0, 0.0, 3.7, 2.0);
        let s = Scene::new("s", vec![], vec![l], 1, 1, 0.1).unwrap();
        assert_eq!(s.points.iter().filter(|p| p.side == Side::Center).count(), 50);
    }

    #[test]
    fn arc_boundary_radii() {
        let r = 40.0;
        let w = 3.0;
        let start = Pose2::new(0.0, -r, 0.0);
        // Center of curvature at the origin.
        let l = lane_on_piece(1, LaneType::Vehicle, &start, 1.0 / r, 50.0, 0.0, w, 2.0);
        for p in &l.left_boundary {
            assert!((p[0].hypot(p[1]) - (r - w / 2.0)).abs() < 1e-9);
        }
        for p in &l.right_boundary {
            assert!((p[0].hypot(p[1]) - (r + w / 2.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_speed_displacement() {
        let line = vec![[0.0, 0.0], [200.0, 0.0]];
        let dt = 0.1;
        let pos: Vec<[f64; 2]> = (0..5).map(|t| polyline_at(&line, 10.0 * dt * t as f64).xy()).collect();
        for w in pos.windows(2) {
            assert!((w[1][0] - w[0][0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn generated_scenes_are_valid_and_deterministic() {
        let t = Timing::default();
        for style in [MapStyle::a(), MapStyle::b()] {
            let a = gen_dataset(&style, &t, 6, 3, 1).unwrap();
            let b = gen_dataset(&style, &t, 6, 3, 2).unwrap();
            assert_eq!(a, b);
            for s in &a {
                s.validate().unwrap();
                assert!(!s.supervised_agents().is_empty());
            }
        }
    }

    #[test]
    fn pedestrians_are_slow() {
        let t = Timing::default();
        let scenes = gen_dataset(&MapStyle::b(), &t, 10, 1, 1).unwrap();
        for s in &scenes {
            for a in s.agents.iter().filter(|a| !a.road_bound()) {
                let mean = a.states.iter().map(|s| s.speed()).sum::<f64>() / a.states.len() as f64;
                assert!(mean <= 2.0, "{mean}");
            }
        }
    }

    #[test]
    fn unknown_style_rejected() {
        assert!(MapStyle::by_name("C").is_err());
    }

    #[test]
    fn styles_differ_in_curvature() {
        let t = Timing::default();
        let mean = |style: &MapStyle| {
            let scenes = gen_dataset(style, &t, 40, 5, 1).unwrap();
            scenes.iter().map(|s| mean_curvature(&s.lanes)).sum::<f64>() / scenes.len() as f64
        };
        let (a, b) = (mean(&MapStyle::a()), mean(&MapStyle::b()));
        assert!(b > 2.0 * a, "A {a} B {b}");
    }

    #[test]
    fn vehicle_futures_stay_on_lanes() {
        let t = Timing::default();
        for style in [MapStyle::a(), MapStyle::b()] {
            for s in gen_dataset(&style, &t, 30, 9, 1).unwrap() {
                for a in s.agents.iter().filter(|a| a.road_bound()) {
                    for st in &a.states[s.t_history..] {
                        assert!(crate::metrics::point_in_lanes(st.xy(), &s.lanes, LANE_EPS));
                    }
                }
            }
        }
    }

    #[test]
    fn dataset_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let t = Timing::default();
        let style = MapStyle::a();
        let scenes = gen_dataset(&style, &t, 3, 2, 1).unwrap();
        write_dataset(dir.path(), &style, &t, 2, &scenes).unwrap();
        assert_eq!(load_dataset(dir.path()).unwrap(), scenes);
        let m: DatasetManifest =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap()).unwrap();
        assert_eq!(m.scenes.len(), 3);
    }
}
