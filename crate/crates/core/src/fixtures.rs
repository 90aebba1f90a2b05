//! Small hand-built scenes used by tests, examples and the gradient check.

use crate::geometry::dist;
use crate::scenegraph::{AgentClass, AgentState, AgentTrack, LaneDef, LaneType, Scene};

/// Straight lane from `a` to `b`, sampled every ~2 m.
pub fn straight_lane(id: u64, a: [f64; 2], b: [f64; 2], width: f64) -> LaneDef {
    let len = dist(a, b);
    let n = (len / 2.0).round().max(1.0) as usize;
    let (ux, uy) = ((b[0] - a[0]) / len, (b[1] - a[1]) / len);
    let (nx, ny) = (-uy * width / 2.0, ux * width / 2.0);
    let center: Vec<[f64; 2]> = (0..=n)
        .map(|i| {
            let t = i as f64 / n as f64;
            [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
        })
        .collect();
    let left = center.iter().map(|p| [p[0] + nx, p[1] + ny]).collect();
    let right = center.iter().map(|p| [p[0] - nx, p[1] - ny]).collect();
    LaneDef::from_polylines(id, LaneType::Vehicle, &center, left, right)
}

/// Agent moving at constant velocity for `steps` states.
pub fn straight_agent(
    id: u64,
    class: AgentClass,
    start: [f64; 2],
    heading: f64,
    speed: f64,
    steps: usize,
    dt: f64,
) -> AgentTrack {
    let (s, c) = heading.sin_cos();
    let states = (0..steps)
        .map(|t| AgentState {
            x: start[0] + c * speed * dt * t as f64,
            y: start[1] + s * speed * dt * t as f64,
            vx: c * speed,
            vy: s * speed,
            valid: true,
        })
        .collect();
    AgentTrack { id, class, states }
}

fn link(lanes: &mut [LaneDef], from: usize, to: usize) {
    let (a, b) = (lanes[from].id, lanes[to].id);
    lanes[from].successors.push(b);
    lanes[to].predecessors.push(a);
}

/// Two parallel two-lane chains with a fork, two vehicles and one pedestrian.
pub fn toy_scene(t_history: usize, t_future: usize) -> Scene {
    let dt = 0.1;
    let w = 3.5;
    let mut lanes = vec![
        straight_lane(10, [0.0, 0.0], [30.0, 0.0], w),
        straight_lane(11, [30.0, 0.0], [60.0, 0.0], w),
        straight_lane(12, [30.0, 0.0], [55.0, 15.0], w),
        straight_lane(20, [0.0, 3.5], [30.0, 3.5], w),
        straight_lane(21, [30.0, 3.5], [60.0, 3.5], w),
    ];
    link(&mut lanes, 0, 1);
    link(&mut lanes, 0, 2);
    link(&mut lanes, 3, 4);
    lanes[0].left_neighbor.push(20);
    lanes[3].right_neighbor.push(10);
    lanes[1].left_neighbor.push(21);
    lanes[4].right_neighbor.push(11);
    let steps = t_history + t_future;
    let agents = vec![
        straight_agent(1, AgentClass::Vehicle, [4.0, 0.0], 0.0, 8.0, steps, dt),
        straight_agent(2, AgentClass::Truck, [12.0, 3.5], 0.0, 6.0, steps, dt),
        straight_agent(3, AgentClass::Pedestrian, [10.0, -6.0], 0.3, 1.3, steps, dt),
    ];
    Scene::new("toy", agents, lanes, t_history, t_future, dt).expect("toy scene is valid")
}
