use shadowlane_core::detector::{Detector, DetectorParams};
use shadowlane_core::scene::{synth_scene_at, SceneSpec};
use shadowlane_core::sim::*;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let scen: u8 = args[1].parse().unwrap();
    let v_mph: f64 = args[2].parse().unwrap();
    let l: f64 = args[3].parse().unwrap();
    let spec = ScenarioSpec::standard(scen).unwrap();
    let det = Detector::Reference(DetectorParams::default());
    let layer = if l > 0.0 { spec.layer(l).unwrap() } else { None };
    let mut scene_spec = SceneSpec::new(spec.layout.clone(), 42);
    scene_spec.path = spec.path;
    scene_spec.shadow = layer;
    let mut state = VehicleState::new(
        spec.start.x,
        spec.start.y,
        spec.start.heading_rad,
        mph_to_mps(v_mph),
    );
    let mut ctrl = CtrlState::default();
    for frame in 0..250 {
        let scene = synth_scene_at(&scene_spec, state.pose(), state.x).unwrap();
        let detection = det.run(&scene.image, &scene.calib()).unwrap();
        let steer = lane_center_control(&detection, &scene.calib(), &state, &mut ctrl);
        let xs = boundary_laterals(&detection, &scene.calib());
        let cand: Vec<String> = xs.iter().map(|s| format!("{:.2}", (s[0] + s[1]) / 2.0)).collect();
        let fmt = |o: Option<[f64; 3]>| match o {
            Some(a) => format!("{:6.2}", a[0]),
            None => "  ----".into(),
        };
        println!(
            "f={frame:3} x={:7.2} y={:7.2} h={:6.1} dev={:6.2} steer={:6.3} L={} R={} nlanes={}",
            state.x,
            state.y,
            state.heading_rad.to_degrees(),
            spec.lane_center_dev(state.x, state.y),
            steer,
            fmt(ctrl.left),
            fmt(ctrl.right),
            detection.lanes.len()
        );
        println!("    cand: {}", cand.join(" "));
        for _ in 0..PHYSICS_SUBSTEPS {
            state = step(&state, steer, CONTROL_DT_S / PHYSICS_SUBSTEPS as f64);
        }
        let (lat, station) = spec.path.lateral_station(state.x, state.y);
        if station > spec.end_station || lat.abs() > 15.0 {
            break;
        }
    }
}
