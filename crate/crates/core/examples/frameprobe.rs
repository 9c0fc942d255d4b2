use shadowlane_core::detector::{Detector, DetectorParams};
use shadowlane_core::geom::Pose;
use shadowlane_core::scene::{synth_scene_at, RoadPath, SceneSpec, LaneLayout};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let x: f64 = args[1].parse().unwrap();
    let y: f64 = args[2].parse().unwrap();
    let h: f64 = args[3].parse::<f64>().unwrap().to_radians();
    let mut spec = SceneSpec::new(LaneLayout::default_us(), 42);
    spec.path = RoadPath::LeftTurn { y_curve_m: 40.0, radius_m: 25.0 };
    let scene = synth_scene_at(&spec, Pose::new(x, y, h), x).unwrap();
    let det = Detector::Reference(DetectorParams::default());
    let r = det.run(&scene.image, &scene.calib()).unwrap();
    let calib = scene.calib();
    for (i, lane) in r.lanes.iter().enumerate() {
        let mut pts: Vec<(f64, f64)> = lane
            .points
            .iter()
            .filter_map(|p| calib.cam_to_bev.apply(p[0], p[1]))
            .map(|(c, rr)| calib.bev.pixel_to_meters(c, rr))
            .collect();
        pts.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        let s: Vec<String> = pts
            .iter()
            .step_by((pts.len() / 8).max(1))
            .map(|(x, y)| format!("({x:.2},{y:.1})"))
            .collect();
        println!("lane {i}: support={} conf={:.2} w={:.2} {}", lane.support, lane.confidence, lane.width_m, s.join(" "));
    }
}
