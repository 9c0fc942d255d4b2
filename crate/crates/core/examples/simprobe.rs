use shadowlane_core::detector::{Detector, DetectorParams};
use shadowlane_core::sim::*;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let det = Detector::Reference(DetectorParams::default());
    if args.get(1).map(String::as_str) == Some("trace") {
        let scen: u8 = args[2].parse().unwrap();
        let v: f64 = args[3].parse().unwrap();
        let l: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(0.0);
        let spec = ScenarioSpec::standard(scen).unwrap();
        let run = run_scenario(&spec, v, l, &det, 42, None).unwrap();
        for p in &run.trajectory {
            println!(
                "t={:5.1} x={:6.2} y={:6.2} h={:6.1} dev={:6.2}",
                p.t,
                p.x,
                p.y,
                p.heading_rad.to_degrees(),
                p.lat_dev_m
            );
        }
        println!("{:?}", run.verdict);
        return;
    }
    let scen: u8 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(1);
    let spec = ScenarioSpec::standard(scen).unwrap();
    let speeds: Vec<f64> = if args.len() > 2 {
        vec![args[2].parse().unwrap()]
    } else {
        DEFAULT_SPEEDS_MPH.to_vec()
    };
    let lengths: Vec<f64> = if args.len() > 3 {
        vec![args[3].parse().unwrap()]
    } else {
        DEFAULT_LENGTHS_M.to_vec()
    };
    for &v in &speeds {
        let benign = run_benign(&spec, v, &det, 42).unwrap();
        let bdev = benign
            .iter()
            .map(|p| p.lat_dev_m.abs())
            .fold(0.0f64, f64::max);
        for &l in &lengths {
            let run = run_scenario(&spec, v, l, &det, 42, Some(&benign)).unwrap();
            let last = run.trajectory.last().unwrap();
            let maxdev = run
                .trajectory
                .iter()
                .map(|p| p.lat_dev_m)
                .fold(f64::NEG_INFINITY, f64::max);
            let mindev = run
                .trajectory
                .iter()
                .map(|p| p.lat_dev_m)
                .fold(f64::INFINITY, f64::min);
            println!(
                "s{scen} v={v:>4} L={l:>4} success={} rt={:?} prevent={} end=({:.1},{:.1}) dev[{:.2},{:.2}] bdev={:.2}",
                run.verdict.attack_success,
                run.verdict.reaction_time_s,
                run.verdict.takeover_preventable,
                last.x,
                last.y,
                mindev,
                maxdev,
                bdev
            );
        }
    }
}
