//! Fixtures shared by the benchmarks.

use contourpan_core::synth::{
    generate_scene, simulate_predictions, Scene, SceneSpec, SimulatedPredictions,
};

/// A 1024x2048 frame with 50 instances and moderate contour damage.
pub fn large_spec() -> SceneSpec {
    SceneSpec {
        height: 1024,
        width: 2048,
        n_instances: 50,
        min_size: 32,
        max_size: 160,
        seed: 9,
        contour_break_prob: 0.15,
        occluder_prob: 0.3,
        ..SceneSpec::default()
    }
}

pub fn fixture(spec: &SceneSpec) -> (Scene, SimulatedPredictions) {
    let scene = generate_scene(spec).expect("benchmark scene");
    let pred = simulate_predictions(&scene, spec).expect("benchmark predictions");
    (scene, pred)
}

/// Points drawn around `clusters` centers on a jittered lattice.
pub fn clustered_points(clusters: usize, per_cluster: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(clusters * per_cluster);
    for c in 0..clusters {
        let (cr, cc) = ((c / 8) as f64 * 60.0, (c % 8) as f64 * 60.0);
        for i in 0..per_cluster {
            let t = i as f64 * 0.618_033_988_7;
            out.push((
                cr + 6.0 * t.sin() * (i % 7) as f64 / 7.0,
                cc + 6.0 * t.cos() * (i % 5) as f64 / 5.0,
            ));
        }
    }
    out
}
