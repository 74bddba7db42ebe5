//! Recovers the straight-tube scene from a constant-depth start and prints
//! progress.
//!
//! cargo run --release -p lumedepth-core --example tube_recovery -- [steps] [step_size] [lambda_s] [init_depth]

use lumedepth_core::losses::LossWeights;
use lumedepth_core::metrics::{depth_metrics, image_mae, normal_mae};
use lumedepth_core::optim::{recover_from, GradMode, InitSpec, RecoveryConfig, RecoveryState};
use lumedepth_core::synth::{cast, presets};
use lumedepth_core::AlbedoHS;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let steps: usize = args.get(1).map_or(Ok(2000), |s| s.parse())?;
    let step_size: f64 = args.get(2).map_or(Ok(1e-2), |s| s.parse())?;
    let lambda_s: f64 = args.get(3).map_or(Ok(2e-4), |s| s.parse())?;
    let init_depth: f64 = args.get(4).map_or(Ok(200.0), |s| s.parse())?;

    let spec = presets::straight_tube(64, 40.0, 70.0, 1500.0);
    let gt = cast(&spec)?;
    let max = gt.image.iter().map(|c| c.max()).fold(0.0, f64::max);
    let min = gt.image.iter().map(|c| c.max()).fold(1.0, f64::min);
    let dmin = gt.depth.iter().cloned().fold(f64::INFINITY, f64::min);
    let dmax = gt.depth.iter().cloned().fold(0.0, f64::max);
    println!("gt image brightness in [{min:.4}, {max:.4}], depth in [{dmin:.2}, {dmax:.2}]");

    let config = RecoveryConfig {
        steps,
        step_size,
        weights: LossWeights { lambda_s, lambda_sp: 0.0, th: 0.98 },
        grad_mode: GradMode::Analytic,
        init: InitSpec::Constant { depth: init_depth, hue: 0.0, saturation: 0.5 },
    };
    let chunk = (steps / 10).max(1);
    let mut state = RecoveryState::constant(64, 64, init_depth, AlbedoHS::new(0.0, 0.5)?)?;
    let mut done = 0;
    let start = std::time::Instant::now();
    while done < steps {
        let n = chunk.min(steps - done);
        let out = recover_from(&gt.image, &spec.light, &spec.camera, &RecoveryConfig { steps: n, ..config.clone() }, state)?;
        done += n;
        let m = depth_metrics(&out.depth, &gt.depth)?;
        println!(
            "step {done:5}  loss {:.3e}  absrel {:.4}  scale {:.4}  img_mae {:.5}  normals {:.2}  ({:.1}s)",
            out.final_loss.total,
            m.abs_rel,
            m.scale,
            image_mae(&out.rendered, &gt.image)?,
            normal_mae(&out.normals, &gt.normals)?,
            start.elapsed().as_secs_f64()
        );
        state = out.state;
    }
    Ok(())
}
