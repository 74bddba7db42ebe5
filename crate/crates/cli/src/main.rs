use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lumedepth_core::calib::{calibrate_light, CalibConfig, CalibObservation};
use lumedepth_core::geometry::RayField;
use lumedepth_core::io::bundle::{list_bundles, read_bundle, read_fields, write_bundle, Bundle, BundleManifest};
use lumedepth_core::io::ppm::{read_ppm, write_ppm};
use lumedepth_core::io::{read_json, write_json};
use lumedepth_core::metrics::evaluate;
use lumedepth_core::optim::{recover, RecoveryConfig};
use lumedepth_core::photometry::render_image;
use lumedepth_core::synth::{cast, SceneSpec};
use lumedepth_core::{CameraModel, Error, LightModel, Result};

#[derive(Parser)]
#[command(name = "lumedepth", version, about = "Depth and albedo from a single spotlight-lit image")]
struct Cli {
    /// Suppress progress output on stdout.
    #[arg(long, global = true)]
    quiet: bool,
    /// Worker threads; falls back to LUMEDEPTH_THREADS, then all cores.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ray-cast a scene description into a ground-truth bundle.
    Gen {
        scene: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Render a bundle's depth, normals and albedo with its light.
    Render {
        dir: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Recover depth and albedo from an image.
    Recover {
        image: PathBuf,
        #[arg(long)]
        camera: PathBuf,
        #[arg(long)]
        light: PathBuf,
        /// Recovery settings; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Compare a predicted bundle against ground truth.
    Eval {
        pred: PathBuf,
        gt: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Fit the light position and spread to bundles of known geometry.
    Calib {
        observations: PathBuf,
        #[arg(long)]
        init: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
}

struct Log {
    quiet: bool,
}

impl Log {
    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("LUMEDEPTH_THREADS") {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::domain(format!("LUMEDEPTH_THREADS must be a positive integer, got {s:?}"))),
        Err(_) => Ok(None),
    }
}

fn gen(scene: &Path, output: &Path, log: &Log) -> Result<()> {
    let spec: SceneSpec = read_json(scene)?;
    let gt = cast(&spec)?;
    write_bundle(output, &gt.to_bundle(&spec))?;
    log.say(format!(
        "wrote {}x{} bundle to {} (spec {})",
        spec.camera.width,
        spec.camera.height,
        output.display(),
        &spec.hash()[..12]
    ));
    Ok(())
}

fn render(dir: &Path, output: &Path, log: &Log) -> Result<()> {
    let bundle = read_fields(dir)?;
    let m = &bundle.manifest;
    let rays = RayField::build(&m.camera)?;
    let image = render_image(&m.light, &rays, &bundle.depth, &bundle.albedo, &bundle.normals)?;
    write_ppm(output, &image)?;
    log.say(format!("wrote {}", output.display()));
    Ok(())
}

fn recover_cmd(
    image: &Path,
    camera: &Path,
    light: &Path,
    config: Option<&Path>,
    output: &Path,
    log: &Log,
) -> Result<()> {
    let observed = read_ppm(image)?;
    let cam: CameraModel = read_json(camera)?;
    let light: LightModel = read_json(light)?;
    let config: RecoveryConfig = match config {
        Some(path) => read_json(path)?,
        None => RecoveryConfig::default(),
    };
    log.say(format!("recovering {} for {} steps", image.display(), config.steps));
    let out = recover(&observed, &light, &cam, &config)?;
    write_bundle(
        output,
        &Bundle {
            manifest: BundleManifest::new(cam, light),
            image: out.rendered,
            depth: out.depth,
            normals: out.normals,
            albedo: out.albedo,
        },
    )?;
    let mut csv = String::from("step,photometric,smoothness,specular,total\n");
    for (step, l) in out.history.iter().chain(std::iter::once(&out.final_loss)).enumerate() {
        writeln!(csv, "{step},{:e},{:e},{:e},{:e}", l.photometric, l.smoothness, l.specular, l.total)
            .expect("writing to a string");
    }
    let path = output.join("history.csv");
    fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
    log.say(format!(
        "final loss {:.6e} (photometric {:.6e}); wrote {}",
        out.final_loss.total,
        out.final_loss.photometric,
        output.display()
    ));
    Ok(())
}

fn eval(pred: &Path, gt: &Path, output: &Path, log: &Log) -> Result<()> {
    let p = read_bundle(pred)?;
    let g = read_bundle(gt)?;
    let report = evaluate(&p.depth, &g.depth, &p.normals, &g.normals, &p.image, &g.image)?;
    write_json(output, &report)?;
    log.say(report.table());
    Ok(())
}

fn calib(dir: &Path, init: &Path, output: &Path, log: &Log) -> Result<()> {
    let init: LightModel = read_json(init)?;
    let dirs = list_bundles(dir)?;
    if dirs.is_empty() {
        return Err(Error::domain(format!("no bundles found in {}", dir.display())));
    }
    let mut camera: Option<CameraModel> = None;
    let mut observations = Vec::new();
    for d in &dirs {
        let bundle = read_bundle(d)?;
        match camera {
            None => camera = Some(bundle.manifest.camera),
            Some(c) if c != bundle.manifest.camera => {
                return Err(Error::domain(format!("{} uses a different camera", d.display())));
            }
            Some(_) => {}
        }
        observations.push(CalibObservation::from_bundle(bundle)?);
    }
    let cam = camera.expect("at least one bundle");
    let (light, report) = calibrate_light(&observations, &cam, &init, &CalibConfig::default())?;
    write_json(output, &light)?;
    for (d, rms) in dirs.iter().zip(&report.rms_gray_levels) {
        log.say(format!("{}: rms {rms:.3} gray levels", d.display()));
    }
    log.say(format!(
        "position ({:.6}, {:.6}, {:.6}), mu {:.6} after {} iterations{}",
        light.position.x,
        light.position.y,
        light.position.z,
        light.mu,
        report.iterations,
        if report.converged { "" } else { " (not converged)" }
    ));
    if let Some(w) = &report.warning {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = thread_count(cli.threads)? {
        if n == 0 {
            return Err(Error::domain("thread count must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::domain(e.to_string()))?;
    }
    let log = Log { quiet: cli.quiet };
    match &cli.command {
        Command::Gen { scene, output } => gen(scene, output, &log),
        Command::Render { dir, output } => render(dir, output, &log),
        Command::Recover { image, camera, light, config, output } => {
            recover_cmd(image, camera, light, config.as_deref(), output, &log)
        }
        Command::Eval { pred, gt, output } => eval(pred, gt, output, &log),
        Command::Calib { observations, init, output } => calib(observations, init, output, &log),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
