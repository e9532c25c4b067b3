use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use dex::augment::{
    crop_expression, crop_similarity, mask_pose_regions, random_rotate, rotate,
    rotation_similarity, CropOptions,
};
use dex::conditioning::{adain, StyleParams};
use dex::config::{Config, FillPolicy};
use dex::landmarks::LandmarkSet;
use dex::numerics::io::{self, DType};
use dex::numerics::{OutOfBounds, Rng};
use dex::pose::PoseFile;
use dex::quality::{aed, apd, l1_loss, psnr, serialize_db, ssim, ApdBreakdown};
use dex::raymap::{compute_raymap, raymap_to_rgb, RayMapMode};
use dex::sampler::{format_schedule_table, sample, GuidanceMode, NoiseSchedule};
use dex::toylab::{
    experiment_run, latent_to_image, render_face, run_disentangled_sampling, run_experiment,
    ToyExpression, ToyFactors, ToyGrid, ToyLab, ToyPose,
};
use dex::volume::{tokens_to_volume, volume_to_tokens, warp_volume, FeatureVolume, TokenGrid};
use dex::{Error, Image, PoseRTS, Result};

use crate::*;

pub fn run(command: Command, config: &Config) -> Result<()> {
    match command {
        Command::Raymap(a) => raymap(a, config),
        Command::ComposePose(a) => compose_pose(a),
        Command::Warp(a) => warp(a, config),
        Command::Reshape(a) => reshape(a),
        Command::Adain(a) => adain_cmd(a),
        Command::Schedule(a) => schedule(a, config),
        Command::Sample(a) => sample_cmd(a, config),
        Command::Augment(a) => augment(a, config),
        Command::Metrics(a) => metrics(a, config),
        Command::Toylab(a) => match a.command {
            ToylabCommand::Demo(d) => demo(d, config),
            ToylabCommand::Render(r) => render(r),
        },
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn read_pose(path: &Path) -> Result<PoseRTS> {
    PoseFile::from_json(&fs::read_to_string(path)?)
}

fn read_landmarks(path: &Path) -> Result<LandmarkSet> {
    LandmarkSet::from_json(&fs::read_to_string(path)?)
}

fn is_dxt(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("dxt"))
}

fn read_image(path: &Path) -> Result<Image> {
    if is_dxt(path) {
        Image::new(io::load(path)?)
    } else {
        Image::load_png(path)
    }
}

fn write_image(path: &Path, img: &Image) -> Result<()> {
    if is_dxt(path) {
        io::save(path, img.tensor(), DType::F64)
    } else {
        img.save_png(path)
    }
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => Ok(fs::write(p, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

pub fn parse_fill(s: &str) -> Result<FillPolicy> {
    if s == "border" {
        return Ok(FillPolicy::Border);
    }
    let value = s.strip_prefix("constant:").ok_or_else(|| {
        invalid(format!(
            "fill must be `border` or `constant:<value>`, got {s:?}"
        ))
    })?;
    let value: f64 = value
        .parse()
        .map_err(|_| invalid(format!("fill value {value:?} is not a number")))?;
    if !value.is_finite() {
        return Err(invalid("fill value must be finite"));
    }
    Ok(FillPolicy::Constant { value })
}

fn raymap(a: RaymapArgs, config: &Config) -> Result<()> {
    let pose = read_pose(&a.pose)?;
    let mode = match &a.mode {
        Some(m) => m.parse::<RayMapMode>()?,
        None => config.raymap_mode,
    };
    let map = compute_raymap(&pose, a.width, a.height, mode)?;
    io::save(&a.out, map.tensor(), DType::F64)?;
    if let Some(png) = &a.png {
        let (rgb, mapping) = raymap_to_rgb(&map);
        Image::new(rgb)?.save_png(png)?;
        println!("{mapping}");
    }
    Ok(())
}

fn compose_pose(a: ComposePoseArgs) -> Result<()> {
    let pa = read_pose(&a.a)?;
    let second = || -> Result<PoseRTS> {
        let b =
            a.b.as_ref()
                .ok_or_else(|| invalid(format!("--op {:?} needs a second pose", a.op)))?;
        read_pose(b)
    };
    let pose = match a.op {
        PoseOp::Compose => pa.compose(&second()?),
        PoseOp::Invert => pa.invert(),
        PoseOp::Relative => PoseRTS::relative(&pa, &second()?),
    };
    let mut text = PoseFile::to_json(&pose);
    text.push('\n');
    write_text(a.out.as_deref(), &text)
}

fn warp(a: WarpArgs, config: &Config) -> Result<()> {
    let rel = match (&a.pose, &a.source, &a.driving) {
        (Some(p), _, _) => read_pose(p)?,
        (None, Some(s), Some(d)) => PoseRTS::relative(&read_pose(s)?, &read_pose(d)?),
        _ => return Err(invalid("give --pose or both --source and --driving")),
    };
    let fill = match &a.fill {
        Some(f) => parse_fill(f)?,
        None => config.warp_fill,
    };
    let volume = FeatureVolume::new(io::load(&a.volume)?)?;
    let out = warp_volume(&volume, &rel, OutOfBounds::from(fill))?;
    io::save(&a.out, out.tensor(), DType::F64)
}

fn reshape(a: ReshapeArgs) -> Result<()> {
    let t = io::load(&a.input)?;
    let out = if a.inverse {
        volume_to_tokens(&FeatureVolume::new(t)?, a.side)?.into_tensor()
    } else {
        tokens_to_volume(&TokenGrid::new(a.side, t)?)?.into_tensor()
    };
    io::save(&a.out, &out, DType::F64)
}

#[derive(Deserialize)]
struct StyleFile {
    gamma: Vec<f64>,
    beta: Vec<f64>,
}

fn adain_cmd(a: AdainArgs) -> Result<()> {
    let content = io::load(&a.content)?;
    let style: StyleFile = serde_json::from_str(&fs::read_to_string(&a.style)?)?;
    let style = StyleParams::new(style.gamma, style.beta)?;
    io::save(&a.out, &adain(&content, &style, a.eps)?, DType::F64)
}

fn schedule(a: ScheduleArgs, config: &Config) -> Result<()> {
    let rows = config.cfg_schedule().table()?;
    write_text(a.out.as_deref(), &format_schedule_table(&rows))
}

#[derive(Serialize)]
struct SampleReport {
    mode: String,
    seed: u64,
    nearest_index: usize,
    nearest: ToyFactors,
    nearest_distance: f64,
    target_index: Option<usize>,
    correct: Option<bool>,
}

pub fn toy_item(lab: &ToyLab, index: usize) -> Result<ToyFactors> {
    lab.items.get(index).map(|it| it.factors).ok_or_else(|| {
        invalid(format!(
            "toy item {index} out of range 0..{}",
            lab.items.len()
        ))
    })
}

fn sample_cmd(a: SampleArgs, config: &Config) -> Result<()> {
    let lab = ToyLab::new(ToyGrid::default(), a.size)?;
    let noise = NoiseSchedule::default();
    let mode = match &a.mode {
        Some(m) => m.parse::<GuidanceMode>()?,
        None => config.guidance,
    };
    let source = toy_item(&lab, a.source)?;
    let pose_drive = toy_item(&lab, a.pose_drive)?;
    let exp_drive = a.exp_drive.map(|i| toy_item(&lab, i)).transpose()?;
    let cond = lab.condition(&source, &pose_drive, exp_drive.as_ref())?;
    let oracle = dex::toylab::OracleDenoiser {
        lab: &lab,
        noise: &noise,
    };
    let z = sample(
        &oracle,
        &cond,
        &config.cfg_schedule(),
        &noise,
        &lab.item_shape(),
        &mut Rng::new(config.seed),
        mode,
        config.eta,
    )?;
    latent_to_image(&z)?.save_png(&a.out)?;
    if let Some(p) = &a.latent {
        io::save(p, &z, DType::F64)?;
    }
    let (nearest_index, nearest_distance) = lab.nearest(&z)?;
    let target_index = match &exp_drive {
        Some(e) => {
            let pc = lab.grid.pose_cell(&pose_drive.pose)?;
            let ec = lab.grid.expression_cell(&e.expression)?;
            lab.items
                .iter()
                .position(|it| it.pose_cell == pc && it.expression_cell == ec)
        }
        None => None,
    };
    let report = SampleReport {
        mode: mode.to_string(),
        seed: config.seed,
        nearest_index,
        nearest: lab.items[nearest_index].factors,
        nearest_distance,
        target_index,
        correct: target_index.map(|t| t == nearest_index),
    };
    print!("{}", to_json(&report));
    Ok(())
}

fn augment(a: AugmentArgs, config: &Config) -> Result<()> {
    let img = read_image(&a.image)?;
    let landmarks = a.landmarks.as_deref().map(read_landmarks).transpose()?;
    let need_landmarks = || {
        landmarks
            .as_ref()
            .ok_or_else(|| invalid(format!("{:?} needs --landmarks", a.op)))
    };
    let (out, moved) = match a.op {
        AugmentOp::Mask => (
            mask_pose_regions(&img, need_landmarks()?, a.pad, a.cover)?,
            None,
        ),
        AugmentOp::Crop => {
            let lm = need_landmarks()?;
            let opts = CropOptions {
                size: config.crop_size,
                margin: config.crop_margin,
                ..CropOptions::default()
            };
            let out = crop_expression(&img, lm, &opts)?;
            (
                out,
                Some(lm.transformed(&crop_similarity(&lm.bbox, &opts)?)),
            )
        }
        AugmentOp::Rotate => {
            let oob = OutOfBounds::from(config.warp_fill);
            let (out, degrees) = match a.degrees {
                Some(d) => (rotate(&img, d, oob)?, d),
                None => random_rotate(
                    &img,
                    &mut Rng::new(config.seed),
                    config.max_rotation_degrees,
                    oob,
                )?,
            };
            let sim = rotation_similarity(img.width(), img.height(), degrees);
            (out, landmarks.as_ref().map(|lm| lm.transformed(&sim)))
        }
    };
    write_image(&a.out, &out)?;
    if let Some(path) = &a.landmarks_out {
        let lm =
            moved.ok_or_else(|| invalid("--landmarks-out needs --landmarks and a geometric op"))?;
        fs::write(path, lm.to_json() + "\n")?;
    }
    Ok(())
}

#[derive(Serialize)]
pub struct MetricsReport {
    #[serde(serialize_with = "serialize_db")]
    pub psnr: f64,
    pub ssim: f64,
    pub l1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub apd: Option<ApdBreakdown>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aed: Option<f64>,
}

fn metrics(a: MetricsArgs, config: &Config) -> Result<()> {
    let pred = read_image(&a.pred)?;
    let gt = read_image(&a.gt)?;
    let lm_pred = a
        .landmarks_pred
        .as_deref()
        .map(read_landmarks)
        .transpose()?;
    let lm_drive = a
        .landmarks_drive
        .as_deref()
        .map(read_landmarks)
        .transpose()?;
    let lm_exp = a.landmarks_exp.as_deref().map(read_landmarks).transpose()?;
    if lm_pred.is_none() && (lm_drive.is_some() || lm_exp.is_some()) {
        return Err(invalid(
            "--landmarks-drive/--landmarks-exp need --landmarks-pred",
        ));
    }
    let report = MetricsReport {
        psnr: psnr(&pred, &gt, 1.0)?,
        ssim: ssim(&pred, &gt)?,
        l1: l1_loss(&pred, &gt)?,
        apd: match (&lm_pred, &lm_drive) {
            (Some(p), Some(d)) => Some(apd(p, d, None, &config.apd_weights)?),
            _ => None,
        },
        aed: match (&lm_pred, &lm_exp) {
            (Some(p), Some(e)) => Some(aed(p, e, None)?),
            _ => None,
        },
    };
    write_text(a.out.as_deref(), &to_json(&report))
}

#[derive(Serialize)]
struct DemoReport {
    criterion: &'static str,
    threshold: f64,
    passed: bool,
    seed: u64,
    size: usize,
    runs: usize,
    correct: usize,
    fraction: f64,
    samples: Vec<SavedSample>,
}

#[derive(Serialize)]
struct SavedSample {
    file: String,
    source: usize,
    pose_drive: usize,
    exp_drive: usize,
    nearest: usize,
    correct: bool,
}

const DEMO_THRESHOLD: f64 = 0.95;

fn item_index(lab: &ToyLab, f: &ToyFactors) -> usize {
    lab.items
        .iter()
        .position(|it| it.factors == *f)
        .expect("factors come from the lab")
}

fn demo(a: DemoArgs, config: &Config) -> Result<()> {
    let lab = ToyLab::new(ToyGrid::default(), a.size)?;
    let noise = NoiseSchedule::default();
    let sched = config.cfg_schedule();
    let grid_dir = a.out.join("grid");
    let sample_dir = a.out.join("samples");
    fs::create_dir_all(&grid_dir)?;
    fs::create_dir_all(&sample_dir)?;
    for (i, item) in lab.items.iter().enumerate() {
        let r = render_face(&item.factors, a.size)?;
        r.image
            .save_png(grid_dir.join(format!("item_{i:02}.png")))?;
        fs::write(
            grid_dir.join(format!("item_{i:02}.landmarks.json")),
            r.landmarks.to_json() + "\n",
        )?;
    }
    fs::write(
        a.out.join("schedule.tsv"),
        format_schedule_table(&sched.table()?),
    )?;

    let report = run_experiment(&lab, a.runs, config.seed, &sched, &noise)?;
    let mut samples = Vec::new();
    for i in 0..a.save_samples.min(a.runs) {
        let run = experiment_run(&lab, config.seed, i);
        let (img, r) = run_disentangled_sampling(
            &lab,
            &run.source,
            &run.pose_drive,
            &run.exp_drive,
            &sched,
            &noise,
            run.seed,
        )?;
        let file = format!("samples/run_{i:03}.png");
        img.save_png(a.out.join(&file))?;
        samples.push(SavedSample {
            file,
            source: item_index(&lab, &run.source),
            pose_drive: item_index(&lab, &run.pose_drive),
            exp_drive: item_index(&lab, &run.exp_drive),
            nearest: r.nearest_index,
            correct: r.correct,
        });
    }
    let summary = DemoReport {
        criterion:
            "fraction of samples whose nearest render is in the conditioned (pose, expression) cell",
        threshold: DEMO_THRESHOLD,
        passed: report.fraction >= DEMO_THRESHOLD,
        seed: config.seed,
        size: a.size,
        runs: report.runs,
        correct: report.correct,
        fraction: report.fraction,
        samples,
    };
    fs::write(a.out.join("report.json"), to_json(&summary))?;
    println!(
        "{}/{} runs in the conditioned cell ({:.1}%): {}",
        report.correct,
        report.runs,
        100.0 * report.fraction,
        if summary.passed { "pass" } else { "fail" }
    );
    Ok(())
}

fn render(a: RenderArgs) -> Result<()> {
    let f = ToyFactors {
        pose: ToyPose {
            theta: a.theta,
            tx: a.tx,
            ty: a.ty,
            scale: a.scale,
        },
        expression: ToyExpression {
            eye_open: a.eye_open,
            mouth_curve: a.mouth_curve,
        },
    };
    let r = render_face(&f, a.size)?;
    write_image(&a.out, &r.image)?;
    if let Some(p) = &a.landmarks_out {
        fs::write(p, r.landmarks.to_json() + "\n")?;
    }
    Ok(())
}
