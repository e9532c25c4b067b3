use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dex::augment::{crop_expression, mask_pose_regions, rotate, CropOptions};
use dex::conditioning::{adain, StyleParams, DEFAULT_ADAIN_EPS};
use dex::numerics::io::{self, DType};
use dex::numerics::{randn, OutOfBounds};
use dex::pose::PoseFile;
use dex::quality::{psnr, ssim};
use dex::raymap::{compute_raymap, RayMapMode};
use dex::sampler::{format_schedule_table, sample, CfgSchedule, GuidanceMode, NoiseSchedule};
use dex::toylab::{
    render_face, OracleDenoiser, ToyExpression, ToyFactors, ToyGrid, ToyLab, ToyPose,
};
use dex::volume::{tokens_to_volume, warp_volume, FeatureVolume, TokenGrid};
use dex::{PoseRTS, Rng};
use tempfile::TempDir;

fn dex() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_dex"));
    c.env_remove("DEX_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    dex().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_pose(dir: &TempDir, name: &str, p: &PoseRTS) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, PoseFile::to_json(p)).unwrap();
    path
}

fn sample_pose() -> PoseRTS {
    PoseRTS::from_euler(0.3, -0.2, 0.5, 0.1, -0.05, 1.2).unwrap()
}

#[test]
fn schedule_prints_default_table() {
    let text = ok(&["schedule"]);
    let rows: Vec<Vec<&str>> = text
        .lines()
        .skip(1)
        .map(|l| l.split('\t').collect())
        .collect();
    assert_eq!(rows.len(), 35);
    for r in &rows {
        let t: usize = r[0].parse().unwrap();
        let expected = match t {
            31..=35 => ("1.000", "0.000"),
            26..=30 => match t {
                30 => ("1.000", "0.000"),
                29 => ("0.800", "0.200"),
                28 => ("0.600", "0.400"),
                27 => ("0.400", "0.600"),
                _ => ("0.200", "0.800"),
            },
            _ => ("0.000", "1.000"),
        };
        assert_eq!((r[1], r[2]), expected, "row {t}");
    }
    let lib = format_schedule_table(&CfgSchedule::default().table().unwrap());
    assert_eq!(text, lib);
}

#[test]
fn metrics_of_identical_images() {
    let dir = TempDir::new().unwrap();
    let img = dir.path().join("x.png");
    ok(&["toylab", "render", "--out", s(&img)]);
    let report: serde_json::Value =
        serde_json::from_str(&ok(&["metrics", "--pred", s(&img), "--gt", s(&img)])).unwrap();
    assert_eq!(report["psnr"], "inf");
    assert_eq!(report["ssim"], 1.0);
    assert_eq!(report["l1"], 0.0);
}

#[test]
fn metrics_match_library() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a.dxt"), dir.path().join("b.dxt"));
    let fa = ToyFactors {
        pose: ToyPose::centered(),
        expression: ToyExpression::neutral(),
    };
    let fb = ToyFactors {
        expression: ToyExpression {
            eye_open: 0.3,
            mouth_curve: 0.6,
        },
        ..fa
    };
    let ia = render_face(&fa, 48).unwrap().image;
    let ib = render_face(&fb, 48).unwrap().image;
    io::save(&a, ia.tensor(), DType::F64).unwrap();
    io::save(&b, ib.tensor(), DType::F64).unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&ok(&["metrics", "--pred", s(&a), "--gt", s(&b)])).unwrap();
    assert_eq!(
        report["psnr"].as_f64().unwrap(),
        psnr(&ia, &ib, 1.0).unwrap()
    );
    assert_eq!(report["ssim"].as_f64().unwrap(), ssim(&ia, &ib).unwrap());
}

#[test]
fn raymap_matches_library() {
    let dir = TempDir::new().unwrap();
    let pose = write_pose(&dir, "p.json", &sample_pose());
    for mode in ["w0", "w1"] {
        let out = dir.path().join(format!("{mode}.dxt"));
        ok(&[
            "raymap",
            "--pose",
            s(&pose),
            "--width",
            "12",
            "--height",
            "9",
            "--mode",
            mode,
            "--out",
            s(&out),
        ]);
        let lib =
            compute_raymap(&sample_pose(), 12, 9, mode.parse::<RayMapMode>().unwrap()).unwrap();
        assert_eq!(&io::load(&out).unwrap(), lib.tensor());
    }
}

#[test]
fn compose_pose_matches_library() {
    let dir = TempDir::new().unwrap();
    let a = sample_pose();
    let b = PoseRTS::from_euler(-0.1, 0.4, 0.0, 0.2, 0.3, 0.8).unwrap();
    let (pa, pb) = (
        write_pose(&dir, "a.json", &a),
        write_pose(&dir, "b.json", &b),
    );
    let parse = |t: String| PoseFile::from_json(&t).unwrap();
    assert_eq!(parse(ok(&["compose-pose", s(&pa), s(&pb)])), a.compose(&b));
    assert_eq!(
        parse(ok(&["compose-pose", s(&pa), "--op", "invert"])),
        a.invert()
    );
    assert_eq!(
        parse(ok(&["compose-pose", s(&pa), s(&pb), "--op", "relative"])),
        PoseRTS::relative(&a, &b)
    );
}

#[test]
fn warp_and_reshape_match_library() {
    let dir = TempDir::new().unwrap();
    let mut rng = Rng::new(3);
    let tokens = randn(&mut rng, &[64, 8]).unwrap();
    let tpath = dir.path().join("tokens.dxt");
    io::save(&tpath, &tokens, DType::F64).unwrap();

    let vpath = dir.path().join("vol.dxt");
    ok(&[
        "reshape",
        "--input",
        s(&tpath),
        "--side",
        "8",
        "--out",
        s(&vpath),
    ]);
    let vol = tokens_to_volume(&TokenGrid::new(8, tokens.clone()).unwrap()).unwrap();
    assert_eq!(&io::load(&vpath).unwrap(), vol.tensor());

    let back = dir.path().join("back.dxt");
    ok(&[
        "reshape",
        "--input",
        s(&vpath),
        "--side",
        "8",
        "--inverse",
        "--out",
        s(&back),
    ]);
    assert_eq!(io::load(&back).unwrap(), tokens);

    let src = write_pose(&dir, "s.json", &PoseRTS::identity());
    let drv = write_pose(&dir, "d.json", &sample_pose());
    let wpath = dir.path().join("w.dxt");
    ok(&[
        "warp",
        "--volume",
        s(&vpath),
        "--source",
        s(&src),
        "--driving",
        s(&drv),
        "--fill",
        "border",
        "--out",
        s(&wpath),
    ]);
    let rel = PoseRTS::relative(&PoseRTS::identity(), &sample_pose());
    let lib = warp_volume(&vol, &rel, OutOfBounds::Border).unwrap();
    assert_eq!(&io::load(&wpath).unwrap(), lib.tensor());

    let rel_path = write_pose(&dir, "rel.json", &rel);
    let w2 = dir.path().join("w2.dxt");
    ok(&[
        "warp",
        "--volume",
        s(&vpath),
        "--pose",
        s(&rel_path),
        "--out",
        s(&w2),
    ]);
    let lib = warp_volume(
        &FeatureVolume::new(vol.tensor().clone()).unwrap(),
        &rel,
        OutOfBounds::default(),
    )
    .unwrap();
    assert_eq!(&io::load(&w2).unwrap(), lib.tensor());
}

#[test]
fn adain_matches_library() {
    let dir = TempDir::new().unwrap();
    let x = randn(&mut Rng::new(2), &[2, 5, 5]).unwrap();
    let xp = dir.path().join("x.dxt");
    io::save(&xp, &x, DType::F64).unwrap();
    let style = dir.path().join("style.json");
    std::fs::write(&style, r#"{"gamma": [2.0, -0.5], "beta": [1.0, 0.25]}"#).unwrap();
    let out = dir.path().join("y.dxt");
    ok(&[
        "adain",
        "--content",
        s(&xp),
        "--style",
        s(&style),
        "--out",
        s(&out),
    ]);
    let lib = adain(
        &x,
        &StyleParams::new(vec![2.0, -0.5], vec![1.0, 0.25]).unwrap(),
        DEFAULT_ADAIN_EPS,
    )
    .unwrap();
    assert_eq!(io::load(&out).unwrap(), lib);
}

#[test]
fn augment_matches_library() {
    let dir = TempDir::new().unwrap();
    let f = ToyFactors {
        pose: ToyPose {
            theta: 0.1,
            tx: 0.05,
            ty: 0.0,
            scale: 1.0,
        },
        expression: ToyExpression::neutral(),
    };
    let r = render_face(&f, 64).unwrap();
    let img = dir.path().join("face.dxt");
    let lm = dir.path().join("face.json");
    io::save(&img, r.image.tensor(), DType::F64).unwrap();
    std::fs::write(&lm, r.landmarks.to_json()).unwrap();

    let out = dir.path().join("mask.dxt");
    ok(&[
        "augment",
        "mask",
        "--image",
        s(&img),
        "--landmarks",
        s(&lm),
        "--pad",
        "2",
        "--out",
        s(&out),
    ]);
    let lib = mask_pose_regions(&r.image, &r.landmarks, 2.0, 0.5).unwrap();
    assert_eq!(&io::load(&out).unwrap(), lib.tensor());

    let out = dir.path().join("crop.dxt");
    ok(&[
        "augment",
        "crop",
        "--image",
        s(&img),
        "--landmarks",
        s(&lm),
        "--out",
        s(&out),
    ]);
    let lib = crop_expression(&r.image, &r.landmarks, &CropOptions::default()).unwrap();
    assert_eq!(&io::load(&out).unwrap(), lib.tensor());

    let out = dir.path().join("rot.dxt");
    ok(&[
        "augment",
        "rotate",
        "--image",
        s(&img),
        "--degrees",
        "-12.5",
        "--out",
        s(&out),
    ]);
    let lib = rotate(&r.image, -12.5, OutOfBounds::default()).unwrap();
    assert_eq!(&io::load(&out).unwrap(), lib.tensor());
}

#[test]
fn sample_matches_library() {
    let dir = TempDir::new().unwrap();
    let latent = dir.path().join("z.dxt");
    let png = dir.path().join("z.png");
    let text = ok(&[
        "sample",
        "--seed",
        "11",
        "--source",
        "0",
        "--pose-drive",
        "4",
        "--exp-drive",
        "20",
        "--out",
        s(&png),
        "--latent",
        s(&latent),
    ]);
    let report: serde_json::Value = serde_json::from_str(&text).unwrap();
    let lab = ToyLab::new(ToyGrid::default(), 32).unwrap();
    let noise = NoiseSchedule::default();
    let cond = lab
        .condition(
            &lab.items[0].factors,
            &lab.items[4].factors,
            Some(&lab.items[20].factors),
        )
        .unwrap();
    let z = sample(
        &OracleDenoiser {
            lab: &lab,
            noise: &noise,
        },
        &cond,
        &CfgSchedule::default(),
        &noise,
        &lab.item_shape(),
        &mut Rng::new(11),
        GuidanceMode::Progressive,
        0.0,
    )
    .unwrap();
    assert_eq!(io::load(&latent).unwrap(), z);
    assert_eq!(
        report["nearest_index"].as_u64().unwrap() as usize,
        lab.nearest(&z).unwrap().0
    );
    assert_eq!(report["correct"], true);
}

#[test]
fn same_argv_and_seed_give_identical_bytes() {
    let dir = TempDir::new().unwrap();
    let img = dir.path().join("face.png");
    ok(&["toylab", "render", "--out", s(&img)]);
    let outputs: Vec<(Vec<u8>, Vec<u8>)> = (0..2)
        .map(|i| {
            let rot = dir.path().join(format!("rot{i}.png"));
            let z = dir.path().join(format!("z{i}.dxt"));
            let zpng = dir.path().join(format!("z{i}.png"));
            ok(&[
                "augment",
                "rotate",
                "--seed",
                "9",
                "--image",
                s(&img),
                "--out",
                s(&rot),
            ]);
            ok(&[
                "sample",
                "--seed",
                "9",
                "--pose-drive",
                "3",
                "--out",
                s(&zpng),
                "--latent",
                s(&z),
            ]);
            (std::fs::read(rot).unwrap(), std::fs::read(z).unwrap())
        })
        .collect();
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn demo_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let reports: Vec<String> = (0..2)
        .map(|i| {
            let out = dir.path().join(format!("demo{i}"));
            ok(&[
                "toylab",
                "demo",
                "--seed",
                "4",
                "--runs",
                "12",
                "--size",
                "32",
                "--save-samples",
                "2",
                "--out",
                s(&out),
            ]);
            assert!(out.join("grid/item_26.png").exists());
            assert!(out.join("grid/item_00.landmarks.json").exists());
            assert!(out.join("samples/run_001.png").exists());
            assert!(out.join("schedule.tsv").exists());
            std::fs::read_to_string(out.join("report.json")).unwrap()
        })
        .collect();
    assert_eq!(reports[0], reports[1]);
    let report: serde_json::Value = serde_json::from_str(&reports[0]).unwrap();
    assert_eq!(report["runs"], 12);
    assert_eq!(report["threshold"], 0.95);
}

#[test]
fn env_seed_is_a_fallback() {
    let dir = TempDir::new().unwrap();
    let img = dir.path().join("face.png");
    ok(&["toylab", "render", "--out", s(&img)]);
    let rotated = |seed_flag: Option<&str>, env: Option<&str>, name: &str| {
        let out = dir.path().join(name);
        let mut c = dex();
        c.args(["augment", "rotate", "--image", s(&img), "--out", s(&out)]);
        if let Some(f) = seed_flag {
            c.args(["--seed", f]);
        }
        if let Some(e) = env {
            c.env("DEX_SEED", e);
        }
        assert!(c.status().unwrap().success());
        std::fs::read(out).unwrap()
    };
    let flag = rotated(Some("3"), None, "a.png");
    let env = rotated(None, Some("3"), "b.png");
    let other = rotated(None, Some("4"), "c.png");
    let both = rotated(Some("3"), Some("4"), "d.png");
    assert_eq!(flag, env);
    assert_ne!(flag, other);
    assert_eq!(flag, both);
}

#[test]
fn exit_codes() {
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(64));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(run(&[]).status.code(), Some(64));
    assert_eq!(run(&["raymap", "--width", "3"]).status.code(), Some(64));

    let out = run(&["toylab", "render", "--size", "8", "--out", "/dev/null"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error: invalid_argument: "), "{err}");

    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"eta": 3}"#).unwrap();
    let out = run(&["--config", s(&cfg), "schedule"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: validation: "));
}

#[test]
fn version_reports_config_hash() {
    let v = ok(&["--version"]);
    let (name, rest) = v.trim().split_once(' ').unwrap();
    assert_eq!(name, "dex");
    assert!(rest.starts_with(env!("CARGO_PKG_VERSION")));
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"guidance_scale": 3.0}"#).unwrap();
    let other = ok(&["--config", s(&cfg), "--version"]);
    assert_ne!(v, other);
    assert_eq!(v, ok(&["--version"]));
}

#[test]
fn config_changes_schedule() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(
        &cfg,
        r#"{"schedule": {"total_steps": 10, "hold_steps": 2, "ramp_steps": 4, "full_steps": 4, "guidance_scale": 2.5}}"#,
    )
    .unwrap();
    let text = ok(&["--config", s(&cfg), "schedule"]);
    assert_eq!(text.lines().count(), 11);
}
