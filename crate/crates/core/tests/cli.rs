use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use accear::channel_sim::{PairedManifest, Split};
use accear::pipeline::{LOSSES_FILE, LOSSES_HEADER, REPORT_FILE};
use accear::vocoder::load_wav;

fn accear(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_accear"))
        .args(args)
        .env("ACCEAR_THREADS", "2")
        .output()
        .expect("spawn accear")
}

fn ok(args: &[&str]) -> String {
    let out = accear(args);
    assert!(
        out.status.success(),
        "accear {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: &[&str] = &["--image-size", "32", "--base-channels", "4", "--seed", "5"];

/// corpus -> simulate -> prepare -> train (2 epochs), shared by the tests.
struct Fixture {
    _tmp: tempfile::TempDir,
    root: PathBuf,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().to_path_buf();
        let j = |p: &str| root.join(p);
        ok(&["synth-corpus", "--out", s(&j("corpus")), "--files", "3", "--seconds", "8"]);
        ok(&[&["simulate", "--audio-dir", s(&j("corpus")), "--out", s(&j("sim"))], SMALL].concat());
        ok(&["prepare", "--manifest", s(&j("sim/manifest.json")), "--out", s(&j("prep"))]);
        ok(&["train", "--data", s(&j("prep")), "--out", s(&j("model")), "--epochs", "2", "--phase1-epochs", "1"]);
        Fixture { _tmp: tmp, root }
    })
}

fn first_trace(root: &Path) -> PathBuf {
    let mut v: Vec<_> = std::fs::read_dir(root.join("sim/traces")).unwrap().flatten().map(|e| e.path()).collect();
    v.sort();
    v.remove(0)
}

#[test]
fn empty_audio_dir_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = accear(&["simulate", "--audio-dir", s(tmp.path()), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no input audio"));
}

#[test]
fn usage_and_config_errors_exit_2() {
    assert_eq!(accear(&["simulate", "--bogus"]).status.code(), Some(2));
    let tmp = tempfile::tempdir().unwrap();
    let d = s(tmp.path());
    let out = accear(&["simulate", "--audio-dir", d, "--out", d, "--sensor-rate-hz", "123"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let out = accear(&["simulate", "--audio-dir", d, "--out", d, "--set", "train.no_such_key=1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = Command::new(env!("CARGO_BIN_EXE_accear"))
        .args(["simulate", "--audio-dir", d, "--out", d])
        .env("ACCEAR_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_is_deterministic_and_idempotent() {
    let f = fixture();
    let again = f.root.join("sim-again");
    ok(&[&["simulate", "--audio-dir", s(&f.root.join("corpus")), "--out", s(&again)], SMALL].concat());
    assert_eq!(
        std::fs::read(f.root.join("sim/manifest.json")).unwrap(),
        std::fs::read(again.join("manifest.json")).unwrap()
    );
    let stdout = ok(&[&["simulate", "--audio-dir", s(&f.root.join("corpus")), "--out", s(&again)], SMALL].concat());
    assert!(stdout.contains("up to date"), "{stdout}");
    let stdout = ok(&[&["simulate", "--audio-dir", s(&f.root.join("corpus")), "--out", s(&again), "--force"], SMALL].concat());
    assert!(stdout.contains("written"), "{stdout}");

    let m = PairedManifest::load(&again.join("manifest.json")).unwrap();
    assert_eq!(m.segments.len(), 6);
    assert_eq!(m.spectral.image_size, 32);
}

#[test]
fn train_writes_losses_and_resumes() {
    let f = fixture();
    let losses = std::fs::read_to_string(f.root.join("model").join(LOSSES_FILE)).unwrap();
    let lines: Vec<_> = losses.lines().collect();
    assert_eq!(lines[0], LOSSES_HEADER);
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0,1,") && lines[2].starts_with("1,2,"), "{losses}");

    let resumed = f.root.join("model-resumed");
    ok(&[
        "train",
        "--data",
        s(&f.root.join("prep")),
        "--out",
        s(&resumed),
        "--epochs",
        "3",
        "--phase1-epochs",
        "1",
        "--resume",
        s(&f.root.join("model/checkpoint.accg")),
    ]);
    let text = std::fs::read_to_string(resumed.join(LOSSES_FILE)).unwrap();
    let rows: Vec<_> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 3, "{text}");
    assert_eq!(rows[..2], lines[1..], "history carried over from the checkpoint");
    assert!(rows[2].starts_with("2,"));
}

#[test]
fn reconstruct_matches_trace_duration_and_exports_pngs() {
    let f = fixture();
    let trace = first_trace(&f.root);
    let stem = trace.file_stem().unwrap().to_str().unwrap();
    let reference = f.root.join("sim/audio").join(format!("{stem}.wav"));
    let wav = f.root.join("rec/out.wav");
    let png = f.root.join("rec/png");
    ok(&[
        "reconstruct",
        "--checkpoint",
        s(&f.root.join("model/checkpoint.accg")),
        "--accel",
        s(&trace),
        "--out",
        s(&wav),
        "--export-spectrograms",
        s(&png),
        "--reference",
        s(&reference),
    ]);
    let audio = load_wav(&wav).unwrap();
    assert_eq!(audio.rate_hz(), 16_000.0);
    assert!((audio.duration_s() - 8.0).abs() < 0.01, "{}", audio.duration_s());
    for k in 0..2 {
        for kind in ["condition", "generated", "target"] {
            assert!(png.join(format!("out_{k:03}_{kind}.png")).exists(), "{kind} {k}");
        }
    }
}

#[test]
fn ground_truth_scores_zero() {
    let f = fixture();
    let manifest = f.root.join("sim/manifest.json");
    let m = PairedManifest::load(&manifest).unwrap();
    let tsv: String = m
        .segments
        .iter()
        .map(|s| {
            let t = s.transcript.clone().unwrap_or_default();
            format!("{}\t{t}\t{t}\n", s.segment_id)
        })
        .collect();
    let tsv_path = f.root.join("transcripts.tsv");
    std::fs::write(&tsv_path, tsv).unwrap();
    let out = f.root.join("eval-gt");
    let stdout = ok(&[
        "evaluate",
        "--manifest",
        s(&manifest),
        "--ground-truth",
        "--split",
        "all",
        "--transcripts",
        s(&tsv_path),
        "--out",
        s(&out),
    ]);
    assert!(stdout.contains("mean MCD: 0.0000"), "{stdout}");
    assert!(stdout.contains("mean WER: 0.0000"), "{stdout}");
    let report = std::fs::read_to_string(out.join(REPORT_FILE)).unwrap();
    assert_eq!(report.lines().count(), 1 + m.segments.len());
}

#[test]
fn checkpoint_evaluation_covers_the_test_split() {
    let f = fixture();
    let manifest = f.root.join("sim/manifest.json");
    let n_test = PairedManifest::load(&manifest).unwrap().split(Split::Test).count();
    let stdout = ok(&[
        "evaluate",
        "--manifest",
        s(&manifest),
        "--checkpoint",
        s(&f.root.join("model/checkpoint.accg")),
        "--out",
        s(&f.root.join("eval-model")),
    ]);
    assert!(stdout.contains(&format!("segments: {n_test}")), "{stdout}");
    assert!(stdout.contains("mean image L1"), "{stdout}");
}

#[test]
fn export_spectrogram_of_wav_and_trace() {
    let f = fixture();
    let trace = first_trace(&f.root);
    let stem = trace.file_stem().unwrap().to_str().unwrap();
    let wav = f.root.join("sim/audio").join(format!("{stem}.wav"));
    let manifest = f.root.join("sim/manifest.json");
    for input in [&wav, &trace] {
        let stdout = ok(&["export-spectrogram", "--input", s(input), "--out", s(&f.root.join("export")), "--manifest", s(&manifest)]);
        let pngs: Vec<_> = stdout.lines().filter(|l| l.ends_with(".png")).collect();
        assert_eq!(pngs.len(), 2, "{stdout}");
        assert!(pngs.iter().all(|p| Path::new(p).exists()));
    }
}

#[test]
fn config_file_and_flag_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let f = fixture();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, "[simulate]\nsensor_rate_hz = 200.0\nseed = 9\n[spectral]\nimage_size = 64\n").unwrap();
    let out = tmp.path().join("sim");
    ok(&[
        "simulate",
        "--audio-dir",
        s(&f.root.join("corpus")),
        "--out",
        s(&out),
        "-c",
        s(&cfg),
        "--set",
        "spectral.image_size=128",
        "--set",
        "simulate.volume=0.5",
        "--image-size",
        "32",
    ]);
    let m = PairedManifest::load(&out.join("manifest.json")).unwrap();
    assert_eq!(m.scene.volume, 0.5);
    assert_eq!(m.profile.rate_hz, 200.0);
    assert_eq!(m.seed, 9);
    assert_eq!(m.spectral.image_size, 32);
}
