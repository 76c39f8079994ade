use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use letrack::association::{track_all, TrackerConfig};
use letrack::io::{self, Strictness};
use letrack::metrics::{evaluate, EvalConfig, Mode};
use letrack::synth::SynthConfig;

struct Out {
    code: i32,
    stdout: String,
    stderr: String,
}

fn letrack(args: &[&str], envs: &[(&str, &str)]) -> Out {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_letrack"));
    cmd.args(args).env_remove("LETRACK_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    let o = cmd.output().expect("binary runs");
    Out {
        code: o.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&o.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&o.stderr).into_owned(),
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        Self { _dir: dir, root }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn write(&self, name: &str, content: &str) -> PathBuf {
        let p = self.path(name);
        fs::write(&p, content).unwrap();
        p
    }

    fn synth(&self, cfg: &str) -> (PathBuf, PathBuf, PathBuf) {
        let c = self.write("synth.cfg", cfg);
        let (gt, dets, bank) = (self.path("gt.json"), self.path("dets.json"), self.path("bank.json"));
        let o = letrack(&["synth", "--config", s(&c), "--out-gt", s(&gt), "--out-dets", s(&dets), "--out-bank", s(&bank)], &[]);
        assert_eq!(o.code, 0, "{}", o.stderr);
        (gt, dets, bank)
    }
}

const NOISY: &str = "seed = 5\nnum_frames = 15\nnum_tracks = 6\np_drop = 0.2\np_fp = 0.5\nbox_jitter_sigma = 3\napp_noise_sigma = 0.3\ncls_noise_sigma = 0.1\n";

#[test]
fn synth_matches_library() {
    let ws = Workspace::new();
    let (gt, dets, bank) = ws.synth(NOISY);
    let cfg = io::config::synth_config_from_str(NOISY).unwrap();
    let files = io::synth_files(&cfg).unwrap();
    assert_eq!(fs::read_to_string(gt).unwrap(), files.gt);
    assert_eq!(fs::read_to_string(dets).unwrap(), files.detections);
    assert_eq!(fs::read_to_string(bank).unwrap(), files.bank);
}

#[test]
fn track_and_eval_match_library() {
    let ws = Workspace::new();
    let (gt, dets, bank) = ws.synth(NOISY);
    let tcfg = ws.write("track.cfg", "max_lost_frames = 4\n");
    let pred = ws.path("pred.json");
    let o = letrack(&["track", "--detections", s(&dets), "--config", s(&tcfg), "--bank", s(&bank), "--out", s(&pred)], &[]);
    assert_eq!(o.code, 0, "{}", o.stderr);

    let seqs = io::parse_detections(&fs::read_to_string(&dets).unwrap(), Strictness::Strict).unwrap().value;
    let b = io::parse_bank(&fs::read_to_string(&bank).unwrap(), Strictness::Strict).unwrap().value;
    let cfg = TrackerConfig { max_lost_frames: 4, ..TrackerConfig::default() };
    let tracks: Vec<_> = track_all(&seqs, &cfg, Some(&b)).unwrap().into_iter().map(|(t, _)| t).collect();
    assert_eq!(fs::read_to_string(&pred).unwrap(), io::tracks_to_string(&tracks));

    let report = ws.path("report.json");
    let o = letrack(
        &["eval", "--gt", s(&gt), "--pred", s(&pred), "--bank", s(&bank), "--mode", "open", "--geometry", "box", "--alphas", "0.25,0.5,0.75", "--report", s(&report)],
        &[],
    );
    assert_eq!(o.code, 0, "{}", o.stderr);
    let g = io::parse_tracks(&fs::read_to_string(&gt).unwrap(), Strictness::Strict).unwrap().value;
    let ecfg = EvalConfig { alphas: vec![0.25, 0.5, 0.75], mode: Mode::Open, geometry: letrack::metrics::Geometry::Box };
    let r = evaluate(&g, &tracks, &b, &ecfg).unwrap();
    assert_eq!(fs::read_to_string(&report).unwrap(), io::report_to_string(&r));
    assert_eq!(o.stdout, r.to_table("pred"));
}

#[test]
fn eval_pred_equals_gt_prints_100() {
    let ws = Workspace::new();
    let (gt, _, bank) = ws.synth("seed = 2\nnum_frames = 5\n");
    let report = ws.path("r.json");
    let o = letrack(&["eval", "--gt", s(&gt), "--pred", s(&gt), "--bank", s(&bank), "--mode", "closed", "--report", s(&report)], &[]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let lines: Vec<&str> = o.stdout.lines().collect();
    let headers: Vec<&str> = lines[0].split_whitespace().collect();
    let values: Vec<&str> = lines[1].split_whitespace().collect();
    assert_eq!(headers[1], "HOTAall");
    assert_eq!(values[1], "100.0");
    assert!(values[1..].iter().all(|v| *v == "100.0"));
}

#[test]
fn validate_exit_codes() {
    let ws = Workspace::new();
    let (gt, dets, bank) = ws.synth("num_frames = 3\n");
    for (f, kind) in [(&gt, "tracks"), (&dets, "detections"), (&bank, "bank")] {
        assert_eq!(letrack(&["validate", "--file", s(f), "--kind", kind], &[]).code, 0);
    }
    assert_eq!(letrack(&["validate", "--file", s(&bank), "--kind", "tracks"], &[]).code, 1);

    let text = fs::read_to_string(&dets).unwrap();
    let trunc = ws.write("trunc.json", &text[..text.len() / 2]);
    let o = letrack(&["validate", "--file", s(&trunc), "--kind", "detections"], &[]);
    assert_eq!(o.code, 1);
    assert!(o.stderr.contains("sequences[0].frames["), "{}", o.stderr);

    let missing = ws.path("missing.json");
    assert_eq!(letrack(&["validate", "--file", s(&missing), "--kind", "tracks"], &[]).code, 2);
    assert_eq!(letrack(&["validate", "--kind", "tracks"], &[]).code, 1);
}

#[test]
fn unknown_fields_strict_and_lax() {
    let ws = Workspace::new();
    let f = ws.write("b.json", r#"{"categories":[{"id":1,"name":"a","split":"common","color":"red"}]}"#);
    let o = letrack(&["validate", "--file", s(&f), "--kind", "bank"], &[]);
    assert_eq!(o.code, 1);
    assert!(o.stderr.contains("categories[0].color: unknown field"), "{}", o.stderr);
    let o = letrack(&["--lax", "validate", "--file", s(&f), "--kind", "bank"], &[]);
    assert_eq!(o.code, 0);
    assert!(o.stderr.contains("warning"), "{}", o.stderr);
}

#[test]
fn failures_write_nothing() {
    let ws = Workspace::new();
    let bad = ws.write("bad.cfg", "p_drop = 3\n");
    let (g, d, b) = (ws.path("g.json"), ws.path("d.json"), ws.path("b.json"));
    let o = letrack(&["synth", "--config", s(&bad), "--out-gt", s(&g), "--out-dets", s(&d), "--out-bank", s(&b)], &[]);
    assert_eq!(o.code, 1);
    assert!(!g.exists() && !d.exists() && !b.exists());

    // the third output cannot be created: the first two must not survive
    let good = ws.write("good.cfg", "num_frames = 2\n");
    let nowhere = ws.path("no/such/dir/b.json");
    let o = letrack(&["synth", "--config", s(&good), "--out-gt", s(&g), "--out-dets", s(&d), "--out-bank", s(&nowhere)], &[]);
    assert_eq!(o.code, 2);
    assert!(!g.exists() && !d.exists());
    assert_eq!(fs::read_dir(&ws.root).unwrap().count(), 2, "no temporaries left behind");

    let (gt, dets, bank) = ws.synth("num_frames = 4\n");
    let tcfg = ws.write("t.cfg", "unknown_key = 1\n");
    let out = ws.path("p.json");
    let o = letrack(&["track", "--detections", s(&dets), "--config", s(&tcfg), "--bank", s(&bank), "--out", s(&out)], &[]);
    assert_eq!(o.code, 1);
    assert!(o.stderr.contains("unknown key"), "{}", o.stderr);
    assert!(!out.exists());

    let report = ws.path("r.json");
    let o = letrack(&["eval", "--gt", s(&gt), "--pred", s(&gt), "--bank", s(&bank), "--mode", "closed", "--alphas", "0.5,0.2", "--report", s(&report)], &[]);
    assert_eq!(o.code, 1);
    assert!(!report.exists());
}

#[test]
fn bank_dimension_mismatch_is_a_validation_error() {
    let ws = Workspace::new();
    let (_, dets, _) = ws.synth("num_frames = 3\n");
    let bank = ws.write("small.json", r#"{"categories":[{"id":1,"name":"a","split":"common","prototype":[1,0]}]}"#);
    let tcfg = ws.write("t.cfg", "");
    let out = ws.path("p.json");
    let o = letrack(&["track", "--detections", s(&dets), "--config", s(&tcfg), "--bank", s(&bank), "--out", s(&out)], &[]);
    assert_eq!(o.code, 1, "{}", o.stderr);
    assert!(!out.exists());
}

#[test]
fn track_without_bank_leaves_labels_out() {
    let ws = Workspace::new();
    let (_, dets, _) = ws.synth("num_frames = 3\nnum_tracks = 2\n");
    let tcfg = ws.write("t.cfg", "");
    let out = ws.path("p.json");
    assert_eq!(letrack(&["track", "--detections", s(&dets), "--config", s(&tcfg), "--out", s(&out)], &[]).code, 0);
    let t = io::parse_tracks(&fs::read_to_string(&out).unwrap(), Strictness::Strict).unwrap().value;
    assert_eq!(t[0].tracks.len(), 2);
    assert!(t[0].tracks.iter().all(|t| t.category_id.is_none() && t.score.is_none()));
}

#[test]
fn thread_variable() {
    let ws = Workspace::new();
    let (gt, _, bank) = ws.synth("num_frames = 3\n");
    let r = ws.path("r.json");
    let args = ["eval", "--gt", s(&gt), "--pred", s(&gt), "--bank", s(&bank), "--mode", "open", "--report", s(&r)];
    assert_eq!(letrack(&args, &[("LETRACK_THREADS", "lots")]).code, 1);
    assert!(!r.exists());
    assert_eq!(letrack(&args, &[("LETRACK_THREADS", "0")]).code, 0);
    assert_eq!(letrack(&args, &[("LETRACK_THREADS", "2")]).code, 0);
}

#[test]
fn import_burst_smoke() {
    let ws = Workspace::new();
    // 2x2 frame, pixel (row 1, col 1) set: column-major counts [3, 1] -> "31"
    let ann = ws.write(
        "burst.json",
        r#"{"sequences":[{"dataset":"d","seq_name":"v","height":2,"width":2,"annotated_image_paths":["f0"],"track_category_ids":{"7":3},"segmentations":[{"7":{"rle":"31","is_gt":true}}]}]}"#,
    );
    let out = ws.path("t.json");
    let o = letrack(&["import-burst", "--annotations", s(&ann), "--out", s(&out)], &[]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let t = io::parse_tracks(&fs::read_to_string(&out).unwrap(), Strictness::Strict).unwrap().value;
    assert_eq!(t[0].meta.name, "d/v");
    assert_eq!(t[0].tracks[0].track_id, 7);
    assert_eq!(t[0].tracks[0].observations[0].bbox.to_array(), [1.0, 1.0, 1.0, 1.0]);

    let broken = ws.write("broken.json", "{\"sequences\": 3}");
    assert_eq!(letrack(&["import-burst", "--annotations", s(&broken), "--out", s(&ws.path("x.json"))], &[]).code, 1);
}

#[test]
fn synth_default_config_roundtrip() {
    let cfg = SynthConfig::default();
    assert_eq!(io::config::synth_config_from_str(&io::config::synth_config_to_string(&cfg)).unwrap(), cfg);
}
