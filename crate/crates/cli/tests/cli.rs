//! End-to-end CLI behavior: exit codes, file round trips, manifests, rerun.

use std::path::{Path, PathBuf};
use std::process::Command;

use rand::Rng;
use rand::SeedableRng;

use bitseg::codebook::{Codebook, Scheme};
use bitseg::volume::{Dims, LabelVolume, ProbVolume};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_bitseg")
}

struct TempDir(PathBuf);

impl TempDir {
    fn new(tag: &str) -> Self {
        let dir = std::env::temp_dir().join(format!("bitseg-cli-{tag}-{}", std::process::id()));
        std::fs::remove_dir_all(&dir).ok();
        std::fs::create_dir_all(&dir).unwrap();
        TempDir(dir)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }
}

impl Drop for TempDir {
    fn drop(&mut self) {
        std::fs::remove_dir_all(&self.0).ok();
    }
}

fn run(args: &[&str]) -> (i32, String, String) {
    let output = Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs");
    (
        output.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&output.stdout).into_owned(),
        String::from_utf8_lossy(&output.stderr).into_owned(),
    )
}

fn arg(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn random_labels(dims: Dims, n_classes: usize, seed: u64) -> LabelVolume {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    LabelVolume::new(
        dims,
        (0..dims.n_voxels())
            .map(|_| rng.random_range(0..n_classes) as u16)
            .collect(),
    )
    .unwrap()
}

#[test]
fn codebook_build_and_inspect() {
    let dir = TempDir::new("codebook");
    let out = dir.path("cb.json");
    let (code, stdout, _) = run(&[
        "codebook", "build", "--classes", "108", "--scheme", "vanilla", "--seed", "1", "--out",
        arg(&out),
    ]);
    assert_eq!(code, 0, "{stdout}");
    assert!(stdout.contains("7 data bits"));
    assert!(out.exists());
    // Manifest accompanies the output.
    assert!(dir.path("cb.json.manifest.json").exists());

    let (code, stdout, _) = run(&["codebook", "inspect", "--in", arg(&out)]);
    assert_eq!(code, 0);
    assert!(stdout.contains("n_classes: 108"));
    assert!(stdout.contains("15.4286"), "{stdout}");
}

#[test]
fn codebook_build_rejects_single_class_with_usage_exit() {
    let dir = TempDir::new("badclasses");
    let (code, _, stderr) = run(&[
        "codebook", "build", "--classes", "1", "--out", arg(&dir.path("cb.json")),
    ]);
    assert_eq!(code, 1, "{stderr}");
    assert!(stderr.contains("at least 2 classes"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let (code, _, _) = run(&["codebook", "build", "--nonsense"]);
    assert_eq!(code, 1);
}

#[test]
fn encode_decode_round_trip_both_modes() {
    let dir = TempDir::new("roundtrip");
    let labels_path = dir.path("truth.lvol");
    let labels = random_labels(Dims::new(8, 8, 4).unwrap(), 20, 3);
    labels.save(&labels_path).unwrap();
    let book_path = dir.path("cb.json");
    Codebook::random(20, Scheme::Hamming74, 5)
        .unwrap()
        .save(&book_path)
        .unwrap();

    let bits_path = dir.path("bits.pvol");
    let (code, _, stderr) = run(&[
        "encode", "--labels", arg(&labels_path), "--codebook", arg(&book_path), "--out",
        arg(&bits_path),
    ]);
    assert_eq!(code, 0, "{stderr}");

    for mode in ["hard", "soft"] {
        let out_path = dir.path(&format!("decoded-{mode}.lvol"));
        let (code, _, stderr) = run(&[
            "decode", "--probs", arg(&bits_path), "--codebook", arg(&book_path), "--mode", mode,
            "--out", arg(&out_path),
        ]);
        assert_eq!(code, 0, "{stderr}");
        assert_eq!(LabelVolume::load(&out_path).unwrap(), labels, "mode {mode}");
    }
}

#[test]
fn decode_soft_equals_hard_on_complete_vanilla_codebook() {
    let dir = TempDir::new("softhard");
    let book_path = dir.path("cb.json");
    Codebook::random(16, Scheme::Vanilla, 9)
        .unwrap()
        .save(&book_path)
        .unwrap();
    let dims = Dims::new(16, 16, 4).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
    let probs = ProbVolume::new(
        dims,
        4,
        (0..dims.n_voxels() * 4).map(|_| rng.random()).collect(),
    )
    .unwrap();
    let probs_path = dir.path("probs.pvol");
    probs.save(&probs_path).unwrap();

    let hard_path = dir.path("hard.lvol");
    let soft_path = dir.path("soft.lvol");
    for (mode, path) in [("hard", &hard_path), ("soft", &soft_path)] {
        let (code, _, stderr) = run(&[
            "decode", "--probs", arg(&probs_path), "--codebook", arg(&book_path), "--mode", mode,
            "--out", arg(path),
        ]);
        assert_eq!(code, 0, "{stderr}");
    }
    assert_eq!(
        std::fs::read(&hard_path).unwrap(),
        std::fs::read(&soft_path).unwrap()
    );
}

#[test]
fn decode_channel_mismatch_names_both_counts() {
    let dir = TempDir::new("mismatch");
    let book_path = dir.path("cb.json");
    Codebook::random(108, Scheme::Hamming74, 2)
        .unwrap()
        .save(&book_path)
        .unwrap();
    let dims = Dims::new(4, 4, 1).unwrap();
    let probs = ProbVolume::new(dims, 7, vec![0.25; dims.n_voxels() * 7]).unwrap();
    let probs_path = dir.path("probs.pvol");
    probs.save(&probs_path).unwrap();
    let (code, _, stderr) = run(&[
        "decode", "--probs", arg(&probs_path), "--codebook", arg(&book_path), "--out",
        arg(&dir.path("out.lvol")),
    ]);
    assert_eq!(code, 1);
    assert!(stderr.contains("expected 14"), "{stderr}");
    assert!(stderr.contains("got 7"), "{stderr}");
}

#[test]
fn corrupt_zero_flip_prob_is_byte_identical_and_counts_flips() {
    let dir = TempDir::new("corrupt");
    let book = Codebook::random(16, Scheme::Vanilla, 1).unwrap();
    let labels = random_labels(Dims::new(8, 8, 2).unwrap(), 16, 4);
    let bits = bitseg::decode::encode_labels(&labels, &book).unwrap();
    let bits_path = dir.path("bits.pvol");
    bits.to_probs().save(&bits_path).unwrap();

    let out_path = dir.path("same.pvol");
    let (code, _, stderr) = run(&[
        "corrupt", "--bits", arg(&bits_path), "--flip-prob", "0", "--seed", "7", "--out",
        arg(&out_path),
    ]);
    assert_eq!(code, 0, "{stderr}");
    assert_eq!(
        std::fs::read(&bits_path).unwrap(),
        std::fs::read(&out_path).unwrap()
    );
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path("same.pvol.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["extra"]["flip_count"], 0);

    // Same seed twice: identical output bytes.
    let a_path = dir.path("a.pvol");
    let b_path = dir.path("b.pvol");
    for path in [&a_path, &b_path] {
        let (code, _, _) = run(&[
            "corrupt", "--bits", arg(&bits_path), "--flip-prob", "0.03", "--seed", "9", "--out",
            arg(path),
        ]);
        assert_eq!(code, 0);
    }
    assert_eq!(
        std::fs::read(&a_path).unwrap(),
        std::fs::read(&b_path).unwrap()
    );
}

#[test]
fn corrupt_rejects_out_of_range_probability() {
    let dir = TempDir::new("corruptrange");
    let bits_path = dir.path("bits.pvol");
    ProbVolume::new(Dims::new(2, 1, 1).unwrap(), 1, vec![0.0, 1.0])
        .unwrap()
        .save(&bits_path)
        .unwrap();
    let (code, _, stderr) = run(&[
        "corrupt", "--bits", arg(&bits_path), "--flip-prob", "1.5", "--seed", "0", "--out",
        arg(&dir.path("out.pvol")),
    ]);
    assert_eq!(code, 1, "{stderr}");
}

#[test]
fn corrupt_rejects_non_crisp_input() {
    let dir = TempDir::new("corruptcrisp");
    let bits_path = dir.path("bits.pvol");
    ProbVolume::new(Dims::new(2, 1, 1).unwrap(), 1, vec![0.25, 1.0])
        .unwrap()
        .save(&bits_path)
        .unwrap();
    let (code, _, stderr) = run(&[
        "corrupt", "--bits", arg(&bits_path), "--flip-prob", "0.1", "--seed", "0", "--out",
        arg(&dir.path("out.pvol")),
    ]);
    assert_eq!(code, 1);
    assert!(stderr.contains("not crisp"), "{stderr}");
}

#[test]
fn assign_two_class_labels_beats_or_ties_random() {
    let dir = TempDir::new("assign");
    let labels_dir = dir.path("labels");
    std::fs::create_dir_all(&labels_dir).unwrap();
    let dims = Dims::new(6, 6, 1).unwrap();
    for (i, seed) in [3u64, 5].iter().enumerate() {
        random_labels(dims, 2, *seed)
            .save(&labels_dir.join(format!("case{i}.lvol")))
            .unwrap();
    }
    let out = dir.path("optimized.json");
    let (code, stdout, stderr) = run(&[
        "assign", "--labels-dir", arg(&labels_dir), "--scheme", "vanilla", "--seed", "1",
        "--iters", "50", "--report-seeds", "5", "--out", arg(&out),
    ]);
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.contains("optimized"), "{stdout}");
    assert!(out.exists());
    let report = std::fs::read_to_string(dir.path("optimized.json.report.csv")).unwrap();
    let mean_line = report
        .lines()
        .find(|l| l.starts_with("mean,"))
        .expect("mean row");
    let fields: Vec<f64> = mean_line
        .split(',')
        .skip(1)
        .map(|v| v.parse().unwrap())
        .collect();
    assert!(fields[0] <= fields[1], "optimized {} vs random {}", fields[0], fields[1]);
}

#[test]
fn assign_empty_directory_is_a_usage_error() {
    let dir = TempDir::new("assignempty");
    let labels_dir = dir.path("labels");
    std::fs::create_dir_all(&labels_dir).unwrap();
    let (code, _, stderr) = run(&[
        "assign", "--labels-dir", arg(&labels_dir), "--out", arg(&dir.path("cb.json")),
    ]);
    assert_eq!(code, 1);
    assert!(stderr.contains("no .lvol"), "{stderr}");
}

#[test]
fn assign_reports_unreadable_volumes_per_file() {
    let dir = TempDir::new("assignbad");
    let labels_dir = dir.path("labels");
    std::fs::create_dir_all(&labels_dir).unwrap();
    random_labels(Dims::new(4, 4, 1).unwrap(), 3, 1)
        .save(&labels_dir.join("good.lvol"))
        .unwrap();
    std::fs::write(labels_dir.join("broken.lvol"), b"junk").unwrap();
    let (code, _, stderr) = run(&[
        "assign", "--labels-dir", arg(&labels_dir), "--out", arg(&dir.path("cb.json")),
    ]);
    assert_eq!(code, 1);
    assert!(stderr.contains("broken.lvol"), "{stderr}");
}

#[test]
fn rerun_reproduces_outputs_bit_exactly() {
    let dir = TempDir::new("rerun");
    let out = dir.path("cb.json");
    let (code, _, _) = run(&[
        "codebook", "build", "--classes", "30", "--scheme", "hamming74", "--seed", "21", "--out",
        arg(&out),
    ]);
    assert_eq!(code, 0);
    let original = std::fs::read(&out).unwrap();
    std::fs::remove_file(&out).unwrap();

    let manifest = dir.path("cb.json.manifest.json");
    let (code, _, stderr) = run(&["rerun", "--manifest", arg(&manifest)]);
    assert_eq!(code, 0, "{stderr}");
    assert_eq!(std::fs::read(&out).unwrap(), original);
}

fn tiny_train_config(dir: &TempDir, head: &str) -> PathBuf {
    let config = format!(
        r#"
format_version = 1

[dataset]
n_classes = 6
width = 12
height = 12
n_train = 2
n_val = 2
noise_sigma = 0.2
blur_passes = 1
seed = 3

[model]
head = "{head}"
hidden_width = 6
init_seed = 1

[codebook]
seed = 2

[loss]
weighted_bits = false
dice_smoothing = 1e-5

[optimizer]
learning_rate = 0.5
epochs = 3
batch_size = 2
shuffle_seed = 4
"#
    );
    let path = dir.path(&format!("run-{head}.toml"));
    std::fs::write(&path, config).unwrap();
    path
}

#[test]
fn train_eval_compare_pipeline_writes_reports() {
    let dir = TempDir::new("trainpipe");
    let config_a = tiny_train_config(&dir, "onehot");
    let config_b = tiny_train_config(&dir, "binary");

    let out_a = dir.path("run-onehot");
    let out_b = dir.path("run-binary");
    for (config, out) in [(&config_a, &out_a), (&config_b, &out_b)] {
        let (code, _, stderr) = run(&[
            "train", "--config", arg(config), "--out-dir", arg(out),
        ]);
        assert_eq!(code, 0, "{stderr}");
        assert!(out.join("model.json").exists());
        let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
        assert!(metrics.starts_with("epoch,loss,mean_dsc,dsc_class_0"));
        let header = metrics.lines().next().unwrap();
        assert!(header.ends_with(",boundary_error_fraction"));
        assert_eq!(metrics.lines().count(), 4); // header + 3 epochs
        assert!(out.join("manifest.json").exists());
    }

    let eval_dir = dir.path("eval");
    let (code, stdout, stderr) = run(&[
        "eval", "--config", arg(&config_a), "--model", arg(&out_a.join("model.json")),
        "--compare", arg(&out_b.join("model.json")), "--out-dir", arg(&eval_dir),
    ]);
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.contains("mean DSC"));
    for file in [
        "dsc_report.csv",
        "summary.csv",
        "boundary.csv",
        "size_table.csv",
        "compare_dsc_report.csv",
        "dsc_difference.csv",
        "manifest.json",
    ] {
        assert!(eval_dir.join(file).exists(), "{file} missing");
    }
    let diff = std::fs::read_to_string(eval_dir.join("dsc_difference.csv")).unwrap();
    assert!(diff.starts_with("class_id,mean_voxels,dsc_primary,dsc_compared,dsc_difference"));
}

#[test]
fn gradcheck_prints_pass_lines() {
    let (code, stdout, _) = run(&["gradcheck", "--seed", "5"]);
    assert_eq!(code, 0, "{stdout}");
    assert_eq!(stdout.matches("[PASS]").count(), 7);
    assert!(!stdout.contains("[FAIL]"));
}
