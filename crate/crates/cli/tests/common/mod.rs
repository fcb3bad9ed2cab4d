#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

pub fn toy_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/toy.conllu")
}

/// Runs the CLI in-process; returns exit code, stdout and stderr.
pub fn run_cli(args: &[&str], stdin: &str) -> (i32, String, String) {
    let mut input = stdin.as_bytes();
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv = std::iter::once("grnlp").chain(args.iter().copied());
    let code = grnlp_cli::run(argv, &mut input, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

/// Arguments of the toy training run for `task`, writing to `out`.
pub fn toy_train_args(task: &str, out: &Path) -> Vec<String> {
    let toy = toy_path().display().to_string();
    [
        "train",
        "--task",
        task,
        "--train",
        &toy,
        "--dev",
        &toy,
        "--test",
        &toy,
        "--learning-rate",
        "0.003",
        "--dropout",
        "0",
        "--accumulation",
        "4",
        "--weight-decay",
        "0.2",
        "--epochs",
        "200",
        "--batch-size",
        "1",
        "--patience",
        "200",
        "--target",
        "1.0",
        "--out",
        &out.display().to_string(),
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

/// A model directory with toy models for every processor and a
/// checksummed manifest, built once per test binary through the CLI.
pub fn toy_models() -> &'static Path {
    static DIR: OnceLock<tempfile::TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        for (task, file) in [("pos", "tagger.grnlp"), ("ner", "ner.grnlp"), ("dp", "parser.grnlp")] {
            let args = toy_train_args(task, &dir.path().join(file));
            let args: Vec<&str> = args.iter().map(String::as_str).collect();
            let (code, _, err) = run_cli(&args, "");
            assert_eq!(code, 0, "{err}");
        }
        let g2g = dir.path().join("g2g.grnlp").display().to_string();
        assert_eq!(run_cli(&["g2g-build", "--out", &g2g], "").0, 0);
        let models = dir.path().display().to_string();
        assert_eq!(run_cli(&["manifest", "--models", &models], "").0, 0);
        dir
    })
    .path()
}
