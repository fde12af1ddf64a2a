//! Exit codes and artifacts of the command-line tool.

use std::path::Path;
use std::process::{Command, Output};

fn tool(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tactile-pose"))
        .args(args)
        .args(["--out", out.to_str().unwrap(), "--log", "warn"])
        .env_remove("TACTILE_POSE_SEED")
        .env_remove("TACTILE_POSE_OUT_DIR")
        .output()
        .unwrap()
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("small.toml");
    std::fs::write(
        &path,
        "[object]\nid = \"mug\"\ngrid_resolution = 48\n\n[filter]\nn_particles = 40\nn_inject = 20\n\n[experiment]\nepisodes = 2\ncontacts = 1\nn_ground_truth = 3\n",
    )
    .unwrap();
    path
}

#[test]
fn unknown_object_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = tool(dir.path(), &["gen-data", "--object", "no-such-thing"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn malformed_config_and_env_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[filter]\nnot_a_key = 3\n").unwrap();
    let o = tool(dir.path(), &["--config", bad.to_str().unwrap(), "ablate"]);
    assert_eq!(o.status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_tactile-pose"))
        .args(["ablate", "--out", dir.path().to_str().unwrap()])
        .env("TACTILE_POSE_SEED", "minus one")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_checkpoint_names_the_train_command() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let o = tool(dir.path(), &["--config", cfg.to_str().unwrap(), "eval-samples", "--proposer", "ddim"]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("tactile-pose gen-data") || err.contains("tactile-pose train"), "{err}");
}

#[test]
fn unmet_success_threshold_exits_with_four_and_keeps_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let o = tool(dir.path(), &["--config", cfg.to_str().unwrap(), "estimate-static", "--proposer", "sdf", "--min-success", "3"]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    let listed = String::from_utf8_lossy(&o.stdout);
    let summary = listed.lines().find(|l| l.ends_with("static_summary.csv")).expect("summary path printed");
    let run_dir = Path::new(summary).parent().unwrap();
    let persisted = std::fs::read_to_string(run_dir.join("config.toml")).unwrap();
    assert!(persisted.contains("n_particles = 40"));

    let o = tool(dir.path(), &["report", "--dir", run_dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn environment_overrides_the_seed_and_flags_override_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let run = |env_seed: &str, flag: Option<&str>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_tactile-pose"));
        c.args(["--config", cfg.to_str().unwrap(), "--log", "warn", "sample", "--proposer", "sdf", "--n", "5"])
            .env("TACTILE_POSE_SEED", env_seed)
            .env("TACTILE_POSE_OUT_DIR", dir.path());
        if let Some(s) = flag {
            c.args(["--seed", s]);
        }
        let o = c.output().unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        String::from_utf8_lossy(&o.stdout).trim().to_string()
    };
    assert!(run("5", None).contains("_s5"));
    assert!(run("5", Some("9")).contains("_s9"));
}
