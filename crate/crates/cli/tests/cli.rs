use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use so3krates::data::{parse_extxyz, read_extxyz};
use so3krates::model::Model;
use so3krates::parallel::Execution;
use so3krates::training::evaluate;
use so3krates_cli::commands::open_checkpoint;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_so3krates"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TINY: [&str; 9] = [
    "features=8",
    "n_layers=1",
    "l_max=1",
    "r_cut=2.5",
    "n_rbf=6",
    "heads=2",
    "radial_hidden=8",
    "spherical_hidden=4",
    "use_nonlocal=true",
];

fn gen(dir: &Path, samples: usize, extra: &[&str]) -> PathBuf {
    let out = dir.join("data");
    let s = samples.to_string();
    let mut args = vec!["gen-data", "--n-carbons", "4", "--samples", &s, "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = run(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    out
}

fn train_args<'a>(data: &'a str, out: &'a str, extra: &[&'a str]) -> Vec<String> {
    let mut v = vec!["train".to_string()];
    for s in TINY.iter().chain(extra) {
        v.push("--set".into());
        v.push(s.to_string());
    }
    v.push("--set".into());
    v.push(format!("data_dir={data}"));
    v.push("--set".into());
    v.push(format!("out_dir={out}"));
    v
}

fn run_owned(args: &[String]) -> Output {
    bin().args(args).output().expect("binary runs")
}

#[test]
fn gen_data_writes_seeded_splits() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    let o = run(&["gen-data", "--n-carbons", "10", "--samples", "101", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut total = 0;
    for (name, n) in [("train.xyz", 80), ("valid.xyz", 10), ("test.xyz", 11)] {
        let d = read_extxyz(&out.join(name)).unwrap();
        assert_eq!(d.len(), n);
        assert!(d.structures.iter().all(|s| s.len() == 14));
        total += d.len();
    }
    assert_eq!(total, 101);

    let again = dir.path().join("d2");
    run(&["gen-data", "--n-carbons", "10", "--samples", "101", "--out", again.to_str().unwrap()]);
    for name in ["train.xyz", "valid.xyz", "test.xyz"] {
        assert_eq!(
            std::fs::read(out.join(name)).unwrap(),
            std::fs::read(again.join(name)).unwrap()
        );
    }
}

#[test]
fn gen_data_rejects_odd_chains() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["gen-data", "--n-carbons", "9", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("n_carbons"), "{}", stderr(&o));
}

#[test]
fn train_writes_artifacts_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), 10, &["--n-train", "6", "--n-valid", "2"]);
    let out = dir.path().join("run");
    let (d, o) = (data.to_str().unwrap(), out.to_str().unwrap());
    let r = run_owned(&train_args(d, o, &["epochs=2", "batch_size=2", "valid_every=1"]));
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    for f in ["config.toml", "metrics.csv", "best/manifest.txt", "last/tensors.bin"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let echoed = std::fs::read_to_string(out.join("config.toml")).unwrap();
    let cfg = so3krates_cli::RunConfig::from_toml(&echoed).unwrap();
    assert_eq!(cfg.epochs, 2);
    assert!(cfg.use_nonlocal);
    assert_eq!(open_checkpoint(&out.join("last")).unwrap().meta("step"), Some("6"));

    let r = run_owned(&{
        let mut a = train_args(d, o, &["epochs=4", "batch_size=2", "valid_every=1"]);
        a.push("--resume".into());
        a
    });
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let last = open_checkpoint(&out.join("last")).unwrap();
    assert_eq!(last.meta("step"), Some("12"));
    assert_eq!(last.meta("epoch"), Some("4"));
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(lines[0], "epoch,lr,train_loss,val_E_MAE,val_F_MAE");
    let epochs: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(epochs, ["1", "2", "3", "4"]);
}

#[test]
fn missing_dataset_is_a_config_error_before_any_work() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let r = run_owned(&train_args(
        dir.path().join("nowhere").to_str().unwrap(),
        out.to_str().unwrap(),
        &[],
    ));
    assert_eq!(code(&r), 2);
    assert!(!out.exists());
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "epochs = 3\nlearning_rate = 0.1\n").unwrap();
    let r = run(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&r), 2);
    assert!(stderr(&r).contains("learning_rate"), "{}", stderr(&r));
}

#[test]
fn malformed_data_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    std::fs::create_dir_all(&data).unwrap();
    std::fs::write(data.join("train.xyz"), "3\nenergy=1\nH 0 0 0\nH 0 0 1\n").unwrap();
    let r = run_owned(&train_args(data.to_str().unwrap(), dir.path().join("r").to_str().unwrap(), &[]));
    assert_eq!(code(&r), 3, "{}", stderr(&r));
    assert!(stderr(&r).contains("train.xyz:5"), "{}", stderr(&r));
}

#[test]
fn energy_only_data_with_force_weight_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    std::fs::create_dir_all(&data).unwrap();
    std::fs::write(data.join("train.xyz"), "2\nenergy=1.5\nH 0 0 0\nH 0 0 0.8\n").unwrap();
    let r = run_owned(&train_args(data.to_str().unwrap(), dir.path().join("r").to_str().unwrap(), &["beta=0.5"]));
    assert_eq!(code(&r), 2, "{}", stderr(&r));
    let r = run_owned(&train_args(
        data.to_str().unwrap(),
        dir.path().join("r").to_str().unwrap(),
        &["beta=0.0", "epochs=1"],
    ));
    assert_eq!(code(&r), 0, "{}", stderr(&r));
}

#[test]
fn eval_reports_metrics_hash_and_handles_energy_only_sets() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), 10, &["--n-train", "6", "--n-valid", "2"]);
    let out = dir.path().join("run");
    let r = run_owned(&train_args(data.to_str().unwrap(), out.to_str().unwrap(), &["epochs=1"]));
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let ckpt = out.join("last");
    let test = data.join("test.xyz");
    let report_path = dir.path().join("report.txt");
    let r = run(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--data",
        test.to_str().unwrap(),
        "--report",
        report_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let text = stdout(&r);
    assert_eq!(std::fs::read_to_string(&report_path).unwrap(), text);
    let c = open_checkpoint(&ckpt).unwrap();
    let model = Model::from_params(c.config.clone(), c.params.clone()).unwrap();
    assert!(text.contains(&format!("parameters          {}", model.param_count())));
    let hash = so3krates_cli::RunConfig::from_toml(&std::fs::read_to_string(out.join("config.toml")).unwrap())
        .unwrap()
        .hash();
    assert!(text.contains(&hash), "{text}");

    let set = read_extxyz(&test).unwrap();
    let ev = evaluate(&model, &set.structures, Execution::Sequential).unwrap();
    let want = format!("force MAE           {:.6e}", ev.force_mae().unwrap());
    assert!(text.contains(&want), "{text}\nexpected {want}");

    let mut energy_only = set.clone();
    for s in &mut energy_only.structures {
        s.forces = None;
    }
    let eo = dir.path().join("eo.xyz");
    so3krates::data::write_extxyz(&energy_only, &eo).unwrap();
    let r = run(&["eval", "--checkpoint", ckpt.to_str().unwrap(), "--data", eo.to_str().unwrap()]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    assert!(stdout(&r).contains("omitted"), "{}", stdout(&r));
}

#[test]
fn eval_without_checkpoint_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let r = run(&["eval", "--checkpoint", dir.path().to_str().unwrap(), "--data", "x.xyz"]);
    assert_eq!(code(&r), 2);
}

fn verify_args(extra: &[&str]) -> Vec<String> {
    let mut v: Vec<String> = ["verify", "--structures", "3", "--motions", "2"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for s in TINY {
        v.push("--set".into());
        v.push(s.into());
    }
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

#[test]
fn verify_passes_on_fresh_parameters() {
    let r = run_owned(&verify_args(&[]));
    assert_eq!(code(&r), 0, "{}{}", stdout(&r), stderr(&r));
    let text = stdout(&r);
    assert_eq!(text.lines().count(), 13, "{text}");
    assert!(text.lines().all(|l| l.starts_with("PASS") && l.contains("max error")));
}

#[test]
fn verify_fails_with_corrupted_coupling_table() {
    let r = run_owned(&verify_args(&["--corrupt-cg"]));
    assert_eq!(code(&r), 4, "{}", stdout(&r));
    let text = stdout(&r);
    let line = text
        .lines()
        .find(|l| l.contains("CG contraction equivariance"))
        .unwrap();
    assert!(line.starts_with("FAIL"), "{line}");
}

#[test]
fn dump_is_deterministic_and_shaped() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), 10, &["--n-train", "6", "--n-valid", "2"]);
    let out = dir.path().join("run");
    let r = run_owned(&train_args(data.to_str().unwrap(), out.to_str().unwrap(), &["epochs=1", "n_layers=2"]));
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let one = dir.path().join("one.xyz");
    let set = read_extxyz(&data.join("test.xyz")).unwrap();
    so3krates::data::write_extxyz(&set.subset(&[0]), &one).unwrap();
    let dump = |name: &str| {
        let o = dir.path().join(name);
        let r = run(&[
            "dump",
            "--checkpoint",
            out.join("last").to_str().unwrap(),
            "--data",
            one.to_str().unwrap(),
            "--out",
            o.to_str().unwrap(),
        ]);
        assert_eq!(code(&r), 0, "{}", stderr(&r));
        o
    };
    let (a, b) = (dump("a"), dump("b"));
    for f in ["sphc.csv", "attention.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
    }
    let sphc = std::fs::read_to_string(a.join("sphc.csv")).unwrap();
    let atoms = parse_extxyz(&std::fs::read_to_string(&one).unwrap()).unwrap().structures[0].len();
    assert_eq!(sphc.lines().count() - 1, atoms * 2);
    assert!(sphc.lines().next().unwrap().starts_with("structure,layer,atom,element,pc1,pc2,chi_0"));
    let att = std::fs::read_to_string(a.join("attention.csv")).unwrap();
    let kinds: std::collections::BTreeSet<&str> = att.lines().skip(1).map(|l| l.split(',').nth(2).unwrap()).collect();
    assert!(kinds.contains("local"));
    assert!(kinds.iter().all(|k| *k == "local" || *k == "nonlocal"));
}
