use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use lordsig::nn::checkpoint::read_checkpoint;
use lordsig::synthetic::{levy_area_dataset, write_dataset, PathSpec};
use lordsig_cli::commands::{cmd_eval, cmd_export_pca, cmd_logsig, cmd_sweep, cmd_train};
use lordsig_cli::config::RunConfig;

fn dataset(dir: &Path, length: usize) -> PathBuf {
    let root = dir.join("data");
    let ds = levy_area_dataset(12, 6, 6, &PathSpec { length, ..PathSpec::default() }, 3);
    write_dataset(&ds, &root).unwrap();
    root
}

fn tiny(root: &Path, out: &Path) -> RunConfig {
    let mut cfg = RunConfig { dataset: Some(root.into()), out: out.into(), seeds: vec![1, 2], p: 8, ..Default::default() };
    for (k, v) in [
        ("hidden_dim", "4"), ("f_width", "8"), ("g_width", "8"), ("o_width", "8"), ("max_iter_ae", "3"),
        ("max_iter_task", "3"), ("batch_size", "4"), ("solver", "euler"), ("steps", "1"),
    ] {
        cfg.set(k, v).unwrap();
    }
    cfg
}

fn read_tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn train_twice_gives_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    let root = dataset(tmp.path(), 40);
    let a = tiny(&root, &tmp.path().join("a"));
    let b = RunConfig { out: tmp.path().join("b"), ..a.clone() };
    cmd_train(&a).unwrap();
    cmd_train(&b).unwrap();
    let (ta, tb) = (read_tree(&a.out), read_tree(&b.out));
    assert!(ta.contains_key(Path::new("seed-1/inference.ckpt")));
    assert!(ta.contains_key(Path::new("seed-2/encoder.ckpt")));
    assert_eq!(ta, tb);
}

#[test]
fn train_reports_one_row_per_seed_plus_aggregate() {
    let tmp = tempfile::tempdir().unwrap();
    let root = dataset(tmp.path(), 40);
    let mut cfg = tiny(&root, &tmp.path().join("out"));
    cfg.seeds = vec![1, 2, 3, 4, 5];
    cfg.set("max_iter_task", "1").unwrap();
    cmd_train(&cfg).unwrap();
    let csv = fs::read_to_string(cfg.out.join("metrics.csv")).unwrap();
    let acc: Vec<&str> = csv.lines().filter(|l| l.starts_with("accuracy,")).collect();
    assert_eq!(acc.len(), 6);
    assert!(acc[5].starts_with("accuracy,aggregate,"));
    let params = fs::read_to_string(cfg.out.join("params.csv")).unwrap();
    assert!(params.starts_with("group,count\ndecoder,"));
}

#[test]
fn lord_inference_checkpoint_has_no_decoder() {
    let tmp = tempfile::tempdir().unwrap();
    let root = dataset(tmp.path(), 40);
    let mut cfg = tiny(&root, &tmp.path().join("out"));
    cfg.seeds = vec![1];
    cmd_train(&cfg).unwrap();
    let ckpt = read_checkpoint(fs::File::open(cfg.out.join("seed-1/inference.ckpt")).unwrap()).unwrap();
    let ids: Vec<&str> = ckpt.blocks.iter().map(|b| b.name.as_str()).collect();
    assert!(ids.iter().any(|i| i.starts_with("f.")));
    assert!(ids.iter().any(|i| i.starts_with("g.")));
    assert!(!ids.iter().any(|i| i.starts_with("o.") || i.starts_with("phi_s.")), "{ids:?}");

    let report = cmd_eval(&RunConfig { out: tmp.path().join("eval"), ..cfg.clone() }, &cfg.out.join("seed-1/inference.ckpt"), None)
        .unwrap();
    let trained = fs::read_to_string(cfg.out.join("seed-1/metrics.csv")).unwrap();
    let evaluated = fs::read_to_string(tmp.path().join("eval/eval.csv")).unwrap();
    assert_eq!(trained, evaluated);
    assert_eq!(report.metrics.len(), 4);
}

#[test]
fn untrained_encoder_ablation_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let root = dataset(tmp.path(), 40);
    let mut cfg = tiny(&root, &tmp.path().join("out"));
    cfg.seeds = vec![1];
    cfg.set("max_iter_ae", "0").unwrap();
    cmd_train(&cfg).unwrap();
    let report = fs::read_to_string(cfg.out.join("seed-1/report.csv")).unwrap();
    assert!(!report.contains(",pretrain,"));
}

#[test]
fn baselines_train() {
    let tmp = tempfile::tempdir().unwrap();
    let root = dataset(tmp.path(), 40);
    for model in ["nrde", "de-nrde"] {
        let mut cfg = tiny(&root, &tmp.path().join(model));
        cfg.seeds = vec![1];
        cfg.set("model", model).unwrap();
        cmd_train(&cfg).unwrap();
        let ckpt = cfg.out.join("seed-1/inference.ckpt");
        assert!(!cfg.out.join("seed-1/encoder.ckpt").exists());
        cmd_eval(&RunConfig { out: tmp.path().join(format!("{model}-eval")), ..cfg.clone() }, &ckpt, None).unwrap();
    }
}

#[test]
fn logsig_writes_one_row_per_window() {
    let tmp = tempfile::tempdir().unwrap();
    // 25 observations with P = 8: windows [0,7], [7,14], [14,21], [21,24].
    let root = dataset(tmp.path(), 25);
    let cfg = tiny(&root, &tmp.path().join("out"));
    cmd_logsig(&cfg, Some(2)).unwrap();
    let text = fs::read_to_string(cfg.out.join("logsig/s00000.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "1,2,3,1_2,1_3,2_3");
    assert_eq!(lines.len(), 5);
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 6));
    assert_eq!(fs::read_dir(cfg.out.join("logsig")).unwrap().count(), 24);

    let first = read_tree(&cfg.out);
    cmd_logsig(&cfg, Some(2)).unwrap();
    assert_eq!(first, read_tree(&cfg.out));

    let wide = RunConfig { p: 100, out: tmp.path().join("wide"), ..cfg.clone() };
    cmd_logsig(&wide, Some(2)).unwrap();
    assert_eq!(fs::read_to_string(wide.out.join("logsig/s00000.csv")).unwrap().lines().count(), 2);
}

#[test]
fn sweep_emits_one_row_per_value() {
    let tmp = tempfile::tempdir().unwrap();
    let root = dataset(tmp.path(), 40);
    let mut cfg = tiny(&root, &tmp.path().join("sweep"));
    cfg.seeds = vec![1];
    let table = cmd_sweep(&cfg, "max_iter_AE", &["0".into(), "1".into(), "2".into()]).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("max_iter_ae,accuracy_mean,accuracy_std"));
    assert!(cfg.out.join("max_iter_ae=2/metrics.csv").exists());

    let table = cmd_sweep(&RunConfig { out: tmp.path().join("p"), ..cfg.clone() }, "P", &["4".into(), "32".into()]).unwrap();
    assert_eq!(table.lines().count(), 3);

    let err = cmd_sweep(&cfg, "colour", &["1".into()]).unwrap_err().to_string();
    assert!(err.contains("colour") && err.contains("max_iter_ae") && err.contains("de_ratio"), "{err}");
}

#[test]
fn pca_export_tags_three_sources() {
    let tmp = tempfile::tempdir().unwrap();
    let root = dataset(tmp.path(), 40);
    let mut cfg = tiny(&root, &tmp.path().join("out"));
    cfg.seeds = vec![1];
    cfg.set("max_iter_ae", "0").unwrap();
    cfg.set("max_iter_task", "0").unwrap();
    cmd_train(&cfg).unwrap();
    let file = cmd_export_pca(&cfg, &cfg.out.join("seed-1/inference.ckpt")).unwrap();
    let text = fs::read_to_string(file).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    // 40 observations, P = 8: 6 windows per sample, 6 test samples.
    assert_eq!(rows.len(), 3 * 6 * 6);
    let sources: BTreeSet<&str> = rows.iter().map(|r| r.split(',').next().unwrap()).collect();
    assert_eq!(sources, BTreeSet::from(["de", "logsig_D1", "logsig_D2"]));
}

#[test]
fn example_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for e in fs::read_dir(dir).unwrap() {
        let mut cfg = RunConfig::default();
        cfg.load_file(&e.unwrap().path()).unwrap();
        cfg.validate().unwrap();
        n += 1;
    }
    assert!(n >= 5);
}

fn lordsig(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_lordsig")).args(args).output().unwrap()
}

#[test]
fn errors_exit_nonzero_and_name_the_culprit() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = tmp.path().join("bad.conf");
    fs::write(&conf, "p = 8\nlr = fast\n").unwrap();
    let out = lordsig(&["train", "--config", conf.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.conf:2") && err.contains("lr"), "{err}");

    let out = lordsig(&["logsig", "--dataset", tmp.path().join("missing").to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing"));
}

#[test]
fn synth_then_logsig_through_the_binary() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("d");
    let out = lordsig(&["synth", "--out", data.to_str().unwrap(), "--length", "20", "--seed", "4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = lordsig(&[
        "logsig", "--dataset", data.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap(), "--p", "4",
        "--d2", "3",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(tmp.path().join("o/logsig/s00000.csv")).unwrap();
    // d = 3 at depth 3: 3 + 3 + 8 = 14 coefficients; 20 observations, P = 4: 7 windows.
    assert_eq!(text.lines().next().unwrap().split(',').count(), 14);
    assert_eq!(text.lines().count(), 8);
}
