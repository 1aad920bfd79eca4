use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/toy_corpus.tsv")
}

fn beflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_beflow")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn summary(dir: &Path) -> Vec<(String, usize)> {
    fs::read_to_string(dir.join("summary.tsv"))
        .unwrap()
        .lines()
        .map(|l| {
            let (k, v) = l.split_once('\t').unwrap();
            (k.to_string(), v.parse().unwrap())
        })
        .collect()
}

fn get(s: &[(String, usize)], key: &str) -> usize {
    s.iter().find(|(k, _)| k == key).map(|p| p.1).unwrap_or(0)
}

#[test]
fn validate_accepts_bundled_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let o = beflow(&["validate", "--corpus", corpus().to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = summary(dir.path());
    assert!(get(&s, "records") > 150);
    assert_eq!(get(&s, "records"), get(&s, "accepted"));
    assert_eq!(get(&s, "rejected"), 0);
    let echoed = fs::read_to_string(dir.path().join("config.toml")).unwrap();
    assert!(echoed.contains("sigma = 0.15"));
}

#[test]
fn validate_itemizes_rejects() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.tsv");
    fs::write(
        &bad,
        "reaction_id\tstep_index\trxn_smiles\ttag\n\
         ok\t0\t[OH-:1].[H:2][Cl:3]>>[OH:1][H:2].[Cl-:3]\tpt\n\
         electrons\t0\t[OH-:1]>>[OH:1]\tbad\n\
         maps\t0\t[OH-:1].[H:2][Cl:1]>>[OH:1][H:2].[Cl-:1]\tbad\n\
         syntax\t0\tC(>>C\tbad\n\
         no arrow here\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = beflow(&["validate", "--corpus", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = summary(&out);
    assert_eq!(get(&s, "accepted"), 1);
    assert_eq!(get(&s, "rejected"), 3);
    assert_eq!(get(&s, "malformed"), 1);
    let rejected = fs::read_to_string(out.join("rejected.tsv")).unwrap();
    assert_eq!(rejected.lines().count(), 5);
    assert!(rejected.lines().any(|l| l.starts_with("electrons\t") && l.contains("electron")));
    assert!(rejected.lines().any(|l| l.starts_with("maps\t")));
    assert!(rejected.lines().any(|l| l.starts_with("syntax\t") && l.contains("byte")));
}

#[test]
fn validate_empty_corpus_gives_zero_counts() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.tsv");
    fs::write(&empty, "").unwrap();
    let out = dir.path().join("out");
    let o = beflow(&["validate", "--corpus", empty.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = summary(&out);
    assert_eq!(get(&s, "records"), 0);
    assert_eq!(get(&s, "accepted"), 0);
    assert_eq!(get(&s, "rejected"), 0);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.tsv");
    let o = beflow(&["validate", "--corpus", missing.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let o = beflow(&["validate", "--corpus", corpus().to_str().unwrap(), "--set", "no_such_key=1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no_such_key"));

    let o = beflow(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));

    let o = beflow(&["--help"]);
    assert_eq!(o.status.code(), Some(0));

    let o = beflow(&["sample", "--reactants", "CO"]);
    assert_eq!(o.status.code(), Some(1), "missing checkpoint is a usage error");
}

#[test]
fn train_sample_search_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let small = d.join("small.tsv");
    let text = fs::read_to_string(corpus()).unwrap();
    let keep: String = text.lines().filter(|l| l.starts_with("pt0") || l.starts_with("reaction_id")).map(|l| format!("{l}\n")).collect();
    fs::write(&small, keep).unwrap();
    let cfg = d.join("tiny.toml");
    fs::write(
        &cfg,
        "embed_dim = 8\nhidden_dim = 8\nffn_dim = 16\nlayers = 1\nheads = 2\nsteps = 20\nlog_every = 5\n\
         eval_every = 10\nbatch_size = 4\nsamples = 4\neval_samples = 2\ntrain_ratio = 0.6\nval_ratio = 0.2\ntest_ratio = 0.2\n",
    )
    .unwrap();
    let cfg = cfg.to_str().unwrap();
    let train_dir = d.join("train");
    let o = beflow(&["--config", cfg, "train", "--corpus", small.to_str().unwrap(), "--out", train_dir.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("trained 20 steps"));
    let metrics = fs::read_to_string(train_dir.join("metrics.jsonl")).unwrap();
    assert!(metrics.lines().count() >= 4);
    for f in ["train.tsv", "val.tsv", "test.tsv", "config.toml"] {
        assert!(train_dir.join(f).exists(), "{f}");
    }
    let ckpt = train_dir.join("model.ckpt");
    let ckpt = ckpt.to_str().unwrap();

    let reactants = "[OH-].CC(=O)O";
    let o = beflow(&["--config", cfg, "sample", "--checkpoint", ckpt, "--reactants", reactants, "--samples", "6"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let counted: usize = out
        .lines()
        .map(|l| l.rsplit('\t').next().unwrap().split('/').next().unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(counted, 6);
    assert!(out.lines().last().unwrap().starts_with("invalid\t"));

    let again = beflow(&["--config", cfg, "sample", "--checkpoint", ckpt, "--reactants", reactants, "--samples", "6"]);
    assert_eq!(stdout(&again), out);

    let o = beflow(&["--config", cfg, "search", "--checkpoint", ckpt, "--reactants", reactants, "--width", "2", "--depth", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));

    let eval_dir = d.join("eval");
    let o = beflow(&[
        "--config",
        cfg,
        "evaluate",
        "--checkpoint",
        ckpt,
        "--corpus",
        small.to_str().unwrap(),
        "--ks",
        "1,2",
        "--out",
        eval_dir.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let kv = fs::read_to_string(eval_dir.join("report.tsv")).unwrap();
    for key in ["predictions", "validity_rate", "electron_rate", "top1_step", "top2_pathway", "failure.chem_invalid"] {
        assert!(kv.lines().any(|l| l.starts_with(&format!("{key}\t"))), "{key} missing from\n{kv}");
    }

    let fail_dir = d.join("fail");
    let o = beflow(&[
        "--config",
        cfg,
        "failures",
        "--checkpoint",
        ckpt,
        "--corpus",
        small.to_str().unwrap(),
        "--no-fix",
        "--out",
        fail_dir.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(fail_dir.join("failures.tsv")).unwrap().lines().count(), 6);

    let o = beflow(&["sample", "--checkpoint", ckpt, "--reactants", "CC(C"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("byte"), "{}", stderr(&o));
}
