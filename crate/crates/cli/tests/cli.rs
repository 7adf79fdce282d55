use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tfp_core::kg::{load_embeddings, load_triples, write_embeddings, write_pairs, EmbeddingFormat};
use tfp_core::FeatureMatrix;

fn tfp() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tfp"))
}

fn run(args: &[&str]) -> Output {
    tfp().args(args).output().expect("spawn tfp")
}

fn stdout_lines(out: &Output) -> Vec<String> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(str::to_owned)
        .collect()
}

fn synth(dir: &Path, entities: usize, triples: usize, extra: &[&str]) {
    let mut args = vec![
        "synth".to_owned(),
        "--entities".to_owned(),
        entities.to_string(),
        "--relations".to_owned(),
        "4".to_owned(),
        "--triples".to_owned(),
        triples.to_string(),
        "--out-dir".to_owned(),
        dir.display().to_string(),
    ];
    args.extend(extra.iter().map(|s| s.to_string()));
    let out = tfp().args(&args).output().expect("spawn tfp synth");
    assert!(out.status.success(), "synth failed: {:?}", out);
}

fn data_file(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

/// Parses the machine-readable summary line: decoder,h1,h10,mrr,seconds.
fn parse_csv(out: &Output) -> (String, f64, f64, f64, f64) {
    let lines = stdout_lines(out);
    let csv = lines.last().expect("eval printed nothing");
    let fields: Vec<&str> = csv.split(',').collect();
    assert_eq!(fields.len(), 5, "csv line should have 5 fields: {csv}");
    (
        fields[0].to_owned(),
        fields[1].parse().expect("h1 field"),
        fields[2].parse().expect("h10 field"),
        fields[3].parse().expect("mrr field"),
        fields[4].parse().expect("seconds field"),
    )
}

#[test]
fn missing_required_flags_exit_2() {
    for sub in ["decode", "eval", "synth", "energy"] {
        let out = run(&[sub]);
        assert_eq!(out.status.code(), Some(2), "{sub} without flags");
    }
    let out = run(&["no-such-command"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_1_with_message() {
    let out = run(&[
        "eval",
        "--src-emb",
        "/nonexistent/a.txt",
        "--tgt-emb",
        "/nonexistent/b.txt",
        "--test-pairs",
        "/nonexistent/c.txt",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error:"), "stderr was: {err}");

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("triples.txt");
    std::fs::write(&bad, "0\tnot\tenough\tfields\textra\n").unwrap();
    let feats = dir.path().join("f.txt");
    let m = FeatureMatrix::<f64>::from_vec(2, 1, vec![0.0, 1.0]).unwrap();
    write_embeddings(&feats, &m, EmbeddingFormat::Text).unwrap();
    let out = run(&[
        "energy",
        "--triples",
        &bad.display().to_string(),
        "--features",
        &feats.display().to_string(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn synth_writes_six_files_and_is_deterministic() {
    let names = [
        "src_triples.txt",
        "tgt_triples.txt",
        "train_pairs.txt",
        "test_pairs.txt",
        "src_emb.txt",
        "tgt_emb.txt",
    ];
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        synth(
            dir,
            60,
            200,
            &["--dropout", "0.2", "--noise", "0.3", "--dim", "8", "--seed", "11"],
        );
    }

    let mut listed: Vec<String> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    listed.sort();
    let mut expected: Vec<String> = names.iter().map(|s| s.to_string()).collect();
    expected.sort();
    assert_eq!(listed, expected);

    for name in names {
        let fa = std::fs::read(a.path().join(name)).unwrap();
        let fb = std::fs::read(b.path().join(name)).unwrap();
        assert_eq!(fa, fb, "{name} differs between seeded runs");
    }

    let src = load_triples(a.path().join("src_triples.txt")).unwrap();
    let tgt = load_triples(a.path().join("tgt_triples.txt")).unwrap();
    assert_eq!(src.n_triples(), 200);
    assert!(tgt.n_triples() <= 200 && tgt.n_triples() > 0);
    let se: FeatureMatrix<f64> = load_embeddings(a.path().join("src_emb.txt")).unwrap();
    let te: FeatureMatrix<f64> = load_embeddings(a.path().join("tgt_emb.txt")).unwrap();
    assert_eq!((se.n_rows(), se.n_cols()), (60, 8));
    assert_eq!((te.n_rows(), te.n_cols()), (60, 8));

    let c = tempfile::tempdir().unwrap();
    synth(
        c.path(),
        60,
        200,
        &["--dropout", "0.2", "--noise", "0.3", "--dim", "8", "--seed", "12"],
    );
    let fa = std::fs::read(a.path().join("src_emb.txt")).unwrap();
    let fc = std::fs::read(c.path().join("src_emb.txt")).unwrap();
    assert_ne!(fa, fc, "different seeds should give different data");
}

#[test]
fn decode_produces_loadable_outputs_with_expected_shape() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 80, 300, &["--dim", "8", "--seed", "3"]);
    let out_src = dir.path().join("dec_src.bin");
    let out_tgt = dir.path().join("dec_tgt.bin");
    let out = run(&[
        "decode",
        "--src-triples",
        &data_file(dir.path(), "src_triples.txt"),
        "--tgt-triples",
        &data_file(dir.path(), "tgt_triples.txt"),
        "--train-pairs",
        &data_file(dir.path(), "train_pairs.txt"),
        "--src-emb",
        &data_file(dir.path(), "src_emb.txt"),
        "--tgt-emb",
        &data_file(dir.path(), "tgt_emb.txt"),
        "--out-src",
        &out_src.display().to_string(),
        "--out-tgt",
        &out_tgt.display().to_string(),
        "--iters",
        "3",
        "--dr",
        "16",
        "--de",
        "4",
        "--history",
        "last",
    ]);
    assert!(out.status.success(), "decode failed: {:?}", out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    for stage in [
        "graph assembly",
        "propagation",
        "projection",
        "triple features",
        "feature assembly",
    ] {
        assert!(stdout.contains(stage), "missing timing line for {stage}");
    }
    let xs: FeatureMatrix<f64> = load_embeddings(&out_src).unwrap();
    let xt: FeatureMatrix<f64> = load_embeddings(&out_tgt).unwrap();
    assert_eq!((xs.n_rows(), xs.n_cols()), (80, 16 * 4));
    assert_eq!((xt.n_rows(), xt.n_cols()), (80, 16 * 4));
    assert!(xs.data().iter().all(|v| v.is_finite()));
    assert!(xt.data().iter().all(|v| v.is_finite()));
}

#[test]
fn eval_reports_metrics_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 50, 180, &["--noise", "0.1", "--dim", "16", "--seed", "5"]);
    let out = run(&[
        "eval",
        "--src-emb",
        &data_file(dir.path(), "src_emb.txt"),
        "--tgt-emb",
        &data_file(dir.path(), "tgt_emb.txt"),
        "--test-pairs",
        &data_file(dir.path(), "test_pairs.txt"),
        "--k",
        "1,5,10",
    ]);
    assert!(out.status.success(), "eval failed: {:?}", out);
    let lines = stdout_lines(&out);
    assert!(lines.iter().any(|l| l.starts_with("H@1: ")));
    assert!(lines.iter().any(|l| l.starts_with("H@5: ")));
    assert!(lines.iter().any(|l| l.starts_with("H@10: ")));
    assert!(lines.iter().any(|l| l.starts_with("MRR: ")));
    let (name, h1, h10, mrr, secs) = parse_csv(&out);
    assert_eq!(name, "greedy");
    assert!((0.0..=1.0).contains(&h1));
    assert!((0.0..=1.0).contains(&h10));
    assert!(h10 >= h1);
    assert!(mrr >= h1 && mrr <= 1.0);
    assert!(secs >= 0.0);
}

#[test]
fn noiseless_pair_scores_perfectly_with_raw_greedy() {
    let dir = tempfile::tempdir().unwrap();
    synth(
        dir.path(),
        40,
        150,
        &["--dropout", "0", "--noise", "0", "--dim", "16", "--seed", "9"],
    );
    for decoder in ["greedy", "csls", "sinkhorn"] {
        let out = run(&[
            "eval",
            "--src-emb",
            &data_file(dir.path(), "src_emb.txt"),
            "--tgt-emb",
            &data_file(dir.path(), "tgt_emb.txt"),
            "--test-pairs",
            &data_file(dir.path(), "test_pairs.txt"),
            "--decoder",
            decoder,
        ]);
        assert!(out.status.success(), "eval {decoder} failed: {:?}", out);
        let (name, h1, _, mrr, _) = parse_csv(&out);
        assert_eq!(name, decoder);
        assert_eq!(h1, 1.0, "identical embeddings should rank perfectly");
        assert_eq!(mrr, 1.0);
    }
}

#[test]
fn sinkhorn_resolves_a_collision_greedy_cannot() {
    let dir = tempfile::tempdir().unwrap();
    let src = FeatureMatrix::<f64>::from_vec(2, 2, vec![1.0, 0.05, 0.8, 0.6]).unwrap();
    let tgt = FeatureMatrix::<f64>::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let src_path = dir.path().join("s.txt");
    let tgt_path = dir.path().join("t.txt");
    let pairs_path = dir.path().join("p.txt");
    write_embeddings(&src_path, &src, EmbeddingFormat::Text).unwrap();
    write_embeddings(&tgt_path, &tgt, EmbeddingFormat::Text).unwrap();
    write_pairs(&pairs_path, &[(0, 0), (1, 1)]).unwrap();

    let base = [
        "eval",
        "--src-emb",
        &src_path.display().to_string(),
        "--tgt-emb",
        &tgt_path.display().to_string(),
        "--test-pairs",
        &pairs_path.display().to_string(),
    ]
    .map(str::to_owned);

    let greedy = tfp().args(&base).output().unwrap();
    assert!(greedy.status.success());
    let (_, h1_greedy, _, _, _) = parse_csv(&greedy);
    assert_eq!(h1_greedy, 0.5, "both source rows prefer the first target");

    let sink = tfp()
        .args(&base)
        .args(["--decoder", "sinkhorn", "--tau", "0.05", "--sinkhorn-iters", "30"])
        .output()
        .unwrap();
    assert!(sink.status.success());
    let (_, h1_sink, _, _, _) = parse_csv(&sink);
    assert_eq!(h1_sink, 1.0, "balancing should reassign the contested target");
}

#[test]
fn energy_zero_cases() {
    let dir = tempfile::tempdir().unwrap();

    let cycle = dir.path().join("cycle.txt");
    let n = 8;
    let mut body = String::new();
    for i in 0..n {
        body.push_str(&format!("{}\t0\t{}\n", i, (i + 1) % n));
    }
    std::fs::write(&cycle, body).unwrap();
    let feats = dir.path().join("const.txt");
    let m = FeatureMatrix::<f64>::from_vec(n, 2, vec![3.5; n * 2]).unwrap();
    write_embeddings(&feats, &m, EmbeddingFormat::Text).unwrap();
    let out = run(&[
        "energy",
        "--triples",
        &cycle.display().to_string(),
        "--features",
        &feats.display().to_string(),
    ]);
    assert!(out.status.success(), "energy failed: {:?}", out);
    let line = stdout_lines(&out).remove(0);
    let value: f64 = line
        .strip_prefix("energy before: ")
        .expect("energy line")
        .parse()
        .unwrap();
    assert!(value.abs() < 1e-12, "constant features on a regular graph");

    let empty = dir.path().join("empty.txt");
    std::fs::write(&empty, "").unwrap();
    let out = run(&[
        "energy",
        "--triples",
        &empty.display().to_string(),
        "--features",
        &feats.display().to_string(),
    ]);
    assert!(out.status.success(), "energy on empty graph: {:?}", out);
    let line = stdout_lines(&out).remove(0);
    let value: f64 = line.strip_prefix("energy before: ").unwrap().parse().unwrap();
    assert_eq!(value, 0.0);
}

#[test]
fn propagation_smooths_seeded_features() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 40, 160, &["--dim", "6", "--seed", "21"]);
    let seeds = dir.path().join("seeds.txt");
    std::fs::write(&seeds, "# anchors\n0\n1\n2\n3\n").unwrap();
    let out = run(&[
        "energy",
        "--triples",
        &data_file(dir.path(), "src_triples.txt"),
        "--features",
        &data_file(dir.path(), "src_emb.txt"),
        "--iters",
        "10",
        "--seeds",
        &seeds.display().to_string(),
    ]);
    assert!(out.status.success(), "energy failed: {:?}", out);
    let lines = stdout_lines(&out);
    let before: f64 = lines[0].strip_prefix("energy before: ").unwrap().parse().unwrap();
    let after: f64 = lines[1]
        .strip_prefix("energy after 10 iterations: ")
        .unwrap()
        .parse()
        .unwrap();
    assert!(after < before, "smoothing should reduce energy: {before} -> {after}");
}

#[test]
fn thread_count_does_not_change_decode_output() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 70, 260, &["--dim", "8", "--seed", "17"]);
    let mut outputs: Vec<PathBuf> = vec![];
    for threads in ["1", "3"] {
        let out_src = dir.path().join(format!("src_{threads}.bin"));
        let out_tgt = dir.path().join(format!("tgt_{threads}.bin"));
        let out = run(&[
            "--threads",
            threads,
            "decode",
            "--src-triples",
            &data_file(dir.path(), "src_triples.txt"),
            "--tgt-triples",
            &data_file(dir.path(), "tgt_triples.txt"),
            "--train-pairs",
            &data_file(dir.path(), "train_pairs.txt"),
            "--src-emb",
            &data_file(dir.path(), "src_emb.txt"),
            "--tgt-emb",
            &data_file(dir.path(), "tgt_emb.txt"),
            "--out-src",
            &out_src.display().to_string(),
            "--out-tgt",
            &out_tgt.display().to_string(),
            "--iters",
            "2",
            "--dr",
            "8",
            "--de",
            "4",
        ]);
        assert!(out.status.success(), "decode --threads {threads}: {:?}", out);
        outputs.push(out_src);
        outputs.push(out_tgt);
    }
    assert_eq!(
        std::fs::read(&outputs[0]).unwrap(),
        std::fs::read(&outputs[2]).unwrap()
    );
    assert_eq!(
        std::fs::read(&outputs[1]).unwrap(),
        std::fs::read(&outputs[3]).unwrap()
    );
}
