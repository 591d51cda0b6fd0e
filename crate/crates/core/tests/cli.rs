use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn sample_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/qm9_sample")
}

fn run(data: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_photonic-onn"))
        .args(args)
        .env("PHOTONIC_ONN_DATA", data)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn featurize_train_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path();
    ok(&run(data, &["featurize", "--input", p(&sample_dir())]));
    let cache = std::fs::read_to_string(data.join("features.csv")).unwrap();
    assert_eq!(cache.lines().count(), 501);
    assert_eq!(std::fs::read_to_string(data.join("features.skipped.csv")).unwrap(), "source,reason\n");
    let again = data.join("again.csv");
    ok(&run(data, &["featurize", "--input", p(&sample_dir()), "--output", p(&again)]));
    assert_eq!(std::fs::read_to_string(&again).unwrap(), cache);

    let cfg = data.join("run.cfg");
    std::fs::write(&cfg, "generations = 6\nproperties = g, h\n").unwrap();
    let a = data.join("a");
    let b = data.join("b");
    ok(&run(data, &["--config", p(&cfg), "--seed", "4", "--out", p(&a), "train"]));
    ok(&run(data, &["--config", p(&cfg), "--seed", "4", "--threads", "1", "--out", p(&b), "train"]));
    for f in ["model.json", "history.csv", "report.csv"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f} differs between thread counts"
        );
    }
    let history = std::fs::read_to_string(a.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 1 + 7 * 50);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("history.json")).unwrap()).unwrap();
    assert_eq!(summary["generations"].as_array().unwrap().len(), 7);

    let ev = data.join("ev");
    let model = a.join("model.json");
    let stdout = ok(&run(data, &["--config", p(&cfg), "--out", p(&ev), "eval", "--model", p(&model)]));
    let report = std::fs::read_to_string(a.join("report.csv")).unwrap();
    assert_eq!(std::fs::read_to_string(ev.join("report.csv")).unwrap(), report);
    assert!(stdout.starts_with("metric,enthalpy,free_energy"));

    let cache_path = data.join("features.csv");
    let all = ok(&run(data, &["--out", p(&ev), "eval", "--model", p(&model), "--features", p(&cache_path)]));
    assert!(all.contains("test_r2"));
}

#[test]
fn compare_writes_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path();
    let cfg = data.join("cmp.cfg");
    std::fs::write(
        &cfg,
        format!(
            "xyz_dir = {}\ngenerations = 2\nseeds = 1, 2\nvariants = complex_intensity, real_baseline, readout_only\n",
            sample_dir().display()
        ),
    )
    .unwrap();
    let out = data.join("cmp");
    let table = ok(&run(data, &["--config", p(&cfg), "--out", p(&out), "compare"]));
    let header = table.lines().next().unwrap();
    assert_eq!(
        header,
        "metric,free_energy (complex_intensity),free_energy (real_baseline),free_energy (readout_only)"
    );
    assert_eq!(table.lines().count(), 5);
    let runs = std::fs::read_to_string(out.join("compare_runs.csv")).unwrap();
    // 2 seeds × 3 variants × 1 property × 2 splits
    assert_eq!(runs.lines().count(), 1 + 12);
}

#[test]
fn resources_reports_efficiency() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(&run(tmp.path(), &["resources", "--layers", "3", "--modes", "8"]));
    assert!(out.contains("flops_per_watt,2.4e14"), "{out}");
}

#[test]
fn user_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path();
    let bad = data.join("bad.cfg");
    std::fs::write(&bad, "n_crossover = 40\n").unwrap();
    assert_eq!(run(data, &["--config", p(&bad), "train"]).status.code(), Some(1));
    assert_eq!(run(data, &["train"]).status.code(), Some(1), "missing feature cache");
    assert_eq!(run(data, &["eval", "--model", "/definitely/missing.json"]).status.code(), Some(1));
    assert_eq!(run(data, &["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(data, &["--threads", "0", "resources"]).status.code(), Some(1));
    assert_eq!(run(data, &["fetch"]).status.code(), Some(1), "url is required");

    let empty = data.join("empty");
    std::fs::create_dir(&empty).unwrap();
    let out = run(data, &["featurize", "--input", p(&empty)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no valid records"));

    let single = data.join("single.cfg");
    std::fs::write(&single, "variants = real_baseline\n").unwrap();
    assert_eq!(run(data, &["--config", p(&single), "compare"]).status.code(), Some(1));

    let model = data.join("future.json");
    std::fs::write(&model, "{\"format_version\": 7}").unwrap();
    let out = run(data, &["eval", "--model", p(&model)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("version 7"));
}

#[test]
fn fetch_failure_leaves_no_partial_file() {
    let tmp = tempfile::tempdir().unwrap();
    let dest = tmp.path().join("archive.tar.bz2");
    let out = run(tmp.path(), &["fetch", "--url", "http://host.invalid/qm9.tar.bz2", "--dest", p(&dest)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("network failure"));
    assert_eq!(std::fs::read_dir(tmp.path()).unwrap().count(), 0);
}

#[test]
fn fetch_is_idempotent_when_checksum_matches() {
    let tmp = tempfile::tempdir().unwrap();
    let dest = tmp.path().join("archive.tar.bz2");
    std::fs::write(&dest, b"abc").unwrap();
    // sha256("abc"); the URL is never contacted
    let sum = "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad";
    let out = run(
        tmp.path(),
        &["fetch", "--url", "http://host.invalid/x", "--sha256", sum, "--dest", p(&dest)],
    );
    assert!(ok(&out).contains("already present"));
}

#[test]
fn featurize_skips_bad_records() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("raw");
    std::fs::create_dir(&dir).unwrap();
    for name in ["dsgdb9nsd_000001.xyz", "dsgdb9nsd_000002.xyz"] {
        std::fs::copy(sample_dir().join(name), dir.join(name)).unwrap();
    }
    std::fs::write(dir.join("broken.xyz"), "3\nnot a property line\nXx 0 0 0 0\n").unwrap();
    let out_csv = tmp.path().join("f.csv");
    let stdout = ok(&run(tmp.path(), &["featurize", "--input", p(&dir), "--output", p(&out_csv)]));
    assert!(stdout.contains("featurized 2 records"));
    let skipped = std::fs::read_to_string(tmp.path().join("f.skipped.csv")).unwrap();
    assert_eq!(skipped.lines().count(), 2);
    assert!(skipped.contains("broken.xyz"));
}

/// Serves `body` to `hits` sequential HTTP requests on a loopback port.
fn serve(body: &'static [u8], hits: usize) -> String {
    use std::io::{BufRead, BufReader, Write};
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        for stream in listener.incoming().take(hits) {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut line = String::new();
            while reader.read_line(&mut line).unwrap() > 0 && line != "\r\n" {
                line.clear();
            }
            write!(stream, "HTTP/1.1 200 OK\r\nContent-Length: {}\r\nConnection: close\r\n\r\n", body.len()).unwrap();
            stream.write_all(body).unwrap();
        }
    });
    format!("http://{addr}/archive")
}

#[test]
fn fetch_verifies_checksum() {
    let tmp = tempfile::tempdir().unwrap();
    let url = serve(b"abc", 2);
    let dest = tmp.path().join("a.bin");
    let sum = "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad";
    let out = ok(&run(tmp.path(), &["fetch", "--url", &url, "--sha256", sum, "--dest", p(&dest)]));
    assert!(out.contains("fetched"));
    assert_eq!(std::fs::read(&dest).unwrap(), b"abc");

    let other = tmp.path().join("b.bin");
    let wrong = "0".repeat(64);
    let out = run(tmp.path(), &["fetch", "--url", &url, "--sha256", &wrong, "--dest", p(&other)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("checksum mismatch"));
    assert!(!other.exists());
    assert!(!tmp.path().join("b.part").exists());
}
