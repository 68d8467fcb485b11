use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn secgraph(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_secgraph"))
        .args(args)
        .current_dir(dir)
        .env_remove("SECGRAPH_OUT_DIR")
        .output()
        .unwrap()
}

/// Drops the wall-clock columns so runs can be compared.
fn counters(csv: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    lines
        .map(|l| {
            l.split(',')
                .zip(&header)
                .filter(|(_, h)| !h.ends_with("_ms"))
                .map(|(v, _)| v)
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect()
}

#[test]
fn generate_then_build_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let out = secgraph(&["generate", "--vertices", "200", "--pairs", "600", "-o", "g.txt"], dir.path());
    assert!(out.status.success());
    let args = [
        "build", "--dataset", "g.txt", "--protocol", "secgraph,vsecgraph", "--fraction", "0.5,1",
        "--churn", "0.05",
    ];
    let a = secgraph(&args, dir.path());
    let b = secgraph(&args, dir.path());
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let (a, b) = (String::from_utf8(a.stdout).unwrap(), String::from_utf8(b.stdout).unwrap());
    assert_eq!(counters(&a), counters(&b));
    let rows = counters(&a);
    assert_eq!(rows.len(), 4);
    assert!(a.starts_with("protocol,fraction,edges,postings"));
    assert!(a.lines().nth(2).unwrap().starts_with("secgraph,1.0,1200,1200,0"));
}

#[test]
fn output_file_and_search_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = secgraph(
        &[
            "search", "--protocol", "vsecgraph", "--keywords", "1,3", "--repetitions", "2", "--background", "200",
            "--posting-size", "20", "--overlap", "4", "-o", "nested/search.csv",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("nested/search.csv")).unwrap();
    let mut reader = csv::Reader::from_reader(csv.as_bytes());
    let headers = reader.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let rows: Vec<_> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    for row in &rows {
        let n: u64 = row[col("n")].parse().unwrap();
        assert_eq!(&row[col("decryptions")], "20");
        assert!(row[col("membership_checks")].parse::<u64>().unwrap() <= 20 * (n - 1));
        assert!(row[col("result_size")].parse::<u64>().unwrap() >= 4);
    }
}

#[test]
fn exit_codes_name_the_failure() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.txt"), "1 2\nthree 4\n").unwrap();
    let code = |args: &[&str]| secgraph(args, dir.path()).status.code();
    assert_eq!(code(&["build", "--protocol", "secgraph"]), Some(2));
    assert_eq!(code(&["build", "--dataset", "missing.txt"]), Some(3));
    assert_eq!(code(&["build", "--dataset", "bad.txt", "--protocol", "secgraph"]), Some(4));
    assert_eq!(code(&["search", "--fraction", "0"]), Some(2));
    let stderr = String::from_utf8(secgraph(&["build", "--dataset", "bad.txt"], dir.path()).stderr).unwrap();
    assert!(stderr.starts_with("secgraph: "), "{stderr}");
    assert!(stderr.contains("line 2"), "{stderr}");
}
