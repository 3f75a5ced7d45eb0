use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Output};

fn autonoc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_autonoc"))
        .args(args)
        .env_remove("AUTONOC_LLM_URL")
        .env_remove("AUTONOC_LLM_KEY")
        .env("RUST_BACKTRACE", "0")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn run_writes_transcripts_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = autonoc(&[
        "run",
        "--task",
        "1",
        "--mode",
        "autolight",
        "--trials",
        "2",
        "--seed",
        "5",
        "--out",
        out,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("n/a (scripted)"));
    for i in 0..2 {
        let t = dir
            .path()
            .join(format!("transcripts/task1-autolight-{i}.jsonl"));
        let first = std::fs::read_to_string(&t).unwrap();
        let header: serde_json::Value =
            serde_json::from_str(first.lines().next().unwrap()).unwrap();
        assert_eq!(header["record"], "trial");
        assert_eq!(header["trial_index"], i);
    }
    let rows = csv_rows(&dir.path().join("summary.csv"));
    assert_eq!(
        rows[0],
        [
            "section",
            "task",
            "mode",
            "checkpoint",
            "trials",
            "passed",
            "rate"
        ]
    );
    assert_eq!(
        rows[1],
        ["completion", "task1", "autolight", "all", "2", "2", "1.0"]
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    let seeds: Vec<u64> = report["trials"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["seed"].as_u64().unwrap())
        .collect();
    assert_eq!(seeds, [5, 6]);
    assert!(dir.path().join("l4_checklist.json").exists());

    let again = autonoc(&["report", out]);
    assert!(again.status.success(), "{}", stderr(&again));
    assert!(stdout(&again).contains("task1"));
}

#[test]
fn run_rejects_bad_arguments() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert!(
        !autonoc(&["run", "--trials", "0", "--task", "2", "--out", out])
            .status
            .success()
    );
    assert!(!autonoc(&["run", "--task", "7", "--out", out])
        .status
        .success());
    assert!(!autonoc(&["run", "--mode", "swarm", "--out", out])
        .status
        .success());
    let remote = autonoc(&["run", "--backend", "remote", "--task", "1", "--out", out]);
    assert!(!remote.status.success());
    assert!(
        stderr(&remote).contains("AUTONOC_LLM_URL"),
        "{}",
        stderr(&remote)
    );
}

/// Answers every chat request with a final answer.
fn fake_endpoint() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!(
        "http://{}/v1/chat/completions",
        listener.local_addr().unwrap()
    );
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if line == "\r\n" || line.is_empty() {
                    break;
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let reply = r#"{"choices":[{"message":{"role":"assistant","content":"FINAL: status=done nothing to do"}}]}"#;
            write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                reply.len()
            )
            .unwrap();
        }
    });
    url
}

#[test]
fn remote_backend_reads_the_endpoint_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_autonoc"))
        .args([
            "run",
            "--backend",
            "remote",
            "--task",
            "1",
            "--mode",
            "single",
            "--trials",
            "1",
        ])
        .arg("--out")
        .arg(dir.path())
        .env("AUTONOC_LLM_URL", fake_endpoint())
        .env("AUTONOC_LLM_KEY", "test-key")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    let t = &report["trials"][0];
    assert_eq!(t["backend"], "remote");
    assert_eq!(t["session_end"], "final");
    // Answering without doing anything cannot pass the checkpoints.
    assert_eq!(t["completed"], false);
    let log =
        std::fs::read_to_string(dir.path().join("transcripts/task1-single_agent-0.jsonl")).unwrap();
    assert!(!log.contains("test-key"));
}

#[test]
fn inject_failure_diagnoses_each_kind() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (
            "kind = \"fiber-aging\"\nspan_id = \"span3\"\ndelta_db = 3.0\n",
            "power-loss",
            "span3",
        ),
        (
            "kind = \"mpi\"\nlink_id = \"dc-link-5\"\nratio_db = -20.0\n",
            "interference",
            "dc-link-5",
        ),
        (
            "kind = \"transponder-outage\"\ntransponder_id = \"t5\"\n",
            "transmitter-fault",
            "t5",
        ),
    ];
    for (i, (spec, class, element)) in cases.into_iter().enumerate() {
        let path = dir.path().join(format!("f{i}.toml"));
        std::fs::write(&path, spec).unwrap();
        let o = autonoc(&["inject-failure", "--spec", path.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
        assert_eq!(v["class"], class);
        assert_eq!(v["localized"], element);
    }
    let bad = dir.path().join("bad.toml");
    std::fs::write(
        &bad,
        "kind = \"fiber-aging\"\nspan_id = \"span9\"\ndelta_db = 3.0\n",
    )
    .unwrap();
    assert!(
        !autonoc(&["inject-failure", "--spec", bad.to_str().unwrap()])
            .status
            .success()
    );
    assert!(!autonoc(&["inject-failure", "--spec", "/nonexistent.toml"])
        .status
        .success());
}

#[test]
fn topo_show_prints_the_default_network() {
    let o = autonoc(&["topo", "show"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("backbone: 4 spans, 6 amplifiers"));
    assert_eq!(text.matches("OSNR 24.98 dB").count(), 6);
    let j = autonoc(&["topo", "show", "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&j.stdout).unwrap();
    assert_eq!(v["backbone"]["spans"].as_array().unwrap().len(), 4);
    assert_eq!(v["metro"]["nodes"].as_array().unwrap().len(), 14);
}

#[test]
fn retrieve_uses_the_given_corpus() {
    let o = autonoc(&["retrieve", "fiber aging span loss", "--k", "1"]);
    assert!(stdout(&o).contains("fiber-aging-guide"));
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("alpha.md"), "# Pumps\nlaser pump current\n").unwrap();
    std::fs::write(dir.path().join("beta.txt"), "# Fans\nfan speed\n").unwrap();
    let o = autonoc(&["retrieve", "fan", "--corpus", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 1);
    assert!(stdout(&o).contains("beta / Fans"));
}

#[test]
fn report_needs_a_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    assert!(!autonoc(&["report", dir.path().to_str().unwrap()])
        .status
        .success());
}
