use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fcsimpute(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fcsimpute"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = fcsimpute(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulate(dir: &Path, n: &str, seed: &str) {
    ok(&["--seed", seed, "simulate", "--preset", "paper-main", "--censoring", "dependent", "--n", n, "--out", p(dir)]);
}

#[test]
fn simulate_validate_impute_estimate_pool() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let complete = tmp.path().join("complete");
    ok(&[
        "--seed", "4", "simulate", "--preset", "paper-main", "--n", "120", "--out", p(&data), "--complete-out",
        p(&complete),
    ]);
    for f in ["subjects.csv", "events.csv", "schema.json"] {
        assert!(data.join(f).exists() && complete.join(f).exists());
    }
    let msg = ok(&["validate", "--data", p(&data)]);
    assert!(msg.starts_with("valid: 120 subjects,"), "{msg}");
    let msg = ok(&["validate", "--data", p(&complete)]);
    assert!(msg.contains("0 missing"), "{msg}");

    let imps = tmp.path().join("imps");
    ok(&["--seed", "5", "impute", "--data", p(&data), "--out", p(&imps), "--m", "3", "--ttre-rate", "offset-consistent"]);
    let dirs: Vec<String> = ["imp_001", "imp_002", "imp_003"]
        .iter()
        .map(|d| {
            let d = imps.join(d);
            assert!(ok(&["validate", "--data", p(&d)]).contains("0 missing"));
            p(&d).to_owned()
        })
        .collect();

    let est = tmp.path().join("est.csv");
    let mut args = vec!["estimate", "--out", p(&est), "--estimand", "survival@12", "--estimand", "mcf@12", "--data"];
    args.extend(dirs.iter().map(String::as_str));
    ok(&args);
    let text = fs::read_to_string(&est).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("dataset,estimand,group,estimate,variance"));
    assert_eq!(lines.count(), 3 * 2 * 2);

    let pooled = ok(&["pool", "--input", p(&est)]);
    let mut rows = pooled.lines();
    assert_eq!(
        rows.next(),
        Some("estimand,group,m,estimate,se,ci_lower,ci_upper,within,between,df")
    );
    let rows: Vec<Vec<String>> = rows.map(|l| l.split(',').map(str::to_owned).collect()).collect();
    assert_eq!(rows.len(), 4);
    for r in &rows {
        assert_eq!(r[2], "3");
        let (est, lo, hi): (f64, f64, f64) = (r[3].parse().unwrap(), r[5].parse().unwrap(), r[6].parse().unwrap());
        assert!(lo <= est && est <= hi);
    }
    assert_eq!((rows[0][0].as_str(), rows[0][1].as_str()), ("survival@12", "0"));
}

#[test]
fn imputation_is_reproducible_from_the_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    simulate(&data, "80", "6");
    let run = |name: &str, seed: &str| {
        let out = tmp.path().join(name);
        ok(&["--seed", seed, "impute", "--data", p(&data), "--out", p(&out), "--m", "2"]);
        fs::read(out.join("imp_002").join("events.csv")).unwrap()
    };
    assert_eq!(run("a", "9"), run("b", "9"));
    assert_ne!(run("a", "9"), run("c", "10"));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    // usage errors
    assert_eq!(fcsimpute(&["simulate"]).status.code(), Some(1));
    assert_eq!(fcsimpute(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(fcsimpute(&["--help"]).status.code(), Some(0));
    // missing input
    let missing = tmp.path().join("missing");
    assert_eq!(fcsimpute(&["validate", "--data", p(&missing)]).status.code(), Some(1));

    // validation failure: a value observed after follow-up ends
    let data = tmp.path().join("data");
    simulate(&data, "60", "7");
    let subjects = fs::read_to_string(data.join("subjects.csv")).unwrap();
    let header: Vec<&str> = subjects.lines().next().unwrap().split(',').collect();
    let tc = header.iter().position(|h| *h == "tc").unwrap();
    let y3_4 = header.iter().position(|h| *h == "y3_4").unwrap();
    let mut broken = vec![subjects.lines().next().unwrap().to_owned()];
    let mut changed = false;
    for line in subjects.lines().skip(1) {
        let mut cells: Vec<String> = line.split(',').map(str::to_owned).collect();
        if !changed && cells[tc] != "12" {
            cells[y3_4] = "0.5".into();
            changed = true;
        }
        broken.push(cells.join(","));
    }
    assert!(changed);
    let bad = tmp.path().join("bad");
    fs::create_dir_all(&bad).unwrap();
    fs::write(bad.join("subjects.csv"), broken.join("\n") + "\n").unwrap();
    fs::copy(data.join("events.csv"), bad.join("events.csv")).unwrap();
    fs::copy(data.join("schema.json"), bad.join("schema.json")).unwrap();
    let out = fcsimpute(&["validate", "--data", p(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());

    // numerical failure: no recurrent events at all, so the count model cannot be fitted
    fs::write(data.join("events.csv"), "id,event_time\n").unwrap();
    let out = fcsimpute(&["impute", "--data", p(&data), "--out", p(&tmp.path().join("imps")), "--m", "2"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn study_outputs_do_not_depend_on_thread_count() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |threads: &str| {
        let out = tmp.path().join(format!("study_{threads}"));
        let table = ok(&[
            "--seed", "11", "--threads", threads, "study", "--preset", "paper-main", "--censoring", "dependent", "--n",
            "100", "--replicates", "3", "--m", "2", "--methods", "full,reduced", "--reference-n", "5000", "--out",
            p(&out),
        ]);
        assert!(table.contains("survival@12"));
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(&out)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        files
    };
    let one = run("1");
    let names: Vec<&str> = one.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(
        names,
        ["comparison.csv", "curves.csv", "replicates.csv", "study_config.json", "summary.csv"]
    );
    assert_eq!(one, run("2"));
}

#[test]
fn config_file_is_read_and_flags_override_it() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("sim.json");
    fs::write(&cfg, r#"{"n": 40}"#).unwrap();
    let a = tmp.path().join("a");
    ok(&["--seed", "1", "--config", p(&cfg), "simulate", "--out", p(&a)]);
    assert_eq!(fs::read_to_string(a.join("subjects.csv")).unwrap().lines().count(), 41);
    let b = tmp.path().join("b");
    ok(&["--seed", "1", "--config", p(&cfg), "simulate", "--n", "25", "--out", p(&b)]);
    assert_eq!(fs::read_to_string(b.join("subjects.csv")).unwrap().lines().count(), 26);

    fs::write(&cfg, "{ not json").unwrap();
    assert_eq!(fcsimpute(&["--config", p(&cfg), "simulate", "--out", p(&b)]).status.code(), Some(1));
}
