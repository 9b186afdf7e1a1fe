use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_betalm"))
}

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn betalm")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(args: &[&str]) -> Value {
    let o = run(args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

fn schema() -> jsonschema::JSONSchema {
    let text = std::fs::read_to_string(root().join("schemas/output.schema.json")).unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    jsonschema::JSONSchema::compile(&v).unwrap()
}

fn assert_valid(doc: &Value) {
    let s = schema();
    if let Err(errors) = s.validate(doc) {
        let msgs: Vec<String> = errors.map(|e| format!("{} at {}", e, e.instance_path)).collect();
        panic!("schema violations:\n{}", msgs.join("\n"));
    };
}

/// Heteroscedastic synthetic data: `y = 1 + 2a − b + (1 + a)·e`.
fn synthetic(dir: &Path) -> PathBuf {
    let mut s = String::from("y,a,b\n");
    let mut state = 0x2545_f491_4f6c_dd1du64;
    let mut unif = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    for _ in 0..120 {
        let a = 4.0 * unif();
        let b = unif();
        let e: f64 = (0..12).map(|_| unif()).sum::<f64>() - 6.0;
        let y = 1.0 + 2.0 * a - b + (1.0 + a) * e;
        s.push_str(&format!("{y},{a},{b}\n"));
    }
    let path = dir.join("synthetic.csv");
    std::fs::write(&path, s).unwrap();
    path
}

fn hprice1() -> Option<PathBuf> {
    let p = root().join("data/hprice1.csv");
    if p.exists() {
        Some(p)
    } else {
        eprintln!("data/hprice1.csv missing; run scripts/fetch_hprice1.sh");
        None
    }
}

#[test]
fn json_outputs_match_schema() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic(dir.path());
    let d = data.to_str().unwrap();
    let common = ["--input", d, "--response", "y", "--x", "a,b"];
    let scenario = root().join("scenarios/null_size.txt");
    let with = |cmd: &str, extra: &[&str]| {
        let mut v = vec![cmd];
        v.extend_from_slice(&common);
        v.extend_from_slice(extra);
        v.extend_from_slice(&["--format", "json"]);
        v.into_iter().map(str::to_owned).collect::<Vec<_>>()
    };
    let cases = vec![
        with("test", &["--beta", "0,0.3"]),
        with("scan", &["--beta-grid", "0:0.4:0.2"]),
        with("influence", &["--beta", "0.3", "--obs", "1,5"]),
        with("influence", &["--beta", "0", "--obs", "2", "--y-grid", "-5:5:1"]),
        with("power", &["--beta", "0.3", "--delta", "0.1,-0.2"]),
        with("power", &["--beta", "0.3", "--delta", "0.1,-0.2", "--epsilon", "0.02"]),
        vec!["are".into(), "--beta-grid".into(), "0:0.5:0.1".into(), "--format".into(), "json".into()],
        vec![
            "simulate".into(),
            "--scenario".into(),
            scenario.to_str().unwrap().into(),
            "--replications".into(),
            "20".into(),
            "--format".into(),
            "json".into(),
        ],
    ];
    for args in cases {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let doc = json(&args);
        assert_eq!(doc["schema_version"], 1);
        assert_eq!(doc["command"], args[0]);
        assert_valid(&doc);
    }
}

#[test]
fn schema_rejects_malformed_documents() {
    let s = schema();
    let good = serde_json::json!({
        "schema_version": 1, "version": "0.1.0", "command": "are", "config": {},
        "results": [{"beta": 0.0, "are": 1.0}]
    });
    assert!(s.is_valid(&good));
    let mut bad = good.clone();
    bad["schema_version"] = 2.into();
    assert!(!s.is_valid(&bad));
    let mut bad = good.clone();
    bad["results"][0]["are"] = 0.5.into();
    assert!(!s.is_valid(&bad));
    let mut bad = good;
    bad["command"] = "fit".into();
    assert!(!s.is_valid(&bad));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, body: &str| {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p.to_str().unwrap().to_owned()
    };
    let code = |args: &[&str]| {
        let o = run(args);
        assert!(o.stdout.is_empty(), "no partial output on failure");
        (o.status.code().unwrap(), String::from_utf8(o.stderr).unwrap())
    };

    let ok = write("ok.csv", "y,a\n1,1\n3,2\n2,3\n5,4\n4,5\n7,6\n");
    let (c, e) = code(&["test", "--input", &ok, "--response", "y", "--x", "zz"]);
    assert_eq!(c, 2);
    assert!(e.contains("`zz`"), "{e}");

    let nn = write("nn.csv", "y,a\n1,1\n2,oops\n3,3\n");
    let (c, e) = code(&["test", "--input", &nn, "--response", "y", "--x", "a"]);
    assert_eq!(c, 2);
    assert!(e.contains("row 2") && e.contains("oops"), "{e}");

    let rank = write("rank.csv", "y,a,b\n1,1,2\n2,2,4\n3,3,6\n4,4,8\n5,5,10\n6,6,12\n1,7,14\n");
    let (c, e) = code(&["test", "--input", &rank, "--response", "y", "--x", "a,b"]);
    assert_eq!(c, 2);
    assert!(e.contains("rank deficient"), "{e}");

    // exact fit: numerical failure
    let flat = write("flat.csv", "y,a\n1,1\n1,2\n1,3\n1,4\n1,5\n1,6\n1,7\n");
    let (c, _) = code(&["test", "--input", &flat, "--response", "y", "--x", "a"]);
    assert_eq!(c, 3);

    let (c, _) = code(&["test", "--input", "/nonexistent.csv", "--response", "y", "--x", "a"]);
    assert_eq!(c, 2);
    let (c, _) = code(&["test", "--input", &ok, "--response", "y", "--x", "a", "--alpha", "1.5"]);
    assert_eq!(c, 2);
    let (c, _) = code(&["scan", "--input", &ok, "--response", "y", "--x", "a", "--beta-grid", "0:3:1"]);
    assert_eq!(c, 2);

    let sc = write("bad.txt", "n = 50\nwibble = 3\n");
    let (c, e) = code(&["simulate", "--scenario", &sc]);
    assert_eq!(c, 2);
    assert!(e.contains("line 2"), "{e}");
}

#[test]
fn csv_round_trips_full_precision() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic(dir.path());
    let d = data.to_str().unwrap();
    let doc = json(&["test", "--input", d, "--response", "y", "--x", "a,b", "--beta", "0,0.25", "--format", "json"]);
    let o = run(&["test", "--input", d, "--response", "y", "--x", "a,b", "--beta", "0,0.25", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    let mut rdr = csv::Reader::from_reader(o.stdout.as_slice());
    let header: Vec<String> = rdr.headers().unwrap().iter().map(str::to_owned).collect();
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    let results = doc["results"].as_array().unwrap();
    assert_eq!(rows.len(), results.len());
    for (rec, js) in rows.iter().zip(results) {
        for key in ["statistic", "p_value", "ess", "tss", "sigma2"] {
            let from_csv: f64 = rec[col(key)].parse().unwrap();
            assert_eq!(from_csv, js[key].as_f64().unwrap(), "{key}");
        }
    }
}

#[test]
fn scan_plot_file_and_endpoints() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic(dir.path());
    let d = data.to_str().unwrap();
    let plot = dir.path().join("plot.csv");
    let doc = json(&[
        "scan", "--input", d, "--response", "y", "--x", "a,b", "--plot-out", plot.to_str().unwrap(), "--format", "json",
    ]);
    let text = std::fs::read_to_string(&plot).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("beta,bp_stat,koenker_stat,threshold"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 16);
    assert_eq!(rows[0][0], 0.0);
    assert_eq!(rows[15][0], 0.75);
    let threshold = doc["results"]["threshold"].as_f64().unwrap();
    assert!((threshold - 5.991464547107979).abs() < 1e-12);
    assert!(rows.iter().all(|r| r[3] == threshold));

    // endpoints agree with standalone tests
    let t = json(&["test", "--input", d, "--response", "y", "--x", "a,b", "--beta", "0,0.75", "--format", "json"]);
    let stat = |kind: &str, beta: f64| {
        t["results"]
            .as_array()
            .unwrap()
            .iter()
            .find(|r| r["kind"] == kind && r["beta"].as_f64() == Some(beta))
            .unwrap()["statistic"]
            .as_f64()
            .unwrap()
    };
    assert_eq!(rows[0][1], stat("breusch_pagan_beta", 0.0));
    assert_eq!(rows[0][2], stat("koenker_beta", 0.0));
    // the scan warm-starts; on well-behaved data both land on the same root
    assert!((rows[15][1] - stat("breusch_pagan_beta", 0.75)).abs() < 1e-6 * rows[15][1].max(1.0));
    assert!((rows[15][2] - stat("koenker_beta", 0.75)).abs() < 1e-6 * rows[15][2].max(1.0));
}

#[test]
fn are_curve() {
    let o = run(&["are"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("beta,are"));
    let pts: Vec<(f64, f64)> = lines
        .map(|l| {
            let (b, a) = l.split_once(',').unwrap();
            (b.parse().unwrap(), a.parse().unwrap())
        })
        .collect();
    assert_eq!(pts.len(), 76);
    assert_eq!(pts[0], (0.0, 1.0));
    assert!(pts.windows(2).all(|w| w[1].1 >= w[0].1));
    let half = pts.iter().find(|p| p.0 == 0.5).unwrap().1;
    let exact = 9.0 / (4.0 * 2f64.sqrt()) - 2.0 / 9.0;
    assert!((half - exact).abs() < 1e-12, "{half} vs {exact}");
}

#[test]
fn influence_peaks_at_analytic_argmax() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic(dir.path());
    let d = data.to_str().unwrap();
    let beta: f64 = 0.5;
    let doc = json(&[
        "influence", "--input", d, "--response", "y", "--x", "a,b", "--beta", "0.5", "--obs", "3", "--format", "json",
    ]);
    let r = &doc["results"];
    let sigma = r["sigma2"].as_f64().unwrap().sqrt();
    let curve = &r["curves"][0];
    let y: Vec<f64> = curve["y"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    let f: Vec<f64> = curve["if2"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    let centre = y[y.len() / 2];
    let k = (0..f.len()).max_by(|&i, &j| f[i].total_cmp(&f[j])).unwrap();
    // IF² peaks where (y − ŷ)²/σ² = (β + 2)/β
    let expected = ((beta + 2.0) / beta).sqrt() * sigma;
    let step = y[1] - y[0];
    assert!(((y[k] - centre).abs() - expected).abs() <= step, "{} vs {expected}", (y[k] - centre).abs());
    let sup = curve["sup"].as_f64().unwrap();
    assert!(f[k] <= sup * (1.0 + 1e-12) && f[k] > 0.99 * sup);
    assert!(r["ges"].as_f64().unwrap() >= sup);

    let doc = json(&[
        "influence", "--input", d, "--response", "y", "--x", "a,b", "--beta", "0", "--obs", "3", "--format", "json",
    ]);
    assert_eq!(doc["results"]["ges_unbounded"], true);
    assert!(doc["results"]["ges"].is_null());
}

#[test]
fn power_at_zero_delta_is_alpha() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic(dir.path());
    let d = data.to_str().unwrap();
    let doc = json(&[
        "power", "--input", d, "--response", "y", "--x", "a,b", "--beta", "0.2", "--delta", "0,0", "--alpha", "0.1",
        "--format", "json",
    ]);
    assert_eq!(doc["results"]["power"].as_f64(), Some(0.1));
    assert_eq!(doc["results"]["ncp"].as_f64(), Some(0.0));
    let o = run(&["power", "--input", d, "--response", "y", "--x", "a,b", "--delta", "1"]);
    assert_eq!(o.status.code(), Some(2), "δ of the wrong length");
}

#[test]
fn simulate_is_deterministic() {
    let sc = root().join("scenarios/null_size.txt");
    let s = sc.to_str().unwrap();
    let a = run(&["simulate", "--scenario", s, "--replications", "40", "--seed", "9", "--format", "csv"]);
    let b = run(&["simulate", "--scenario", s, "--replications", "40", "--seed", "9", "--format", "csv"]);
    let c = run(&["simulate", "--scenario", s, "--replications", "40", "--seed", "10", "--format", "csv"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
    assert!(stdout(&a).starts_with("beta,bp_rate,bp_se,koenker_rate,koenker_se,failed\n"));
}

#[test]
fn hprice1_classical_tests() {
    let Some(p) = hprice1() else { return };
    let d = p.to_str().unwrap();
    let doc = json(&[
        "test", "--input", d, "--response", "price", "--x", "lotsize,sqrft,bdrms", "--format", "json",
    ]);
    assert_valid(&doc);
    let r = doc["results"].as_array().unwrap();
    let bp = r.iter().find(|x| x["kind"] == "breusch_pagan_beta").unwrap();
    let kb = r.iter().find(|x| x["kind"] == "koenker_beta").unwrap();
    let rel = |a: f64, b: f64| (a - b).abs() / b;
    assert!(rel(bp["statistic"].as_f64().unwrap(), 30.0227) < 5e-5);
    assert!(rel(kb["statistic"].as_f64().unwrap(), 14.0924) < 5e-5);

    let o = run(&["test", "--input", d, "--response", "price", "--x", "lotsize,sqrft,bdrms"]);
    let table = stdout(&o);
    assert!(table.contains("1.365e-6"), "{table}");
}

#[test]
fn hprice1_white_design_has_nine_columns() {
    let Some(p) = hprice1() else { return };
    let d = p.to_str().unwrap();
    let doc = json(&[
        "test", "--input", d, "--response", "price", "--x", "lotsize,sqrft,bdrms", "--white", "--format", "json",
    ]);
    assert!(doc["results"].as_array().unwrap().iter().all(|r| r["df"] == 9));
    assert_eq!(doc["config"]["white"], true);
}
