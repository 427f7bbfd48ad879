use std::fs;
use std::process::{Command, Output};

fn qp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quasipot"))
        .args(args)
        .env("QP_LOG", "warn")
        .output()
        .unwrap()
}

fn error_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().unwrap_or("");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("{e}: {text}"))
}

#[test]
fn presets_parse_back() {
    for n in 1..=5 {
        let out = qp(&["preset", &n.to_string()]);
        assert!(out.status.success());
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert!(v["system"]["name"].is_string());
    }
    let out = qp(&["preset", "9"]);
    assert!(!out.status.success());
}

#[test]
fn invalid_config_lists_every_issue() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    let text = String::from_utf8(qp(&["preset", "1"]).stdout).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["data"]["dt"] = serde_json::json!(-1.0);
    v["sampling"]["radius"] = serde_json::json!(0.0);
    fs::write(&cfg, v.to_string()).unwrap();
    let out = qp(&["generate", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("d").to_str().unwrap()]);
    assert!(!out.status.success());
    let e = error_json(&out);
    assert_eq!(e["error"], "config");
    let details = e["details"].as_array().unwrap();
    assert!(details.len() >= 2, "{details:?}");
}

#[test]
fn missing_file_is_reported_as_json() {
    let out = qp(&["eval", "--model", "/nonexistent/m.json", "--data", "/nonexistent/d", "--config", "/nonexistent/c.json", "--out", "/tmp/x.json"]);
    assert!(!out.status.success());
    let e = error_json(&out);
    assert!(e["message"].as_str().unwrap().contains("c.json"));
}

#[test]
fn params_file_supplies_yeast_constants() {
    let dir = tempfile::tempdir().unwrap();
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let cfg = dir.path().join("ex3.json");
    let text = String::from_utf8(qp(&["preset", "3"]).stdout).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["data"]["n_trajectories"] = serde_json::json!(10);
    v["data"]["t_final"] = serde_json::json!(2.0);
    v["data"]["stride"] = serde_json::json!(10);
    fs::write(&cfg, v.to_string()).unwrap();
    let data = dir.path().join("d.qptd");
    let (c, d) = (cfg.to_str().unwrap(), data.to_str().unwrap());
    let out = qp(&["generate", "--config", c, "--out", d]);
    assert!(!out.status.success());
    let e = error_json(&out);
    assert!(e["details"].as_array().unwrap().len() >= 11);
    let params = root.join("configs/yeast_params.json");
    let out = qp(&["--params", params.to_str().unwrap(), "generate", "--config", c, "--out", d]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(data.exists());
}

#[test]
fn fixture_decompose_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let fx = dir.path().join("fx.json");
    fs::write(&fx, r#"{"version": 1, "fixture": "limitcycle2d"}"#).unwrap();
    let pts = dir.path().join("p.csv");
    fs::write(&pts, "x1,x2\n1.5,2.5\n0.0,3.0\n").unwrap();
    let out_path = dir.path().join("o.json");
    let out = qp(&["decompose", "--model", fx.to_str().unwrap(), "--points", pts.to_str().unwrap(), "--out", out_path.to_str().unwrap(), "--format", "json"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out_path).unwrap()).unwrap();
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    for r in rows {
        assert!(r["cosine"].as_f64().unwrap().abs() < 1e-12, "{r}");
    }
}
