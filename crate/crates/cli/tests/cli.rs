use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn aem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aem")).args(args).output().expect("spawn aem")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn simulate_writes_one_row_per_telemetry_tick() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"duration": 2.0, "weights": [1, 5, 3, 5]}"#);
    let out = dir.path().join("run.csv");
    let o = aem(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 121);
    assert!(text.starts_with("t,p_x,p_y,"));
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"duration": 1.0, "seed": 1}"#);
    let run = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        let o = aem(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", seed]);
        assert!(o.status.success());
        fs::read(out).unwrap()
    };
    assert_eq!(run("5", "a.csv"), run("5", "b.csv"));
    assert_ne!(run("5", "a.csv"), run("6", "c.csv"));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let out = out.to_str().unwrap();
    let unknown = write_config(dir.path(), "u.json", r#"{"bogus": 1}"#);
    let invalid = write_config(dir.path(), "i.json", r#"{"ellipse": {"t_rev": -1}}"#);
    for cfg in [unknown.as_str(), invalid.as_str(), "/nonexistent/config.json"] {
        let o = aem(&["simulate", "--config", cfg, "--out", out]);
        assert_eq!(o.status.code(), Some(2), "{cfg}");
    }
    let o = aem(&["simulate", "--config", &invalid, "--out", out]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("ellipse.t_rev"));

    let ok = write_config(dir.path(), "ok.json", "{}");
    assert_eq!(aem(&["sweep", "--config", &ok, "--step", "9", "--out", out]).status.code(), Some(2));
    assert_eq!(aem(&["filters", "--fs", "2000", "--fc", "1500", "--kind", "lp"]).status.code(), Some(2));
    assert_eq!(aem(&["simulate", "--out", out]).status.code(), Some(2));
}

#[test]
fn divergence_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "d.json", r#"{"human": {"kp": 1e9, "delay": 0}, "duration": 1.0}"#);
    let out = dir.path().join("d.csv");
    let o = aem(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("divergence"));
}

#[test]
fn filters_prints_coefficients_and_check() {
    for kind in ["lp", "hp"] {
        let o = aem(&["filters", "--fs", "2000", "--fc", "50", "--kind", kind]);
        assert!(o.status.success());
        let text = String::from_utf8(o.stdout).unwrap();
        for key in ["b0 =", "b1 =", "b2 =", "a1 =", "a2 ="] {
            assert!(text.contains(key), "{text}");
        }
        assert!(text.contains("-3.0103 dB (ok)"), "{text}");
    }
}

#[test]
fn sweep_writes_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.json", "{}");
    let out = dir.path().join("s.csv");
    let o = aem(&["sweep", "--config", &cfg, "--step", "5", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("theta_deg,j_ss,local_max"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 36);
    assert_eq!(rows[0][0], -85.0);
    assert_eq!(rows[35][0], 90.0);
    assert!(rows.iter().all(|r| r[1].is_finite()));
    assert!(rows.iter().any(|r| r[2] == 1.0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("local maxima"));
}
