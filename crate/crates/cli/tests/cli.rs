use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn chaosfb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chaosfb"))
        .args(args)
        .output()
        .expect("run chaosfb")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn fidelity_of(out: &Output) -> f64 {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: serde_json::Value = serde_json::from_str(&stdout(out)).unwrap();
    v["fidelity"].as_f64().unwrap()
}

const PHYSICAL_ZERO_DRIVE: &str = r#"{
    "delta1_over_2pi_hz": 0.75e9, "delta2_over_2pi_hz": 0.12e9,
    "gamma1_over_2pi_hz": 1e6, "gamma2_over_2pi_hz": 0.24e9, "gamma_f_over_2pi_hz": 0.05e6,
    "mech_gamma1_over_2pi_hz": 0.01e6, "mech_gamma2_over_2pi_hz": 1.4e6,
    "omega1_over_2pi_hz": 1e6, "omega2_over_2pi_hz": 0.345e9,
    "g1_over_2pi_hz": 0.1e6, "g2_over_2pi_hz": 0.1e6,
    "epsilon1_over_2pi_hz": 0, "epsilon2_over_2pi_hz": 0
}"#;

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn fidelity_anchors() {
    let base = [
        "fidelity",
        "--nu-hz",
        "5e4",
        "--gamma1-hz",
        "5",
        "--n",
        "1e5",
        "--s",
        "0",
    ];
    let plain = fidelity_of(&chaosfb(&base));
    assert!((plain - 0.090917).abs() <= 1e-6, "{plain}");
    let mut controlled = base.to_vec();
    controlled.extend(["--m", "0.0074"]);
    let controlled = fidelity_of(&chaosfb(&controlled));
    assert!((controlled - 0.93110).abs() <= 1e-5, "{controlled}");
}

#[test]
fn zero_occupancy_is_perfect_for_coherent_input() {
    for extra in [&[][..], &["--m", "0.3"][..], &["--s", "0"][..]] {
        let mut args = vec!["fidelity", "--nu-hz", "1e4", "--gamma1-hz", "5", "--n", "0"];
        args.extend_from_slice(extra);
        let out = chaosfb(&args);
        assert!(out.status.success());
        assert_eq!(stdout(&out), "{\"fidelity\": 1.000000}\n");
    }
}

#[test]
fn single_point_sweep_matches_fidelity() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "sweep.json",
        r#"{"memory": {"nu_hz": 2e4, "n": 3e4, "gamma1_hz": 5, "m_factor": 0.1, "s_list": [1.5]}}"#,
    );
    let out = chaosfb(&["--config", &cfg, "sweep"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("nu_hz,n,s,fidelity"));
    let row: Vec<f64> = lines
        .next()
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(lines.next(), None);
    assert_eq!(&row[..3], &[2e4, 3e4, 1.5]);
    let direct = fidelity_of(&chaosfb(&[
        "fidelity",
        "--nu-hz",
        "2e4",
        "--gamma1-hz",
        "5",
        "--n",
        "3e4",
        "--s",
        "1.5",
        "--m",
        "0.1",
    ]));
    assert_eq!(format!("{:.6}", row[3]), format!("{direct:.6}"));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        "{\n  \"memory\": {\"gamma1_hz\": 5, \"nu\": 1}\n}",
    );
    let out = chaosfb(&["--config", &cfg, "sweep"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("unknown field `nu`") && err.contains("line 2"),
        "{err}"
    );

    assert_eq!(chaosfb(&["sweep"]).status.code(), Some(2));
    assert_eq!(chaosfb(&["no-such-verb"]).status.code(), Some(2));
    let out = chaosfb(&[
        "fidelity",
        "--nu-hz",
        "1",
        "--gamma1-hz",
        "1",
        "--n",
        "1",
        "--m",
        "1.5",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unresolved_step_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let text =
        format!(r#"{{"physical": {PHYSICAL_ZERO_DRIVE}, "integration": {{"t_final_us": 1}}}}"#);
    let cfg = write_config(dir.path(), "c.json", &text);
    let out_dir = dir.path().join("out");
    let out = chaosfb(&[
        "--config",
        &cfg,
        "--out",
        out_dir.to_str().unwrap(),
        "--fixed-step",
        "1e-2",
        "simulate",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_dir.exists());
}

#[test]
fn divergence_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let physical = PHYSICAL_ZERO_DRIVE
        .replace("\"g1_over_2pi_hz\": 0.1e6", "\"g1_over_2pi_hz\": 1e15")
        .replace(
            "\"epsilon1_over_2pi_hz\": 0,",
            "\"epsilon1_over_2pi_hz\": 6.6e9,",
        );
    let text = format!(r#"{{"physical": {physical}, "integration": {{"t_final_us": 1}}}}"#);
    let cfg = write_config(dir.path(), "div.json", &text);
    let out_dir = dir.path().join("out");
    let out = chaosfb(&[
        "--config",
        &cfg,
        "--out",
        out_dir.to_str().unwrap(),
        "simulate",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!out_dir.join("summary.json").exists());
}

#[test]
fn io_failure_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let out = chaosfb(&[
        "--out",
        blocker.join("sub").to_str().unwrap(),
        "repro",
        "fig8",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn zero_drive_stays_empty() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        r#"{{"physical": {PHYSICAL_ZERO_DRIVE},
            "integration": {{"t_final_us": 2, "transient_us": 1, "initial": {{}}}}}}"#
    );
    let cfg = write_config(dir.path(), "zero.json", &text);
    let out_dir = dir.path().join("run");
    let out = chaosfb(&[
        "--config",
        &cfg,
        "--out",
        out_dir.to_str().unwrap(),
        "simulate",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let csv = fs::read_to_string(out_dir.join("trajectory.csv")).unwrap();
    let mut rows = csv.lines();
    assert_eq!(
        rows.next(),
        Some("t,re_a1,im_a1,re_a2,im_a2,re_b1,im_b1,re_b2,im_b2")
    );
    let mut count = 0;
    for row in rows {
        let values: Vec<f64> = row.split(',').map(|v| v.parse().unwrap()).collect();
        assert!(values[1..].iter().all(|v| *v == 0.0), "{row}");
        count += 1;
    }
    assert!(count > 1000);

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["mean_f_hz"].as_f64(), Some(0.0));
    assert_eq!(summary["t_final_us"].as_f64(), Some(2.0));
    assert!(summary["lambda_max"].as_f64().unwrap() < 0.0);
}

#[test]
fn decouple_single_tone_signal() {
    let dir = tempfile::tempdir().unwrap();
    let (amp, omega) = (25.0, 50.0);
    let dt = 2.0 * std::f64::consts::PI / omega / 64.0;
    let mut csv = String::from("t_us,f_rad_per_us\n");
    for k in 0..64 * 512 {
        let t = k as f64 * dt;
        csv.push_str(&format!("{t:e},{:e}\n", amp * (omega * t).cos()));
    }
    let signal = write_config(dir.path(), "f.csv", &csv);
    let out = chaosfb(&["decouple", "--signal", &signal]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    // J₀(0.5)² from its power series.
    let x: f64 = amp / omega;
    let q = -x * x / 4.0;
    let j0 = 1.0 + q + q * q / 4.0 + q.powi(3) / 36.0 + q.powi(4) / 576.0;
    let m_direct = v["m_direct"].as_f64().unwrap();
    assert!(
        (m_direct - j0 * j0).abs() <= 1e-3,
        "{m_direct} vs {}",
        j0 * j0
    );
    for key in ["m_spectral", "omega_l", "omega_u", "mean_f"] {
        assert!(v[key].is_f64(), "missing {key}");
    }
}

fn assert_same_tree(a: &Path, b: &Path) {
    let mut names: Vec<_> = fs::read_dir(a)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    let mut other: Vec<_> = fs::read_dir(b)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    other.sort();
    assert_eq!(names, other);
    for name in names {
        assert_eq!(
            fs::read(a.join(&name)).unwrap(),
            fs::read(b.join(&name)).unwrap(),
            "{name:?} differs"
        );
    }
}

#[test]
fn repro_bundles_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for figure in ["fig4", "fig7", "fig8"] {
        let runs: Vec<_> = ["a", "b"]
            .iter()
            .map(|run| {
                let out_dir = dir.path().join(format!("{figure}_{run}"));
                let out = chaosfb(&["--out", out_dir.to_str().unwrap(), "repro", figure]);
                assert!(
                    out.status.success(),
                    "{}",
                    String::from_utf8_lossy(&out.stderr)
                );
                out_dir
            })
            .collect();
        assert_same_tree(&runs[0], &runs[1]);
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(runs[0].join("MANIFEST.json")).unwrap())
                .unwrap();
        assert_eq!(manifest["figure"], figure);
        for file in manifest["files"].as_array().unwrap() {
            assert!(runs[0].join(file.as_str().unwrap()).is_file());
        }
    }
}

#[test]
fn threads_flag_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let one = dir.path().join("one");
    let four = dir.path().join("four");
    for (path, threads) in [(&one, "1"), (&four, "4")] {
        let out = chaosfb(&[
            "--threads",
            threads,
            "--out",
            path.to_str().unwrap(),
            "repro",
            "fig8",
        ]);
        assert!(out.status.success());
    }
    assert_same_tree(&one, &four);
}
