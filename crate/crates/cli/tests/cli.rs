use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn hotmol(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hotmol")).args(args).output().expect("binary runs")
}

fn run_ok(args: &[&str]) {
    let out = hotmol(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Data rows of a CSV output as numbers, skipping `#` lines and the column header.
fn rows(text: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let data = lines.map(|l| l.split(',').map(|f| f.parse().unwrap()).collect()).collect();
    (header, data)
}

fn assert_single_line_error(out: &Output, category: &str) {
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with(&format!("error[{category}]: ")), "{err}");
}

#[test]
fn visibility_starts_at_baseline() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    run_ok(&["--out", out.to_str().unwrap(), "--set", "sweep.power_scales=[0,1]", "visibility"]);
    for v in ["100", "190"] {
        let (header, data) = rows(&read(&out, &format!("visibility_{v}mps.csv")));
        assert_eq!(header, ["power_W", "mean_T_G1_K", "R", "visibility"]);
        assert_eq!(data.len(), 2);
        assert_eq!(data[0][3], 0.47);
        assert!(data[1][3] < data[0][3]);
    }
    assert!(out.join("plot_visibility.gp").exists());
    let record: serde_json::Value = serde_json::from_str(&read(&out, "run_record.json")).unwrap();
    assert_eq!(record["subcommand"], "visibility");
}

#[test]
fn zero_cross_section_emits_nothing() {
    let tmp = TempDir::new().unwrap();
    let cs = tmp.path().join("zero.csv");
    std::fs::write(&cs, "photon_energy_eV,sigma_cm2\n1.6,0\n3,0\n6,0\n").unwrap();
    let out = tmp.path().join("out");
    run_ok(&["--out", out.to_str().unwrap(), "--cross-section", cs.to_str().unwrap(), "spectrum"]);
    let (header, data) = rows(&read(&out, "spectrum.csv"));
    assert_eq!(header[3], "R_omega");
    assert!(!data.is_empty());
    assert!(data.iter().all(|r| r[3] == 0.0));
    let (_, totals) = rows(&read(&out, "spectrum_totals.csv"));
    assert!(totals.iter().all(|r| r[1] == 0.0 && r[2] == 0.0));
}

#[test]
fn fit_recovers_parameters_from_ion_yield_output() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("yield");
    let sweep = [
        "--set",
        "sweep.velocities=[100,190]",
        "--set",
        "sweep.power_scales=[0.4,0.7,1.0]",
        "--set",
        "sweep.beam_counts=[16]",
    ];
    let mut args = vec!["--out", out.to_str().unwrap()];
    args.extend(sweep);
    args.push("ion-yield");
    run_ok(&args);

    let fit_dir = tmp.path().join("fit");
    let data = out.join("ion_yield.csv");
    run_ok(&[
        "--out",
        fit_dir.to_str().unwrap(),
        "--set",
        "params.sigma_t1=1e-17",
        "fit",
        "--data",
        data.to_str().unwrap(),
    ]);
    let result: serde_json::Value = serde_json::from_str(&read(&fit_dir, "fit_result.json")).unwrap();
    let sigma = result["sigma_t1"].as_f64().unwrap();
    let a_ion = result["a_ion"].as_f64().unwrap();
    assert!((sigma / 2e-17 - 1.0).abs() < 1e-3, "σ = {sigma}");
    assert!((a_ion / 5e9 - 1.0).abs() < 1e-2, "A = {a_ion}");
    let (_, curves) = rows(&read(&fit_dir, "fit_curves.csv"));
    assert_eq!(curves.len(), 6);
}

#[test]
fn outputs_are_deterministic() {
    let tmp = TempDir::new().unwrap();
    let run = |name: &str| {
        let dir = tmp.path().join(name);
        run_ok(&["--out", dir.to_str().unwrap(), "--seed", "11", "--set", "oracle.samples=10000", "oracle"]);
        run_ok(&["--out", dir.to_str().unwrap(), "--set", "cool.trajectory_points=11", "cool"]);
        dir
    };
    let (a, b) = (run("a"), run("b"));
    let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 6);
    for name in names {
        let name = name.to_str().unwrap();
        assert_eq!(read(&a, name), read(&b, name), "{name}");
    }
}

#[test]
fn every_table_carries_a_provenance_header() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let dir = out.to_str().unwrap();
    run_ok(&["--out", dir, "--set", "sweep.power_scales=[0,0.5]", "--set", "sweep.beam_counts=[10]", "detector"]);
    run_ok(&["--out", dir, "--set", "sweep.power_scales=[0,0.5]", "tempdist"]);
    run_ok(&["--out", dir, "--set", "cool.trajectory_points=5", "cool"]);
    run_ok(&["--out", dir, "spectrum"]);
    let mut csvs = 0;
    for entry in std::fs::read_dir(&out).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "csv") {
            let text = std::fs::read_to_string(&path).unwrap();
            assert!(text.starts_with("# "), "{}", path.display());
            assert!(text.contains("seed"), "{}", path.display());
            csvs += 1;
        }
    }
    assert!(csvs >= 6);
}

#[test]
fn bad_inputs_fail_with_one_line_and_no_outputs() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let dir = out.to_str().unwrap();

    let unsorted = tmp.path().join("unsorted.csv");
    std::fs::write(&unsorted, "photon_energy_eV,sigma_cm2\n3,1e-18\n2,1e-18\n").unwrap();
    let out_a = hotmol(&["--out", dir, "--cross-section", unsorted.to_str().unwrap(), "spectrum"]);
    assert_single_line_error(&out_a, "parse");
    assert!(String::from_utf8_lossy(&out_a.stderr).contains("line 3"));

    let garbled = tmp.path().join("garbled.csv");
    std::fs::write(&garbled, "photon_energy_eV,sigma_cm2\n2,abc\n").unwrap();
    assert_single_line_error(
        &hotmol(&["--out", dir, "--cross-section", garbled.to_str().unwrap(), "spectrum"]),
        "parse",
    );

    let config = tmp.path().join("bad.json");
    std::fs::write(&config, r#"{"beamline": {"max_power": 10.8, "mystery": 1}}"#).unwrap();
    assert_single_line_error(&hotmol(&["--out", dir, "--config", config.to_str().unwrap(), "spectrum"]), "config");

    assert_single_line_error(&hotmol(&["--out", dir, "--set", "beamline.max_power=-1", "spectrum"]), "config");
    assert_single_line_error(&hotmol(&["--out", dir, "--set", "params.a_ion=-1", "ion-yield"]), "input");

    let data = tmp.path().join("data.csv");
    std::fs::write(&data, "v_mps,power_W,n_beams\n100,5,10\n").unwrap();
    assert_single_line_error(&hotmol(&["--out", dir, "fit", "--data", data.to_str().unwrap()]), "parse");

    assert_single_line_error(&hotmol(&["--out", dir, "--cross-section", "/nonexistent.csv", "spectrum"]), "io");
    assert_single_line_error(&hotmol(&["--out", dir, "frobnicate"]), "usage");

    assert!(!out.exists());
}

#[test]
fn overrides_and_config_files_agree() {
    let tmp = TempDir::new().unwrap();
    let config = tmp.path().join("run.json");
    std::fs::write(&config, r#"{"spectrum": {"temperatures": [2000], "energy_points": 11}}"#).unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run_ok(&["--out", a.to_str().unwrap(), "--config", config.to_str().unwrap(), "spectrum"]);
    run_ok(&[
        "--out",
        b.to_str().unwrap(),
        "--set",
        "spectrum.temperatures=[2000]",
        "--set",
        "spectrum.energy_points=11",
        "spectrum",
    ]);
    let strip = |t: String| t.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n");
    assert_eq!(strip(read(&a, "spectrum.csv")), strip(read(&b, "spectrum.csv")));
    let (_, data) = rows(&read(&a, "spectrum.csv"));
    assert_eq!(data.len(), 11);
}
