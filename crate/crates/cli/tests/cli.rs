use std::fs;
use std::path::Path;
use std::process::Command;

use swssb_cli::output::{body, read_header};
use swssb_cli::spec::ExperimentSpec;

fn swssb(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_swssb")).args(args).output().expect("binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into(), String::from_utf8_lossy(&out.stderr).into())
}

fn run_spec(dir: &Path, sub: &str, text: &str, extra: &[&str]) -> (i32, String) {
    let spec = dir.join(format!("{sub}.toml"));
    fs::write(&spec, text).unwrap();
    let out = dir.join("out");
    let mut args = vec![sub, "--spec", spec.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let (code, _, err) = swssb(&args);
    (code, err)
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    body(&text).lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

const EVOLVE: &str = r#"
schema = 1
experiment = "evolve"

[evolve]
lattice = { shape = "chain", extents = [8] }
gamma = 0.1
times = [0.5, 1.0]
initial = "neel"
separations = [1, 2]
snapshots = true
"#;

#[test]
fn evolve_outputs_round_trip_their_spec() {
    let dir = tempfile::tempdir().unwrap();
    let (code, err) = run_spec(dir.path(), "evolve", EVOLVE, &[]);
    assert_eq!(code, 0, "{err}");
    let out = dir.path().join("out");
    let parsed = ExperimentSpec::parse(EVOLVE).unwrap();
    for name in ["density.csv", "correlators.csv"] {
        let h = read_header(&fs::read_to_string(out.join(name)).unwrap()).unwrap();
        assert_eq!(h.spec, parsed, "{name}");
        assert_eq!(h.experiment, "evolve");
        assert!(h.version.starts_with(env!("CARGO_PKG_VERSION")));
    }
    let snap: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("snapshot_001.json")).unwrap()).unwrap();
    let back: ExperimentSpec = serde_json::from_value(snap["spec"].clone()).unwrap();
    assert_eq!(back, parsed);
    let probs = snap["data"]["distribution"]["probabilities"].as_array().unwrap();
    let total: f64 = probs.iter().map(|p| p.as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-10);
    // density conserves charge at each time
    let rows = csv_rows(&out.join("density.csv"));
    assert_eq!(rows.len(), 16);
    for t in ["0.5", "1.0"] {
        let s: f64 = rows.iter().filter(|r| r[0] == t).map(|r| r[2].parse::<f64>().unwrap()).sum();
        assert!((s - 4.0).abs() < 1e-9);
    }
}

const DECODE: &str = r#"
schema = 1
experiment = "decode"
seed = 5

[decode]
decoders = ["com", "mwpm", "height"]
l = 200
gamma = 1.0
times = [4.0, 8.0]
r_b = [1, 2, 4, 8]
trials = 300
collapse = [{ x_exp = 1.0, y_exp = 0.0 }]
"#;

#[test]
fn stochastic_runs_are_byte_identical_across_thread_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(run_spec(a.path(), "decode", DECODE, &["--threads", "1"]).0, 0);
    assert_eq!(run_spec(b.path(), "decode", DECODE, &[]).0, 0);
    for name in ["decode.csv", "collapse.csv"] {
        let x = fs::read(a.path().join("out").join(name)).unwrap();
        let y = fs::read(b.path().join("out").join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
    let rows = csv_rows(&a.path().join("out/decode.csv"));
    assert_eq!(rows.len(), 3 * 2 * 4);
    for r in &rows {
        let (s, n): (usize, usize) = (r[4].parse().unwrap(), r[3].parse().unwrap());
        assert_eq!(n, 300);
        assert!(s <= n);
    }
}

#[test]
fn seed_flag_overrides_and_is_recorded() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(run_spec(a.path(), "decode", DECODE, &["--seed", "99"]).0, 0);
    assert_eq!(run_spec(b.path(), "decode", DECODE, &[]).0, 0);
    let ta = fs::read_to_string(a.path().join("out/decode.csv")).unwrap();
    let tb = fs::read_to_string(b.path().join("out/decode.csv")).unwrap();
    assert_eq!(read_header(&ta).unwrap().seed, Some(99));
    assert_eq!(read_header(&ta).unwrap().spec.seed, Some(99));
    assert_eq!(read_header(&tb).unwrap().seed, Some(5));
    assert_ne!(body(&ta), body(&tb));
}

#[test]
fn optimal_decoder_dominates_on_exact_chain() {
    let dir = tempfile::tempdir().unwrap();
    let spec = r#"
schema = 1
experiment = "decode"
seed = 3

[decode]
decoders = ["optimal", "com", "mwpm", "height"]
l = 5
gamma = 1.0
times = [1.0]
r_b = [1, 3]
trials = 2000
"#;
    let (code, err) = run_spec(dir.path(), "decode", spec, &[]);
    assert_eq!(code, 0, "{err}");
    let rows = csv_rows(&dir.path().join("out/decode.csv"));
    assert_eq!(rows.len(), 8);
    assert_eq!(rows[0][0], "optimal");
    for rb in ["1", "3"] {
        let p = |d: &str| -> f64 { rows.iter().find(|r| r[0] == d && r[2] == rb).unwrap()[5].parse().unwrap() };
        for h in ["com", "mwpm", "height"] {
            // shared trials: sampled optimal never loses by more than noise
            assert!(p("optimal") >= p(h) - 0.03, "R_B {rb}: optimal {} vs {h} {}", p("optimal"), p(h));
        }
    }
}

#[test]
fn analytic_experiments_emit_expected_values() {
    let dir = tempfile::tempdir().unwrap();
    let rotor = r#"
schema = 1
experiment = "rotor"

[rotor]
times = [2.0, 5.0]
r_b = [20, 40]
geometry = { kind = "edge-covering" }
q = [1.0, 2.0]
"#;
    assert_eq!(run_spec(dir.path(), "rotor", rotor, &[]).0, 0);
    let out = dir.path().join("out");
    let lengths = csv_rows(&out.join("rotor_lengths.csv"));
    assert_eq!(lengths[0][1], "8.0"); // ξ2 = 4 t̃
    assert_eq!(lengths[1][2], "40.0"); // spin-wave ξ1 = 8 t̃
    let expo = csv_rows(&out.join("rotor_exponents.csv"));
    let eta: f64 = expo[1][2].parse().unwrap();
    assert!((eta - 2.0 / (8.0 * std::f64::consts::PI * 2.0)).abs() < 1e-15);
    assert_eq!(csv_rows(&out.join("rotor_cmi.csv")).len(), 4);

    let rg = r#"
schema = 1
experiment = "rg"

[rg]
a = [0.0]
y0 = 1e-3
detunings = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6]
threshold = 1.0
"#;
    assert_eq!(run_spec(dir.path(), "rg", rg, &[]).0, 0);
    let p: f64 = csv_rows(&out.join("p_vs_a.csv"))[0][1].parse().unwrap();
    assert!((p - 0.5).abs() < 0.03, "p = {p}");

    let hydro = r#"
schema = 1
experiment = "hydro"

[hydro]
l = 200
d = 1.0
gamma_n = 1.0
times = [10.0, 40.0]
r_b = [2, 4, 8]
r = [4]
charges = [1.0]
collapse = [{ x_exp = 0.5, y_exp = 1.0 }]
"#;
    let (code, err) = run_spec(dir.path(), "hydro", hydro, &[]);
    assert_eq!(code, 0, "{err}");
    let rows = csv_rows(&out.join("hydro_cmi.csv"));
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r[2].parse::<f64>().unwrap() > 0.0));
    assert_eq!(csv_rows(&out.join("bhattacharyya.csv")).len(), 2);
    assert_eq!(csv_rows(&out.join("collapse.csv")).len(), 1);
}

#[test]
fn sampled_experiments_run() {
    let dir = tempfile::tempdir().unwrap();
    let winding = r#"
schema = 1
experiment = "winding"
seed = 1

[winding]
lattice = { shape = "ring", extents = [4] }
gamma = 1.0
times = [0.5, 1.0]
initial = "neel"
mode = "renyi2"
samples = 50
duration_factor = 2.0
acceptance_floor = 1e-3
"#;
    let (code, err) = run_spec(dir.path(), "winding", winding, &[]);
    assert_eq!(code, 0, "{err}");
    let rows = csv_rows(&dir.path().join("out/winding.csv"));
    assert_eq!(rows[1][2], "2.0");
    assert!(rows.iter().all(|r| r[8] == "true"));

    let modelf = r#"
schema = 1
experiment = "modelf"
seed = 2

[modelf]
lattice = { shape = "ring", extents = [8] }
j = 1.0
k = 1.0
beta = 1.0
gamma_phi = 1.0
gamma_n = 1.0
dt = 0.01
steps = 100
record_every = 25
observables = ["total-density", "free-energy"]
"#;
    let (code, err) = run_spec(dir.path(), "modelf", modelf, &[]);
    assert_eq!(code, 0, "{err}");
    let rows = csv_rows(&dir.path().join("out/modelf.csv"));
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r[2].parse::<f64>().unwrap().abs() < 1e-9));
    assert!(dir.path().join("out/modelf_final.json").exists());
}

#[test]
fn cmi_and_correlator_scans() {
    let dir = tempfile::tempdir().unwrap();
    let cmi = r#"
schema = 1
experiment = "cmi"

[cmi]
lattice = { shape = "chain", extents = [10] }
gamma = 0.1
times = [1.0, 4.0]
initial = "neel"
geometry = "covering"
r_b = [2, 4]
"#;
    assert_eq!(run_spec(dir.path(), "cmi", cmi, &[]).0, 0);
    let rows = csv_rows(&dir.path().join("out/cmi.csv"));
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r[2].parse::<f64>().unwrap() >= -1e-12));

    let corr = r#"
schema = 1
experiment = "correlators"

[correlators]
lattice = { shape = "chain", extents = [10] }
gamma = 0.1
times = [2.0, 4.0]
initial = "neel"
q = [2]
insertion = "single"
separations = [1, 3, 5]
collapse = [{ x_exp = 1.0, y_exp = 0.0 }, { x_exp = 0.0, y_exp = 0.0 }]
"#;
    let (code, err) = run_spec(dir.path(), "correlators", corr, &[]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(csv_rows(&dir.path().join("out/correlators.csv")).len(), 6);
    assert_eq!(csv_rows(&dir.path().join("out/collapse.csv")).len(), 2);
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    // unknown key
    let bad = EVOLVE.replace("gamma = 0.1", "gamma = 0.1\ngama = 0.2");
    assert_eq!(run_spec(dir.path(), "evolve", &bad, &[]).0, 2);
    // missing physics parameter
    let bad = EVOLVE.replace("gamma = 0.1\n", "");
    let (code, err) = run_spec(dir.path(), "evolve", &bad, &[]);
    assert_eq!(code, 2);
    assert!(err.contains("gamma"), "{err}");
    // wrong schema version
    assert_eq!(run_spec(dir.path(), "evolve", &EVOLVE.replace("schema = 1", "schema = 2"), &[]).0, 2);
    // subcommand mismatch
    assert_eq!(run_spec(dir.path(), "cmi", EVOLVE, &[]).0, 2);
    // stochastic experiment without a seed
    assert_eq!(run_spec(dir.path(), "decode", &DECODE.replace("seed = 5\n", ""), &[]).0, 2);
    // missing spec file and unknown subcommand
    assert_eq!(swssb(&["evolve", "--spec", "/nonexistent.toml"]).0, 2);
    assert_eq!(swssb(&["frobnicate"]).0, 2);
    assert_eq!(swssb(&["evolve"]).0, 2);
}

#[test]
fn physics_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    // odd ring has no Néel state
    let odd = EVOLVE.replace(r#"shape = "chain", extents = [8]"#, r#"shape = "ring", extents = [7]"#);
    let (code, err) = run_spec(dir.path(), "evolve", &odd, &[]);
    assert_eq!(code, 1, "{err}");
    assert!(err.contains("initial state") || err.contains("bipartite") || err.contains("even"), "{err}");
    // Model F on an open chain
    let modelf = r#"
schema = 1
experiment = "modelf"
seed = 2

[modelf]
lattice = { shape = "chain", extents = [8] }
j = 1.0
k = 1.0
beta = 1.0
gamma_phi = 1.0
gamma_n = 1.0
dt = 0.01
steps = 10
record_every = 5
observables = ["bond-order"]
"#;
    assert_eq!(run_spec(dir.path(), "modelf", modelf, &[]).0, 1);
}
