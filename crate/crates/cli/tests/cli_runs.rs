use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;

use tempfile::TempDir;

const CONFIG: &str = r#"
seed = 11
chains = 2

[simulate]
means = [-2.0, 2.0]
variances = [0.5, 0.5]
coefficients = [[2.5, 0.3], [2.2, 0.0]]
n = 240

[data]
timestamp_column = "t"
response_column = "y"
covariate_columns = ["x_1"]
hourly = false
log10 = false
standardize = false

[model]
num_states = 2
candidates = [2]

[sampler]
iterations = 160
adaptive_iterations = 60

[coverage]
psis = [0.5]
sizes = [200]
replicates = 2
rates = [1.0, 0.5]
iterations = 100
warmup = 10
"#;

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        let text = CONFIG.to_string()
            + &format!(
                "\n[summarize]\nrun_dir = {:?}\n",
                dir.path().join("fit").display().to_string()
            );
        fs::write(dir.path().join("run.toml"), text).unwrap();
        Self { dir }
    }

    fn path(&self, rel: &str) -> std::path::PathBuf {
        self.dir.path().join(rel)
    }

    fn hsmm(&self, args: &[&str]) -> std::process::Output {
        Command::new(env!("CARGO_BIN_EXE_hsmm"))
            .args(args)
            .arg("--config")
            .arg(self.path("run.toml"))
            .env_remove("HSMM_SEED")
            .env_remove("HSMM_OUT")
            .env("HSMM_INPUT", self.path("sim/observations.csv"))
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) {
        let out = self.hsmm(args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "timing.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn output_headers_are_stable() {
    let w = Workspace::new();
    let sim = w.path("sim");
    let fit = w.path("fit");
    w.ok(&["simulate", "--out", sim.to_str().unwrap()]);
    w.ok(&["fit", "--out", fit.to_str().unwrap()]);
    let cov = w.path("cov");
    w.ok(&["coverage", "--out", cov.to_str().unwrap()]);

    let golden = [
        ("sim/observations.csv", "t,y,x_1,state"),
        ("sim/truth_segments.csv", "segment,state,start,end,duration"),
        (
            "fit/draws.csv",
            "chain,iteration,mu_1,mu_2,sigma2_1,sigma2_2,rho_1,rho_2,p_1_2,p_2_1,beta_1_0,beta_1_1,beta_2_0,beta_2_1,subsample_size,n_sub_1,n_sub_2",
        ),
        ("fit/state_draws.csv", "chain,iteration,segments"),
        ("fit/emission_summary.csv", "state,mean,mean_lower,mean_upper,variance,variance_lower,variance_upper"),
        ("fit/transitions.csv", "from,to,probability,lower,upper"),
        ("fit/segments.csv", "state,segments,rate_mean,rate_min,rate_max,duration_mean,duration_min,duration_max"),
        ("fit/beta_summary.csv", "state,coefficient,mean,sd,lower,upper,significant"),
        ("fit/state_mode.csv", "t,timestamp,y,state"),
        ("fit/state_freq.csv", "t,state,fraction"),
        ("fit/diagnostics.csv", "parameter,psrf,psrf_upper"),
        ("cov/coverage_table.csv", "rate_pct,psi_0.5_n_200"),
    ];
    for (file, expected) in golden {
        assert_eq!(header(&w.path(file)), expected, "{file}");
    }
    let beta = fs::read_to_string(fit.join("beta_summary.csv")).unwrap();
    assert!(beta.lines().nth(2).unwrap().starts_with("1,x_1,"));

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(fit.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "fit");
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert!(manifest["details"]["mpsrf"].as_f64().unwrap() > 0.0);
    assert_eq!(manifest["failures"], 0);
    let timing: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(fit.join("timing.json")).unwrap()).unwrap();
    assert!(timing["wall_clock_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn reruns_are_byte_identical_and_summaries_reproduce() {
    let w = Workspace::new();
    let sim = w.path("sim");
    let fit = w.path("fit");
    w.ok(&["simulate", "--out", sim.to_str().unwrap()]);
    let first_sim = snapshot(&sim);
    w.ok(&["fit", "--out", fit.to_str().unwrap()]);
    let first_fit = snapshot(&fit);
    w.ok(&["simulate", "--out", sim.to_str().unwrap()]);
    w.ok(&["fit", "--out", fit.to_str().unwrap()]);
    assert_eq!(first_sim, snapshot(&sim));
    assert_eq!(first_fit, snapshot(&fit));

    let summ = w.path("summ");
    w.ok(&["summarize", "--out", summ.to_str().unwrap()]);
    for file in ["emission_summary.csv", "beta_summary.csv", "segments.csv", "state_mode.csv", "diagnostics.csv"] {
        assert_eq!(fs::read(fit.join(file)).unwrap(), fs::read(summ.join(file)).unwrap(), "{file}");
    }

    let other = w.path("fit_seed");
    w.ok(&["fit", "--seed", "12", "--out", other.to_str().unwrap()]);
    assert_ne!(
        fs::read(fit.join("draws.csv")).unwrap(),
        fs::read(other.join("draws.csv")).unwrap()
    );
}

#[test]
fn state_selection_outcomes() {
    let w = Workspace::new();
    w.ok(&["simulate", "--out", w.path("sim").to_str().unwrap()]);
    let sel = w.path("sel");
    w.ok(&["select-states", "--out", sel.to_str().unwrap()]);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(sel.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["details"]["selection"]["outcome"], "no_comparison");

    let one = w.hsmm(&["select-states", "--chains", "1", "--out", sel.to_str().unwrap()]);
    assert!(!one.status.success());
    assert!(String::from_utf8_lossy(&one.stderr).contains("chains"));
}

#[test]
fn unreachable_threshold_gives_no_recommendation() {
    let w = Workspace::new();
    w.ok(&["simulate", "--out", w.path("sim").to_str().unwrap()]);
    let text = fs::read_to_string(w.path("run.toml"))
        .unwrap()
        .replace("candidates = [2]", "candidates = [2, 3]\npsrf_threshold = 1.0");
    fs::write(w.path("run.toml"), text).unwrap();
    let sel = w.path("sel");
    w.ok(&["select-states", "--out", sel.to_str().unwrap()]);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(sel.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["details"]["selection"]["outcome"], "no_recommendation");
    assert_eq!(
        fs::read_to_string(sel.join("model_selection.csv")).unwrap().lines().count(),
        3
    );
}

#[test]
fn configuration_errors_name_the_field() {
    let w = Workspace::new();
    let out = Command::new(env!("CARGO_BIN_EXE_hsmm"))
        .args(["fit", "--out"])
        .arg(w.path("x"))
        .env_remove("HSMM_INPUT")
        .output()
        .unwrap();
    assert!(String::from_utf8_lossy(&out.stderr).contains("data.input"));
    let bad = w.hsmm(&["fit", "--rate", "1.5", "--out", w.path("x").to_str().unwrap()]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("subsample_rate"));
    let cov = w.hsmm(&["coverage", "--rate", "0", "--out", w.path("x").to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&cov.stderr).contains("rates"));
}
