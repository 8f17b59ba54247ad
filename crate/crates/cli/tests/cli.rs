use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rpg_cli::metrics_log::{read_log, ratio_below_one};
use rpg_cli::train::SummaryFile;

fn rpg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rpg")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

const BOWL_J: &str = r#"variant = "j"
total_steps = 25000
probe_count = 8

[env]
kind = "landscape"
function = "quadratic"
dim = 4
"#;

const SHORT_T: &str = r#"variant = "t"
total_steps = 500
lr = 0.1
max_step_norm = 0.5
probe_count = 16
"#;

fn train(config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["train", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    rpg(&args)
}

fn without_wall_time(csv: &str) -> String {
    csv.lines().map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head)).collect::<Vec<_>>().join("\n")
}

#[test]
fn verify_single_suite_passes() {
    let o = rpg(&["verify", "--suite", "sherman-morrison"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let text = stdout(&o);
    assert!(text.contains("PASS sherman-morrison") && text.contains("1 suites, 1 passed"));
}

#[test]
fn verify_alias_reports_skip_count() {
    let o = rpg(&["verify", "--suite", "prop2"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("exp-decomposition"));
    assert!(stdout(&o).contains("skipped"));
}

#[test]
fn verify_unknown_suite_exits_2() {
    let o = rpg(&["verify", "--suite", "nosuch"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nosuch"));
}

#[test]
fn train_bowl_j_reaches_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bowl.toml", BOWL_J);
    let out = dir.path().join("run");
    let o = train(&cfg, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary: SummaryFile = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert!(summary.final_return >= -1e-4, "{}", summary.final_return);
    assert_eq!(summary.seed, 0);
    for f in ["metrics.csv", "metric.rpgp", "metric.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
}

#[test]
fn invalid_gamma_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "variant = \"j\"\ngamma = 1.5\n");
    let o = train(&cfg, &dir.path().join("run"), &[]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("gamma") && err.contains("line 2"), "{err}");
}

#[test]
fn unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "variant = \"j\"\nlearning_rate = 0.1\n");
    let o = train(&cfg, &dir.path().join("run"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("learning_rate"), "{}", stderr(&o));
}

#[test]
fn same_seed_gives_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "t.toml", SHORT_T);
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for out in [&a, &b] {
        assert!(train(&cfg, out, &["--seed", "5"]).status.success());
    }
    assert!(train(&cfg, &c, &["--seed", "6"]).status.success());
    let read = |p: &Path| without_wall_time(&std::fs::read_to_string(p.join("metrics.csv")).unwrap());
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    assert_eq!(std::fs::read(a.join("metric.rpgp")).unwrap(), std::fs::read(b.join("metric.rpgp")).unwrap());
}

#[test]
fn summary_fraction_matches_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "t.toml", SHORT_T);
    let out = dir.path().join("run");
    assert!(train(&cfg, &out, &[]).status.success());
    let summary: SummaryFile = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let rows = read_log(&out.join("metrics.csv")).unwrap();
    assert_eq!(rows.len(), summary.updates);
    assert_eq!(ratio_below_one(&rows), summary.ratio_below_one);
}

fn synthetic_log(path: &Path, ratio: f64) {
    let mut text = String::from("#schema=rpg-metrics/1\nstep,return,div,hessian_trace,ratio,gate,wall_ms\n");
    for i in 1..=10 {
        text += &format!("{},{},{},-2,{ratio},0,1.5\n", 50 * i, -1.0 / i as f64, -2.0 * ratio);
    }
    std::fs::write(path, text).unwrap();
}

fn assert_svg(path: &Path) -> usize {
    let text = std::fs::read_to_string(path).unwrap();
    let doc = roxmltree::Document::parse(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    doc.descendants().filter(|n| n.attribute("class") == Some("legend")).count()
}

#[test]
fn report_single_log_writes_three_charts() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("half.csv");
    synthetic_log(&log, 0.5);
    let plots = dir.path().join("plots");
    let o = rpg(&["report", log.to_str().unwrap(), "--plot", plots.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("1.00"), "{}", stdout(&o));
    let mut svgs: Vec<_> = std::fs::read_dir(&plots).unwrap().map(|e| e.unwrap().path()).collect();
    svgs.sort();
    assert_eq!(svgs.len(), 3);
    for p in &svgs {
        assert_eq!(assert_svg(p), 1);
    }
    let ratio = std::fs::read_to_string(plots.join("half_ratio.svg")).unwrap();
    assert!(ratio.contains(r#"class="reference""#));
}

#[test]
fn report_two_logs_overlays_with_legend() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("low.csv"), dir.path().join("high.csv"));
    synthetic_log(&a, 0.5);
    synthetic_log(&b, 2.0);
    let plots = dir.path().join("plots");
    let o = rpg(&["report", a.to_str().unwrap(), b.to_str().unwrap(), "--plot", plots.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    for metric in ["return", "ratio", "hessian_trace"] {
        let overlay = plots.join(format!("overlay_{metric}.svg"));
        assert_eq!(assert_svg(&overlay), 2);
        let text = std::fs::read_to_string(&overlay).unwrap();
        assert!(text.contains(r#"data-name="low""#) && text.contains(r#"data-name="high""#));
    }
    assert_eq!(std::fs::read_dir(&plots).unwrap().count(), 9);
}

#[test]
fn malformed_log_exits_1_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("bad.csv");
    std::fs::write(&log, "#schema=rpg-metrics/1\nstep,return,div,hessian_trace,ratio,gate,wall_ms\n50,-1,0,0,abc,0,1\n").unwrap();
    let o = rpg(&["report", log.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 3") && stderr(&o).contains("ratio"), "{}", stderr(&o));
}
