mod common;

use std::path::Path;
use std::process::Command;

use proxysynth::blockgen::default_library;
use proxysynth::cli::{run, PROGRAM_FILE, REPORT_FILE, SOURCE_FILE, TRACE_FILE};
use proxysynth::measure::export_counts;
use proxysynth::model::{predict_events, ProxyProgram};
use proxysynth::{AccuracyReport, AlignmentTrace};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Output {
    code: i32,
    out: String,
    err: String,
}

fn cli(args: &[&str]) -> Output {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let mut argv = vec!["proxysynth"];
    argv.extend_from_slice(args);
    let code = run(argv, &mut out, &mut err);
    Output { code, out: String::from_utf8(out).unwrap(), err: String::from_utf8(err).unwrap() }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_counts(dir: &Path, name: &str, program: &ProxyProgram) -> String {
    let path = dir.join(name);
    let counts = predict_events(program, &default_library()).unwrap();
    std::fs::write(&path, export_counts(&counts)).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn library_init_show_validate() {
    let dir = tempfile::tempdir().unwrap();
    let lib = dir.path().join("lib.json");
    assert_eq!(cli(&["library", "init-default", s(&lib)]).code, 0);
    let v = cli(&["library", "validate", s(&lib)]);
    assert_eq!(v.code, 0, "{}", v.err);
    let show = cli(&["library", "show", s(&lib)]);
    assert_eq!(show.code, 0);
    assert_eq!(show.out.lines().count(), default_library().len());
    assert!(show.out.lines().next().unwrap().contains("memory_access\tstride="));

    let int = dir.path().join("int.json");
    assert_eq!(cli(&["library", "init-default", s(&int), "--int-only"]).code, 0);
    assert!(cli(&["library", "show", s(&int)]).out.lines().count() < default_library().len());
}

#[test]
fn validate_names_the_corrupt_block() {
    let dir = tempfile::tempdir().unwrap();
    let lib = dir.path().join("lib.json");
    cli(&["library", "init-default", s(&lib)]);
    let text = std::fs::read_to_string(&lib).unwrap();
    let corrupt = text.replacen("\"l1d_misses\": 5005000.0", "\"l1d_misses\": 90000000.0", 1);
    assert_ne!(corrupt, text);
    std::fs::write(&lib, corrupt).unwrap();
    let v = cli(&["library", "validate", s(&lib)]);
    assert_ne!(v.code, 0);
    assert!(v.out.is_empty());
    assert!(v.err.contains("mem_s8_b67108864"), "{}", v.err);
    assert!(v.err.contains("l1d_misses"), "{}", v.err);
    assert!(v.err.contains("l1d_accesses"), "{}", v.err);
}

#[test]
fn noiseless_align_prints_full_accuracy_and_four_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let lib_path = dir.path().join("lib.json");
    cli(&["library", "init-default", s(&lib_path)]);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (_, targets, ins) = common::hidden_reference(&mut rng, &default_library());
    let t_path = dir.path().join("targets.json");
    std::fs::write(&t_path, targets.to_json()).unwrap();

    let out = dir.path().join("run");
    let ins1 = ins.to_string();
    let args = ["align", "--targets", s(&t_path), "--library", s(&lib_path), "--out", s(&out), "--noise", "none", "--ins1", &ins1];
    let r = cli(&args);
    assert_eq!(r.code, 0, "{}", r.err);
    assert_eq!(r.out.lines().count(), 5);
    for line in r.out.lines() {
        let (_, pct) = line.split_once('\t').unwrap();
        let v: f64 = pct.trim_end_matches('%').parse().unwrap();
        assert!((v - 100.0).abs() <= 0.1, "{line}");
    }
    let mut names: Vec<String> = std::fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    let mut want = [PROGRAM_FILE, SOURCE_FILE, REPORT_FILE, TRACE_FILE];
    want.sort();
    assert_eq!(names, want);

    let trace = AlignmentTrace::from_json(&std::fs::read_to_string(out.join(TRACE_FILE)).unwrap()).unwrap();
    assert_eq!(trace.rounds.len(), 10);
    let report = AccuracyReport::from_json(&std::fs::read_to_string(out.join(REPORT_FILE)).unwrap()).unwrap();
    assert_eq!(report.metrics.len(), 14);
    assert!(report.metadata.library_hash.is_some());
    assert_eq!(report.metadata.config.as_ref().unwrap().rounds, 10);
}

#[test]
fn align_is_reproducible_and_honors_rounds() {
    let dir = tempfile::tempdir().unwrap();
    let lib = dir.path().join("lib.json");
    cli(&["library", "init-default", s(&lib)]);
    let t = dir.path().join("t.json");
    std::fs::write(&t, r#"{"metrics":{"cpi":1.2,"branch_miss_rate":0.02,"l1d_miss_rate":0.05}}"#).unwrap();
    let run_to = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut args = vec!["align", "--targets", s(&t), "--library", s(&lib), "--out", s(&out), "--seed", "9"];
        args.extend_from_slice(extra);
        let r = cli(&args);
        assert_eq!(r.code, 0, "{}", r.err);
        (out, r.out)
    };
    let (a, out_a) = run_to("a", &[]);
    let (b, out_b) = run_to("b", &[]);
    assert_eq!(out_a, out_b);
    for f in [PROGRAM_FILE, SOURCE_FILE, TRACE_FILE, REPORT_FILE] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let (c, _) = run_to("c", &["--rounds", "1"]);
    let trace = AlignmentTrace::from_json(&std::fs::read_to_string(c.join(TRACE_FILE)).unwrap()).unwrap();
    assert_eq!(trace.rounds.len(), 1);
}

#[test]
fn align_errors_go_to_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let lib = dir.path().join("lib.json");
    cli(&["library", "init-default", s(&lib)]);
    let t = dir.path().join("t.json");
    std::fs::write(&t, r#"{"metrics":{"cpi":1.2}}"#).unwrap();
    let out = dir.path().join("o");

    let r = cli(&["align", "--targets", s(&t), "--library", s(&lib), "--out", s(&out), "--eps", "1e300"]);
    assert_eq!(r.code, 1);
    assert!(r.out.is_empty());
    assert!(r.err.contains("round 1"), "{}", r.err);
    assert!(!out.exists());

    let r = cli(&["align", "--targets", s(&t), "--library", s(&lib), "--out", s(&out), "--noise", "uniform:2"]);
    assert_eq!(r.code, 1);
    assert!(r.err.contains("uniform noise"), "{}", r.err);

    let r = cli(&["align", "--targets", "missing.json", "--library", s(&lib), "--out", s(&out)]);
    assert_eq!(r.code, 1);
    assert!(r.err.contains("missing.json"), "{}", r.err);

    let r = cli(&["align", "--targets", s(&t)]);
    assert_eq!(r.code, 2);
    assert!(r.out.is_empty());
}

#[test]
fn render_program_and_block() {
    let dir = tempfile::tempdir().unwrap();
    let lib = dir.path().join("lib.json");
    cli(&["library", "init-default", s(&lib)]);
    let p = dir.path().join("p.json");
    let program = ProxyProgram::from_entries([("br_t256", 1000), ("mem_s64_b67108864", 200)]);
    std::fs::write(&p, program.to_json()).unwrap();
    let r = cli(&["render", "--library", s(&lib), "--program", s(&p)]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert!(r.out.contains("int main(void)"));
    assert_eq!(r.out.matches("for (").count(), 2);

    let b = cli(&["render", "--library", s(&lib), "--block", "br_t256", "--iterations", "5"]);
    assert_eq!(b.code, 0);
    assert!(b.out.contains("5ULL"));
    assert!(!b.out.contains("int main"));

    let f = dir.path().join("x.c");
    assert_eq!(cli(&["render", "--library", s(&lib), "--program", s(&p), "--out", s(&f)]).code, 0);
    assert_eq!(std::fs::read_to_string(&f).unwrap(), r.out);

    assert_ne!(cli(&["render", "--library", s(&lib), "--block", "nope", "--iterations", "1"]).code, 0);
}

#[test]
fn import_counts_canonicalizes_and_reports_lines() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("a.counts");
    std::fs::write(&f, "# run 1\n  instructions = 1000\ncycles=1.5e3 # tail\n").unwrap();
    let r = cli(&["import-counts", s(&f)]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert_eq!(r.out, "cycles=1500\ninstructions=1000\n");

    std::fs::write(&f, "cycles=1\nbogus=2\n").unwrap();
    let r = cli(&["import-counts", s(&f)]);
    assert_eq!(r.code, 1);
    assert!(r.err.contains("a.counts") && r.err.contains("line 2"), "{}", r.err);
}

#[test]
fn evaluate_single_pair_table() {
    let dir = tempfile::tempdir().unwrap();
    let real = ProxyProgram::from_entries([("br_t256", 3_000_000), ("mem_s64_b67108864", 1_000_000), ("ar_fp_add8_sub4_div4", 500_000)]);
    let a = write_counts(dir.path(), "a.counts", &real);
    let same = cli(&["evaluate", "--real", &a, "--proxy", &a]);
    assert_eq!(same.code, 0, "{}", same.err);
    let rows: Vec<&str> = same.out.lines().skip(1).take(14).collect();
    assert_eq!(rows.len(), 14);
    for row in rows {
        assert_eq!(row.split('\t').nth(3), Some("1"), "{row}");
    }
    assert!(same.out.contains("category\taccuracy\nprocessor_performance\t100.0%\n"));

    // cycles 20% high: cpi accuracy 0.8, every other metric untouched
    let dir2 = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(&a).unwrap();
    let scaled: String = text
        .lines()
        .map(|l| match l.strip_prefix("cycles=") {
            Some(v) => format!("cycles={}\n", v.parse::<f64>().unwrap() * 1.25),
            None => format!("{l}\n"),
        })
        .collect();
    let b = dir2.path().join("b.counts");
    std::fs::write(&b, scaled).unwrap();
    let report_path = dir2.path().join("r.json");
    let r = cli(&["evaluate", "--real", &a, "--proxy", s(&b), "--report", s(&report_path)]);
    assert_eq!(r.code, 0, "{}", r.err);
    let report = AccuracyReport::from_json(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    for row in &report.metrics {
        let want = if row.metric == "cpi" { 0.75 } else { 1.0 };
        assert!((row.accuracy - want).abs() < 1e-12, "{}: {}", row.metric, row.accuracy);
    }
    assert!(r.out.contains("processor_performance\t75.0%"), "{}", r.out);
}

#[test]
fn evaluate_series_mode() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let lib = default_library();
    let mut args = vec!["evaluate".to_owned()];
    for i in 0..15 {
        let real = common::random_program(&mut rng, &lib, 100_000, 1_000_000);
        let proxy = common::random_program(&mut rng, &lib, 100_000, 1_000_000);
        args.extend(["--real".into(), write_counts(dir.path(), &format!("r{i}.counts"), &real)]);
        args.extend(["--proxy".into(), write_counts(dir.path(), &format!("p{i}.counts"), &proxy)]);
    }
    args.extend(["--metrics".into(), "cpi,branch_miss_rate,vec_ratio".into()]);
    let argv: Vec<&str> = args.iter().map(String::as_str).collect();
    let r = cli(&argv);
    assert_eq!(r.code, 0, "{}", r.err);
    let lines: Vec<&str> = r.out.lines().collect();
    assert_eq!(lines[0], "metric\trho\tmean_error");
    assert_eq!(lines.len(), 4);
    for line in &lines[1..] {
        assert_eq!(line.split('\t').count(), 3);
    }

    let mismatched = cli(&["evaluate", "--real", &args[2], "--real", &args[6], "--proxy", &args[4]]);
    assert_ne!(mismatched.code, 0);
}

#[test]
fn series_with_undefined_statistics_prints_na() {
    let dir = tempfile::tempdir().unwrap();
    let p = ProxyProgram::from_entries([("br_t256", 3_000_000), ("ar_int_div8", 500_000)]);
    let a = write_counts(dir.path(), "a.counts", &p);
    let r = cli(&["evaluate", "--real", &a, "--proxy", &a, "--real", &a, "--proxy", &a, "--metrics", "cpi"]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert_eq!(r.out, "metric\trho\tmean_error\ncpi\tNA\t0\n");
    assert!(r.err.contains("warning: cpi rho"), "{}", r.err);
}

#[test]
fn binary_exit_status_and_streams() {
    let exe = env!("CARGO_BIN_EXE_proxysynth");
    let ok = Command::new(exe).arg("--help").output().unwrap();
    assert!(ok.status.success());
    assert!(String::from_utf8_lossy(&ok.stdout).contains("align"));
    let bad = Command::new(exe).args(["library", "show", "/nonexistent/lib.json"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(1));
    assert!(bad.stdout.is_empty());
    assert!(String::from_utf8_lossy(&bad.stderr).starts_with("error: "));
}
