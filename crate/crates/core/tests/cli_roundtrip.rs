use std::fs;
use std::path::Path;
use std::time::Duration;

use dspmix::cli;
use dspmix::evaluation::{run_benchmark_with_hook, BenchCase, BenchParams, Method, Phase};
use dspmix::models::preset;

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("dspmix").chain(args.iter().copied());
    let code = cli::run(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

#[test]
fn sample_estimate_evaluate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let samples = p(dir.path(), "s.bin");
    let (code, _, err) = run(&[
        "sample",
        "--preset",
        "gaussmix2d",
        "-N",
        "20000",
        "--seed",
        "4",
        "-o",
        &samples,
    ]);
    assert_eq!(code, 0, "{err}");

    for method in ["DSP-mix", "MSP", "DSP"] {
        let mut outputs = Vec::new();
        for (tag, workers) in [("a", "1"), ("b", "1"), ("c", "4")] {
            let part = p(dir.path(), &format!("{method}-{tag}.json"));
            let (code, _, err) = run(&[
                "--workers",
                workers,
                "estimate",
                "-i",
                &samples,
                "--method",
                method,
                "--star-restarts",
                "5",
                "--star-iterations",
                "200",
                "-o",
                &part,
            ]);
            assert_eq!(code, 0, "{err}");
            assert!(Path::new(&format!("{part}.manifest.json")).exists());
            outputs.push(fs::read(&part).unwrap());
        }
        assert_eq!(outputs[0], outputs[1], "{method}: repeated run differs");
        assert_eq!(
            outputs[0], outputs[2],
            "{method}: worker count changes output"
        );

        let part = p(dir.path(), &format!("{method}-a.json"));
        let (code, out, err) = run(&[
            "evaluate",
            "-p",
            &part,
            "--preset",
            "gaussmix2d",
            "--normalizer-samples",
            "100000",
        ]);
        assert_eq!(code, 0, "{err}");
        let e: f64 = out.trim().parse().unwrap();
        assert!(e > 0.0 && e < 0.5, "{method}: error {e}");
    }
}

#[test]
fn csv_samples_round_trip_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let csv = p(dir.path(), "s.csv");
    let bin = p(dir.path(), "s.bin");
    assert_eq!(
        run(&["sample", "--preset", "betamix2d", "-N", "500", "-o", &csv]).0,
        0
    );
    assert_eq!(
        run(&["sample", "--preset", "betamix2d", "-N", "500", "-o", &bin]).0,
        0
    );
    let a = dspmix::io::read_samples(Path::new(&csv)).unwrap();
    let b = dspmix::io::read_samples(Path::new(&bin)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn usage_and_data_errors_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(dir.path(), "s.csv");
    assert_eq!(
        run(&["sample", "--preset", "gauss2d", "-N", "0", "-o", &out]).0,
        1
    );
    assert_eq!(
        run(&["sample", "--preset", "nope", "-N", "10", "-o", &out]).0,
        1
    );
    assert_eq!(
        run(&["estimate", "-i", &p(dir.path(), "missing.csv"), "-o", &out]).0,
        2
    );
    fs::write(&out, "0.1,0.2\n0.3,x\n").unwrap();
    let (code, _, err) = run(&["estimate", "-i", &out, "-o", &p(dir.path(), "e.json")]);
    assert_eq!(code, 2);
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn bench_writes_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let csv = p(dir.path(), "t.csv");
    let (code, _, err) = run(&[
        "bench",
        "--table",
        "3",
        "-N",
        "2000,4000",
        "--methods",
        "DSP-mix,MSP",
        "--seeds",
        "2",
        "--normalizer-samples",
        "10000",
        "-o",
        &csv,
    ]);
    assert_eq!(code, 0, "{err}");
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "method,spec,d,N,seed,error,wall_time_s,leaves");
    assert_eq!(lines.len(), 1 + 2 * 2 * 2);
    assert!(lines[1..].iter().all(|l| l.contains(",betamix2d,2,")));
    let manifest = fs::read_to_string(format!("{csv}.manifest.json")).unwrap();
    assert!(manifest.contains("bench --table 3"), "{manifest}");
}

#[test]
fn invariance_command_passes() {
    let (code, out, _) = run(&["check-invariance", "--trials", "100", "--seed", "3"]);
    assert_eq!(code, 0, "{out}");
    assert!(out.trim_end().ends_with("PASS"));
}

#[test]
fn benchmark_time_excludes_sampling_and_evaluation() {
    let case = BenchCase::new("gauss2d", preset("gauss2d", 2).unwrap(), 10_000, 0).unwrap();
    let mut phases = Vec::new();
    let record = run_benchmark_with_hook(
        &case,
        Method::Msp,
        2000,
        1,
        &BenchParams::default(),
        &mut |ph| {
            if ph != Phase::Estimated {
                std::thread::sleep(Duration::from_millis(300));
            }
            phases.push(ph);
        },
    )
    .unwrap();
    assert_eq!(phases, [Phase::Sampled, Phase::Estimated, Phase::Evaluated]);
    assert!(
        record.wall_time_s > 0.0 && record.wall_time_s < 0.3,
        "{}",
        record.wall_time_s
    );
}
