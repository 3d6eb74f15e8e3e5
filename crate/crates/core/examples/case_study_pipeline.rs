//! The command-line workflow end to end, driven through the library's CLI
//! entry point: simulate a sparse four-factor trial, fit it, score it on a
//! fresh noisy copy of the full grid, predict, and draw the plots. Output
//! goes to the directory given.

use bammit::cli::run;

fn step(args: &[&str]) {
    let argv: Vec<String> = std::iter::once("bammit").chain(args.iter().copied()).map(String::from).collect();
    println!("$ bammit {}", args.join(" "));
    let code = run(argv);
    assert_eq!(code, 0, "step failed");
}

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| "case-study".into());
    let p = |rel: &str| format!("{out}/{rel}");
    step(&["simulate", "--scenario", "iii", "--q-sim", "2", "--dims", "40,12,6,2", "--drop-fraction", "0.5", "--out", &p("sim")]);
    step(&[
        "fit", "--data", &p("sim/train.csv"), "--factors", "genotype,environment,year,block", "--response", "y",
        "--q", "2", "--iter", "800", "--burn", "400", "--seed", "11", "--test", &p("sim/test.csv"), "--out", &p("fit"),
    ]);
    step(&["predict", "--draws", &p("fit"), "--out", &p("predictions.csv")]);
    step(&["summarize", "--draws", &p("fit"), "--what", "lambda", "--out", &p("lambda.csv")]);
    step(&[
        "plot", "--draws", &p("fit"), "--kind", "heatmap", "--rows", "genotype", "--cols", "environment",
        "--fix", "year=y6,block=r1", "--out", &p("plots/heatmap.svg"),
    ]);
    step(&["plot", "--draws", &p("fit"), "--kind", "by-level", "--factor", "year", "--include-noise", "--out", &p("plots/by_year.svg")]);
    println!("{}", std::fs::read_to_string(p("lambda.csv")).unwrap());
    println!("{}", std::fs::read_to_string(p("fit/metrics.json")).unwrap());
}
