//! The command line driven in-process: train, evaluate, recompute the
//! metrics from the front file and plot it.

use dmorl::cli;

fn main() {
    let dir = tempfile::tempdir().expect("temporary directory");
    let run = dir.path().join("run");
    let run_s = run.to_string_lossy().into_owned();
    let front = run.join("eval").join("front.csv").to_string_lossy().into_owned();
    let svg = dir.path().join("front.svg").to_string_lossy().into_owned();

    let steps: [&[&str]; 4] = [
        &["dmorl", "train", "--env", "dst", "--steps", "4096", "--seed", "3", "--out-dir", &run_s, "--set", "arch.hidden_dim=64", "--set", "arch.feature_dim=64"],
        &["dmorl", "eval", "--run", &run_s, "--episodes", "2"],
        &["dmorl", "metrics", &front, "--env", "dst"],
        &["dmorl", "plot", &front, "--env", "dst", "--out", &svg],
    ];
    for args in steps {
        println!("$ {}", args[1..].join(" "));
        let code = cli::run(args.iter().copied(), vec![]);
        println!("exit code {code}\n");
    }
    let doc = std::fs::read_to_string(&svg).unwrap_or_default();
    println!("plot has {} points", doc.matches(r#"class="point""#).count());
}
