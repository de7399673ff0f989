//! `bdlab` command-line tool.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bdlab::defense::{DefenseConfig, OutputMode};
use bdlab::harness::config::config_help;
use bdlab::harness::{
    load_data, measure_acc, run_experiment, DefensePoint, ExperimentConfig, ExperimentReport, Workbench,
};
use bdlab::model::train;
use bdlab::rng::mix;
use bdlab::theory::{accuracy_curve, calibrate_nu, defended_surface};
use bdlab::Error;
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

#[derive(Parser)]
#[command(
    name = "bdlab",
    version,
    about = "Boundary defense experiments against black-box attacks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON config file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads; all logical cores by default.
    #[arg(long)]
    jobs: Option<usize>,
    /// Master seed, overriding `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Config override `key=value`, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic blob dataset as train.csv and test.csv.
    #[command(after_help = config_help())]
    MakeData(Common),
    /// Train the classifier and write classifier.json.
    #[command(after_help = config_help())]
    Train(Common),
    /// Defended test accuracy at `defense` and every grid point.
    #[command(after_help = config_help())]
    EvalAcc(Common),
    /// Closed-form accuracy curves: fig2a.csv and fig2b.csv.
    #[command(after_help = config_help())]
    Theory(TheoryArgs),
    /// Run every attack against the single `defense` point.
    #[command(after_help = config_help())]
    Attack(Common),
    /// Run every attack against every grid point.
    #[command(after_help = config_help())]
    Sweep(Common),
}

#[derive(Args)]
struct TheoryArgs {
    #[command(flatten)]
    common: Common,
    /// Number of classes.
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Clean accuracy used to calibrate nu.
    #[arg(long = "clean-acc", default_value_t = 0.90)]
    clean_acc: f64,
    /// Points on the s axis of fig2a.csv.
    #[arg(long, default_value_t = 201)]
    points: usize,
}

struct Run {
    out: PathBuf,
    manifest: Map<String, Value>,
    files: Vec<String>,
}

impl Run {
    fn new(command: &str, out: &Path) -> Self {
        let mut manifest = Map::new();
        manifest.insert("command".into(), json!(command));
        manifest.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
        manifest.insert("args".into(), json!(std::env::args().skip(1).collect::<Vec<_>>()));
        Self {
            out: out.to_path_buf(),
            manifest,
            files: Vec::new(),
        }
    }

    fn set(&mut self, key: &str, value: Value) {
        self.manifest.insert(key.into(), value);
    }

    fn write(&mut self, name: &str, contents: &str) -> bdlab::Result<()> {
        let path = self.out.join(name);
        std::fs::write(&path, contents).map_err(|e| Error::from(e).context(format!("writing {}", path.display())))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn finish(mut self, outcome: &bdlab::Result<()>) {
        self.set("outputs", json!(self.files));
        if let Err(e) = outcome {
            self.set("error", json!(e.to_string()));
        }
        let text = serde_json::to_string_pretty(&Value::Object(self.manifest)).expect("manifest serializes");
        let path = self.out.join("manifest.json");
        if std::fs::create_dir_all(&self.out)
            .and_then(|_| std::fs::write(&path, text + "\n"))
            .is_err()
        {
            eprintln!("error: could not write {}", path.display());
        }
    }
}

fn resolve(common: &Common) -> bdlab::Result<ExperimentConfig> {
    let base = match &common.config {
        Some(p) => ExperimentConfig::read(p)?,
        None => ExperimentConfig::default(),
    };
    let mut cfg = base.with_overrides(&common.sets)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn seeds(cfg: &ExperimentConfig) -> Value {
    json!({
        "master": cfg.seed,
        "dataset": cfg.dataset.seed,
        "classifier": cfg.classifier.seed,
    })
}

fn make_data(run: &mut Run, cfg: &ExperimentConfig) -> bdlab::Result<()> {
    let (train_set, test_set) = load_data(&cfg.dataset)?;
    run.write("train.csv", &train_set.to_csv())?;
    run.write("test.csv", &test_set.to_csv())?;
    run.set("train_samples", json!(train_set.len()));
    run.set("test_samples", json!(test_set.len()));
    Ok(())
}

fn train_cmd(run: &mut Run, cfg: &ExperimentConfig) -> bdlab::Result<()> {
    let (train_set, test_set) = load_data(&cfg.dataset)?;
    let clf = train(&train_set, &cfg.classifier.train_config())?;
    let acc = clf.accuracy(&test_set)?;
    run.write("classifier.json", &clf.to_json())?;
    run.set("clean_acc", json!(acc));
    println!("test accuracy {acc:.4}");
    Ok(())
}

fn eval_acc(run: &mut Run, cfg: &ExperimentConfig) -> bdlab::Result<()> {
    let wb = Workbench::build(cfg)?;
    let clean = wb.classifier.accuracy(&wb.test)?;
    let points: Vec<DefensePoint> = std::iter::once(cfg.defense).chain(cfg.grid.iter().copied()).collect();
    let mut csv = String::from("theta,sigma,acc\n");
    for (i, p) in points.iter().enumerate() {
        let defense = DefenseConfig {
            theta: p.theta,
            sigma: p.sigma,
            seed: mix(&[cfg.seed, i as u64, 0xACC]),
            mode: OutputMode::Hard,
        };
        let acc = measure_acc(&wb.classifier, defense, &wb.test)?;
        csv.push_str(&format!("{},{},{}\n", p.theta, p.sigma, acc));
        println!("theta {} sigma {}: acc {acc:.4} (clean {clean:.4})", p.theta, p.sigma);
    }
    run.write("accuracy.csv", &csv)?;
    run.set("clean_acc", json!(clean));
    Ok(())
}

fn theory(run: &mut Run, args: &TheoryArgs) -> bdlab::Result<()> {
    let nu = calibrate_nu(args.clean_acc, args.n)?;
    let mut a = String::from("s,p_acc\n");
    for (s, p) in accuracy_curve(args.n, args.points)? {
        a.push_str(&format!("{s},{p}\n"));
    }
    let thetas: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
    let sigmas: Vec<f64> = (0..=6).map(|i| i as f64 * 0.05).collect();
    let mut b = String::from("theta,sigma,acc\n");
    for (t, s, acc) in defended_surface(args.n, nu, &thetas, &sigmas)? {
        b.push_str(&format!("{t},{s},{acc}\n"));
    }
    run.write("fig2a.csv", &a)?;
    run.write("fig2b.csv", &b)?;
    run.set(
        "theory",
        json!({ "n_classes": args.n, "clean_acc": args.clean_acc, "nu": nu, "points": args.points }),
    );
    println!("nu = {nu:.5}");
    Ok(())
}

fn experiment(run: &mut Run, cfg: &ExperimentConfig, jobs: Option<usize>) -> bdlab::Result<()> {
    let report = run_experiment(cfg, jobs)?;
    write_report(run, &report)?;
    for r in &report.rows {
        println!(
            "theta {} sigma {} {:<9} asr {:.3} median_l2 {} queries {:.0}",
            r.theta,
            r.sigma,
            r.attack,
            r.asr,
            r.median_l2.map(|m| format!("{m:.4}")).unwrap_or_else(|| "-".into()),
            r.mean_queries
        );
    }
    Ok(())
}

fn write_report(run: &mut Run, report: &ExperimentReport) -> bdlab::Result<()> {
    run.write("report.json", &report.to_json())?;
    run.write("summary.csv", &report.summary_csv())?;
    if report.rows.iter().any(|r| !r.asr2.is_empty()) {
        run.write("asr2.csv", &report.asr2_csv())?;
    }
    run.set("clean_acc", json!(report.clean_acc));
    run.set("config_hash", json!(report.provenance.config_hash));
    run.set("seed_scheme", json!(report.provenance.seed_scheme));
    Ok(())
}

fn execute(command: &Command) -> (Option<Run>, bdlab::Result<()>) {
    let (name, common) = match command {
        Command::MakeData(c) => ("make-data", c),
        Command::Train(c) => ("train", c),
        Command::EvalAcc(c) => ("eval-acc", c),
        Command::Theory(t) => ("theory", &t.common),
        Command::Attack(c) => ("attack", c),
        Command::Sweep(c) => ("sweep", c),
    };
    let mut run = Run::new(name, &common.out);
    let mut cfg = match resolve(common) {
        Ok(cfg) => cfg,
        Err(e) => return (Some(run), Err(e)),
    };
    if let Command::Attack(_) = command {
        cfg.grid = vec![cfg.defense];
    }
    run.set("config", serde_json::to_value(&cfg).expect("config serializes"));
    run.set("seeds", seeds(&cfg));
    if let Err(e) = std::fs::create_dir_all(&common.out) {
        return (
            Some(run),
            Err(Error::from(e).context(format!("creating {}", common.out.display()))),
        );
    }
    let outcome = match command {
        Command::MakeData(_) => make_data(&mut run, &cfg),
        Command::Train(_) => train_cmd(&mut run, &cfg),
        Command::EvalAcc(_) => eval_acc(&mut run, &cfg),
        Command::Theory(t) => theory(&mut run, t),
        Command::Attack(_) | Command::Sweep(_) => experiment(&mut run, &cfg, common.jobs),
    };
    (Some(run), outcome)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (run, outcome) = execute(&cli.command);
    if let Some(run) = run {
        run.finish(&outcome);
    }
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_domain() { 1 } else { 2 })
        }
    }
}
