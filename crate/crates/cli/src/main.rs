use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use photoauth_core::service::Config;
use photoauth_core::simulator::{
    injection_scenario, redirection_scenario, rtp_scenario, run_scenario, Placement, Scenario, ScenarioReport,
};
use photoauth_core::domain::{confusable_mutate, SubstitutionRules};
use photoauth_core::synth::{
    evaluate_corpus, export_corpus_jsonl, mix_seed, top_domains, CorpusParams, DetectorProfile,
};
use photoauth_core::verify::{AcceptSet, VerifyConfig};
use photoauth_core::DomainName;
use serde_json::{json, Value};

mod serve;

/// Exit code for a run whose outcome differs from the expected one.
const UNEXPECTED: u8 = 1;
/// Exit code for unreadable or invalid input.
const BAD_INPUT: u8 = 2;

#[derive(Parser)]
#[command(name = "photoauth", version, about = "Photo-based second factor: simulation, evaluation and server")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario script and print its report.
    Simulate {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the message log as JSON lines.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Measure recognition over a synthetic corpus of genuine layouts.
    Evaluate {
        #[arg(long, default_value_t = 1000)]
        n: u64,
        /// Detector profile JSON.
        #[arg(long)]
        profile: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.3)]
        dark_fraction: f64,
        #[arg(long, default_value_t = 0.5)]
        iou_threshold: f64,
        #[arg(long, default_value_t = 0.8)]
        cr_threshold: f64,
        /// Comma-separated hostnames; defaults to the built-in list of 50.
        #[arg(long)]
        domains: Option<String>,
        /// Also write the photo analyses as JSON lines.
        #[arg(long)]
        export: Option<PathBuf>,
    },
    /// Serve the HTTP endpoints.
    Serve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, env = "PHOTOAUTH_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, env = "PHOTOAUTH_SEED")]
        seed: Option<u64>,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
    },
    /// Run one of the built-in attacks.
    Attack {
        kind: AttackKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Detector profile JSON; oracle detectors when omitted.
        #[arg(long)]
        profile: Option<PathBuf>,
        /// Fake domain for the reverse-proxy attack.
        #[arg(long, default_value = "microsoft1.com")]
        fake: String,
        #[arg(long, default_value = "microsoft.com")]
        upstream: String,
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Print look-alikes of hostnames under a substitution-rule file.
    Mutate {
        #[arg(required = true)]
        domains: Vec<String>,
        /// One rule per line, e.g. `o 0`; a lone character deletes it.
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AttackKind {
    Rtp,
    Redirect,
    InjectTitle,
    InjectContent,
    Pip,
}

fn read(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_profile(path: &Path) -> Result<DetectorProfile, String> {
    let p: DetectorProfile = serde_json::from_str(&read(path)?).map_err(|e| format!("{}: {e}", path.display()))?;
    p.validate().map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(p)
}

fn print_json(v: &Value) {
    // a closed pipe (e.g. `| head`) is not an error worth reporting
    let _ = writeln!(io::stdout().lock(), "{}", serde_json::to_string_pretty(v).expect("values serialize"));
}

fn finish_run(report: &ScenarioReport, log: Option<&PathBuf>) -> Result<u8, String> {
    if let Some(path) = log {
        fs::write(path, report.log_jsonl()).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    let mut out = report.summary();
    out["verdict"] = json!(report.outcome.to_string());
    out["met_expectation"] = json!(report.met_expectation());
    print_json(&out);
    Ok(if report.met_expectation() { 0 } else { UNEXPECTED })
}

fn run(cli: Cli) -> Result<u8, String> {
    match cli.command {
        Command::Simulate { scenario, seed, log } => {
            let mut s = Scenario::from_json(&read(&scenario)?).map_err(|e| format!("{}: {e}", scenario.display()))?;
            if let Some(seed) = seed {
                s = s.with_seed(seed);
            }
            let report = run_scenario(&s).map_err(|e| e.to_string())?;
            finish_run(&report, log.as_ref())
        }
        Command::Evaluate {
            n,
            profile,
            seed,
            dark_fraction,
            iou_threshold,
            cr_threshold,
            domains,
            export,
        } => {
            let profile = load_profile(&profile)?;
            let names = match domains {
                Some(list) => list
                    .split(',')
                    .map(|d| DomainName::parse(d.trim()).map_err(|e| format!("{d:?}: {e}")))
                    .collect::<Result<Vec<_>, _>>()?,
                None => top_domains(),
            };
            let accept = AcceptSet::new(names).map_err(|e| e.to_string())?;
            let verify = VerifyConfig::new(cr_threshold, 0.5).map_err(|e| e.to_string())?;
            if !(0.0..=1.0).contains(&dark_fraction) || !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
                return Err("dark_fraction must lie in [0, 1] and iou_threshold in (0, 1]".into());
            }
            let params = CorpusParams {
                seed,
                dark_fraction,
                iou_threshold,
            };
            let report = evaluate_corpus(n, &params, &profile, &verify, &accept).map_err(|e| e.to_string())?;
            if let Some(path) = export {
                fs::write(&path, export_corpus_jsonl(n, &params, &profile, &accept))
                    .map_err(|e| format!("{}: {e}", path.display()))?;
            }
            print_json(&json!(report));
            Ok(0)
        }
        Command::Serve {
            config,
            port,
            seed,
            bind,
        } => {
            let mut c = Config::from_json(&read(&config)?).map_err(|e| format!("{}: {e}", config.display()))?;
            if let Some(seed) = seed {
                c.seed = seed;
            }
            serve::run(c, &bind, port)?;
            Ok(0)
        }
        Command::Attack {
            kind,
            seed,
            profile,
            fake,
            upstream,
            log,
        } => {
            let profile = match profile {
                Some(p) => load_profile(&p)?,
                None => DetectorProfile::oracle(),
            };
            let scenario = match kind {
                AttackKind::Rtp => rtp_scenario(seed, &fake, &upstream, profile).map_err(|e| e.to_string())?,
                AttackKind::Redirect => redirection_scenario(seed),
                AttackKind::InjectTitle => injection_scenario(seed, Placement::Title, profile),
                AttackKind::InjectContent => injection_scenario(seed, Placement::PageContent, profile),
                AttackKind::Pip => injection_scenario(seed, Placement::PictureInPicture, profile),
            };
            let report = run_scenario(&scenario).map_err(|e| e.to_string())?;
            finish_run(&report, log.as_ref())
        }
        Command::Mutate { domains, rules, seed } => {
            let rules = match rules {
                Some(p) => SubstitutionRules::parse(&read(&p)?).map_err(|e| format!("{}: {e}", p.display()))?,
                None => SubstitutionRules::digit_lookalikes(),
            };
            let mut out = Vec::new();
            for (i, d) in domains.iter().enumerate() {
                let name = DomainName::parse(d).map_err(|e| format!("{d:?}: {e}"))?;
                let mutated = confusable_mutate(&name, &rules, mix_seed(seed, i as u64)).map_err(|e| format!("{d:?}: {e}"))?;
                out.push(json!({ "domain": name.ascii(), "mutated": mutated.ascii(), "unicode": mutated.unicode() }));
            }
            print_json(&json!(out));
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(BAD_INPUT)
        }
    }
}
