//! `aanet`: train, evaluate, and diagnose anti-aliased residual networks.

use std::path::PathBuf;
use std::process::ExitCode;

use aanet_cli::commands::{self, Format, Invocation};
use aanet_core::Error;

const USAGE: &str = "usage: aanet <command> [flags]

commands:
  train          train a network and write checkpoint + per-epoch CSV
  eval           clean accuracy on the held-out split
  corrupt-eval   error table over the corruption grid (+ report with --baseline)
  spectrum       aliased-energy report per subsampling layer
  consistency    shift-consistency report
  episode-eval   few-shot NCC accuracy over sampled episodes
  mce            CE/mCE from two error-table files
  plot           SVG chart from a CSV artifact

flags:
  --config <path>      experiment configuration (JSON)
  --seed <int>         overrides the configured training seed
  --out <dir>          artifact directory (default: out)
  --format json|csv    artifact format where both apply (default: json)
  --checkpoint <path>  restore parameters before evaluating
  --baseline <path>    reference error table for CE normalization
  --table <path>       error table under evaluation (mce)
  --input <path>       CSV input (plot)
  --kind line|bar      chart kind (plot, default: line)

env:
  AANET_THREADS        bounds the corruption-grid worker pool";

fn parse(args: &[String]) -> Result<Invocation, Error> {
    let command = args
        .first()
        .ok_or_else(|| Error::Config(format!("missing command\n{USAGE}")))?
        .clone();
    let mut inv = Invocation {
        command,
        config: None,
        seed: None,
        out: PathBuf::from("out"),
        format: Format::Json,
        checkpoint: None,
        baseline: None,
        table: None,
        input: None,
        kind: None,
    };
    let mut i = 1;
    while i < args.len() {
        let flag = args[i].clone();
        let mut value = |name: &str| -> Result<String, Error> {
            i += 1;
            args.get(i)
                .cloned()
                .ok_or_else(|| Error::Config(format!("{name} needs a value")))
        };
        match flag.as_str() {
            "--config" => inv.config = Some(PathBuf::from(value("--config")?)),
            "--seed" => {
                let v = value("--seed")?;
                inv.seed = Some(
                    v.parse()
                        .map_err(|_| Error::Config(format!("bad --seed '{v}'")))?,
                );
            }
            "--out" => inv.out = PathBuf::from(value("--out")?),
            "--format" => inv.format = Format::parse(&value("--format")?)?,
            "--checkpoint" => inv.checkpoint = Some(PathBuf::from(value("--checkpoint")?)),
            "--baseline" => inv.baseline = Some(PathBuf::from(value("--baseline")?)),
            "--table" => inv.table = Some(PathBuf::from(value("--table")?)),
            "--input" => inv.input = Some(PathBuf::from(value("--input")?)),
            "--kind" => inv.kind = Some(value("--kind")?),
            other => {
                return Err(Error::Config(format!("unknown flag '{other}'\n{USAGE}")));
            }
        }
        i += 1;
    }
    Ok(inv)
}

fn dispatch(inv: &Invocation) -> Result<(), Error> {
    match inv.command.as_str() {
        "train" => commands::train(inv),
        "eval" => commands::eval(inv),
        "corrupt-eval" => commands::corrupt_eval(inv),
        "spectrum" => commands::spectrum(inv),
        "consistency" => commands::consistency(inv),
        "episode-eval" => commands::episode_eval(inv),
        "mce" => commands::mce(inv),
        "plot" => commands::plot(inv),
        "help" | "--help" | "-h" => {
            println!("{USAGE}");
            Ok(())
        }
        other => Err(Error::Config(format!("unknown command '{other}'\n{USAGE}"))),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Argument(_) | Error::Dimension(_) => 2,
        Error::Data(_) | Error::Io(_) => 3,
        Error::Numeric(_) => 4,
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let inv = match parse(&args) {
        Ok(inv) => inv,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match dispatch(&inv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
