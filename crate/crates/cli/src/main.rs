use std::fs;
use std::io::{self, Read};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use triorbit_core::{
    bell, budget_from_env, canonicalize, enumerate_canonical, pair_to_partition, partition_to_pair,
    verify_certificate, verify_classification, verify_sampled, Error, ModulePair, PrimeField, SetPartition,
};

/// Orbits of free cyclic submodules over lower triangular matrices.
#[derive(Parser)]
#[command(name = "triorbit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Structured,
}

#[derive(Subcommand)]
enum Command {
    /// Print the Bell number B_n.
    Bell {
        #[arg(long, value_parser = clap::value_parser!(u16).range(0..=500))]
        n: u16,
    },
    /// List the canonical pairs of size n, one per orbit.
    Enumerate {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        with_partitions: bool,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Reduce a free pair to its canonical representative.
    Canonicalize {
        /// Pair file, or `-` for standard input.
        #[arg(long)]
        input: PathBuf,
        /// Expected field size; must match the file header.
        #[arg(long)]
        p: Option<u32>,
        #[arg(long)]
        certificate: bool,
        #[arg(long)]
        trace: bool,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Translate between canonical pairs and set partitions.
    Convert {
        #[command(subcommand)]
        direction: Direction,
    },
    /// Check the orbit classification, exhaustively or by sampling.
    Verify(VerifyArgs),
}

#[derive(Subcommand)]
enum Direction {
    PairToPartition {
        #[arg(long)]
        input: PathBuf,
    },
    PartitionToPair {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        partition: String,
    },
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("mode").required(true).args(["exhaustive", "samples"]))]
struct VerifyArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: u32,
    #[arg(long)]
    exhaustive: bool,
    #[arg(long)]
    samples: Option<u64>,
    #[arg(long, requires = "samples", default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

/// A failure and the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }

    fn math(message: impl Into<String>) -> Self {
        Failure { code: 1, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NotFree | Error::NotCanonical | Error::CanonicalizationFailed { .. } => {
                Failure::math(e.to_string())
            }
            _ => Failure::usage(e.to_string()),
        }
    }
}

type Outcome = std::result::Result<(String, u8), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok((out, code)) => {
            print!("{out}");
            ExitCode::from(code)
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cmd: Command) -> Outcome {
    match cmd {
        Command::Bell { n } => Ok((format!("{}\n", bell(n as usize)), 0)),
        Command::Enumerate { n, with_partitions, format } => run_enumerate(n, with_partitions, format),
        Command::Canonicalize { input, p, certificate, trace, format } => {
            run_canonicalize(&input, p, certificate, trace, format)
        }
        Command::Convert { direction } => run_convert(direction),
        Command::Verify(args) => run_verify(args),
    }
}

fn read_input(path: &PathBuf) -> std::result::Result<String, Failure> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s).map_err(|e| Failure::usage(format!("stdin: {e}")))?;
        return Ok(s);
    }
    fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn read_pair(path: &PathBuf) -> std::result::Result<ModulePair, Failure> {
    Ok(ModulePair::parse(&read_input(path)?)?)
}

fn to_json(v: &serde_json::Value) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

// Canonical pairs have 0/1 entries, so GF(2) stands in for any field.
fn binary() -> PrimeField {
    PrimeField::new(2).expect("2 is prime")
}

fn run_enumerate(n: usize, with_partitions: bool, format: Format) -> Outcome {
    let pairs = enumerate_canonical(n, binary(), budget_from_env()?)?;
    let labels: Vec<Option<SetPartition>> = pairs
        .iter()
        .map(|x| if with_partitions { pair_to_partition(x).ok() } else { None })
        .collect();
    let out = match format {
        Format::Structured => {
            let items: Vec<_> = pairs
                .iter()
                .zip(&labels)
                .map(|(x, l)| match l {
                    Some(part) => json!({ "pair": x, "partition": part.to_string() }),
                    None => json!({ "pair": x }),
                })
                .collect();
            to_json(&json!({ "n": n, "count": pairs.len(), "pairs": items }))
        }
        Format::Text => {
            let mut s = String::new();
            for (x, l) in pairs.iter().zip(&labels) {
                s.push_str(&x.to_pair_file());
                if let Some(part) = l {
                    s.push_str(&format!("partition {part}\n"));
                }
                s.push('\n');
            }
            s.push_str(&format!("count {}\n", pairs.len()));
            s
        }
    };
    Ok((out, 0))
}

fn run_canonicalize(input: &PathBuf, p: Option<u32>, certificate: bool, trace: bool, format: Format) -> Outcome {
    let pair = read_pair(input)?;
    if let Some(p) = p {
        PrimeField::new(p)?;
        if p != pair.field().modulus() {
            return Err(Failure::usage(format!("--p {p} disagrees with the input header (p = {})", pair.field().modulus())));
        }
    }
    let c = canonicalize(&pair)?;
    if certificate && !verify_certificate(&pair, &c.canonical, &c.certificate) {
        return Err(Failure::math("internal error: certificate failed to verify"));
    }
    let out = match format {
        Format::Structured => {
            let mut doc = json!({ "canonical": c.canonical });
            if certificate {
                doc["certificate"] = json!(c.certificate);
            }
            if trace {
                doc["trace"] = json!(c.trace);
            }
            to_json(&doc)
        }
        Format::Text => {
            let mut s = c.canonical.to_pair_file();
            if certificate {
                s.push_str(&format!("\ncertificate\n{}", c.certificate.to_text()));
            }
            if trace {
                s.push_str(&format!("\ntrace\n{}", c.trace.to_text()));
            }
            s
        }
    };
    Ok((out, 0))
}

fn run_convert(direction: Direction) -> Outcome {
    match direction {
        Direction::PairToPartition { input } => {
            let pair = read_pair(&input)?;
            Ok((format!("{}\n", pair_to_partition(&pair)?), 0))
        }
        Direction::PartitionToPair { n, partition } => {
            let part = SetPartition::parse(&partition)?;
            Ok((partition_to_pair(n, &part, binary())?.to_pair_file(), 0))
        }
    }
}

fn run_verify(args: VerifyArgs) -> Outcome {
    let field = PrimeField::new(args.p)?;
    let report = match args.samples {
        Some(m) => verify_sampled(args.n, field, m, args.seed, None)?,
        None => verify_classification(args.n, field, budget_from_env()?)?,
    };
    let out = match args.format {
        Format::Structured => to_json(&json!(report)),
        Format::Text => report.to_table(),
    };
    Ok((out, if report.passed() { 0 } else { 1 }))
}
