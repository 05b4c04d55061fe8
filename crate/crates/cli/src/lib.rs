//! Command-line front end for the `wdht` library.
//!
//! Every subcommand reads a [`Config`]: built-in defaults, then an optional
//! `--config` file of `key = value` lines, then `--key value` flags.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::parser::ValueSource;
use clap::{Arg, ArgMatches, Command};

pub use config::Config;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
    #[error(transparent)]
    Core(#[from] wdht::Error),
}

impl CliError {
    /// 1 usage/config, 2 data, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Core(e) => match e {
                wdht::Error::Param(_) => 1,
                wdht::Error::Numeric(_) => 3,
                _ => 2,
            },
        }
    }
}

const TRAINING: &[&str] = &[
    "lambda1",
    "lambda2",
    "lambda3",
    "lambda4",
    "margin_hinge",
    "margin_contrastive",
    "lr",
    "momentum",
    "batch_size",
    "epochs",
    "mode",
    "bits",
    "hidden",
];

struct Sub {
    name: &'static str,
    about: &'static str,
    keys: &'static [&'static str],
    training: bool,
}

const SUBCOMMANDS: &[Sub] = &[
    Sub {
        name: "aggregate",
        about: "Aggregate per-sample tag embeddings into tag vectors",
        keys: &["embeddings", "tags", "aggregation", "output"],
        training: false,
    },
    Sub {
        name: "train",
        about: "Train the hashing network",
        keys: &[
            "features",
            "tag_vectors",
            "tags",
            "embeddings",
            "aggregation",
            "checkpoint",
            "loss_csv",
            "seed",
        ],
        training: true,
    },
    Sub {
        name: "encode",
        about: "Encode features into binary hash codes",
        keys: &["checkpoint", "features", "codes"],
        training: false,
    },
    Sub {
        name: "query",
        about: "Rank database codes by Hamming distance for each query",
        keys: &["db_codes", "query_codes", "topk", "output"],
        training: false,
    },
    Sub {
        name: "eval",
        about: "Compute mAP@K and the precision-recall curve",
        keys: &[
            "db_codes",
            "query_codes",
            "rankings",
            "db_labels",
            "query_labels",
            "k",
            "bits",
            "mode",
            "report",
            "pr",
        ],
        training: false,
    },
    Sub {
        name: "synth",
        about: "Generate a synthetic clustered dataset",
        keys: &[
            "out_dir",
            "clusters",
            "per_cluster",
            "feature_dim",
            "feature_noise",
            "vocab_per_cluster",
            "tags_per_sample",
            "embed_dim",
            "embed_noise",
            "tag_noise",
            "query_count",
            "seed",
        ],
        training: false,
    },
    Sub {
        name: "gradcheck",
        about: "Check analytic gradients against finite differences",
        keys: &["gradcheck_seeds", "gradcheck_tol", "seed"],
        training: false,
    },
    Sub {
        name: "gridsearch",
        about: "Grid search over lambda2 x lambda3 by validation mAP",
        keys: &[
            "features",
            "tags",
            "labels",
            "embeddings",
            "aggregation",
            "lambda2_grid",
            "lambda3_grid",
            "validation_fraction",
            "topk",
            "output",
            "seed",
        ],
        training: true,
    },
];

fn key_arg(name: &'static str) -> Arg {
    let key = config::find_key(name).expect("subcommand key is declared");
    let help = if key.default.is_empty() {
        key.help.to_string()
    } else {
        format!("{} [default: {}]", key.help, key.default)
    };
    Arg::new(name).long(name).value_name("VALUE").help(help)
}

fn defaults_summary() -> String {
    let d = |n: &str| config::find_key(n).unwrap().default;
    format!(
        "Training defaults: lr={} momentum={} lambda={}/{}/{}/{} batch_size={} epochs={} bits={}",
        d("lr"),
        d("momentum"),
        d("lambda1"),
        d("lambda2"),
        d("lambda3"),
        d("lambda4"),
        d("batch_size"),
        d("epochs"),
        d("bits"),
    )
}

pub fn command() -> Command {
    let mut cmd = Command::new("wdht")
        .about("Weakly supervised deep hashing with tag embeddings")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .after_help(defaults_summary());
    for sub in SUBCOMMANDS {
        let mut c = Command::new(sub.name).about(sub.about).arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .value_parser(clap::value_parser!(PathBuf))
                .help("key = value file; flags override it"),
        );
        let training = if sub.training { TRAINING } else { &[] };
        for &name in sub.keys.iter().chain(training) {
            c = c.arg(key_arg(name));
        }
        cmd = cmd.subcommand(c);
    }
    cmd
}

fn build_config(m: &ArgMatches) -> Result<Config, CliError> {
    let mut cfg = Config::default();
    if let Some(path) = m.get_one::<PathBuf>("config") {
        cfg.apply_file(path)?;
    }
    for id in m.ids() {
        let name = id.as_str();
        if name == "config" || m.value_source(name) != Some(ValueSource::CommandLine) {
            continue;
        }
        if let Some(v) = m.get_one::<String>(name) {
            cfg.set(name, v)?;
        }
    }
    Ok(cfg)
}

/// Runs one subcommand on an already built config.
pub fn dispatch(name: &str, cfg: &Config) -> Result<String, CliError> {
    match name {
        "aggregate" => commands::cmd_aggregate(cfg),
        "train" => commands::cmd_train(cfg),
        "encode" => commands::cmd_encode(cfg),
        "query" => commands::cmd_query(cfg),
        "eval" => commands::cmd_eval(cfg),
        "synth" => commands::cmd_synth(cfg),
        "gradcheck" => commands::cmd_gradcheck(cfg),
        "gridsearch" => commands::cmd_gridsearch(cfg),
        other => Err(CliError::Usage(format!("unknown subcommand {other}"))),
    }
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let result = build_config(sub).and_then(|cfg| dispatch(name, &cfg));
    match result {
        Ok(msg) => {
            print!("{msg}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
