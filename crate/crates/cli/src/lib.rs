//! The `refocus` command line and HTTP service.

pub mod commands;
pub mod config;
pub mod server;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

use commands::{DumpArgs, EvalArgs, MaskArgs, OracleArgs, RenderArgs, SynthArgs};
use server::ServeArgs;

#[derive(Parser, Debug)]
#[command(
    name = "refocus",
    version,
    about = "Layered bokeh rendering from one image and its disparity map"
)]
pub struct Cli {
    /// TOML file with one table per subcommand; keys are long flag names.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Render a bokeh image from an image and its disparity map.
    Render(RenderArgs),
    /// Ray-trace ground-truth bokeh for a layered scene.
    Oracle(OracleArgs),
    /// Generate a synthetic dataset with ground-truth bokeh.
    Synth(SynthArgs),
    /// Score predictions against a dataset manifest.
    Eval(EvalArgs),
    /// Compute the occlusion mask of a disparity map.
    Mask(MaskArgs),
    /// Write the built MPI planes to a directory.
    MpiDump(DumpArgs),
    /// Run the HTTP render service.
    Serve(ServeArgs),
}

impl Command {
    fn section(&self) -> &'static str {
        match self {
            Command::Render(_) => "render",
            Command::Oracle(_) => "oracle",
            Command::Synth(_) => "synth",
            Command::Eval(_) => "eval",
            Command::Mask(_) => "mask",
            Command::MpiDump(_) => "mpi-dump",
            Command::Serve(_) => "serve",
        }
    }
}

fn merged<T: serde::Serialize + serde::de::DeserializeOwned>(
    args: &T,
    path: Option<&PathBuf>,
    section: &str,
) -> Result<T> {
    match path {
        Some(p) => config::merge(args, config::load_section(p, section)?, section),
        None => serde_json::from_value(serde_json::to_value(args)?).map_err(Into::into),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = cli.config.as_ref();
    let section = cli.command.section();
    match &cli.command {
        Command::Render(a) => commands::render(&merged(a, cfg, section)?),
        Command::Oracle(a) => commands::oracle(&merged(a, cfg, section)?),
        Command::Synth(a) => commands::synth(&merged(a, cfg, section)?),
        Command::Eval(a) => commands::eval(&merged(a, cfg, section)?),
        Command::Mask(a) => commands::mask(&merged(a, cfg, section)?),
        Command::MpiDump(a) => commands::mpi_dump(&merged(a, cfg, section)?),
        Command::Serve(a) => {
            let a = merged(a, cfg, section)?;
            tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()?
                .block_on(server::serve(&a))
        }
    }
}
