//! `keynet`: build, run and check keyed networks from the command line.
//!
//! Results go to stdout as one JSON document `{manifest, result}`; short
//! human-readable summaries go to stderr. Exit status is 0 on success, 1 on
//! a failed check or library error, and 2 on a usage error.

mod commands;
mod run;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::*;

#[derive(Debug, Parser)]
#[command(name = "keynet", version, about = "Keyed inference on optically transformed images")]
struct Cli {
    /// Also write the run manifest to this file.
    #[arg(long, global = true)]
    manifest: Option<std::path::PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate one key (`--dim`) or a key chain for a model (`--model`).
    Keygen(KeygenArgs),
    /// Apply the image key to an image.
    Encode(EncodeArgs),
    /// Recover an image from its encoding (needs the image key).
    DecodeImage(DecodeImageArgs),
    /// Key a model and write the public keynet plus the secret keys.
    Build(BuildArgs),
    /// Run a keynet on an encoded image.
    Infer(InferArgs),
    /// Remove the output key from an inference result.
    Decode(DecodeArgs),
    /// Check container integrity and the homomorphism numerically.
    Verify(VerifyArgs),
    /// Per-layer nonzeros and storage, COO versus tiled.
    Stats(StatsArgs),
    /// Run an image through the simulated fiber bundle and sensor.
    Simulate(SimulateArgs),
    /// Chosen-plaintext key recovery, or a structure dump of a keynet.
    Attack(AttackArgs),
    /// Structural similarity of two images.
    Ssim(SsimArgs),
    /// End-to-end run on the built-in 2x2 example.
    Demo(DemoArgs),
}

fn init_threads() {
    #[cfg(feature = "parallel")]
    if let Some(n) = std::env::var("KEYNET_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    init_threads();
    let outcome = match cli.command {
        Command::Keygen(a) => keygen(a),
        Command::Encode(a) => encode(a),
        Command::DecodeImage(a) => decode_image(a),
        Command::Build(a) => build(a),
        Command::Infer(a) => infer(a),
        Command::Decode(a) => decode(a),
        Command::Verify(a) => verify(a),
        Command::Stats(a) => stats(a),
        Command::Simulate(a) => simulate(a),
        Command::Attack(a) => attack(a),
        Command::Ssim(a) => ssim(a),
        Command::Demo(a) => demo(a),
    };
    match outcome {
        Ok(out) => {
            let doc = serde_json::json!({ "manifest": out.manifest, "result": out.result });
            println!("{}", serde_json::to_string_pretty(&doc).expect("serializable"));
            if let Some(path) = cli.manifest {
                let text = serde_json::to_string_pretty(&out.manifest).expect("serializable") + "\n";
                if let Err(e) = std::fs::write(&path, text) {
                    eprintln!("error: writing {}: {e}", path.display());
                    return ExitCode::from(1);
                }
            }
            eprintln!("{}", out.summary);
            if out.ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            let msg = format!("{e:#}");
            println!("{}", serde_json::json!({ "error": msg }));
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
