//! Writes the synthetic planted-signal dataset used by the acceptance run.
//!
//! `cargo run --release -p affect-cli --example synth -- <dir> [seed]`

use std::path::PathBuf;
use std::process::ExitCode;

use affect_core::synth::{generate, SynthConfig, MANIFEST_FILE};

fn main() -> ExitCode {
    let mut args = std::env::args().skip(1);
    let Some(dir) = args.next().map(PathBuf::from) else {
        eprintln!("usage: synth <dir> [seed]");
        return ExitCode::from(1);
    };
    let seed = match args.next().map(|s| s.parse::<u64>()) {
        None => 0,
        Some(Ok(s)) => s,
        Some(Err(e)) => {
            eprintln!("error: seed: {e}");
            return ExitCode::from(1);
        }
    };
    match generate(&dir, &SynthConfig { seed, ..SynthConfig::default() }) {
        Ok(m) => {
            println!("{} utterances -> {}", m.records.len(), dir.join(MANIFEST_FILE).display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
