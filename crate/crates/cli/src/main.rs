use clap::Parser;

use ttvsr_cli::{run, Cli};

/// Size the global worker pool from `TTVSR_THREADS` (0 or unset = one per core).
fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("TTVSR_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| format!("TTVSR_THREADS must be a count, got {raw:?}"))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        std::process::exit(2);
    }
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
