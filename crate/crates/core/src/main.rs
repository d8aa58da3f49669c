use clap::Parser;
use portiloop_sim::cli::{exit_code, run, Cli};

fn main() {
    // Optional thread cap for the data-parallel paths.
    #[cfg(feature = "parallel")]
    if let Ok(v) = std::env::var("PORTILOOP_SIM_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(exit_code(&e));
    }
}
