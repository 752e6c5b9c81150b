use clap::Parser;

use deal_cli::{execute, exit, Cli, LOG_ENV};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "info")).init();
    let cli = Cli::parse();
    let json = cli.json;
    let code = match execute(cli) {
        Ok(()) => exit::OK,
        Err(e) => {
            if json {
                eprintln!("{}", e.to_json());
            } else {
                eprintln!("error: {e}");
            }
            e.code
        }
    };
    std::process::exit(code);
}
