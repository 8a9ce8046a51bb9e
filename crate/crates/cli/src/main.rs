use std::io::{self, Write};
use std::process;

use clap::Parser;
use dashpc_cli::{commands, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            process::exit(e.exit_code());
        }
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let result = commands::run(cli, &mut out);
    let _ = out.flush();
    if let Err(e) = result {
        eprintln!("dashpc: {e}");
        process::exit(e.code as i32);
    }
}
