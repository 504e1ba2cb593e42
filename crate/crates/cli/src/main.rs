use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    std::process::exit(detdec_cli::run(detdec_cli::Cli::parse()));
}
