use tracing_subscriber::EnvFilter;

fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::from_env("DR_LOG"))
        .with_writer(std::io::stderr)
        .init();
    std::process::exit(dual_reflect::cli::run(std::env::args_os()));
}
