use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("OTE_LOG", "warn")).init();
    ExitCode::from(ote::cli::dispatch(std::env::args()) as u8)
}
