use std::io::Write;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let result = dre::cli::run(std::env::args_os());
    // A closed pipe (e.g. `dre prompt --all | head`) is not an error.
    let _ = std::io::stdout().lock().write_all(result.stdout.as_bytes());
    let _ = std::io::stderr().lock().write_all(result.stderr.as_bytes());
    std::process::exit(result.exit_code);
}
