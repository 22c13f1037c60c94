fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(kgtruth::cli::LOG_ENV, "warn")).init();
    std::process::exit(kgtruth::cli::main_with(std::env::args_os()));
}
