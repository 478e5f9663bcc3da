use std::panic;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let code = panic::catch_unwind(|| cd_cli::main_with_args(std::env::args_os()))
        .unwrap_or(cd_cli::exit::INTERNAL);
    std::process::exit(code);
}
