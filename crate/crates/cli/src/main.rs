fn main() {
    let env_seed = std::env::var("BBM_SEED").ok();
    let code = bbm_cli::run(
        std::env::args_os(),
        env_seed.as_deref(),
        &mut std::io::stdout(),
        &mut std::io::stderr(),
    );
    std::process::exit(code);
}
