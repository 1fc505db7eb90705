use monitored_chain::cli;

fn main() {
    if let Err(e) = cli::init_threads() {
        eprintln!("error: {e}");
        std::process::exit(cli::EXIT_CONFIG);
    }
    let code = cli::run(std::env::args_os(), &mut std::io::stdout().lock(), &mut std::io::stderr().lock());
    std::process::exit(code);
}
