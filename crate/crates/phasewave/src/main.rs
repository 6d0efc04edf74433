fn main() {
    let outcome = phasewave::run(std::env::args_os());
    std::process::exit(outcome.exit_code);
}
