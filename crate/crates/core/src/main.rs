fn main() {
    let code = harmonic_gp::cli::run(std::env::args_os(), &mut std::io::stdout());
    std::process::exit(code);
}
