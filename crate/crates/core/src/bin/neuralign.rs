fn main() {
    std::process::exit(neuralign::cli::run(std::env::args_os()));
}
