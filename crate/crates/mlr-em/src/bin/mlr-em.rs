fn main() {
    std::process::exit(mlr_em::cli::main_with_args(std::env::args_os()));
}
