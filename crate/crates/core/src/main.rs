fn main() {
    std::process::exit(shockstab::cli::run(std::env::args_os()));
}
