fn main() {
    std::process::exit(flowclone::cli::run(std::env::args_os()));
}
