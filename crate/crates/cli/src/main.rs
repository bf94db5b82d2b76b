fn main() {
    std::process::exit(fpmatch::run(std::env::args_os()));
}
