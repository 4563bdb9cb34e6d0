fn main() {
    let args: Vec<String> = std::env::args().collect();
    std::process::exit(augforget::cli::run(&args));
}
