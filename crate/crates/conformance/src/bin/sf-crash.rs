fn main() {
    eprintln!("crashing on purpose");
    std::process::abort();
}
