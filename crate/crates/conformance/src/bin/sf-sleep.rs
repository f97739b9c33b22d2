fn main() {
    std::thread::sleep(std::time::Duration::from_secs(60));
    println!("{{\"avg\": 0.0}}");
}
