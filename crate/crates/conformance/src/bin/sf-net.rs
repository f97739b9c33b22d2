use std::net::TcpStream;
use std::time::Duration;

fn main() {
    let addr = std::env::args().nth(1).unwrap_or_else(|| "93.184.216.34:80".into());
    match TcpStream::connect_timeout(&addr.parse().expect("socket address"), Duration::from_secs(2)) {
        Ok(_) => println!("{{\"avg\": 1.0}}"),
        Err(e) => {
            eprintln!("connect failed: {e}");
            std::process::exit(4);
        }
    }
}
