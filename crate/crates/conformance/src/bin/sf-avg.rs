use std::io::Read;

fn main() {
    let mut input = String::new();
    std::io::stdin().read_to_string(&mut input).unwrap();
    let start = input.find("\"samples\"").expect("samples field") + "\"samples\"".len();
    let open = start + input[start..].find('[').expect("samples array") + 1;
    let close = open + input[open..].find(']').expect("closed array");
    let samples: Vec<f64> = input[open..close]
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().expect("number"))
        .collect();
    if samples.len() < 4 {
        eprintln!("need at least 4 samples, got {}", samples.len());
        std::process::exit(3);
    }
    let mut sum = 0.0;
    for v in &samples[samples.len() - 4..] {
        sum += v;
    }
    println!("{{\"avg\": {:?}}}", sum / 4.0);
}
