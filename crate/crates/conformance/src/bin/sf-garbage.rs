fn main() {
    println!("this is not json");
}
