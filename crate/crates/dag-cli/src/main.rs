fn main() {
    println!("dag");
}
