//! Regenerates `assets/default.dfw`.

use doodle_core::fixture::{generate_default_net, DEFAULT_SEED};

fn main() {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/assets/default.dfw").to_string());
    let net = generate_default_net(DEFAULT_SEED);
    std::fs::write(&path, net.to_bytes()).expect("write weights");
    println!("wrote {path}");
}
