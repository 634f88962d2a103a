use cta::shiftgen::*;
use std::time::Instant;

fn main() {
    let t0 = Instant::now();
    let mut n = 0usize;
    let src = generate_domain(&source_domain(42), 60).unwrap();
    n += src.len();
    for d in contextual_domains(42) {
        n += generate_domain(&d, 60).unwrap().len();
    }
    for d in semantic_domains(42) {
        n += generate_domain(&d, 60).unwrap().len();
    }
    println!("generated {} samples in {:?}", n, t0.elapsed());
}
