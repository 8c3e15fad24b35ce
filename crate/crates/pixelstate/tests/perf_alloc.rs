use std::time::Instant;

#[test]
#[ignore]
fn alloc_cost() {
    // cost of allocating + zeroing + dropping the big im2col buffers
    for _ in 0..3 {
        let t = Instant::now();
        for _ in 0..20 {
            let a = ndarray::Array2::<f64>::zeros((27, 131072));
            std::hint::black_box(&a);
        }
        eprintln!("zeros(27x131072): {:.2} ms", t.elapsed().as_secs_f64() * 1e3 / 20.0);
    }
    // same buffer reused
    let mut a = ndarray::Array2::<f64>::zeros((27, 131072));
    let t = Instant::now();
    for _ in 0..20 {
        a.fill(0.0);
        std::hint::black_box(&a);
    }
    eprintln!("refill existing: {:.2} ms", t.elapsed().as_secs_f64() * 1e3 / 20.0);
}
