use chaoslab::rng::RngStream;
use chaoslab::tail::tail_slope;

fn main() {
    for seed in 0..12u64 {
        let mut rng = RngStream::new(seed, 0);
        let totals: Vec<f64> = (0..100_000).map(|_| 1.0 / (1.0 - rng.uniform())).collect();
        let fit = tail_slope(&totals, 0.99, 0.9999, 12).unwrap();
        println!("seed {seed}: slope {:+.4} se {:.4}", fit.slope, fit.slope_se);
    }
}
