use kickoff_core::nn::Tensor;
use std::time::Instant;

fn main() {
    // Shapes that dominate training: batch x 256 through the dense stack.
    for &(m, k, n) in &[(16usize, 256usize, 256usize), (64, 256, 256), (16, 101, 256), (64, 256, 19)] {
        let a = Tensor::from_vec(&[m, k], (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let b = Tensor::from_vec(&[k, n], (0..k * n).map(|i| (i as f64 * 0.11).cos()).collect()).unwrap();
        let mut out = vec![0.0; m * n];
        let reps = 2000;
        let t0 = Instant::now();
        for _ in 0..reps {
            kickoff_core::nn::kernels::matmul(a.data(), b.data(), &mut out, m, k, n);
        }
        let dt = t0.elapsed().as_secs_f64();
        let flops = 2.0 * (m * k * n * reps) as f64;
        println!("({m},{k},{n}): {:.2} GFLOP/s, {:.1} us/call", flops / dt / 1e9, dt / reps as f64 * 1e6);
    }
}
