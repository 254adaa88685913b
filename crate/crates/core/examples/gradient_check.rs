//! Build a small expression on the tape and compare its gradients with
//! central differences.
//!
//! cargo run --release --example gradient_check

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tsgan::autodiff::{check_gradients, ParamStore, Tensor};
use tsgan::layers::{Activation, DenseParams, LstmParams};

fn main() -> tsgan::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    let cell = LstmParams::init(2, 3, &mut rng).register(&mut store, "cell")?;
    let head = DenseParams::init(3, 1, Activation::Sigmoid, &mut rng).register(&mut store, "head");
    let xs: Vec<_> = (0..4)
        .map(|t| store.add(format!("x{t}"), Tensor::new(vec![1, 2], vec![0.1 * t as f64, -0.2]).unwrap()))
        .collect();

    let report = check_gradients(
        &mut store,
        |g, s| {
            let steps: Vec<_> = xs.iter().map(|&x| g.param(s, x)).collect();
            let (hs, _) = cell.sequence(g, s, &steps)?;
            let y = head.forward(g, s, *hs.last().unwrap())?;
            g.sum(y)
        },
        1e-6,
        1e-4,
        1e-9,
    )?;
    println!(
        "{} entries checked, {} failures, max relative error {:.2e}",
        report.checked, report.failures, report.max_rel_error
    );
    Ok(())
}
