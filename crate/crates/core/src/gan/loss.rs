use crate::autodiff::{Graph, Tensor, Var};
use crate::error::Result;

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-7;

/// `-mean(log D(x)) - mean(log(1 - D(G(z))))`.
pub fn d_loss_graph(g: &mut Graph, d_real: Var, d_fake: Var) -> Result<Var> {
    let real = g.clamp(d_real, PROB_CLAMP, 1.0 - PROB_CLAMP)?;
    let real = g.log(real)?;
    let real = g.mean(real)?;
    let fake = g.clamp(d_fake, PROB_CLAMP, 1.0 - PROB_CLAMP)?;
    let fake = g.scale(fake, -1.0)?;
    let one = g.constant(Tensor::scalar(1.0));
    let fake = g.add(fake, one)?;
    let fake = g.log(fake)?;
    let fake = g.mean(fake)?;
    let total = g.add(real, fake)?;
    g.scale(total, -1.0)
}

/// Non-saturating generator objective `-mean(log D(G(z)))`.
pub fn g_loss_graph(g: &mut Graph, d_fake: Var) -> Result<Var> {
    let p = g.clamp(d_fake, PROB_CLAMP, 1.0 - PROB_CLAMP)?;
    let p = g.log(p)?;
    let p = g.mean(p)?;
    g.scale(p, -1.0)
}

fn clamp(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

fn mean(it: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = it.len() as f64;
    it.sum::<f64>() / n
}

pub fn d_loss(d_real: &[f64], d_fake: &[f64]) -> f64 {
    -mean(d_real.iter().map(|&p| clamp(p).ln())) - mean(d_fake.iter().map(|&p| (1.0 - clamp(p)).ln()))
}

pub fn g_loss(d_fake: &[f64]) -> f64 {
    -mean(d_fake.iter().map(|&p| clamp(p).ln()))
}
