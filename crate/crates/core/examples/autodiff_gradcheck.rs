//! Reverse-mode gradients against central differences: first a two-layer
//! expression built by hand, then the full joint loss of a small model.
//!
//! cargo run --example autodiff_gradcheck

use crossrtd::diagnostics::{joint_gradcheck, random_cases, worst_param_name};
use crossrtd::tensor::gradcheck::{central_difference, compare};
use crossrtd::tensor::{Graph, NodeId, Tensor};

fn loss(g: &mut Graph<f64>, x: NodeId, w: NodeId) -> NodeId {
    let h = g.matmul(x, w).unwrap();
    let h = g.gelu(h);
    let s = g.sigmoid(h);
    g.sum(s)
}

fn main() -> crossrtd::Result<()> {
    let x = Tensor::from_f64(&[2, 3], &[0.5, -1.0, 2.0, 0.1, 0.3, -0.7])?;
    let w = Tensor::from_f64(&[3, 2], &[0.2, -0.4, 1.1, 0.6, -0.9, 0.3])?;

    let mut g = Graph::new();
    let (xn, wn) = (g.trainable(x.clone()), g.trainable(w.clone()));
    let out = loss(&mut g, xn, wn);
    g.backward(out)?;
    let analytic = vec![g.grad(xn).unwrap().to_vec(), g.grad(wn).unwrap().to_vec()];
    let numeric = central_difference(
        |v| {
            let mut g = Graph::new();
            let (a, b) = (g.constant(v[0].clone()), g.constant(v[1].clone()));
            let out = loss(&mut g, a, b);
            g.value(out).item()
        },
        &[x, w],
        1e-5,
    );
    let report = compare(&analytic, &numeric, 1e-6);
    println!("sum(sigmoid(gelu(x w))): {} entries, max rel err {:.2e}", report.checked, report.max_rel_err);

    for case in &random_cases(3, 7) {
        let report = joint_gradcheck(case)?;
        println!(
            "joint loss, d_h {} heads {} layers {}+{}: {} entries, max rel err {:.2e} ({})",
            case.model.hidden_size,
            case.model.num_heads,
            case.model.generator_layers,
            case.model.discriminator_layers,
            report.checked,
            report.max_rel_err,
            worst_param_name(case, &report).unwrap_or_default()
        );
    }
    Ok(())
}
