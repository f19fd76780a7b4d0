//! The gated relative position bias: the scalar definition at a few gate
//! settings, then the bias a freshly initialized layer adds to one query.
//!
//! cargo run --example gated_attention

use crossrtd::model::bias::GatedBiasParams;
use crossrtd::model::{ElectraConfig, ElectraModel, Role, TokenBatch};
use crossrtd::tensor::Graph;

fn main() -> crossrtd::Result<()> {
    let params = GatedBiasParams {
        d_table: vec![-0.5, -0.2, 0.0, 0.4, 1.0],
        u: vec![1.0, 0.0],
        v: vec![0.0, 1.0],
        w: 1.0,
    };
    println!("offset  d     open(q=[40,0])  closed(q=[-40,-40])  mid(q=0)");
    for offset in -3..=3 {
        println!(
            "{offset:>4}  {:>5.2}  {:>10.3}  {:>12.3}  {:>12.3}",
            params.table_bias(offset),
            params.bias(&[40.0, 0.0], offset),
            params.bias(&[-40.0, -40.0], offset),
            params.bias(&[0.0, 0.0], offset)
        );
    }

    let config = ElectraConfig {
        vocab_size: 20,
        ..ElectraConfig::default()
    };
    let model = ElectraModel::<f64>::init(&config, 3)?;
    let batch = TokenBatch::from_sequences(&[vec![1u32, 7, 9, 11, 13, 2]])?;
    let mut g = Graph::new();
    let p = model.params.bind(&mut g, false);
    let out = model.encoder(Role::Discriminator).forward(&mut g, &p, &batch)?;
    let probs = g.value(out.attention[0]).data();
    println!("\nlayer 1 head 0 attention of query 2 at init: {:?}", &probs[2 * 6..3 * 6].iter().map(|x| (x * 1e3).round() / 1e3).collect::<Vec<_>>());
    let head = model.encoder(Role::Discriminator).gated_bias_params(&model.params, 0, 0);
    println!("its bias table: {:?}", head.d_table.iter().map(|x| (x * 1e4).round() / 1e4).collect::<Vec<_>>());
    Ok(())
}
