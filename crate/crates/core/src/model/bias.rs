//! Scalar reference form of the gated relative position bias.
//!
//! The encoder computes the same quantity in factored form inside the
//! graph (`d * (1 + g_up + (1 - g_up) * w * g_reset)`); this module keeps
//! the three-step definition for a single query and head.

/// Bias parameters of one attention head.
#[derive(Clone, Debug, PartialEq)]
pub struct GatedBiasParams {
    /// Learnable bias per clipped offset, index `offset + radius`.
    pub d_table: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub w: f64,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl GatedBiasParams {
    pub fn radius(&self) -> usize {
        self.d_table.len() / 2
    }

    /// Table entry for a relative offset `i - j`, clipped to `[-k, k]`.
    pub fn table_bias(&self, offset: isize) -> f64 {
        let k = self.radius() as isize;
        self.d_table[(offset.clamp(-k, k) + k) as usize]
    }

    /// `(g_update, g_reset)` for query `q`.
    pub fn gates(&self, q: &[f64]) -> (f64, f64) {
        let dot = |a: &[f64]| q.iter().zip(a).map(|(x, y)| x * y).sum::<f64>();
        (sigmoid(dot(&self.u)), sigmoid(dot(&self.v)))
    }

    /// Bias `r_{i-j}` added to the attention logit of query `q` at `offset = i - j`.
    pub fn bias(&self, q: &[f64], offset: isize) -> f64 {
        let (g_up, g_reset) = self.gates(q);
        let d = self.table_bias(offset);
        let r_tilde = self.w * g_reset * d;
        d + g_up * d + (1.0 - g_up) * r_tilde
    }
}

/// Free-function form of [`GatedBiasParams::bias`].
pub fn gated_rel_pos_bias(q: &[f64], offset: isize, params: &GatedBiasParams) -> f64 {
    params.bias(q, offset)
}
