use super::{Float, Tensor};
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// How a loss op folds its per-position terms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    #[default]
    Sum,
    Mean,
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    /// `[g, m, k] x [g, k, n]`, or `[g, m, k] x [g, n, k]^T` when `trans_b`.
    MatMul {
        a: NodeId,
        b: NodeId,
        groups: usize,
        m: usize,
        k: usize,
        n: usize,
        trans_b: bool,
    },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// `b` repeats over the leading dimensions of `a`.
    AddBroadcast(NodeId, NodeId),
    MulBroadcast(NodeId, NodeId),
    Scale(NodeId, T),
    AddScalar(NodeId),
    Sigmoid(NodeId),
    Gelu(NodeId),
    Sum(NodeId),
    SumLast {
        a: NodeId,
        width: usize,
    },
    LayerNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        rstd: Vec<T>,
    },
    Embedding {
        table: NodeId,
        ids: Vec<u32>,
    },
    GatherRows {
        x: NodeId,
        rows: Vec<usize>,
    },
    Reshape(NodeId),
    Transpose(NodeId),
    /// `[d0, d1, d2, d3] -> [d0, d2, d1, d3]`.
    SwapMiddle {
        a: NodeId,
        dims: [usize; 4],
    },
    ConcatRows(Vec<NodeId>),
    MaskedSoftmax(NodeId),
    RelPosBias {
        table: NodeId,
        coeff: NodeId,
        batch: usize,
        seq: usize,
        radius: usize,
    },
    SoftmaxCrossEntropy {
        logits: NodeId,
        targets: Vec<u32>,
        rows: Vec<usize>,
        probs: Vec<T>,
        scale: T,
    },
    BceWithLogits {
        logits: NodeId,
        labels: Vec<T>,
        weights: Vec<T>,
        scale: T,
    },
}

#[derive(Debug)]
struct Node<T: Float> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Dynamic tape of tensor operations.
///
/// Every op appends a node; [`Graph::backward`] walks the nodes in reverse
/// creation order, which is a valid reverse topological order.
#[derive(Debug, Default)]
pub struct Graph<T: Float = f32> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
}

fn sigmoid<T: Float>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

const GELU_C: f64 = 0.044_715;
// sqrt(2 / pi)
const GELU_K: f64 = 0.797_884_560_802_865_4;

fn gelu<T: Float>(x: T) -> T {
    let k = T::of(GELU_K);
    let c = T::of(GELU_C);
    let half = T::of(0.5);
    half * x * (T::one() + (k * (x + c * x * x * x)).tanh())
}

fn gelu_grad<T: Float>(x: T) -> T {
    let k = T::of(GELU_K);
    let c = T::of(GELU_C);
    let half = T::of(0.5);
    let t = (k * (x + c * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * k * (T::one() + T::of(3.0) * c * x * x)
}

/// `log(1 + exp(-|x|)) + max(x, 0) - x * z`, the stable BCE-with-logits term.
fn bce_term<T: Float>(x: T, z: T) -> T {
    x.max(T::zero()) - x * z + (T::one() + (-x.abs()).exp()).ln()
}

impl<T: Float> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    /// Drops every node and gradient so the tape can record a new pass.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.grads.clear();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    fn data(&self, id: NodeId) -> &[T] {
        self.nodes[id.0].value.data()
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    /// Leaf whose gradient is populated by [`Graph::backward`].
    pub fn trainable(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Gradient of the last backward pass w.r.t. `id`, if it was tracked.
    pub fn grad(&self, id: NodeId) -> Option<&[T]> {
        self.grads.get(id.0).and_then(|g| g.as_deref())
    }

    pub fn take_grad(&mut self, id: NodeId) -> Option<Vec<T>> {
        self.grads.get_mut(id.0).and_then(Option::take)
    }

    /// Number of allocated gradient buffers after the last backward pass.
    pub fn grad_buffers(&self) -> usize {
        self.grads.iter().filter(|g| g.is_some()).count()
    }

    // ---- linear algebra ----

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", &sa, &sb));
        }
        self.mm(a, b, 1, sa[0], sa[1], sb[1], false, vec![sa[0], sb[1]])
    }

    /// `a · bᵀ` for `a: [m, k]`, `b: [n, k]`.
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[1] {
            return Err(Error::shape("matmul_nt", &sa, &sb));
        }
        self.mm(a, b, 1, sa[0], sa[1], sb[0], true, vec![sa[0], sb[0]])
    }

    /// Batched product `[g, m, k] x [g, k, n] -> [g, m, n]`.
    pub fn bmm(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return Err(Error::shape("bmm", &sa, &sb));
        }
        self.mm(a, b, sa[0], sa[1], sa[2], sb[2], false, vec![sa[0], sa[1], sb[2]])
    }

    /// Batched `[g, m, k] x [g, n, k]^T -> [g, m, n]`.
    pub fn bmm_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[2] {
            return Err(Error::shape("bmm_nt", &sa, &sb));
        }
        self.mm(a, b, sa[0], sa[1], sa[2], sb[1], true, vec![sa[0], sa[1], sb[1]])
    }

    #[allow(clippy::too_many_arguments)]
    fn mm(
        &mut self,
        a: NodeId,
        b: NodeId,
        groups: usize,
        m: usize,
        k: usize,
        n: usize,
        trans_b: bool,
        out_shape: Vec<usize>,
    ) -> Result<NodeId> {
        let mut out = vec![T::zero(); groups * m * n];
        {
            let (ad, bd) = (self.data(a), self.data(b));
            let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
            for g in 0..groups {
                T::gemm(
                    m,
                    k,
                    n,
                    T::one(),
                    &ad[g * m * k..(g + 1) * m * k],
                    k as isize,
                    1,
                    &bd[g * k * n..(g + 1) * k * n],
                    rsb,
                    csb,
                    T::zero(),
                    &mut out[g * m * n..(g + 1) * m * n],
                    n as isize,
                    1,
                );
            }
        }
        let rg = self.rg(&[a, b]);
        Ok(self.push(
            Tensor::new(out_shape, out)?,
            Op::MatMul {
                a,
                b,
                groups,
                m,
                k,
                n,
                trans_b,
            },
            rg,
        ))
    }

    // ---- elementwise ----

    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn zip_map(&self, a: NodeId, b: NodeId, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let data = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(self.shape(a).to_vec(), data).expect("shape preserved")
    }

    fn map(&self, a: NodeId, f: impl Fn(T) -> T) -> Tensor<T> {
        let data = self.data(a).iter().map(|&x| f(x)).collect();
        Tensor::new(self.shape(a).to_vec(), data).expect("shape preserved")
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("add", a, b)?;
        let v = self.zip_map(a, b, |x, y| x + y);
        let rg = self.rg(&[a, b]);
        Ok(self.push(v, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("sub", a, b)?;
        let v = self.zip_map(a, b, |x, y| x - y);
        let rg = self.rg(&[a, b]);
        Ok(self.push(v, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("mul", a, b)?;
        let v = self.zip_map(a, b, |x, y| x * y);
        let rg = self.rg(&[a, b]);
        Ok(self.push(v, Op::Mul(a, b), rg))
    }

    fn broadcast_len(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<usize> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let blen: usize = sb.iter().product();
        let scalar = blen == 1;
        let suffix = sb.len() <= sa.len() && sa[sa.len() - sb.len()..] == *sb;
        if !(scalar || suffix) {
            return Err(Error::shape(op, sa, sb));
        }
        Ok(blen)
    }

    /// `a + b` where `b` is a scalar or matches the trailing dims of `a`.
    pub fn add_broadcast(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let blen = self.broadcast_len("add_broadcast", a, b)?;
        let bd = self.data(b);
        let data = self
            .data(a)
            .iter()
            .enumerate()
            .map(|(i, &x)| x + bd[i % blen])
            .collect();
        let v = Tensor::new(self.shape(a).to_vec(), data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(v, Op::AddBroadcast(a, b), rg))
    }

    /// `a * b` where `b` is a scalar or matches the trailing dims of `a`.
    pub fn mul_broadcast(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let blen = self.broadcast_len("mul_broadcast", a, b)?;
        let bd = self.data(b);
        let data = self
            .data(a)
            .iter()
            .enumerate()
            .map(|(i, &x)| x * bd[i % blen])
            .collect();
        let v = Tensor::new(self.shape(a).to_vec(), data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(v, Op::MulBroadcast(a, b), rg))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let f = T::of(factor);
        let v = self.map(a, |x| x * f);
        let rg = self.rg(&[a]);
        self.push(v, Op::Scale(a, f), rg)
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let c = T::of(c);
        let v = self.map(a, |x| x + c);
        let rg = self.rg(&[a]);
        self.push(v, Op::AddScalar(a), rg)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.map(a, sigmoid);
        let rg = self.rg(&[a]);
        self.push(v, Op::Sigmoid(a), rg)
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let v = self.map(a, gelu);
        let rg = self.rg(&[a]);
        self.push(v, Op::Gelu(a), rg)
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s = self.data(a).iter().copied().sum();
        let rg = self.rg(&[a]);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    /// Sums over the last dimension.
    pub fn sum_last(&mut self, a: NodeId) -> NodeId {
        let shape = self.shape(a).to_vec();
        let width = *shape.last().unwrap();
        let data: Vec<T> = self
            .data(a)
            .chunks(width)
            .map(|c| c.iter().copied().sum())
            .collect();
        let out_shape = if shape.len() > 1 {
            shape[..shape.len() - 1].to_vec()
        } else {
            vec![1]
        };
        let rg = self.rg(&[a]);
        self.push(
            Tensor::new(out_shape, data).expect("shape preserved"),
            Op::SumLast { a, width },
            rg,
        )
    }

    /// Normalizes over the last dimension, then applies `gamma`, `beta`.
    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId, eps: f64) -> Result<NodeId> {
        let sx = self.shape(x).to_vec();
        let d = *sx.last().unwrap();
        if self.shape(gamma) != [d] || self.shape(beta) != [d] {
            return Err(Error::shape("layer_norm", &sx, self.shape(gamma)));
        }
        let eps = T::of(eps);
        let dn = T::of(d as f64);
        let rows = self.data(x).len() / d;
        let mut out = vec![T::zero(); rows * d];
        let mut rstds = Vec::with_capacity(rows);
        {
            let (xd, g, b) = (self.data(x), self.data(gamma), self.data(beta));
            for r in 0..rows {
                let row = &xd[r * d..(r + 1) * d];
                let mean = row.iter().copied().sum::<T>() / dn;
                let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dn;
                let rstd = T::one() / (var + eps).sqrt();
                rstds.push(rstd);
                for j in 0..d {
                    out[r * d + j] = (row[j] - mean) * rstd * g[j] + b[j];
                }
            }
        }
        let rg = self.rg(&[x, gamma, beta]);
        Ok(self.push(
            Tensor::new(sx, out)?,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                rstd: rstds,
            },
            rg,
        ))
    }

    // ---- indexing / layout ----

    /// Looks up rows of `table: [V, d]`.
    pub fn embedding(&mut self, table: NodeId, ids: &[u32]) -> Result<NodeId> {
        let st = self.shape(table).to_vec();
        if st.len() != 2 {
            return Err(Error::shape("embedding", &st, &[ids.len()]));
        }
        if ids.is_empty() {
            return Err(Error::Input("embedding lookup with no ids".into()));
        }
        let (vocab, d) = (st[0], st[1]);
        if let Some(&bad) = ids.iter().find(|&&i| i as usize >= vocab) {
            return Err(Error::Input(format!(
                "token id {bad} out of range for vocabulary of {vocab}"
            )));
        }
        let td = self.data(table);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            out.extend_from_slice(&td[i as usize * d..(i as usize + 1) * d]);
        }
        let rg = self.rg(&[table]);
        Ok(self.push(
            Tensor::new(vec![ids.len(), d], out)?,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }

    /// Selects rows of a 2-d tensor.
    pub fn gather_rows(&mut self, x: NodeId, rows: &[usize]) -> Result<NodeId> {
        let sx = self.shape(x).to_vec();
        if sx.len() != 2 || rows.is_empty() || rows.iter().any(|&r| r >= sx[0]) {
            return Err(Error::shape("gather_rows", &sx, &[rows.len()]));
        }
        let d = sx[1];
        let xd = self.data(x);
        let mut out = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            out.extend_from_slice(&xd[r * d..(r + 1) * d]);
        }
        let rg = self.rg(&[x]);
        Ok(self.push(
            Tensor::new(vec![rows.len(), d], out)?,
            Op::GatherRows {
                x,
                rows: rows.to_vec(),
            },
            rg,
        ))
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        let v = self.nodes[a.0].value.clone().reshape(shape)?;
        let rg = self.rg(&[a]);
        Ok(self.push(v, Op::Reshape(a), rg))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let sa = self.shape(a).to_vec();
        if sa.len() != 2 {
            return Err(Error::shape("transpose", &sa, &[]));
        }
        let (r, c) = (sa[0], sa[1]);
        let ad = self.data(a);
        let mut out = vec![T::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = ad[i * c + j];
            }
        }
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::new(vec![c, r], out)?, Op::Transpose(a), rg))
    }

    /// Views `a` as `[d0, d1, d2, d3]` and swaps the two middle axes.
    ///
    /// With `dims = [B, n, H, dk]` this splits attention heads out of a
    /// `[B*n, H*dk]` matrix into `[B*H, n, dk]`; applying it again with
    /// `[B, H, n, dk]` merges them back.
    pub fn swap_middle(&mut self, a: NodeId, dims: [usize; 4], out_shape: &[usize]) -> Result<NodeId> {
        let total: usize = dims.iter().product();
        if total != self.data(a).len() || out_shape.iter().product::<usize>() != total {
            return Err(Error::shape("swap_middle", self.shape(a), &dims));
        }
        let out = swap_middle_data(self.data(a), dims);
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::new(out_shape.to_vec(), out)?, Op::SwapMiddle { a, dims }, rg))
    }

    /// Concatenates tensors along the first dimension.
    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Input("concat of zero tensors".into()))?;
        let tail = self.shape(*first)[1..].to_vec();
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let sp = self.shape(p);
            if sp[1..] != *tail {
                return Err(Error::shape("concat_rows", self.shape(*first), sp));
            }
            rows += sp[0];
            out.extend_from_slice(self.data(p));
        }
        let mut shape = vec![rows];
        shape.extend(tail);
        let rg = self.rg(parts);
        Ok(self.push(Tensor::new(shape, out)?, Op::ConcatRows(parts.to_vec()), rg))
    }

    // ---- attention ----

    /// Row softmax of `scores: [B*H, n, n]` with padded keys excluded.
    ///
    /// `key_valid` has `B * n` entries; keys flagged `false` get zero weight.
    pub fn masked_softmax(&mut self, scores: NodeId, key_valid: &[bool], heads: usize) -> Result<NodeId> {
        let s = self.shape(scores).to_vec();
        if s.len() != 3 || s[1] != s[2] || s[0] % heads != 0 || key_valid.len() != (s[0] / heads) * s[2] {
            return Err(Error::shape("masked_softmax", &s, &[key_valid.len()]));
        }
        let (g, n) = (s[0], s[1]);
        let sd = self.data(scores);
        let mut out = vec![T::zero(); sd.len()];
        for gi in 0..g {
            let valid = &key_valid[(gi / heads) * n..(gi / heads + 1) * n];
            for i in 0..n {
                let base = (gi * n + i) * n;
                let row = &sd[base..base + n];
                let mut mx = T::neg_infinity();
                for j in 0..n {
                    if valid[j] && row[j] > mx {
                        mx = row[j];
                    }
                }
                if mx == T::neg_infinity() {
                    continue;
                }
                let mut z = T::zero();
                for j in 0..n {
                    if valid[j] {
                        let e = (row[j] - mx).exp();
                        out[base + j] = e;
                        z += e;
                    }
                }
                let inv = T::one() / z;
                for v in &mut out[base..base + n] {
                    *v *= inv;
                }
            }
        }
        let rg = self.rg(&[scores]);
        Ok(self.push(Tensor::new(s, out)?, Op::MaskedSoftmax(scores), rg))
    }

    /// Relative-position bias `out[b*H + h, i, j] = table[h, clip(i - j) + k] * coeff[b*n + i, h]`.
    ///
    /// `table: [H, 2k + 1]` holds one learnable bias per clipped offset and
    /// head; `coeff: [B*n, H]` carries the query-dependent gate factor.
    pub fn rel_pos_bias(&mut self, table: NodeId, coeff: NodeId, batch: usize, seq: usize) -> Result<NodeId> {
        let (st, sc) = (self.shape(table).to_vec(), self.shape(coeff).to_vec());
        if st.len() != 2 || st[1] % 2 != 1 || sc != [batch * seq, st[0]] {
            return Err(Error::shape("rel_pos_bias", &st, &sc));
        }
        let heads = st[0];
        let radius = st[1] / 2;
        let width = st[1];
        let (td, cd) = (self.data(table), self.data(coeff));
        let mut out = vec![T::zero(); batch * heads * seq * seq];
        for b in 0..batch {
            for h in 0..heads {
                let trow = &td[h * width..(h + 1) * width];
                for i in 0..seq {
                    let c = cd[(b * seq + i) * heads + h];
                    let base = ((b * heads + h) * seq + i) * seq;
                    for j in 0..seq {
                        out[base + j] = trow[clip_offset(i, j, radius)] * c;
                    }
                }
            }
        }
        let rg = self.rg(&[table, coeff]);
        Ok(self.push(
            Tensor::new(vec![batch * heads, seq, seq], out)?,
            Op::RelPosBias {
                table,
                coeff,
                batch,
                seq,
                radius,
            },
            rg,
        ))
    }

    // ---- losses ----

    /// Negative log-softmax at `targets` over the selected rows of `logits: [N, V]`.
    ///
    /// `rows = None` selects every row. An empty selection yields a zero loss
    /// whose gradient is zero.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: NodeId,
        targets: &[u32],
        rows: Option<&[usize]>,
        reduction: Reduction,
    ) -> Result<NodeId> {
        let sl = self.shape(logits).to_vec();
        if sl.len() != 2 || targets.len() != sl[0] {
            return Err(Error::shape("softmax_cross_entropy", &sl, &[targets.len()]));
        }
        let (n, v) = (sl[0], sl[1]);
        let rows: Vec<usize> = match rows {
            Some(r) => r.to_vec(),
            None => (0..n).collect(),
        };
        if let Some(&bad) = rows.iter().find(|&&r| r >= n) {
            return Err(Error::Input(format!("mask row {bad} outside {n} logit rows")));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t as usize >= v) {
            return Err(Error::Input(format!("target id {bad} outside vocabulary of {v}")));
        }
        let scale = match reduction {
            Reduction::Sum => T::one(),
            Reduction::Mean if rows.is_empty() => T::zero(),
            Reduction::Mean => T::one() / T::of(rows.len() as f64),
        };
        let ld = self.data(logits);
        let mut probs = vec![T::zero(); rows.len() * v];
        let mut total = T::zero();
        for (ri, &r) in rows.iter().enumerate() {
            let row = &ld[r * v..(r + 1) * v];
            let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut z = T::zero();
            let p = &mut probs[ri * v..(ri + 1) * v];
            for (pj, &x) in p.iter_mut().zip(row) {
                *pj = (x - mx).exp();
                z += *pj;
            }
            for pj in p.iter_mut() {
                *pj = *pj / z;
            }
            total += mx + z.ln() - row[targets[r] as usize];
        }
        let rg = self.rg(&[logits]);
        Ok(self.push(
            Tensor::scalar(total * scale),
            Op::SoftmaxCrossEntropy {
                logits,
                targets: targets.to_vec(),
                rows,
                probs,
                scale,
            },
            rg,
        ))
    }

    /// Sigmoid binary cross-entropy of `logits: [N]` against `{0, 1}` labels.
    ///
    /// `include` restricts the fold to a subset of positions.
    pub fn bce_with_logits(
        &mut self,
        logits: NodeId,
        labels: &[bool],
        include: Option<&[bool]>,
        reduction: Reduction,
    ) -> Result<NodeId> {
        let n = self.data(logits).len();
        if labels.len() != n || include.is_some_and(|m| m.len() != n) {
            return Err(Error::shape("bce_with_logits", self.shape(logits), &[labels.len()]));
        }
        let z: Vec<T> = labels.iter().map(|&l| if l { T::one() } else { T::zero() }).collect();
        let w: Vec<T> = match include {
            Some(m) => m.iter().map(|&b| if b { T::one() } else { T::zero() }).collect(),
            None => vec![T::one(); n],
        };
        let count: T = w.iter().copied().sum();
        let scale = match reduction {
            Reduction::Sum => T::one(),
            Reduction::Mean if count == T::zero() => T::zero(),
            Reduction::Mean => T::one() / count,
        };
        let total: T = self
            .data(logits)
            .iter()
            .zip(z.iter().zip(&w))
            .map(|(&x, (&zi, &wi))| wi * bce_term(x, zi))
            .sum();
        let rg = self.rg(&[logits]);
        Ok(self.push(
            Tensor::scalar(total * scale),
            Op::BceWithLogits {
                logits,
                labels: z,
                weights: w,
                scale,
            },
            rg,
        ))
    }

    // ---- backward ----

    /// Reverse pass from a scalar `loss`.
    ///
    /// Previous gradients are discarded. Only nodes downstream of a
    /// trainable leaf get a buffer.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        self.grads.clear();
        self.grads.resize_with(self.nodes.len(), || None);
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            backprop(&self.nodes, &mut self.grads, i, &g);
            self.grads[i] = Some(g);
        }
        Ok(())
    }
}

fn acc<'g, T: Float>(nodes: &[Node<T>], grads: &'g mut [Option<Vec<T>>], id: NodeId) -> Option<&'g mut Vec<T>> {
if !nodes[id.0].requires_grad {
    return None;
}
let len = nodes[id.0].value.len();
Some(grads[id.0].get_or_insert_with(|| vec![T::zero(); len]))
}

fn backprop<T: Float>(nodes: &[Node<T>], grads: &mut [Option<Vec<T>>], i: usize, g: &[T]) {
    match nodes[i].op {
        Op::Leaf => {}
        Op::MatMul {
            a,
            b,
            groups,
            m,
            k,
            n,
            trans_b,
        } => {
            if nodes[a.0].requires_grad {
                let bd = nodes[b.0].value.data();
                let ga = acc(nodes, grads, a).unwrap();
                for gi in 0..groups {
                    let gs = &g[gi * m * n..(gi + 1) * m * n];
                    let bs = &bd[gi * k * n..(gi + 1) * k * n];
                    // dA = dC · Bᵀ  (B stored [k, n], or [n, k] when trans_b)
                    let (rsb, csb) = if trans_b { (k as isize, 1) } else { (1, n as isize) };
                    T::gemm(
                        m,
                        n,
                        k,
                        T::one(),
                        gs,
                        n as isize,
                        1,
                        bs,
                        rsb,
                        csb,
                        T::one(),
                        &mut ga[gi * m * k..(gi + 1) * m * k],
                        k as isize,
                        1,
                    );
                }
            }
            if nodes[b.0].requires_grad {
                let ad = nodes[a.0].value.data();
                let gb = acc(nodes, grads, b).unwrap();
                for gi in 0..groups {
                    let gs = &g[gi * m * n..(gi + 1) * m * n];
                    let as_ = &ad[gi * m * k..(gi + 1) * m * k];
                    let out = &mut gb[gi * k * n..(gi + 1) * k * n];
                    if trans_b {
                        // dB[n, k] = dCᵀ · A
                        T::gemm(n, m, k, T::one(), gs, 1, n as isize, as_, k as isize, 1, T::one(), out, k as isize, 1);
                    } else {
                        // dB[k, n] = Aᵀ · dC
                        T::gemm(k, m, n, T::one(), as_, 1, k as isize, gs, n as isize, 1, T::one(), out, n as isize, 1);
                    }
                }
            }
        }
        Op::Add(a, b) => {
            for id in [a, b] {
                if let Some(ga) = acc(nodes, grads, id) {
                    ga.iter_mut().zip(g).for_each(|(x, &y)| *x += y);
                }
            }
        }
        Op::Sub(a, b) => {
            if let Some(ga) = acc(nodes, grads, a) {
                ga.iter_mut().zip(g).for_each(|(x, &y)| *x += y);
            }
            if let Some(gb) = acc(nodes, grads, b) {
                gb.iter_mut().zip(g).for_each(|(x, &y)| *x -= y);
            }
        }
        Op::Mul(a, b) => {
            if nodes[a.0].requires_grad {
                let bd = nodes[b.0].value.data();
                let ga = acc(nodes, grads, a).unwrap();
                for ((x, &gy), &bv) in ga.iter_mut().zip(g).zip(bd) {
                    *x += gy * bv;
                }
            }
            if nodes[b.0].requires_grad {
                let ad = nodes[a.0].value.data();
                let gb = acc(nodes, grads, b).unwrap();
                for ((x, &gy), &av) in gb.iter_mut().zip(g).zip(ad) {
                    *x += gy * av;
                }
            }
        }
        Op::AddBroadcast(a, b) => {
            if let Some(ga) = acc(nodes, grads, a) {
                ga.iter_mut().zip(g).for_each(|(x, &y)| *x += y);
            }
            if let Some(gb) = acc(nodes, grads, b) {
                let blen = gb.len();
                for (idx, &gy) in g.iter().enumerate() {
                    gb[idx % blen] += gy;
                }
            }
        }
        Op::MulBroadcast(a, b) => {
            if nodes[a.0].requires_grad {
                let bd = nodes[b.0].value.data();
                let blen = bd.len();
                let ga = acc(nodes, grads, a).unwrap();
                for (idx, (x, &gy)) in ga.iter_mut().zip(g).enumerate() {
                    *x += gy * bd[idx % blen];
                }
            }
            if nodes[b.0].requires_grad {
                let ad = nodes[a.0].value.data();
                let gb = acc(nodes, grads, b).unwrap();
                let blen = gb.len();
                for (idx, (&gy, &av)) in g.iter().zip(ad).enumerate() {
                    gb[idx % blen] += gy * av;
                }
            }
        }
        Op::Scale(a, f) => {
            if let Some(ga) = acc(nodes, grads, a) {
                ga.iter_mut().zip(g).for_each(|(x, &y)| *x += y * f);
            }
        }
        Op::AddScalar(a) | Op::Reshape(a) => {
            if let Some(ga) = acc(nodes, grads, a) {
                ga.iter_mut().zip(g).for_each(|(x, &y)| *x += y);
            }
        }
        Op::Sigmoid(a) => {
            let out = nodes[i].value.data();
            if let Some(ga) = acc(nodes, grads, a) {
                for ((x, &gy), &s) in ga.iter_mut().zip(g).zip(out) {
                    *x += gy * s * (T::one() - s);
                }
            }
        }
        Op::Gelu(a) => {
            if nodes[a.0].requires_grad {
                let inp = nodes[a.0].value.data();
                let ga = acc(nodes, grads, a).unwrap();
                for ((x, &gy), &v) in ga.iter_mut().zip(g).zip(inp) {
                    *x += gy * gelu_grad(v);
                }
            }
        }
        Op::Sum(a) => {
            if let Some(ga) = acc(nodes, grads, a) {
                ga.iter_mut().for_each(|x| *x += g[0]);
            }
        }
        Op::SumLast { a, width } => {
            if let Some(ga) = acc(nodes, grads, a) {
                for (idx, x) in ga.iter_mut().enumerate() {
                    *x += g[idx / width];
                }
            }
        }
        Op::LayerNorm {
            x,
            gamma,
            beta,
            ref rstd,
        } => {
            let d = nodes[gamma.0].value.len();
            let xd = nodes[x.0].value.data();
            let gm = nodes[gamma.0].value.data();
            let rows = xd.len() / d;
            let dn = T::of(d as f64);
            let mut xhat = vec![T::zero(); xd.len()];
            for r in 0..rows {
                let row = &xd[r * d..(r + 1) * d];
                let mean = row.iter().copied().sum::<T>() / dn;
                for j in 0..d {
                    xhat[r * d + j] = (row[j] - mean) * rstd[r];
                }
            }
            if let Some(gg) = acc(nodes, grads, gamma) {
                for idx in 0..xd.len() {
                    gg[idx % d] += g[idx] * xhat[idx];
                }
            }
            if let Some(gb) = acc(nodes, grads, beta) {
                for idx in 0..xd.len() {
                    gb[idx % d] += g[idx];
                }
            }
            if let Some(gx) = acc(nodes, grads, x) {
                for r in 0..rows {
                    let mut mean_dxh = T::zero();
                    let mut mean_dxh_xh = T::zero();
                    for j in 0..d {
                        let dxh = g[r * d + j] * gm[j];
                        mean_dxh += dxh;
                        mean_dxh_xh += dxh * xhat[r * d + j];
                    }
                    mean_dxh = mean_dxh / dn;
                    mean_dxh_xh = mean_dxh_xh / dn;
                    for j in 0..d {
                        let dxh = g[r * d + j] * gm[j];
                        gx[r * d + j] += rstd[r] * (dxh - mean_dxh - xhat[r * d + j] * mean_dxh_xh);
                    }
                }
            }
        }
        Op::Embedding { table, ref ids } => {
            if let Some(gt) = acc(nodes, grads, table) {
                let d = g.len() / ids.len();
                for (r, &id) in ids.iter().enumerate() {
                    let dst = &mut gt[id as usize * d..(id as usize + 1) * d];
                    dst.iter_mut().zip(&g[r * d..(r + 1) * d]).for_each(|(x, &y)| *x += y);
                }
            }
        }
        Op::GatherRows { x, ref rows } => {
            if let Some(gx) = acc(nodes, grads, x) {
                let d = g.len() / rows.len();
                for (ri, &r) in rows.iter().enumerate() {
                    let dst = &mut gx[r * d..(r + 1) * d];
                    dst.iter_mut().zip(&g[ri * d..(ri + 1) * d]).for_each(|(x, &y)| *x += y);
                }
            }
        }
        Op::Transpose(a) => {
            let s = nodes[a.0].value.shape();
            if let Some(ga) = acc(nodes, grads, a) {
                let (r, c) = (s[0], s[1]);
                for ii in 0..r {
                    for jj in 0..c {
                        ga[ii * c + jj] += g[jj * r + ii];
                    }
                }
            }
        }
        Op::SwapMiddle { a, dims } => {
            if let Some(ga) = acc(nodes, grads, a) {
                let back = swap_middle_data(g, [dims[0], dims[2], dims[1], dims[3]]);
                ga.iter_mut().zip(&back).for_each(|(x, &y)| *x += y);
            }
        }
        Op::ConcatRows(ref parts) => {
            let mut offset = 0;
            for &p in parts {
                let len = nodes[p.0].value.len();
                if let Some(gp) = acc(nodes, grads, p) {
                    gp.iter_mut()
                        .zip(&g[offset..offset + len])
                        .for_each(|(x, &y)| *x += y);
                }
                offset += len;
            }
        }
        Op::MaskedSoftmax(s) => {
            let n = nodes[i].value.shape()[2];
            let out = nodes[i].value.data();
            if let Some(gs) = acc(nodes, grads, s) {
                for (row_g, (row_y, row_dst)) in g
                    .chunks(n)
                    .zip(out.chunks(n).zip(gs.chunks_mut(n)))
                {
                    let dot: T = row_g.iter().zip(row_y).map(|(&a, &b)| a * b).sum();
                    for j in 0..n {
                        row_dst[j] += row_y[j] * (row_g[j] - dot);
                    }
                }
            }
        }
        Op::RelPosBias {
            table,
            coeff,
            batch,
            seq,
            radius,
        } => {
            let td = nodes[table.0].value.data();
            let cd = nodes[coeff.0].value.data();
            let width = 2 * radius + 1;
            let heads = td.len() / width;
            if nodes[table.0].requires_grad {
                let gt = acc(nodes, grads, table).unwrap();
                for b in 0..batch {
                    for h in 0..heads {
                        for ii in 0..seq {
                            let c = cd[(b * seq + ii) * heads + h];
                            let base = ((b * heads + h) * seq + ii) * seq;
                            for jj in 0..seq {
                                gt[h * width + clip_offset(ii, jj, radius)] += g[base + jj] * c;
                            }
                        }
                    }
                }
            }
            if nodes[coeff.0].requires_grad {
                let gc = acc(nodes, grads, coeff).unwrap();
                for b in 0..batch {
                    for h in 0..heads {
                        let trow = &td[h * width..(h + 1) * width];
                        for ii in 0..seq {
                            let base = ((b * heads + h) * seq + ii) * seq;
                            let mut s = T::zero();
                            for jj in 0..seq {
                                s += g[base + jj] * trow[clip_offset(ii, jj, radius)];
                            }
                            gc[(b * seq + ii) * heads + h] += s;
                        }
                    }
                }
            }
        }
        Op::SoftmaxCrossEntropy {
            logits,
            ref targets,
            ref rows,
            ref probs,
            scale,
        } => {
            let v = nodes[logits.0].value.shape()[1];
            if let Some(gl) = acc(nodes, grads, logits) {
                let f = g[0] * scale;
                for (ri, &r) in rows.iter().enumerate() {
                    let dst = &mut gl[r * v..(r + 1) * v];
                    for (x, &p) in dst.iter_mut().zip(&probs[ri * v..(ri + 1) * v]) {
                        *x += f * p;
                    }
                    dst[targets[r] as usize] -= f;
                }
            }
        }
        Op::BceWithLogits {
            logits,
            ref labels,
            ref weights,
            scale,
        } => {
            let xd = nodes[logits.0].value.data();
            if let Some(gl) = acc(nodes, grads, logits) {
                let f = g[0] * scale;
                for (idx, x) in gl.iter_mut().enumerate() {
                    *x += f * weights[idx] * (sigmoid(xd[idx]) - labels[idx]);
                }
            }
        }
    }
}

fn clip_offset(i: usize, j: usize, radius: usize) -> usize {
    let off = i as isize - j as isize;
    (off.clamp(-(radius as isize), radius as isize) + radius as isize) as usize
}

fn swap_middle_data<T: Copy>(src: &[T], dims: [usize; 4]) -> Vec<T> {
    let [d0, d1, d2, d3] = dims;
    let mut out = Vec::with_capacity(src.len());
    for a in 0..d0 {
        for c in 0..d2 {
            for b in 0..d1 {
                let start = ((a * d1 + b) * d2 + c) * d3;
                out.extend_from_slice(&src[start..start + d3]);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, v).unwrap()
    }

    #[test]
    fn matmul_identity_and_hand_case() {
        let mut g = Graph::<f64>::new();
        let i2 = g.constant(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
        let p = g.matmul(i2, i2).unwrap();
        assert_eq!(g.value(p).data(), &[1.0, 0.0, 0.0, 1.0]);
        let a = g.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let b = g.constant(t(&[2, 1], &[5.0, 6.0]));
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[17.0, 39.0]);
        assert_eq!(g.value(c).shape(), &[2, 1]);
        let err = g.matmul(b, b).unwrap_err();
        assert!(err.to_string().contains("[2, 1]"));
    }

    #[test]
    fn backward_sum_gives_ones() {
        let mut g = Graph::<f64>::new();
        let x = g.trainable(t(&[3], &[1.0, -2.0, 0.5]));
        let s = g.sum(x);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn backward_square_gives_two_x() {
        let mut g = Graph::<f64>::new();
        let x = g.trainable(t(&[3], &[1.0, -2.0, 0.5]));
        let sq = g.mul(x, x).unwrap();
        let s = g.sum(sq);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[2.0, -4.0, 1.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::<f64>::new();
        let x = g.trainable(t(&[2], &[1.0, 2.0]));
        assert_eq!(g.backward(x).unwrap_err().code(), "E_CONTRACT");
    }

    #[test]
    fn constants_never_allocate_grads() {
        let mut g = Graph::<f64>::new();
        let c = g.constant(t(&[2], &[1.0, 2.0]));
        let x = g.trainable(t(&[2], &[3.0, 4.0]));
        let cc = g.mul(c, c).unwrap();
        let y = g.mul(cc, x).unwrap();
        let s = g.sum(y);
        g.backward(s).unwrap();
        assert!(g.grad(c).is_none());
        assert!(g.grad(cc).is_none());
        assert_eq!(g.grad(x).unwrap(), &[1.0, 4.0]);
    }

    #[test]
    fn reset_allows_reuse() {
        let mut g = Graph::<f64>::new();
        let x = g.trainable(t(&[1], &[2.0]));
        let s = g.sum(x);
        g.backward(s).unwrap();
        g.reset();
        assert!(g.is_empty());
        let x = g.trainable(t(&[1], &[5.0]));
        let y = g.mul(x, x).unwrap();
        let s = g.sum(y);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[10.0]);
    }

    #[test]
    fn uniform_logits_cross_entropy_is_ln_v() {
        let mut g = Graph::<f64>::new();
        let l = g.constant(Tensor::zeros(&[3, 8]));
        let loss = g
            .softmax_cross_entropy(l, &[0, 5, 7], None, Reduction::Mean)
            .unwrap();
        assert!((g.value(loss).item() - 8f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_logits_cross_entropy_near_zero() {
        let mut g = Graph::<f64>::new();
        let mut data = vec![0.0; 8];
        data[3] = 1e4;
        let l = g.constant(t(&[1, 8], &data));
        let loss = g.softmax_cross_entropy(l, &[3], None, Reduction::Sum).unwrap();
        assert!(g.value(loss).item().abs() < 1e-9);
    }

    #[test]
    fn empty_mask_cross_entropy_is_zero_with_zero_grad() {
        let mut g = Graph::<f64>::new();
        let l = g.trainable(t(&[2, 3], &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]));
        for red in [Reduction::Sum, Reduction::Mean] {
            let loss = g.softmax_cross_entropy(l, &[0, 1], Some(&[]), red).unwrap();
            assert_eq!(g.value(loss).item(), 0.0);
            g.backward(loss).unwrap();
            assert!(g.grad(l).unwrap().iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn bce_limits() {
        let mut g = Graph::<f64>::new();
        let l = g.constant(t(&[2], &[0.0, 0.0]));
        let loss = g.bce_with_logits(l, &[true, false], None, Reduction::Mean).unwrap();
        assert!((g.value(loss).item() - 2f64.ln()).abs() < 1e-12);
        let l = g.constant(t(&[1], &[20.0]));
        let loss = g.bce_with_logits(l, &[true], None, Reduction::Sum).unwrap();
        assert!(g.value(loss).item() < 1e-8);
    }

    #[test]
    fn masked_softmax_ignores_padded_keys() {
        let mut g = Graph::<f64>::new();
        let s = g.constant(t(&[1, 3, 3], &[1.0, 2.0, 50.0, 0.0, 0.0, 9.0, 3.0, 3.0, -1.0]));
        let a = g.masked_softmax(s, &[true, true, false], 1).unwrap();
        let v = g.value(a).data();
        for row in v.chunks(3) {
            assert_eq!(row[2], 0.0);
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!((v[3] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn broadcast_requires_suffix_shape() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::zeros(&[4, 3, 2]));
        let ok = g.constant(Tensor::zeros(&[3, 2]));
        let bad = g.constant(Tensor::zeros(&[4, 3]));
        let sc = g.constant(Tensor::scalar(2.0));
        assert!(g.add_broadcast(a, ok).is_ok());
        assert!(g.mul_broadcast(a, sc).is_ok());
        assert!(g.add_broadcast(a, bad).is_err());
    }

    #[test]
    fn swap_middle_round_trips() {
        let mut g = Graph::<f64>::new();
        let data: Vec<f64> = (0..24).map(f64::from).collect();
        let x = g.constant(t(&[6, 4], &data));
        let split = g.swap_middle(x, [2, 3, 2, 2], &[4, 3, 2]).unwrap();
        // [b=0, h=1, i=0, :] comes from row 0, columns 2..4.
        assert_eq!(&g.value(split).data()[6..8], &[2.0, 3.0]);
        let merged = g.swap_middle(split, [2, 2, 3, 2], &[6, 4]).unwrap();
        assert_eq!(g.value(merged).data(), data.as_slice());
    }

    #[test]
    fn rel_bias_depends_only_on_clipped_offset() {
        let mut g = Graph::<f64>::new();
        // one head, radius 1: offsets -1, 0, +1
        let table = g.constant(t(&[1, 3], &[-1.0, 0.5, 2.0]));
        let coeff = g.constant(t(&[4, 1], &[1.0, 1.0, 1.0, 1.0]));
        let r = g.rel_pos_bias(table, coeff, 1, 4).unwrap();
        let v = g.value(r).data();
        // query 3 sees keys 0 and 1 at offsets 3 and 2, both clipped to +1
        assert_eq!(v[3 * 4], 2.0);
        assert_eq!(v[3 * 4 + 1], 2.0);
        assert_eq!(v[3 * 4 + 3], 0.5);
        assert_eq!(v[0 * 4 + 3], -1.0);
    }

    #[test]
    fn embedding_rejects_out_of_range() {
        let mut g = Graph::<f64>::new();
        let table = g.constant(Tensor::zeros(&[5, 2]));
        assert_eq!(g.embedding(table, &[1, 5]).unwrap_err().code(), "E_INPUT");
    }
}
