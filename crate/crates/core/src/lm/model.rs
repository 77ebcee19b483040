//! Pre-LN decoder forward and backward passes over the flat parameter buffer.
//!
//! Matrices are row-major with activations on the left (`y = x W`). There is
//! no final layer norm: logits are `h W_out` on the last residual stream.

use super::config::LayerOffsets;
use super::data::TokenSequence;
use super::params::{PrefixBank, ToyLmParams};
use super::tune::TrainableMask;
use crate::error::{Error, Result};
use crate::matrix_io::DenseMatrix;

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

// ---- dense kernels -------------------------------------------------------

/// `a (m x k) * b (k x n)`.
pub(crate) fn mm(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for (p, &aip) in a[i * k..(i + 1) * k].iter().enumerate() {
            if aip == 0.0 {
                continue;
            }
            for (o, &bv) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += aip * bv;
            }
        }
    }
    out
}

/// `dst (m x k) += g (m x n) * w (k x n)^T`.
fn add_mm_bt(dst: &mut [f64], g: &[f64], w: &[f64], m: usize, n: usize, k: usize) {
    for i in 0..m {
        let gi = &g[i * n..(i + 1) * n];
        for p in 0..k {
            dst[i * k + p] += dot(gi, &w[p * n..(p + 1) * n]);
        }
    }
}

/// `dst (k x n) += a (m x k)^T * g (m x n)`.
fn add_atb(dst: &mut [f64], a: &[f64], g: &[f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let gi = &g[i * n..(i + 1) * n];
        for (p, &aip) in a[i * k..(i + 1) * k].iter().enumerate() {
            if aip == 0.0 {
                continue;
            }
            for (o, &gv) in dst[p * n..(p + 1) * n].iter_mut().zip(gi) {
                *o += aip * gv;
            }
        }
    }
}

fn add_colsum(dst: &mut [f64], g: &[f64], n: usize) {
    for row in g.chunks_exact(n) {
        for (o, &v) in dst.iter_mut().zip(row) {
            *o += v;
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_K * x * x * x)).tanh())
}

#[inline]
fn gelu_grad(x: f64) -> f64 {
    let th = (GELU_C * (x + GELU_K * x * x * x)).tanh();
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * GELU_C * (1.0 + 3.0 * GELU_K * x * x)
}

struct LnCache {
    xhat: Vec<f64>,
    rstd: Vec<f64>,
}

fn layer_norm(x: &[f64], g: &[f64], b: &[f64], d: usize) -> (Vec<f64>, LnCache) {
    let rows = x.len() / d;
    let mut y = vec![0.0; x.len()];
    let mut xhat = vec![0.0; x.len()];
    let mut rstd = vec![0.0; rows];
    for r in 0..rows {
        let xr = &x[r * d..(r + 1) * d];
        let mean = xr.iter().sum::<f64>() / d as f64;
        let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let rs = 1.0 / (var + LN_EPS).sqrt();
        rstd[r] = rs;
        for c in 0..d {
            let h = (xr[c] - mean) * rs;
            xhat[r * d + c] = h;
            y[r * d + c] = g[c] * h + b[c];
        }
    }
    (y, LnCache { xhat, rstd })
}

/// Returns `(dx, dgain, dbias)`.
fn layer_norm_back(dy: &[f64], cache: &LnCache, g: &[f64], d: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let rows = dy.len() / d;
    let mut dx = vec![0.0; dy.len()];
    let mut dg = vec![0.0; d];
    let mut db = vec![0.0; d];
    let mut dxhat = vec![0.0; d];
    for r in 0..rows {
        let dyr = &dy[r * d..(r + 1) * d];
        let xh = &cache.xhat[r * d..(r + 1) * d];
        for c in 0..d {
            dg[c] += dyr[c] * xh[c];
            db[c] += dyr[c];
            dxhat[c] = dyr[c] * g[c];
        }
        let m1 = dxhat.iter().sum::<f64>() / d as f64;
        let m2 = dot(&dxhat, xh) / d as f64;
        let rs = cache.rstd[r];
        for c in 0..d {
            dx[r * d + c] = rs * (dxhat[c] - m1 - xh[c] * m2);
        }
    }
    (dx, dg, db)
}

// ---- forward -------------------------------------------------------------

struct LayerCache {
    ln1: LnCache,
    a: Vec<f64>,
    pln: LnCache,
    pa: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    pk: Vec<f64>,
    pv: Vec<f64>,
    /// `[head][t][j]` over `P + T` keys, prefix keys first, masked entries 0.
    att: Vec<f64>,
    o: Vec<f64>,
    ln2: LnCache,
    m: Vec<f64>,
    u: Vec<f64>,
    g: Vec<f64>,
}

pub(crate) struct Trace {
    pub t: usize,
    pub p: usize,
    pub tokens: Vec<usize>,
    layers: Vec<LayerCache>,
    /// Final residual stream, `T x d`.
    pub hidden: Vec<f64>,
}

fn check_tokens(params: &ToyLmParams, prefix_len: usize, tokens: &[usize]) -> Result<()> {
    let cfg = &params.config;
    if tokens.is_empty() {
        return Err(Error::Argument("token sequence is empty".into()));
    }
    if let Some((i, &id)) = tokens.iter().enumerate().find(|(_, &id)| id >= cfg.vocab) {
        return Err(Error::Index(format!(
            "token {i} has id {id} >= vocab {}",
            cfg.vocab
        )));
    }
    if tokens.len() + prefix_len > cfg.context {
        return Err(Error::Argument(format!(
            "sequence length {} + prefix {prefix_len} exceeds context {}",
            tokens.len(),
            cfg.context
        )));
    }
    Ok(())
}

pub(crate) fn forward_trace(
    params: &ToyLmParams,
    prefix: Option<&PrefixBank>,
    tokens: &[usize],
) -> Result<Trace> {
    let cfg = &params.config;
    let pl = prefix.map_or(0, |b| b.prefix_len());
    check_tokens(params, pl, tokens)?;
    let (d, f, nh, hd) = (cfg.d_model, cfg.d_ff, cfg.n_heads, cfg.head_dim());
    let t_len = tokens.len();
    let keys = pl + t_len;
    let w = &params.data;
    let lay = &params.layout;
    let scale = 1.0 / (hd as f64).sqrt();

    let mut h = vec![0.0; t_len * d];
    for (t, &id) in tokens.iter().enumerate() {
        let te = &w[lay.tok_emb + id * d..lay.tok_emb + (id + 1) * d];
        let pe = &w[lay.pos_emb + t * d..lay.pos_emb + (t + 1) * d];
        for c in 0..d {
            h[t * d + c] = te[c] + pe[c];
        }
    }

    let mut layers = Vec::with_capacity(cfg.n_layers);
    for (l, o) in lay.layers.iter().enumerate() {
        let sl = |off: usize, len: usize| &w[off..off + len];
        let (g1, b1n) = (sl(o.ln1_g, d), sl(o.ln1_b, d));
        let (a, ln1) = layer_norm(&h, g1, b1n, d);
        let q = mm(&a, sl(o.wq, d * d), t_len, d, d);
        let k = mm(&a, sl(o.wk, d * d), t_len, d, d);
        let v = mm(&a, sl(o.wv, d * d), t_len, d, d);
        let (pa, pln, pk, pv) = match prefix {
            Some(bank) if pl > 0 => {
                let rows = bank.layer_rows(l);
                let (pa, pln) = layer_norm(&rows, g1, b1n, d);
                let pk = mm(&pa, sl(o.wk, d * d), pl, d, d);
                let pv = mm(&pa, sl(o.wv, d * d), pl, d, d);
                (pa, pln, pk, pv)
            }
            _ => (
                Vec::new(),
                LnCache {
                    xhat: Vec::new(),
                    rstd: Vec::new(),
                },
                Vec::new(),
                Vec::new(),
            ),
        };

        let mut att = vec![0.0; nh * t_len * keys];
        let mut ov = vec![0.0; t_len * d];
        for hh in 0..nh {
            let hs = hh * hd;
            for t in 0..t_len {
                let qt = &q[t * d + hs..t * d + hs + hd];
                let row = &mut att[(hh * t_len + t) * keys..(hh * t_len + t + 1) * keys];
                let n_vis = pl + t + 1;
                let mut mx = f64::NEG_INFINITY;
                for j in 0..n_vis {
                    let kj = if j < pl {
                        &pk[j * d + hs..j * d + hs + hd]
                    } else {
                        let s = j - pl;
                        &k[s * d + hs..s * d + hs + hd]
                    };
                    let s = dot(qt, kj) * scale;
                    row[j] = s;
                    mx = mx.max(s);
                }
                let mut z = 0.0;
                for r in row[..n_vis].iter_mut() {
                    *r = (*r - mx).exp();
                    z += *r;
                }
                for r in row[..n_vis].iter_mut() {
                    *r /= z;
                }
                let out = &mut ov[t * d + hs..t * d + hs + hd];
                for (j, &pj) in row[..n_vis].iter().enumerate() {
                    let vj = if j < pl {
                        &pv[j * d + hs..j * d + hs + hd]
                    } else {
                        let s = j - pl;
                        &v[s * d + hs..s * d + hs + hd]
                    };
                    for (oc, &vc) in out.iter_mut().zip(vj) {
                        *oc += pj * vc;
                    }
                }
            }
        }
        let attn_out = mm(&ov, sl(o.wo, d * d), t_len, d, d);
        for (hv, av) in h.iter_mut().zip(&attn_out) {
            *hv += av;
        }

        let (m, ln2) = layer_norm(&h, sl(o.ln2_g, d), sl(o.ln2_b, d), d);
        let mut u = mm(&m, sl(o.w1, d * f), t_len, d, f);
        let bias1 = sl(o.b1, f);
        for row in u.chunks_exact_mut(f) {
            for (x, &b) in row.iter_mut().zip(bias1) {
                *x += b;
            }
        }
        let g: Vec<f64> = u.iter().map(|&x| gelu(x)).collect();
        let mut ff = mm(&g, sl(o.w2, f * d), t_len, f, d);
        let bias2 = sl(o.b2, d);
        for row in ff.chunks_exact_mut(d) {
            for (x, &b) in row.iter_mut().zip(bias2) {
                *x += b;
            }
        }
        for (hv, fv) in h.iter_mut().zip(&ff) {
            *hv += fv;
        }

        layers.push(LayerCache {
            ln1,
            a,
            pln,
            pa,
            q,
            k,
            v,
            pk,
            pv,
            att,
            o: ov,
            ln2,
            m,
            u,
            g,
        });
    }

    Ok(Trace {
        t: t_len,
        p: pl,
        tokens: tokens.to_vec(),
        layers,
        hidden: h,
    })
}

/// Logits for hidden row `h` (length d) into `out` (length V).
fn logits_row(params: &ToyLmParams, h: &[f64], out: &mut [f64]) {
    let v = params.config.vocab;
    let wo = &params.data[params.layout.w_out..params.layout.w_out + h.len() * v];
    out.fill(0.0);
    for (c, &hc) in h.iter().enumerate() {
        for (o, &wv) in out.iter_mut().zip(&wo[c * v..(c + 1) * v]) {
            *o += hc * wv;
        }
    }
}

/// In-place softmax; returns log of the normalizer.
fn softmax_in_place(x: &mut [f64]) -> f64 {
    let mx = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for v in x.iter_mut() {
        *v = (*v - mx).exp();
        z += *v;
    }
    for v in x.iter_mut() {
        *v /= z;
    }
    mx + z.ln()
}

/// Logits `T x V` for a token sequence.
pub fn logits(
    params: &ToyLmParams,
    prefix: Option<&PrefixBank>,
    tokens: &[usize],
) -> Result<DenseMatrix> {
    let tr = forward_trace(params, prefix, tokens)?;
    let (d, v) = (params.config.d_model, params.config.vocab);
    let mut out = DenseMatrix::zeros(tr.t, v);
    for t in 0..tr.t {
        logits_row(params, &tr.hidden[t * d..(t + 1) * d], &mut out.data_mut()[t * v..(t + 1) * v]);
    }
    Ok(out)
}

/// Next-token distributions, one row per position.
pub fn forward(
    params: &ToyLmParams,
    prefix: Option<&PrefixBank>,
    tokens: &[usize],
) -> Result<DenseMatrix> {
    let mut out = logits(params, prefix, tokens)?;
    let v = params.config.vocab;
    for row in out.data_mut().chunks_exact_mut(v) {
        softmax_in_place(row);
    }
    Ok(out)
}

/// Mean of the final-layer hidden states over the token positions.
pub fn embed_sequence(
    params: &ToyLmParams,
    prefix: Option<&PrefixBank>,
    tokens: &[usize],
) -> Result<Vec<f64>> {
    let tr = forward_trace(params, prefix, tokens)?;
    let d = params.config.d_model;
    let mut acc = vec![0.0; d];
    for row in tr.hidden.chunks_exact(d) {
        for (a, &x) in acc.iter_mut().zip(row) {
            *a += x;
        }
    }
    let n = tr.t as f64;
    Ok(acc.into_iter().map(|a| a / n).collect())
}

/// Final-layer hidden states, `T x d`.
pub fn hidden_states(
    params: &ToyLmParams,
    prefix: Option<&PrefixBank>,
    tokens: &[usize],
) -> Result<DenseMatrix> {
    let tr = forward_trace(params, prefix, tokens)?;
    Ok(DenseMatrix::new(tr.t, params.config.d_model, tr.hidden)
        .expect("trace hidden has T x d entries"))
}

// ---- loss and backward ---------------------------------------------------

pub(crate) struct Gradient {
    pub params: Vec<f64>,
    pub prefix: Vec<f64>,
}

/// Summed negative log-likelihood of the continuation tokens and, when a mask
/// is given, its gradient restricted to the trainable set.
pub(crate) fn sequence_loss(
    params: &ToyLmParams,
    prefix: Option<&PrefixBank>,
    seq: &TokenSequence,
    mask: Option<&TrainableMask>,
) -> Result<(f64, Option<Gradient>)> {
    seq.validate(params.config.vocab)?;
    let z = seq.z();
    let tr = forward_trace(params, prefix, &z)?;
    let (d, v) = (params.config.d_model, params.config.vocab);
    let start = seq.x.len() - 1;
    let mut loss = 0.0;
    let mut dh = vec![0.0; tr.t * d];
    let mut grad = mask.map(|_| vec![0.0; params.layout.total]);
    let w_out_trainable = mask.is_some_and(|m| m.tensors[params.layout.w_out_index()]);
    let mut probs = vec![0.0; v];
    let wo = &params.data[params.layout.w_out..params.layout.w_out + d * v];
    for t in start..tr.t - 1 {
        let target = z[t + 1];
        let ht = &tr.hidden[t * d..(t + 1) * d];
        logits_row(params, ht, &mut probs);
        let logit_target = probs[target];
        let lse = softmax_in_place(&mut probs);
        loss += lse - logit_target;
        if let Some(g) = grad.as_mut() {
            probs[target] -= 1.0;
            if w_out_trainable {
                let gw = &mut g[params.layout.w_out..params.layout.w_out + d * v];
                for (c, &hc) in ht.iter().enumerate() {
                    for (o, &pv) in gw[c * v..(c + 1) * v].iter_mut().zip(&probs) {
                        *o += hc * pv;
                    }
                }
            }
            for c in 0..d {
                dh[t * d + c] = dot(&wo[c * v..(c + 1) * v], &probs);
            }
        }
    }
    let Some(mut grad) = grad else {
        return Ok((loss, None));
    };
    let mask = mask.expect("grad allocated only with a mask");
    let mut gprefix = vec![0.0; prefix.map_or(0, |b| b.len())];
    backward(params, prefix, &tr, dh, mask, &mut grad, &mut gprefix);
    Ok((
        loss,
        Some(Gradient {
            params: grad,
            prefix: gprefix,
        }),
    ))
}

fn backward(
    params: &ToyLmParams,
    prefix: Option<&PrefixBank>,
    tr: &Trace,
    mut dh: Vec<f64>,
    mask: &TrainableMask,
    grad: &mut [f64],
    gprefix: &mut [f64],
) {
    let cfg = &params.config;
    let lay = &params.layout;
    let (d, f, nh, hd) = (cfg.d_model, cfg.d_ff, cfg.n_heads, cfg.head_dim());
    let (t_len, pl) = (tr.t, tr.p);
    let keys = pl + t_len;
    let scale = 1.0 / (hd as f64).sqrt();
    let w = &params.data;
    let prefix_trainable = mask.prefix && pl > 0;
    let emb_trainable = mask.tensors[0] || mask.tensors[1];

    // Layers below `lowest` contribute no trainable gradient.
    let lowest = if emb_trainable || prefix_trainable {
        0
    } else {
        match (0..cfg.n_layers).find(|&l| mask.layer_any(lay, l)) {
            Some(l) => l,
            None => return,
        }
    };

    for l in (lowest..cfg.n_layers).rev() {
        let o: &LayerOffsets = &lay.layers[l];
        let c = &tr.layers[l];
        let on = |kind_idx: usize| mask.tensors[lay.layer_start(l) + kind_idx];
        let sl = |off: usize, len: usize| &w[off..off + len];

        // MLP block: h_out = h1 + W2 gelu(W1 ln2(h1) + b1) + b2
        if on(10) {
            add_atb(&mut grad[o.w2..o.w2 + f * d], &c.g, &dh, t_len, f, d);
        }
        if on(11) {
            add_colsum(&mut grad[o.b2..o.b2 + d], &dh, d);
        }
        let mut du = vec![0.0; t_len * f];
        add_mm_bt(&mut du, &dh, sl(o.w2, f * d), t_len, d, f);
        for (x, &uv) in du.iter_mut().zip(&c.u) {
            *x *= gelu_grad(uv);
        }
        if on(8) {
            add_atb(&mut grad[o.w1..o.w1 + d * f], &c.m, &du, t_len, d, f);
        }
        if on(9) {
            add_colsum(&mut grad[o.b1..o.b1 + f], &du, f);
        }
        let mut dm = vec![0.0; t_len * d];
        add_mm_bt(&mut dm, &du, sl(o.w1, d * f), t_len, f, d);
        let (dx2, dg2, db2) = layer_norm_back(&dm, &c.ln2, sl(o.ln2_g, d), d);
        if on(6) {
            add_to(&mut grad[o.ln2_g..o.ln2_g + d], &dg2);
        }
        if on(7) {
            add_to(&mut grad[o.ln2_b..o.ln2_b + d], &db2);
        }
        // dh now holds d(loss)/d(h1)
        add_to(&mut dh, &dx2);

        // Attention block: h1 = h_in + attn(ln1(h_in)) Wo
        if on(5) {
            add_atb(&mut grad[o.wo..o.wo + d * d], &c.o, &dh, t_len, d, d);
        }
        let mut d_o = vec![0.0; t_len * d];
        add_mm_bt(&mut d_o, &dh, sl(o.wo, d * d), t_len, d, d);

        let mut dq = vec![0.0; t_len * d];
        let mut dk = vec![0.0; t_len * d];
        let mut dv = vec![0.0; t_len * d];
        let mut dpk = vec![0.0; pl * d];
        let mut dpv = vec![0.0; pl * d];
        let mut dp = vec![0.0; keys];
        for hh in 0..nh {
            let hs = hh * hd;
            for t in 0..t_len {
                let n_vis = pl + t + 1;
                let row = &c.att[(hh * t_len + t) * keys..(hh * t_len + t) * keys + n_vis];
                let dot_t = &d_o[t * d + hs..t * d + hs + hd];
                let mut s = 0.0;
                for j in 0..n_vis {
                    let (vj, dvj) = if j < pl {
                        (&c.pv[j * d + hs..j * d + hs + hd], &mut dpv[j * d + hs..j * d + hs + hd])
                    } else {
                        let r = j - pl;
                        (&c.v[r * d + hs..r * d + hs + hd], &mut dv[r * d + hs..r * d + hs + hd])
                    };
                    dp[j] = dot(dot_t, vj);
                    s += row[j] * dp[j];
                    for (x, &g) in dvj.iter_mut().zip(dot_t) {
                        *x += row[j] * g;
                    }
                }
                let qt = &c.q[t * d + hs..t * d + hs + hd];
                let dqt_off = t * d + hs;
                for j in 0..n_vis {
                    let ds = row[j] * (dp[j] - s) * scale;
                    if ds == 0.0 {
                        continue;
                    }
                    let (kj, dkj) = if j < pl {
                        (&c.pk[j * d + hs..j * d + hs + hd], &mut dpk[j * d + hs..j * d + hs + hd])
                    } else {
                        let r = j - pl;
                        (&c.k[r * d + hs..r * d + hs + hd], &mut dk[r * d + hs..r * d + hs + hd])
                    };
                    for i in 0..hd {
                        dq[dqt_off + i] += ds * kj[i];
                        dkj[i] += ds * qt[i];
                    }
                }
            }
        }
        if on(2) {
            add_atb(&mut grad[o.wq..o.wq + d * d], &c.a, &dq, t_len, d, d);
        }
        if on(3) {
            add_atb(&mut grad[o.wk..o.wk + d * d], &c.a, &dk, t_len, d, d);
            if pl > 0 {
                add_atb(&mut grad[o.wk..o.wk + d * d], &c.pa, &dpk, pl, d, d);
            }
        }
        if on(4) {
            add_atb(&mut grad[o.wv..o.wv + d * d], &c.a, &dv, t_len, d, d);
            if pl > 0 {
                add_atb(&mut grad[o.wv..o.wv + d * d], &c.pa, &dpv, pl, d, d);
            }
        }
        let mut da = vec![0.0; t_len * d];
        add_mm_bt(&mut da, &dq, sl(o.wq, d * d), t_len, d, d);
        add_mm_bt(&mut da, &dk, sl(o.wk, d * d), t_len, d, d);
        add_mm_bt(&mut da, &dv, sl(o.wv, d * d), t_len, d, d);
        let g1 = sl(o.ln1_g, d);
        let (dx1, mut dg1, mut db1) = layer_norm_back(&da, &c.ln1, g1, d);
        if pl > 0 && (prefix_trainable || on(0) || on(1)) {
            let mut dpa = vec![0.0; pl * d];
            add_mm_bt(&mut dpa, &dpk, sl(o.wk, d * d), pl, d, d);
            add_mm_bt(&mut dpa, &dpv, sl(o.wv, d * d), pl, d, d);
            let (dpx, pdg, pdb) = layer_norm_back(&dpa, &c.pln, g1, d);
            add_to(&mut dg1, &pdg);
            add_to(&mut db1, &pdb);
            if prefix_trainable {
                let bank = prefix.expect("pl > 0 implies a prefix bank");
                for p in 0..pl {
                    let s = bank.index(p, l, 0);
                    add_to(&mut gprefix[s..s + d], &dpx[p * d..(p + 1) * d]);
                }
            }
        }
        if on(0) {
            add_to(&mut grad[o.ln1_g..o.ln1_g + d], &dg1);
        }
        if on(1) {
            add_to(&mut grad[o.ln1_b..o.ln1_b + d], &db1);
        }
        add_to(&mut dh, &dx1);
    }

    if lowest == 0 {
        if mask.tensors[0] {
            for (t, &id) in tr.tokens.iter().enumerate() {
                let s = lay.tok_emb + id * d;
                add_to(&mut grad[s..s + d], &dh[t * d..(t + 1) * d]);
            }
        }
        if mask.tensors[1] {
            let s = lay.pos_emb;
            add_to(&mut grad[s..s + t_len * d], &dh);
        }
    }
}

#[inline]
fn add_to(dst: &mut [f64], src: &[f64]) {
    for (a, &b) in dst.iter_mut().zip(src) {
        *a += b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::config::{LmConfig, TensorKind};

    fn tiny() -> LmConfig {
        LmConfig {
            n_layers: 2,
            d_model: 16,
            n_heads: 2,
            vocab: 50,
            context: 24,
            d_ff: 32,
        }
    }

    /// Perturbs every tensor so biases and gains are non-trivial.
    fn jittered(cfg: LmConfig, seed: u64) -> ToyLmParams {
        let mut p = ToyLmParams::init(cfg, seed).unwrap();
        let noise = ToyLmParams::init(cfg, seed + 1000).unwrap();
        for (i, (x, n)) in p.data.iter_mut().zip(&noise.data).enumerate() {
            *x += 0.1 * n + 0.01 * ((i % 7) as f64 - 3.0);
        }
        p
    }

    /// Straight-line per-position reference: no caches, no shared buffers.
    fn reference_logits(p: &ToyLmParams, tokens: &[usize]) -> Vec<Vec<f64>> {
        let cfg = p.config;
        let (d, f, nh, hd, v) = (cfg.d_model, cfg.d_ff, cfg.n_heads, cfg.head_dim(), cfg.vocab);
        let get = |k: TensorKind, l: Option<usize>, r: usize, c: usize, cols: usize| {
            p.tensor(k, l)[r * cols + c]
        };
        let ln = |x: &Vec<f64>, gk: TensorKind, bk: TensorKind, l: usize| -> Vec<f64> {
            let mean: f64 = x.iter().sum::<f64>() / d as f64;
            let var: f64 = x.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / d as f64;
            (0..d)
                .map(|c| {
                    (x[c] - mean) / (var + 1e-5).sqrt() * get(gk, Some(l), 0, c, d)
                        + get(bk, Some(l), 0, c, d)
                })
                .collect()
        };
        let matvec = |x: &Vec<f64>, k: TensorKind, l: Option<usize>, rows: usize, cols: usize| {
            (0..cols)
                .map(|j| (0..rows).map(|i| x[i] * get(k, l, i, j, cols)).sum::<f64>())
                .collect::<Vec<f64>>()
        };
        let mut hs: Vec<Vec<f64>> = tokens
            .iter()
            .enumerate()
            .map(|(t, &id)| {
                (0..d)
                    .map(|c| get(TensorKind::TokEmb, None, id, c, d) + get(TensorKind::PosEmb, None, t, c, d))
                    .collect()
            })
            .collect();
        for l in 0..cfg.n_layers {
            let a: Vec<Vec<f64>> = hs.iter().map(|x| ln(x, TensorKind::Ln1Gain, TensorKind::Ln1Bias, l)).collect();
            let q: Vec<_> = a.iter().map(|x| matvec(x, TensorKind::Wq, Some(l), d, d)).collect();
            let k: Vec<_> = a.iter().map(|x| matvec(x, TensorKind::Wk, Some(l), d, d)).collect();
            let vv: Vec<_> = a.iter().map(|x| matvec(x, TensorKind::Wv, Some(l), d, d)).collect();
            let mut next = Vec::new();
            for t in 0..tokens.len() {
                let mut o = vec![0.0; d];
                for h in 0..nh {
                    let sc: Vec<f64> = (0..=t)
                        .map(|s| {
                            (0..hd).map(|i| q[t][h * hd + i] * k[s][h * hd + i]).sum::<f64>()
                                / (hd as f64).sqrt()
                        })
                        .collect();
                    let mx = sc.iter().cloned().fold(f64::MIN, f64::max);
                    let e: Vec<f64> = sc.iter().map(|s| (s - mx).exp()).collect();
                    let z: f64 = e.iter().sum();
                    for s in 0..=t {
                        for i in 0..hd {
                            o[h * hd + i] += e[s] / z * vv[s][h * hd + i];
                        }
                    }
                }
                let att = matvec(&o, TensorKind::Wo, Some(l), d, d);
                let h1: Vec<f64> = (0..d).map(|c| hs[t][c] + att[c]).collect();
                let m = ln(&h1, TensorKind::Ln2Gain, TensorKind::Ln2Bias, l);
                let u = matvec(&m, TensorKind::W1, Some(l), d, f);
                let g: Vec<f64> = (0..f)
                    .map(|j| {
                        let x = u[j] + get(TensorKind::B1, Some(l), 0, j, f);
                        0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh())
                    })
                    .collect();
                let ff = matvec(&g, TensorKind::W2, Some(l), f, d);
                next.push((0..d).map(|c| h1[c] + ff[c] + get(TensorKind::B2, Some(l), 0, c, d)).collect());
            }
            hs = next;
        }
        hs.iter().map(|h| matvec(h, TensorKind::WOut, None, d, v)).collect()
    }

    #[test]
    fn matches_scalar_reference() {
        let p = jittered(tiny(), 3);
        let tokens = [4, 17, 0, 49, 23, 23, 8, 31, 2];
        let got = logits(&p, None, &tokens).unwrap();
        let want = reference_logits(&p, &tokens);
        for (t, row) in want.iter().enumerate() {
            for (j, &x) in row.iter().enumerate() {
                assert!((got.get(t, j) - x).abs() < 1e-10, "t={t} j={j}");
            }
        }
    }

    #[test]
    fn rows_are_distributions() {
        let p = ToyLmParams::init(tiny(), 1).unwrap();
        let bank = PrefixBank::random(&p.config, 3, 9).unwrap();
        let probs = forward(&p, Some(&bank), &[1, 2, 3, 4, 5]).unwrap();
        for t in 0..probs.rows() {
            let s: f64 = probs.row(t).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(probs.row(t).iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn empty_prefix_is_bit_identical() {
        let p = jittered(tiny(), 5);
        let tokens = [7, 7, 1, 30];
        let a = forward(&p, None, &tokens).unwrap();
        let b = forward(&p, Some(&PrefixBank::empty(&p.config)), &tokens).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn causal() {
        let p = jittered(tiny(), 11);
        let bank = PrefixBank::random(&p.config, 2, 4).unwrap();
        let a = vec![3, 9, 14, 2, 40, 6];
        for t in 0..a.len() {
            let mut b = a.clone();
            b[t] = (b[t] + 1) % 50;
            for prefix in [None, Some(&bank)] {
                let pa = forward(&p, prefix, &a).unwrap();
                let pb = forward(&p, prefix, &b).unwrap();
                for s in 0..t {
                    assert_eq!(pa.row(s), pb.row(s), "perturb {t} changed row {s}");
                }
                assert_ne!(pa.row(t), pb.row(t));
            }
        }
    }

    #[test]
    fn input_errors() {
        let p = ToyLmParams::init(tiny(), 1).unwrap();
        assert!(matches!(forward(&p, None, &[1, 50]), Err(Error::Index(_))));
        assert!(matches!(forward(&p, None, &[]), Err(Error::Argument(_))));
        let long = vec![0; 23];
        let bank = PrefixBank::random(&p.config, 2, 0).unwrap();
        assert!(forward(&p, None, &long).is_ok());
        assert!(forward(&p, Some(&bank), &long).is_err());
    }

    #[test]
    fn embedding_is_mean_of_hidden_rows() {
        let p = jittered(tiny(), 2);
        let one = embed_sequence(&p, None, &[12]).unwrap();
        assert_eq!(one, hidden_states(&p, None, &[12]).unwrap().row(0));

        let toks = [5, 6, 7, 8, 9];
        let e = embed_sequence(&p, None, &toks).unwrap();
        let h = hidden_states(&p, None, &toks).unwrap();
        for c in 0..p.config.d_model {
            let m: f64 = (0..toks.len()).map(|t| h.get(t, c)).sum::<f64>() / toks.len() as f64;
            assert!((e[c] - m).abs() < 1e-12);
        }

        let bank = PrefixBank::random(&p.config, 4, 1).unwrap();
        let ep = embed_sequence(&p, Some(&bank), &toks).unwrap();
        let dist: f64 = e.iter().zip(&ep).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(dist > 0.0);
    }
}
