//! Forward, backward, and incremental (KV-cached) passes.
//!
//! The full pass runs layer-major over all positions and caches every
//! intermediate the backward pass needs. The incremental pass runs
//! position-major over cached keys/values for decoding. Both evaluate the
//! same scalar expressions with the same operand order, so a sequence scored
//! incrementally reproduces the full-pass numbers bit for bit (covered by a
//! test below).

use crate::error::{Error, Result};
use crate::vocab::{TokenId, TokenSeq};

use super::math::{
    axpy, dot, log_sum_exp, matvec, matvec_transpose_accum, outer_accum, rmsnorm,
    rmsnorm_backward_accum, softmax_in_place, Real,
};
use super::{lm_input, ModelParams};

struct LayerCache<R> {
    xn_attn: Vec<R>,
    inv_rms_attn: Vec<R>,
    q: Vec<R>,
    k: Vec<R>,
    v: Vec<R>,
    /// Attention weights, `[heads][t][s]` flattened, causal rows.
    aw: Vec<R>,
    /// Concatenated head outputs before the output projection.
    ho: Vec<R>,
    x_res_attn: Vec<R>,
    xn_mlp: Vec<R>,
    inv_rms_mlp: Vec<R>,
    h_pre: Vec<R>,
    h_act: Vec<R>,
}

pub struct ForwardCache<R> {
    pub t_len: usize,
    /// Residual stream at each layer boundary: `xs[0]` is the embedded
    /// input, `xs[layers]` the final hidden states. Rows are `[t, d]`.
    xs: Vec<Vec<R>>,
    layers: Vec<LayerCache<R>>,
}

impl<R: Real> ForwardCache<R> {
    pub fn final_hidden(&self, t: usize) -> &[R] {
        let d = self.xs[0].len() / self.t_len;
        &self.xs[self.xs.len() - 1][t * d..(t + 1) * d]
    }
}

fn attn_inv_scale<R: Real>(head_dim: usize) -> R {
    R::one() / R::from_f64(head_dim as f64).sqrt()
}

/// Full causal pass over `ids`. Panics if the sequence exceeds the model's
/// maximum length; callers validate first.
pub fn forward<R: Real>(p: &ModelParams<R>, ids: &[TokenId]) -> ForwardCache<R> {
    let lo = p.config.layout();
    let (d, hd, heads, hidden) = (lo.d, lo.d / p.config.heads, p.config.heads, lo.hidden);
    let t_len = ids.len();
    assert!(t_len >= 1 && t_len <= lo.max_len, "sequence length {t_len} out of range");
    let inv_scale = attn_inv_scale::<R>(hd);

    let tok_emb = &p.flat[lo.tok_emb()];
    let pos_emb = &p.flat[lo.pos_emb()];
    let mut xs = Vec::with_capacity(lo.layers + 1);
    let mut x0 = vec![R::zero(); t_len * d];
    for t in 0..t_len {
        let id = ids[t] as usize;
        for i in 0..d {
            x0[t * d + i] = tok_emb[id * d + i] + pos_emb[t * d + i];
        }
    }
    xs.push(x0);

    let mut layers = Vec::with_capacity(lo.layers);
    for l in 0..lo.layers {
        let x_in = xs.last().unwrap();
        let mut c = LayerCache {
            xn_attn: vec![R::zero(); t_len * d],
            inv_rms_attn: vec![R::zero(); t_len],
            q: vec![R::zero(); t_len * d],
            k: vec![R::zero(); t_len * d],
            v: vec![R::zero(); t_len * d],
            aw: vec![R::zero(); heads * t_len * t_len],
            ho: vec![R::zero(); t_len * d],
            x_res_attn: vec![R::zero(); t_len * d],
            xn_mlp: vec![R::zero(); t_len * d],
            inv_rms_mlp: vec![R::zero(); t_len],
            h_pre: vec![R::zero(); t_len * hidden],
            h_act: vec![R::zero(); t_len * hidden],
        };
        let (wq, wk, wv, wo) =
            (&p.flat[lo.wq(l)], &p.flat[lo.wk(l)], &p.flat[lo.wv(l)], &p.flat[lo.wo(l)]);
        for t in 0..t_len {
            let row = t * d;
            c.inv_rms_attn[t] = rmsnorm(&x_in[row..row + d], &mut c.xn_attn[row..row + d]);
            let xn = &c.xn_attn[row..row + d];
            matvec(wq, xn, d, d, &mut c.q[row..row + d]);
            matvec(wk, xn, d, d, &mut c.k[row..row + d]);
            matvec(wv, xn, d, d, &mut c.v[row..row + d]);
        }
        for h in 0..heads {
            let hoff = h * hd;
            for t in 0..t_len {
                let q_t = &c.q[t * d + hoff..t * d + hoff + hd];
                let aw_row = &mut c.aw[(h * t_len + t) * t_len..(h * t_len + t) * t_len + t + 1];
                for s in 0..=t {
                    aw_row[s] = dot(q_t, &c.k[s * d + hoff..s * d + hoff + hd]) * inv_scale;
                }
                softmax_in_place(aw_row);
                let out = &mut c.ho[t * d + hoff..t * d + hoff + hd];
                for s in 0..=t {
                    axpy(out, aw_row[s], &c.v[s * d + hoff..s * d + hoff + hd]);
                }
            }
        }
        let mut x_out = vec![R::zero(); t_len * d];
        let mut attn_out = vec![R::zero(); d];
        let mut mlp_out = vec![R::zero(); d];
        let (fc1, fc2) = (&p.flat[lo.fc1(l)], &p.flat[lo.fc2(l)]);
        for t in 0..t_len {
            let row = t * d;
            matvec(wo, &c.ho[row..row + d], d, d, &mut attn_out);
            for i in 0..d {
                c.x_res_attn[row + i] = x_in[row + i] + attn_out[i];
            }
            c.inv_rms_mlp[t] =
                rmsnorm(&c.x_res_attn[row..row + d], &mut c.xn_mlp[row..row + d]);
            let hrow = t * hidden;
            matvec(fc1, &c.xn_mlp[row..row + d], hidden, d, &mut c.h_pre[hrow..hrow + hidden]);
            for i in 0..hidden {
                c.h_act[hrow + i] = c.h_pre[hrow + i].max(R::zero());
            }
            matvec(fc2, &c.h_act[hrow..hrow + hidden], d, hidden, &mut mlp_out);
            for i in 0..d {
                x_out[row + i] = c.x_res_attn[row + i] + mlp_out[i];
            }
        }
        xs.push(x_out);
        layers.push(c);
    }
    ForwardCache { t_len, xs, layers }
}

/// Output-head logits for one position.
pub fn logits_at<R: Real>(p: &ModelParams<R>, cache: &ForwardCache<R>, t: usize) -> Vec<R> {
    let lo = p.config.layout();
    let mut out = vec![R::zero(); lo.vocab];
    matvec(&p.flat[lo.head()], cache.final_hidden(t), lo.vocab, lo.d, &mut out);
    out
}

/// Reverse pass. `d_logit_rows` holds (position, d loss / d logits) for the
/// positions that received loss; gradients accumulate into `grad`.
pub fn backward<R: Real>(
    p: &ModelParams<R>,
    ids: &[TokenId],
    cache: &ForwardCache<R>,
    d_logit_rows: &[(usize, Vec<R>)],
    grad: &mut [R],
) {
    let lo = p.config.layout();
    let (d, hd, heads, hidden) = (lo.d, lo.d / p.config.heads, p.config.heads, lo.hidden);
    let t_len = cache.t_len;
    let inv_scale = attn_inv_scale::<R>(hd);
    debug_assert_eq!(grad.len(), lo.total());

    // head
    let mut dx = vec![R::zero(); t_len * d];
    {
        let head = &p.flat[lo.head()];
        let final_h = &cache.xs[lo.layers];
        let ghead = &mut grad[lo.head()];
        for (t, dlog) in d_logit_rows {
            outer_accum(ghead, dlog, &final_h[t * d..(t + 1) * d], lo.vocab, d);
            matvec_transpose_accum(head, dlog, lo.vocab, d, &mut dx[t * d..(t + 1) * d]);
        }
    }

    let mut d_res_attn = vec![R::zero(); t_len * d];
    let mut d_q = vec![R::zero(); t_len * d];
    let mut d_k = vec![R::zero(); t_len * d];
    let mut d_v = vec![R::zero(); t_len * d];
    let mut d_ho = vec![R::zero(); t_len * d];
    let mut d_h_act = vec![R::zero(); hidden];
    let mut d_h_pre = vec![R::zero(); hidden];
    let mut d_xn = vec![R::zero(); d];

    for l in (0..lo.layers).rev() {
        let c = &cache.layers[l];
        let x_in = &cache.xs[l];

        // mlp block: x_out = x_res_attn + fc2(relu(fc1(rmsnorm(x_res_attn))))
        for v in d_res_attn.iter_mut() {
            *v = R::zero();
        }
        {
            let (fc1, fc2) = (&p.flat[lo.fc1(l)], &p.flat[lo.fc2(l)]);
            let (gfc1, gfc2) = {
                let (a, b) = (lo.fc1(l), lo.fc2(l));
                let (left, right) = grad.split_at_mut(b.start);
                (&mut left[a], &mut right[..b.end - b.start])
            };
            for t in 0..t_len {
                let row = t * d;
                let hrow = t * hidden;
                let d_out = &dx[row..row + d];
                for v in d_h_act.iter_mut() {
                    *v = R::zero();
                }
                matvec_transpose_accum(fc2, d_out, d, hidden, &mut d_h_act);
                for i in 0..hidden {
                    d_h_pre[i] = if c.h_pre[hrow + i] > R::zero() { d_h_act[i] } else { R::zero() };
                }
                outer_accum(gfc2, d_out, &c.h_act[hrow..hrow + hidden], d, hidden);
                outer_accum(gfc1, &d_h_pre, &c.xn_mlp[row..row + d], hidden, d);
                for v in d_xn.iter_mut() {
                    *v = R::zero();
                }
                matvec_transpose_accum(fc1, &d_h_pre, hidden, d, &mut d_xn);
                let dst = &mut d_res_attn[row..row + d];
                for i in 0..d {
                    dst[i] = d_out[i]; // residual
                }
                rmsnorm_backward_accum(&d_xn, &c.x_res_attn[row..row + d], c.inv_rms_mlp[t], dst);
            }
        }

        // attention block: x_res_attn = x_in + wo(ho)
        for v in d_ho.iter_mut() {
            *v = R::zero();
        }
        {
            let wo = &p.flat[lo.wo(l)];
            let gwo = &mut grad[lo.wo(l)];
            for t in 0..t_len {
                let row = t * d;
                let d_attn_out = &d_res_attn[row..row + d];
                outer_accum(gwo, d_attn_out, &c.ho[row..row + d], d, d);
                matvec_transpose_accum(wo, d_attn_out, d, d, &mut d_ho[row..row + d]);
            }
        }
        for buf in [&mut d_q, &mut d_k, &mut d_v] {
            for v in buf.iter_mut() {
                *v = R::zero();
            }
        }
        for h in 0..heads {
            let hoff = h * hd;
            let mut d_aw_raw = vec![R::zero(); t_len];
            for t in 0..t_len {
                let aw_row = &c.aw[(h * t_len + t) * t_len..(h * t_len + t) * t_len + t + 1];
                let d_out = &d_ho[t * d + hoff..t * d + hoff + hd];
                for s in 0..=t {
                    d_aw_raw[s] = dot(d_out, &c.v[s * d + hoff..s * d + hoff + hd]);
                    axpy(&mut d_v[s * d + hoff..s * d + hoff + hd], aw_row[s], d_out);
                }
                let mut dot_aw = R::zero();
                for s in 0..=t {
                    dot_aw = dot_aw + aw_row[s] * d_aw_raw[s];
                }
                let q_t = &c.q[t * d + hoff..t * d + hoff + hd];
                for s in 0..=t {
                    let d_att_logit = aw_row[s] * (d_aw_raw[s] - dot_aw) * inv_scale;
                    axpy(
                        &mut d_q[t * d + hoff..t * d + hoff + hd],
                        d_att_logit,
                        &c.k[s * d + hoff..s * d + hoff + hd],
                    );
                    axpy(&mut d_k[s * d + hoff..s * d + hoff + hd], d_att_logit, q_t);
                }
            }
        }
        {
            let (wq, wk, wv) = (&p.flat[lo.wq(l)], &p.flat[lo.wk(l)], &p.flat[lo.wv(l)]);
            for t in 0..t_len {
                let row = t * d;
                let xn = &c.xn_attn[row..row + d];
                outer_accum(&mut grad[lo.wq(l)], &d_q[row..row + d], xn, d, d);
                outer_accum(&mut grad[lo.wk(l)], &d_k[row..row + d], xn, d, d);
                outer_accum(&mut grad[lo.wv(l)], &d_v[row..row + d], xn, d, d);
                for v in d_xn.iter_mut() {
                    *v = R::zero();
                }
                matvec_transpose_accum(wq, &d_q[row..row + d], d, d, &mut d_xn);
                matvec_transpose_accum(wk, &d_k[row..row + d], d, d, &mut d_xn);
                matvec_transpose_accum(wv, &d_v[row..row + d], d, d, &mut d_xn);
                // dx for this layer's input: residual + norm path
                let dst = &mut dx[row..row + d];
                for i in 0..d {
                    dst[i] = d_res_attn[row + i];
                }
                rmsnorm_backward_accum(&d_xn, &x_in[row..row + d], c.inv_rms_attn[t], dst);
            }
        }
    }

    // embeddings
    let gtok = &mut grad[lo.tok_emb()];
    for t in 0..t_len {
        let id = ids[t] as usize;
        axpy(&mut gtok[id * d..(id + 1) * d], R::one(), &dx[t * d..(t + 1) * d]);
    }
    let gpos = &mut grad[lo.pos_emb()];
    for t in 0..t_len {
        axpy(&mut gpos[t * d..(t + 1) * d], R::one(), &dx[t * d..(t + 1) * d]);
    }
}

// ---------------------------------------------------------------------------
// incremental decoding path
// ---------------------------------------------------------------------------

/// Cached keys/values plus the final hidden state of the last position.
#[derive(Clone)]
pub struct KvState<R> {
    pub t: usize,
    k: Vec<Vec<R>>,
    v: Vec<Vec<R>>,
    pub last_h: Vec<R>,
}

/// Encodes a prefix token-by-token. One call per candidate set is enough:
/// the returned state is cloneable.
pub fn prefill<R: Real>(p: &ModelParams<R>, ids: &[TokenId]) -> KvState<R> {
    let lo = p.config.layout();
    let mut st = KvState {
        t: 0,
        k: vec![Vec::new(); lo.layers],
        v: vec![Vec::new(); lo.layers],
        last_h: vec![R::zero(); lo.d],
    };
    for &id in ids {
        kv_step(p, &mut st, id);
    }
    st
}

/// Processes one token at the next position, updating the cache and
/// `last_h`, whose head logits predict the following token.
pub fn kv_step<R: Real>(p: &ModelParams<R>, st: &mut KvState<R>, id: TokenId) {
    let lo = p.config.layout();
    let (d, hd, heads, hidden) = (lo.d, lo.d / p.config.heads, p.config.heads, lo.hidden);
    let pos = st.t;
    assert!(pos < lo.max_len, "decode past max_seq_len");
    let inv_scale = attn_inv_scale::<R>(hd);

    let tok_emb = &p.flat[lo.tok_emb()];
    let pos_emb = &p.flat[lo.pos_emb()];
    let mut x = vec![R::zero(); d];
    for i in 0..d {
        x[i] = tok_emb[id as usize * d + i] + pos_emb[pos * d + i];
    }
    let mut xn = vec![R::zero(); d];
    let mut q = vec![R::zero(); d];
    let mut ho = vec![R::zero(); d];
    let mut proj = vec![R::zero(); d];
    let mut h_pre = vec![R::zero(); hidden];
    let mut h_act = vec![R::zero(); hidden];
    for l in 0..lo.layers {
        rmsnorm(&x, &mut xn);
        matvec(&p.flat[lo.wq(l)], &xn, d, d, &mut q);
        let k_store = &mut st.k[l];
        let v_store = &mut st.v[l];
        let base = k_store.len();
        k_store.resize(base + d, R::zero());
        v_store.resize(base + d, R::zero());
        matvec(&p.flat[lo.wk(l)], &xn, d, d, &mut k_store[base..base + d]);
        matvec(&p.flat[lo.wv(l)], &xn, d, d, &mut v_store[base..base + d]);
        for v in ho.iter_mut() {
            *v = R::zero();
        }
        let mut aw = vec![R::zero(); pos + 1];
        for h in 0..heads {
            let hoff = h * hd;
            let q_t = &q[hoff..hoff + hd];
            for s in 0..=pos {
                aw[s] = dot(q_t, &k_store[s * d + hoff..s * d + hoff + hd]) * inv_scale;
            }
            softmax_in_place(&mut aw);
            let out = &mut ho[hoff..hoff + hd];
            for s in 0..=pos {
                axpy(out, aw[s], &v_store[s * d + hoff..s * d + hoff + hd]);
            }
        }
        matvec(&p.flat[lo.wo(l)], &ho, d, d, &mut proj);
        for i in 0..d {
            x[i] = x[i] + proj[i];
        }
        rmsnorm(&x, &mut xn);
        matvec(&p.flat[lo.fc1(l)], &xn, hidden, d, &mut h_pre);
        for i in 0..hidden {
            h_act[i] = h_pre[i].max(R::zero());
        }
        matvec(&p.flat[lo.fc2(l)], &h_act, d, hidden, &mut proj);
        for i in 0..d {
            x[i] = x[i] + proj[i];
        }
    }
    st.last_h = x;
    st.t += 1;
}

/// Head logits of the last processed position.
pub fn kv_logits<R: Real>(p: &ModelParams<R>, st: &KvState<R>) -> Vec<R> {
    let lo = p.config.layout();
    let mut out = vec![R::zero(); lo.vocab];
    matvec(&p.flat[lo.head()], &st.last_h, lo.vocab, lo.d, &mut out);
    out
}

// ---------------------------------------------------------------------------
// sequence scoring
// ---------------------------------------------------------------------------

fn check_len<R: Real>(p: &ModelParams<R>, len: usize) -> Result<()> {
    if len > p.config.max_seq_len {
        return Err(Error::Model(format!(
            "sequence length {len} exceeds max {}",
            p.config.max_seq_len
        )));
    }
    Ok(())
}

fn scored_log_probs<R: Real>(
    p: &ModelParams<R>,
    ids: &[TokenId],
    scored: std::ops::Range<usize>,
    labels: &[TokenId],
) -> Result<Vec<f64>> {
    check_len(p, ids.len())?;
    let cache = forward(p, ids);
    let mut out = Vec::with_capacity(labels.len());
    for (j, pos) in scored.enumerate() {
        let logits = logits_at(p, &cache, pos);
        let lse = log_sum_exp(&logits);
        out.push((logits[labels[j] as usize] - lse).to_f64());
    }
    Ok(out)
}

/// Unnormalized sequence log-likelihood of `target` (which ends with EOS)
/// given `context`: per-token log-probs and their sum.
pub fn sequence_log_prob<R: Real>(
    p: &ModelParams<R>,
    context: &TokenSeq,
    target: &TokenSeq,
) -> Result<(Vec<f64>, f64)> {
    let (ids, scored) = lm_input(context, target);
    let per_token = scored_log_probs(p, &ids, scored, &target.ids)?;
    let total = per_token.iter().sum();
    Ok((per_token, total))
}

/// Log-likelihood of an unterminated continuation (no EOS accounting).
/// Used by enumeration oracles and beam internals.
pub fn prefix_log_prob<R: Real>(
    p: &ModelParams<R>,
    context: &TokenSeq,
    body: &[TokenId],
) -> Result<(Vec<f64>, f64)> {
    let n = context.ids.len();
    let mut ids = super::gen_prefix(context);
    if !body.is_empty() {
        ids.extend_from_slice(&body[..body.len() - 1]);
    } else {
        // nothing scored
        return Ok((Vec::new(), 0.0));
    }
    let per_token = scored_log_probs(p, &ids, n + 1..n + 1 + body.len(), body)?;
    let total = per_token.iter().sum();
    Ok((per_token, total))
}

/// exp(mean negative log-prob per target token) pooled over the dataset.
pub fn perplexity<R: Real>(p: &ModelParams<R>, data: &[(TokenSeq, TokenSeq)]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Eval("perplexity of an empty dataset".into()));
    }
    let mut nll = 0.0;
    let mut count = 0usize;
    for (ctx, tgt) in data {
        let (_, total) = sequence_log_prob(p, ctx, tgt)?;
        nll -= total;
        count += tgt.ids.len();
    }
    Ok((nll / count as f64).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_model, ModelConfig};
    use crate::vocab::{Vocab, EOS};

    fn small_config() -> ModelConfig {
        ModelConfig {
            vocab_size: 18,
            width: 16,
            layers: 2,
            heads: 2,
            max_seq_len: 24,
            param_budget: 1_000_000,
        }
    }

    fn vocab() -> Vocab {
        Vocab::new(18).unwrap()
    }

    #[test]
    fn incremental_matches_full_forward_bitwise() {
        let p: ModelParams<f32> = init_model(small_config(), 3).unwrap();
        let ids = vec![1u32, 13, 14, 3, 15, 16, 17];
        let cache = forward(&p, &ids);
        let mut st = KvState { t: 0, k: vec![Vec::new(); 2], v: vec![Vec::new(); 2], last_h: vec![0.0; 16] };
        for (t, &id) in ids.iter().enumerate() {
            kv_step(&p, &mut st, id);
            let full = logits_at(&p, &cache, t);
            let inc = kv_logits(&p, &st);
            assert_eq!(full, inc, "logits diverge at position {t}");
        }
    }

    #[test]
    fn uniform_head_gives_log_v_per_token() {
        let p: ModelParams<f32> = init_model(small_config(), 5).unwrap().with_uniform_head();
        let v = vocab();
        let ctx = TokenSeq::context(vec![13, 14], &v).unwrap();
        let tgt = TokenSeq::target_from_body(&[15, 16], &v).unwrap();
        let (per_token, total) = sequence_log_prob(&p, &ctx, &tgt).unwrap();
        assert_eq!(per_token.len(), 3);
        let expect = -(18f64).ln() * 3.0;
        assert!((total - expect).abs() < 1e-5, "{total} vs {expect}");
    }

    #[test]
    fn target_distributions_normalize() {
        let p: ModelParams<f64> = init_model(small_config(), 11).unwrap();
        let ids = vec![1u32, 13, 3, 14];
        let cache = forward(&p, &ids);
        for t in 0..ids.len() {
            let mut logits = logits_at(&p, &cache, t);
            softmax_in_place(&mut logits);
            let s: f64 = logits.iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn exhaustive_target_mass_sums_to_one() {
        // complete prefix-free set: bodies of length < L terminated by EOS,
        // plus all unterminated bodies of length exactly L
        let p: ModelParams<f64> = init_model(small_config(), 9).unwrap();
        let v = vocab();
        let ctx = TokenSeq::context(vec![13, 15], &v).unwrap();
        let content: Vec<u32> = v.content_ids().collect();
        let non_eos: Vec<u32> = (0..18).filter(|&t| t != EOS).collect();
        let l_max = 2usize;
        let mut mass = 0.0f64;
        // terminated sequences of body length 0..l_max-1 over all non-EOS tokens
        let mut stack: Vec<Vec<u32>> = vec![vec![]];
        for len in 0..l_max {
            let mut next = Vec::new();
            for body in &stack {
                let tgt = TokenSeq { ids: { let mut b = body.clone(); b.push(EOS); b }, role: crate::vocab::Role::Target };
                let (_, total) = sequence_log_prob(&p, &ctx, &tgt).unwrap();
                mass += total.exp();
                for &tok in &non_eos {
                    let mut b = body.clone();
                    b.push(tok);
                    next.push(b);
                }
            }
            let _ = len;
            stack = next;
        }
        for body in &stack {
            let (_, total) = prefix_log_prob(&p, &ctx, body).unwrap();
            mass += total.exp();
        }
        assert!((mass - 1.0).abs() < 1e-6, "total mass {mass}");
        let _ = content;
    }

    #[test]
    fn appending_a_token_decreases_total() {
        let p: ModelParams<f32> = init_model(small_config(), 21).unwrap();
        let v = vocab();
        let ctx = TokenSeq::context(vec![13], &v).unwrap();
        let short = TokenSeq::target_from_body(&[14], &v).unwrap();
        let long = TokenSeq::target_from_body(&[14, 15], &v).unwrap();
        let (_, a) = sequence_log_prob(&p, &ctx, &short).unwrap();
        let (_, b) = sequence_log_prob(&p, &ctx, &long).unwrap();
        assert!(a <= 0.0 && b < a);
    }

    #[test]
    fn sequence_beyond_max_len_errors() {
        let p: ModelParams<f32> = init_model(small_config(), 2).unwrap();
        let v = vocab();
        let ctx = TokenSeq::context(vec![13; 30], &v).unwrap();
        let tgt = TokenSeq::target_from_body(&[14], &v).unwrap();
        assert!(sequence_log_prob(&p, &ctx, &tgt).is_err());
    }

    #[test]
    fn perplexity_uniform_head_equals_vocab_size() {
        let p: ModelParams<f32> = init_model(small_config(), 5).unwrap().with_uniform_head();
        let v = vocab();
        let data = vec![
            (
                TokenSeq::context(vec![13, 14], &v).unwrap(),
                TokenSeq::target_from_body(&[15], &v).unwrap(),
            ),
            (
                TokenSeq::context(vec![16], &v).unwrap(),
                TokenSeq::target_from_body(&[13, 17], &v).unwrap(),
            ),
        ];
        let ppl = perplexity(&p, &data).unwrap();
        assert!((ppl - 18.0).abs() < 1e-3, "{ppl}");
        assert!(perplexity(&p, &[]).is_err());
    }

    #[test]
    fn perplexity_matches_independent_arithmetic() {
        let p: ModelParams<f32> = init_model(small_config(), 33).unwrap();
        let v = vocab();
        let data = vec![
            (
                TokenSeq::context(vec![13, 14, 15], &v).unwrap(),
                TokenSeq::target_from_body(&[16, 17], &v).unwrap(),
            ),
            (
                TokenSeq::context(vec![17], &v).unwrap(),
                TokenSeq::target_from_body(&[13], &v).unwrap(),
            ),
        ];
        let (_, t0) = sequence_log_prob(&p, &data[0].0, &data[0].1).unwrap();
        let (_, t1) = sequence_log_prob(&p, &data[1].0, &data[1].1).unwrap();
        let expect = (-(t0 + t1) / 5.0).exp(); // 3 + 2 target tokens
        let got = perplexity(&p, &data).unwrap();
        assert!((got - expect).abs() < 1e-9);
        assert!(got >= 1.0);
    }
}
