//! Title-text similarity: single-head scaled dot-product attention run in
//! both directions between the projected body and title, each followed by a
//! fully connected layer.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// How the projected text/title reach the attention blocks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionMode {
    /// Per-token projected sequences (`m` body rows, `n` title rows).
    #[default]
    Sequence,
    /// The mean-pooled vectors as one-row sequences. Softmax over one key is
    /// identically 1, so each direction reduces to a linear map of its
    /// key/value side.
    Scalar,
}

impl std::str::FromStr for AttentionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sequence" => Ok(AttentionMode::Sequence),
            "scalar" => Ok(AttentionMode::Scalar),
            other => Err(Error::InvalidArgument(format!(
                "unknown attention mode {other:?} (expected sequence or scalar)"
            ))),
        }
    }
}

impl std::fmt::Display for AttentionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(match self {
            AttentionMode::Sequence => "sequence",
            AttentionMode::Scalar => "scalar",
        })
    }
}

/// One attention direction: query/key/value maps plus the output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionBlock {
    pub w_q: Array2<f64>,
    pub w_k: Array2<f64>,
    pub w_v: Array2<f64>,
    /// `d x d`, applied as `out_w · x + out_b`.
    pub out_w: Array2<f64>,
    pub out_b: Array1<f64>,
}

/// Intermediates of one block application, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct BlockTrace {
    pub(crate) q: Array2<f64>,
    pub(crate) k: Array2<f64>,
    pub(crate) v: Array2<f64>,
    pub(crate) weights: Array2<f64>,
    pub(crate) pooled: Array1<f64>,
    pub output: Array1<f64>,
}

impl AttentionBlock {
    pub fn zeros(d: usize) -> Self {
        AttentionBlock {
            w_q: Array2::zeros((d, d)),
            w_k: Array2::zeros((d, d)),
            w_v: Array2::zeros((d, d)),
            out_w: Array2::zeros((d, d)),
            out_b: Array1::zeros(d),
        }
    }

    /// Matrices uniform in `[-1/sqrt(d), 1/sqrt(d))`, drawn in the order
    /// `w_q, w_k, w_v, out_w`, each row-major; `out_b` zero.
    pub fn init(d: usize, rng: &mut SeededRng) -> Self {
        let bound = 1.0 / (d as f64).sqrt();
        let mut mat = || Array2::from_shape_simple_fn((d, d), || rng.symmetric(bound));
        let w_q = mat();
        let w_k = mat();
        let w_v = mat();
        let out_w = mat();
        AttentionBlock {
            w_q,
            w_k,
            w_v,
            out_w,
            out_b: Array1::zeros(d),
        }
    }

    pub fn d(&self) -> usize {
        self.w_q.nrows()
    }

    /// Queries come from `query_rows`, keys and values from `kv_rows`; the
    /// attention output is mean-pooled over query rows and passed through the
    /// output layer.
    pub fn apply(&self, query_rows: &Array2<f64>, kv_rows: &Array2<f64>) -> Result<BlockTrace> {
        let d = self.d();
        for (what, rows) in [("query", query_rows), ("key/value", kv_rows)] {
            if rows.ncols() != d {
                return Err(Error::dims(format!("attention {what} width"), d, rows.ncols()));
            }
            if rows.nrows() == 0 {
                return Err(Error::InvalidArgument(format!("empty attention {what} sequence")));
            }
        }
        let q = query_rows.dot(&self.w_q);
        let k = kv_rows.dot(&self.w_k);
        let v = kv_rows.dot(&self.w_v);
        let weights = attention_weights(&q, &k, d)?;
        let attended = weights.dot(&v);
        let pooled = attended.mean_axis(Axis(0)).expect("non-empty");
        let output = self.out_w.dot(&pooled) + &self.out_b;
        Ok(BlockTrace {
            q,
            k,
            v,
            weights,
            pooled,
            output,
        })
    }

    /// Accumulates parameter gradients into `grad` and returns the gradients
    /// with respect to `(query_rows, kv_rows)`.
    pub(crate) fn backward(
        &self,
        query_rows: &Array2<f64>,
        kv_rows: &Array2<f64>,
        trace: &BlockTrace,
        d_output: &Array1<f64>,
        grad: &mut AttentionBlock,
    ) -> (Array2<f64>, Array2<f64>) {
        let d = self.d();
        let p = trace.q.nrows();
        let scale = 1.0 / (d as f64).sqrt();

        grad.out_w += &outer(d_output, &trace.pooled);
        grad.out_b += d_output;
        let d_pooled = self.out_w.t().dot(d_output);

        // every attended row receives d_pooled / p
        let d_attended_row = d_pooled / p as f64;
        // dA = dO · Vᵀ with identical rows of dO
        let d_weights_row = trace.v.dot(&d_attended_row);
        // dV = Aᵀ · dO = (column sums of A) ⊗ dO_row
        let col_sums = trace.weights.sum_axis(Axis(0));
        let d_v = outer(&col_sums, &d_attended_row);

        // softmax backward, row by row
        let mut d_scores = Array2::zeros(trace.weights.raw_dim());
        for (i, a) in trace.weights.outer_iter().enumerate() {
            let dot = a.dot(&d_weights_row);
            for j in 0..a.len() {
                d_scores[[i, j]] = a[j] * (d_weights_row[j] - dot) * scale;
            }
        }
        let d_q = d_scores.dot(&trace.k);
        let d_k = d_scores.t().dot(&trace.q);

        grad.w_q += &query_rows.t().dot(&d_q);
        grad.w_k += &kv_rows.t().dot(&d_k);
        grad.w_v += &kv_rows.t().dot(&d_v);

        let d_query_rows = d_q.dot(&self.w_q.t());
        let d_kv_rows = d_k.dot(&self.w_k.t()) + d_v.dot(&self.w_v.t());
        (d_query_rows, d_kv_rows)
    }
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j])
}

/// Row-wise `softmax(Q Kᵀ / sqrt(d))`, computed with max subtraction.
pub fn attention_weights(q: &Array2<f64>, k: &Array2<f64>, d: usize) -> Result<Array2<f64>> {
    if d == 0 {
        return Err(Error::InvalidArgument("attention scale d must be positive".into()));
    }
    if q.ncols() != k.ncols() {
        return Err(Error::dims("attention query/key width", q.ncols(), k.ncols()));
    }
    if q.iter().chain(k.iter()).any(|v| v.is_nan()) {
        return Err(Error::NonFinite("attention query/key".into()));
    }
    // The matrix product may come back column-major.
    let mut scores = (q.dot(&k.t()) / (d as f64).sqrt())
        .as_standard_layout()
        .into_owned();
    for mut row in scores.outer_iter_mut() {
        softmax_in_place(row.as_slice_mut().expect("standard layout"));
    }
    Ok(scores)
}

pub(crate) fn softmax_in_place(xs: &mut [f64]) {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in xs.iter_mut() {
        *x /= sum;
    }
}

/// `softmax(Q Kᵀ / sqrt(d)) V` for `Q: p x d`, `K, V: q x d`.
pub fn scaled_dot_attention(
    q: &Array2<f64>,
    k: &Array2<f64>,
    v: &Array2<f64>,
    d: usize,
) -> Result<Array2<f64>> {
    if k.nrows() != v.nrows() {
        return Err(Error::dims("attention key/value rows", k.nrows(), v.nrows()));
    }
    if v.iter().any(|x| x.is_nan()) {
        return Err(Error::NonFinite("attention values".into()));
    }
    Ok(attention_weights(q, k, d)?.dot(v))
}

/// The two directional similarity vectors `(text→title, title→text)`.
///
/// Text→title uses body rows as queries and title rows as keys/values;
/// title→text swaps the roles.
pub fn title_text_features(
    text_rows: &Array2<f64>,
    title_rows: &Array2<f64>,
    text_to_title: &AttentionBlock,
    title_to_text: &AttentionBlock,
) -> Result<(Array1<f64>, Array1<f64>)> {
    let a = text_to_title.apply(text_rows, title_rows)?;
    let b = title_to_text.apply(title_rows, text_rows)?;
    Ok((a.output, b.output))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn random(rng: &mut SeededRng, r: usize, c: usize) -> Array2<f64> {
        Array2::from_shape_simple_fn((r, c), || rng.symmetric(1.0))
    }

    #[test]
    fn single_key_returns_value_row() {
        let mut rng = SeededRng::new(1);
        let q = random(&mut rng, 3, 4);
        let k = random(&mut rng, 1, 4);
        let v = random(&mut rng, 1, 4);
        let out = scaled_dot_attention(&q, &k, &v, 4).unwrap();
        for row in out.outer_iter() {
            assert_eq!(row, v.row(0));
        }
    }

    #[test]
    fn identical_keys_average_values() {
        let q = array![[1.0, 2.0], [-3.0, 0.5]];
        let k = array![[0.3, 0.1], [0.3, 0.1], [0.3, 0.1]];
        let v = array![[1.0, 0.0], [2.0, 3.0], [6.0, -3.0]];
        let out = scaled_dot_attention(&q, &k, &v, 2).unwrap();
        for row in out.outer_iter() {
            assert!((row[0] - 3.0).abs() < 1e-12 && row[1].abs() < 1e-12);
        }
    }

    #[test]
    fn errors_on_mismatch_and_nan() {
        let a = Array2::<f64>::zeros((2, 3));
        let b = Array2::<f64>::zeros((2, 4));
        assert!(scaled_dot_attention(&a, &b, &b, 3).is_err());
        assert!(scaled_dot_attention(&a, &a, &Array2::zeros((3, 3)), 3).is_err());
        let mut n = a.clone();
        n[[0, 0]] = f64::NAN;
        assert!(scaled_dot_attention(&n, &a, &a, 3).is_err());
        assert!(scaled_dot_attention(&a, &a, &a, 0).is_err());
    }

    #[test]
    fn huge_logits_stay_finite() {
        let q = array![[1e6, -1e6]];
        let k = array![[1e6, 0.0], [-1e6, 0.0]];
        let w = attention_weights(&q, &k, 2).unwrap();
        assert!(w.iter().all(|x| x.is_finite()));
        assert!((w.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_query_key_maps_give_mean_of_values() {
        let mut rng = SeededRng::new(4);
        let d = 32;
        let mut t2ti = AttentionBlock::init(d, &mut rng);
        let mut ti2t = AttentionBlock::init(d, &mut rng);
        for b in [&mut t2ti, &mut ti2t] {
            b.w_q.fill(0.0);
            b.w_k.fill(0.0);
        }
        let text = random(&mut rng, 3, d);
        let title = random(&mut rng, 2, d);
        let a = t2ti.apply(&text, &title).unwrap();
        let expected = title.dot(&t2ti.w_v).mean_axis(Axis(0)).unwrap();
        assert!((&a.pooled - &expected).iter().all(|x| x.abs() < 1e-12));
        let b = ti2t.apply(&title, &text).unwrap();
        let expected = text.dot(&ti2t.w_v).mean_axis(Axis(0)).unwrap();
        assert!((&b.pooled - &expected).iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn single_title_row_ignores_text() {
        let mut rng = SeededRng::new(8);
        let block = AttentionBlock::init(32, &mut rng);
        let title = random(&mut rng, 1, 32);
        let t1 = block.apply(&random(&mut rng, 4, 32), &title).unwrap();
        let t2 = block.apply(&random(&mut rng, 2, 32), &title).unwrap();
        let expected = title.dot(&block.w_v).row(0).to_owned();
        for t in [t1, t2] {
            assert!((&t.pooled - &expected).iter().all(|x| x.abs() < 1e-15));
        }
    }

    #[test]
    fn width_must_match_block() {
        let block = AttentionBlock::zeros(32);
        let ok = Array2::zeros((2, 32));
        let bad = Array2::zeros((2, 31));
        assert!(title_text_features(&bad, &ok, &block, &block).is_err());
        assert!(title_text_features(&ok, &bad, &block, &block).is_err());
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("Sequence".parse::<AttentionMode>().unwrap(), AttentionMode::Sequence);
        assert_eq!("scalar".parse::<AttentionMode>().unwrap(), AttentionMode::Scalar);
        assert!("both".parse::<AttentionMode>().is_err());
    }
}
