use ndarray::{Array1, Array2, Axis};

use super::EmbeddingSequence;
use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Fully connected layer `relu(W x + b)` applied to every row of a sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionLayer {
    /// `d_out x d_enc`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Output of [`ProjectionLayer::project`].
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// `m x d_out`, elementwise non-negative.
    pub rows: Array2<f64>,
    /// Column mean of `rows`.
    pub pooled: Array1<f64>,
    pub(crate) pre_activation: Array2<f64>,
}

impl ProjectionLayer {
    pub fn zeros(d_out: usize, d_enc: usize) -> Self {
        ProjectionLayer {
            weight: Array2::zeros((d_out, d_enc)),
            bias: Array1::zeros(d_out),
        }
    }

    /// Weights uniform in `[-1/sqrt(d_enc), 1/sqrt(d_enc))`, drawn row-major;
    /// bias zero.
    pub fn init(d_out: usize, d_enc: usize, rng: &mut SeededRng) -> Self {
        let bound = 1.0 / (d_enc as f64).sqrt();
        ProjectionLayer {
            weight: Array2::from_shape_simple_fn((d_out, d_enc), || rng.symmetric(bound)),
            bias: Array1::zeros(d_out),
        }
    }

    pub fn d_out(&self) -> usize {
        self.weight.nrows()
    }

    pub fn d_enc(&self) -> usize {
        self.weight.ncols()
    }

    pub fn project(&self, seq: &EmbeddingSequence) -> Result<Projection> {
        self.project_rows(seq.rows())
    }

    pub(crate) fn project_rows(&self, input: &Array2<f64>) -> Result<Projection> {
        if input.ncols() != self.d_enc() {
            return Err(Error::dims("projection input width", self.d_enc(), input.ncols()));
        }
        let pre_activation = input.dot(&self.weight.t()) + &self.bias;
        let rows = pre_activation.mapv(|z| z.max(0.0));
        let pooled = rows
            .mean_axis(Axis(0))
            .ok_or_else(|| Error::InvalidArgument("projection of an empty sequence".into()))?;
        if pooled.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("projection output".into()));
        }
        Ok(Projection {
            rows,
            pooled,
            pre_activation,
        })
    }

    /// Accumulates into `grad` the gradient of a loss whose derivative with
    /// respect to `out.rows` is `d_rows`; returns nothing for the input since
    /// backbone features are frozen. ReLU'(0) is taken as 0.
    pub(crate) fn accumulate_grad(
        &self,
        input: &Array2<f64>,
        out: &Projection,
        d_rows: &Array2<f64>,
        grad: &mut ProjectionLayer,
    ) {
        let mut d_pre = d_rows.clone();
        d_pre.zip_mut_with(&out.pre_activation, |d, &z| {
            if z <= 0.0 {
                *d = 0.0;
            }
        });
        grad.weight += &d_pre.t().dot(input);
        grad.bias += &d_pre.sum_axis(Axis(0));
    }
}
