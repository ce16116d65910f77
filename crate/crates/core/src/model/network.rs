//! Frame-level affine + tanh, mean/std statistics pooling, affine projection.

use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::loss::ClassCenters;
use crate::seed;
use crate::signal::FeatureMatrix;

/// Variance floor inside the pooled standard deviation.
pub const STD_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub n_bins: usize,
    pub hidden: usize,
    pub embed_dim: usize,
    pub n_classes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    /// `F x H`
    pub frame_w: Array2<f64>,
    pub frame_b: Array1<f64>,
    /// `2H x D`
    pub proj_w: Array2<f64>,
    pub proj_b: Array1<f64>,
    pub centers: ClassCenters,
}

/// Gradients of everything except the class centers.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractorGrads {
    pub frame_w: Array2<f64>,
    pub frame_b: Array1<f64>,
    pub proj_w: Array2<f64>,
    pub proj_b: Array1<f64>,
}

impl ExtractorGrads {
    pub fn zeros(dims: ModelDims) -> Self {
        Self {
            frame_w: Array2::zeros((dims.n_bins, dims.hidden)),
            frame_b: Array1::zeros(dims.hidden),
            proj_w: Array2::zeros((2 * dims.hidden, dims.embed_dim)),
            proj_b: Array1::zeros(dims.embed_dim),
        }
    }

    pub fn add_assign(&mut self, other: &ExtractorGrads) {
        self.frame_w += &other.frame_w;
        self.frame_b += &other.frame_b;
        self.proj_w += &other.proj_w;
        self.proj_b += &other.proj_b;
    }
}

/// Intermediate values kept from a forward pass for [`EmbeddingModel::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Array2<f64>,
    hidden: Array2<f64>,
    mean: Array1<f64>,
    /// `sqrt(var + eps)` per hidden unit.
    root: Array1<f64>,
    pooled: Array1<f64>,
}

/// `tanh` through one `exp`; several times faster than the libm call and
/// within a few ulps of it away from zero.
fn tanh(x: f64) -> f64 {
    1.0 - 2.0 / ((2.0 * x).exp() + 1.0)
}

fn glorot(rows: usize, cols: usize, rng: &mut seed::Rng) -> Array2<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-bound..bound))
}

impl EmbeddingModel {
    /// Glorot-uniform weights, zero biases.
    pub fn init(dims: ModelDims, seed: u64) -> Result<Self> {
        if dims.embed_dim < 2 || dims.hidden < dims.embed_dim || dims.n_bins == 0 || dims.n_classes == 0 {
            return Err(Error::InvalidArgument(format!("invalid model dimensions {dims:?}")));
        }
        let mut rng = seed::rng_for(seed, &[seed::tag::INIT]);
        let frame_w = glorot(dims.n_bins, dims.hidden, &mut rng);
        let proj_w = glorot(2 * dims.hidden, dims.embed_dim, &mut rng);
        let centers = ClassCenters::new(glorot(dims.embed_dim, dims.n_classes, &mut rng))?;
        Ok(Self {
            frame_w,
            frame_b: Array1::zeros(dims.hidden),
            proj_w,
            proj_b: Array1::zeros(dims.embed_dim),
            centers,
        })
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            n_bins: self.frame_w.nrows(),
            hidden: self.frame_w.ncols(),
            embed_dim: self.proj_w.ncols(),
            n_classes: self.centers.n_classes(),
        }
    }

    /// Checks internal shape consistency, e.g. after loading a checkpoint.
    pub fn validate(&self) -> Result<()> {
        let d = self.dims();
        let ok = self.frame_b.len() == d.hidden
            && self.proj_w.nrows() == 2 * d.hidden
            && self.proj_b.len() == d.embed_dim
            && self.centers.dim() == d.embed_dim
            && d.embed_dim >= 2
            && d.hidden >= d.embed_dim;
        if !ok {
            return Err(Error::Shape(format!("inconsistent model dimensions {d:?}")));
        }
        let finite = [&self.frame_b, &self.proj_b].iter().all(|a| a.iter().all(|v| v.is_finite()))
            && [&self.frame_w, &self.proj_w].iter().all(|a| a.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::InvalidArgument("non-finite model parameter".into()));
        }
        Ok(())
    }

    pub fn forward(&self, f: &FeatureMatrix) -> Result<Array1<f64>> {
        self.forward_cached(f).map(|(e, _)| e)
    }

    pub fn forward_cached(&self, f: &FeatureMatrix) -> Result<(Array1<f64>, ForwardCache)> {
        if f.n_bins() != self.frame_w.nrows() {
            return Err(Error::Shape(format!(
                "features have {} bins, model expects {}",
                f.n_bins(),
                self.frame_w.nrows()
            )));
        }
        let input = f.frames().clone();
        let mut hidden = input.dot(&self.frame_w);
        hidden += &self.frame_b;
        hidden.mapv_inplace(tanh);

        let t = hidden.nrows() as f64;
        let mean = hidden.sum_axis(Axis(0)) / t;
        let mut var: Array1<f64> = Array1::zeros(mean.len());
        for row in hidden.axis_iter(Axis(0)) {
            var.zip_mut_with(&(&row - &mean), |v, d| *v += d * d);
        }
        var /= t;
        let root = var.mapv(|v| (v + STD_EPS).sqrt());
        let sd = root.mapv(|r| r - STD_EPS.sqrt());

        let h = mean.len();
        let mut pooled = Array1::zeros(2 * h);
        pooled.slice_mut(s![..h]).assign(&mean);
        pooled.slice_mut(s![h..]).assign(&sd);
        let e = pooled.dot(&self.proj_w) + &self.proj_b;
        Ok((e, ForwardCache { input, hidden, mean, root, pooled }))
    }

    /// Chains `grad_e` (dLoss/dEmbedding) back to the extractor parameters.
    pub fn backward(&self, cache: &ForwardCache, grad_e: ArrayView1<f64>) -> ExtractorGrads {
        let h = cache.mean.len();
        let t = cache.hidden.nrows() as f64;

        let proj_w = outer(&cache.pooled.view(), &grad_e);
        let proj_b = grad_e.to_owned();
        let g_pooled = self.proj_w.dot(&grad_e);
        let g_mean = g_pooled.slice(s![..h]);
        let g_sd = g_pooled.slice(s![h..]);

        // d sd_h / d a_th = (a_th − μ_h) / (T·root_h); zero when all frames agree.
        let coef = &g_sd / &cache.root / t;
        let mut dz = &cache.hidden - &cache.mean;
        dz *= &coef;
        dz += &(&g_mean / t);
        dz.zip_mut_with(&cache.hidden, |d, &a| *d *= 1.0 - a * a);

        ExtractorGrads {
            frame_w: cache.input.t().dot(&dz),
            frame_b: dz.sum_axis(Axis(0)),
            proj_w,
            proj_b,
        }
    }
}

fn outer(a: &ArrayView1<f64>, b: &ArrayView1<f64>) -> Array2<f64> {
    let a2 = a.view().insert_axis(Axis(1));
    let b2 = b.view().insert_axis(Axis(0));
    a2.dot(&b2)
}
