//! Forward and backward passes of the re-ranker for one (query, document) pair.

use super::ops::{
    conv2d_same, conv2d_same_backward_sparse, cosine_matrix, cosine_matrix_backward, gate_matrix,
    gate_matrix_backward, kmax_indices, linear_rows, linear_rows_backward, matvec, relu,
};
use super::{Hyperparams, ModelParams, Variant};
use crate::error::{Error, Result};
use crate::store::StoreDims;

/// Raw features of one side (query or document) of a pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SideInput {
    pub id: String,
    pub tokens: Vec<String>,
    /// `len x static_dim`.
    pub static_rows: Vec<f64>,
    /// `len x contextual_dim`.
    pub ctx_rows: Vec<f64>,
    pub image_ids: Vec<String>,
    /// `images x visual_dim`.
    pub image_rows: Vec<f64>,
}

impl SideInput {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn num_images(&self) -> usize {
        self.image_ids.len()
    }
}

/// Projected token and image representations of one side.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedSide {
    pub id: String,
    pub len: usize,
    pub num_images: usize,
    /// Static projections, `len x P`.
    pub g: Vec<f64>,
    /// Contextual projections, `len x P`.
    pub h: Vec<f64>,
    /// Image projections, `images x T`.
    pub m: Vec<f64>,
}

/// Gradients with respect to a [`ProjectedSide`].
#[derive(Debug, Clone, PartialEq)]
pub struct SideGrad {
    pub g: Vec<f64>,
    pub h: Vec<f64>,
    pub m: Vec<f64>,
}

impl SideGrad {
    pub fn zeros_like(p: &ProjectedSide) -> Self {
        SideGrad {
            g: vec![0.0; p.g.len()],
            h: vec![0.0; p.h.len()],
            m: vec![0.0; p.m.len()],
        }
    }
}

/// The four `N x M` interaction matrices of a pair.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionTensors {
    pub n: usize,
    pub m: usize,
    /// Cosine of static projections.
    pub s: Vec<f64>,
    /// Gate `2 * sigmoid(-distance)` of contextual projections.
    pub g: Vec<f64>,
    /// `S * G` elementwise.
    pub a: Vec<f64>,
    /// Cosine of contextual projections.
    pub c: Vec<f64>,
    pub(crate) dist: Vec<f64>,
}

impl InteractionTensors {
    /// Stacked `[S, A, C, S - C]`, channel-major (`4 x N x M`).
    pub fn z(&self) -> Vec<f64> {
        let mut z = Vec::with_capacity(4 * self.s.len());
        z.extend_from_slice(&self.s);
        z.extend_from_slice(&self.a);
        z.extend_from_slice(&self.c);
        z.extend(self.s.iter().zip(&self.c).map(|(s, c)| s - c));
        z
    }
}

#[derive(Debug, Clone)]
pub struct TextualForward {
    pub z: Vec<f64>,
    /// Per CNN: `F x N x M` feature maps.
    pub maps: Vec<Vec<f64>>,
    /// Per (CNN, filter): flat cell indices picked by k-max pooling.
    pub picked: Vec<Vec<usize>>,
    /// Concatenated pooled features, length `n * F * k`.
    pub o: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct VisualForward {
    /// `X x Y` image similarities.
    pub v: Vec<f64>,
    pub argmax: Option<(usize, usize)>,
    pub s: f64,
}

#[derive(Debug, Clone)]
pub struct MlpForward {
    pub u: Vec<f64>,
    pub z1: Vec<f64>,
    pub a1: Vec<f64>,
    pub z2: Vec<f64>,
    pub a2: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PairForward {
    pub interactions: Option<InteractionTensors>,
    pub textual: Option<TextualForward>,
    pub visual: Option<VisualForward>,
    pub mlp: Option<MlpForward>,
    pub score: f64,
}

/// Scored pair features: pooled textual vector, visual scalar and final score.
#[derive(Debug, Clone, PartialEq)]
pub struct PairFeatures {
    pub o: Vec<f64>,
    pub s: Option<f64>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub hyper: Hyperparams,
    pub variant: Variant,
    pub params: ModelParams,
}

impl Model {
    pub fn new(hyper: Hyperparams, variant: Variant, seed: u64) -> Self {
        let params = ModelParams::init(&hyper, variant, seed);
        Model {
            hyper,
            variant,
            params,
        }
    }

    fn uses_text(&self) -> bool {
        self.variant != Variant::Vmn
    }

    fn uses_images(&self) -> bool {
        self.variant != Variant::Ctm
    }

    pub fn check_store_dims(&self, dims: StoreDims) -> Result<()> {
        if dims != self.hyper.dims {
            return Err(Error::Shape(format!(
                "store dims {dims:?} do not match model dims {:?}",
                self.hyper.dims
            )));
        }
        Ok(())
    }

    pub fn project_side(&self, side: &SideInput) -> ProjectedSide {
        let p = &self.params;
        let (g, h) = if self.uses_text() {
            (
                linear_rows(&side.static_rows, side.len(), &p.w1.data, &p.b1.data, true),
                linear_rows(&side.ctx_rows, side.len(), &p.w2.data, &p.b2.data, true),
            )
        } else {
            (Vec::new(), Vec::new())
        };
        let m = if self.uses_images() {
            linear_rows(
                &side.image_rows,
                side.num_images(),
                &p.w3.data,
                &p.b3.data,
                false,
            )
        } else {
            Vec::new()
        };
        ProjectedSide {
            id: side.id.clone(),
            len: side.len(),
            num_images: side.num_images(),
            g,
            h,
            m,
        }
    }

    pub fn interactions(&self, q: &ProjectedSide, d: &ProjectedSide) -> InteractionTensors {
        let dim = self.hyper.projection_dim;
        let s = cosine_matrix(&q.g, &d.g, dim);
        let (g, dist) = gate_matrix(&q.h, &d.h, dim);
        let a = s.iter().zip(&g).map(|(x, y)| x * y).collect();
        let c = cosine_matrix(&q.h, &d.h, dim);
        InteractionTensors {
            n: q.len,
            m: d.len,
            s,
            g,
            a,
            c,
            dist,
        }
    }

    fn textual(&self, it: &InteractionTensors) -> TextualForward {
        let hp = &self.hyper;
        let (n, m) = (it.n, it.m);
        let plane = n * m;
        let z = it.z();
        let mut maps = Vec::with_capacity(hp.num_cnns);
        let mut picked = Vec::with_capacity(hp.num_cnns * hp.filters);
        let mut o = Vec::with_capacity(hp.textual_width());
        for (ci, kernel) in self.params.filters.iter().enumerate() {
            let map = conv2d_same(&z, 4, n, m, &kernel.data, hp.filters, ci + 1);
            for f in 0..hp.filters {
                let channel = &map[f * plane..(f + 1) * plane];
                let idx = kmax_indices(channel, hp.kmax);
                o.extend(idx.iter().map(|&i| channel[i]));
                picked.push(idx);
            }
            maps.push(map);
        }
        TextualForward { z, maps, picked, o }
    }

    /// Largest image-pair cosine; `-1` when the document has no images.
    fn visual(&self, q: &ProjectedSide, d: &ProjectedSide) -> Result<VisualForward> {
        if q.num_images == 0 {
            return Err(Error::NoQueryImages(q.id.clone()));
        }
        if d.num_images == 0 {
            return Ok(VisualForward {
                v: Vec::new(),
                argmax: None,
                s: -1.0,
            });
        }
        let v = cosine_matrix(&q.m, &d.m, self.hyper.visual_proj_dim);
        let (mut best, mut arg) = (f64::NEG_INFINITY, 0);
        for (i, &x) in v.iter().enumerate() {
            if x > best {
                best = x;
                arg = i;
            }
        }
        Ok(VisualForward {
            argmax: Some((arg / d.num_images, arg % d.num_images)),
            s: best,
            v,
        })
    }

    fn mlp(&self, u: Vec<f64>) -> (MlpForward, f64) {
        let p = &self.params;
        let z1 = matvec(&p.w4.data, &u);
        let a1 = relu(&z1);
        let z2 = matvec(&p.w5.data, &a1);
        let a2 = relu(&z2);
        let score = p.w6.data.iter().zip(&a2).map(|(w, x)| w * x).sum();
        (MlpForward { u, z1, a1, z2, a2 }, score)
    }

    pub fn forward(&self, q: &ProjectedSide, d: &ProjectedSide) -> Result<PairForward> {
        let mut out = PairForward {
            interactions: None,
            textual: None,
            visual: None,
            mlp: None,
            score: 0.0,
        };
        if self.uses_text() {
            if q.len == 0 || d.len == 0 {
                return Err(Error::Shape(format!(
                    "empty text in pair ({}, {})",
                    q.id, d.id
                )));
            }
            let it = self.interactions(q, d);
            out.textual = Some(self.textual(&it));
            out.interactions = Some(it);
        }
        if self.uses_images() {
            out.visual = Some(self.visual(q, d)?);
        }
        match self.variant {
            Variant::Vmn => out.score = out.visual.as_ref().expect("visual").s,
            Variant::Ctm | Variant::Man => {
                let mut u = out.textual.as_ref().expect("textual").o.clone();
                if self.variant == Variant::Man {
                    u.push(out.visual.as_ref().expect("visual").s);
                }
                let (mlp, score) = self.mlp(u);
                out.mlp = Some(mlp);
                out.score = score;
            }
        }
        Ok(out)
    }

    pub fn features(&self, q: &ProjectedSide, d: &ProjectedSide) -> Result<PairFeatures> {
        let fwd = self.forward(q, d)?;
        Ok(PairFeatures {
            o: fwd.textual.map(|t| t.o).unwrap_or_default(),
            s: fwd.visual.map(|v| v.s),
            score: fwd.score,
        })
    }

    pub fn score_projected(&self, q: &ProjectedSide, d: &ProjectedSide) -> Result<f64> {
        Ok(self.forward(q, d)?.score)
    }

    /// `f(q, d)` from raw features.
    pub fn score(&self, q: &SideInput, d: &SideInput) -> Result<f64> {
        self.score_projected(&self.project_side(q), &self.project_side(d))
    }

    /// Backpropagates `dscore` through one pair, accumulating parameter
    /// gradients into `grads` and projection gradients into `dq` / `dd`.
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        q: &ProjectedSide,
        d: &ProjectedSide,
        fwd: &PairForward,
        dscore: f64,
        grads: &mut ModelParams,
        dq: &mut SideGrad,
        dd: &mut SideGrad,
    ) {
        let hp = &self.hyper;
        let p = &self.params;
        let (d_o, d_s) = match (&self.variant, &fwd.mlp) {
            (Variant::Vmn, _) => (Vec::new(), dscore),
            (_, Some(mlp)) => {
                let h2 = hp.hidden2;
                let h1 = hp.hidden1;
                let width = mlp.u.len();
                let mut dz2 = vec![0.0; h2];
                for j in 0..h2 {
                    grads.w6.data[j] += dscore * mlp.a2[j];
                    if mlp.z2[j] > 0.0 {
                        dz2[j] = dscore * p.w6.data[j];
                    }
                }
                let mut dz1 = vec![0.0; h1];
                for j in 0..h2 {
                    if dz2[j] == 0.0 {
                        continue;
                    }
                    for i in 0..h1 {
                        grads.w5.data[j * h1 + i] += dz2[j] * mlp.a1[i];
                        dz1[i] += dz2[j] * p.w5.data[j * h1 + i];
                    }
                }
                let mut du = vec![0.0; width];
                for i in 0..h1 {
                    if mlp.z1[i] <= 0.0 || dz1[i] == 0.0 {
                        continue;
                    }
                    let g = dz1[i];
                    let row = &p.w4.data[i * width..(i + 1) * width];
                    let grow = &mut grads.w4.data[i * width..(i + 1) * width];
                    for k in 0..width {
                        grow[k] += g * mlp.u[k];
                        du[k] += g * row[k];
                    }
                }
                let ds = if self.variant == Variant::Man {
                    du.pop().expect("visual input")
                } else {
                    0.0
                };
                (du, ds)
            }
            _ => unreachable!("text variants always run the mlp"),
        };

        if let Some(vis) = &fwd.visual {
            if let Some((i, j)) = vis.argmax {
                if d_s != 0.0 {
                    let mut dv = vec![0.0; vis.v.len()];
                    dv[i * d.num_images + j] = d_s;
                    cosine_matrix_backward(
                        &q.m,
                        &d.m,
                        hp.visual_proj_dim,
                        &vis.v,
                        &dv,
                        &mut dq.m,
                        &mut dd.m,
                    );
                }
            }
        }

        if let (Some(it), Some(tx)) = (&fwd.interactions, &fwd.textual) {
            let (n, m) = (it.n, it.m);
            let plane = n * m;
            let mut dz = vec![0.0; 4 * plane];
            for (ci, kernel) in p.filters.iter().enumerate() {
                let mut sparse = Vec::with_capacity(hp.filters * hp.kmax);
                for f in 0..hp.filters {
                    let block = ci * hp.filters + f;
                    for (t, &cell) in tx.picked[block].iter().enumerate() {
                        let g = d_o[block * hp.kmax + t];
                        sparse.push((f, cell / m, cell % m, g));
                    }
                }
                conv2d_same_backward_sparse(
                    &tx.z,
                    4,
                    n,
                    m,
                    &kernel.data,
                    ci + 1,
                    &sparse,
                    &mut grads.filters[ci].data,
                    &mut dz,
                );
            }
            let (dz_s, rest) = dz.split_at(plane);
            let (dz_a, rest) = rest.split_at(plane);
            let (dz_c, dz_diff) = rest.split_at(plane);
            let mut ds = vec![0.0; plane];
            let mut dc = vec![0.0; plane];
            let mut dg = vec![0.0; plane];
            for x in 0..plane {
                ds[x] = dz_s[x] + dz_diff[x] + dz_a[x] * it.g[x];
                dc[x] = dz_c[x] - dz_diff[x];
                dg[x] = dz_a[x] * it.s[x];
            }
            let dim = hp.projection_dim;
            cosine_matrix_backward(&q.g, &d.g, dim, &it.s, &ds, &mut dq.g, &mut dd.g);
            cosine_matrix_backward(&q.h, &d.h, dim, &it.c, &dc, &mut dq.h, &mut dd.h);
            gate_matrix_backward(&q.h, &d.h, dim, &it.g, &it.dist, &dg, &mut dq.h, &mut dd.h);
        }
    }

    /// Backpropagates projection gradients of one side into the projection
    /// layers.
    pub fn backward_side(
        &self,
        side: &SideInput,
        proj: &ProjectedSide,
        grad: &SideGrad,
        grads: &mut ModelParams,
    ) {
        if self.uses_text() {
            linear_rows_backward(
                &side.static_rows,
                side.len(),
                &proj.g,
                &grad.g,
                true,
                &mut grads.w1.data,
                &mut grads.b1.data,
            );
            linear_rows_backward(
                &side.ctx_rows,
                side.len(),
                &proj.h,
                &grad.h,
                true,
                &mut grads.w2.data,
                &mut grads.b2.data,
            );
        }
        if self.uses_images() {
            linear_rows_backward(
                &side.image_rows,
                side.num_images(),
                &proj.m,
                &grad.m,
                false,
                &mut grads.w3.data,
                &mut grads.b3.data,
            );
        }
    }

    /// Score and its gradient with respect to every parameter.
    pub fn score_and_grad(&self, q: &SideInput, d: &SideInput) -> Result<(f64, ModelParams)> {
        let qp = self.project_side(q);
        let dp = self.project_side(d);
        let fwd = self.forward(&qp, &dp)?;
        let mut grads = ModelParams::zeros(&self.hyper, self.variant);
        let mut dq = SideGrad::zeros_like(&qp);
        let mut dd = SideGrad::zeros_like(&dp);
        self.backward(&qp, &dp, &fwd, 1.0, &mut grads, &mut dq, &mut dd);
        self.backward_side(q, &qp, &dq, &mut grads);
        self.backward_side(d, &dp, &dd, &mut grads);
        Ok((fwd.score, grads))
    }
}

/// Hyperparameter-only helpers used by the network.
impl Hyperparams {
    /// Length of the pooled textual feature vector, `n * F * k`.
    pub fn textual_width(&self) -> usize {
        self.num_cnns * self.filters * self.kmax
    }

    pub fn mlp_input_width(&self, variant: Variant) -> usize {
        match variant {
            Variant::Man => self.textual_width() + 1,
            Variant::Ctm | Variant::Vmn => self.textual_width(),
        }
    }
}
