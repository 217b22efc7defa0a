use serde::{Deserialize, Serialize};

use super::{ConvShape, DegreeCap, PackingPlan, Scheme};
use crate::error::Result;

/// Largest input degree of padded row-major packing of an H x H input with an h x h kernel.
pub fn analytic_n1(h_in: usize, k: usize) -> usize {
    let f = (k - 1) / 2;
    (f + h_in - 1) * (h_in + k - 1) + h_in + f
}

/// Largest input degree of the correlated packing, as the closed form `(H+h-1)(H-1)`.
pub fn analytic_n2(h_in: usize, k: usize) -> usize {
    (h_in + k - 1) * (h_in - 1)
}

/// Degree and multiplication counts of one convolution layer under a packing scheme.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountReport {
    pub scheme: Scheme,
    pub mults: usize,
    pub input_polys: usize,
    pub kernel_polys: usize,
    pub n1: usize,
    pub n2: usize,
    /// Largest input degree actually used by this scheme's tiles.
    pub max_degree: usize,
    /// Largest input degree of each scheme if the whole input went into one polynomial.
    pub correlated_max_degree: usize,
    pub baseline_max_degree: usize,
    pub correlated_mults: usize,
    pub baseline_mults: usize,
    pub window_h: usize,
    pub window_w: usize,
    pub paper_objective: Option<u64>,
    pub utilization: f64,
    /// 1x1 kernels need no padding, so both schemes coincide.
    pub trivial_kernel: bool,
}

fn untiled_max_degree(scheme: Scheme, shape: &ConvShape) -> Result<usize> {
    let plan = PackingPlan::new(scheme, *shape, DegreeCap(usize::MAX / 4))?;
    Ok(plan.input_max_degree())
}

pub fn count_report(shape: &ConvShape, cap: DegreeCap, scheme: Scheme) -> Result<CountReport> {
    count_report_channels(shape, cap, scheme, 1, 1)
}

/// Counts for a layer with `c_in` input and `c_out` output channels, each pair an independent
/// 2-D correlation accumulated over input channels.
pub fn count_report_channels(
    shape: &ConvShape,
    cap: DegreeCap,
    scheme: Scheme,
    c_in: usize,
    c_out: usize,
) -> Result<CountReport> {
    let corr = PackingPlan::correlated(*shape, cap)?;
    let base = PackingPlan::baseline(*shape, cap)?;
    let plan = match scheme {
        Scheme::Correlated => &corr,
        Scheme::Baseline => &base,
    };
    let per_pair = |p: &PackingPlan| p.mults() * c_in * c_out;
    Ok(CountReport {
        scheme,
        mults: per_pair(plan),
        input_polys: plan.num_tiles() * c_in,
        kernel_polys: c_in * c_out,
        n1: analytic_n1(shape.in_h, shape.k_h),
        n2: analytic_n2(shape.in_h, shape.k_h),
        max_degree: plan.input_max_degree(),
        correlated_max_degree: untiled_max_degree(Scheme::Correlated, shape)?,
        baseline_max_degree: untiled_max_degree(Scheme::Baseline, shape)?,
        correlated_mults: per_pair(&corr),
        baseline_mults: per_pair(&base),
        window_h: plan.window().h_w,
        window_w: plan.window().w_w,
        paper_objective: plan.window().paper_objective,
        utilization: plan.utilization(),
        trivial_kernel: shape.k_h == 1 && shape.k_w == 1,
    })
}
