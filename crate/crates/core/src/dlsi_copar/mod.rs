//! DLSI and COPAR, each with the original column-wise and the efficient ADMM
//! dictionary updates.

mod copar;
mod dlsi;

pub use copar::{
    copar_code_system, copar_cost, copar_d0_update, copar_dc_update, copar_train, copar_train_from, copar_x_update, CoparClassifier,
};
pub use dlsi::{dlsi_cost, dlsi_train, dlsi_train_from, dlsi_x_update, DlsiClassifier};

use ndarray::{concatenate, Array2, ArrayView2, Axis};

use crate::lrsdl::admm_opts;
use crate::model::{HyperParams, Variant};
use crate::solvers::{admm_incoherent_dict, odlsi_dict_update_ef, OdlsiOptions};
use crate::Result;

/// `[D_i ...]ᵀ` over the given blocks, a `(Σ k_i) x d` matrix.
pub(crate) fn stack_transposed(dim: usize, blocks: &[ArrayView2<f64>]) -> Array2<f64> {
    if blocks.is_empty() {
        return Array2::zeros((0, dim));
    }
    let joined = concatenate(Axis(1), blocks).expect("blocks share a row count");
    joined.t().to_owned()
}

/// Incoherence-regularised dictionary step `min tr(F DᵀD) − 2tr(E Dᵀ) + eta ‖A D‖²`.
pub(crate) fn incoherent_step(
    e: &Array2<f64>,
    f: &Array2<f64>,
    a: &Array2<f64>,
    eta: f64,
    d: &Array2<f64>,
    params: &HyperParams,
    variant: Variant,
) -> Result<Array2<f64>> {
    match variant {
        Variant::Original => {
            let opts = OdlsiOptions {
                max_iters: params.odl_sweeps,
                tol: params.odl_tol,
            };
            odlsi_dict_update_ef(e, f, a, eta, d, opts)
        }
        Variant::Efficient => {
            Ok(admm_incoherent_dict(e, f, a, eta, d, admm_opts(params))?.dict)
        }
    }
}
