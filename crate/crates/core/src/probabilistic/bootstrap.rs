use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::base::BaseForecasterModel;
use super::{EnsembleSource, SampleEnsemble};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Generator for replicate `replicate`: ChaCha8 keyed by `seed`, one stream
/// per replicate, so draws do not depend on scheduling.
pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

/// Zero-based start of the error block for one replicate, uniform on
/// `0..=t - h`.
pub fn block_start(seed: u64, replicate: u64, t: usize, h: usize) -> usize {
    replicate_rng(seed, replicate).random_range(0..=t - h)
}

/// Draws `l` sample paths of length `h`. Each path uses one block of `h`
/// consecutive columns of the residual matrix, shared by all series, fed
/// through each series' model.
pub fn bootstrap_sample(
    model: &BaseForecasterModel,
    l: usize,
    h: usize,
    seed: u64,
) -> Result<SampleEnsemble> {
    let e = model.residuals.errors();
    let t = e.ncols();
    if h == 0 || l == 0 {
        return Err(Error::Invalid("bootstrap needs L >= 1 and H >= 1".into()));
    }
    if h > t {
        return Err(Error::Insufficient(format!(
            "cannot draw {h} consecutive errors from {t} residual periods"
        )));
    }
    let samples: Vec<Matrix> = (0..l as u64)
        .into_par_iter()
        .map(|rep| {
            let s = block_start(seed, rep, t, h);
            let block = e.columns(s, h).into_owned();
            model.simulate(&block)
        })
        .collect();
    SampleEnsemble::new(samples, EnsembleSource::Incoherent, Some(seed))
}
