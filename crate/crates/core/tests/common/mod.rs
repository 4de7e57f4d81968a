//! Shared fixtures for the integration targets.
#![allow(dead_code)]

pub mod oracle;

use fibertwin::grad::{BatchItem, ParameterScales, ParameterVector};
use fibertwin::losses::{nlse_residual, CoordinateSet};
use fibertwin::nlse::{GridSpec, Propagator};
use fibertwin::signal::{AwgnSource, NoiseConfig};
use fibertwin::spline::SplineSurface;
use fibertwin::trainer::{build_dataset, sample_coordinates, Dataset, Scenario};
use fibertwin::Exec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A training-shaped batch of the default scenario: `signals` pairs with
/// 20 dB noise and `coords` collocation points each.
pub fn default_batch(signals: usize, coords: usize, m: usize, seed: u64) -> (Propagator, Vec<BatchItem>, ParameterScales) {
    let scenario = Scenario::default();
    let data: Dataset = build_dataset(signals, &scenario, seed, Exec::Parallel).unwrap();
    let (x0, _) = &data.pairs[0];
    let grid = GridSpec::new(x0.len(), x0.dt_ps, m, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut noise = AwgnSource::with_rng(&NoiseConfig { snr_db: 20.0, seed }, 1.0, ChaCha8Rng::seed_from_u64(seed + 1));
    let batch = data
        .pairs
        .iter()
        .map(|(x, y)| {
            let mut reference = y.samples.clone();
            noise.add_in_place(&mut reference);
            BatchItem {
                input: x.samples.clone(),
                reference,
                coords: sample_coordinates(&grid, coords, &mut rng),
            }
        })
        .collect();
    (Propagator::new(grid), batch, scenario.scales())
}

/// Drop collocation points whose residual magnitude at `params` is below
/// `floor`, where the ℓ1 penalty is not differentiable. Returns how many
/// were removed.
pub fn screen_kinks(
    prop: &Propagator,
    batch: &mut [BatchItem],
    params: &ParameterVector,
    scales: &ParameterScales,
    floor: f64,
) -> usize {
    let twin = params.twin(scales, prop.grid().length());
    let rp = params.residual(scales);
    let mut removed = 0;
    for item in batch.iter_mut() {
        let field = prop.propagate(&item.input, &twin).unwrap();
        let surface = SplineSurface::build(&field).unwrap();
        let before = item.coords.len();
        let kept: Vec<(f64, f64)> = item
            .coords
            .coords
            .iter()
            .copied()
            .filter(|&(z, t)| {
                let p = surface.eval(z, t).unwrap();
                nlse_residual(p.value, p.d_dz, p.d2_dt2, &rp).norm() >= floor
            })
            .collect();
        removed += before - kept.len();
        item.coords = CoordinateSet::new(kept);
    }
    removed
}
