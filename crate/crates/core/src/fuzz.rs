//! Random adversarial instances: channel bits and occupancies drawn up front
//! so that any policy and the offline oracle see the same script.

use std::ops::RangeInclusive;

use rand::Rng;

use crate::channels::ReplayChannels;
use crate::engine::{run_simulation, Occupancy, SystemParams, Trace};
use crate::error::Result;
use crate::mobility::ReplayMobility;
use crate::policies::Policy;
use crate::rng::{stream, stream_rng};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FuzzSpec {
    pub users: RangeInclusive<usize>,
    pub cells: RangeInclusive<usize>,
    pub horizon: RangeInclusive<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuzzInstance {
    pub id: u64,
    pub params: SystemParams,
    pub channels: Vec<Vec<bool>>,
    pub mobility: Vec<Occupancy>,
}

/// Instance `id` of the family drawn from `seed`. Each instance picks its own
/// Good-probability in [0.1, 0.9] and its own stay-probability for users
/// between slots, so sparse and dense, static and jumpy scripts all occur.
pub fn fuzz_instance(spec: &FuzzSpec, seed: u64, id: u64) -> Result<FuzzInstance> {
    let mut rng = stream_rng(seed ^ id.wrapping_mul(0x9E37_79B9_7F4A_7C15), stream::FUZZ);
    let n = rng.random_range(spec.users.clone());
    let m = rng.random_range(spec.cells.clone());
    let horizon = rng.random_range(spec.horizon.clone());
    let good = rng.random_range(0.1..0.9);
    let stay: f64 = rng.random();

    let mut cells: Vec<usize> = (0..n).map(|_| rng.random_range(0..m)).collect();
    let mut mobility = Vec::with_capacity(horizon as usize);
    let mut channels = Vec::with_capacity(horizon as usize);
    for t in 0..horizon {
        if t > 0 {
            for c in cells.iter_mut() {
                if !rng.random_bool(stay) {
                    *c = rng.random_range(0..m);
                }
            }
        }
        mobility.push(Occupancy::new(cells.clone(), m)?);
        channels.push((0..n).map(|_| rng.random_bool(good)).collect());
    }
    Ok(FuzzInstance {
        id,
        params: SystemParams::adversarial(n, m, horizon, seed)?,
        channels,
        mobility,
    })
}

impl FuzzInstance {
    /// Replays the script under `policy`.
    pub fn run(&self, policy: &mut dyn Policy) -> Result<Trace> {
        let mut ch = ReplayChannels::from_rows(self.channels.clone())?;
        let mut mob = ReplayMobility::new(self.mobility.clone())?;
        run_simulation(&self.params, policy, &mut ch, &mut mob)
    }

    pub fn describe(&self) -> String {
        format!(
            "fuzz#{} N={} M={} T={}",
            self.id, self.params.n_users, self.params.n_cells, self.params.horizon
        )
    }
}
