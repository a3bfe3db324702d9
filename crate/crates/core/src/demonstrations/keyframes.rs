use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::{Trajectory, WorldConfig};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("trajectory has {0} steps, keyframes need at least 2")]
pub struct TooShort(pub usize);

/// Strictly increasing step indices, always holding the first and last.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Keyframes {
    pub indices: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KeyframeConfig {
    pub close_threshold: f64,
    pub open_threshold: f64,
    /// Step length under which a step counts as stopped (m per step).
    pub v_eps: f64,
}

impl KeyframeConfig {
    pub fn from_world(w: &WorldConfig) -> Self {
        KeyframeConfig {
            close_threshold: w.grasp_close_threshold,
            open_threshold: w.release_threshold,
            v_eps: 1e-3,
        }
    }
}

impl Default for KeyframeConfig {
    fn default() -> Self {
        KeyframeConfig::from_world(&WorldConfig::default())
    }
}

/// Endpoints, gripper open/close crossings, and isolated stops: steps whose
/// length is below `v_eps` while both neighbouring steps are strictly longer.
pub fn extract_keyframes(tau: &Trajectory, cfg: &KeyframeConfig) -> Result<Keyframes, TooShort> {
    let s = tau.steps();
    let m = s.len();
    if m < 2 {
        return Err(TooShort(m));
    }
    // speed[i] is the length of the step arriving at i
    let speed: Vec<f64> = std::iter::once(0.0)
        .chain(s.windows(2).map(|w| w[0].position.distance(w[1].position)))
        .collect();
    let mut out = vec![0];
    for i in 1..m - 1 {
        let (a, b) = (s[i - 1].aperture, s[i].aperture);
        let closes = a >= cfg.close_threshold && b < cfg.close_threshold;
        let opens = a <= cfg.open_threshold && b > cfg.open_threshold;
        let stop =
            i >= 2 && speed[i] < cfg.v_eps && speed[i - 1] > speed[i] && speed[i + 1] > speed[i];
        if closes || opens || stop {
            out.push(i);
        }
    }
    out.push(m - 1);
    Ok(Keyframes { indices: out })
}
