use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::liegroup::RigidTransform;
use crate::pose::{render_frame, SceneSpec, SyntheticFrame, VisionError};

use super::Scenario;

/// Random stream for one tick: the scenario seed picks the key, the tick
/// picks the stream, so every tick is reproducible in isolation.
pub fn tick_rng(seed: u64, tick: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tick as u64);
    rng
}

/// Render the camera observation of the object at `object` (base frame)
/// for `tick`.
pub fn synth_frame(
    scenario: &Scenario,
    object: &RigidTransform,
    tick: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SyntheticFrame, VisionError> {
    let camera = scenario
        .camera
        .extrinsics
        .transform()
        .map_err(|e| VisionError::InvalidCamera(e.to_string()))?;
    let spec = SceneSpec {
        intrinsics: scenario.camera.intrinsics,
        camera,
        object: *object,
        target: scenario.object.target(),
        noise: scenario.noise,
        grid: scenario.object.grid,
        timestamp_s: tick as f64 * scenario.period(),
    };
    render_frame(&spec, rng)
}
